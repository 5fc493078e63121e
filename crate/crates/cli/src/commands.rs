use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::time::Instant;

use fi2vts::bench::{bench_scaling, verify_kkr, write_kkr_csv, write_scaling_csv};
use fi2vts::data::{load_csv, window_pairs, write_csv, write_matrix_csv, Split, SplitSpec, SplitWindows};
use fi2vts::experiment::ExperimentConfig;
use fi2vts::network::{load_checkpoint, save_checkpoint, Forecaster, RunConfig};
use fi2vts::train::{evaluate_with, mean_std, persistence, write_history_csv, LinearBaseline, Trainer};
use fi2vts::{Error, Result, Tensor};
use serde_json::json;

use crate::{Cli, Command, SplitArg};

pub const CHECKPOINT: &str = "checkpoint.bin";

pub fn run(cli: &Cli) -> Result<()> {
    let cfg = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if cli.repeats == 0 {
        return Err(Error::Usage("--repeats must be at least 1".into()));
    }
    if cli.parallel_eval == 0 {
        return Err(Error::Usage("--parallel-eval must be at least 1".into()));
    }
    fs::create_dir_all(&cli.out)?;
    match &cli.command {
        Command::Generate => generate(cli, &cfg),
        Command::Train => train(cli, &cfg),
        Command::Evaluate { split, checkpoint } => evaluate(cli, &cfg, *split, checkpoint.as_deref()),
        Command::Forecast { checkpoint, input } => forecast(cli, &cfg, checkpoint.as_deref(), input.as_deref()),
        Command::VerifyKkr => kkr(cli, &cfg),
        Command::BenchScaling { with_grad } => scaling(cli, &cfg, *with_grad),
        Command::Inspect => inspect(cli, &cfg),
    }
}

fn write_json(path: &Path, value: serde_json::Value) -> Result<()> {
    let mut text = serde_json::to_string_pretty(&value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

fn model_config(cli: &Cli, cfg: &ExperimentConfig) -> Result<RunConfig> {
    let mut m = cfg.model()?.clone();
    if let Some(s) = cli.seed {
        m.seed = s;
    }
    m.validate()?;
    Ok(m)
}

fn checkpoint_path(cli: &Cli, given: Option<&Path>) -> PathBuf {
    given.map_or_else(|| cli.out.join(CHECKPOINT), Path::to_path_buf)
}

fn generate(cli: &Cli, cfg: &ExperimentConfig) -> Result<()> {
    let series = cfg.load_series()?;
    let path = cli.out.join("series.csv");
    write_csv(&series, BufWriter::new(File::create(&path)?))?;
    println!("wrote {} ({} variables x {} ticks)", path.display(), series.n_vars(), series.len());
    Ok(())
}

/// Training windows use the configured stride; validation and test always
/// use every window.
fn windows(cfg: &ExperimentConfig, m: &RunConfig) -> Result<(Vec<String>, SplitWindows)> {
    let series = cfg.load_series()?;
    if series.n_vars() != m.n_vars {
        return Err(Error::Config(format!(
            "model expects {} variables, series has {}",
            m.n_vars,
            series.n_vars()
        )));
    }
    let full = window_pairs(&series, m.lookback, m.horizon, 1, SplitSpec::default())?;
    let strided = window_pairs(&series, m.lookback, m.horizon, m.stride, SplitSpec::default())?;
    Ok((series.names, SplitWindows { train: strided.train, ..full }))
}

fn train(cli: &Cli, cfg: &ExperimentConfig) -> Result<()> {
    let base = model_config(cli, cfg)?;
    let (names, data) = windows(cfg, &base)?;
    let model = Forecaster::new(&base)?;
    let mut trainer = Trainer::new(&model);
    trainer.eval_threads = cli.parallel_eval;

    let full_train = window_pairs(&cfg.load_series()?, base.lookback, base.horizon, 1, SplitSpec::default())?.train;
    let linear = LinearBaseline::fit(&full_train)?;
    let (bs, threads) = (base.batch_size, cli.parallel_eval);
    let lin = evaluate_with(&|x: &Tensor| linear.predict(x), &data.test, &names, "test", bs, threads, base.seed)?;
    let per = evaluate_with(&|x: &Tensor| persistence(x, base.horizon), &data.test, &names, "test", bs, threads, base.seed)?;
    write_json(&cli.out.join("baselines.json"), json!({"persistence": per, "linear": lin}))?;

    let mut mses = Vec::new();
    let mut maes = Vec::new();
    let seeds: Vec<u64> = (0..cli.repeats as u64).map(|i| base.seed + i).collect();
    for &seed in &seeds {
        let dir = if cli.repeats == 1 { cli.out.clone() } else { cli.out.join(format!("seed-{seed}")) };
        fs::create_dir_all(&dir)?;
        let started = Instant::now();
        let outcome = trainer.train(&data, seed)?;
        let train_s = started.elapsed().as_secs_f64();
        let report = trainer.evaluate(&outcome.params, &data.test, &names, "test", seed)?;

        save_checkpoint(&outcome.params, &dir.join(CHECKPOINT))?;
        write_history_csv(&outcome.history, BufWriter::new(File::create(dir.join("history.csv"))?))?;
        write_json(&dir.join("metrics.json"), serde_json::to_value(&report)?)?;
        write_json(
            &dir.join("timing.json"),
            json!({"train_s": train_s, "eval_s": report.runtime_s, "best_epoch": outcome.best_epoch}),
        )?;
        println!(
            "seed {seed}: test mse {:.6} mae {:.6} (best epoch {}, persistence mse {:.6}, linear mse {:.6})",
            report.mse, report.mae, outcome.best_epoch, per.mse, lin.mse
        );
        mses.push(report.mse);
        maes.push(report.mae);
    }
    if cli.repeats > 1 {
        let (mm, ms) = mean_std(&mses);
        let (am, as_) = mean_std(&maes);
        write_json(
            &cli.out.join("summary.json"),
            json!({
                "seeds": seeds,
                "mse": {"mean": mm, "std": ms, "values": mses},
                "mae": {"mean": am, "std": as_, "values": maes},
            }),
        )?;
        println!("mse {mm:.6} ± {ms:.6}, mae {am:.6} ± {as_:.6} over {} seeds", cli.repeats);
    }
    Ok(())
}

fn split_of(s: SplitArg) -> Split {
    match s {
        SplitArg::Train => Split::Train,
        SplitArg::Val => Split::Val,
        SplitArg::Test => Split::Test,
    }
}

fn evaluate(cli: &Cli, cfg: &ExperimentConfig, split: SplitArg, ckpt: Option<&Path>) -> Result<()> {
    let m = model_config(cli, cfg)?;
    let model = Forecaster::new(&m)?;
    let params = load_checkpoint(&checkpoint_path(cli, ckpt), &model.init_params(0))?;
    let (names, data) = windows(cfg, &m)?;
    let split = split_of(split);
    let mut trainer = Trainer::new(&model);
    trainer.eval_threads = cli.parallel_eval;
    let report = trainer.evaluate(&params, data.get(split), &names, split.name(), m.seed)?;
    write_json(&cli.out.join(format!("eval_{}.json", split.name())), serde_json::to_value(&report)?)?;
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(())
}

fn forecast(cli: &Cli, cfg: &ExperimentConfig, ckpt: Option<&Path>, input: Option<&Path>) -> Result<()> {
    let m = model_config(cli, cfg)?;
    let model = Forecaster::new(&m)?;
    let params = load_checkpoint(&checkpoint_path(cli, ckpt), &model.init_params(0))?;
    let series = match input {
        Some(p) => load_csv(p)?,
        None => cfg.load_series()?,
    };
    let (d, n, l) = (series.n_vars(), series.len(), m.lookback);
    if d != m.n_vars {
        return Err(Error::Data(format!("model expects {} variables, input has {d}", m.n_vars)));
    }
    if n < l {
        return Err(Error::Data(format!("input has {n} ticks, lookback needs {l}")));
    }
    let x = Tensor::from_fn(&[d, l], |i| series.row(i / l)[n - l + i % l]);
    let y = model.predict(&params, &x)?;
    let path = cli.out.join("forecast.csv");
    write_matrix_csv(&series.names, &y, BufWriter::new(File::create(&path)?))?;
    println!("wrote {} ({} steps x {d} variables)", path.display(), m.horizon);
    Ok(())
}

fn kkr(cli: &Cli, cfg: &ExperimentConfig) -> Result<()> {
    let rows = verify_kkr(&cfg.kkr)?;
    let path = cli.out.join("kkr.csv");
    write_kkr_csv(&rows, BufWriter::new(File::create(&path)?))?;
    for r in &rows {
        println!(
            "{:<28} padding {:>2}: residual_re {:.3e} residual_im {:.3e}",
            r.family, r.report.padding_factor, r.report.residual_re, r.report.residual_im
        );
    }
    println!("wrote {}", path.display());
    Ok(())
}

fn scaling(cli: &Cli, cfg: &ExperimentConfig, with_grad: bool) -> Result<()> {
    let mut sc = cfg.scaling_config()?;
    sc.with_grad |= with_grad;
    let report = bench_scaling(&sc, cli.seed.unwrap_or(0))?;
    let name = if sc.with_grad { "scaling_grad.csv" } else { "scaling.csv" };
    let path = cli.out.join(name);
    write_scaling_csv(&report, BufWriter::new(File::create(&path)?))?;
    for ((l, t), a) in report.lengths.iter().zip(&report.wall_times_s).zip(&report.alloc_bytes) {
        println!("L={l:>6}: {t:.6}s {a} bytes");
    }
    println!(
        "time slope {:.3}, alloc slope {:.3}; wrote {}",
        report.time_slope,
        report.alloc_slope,
        path.display()
    );
    Ok(())
}

fn inspect(cli: &Cli, cfg: &ExperimentConfig) -> Result<()> {
    let m = model_config(cli, cfg)?;
    let count = Forecaster::new(&m)?.init_params(m.seed).count();
    let breakdown: serde_json::Map<String, serde_json::Value> =
        count.breakdown.iter().map(|(k, v)| (k.clone(), json!(v))).collect();
    let summary = json!({
        "total": count.total,
        "bytes": count.bytes,
        "blocks": count.blocks,
        "breakdown": breakdown,
    });
    println!("{}", serde_json::to_string_pretty(&summary)?);
    Ok(())
}
