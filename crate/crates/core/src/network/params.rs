use indexmap::IndexMap;

use crate::attention::FcaParams;
use crate::rng::Rng;
use crate::tensor::Tensor;

use super::RunConfig;

/// Parameters of one residual block.
#[derive(Clone, Debug, PartialEq)]
pub struct BlockParams<T> {
    pub fca: FcaParams<T>,
    /// `[2 * d_hidden, E]` map of the concatenated augmented spectra.
    pub mix: T,
    pub mix_bias: T,
    /// One `[E, E, k, k]` kernel per branch, no bias.
    pub inception: Vec<T>,
    /// `[P * M, L]`, shared across channels, no bias.
    pub time_restore: T,
}

impl<T> BlockParams<T> {
    pub fn map<U>(&self, f: &mut dyn FnMut(&T) -> U) -> BlockParams<U> {
        BlockParams {
            fca: self.fca.map(f),
            mix: f(&self.mix),
            mix_bias: f(&self.mix_bias),
            inception: self.inception.iter().map(|t| f(t)).collect(),
            time_restore: f(&self.time_restore),
        }
    }

    pub fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, &'a T)) {
        self.fca.visit(&format!("{prefix}fca."), f);
        f(format!("{prefix}mix"), &self.mix);
        f(format!("{prefix}mix_bias"), &self.mix_bias);
        for (i, k) in self.inception.iter().enumerate() {
            f(format!("{prefix}inception.{i}"), k);
        }
        f(format!("{prefix}time_restore"), &self.time_restore);
    }
}

/// Full model parameters in declaration (and checkpoint) order.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams<T> {
    /// `[D, E]` per-time-step embedding.
    pub embed: T,
    pub embed_bias: T,
    pub blocks: Vec<BlockParams<T>>,
    /// `[E, D]` channel map of the head.
    pub head_channel: T,
    pub head_channel_bias: T,
    /// `[L, T]` time map of the head, shared across variables.
    pub head_time: T,
    pub head_time_bias: T,
}

impl<T> ModelParams<T> {
    pub fn map<U>(&self, f: &mut dyn FnMut(&T) -> U) -> ModelParams<U> {
        ModelParams {
            embed: f(&self.embed),
            embed_bias: f(&self.embed_bias),
            blocks: self.blocks.iter().map(|b| b.map(f)).collect(),
            head_channel: f(&self.head_channel),
            head_channel_bias: f(&self.head_channel_bias),
            head_time: f(&self.head_time),
            head_time_bias: f(&self.head_time_bias),
        }
    }

    pub fn visit<'a>(&'a self, f: &mut dyn FnMut(String, &'a T)) {
        f("embed".into(), &self.embed);
        f("embed_bias".into(), &self.embed_bias);
        for (i, b) in self.blocks.iter().enumerate() {
            b.visit(&format!("blocks.{i}."), f);
        }
        f("head_channel".into(), &self.head_channel);
        f("head_channel_bias".into(), &self.head_channel_bias);
        f("head_time".into(), &self.head_time);
        f("head_time_bias".into(), &self.head_time_bias);
    }

    /// Leaves in declaration order.
    pub fn leaves(&self) -> Vec<&T> {
        let mut out = Vec::new();
        self.visit(&mut |_, t| out.push(t));
        out
    }

    pub fn names(&self) -> Vec<String> {
        let mut out = Vec::new();
        self.visit(&mut |n, _| out.push(n));
        out
    }

    /// Rebuilds the same layout from leaves in declaration order.
    pub fn with_leaves<U>(&self, leaves: Vec<U>) -> ModelParams<U> {
        assert_eq!(leaves.len(), self.leaves().len(), "leaf count mismatch");
        let mut it = leaves.into_iter();
        self.map(&mut |_| it.next().unwrap())
    }

    pub fn zip_map<U, V>(&self, other: &ModelParams<U>, mut f: impl FnMut(&T, &U) -> V) -> ModelParams<V> {
        let rhs = other.leaves();
        let mut i = 0;
        self.map(&mut |t| {
            let v = f(t, rhs[i]);
            i += 1;
            v
        })
    }
}

fn fan_in_uniform(shape: &[usize], fan_in: usize, rng: &mut Rng) -> Tensor {
    let a = 1.0 / (fan_in as f64).sqrt();
    Tensor::uniform(shape, -a, a, rng)
}

impl BlockParams<Tensor> {
    pub fn init(cfg: &RunConfig, rng: &mut Rng) -> Self {
        let (e, dh) = (cfg.embed_dim, cfg.d_hidden);
        let grid = cfg.n_windows() * cfg.top_m;
        BlockParams {
            fca: FcaParams::init(&cfg.fca_dims(), rng),
            mix: fan_in_uniform(&[2 * dh, e], 2 * dh, rng),
            mix_bias: Tensor::zeros(&[e]),
            inception: cfg
                .inception_kernels
                .iter()
                .map(|&k| fan_in_uniform(&[e, e, k, k], e * k * k, rng))
                .collect(),
            time_restore: fan_in_uniform(&[grid, cfg.lookback], grid, rng),
        }
    }
}

impl ModelParams<Tensor> {
    /// Uniform fan-in initialization with zero biases, drawn in declaration
    /// order from a generator seeded with `seed`. The head's time map starts
    /// at zero, so an untrained model forecasts each variable's lookback mean.
    pub fn init(cfg: &RunConfig, seed: u64) -> Self {
        let mut rng = Rng::new(seed);
        let (d, e, l, t) = (cfg.n_vars, cfg.embed_dim, cfg.lookback, cfg.horizon);
        let embed = fan_in_uniform(&[d, e], d, &mut rng);
        let blocks = (0..cfg.n_blocks).map(|_| BlockParams::init(cfg, &mut rng)).collect();
        let head_channel = fan_in_uniform(&[e, d], e, &mut rng);
        ModelParams {
            embed,
            embed_bias: Tensor::zeros(&[e]),
            blocks,
            head_channel,
            head_channel_bias: Tensor::zeros(&[d]),
            head_time: Tensor::zeros(&[l, t]),
            head_time_bias: Tensor::zeros(&[t]),
        }
    }

    pub fn count(&self) -> ParamCount {
        let mut breakdown: IndexMap<String, usize> = IndexMap::new();
        let mut total = 0;
        self.visit(&mut |name, t| {
            total += t.numel();
            *breakdown.entry(module_of(&name)).or_default() += t.numel();
        });
        let blocks = breakdown
            .iter()
            .filter(|(k, _)| k.starts_with("blocks."))
            .map(|(_, v)| v)
            .sum();
        ParamCount {
            total,
            bytes: total * std::mem::size_of::<f64>(),
            blocks,
            breakdown,
        }
    }
}

/// Module a leaf belongs to, e.g. `blocks.2.fca` or `head`.
fn module_of(name: &str) -> String {
    let parts: Vec<&str> = name.split('.').collect();
    match parts.as_slice() {
        ["blocks", i, "fca", ..] => format!("blocks.{i}.fca"),
        ["blocks", i, "mix" | "mix_bias"] => format!("blocks.{i}.mix"),
        ["blocks", i, "inception", ..] => format!("blocks.{i}.inception"),
        ["blocks", i, "time_restore"] => format!("blocks.{i}.time_restore"),
        [leaf] if leaf.starts_with("embed") => "embedding".into(),
        [leaf] if leaf.starts_with("head") => "head".into(),
        _ => name.to_string(),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParamCount {
    pub total: usize,
    /// At 8 bytes per scalar.
    pub bytes: usize,
    /// Subtotal over all residual blocks.
    pub blocks: usize,
    pub breakdown: IndexMap<String, usize>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::WindowSpec;

    fn small(n_blocks: usize) -> RunConfig {
        let mut cfg = RunConfig::new(2, 32, 4);
        cfg.embed_dim = 3;
        cfg.n_blocks = n_blocks;
        cfg.n_heads = 2;
        cfg.d_k = 2;
        cfg.d_v = 3;
        cfg.d_hidden = 4;
        cfg.top_m = 3;
        cfg.windows = vec![WindowSpec::hann(16), WindowSpec::hann(8)];
        cfg.inception_kernels = vec![1, 3];
        cfg
    }

    #[test]
    fn embedding_count_closed_form() {
        let p = ModelParams::init(&small(0), 1);
        let c = p.count();
        assert_eq!(c.breakdown["embedding"], 2 * 3 + 3);
        assert_eq!(c.blocks, 0);
        assert_eq!(c.bytes, 8 * c.total);
    }

    #[test]
    fn fca_count_matches_closed_form() {
        let cfg = small(1);
        let c = ModelParams::init(&cfg, 1).count();
        assert_eq!(c.breakdown["blocks.0.fca"], cfg.fca_dims().param_count());
    }

    #[test]
    fn doubling_blocks_doubles_block_subtotal() {
        let a = ModelParams::init(&small(2), 1).count();
        let b = ModelParams::init(&small(4), 1).count();
        assert_eq!(b.blocks, 2 * a.blocks);
        assert_eq!(b.total - b.blocks, a.total - a.blocks);
    }

    #[test]
    fn init_is_deterministic() {
        let cfg = small(2);
        assert_eq!(ModelParams::init(&cfg, 9), ModelParams::init(&cfg, 9));
        assert_ne!(ModelParams::init(&cfg, 9), ModelParams::init(&cfg, 10));
    }

    #[test]
    fn names_are_unique_and_ordered() {
        let names = ModelParams::init(&small(2), 1).names();
        assert_eq!(names[0], "embed");
        assert_eq!(names.last().unwrap(), "head_time_bias");
        assert!(names.contains(&"blocks.1.inception.1".to_string()));
        let set: std::collections::HashSet<_> = names.iter().collect();
        assert_eq!(set.len(), names.len());
    }
}
