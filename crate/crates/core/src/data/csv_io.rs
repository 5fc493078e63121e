use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

use super::SeriesSet;

fn csv_error(e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line());
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Parse { line, message: format!("{other:?}") },
    }
}

/// Reads a header row of variable names followed by one row per tick.
pub fn read_csv<R: Read>(input: R) -> Result<SeriesSet> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(input);
    let names: Vec<String> = reader.headers().map_err(csv_error)?.iter().map(str::to_string).collect();
    if names.is_empty() || names.iter().all(|n| n.is_empty()) {
        return Err(Error::Parse { line: 1, message: "empty file: missing header row".into() });
    }
    let d = names.len();
    let mut columns: Vec<Vec<f64>> = vec![Vec::new(); d];
    for record in reader.records() {
        let record = record.map_err(csv_error)?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != d {
            return Err(Error::Parse {
                line,
                message: format!("expected {d} fields, found {}", record.len()),
            });
        }
        for (j, cell) in record.iter().enumerate() {
            let v: f64 = cell.parse().map_err(|_| Error::Parse {
                line,
                message: format!("column {:?}: {cell:?} is not a number", names[j]),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    line,
                    message: format!("column {:?}: non-finite value {cell:?}", names[j]),
                });
            }
            columns[j].push(v);
        }
    }
    let len = columns[0].len();
    if len == 0 {
        return Err(Error::Parse { line: 2, message: "no data rows".into() });
    }
    let values = Tensor::new(&[d, len], columns.concat())?;
    SeriesSet::new(values, names)
}

pub fn load_csv(path: &Path) -> Result<SeriesSet> {
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    read_csv(File::open(path)?)
}

/// Writes `[D, N]` values as N rows of D columns under the given header.
pub fn write_matrix_csv<W: Write>(names: &[String], values: &Tensor, out: W) -> Result<()> {
    let (d, n) = (values.shape()[0], values.shape()[1]);
    let mut w = csv::Writer::from_writer(out);
    w.write_record(names).map_err(csv_error)?;
    for t in 0..n {
        w.write_record((0..d).map(|j| values.data()[j * n + t].to_string()))
            .map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_csv<W: Write>(series: &SeriesSet, out: W) -> Result<()> {
    write_matrix_csv(&series.names, &series.values, out)
}

pub fn save_csv(series: &SeriesSet, path: &Path) -> Result<()> {
    write_csv(series, File::create(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;

    fn parse(text: &str) -> Result<SeriesSet> {
        read_csv(text.as_bytes())
    }

    #[test]
    fn reads_columns_in_order() {
        let s = parse("a,b\n1,10\n2,20\n3,30\n4,40\n5,50\n").unwrap();
        assert_eq!(s.n_vars(), 2);
        assert_eq!(s.len(), 5);
        assert_eq!(s.names, ["a", "b"]);
        assert_eq!(s.row(1), &[10.0, 20.0, 30.0, 40.0, 50.0]);
    }

    #[test]
    fn bad_cell_names_its_line() {
        let err = parse("a,b\n1,2\n1,2\n1,2\n1,2\n1,2\n1,oops\n1,2\n").unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 7),
            other => panic!("{other}"),
        }
    }

    #[test]
    fn ragged_row_names_its_line() {
        match parse("a,b\n1,2\n3\n").unwrap_err() {
            Error::Parse { line, .. } => assert_eq!(line, 3),
            other => panic!("{other}"),
        }
    }

    #[test]
    fn empty_input_is_parse_error() {
        assert!(matches!(parse(""), Err(Error::Parse { .. })));
        assert!(matches!(parse("a,b\n"), Err(Error::Parse { .. })));
    }

    #[test]
    fn non_finite_tokens_are_rejected() {
        for bad in ["NaN", "inf", "-inf", "nan"] {
            let err = parse(&format!("a\n1\n{bad}\n")).unwrap_err();
            assert!(matches!(err, Error::Parse { line: 3, .. }), "{bad}: {err}");
        }
    }

    #[test]
    fn save_then_load_roundtrips() {
        let mut rng = Rng::new(3);
        let values = Tensor::randn(&[3, 40], &mut rng).map(|v| v * 1e3);
        let s = SeriesSet::new(values, vec!["u".into(), "v".into(), "w".into()]).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.csv");
        save_csv(&s, &path).unwrap();
        let back = load_csv(&path).unwrap();
        assert_eq!(back.names, s.names);
        assert!(back.values.max_abs_diff(&s.values) <= 1e-12);
    }

    #[test]
    fn missing_file_is_reported() {
        let p = Path::new("/definitely/not/here.csv");
        assert!(matches!(load_csv(p), Err(Error::MissingFile(_))));
    }
}
