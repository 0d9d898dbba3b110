//! LIBSVM text format: `label idx:val idx:val …` with 1-based ascending
//! indices. Blank lines and lines starting with `#` are skipped.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::objective::Dataset;

pub fn parse_libsvm(path: &Path) -> Result<Dataset> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_libsvm_str(&text, &path.display().to_string())
}

pub fn parse_libsvm_str(text: &str, origin: &str) -> Result<Dataset> {
    let err = |line: usize, message: String| Error::Parse {
        path: origin.to_string(),
        line,
        message,
    };
    let mut rows: Vec<(f64, Vec<(usize, f64)>)> = Vec::new();
    let mut dim = 0;
    for (ln, raw) in text.lines().enumerate() {
        let line_no = ln + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut parts = line.split_whitespace();
        let label_tok = parts.next().expect("non-empty line");
        let label: f64 = label_tok
            .parse()
            .map_err(|_| err(line_no, format!("label `{label_tok}` is not a number")))?;
        let mut feats = Vec::new();
        let mut last = 0;
        for tok in parts {
            let (idx, val) = tok
                .split_once(':')
                .ok_or_else(|| err(line_no, format!("expected idx:val, got `{tok}`")))?;
            let idx: usize = idx
                .parse()
                .map_err(|_| err(line_no, format!("index `{idx}` is not a positive integer")))?;
            if idx == 0 {
                return Err(err(line_no, "indices are 1-based".into()));
            }
            if idx <= last {
                return Err(err(line_no, format!("index {idx} does not increase after {last}")));
            }
            let val: f64 = val
                .parse()
                .map_err(|_| err(line_no, format!("value `{val}` is not a number")))?;
            last = idx;
            feats.push((idx, val));
        }
        dim = dim.max(last);
        rows.push((label, feats));
    }
    if rows.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut features = vec![0.0; rows.len() * dim];
    let mut labels = Vec::with_capacity(rows.len());
    for (r, (label, feats)) in rows.into_iter().enumerate() {
        labels.push(label);
        for (idx, val) in feats {
            features[r * dim + idx - 1] = val;
        }
    }
    Dataset::new(dim, features, labels)
}

/// Nonzero entries only; values in shortest round-trip form.
pub fn to_libsvm_string(data: &Dataset) -> String {
    let mut out = String::new();
    for i in 0..data.len() {
        write!(out, "{}", data.label(i)).unwrap();
        for (j, v) in data.row(i).iter().enumerate() {
            if *v != 0.0 {
                write!(out, " {}:{}", j + 1, v).unwrap();
            }
        }
        out.push('\n');
    }
    out
}

pub fn write_libsvm(data: &Dataset, path: &Path) -> Result<()> {
    std::fs::write(path, to_libsvm_string(data)).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_sparse_line() {
        let d = parse_libsvm_str("+1 1:0.5 3:2.0\n", "mem").unwrap();
        assert_eq!(d.dim(), 3);
        assert_eq!(d.label(0), 1.0);
        assert_eq!(d.row(0), &[0.5, 0.0, 2.0]);
    }

    #[test]
    fn empty_input_is_an_error() {
        assert!(matches!(parse_libsvm_str("", "mem"), Err(Error::EmptyDataset)));
        assert!(matches!(parse_libsvm_str("\n# only comment\n", "mem"), Err(Error::EmptyDataset)));
    }

    #[test]
    fn malformed_lines_report_line_numbers() {
        let cases = ["1 1:0.5\n-1 2:x\n", "1 1:0.5\n\n1 3:1 2:1\n", "1 0:1\n", "abc 1:1\n", "1 2-3\n"];
        let lines = [2, 3, 1, 1, 1];
        for (text, line) in cases.iter().zip(lines) {
            match parse_libsvm_str(text, "mem") {
                Err(Error::Parse { line: l, .. }) => assert_eq!(l, line, "{text}"),
                other => panic!("{text}: {other:?}"),
            }
        }
    }

    #[test]
    fn label_only_rows_have_zero_features() {
        let d = parse_libsvm_str("1 2:1\n-1\n", "mem").unwrap();
        assert_eq!(d.row(1), &[0.0, 0.0]);
    }
}
