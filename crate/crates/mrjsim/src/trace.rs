//! Cluster-trace ingestion: read one numeric column from a delimited text
//! file, then normalize by an upper quantile so the survivors land in
//! (0, 1] and the largest survivor uses the full capacity.

use std::fs;
use std::path::PathBuf;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::sim::Source;

pub const DEFAULT_MAX_ROWS: usize = 1_000_000;
pub const DEFAULT_QUANTILE: f64 = 0.90;

/// Which column of the trace file holds the requirement values.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ColumnSel {
    Name(String),
    Index(usize),
}

impl std::fmt::Display for ColumnSel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ColumnSel::Name(n) => write!(f, "{n}"),
            ColumnSel::Index(i) => write!(f, "#{i}"),
        }
    }
}

/// Trace ingestion parameters. The drop fraction and the quantile are one
/// knob seen from two sides (drop = 1 - quantile); setters keep them in
/// step and validation rejects a pair that disagrees.
#[derive(Debug, Clone)]
pub struct TraceSpec {
    pub path: PathBuf,
    pub column: ColumnSel,
    pub max_rows: usize,
    pub quantile: f64,
    pub drop_frac: f64,
}

impl TraceSpec {
    pub fn new(path: impl Into<PathBuf>, column: ColumnSel) -> Self {
        TraceSpec {
            path: path.into(),
            column,
            max_rows: DEFAULT_MAX_ROWS,
            quantile: DEFAULT_QUANTILE,
            drop_frac: 1.0 - DEFAULT_QUANTILE,
        }
    }

    pub fn with_quantile(mut self, q: f64) -> Self {
        self.quantile = q;
        self.drop_frac = 1.0 - q;
        self
    }

    pub fn with_drop_frac(mut self, d: f64) -> Self {
        self.drop_frac = d;
        self.quantile = 1.0 - d;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.quantile > 0.0 && self.quantile <= 1.0) {
            return Err(Error::config("quantile", format!("must be in (0, 1], got {}", self.quantile)));
        }
        if !(0.0..1.0).contains(&self.drop_frac) {
            return Err(Error::config("drop-frac", format!("must be in [0, 1), got {}", self.drop_frac)));
        }
        if (1.0 - self.quantile - self.drop_frac).abs() > 1e-9 {
            return Err(Error::config(
                "drop-frac",
                format!("disagrees with quantile: {} vs 1 - {}", self.drop_frac, self.quantile),
            ));
        }
        if self.max_rows == 0 {
            return Err(Error::config("max-rows", "must be at least 1"));
        }
        Ok(())
    }
}

/// Raw column values in file order plus how many rows were rejected for
/// being zero or negative.
#[derive(Debug, Clone)]
pub struct LoadedTrace {
    pub values: Vec<f64>,
    pub rejected: usize,
}

/// Read the selected column. The first nonempty line is a header; fields
/// are comma-separated when the header contains a comma, whitespace-
/// separated otherwise. Data rows are numbered from 1 in errors.
pub fn load_trace(spec: &TraceSpec) -> Result<LoadedTrace> {
    spec.validate()?;
    let content = fs::read_to_string(&spec.path).map_err(|source| Error::TraceIo {
        path: spec.path.display().to_string(),
        source,
    })?;
    let mut lines = content.lines().filter(|l| !l.trim().is_empty());
    let header = lines.next().ok_or(Error::TraceEmpty)?;
    let comma = header.contains(',');
    let split = |line: &str| -> Vec<String> {
        if comma {
            line.split(',').map(|s| s.trim().to_string()).collect()
        } else {
            line.split_whitespace().map(str::to_string).collect()
        }
    };
    let cols = split(header);
    let col = match &spec.column {
        ColumnSel::Name(name) => cols
            .iter()
            .position(|c| c.eq_ignore_ascii_case(name))
            .ok_or_else(|| Error::TraceColumnMissing {
                column: name.clone(),
                header: header.to_string(),
            })?,
        ColumnSel::Index(i) => {
            if *i >= cols.len() {
                return Err(Error::TraceColumnMissing {
                    column: format!("#{i}"),
                    header: header.to_string(),
                });
            }
            *i
        }
    };

    let mut values = Vec::new();
    let mut rejected = 0usize;
    for (row0, line) in lines.enumerate() {
        if values.len() == spec.max_rows {
            break;
        }
        let row = row0 + 1;
        let fields = split(line);
        let cell = fields.get(col).ok_or_else(|| Error::TraceParse {
            row,
            field: "<missing field>".to_string(),
        })?;
        let v: f64 = cell
            .parse()
            .ok()
            .filter(|v: &f64| v.is_finite())
            .ok_or_else(|| Error::TraceParse { row, field: cell.clone() })?;
        if v <= 0.0 {
            rejected += 1;
        } else {
            values.push(v);
        }
    }
    if values.is_empty() {
        return Err(Error::TraceEmpty);
    }
    Ok(LoadedTrace { values, rejected })
}

/// Scale by the nearest-rank quantile (the sorted value at rank ceil(q n))
/// and drop everything strictly greater, preserving file order. Ties with
/// the quantile survive and normalize to exactly 1. Returns the survivors
/// and the scale.
pub fn normalize_trace(values: &[f64], quantile: f64) -> Result<(Vec<f64>, f64)> {
    if values.is_empty() {
        return Err(Error::TraceEmpty);
    }
    let n = values.len();
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let rank = ((quantile * n as f64).ceil() as usize).clamp(1, n);
    let scale = sorted[rank - 1];
    let out: Vec<f64> = values.iter().filter(|&&v| v <= scale).map(|&v| v / scale).collect();
    if out.is_empty() {
        return Err(Error::AllValuesRemoved);
    }
    Ok((out, scale))
}

/// Wire a normalized requirement sequence into the engine: jobs take the
/// values in order, arrival epochs are Poisson with the given rate.
pub fn trace_source(values: Vec<f64>, lambda: f64, label: String) -> Source {
    Source::Trace { lambda, values: Arc::new(values), label }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dist::Dist;
    use crate::grid::Grid;
    use approx::assert_relative_eq;
    use std::io::Write;

    fn tmp_with(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    fn spec_for(f: &tempfile::NamedTempFile, column: ColumnSel) -> TraceSpec {
        TraceSpec::new(f.path(), column)
    }

    #[test]
    fn normalize_golden_1_to_100() {
        let values: Vec<f64> = (1..=100).map(|v| v as f64).collect();
        let (out, scale) = normalize_trace(&values, 0.9).unwrap();
        assert_eq!(scale, 90.0);
        assert_eq!(out.len(), 90);
        assert_relative_eq!(out[0], 1.0 / 90.0);
        assert_eq!(out[89], 1.0);
        assert!(out.iter().all(|&v| v > 0.0 && v <= 1.0));
    }

    #[test]
    fn normalize_thousand_drops_exactly_hundred() {
        let values: Vec<f64> = (1..=1000).map(|v| v as f64).collect();
        let (out, scale) = normalize_trace(&values, 0.9).unwrap();
        assert_eq!(scale, 900.0);
        assert_eq!(values.len() - out.len(), 100);
        assert_eq!(out.iter().cloned().fold(0.0, f64::max), 1.0);
    }

    #[test]
    fn normalize_degenerate_shapes() {
        let (out, scale) = normalize_trace(&[3.3; 7], 0.9).unwrap();
        assert_eq!(scale, 3.3);
        assert!(out.iter().all(|&v| v == 1.0));
        assert_eq!(out.len(), 7);

        let (out, scale) = normalize_trace(&[5.0], 0.9).unwrap();
        assert_eq!(scale, 5.0);
        assert_eq!(out, vec![1.0]);

        assert!(matches!(normalize_trace(&[], 0.9), Err(Error::TraceEmpty)));
    }

    #[test]
    fn normalize_keeps_quantile_ties() {
        let values = [1.0, 2.0, 3.0, 3.0, 10.0];
        let (out, scale) = normalize_trace(&values, 0.8).unwrap();
        assert_eq!(scale, 3.0);
        assert_eq!(out.len(), 4);
        assert_eq!(out[2], 1.0);
        assert_eq!(out[3], 1.0);
    }

    #[test]
    fn normalize_preserves_file_order() {
        let values = [5.0, 1.0, 9.0, 2.0, 100.0, 3.0];
        let (out, scale) = normalize_trace(&values, 0.8).unwrap();
        assert_eq!(scale, 9.0);
        let expect: Vec<f64> = [5.0, 1.0, 9.0, 2.0, 3.0].iter().map(|v| v / 9.0).collect();
        assert_eq!(out, expect);
    }

    #[test]
    fn drop_rate_stays_near_nominal() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(31);
        for n in [97usize, 503, 1201] {
            let values: Vec<f64> = (0..n).map(|_| rng.gen_range(0.001..50.0)).collect();
            let (out, _) = normalize_trace(&values, 0.9).unwrap();
            let dropped = (n - out.len()) as f64 / n as f64;
            assert!(
                (dropped - 0.1).abs() <= 1.0 / n as f64 + 1e-12,
                "drop rate {dropped} off nominal at n={n}"
            );
        }
    }

    #[test]
    fn load_comma_file_by_name_and_index() {
        let f = tmp_with("id,cpu,ram\n1,0.5,0.25\n2,0.2,0.5\n3,0.9,0.75\n");
        let got = load_trace(&spec_for(&f, ColumnSel::Name("cpu".into()))).unwrap();
        assert_eq!(got.values, vec![0.5, 0.2, 0.9]);
        assert_eq!(got.rejected, 0);

        let got = load_trace(&spec_for(&f, ColumnSel::Index(2))).unwrap();
        assert_eq!(got.values, vec![0.25, 0.5, 0.75]);

        // header matching ignores case
        let got = load_trace(&spec_for(&f, ColumnSel::Name("CPU".into()))).unwrap();
        assert_eq!(got.values.len(), 3);
    }

    #[test]
    fn load_whitespace_file() {
        let f = tmp_with("cpu  ram\n0.5  0.25\n0.2  0.5\n");
        let got = load_trace(&spec_for(&f, ColumnSel::Name("ram".into()))).unwrap();
        assert_eq!(got.values, vec![0.25, 0.5]);
    }

    #[test]
    fn load_respects_max_rows() {
        let f = tmp_with("cpu\n0.5\n0.2\n0.9\n");
        let mut spec = spec_for(&f, ColumnSel::Index(0));
        spec.max_rows = 2;
        let got = load_trace(&spec).unwrap();
        assert_eq!(got.values, vec![0.5, 0.2]);
    }

    #[test]
    fn load_rejects_nonpositive_with_count() {
        let f = tmp_with("cpu\n0.5\n-1.0\n0\n0.2\n");
        let got = load_trace(&spec_for(&f, ColumnSel::Index(0))).unwrap();
        assert_eq!(got.values, vec![0.5, 0.2]);
        assert_eq!(got.rejected, 2);
    }

    #[test]
    fn load_errors_name_the_row() {
        let mut body = String::from("cpu\n");
        for i in 1..=6 {
            body.push_str(&format!("0.{i}\n"));
        }
        body.push_str("oops\n");
        let f = tmp_with(&body);
        let err = load_trace(&spec_for(&f, ColumnSel::Index(0))).unwrap_err();
        match err {
            Error::TraceParse { row, field } => {
                assert_eq!(row, 7);
                assert_eq!(field, "oops");
            }
            other => panic!("wrong error: {other}"),
        }

        let f = tmp_with("cpu\nnan\n");
        assert!(matches!(
            load_trace(&spec_for(&f, ColumnSel::Index(0))),
            Err(Error::TraceParse { row: 1, .. })
        ));
    }

    #[test]
    fn load_missing_column_and_file() {
        let f = tmp_with("id,cpu\n1,0.5\n");
        assert!(matches!(
            load_trace(&spec_for(&f, ColumnSel::Name("ram".into()))),
            Err(Error::TraceColumnMissing { .. })
        ));
        assert!(matches!(
            load_trace(&spec_for(&f, ColumnSel::Index(5))),
            Err(Error::TraceColumnMissing { .. })
        ));

        let spec = TraceSpec::new("/nonexistent/trace.csv", ColumnSel::Index(0));
        assert!(matches!(load_trace(&spec), Err(Error::TraceIo { .. })));

        let f = tmp_with("cpu\n");
        assert!(matches!(
            load_trace(&spec_for(&f, ColumnSel::Index(0))),
            Err(Error::TraceEmpty)
        ));
    }

    #[test]
    fn spec_validation_catches_bad_knobs() {
        let base = TraceSpec::new("x", ColumnSel::Index(0));
        assert!(base.clone().with_quantile(0.0).validate().is_err());
        assert!(base.clone().with_quantile(1.0).validate().is_ok());
        assert!(base.clone().with_drop_frac(1.0).validate().is_err());
        assert!(base.clone().with_drop_frac(0.0).validate().is_ok());

        let mut skewed = base.clone().with_quantile(0.9);
        skewed.drop_frac = 0.2;
        assert!(skewed.validate().is_err());
    }

    #[test]
    fn normalized_values_feed_empirical_buckets() {
        let values: Vec<f64> = (1..=40).map(|v| v as f64).collect();
        let (out, _) = normalize_trace(&values, 0.9).unwrap();
        let dist = Dist::empirical(out.clone()).unwrap();
        let grid = Grid::one_dim(7);
        let n = out.len() as f64;
        for ty in 0..7 {
            let expect = out
                .iter()
                .filter(|&&v| grid.job_type(&[v]).unwrap() == ty)
                .count() as f64
                / n;
            assert_relative_eq!(dist.bucket_probability(&grid, ty).unwrap(), expect);
        }
    }
}
