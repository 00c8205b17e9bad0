//! Per-iteration diagnostics and their CSV form.
//!
//! Columns: `k`, `x_1..x_N`, `v_1..v_N`, `consensus_error`, `objective_gap`,
//! `delta`, `residual`, `step_used`, `eps_used`. When the dimension exceeds
//! one every state column is split into `x_i_c0..x_i_c{d-1}`. Numbers are
//! written with 17 significant digits; optional diagnostics that are not
//! available are empty cells.

use std::fs::File;
use std::io::{self, Read, Write};
use std::path::Path;

use thiserror::Error;

use crate::blocks::Blocks;

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("initial state coincides with the optimum; residual is undefined")]
    DegenerateResidual,
    #[error("residual inputs have mismatched shapes")]
    ShapeMismatch,
    #[error("tail fraction must lie in (0, 1], got {0}")]
    BadFraction(f64),
    #[error("trace tail is empty")]
    EmptyTail,
    #[error("record {k} has no delta value")]
    MissingDelta { k: u64 },
    #[error("missing or unexpected column layout: {0}")]
    Columns(String),
    #[error("row {row}, column {column}: cannot parse {value:?}")]
    Cell {
        row: usize,
        column: String,
        value: String,
    },
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub k: u64,
    pub x: Blocks,
    pub v: Blocks,
    /// `‖(L ⊗ I) x‖`
    pub consensus_error: f64,
    /// `f̃(x) − f*`, when a reference optimum is known.
    pub objective_gap: Option<f64>,
    /// `Δ(x)` against a known saddle point.
    pub delta: Option<f64>,
    /// Normalized distance to the consensus optimum.
    pub residual: Option<f64>,
    /// Step applied at this iteration; for the normalized variant the
    /// smallest per-agent step.
    pub step_used: f64,
    pub eps_used: f64,
}

/// Records of one run plus any warnings raised while setting it up.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trace {
    pub records: Vec<TraceRecord>,
    pub warnings: Vec<String>,
}

impl Trace {
    pub fn last(&self) -> Option<&TraceRecord> {
        self.records.last()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

/// `‖x − 1 ⊗ x*‖ / ‖x(1) − 1 ⊗ x*‖` over the stacked vector. `x_star` is
/// the stacked consensus optimum.
pub fn residual(x: &Blocks, x1: &Blocks, x_star: &Blocks) -> Result<f64, TraceError> {
    if !x.same_shape(x1) || !x.same_shape(x_star) {
        return Err(TraceError::ShapeMismatch);
    }
    let denom = x1.distance(x_star);
    if denom == 0.0 {
        return Err(TraceError::DegenerateResidual);
    }
    Ok(x.distance(x_star) / denom)
}

/// Minimum of `delta` over the last `tail_fraction` of the records; a
/// finite-run stand-in for `liminf Δ`.
pub fn tail_min_delta(records: &[TraceRecord], tail_fraction: f64) -> Result<f64, TraceError> {
    if !(tail_fraction > 0.0 && tail_fraction <= 1.0) {
        return Err(TraceError::BadFraction(tail_fraction));
    }
    let count = (records.len() as f64 * tail_fraction).ceil() as usize;
    if count == 0 {
        return Err(TraceError::EmptyTail);
    }
    records[records.len() - count..]
        .iter()
        .map(|r| r.delta.ok_or(TraceError::MissingDelta { k: r.k }))
        .try_fold(f64::INFINITY, |m, d| Ok(m.min(d?)))
}

/// `max_{k ≤ horizon} max_i ‖x_i(k)‖_∞`, the early-phase overshoot.
pub fn max_primal_magnitude(records: &[TraceRecord], horizon: u64) -> f64 {
    records
        .iter()
        .take_while(|r| r.k <= horizon)
        .fold(0.0, |m, r| m.max(r.x.max_abs()))
}

/// Formats with 17 significant digits, which round-trips every `f64`.
pub fn format_f64(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else {
        v.to_string()
    }
}

fn state_columns(prefix: &str, n: usize, dim: usize) -> Vec<String> {
    let mut cols = Vec::with_capacity(n * dim);
    for i in 1..=n {
        if dim == 1 {
            cols.push(format!("{prefix}_{i}"));
        } else {
            for c in 0..dim {
                cols.push(format!("{prefix}_{i}_c{c}"));
            }
        }
    }
    cols
}

const TAIL_COLUMNS: [&str; 6] = [
    "consensus_error",
    "objective_gap",
    "delta",
    "residual",
    "step_used",
    "eps_used",
];

/// Header for `n` agents of dimension `dim`.
pub fn csv_header(n: usize, dim: usize) -> Vec<String> {
    let mut header = vec!["k".to_owned()];
    header.extend(state_columns("x", n, dim));
    header.extend(state_columns("v", n, dim));
    header.extend(TAIL_COLUMNS.iter().map(|c| c.to_string()));
    header
}

/// Writes the records as CSV. An empty trace is written with the header of
/// `fallback_shape` (agents, dimension).
pub fn write_csv_to<W: Write>(
    records: &[TraceRecord],
    fallback_shape: (usize, usize),
    out: W,
) -> Result<(), TraceError> {
    let (n, dim) = records
        .first()
        .map_or(fallback_shape, |r| (r.x.n(), r.x.dim()));
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out);
    w.write_record(csv_header(n, dim))?;
    let opt = |v: Option<f64>| v.map(format_f64).unwrap_or_default();
    for r in records {
        let mut row = Vec::with_capacity(1 + 2 * n * dim + TAIL_COLUMNS.len());
        row.push(r.k.to_string());
        row.extend(r.x.as_slice().iter().map(|&v| format_f64(v)));
        row.extend(r.v.as_slice().iter().map(|&v| format_f64(v)));
        row.push(format_f64(r.consensus_error));
        row.push(opt(r.objective_gap));
        row.push(opt(r.delta));
        row.push(opt(r.residual));
        row.push(format_f64(r.step_used));
        row.push(format_f64(r.eps_used));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_csv(
    records: &[TraceRecord],
    fallback_shape: (usize, usize),
    path: impl AsRef<Path>,
) -> Result<(), TraceError> {
    let file = io::BufWriter::new(File::create(path)?);
    write_csv_to(records, fallback_shape, file)
}

/// Infers `(n, dim)` from the `x_*` columns of a header.
fn infer_shape(header: &csv::StringRecord) -> Result<(usize, usize), TraceError> {
    let x_cols: Vec<&str> = header.iter().filter(|c| c.starts_with("x_")).collect();
    if x_cols.is_empty() {
        return Err(TraceError::Columns("no x_ columns".into()));
    }
    let dim = if x_cols[0].contains("_c") {
        x_cols.iter().filter(|c| c.starts_with("x_1_c")).count()
    } else {
        1
    };
    if dim == 0 || !x_cols.len().is_multiple_of(dim) {
        return Err(TraceError::Columns("inconsistent x_ columns".into()));
    }
    Ok((x_cols.len() / dim, dim))
}

pub fn read_csv_from<R: Read>(input: R) -> Result<Vec<TraceRecord>, TraceError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(input);
    let header = reader.headers()?.clone();
    let (n, dim) = infer_shape(&header)?;
    let expected = csv_header(n, dim);
    if header.iter().ne(expected.iter().map(String::as_str)) {
        return Err(TraceError::Columns(format!(
            "expected {}",
            expected.join(",")
        )));
    }
    let width = n * dim;
    let mut records = Vec::new();
    for (row, line) in reader.records().enumerate() {
        let line = line?;
        let cell = |idx: usize| -> Result<Option<f64>, TraceError> {
            let raw = line.get(idx).unwrap_or("");
            if raw.is_empty() {
                return Ok(None);
            }
            raw.parse::<f64>().map(Some).map_err(|_| TraceError::Cell {
                row: row + 1,
                column: expected[idx].clone(),
                value: raw.to_owned(),
            })
        };
        let required = |idx: usize| -> Result<f64, TraceError> {
            cell(idx)?.ok_or_else(|| TraceError::Cell {
                row: row + 1,
                column: expected[idx].clone(),
                value: String::new(),
            })
        };
        let k = line
            .get(0)
            .unwrap_or("")
            .parse::<u64>()
            .map_err(|_| TraceError::Cell {
                row: row + 1,
                column: "k".into(),
                value: line.get(0).unwrap_or("").to_owned(),
            })?;
        let x = (1..=width).map(required).collect::<Result<Vec<_>, _>>()?;
        let v = (1 + width..=2 * width)
            .map(required)
            .collect::<Result<Vec<_>, _>>()?;
        let base = 1 + 2 * width;
        records.push(TraceRecord {
            k,
            x: Blocks::from_vec(n, dim, x).expect("width checked"),
            v: Blocks::from_vec(n, dim, v).expect("width checked"),
            consensus_error: required(base)?,
            objective_gap: cell(base + 1)?,
            delta: cell(base + 2)?,
            residual: cell(base + 3)?,
            step_used: required(base + 4)?,
            eps_used: required(base + 5)?,
        });
    }
    Ok(records)
}

pub fn read_csv(path: impl AsRef<Path>) -> Result<Vec<TraceRecord>, TraceError> {
    read_csv_from(io::BufReader::new(File::open(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn record(k: u64, x: &[f64], delta: Option<f64>) -> TraceRecord {
        TraceRecord {
            k,
            x: Blocks::from_scalars(x),
            v: Blocks::zeros(x.len(), 1),
            consensus_error: 0.0,
            objective_gap: None,
            delta,
            residual: None,
            step_used: 0.5,
            eps_used: 0.5,
        }
    }

    #[test]
    fn residual_examples() {
        let x1 = Blocks::from_scalars(&[1.0, 0.0, 5.0, -1.0]);
        let star = Blocks::from_scalars(&[4.0; 4]);
        assert_eq!(residual(&x1, &x1, &star).unwrap(), 1.0);
        assert_eq!(residual(&star, &x1, &star).unwrap(), 0.0);
        assert_eq!(x1.distance(&star), 51f64.sqrt());
        assert!(matches!(
            residual(&x1, &star, &star),
            Err(TraceError::DegenerateResidual)
        ));
    }

    #[test]
    fn tail_min_examples() {
        let flat: Vec<_> = (1..=10).map(|k| record(k, &[4.0], Some(0.0))).collect();
        assert_eq!(tail_min_delta(&flat, 0.2).unwrap(), 0.0);
        let falling: Vec<_> = (1..=10)
            .map(|k| record(k, &[4.0], Some(1.0 / k as f64)))
            .collect();
        assert_eq!(tail_min_delta(&falling, 0.3).unwrap(), 0.1);
        assert!(matches!(
            tail_min_delta(&falling, 0.0),
            Err(TraceError::BadFraction(_))
        ));
        assert!(matches!(
            tail_min_delta(&[], 0.5),
            Err(TraceError::EmptyTail)
        ));
        let missing = vec![record(1, &[4.0], None)];
        assert!(matches!(
            tail_min_delta(&missing, 1.0),
            Err(TraceError::MissingDelta { k: 1 })
        ));
    }

    #[test]
    fn empty_trace_is_header_only() {
        let mut buf = Vec::new();
        write_csv_to(&[], (2, 1), &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(
            text,
            "k,x_1,x_2,v_1,v_2,consensus_error,objective_gap,delta,residual,step_used,eps_used\n"
        );
        assert!(read_csv_from(text.as_bytes()).unwrap().is_empty());
    }

    #[test]
    fn multi_dim_header() {
        let h = csv_header(2, 2);
        assert_eq!(&h[1..5], &["x_1_c0", "x_1_c1", "x_2_c0", "x_2_c1"]);
    }

    #[test]
    fn rejects_bad_files() {
        let bad_cell = "k,x_1,v_1,consensus_error,objective_gap,delta,residual,step_used,eps_used\n1,abc,0,0,,,,1,1\n";
        assert!(matches!(
            read_csv_from(bad_cell.as_bytes()),
            Err(TraceError::Cell { .. })
        ));
        let missing = "k,x_1,v_1,consensus_error,delta,residual,step_used,eps_used\n";
        assert!(matches!(
            read_csv_from(missing.as_bytes()),
            Err(TraceError::Columns(_))
        ));
    }

    #[test]
    fn overshoot_respects_horizon() {
        let recs = vec![record(1, &[1.0, -3.0], None), record(2, &[9.0, 0.0], None)];
        assert_eq!(max_primal_magnitude(&recs, 1), 3.0);
        assert_eq!(max_primal_magnitude(&recs, 2), 9.0);
    }

    proptest! {
        #[test]
        fn csv_round_trip_is_exact(
            xs in proptest::collection::vec(proptest::num::f64::NORMAL | proptest::num::f64::SUBNORMAL | proptest::num::f64::ZERO, 6),
            gap in proptest::option::of(-1e6f64..1e6),
            delta in proptest::option::of(0.0f64..1e6),
            dim in 1usize..=3,
        ) {
            let n = 6 / dim;
            let width = n * dim;
            let rec = TraceRecord {
                k: 7,
                x: Blocks::from_vec(n, dim, xs[..width].to_vec()).unwrap(),
                v: Blocks::from_vec(n, dim, xs[..width].iter().rev().copied().collect()).unwrap(),
                consensus_error: xs[0].abs(),
                objective_gap: gap,
                delta,
                residual: Some(xs[1].abs()),
                step_used: 1.0 / 3.0,
                eps_used: 0.1,
            };
            let mut buf = Vec::new();
            write_csv_to(std::slice::from_ref(&rec), (0, 0), &mut buf).unwrap();
            let back = read_csv_from(buf.as_slice()).unwrap();
            prop_assert_eq!(back.len(), 1);
            let b = &back[0];
            prop_assert!(b.x.as_slice().iter().zip(rec.x.as_slice()).all(|(p, q)| p.to_bits() == q.to_bits()));
            prop_assert_eq!(b, &rec);
        }

        #[test]
        fn residual_is_scale_invariant(a in proptest::collection::vec(-10.0f64..10.0, 3), b in proptest::collection::vec(-10.0f64..10.0, 3), star in -5.0f64..5.0, t in 0.1f64..10.0) {
            let x = Blocks::from_scalars(&a);
            let x1 = Blocks::from_scalars(&b);
            let s = Blocks::from_scalars(&[star; 3]);
            prop_assume!(x1.distance(&s) > 1e-6);
            let scale = |blk: &Blocks| Blocks::from_scalars(&blk.as_slice().iter().map(|v| star + t * (v - star)).collect::<Vec<_>>());
            let e = residual(&x, &x1, &s).unwrap();
            let es = residual(&scale(&x), &scale(&x1), &s).unwrap();
            prop_assert!((e - es).abs() <= 1e-9 * e.max(1.0));
        }
    }
}
