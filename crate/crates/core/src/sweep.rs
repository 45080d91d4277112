//! Level sweep of the first example: `q_x(L_i)` for `i = 1..=levels` over a
//! list of `r` values, with the number of distinct values per `r`.
//!
//! The CSV layout is one row per `(r, level)` pair with columns
//! `r,level,q_value,converged,residual,distinct,distinct_fine,distinct_coarse,predicted`,
//! so `gnuplot` can plot it with `set datafile separator ','` and
//! `plot 'sweep.csv' using 1:3:2 with points lc variable`.

use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::models::{build_example1, predicted_distinct_levels, Example1Params};
use crate::solver::{solve_q_on, SolveConfig};
use crate::types::{TypeId, Window};

/// Values closer than this are counted as one.
pub const DISTINCT_THRESHOLD: f64 = 1e-3;
/// Finer and coarser thresholds reported next to the main count.
pub const SENSITIVITY_THRESHOLDS: [f64; 2] = [1e-4, 1e-2];

/// What to sweep.
#[derive(Clone, Debug, Serialize)]
pub struct SweepSpec {
    pub p: f64,
    pub q: f64,
    pub r_values: Vec<f64>,
    pub levels: u64,
    pub report_type: TypeId,
}

impl SweepSpec {
    pub fn new(p: f64, q: f64, r_values: Vec<f64>, levels: u64) -> Self {
        SweepSpec { p, q, r_values, levels, report_type: TypeId::pair(0, 0) }
    }

    pub fn validate(&self) -> Result<()> {
        if self.r_values.is_empty() {
            return Err(Error::Validation("the list of r values is empty".into()));
        }
        if let Some(r) = self.r_values.iter().find(|r| !(r.is_finite() && **r > 0.0)) {
            return Err(Error::Validation(format!("r = {r} must be positive")));
        }
        if self.levels == 0 {
            return Err(Error::Validation("at least one level is required".into()));
        }
        if self.report_type.as_pair().is_none() {
            return Err(Error::Validation(format!("report type {} is not a grid type", self.report_type)));
        }
        Example1Params::new(self.p, self.q, 1.0).validate()
    }
}

/// One `(r, level)` cell. Failed solves keep the partial value when one is
/// available and `NaN` otherwise.
#[derive(Clone, Debug, Serialize)]
pub struct SweepRow {
    pub r: f64,
    pub level: u64,
    pub q_value: f64,
    pub converged: bool,
    pub residual: f64,
    pub error: Option<String>,
}

/// All levels for one `r`.
#[derive(Clone, Debug, Serialize)]
pub struct SweepPoint {
    pub r: f64,
    pub rows: Vec<SweepRow>,
    pub distinct: usize,
    pub distinct_fine: usize,
    pub distinct_coarse: usize,
    pub predicted: usize,
}

impl SweepPoint {
    pub fn all_converged(&self) -> bool {
        self.rows.iter().all(|r| r.converged)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct SweepResult {
    pub spec: SweepSpec,
    pub points: Vec<SweepPoint>,
}

/// Number of clusters when values closer than `threshold` (directly or via
/// a chain of such neighbours) are merged. Non-finite values are ignored.
pub fn distinct_count(values: &[f64], threshold: f64) -> usize {
    let mut v: Vec<f64> = values.iter().copied().filter(|x| x.is_finite()).collect();
    if v.is_empty() {
        return 0;
    }
    v.sort_by(f64::total_cmp);
    1 + v.windows(2).filter(|w| w[1] - w[0] > threshold).count()
}

/// Runs the sweep. Every `(r, level)` pair is solved independently and in
/// parallel; the output keeps the input order.
pub fn run_sweep(spec: &SweepSpec, cfg: &SolveConfig) -> Result<SweepResult> {
    spec.validate()?;
    cfg.validate()?;
    let window = Window::from_types(vec![spec.report_type.clone()])?;
    let jobs: Vec<(f64, u64)> = spec.r_values.iter().flat_map(|&r| (1..=spec.levels).map(move |i| (r, i))).collect();
    let rows: Vec<SweepRow> = jobs.par_iter().map(|&(r, level)| solve_cell(spec, r, level, &window, cfg)).collect();
    let points = rows
        .chunks(spec.levels as usize)
        .map(|chunk| {
            let r = chunk[0].r;
            let values: Vec<f64> = chunk.iter().filter(|c| c.converged).map(|c| c.q_value).collect();
            SweepPoint {
                r,
                rows: chunk.to_vec(),
                distinct: distinct_count(&values, DISTINCT_THRESHOLD),
                distinct_fine: distinct_count(&values, SENSITIVITY_THRESHOLDS[0]),
                distinct_coarse: distinct_count(&values, SENSITIVITY_THRESHOLDS[1]),
                predicted: predicted_distinct_levels(spec.p, r, spec.levels as usize),
            }
        })
        .collect();
    Ok(SweepResult { spec: spec.clone(), points })
}

fn solve_cell(spec: &SweepSpec, r: f64, level: u64, window: &Window, cfg: &SolveConfig) -> SweepRow {
    let failed = |q_value: f64, residual: f64, err: &Error| SweepRow {
        r,
        level,
        q_value,
        converged: false,
        residual,
        error: Some(err.to_string()),
    };
    let ex = match build_example1(Example1Params::new(spec.p, spec.q, r)) {
        Ok(ex) => ex,
        Err(e) => return failed(f64::NAN, f64::NAN, &e),
    };
    match solve_q_on(&ex.spec, &ex.level(level), window, cfg) {
        Ok(res) => SweepRow {
            r,
            level,
            q_value: res.value(&spec.report_type).unwrap_or(f64::NAN),
            converged: res.converged,
            residual: res.residual,
            error: None,
        },
        Err(e) => match &e {
            Error::NonConvergence { partial, .. } | Error::NotStabilized { partial, .. } => {
                failed(partial.value(&spec.report_type).unwrap_or(f64::NAN), partial.residual, &e)
            }
            _ => failed(f64::NAN, f64::NAN, &e),
        },
    }
}

impl SweepResult {
    /// Writes the per-cell CSV described in the module documentation.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "r",
            "level",
            "q_value",
            "converged",
            "residual",
            "distinct",
            "distinct_fine",
            "distinct_coarse",
            "predicted",
        ])?;
        for point in &self.points {
            for row in &point.rows {
                w.write_record([
                    row.r.to_string(),
                    row.level.to_string(),
                    format!("{:.12}", row.q_value),
                    row.converged.to_string(),
                    format!("{:.3e}", row.residual),
                    point.distinct.to_string(),
                    point.distinct_fine.to_string(),
                    point.distinct_coarse.to_string(),
                    point.predicted.to_string(),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        String::from_utf8(buf).map_err(|e| Error::Parse(e.to_string()))
    }

    /// Points whose distinct count differs from the level rule, skipping
    /// those within `margin` of a threshold `p^(1/i)`.
    pub fn mismatches(&self, margin: f64) -> Vec<&SweepPoint> {
        let thresholds: Vec<f64> = (1..=self.spec.levels).map(|i| self.spec.p.powf(1.0 / i as f64)).collect();
        self.points
            .iter()
            .filter(|pt| thresholds.iter().all(|t| (pt.r - t).abs() > margin))
            .filter(|pt| pt.distinct != pt.predicted)
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn distinct_count_merges_chains() {
        assert_eq!(distinct_count(&[], 1e-3), 0);
        assert_eq!(distinct_count(&[0.5, 0.5004, 0.5008], 1e-3), 1);
        assert_eq!(distinct_count(&[0.5, 0.7, 0.7, 0.9], 1e-3), 3);
        assert_eq!(distinct_count(&[0.5, f64::NAN, 0.9], 1e-3), 2);
    }

    #[test]
    fn validation() {
        assert!(SweepSpec::new(0.1, 0.5, vec![], 6).validate().is_err());
        assert!(SweepSpec::new(0.1, 0.5, vec![-1.0], 6).validate().is_err());
        assert!(SweepSpec::new(0.1, 0.5, vec![0.5], 0).validate().is_err());
        assert!(SweepSpec::new(1.1, 0.5, vec![0.5], 3).validate().is_err());
        assert!(SweepSpec::new(0.1, 0.5, vec![0.5], 3).validate().is_ok());
    }

    #[test]
    fn small_sweep_counts() {
        let spec = SweepSpec::new(0.1, 0.5, vec![0.05, 0.2, 0.5], 6);
        let res = run_sweep(&spec, &SolveConfig::default()).unwrap();
        let counts: Vec<usize> = res.points.iter().map(|p| p.distinct).collect();
        assert_eq!(counts, vec![1, 2, 4]);
        assert!(res.mismatches(0.01).is_empty());
        let csv = res.to_csv_string().unwrap();
        assert_eq!(csv.lines().count(), 1 + 18);
        assert!(csv.starts_with("r,level,q_value,converged,residual"));
    }
}
