//! Per-run time series, derived summaries and the CSV schema.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use nalgebra::DVector;

use crate::error::{Error, Result};

pub const CSV_HEADER: &str = "t,rel_gap,rel_err,g_edge,g_max,cum_bits,S_t,lambda_norm";
pub const DEFAULT_STRIDE: usize = 50;

/// Gaps below this are attributed to oracle error and reported as 0.
const GAP_FLOOR: f64 = -1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RecordRow {
    pub t: usize,
    pub rel_gap: f64,
    pub rel_err: f64,
    /// Constraint value on the designated edge at the running averages.
    pub g_edge: f64,
    /// Largest constraint value over all edges at the running averages.
    pub g_max: f64,
    pub cum_bits: u64,
    /// Squared compression error `||x~ - x^||^2` after this round's exchange.
    pub s_t: f64,
    pub lambda_norm: f64,
}

/// Results of the per-iteration structural checks.
#[derive(Debug, Clone, PartialEq)]
pub struct InvariantSummary {
    pub dual_symmetric: bool,
    pub dual_nonnegative: bool,
    pub copies_coherent: bool,
    /// Largest `||x_i|| - bound` seen; nonpositive when every iterate is feasible.
    pub feasibility_excess: f64,
    pub max_lambda_norm: f64,
    pub dual_bound: Option<f64>,
    pub dual_bound_held: Option<bool>,
}

impl Default for InvariantSummary {
    fn default() -> Self {
        Self {
            dual_symmetric: true,
            dual_nonnegative: true,
            copies_coherent: true,
            feasibility_excess: f64::NEG_INFINITY,
            max_lambda_norm: 0.0,
            dual_bound: None,
            dual_bound_held: None,
        }
    }
}

impl InvariantSummary {
    pub fn all_held(&self) -> bool {
        self.dual_symmetric
            && self.dual_nonnegative
            && self.copies_coherent
            && self.feasibility_excess <= 1e-9
            && self.dual_bound_held != Some(false)
    }
}

/// Every-iteration diagnostics, kept only when tracing is enabled.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TracePoint {
    pub s_t: f64,
    /// `sum_i ||p_i||^2` of the primal directions taken this iteration.
    pub grad_sq: f64,
    pub lambda_norm: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub rows: Vec<RecordRow>,
    pub invariants: InvariantSummary,
    pub trace: Option<Vec<TracePoint>>,
    /// Running averages after the last iteration.
    pub final_average: Vec<DVector<f64>>,
    pub initial_gap: f64,
    pub designated_edge: Option<(usize, usize)>,
    pub connected: bool,
    pub total_bits: u64,
    /// Ordered key/value echo of the configuration, written to the sidecar.
    pub meta: Vec<(String, String)>,
}

impl RunRecord {
    pub fn iterations(&self) -> Vec<usize> {
        self.rows.iter().map(|r| r.t).collect()
    }

    pub fn rel_gaps(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.rel_gap).collect()
    }

    pub fn last(&self) -> &RecordRow {
        self.rows.last().expect("a run records at least one row")
    }

    pub fn to_csv(&self) -> String {
        rows_to_csv(&self.rows)
    }

    pub fn meta_text(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.meta {
            let _ = writeln!(out, "{k}={v}");
        }
        out
    }

    /// Writes `<stem>.csv` and `<stem>.meta` into `dir`, returning the CSV path.
    pub fn write(&self, dir: &Path, stem: &str) -> Result<PathBuf> {
        std::fs::create_dir_all(dir)?;
        let csv = dir.join(format!("{stem}.csv"));
        std::fs::write(&csv, self.to_csv())?;
        std::fs::write(dir.join(format!("{stem}.meta")), self.meta_text())?;
        Ok(csv)
    }
}

fn fmt_float(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else {
        v.to_string()
    }
}

pub fn rows_to_csv(rows: &[RecordRow]) -> String {
    let mut out = String::with_capacity(160 * (rows.len() + 1));
    out.push_str(CSV_HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.t,
            fmt_float(r.rel_gap),
            fmt_float(r.rel_err),
            fmt_float(r.g_edge),
            fmt_float(r.g_max),
            r.cum_bits,
            fmt_float(r.s_t),
            fmt_float(r.lambda_norm)
        );
    }
    out
}

pub fn parse_csv(text: &str) -> Result<Vec<RecordRow>> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == CSV_HEADER => {}
        _ => return Err(Error::parse(1, format!("expected header '{CSV_HEADER}'"))),
    }
    let mut rows = Vec::new();
    for (k, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let line_no = k + 1;
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 8 {
            return Err(Error::parse(line_no, format!("expected 8 fields, found {}", f.len())));
        }
        let float = |s: &str| s.trim().parse::<f64>().map_err(|e| Error::parse(line_no, format!("'{s}': {e}")));
        let int = |s: &str| s.trim().parse::<u64>().map_err(|e| Error::parse(line_no, format!("'{s}': {e}")));
        rows.push(RecordRow {
            t: int(f[0])? as usize,
            rel_gap: float(f[1])?,
            rel_err: float(f[2])?,
            g_edge: float(f[3])?,
            g_max: float(f[4])?,
            cum_bits: int(f[5])?,
            s_t: float(f[6])?,
            lambda_norm: float(f[7])?,
        });
    }
    Ok(rows)
}

/// `(F(x) - F*) / initial_gap`, with small negative values (below the oracle's
/// accuracy) clamped to 0.
pub fn relative_cost_gap(cost: f64, f_star: f64, initial_gap: f64) -> Result<f64> {
    if !(initial_gap > 0.0) {
        return Err(Error::DegenerateStart(initial_gap));
    }
    let gap = (cost - f_star) / initial_gap;
    if gap < GAP_FLOOR {
        log::warn!("relative cost gap {gap:.3e} is below the oracle tolerance; clamping to 0");
        return Ok(0.0);
    }
    Ok(gap.max(0.0))
}

/// Least-squares slope of `log(value)` against `log(t)` over the last half of
/// the recorded horizon (`t >= t_last / 2`).
pub fn rate_fit(iterations: &[usize], values: &[f64]) -> Result<f64> {
    let Some(&t_last) = iterations.last() else {
        return Err(Error::FitUndefined("no recorded values".into()));
    };
    rate_fit_window(iterations, values, t_last as f64 / 2.0, t_last as f64)
}

/// Log-log slope restricted to `lo <= t <= hi`.
pub fn rate_fit_window(iterations: &[usize], values: &[f64], lo: f64, hi: f64) -> Result<f64> {
    if iterations.len() != values.len() {
        return Err(Error::FitUndefined(format!(
            "{} iterations but {} values",
            iterations.len(),
            values.len()
        )));
    }
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (&t, &v) in iterations.iter().zip(values) {
        let t = t as f64;
        if t < lo || t > hi {
            continue;
        }
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::FitUndefined(format!("nonpositive value {v} at t = {t}")));
        }
        xs.push(t.ln());
        ys.push(v.ln());
    }
    if xs.len() < 5 {
        return Err(Error::FitUndefined(format!("{} points in window, need at least 5", xs.len())));
    }
    Ok(ls_slope(&xs, &ys))
}

fn ls_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
    }
    if sxx == 0.0 {
        0.0
    } else {
        sxy / sxx
    }
}

/// Cumulative bits at the first recorded iteration whose gap is at most `target`.
pub fn bits_to_target(rows: &[RecordRow], target: f64) -> Result<u64> {
    if rows.is_empty() {
        return Err(Error::config("empty record"));
    }
    rows.iter().find(|r| r.rel_gap <= target).map(|r| r.cum_bits).ok_or_else(|| Error::TargetUnreached {
        target,
        best: rows.iter().map(|r| r.rel_gap).fold(f64::INFINITY, f64::min),
    })
}

/// Whether `t` is a recording point for horizon `horizon` and stride `stride`.
pub fn is_record_point(t: usize, horizon: usize, stride: usize) -> bool {
    t == 1 || t == horizon || (stride > 0 && t % stride == 0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn power_law(c: f64, p: f64) -> (Vec<usize>, Vec<f64>) {
        let ts: Vec<usize> = (1..=200).map(|k| k * 50).collect();
        let vs = ts.iter().map(|&t| c * (t as f64).powf(p)).collect();
        (ts, vs)
    }

    #[test]
    fn rate_fit_recovers_power_laws() {
        let (ts, vs) = power_law(1.0, -0.5);
        assert!((rate_fit(&ts, &vs).unwrap() + 0.5).abs() < 1e-6);
        let (ts, vs) = power_law(3.0, -0.25);
        assert!((rate_fit(&ts, &vs).unwrap() + 0.25).abs() < 1e-6);
        let (ts, vs) = power_law(2.0, 0.0);
        assert!(rate_fit(&ts, &vs).unwrap().abs() < 1e-12);
    }

    #[test]
    fn rate_fit_rejects_nonpositive_values() {
        let (ts, mut vs) = power_law(1.0, -0.5);
        *vs.last_mut().unwrap() = 0.0;
        assert!(matches!(rate_fit(&ts, &vs), Err(Error::FitUndefined(_))));
        assert!(rate_fit(&[1, 2, 3], &[1.0, 0.5, 0.3]).is_err());
    }

    #[test]
    fn relative_gap_cases() {
        assert_eq!(relative_cost_gap(5.0, 1.0, 4.0).unwrap(), 1.0);
        assert_eq!(relative_cost_gap(1.0, 1.0, 4.0).unwrap(), 0.0);
        assert_eq!(relative_cost_gap(3.0, 1.0, 4.0).unwrap(), 0.5);
        assert_eq!(relative_cost_gap(0.0, 1.0, 4.0).unwrap(), 0.0);
        assert!(matches!(relative_cost_gap(1.0, 1.0, 0.0), Err(Error::DegenerateStart(_))));
    }

    fn row(t: usize, gap: f64, bits: u64) -> RecordRow {
        RecordRow { t, rel_gap: gap, rel_err: 0.0, g_edge: 0.0, g_max: 0.0, cum_bits: bits, s_t: 0.0, lambda_norm: 0.0 }
    }

    #[test]
    fn bits_to_target_cases() {
        let rows = vec![row(1, 1.0, 100), row(2, 0.5, 150), row(3, 0.1, 200)];
        assert_eq!(bits_to_target(&rows, 1.0).unwrap(), 100);
        assert_eq!(bits_to_target(&rows, 0.2).unwrap(), 200);
        match bits_to_target(&rows, 0.01) {
            Err(Error::TargetUnreached { best, .. }) => assert_eq!(best, 0.1),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn csv_round_trip() {
        let rows = vec![
            RecordRow {
                t: 1,
                rel_gap: 1.0,
                rel_err: 0.1234567890123456789,
                g_edge: -3.5,
                g_max: f64::NAN,
                cum_bits: 12345,
                s_t: 0.0,
                lambda_norm: 1e-300,
            },
            row(50, 0.25, 99999),
        ];
        let text = rows_to_csv(&rows);
        assert!(text.starts_with(CSV_HEADER));
        let back = parse_csv(&text).unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!(back[0].rel_err, rows[0].rel_err);
        assert_eq!(back[0].lambda_norm, rows[0].lambda_norm);
        assert!(back[0].g_max.is_nan());
        assert_eq!(back[1], rows[1]);
        assert!(parse_csv("t,x\n1,2").is_err());
    }

    #[test]
    fn record_points() {
        let pts: Vec<usize> = (1..=120).filter(|&t| is_record_point(t, 120, 50)).collect();
        assert_eq!(pts, vec![1, 50, 100, 120]);
    }

    proptest! {
        #[test]
        fn bits_to_target_is_monotone(gaps in proptest::collection::vec(0.0f64..1.0, 1..40), a in 0.0f64..1.0, b in 0.0f64..1.0) {
            let rows: Vec<RecordRow> = gaps.iter().enumerate().map(|(k, &g)| row(k + 1, g, 10 * (k as u64 + 1))).collect();
            let (small, large) = if a < b { (a, b) } else { (b, a) };
            if let Ok(bits_small) = bits_to_target(&rows, small) {
                prop_assert!(bits_to_target(&rows, large).unwrap() <= bits_small);
            }
        }
    }
}
