//! Convergence, cost and stability studies over a (scheme, h) grid.

use rayon::prelude::*;
use stiffexp::integrators::{integrate, SchemeError, SchemeSpec};
use stiffexp::ionic::VOLTAGE;
use stiffexp::postprocess::{
    biomarker_errors, extract_biomarkers_at, linf_relative_error, BiomarkerSet, PostprocessError, Thresholds,
};
use stiffexp::{SplitSystem, Trajectory};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum StudyError {
    #[error(transparent)]
    Scheme(#[from] SchemeError),
    #[error(transparent)]
    Postprocess(#[from] PostprocessError),
}

/// A reference trajectory with the threshold levels all runs are measured at.
#[derive(Debug, Clone)]
pub struct Reference {
    pub traj: Trajectory,
    pub component: usize,
    pub thresholds: Thresholds,
    /// `None` when the reference itself has no well-defined action potential.
    pub biomarkers: Option<BiomarkerSet>,
}

impl Reference {
    pub fn new(traj: Trajectory, component: usize) -> Self {
        let thresholds = Thresholds::from_values(&traj.component(component));
        let biomarkers = extract_biomarkers_at(&traj, component, thresholds).ok();
        Self { traj, component, thresholds, biomarkers }
    }

    /// Membrane potential of a Beeler–Reuter trajectory.
    pub fn voltage(traj: Trajectory) -> Self {
        Self::new(traj, VOLTAGE)
    }
}

/// One (scheme, h) cell of a study.
#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub scheme: SchemeSpec,
    pub h: f64,
    pub m: usize,
    pub e_inf: Option<f64>,
    pub e_ta: Option<f64>,
    pub e_tr: Option<f64>,
    pub e_apd: Option<f64>,
    /// Median integrator wall-clock over the timing repeats.
    pub cpu_s: Option<f64>,
    pub stable: bool,
    pub newton_iters: usize,
    pub diverged_at: Option<usize>,
}

/// Least-squares log–log slopes of one scheme over its stable rows.
#[derive(Debug, Clone, PartialEq)]
pub struct SlopeFit {
    pub scheme: SchemeSpec,
    pub stable_rows: usize,
    pub e_inf: Option<f64>,
    pub e_ta: Option<f64>,
    pub e_tr: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ConvergenceReport {
    pub rows: Vec<Row>,
    pub slopes: Vec<SlopeFit>,
}

impl ConvergenceReport {
    pub fn row(&self, scheme: &SchemeSpec, h: f64) -> Option<&Row> {
        self.rows.iter().find(|r| same_scheme(&r.scheme, scheme) && same_step(r.h, h))
    }

    pub fn rows_of<'a>(&'a self, scheme: &'a SchemeSpec) -> impl Iterator<Item = &'a Row> + 'a {
        self.rows.iter().filter(move |r| same_scheme(&r.scheme, scheme))
    }

    pub fn slope(&self, scheme: &SchemeSpec) -> Option<&SlopeFit> {
        self.slopes.iter().find(|s| same_scheme(&s.scheme, scheme))
    }
}

pub fn same_scheme(a: &SchemeSpec, b: &SchemeSpec) -> bool {
    a.family() == b.family() && a.order() == b.order()
}

pub fn same_step(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12 * a.abs().max(b.abs())
}

/// Slope of `log y` against `log x` by least squares. `None` with fewer than
/// two usable points or no spread in `x`.
pub fn fit_slope(points: &[(f64, f64)]) -> Option<f64> {
    let logs: Vec<(f64, f64)> = points
        .iter()
        .filter(|(x, y)| *x > 0.0 && *y > 0.0 && x.is_finite() && y.is_finite())
        .map(|(x, y)| (x.ln(), y.ln()))
        .collect();
    if logs.len() < 2 {
        return None;
    }
    let n = logs.len() as f64;
    let mx = logs.iter().map(|p| p.0).sum::<f64>() / n;
    let my = logs.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = logs.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = logs.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

fn median(mut v: Vec<f64>) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let k = v.len() / 2;
    Some(if v.len() % 2 == 1 { v[k] } else { 0.5 * (v[k - 1] + v[k]) })
}

/// Integrates one cell and measures it against `reference`.
pub fn evaluate_row<S: SplitSystem + ?Sized>(
    sys: &S,
    scheme: &SchemeSpec,
    h: f64,
    m: usize,
    reference: &Reference,
) -> Result<Row, StudyError> {
    let run = integrate(sys, scheme, m)?;
    let mut row = Row {
        scheme: *scheme,
        h,
        m,
        e_inf: None,
        e_ta: None,
        e_tr: None,
        e_apd: None,
        cpu_s: None,
        stable: run.status.is_stable(),
        newton_iters: run.status.newton.iterations,
        diverged_at: run.status.divergence.as_ref().map(|d| d.index),
    };
    let Some(traj) = run.into_trajectory() else {
        return Ok(row);
    };
    row.e_inf = Some(linf_relative_error(&traj, &reference.traj, reference.component)?);
    if let Some(bref) = &reference.biomarkers {
        if let Ok(bm) = extract_biomarkers_at(&traj, reference.component, reference.thresholds) {
            if let Ok((ta, tr, apd)) = biomarker_errors(&bm, bref) {
                row.e_ta = Some(ta);
                row.e_tr = Some(tr);
                row.e_apd = Some(apd);
            }
        }
    }
    Ok(row)
}

/// Median wall-clock of `repeats` runs, integration only.
pub fn time_run<S: SplitSystem + ?Sized>(sys: &S, scheme: &SchemeSpec, m: usize, repeats: usize) -> Result<Option<f64>, StudyError> {
    let mut times = Vec::with_capacity(repeats);
    for _ in 0..repeats {
        times.push(integrate(sys, scheme, m)?.status.elapsed.as_secs_f64());
    }
    Ok(median(times))
}

/// Fits slopes for every scheme appearing in `rows`, in order of appearance.
pub fn fit_slopes(rows: &[Row]) -> Vec<SlopeFit> {
    let mut out: Vec<SlopeFit> = Vec::new();
    for row in rows {
        if out.iter().any(|s| same_scheme(&s.scheme, &row.scheme)) {
            continue;
        }
        let mine: Vec<&Row> = rows.iter().filter(|r| same_scheme(&r.scheme, &row.scheme) && r.stable).collect();
        let series = |f: fn(&Row) -> Option<f64>| {
            let pts: Vec<(f64, f64)> = mine.iter().filter_map(|r| f(r).map(|e| (r.h, e))).collect();
            fit_slope(&pts)
        };
        out.push(SlopeFit {
            scheme: row.scheme,
            stable_rows: mine.len(),
            e_inf: series(|r| r.e_inf),
            e_ta: series(|r| r.e_ta),
            e_tr: series(|r| r.e_tr),
        });
    }
    out
}

/// A (scheme, h, m) cell to run.
pub type Cell = (SchemeSpec, f64, usize);

pub fn grid(schemes: &[SchemeSpec], steps: &[(f64, usize)]) -> Vec<Cell> {
    schemes.iter().flat_map(|s| steps.iter().map(move |&(h, m)| (*s, h, m))).collect()
}

/// Accuracy of every cell (in parallel), then timing (sequentially, so
/// runs do not compete for cores). `repeats = 0` skips timing.
pub fn run_study<S: SplitSystem + ?Sized>(
    sys: &S,
    cells: &[Cell],
    reference: &Reference,
    repeats: usize,
) -> Result<ConvergenceReport, StudyError> {
    let mut rows = cells
        .par_iter()
        .map(|(s, h, m)| evaluate_row(sys, s, *h, *m, reference))
        .collect::<Result<Vec<_>, _>>()?;
    if repeats > 0 {
        for row in rows.iter_mut().filter(|r| r.stable) {
            row.cpu_s = time_run(sys, &row.scheme, row.m, repeats)?;
        }
    }
    let slopes = fit_slopes(&rows);
    Ok(ConvergenceReport { rows, slopes })
}

/// Stable/diverged status of each cell, without any error measurement.
#[derive(Debug, Clone, PartialEq)]
pub struct StabilityCell {
    pub scheme: SchemeSpec,
    pub h: f64,
    pub stable: bool,
    pub diverged_at: Option<usize>,
}

pub fn stability_sweep<S: SplitSystem + ?Sized>(sys: &S, cells: &[Cell]) -> Result<Vec<StabilityCell>, StudyError> {
    cells
        .par_iter()
        .map(|(s, h, m)| {
            let run = integrate(sys, s, *m)?;
            Ok(StabilityCell {
                scheme: *s,
                h: *h,
                stable: run.status.is_stable(),
                diverged_at: run.status.divergence.map(|d| d.index),
            })
        })
        .collect()
}

/// `(e_inf, cpu_s)` pairs of the stable, timed rows of one scheme.
pub fn cost_points<'a>(rows: impl IntoIterator<Item = &'a Row>) -> Vec<(f64, f64)> {
    rows.into_iter()
        .filter(|r| r.stable)
        .filter_map(|r| Some((r.e_inf?, r.cpu_s?)))
        .collect()
}

/// Keeps the points on which cost strictly grows as the error shrinks,
/// returned by increasing error.
pub fn monotone_clean(points: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let mut sorted: Vec<(f64, f64)> = points.iter().copied().filter(|(e, c)| *e > 0.0 && *c > 0.0).collect();
    sorted.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut kept: Vec<(f64, f64)> = Vec::new();
    for p in sorted {
        if kept.last().is_none_or(|last| p.1 > last.1 && p.0 < last.0) {
            kept.push(p);
        }
    }
    kept.reverse();
    kept
}

/// Cost at error `target` by log–log interpolation on a cleaned curve.
/// `None` outside the range of the curve.
pub fn cost_at_error(curve: &[(f64, f64)], target: f64) -> Option<f64> {
    let mut pts = curve.to_vec();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    pts.windows(2).find_map(|w| {
        let ((e0, c0), (e1, c1)) = (w[0], w[1]);
        if !(e0 <= target && target <= e1) {
            return None;
        }
        if e1 == e0 {
            return Some(c0);
        }
        let s = (target.ln() - e0.ln()) / (e1.ln() - e0.ln());
        Some((c0.ln() + s * (c1.ln() - c0.ln())).exp())
    })
}
