//! Piecewise cubic interpolation of trajectories, the relative `L∞` error
//! against a reference, and action-potential biomarkers.

use thiserror::Error;

use crate::split::Trajectory;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PostprocessError {
    #[error("step count {0} is not a multiple of 3")]
    NotMultipleOfThree(usize),
    #[error("reference mesh ({reference} steps) does not refine the mesh ({coarse} steps)")]
    IncompatibleMeshes { coarse: usize, reference: usize },
    #[error("trajectory is incomplete")]
    Incomplete,
    #[error("no upward threshold crossing")]
    NoActivation,
    #[error("no downward threshold crossing after activation")]
    NoRecovery,
    #[error("more than one action potential")]
    MultipleActivations,
    #[error("threshold ordering violated (V_r = {v_r}, V_th = {v_th}, V_p = {v_p})")]
    DegenerateThreshold { v_r: f64, v_th: f64, v_p: f64 },
    #[error("reference value is zero")]
    ZeroReference,
}

/// Lagrange basis on the equispaced nodes `0, 1, 2, 3` at local coordinate `u`.
fn cubic_weights(u: f64) -> [f64; 4] {
    let (u1, u2, u3) = (u - 1.0, u - 2.0, u - 3.0);
    [
        -u1 * u2 * u3 / 6.0,
        u * u2 * u3 / 2.0,
        -u * u1 * u3 / 2.0,
        u * u1 * u2 / 6.0,
    ]
}

/// Derivative of [`cubic_weights`] with respect to `u`.
fn cubic_weight_derivatives(u: f64) -> [f64; 4] {
    let (u1, u2, u3) = (u - 1.0, u - 2.0, u - 3.0);
    [
        -(u2 * u3 + u1 * u3 + u1 * u2) / 6.0,
        (u2 * u3 + u * u3 + u * u2) / 2.0,
        -(u1 * u3 + u * u3 + u * u1) / 2.0,
        (u1 * u2 + u * u2 + u * u1) / 6.0,
    ]
}

/// Continuous piecewise cubic through the nodal values, one cubic per
/// package of three mesh intervals `[t_{3s}, t_{3s+3}]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PiecewiseCubic {
    h: f64,
    values: Vec<f64>,
}

impl PiecewiseCubic {
    pub fn new(h: f64, values: Vec<f64>) -> Result<Self, PostprocessError> {
        let m = values.len().saturating_sub(1);
        if m == 0 || !m.is_multiple_of(3) {
            return Err(PostprocessError::NotMultipleOfThree(m));
        }
        Ok(Self { h, values })
    }

    pub fn steps(&self) -> usize {
        self.values.len() - 1
    }

    pub fn packages(&self) -> usize {
        self.steps() / 3
    }

    /// Package index and local coordinate (in steps) of `t`.
    fn locate(&self, t: f64) -> (usize, f64) {
        let x = t / self.h;
        let s = ((x / 3.0).floor().max(0.0) as usize).min(self.packages() - 1);
        (s, x - 3.0 * s as f64)
    }

    pub fn eval(&self, t: f64) -> f64 {
        let (s, u) = self.locate(t);
        let w = cubic_weights(u);
        let v = &self.values[3 * s..3 * s + 4];
        w[0] * v[0] + w[1] * v[1] + w[2] * v[2] + w[3] * v[3]
    }

    /// Coefficients of the cubic on package `s` in the monomial basis of the
    /// local coordinate `u = (t - t_{3s})/h`.
    pub fn package_coefficients(&self, s: usize) -> [f64; 4] {
        let v = &self.values[3 * s..3 * s + 4];
        // Newton forward differences
        let d1 = v[1] - v[0];
        let d2 = v[2] - 2.0 * v[1] + v[0];
        let d3 = v[3] - 3.0 * v[2] + 3.0 * v[1] - v[0];
        // v0 + d1 u + d2 u(u-1)/2 + d3 u(u-1)(u-2)/6
        [v[0], d1 - d2 / 2.0 + d3 / 3.0, d2 / 2.0 - d3 / 2.0, d3 / 6.0]
    }
}

/// The degree-3 package interpolant of one component of `traj`.
pub fn interpolate(traj: &Trajectory, component: usize) -> Result<PiecewiseCubic, PostprocessError> {
    if traj.len() != traj.mesh().steps() + 1 {
        return Err(PostprocessError::Incomplete);
    }
    PiecewiseCubic::new(traj.mesh().step_size(), traj.component(component))
}

/// `max|V̂ - V̂_ref| / max|V̂_ref|` over all reference nodes, where `V̂` is the
/// package interpolant of `traj` and `V̂_ref` that of `reference` (equal to the
/// nodal values there).
pub fn linf_relative_error(traj: &Trajectory, reference: &Trajectory, component: usize) -> Result<f64, PostprocessError> {
    let coarse = interpolate(traj, component)?;
    if reference.len() != reference.mesh().steps() + 1 {
        return Err(PostprocessError::Incomplete);
    }
    let m_ref = reference.mesh().steps();
    if !m_ref.is_multiple_of(3) {
        return Err(PostprocessError::NotMultipleOfThree(m_ref));
    }
    let q = traj
        .mesh()
        .refinement_factor(reference.mesh())
        .ok_or(PostprocessError::IncompatibleMeshes { coarse: traj.mesh().steps(), reference: m_ref })?;
    let ref_values: Vec<f64> = reference.states().map(|s| s[component]).collect();

    let weights: Vec<[f64; 4]> = (0..3 * q).map(|o| cubic_weights(o as f64 / q as f64)).collect();
    let mut max_diff: f64 = 0.0;
    for s in 0..coarse.packages() {
        let v = &coarse.values[3 * s..3 * s + 4];
        for (o, w) in weights.iter().enumerate() {
            let approx = w[0] * v[0] + w[1] * v[1] + w[2] * v[2] + w[3] * v[3];
            max_diff = max_diff.max((approx - ref_values[3 * q * s + o]).abs());
        }
    }
    max_diff = max_diff.max((coarse.values[coarse.steps()] - ref_values[m_ref]).abs());
    let max_ref = ref_values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if max_ref == 0.0 {
        return Err(PostprocessError::ZeroReference);
    }
    Ok(max_diff / max_ref)
}

/// Resting, peak and threshold potentials.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Thresholds {
    pub v_r: f64,
    pub v_p: f64,
    pub v_th: f64,
}

impl Thresholds {
    /// `V_th = 0.8 V_r + 0.2 V_p` (20 % of depolarization).
    pub fn new(v_r: f64, v_p: f64) -> Self {
        Self { v_r, v_p, v_th: 0.8 * v_r + 0.2 * v_p }
    }

    /// `V_r` from the first node, `V_p` from the nodal maximum.
    pub fn from_values(values: &[f64]) -> Self {
        let v_p = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Self::new(values[0], v_p)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BiomarkerSet {
    pub t_a: f64,
    pub t_r: f64,
    pub apd: f64,
    pub v_th: f64,
    pub v_r: f64,
    pub v_p: f64,
}

/// Threshold crossing between nodes `n` and `n+1`, solved on the cubic
/// through nodes `n-1..n+2` (clamped to the mesh).
fn solve_crossing(values: &[f64], h: f64, n: usize, level: f64, horizon: f64) -> f64 {
    let m = values.len() - 1;
    let start = n.saturating_sub(1).min(m - 3);
    let v = &values[start..start + 4];
    let p = |u: f64| {
        let w = cubic_weights(u);
        w[0] * v[0] + w[1] * v[1] + w[2] * v[2] + w[3] * v[3] - level
    };
    let dp = |u: f64| {
        let w = cubic_weight_derivatives(u);
        w[0] * v[0] + w[1] * v[1] + w[2] * v[2] + w[3] * v[3]
    };
    let mut lo = (n - start) as f64;
    let mut hi = lo + 1.0;
    let lo_sign = p(lo) > 0.0;
    let tol = 1e-12 * horizon / h;
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if (p(mid) > 0.0) == lo_sign {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let (a, b) = (lo, hi);
    let mut u = 0.5 * (lo + hi);
    for _ in 0..3 {
        let d = dp(u);
        if d == 0.0 {
            break;
        }
        let next = u - p(u) / d;
        if next < a || next > b || p(next).abs() > p(u).abs() {
            break;
        }
        u = next;
    }
    (start as f64 + u) * h
}

/// Activation and recovery times of one component at prescribed threshold
/// levels.
pub fn extract_biomarkers_at(traj: &Trajectory, component: usize, levels: Thresholds) -> Result<BiomarkerSet, PostprocessError> {
    if traj.len() != traj.mesh().steps() + 1 {
        return Err(PostprocessError::Incomplete);
    }
    let Thresholds { v_r, v_p, v_th } = levels;
    if !(v_r < v_th && v_th < v_p) {
        return Err(PostprocessError::DegenerateThreshold { v_r, v_th, v_p });
    }
    let values = traj.component(component);
    if values.len() < 4 {
        return Err(PostprocessError::NoActivation);
    }
    let n_a = values
        .windows(2)
        .position(|w| w[0] <= v_th && v_th < w[1])
        .ok_or(PostprocessError::NoActivation)?;
    let n_r = values[n_a + 1..]
        .windows(2)
        .position(|w| w[0] >= v_th && v_th > w[1])
        .map(|p| p + n_a + 1)
        .ok_or(PostprocessError::NoRecovery)?;
    if values[n_r + 1..].windows(2).any(|w| w[0] <= v_th && v_th < w[1]) {
        return Err(PostprocessError::MultipleActivations);
    }
    let h = traj.mesh().step_size();
    let horizon = traj.mesh().horizon();
    let t_a = solve_crossing(&values, h, n_a, v_th, horizon);
    let t_r = solve_crossing(&values, h, n_r, v_th, horizon);
    Ok(BiomarkerSet { t_a, t_r, apd: t_r - t_a, v_th, v_r, v_p })
}

/// Biomarkers with thresholds read from the trajectory itself.
pub fn extract_biomarkers(traj: &Trajectory, component: usize) -> Result<BiomarkerSet, PostprocessError> {
    if traj.is_empty() {
        return Err(PostprocessError::Incomplete);
    }
    let levels = Thresholds::from_values(&traj.component(component));
    extract_biomarkers_at(traj, component, levels)
}

/// Relative errors `(e_ta, e_tr, e_apd)`.
pub fn biomarker_errors(bm: &BiomarkerSet, reference: &BiomarkerSet) -> Result<(f64, f64, f64), PostprocessError> {
    let rel = |x: f64, r: f64| {
        if r == 0.0 {
            Err(PostprocessError::ZeroReference)
        } else {
            Ok((x - r).abs() / r.abs())
        }
    };
    Ok((rel(bm.t_a, reference.t_a)?, rel(bm.t_r, reference.t_r)?, rel(bm.apd, reference.apd)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::split::TimeMesh;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn sampled(horizon: f64, m: usize, f: impl Fn(f64) -> f64) -> Trajectory {
        let mesh = TimeMesh::new(horizon, m);
        let data = (0..=m).map(|n| f(mesh.node(n))).collect();
        Trajectory::from_flat(mesh, 1, data)
    }

    #[test]
    fn reproduces_global_cubic() {
        let q = |t: f64| 0.5 - 2.0 * t + 0.75 * t * t - 0.1 * t * t * t;
        let traj = sampled(6.0, 30, q);
        let pc = interpolate(&traj, 0).unwrap();
        for i in 0..1000 {
            let t = 6.0 * (i as f64 * 0.618_033_988_7).fract();
            assert!((pc.eval(t) - q(t)).abs() < 1e-12);
        }
    }

    #[test]
    fn constant_data() {
        let pc = interpolate(&sampled(1.0, 9, |_| 4.2), 0).unwrap();
        for t in [0.0, 0.13, 0.5, 0.99, 1.0] {
            assert_relative_eq!(pc.eval(t), 4.2, max_relative = 1e-15);
        }
    }

    #[test]
    fn interpolation_error_is_fourth_order() {
        let h = 0.01;
        let m = 3 * (2.0 * PI / h / 3.0).round() as usize;
        let horizon = m as f64 * h;
        let pc = interpolate(&sampled(horizon, m, f64::sin), 0).unwrap();
        let mut err: f64 = 0.0;
        for i in 0..=50_000 {
            let t = horizon * i as f64 / 50_000.0;
            err = err.max((pc.eval(t) - t.sin()).abs());
        }
        assert!(err <= h.powi(4), "{err}");
    }

    #[test]
    fn rejects_non_multiple_of_three() {
        assert_eq!(interpolate(&sampled(1.0, 10, |t| t), 0).unwrap_err(), PostprocessError::NotMultipleOfThree(10));
    }

    #[test]
    fn monomial_coefficients_match_evaluation() {
        let traj = sampled(3.0, 6, |t| (3.0 * t).cos());
        let pc = interpolate(&traj, 0).unwrap();
        for s in 0..2 {
            let c = pc.package_coefficients(s);
            for u in [0.0, 0.4, 1.7, 3.0] {
                let want = pc.eval((3.0 * s as f64 + u) * 0.5);
                let got = c[0] + u * (c[1] + u * (c[2] + u * c[3]));
                assert!((got - want).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn linf_error_examples() {
        let f = |t: f64| -80.0 + 20.0 * (t * 0.3).sin() - 20.0;
        let reference = sampled(30.0, 240, f);
        let traj = sampled(30.0, 60, f);
        let same = linf_relative_error(&reference, &reference, 0).unwrap();
        assert_eq!(same, 0.0);
        // constant offset of 1 against max |ref| = 100
        let reference = sampled(30.0, 240, |_| -100.0);
        let shifted = sampled(30.0, 60, |_| -99.0);
        assert_relative_eq!(linf_relative_error(&shifted, &reference, 0).unwrap(), 0.01, max_relative = 1e-14);
        assert!(linf_relative_error(&traj, &sampled(30.0, 250, f), 0).is_err());
    }

    #[test]
    fn threshold_arithmetic() {
        let th = Thresholds::new(-84.0, 16.0);
        assert_relative_eq!(th.v_th, -64.0, max_relative = 1e-15);
    }

    fn sin2(horizon: f64, m: usize) -> Trajectory {
        sampled(horizon, m, |t| -84.0 + 100.0 * (PI * t / horizon).sin().powi(2))
    }

    #[test]
    fn synthetic_crossings_converge_at_fourth_order() {
        let horizon = 12.0;
        let t_a = horizon / PI * 0.2f64.sqrt().asin();
        let t_r = horizon - t_a;
        let mut errs = vec![];
        for m in [192, 384, 768, 1536] {
            let bm = extract_biomarkers(&sin2(horizon, m), 0).unwrap();
            assert_relative_eq!(bm.v_th, -64.0, max_relative = 1e-12);
            errs.push((bm.t_a - t_a).abs().max((bm.t_r - t_r).abs()));
            assert_relative_eq!(bm.apd, bm.t_r - bm.t_a);
        }
        for w in errs.windows(2) {
            let rate = (w[0] / w[1]).log2();
            assert!(rate > 3.5, "{errs:?}");
        }
    }

    #[test]
    fn self_errors_vanish() {
        let bm = extract_biomarkers(&sin2(12.0, 48), 0).unwrap();
        assert_eq!(biomarker_errors(&bm, &bm).unwrap(), (0.0, 0.0, 0.0));
        let mut other = bm;
        other.t_a = 21.0;
        let mut reference = bm;
        reference.t_a = 20.0;
        assert_relative_eq!(biomarker_errors(&other, &reference).unwrap().0, 0.05, max_relative = 1e-14);
        reference.t_a = 0.0;
        assert_eq!(biomarker_errors(&other, &reference).unwrap_err(), PostprocessError::ZeroReference);
    }

    #[test]
    fn undefined_biomarkers() {
        let flat = sampled(12.0, 48, |_| -84.0);
        assert!(matches!(extract_biomarkers(&flat, 0), Err(PostprocessError::DegenerateThreshold { .. })));
        let ramp = sampled(12.0, 48, |t| -84.0 + 10.0 * t);
        assert_eq!(extract_biomarkers(&ramp, 0).unwrap_err(), PostprocessError::NoRecovery);
        let two = sampled(12.0, 96, |t| -84.0 + 100.0 * (2.0 * PI * t / 12.0).sin().powi(2));
        assert_eq!(extract_biomarkers(&two, 0).unwrap_err(), PostprocessError::MultipleActivations);
        let below = Thresholds { v_r: -84.0, v_p: 16.0, v_th: -64.0 };
        let low = sampled(12.0, 48, |t| -84.0 + (t * 0.1).sin());
        assert_eq!(extract_biomarkers_at(&low, 0, below).unwrap_err(), PostprocessError::NoActivation);
    }

    proptest! {
        #[test]
        fn interpolant_hits_nodes_and_is_cubic(values in proptest::collection::vec(-100.0f64..100.0, 13)) {
            let h = 0.25;
            let pc = PiecewiseCubic::new(h, values.clone()).unwrap();
            for (n, v) in values.iter().enumerate() {
                prop_assert!((pc.eval(n as f64 * h) - v).abs() <= 1e-12 * v.abs().max(1.0));
            }
            // fourth divided difference of each package vanishes
            for s in 0..pc.packages() {
                let t0 = 3.0 * s as f64 * h;
                let pts: Vec<f64> = (0..5).map(|i| pc.eval(t0 + 0.6 * h * i as f64)).collect();
                let d4 = pts[4] - 4.0 * pts[3] + 6.0 * pts[2] - 4.0 * pts[1] + pts[0];
                prop_assert!(d4.abs() < 1e-10 * (1.0 + pts.iter().fold(0.0f64, |m, x| m.max(x.abs()))));
            }
        }

        #[test]
        fn error_nonnegative(offset in -5.0f64..5.0) {
            let reference = sampled(3.0, 36, |t| -50.0 + t);
            let traj = sampled(3.0, 12, |t| -50.0 + t + offset);
            let e = linf_relative_error(&traj, &reference, 0).unwrap();
            prop_assert!(e >= 0.0);
            prop_assert_eq!(e == 0.0, offset == 0.0);
        }
    }
}
