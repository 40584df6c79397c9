//! Scalar φ-functions of exponential integrators.
//!
//! `φ_0(z) = e^z` and `φ_{j+1}(z) = (φ_j(z) - 1/j!) / z`, with `φ_j(0) = 1/j!`.
//!
//! The forward recurrence cancels catastrophically for small `|z|`, so below
//! [`SERIES_RADIUS`] the highest requested function is summed from its Taylor
//! series `Σ_i z^i/(i+j)!` and the lower ones follow from the backward
//! recurrence `φ_j = z φ_{j+1} + 1/j!`, which is stable there.

use thiserror::Error;

/// Highest supported index.
pub const MAX_ORDER: usize = 5;

/// `|z|` below which the Taylor branch is used.
pub const SERIES_RADIUS: f64 = 1.0;

/// Largest argument for which `e^z` is finite.
const MAX_ARG: f64 = 709.0;

/// Taylor terms on the series branch; `1/(24)!` is below 1e-23.
const SERIES_TERMS: usize = 24;

const INV_FACTORIAL: [f64; MAX_ORDER + 1] = [1.0, 1.0, 0.5, 1.0 / 6.0, 1.0 / 24.0, 1.0 / 120.0];

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum PhiError {
    #[error("phi index {0} out of range 0..={MAX_ORDER}")]
    OrderOutOfRange(usize),
    #[error("phi argument {0} too large (exp overflow)")]
    ArgumentTooLarge(f64),
    #[error("phi argument is not finite")]
    NonFinite,
}

fn check(j: usize, z: f64) -> Result<(), PhiError> {
    if j > MAX_ORDER {
        return Err(PhiError::OrderOutOfRange(j));
    }
    if z.is_nan() || z == f64::NEG_INFINITY {
        return Err(PhiError::NonFinite);
    }
    if z > MAX_ARG {
        return Err(PhiError::ArgumentTooLarge(z));
    }
    Ok(())
}

/// `1/i` for the Horner ratios of [`series`]; avoids a division per term.
const RECIPROCALS: [f64; SERIES_TERMS + MAX_ORDER] = {
    let mut r = [0.0; SERIES_TERMS + MAX_ORDER];
    let mut i = 1;
    while i < r.len() {
        r[i] = 1.0 / i as f64;
        i += 1;
    }
    r
};

/// `Σ_{i<SERIES_TERMS} z^i / (i+j)!` by Horner.
fn series(j: usize, z: f64) -> f64 {
    // term ratio: z / (i+j+1)
    let mut acc = 1.0;
    for i in (1..SERIES_TERMS).rev() {
        acc = 1.0 + acc * (z * RECIPROCALS[i + j]);
    }
    acc * INV_FACTORIAL[j]
}

/// Evaluates `φ_j(z)`.
pub fn phi_eval(j: usize, z: f64) -> Result<f64, PhiError> {
    check(j, z)?;
    if z.abs() < SERIES_RADIUS {
        return Ok(series(j, z));
    }
    let mut phi = z.exp();
    for inv_fact in INV_FACTORIAL.iter().take(j) {
        phi = (phi - inv_fact) / z;
    }
    Ok(phi)
}

/// `φ_1(z) = (e^z - 1)/z` via `expm1`, accurate without a series branch.
pub fn phi1(z: f64) -> Result<f64, PhiError> {
    check(1, z)?;
    if z == 0.0 {
        return Ok(1.0);
    }
    Ok(z.exp_m1() / z)
}

/// Fills `out[0..=j_max]` with `φ_0(z)..φ_{j_max}(z)`.
pub fn phi_sequence(j_max: usize, z: f64, out: &mut [f64]) -> Result<(), PhiError> {
    check(j_max, z)?;
    if z.abs() < SERIES_RADIUS {
        out[j_max] = series(j_max, z);
        for j in (0..j_max).rev() {
            out[j] = z * out[j + 1] + INV_FACTORIAL[j];
        }
        return Ok(());
    }
    out[0] = z.exp();
    for j in 0..j_max {
        out[j + 1] = (out[j] - INV_FACTORIAL[j]) / z;
    }
    Ok(())
}

/// `φ_0..φ_{j_max}` for each entry of `z`; row `p` belongs to `z[p]`.
pub fn phi_eval_batch(j_max: usize, z: &[f64]) -> Result<Vec<Vec<f64>>, PhiError> {
    z.iter()
        .map(|&zi| {
            let mut row = vec![0.0; j_max + 1];
            phi_sequence(j_max, zi, &mut row)?;
            Ok(row)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn factorial(n: usize) -> f64 {
        (1..=n).map(|k| k as f64).product()
    }

    /// Thirty-term truncated series, summed term by term.
    fn taylor30(j: usize, z: f64) -> f64 {
        (0..30).map(|i| z.powi(i as i32) / factorial(i + j)).sum()
    }

    #[test]
    fn phi1_matches_general_evaluation() {
        for z in [-1e5, -30.0, -1.0, -0.3, -1e-9, 0.0, 1e-7, 0.5, 2.0, 40.0] {
            assert_relative_eq!(phi1(z).unwrap(), phi_eval(1, z).unwrap(), max_relative = 1e-14);
        }
        assert!(phi1(f64::NAN).is_err());
    }

    #[test]
    fn values_at_zero() {
        assert_eq!(phi_eval(0, 0.0).unwrap(), 1.0);
        assert_relative_eq!(phi_eval(3, 0.0).unwrap(), 1.0 / 6.0, max_relative = 1e-16);
        for j in 0..=MAX_ORDER {
            assert_relative_eq!(phi_eval(j, 0.0).unwrap(), 1.0 / factorial(j), max_relative = 1e-16);
        }
    }

    #[test]
    fn closed_forms() {
        assert_relative_eq!(phi_eval(1, 1.0).unwrap(), 1.718281828459045, max_relative = 1e-15);
        // (e^-50 - 1 + 50) / 2500
        assert_relative_eq!(phi_eval(2, -50.0).unwrap(), 49.0 / 2500.0, max_relative = 1e-15);
        assert_relative_eq!(phi_eval(1, 3.0).unwrap(), (3f64.exp() - 1.0) / 3.0, max_relative = 1e-15);
    }

    #[test]
    fn errors() {
        assert_eq!(phi_eval(6, 0.0), Err(PhiError::OrderOutOfRange(6)));
        assert!(matches!(phi_eval(1, 800.0), Err(PhiError::ArgumentTooLarge(_))));
        assert_eq!(phi_eval(1, f64::NAN), Err(PhiError::NonFinite));
    }

    #[test]
    fn large_negative_asymptotics() {
        let p = phi_eval(1, -1e6).unwrap();
        assert!((9.99999e-7..=1.0e-6).contains(&p), "{p}");
        for z in [-10.0, -100.0, -1e3, -1e5] {
            let p = phi_eval(1, z).unwrap();
            assert!(p <= -1.0 / z && p > 0.0);
        }
    }

    #[test]
    fn batch_small() {
        assert_eq!(phi_eval_batch(1, &[0.0, 0.0]).unwrap(), vec![vec![1.0, 1.0], vec![1.0, 1.0]]);
        let row = &phi_eval_batch(1, &[1.0]).unwrap()[0];
        assert_relative_eq!(row[0], std::f64::consts::E, max_relative = 1e-15);
        assert_relative_eq!(row[1], std::f64::consts::E - 1.0, max_relative = 1e-15);
    }

    proptest! {
        #[test]
        fn taylor_consistency(z in -1.0f64..1.0, j in 0usize..=MAX_ORDER) {
            let got = phi_eval(j, z).unwrap();
            let want = taylor30(j, z);
            prop_assert!((got - want).abs() <= 1e-13 * want.abs(), "j={} z={} {} {}", j, z, got, want);
        }

        #[test]
        fn recurrence_holds(z in prop_oneof![-1e4f64..-1.0, 1.0f64..40.0], j in 0usize..MAX_ORDER) {
            let pj = phi_eval(j, z).unwrap();
            let pj1 = phi_eval(j + 1, z).unwrap();
            let lhs = (pj1 * z - pj + 1.0 / factorial(j)).abs();
            prop_assert!(lhs <= 1e-12 * pj.abs().max(1.0));
        }

        #[test]
        fn phi1_positive(z in -1e6f64..700.0) {
            prop_assert!(phi_eval(1, z).unwrap() > 0.0);
        }

        #[test]
        fn batch_matches_scalar(z in proptest::collection::vec(-200.0f64..50.0, 1..6)) {
            let rows = phi_eval_batch(MAX_ORDER, &z).unwrap();
            for (zi, row) in z.iter().zip(&rows) {
                for j in 0..=MAX_ORDER {
                    let s = phi_eval(j, *zi).unwrap();
                    prop_assert!((row[j] - s).abs() <= 1e-14 * s.abs());
                }
            }
        }
    }
}
