//! Newton iteration with a dense forward-difference Jacobian.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::split::ModelError;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewtonConfig {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_iter: usize,
    /// Relative perturbation of the finite-difference columns.
    pub fd_step_scale: f64,
}

impl Default for NewtonConfig {
    fn default() -> Self {
        Self {
            rel_tol: 1e-10,
            abs_tol: 1e-12,
            max_iter: 25,
            fd_step_scale: f64::EPSILON.sqrt(),
        }
    }
}

impl NewtonConfig {
    pub fn validate(&self) -> Result<(), NewtonError> {
        if !(self.rel_tol > 0.0 && self.abs_tol > 0.0 && self.fd_step_scale > 0.0) || self.max_iter == 0 {
            return Err(NewtonError::InvalidConfig);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NewtonError {
    #[error("newton did not converge after {iterations} iterations (residual {residual:e})")]
    NotConverged { iterations: usize, residual: f64 },
    #[error("singular jacobian at iteration {iterations}")]
    SingularJacobian { iterations: usize },
    #[error("invalid newton configuration")]
    InvalidConfig,
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct NewtonSolution {
    pub x: Vec<f64>,
    pub iterations: usize,
    pub residual: f64,
}

fn norm_inf(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Solves `residual(x) = 0` starting from `guess`.
///
/// Converged when `‖r(x)‖∞ ≤ abs_tol + rel_tol·‖r(guess)‖∞`, or when the
/// Newton update has shrunk to rounding level.
pub fn newton_solve<R>(mut residual: R, guess: &[f64], cfg: &NewtonConfig) -> Result<NewtonSolution, NewtonError>
where
    R: FnMut(&[f64], &mut [f64]) -> Result<(), ModelError>,
{
    cfg.validate()?;
    let n = guess.len();
    let mut x = guess.to_vec();
    let mut r = vec![0.0; n];
    residual(&x, &mut r)?;
    let tol = cfg.abs_tol + cfg.rel_tol * norm_inf(&r);
    let mut res_norm = norm_inf(&r);
    if res_norm <= tol {
        return Ok(NewtonSolution { x, iterations: 0, residual: res_norm });
    }

    let mut jac = DMatrix::<f64>::zeros(n, n);
    let mut xp = x.clone();
    let mut rp = vec![0.0; n];
    for iter in 1..=cfg.max_iter {
        for j in 0..n {
            let dx = cfg.fd_step_scale * x[j].abs().max(1.0);
            xp.copy_from_slice(&x);
            xp[j] += dx;
            let dx = xp[j] - x[j];
            residual(&xp, &mut rp)?;
            for i in 0..n {
                jac[(i, j)] = (rp[i] - r[i]) / dx;
            }
        }
        let rhs = DVector::from_iterator(n, r.iter().map(|v| -v));
        let delta = jac
            .clone()
            .lu()
            .solve(&rhs)
            .ok_or(NewtonError::SingularJacobian { iterations: iter })?;
        let mut step_norm: f64 = 0.0;
        for (xi, di) in x.iter_mut().zip(delta.iter()) {
            *xi += di;
            step_norm = step_norm.max(di.abs());
        }
        residual(&x, &mut r)?;
        res_norm = norm_inf(&r);
        if !res_norm.is_finite() {
            break;
        }
        if res_norm <= tol || step_norm <= 4.0 * f64::EPSILON * norm_inf(&x) {
            return Ok(NewtonSolution { x, iterations: iter, residual: res_norm });
        }
        if iter == cfg.max_iter {
            return Err(NewtonError::NotConverged { iterations: iter, residual: res_norm });
        }
    }
    Err(NewtonError::NotConverged { iterations: cfg.max_iter, residual: res_norm })
}
