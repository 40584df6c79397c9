//! Split ODE systems `dy/dt = a(t,y) y + b(t,y)` with a diagonal stabilized
//! block, plus the uniform mesh and trajectory containers.
//!
//! The linear part `a` acts only on the leading `P` components
//! (`stabilized_count`); components `P..N` are treated as having `a = 0`.

use thiserror::Error;

/// Failure of a model evaluation (non-finite output).
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("non-finite value in component {component} at t = {t}")]
    NonFinite { t: f64, component: usize },
    #[error("rate function overflow at t = {t}")]
    Overflow { t: f64 },
}

/// A problem `dy/dt = a(t,y) y + b(t,y)` whose linear part is diagonal on the
/// first `stabilized_count()` components and zero elsewhere.
///
/// Implementations must be pure: identical inputs give identical outputs, and
/// evaluation may happen from several threads at once.
pub trait SplitSystem: Sync {
    /// State dimension `N`.
    fn dim(&self) -> usize;

    /// Number `P` of leading components carrying a nonzero linear part.
    fn stabilized_count(&self) -> usize;

    /// Writes the diagonal of the stabilized block (`P` values) into `a` and
    /// the nonlinear part (`N` values) into `b`.
    fn eval_split(&self, t: f64, y: &[f64], a: &mut [f64], b: &mut [f64]);

    /// Diagonal of the stabilized block only.
    fn eval_a(&self, t: f64, y: &[f64], a: &mut [f64]) {
        let mut b = vec![0.0; self.dim()];
        self.eval_split(t, y, a, &mut b);
    }

    /// Nonlinear part only.
    fn eval_b(&self, t: f64, y: &[f64], b: &mut [f64]) {
        let mut a = vec![0.0; self.stabilized_count()];
        self.eval_split(t, y, &mut a, b);
    }

    fn initial_state(&self) -> Vec<f64>;

    /// Final time `T`.
    fn horizon(&self) -> f64;

    /// Extra admissibility test applied by the integrators after every step
    /// (finiteness is always checked). Models use it as a blow-up guard.
    fn is_admissible(&self, _y: &[f64]) -> bool {
        true
    }

    /// Component used for error measurement and biomarkers; the last one by
    /// default (the membrane potential for ionic models).
    fn observed_component(&self) -> usize {
        self.dim() - 1
    }
}

fn check_finite(t: f64, v: &[f64]) -> Result<(), ModelError> {
    match v.iter().position(|x| !x.is_finite()) {
        Some(component) => Err(ModelError::NonFinite { t, component }),
        None => Ok(()),
    }
}

/// Assembles `F(t,y) = a(t,y) y + b(t,y)` into `out`, using scratch space `a`
/// of length `P`.
pub fn eval_full_rhs_into<S: SplitSystem + ?Sized>(
    sys: &S,
    t: f64,
    y: &[f64],
    a: &mut [f64],
    out: &mut [f64],
) -> Result<(), ModelError> {
    sys.eval_split(t, y, a, out);
    for ((o, ai), yi) in out.iter_mut().zip(a.iter()).zip(y) {
        *o += ai * yi;
    }
    check_finite(t, out)
}

/// `F(t,y) = a(t,y) y + b(t,y)` with the zero-block convention on `P..N`.
pub fn eval_full_rhs<S: SplitSystem + ?Sized>(
    sys: &S,
    t: f64,
    y: &[f64],
) -> Result<Vec<f64>, ModelError> {
    let mut a = vec![0.0; sys.stabilized_count()];
    let mut out = vec![0.0; sys.dim()];
    eval_full_rhs_into(sys, t, y, &mut a, &mut out)?;
    Ok(out)
}

/// The remainder `c_n(t,y) = (a(t,y) - alpha) y + b(t,y)` left over once the
/// stabilizer `alpha` (frozen diagonal, `P` values) is pulled out.
pub fn stabilized_remainder<S: SplitSystem + ?Sized>(
    sys: &S,
    t: f64,
    y: &[f64],
    alpha: &[f64],
) -> Result<Vec<f64>, ModelError> {
    let mut a = vec![0.0; sys.stabilized_count()];
    let mut out = vec![0.0; sys.dim()];
    sys.eval_split(t, y, &mut a, &mut out);
    for i in 0..a.len() {
        out[i] += (a[i] - alpha[i]) * y[i];
    }
    check_finite(t, &out)?;
    Ok(out)
}

/// Uniform mesh `t_n = n h`, `n = 0..=m`, on `[0, T]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeMesh {
    steps: usize,
    horizon: f64,
}

impl TimeMesh {
    pub fn new(horizon: f64, steps: usize) -> Self {
        assert!(steps > 0, "mesh needs at least one step");
        assert!(horizon > 0.0 && horizon.is_finite(), "horizon must be positive");
        Self { steps, horizon }
    }

    /// Number of steps `m`.
    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn step_size(&self) -> f64 {
        self.horizon / self.steps as f64
    }

    /// Node `t_n`. The last node is exactly `T`.
    pub fn node(&self, n: usize) -> f64 {
        if n == self.steps {
            self.horizon
        } else {
            n as f64 * self.step_size()
        }
    }

    /// Whether `fine` shares all of this mesh's nodes, i.e. `fine.m = q m`.
    /// Returns the refinement factor `q`.
    pub fn refinement_factor(&self, fine: &TimeMesh) -> Option<usize> {
        if fine.horizon != self.horizon || !fine.steps.is_multiple_of(self.steps) {
            return None;
        }
        Some(fine.steps / self.steps)
    }
}

/// Numerical solution `(y^n)` on a uniform mesh, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    mesh: TimeMesh,
    dim: usize,
    data: Vec<f64>,
}

impl Trajectory {
    /// Builds a trajectory from row-major states; `data.len()` must be
    /// `(m+1)·dim`.
    pub fn from_flat(mesh: TimeMesh, dim: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), (mesh.steps() + 1) * dim, "state count must be m+1");
        Self { mesh, dim, data }
    }

    pub fn from_states(mesh: TimeMesh, states: &[Vec<f64>]) -> Self {
        let dim = states.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(states.len() * dim);
        for s in states {
            assert_eq!(s.len(), dim, "ragged states");
            data.extend_from_slice(s);
        }
        Self::from_flat(mesh, dim, data)
    }

    pub fn mesh(&self) -> &TimeMesh {
        &self.mesh
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim.max(1)
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn state(&self, n: usize) -> &[f64] {
        &self.data[n * self.dim..(n + 1) * self.dim]
    }

    pub fn states(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.dim)
    }

    /// One component across all nodes.
    pub fn component(&self, i: usize) -> Vec<f64> {
        self.states().map(|s| s[i]).collect()
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.data
    }
}
