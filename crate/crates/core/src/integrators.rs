//! Fixed-step time integrators for split systems.
//!
//! Stabilized explicit multistep schemes:
//! - `EAB_k`: exponential Adams–Bashforth, `y_{n+1} = e^{a_n h} y_n + h Σ γ_{nj} φ_{j+1}(a_n h)`
//!   where `γ_{nj}` are backward differences of the remainders `c_n^{n-j}`.
//! - `RL_k`: Rush–Larsen, `y_{n+1} = y_n + h φ_1(α_n h)(α_n y_n + β_n)` with
//!   extrapolated stabilizer `α_n` and source `β_n`.
//!
//! Classical comparison schemes: `AB_2`, `AB_3`, `RK_4`, Crank–Nicolson and
//! `BDF_3`, `BDF_4` (implicit ones solved by [`newton_solve`]).
//!
//! Multistep schemes of order `k` take their first `k-1` states from `RK_4`
//! run with [`BOOTSTRAP_SUBSTEPS`] substeps per mesh interval.

use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;
use std::time::{Duration, Instant};

use thiserror::Error;

use crate::newton::{newton_solve, NewtonConfig, NewtonError};
use crate::phi::{phi1, phi_sequence, PhiError};
use crate::split::{eval_full_rhs_into, ModelError, SplitSystem, TimeMesh, Trajectory};

pub const BOOTSTRAP_SUBSTEPS: usize = 10;

/// Smallest accepted step count.
pub const MIN_STEPS: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Family {
    Eab,
    Rl,
    Ab,
    Rk,
    Cn,
    Bdf,
}

impl Family {
    pub fn label(self) -> &'static str {
        match self {
            Family::Eab => "EAB",
            Family::Rl => "RL",
            Family::Ab => "AB",
            Family::Rk => "RK",
            Family::Cn => "CN",
            Family::Bdf => "BDF",
        }
    }
}

impl FromStr for Family {
    type Err = SchemeError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "eab" => Ok(Family::Eab),
            "rl" => Ok(Family::Rl),
            "ab" => Ok(Family::Ab),
            "rk" => Ok(Family::Rk),
            "cn" => Ok(Family::Cn),
            "bdf" => Ok(Family::Bdf),
            _ => Err(SchemeError::UnknownScheme(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SchemeError {
    #[error("unsupported scheme {family}_{order}")]
    Unsupported { family: &'static str, order: usize },
    #[error("unknown scheme `{0}`")]
    UnknownScheme(String),
    #[error("step count {0} too small (need at least {MIN_STEPS})")]
    TooFewSteps(usize),
    #[error("history holds {got} entries, scheme needs {want}")]
    HistoryDepth { got: usize, want: usize },
    #[error(transparent)]
    Newton(#[from] NewtonError),
}

/// One scheme (family and order) plus solver parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SchemeSpec {
    family: Family,
    order: usize,
    pub newton: NewtonConfig,
}

impl SchemeSpec {
    pub fn new(family: Family, order: usize) -> Result<Self, SchemeError> {
        let ok = match family {
            Family::Eab | Family::Rl => (1..=4).contains(&order),
            Family::Ab => order == 2 || order == 3,
            Family::Rk => order == 4,
            Family::Cn => order == 2,
            Family::Bdf => order == 3 || order == 4,
        };
        if !ok {
            return Err(SchemeError::Unsupported { family: family.label(), order });
        }
        Ok(Self { family, order, newton: NewtonConfig::default() })
    }

    pub fn with_newton(mut self, newton: NewtonConfig) -> Result<Self, SchemeError> {
        newton.validate()?;
        self.newton = newton;
        Ok(self)
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn is_implicit(&self) -> bool {
        matches!(self.family, Family::Cn | Family::Bdf)
    }

    /// Past states a step needs besides the current one.
    pub fn history_depth(&self) -> usize {
        match self.family {
            Family::Rk | Family::Cn => 0,
            _ => self.order - 1,
        }
    }

    /// The thirteen distinct schemes: exponential Euler (`EAB_1`, identical to
    /// `RL_1`), `EAB_2..4`, `RL_2..4`, `AB_2`, `AB_3`, `RK_4`, `CN`, `BDF_3`,
    /// `BDF_4`.
    pub fn catalogue() -> Vec<SchemeSpec> {
        let mut all = vec![];
        all.extend((1..=4).map(|k| (Family::Eab, k)));
        all.extend((2..=4).map(|k| (Family::Rl, k)));
        all.extend([(Family::Ab, 2), (Family::Ab, 3), (Family::Rk, 4), (Family::Cn, 2), (Family::Bdf, 3), (Family::Bdf, 4)]);
        all.into_iter().map(|(f, k)| SchemeSpec::new(f, k).expect("catalogue entry")).collect()
    }
}

impl fmt::Display for SchemeSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.family {
            Family::Cn => write!(f, "CN"),
            fam => write!(f, "{}_{}", fam.label(), self.order),
        }
    }
}

/// Accepts `EAB_2`, `eab2`, `rl-3`, `RK4`, `CN`, `BDF_4`, and `EE` for
/// exponential Euler.
impl FromStr for SchemeSpec {
    type Err = SchemeError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let lower = s.trim().to_ascii_lowercase();
        match lower.as_str() {
            "cn" => return SchemeSpec::new(Family::Cn, 2),
            "ee" | "expeuler" => return SchemeSpec::new(Family::Eab, 1),
            _ => {}
        }
        let split = lower.find(|c: char| c.is_ascii_digit()).ok_or_else(|| SchemeError::UnknownScheme(s.into()))?;
        let family: Family = lower[..split].trim_end_matches(['_', '-']).parse().map_err(|_| SchemeError::UnknownScheme(s.into()))?;
        let order = lower[split..].parse().map_err(|_| SchemeError::UnknownScheme(s.into()))?;
        SchemeSpec::new(family, order)
    }
}

/// Why a step was rejected.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum StepError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Phi(#[from] PhiError),
    #[error(transparent)]
    Newton(#[from] NewtonError),
    #[error("state left the admissible region")]
    Inadmissible,
}

/// Data stored for one past time level `t_{n-j}`.
#[derive(Debug, Clone, PartialEq)]
pub struct HistoryEntry {
    pub t: f64,
    pub y: Vec<f64>,
    /// Stabilized diagonal `a(t, y)`, length `P`.
    pub a: Vec<f64>,
    /// Nonlinear part `b(t, y)`, length `N`.
    pub b: Vec<f64>,
}

impl HistoryEntry {
    pub fn evaluate<S: SplitSystem + ?Sized>(sys: &S, t: f64, y: &[f64]) -> Result<Self, ModelError> {
        let mut entry = HistoryEntry {
            t,
            y: y.to_vec(),
            a: vec![0.0; sys.stabilized_count()],
            b: vec![0.0; sys.dim()],
        };
        entry.refresh(sys, t, y)?;
        Ok(entry)
    }

    fn refresh<S: SplitSystem + ?Sized>(&mut self, sys: &S, t: f64, y: &[f64]) -> Result<(), ModelError> {
        self.t = t;
        self.y.copy_from_slice(y);
        sys.eval_split(t, y, &mut self.a, &mut self.b);
        for v in [&self.a, &self.b] {
            if let Some(component) = v.iter().position(|x| !x.is_finite()) {
                return Err(ModelError::NonFinite { t, component });
            }
        }
        Ok(())
    }

    /// `F = a y + b` at this level.
    fn rhs(&self, i: usize) -> f64 {
        self.a.get(i).map_or(0.0, |a| a * self.y[i]) + self.b[i]
    }
}

/// Past levels, most recent first.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct MultistepHistory {
    entries: VecDeque<HistoryEntry>,
}

impl MultistepHistory {
    pub fn new() -> Self {
        Self::default()
    }

    /// Builds a history from entries ordered most recent first.
    pub fn from_entries(entries: Vec<HistoryEntry>) -> Self {
        Self { entries: entries.into() }
    }

    pub fn depth(&self) -> usize {
        self.entries.len()
    }

    pub fn get(&self, j: usize) -> &HistoryEntry {
        &self.entries[j]
    }

    pub fn iter(&self) -> impl Iterator<Item = &HistoryEntry> {
        self.entries.iter()
    }

    /// Pushes a new most-recent level, keeping at most `capacity` levels. The
    /// oldest entry's buffers are recycled.
    fn advance<S: SplitSystem + ?Sized>(
        &mut self,
        sys: &S,
        t: f64,
        y: &[f64],
        capacity: usize,
        evaluate: bool,
    ) -> Result<(), ModelError> {
        let mut entry = if self.entries.len() >= capacity {
            self.entries.pop_back().expect("capacity is at least one")
        } else {
            HistoryEntry {
                t,
                y: y.to_vec(),
                a: vec![0.0; sys.stabilized_count()],
                b: vec![0.0; sys.dim()],
            }
        };
        if evaluate {
            entry.refresh(sys, t, y)?;
        } else {
            entry.t = t;
            entry.y.copy_from_slice(y);
        }
        self.entries.push_front(entry);
        Ok(())
    }
}

/// Table of EAB coefficients for one component: `γ_0..γ_{k-1}` from the
/// remainders `c^n, c^{n-1}, ..`.
fn eab_gamma(k: usize, c: &[f64; 4]) -> [f64; 4] {
    match k {
        1 => [c[0], 0.0, 0.0, 0.0],
        2 => [c[0], c[0] - c[1], 0.0, 0.0],
        3 => [c[0], 1.5 * c[0] - 2.0 * c[1] + 0.5 * c[2], c[0] - 2.0 * c[1] + c[2], 0.0],
        4 => [
            c[0],
            11.0 / 6.0 * c[0] - 3.0 * c[1] + 1.5 * c[2] - c[3] / 3.0,
            2.0 * c[0] - 5.0 * c[1] + 4.0 * c[2] - c[3],
            c[0] - 3.0 * c[1] + 3.0 * c[2] - c[3],
        ],
        _ => unreachable!("EAB order checked by caller"),
    }
}

/// `γ_{n0}..γ_{n,k-1}` for whole remainder vectors `c_n^n..c_n^{n-k+1}`.
pub fn eab_coefficients(k: usize, remainders: &[&[f64]]) -> Result<Vec<Vec<f64>>, SchemeError> {
    if !(1..=4).contains(&k) {
        return Err(SchemeError::Unsupported { family: "EAB", order: k });
    }
    if remainders.len() != k {
        return Err(SchemeError::HistoryDepth { got: remainders.len(), want: k });
    }
    let n = remainders[0].len();
    let mut out = vec![vec![0.0; n]; k];
    for i in 0..n {
        let mut c = [0.0; 4];
        for (j, r) in remainders.iter().enumerate() {
            c[j] = r[i];
        }
        let g = eab_gamma(k, &c);
        for j in 0..k {
            out[j][i] = g[j];
        }
    }
    Ok(out)
}

/// Stabilizer weights for one component; `a` and `b` ordered `n, n-1, ..`.
#[inline]
fn rl_alpha_beta(k: usize, h: f64, a: &[f64; 4], b: &[f64; 4]) -> (f64, f64) {
    const TWELFTH: f64 = 1.0 / 12.0;
    const TWENTY_FOURTH: f64 = 1.0 / 24.0;
    match k {
        1 => (a[0], b[0]),
        2 => (1.5 * a[0] - 0.5 * a[1], 1.5 * b[0] - 0.5 * b[1]),
        3 => (
            (23.0 * a[0] - 16.0 * a[1] + 5.0 * a[2]) * TWELFTH,
            ((23.0 * b[0] - 16.0 * b[1] + 5.0 * b[2]) + h * (a[0] * b[1] - a[1] * b[0])) * TWELFTH,
        ),
        4 => (
            (55.0 * a[0] - 59.0 * a[1] + 37.0 * a[2] - 9.0 * a[3]) * TWENTY_FOURTH,
            (55.0 * b[0] - 59.0 * b[1] + 37.0 * b[2] - 9.0 * b[3]) * TWENTY_FOURTH
                + h * TWELFTH * (a[0] * (3.0 * b[1] - b[2]) - (3.0 * a[1] - a[2]) * b[0]),
        ),
        _ => unreachable!("RL order checked by caller"),
    }
}

/// `(α_n, β_n)` of `RL_k` from histories `a_n, a_{n-1}, ..` (length `P` each)
/// and `b_n, b_{n-1}, ..` (length `N` each). Components past `P` use `a = 0`.
pub fn rl_coefficients(
    k: usize,
    h: f64,
    a_hist: &[&[f64]],
    b_hist: &[&[f64]],
) -> Result<(Vec<f64>, Vec<f64>), SchemeError> {
    if !(1..=4).contains(&k) {
        return Err(SchemeError::Unsupported { family: "RL", order: k });
    }
    for got in [a_hist.len(), b_hist.len()] {
        if got != k {
            return Err(SchemeError::HistoryDepth { got, want: k });
        }
    }
    let p = a_hist[0].len();
    let n = b_hist[0].len();
    let mut alpha = vec![0.0; p];
    let mut beta = vec![0.0; n];
    for i in 0..n {
        let mut av = [0.0; 4];
        let mut bv = [0.0; 4];
        for j in 0..k {
            if i < p {
                av[j] = a_hist[j][i];
            }
            bv[j] = b_hist[j][i];
        }
        let (al, be) = rl_alpha_beta(k, h, &av, &bv);
        if i < p {
            alpha[i] = al;
        }
        beta[i] = be;
    }
    Ok((alpha, beta))
}

fn check_depth(hist: &MultistepHistory, want: usize) -> Result<(), SchemeError> {
    if hist.depth() < want {
        return Err(SchemeError::HistoryDepth { got: hist.depth(), want });
    }
    Ok(())
}

/// `EAB_k` update from levels `hist[0] = n, hist[1] = n-1, ..`.
fn eab_update(k: usize, h: f64, hist: &MultistepHistory, out: &mut [f64]) -> Result<(), StepError> {
    let cur = hist.get(0);
    let p = cur.a.len();
    let mut phi = [0.0; 5];
    let mut c = [0.0; 4];
    for (i, o) in out.iter_mut().enumerate() {
        let a_n = if i < p { cur.a[i] } else { 0.0 };
        for (j, cj) in c.iter_mut().enumerate().take(k) {
            let e = hist.get(j);
            *cj = if i < p { e.b[i] + (e.a[i] - a_n) * e.y[i] } else { e.b[i] };
        }
        let gamma = eab_gamma(k, &c);
        if i < p {
            phi_sequence(k, a_n * h, &mut phi)?;
        } else {
            phi = [1.0, 1.0, 0.5, 1.0 / 6.0, 1.0 / 24.0];
        }
        let mut acc = 0.0;
        for j in (0..k).rev() {
            acc += gamma[j] * phi[j + 1];
        }
        *o = phi[0] * cur.y[i] + h * acc;
    }
    Ok(())
}

/// `RL_k` update from levels `hist[0] = n, hist[1] = n-1, ..`.
fn rl_update(k: usize, h: f64, hist: &MultistepHistory, out: &mut [f64]) -> Result<(), StepError> {
    let cur = hist.get(0);
    let p = cur.a.len();
    let mut av = [0.0; 4];
    let mut bv = [0.0; 4];
    for (i, o) in out.iter_mut().enumerate() {
        for j in 0..k {
            let e = hist.get(j);
            av[j] = if i < p { e.a[i] } else { 0.0 };
            bv[j] = e.b[i];
        }
        let (alpha, beta) = rl_alpha_beta(k, h, &av, &bv);
        let y = cur.y[i];
        *o = if i < p {
            y + h * phi1(alpha * h)? * (alpha * y + beta)
        } else {
            y + h * beta
        };
    }
    Ok(())
}

fn ab_update(k: usize, h: f64, hist: &MultistepHistory, out: &mut [f64]) {
    let cur = hist.get(0);
    for (i, o) in out.iter_mut().enumerate() {
        let incr = match k {
            2 => 1.5 * cur.rhs(i) - 0.5 * hist.get(1).rhs(i),
            3 => (23.0 * cur.rhs(i) - 16.0 * hist.get(1).rhs(i) + 5.0 * hist.get(2).rhs(i)) / 12.0,
            _ => unreachable!("AB order checked by SchemeSpec"),
        };
        *o = cur.y[i] + h * incr;
    }
}

/// Scratch buffers for explicit Runge–Kutta stages.
struct RkWork {
    k: [Vec<f64>; 4],
    tmp: Vec<f64>,
    a: Vec<f64>,
}

impl RkWork {
    fn new(n: usize, p: usize) -> Self {
        Self {
            k: [vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]],
            tmp: vec![0.0; n],
            a: vec![0.0; p],
        }
    }
}

/// Classical RK4 step. `k1` is taken from `first` when the caller already has
/// `F(t, y)`.
fn rk4_step<S: SplitSystem + ?Sized>(
    sys: &S,
    t: f64,
    h: f64,
    y: &[f64],
    first: Option<&HistoryEntry>,
    w: &mut RkWork,
    out: &mut [f64],
) -> Result<(), ModelError> {
    let n = y.len();
    match first {
        Some(e) => {
            for i in 0..n {
                w.k[0][i] = e.rhs(i);
            }
        }
        None => eval_full_rhs_into(sys, t, y, &mut w.a, &mut w.k[0])?,
    }
    let stages = [(0.5, 0.5), (0.5, 0.5), (1.0, 1.0)];
    for (s, (ct, cy)) in stages.iter().enumerate() {
        for i in 0..n {
            w.tmp[i] = y[i] + cy * h * w.k[s][i];
        }
        let (head, tail) = w.k.split_at_mut(s + 1);
        let _ = head;
        eval_full_rhs_into(sys, t + ct * h, &w.tmp, &mut w.a, &mut tail[0])?;
    }
    for i in 0..n {
        out[i] = y[i] + h / 6.0 * (w.k[0][i] + 2.0 * w.k[1][i] + 2.0 * w.k[2][i] + w.k[3][i]);
    }
    Ok(())
}

/// Solves `x - base - βh F(t_{n+1}, x) = 0` with the previous state as guess.
fn implicit_stage<S: SplitSystem + ?Sized>(
    sys: &S,
    t_next: f64,
    beta_h: f64,
    base: &[f64],
    guess: &[f64],
    cfg: &NewtonConfig,
    out: &mut [f64],
) -> Result<usize, NewtonError> {
    let mut a = vec![0.0; sys.stabilized_count()];
    let residual = |x: &[f64], r: &mut [f64]| -> Result<(), ModelError> {
        eval_full_rhs_into(sys, t_next, x, &mut a, r)?;
        for i in 0..x.len() {
            r[i] = x[i] - base[i] - beta_h * r[i];
        }
        Ok(())
    };
    let sol = newton_solve(residual, guess, cfg)?;
    out.copy_from_slice(&sol.x);
    Ok(sol.iterations)
}

/// Statistics of the implicit solves of one run.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct NewtonStats {
    pub solves: usize,
    pub iterations: usize,
}

/// A stepping engine holding the history and scratch space of one run.
struct Stepper<'s, S: SplitSystem + ?Sized> {
    sys: &'s S,
    spec: SchemeSpec,
    h: f64,
    hist: MultistepHistory,
    rk: RkWork,
    base: Vec<f64>,
    stats: NewtonStats,
}

impl<'s, S: SplitSystem + ?Sized> Stepper<'s, S> {
    fn new(sys: &'s S, spec: SchemeSpec, h: f64) -> Self {
        let n = sys.dim();
        Self {
            sys,
            spec,
            h,
            hist: MultistepHistory::new(),
            rk: RkWork::new(n, sys.stabilized_count()),
            base: vec![0.0; n],
            stats: NewtonStats::default(),
        }
    }

    fn capacity(&self) -> usize {
        self.spec.history_depth() + 1
    }

    /// BDF only ever reads past states.
    fn needs_split(&self) -> bool {
        self.spec.family != Family::Bdf
    }

    fn record(&mut self, t: f64, y: &[f64]) -> Result<(), ModelError> {
        let cap = self.capacity();
        let eval = self.needs_split();
        self.hist.advance(self.sys, t, y, cap, eval)
    }

    /// Advances from `hist[0]` to the next node.
    fn step(&mut self, out: &mut [f64]) -> Result<(), StepError> {
        let h = self.h;
        let k = self.spec.order;
        match self.spec.family {
            Family::Eab => eab_update(k, h, &self.hist, out)?,
            Family::Rl => rl_update(k, h, &self.hist, out)?,
            Family::Ab => ab_update(k, h, &self.hist, out),
            Family::Rk => {
                let cur = self.hist.get(0);
                rk4_step(self.sys, cur.t, h, &cur.y, Some(cur), &mut self.rk, out)?;
            }
            Family::Cn => {
                let cur = self.hist.get(0);
                for i in 0..out.len() {
                    self.base[i] = cur.y[i] + 0.5 * h * cur.rhs(i);
                }
                let it = implicit_stage(self.sys, cur.t + h, 0.5 * h, &self.base, &cur.y, &self.spec.newton, out)?;
                self.stats.solves += 1;
                self.stats.iterations += it;
            }
            Family::Bdf => {
                let (weights, beta): (&[f64], f64) = match k {
                    3 => (&[18.0 / 11.0, -9.0 / 11.0, 2.0 / 11.0], 6.0 / 11.0),
                    4 => (&[48.0 / 25.0, -36.0 / 25.0, 16.0 / 25.0, -3.0 / 25.0], 12.0 / 25.0),
                    _ => unreachable!("BDF order checked by SchemeSpec"),
                };
                for i in 0..out.len() {
                    self.base[i] = weights.iter().enumerate().map(|(j, w)| w * self.hist.get(j).y[i]).sum();
                }
                let cur = self.hist.get(0);
                let it = implicit_stage(self.sys, cur.t + h, beta * h, &self.base, &cur.y, &self.spec.newton, out)?;
                self.stats.solves += 1;
                self.stats.iterations += it;
            }
        }
        Ok(())
    }
}

/// Runs `steps` RK4 substeps of size `h/steps` from `(t, y)`.
fn rk4_substeps<S: SplitSystem + ?Sized>(sys: &S, t: f64, h: f64, steps: usize, y: &[f64]) -> Result<Vec<f64>, ModelError> {
    let dt = h / steps as f64;
    let mut w = RkWork::new(sys.dim(), sys.stabilized_count());
    let mut cur = y.to_vec();
    let mut next = y.to_vec();
    for s in 0..steps {
        rk4_step(sys, t + s as f64 * dt, dt, &cur, None, &mut w, &mut next)?;
        std::mem::swap(&mut cur, &mut next);
    }
    Ok(cur)
}

fn check_history(spec: &SchemeSpec, hist: &MultistepHistory) -> Result<(), SchemeError> {
    check_depth(hist, spec.history_depth())
}

/// One standalone step with explicit history. `past` holds levels
/// `n-1, n-2, ..` (most recent first); the current level is evaluated here.
fn single_step<S: SplitSystem + ?Sized>(
    sys: &S,
    spec: SchemeSpec,
    h: f64,
    t_n: f64,
    y_n: &[f64],
    past: &MultistepHistory,
) -> Result<Vec<f64>, StepError> {
    check_history(&spec, past).map_err(|_| StepError::Inadmissible)?;
    let mut stepper = Stepper::new(sys, spec, h);
    let mut entries = vec![HistoryEntry::evaluate(sys, t_n, y_n)?];
    entries.extend(past.iter().take(spec.history_depth()).cloned());
    stepper.hist = MultistepHistory::from_entries(entries);
    let mut out = vec![0.0; sys.dim()];
    stepper.step(&mut out)?;
    if let Some(component) = out.iter().position(|v| !v.is_finite()) {
        return Err(ModelError::NonFinite { t: t_n + h, component }.into());
    }
    Ok(out)
}

/// One `EAB_k` step from `(t_n, y_n)`; `past` holds the `k-1` previous levels.
pub fn eab_step<S: SplitSystem + ?Sized>(
    sys: &S,
    k: usize,
    h: f64,
    t_n: f64,
    y_n: &[f64],
    past: &MultistepHistory,
) -> Result<Vec<f64>, StepError> {
    let spec = SchemeSpec::new(Family::Eab, k).map_err(|_| StepError::Inadmissible)?;
    single_step(sys, spec, h, t_n, y_n, past)
}

/// One `RL_k` step from `(t_n, y_n)`; `past` holds the `k-1` previous levels.
pub fn rl_step<S: SplitSystem + ?Sized>(
    sys: &S,
    k: usize,
    h: f64,
    t_n: f64,
    y_n: &[f64],
    past: &MultistepHistory,
) -> Result<Vec<f64>, StepError> {
    let spec = SchemeSpec::new(Family::Rl, k).map_err(|_| StepError::Inadmissible)?;
    single_step(sys, spec, h, t_n, y_n, past)
}

/// One step of any scheme, classical ones included.
pub fn classical_step<S: SplitSystem + ?Sized>(
    sys: &S,
    spec: SchemeSpec,
    h: f64,
    t_n: f64,
    y_n: &[f64],
    past: &MultistepHistory,
) -> Result<Vec<f64>, StepError> {
    single_step(sys, spec, h, t_n, y_n, past)
}

/// Where and why a run stopped early.
#[derive(Debug, Clone, PartialEq)]
pub struct Divergence {
    /// Index `n` of the first node that could not be produced.
    pub index: usize,
    pub cause: StepError,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StatusReport {
    pub divergence: Option<Divergence>,
    pub newton: NewtonStats,
    /// Wall-clock time of the time stepping (bootstrap included).
    pub elapsed: Duration,
}

impl StatusReport {
    pub fn is_stable(&self) -> bool {
        self.divergence.is_none()
    }
}

/// Result of [`integrate`]. On divergence `trajectory` holds the nodes that
/// were computed before the failure.
#[derive(Debug, Clone)]
pub struct Integration {
    pub mesh: TimeMesh,
    pub states: Vec<f64>,
    pub dim: usize,
    pub status: StatusReport,
}

impl Integration {
    /// The full trajectory, if the run reached `T`.
    pub fn trajectory(&self) -> Option<Trajectory> {
        self.status
            .is_stable()
            .then(|| Trajectory::from_flat(self.mesh, self.dim, self.states.clone()))
    }

    pub fn into_trajectory(self) -> Option<Trajectory> {
        if self.status.is_stable() {
            Some(Trajectory::from_flat(self.mesh, self.dim, self.states))
        } else {
            None
        }
    }

    /// Number of nodes computed.
    pub fn computed_nodes(&self) -> usize {
        self.states.len() / self.dim
    }

    pub fn last_state(&self) -> &[f64] {
        &self.states[self.states.len() - self.dim..]
    }
}

fn admissible<S: SplitSystem + ?Sized>(sys: &S, t: f64, y: &[f64]) -> Result<(), StepError> {
    if let Some(component) = y.iter().position(|v| !v.is_finite()) {
        return Err(ModelError::NonFinite { t, component }.into());
    }
    if !sys.is_admissible(y) {
        return Err(StepError::Inadmissible);
    }
    Ok(())
}

/// Integrates `sys` over `[0, T]` on the uniform mesh with `m` steps.
pub fn integrate<S: SplitSystem + ?Sized>(sys: &S, spec: &SchemeSpec, m: usize) -> Result<Integration, SchemeError> {
    if m < MIN_STEPS {
        return Err(SchemeError::TooFewSteps(m));
    }
    spec.newton.validate()?;
    let mesh = TimeMesh::new(sys.horizon(), m);
    let h = mesh.step_size();
    let n = sys.dim();
    let y0 = sys.initial_state();
    let mut states = Vec::with_capacity((m + 1) * n);
    states.extend_from_slice(&y0);

    let start = Instant::now();
    let mut stepper = Stepper::new(sys, *spec, h);
    let fail = |index: usize, cause: StepError, states: Vec<f64>, stepper: &Stepper<S>, start: Instant| Integration {
        mesh,
        states,
        dim: n,
        status: StatusReport {
            divergence: Some(Divergence { index, cause }),
            newton: stepper.stats,
            elapsed: start.elapsed(),
        },
    };

    if let Err(e) = stepper.record(mesh.node(0), &y0) {
        return Ok(fail(0, e.into(), states, &stepper, start));
    }
    let mut y = y0;
    for j in 0..spec.history_depth() {
        let next = match rk4_substeps(sys, mesh.node(j), h, BOOTSTRAP_SUBSTEPS, &y) {
            Ok(v) => v,
            Err(e) => return Ok(fail(j + 1, e.into(), states, &stepper, start)),
        };
        if let Err(e) = admissible(sys, mesh.node(j + 1), &next).and_then(|_| Ok(stepper.record(mesh.node(j + 1), &next)?)) {
            return Ok(fail(j + 1, e, states, &stepper, start));
        }
        states.extend_from_slice(&next);
        y = next;
    }

    let mut next = vec![0.0; n];
    for step in spec.history_depth()..m {
        let t_next = mesh.node(step + 1);
        let res = stepper
            .step(&mut next)
            .and_then(|_| admissible(sys, t_next, &next))
            .and_then(|_| if step + 1 < m { Ok(stepper.record(t_next, &next)?) } else { Ok(()) });
        if let Err(e) = res {
            return Ok(fail(step + 1, e, states, &stepper, start));
        }
        states.extend_from_slice(&next);
    }
    let elapsed = start.elapsed();
    Ok(Integration {
        mesh,
        states,
        dim: n,
        status: StatusReport { divergence: None, newton: stepper.stats, elapsed },
    })
}
