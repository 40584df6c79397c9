//! Beeler–Reuter (1977) ventricular myocyte model in split form.
//!
//! State layout (`N = 8`, `P = 6`):
//!
//! | index | symbol | unit |
//! |-------|--------|------|
//! | 0..6  | gates `m, h, j, d, f, x1` | – |
//! | 6     | intracellular calcium `[Ca]_i` | mol/L |
//! | 7     | membrane potential `V` | mV |
//!
//! Gates obey `dW/dt = α_W (1 - W) - β_W W`, split as `a = -(α_W + β_W)`
//! (that is `-1/τ_W`) and `b = α_W` (that is `W_∞/τ_W`). Calcium and voltage
//! carry no stabilization.
//!
//! Rate functions share the form
//! `(C1 e^{C2 (V + C3)} + C4 (V + C5)) / (e^{C6 (V + C3)} + C7)`
//! with the constants of Beeler & Reuter, J. Physiol. 268 (1977), Table 1:
//!
//! | rate | C1 | C2 | C3 | C4 | C5 | C6 | C7 |
//! |------|----|----|----|----|----|----|----|
//! | α_x1 | 0.0005 | 0.083 | 50 | 0 | 0 | 0.057 | 1 |
//! | β_x1 | 0.0013 | -0.06 | 20 | 0 | 0 | -0.04 | 1 |
//! | α_m  | 0 | 0 | 47 | -1 | 47 | -0.1 | -1 |
//! | β_m  | 40 | -0.056 | 72 | 0 | 0 | 0 | 0 |
//! | α_h  | 0.126 | -0.25 | 77 | 0 | 0 | 0 | 0 |
//! | β_h  | 1.7 | 0 | 22.5 | 0 | 0 | -0.082 | 1 |
//! | α_j  | 0.055 | -0.25 | 78 | 0 | 0 | -0.2 | 1 |
//! | β_j  | 0.3 | 0 | 32 | 0 | 0 | -0.1 | 1 |
//! | α_d  | 0.095 | -0.01 | -5 | 0 | 0 | -0.072 | 1 |
//! | β_d  | 0.07 | -0.017 | 44 | 0 | 0 | 0.05 | 1 |
//! | α_f  | 0.012 | -0.008 | 28 | 0 | 0 | 0.15 | 1 |
//! | β_f  | 0.0065 | -0.02 | 30 | 0 | 0 | -0.2 | 1 |
//!
//! Currents (µA/cm², `C_m = 1 µF/cm²`):
//! - `I_Na = (g_Na m³ h j + g_NaC)(V - E_Na)`
//! - `I_s = g_s d f (V - E_s)`, `E_s = -82.3 - 13.0287 ln [Ca]_i`
//! - `I_x1 = x1 · 0.8 (e^{0.04(V+77)} - 1) / e^{0.04(V+35)}`
//! - `I_K1 = 0.35 [4 (e^{0.04(V+85)} - 1) / (e^{0.08(V+53)} + e^{0.04(V+53)}) + 0.2 (V+23) / (1 - e^{-0.04(V+23)})]`
//! - `d[Ca]_i/dt = -10⁻⁷ I_s + 0.07 (10⁻⁷ - [Ca]_i)`
//! - `dV/dt = -(I_Na + I_s + I_x1 + I_K1) + I_st(t)`
//!
//! The removable singularities of `α_m` and of the last `I_K1` term are
//! written as `1/φ_1(-u)` and evaluated through [`crate::phi`].

use crate::phi::phi_eval;
use crate::split::SplitSystem;

pub const DIM: usize = 8;
pub const GATES: usize = 6;
pub const CALCIUM: usize = 6;
pub const VOLTAGE: usize = 7;

pub const GATE_NAMES: [&str; GATES] = ["m", "h", "j", "d", "f", "x1"];

/// Default simulated time (ms).
pub const DEFAULT_HORIZON: f64 = 396.0;

/// `|V|` above which a state counts as blown up (mV).
pub const BLOWUP_VOLTAGE: f64 = 1e3;

/// Published resting potential (mV).
pub const RESTING_POTENTIAL: f64 = -84.57;

/// Published initial intracellular calcium (mol/L).
pub const INITIAL_CALCIUM: f64 = 2e-7;

/// Smooth compactly supported stimulus `I_st(t) = A (1 - s²)^p`, `s = (t - t_s)/w`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StimulusProfile {
    /// Centre `t_s` (ms).
    pub center: f64,
    /// Half-width `w` of the support (ms).
    pub half_width: f64,
    /// Integral of `I_st` over its support.
    pub total_charge: f64,
    /// Exponent `p`; the current is `C^{p-1}` at the support boundary.
    pub smoothness: u32,
}

impl Default for StimulusProfile {
    fn default() -> Self {
        Self { center: 20.0, half_width: 1.0, total_charge: 50.0, smoothness: 5 }
    }
}

impl StimulusProfile {
    /// No stimulation at all.
    pub fn none() -> Self {
        Self { total_charge: 0.0, ..Self::default() }
    }

    /// `∫_{-1}^{1} (1 - s²)^p ds = 2^{2p+1} (p!)² / (2p+1)!`.
    pub fn bump_integral(p: u32) -> f64 {
        let mut v = 2.0;
        // recursive form I_p = I_{p-1} · 2p / (2p + 1)
        for k in 1..=p {
            v *= 2.0 * k as f64 / (2.0 * k as f64 + 1.0);
        }
        v
    }

    /// Peak value `A`.
    pub fn amplitude(&self) -> f64 {
        self.total_charge / (self.half_width * Self::bump_integral(self.smoothness))
    }

    pub fn current(&self, t: f64) -> f64 {
        let s = (t - self.center) / self.half_width;
        if s.abs() >= 1.0 || self.total_charge == 0.0 {
            return 0.0;
        }
        self.amplitude() * (1.0 - s * s).powi(self.smoothness as i32)
    }
}

/// `I_st(t)` for a given profile.
pub fn stimulus_current(t: f64, prof: &StimulusProfile) -> f64 {
    prof.current(t)
}

/// Conductances and reversal potentials of the model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BeelerReuterParams {
    pub g_na: f64,
    pub g_nac: f64,
    pub e_na: f64,
    pub g_s: f64,
    pub c_m: f64,
}

impl Default for BeelerReuterParams {
    fn default() -> Self {
        Self { g_na: 4.0, g_nac: 0.003, e_na: 50.0, g_s: 0.09, c_m: 1.0 }
    }
}

type RateConstants = [f64; 7];

const RATES: [(RateConstants, RateConstants); GATES] = [
    // m (α_m is handled separately)
    ([0.0, 0.0, 47.0, -1.0, 47.0, -0.1, -1.0], [40.0, -0.056, 72.0, 0.0, 0.0, 0.0, 0.0]),
    // h
    ([0.126, -0.25, 77.0, 0.0, 0.0, 0.0, 0.0], [1.7, 0.0, 22.5, 0.0, 0.0, -0.082, 1.0]),
    // j
    ([0.055, -0.25, 78.0, 0.0, 0.0, -0.2, 1.0], [0.3, 0.0, 32.0, 0.0, 0.0, -0.1, 1.0]),
    // d
    ([0.095, -0.01, -5.0, 0.0, 0.0, -0.072, 1.0], [0.07, -0.017, 44.0, 0.0, 0.0, 0.05, 1.0]),
    // f
    ([0.012, -0.008, 28.0, 0.0, 0.0, 0.15, 1.0], [0.0065, -0.02, 30.0, 0.0, 0.0, -0.2, 1.0]),
    // x1
    ([0.0005, 0.083, 50.0, 0.0, 0.0, 0.057, 1.0], [0.0013, -0.06, 20.0, 0.0, 0.0, -0.04, 1.0]),
];

fn rate(c: &RateConstants, v: f64) -> f64 {
    let num = c[0] * (c[1] * (v + c[2])).exp() + c[3] * (v + c[4]);
    num / ((c[5] * (v + c[2])).exp() + c[6])
}

/// `u / (1 - e^{-u}) = 1 / φ_1(-u)`, finite at `u = 0`.
fn inv_phi1_neg(u: f64) -> f64 {
    match phi_eval(1, -u) {
        Ok(p) => 1.0 / p,
        Err(_) => f64::NAN,
    }
}

/// Opening and closing rates `(α, β)` of every gate at voltage `v`.
pub fn gate_rates(v: f64) -> [(f64, f64); GATES] {
    let mut out = [(0.0, 0.0); GATES];
    for (g, (alpha, beta)) in RATES.iter().enumerate() {
        out[g] = (rate(alpha, v), rate(beta, v));
    }
    // α_m = (V + 47) / (1 - e^{-0.1 (V + 47)})
    out[0].0 = 10.0 * inv_phi1_neg(0.1 * (v + 47.0));
    out
}

/// `(W_∞, τ)` of every gate at voltage `v`.
pub fn gate_steady_state(v: f64) -> [(f64, f64); GATES] {
    gate_rates(v).map(|(a, b)| (a / (a + b), 1.0 / (a + b)))
}

/// Ionic currents at a state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Currents {
    pub i_na: f64,
    pub i_s: f64,
    pub i_x1: f64,
    pub i_k1: f64,
}

impl Currents {
    pub fn total(&self) -> f64 {
        self.i_na + self.i_s + self.i_x1 + self.i_k1
    }
}

/// The Beeler–Reuter model with a smooth stimulus, as a [`SplitSystem`].
#[derive(Debug, Clone, PartialEq)]
pub struct BeelerReuter {
    pub params: BeelerReuterParams,
    pub stimulus: StimulusProfile,
    pub horizon: f64,
}

impl Default for BeelerReuter {
    fn default() -> Self {
        Self::new(BeelerReuterParams::default(), StimulusProfile::default(), DEFAULT_HORIZON)
    }
}

impl BeelerReuter {
    pub fn new(params: BeelerReuterParams, stimulus: StimulusProfile, horizon: f64) -> Self {
        Self { params, stimulus, horizon }
    }

    pub fn currents(&self, y: &[f64]) -> Currents {
        let v = y[VOLTAGE];
        let (m, h, j, d, f, x1) = (y[0], y[1], y[2], y[3], y[4], y[5]);
        let p = &self.params;
        let e_s = -82.3 - 13.0287 * y[CALCIUM].ln();
        let i_na = (p.g_na * m * m * m * h * j + p.g_nac) * (v - p.e_na);
        let i_s = p.g_s * d * f * (v - e_s);
        let i_x1 = x1 * 0.8 * ((0.04 * (v + 77.0)).exp() - 1.0) / (0.04 * (v + 35.0)).exp();
        let i_k1 = 0.35
            * (4.0 * ((0.04 * (v + 85.0)).exp() - 1.0) / ((0.08 * (v + 53.0)).exp() + (0.04 * (v + 53.0)).exp())
                + 5.0 * inv_phi1_neg(0.04 * (v + 23.0)));
        Currents { i_na, i_s, i_x1, i_k1 }
    }

    fn calcium_rate(ca: f64, i_s: f64) -> f64 {
        -1e-7 * i_s + 0.07 * (1e-7 - ca)
    }

    /// State with gates at `W_∞(v)` and the given calcium.
    fn clamped_state(v: f64, ca: f64) -> [f64; DIM] {
        let mut y = [0.0; DIM];
        for (g, (w_inf, _)) in gate_steady_state(v).iter().enumerate() {
            y[g] = *w_inf;
        }
        y[CALCIUM] = ca;
        y[VOLTAGE] = v;
        y
    }

    /// Resting state `y_0`: published potential and calcium, gates at `W_∞`.
    pub fn resting_state(&self) -> [f64; DIM] {
        Self::clamped_state(RESTING_POTENTIAL, INITIAL_CALCIUM)
    }

    /// Split of the model at `(t, y)`: `(a, b)` with `a` the six gate
    /// diagonals and `b` the full nonlinear part.
    pub fn split(&self, t: f64, y: &[f64]) -> ([f64; GATES], [f64; DIM]) {
        let mut a = [0.0; GATES];
        let mut b = [0.0; DIM];
        self.eval_split(t, y, &mut a, &mut b);
        (a, b)
    }
}

/// Published-model resting state with default parameters.
pub fn br_resting_state() -> [f64; DIM] {
    BeelerReuter::default().resting_state()
}

/// Split `(a, b)` of the default model.
pub fn br_split(t: f64, y: &[f64]) -> ([f64; GATES], [f64; DIM]) {
    BeelerReuter::default().split(t, y)
}

impl SplitSystem for BeelerReuter {
    fn dim(&self) -> usize {
        DIM
    }

    fn stabilized_count(&self) -> usize {
        GATES
    }

    fn eval_split(&self, t: f64, y: &[f64], a: &mut [f64], b: &mut [f64]) {
        let v = y[VOLTAGE];
        for (g, (alpha, beta)) in gate_rates(v).iter().enumerate() {
            a[g] = -(alpha + beta);
            b[g] = *alpha;
        }
        let cur = self.currents(y);
        b[CALCIUM] = Self::calcium_rate(y[CALCIUM], cur.i_s);
        b[VOLTAGE] = (-cur.total() + self.stimulus.current(t)) / self.params.c_m;
    }

    fn initial_state(&self) -> Vec<f64> {
        self.resting_state().to_vec()
    }

    fn horizon(&self) -> f64 {
        self.horizon
    }

    fn is_admissible(&self, y: &[f64]) -> bool {
        y[VOLTAGE].abs() <= BLOWUP_VOLTAGE
    }

    fn observed_component(&self) -> usize {
        VOLTAGE
    }
}
