//! Target gates, fidelity measures, the Nelder–Mead optimizer and the gate
//! synthesis loop over pulse trains and magnetic field.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::effective::{
    rk4, EffectiveGenerator, EffectiveParams, Encoding, EvolveOptions, Frame, Label, ProductBasis, StateVector, C64,
};
use crate::error::{Error, Result};
use crate::pulse::{Pulse, PulseTrain};
use crate::response::ResponseTable;
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Gate {
    I,
    X,
    Y,
    Z,
    S,
    T,
    H,
    ISwap,
}

impl Gate {
    pub const SINGLE_QUBIT: [Gate; 7] = [Gate::I, Gate::X, Gate::Y, Gate::Z, Gate::S, Gate::T, Gate::H];

    pub fn dim(self) -> usize {
        match self {
            Gate::ISwap => 4,
            _ => 2,
        }
    }

    /// Gate time used when none is configured, ps.
    pub fn default_gate_time(self) -> f64 {
        match self {
            Gate::ISwap => 7.5,
            _ => 10.0,
        }
    }
}

impl fmt::Display for Gate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Gate::I => "I",
            Gate::X => "X",
            Gate::Y => "Y",
            Gate::Z => "Z",
            Gate::S => "S",
            Gate::T => "T",
            Gate::H => "H",
            Gate::ISwap => "iSWAP",
        };
        f.write_str(s)
    }
}

impl FromStr for Gate {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.to_ascii_lowercase().as_str() {
            "i" | "id" | "identity" => Gate::I,
            "x" => Gate::X,
            "y" => Gate::Y,
            "z" => Gate::Z,
            "s" => Gate::S,
            "t" => Gate::T,
            "h" => Gate::H,
            "iswap" => Gate::ISwap,
            _ => return Err(Error::UnknownGate(s.to_string())),
        })
    }
}

impl Serialize for Gate {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Gate {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Target unitary on an encoded subspace.
#[derive(Debug, Clone, PartialEq)]
pub struct GateTarget {
    pub gate: Gate,
    pub encoding: Encoding,
    pub matrix: DMatrix<C64>,
}

fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

pub fn gate_matrix(gate: Gate, encoding: Encoding) -> Result<GateTarget> {
    if gate != Gate::I && gate.dim() != encoding.dim() {
        return Err(Error::Config(format!("gate {gate} does not act on the {encoding:?} encoding")));
    }
    let r = std::f64::consts::FRAC_1_SQRT_2;
    let z = c(0.0, 0.0);
    let one = c(1.0, 0.0);
    let m = match gate {
        Gate::I => DMatrix::identity(encoding.dim(), encoding.dim()),
        Gate::X => DMatrix::from_row_slice(2, 2, &[z, one, one, z]),
        Gate::Y => DMatrix::from_row_slice(2, 2, &[z, c(0.0, -1.0), c(0.0, 1.0), z]),
        Gate::Z => DMatrix::from_row_slice(2, 2, &[one, z, z, -one]),
        Gate::S => DMatrix::from_row_slice(2, 2, &[one, z, z, c(0.0, 1.0)]),
        Gate::T => DMatrix::from_row_slice(2, 2, &[one, z, z, C64::from_polar(1.0, std::f64::consts::FRAC_PI_4)]),
        Gate::H => DMatrix::from_row_slice(2, 2, &[c(r, 0.0), c(r, 0.0), c(r, 0.0), c(-r, 0.0)]),
        Gate::ISwap => {
            let mut m = DMatrix::identity(4, 4);
            m[(1, 1)] = z;
            m[(2, 2)] = z;
            m[(1, 2)] = c(0.0, 1.0);
            m[(2, 1)] = c(0.0, 1.0);
            m
        }
    };
    Ok(GateTarget { gate, encoding, matrix: m })
}

fn check_square_pair(u: &DMatrix<C64>, v: &DMatrix<C64>) -> Result<usize> {
    if !u.is_square() || u.shape() != v.shape() {
        return Err(Error::Dimension { expected: v.nrows(), got: u.nrows() });
    }
    Ok(u.nrows())
}

/// `𝒥 = 1 − |Tr(U†V)|² / N²`.
pub fn process_infidelity(u: &DMatrix<C64>, v: &DMatrix<C64>) -> Result<f64> {
    let n = check_square_pair(u, v)? as f64;
    let tr: C64 = (0..u.nrows()).map(|k| (u.column(k).adjoint() * v.column(k))[(0, 0)]).sum();
    Ok(1.0 - tr.norm_sqr() / (n * n))
}

/// Phase-sensitive `‖U − V‖_F`, for diagnostics only.
pub fn frobenius_distance(u: &DMatrix<C64>, v: &DMatrix<C64>) -> Result<f64> {
    check_square_pair(u, v)?;
    Ok((u - v).iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt())
}

/// Monte-Carlo estimate of `1 − ⟨|⟨ψ|U†V|ψ⟩|²⟩` over states
/// `cos(θ/2)|0⟩ + e^{iφ} sin(θ/2)|1⟩` with `θ ~ U[0, π]`, `φ ~ U[0, 2π]`.
pub fn average_infidelity(u: &DMatrix<C64>, v: &DMatrix<C64>, n_samples: usize, seed: u64) -> Result<f64> {
    if check_square_pair(u, v)? != 2 {
        return Err(Error::Dimension { expected: 2, got: u.nrows() });
    }
    if n_samples == 0 {
        return Err(Error::Config("average infidelity needs at least one sample".into()));
    }
    let m = u.adjoint() * v;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut acc = 0.0;
    for _ in 0..n_samples {
        let theta: f64 = rng.gen_range(0.0..std::f64::consts::PI);
        let phi: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
        let psi = DVector::from_vec(vec![c((0.5 * theta).cos(), 0.0), C64::from_polar((0.5 * theta).sin(), phi)]);
        acc += (psi.adjoint() * &m * &psi)[(0, 0)].norm_sqr();
    }
    Ok(1.0 - acc / n_samples as f64)
}

/// `n = (G, 0, δ/2) / √(G² + δ²/4)`.
pub fn rotation_axis<T: Real>(g: T, delta: T) -> Result<[T; 3]> {
    let half = delta * T::lit(0.5);
    let norm = g.hypot(half);
    if !(norm > T::zero()) || !norm.is_finite() {
        return Err(Error::Domain("rotation axis needs a non-zero, finite (G, δ)".into()));
    }
    Ok([g / norm, T::zero(), half / norm])
}

/// Bloch vector of the encoded pair without renormalization; `|r| < 1` signals leakage.
pub fn bloch_vector(psi: &StateVector, basis: &ProductBasis, encoding: Encoding) -> Result<[f64; 3]> {
    if encoding.dim() != 2 {
        return Err(Error::Config("Bloch vectors need a two-level encoding".into()));
    }
    let idx = basis.indices(&encoding.labels())?;
    let (a, b) = (psi.amplitudes[idx[0]], psi.amplitudes[idx[1]]);
    let ab = a.conj() * b;
    Ok([2.0 * ab.re, 2.0 * ab.im, a.norm_sqr() - b.norm_sqr()])
}

pub fn bloch_trajectory(traj: &[StateVector], basis: &ProductBasis, encoding: Encoding) -> Result<Vec<[f64; 3]>> {
    traj.iter().map(|s| bloch_vector(s, basis, encoding)).collect()
}

/// `ρ = P|ψ⟩⟨ψ|P` restricted to the encoded labels.
pub fn state_tomography(psi: &StateVector, basis: &ProductBasis, labels: &[Label]) -> Result<DMatrix<C64>> {
    let idx = basis.indices(labels)?;
    let v = DVector::from_iterator(idx.len(), idx.iter().map(|&k| psi.amplitudes[k]));
    Ok(&v * v.adjoint())
}

/// Populations of every encoded level after each of `k` applications of `u`.
pub fn repeated_application(u: &DMatrix<C64>, psi0: &DVector<C64>, k: usize) -> Result<Vec<Vec<f64>>> {
    if k == 0 {
        return Err(Error::Config("repeated application needs k >= 1".into()));
    }
    if u.ncols() != psi0.len() || !u.is_square() {
        return Err(Error::Dimension { expected: u.ncols(), got: psi0.len() });
    }
    let mut psi = psi0.clone();
    let mut out = Vec::with_capacity(k);
    for _ in 0..k {
        psi = u * psi;
        out.push(psi.iter().map(|a| a.norm_sqr()).collect());
    }
    Ok(out)
}

/// Coordinate box; infinite entries leave a side open.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bounds<T = f64> {
    pub lower: Vec<T>,
    pub upper: Vec<T>,
}

impl<T: Real> Bounds<T> {
    pub fn unbounded(n: usize) -> Self {
        Bounds { lower: vec![T::neg_infinity(); n], upper: vec![T::infinity(); n] }
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn is_finite(&self) -> bool {
        self.lower.iter().chain(&self.upper).all(|v| v.is_finite())
    }

    fn clamp(&self, x: &[T]) -> Vec<T> {
        x.iter().zip(self.lower.iter().zip(&self.upper)).map(|(&v, (&lo, &hi))| v.max(lo).min(hi)).collect()
    }

    fn validate(&self) -> Result<()> {
        if self.lower.len() != self.upper.len() {
            return Err(Error::Dimension { expected: self.lower.len(), got: self.upper.len() });
        }
        if self.lower.iter().zip(&self.upper).any(|(lo, hi)| !(lo <= hi)) {
            return Err(Error::Config("every lower bound must not exceed its upper bound".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NelderMeadConfig {
    pub reflection: f64,
    pub expansion: f64,
    pub contraction: f64,
    pub shrink: f64,
    /// Iteration cap per run.
    pub max_iterations: usize,
    /// Stop when every vertex lies within this (scaled) distance of the best one.
    pub tolerance_x: f64,
    /// Stop when the spread of vertex values falls below this.
    pub tolerance_f: f64,
    /// Extra runs after the first; odd ones restart from the best point,
    /// even ones from a seeded uniform draw inside finite bounds.
    pub restarts: usize,
    /// Initial simplex edge as a fraction of each bound interval (or of
    /// `max(|x0_i|, 1)` when a side is open).
    pub initial_step: f64,
    /// Weight of the quadratic penalty on the distance outside the bounds.
    pub bound_penalty: f64,
    pub seed: u64,
}

impl Default for NelderMeadConfig {
    fn default() -> Self {
        NelderMeadConfig {
            reflection: 1.0,
            expansion: 2.0,
            contraction: 0.5,
            shrink: 0.5,
            max_iterations: 2000,
            tolerance_x: 1e-8,
            tolerance_f: 1e-14,
            restarts: 2,
            initial_step: 0.1,
            bound_penalty: 1e3,
            seed: 0,
        }
    }
}

impl NelderMeadConfig {
    fn validate(&self) -> Result<()> {
        let positive = [self.reflection, self.expansion, self.contraction, self.shrink, self.initial_step, self.tolerance_x];
        if positive.iter().any(|v| !(*v > 0.0)) || !(self.tolerance_f >= 0.0) || !(self.bound_penalty >= 0.0) {
            return Err(Error::Config("Nelder-Mead coefficients and tolerances must be positive".into()));
        }
        if !(self.expansion > self.reflection) || !(self.contraction < 1.0) || !(self.shrink < 1.0) {
            return Err(Error::Config("Nelder-Mead needs expansion > reflection, contraction < 1, shrink < 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NelderMeadResult<T = f64> {
    pub x: Vec<T>,
    pub value: T,
    /// Best value after every iteration, across all runs (non-increasing).
    pub trace: Vec<T>,
    pub evaluations: usize,
    pub iterations: usize,
}

/// Bounded Nelder–Mead with seeded restarts. Out-of-bounds points are
/// evaluated at their clamped image plus `bound_penalty · ‖x − clamp(x)‖²`;
/// non-finite values count as `+∞`. The returned point lies inside the bounds.
pub fn nelder_mead<T: Real, F: FnMut(&[T]) -> T>(
    mut f: F,
    x0: &[T],
    bounds: &Bounds<T>,
    cfg: &NelderMeadConfig,
) -> Result<NelderMeadResult<T>> {
    cfg.validate()?;
    bounds.validate()?;
    let n = x0.len();
    if n == 0 || bounds.dim() != n {
        return Err(Error::Dimension { expected: bounds.dim(), got: n });
    }
    let mu = T::lit(cfg.bound_penalty);
    let mut evaluations = 0usize;
    let mut eval = |x: &[T]| -> T {
        evaluations += 1;
        let inside = bounds.clamp(x);
        let outside = x.iter().zip(&inside).fold(T::zero(), |acc, (a, b)| acc + (*a - *b) * (*a - *b));
        let v = f(&inside) + mu * outside;
        if v.is_finite() {
            v
        } else {
            T::infinity()
        }
    };
    let steps: Vec<T> = (0..n)
        .map(|i| {
            let (lo, hi) = (bounds.lower[i], bounds.upper[i]);
            let width = if lo.is_finite() && hi.is_finite() { hi - lo } else { x0[i].abs().max(T::one()) };
            let s = width * T::lit(cfg.initial_step);
            if s > T::zero() {
                s
            } else {
                T::lit(cfg.initial_step)
            }
        })
        .collect();
    let scale: Vec<T> = steps.iter().map(|s| *s / T::lit(cfg.initial_step)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let mut best_x = bounds.clamp(x0);
    let mut best_v = T::infinity();
    let mut trace = Vec::new();
    let mut iterations = 0usize;

    for run in 0..=cfg.restarts {
        let start: Vec<T> = if run == 0 {
            bounds.clamp(x0)
        } else if run % 2 == 1 || !bounds.is_finite() {
            best_x.clone()
        } else {
            (0..n)
                .map(|i| {
                    let u: f64 = rng.gen();
                    bounds.lower[i] + (bounds.upper[i] - bounds.lower[i]) * T::lit(u)
                })
                .collect()
        };
        // initial simplex, stepping inwards when a step would leave the box
        let mut simplex: Vec<Vec<T>> = vec![start.clone()];
        for i in 0..n {
            let mut v = start.clone();
            v[i] = if start[i] + steps[i] <= bounds.upper[i] { start[i] + steps[i] } else { start[i] - steps[i] };
            simplex.push(v);
        }
        let mut values: Vec<T> = simplex.iter().map(|x| eval(x)).collect();
        if values.iter().all(|v| !v.is_finite()) {
            if run == 0 {
                return Err(Error::Optimizer("objective is not finite anywhere on the initial simplex".into()));
            }
            continue;
        }
        for _ in 0..cfg.max_iterations {
            iterations += 1;
            let mut order: Vec<usize> = (0..=n).collect();
            order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).unwrap_or(std::cmp::Ordering::Equal));
            simplex = order.iter().map(|&k| simplex[k].clone()).collect();
            values = order.iter().map(|&k| values[k]).collect();
            if values[0] < best_v {
                best_v = values[0];
                best_x = simplex[0].clone();
            }
            trace.push(best_v);

            let spread = values[n] - values[0];
            let diameter = simplex[1..]
                .iter()
                .map(|v| v.iter().zip(&simplex[0]).zip(&scale).fold(T::zero(), |m, ((a, b), s)| m.max((*a - *b).abs() / *s)))
                .fold(T::zero(), |m, d| m.max(d));
            if diameter < T::lit(cfg.tolerance_x) || (spread.is_finite() && spread < T::lit(cfg.tolerance_f)) {
                break;
            }

            let inv_n = T::one() / T::from_usize_lossy(n);
            let centroid: Vec<T> =
                (0..n).map(|i| simplex[..n].iter().fold(T::zero(), |acc, v| acc + v[i]) * inv_n).collect();
            let toward = |coef: f64| -> Vec<T> {
                let c = T::lit(coef);
                centroid.iter().zip(&simplex[n]).map(|(m, w)| *m + c * (*m - *w)).collect()
            };
            let xr = toward(cfg.reflection);
            let fr = eval(&xr);
            if fr < values[0] {
                let xe = toward(cfg.expansion);
                let fe = eval(&xe);
                if fe < fr {
                    simplex[n] = xe;
                    values[n] = fe;
                } else {
                    simplex[n] = xr;
                    values[n] = fr;
                }
                continue;
            }
            if fr < values[n - 1] {
                simplex[n] = xr;
                values[n] = fr;
                continue;
            }
            let (xc, fc) = if fr < values[n] {
                let x = toward(cfg.reflection * cfg.contraction);
                let v = eval(&x);
                (x, v)
            } else {
                let x = toward(-cfg.contraction);
                let v = eval(&x);
                (x, v)
            };
            if fc < values[n].min(fr) {
                simplex[n] = xc;
                values[n] = fc;
                continue;
            }
            let s = T::lit(cfg.shrink);
            for k in 1..=n {
                let v: Vec<T> = simplex[0].iter().zip(&simplex[k]).map(|(b, x)| *b + s * (*x - *b)).collect();
                values[k] = eval(&v);
                simplex[k] = v;
            }
        }
        for (x, v) in simplex.iter().zip(&values) {
            if *v < best_v {
                best_v = *v;
                best_x = x.clone();
            }
        }
        if let Some(last) = trace.last_mut() {
            *last = best_v;
        }
    }
    if !best_v.is_finite() {
        return Err(Error::Optimizer("no finite objective value found".into()));
    }
    Ok(NelderMeadResult { x: bounds.clamp(&best_x), value: best_v, trace, evaluations, iterations })
}

/// Leakage penalty functional.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PenaltyForm {
    /// Mean over the evolved columns of the leaked population at `t_f`.
    #[default]
    FinalTime,
    /// Same, averaged over the whole gate time.
    TimeIntegrated,
}

/// Box for the control coordinates; pulse centres span `[0, t_f]`, widths
/// `[width_min, t_f · width_max_fraction]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ControlBounds {
    pub amplitude: (f64, f64),
    pub width_min: f64,
    pub width_max_fraction: f64,
    pub field: (f64, f64),
    /// Gate-time range, used only when `t_f` is optimized.
    pub gate_time: (f64, f64),
}

impl Default for ControlBounds {
    fn default() -> Self {
        ControlBounds { amplitude: (-5.0, 5.0), width_min: 0.05, width_max_fraction: 0.5, field: (0.5, 10.0), gate_time: (5.0, 15.0) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthesisConfig {
    pub pulses: usize,
    /// Fixed gate time, ps; `None` takes the gate's default.
    pub gate_time: Option<f64>,
    pub optimize_gate_time: bool,
    pub penalty_weight: f64,
    pub penalty: PenaltyForm,
    pub bounds: ControlBounds,
    pub optimizer: NelderMeadConfig,
    pub evolve: EvolveOptions,
    /// Samples of the average-infidelity estimate.
    pub average_samples: usize,
    /// Explicit starting point; defaults to the centre of the box.
    pub initial: Option<ControlVector>,
    /// Evenly spaced fields tried with the starting pulses before the
    /// search; the best one becomes the starting field. Zero disables it.
    pub field_prescan: usize,
}

impl Default for SynthesisConfig {
    fn default() -> Self {
        SynthesisConfig {
            pulses: 5,
            gate_time: None,
            optimize_gate_time: false,
            penalty_weight: 1.0,
            penalty: PenaltyForm::FinalTime,
            bounds: ControlBounds::default(),
            optimizer: NelderMeadConfig::default(),
            evolve: EvolveOptions { report_frame: Frame::Drive, ..EvolveOptions::default() },
            average_samples: 1000,
            initial: None,
            field_prescan: 64,
        }
    }
}

/// Flattened controls `[(A_i, t_i, ξ_i) × M, B]`, with `t_f` appended when it
/// is optimized.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControlVector {
    pub values: Vec<f64>,
    pub pulses: usize,
    pub has_gate_time: bool,
}

impl ControlVector {
    pub fn new(pulses: &[Pulse], field: f64, gate_time: Option<f64>) -> Self {
        let mut values: Vec<f64> = pulses.iter().flat_map(|p| [p.amplitude, p.center, p.width]).collect();
        values.push(field);
        if let Some(t) = gate_time {
            values.push(t);
        }
        ControlVector { values, pulses: pulses.len(), has_gate_time: gate_time.is_some() }
    }

    fn from_values(values: Vec<f64>, pulses: usize, has_gate_time: bool) -> Result<Self> {
        if values.len() != 3 * pulses + 1 + has_gate_time as usize {
            return Err(Error::Dimension { expected: 3 * pulses + 1 + has_gate_time as usize, got: values.len() });
        }
        Ok(ControlVector { values, pulses, has_gate_time })
    }

    pub fn train(&self) -> Result<PulseTrain> {
        PulseTrain::new(
            self.values[..3 * self.pulses]
                .chunks_exact(3)
                .map(|p| Pulse { amplitude: p[0], center: p[1], width: p[2] })
                .collect(),
        )
    }

    pub fn field(&self) -> f64 {
        self.values[3 * self.pulses]
    }

    pub fn gate_time(&self, default: f64) -> f64 {
        if self.has_gate_time {
            self.values[3 * self.pulses + 1]
        } else {
            default
        }
    }
}

/// Field-independent part of the effective parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EffectiveTemplate {
    pub omega_cavity: f64,
    pub g_x: f64,
    pub g_t: f64,
    pub omega_l: f64,
    pub n_ph: usize,
    pub hbar: f64,
}

/// Everything the objective needs besides the control vector.
#[derive(Debug, Clone)]
pub struct ControlProblem {
    pub target: GateTarget,
    pub template: EffectiveTemplate,
    pub response: Arc<ResponseTable>,
    pub config: SynthesisConfig,
}

/// Diagnostics of one objective evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub objective: f64,
    pub infidelity: f64,
    pub leakage: f64,
    pub u: DMatrix<C64>,
    pub columns: Vec<StateVector>,
}

impl ControlProblem {
    pub fn new(target: GateTarget, template: EffectiveTemplate, response: Arc<ResponseTable>, config: SynthesisConfig) -> Result<Self> {
        let mut config = config;
        let tf = *config.gate_time.get_or_insert(target.gate.default_gate_time());
        if !(tf > 0.0) || !tf.is_finite() {
            return Err(Error::Config("gate time must be positive".into()));
        }
        if !(config.penalty_weight >= 0.0) {
            return Err(Error::Config("penalty weight must be non-negative".into()));
        }
        Ok(ControlProblem { target, template, response, config })
    }

    pub fn params_at(&self, b: f64) -> Result<EffectiveParams> {
        let t = &self.template;
        Ok(EffectiveParams {
            omega_cavity: t.omega_cavity,
            response: self.response.at(b)?,
            g_x: t.g_x,
            g_t: t.g_t,
            omega_l: t.omega_l,
            n_ph: t.n_ph,
            hbar: t.hbar,
        })
    }

    pub fn bounds(&self) -> Bounds {
        let cfg = &self.config;
        let b = &cfg.bounds;
        let tf_hi = if cfg.optimize_gate_time { b.gate_time.1 } else { self.gate_time() };
        let mut lower = Vec::new();
        let mut upper = Vec::new();
        for _ in 0..cfg.pulses {
            lower.extend([b.amplitude.0, 0.0, b.width_min]);
            upper.extend([b.amplitude.1, tf_hi, (tf_hi * b.width_max_fraction).max(b.width_min)]);
        }
        lower.push(b.field.0);
        upper.push(b.field.1);
        if cfg.optimize_gate_time {
            lower.push(b.gate_time.0);
            upper.push(b.gate_time.1);
        }
        Bounds { lower, upper }
    }

    /// Configured gate time (resolved at construction).
    pub fn gate_time(&self) -> f64 {
        self.config.gate_time.unwrap_or(self.target.gate.default_gate_time())
    }

    /// Centre of the control box.
    pub fn default_start(&self) -> ControlVector {
        let b = self.bounds();
        let values = b.lower.iter().zip(&b.upper).map(|(lo, hi)| 0.5 * (lo + hi)).collect();
        ControlVector { values, pulses: self.config.pulses, has_gate_time: self.config.optimize_gate_time }
    }

    /// Projected gate over the encoding, infidelity and leakage at `x`.
    pub fn evaluate(&self, x: &ControlVector) -> Result<Evaluation> {
        let tf = x.gate_time(self.gate_time());
        let train = x.train()?;
        let params = self.params_at(x.field())?;
        let labels = self.target.encoding.labels();
        let basis = params.basis()?;
        let idx = basis.indices(&labels)?;
        let outside = basis.complement(&labels);
        let opts = self.config.evolve;
        let gen = EffectiveGenerator::new(&params, &train, opts.integration_frame)?;
        let n = basis.dim();
        let k = idx.len();
        let mut states = vec![C64::new(0.0, 0.0); n * k];
        for (col, &i) in idx.iter().enumerate() {
            states[col * n + i] = C64::new(1.0, 0.0);
        }
        let leaked = |s: &[C64]| -> f64 {
            s.chunks_exact(n).map(|col| outside.iter().map(|&o| col[o].norm_sqr()).sum::<f64>()).sum::<f64>() / k as f64
        };
        let mut integrated = 0.0;
        let mut samples = 0usize;
        let time_integrated = self.config.penalty == PenaltyForm::TimeIntegrated;
        rk4(&gen, params.hbar, &mut states, 0.0, tf, opts.dt, |_, _, s| {
            if time_integrated {
                integrated += leaked(s);
                samples += 1;
            }
        })?;
        for col in states.chunks_exact(n) {
            let drift = (col.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt() - 1.0).abs();
            if !(drift <= opts.max_norm_drift) {
                return Err(Error::NormDrift { drift, limit: opts.max_norm_drift, dt: opts.dt });
            }
        }
        let (w_int, w_rep) = (opts.integration_frame.frequency(&params), opts.report_frame.frequency(&params));
        let columns: Vec<StateVector> = states
            .chunks_exact(n)
            .map(|col| {
                let amplitudes = col
                    .iter()
                    .enumerate()
                    .map(|(j, a)| {
                        let exc = basis.label(j).excitations() as f64;
                        a * C64::from_polar(1.0, (w_rep - w_int) * exc * tf / params.hbar)
                    })
                    .collect();
                StateVector { t: tf, amplitudes }
            })
            .collect();
        let u = DMatrix::from_fn(k, k, |r, col| columns[col].amplitudes[idx[r]]);
        let infidelity = process_infidelity(&u, &self.target.matrix)?;
        let leakage = match self.config.penalty {
            PenaltyForm::FinalTime => leaked(&states),
            PenaltyForm::TimeIntegrated => integrated / samples.max(1) as f64,
        };
        Ok(Evaluation { objective: infidelity + self.config.penalty_weight * leakage, infidelity, leakage, u, columns })
    }

    /// `𝒥 + w · leakage`; failures map to `+∞`.
    pub fn objective(&self, values: &[f64]) -> f64 {
        let x = match ControlVector::from_values(values.to_vec(), self.config.pulses, self.config.optimize_gate_time) {
            Ok(x) => x,
            Err(_) => return f64::INFINITY,
        };
        self.evaluate(&x).map(|e| e.objective).unwrap_or(f64::INFINITY)
    }
}

/// Optimized controls with full provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthesisResult {
    pub gate: Gate,
    pub encoding: Encoding,
    pub controls: ControlVector,
    pub pulses: Vec<Pulse>,
    pub field: f64,
    pub gate_time: f64,
    pub objective: f64,
    pub infidelity: f64,
    pub process_fidelity: f64,
    /// Monte-Carlo average infidelity over sampled pure states (two-level encodings only).
    pub average_infidelity: Option<f64>,
    pub leakage: f64,
    pub frobenius_distance: f64,
    /// Projected gate as `[re, im]` pairs, row-major.
    pub gate_matrix: Vec<Vec<[f64; 2]>>,
    pub trace: Vec<f64>,
    pub evaluations: usize,
    pub seed: u64,
    pub bounds: Bounds,
    pub template: EffectiveTemplate,
    pub config: SynthesisConfig,
}

impl SynthesisResult {
    pub fn u(&self) -> DMatrix<C64> {
        let n = self.gate_matrix.len();
        DMatrix::from_fn(n, n, |r, c| C64::new(self.gate_matrix[r][c][0], self.gate_matrix[r][c][1]))
    }
}

fn matrix_rows(u: &DMatrix<C64>) -> Vec<Vec<[f64; 2]>> {
    (0..u.nrows()).map(|r| (0..u.ncols()).map(|c| [u[(r, c)].re, u[(r, c)].im]).collect()).collect()
}

/// Runs the optimization loop and re-evaluates the optimum.
pub fn synthesize(problem: &ControlProblem) -> Result<SynthesisResult> {
    synthesize_logged(problem, &mut Vec::new())
}

/// As [`synthesize`], appending the running best objective after every
/// evaluation to `log`, which survives an optimizer failure.
pub fn synthesize_logged(problem: &ControlProblem, log: &mut Vec<f64>) -> Result<SynthesisResult> {
    let cfg = &problem.config;
    let bounds = problem.bounds();
    let mut start = cfg.initial.clone().unwrap_or_else(|| problem.default_start());
    if start.values.len() != bounds.dim() {
        return Err(Error::Dimension { expected: bounds.dim(), got: start.values.len() });
    }
    let mut best = f64::INFINITY;
    let mut objective = |x: &[f64]| {
        let v = problem.objective(x);
        best = best.min(v);
        log.push(best);
        v
    };
    let field = 3 * cfg.pulses;
    let (lo, hi) = (bounds.lower[field], bounds.upper[field]);
    let mut prescanned = 0;
    if cfg.field_prescan > 0 && lo.is_finite() && hi.is_finite() {
        let mut x = start.values.clone();
        let mut best_start = (objective(&x), x[field]);
        prescanned += 1;
        for k in 0..cfg.field_prescan {
            x[field] = lo + (hi - lo) * (k as f64 + 0.5) / cfg.field_prescan as f64;
            let v = objective(&x);
            prescanned += 1;
            // strict: ties keep the earlier (configured) field
            if v < best_start.0 {
                best_start = (v, x[field]);
            }
        }
        start.values[field] = best_start.1;
    }
    let nm = nelder_mead(objective, &start.values, &bounds, &cfg.optimizer)?;
    let controls = ControlVector::from_values(nm.x.clone(), cfg.pulses, cfg.optimize_gate_time)?;
    finish(problem, controls, nm.trace, nm.evaluations + prescanned, bounds)
}

/// Packages a control vector as a result, with a trace of its own value.
pub fn evaluate_controls(problem: &ControlProblem, controls: ControlVector) -> Result<SynthesisResult> {
    let bounds = problem.bounds();
    finish(problem, controls, Vec::new(), 1, bounds)
}

fn finish(
    problem: &ControlProblem,
    controls: ControlVector,
    trace: Vec<f64>,
    evaluations: usize,
    bounds: Bounds,
) -> Result<SynthesisResult> {
    let cfg = &problem.config;
    let eval = problem.evaluate(&controls)?;
    let target = &problem.target.matrix;
    let average = if problem.target.encoding.dim() == 2 {
        Some(average_infidelity(&eval.u, target, cfg.average_samples, cfg.optimizer.seed)?)
    } else {
        None
    };
    let mut trace = trace;
    if trace.is_empty() {
        trace.push(eval.objective);
    }
    Ok(SynthesisResult {
        gate: problem.target.gate,
        encoding: problem.target.encoding,
        pulses: controls.train()?.pulses().to_vec(),
        field: controls.field(),
        gate_time: controls.gate_time(problem.gate_time()),
        controls,
        objective: eval.objective,
        infidelity: eval.infidelity,
        process_fidelity: 1.0 - eval.infidelity,
        average_infidelity: average,
        leakage: eval.leakage,
        frobenius_distance: frobenius_distance(&eval.u, target)?,
        gate_matrix: matrix_rows(&eval.u),
        trace,
        evaluations,
        seed: cfg.optimizer.seed,
        bounds,
        template: problem.template,
        config: cfg.clone(),
    })
}

/// Fidelity versus field with the pulse train held fixed. Two-level targets
/// use the state fidelity `|⟨ψ0|U†V|ψ0⟩|²`, four-level ones `|Tr(U†V)|²/N²`.
pub fn fidelity_scan_b(
    problem: &ControlProblem,
    controls: &ControlVector,
    fields: &[f64],
    psi0: Option<&DVector<C64>>,
) -> Result<Vec<(f64, f64)>> {
    use rayon::prelude::*;
    let v = &problem.target.matrix;
    fields
        .par_iter()
        .map(|&b| {
            let mut x = controls.clone();
            x.values[3 * x.pulses] = b;
            let u = problem.evaluate(&x)?.u;
            let f = match (problem.target.encoding.dim(), psi0) {
                (2, Some(psi)) => (psi.adjoint() * u.adjoint() * v * psi)[(0, 0)].norm_sqr(),
                _ => 1.0 - process_infidelity(&u, v)?,
            };
            Ok((b, f))
        })
        .collect()
}

/// Bloch-sphere reference state `cos(π/5)|0⟩ + e^{iπ/3} sin(π/5)|1⟩`.
pub fn reference_qubit_state() -> DVector<C64> {
    use std::f64::consts::PI;
    DVector::from_vec(vec![C64::new((PI / 5.0).cos(), 0.0), C64::from_polar((PI / 5.0).sin(), PI / 3.0)])
}

/// Embeds encoded amplitudes into the product basis.
pub fn embed(encoded: &DVector<C64>, basis: &ProductBasis, encoding: Encoding, t: f64) -> Result<StateVector> {
    let labels = encoding.labels();
    if encoded.len() != labels.len() {
        return Err(Error::Dimension { expected: labels.len(), got: encoded.len() });
    }
    let mut amplitudes = vec![C64::new(0.0, 0.0); basis.dim()];
    for (l, a) in labels.iter().zip(encoded.iter()) {
        amplitudes[basis.index(*l)?] = *a;
    }
    Ok(StateVector { t, amplitudes })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fewbody::SystemResponse;
    use proptest::prelude::*;

    fn max_abs(m: &DMatrix<C64>) -> f64 {
        m.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    #[test]
    fn gate_examples() {
        let x = gate_matrix(Gate::X, Encoding::Exciton).unwrap().matrix;
        assert_eq!(x, DMatrix::from_row_slice(2, 2, &[c(0.0, 0.0), c(1.0, 0.0), c(1.0, 0.0), c(0.0, 0.0)]));
        let h = gate_matrix(Gate::H, Encoding::Exciton).unwrap().matrix;
        assert!(max_abs(&(&h * &h - DMatrix::identity(2, 2))) < 1e-15);
        let sw = gate_matrix(Gate::ISwap, Encoding::Qudit).unwrap().matrix;
        let e = |k: usize| DVector::from_fn(4, |r, _| c((r == k) as i32 as f64, 0.0));
        assert_eq!(&sw * e(1), e(2) * c(0.0, 1.0));
        assert_eq!(&sw * e(2), e(1) * c(0.0, 1.0));
        assert_eq!(&sw * e(0), e(0));
        for g in Gate::SINGLE_QUBIT.into_iter().chain([Gate::ISwap]) {
            let enc = if g == Gate::ISwap { Encoding::Qudit } else { Encoding::Trion };
            let m = gate_matrix(g, enc).unwrap().matrix;
            let n = m.nrows();
            assert!(max_abs(&(m.adjoint() * &m - DMatrix::identity(n, n))) <= 1e-12);
            assert_eq!(g.to_string().parse::<Gate>().unwrap(), g);
        }
        assert!(matches!("cnot".parse::<Gate>(), Err(Error::UnknownGate(_))));
        assert!(gate_matrix(Gate::ISwap, Encoding::Exciton).is_err());
    }

    #[test]
    fn infidelity_examples() {
        let x = gate_matrix(Gate::X, Encoding::Exciton).unwrap().matrix;
        let id = DMatrix::<C64>::identity(2, 2);
        assert_eq!(process_infidelity(&x, &x).unwrap(), 0.0);
        assert!((process_infidelity(&x, &id).unwrap() - 1.0).abs() < 1e-15);
        let phased = &x * C64::from_polar(1.0, 0.7);
        assert!(process_infidelity(&phased, &x).unwrap().abs() < 1e-15);
        assert!(process_infidelity(&x, &DMatrix::identity(4, 4)).is_err());
    }

    /// Dense midpoint grid over (θ, φ) of `1 − |⟨ψ|M|ψ⟩|²`.
    fn grid_average(m: &DMatrix<C64>) -> f64 {
        let n = 400;
        let mut acc = 0.0;
        for i in 0..n {
            let theta = std::f64::consts::PI * (i as f64 + 0.5) / n as f64;
            for j in 0..n {
                let phi = std::f64::consts::TAU * (j as f64 + 0.5) / n as f64;
                let psi = DVector::from_vec(vec![c((0.5 * theta).cos(), 0.0), C64::from_polar((0.5 * theta).sin(), phi)]);
                acc += 1.0 - (psi.adjoint() * m * &psi)[(0, 0)].norm_sqr();
            }
        }
        acc / (n * n) as f64
    }

    #[test]
    fn average_infidelity_examples() {
        let x = gate_matrix(Gate::X, Encoding::Exciton).unwrap().matrix;
        let id = DMatrix::<C64>::identity(2, 2);
        assert!(average_infidelity(&x, &x, 1000, 3).unwrap().abs() < 1e-14);
        assert!(average_infidelity(&(&x * C64::from_polar(1.0, 2.0)), &x, 1000, 3).unwrap().abs() < 1e-14);
        let mc = average_infidelity(&x, &id, 1000, 3).unwrap();
        let grid = grid_average(&x);
        assert!((grid - 0.75).abs() < 1e-4);
        // per-sample spread of 1 − sin²θ cos²φ is below 0.3, so 4σ/√1000 < 0.04
        assert!((mc - grid).abs() < 0.04, "{mc} vs {grid}");
        assert_eq!(average_infidelity(&x, &id, 1000, 3).unwrap(), mc);
    }

    #[test]
    fn rotation_axis_examples() {
        assert_eq!(rotation_axis(1.5f64, 0.0).unwrap(), [1.0, 0.0, 0.0]);
        assert_eq!(rotation_axis(0.0f64, -2.0).unwrap(), [0.0, 0.0, -1.0]);
        let n = rotation_axis(1.0f64, 2.0).unwrap();
        let r = std::f64::consts::FRAC_1_SQRT_2;
        assert!((n[0] - r).abs() < 1e-15 && n[1] == 0.0 && (n[2] - r).abs() < 1e-15);
        assert!(rotation_axis(0.0f64, 0.0).is_err());
        let n32 = rotation_axis(1.0f32, 2.0).unwrap();
        assert!((n32[0] - r as f32).abs() < 1e-6);
    }

    proptest! {
        #[test]
        fn rotation_axis_is_unit(g in -50.0f64..50.0, d in -50.0f64..50.0) {
            prop_assume!(g.abs() + d.abs() > 1e-9);
            let n = rotation_axis(g, d).unwrap();
            prop_assert!(((n[0] * n[0] + n[1] * n[1] + n[2] * n[2]).sqrt() - 1.0).abs() <= 1e-14);
        }

        #[test]
        fn infidelity_bounded_and_phase_invariant(a in 0.0f64..6.3, b in 0.0f64..6.3, ph in 0.0f64..6.3) {
            let u = DMatrix::from_row_slice(2, 2, &[
                C64::from_polar(a.cos(), b), C64::from_polar(a.sin(), 0.3),
                C64::from_polar(-a.sin(), b - 0.3), C64::from_polar(a.cos(), 0.0),
            ]);
            let v = gate_matrix(Gate::H, Encoding::Exciton).unwrap().matrix;
            let j = process_infidelity(&u, &v).unwrap();
            prop_assert!((-1e-15..=1.0 + 1e-15).contains(&j));
            let jp = process_infidelity(&(&u * C64::from_polar(1.0, ph)), &v).unwrap();
            prop_assert!((j - jp).abs() < 1e-14);
        }
    }

    #[test]
    fn bloch_examples() {
        let basis = ProductBasis::new(2).unwrap();
        let r = std::f64::consts::FRAC_1_SQRT_2;
        let zero = embed(&DVector::from_vec(vec![c(1.0, 0.0), c(0.0, 0.0)]), &basis, Encoding::Exciton, 0.0).unwrap();
        assert_eq!(bloch_vector(&zero, &basis, Encoding::Exciton).unwrap(), [0.0, 0.0, 1.0]);
        let plus = embed(&DVector::from_vec(vec![c(r, 0.0), c(r, 0.0)]), &basis, Encoding::Exciton, 0.0).unwrap();
        let v = bloch_vector(&plus, &basis, Encoding::Exciton).unwrap();
        assert!((v[0] - 1.0).abs() < 1e-15 && v[1].abs() < 1e-15 && v[2].abs() < 1e-15);
        let leaked = StateVector::basis_state(basis.dim(), basis.index(crate::effective::QUDIT[3]).unwrap(), 0.0);
        assert_eq!(bloch_vector(&leaked, &basis, Encoding::Exciton).unwrap(), [0.0, 0.0, 0.0]);
    }

    #[test]
    fn tomography_examples() {
        let basis = ProductBasis::new(2).unwrap();
        let labels = Encoding::Qudit.labels();
        let one = StateVector::basis_state(basis.dim(), basis.index(labels[1]).unwrap(), 0.0);
        let rho = state_tomography(&one, &basis, &labels).unwrap();
        assert_eq!(rho[(1, 1)], c(1.0, 0.0));
        assert_eq!(rho.iter().filter(|v| v.norm() > 0.0).count(), 1);
        let r = std::f64::consts::FRAC_1_SQRT_2;
        let psi = embed(&DVector::from_vec(vec![c(0.0, 0.0), c(r, 0.0), c(0.0, r), c(0.0, 0.0)]), &basis, Encoding::Qudit, 0.0).unwrap();
        let rho = state_tomography(&psi, &basis, &labels).unwrap();
        assert!((rho[(1, 2)] - c(0.0, -0.5)).norm() < 1e-15);
        assert!(max_abs(&(&rho - rho.adjoint())) == 0.0);
    }

    #[test]
    fn repeated_application_examples() {
        let sw = gate_matrix(Gate::ISwap, Encoding::Qudit).unwrap().matrix;
        let one = DVector::from_fn(4, |r, _| c((r == 1) as i32 as f64, 0.0));
        let pops = repeated_application(&sw, &one, 6).unwrap();
        for (k, p) in pops.iter().enumerate() {
            let (a, b) = if k % 2 == 0 { (0.0, 1.0) } else { (1.0, 0.0) };
            assert_eq!((p[1], p[2]), (a, b));
        }
        let id = DMatrix::<C64>::identity(4, 4);
        assert!(repeated_application(&id, &one, 3).unwrap().iter().all(|p| p[1] == 1.0));
        assert!(repeated_application(&id, &one, 0).is_err());
    }

    fn rosenbrock(x: &[f64]) -> f64 {
        (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2)
    }

    #[test]
    fn nelder_mead_quadratic() {
        let cfg = NelderMeadConfig { tolerance_x: 1e-10, ..Default::default() };
        let r = nelder_mead(|x: &[f64]| x[0] * x[0] + x[1] * x[1], &[1.0, 1.0], &Bounds::unbounded(2), &cfg).unwrap();
        assert!(r.x[0].hypot(r.x[1]) < 1e-6);
    }

    #[test]
    fn nelder_mead_rosenbrock() {
        let cfg = NelderMeadConfig { tolerance_x: 1e-10, restarts: 3, ..Default::default() };
        let r = nelder_mead(rosenbrock, &[-1.2, 1.0], &Bounds::unbounded(2), &cfg).unwrap();
        assert!((r.x[0] - 1.0).abs() < 1e-4 && (r.x[1] - 1.0).abs() < 1e-4, "{:?}", r.x);
        assert!(r.trace.windows(2).all(|w| w[1] <= w[0]));
        let r32 = nelder_mead(|x: &[f32]| (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2), &[-1.2f32, 1.0], &Bounds::unbounded(2), &cfg).unwrap();
        assert!((r32.x[0] - 1.0).abs() < 1e-2);
    }

    #[test]
    fn nelder_mead_respects_bounds() {
        let bounds = Bounds { lower: vec![2.0, -1.0], upper: vec![3.0, 1.0] };
        let cfg = NelderMeadConfig { restarts: 4, seed: 9, ..Default::default() };
        let r = nelder_mead(|x: &[f64]| x[0] * x[0] + (x[1] - 0.5).powi(2), &[2.5, 0.0], &bounds, &cfg).unwrap();
        assert!((r.x[0] - 2.0).abs() < 1e-6 && (r.x[1] - 0.5).abs() < 1e-6, "{:?}", r.x);
        assert!(r.trace.windows(2).all(|w| w[1] <= w[0]));
        let again = nelder_mead(|x: &[f64]| x[0] * x[0] + (x[1] - 0.5).powi(2), &[2.5, 0.0], &bounds, &cfg).unwrap();
        assert_eq!(r, again);
        assert!(nelder_mead(|_: &[f64]| f64::NAN, &[2.5, 0.0], &bounds, &cfg).is_err());
    }

    fn toy_problem(gate: Gate, encoding: Encoding, pulses: usize) -> ControlProblem {
        let row = |b: f64| SystemResponse { omega_x: 10.0 + 0.1 * b, omega_t: 13.0 + 0.15 * b, omega_e: 3.5, p_x: 0.5, p_t: 0.4 };
        let fields: Vec<f64> = (1..=20).map(|k| 0.5 * k as f64).collect();
        let rows = fields.iter().map(|&b| row(b)).collect();
        let table = Arc::new(ResponseTable::new(fields, rows).unwrap());
        let template = EffectiveTemplate { omega_cavity: 10.2, g_x: 1.0, g_t: 0.5, omega_l: 10.2, n_ph: 2, hbar: 0.6582119 };
        let config = SynthesisConfig {
            pulses,
            gate_time: Some(2.0),
            optimizer: NelderMeadConfig { max_iterations: 40, restarts: 1, seed: 4, ..Default::default() },
            average_samples: 200,
            ..Default::default()
        };
        ControlProblem::new(gate_matrix(gate, encoding).unwrap(), template, table, config).unwrap()
    }

    #[test]
    fn objective_is_nonnegative_and_reproducible() {
        let p = toy_problem(Gate::X, Encoding::Exciton, 2);
        let x = p.default_start();
        let a = p.objective(&x.values);
        assert!(a >= 0.0 && a.is_finite());
        assert_eq!(a, p.objective(&x.values));
        let e = p.evaluate(&x).unwrap();
        assert!(e.infidelity >= 0.0 && e.leakage >= 0.0);
        assert_eq!(e.objective, e.infidelity + e.leakage);
        // zero drive leaves no photon-excited population outside the exciton pair's own sector
        let still = ControlVector::new(&[], 3.0, None);
        let q = toy_problem(Gate::X, Encoding::Exciton, 0);
        let e = q.evaluate(&still).unwrap();
        assert!(e.columns.iter().all(|c| (c.norm() - 1.0).abs() < 1e-9));
    }

    #[test]
    fn identity_without_couplings_has_zero_objective() {
        let mut p = toy_problem(Gate::I, Encoding::Qudit, 0);
        p.template.g_x = 0.0;
        p.template.g_t = 0.0;
        // phases e^{-iE t/ħ} with E the qudit energies in the drive frame
        let x = ControlVector::new(&[], 2.0, None);
        let e = p.evaluate(&x).unwrap();
        let params = p.params_at(2.0).unwrap();
        let energies = [0.0, params.delta_t() , params.delta_x(), params.delta_x() + params.delta_t()];
        let tr: C64 = energies.iter().map(|&w| C64::from_polar(1.0, -w * 2.0 / params.hbar)).sum();
        assert!((e.infidelity - (1.0 - tr.norm_sqr() / 16.0)).abs() < 1e-9);
        assert!(e.leakage < 1e-20);
    }

    #[test]
    fn synthesis_result_is_self_verifying() {
        let p = toy_problem(Gate::X, Encoding::Exciton, 1);
        let r = synthesize(&p).unwrap();
        assert!(r.trace.windows(2).all(|w| w[1] <= w[0]));
        assert_eq!(p.objective(&r.controls.values), r.objective);
        assert!((r.objective - r.trace.last().unwrap()).abs() <= 1e-12);
        let json = serde_json::to_string(&r).unwrap();
        assert_eq!(serde_json::to_string(&synthesize(&p).unwrap()).unwrap(), json);
        let back: SynthesisResult = serde_json::from_str(&json).unwrap();
        assert_eq!(back, r);
        assert!(r.average_infidelity.is_some());
    }

    #[test]
    fn field_prescan_start_is_never_worse_than_its_grid() {
        let mut p = toy_problem(Gate::I, Encoding::Exciton, 1);
        p.config.field_prescan = 8;
        p.config.optimizer.max_iterations = 5;
        p.config.optimizer.restarts = 0;
        let b = p.bounds();
        let (lo, hi) = (b.lower[3], b.upper[3]);
        let mut x = p.default_start().values;
        let mut grid_best = p.objective(&x);
        for k in 0..8 {
            x[3] = lo + (hi - lo) * (k as f64 + 0.5) / 8.0;
            grid_best = grid_best.min(p.objective(&x));
        }
        let mut log = Vec::new();
        let r = synthesize_logged(&p, &mut log).unwrap();
        assert!(r.objective <= grid_best);
        assert_eq!(log.len(), r.evaluations);
        assert!(log.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn scan_reproduces_point_value() {
        let p = toy_problem(Gate::ISwap, Encoding::Qudit, 1);
        let x = p.default_start();
        let b = x.field();
        let scan = fidelity_scan_b(&p, &x, &[b, b + 0.5], None).unwrap();
        let direct = 1.0 - p.evaluate(&x).unwrap().infidelity;
        assert!((scan[0].1 - direct).abs() < 1e-15);
    }
}
