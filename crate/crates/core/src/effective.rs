//! Driven trion–exciton–polariton model on the product basis `|α, β, n⟩` and
//! its fixed-step RK4 propagation.
//!
//! Integration runs in a frame rotating at `ω_F` (the drive frequency by
//! default), where all energies are detunings of a few meV. States reported
//! in the lab frame are recovered exactly through `e^{−i ω_F N t/ħ}`, since the
//! excitation number `N = a†a + σ†σ + τ†τ` commutes with the undriven part.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fewbody::SystemResponse;
use crate::pulse::PulseTrain;

pub type C64 = Complex64;

const I: C64 = C64 { re: 0.0, im: 1.0 };

/// Exciton subsystem state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Matter {
    G,
    X,
}

/// Charged subsystem: the resident electron `|1↓⟩` or the trion `T`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Charge {
    Electron,
    Trion,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Label {
    pub matter: Matter,
    pub charge: Charge,
    pub photons: usize,
}

impl Label {
    pub const fn new(matter: Matter, charge: Charge, photons: usize) -> Self {
        Label { matter, charge, photons }
    }

    /// Eigenvalue of `a†a + σ†σ + τ†τ`.
    pub fn excitations(&self) -> usize {
        self.photons + (self.matter == Matter::X) as usize + (self.charge == Charge::Trion) as usize
    }
}

impl std::fmt::Display for Label {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let m = match self.matter {
            Matter::G => "G",
            Matter::X => "X",
        };
        let c = match self.charge {
            Charge::Electron => "1d",
            Charge::Trion => "T",
        };
        write!(f, "{m}_{c}_{}", self.photons)
    }
}

/// Qudit labels `|0⟩ … |3⟩`.
pub const QUDIT: [Label; 4] = [
    Label::new(Matter::G, Charge::Electron, 0),
    Label::new(Matter::G, Charge::Trion, 0),
    Label::new(Matter::X, Charge::Electron, 0),
    Label::new(Matter::X, Charge::Trion, 0),
];

/// Encoded computational subspace.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Encoding {
    /// `|G,1↓,1⟩ → |0⟩`, `|X,1↓,0⟩ → |1⟩`.
    Exciton,
    /// `|G,1↓,1⟩ → |0⟩`, `|G,T,0⟩ → |1⟩`.
    Trion,
    Qudit,
}

impl Encoding {
    pub fn labels(self) -> Vec<Label> {
        match self {
            Encoding::Exciton => vec![
                Label::new(Matter::G, Charge::Electron, 1),
                Label::new(Matter::X, Charge::Electron, 0),
            ],
            Encoding::Trion => vec![
                Label::new(Matter::G, Charge::Electron, 1),
                Label::new(Matter::G, Charge::Trion, 0),
            ],
            Encoding::Qudit => QUDIT.to_vec(),
        }
    }

    pub fn dim(self) -> usize {
        match self {
            Encoding::Qudit => 4,
            _ => 2,
        }
    }
}

/// `|α, β, n⟩` with `n ∈ 0..=N_ph`, indexed as `((2α + β)(N_ph + 1) + n)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProductBasis {
    n_ph: usize,
}

impl ProductBasis {
    pub fn new(n_ph: usize) -> Result<Self> {
        if n_ph == 0 {
            return Err(Error::Config("photon cutoff must be at least 1".into()));
        }
        Ok(ProductBasis { n_ph })
    }

    pub fn photon_cutoff(&self) -> usize {
        self.n_ph
    }

    pub fn dim(&self) -> usize {
        4 * (self.n_ph + 1)
    }

    pub fn index(&self, l: Label) -> Result<usize> {
        if l.photons > self.n_ph {
            return Err(Error::Config(format!("label {l} exceeds photon cutoff {}", self.n_ph)));
        }
        let block = 2 * (l.matter as usize) + l.charge as usize;
        Ok(block * (self.n_ph + 1) + l.photons)
    }

    pub fn label(&self, idx: usize) -> Label {
        let per = self.n_ph + 1;
        let block = idx / per;
        let matter = if block / 2 == 0 { Matter::G } else { Matter::X };
        let charge = if block % 2 == 0 { Charge::Electron } else { Charge::Trion };
        Label::new(matter, charge, idx % per)
    }

    pub fn labels(&self) -> Vec<Label> {
        (0..self.dim()).map(|k| self.label(k)).collect()
    }

    pub fn indices(&self, labels: &[Label]) -> Result<Vec<usize>> {
        labels.iter().map(|&l| self.index(l)).collect()
    }

    /// Complement of `labels` (the leakage set for an encoding).
    pub fn complement(&self, labels: &[Label]) -> Vec<usize> {
        (0..self.dim()).filter(|&k| !labels.contains(&self.label(k))).collect()
    }
}

/// Parameters of the effective Hamiltonian (energies in meV, ħ in meV·ps).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EffectiveParams {
    pub omega_cavity: f64,
    pub response: SystemResponse,
    pub g_x: f64,
    pub g_t: f64,
    pub omega_l: f64,
    pub n_ph: usize,
    pub hbar: f64,
}

impl EffectiveParams {
    pub fn validate(&self) -> Result<()> {
        let r = &self.response;
        let finite = [self.omega_cavity, self.g_x, self.g_t, self.omega_l, self.hbar, r.omega_x, r.omega_t, r.omega_e, r.p_x, r.p_t];
        if finite.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config("effective-model parameters must be finite".into()));
        }
        if !(self.hbar > 0.0) {
            return Err(Error::Config("hbar must be positive".into()));
        }
        ProductBasis::new(self.n_ph).map(|_| ())
    }

    pub fn basis(&self) -> Result<ProductBasis> {
        ProductBasis::new(self.n_ph)
    }

    /// `ω_X − ω_cavity`.
    pub fn delta_x(&self) -> f64 {
        self.response.omega_x - self.omega_cavity
    }

    /// `(ω_T − ω_e) − ω_cavity`.
    pub fn delta_t(&self) -> f64 {
        self.response.omega_t - self.response.omega_e - self.omega_cavity
    }

    /// `G_X = g_X P_X`.
    pub fn coupling_x(&self) -> f64 {
        self.g_x * self.response.p_x
    }

    /// `G_T = g_T P_T`.
    pub fn coupling_t(&self) -> f64 {
        self.g_t * self.response.p_t
    }
}

/// Reference frame, identified by its rotation frequency `ω_F` (meV) applied
/// to the excitation number.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Frame {
    Lab,
    /// Rotating at the drive frequency `ω_L`.
    Drive,
    Rotating(f64),
}

impl Default for Frame {
    fn default() -> Self {
        Frame::Drive
    }
}

impl Frame {
    pub fn frequency(self, p: &EffectiveParams) -> f64 {
        match self {
            Frame::Lab => 0.0,
            Frame::Drive => p.omega_l,
            Frame::Rotating(w) => w,
        }
    }
}

/// Action of a (possibly time-dependent) Hamiltonian in meV: `y = H(t) x`.
pub trait Generator: Sync {
    fn dim(&self) -> usize;
    fn apply(&self, t: f64, x: &[C64], y: &mut [C64]);
}

/// Time-independent dense Hamiltonian.
pub struct DenseGenerator {
    h: DMatrix<C64>,
}

impl DenseGenerator {
    pub fn new(h: DMatrix<C64>) -> Result<Self> {
        if !h.is_square() {
            return Err(Error::Dimension { expected: h.nrows(), got: h.ncols() });
        }
        Ok(DenseGenerator { h })
    }
}

impl Generator for DenseGenerator {
    fn dim(&self) -> usize {
        self.h.nrows()
    }

    fn apply(&self, _t: f64, x: &[C64], y: &mut [C64]) {
        let n = self.h.nrows();
        for (r, yr) in y.iter_mut().enumerate().take(n) {
            *yr = (0..n).map(|c| self.h[(r, c)] * x[c]).sum();
        }
    }
}

/// Sparse form of the effective Hamiltonian in a frame rotating at `ω_F`:
/// static diagonal, static real couplings, and the drive on `a†`/`a`.
pub struct EffectiveGenerator<'a> {
    diagonal: Vec<f64>,
    couplings: Vec<(usize, usize, f64)>,
    /// `(upper, lower, √n)` for `⟨upper| a† |lower⟩`.
    ladder: Vec<(usize, usize, f64)>,
    /// `ω_L − ω_F`.
    drive_detuning: f64,
    hbar: f64,
    train: &'a PulseTrain,
}

impl<'a> EffectiveGenerator<'a> {
    pub fn new(p: &EffectiveParams, train: &'a PulseTrain, frame: Frame) -> Result<Self> {
        p.validate()?;
        let basis = p.basis()?;
        let wf = frame.frequency(p);
        let transition_t = p.response.omega_t - p.response.omega_e;
        let diagonal = basis
            .labels()
            .iter()
            .map(|l| {
                let mut e = l.photons as f64 * (p.omega_cavity - wf);
                if l.matter == Matter::X {
                    e += p.response.omega_x - wf;
                }
                if l.charge == Charge::Trion {
                    e += transition_t - wf;
                }
                e
            })
            .collect();
        let (gx, gt) = (p.coupling_x(), p.coupling_t());
        let mut couplings = Vec::new();
        let mut ladder = Vec::new();
        for l in basis.labels() {
            if l.photons == 0 {
                continue;
            }
            let from = basis.index(l)?;
            let down = |m, c| basis.index(Label::new(m, c, l.photons - 1));
            let amp = (l.photons as f64).sqrt();
            // σ† a : |G, β, n⟩ → √n |X, β, n−1⟩
            if l.matter == Matter::G && gx != 0.0 {
                couplings.push((down(Matter::X, l.charge)?, from, gx * amp));
            }
            // τ† a : |α, 1↓, n⟩ → √n |α, T, n−1⟩
            if l.charge == Charge::Electron && gt != 0.0 {
                couplings.push((down(l.matter, Charge::Trion)?, from, gt * amp));
            }
            ladder.push((from, down(l.matter, l.charge)?, amp));
        }
        Ok(EffectiveGenerator { diagonal, couplings, ladder, drive_detuning: p.omega_l - wf, hbar: p.hbar, train })
    }

    pub fn hbar(&self) -> f64 {
        self.hbar
    }

    /// Drive coefficient of `a†` at time `t`: `Ω(t) e^{−i(ω_L − ω_F)t/ħ}`.
    fn drive(&self, t: f64) -> C64 {
        let omega = self.train.amplitude(t);
        if self.drive_detuning == 0.0 {
            C64::new(omega, 0.0)
        } else {
            C64::from_polar(omega, -self.drive_detuning * t / self.hbar)
        }
    }
}

impl Generator for EffectiveGenerator<'_> {
    fn dim(&self) -> usize {
        self.diagonal.len()
    }

    fn apply(&self, t: f64, x: &[C64], y: &mut [C64]) {
        for ((yk, xk), d) in y.iter_mut().zip(x).zip(&self.diagonal) {
            *yk = xk * d;
        }
        for &(r, c, g) in &self.couplings {
            y[r] += x[c] * g;
            y[c] += x[r] * g;
        }
        let d = self.drive(t);
        if d != C64::new(0.0, 0.0) {
            let dc = d.conj();
            for &(up, lo, s) in &self.ladder {
                y[up] += d * s * x[lo];
                y[lo] += dc * s * x[up];
            }
        }
    }
}

/// Dense `H(t)` in the lab frame, literally Eq.-style:
/// `ω a†a + ω_X σ†σ + (ω_T − ω_e) τ†τ + G_X(σ†a + a†σ) + G_T(τ†a + a†τ) + Ω(t)(e^{−iω_L t}a† + e^{iω_L t}a)`.
pub fn hamiltonian_at(t: f64, p: &EffectiveParams, train: &PulseTrain) -> Result<DMatrix<C64>> {
    hamiltonian_in_frame(t, p, train, Frame::Lab)
}

pub fn hamiltonian_in_frame(t: f64, p: &EffectiveParams, train: &PulseTrain, frame: Frame) -> Result<DMatrix<C64>> {
    let g = EffectiveGenerator::new(p, train, frame)?;
    let n = g.dim();
    let mut h = DMatrix::<C64>::zeros(n, n);
    let mut e = vec![C64::new(0.0, 0.0); n];
    let mut col = vec![C64::new(0.0, 0.0); n];
    for c in 0..n {
        e.iter_mut().for_each(|v| *v = C64::new(0.0, 0.0));
        e[c] = C64::new(1.0, 0.0);
        g.apply(t, &e, &mut col);
        h.set_column(c, &nalgebra::DVector::from_column_slice(&col));
    }
    Ok(h)
}

/// Amplitudes over the product basis at time `t` (ps).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateVector {
    pub t: f64,
    pub amplitudes: Vec<C64>,
}

impl StateVector {
    pub fn basis_state(dim: usize, idx: usize, t: f64) -> Self {
        let mut amplitudes = vec![C64::new(0.0, 0.0); dim];
        amplitudes[idx] = C64::new(1.0, 0.0);
        StateVector { t, amplitudes }
    }

    pub fn norm(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt()
    }
}

/// Fixed-step integration settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvolveOptions {
    /// Requested step (ps); the actual step divides the interval evenly.
    pub dt: f64,
    /// Frame the equations are integrated in.
    pub integration_frame: Frame,
    /// Frame the returned states are expressed in.
    pub report_frame: Frame,
    /// Keep every `sample_every`-th step (the endpoint is always kept).
    pub sample_every: usize,
    /// Largest tolerated `|‖ψ‖ − 1|` at the end.
    pub max_norm_drift: f64,
}

impl Default for EvolveOptions {
    fn default() -> Self {
        EvolveOptions {
            dt: 1e-3,
            integration_frame: Frame::Drive,
            report_frame: Frame::Lab,
            sample_every: 1,
            max_norm_drift: 1e-6,
        }
    }
}

/// Number of steps and the evened-out step for `[t0, tf]`.
pub fn step_count(t0: f64, tf: f64, dt: f64) -> Result<(usize, f64)> {
    if !(tf > t0) || !(dt > 0.0) || !dt.is_finite() || !tf.is_finite() || !t0.is_finite() {
        return Err(Error::Domain(format!("need t0 < tf and dt > 0, got t0 = {t0}, tf = {tf}, dt = {dt}")));
    }
    let n = ((tf - t0) / dt - 1e-9).ceil().max(1.0) as usize;
    Ok((n, (tf - t0) / n as f64))
}

/// Classical RK4 for `dψ/dt = −(i/ħ) H(t) ψ` on several columns at once.
/// `states` holds `k` columns of length `gen.dim()` back to back.
/// `observe(step, t, states)` runs after every step.
pub fn rk4<G: Generator + ?Sized>(
    gen: &G,
    hbar: f64,
    states: &mut [C64],
    t0: f64,
    tf: f64,
    dt: f64,
    mut observe: impl FnMut(usize, f64, &[C64]),
) -> Result<()> {
    let n = gen.dim();
    if n == 0 || states.len() % n != 0 {
        return Err(Error::Dimension { expected: n, got: states.len() });
    }
    let (steps, h) = step_count(t0, tf, dt)?;
    let len = states.len();
    let zero = C64::new(0.0, 0.0);
    let (mut k1, mut k2, mut k3, mut k4, mut tmp) =
        (vec![zero; len], vec![zero; len], vec![zero; len], vec![zero; len], vec![zero; len]);
    let scale = -I / hbar;
    let deriv = |t: f64, x: &[C64], y: &mut [C64]| {
        for (xc, yc) in x.chunks_exact(n).zip(y.chunks_exact_mut(n)) {
            gen.apply(t, xc, yc);
            yc.iter_mut().for_each(|v| *v *= scale);
        }
    };
    for s in 0..steps {
        let t = t0 + s as f64 * h;
        deriv(t, states, &mut k1);
        for ((o, x), k) in tmp.iter_mut().zip(states.iter()).zip(&k1) {
            *o = x + k * (0.5 * h);
        }
        deriv(t + 0.5 * h, &tmp, &mut k2);
        for ((o, x), k) in tmp.iter_mut().zip(states.iter()).zip(&k2) {
            *o = x + k * (0.5 * h);
        }
        deriv(t + 0.5 * h, &tmp, &mut k3);
        for ((o, x), k) in tmp.iter_mut().zip(states.iter()).zip(&k3) {
            *o = x + k * h;
        }
        deriv(t + h, &tmp, &mut k4);
        for (i, x) in states.iter_mut().enumerate() {
            *x += (k1[i] + (k2[i] + k3[i]) * 2.0 + k4[i]) * (h / 6.0);
        }
        observe(s + 1, if s + 1 == steps { tf } else { t0 + (s + 1) as f64 * h }, states);
    }
    Ok(())
}

fn check_drift(states: &[C64], n: usize, limit: f64, dt: f64) -> Result<()> {
    for col in states.chunks_exact(n) {
        let drift = (col.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt() - 1.0).abs();
        if !(drift <= limit) {
            return Err(Error::NormDrift { drift, limit, dt });
        }
    }
    Ok(())
}

/// Re-expresses a state from the frame rotating at `from` in the one rotating
/// at `to`: multiplies by `e^{i(ω_to − ω_from) N t/ħ}`.
fn change_frame(basis: &ProductBasis, state: &mut [C64], t: f64, from: f64, to: f64, hbar: f64) {
    let dw = to - from;
    if dw == 0.0 {
        return;
    }
    for (k, a) in state.iter_mut().enumerate() {
        let n = basis.label(k).excitations() as f64;
        *a *= C64::from_polar(1.0, dw * n * t / hbar);
    }
}

/// Sampled trajectory from `psi0` (given in the report frame at `t0`).
pub fn evolve(
    psi0: &StateVector,
    tf: f64,
    p: &EffectiveParams,
    train: &PulseTrain,
    opts: &EvolveOptions,
) -> Result<Vec<StateVector>> {
    let gen = EffectiveGenerator::new(p, train, opts.integration_frame)?;
    let basis = p.basis()?;
    if psi0.amplitudes.len() != basis.dim() {
        return Err(Error::Dimension { expected: basis.dim(), got: psi0.amplitudes.len() });
    }
    let (w_int, w_rep) = (opts.integration_frame.frequency(p), opts.report_frame.frequency(p));
    let mut state = psi0.amplitudes.clone();
    // frame state |ψ_F⟩ = e^{iω_F N t/ħ}|ψ_lab⟩
    change_frame(&basis, &mut state, psi0.t, w_rep, w_int, p.hbar);
    let every = opts.sample_every.max(1);
    let mut out = vec![psi0.clone()];
    let (steps, _) = step_count(psi0.t, tf, opts.dt)?;
    rk4(&gen, p.hbar, &mut state, psi0.t, tf, opts.dt, |s, t, x| {
        if s % every == 0 || s == steps {
            let mut v = x.to_vec();
            change_frame(&basis, &mut v, t, w_int, w_rep, p.hbar);
            out.push(StateVector { t, amplitudes: v });
        }
    })?;
    check_drift(&state, basis.dim(), opts.max_norm_drift, opts.dt)?;
    Ok(out)
}

/// Projected evolution operator `U_IJ = ⟨I| ψ_J(t_f)⟩` over `subspace`, with
/// every column evolved from `t = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct Propagation {
    pub u: DMatrix<C64>,
    /// Full final state of every column, in the report frame.
    pub columns: Vec<StateVector>,
}

impl Propagation {
    /// Population outside the subspace, per column.
    pub fn leakage(&self, basis: &ProductBasis, subspace: &[Label]) -> Vec<f64> {
        let out = basis.complement(subspace);
        self.columns.iter().map(|c| out.iter().map(|&k| c.amplitudes[k].norm_sqr()).sum()).collect()
    }
}

pub fn propagator(
    p: &EffectiveParams,
    train: &PulseTrain,
    tf: f64,
    subspace: &[Label],
    opts: &EvolveOptions,
) -> Result<Propagation> {
    let gen = EffectiveGenerator::new(p, train, opts.integration_frame)?;
    let basis = p.basis()?;
    let idx = basis.indices(subspace)?;
    let n = basis.dim();
    let k = idx.len();
    let mut states = vec![C64::new(0.0, 0.0); n * k];
    for (c, &i) in idx.iter().enumerate() {
        states[c * n + i] = C64::new(1.0, 0.0);
    }
    rk4(&gen, p.hbar, &mut states, 0.0, tf, opts.dt, |_, _, _| {})?;
    check_drift(&states, n, opts.max_norm_drift, opts.dt)?;
    let (w_int, w_rep) = (opts.integration_frame.frequency(p), opts.report_frame.frequency(p));
    let columns: Vec<StateVector> = states
        .chunks_exact_mut(n)
        .map(|col| {
            change_frame(&basis, col, tf, w_int, w_rep, p.hbar);
            StateVector { t: tf, amplitudes: col.to_vec() }
        })
        .collect();
    let u = DMatrix::from_fn(k, k, |r, c| columns[c].amplitudes[idx[r]]);
    Ok(Propagation { u, columns })
}

/// Columns evolved independently in parallel; same result as [`propagator`].
pub fn propagator_parallel(
    p: &EffectiveParams,
    train: &PulseTrain,
    tf: f64,
    subspace: &[Label],
    opts: &EvolveOptions,
) -> Result<Propagation> {
    let parts = subspace
        .par_iter()
        .map(|l| propagator(p, train, tf, std::slice::from_ref(l), opts))
        .collect::<Result<Vec<_>>>()?;
    let basis = p.basis()?;
    let idx = basis.indices(subspace)?;
    let columns: Vec<StateVector> = parts.into_iter().map(|mut q| q.columns.remove(0)).collect();
    let k = idx.len();
    let u = DMatrix::from_fn(k, k, |r, c| columns[c].amplitudes[idx[r]]);
    Ok(Propagation { u, columns })
}

/// `|⟨label|ψ⟩|²` per requested label.
pub fn populations(psi: &StateVector, basis: &ProductBasis, labels: &[Label]) -> Result<Vec<f64>> {
    basis.indices(labels).map(|idx| idx.iter().map(|&k| psi.amplitudes[k].norm_sqr()).collect())
}

/// `⟨ψ| a†a + σ†σ + τ†τ |ψ⟩`.
pub fn excitation_number(psi: &StateVector, basis: &ProductBasis) -> f64 {
    psi.amplitudes.iter().enumerate().map(|(k, a)| a.norm_sqr() * basis.label(k).excitations() as f64).sum()
}
