//! Exciton and negative-trion blocks at fixed total angular momentum:
//! configuration bases, Hamiltonian assembly, exact diagonalization and the
//! field-dependent quantities handed to the effective polariton model.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::basis::{
    alpha_ratio, orbital_energy, zeeman_energy, Carrier, LandauBasis, MaterialParams, Orbital, Spin,
};
use crate::coulomb::{CoulombIntegrator, CoulombTable, FormFactor};
use crate::error::{Error, Result};

/// Electron–hole pair `|i⟩_e ⊗ |j̄⟩_h`. `hole` is the orbital index `j`; the
/// hole itself carries `(n_j, -l_j)` and its own spin `hole_spin`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PairConfig {
    pub electron: usize,
    pub electron_spin: Spin,
    pub hole: usize,
    pub hole_spin: Spin,
}

/// Spin content of a pair block. The optically active pair is e↑ with h↓.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairSpins {
    pub electron: Spin,
    pub hole: Spin,
}

impl PairSpins {
    pub const BRIGHT: PairSpins = PairSpins { electron: Spin::Up, hole: Spin::Down };
}

impl Default for PairSpins {
    fn default() -> Self {
        PairSpins::BRIGHT
    }
}

/// Orbital exchange symmetry of the two electrons. The singlet carries a
/// symmetric orbital part, the triplet an antisymmetric one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrionSector {
    Singlet,
    Triplet,
}

impl TrionSector {
    fn exchange_sign(self) -> f64 {
        match self {
            TrionSector::Singlet => 1.0,
            TrionSector::Triplet => -1.0,
        }
    }
}

/// Two electrons in orbitals `e1 ≤ e2` (strictly `<` for the triplet) and a
/// hole in the conjugate of orbital `hole`.
///
/// Spin-resolved, the singlet config is `(e†_{e1↑}e†_{e2↓} − e†_{e1↓}e†_{e2↑})/√2`
/// (just `e†_{e1↑}e†_{e1↓}` when `e1 == e2`) and the `S_z = 0` triplet config is
/// `(e†_{e1↑}e†_{e2↓} + e†_{e1↓}e†_{e2↑})/√2`, each times `h†_{hole}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TrionConfig {
    pub e1: usize,
    pub e2: usize,
    pub hole: usize,
    pub hole_spin: Spin,
    pub sector: TrionSector,
}

/// Which trion block to build.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrionBlockSpec {
    pub lz: i32,
    pub sector: TrionSector,
    /// Total electron spin projection (−1, 0, +1; the singlet only allows 0).
    pub electron_sz: i32,
    pub hole_spin: Spin,
}

impl TrionBlockSpec {
    pub fn singlet(lz: i32) -> Self {
        TrionBlockSpec { lz, sector: TrionSector::Singlet, electron_sz: 0, hole_spin: Spin::Down }
    }

    /// Optically active (`S_z = 0`) triplet component.
    pub fn bright_triplet(lz: i32) -> Self {
        TrionBlockSpec { lz, sector: TrionSector::Triplet, electron_sz: 0, hole_spin: Spin::Down }
    }
}

pub fn pair_lz(basis: &LandauBasis, c: &PairConfig) -> i32 {
    basis.orbital(c.electron).l - basis.orbital(c.hole).l
}

pub fn trion_lz(basis: &LandauBasis, c: &TrionConfig) -> i32 {
    basis.orbital(c.e1).l + basis.orbital(c.e2).l - basis.orbital(c.hole).l
}

/// All electron–hole pairs with `l_e + l_h = lz` in the given spin sector.
pub fn build_pair_basis(basis: &LandauBasis, lz: i32, spins: PairSpins) -> Result<Vec<PairConfig>> {
    let n = basis.len();
    let configs: Vec<PairConfig> = (0..n)
        .flat_map(|e| (0..n).map(move |h| (e, h)))
        .filter(|&(e, h)| basis.orbital(e).l - basis.orbital(h).l == lz)
        .map(|(e, h)| PairConfig { electron: e, electron_spin: spins.electron, hole: h, hole_spin: spins.hole })
        .collect();
    if configs.is_empty() {
        return Err(Error::EmptyBlock(format!("no electron-hole pair with L_z = {lz}")));
    }
    Ok(configs)
}

/// Pauli-allowed two-electron + hole configurations at total `L_z`.
pub fn build_trion_basis(basis: &LandauBasis, spec: TrionBlockSpec) -> Result<Vec<TrionConfig>> {
    if spec.sector == TrionSector::Singlet && spec.electron_sz != 0 {
        return Err(Error::Config("a singlet has electron S_z = 0".into()));
    }
    if spec.electron_sz.abs() > 1 {
        return Err(Error::Config(format!("electron S_z must be -1, 0 or 1, got {}", spec.electron_sz)));
    }
    let n = basis.len();
    let mut configs = Vec::new();
    for e1 in 0..n {
        let start = match spec.sector {
            TrionSector::Singlet => e1,
            TrionSector::Triplet => e1 + 1,
        };
        for e2 in start..n {
            for hole in 0..n {
                let c = TrionConfig { e1, e2, hole, hole_spin: spec.hole_spin, sector: spec.sector };
                if trion_lz(basis, &c) == spec.lz {
                    configs.push(c);
                }
            }
        }
    }
    if configs.is_empty() {
        return Err(Error::EmptyBlock(format!("no {:?} trion configuration with L_z = {}", spec.sector, spec.lz)));
    }
    Ok(configs)
}

/// A fixed-`L_z` block ready for assembly.
#[derive(Debug, Clone, PartialEq)]
pub enum Block {
    Exciton(Vec<PairConfig>),
    Trion { configs: Vec<TrionConfig>, electron_sz: i32 },
}

impl Block {
    pub fn len(&self) -> usize {
        match self {
            Block::Exciton(c) => c.len(),
            Block::Trion { configs, .. } => configs.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Per-orbital energies at one field.
struct LevelEnergies {
    electron: Vec<f64>,
    hole: Vec<f64>,
}

impl LevelEnergies {
    fn new(basis: &LandauBasis, b: f64, p: &MaterialParams) -> Result<Self> {
        let electron = basis
            .orbitals()
            .iter()
            .map(|o| orbital_energy(*o, Carrier::Electron, b, p))
            .collect::<Result<_>>()?;
        let hole = basis
            .orbitals()
            .iter()
            .map(|o| orbital_energy(Orbital::new(o.n, -o.l), Carrier::Hole, b, p))
            .collect::<Result<_>>()?;
        Ok(LevelEnergies { electron, hole })
    }
}

fn check_table(table: &CoulombTable, b: f64, p: &MaterialParams) -> Result<()> {
    if let FormFactor::Finite(alpha) = table.form_factor() {
        let expected = alpha_ratio(p.well_width, b)?;
        if (alpha - expected).abs() > 1e-9 * expected {
            return Err(Error::Config(format!(
                "Coulomb table built at alpha = {alpha}, but B = {b} T needs alpha = {expected}"
            )));
        }
    }
    Ok(())
}

/// Electron–hole attraction `⟨i j̄|V|k l̄⟩ = ⟨i l|V|k j⟩` (hole orbitals are the
/// complex conjugates of the electron ones).
#[inline]
fn eh_element(table: &CoulombTable, i: usize, j: usize, k: usize, l: usize) -> Result<f64> {
    table.get(i, l, k, j)
}

/// Builds the real-symmetric block Hamiltonian (meV).
///
/// Diagonal: sum of single-particle energies. Interaction: `β(B)` times the
/// electron–electron repulsion (trions) minus the electron–hole attraction.
pub fn assemble_hamiltonian(block: &Block, b: f64, p: &MaterialParams, table: &CoulombTable) -> Result<DMatrix<f64>> {
    if block.is_empty() {
        return Err(Error::EmptyBlock("cannot assemble an empty block".into()));
    }
    check_table(table, b, p)?;
    let levels = LevelEnergies::new(table.basis(), b, p)?;
    let beta = p.coulomb_scale(b);
    let dim = block.len();
    let mut h = DMatrix::<f64>::zeros(dim, dim);
    match block {
        Block::Exciton(configs) => {
            for (x, cx) in configs.iter().enumerate() {
                for (y, cy) in configs.iter().enumerate().skip(x) {
                    let mut v = -beta * eh_element(table, cx.electron, cx.hole, cy.electron, cy.hole)?;
                    if x == y {
                        v += levels.electron[cx.electron]
                            + levels.hole[cx.hole]
                            + zeeman_energy(cx.electron_spin, Carrier::Electron, b, p)
                            + zeeman_energy(cx.hole_spin, Carrier::Hole, b, p);
                    }
                    h[(x, y)] = v;
                    h[(y, x)] = v;
                }
            }
        }
        Block::Trion { configs, electron_sz } => {
            let zeeman_e = *electron_sz as f64 * p.g_factor(Carrier::Electron, b) * p.mu_b * b;
            for (x, cx) in configs.iter().enumerate() {
                for (y, cy) in configs.iter().enumerate().skip(x) {
                    let mut v = trion_element(table, &levels, beta, cx, cy)?;
                    if x == y {
                        v += zeeman_e + zeeman_energy(cx.hole_spin, Carrier::Hole, b, p);
                    }
                    h[(x, y)] = v;
                    h[(y, x)] = v;
                }
            }
        }
    }
    Ok(h)
}

/// Matrix element between two (anti)symmetrised trion configurations.
fn trion_element(
    table: &CoulombTable,
    levels: &LevelEnergies,
    beta: f64,
    cx: &TrionConfig,
    cy: &TrionConfig,
) -> Result<f64> {
    let eta = cx.sector.exchange_sign();
    let (i, j, k) = (cx.e1, cx.e2, cx.hole);
    let (ip, jp, kp) = (cy.e1, cy.e2, cy.hole);
    // Unsymmetrised element ⟨a b k| H |c d k'⟩ between product states.
    let product = |a: usize, bb: usize, c: usize, d: usize| -> Result<f64> {
        let mut v = 0.0;
        if k == kp {
            if a == c && bb == d {
                v += levels.electron[a] + levels.electron[bb] + levels.hole[k];
            }
            v += beta * table.get(a, bb, c, d)?;
        }
        if bb == d {
            v -= beta * eh_element(table, a, k, c, kp)?;
        }
        if a == c {
            v -= beta * eh_element(table, bb, k, d, kp)?;
        }
        Ok(v)
    };
    let norm = |a: usize, bb: usize| if a == bb { 0.5 } else { std::f64::consts::FRAC_1_SQRT_2 };
    // The operator is exchange symmetric, so ⟨ji|O|j'i'⟩ = ⟨ij|O|i'j'⟩.
    let direct = product(i, j, ip, jp)?;
    let exchange = product(i, j, jp, ip)?;
    Ok(2.0 * norm(i, j) * norm(ip, jp) * (direct + eta * exchange))
}

/// Ascending eigenvalues (meV) and matching orthonormal eigenvectors (columns).
#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumResult {
    pub energies: Vec<f64>,
    pub vectors: DMatrix<f64>,
}

impl SpectrumResult {
    pub fn ground_energy(&self) -> f64 {
        self.energies[0]
    }

    pub fn ground_state(&self) -> DVector<f64> {
        self.vectors.column(0).into_owned()
    }
}

/// Full eigendecomposition of a real-symmetric matrix.
pub fn diagonalize(h: &DMatrix<f64>) -> Result<SpectrumResult> {
    if !h.is_square() {
        return Err(Error::Dimension { expected: h.nrows(), got: h.ncols() });
    }
    let asym = (h - h.transpose()).abs().max();
    let scale = h.abs().max().max(1.0);
    if asym > 1e-10 * scale {
        return Err(Error::NotHermitian(asym));
    }
    let eig = nalgebra::SymmetricEigen::new(h.clone());
    let mut order: Vec<usize> = (0..h.nrows()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let energies = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let vectors = DMatrix::from_fn(h.nrows(), h.nrows(), |r, c| eig.eigenvectors[(r, order[c])]);
    Ok(SpectrumResult { energies, vectors })
}

/// Field-dependent inputs of the effective polariton model (meV; P's dimensionless).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SystemResponse {
    pub omega_x: f64,
    pub omega_t: f64,
    pub omega_e: f64,
    pub p_x: f64,
    pub p_t: f64,
}

/// Truncation and block choices for the few-body solver.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FewBodyConfig {
    pub levels: usize,
    pub per_level: usize,
    /// Quadrature tolerance of the Coulomb integrals.
    pub tolerance: f64,
    /// Block whose ground state is the optically active trion `T`.
    pub bright_trion: TrionBlockSpec,
    /// Singlet block used for binding energies.
    pub singlet: TrionBlockSpec,
    /// Triplet block used for binding energies.
    pub triplet: TrionBlockSpec,
    pub dipole_normalization: DipoleNormalization,
}

/// `Raw` is the bare amplitude sum, which grows with the number of degenerate
/// pairs a correlated state spreads over. `Bounded` divides by the square root
/// of the number of contributing configurations, so that `|P| ≤ 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DipoleNormalization {
    #[default]
    Raw,
    Bounded,
}

impl Default for FewBodyConfig {
    fn default() -> Self {
        FewBodyConfig {
            levels: 3,
            per_level: 6,
            tolerance: 1e-9,
            bright_trion: TrionBlockSpec::bright_triplet(1),
            singlet: TrionBlockSpec::singlet(0),
            triplet: TrionBlockSpec::bright_triplet(1),
            dipole_normalization: DipoleNormalization::Raw,
        }
    }
}

/// Ground state of one block.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockGround {
    pub energy: f64,
    pub amplitudes: DVector<f64>,
}

/// Binding energies `E_b = E_trion − (ω_X + ω_e)`; negative when bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BindingEnergies {
    pub b: f64,
    pub e_singlet: f64,
    pub e_triplet: f64,
    pub e_exciton_electron: f64,
    pub eb_singlet: f64,
    pub eb_triplet: f64,
}

/// Reuses one set of tabulated radial overlaps for every field.
pub struct FewBodySolver {
    params: MaterialParams,
    config: FewBodyConfig,
    integrator: CoulombIntegrator<f64>,
}

impl FewBodySolver {
    pub fn new(params: MaterialParams, config: FewBodyConfig) -> Result<Self> {
        params.validate()?;
        if config.levels == 0 || config.per_level == 0 {
            return Err(Error::Config("basis needs at least one level and one state per level".into()));
        }
        let basis = LandauBasis::new(config.levels, config.per_level);
        let integrator = CoulombIntegrator::new(&basis, config.tolerance);
        Ok(FewBodySolver { params, config, integrator })
    }

    pub fn basis(&self) -> &LandauBasis {
        self.integrator.basis()
    }

    pub fn params(&self) -> &MaterialParams {
        &self.params
    }

    pub fn config(&self) -> &FewBodyConfig {
        &self.config
    }

    pub fn integrator(&self) -> &CoulombIntegrator<f64> {
        &self.integrator
    }

    pub fn table(&self, b: f64) -> Result<CoulombTable> {
        let alpha = alpha_ratio(self.params.well_width, b)?;
        CoulombTable::build(&self.integrator, FormFactor::finite(alpha)?)
    }

    pub fn exciton(&self, b: f64, table: &CoulombTable) -> Result<(Vec<PairConfig>, BlockGround)> {
        let configs = build_pair_basis(self.basis(), 0, PairSpins::BRIGHT)?;
        let block = Block::Exciton(configs);
        let spec = diagonalize(&assemble_hamiltonian(&block, b, &self.params, table)?)?;
        let Block::Exciton(configs) = block else { unreachable!() };
        Ok((configs, BlockGround { energy: spec.ground_energy(), amplitudes: spec.ground_state() }))
    }

    pub fn trion(&self, b: f64, table: &CoulombTable, spec: TrionBlockSpec) -> Result<(Vec<TrionConfig>, BlockGround)> {
        let configs = build_trion_basis(self.basis(), spec)?;
        let block = Block::Trion { configs, electron_sz: spec.electron_sz };
        let s = diagonalize(&assemble_hamiltonian(&block, b, &self.params, table)?)?;
        let Block::Trion { configs, .. } = block else { unreachable!() };
        Ok((configs, BlockGround { energy: s.ground_energy(), amplitudes: s.ground_state() }))
    }

    /// Lowest spin-↓ electron energy.
    pub fn free_electron_energy(&self, b: f64) -> Result<f64> {
        let e = orbital_energy(self.basis().orbital(0), Carrier::Electron, b, &self.params)?;
        Ok(e + zeeman_energy(Spin::Down, Carrier::Electron, b, &self.params))
    }

    pub fn response(&self, b: f64) -> Result<SystemResponse> {
        let table = self.table(b)?;
        self.response_with_table(b, &table)
    }

    pub fn response_with_table(&self, b: f64, table: &CoulombTable) -> Result<SystemResponse> {
        let (pairs, x) = self.exciton(b, table)?;
        let (trions, t) = self.trion(b, table, self.config.bright_trion)?;
        let omega_e = self.free_electron_energy(b)?;
        let mut p_x = exciton_dipole(&pairs, &x.amplitudes).abs();
        let spectator = spectator_orbital(self.basis(), self.config.bright_trion.lz);
        let mut p_t = spectator.map(|f| trion_dipole(&trions, &t.amplitudes, f).abs()).unwrap_or(0.0);
        if self.config.dipole_normalization == DipoleNormalization::Bounded {
            p_x /= (pairs.iter().filter(|c| c.electron == c.hole).count().max(1) as f64).sqrt();
            p_t /= match spectator {
                Some(f) => (trions.iter().filter(|c| trion_dipole_weight(c, f) != 0.0).count().max(1) as f64).sqrt(),
                None => 1.0,
            };
        }
        Ok(SystemResponse { omega_x: x.energy, omega_t: t.energy, omega_e, p_x, p_t })
    }

    pub fn binding_energies(&self, b: f64) -> Result<BindingEnergies> {
        let table = self.table(b)?;
        let (_, x) = self.exciton(b, &table)?;
        let (_, s) = self.trion(b, &table, self.config.singlet)?;
        let (_, t) = self.trion(b, &table, self.config.triplet)?;
        let e_xe = x.energy + self.free_electron_energy(b)?;
        Ok(BindingEnergies {
            b,
            e_singlet: s.energy,
            e_triplet: t.energy,
            e_exciton_electron: e_xe,
            eb_singlet: s.energy - e_xe,
            eb_triplet: t.energy - e_xe,
        })
    }
}

/// `P_X = Σ_i φ_X(i, ī)`: amplitude on pairs whose hole is the conjugate of the electron.
pub fn exciton_dipole(configs: &[PairConfig], amplitudes: &DVector<f64>) -> f64 {
    configs
        .iter()
        .zip(amplitudes.iter())
        .filter(|(c, _)| c.electron == c.hole && c.electron_spin == Spin::Up && c.hole_spin == Spin::Down)
        .map(|(_, a)| *a)
        .sum()
}

/// Electron orbital left behind after recombination of a trion with total
/// `lz`: the lowest orbital carrying `l = lz` (the recombining pair carries none).
pub fn spectator_orbital(basis: &LandauBasis, lz: i32) -> Option<usize> {
    basis.orbitals().iter().position(|o| o.l == lz)
}

/// `⟨f↓| ⊗ ⟨0|_h Σ_m h_{m̄↓} e_{m↑} |T⟩` for a block of (anti)symmetrised configurations.
pub fn trion_dipole(configs: &[TrionConfig], amplitudes: &DVector<f64>, spectator: usize) -> f64 {
    configs.iter().zip(amplitudes.iter()).map(|(c, a)| trion_dipole_weight(c, spectator) * a).sum()
}

/// Overlap of `Σ_m h_{m̄↓} e_{m↑}` applied to one configuration with `e†_{f↓}|0⟩`.
fn trion_dipole_weight(c: &TrionConfig, f: usize) -> f64 {
    if c.hole_spin != Spin::Down {
        return 0.0;
    }
    let r = std::f64::consts::FRAC_1_SQRT_2;
    let (i, j, k) = (c.e1, c.e2, c.hole);
    let d = |x: usize, y: usize| (x == y) as i32 as f64;
    match c.sector {
        TrionSector::Triplet => r * (d(i, f) * d(j, k) - d(j, f) * d(i, k)),
        TrionSector::Singlet if i == j => -d(i, k) * d(i, f),
        TrionSector::Singlet => -r * (d(i, k) * d(j, f) + d(j, k) * d(i, f)),
    }
}

/// Convenience wrapper: response at one field with a freshly built solver.
pub fn system_response(b: f64, p: &MaterialParams, config: &FewBodyConfig) -> Result<SystemResponse> {
    if !(b > 0.0) {
        return Err(Error::Domain(format!("magnetic field must be positive, got {b} T")));
    }
    FewBodySolver::new(p.clone(), *config)?.response(b)
}

/// Extrapolated field where the singlet and triplet binding energies cross.
///
/// Each branch is fitted by least squares with a polynomial of `degree` in B;
/// the smallest root of the difference in `[0, 100] T` is returned.
pub fn crossing_estimate(samples: &[(f64, f64, f64)], degree: usize) -> Result<f64> {
    if samples.len() < degree + 2 || samples.len() < 2 {
        return Err(Error::Config(format!(
            "crossing estimate needs at least {} samples, got {}",
            (degree + 2).max(2),
            samples.len()
        )));
    }
    let fields: Vec<f64> = samples.iter().map(|s| s.0).collect();
    let singlet = polyfit(&fields, &samples.iter().map(|s| s.1).collect::<Vec<_>>(), degree)?;
    let triplet = polyfit(&fields, &samples.iter().map(|s| s.2).collect::<Vec<_>>(), degree)?;
    let diff: Vec<f64> = singlet.iter().zip(&triplet).map(|(a, b)| a - b).collect();
    let scale = samples.iter().map(|s| s.1.abs().max(s.2.abs())).fold(0.0, f64::max).max(1e-300);
    if diff.iter().skip(1).all(|c| c.abs() < 1e-12 * scale) {
        return Err(Error::NoCrossing("branches are parallel".into()));
    }
    let lo = 0.0;
    let f = |x: f64| diff.iter().rev().fold(0.0, |acc, c| acc * x + c);
    let steps = 20_000;
    let h = (100.0 - lo) / steps as f64;
    let mut a = lo;
    let mut fa = f(a);
    if fa == 0.0 {
        return Ok(a);
    }
    for k in 1..=steps {
        let b = lo + k as f64 * h;
        let fb = f(b);
        if fb == 0.0 {
            return Ok(b);
        }
        if fa.signum() != fb.signum() {
            let (mut x0, mut x1, mut f0) = (a, b, fa);
            for _ in 0..200 {
                let m = 0.5 * (x0 + x1);
                let fm = f(m);
                if fm == 0.0 || (x1 - x0) < 1e-13 * m.abs().max(1.0) {
                    return Ok(m);
                }
                if fm.signum() == f0.signum() {
                    x0 = m;
                    f0 = fm;
                } else {
                    x1 = m;
                }
            }
            return Ok(0.5 * (x0 + x1));
        }
        a = b;
        fa = fb;
    }
    Err(Error::NoCrossing(format!("no intersection of the fitted branches in [{lo}, 100] T")))
}

/// Samples in the upper half of the sampled field range, the window used to
/// extrapolate towards high field.
pub fn high_field_window(samples: &[(f64, f64, f64)]) -> Vec<(f64, f64, f64)> {
    let lo = samples.iter().map(|s| s.0).fold(f64::INFINITY, f64::min);
    let hi = samples.iter().map(|s| s.0).fold(f64::NEG_INFINITY, f64::max);
    let mid = 0.5 * (lo + hi);
    samples.iter().copied().filter(|s| s.0 >= mid).collect()
}

/// Least-squares polynomial coefficients, lowest order first.
pub fn polyfit(x: &[f64], y: &[f64], degree: usize) -> Result<Vec<f64>> {
    if x.len() != y.len() {
        return Err(Error::Dimension { expected: x.len(), got: y.len() });
    }
    let a = DMatrix::from_fn(x.len(), degree + 1, |r, c| x[r].powi(c as i32));
    let rhs = DVector::from_column_slice(y);
    let svd = a.svd(true, true);
    let sol = svd.solve(&rhs, 1e-14).map_err(|e| Error::Domain(e.to_string()))?;
    Ok(sol.iter().copied().collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::build_landau_basis;
    use crate::coulomb::coulomb_element;

    fn table_for(basis: &LandauBasis, b: f64, p: &MaterialParams) -> CoulombTable {
        let alpha = alpha_ratio(p.well_width, b).unwrap();
        CoulombTable::compute(basis, FormFactor::Finite(alpha), 1e-10).unwrap()
    }

    #[test]
    fn pair_basis_examples() {
        let one = build_landau_basis(1, 1);
        let pairs = build_pair_basis(&one, 0, PairSpins::BRIGHT).unwrap();
        assert_eq!(pairs, vec![PairConfig { electron: 0, electron_spin: Spin::Up, hole: 0, hole_spin: Spin::Down }]);
        assert!(matches!(build_pair_basis(&one, 3, PairSpins::BRIGHT), Err(Error::EmptyBlock(_))));

        let three = build_landau_basis(1, 3);
        let pairs = build_pair_basis(&three, 0, PairSpins::BRIGHT).unwrap();
        let brute: Vec<(usize, usize)> = (0..3)
            .flat_map(|e| (0..3).map(move |h| (e, h)))
            .filter(|&(e, h)| three.orbital(e).l + (-three.orbital(h).l) == 0)
            .collect();
        assert_eq!(pairs.iter().map(|c| (c.electron, c.hole)).collect::<Vec<_>>(), brute);
    }

    #[test]
    fn trion_basis_examples() {
        let one = build_landau_basis(1, 1);
        let s = build_trion_basis(&one, TrionBlockSpec::singlet(0)).unwrap();
        assert_eq!(s.len(), 1);
        assert!(matches!(build_trion_basis(&one, TrionBlockSpec::bright_triplet(0)), Err(Error::EmptyBlock(_))));

        // brute force over spin-orbital determinants of a 2-orbital basis
        let two = build_landau_basis(1, 2);
        for lz in -2..=4 {
            let mut singlet = 0;
            let mut triplet = 0;
            for a in 0..2 {
                for b in a..2 {
                    for h in 0..2 {
                        let l = two.orbital(a).l + two.orbital(b).l - two.orbital(h).l;
                        if l != lz {
                            continue;
                        }
                        // spin-orbital determinants with S_z = 0 split into
                        // one symmetric and (a != b) one antisymmetric orbital combination
                        singlet += 1;
                        if a != b {
                            triplet += 1;
                        }
                    }
                }
            }
            let count = |spec| build_trion_basis(&two, spec).map(|v| v.len()).unwrap_or(0);
            assert_eq!(count(TrionBlockSpec::singlet(lz)), singlet);
            assert_eq!(count(TrionBlockSpec::bright_triplet(lz)), triplet);
        }
    }

    #[test]
    fn interaction_off_gives_single_particle_sums() {
        let p = MaterialParams { beta_coeff: 0.0, ..Default::default() };
        let basis = build_landau_basis(2, 3);
        let b = 4.0;
        let table = table_for(&basis, b, &p);
        let pairs = build_pair_basis(&basis, 0, PairSpins::BRIGHT).unwrap();
        let h = assemble_hamiltonian(&Block::Exciton(pairs.clone()), b, &p, &table).unwrap();
        for x in 0..h.nrows() {
            for y in 0..h.ncols() {
                if x != y {
                    assert_eq!(h[(x, y)], 0.0);
                }
            }
        }
        let spec = diagonalize(&h).unwrap();
        let mut sums: Vec<f64> = pairs
            .iter()
            .map(|c| {
                orbital_energy(basis.orbital(c.electron), Carrier::Electron, b, &p).unwrap()
                    + zeeman_energy(Spin::Up, Carrier::Electron, b, &p)
                    + orbital_energy(
                        Orbital::new(basis.orbital(c.hole).n, -basis.orbital(c.hole).l),
                        Carrier::Hole,
                        b,
                        &p,
                    )
                    .unwrap()
                    + zeeman_energy(Spin::Down, Carrier::Hole, b, &p)
            })
            .collect();
        sums.sort_by(f64::total_cmp);
        assert_eq!(spec.energies, sums);
    }

    #[test]
    fn mismatched_table_rejected() {
        let p = MaterialParams::default();
        let basis = build_landau_basis(1, 2);
        let table = table_for(&basis, 2.0, &p);
        let pairs = build_pair_basis(&basis, 0, PairSpins::BRIGHT).unwrap();
        assert!(assemble_hamiltonian(&Block::Exciton(pairs), 3.0, &p, &table).is_err());
    }

    #[test]
    fn diagonalize_examples() {
        let id = DMatrix::<f64>::identity(4, 4);
        assert_eq!(diagonalize(&id).unwrap().energies, vec![1.0; 4]);
        let d = DMatrix::from_diagonal(&DVector::from_vec(vec![3.0, 1.0, 2.0]));
        assert_eq!(diagonalize(&d).unwrap().energies, vec![1.0, 2.0, 3.0]);
        let bad = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 0.0, 1.0]);
        assert!(matches!(diagonalize(&bad), Err(Error::NotHermitian(_))));
    }

    #[test]
    fn crossing_examples() {
        let samples: Vec<_> = (0..6)
            .map(|k| {
                let b = 1.0 + k as f64;
                (b, -1.0 - 0.1 * b, -5.2 - 0.0 * b)
            })
            .collect();
        // -1 - 0.1 B = -5.2  →  B = 42
        let x = crossing_estimate(&samples, 1).unwrap();
        assert!((x - 42.0).abs() < 1e-9);
        let parallel: Vec<_> = (0..6).map(|k| (1.0 + k as f64, -1.0 - 0.1 * k as f64, -2.0 - 0.1 * k as f64)).collect();
        assert!(matches!(crossing_estimate(&parallel, 1), Err(Error::NoCrossing(_))));
    }

    fn toy_params() -> MaterialParams {
        MaterialParams { e_gap: 0.0, ..Default::default() }
    }

    #[test]
    fn toy_pair_block_matches_closed_form() {
        let p = toy_params();
        let b = 3.0;
        let o = [Orbital::new(0, 0), Orbital::new(0, 1)];
        let basis = LandauBasis::from_orbitals(o.to_vec());
        let alpha = alpha_ratio(p.well_width, b).unwrap();
        let ff = FormFactor::Finite(alpha);
        let table = CoulombTable::compute(&basis, ff, 1e-10).unwrap();
        let pairs = build_pair_basis(&basis, 0, PairSpins::BRIGHT).unwrap();
        assert_eq!(pairs.len(), 2);
        let h = assemble_hamiltonian(&Block::Exciton(pairs), b, &p, &table).unwrap();

        // independent entries: single-particle sums and direct Coulomb evaluation
        let beta = p.coulomb_scale(b);
        let zee = zeeman_energy(Spin::Up, Carrier::Electron, b, &p) + zeeman_energy(Spin::Down, Carrier::Hole, b, &p);
        let single = |q: Orbital| {
            orbital_energy(q, Carrier::Electron, b, &p).unwrap()
                + orbital_energy(Orbital::new(q.n, -q.l), Carrier::Hole, b, &p).unwrap()
                + zee
        };
        let v = |a, bb, c, d| coulomb_element([a, bb, c, d], ff, 1e-10).unwrap();
        let a11 = single(o[0]) - beta * v(o[0], o[0], o[0], o[0]);
        let a22 = single(o[1]) - beta * v(o[1], o[1], o[1], o[1]);
        let a12 = -beta * v(o[0], o[1], o[1], o[0]);
        assert!((h[(0, 0)] - a11).abs() < 1e-9);
        assert!((h[(1, 1)] - a22).abs() < 1e-9);
        assert!((h[(0, 1)] - a12).abs() < 1e-9);

        let (a, d, c) = (h[(0, 0)], h[(1, 1)], h[(0, 1)]);
        let mean = 0.5 * (a + d);
        let rad = (0.25 * (a - d) * (a - d) + c * c).sqrt();
        let e = diagonalize(&h).unwrap().energies;
        assert!((e[0] - (mean - rad)).abs() < 1e-12);
        assert!((e[1] - (mean + rad)).abs() < 1e-12);
    }

    /// Characteristic polynomial coefficients by Faddeev–LeVerrier, highest power first.
    fn char_poly(a: &DMatrix<f64>) -> Vec<f64> {
        let n = a.nrows();
        let mut coeffs = vec![1.0];
        let mut m = DMatrix::<f64>::zeros(n, n);
        for k in 1..=n {
            m = a * &m + DMatrix::identity(n, n) * coeffs[k - 1];
            let c = -(a * &m).trace() / k as f64;
            coeffs.push(c);
        }
        coeffs
    }

    #[test]
    fn random_symmetric_matches_characteristic_polynomial() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(6);
        for _ in 0..20 {
            let mut h = DMatrix::<f64>::zeros(6, 6);
            for r in 0..6 {
                for c in r..6 {
                    let x: f64 = rng.gen_range(-1.0..1.0);
                    h[(r, c)] = x;
                    h[(c, r)] = x;
                }
            }
            let spec = diagonalize(&h).unwrap();
            // expand Π(λ − λ_i)
            let mut from_roots = vec![1.0];
            for &l in &spec.energies {
                let mut next = vec![0.0; from_roots.len() + 1];
                for (k, c) in from_roots.iter().enumerate() {
                    next[k] += c;
                    next[k + 1] -= l * c;
                }
                from_roots = next;
            }
            for (x, y) in char_poly(&h).iter().zip(&from_roots) {
                assert!((x - y).abs() < 1e-11, "{x} vs {y}");
            }
            for (k, &l) in spec.energies.iter().enumerate() {
                let v = spec.vectors.column(k);
                assert!((&h * v - v * l).norm() < 1e-12);
            }
            let gram = spec.vectors.transpose() * &spec.vectors;
            assert!((gram - DMatrix::identity(6, 6)).abs().max() < 1e-12);
        }
    }

    #[test]
    fn ground_energies_decrease_as_cutoff_grows() {
        let p = MaterialParams::default();
        let b = 2.0;
        let specs = [TrionBlockSpec::singlet(0), TrionBlockSpec::bright_triplet(1), TrionBlockSpec::bright_triplet(-1)];
        let mut last: Option<[f64; 4]> = None;
        for per in 2..=4 {
            let s = FewBodySolver::new(p.clone(), FewBodyConfig { levels: 2, per_level: per, ..Default::default() }).unwrap();
            let table = s.table(b).unwrap();
            let x = s.exciton(b, &table).unwrap().1.energy;
            let t: Vec<f64> = specs.iter().map(|&sp| s.trion(b, &table, sp).unwrap().1.energy).collect();
            let now = [x, t[0], t[1], t[2]];
            if let Some(prev) = last {
                for (a, bb) in now.iter().zip(prev) {
                    assert!(*a <= bb + 1e-8, "{a} > {bb}");
                }
            }
            last = Some(now);
        }
    }

    #[test]
    fn uncorrelated_limit() {
        let p = MaterialParams { beta_coeff: 0.0, ..Default::default() };
        // one orbital per level keeps the lowest configuration non-degenerate
        let cfg = FewBodyConfig {
            levels: 3,
            per_level: 1,
            bright_trion: TrionBlockSpec::singlet(0),
            ..Default::default()
        };
        let r = FewBodySolver::new(p.clone(), cfg).unwrap().response(2.0).unwrap();
        assert!((r.p_x - 1.0).abs() < 1e-12);
        assert!((r.p_t - 1.0).abs() < 1e-12);

        let s = FewBodySolver::new(p, FewBodyConfig { levels: 2, per_level: 3, ..Default::default() }).unwrap();
        let e = s.binding_energies(2.0).unwrap();
        assert!(e.eb_singlet.abs() < 1e-9 && e.eb_triplet.abs() < 1e-9);
    }

    #[test]
    fn free_electron_energy_definition() {
        let p = MaterialParams::default();
        let s = FewBodySolver::new(p.clone(), FewBodyConfig { levels: 1, per_level: 2, ..Default::default() }).unwrap();
        let expect = crate::basis::single_particle_energy(
            crate::basis::QuantumNumbers::new(0, 0, Spin::Down),
            Carrier::Electron,
            1.0,
            &p,
        )
        .unwrap();
        assert_eq!(s.free_electron_energy(1.0).unwrap(), expect);
    }

    #[test]
    fn exciton_energy_blue_shifts_at_high_field() {
        let s = FewBodySolver::new(MaterialParams::default(), FewBodyConfig { per_level: 4, ..Default::default() }).unwrap();
        let w: Vec<f64> = (1..=10).map(|b| s.response(b as f64).unwrap().omega_x).collect();
        assert!(w[9] > w[0]);
        assert!(w[3..].windows(2).all(|p| p[1] > p[0]), "{w:?}");
    }

    #[test]
    fn bounded_dipoles_stay_below_one() {
        let cfg = FewBodyConfig { levels: 2, per_level: 3, dipole_normalization: DipoleNormalization::Bounded, ..Default::default() };
        let s = FewBodySolver::new(MaterialParams::default(), cfg).unwrap();
        for b in [1.0, 5.0, 10.0] {
            let r = s.response(b).unwrap();
            assert!(r.p_x <= 1.0 + 1e-12 && r.p_t <= 1.0 + 1e-12);
        }
    }

    #[test]
    fn high_field_window_keeps_upper_half() {
        let samples: Vec<_> = (1..=10).map(|b| (b as f64, 0.0, 0.0)).collect();
        let w = high_field_window(&samples);
        assert_eq!(w.first().unwrap().0, 6.0);
        assert_eq!(w.len(), 5);
    }

    /// Second-quantised reference: electrons on spin-orbitals `2i + σ`, holes (spin ↓)
    /// on modes `2n + i`, occupation bitmasks with Jordan–Wigner signs.
    mod fock {
        use super::*;

        pub struct Space {
            pub n: usize,
            pub states: Vec<u64>,
        }

        fn apply(state: u64, mode: usize, create: bool) -> Option<(u64, f64)> {
            let bit = 1u64 << mode;
            if create == (state & bit != 0) {
                return None;
            }
            let sign = if (state & (bit - 1)).count_ones() % 2 == 0 { 1.0 } else { -1.0 };
            Some((state ^ bit, sign))
        }

        /// `ops` applied right to left; `(mode, create)`.
        pub fn string(state: u64, ops: &[(usize, bool)]) -> Option<(u64, f64)> {
            let mut s = state;
            let mut sign = 1.0;
            for &(m, c) in ops.iter().rev() {
                let (t, g) = apply(s, m, c)?;
                s = t;
                sign *= g;
            }
            Some((s, sign))
        }

        impl Space {
            pub fn e(&self, i: usize, up: bool) -> usize {
                2 * i + if up { 0 } else { 1 }
            }
            pub fn h(&self, i: usize) -> usize {
                2 * self.n + i
            }

            /// Two electrons (one ↑, one ↓) and one hole at total `lz`.
            pub fn trion(basis: &LandauBasis, lz: i32) -> Space {
                let n = basis.len();
                let mut states = Vec::new();
                let sp = Space { n, states: vec![] };
                for a in 0..n {
                    for bb in 0..n {
                        for k in 0..n {
                            if basis.orbital(a).l + basis.orbital(bb).l - basis.orbital(k).l == lz {
                                states.push((1u64 << sp.e(a, true)) | (1u64 << sp.e(bb, false)) | (1u64 << sp.h(k)));
                            }
                        }
                    }
                }
                states.sort();
                Space { n, states }
            }

            pub fn hamiltonian(&self, basis: &LandauBasis, b: f64, p: &MaterialParams, table: &CoulombTable) -> DMatrix<f64> {
                let n = self.n;
                let dim = self.states.len();
                let pos = |s: u64| self.states.binary_search(&s).ok();
                let beta = p.coulomb_scale(b);
                let mut h = DMatrix::<f64>::zeros(dim, dim);
                let mut add = |col: usize, ops: &[(usize, bool)], amp: f64| {
                    if amp == 0.0 {
                        return;
                    }
                    if let Some((t, g)) = string(self.states[col], ops) {
                        if let Some(row) = pos(t) {
                            h[(row, col)] += g * amp;
                        }
                    }
                };
                let spins = [true, false];
                for col in 0..dim {
                    for i in 0..n {
                        let oe = orbital_energy(basis.orbital(i), Carrier::Electron, b, p).unwrap();
                        for &up in &spins {
                            let z = zeeman_energy(if up { Spin::Up } else { Spin::Down }, Carrier::Electron, b, p);
                            add(col, &[(self.e(i, up), true), (self.e(i, up), false)], oe + z);
                        }
                        let q = basis.orbital(i);
                        let eh = orbital_energy(Orbital::new(q.n, -q.l), Carrier::Hole, b, p).unwrap()
                            + zeeman_energy(Spin::Down, Carrier::Hole, b, p);
                        add(col, &[(self.h(i), true), (self.h(i), false)], eh);
                    }
                    for i in 0..n {
                        for j in 0..n {
                            for k in 0..n {
                                for l in 0..n {
                                    let vee = table.get(i, j, k, l).unwrap();
                                    let veh = table.get(i, l, k, j).unwrap();
                                    for &s1 in &spins {
                                        for &s2 in &spins {
                                            add(
                                                col,
                                                &[(self.e(i, s1), true), (self.e(j, s2), true), (self.e(l, s2), false), (self.e(k, s1), false)],
                                                0.5 * beta * vee,
                                            );
                                        }
                                        add(
                                            col,
                                            &[(self.e(i, s1), true), (self.h(j), true), (self.h(l), false), (self.e(k, s1), false)],
                                            -beta * veh,
                                        );
                                    }
                                }
                            }
                        }
                    }
                }
                h
            }
        }
    }

    #[test]
    fn trion_blocks_match_second_quantised_reference() {
        let p = MaterialParams::default();
        let b = 3.0;
        let basis = build_landau_basis(2, 3);
        let table = table_for(&basis, b, &p);
        for lz in -1..=2 {
            let space = fock::Space::trion(&basis, lz);
            let reference = diagonalize(&space.hamiltonian(&basis, b, &p, &table)).unwrap();
            let mut ours = Vec::new();
            for spec in [TrionBlockSpec::singlet(lz), TrionBlockSpec::bright_triplet(lz)] {
                if let Ok(configs) = build_trion_basis(&basis, spec) {
                    let h = assemble_hamiltonian(&Block::Trion { configs, electron_sz: 0 }, b, &p, &table).unwrap();
                    ours.extend(diagonalize(&h).unwrap().energies);
                }
            }
            ours.sort_by(f64::total_cmp);
            assert_eq!(ours.len(), reference.energies.len());
            for (a, r) in ours.iter().zip(&reference.energies) {
                assert!((a - r).abs() < 1e-9, "L_z = {lz}: {a} vs {r}");
            }
        }
    }

    #[test]
    fn trion_dipole_matches_second_quantised_reference() {
        let p = MaterialParams::default();
        let b = 3.0;
        let basis = build_landau_basis(2, 3);
        let table = table_for(&basis, b, &p);
        for spec in [TrionBlockSpec::singlet(0), TrionBlockSpec::bright_triplet(1)] {
            let configs = build_trion_basis(&basis, spec).unwrap();
            let h = assemble_hamiltonian(&Block::Trion { configs: configs.clone(), electron_sz: 0 }, b, &p, &table).unwrap();
            let ground = diagonalize(&h).unwrap().ground_state();
            let f = spectator_orbital(&basis, spec.lz).unwrap();
            let ours = trion_dipole(&configs, &ground, f);

            // expand the ground state into Fock states and apply Σ_m h_m e_{m↑}
            let space = fock::Space::trion(&basis, spec.lz);
            let r = std::f64::consts::FRAC_1_SQRT_2;
            let mut psi = vec![0.0; space.states.len()];
            for (c, a) in configs.iter().zip(ground.iter()) {
                let terms: Vec<((usize, bool), (usize, bool), f64)> = match c.sector {
                    TrionSector::Singlet if c.e1 == c.e2 => vec![((c.e1, true), (c.e1, false), 1.0)],
                    TrionSector::Singlet => vec![((c.e1, true), (c.e2, false), r), ((c.e1, false), (c.e2, true), -r)],
                    TrionSector::Triplet => vec![((c.e1, true), (c.e2, false), r), ((c.e1, false), (c.e2, true), r)],
                };
                for ((i, si), (j, sj), w) in terms {
                    let ops = [(space.e(i, si), true), (space.e(j, sj), true), (space.h(c.hole), true)];
                    let (st, g) = fock::string(0, &ops).unwrap();
                    psi[space.states.binary_search(&st).unwrap()] += g * w * a;
                }
            }
            let target = 1u64 << space.e(f, false);
            let mut reference = 0.0;
            for (st, amp) in space.states.iter().zip(&psi) {
                for m in 0..basis.len() {
                    if let Some((t, g)) = fock::string(*st, &[(space.h(m), false), (space.e(m, true), false)]) {
                        if t == target {
                            reference += g * amp;
                        }
                    }
                }
            }
            assert!((ours.abs() - reference.abs()).abs() < 1e-12, "{ours} vs {reference}");
            assert!(ours.abs() > 0.1);
        }
    }
}
