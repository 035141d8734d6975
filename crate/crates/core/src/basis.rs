//! Landau-level single-particle basis and field-dependent single-particle
//! energies of electrons and holes in a quantum well.

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// `ħ/e` in T·nm².
pub const HBAR_OVER_E: f64 = 658.211_956_9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Spin {
    Up,
    Down,
}

impl Spin {
    /// z-projection, ±1/2.
    pub fn projection(self) -> f64 {
        match self {
            Spin::Up => 0.5,
            Spin::Down => -0.5,
        }
    }

    pub fn flipped(self) -> Spin {
        match self {
            Spin::Up => Spin::Down,
            Spin::Down => Spin::Up,
        }
    }
}

/// Spatial part of a Landau orbital: radial quantum number `n` and angular
/// momentum projection `l`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Orbital {
    pub n: u32,
    pub l: i32,
}

impl Orbital {
    pub const fn new(n: u32, l: i32) -> Self {
        Orbital { n, l }
    }

    /// Landau-level index `(2n + |l| - l) / 2` in the electron convention.
    pub fn level(self) -> u32 {
        (2 * self.n as i64 + self.l.unsigned_abs() as i64 - self.l as i64) as u32 / 2
    }

    pub fn abs_l(self) -> u32 {
        self.l.unsigned_abs()
    }
}

impl fmt::Display for Orbital {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.n, self.l)
    }
}

/// Single-particle quantum numbers `(n, l, s)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct QuantumNumbers {
    pub n: u32,
    pub l: i32,
    pub spin: Spin,
}

impl QuantumNumbers {
    pub const fn new(n: u32, l: i32, spin: Spin) -> Self {
        QuantumNumbers { n, l, spin }
    }

    pub fn orbital(self) -> Orbital {
        Orbital::new(self.n, self.l)
    }

    pub fn with_spin(orbital: Orbital, spin: Spin) -> Self {
        QuantumNumbers::new(orbital.n, orbital.l, spin)
    }
}

/// Maps an electron state onto the corresponding hole state `(n, -l, -s)`.
pub fn hole_conjugate(q: QuantumNumbers) -> QuantumNumbers {
    QuantumNumbers::new(q.n, -q.l, q.spin.flipped())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Carrier {
    Electron,
    Hole,
}

/// Ordered Landau basis.
///
/// Level `k` (0-based) holds the orbitals with `2n + |l| - l = 2k`, sorted by
/// `n` ascending and then `l` ascending, truncated to `per_level` entries:
/// `(0,-k), (1,-(k-1)), …, (k-1,-1), (k,0), (k,1), …`.
/// Orbitals inside a level are degenerate, so the ordering carries no physics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LandauBasis {
    orbitals: Vec<Orbital>,
    levels: usize,
    per_level: usize,
    #[serde(skip)]
    index: HashMap<Orbital, usize>,
}

impl LandauBasis {
    pub fn new(levels: usize, per_level: usize) -> Self {
        build_landau_basis(levels, per_level)
    }

    /// Basis from an explicit orbital list (deduplicated, order preserved).
    pub fn from_orbitals(orbitals: Vec<Orbital>) -> Self {
        let mut seen = HashMap::new();
        let mut list = Vec::new();
        for o in orbitals {
            if !seen.contains_key(&o) {
                seen.insert(o, list.len());
                list.push(o);
            }
        }
        let levels = list.iter().map(|o| o.level() as usize + 1).max().unwrap_or(0);
        LandauBasis { per_level: list.len(), orbitals: list, levels, index: seen }
    }

    pub fn orbitals(&self) -> &[Orbital] {
        &self.orbitals
    }

    pub fn len(&self) -> usize {
        self.orbitals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.orbitals.is_empty()
    }

    pub fn levels(&self) -> usize {
        self.levels
    }

    pub fn per_level(&self) -> usize {
        self.per_level
    }

    pub fn orbital(&self, i: usize) -> Orbital {
        self.orbitals[i]
    }

    /// 0-based position of an orbital.
    pub fn index_of(&self, o: Orbital) -> Option<usize> {
        if self.index.len() != self.orbitals.len() {
            return self.orbitals.iter().position(|x| *x == o);
        }
        self.index.get(&o).copied()
    }

    /// 1-based ordering number `|i⟩` as used in tabulations.
    pub fn ordering_number(&self, o: Orbital) -> Option<usize> {
        self.index_of(o).map(|i| i + 1)
    }

    /// Orbitals of level `k` (0-based).
    pub fn level_orbitals(&self, k: usize) -> impl Iterator<Item = &Orbital> {
        self.orbitals.iter().filter(move |o| o.level() as usize == k)
    }

    pub fn max_abs_l(&self) -> u32 {
        self.orbitals.iter().map(|o| o.abs_l()).max().unwrap_or(0)
    }

    /// Rebuilds the lookup table after deserialization.
    pub fn reindex(&mut self) {
        self.index = self.orbitals.iter().enumerate().map(|(i, o)| (*o, i)).collect();
    }
}

pub fn build_landau_basis(levels: usize, per_level: usize) -> LandauBasis {
    let mut orbitals = Vec::with_capacity(levels * per_level);
    for k in 0..levels as u32 {
        let level = (0..k)
            .map(|n| Orbital::new(n, -((k - n) as i32)))
            .chain((0..).map(|l| Orbital::new(k, l)))
            .take(per_level);
        orbitals.extend(level);
    }
    let index = orbitals.iter().enumerate().map(|(i, o)| (*o, i)).collect();
    LandauBasis { orbitals, levels, per_level, index }
}

/// Material and unit constants. Energies in meV, lengths in nm, fields in T.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MaterialParams {
    pub e_gap: f64,
    pub well_width: f64,
    pub m_e: f64,
    pub m_h: f64,
    /// Coulomb scale: β(B) = beta_coeff · √B.
    pub beta_coeff: f64,
    pub g_e_intercept: f64,
    pub g_e_slope: f64,
    pub g_h_slope: f64,
    pub g_x: f64,
    pub g_t: f64,
    pub mu_b: f64,
    pub hbar: f64,
    /// ħ²/(2 m₀) in meV·nm².
    pub hbar2_over_2m0: f64,
}

impl Default for MaterialParams {
    fn default() -> Self {
        MaterialParams {
            e_gap: 1500.0,
            well_width: 10.0,
            m_e: 0.0665,
            m_h: 0.235,
            beta_coeff: 2.89,
            g_e_intercept: -0.01667,
            g_e_slope: 0.0052,
            g_h_slope: -0.05,
            g_x: 3.0,
            g_t: 0.5,
            mu_b: 0.05788,
            hbar: 0.658_211_9,
            hbar2_over_2m0: 38.099_82,
        }
    }
}

impl MaterialParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("e_gap", self.e_gap),
            ("well_width", self.well_width),
            ("m_e", self.m_e),
            ("m_h", self.m_h),
            ("mu_b", self.mu_b),
            ("hbar", self.hbar),
            ("hbar2_over_2m0", self.hbar2_over_2m0),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::Config(format!("{name} must be positive and finite, got {v}")));
            }
        }
        if !(self.beta_coeff >= 0.0) {
            return Err(Error::Config(format!("beta_coeff must be non-negative, got {}", self.beta_coeff)));
        }
        Ok(())
    }

    pub fn mass(&self, kind: Carrier) -> f64 {
        match kind {
            Carrier::Electron => self.m_e,
            Carrier::Hole => self.m_h,
        }
    }

    /// ħω_c = ħeB/m = 2 μ_B B / m (meV).
    pub fn cyclotron_energy(&self, kind: Carrier, b: f64) -> f64 {
        2.0 * self.mu_b * b / self.mass(kind)
    }

    pub fn g_factor(&self, kind: Carrier, b: f64) -> f64 {
        match kind {
            Carrier::Electron => self.g_e_intercept + self.g_e_slope * b,
            Carrier::Hole => self.g_h_slope * b,
        }
    }

    /// First quantum-well sub-band energy ħ²π²/(2 m L²).
    pub fn subband_energy(&self, kind: Carrier) -> f64 {
        let pi = std::f64::consts::PI;
        self.hbar2_over_2m0 * pi * pi / (self.mass(kind) * self.well_width * self.well_width)
    }

    /// Coulomb energy scale β(B) in meV.
    pub fn coulomb_scale(&self, b: f64) -> f64 {
        self.beta_coeff * b.sqrt()
    }
}

fn check_field(b: f64) -> Result<()> {
    if b > 0.0 && b.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!("magnetic field must be positive, got {b} T")))
    }
}

/// Orbital (spin-independent) part of the single-particle energy.
///
/// Both carriers are quoted through their own quantum numbers; an electron
/// `(n, l)` and its hole conjugate `(n, -l)` share the Landau index
/// `2n + |l| - l` of the basis ordering.
pub fn orbital_energy(q: Orbital, kind: Carrier, b: f64, p: &MaterialParams) -> Result<f64> {
    check_field(b)?;
    let landau = match kind {
        Carrier::Electron => 2 * q.n as i64 + q.l.abs() as i64 - q.l as i64 + 1,
        Carrier::Hole => 2 * q.n as i64 + q.l.abs() as i64 + q.l as i64 + 1,
    };
    Ok(0.5 * p.cyclotron_energy(kind, b) * landau as f64 + p.subband_energy(kind) + p.e_gap)
}

/// Zeeman energy: `+g_e μ_B B s` for electrons, `-g_h μ_B B s` for holes.
pub fn zeeman_energy(spin: Spin, kind: Carrier, b: f64, p: &MaterialParams) -> f64 {
    let sign = match kind {
        Carrier::Electron => 1.0,
        Carrier::Hole => -1.0,
    };
    sign * p.g_factor(kind, b) * p.mu_b * b * spin.projection()
}

/// Cyclotron + Zeeman + sub-band + gap energy of one carrier (meV).
pub fn single_particle_energy(q: QuantumNumbers, kind: Carrier, b: f64, p: &MaterialParams) -> Result<f64> {
    Ok(orbital_energy(q.orbital(), kind, b, p)? + zeeman_energy(q.spin, kind, b, p))
}

/// Magnetic length `l_b = √(2ħ/(eB))` in nm.
pub fn magnetic_length<T: Real>(b: T) -> Result<T> {
    if !(b > T::zero()) {
        return Err(Error::Domain(format!("magnetic field must be positive, got {b} T")));
    }
    Ok((T::lit(2.0 * HBAR_OVER_E) / b).sqrt())
}

/// Ratio `α = L / l_b` between well width and magnetic length.
pub fn alpha_ratio<T: Real>(well_width: T, b: T) -> Result<T> {
    if !(well_width > T::zero()) {
        return Err(Error::Domain(format!("well width must be positive, got {well_width} nm")));
    }
    Ok(well_width / magnetic_length(b)?)
}
