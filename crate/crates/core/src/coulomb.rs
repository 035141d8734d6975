//! Two-body Coulomb matrix elements in the Landau basis of a finite-width
//! quantum well.
//!
//! `⟨ij|V|st⟩ = δ(l_i + l_j, l_s + l_t) ∫₀^∞ F_α(q) ϑ_{i,s}(q) ϑ_{j,t}(q) dq`
//! in units of the Coulomb scale β. The radial overlaps `ϑ` do not depend on
//! α, so [`CoulombIntegrator`] tabulates them once on a fixed q-grid and
//! every table at a new α (i.e. new field) is a cheap weighted sum.

use std::collections::{BTreeMap, HashMap};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::basis::{LandauBasis, Orbital};
use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::special::{bessel_j_orders, composite_gauss_legendre, laguerre, ln_factorial};

/// Finite-thickness form factor `F_α(q)`.
///
/// It depends on `α` and `q` only through `x = αq`; the removable singularity
/// at `x → 0` (where `F → π²`) is evaluated by series.
pub fn form_factor<T: Real>(alpha: T, q: T) -> Result<T> {
    if !(alpha > T::zero()) {
        return Err(Error::Domain(format!(
            "form factor needs alpha > 0 (got {alpha}); use FormFactor::TwoDimensional for the 2D limit"
        )));
    }
    if !(q >= T::zero()) {
        return Err(Error::Domain(format!("form factor needs q >= 0, got {q}")));
    }
    Ok(form_factor_of_product(alpha * q))
}

/// `F` as a function of `x = αq`.
pub fn form_factor_of_product<T: Real>(x: T) -> T {
    let pi = T::PI();
    let pi2 = pi * pi;
    // g(x) = (x + e^{-x} - 1) / x²
    let g = if x < T::one() {
        let mut term = T::lit(0.5);
        let mut sum = term;
        for k in 1..30 {
            term = -term * x / T::from_u32(k + 2).unwrap();
            sum += term;
            if term.abs() < T::epsilon() * sum.abs() {
                break;
            }
        }
        sum
    } else {
        (x + (-x).exp_m1()) / (x * x)
    };
    let denom = T::lit(4.0) * pi2 + x * x;
    pi2 * (T::lit(20.0) * pi2 * x + T::lit(3.0) * x * x * x + T::lit(32.0) * pi2 * pi2 * g) / (denom * denom)
}

/// Form factor of a well of ratio α, or its strict two-dimensional limit
/// (`F ≡ π²`), which the closed form only approaches as α → 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum FormFactor {
    Finite(f64),
    TwoDimensional,
}

impl FormFactor {
    pub fn finite(alpha: f64) -> Result<Self> {
        if alpha > 0.0 && alpha.is_finite() {
            Ok(FormFactor::Finite(alpha))
        } else {
            Err(Error::Domain(format!("alpha must be positive, got {alpha}")))
        }
    }

    pub fn eval<T: Real>(self, q: T) -> T {
        match self {
            FormFactor::Finite(a) => form_factor_of_product(T::lit(a) * q),
            FormFactor::TwoDimensional => T::PI() * T::PI(),
        }
    }

    pub fn alpha(self) -> f64 {
        match self {
            FormFactor::Finite(a) => a,
            FormFactor::TwoDimensional => 0.0,
        }
    }
}

/// Normalisation `c_{n,l} = √(2 n! / (π (n+|l|)!))`, via log-factorials.
pub fn normalization_constant<T: Real>(n: u32, l: i32) -> T {
    let ln = T::lit(2.0).ln() + ln_factorial::<T>(n) - T::PI().ln() - ln_factorial::<T>(n + l.unsigned_abs());
    (ln / T::lit(2.0)).exp()
}

/// Quadrature settings for the radial and momentum integrals.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadratureSettings {
    /// Hard upper bound of the momentum integral.
    pub q_max: f64,
    /// Width of the momentum panels.
    pub q_panel: f64,
    /// Gauss–Legendre order per momentum panel (the error estimate uses a
    /// second, lower order on the same panels).
    pub q_order: usize,
    pub q_order_check: usize,
    /// Radial panel width and order.
    pub r_panel: f64,
    pub r_order: usize,
    /// Shrink `q_max` to the point where the integrand bound drops below tolerance.
    pub adaptive_cutoff: bool,
}

impl Default for QuadratureSettings {
    fn default() -> Self {
        QuadratureSettings { q_max: 50.0, q_panel: 0.5, q_order: 20, q_order_check: 12, r_panel: 0.25, r_order: 16, adaptive_cutoff: true }
    }
}

/// Largest `2n + |l|` in a set of orbitals; sets the polynomial degree of
/// the radial overlaps.
fn max_degree(orbitals: &[Orbital]) -> u32 {
    orbitals.iter().map(|o| 2 * o.n + o.abs_l()).max().unwrap_or(0)
}

/// Momentum cut-off beyond which `|F ϑ ϑ|` is bounded by
/// `π² e^{-q²/2} (1 + q²/4)^{2N+2}` and that bound is below `tol · 1e-3`.
pub fn momentum_cutoff(orbitals: &[Orbital], tolerance: f64, q_max: f64) -> f64 {
    let n = max_degree(orbitals) as f64;
    let target = (tolerance * 1e-3).ln() - (std::f64::consts::PI.powi(2)).ln();
    let mut q: f64 = 2.0;
    while q < q_max {
        let log_bound = -q * q / 2.0 + (2.0 * n + 2.0) * (1.0 + q * q / 4.0).ln();
        if log_bound < target {
            break;
        }
        q += 0.5;
    }
    q.min(q_max)
}

/// Radial extent beyond which `r^p e^{-r²}` (with `p` the largest power
/// appearing in an overlap) is negligible.
fn radial_cutoff(orbitals: &[Orbital]) -> f64 {
    let p = 2.0 * max_degree(orbitals) as f64 + 1.0;
    ((p / 2.0).sqrt() + 6.5).max(8.0)
}

/// Radial functions `c r^{|l|} e^{-r²/2} L_n^{|l|}(r²)` on a composite
/// Gauss–Legendre grid, with the measure `r dr` folded into the weights.
struct RadialGrid<T> {
    r: Vec<T>,
    w: Vec<T>,
    /// `f[orbital][node]`
    f: Vec<Vec<T>>,
}

impl<T: Real> RadialGrid<T> {
    fn new(orbitals: &[Orbital], settings: &QuadratureSettings, q_top: f64) -> Self {
        let r_max = radial_cutoff(orbitals);
        // keep at most ~2.5 Bessel periods per panel
        let width = settings.r_panel.min(5.0 / q_top.max(1.0));
        let panels = (r_max / width).ceil() as usize;
        let (r, w0) = composite_gauss_legendre(T::zero(), T::lit(r_max), panels, settings.r_order);
        let w = r.iter().zip(&w0).map(|(ri, wi)| *ri * *wi).collect();
        let f = orbitals
            .iter()
            .map(|o| {
                let c = normalization_constant::<T>(o.n, o.l).ln();
                let al = T::from_u32(o.abs_l()).unwrap();
                r.iter()
                    .map(|&ri| {
                        let x = ri * ri;
                        (c + al * ri.ln() - x / T::lit(2.0)).exp() * laguerre(o.n, o.abs_l(), x)
                    })
                    .collect()
            })
            .collect();
        RadialGrid { r, w, f }
    }
}

/// `ϑ_{a,b}(q)` for a single pair of orbitals.
pub fn radial_overlap<T: Real>(a: Orbital, b: Orbital, q: T) -> Result<T> {
    if !(q >= T::zero()) {
        return Err(Error::Domain(format!("radial overlap needs q >= 0, got {q}")));
    }
    let settings = QuadratureSettings::default();
    let grid = RadialGrid::<T>::new(&[a, b], &settings, q.to_f64().unwrap());
    let m = (a.l - b.l).unsigned_abs() as usize;
    let mut j = vec![T::zero(); m + 1];
    let mut acc = T::zero();
    for k in 0..grid.r.len() {
        bessel_j_orders(q * grid.r[k], &mut j);
        acc += grid.w[k] * grid.f[0][k] * grid.f[1][k] * j[m];
    }
    Ok(acc)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CoulombKey {
    pub i: usize,
    pub j: usize,
    pub s: usize,
    pub t: usize,
}

impl CoulombKey {
    pub fn new(i: usize, j: usize, s: usize, t: usize) -> Self {
        CoulombKey { i, j, s, t }
    }

    /// Angular-momentum conservation `l_i + l_j = l_s + l_t`.
    pub fn conserves(&self, basis: &LandauBasis) -> bool {
        let l = |k: usize| basis.orbital(k).l;
        l(self.i) + l(self.j) == l(self.s) + l(self.t)
    }

    /// Index of the underlying integral, which depends only on the unordered
    /// pairs `{i,s}` and `{j,t}` (and is symmetric under swapping them).
    pub fn integral_key(&self) -> IntegralKey {
        let p1 = (self.i.min(self.s), self.i.max(self.s));
        let p2 = (self.j.min(self.t), self.j.max(self.t));
        if p1 <= p2 {
            IntegralKey(p1, p2)
        } else {
            IntegralKey(p2, p1)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct IntegralKey((usize, usize), (usize, usize));

/// Cached radial overlaps on a shared momentum grid.
pub struct CoulombIntegrator<T> {
    basis: LandauBasis,
    tolerance: f64,
    q_fine: Vec<T>,
    w_fine: Vec<T>,
    q_check: Vec<T>,
    w_check: Vec<T>,
    /// `theta[pair(a,b)]`: values on the fine nodes followed by the check nodes.
    theta: Vec<Vec<T>>,
}

fn pair_index(a: usize, b: usize, n: usize) -> usize {
    let (a, b) = if a <= b { (a, b) } else { (b, a) };
    a * n - a * (a + 1) / 2 + b
}

impl<T: Real> CoulombIntegrator<T> {
    pub fn new(basis: &LandauBasis, tolerance: f64) -> Self {
        Self::with_settings(basis, tolerance, QuadratureSettings::default())
    }

    pub fn with_settings(basis: &LandauBasis, tolerance: f64, settings: QuadratureSettings) -> Self {
        let orbitals = basis.orbitals();
        let q_cut = if settings.adaptive_cutoff {
            momentum_cutoff(orbitals, tolerance, settings.q_max)
        } else {
            settings.q_max
        };
        let panels = ((q_cut / settings.q_panel).ceil() as usize).max(1);
        let (q_fine, w_fine) = composite_gauss_legendre(T::zero(), T::lit(q_cut), panels, settings.q_order);
        let (q_check, w_check) = composite_gauss_legendre(T::zero(), T::lit(q_cut), panels, settings.q_order_check);
        let grid = RadialGrid::<T>::new(orbitals, &settings, q_cut);

        let n = orbitals.len();
        let max_m = 2 * basis.max_abs_l() as usize;
        let all_q: Vec<T> = q_fine.iter().chain(&q_check).copied().collect();

        // Bessel values per momentum node, then contract with every pair.
        let columns: Vec<Vec<T>> = all_q
            .par_iter()
            .map(|&q| {
                let mut jbuf = vec![T::zero(); max_m + 1];
                let mut bessel = vec![T::zero(); grid.r.len() * (max_m + 1)];
                for (k, &r) in grid.r.iter().enumerate() {
                    bessel_j_orders(q * r, &mut jbuf);
                    bessel[k * (max_m + 1)..(k + 1) * (max_m + 1)].copy_from_slice(&jbuf);
                }
                let mut col = vec![T::zero(); n * (n + 1) / 2];
                for a in 0..n {
                    for b in a..n {
                        let m = (orbitals[a].l - orbitals[b].l).unsigned_abs() as usize;
                        let mut acc = T::zero();
                        for k in 0..grid.r.len() {
                            acc += grid.w[k] * grid.f[a][k] * grid.f[b][k] * bessel[k * (max_m + 1) + m];
                        }
                        col[pair_index(a, b, n)] = acc;
                    }
                }
                col
            })
            .collect();
        let mut theta = vec![Vec::with_capacity(all_q.len()); n * (n + 1) / 2];
        for col in &columns {
            for (p, v) in col.iter().enumerate() {
                theta[p].push(*v);
            }
        }

        CoulombIntegrator { basis: basis.clone(), tolerance, q_fine, w_fine, q_check, w_check, theta }
    }

    pub fn basis(&self) -> &LandauBasis {
        &self.basis
    }

    pub fn tolerance(&self) -> f64 {
        self.tolerance
    }

    pub fn q_cutoff(&self) -> T {
        *self.q_fine.last().unwrap_or(&T::zero())
    }

    /// Tabulated `ϑ_{a,b}` on the fine momentum nodes.
    pub fn overlap_samples(&self, a: usize, b: usize) -> (&[T], &[T]) {
        let p = pair_index(a, b, self.basis.len());
        (&self.q_fine, &self.theta[p][..self.q_fine.len()])
    }

    /// The radial integral `∫ F ϑ_{i,s} ϑ_{j,t} dq` and its error estimate.
    pub fn integral(&self, key: IntegralKey, ff: FormFactor) -> (T, T) {
        let n = self.basis.len();
        let IntegralKey((i, s), (j, t)) = key;
        let a = &self.theta[pair_index(i, s, n)];
        let b = &self.theta[pair_index(j, t, n)];
        let nf = self.q_fine.len();
        let mut fine = T::zero();
        for k in 0..nf {
            fine += self.w_fine[k] * ff.eval(self.q_fine[k]) * a[k] * b[k];
        }
        let mut coarse = T::zero();
        for k in 0..self.q_check.len() {
            coarse += self.w_check[k] * ff.eval(self.q_check[k]) * a[nf + k] * b[nf + k];
        }
        (fine, (fine - coarse).abs())
    }

    /// Full matrix element with the angular-momentum selection rule applied.
    pub fn element(&self, key: CoulombKey, ff: FormFactor) -> Result<T> {
        if !key.conserves(&self.basis) {
            return Ok(T::zero());
        }
        let (value, err) = self.integral(key.integral_key(), ff);
        let limit = self.tolerance * value.abs().to_f64().unwrap().max(1.0);
        let err = err.to_f64().unwrap();
        if err > limit {
            return Err(Error::Accuracy {
                requested: self.tolerance,
                achieved: err,
                context: format!(" for <{} {}|V|{} {}>", key.i, key.j, key.s, key.t),
            });
        }
        Ok(value)
    }
}

/// `⟨ij|V|st⟩` for four explicit orbitals (builds a throw-away integrator).
pub fn coulomb_element(orbitals: [Orbital; 4], ff: FormFactor, tolerance: f64) -> Result<f64> {
    let [i, j, s, t] = orbitals;
    if i.l + j.l != s.l + t.l {
        return Ok(0.0);
    }
    let basis = LandauBasis::from_orbitals(vec![i, j, s, t]);
    let idx = |o: Orbital| basis.index_of(o).expect("orbital in local basis");
    let key = CoulombKey::new(idx(i), idx(j), idx(s), idx(t));
    CoulombIntegrator::<f64>::new(&basis, tolerance).element(key, ff)
}

/// Batch of Coulomb integrals for one basis and one form factor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoulombTable {
    basis: LandauBasis,
    form_factor: FormFactor,
    tolerance: f64,
    #[serde(with = "entry_list")]
    entries: HashMap<IntegralKey, f64>,
}

mod entry_list {
    use super::IntegralKey;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};
    use std::collections::HashMap;

    pub fn serialize<S: Serializer>(m: &HashMap<IntegralKey, f64>, s: S) -> Result<S::Ok, S::Error> {
        let mut v: Vec<_> = m.iter().map(|(k, x)| (*k, *x)).collect();
        v.sort_by(|a, b| a.0.cmp(&b.0));
        v.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<HashMap<IntegralKey, f64>, D::Error> {
        let v: Vec<(IntegralKey, f64)> = Vec::deserialize(d)?;
        Ok(v.into_iter().collect())
    }
}

impl CoulombTable {
    /// All integrals that can appear with a non-zero selection rule: both
    /// pairs must carry the same `|Δl|`.
    pub fn build(integrator: &CoulombIntegrator<f64>, ff: FormFactor) -> Result<Self> {
        let basis = integrator.basis();
        let n = basis.len();
        let mut by_dl: BTreeMap<u32, Vec<(usize, usize)>> = BTreeMap::new();
        for a in 0..n {
            for b in a..n {
                let dl = (basis.orbital(a).l - basis.orbital(b).l).unsigned_abs();
                by_dl.entry(dl).or_default().push((a, b));
            }
        }
        let keys: Vec<IntegralKey> = by_dl
            .values()
            .flat_map(|pairs| {
                pairs
                    .iter()
                    .enumerate()
                    .flat_map(move |(x, p1)| pairs[x..].iter().map(move |p2| IntegralKey(*p1, *p2)))
            })
            .collect();
        let tol = integrator.tolerance();
        let values: Vec<(IntegralKey, f64)> = keys
            .par_iter()
            .map(|&key| {
                let (v, err) = integrator.integral(key, ff);
                if err > tol * v.abs().max(1.0) {
                    let IntegralKey((i, s), (j, t)) = key;
                    return Err(Error::Accuracy {
                        requested: tol,
                        achieved: err,
                        context: format!(" for <{i} {j}|V|{s} {t}>"),
                    });
                }
                Ok((key, v))
            })
            .collect::<Result<_>>()?;
        Ok(CoulombTable {
            basis: basis.clone(),
            form_factor: ff,
            tolerance: tol,
            entries: values.into_iter().collect(),
        })
    }

    /// Convenience: build integrator and table in one go.
    pub fn compute(basis: &LandauBasis, ff: FormFactor, tolerance: f64) -> Result<Self> {
        Self::build(&CoulombIntegrator::new(basis, tolerance), ff)
    }

    pub fn basis(&self) -> &LandauBasis {
        &self.basis
    }

    pub fn form_factor(&self) -> FormFactor {
        self.form_factor
    }

    pub fn tolerance(&self) -> f64 {
        self.tolerance
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// `⟨ij|V|st⟩`; zero when angular momentum is not conserved.
    pub fn get(&self, i: usize, j: usize, s: usize, t: usize) -> Result<f64> {
        let key = CoulombKey::new(i, j, s, t);
        if !key.conserves(&self.basis) {
            return Ok(0.0);
        }
        self.entries.get(&key.integral_key()).copied().ok_or(Error::CacheMiss(i, j, s, t))
    }

    /// Content hash of (basis, α, tolerance) used to name cache files.
    pub fn cache_key(basis: &LandauBasis, ff: FormFactor, tolerance: f64) -> String {
        let mut h = Sha256::new();
        for o in basis.orbitals() {
            h.update(o.n.to_le_bytes());
            h.update(o.l.to_le_bytes());
        }
        h.update(ff.alpha().to_bits().to_le_bytes());
        h.update([matches!(ff, FormFactor::TwoDimensional) as u8]);
        h.update(tolerance.to_bits().to_le_bytes());
        h.finalize().iter().take(12).map(|b| format!("{b:02x}")).collect()
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        let text = serde_json::to_string(self).map_err(|e| Error::Io(e.to_string()))?;
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut t: CoulombTable = serde_json::from_str(&text).map_err(|e| Error::Io(e.to_string()))?;
        t.basis.reindex();
        Ok(t)
    }
}
