//! Special functions: log-factorials, associated Laguerre polynomials,
//! integer-order Bessel functions of the first kind and Gauss–Legendre rules.

use crate::scalar::Real;

/// `ln(n!)` by direct summation; exact enough for the small `n` used by
/// Landau orbitals and free of any gamma-function approximation.
pub fn ln_factorial<T: Real>(n: u32) -> T {
    (2..=n).fold(T::zero(), |acc, k| acc + T::from_u32(k).unwrap().ln())
}

/// Associated Laguerre polynomial `L_n^a(x)` by the three-term upward recurrence.
pub fn laguerre<T: Real>(n: u32, a: u32, x: T) -> T {
    let a = T::from_u32(a).unwrap();
    let mut prev = T::one();
    if n == 0 {
        return prev;
    }
    let mut cur = T::one() + a - x;
    for k in 1..n {
        let kf = T::from_u32(k).unwrap();
        let next = ((T::lit(2.0) * kf + T::one() + a - x) * cur - (kf + a) * prev) / (kf + T::one());
        prev = cur;
        cur = next;
    }
    cur
}

/// Fills `out[m] = J_m(x)` for `m = 0..out.len()` using Miller's downward
/// recurrence normalised by `J_0 + 2 Σ J_{2k} = 1`.
///
/// Negative `x` is handled through `J_m(-x) = (-1)^m J_m(x)`.
pub fn bessel_j_orders<T: Real>(x: T, out: &mut [T]) {
    if out.is_empty() {
        return;
    }
    if x < T::zero() {
        bessel_j_orders(-x, out);
        for (m, v) in out.iter_mut().enumerate() {
            if m % 2 == 1 {
                *v = -*v;
            }
        }
        return;
    }
    out.iter_mut().for_each(|v| *v = T::zero());
    if x == T::zero() {
        out[0] = T::one();
        return;
    }
    let max_order = out.len() - 1;
    let xf = x.to_f64().unwrap();
    let top = (max_order as f64).max(xf);
    // Start well above max(order, x) so the seeded error has decayed.
    let mut start = (top + 30.0 + (40.0 * top).sqrt()) as usize;
    start += start % 2;

    let big = T::max_value().sqrt().sqrt();
    let tiny = T::one() / big;
    let two_over_x = T::lit(2.0) / x;

    let mut j_next = T::zero();
    let mut j_cur = tiny;
    let mut norm = T::zero();
    for k in (1..=start).rev() {
        let j_prev = T::from_usize_lossy(k) * two_over_x * j_cur - j_next;
        j_next = j_cur;
        j_cur = j_prev;
        let order = k - 1;
        if order <= max_order {
            out[order] = j_cur;
        }
        if order % 2 == 0 && order > 0 {
            norm += T::lit(2.0) * j_cur;
        }
        if j_cur.abs() > big {
            j_cur = j_cur * tiny;
            j_next = j_next * tiny;
            norm = norm * tiny;
            out.iter_mut().skip(order).for_each(|v| *v = *v * tiny);
        }
    }
    norm += j_cur;
    out.iter_mut().for_each(|v| *v = *v / norm);
}

/// `J_m(x)` for a single integer order.
pub fn bessel_j<T: Real>(m: u32, x: T) -> T {
    let mut buf = vec![T::zero(); m as usize + 1];
    bessel_j_orders(x, &mut buf);
    buf[m as usize]
}

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
///
/// Roots are found by Newton iteration on the Legendre recurrence in `f64`
/// and then cast, so `f32` rules are correctly rounded.
pub fn gauss_legendre<T: Real>(n: usize) -> (Vec<T>, Vec<T>) {
    assert!(n > 0, "Gauss-Legendre rule needs at least one node");
    let mut nodes = vec![T::zero(); n];
    let mut weights = vec![T::zero(); n];
    let nf = n as f64;
    for i in 0..n.div_ceil(2) {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p1, mut p2) = (1.0_f64, 0.0_f64);
            for j in 0..n {
                let p3 = p2;
                p2 = p1;
                p1 = ((2.0 * j as f64 + 1.0) * z * p2 - j as f64 * p3) / (j as f64 + 1.0);
            }
            dp = nf * (z * p1 - p2) / (z * z - 1.0);
            let dz = p1 / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - z * z) * dp * dp);
        nodes[i] = T::lit(-z);
        nodes[n - 1 - i] = T::lit(z);
        weights[i] = T::lit(w);
        weights[n - 1 - i] = T::lit(w);
    }
    (nodes, weights)
}

/// Composite Gauss–Legendre rule: `[a, b]` split into `panels` equal panels
/// with `order` nodes each.
pub fn composite_gauss_legendre<T: Real>(a: T, b: T, panels: usize, order: usize) -> (Vec<T>, Vec<T>) {
    let (x, w) = gauss_legendre::<T>(order);
    let h = (b - a) / T::from_usize_lossy(panels);
    let half = h / T::lit(2.0);
    let mut nodes = Vec::with_capacity(panels * order);
    let mut weights = Vec::with_capacity(panels * order);
    for p in 0..panels {
        let mid = a + h * (T::from_usize_lossy(p) + T::lit(0.5));
        for (xi, wi) in x.iter().zip(&w) {
            nodes.push(mid + half * *xi);
            weights.push(half * *wi);
        }
    }
    (nodes, weights)
}
