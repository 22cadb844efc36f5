//! Simultaneous polynomial root finding (Aberth–Ehrlich) for real-coefficient
//! polynomials, plus deflation of a known unit root.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{Error, Result};

#[derive(Clone, Debug)]
pub struct RootOptions {
    pub max_iters: usize,
    /// Per-root convergence threshold on the Newton-type correction, relative to 1+|μ|.
    pub tol: f64,
    /// Post-verification: |p(μ)| ≤ verify_tol·‖coeffs‖∞·max(1,|μ|)^deg.
    pub verify_tol: f64,
    /// Overrides the default start radius max(1.1, (2c−1)^{1/deg}).
    pub initial_radius: Option<f64>,
    pub angle_offset: f64,
}

impl Default for RootOptions {
    fn default() -> Self {
        Self { max_iters: 500, tol: 1e-13, verify_tol: 1e-9, initial_radius: None, angle_offset: 0.4 }
    }
}

#[derive(Clone, Debug)]
pub struct RootReport {
    pub roots: Vec<Complex64>,
    pub iterations: usize,
    /// max_k |p(μ_k)| / (‖coeffs‖∞ max(1,|μ_k|)^deg)
    pub max_scaled_residual: f64,
}

/// p(z) for coefficients stored lowest degree first.
pub fn eval(coeffs: &[f64], z: Complex64) -> Complex64 {
    coeffs.iter().rev().fold(Complex64::new(0.0, 0.0), |acc, &a| acc * z + a)
}

// (p(z), p'(z), Σ|a_k||z|^k) over the coefficients in the given order
fn horner<'a>(coeffs: impl DoubleEndedIterator<Item = &'a f64>, z: Complex64) -> (Complex64, Complex64, f64) {
    let az = z.norm();
    let mut p = Complex64::new(0.0, 0.0);
    let mut dp = Complex64::new(0.0, 0.0);
    let mut mag = 0.0;
    for &a in coeffs.rev() {
        dp = dp * z + p;
        p = p * z + a;
        mag = mag * az + a.abs();
    }
    (p, dp, mag)
}

/// Newton ratio p(z)/p'(z) and whether |p(z)| is at the rounding level of
/// Horner's scheme. Outside the unit disc the reversed polynomial is used so
/// that large powers never overflow.
fn newton_ratio(coeffs: &[f64], z: Complex64) -> (Complex64, bool) {
    let deg = (coeffs.len() - 1) as f64;
    let eps = f64::EPSILON;
    if z.norm() <= 1.0 {
        let (p, dp, mag) = horner(coeffs.iter(), z);
        (p / dp, p.norm() <= 4.0 * eps * mag)
    } else {
        // p(z) = z^deg·r(y), y = 1/z, r(y) = Σ a_k y^{deg−k}
        let y = z.inv();
        let (r, dr, mag) = horner(coeffs.iter().rev(), y);
        let ratio = z / (deg - y * dr / r);
        (ratio, r.norm() <= 4.0 * eps * mag)
    }
}

/// |p(z)| / max(1,|z|)^deg, evaluated without overflow.
fn scaled_value(coeffs: &[f64], z: Complex64) -> f64 {
    if z.norm() <= 1.0 {
        eval(coeffs, z).norm()
    } else {
        horner(coeffs.iter().rev(), z.inv()).0.norm()
    }
}

/// Divides by (μ − 1) synthetically; fails if the remainder exceeds 1e−10·‖coeffs‖∞.
pub fn deflate_unit_root(coeffs: &[f64]) -> Result<Vec<f64>> {
    let n = coeffs.len();
    if n < 2 {
        return Err(Error::InvalidParameter("cannot deflate a constant polynomial".into()));
    }
    let mut out = vec![0.0; n - 1];
    let mut carry = 0.0;
    for k in (1..n).rev() {
        carry += coeffs[k];
        out[k - 1] = carry;
    }
    let remainder = (carry + coeffs[0]).abs();
    let scale = coeffs.iter().fold(0.0f64, |m, a| m.max(a.abs()));
    let tolerance = 1e-10 * scale;
    if remainder > tolerance {
        return Err(Error::DeflationFailure { remainder, tolerance });
    }
    Ok(out)
}

pub fn find_roots(coeffs: &[f64]) -> Result<Vec<Complex64>> {
    find_roots_with(coeffs, &RootOptions::default()).map(|r| r.roots)
}

/// Aberth–Ehrlich iteration in Gauss–Seidel form.
///
/// A root is frozen when its correction drops below `tol·(1+|μ|)` or when
/// |p(μ)| reaches the rounding level of Horner's scheme, whichever comes first.
pub fn find_roots_with(coeffs: &[f64], opts: &RootOptions) -> Result<RootReport> {
    let deg = coeffs.len().saturating_sub(1);
    if deg == 0 {
        return Err(Error::InvalidParameter("polynomial has degree zero".into()));
    }
    let lead = coeffs[deg];
    if lead == 0.0 || !lead.is_finite() {
        return Err(Error::InvalidParameter("leading coefficient must be nonzero".into()));
    }
    if coeffs.iter().any(|a| !a.is_finite()) {
        return Err(Error::InvalidParameter("non-finite coefficient".into()));
    }
    let c = (coeffs[0] / lead).abs();
    let radius = opts
        .initial_radius
        .unwrap_or_else(|| 1.1f64.max((2.0 * c - 1.0).max(0.0).powf(1.0 / deg as f64)));
    let mut z: Vec<Complex64> = (0..deg)
        .map(|k| Complex64::from_polar(radius, opts.angle_offset + 2.0 * PI * k as f64 / deg as f64))
        .collect();
    let mut done = vec![false; deg];
    let mut remaining = deg;
    let mut iterations = 0;

    while remaining > 0 {
        if iterations == opts.max_iters {
            return Err(Error::NoConvergence { iterations });
        }
        iterations += 1;
        for k in 0..deg {
            if done[k] {
                continue;
            }
            let zk = z[k];
            let (ratio, at_floor) = newton_ratio(coeffs, zk);
            if at_floor {
                done[k] = true;
                remaining -= 1;
                continue;
            }
            let mut s = Complex64::new(0.0, 0.0);
            for (j, &zj) in z.iter().enumerate() {
                if j != k {
                    s += (zk - zj).inv();
                }
            }
            let mut w = ratio / (Complex64::new(1.0, 0.0) - ratio * s);
            if !w.is_finite() {
                // coincident iterates or a vanishing denominator: plain Newton step
                w = ratio;
            }
            if !w.is_finite() {
                continue;
            }
            z[k] = zk - w;
            if w.norm() < opts.tol * (1.0 + z[k].norm()) {
                done[k] = true;
                remaining -= 1;
            }
        }
    }

    // one plain Newton polish per root against the final iterates
    for zk in z.iter_mut() {
        let (ratio, at_floor) = newton_ratio(coeffs, *zk);
        if !at_floor && ratio.is_finite() && ratio.norm() < 1e-8 * (1.0 + zk.norm()) {
            *zk -= ratio;
        }
    }

    let scale = coeffs.iter().fold(0.0f64, |m, a| m.max(a.abs()));
    let mut worst = 0.0f64;
    for &zk in &z {
        let r = scaled_value(coeffs, zk) / scale;
        worst = worst.max(r);
    }
    if !(worst <= opts.verify_tol) {
        return Err(Error::NoConvergence { iterations });
    }
    Ok(RootReport { roots: z, iterations, max_scaled_residual: worst })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sorted(mut v: Vec<Complex64>) -> Vec<Complex64> {
        v.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
        v
    }

    #[test]
    fn quadratic() {
        let r = sorted(find_roots(&[2.0, 1.0, 1.0]).unwrap());
        let s7 = 7f64.sqrt();
        assert!((r[0] - Complex64::new(-0.5, -s7 / 2.0)).norm() < 1e-13);
        assert!((r[1] - Complex64::new(-0.5, s7 / 2.0)).norm() < 1e-13);
        assert!((r[0].norm() - 2f64.sqrt()).abs() < 1e-13);
    }

    #[test]
    fn real_roots_of_product() {
        // (x-1)(x-2)(x-3)(x+4)
        let c = [-24.0, 38.0, -13.0, -2.0, 1.0];
        let r = sorted(find_roots(&c).unwrap());
        for (got, want) in r.iter().zip([-4.0, 1.0, 2.0, 3.0]) {
            assert!((got - Complex64::new(want, 0.0)).norm() < 1e-10, "{got}");
        }
    }

    #[test]
    fn deflation() {
        // (x-1)(x^2+x+2) = x^3 + x - 2
        let q = deflate_unit_root(&[-2.0, 1.0, 0.0, 1.0]).unwrap();
        assert_eq!(q, vec![2.0, 1.0, 1.0]);
        assert!(matches!(deflate_unit_root(&[1.0, 1.0, 1.0]), Err(Error::DeflationFailure { .. })));
    }

    #[test]
    fn iteration_cap() {
        let opts = RootOptions { max_iters: 1, ..Default::default() };
        let c: Vec<f64> = std::iter::once(5.0).chain(std::iter::repeat(1.0).take(30)).collect();
        assert!(matches!(find_roots_with(&c, &opts), Err(Error::NoConvergence { .. })));
    }
}
