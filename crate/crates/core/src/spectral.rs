//! Continuum eigenfunction-expansion oracle on (0, π): X_l = √(2/π) sin(lx),
//! λ_l = l². Works purely in coefficient space, independent of the
//! finite-difference pipeline.

use crate::error::{check_len, Error, Result};
use crate::grid::{DirichletLaplacian, SpatialGrid};

/// First `len()` sine coefficients (v, X_l), l = 1, 2, ….
#[derive(Clone, Debug, PartialEq)]
pub struct SpectralField {
    pub coeffs: Vec<f64>,
}

impl SpectralField {
    pub fn new(coeffs: Vec<f64>) -> Self {
        Self { coeffs }
    }

    pub fn zeros(l_max: usize) -> Self {
        Self { coeffs: vec![0.0; l_max] }
    }

    pub fn l_max(&self) -> usize {
        self.coeffs.len()
    }

    /// L²(0,π) norm by Parseval.
    pub fn norm(&self) -> f64 {
        self.coeffs.iter().map(|c| c * c).sum::<f64>().sqrt()
    }

    pub fn distance(&self, other: &SpectralField) -> f64 {
        self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt()
    }

    /// H^p norm (Σ λ_l^p (v,X_l)²)^{1/2}.
    pub fn hp_norm(&self, p: f64) -> f64 {
        self.coeffs
            .iter()
            .enumerate()
            .map(|(i, c)| eigenvalue(i + 1).powf(p) * c * c)
            .sum::<f64>()
            .sqrt()
    }

    /// Evaluates Σ (v,X_l) X_l(x).
    pub fn evaluate(&self, x: f64) -> f64 {
        let s = (2.0 / std::f64::consts::PI).sqrt();
        self.coeffs.iter().enumerate().map(|(i, c)| c * s * ((i + 1) as f64 * x).sin()).sum()
    }
}

/// Smoothness prior ‖f‖_{H^p} ≤ E_f.
#[derive(Clone, Copy, Debug)]
pub struct SourcePrior {
    pub p: f64,
    pub e_f: f64,
}

impl SourcePrior {
    pub fn new(p: f64, e_f: f64) -> Result<Self> {
        if !(p >= 0.0) {
            return Err(Error::InvalidParameter(format!("smoothness order must be >= 0, got {p}")));
        }
        if !(e_f > 0.0) {
            return Err(Error::InvalidParameter(format!("a-priori bound must be > 0, got {e_f}")));
        }
        Ok(Self { p, e_f })
    }
}

pub fn eigenvalue(l: usize) -> f64 {
    (l * l) as f64
}

/// Coefficients of grid samples via the orthonormal DST: (v, X_l) ≈ √h·DST(v)_l.
pub fn sine_coefficients(lap: &DirichletLaplacian, v: &[f64], l_max: usize) -> Result<SpectralField> {
    let grid = lap.grid();
    if grid.dim() != 1 {
        return Err(Error::InvalidParameter("spectral oracle is one-dimensional".into()));
    }
    check_len(grid.dof(), v.len())?;
    if l_max > grid.m() {
        return Err(Error::InvalidParameter(format!("L_max {l_max} exceeds grid size {}", grid.m())));
    }
    let d = lap.forward_dst_real(v);
    let s = grid.h().sqrt();
    Ok(SpectralField::new(d[..l_max].iter().map(|c| c * s).collect()))
}

/// Coefficients of a callable on (0, π), sampled on an m-point grid.
pub fn sine_coefficients_of(f: impl Fn(f64) -> f64, m: usize, l_max: usize) -> Result<SpectralField> {
    let grid = SpatialGrid::one_d(m)?;
    let lap = DirichletLaplacian::new(grid);
    let v = lap.grid().sample(|x, _| f(x));
    sine_coefficients(&lap, &v, l_max)
}

fn check_pair(g: &SpectralField, phi: &SpectralField) -> Result<()> {
    check_len(g.l_max(), phi.l_max())
}

/// (f,X_l) = λ_l/(1−e^{−λ_l T})·((g,X_l) − e^{−λ_l T}(φ,X_l)).
pub fn exact_source(g: &SpectralField, phi: &SpectralField, t_final: f64) -> Result<SpectralField> {
    check_pair(g, phi)?;
    Ok(SpectralField::new(
        (0..g.l_max())
            .map(|i| {
                let lam = eigenvalue(i + 1);
                let e = (-lam * t_final).exp();
                lam / (-(-lam * t_final).exp_m1()) * (g.coeffs[i] - e * phi.coeffs[i])
            })
            .collect(),
    ))
}

/// λ/(1 − e^{−λT} + αβλ + βλ²), the regularized filter.
pub fn regularized_filter(lam: f64, t_final: f64, alpha: f64, beta: f64) -> f64 {
    lam / (-(-lam * t_final).exp_m1() + alpha * beta * lam + beta * lam * lam)
}

/// (f_{α,β},X_l) = filter(λ_l)·((g,X_l) − e^{−λ_l T}(φ,X_l)).
pub fn regularized_source(
    g: &SpectralField,
    phi: &SpectralField,
    t_final: f64,
    alpha: f64,
    beta: f64,
) -> Result<SpectralField> {
    check_pair(g, phi)?;
    if !(beta > 0.0) || !(alpha >= 0.0) {
        return Err(Error::InvalidParameter(format!("need beta > 0 and alpha >= 0, got beta={beta}, alpha={alpha}")));
    }
    Ok(SpectralField::new(
        (0..g.l_max())
            .map(|i| {
                let lam = eigenvalue(i + 1);
                regularized_filter(lam, t_final, alpha, beta) * (g.coeffs[i] - (-lam * t_final).exp() * phi.coeffs[i])
            })
            .collect(),
    ))
}

/// Forward map in coefficient space for time-constant q ≡ 1:
/// (g,X_l) = e^{−λT}(φ,X_l) + (1−e^{−λT})/λ·(f,X_l).
pub fn forward_data(f: &SpectralField, phi: &SpectralField, t_final: f64) -> Result<SpectralField> {
    check_pair(f, phi)?;
    Ok(SpectralField::new(
        (0..f.l_max())
            .map(|i| {
                let lam = eigenvalue(i + 1);
                (-lam * t_final).exp() * phi.coeffs[i] - (-lam * t_final).exp_m1() / lam * f.coeffs[i]
            })
            .collect(),
    ))
}

/// A-priori β from the smoothness prior:
/// p < 2: τ(δ/E)^{2/(p+2)}; 2 ≤ p < 4: τ(δ/E)^{1/2}; p ≥ 4: τ(δ/E)^{1/2}/√(τ+1).
pub fn a_priori_beta(prior: &SourcePrior, delta: f64, tau: f64) -> Result<f64> {
    if !(prior.p >= 0.0) {
        return Err(Error::InvalidParameter(format!("smoothness order must be >= 0, got {}", prior.p)));
    }
    if !(delta > 0.0) || !(tau > 0.0) {
        return Err(Error::InvalidParameter("delta and tau must be positive".into()));
    }
    let r = delta / prior.e_f;
    Ok(if prior.p < 2.0 {
        tau * r.powf(2.0 / (prior.p + 2.0))
    } else if prior.p < 4.0 {
        tau * r.sqrt()
    } else {
        tau * r.sqrt() / (tau + 1.0).sqrt()
    })
}

/// Least-squares slope of log y against log x.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn single_mode_coefficients() {
        let s = (2.0 / PI).sqrt();
        let c = sine_coefficients_of(|x| s * (2.0 * x).sin(), 127, 8).unwrap();
        for (i, v) in c.coeffs.iter().enumerate() {
            let want = if i == 1 { 1.0 } else { 0.0 };
            assert!((v - want).abs() < 1e-13, "{i}: {v}");
        }
        assert!(sine_coefficients_of(|_| 0.0, 15, 15).unwrap().coeffs.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn single_mode_inversion() {
        let s = (2.0 / PI).sqrt();
        let g = SpectralField::new(vec![(1.0 - (-1.0f64).exp()) * s, 0.0]);
        let f = exact_source(&g, &SpectralField::zeros(2), 1.0).unwrap();
        assert!((f.coeffs[0] - s).abs() < 1e-15);
        assert_eq!(f.coeffs[1], 0.0);
    }

    #[test]
    fn phi_equal_g_cancels() {
        let g = SpectralField::new(vec![0.3, -0.2, 0.05]);
        let f = exact_source(&g, &g, 0.7).unwrap();
        for (i, v) in f.coeffs.iter().enumerate() {
            let want = eigenvalue(i + 1) * g.coeffs[i];
            assert!((v - want).abs() <= 1e-14 * want.abs());
        }
    }

    #[test]
    fn small_beta_limit() {
        let g = SpectralField::new(vec![0.3, -0.2, 0.05, 0.01]);
        let phi = SpectralField::new(vec![0.1, 0.0, 0.0, 0.2]);
        let e = exact_source(&g, &phi, 1.0).unwrap();
        let r = regularized_source(&g, &phi, 1.0, 3.0, 1e-14).unwrap();
        assert!(e.distance(&r) < 1e-10 * e.norm());
    }

    #[test]
    fn filter_bound() {
        let t = 1.0;
        let g1 = 1.0 - (-t as f64).exp();
        for &beta in &[1e-2, 1e-5, 1e-8] {
            for &alpha in &[0.0, 1.0, 1e3] {
                let bound = 1.0 / (2.0 * (g1 * beta).sqrt() + alpha * beta);
                for l in 1..5000 {
                    let lam = eigenvalue(l);
                    let ff = regularized_filter(lam, t, alpha, beta);
                    assert!(ff <= bound * (1.0 + 1e-12));
                    assert!(ff <= lam / (1.0 - (-lam * t).exp()));
                }
            }
        }
    }

    #[test]
    fn beta_rules() {
        let b = a_priori_beta(&SourcePrior::new(1.0, 1.0).unwrap(), 1e-4, 1e-2).unwrap();
        assert!((b - 1e-2 * 1e-4f64.powf(2.0 / 3.0)).abs() < 1e-18);
        assert!((b - 2.154e-5).abs() < 1e-8);
        let b = a_priori_beta(&SourcePrior::new(4.0, 1.0).unwrap(), 1e-4, 1.0).unwrap();
        assert!((b - 1e-2 / 2f64.sqrt()).abs() < 1e-16);
        let b = a_priori_beta(&SourcePrior::new(2.0, 0.3).unwrap(), 0.3, 0.01).unwrap();
        assert!((b - 0.01).abs() < 1e-16);
        assert!(SourcePrior::new(-1.0, 1.0).is_err());
        assert!(a_priori_beta(&SourcePrior { p: -1.0, e_f: 1.0 }, 1e-3, 1e-2).is_err());
    }

    #[test]
    fn slope_fit() {
        let x = [1.0, 10.0, 100.0];
        let y: Vec<f64> = x.iter().map(|v: &f64| 3.0 * v.powf(0.5)).collect();
        assert!((loglog_slope(&x, &y) - 0.5).abs() < 1e-14);
    }
}
