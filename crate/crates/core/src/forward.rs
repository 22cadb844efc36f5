//! Synthetic data: forward heat solves and multiplicative noise.
//!
//! `q_samples[j] = q(t_j)` for j = 0..=n throughout; backward Euler only uses j ≥ 1.
//!
//! Noise protocol (reproducible across ports): PCG64 (XSL-RR 128/64, the
//! `Lcg128Xsl64` of rand_pcg) seeded with `seed_from_u64(seed)`; for each interior
//! node in storage order draw `x = next_u64()` and set
//! U = 2·((x >> 11)·2⁻⁵³) − 1, then g_δ,i = g_i·(1 + ε·U).

use rand_pcg::rand_core::{Rng, SeedableRng};
use rand_pcg::Pcg64;

use crate::error::{check_len, Error, Result};
use crate::grid::{DirichletLaplacian, Field, SpatialGrid};
use crate::timedisc::TimeGrid;

fn check_inputs(lap: &DirichletLaplacian, f: &[f64], phi: &[f64], q: &[f64], tg: &TimeGrid) -> Result<()> {
    let dof = lap.grid().dof();
    check_len(dof, f.len())?;
    check_len(dof, phi.len())?;
    check_len(tg.n() + 1, q.len())
}

/// Crank–Nicolson: (I/τ − Δ_h/2)u^{j+1} = (I/τ + Δ_h/2)u^j + f·(q_j + q_{j+1})/2, u⁰ = φ.
/// Returns uⁿ.
pub fn crank_nicolson_forward(
    lap: &DirichletLaplacian,
    f: &[f64],
    q_samples: &[f64],
    phi: &[f64],
    tg: &TimeGrid,
) -> Result<Field> {
    check_inputs(lap, f, phi, q_samples, tg)?;
    let tau = tg.tau();
    let mut u = phi.to_vec();
    let mut rhs = vec![0.0; u.len()];
    for j in 0..tg.n() {
        let lu = lap.apply(&u);
        let qa = 0.5 * (q_samples[j] + q_samples[j + 1]);
        // (2/τ − Δ)u^{j+1} = 2·[(I/τ + Δ/2)u^j + qa·f]
        for i in 0..u.len() {
            rhs[i] = 2.0 * (u[i] / tau + 0.5 * lu[i] + qa * f[i]);
        }
        u = lap.shifted_solve_real(2.0 / tau, &rhs)?;
    }
    Ok(u)
}

/// Backward Euler: (u^j − u^{j−1})/τ − Δ_h u^j = q_j f, u⁰ = φ. Returns u¹..uⁿ.
pub fn backward_euler_forward(
    lap: &DirichletLaplacian,
    f: &[f64],
    q_samples: &[f64],
    phi: &[f64],
    tg: &TimeGrid,
) -> Result<Vec<Field>> {
    check_inputs(lap, f, phi, q_samples, tg)?;
    let tau = tg.tau();
    let mut out = Vec::with_capacity(tg.n());
    let mut u = phi.to_vec();
    let mut rhs = vec![0.0; u.len()];
    for qj in &q_samples[1..] {
        for i in 0..u.len() {
            rhs[i] = u[i] / tau + qj * f[i];
        }
        u = lap.shifted_solve_real(1.0 / tau, &rhs)?;
        out.push(u.clone());
    }
    Ok(out)
}

/// Uniform draws on [−1, 1] per the noise protocol above.
pub fn uniform_stream(seed: u64) -> impl Iterator<Item = f64> {
    let mut rng = Pcg64::seed_from_u64(seed);
    std::iter::repeat_with(move || {
        let x = rng.next_u64();
        2.0 * ((x >> 11) as f64 * (1.0 / (1u64 << 53) as f64)) - 1.0
    })
}

/// g_δ = g·(1 + ε·U) and δ = ‖g_δ − g‖₂ (discrete L² norm).
pub fn add_noise(grid: &SpatialGrid, g: &[f64], epsilon: f64, seed: u64) -> Result<(Field, f64)> {
    if !(epsilon >= 0.0 && epsilon.is_finite()) {
        return Err(Error::InvalidParameter(format!("epsilon must be non-negative, got {epsilon}")));
    }
    check_len(grid.dof(), g.len())?;
    let g_delta: Field = g.iter().zip(uniform_stream(seed)).map(|(&gi, u)| gi * (1.0 + epsilon * u)).collect();
    let delta = grid.l2_distance(&g_delta, g);
    Ok((g_delta, delta))
}

/// Everything needed to pose one noisy inverse problem.
#[derive(Clone, Debug)]
pub struct SyntheticCase {
    pub f_exact: Field,
    pub q_samples: Vec<f64>,
    pub phi: Field,
    pub g_clean: Field,
    pub g_delta: Field,
    pub epsilon: f64,
    pub delta: f64,
    pub seed: u64,
}

impl SyntheticCase {
    /// Crank–Nicolson data generation followed by noise injection.
    pub fn generate(
        lap: &DirichletLaplacian,
        tg: &TimeGrid,
        f_exact: Field,
        q_samples: Vec<f64>,
        phi: Field,
        epsilon: f64,
        seed: u64,
    ) -> Result<Self> {
        let g_clean = crank_nicolson_forward(lap, &f_exact, &q_samples, &phi, tg)?;
        Self::with_clean_data(lap.grid(), f_exact, q_samples, phi, g_clean, epsilon, seed)
    }

    pub fn with_clean_data(
        grid: &SpatialGrid,
        f_exact: Field,
        q_samples: Vec<f64>,
        phi: Field,
        g_clean: Field,
        epsilon: f64,
        seed: u64,
    ) -> Result<Self> {
        let (g_delta, delta) = add_noise(grid, &g_clean, epsilon, seed)?;
        Ok(Self { f_exact, q_samples, phi, g_clean, g_delta, epsilon, delta, seed })
    }

    /// q(t_1)..q(t_n), or `None` when q ≡ 1.
    pub fn q_inverse(&self) -> Option<Vec<f64>> {
        if self.q_samples.iter().all(|&q| q == 1.0) {
            None
        } else {
            Some(self.q_samples[1..].to_vec())
        }
    }
}
