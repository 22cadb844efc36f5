//! Three-step diagonalization solver for the all-at-once MQBVM/PQBVM system
//! A_h = B ⊗ I_h − I_t ⊗ Δ_h:
//!
//! (a) S₁ = Z·Wᵀ, (b) (λ_k I − Δ_h) S₂(:,k) = S₁(:,k) for every k, (c) U = S₂·Vᵀ.
//!
//! Unknowns are ordered [f; u¹; …; uⁿ], i.e. column k of U is time block k.

use std::time::Instant;

use faer::{c64, Accum, Mat, Par};
use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{check_len, Error, Result};
use crate::grid::{build_laplacian, DirichletLaplacian, Field, SpatialGrid};
use crate::timedisc::{Diagonalization, RegularizationSpec, TimeGrid, TimeMatrix};

/// Measurement data plus regularization setup.
#[derive(Clone, Debug)]
pub struct InverseProblem {
    pub grid: SpatialGrid,
    pub timegrid: TimeGrid,
    pub spec: RegularizationSpec,
    pub phi: Field,
    pub g_delta: Field,
    /// q(t_1)..q(t_n); `None` means q ≡ 1.
    pub q: Option<Vec<f64>>,
}

impl InverseProblem {
    pub fn new(
        grid: SpatialGrid,
        timegrid: TimeGrid,
        spec: RegularizationSpec,
        phi: Field,
        g_delta: Field,
        q: Option<Vec<f64>>,
    ) -> Result<Self> {
        check_len(grid.dof(), phi.len())?;
        check_len(grid.dof(), g_delta.len())?;
        if let Some(q) = &q {
            check_len(timegrid.n(), q.len())?;
        }
        Ok(Self { grid, timegrid, spec, phi, g_delta, q })
    }

    pub fn time_matrix(&self) -> Result<TimeMatrix> {
        TimeMatrix::new(self.timegrid, self.spec, self.q.clone())
    }

    pub fn q_at(&self, j: usize) -> f64 {
        self.q.as_ref().map_or(1.0, |q| q[j - 1])
    }

    /// Total number of unknowns dof·(n+1).
    pub fn unknowns(&self) -> usize {
        self.grid.dof() * (self.timegrid.n() + 1)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Timings {
    pub diag: f64,
    pub step_a: f64,
    pub step_b: f64,
    pub step_c: f64,
    pub total: f64,
}

#[derive(Clone, Debug)]
pub struct ReconstructionResult {
    pub f: Field,
    /// u¹..uⁿ when requested.
    pub trajectory: Option<Vec<Field>>,
    /// ‖A_h u − b‖₂/‖b‖₂.
    pub residual: f64,
    /// ‖Im U‖/‖U‖ before the imaginary part was dropped.
    pub imag_ratio: f64,
    pub timings: Timings,
}

#[derive(Clone, Debug)]
pub struct PintOptions {
    /// Worker threads for steps (b) and (c); `None` uses the ambient rayon pool.
    pub threads: Option<usize>,
    pub keep_trajectory: bool,
    /// Row-block height for step (c); fixed so results do not depend on the thread count.
    pub row_block: usize,
    pub imag_tol: f64,
}

impl Default for PintOptions {
    fn default() -> Self {
        Self { threads: None, keep_trajectory: true, row_block: 64, imag_tol: 1e-8 }
    }
}

/// Z = mat(b_h): column 0 = g_δ/β, column 1 = φ/τ, the rest zero.
pub fn assemble_rhs(problem: &InverseProblem) -> Mat<c64> {
    let dof = problem.grid.dof();
    let n = problem.timegrid.n();
    let ib = 1.0 / problem.spec.beta;
    let it = 1.0 / problem.timegrid.tau();
    let mut z = Mat::<c64>::zeros(dof, n + 1);
    for i in 0..dof {
        z[(i, 0)] = c64::new(problem.g_delta[i] * ib, 0.0);
        z[(i, 1)] = c64::new(problem.phi[i] * it, 0.0);
    }
    z
}

/// Real right-hand side b_h in block order.
pub fn rhs_vector(problem: &InverseProblem) -> Vec<f64> {
    let dof = problem.grid.dof();
    let mut b = vec![0.0; problem.unknowns()];
    let ib = 1.0 / problem.spec.beta;
    let it = 1.0 / problem.timegrid.tau();
    for i in 0..dof {
        b[i] = problem.g_delta[i] * ib;
        b[dof + i] = problem.phi[i] * it;
    }
    b
}

pub fn solve(problem: &InverseProblem, diag: &Diagonalization) -> Result<ReconstructionResult> {
    let lap = build_laplacian(&problem.grid);
    solve_with(problem, &lap, diag, &PintOptions::default())
}

pub fn solve_with(
    problem: &InverseProblem,
    lap: &DirichletLaplacian,
    diag: &Diagonalization,
    opts: &PintOptions,
) -> Result<ReconstructionResult> {
    if !problem.spec.method.has_kronecker_form() {
        return Err(Error::UnsupportedMethod(problem.spec.method));
    }
    check_len(problem.timegrid.n() + 1, diag.n_plus_one())?;
    match opts.threads {
        Some(k) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(k.max(1))
                .build()
                .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
            pool.install(|| run(problem, lap, diag, opts))
        }
        None => run(problem, lap, diag, opts),
    }
}

fn run(
    problem: &InverseProblem,
    lap: &DirichletLaplacian,
    diag: &Diagonalization,
    opts: &PintOptions,
) -> Result<ReconstructionResult> {
    let start = Instant::now();
    let dof = problem.grid.dof();
    let np1 = diag.n_plus_one();
    let ib = 1.0 / problem.spec.beta;
    let it = 1.0 / problem.timegrid.tau();

    // (a) Z has two nonzero columns, so S₁(:,k) = z₀·W[k,0] + z₁·W[k,1].
    let t = Instant::now();
    let s1: Vec<Vec<Complex64>> = (0..np1)
        .into_par_iter()
        .map(|k| {
            let w0 = diag.w[(k, 0)] * ib;
            let w1 = diag.w[(k, 1)] * it;
            (0..dof).map(|i| w0 * problem.g_delta[i] + w1 * problem.phi[i]).collect()
        })
        .collect();
    let step_a = t.elapsed().as_secs_f64();

    // (b) independent shifted solves, one task per eigenvalue
    let t = Instant::now();
    let s2: Vec<Vec<Complex64>> = s1
        .par_iter()
        .enumerate()
        .map(|(k, col)| lap.shifted_solve(diag.lambda[k], col))
        .collect::<Result<_>>()?;
    drop(s1);
    let step_b = t.elapsed().as_secs_f64();

    // (c) U = S₂·Vᵀ by fixed row blocks
    let t = Instant::now();
    let s2m = Mat::<c64>::from_fn(dof, np1, |i, k| s2[k][i]);
    drop(s2);
    let rb = opts.row_block.max(1);
    let starts: Vec<usize> = (0..dof).step_by(rb).collect();
    let blocks: Vec<Mat<c64>> = starts
        .par_iter()
        .map(|&r0| {
            let len = rb.min(dof - r0);
            let mut out = Mat::<c64>::zeros(len, np1);
            faer::linalg::matmul::matmul(
                out.as_mut(),
                Accum::Replace,
                s2m.as_ref().subrows(r0, len),
                diag.v.as_ref().transpose(),
                c64::new(1.0, 0.0),
                Par::Seq,
            );
            out
        })
        .collect();
    let mut cols: Vec<Field> = vec![vec![0.0; dof]; np1];
    let mut re2 = 0.0;
    let mut im2 = 0.0;
    for (&r0, b) in starts.iter().zip(&blocks) {
        for k in 0..np1 {
            for i in 0..b.nrows() {
                let z = b[(i, k)];
                cols[k][r0 + i] = z.re;
                re2 += z.re * z.re;
                im2 += z.im * z.im;
            }
        }
    }
    let step_c = t.elapsed().as_secs_f64();

    let imag_ratio = if re2 + im2 > 0.0 { (im2 / (re2 + im2)).sqrt() } else { 0.0 };
    if !(imag_ratio <= opts.imag_tol) {
        return Err(Error::NonRealReconstruction { ratio: imag_ratio });
    }
    let tm = problem.time_matrix()?;
    let residual = relative_residual(problem, &tm, lap, &cols);
    let f = cols[0].clone();
    let trajectory = opts.keep_trajectory.then(|| cols.split_off(1));
    let timings = Timings { diag: 0.0, step_a, step_b, step_c, total: start.elapsed().as_secs_f64() };
    Ok(ReconstructionResult { f, trajectory, residual, imag_ratio, timings })
}

/// y = (B ⊗ I_h − I_t ⊗ Δ_h) u with u given as n+1 time blocks.
pub fn kron_apply(tm: &TimeMatrix, lap: &DirichletLaplacian, blocks: &[Field]) -> Vec<Field> {
    let np1 = blocks.len();
    let dof = blocks[0].len();
    let mut out: Vec<Field> = blocks.iter().map(|b| lap.apply(b).into_iter().map(|x| -x).collect()).collect();
    let mut row = vec![0.0; np1];
    for i in 0..dof {
        for k in 0..np1 {
            row[k] = blocks[k][i];
        }
        let y = tm.apply(&row);
        for k in 0..np1 {
            out[k][i] += y[k];
        }
    }
    out
}

fn relative_residual(problem: &InverseProblem, tm: &TimeMatrix, lap: &DirichletLaplacian, blocks: &[Field]) -> f64 {
    let y = kron_apply(tm, lap, blocks);
    let b = rhs_vector(problem);
    let dof = problem.grid.dof();
    let mut r2 = 0.0;
    for (k, yk) in y.iter().enumerate() {
        for i in 0..dof {
            r2 += (yk[i] - b[k * dof + i]).powi(2);
        }
    }
    let b2: f64 = b.iter().map(|x| x * x).sum();
    if b2 > 0.0 {
        (r2 / b2).sqrt()
    } else {
        r2.sqrt()
    }
}

/// Recomputes ‖A_h u − b‖₂/‖b‖₂ for a result that kept its trajectory.
pub fn residual_check(problem: &InverseProblem, result: &ReconstructionResult) -> Result<f64> {
    let traj = result
        .trajectory
        .as_ref()
        .ok_or_else(|| Error::InvalidParameter("residual check needs the trajectory".into()))?;
    let tm = problem.time_matrix()?;
    let lap = build_laplacian(&problem.grid);
    let mut blocks = Vec::with_capacity(traj.len() + 1);
    blocks.push(result.f.clone());
    blocks.extend(traj.iter().cloned());
    Ok(relative_residual(problem, &tm, &lap, &blocks))
}
