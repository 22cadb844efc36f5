//! The (n+1)×(n+1) time matrix B (or B_q), its eigenstructure via the
//! μ-parameterization μ = 1/(1−τλ), and condition-number bookkeeping.

pub mod roots;

use std::fmt;
use std::str::FromStr;

use faer::linalg::solvers::DenseSolveCore;
use faer::{c64, Accum, Mat, Par};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::grid::Scalar;
pub use roots::{deflate_unit_root, find_roots, find_roots_with, RootOptions, RootReport};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TimeGrid {
    t_final: f64,
    n: usize,
    tau: f64,
}

impl TimeGrid {
    /// Uniform steps τ = T/n. The inverse solvers need n ≥ 2 (checked when the
    /// time matrix is built); forward stepping also accepts a single step.
    pub fn new(t_final: f64, n: usize) -> Result<Self> {
        if !(t_final > 0.0 && t_final.is_finite()) {
            return Err(Error::InvalidTimeGrid(format!("final time must be positive, got {t_final}")));
        }
        if n == 0 {
            return Err(Error::InvalidTimeGrid("need at least one time step".into()));
        }
        Ok(Self { t_final, n, tau: t_final / n as f64 })
    }

    pub fn t_final(&self) -> f64 {
        self.t_final
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    /// t_j = jτ for j = 0..=n.
    pub fn times(&self) -> Vec<f64> {
        (0..=self.n).map(|j| j as f64 * self.tau).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Method {
    Qbvm,
    Mqbvm,
    Pqbvm,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Qbvm => "qbvm",
            Method::Mqbvm => "mqbvm",
            Method::Pqbvm => "pqbvm",
        }
    }

    /// MQBVM and PQBVM have Kronecker structure; QBVM does not.
    pub fn has_kronecker_form(self) -> bool {
        self != Method::Qbvm
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "qbvm" => Ok(Method::Qbvm),
            "mqbvm" => Ok(Method::Mqbvm),
            "pqbvm" => Ok(Method::Pqbvm),
            other => Err(Error::Config(format!("unknown method '{other}'"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RegularizationSpec {
    pub method: Method,
    pub beta: f64,
    /// QBVM: unused (0); MQBVM: 0; PQBVM: α_* = 1/τ + τ/β unless overridden.
    pub alpha: f64,
    /// c = β/τ².
    pub c: f64,
}

pub fn alpha_star(tau: f64, beta: f64) -> f64 {
    1.0 / tau + tau / beta
}

impl RegularizationSpec {
    pub fn new(method: Method, beta: f64, tg: &TimeGrid) -> Result<Self> {
        let alpha = match method {
            Method::Pqbvm if beta > 0.0 => alpha_star(tg.tau(), beta),
            _ => 0.0,
        };
        Self::with_alpha(method, alpha, beta, tg)
    }

    /// Arbitrary design parameter α ≥ 0 (the "PQBVM-like" family).
    pub fn with_alpha(method: Method, alpha: f64, beta: f64, tg: &TimeGrid) -> Result<Self> {
        if !(beta > 0.0 && beta.is_finite()) {
            return Err(Error::InvalidParameter(format!("beta must be positive, got {beta}")));
        }
        if !(alpha >= 0.0 && alpha.is_finite()) {
            return Err(Error::InvalidParameter(format!("alpha must be non-negative, got {alpha}")));
        }
        let c = beta / (tg.tau() * tg.tau());
        if method.has_kronecker_form() && c <= 1.0 {
            log::warn!("c = beta/tau^2 = {c:.3e} <= 1: diagonalizability is not guaranteed");
        }
        Ok(Self { method, beta, alpha, c })
    }

    pub fn c_exceeds_one(&self) -> bool {
        self.c > 1.0
    }

    pub fn uses_alpha_star(&self, tg: &TimeGrid) -> bool {
        let a = alpha_star(tg.tau(), self.beta);
        self.method != Method::Qbvm && (self.alpha - a).abs() <= 1e-14 * a
    }
}

#[derive(Clone, Debug)]
pub struct TimeMatrix {
    timegrid: TimeGrid,
    spec: RegularizationSpec,
    q: Vec<f64>,
}

pub fn build_time_matrix(tg: &TimeGrid, spec: &RegularizationSpec, q: Option<&[f64]>) -> Result<TimeMatrix> {
    TimeMatrix::new(*tg, *spec, q.map(|s| s.to_vec()))
}

impl TimeMatrix {
    /// `q` holds q(t_1)..q(t_n); `None` means q ≡ 1.
    pub fn new(timegrid: TimeGrid, spec: RegularizationSpec, q: Option<Vec<f64>>) -> Result<Self> {
        let n = timegrid.n();
        if n < 2 {
            return Err(Error::InvalidTimeGrid(format!("time matrix needs n >= 2, got {n}")));
        }
        if !spec.method.has_kronecker_form() {
            return Err(Error::UnsupportedMethod(spec.method));
        }
        let q = q.unwrap_or_else(|| vec![1.0; n]);
        crate::error::check_len(n, q.len())?;
        if q.iter().any(|&x| !(x > 0.0 && x.is_finite())) {
            return Err(Error::InvalidParameter("q(t_j) must be positive".into()));
        }
        Ok(Self { timegrid, spec, q })
    }

    pub fn timegrid(&self) -> &TimeGrid {
        &self.timegrid
    }

    pub fn spec(&self) -> &RegularizationSpec {
        &self.spec
    }

    pub fn q(&self) -> &[f64] {
        &self.q
    }

    pub fn n(&self) -> usize {
        self.timegrid.n()
    }

    pub fn q_is_unit(&self) -> bool {
        self.q.iter().all(|&x| x == 1.0)
    }

    pub fn dense(&self) -> Mat<f64> {
        let n = self.n();
        let it = 1.0 / self.timegrid.tau();
        let mut b = Mat::<f64>::zeros(n + 1, n + 1);
        b[(0, 0)] = self.spec.alpha;
        b[(0, n)] = 1.0 / self.spec.beta;
        for j in 1..=n {
            b[(j, 0)] = -self.q[j - 1];
            b[(j, j)] = it;
            if j >= 2 {
                b[(j, j - 1)] = -it;
            }
        }
        b
    }

    /// y = B x in O(n).
    pub fn apply<T: Scalar>(&self, x: &[T]) -> Vec<T> {
        let n = self.n();
        let it = 1.0 / self.timegrid.tau();
        let mut y = vec![T::zero(); n + 1];
        y[0] = x[0] * self.spec.alpha + x[n] * (1.0 / self.spec.beta);
        for j in 1..=n {
            let mut v = x[j] * it - x[0] * self.q[j - 1];
            if j >= 2 {
                v = v - x[j - 1] * it;
            }
            y[j] = v;
        }
        y
    }

    /// ψ(μ)·(normalized) of degree n+2, lowest degree first: the row-0 eigen
    /// condition cleared of denominators, which always vanishes at μ = 1.
    pub fn psi_coefficients(&self) -> Vec<f64> {
        let n = self.n();
        let tau = self.timegrid.tau();
        let c = self.spec.c;
        let b = c * (self.spec.alpha * tau - 1.0);
        if self.q_is_unit() {
            // μ^{n+2} + (b−1)μ² + (c−b)μ − c
            let mut psi = vec![0.0; n + 3];
            psi[0] = -c;
            psi[1] = c - b;
            psi[2] = b - 1.0;
            psi[n + 2] += 1.0;
            psi
        } else {
            let p = general_polynomial(&self.q, c, b);
            // (μ − 1)·p
            let mut psi = vec![0.0; n + 3];
            for (k, &a) in p.iter().enumerate() {
                psi[k + 1] += a;
                psi[k] -= a;
            }
            psi
        }
    }

    /// Degree-(n+1) polynomial whose roots are μ_k = 1/(1−τλ_k), lowest degree
    /// first and normalized by τ². For α = α_*, q ≡ 1 this is c + μ + … + μ^{n+1}.
    pub fn characteristic_polynomial(&self) -> Result<Vec<f64>> {
        if self.q_is_unit() && self.spec.uses_alpha_star(&self.timegrid) {
            let mut p = vec![1.0; self.n() + 2];
            p[0] = self.spec.c;
            return Ok(p);
        }
        deflate_unit_root(&self.psi_coefficients())
    }
}

// c + b·μ + Σ_i q_i μ^{n−i+2}
fn general_polynomial(q: &[f64], c: f64, b: f64) -> Vec<f64> {
    let n = q.len();
    let mut p = vec![0.0; n + 2];
    p[0] = c;
    p[1] = b;
    for (i, &qi) in q.iter().enumerate() {
        p[n + 1 - i] += qi;
    }
    p
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum WMethod {
    ClosedForm,
    LinearSolve,
}

impl WMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            WMethod::ClosedForm => "closed_form",
            WMethod::LinearSolve => "linear_solve",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RootSource {
    Polynomial,
    DenseEigen,
}

impl RootSource {
    pub fn as_str(self) -> &'static str {
        match self {
            RootSource::Polynomial => "polynomial",
            RootSource::DenseEigen => "dense_eigen",
        }
    }
}

#[derive(Clone, Debug)]
pub struct DiagOptions {
    pub allow_closed_form: bool,
    pub allow_dense_fallback: bool,
    /// Distinctness gate: min_{j≠k}|μ_j − μ_k| > root_tol·max|μ|.
    pub root_tol: f64,
    /// Accept W only if ‖V(Wx) − x‖∞ ≤ probe_tol·‖x‖∞ on a fixed probe vector.
    pub probe_tol: f64,
    pub roots: RootOptions,
}

impl Default for DiagOptions {
    fn default() -> Self {
        Self {
            allow_closed_form: true,
            allow_dense_fallback: true,
            root_tol: 1e-10,
            probe_tol: 1e-6,
            roots: RootOptions::default(),
        }
    }
}

/// B = V·diag(λ)·W with W = V⁻¹.
#[derive(Clone, Debug)]
pub struct Diagonalization {
    pub mu: Vec<Complex64>,
    pub lambda: Vec<Complex64>,
    pub v: Mat<c64>,
    pub w: Mat<c64>,
    pub kappa1: f64,
    pub w_method: WMethod,
    pub root_source: RootSource,
    pub root_iterations: usize,
}

pub fn diagonalize(tm: &TimeMatrix) -> Result<Diagonalization> {
    diagonalize_with(tm, &DiagOptions::default())
}

pub fn diagonalize_with(tm: &TimeMatrix, opts: &DiagOptions) -> Result<Diagonalization> {
    let tau = tm.timegrid().tau();
    let (mu, root_source, root_iterations) = match tm
        .characteristic_polynomial()
        .and_then(|p| find_roots_with(&p, &opts.roots))
    {
        Ok(r) => {
            let mut roots = r.roots;
            if tm.q_is_unit() {
                polish_unit_q(&mut roots, tm);
            }
            (roots, RootSource::Polynomial, r.iterations)
        }
        Err(e) if opts.allow_dense_fallback => {
            log::warn!("polynomial roots failed ({e}); falling back to a dense eigensolver");
            (dense_mu(tm)?, RootSource::DenseEigen, 0)
        }
        Err(e) => return Err(e),
    };

    let max_abs = mu.iter().fold(0.0f64, |m, z| m.max(z.norm()));
    let min_gap = min_pairwise_gap(&mu);
    let tolerance = opts.root_tol * max_abs;
    if !(min_gap > tolerance) {
        return Err(Error::NearDefectiveMatrix { min_gap, tolerance });
    }
    if mu.iter().any(|z| (*z - 1.0).norm() == 0.0 || !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::NearDefectiveMatrix { min_gap: 0.0, tolerance });
    }

    let lambda: Vec<Complex64> = mu.iter().map(|&z| (1.0 - z.inv()) / tau).collect();
    let v = eigenvector_matrix(&mu, tm);

    let closed_ok = opts.allow_closed_form
        && tm.q_is_unit()
        && tm.spec().uses_alpha_star(tm.timegrid())
        && tm.spec().c_exceeds_one();
    let mut chosen = None;
    if closed_ok {
        let w = closed_form_w(&mu, tm.spec().c, tau);
        if probe_defect(&v, &w) <= opts.probe_tol {
            chosen = Some((w, WMethod::ClosedForm));
        } else {
            log::warn!("closed-form W failed the probe check; using an LU inverse");
        }
    }
    let (w, w_method) = match chosen {
        Some(x) => x,
        None => (lu_inverse(&v), WMethod::LinearSolve),
    };
    let kappa1 = norm1(&v) * norm1(&w);
    Ok(Diagonalization { mu, lambda, v, w, kappa1, w_method, root_source, root_iterations })
}

/// Newton refinement against the factored form
/// p(μ) = (μ^{n+2}−1)/(μ−1) + (b−1)(μ+1) + (c−b), with μ^{n+2}−1 evaluated
/// as expm1((n+2)·log μ). This sidesteps the O(n·eps·Σ|μ|^k) rounding floor
/// of Horner's scheme, so the roots end up within about an ulp.
fn polish_unit_q(mu: &mut [Complex64], tm: &TimeMatrix) {
    let n = tm.n() as f64;
    let c = tm.spec().c;
    let b = c * (tm.spec().alpha * tm.timegrid().tau() - 1.0);
    let step = |z: Complex64| {
        let ln = log_near_unit(z);
        let zm1 = z - 1.0;
        let e = pow_m1(ln, n + 2.0);
        let p = e / zm1 + (b - 1.0) * (z + 1.0) + (c - b);
        let zn1 = (e + 1.0) / z;
        let dp = (zn1 * (n + 2.0) * zm1 - e) / (zm1 * zm1) + (b - 1.0);
        p / dp
    };
    for z in mu.iter_mut() {
        let mut last = f64::INFINITY;
        for _ in 0..3 {
            let d = step(*z);
            let size = d.norm();
            if !size.is_finite() || size >= last || size > 1e-6 * (1.0 + z.norm()) {
                break;
            }
            *z -= d;
            last = size;
        }
    }
}

fn dense_mu(tm: &TimeMatrix) -> Result<Vec<Complex64>> {
    let tau = tm.timegrid().tau();
    let ev = tm.dense().eigenvalues().map_err(|e| {
        log::warn!("dense eigensolver failed: {e:?}");
        Error::NearDefectiveMatrix { min_gap: f64::NAN, tolerance: f64::NAN }
    })?;
    Ok(ev.into_iter().map(|l| (Complex64::new(1.0, 0.0) - l * tau).inv()).collect())
}

fn min_pairwise_gap(z: &[Complex64]) -> f64 {
    let mut best = f64::INFINITY;
    for j in 0..z.len() {
        for k in j + 1..z.len() {
            best = best.min((z[j] - z[k]).norm());
        }
    }
    best
}

/// log μ with log|μ| = ½·log1p(|μ|²−1), accurate for |μ| close to 1.
fn log_near_unit(z: Complex64) -> Complex64 {
    let r2m1 = (z.re - 1.0) * (z.re + 1.0) + z.im * z.im;
    Complex64::new(0.5 * r2m1.ln_1p(), z.im.atan2(z.re))
}

/// μ^j − 1 = expm1(j·log μ) without the cancellation (and the O(j·eps)
/// drift) of repeated multiplication.
fn pow_m1(ln: Complex64, j: f64) -> Complex64 {
    let x = ln.re * j;
    let y = ln.im * j;
    let (s, c) = y.sin_cos();
    let h = (0.5 * y).sin();
    Complex64::new(x.exp_m1() * c - 2.0 * h * h, x.exp() * s)
}

/// Columns v^{(k)}: v₀ = (μ−1)/τ, v_j = (μ−1)·s_j with s_j = μ(s_{j−1} + q_j), s₀ = 0.
/// For q ≡ 1 this is v_j = μ^{j+1} − μ. No normalization.
pub fn eigenvector_matrix(mu: &[Complex64], tm: &TimeMatrix) -> Mat<c64> {
    let n = tm.n();
    let tau = tm.timegrid().tau();
    let q = tm.q();
    let unit = tm.q_is_unit();
    let mut v = Mat::<c64>::zeros(n + 1, n + 1);
    for (k, &z) in mu.iter().enumerate() {
            let zm1 = z - 1.0;
            v[(0, k)] = zm1 / tau;
            if unit {
                let mut pw = z;
                for j in 1..=n {
                    pw *= z;
                    v[(j, k)] = pw - z;
                }
            } else {
                let mut s = Complex64::new(0.0, 0.0);
                for j in 1..=n {
                    s = z * (s + q[j - 1]);
                    v[(j, k)] = zm1 * s;
                }
            }
    }
    v
}

/// W = V⁻¹ from L_jk = (μ_j^{n+2−k} − 1)/((n+2)μ_j^{n+1} + c − 1) (1-based k).
/// Case split on the column index: W_{j1} = cτL_j(1)/(n+c+1) − τL_{j1};
/// W_{jk} = L_{j,k+1} − L_j(1)/(n+c+1) for 1<k<n+1; W_{j,n+1} = −L_j(1)/(n+c+1).
pub fn closed_form_w(mu: &[Complex64], c: f64, tau: f64) -> Mat<c64> {
    let np1 = mu.len();
    let n = np1 - 1;
    let s = n as f64 + c + 1.0;
    let mut w = Mat::<c64>::zeros(np1, np1);
    let mut pw = vec![Complex64::new(0.0, 0.0); n + 2];
    let mut l = vec![Complex64::new(0.0, 0.0); np1];
    for (j, &z) in mu.iter().enumerate() {
        pw[0] = Complex64::new(1.0, 0.0);
        for p in 1..=n + 1 {
            pw[p] = pw[p - 1] * z;
        }
        let den = pw[n + 1] * (n as f64 + 2.0) + (c - 1.0);
        let inv_den = den.inv();
        let mut total = Complex64::new(0.0, 0.0);
        // 0-based k ↔ exponent n+1−k
        for k in 0..np1 {
            l[k] = (pw[n + 1 - k] - 1.0) * inv_den;
            total += l[k];
        }
        let tail = total / s;
        w[(j, 0)] = total * (c * tau / s) - l[0] * tau;
        for k in 1..np1 {
            let next = if k < n { l[k + 1] } else { Complex64::new(0.0, 0.0) };
            w[(j, k)] = next - tail;
        }
    }
    w
}

pub fn lu_inverse(v: &Mat<c64>) -> Mat<c64> {
    v.partial_piv_lu().inverse()
}

/// Max column sum of absolute values.
pub fn norm1(a: &Mat<c64>) -> f64 {
    (0..a.ncols())
        .map(|j| (0..a.nrows()).map(|i| a[(i, j)].norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

fn probe_defect(v: &Mat<c64>, w: &Mat<c64>) -> f64 {
    let n = v.nrows();
    let x = Mat::<c64>::from_fn(n, 1, |i, _| c64::new(1.0 + (i as f64 * 0.7).sin(), (i as f64 * 1.3).cos()));
    let y = w * &x;
    let z = v * &y;
    let mut worst = 0.0f64;
    let mut scale = 0.0f64;
    for i in 0..n {
        worst = worst.max((z[(i, 0)] - x[(i, 0)]).norm());
        scale = scale.max(x[(i, 0)].norm());
    }
    let r = worst / scale;
    if r.is_finite() {
        r
    } else {
        f64::INFINITY
    }
}

impl Diagonalization {
    pub fn n_plus_one(&self) -> usize {
        self.mu.len()
    }

    pub fn norm_v1(&self) -> f64 {
        norm1(&self.v)
    }

    pub fn norm_w1(&self) -> f64 {
        norm1(&self.w)
    }

    /// max_k ‖B v_k − λ_k v_k‖∞ / (‖v_k‖∞ (1 + |λ_k|)).
    pub fn eigen_residual(&self, tm: &TimeMatrix) -> f64 {
        let np1 = self.n_plus_one();
        let mut worst = 0.0f64;
        let mut col = vec![Complex64::new(0.0, 0.0); np1];
        for k in 0..np1 {
            for i in 0..np1 {
                col[i] = self.v[(i, k)];
            }
            let bv = tm.apply(&col);
            let lam = self.lambda[k];
            let mut r = 0.0f64;
            let mut s = 0.0f64;
            for i in 0..np1 {
                r = r.max((bv[i] - lam * col[i]).norm());
                s = s.max(col[i].norm());
            }
            worst = worst.max(r / (s * (1.0 + lam.norm())));
        }
        worst
    }

    /// ‖V·W − I‖_max (O(n³)).
    pub fn identity_defect(&self) -> f64 {
        let np1 = self.n_plus_one();
        let mut p = Mat::<c64>::zeros(np1, np1);
        faer::linalg::matmul::matmul(
            p.as_mut(),
            Accum::Replace,
            self.v.as_ref(),
            self.w.as_ref(),
            c64::new(1.0, 0.0),
            Par::Seq,
        );
        let mut worst = 0.0f64;
        for j in 0..np1 {
            for i in 0..np1 {
                let e = if i == j { p[(i, j)] - 1.0 } else { p[(i, j)] };
                worst = worst.max(e.norm());
            }
        }
        worst
    }

    pub fn min_root_gap(&self) -> f64 {
        min_pairwise_gap(&self.mu)
    }

    /// Returns a copy with V replaced by V·Φ and W by Φ⁻¹·W for a diagonal Φ.
    pub fn rescaled(&self, phi: &[Complex64]) -> Self {
        let mut out = self.clone();
        let np1 = self.n_plus_one();
        for k in 0..np1 {
            for i in 0..np1 {
                out.v[(i, k)] *= phi[k];
                out.w[(k, i)] /= phi[k];
            }
        }
        out.kappa1 = norm1(&out.v) * norm1(&out.w);
        out
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConditionReport {
    pub kappa1: f64,
    pub norm_v1: f64,
    pub norm_w1: f64,
    /// max_{j,k} |W_jk|
    pub max_abs_w: f64,
    /// (2c/T)n + (4c−2)n, reported only under the bound's hypotheses.
    pub bound_v: Option<f64>,
    /// (8 + 4τ(n+2))/n, reported only under the bound's hypotheses.
    pub bound_w: Option<f64>,
}

/// Hypotheses for the analytic bounds: n > 11, α = α_*, c > 1 (and q ≡ 1).
pub fn bounds_apply(tm: &TimeMatrix) -> bool {
    tm.n() > 11 && tm.q_is_unit() && tm.spec().uses_alpha_star(tm.timegrid()) && tm.spec().c_exceeds_one()
}

pub fn analytic_bounds(n: usize, c: f64, t_final: f64) -> (f64, f64) {
    let nf = n as f64;
    let tau = t_final / nf;
    ((2.0 * c / t_final) * nf + (4.0 * c - 2.0) * nf, (8.0 + 4.0 * tau * (nf + 2.0)) / nf)
}

pub fn condition_report(diag: &Diagonalization, tm: &TimeMatrix) -> ConditionReport {
    let norm_v1 = diag.norm_v1();
    let norm_w1 = diag.norm_w1();
    let mut max_abs_w = 0.0f64;
    for j in 0..diag.w.ncols() {
        for i in 0..diag.w.nrows() {
            max_abs_w = max_abs_w.max(diag.w[(i, j)].norm());
        }
    }
    let (bound_v, bound_w) = if bounds_apply(tm) {
        let (bv, bw) = analytic_bounds(tm.n(), tm.spec().c, tm.timegrid().t_final());
        (Some(bv), Some(bw))
    } else {
        (None, None)
    };
    ConditionReport { kappa1: diag.kappa1, norm_v1, norm_w1, max_abs_w, bound_v, bound_w }
}
