//! Experiment drivers: the five reference examples, β selection rules, noisy
//! reconstruction sweeps, the condition-number study and the PinT-vs-direct
//! benchmark, with a versioned CSV schema.

use std::f64::consts::PI;
use std::fmt;
use std::io::Write;
use std::str::FromStr;
use std::time::Instant;

use crate::allatonce::{self, DirectStrategy};
use crate::error::{Error, Result};
use crate::forward::{add_noise, backward_euler_forward, crank_nicolson_forward};
use crate::grid::{build_laplacian, DirichletLaplacian, Field, SpatialGrid};
use crate::pint::{self, InverseProblem, PintOptions, ReconstructionResult};
use crate::timedisc::{
    condition_report, diagonalize, Method, RegularizationSpec, TimeGrid, TimeMatrix,
};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Source {
    /// x(π−x) sin 4x
    Smooth,
    /// 2x on [0, π/2], 2(π−x) on [π/2, π]
    Hat,
    /// 1 on [π/3, 2π/3], 0 elsewhere
    Indicator,
    /// x(π−x) sin 2x · y(π−y) cos y
    Product2d,
    /// sin x (· sin y in 2D)
    SineMode,
}

impl Source {
    pub fn eval(self, x: f64, y: f64, dim: usize) -> f64 {
        match self {
            Source::Smooth => x * (PI - x) * (4.0 * x).sin(),
            Source::Hat => {
                if x <= PI / 2.0 {
                    2.0 * x
                } else {
                    2.0 * (PI - x)
                }
            }
            Source::Indicator => {
                if (PI / 3.0..=2.0 * PI / 3.0).contains(&x) {
                    1.0
                } else {
                    0.0
                }
            }
            Source::Product2d => x * (PI - x) * (2.0 * x).sin() * y * (PI - y) * y.cos(),
            Source::SineMode => {
                if dim == 2 {
                    x.sin() * y.sin()
                } else {
                    x.sin()
                }
            }
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Source::Smooth => "smooth",
            Source::Hat => "hat",
            Source::Indicator => "indicator",
            Source::Product2d => "product2d",
            Source::SineMode => "sine",
        }
    }
}

impl FromStr for Source {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "smooth" => Ok(Source::Smooth),
            "hat" => Ok(Source::Hat),
            "indicator" => Ok(Source::Indicator),
            "product2d" => Ok(Source::Product2d),
            "sine" => Ok(Source::SineMode),
            other => Err(Error::Config(format!("unknown source '{other}'"))),
        }
    }
}

/// Time profile multiplying the source.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum TimeProfile {
    One,
    /// e^{−t} + ln(t+1) + t²
    Mixed,
}

impl TimeProfile {
    pub fn eval(self, t: f64) -> f64 {
        match self {
            TimeProfile::One => 1.0,
            TimeProfile::Mixed => (-t).exp() + t.ln_1p() + t * t,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            TimeProfile::One => "one",
            TimeProfile::Mixed => "mixed",
        }
    }
}

impl FromStr for TimeProfile {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "one" | "1" => Ok(TimeProfile::One),
            "mixed" => Ok(TimeProfile::Mixed),
            other => Err(Error::Config(format!("unknown time profile '{other}'"))),
        }
    }
}

/// Domain (0,π)^dim, final time, source and time profile; φ = 0.
#[derive(Clone, Debug, PartialEq)]
pub struct ExampleSpec {
    pub name: String,
    pub dim: usize,
    pub t_final: f64,
    pub source: Source,
    pub q: TimeProfile,
}

impl ExampleSpec {
    pub fn preset(id: u32) -> Result<Self> {
        let (dim, source, q) = match id {
            1 => (1, Source::Smooth, TimeProfile::One),
            2 => (1, Source::Hat, TimeProfile::One),
            3 => (1, Source::Indicator, TimeProfile::One),
            4 => (2, Source::Product2d, TimeProfile::One),
            5 => (1, Source::Smooth, TimeProfile::Mixed),
            _ => return Err(Error::Config(format!("example must be 1..=5, got {id}"))),
        };
        Ok(Self { name: id.to_string(), dim, t_final: 1.0, source, q })
    }

    pub fn custom(dim: usize, t_final: f64, source: Source, q: TimeProfile) -> Result<Self> {
        if dim != 1 && dim != 2 {
            return Err(Error::Config(format!("dim must be 1 or 2, got {dim}")));
        }
        if !(t_final > 0.0) {
            return Err(Error::Config(format!("final time must be positive, got {t_final}")));
        }
        Ok(Self { name: "custom".into(), dim, t_final, source, q })
    }

    pub fn grid(&self, m: usize) -> Result<SpatialGrid> {
        SpatialGrid::new(self.dim, m)
    }

    pub fn f_exact(&self, grid: &SpatialGrid) -> Field {
        grid.sample(|x, y| self.source.eval(x, y, self.dim))
    }

    /// q(t_j), j = 0..=n.
    pub fn q_samples(&self, tg: &TimeGrid) -> Vec<f64> {
        tg.times().into_iter().map(|t| self.q.eval(t)).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum BetaRule {
    DeltaSqrt,
    Delta,
    TauDeltaSqrt,
    DeltaTwoThirds,
    Explicit(f64),
}

impl BetaRule {
    /// Default rule per method; the 2D MQBVM example uses δ^{2/3}, which is
    /// what reproduces its reference errors.
    pub fn default_for(method: Method, example: &ExampleSpec) -> Self {
        match method {
            Method::Qbvm => BetaRule::DeltaSqrt,
            Method::Mqbvm if example.name == "4" => BetaRule::DeltaTwoThirds,
            Method::Mqbvm => BetaRule::Delta,
            Method::Pqbvm => BetaRule::TauDeltaSqrt,
        }
    }

    pub fn beta(self, delta: f64, tau: f64) -> f64 {
        match self {
            BetaRule::DeltaSqrt => delta.sqrt(),
            BetaRule::Delta => delta,
            BetaRule::TauDeltaSqrt => tau * delta.sqrt(),
            BetaRule::DeltaTwoThirds => delta.powf(2.0 / 3.0),
            BetaRule::Explicit(b) => b,
        }
    }
}

impl fmt::Display for BetaRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BetaRule::DeltaSqrt => f.write_str("delta_sqrt"),
            BetaRule::Delta => f.write_str("delta"),
            BetaRule::TauDeltaSqrt => f.write_str("tau_delta_sqrt"),
            BetaRule::DeltaTwoThirds => f.write_str("delta_two_thirds"),
            BetaRule::Explicit(b) => write!(f, "explicit:{b:e}"),
        }
    }
}

impl FromStr for BetaRule {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if let Some(v) = s.strip_prefix("explicit:") {
            let b: f64 = v.parse().map_err(|_| Error::Config(format!("bad explicit beta '{v}'")))?;
            if !(b > 0.0 && b.is_finite()) {
                return Err(Error::Config(format!("explicit beta must be positive, got {b}")));
            }
            return Ok(BetaRule::Explicit(b));
        }
        match s {
            "delta_sqrt" => Ok(BetaRule::DeltaSqrt),
            "delta" => Ok(BetaRule::Delta),
            "tau_delta_sqrt" => Ok(BetaRule::TauDeltaSqrt),
            "delta_two_thirds" => Ok(BetaRule::DeltaTwoThirds),
            other => Err(Error::Config(format!("unknown beta rule '{other}'"))),
        }
    }
}

/// Scheme used to synthesize the clean final data.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DataScheme {
    CrankNicolson,
    /// Same discretization as the inverse solver (inverse-crime control).
    BackwardEuler,
}

#[derive(Clone, Debug)]
pub struct ExperimentConfig {
    pub example: ExampleSpec,
    pub method: Method,
    pub m: usize,
    pub n: usize,
    pub epsilons: Vec<f64>,
    pub seeds: Vec<u64>,
    pub beta_rule: Option<BetaRule>,
    pub threads: Option<usize>,
    pub relative: bool,
    pub data: DataScheme,
}

impl ExperimentConfig {
    pub fn new(example: ExampleSpec, method: Method, m: usize, n: usize) -> Self {
        Self {
            example,
            method,
            m,
            n,
            epsilons: vec![1e-2],
            seeds: vec![0],
            beta_rule: None,
            threads: None,
            relative: false,
            data: DataScheme::CrankNicolson,
        }
    }

    pub fn rule(&self) -> BetaRule {
        self.beta_rule.unwrap_or_else(|| BetaRule::default_for(self.method, &self.example))
    }

    pub fn validate(&self) -> Result<()> {
        if self.m == 0 {
            return Err(Error::Config("m must be positive".into()));
        }
        if self.n < 2 {
            return Err(Error::Config(format!("n must be at least 2, got {}", self.n)));
        }
        if self.epsilons.is_empty() || self.seeds.is_empty() {
            return Err(Error::Config("epsilon and seed lists must be non-empty".into()));
        }
        if let Some(e) = self.epsilons.iter().find(|e| !(**e >= 0.0 && e.is_finite())) {
            return Err(Error::Config(format!("epsilon must be non-negative, got {e}")));
        }
        if self.threads == Some(0) {
            return Err(Error::Config("threads must be positive".into()));
        }
        if self.example.dim == 2 && self.m > 4096 {
            return Err(Error::Config(format!("2D grid with m = {} is beyond desk scale", self.m)));
        }
        Ok(())
    }
}

/// Clean data and the discrete objects shared by every (ε, seed) of a sweep.
#[derive(Clone, Debug)]
pub struct PreparedCase {
    pub grid: SpatialGrid,
    pub timegrid: TimeGrid,
    pub lap: DirichletLaplacian,
    pub f_exact: Field,
    pub q_samples: Vec<f64>,
    pub phi: Field,
    pub g_clean: Field,
}

pub fn prepare(config: &ExperimentConfig) -> Result<PreparedCase> {
    config.validate()?;
    let grid = config.example.grid(config.m)?;
    let timegrid = TimeGrid::new(config.example.t_final, config.n)?;
    let lap = build_laplacian(&grid);
    let f_exact = config.example.f_exact(&grid);
    let q_samples = config.example.q_samples(&timegrid);
    let phi = vec![0.0; grid.dof()];
    let g_clean = match config.data {
        DataScheme::CrankNicolson => crank_nicolson_forward(&lap, &f_exact, &q_samples, &phi, &timegrid)?,
        DataScheme::BackwardEuler => backward_euler_forward(&lap, &f_exact, &q_samples, &phi, &timegrid)?
            .pop()
            .expect("n >= 1"),
    };
    Ok(PreparedCase { grid, timegrid, lap, f_exact, q_samples, phi, g_clean })
}

impl PreparedCase {
    pub fn q_inverse(&self) -> Option<Vec<f64>> {
        if self.q_samples.iter().all(|&q| q == 1.0) {
            None
        } else {
            Some(self.q_samples[1..].to_vec())
        }
    }

    pub fn problem(&self, method: Method, beta: f64, g_delta: Field) -> Result<InverseProblem> {
        let spec = RegularizationSpec::new(method, beta, &self.timegrid)?;
        InverseProblem::new(self.grid.clone(), self.timegrid, spec, self.phi.clone(), g_delta, self.q_inverse())
    }
}

/// Largest system the escalation path hands to the direct solver.
pub const ESCALATION_CEILING: usize = 2_000_000;

/// One reconstruction: QBVM through the direct solver, the others through PinT.
/// If PinT's diagonalization or realness gate fails (typically c = β/τ² ≪ 1),
/// the point escalates to the direct solver; the solver label records it.
pub fn reconstruct(
    problem: &InverseProblem,
    lap: &DirichletLaplacian,
    threads: Option<usize>,
) -> Result<(ReconstructionResult, String)> {
    let direct = |prefix: &str| -> Result<(ReconstructionResult, String)> {
        let strategy = DirectStrategy::auto(&problem.grid, problem.timegrid.n());
        Ok((allatonce::solve_problem(problem, strategy)?, format!("{prefix}{}", strategy.as_str())))
    };
    if problem.spec.method == Method::Qbvm {
        return direct("");
    }
    let t = Instant::now();
    let attempt = problem.time_matrix().and_then(|tm| diagonalize(&tm)).and_then(|diag| {
        let t_diag = t.elapsed().as_secs_f64();
        let opts = PintOptions { threads, keep_trajectory: false, ..Default::default() };
        let mut res = pint::solve_with(problem, lap, &diag, &opts)?;
        res.timings.diag = t_diag;
        res.timings.total += t_diag;
        Ok(res)
    });
    match attempt {
        Ok(res) => Ok((res, "pint".into())),
        Err(
            e @ (Error::NearDefectiveMatrix { .. }
            | Error::NonRealReconstruction { .. }
            | Error::NoConvergence { .. }
            | Error::SingularShift { .. }),
        ) if problem.unknowns() <= ESCALATION_CEILING => {
            log::warn!("pint failed ({e}); escalating to the direct solver");
            direct("escalated:")
        }
        Err(e) => Err(e),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunRow {
    pub example: String,
    pub dim: usize,
    pub method: Method,
    pub m: usize,
    pub n: usize,
    pub t_final: f64,
    pub epsilon: f64,
    pub seed: u64,
    pub beta_rule: String,
    pub delta: f64,
    pub beta: f64,
    pub alpha: f64,
    pub error_l2: f64,
    pub error_rel: Option<f64>,
    pub residual: f64,
    pub t_diag: f64,
    pub t_solve: f64,
    pub t_total: f64,
    pub threads: Option<usize>,
    pub solver: String,
    pub status: String,
}

impl RunRow {
    pub fn ok(&self) -> bool {
        self.status == "ok"
    }
}

/// A solved (ε, seed) point with the reconstruction itself.
#[derive(Clone, Debug)]
pub struct CaseOutcome {
    pub row: RunRow,
    pub f: Option<Field>,
}

pub fn run_case(config: &ExperimentConfig, case: &PreparedCase, epsilon: f64, seed: u64) -> CaseOutcome {
    let rule = config.rule();
    let mut row = RunRow {
        example: config.example.name.clone(),
        dim: config.example.dim,
        method: config.method,
        m: config.m,
        n: config.n,
        t_final: config.example.t_final,
        epsilon,
        seed,
        beta_rule: rule.to_string(),
        delta: f64::NAN,
        beta: f64::NAN,
        alpha: f64::NAN,
        error_l2: f64::NAN,
        error_rel: None,
        residual: f64::NAN,
        t_diag: f64::NAN,
        t_solve: f64::NAN,
        t_total: f64::NAN,
        threads: config.threads,
        solver: String::new(),
        status: String::new(),
    };
    let attempt = (|| -> Result<Field> {
        let (g_delta, delta) = add_noise(&case.grid, &case.g_clean, epsilon, seed)?;
        row.delta = delta;
        row.beta = rule.beta(delta, case.timegrid.tau());
        let problem = case.problem(config.method, row.beta, g_delta)?;
        row.alpha = problem.spec.alpha;
        let (res, solver) = reconstruct(&problem, &case.lap, config.threads)?;
        row.solver = solver;
        row.residual = res.residual;
        row.t_diag = res.timings.diag;
        row.t_total = res.timings.total;
        row.t_solve = res.timings.total - res.timings.diag;
        row.error_l2 = case.grid.l2_distance(&res.f, &case.f_exact);
        if config.relative {
            row.error_rel = Some(row.error_l2 / case.grid.l2_norm(&case.f_exact));
        }
        Ok(res.f)
    })();
    match attempt {
        Ok(f) => {
            row.status = "ok".into();
            CaseOutcome { row, f: Some(f) }
        }
        Err(e) => {
            log::warn!("eps={epsilon:e} seed={seed}: {e}");
            row.status = format!("failed: {e}");
            CaseOutcome { row, f: None }
        }
    }
}

/// Full (ε × seed) sweep; failing points are recorded per row, never fatal.
pub fn run_example(config: &ExperimentConfig) -> Result<Vec<RunRow>> {
    let case = prepare(config)?;
    let mut rows = Vec::with_capacity(config.epsilons.len() * config.seeds.len());
    for &eps in &config.epsilons {
        for &seed in &config.seeds {
            rows.push(run_case(config, &case, eps, seed).row);
        }
    }
    Ok(rows)
}

pub fn median(values: &[f64]) -> Option<f64> {
    let mut v: Vec<f64> = values.iter().copied().filter(|x| x.is_finite()).collect();
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let k = v.len();
    Some(if k % 2 == 1 { v[k / 2] } else { 0.5 * (v[k / 2 - 1] + v[k / 2]) })
}

/// Median error per ε over the successful rows, in ε order of first appearance.
pub fn median_errors(rows: &[RunRow]) -> Vec<(f64, Option<f64>)> {
    let mut eps: Vec<f64> = Vec::new();
    for r in rows {
        if !eps.contains(&r.epsilon) {
            eps.push(r.epsilon);
        }
    }
    eps.into_iter()
        .map(|e| {
            let errs: Vec<f64> = rows.iter().filter(|r| r.epsilon == e && r.ok()).map(|r| r.error_l2).collect();
            (e, median(&errs))
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AlphaChoice {
    /// α = 0, β = δ
    Zero,
    /// α = α_*, β = τδ^{1/2}
    Star,
}

impl AlphaChoice {
    pub fn as_str(self) -> &'static str {
        match self {
            AlphaChoice::Zero => "zero",
            AlphaChoice::Star => "alpha_star",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CondRow {
    pub alpha_choice: AlphaChoice,
    pub n: usize,
    pub t_final: f64,
    pub delta: f64,
    pub beta: f64,
    pub c: f64,
    pub kappa1: f64,
    pub norm_v1: f64,
    pub norm_w1: f64,
    pub max_abs_w: f64,
    pub bound_v: Option<f64>,
    pub bound_w: Option<f64>,
    pub w_method: String,
    pub root_source: String,
    pub status: String,
}

impl CondRow {
    pub fn analytic_bound(&self) -> Option<f64> {
        Some(self.bound_v? * self.bound_w?)
    }
}

pub fn cond_point(choice: AlphaChoice, n: usize, delta: f64, t_final: f64) -> Result<CondRow> {
    let tg = TimeGrid::new(t_final, n)?;
    let (method, beta) = match choice {
        AlphaChoice::Zero => (Method::Mqbvm, delta),
        AlphaChoice::Star => (Method::Pqbvm, tg.tau() * delta.sqrt()),
    };
    let spec = RegularizationSpec::new(method, beta, &tg)?;
    let mut row = CondRow {
        alpha_choice: choice,
        n,
        t_final,
        delta,
        beta,
        c: spec.c,
        kappa1: f64::NAN,
        norm_v1: f64::NAN,
        norm_w1: f64::NAN,
        max_abs_w: f64::NAN,
        bound_v: None,
        bound_w: None,
        w_method: String::new(),
        root_source: String::new(),
        status: String::new(),
    };
    let tm = TimeMatrix::new(tg, spec, None)?;
    match diagonalize(&tm) {
        Ok(d) => {
            let rep = condition_report(&d, &tm);
            row.kappa1 = rep.kappa1;
            row.norm_v1 = rep.norm_v1;
            row.norm_w1 = rep.norm_w1;
            row.max_abs_w = rep.max_abs_w;
            row.bound_v = rep.bound_v;
            row.bound_w = rep.bound_w;
            row.w_method = d.w_method.as_str().into();
            row.root_source = d.root_source.as_str().into();
            row.status = "ok".into();
        }
        Err(e @ Error::NearDefectiveMatrix { .. }) => row.status = format!("near_defective: {e}"),
        Err(e) => row.status = format!("failed: {e}"),
    }
    Ok(row)
}

/// κ₁(V) over n × δ for both α choices (T = 1).
pub fn cond_study(n_list: &[usize], delta_list: &[f64]) -> Result<Vec<CondRow>> {
    if n_list.is_empty() || delta_list.is_empty() {
        return Err(Error::Config("n and delta lists must be non-empty".into()));
    }
    if let Some(d) = delta_list.iter().find(|d| !(**d > 0.0)) {
        return Err(Error::Config(format!("delta must be positive, got {d}")));
    }
    if let Some(n) = n_list.iter().find(|n| **n < 2) {
        return Err(Error::Config(format!("n must be at least 2, got {n}")));
    }
    let mut rows = Vec::new();
    for choice in [AlphaChoice::Zero, AlphaChoice::Star] {
        for &delta in delta_list {
            for &n in n_list {
                rows.push(cond_point(choice, n, delta, 1.0)?);
            }
        }
    }
    Ok(rows)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BenchPath {
    PintSerial,
    PintParallel,
    SparseDirect,
}

impl BenchPath {
    pub fn as_str(self) -> &'static str {
        match self {
            BenchPath::PintSerial => "pint_serial",
            BenchPath::PintParallel => "pint_parallel",
            BenchPath::SparseDirect => "sparse_direct",
        }
    }
}

#[derive(Clone, Debug)]
pub struct BenchConfig {
    pub run: ExperimentConfig,
    /// sparse_direct is skipped above this many unknowns m^dim·(n+1).
    pub ceiling: usize,
    /// PinT timings are the minimum over this many repeats.
    pub repeats: usize,
    pub strategy: Option<DirectStrategy>,
}

impl BenchConfig {
    pub const DEFAULT_CEILING: usize = 2_000_000;

    pub fn new(run: ExperimentConfig) -> Self {
        Self { run, ceiling: Self::DEFAULT_CEILING, repeats: 3, strategy: None }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BenchRow {
    pub example: String,
    pub dim: usize,
    pub method: Method,
    pub m: usize,
    pub n: usize,
    pub epsilon: f64,
    pub seed: u64,
    pub beta: f64,
    pub path: BenchPath,
    pub threads: Option<usize>,
    pub seconds: f64,
    pub residual: f64,
    /// Relative ℓ² gap of the full solution [f; u¹…uⁿ] against pint_serial.
    pub rel_diff: f64,
    pub detail: String,
    pub status: String,
}

fn stacked(res: &ReconstructionResult) -> Vec<f64> {
    let mut u = res.f.clone();
    for b in res.trajectory.iter().flatten() {
        u.extend_from_slice(b);
    }
    u
}

fn rel_gap(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum();
    let den: f64 = b.iter().map(|y| y * y).sum();
    if den > 0.0 {
        (num / den).sqrt()
    } else {
        num.sqrt()
    }
}

/// Times PinT (1 thread and all threads) against the sparse direct baseline
/// on the first (ε, seed) of the config.
pub fn bench(config: &BenchConfig) -> Result<Vec<BenchRow>> {
    let run = &config.run;
    let case = prepare(run)?;
    let eps = run.epsilons[0];
    let seed = run.seeds[0];
    let (g_delta, delta) = add_noise(&case.grid, &case.g_clean, eps, seed)?;
    let beta = run.rule().beta(delta, case.timegrid.tau());
    let problem = case.problem(run.method, beta, g_delta)?;
    let row = |path: BenchPath, threads: Option<usize>| BenchRow {
        example: run.example.name.clone(),
        dim: run.example.dim,
        method: run.method,
        m: run.m,
        n: run.n,
        epsilon: eps,
        seed,
        beta,
        path,
        threads,
        seconds: f64::NAN,
        residual: f64::NAN,
        rel_diff: f64::NAN,
        detail: String::new(),
        status: String::new(),
    };

    let mut rows = Vec::new();
    let mut reference: Option<Vec<f64>> = None;
    for (path, threads) in [(BenchPath::PintSerial, Some(1)), (BenchPath::PintParallel, run.threads)] {
        let mut r = row(path, threads);
        if !run.method.has_kronecker_form() {
            r.status = "unsupported".into();
            rows.push(r);
            continue;
        }
        let mut best: Option<(f64, ReconstructionResult)> = None;
        let mut failure = None;
        for _ in 0..config.repeats.max(1) {
            let t = Instant::now();
            let out = problem.time_matrix().and_then(|tm| diagonalize(&tm)).and_then(|d| {
                let opts = PintOptions { threads, ..Default::default() };
                pint::solve_with(&problem, &case.lap, &d, &opts)
            });
            let secs = t.elapsed().as_secs_f64();
            match out {
                Ok(res) => {
                    if best.as_ref().is_none_or(|(s, _)| secs < *s) {
                        best = Some((secs, res));
                    }
                }
                Err(e) => {
                    failure = Some(e);
                    break;
                }
            }
        }
        match (best, failure) {
            (Some((secs, res)), None) => {
                r.seconds = secs;
                r.residual = res.residual;
                let u = stacked(&res);
                match &reference {
                    Some(u0) => r.rel_diff = rel_gap(&u, u0),
                    None => {
                        r.rel_diff = 0.0;
                        reference = Some(u);
                    }
                }
                r.status = "ok".into();
            }
            (_, Some(e)) => r.status = format!("failed: {e}"),
            (None, None) => unreachable!(),
        }
        rows.push(r);
    }

    let mut r = row(BenchPath::SparseDirect, Some(1));
    if problem.unknowns() > config.ceiling {
        r.status = "skipped".into();
        r.detail = format!("{} unknowns above ceiling {}", problem.unknowns(), config.ceiling);
    } else {
        let strategy = config.strategy.unwrap_or_else(|| DirectStrategy::auto(&case.grid, run.n));
        r.detail = strategy.as_str().into();
        let t = Instant::now();
        match allatonce::solve_problem(&problem, strategy) {
            Ok(res) => {
                r.seconds = t.elapsed().as_secs_f64();
                r.residual = res.residual;
                if let Some(u0) = &reference {
                    r.rel_diff = rel_gap(&stacked(&res), u0);
                }
                r.status = "ok".into();
            }
            Err(e) => r.status = format!("failed: {e}"),
        }
    }
    rows.push(r);
    Ok(rows)
}

/// Scientific notation with 10 significant digits; empty for missing values.
pub fn fmt_num(x: f64) -> String {
    format!("{x:.9e}")
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt_num).unwrap_or_default()
}

fn fmt_threads(t: Option<usize>) -> String {
    t.map(|k| k.to_string()).unwrap_or_else(|| "auto".into())
}

pub trait CsvRecord {
    fn header() -> &'static [&'static str];
    fn record(&self) -> Vec<String>;
}

impl CsvRecord for RunRow {
    fn header() -> &'static [&'static str] {
        &[
            "schema_version", "example", "dim", "method", "m", "n", "t_final", "epsilon", "seed", "beta_rule",
            "delta", "beta", "alpha", "error_l2", "error_rel", "residual", "t_diag", "t_solve", "t_total",
            "threads", "solver", "status",
        ]
    }

    fn record(&self) -> Vec<String> {
        vec![
            SCHEMA_VERSION.to_string(),
            self.example.clone(),
            self.dim.to_string(),
            self.method.as_str().into(),
            self.m.to_string(),
            self.n.to_string(),
            fmt_num(self.t_final),
            fmt_num(self.epsilon),
            self.seed.to_string(),
            self.beta_rule.clone(),
            fmt_num(self.delta),
            fmt_num(self.beta),
            fmt_num(self.alpha),
            fmt_num(self.error_l2),
            fmt_opt(self.error_rel),
            fmt_num(self.residual),
            fmt_num(self.t_diag),
            fmt_num(self.t_solve),
            fmt_num(self.t_total),
            fmt_threads(self.threads),
            self.solver.clone(),
            self.status.clone(),
        ]
    }
}

impl CsvRecord for CondRow {
    fn header() -> &'static [&'static str] {
        &[
            "schema_version", "alpha_choice", "n", "t_final", "delta", "beta", "c", "kappa1", "norm_v1", "norm_w1",
            "max_abs_w", "bound_v", "bound_w", "analytic_bound", "w_method", "root_source", "status",
        ]
    }

    fn record(&self) -> Vec<String> {
        vec![
            SCHEMA_VERSION.to_string(),
            self.alpha_choice.as_str().into(),
            self.n.to_string(),
            fmt_num(self.t_final),
            fmt_num(self.delta),
            fmt_num(self.beta),
            fmt_num(self.c),
            fmt_num(self.kappa1),
            fmt_num(self.norm_v1),
            fmt_num(self.norm_w1),
            fmt_num(self.max_abs_w),
            fmt_opt(self.bound_v),
            fmt_opt(self.bound_w),
            fmt_opt(self.analytic_bound()),
            self.w_method.clone(),
            self.root_source.clone(),
            self.status.clone(),
        ]
    }
}

impl CsvRecord for BenchRow {
    fn header() -> &'static [&'static str] {
        &[
            "schema_version", "example", "dim", "method", "m", "n", "epsilon", "seed", "beta", "path", "threads",
            "seconds", "residual", "rel_diff", "detail", "status",
        ]
    }

    fn record(&self) -> Vec<String> {
        vec![
            SCHEMA_VERSION.to_string(),
            self.example.clone(),
            self.dim.to_string(),
            self.method.as_str().into(),
            self.m.to_string(),
            self.n.to_string(),
            fmt_num(self.epsilon),
            self.seed.to_string(),
            fmt_num(self.beta),
            self.path.as_str().into(),
            fmt_threads(self.threads),
            fmt_num(self.seconds),
            fmt_num(self.residual),
            fmt_num(self.rel_diff),
            self.detail.clone(),
            self.status.clone(),
        ]
    }
}

pub fn write_csv<R: CsvRecord, W: Write>(rows: &[R], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let io = |e: csv::Error| Error::Io(e.into());
    w.write_record(R::header()).map_err(io)?;
    for r in rows {
        w.write_record(r.record()).map_err(io)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_csv_file<R: CsvRecord>(rows: &[R], path: &std::path::Path) -> Result<()> {
    write_csv(rows, std::fs::File::create(path)?)
}
