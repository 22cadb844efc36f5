//! Uniform interior-node grids on (0,π)^d, the 3- / 5-point Dirichlet Laplacian,
//! orthonormal DST-I and fast complex-shifted solves.
//!
//! 2D unknowns are stored row-major with x fastest: index = iy·m + ix.

use std::f64::consts::PI;
use std::fmt::Debug;
use std::ops::{Add, AddAssign, Div, Mul, Sub};
use std::sync::Arc;

use num_complex::Complex64;
use num_traits::Zero;
use rustfft::{Fft, FftPlanner};

use crate::error::{check_len, Error, Result};

/// Real samples at interior nodes.
pub type Field = Vec<f64>;
/// Complex samples at interior nodes.
pub type ComplexField = Vec<Complex64>;

/// Element type accepted by the matrix-free operators (`f64` or `Complex64`).
pub trait Scalar:
    Copy
    + Send
    + Sync
    + Debug
    + Zero
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Mul<f64, Output = Self>
    + AddAssign
{
    fn from_real(x: f64) -> Self;
    fn abs_val(self) -> f64;
}

impl Scalar for f64 {
    fn from_real(x: f64) -> Self {
        x
    }
    fn abs_val(self) -> f64 {
        self.abs()
    }
}

impl Scalar for Complex64 {
    fn from_real(x: f64) -> Self {
        Complex64::new(x, 0.0)
    }
    fn abs_val(self) -> f64 {
        self.norm()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SpatialGrid {
    dim: usize,
    m: usize,
    h: f64,
}

impl SpatialGrid {
    pub fn new(dim: usize, m: usize) -> Result<Self> {
        if dim != 1 && dim != 2 {
            return Err(Error::InvalidGrid(format!("dimension must be 1 or 2, got {dim}")));
        }
        if m == 0 {
            return Err(Error::InvalidGrid("need at least one interior node".into()));
        }
        Ok(Self { dim, m, h: PI / (m + 1) as f64 })
    }

    pub fn one_d(m: usize) -> Result<Self> {
        Self::new(1, m)
    }

    pub fn two_d(m: usize) -> Result<Self> {
        Self::new(2, m)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    /// Number of unknowns: m or m².
    pub fn dof(&self) -> usize {
        self.m.pow(self.dim as u32)
    }

    /// Interior coordinates along one axis, x_i = i·h for i = 1..m.
    pub fn axis(&self) -> Vec<f64> {
        (1..=self.m).map(|i| i as f64 * self.h).collect()
    }

    /// Coordinates of node `idx` (y is 0 in 1D).
    pub fn node(&self, idx: usize) -> (f64, f64) {
        let ix = idx % self.m;
        let iy = idx / self.m;
        let x = (ix + 1) as f64 * self.h;
        if self.dim == 1 {
            (x, 0.0)
        } else {
            (x, (iy + 1) as f64 * self.h)
        }
    }

    pub fn nodes(&self) -> Vec<(f64, f64)> {
        (0..self.dof()).map(|i| self.node(i)).collect()
    }

    /// Samples `f(x, y)` at every interior node (y = 0 in 1D).
    pub fn sample(&self, f: impl Fn(f64, f64) -> f64) -> Field {
        (0..self.dof())
            .map(|i| {
                let (x, y) = self.node(i);
                f(x, y)
            })
            .collect()
    }

    /// Discrete L² norm sqrt(h^dim Σ|v_i|²).
    pub fn l2_norm<T: Scalar>(&self, v: &[T]) -> f64 {
        let s: f64 = v.iter().map(|x| x.abs_val().powi(2)).sum();
        (self.h.powi(self.dim as i32) * s).sqrt()
    }

    pub fn l2_distance(&self, a: &[f64], b: &[f64]) -> f64 {
        let s: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum();
        (self.h.powi(self.dim as i32) * s).sqrt()
    }
}

/// Orthonormal DST-I of length m, X_k = sqrt(2/(m+1)) Σ_j x_j sin(πjk/(m+1)).
/// The transform is its own inverse.
#[derive(Clone)]
pub struct SineTransform {
    m: usize,
    fft: Arc<dyn Fft<f64>>,
    scale: f64,
}

impl Debug for SineTransform {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SineTransform").field("m", &self.m).finish()
    }
}

impl SineTransform {
    pub fn new(m: usize) -> Self {
        let fft = FftPlanner::new().plan_fft_forward(2 * (m + 1));
        Self { m, fft, scale: (2.0 / (m + 1) as f64).sqrt() }
    }

    pub fn len(&self) -> usize {
        self.m
    }

    pub fn is_empty(&self) -> bool {
        self.m == 0
    }

    fn buffers(&self) -> (Vec<Complex64>, Vec<Complex64>) {
        let n = 2 * (self.m + 1);
        (
            vec![Complex64::zero(); n],
            vec![Complex64::zero(); self.fft.get_inplace_scratch_len()],
        )
    }

    // odd extension [0, x, 0, -rev(x)]; its DFT is -2i·DST(x)
    fn run(&self, data: &mut [Complex64], buf: &mut [Complex64], scratch: &mut [Complex64]) {
        let m = self.m;
        let n = 2 * (m + 1);
        buf[0] = Complex64::zero();
        buf[m + 1] = Complex64::zero();
        for j in 0..m {
            buf[j + 1] = data[j];
            buf[n - 1 - j] = -data[j];
        }
        self.fft.process_with_scratch(buf, scratch);
        let s = Complex64::new(0.0, 0.5 * self.scale);
        for k in 0..m {
            data[k] = buf[k + 1] * s;
        }
    }

    /// In-place transform of one length-m vector.
    pub fn apply(&self, data: &mut [Complex64]) {
        let (mut buf, mut scratch) = self.buffers();
        self.run(data, &mut buf, &mut scratch);
    }

    /// In-place separable transform of an m×m array (x fastest).
    pub fn apply_2d(&self, data: &mut [Complex64]) {
        let m = self.m;
        let (mut buf, mut scratch) = self.buffers();
        for row in data.chunks_exact_mut(m) {
            self.run(row, &mut buf, &mut scratch);
        }
        let mut col = vec![Complex64::zero(); m];
        for ix in 0..m {
            for iy in 0..m {
                col[iy] = data[iy * m + ix];
            }
            self.run(&mut col, &mut buf, &mut scratch);
            for iy in 0..m {
                data[iy * m + ix] = col[iy];
            }
        }
    }
}

/// The second-difference Dirichlet Laplacian Δ_h (negative definite).
#[derive(Clone, Debug)]
pub struct DirichletLaplacian {
    grid: SpatialGrid,
    axis_spectrum: Vec<f64>,
    // all eigenvalues of -Δ_h, ascending
    sorted_spectrum: Vec<f64>,
    dst: SineTransform,
}

pub fn build_laplacian(grid: &SpatialGrid) -> DirichletLaplacian {
    DirichletLaplacian::new(grid.clone())
}

impl DirichletLaplacian {
    pub fn new(grid: SpatialGrid) -> Self {
        let h = grid.h();
        let axis_spectrum: Vec<f64> = (1..=grid.m())
            .map(|k| 4.0 / (h * h) * (k as f64 * h / 2.0).sin().powi(2))
            .collect();
        let mut sorted_spectrum = if grid.dim() == 1 {
            axis_spectrum.clone()
        } else {
            let mut all = Vec::with_capacity(grid.dof());
            for a in &axis_spectrum {
                for b in &axis_spectrum {
                    all.push(a + b);
                }
            }
            all
        };
        sorted_spectrum.sort_by(f64::total_cmp);
        let dst = SineTransform::new(grid.m());
        Self { grid, axis_spectrum, sorted_spectrum, dst }
    }

    pub fn grid(&self) -> &SpatialGrid {
        &self.grid
    }

    /// σ_k = (4/h²) sin²(kh/2), k = 1..m: the 1D eigenvalues of -Δ_h.
    pub fn sine_spectrum(&self) -> &[f64] {
        &self.axis_spectrum
    }

    /// Eigenvalue of -Δ_h for mode k (1D) or (k, l) (2D), 1-based.
    pub fn mode_eigenvalue(&self, k: usize, l: usize) -> f64 {
        match self.grid.dim() {
            1 => self.axis_spectrum[k - 1],
            _ => self.axis_spectrum[k - 1] + self.axis_spectrum[l - 1],
        }
    }

    /// Largest eigenvalue of -Δ_h.
    pub fn spectral_radius(&self) -> f64 {
        *self.sorted_spectrum.last().unwrap()
    }

    pub fn sine_transform(&self) -> &SineTransform {
        &self.dst
    }

    /// out = Δ_h v.
    pub fn apply_into<T: Scalar>(&self, v: &[T], out: &mut [T]) {
        let m = self.grid.m();
        let ih2 = 1.0 / (self.grid.h() * self.grid.h());
        let z = T::zero();
        if self.grid.dim() == 1 {
            for i in 0..m {
                let l = if i > 0 { v[i - 1] } else { z };
                let r = if i + 1 < m { v[i + 1] } else { z };
                out[i] = (l + r - v[i] * 2.0) * ih2;
            }
        } else {
            for iy in 0..m {
                for ix in 0..m {
                    let i = iy * m + ix;
                    let mut s = v[i] * -4.0;
                    if ix > 0 {
                        s += v[i - 1];
                    }
                    if ix + 1 < m {
                        s += v[i + 1];
                    }
                    if iy > 0 {
                        s += v[i - m];
                    }
                    if iy + 1 < m {
                        s += v[i + m];
                    }
                    out[i] = s * ih2;
                }
            }
        }
    }

    pub fn apply<T: Scalar>(&self, v: &[T]) -> Vec<T> {
        let mut out = vec![T::zero(); v.len()];
        self.apply_into(v, &mut out);
        out
    }

    /// (d·I − Δ_h) v.
    pub fn apply_shifted<T: Scalar>(&self, d: T, v: &[T]) -> Vec<T> {
        let mut out = self.apply(v);
        for (o, x) in out.iter_mut().zip(v) {
            *o = d * *x - *o;
        }
        out
    }

    /// Orthonormal DST (1D or tensorized 2D) of a complex field; self-inverse.
    pub fn forward_dst(&self, v: &[Complex64]) -> ComplexField {
        let mut out = v.to_vec();
        self.dst_in_place(&mut out);
        out
    }

    pub fn inverse_dst(&self, v: &[Complex64]) -> ComplexField {
        self.forward_dst(v)
    }

    pub fn forward_dst_real(&self, v: &[f64]) -> Field {
        let c: ComplexField = v.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        self.forward_dst(&c).into_iter().map(|z| z.re).collect()
    }

    fn dst_in_place(&self, v: &mut [Complex64]) {
        if self.grid.dim() == 1 {
            self.dst.apply(v)
        } else {
            self.dst.apply_2d(v)
        }
    }

    /// Distance from -d to the spectrum of -Δ_h, i.e. min over σ of |d + σ|.
    pub fn shift_gap(&self, d: Complex64) -> f64 {
        let s = &self.sorted_spectrum;
        let target = -d.re;
        let pos = s.partition_point(|&x| x < target);
        let mut best = f64::INFINITY;
        for p in [pos.saturating_sub(1), pos.min(s.len() - 1)] {
            best = best.min(Complex64::new(d.re + s[p], d.im).norm());
        }
        best
    }

    fn check_shift(&self, d: Complex64) -> Result<()> {
        let gap = self.shift_gap(d);
        let tol = 1e-12 * (d.norm() + self.spectral_radius());
        if gap <= tol || !gap.is_finite() {
            return Err(Error::SingularShift { shift: d, gap });
        }
        Ok(())
    }

    /// Solves (d·I − Δ_h) x = r. 1D uses Thomas elimination when Re d ≥ 0
    /// (diagonally dominant), 2D and indefinite 1D shifts use the sine transform.
    pub fn shifted_solve(&self, d: Complex64, r: &[Complex64]) -> Result<ComplexField> {
        check_len(self.grid.dof(), r.len())?;
        self.check_shift(d)?;
        if self.grid.dim() == 1 && d.re >= 0.0 {
            Ok(self.thomas(d, r))
        } else {
            Ok(self.dst_solve(d, r))
        }
    }

    /// Same as [`shifted_solve`](Self::shifted_solve) but always through the sine transform.
    pub fn shifted_solve_dst(&self, d: Complex64, r: &[Complex64]) -> Result<ComplexField> {
        check_len(self.grid.dof(), r.len())?;
        self.check_shift(d)?;
        Ok(self.dst_solve(d, r))
    }

    /// Same as [`shifted_solve`](Self::shifted_solve) but always by Thomas elimination (1D only).
    pub fn shifted_solve_thomas(&self, d: Complex64, r: &[Complex64]) -> Result<ComplexField> {
        if self.grid.dim() != 1 {
            return Err(Error::InvalidGrid("Thomas elimination needs a 1D grid".into()));
        }
        check_len(self.grid.dof(), r.len())?;
        self.check_shift(d)?;
        Ok(self.thomas(d, r))
    }

    /// Real shift, real data: (d·I − Δ_h) x = r.
    pub fn shifted_solve_real(&self, d: f64, r: &[f64]) -> Result<Field> {
        check_len(self.grid.dof(), r.len())?;
        self.check_shift(Complex64::new(d, 0.0))?;
        if self.grid.dim() == 1 && d >= 0.0 {
            Ok(self.thomas(d, r))
        } else {
            let c: ComplexField = r.iter().map(|&x| Complex64::new(x, 0.0)).collect();
            Ok(self
                .dst_solve(Complex64::new(d, 0.0), &c)
                .into_iter()
                .map(|z| z.re)
                .collect())
        }
    }

    fn dst_solve(&self, d: Complex64, r: &[Complex64]) -> ComplexField {
        let mut x = r.to_vec();
        self.dst_in_place(&mut x);
        let m = self.grid.m();
        let sp = &self.axis_spectrum;
        if self.grid.dim() == 1 {
            for (k, v) in x.iter_mut().enumerate() {
                *v /= d + sp[k];
            }
        } else {
            for l in 0..m {
                for k in 0..m {
                    x[l * m + k] /= d + sp[k] + sp[l];
                }
            }
        }
        self.dst_in_place(&mut x);
        x
    }

    // constant-coefficient tridiagonal (d + 2/h², -1/h²) elimination
    fn thomas<T: Scalar>(&self, d: T, r: &[T]) -> Vec<T> {
        let m = r.len();
        let ih2 = 1.0 / (self.grid.h() * self.grid.h());
        let diag = d + T::from_real(2.0 * ih2);
        let off = T::from_real(-ih2);
        let mut cp = vec![T::zero(); m];
        let mut x = vec![T::zero(); m];
        let mut denom = diag;
        cp[0] = off / denom;
        x[0] = r[0] / denom;
        for i in 1..m {
            denom = diag - off * cp[i - 1];
            cp[i] = off / denom;
            x[i] = (r[i] - off * x[i - 1]) / denom;
        }
        for i in (0..m.saturating_sub(1)).rev() {
            let next = x[i + 1];
            x[i] = x[i] - cp[i] * next;
        }
        x
    }
}
