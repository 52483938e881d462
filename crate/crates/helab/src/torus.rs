//! Discretized base manifold: the flat elliptic curve C/(Z + tau Z) with a
//! conformal metric weight.
//!
//! Scalar differential operators are spectral (Fourier multipliers), so
//! summation-by-parts and Poisson inversion hold to round-off. In real
//! coordinates z = x + tau y with x, y in [0,1) the symbols on the mode
//! e^{2 pi i (m x + n y)} are
//!
//!   partial     -> 2 pi i (conj(tau) m - n) / (conj(tau) - tau)
//!   partial-bar -> 2 pi i (n - tau m) / (conj(tau) - tau)
//!
//! and P = sqrt(-1) Lambda_omega dbar-partial acts as
//!
//!   P -> 2 pi^2 |n - tau m|^2 / (w Im(tau)^2),
//!
//! a positive semi-definite operator: P(u) >= 0 at an interior maximum of u
//! and integrate(u P(u) w) >= 0. First-derivative symbols vanish on the
//! Nyquist line, which is why odd N is rejected.

use crate::error::{HelabError, Result};
use crate::matrix::{C64, C_ZERO};
use rustfft::FftPlanner;
use std::cell::RefCell;
use std::collections::HashMap;
use std::sync::Arc;

/// Complex scalar field, one value per site, length N^2.
pub type ScalarField = Vec<C64>;

/// Periodic N x N discretization of the fundamental domain of C/(Z + tau Z).
#[derive(Clone, Debug)]
pub struct TorusGrid {
    /// Sites per axis.
    pub n: usize,
    /// Complex modulus, Im tau > 0.
    pub tau: C64,
    /// Euclidean area of one cell: Im(tau) / N^2.
    pub cell_area: f64,
}

impl TorusGrid {
    pub fn nsites(&self) -> usize {
        self.n * self.n
    }

    pub fn site(&self, i: usize, j: usize) -> usize {
        (i % self.n) + self.n * (j % self.n)
    }

    /// Complex coordinate of a site: (i + tau j) / N.
    pub fn coord(&self, site: usize) -> C64 {
        let i = site % self.n;
        let j = site / self.n;
        (C64::new(i as f64, 0.0) + self.tau * j as f64) / self.n as f64
    }

    /// Fractional coordinates (x, y) of a site.
    pub fn xy(&self, site: usize) -> (f64, f64) {
        let i = site % self.n;
        let j = site / self.n;
        (i as f64 / self.n as f64, j as f64 / self.n as f64)
    }

    pub fn field_from_fn(&self, f: impl Fn(f64, f64) -> C64) -> ScalarField {
        (0..self.nsites())
            .map(|s| {
                let (x, y) = self.xy(s);
                f(x, y)
            })
            .collect()
    }
}

/// Conformal metric omega = w (i/2) dz wedge dzbar.
#[derive(Clone, Debug)]
pub struct ConformalMetric {
    pub weight: Vec<f64>,
    pub volume: f64,
}

/// How to build the conformal weight.
#[derive(Clone, Debug, PartialEq)]
pub enum WeightSpec {
    Uniform,
    /// 1 + amp cos(2 pi x).
    CosX { amp: f64 },
    Custom(Vec<f64>),
}

pub fn make_grid(n: usize, tau: C64, spec: &WeightSpec) -> Result<(TorusGrid, ConformalMetric)> {
    if n < 8 {
        return Err(HelabError::Config(format!("N = {n} too small, need N >= 8")));
    }
    if n % 2 != 0 {
        return Err(HelabError::Config(format!("N = {n} is odd; only even N is supported")));
    }
    if tau.im <= 0.0 {
        return Err(HelabError::Config(format!("Im tau = {} must be positive", tau.im)));
    }
    let grid = TorusGrid {
        n,
        tau,
        cell_area: tau.im / (n * n) as f64,
    };
    let weight: Vec<f64> = match spec {
        WeightSpec::Uniform => vec![1.0; grid.nsites()],
        WeightSpec::CosX { amp } => (0..grid.nsites())
            .map(|s| {
                let (x, _) = grid.xy(s);
                1.0 + amp * (2.0 * std::f64::consts::PI * x).cos()
            })
            .collect(),
        WeightSpec::Custom(w) => {
            if w.len() != grid.nsites() {
                return Err(HelabError::Config(format!(
                    "custom weight has {} entries, expected {}",
                    w.len(),
                    grid.nsites()
                )));
            }
            w.clone()
        }
    };
    if let Some(bad) = weight.iter().find(|&&w| !(w > 0.0)) {
        return Err(HelabError::Config(format!(
            "conformal weight must be strictly positive, found {bad}"
        )));
    }
    let volume = weight.iter().map(|w| w * grid.cell_area).sum();
    Ok((grid, ConformalMetric { weight, volume }))
}

/// Integral of a field against omega: a fixed-order sequential reduction so
/// results are bit-reproducible.
pub fn integrate(field: &[C64], grid: &TorusGrid, metric: &ConformalMetric) -> C64 {
    let mut acc = C_ZERO;
    for (v, w) in field.iter().zip(metric.weight.iter()) {
        acc += v * w * grid.cell_area;
    }
    acc
}

pub fn l2_norm(field: &[C64], grid: &TorusGrid, metric: &ConformalMetric) -> f64 {
    let mut acc = 0.0;
    for (v, w) in field.iter().zip(metric.weight.iter()) {
        acc += v.norm_sqr() * w * grid.cell_area;
    }
    acc.sqrt()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Dir {
    /// partial / partial z
    Partial,
    /// partial / partial zbar
    PartialBar,
}

thread_local! {
    static PLANNERS: RefCell<HashMap<(usize, bool), Arc<dyn rustfft::Fft<f64>>>> =
        RefCell::new(HashMap::new());
}

fn fft_1d_rows(data: &mut [C64], n: usize, inverse: bool) {
    let fft = PLANNERS.with(|p| {
        p.borrow_mut()
            .entry((n, inverse))
            .or_insert_with(|| {
                let mut planner = FftPlanner::new();
                if inverse {
                    planner.plan_fft_inverse(n)
                } else {
                    planner.plan_fft_forward(n)
                }
            })
            .clone()
    });
    for row in data.chunks_mut(n) {
        fft.process(row);
    }
}

fn transpose(data: &[C64], n: usize) -> Vec<C64> {
    let mut out = vec![C_ZERO; n * n];
    for j in 0..n {
        for i in 0..n {
            out[j + n * i] = data[i + n * j];
        }
    }
    out
}

/// Forward 2D FFT (unnormalized), site layout i + N j.
pub fn fft2(field: &[C64], n: usize) -> Vec<C64> {
    let mut d = field.to_vec();
    fft_1d_rows(&mut d, n, false);
    let mut t = transpose(&d, n);
    fft_1d_rows(&mut t, n, false);
    transpose(&t, n)
}

/// Inverse 2D FFT with 1/N^2 normalization.
pub fn ifft2(coeffs: &[C64], n: usize) -> Vec<C64> {
    let mut d = coeffs.to_vec();
    fft_1d_rows(&mut d, n, true);
    let mut t = transpose(&d, n);
    fft_1d_rows(&mut t, n, true);
    let mut out = transpose(&t, n);
    let norm = 1.0 / (n * n) as f64;
    for v in &mut out {
        *v *= norm;
    }
    out
}

fn signed_mode(i: usize, n: usize) -> i64 {
    if i < n / 2 {
        i as i64
    } else {
        i as i64 - n as i64
    }
}

/// Exact Fourier symbol of partial or partial-bar on the mode (m, n).
pub fn derivative_symbol(dir: Dir, m: i64, nn: i64, tau: C64) -> C64 {
    let two_pi_i = C64::new(0.0, 2.0 * std::f64::consts::PI);
    let denom = tau.conj() - tau;
    match dir {
        Dir::Partial => two_pi_i * (tau.conj() * m as f64 - nn as f64) / denom,
        Dir::PartialBar => two_pi_i * (nn as f64 - tau * m as f64) / denom,
    }
}

/// Spectral derivative. The Nyquist line carries symbol zero, keeping the
/// operator skew-adjoint on real fields.
pub fn derivative(field: &[C64], dir: Dir, grid: &TorusGrid) -> ScalarField {
    let n = grid.n;
    let mut c = fft2(field, n);
    for j in 0..n {
        for i in 0..n {
            let sym = if i == n / 2 || j == n / 2 {
                C_ZERO
            } else {
                derivative_symbol(dir, signed_mode(i, n), signed_mode(j, n), grid.tau)
            };
            c[i + n * j] *= sym;
        }
    }
    ifft2(&c, n)
}

/// Symbol of P on the flat (w = 1) torus: 2 pi^2 |n - tau m|^2 / Im(tau)^2.
pub fn p_symbol(m: i64, nn: i64, tau: C64) -> f64 {
    let z = C64::new(nn as f64, 0.0) - tau * m as f64;
    2.0 * std::f64::consts::PI.powi(2) * z.norm_sqr() / (tau.im * tau.im)
}

/// P = sqrt(-1) Lambda_omega dbar-partial, spectral in the flat part and
/// divided by the conformal weight.
pub fn p_operator(field: &[C64], grid: &TorusGrid, metric: &ConformalMetric) -> ScalarField {
    let n = grid.n;
    let mut c = fft2(field, n);
    for j in 0..n {
        for i in 0..n {
            c[i + n * j] *= p_symbol(signed_mode(i, n), signed_mode(j, n), grid.tau);
        }
    }
    let flat = ifft2(&c, n);
    flat.iter()
        .zip(metric.weight.iter())
        .map(|(v, w)| v / w)
        .collect()
}

/// Solve P(phi) = rhs by exact spectral inversion. The right side must have
/// zero integral against omega; the solution is returned with zero mean.
pub fn solve_p(rhs: &[C64], grid: &TorusGrid, metric: &ConformalMetric) -> Result<ScalarField> {
    let norm = l2_norm(rhs, grid, metric);
    let mean = integrate(rhs, grid, metric);
    let tol_mean = 1e-10 * (1.0 + norm);
    if mean.norm() > tol_mean {
        return Err(HelabError::Solvability(format!(
            "P(phi) = rhs is unsolvable: integral of rhs against omega is {:.3e} (tolerance {:.3e})",
            mean.norm(),
            tol_mean
        )));
    }
    let n = grid.n;
    let weighted: Vec<C64> = rhs
        .iter()
        .zip(metric.weight.iter())
        .map(|(v, w)| v * *w)
        .collect();
    let mut c = fft2(&weighted, n);
    for j in 0..n {
        for i in 0..n {
            let idx = i + n * j;
            if i == 0 && j == 0 {
                c[idx] = C_ZERO;
            } else {
                c[idx] /= p_symbol(signed_mode(i, n), signed_mode(j, n), grid.tau);
            }
        }
    }
    Ok(ifft2(&c, n))
}
