//! Direct real-space convolution with the Yukawa Green function.
//!
//! This is the independent check on [`crate::spectral::yukawa_invert`]: it
//! never touches a Fourier transform or the symbol `1/(k^2 + m^2)`.
//!
//! The source is represented by local 8-point Lagrange interpolation on the
//! lattice, so `phi_i = -sum_j W(x_i - x_j) s_j` with weights
//! `W(d) = integral G(d - y) Phi(y) dy`, where `Phi` is the tensor-product
//! cardinal function of the interpolation. The Green function
//! `G = exp(-m r) / (4 pi r)` (3D) or `exp(-m |x|) / (2 m)` (1D) is written as
//! `integral_0^inf exp(-m^2 tau) heat(r, tau) dtau`, and the heat kernel is a
//! product of 1D Gaussians, so every weight reduces to 1D integrals of a
//! Gaussian against piecewise polynomials plus one smooth integral over
//! `log tau`. Offsets use the minimum image; contributions from further
//! periodic images are dropped, which is accurate once `m L / 2` is large.

use rayon::prelude::*;

use crate::error::{LabError, Result};
use crate::model::Grid;

/// Largest lattice the O(N^2) oracle accepts.
pub const DIRECT_POINT_LIMIT: usize = 1 << 15;

/// Half-width of the interpolation stencil, in lattice cells.
const STENCIL_HALF: i64 = 4;
const LOG_TAU_STEP: f64 = 0.1;
const GAUSS_NODES: usize = 48;

/// Gauss-Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

fn poly_mul_linear(poly: &[f64], a: f64, scale: f64) -> Vec<f64> {
    // poly(w) * (w + a) * scale
    let mut out = vec![0.0; poly.len() + 1];
    for (p, &c) in poly.iter().enumerate() {
        out[p + 1] += c * scale;
        out[p] += c * a * scale;
    }
    out
}

fn poly_eval(poly: &[f64], w: f64) -> f64 {
    poly.iter().rev().fold(0.0, |acc, &c| acc * w + c)
}

/// Cardinal polynomial of lattice node 0 on cell `[k, k+1]` (unit spacing),
/// expanded in powers of `w = u - centre`.
fn cardinal_piece(k: i64, centre: f64) -> Vec<f64> {
    let mut poly = vec![1.0];
    for s in (k - STENCIL_HALF + 1)..=(k + STENCIL_HALF) {
        if s != 0 {
            poly = poly_mul_linear(&poly, centre - s as f64, -1.0 / s as f64);
        }
    }
    poly
}

/// `integral_0^inf w^p N(w; 0, sigma^2) dw` for `p = 0..=max_p`.
fn half_moments(sigma: f64, max_p: usize) -> Vec<f64> {
    let sqrt_pi = std::f64::consts::PI.sqrt();
    let mut gamma_half = vec![0.0; max_p + 1]; // Gamma((p + 1) / 2)
    for p in 0..=max_p {
        gamma_half[p] = match p {
            0 => sqrt_pi,
            1 => 1.0,
            _ => (p as f64 - 1.0) / 2.0 * gamma_half[p - 2],
        };
    }
    (0..=max_p)
        .map(|p| sigma.powi(p as i32) * 2f64.powf(p as f64 / 2.0) * gamma_half[p] / (2.0 * sqrt_pi))
        .collect()
}

/// `integral N(u; j, sigma^2) Phi(u) du` with `Phi` the unit-spacing cardinal function.
fn smoothed_cardinal(j: i64, sigma: f64, gl: &(Vec<f64>, Vec<f64>)) -> f64 {
    let norm = 1.0 / (sigma * (2.0 * std::f64::consts::PI).sqrt());
    if sigma < 0.125 {
        // Gaussian confined to the two cells adjacent to node j
        if j.abs() > STENCIL_HALF {
            return 0.0;
        }
        let moments = half_moments(sigma, 2 * STENCIL_HALF as usize);
        let mut total = 0.0;
        if j < STENCIL_HALF {
            let poly = cardinal_piece(j, j as f64);
            total += poly.iter().zip(&moments).map(|(c, h)| c * h).sum::<f64>();
        }
        if j > -STENCIL_HALF {
            let poly = cardinal_piece(j - 1, j as f64);
            total += poly
                .iter()
                .zip(&moments)
                .enumerate()
                .map(|(p, (c, h))| if p % 2 == 0 { c * h } else { -c * h })
                .sum::<f64>();
        }
        return total;
    }
    let (nodes, weights) = gl;
    let mut total = 0.0;
    for k in -STENCIL_HALF..STENCIL_HALF {
        let (a, b) = (k as f64, k as f64 + 1.0);
        let gap = if (j as f64) < a { a - j as f64 } else if (j as f64) > b { j as f64 - b } else { 0.0 };
        if gap > 40.0 * sigma {
            continue;
        }
        let poly = cardinal_piece(k, 0.0);
        let mid = 0.5 * (a + b);
        let half = 0.5 * (b - a);
        for (x, w) in nodes.iter().zip(weights) {
            let u = mid + half * x;
            let z = (u - j as f64) / sigma;
            total += half * w * norm * (-0.5 * z * z).exp() * poly_eval(&poly, u);
        }
    }
    total
}

/// Kernel weights `W(d)` for minimum-image offsets `d = (j_a h)`, `0 <= j_a <= n/2`.
#[derive(Debug, Clone)]
pub struct KernelTable {
    pub dim: usize,
    pub half: usize,
    /// Flattened `(half + 1)^dim` table indexed by absolute offsets.
    pub weights: Vec<f64>,
}

impl KernelTable {
    pub fn new(grid: &Grid, m: f64) -> Result<Self> {
        if !(m > 0.0) {
            return Err(LabError::YukawaMass(m));
        }
        let h = grid.spacing;
        let half = grid.n / 2;
        let gl = gauss_legendre(GAUSS_NODES);
        let s_lo = (h * h).ln() - 32.0;
        let s_hi = (60.0 / (m * m)).ln();
        let steps = ((s_hi - s_lo) / LOG_TAU_STEP).ceil() as usize;
        let ds = (s_hi - s_lo) / steps as f64;

        // per log-tau node: quadrature weight and smoothed 1D factors
        let rows: Vec<(f64, Vec<f64>)> = (0..=steps)
            .into_par_iter()
            .map(|i| {
                let s = s_lo + i as f64 * ds;
                let tau = s.exp();
                let trap = if i == 0 || i == steps { 0.5 } else { 1.0 };
                let w = trap * ds * tau * (-m * m * tau).exp();
                let sigma = (2.0 * tau).sqrt() / h;
                let g = (0..=half as i64).map(|j| smoothed_cardinal(j, sigma, &gl)).collect();
                (w, g)
            })
            .collect();

        let weights = match grid.dim {
            1 => (0..=half).map(|a| rows.iter().map(|(w, g)| w * g[a]).sum()).collect(),
            _ => {
                let side = half + 1;
                (0..side * side * side)
                    .into_par_iter()
                    .map(|idx| {
                        let (a, b, c) = (idx / (side * side), (idx / side) % side, idx % side);
                        rows.iter().map(|(w, g)| w * g[a] * g[b] * g[c]).sum()
                    })
                    .collect()
            }
        };
        Ok(Self { dim: grid.dim, half, weights })
    }

    fn offset(&self, delta: usize, n: usize) -> usize {
        if delta > self.half {
            n - delta
        } else {
            delta
        }
    }

    /// Weight for the lattice displacement `(da, db, dc)` (each reduced mod n).
    pub fn weight(&self, d: [usize; 3], n: usize) -> f64 {
        let side = self.half + 1;
        match self.dim {
            1 => self.weights[self.offset(d[0], n)],
            _ => {
                let (a, b, c) = (self.offset(d[0], n), self.offset(d[1], n), self.offset(d[2], n));
                self.weights[(a * side + b) * side + c]
            }
        }
    }
}

/// Direct minimum-image convolution solving `(Laplacian - m^2) phi = source`.
pub fn yukawa_convolve_direct(source: &[f64], m: f64, grid: &Grid) -> Result<Vec<f64>> {
    grid.check_len(source.len())?;
    let points = grid.points();
    if points > DIRECT_POINT_LIMIT {
        return Err(LabError::OracleTooLarge { points, limit: DIRECT_POINT_LIMIT });
    }
    let table = KernelTable::new(grid, m)?;
    let n = grid.n;
    let wrap = |i: usize, j: usize| (i + n - j) % n;
    let out = match grid.dim {
        1 => (0..n)
            .into_par_iter()
            .map(|i| -(0..n).map(|j| table.weight([wrap(i, j), 0, 0], n) * source[j]).sum::<f64>())
            .collect(),
        _ => {
            let side = table.half + 1;
            let fold: Vec<usize> = (0..n).map(|d| table.offset(d, n)).collect();
            (0..points)
                .into_par_iter()
                .map(|i| {
                    let [ia, ib, ic] = grid.unflatten(i);
                    let mut acc = 0.0;
                    for ja in 0..n {
                        let ra = fold[wrap(ia, ja)] * side;
                        for jb in 0..n {
                            let rb = (ra + fold[wrap(ib, jb)]) * side;
                            let row = &source[(ja * n + jb) * n..(ja * n + jb + 1) * n];
                            for (jc, s) in row.iter().enumerate() {
                                acc += table.weights[rb + fold[wrap(ic, jc)]] * s;
                            }
                        }
                    }
                    -acc
                })
                .collect()
        }
    };
    Ok(out)
}
