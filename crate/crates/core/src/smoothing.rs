//! Edge-weighted quadratic smoothing of motion embeddings.
//!
//! Solves `u* = argmin ||u - v||^2 + ||D_x u||^2_{w_x} + ||D_y u||^2_{w_y}`
//! per channel, where `D_x`, `D_y` are forward differences with a Neumann
//! boundary (no difference leaves the last column or row). The normal
//! equations `(I + D_x^T W_x D_x + D_y^T W_y D_y) u = v` are symmetric
//! positive definite, so a matrix-free Jacobi-preconditioned conjugate
//! gradient converges; this solve dominates runtime and is kept allocation-
//! light. A dense direct path in [`dense`] exists for verification.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::raster::{ChannelGrid, Grid};

#[allow(unused_imports)]
use num_traits::Float;

/// Default relative-residual tolerance for the conjugate-gradient solve.
pub const DEFAULT_TOLERANCE: f64 = 1e-8;

/// Default iteration cap for the conjugate-gradient solve.
pub const DEFAULT_MAX_ITERATIONS: usize = 500;

/// Nonnegative weights on horizontal (`wx`) and vertical (`wy`) forward
/// differences. `wx(x, y)` weights the difference between pixels `(x, y)`
/// and `(x + 1, y)`; entries in the last column are unused, and likewise
/// for `wy` and the last row.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeWeightField {
    wx: Grid<f64>,
    wy: Grid<f64>,
}

impl EdgeWeightField {
    pub fn new(wx: Grid<f64>, wy: Grid<f64>) -> Result<Self> {
        if !wx.same_shape(&wy) {
            return Err(Error::ShapeMismatch {
                expected: (wx.width(), wx.height()),
                got: (wy.width(), wy.height()),
            });
        }
        for v in wx.data().iter().chain(wy.data()) {
            if !v.is_finite() || *v < 0.0 {
                return Err(Error::InvalidArgument {
                    what: "edge weights must be finite and nonnegative",
                });
            }
        }
        Ok(EdgeWeightField { wx, wy })
    }

    pub fn zero(width: usize, height: usize) -> Self {
        EdgeWeightField { wx: Grid::new(width, height, 0.0), wy: Grid::new(width, height, 0.0) }
    }

    pub fn uniform(width: usize, height: usize, weight: f64) -> Result<Self> {
        Self::new(Grid::new(width, height, weight), Grid::new(width, height, weight))
    }

    pub fn width(&self) -> usize {
        self.wx.width()
    }

    pub fn height(&self) -> usize {
        self.wx.height()
    }

    pub fn wx(&self) -> &Grid<f64> {
        &self.wx
    }

    pub fn wy(&self) -> &Grid<f64> {
        &self.wy
    }
}

/// Applies the smoothing operator `A = I + D_x^T W_x D_x + D_y^T W_y D_y`
/// to a single channel stored row-major, writing into `out`.
fn apply_channel(
    u: &[f64],
    out: &mut [f64],
    wx: &Grid<f64>,
    wy: &Grid<f64>,
    width: usize,
    height: usize,
) {
    out.copy_from_slice(u);
    for y in 0..height {
        let row = y * width;
        for x in 0..width.saturating_sub(1) {
            let i = row + x;
            let d = wx.at(x, y) * (u[i + 1] - u[i]);
            out[i] -= d;
            out[i + 1] += d;
        }
    }
    for y in 0..height.saturating_sub(1) {
        let row = y * width;
        for x in 0..width {
            let i = row + x;
            let d = wy.at(x, y) * (u[i + width] - u[i]);
            out[i] -= d;
            out[i + width] += d;
        }
    }
}

/// Matrix-free product of the smoothing operator with a multi-channel field.
pub fn apply_smoothing_operator(u: &ChannelGrid, w: &EdgeWeightField) -> Result<ChannelGrid> {
    if u.width() != w.width() || u.height() != w.height() {
        return Err(Error::ShapeMismatch {
            expected: (w.width(), w.height()),
            got: (u.width(), u.height()),
        });
    }
    let n = u.width() * u.height();
    let mut chan = vec![0.0; n];
    let mut prod = vec![0.0; n];
    let mut out = ChannelGrid::new(u.width(), u.height(), u.channels());
    for c in 0..u.channels() {
        u.copy_channel(c, &mut chan);
        apply_channel(&chan, &mut prod, &w.wx, &w.wy, u.width(), u.height());
        out.set_channel(c, &prod);
    }
    Ok(out)
}

/// The diagonal of the smoothing operator, used as the Jacobi preconditioner.
fn diagonal(wx: &Grid<f64>, wy: &Grid<f64>, width: usize, height: usize) -> Vec<f64> {
    let mut diag = vec![1.0; width * height];
    for y in 0..height {
        for x in 0..width {
            let i = y * width + x;
            if x + 1 < width {
                diag[i] += wx.at(x, y);
            }
            if x > 0 {
                diag[i] += wx.at(x - 1, y);
            }
            if y + 1 < height {
                diag[i] += wy.at(x, y);
            }
            if y > 0 {
                diag[i] += wy.at(x, y - 1);
            }
        }
    }
    diag
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Smooths an embedding field against edge weights.
///
/// Each channel solves the normal equations independently by preconditioned
/// conjugate gradient, warm-started at `v` so a zero-weight system returns
/// `v` without iterating. Fails with [`Error::SolverDiverged`] if any channel
/// misses `tol` (relative residual) within `max_iter` iterations.
pub fn smooth_embeddings(
    v: &ChannelGrid,
    w: &EdgeWeightField,
    tol: f64,
    max_iter: usize,
) -> Result<ChannelGrid> {
    if v.width() != w.width() || v.height() != w.height() {
        return Err(Error::ShapeMismatch {
            expected: (w.width(), w.height()),
            got: (v.width(), v.height()),
        });
    }
    if !v.data().iter().all(|x| x.is_finite()) {
        return Err(Error::NonFinite { what: "embedding field" });
    }
    let (width, height) = (v.width(), v.height());
    let n = width * height;
    let diag = diagonal(&w.wx, &w.wy, width, height);
    let mut out = ChannelGrid::new(width, height, v.channels());

    let mut b = vec![0.0; n];
    let mut x = vec![0.0; n];
    let mut r = vec![0.0; n];
    let mut z = vec![0.0; n];
    let mut p = vec![0.0; n];
    let mut ap = vec![0.0; n];
    for c in 0..v.channels() {
        v.copy_channel(c, &mut b);
        x.copy_from_slice(&b);
        let b_norm = dot(&b, &b).sqrt();
        if b_norm == 0.0 {
            out.set_channel(c, &x);
            continue;
        }
        // r = b - A x for the warm start x = b.
        apply_channel(&x, &mut ap, &w.wx, &w.wy, width, height);
        for i in 0..n {
            r[i] = b[i] - ap[i];
        }
        let mut res_norm = dot(&r, &r).sqrt();
        if res_norm <= tol * b_norm {
            out.set_channel(c, &x);
            continue;
        }
        for i in 0..n {
            z[i] = r[i] / diag[i];
        }
        p.copy_from_slice(&z);
        let mut rz = dot(&r, &z);
        let mut converged = false;
        for _ in 0..max_iter {
            apply_channel(&p, &mut ap, &w.wx, &w.wy, width, height);
            let alpha = rz / dot(&p, &ap);
            for i in 0..n {
                x[i] += alpha * p[i];
                r[i] -= alpha * ap[i];
            }
            res_norm = dot(&r, &r).sqrt();
            if res_norm <= tol * b_norm {
                converged = true;
                break;
            }
            for i in 0..n {
                z[i] = r[i] / diag[i];
            }
            let rz_next = dot(&r, &z);
            let beta = rz_next / rz;
            rz = rz_next;
            for i in 0..n {
                p[i] = z[i] + beta * p[i];
            }
        }
        if !converged {
            return Err(Error::SolverDiverged {
                residual: res_norm / b_norm,
                iterations: max_iter,
            });
        }
        out.set_channel(c, &x);
    }
    Ok(out)
}

/// The smoothing energy `||u - v||^2 + ||D_x u||^2_{w_x} + ||D_y u||^2_{w_y}`
/// summed over all channels.
pub fn smoothing_energy(u: &ChannelGrid, v: &ChannelGrid, w: &EdgeWeightField) -> f64 {
    let (width, height) = (u.width(), u.height());
    let mut e = 0.0;
    for y in 0..height {
        for x in 0..width {
            let up = u.pixel(x, y);
            let vp = v.pixel(x, y);
            for (a, b) in up.iter().zip(vp) {
                e += (a - b) * (a - b);
            }
            if x + 1 < width {
                let wxt = w.wx.at(x, y);
                for (a, b) in up.iter().zip(u.pixel(x + 1, y)) {
                    e += wxt * (b - a) * (b - a);
                }
            }
            if y + 1 < height {
                let wyt = w.wy.at(x, y);
                for (a, b) in up.iter().zip(u.pixel(x, y + 1)) {
                    e += wyt * (b - a) * (b - a);
                }
            }
        }
    }
    e
}

/// Dense reference path: explicit assembly and direct Cholesky solve of the
/// smoothing system. Quadratic memory; verification only.
pub mod dense {
    use super::*;

    /// Assembles the dense `n x n` smoothing matrix, row-major.
    pub fn assemble(w: &EdgeWeightField) -> Vec<f64> {
        let (width, height) = (w.width(), w.height());
        let n = width * height;
        let mut a = vec![0.0; n * n];
        for i in 0..n {
            a[i * n + i] = 1.0;
        }
        let mut couple = |i: usize, j: usize, wt: f64| {
            a[i * n + i] += wt;
            a[j * n + j] += wt;
            a[i * n + j] -= wt;
            a[j * n + i] -= wt;
        };
        for y in 0..height {
            for x in 0..width {
                let i = y * width + x;
                if x + 1 < width {
                    couple(i, i + 1, w.wx.at(x, y));
                }
                if y + 1 < height {
                    couple(i, i + width, w.wy.at(x, y));
                }
            }
        }
        a
    }

    /// Solves `a x = b` for SPD `a` (row-major, size `n x n`) by Cholesky
    /// factorization.
    pub fn solve_spd(a: &[f64], b: &[f64]) -> Result<Vec<f64>> {
        let n = b.len();
        assert_eq!(a.len(), n * n);
        let mut l = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..=i {
                let mut s = a[i * n + j];
                for k in 0..j {
                    s -= l[i * n + k] * l[j * n + k];
                }
                if i == j {
                    if s <= 0.0 || !s.is_finite() {
                        return Err(Error::Numeric {
                            what: "dense smoothing matrix is not positive definite",
                            pixel: None,
                        });
                    }
                    l[i * n + i] = s.sqrt();
                } else {
                    l[i * n + j] = s / l[j * n + j];
                }
            }
        }
        let mut y = vec![0.0; n];
        for i in 0..n {
            let mut s = b[i];
            for k in 0..i {
                s -= l[i * n + k] * y[k];
            }
            y[i] = s / l[i * n + i];
        }
        let mut x = vec![0.0; n];
        for i in (0..n).rev() {
            let mut s = y[i];
            for k in (i + 1)..n {
                s -= l[k * n + i] * x[k];
            }
            x[i] = s / l[i * n + i];
        }
        Ok(x)
    }

    /// Direct dense solve of the smoothing problem, channel by channel.
    pub fn smooth_embeddings(v: &ChannelGrid, w: &EdgeWeightField) -> Result<ChannelGrid> {
        let n = v.width() * v.height();
        let a = assemble(w);
        let mut out = ChannelGrid::new(v.width(), v.height(), v.channels());
        let mut b = vec![0.0; n];
        for c in 0..v.channels() {
            v.copy_channel(c, &mut b);
            let x = solve_spd(&a, &b)?;
            out.set_channel(c, &x);
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn lcg_fill(data: &mut [f64], seed: u64, lo: f64, hi: f64) {
        let mut s = seed.wrapping_mul(0x9E3779B97F4A7C15).wrapping_add(12345);
        for v in data.iter_mut() {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            let u = (s >> 11) as f64 / (1u64 << 53) as f64;
            *v = lo + u * (hi - lo);
        }
    }

    fn random_problem(w: usize, h: usize, ch: usize, seed: u64) -> (ChannelGrid, EdgeWeightField) {
        let mut v = ChannelGrid::new(w, h, ch);
        lcg_fill(v.data_mut(), seed, -2.0, 2.0);
        let mut wx = Grid::new(w, h, 0.0);
        let mut wy = Grid::new(w, h, 0.0);
        lcg_fill(wx.data_mut(), seed ^ 0xABCD, 0.0, 3.0);
        lcg_fill(wy.data_mut(), seed ^ 0x1234, 0.0, 3.0);
        (v, EdgeWeightField::new(wx, wy).unwrap())
    }

    #[test]
    fn zero_weights_return_input_exactly() {
        let (v, _) = random_problem(6, 5, 3, 7);
        let w = EdgeWeightField::zero(6, 5);
        let u = smooth_embeddings(&v, &w, DEFAULT_TOLERANCE, DEFAULT_MAX_ITERATIONS).unwrap();
        assert_eq!(u, v);
    }

    #[test]
    fn constant_input_is_a_fixed_point() {
        let v = ChannelGrid::from_vec(5, 4, 2, vec![3.25; 5 * 4 * 2]).unwrap();
        let (_, w) = random_problem(5, 4, 1, 99);
        let u = smooth_embeddings(&v, &w, DEFAULT_TOLERANCE, DEFAULT_MAX_ITERATIONS).unwrap();
        assert_eq!(u, v);
    }

    #[test]
    fn operator_on_constant_returns_input() {
        let u = ChannelGrid::from_vec(4, 4, 1, vec![-1.5; 16]).unwrap();
        let (_, w) = random_problem(4, 4, 1, 3);
        let au = apply_smoothing_operator(&u, &w).unwrap();
        assert_eq!(au, u);
    }

    #[test]
    fn operator_matches_assembled_matrix() {
        let (mut u, w) = random_problem(8, 8, 1, 42);
        lcg_fill(u.data_mut(), 77, -1.0, 1.0);
        let a = dense::assemble(&w);
        let n = 64;
        let mut chan = vec![0.0; n];
        u.copy_channel(0, &mut chan);
        let au = apply_smoothing_operator(&u, &w).unwrap();
        let mut via_matrix = vec![0.0; n];
        for i in 0..n {
            via_matrix[i] = (0..n).map(|j| a[i * n + j] * chan[j]).sum();
        }
        let mut got = vec![0.0; n];
        au.copy_channel(0, &mut got);
        for i in 0..n {
            assert!((got[i] - via_matrix[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn pcg_matches_dense_solve() {
        for seed in [1u64, 2, 3] {
            let (v, w) = random_problem(4, 4, 3, seed);
            let fast = smooth_embeddings(&v, &w, 1e-10, DEFAULT_MAX_ITERATIONS).unwrap();
            let exact = dense::smooth_embeddings(&v, &w).unwrap();
            for (a, b) in fast.data().iter().zip(exact.data()) {
                assert!((a - b).abs() < 1e-8, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn solution_reduces_energy_and_is_optimal() {
        let (v, w) = random_problem(6, 6, 2, 11);
        let u = smooth_embeddings(&v, &w, 1e-10, DEFAULT_MAX_ITERATIONS).unwrap();
        let e_star = smoothing_energy(&u, &v, &w);
        assert!(e_star <= smoothing_energy(&v, &v, &w) + 1e-12);
        for seed in 0..5u64 {
            let mut delta = vec![0.0; u.data().len()];
            lcg_fill(&mut delta, seed.wrapping_add(100), -1.0, 1.0);
            let mut perturbed = u.clone();
            for (p, d) in perturbed.data_mut().iter_mut().zip(&delta) {
                *p += 1e-3 * d;
            }
            assert!(e_star <= smoothing_energy(&perturbed, &v, &w) + 1e-12);
        }
    }

    #[test]
    fn larger_weights_smooth_harder() {
        let mut v = ChannelGrid::new(6, 6, 1);
        lcg_fill(v.data_mut(), 5, -1.0, 1.0);
        let roughness = |u: &ChannelGrid| {
            let zero_v = ChannelGrid::new(6, 6, 1);
            let unit = EdgeWeightField::uniform(6, 6, 1.0).unwrap();
            // Difference part only: energy against v = u removes the data term.
            smoothing_energy(u, &zero_v, &unit) - u.data().iter().map(|x| x * x).sum::<f64>()
        };
        let w1 = EdgeWeightField::uniform(6, 6, 0.5).unwrap();
        let w2 = EdgeWeightField::uniform(6, 6, 5.0).unwrap();
        let u1 = smooth_embeddings(&v, &w1, 1e-10, DEFAULT_MAX_ITERATIONS).unwrap();
        let u2 = smooth_embeddings(&v, &w2, 1e-10, DEFAULT_MAX_ITERATIONS).unwrap();
        assert!(roughness(&u2) < roughness(&u1));
        assert!(roughness(&u1) < roughness(&v));
    }

    #[test]
    fn non_convergence_reports_residual() {
        let (v, w) = random_problem(8, 8, 1, 21);
        let r = smooth_embeddings(&v, &w, 1e-14, 1);
        assert!(matches!(r, Err(Error::SolverDiverged { iterations: 1, .. })));
    }

    proptest! {
        #[test]
        fn prop_operator_is_symmetric_and_coercive(seed in 0u64..200) {
            let (u, w) = random_problem(5, 5, 1, seed);
            let (z, _) = random_problem(5, 5, 1, seed ^ 0xF00D);
            let au = apply_smoothing_operator(&u, &w).unwrap();
            let az = apply_smoothing_operator(&z, &w).unwrap();
            let dot_g = |a: &ChannelGrid, b: &ChannelGrid| -> f64 {
                a.data().iter().zip(b.data()).map(|(x, y)| x * y).sum()
            };
            prop_assert!((dot_g(&au, &z) - dot_g(&u, &az)).abs() < 1e-10);
            prop_assert!(dot_g(&au, &u) >= dot_g(&u, &u) - 1e-10);
        }
    }
}
