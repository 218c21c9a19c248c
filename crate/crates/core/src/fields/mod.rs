//! Grid-sampled sections and the first-order operators built on `∇`.
//!
//! A [`Field`] stores, at every grid point, the coordinates of a tensor in the
//! orthonormal basis of its [`Bundle`] fiber, taken with respect to the
//! orthonormal coframe of the metric. The fiber inner product is therefore the
//! Euclidean dot product of coordinates.

mod ops;

pub use ops::{
    nabla_to,
    delta_star, divergence, divergence_trace_residual, nabla, nabla_adjoint, nabla_target,
    nabla_transpose, rough_laplacian, rough_laplacian_analytic, RoughLaplacian,
};

use std::io::Write;
use std::path::Path;

use rand::Rng;

use crate::error::{Error, Result};
use crate::fiber::{npow, Bundle};
use crate::geometry::{GeometryCache, Grid};
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    pub n: usize,
    pub bundle: Bundle,
    pub npts: usize,
    /// Point-major: `data[pt * dim + c]`.
    pub data: Vec<f64>,
}

/// `out_i = Σ_a m[i][a] t_a` on one slot, or with `m` transposed.
pub(crate) fn slot_apply(
    t: &[f64],
    n: usize,
    r: usize,
    slot: usize,
    m: &[f64],
    transpose: bool,
    out: &mut [f64],
) {
    let stride = npow(n, r - 1 - slot);
    let block = n * stride;
    for outer in (0..out.len()).step_by(block) {
        for i in 0..n {
            for inner in 0..stride {
                let base = outer + inner;
                let mut acc = 0.0;
                for a in 0..n {
                    let c = if transpose { m[a * n + i] } else { m[i * n + a] };
                    acc += c * t[base + a * stride];
                }
                out[outer + i * stride + inner] = acc;
            }
        }
    }
}

pub(crate) fn all_slots(t: &mut Vec<f64>, n: usize, r: usize, m: &[f64], transpose: bool) {
    let mut tmp = vec![0.0; t.len()];
    all_slots_with(t, &mut tmp, n, r, m, transpose);
}

/// [`all_slots`] with caller-provided scratch of the same length as `t`.
pub(crate) fn all_slots_with(t: &mut Vec<f64>, tmp: &mut Vec<f64>, n: usize, r: usize, m: &[f64], transpose: bool) {
    for s in 0..r {
        slot_apply(t, n, r, s, m, transpose, tmp);
        std::mem::swap(t, tmp);
    }
}

impl Field {
    pub fn zeros(n: usize, bundle: Bundle, npts: usize) -> Self {
        Self {
            n,
            bundle,
            npts,
            data: vec![0.0; npts * bundle.dim(n)],
        }
    }

    pub fn zeros_on(cache: &GeometryCache, bundle: Bundle) -> Self {
        Self::zeros(cache.n(), bundle, cache.npts())
    }

    pub fn dim(&self) -> usize {
        self.bundle.dim(self.n)
    }

    pub fn rank(&self) -> usize {
        self.bundle.rank()
    }

    pub fn at(&self, pt: usize) -> &[f64] {
        let d = self.dim();
        &self.data[pt * d..(pt + 1) * d]
    }

    pub fn at_mut(&mut self, pt: usize) -> &mut [f64] {
        let d = self.dim();
        &mut self.data[pt * d..(pt + 1) * d]
    }

    /// Samples a tensor given by its coordinate components (full array,
    /// slot 0 most significant) and projects it onto `bundle`.
    pub fn from_coordinates(
        cache: &GeometryCache,
        bundle: Bundle,
        f: impl Fn(&[f64]) -> Vec<f64>,
    ) -> Self {
        let n = cache.n();
        let r = bundle.rank();
        let basis = cache.algebra.basis(bundle);
        let mut out = Self::zeros_on(cache, bundle);
        let d = out.dim();
        for pt in 0..cache.npts() {
            let mut t = f(&cache.grid.coords(pt));
            assert_eq!(t.len(), npow(n, r), "coordinate array length");
            all_slots(&mut t, n, r, cache.frame_inv_at(pt), true);
            basis.project(&t, &mut out.data[pt * d..(pt + 1) * d]);
        }
        out
    }

    /// Full frame-component array at `pt`.
    pub fn frame_full(&self, cache: &GeometryCache, pt: usize) -> Vec<f64> {
        let mut t = vec![0.0; npow(self.n, self.rank())];
        cache.algebra.basis(self.bundle).expand(self.at(pt), &mut t);
        t
    }

    /// Full coordinate-component array at `pt`.
    pub fn coordinate_full(&self, cache: &GeometryCache, pt: usize) -> Vec<f64> {
        let mut t = self.frame_full(cache, pt);
        all_slots(&mut t, self.n, self.rank(), cache.frame_at(pt), true);
        t
    }

    /// The metric as a section of `S²`.
    pub fn metric(cache: &GeometryCache) -> Self {
        let n = cache.n();
        let basis = cache.algebra.basis(Bundle::Sym(2));
        let mut id = vec![0.0; n * n];
        (0..n).for_each(|a| id[a * n + a] = 1.0);
        let mut c = vec![0.0; basis.dim];
        basis.project(&id, &mut c);
        let mut out = Self::zeros_on(cache, Bundle::Sym(2));
        out.data.chunks_mut(c.len()).for_each(|ch| ch.copy_from_slice(&c));
        out
    }

    /// Band-limited random section: every frame coordinate is a random
    /// combination of Fourier modes with `|k|∞ ≤ kmax`.
    pub fn random(cache: &GeometryCache, bundle: Bundle, kmax: i64, rng: &mut impl Rng) -> Self {
        let n = cache.n();
        let mut out = Self::zeros_on(cache, bundle);
        let d = out.dim();
        let modes: Vec<Vec<i64>> = (0..(2 * kmax + 1).pow(n as u32))
            .map(|mut m| {
                (0..n)
                    .map(|_| {
                        let k = m % (2 * kmax + 1);
                        m /= 2 * kmax + 1;
                        k - kmax
                    })
                    .collect()
            })
            .collect();
        let grid = &cache.grid;
        assert!(
            grid.sizes.iter().all(|&s| 2 * kmax < s as i64),
            "random field band exceeds the grid"
        );
        let scale = 1.0 / modes.len() as f64;
        for c in 0..d {
            // a cos(k·x) + b sin(k·x) = Re((a − ib) e^{ik·x})
            let mut spec = vec![Complex64::new(0.0, 0.0); grid.npts];
            let slot = |k: &[i64]| -> usize {
                k.iter()
                    .zip(&grid.sizes)
                    .zip(&grid.strides)
                    .map(|((&ki, &s), &st)| ki.rem_euclid(s as i64) as usize * st)
                    .sum()
            };
            for k in &modes {
                let (a, b): (f64, f64) = (rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
                let half = Complex64::new(a, -b) * (0.5 * scale);
                spec[slot(k)] += half;
                let neg: Vec<i64> = k.iter().map(|v| -v).collect();
                spec[slot(&neg)] += half.conj();
            }
            inverse_dft(grid, &mut spec);
            for (pt, v) in spec.iter().enumerate() {
                out.data[pt * d + c] = v.re;
            }
        }
        out
    }

    pub fn scaled(&self, a: f64) -> Self {
        let mut out = self.clone();
        out.data.iter_mut().for_each(|v| *v *= a);
        out
    }

    /// `self + a·other`.
    pub fn axpy(&self, a: f64, other: &Self) -> Self {
        assert_eq!(self.bundle, other.bundle, "axpy bundle mismatch");
        let mut out = self.clone();
        out.data.iter_mut().zip(&other.data).for_each(|(x, y)| *x += a * y);
        out
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Pointwise multiplication by the scalar field `f`.
    pub fn mul_scalar(&self, f: &[f64]) -> Self {
        let d = self.dim();
        let mut out = self.clone();
        out.data
            .chunks_mut(d)
            .zip(f)
            .for_each(|(c, s)| c.iter_mut().for_each(|v| *v *= s));
        out
    }

    /// Orthogonal projection onto another bundle of the same rank.
    pub fn transfer(&self, cache: &GeometryCache, to: Bundle) -> Self {
        let m = cache.algebra.transfer(self.bundle, to);
        let mut out = Self::zeros(self.n, to, self.npts);
        let (d_in, d_out) = (self.dim(), out.dim());
        for pt in 0..self.npts {
            let x = &self.data[pt * d_in..(pt + 1) * d_in];
            let y = &mut out.data[pt * d_out..(pt + 1) * d_out];
            for (i, yi) in y.iter_mut().enumerate() {
                *yi = (0..d_in).map(|j| m[(i, j)] * x[j]).sum();
            }
        }
        out
    }

    /// Largest pointwise trace (over the first two slots) of the frame tensor.
    pub fn max_trace(&self, cache: &GeometryCache) -> f64 {
        let r = self.rank();
        if r < 2 {
            return 0.0;
        }
        let mut tr = vec![0.0; npow(self.n, r - 2)];
        (0..self.npts)
            .map(|pt| {
                cache.algebra.trace01(r, &self.frame_full(cache, pt), &mut tr);
                tr.iter().fold(0.0f64, |m, v| m.max(v.abs()))
            })
            .fold(0.0, f64::max)
    }

    pub fn write_csv(&self, cache: &GeometryCache, path: &Path) -> Result<()> {
        let io = |e| Error::Io {
            path: path.display().to_string(),
            source: e,
        };
        let mut w = std::io::BufWriter::new(std::fs::File::create(path).map_err(io)?);
        let mut header: Vec<String> = (1..=self.n).map(|a| format!("x{a}")).collect();
        header.extend((0..self.dim()).map(|c| format!("c{c}")));
        writeln!(w, "{}", header.join(",")).map_err(io)?;
        for pt in 0..self.npts {
            let row: Vec<String> = cache
                .grid
                .coords(pt)
                .iter()
                .chain(self.at(pt))
                .map(|v| format!("{v:.17e}"))
                .collect();
            writeln!(w, "{}", row.join(",")).map_err(io)?;
        }
        w.flush().map_err(io)
    }
}

/// Unnormalized inverse DFT over every axis, in place.
fn inverse_dft(grid: &Grid, data: &mut [Complex64]) {
    let mut planner = FftPlanner::new();
    for a in 0..grid.n {
        let (len, stride) = (grid.sizes[a], grid.strides[a]);
        let fft = planner.plan_fft_inverse(len);
        let mut line = vec![Complex64::new(0.0, 0.0); len];
        for start in (0..grid.npts).filter(|pt| (pt / stride) % len == 0) {
            for (j, v) in line.iter_mut().enumerate() {
                *v = data[start + j * stride];
            }
            fft.process(&mut line);
            for (j, v) in line.iter().enumerate() {
                data[start + j * stride] = *v;
            }
        }
    }
}

/// Weighted L² pairing `Σ w(x) ⟨φ(x), ψ(x)⟩`.
pub fn l2_inner(cache: &GeometryCache, phi: &Field, psi: &Field) -> Result<f64> {
    if phi.bundle != psi.bundle {
        return Err(Error::BundleMismatch {
            expected: phi.bundle.label(),
            found: psi.bundle.label(),
        });
    }
    let d = phi.dim();
    Ok(phi
        .data
        .chunks(d)
        .zip(psi.data.chunks(d))
        .zip(&cache.weights)
        .map(|((a, b), w)| w * a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>())
        .sum())
}

pub fn l2_norm(cache: &GeometryCache, phi: &Field) -> f64 {
    l2_inner(cache, phi, phi).unwrap_or(0.0).max(0.0).sqrt()
}
