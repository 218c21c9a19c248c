//! Periodic grids, analytic metrics on n-tori, and the derived Levi-Civita data.

mod diff;
mod expr;

pub use diff::{Differentiator, Method};
pub use expr::TrigPoly;

use std::f64::consts::PI;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fiber::{Algebra, MetricAtPoint};

pub const DEFAULT_POINT_CAP: usize = 2_000_000;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridSpec {
    pub n: usize,
    pub sizes: Vec<usize>,
    pub lengths: Vec<f64>,
    pub cap: usize,
}

impl GridSpec {
    /// `size` points per axis on the `2π`-periodic cube.
    pub fn cube(n: usize, size: usize) -> Self {
        Self::new(vec![size; n])
    }

    pub fn new(sizes: Vec<usize>) -> Self {
        Self {
            n: sizes.len(),
            lengths: vec![2.0 * PI; sizes.len()],
            sizes,
            cap: DEFAULT_POINT_CAP,
        }
    }

    pub fn with_cap(mut self, cap: usize) -> Self {
        self.cap = cap;
        self
    }

    pub fn points(&self) -> usize {
        self.sizes.iter().product()
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.sizes.len() != self.n || self.lengths.len() != self.n {
            return Err(Error::InvalidArgument(format!(
                "grid needs one size and one length per axis (n = {})",
                self.n
            )));
        }
        if let Some(s) = self.sizes.iter().find(|&&s| s < 8 || s % 2 != 0) {
            return Err(Error::InvalidArgument(format!(
                "grid sizes must be even and at least 8, got {s}"
            )));
        }
        if self.lengths.iter().any(|&l| !(l > 0.0 && l.is_finite())) {
            return Err(Error::InvalidArgument("grid lengths must be positive".into()));
        }
        let points = self
            .sizes
            .iter()
            .try_fold(1usize, |acc, &s| acc.checked_mul(s))
            .unwrap_or(usize::MAX);
        if points > self.cap {
            return Err(Error::GridTooLarge {
                points,
                cap: self.cap,
            });
        }
        Ok(())
    }
}

/// Tensor-product periodic lattice. Points are stored row-major, last axis fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    pub n: usize,
    pub sizes: Vec<usize>,
    pub lengths: Vec<f64>,
    pub spacing: Vec<f64>,
    pub strides: Vec<usize>,
    pub npts: usize,
}

pub fn build_grid(spec: &GridSpec) -> Result<Grid> {
    spec.validate()?;
    let n = spec.n;
    let mut strides = vec![1; n];
    for a in (0..n.saturating_sub(1)).rev() {
        strides[a] = strides[a + 1] * spec.sizes[a + 1];
    }
    Ok(Grid {
        n,
        sizes: spec.sizes.clone(),
        lengths: spec.lengths.clone(),
        spacing: spec
            .lengths
            .iter()
            .zip(&spec.sizes)
            .map(|(l, &s)| l / s as f64)
            .collect(),
        strides,
        npts: spec.points(),
    })
}

impl Grid {
    pub fn multi_index(&self, pt: usize) -> Vec<usize> {
        (0..self.n)
            .map(|a| (pt / self.strides[a]) % self.sizes[a])
            .collect()
    }

    pub fn coords(&self, pt: usize) -> Vec<f64> {
        (0..self.n)
            .map(|a| ((pt / self.strides[a]) % self.sizes[a]) as f64 * self.spacing[a])
            .collect()
    }

    pub fn cell_volume(&self) -> f64 {
        self.spacing.iter().product()
    }
}

/// Catalog of test metrics.
#[derive(Debug, Clone, PartialEq)]
pub enum MetricPreset {
    Flat,
    /// `g = e^{2f} δ`.
    ConformallyFlat(TrigPoly),
    /// `g = diag(a₁, …, aₙ)`.
    DiagonalPeriodic(Vec<TrigPoly>),
}

impl MetricPreset {
    pub fn name(&self) -> &'static str {
        match self {
            MetricPreset::Flat => "flat",
            MetricPreset::ConformallyFlat(_) => "conformally_flat",
            MetricPreset::DiagonalPeriodic(_) => "diagonal_periodic",
        }
    }

    pub fn describe(&self) -> String {
        match self {
            MetricPreset::Flat => "flat".into(),
            MetricPreset::ConformallyFlat(f) => format!("conformally_flat(f = {f})"),
            MetricPreset::DiagonalPeriodic(a) => format!(
                "diagonal_periodic({})",
                a.iter().map(|t| t.to_string()).collect::<Vec<_>>().join("; ")
            ),
        }
    }

    /// Writes `g_ij(x)` row-major into `out` (length `n²`).
    pub fn sample_into(&self, x: &[f64], out: &mut [f64]) {
        let n = x.len();
        out.fill(0.0);
        for i in 0..n {
            out[i * n + i] = match self {
                MetricPreset::Flat => 1.0,
                MetricPreset::ConformallyFlat(f) => (2.0 * f.eval(x)).exp(),
                MetricPreset::DiagonalPeriodic(a) => a[i].eval(x),
            };
        }
    }

    pub fn check_dimension(&self, n: usize) -> Result<()> {
        let exprs: Vec<&TrigPoly> = match self {
            MetricPreset::Flat => vec![],
            MetricPreset::ConformallyFlat(f) => vec![f],
            MetricPreset::DiagonalPeriodic(a) => {
                if a.len() != n {
                    return Err(Error::InvalidArgument(format!(
                        "diagonal_periodic needs {n} expressions, got {}",
                        a.len()
                    )));
                }
                a.iter().collect()
            }
        };
        if let Some(e) = exprs.iter().find(|e| e.max_axis() > n) {
            return Err(Error::InvalidArgument(format!(
                "expression '{e}' uses an axis beyond x{n}"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, Serialize)]
pub struct CurvatureResiduals {
    pub first_pair: f64,
    pub last_pair: f64,
    pub pair_swap: f64,
    pub bianchi: f64,
    pub ricci_asym: f64,
    pub scale: f64,
}

impl CurvatureResiduals {
    pub fn max_relative(&self) -> f64 {
        let s = self.scale.max(1.0);
        [
            self.first_pair,
            self.last_pair,
            self.pair_swap,
            self.bianchi,
            self.ricci_asym,
        ]
        .into_iter()
        .fold(0.0, f64::max)
            / s
    }
}

/// Grid, metric and every derived quantity needed downstream. Immutable once built.
///
/// Frames: at each point `g = EᵀE` with `E` upper triangular and `F = E⁻¹`.
/// Orthonormal-frame components of a covector `ω` are `Fᵀω`; coordinate
/// components of a frame covector `ω̂` are `Eᵀω̂`.
#[derive(Debug)]
pub struct GeometryCache {
    pub spec: GridSpec,
    pub grid: Grid,
    pub preset: MetricPreset,
    pub diff: Differentiator,
    pub algebra: Algebra,
    /// `g_ij`, `n²` per point.
    pub metric: Vec<f64>,
    pub metric_inv: Vec<f64>,
    pub sqrt_det: Vec<f64>,
    pub frame: Vec<f64>,
    pub frame_inv: Vec<f64>,
    /// `Γ^k_ij` at `[k, i, j]`, `n³` per point.
    pub christoffel: Vec<f64>,
    /// `R_lkij` at `[l, k, i, j]`, `n⁴` per point, with
    /// `R^l_kij = ∂_i Γ^l_jk − ∂_j Γ^l_ik + Γ^l_im Γ^m_jk − Γ^l_jm Γ^m_ik`.
    pub riemann: Vec<f64>,
    /// `Ric_kj = R^i_kij`.
    pub ricci: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GeometryCache {
    pub fn new(spec: GridSpec, preset: MetricPreset, method: Method) -> Result<Self> {
        let grid = build_grid(&spec)?;
        preset.check_dimension(grid.n)?;
        let n = grid.n;
        let (n2, n3) = (n * n, n * n * n);
        let npts = grid.npts;
        let diff = Differentiator::new(&grid, method);

        let mut metric = vec![0.0; npts * n2];
        metric
            .par_chunks_mut(n2)
            .enumerate()
            .for_each(|(pt, g)| preset.sample_into(&grid.coords(pt), g));

        let mut metric_inv = vec![0.0; npts * n2];
        let mut frame = vec![0.0; npts * n2];
        let mut frame_inv = vec![0.0; npts * n2];
        let mut sqrt_det = vec![0.0; npts];
        let bad = metric_inv
            .par_chunks_mut(n2)
            .zip(frame.par_chunks_mut(n2))
            .zip(frame_inv.par_chunks_mut(n2))
            .zip(sqrt_det.par_iter_mut())
            .enumerate()
            .filter_map(|(pt, (((gi, e), f), sd))| {
                let mut fill = || -> Option<()> {
                let g = DMatrix::from_row_slice(n, n, &metric[pt * n2..(pt + 1) * n2]);
                let chol = g.cholesky()?;
                let et = chol.l().transpose();
                let ei = et.clone().try_inverse()?;
                let ginv = chol.inverse();
                *sd = chol.l().diagonal().product();
                for i in 0..n {
                    for j in 0..n {
                        gi[i * n + j] = ginv[(i, j)];
                        e[i * n + j] = et[(i, j)];
                        f[i * n + j] = ei[(i, j)];
                    }
                }
                Some(())
                };
                fill().is_none().then_some(pt)
            })
            .min();
        if let Some(point) = bad {
            return Err(Error::NotPositiveDefinite { point });
        }
        if let Some(point) = sqrt_det.iter().position(|&d| !(d > 0.0)) {
            return Err(Error::NotPositiveDefinite { point });
        }

        // ∂_a g_ij, component-major scratch.
        let component = |data: &[f64], stride: usize, c: usize| -> Vec<f64> {
            (0..npts).map(|pt| data[pt * stride + c]).collect()
        };
        let dg: Vec<Vec<Vec<f64>>> = (0..n2)
            .into_par_iter()
            .map(|c| {
                let u = component(&metric, n2, c);
                (0..n).map(|a| diff.diffed(a, &u)).collect()
            })
            .collect();

        let mut christoffel = vec![0.0; npts * n3];
        christoffel
            .par_chunks_mut(n3)
            .enumerate()
            .for_each(|(pt, gam)| {
                let gi = &metric_inv[pt * n2..(pt + 1) * n2];
                let d = |a: usize, i: usize, j: usize| dg[i * n + j][a][pt];
                for k in 0..n {
                    for i in 0..n {
                        for j in 0..n {
                            let mut s = 0.0;
                            for l in 0..n {
                                s += gi[k * n + l] * (d(i, j, l) + d(j, i, l) - d(l, i, j));
                            }
                            gam[k * n2 + i * n + j] = 0.5 * s;
                        }
                    }
                }
            });

        // ∂_a Γ^k_ij.
        let dgam: Vec<Vec<Vec<f64>>> = (0..n3)
            .into_par_iter()
            .map(|c| {
                let u = component(&christoffel, n3, c);
                (0..n).map(|a| diff.diffed(a, &u)).collect()
            })
            .collect();

        let n4 = n2 * n2;
        let mut riemann = vec![0.0; npts * n4];
        let mut ricci = vec![0.0; npts * n2];
        riemann
            .par_chunks_mut(n4)
            .zip(ricci.par_chunks_mut(n2))
            .enumerate()
            .for_each(|(pt, (rm, ric))| {
                let gam = &christoffel[pt * n3..(pt + 1) * n3];
                let g = &metric[pt * n2..(pt + 1) * n2];
                let gm = |k: usize, i: usize, j: usize| gam[k * n2 + i * n + j];
                let dgm = |a: usize, k: usize, i: usize, j: usize| dgam[k * n2 + i * n + j][a][pt];
                let mut up = vec![0.0; n4];
                for l in 0..n {
                    for k in 0..n {
                        for i in 0..n {
                            for j in 0..n {
                                let mut s = dgm(i, l, j, k) - dgm(j, l, i, k);
                                for m in 0..n {
                                    s += gm(l, i, m) * gm(m, j, k) - gm(l, j, m) * gm(m, i, k);
                                }
                                up[((l * n + k) * n + i) * n + j] = s;
                            }
                        }
                    }
                }
                for l in 0..n {
                    for rest in 0..n3 {
                        let mut s = 0.0;
                        for m in 0..n {
                            s += g[l * n + m] * up[m * n3 + rest];
                        }
                        rm[l * n3 + rest] = s;
                    }
                }
                for k in 0..n {
                    for j in 0..n {
                        ric[k * n + j] = (0..n).map(|i| up[((i * n + k) * n + i) * n + j]).sum();
                    }
                }
            });

        let cell = grid.cell_volume();
        let weights = sqrt_det.iter().map(|d| d * cell).collect();

        Ok(Self {
            algebra: Algebra::new(n),
            spec,
            grid,
            preset,
            diff,
            metric,
            metric_inv,
            sqrt_det,
            frame,
            frame_inv,
            christoffel,
            riemann,
            ricci,
            weights,
        })
    }

    pub fn n(&self) -> usize {
        self.grid.n
    }

    pub fn npts(&self) -> usize {
        self.grid.npts
    }

    pub fn method(&self) -> Method {
        self.diff.method()
    }

    /// `E` at `pt`, row-major.
    pub fn frame_at(&self, pt: usize) -> &[f64] {
        let n2 = self.n() * self.n();
        &self.frame[pt * n2..(pt + 1) * n2]
    }

    /// `F = E⁻¹` at `pt`, row-major.
    pub fn frame_inv_at(&self, pt: usize) -> &[f64] {
        let n2 = self.n() * self.n();
        &self.frame_inv[pt * n2..(pt + 1) * n2]
    }

    pub fn christoffel_at(&self, pt: usize) -> &[f64] {
        let n3 = self.n().pow(3);
        &self.christoffel[pt * n3..(pt + 1) * n3]
    }

    pub fn metric_at(&self, pt: usize) -> MetricAtPoint {
        let n = self.n();
        MetricAtPoint::new(DMatrix::from_row_slice(
            n,
            n,
            &self.metric[pt * n * n..(pt + 1) * n * n],
        ))
        .expect("metric validated at construction")
    }

    pub fn volume(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn scalar_curvature(&self, pt: usize) -> f64 {
        let n = self.n();
        let gi = &self.metric_inv[pt * n * n..(pt + 1) * n * n];
        let ric = &self.ricci[pt * n * n..(pt + 1) * n * n];
        gi.iter().zip(ric).map(|(a, b)| a * b).sum()
    }

    /// Riemann tensor at `pt` in orthonormal-frame components.
    pub fn riemann_frame(&self, pt: usize) -> Vec<f64> {
        let n = self.n();
        let n4 = n.pow(4);
        let f = &self.frame_inv[pt * n * n..(pt + 1) * n * n];
        let mut t = self.riemann[pt * n4..(pt + 1) * n4].to_vec();
        let mut tmp = vec![0.0; n4];
        // contract every slot with F (coordinate index i → frame index a via F_ia)
        for slot in 0..4 {
            let stride = n.pow(3 - slot as u32);
            for (idx, out) in tmp.iter_mut().enumerate() {
                let a = (idx / stride) % n;
                let base = idx - a * stride;
                *out = (0..n).map(|i| f[i * n + a] * t[base + i * stride]).sum();
            }
            std::mem::swap(&mut t, &mut tmp);
        }
        t
    }

    /// Ricci tensor at `pt` in orthonormal-frame components.
    pub fn ricci_frame(&self, pt: usize) -> Vec<f64> {
        let n = self.n();
        let f = &self.frame_inv[pt * n * n..(pt + 1) * n * n];
        let r = &self.ricci[pt * n * n..(pt + 1) * n * n];
        let mut out = vec![0.0; n * n];
        for a in 0..n {
            for b in 0..n {
                let mut s = 0.0;
                for i in 0..n {
                    for j in 0..n {
                        s += f[i * n + a] * f[j * n + b] * r[i * n + j];
                    }
                }
                out[a * n + b] = s;
            }
        }
        out
    }

    pub fn christoffel_max(&self) -> f64 {
        self.christoffel.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn curvature_max(&self) -> f64 {
        self.riemann
            .iter()
            .chain(&self.ricci)
            .fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn curvature_residuals(&self) -> CurvatureResiduals {
        let n = self.n();
        let (n2, n4) = (n * n, n.pow(4));
        let at = |r: &[f64], a: usize, b: usize, c: usize, d: usize| r[((a * n + b) * n + c) * n + d];
        let mut res = CurvatureResiduals {
            scale: self.curvature_max(),
            ..Default::default()
        };
        for pt in 0..self.npts() {
            let r = &self.riemann[pt * n4..(pt + 1) * n4];
            let ric = &self.ricci[pt * n2..(pt + 1) * n2];
            for a in 0..n {
                for b in 0..n {
                    res.ricci_asym = res.ricci_asym.max((ric[a * n + b] - ric[b * n + a]).abs());
                    for c in 0..n {
                        for d in 0..n {
                            let v = at(r, a, b, c, d);
                            res.first_pair = res.first_pair.max((v + at(r, b, a, c, d)).abs());
                            res.last_pair = res.last_pair.max((v + at(r, a, b, d, c)).abs());
                            res.pair_swap = res.pair_swap.max((v - at(r, c, d, a, b)).abs());
                            res.bianchi = res
                                .bianchi
                                .max((v + at(r, a, c, d, b) + at(r, a, d, b, c)).abs());
                        }
                    }
                }
            }
        }
        res
    }
}
