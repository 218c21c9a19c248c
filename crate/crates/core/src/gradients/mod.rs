//! The three Stein–Weiss gradients of `φ ∈ S₀ᵖ` and the second-order
//! operators built from them.
//!
//! Everything is expressed through `y = ∇φ ∈ T* ⊗ S₀ᵖ` (orthonormal-frame
//! coordinates). Each gradient is a fixed pointwise linear map applied to `y`;
//! the maps are assembled once from the closed-form expressions and checked
//! against the irreducible projectors of [`crate::fiber`].

mod weitzenbock;

pub use weitzenbock::{IdentityResiduals, SteinWeiss, Weitzenbock};

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fiber::{
    build_projectors, npow, unflatten, Algebra, Bundle, FiberProjectors, MetricAtPoint,
};
use crate::fields::{l2_inner, nabla, nabla_adjoint, Field};
use crate::geometry::GeometryCache;

/// Coefficient of `Sym(g ⊗ δφ)` in `D₁`.
pub fn d1_kappa(n: usize, p: usize) -> f64 {
    p as f64 / (n + 2 * p - 2) as f64
}

/// Overall factor of `D₂`.
pub fn d2_prefactor(n: usize, p: usize) -> f64 {
    let (n, p) = (n as f64, p as f64);
    if p == 1.0 {
        -1.0 / n
    } else {
        -(n + 2.0 * (p - 2.0)) / ((n + 2.0 * (p - 1.0)) * (n + p - 3.0))
    }
}

/// Coefficient of `δ*δ` in `D₁*D₁`.
pub fn sw_coefficient(n: usize, p: usize) -> f64 {
    2.0 * p as f64 / ((p + 1) as f64 * (n + 2 * p - 2) as f64)
}

/// The `4/((p+1)(n+2(p−1)))` variant of [`sw_coefficient`], kept for comparison.
pub fn sw_coefficient_alt(n: usize, p: usize) -> f64 {
    4.0 / ((p + 1) as f64 * (n + 2 * p - 2) as f64)
}

/// `p(n+2(p−2))/(n+2(p−1))`, the `δ*δ` weight in the Weitzenböck formulas.
pub fn weitzenbock_c(n: usize, p: usize) -> f64 {
    let (nf, pf) = (n as f64, p as f64);
    pf * (nf + 2.0 * (pf - 2.0)) / (nf + 2.0 * (pf - 1.0))
}

/// Pointwise algebraic checks of the closed-form gradients.
#[derive(Debug, Clone, Serialize)]
pub struct ConventionReport {
    /// Largest trace of `δ*φ + κ Sym(g⊗δφ)` before projection.
    pub d1_trace: f64,
    /// Largest trace when `g ⊙ ψ` is the cyclic `(p+1)`-term average with
    /// weight `2/(n+2(p−1))`.
    pub d1_cyclic_trace: f64,
    /// Largest difference between the cyclic variant and `D₁`.
    pub d1_cyclic_gap: f64,
    /// `‖E·M₁ − Π_A‖`, `‖M₂ − Π_B‖`, `‖M₃ − Π_C‖` (max entry).
    pub oracle_a: f64,
    pub oracle_b: f64,
    pub oracle_c: f64,
    /// Least-squares `s` in `Π_B ≈ s·M₂` and the relative misfit.
    pub d2_fit_scale: f64,
    pub d2_fit_residual: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct GradientDiagnostics {
    pub d1_max_trace: f64,
    pub reconstruction: f64,
    /// Pairwise `|⟨Dᵢφ, Dⱼφ⟩| / ‖∇φ‖²`.
    pub orth_12: f64,
    pub orth_13: f64,
    pub orth_23: f64,
    pub oracle_a: f64,
    pub oracle_b: f64,
    pub oracle_c: f64,
}

#[derive(Debug, Clone)]
pub struct GradientOutput {
    pub d1: Field,
    pub d2: Field,
    pub d3: Field,
    pub diagnostics: GradientDiagnostics,
}

/// The gradients as constant matrices acting on `∇φ` in orthonormal-frame
/// coordinates of `T* ⊗ S₀ᵖ`.
#[derive(Debug, Clone)]
pub struct PointwiseMaps {
    pub n: usize,
    pub p: usize,
    /// `S₀ᵖ⁺¹ ← T*⊗S₀ᵖ`.
    pub m1: DMatrix<f64>,
    /// `T*⊗S₀ᵖ ← S₀ᵖ⁺¹` inclusion.
    pub embed: DMatrix<f64>,
    pub m2: DMatrix<f64>,
    pub m3: DMatrix<f64>,
    /// `S₀ᵖ⁻¹ ← T*⊗S₀ᵖ`, minus the trace over the first two slots (`δ`).
    pub mdelta: DMatrix<f64>,
    pub projectors: FiberProjectors,
    pub convention: ConventionReport,
}

/// Gradients of rank-`p` trace-free fields on one geometry.
pub struct Gradients<'a> {
    pub cache: &'a GeometryCache,
    pub p: usize,
    pub maps: PointwiseMaps,
}

impl std::fmt::Debug for Gradients<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Gradients")
            .field("p", &self.p)
            .field("convention", &self.maps.convention)
            .finish()
    }
}

fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0, |a, v| a.max(v.abs()))
}

/// `1/(p+1) Σ_s g_{i_s i_{s+1}} ψ_{i_{s+2} … i_{s+p}}`, indices mod `p+1`.
fn cyclic_insert(n: usize, p: usize, psi: &[f64]) -> Vec<f64> {
    let r = p + 1;
    let mut out = vec![0.0; npow(n, r)];
    let mut idx = vec![0; r];
    let mut rest = vec![0; p - 1];
    for (f, o) in out.iter_mut().enumerate() {
        unflatten(f, n, r, &mut idx);
        let mut acc = 0.0;
        for s in 0..r {
            if idx[s] != idx[(s + 1) % r] {
                continue;
            }
            for (t, slot) in rest.iter_mut().enumerate() {
                *slot = idx[(s + 2 + t) % r];
            }
            acc += psi[crate::fiber::flatten(&rest, n)];
        }
        *o = acc / r as f64;
    }
    out
}

/// `Σ_{a≥1} g_{i₀ i_a} ψ_rest − c Σ_{1≤a<b} g_{i_a i_b} ψ_{i₀ rest}`, with the
/// whole expression scaled by `pref`.
fn d2_pointwise(n: usize, p: usize, psi: &[f64]) -> Vec<f64> {
    let r = p + 1;
    let c = if p >= 2 {
        2.0 / (n + 2 * (p - 2)) as f64
    } else {
        0.0
    };
    let pref = d2_prefactor(n, p);
    let mut out = vec![0.0; npow(n, r)];
    let mut idx = vec![0; r];
    let mut rest = Vec::with_capacity(p);
    for (f, o) in out.iter_mut().enumerate() {
        unflatten(f, n, r, &mut idx);
        let mut acc = 0.0;
        for a in 1..=p {
            if idx[0] == idx[a] {
                rest.clear();
                rest.extend((1..=p).filter(|&s| s != a).map(|s| idx[s]));
                acc += psi[crate::fiber::flatten(&rest, n)];
            }
        }
        for a in 1..=p {
            for b in a + 1..=p {
                if idx[a] == idx[b] {
                    rest.clear();
                    rest.push(idx[0]);
                    rest.extend((1..=p).filter(|&s| s != a && s != b).map(|s| idx[s]));
                    acc -= c * psi[crate::fiber::flatten(&rest, n)];
                }
            }
        }
        *o = pref * acc;
    }
    out
}

impl PointwiseMaps {
    pub fn new(n: usize, p: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidArgument("gradients need n >= 2".into()));
        }
        if p < 1 {
            return Err(Error::InvalidArgument("gradients need p >= 1".into()));
        }
        let alg = Algebra::new(n);
        let cot = Bundle::CotTraceFree(p);
        let b_cot = alg.basis(cot);
        let b_tf1 = alg.basis(Bundle::TraceFree(p + 1));
        let m = b_cot.dim;
        let len1 = npow(n, p + 1);
        let len_m = npow(n, p - 1);
        let kappa = d1_kappa(n, p);
        let lit = 2.0 / (n + 2 * p - 2) as f64;

        let mut m1 = DMatrix::zeros(b_tf1.dim, m);
        let mut m2 = DMatrix::zeros(m, m);
        let (mut d1_trace, mut cyc_trace, mut cyc_gap, mut scale) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
        let mut y = vec![0.0; len1];
        let mut s = vec![0.0; len1];
        let mut t = vec![0.0; len_m];
        let mut mi = vec![0.0; len1];
        let mut tr = vec![0.0; npow(n, p - 1)];
        let mut col1 = vec![0.0; b_tf1.dim];
        let mut col2 = vec![0.0; m];
        for j in 0..m {
            let mut e = vec![0.0; m];
            e[j] = 1.0;
            b_cot.expand(&e, &mut y);
            alg.sym(p + 1, &y, &mut s);
            alg.trace01(p + 1, &y, &mut t);
            // δφ = −tr y
            let psi: Vec<f64> = t.iter().map(|v| -v).collect();
            alg.metric_insert(p - 1, &psi, &mut mi);
            let d1_full: Vec<f64> = s.iter().zip(&mi).map(|(a, b)| a + kappa * b).collect();
            alg.trace01(p + 1, &d1_full, &mut tr);
            d1_trace = tr.iter().fold(d1_trace, |acc, v| acc.max(v.abs()));
            scale = s.iter().fold(scale, |acc, v| acc.max(v.abs()));

            let cyc = cyclic_insert(n, p, &psi);
            let lit_full: Vec<f64> = s.iter().zip(&cyc).map(|(a, b)| a + lit * b).collect();
            alg.trace01(p + 1, &lit_full, &mut tr);
            cyc_trace = tr.iter().fold(cyc_trace, |acc, v| acc.max(v.abs()));
            cyc_gap = lit_full
                .iter()
                .zip(&d1_full)
                .fold(cyc_gap, |acc, (a, b)| acc.max((a - b).abs()));

            b_tf1.project(&d1_full, &mut col1);
            m1.set_column(j, &nalgebra::DVector::from_column_slice(&col1));
            b_cot.project(&d2_pointwise(n, p, &psi), &mut col2);
            m2.set_column(j, &nalgebra::DVector::from_column_slice(&col2));
        }
        let b_low = alg.basis(Bundle::TraceFree(p - 1));
        let mut mdelta = DMatrix::zeros(b_low.dim, m);
        let mut low = vec![0.0; b_low.dim];
        for j in 0..m {
            let mut e = vec![0.0; m];
            e[j] = 1.0;
            b_cot.expand(&e, &mut y);
            alg.trace01(p + 1, &y, &mut t);
            t.iter_mut().for_each(|v| *v = -*v);
            b_low.project(&t, &mut low);
            mdelta.set_column(j, &nalgebra::DVector::from_column_slice(&low));
        }
        let embed = (*alg.transfer(Bundle::TraceFree(p + 1), cot)).clone();
        let m3 = DMatrix::identity(m, m) - &embed * &m1 - &m2;

        let projectors = build_projectors(n, p, &MetricAtPoint::identity(n))?;
        let fit = m2.dot(&projectors.pi_b) / m2.norm_squared().max(1e-300);
        let convention = ConventionReport {
            d1_trace: d1_trace / scale.max(1e-300),
            d1_cyclic_trace: cyc_trace / scale.max(1e-300),
            d1_cyclic_gap: cyc_gap / scale.max(1e-300),
            oracle_a: max_abs(&(&embed * &m1 - &projectors.pi_a)),
            oracle_b: max_abs(&(&m2 - &projectors.pi_b)),
            oracle_c: max_abs(&(&m3 - &projectors.pi_c)),
            d2_fit_scale: fit,
            d2_fit_residual: (&projectors.pi_b - &m2 * fit).norm() / projectors.pi_b.norm(),
        };
        if convention.d1_trace > 1e-6 {
            return Err(Error::ConventionBreach {
                check: "trace of D1",
                residual: convention.d1_trace,
                limit: 1e-6,
            });
        }
        Ok(Self {
            n,
            p,
            m1,
            embed,
            m2,
            m3,
            mdelta,
            projectors,
            convention,
        })
    }

    /// `ξ ⊗ ·` from `S₀ᵖ` into `T* ⊗ S₀ᵖ` for a frame covector `ξ`.
    pub fn tensor_with(&self, xi: &[f64]) -> DMatrix<f64> {
        let alg = Algebra::new(self.n);
        let src = alg.basis(Bundle::TraceFree(self.p));
        let dst = alg.basis(Bundle::CotTraceFree(self.p));
        let len = npow(self.n, self.p);
        let mut full = vec![0.0; len];
        let mut big = vec![0.0; self.n * len];
        let mut col = vec![0.0; dst.dim];
        let mut out = DMatrix::zeros(dst.dim, src.dim);
        for j in 0..src.dim {
            let mut e = vec![0.0; src.dim];
            e[j] = 1.0;
            src.expand(&e, &mut full);
            for (a, x) in xi.iter().enumerate() {
                for (k, v) in full.iter().enumerate() {
                    big[a * len + k] = x * v;
                }
            }
            dst.project(&big, &mut col);
            out.set_column(j, &nalgebra::DVector::from_column_slice(&col));
        }
        out
    }
}

impl<'a> Gradients<'a> {
    pub fn new(cache: &'a GeometryCache, p: usize) -> Result<Self> {
        Ok(Self {
            cache,
            p,
            maps: PointwiseMaps::new(cache.n(), p)?,
        })
    }


    /// Scale `D₂` by `factor` and refit `D₃ = ∇ − D₁ − D₂`, which breaks the
    /// orthogonality of the split. Negative-control fixture.
    pub fn corrupt_d2(&mut self, factor: f64) {
        let m = self.maps.m2.nrows();
        self.maps.m2 *= factor;
        self.maps.m3 = DMatrix::identity(m, m) - &self.maps.embed * &self.maps.m1 - &self.maps.m2;
    }

    pub fn n(&self) -> usize {
        self.cache.n()
    }

    fn check_input(&self, phi: &Field) -> Result<()> {
        if phi.bundle != Bundle::TraceFree(self.p) {
            return Err(Error::BundleMismatch {
                expected: Bundle::TraceFree(self.p).label(),
                found: phi.bundle.label(),
            });
        }
        Ok(())
    }

    fn apply(&self, mat: &DMatrix<f64>, x: &Field, out: Bundle) -> Field {
        let mut f = Field::zeros_on(self.cache, out);
        let (d_in, d_out) = (x.dim(), f.dim());
        assert_eq!((mat.nrows(), mat.ncols()), (d_out, d_in), "pointwise map shape");
        let rows = mat.transpose();
        let rows = rows.as_slice();
        f.data
            .par_chunks_mut(d_out)
            .zip(x.data.par_chunks(d_in))
            .for_each(|(o, v)| {
                for (oi, row) in o.iter_mut().zip(rows.chunks(d_in)) {
                    *oi = row.iter().zip(v).map(|(a, b)| a * b).sum();
                }
            });
        f
    }

    fn cot(&self) -> Bundle {
        Bundle::CotTraceFree(self.p)
    }

    pub fn d1_from_nabla(&self, y: &Field) -> Field {
        self.apply(&self.maps.m1, y, Bundle::TraceFree(self.p + 1))
    }

    pub fn d2_from_nabla(&self, y: &Field) -> Field {
        self.apply(&self.maps.m2, y, self.cot())
    }

    pub fn d3_from_nabla(&self, y: &Field) -> Field {
        self.apply(&self.maps.m3, y, self.cot())
    }

    /// `D₁φ = δ*φ + κ Sym(g ⊗ δφ)`, a section of `S₀ᵖ⁺¹`.
    pub fn d1(&self, phi: &Field) -> Result<Field> {
        self.check_input(phi)?;
        Ok(self.d1_from_nabla(&nabla(self.cache, phi)))
    }

    pub fn d2(&self, phi: &Field) -> Result<Field> {
        self.check_input(phi)?;
        Ok(self.d2_from_nabla(&nabla(self.cache, phi)))
    }

    /// `D₃φ = ∇φ − D₁φ − D₂φ`.
    pub fn d3(&self, phi: &Field) -> Result<Field> {
        self.check_input(phi)?;
        Ok(self.d3_from_nabla(&nabla(self.cache, phi)))
    }

    /// `D₁φ` seen inside `T* ⊗ S₀ᵖ`.
    pub fn embed_d1(&self, d1: &Field) -> Field {
        self.apply(&self.maps.embed, d1, self.cot())
    }

    pub fn decompose(&self, phi: &Field) -> Result<GradientOutput> {
        self.check_input(phi)?;
        let c = self.cache;
        let y = nabla(c, phi);
        let d1 = self.d1_from_nabla(&y);
        let d2 = self.d2_from_nabla(&y);
        let d3 = self.d3_from_nabla(&y);
        let e1 = self.embed_d1(&d1);
        let scale = y.max_abs().max(1e-300);
        let recon = y.axpy(-1.0, &e1).axpy(-1.0, &d2).axpy(-1.0, &d3).max_abs() / scale;
        let energy = l2_inner(c, &y, &y)?.max(1e-300);
        let cos = |a: &Field, b: &Field| -> Result<f64> { Ok(l2_inner(c, a, b)?.abs() / energy) };
        let pa = self.apply(&self.maps.projectors.pi_a, &y, self.cot());
        let pb = self.apply(&self.maps.projectors.pi_b, &y, self.cot());
        let pc = self.apply(&self.maps.projectors.pi_c, &y, self.cot());
        let diagnostics = GradientDiagnostics {
            d1_max_trace: d1.max_trace(c),
            reconstruction: recon,
            orth_12: cos(&e1, &d2)?,
            orth_13: cos(&e1, &d3)?,
            orth_23: cos(&d2, &d3)?,
            oracle_a: e1.axpy(-1.0, &pa).max_abs() / scale,
            oracle_b: d2.axpy(-1.0, &pb).max_abs() / scale,
            oracle_c: d3.axpy(-1.0, &pc).max_abs() / scale,
        };
        Ok(GradientOutput {
            d1,
            d2,
            d3,
            diagnostics,
        })
    }

    /// Weighted adjoint of `D₁`: `S₀ᵖ⁺¹ → S₀ᵖ`.
    pub fn d1_adjoint(&self, psi: &Field) -> Result<Field> {
        let y = self.apply(&self.maps.m1.transpose(), psi, self.cot());
        nabla_adjoint(self.cache, &y, Bundle::TraceFree(self.p))
    }

    pub fn d2_adjoint(&self, psi: &Field) -> Result<Field> {
        let y = self.apply(&self.maps.m2.transpose(), psi, self.cot());
        nabla_adjoint(self.cache, &y, Bundle::TraceFree(self.p))
    }

    pub fn d3_adjoint(&self, psi: &Field) -> Result<Field> {
        let y = self.apply(&self.maps.m3.transpose(), psi, self.cot());
        nabla_adjoint(self.cache, &y, Bundle::TraceFree(self.p))
    }

    /// `Dₖ†Dₖ φ` for `k = 1, 2, 3` through the discrete adjoint.
    pub fn normal_operator(&self, k: usize, phi: &Field) -> Result<Field> {
        self.check_input(phi)?;
        let y = nabla(self.cache, phi);
        let mat = match k {
            1 => self.maps.m1.transpose() * &self.maps.m1,
            2 => self.maps.m2.transpose() * &self.maps.m2,
            3 => self.maps.m3.transpose() * &self.maps.m3,
            _ => return Err(Error::InvalidArgument(format!("no gradient D{k}"))),
        };
        let z = self.apply(&mat, &y, self.cot());
        nabla_adjoint(self.cache, &z, Bundle::TraceFree(self.p))
    }
}
