//! Dense assembly of field operators, generalized eigensolves, kernel
//! counting and principal symbols.
//!
//! Every second-order operator handled here has the form `∇† Gᵀ G ∇` for a
//! constant pointwise matrix `G` on `T* ⊗ S₀ᵖ` (frame coordinates), which is
//! what makes the per-mode oracles and the symbols cheap to evaluate.

mod eigen;
mod symbol;

pub use eigen::{
    confirm_counts, eigensolve, kernel_count, write_spectrum_csv, Eigen, KernelCount,
    KernelPolicy, SpectrumReport,
};
pub use symbol::{
    mode_kernel_oracle, symbol_at, symbol_eval, write_symbol_scan_csv, ModeOracle, SymbolKind,
    SymbolReport,
};

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fiber::Bundle;
use crate::fields::{nabla, nabla_adjoint, Field};
use crate::geometry::{GeometryCache, Grid};
use crate::gradients::PointwiseMaps;

/// Dense assembly refuses problems with more unknowns than this.
pub const DOF_CAP: usize = 20_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum OperatorKind {
    Identity,
    RoughLaplacian,
    /// `D₁†D₁`, kernel = trace-free conformal Killing tensors.
    ConformalKilling,
    /// `D₁†D₁ + δ†δ`, kernel = `ker D₁ ∩ ker δ`.
    Killing,
    /// `δ†δ` on `S₀ᵖ`, kernel = transverse trace-free tensors.
    TransverseTraceless,
    /// `D₂†D₂ + D₃†D₃`, kernel = trace-free Codazzi tensors.
    Codazzi,
    /// `D₁` itself (not square).
    D1,
    Custom,
}

impl OperatorKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::Identity => "identity",
            Self::RoughLaplacian => "rough_laplacian",
            Self::ConformalKilling => "conformal_killing",
            Self::Killing => "killing",
            Self::TransverseTraceless => "transverse_traceless",
            Self::Codazzi => "codazzi",
            Self::D1 => "d1",
            Self::Custom => "custom",
        }
    }
}

type ApplyFn<'a> = Box<dyn Fn(&Field) -> Result<Field> + Send + Sync + 'a>;

/// A named linear map between field spaces on one geometry.
pub struct OperatorHandle<'a> {
    pub name: String,
    pub kind: OperatorKind,
    pub domain: Bundle,
    pub codomain: Bundle,
    /// Declared self-adjoint in the weighted L² pairing.
    pub self_adjoint: bool,
    pub cache: &'a GeometryCache,
    apply: ApplyFn<'a>,
}

impl std::fmt::Debug for OperatorHandle<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("OperatorHandle")
            .field("name", &self.name)
            .field("domain", &self.domain)
            .field("codomain", &self.codomain)
            .finish()
    }
}

/// The stacked first-order map `G` with `op = ∇† Gᵀ G ∇`.
pub fn first_order_stack(maps: &PointwiseMaps, kind: OperatorKind) -> Result<DMatrix<f64>> {
    let stack = |a: &DMatrix<f64>, b: &DMatrix<f64>| {
        let mut m = DMatrix::zeros(a.nrows() + b.nrows(), a.ncols());
        m.rows_mut(0, a.nrows()).copy_from(a);
        m.rows_mut(a.nrows(), b.nrows()).copy_from(b);
        m
    };
    Ok(match kind {
        OperatorKind::RoughLaplacian => DMatrix::identity(maps.m1.ncols(), maps.m1.ncols()),
        OperatorKind::ConformalKilling | OperatorKind::D1 => maps.m1.clone(),
        OperatorKind::Killing => stack(&maps.m1, &maps.mdelta),
        OperatorKind::TransverseTraceless => maps.mdelta.clone(),
        OperatorKind::Codazzi => stack(&maps.m2, &maps.m3),
        other => {
            return Err(Error::InvalidArgument(format!(
                "{} has no first-order stack",
                other.name()
            )))
        }
    })
}

fn pointwise(mat: &DMatrix<f64>, x: &Field, out: Bundle) -> Field {
    let mut f = Field::zeros(x.n, out, x.npts);
    let (di, dout) = (x.dim(), f.dim());
    f.data
        .par_chunks_mut(dout)
        .zip(x.data.par_chunks(di))
        .for_each(|(o, v)| {
            let r = mat * DVector::from_column_slice(v);
            o.copy_from_slice(r.as_slice());
        });
    f
}

fn expect_bundle(phi: &Field, b: Bundle) -> Result<()> {
    if phi.bundle != b {
        return Err(Error::BundleMismatch {
            expected: b.label(),
            found: phi.bundle.label(),
        });
    }
    Ok(())
}

impl<'a> OperatorHandle<'a> {
    pub fn custom(
        cache: &'a GeometryCache,
        name: &str,
        domain: Bundle,
        codomain: Bundle,
        self_adjoint: bool,
        apply: impl Fn(&Field) -> Result<Field> + Send + Sync + 'a,
    ) -> Self {
        Self {
            name: name.to_string(),
            kind: OperatorKind::Custom,
            domain,
            codomain,
            self_adjoint,
            cache,
            apply: Box::new(apply),
        }
    }

    pub fn identity(cache: &'a GeometryCache, bundle: Bundle) -> Self {
        let mut h = Self::custom(cache, "identity", bundle, bundle, true, |f| Ok(f.clone()));
        h.kind = OperatorKind::Identity;
        h
    }

    /// `∇†∇` on trace-free rank-`p` fields.
    pub fn rough_laplacian(cache: &'a GeometryCache, p: usize) -> Result<Self> {
        Self::normal(cache, p, OperatorKind::RoughLaplacian)
    }

    /// `∇† Gᵀ G ∇` on `S₀ᵖ` for one of the normal-operator kinds.
    pub fn normal(cache: &'a GeometryCache, p: usize, kind: OperatorKind) -> Result<Self> {
        if kind == OperatorKind::D1 {
            return Self::d1(cache, p);
        }
        if p == 0 && kind != OperatorKind::RoughLaplacian {
            return Err(Error::InvalidArgument(format!("{} needs p >= 1", kind.name())));
        }
        let tf = Bundle::TraceFree(p);
        let gtg = if p == 0 {
            DMatrix::identity(cache.n(), cache.n())
        } else {
            let g = first_order_stack(&PointwiseMaps::new(cache.n(), p)?, kind)?;
            g.transpose() * g
        };
        let target = crate::fields::nabla_target(tf);
        let apply = move |phi: &Field| -> Result<Field> {
            expect_bundle(phi, tf)?;
            let z = pointwise(&gtg, &nabla(cache, phi), target);
            nabla_adjoint(cache, &z, tf)
        };
        Ok(Self {
            name: format!("{}_p{p}", kind.name()),
            kind,
            domain: tf,
            codomain: tf,
            self_adjoint: true,
            cache,
            apply: Box::new(apply),
        })
    }

    /// `D₁ : S₀ᵖ → S₀ᵖ⁺¹`.
    pub fn d1(cache: &'a GeometryCache, p: usize) -> Result<Self> {
        let m1 = PointwiseMaps::new(cache.n(), p)?.m1;
        let (tf, out) = (Bundle::TraceFree(p), Bundle::TraceFree(p + 1));
        let apply = move |phi: &Field| -> Result<Field> {
            expect_bundle(phi, tf)?;
            Ok(pointwise(&m1, &nabla(cache, phi), out))
        };
        Ok(Self {
            name: format!("d1_p{p}"),
            kind: OperatorKind::D1,
            domain: tf,
            codomain: out,
            self_adjoint: false,
            cache,
            apply: Box::new(apply),
        })
    }

    pub fn apply(&self, phi: &Field) -> Result<Field> {
        let out = (self.apply)(phi)?;
        expect_bundle(&out, self.codomain)?;
        Ok(out)
    }

    pub fn domain_dofs(&self) -> usize {
        self.cache.npts() * self.domain.dim(self.cache.n())
    }
}

/// Which trial functions span the discrete domain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DofBasis {
    /// One delta field per grid point and fiber component.
    Nodal,
    /// Real Fourier modes below the Nyquist wavenumber on every axis, tensored
    /// with the fiber basis. Both differentiation methods annihilate Nyquist
    /// modes, which would otherwise show up as spurious kernel.
    Fourier,
}

/// Integer wave vectors `k` with `|kₐ| < Nₐ/2`, one per `±k` pair, ordered by
/// `|k|²` then lexicographically. The zero vector comes first.
pub fn half_wave_vectors(sizes: &[usize]) -> Vec<Vec<i64>> {
    let n = sizes.len();
    let lim: Vec<i64> = sizes.iter().map(|&s| s as i64 / 2 - 1).collect();
    let mut all = Vec::new();
    let mut k = lim.iter().map(|l| -l).collect::<Vec<_>>();
    loop {
        let first = k.iter().find(|&&v| v != 0);
        if first.is_none_or(|&v| v > 0) {
            all.push(k.clone());
        }
        let mut a = n;
        loop {
            if a == 0 {
                all.sort_by_key(|k| (k.iter().map(|v| v * v).sum::<i64>(), k.clone()));
                return all;
            }
            a -= 1;
            if k[a] < lim[a] {
                k[a] += 1;
                break;
            }
            k[a] = -lim[a];
        }
    }
}

/// Euclidean-orthonormal real Fourier modes sampled on the grid, one column
/// per mode (`npts × Π(Nₐ − 1)`).
pub fn fourier_modes(grid: &Grid) -> DMatrix<f64> {
    let ks = half_wave_vectors(&grid.sizes);
    let np = grid.npts;
    let ncols = 2 * ks.len() - 1;
    let mut m = DMatrix::zeros(np, ncols);
    for pt in 0..np {
        let idx = grid.multi_index(pt);
        m[(pt, 0)] = 1.0 / (np as f64).sqrt();
        for (j, k) in ks.iter().enumerate().skip(1) {
            let phase: f64 = k
                .iter()
                .zip(&idx)
                .zip(&grid.sizes)
                .map(|((&ka, &ia), &na)| 2.0 * PI * (ka as f64) * (ia as f64) / na as f64)
                .sum();
            let s = (2.0 / np as f64).sqrt();
            m[(pt, 2 * j - 1)] = s * phase.cos();
            m[(pt, 2 * j)] = s * phase.sin();
        }
    }
    m
}

/// Trial basis `Q` as a dense `(npts·d) × dofs` matrix.
fn trial_basis(cache: &GeometryCache, d: usize, basis: DofBasis) -> Option<DMatrix<f64>> {
    match basis {
        DofBasis::Nodal => None,
        DofBasis::Fourier => {
            let modes = fourier_modes(&cache.grid);
            let mut q = DMatrix::zeros(cache.npts() * d, modes.ncols() * d);
            for m in 0..modes.ncols() {
                for pt in 0..cache.npts() {
                    for c in 0..d {
                        q[(pt * d + c, m * d + c)] = modes[(pt, m)];
                    }
                }
            }
            Some(q)
        }
    }
}

fn basis_dofs(cache: &GeometryCache, d: usize, basis: DofBasis) -> usize {
    match basis {
        DofBasis::Nodal => cache.npts() * d,
        DofBasis::Fourier => cache.grid.sizes.iter().map(|s| s - 1).product::<usize>() * d,
    }
}

/// The field with trial-space coefficients `coeffs`, e.g. an eigenvector.
pub fn expand_trial(cache: &GeometryCache, bundle: Bundle, basis: DofBasis, coeffs: &[f64]) -> Field {
    let d = bundle.dim(cache.n());
    let mut f = Field::zeros(cache.n(), bundle, cache.npts());
    match trial_basis(cache, d, basis) {
        None => f.data.copy_from_slice(coeffs),
        Some(q) => f.data.copy_from_slice((q * DVector::from_column_slice(coeffs)).as_slice()),
    }
    f
}

/// Raw nodal matrix of `apply`, codomain values × domain values.
pub fn assemble_matrix(op: &OperatorHandle, cache: &GeometryCache) -> Result<DMatrix<f64>> {
    apply_columns(op, cache, None)
}

fn apply_columns(
    op: &OperatorHandle,
    cache: &GeometryCache,
    q: Option<&DMatrix<f64>>,
) -> Result<DMatrix<f64>> {
    let n = cache.n();
    let din = op.domain.dim(n);
    let nrows = cache.npts() * op.codomain.dim(n);
    let ncols = q.map_or(cache.npts() * din, |q| q.ncols());
    if ncols > DOF_CAP {
        return Err(Error::TooManyDofs {
            operator: op.name.clone(),
            dofs: ncols,
            cap: DOF_CAP,
        });
    }
    let cols: Vec<Vec<f64>> = (0..ncols)
        .into_par_iter()
        .map(|j| {
            let mut f = Field::zeros(n, op.domain, cache.npts());
            match q {
                Some(q) => f.data.copy_from_slice(q.column(j).as_slice()),
                None => f.data[j] = 1.0,
            }
            op.apply(&f).map(|r| r.data)
        })
        .collect::<Result<_>>()?;
    let mut a = DMatrix::zeros(nrows, ncols);
    for (j, c) in cols.iter().enumerate() {
        a.column_mut(j).copy_from_slice(c);
    }
    Ok(a)
}

/// Stiffness and mass matrices `K = QᵀWAQ`, `M = QᵀWQ` of a square handle.
#[derive(Debug, Clone)]
pub struct Assembled {
    pub stiffness: DMatrix<f64>,
    pub mass: DMatrix<f64>,
    /// `max |K − Kᵀ| / max |K|` before symmetrization.
    pub asymmetry: f64,
    pub dofs: usize,
    pub basis: DofBasis,
}

fn weight_rows(cache: &GeometryCache, d: usize, a: &mut DMatrix<f64>) {
    for (pt, w) in cache.weights.iter().enumerate() {
        a.rows_mut(pt * d, d).scale_mut(*w);
    }
}

pub fn assemble(op: &OperatorHandle, cache: &GeometryCache, basis: DofBasis) -> Result<Assembled> {
    if op.domain != op.codomain {
        return Err(Error::InvalidArgument(format!(
            "{} is not square; use singular_values",
            op.name
        )));
    }
    let d = op.domain.dim(cache.n());
    let dofs = basis_dofs(cache, d, basis);
    if dofs > DOF_CAP {
        return Err(Error::TooManyDofs {
            operator: op.name.clone(),
            dofs,
            cap: DOF_CAP,
        });
    }
    let q = trial_basis(cache, d, basis);
    let mut wa = apply_columns(op, cache, q.as_ref())?;
    weight_rows(cache, d, &mut wa);
    let (mut k, m) = match &q {
        None => {
            let w: Vec<f64> = cache.weights.iter().flat_map(|&w| std::iter::repeat_n(w, d)).collect();
            (wa, DMatrix::from_diagonal(&DVector::from_vec(w)))
        }
        Some(q) => {
            let mut wq = q.clone();
            weight_rows(cache, d, &mut wq);
            (q.transpose() * wa, q.transpose() * wq)
        }
    };
    let scale = k.amax().max(1e-300);
    let asymmetry = (&k - k.transpose()).amax() / scale;
    if op.self_adjoint {
        log::debug!("{}: symmetrization defect {asymmetry:.3e}", op.name);
        k = (&k + k.transpose()) * 0.5;
    }
    Ok(Assembled {
        stiffness: k,
        mass: (&m + m.transpose()) * 0.5,
        asymmetry,
        dofs,
        basis,
    })
}

/// Singular values of the first-order map `φ ↦ G∇φ` between weighted L²
/// spaces, ascending, for `φ` in the chosen trial space.
///
/// Computed through a QR factorization of the weighted rectangular matrix and
/// a symmetric eigensolve of the Jordan–Wielandt matrix `[[0, R], [Rᵀ, 0]]`,
/// so small singular values are not squared.
pub fn singular_values(
    cache: &GeometryCache,
    p: usize,
    kind: OperatorKind,
    basis: DofBasis,
) -> Result<Vec<f64>> {
    let maps = PointwiseMaps::new(cache.n(), p)?;
    let g = first_order_stack(&maps, kind)?;
    let tf = Bundle::TraceFree(p);
    let d = tf.dim(cache.n());
    let dofs = basis_dofs(cache, d, basis);
    if dofs > DOF_CAP {
        return Err(Error::TooManyDofs {
            operator: format!("{}_p{p}", kind.name()),
            dofs,
            cap: DOF_CAP,
        });
    }
    let q = trial_basis(cache, d, basis);
    let rows = g.nrows();
    // nabla output lives in T*⊗S₀ᵖ; G maps it to `rows` components per point
    let cols: Vec<Vec<f64>> = (0..dofs)
        .into_par_iter()
        .map(|j| {
            let mut f = Field::zeros(cache.n(), tf, cache.npts());
            match &q {
                Some(q) => f.data.copy_from_slice(q.column(j).as_slice()),
                None => f.data[j] = 1.0,
            }
            let y = nabla(cache, &f);
            let dy = y.dim();
            let mut out = vec![0.0; cache.npts() * rows];
            for pt in 0..cache.npts() {
                let r = &g * DVector::from_column_slice(y.at(pt));
                let s = cache.weights[pt].sqrt();
                for (o, v) in out[pt * rows..(pt + 1) * rows].iter_mut().zip(r.iter()) {
                    *o = s * v;
                }
            }
            debug_assert_eq!(dy, g.ncols());
            out
        })
        .collect();
    let mut b = DMatrix::zeros(cache.npts() * rows, dofs);
    for (j, c) in cols.iter().enumerate() {
        b.column_mut(j).copy_from_slice(c);
    }
    // whiten the domain: B ← B L⁻ᵀ with M = L Lᵀ
    let mut m = match &q {
        None => DMatrix::from_diagonal(&DVector::from_iterator(
            dofs,
            cache.weights.iter().flat_map(|&w| std::iter::repeat_n(w, d)),
        )),
        Some(q) => {
            let mut wq = q.clone();
            weight_rows(cache, d, &mut wq);
            q.transpose() * wq
        }
    };
    m = (&m + m.transpose()) * 0.5;
    let l = m
        .cholesky()
        .ok_or_else(|| Error::InvalidArgument("mass matrix not positive definite".into()))?
        .l();
    let bt = l
        .solve_lower_triangular(&b.transpose())
        .ok_or_else(|| Error::InvalidArgument("singular mass factor".into()))?;
    let b = bt.transpose();
    let r = if b.nrows() > b.ncols() { b.qr().r() } else { b };
    let (nr, nc) = (r.nrows(), r.ncols());
    let mut jw = DMatrix::zeros(nr + nc, nr + nc);
    jw.view_mut((0, nr), (nr, nc)).copy_from(&r);
    jw.view_mut((nr, 0), (nc, nr)).copy_from(&r.transpose());
    let eig = jw.symmetric_eigen();
    // eigenvalues are ±σ for each singular value of R plus |nr − nc|
    // structural zeros
    let mut abs: Vec<f64> = eig.eigenvalues.iter().map(|v| v.abs()).collect();
    abs.sort_by(f64::total_cmp);
    let extra = nr.abs_diff(nc);
    let mut out = Vec::with_capacity(nc);
    let mut i = extra;
    while out.len() < nc && i < abs.len() {
        out.push(abs[i]);
        i += 2;
    }
    Ok(out)
}

#[cfg(test)]
mod tests;
