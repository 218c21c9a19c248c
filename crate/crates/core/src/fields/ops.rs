use rayon::prelude::*;

use super::{all_slots, all_slots_with, Field};
use crate::error::{Error, Result};
use crate::fiber::{npow, Bundle};
use crate::geometry::GeometryCache;

/// Bundle receiving `∇φ` when `φ` lives in `b`.
pub fn nabla_target(b: Bundle) -> Bundle {
    match b {
        Bundle::TraceFree(p) => Bundle::CotTraceFree(p),
        other => Bundle::Full(other.rank() + 1),
    }
}

fn div_target(b: Bundle) -> Bundle {
    match b {
        Bundle::TraceFree(p) => Bundle::TraceFree(p - 1),
        Bundle::Sym(r) => Bundle::Sym(r - 1),
        Bundle::Full(r) => Bundle::Full(r - 1),
        Bundle::CotTraceFree(p) => Bundle::TraceFree(p),
    }
}

/// Visit `(a, j, rest, base, stride)` for every slot `a` of a rank-`r` index
/// `rest` whose slot value is `j`; `base` is `rest` with that slot zeroed.
fn for_each_slot(n: usize, r: usize, mut f: impl FnMut(usize, usize, usize, usize)) {
    let len = npow(n, r);
    for a in 0..r {
        let stride = npow(n, r - 1 - a);
        for outer in (0..len).step_by(n * stride) {
            for j in 0..n {
                for inner in 0..stride {
                    let base = outer + inner;
                    f(j, base + j * stride, base, stride);
                }
            }
        }
    }
}

/// `t[i, …] += s Σ_a Γ^k_{i j_a} x[… k …]`, `x` of rank `r`, `t` of rank `r + 1`.
fn christoffel_apply(gam: &[f64], n: usize, r: usize, x: &[f64], t: &mut [f64], s: f64) {
    let len = npow(n, r);
    for i in 0..n {
        let ti = &mut t[i * len..(i + 1) * len];
        for_each_slot(n, r, |j, rest, base, stride| {
            let mut acc = 0.0;
            for k in 0..n {
                acc += gam[(k * n + i) * n + j] * x[base + k * stride];
            }
            ti[rest] += s * acc;
        });
    }
}

/// Transpose of [`christoffel_apply`]: `t += s Cᵀ y`.
fn christoffel_apply_t(gam: &[f64], n: usize, r: usize, y: &[f64], t: &mut [f64], s: f64) {
    let len = npow(n, r);
    for i in 0..n {
        let yi = &y[i * len..(i + 1) * len];
        for_each_slot(n, r, |j, rest, base, stride| {
            let yv = s * yi[rest];
            for k in 0..n {
                t[base + k * stride] += gam[(k * n + i) * n + j] * yv;
            }
        });
    }
}

fn gather(pm: &[f64], stride: usize, c: usize, npts: usize) -> Vec<f64> {
    (0..npts).map(|pt| pm[pt * stride + c]).collect()
}

/// Covariant derivative projected onto `target` (rank `r + 1`); the derivative
/// slot comes first.
pub fn nabla_to(cache: &GeometryCache, phi: &Field, target: Bundle) -> Field {
    let n = cache.n();
    let r = phi.rank();
    assert_eq!(target.rank(), r + 1, "nabla target rank");
    let len = npow(n, r);
    let npts = cache.npts();
    let src = cache.algebra.basis(phi.bundle);
    let tgt = cache.algebra.basis(target);

    let mut coord = vec![0.0; npts * len];
    coord.par_chunks_mut(len).enumerate().for_each_init(
        || (vec![0.0; len], vec![0.0; len]),
        |(t, tmp), (pt, c)| {
            src.expand(phi.at(pt), t);
            all_slots_with(t, tmp, n, r, cache.frame_at(pt), true);
            c.copy_from_slice(t);
        },
    );
    let deriv: Vec<Vec<f64>> = (0..n * len)
        .into_par_iter()
        .map(|k| cache.diff.diffed(k / len, &gather(&coord, len, k % len, npts)))
        .collect();

    let mut out = Field::zeros_on(cache, target);
    let d = out.dim();
    out.data.par_chunks_mut(d).enumerate().for_each_init(
        || (vec![0.0; n * len], vec![0.0; n * len]),
        |(t, tmp), (pt, o)| {
            for (tv, v) in t.iter_mut().zip(&deriv) {
                *tv = v[pt];
            }
            let x = &coord[pt * len..(pt + 1) * len];
            christoffel_apply(cache.christoffel_at(pt), n, r, x, t, -1.0);
            all_slots_with(t, tmp, n, r + 1, cache.frame_inv_at(pt), true);
            tgt.project(t, o);
        },
    );
    out
}

/// `∇φ` in [`nabla_target`] of the input bundle.
pub fn nabla(cache: &GeometryCache, phi: &Field) -> Field {
    nabla_to(cache, phi, nabla_target(phi.bundle))
}

/// Exact matrix transpose of [`nabla`] (unweighted Euclidean pairing of the
/// coordinate arrays).
pub fn nabla_transpose(cache: &GeometryCache, psi: &Field, source: Bundle) -> Result<Field> {
    let expected = nabla_target(source);
    if psi.bundle != expected {
        return Err(Error::BundleMismatch {
            expected: expected.label(),
            found: psi.bundle.label(),
        });
    }
    let n = cache.n();
    let r = source.rank();
    let len = npow(n, r);
    let len1 = n * len;
    let npts = cache.npts();
    let src = cache.algebra.basis(source);
    let tgt = cache.algebra.basis(expected);

    let mut s = vec![0.0; npts * len1];
    s.par_chunks_mut(len1).enumerate().for_each(|(pt, c)| {
        tgt.expand(psi.at(pt), c);
        let mut t = c.to_vec();
        all_slots(&mut t, n, r + 1, cache.frame_inv_at(pt), false);
        c.copy_from_slice(&t);
    });
    // Dᵀ = −D for both discretizations
    let acc: Vec<Vec<f64>> = (0..len)
        .into_par_iter()
        .map(|c| {
            let mut sum = vec![0.0; npts];
            for i in 0..n {
                let du = cache.diff.diffed(i, &gather(&s, len1, i * len + c, npts));
                sum.iter_mut().zip(&du).for_each(|(a, b)| *a -= b);
            }
            sum
        })
        .collect();

    let mut out = Field::zeros_on(cache, source);
    let d = out.dim();
    out.data.par_chunks_mut(d).enumerate().for_each(|(pt, o)| {
        let mut t: Vec<f64> = acc.iter().map(|v| v[pt]).collect();
        let y = &s[pt * len1..(pt + 1) * len1];
        christoffel_apply_t(cache.christoffel_at(pt), n, r, y, &mut t, -1.0);
        all_slots(&mut t, n, r, cache.frame_at(pt), false);
        src.project(&t, o);
    });
    Ok(out)
}

/// Adjoint of [`nabla`] for the weighted L² pairing: `W⁻¹ ∇ᵀ W`.
pub fn nabla_adjoint(cache: &GeometryCache, psi: &Field, source: Bundle) -> Result<Field> {
    let inv: Vec<f64> = cache.weights.iter().map(|w| 1.0 / w).collect();
    Ok(nabla_transpose(cache, &psi.mul_scalar(&cache.weights), source)?.mul_scalar(&inv))
}

fn contract_first_pair(cache: &GeometryCache, full: &Field, target: Bundle) -> (Field, f64) {
    let r = full.rank();
    let alg = &cache.algebra;
    let basis = alg.basis(target);
    let mut out = Field::zeros_on(cache, target);
    let d = out.dim();
    let mut tr = vec![0.0; npow(cache.n(), r - 2)];
    let mut back = tr.clone();
    let mut resid: f64 = 0.0;
    for pt in 0..cache.npts() {
        alg.trace01(r, &full.frame_full(cache, pt), &mut tr);
        tr.iter_mut().for_each(|v| *v = -*v);
        let o = &mut out.data[pt * d..(pt + 1) * d];
        basis.project(&tr, o);
        basis.expand(o, &mut back);
        resid = tr.iter().zip(&back).fold(resid, |m, (a, b)| m.max((a - b).abs()));
    }
    (out, resid)
}

/// `δφ = −g^{i₀i₁} ∇_{i₀} φ_{i₁ …}`.
pub fn divergence(cache: &GeometryCache, phi: &Field) -> Field {
    divergence_with_residual(cache, phi).0
}

/// Largest pointwise component of `δφ` discarded when projecting onto the
/// target bundle (for trace-free input this is the trace of `δφ`).
pub fn divergence_trace_residual(cache: &GeometryCache, phi: &Field) -> f64 {
    divergence_with_residual(cache, phi).1
}

fn divergence_with_residual(cache: &GeometryCache, phi: &Field) -> (Field, f64) {
    assert!(phi.rank() >= 1, "divergence needs rank >= 1");
    let full = nabla_to(cache, phi, Bundle::Full(phi.rank() + 1));
    contract_first_pair(cache, &full, div_target(phi.bundle))
}

/// `δ*φ = Sym ∇φ`, a section of `Sᵖ⁺¹`.
pub fn delta_star(cache: &GeometryCache, phi: &Field) -> Field {
    let r = phi.rank();
    let n = cache.n();
    let full = nabla_to(cache, phi, Bundle::Full(r + 1));
    let basis = cache.algebra.basis(Bundle::Sym(r + 1));
    let mut out = Field::zeros_on(cache, Bundle::Sym(r + 1));
    let d = out.dim();
    let mut s = vec![0.0; npow(n, r + 1)];
    for pt in 0..cache.npts() {
        cache.algebra.sym(r + 1, full.at(pt), &mut s);
        basis.project(&s, &mut out.data[pt * d..(pt + 1) * d]);
    }
    out
}

#[derive(Debug, Clone)]
pub struct RoughLaplacian {
    /// `∇†∇φ` with the exact discrete adjoint.
    pub field: Field,
    /// Max deviation from `−tr ∇²φ`, relative to `max |field|` (floored at 1).
    pub analytic_residual: f64,
}

/// `∇*∇φ` through the exact discrete adjoint, cross-checked against the
/// analytic trace of the second covariant derivative.
pub fn rough_laplacian(cache: &GeometryCache, phi: &Field) -> RoughLaplacian {
    let field = nabla_adjoint(cache, &nabla(cache, phi), phi.bundle)
        .expect("nabla output bundle matches by construction");
    let b = rough_laplacian_analytic(cache, phi);
    let diff = field.axpy(-1.0, &b).max_abs();
    RoughLaplacian {
        analytic_residual: diff / field.max_abs().max(1.0),
        field,
    }
}

/// `−g^{ij} ∇_i ∇_j φ`.
pub fn rough_laplacian_analytic(cache: &GeometryCache, phi: &Field) -> Field {
    let second = nabla(cache, &nabla(cache, phi));
    let (lap, _) = contract_first_pair(cache, &second, Bundle::Full(phi.rank()));
    lap.transfer(cache, phi.bundle)
}
