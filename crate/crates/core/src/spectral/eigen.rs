use std::path::Path;

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};

/// Ascending eigenpairs of `K v = λ M v`.
#[derive(Debug, Clone)]
pub struct Eigen {
    pub values: Vec<f64>,
    /// Columns are `M`-orthonormal eigenvectors.
    pub vectors: DMatrix<f64>,
    /// `‖Kv − λMv‖ / (‖K‖_F ‖v‖)` per returned pair.
    pub residuals: Vec<f64>,
    /// `max |VᵀMV − I|`.
    pub orthonormality: f64,
}

/// Generalized symmetric eigensolve through the Cholesky factor of `M`.
///
/// `count` limits how many of the smallest pairs are returned (all if `None`).
pub fn eigensolve(k: &DMatrix<f64>, m: &DMatrix<f64>, count: Option<usize>) -> Result<Eigen> {
    let dim = k.nrows();
    if k.ncols() != dim || m.shape() != (dim, dim) {
        return Err(Error::InvalidArgument("eigensolve needs square matrices of equal size".into()));
    }
    let l = m
        .clone()
        .cholesky()
        .ok_or_else(|| Error::InvalidArgument("mass matrix is not positive definite".into()))?
        .l();
    let singular = || Error::InvalidArgument("singular mass factor".into());
    // C = L⁻¹ K L⁻ᵀ
    let x = l.solve_lower_triangular(k).ok_or_else(singular)?;
    let c = l.solve_lower_triangular(&x.transpose()).ok_or_else(singular)?;
    let c = (&c + c.transpose()) * 0.5;
    let eig = c.symmetric_eigen();
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let keep = count.unwrap_or(dim).min(dim);
    let u = DMatrix::from_fn(dim, keep, |i, j| eig.eigenvectors[(i, order[j])]);
    let vectors = l.transpose().solve_upper_triangular(&u).ok_or_else(singular)?;
    let values: Vec<f64> = order[..keep].iter().map(|&i| eig.eigenvalues[i]).collect();
    let knorm = k.norm().max(1e-300);
    let kv = k * &vectors;
    let mv = m * &vectors;
    let residuals: Vec<f64> = (0..keep)
        .map(|j| {
            let r = kv.column(j) - mv.column(j) * values[j];
            r.norm() / (knorm * vectors.column(j).norm().max(1e-300))
        })
        .collect();
    let gram = vectors.transpose() * &mv;
    let orthonormality = (gram - DMatrix::identity(keep, keep)).amax();
    let worst = residuals.iter().cloned().fold(0.0, f64::max);
    if worst > 1e-8 {
        return Err(Error::NoConvergence { residual: worst });
    }
    Ok(Eigen {
        values,
        vectors,
        residuals,
        orthonormality,
    })
}

/// Thresholds for deciding which eigenvalues count as kernel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KernelPolicy {
    /// Relative threshold `θ`: kernel means `λ < θ λ_ref`.
    pub theta: f64,
    /// Absolute floor relative to the largest eigenvalue.
    pub floor: f64,
    /// Smallest acceptable `λ_ref / λ_kernel,max`.
    pub min_gap: f64,
}

impl Default for KernelPolicy {
    fn default() -> Self {
        Self {
            theta: 1e-4,
            floor: 1e-8,
            min_gap: 100.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KernelCount {
    /// `None` when the spectrum shows no clear gap.
    pub count: Option<usize>,
    /// Eigenvalues below `θ λ_ref`, whether or not the gap is clear.
    pub raw_count: usize,
    pub lambda_ref: Option<f64>,
    /// `λ_ref` over the largest counted eigenvalue; `None` if that one is
    /// not positive (an infinite gap) or nothing was counted.
    pub gap_ratio: Option<f64>,
    pub note: Option<String>,
}

impl KernelCount {
    pub fn is_indeterminate(&self) -> bool {
        self.count.is_none()
    }
}

/// Count near-zero eigenvalues of an ascending, non-negative spectrum.
pub fn kernel_count(eigs: &[f64], policy: &KernelPolicy) -> KernelCount {
    let max = eigs.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let floor = policy.floor * max;
    let indeterminate = |raw: usize, lref: Option<f64>, gap: Option<f64>, note: String| KernelCount {
        count: None,
        raw_count: raw,
        lambda_ref: lref,
        gap_ratio: gap,
        note: Some(note),
    };
    let Some(&lref) = eigs.iter().find(|&&v| v > floor) else {
        return indeterminate(eigs.len(), None, None, "no eigenvalue above the floor".into());
    };
    let cut = policy.theta * lref;
    let raw = eigs.iter().filter(|&&v| v < cut).count();
    let top = eigs.iter().filter(|&&v| v < cut).cloned().fold(f64::NEG_INFINITY, f64::max);
    let gap = (raw > 0 && top > 0.0).then(|| lref / top);
    let ambiguous = eigs.iter().filter(|&&v| v >= cut && v <= floor).count();
    if ambiguous > 0 {
        return indeterminate(raw, Some(lref), gap, format!("{ambiguous} eigenvalues between θλ_ref and the floor"));
    }
    if let Some(g) = gap.filter(|&g| g < policy.min_gap) {
        return indeterminate(raw, Some(lref), gap, format!("gap ratio {g:.3e} below {}", policy.min_gap));
    }
    let negative = eigs.iter().filter(|&&v| v < -1e-9 * max).count();
    KernelCount {
        count: Some(raw),
        raw_count: raw,
        lambda_ref: Some(lref),
        gap_ratio: gap,
        note: (negative > 0).then(|| format!("{negative} eigenvalues below -1e-9·max")),
    }
}

/// A count is confirmed when two resolutions give the same definite value.
pub fn confirm_counts(coarse: &KernelCount, fine: &KernelCount) -> Option<usize> {
    match (coarse.count, fine.count) {
        (Some(a), Some(b)) if a == b => Some(a),
        _ => None,
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SpectrumReport {
    pub operator: String,
    pub sizes: Vec<usize>,
    pub method: String,
    pub dofs: usize,
    /// Smallest eigenvalues, ascending.
    pub eigenvalues: Vec<f64>,
    pub largest: f64,
    pub kernel: KernelCount,
    pub policy: KernelPolicy,
    pub asymmetry: f64,
    pub max_residual: f64,
    pub orthonormality: f64,
}

impl SpectrumReport {
    /// Smallest eigenvalue relative to the largest.
    pub fn min_ratio(&self) -> f64 {
        self.eigenvalues.first().copied().unwrap_or(0.0) / self.largest.abs().max(1e-300)
    }
}

/// Write `index,eigenvalue` rows.
pub fn write_spectrum_csv(report: &SpectrumReport, path: &Path) -> Result<()> {
    let io = |e: std::io::Error| Error::Io {
        path: path.display().to_string(),
        source: e,
    };
    let mut w = csv::Writer::from_path(path).map_err(|e| io(e.into()))?;
    w.write_record(["index", "eigenvalue"]).map_err(|e| io(e.into()))?;
    for (i, v) in report.eigenvalues.iter().enumerate() {
        w.write_record([i.to_string(), format!("{v:.17e}")]).map_err(|e| io(e.into()))?;
    }
    w.flush().map_err(io)
}
