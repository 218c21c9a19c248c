use std::f64::consts::PI;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use super::{first_order_stack, half_wave_vectors, OperatorKind};
use crate::error::{Error, Result};
use crate::fiber::{npow, Algebra, Bundle, MetricAtPoint};
use crate::geometry::{GeometryCache, Method};
use crate::gradients::{sw_coefficient, PointwiseMaps};

/// Operators whose principal symbol can be evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SymbolKind {
    /// `∇` (first order).
    Nabla,
    /// `D₁` (first order).
    D1,
    /// `D₁*D₁`.
    D1Normal,
    RoughLaplacian,
    Killing,
    TransverseTraceless,
    Codazzi,
    /// `δδ*` projected back to `S₀ᵖ`.
    DeltaDeltaStar,
    /// `δ*δ` projected back to `S₀ᵖ`.
    DeltaStarDelta,
    /// `(p+1)δδ* − pδ*δ` projected back to `S₀ᵖ`.
    Sampson,
    /// `δδ* − c δ*δ` with the Stein–Weiss coefficient `c`.
    SteinWeissForm,
}

impl SymbolKind {
    pub fn order(self) -> usize {
        match self {
            Self::Nabla | Self::D1 => 1,
            _ => 2,
        }
    }

    fn operator_kind(self) -> Option<OperatorKind> {
        Some(match self {
            Self::D1 => OperatorKind::D1,
            Self::D1Normal => OperatorKind::ConformalKilling,
            Self::RoughLaplacian | Self::Nabla => OperatorKind::RoughLaplacian,
            Self::Killing => OperatorKind::Killing,
            Self::TransverseTraceless => OperatorKind::TransverseTraceless,
            Self::Codazzi => OperatorKind::Codazzi,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SymbolReport {
    pub kind: SymbolKind,
    pub n: usize,
    pub p: usize,
    /// Coordinate covector.
    pub xi: Vec<f64>,
    /// `|ξ|_g`.
    pub xi_norm: f64,
    #[serde(skip)]
    pub matrix: DMatrix<f64>,
    /// Smallest eigenvalue (second order) or singular value (first order).
    pub min_value: f64,
    /// `min_value / |ξ|^order`.
    pub min_ratio: f64,
    /// Best scalar multiple of the identity, `tr σ / dim`, divided by
    /// `|ξ|²` (second-order square symbols only).
    pub scalar: Option<f64>,
    /// `‖σ − cI‖_F / ‖σ‖_F` for that best scalar.
    pub distance_to_scalar: Option<f64>,
}

struct FullOps {
    alg: Algebra,
    n: usize,
}

impl FullOps {
    fn matrix(&self, rows: usize, cols: usize, f: impl Fn(&[f64], &mut [f64])) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(rows, cols);
        let mut e = vec![0.0; cols];
        let mut y = vec![0.0; rows];
        for j in 0..cols {
            e.iter_mut().for_each(|v| *v = 0.0);
            e[j] = 1.0;
            f(&e, &mut y);
            m.set_column(j, &DVector::from_column_slice(&y));
        }
        m
    }

    /// `ξ ⊗ ·` on full rank-`r` arrays.
    fn xi(&self, r: usize, xi: &[f64]) -> DMatrix<f64> {
        let len = npow(self.n, r);
        self.matrix(self.n * len, len, |x, y| {
            for (a, xa) in xi.iter().enumerate() {
                for (k, v) in x.iter().enumerate() {
                    y[a * len + k] = xa * v;
                }
            }
        })
    }

    fn sym(&self, r: usize) -> DMatrix<f64> {
        let len = npow(self.n, r);
        self.matrix(len, len, |x, y| self.alg.sym(r, x, y))
    }

    fn trace(&self, r: usize) -> DMatrix<f64> {
        self.matrix(npow(self.n, r - 2), npow(self.n, r), |x, y| self.alg.trace01(r, x, y))
    }

    fn basis(&self, p: usize) -> DMatrix<f64> {
        self.alg.basis(Bundle::TraceFree(p)).to_matrix()
    }
}

fn frame_covector(g: &MetricAtPoint, xi: &[f64]) -> Result<DVector<f64>> {
    let chol = g.g.clone().cholesky().ok_or(Error::NotPositiveDefinite { point: 0 })?;
    let f = chol
        .l()
        .transpose()
        .try_inverse()
        .ok_or(Error::NotPositiveDefinite { point: 0 })?;
    Ok(f.transpose() * DVector::from_column_slice(xi))
}

/// Principal symbol in a `g`-orthonormal fiber basis, derivatives replaced
/// by `iξ` and the resulting powers of `i` absorbed so that second-order
/// symbols of non-negative operators are positive semidefinite.
pub fn symbol_matrix(kind: SymbolKind, maps: &PointwiseMaps, xi_hat: &[f64]) -> Result<DMatrix<f64>> {
    let (n, p) = (maps.n, maps.p);
    let t = maps.tensor_with(xi_hat);
    if let Some(op) = kind.operator_kind() {
        if kind == SymbolKind::Nabla {
            return Ok(t);
        }
        let g = first_order_stack(maps, op)?;
        let gt = &g * &t;
        return Ok(if kind == SymbolKind::D1 { gt } else { gt.transpose() * gt });
    }
    let ops = FullOps {
        alg: Algebra::new(n),
        n,
    };
    let b = ops.basis(p);
    // ι_ξ Sym(ξ ⊗ φ) and Sym(ξ ⊗ ι_ξ φ)
    let dds = b.transpose() * ops.trace(p + 2) * ops.xi(p + 1, xi_hat) * ops.sym(p + 1) * ops.xi(p, xi_hat) * &b;
    let sdd = if p == 0 {
        DMatrix::zeros(b.ncols(), b.ncols())
    } else {
        b.transpose() * ops.sym(p) * ops.xi(p - 1, xi_hat) * ops.trace(p + 1) * ops.xi(p, xi_hat) * &b
    };
    let pf = p as f64;
    Ok(match kind {
        SymbolKind::DeltaDeltaStar => dds,
        SymbolKind::DeltaStarDelta => sdd,
        SymbolKind::Sampson => dds * (pf + 1.0) - sdd * pf,
        SymbolKind::SteinWeissForm => dds - sdd * sw_coefficient(n, p),
        _ => unreachable!("first-order-stack kinds handled above"),
    })
}

/// Evaluate and summarize the symbol at covector `ξ` for the metric `g`.
pub fn symbol_eval(
    kind: SymbolKind,
    maps: &PointwiseMaps,
    g: &MetricAtPoint,
    xi: &[f64],
) -> Result<SymbolReport> {
    if xi.len() != maps.n || g.dim() != maps.n {
        return Err(Error::InvalidArgument("covector and metric must have size n".into()));
    }
    let hat = frame_covector(g, xi)?;
    let xi_norm = hat.norm();
    if xi_norm == 0.0 {
        return Err(Error::InvalidArgument("symbol needs a nonzero covector".into()));
    }
    let matrix = symbol_matrix(kind, maps, hat.as_slice())?;
    let order = kind.order();
    let (min_value, scalar, distance) = if order == 1 {
        let e = (matrix.transpose() * &matrix).symmetric_eigen();
        (e.eigenvalues.min().max(0.0).sqrt(), None, None)
    } else {
        let e = matrix.clone().symmetric_eigen();
        let dim = matrix.nrows();
        let c = matrix.trace() / dim as f64;
        let dev = (&matrix - DMatrix::identity(dim, dim) * c).norm() / matrix.norm().max(1e-300);
        (e.eigenvalues.min(), Some(c / (xi_norm * xi_norm)), Some(dev))
    };
    Ok(SymbolReport {
        kind,
        n: maps.n,
        p: maps.p,
        xi: xi.to_vec(),
        xi_norm,
        min_ratio: min_value / xi_norm.powi(order as i32),
        matrix,
        min_value,
        scalar,
        distance_to_scalar: distance,
    })
}

/// [`symbol_eval`] with the metric frozen at grid point `pt`.
pub fn symbol_at(
    kind: SymbolKind,
    maps: &PointwiseMaps,
    cache: &GeometryCache,
    pt: usize,
    xi: &[f64],
) -> Result<SymbolReport> {
    symbol_eval(kind, maps, &cache.metric_at(pt), xi)
}

pub fn write_symbol_scan_csv(rows: &[SymbolReport], path: &Path) -> Result<()> {
    let io = |e: std::io::Error| Error::Io {
        path: path.display().to_string(),
        source: e,
    };
    let mut w = csv::Writer::from_path(path).map_err(|e| io(e.into()))?;
    let n = rows.first().map_or(0, |r| r.n);
    let mut header = vec!["kind".to_string(), "n".into(), "p".into()];
    header.extend((1..=n).map(|a| format!("xi{a}")));
    header.extend(["min_value", "min_ratio", "scalar", "distance_to_scalar"].map(String::from));
    w.write_record(&header).map_err(|e| io(e.into()))?;
    let opt = |v: Option<f64>| v.map_or(String::new(), |v| format!("{v:.17e}"));
    for r in rows {
        let mut rec = vec![
            serde_json::to_value(r.kind).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default(),
            r.n.to_string(),
            r.p.to_string(),
        ];
        rec.extend(r.xi.iter().map(|v| format!("{v:.17e}")));
        rec.extend([
            format!("{:.17e}", r.min_value),
            format!("{:.17e}", r.min_ratio),
            opt(r.scalar),
            opt(r.distance_to_scalar),
        ]);
        w.write_record(&rec).map_err(|e| io(e.into()))?;
    }
    w.flush().map_err(io)
}

/// Kernel dimension of a constant-coefficient first-order system on a flat
/// torus, counted mode by mode.
#[derive(Debug, Clone, Serialize)]
pub struct ModeOracle {
    pub count: usize,
    pub modes: usize,
    /// Smallest singular value of the mode block over nonzero modes,
    /// relative to `|k̃|`.
    pub min_relative_singular: f64,
}

/// Wavenumber seen by the differentiator for integer mode `k` on an axis of
/// `size` points and length `len`.
pub fn effective_wavenumber(k: i64, size: usize, len: f64, method: Method) -> f64 {
    let kp = 2.0 * PI * k as f64 / len;
    match method {
        Method::Spectral => kp,
        Method::Fd4 => {
            let h = len / size as f64;
            (8.0 * (kp * h).sin() - (2.0 * kp * h).sin()) / (6.0 * h)
        }
    }
}

/// Sum over the non-Nyquist Fourier modes of the nullity of `G σ(∇)(k̃)` for
/// the first-order stack of `kind` with the flat metric.
pub fn mode_kernel_oracle(
    kind: OperatorKind,
    maps: &PointwiseMaps,
    sizes: &[usize],
    lengths: &[f64],
    method: Method,
) -> Result<ModeOracle> {
    let g = first_order_stack(maps, kind)?;
    let d = g.ncols() / maps.n;
    let gnorm = g.norm().max(1e-300);
    let ks = half_wave_vectors(sizes);
    let mut count = d;
    let mut min_rel = f64::INFINITY;
    for k in ks.iter().skip(1) {
        let kt: Vec<f64> = k
            .iter()
            .zip(sizes.iter().zip(lengths))
            .map(|(&ka, (&s, &l))| effective_wavenumber(ka, s, l, method))
            .collect();
        let knorm = kt.iter().map(|v| v * v).sum::<f64>().sqrt();
        let block = &g * maps.tensor_with(&kt);
        let e = (block.transpose() * &block).symmetric_eigen();
        // eigenvalues of BᵀB carry roundoff of order 1e-16·scale; nonzero
        // ones are O(scale) because the symbol is homogeneous
        let scale = (knorm * gnorm).powi(2);
        let cut = 1e-12 * scale;
        let null = e.eigenvalues.iter().filter(|&&v| v < cut).count();
        let smin = e
            .eigenvalues
            .iter()
            .filter(|&&v| v >= cut)
            .fold(f64::INFINITY, |m, &v| m.min(v.sqrt() / knorm));
        min_rel = min_rel.min(smin);
        // the complex mode block acts on the real cos/sin pair
        count += 2 * null;
    }
    Ok(ModeOracle {
        count,
        modes: 2 * ks.len() - 1,
        min_relative_singular: min_rel,
    })
}
