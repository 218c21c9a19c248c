use std::collections::BTreeMap;
use std::time::Instant;

use super::report::{CheckRecord, SuiteReport};
use crate::config::ExperimentConfig;
use crate::error::Result;
use crate::fiber::{ck_dim_bound, tracefree_dim, Bundle};
use crate::fields::{l2_norm, nabla};
use crate::geometry::{GeometryCache, MetricPreset};
use crate::gradients::PointwiseMaps;
use crate::spectral::{
    assemble, confirm_counts, eigensolve, expand_trial, kernel_count, mode_kernel_oracle,
    singular_values, DofBasis, KernelCount, OperatorHandle, OperatorKind, SpectrumReport,
};

/// Eigenvalues kept in spectrum reports and used for the capped TT count.
pub const KEEP: usize = 50;

const KINDS: [OperatorKind; 4] = [
    OperatorKind::ConformalKilling,
    OperatorKind::Killing,
    OperatorKind::TransverseTraceless,
    OperatorKind::Codazzi,
];

fn anchor(kind: OperatorKind) -> &'static str {
    match kind {
        OperatorKind::ConformalKilling => "kernel of D1 is the conformal Killing tensors",
        OperatorKind::Killing => "Killing tensors",
        OperatorKind::TransverseTraceless => "transverse trace-free tensors",
        OperatorKind::Codazzi => "trace-free divergence-free Codazzi tensors",
        _ => "plumbing",
    }
}

pub struct KernelOutcome {
    pub report: SuiteReport,
    pub spectra: Vec<SpectrumReport>,
}

pub fn kernel_experiment(cfg: &ExperimentConfig) -> Result<KernelOutcome> {
    let start = Instant::now();
    let tol = cfg.tolerances;
    let policy = tol.kernel_policy();
    let metric = cfg.metric();
    let flat = matches!(metric, MetricPreset::Flat);
    let mut checks = Vec::new();
    let mut spectra = Vec::new();
    let mut counts: BTreeMap<(usize, OperatorKind), Vec<(usize, KernelCount)>> = BTreeMap::new();
    let coarsest = *cfg.sizes.iter().min().expect("validated");
    for &size in &cfg.sizes {
        let cache = GeometryCache::new(cfg.grid(size), metric.clone(), cfg.method)?;
        for &p in &cfg.ranks {
            let maps = PointwiseMaps::new(cfg.n, p)?;
            for kind in KINDS {
                let id = |k: &str| {
                    format!("kernel/{}/n{}/p{}/{}/N{size:03}/{k}", metric.name(), cfg.n, p, kind.name())
                };
                let op = OperatorHandle::normal(&cache, p, kind)?;
                let a = assemble(&op, &cache, DofBasis::Fourier)?;
                let e = eigensolve(&a.stiffness, &a.mass, None)?;
                let largest = *e.values.last().unwrap_or(&0.0);
                let kc = kernel_count(&e.values, &policy);
                let rep = SpectrumReport {
                    operator: op.name.clone(),
                    sizes: cache.grid.sizes.clone(),
                    method: cfg.method.to_string(),
                    dofs: a.dofs,
                    eigenvalues: e.values.iter().take(KEEP).copied().collect(),
                    largest,
                    kernel: kc.clone(),
                    policy,
                    asymmetry: a.asymmetry,
                    max_residual: e.residuals.iter().cloned().fold(0.0, f64::max),
                    orthonormality: e.orthonormality,
                };
                let plumbing = "plumbing";
                checks.push(CheckRecord::at_most(id("asymmetry"), plumbing, a.asymmetry, 1e-10));
                checks.push(CheckRecord::at_least(id("min_eigenvalue_ratio"), anchor(kind), rep.min_ratio(), -1e-9));
                checks.push(CheckRecord::at_most(id("orthonormality"), plumbing, e.orthonormality, 1e-10));
                let detail = match (&kc.note, kc.gap_ratio) {
                    (Some(n), _) => n.clone(),
                    (None, Some(g)) => format!("gap ratio {g:.3e}"),
                    (None, None) => "gap ratio infinite".into(),
                };
                checks.push(
                    CheckRecord::info(id("count"), anchor(kind), kc.count.map(|c| c as f64)).with_detail(detail),
                );
                if kind == OperatorKind::TransverseTraceless {
                    let cut = kc.lambda_ref.map_or(0.0, |l| policy.theta * l);
                    let capped = rep.eigenvalues.iter().filter(|&&v| v < cut).count();
                    checks.push(CheckRecord::info(id("near_kernel_in_smallest_50"), anchor(kind), Some(capped as f64)));
                    checks.push(CheckRecord::info(id("near_kernel_all"), anchor(kind), Some(kc.raw_count as f64)));
                }
                if flat {
                    let oracle = mode_kernel_oracle(kind, &maps, &cache.grid.sizes, &cache.grid.lengths, cfg.method)?;
                    let measured = if kind == OperatorKind::TransverseTraceless { Some(kc.raw_count) } else { kc.count };
                    checks.push(
                        CheckRecord::count(id("mode_oracle"), anchor(kind), measured, oracle.count)
                            .with_detail(format!("per-mode oracle over {} modes", oracle.modes)),
                    );
                }
                if kind == OperatorKind::ConformalKilling {
                    let k = kc.count.unwrap_or(0);
                    let mut worst: f64 = 0.0;
                    for j in 0..k {
                        let phi = expand_trial(&cache, Bundle::TraceFree(p), DofBasis::Fourier, e.vectors.column(j).as_slice());
                        let r = l2_norm(&cache, &nabla(&cache, &phi)) / l2_norm(&cache, &phi).max(1e-300);
                        worst = worst.max(r);
                    }
                    let rec = CheckRecord::at_most(id("kernel_fields_parallel"), "vanishing theorems: kernel fields are parallel on flat tori", worst, tol.identity);
                    checks.push(if flat {
                        rec
                    } else {
                        rec.optional().with_detail("curvature not sign-definite here; reported only")
                    });
                    if size == coarsest {
                        let sv = singular_values(&cache, p, OperatorKind::D1, DofBasis::Fourier)?;
                        let sq: Vec<f64> = sv.iter().map(|s| s * s).collect();
                        let kd = kernel_count(&sq, &policy);
                        checks.push(CheckRecord::count(
                            id("d1_singular_value_count"),
                            "kernel of D1*D1 equals kernel of D1",
                            kd.count,
                            kc.count.unwrap_or(usize::MAX),
                        ));
                    }
                }
                counts.entry((p, kind)).or_default().push((size, kc));
                spectra.push(rep);
            }
        }
    }
    for ((p, kind), per) in &counts {
        let id = |k: &str| format!("kernel/{}/n{}/p{}/{}/{k}", metric.name(), cfg.n, p, kind.name());
        if per.len() < 2 {
            checks.push(CheckRecord::flag(id("confirmed"), anchor(*kind), None).with_detail("needs two grid sizes"));
            continue;
        }
        let (c, f) = (&per[per.len() - 2], &per[per.len() - 1]);
        if *kind == OperatorKind::TransverseTraceless {
            let grows = f.1.raw_count > c.1.raw_count;
            let rec = CheckRecord::flag(id("near_kernel_grows"), anchor(*kind), Some(grows)).with_detail(format!(
                "{} at N={} -> {} at N={}",
                c.1.raw_count, c.0, f.1.raw_count, f.0
            ));
            // δ: S₀ᵖ → S₀ᵖ⁻¹ is underdetermined only when the fiber shrinks
            let underdetermined = tracefree_dim(cfg.n, *p) > tracefree_dim(cfg.n, p - 1);
            checks.push(if underdetermined {
                rec
            } else {
                rec.optional().with_detail("divergence is determined elliptic at this (n, p); finite kernel expected")
            });
            continue;
        }
        let confirmed = confirm_counts(&c.1, &f.1);
        checks.push(
            CheckRecord::flag(id("confirmed"), anchor(*kind), confirmed.map(|_| true))
                .with_detail(format!("N={}: {:?}, N={}: {:?}", c.0, c.1.count, f.0, f.1.count)),
        );
        if *kind == OperatorKind::ConformalKilling {
            let bound = ck_dim_bound(cfg.n, *p)?;
            let rec = match confirmed {
                Some(k) => CheckRecord::at_most(id("within_bound"), "dimension bound for conformal Killing tensors", k as f64, bound.value as f64),
                None => CheckRecord::flag(id("within_bound"), "dimension bound for conformal Killing tensors", None),
            };
            checks.push(rec.with_detail(if bound.extrapolated { "bound extrapolated to n = 2" } else { "" }));
            let killing = counts.get(&(*p, OperatorKind::Killing)).and_then(|v| v.last()).and_then(|v| v.1.count);
            if let (Some(k), Some(ck)) = (killing, confirmed) {
                checks.push(CheckRecord::at_most(id("killing_within_conformal_killing"), anchor(OperatorKind::Killing), k as f64, ck as f64));
            }
        }
    }
    let mut report = SuiteReport::new("kernel", cfg.to_config_string(), checks);
    report.elapsed = start.elapsed().as_secs_f64();
    Ok(KernelOutcome { report, spectra })
}
