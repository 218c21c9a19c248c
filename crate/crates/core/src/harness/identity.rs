use std::collections::BTreeMap;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::report::{CheckRecord, SuiteReport};
use super::{refinement_check, RefinementRule};
use crate::config::ExperimentConfig;
use crate::error::Result;
use crate::fiber::Bundle;
use crate::fields::{divergence, l2_inner, l2_norm, rough_laplacian, Field};
use crate::geometry::{GeometryCache, MetricPreset};
use crate::gradients::Gradients;

/// Deliberate corruptions used to show that the suite can fail.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Fixture {
    None,
    /// Scale the `D₂` map, refitting `D₃` so the split still sums to `∇`.
    CorruptD2(f64),
    /// Pair `D₁` against `−δ` instead of `δ`.
    FlipDivergence,
}

/// Worst value over the random samples of every identity residual.
#[derive(Debug, Clone, Default)]
pub struct IdentityMetrics {
    pub values: BTreeMap<&'static str, f64>,
}

impl IdentityMetrics {
    fn worst(&mut self, key: &'static str, v: f64) {
        let e = self.values.entry(key).or_insert(f64::NEG_INFINITY);
        // NaN must win so that it surfaces as a failure
        if v.is_nan() || v > *e {
            *e = v;
        }
    }

    fn least(&mut self, key: &'static str, v: f64) {
        let e = self.values.entry(key).or_insert(f64::INFINITY);
        if v.is_nan() || v < *e {
            *e = v;
        }
    }

    pub fn get(&self, key: &str) -> f64 {
        self.values.get(key).copied().unwrap_or(f64::NAN)
    }
}

/// How a residual is judged.
#[derive(Clone, Copy, PartialEq)]
enum Kind {
    /// Exact at every resolution.
    Algebraic,
    /// Exact in the continuum; judged at one size on flat tori and at the
    /// finest size otherwise, with refinement required in between.
    Differential,
    /// Diagnostic only.
    Diagnostic,
}

struct Spec {
    key: &'static str,
    anchor: &'static str,
    kind: Kind,
}

const SPECS: &[Spec] = &[
    Spec { key: "reconstruction", anchor: "decomposition of the gradient", kind: Kind::Algebraic },
    Spec { key: "orthogonality", anchor: "decomposition of the gradient", kind: Kind::Algebraic },
    Spec { key: "d1_trace", anchor: "first gradient is trace-free", kind: Kind::Algebraic },
    Spec { key: "oracle_d1", anchor: "first gradient vs irreducible projector", kind: Kind::Algebraic },
    Spec { key: "oracle_d2", anchor: "second gradient vs irreducible projector", kind: Kind::Algebraic },
    Spec { key: "oracle_d3", anchor: "third gradient vs irreducible projector", kind: Kind::Algebraic },
    Spec { key: "adjoint_exact", anchor: "adjoint of the first gradient", kind: Kind::Algebraic },
    Spec { key: "pairing", anchor: "divergence is the adjoint of the first gradient", kind: Kind::Differential },
    Spec { key: "stein_weiss", anchor: "closed form of D1*D1", kind: Kind::Differential },
    Spec { key: "sampson_form", anchor: "Sampson form of D1*D1", kind: Kind::Algebraic },
    Spec { key: "three_gradient", anchor: "rough Laplacian as sum of gradient energies", kind: Kind::Algebraic },
    Spec { key: "weitzenbock_operational", anchor: "Weitzenbock formula for D1*D1", kind: Kind::Differential },
    Spec { key: "weitzenbock_oracle", anchor: "Weitzenbock formula for D1*D1", kind: Kind::Differential },
    Spec { key: "curvature_term", anchor: "Weitzenbock decomposition of the Sampson Laplacian", kind: Kind::Differential },
    Spec { key: "weitzenbock_split", anchor: "Weitzenbock formula for the three gradients", kind: Kind::Differential },
    Spec { key: "integral_sum", anchor: "integral Weitzenbock identity", kind: Kind::Differential },
    Spec { key: "integral_split", anchor: "integral Weitzenbock identity for the three gradients", kind: Kind::Differential },
    Spec { key: "integral_sampson", anchor: "integral form of the Sampson identity", kind: Kind::Differential },
    Spec { key: "integral_sampson_printed_sign", anchor: "integral form of the Sampson identity", kind: Kind::Diagnostic },
    Spec { key: "double_divergence", anchor: "double divergence in the closed form of D1*D1", kind: Kind::Diagnostic },
    Spec { key: "stein_weiss_alt_coefficient", anchor: "closed form of D1*D1", kind: Kind::Diagnostic },
    Spec { key: "d1_cyclic_gap", anchor: "first gradient", kind: Kind::Diagnostic },
    Spec { key: "d2_fit_scale", anchor: "second gradient", kind: Kind::Diagnostic },
    Spec { key: "d2_fit_residual", anchor: "second gradient", kind: Kind::Diagnostic },
    Spec { key: "curvature_commutation", anchor: "curvature term is zeroth order", kind: Kind::Diagnostic },
    Spec { key: "ahlfors_ratio", anchor: "Ahlfors operator for one-forms", kind: Kind::Diagnostic },
    Spec { key: "ahlfors_misfit", anchor: "Ahlfors operator for one-forms", kind: Kind::Diagnostic },
];

fn multiplier(cache: &GeometryCache) -> Vec<f64> {
    (0..cache.npts())
        .map(|pt| {
            let x = cache.grid.coords(pt);
            1.0 + 0.3 * x[0].cos() + 0.2 * x[1].sin()
        })
        .collect()
}

/// Evaluate every identity on `samples` random band-limited fields.
pub fn identity_metrics(
    g: &Gradients,
    samples: usize,
    kmax: i64,
    seed: u64,
    fixture: Fixture,
) -> Result<IdentityMetrics> {
    let c = g.cache;
    let p = g.p;
    let mut m = IdentityMetrics::default();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let conv = &g.maps.convention;
    m.worst("d1_cyclic_gap", conv.d1_cyclic_gap);
    m.worst("d2_fit_scale", conv.d2_fit_scale);
    m.worst("d2_fit_residual", conv.d2_fit_residual);
    let f = multiplier(c);
    let flat = matches!(c.preset, MetricPreset::Flat);
    for _ in 0..samples {
        let phi = Field::random(c, Bundle::TraceFree(p), kmax, &mut rng);
        let psi = Field::random(c, Bundle::TraceFree(p + 1), kmax, &mut rng);
        let out = g.decompose(&phi)?;
        let d = &out.diagnostics;
        m.worst("reconstruction", d.reconstruction);
        m.worst("orthogonality", d.orth_12.max(d.orth_13).max(d.orth_23));
        m.worst("d1_trace", d.d1_max_trace / out.d1.max_abs().max(1e-300));
        m.worst("oracle_d1", d.oracle_a);
        m.worst("oracle_d2", d.oracle_b);
        m.worst("oracle_d3", d.oracle_c);

        let lhs = l2_inner(c, &out.d1, &psi)?;
        let scale = (l2_norm(c, &out.d1) * l2_norm(c, &psi)).max(1e-300);
        let exact = l2_inner(c, &phi, &g.d1_adjoint(&psi)?)?;
        m.worst("adjoint_exact", (lhs - exact).abs() / scale);
        let mut div = divergence(c, &psi);
        if fixture == Fixture::FlipDivergence {
            div = div.scaled(-1.0);
        }
        m.worst("pairing", (lhs - l2_inner(c, &phi, &div)?).abs() / scale);

        let sw = g.stein_weiss_d1(&phi)?;
        m.worst("stein_weiss", sw.residual);
        m.worst("stein_weiss_alt_coefficient", sw.alt_coefficient_residual);
        let r = g.weitzenbock_identity(&phi)?;
        m.worst("sampson_form", r.sampson_form);
        m.worst("three_gradient", r.three_gradient);
        m.worst("weitzenbock_operational", r.weitzenbock_operational);
        m.worst("weitzenbock_oracle", r.weitzenbock_oracle);
        m.worst("weitzenbock_split", r.weitzenbock_split);
        m.worst("integral_sum", r.integral_sum);
        m.worst("integral_split", r.integral_split);
        m.worst("integral_sampson", r.integral_sampson);
        m.worst("integral_sampson_printed_sign", r.integral_sampson_minus);
        m.worst("double_divergence", r.double_divergence);
        m.least("d1_energy", r.d1_energy);

        let w = g.weitzenbock_k(&phi)?;
        m.worst("curvature_term", w.oracle_residual);
        let rough = rough_laplacian(c, &phi).field.max_abs().max(1e-300);
        if flat {
            m.worst("flat_curvature", w.k.max_abs() / rough);
        }
        let fphi = phi.mul_scalar(&f);
        let kf = g.weitzenbock_k(&fphi)?.k;
        let comm = kf.axpy(-1.0, &w.k.mul_scalar(&f)).max_abs();
        m.worst("curvature_commutation", comm / rough);
        if p == 1 {
            let (lambda, misfit) = g.ahlfors_ratio(&phi)?;
            m.worst("ahlfors_ratio", lambda);
            m.worst("ahlfors_misfit", misfit);
        }
    }
    Ok(m)
}

pub fn run_identity_suite(cfg: &ExperimentConfig) -> Result<SuiteReport> {
    run_identity_suite_with(cfg, Fixture::None)
}

pub fn run_identity_suite_with(cfg: &ExperimentConfig, fixture: Fixture) -> Result<SuiteReport> {
    let start = Instant::now();
    let tol = cfg.tolerances;
    let metric = cfg.metric();
    let flat = matches!(metric, MetricPreset::Flat);
    let kmax = (*cfg.sizes.iter().min().expect("validated") / 4) as i64;
    let finest = *cfg.sizes.iter().max().expect("validated");
    let mut checks = Vec::new();
    let mut series: BTreeMap<(usize, &'static str), Vec<(usize, f64)>> = BTreeMap::new();
    for &size in &cfg.sizes {
        let cache = GeometryCache::new(cfg.grid(size), metric.clone(), cfg.method)?;
        for &p in &cfg.ranks {
            let mut g = Gradients::new(&cache, p)?;
            if let Fixture::CorruptD2(factor) = fixture {
                g.corrupt_d2(factor);
            }
            let seed = cfg.seed.wrapping_mul(1_000_003).wrapping_add(p as u64);
            let m = identity_metrics(&g, cfg.samples, kmax, seed, fixture)?;
            let id = |k: &str| {
                format!("identity/{}/n{}/p{}/N{:03}/{}", metric.name(), cfg.n, p, size, k)
            };
            for s in SPECS {
                let Some(&v) = m.values.get(s.key) else { continue };
                series.entry((p, s.key)).or_default().push((size, v));
                let rec = match s.kind {
                    Kind::Algebraic => {
                        let t = if s.key == "adjoint_exact" {
                            tol.adjoint
                        } else if s.key == "orthogonality" || s.key.starts_with("oracle") {
                            tol.identity
                        } else {
                            tol.algebraic
                        };
                        CheckRecord::at_most(id(s.key), s.anchor, v, t)
                    }
                    Kind::Differential => {
                        let t = if s.key == "pairing" { tol.pairing } else { tol.identity };
                        let r = CheckRecord::at_most(id(s.key), s.anchor, v, t);
                        if flat || size == finest {
                            r
                        } else {
                            r.optional().with_detail("coarse grid; judged by refinement")
                        }
                    }
                    Kind::Diagnostic => CheckRecord::info(id(s.key), s.anchor, Some(v)),
                };
                checks.push(rec);
            }
            checks.push(CheckRecord::at_least(
                id("d1_energy"),
                "integral inequality for D1",
                m.get("d1_energy"),
                -tol.algebraic,
            ));
            if flat {
                checks.push(CheckRecord::at_most(
                    id("flat_curvature"),
                    "curvature term vanishes on flat tori",
                    m.get("flat_curvature"),
                    tol.flat_curvature,
                ));
            }
        }
    }
    if !flat {
        for ((p, key), vals) in &series {
            let rule = match *key {
                "curvature_commutation" => RefinementRule::Decrease,
                k if SPECS.iter().any(|s| s.key == k && s.kind == Kind::Differential) => {
                    RefinementRule::Factor(tol.refinement)
                }
                _ => continue,
            };
            for w in vals.windows(2) {
                let id = format!(
                    "identity/{}/n{}/p{}/refine_{:03}_{:03}/{}",
                    metric.name(),
                    cfg.n,
                    p,
                    w[0].0,
                    w[1].0,
                    key
                );
                checks.push(refinement_check(id, "discretization error under refinement", w[0].1, w[1].1, rule, tol.plateau));
            }
        }
    }
    let mut report = SuiteReport::new("identity", cfg.to_config_string(), checks);
    report.elapsed = start.elapsed().as_secs_f64();
    Ok(report)
}
