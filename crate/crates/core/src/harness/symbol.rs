use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::report::{CheckRecord, SuiteReport};
use crate::config::ExperimentConfig;
use crate::error::Result;
use crate::fiber::MetricAtPoint;
use crate::geometry::GeometryCache;
use crate::gradients::{sw_coefficient, sw_coefficient_alt, PointwiseMaps};
use crate::spectral::{symbol_at, symbol_eval, SymbolKind, SymbolReport};

/// Random `(ξ, x)` pairs per rank.
pub const SYMBOL_SAMPLES: usize = 100;

const ELLIPTIC: &str = "D1*D1 is strongly elliptic";

pub struct SymbolOutcome {
    pub report: SuiteReport,
    /// Every evaluated `σ(D₁*D₁)` sample, for CSV export.
    pub rows: Vec<SymbolReport>,
}

pub fn symbol_experiment(cfg: &ExperimentConfig) -> Result<SymbolOutcome> {
    let start = Instant::now();
    let tol = cfg.tolerances;
    let metric = cfg.metric();
    let size = *cfg.sizes.iter().min().expect("validated");
    let cache = GeometryCache::new(cfg.grid(size), metric.clone(), cfg.method)?;
    let n = cfg.n;
    let mut checks = Vec::new();
    let mut rows = Vec::new();
    for &p in &cfg.ranks {
        let maps = PointwiseMaps::new(n, p)?;
        let id = |k: &str| format!("symbol/{}/n{n}/p{p}/{k}", metric.name());
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(97 * p as u64));
        let mut min_ratio = f64::INFINITY;
        let mut min_d1 = f64::INFINITY;
        let mut scaling: f64 = 0.0;
        let mut closed_form: f64 = 0.0;
        let mut dist = [0.0_f64; 4];
        for _ in 0..SYMBOL_SAMPLES {
            let pt = rng.random_range(0..cache.npts());
            let mut xi: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            if xi.iter().all(|v| v.abs() < 1e-3) {
                xi[0] = 1.0;
            }
            let s = symbol_at(SymbolKind::D1Normal, &maps, &cache, pt, &xi)?;
            min_ratio = min_ratio.min(s.min_ratio);
            let d1 = symbol_at(SymbolKind::D1, &maps, &cache, pt, &xi)?;
            min_d1 = min_d1.min(d1.min_ratio);
            let t = 1.0 + rng.random_range(0.5..3.0);
            let xt: Vec<f64> = xi.iter().map(|v| v * t).collect();
            let st = symbol_at(SymbolKind::D1Normal, &maps, &cache, pt, &xt)?;
            scaling = scaling.max((&st.matrix - &s.matrix * (t * t)).amax() / st.matrix.amax().max(1e-300));
            let sw = symbol_at(SymbolKind::SteinWeissForm, &maps, &cache, pt, &xi)?;
            closed_form = closed_form.max((&sw.matrix - &s.matrix).amax() / s.matrix.amax().max(1e-300));
            for (slot, kind) in [SymbolKind::D1Normal, SymbolKind::DeltaDeltaStar, SymbolKind::DeltaStarDelta, SymbolKind::Sampson]
                .into_iter()
                .enumerate()
            {
                let r = if kind == SymbolKind::D1Normal { s.clone() } else { symbol_at(kind, &maps, &cache, pt, &xi)? };
                dist[slot] = dist[slot].max(r.distance_to_scalar.unwrap_or(0.0));
            }
            rows.push(s);
        }
        checks.push(CheckRecord::at_least(id("d1_normal_min_ratio"), ELLIPTIC, min_ratio, tol.symbol));
        checks.push(CheckRecord::at_least(id("d1_injective_min_ratio"), "symbol of D1 is injective", min_d1, tol.symbol));
        checks.push(CheckRecord::at_most(id("scaling"), ELLIPTIC, scaling, tol.algebraic));
        checks.push(CheckRecord::at_most(id("closed_form_symbol"), "closed form of D1*D1", closed_form, tol.algebraic));
        for (k, name) in ["d1_normal", "delta_delta_star", "delta_star_delta", "sampson"].iter().enumerate() {
            checks.push(
                CheckRecord::info(id(&format!("distance_to_scalar_{name}")), "scalar principal symbols", Some(dist[k]))
                    .with_detail("largest relative distance to a multiple of the identity"),
            );
        }
        // scalar-symbol hypothesis at a unit covector for the flat metric
        let g = MetricAtPoint::identity(n);
        let mut e1 = vec![0.0; n];
        e1[0] = 1.0;
        let scalar = |k| symbol_eval(k, &maps, &g, &e1).map(|r| r.scalar.unwrap_or(f64::NAN));
        let alpha = scalar(SymbolKind::DeltaDeltaStar)?;
        let measured = scalar(SymbolKind::D1Normal)? / alpha;
        checks.push(
            CheckRecord::info(id("d1_normal_over_delta_delta_star"), "scalar principal symbols", Some(measured))
                .with_detail(format!(
                    "scalar hypothesis predicts {:.6} (coefficient {:.6}) or {:.6} (coefficient {:.6})",
                    1.0 - sw_coefficient(n, p),
                    sw_coefficient(n, p),
                    1.0 - sw_coefficient_alt(n, p),
                    sw_coefficient_alt(n, p)
                )),
        );
        checks.push(CheckRecord::info(
            id("delta_star_delta_over_delta_delta_star"),
            "scalar principal symbols",
            Some(scalar(SymbolKind::DeltaStarDelta)? / alpha),
        ));
    }
    let mut report = SuiteReport::new("symbol", cfg.to_config_string(), checks);
    report.elapsed = start.elapsed().as_secs_f64();
    Ok(SymbolOutcome { report, rows })
}
