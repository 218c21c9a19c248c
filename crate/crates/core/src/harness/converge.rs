use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::time::Instant;

use super::identity::{identity_metrics, Fixture};
use super::report::{CheckRecord, Status, SuiteReport};
use crate::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::geometry::{GeometryCache, Method};
use crate::gradients::Gradients;

/// Residuals that converge with the discretization.
const DIFFERENTIAL: [(&str, &str); 5] = [
    ("stein_weiss", "closed form of D1*D1"),
    ("weitzenbock_oracle", "Weitzenbock formula for D1*D1"),
    ("weitzenbock_split", "Weitzenbock formula for the three gradients"),
    ("curvature_term", "Weitzenbock decomposition of the Sampson Laplacian"),
    ("pairing", "divergence is the adjoint of the first gradient"),
];

/// Residuals that hold exactly at every resolution.
const ALGEBRAIC: [(&str, &str); 4] = [
    ("reconstruction", "decomposition of the gradient"),
    ("sampson_form", "Sampson form of D1*D1"),
    ("three_gradient", "rough Laplacian as sum of gradient energies"),
    ("adjoint_exact", "adjoint of the first gradient"),
];

/// Least-squares slope of `ln r` against `ln h`.
pub fn loglog_slope(points: &[(f64, f64)]) -> f64 {
    let m = points.len() as f64;
    let (sx, sy) = points.iter().fold((0.0, 0.0), |(a, b), (h, r)| (a + h.ln(), b + r.ln()));
    let (mx, my) = (sx / m, sy / m);
    let (num, den) = points.iter().fold((0.0, 0.0), |(a, b), (h, r)| {
        let dx = h.ln() - mx;
        (a + dx * (r.ln() - my), b + dx * dx)
    });
    num / den
}

pub fn convergence_study(cfg: &ExperimentConfig) -> Result<SuiteReport> {
    let start = Instant::now();
    if cfg.sizes.len() < 3 || cfg.sizes.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Config {
            line: 0,
            message: "convergence study needs at least 3 strictly increasing grid sizes".into(),
        });
    }
    let tol = cfg.tolerances;
    let metric = cfg.metric();
    let kmax = (cfg.sizes[0] / 4) as i64;
    let mut series: BTreeMap<(usize, &str), Vec<(usize, f64)>> = BTreeMap::new();
    for &size in &cfg.sizes {
        let cache = GeometryCache::new(cfg.grid(size), metric.clone(), cfg.method)?;
        for &p in &cfg.ranks {
            let g = Gradients::new(&cache, p)?;
            let seed = cfg.seed.wrapping_mul(1_000_003).wrapping_add(p as u64);
            let m = identity_metrics(&g, cfg.samples, kmax, seed, Fixture::None)?;
            for (k, _) in DIFFERENTIAL.iter().chain(&ALGEBRAIC) {
                series.entry((p, k)).or_default().push((size, m.get(k)));
            }
        }
    }
    let mut checks = Vec::new();
    let anchors: BTreeMap<&str, &str> = DIFFERENTIAL.iter().chain(&ALGEBRAIC).copied().collect();
    for ((p, key), vals) in &series {
        let id = |k: &str| format!("converge/{}/{}/n{}/p{p}/{key}/{k}", metric.name(), cfg.method, cfg.n);
        let anchor = anchors[key];
        let worst = vals.iter().map(|v| v.1).fold(0.0, f64::max);
        if ALGEBRAIC.iter().any(|(k, _)| k == key) {
            let t = if *key == "adjoint_exact" { tol.adjoint } else { tol.algebraic };
            checks.push(CheckRecord::at_most(id("all_sizes"), anchor, worst, t));
            continue;
        }
        let above: Vec<(f64, f64)> = vals
            .iter()
            .filter(|v| v.1 > tol.plateau)
            .map(|&(n, r)| (2.0 * PI / n as f64, r))
            .collect();
        let monotone = vals.windows(2).all(|w| w[1].1 <= w[0].1 || w[1].1 <= tol.plateau);
        checks.push(
            CheckRecord::flag(id("monotone"), anchor, Some(monotone))
                .optional()
                .with_detail(vals.iter().map(|(n, r)| format!("N={n}: {r:.3e}")).collect::<Vec<_>>().join(", ")),
        );
        let last = vals.last().expect("non-empty").1;
        match cfg.method {
            Method::Spectral => {
                checks.push(CheckRecord::at_most(id("finest"), anchor, last, tol.plateau).with_detail("spectral residuals reach the plateau"));
                if above.len() >= 2 {
                    checks.push(CheckRecord::info(id("slope"), anchor, Some(loglog_slope(&above))));
                }
            }
            Method::Fd4 => {
                if above.len() >= 2 {
                    let s = loglog_slope(&above);
                    let mut rec = CheckRecord::at_least(id("slope"), anchor, s, 3.5);
                    if s > 4.5 {
                        rec.status = Status::Fail;
                    }
                    checks.push(rec.with_detail(format!("expected 4 ± 0.5 from {} sizes above the plateau", above.len())));
                } else {
                    checks.push(CheckRecord::at_most(id("finest"), anchor, last, tol.plateau).with_detail("already at the plateau"));
                }
            }
        }
    }
    let mut report = SuiteReport::new("converge", cfg.to_config_string(), checks);
    report.elapsed = start.elapsed().as_secs_f64();
    Ok(report)
}
