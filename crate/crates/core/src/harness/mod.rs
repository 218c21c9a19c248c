//! Identity suites, kernel experiments, symbol scans and convergence studies
//! driven by an [`ExperimentConfig`], reported as [`SuiteReport`]s.

mod converge;
mod identity;
mod kernel;
mod report;
mod symbol;

pub use converge::convergence_study;
pub use identity::{identity_metrics, run_identity_suite, run_identity_suite_with, Fixture, IdentityMetrics};
pub use kernel::{kernel_experiment, KernelOutcome};
pub use report::{emit_report, CheckRecord, Environment, Relation, ReportFormat, Status, SuiteReport, SCHEMA};
pub use symbol::{symbol_experiment, SymbolOutcome};

use crate::config::{ExperimentConfig, Suite};
use crate::error::Result;

#[derive(Debug, Clone, Copy)]
pub enum RefinementRule {
    /// Residual must drop by at least this factor.
    Factor(f64),
    /// Residual must not grow.
    Decrease,
}

/// Compare residuals on a coarse and a fine grid. Values at or below the
/// plateau count as converged whatever the ratio.
pub fn refinement_check(
    id: String,
    anchor: &str,
    coarse: f64,
    fine: f64,
    rule: RefinementRule,
    plateau: f64,
) -> CheckRecord {
    let ratio = coarse / fine.max(1e-300);
    let (need, ok) = match rule {
        RefinementRule::Factor(f) => (f, ratio >= f),
        RefinementRule::Decrease => (1.0, fine <= coarse),
    };
    let at_plateau = fine <= plateau;
    let mut rec = CheckRecord::at_least(id, anchor, ratio, need);
    if at_plateau && !ok {
        rec.status = Status::Pass;
    }
    rec.with_detail(format!(
        "coarse {coarse:.3e}, fine {fine:.3e}{}",
        if at_plateau { " (at plateau)" } else { "" }
    ))
}

/// Run every suite selected in the configuration and merge the reports.
pub fn run_suites(cfg: &ExperimentConfig) -> Result<SuiteReport> {
    let mut reports = Vec::new();
    for s in Suite::ALL {
        if !cfg.has_suite(s) {
            continue;
        }
        reports.push(match s {
            Suite::Identity => run_identity_suite(cfg)?,
            Suite::Kernel => kernel_experiment(cfg)?.report,
            Suite::Symbol => symbol_experiment(cfg)?.report,
            Suite::Converge => convergence_study(cfg)?,
        });
    }
    Ok(SuiteReport::merge("combined", reports))
}

#[cfg(test)]
mod tests;
