use std::fmt::Write as _;
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};

pub const SCHEMA: &str = "swlab-report/1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Fail,
    Indeterminate,
    Pass,
    /// Diagnostic value without a pass criterion.
    Info,
}

impl Status {
    pub fn label(self) -> &'static str {
        match self {
            Status::Fail => "FAIL",
            Status::Indeterminate => "INDETERMINATE",
            Status::Pass => "PASS",
            Status::Info => "INFO",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Relation {
    #[serde(rename = "<=")]
    AtMost,
    #[serde(rename = ">=")]
    AtLeast,
    #[serde(rename = "==")]
    Equal,
    #[serde(rename = "info")]
    None,
}

#[derive(Debug, Clone, Serialize)]
pub struct CheckRecord {
    pub id: String,
    /// The identity, operator or statement this check exercises, or `plumbing`.
    pub anchor: String,
    pub mandatory: bool,
    pub value: Option<f64>,
    pub tolerance: Option<f64>,
    pub relation: Relation,
    pub status: Status,
    pub detail: String,
}

impl CheckRecord {
    fn new(id: String, anchor: &str, value: Option<f64>, tol: Option<f64>, relation: Relation, status: Status) -> Self {
        Self {
            id,
            anchor: anchor.to_string(),
            mandatory: status != Status::Info,
            value,
            tolerance: tol,
            relation,
            status,
            detail: String::new(),
        }
    }

    /// Passes when `value ≤ tol`; NaN fails.
    pub fn at_most(id: String, anchor: &str, value: f64, tol: f64) -> Self {
        let s = if value <= tol { Status::Pass } else { Status::Fail };
        Self::new(id, anchor, Some(value), Some(tol), Relation::AtMost, s)
    }

    pub fn at_least(id: String, anchor: &str, value: f64, tol: f64) -> Self {
        let s = if value >= tol { Status::Pass } else { Status::Fail };
        Self::new(id, anchor, Some(value), Some(tol), Relation::AtLeast, s)
    }

    /// Integer agreement; an unknown measurement is indeterminate.
    pub fn count(id: String, anchor: &str, measured: Option<usize>, expected: usize) -> Self {
        let s = match measured {
            Some(m) if m == expected => Status::Pass,
            Some(_) => Status::Fail,
            None => Status::Indeterminate,
        };
        Self::new(id, anchor, measured.map(|m| m as f64), Some(expected as f64), Relation::Equal, s)
    }

    pub fn flag(id: String, anchor: &str, ok: Option<bool>) -> Self {
        let s = match ok {
            Some(true) => Status::Pass,
            Some(false) => Status::Fail,
            None => Status::Indeterminate,
        };
        Self::new(id, anchor, None, None, Relation::None, s)
    }

    pub fn info(id: String, anchor: &str, value: Option<f64>) -> Self {
        Self::new(id, anchor, value, None, Relation::None, Status::Info)
    }

    pub fn with_detail(mut self, detail: impl Into<String>) -> Self {
        self.detail = detail.into();
        self
    }

    /// Demote to a diagnostic that cannot fail the suite.
    pub fn optional(mut self) -> Self {
        self.mandatory = false;
        self
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Environment {
    pub package: String,
    pub version: String,
    pub os: String,
    pub arch: String,
}

impl Default for Environment {
    fn default() -> Self {
        Self {
            package: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
            os: std::env::consts::OS.into(),
            arch: std::env::consts::ARCH.into(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SuiteReport {
    pub schema: String,
    pub suite: String,
    /// Canonical text of the configuration that produced the report.
    pub config: String,
    pub environment: Environment,
    pub status: Status,
    pub checks: Vec<CheckRecord>,
    /// Wall-clock seconds; left out of JSON and CSV so they stay reproducible.
    #[serde(skip)]
    pub elapsed: f64,
}

impl SuiteReport {
    pub fn new(suite: &str, config: String, mut checks: Vec<CheckRecord>) -> Self {
        checks.sort_by(|a, b| a.id.cmp(&b.id));
        let mut r = Self {
            schema: SCHEMA.into(),
            suite: suite.into(),
            config,
            environment: Environment::default(),
            status: Status::Pass,
            checks,
            elapsed: 0.0,
        };
        r.status = r.overall();
        r
    }

    fn overall(&self) -> Status {
        let mandatory = || self.checks.iter().filter(|c| c.mandatory);
        if mandatory().any(|c| c.status == Status::Fail) {
            Status::Fail
        } else if mandatory().any(|c| c.status == Status::Indeterminate) {
            Status::Indeterminate
        } else {
            Status::Pass
        }
    }

    /// Combine reports from several suites into one, ordered by check id.
    pub fn merge(name: &str, reports: Vec<SuiteReport>) -> Self {
        let config = reports.first().map(|r| r.config.clone()).unwrap_or_default();
        let elapsed = reports.iter().map(|r| r.elapsed).sum();
        let checks = reports.into_iter().flat_map(|r| r.checks).collect();
        let mut out = Self::new(name, config, checks);
        out.elapsed = elapsed;
        out
    }

    pub fn check(&self, id: &str) -> Option<&CheckRecord> {
        self.checks.iter().find(|c| c.id == id)
    }

    /// `0` all mandatory checks pass, `1` any fails, `3` only indeterminate.
    pub fn exit_code(&self) -> i32 {
        match self.status {
            Status::Fail => 1,
            Status::Indeterminate => 3,
            _ => 0,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["id", "anchor", "mandatory", "status", "relation", "value", "tolerance", "detail"])
            .expect("in-memory write");
        let num = |v: Option<f64>| v.map_or(String::new(), |v| format!("{v:e}"));
        for c in &self.checks {
            let rel = serde_json::to_value(c.relation).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default();
            w.write_record([
                c.id.clone(),
                c.anchor.clone(),
                c.mandatory.to_string(),
                c.status.label().to_string(),
                rel,
                num(c.value),
                num(c.tolerance),
                c.detail.clone(),
            ])
            .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("flush")).expect("utf8")
    }

    /// Summary with failed and indeterminate checks listed first.
    pub fn to_markdown(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "# {} report: {}\n", self.suite, self.status.label());
        let count = |st: Status, mandatory: bool| {
            self.checks.iter().filter(|c| c.status == st && c.mandatory == mandatory).count()
        };
        let _ = writeln!(
            s,
            "{} checks: {} pass, {} fail, {} indeterminate, {} info; non-mandatory: {} pass, {} fail, {} indeterminate. Elapsed {:.1} s.\n",
            self.checks.len(),
            count(Status::Pass, true),
            count(Status::Fail, true),
            count(Status::Indeterminate, true),
            count(Status::Info, false),
            count(Status::Pass, false),
            count(Status::Fail, false),
            count(Status::Indeterminate, false),
            self.elapsed
        );
        let _ = writeln!(s, "| status | check | value | tolerance | anchor | detail |");
        let _ = writeln!(s, "|---|---|---|---|---|---|");
        let mut rows: Vec<&CheckRecord> = self.checks.iter().collect();
        rows.sort_by_key(|c| c.status);
        for c in rows {
            let num = |v: Option<f64>| v.map_or("-".to_string(), |v| format!("{v:.3e}"));
            let _ = writeln!(
                s,
                "| {} | `{}` | {} | {} | {} | {} |",
                c.status.label(),
                c.id,
                num(c.value),
                num(c.tolerance),
                c.anchor,
                c.detail
            );
        }
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    Csv,
    Markdown,
}

impl ReportFormat {
    pub fn extension(self) -> &'static str {
        match self {
            ReportFormat::Json => "json",
            ReportFormat::Csv => "csv",
            ReportFormat::Markdown => "md",
        }
    }
}

pub fn emit_report(report: &SuiteReport, format: ReportFormat, path: &Path) -> Result<()> {
    let text = match format {
        ReportFormat::Json => report.to_json(),
        ReportFormat::Csv => report.to_csv(),
        ReportFormat::Markdown => report.to_markdown(),
    };
    std::fs::write(path, text).map_err(|e| Error::Io {
        path: path.display().to_string(),
        source: e,
    })
}
