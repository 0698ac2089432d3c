//! Report rows, their CSV form, and the coverage footer.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::fmt::{self, Write as _};

use crate::error::{Error, Result};

/// How a claim was checked.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Kind {
    #[serde(rename = "exact")]
    Exact,
    #[serde(rename = "MC")]
    MonteCarlo,
    #[serde(rename = "structural")]
    Structural,
}

/// `Note` rows record a value (a fitted constant, a surrogate flag) without
/// making a claim; they never fail a run.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    #[serde(rename = "pass")]
    Pass,
    #[serde(rename = "fail")]
    Fail,
    #[serde(rename = "note")]
    Note,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::Pass => "pass",
            Verdict::Fail => "fail",
            Verdict::Note => "note",
        })
    }
}

/// Direction of the comparison between `observed` and `bound`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Relation {
    #[serde(rename = "<=")]
    AtMost,
    #[serde(rename = ">=")]
    AtLeast,
    /// `|observed - bound| <= ci` (or `<= tol` stored in `ci` for exact rows).
    #[serde(rename = "~")]
    Near,
    #[serde(rename = "<")]
    Below,
}

impl fmt::Display for Relation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Relation::AtMost => "<=",
            Relation::AtLeast => ">=",
            Relation::Near => "~",
            Relation::Below => "<",
        })
    }
}

/// The result this claim shadows. The coverage footer is organized by these.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Subject {
    #[serde(rename = "spike distribution and support")]
    SpikeBasic,
    #[serde(rename = "spike Fourier tail")]
    SpikeTail,
    #[serde(rename = "block norm, floor and tail")]
    BlockBasic,
    #[serde(rename = "block L^p size")]
    BlockLp,
    #[serde(rename = "local amplification")]
    LocalAmplification,
    #[serde(rename = "length recursion")]
    LengthRecursion,
    #[serde(rename = "independence and success probability")]
    Independence,
    #[serde(rename = "master principle")]
    MasterPrinciple,
    #[serde(rename = "endpoint scale control")]
    EndpointScale,
    #[serde(rename = "endpoint tail summation")]
    EndpointTail,
    #[serde(rename = "admissible moduli")]
    Admissible,
    #[serde(rename = "large L^p partial sums")]
    LargeSums,
    #[serde(rename = "bounded hitting set")]
    Bounded,
    #[serde(rename = "plumbing")]
    Plumbing,
}

impl Subject {
    pub const COVERED: [Subject; 13] = [
        Subject::SpikeBasic,
        Subject::SpikeTail,
        Subject::BlockBasic,
        Subject::BlockLp,
        Subject::LocalAmplification,
        Subject::LengthRecursion,
        Subject::Independence,
        Subject::MasterPrinciple,
        Subject::EndpointScale,
        Subject::EndpointTail,
        Subject::Admissible,
        Subject::LargeSums,
        Subject::Bounded,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Subject::SpikeBasic => "spike distribution and support",
            Subject::SpikeTail => "spike Fourier tail",
            Subject::BlockBasic => "block norm, floor and tail",
            Subject::BlockLp => "block L^p size",
            Subject::LocalAmplification => "local amplification",
            Subject::LengthRecursion => "length recursion",
            Subject::Independence => "independence and success probability",
            Subject::MasterPrinciple => "master principle",
            Subject::EndpointScale => "endpoint scale control",
            Subject::EndpointTail => "endpoint tail summation",
            Subject::Admissible => "admissible moduli",
            Subject::LargeSums => "large L^p partial sums",
            Subject::Bounded => "bounded hitting set",
            Subject::Plumbing => "plumbing",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub claim: String,
    pub subject: Subject,
    pub kind: Kind,
    pub observed: f64,
    pub relation: Relation,
    pub bound: f64,
    /// Confidence half-width for MC rows; tolerance for `~` exact rows; 0 otherwise.
    pub ci: f64,
    pub verdict: Verdict,
    /// First 16 hex digits of SHA-256 over the claim and its parameters.
    pub params: String,
    pub detail: String,
}

pub fn digest(claim: &str, params: &str) -> String {
    let mut h = Sha256::new();
    h.update(claim.as_bytes());
    h.update([0u8]);
    h.update(params.as_bytes());
    hex::encode(&h.finalize()[..8])
}

fn decide(kind: Kind, observed: f64, relation: Relation, bound: f64, ci: f64) -> Verdict {
    if !observed.is_finite() && !(relation == Relation::AtLeast && observed == f64::INFINITY) {
        return Verdict::Fail;
    }
    // MC rows pass when the bound is inside the interval's reach.
    let slack = if kind == Kind::MonteCarlo { ci } else { 0.0 };
    let ok = match relation {
        Relation::AtMost => observed - slack <= bound,
        Relation::AtLeast => observed + slack >= bound,
        Relation::Near => (observed - bound).abs() <= ci,
        Relation::Below => observed - slack < bound,
    };
    if ok {
        Verdict::Pass
    } else {
        Verdict::Fail
    }
}

impl ReportRow {
    /// A claim row; the verdict follows from the numbers.
    pub fn claim(
        claim: &str,
        subject: Subject,
        kind: Kind,
        observed: f64,
        relation: Relation,
        bound: f64,
        ci: f64,
        params: &str,
        detail: impl Into<String>,
    ) -> ReportRow {
        ReportRow {
            claim: claim.to_string(),
            subject,
            kind,
            observed,
            relation,
            bound,
            ci,
            verdict: decide(kind, observed, relation, bound, ci),
            params: digest(claim, params),
            detail: detail.into(),
        }
    }

    /// A structural yes/no row.
    pub fn check(claim: &str, subject: Subject, ok: bool, params: &str, detail: impl Into<String>) -> ReportRow {
        let mut row = ReportRow::claim(claim, subject, Kind::Structural, ok as u8 as f64, Relation::AtLeast, 1.0, 0.0, params, detail);
        row.verdict = if ok { Verdict::Pass } else { Verdict::Fail };
        row
    }

    pub fn note(claim: &str, subject: Subject, kind: Kind, observed: f64, params: &str, detail: impl Into<String>) -> ReportRow {
        let mut row = ReportRow::claim(claim, subject, kind, observed, Relation::Near, observed, 0.0, params, detail);
        row.verdict = Verdict::Note;
        row
    }

    pub fn passed(&self) -> bool {
        self.verdict != Verdict::Fail
    }
}

/// A list of rows with its CSV and summary forms.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Report {
    pub title: String,
    pub rows: Vec<ReportRow>,
}

impl Report {
    pub const SCHEMA: &'static str = "# spikeblock report v1";

    pub fn new(title: impl Into<String>) -> Report {
        Report { title: title.into(), rows: Vec::new() }
    }

    pub fn extend(&mut self, rows: impl IntoIterator<Item = ReportRow>) {
        self.rows.extend(rows);
    }

    pub fn passed(&self) -> bool {
        self.rows.iter().all(ReportRow::passed)
    }

    pub fn failures(&self) -> Vec<&ReportRow> {
        self.rows.iter().filter(|r| !r.passed()).collect()
    }

    /// `(subject, rows, failed rows)` for every covered subject.
    pub fn coverage(&self) -> Vec<(Subject, usize, usize)> {
        Subject::COVERED
            .iter()
            .map(|&s| {
                let rows: Vec<_> = self.rows.iter().filter(|r| r.subject == s).collect();
                (s, rows.len(), rows.iter().filter(|r| !r.passed()).count())
            })
            .collect()
    }

    fn coverage_lines(&self) -> Vec<String> {
        self.coverage()
            .into_iter()
            .map(|(s, n, bad)| match (n, bad) {
                (0, _) => format!("{}: not exercised", s.name()),
                (n, 0) => format!("{}: {n} rows, all pass", s.name()),
                (n, b) => format!("{}: {n} rows, {b} failed", s.name()),
            })
            .collect()
    }

    /// Schema line, header, rows, then the coverage footer as comment lines.
    pub fn to_csv(&self) -> String {
        let mut w = csv::WriterBuilder::new().has_headers(true).from_writer(Vec::new());
        for r in &self.rows {
            w.serialize(r).expect("rows serialize");
        }
        let body = String::from_utf8(w.into_inner().expect("in-memory writer")).expect("utf-8");
        let mut out = format!("{}\n", Self::SCHEMA);
        if self.rows.is_empty() {
            out.push_str("claim,subject,kind,observed,relation,bound,ci,verdict,params,detail\n");
        }
        out.push_str(&body);
        for line in self.coverage_lines() {
            let _ = writeln!(out, "# coverage: {line}");
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Report> {
        if !text.starts_with(Self::SCHEMA) {
            return Err(Error::Malformed(format!("report: missing schema line {:?}", Self::SCHEMA)));
        }
        let mut rd = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(text.as_bytes());
        let rows = rd
            .deserialize()
            .collect::<std::result::Result<Vec<ReportRow>, _>>()
            .map_err(|e| Error::Malformed(format!("report: {e}")))?;
        Ok(Report { title: String::new(), rows })
    }

    /// Human-readable summary: one line per row, grouped by subject, then coverage.
    pub fn summary(&self) -> String {
        let mut out = String::new();
        if !self.title.is_empty() {
            let _ = writeln!(out, "{}", self.title);
        }
        let mut subjects: Vec<Subject> = self.rows.iter().map(|r| r.subject).collect();
        subjects.sort();
        subjects.dedup();
        for s in subjects {
            let _ = writeln!(out, "[{}]", s.name());
            for r in self.rows.iter().filter(|r| r.subject == s) {
                let rel = match r.relation {
                    Relation::AtMost => "<=",
                    Relation::AtLeast => ">=",
                    Relation::Near => "~",
                    Relation::Below => "<",
                };
                let ci = if r.kind == Kind::MonteCarlo { format!(" +/- {:.3e}", r.ci) } else { String::new() };
                let _ = writeln!(
                    out,
                    "  {:<4} {:<40} {:.6e}{ci} {rel} {:.6e}  {}",
                    r.verdict.to_string(),
                    r.claim,
                    r.observed,
                    r.bound,
                    r.detail
                );
            }
        }
        let fails = self.failures().len();
        let _ = writeln!(out, "coverage:");
        for line in self.coverage_lines() {
            let _ = writeln!(out, "  {line}");
        }
        let _ = writeln!(out, "{} rows, {} failed: {}", self.rows.len(), fails, if fails == 0 { "PASS" } else { "FAIL" });
        out
    }
}
