//! Structured pass/fail evidence produced by the numerical probes.

use serde::Serialize;
use std::collections::BTreeMap;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Pass,
    Fail,
    Inconclusive,
}

impl Status {
    /// Combines two statuses: any failure dominates, then inconclusive.
    pub fn and(self, other: Status) -> Status {
        match (self, other) {
            (Status::Fail, _) | (_, Status::Fail) => Status::Fail,
            (Status::Inconclusive, _) | (_, Status::Inconclusive) => Status::Inconclusive,
            _ => Status::Pass,
        }
    }

    pub fn from_bool(ok: bool) -> Status {
        if ok {
            Status::Pass
        } else {
            Status::Fail
        }
    }
}

impl std::fmt::Display for Status {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Status::Pass => "PASS",
            Status::Fail => "FAIL",
            Status::Inconclusive => "INCONCLUSIVE",
        })
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ReportEntry {
    pub name: String,
    pub status: Status,
    pub constants: BTreeMap<String, f64>,
    pub worst_residual: f64,
    pub witness: Option<Vec<f64>>,
    pub notes: Vec<String>,
}

impl ReportEntry {
    pub fn new(name: impl Into<String>, status: Status) -> Self {
        Self {
            name: name.into(),
            status,
            constants: BTreeMap::new(),
            worst_residual: 0.0,
            witness: None,
            notes: Vec::new(),
        }
    }

    pub fn constant(mut self, key: &str, value: f64) -> Self {
        self.constants.insert(key.to_string(), value);
        self
    }

    pub fn residual(mut self, r: f64) -> Self {
        self.worst_residual = r;
        self
    }

    pub fn witness(mut self, w: Vec<f64>) -> Self {
        self.witness = Some(w);
        self
    }

    pub fn note(mut self, n: impl Into<String>) -> Self {
        self.notes.push(n.into());
        self
    }
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct VerificationReport {
    pub model: String,
    pub entries: Vec<ReportEntry>,
}

impl VerificationReport {
    pub fn new(model: impl Into<String>) -> Self {
        Self {
            model: model.into(),
            entries: Vec::new(),
        }
    }

    pub fn push(&mut self, e: ReportEntry) {
        self.entries.push(e);
    }

    pub fn get(&self, name: &str) -> Option<&ReportEntry> {
        self.entries.iter().find(|e| e.name == name)
    }

    pub fn overall(&self) -> Status {
        self.entries.iter().fold(Status::Pass, |s, e| s.and(e.status))
    }

    /// Plain-text table, one entry per line.
    pub fn render(&self) -> String {
        let mut out = format!("model: {}\n", self.model);
        for e in &self.entries {
            let consts: Vec<String> = e.constants.iter().map(|(k, v)| format!("{k}={v:.6e}")).collect();
            out.push_str(&format!(
                "{:<22} {:<13} residual={:.3e} {}\n",
                e.name,
                e.status.to_string(),
                e.worst_residual,
                consts.join(" ")
            ));
        }
        out
    }
}
