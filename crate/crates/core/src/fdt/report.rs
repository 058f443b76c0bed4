use std::io::Write;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Pass,
    Fail,
}

impl Verdict {
    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Pass => "pass",
            Verdict::Fail => "fail",
        }
    }
}

/// One named residual against its tolerance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckRecord {
    pub check: String,
    pub family: String,
    /// Parameters (times, δ, norms, …); keys serialize sorted.
    pub params: Map<String, Value>,
    pub residual: f64,
    pub tolerance: f64,
    pub verdict: Verdict,
}

impl CheckRecord {
    /// Verdict is `pass` iff `residual ≤ tolerance` (a NaN residual fails).
    pub fn new(check: impl Into<String>, family: impl Into<String>, residual: f64, tolerance: f64) -> Self {
        let verdict = if residual <= tolerance { Verdict::Pass } else { Verdict::Fail };
        Self { check: check.into(), family: family.into(), params: Map::new(), residual, tolerance, verdict }
    }

    pub fn param(mut self, key: &str, value: impl Into<Value>) -> Self {
        self.params.insert(key.to_string(), value.into());
        self
    }

    pub fn passed(&self) -> bool {
        self.verdict == Verdict::Pass
    }

    pub fn param_json(&self) -> String {
        serde_json::to_string(&self.params).expect("json map")
    }

    fn sort_key(&self) -> (&str, &str, String) {
        (&self.check, &self.family, self.param_json())
    }
}

/// A collection of check records; merging is order-independent.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FdtReport {
    records: Vec<CheckRecord>,
}

impl FdtReport {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, record: CheckRecord) {
        self.records.push(record);
        self.sort();
    }

    pub fn extend(&mut self, records: impl IntoIterator<Item = CheckRecord>) {
        self.records.extend(records);
        self.sort();
    }

    pub fn merge(mut self, other: FdtReport) -> Self {
        self.extend(other.records);
        self
    }

    fn sort(&mut self) {
        self.records.sort_by(|a, b| {
            a.sort_key().cmp(&b.sort_key()).then(a.residual.total_cmp(&b.residual)).then(a.tolerance.total_cmp(&b.tolerance))
        });
    }

    /// Records sorted by check name, family and parameters.
    pub fn records(&self) -> &[CheckRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn all_pass(&self) -> bool {
        self.records.iter().all(CheckRecord::passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &CheckRecord> {
        self.records.iter().filter(|r| !r.passed())
    }

    /// CSV with columns `check,family,param_json,residual,tolerance,verdict`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let io = |e: csv::Error| Error::InvalidArgument(format!("csv: {e}"));
        out.write_record(["check", "family", "param_json", "residual", "tolerance", "verdict"]).map_err(io)?;
        for r in &self.records {
            out.write_record([
                r.check.as_str(),
                r.family.as_str(),
                &r.param_json(),
                &format!("{:e}", r.residual),
                &format!("{:e}", r.tolerance),
                r.verdict.as_str(),
            ])
            .map_err(io)?;
        }
        out.flush().map_err(|e| Error::InvalidArgument(format!("csv: {e}")))
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("in-memory csv");
        String::from_utf8(buf).expect("utf-8 csv")
    }

    /// JSON document with a summary, the records and an optional timestamp.
    pub fn to_json(&self, timestamp: Option<&str>) -> Value {
        let mut doc = Map::new();
        if let Some(ts) = timestamp {
            doc.insert("timestamp".into(), ts.into());
        }
        doc.insert("all_pass".into(), self.all_pass().into());
        doc.insert("n_checks".into(), self.len().into());
        doc.insert("n_failed".into(), self.failures().count().into());
        doc.insert("records".into(), serde_json::to_value(&self.records).expect("records"));
        Value::Object(doc)
    }
}
