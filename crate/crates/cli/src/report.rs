use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;

use serde::Serialize;
use serde_json::Value;

pub const SCHEMA_VERSION: u32 = 1;

/// One evaluated instance.  `data` holds the exact inputs needed to replay it.
#[derive(Debug, Clone, Serialize)]
pub struct Case {
    pub id: String,
    pub pass: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lhs: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rhs: Option<f64>,
    pub data: Value,
}

impl Case {
    pub fn new(id: impl Into<String>, pass: bool, data: Value) -> Self {
        Case { id: id.into(), pass, lhs: None, rhs: None, data }
    }

    pub fn bound(id: impl Into<String>, lhs: f64, rhs: f64, pass: bool, data: Value) -> Self {
        Case { id: id.into(), pass, lhs: Some(lhs), rhs: Some(rhs), data }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Section {
    pub name: String,
    /// false for diagnostic sections, which never affect the verdict
    pub enforced: bool,
    pub evaluated: usize,
    pub failures: usize,
    pub pass: bool,
    pub summary: Value,
    /// every case, or only the failing ones for large trial runs
    pub cases: Vec<Case>,
}

impl Section {
    pub fn from_cases(name: &str, enforced: bool, cases: Vec<Case>, keep_passing: bool, summary: Value) -> Self {
        let evaluated = cases.len();
        let failures = cases.iter().filter(|c| !c.pass).count();
        let cases = if keep_passing { cases } else { cases.into_iter().filter(|c| !c.pass).collect() };
        Section { name: name.to_string(), enforced, evaluated, failures, pass: failures == 0, summary, cases }
    }

    pub fn diagnostic(mut self) -> Self {
        self.enforced = false;
        self
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub schema: u32,
    pub suite: String,
    pub config: Value,
    pub sections: Vec<Section>,
    /// enforced failures, with full inputs
    pub counterexamples: Vec<Value>,
    pub pass: bool,
}

const MAX_COUNTEREXAMPLES: usize = 20;

impl Report {
    pub fn new(suite: &str, config: Value, sections: Vec<Section>) -> Self {
        let mut counterexamples = Vec::new();
        for s in sections.iter().filter(|s| s.enforced) {
            for c in s.cases.iter().filter(|c| !c.pass).take(MAX_COUNTEREXAMPLES) {
                counterexamples.push(serde_json::json!({ "section": s.name, "id": c.id, "data": c.data }));
            }
        }
        let pass = sections.iter().filter(|s| s.enforced).all(|s| s.pass);
        Report { schema: SCHEMA_VERSION, suite: suite.to_string(), config, sections, counterexamples, pass }
    }

    pub fn section(&self, name: &str) -> Option<&Section> {
        self.sections.iter().find(|s| s.name == name)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    /// section,id,pass,lhs,rhs for every retained case.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("section,id,pass,lhs,rhs\n");
        let num = |x: Option<f64>| x.map(|v| format!("{v:e}")).unwrap_or_default();
        for sec in &self.sections {
            for c in &sec.cases {
                let id = if c.id.contains(',') { format!("\"{}\"", c.id) } else { c.id.clone() };
                let _ = writeln!(s, "{},{},{},{},{}", sec.name, id, c.pass, num(c.lhs), num(c.rhs));
            }
        }
        s
    }
}

/// Write via a temporary file in the same directory and rename.
pub fn write_atomic(path: &Path, contents: &str) -> std::io::Result<()> {
    let dir = path.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_else(|| "report".into());
    let tmp = dir.join(format!(".{name}.{}.tmp", std::process::id()));
    {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(contents.as_bytes())?;
        f.sync_all()?;
    }
    std::fs::rename(&tmp, path).inspect_err(|_| {
        let _ = std::fs::remove_file(&tmp);
    })
}
