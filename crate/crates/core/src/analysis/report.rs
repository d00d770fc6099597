use std::fmt::Write as _;

/// Outcome of one empirical check. `pass` is decided by the constructor of
/// each check from its statistics and tolerance.
#[derive(Debug, Clone, PartialEq)]
pub struct TheoremReport {
    pub id: String,
    pub pass: bool,
    /// Measured statistics in a fixed order.
    pub stats: Vec<(String, f64)>,
    pub tolerance: f64,
    pub samples: usize,
    pub seeds: Vec<u64>,
    /// Free-form remarks, e.g. anomalies that are reported but not asserted.
    pub notes: Vec<String>,
}

impl TheoremReport {
    pub fn new(id: impl Into<String>, tolerance: f64, samples: usize) -> Self {
        Self {
            id: id.into(),
            pass: false,
            stats: Vec::new(),
            tolerance,
            samples,
            seeds: Vec::new(),
            notes: Vec::new(),
        }
    }

    pub fn stat(&self, key: &str) -> Option<f64> {
        self.stats.iter().find(|(k, _)| k == key).map(|(_, v)| *v)
    }

    pub(crate) fn push(&mut self, key: impl Into<String>, value: f64) {
        self.stats.push((key.into(), value));
    }

    fn seeds_text(&self) -> String {
        self.seeds
            .iter()
            .map(u64::to_string)
            .collect::<Vec<_>>()
            .join(" ")
    }

    /// Flat `key = value` text.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "id = {}", self.id);
        let _ = writeln!(out, "pass = {}", self.pass);
        let _ = writeln!(out, "tolerance = {:e}", self.tolerance);
        let _ = writeln!(out, "samples = {}", self.samples);
        let _ = writeln!(out, "seeds = {}", self.seeds_text());
        for (k, v) in &self.stats {
            let _ = writeln!(out, "{k} = {v:.17e}");
        }
        for note in &self.notes {
            let _ = writeln!(out, "note = {note}");
        }
        out
    }
}

/// One row per report: `id,pass,tolerance,samples,seeds,stats` where
/// `stats` is `key=value` pairs joined by `;`.
pub fn summary_csv(reports: &[TheoremReport]) -> String {
    let mut out = String::from("id,pass,tolerance,samples,seeds,stats\n");
    for r in reports {
        let stats = r
            .stats
            .iter()
            .map(|(k, v)| format!("{k}={v:.17e}"))
            .collect::<Vec<_>>()
            .join(";");
        let _ = writeln!(
            out,
            "{},{},{:e},{},{},{}",
            r.id,
            r.pass,
            r.tolerance,
            r.samples,
            r.seeds_text(),
            stats
        );
    }
    out
}
