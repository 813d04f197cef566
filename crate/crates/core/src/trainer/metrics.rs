use std::fmt::Write as _;

/// Column order of the metrics CSV.
pub const CSV_HEADER: &str =
    "step,states_visited,loss,l1_error,l1_exact,modes_found,violation_rate,top10_reward,top100_reward";

/// Metrics at one evaluation point. Optional fields are empty in the CSV.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricsRecord {
    pub step: u64,
    pub states_visited: u64,
    /// Mean batch loss since the previous evaluation.
    pub loss: f64,
    pub l1_error: Option<f64>,
    pub l1_exact: Option<f64>,
    pub modes_found: usize,
    pub violation_rate: f64,
    pub top10_reward: Option<f64>,
    pub top100_reward: Option<f64>,
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl MetricsRecord {
    /// One CSV row. Floats use the shortest exact decimal form, so equal
    /// records give byte-identical rows.
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{}",
            self.step,
            self.states_visited,
            self.loss,
            opt(self.l1_error),
            opt(self.l1_exact),
            self.modes_found,
            self.violation_rate,
            opt(self.top10_reward),
            opt(self.top100_reward)
        )
    }

    /// Header plus one row per record, newline terminated.
    pub fn to_csv(records: &[MetricsRecord]) -> String {
        let mut out = String::with_capacity(64 * (records.len() + 1));
        out.push_str(CSV_HEADER);
        out.push('\n');
        for r in records {
            let _ = writeln!(out, "{}", r.csv_row());
        }
        out
    }

    /// Value of a named column, `None` for empty optional fields.
    pub fn column(&self, name: &str) -> Option<f64> {
        match name {
            "step" => Some(self.step as f64),
            "states_visited" => Some(self.states_visited as f64),
            "loss" => Some(self.loss),
            "l1_error" => self.l1_error,
            "l1_exact" => self.l1_exact,
            "modes_found" => Some(self.modes_found as f64),
            "violation_rate" => Some(self.violation_rate),
            "top10_reward" => self.top10_reward,
            "top100_reward" => self.top100_reward,
            _ => None,
        }
    }
}
