//! Experiment report structure and CSV rendering.

use std::collections::BTreeMap;

/// One evaluated row: instance id, a grouping key (method, net label, or
/// sigma depending on the experiment), and the value columns.
#[derive(Debug, Clone)]
pub struct ReportRow {
    pub id: String,
    pub key: String,
    pub values: Vec<f64>,
}

/// Result table of one experiment run: rows, per-key mean summary, skip list
/// with reasons, and the resolved configuration echo.
#[derive(Debug, Clone)]
pub struct ExperimentReport {
    pub name: String,
    /// Name of the grouping column, e.g. `method`.
    pub key_name: String,
    /// Names of the value columns.
    pub columns: Vec<String>,
    pub rows: Vec<ReportRow>,
    /// Mean of each value column per key, in first-appearance order.
    pub summary: Vec<(String, Vec<f64>)>,
    /// `(instance id, reason)` for instances that produced no rows.
    pub skipped: Vec<(String, String)>,
    /// Number of instances that produced rows.
    pub evaluated: usize,
    pub config_echo: String,
}

impl ExperimentReport {
    pub fn new(name: &str, key_name: &str, columns: &[&str], config_echo: String) -> Self {
        ExperimentReport {
            name: name.to_string(),
            key_name: key_name.to_string(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
            summary: Vec::new(),
            skipped: Vec::new(),
            evaluated: 0,
            config_echo,
        }
    }

    pub fn push_row(&mut self, id: &str, key: &str, values: Vec<f64>) {
        debug_assert_eq!(values.len(), self.columns.len());
        self.rows.push(ReportRow { id: id.to_string(), key: key.to_string(), values });
    }

    pub fn skip(&mut self, id: &str, reason: &str) {
        self.skipped.push((id.to_string(), reason.to_string()));
    }

    /// Computes per-key column means over the accumulated rows.
    pub fn finish_summary(&mut self) {
        let mut order = Vec::new();
        let mut acc: BTreeMap<String, (usize, Vec<f64>)> = BTreeMap::new();
        for row in &self.rows {
            if !acc.contains_key(&row.key) {
                order.push(row.key.clone());
            }
            let entry = acc
                .entry(row.key.clone())
                .or_insert_with(|| (0, vec![0.0; self.columns.len()]));
            entry.0 += 1;
            for (a, v) in entry.1.iter_mut().zip(&row.values) {
                *a += v;
            }
        }
        self.summary = order
            .into_iter()
            .map(|key| {
                let (n, sums) = &acc[&key];
                (key, sums.iter().map(|s| s / *n as f64).collect())
            })
            .collect();
    }

    /// `(instances evaluated, instances skipped)`.
    pub fn instance_accounting(&self) -> (usize, usize) {
        (self.evaluated, self.skipped.len())
    }

    /// Data CSV: `id,<key>,<columns...>`, one row per evaluated entry.
    pub fn rows_csv(&self) -> String {
        let mut s = format!("id,{},{}\n", self.key_name, self.columns.join(","));
        for row in &self.rows {
            s.push_str(&format!("{},{}", row.id, row.key));
            for v in &row.values {
                s.push_str(&format!(",{v:.6}"));
            }
            s.push('\n');
        }
        s
    }

    /// Summary CSV: `<key>,<columns...>` with one mean row per key.
    pub fn summary_csv(&self) -> String {
        let mut s = format!("{},{}\n", self.key_name, self.columns.join(","));
        for (key, means) in &self.summary {
            s.push_str(key);
            for v in means {
                s.push_str(&format!(",{v:.6}"));
            }
            s.push('\n');
        }
        s
    }

    /// Skip list CSV: `id,reason`, then one `count,<n>` trailer.
    pub fn skipped_csv(&self) -> String {
        let mut s = String::from("id,reason\n");
        for (id, reason) in &self.skipped {
            s.push_str(&format!("{id},{reason}\n"));
        }
        s.push_str(&format!("count,{}\n", self.skipped.len()));
        s
    }

    /// Mean of one column for one key, when present.
    pub fn mean_of(&self, key: &str, column: &str) -> Option<f64> {
        let col = self.columns.iter().position(|c| c == column)?;
        self.summary.iter().find(|(k, _)| k == key).map(|(_, means)| means[col])
    }
}
