//! Structured text reports: a `key: value` header followed by CSV tables.
//!
//! ```text
//! report: cauchy
//! config.domain: disc2
//! result.dham_cauchy: true
//!
//! ## table: dham_matrix
//! n,4,8
//! 4,0.0000000000000000e0,...
//! ```
//!
//! Keys keep insertion order and reals use 17 significant digits, so
//! identical runs give identical bytes.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::io::fmt_real;

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Table {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(name: &str, columns: &[&str]) -> Self {
        Self { name: name.into(), columns: columns.iter().map(|c| c.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn push_reals(&mut self, row: &[f64]) {
        self.push(row.iter().map(|&v| fmt_real(v)).collect());
    }

    /// Square matrix with row and column labels.
    pub fn matrix(name: &str, labels: &[String], m: &[Vec<f64>]) -> Self {
        let mut columns = vec!["n".to_string()];
        columns.extend(labels.iter().cloned());
        let rows = labels
            .iter()
            .zip(m)
            .map(|(l, r)| std::iter::once(l.clone()).chain(r.iter().map(|&v| fmt_real(v))).collect())
            .collect();
        Self { name: name.into(), columns, rows }
    }

    /// Column `c` parsed as reals.
    pub fn column(&self, c: &str) -> Option<Vec<f64>> {
        let k = self.columns.iter().position(|x| x == c)?;
        self.rows.iter().map(|r| r[k].parse().ok()).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Report {
    pub entries: Vec<(String, String)>,
    pub tables: Vec<Table>,
}

impl Report {
    pub fn new(kind: &str) -> Self {
        let mut r = Self::default();
        r.set("report", kind);
        r
    }

    pub fn set(&mut self, key: &str, value: impl ToString) {
        let v = value.to_string();
        match self.entries.iter_mut().find(|(k, _)| k == key) {
            Some(e) => e.1 = v,
            None => self.entries.push((key.into(), v)),
        }
    }

    pub fn set_real(&mut self, key: &str, v: f64) {
        self.set(key, fmt_real(v));
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn get_real(&self, key: &str) -> Option<f64> {
        self.get(key)?.parse().ok()
    }

    pub fn table(&self, name: &str) -> Option<&Table> {
        self.tables.iter().find(|t| t.name == name)
    }

    pub fn add_table(&mut self, t: Table) {
        self.tables.push(t);
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        for (k, v) in &self.entries {
            let _ = writeln!(s, "{k}: {v}");
        }
        for t in &self.tables {
            let _ = writeln!(s, "\n## table: {}", t.name);
            let _ = writeln!(s, "{}", t.columns.join(","));
            for r in &t.rows {
                let _ = writeln!(s, "{}", r.join(","));
            }
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut r = Self::default();
        let mut current: Option<Table> = None;
        for (n, line) in text.lines().enumerate() {
            let line = line.trim_end();
            if line.is_empty() {
                continue;
            }
            if let Some(name) = line.strip_prefix("## table: ") {
                r.tables.extend(current.take());
                current = Some(Table { name: name.into(), ..Table::default() });
                continue;
            }
            match current.as_mut() {
                Some(t) if t.columns.is_empty() => t.columns = line.split(',').map(String::from).collect(),
                Some(t) => t.rows.push(line.split(',').map(String::from).collect()),
                None => {
                    let (k, v) = line
                        .split_once(": ")
                        .ok_or_else(|| Error::Parse { line: n + 1, msg: format!("expected 'key: value', got '{line}'") })?;
                    r.entries.push((k.into(), v.into()));
                }
            }
        }
        r.tables.extend(current);
        Ok(r)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn render_parse_round_trip() {
        let mut r = Report::new("norm");
        r.set("config.domain", "torus2");
        r.set_real("result.hofer_norm", 0.25);
        let mut t = Table::new("osc", &["t", "osc"]);
        t.push_reals(&[0.0, 1.5]);
        t.push_reals(&[1.0, 2.5]);
        r.add_table(t);
        r.add_table(Table::matrix("m", &["4".into(), "8".into()], &[vec![0.0, 1.0], vec![1.0, 0.0]]));
        let text = r.render();
        assert!(text.starts_with("report: norm\nconfig.domain: torus2\n"));
        let back = Report::parse(&text).unwrap();
        assert_eq!(back, r);
        assert_eq!(back.get_real("result.hofer_norm"), Some(0.25));
        assert_eq!(back.table("osc").unwrap().column("osc"), Some(vec![1.5, 2.5]));
    }

    #[test]
    fn set_overwrites_in_place() {
        let mut r = Report::new("x");
        r.set("a", 1);
        r.set("b", 2);
        r.set("a", 3);
        assert_eq!(r.entries[1], ("a".to_string(), "3".to_string()));
    }
}
