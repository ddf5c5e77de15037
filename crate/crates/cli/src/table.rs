use std::path::Path;

use anyhow::{Context, Result};
use comfy_table::{presets::UTF8_FULL_CONDENSED, Table};

/// A report rendered both as a pretty table on stdout and as CSV on disk.
pub struct Report {
    pub title: String,
    pub headers: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Report {
    pub fn new(title: impl Into<String>, headers: &[&str]) -> Self {
        Report {
            title: title.into(),
            headers: headers.iter().map(|h| h.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn row(&mut self, cells: Vec<String>) {
        debug_assert_eq!(cells.len(), self.headers.len());
        self.rows.push(cells);
    }

    pub fn pretty(&self) -> String {
        let mut t = Table::new();
        t.load_preset(UTF8_FULL_CONDENSED).set_header(&self.headers);
        for r in &self.rows {
            t.add_row(r);
        }
        format!("{}\n{t}", self.title)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).with_context(|| format!("writing {}", path.display()))?;
        w.write_record(&self.headers)?;
        for r in &self.rows {
            w.write_record(r)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Prints the table and writes `<dir>/<name>.csv`.
    pub fn emit(&self, dir: &Path, name: &str) -> Result<()> {
        println!("{}", self.pretty());
        let path = dir.join(format!("{name}.csv"));
        self.write_csv(&path)?;
        println!("wrote {}", path.display());
        Ok(())
    }
}

pub fn f3(x: f64) -> String {
    format!("{x:.3}")
}

pub fn ms(d: std::time::Duration) -> String {
    format!("{:.3}", d.as_secs_f64() * 1e3)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_quotes_commas() {
        let dir = tempfile::tempdir().unwrap();
        let mut r = Report::new("t", &["name", "f1"]);
        r.row(vec!["a, b".into(), f3(0.5)]);
        let p = dir.path().join("r.csv");
        r.write_csv(&p).unwrap();
        assert_eq!(std::fs::read_to_string(p).unwrap(), "name,f1\n\"a, b\",0.500\n");
        assert!(r.pretty().contains("0.500"));
    }
}
