//! Minimal CSV writer: comma separator, `.` decimal point, LF line endings,
//! no quoting (no field ever contains a comma). Numeric formatting is fixed
//! so identical runs produce byte-identical files.

use proxclass_core::Result;
use std::io::Write;
use std::path::Path;

/// Fixed-format float: scientific for very small magnitudes, plain six
/// decimals otherwise.
pub fn fmt_f64(v: f64) -> String {
    if v != 0.0 && v.abs() < 1e-3 {
        format!("{v:.6e}")
    } else {
        format!("{v:.6}")
    }
}

pub struct CsvTable {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl CsvTable {
    pub fn new<S: Into<String>>(header: Vec<S>) -> Self {
        Self { header: header.into_iter().map(Into::into).collect(), rows: Vec::new() }
    }

    pub fn row(&mut self, fields: Vec<String>) {
        assert_eq!(fields.len(), self.header.len(), "row width must match header");
        self.rows.push(fields);
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut out = String::new();
        out.push_str(&self.header.join(","));
        out.push('\n');
        for row in &self.rows {
            out.push_str(&row.join(","));
            out.push('\n');
        }
        let mut file = std::fs::File::create(path)?;
        file.write_all(out.as_bytes())?;
        Ok(())
    }
}
