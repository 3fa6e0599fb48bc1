use std::fmt::Display;
use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};

/// Tab-separated table whose first line records the producing stage and the
/// config hash.
#[derive(Debug, Clone)]
pub struct Table {
    header: String,
    columns: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(stage: &str, config_hash: &str, columns: &[&str]) -> Self {
        Self {
            header: format!(
                "# relprobe {} stage={stage} config_hash={config_hash}",
                env!("CARGO_PKG_VERSION")
            ),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn row(&mut self, cells: Vec<String>) {
        debug_assert_eq!(cells.len(), self.columns.len());
        self.rows.push(cells);
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn render(&self) -> String {
        let mut out = format!("{}\n{}\n", self.header, self.columns.join("\t"));
        for r in &self.rows {
            out.push_str(&r.join("\t"));
            out.push('\n');
        }
        out
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_text(path, &self.render())
    }
}

/// Fixed six-decimal formatting for table cells.
pub fn num(v: f64) -> String {
    format!("{v:.6}")
}

pub fn opt_num(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), num)
}

pub fn cell(v: impl Display) -> String {
    v.to_string()
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_text(path, &text)
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    if !path.is_file() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

/// Append-only `run.log` in the output directory.
#[derive(Debug, Clone)]
pub struct RunLog {
    path: PathBuf,
    echo: bool,
}

impl RunLog {
    pub fn new(out_dir: &Path, echo: bool) -> Self {
        Self {
            path: out_dir.join("run.log"),
            echo,
        }
    }

    pub fn line(&self, msg: impl AsRef<str>) -> Result<()> {
        let msg = msg.as_ref();
        if self.echo {
            eprintln!("{msg}");
        }
        if let Some(dir) = self.path.parent() {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        let mut f = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&self.path)
            .map_err(|e| Error::io(&self.path, e))?;
        writeln!(f, "{msg}").map_err(|e| Error::io(&self.path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_render() {
        let mut t = Table::new("depth", "abc", &["a", "b"]);
        t.row(vec![cell(1), num(0.5)]);
        let text = t.render();
        assert!(text.starts_with("# relprobe "));
        assert!(text.contains("config_hash=abc"));
        assert!(text.ends_with("a\tb\n1\t0.500000\n"));
        assert_eq!(opt_num(None), "NA");
    }
}
