//! CSV rendering and run manifests.

use serde_json::{json, Value};
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};

/// Numeric cells use 17 significant digits.
pub fn num(v: f64) -> String {
    format!("{v:.16e}")
}

/// An in-memory CSV table.
pub struct Table {
    header: Vec<&'static str>,
    rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &[&'static str]) -> Self {
        Self { header: header.to_vec(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn render(&self) -> String {
        let mut s = self.header.join(",");
        s.push('\n');
        for row in &self.rows {
            let _ = writeln!(s, "{}", row.join(","));
        }
        s
    }
}

/// Write `body` to `out` (or standard output) and emit the manifest.
pub fn emit(body: &str, out: Option<&Path>, manifest: Value) -> std::io::Result<()> {
    match out {
        Some(path) => {
            std::fs::write(path, body).map_err(|e| annotate(path, e))?;
            let sidecar = manifest_path(path);
            let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
            std::fs::write(&sidecar, text + "\n").map_err(|e| annotate(&sidecar, e))?;
        }
        None => {
            std::io::stdout().write_all(body.as_bytes())?;
            eprintln!("manifest: {manifest}");
        }
    }
    Ok(())
}

fn annotate(path: &Path, e: std::io::Error) -> std::io::Error {
    std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))
}

/// `<out>.manifest.json`.
pub fn manifest_path(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".manifest.json");
    PathBuf::from(s)
}

/// Manifest record: subcommand, resolved flags, library version, outputs, wall clock.
pub fn manifest(flags: Value, out: Option<&Path>, seconds: f64) -> Value {
    let subcommand = flags
        .get("command")
        .and_then(|c| c.as_object())
        .and_then(|c| c.keys().next().cloned())
        .unwrap_or_default();
    json!({
        "subcommand": subcommand,
        "flags": flags,
        "seed": flags.get("seed"),
        "library_version": env!("CARGO_PKG_VERSION"),
        "outputs": out.map(|p| vec![p.display().to_string()]).unwrap_or_default(),
        "wall_clock_seconds": seconds,
    })
}
