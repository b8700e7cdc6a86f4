//! Where results go: stdout or `--out`, CSV or JSON, with a run manifest
//! embedded in JSON documents and written next to every other file.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::time::SystemTime;

use serde::Serialize;
use serde_json::{json, Value};

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub subcommand: &'static str,
    /// Resolved parameters, SI units.
    pub params: Value,
    pub version: &'static str,
    pub timestamp: String,
}

impl RunManifest {
    pub fn new(subcommand: &'static str, params: Value) -> Self {
        Self {
            subcommand,
            params,
            version: env!("CARGO_PKG_VERSION"),
            timestamp: humantime::format_rfc3339_seconds(SystemTime::now()).to_string(),
        }
    }
}

/// One tabular artifact; `label` distinguishes several from one run.
pub struct Table {
    pub label: Option<String>,
    pub csv: Vec<u8>,
}

/// Everything a subcommand produced, before deciding where it goes.
pub struct Report {
    pub result: Value,
    pub tables: Vec<Table>,
    /// Human-readable summary.
    pub text: String,
    /// Extra JSON file written beside `--out` as `<stem>.<suffix>.json`.
    pub sidecar: Option<(&'static str, Value)>,
}

impl Report {
    pub fn new(result: Value, text: String) -> Self {
        Self {
            result,
            tables: Vec::new(),
            text,
            sidecar: None,
        }
    }

    pub fn with_table(mut self, label: Option<String>, csv: Vec<u8>) -> Self {
        self.tables.push(Table { label, csv });
        self
    }
}

pub struct Sink {
    pub json: bool,
    pub out: Option<PathBuf>,
    pub quiet: bool,
}

fn with_suffix(path: &Path, suffix: &str, ext: &str) -> PathBuf {
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    path.with_file_name(format!("{stem}{suffix}.{ext}"))
}

fn labelled(path: &Path, label: Option<&str>) -> PathBuf {
    match label {
        None => path.to_path_buf(),
        Some(l) => {
            let ext = path
                .extension()
                .map(|e| e.to_string_lossy().into_owned())
                .unwrap_or_else(|| "csv".into());
            with_suffix(path, &format!("_{l}"), &ext)
        }
    }
}

fn manifest_path(path: &Path) -> PathBuf {
    let mut name = path.as_os_str().to_owned();
    name.push(".manifest.json");
    PathBuf::from(name)
}

fn write_json(path: &Path, value: &Value) -> io::Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)
}

impl Sink {
    pub fn emit(&self, manifest: &RunManifest, report: Report) -> io::Result<()> {
        let stdout = io::stdout();
        let mut stdout = stdout.lock();
        if self.json {
            let doc = json!({ "manifest": manifest, "result": report.result });
            match &self.out {
                Some(path) => {
                    write_json(path, &doc)?;
                    self.say(&mut stdout, &report.text)?;
                }
                None => {
                    serde_json::to_writer_pretty(&mut stdout, &doc)?;
                    writeln!(stdout)?;
                }
            }
            return Ok(());
        }

        let manifest_value = serde_json::to_value(manifest)?;
        match &self.out {
            Some(path) => {
                if report.tables.is_empty() {
                    fs::write(path, &report.text)?;
                    write_json(&manifest_path(path), &manifest_value)?;
                } else {
                    let many = report.tables.len() > 1;
                    for t in &report.tables {
                        let p = labelled(path, t.label.as_deref().filter(|_| many));
                        fs::write(&p, &t.csv)?;
                        write_json(&manifest_path(&p), &manifest_value)?;
                    }
                    self.say(&mut stdout, &report.text)?;
                }
                if let Some((suffix, value)) = &report.sidecar {
                    let doc = json!({ "manifest": manifest, "summary": value });
                    write_json(&with_suffix(path, &format!(".{suffix}"), "json"), &doc)?;
                }
            }
            None if report.tables.is_empty() => stdout.write_all(report.text.as_bytes())?,
            None => {
                let many = report.tables.len() > 1;
                for t in &report.tables {
                    if let (true, Some(l)) = (many, &t.label) {
                        writeln!(stdout, "# {l}")?;
                    }
                    stdout.write_all(&t.csv)?;
                }
                if !self.quiet {
                    eprint!("{}", report.text);
                }
            }
        }
        Ok(())
    }

    /// Sidecar manifest for a file written outside [`Sink::emit`].
    pub fn write_manifest_for(&self, path: &Path, manifest: &RunManifest) -> io::Result<()> {
        write_json(&manifest_path(path), &serde_json::to_value(manifest)?)
    }

    fn say(&self, w: &mut impl Write, text: &str) -> io::Result<()> {
        if self.quiet {
            Ok(())
        } else {
            w.write_all(text.as_bytes())
        }
    }

    pub fn warn(&self, msg: &str) {
        if !self.quiet {
            eprintln!("warning: {msg}");
        }
    }
}
