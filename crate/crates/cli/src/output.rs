use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;

use serde::Serialize;

use crate::config::RunConfig;
use crate::error::{Failure, ResultExt};

/// Provenance stamped into every artifact.
#[derive(Debug, Clone, Serialize)]
pub struct Audit {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    pub config: RunConfig,
}

impl Audit {
    pub fn new(command: &str, config: &RunConfig) -> Self {
        Self { tool: "coatplan", version: env!("CARGO_PKG_VERSION"), command: command.to_string(), config: config.clone() }
    }

    /// Header lines for CSV files; the writers prefix each with `# `.
    pub fn comment_lines(&self) -> Vec<String> {
        vec![
            format!("{} {}", self.tool, self.version),
            format!("command: {}", self.command),
            format!("config: {}", serde_json::to_string(&self.config).expect("config serializes")),
        ]
    }
}

pub struct Outputs {
    dir: PathBuf,
    pub audit: Audit,
    written: Vec<PathBuf>,
}

impl Outputs {
    pub fn new(command: &str, config: &RunConfig) -> Result<Self, Failure> {
        let dir = config.data.out.clone();
        std::fs::create_dir_all(&dir).config_err(|| format!("creating output directory {}", dir.display()))?;
        Ok(Self { dir, audit: Audit::new(command, config), written: Vec::new() })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    /// Open a file for writing with the audit header already in place.
    pub fn create(&mut self, name: &str) -> Result<BufWriter<File>, Failure> {
        let path = self.path(name);
        let file = File::create(&path).config_err(|| format!("creating {}", path.display()))?;
        self.written.push(path);
        Ok(BufWriter::new(file))
    }

    /// A plain CSV table: audit comments, header, rows.
    pub fn table(&mut self, name: &str, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<(), Failure> {
        let mut out = self.create(name)?;
        let res: Result<(), anyhow::Error> = (|| {
            for line in self.audit.comment_lines() {
                writeln!(out, "# {line}")?;
            }
            let mut w = csv::Writer::from_writer(&mut out);
            w.write_record(header)?;
            for row in rows {
                w.write_record(&row)?;
            }
            w.flush()?;
            drop(w);
            out.flush()?;
            Ok(())
        })();
        res.config_err(|| format!("writing {name}"))
    }

    /// A JSON document whose first field is the audit record.
    pub fn json<T: Serialize>(&mut self, name: &str, body: &T) -> Result<(), Failure> {
        let mut value = serde_json::to_value(body).config_err(|| format!("serializing {name}"))?;
        let mut doc = serde_json::Map::new();
        doc.insert("audit".into(), serde_json::to_value(&self.audit).expect("audit serializes"));
        match value.take() {
            serde_json::Value::Object(fields) => doc.extend(fields),
            other => {
                doc.insert("result".into(), other);
            }
        }
        let mut out = self.create(name)?;
        let res: Result<(), anyhow::Error> = (|| {
            serde_json::to_writer_pretty(&mut out, &doc)?;
            writeln!(out)?;
            out.flush()?;
            Ok(())
        })();
        res.config_err(|| format!("writing {name}"))
    }

    pub fn written(&self) -> &[PathBuf] {
        &self.written
    }
}

pub fn num(x: f64) -> String {
    x.to_string()
}

pub fn display(paths: &[PathBuf]) -> String {
    paths.iter().map(|p| p.display().to_string()).collect::<Vec<_>>().join(", ")
}

