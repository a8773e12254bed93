//! File emission. Every run writes either CSV tables plus a `_meta.json`
//! sidecar, or one JSON document per table; both carry the schema version
//! and the resolved configuration.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;

use crate::config::{Format, RunConfig};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Serialize)]
struct Envelope<'a, S: Serialize, R: Serialize> {
    schema_version: u32,
    command: &'static str,
    config: &'a RunConfig,
    #[serde(flatten)]
    summary: &'a S,
    #[serde(skip_serializing_if = "Option::is_none")]
    rows: Option<&'a [R]>,
}

pub struct Output<'a> {
    config: &'a RunConfig,
    dir: PathBuf,
    pub written: Vec<PathBuf>,
}

impl<'a> Output<'a> {
    pub fn new(config: &'a RunConfig) -> Result<Self> {
        fs::create_dir_all(&config.out)
            .with_context(|| format!("cannot create output directory {}", config.out.display()))?;
        Ok(Output {
            config,
            dir: config.out.clone(),
            written: Vec::new(),
        })
    }

    fn path(&self, file: &str) -> PathBuf {
        self.dir.join(file)
    }

    /// Writes a table in the configured format. `summary` is any serializable
    /// struct whose fields land at the top level of the JSON document.
    pub fn table<S: Serialize, R: Serialize>(&mut self, name: &str, summary: &S, rows: &[R]) -> Result<()> {
        match self.config.format {
            Format::Csv => {
                self.csv(&format!("{name}.csv"), rows)?;
                self.json_doc(&format!("{name}_meta.json"), summary, None::<&[R]>)
            }
            Format::Json => self.json_doc(&format!("{name}.json"), summary, Some(rows)),
        }
    }

    /// Table always written as CSV, whatever the format.
    pub fn csv<R: Serialize>(&mut self, file: &str, rows: &[R]) -> Result<()> {
        let path = self.path(file);
        let mut w = csv::Writer::from_path(&path).with_context(|| format!("cannot write {}", path.display()))?;
        for r in rows {
            w.serialize(r)?;
        }
        w.flush()?;
        self.written.push(path);
        Ok(())
    }

    /// Single JSON document without a row table.
    pub fn json<S: Serialize>(&mut self, file: &str, summary: &S) -> Result<()> {
        self.json_doc(file, summary, None::<&[()]>)
    }

    fn json_doc<S: Serialize, R: Serialize>(&mut self, file: &str, summary: &S, rows: Option<&[R]>) -> Result<()> {
        let env = Envelope {
            schema_version: SCHEMA_VERSION,
            command: self.config.command.name(),
            config: self.config,
            summary,
            rows,
        };
        let mut text = serde_json::to_string_pretty(&env)?;
        text.push('\n');
        self.text(file, &text)
    }

    pub fn text(&mut self, file: &str, content: &str) -> Result<()> {
        let path = self.path(file);
        fs::write(&path, content).with_context(|| format!("cannot write {}", path.display()))?;
        self.written.push(path);
        Ok(())
    }

    pub fn svg(&mut self, file: &str, content: impl FnOnce() -> String) -> Result<()> {
        if self.config.svg {
            self.text(file, &content())?;
        }
        Ok(())
    }

    pub fn report(&self) {
        for p in &self.written {
            println!("wrote {}", display(p));
        }
    }
}

fn display(p: &Path) -> String {
    p.display().to_string()
}
