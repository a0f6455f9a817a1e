//! Report files. Every file carries the tool version and the resolved config:
//! JSON as an envelope, CSV as leading `#` comment lines.

use crate::config::ExperimentConfig;
use serde::{Deserialize, Serialize};
use std::fs;
use std::io::Write;
use std::path::PathBuf;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Serialize, Deserialize)]
pub struct Envelope<T> {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub config: ExperimentConfig,
    pub data: T,
}

pub struct Writer {
    dir: PathBuf,
    command: &'static str,
    config: ExperimentConfig,
}

impl Writer {
    pub fn new(config: &ExperimentConfig, command: &'static str) -> std::io::Result<Self> {
        fs::create_dir_all(&config.out_dir)?;
        Ok(Self { dir: config.out_dir.clone(), command, config: config.clone() })
    }

    pub fn json<T: Serialize>(&mut self, name: &str, data: T) -> std::io::Result<()> {
        let env = Envelope {
            tool: "quantlap".into(),
            version: VERSION.into(),
            command: self.command.into(),
            config: self.config.clone(),
            data,
        };
        let mut text = serde_json::to_string_pretty(&env).map_err(std::io::Error::other)?;
        text.push('\n');
        self.save(name, text.as_bytes())
    }

    pub fn csv<T: Serialize>(&mut self, name: &str, rows: &[T]) -> std::io::Result<()> {
        let mut buf = Vec::new();
        writeln!(buf, "# quantlap {VERSION} {}", self.command)?;
        let cfg = serde_json::to_string(&self.config).map_err(std::io::Error::other)?;
        writeln!(buf, "# config {cfg}")?;
        {
            let mut w = csv::Writer::from_writer(&mut buf);
            for r in rows {
                w.serialize(r).map_err(std::io::Error::other)?;
            }
            w.flush()?;
        }
        self.save(name, &buf)
    }

    fn save(&mut self, name: &str, bytes: &[u8]) -> std::io::Result<()> {
        let path = self.dir.join(name);
        fs::write(path, bytes)
    }
}
