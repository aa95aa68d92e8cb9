//! Record of one command invocation.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::Context;
use chrono::{SecondsFormat, Utc};
use serde::Serialize;

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub arguments: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub config: Option<PathBuf>,
    pub seed: Option<u64>,
    pub threads: usize,
    pub versions: BTreeMap<&'static str, &'static str>,
    pub started: String,
    pub finished: Option<String>,
    pub outputs: Vec<PathBuf>,
}

fn now() -> String {
    Utc::now().to_rfc3339_opts(SecondsFormat::Millis, true)
}

impl RunManifest {
    pub fn start(command: &str) -> Self {
        Self {
            command: command.into(),
            arguments: std::env::args().skip(1).collect(),
            config: None,
            seed: None,
            threads: rayon::current_num_threads(),
            versions: BTreeMap::from([("aemr", env!("CARGO_PKG_VERSION"))]),
            started: now(),
            finished: None,
            outputs: Vec::new(),
        }
    }

    /// Stamps the finish time and writes the manifest to `path`, or to
    /// standard error when no path is given.
    pub fn finish(mut self, path: Option<&Path>) -> anyhow::Result<()> {
        self.finished = Some(now());
        let json = serde_json::to_string_pretty(&self)?;
        match path {
            Some(p) => std::fs::write(p, json + "\n").with_context(|| format!("writing {}", p.display())),
            None => {
                eprintln!("{json}");
                Ok(())
            }
        }
    }
}
