//! Run directories and artifact writers. Every artifact starts with the
//! `(spec_hash, seed, version)` header.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::RunError;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq, Eq, Serialize, serde::Deserialize)]
pub struct Header {
    pub spec_hash: String,
    pub seed: u64,
    pub version: String,
}

impl Header {
    fn comment(&self) -> String {
        format!(
            "# spec_hash={},seed={},version={}\n",
            self.spec_hash, self.seed, self.version
        )
    }
}

#[derive(Serialize)]
struct Wrapped<'a, T> {
    header: &'a Header,
    data: &'a T,
}

/// Column documentation for one CSV file.
pub struct CsvSchema {
    pub file: String,
    pub columns: Vec<(&'static str, &'static str)>,
}

pub struct RunDir {
    pub path: PathBuf,
    pub header: Header,
    schema: Vec<CsvSchema>,
}

impl RunDir {
    /// `<out>/<first 16 hex of spec hash>/seed-<seed>`
    pub fn create(out: &Path, spec_hash: &str, seed: u64) -> Result<Self, RunError> {
        let path = out.join(&spec_hash[..16]).join(format!("seed-{seed}"));
        std::fs::create_dir_all(&path)?;
        Ok(RunDir {
            path,
            header: Header {
                spec_hash: spec_hash.to_string(),
                seed,
                version: VERSION.to_string(),
            },
            schema: Vec::new(),
        })
    }

    /// Writes a CSV through `body` after the header comment line and
    /// records its columns for `schema.json`.
    pub fn csv(
        &mut self,
        name: &str,
        columns: Vec<(&'static str, &'static str)>,
        body: impl FnOnce(&mut Vec<u8>) -> std::io::Result<()>,
    ) -> Result<(), RunError> {
        let mut buf = self.header.comment().into_bytes();
        body(&mut buf)?;
        std::fs::write(self.path.join(name), buf)?;
        self.schema.push(CsvSchema {
            file: name.to_string(),
            columns,
        });
        Ok(())
    }

    pub fn json<T: Serialize>(&self, name: &str, data: &T) -> Result<(), RunError> {
        let mut file = std::fs::File::create(self.path.join(name))?;
        serde_json::to_writer_pretty(
            &mut file,
            &Wrapped {
                header: &self.header,
                data,
            },
        )
        .map_err(|e| RunError::Runtime(e.to_string()))?;
        writeln!(file)?;
        Ok(())
    }

    /// Bincode of `(header, data)`.
    pub fn binary<T: Serialize>(&self, name: &str, data: &T) -> Result<(), RunError> {
        let bytes = bincode::serialize(&(&self.header, data))
            .map_err(|e| RunError::Runtime(e.to_string()))?;
        std::fs::write(self.path.join(name), bytes)?;
        Ok(())
    }

    /// Writes `schema.json` describing every CSV written so far.
    pub fn finish(self) -> Result<PathBuf, RunError> {
        let files: serde_json::Map<String, serde_json::Value> = self
            .schema
            .iter()
            .map(|s| {
                let cols: Vec<serde_json::Value> = s
                    .columns
                    .iter()
                    .map(|(n, d)| serde_json::json!({ "name": n, "description": d }))
                    .collect();
                (s.file.clone(), serde_json::Value::Array(cols))
            })
            .collect();
        self.json(
            "schema.json",
            &serde_json::json!({
                "csv_comment_line": "first line of every CSV: # spec_hash=...,seed=...,version=...",
                "files": files,
            }),
        )?;
        Ok(self.path)
    }
}
