//! Output files. Every file carries the configuration hash: CSV files as a
//! trailing `config_hash` column, JSON files as a top-level `config_hash`
//! field, triplet files as a leading `% config_hash` line.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use conic_core::{Error, Result};
use serde::Serialize;
use serde_json::{json, Value};

fn io(e: impl std::fmt::Display) -> Error {
    Error::Io(e.to_string())
}

pub struct Output {
    pub dir: PathBuf,
    pub hash: String,
    files: Vec<String>,
    timings: Vec<(String, f64)>,
    started: Instant,
}

impl Output {
    pub fn new(dir: &Path, hash: &str) -> Result<Self> {
        fs::create_dir_all(dir).map_err(io)?;
        Ok(Self { dir: dir.to_path_buf(), hash: hash.into(), files: vec![], timings: vec![], started: Instant::now() })
    }

    fn create(&mut self, name: &str) -> Result<BufWriter<File>> {
        self.files.push(name.into());
        Ok(BufWriter::new(File::create(self.dir.join(name)).map_err(io)?))
    }

    pub fn time(&mut self, label: &str, since: Instant) {
        self.timings.push((label.into(), since.elapsed().as_secs_f64()));
    }

    /// Writes `header` + `config_hash`, then each row + the hash.
    pub fn csv<I>(&mut self, name: &str, header: &[&str], rows: I) -> Result<()>
    where
        I: IntoIterator<Item = Vec<String>>,
    {
        let file = self.create(name)?;
        let mut w = csv::Writer::from_writer(file);
        let mut head: Vec<&str> = header.to_vec();
        head.push("config_hash");
        w.write_record(&head).map_err(io)?;
        for mut row in rows {
            row.push(self.hash.clone());
            w.write_record(&row).map_err(io)?;
        }
        w.flush().map_err(io)
    }

    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut v = serde_json::to_value(value).map_err(io)?;
        match &mut v {
            Value::Object(map) => {
                map.insert("config_hash".into(), Value::String(self.hash.clone()));
            }
            other => v = json!({ "config_hash": self.hash, "data": other.take() }),
        }
        let mut f = self.create(name)?;
        serde_json::to_writer_pretty(&mut f, &v).map_err(io)?;
        writeln!(f).map_err(io)?;
        f.flush().map_err(io)
    }

    pub fn triplets(&mut self, name: &str, write: impl FnOnce(&mut dyn Write) -> Result<()>) -> Result<()> {
        let hash = self.hash.clone();
        let mut f = self.create(name)?;
        writeln!(f, "% config_hash {hash}").map_err(io)?;
        write(&mut f)?;
        f.flush().map_err(io)
    }

    /// `manifest.json`: hash, versions, timings, files and a summary.
    pub fn manifest(&mut self, command: &str, summary: Value) -> Result<()> {
        let total = self.started.elapsed().as_secs_f64();
        let m = json!({
            "command": command,
            "versions": {
                "conic-scatter": env!("CARGO_PKG_VERSION"),
                "conic-core": conic_core_version(),
            },
            "timings_s": self.timings.iter().map(|(k, v)| json!({"step": k, "seconds": v})).collect::<Vec<_>>(),
            "total_s": total,
            "files": self.files.clone(),
            "summary": summary,
        });
        self.json("manifest.json", &m)
    }
}

fn conic_core_version() -> &'static str {
    conic_core::VERSION
}

/// Shortest round-trip decimal form (always '.' as separator).
pub fn num(x: f64) -> String {
    format!("{x:?}")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_file_carries_the_hash() {
        let dir = tempfile::tempdir().unwrap();
        let mut out = Output::new(dir.path(), "abc").unwrap();
        out.csv("t.csv", &["t", "x"], vec![vec![num(0.5), "a,b".into()]]).unwrap();
        out.json("r.json", &json!({"beta": 1.0})).unwrap();
        out.json("l.json", &vec![1, 2]).unwrap();
        out.triplets("m.txt", |w| writeln!(w, "1 1 0").map_err(io)).unwrap();
        out.manifest("test", json!({})).unwrap();
        let csv = fs::read_to_string(dir.path().join("t.csv")).unwrap();
        assert_eq!(csv, "t,x,config_hash\n0.5,\"a,b\",abc\n");
        for f in ["r.json", "l.json", "manifest.json"] {
            let v: Value = serde_json::from_str(&fs::read_to_string(dir.path().join(f)).unwrap()).unwrap();
            assert_eq!(v["config_hash"], "abc");
        }
        let m: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("manifest.json")).unwrap()).unwrap();
        assert_eq!(m["files"].as_array().unwrap().len(), 4);
        assert!(fs::read_to_string(dir.path().join("m.txt")).unwrap().starts_with("% config_hash abc\n1 1 0"));
    }

    #[test]
    fn numbers_use_a_point() {
        assert_eq!(num(1e-12), "1e-12");
        assert_eq!(num(-2.25), "-2.25");
    }
}
