use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::ValueEnum;
use serde::{Deserialize, Serialize};
use serde_json::Value;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, ValueEnum)]
pub enum Format {
    #[default]
    Csv,
    Json,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config_snapshot: Value,
    pub artifact_version: String,
    /// Seconds.
    pub wall_time: f64,
    pub seeds_used: Vec<u64>,
}

/// Primary table destination plus sidecar files named `<out>.<suffix>`.
pub struct Output {
    pub out: Option<PathBuf>,
    pub format: Format,
}

fn sidecar(path: &Path, suffix: &str) -> PathBuf {
    let mut name = path.as_os_str().to_owned();
    name.push(".");
    name.push(suffix);
    PathBuf::from(name)
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(
        File::create(path).with_context(|| format!("cannot create {}", path.display()))?,
    ))
}

fn write_json<W: Write>(mut w: W, value: &impl Serialize) -> Result<()> {
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

/// CSV with a header row and LF endings. Floats use the shortest
/// representation that parses back to the same bits.
pub fn write_csv<W: Write, T: Serialize>(w: W, headers: &[&str], rows: &[T]) -> Result<()> {
    let mut writer = csv::WriterBuilder::new()
        .has_headers(false)
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(w);
    writer.write_record(headers)?;
    for row in rows {
        writer.serialize(row)?;
    }
    writer.flush()?;
    Ok(())
}

impl Output {
    /// Writes `rows` to `--out` (stdout when absent). `headers` must match the
    /// serialized field order of `T`.
    pub fn table<T: Serialize>(&self, headers: &[&str], rows: &[T]) -> Result<()> {
        match (&self.out, self.format) {
            (Some(path), Format::Csv) => write_csv(create(path)?, headers, rows),
            (Some(path), Format::Json) => write_json(create(path)?, &rows),
            (None, Format::Csv) => write_csv(io::stdout().lock(), headers, rows),
            (None, Format::Json) => write_json(io::stdout().lock(), &rows),
        }
    }

    /// Structured side output at `<out>.<name>.json`; skipped without `--out`.
    pub fn sidecar_json(&self, name: &str, value: &impl Serialize) -> Result<Option<PathBuf>> {
        let Some(path) = &self.out else {
            return Ok(None);
        };
        let target = sidecar(path, &format!("{name}.json"));
        write_json(create(&target)?, value)?;
        Ok(Some(target))
    }

    /// Secondary table at `<out>.<name>.<ext>`; skipped without `--out`.
    pub fn sidecar_table<T: Serialize>(&self, name: &str, headers: &[&str], rows: &[T]) -> Result<Option<PathBuf>> {
        let Some(path) = &self.out else {
            return Ok(None);
        };
        let ext = match self.format {
            Format::Csv => "csv",
            Format::Json => "json",
        };
        let target = sidecar(path, &format!("{name}.{ext}"));
        Output {
            out: Some(target.clone()),
            format: self.format,
        }
        .table(headers, rows)?;
        Ok(Some(target))
    }

    pub fn manifest(&self, manifest: &RunManifest) -> Result<()> {
        self.sidecar_json("manifest", manifest).map(|_| ())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(Serialize)]
    struct Row {
        x: f64,
        label: &'static str,
        maybe: Option<f64>,
    }

    #[test]
    fn csv_round_trips_floats() {
        let xs = [0.1, 1.0 / 3.0, 1e-300, -2.5e17, f64::MIN_POSITIVE];
        let rows: Vec<Row> = xs.iter().map(|&x| Row { x, label: "a", maybe: None }).collect();
        let mut buf = Vec::new();
        write_csv(&mut buf, &["x", "label", "maybe"], &rows).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(!text.contains('\r'));
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("x,label,maybe"));
        for (line, x) in lines.zip(xs) {
            let field = line.split(',').next().unwrap();
            assert_eq!(field.parse::<f64>().unwrap().to_bits(), x.to_bits());
        }
    }

    #[test]
    fn sidecar_names() {
        assert_eq!(sidecar(Path::new("out/a.csv"), "manifest.json"), PathBuf::from("out/a.csv.manifest.json"));
    }
}
