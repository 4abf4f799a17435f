use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::ser::{Formatter, PrettyFormatter};
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::CliError;

pub const FORMAT_VERSION: &str = "kacbox/1";

/// Everything that determines a run's outputs, plus where they went.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunManifest {
    pub format: String,
    pub command: String,
    pub seed: u64,
    pub out: PathBuf,
    pub config: RunConfig,
}

#[derive(Serialize)]
struct DigestInput<'a> {
    format: &'a str,
    command: &'a str,
    seed: u64,
    config: &'a RunConfig,
}

impl RunManifest {
    pub fn new(command: &str, seed: u64, out: &Path, config: RunConfig) -> Self {
        RunManifest { format: FORMAT_VERSION.into(), command: command.into(), seed, out: out.to_path_buf(), config }
    }

    /// SHA-256 over the manifest without its output directory, so the same
    /// run written elsewhere carries the same digest.
    pub fn digest(&self) -> String {
        let input = DigestInput { format: &self.format, command: &self.command, seed: self.seed, config: &self.config };
        let bytes = to_json_bytes(&input).expect("manifest serializes");
        let hash = Sha256::digest(&bytes);
        hash.iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Header {
    pub format: String,
    pub manifest: String,
}

#[derive(Serialize)]
struct Document<'a, T: Serialize> {
    header: &'a Header,
    data: &'a T,
}

/// Pretty JSON with every float written as `{:.16e}`.
struct SigFormatter(PrettyFormatter<'static>);

impl Formatter for SigFormatter {
    fn write_f64<W: ?Sized + Write>(&mut self, w: &mut W, value: f64) -> io::Result<()> {
        write!(w, "{value:.16e}")
    }

    fn write_f32<W: ?Sized + Write>(&mut self, w: &mut W, value: f32) -> io::Result<()> {
        write!(w, "{:.16e}", value as f64)
    }

    fn begin_array<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_array(w)
    }

    fn end_array<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array(w)
    }

    fn begin_array_value<W: ?Sized + Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_array_value(w, first)
    }

    fn end_array_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array_value(w)
    }

    fn begin_object<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object(w)
    }

    fn end_object<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object(w)
    }

    fn begin_object_key<W: ?Sized + Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_object_key(w, first)
    }

    fn begin_object_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object_value(w)
    }

    fn end_object_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object_value(w)
    }
}

pub fn to_json_bytes<T: Serialize + ?Sized>(value: &T) -> serde_json::Result<Vec<u8>> {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, SigFormatter(PrettyFormatter::new()));
    value.serialize(&mut ser)?;
    buf.push(b'\n');
    Ok(buf)
}

/// A float for CSV output: 17 significant digits, `inf`/`-inf`/`nan` spelled out.
pub fn num(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else if x.is_nan() {
        "nan".into()
    } else if x > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

pub fn opt(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

/// Writes every artifact of one run under its output directory.
pub struct Sink {
    dir: PathBuf,
    header: Header,
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> CliError + '_ {
    move |source| CliError::Io { path: path.to_path_buf(), source }
}

impl Sink {
    pub fn new(dir: &Path, manifest: &RunManifest) -> Result<Self, CliError> {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
        let sink = Sink {
            dir: dir.to_path_buf(),
            header: Header { format: FORMAT_VERSION.into(), manifest: format!("sha256:{}", manifest.digest()) },
        };
        sink.json("manifest.json", manifest)?;
        Ok(sink)
    }

    pub fn header(&self) -> &Header {
        &self.header
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    fn write(&self, name: &str, bytes: &[u8]) -> Result<(), CliError> {
        let path = self.path(name);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(io_err(parent))?;
        }
        // Write then rename, so an interrupted run never leaves half a file.
        let tmp = path.with_extension("partial");
        fs::write(&tmp, bytes).map_err(io_err(&tmp))?;
        fs::rename(&tmp, &path).map_err(io_err(&path))
    }

    pub fn json<T: Serialize>(&self, name: &str, data: &T) -> Result<(), CliError> {
        let doc = Document { header: &self.header, data };
        let bytes = to_json_bytes(&doc).map_err(|e| CliError::Internal(e.to_string()))?;
        self.write(name, &bytes)
    }

    pub fn csv(&self, name: &str, columns: &[&str], rows: &[Vec<String>]) -> Result<(), CliError> {
        let mut out = format!("# kacbox format=1 manifest={}\n", self.header.manifest);
        out.push_str(&columns.join(","));
        out.push('\n');
        for r in rows {
            out.push_str(&r.join(","));
            out.push('\n');
        }
        self.write(name, out.as_bytes())
    }

    /// The `data` of a JSON artifact written by a run with the same header.
    pub fn load<T: for<'de> Deserialize<'de>>(&self, name: &str) -> Option<T> {
        let text = fs::read_to_string(self.path(name)).ok()?;
        let doc: serde_json::Value = serde_json::from_str(&text).ok()?;
        let header: Header = serde_json::from_value(doc.get("header")?.clone()).ok()?;
        if header != self.header {
            return None;
        }
        serde_json::from_value(doc.get("data")?.clone()).ok()
    }
}

/// The `data` member of any JSON artifact.
pub fn read_data(path: &Path) -> Result<serde_json::Value, CliError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let mut doc: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| CliError::Parse(format!("{}: {e}", path.display())))?;
    doc.get_mut("data")
        .map(serde_json::Value::take)
        .ok_or_else(|| CliError::Config(format!("{} has no data member", path.display())))
}
