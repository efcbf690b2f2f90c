//! Output sinks and the fixed number format.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::ser::{Formatter, PrettyFormatter};
use sibvp::ivp::fmt_num;

use crate::error::CliError;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Version and configuration hash attached to every output.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Meta {
    pub version: &'static str,
    pub config_hash: String,
}

impl Meta {
    pub fn new(config_hash: String) -> Self {
        Meta {
            version: VERSION,
            config_hash,
        }
    }

    /// The comment line that heads every CSV file.
    pub fn comment_line(&self) -> String {
        format!("# sibvp {} config_hash={}\n", self.version, self.config_hash)
    }
}

/// Pretty JSON with every float in 15-significant-digit scientific notation.
struct SciFormatter(PrettyFormatter<'static>);

impl Formatter for SciFormatter {
    fn write_f64<W: ?Sized + Write>(&mut self, w: &mut W, value: f64) -> io::Result<()> {
        w.write_all(fmt_num(value).as_bytes())
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

#[derive(Serialize)]
struct WithMeta<'a, T> {
    #[serde(flatten)]
    body: &'a T,
    meta: &'a Meta,
}

/// `value` as a JSON object with an extra `meta` field, newline-terminated.
pub fn to_json<T: Serialize>(value: &T, meta: &Meta) -> Result<Vec<u8>, CliError> {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, SciFormatter(PrettyFormatter::new()));
    WithMeta { body: value, meta }.serialize(&mut ser)?;
    buf.push(b'\n');
    Ok(buf)
}

/// Writes to `path`, or to stdout when it is `None`; a closed stdout pipe is not an error.
pub fn emit(path: Option<&Path>, bytes: &[u8]) -> Result<(), CliError> {
    let wrap = |path: PathBuf| move |source| CliError::Io { path, source };
    match path {
        Some(p) => {
            let mut w = BufWriter::new(File::create(p).map_err(wrap(p.to_path_buf()))?);
            w.write_all(bytes).and_then(|_| w.flush()).map_err(wrap(p.to_path_buf()))
        }
        None => match io::stdout().lock().write_all(bytes) {
            Err(e) if e.kind() == io::ErrorKind::BrokenPipe => Ok(()),
            r => r.map_err(wrap(PathBuf::from("<stdout>"))),
        },
    }
}

/// A CSV document that starts with the metadata comment line.
pub struct CsvDoc {
    writer: csv::Writer<Vec<u8>>,
}

impl CsvDoc {
    pub fn new(meta: &Meta, header: &[&str]) -> Result<Self, CliError> {
        let mut buf = Vec::new();
        buf.extend_from_slice(meta.comment_line().as_bytes());
        let mut writer = csv::Writer::from_writer(buf);
        writer.write_record(header)?;
        Ok(CsvDoc { writer })
    }

    pub fn row<I, S>(&mut self, fields: I) -> Result<(), CliError>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<[u8]>,
    {
        self.writer.write_record(fields)?;
        Ok(())
    }

    pub fn finish(self) -> Result<Vec<u8>, CliError> {
        self.writer.into_inner().map_err(|e| CliError::Csv(e.into_error().into()))
    }
}

/// [`fmt_num`], with `None` as an empty field.
pub fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_num).unwrap_or_default()
}
