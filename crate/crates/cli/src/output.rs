//! Deterministic file output. Floats are written with 17 significant digits
//! and every file carries the tool version and the resolved config.

use std::fs;
use std::io::{self, Write};
use std::path::Path;

use anyhow::{Context, Result};
use serde::Serialize;
use serde_json::ser::{Formatter, PrettyFormatter};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// `1.2345678901234567e-3` style, 17 significant digits.
pub fn fmt_f64(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        String::new()
    }
}

pub fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt_f64).unwrap_or_default()
}

struct Fixed<'a>(PrettyFormatter<'a>);

impl Formatter for Fixed<'_> {
    fn write_f64<W: ?Sized + Write>(&mut self, w: &mut W, value: f64) -> io::Result<()> {
        w.write_all(fmt_f64(value).as_bytes())
    }
    fn write_f32<W: ?Sized + Write>(&mut self, w: &mut W, value: f32) -> io::Result<()> {
        self.write_f64(w, value as f64)
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

/// Pretty JSON with fixed float formatting.
pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, Fixed(PrettyFormatter::with_indent(b"  ")));
    value.serialize(&mut ser)?;
    buf.push(b'\n');
    Ok(String::from_utf8(buf)?)
}

/// One-line JSON with fixed float formatting, used in file headers.
pub fn to_json_line<T: Serialize>(value: &T) -> Result<String> {
    Ok(compact(&to_json(value)?))
}

fn compact(pretty: &str) -> String {
    let mut out = String::with_capacity(pretty.len());
    let mut in_string = false;
    let mut escaped = false;
    for ch in pretty.chars() {
        if in_string {
            out.push(ch);
            if escaped {
                escaped = false;
            } else if ch == '\\' {
                escaped = true;
            } else if ch == '"' {
                in_string = false;
            }
        } else if ch == '"' {
            in_string = true;
            out.push(ch);
        } else if !ch.is_whitespace() {
            out.push(ch);
        }
    }
    out
}

/// Wrapper that puts provenance next to a payload.
#[derive(Serialize)]
pub struct Document<'a, C: Serialize, T: Serialize> {
    pub tool: &'static str,
    pub version: &'static str,
    pub config: &'a C,
    #[serde(flatten)]
    pub payload: &'a T,
}

pub fn document<'a, C: Serialize, T: Serialize>(config: &'a C, payload: &'a T) -> Document<'a, C, T> {
    Document {
        tool: "dglab",
        version: VERSION,
        config,
        payload,
    }
}

pub fn write_json<C: Serialize, T: Serialize>(path: &Path, config: &C, payload: &T) -> Result<()> {
    let text = to_json(&document(config, payload))?;
    fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))
}

/// CSV with `#` comment lines for the version and the config.
pub fn write_csv<C: Serialize>(path: &Path, config: &C, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut out = csv_preamble(config)?;
    out += &header.join(",");
    out.push('\n');
    for r in rows {
        out += &r.join(",");
        out.push('\n');
    }
    fs::write(path, out).with_context(|| format!("cannot write {}", path.display()))
}

pub fn csv_preamble<C: Serialize>(config: &C) -> Result<String> {
    Ok(format!("# dglab {VERSION}\n# config: {}\n", to_json_line(config)?))
}
