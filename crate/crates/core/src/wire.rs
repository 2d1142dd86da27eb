//! Trace serialization of protocol messages.
//!
//! One record per line, structured text, versioned and field-tagged:
//!
//! ```text
//! v1|RegisterRequest|vehicle=veh-3|reward=rwd-0|cpu=16000000|ram=1073741824|disk=268435456
//! ```
//!
//! `|`, `=`, `\` and newlines inside keys or values are backslash-escaped
//! (`\|`, `\=`, `\\`, `\n`). Field order is significant and preserved.

use thiserror::Error;

pub const WIRE_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum WireError {
    #[error("unsupported wire version `{0}`")]
    Version(String),
    #[error("record has no message kind")]
    MissingKind,
    #[error("field `{0}` has no `=`")]
    MalformedField(String),
    #[error("dangling escape at end of record")]
    DanglingEscape,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WireRecord {
    pub kind: String,
    pub fields: Vec<(String, String)>,
}

impl WireRecord {
    pub fn new(kind: &str) -> Self {
        WireRecord { kind: kind.to_owned(), fields: Vec::new() }
    }

    pub fn field(mut self, key: &str, value: impl ToString) -> Self {
        self.fields.push((key.to_owned(), value.to_string()));
        self
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.fields.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn encode(&self) -> String {
        let mut out = format!("v{WIRE_VERSION}|");
        escape_into(&mut out, &self.kind);
        for (k, v) in &self.fields {
            out.push('|');
            escape_into(&mut out, k);
            out.push('=');
            escape_into(&mut out, v);
        }
        out
    }

    pub fn parse(line: &str) -> Result<Self, WireError> {
        let mut it = split_unescaped(line)?.into_iter();
        match it.next() {
            Some(v) if v == [format!("v{WIRE_VERSION}")] => {}
            v => return Err(WireError::Version(v.unwrap_or_default().join("="))),
        }
        let kind = match it.next() {
            Some(mut k) if k.len() == 1 && !k[0].is_empty() => k.remove(0),
            _ => return Err(WireError::MissingKind),
        };
        let fields = it
            .map(|mut seg| match seg.len() {
                2 => {
                    let v = seg.pop().expect("len 2");
                    Ok((seg.pop().expect("len 2"), v))
                }
                _ => Err(WireError::MalformedField(seg.swap_remove(0))),
            })
            .collect::<Result<_, _>>()?;
        Ok(WireRecord { kind, fields })
    }
}

fn escape_into(out: &mut String, s: &str) {
    for c in s.chars() {
        match c {
            '|' => out.push_str("\\|"),
            '=' => out.push_str("\\="),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            c => out.push(c),
        }
    }
}

/// Splits on unescaped `|`, then each segment on unescaped `=`.
fn split_unescaped(line: &str) -> Result<Vec<Vec<String>>, WireError> {
    let mut segments = vec![vec![String::new()]];
    let mut chars = line.chars();
    while let Some(c) = chars.next() {
        let cur = segments.last_mut().expect("non-empty");
        match c {
            '\\' => {
                let e = chars.next().ok_or(WireError::DanglingEscape)?;
                cur.last_mut().expect("non-empty").push(if e == 'n' { '\n' } else { e });
            }
            '|' => segments.push(vec![String::new()]),
            '=' => cur.push(String::new()),
            c => cur.last_mut().expect("non-empty").push(c),
        }
    }
    Ok(segments)
}
