//! Canonical JSON: the byte encoding every signature is computed over.
//!
//! Rules: UTF-8, object keys sorted by byte order, no insignificant
//! whitespace, integers in base 10 without leading zeros. Floating point
//! numbers are rejected. Arrays keep their order; types that model sets
//! store members sorted so arrays come out in canonical order.

use serde::Serialize;
use serde_json::Value;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CanonicalError {
    #[error("value is not representable: {0}")]
    Unrepresentable(String),
    #[error("signed value must serialize to a JSON object")]
    NotAnObject,
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub fn to_canonical_bytes<T: Serialize + ?Sized>(value: &T) -> Result<Vec<u8>, CanonicalError> {
    let v = serde_json::to_value(value)?;
    let mut out = Vec::with_capacity(256);
    write_value(&v, &mut out)?;
    Ok(out)
}

pub fn to_canonical_string<T: Serialize + ?Sized>(value: &T) -> Result<String, CanonicalError> {
    // Only valid UTF-8 is ever written.
    to_canonical_bytes(value).map(|b| String::from_utf8(b).expect("canonical JSON is UTF-8"))
}

/// Canonical bytes of `value` with the named top-level signature fields removed.
///
/// A signature never covers itself, so a message signs identically whether or
/// not its signature field is populated yet.
pub fn signing_input<T: Serialize + ?Sized>(
    value: &T,
    signature_fields: &[&str],
) -> Result<Vec<u8>, CanonicalError> {
    let mut v = serde_json::to_value(value)?;
    let map = v.as_object_mut().ok_or(CanonicalError::NotAnObject)?;
    for field in signature_fields {
        map.remove(*field);
    }
    let mut out = Vec::with_capacity(256);
    write_value(&v, &mut out)?;
    Ok(out)
}

pub fn write_value(v: &Value, out: &mut Vec<u8>) -> Result<(), CanonicalError> {
    match v {
        Value::Null => out.extend_from_slice(b"null"),
        Value::Bool(true) => out.extend_from_slice(b"true"),
        Value::Bool(false) => out.extend_from_slice(b"false"),
        Value::Number(n) => {
            if let Some(u) = n.as_u64() {
                out.extend_from_slice(u.to_string().as_bytes());
            } else if let Some(i) = n.as_i64() {
                out.extend_from_slice(i.to_string().as_bytes());
            } else {
                return Err(CanonicalError::Unrepresentable(format!(
                    "non-integer number {n}"
                )));
            }
        }
        Value::String(s) => write_string(s, out)?,
        Value::Array(items) => {
            out.push(b'[');
            for (i, item) in items.iter().enumerate() {
                if i > 0 {
                    out.push(b',');
                }
                write_value(item, out)?;
            }
            out.push(b']');
        }
        Value::Object(map) => {
            let mut entries: Vec<(&String, &Value)> = map.iter().collect();
            entries.sort_by(|a, b| a.0.as_bytes().cmp(b.0.as_bytes()));
            out.push(b'{');
            for (i, (k, val)) in entries.into_iter().enumerate() {
                if i > 0 {
                    out.push(b',');
                }
                write_string(k, out)?;
                out.push(b':');
                write_value(val, out)?;
            }
            out.push(b'}');
        }
    }
    Ok(())
}

fn write_string(s: &str, out: &mut Vec<u8>) -> Result<(), CanonicalError> {
    // serde_json escapes '"', '\\' and control characters and leaves other
    // code points as raw UTF-8, which is deterministic.
    serde_json::to_writer(&mut *out, s)?;
    Ok(())
}
