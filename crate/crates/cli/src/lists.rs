//! Parsers for list arguments: `1,2,4`, `0..8`, `0..=8`, or a mix.

use std::str::FromStr;

/// A parsed integer list.
#[derive(Debug, Clone, PartialEq)]
pub struct Ints(pub Vec<usize>);

/// A parsed float list.
#[derive(Debug, Clone, PartialEq)]
pub struct Floats(pub Vec<f64>);

pub fn ints(s: &str) -> Result<Ints, String> {
    parse_usize_list(s).map(Ints)
}

pub fn floats(s: &str) -> Result<Floats, String> {
    parse_list(s).map(Floats)
}

pub fn parse_list<T>(s: &str) -> Result<Vec<T>, String>
where
    T: FromStr,
    T::Err: std::fmt::Display,
{
    let mut out = Vec::new();
    for part in s.split(',').map(str::trim) {
        if part.is_empty() {
            return Err(format!("empty item in '{s}'"));
        }
        out.push(part.parse::<T>().map_err(|e| format!("'{part}': {e}"))?);
    }
    Ok(out)
}

/// Integer list where items may be ranges (`a..b` excludes `b`, `a..=b`
/// includes it).
pub fn parse_usize_list(s: &str) -> Result<Vec<usize>, String> {
    let mut out = Vec::new();
    for part in s.split(',').map(str::trim) {
        let num = |t: &str| t.trim().parse::<usize>().map_err(|e| format!("'{t}': {e}"));
        if let Some((a, b)) = part.split_once("..=") {
            out.extend(num(a)?..=num(b)?);
        } else if let Some((a, b)) = part.split_once("..") {
            out.extend(num(a)?..num(b)?);
        } else {
            out.push(num(part)?);
        }
    }
    if out.is_empty() {
        return Err(format!("'{s}' is empty"));
    }
    Ok(out)
}
