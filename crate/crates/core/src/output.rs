//! Deterministic JSON and CSV formatting helpers.

use serde::Serializer;
use serde_json::value::RawValue;

/// Formats a float with 17 significant digits.
pub fn fmt17(x: f64) -> String {
    format!("{x:.16e}")
}

/// Serializes a float as a JSON number with 17 significant digits; non-finite values become `null`.
pub fn sig17<S: Serializer>(x: &f64, s: S) -> Result<S::Ok, S::Error> {
    if !x.is_finite() {
        return s.serialize_none();
    }
    let raw = RawValue::from_string(fmt17(*x)).map_err(serde::ser::Error::custom)?;
    s.serialize_some(&raw)
}

pub fn sig17_opt<S: Serializer>(x: &Option<f64>, s: S) -> Result<S::Ok, S::Error> {
    match x {
        Some(v) => sig17(v, s),
        None => s.serialize_none(),
    }
}

pub fn sig17_vec<S: Serializer>(xs: &[f64], s: S) -> Result<S::Ok, S::Error> {
    use serde::ser::SerializeSeq;
    let mut seq = s.serialize_seq(Some(xs.len()))?;
    for x in xs {
        seq.serialize_element(&Sig17(*x))?;
    }
    seq.end()
}

/// Newtype that serializes through [`sig17`].
#[derive(Debug, Clone, Copy)]
pub struct Sig17(pub f64);

impl serde::Serialize for Sig17 {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        sig17(&self.0, s)
    }
}

/// Pretty JSON with a trailing newline.
pub fn to_json<T: serde::Serialize>(value: &T) -> serde_json::Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(serde::Serialize)]
    struct T {
        #[serde(serialize_with = "sig17")]
        a: f64,
        #[serde(serialize_with = "sig17")]
        b: f64,
    }

    #[test]
    fn seventeen_digits() {
        let s = serde_json::to_string(&T { a: 0.1, b: f64::NAN }).unwrap();
        assert_eq!(s, r#"{"a":1.0000000000000001e-1,"b":null}"#);
        let v: serde_json::Value = serde_json::from_str(&s).unwrap();
        assert_eq!(v["a"].as_f64(), Some(0.1));
    }
}
