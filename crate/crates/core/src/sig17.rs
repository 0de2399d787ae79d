//! Serde helpers writing reals with 17 significant digits.
//!
//! Only meaningful with `serde_json`, which passes raw values through
//! verbatim. Reading back uses the ordinary `f64` deserializer.

use serde::ser::SerializeSeq;
use serde::Serializer;
use serde_json::value::RawValue;

/// `d.dddddddddddddddde±x`, 17 significant digits.
pub fn format(x: f64) -> String {
    format!("{x:.16e}")
}

fn raw<E: serde::ser::Error>(x: f64) -> Result<Box<RawValue>, E> {
    if !x.is_finite() {
        return Err(E::custom(format!("cannot serialize non-finite real {x}")));
    }
    RawValue::from_string(format(x)).map_err(E::custom)
}

pub fn real<S: Serializer>(x: &f64, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_some(&raw::<S::Error>(*x)?)
}

pub fn opt_real<S: Serializer>(x: &Option<f64>, s: S) -> Result<S::Ok, S::Error> {
    match x {
        Some(v) => real(v, s),
        None => s.serialize_none(),
    }
}

pub fn reals<S: Serializer>(xs: &[f64], s: S) -> Result<S::Ok, S::Error> {
    let mut seq = s.serialize_seq(Some(xs.len()))?;
    for &x in xs {
        seq.serialize_element(&raw::<S::Error>(x)?)?;
    }
    seq.end()
}

pub fn opt_reals<S: Serializer>(xs: &Option<Vec<f64>>, s: S) -> Result<S::Ok, S::Error> {
    match xs {
        Some(v) => reals(v, s),
        None => s.serialize_none(),
    }
}

pub fn rows<S: Serializer, R: AsRef<[f64]>>(rows: &[R], s: S) -> Result<S::Ok, S::Error> {
    struct Row<'a>(&'a [f64]);
    impl serde::Serialize for Row<'_> {
        fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
            reals(self.0, s)
        }
    }
    let mut seq = s.serialize_seq(Some(rows.len()))?;
    for r in rows {
        seq.serialize_element(&Row(r.as_ref()))?;
    }
    seq.end()
}

pub fn point<S: Serializer>(p: &[f64; 2], s: S) -> Result<S::Ok, S::Error> {
    reals(p, s)
}
