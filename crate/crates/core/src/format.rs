//! The JSON system file format and a canonical serializer.
//!
//! ```json
//! { "generators": ["a", "b"],
//!   "dims": {"a": 1, "A": 1, "b": 1, "B": 1},
//!   "H": { "b|a": [[[0.5773502691896258, 0.0]]], ... } }
//! ```
//!
//! Key `"t|s"` holds `H_ts: V_s → V_t` as a list of rows of `[re, im]` pairs.
//! The canonical rendering sorts object keys and prints every float with 17
//! significant digits, so `parse ∘ serialize` is bit-exact.

use std::io;

use num_complex::Complex64;
use serde::Serialize;
use serde_json::ser::Formatter;
use serde_json::{json, Map, Value};

use crate::error::{Error, Result};
use crate::linalg::{CMat, CVec};
use crate::system::{sorted_block_keys, Alphabet, Letter, MatrixSystem};

/// `serde_json` formatter that writes floats as `{:.16e}`.
#[derive(Debug, Default, Clone, Copy)]
pub struct CanonicalFormatter;

impl Formatter for CanonicalFormatter {
    fn write_f64<W: ?Sized + io::Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        write!(writer, "{value:.16e}")
    }

    fn write_f32<W: ?Sized + io::Write>(&mut self, writer: &mut W, value: f32) -> io::Result<()> {
        self.write_f64(writer, value as f64)
    }
}

/// Renders any serializable value with sorted keys and 17-digit floats.
pub fn to_canonical_string<T: Serialize>(value: &T) -> String {
    // round-trip through Value so that map keys come out sorted
    let value = serde_json::to_value(value).expect("serializable");
    let mut out = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut out, CanonicalFormatter);
    value.serialize(&mut ser).expect("writing to a Vec cannot fail");
    out.push(b'\n');
    String::from_utf8(out).expect("serde_json emits UTF-8")
}

pub fn matrix_to_json(m: &CMat) -> Value {
    Value::Array(
        (0..m.nrows())
            .map(|i| Value::Array((0..m.ncols()).map(|j| json!([m[(i, j)].re, m[(i, j)].im])).collect()))
            .collect(),
    )
}

pub fn vector_to_json(v: &CVec) -> Value {
    Value::Array(v.iter().map(|z| json!([z.re, z.im])).collect())
}

fn complex_from_json(value: &Value, key: &str) -> Result<Complex64> {
    let pair = value
        .as_array()
        .filter(|p| p.len() == 2)
        .ok_or_else(|| Error::Syntax(format!("\"{key}\": entries must be [re, im] pairs")))?;
    let part = |v: &Value| {
        v.as_f64()
            .ok_or_else(|| Error::Syntax(format!("\"{key}\": entry parts must be numbers")))
    };
    let z = Complex64::new(part(&pair[0])?, part(&pair[1])?);
    if !z.re.is_finite() || !z.im.is_finite() {
        return Err(Error::NonFinite(key.to_string()));
    }
    Ok(z)
}

/// Parses a list of rows of `[re, im]` pairs; `key` is used in error messages.
pub fn matrix_from_json(value: &Value, key: &str) -> Result<CMat> {
    let rows = value
        .as_array()
        .ok_or_else(|| Error::Syntax(format!("\"{key}\": a matrix is a list of rows")))?;
    let ncols = rows.first().and_then(Value::as_array).map_or(0, Vec::len);
    let mut m = CMat::zeros(rows.len(), ncols);
    for (i, row) in rows.iter().enumerate() {
        let row = row
            .as_array()
            .ok_or_else(|| Error::Syntax(format!("\"{key}\": a matrix is a list of rows")))?;
        if row.len() != ncols {
            return Err(Error::Syntax(format!("\"{key}\": ragged rows")));
        }
        for (j, entry) in row.iter().enumerate() {
            m[(i, j)] = complex_from_json(entry, key)?;
        }
    }
    Ok(m)
}

pub fn vector_from_json(value: &Value, key: &str) -> Result<CVec> {
    let entries = value
        .as_array()
        .ok_or_else(|| Error::Syntax(format!("\"{key}\": a vector is a list of [re, im] pairs")))?;
    let parsed: Result<Vec<_>> = entries.iter().map(|e| complex_from_json(e, key)).collect();
    Ok(CVec::from_vec(parsed?))
}

pub fn system_to_json(system: &MatrixSystem) -> Value {
    let alphabet = system.alphabet();
    let dims: Map<String, Value> = alphabet
        .letters()
        .map(|l| (alphabet.name(l).to_string(), json!(system.dim(l))))
        .collect();
    let blocks: Map<String, Value> = sorted_block_keys(system)
        .into_iter()
        .map(|(key, (b, a))| (key, matrix_to_json(system.block(b, a).expect("allowed pair"))))
        .collect();
    json!({
        "generators": alphabet.generators(),
        "dims": dims,
        "H": blocks,
    })
}

pub fn serialize_system(system: &MatrixSystem) -> String {
    to_canonical_string(&system_to_json(system))
}

pub fn parse_system(text: &str) -> Result<MatrixSystem> {
    let doc: Value = serde_json::from_str(text).map_err(|e| Error::Syntax(e.to_string()))?;
    system_from_json(&doc)
}

pub fn system_from_json(doc: &Value) -> Result<MatrixSystem> {
    let obj = doc
        .as_object()
        .ok_or_else(|| Error::Syntax("top level must be an object".into()))?;
    let field = |name: &str| obj.get(name).ok_or_else(|| Error::Syntax(format!("missing field \"{name}\"")));

    let generators: Vec<String> = field("generators")?
        .as_array()
        .and_then(|g| g.iter().map(|s| s.as_str().map(str::to_string)).collect())
        .ok_or_else(|| Error::Syntax("\"generators\" must be a list of strings".into()))?;
    let alphabet = Alphabet::new(&generators)?;

    let dims_obj = field("dims")?
        .as_object()
        .ok_or_else(|| Error::Syntax("\"dims\" must be an object".into()))?;
    for key in dims_obj.keys() {
        if alphabet.letter(key).is_none() {
            return Err(Error::Validation(format!("dims: unknown letter \"{key}\"")));
        }
    }
    let mut dims = Vec::with_capacity(alphabet.len());
    for l in alphabet.letters() {
        let name = alphabet.name(l);
        let d = dims_obj
            .get(name)
            .ok_or_else(|| Error::Validation(format!("dims: missing letter \"{name}\"")))?
            .as_u64()
            .filter(|&d| d > 0)
            .ok_or_else(|| Error::Validation(format!("dims: \"{name}\" must be a positive integer")))?;
        dims.push(d as usize);
    }

    let blocks_obj = field("H")?
        .as_object()
        .ok_or_else(|| Error::Syntax("\"H\" must be an object".into()))?;
    let mut parsed: Vec<Option<CMat>> = vec![None; alphabet.len() * alphabet.len()];
    for (key, value) in blocks_obj {
        let (b, a) = parse_block_key(&alphabet, key)?;
        if b.cancels(a) {
            return Err(Error::ForbiddenBlock(key.clone()));
        }
        let m = matrix_from_json(value, key)?;
        // an empty row list carries no column count; reshape so the shape check below reports it
        parsed[b.index() * alphabet.len() + a.index()] = Some(m);
    }
    for (b, a) in alphabet.allowed_pairs() {
        let key = alphabet.block_key(b, a);
        let m = parsed[b.index() * alphabet.len() + a.index()]
            .as_ref()
            .ok_or(Error::MissingBlock(key.clone()))?;
        let expected = (dims[b.index()], dims[a.index()]);
        if m.shape() != expected {
            return Err(Error::BlockShape { key, expected, found: m.shape() });
        }
    }
    let n = alphabet.len();
    MatrixSystem::from_fn(alphabet, dims, |b, a| {
        parsed[b.index() * n + a.index()].take().expect("checked above")
    })
}

fn parse_block_key(alphabet: &Alphabet, key: &str) -> Result<(Letter, Letter)> {
    let (t, s) = key
        .split_once('|')
        .ok_or_else(|| Error::Validation(format!("block key \"{key}\" must have the form \"t|s\"")))?;
    let letter = |name: &str| {
        alphabet
            .letter(name)
            .ok_or_else(|| Error::Validation(format!("block key \"{key}\": unknown letter \"{name}\"")))
    };
    Ok((letter(t)?, letter(s)?))
}

/// Parses a letter-tagged vector such as `"a:1,0;b:0.5,0.5"`.
///
/// Each entry is `letter:` followed by comma-separated numbers read as
/// `re, im` pairs, so a vector in `V_a` of dimension `n` takes `2n` numbers.
pub fn parse_vector_spec(alphabet: &Alphabet, spec: &str) -> Result<Vec<(Letter, CVec)>> {
    let mut out = Vec::new();
    for entry in spec.split(';').map(str::trim).filter(|e| !e.is_empty()) {
        let (name, coords) = entry
            .split_once(':')
            .ok_or_else(|| Error::Argument(format!("vector entry \"{entry}\" must be letter:re,im,...")))?;
        let letter = alphabet
            .letter(name.trim())
            .ok_or_else(|| Error::Argument(format!("unknown letter \"{}\"", name.trim())))?;
        let nums: Vec<f64> = coords
            .split(',')
            .map(|s| s.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Argument(format!("vector entry \"{entry}\": {e}")))?;
        if nums.is_empty() || !nums.len().is_multiple_of(2) {
            return Err(Error::Argument(format!(
                "vector entry \"{entry}\" needs an even number of values (re, im pairs)"
            )));
        }
        let v = CVec::from_iterator(nums.len() / 2, nums.chunks(2).map(|p| Complex64::new(p[0], p[1])));
        out.push((letter, v));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::system::random_system;

    fn iso2_text(drop: Option<&str>, extra: Option<&str>) -> String {
        let al = Alphabet::standard(2);
        let mut blocks = Map::new();
        for (b, a) in al.allowed_pairs() {
            let key = al.block_key(b, a);
            if Some(key.as_str()) != drop {
                blocks.insert(key, json!([[[0.5773502691896258, 0.0]]]));
            }
        }
        if let Some(k) = extra {
            blocks.insert(k.to_string(), json!([[[1.0, 0.0]]]));
        }
        json!({"generators": ["a", "b"], "dims": {"a": 1, "A": 1, "b": 1, "B": 1}, "H": blocks}).to_string()
    }

    #[test]
    fn parses_iso2() {
        let s = parse_system(&iso2_text(None, None)).unwrap();
        assert_eq!(s.alphabet().len(), 4);
        assert_eq!(s.block_count(), 12);
    }

    #[test]
    fn missing_block_is_named() {
        let err = parse_system(&iso2_text(Some("b|a"), None)).unwrap_err();
        assert!(matches!(&err, Error::MissingBlock(k) if k == "b|a"), "{err}");
        assert!(err.to_string().contains("b|a"));
    }

    #[test]
    fn forbidden_block_is_rejected() {
        let err = parse_system(&iso2_text(None, Some("A|a"))).unwrap_err();
        assert!(err.to_string().contains("block forbidden: ba = e"), "{err}");
        assert!(err.is_validation());
    }

    #[test]
    fn bad_shape_and_syntax() {
        let text = iso2_text(None, None).replace("[[[0.5773502691896258,0.0]]]", "[[[1.0,0.0],[1.0,0.0]]]");
        assert!(matches!(parse_system(&text), Err(Error::BlockShape { .. })));
        assert!(matches!(parse_system("{not json"), Err(Error::Syntax(_))));
        assert!(matches!(parse_system("[]"), Err(Error::Syntax(_))));
    }

    #[test]
    fn canonical_round_trip_is_bit_exact() {
        let al = Alphabet::standard(2);
        let s = random_system(&al, &[2, 1, 2, 1], 7).unwrap();
        let text = serialize_system(&s);
        let back = parse_system(&text).unwrap();
        assert_eq!(back, s);
        assert_eq!(serialize_system(&back), text);
    }

    #[test]
    fn canonical_floats_have_17_digits() {
        let text = to_canonical_string(&json!({"x": 0.1, "a": -0.0}));
        assert_eq!(text, "{\"a\":-0.0000000000000000e0,\"x\":1.0000000000000001e-1}\n");
    }

    #[test]
    fn vector_spec() {
        let al = Alphabet::standard(2);
        let v = parse_vector_spec(&al, "a:1,0;b:0.5,0.5").unwrap();
        assert_eq!(v.len(), 2);
        assert_eq!(v[1].0, al.letter("b").unwrap());
        assert_eq!(v[1].1[0], Complex64::new(0.5, 0.5));
        assert!(parse_vector_spec(&al, "a:1").is_err());
        assert!(parse_vector_spec(&al, "z:1,0").is_err());
    }
}
