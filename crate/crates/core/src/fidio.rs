//! One-FID-per-file text format.
//!
//! ```json
//! {
//!   "dwell_time_s": 1.8301610541727673e-4,
//!   "signal_id": "rat01_vox1",
//!   "voxel": "Vox1",
//!   "animal_id": "rat01",
//!   "truth": {"NAA": 6.5},
//!   "samples": [[1.0e0, 0.0e0], ...]
//! }
//! ```
//!
//! Numbers are written with 17 significant digits so that reading reproduces
//! every finite sample bit for bit.

use std::collections::BTreeMap;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use serde_json::ser::Formatter;
use serde_json::Value;
use thiserror::Error;

use crate::signal::{FidSignal, Metabolite, SignalError, Voxel};

#[derive(Debug, Error)]
pub enum FidIoError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{path}: field `{field}`: {message}")]
    Field {
        path: PathBuf,
        field: String,
        message: String,
    },
    #[error("{path}: not a JSON document: {message}")]
    Syntax { path: PathBuf, message: String },
    #[error("{path}: {source}")]
    Invalid {
        path: PathBuf,
        #[source]
        source: SignalError,
    },
}

impl FidIoError {
    /// Name of the offending field, for schema errors.
    pub fn field(&self) -> Option<&str> {
        match self {
            FidIoError::Field { field, .. } => Some(field),
            _ => None,
        }
    }
}

/// JSON formatter writing floats as `{:.16e}` (17 significant digits).
pub struct ExactFloatFormatter;

impl Formatter for ExactFloatFormatter {
    fn write_f64<W: ?Sized + Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        write!(writer, "{}", format_f64(value))
    }
}

/// 17-significant-digit scientific notation.
pub fn format_f64(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn to_json_string<T: serde::Serialize>(value: &T) -> Result<String, serde_json::Error> {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, ExactFloatFormatter);
    value.serialize(&mut ser)?;
    buf.push(b'\n');
    Ok(String::from_utf8(buf).expect("serde_json writes UTF-8"))
}

pub fn fid_to_string(signal: &FidSignal) -> String {
    let mut obj = serde_json::Map::new();
    obj.insert("dwell_time_s".into(), Value::from(signal.dwell_time()));
    obj.insert("signal_id".into(), Value::from(signal.signal_id.clone()));
    obj.insert("voxel".into(), Value::from(signal.voxel.as_str()));
    obj.insert("animal_id".into(), Value::from(signal.animal_id.clone()));
    if let Some(truth) = &signal.truth {
        let t: serde_json::Map<String, Value> = truth
            .iter()
            .map(|(m, c)| (m.name().to_string(), Value::from(*c)))
            .collect();
        obj.insert("truth".into(), Value::Object(t));
    }
    let samples: Vec<Value> = signal
        .samples()
        .iter()
        .map(|z| Value::Array(vec![Value::from(z.re), Value::from(z.im)]))
        .collect();
    obj.insert("samples".into(), Value::Array(samples));
    // samples are finite by construction, so serialization cannot fail
    to_json_string(&Value::Object(obj)).expect("finite FID serializes")
}

pub fn write_fid(signal: &FidSignal, path: &Path) -> Result<(), FidIoError> {
    fs::write(path, fid_to_string(signal)).map_err(|source| FidIoError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn parse_fid(text: &str, path: &Path) -> Result<FidSignal, FidIoError> {
    let field_err = |field: &str, message: &str| FidIoError::Field {
        path: path.to_path_buf(),
        field: field.to_string(),
        message: message.to_string(),
    };
    let doc: Value = serde_json::from_str(text).map_err(|e| FidIoError::Syntax {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    let obj = doc
        .as_object()
        .ok_or_else(|| FidIoError::Syntax {
            path: path.to_path_buf(),
            message: "top level is not an object".into(),
        })?;
    let get = |field: &str| obj.get(field).ok_or_else(|| field_err(field, "missing"));
    let get_str = |field: &str| {
        get(field)?
            .as_str()
            .map(str::to_string)
            .ok_or_else(|| field_err(field, "expected a string"))
    };

    let dwell = get("dwell_time_s")?
        .as_f64()
        .ok_or_else(|| field_err("dwell_time_s", "expected a number"))?;
    let signal_id = get_str("signal_id")?;
    let voxel: Voxel = get_str("voxel")?
        .parse()
        .map_err(|e: SignalError| field_err("voxel", &e.to_string()))?;
    let animal_id = get_str("animal_id")?;
    let truth = match obj.get("truth") {
        None | Some(Value::Null) => None,
        Some(Value::Object(t)) => {
            let mut out = BTreeMap::new();
            for (k, v) in t {
                let m: Metabolite = k
                    .parse()
                    .map_err(|e: SignalError| field_err("truth", &e.to_string()))?;
                let c = v
                    .as_f64()
                    .ok_or_else(|| field_err("truth", &format!("{k} is not a number")))?;
                out.insert(m, c);
            }
            Some(out)
        }
        Some(_) => return Err(field_err("truth", "expected an object")),
    };
    let raw = get("samples")?
        .as_array()
        .ok_or_else(|| field_err("samples", "expected an array"))?;
    let mut samples = Vec::with_capacity(raw.len());
    for (i, pair) in raw.iter().enumerate() {
        let p = pair
            .as_array()
            .filter(|p| p.len() == 2)
            .ok_or_else(|| field_err("samples", &format!("entry {i} is not a [re, im] pair")))?;
        let re = p[0].as_f64();
        let im = p[1].as_f64();
        match (re, im) {
            (Some(re), Some(im)) => samples.push(Complex64::new(re, im)),
            _ => return Err(field_err("samples", &format!("entry {i} is not numeric"))),
        }
    }
    let fid = FidSignal::new(samples, dwell).map_err(|source| match source {
        SignalError::BadDwell(_) => field_err("dwell_time_s", &source.to_string()),
        SignalError::Empty => field_err("samples", &source.to_string()),
        other => FidIoError::Invalid {
            path: path.to_path_buf(),
            source: other,
        },
    })?;
    let mut fid = fid.with_labels(&signal_id, voxel, &animal_id);
    fid.truth = truth;
    Ok(fid)
}

pub fn read_fid(path: &Path) -> Result<FidSignal, FidIoError> {
    let text = fs::read_to_string(path).map_err(|source| FidIoError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_fid(&text, path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sample_signal(n: usize) -> FidSignal {
        let s: Vec<Complex64> = (0..n)
            .map(|i| Complex64::new((i as f64 * 0.37).sin() / 3.0, (i as f64).sqrt() * 1e-7))
            .collect();
        let mut f = FidSignal::new(s, 1.0 / 5464.0)
            .unwrap()
            .with_labels("rat03_vox2", Voxel::Vox2, "rat03");
        f.truth = Some([(Metabolite::Naa, 8.123456789012345)].into_iter().collect());
        f
    }

    #[test]
    fn round_trip_2048_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.json");
        let s = sample_signal(2048);
        write_fid(&s, &p).unwrap();
        let back = read_fid(&p).unwrap();
        assert_eq!(back.len(), 2048);
        for (a, b) in s.samples().iter().zip(back.samples()) {
            assert_eq!(a.re.to_bits(), b.re.to_bits());
            assert_eq!(a.im.to_bits(), b.im.to_bits());
        }
        assert_eq!(back, s);
    }

    #[test]
    fn missing_dwell_names_field() {
        let text = fid_to_string(&sample_signal(4));
        let mut v: Value = serde_json::from_str(&text).unwrap();
        v.as_object_mut().unwrap().remove("dwell_time_s");
        let err = parse_fid(&v.to_string(), Path::new("x.json")).unwrap_err();
        assert_eq!(err.field(), Some("dwell_time_s"));
        assert!(err.to_string().contains("dwell_time"));
    }

    #[test]
    fn malformed_samples_named() {
        let text = r#"{"dwell_time_s": 0.001, "signal_id": "a", "voxel": "Vox1",
                       "animal_id": "r", "samples": [[1.0, 2.0], [3.0]]}"#;
        let err = parse_fid(text, Path::new("x.json")).unwrap_err();
        assert_eq!(err.field(), Some("samples"));
        let text = r#"{"dwell_time_s": -1, "signal_id": "a", "voxel": "Vox1",
                       "animal_id": "r", "samples": [[1.0, 2.0]]}"#;
        let err = parse_fid(text, Path::new("x.json")).unwrap_err();
        assert_eq!(err.field(), Some("dwell_time_s"));
        let text = r#"{"dwell_time_s": 1, "signal_id": "a", "voxel": "Vox9",
                       "animal_id": "r", "samples": [[1.0, 2.0]]}"#;
        assert_eq!(parse_fid(text, Path::new("x")).unwrap_err().field(), Some("voxel"));
    }

    #[test]
    fn seventeen_digits() {
        assert_eq!(format_f64(0.1), "1.0000000000000001e-1");
        assert_eq!(format_f64(-2.0), "-2.0000000000000000e0");
    }

    proptest! {
        #[test]
        fn any_finite_samples_round_trip(
            vals in proptest::collection::vec((-1e300f64..1e300, -1e-300f64..1e-300), 1..64),
            dwell in 1e-6f64..1.0,
        ) {
            let s: Vec<Complex64> = vals.iter().map(|(a, b)| Complex64::new(*a, *b)).collect();
            let f = FidSignal::new(s, dwell).unwrap().with_labels("x", Voxel::None, "");
            let back = parse_fid(&fid_to_string(&f), Path::new("mem")).unwrap();
            prop_assert_eq!(back, f);
        }
    }
}
