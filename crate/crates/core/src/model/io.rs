//! JSON instance files.
//!
//! One document per problem: sizes, the three matrices as CSR arrays,
//! vectors, bounds (with `"inf"` / `"-inf"` sentinels) and an optional
//! reference primal-dual label in conic coordinates. Floats are written in
//! shortest round-trip form and parsed with correct rounding, so a
//! write/read cycle is bit-exact.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{ModelError, StandardQp};
use crate::sparse::CsrMatrix;

pub const INSTANCE_FORMAT: &str = "drgd-instance";
pub const INSTANCE_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum InstanceError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse { line: usize, column: usize, message: String },
    #[error("unsupported instance file {found:?} (expected {INSTANCE_FORMAT} v{INSTANCE_VERSION})")]
    Version { found: String },
    #[error("field `{field}`: {message}")]
    Field { field: &'static str, message: String },
    #[error(transparent)]
    Model(#[from] ModelError),
}

impl From<serde_json::Error> for InstanceError {
    fn from(e: serde_json::Error) -> Self {
        InstanceError::Parse { line: e.line(), column: e.column(), message: e.to_string() }
    }
}

/// Reference primal-dual pair `(x*, y*)`; `y*` is indexed by conic rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Label {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub qp: StandardQp,
    pub label: Option<Label>,
}

#[derive(Serialize, Deserialize)]
struct MatrixRecord {
    nrows: usize,
    ncols: usize,
    offsets: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl MatrixRecord {
    fn from_matrix(m: &CsrMatrix) -> Self {
        Self {
            nrows: m.nrows(),
            ncols: m.ncols(),
            offsets: m.indptr().to_vec(),
            indices: m.indices().to_vec(),
            values: m.values().to_vec(),
        }
    }

    fn into_matrix(self, field: &'static str) -> Result<CsrMatrix, InstanceError> {
        CsrMatrix::try_new(self.nrows, self.ncols, self.offsets, self.indices, self.values)
            .map_err(|e| InstanceError::Field { field, message: e.to_string() })
    }
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum BoundValue {
    Finite(f64),
    Sentinel(String),
}

fn encode_bounds(v: &[f64]) -> Vec<BoundValue> {
    v.iter()
        .map(|&x| match x {
            f64::INFINITY => BoundValue::Sentinel("inf".into()),
            f64::NEG_INFINITY => BoundValue::Sentinel("-inf".into()),
            _ => BoundValue::Finite(x),
        })
        .collect()
}

fn decode_bounds(v: Vec<BoundValue>, field: &'static str) -> Result<Vec<f64>, InstanceError> {
    v.into_iter()
        .map(|b| match b {
            BoundValue::Finite(x) => Ok(x),
            BoundValue::Sentinel(s) if s == "inf" => Ok(f64::INFINITY),
            BoundValue::Sentinel(s) if s == "-inf" => Ok(f64::NEG_INFINITY),
            BoundValue::Sentinel(s) => Err(InstanceError::Field { field, message: format!("unknown bound {s:?}") }),
        })
        .collect()
}

#[derive(Serialize, Deserialize)]
struct InstanceDocument {
    format: String,
    version: u32,
    n: usize,
    m_eq: usize,
    m_ineq: usize,
    p: MatrixRecord,
    c: Vec<f64>,
    a_eq: MatrixRecord,
    b_eq: Vec<f64>,
    g: MatrixRecord,
    h: Vec<f64>,
    lower: Vec<BoundValue>,
    upper: Vec<BoundValue>,
    label: Option<Label>,
}

pub fn to_json(instance: &Instance) -> String {
    let qp = &instance.qp;
    let doc = InstanceDocument {
        format: INSTANCE_FORMAT.into(),
        version: INSTANCE_VERSION,
        n: qp.n(),
        m_eq: qp.m_eq(),
        m_ineq: qp.m_ineq(),
        p: MatrixRecord::from_matrix(&qp.p),
        c: qp.c.clone(),
        a_eq: MatrixRecord::from_matrix(&qp.a_eq),
        b_eq: qp.b_eq.clone(),
        g: MatrixRecord::from_matrix(&qp.g),
        h: qp.h.clone(),
        lower: encode_bounds(&qp.lower),
        upper: encode_bounds(&qp.upper),
        label: instance.label.clone(),
    };
    serde_json::to_string_pretty(&doc).expect("instance documents always serialize")
}

pub fn from_json(text: &str) -> Result<Instance, InstanceError> {
    let header: serde_json::Value = serde_json::from_str(text)?;
    let format = header.get("format").and_then(|v| v.as_str()).unwrap_or("");
    let version = header.get("version").and_then(|v| v.as_u64());
    if format != INSTANCE_FORMAT || version != Some(INSTANCE_VERSION as u64) {
        return Err(InstanceError::Version { found: format!("{format} v{}", version.unwrap_or(0)) });
    }
    let doc: InstanceDocument = serde_json::from_str(text)?;
    let qp = StandardQp {
        p: doc.p.into_matrix("p")?,
        c: doc.c,
        a_eq: doc.a_eq.into_matrix("a_eq")?,
        b_eq: doc.b_eq,
        g: doc.g.into_matrix("g")?,
        h: doc.h,
        lower: decode_bounds(doc.lower, "lower")?,
        upper: decode_bounds(doc.upper, "upper")?,
    };
    for (field, expected, got) in [("n", doc.n, qp.n()), ("m_eq", doc.m_eq, qp.m_eq()), ("m_ineq", doc.m_ineq, qp.m_ineq())] {
        if expected != got {
            return Err(InstanceError::Field { field, message: format!("header says {expected}, data has {got}") });
        }
    }
    qp.validate()?;
    if let Some(label) = &doc.label {
        if label.x.len() != qp.n() {
            return Err(InstanceError::Field { field: "label.x", message: format!("length {} != n", label.x.len()) });
        }
    }
    Ok(Instance { qp, label: doc.label })
}

pub fn write_instance(path: &Path, instance: &Instance) -> Result<(), InstanceError> {
    fs::write(path, to_json(instance)).map_err(|source| InstanceError::Io { path: path.display().to_string(), source })
}

pub fn read_instance(path: &Path) -> Result<Instance, InstanceError> {
    let text =
        fs::read_to_string(path).map_err(|source| InstanceError::Io { path: path.display().to_string(), source })?;
    from_json(&text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sample() -> Instance {
        let mut qp = StandardQp::unconstrained(CsrMatrix::diagonal(&[0.1, 1.0 / 3.0, 2.0]), vec![1e-300, -0.7, 3.3]);
        qp.a_eq = CsrMatrix::from_dense(1, 3, &[1.0, 0.0, std::f64::consts::PI]).unwrap();
        qp.b_eq = vec![0.123456789012345678];
        qp.g = CsrMatrix::from_dense(1, 3, &[0.0, -2.5, 1.0]).unwrap();
        qp.h = vec![5.0];
        qp.lower = vec![-1.0, f64::NEG_INFINITY, 0.0];
        qp.upper = vec![1.0, f64::INFINITY, f64::INFINITY];
        Instance { qp, label: Some(Label { x: vec![0.5, -0.25, 1.0 / 7.0], y: vec![1.0, 2.0, 3.0] }) }
    }

    #[test]
    fn round_trip_with_infinite_bounds() {
        let inst = sample();
        let back = from_json(&to_json(&inst)).unwrap();
        assert_eq!(back, inst);
        assert_eq!(back.qp.upper[1], f64::INFINITY);
        assert_eq!(back.qp.lower[1], f64::NEG_INFINITY);
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.json");
        write_instance(&path, &sample()).unwrap();
        assert_eq!(read_instance(&path).unwrap(), sample());
    }

    #[test]
    fn malformed_reports_location() {
        let text = to_json(&sample()).replacen("\"c\": [", "\"c\": [oops, ", 1);
        match from_json(&text) {
            Err(InstanceError::Parse { line, .. }) => assert!(line > 1),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn wrong_version_rejected() {
        let text = to_json(&sample()).replacen("\"version\": 1", "\"version\": 7", 1);
        assert!(matches!(from_json(&text), Err(InstanceError::Version { .. })));
    }

    #[test]
    fn bad_sentinel_and_structure() {
        let text = to_json(&sample()).replacen("\"-inf\"", "\"minus infinity\"", 1);
        assert!(matches!(from_json(&text), Err(InstanceError::Field { field: "lower", .. })));
        let text = to_json(&sample()).replacen("\"m_eq\": 1", "\"m_eq\": 2", 1);
        assert!(matches!(from_json(&text), Err(InstanceError::Field { field: "m_eq", .. })));
    }

    proptest! {
        #[test]
        fn floats_survive_bit_exact(vals in proptest::collection::vec(any::<f64>().prop_filter("finite", |v| v.is_finite()), 1..20)) {
            let n = vals.len();
            let mut qp = StandardQp::unconstrained(CsrMatrix::zeros(n, n), vals.clone());
            qp.lower = vals.iter().map(|v| v.min(0.0)).collect();
            let inst = Instance { qp, label: None };
            let back = from_json(&to_json(&inst)).unwrap();
            for (a, b) in back.qp.c.iter().zip(&vals) {
                prop_assert_eq!(a.to_bits(), b.to_bits());
            }
        }
    }
}
