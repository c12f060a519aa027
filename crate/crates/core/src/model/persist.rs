//! JSON model files: `{"magic", "version", "kind", "scalar", "body"}`.

use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{Classifier, ModelError};
use crate::scalar::Scalar;

pub const MODEL_MAGIC: &str = "PAYATTR-MODEL";
pub const MODEL_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Container<B> {
    magic: String,
    version: u32,
    kind: String,
    scalar: String,
    body: B,
}

pub fn write_container<B: Serialize>(path: &Path, kind: &str, scalar: &str, body: &B) -> Result<(), ModelError> {
    let c = Container { magic: MODEL_MAGIC.into(), version: MODEL_VERSION, kind: kind.into(), scalar: scalar.into(), body };
    let json = serde_json::to_vec(&c).map_err(|e| ModelError::Corrupt(e.to_string()))?;
    fs::write(path, json)?;
    Ok(())
}

/// Checks the header before decoding the body. `kind = None` accepts any.
pub fn read_container<B: DeserializeOwned>(path: &Path, kind: Option<&str>, scalar: &str) -> Result<(String, B), ModelError> {
    let bytes = fs::read(path)?;
    let value: Value = serde_json::from_slice(&bytes).map_err(|e| ModelError::Corrupt(e.to_string()))?;
    let field = |k: &str| value.get(k).and_then(Value::as_str).map(str::to_owned);
    match field("magic") {
        Some(m) if m == MODEL_MAGIC => {}
        other => return Err(ModelError::Version(format!("bad magic {other:?}"))),
    }
    match value.get("version").and_then(Value::as_u64) {
        Some(v) if v == u64::from(MODEL_VERSION) => {}
        other => return Err(ModelError::Version(format!("unsupported version {other:?}"))),
    }
    let found_kind = field("kind").ok_or_else(|| ModelError::Corrupt("missing kind".into()))?;
    if let Some(k) = kind {
        if k != found_kind {
            return Err(ModelError::Version(format!("expected a {k} file, found {found_kind}")));
        }
    }
    match field("scalar") {
        Some(s) if s == scalar => {}
        other => return Err(ModelError::Version(format!("expected scalar {scalar}, found {other:?}"))),
    }
    let body = value.get("body").cloned().ok_or_else(|| ModelError::Corrupt("missing body".into()))?;
    let body = serde_json::from_value(body).map_err(|e| ModelError::Corrupt(e.to_string()))?;
    Ok((found_kind, body))
}

pub fn save_model<T: Scalar>(model: &Classifier<T>, path: &Path) -> Result<(), ModelError> {
    write_container(path, "classifier", T::NAME, model)
}

pub fn load_model<T: Scalar>(path: &Path) -> Result<Classifier<T>, ModelError> {
    read_container(path, Some("classifier"), T::NAME).map(|(_, m)| m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{train_gbdt, train_linear_svm, train_mlp, GbdtConfig, MlpConfig, SvmConfig};
    use crate::vectorize::SparseMatrix;

    fn data() -> (SparseMatrix<f64>, Vec<u8>) {
        let x = SparseMatrix::from_dense(&[
            vec![0.1, 0.0, 1.0 / 3.0],
            vec![0.0, 2.7, -0.2],
            vec![1.9, 0.0, 0.0],
            vec![0.0, 0.4, 0.7],
        ])
        .unwrap();
        (x, vec![1, 0, 1, 0])
    }

    fn classifiers() -> Vec<Classifier<f64>> {
        let (x, y) = data();
        let signed: Vec<i8> = y.iter().map(|&v| if v == 1 { 1 } else { -1 }).collect();
        vec![
            Classifier::Svm(train_linear_svm(&x, &signed, &SvmConfig::default(), vec!["a".into(), "b".into(), "c".into()]).unwrap()),
            Classifier::Mlp(train_mlp(&x, &y, &MlpConfig { epochs: 3, hidden: 4, ..Default::default() }).unwrap()),
            Classifier::Gbdt(train_gbdt(&x, &y, &GbdtConfig { rounds: 4, ..Default::default() }).unwrap()),
        ]
    }

    #[test]
    fn round_trip_is_bit_identical() {
        let dir = tempfile::tempdir().unwrap();
        let (x, _) = data();
        let probe = SparseMatrix::from_dense(&[vec![0.123456789, -9.87654321e-3, 1e-7]]).unwrap();
        for m in classifiers() {
            let p = dir.path().join(format!("{}.json", m.kind()));
            save_model(&m, &p).unwrap();
            let back: Classifier<f64> = load_model(&p).unwrap();
            assert_eq!(back, m);
            for probe in [&x, &probe] {
                let a: Vec<u64> = m.score(probe).unwrap().iter().map(|v| v.to_bits()).collect();
                let b: Vec<u64> = back.score(probe).unwrap().iter().map(|v| v.to_bits()).collect();
                assert_eq!(a, b);
            }
        }
    }

    #[test]
    fn rejects_wrong_header_and_truncation() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.json");
        let m = &classifiers()[0];
        save_model(m, &p).unwrap();

        let text = fs::read_to_string(&p).unwrap();
        fs::write(&p, text.replacen(MODEL_MAGIC, "NOT-A-MODEL", 1)).unwrap();
        assert!(matches!(load_model::<f64>(&p), Err(ModelError::Version(_))));

        fs::write(&p, text.replacen("\"version\":1", "\"version\":99", 1)).unwrap();
        assert!(matches!(load_model::<f64>(&p), Err(ModelError::Version(_))));

        fs::write(&p, &text).unwrap();
        assert!(matches!(load_model::<f32>(&p), Err(ModelError::Version(_))));

        fs::write(&p, &text[..text.len() / 2]).unwrap();
        assert!(matches!(load_model::<f64>(&p), Err(ModelError::Corrupt(_))));
    }
}
