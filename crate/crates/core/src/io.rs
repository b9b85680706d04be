//! JSON model and tensor files.
//!
//! A model file holds `d`, `k`, the 1-based `phi`, the rows of `Q` under
//! `"Q"`, and optionally `rho` and `quasi`. Files written for reduced models
//! also carry their residual checks. Floats are written in shortest
//! round-trip form, so reading a file back reproduces every value exactly.

use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Hmm, Model, ObservationMap, QuasiRealization, Realization, Tolerances};
use crate::reduce::Reduction;
use crate::tensor::Tensor3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub d: usize,
    pub k: usize,
    pub phi: Vec<usize>,
    #[serde(rename = "Q")]
    pub q: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho: Option<Vec<f64>>,
    /// Marks a quasi-realization; `rho` is then required.
    #[serde(default)]
    pub quasi: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub residuals: Option<BTreeMap<String, f64>>,
}

fn rows_of(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

impl ModelFile {
    pub fn from_model(model: &Model) -> Self {
        let obs = model.observation_map();
        let (rho, quasi) = match model {
            Model::Hmm(_) => (None, false),
            Model::Quasi(q) => (Some(q.rho().iter().copied().collect()), true),
        };
        Self {
            d: obs.d(),
            k: obs.k(),
            phi: obs.phi().to_vec(),
            q: rows_of(model.transition()),
            rho,
            quasi,
            residuals: None,
        }
    }

    /// A reduced model together with its residual report.
    pub fn from_reduction(red: &Reduction) -> Self {
        let mut f = Self::from_model(&Model::Quasi(red.realization.clone()));
        f.residuals = Some(red.residuals.clone());
        f
    }

    /// Validates the contents and builds the model. Files without `quasi`
    /// must describe a proper HMM.
    pub fn to_model(&self, tol: &Tolerances) -> Result<Model> {
        if self.phi.len() != self.k {
            return Err(Error::Dimension(format!("phi has {} entries, k = {}", self.phi.len(), self.k)));
        }
        if self.q.len() != self.k || self.q.iter().any(|r| r.len() != self.k) {
            return Err(Error::Dimension(format!("Q must be {0}x{0}", self.k)));
        }
        let q = DMatrix::from_fn(self.k, self.k, |i, j| self.q[i][j]);
        let obs = ObservationMap::new(self.d, self.phi.clone())?;
        if self.quasi {
            let rho = self
                .rho
                .as_ref()
                .ok_or_else(|| Error::InvalidModel("quasi-realization without rho".into()))?;
            if rho.len() != self.k {
                return Err(Error::Dimension(format!("rho has {} entries, k = {}", rho.len(), self.k)));
            }
            let rho = DVector::from_column_slice(rho);
            return Ok(Model::Quasi(QuasiRealization::new(q, obs, rho, tol)?));
        }
        let hmm = Hmm::with_tolerances(q, obs, tol)?;
        if let Some(rho) = &self.rho {
            let computed = hmm.stationary(tol)?.rho;
            let given = DVector::from_column_slice(rho);
            if given.len() != computed.len() || (given - computed).amax() > tol.val {
                return Err(Error::InvalidModel("rho is not the stationary vector of Q".into()));
            }
        }
        Ok(Model::Hmm(hmm))
    }
}

pub fn parse_model(text: &str, tol: &Tolerances) -> Result<Model> {
    let file: ModelFile = serde_json::from_str(text)?;
    file.to_model(tol)
}

pub fn read_model(path: impl AsRef<Path>, tol: &Tolerances) -> Result<Model> {
    parse_model(&std::fs::read_to_string(path)?, tol)
}

pub fn model_to_json(model: &Model) -> String {
    serde_json::to_string_pretty(&ModelFile::from_model(model)).expect("model file serializes")
}

pub fn write_json<T: Serialize>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text + "\n")?;
    Ok(())
}

/// Dense tensor export: `values` is row-major over `(future, past, now)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorFile {
    pub dims: [usize; 3],
    pub n: usize,
    pub d: usize,
    pub values: Vec<f64>,
}

impl TensorFile {
    pub fn from_tensor(t: &Tensor3) -> Self {
        let (a, b, c) = t.dims();
        Self {
            dims: [a, b, c],
            n: t.depth(),
            d: t.alphabet(),
            values: t.values().to_vec(),
        }
    }

    pub fn to_tensor(&self) -> Result<Tensor3> {
        let t = Tensor3::from_values(self.n, self.d, self.values.clone())?;
        let (a, b, c) = t.dims();
        if [a, b, c] != self.dims {
            return Err(Error::Dimension(format!("dims {:?} disagree with n and d", self.dims)));
        }
        Ok(t)
    }
}

pub fn read_tensor(path: impl AsRef<Path>) -> Result<Tensor3> {
    let file: TensorFile = serde_json::from_str(&std::fs::read_to_string(path)?)?;
    file.to_tensor()
}

#[cfg(test)]
mod tests {
    use super::*;

    const TWO_STATE: &str = r#"{"d": 2, "k": 2, "phi": [1, 2], "Q": [[0.9, 0.2], [0.1, 0.8]]}"#;

    #[test]
    fn parses_and_round_trips() {
        let tol = Tolerances::default();
        let m = parse_model(TWO_STATE, &tol).unwrap();
        assert!(matches!(m, Model::Hmm(_)));
        assert_eq!(m.transition()[(0, 1)], 0.2);
        let again = parse_model(&model_to_json(&m), &tol).unwrap();
        assert_eq!(m, again);
    }

    #[test]
    fn rejects_bad_column_sum() {
        let text = r#"{"d": 1, "k": 2, "phi": [1, 1], "Q": [[0.9, 0.2], [0.0, 0.8]]}"#;
        assert!(matches!(parse_model(text, &Tolerances::default()), Err(Error::InvalidModel(_))));
    }

    #[test]
    fn malformed_json_is_a_parse_error() {
        assert!(matches!(parse_model("{\"d\": ", &Tolerances::default()), Err(Error::Parse(_))));
    }

    #[test]
    fn quasi_needs_rho() {
        let text = r#"{"d": 2, "k": 2, "phi": [1, 2], "Q": [[0.9, 0.2], [0.1, 0.8]], "quasi": true}"#;
        assert!(parse_model(text, &Tolerances::default()).is_err());
    }

    #[test]
    fn tensor_file_round_trip() {
        let t = Tensor3::from_values(1, 2, (0..8).map(|i| i as f64 / 28.0).collect()).unwrap();
        let f = TensorFile::from_tensor(&t);
        assert_eq!(f.dims, [2, 2, 2]);
        let text = serde_json::to_string(&f).unwrap();
        let back: TensorFile = serde_json::from_str(&text).unwrap();
        assert_eq!(back.to_tensor().unwrap(), t);
    }
}
