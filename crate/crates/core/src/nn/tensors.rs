//! JSON document of named, row-major tensors.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedTensor {
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
}

impl NamedTensor {
    pub fn new(shape: Vec<usize>, values: Vec<f64>) -> Result<Self> {
        let t = Self { shape, values };
        t.validate("tensor")?;
        Ok(t)
    }

    fn validate(&self, name: &str) -> Result<()> {
        let n: usize = self.shape.iter().product();
        if n != self.values.len() {
            return Err(Error::shape(format!("tensor {name}"), n, self.values.len()));
        }
        if self.values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("tensor {name}")));
        }
        Ok(())
    }
}

/// Parameter names mapped to tensors; keys serialize in sorted order.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TensorDoc(pub BTreeMap<String, NamedTensor>);

impl TensorDoc {
    pub fn insert(&mut self, name: impl Into<String>, shape: Vec<usize>, values: Vec<f64>) {
        self.0.insert(name.into(), NamedTensor { shape, values });
    }

    /// Removes and returns `name`, checking its shape.
    pub fn take(&mut self, name: &str, shape: &[usize]) -> Result<Vec<f64>> {
        let t = self
            .0
            .remove(name)
            .ok_or_else(|| Error::Data(format!("missing parameter {name}")))?;
        t.validate(name)?;
        if t.shape != shape {
            return Err(Error::Data(format!(
                "parameter {name} has shape {:?}, expected {:?}",
                t.shape, shape
            )));
        }
        Ok(t.values)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let doc: TensorDoc = serde_json::from_str(s)?;
        for (name, t) in &doc.0 {
            t.validate(name)?;
        }
        Ok(doc)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn json_round_trip_is_bit_exact(values in prop::collection::vec(any::<f64>().prop_filter("finite", |v| v.is_finite()), 1..40)) {
            let mut doc = TensorDoc::default();
            doc.insert("w", vec![values.len()], values.clone());
            let back = TensorDoc::from_json(&doc.to_json().unwrap()).unwrap();
            let got = &back.0["w"].values;
            prop_assert_eq!(got.len(), values.len());
            for (a, b) in got.iter().zip(&values) {
                prop_assert_eq!(a.to_bits(), b.to_bits());
            }
        }
    }

    #[test]
    fn take_checks_shape() {
        let mut doc = TensorDoc::default();
        doc.insert("a", vec![2, 2], vec![1., 2., 3., 4.]);
        assert!(doc.clone().take("a", &[4]).is_err());
        assert!(doc.clone().take("b", &[4]).is_err());
        assert_eq!(doc.take("a", &[2, 2]).unwrap(), vec![1., 2., 3., 4.]);
        assert!(TensorDoc::from_json(r#"{"x":{"shape":[3],"values":[1.0]}}"#).is_err());
    }
}
