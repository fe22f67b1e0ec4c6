use serde::{Deserialize, Serialize};

use super::{Result, Tensor, TensorError};

pub const CHECKPOINT_FORMAT: &str = "absa-params";
const CHECKPOINT_VERSION: u32 = 1;

/// Ordered, named parameter tensors.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamSet {
    names: Vec<String>,
    tensors: Vec<Tensor>,
}

#[derive(Serialize, Deserialize)]
struct Entry {
    name: String,
    shape: Vec<usize>,
    data: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    format: String,
    version: u32,
    params: Vec<Entry>,
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, t: Tensor) {
        let name = name.into();
        assert!(!self.names.contains(&name), "duplicate parameter {name}");
        self.names.push(name);
        self.tensors.push(t);
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.names.iter().position(|n| n == name).map(|i| &self.tensors[i])
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(move |i| &mut self.tensors[i])
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor] {
        &mut self.tensors
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.names.iter().map(String::as_str).zip(&self.tensors)
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn num_scalars(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    pub fn to_checkpoint_value(&self) -> serde_json::Value {
        serde_json::to_value(Checkpoint {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            params: self
                .iter()
                .map(|(name, t)| Entry {
                    name: name.to_string(),
                    shape: t.shape().to_vec(),
                    data: t.data().to_vec(),
                })
                .collect(),
        })
        .expect("checkpoint serialises")
    }

    pub fn to_checkpoint(&self) -> String {
        serde_json::to_string(&self.to_checkpoint_value()).expect("checkpoint serialises")
    }

    pub fn from_checkpoint_value(value: serde_json::Value) -> Result<Self> {
        let ck: Checkpoint =
            serde_json::from_value(value).map_err(|e| TensorError::BadCheckpoint(e.to_string()))?;
        if ck.format != CHECKPOINT_FORMAT || ck.version != CHECKPOINT_VERSION {
            return Err(TensorError::BadCheckpoint(format!("unsupported {} v{}", ck.format, ck.version)));
        }
        let mut set = ParamSet::new();
        for e in ck.params {
            if set.get(&e.name).is_some() {
                return Err(TensorError::BadCheckpoint(format!("duplicate parameter {}", e.name)));
            }
            let t = Tensor::new(e.shape, e.data)
                .map_err(|_| TensorError::BadCheckpoint(format!("{}: data does not fill shape", e.name)))?;
            set.insert(e.name, t);
        }
        Ok(set)
    }

    pub fn from_checkpoint(text: &str) -> Result<Self> {
        let value = serde_json::from_str(text).map_err(|e| TensorError::BadCheckpoint(e.to_string()))?;
        Self::from_checkpoint_value(value)
    }

    /// Replaces values from `other`, requiring identical names and shapes.
    pub fn load_from(&mut self, other: &ParamSet) -> Result<()> {
        if self.names != other.names {
            return Err(TensorError::BadCheckpoint(format!(
                "parameter names differ: expected {:?}",
                self.names
            )));
        }
        for ((name, mine), theirs) in self.names.iter().zip(&self.tensors).zip(&other.tensors) {
            if mine.shape() != theirs.shape() {
                return Err(TensorError::BadCheckpoint(format!(
                    "{name}: expected shape {:?}, found {:?}",
                    mine.shape(),
                    theirs.shape()
                )));
            }
        }
        self.tensors = other.tensors.clone();
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> ParamSet {
        let mut p = ParamSet::new();
        p.insert("w", Tensor::from_fn(&[2, 3], |i| i as f64 / 7.0));
        p.insert("b", Tensor::from_fn(&[3], |i| -(i as f64) * 1e-17));
        p
    }

    #[test]
    fn checkpoint_round_trip_is_exact() {
        let p = sample();
        let back = ParamSet::from_checkpoint(&p.to_checkpoint()).unwrap();
        assert_eq!(back, p);
        assert_eq!(back.num_scalars(), 9);
    }

    #[test]
    fn load_validates_shapes() {
        let mut target = sample();
        let mut wrong = ParamSet::new();
        wrong.insert("w", Tensor::zeros(&[3, 2]));
        wrong.insert("b", Tensor::zeros(&[3]));
        assert!(target.load_from(&wrong).is_err());
        let bad = r#"{"format":"absa-params","version":1,"params":[{"name":"w","shape":[2,2],"data":[1.0]}]}"#;
        assert!(ParamSet::from_checkpoint(bad).is_err());
        assert!(ParamSet::from_checkpoint(r#"{"format":"x","version":1,"params":[]}"#).is_err());
    }
}
