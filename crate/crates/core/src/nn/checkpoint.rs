use serde::{Deserialize, Serialize};

use super::{Param, Tensor};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

/// Named parameter tensors, in network order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct ParamStore {
    pub tensors: Vec<NamedTensor>,
}

impl ParamStore {
    pub fn from_params<'a>(params: impl IntoIterator<Item = &'a Param>) -> Self {
        let tensors = params
            .into_iter()
            .map(|p| NamedTensor {
                name: p.name.clone(),
                shape: p.value.shape().to_vec(),
                data: p.value.data().to_vec(),
            })
            .collect();
        Self { tensors }
    }

    /// Velocity tensors, named after the parameters they belong to.
    pub fn from_velocity<'a>(
        params: impl IntoIterator<Item = &'a Param>,
        velocity: &[Tensor],
    ) -> Self {
        let tensors = params
            .into_iter()
            .zip(velocity)
            .map(|(p, v)| NamedTensor {
                name: p.name.clone(),
                shape: v.shape().to_vec(),
                data: v.data().to_vec(),
            })
            .collect();
        Self { tensors }
    }

    fn matching<'s>(&'s self, name: &str, shape: &[usize]) -> Result<&'s NamedTensor> {
        let stored = self
            .tensors
            .iter()
            .find(|t| t.name == name)
            .ok_or_else(|| Error::Malformed {
                what: "checkpoint",
                message: format!("missing tensor {name}"),
            })?;
        if stored.shape != shape || stored.data.len() != shape.iter().product::<usize>() {
            return Err(Error::shape(
                format!("checkpoint tensor {name}"),
                &stored.shape,
                shape,
            ));
        }
        Ok(stored)
    }

    /// Copies stored values into `params`, rejecting missing names and shape
    /// mismatches before anything is modified.
    pub fn load_into(&self, params: &mut [&mut Param]) -> Result<()> {
        if self.tensors.len() != params.len() {
            return Err(Error::Malformed {
                what: "checkpoint",
                message: format!(
                    "{} stored tensors for {} parameters",
                    self.tensors.len(),
                    params.len()
                ),
            });
        }
        let sources = params
            .iter()
            .map(|p| self.matching(&p.name, p.value.shape()))
            .collect::<Result<Vec<_>>>()?;
        for (param, src) in params.iter_mut().zip(sources) {
            param.value.data_mut().copy_from_slice(&src.data);
        }
        Ok(())
    }

    /// Rebuilds velocity tensors aligned with `params`.
    pub fn velocity_for<'a>(
        &self,
        params: impl IntoIterator<Item = &'a Param>,
    ) -> Result<Vec<Tensor>> {
        params
            .into_iter()
            .map(|p| {
                let t = self.matching(&p.name, p.value.shape())?;
                Tensor::new(t.shape.clone(), t.data.clone())
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_and_shape_rejection() {
        let mut a = Param::zeros("a", &[2, 2], false);
        a.value.data_mut().copy_from_slice(&[1.0, 2.0, 3.0, 4.0]);
        let store = ParamStore::from_params([&a]);

        let mut b = Param::zeros("a", &[2, 2], false);
        store.load_into(&mut [&mut b]).unwrap();
        assert_eq!(b.value, a.value);

        let mut wrong = Param::zeros("a", &[4], false);
        let err = store.load_into(&mut [&mut wrong]).unwrap_err();
        assert!(matches!(err, Error::ShapeMismatch { .. }));
        assert!(wrong.value.data().iter().all(|&v| v == 0.0));

        let mut renamed = Param::zeros("z", &[2, 2], false);
        assert!(store.load_into(&mut [&mut renamed]).is_err());
    }
}
