//! Row-major `{ "shape": [rows, cols], "data": [...] }` encoding for dense
//! matrices and vectors.

use crate::prelude::*;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

#[derive(Serialize, Deserialize)]
struct Dense {
    shape: [usize; 2],
    data: Vec<f64>,
}

impl Dense {
    fn from_matrix(m: &DMatrix<f64>) -> Self {
        let (r, c) = m.shape();
        let mut data = Vec::with_capacity(r * c);
        for i in 0..r {
            for j in 0..c {
                data.push(m[(i, j)]);
            }
        }
        Dense { shape: [r, c], data }
    }

    fn into_matrix<E: serde::de::Error>(self) -> Result<DMatrix<f64>, E> {
        let [r, c] = self.shape;
        if r * c != self.data.len() {
            return Err(E::custom(format!("shape {r}x{c} does not match {} entries", self.data.len())));
        }
        Ok(DMatrix::from_row_slice(r, c, &self.data))
    }
}

pub mod matrix {
    use super::*;

    pub fn serialize<S: Serializer>(m: &DMatrix<f64>, s: S) -> Result<S::Ok, S::Error> {
        Dense::from_matrix(m).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DMatrix<f64>, D::Error> {
        Dense::deserialize(d)?.into_matrix()
    }
}

pub mod vector {
    use super::*;

    pub fn serialize<S: Serializer>(v: &DVector<f64>, s: S) -> Result<S::Ok, S::Error> {
        v.as_slice().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DVector<f64>, D::Error> {
        Ok(DVector::from_vec(Vec::<f64>::deserialize(d)?))
    }
}
