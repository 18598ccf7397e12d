use indexmap::IndexMap;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Dense row-major tensor.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct Tensor<T> {
    pub shape: Vec<usize>,
    pub values: Vec<T>,
    pub requires_grad: bool,
    #[serde(skip)]
    pub grad: Option<Vec<T>>,
}

impl<T: Real> Tensor<T> {
    pub fn new(shape: Vec<usize>, values: Vec<T>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if shape.contains(&0) {
            return Err(Error::invalid(format!("tensor shape {shape:?} has a zero dimension")));
        }
        if n != values.len() {
            return Err(Error::invalid(format!(
                "tensor shape {shape:?} needs {n} values, got {}",
                values.len()
            )));
        }
        Ok(Tensor {
            shape,
            values,
            requires_grad: false,
            grad: None,
        })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let n = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            values: vec![T::zero(); n],
            requires_grad: false,
            grad: None,
        }
    }

    pub fn filled(shape: &[usize], v: T) -> Self {
        let mut t = Self::zeros(shape);
        t.values.iter_mut().for_each(|x| *x = v);
        t
    }

    pub fn matrix(rows: usize, cols: usize, values: Vec<T>) -> Result<Self> {
        Self::new(vec![rows, cols], values)
    }

    pub fn from_rows(rows: &[&[f64]]) -> Self {
        let r = rows.len();
        let c = rows[0].len();
        let values = rows.iter().flat_map(|row| row.iter().map(|&v| T::lit(v))).collect();
        Self::new(vec![r, c], values).expect("consistent rows")
    }

    /// Uniform in `±sqrt(6 / (fan_in + fan_out))`.
    pub fn xavier<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Self {
        let limit = (6.0 / (rows + cols) as f64).sqrt();
        let values = (0..rows * cols).map(|_| T::lit(rng.gen_range(-limit..=limit))).collect();
        Tensor {
            shape: vec![rows, cols],
            values,
            requires_grad: true,
            grad: None,
        }
    }

    pub fn with_grad(mut self) -> Self {
        self.requires_grad = true;
        self
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// `(rows, cols)` view: vectors are one row, higher ranks fold leading axes.
    pub fn dims2(&self) -> (usize, usize) {
        match self.shape.as_slice() {
            [n] => (1, *n),
            [r, c] => (*r, *c),
            s => {
                let c = *s.last().expect("non-empty shape");
                (self.values.len() / c, c)
            }
        }
    }
}

/// Named parameter tensors in insertion order.
pub type ParamStore<T> = IndexMap<String, Tensor<T>>;

/// Gradients keyed like a [`ParamStore`].
pub type GradStore<T> = IndexMap<String, Vec<T>>;

pub fn param_count<T>(store: &ParamStore<T>) -> usize {
    store.values().map(|t| t.values.len()).sum()
}
