use crate::error::{shape_err, Error, Result};
use crate::nn::{Real, Tensor};

/// Latent tensor laid out as `C×H×W`.
#[derive(Clone, Debug, PartialEq)]
pub struct TensorF {
    shape: [usize; 3],
    data: Vec<f32>,
}

impl TensorF {
    pub fn new(shape: [usize; 3], data: Vec<f32>) -> Result<Self> {
        if shape.iter().any(|&d| d == 0) {
            return Err(Error::InvalidArgument(format!("degenerate tensor shape {shape:?}")));
        }
        if shape.iter().product::<usize>() != data.len() {
            return Err(shape_err("TensorF::new", shape, data.len()));
        }
        Ok(TensorF { shape, data })
    }

    pub fn zeros(shape: [usize; 3]) -> Self {
        TensorF {
            shape,
            data: vec![0.0; shape.iter().product()],
        }
    }

    pub fn shape(&self) -> [usize; 3] {
        self.shape
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn map(&self, f: impl Fn(f32) -> f32) -> TensorF {
        TensorF {
            shape: self.shape,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Single-item NCHW batch for the tensor engine.
    pub(crate) fn to_batch<T: Real>(&self) -> Tensor<T> {
        let [c, h, w] = self.shape;
        Tensor::new(vec![1, c, h, w], self.data.iter().map(|&v| T::c(v as f64)).collect())
    }

    pub(crate) fn from_batch<T: Real>(t: &Tensor<T>) -> TensorF {
        let (n, c, h, w) = t.nchw();
        assert_eq!(n, 1, "expected a single-item batch");
        TensorF {
            shape: [c, h, w],
            data: t.data.iter().map(|v| v.f64() as f32).collect(),
        }
    }
}
