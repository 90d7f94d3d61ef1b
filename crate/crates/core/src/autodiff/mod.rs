//! Reverse-mode automatic differentiation over dense real and complex tensors.
//!
//! A [`Tape`] records every primitive eagerly: the forward value is computed
//! when the operation is recorded, and [`Tape::backward`] walks the nodes in
//! reverse order accumulating adjoints.
//!
//! # Complex gradient convention
//!
//! For a real loss `L` and a complex tensor `z = x + iy`, the gradient stored
//! for `z` is `∂L/∂x + i·∂L/∂y` element by element, i.e. the gradient of `L`
//! with respect to `z` viewed as a real vector of twice the length, packed
//! back into complex numbers. Under Wirtinger calculus this equals `2·∂L/∂z̄`.
//! With this convention a complex-linear map `y = A z` back-propagates as
//! `g_z = Aᴴ g_y`, so the adjoint of the orthonormal centered FFT is the
//! centered inverse FFT.

mod conv;
pub mod fft;
pub mod resample;
mod tape;

pub use num_complex::Complex64 as C64;
pub use resample::ResampleGrid;
pub use tape::{Gradients, Primitive, Tape, Var};

use crate::error::{Error, Result};

/// Floating-point precision used for values recorded on a tape.
///
/// Storage is always `f64`; `F32` rounds every recorded forward value and
/// accumulated adjoint through `f32`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    #[default]
    F64,
    F32,
}

impl Precision {
    pub(crate) fn round_real(self, data: &mut [f64]) {
        if self == Precision::F32 {
            for v in data {
                *v = *v as f32 as f64;
            }
        }
    }

    pub(crate) fn round_complex(self, data: &mut [C64]) {
        if self == Precision::F32 {
            for v in data {
                *v = C64::new(v.re as f32 as f64, v.im as f32 as f64);
            }
        }
    }
}

/// Flat storage of a tensor.
#[derive(Debug, Clone, PartialEq)]
pub enum Data {
    Real(Vec<f64>),
    Complex(Vec<C64>),
}

impl Data {
    pub fn len(&self) -> usize {
        match self {
            Data::Real(v) => v.len(),
            Data::Complex(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Dense row-major tensor of real or complex scalars.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Data,
}

fn check_len(shape: &[usize], len: usize) -> Result<()> {
    let n: usize = shape.iter().product();
    if n != len {
        return Err(Error::shape(
            "tensor",
            format!("shape {shape:?} holds {n} elements but {len} were given"),
        ));
    }
    Ok(())
}

impl Tensor {
    /// Builds a real tensor, rejecting NaN and infinite entries.
    pub fn real(shape: &[usize], data: Vec<f64>) -> Result<Self> {
        check_len(shape, data.len())?;
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!(
                "real tensor entry {i} is {}",
                data[i]
            )));
        }
        Ok(Self {
            shape: shape.to_vec(),
            data: Data::Real(data),
        })
    }

    /// Builds a complex tensor, rejecting NaN and infinite components.
    pub fn complex(shape: &[usize], data: Vec<C64>) -> Result<Self> {
        check_len(shape, data.len())?;
        if let Some(i) = data
            .iter()
            .position(|v| !v.re.is_finite() || !v.im.is_finite())
        {
            return Err(Error::NonFinite(format!(
                "complex tensor entry {i} is {}",
                data[i]
            )));
        }
        Ok(Self {
            shape: shape.to_vec(),
            data: Data::Complex(data),
        })
    }

    /// Internal constructor for computed values; shape is trusted.
    pub(crate) fn from_data(shape: Vec<usize>, data: Data) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        Self { shape, data }
    }

    pub fn zeros_real(shape: &[usize]) -> Self {
        let n = shape.iter().product();
        Self::from_data(shape.to_vec(), Data::Real(vec![0.0; n]))
    }

    pub fn zeros_complex(shape: &[usize]) -> Self {
        let n = shape.iter().product();
        Self::from_data(shape.to_vec(), Data::Complex(vec![C64::new(0.0, 0.0); n]))
    }

    pub fn scalar(v: f64) -> Self {
        Self::from_data(vec![1], Data::Real(vec![v]))
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn data(&self) -> &Data {
        &self.data
    }

    pub fn is_complex(&self) -> bool {
        matches!(self.data, Data::Complex(_))
    }

    pub fn as_real(&self) -> Option<&[f64]> {
        match &self.data {
            Data::Real(v) => Some(v),
            Data::Complex(_) => None,
        }
    }

    pub fn as_complex(&self) -> Option<&[C64]> {
        match &self.data {
            Data::Complex(v) => Some(v),
            Data::Real(_) => None,
        }
    }

    pub(crate) fn real_slice(&self, op: &'static str) -> Result<&[f64]> {
        self.as_real().ok_or(Error::DType {
            op,
            expected: "real",
        })
    }

    pub(crate) fn complex_slice(&self, op: &'static str) -> Result<&[C64]> {
        self.as_complex().ok_or(Error::DType {
            op,
            expected: "complex",
        })
    }

    pub fn into_real(self) -> Option<Vec<f64>> {
        match self.data {
            Data::Real(v) => Some(v),
            Data::Complex(_) => None,
        }
    }

    pub fn into_complex(self) -> Option<Vec<C64>> {
        match self.data {
            Data::Complex(v) => Some(v),
            Data::Real(_) => None,
        }
    }

    pub fn reshape(mut self, shape: &[usize]) -> Result<Self> {
        check_len(shape, self.numel())?;
        self.shape = shape.to_vec();
        Ok(self)
    }

    /// Euclidean norm, treating complex entries as pairs of reals.
    pub fn norm(&self) -> f64 {
        match &self.data {
            Data::Real(v) => v.iter().map(|x| x * x).sum::<f64>().sqrt(),
            Data::Complex(v) => v.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt(),
        }
    }

    /// The single value of a one-element real tensor.
    pub fn item(&self) -> Option<f64> {
        match &self.data {
            Data::Real(v) if v.len() == 1 => Some(v[0]),
            _ => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn construction_checks_length_and_finiteness() {
        assert!(Tensor::real(&[2, 2], vec![0.0; 3]).is_err());
        assert!(Tensor::real(&[2], vec![1.0, f64::NAN]).is_err());
        assert!(Tensor::complex(&[1], vec![C64::new(f64::INFINITY, 0.0)]).is_err());
        let t = Tensor::complex(&[1, 2], vec![C64::new(3.0, 4.0), C64::new(0.0, 0.0)]).unwrap();
        assert_eq!(t.norm(), 5.0);
    }

    #[test]
    fn f32_precision_rounds() {
        let mut v = vec![0.1_f64];
        Precision::F32.round_real(&mut v);
        assert_eq!(v[0], 0.1_f32 as f64);
        let mut w = vec![0.1_f64];
        Precision::F64.round_real(&mut w);
        assert_eq!(w[0], 0.1);
    }
}

#[cfg(test)]
mod gradcheck;
