//! Flat-buffer `f32` tensors.
//!
//! A [`Tensor`] is an immutable shaped view over a flat `Vec<f32>` behind an
//! `Arc`. Operations never mutate their inputs — they allocate fresh output
//! buffers — so a tensor can be shared freely (including read-only across
//! threads) and its identity (the allocation address) is stable for the
//! lifetime of every clone. The autodiff tape uses that identity to route
//! gradients; see [`crate::tape`].
//!
//! Gradients live behind a `Mutex` so that `backward` can populate leaves
//! while the rest of the tensor stays immutable. Only leaves created with
//! [`Tensor::param`] carry `requires_grad = true`; everything produced by an
//! op has it false and relies on the tape for gradient routing.

use std::fmt;
use std::sync::{Arc, Mutex};

use crate::error::{Error, Result};

struct Inner {
    shape: Vec<usize>,
    data: Vec<f32>,
    requires_grad: bool,
    grad: Mutex<Option<Vec<f32>>>,
}

#[derive(Clone)]
pub struct Tensor {
    inner: Arc<Inner>,
}

impl Tensor {
    /// Build a tensor, checking that the shape product matches the data
    /// length. Non-finite values are allowed to pass through so that a
    /// diverging training run reaches the trainer's loss check and aborts
    /// with a diagnostic instead of panicking mid-op; finiteness is asserted
    /// by the op test suite on every oracle case.
    pub fn from_vec(shape: Vec<usize>, data: Vec<f32>) -> Result<Self> {
        let numel: usize = shape.iter().product();
        if numel != data.len() {
            return Err(Error::dimension(format!(
                "tensor shape {:?} implies {} elements but data has {}",
                shape,
                numel,
                data.len()
            )));
        }
        Ok(Tensor {
            inner: Arc::new(Inner {
                shape,
                data,
                requires_grad: false,
                grad: Mutex::new(None),
            }),
        })
    }

    /// A gradient-carrying leaf (trainable parameter).
    pub fn param(shape: Vec<usize>, data: Vec<f32>) -> Result<Self> {
        let t = Tensor::from_vec(shape, data)?;
        // Arc was just created; we are the only owner.
        let inner = Arc::into_inner(t.inner).expect("fresh tensor is uniquely owned");
        Ok(Tensor {
            inner: Arc::new(Inner {
                requires_grad: true,
                ..inner
            }),
        })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let numel = shape.iter().product();
        Tensor::from_vec(shape, vec![0.0; numel]).expect("zeros: shape/product always consistent")
    }

    pub fn scalar(value: f32) -> Self {
        Tensor::from_vec(vec![1], vec![value]).expect("scalar: shape always consistent")
    }

    pub fn shape(&self) -> &[usize] {
        &self.inner.shape
    }

    pub fn data(&self) -> &[f32] {
        &self.inner.data
    }

    pub fn numel(&self) -> usize {
        self.inner.data.len()
    }

    pub fn requires_grad(&self) -> bool {
        self.inner.requires_grad
    }

    /// The single element of a scalar tensor.
    pub fn item(&self) -> Result<f32> {
        if self.numel() != 1 {
            return Err(Error::contract(format!(
                "item() requires a scalar tensor, got shape {:?}",
                self.shape()
            )));
        }
        Ok(self.inner.data[0])
    }

    /// Gradient populated by the most recent `backward`, if any.
    pub fn grad(&self) -> Option<Vec<f32>> {
        self.inner.grad.lock().expect("grad lock poisoned").clone()
    }

    pub(crate) fn set_grad(&self, grad: Vec<f32>) {
        debug_assert_eq!(grad.len(), self.numel());
        *self.inner.grad.lock().expect("grad lock poisoned") = Some(grad);
    }

    pub fn clear_grad(&self) {
        *self.inner.grad.lock().expect("grad lock poisoned") = None;
    }

    /// Identity key: the allocation address shared by all clones. Stable as
    /// long as any clone is alive, which the tape guarantees during backward
    /// by holding strong references to every recorded tensor.
    pub(crate) fn key(&self) -> usize {
        Arc::as_ptr(&self.inner) as usize
    }

    /// Two-dimensional shape accessor for ops that require matrices.
    pub(crate) fn dims2(&self, op: &str) -> Result<(usize, usize)> {
        match self.shape() {
            [r, c] => Ok((*r, *c)),
            other => Err(Error::dimension(format!(
                "{op} requires a 2-d tensor, got shape {other:?}"
            ))),
        }
    }
}

impl fmt::Debug for Tensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Tensor")
            .field("shape", &self.inner.shape)
            .field("requires_grad", &self.inner.requires_grad)
            .finish_non_exhaustive()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shape_product_must_match_data_length() {
        let err = Tensor::from_vec(vec![2, 3], vec![0.0; 5]).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("[2, 3]") && msg.contains('5'), "got: {msg}");
    }

    #[test]
    fn scalar_item_and_non_scalar_rejection() {
        assert_eq!(Tensor::scalar(4.25).item().unwrap(), 4.25);
        assert!(Tensor::zeros(vec![2]).item().is_err());
    }

    #[test]
    fn clones_share_identity_and_data() {
        let a = Tensor::from_vec(vec![2], vec![1.0, 2.0]).unwrap();
        let b = a.clone();
        assert_eq!(a.key(), b.key());
        assert_eq!(a.data(), b.data());
    }

    #[test]
    fn params_carry_requires_grad() {
        let p = Tensor::param(vec![2], vec![0.5, -0.5]).unwrap();
        assert!(p.requires_grad());
        assert!(p.grad().is_none());
        p.set_grad(vec![1.0, 1.0]);
        assert_eq!(p.grad().unwrap(), vec![1.0, 1.0]);
        p.clear_grad();
        assert!(p.grad().is_none());
    }
}
