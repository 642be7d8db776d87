use psim_core::SimRng;
use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Error, Result};

/// Dense row-major `f64` array, usually `(batch, channels, height, width)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(shape: &[usize]) -> Self {
        Self {
            shape: shape.to_vec(),
            data: vec![0.0; shape.iter().product()],
        }
    }

    pub fn filled(shape: &[usize], value: f64) -> Self {
        Self {
            shape: shape.to_vec(),
            data: vec![value; shape.iter().product()],
        }
    }

    pub fn from_vec(shape: &[usize], data: Vec<f64>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(shape_err(
                "from_vec",
                format!("shape {shape:?} needs {n} values, got {}", data.len()),
            ));
        }
        Ok(Self {
            shape: shape.to_vec(),
            data,
        })
    }

    /// Gaussian entries with mean 0 and standard deviation `std`.
    pub fn randn(shape: &[usize], std: f64, rng: &mut SimRng) -> Self {
        let n = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: (0..n).map(|_| std * rng.normal()).collect(),
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    /// `(n, c, h, w)` of a rank-4 tensor.
    pub fn dims4(&self) -> Result<(usize, usize, usize, usize)> {
        match self.shape[..] {
            [n, c, h, w] => Ok((n, c, h, w)),
            _ => Err(shape_err("dims4", format!("expected rank 4, got {:?}", self.shape))),
        }
    }

    pub fn reshape(mut self, shape: &[usize]) -> Result<Self> {
        if shape.iter().product::<usize>() != self.data.len() {
            return Err(shape_err("reshape", format!("{:?} -> {shape:?}", self.shape)));
        }
        self.shape = shape.to_vec();
        Ok(self)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        self.same_shape(other, "zip_map")?;
        Ok(Self {
            shape: self.shape.clone(),
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
        })
    }

    pub fn add_assign(&mut self, other: &Self) -> Result<()> {
        self.same_shape(other, "add_assign")?;
        self.data.iter_mut().zip(&other.data).for_each(|(a, b)| *a += b);
        Ok(())
    }

    pub fn scale(&mut self, k: f64) {
        self.data.iter_mut().for_each(|v| *v *= k);
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn mean(&self) -> f64 {
        self.sum() / self.data.len() as f64
    }

    pub fn dot(&self, other: &Self) -> Result<f64> {
        self.same_shape(other, "dot")?;
        Ok(self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum())
    }

    pub fn same_shape(&self, other: &Self, op: &'static str) -> Result<()> {
        if self.shape != other.shape {
            return Err(shape_err(op, format!("{:?} vs {:?}", self.shape, other.shape)));
        }
        Ok(())
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Enforces the no-NaN contract for the output of layer `layer`.
    pub fn check_finite(self, layer: usize, op: &'static str) -> Result<Self> {
        if self.all_finite() {
            Ok(self)
        } else {
            Err(Error::NonFinite { layer, op })
        }
    }
}

/// Concatenates two rank-4 tensors along the channel axis.
pub fn concat_channels(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let (n, ca, h, w) = a.dims4()?;
    let (nb, cb, hb, wb) = b.dims4()?;
    if (n, h, w) != (nb, hb, wb) {
        return Err(shape_err("concat", format!("{:?} vs {:?}", a.shape(), b.shape())));
    }
    let plane = h * w;
    let mut data = Vec::with_capacity(n * (ca + cb) * plane);
    for i in 0..n {
        data.extend_from_slice(&a.data()[i * ca * plane..(i + 1) * ca * plane]);
        data.extend_from_slice(&b.data()[i * cb * plane..(i + 1) * cb * plane]);
    }
    Tensor::from_vec(&[n, ca + cb, h, w], data)
}

/// Splits a channel-concatenated gradient back into its two parts.
pub fn split_channels(t: &Tensor, first: usize) -> Result<(Tensor, Tensor)> {
    let (n, c, h, w) = t.dims4()?;
    if first > c {
        return Err(shape_err("split", format!("{first} > {c} channels")));
    }
    let plane = h * w;
    let mut a = Vec::with_capacity(n * first * plane);
    let mut b = Vec::with_capacity(n * (c - first) * plane);
    for i in 0..n {
        let base = i * c * plane;
        a.extend_from_slice(&t.data()[base..base + first * plane]);
        b.extend_from_slice(&t.data()[base + first * plane..base + c * plane]);
    }
    Ok((
        Tensor::from_vec(&[n, first, h, w], a)?,
        Tensor::from_vec(&[n, c - first, h, w], b)?,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn concat_split_inverse() {
        let mut rng = SimRng::new(1, 1);
        let a = Tensor::randn(&[2, 3, 4, 5], 1.0, &mut rng);
        let b = Tensor::randn(&[2, 1, 4, 5], 1.0, &mut rng);
        let c = concat_channels(&a, &b).unwrap();
        assert_eq!(c.shape(), &[2, 4, 4, 5]);
        let (a2, b2) = split_channels(&c, 3).unwrap();
        assert_eq!((a2, b2), (a, b));
        assert!(concat_channels(&Tensor::zeros(&[1, 1, 2, 2]), &Tensor::zeros(&[1, 1, 2, 3])).is_err());
    }

    #[test]
    fn non_finite_is_reported() {
        let t = Tensor::from_vec(&[2], vec![1.0, f64::INFINITY]).unwrap();
        assert!(matches!(
            t.check_finite(7, "conv"),
            Err(Error::NonFinite { layer: 7, .. })
        ));
        assert!(Tensor::from_vec(&[2, 2], vec![0.0; 3]).is_err());
    }
}
