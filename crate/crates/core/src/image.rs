use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Row-major 2D scalar grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Image<T> {
    width: usize,
    height: usize,
    data: Vec<T>,
}

impl<T: Scalar> Image<T> {
    pub fn new(width: usize, height: usize, data: Vec<T>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidParameter {
                field: "width/height",
                reason: format!("{width}x{height} image has no pixels"),
            });
        }
        if data.len() != width * height {
            return Err(Error::InvalidParameter {
                field: "data",
                reason: format!("length {} != {width}*{height}", data.len()),
            });
        }
        if let Some(index) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        Ok(Self { width, height, data })
    }

    pub fn filled(width: usize, height: usize, value: T) -> Self {
        assert!(width > 0 && height > 0 && value.is_finite());
        Self {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        Self::filled(width, height, T::zero())
    }

    /// Builds an image from a per-pixel function of `(x, y)`.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        assert!(width > 0 && height > 0);
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        debug_assert!(data.iter().all(|v| v.is_finite()));
        Self { width, height, data }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> T {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: T) {
        self.data[y * self.width + x] = v;
    }

    pub fn row(&self, y: usize) -> &[T] {
        &self.data[y * self.width..(y + 1) * self.width]
    }

    pub fn map(&self, mut f: impl FnMut(T) -> T) -> Self {
        Self {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Pixel-wise combination of two equally sized images.
    pub fn zip_map(&self, other: &Self, f: impl Fn(T, T) -> T) -> Result<Self> {
        self.ensure_same_dims(other)?;
        Ok(Self {
            width: self.width,
            height: self.height,
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
        })
    }

    pub fn ensure_same_dims(&self, other: &Self) -> Result<()> {
        if self.dims() != other.dims() {
            return Err(Error::DimensionMismatch {
                expected: self.dims(),
                got: other.dims(),
            });
        }
        Ok(())
    }

    pub fn min_max(&self) -> (T, T) {
        self.data
            .iter()
            .fold((T::infinity(), T::neg_infinity()), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            })
    }

    pub fn mean(&self) -> T {
        self.data.iter().copied().sum::<T>() / T::of(self.data.len() as f64)
    }

    /// Checks the no-NaN/Inf invariant.
    pub fn validate(&self) -> Result<()> {
        match self.data.iter().position(|v| !v.is_finite()) {
            Some(index) => Err(Error::NonFinite { index }),
            None => Ok(()),
        }
    }

    pub fn cast<U: Scalar>(&self) -> Image<U> {
        Image {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|v| U::of(v.as_f64())).collect(),
        }
    }
}

/// Wraps an angle into `(-pi, pi]`.
#[inline]
pub fn wrap_to_pi<T: Scalar>(phi: T) -> T {
    let pi = T::PI();
    let two_pi = pi + pi;
    let mut w = phi - two_pi * ((phi + pi) / two_pi).floor();
    // w is now in [-pi, pi); move the lower endpoint to the upper one.
    if w <= -pi {
        w += two_pi;
    }
    if w > pi {
        w -= two_pi;
    }
    w
}

/// Phase in radians, with a flag telling whether it is wrapped into `(-pi, pi]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseMap<T> {
    image: Image<T>,
    wrapped: bool,
}

impl<T: Scalar> PhaseMap<T> {
    pub fn unwrapped(image: Image<T>) -> Self {
        Self { image, wrapped: false }
    }

    /// Marks `image` as wrapped; every value must already lie in `(-pi, pi]`.
    pub fn wrapped(image: Image<T>) -> Result<Self> {
        let pi = T::PI();
        if let Some(index) = image.data().iter().position(|&v| !(v > -pi && v <= pi)) {
            return Err(Error::InvalidParameter {
                field: "wrapped",
                reason: format!("value at index {index} lies outside (-pi, pi]"),
            });
        }
        Ok(Self { image, wrapped: true })
    }

    /// Wraps every value of `image` into `(-pi, pi]`.
    pub fn wrap(image: &Image<T>) -> Self {
        Self {
            image: image.map(wrap_to_pi),
            wrapped: true,
        }
    }

    pub fn is_wrapped(&self) -> bool {
        self.wrapped
    }

    pub fn image(&self) -> &Image<T> {
        &self.image
    }

    pub fn into_image(self) -> Image<T> {
        self.image
    }

    pub fn dims(&self) -> (usize, usize) {
        self.image.dims()
    }

    pub fn get(&self, x: usize, y: usize) -> T {
        self.image.get(x, y)
    }

    pub fn data(&self) -> &[T] {
        self.image.data()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn rejects_bad_shapes() {
        assert!(Image::<f64>::new(0, 3, vec![]).is_err());
        assert!(Image::<f64>::new(2, 2, vec![0.0; 3]).is_err());
        assert!(matches!(
            Image::<f64>::new(2, 1, vec![0.0, f64::NAN]),
            Err(Error::NonFinite { index: 1 })
        ));
    }

    #[test]
    fn wrap_interval() {
        assert_eq!(wrap_to_pi(PI), PI);
        assert_eq!(wrap_to_pi(-PI), PI);
        assert_eq!(wrap_to_pi(0.0), 0.0);
        assert!((wrap_to_pi(3.0 * PI) - PI).abs() < 1e-12);
        assert!((wrap_to_pi(2.0 * PI + 0.1) - 0.1).abs() < 1e-12);
        assert!((wrap_to_pi(-2.0 * PI - 0.1) + 0.1).abs() < 1e-12);
        for k in -1000..1000 {
            let w = wrap_to_pi(k as f64 * 0.0731);
            assert!(w > -PI && w <= PI);
        }
        let w = wrap_to_pi(-3.5f32);
        assert!(w > -std::f32::consts::PI && w <= std::f32::consts::PI);
    }

    #[test]
    fn wrapped_constructor_checks_range() {
        let img = Image::new(2, 1, vec![0.0, 4.0]).unwrap();
        assert!(PhaseMap::wrapped(img.clone()).is_err());
        let w = PhaseMap::wrap(&img);
        assert!(w.is_wrapped());
        assert!((w.get(1, 0) - (4.0 - 2.0 * PI)).abs() < 1e-15);
    }
}
