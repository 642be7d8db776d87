use crate::error::{shape_err, Result};
use crate::tensor::Tensor;

pub const INSTANCE_NORM_EPS: f64 = 1e-5;

/// Per-(sample, channel) normalization over the spatial plane, then `gamma * xhat + beta`.
#[derive(Debug, Clone, PartialEq)]
pub struct InstanceNorm {
    pub gamma: Tensor,
    pub beta: Tensor,
    pub eps: f64,
}

/// Values saved by the forward pass for the backward pass.
#[derive(Debug, Clone)]
pub struct InstanceNormCache {
    xhat: Tensor,
    inv_std: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InstanceNormGrads {
    pub input: Tensor,
    pub gamma: Tensor,
    pub beta: Tensor,
}

impl InstanceNorm {
    pub fn new(channels: usize) -> Self {
        Self {
            gamma: Tensor::filled(&[channels], 1.0),
            beta: Tensor::zeros(&[channels]),
            eps: INSTANCE_NORM_EPS,
        }
    }

    fn check(&self, x: &Tensor) -> Result<(usize, usize, usize)> {
        let (n, c, h, w) = x.dims4()?;
        if c != self.gamma.len() {
            return Err(shape_err(
                "instance_norm",
                format!("{c} channels, {} affine parameters", self.gamma.len()),
            ));
        }
        if h * w < 2 {
            return Err(shape_err("instance_norm", "spatial size must be >= 2"));
        }
        Ok((n, c, h * w))
    }

    pub fn forward(&self, x: &Tensor) -> Result<(Tensor, InstanceNormCache)> {
        let (n, c, plane) = self.check(x)?;
        let mut xhat = Tensor::zeros(x.shape());
        let mut y = Tensor::zeros(x.shape());
        let mut inv_std = Vec::with_capacity(n * c);
        for (i, (src, (dst, out))) in x
            .data()
            .chunks(plane)
            .zip(xhat.data_mut().chunks_mut(plane).zip(y.data_mut().chunks_mut(plane)))
            .enumerate()
        {
            let ch = i % c;
            let mean = src.iter().sum::<f64>() / plane as f64;
            let var = src.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / plane as f64;
            let is = 1.0 / (var + self.eps).sqrt();
            let (g, b) = (self.gamma.data()[ch], self.beta.data()[ch]);
            for ((s, d), o) in src.iter().zip(dst.iter_mut()).zip(out.iter_mut()) {
                *d = (s - mean) * is;
                *o = g * *d + b;
            }
            inv_std.push(is);
        }
        Ok((y, InstanceNormCache { xhat, inv_std }))
    }

    pub fn backward(&self, cache: &InstanceNormCache, dy: &Tensor) -> Result<InstanceNormGrads> {
        let (_, c, plane) = self.check(dy)?;
        dy.same_shape(&cache.xhat, "instance_norm backward")?;
        let mut dx = Tensor::zeros(dy.shape());
        let mut dgamma = Tensor::zeros(self.gamma.shape());
        let mut dbeta = Tensor::zeros(self.beta.shape());
        let m = plane as f64;
        for (i, ((g, xh), out)) in dy
            .data()
            .chunks(plane)
            .zip(cache.xhat.data().chunks(plane))
            .zip(dx.data_mut().chunks_mut(plane))
            .enumerate()
        {
            let ch = i % c;
            let gamma = self.gamma.data()[ch];
            let sum_g: f64 = g.iter().sum();
            let sum_gx: f64 = g.iter().zip(xh).map(|(a, b)| a * b).sum();
            dgamma.data_mut()[ch] += sum_gx;
            dbeta.data_mut()[ch] += sum_g;
            let k = gamma * cache.inv_std[i] / m;
            for ((o, gv), xv) in out.iter_mut().zip(g).zip(xh) {
                *o = k * (m * gv - sum_g - xv * sum_gx);
            }
        }
        Ok(InstanceNormGrads {
            input: dx,
            gamma: dgamma,
            beta: dbeta,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use psim_core::SimRng;

    #[test]
    fn normalizes_each_plane() {
        let mut rng = SimRng::new(2, 2);
        let x = Tensor::randn(&[2, 3, 5, 4], 3.0, &mut rng).map(|v| v + 7.0);
        let (_, cache) = InstanceNorm::new(3).forward(&x).unwrap();
        for plane in cache.xhat.data().chunks(20) {
            let mean = plane.iter().sum::<f64>() / 20.0;
            let var = plane.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 20.0;
            assert!(mean.abs() < 1e-10);
            // eps shrinks the variance slightly below 1
            assert!((var - 1.0).abs() < 1e-5);
        }
    }

    #[test]
    fn constant_input_gives_shift() {
        let mut n = InstanceNorm::new(2);
        n.beta.data_mut().copy_from_slice(&[0.3, -1.2]);
        n.gamma.data_mut().copy_from_slice(&[2.0, 5.0]);
        let mut x = Tensor::zeros(&[1, 2, 3, 3]);
        x.data_mut()[..9].fill(4.0);
        x.data_mut()[9..].fill(-2.5);
        let (y, _) = n.forward(&x).unwrap();
        assert!(y.data()[..9].iter().all(|&v| v == 0.3));
        assert!(y.data()[9..].iter().all(|&v| v == -1.2));
    }

    #[test]
    fn rejects_single_pixel() {
        assert!(InstanceNorm::new(1).forward(&Tensor::zeros(&[1, 1, 1, 1])).is_err());
        assert!(InstanceNorm::new(2).forward(&Tensor::zeros(&[1, 1, 2, 2])).is_err());
    }
}
