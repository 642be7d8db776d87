//! 2D convolution and transposed convolution with zero padding.
//!
//! Both lower to GEMM over an im2col buffer. Gradients are exact adjoints of
//! the forward maps.

use psim_core::SimRng;

use crate::error::{shape_err, Result};
use crate::tensor::Tensor;

/// Geometry of a sliding window over one image plane.
#[derive(Debug, Clone, Copy)]
struct Window {
    channels: usize,
    height: usize,
    width: usize,
    kernel: usize,
    stride: usize,
    padding: usize,
    out_h: usize,
    out_w: usize,
}

impl Window {
    fn rows(&self) -> usize {
        self.channels * self.kernel * self.kernel
    }

    fn cols(&self) -> usize {
        self.out_h * self.out_w
    }

    // Calls f(col_row, col_col, input_index) for every in-bounds tap.
    #[inline]
    fn for_each_tap(&self, mut f: impl FnMut(usize, usize, usize)) {
        let k = self.kernel;
        let (s, p) = (self.stride as isize, self.padding as isize);
        for c in 0..self.channels {
            for ky in 0..k {
                for kx in 0..k {
                    let r = (c * k + ky) * k + kx;
                    for oy in 0..self.out_h {
                        let iy = oy as isize * s + ky as isize - p;
                        if iy < 0 || iy >= self.height as isize {
                            continue;
                        }
                        let row_base = (c * self.height + iy as usize) * self.width;
                        for ox in 0..self.out_w {
                            let ix = ox as isize * s + kx as isize - p;
                            if ix < 0 || ix >= self.width as isize {
                                continue;
                            }
                            f(r, oy * self.out_w + ox, row_base + ix as usize);
                        }
                    }
                }
            }
        }
    }

    fn im2col(&self, plane: &[f64]) -> Vec<f64> {
        let n = self.cols();
        let mut cols = vec![0.0; self.rows() * n];
        self.for_each_tap(|r, c, i| cols[r * n + c] = plane[i]);
        cols
    }

    fn col2im(&self, cols: &[f64], plane: &mut [f64]) {
        let n = self.cols();
        self.for_each_tap(|r, c, i| plane[i] += cols[r * n + c]);
    }
}

/// `c = a * b + beta * c` for row-major operands; `ta`/`tb` read the operand transposed.
#[allow(clippy::too_many_arguments)]
fn gemm(m: usize, k: usize, n: usize, a: &[f64], ta: bool, b: &[f64], tb: bool, beta: f64, c: &mut [f64]) {
    let (rsa, csa) = if ta { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if tb { (1, k as isize) } else { (n as isize, 1) };
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    // SAFETY: the slices hold m*k, k*n and m*n elements and the strides
    // describe row-major (or transposed row-major) layouts within them.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

pub fn conv_output_size(input: usize, kernel: usize, stride: usize, padding: usize) -> Option<usize> {
    (input + 2 * padding).checked_sub(kernel).map(|v| v / stride + 1)
}

pub fn conv_transpose_output_size(input: usize, kernel: usize, stride: usize, padding: usize) -> Option<usize> {
    ((input - 1) * stride + kernel).checked_sub(2 * padding)
}

/// Cross-correlation layer. Weight shape `(out, in, k, k)`, bias `(out)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv2d {
    pub weight: Tensor,
    pub bias: Tensor,
    pub stride: usize,
    pub padding: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvGrads {
    pub input: Tensor,
    pub weight: Tensor,
    pub bias: Tensor,
}

impl Conv2d {
    pub fn new(in_ch: usize, out_ch: usize, kernel: usize, stride: usize, padding: usize) -> Self {
        assert!(stride >= 1 && kernel >= 1);
        Self {
            weight: Tensor::zeros(&[out_ch, in_ch, kernel, kernel]),
            bias: Tensor::zeros(&[out_ch]),
            stride,
            padding,
        }
    }

    /// Weights drawn from `N(0, std^2)`, zero bias.
    pub fn init(mut self, std: f64, rng: &mut SimRng) -> Self {
        self.weight = Tensor::randn(self.weight.shape(), std, rng);
        self
    }

    fn kernel(&self) -> (usize, usize, usize) {
        let s = self.weight.shape();
        (s[0], s[1], s[2])
    }

    fn window(&self, x: &Tensor) -> Result<(usize, Window)> {
        let (n, c, h, w) = x.dims4()?;
        let (_, in_ch, k) = self.kernel();
        if c != in_ch {
            return Err(shape_err(
                "conv2d",
                format!("input has {c} channels, kernel expects {in_ch}"),
            ));
        }
        let (out_h, out_w) = match (
            conv_output_size(h, k, self.stride, self.padding),
            conv_output_size(w, k, self.stride, self.padding),
        ) {
            (Some(a), Some(b)) => (a, b),
            _ => {
                return Err(shape_err(
                    "conv2d",
                    format!("{h}x{w} input smaller than {k}x{k} kernel"),
                ))
            }
        };
        Ok((
            n,
            Window {
                channels: c,
                height: h,
                width: w,
                kernel: k,
                stride: self.stride,
                padding: self.padding,
                out_h,
                out_w,
            },
        ))
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let (n, win) = self.window(x)?;
        let (out_ch, _, _) = self.kernel();
        let (plane_in, plane_out) = (win.channels * win.height * win.width, out_ch * win.cols());
        let mut y = Tensor::zeros(&[n, out_ch, win.out_h, win.out_w]);
        for i in 0..n {
            let cols = win.im2col(&x.data()[i * plane_in..(i + 1) * plane_in]);
            let out = &mut y.data_mut()[i * plane_out..(i + 1) * plane_out];
            for (o, chunk) in out.chunks_mut(win.cols()).enumerate() {
                chunk.fill(self.bias.data()[o]);
            }
            gemm(
                out_ch,
                win.rows(),
                win.cols(),
                self.weight.data(),
                false,
                &cols,
                false,
                1.0,
                out,
            );
        }
        Ok(y)
    }

    pub fn backward(&self, x: &Tensor, dy: &Tensor) -> Result<ConvGrads> {
        let (n, win) = self.window(x)?;
        let (out_ch, _, _) = self.kernel();
        if dy.shape() != [n, out_ch, win.out_h, win.out_w] {
            return Err(shape_err("conv2d backward", format!("dy {:?}", dy.shape())));
        }
        let (plane_in, plane_out) = (win.channels * win.height * win.width, out_ch * win.cols());
        let mut dx = Tensor::zeros(x.shape());
        let mut dw = Tensor::zeros(self.weight.shape());
        let mut db = Tensor::zeros(self.bias.shape());
        let mut dcols = vec![0.0; win.rows() * win.cols()];
        for i in 0..n {
            let cols = win.im2col(&x.data()[i * plane_in..(i + 1) * plane_in]);
            let g = &dy.data()[i * plane_out..(i + 1) * plane_out];
            for (o, chunk) in g.chunks(win.cols()).enumerate() {
                db.data_mut()[o] += chunk.iter().sum::<f64>();
            }
            gemm(
                out_ch,
                win.cols(),
                win.rows(),
                g,
                false,
                &cols,
                true,
                1.0,
                dw.data_mut(),
            );
            gemm(
                win.rows(),
                out_ch,
                win.cols(),
                self.weight.data(),
                true,
                g,
                false,
                0.0,
                &mut dcols,
            );
            win.col2im(&dcols, &mut dx.data_mut()[i * plane_in..(i + 1) * plane_in]);
        }
        Ok(ConvGrads {
            input: dx,
            weight: dw,
            bias: db,
        })
    }
}

/// Transposed convolution (adjoint of [`Conv2d`] in its input). Weight shape
/// `(in, out, k, k)`, bias `(out)`; output side `(H - 1) s - 2p + K`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvTranspose2d {
    pub weight: Tensor,
    pub bias: Tensor,
    pub stride: usize,
    pub padding: usize,
}

impl ConvTranspose2d {
    pub fn new(in_ch: usize, out_ch: usize, kernel: usize, stride: usize, padding: usize) -> Self {
        assert!(stride >= 1 && kernel >= 1);
        Self {
            weight: Tensor::zeros(&[in_ch, out_ch, kernel, kernel]),
            bias: Tensor::zeros(&[out_ch]),
            stride,
            padding,
        }
    }

    pub fn init(mut self, std: f64, rng: &mut SimRng) -> Self {
        self.weight = Tensor::randn(self.weight.shape(), std, rng);
        self
    }

    // The window lives on the output plane and maps back onto the input grid.
    fn window(&self, x: &Tensor) -> Result<(usize, usize, Window)> {
        let (n, c, h, w) = x.dims4()?;
        let s = self.weight.shape();
        let (in_ch, out_ch, k) = (s[0], s[1], s[2]);
        if c != in_ch {
            return Err(shape_err(
                "conv_transpose2d",
                format!("input has {c} channels, kernel expects {in_ch}"),
            ));
        }
        let (oh, ow) = match (
            conv_transpose_output_size(h, k, self.stride, self.padding),
            conv_transpose_output_size(w, k, self.stride, self.padding),
        ) {
            (Some(a), Some(b)) if a > 0 && b > 0 => (a, b),
            _ => {
                return Err(shape_err(
                    "conv_transpose2d",
                    format!("padding {} too large for {h}x{w}", self.padding),
                ))
            }
        };
        Ok((
            n,
            in_ch,
            Window {
                channels: out_ch,
                height: oh,
                width: ow,
                kernel: k,
                stride: self.stride,
                padding: self.padding,
                out_h: h,
                out_w: w,
            },
        ))
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let (n, in_ch, win) = self.window(x)?;
        let out_ch = win.channels;
        let plane_in = in_ch * win.cols();
        let plane_out = out_ch * win.height * win.width;
        let mut y = Tensor::zeros(&[n, out_ch, win.height, win.width]);
        let mut cols = vec![0.0; win.rows() * win.cols()];
        for i in 0..n {
            let xi = &x.data()[i * plane_in..(i + 1) * plane_in];
            gemm(
                win.rows(),
                in_ch,
                win.cols(),
                self.weight.data(),
                true,
                xi,
                false,
                0.0,
                &mut cols,
            );
            let out = &mut y.data_mut()[i * plane_out..(i + 1) * plane_out];
            win.col2im(&cols, out);
            for (o, chunk) in out.chunks_mut(win.height * win.width).enumerate() {
                let b = self.bias.data()[o];
                chunk.iter_mut().for_each(|v| *v += b);
            }
        }
        Ok(y)
    }

    pub fn backward(&self, x: &Tensor, dy: &Tensor) -> Result<ConvGrads> {
        let (n, in_ch, win) = self.window(x)?;
        let out_ch = win.channels;
        if dy.shape() != [n, out_ch, win.height, win.width] {
            return Err(shape_err("conv_transpose2d backward", format!("dy {:?}", dy.shape())));
        }
        let plane_in = in_ch * win.cols();
        let plane_out = out_ch * win.height * win.width;
        let mut dx = Tensor::zeros(x.shape());
        let mut dw = Tensor::zeros(self.weight.shape());
        let mut db = Tensor::zeros(self.bias.shape());
        for i in 0..n {
            let g = &dy.data()[i * plane_out..(i + 1) * plane_out];
            for (o, chunk) in g.chunks(win.height * win.width).enumerate() {
                db.data_mut()[o] += chunk.iter().sum::<f64>();
            }
            let dcols = win.im2col(g);
            let xi = &x.data()[i * plane_in..(i + 1) * plane_in];
            gemm(
                in_ch,
                win.rows(),
                win.cols(),
                self.weight.data(),
                false,
                &dcols,
                false,
                0.0,
                &mut dx.data_mut()[i * plane_in..(i + 1) * plane_in],
            );
            gemm(
                in_ch,
                win.cols(),
                win.rows(),
                xi,
                false,
                &dcols,
                true,
                1.0,
                dw.data_mut(),
            );
        }
        Ok(ConvGrads {
            input: dx,
            weight: dw,
            bias: db,
        })
    }
}
