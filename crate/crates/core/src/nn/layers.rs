//! Stateful layers: parameters plus the forward caches their backward
//! passes need. One layer instance processes one batch at a time.

use ndarray::{Array1, Array2, Array4, Ix1, Ix2, Ix4};
use rand_chacha::ChaCha20Rng;

use super::kernels;
use super::param::Param;

const WEIGHT_INIT_STD: f64 = 0.02;
pub const BATCHNORM_EPS: f64 = 1e-5;
const BATCHNORM_MOMENTUM: f64 = 0.1;

pub struct Conv2d {
    pub weight: Param,
    pub bias: Option<Param>,
    pub stride: usize,
    pub pad: usize,
    cache_x: Option<Array4<f64>>,
}

impl Conv2d {
    pub fn new(
        name: &str,
        c_in: usize,
        c_out: usize,
        kernel: usize,
        stride: usize,
        pad: usize,
        bias: bool,
        rng: &mut ChaCha20Rng,
    ) -> Self {
        Conv2d {
            weight: Param::randn(
                format!("{name}.w"),
                &[c_out, c_in, kernel, kernel],
                WEIGHT_INIT_STD,
                rng,
            ),
            bias: bias.then(|| Param::zeros(format!("{name}.b"), &[c_out])),
            stride,
            pad,
            cache_x: None,
        }
    }

    pub fn forward(&mut self, x: &Array4<f64>, train: bool) -> Array4<f64> {
        let w = self.weight.value.view().into_dimensionality::<Ix4>().unwrap();
        let b = self
            .bias
            .as_ref()
            .map(|b| b.value.view().into_dimensionality::<Ix1>().unwrap().to_owned());
        let y = kernels::conv2d_forward(x, &w.to_owned(), b.as_ref(), self.stride, self.pad);
        if train {
            self.cache_x = Some(x.clone());
        }
        y
    }

    /// Accumulates parameter grads (unless `params_frozen`) and returns the
    /// input gradient.
    pub fn backward(&mut self, dy: &Array4<f64>, params_frozen: bool) -> Array4<f64> {
        let x = self.cache_x.as_ref().expect("forward(train) before backward");
        let w = self
            .weight
            .value
            .view()
            .into_dimensionality::<Ix4>()
            .unwrap()
            .to_owned();
        let (_, _, kh, kw) = w.dim();
        if !params_frozen {
            let (dw, db) = kernels::conv2d_backward_weights(x, dy, self.stride, self.pad, kh, kw);
            self.weight.grad += &dw.into_dyn();
            if let Some(bias) = self.bias.as_mut() {
                bias.grad += &db.into_dyn();
            }
        }
        let (_, _, h, wd) = x.dim();
        kernels::conv2d_backward_input(dy, &w, self.stride, self.pad, h, wd)
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut v = vec![&mut self.weight];
        if let Some(b) = self.bias.as_mut() {
            v.push(b);
        }
        v
    }

    pub fn params(&self) -> Vec<&Param> {
        let mut v = vec![&self.weight];
        if let Some(b) = self.bias.as_ref() {
            v.push(b);
        }
        v
    }
}

/// Transposed convolution, implemented as the adjoint of [`Conv2d`]:
/// forward is the conv input-gradient, backward reuses the conv forward.
/// Weight layout matches conv, (C_in_of_the_equivalent_conv = C_out here).
pub struct ConvTranspose2d {
    pub weight: Param, // (c_out, c_in, k, k) in *conv* orientation
    pub bias: Option<Param>,
    pub stride: usize,
    pub pad: usize,
    c_in: usize,
    c_out: usize,
    cache_x: Option<Array4<f64>>,
}

impl ConvTranspose2d {
    pub fn new(
        name: &str,
        c_in: usize,
        c_out: usize,
        kernel: usize,
        stride: usize,
        pad: usize,
        bias: bool,
        rng: &mut ChaCha20Rng,
    ) -> Self {
        ConvTranspose2d {
            // stored as the kernel of the adjoint convolution: (c_in, c_out, k, k)
            weight: Param::randn(
                format!("{name}.w"),
                &[c_in, c_out, kernel, kernel],
                WEIGHT_INIT_STD,
                rng,
            ),
            bias: bias.then(|| Param::zeros(format!("{name}.b"), &[c_out])),
            stride,
            pad,
            c_in,
            c_out,
            cache_x: None,
        }
    }

    pub fn output_size(&self, input: usize) -> usize {
        let k = self.weight.value.shape()[2];
        (input - 1) * self.stride + k - 2 * self.pad
    }

    pub fn forward(&mut self, x: &Array4<f64>, train: bool) -> Array4<f64> {
        let (_, c_in, h, wd) = x.dim();
        assert_eq!(c_in, self.c_in, "channel mismatch");
        let w = self
            .weight
            .value
            .view()
            .into_dimensionality::<Ix4>()
            .unwrap()
            .to_owned();
        let oh = (h - 1) * self.stride + w.dim().2 - 2 * self.pad;
        let ow = (wd - 1) * self.stride + w.dim().3 - 2 * self.pad;
        let mut y = kernels::conv2d_backward_input(x, &w, self.stride, self.pad, oh, ow);
        if let Some(bias) = self.bias.as_ref() {
            let b = bias.value.view().into_dimensionality::<Ix1>().unwrap();
            for ni in 0..y.dim().0 {
                for oc in 0..self.c_out {
                    y.slice_mut(ndarray::s![ni, oc, .., ..]).mapv_inplace(|v| v + b[oc]);
                }
            }
        }
        if train {
            self.cache_x = Some(x.clone());
        }
        y
    }

    pub fn backward(&mut self, dy: &Array4<f64>, params_frozen: bool) -> Array4<f64> {
        let x = self.cache_x.as_ref().expect("forward(train) before backward");
        let w = self
            .weight
            .value
            .view()
            .into_dimensionality::<Ix4>()
            .unwrap()
            .to_owned();
        let (_, _, kh, kw) = w.dim();
        if !params_frozen {
            // adjoint roles: dy is the "image", x is the "output gradient"
            let (dw, _) = kernels::conv2d_backward_weights(dy, x, self.stride, self.pad, kh, kw);
            self.weight.grad += &dw.into_dyn();
            if let Some(bias) = self.bias.as_mut() {
                for oc in 0..self.c_out {
                    let s: f64 = dy.slice(ndarray::s![.., oc, .., ..]).sum();
                    bias.grad[oc] += s;
                }
            }
        }
        kernels::conv2d_forward(dy, &w, None, self.stride, self.pad)
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut v = vec![&mut self.weight];
        if let Some(b) = self.bias.as_mut() {
            v.push(b);
        }
        v
    }

    pub fn params(&self) -> Vec<&Param> {
        let mut v = vec![&self.weight];
        if let Some(b) = self.bias.as_ref() {
            v.push(b);
        }
        v
    }
}

struct BatchNormCache {
    x_hat: Array4<f64>,
    inv_std: Array1<f64>,
    centered: Array4<f64>,
}

/// Per-channel batch normalization over (N, H, W), torch semantics: biased
/// variance for normalization, unbiased for the running estimate.
pub struct BatchNorm2d {
    pub gamma: Param,
    pub beta: Param,
    pub running_mean: Param,
    pub running_var: Param,
    cache: Option<BatchNormCache>,
}

impl BatchNorm2d {
    pub fn new(name: &str, channels: usize) -> Self {
        BatchNorm2d {
            gamma: Param::full(format!("{name}.gamma"), &[channels], 1.0),
            beta: Param::zeros(format!("{name}.beta"), &[channels]),
            running_mean: Param::buffer(format!("{name}.running_mean"), ndarray::ArrayD::zeros(ndarray::IxDyn(&[channels]))),
            running_var: Param::buffer(
                format!("{name}.running_var"),
                ndarray::ArrayD::from_elem(ndarray::IxDyn(&[channels]), 1.0),
            ),
            cache: None,
        }
    }

    pub fn forward(&mut self, x: &Array4<f64>, train: bool) -> Array4<f64> {
        let (n, c, h, w) = x.dim();
        let m = (n * h * w) as f64;
        let gamma = self.gamma.value.view().into_dimensionality::<Ix1>().unwrap().to_owned();
        let beta = self.beta.value.view().into_dimensionality::<Ix1>().unwrap().to_owned();

        if train {
            let mut mean = Array1::<f64>::zeros(c);
            let mut var = Array1::<f64>::zeros(c);
            for ci in 0..c {
                let slice = x.slice(ndarray::s![.., ci, .., ..]);
                let mu = slice.sum() / m;
                mean[ci] = mu;
                var[ci] = slice.iter().map(|&v| (v - mu) * (v - mu)).sum::<f64>() / m;
            }
            let inv_std = var.mapv(|v| 1.0 / (v + BATCHNORM_EPS).sqrt());
            let mut centered = x.clone();
            let mut x_hat = Array4::zeros((n, c, h, w));
            for ci in 0..c {
                let mu = mean[ci];
                let is = inv_std[ci];
                centered
                    .slice_mut(ndarray::s![.., ci, .., ..])
                    .mapv_inplace(|v| v - mu);
                let src = centered.slice(ndarray::s![.., ci, .., ..]).to_owned();
                x_hat
                    .slice_mut(ndarray::s![.., ci, .., ..])
                    .assign(&src.mapv(|v| v * is));
            }
            let mut y = Array4::zeros((n, c, h, w));
            for ci in 0..c {
                let g = gamma[ci];
                let b = beta[ci];
                let src = x_hat.slice(ndarray::s![.., ci, .., ..]).to_owned();
                y.slice_mut(ndarray::s![.., ci, .., ..])
                    .assign(&src.mapv(|v| g * v + b));
            }
            // running estimates (unbiased variance when possible)
            let unbias = if m > 1.0 { m / (m - 1.0) } else { 1.0 };
            for ci in 0..c {
                self.running_mean.value[ci] = (1.0 - BATCHNORM_MOMENTUM)
                    * self.running_mean.value[ci]
                    + BATCHNORM_MOMENTUM * mean[ci];
                self.running_var.value[ci] = (1.0 - BATCHNORM_MOMENTUM)
                    * self.running_var.value[ci]
                    + BATCHNORM_MOMENTUM * var[ci] * unbias;
            }
            self.cache = Some(BatchNormCache {
                x_hat,
                inv_std,
                centered,
            });
            y
        } else {
            let mut y = x.clone();
            for ci in 0..c {
                let mu = self.running_mean.value[ci];
                let is = 1.0 / (self.running_var.value[ci] + BATCHNORM_EPS).sqrt();
                let g = gamma[ci];
                let b = beta[ci];
                y.slice_mut(ndarray::s![.., ci, .., ..])
                    .mapv_inplace(|v| g * (v - mu) * is + b);
            }
            y
        }
    }

    pub fn backward(&mut self, dy: &Array4<f64>) -> Array4<f64> {
        let cache = self.cache.as_ref().expect("forward(train) before backward");
        let (n, c, h, w) = dy.dim();
        let m = (n * h * w) as f64;
        let mut dx = Array4::zeros((n, c, h, w));
        for ci in 0..c {
            let dy_c = dy.slice(ndarray::s![.., ci, .., ..]);
            let xh_c = cache.x_hat.slice(ndarray::s![.., ci, .., ..]);
            let dgamma: f64 = dy_c.iter().zip(xh_c.iter()).map(|(a, b)| a * b).sum();
            let dbeta: f64 = dy_c.sum();
            self.gamma.grad[ci] += dgamma;
            self.beta.grad[ci] += dbeta;

            let g = self.gamma.value[ci];
            let is = cache.inv_std[ci];
            // dx = (g*is/m) * (m*dy - sum(dy) - x_hat * sum(dy*x_hat))
            let sum_dy = dbeta;
            let sum_dy_xhat = dgamma;
            let mut dst = dx.slice_mut(ndarray::s![.., ci, .., ..]);
            ndarray::Zip::from(&mut dst)
                .and(&dy_c)
                .and(&xh_c)
                .for_each(|d, &gdy, &xh| {
                    *d = g * is / m * (m * gdy - sum_dy - xh * sum_dy_xhat);
                });
        }
        let _ = &cache.centered;
        dx
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        vec![
            &mut self.gamma,
            &mut self.beta,
            &mut self.running_mean,
            &mut self.running_var,
        ]
    }

    pub fn params(&self) -> Vec<&Param> {
        vec![
            &self.gamma,
            &self.beta,
            &self.running_mean,
            &self.running_var,
        ]
    }
}

pub struct Linear {
    pub weight: Param, // (out, in)
    pub bias: Param,
    cache_x: Option<Array2<f64>>,
}

impl Linear {
    pub fn new(name: &str, c_in: usize, c_out: usize, rng: &mut ChaCha20Rng) -> Self {
        Linear {
            weight: Param::randn(format!("{name}.w"), &[c_out, c_in], WEIGHT_INIT_STD, rng),
            bias: Param::zeros(format!("{name}.b"), &[c_out]),
            cache_x: None,
        }
    }

    pub fn forward(&mut self, x: &Array2<f64>, train: bool) -> Array2<f64> {
        let w = self.weight.value.view().into_dimensionality::<Ix2>().unwrap();
        let b = self.bias.value.view().into_dimensionality::<Ix1>().unwrap();
        let mut y = x.dot(&w.t());
        for mut row in y.rows_mut() {
            row += &b;
        }
        if train {
            self.cache_x = Some(x.clone());
        }
        y
    }

    pub fn backward(&mut self, dy: &Array2<f64>) -> Array2<f64> {
        let x = self.cache_x.as_ref().expect("forward(train) before backward");
        let w = self.weight.value.view().into_dimensionality::<Ix2>().unwrap().to_owned();
        let dw = dy.t().dot(x);
        let db = dy.sum_axis(ndarray::Axis(0));
        self.weight.grad += &dw.into_dyn();
        self.bias.grad += &db.into_dyn();
        dy.dot(&w)
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        vec![&mut self.weight, &mut self.bias]
    }

    pub fn params(&self) -> Vec<&Param> {
        vec![&self.weight, &self.bias]
    }
}

/// ReLU with cached activation mask.
pub struct Relu {
    mask: Option<Array4<f64>>,
}

impl Relu {
    pub fn new() -> Self {
        Relu { mask: None }
    }

    pub fn forward(&mut self, x: &Array4<f64>, train: bool) -> Array4<f64> {
        let y = x.mapv(|v| v.max(0.0));
        if train {
            self.mask = Some(x.mapv(|v| if v > 0.0 { 1.0 } else { 0.0 }));
        }
        y
    }

    pub fn backward(&self, dy: &Array4<f64>) -> Array4<f64> {
        dy * self.mask.as_ref().expect("forward(train) before backward")
    }
}

impl Default for Relu {
    fn default() -> Self {
        Self::new()
    }
}

/// Sigmoid with cached output.
pub struct Sigmoid {
    y: Option<Array4<f64>>,
}

impl Sigmoid {
    pub fn new() -> Self {
        Sigmoid { y: None }
    }

    pub fn forward(&mut self, x: &Array4<f64>, train: bool) -> Array4<f64> {
        let y = x.mapv(|v| 1.0 / (1.0 + (-v).exp()));
        if train {
            self.y = Some(y.clone());
        }
        y
    }

    pub fn backward(&self, dy: &Array4<f64>) -> Array4<f64> {
        let y = self.y.as_ref().expect("forward(train) before backward");
        dy * &y.mapv(|v| v * (1.0 - v))
    }
}

impl Default for Sigmoid {
    fn default() -> Self {
        Self::new()
    }
}
