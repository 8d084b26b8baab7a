//! Layer set: convolution, ReLU, max pooling, flatten, fully connected, and a
//! softplus positivity output.
//!
//! Each layer caches what its backward pass needs during `forward`. `backward`
//! returns the gradient with respect to the layer input and adds parameter
//! gradients into each [`Param::grad`]; parameter values are only changed by
//! an optimizer.

use crate::error::{Error, Result};

use super::Tensor;

/// A trainable tensor with its accumulated gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub name: String,
    pub value: Tensor,
    pub grad: Tensor,
    /// Trains with the raised learning rate of newly added layers.
    pub new_layer: bool,
}

impl Param {
    pub fn zeros(name: impl Into<String>, shape: &[usize], new_layer: bool) -> Self {
        Self {
            name: name.into(),
            value: Tensor::zeros(shape),
            grad: Tensor::zeros(shape),
            new_layer,
        }
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(0.0);
    }
}

fn missing_cache(layer: &str) -> Error {
    Error::shape(format!("{layer} backward called before forward"), &[], &[])
}

/// 2-D convolution with square kernels, symmetric zero padding, and a bias per
/// output channel. Weights are `[out, in, k, k]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv2d {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
    pub weight: Param,
    pub bias: Param,
    input: Option<Tensor>,
}

/// Output indices `o` in `[lo, hi)` for which `o * stride + k - pad` lands in
/// `[0, len)`.
fn valid_range(k: usize, pad: usize, stride: usize, len: usize, out_len: usize) -> (usize, usize) {
    let lo = if k >= pad {
        0
    } else {
        (pad - k).div_ceil(stride)
    };
    let hi = if len + pad > k {
        ((len - 1 + pad - k) / stride + 1).min(out_len)
    } else {
        0
    };
    (lo, hi.max(lo))
}

impl Conv2d {
    pub fn new(
        name: &str,
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        pad: usize,
        new_layer: bool,
    ) -> Self {
        Self {
            in_channels,
            out_channels,
            kernel,
            stride: stride.max(1),
            pad,
            weight: Param::zeros(
                format!("{name}.weight"),
                &[out_channels, in_channels, kernel, kernel],
                new_layer,
            ),
            bias: Param::zeros(format!("{name}.bias"), &[out_channels], new_layer),
            input: None,
        }
    }

    pub fn output_hw(&self, h: usize, w: usize) -> Result<(usize, usize)> {
        if h + 2 * self.pad < self.kernel || w + 2 * self.pad < self.kernel {
            return Err(Error::shape(
                "conv input smaller than kernel",
                &[h, w],
                &[self.kernel, self.kernel],
            ));
        }
        Ok((
            (h + 2 * self.pad - self.kernel) / self.stride + 1,
            (w + 2 * self.pad - self.kernel) / self.stride + 1,
        ))
    }

    fn check_input(&self, input: &Tensor) -> Result<(usize, usize, usize, usize)> {
        let (b, c, h, w) = input.dims4("conv input")?;
        if c != self.in_channels {
            return Err(Error::shape(
                "conv input channels",
                input.shape(),
                &[b, self.in_channels, h, w],
            ));
        }
        Ok((b, c, h, w))
    }

    pub fn forward(&mut self, input: &Tensor) -> Result<Tensor> {
        let (batch, cin, h, w) = self.check_input(input)?;
        let (oh, ow) = self.output_hw(h, w)?;
        let (k, s, p, cout) = (self.kernel, self.stride, self.pad, self.out_channels);
        let weight = self.weight.value.data();
        let bias = self.bias.value.data();
        let x = input.data();
        let mut out = vec![0.0; batch * cout * oh * ow];

        for b in 0..batch {
            for o in 0..cout {
                let out_plane = &mut out[(b * cout + o) * oh * ow..(b * cout + o + 1) * oh * ow];
                out_plane.iter_mut().for_each(|v| *v = bias[o]);
                for c in 0..cin {
                    let in_plane = &x[(b * cin + c) * h * w..(b * cin + c + 1) * h * w];
                    for ky in 0..k {
                        let (y_lo, y_hi) = valid_range(ky, p, s, h, oh);
                        for kx in 0..k {
                            let wv = weight[((o * cin + c) * k + ky) * k + kx];
                            let (x_lo, x_hi) = valid_range(kx, p, s, w, ow);
                            for oy in y_lo..y_hi {
                                let iy = oy * s + ky - p;
                                let in_row = &in_plane[iy * w..(iy + 1) * w];
                                let out_row = &mut out_plane[oy * ow..(oy + 1) * ow];
                                if s == 1 {
                                    let shift = kx as isize - p as isize;
                                    let src = &in_row[(x_lo as isize + shift) as usize
                                        ..(x_hi as isize + shift) as usize];
                                    for (dst, &v) in out_row[x_lo..x_hi].iter_mut().zip(src) {
                                        *dst += wv * v;
                                    }
                                } else {
                                    for ox in x_lo..x_hi {
                                        out_row[ox] += wv * in_row[ox * s + kx - p];
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
        self.input = Some(input.clone());
        Tensor::new(vec![batch, cout, oh, ow], out)
    }

    pub fn backward(&mut self, grad_out: &Tensor) -> Result<Tensor> {
        let input = self.input.as_ref().ok_or_else(|| missing_cache("conv"))?;
        let (batch, cin, h, w) = input.dims4("conv cached input")?;
        let (oh, ow) = self.output_hw(h, w)?;
        let (k, s, p, cout) = (self.kernel, self.stride, self.pad, self.out_channels);
        if grad_out.shape() != [batch, cout, oh, ow] {
            return Err(Error::shape(
                "conv grad_out",
                grad_out.shape(),
                &[batch, cout, oh, ow],
            ));
        }
        let x = input.data();
        let g = grad_out.data();
        let weight = self.weight.value.data();
        let gw = self.weight.grad.data_mut();
        let mut gx = vec![0.0; x.len()];
        let mut gb = vec![0.0; cout];

        for b in 0..batch {
            for o in 0..cout {
                let g_plane = &g[(b * cout + o) * oh * ow..(b * cout + o + 1) * oh * ow];
                gb[o] += g_plane.iter().sum::<f64>();
                for c in 0..cin {
                    let base = (b * cin + c) * h * w;
                    let in_plane = &x[base..base + h * w];
                    let gx_plane = &mut gx[base..base + h * w];
                    for ky in 0..k {
                        let (y_lo, y_hi) = valid_range(ky, p, s, h, oh);
                        for kx in 0..k {
                            let widx = ((o * cin + c) * k + ky) * k + kx;
                            let wv = weight[widx];
                            let (x_lo, x_hi) = valid_range(kx, p, s, w, ow);
                            let mut acc = 0.0;
                            for oy in y_lo..y_hi {
                                let iy = oy * s + ky - p;
                                let g_row = &g_plane[oy * ow..(oy + 1) * ow];
                                for ox in x_lo..x_hi {
                                    let ix = iy * w + ox * s + kx - p;
                                    acc += g_row[ox] * in_plane[ix];
                                    gx_plane[ix] += wv * g_row[ox];
                                }
                            }
                            gw[widx] += acc;
                        }
                    }
                }
            }
        }
        for (dst, v) in self.bias.grad.data_mut().iter_mut().zip(gb) {
            *dst += v;
        }
        Tensor::new(input.shape().to_vec(), gx)
    }
}

/// Rectified linear unit; the gradient at exactly zero is zero.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Relu {
    input: Option<Tensor>,
}

impl Relu {
    pub fn forward(&mut self, input: &Tensor) -> Result<Tensor> {
        // NaN passes through so divergence surfaces in the loss.
        let data = input
            .data()
            .iter()
            .map(|&v| if v < 0.0 { 0.0 } else { v })
            .collect();
        self.input = Some(input.clone());
        Tensor::new(input.shape().to_vec(), data)
    }

    pub fn backward(&mut self, grad_out: &Tensor) -> Result<Tensor> {
        let input = self.input.as_ref().ok_or_else(|| missing_cache("relu"))?;
        input.check_same_shape(grad_out, "relu grad_out")?;
        let data = input
            .data()
            .iter()
            .zip(grad_out.data())
            .map(|(&x, &g)| if x > 0.0 { g } else { 0.0 })
            .collect();
        Tensor::new(input.shape().to_vec(), data)
    }
}

/// Max pooling without padding; ties route the gradient to the first maximum
/// in scan order.
#[derive(Debug, Clone, PartialEq)]
pub struct MaxPool2d {
    pub kernel: usize,
    pub stride: usize,
    argmax: Vec<usize>,
    input_shape: Vec<usize>,
}

impl MaxPool2d {
    pub fn new(kernel: usize, stride: usize) -> Self {
        Self {
            kernel,
            stride: stride.max(1),
            argmax: Vec::new(),
            input_shape: Vec::new(),
        }
    }

    pub fn output_hw(&self, h: usize, w: usize) -> Result<(usize, usize)> {
        if h < self.kernel || w < self.kernel {
            return Err(Error::shape(
                "pool input smaller than kernel",
                &[h, w],
                &[self.kernel, self.kernel],
            ));
        }
        Ok((
            (h - self.kernel) / self.stride + 1,
            (w - self.kernel) / self.stride + 1,
        ))
    }

    pub fn forward(&mut self, input: &Tensor) -> Result<Tensor> {
        let (batch, ch, h, w) = input.dims4("pool input")?;
        let (oh, ow) = self.output_hw(h, w)?;
        let x = input.data();
        let mut out = Vec::with_capacity(batch * ch * oh * ow);
        let mut argmax = Vec::with_capacity(batch * ch * oh * ow);
        for plane in 0..batch * ch {
            let base = plane * h * w;
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut best = base + oy * self.stride * w + ox * self.stride;
                    for ky in 0..self.kernel {
                        for kx in 0..self.kernel {
                            let idx = base + (oy * self.stride + ky) * w + ox * self.stride + kx;
                            if x[idx] > x[best] || x[idx].is_nan() {
                                best = idx;
                            }
                        }
                    }
                    out.push(x[best]);
                    argmax.push(best);
                }
            }
        }
        self.argmax = argmax;
        self.input_shape = input.shape().to_vec();
        Tensor::new(vec![batch, ch, oh, ow], out)
    }

    pub fn backward(&mut self, grad_out: &Tensor) -> Result<Tensor> {
        if self.input_shape.is_empty() {
            return Err(missing_cache("pool"));
        }
        if grad_out.len() != self.argmax.len() {
            return Err(Error::shape(
                "pool grad_out",
                grad_out.shape(),
                &[self.argmax.len()],
            ));
        }
        let mut gx = Tensor::zeros(&self.input_shape);
        let dst = gx.data_mut();
        for (&idx, &g) in self.argmax.iter().zip(grad_out.data()) {
            dst[idx] += g;
        }
        Ok(gx)
    }
}

/// `[B, C, H, W] -> [B, C*H*W]`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Flatten {
    input_shape: Vec<usize>,
}

impl Flatten {
    pub fn forward(&mut self, input: &Tensor) -> Result<Tensor> {
        let batch = input.shape()[0];
        let features = input.len() / batch.max(1);
        self.input_shape = input.shape().to_vec();
        input.clone().reshape(&[batch, features])
    }

    pub fn backward(&mut self, grad_out: &Tensor) -> Result<Tensor> {
        if self.input_shape.is_empty() {
            return Err(missing_cache("flatten"));
        }
        grad_out.clone().reshape(&self.input_shape)
    }
}

/// Fully connected layer, weights `[out, in]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub in_features: usize,
    pub out_features: usize,
    pub weight: Param,
    pub bias: Param,
    input: Option<Tensor>,
}

impl Linear {
    pub fn new(name: &str, in_features: usize, out_features: usize, new_layer: bool) -> Self {
        Self {
            in_features,
            out_features,
            weight: Param::zeros(
                format!("{name}.weight"),
                &[out_features, in_features],
                new_layer,
            ),
            bias: Param::zeros(format!("{name}.bias"), &[out_features], new_layer),
            input: None,
        }
    }

    pub fn forward(&mut self, input: &Tensor) -> Result<Tensor> {
        let (batch, fin) = input.dims2("linear input")?;
        if fin != self.in_features {
            return Err(Error::shape(
                "linear input features",
                input.shape(),
                &[batch, self.in_features],
            ));
        }
        let w = self.weight.value.data();
        let bias = self.bias.value.data();
        let x = input.data();
        let mut out = Vec::with_capacity(batch * self.out_features);
        for b in 0..batch {
            let row = &x[b * fin..(b + 1) * fin];
            for o in 0..self.out_features {
                let wrow = &w[o * fin..(o + 1) * fin];
                let dot: f64 = wrow.iter().zip(row).map(|(a, b)| a * b).sum();
                out.push(bias[o] + dot);
            }
        }
        self.input = Some(input.clone());
        Tensor::new(vec![batch, self.out_features], out)
    }

    pub fn backward(&mut self, grad_out: &Tensor) -> Result<Tensor> {
        let input = self.input.as_ref().ok_or_else(|| missing_cache("linear"))?;
        let (batch, fin) = input.dims2("linear cached input")?;
        let fout = self.out_features;
        if grad_out.shape() != [batch, fout] {
            return Err(Error::shape(
                "linear grad_out",
                grad_out.shape(),
                &[batch, fout],
            ));
        }
        let x = input.data();
        let g = grad_out.data();
        let w = self.weight.value.data();
        let gw = self.weight.grad.data_mut();
        let gb = self.bias.grad.data_mut();
        let mut gx = vec![0.0; batch * fin];
        for b in 0..batch {
            let row = &x[b * fin..(b + 1) * fin];
            let gx_row = &mut gx[b * fin..(b + 1) * fin];
            for o in 0..fout {
                let go = g[b * fout + o];
                gb[o] += go;
                let wrow = &w[o * fin..(o + 1) * fin];
                let gwrow = &mut gw[o * fin..(o + 1) * fin];
                for i in 0..fin {
                    gwrow[i] += go * row[i];
                    gx_row[i] += go * wrow[i];
                }
            }
        }
        Tensor::new(vec![batch, fin], gx)
    }
}

/// `ln(1 + e^x) + floor`: maps any real to a strictly positive value.
#[derive(Debug, Clone, PartialEq)]
pub struct Softplus {
    pub floor: f64,
    input: Option<Tensor>,
}

impl Softplus {
    pub fn new(floor: f64) -> Self {
        Self { floor, input: None }
    }

    pub fn apply(x: f64) -> f64 {
        x.max(0.0) + (-x.abs()).exp().ln_1p()
    }

    fn sigmoid(x: f64) -> f64 {
        if x >= 0.0 {
            1.0 / (1.0 + (-x).exp())
        } else {
            let e = x.exp();
            e / (1.0 + e)
        }
    }

    pub fn forward(&mut self, input: &Tensor) -> Result<Tensor> {
        let data = input
            .data()
            .iter()
            .map(|&v| Self::apply(v) + self.floor)
            .collect();
        self.input = Some(input.clone());
        Tensor::new(input.shape().to_vec(), data)
    }

    pub fn backward(&mut self, grad_out: &Tensor) -> Result<Tensor> {
        let input = self
            .input
            .as_ref()
            .ok_or_else(|| missing_cache("softplus"))?;
        input.check_same_shape(grad_out, "softplus grad_out")?;
        let data = input
            .data()
            .iter()
            .zip(grad_out.data())
            .map(|(&x, &g)| g * Self::sigmoid(x))
            .collect();
        Tensor::new(input.shape().to_vec(), data)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Layer {
    Conv2d(Conv2d),
    Relu(Relu),
    MaxPool2d(MaxPool2d),
    Flatten(Flatten),
    Linear(Linear),
    Softplus(Softplus),
}

impl Layer {
    pub fn kind(&self) -> &'static str {
        match self {
            Layer::Conv2d(_) => "conv2d",
            Layer::Relu(_) => "relu",
            Layer::MaxPool2d(_) => "maxpool2d",
            Layer::Flatten(_) => "flatten",
            Layer::Linear(_) => "linear",
            Layer::Softplus(_) => "softplus",
        }
    }

    pub fn forward(&mut self, input: &Tensor) -> Result<Tensor> {
        match self {
            Layer::Conv2d(l) => l.forward(input),
            Layer::Relu(l) => l.forward(input),
            Layer::MaxPool2d(l) => l.forward(input),
            Layer::Flatten(l) => l.forward(input),
            Layer::Linear(l) => l.forward(input),
            Layer::Softplus(l) => l.forward(input),
        }
    }

    pub fn backward(&mut self, grad_out: &Tensor) -> Result<Tensor> {
        match self {
            Layer::Conv2d(l) => l.backward(grad_out),
            Layer::Relu(l) => l.backward(grad_out),
            Layer::MaxPool2d(l) => l.backward(grad_out),
            Layer::Flatten(l) => l.backward(grad_out),
            Layer::Linear(l) => l.backward(grad_out),
            Layer::Softplus(l) => l.backward(grad_out),
        }
    }

    pub fn params(&self) -> Vec<&Param> {
        match self {
            Layer::Conv2d(l) => vec![&l.weight, &l.bias],
            Layer::Linear(l) => vec![&l.weight, &l.bias],
            _ => Vec::new(),
        }
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        match self {
            Layer::Conv2d(l) => vec![&mut l.weight, &mut l.bias],
            Layer::Linear(l) => vec![&mut l.weight, &mut l.bias],
            _ => Vec::new(),
        }
    }
}
