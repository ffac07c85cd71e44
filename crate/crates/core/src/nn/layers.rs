use rand::Rng;

use super::{Buffer, Layer, Mode, NnError, Param, Tensor};
use crate::rng::StreamRng;

fn missing(op: &'static str) -> NnError {
    NnError::NoForwardCache(op)
}

/// 2-D cross-correlation over `[N, C, H, W]` inputs.
pub struct Conv2d {
    pub weight: Param,
    pub bias: Param,
    stride: usize,
    padding: usize,
    input: Option<Tensor>,
}

impl Conv2d {
    pub fn new(name: &str, weight: Tensor, bias: Tensor, stride: usize, padding: usize) -> Result<Self, NnError> {
        weight.expect_rank("conv2d", 4)?;
        bias.expect_shape("conv2d", &[weight.dim(0)])?;
        assert!(stride >= 1, "stride must be positive");
        Ok(Self {
            weight: Param::new(format!("{name}.weight"), weight),
            bias: Param::new(format!("{name}.bias"), bias),
            stride,
            padding,
            input: None,
        })
    }

    /// He-normal weights, zero bias.
    pub fn init<R: Rng + ?Sized>(
        name: &str,
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
        rng: &mut R,
    ) -> Self {
        let fan_in = (in_channels * kernel * kernel) as f64;
        let weight = Tensor::randn(&[out_channels, in_channels, kernel, kernel], (2.0 / fan_in).sqrt(), rng);
        Self::new(name, weight, Tensor::zeros(&[out_channels]), stride, padding).expect("consistent shapes")
    }

    fn output_size(&self, input: usize, kernel: usize) -> Result<usize, NnError> {
        let padded = input + 2 * self.padding;
        if padded < kernel {
            return Err(NnError::ShapeMismatch {
                op: "conv2d",
                expected: format!("padded extent ≥ kernel {kernel}"),
                found: format!("{padded}"),
            });
        }
        Ok((padded - kernel) / self.stride + 1)
    }

}

/// Valid output range along one axis for kernel offset `k`:
/// output positions `o` with `0 ≤ o·stride + k − pad < input`.
fn valid_range(stride: usize, padding: usize, k: usize, input: usize, output: usize) -> (usize, usize) {
    let (s, p) = (stride as isize, padding as isize);
    let k = k as isize;
    let lo = ((p - k).max(0) + s - 1) / s;
    let hi = ((input as isize + p - k + s - 1) / s).clamp(0, output as isize);
    (lo as usize, (hi as usize).max(lo as usize))
}

impl Layer for Conv2d {
    fn forward(&mut self, input: &Tensor, _mode: Mode) -> Result<Tensor, NnError> {
        input.expect_rank("conv2d", 4)?;
        let [kout, cin, kh, kw] = [self.weight.value.dim(0), self.weight.value.dim(1), self.weight.value.dim(2), self.weight.value.dim(3)];
        let [n, c, h, w] = [input.dim(0), input.dim(1), input.dim(2), input.dim(3)];
        if c != cin {
            return Err(NnError::ShapeMismatch { op: "conv2d", expected: format!("{cin} input channels"), found: format!("{c}") });
        }
        let (oh, ow) = (self.output_size(h, kh)?, self.output_size(w, kw)?);
        let (s, p) = (self.stride, self.padding);
        let x = input.data();
        let wt = self.weight.value.data();
        let b = self.bias.value.data();
        let mut out = Tensor::zeros(&[n, kout, oh, ow]);
        let y = out.data_mut();
        for ni in 0..n {
            for k in 0..kout {
                let plane = &mut y[(ni * kout + k) * oh * ow..(ni * kout + k + 1) * oh * ow];
                plane.fill(b[k]);
                for ci in 0..c {
                    let xin = &x[(ni * c + ci) * h * w..(ni * c + ci + 1) * h * w];
                    for ky in 0..kh {
                        let (oy_lo, oy_hi) = valid_range(s, p, ky, h, oh);
                        for kx in 0..kw {
                            let (ox_lo, ox_hi) = valid_range(s, p, kx, w, ow);
                            let wv = wt[((k * c + ci) * kh + ky) * kw + kx];
                            for oy in oy_lo..oy_hi {
                                let iy = oy * s + ky - p;
                                let row = &xin[iy * w..(iy + 1) * w];
                                let orow = &mut plane[oy * ow..(oy + 1) * ow];
                                for ox in ox_lo..ox_hi {
                                    orow[ox] += wv * row[ox * s + kx - p];
                                }
                            }
                        }
                    }
                }
            }
        }
        self.input = Some(input.clone());
        Ok(out)
    }

    fn backward(&mut self, grad_output: &Tensor) -> Result<Tensor, NnError> {
        let input = self.input.as_ref().ok_or_else(|| missing("conv2d"))?;
        let [kout, c, kh, kw] = [self.weight.value.dim(0), self.weight.value.dim(1), self.weight.value.dim(2), self.weight.value.dim(3)];
        let [n, h, w] = [input.dim(0), input.dim(2), input.dim(3)];
        let (oh, ow) = (self.output_size(h, kh)?, self.output_size(w, kw)?);
        grad_output.expect_shape("conv2d backward", &[n, kout, oh, ow])?;
        let (s, p) = (self.stride, self.padding);
        let x = input.data();
        let g = grad_output.data();
        let wt = self.weight.value.data();
        let mut grad_in = Tensor::zeros(input.shape());
        let dx = grad_in.data_mut();
        let dw = self.weight.grad.data_mut();
        let db = self.bias.grad.data_mut();
        for ni in 0..n {
            for k in 0..kout {
                let gplane = &g[(ni * kout + k) * oh * ow..(ni * kout + k + 1) * oh * ow];
                db[k] += gplane.iter().sum::<f64>();
                for ci in 0..c {
                    let off = (ni * c + ci) * h * w;
                    for ky in 0..kh {
                        let (oy_lo, oy_hi) = valid_range(s, p, ky, h, oh);
                        for kx in 0..kw {
                            let (ox_lo, ox_hi) = valid_range(s, p, kx, w, ow);
                            let widx = ((k * c + ci) * kh + ky) * kw + kx;
                            let wv = wt[widx];
                            let mut acc = 0.0;
                            for oy in oy_lo..oy_hi {
                                let iy = oy * s + ky - p;
                                let grow = &gplane[oy * ow..(oy + 1) * ow];
                                let xrow = &x[off + iy * w..off + (iy + 1) * w];
                                let dxrow = &mut dx[off + iy * w..off + (iy + 1) * w];
                                for ox in ox_lo..ox_hi {
                                    let ix = ox * s + kx - p;
                                    acc += grow[ox] * xrow[ix];
                                    dxrow[ix] += grow[ox] * wv;
                                }
                            }
                            dw[widx] += acc;
                        }
                    }
                }
            }
        }
        Ok(grad_in)
    }

    fn params(&self) -> Vec<&Param> {
        vec![&self.weight, &self.bias]
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        vec![&mut self.weight, &mut self.bias]
    }
}

struct BatchNormCache {
    normalized: Tensor,
    inv_std: Vec<f64>,
    training: bool,
}

/// Per-channel normalization over `[N, C, ...]` (all axes but 1).
pub struct BatchNorm {
    pub gamma: Param,
    pub beta: Param,
    pub running_mean: Buffer,
    pub running_var: Buffer,
    pub momentum: f64,
    pub eps: f64,
    cache: Option<BatchNormCache>,
}

impl BatchNorm {
    pub fn new(name: &str, channels: usize, momentum: f64, eps: f64) -> Self {
        Self {
            gamma: Param::new(format!("{name}.gamma"), Tensor::full(&[channels], 1.0)),
            beta: Param::new(format!("{name}.beta"), Tensor::zeros(&[channels])),
            running_mean: Buffer { name: format!("{name}.running_mean"), value: Tensor::zeros(&[channels]) },
            running_var: Buffer { name: format!("{name}.running_var"), value: Tensor::full(&[channels], 1.0) },
            momentum,
            eps,
            cache: None,
        }
    }

    fn channels(&self) -> usize {
        self.gamma.value.len()
    }

    /// (batch, channels, spatial) for an input, validating the channel axis.
    fn layout(&self, input: &Tensor) -> Result<(usize, usize, usize), NnError> {
        if input.shape().len() < 2 || input.dim(1) != self.channels() {
            return Err(NnError::ShapeMismatch {
                op: "batch_norm",
                expected: format!("[N, {}, ...]", self.channels()),
                found: format!("{:?}", input.shape()),
            });
        }
        let spatial = input.shape()[2..].iter().product();
        Ok((input.dim(0), input.dim(1), spatial))
    }
}

impl Layer for BatchNorm {
    fn forward(&mut self, input: &Tensor, mode: Mode) -> Result<Tensor, NnError> {
        let (n, c, sp) = self.layout(input)?;
        let training = mode == Mode::Train;
        if training && n < 2 {
            return Err(NnError::BatchTooSmall(n));
        }
        let x = input.data();
        let count = (n * sp) as f64;
        let mut normalized = Tensor::zeros(input.shape());
        let mut out = Tensor::zeros(input.shape());
        let mut inv_std = vec![0.0; c];
        for ch in 0..c {
            let values = || (0..n).flat_map(move |ni| (0..sp).map(move |i| (ni * c + ch) * sp + i));
            let (mean, var) = if training {
                let mean = values().map(|i| x[i]).sum::<f64>() / count;
                let var = values().map(|i| (x[i] - mean).powi(2)).sum::<f64>() / count;
                let rm = &mut self.running_mean.value.data_mut()[ch];
                *rm = (1.0 - self.momentum) * *rm + self.momentum * mean;
                let unbiased = if count > 1.0 { var * count / (count - 1.0) } else { var };
                let rv = &mut self.running_var.value.data_mut()[ch];
                *rv = (1.0 - self.momentum) * *rv + self.momentum * unbiased;
                (mean, var)
            } else {
                (self.running_mean.value.data()[ch], self.running_var.value.data()[ch])
            };
            let istd = 1.0 / (var + self.eps).sqrt();
            inv_std[ch] = istd;
            let (gamma, beta) = (self.gamma.value.data()[ch], self.beta.value.data()[ch]);
            for i in values() {
                let xh = (x[i] - mean) * istd;
                normalized.data_mut()[i] = xh;
                out.data_mut()[i] = gamma * xh + beta;
            }
        }
        self.cache = Some(BatchNormCache { normalized, inv_std, training });
        Ok(out)
    }

    fn backward(&mut self, grad_output: &Tensor) -> Result<Tensor, NnError> {
        let cache = self.cache.as_ref().ok_or_else(|| missing("batch_norm"))?;
        grad_output.expect_shape("batch_norm backward", cache.normalized.shape())?;
        let (n, c, sp) = self.layout(grad_output)?;
        let g = grad_output.data();
        let xh = cache.normalized.data();
        let count = (n * sp) as f64;
        let mut grad_in = Tensor::zeros(grad_output.shape());
        for ch in 0..c {
            let idx: Vec<usize> = (0..n).flat_map(|ni| (0..sp).map(move |i| (ni * c + ch) * sp + i)).collect();
            let sum_g: f64 = idx.iter().map(|&i| g[i]).sum();
            let sum_gx: f64 = idx.iter().map(|&i| g[i] * xh[i]).sum();
            self.gamma.grad.data_mut()[ch] += sum_gx;
            self.beta.grad.data_mut()[ch] += sum_g;
            let gamma = self.gamma.value.data()[ch];
            let istd = cache.inv_std[ch];
            let dx = grad_in.data_mut();
            if cache.training {
                for &i in &idx {
                    dx[i] = gamma * istd / count * (count * g[i] - sum_g - xh[i] * sum_gx);
                }
            } else {
                for &i in &idx {
                    dx[i] = gamma * istd * g[i];
                }
            }
        }
        Ok(grad_in)
    }

    fn params(&self) -> Vec<&Param> {
        vec![&self.gamma, &self.beta]
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        vec![&mut self.gamma, &mut self.beta]
    }

    fn buffers(&self) -> Vec<&Buffer> {
        vec![&self.running_mean, &self.running_var]
    }

    fn buffers_mut(&mut self) -> Vec<&mut Buffer> {
        vec![&mut self.running_mean, &mut self.running_var]
    }
}

#[derive(Default)]
pub struct Relu {
    active: Option<Vec<bool>>,
}

impl Relu {
    pub fn new() -> Self {
        Self::default()
    }
}

impl Layer for Relu {
    fn forward(&mut self, input: &Tensor, _mode: Mode) -> Result<Tensor, NnError> {
        self.active = Some(input.data().iter().map(|&v| v > 0.0).collect());
        Ok(input.map(|v| v.max(0.0)))
    }

    fn backward(&mut self, grad_output: &Tensor) -> Result<Tensor, NnError> {
        let active = self.active.as_ref().ok_or_else(|| missing("relu"))?;
        if active.len() != grad_output.len() {
            return Err(NnError::ShapeMismatch { op: "relu backward", expected: format!("{} elements", active.len()), found: format!("{:?}", grad_output.shape()) });
        }
        let data = grad_output.data().iter().zip(active).map(|(&g, &a)| if a { g } else { 0.0 }).collect();
        Tensor::from_vec(grad_output.shape(), data)
    }
}

/// Non-overlapping max pooling with a square window; trailing rows and
/// columns that do not fill a window are dropped.
pub struct MaxPool2d {
    size: usize,
    input_shape: Vec<usize>,
    argmax: Vec<usize>,
}

impl MaxPool2d {
    pub fn new(size: usize) -> Self {
        assert!(size >= 1);
        Self { size, input_shape: Vec::new(), argmax: Vec::new() }
    }
}

impl Layer for MaxPool2d {
    fn forward(&mut self, input: &Tensor, _mode: Mode) -> Result<Tensor, NnError> {
        input.expect_rank("max_pool", 4)?;
        let [n, c, h, w] = [input.dim(0), input.dim(1), input.dim(2), input.dim(3)];
        let k = self.size;
        let (oh, ow) = (h / k, w / k);
        if oh == 0 || ow == 0 {
            return Err(NnError::ShapeMismatch { op: "max_pool", expected: format!("spatial ≥ {k}"), found: format!("{:?}", input.shape()) });
        }
        let x = input.data();
        let mut out = Tensor::zeros(&[n, c, oh, ow]);
        self.argmax = vec![0; n * c * oh * ow];
        for plane in 0..n * c {
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut best = usize::MAX;
                    for dy in 0..k {
                        for dx in 0..k {
                            let i = plane * h * w + (oy * k + dy) * w + ox * k + dx;
                            if best == usize::MAX || x[i] > x[best] {
                                best = i;
                            }
                        }
                    }
                    let o = (plane * oh + oy) * ow + ox;
                    out.data_mut()[o] = x[best];
                    self.argmax[o] = best;
                }
            }
        }
        self.input_shape = input.shape().to_vec();
        Ok(out)
    }

    fn backward(&mut self, grad_output: &Tensor) -> Result<Tensor, NnError> {
        if self.input_shape.is_empty() {
            return Err(missing("max_pool"));
        }
        if grad_output.len() != self.argmax.len() {
            return Err(NnError::ShapeMismatch { op: "max_pool backward", expected: format!("{} elements", self.argmax.len()), found: format!("{:?}", grad_output.shape()) });
        }
        let mut grad_in = Tensor::zeros(&self.input_shape);
        for (o, &i) in self.argmax.iter().enumerate() {
            grad_in.data_mut()[i] += grad_output.data()[o];
        }
        Ok(grad_in)
    }
}

/// `[N, C, H, W] → [N, C]` by spatial mean.
#[derive(Default)]
pub struct GlobalAvgPool {
    input_shape: Vec<usize>,
}

impl GlobalAvgPool {
    pub fn new() -> Self {
        Self::default()
    }
}

impl Layer for GlobalAvgPool {
    fn forward(&mut self, input: &Tensor, _mode: Mode) -> Result<Tensor, NnError> {
        input.expect_rank("global_avg_pool", 4)?;
        let (n, c) = (input.dim(0), input.dim(1));
        let sp = input.dim(2) * input.dim(3);
        let data = input.data().chunks_exact(sp).map(|plane| plane.iter().sum::<f64>() / sp as f64).collect();
        self.input_shape = input.shape().to_vec();
        Tensor::from_vec(&[n, c], data)
    }

    fn backward(&mut self, grad_output: &Tensor) -> Result<Tensor, NnError> {
        if self.input_shape.is_empty() {
            return Err(missing("global_avg_pool"));
        }
        grad_output.expect_shape("global_avg_pool backward", &self.input_shape[..2])?;
        let sp = self.input_shape[2] * self.input_shape[3];
        let data = grad_output.data().iter().flat_map(|&g| std::iter::repeat_n(g / sp as f64, sp)).collect();
        Tensor::from_vec(&self.input_shape, data)
    }
}

/// Inverted dropout: survivors are scaled by `1/(1 − rate)` in training,
/// identity at inference.
pub struct Dropout {
    rate: f64,
    rng: StreamRng,
    mask: Option<Vec<f64>>,
}

impl Dropout {
    pub fn new(rate: f64, rng: StreamRng) -> Self {
        assert!((0.0..1.0).contains(&rate), "dropout rate must be in [0, 1)");
        Self { rate, rng, mask: None }
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }

    /// Replaces the mask stream.
    pub fn reseed(&mut self, rng: StreamRng) {
        self.rng = rng;
    }
}

impl Layer for Dropout {
    fn forward(&mut self, input: &Tensor, mode: Mode) -> Result<Tensor, NnError> {
        if mode == Mode::Eval || self.rate == 0.0 {
            self.mask = None;
            return Ok(input.clone());
        }
        let keep = 1.0 - self.rate;
        let scale = 1.0 / keep;
        let mask: Vec<f64> = (0..input.len()).map(|_| if self.rng.random_bool(keep) { scale } else { 0.0 }).collect();
        let data = input.data().iter().zip(&mask).map(|(v, m)| v * m).collect();
        self.mask = Some(mask);
        Tensor::from_vec(input.shape(), data)
    }

    fn backward(&mut self, grad_output: &Tensor) -> Result<Tensor, NnError> {
        match &self.mask {
            None => Ok(grad_output.clone()),
            Some(mask) => {
                let data = grad_output.data().iter().zip(mask).map(|(g, m)| g * m).collect();
                Tensor::from_vec(grad_output.shape(), data)
            }
        }
    }
}

/// `y = x·Wᵀ + b` over `[N, in]` inputs; `W` is `[out, in]`.
pub struct Dense {
    pub weight: Param,
    pub bias: Param,
    input: Option<Tensor>,
}

impl Dense {
    pub fn new(name: &str, weight: Tensor, bias: Tensor) -> Result<Self, NnError> {
        weight.expect_rank("dense", 2)?;
        bias.expect_shape("dense", &[weight.dim(0)])?;
        Ok(Self { weight: Param::new(format!("{name}.weight"), weight), bias: Param::new(format!("{name}.bias"), bias), input: None })
    }

    /// Uniform He-style init, zero bias.
    pub fn init<R: Rng + ?Sized>(name: &str, inputs: usize, outputs: usize, rng: &mut R) -> Self {
        let bound = (6.0 / inputs as f64).sqrt();
        let weight = Tensor::uniform(&[outputs, inputs], -bound, bound, rng);
        Self::new(name, weight, Tensor::zeros(&[outputs])).expect("consistent shapes")
    }
}

impl Layer for Dense {
    fn forward(&mut self, input: &Tensor, _mode: Mode) -> Result<Tensor, NnError> {
        let (outs, ins) = (self.weight.value.dim(0), self.weight.value.dim(1));
        if input.shape().len() != 2 || input.dim(1) != ins {
            return Err(NnError::ShapeMismatch { op: "dense", expected: format!("[N, {ins}]"), found: format!("{:?}", input.shape()) });
        }
        let n = input.dim(0);
        let mut out = Tensor::zeros(&[n, outs]);
        for i in 0..n {
            let x = input.row(i);
            for o in 0..outs {
                let w = self.weight.value.row(o);
                out.data_mut()[i * outs + o] = self.bias.value.data()[o] + w.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
            }
        }
        self.input = Some(input.clone());
        Ok(out)
    }

    fn backward(&mut self, grad_output: &Tensor) -> Result<Tensor, NnError> {
        let input = self.input.as_ref().ok_or_else(|| missing("dense"))?;
        let (outs, ins) = (self.weight.value.dim(0), self.weight.value.dim(1));
        let n = input.dim(0);
        grad_output.expect_shape("dense backward", &[n, outs])?;
        let mut grad_in = Tensor::zeros(&[n, ins]);
        for i in 0..n {
            let x = input.row(i);
            for o in 0..outs {
                let g = grad_output.data()[i * outs + o];
                self.bias.grad.data_mut()[o] += g;
                let wrow = self.weight.value.row(o);
                for (dx, w) in grad_in.row_mut(i).iter_mut().zip(wrow) {
                    *dx += g * w;
                }
                for (dw, xv) in self.weight.grad.row_mut(o).iter_mut().zip(x) {
                    *dw += g * xv;
                }
            }
        }
        Ok(grad_in)
    }

    fn params(&self) -> Vec<&Param> {
        vec![&self.weight, &self.bias]
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        vec![&mut self.weight, &mut self.bias]
    }
}

/// Layers applied in order.
#[derive(Default)]
pub struct Sequential {
    layers: Vec<Box<dyn Layer + Send>>,
}

impl Sequential {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, layer: impl Layer + Send + 'static) {
        self.layers.push(Box::new(layer));
    }

    pub fn with(mut self, layer: impl Layer + Send + 'static) -> Self {
        self.push(layer);
        self
    }

    pub fn len(&self) -> usize {
        self.layers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.layers.is_empty()
    }
}

impl Layer for Sequential {
    fn forward(&mut self, input: &Tensor, mode: Mode) -> Result<Tensor, NnError> {
        let mut x = input.clone();
        for layer in self.layers.iter_mut() {
            x = layer.forward(&x, mode)?;
        }
        Ok(x)
    }

    fn backward(&mut self, grad_output: &Tensor) -> Result<Tensor, NnError> {
        let mut g = grad_output.clone();
        for layer in self.layers.iter_mut().rev() {
            g = layer.backward(&g)?;
        }
        Ok(g)
    }

    fn params(&self) -> Vec<&Param> {
        self.layers.iter().flat_map(|l| l.params()).collect()
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        self.layers.iter_mut().flat_map(|l| l.params_mut()).collect()
    }

    fn buffers(&self) -> Vec<&Buffer> {
        self.layers.iter().flat_map(|l| l.buffers()).collect()
    }

    fn buffers_mut(&mut self) -> Vec<&mut Buffer> {
        self.layers.iter_mut().flat_map(|l| l.buffers_mut()).collect()
    }
}
