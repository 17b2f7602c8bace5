//! Layer kinds and their forward/backward arithmetic.
//!
//! All activations are flat `Vec<f64>` in image order: `[(y*w + x)*c + ch]`.
//! Dense layers flatten in that same order.

use crate::error::{Error, Result};

/// Accumulated parameter gradients for one layer (used by training).
#[derive(Debug, Clone)]
pub enum LayerGrads {
    None,
    Params { weights: Vec<f64>, bias: Vec<f64> },
}

/// Convolution with square kernel, stride 1 and symmetric zero padding.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub padding: usize,
    /// `[out_c][ky][kx][in_c]`.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Conv {
    pub fn new(
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        padding: usize,
        weights: Vec<f64>,
        bias: Vec<f64>,
    ) -> Result<Self> {
        if kernel == 0 || in_channels == 0 || out_channels == 0 {
            return Err(Error::InvalidArgument("conv dimensions must be positive".into()));
        }
        if weights.len() != out_channels * kernel * kernel * in_channels {
            return Err(Error::ShapeMismatch(format!(
                "conv weights: got {}, need {}",
                weights.len(),
                out_channels * kernel * kernel * in_channels
            )));
        }
        if bias.len() != out_channels {
            return Err(Error::ShapeMismatch(format!(
                "conv bias: got {}, need {}",
                bias.len(),
                out_channels
            )));
        }
        Ok(Self {
            in_channels,
            out_channels,
            kernel,
            padding,
            weights,
            bias,
        })
    }

    #[inline]
    fn weight_at(&self, oc: usize, ky: usize, kx: usize, ic: usize) -> f64 {
        self.weights[((oc * self.kernel + ky) * self.kernel + kx) * self.in_channels + ic]
    }
}

/// Fully connected layer, row-major weights `[out][in]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub in_len: usize,
    pub out_len: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Dense {
    pub fn new(in_len: usize, out_len: usize, weights: Vec<f64>, bias: Vec<f64>) -> Result<Self> {
        if weights.len() != in_len * out_len {
            return Err(Error::ShapeMismatch(format!(
                "dense weights: got {}, need {}",
                weights.len(),
                in_len * out_len
            )));
        }
        if bias.len() != out_len {
            return Err(Error::ShapeMismatch(format!(
                "dense bias: got {}, need {}",
                bias.len(),
                out_len
            )));
        }
        Ok(Self {
            in_len,
            out_len,
            weights,
            bias,
        })
    }
}

/// One element of the layer stack.
#[derive(Debug, Clone, PartialEq)]
pub enum Layer {
    Conv(Conv),
    Relu,
    AvgPool { size: usize },
    Dense(Dense),
}

impl Layer {
    /// Output shape for a given input shape, validating consistency.
    pub fn out_shape(&self, shape: (usize, usize, usize)) -> Result<(usize, usize, usize)> {
        let (h, w, c) = shape;
        match self {
            Layer::Conv(conv) => {
                if c != conv.in_channels {
                    return Err(Error::ShapeMismatch(format!(
                        "conv expects {} input channels, got {}",
                        conv.in_channels, c
                    )));
                }
                let span = conv.kernel;
                if h + 2 * conv.padding < span || w + 2 * conv.padding < span {
                    return Err(Error::ShapeMismatch(format!(
                        "conv kernel {span} does not fit {h}x{w} with padding {}",
                        conv.padding
                    )));
                }
                Ok((
                    h + 2 * conv.padding - span + 1,
                    w + 2 * conv.padding - span + 1,
                    conv.out_channels,
                ))
            }
            Layer::Relu => Ok(shape),
            Layer::AvgPool { size } => {
                if *size == 0 || h % size != 0 || w % size != 0 {
                    return Err(Error::ShapeMismatch(format!(
                        "avg pool {size} does not divide {h}x{w}"
                    )));
                }
                Ok((h / size, w / size, c))
            }
            Layer::Dense(dense) => {
                if h * w * c != dense.in_len {
                    return Err(Error::ShapeMismatch(format!(
                        "dense expects {} inputs, got {h}x{w}x{c}",
                        dense.in_len
                    )));
                }
                Ok((1, 1, dense.out_len))
            }
        }
    }

    pub fn forward(&self, input: &[f64], shape: (usize, usize, usize)) -> Vec<f64> {
        match self {
            Layer::Conv(conv) => conv_forward(conv, input, shape),
            Layer::Relu => input.iter().map(|&v| if v > 0.0 { v } else { 0.0 }).collect(),
            Layer::AvgPool { size } => pool_forward(input, shape, *size),
            Layer::Dense(dense) => dense_forward(dense, input),
        }
    }

    /// Gradient with respect to this layer's input. If `grads` is given, the
    /// layer's parameter gradients are accumulated into it.
    pub fn backward(
        &self,
        input: &[f64],
        shape: (usize, usize, usize),
        grad_out: &[f64],
        grads: Option<&mut LayerGrads>,
    ) -> Vec<f64> {
        match self {
            Layer::Conv(conv) => conv_backward(conv, input, shape, grad_out, grads),
            Layer::Relu => input
                .iter()
                .zip(grad_out)
                .map(|(&v, &g)| if v > 0.0 { g } else { 0.0 })
                .collect(),
            Layer::AvgPool { size } => pool_backward(shape, grad_out, *size),
            Layer::Dense(dense) => dense_backward(dense, input, grad_out, grads),
        }
    }

    pub fn zero_grads(&self) -> LayerGrads {
        match self {
            Layer::Conv(conv) => LayerGrads::Params {
                weights: vec![0.0; conv.weights.len()],
                bias: vec![0.0; conv.bias.len()],
            },
            Layer::Dense(dense) => LayerGrads::Params {
                weights: vec![0.0; dense.weights.len()],
                bias: vec![0.0; dense.bias.len()],
            },
            _ => LayerGrads::None,
        }
    }

    pub fn apply_update(&mut self, grads: &LayerGrads, step: f64) {
        let (w, b) = match self {
            Layer::Conv(conv) => (&mut conv.weights, &mut conv.bias),
            Layer::Dense(dense) => (&mut dense.weights, &mut dense.bias),
            _ => return,
        };
        if let LayerGrads::Params { weights, bias } = grads {
            for (wi, gi) in w.iter_mut().zip(weights) {
                *wi -= step * gi;
            }
            for (bi, gi) in b.iter_mut().zip(bias) {
                *bi -= step * gi;
            }
        }
    }
}

fn conv_forward(conv: &Conv, input: &[f64], shape: (usize, usize, usize)) -> Vec<f64> {
    let (h, w, in_c) = shape;
    let k = conv.kernel;
    let p = conv.padding as isize;
    let out_h = h + 2 * conv.padding - k + 1;
    let out_w = w + 2 * conv.padding - k + 1;
    let mut out = vec![0.0; out_h * out_w * conv.out_channels];
    for oy in 0..out_h {
        for ox in 0..out_w {
            for oc in 0..conv.out_channels {
                let mut acc = conv.bias[oc];
                for ky in 0..k {
                    let iy = oy as isize + ky as isize - p;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    for kx in 0..k {
                        let ix = ox as isize + kx as isize - p;
                        if ix < 0 || ix >= w as isize {
                            continue;
                        }
                        let base = (iy as usize * w + ix as usize) * in_c;
                        for ic in 0..in_c {
                            acc += input[base + ic] * conv.weight_at(oc, ky, kx, ic);
                        }
                    }
                }
                out[(oy * out_w + ox) * conv.out_channels + oc] = acc;
            }
        }
    }
    out
}

fn conv_backward(
    conv: &Conv,
    input: &[f64],
    shape: (usize, usize, usize),
    grad_out: &[f64],
    grads: Option<&mut LayerGrads>,
) -> Vec<f64> {
    let (h, w, in_c) = shape;
    let k = conv.kernel;
    let p = conv.padding as isize;
    let out_h = h + 2 * conv.padding - k + 1;
    let out_w = w + 2 * conv.padding - k + 1;
    let mut grad_in = vec![0.0; input.len()];
    let mut param = grads;
    for oy in 0..out_h {
        for ox in 0..out_w {
            for oc in 0..conv.out_channels {
                let g = grad_out[(oy * out_w + ox) * conv.out_channels + oc];
                if let Some(LayerGrads::Params { bias, .. }) = param.as_deref_mut() {
                    bias[oc] += g;
                }
                for ky in 0..k {
                    let iy = oy as isize + ky as isize - p;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    for kx in 0..k {
                        let ix = ox as isize + kx as isize - p;
                        if ix < 0 || ix >= w as isize {
                            continue;
                        }
                        let base = (iy as usize * w + ix as usize) * in_c;
                        let wbase = ((oc * k + ky) * k + kx) * in_c;
                        for ic in 0..in_c {
                            grad_in[base + ic] += g * conv.weights[wbase + ic];
                        }
                        if let Some(LayerGrads::Params { weights, .. }) = param.as_deref_mut() {
                            for ic in 0..in_c {
                                weights[wbase + ic] += g * input[base + ic];
                            }
                        }
                    }
                }
            }
        }
    }
    grad_in
}

fn pool_forward(input: &[f64], shape: (usize, usize, usize), size: usize) -> Vec<f64> {
    let (h, w, c) = shape;
    let (out_h, out_w) = (h / size, w / size);
    let inv = 1.0 / (size * size) as f64;
    let mut out = vec![0.0; out_h * out_w * c];
    for oy in 0..out_h {
        for ox in 0..out_w {
            for ch in 0..c {
                let mut acc = 0.0;
                for dy in 0..size {
                    for dx in 0..size {
                        acc += input[((oy * size + dy) * w + ox * size + dx) * c + ch];
                    }
                }
                out[(oy * out_w + ox) * c + ch] = acc * inv;
            }
        }
    }
    out
}

fn pool_backward(shape: (usize, usize, usize), grad_out: &[f64], size: usize) -> Vec<f64> {
    let (h, w, c) = shape;
    let out_w = w / size;
    let inv = 1.0 / (size * size) as f64;
    let mut grad_in = vec![0.0; h * w * c];
    for y in 0..h {
        for x in 0..w {
            for ch in 0..c {
                grad_in[(y * w + x) * c + ch] =
                    grad_out[((y / size) * out_w + x / size) * c + ch] * inv;
            }
        }
    }
    grad_in
}

fn dense_forward(dense: &Dense, input: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(dense.out_len);
    for o in 0..dense.out_len {
        let row = &dense.weights[o * dense.in_len..(o + 1) * dense.in_len];
        let mut acc = dense.bias[o];
        for (wi, xi) in row.iter().zip(input) {
            acc += wi * xi;
        }
        out.push(acc);
    }
    out
}

fn dense_backward(
    dense: &Dense,
    input: &[f64],
    grad_out: &[f64],
    grads: Option<&mut LayerGrads>,
) -> Vec<f64> {
    let mut grad_in = vec![0.0; dense.in_len];
    for (o, &g) in grad_out.iter().enumerate() {
        let row = &dense.weights[o * dense.in_len..(o + 1) * dense.in_len];
        for (gi, wi) in grad_in.iter_mut().zip(row) {
            *gi += g * wi;
        }
    }
    if let Some(LayerGrads::Params { weights, bias }) = grads {
        for o in 0..dense.out_len {
            let g = grad_out[o];
            let row = &mut weights[o * dense.in_len..(o + 1) * dense.in_len];
            for (wi, xi) in row.iter_mut().zip(input) {
                *wi += g * xi;
            }
            bias[o] += g;
        }
    }
    grad_in
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn avg_pool_forward_and_backward() {
        // 2x2 pool over a 2x2 single-channel grid: mean of all four.
        let input = vec![1.0, 2.0, 3.0, 6.0];
        let layer = Layer::AvgPool { size: 2 };
        let out = layer.forward(&input, (2, 2, 1));
        assert_eq!(out, vec![3.0]);
        let back = layer.backward(&input, (2, 2, 1), &[4.0], None);
        assert_eq!(back, vec![1.0, 1.0, 1.0, 1.0]);
    }

    #[test]
    fn relu_gates_gradient() {
        let layer = Layer::Relu;
        let input = vec![-1.0, 0.0, 2.0];
        assert_eq!(layer.forward(&input, (1, 1, 3)), vec![0.0, 0.0, 2.0]);
        let back = layer.backward(&input, (1, 1, 3), &[5.0, 5.0, 5.0], None);
        assert_eq!(back, vec![0.0, 0.0, 5.0]);
    }

    #[test]
    fn conv_hand_example() {
        // 3x3 input, 2x2 kernel, no padding; single channel.
        let conv = Conv::new(1, 1, 2, 0, vec![1.0, 0.0, 0.0, -1.0], vec![0.5]).unwrap();
        let input = vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0];
        let layer = Layer::Conv(conv);
        let out = layer.forward(&input, (3, 3, 1));
        // out[y][x] = in[y][x] - in[y+1][x+1] + 0.5
        assert_eq!(out, vec![-3.5, -3.5, -3.5, -3.5]);
    }

    #[test]
    fn dense_is_matrix_product() {
        let dense = Dense::new(2, 2, vec![1.0, 2.0, 3.0, 4.0], vec![0.0, 1.0]).unwrap();
        let layer = Layer::Dense(dense);
        let out = layer.forward(&[5.0, 6.0], (1, 1, 2));
        assert_eq!(out, vec![17.0, 40.0]);
        // input gradient is W^T g
        let back = layer.backward(&[5.0, 6.0], (1, 1, 2), &[1.0, 1.0], None);
        assert_eq!(back, vec![4.0, 6.0]);
    }
}
