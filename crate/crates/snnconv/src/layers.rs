//! Forward passes of the non-activation layers: linear, 2-D convolution,
//! inference-mode batch normalization, average pooling, flatten.
//!
//! Dot products accumulate in `f64` and round once to `f32` at the end, so
//! that algebraically equal evaluation orders stay bit-identical across the
//! conversion equivalence checks.

use crate::error::{Error, Result};
use crate::quant::QuantParams;
use crate::tensor::Tensor;

/// One layer of an analog network.
#[derive(Debug, Clone)]
pub enum LayerSpec {
    /// `y = Wx + b`, weight `[out, in]`, bias `[out]`.
    Linear { weight: Tensor, bias: Tensor },
    /// Cross-correlation over channels-first images, weight `[out_c, in_c, kh, kw]`.
    Conv2d {
        weight: Tensor,
        bias: Tensor,
        stride: usize,
        padding: usize,
    },
    /// Inference-mode batch normalization over the channel axis.
    BatchNorm {
        gamma: Tensor,
        beta: Tensor,
        running_mean: Tensor,
        running_var: Tensor,
        eps: f32,
    },
    /// Polarity quantized activation.
    Pqa(QuantParams),
    /// Non-overlapping mean pooling (stride defaults to the window).
    AvgPool2d { window: usize, stride: usize },
    /// `[C, H, W]` to `[C*H*W]`, row-major order preserved.
    Flatten,
}

impl LayerSpec {
    pub fn kind_name(&self) -> &'static str {
        match self {
            LayerSpec::Linear { .. } => "linear",
            LayerSpec::Conv2d { .. } => "conv2d",
            LayerSpec::BatchNorm { .. } => "batchnorm",
            LayerSpec::Pqa(_) => "pqa",
            LayerSpec::AvgPool2d { .. } => "avgpool2d",
            LayerSpec::Flatten => "flatten",
        }
    }

    /// Checks the parameter-shape invariants that do not depend on the input.
    pub fn validate(&self) -> Result<()> {
        match self {
            LayerSpec::Linear { weight, bias } => {
                if weight.shape().len() != 2 {
                    return Err(Error::Dimension(format!(
                        "linear weight must be [out, in], got {:?}",
                        weight.shape()
                    )));
                }
                if bias.shape() != [weight.shape()[0]] {
                    return Err(Error::Dimension(format!(
                        "linear bias length {:?} != output rows {}",
                        bias.shape(),
                        weight.shape()[0]
                    )));
                }
                Ok(())
            }
            LayerSpec::Conv2d {
                weight,
                bias,
                stride,
                ..
            } => {
                if weight.shape().len() != 4 {
                    return Err(Error::Dimension(format!(
                        "conv2d weight must be [out_c, in_c, kh, kw], got {:?}",
                        weight.shape()
                    )));
                }
                if bias.shape() != [weight.shape()[0]] {
                    return Err(Error::Dimension(
                        "conv2d bias length != output channels".into(),
                    ));
                }
                if *stride == 0 {
                    return Err(Error::InvalidParam("conv2d stride must be >= 1".into()));
                }
                Ok(())
            }
            LayerSpec::BatchNorm {
                gamma,
                beta,
                running_mean,
                running_var,
                eps,
            } => {
                let c = gamma.len();
                if beta.len() != c || running_mean.len() != c || running_var.len() != c {
                    return Err(Error::Dimension(
                        "batchnorm parameter lengths disagree".into(),
                    ));
                }
                if running_var.data().iter().any(|&v| v < 0.0) {
                    return Err(Error::InvalidParam(
                        "batchnorm running_var must be elementwise >= 0".into(),
                    ));
                }
                if *eps <= 0.0 {
                    return Err(Error::InvalidParam("batchnorm eps must be > 0".into()));
                }
                Ok(())
            }
            LayerSpec::Pqa(q) => q.validate(),
            LayerSpec::AvgPool2d { window, stride } => {
                if *window == 0 {
                    return Err(Error::Dimension("avgpool2d window must be >= 1".into()));
                }
                if *stride == 0 {
                    return Err(Error::InvalidParam("avgpool2d stride must be >= 1".into()));
                }
                Ok(())
            }
            LayerSpec::Flatten => Ok(()),
        }
    }
}

/// `y = Wx + b` with `f64` accumulation.
pub fn linear_forward(weight: &Tensor, bias: &Tensor, x: &Tensor) -> Result<Tensor> {
    if weight.shape().len() != 2 {
        return Err(Error::Dimension(format!(
            "linear weight must be [out, in], got {:?}",
            weight.shape()
        )));
    }
    let (out, inp) = (weight.shape()[0], weight.shape()[1]);
    if x.len() != inp {
        return Err(Error::Dimension(format!(
            "linear expects input of length {inp}, got {}",
            x.len()
        )));
    }
    if bias.len() != out {
        return Err(Error::Dimension("linear bias length != out".into()));
    }
    let w = weight.data();
    let xv = x.data();
    let mut y = Vec::with_capacity(out);
    for r in 0..out {
        let row = &w[r * inp..(r + 1) * inp];
        let mut acc = bias.data()[r] as f64;
        for (wi, xi) in row.iter().zip(xv) {
            acc += *wi as f64 * *xi as f64;
        }
        y.push(acc as f32);
    }
    Tensor::new(vec![out], y)
}

fn conv_out_extent(input: usize, kernel: usize, stride: usize, padding: usize) -> Result<usize> {
    let padded = input + 2 * padding;
    if kernel > padded {
        return Err(Error::Dimension(format!(
            "conv2d kernel {kernel} larger than padded input {padded}"
        )));
    }
    Ok((padded - kernel) / stride + 1)
}

/// Standard cross-correlation with bias over `[C_in, H, W]`.
pub fn conv2d_forward(
    weight: &Tensor,
    bias: &Tensor,
    stride: usize,
    padding: usize,
    x: &Tensor,
) -> Result<Tensor> {
    if weight.shape().len() != 4 {
        return Err(Error::Dimension(
            "conv2d weight must be [out_c, in_c, kh, kw]".into(),
        ));
    }
    if x.shape().len() != 3 {
        return Err(Error::Dimension(format!(
            "conv2d input must be [C, H, W], got {:?}",
            x.shape()
        )));
    }
    if stride == 0 {
        return Err(Error::InvalidParam("conv2d stride must be >= 1".into()));
    }
    let (oc, ic, kh, kw) = (
        weight.shape()[0],
        weight.shape()[1],
        weight.shape()[2],
        weight.shape()[3],
    );
    let (c, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    if c != ic {
        return Err(Error::Dimension(format!(
            "conv2d expects {ic} input channels, got {c}"
        )));
    }
    let oh = conv_out_extent(h, kh, stride, padding)?;
    let ow = conv_out_extent(w, kw, stride, padding)?;
    let wd = weight.data();
    let xd = x.data();
    let mut out = vec![0.0f32; oc * oh * ow];
    for o in 0..oc {
        for py in 0..oh {
            for px in 0..ow {
                let mut acc = bias.data()[o] as f64;
                for cin in 0..ic {
                    for ky in 0..kh {
                        let iy = (py * stride + ky) as isize - padding as isize;
                        if iy < 0 || iy as usize >= h {
                            continue;
                        }
                        for kx in 0..kw {
                            let ix = (px * stride + kx) as isize - padding as isize;
                            if ix < 0 || ix as usize >= w {
                                continue;
                            }
                            let wv = wd[((o * ic + cin) * kh + ky) * kw + kx];
                            let xv = xd[(cin * h + iy as usize) * w + ix as usize];
                            acc += wv as f64 * xv as f64;
                        }
                    }
                }
                out[(o * oh + py) * ow + px] = acc as f32;
            }
        }
    }
    Tensor::new(vec![oc, oh, ow], out)
}

/// Per-channel `y = gamma * (x - mean) / sqrt(var + eps) + beta` with frozen
/// running statistics. Accepts `[features]` or `[C, H, W]` input.
pub fn batchnorm_forward(
    gamma: &Tensor,
    beta: &Tensor,
    running_mean: &Tensor,
    running_var: &Tensor,
    eps: f32,
    x: &Tensor,
) -> Result<Tensor> {
    let channels = gamma.len();
    let per_channel = match x.shape() {
        [c] => {
            if *c != channels {
                return Err(Error::Dimension(format!(
                    "batchnorm expects {channels} features, got {c}"
                )));
            }
            1
        }
        [c, h, w] => {
            if *c != channels {
                return Err(Error::Dimension(format!(
                    "batchnorm expects {channels} channels, got {c}"
                )));
            }
            h * w
        }
        other => {
            return Err(Error::Dimension(format!(
                "batchnorm input must be [features] or [C, H, W], got {other:?}"
            )))
        }
    };
    let mut out = Vec::with_capacity(x.len());
    for ch in 0..channels {
        let denom = running_var.data()[ch] as f64 + eps as f64;
        if denom <= 0.0 {
            return Err(Error::NonFinite(format!(
                "batchnorm var + eps = {denom} <= 0 in channel {ch}"
            )));
        }
        let scale = gamma.data()[ch] as f64 / denom.sqrt();
        let mean = running_mean.data()[ch] as f64;
        let shift = beta.data()[ch] as f64;
        for i in 0..per_channel {
            let v = x.data()[ch * per_channel + i] as f64;
            out.push((scale * (v - mean) + shift) as f32);
        }
    }
    Tensor::new(x.shape().to_vec(), out)
}

/// Mean over each pooling window of a `[C, H, W]` input. The window must tile
/// the spatial extent exactly.
pub fn avgpool2d_forward(window: usize, stride: usize, x: &Tensor) -> Result<Tensor> {
    if window == 0 {
        return Err(Error::Dimension("avgpool2d window must be >= 1".into()));
    }
    if stride == 0 {
        return Err(Error::InvalidParam("avgpool2d stride must be >= 1".into()));
    }
    if x.shape().len() != 3 {
        return Err(Error::Dimension(format!(
            "avgpool2d input must be [C, H, W], got {:?}",
            x.shape()
        )));
    }
    let (c, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    if h < window || w < window || (h - window) % stride != 0 || (w - window) % stride != 0 {
        return Err(Error::Dimension(format!(
            "avgpool2d window {window}/stride {stride} does not tile {h}x{w}"
        )));
    }
    let oh = (h - window) / stride + 1;
    let ow = (w - window) / stride + 1;
    let inv_area = 1.0f64 / (window * window) as f64;
    let xd = x.data();
    let mut out = vec![0.0f32; c * oh * ow];
    for ch in 0..c {
        for py in 0..oh {
            for px in 0..ow {
                let mut acc = 0.0f64;
                for ky in 0..window {
                    for kx in 0..window {
                        acc += xd[(ch * h + py * stride + ky) * w + px * stride + kx] as f64;
                    }
                }
                out[(ch * oh + py) * ow + px] = (acc * inv_area) as f32;
            }
        }
    }
    Tensor::new(vec![c, oh, ow], out)
}

/// Row-major flatten to one dimension.
pub fn flatten(x: &Tensor) -> Tensor {
    Tensor::from_vec(x.data().to_vec())
}
