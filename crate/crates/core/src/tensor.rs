//! Rank-3 tensors and the handful of kernels the staged network needs.
//!
//! Layout is channel-major: element `(c, y, x)` lives at
//! `(c * height + y) * width + x`. All kernels are pure functions.

use std::fmt;

use crate::error::{Error, Result};
use crate::exec::Exec;

#[derive(Clone, PartialEq)]
pub struct Tensor {
    channels: usize,
    height: usize,
    width: usize,
    data: Vec<f32>,
}

impl fmt::Debug for Tensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "Tensor({}x{}x{})",
            self.channels, self.height, self.width
        )
    }
}

impl Tensor {
    pub fn new(channels: usize, height: usize, width: usize, data: Vec<f32>) -> Result<Self> {
        if channels == 0 || height == 0 || width == 0 {
            return Err(Error::param(
                "dims",
                format!("all dimensions must be positive, got {channels}x{height}x{width}"),
            ));
        }
        let n = channels * height * width;
        if data.len() != n {
            return Err(Error::shape("tensor data length", n, data.len()));
        }
        if let Some(index) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        Ok(Tensor {
            channels,
            height,
            width,
            data,
        })
    }

    pub fn zeros(channels: usize, height: usize, width: usize) -> Self {
        Self::filled(channels, height, width, 0.0)
    }

    /// Panics if any dimension is zero or `value` is not finite.
    pub fn filled(channels: usize, height: usize, width: usize, value: f32) -> Self {
        assert!(channels > 0 && height > 0 && width > 0, "empty tensor");
        assert!(value.is_finite());
        Tensor {
            channels,
            height,
            width,
            data: vec![value; channels * height * width],
        }
    }

    pub fn from_fn(
        channels: usize,
        height: usize,
        width: usize,
        mut f: impl FnMut(usize, usize, usize) -> f32,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(channels * height * width);
        for c in 0..channels {
            for y in 0..height {
                for x in 0..width {
                    data.push(f(c, y, x));
                }
            }
        }
        Self::new(channels, height, width, data)
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn shape(&self) -> Shape {
        Shape(self.channels, self.height, self.width)
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn get(&self, c: usize, y: usize, x: usize) -> f32 {
        self.data[(c * self.height + y) * self.width + x]
    }

    /// One channel plane as a slice of `height * width` values.
    pub fn plane(&self, c: usize) -> &[f32] {
        let hw = self.height * self.width;
        &self.data[c * hw..(c + 1) * hw]
    }

    fn check_same_shape(&self, other: &Tensor, context: &'static str) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(Error::shape(context, self.shape(), other.shape()));
        }
        Ok(())
    }
}

/// `(channels, height, width)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Shape(pub usize, pub usize, pub usize);

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}x{}", self.0, self.1, self.2)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConvParams {
    out_channels: usize,
    in_channels: usize,
    kernel_h: usize,
    kernel_w: usize,
    stride: usize,
    pad: usize,
    weights: Vec<f32>,
    bias: Vec<f32>,
}

impl ConvParams {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        out_channels: usize,
        in_channels: usize,
        kernel_h: usize,
        kernel_w: usize,
        stride: usize,
        pad: usize,
        weights: Vec<f32>,
        bias: Vec<f32>,
    ) -> Result<Self> {
        if out_channels == 0 || in_channels == 0 || kernel_h == 0 || kernel_w == 0 {
            return Err(Error::param("conv dims", "counts must be positive"));
        }
        if stride == 0 {
            return Err(Error::param("stride", "must be positive"));
        }
        let n = out_channels * in_channels * kernel_h * kernel_w;
        if weights.len() != n {
            return Err(Error::shape("conv weights", n, weights.len()));
        }
        if bias.len() != out_channels {
            return Err(Error::shape("conv bias", out_channels, bias.len()));
        }
        Ok(ConvParams {
            out_channels,
            in_channels,
            kernel_h,
            kernel_w,
            stride,
            pad,
            weights,
            bias,
        })
    }

    /// 1x1 identity over `channels` channels.
    pub fn identity(channels: usize) -> Self {
        let mut weights = vec![0.0; channels * channels];
        for c in 0..channels {
            weights[c * channels + c] = 1.0;
        }
        ConvParams::new(channels, channels, 1, 1, 1, 0, weights, vec![0.0; channels])
            .expect("valid identity")
    }

    pub fn out_channels(&self) -> usize {
        self.out_channels
    }

    pub fn in_channels(&self) -> usize {
        self.in_channels
    }

    pub fn kernel(&self) -> (usize, usize) {
        (self.kernel_h, self.kernel_w)
    }

    pub fn stride(&self) -> usize {
        self.stride
    }

    pub fn pad(&self) -> usize {
        self.pad
    }

    pub fn weights(&self) -> &[f32] {
        &self.weights
    }

    pub fn bias(&self) -> &[f32] {
        &self.bias
    }

    /// Output spatial size for an `h x w` input, or `None` if it would be empty.
    pub fn output_dims(&self, h: usize, w: usize) -> Option<(usize, usize)> {
        let ph = h + 2 * self.pad;
        let pw = w + 2 * self.pad;
        if ph < self.kernel_h || pw < self.kernel_w {
            return None;
        }
        Some((
            (ph - self.kernel_h) / self.stride + 1,
            (pw - self.kernel_w) / self.stride + 1,
        ))
    }
}

pub fn conv2d(input: &Tensor, p: &ConvParams) -> Result<Tensor> {
    conv2d_with(input, p, Exec::default())
}

/// Direct zero-padded cross-correlation. Each output element accumulates in
/// `f64` over `(in_channel, ky, kx)` in that order, so the result does not
/// depend on `exec`.
pub fn conv2d_with(input: &Tensor, p: &ConvParams, exec: Exec) -> Result<Tensor> {
    if input.channels != p.in_channels {
        return Err(Error::shape(
            "conv2d input channels",
            p.in_channels,
            input.channels,
        ));
    }
    let (oh, ow) = p.output_dims(input.height, input.width).ok_or_else(|| {
        Error::shape(
            "conv2d spatial",
            format!("at least {}x{} after padding", p.kernel_h, p.kernel_w),
            format!("{}x{} pad {}", input.height, input.width, p.pad),
        )
    })?;
    let mut out = vec![0.0f32; p.out_channels * oh * ow];
    exec.for_each_chunk_mut(&mut out, oh * ow, |oc, plane| {
        conv_plane(input, p, oc, oh, ow, plane);
    });
    Ok(Tensor {
        channels: p.out_channels,
        height: oh,
        width: ow,
        data: out,
    })
}

fn conv_plane(input: &Tensor, p: &ConvParams, oc: usize, oh: usize, ow: usize, out: &mut [f32]) {
    let (h, w) = (input.height as isize, input.width as isize);
    let (stride, pad) = (p.stride as isize, p.pad as isize);
    let mut acc = vec![p.bias[oc] as f64; oh * ow];
    let kernel_len = p.kernel_h * p.kernel_w;
    for ic in 0..p.in_channels {
        let src = input.plane(ic);
        let kbase = (oc * p.in_channels + ic) * kernel_len;
        for ky in 0..p.kernel_h {
            for kx in 0..p.kernel_w {
                let wgt = p.weights[kbase + ky * p.kernel_w + kx] as f64;
                if wgt == 0.0 {
                    continue;
                }
                // Range of output x whose input column lands inside the image.
                let dx = kx as isize - pad;
                let x_lo = ceil_div((-dx).max(0), stride) as usize;
                let x_hi = (ceil_div(w - dx, stride).max(0) as usize).min(ow);
                if x_lo >= x_hi {
                    continue;
                }
                for oy in 0..oh {
                    let iy = oy as isize * stride + ky as isize - pad;
                    if iy < 0 || iy >= h {
                        continue;
                    }
                    let row = &src[(iy * w) as usize..((iy + 1) * w) as usize];
                    let dst = &mut acc[oy * ow..(oy + 1) * ow];
                    for (ox, d) in dst.iter_mut().enumerate().take(x_hi).skip(x_lo) {
                        let ix = (ox as isize * stride + dx) as usize;
                        *d += wgt * row[ix] as f64;
                    }
                }
            }
        }
    }
    for (o, a) in out.iter_mut().zip(acc) {
        *o = a as f32;
    }
}

fn ceil_div(a: isize, b: isize) -> isize {
    // b > 0
    if a >= 0 {
        (a + b - 1) / b
    } else {
        -((-a) / b)
    }
}

pub fn maxpool2d(input: &Tensor, window: usize, stride: usize) -> Result<Tensor> {
    if window == 0 || stride == 0 {
        return Err(Error::param(
            "maxpool",
            "window and stride must be positive",
        ));
    }
    if window > input.height || window > input.width {
        return Err(Error::shape(
            "maxpool window",
            format!("window <= {}x{}", input.height, input.width),
            window,
        ));
    }
    let oh = (input.height - window) / stride + 1;
    let ow = (input.width - window) / stride + 1;
    let mut data = Vec::with_capacity(input.channels * oh * ow);
    for c in 0..input.channels {
        let src = input.plane(c);
        for oy in 0..oh {
            for ox in 0..ow {
                let mut m = f32::NEG_INFINITY;
                for wy in 0..window {
                    let row = (oy * stride + wy) * input.width;
                    for wx in 0..window {
                        m = m.max(src[row + ox * stride + wx]);
                    }
                }
                data.push(m);
            }
        }
    }
    Ok(Tensor {
        channels: input.channels,
        height: oh,
        width: ow,
        data,
    })
}

pub fn relu(input: &Tensor) -> Tensor {
    let mut out = input.clone();
    relu_in_place(&mut out);
    out
}

pub fn relu_in_place(t: &mut Tensor) {
    for v in &mut t.data {
        *v = v.max(0.0);
    }
}

pub fn upsample_bilinear(input: &Tensor, factor: usize) -> Result<Tensor> {
    upsample_bilinear_with(input, factor, Exec::default())
}

/// Bilinear upsampling with half-pixel sample centers: output index `i` reads
/// source coordinate `(i + 0.5) / factor - 0.5`, clamped to the border.
pub fn upsample_bilinear_with(input: &Tensor, factor: usize, exec: Exec) -> Result<Tensor> {
    if factor == 0 {
        return Err(Error::param("factor", "must be at least 1"));
    }
    if factor == 1 {
        return Ok(input.clone());
    }
    let (oh, ow) = (input.height * factor, input.width * factor);
    let ys = axis_taps(input.height, factor);
    let xs = axis_taps(input.width, factor);
    let mut out = vec![0.0f32; input.channels * oh * ow];
    exec.for_each_chunk_mut(&mut out, oh * ow, |c, plane| {
        let src = input.plane(c);
        let w = input.width;
        for (oy, &(y0, y1, ly)) in ys.iter().enumerate() {
            for (ox, &(x0, x1, lx)) in xs.iter().enumerate() {
                let top = (1.0 - lx) * src[y0 * w + x0] as f64 + lx * src[y0 * w + x1] as f64;
                let bot = (1.0 - lx) * src[y1 * w + x0] as f64 + lx * src[y1 * w + x1] as f64;
                plane[oy * ow + ox] = ((1.0 - ly) * top + ly * bot) as f32;
            }
        }
    });
    Ok(Tensor {
        channels: input.channels,
        height: oh,
        width: ow,
        data: out,
    })
}

/// Per output index: (lower source index, upper source index, weight of upper).
fn axis_taps(len: usize, factor: usize) -> Vec<(usize, usize, f64)> {
    (0..len * factor)
        .map(|i| {
            let src = ((i as f64 + 0.5) / factor as f64 - 0.5).max(0.0);
            let i0 = (src.floor() as usize).min(len - 1);
            let i1 = (i0 + 1).min(len - 1);
            let l = if i0 == i1 { 0.0 } else { src - i0 as f64 };
            (i0, i1, l)
        })
        .collect()
}

/// Centered spatial crop; the window starts at `floor((h - target_h) / 2)`.
pub fn crop_center(input: &Tensor, target_h: usize, target_w: usize) -> Result<Tensor> {
    if target_h == 0 || target_w == 0 {
        return Err(Error::param("crop target", "must be positive"));
    }
    if target_h > input.height || target_w > input.width {
        return Err(Error::shape(
            "crop_center",
            format!("target within {}x{}", input.height, input.width),
            format!("{target_h}x{target_w}"),
        ));
    }
    if target_h == input.height && target_w == input.width {
        return Ok(input.clone());
    }
    let oy = (input.height - target_h) / 2;
    let ox = (input.width - target_w) / 2;
    let mut data = Vec::with_capacity(input.channels * target_h * target_w);
    for c in 0..input.channels {
        let src = input.plane(c);
        for y in 0..target_h {
            let start = (y + oy) * input.width + ox;
            data.extend_from_slice(&src[start..start + target_w]);
        }
    }
    Ok(Tensor {
        channels: input.channels,
        height: target_h,
        width: target_w,
        data,
    })
}

pub fn add(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    a.check_same_shape(b, "add")?;
    let data = a.data.iter().zip(&b.data).map(|(x, y)| x + y).collect();
    Ok(Tensor {
        channels: a.channels,
        height: a.height,
        width: a.width,
        data,
    })
}

/// `(1/N) * sum |a_i - b_i|`, accumulated in `f64`.
pub fn mean_abs_diff(a: &Tensor, b: &Tensor) -> Result<f64> {
    a.check_same_shape(b, "mean_abs_diff")?;
    let sum: f64 = a
        .data
        .iter()
        .zip(&b.data)
        .map(|(x, y)| (*x as f64 - *y as f64).abs())
        .sum();
    Ok(sum / a.data.len() as f64)
}
