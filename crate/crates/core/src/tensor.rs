//! Dense row-major `(y, x, c)` feature maps and the convolution kernels used
//! by the encoder.

use crate::error::{shape_err, Result};

/// A dense `height × width × channels` map of `f64` values stored row-major
/// in `(y, x, c)` order.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMap {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<f64>,
}

impl FeatureMap {
    pub fn zeros(height: usize, width: usize, channels: usize) -> Self {
        Self::filled(height, width, channels, 0.0)
    }

    pub fn filled(height: usize, width: usize, channels: usize, value: f64) -> Self {
        Self {
            height,
            width,
            channels,
            data: vec![value; height * width * channels],
        }
    }

    pub fn from_vec(height: usize, width: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != height * width * channels {
            return Err(shape_err!(
                "{} values cannot fill a {}x{}x{} map",
                data.len(),
                height,
                width,
                channels
            ));
        }
        Ok(Self {
            height,
            width,
            channels,
            data,
        })
    }

    pub fn from_fn(
        height: usize,
        width: usize,
        channels: usize,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Self {
        let mut data = Vec::with_capacity(height * width * channels);
        for y in 0..height {
            for x in 0..width {
                for c in 0..channels {
                    data.push(f(y, x, c));
                }
            }
        }
        Self {
            height,
            width,
            channels,
            data,
        }
    }

    /// A `1×1×1` map holding a single value.
    pub fn scalar(value: f64) -> Self {
        Self::filled(1, 1, 1, value)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.height, self.width, self.channels)
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

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn index(&self, y: usize, x: usize, c: usize) -> usize {
        (y * self.width + x) * self.channels + c
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize, c: usize) -> f64 {
        self.data[self.index(y, x, c)]
    }

    #[inline]
    pub fn set(&mut self, y: usize, x: usize, c: usize, v: f64) {
        let i = self.index(y, x, c);
        self.data[i] = v;
    }

    /// All channel values of one pixel.
    #[inline]
    pub fn pixel(&self, y: usize, x: usize) -> &[f64] {
        let i = self.index(y, x, 0);
        &self.data[i..i + self.channels]
    }

    #[inline]
    pub fn pixel_mut(&mut self, y: usize, x: usize) -> &mut [f64] {
        let i = self.index(y, x, 0);
        let c = self.channels;
        &mut self.data[i..i + c]
    }

    /// Value of a `1×1×1` map.
    pub fn scalar_value(&self) -> Result<f64> {
        if self.data.len() != 1 {
            return Err(shape_err!("expected a scalar, got {:?}", self.dims()));
        }
        Ok(self.data[0])
    }

    pub fn same_dims(&self, other: &Self) -> bool {
        self.dims() == other.dims()
    }

    pub fn ensure_same_dims(&self, other: &Self, what: &str) -> Result<()> {
        if !self.same_dims(other) {
            return Err(shape_err!(
                "{what}: {:?} does not match {:?}",
                self.dims(),
                other.dims()
            ));
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            height: self.height,
            width: self.width,
            channels: self.channels,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Compensated (Neumaier) sum.
    pub fn sum(&self) -> f64 {
        let (mut sum, mut comp) = (0.0f64, 0.0f64);
        for &v in &self.data {
            let t = sum + v;
            comp += if sum.abs() >= v.abs() { (sum - t) + v } else { (v - t) + sum };
            sum = t;
        }
        sum + comp
    }

    pub fn mean(&self) -> f64 {
        if self.data.is_empty() {
            0.0
        } else {
            self.sum() / self.data.len() as f64
        }
    }

    /// `self += other` elementwise.
    pub fn accumulate(&mut self, other: &Self) {
        debug_assert!(self.same_dims(other));
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += *b;
        }
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Keeps channels in `order`, in that order.
    pub fn select_channels(&self, order: &[usize]) -> Self {
        Self::from_fn(self.height, self.width, order.len(), |y, x, c| {
            self.get(y, x, order[c])
        })
    }

    /// `(y, x)` coordinate map in pixel units, two channels.
    pub fn coordinates(height: usize, width: usize) -> Self {
        Self::from_fn(height, width, 2, |y, x, c| if c == 0 { y as f64 } else { x as f64 })
    }
}

/// Shape of a convolution: kernels are stored as `k × k × (out · in)` maps
/// with channel index `o · in + i`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvGeometry {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
}

impl ConvGeometry {
    pub fn output_size(&self, h: usize, w: usize) -> (usize, usize) {
        (
            (h + 2 * self.pad - self.kernel) / self.stride + 1,
            (w + 2 * self.pad - self.kernel) / self.stride + 1,
        )
    }
}

pub(crate) fn conv_geometry(
    input: &FeatureMap,
    kernel: &FeatureMap,
    stride: usize,
    pad: usize,
) -> Result<ConvGeometry> {
    let k = kernel.height();
    if kernel.width() != k {
        return Err(shape_err!("conv kernel must be square, got {}x{}", k, kernel.width()));
    }
    if k.is_multiple_of(2) {
        return Err(shape_err!("conv kernel size must be odd, got {k}"));
    }
    if stride != 1 && stride != 2 {
        return Err(shape_err!("conv stride must be 1 or 2, got {stride}"));
    }
    let cin = input.channels();
    if cin == 0 || kernel.channels() == 0 || !kernel.channels().is_multiple_of(cin) {
        return Err(shape_err!(
            "kernel with {} channels does not fit an input with {} channels",
            kernel.channels(),
            cin
        ));
    }
    if input.height() + 2 * pad < k || input.width() + 2 * pad < k {
        return Err(shape_err!(
            "{}x{} input too small for a {k}x{k} kernel with padding {pad}",
            input.height(),
            input.width()
        ));
    }
    Ok(ConvGeometry {
        in_channels: cin,
        out_channels: kernel.channels() / cin,
        kernel: k,
        stride,
        pad,
    })
}

/// Zero-padded 2-D cross-correlation.
pub fn conv2d(input: &FeatureMap, kernel: &FeatureMap, stride: usize, pad: usize) -> Result<FeatureMap> {
    let g = conv_geometry(input, kernel, stride, pad)?;
    Ok(conv2d_forward(input, kernel, &g))
}

pub(crate) fn conv2d_forward(input: &FeatureMap, kernel: &FeatureMap, g: &ConvGeometry) -> FeatureMap {
    let (h, w) = (input.height(), input.width());
    let (oh, ow) = g.output_size(h, w);
    let (cin, cout, k) = (g.in_channels, g.out_channels, g.kernel);
    let mut out = FeatureMap::zeros(oh, ow, cout);
    let kd = kernel.data();
    let id = input.data();
    let od = out.data_mut();
    for oy in 0..oh {
        for ox in 0..ow {
            let obase = (oy * ow + ox) * cout;
            for ky in 0..k {
                let iy = (oy * g.stride + ky) as isize - g.pad as isize;
                if iy < 0 || iy >= h as isize {
                    continue;
                }
                for kx in 0..k {
                    let ix = (ox * g.stride + kx) as isize - g.pad as isize;
                    if ix < 0 || ix >= w as isize {
                        continue;
                    }
                    let ibase = (iy as usize * w + ix as usize) * cin;
                    let kbase = (ky * k + kx) * cin * cout;
                    let pix = &id[ibase..ibase + cin];
                    for o in 0..cout {
                        let kr = &kd[kbase + o * cin..kbase + (o + 1) * cin];
                        let mut acc = 0.0;
                        for i in 0..cin {
                            acc += pix[i] * kr[i];
                        }
                        od[obase + o] += acc;
                    }
                }
            }
        }
    }
    out
}

/// Gradients of a convolution with respect to its input and kernel.
pub(crate) fn conv2d_backward(
    input: &FeatureMap,
    kernel: &FeatureMap,
    g: &ConvGeometry,
    grad_out: &FeatureMap,
) -> (FeatureMap, FeatureMap) {
    let (h, w) = (input.height(), input.width());
    let (oh, ow) = (grad_out.height(), grad_out.width());
    let (cin, cout, k) = (g.in_channels, g.out_channels, g.kernel);
    let mut gin = FeatureMap::zeros(h, w, cin);
    let mut gk = FeatureMap::zeros(k, k, cin * cout);
    let kd = kernel.data();
    let id = input.data();
    let gd = grad_out.data();
    {
        let gid = gin.data_mut();
        let gkd = gk.data_mut();
        for oy in 0..oh {
            for ox in 0..ow {
                let obase = (oy * ow + ox) * cout;
                let go = &gd[obase..obase + cout];
                for ky in 0..k {
                    let iy = (oy * g.stride + ky) as isize - g.pad as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    for kx in 0..k {
                        let ix = (ox * g.stride + kx) as isize - g.pad as isize;
                        if ix < 0 || ix >= w as isize {
                            continue;
                        }
                        let ibase = (iy as usize * w + ix as usize) * cin;
                        let kbase = (ky * k + kx) * cin * cout;
                        for o in 0..cout {
                            let gv = go[o];
                            if gv == 0.0 {
                                continue;
                            }
                            let kb = kbase + o * cin;
                            for i in 0..cin {
                                gid[ibase + i] += gv * kd[kb + i];
                                gkd[kb + i] += gv * id[ibase + i];
                            }
                        }
                    }
                }
            }
        }
    }
    (gin, gk)
}

pub fn relu(input: &FeatureMap) -> FeatureMap {
    input.map(|v| if v > 0.0 { v } else { 0.0 })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sum_is_compensated() {
        let m = FeatureMap::from_vec(1, 4, 1, vec![1e16, 1.0, -1e16, 1.0]).unwrap();
        assert_eq!(m.sum(), 2.0);
    }

    #[test]
    fn identity_kernel_returns_input() {
        let input = FeatureMap::from_fn(3, 3, 1, |y, x, _| (y * 3 + x) as f64);
        let kernel = FeatureMap::scalar(1.0);
        let out = conv2d(&input, &kernel, 1, 0).unwrap();
        assert_eq!(out, input);
    }

    #[test]
    fn strided_ones_kernel_matches_hand_values() {
        let input = FeatureMap::filled(4, 4, 1, 1.0);
        let kernel = FeatureMap::filled(3, 3, 1, 1.0);
        let out = conv2d(&input, &kernel, 2, 1).unwrap();
        assert_eq!(out.dims(), (2, 2, 1));
        // Output (0,0) sees a 2x2 in-bounds window, the others a 2x3/3x2/3x3 one.
        assert_eq!(out.data(), &[4.0, 6.0, 6.0, 9.0]);
    }

    #[test]
    fn same_padding_preserves_size() {
        for k in [1, 3, 5, 7] {
            let input = FeatureMap::filled(9, 6, 2, 0.5);
            let kernel = FeatureMap::filled(k, k, 6, 0.1);
            let out = conv2d(&input, &kernel, 1, (k - 1) / 2).unwrap();
            assert_eq!((out.height(), out.width(), out.channels()), (9, 6, 3));
        }
    }

    #[test]
    fn rejects_bad_kernels() {
        let input = FeatureMap::zeros(4, 4, 2);
        assert!(conv2d(&input, &FeatureMap::zeros(2, 2, 2), 1, 0).is_err());
        assert!(conv2d(&input, &FeatureMap::zeros(3, 3, 3), 1, 1).is_err());
        assert!(conv2d(&input, &FeatureMap::zeros(3, 3, 2), 3, 1).is_err());
    }

    #[test]
    fn relu_examples() {
        let m = FeatureMap::from_vec(1, 3, 1, vec![-1.0, 0.0, 2.0]).unwrap();
        assert_eq!(relu(&m).data(), &[0.0, 0.0, 2.0]);
        let neg = FeatureMap::filled(2, 2, 2, -0.3);
        assert!(relu(&neg).data().iter().all(|&v| v == 0.0));
    }
}
