use crate::real::Real;
use ndarray::{Array2, ArrayView2, Axis, Zip};
use serde::{Deserialize, Serialize};

pub const DEFAULT_LEAKY_SLOPE: f64 = 0.01;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Activation {
    Relu,
    LeakyRelu { slope: f64 },
    Elu { alpha: f64 },
    Sigmoid,
    Softmax,
}

impl Activation {
    pub fn leaky_relu() -> Self {
        Activation::LeakyRelu {
            slope: DEFAULT_LEAKY_SLOPE,
        }
    }

    pub fn elu() -> Self {
        Activation::Elu { alpha: 1.0 }
    }
}

/// One step of a sequential model. Features are always flat; convolutions
/// read them as `channels × height × width` in row-major order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum LayerSpec {
    Dense {
        inputs: usize,
        outputs: usize,
    },
    Conv2d {
        in_channels: usize,
        height: usize,
        width: usize,
        out_channels: usize,
        kernel: [usize; 2],
        stride: [usize; 2],
        padding: [usize; 2],
    },
    Activation {
        function: Activation,
    },
    /// Scales each row to squared norm `energy`.
    PowerNorm {
        energy: f64,
    },
}

impl LayerSpec {
    pub fn conv_output_hw(&self) -> Option<(usize, usize)> {
        match *self {
            LayerSpec::Conv2d {
                height,
                width,
                kernel,
                stride,
                padding,
                ..
            } => {
                let ph = height + 2 * padding[0];
                let pw = width + 2 * padding[1];
                if ph < kernel[0] || pw < kernel[1] || stride[0] == 0 || stride[1] == 0 {
                    return None;
                }
                Some(((ph - kernel[0]) / stride[0] + 1, (pw - kernel[1]) / stride[1] + 1))
            }
            _ => None,
        }
    }

    /// Required input width, if the layer fixes one.
    pub fn input_dim(&self) -> Option<usize> {
        match *self {
            LayerSpec::Dense { inputs, .. } => Some(inputs),
            LayerSpec::Conv2d {
                in_channels,
                height,
                width,
                ..
            } => Some(in_channels * height * width),
            _ => None,
        }
    }

    pub fn output_dim(&self, input: usize) -> usize {
        match *self {
            LayerSpec::Dense { outputs, .. } => outputs,
            LayerSpec::Conv2d { out_channels, .. } => {
                let (oh, ow) = self.conv_output_hw().unwrap_or((0, 0));
                out_channels * oh * ow
            }
            _ => input,
        }
    }

    /// Parameter tensor shapes: weight then bias.
    pub fn param_shapes(&self) -> Vec<Vec<usize>> {
        match *self {
            LayerSpec::Dense { inputs, outputs } => vec![vec![inputs, outputs], vec![outputs]],
            LayerSpec::Conv2d {
                in_channels,
                out_channels,
                kernel,
                ..
            } => vec![
                vec![out_channels, in_channels, kernel[0], kernel[1]],
                vec![out_channels],
            ],
            _ => Vec::new(),
        }
    }

    pub fn fan_in(&self) -> usize {
        match *self {
            LayerSpec::Dense { inputs, .. } => inputs,
            LayerSpec::Conv2d {
                in_channels,
                kernel,
                ..
            } => in_channels * kernel[0] * kernel[1],
            _ => 0,
        }
    }
}

pub(crate) fn activation_forward<T: Real>(f: Activation, x: &Array2<T>) -> Array2<T> {
    match f {
        Activation::Relu => x.mapv(|v| if v > T::zero() { v } else { T::zero() }),
        Activation::LeakyRelu { slope } => {
            let s = T::lit(slope);
            x.mapv(|v| if v > T::zero() { v } else { v * s })
        }
        Activation::Elu { alpha } => {
            let a = T::lit(alpha);
            x.mapv(|v| if v > T::zero() { v } else { a * (v.exp() - T::one()) })
        }
        Activation::Sigmoid => x.mapv(sigmoid),
        Activation::Softmax => softmax_rows(x),
    }
}

/// Backward through an activation, given its saved output `y`.
pub(crate) fn activation_backward<T: Real>(f: Activation, y: &Array2<T>, dy: &Array2<T>) -> Array2<T> {
    let mut dx = dy.clone();
    match f {
        Activation::Relu => Zip::from(&mut dx).and(y).for_each(|d, &o| {
            if o <= T::zero() {
                *d = T::zero();
            }
        }),
        Activation::LeakyRelu { slope } => {
            let s = T::lit(slope);
            Zip::from(&mut dx).and(y).for_each(|d, &o| {
                if o <= T::zero() {
                    *d *= s;
                }
            })
        }
        Activation::Elu { alpha } => {
            let a = T::lit(alpha);
            Zip::from(&mut dx).and(y).for_each(|d, &o| {
                if o <= T::zero() {
                    *d *= o + a;
                }
            })
        }
        Activation::Sigmoid => Zip::from(&mut dx)
            .and(y)
            .for_each(|d, &o| *d *= o * (T::one() - o)),
        Activation::Softmax => {
            for (mut drow, yrow) in dx.axis_iter_mut(Axis(0)).zip(y.axis_iter(Axis(0))) {
                let dot: T = drow.iter().zip(yrow.iter()).map(|(a, b)| *a * *b).sum();
                Zip::from(&mut drow).and(&yrow).for_each(|d, &o| *d = o * (*d - dot));
            }
        }
    }
    dx
}

pub fn sigmoid<T: Real>(v: T) -> T {
    if v >= T::zero() {
        T::one() / (T::one() + (-v).exp())
    } else {
        let e = v.exp();
        e / (T::one() + e)
    }
}

pub fn softmax_rows<T: Real>(x: &Array2<T>) -> Array2<T> {
    let mut out = x.clone();
    for mut row in out.axis_iter_mut(Axis(0)) {
        let max = row.iter().fold(T::neg_infinity(), |m, &v| m.max(v));
        row.mapv_inplace(|v| (v - max).exp());
        let sum: T = row.iter().copied().sum();
        row.mapv_inplace(|v| v / sum);
    }
    out
}

pub(crate) fn power_norm_forward<T: Real>(energy: f64, x: &Array2<T>) -> Array2<T> {
    let target = T::lit(energy.sqrt());
    let mut out = x.clone();
    for mut row in out.axis_iter_mut(Axis(0)) {
        let n: T = row.iter().map(|v| *v * *v).sum::<T>().sqrt();
        if n > T::zero() {
            let k = target / n;
            row.mapv_inplace(|v| v * k);
        }
    }
    out
}

pub(crate) fn power_norm_backward<T: Real>(energy: f64, x: &Array2<T>, dy: &Array2<T>) -> Array2<T> {
    let target = T::lit(energy.sqrt());
    let mut dx = dy.clone();
    for (mut drow, xrow) in dx.axis_iter_mut(Axis(0)).zip(x.axis_iter(Axis(0))) {
        let n: T = xrow.iter().map(|v| *v * *v).sum::<T>().sqrt();
        if n == T::zero() {
            drow.fill(T::zero());
            continue;
        }
        // d(s x/|x|) = (s/|x|)(I - x̂x̂ᵀ)
        let proj: T = drow.iter().zip(xrow.iter()).map(|(d, v)| *d * *v).sum::<T>() / (n * n);
        let k = target / n;
        Zip::from(&mut drow)
            .and(&xrow)
            .for_each(|d, &v| *d = k * (*d - proj * v));
    }
    dx
}

/// Geometry of one convolution, pre-resolved.
#[derive(Clone, Copy, Debug)]
pub(crate) struct ConvGeom {
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub oc: usize,
    pub kh: usize,
    pub kw: usize,
    pub sh: usize,
    pub sw: usize,
    pub ph: usize,
    pub pw: usize,
    pub oh: usize,
    pub ow: usize,
}

impl ConvGeom {
    pub fn from_spec(spec: &LayerSpec) -> Option<Self> {
        if let LayerSpec::Conv2d {
            in_channels,
            height,
            width,
            out_channels,
            kernel,
            stride,
            padding,
        } = *spec
        {
            let (oh, ow) = spec.conv_output_hw()?;
            Some(Self {
                c: in_channels,
                h: height,
                w: width,
                oc: out_channels,
                kh: kernel[0],
                kw: kernel[1],
                sh: stride[0],
                sw: stride[1],
                ph: padding[0],
                pw: padding[1],
                oh,
                ow,
            })
        } else {
            None
        }
    }

    fn patch(&self) -> usize {
        self.c * self.kh * self.kw
    }

    /// Input offset feeding each `(output position, patch element)` slot,
    /// or `usize::MAX` where the patch hangs over the padding.
    fn gather_map(&self) -> Vec<usize> {
        let mut map = Vec::with_capacity(self.oh * self.ow * self.patch());
        for oy in 0..self.oh {
            for ox in 0..self.ow {
                for ch in 0..self.c {
                    for ky in 0..self.kh {
                        let iy = (oy * self.sh + ky) as isize - self.ph as isize;
                        for kx in 0..self.kw {
                            let ix = (ox * self.sw + kx) as isize - self.pw as isize;
                            let inside = iy >= 0 && ix >= 0 && (iy as usize) < self.h && (ix as usize) < self.w;
                            map.push(if inside {
                                (ch * self.h + iy as usize) * self.w + ix as usize
                            } else {
                                usize::MAX
                            });
                        }
                    }
                }
            }
        }
        map
    }

    /// `(B, C·H·W)` → `(B·OH·OW, C·KH·KW)`.
    pub fn im2col<T: Real>(&self, x: &Array2<T>) -> Array2<T> {
        let b = x.nrows();
        let map = self.gather_map();
        let mut cols = vec![T::zero(); b * map.len()];
        for (xrow, dst) in x.axis_iter(Axis(0)).zip(cols.chunks_exact_mut(map.len().max(1))) {
            let xs = xrow.as_slice().expect("contiguous row");
            for (d, &m) in dst.iter_mut().zip(&map) {
                if m != usize::MAX {
                    *d = xs[m];
                }
            }
        }
        Array2::from_shape_vec((b * self.oh * self.ow, self.patch()), cols).expect("im2col shape")
    }

    pub fn col2im<T: Real>(&self, cols: &Array2<T>, batch: usize) -> Array2<T> {
        let map = self.gather_map();
        let mut dx = Array2::<T>::zeros((batch, self.c * self.h * self.w));
        let cols = cols.as_standard_layout();
        let flat = cols.as_slice().expect("standard layout");
        for (mut drow, src) in dx.axis_iter_mut(Axis(0)).zip(flat.chunks_exact(map.len().max(1))) {
            let ds = drow.as_slice_mut().expect("contiguous row");
            for (&v, &m) in src.iter().zip(&map) {
                if m != usize::MAX {
                    ds[m] += v;
                }
            }
        }
        dx
    }

    /// `(B·OH·OW, OC)` → `(B, OC·OH·OW)`.
    pub fn rows_to_chw<T: Real>(&self, y: &Array2<T>, batch: usize) -> Array2<T> {
        let spatial = self.oh * self.ow;
        let mut out = Array2::<T>::zeros((batch, self.oc * spatial));
        for bi in 0..batch {
            let mut orow = out.row_mut(bi);
            let os = orow.as_slice_mut().expect("contiguous row");
            for s in 0..spatial {
                let yr = y.row(bi * spatial + s);
                for (o, v) in yr.iter().enumerate() {
                    os[o * spatial + s] = *v;
                }
            }
        }
        out
    }

    /// Inverse of [`rows_to_chw`](Self::rows_to_chw).
    pub fn chw_to_rows<T: Real>(&self, g: &Array2<T>) -> Array2<T> {
        let batch = g.nrows();
        let spatial = self.oh * self.ow;
        let mut out = Array2::<T>::zeros((batch * spatial, self.oc));
        for bi in 0..batch {
            let grow = g.row(bi);
            let gs = grow.as_slice().expect("contiguous row");
            for s in 0..spatial {
                let mut orow = out.row_mut(bi * spatial + s);
                for (o, v) in orow.iter_mut().enumerate() {
                    *v = gs[o * spatial + s];
                }
            }
        }
        out
    }

    pub fn weight_view<'a, T: Real>(&self, data: &'a [T]) -> ArrayView2<'a, T> {
        ArrayView2::from_shape((self.oc, self.patch()), data).expect("weight shape")
    }
}
