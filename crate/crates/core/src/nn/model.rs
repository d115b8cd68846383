use super::layer::{
    activation_backward, activation_forward, power_norm_backward, power_norm_forward, Activation,
    ConvGeom, LayerSpec,
};
use crate::error::{Error, Result};
use crate::real::Real;
use crate::rng::SimRng;
use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;

/// A named parameter tensor stored flat in row-major order.
#[derive(Clone, Debug, PartialEq)]
pub struct Param<T> {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<T>,
}

/// Per-parameter gradients, aligned with [`Model::params`].
pub type Gradients<T> = Vec<Vec<T>>;

/// A sequential network.
#[derive(Clone, Debug, PartialEq)]
pub struct Model<T> {
    input_dim: usize,
    layers: Vec<LayerSpec>,
    dims: Vec<usize>,
    params: Vec<Param<T>>,
    param_slot: Vec<Option<usize>>,
}

enum Saved<T> {
    Input(Array2<T>),
    Output(Array2<T>),
    Cols(Array2<T>),
}

/// Intermediate values recorded by [`Model::forward_cached`].
pub struct Tape<T> {
    saved: Vec<Saved<T>>,
    output: Array2<T>,
}

impl<T: Real> Tape<T> {
    pub fn output(&self) -> &Array2<T> {
        &self.output
    }

    pub fn layers_run(&self) -> usize {
        self.saved.len()
    }
}

impl<T: Real> Model<T> {
    /// Builds a model with all parameters zero.
    pub fn zeros(input_dim: usize, layers: Vec<LayerSpec>) -> Result<Self> {
        let mut dims = vec![input_dim];
        let mut params = Vec::new();
        let mut param_slot = Vec::with_capacity(layers.len());
        for (i, spec) in layers.iter().enumerate() {
            let cur = *dims.last().unwrap();
            if let Some(need) = spec.input_dim() {
                if need != cur {
                    return Err(Error::ShapeMismatch(format!(
                        "layer {i} ({}) expects {need} inputs but receives {cur}",
                        layer_name(spec)
                    )));
                }
            }
            if matches!(spec, LayerSpec::Conv2d { .. }) && spec.conv_output_hw().is_none() {
                return Err(Error::ShapeMismatch(format!(
                    "layer {i} (conv2d) kernel does not fit its padded input"
                )));
            }
            let shapes = spec.param_shapes();
            if shapes.is_empty() {
                param_slot.push(None);
            } else {
                param_slot.push(Some(params.len()));
                for (j, shape) in shapes.into_iter().enumerate() {
                    let n = shape.iter().product();
                    params.push(Param {
                        name: format!("layer{i}.{}", if j == 0 { "weight" } else { "bias" }),
                        shape,
                        data: vec![T::zero(); n],
                    });
                }
            }
            dims.push(spec.output_dim(cur));
        }
        Ok(Self {
            input_dim,
            layers,
            dims,
            params,
            param_slot,
        })
    }

    /// Builds a model with weights and biases drawn from `U(-b, b)`, `b = 1/√fan_in`.
    pub fn new(input_dim: usize, layers: Vec<LayerSpec>, rng: &mut SimRng) -> Result<Self> {
        let mut m = Self::zeros(input_dim, layers)?;
        for (i, spec) in m.layers.iter().enumerate() {
            if let Some(slot) = m.param_slot[i] {
                let bound = 1.0 / (spec.fan_in() as f64).sqrt();
                for p in &mut m.params[slot..slot + 2] {
                    for v in &mut p.data {
                        *v = T::lit(rng.random_range(-bound..bound));
                    }
                }
            }
        }
        Ok(m)
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn output_dim(&self) -> usize {
        *self.dims.last().unwrap()
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    pub fn params(&self) -> &[Param<T>] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Param<T>] {
        &mut self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.iter().map(|p| p.data.len()).sum()
    }

    /// Trailing softmax or sigmoid, if the model ends in one.
    pub fn head(&self) -> Option<Activation> {
        match self.layers.last() {
            Some(LayerSpec::Activation {
                function: f @ (Activation::Softmax | Activation::Sigmoid),
            }) => Some(*f),
            _ => None,
        }
    }

    /// Number of layers up to (not including) the trailing softmax/sigmoid head.
    pub fn body_len(&self) -> usize {
        self.layers.len() - usize::from(self.head().is_some())
    }

    pub fn cast<U: Real>(&self) -> Model<U> {
        Model {
            input_dim: self.input_dim,
            layers: self.layers.clone(),
            dims: self.dims.clone(),
            params: self
                .params
                .iter()
                .map(|p| Param {
                    name: p.name.clone(),
                    shape: p.shape.clone(),
                    data: p.data.iter().map(|v| U::lit(v.as_f64())).collect(),
                })
                .collect(),
            param_slot: self.param_slot.clone(),
        }
    }

    pub fn all_finite(&self) -> bool {
        self.params.iter().all(|p| p.data.iter().all(|v| v.is_finite()))
    }

    /// Replaces all parameters, checking names and shapes.
    pub fn set_params(&mut self, params: Vec<Param<T>>) -> Result<()> {
        if params.len() != self.params.len() {
            return Err(Error::ShapeMismatch(format!(
                "expected {} parameter tensors, got {}",
                self.params.len(),
                params.len()
            )));
        }
        for (have, new) in self.params.iter().zip(&params) {
            if have.shape != new.shape || new.data.len() != have.data.len() {
                return Err(Error::ShapeMismatch(format!(
                    "{}: expected shape {:?}, got {:?}",
                    have.name, have.shape, new.shape
                )));
            }
        }
        self.params = params;
        Ok(())
    }

    fn check_input(&self, x: &Array2<T>) -> Result<()> {
        if x.ncols() != self.input_dim {
            let first = self.layers.first().map(layer_name).unwrap_or("input");
            return Err(Error::ShapeMismatch(format!(
                "layer 0 ({first}) expects {} inputs but receives {}",
                self.input_dim,
                x.ncols()
            )));
        }
        Ok(())
    }

    fn dense_views(&self, slot: usize, inputs: usize, outputs: usize) -> (ArrayView2<'_, T>, ArrayView1<'_, T>) {
        let w = ArrayView2::from_shape((inputs, outputs), &self.params[slot].data).expect("dense weight");
        let b = ArrayView1::from(&self.params[slot + 1].data[..]);
        (w, b)
    }

    /// Output of layer `i`, plus the im2col matrix for convolutions.
    fn layer_forward(&self, i: usize, x: &Array2<T>) -> (Array2<T>, Option<Array2<T>>) {
        match self.layers[i] {
            LayerSpec::Dense { inputs, outputs } => {
                let (w, b) = self.dense_views(self.param_slot[i].unwrap(), inputs, outputs);
                let mut y = x.dot(&w);
                y += &b;
                (y, None)
            }
            LayerSpec::Conv2d { .. } => {
                let g = ConvGeom::from_spec(&self.layers[i]).unwrap();
                let slot = self.param_slot[i].unwrap();
                let cols = g.im2col(x);
                let w = g.weight_view(&self.params[slot].data);
                let mut y = cols.dot(&w.t());
                y += &ArrayView1::from(&self.params[slot + 1].data[..]);
                (g.rows_to_chw(&y, x.nrows()), Some(cols))
            }
            LayerSpec::Activation { function } => {
                (activation_forward(function, x), None)
            }
            LayerSpec::PowerNorm { energy } => (power_norm_forward(energy, x), None),
        }
    }

    /// Inference forward pass.
    pub fn forward(&self, x: &Array2<T>) -> Result<Array2<T>> {
        self.forward_upto(x, self.layers.len())
    }

    /// Forward pass through the first `n_layers` layers.
    pub fn forward_upto(&self, x: &Array2<T>, n_layers: usize) -> Result<Array2<T>> {
        self.check_input(x)?;
        let mut cur = x.clone();
        for i in 0..n_layers.min(self.layers.len()) {
            cur = self.layer_forward(i, &cur).0;
        }
        Ok(cur)
    }

    /// Forward pass through the first `n_layers` layers, recording what
    /// [`backward`](Self::backward) needs.
    pub fn forward_cached(&self, x: &Array2<T>, n_layers: usize) -> Result<Tape<T>> {
        self.check_input(x)?;
        let n = n_layers.min(self.layers.len());
        let mut saved = Vec::with_capacity(n);
        let mut cur = x.clone();
        for i in 0..n {
            let (y, cols) = self.layer_forward(i, &cur);
            let s = match (&self.layers[i], cols) {
                (_, Some(cols)) => Saved::Cols(cols),
                (LayerSpec::Activation { .. }, None) => Saved::Output(y.clone()),
                _ => Saved::Input(std::mem::replace(&mut cur, Array2::zeros((0, 0)))),
            };
            saved.push(s);
            cur = y;
        }
        Ok(Tape { saved, output: cur })
    }

    /// Reverse pass. Returns parameter gradients (when requested) and the
    /// gradient with respect to the model input.
    pub fn backward(
        &self,
        tape: &Tape<T>,
        grad_output: &Array2<T>,
        want_param_grads: bool,
    ) -> Result<(Option<Gradients<T>>, Array2<T>)> {
        if grad_output.dim() != tape.output.dim() {
            return Err(Error::ShapeMismatch(format!(
                "output gradient {:?} does not match output {:?}",
                grad_output.dim(),
                tape.output.dim()
            )));
        }
        let mut grads: Option<Gradients<T>> = want_param_grads
            .then(|| self.params.iter().map(|p| vec![T::zero(); p.data.len()]).collect());
        let mut g = grad_output.clone();
        for i in (0..tape.saved.len()).rev() {
            g = match (&self.layers[i], &tape.saved[i]) {
                (&LayerSpec::Dense { inputs, outputs }, Saved::Input(x)) => {
                    let slot = self.param_slot[i].unwrap();
                    let (w, _) = self.dense_views(slot, inputs, outputs);
                    if let Some(gr) = grads.as_mut() {
                        let dw = x.t().dot(&g);
                        gr[slot].copy_from_slice(dw.as_standard_layout().as_slice().unwrap());
                        let db = g.sum_axis(Axis(0));
                        gr[slot + 1].copy_from_slice(db.as_slice().unwrap());
                    }
                    g.dot(&w.t())
                }
                (LayerSpec::Conv2d { .. }, Saved::Cols(cols)) => {
                    let geom = ConvGeom::from_spec(&self.layers[i]).unwrap();
                    let slot = self.param_slot[i].unwrap();
                    let gy = geom.chw_to_rows(&g);
                    if let Some(gr) = grads.as_mut() {
                        let dw = gy.t().dot(cols);
                        gr[slot].copy_from_slice(dw.as_standard_layout().as_slice().unwrap());
                        let db: Array1<T> = gy.sum_axis(Axis(0));
                        gr[slot + 1].copy_from_slice(db.as_slice().unwrap());
                    }
                    let w = geom.weight_view(&self.params[slot].data);
                    let dcols = gy.dot(&w);
                    geom.col2im(&dcols, g.nrows())
                }
                (&LayerSpec::Activation { function }, Saved::Output(y)) => {
                    activation_backward(function, y, &g)
                }
                (&LayerSpec::PowerNorm { energy }, Saved::Input(x)) => power_norm_backward(energy, x, &g),
                _ => unreachable!("tape does not match layer {i}"),
            };
        }
        Ok((grads, g.as_standard_layout().into_owned()))
    }
}

pub(crate) fn layer_name(spec: &LayerSpec) -> &'static str {
    match spec {
        LayerSpec::Dense { .. } => "dense",
        LayerSpec::Conv2d { .. } => "conv2d",
        LayerSpec::Activation { .. } => "activation",
        LayerSpec::PowerNorm { .. } => "power_norm",
    }
}

/// Incremental construction of a [`Model`] with shape inference.
#[derive(Clone, Debug)]
pub struct ModelBuilder {
    input_dim: usize,
    current: usize,
    volume: Option<(usize, usize, usize)>,
    layers: Vec<LayerSpec>,
}

impl ModelBuilder {
    pub fn new(input_dim: usize) -> Self {
        Self {
            input_dim,
            current: input_dim,
            volume: None,
            layers: Vec::new(),
        }
    }

    /// Reads the current flat features as `channels × height × width`.
    pub fn volume(mut self, channels: usize, height: usize, width: usize) -> Self {
        assert_eq!(
            channels * height * width,
            self.current,
            "volume does not match feature count"
        );
        self.volume = Some((channels, height, width));
        self
    }

    pub fn dense(mut self, outputs: usize) -> Self {
        self.layers.push(LayerSpec::Dense {
            inputs: self.current,
            outputs,
        });
        self.current = outputs;
        self.volume = None;
        self
    }

    pub fn conv2d(
        mut self,
        out_channels: usize,
        kernel: [usize; 2],
        stride: [usize; 2],
        padding: [usize; 2],
    ) -> Self {
        let (c, h, w) = self.volume.unwrap_or((1, 1, self.current));
        let spec = LayerSpec::Conv2d {
            in_channels: c,
            height: h,
            width: w,
            out_channels,
            kernel,
            stride,
            padding,
        };
        let (oh, ow) = spec.conv_output_hw().unwrap_or((0, 0));
        self.layers.push(spec);
        self.current = out_channels * oh * ow;
        self.volume = Some((out_channels, oh, ow));
        self
    }

    pub fn activation(mut self, function: Activation) -> Self {
        self.layers.push(LayerSpec::Activation { function });
        self
    }

    pub fn relu(self) -> Self {
        self.activation(Activation::Relu)
    }

    pub fn leaky_relu(self) -> Self {
        self.activation(Activation::leaky_relu())
    }

    pub fn elu(self) -> Self {
        self.activation(Activation::elu())
    }

    pub fn sigmoid(self) -> Self {
        self.activation(Activation::Sigmoid)
    }

    pub fn softmax(self) -> Self {
        self.activation(Activation::Softmax)
    }

    pub fn power_norm(mut self, energy: f64) -> Self {
        self.layers.push(LayerSpec::PowerNorm { energy });
        self
    }

    pub fn current_dim(&self) -> usize {
        self.current
    }

    pub fn specs(&self) -> (usize, Vec<LayerSpec>) {
        (self.input_dim, self.layers.clone())
    }

    pub fn build<T: Real>(self, rng: &mut SimRng) -> Result<Model<T>> {
        Model::new(self.input_dim, self.layers, rng)
    }
}
