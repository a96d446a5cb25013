use std::sync::atomic::{AtomicU64, Ordering};

use ndarray::{concatenate, s, Array1, Array2, ArrayView2, Axis};

use crate::error::{Error, Result};

static NEXT_NETWORK_ID: AtomicU64 = AtomicU64::new(1);

fn next_id() -> u64 {
    NEXT_NETWORK_ID.fetch_add(1, Ordering::Relaxed)
}

/// Topology of a trunk-plus-heads network.
///
/// The trunk is a stack of `(affine, leaky ReLU)` layers. Each head is a single
/// affine layer over `[trunk output ++ extra inputs of that head]`.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkSpec {
    pub input_dim: usize,
    pub hidden_dims: Vec<usize>,
    pub output_dims: Vec<usize>,
    pub head_extra_input_dims: Vec<usize>,
    pub leaky_slope: f64,
}

impl NetworkSpec {
    pub const DEFAULT_HIDDEN: [usize; 2] = [64, 64];
    pub const DEFAULT_LEAKY_SLOPE: f64 = 0.01;

    /// Single-headed network with the default hidden layers.
    pub fn single(input_dim: usize, output_dim: usize) -> Self {
        Self {
            input_dim,
            hidden_dims: Self::DEFAULT_HIDDEN.to_vec(),
            output_dims: vec![output_dim],
            head_extra_input_dims: vec![0],
            leaky_slope: Self::DEFAULT_LEAKY_SLOPE,
        }
    }

    pub fn with_hidden(mut self, hidden: &[usize]) -> Self {
        self.hidden_dims = hidden.to_vec();
        self
    }

    pub fn with_leaky_slope(mut self, slope: f64) -> Self {
        self.leaky_slope = slope;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Shape(m));
        if self.input_dim == 0 {
            return bad("input_dim must be >= 1".into());
        }
        if self.hidden_dims.contains(&0) {
            return bad(format!("hidden dims must be >= 1, got {:?}", self.hidden_dims));
        }
        if self.output_dims.is_empty() || self.output_dims.contains(&0) {
            return bad(format!(
                "output dims must be non-empty and >= 1, got {:?}",
                self.output_dims
            ));
        }
        if self.head_extra_input_dims.len() != self.output_dims.len() {
            return bad(format!(
                "{} heads but {} extra-input entries",
                self.output_dims.len(),
                self.head_extra_input_dims.len()
            ));
        }
        if !(self.leaky_slope > 0.0 && self.leaky_slope < 1.0) {
            return Err(Error::config("leaky_slope", "must lie in (0, 1)"));
        }
        Ok(())
    }

    pub fn n_heads(&self) -> usize {
        self.output_dims.len()
    }

    pub fn trunk_output_dim(&self) -> usize {
        self.hidden_dims.last().copied().unwrap_or(self.input_dim)
    }
}

/// Hidden-layer shape shared by every network a run builds.
#[derive(Debug, Clone, PartialEq)]
pub struct Arch {
    pub hidden_dims: Vec<usize>,
    pub leaky_slope: f64,
}

impl Default for Arch {
    fn default() -> Self {
        Self {
            hidden_dims: NetworkSpec::DEFAULT_HIDDEN.to_vec(),
            leaky_slope: NetworkSpec::DEFAULT_LEAKY_SLOPE,
        }
    }
}

impl Arch {
    pub fn single(&self, input_dim: usize, output_dim: usize) -> NetworkSpec {
        self.multi(input_dim, &[output_dim], &[0])
    }

    pub fn multi(&self, input_dim: usize, output_dims: &[usize], head_extra_input_dims: &[usize]) -> NetworkSpec {
        NetworkSpec {
            input_dim,
            hidden_dims: self.hidden_dims.clone(),
            output_dims: output_dims.to_vec(),
            head_extra_input_dims: head_extra_input_dims.to_vec(),
            leaky_slope: self.leaky_slope,
        }
    }
}

/// Weight `(in × out)` and bias `(out)` of one affine layer.
///
/// Also used as the container for that layer's gradients and Adam moments.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Dense {
    pub fn zeros(fan_in: usize, fan_out: usize) -> Self {
        Self {
            weight: Array2::zeros((fan_in, fan_out)),
            bias: Array1::zeros(fan_out),
        }
    }

    fn uniform(fan_in: usize, fan_out: usize, rng: &mut impl rand::Rng) -> Self {
        let bound = 1.0 / (fan_in as f64).sqrt();
        let weight = Array2::from_shape_simple_fn((fan_in, fan_out), || rng.gen_range(-bound..=bound));
        Self {
            weight,
            bias: Array1::zeros(fan_out),
        }
    }

    pub fn fan_in(&self) -> usize {
        self.weight.nrows()
    }

    pub fn fan_out(&self) -> usize {
        self.weight.ncols()
    }

    fn affine(&self, x: &ArrayView2<f64>) -> Array2<f64> {
        x.dot(&self.weight) + &self.bias
    }
}

/// Layer-ordered parameter tensors: trunk layers, then head layers.
///
/// `Network`, `Gradients` and Adam's moment buffers share this layout.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamSet {
    pub trunk: Vec<Dense>,
    pub heads: Vec<Dense>,
}

impl ParamSet {
    fn zeros_for(spec: &NetworkSpec) -> Self {
        let mut trunk = Vec::with_capacity(spec.hidden_dims.len());
        let mut prev = spec.input_dim;
        for &h in &spec.hidden_dims {
            trunk.push(Dense::zeros(prev, h));
            prev = h;
        }
        let heads = spec
            .output_dims
            .iter()
            .zip(&spec.head_extra_input_dims)
            .map(|(&o, &e)| Dense::zeros(prev + e, o))
            .collect();
        Self { trunk, heads }
    }

    pub fn layers(&self) -> impl Iterator<Item = &Dense> {
        self.trunk.iter().chain(self.heads.iter())
    }

    pub fn layers_mut(&mut self) -> impl Iterator<Item = &mut Dense> {
        self.trunk.iter_mut().chain(self.heads.iter_mut())
    }

    /// Number of flat tensors (two per layer).
    pub fn num_tensors(&self) -> usize {
        2 * (self.trunk.len() + self.heads.len())
    }

    pub fn tensor(&self, t: usize) -> &[f64] {
        let layer = self.layers().nth(t / 2).expect("tensor index out of range");
        let s = if t.is_multiple_of(2) {
            layer.weight.as_slice()
        } else {
            layer.bias.as_slice()
        };
        s.expect("parameters are stored contiguously")
    }

    pub fn tensor_mut(&mut self, t: usize) -> &mut [f64] {
        let layer = self.layers_mut().nth(t / 2).expect("tensor index out of range");
        let s = if t.is_multiple_of(2) {
            layer.weight.as_slice_mut()
        } else {
            layer.bias.as_slice_mut()
        };
        s.expect("parameters are stored contiguously")
    }

    pub fn num_params(&self) -> usize {
        self.layers().map(|l| l.weight.len() + l.bias.len()).sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = f64> + '_ {
        self.layers()
            .flat_map(|l| l.weight.iter().copied().chain(l.bias.iter().copied()))
    }

    pub fn all_finite(&self) -> bool {
        self.iter().all(f64::is_finite)
    }

    pub fn same_shape(&self, other: &ParamSet) -> bool {
        self.trunk.len() == other.trunk.len()
            && self.heads.len() == other.heads.len()
            && self
                .layers()
                .zip(other.layers())
                .all(|(a, b)| a.weight.dim() == b.weight.dim() && a.bias.dim() == b.bias.dim())
    }

    pub fn add_assign(&mut self, other: &ParamSet) {
        debug_assert!(self.same_shape(other));
        for (a, b) in self.layers_mut().zip(other.layers()) {
            a.weight += &b.weight;
            a.bias += &b.bias;
        }
    }

    pub fn scale(&mut self, k: f64) {
        for l in self.layers_mut() {
            l.weight *= k;
            l.bias *= k;
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.iter().fold(0.0, |m, x| m.max(x.abs()))
    }
}

/// Per-parameter gradients, shape-congruent with the owning network.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients(pub ParamSet);

impl Gradients {
    pub fn zeros_like(net: &Network) -> Self {
        Gradients(ParamSet::zeros_for(&net.spec))
    }

    pub fn add_assign(&mut self, other: &Gradients) {
        self.0.add_assign(&other.0);
    }

    pub fn scale(&mut self, k: f64) {
        self.0.scale(k);
    }

    pub fn max_abs(&self) -> f64 {
        self.0.max_abs()
    }

    pub fn all_finite(&self) -> bool {
        self.0.all_finite()
    }
}

/// A trunk-plus-heads MLP with `f64` parameters.
#[derive(Debug, Clone)]
pub struct Network {
    spec: NetworkSpec,
    params: ParamSet,
    id: u64,
    version: u64,
}

impl PartialEq for Network {
    fn eq(&self, other: &Self) -> bool {
        self.spec == other.spec && self.params == other.params
    }
}

/// Activations recorded by `Network::forward` for use by `Network::backward`.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    network_id: u64,
    network_version: u64,
    batch: usize,
    /// Input to each trunk layer.
    trunk_inputs: Vec<Array2<f64>>,
    /// Pre-activation of each trunk layer.
    trunk_pre: Vec<Array2<f64>>,
    /// `[trunk output ++ extra]` seen by each head.
    head_inputs: Vec<Array2<f64>>,
}

impl ForwardCache {
    pub fn batch(&self) -> usize {
        self.batch
    }

    /// Smallest `|pre-activation|` over all trunk units and samples.
    pub fn min_abs_preactivation(&self) -> f64 {
        self.trunk_pre
            .iter()
            .flat_map(|z| z.iter())
            .fold(f64::INFINITY, |m, z| m.min(z.abs()))
    }
}

pub fn leaky_relu(z: f64, slope: f64) -> f64 {
    if z > 0.0 {
        z
    } else {
        slope * z
    }
}

fn leaky_relu_grad(z: f64, slope: f64) -> f64 {
    if z > 0.0 {
        1.0
    } else {
        slope
    }
}

impl Network {
    /// Uniform `±1/√fan_in` weights, zero biases.
    pub fn init(spec: NetworkSpec, rng: &mut impl rand::Rng) -> Result<Self> {
        spec.validate()?;
        let mut params = ParamSet::zeros_for(&spec);
        for layer in params.layers_mut() {
            *layer = Dense::uniform(layer.fan_in(), layer.fan_out(), rng);
        }
        Ok(Self::from_params(spec, params))
    }

    /// All-zero parameters.
    pub fn zeros(spec: NetworkSpec) -> Result<Self> {
        spec.validate()?;
        let params = ParamSet::zeros_for(&spec);
        Ok(Self::from_params(spec, params))
    }

    pub(crate) fn from_params(spec: NetworkSpec, params: ParamSet) -> Self {
        Self {
            spec,
            params,
            id: next_id(),
            version: 0,
        }
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    /// Mutable parameter access. Invalidates outstanding forward caches.
    pub fn params_mut(&mut self) -> &mut ParamSet {
        self.version += 1;
        &mut self.params
    }

    pub fn num_params(&self) -> usize {
        self.params.num_params()
    }

    fn check_inputs(&self, trunk_input: &ArrayView2<f64>, extras: &[ArrayView2<f64>]) -> Result<()> {
        let spec = &self.spec;
        if trunk_input.ncols() != spec.input_dim {
            return Err(Error::Shape(format!(
                "trunk input has {} columns, network expects {}",
                trunk_input.ncols(),
                spec.input_dim
            )));
        }
        let all_plain = spec.head_extra_input_dims.iter().all(|&e| e == 0);
        if extras.is_empty() && all_plain {
            return Ok(());
        }
        if extras.len() != spec.n_heads() {
            return Err(Error::Shape(format!(
                "{} head extra inputs supplied for {} heads",
                extras.len(),
                spec.n_heads()
            )));
        }
        for (k, (x, &e)) in extras.iter().zip(&spec.head_extra_input_dims).enumerate() {
            if x.ncols() != e || (e > 0 && x.nrows() != trunk_input.nrows()) {
                return Err(Error::Shape(format!(
                    "head {k} extra input is {}x{}, expected {}x{e}",
                    x.nrows(),
                    x.ncols(),
                    trunk_input.nrows()
                )));
            }
        }
        Ok(())
    }

    fn head_input(trunk_out: &Array2<f64>, extra: Option<&ArrayView2<f64>>) -> Array2<f64> {
        match extra {
            Some(x) if x.ncols() > 0 => {
                concatenate(Axis(1), &[trunk_out.view(), x.view()]).expect("rows checked by check_inputs")
            }
            _ => trunk_out.clone(),
        }
    }

    /// Batched forward pass: rows are samples. Returns one output matrix per head.
    ///
    /// `head_extra_inputs` may be empty when no head takes extra inputs.
    pub fn forward(
        &self,
        trunk_input: ArrayView2<f64>,
        head_extra_inputs: &[ArrayView2<f64>],
    ) -> Result<(Vec<Array2<f64>>, ForwardCache)> {
        self.check_inputs(&trunk_input, head_extra_inputs)?;
        let slope = self.spec.leaky_slope;
        let mut trunk_inputs = Vec::with_capacity(self.params.trunk.len());
        let mut trunk_pre = Vec::with_capacity(self.params.trunk.len());
        let mut x = trunk_input.to_owned();
        for layer in &self.params.trunk {
            let z = layer.affine(&x.view());
            let a = z.mapv(|v| leaky_relu(v, slope));
            trunk_inputs.push(std::mem::replace(&mut x, a));
            trunk_pre.push(z);
        }
        let mut outputs = Vec::with_capacity(self.params.heads.len());
        let mut head_inputs = Vec::with_capacity(self.params.heads.len());
        for (k, head) in self.params.heads.iter().enumerate() {
            let h = Self::head_input(&x, head_extra_inputs.get(k));
            outputs.push(head.affine(&h.view()));
            head_inputs.push(h);
        }
        let cache = ForwardCache {
            network_id: self.id,
            network_version: self.version,
            batch: trunk_input.nrows(),
            trunk_inputs,
            trunk_pre,
            head_inputs,
        };
        Ok((outputs, cache))
    }

    /// Forward pass without recording activations.
    pub fn predict(
        &self,
        trunk_input: ArrayView2<f64>,
        head_extra_inputs: &[ArrayView2<f64>],
    ) -> Result<Vec<Array2<f64>>> {
        self.check_inputs(&trunk_input, head_extra_inputs)?;
        let slope = self.spec.leaky_slope;
        let mut x = trunk_input.to_owned();
        for layer in &self.params.trunk {
            x = layer.affine(&x.view()).mapv_into(|v| leaky_relu(v, slope));
        }
        Ok(self
            .params
            .heads
            .iter()
            .enumerate()
            .map(|(k, head)| {
                let h = Self::head_input(&x, head_extra_inputs.get(k));
                head.affine(&h.view())
            })
            .collect())
    }

    /// Single-sample convenience wrapper around [`Network::predict`].
    pub fn predict_one(&self, trunk_input: &[f64], head_extra_inputs: &[&[f64]]) -> Result<Vec<Vec<f64>>> {
        let x = ArrayView2::from_shape((1, trunk_input.len()), trunk_input).map_err(|e| Error::Shape(e.to_string()))?;
        let extras = head_extra_inputs
            .iter()
            .map(|e| ArrayView2::from_shape((1, e.len()), e).map_err(|err| Error::Shape(err.to_string())))
            .collect::<Result<Vec<_>>>()?;
        let out = self.predict(x, &extras)?;
        Ok(out.into_iter().map(|o| o.into_raw_vec_and_offset().0).collect())
    }

    /// Reverse-mode gradients of a scalar loss given `∂loss/∂output` for every head.
    ///
    /// Heads share the trunk, so their contributions to trunk gradients add.
    pub fn backward(&self, cache: &ForwardCache, head_output_grads: &[ArrayView2<f64>]) -> Result<Gradients> {
        if cache.network_id != self.id || cache.network_version != self.version {
            return Err(Error::Cache(format!(
                "cache from network {}v{}, backward on network {}v{}",
                cache.network_id, cache.network_version, self.id, self.version
            )));
        }
        if cache.trunk_pre.len() != self.params.trunk.len() || cache.head_inputs.len() != self.params.heads.len() {
            return Err(Error::Cache("layer count differs".into()));
        }
        if head_output_grads.len() != self.params.heads.len() {
            return Err(Error::Shape(format!(
                "{} output gradients for {} heads",
                head_output_grads.len(),
                self.params.heads.len()
            )));
        }
        let slope = self.spec.leaky_slope;
        let trunk_dim = self.spec.trunk_output_dim();
        let mut grads = ParamSet::zeros_for(&self.spec);
        let mut d_trunk_out = Array2::<f64>::zeros((cache.batch, trunk_dim));

        for (k, head) in self.params.heads.iter().enumerate() {
            let g = &head_output_grads[k];
            if g.dim() != (cache.batch, head.fan_out()) {
                return Err(Error::Shape(format!(
                    "head {k} output gradient is {:?}, expected {:?}",
                    g.dim(),
                    (cache.batch, head.fan_out())
                )));
            }
            let h = &cache.head_inputs[k];
            grads.heads[k].weight = h.t().dot(g);
            grads.heads[k].bias = g.sum_axis(Axis(0));
            d_trunk_out += &g.dot(&head.weight.slice(s![..trunk_dim, ..]).t());
        }

        let mut d_out = d_trunk_out;
        for l in (0..self.params.trunk.len()).rev() {
            let z = &cache.trunk_pre[l];
            let mut d_pre = d_out;
            d_pre.zip_mut_with(z, |d, &zv| *d *= leaky_relu_grad(zv, slope));
            let x = &cache.trunk_inputs[l];
            grads.trunk[l].weight = x.t().dot(&d_pre);
            grads.trunk[l].bias = d_pre.sum_axis(Axis(0));
            d_out = if l > 0 {
                d_pre.dot(&self.params.trunk[l].weight.t())
            } else {
                Array2::zeros((0, 0))
            };
        }
        Ok(Gradients(grads))
    }
}
