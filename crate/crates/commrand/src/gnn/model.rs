//! Model parameters, block-restricted adjacency normalization, forward pass,
//! and the backward pass for softmax cross-entropy.

use ndarray::{s, Array1, Array2, Axis, ScalarOperand};
use num_traits::{Float, FromPrimitive};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::NodeId;
use crate::minibatch::Block;
use crate::seeds;

/// Element type for model math: f32 for training storage, f64 for oracle
/// and gradient-check headroom.
pub trait Scalar:
    ndarray::LinalgScalar
    + Float
    + ScalarOperand
    + FromPrimitive
    + std::fmt::Debug
    + std::fmt::Display
    + Send
    + Sync
{
}

impl Scalar for f32 {}
impl Scalar for f64 {}

#[inline]
fn fl<F: Scalar>(x: f64) -> F {
    F::from_f64(x).expect("finite constant")
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Arch {
    Gcn,
    SageMean,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub arch: Arch,
    pub num_layers: usize,
    pub in_dim: usize,
    pub hidden_dim: usize,
    pub num_classes: usize,
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_layers == 0 {
            return Err(Error::invalid("model needs at least one layer"));
        }
        if self.in_dim == 0 || self.hidden_dim == 0 || self.num_classes == 0 {
            return Err(Error::invalid("model dims must be positive"));
        }
        Ok(())
    }

    /// (input, output) width of layer `l`.
    pub fn layer_dims(&self, l: usize) -> (usize, usize) {
        let input = if l == 0 { self.in_dim } else { self.hidden_dim };
        let output = if l + 1 == self.num_layers {
            self.num_classes
        } else {
            self.hidden_dim
        };
        (input, output)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LayerParams<F> {
    pub w_neigh: Array2<F>,
    /// Separate self path; present for SAGE-mean only.
    pub w_self: Option<Array2<F>>,
    pub bias: Array1<F>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams<F> {
    pub cfg: ModelConfig,
    pub layers: Vec<LayerParams<F>>,
}

impl<F: Scalar> ModelParams<F> {
    /// Xavier-uniform weights, zero biases; layer `l` draws from an rng
    /// seeded by (seed, l).
    pub fn xavier(cfg: ModelConfig, seed: u64) -> Result<ModelParams<F>> {
        cfg.validate()?;
        let mut layers = Vec::with_capacity(cfg.num_layers);
        for l in 0..cfg.num_layers {
            let mut rng = ChaCha8Rng::seed_from_u64(seeds::derive_seed(seed, &[l as u64]));
            let (fan_in, fan_out) = cfg.layer_dims(l);
            let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let mut draw = |rows: usize, cols: usize| -> Array2<F> {
                Array2::from_shape_fn((rows, cols), |_| {
                    fl::<F>(rng.random::<f64>() * 2.0 * bound - bound)
                })
            };
            let w_neigh = draw(fan_in, fan_out);
            let w_self = match cfg.arch {
                Arch::Gcn => None,
                Arch::SageMean => Some(draw(fan_in, fan_out)),
            };
            layers.push(LayerParams {
                w_neigh,
                w_self,
                bias: Array1::zeros(fan_out),
            });
        }
        Ok(ModelParams { cfg, layers })
    }

    /// Same shapes, all zeros; used for gradients and optimizer moments.
    pub fn zeros_like(&self) -> ModelParams<F> {
        let layers = self
            .layers
            .iter()
            .map(|l| LayerParams {
                w_neigh: Array2::zeros(l.w_neigh.raw_dim()),
                w_self: l.w_self.as_ref().map(|w| Array2::zeros(w.raw_dim())),
                bias: Array1::zeros(l.bias.raw_dim()),
            })
            .collect();
        ModelParams {
            cfg: self.cfg,
            layers,
        }
    }

    pub fn cast<G: Scalar>(&self) -> ModelParams<G> {
        let layers = self
            .layers
            .iter()
            .map(|l| LayerParams {
                w_neigh: l.w_neigh.mapv(|x| fl::<G>(x.to_f64().unwrap())),
                w_self: l
                    .w_self
                    .as_ref()
                    .map(|w| w.mapv(|x| fl::<G>(x.to_f64().unwrap()))),
                bias: l.bias.mapv(|x| fl::<G>(x.to_f64().unwrap())),
            })
            .collect();
        ModelParams {
            cfg: self.cfg,
            layers,
        }
    }
}

/// Block-restricted normalized message weights.
#[derive(Clone, Debug)]
pub struct BlockAdjacency<F> {
    pub num_src: usize,
    pub num_dst: usize,
    pub edges: Vec<(usize, usize)>,
    pub weights: Vec<F>,
}

/// Compute normalized message weights for one block.
///
/// GCN: w(u->v) = 1/sqrt(indeg(v) * outdeg(u)), degrees counted over the
/// block's sampled edges with the self edge included. SAGE-mean:
/// w(u->v) = 1/indeg(v); the self path is applied separately from
/// `w_self`.
pub fn normalize_adjacency<F: Scalar>(block: &Block, arch: Arch) -> BlockAdjacency<F> {
    let mut indeg = vec![0usize; block.num_dst()];
    let mut outdeg = vec![0usize; block.num_src()];
    for &(s, d) in &block.edges {
        indeg[d] += 1;
        outdeg[s] += 1;
    }
    let weights = block
        .edges
        .iter()
        .map(|&(s, d)| match arch {
            Arch::Gcn => fl::<F>(1.0 / ((indeg[d] * outdeg[s]) as f64).sqrt()),
            Arch::SageMean => fl::<F>(1.0 / indeg[d] as f64),
        })
        .collect();
    BlockAdjacency {
        num_src: block.num_src(),
        num_dst: block.num_dst(),
        edges: block.edges.clone(),
        weights,
    }
}

impl<F: Scalar> BlockAdjacency<F> {
    /// y = A x, aggregating source rows into destination rows.
    pub fn apply(&self, x: &Array2<F>) -> Array2<F> {
        let mut out = Array2::zeros((self.num_dst, x.ncols()));
        for (&(s, d), &w) in self.edges.iter().zip(&self.weights) {
            let src = x.row(s);
            let mut dst = out.row_mut(d);
            dst.scaled_add(w, &src);
        }
        out
    }

    /// x = A^T y, scattering destination rows back to source rows.
    pub fn apply_transpose(&self, y: &Array2<F>) -> Array2<F> {
        let mut out = Array2::zeros((self.num_src, y.ncols()));
        for (&(s, d), &w) in self.edges.iter().zip(&self.weights) {
            let dst = y.row(d);
            let mut src = out.row_mut(s);
            src.scaled_add(w, &dst);
        }
        out
    }
}

/// Per-layer activation cache for the backward pass.
pub struct Activations<F> {
    /// Input rows to each layer (source side).
    pub layer_inputs: Vec<Array2<F>>,
    /// A x per layer (destination side).
    pub aggregated: Vec<Array2<F>>,
    /// Pre-nonlinearity outputs per layer.
    pub pre_activations: Vec<Array2<F>>,
}

/// Apply all blocks in sequence: ReLU between layers, identity after the
/// last. Returns root logits and the activation cache.
pub fn forward<F: Scalar>(
    params: &ModelParams<F>,
    adjs: &[BlockAdjacency<F>],
    x_in: &Array2<F>,
) -> Result<(Array2<F>, Activations<F>)> {
    let cfg = &params.cfg;
    if adjs.len() != cfg.num_layers {
        return Err(Error::shape(format!(
            "{} blocks for {} layers",
            adjs.len(),
            cfg.num_layers
        )));
    }
    if x_in.nrows() != adjs[0].num_src || x_in.ncols() != cfg.in_dim {
        return Err(Error::shape(format!(
            "input is {}x{}, expected {}x{}",
            x_in.nrows(),
            x_in.ncols(),
            adjs[0].num_src,
            cfg.in_dim
        )));
    }
    for l in 0..adjs.len() - 1 {
        if adjs[l].num_dst != adjs[l + 1].num_src {
            return Err(Error::shape(format!(
                "block {l} dst != block {} src",
                l + 1
            )));
        }
    }

    let mut h = x_in.clone();
    let mut layer_inputs = Vec::with_capacity(cfg.num_layers);
    let mut aggregated = Vec::with_capacity(cfg.num_layers);
    let mut pre_activations = Vec::with_capacity(cfg.num_layers);
    for (l, layer) in params.layers.iter().enumerate() {
        let agg = adjs[l].apply(&h);
        let mut z = agg.dot(&layer.w_neigh);
        if let Some(w_self) = &layer.w_self {
            z = z + h.slice(s![..adjs[l].num_dst, ..]).dot(w_self);
        }
        z = z + &layer.bias;
        layer_inputs.push(h);
        aggregated.push(agg);
        h = if l + 1 < cfg.num_layers {
            z.mapv(|x| if x > F::zero() { x } else { F::zero() })
        } else {
            z.clone()
        };
        pre_activations.push(z);
    }
    Ok((
        h,
        Activations {
            layer_inputs,
            aggregated,
            pre_activations,
        },
    ))
}

/// Mean softmax cross-entropy and its gradient w.r.t. the logits.
pub fn softmax_cross_entropy<F: Scalar>(
    logits: &Array2<F>,
    labels: &[usize],
) -> Result<(F, Array2<F>)> {
    if logits.nrows() != labels.len() {
        return Err(Error::shape(format!(
            "{} logit rows for {} labels",
            logits.nrows(),
            labels.len()
        )));
    }
    let n = labels.len();
    let inv_n = fl::<F>(1.0 / n as f64);
    let mut dlogits = logits.clone();
    let mut loss = F::zero();
    for (i, row) in dlogits.rows_mut().into_iter().enumerate() {
        let row = row.into_slice_memory_order().expect("contiguous row");
        let max = row.iter().cloned().fold(F::neg_infinity(), F::max);
        let mut denom = F::zero();
        for x in row.iter_mut() {
            *x = (*x - max).exp();
            denom = denom + *x;
        }
        let label = labels[i];
        if label >= row.len() {
            return Err(Error::invalid(format!(
                "label {label} >= {} classes",
                row.len()
            )));
        }
        loss = loss - (row[label] / denom).ln() * inv_n;
        for (j, x) in row.iter_mut().enumerate() {
            let p = *x / denom;
            let target = if j == label { F::one() } else { F::zero() };
            *x = (p - target) * inv_n;
        }
    }
    Ok((loss, dlogits))
}

/// Backward pass through the cached activations. Returns the mean
/// cross-entropy over the roots and gradients shaped like `params`.
/// Weight decay is not folded into the loss; callers add the decoupled
/// `lambda * W` term to the returned gradients.
pub fn loss_and_backward<F: Scalar>(
    params: &ModelParams<F>,
    adjs: &[BlockAdjacency<F>],
    acts: &Activations<F>,
    labels: &[usize],
) -> Result<(F, ModelParams<F>)> {
    let cfg = &params.cfg;
    let logits = acts.pre_activations.last().expect("at least one layer");
    let (loss, mut dz) = softmax_cross_entropy(logits, labels)?;
    let mut grads = params.zeros_like();

    for l in (0..cfg.num_layers).rev() {
        let layer = &params.layers[l];
        grads.layers[l].w_neigh = acts.aggregated[l].t().dot(&dz);
        if let Some(w_self) = &layer.w_self {
            let self_rows = acts.layer_inputs[l].slice(s![..adjs[l].num_dst, ..]);
            grads.layers[l].w_self = Some(self_rows.t().dot(&dz));
            let _ = w_self;
        }
        grads.layers[l].bias = dz.sum_axis(Axis(0));
        if l == 0 {
            break;
        }
        let d_agg = dz.dot(&layer.w_neigh.t());
        let mut dx = adjs[l].apply_transpose(&d_agg);
        if let Some(w_self) = &layer.w_self {
            let add = dz.dot(&w_self.t());
            let mut prefix = dx.slice_mut(s![..adjs[l].num_dst, ..]);
            prefix.scaled_add(F::one(), &add);
        }
        // through the ReLU of the previous layer
        let gate = &acts.pre_activations[l - 1];
        dz = ndarray::Zip::from(&dx).and(gate).map_collect(|&g, &z| {
            if z > F::zero() {
                g
            } else {
                F::zero()
            }
        });
    }
    Ok((loss, grads))
}

/// Copy feature rows for the given node ids, casting to the model scalar.
pub fn gather_rows<F: Scalar>(features: &Array2<f32>, ids: &[NodeId]) -> Array2<F> {
    let mut out = Array2::zeros((ids.len(), features.ncols()));
    for (i, &v) in ids.iter().enumerate() {
        for (j, &x) in features.row(v).iter().enumerate() {
            out[(i, j)] = fl::<F>(x as f64);
        }
    }
    out
}
