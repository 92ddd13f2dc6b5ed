//! Edge-convolution point-cloud encoders.
//!
//! Each block finds, for every point, its `k` nearest neighbours in the
//! block's input feature space (excluding the point itself), forms the edge
//! feature `[x_i, x_j - x_i]`, applies an affine map and a leaky rectifier,
//! and max-aggregates over the neighbours. After the last block a global max
//! pool over points feeds an affine head that emits the embedding.
//!
//! The affine edge map splits as `x_i·C + (x_j - x_i)·E + b`, and the
//! rectifier is monotone, so the neighbour max is taken on `x_j·E` before the
//! nonlinearity. That is the same function as the per-edge form, evaluated in
//! `O(n·c_in·c_out)` instead of `O(n·k·c_in·c_out)`.
//!
//! Gradients are hand-derived. Neighbour sets and max selections are held
//! fixed during the backward pass (the usual subgradient convention).

use std::fs;
use std::path::Path;

use nalgebra::DMatrix;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seeded_rng;

pub const LEAKY_SLOPE: f64 = 0.2;
pub const DEFAULT_EMBEDDING_DIM: usize = 10;
pub const DEFAULT_LAYER_WIDTHS: [usize; 3] = [64, 64, 128];

const CHECKPOINT_FORMAT: &str = "dmvfc-encoder-v1";
/// Fibers per gradient-accumulation chunk. Fixed so reductions do not depend
/// on the number of worker threads.
const GRAD_CHUNK: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum View {
    Geometric,
    Functional,
}

impl View {
    pub fn name(self) -> &'static str {
        match self {
            View::Geometric => "geometric",
            View::Functional => "functional",
        }
    }
}

impl std::str::FromStr for View {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "geometric" => Ok(View::Geometric),
            "functional" => Ok(View::Functional),
            other => Err(Error::param(format!("unknown view {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub view: View,
    pub input_channels: usize,
    pub num_points: usize,
    pub knn_k: usize,
    pub layer_widths: Vec<usize>,
    pub embedding_dim: usize,
}

impl EncoderConfig {
    /// 25 resampled points with RAS coordinates.
    pub fn geometric() -> Self {
        EncoderConfig {
            view: View::Geometric,
            input_channels: 3,
            num_points: crate::geometry::DEFAULT_NUM_POINTS,
            knn_k: 5,
            layer_widths: DEFAULT_LAYER_WIDTHS.to_vec(),
            embedding_dim: DEFAULT_EMBEDDING_DIM,
        }
    }

    /// Two endpoints with 600 downsampled time points each.
    pub fn functional() -> Self {
        EncoderConfig {
            view: View::Functional,
            input_channels: crate::functional::DEFAULT_DOWNSAMPLED_LEN,
            num_points: 2,
            knn_k: 1,
            layer_widths: DEFAULT_LAYER_WIDTHS.to_vec(),
            embedding_dim: DEFAULT_EMBEDDING_DIM,
        }
    }

    pub fn for_view(view: View) -> Self {
        match view {
            View::Geometric => Self::geometric(),
            View::Functional => Self::functional(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_channels == 0 {
            return Err(Error::param("input_channels must be positive"));
        }
        if self.num_points < 2 {
            return Err(Error::param("num_points must be at least 2"));
        }
        if self.knn_k == 0 || self.knn_k >= self.num_points {
            return Err(Error::param(format!(
                "knn_k = {} must be in 1..{}",
                self.knn_k, self.num_points
            )));
        }
        if self.layer_widths.is_empty() || self.layer_widths.contains(&0) {
            return Err(Error::param("layer_widths must be nonempty and positive"));
        }
        if self.embedding_dim < 2 {
            return Err(Error::param("embedding_dim must be at least 2"));
        }
        Ok(())
    }
}

/// One fiber's view input: `num_points × input_channels`.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    pub fiber_id: u64,
    pub points: DMatrix<f64>,
}

/// Embeddings for a batch of fibers, one row each.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingBatch {
    pub matrix: DMatrix<f64>,
    pub fiber_ids: Vec<u64>,
}

impl EmbeddingBatch {
    pub fn new(matrix: DMatrix<f64>, fiber_ids: Vec<u64>) -> Result<Self> {
        if matrix.nrows() != fiber_ids.len() {
            return Err(Error::param(format!(
                "{} embedding rows for {} ids",
                matrix.nrows(),
                fiber_ids.len()
            )));
        }
        if matrix.iter().any(|v| !v.is_finite()) {
            return Err(Error::param("non-finite embedding"));
        }
        Ok(EmbeddingBatch { matrix, fiber_ids })
    }

    pub fn len(&self) -> usize {
        self.fiber_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fiber_ids.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.matrix.ncols()
    }
}

/// Euclidean distance between embedding rows `i` and `j`.
pub fn pairwise_embedding_distance(e: &EmbeddingBatch, i: usize, j: usize) -> Result<f64> {
    let n = e.len();
    if i >= n || j >= n {
        return Err(Error::param(format!(
            "indices ({i}, {j}) out of range for {n} embeddings"
        )));
    }
    Ok((e.matrix.row(i) - e.matrix.row(j)).norm())
}

/// A named parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamTensor {
    pub name: String,
    pub value: DMatrix<f64>,
}

/// Ordered parameter tensors; also used for gradients and optimizer moments.
#[derive(Debug, Clone, PartialEq)]
pub struct Params {
    pub tensors: Vec<ParamTensor>,
}

impl Params {
    pub fn zeros_like(&self) -> Params {
        Params {
            tensors: self
                .tensors
                .iter()
                .map(|t| ParamTensor {
                    name: t.name.clone(),
                    value: DMatrix::zeros(t.value.nrows(), t.value.ncols()),
                })
                .collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.tensors.iter().map(|t| t.value.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn locate(&self, mut flat: usize) -> (usize, usize) {
        for (k, t) in self.tensors.iter().enumerate() {
            if flat < t.value.len() {
                return (k, flat);
            }
            flat -= t.value.len();
        }
        panic!("parameter index out of range");
    }

    /// Scalar at a flat index over all tensors.
    pub fn get(&self, flat: usize) -> f64 {
        let (k, i) = self.locate(flat);
        self.tensors[k].value.as_slice()[i]
    }

    pub fn set(&mut self, flat: usize, v: f64) {
        let (k, i) = self.locate(flat);
        self.tensors[k].value.as_mut_slice()[i] = v;
    }

    pub fn add_assign(&mut self, other: &Params) {
        for (a, b) in self.tensors.iter_mut().zip(&other.tensors) {
            a.value += &b.value;
        }
    }

    pub fn all_finite(&self) -> bool {
        self.tensors.iter().all(|t| t.value.iter().all(|v| v.is_finite()))
    }
}

struct BlockCache {
    input: DMatrix<f64>,
    pre: DMatrix<f64>,
    /// Neighbour index achieving the max, per `(point, channel)`, row-major.
    argmax: Vec<usize>,
}

/// Forward intermediates of one fiber, consumed by [`Encoder::backward`].
pub struct ForwardCache {
    blocks: Vec<BlockCache>,
    pooled: Vec<f64>,
    pool_argmax: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Encoder {
    cfg: EncoderConfig,
    params: Params,
}

fn leaky(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        LEAKY_SLOPE * x
    }
}

fn leaky_grad(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else {
        LEAKY_SLOPE
    }
}

/// `k` nearest other rows of `x` by squared distance, ties to lower index.
fn knn(x: &DMatrix<f64>, k: usize) -> Vec<Vec<usize>> {
    let n = x.nrows();
    let c = x.ncols();
    let mut d2 = vec![0.0; n * n];
    for i in 0..n {
        for j in (i + 1)..n {
            let mut s = 0.0;
            for ch in 0..c {
                let diff = x[(i, ch)] - x[(j, ch)];
                s += diff * diff;
            }
            d2[i * n + j] = s;
            d2[j * n + i] = s;
        }
    }
    (0..n)
        .map(|i| {
            let mut others: Vec<usize> = (0..n).filter(|&j| j != i).collect();
            others.sort_by(|&a, &b| d2[i * n + a].total_cmp(&d2[i * n + b]).then(a.cmp(&b)));
            others.truncate(k);
            others
        })
        .collect()
}

impl Encoder {
    /// Deterministic He-uniform initialisation for the blocks and
    /// Glorot-uniform for the head; biases start at zero.
    pub fn new(cfg: EncoderConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut rng = seeded_rng(seed, 0xE7C0_DE25);
        let mut tensors = Vec::new();
        let mut uniform = |rows: usize, cols: usize, bound: f64| {
            DMatrix::from_fn(rows, cols, |_, _| rng.random_range(-bound..bound))
        };
        let mut c_in = cfg.input_channels;
        for (l, &c_out) in cfg.layer_widths.iter().enumerate() {
            let bound = (6.0 / ((1.0 + LEAKY_SLOPE * LEAKY_SLOPE) * (2 * c_in) as f64)).sqrt();
            tensors.push(ParamTensor {
                name: format!("block{l}.center"),
                value: uniform(c_in, c_out, bound),
            });
            tensors.push(ParamTensor {
                name: format!("block{l}.edge"),
                value: uniform(c_in, c_out, bound),
            });
            tensors.push(ParamTensor {
                name: format!("block{l}.bias"),
                value: DMatrix::zeros(1, c_out),
            });
            c_in = c_out;
        }
        let bound = (6.0 / (c_in + cfg.embedding_dim) as f64).sqrt();
        tensors.push(ParamTensor {
            name: "head.weight".into(),
            value: uniform(c_in, cfg.embedding_dim, bound),
        });
        tensors.push(ParamTensor {
            name: "head.bias".into(),
            value: DMatrix::zeros(1, cfg.embedding_dim),
        });
        Ok(Encoder {
            cfg,
            params: Params { tensors },
        })
    }

    pub fn config(&self) -> &EncoderConfig {
        &self.cfg
    }

    pub fn params(&self) -> &Params {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut Params {
        &mut self.params
    }

    fn check_input(&self, x: &PointCloud) -> Result<()> {
        let shape = x.points.shape();
        if shape != (self.cfg.num_points, self.cfg.input_channels) {
            return Err(Error::param(format!(
                "fiber {}: input shape {:?} does not match encoder ({}, {})",
                x.fiber_id, shape, self.cfg.num_points, self.cfg.input_channels
            )));
        }
        Ok(())
    }

    /// Embedding of one fiber plus the intermediates needed for backprop.
    pub fn forward(&self, x: &PointCloud) -> Result<(Vec<f64>, ForwardCache)> {
        self.check_input(x)?;
        let n = self.cfg.num_points;
        let t = &self.params.tensors;
        let mut feats = x.points.clone();
        let mut blocks = Vec::with_capacity(self.cfg.layer_widths.len());
        for (l, &c_out) in self.cfg.layer_widths.iter().enumerate() {
            let center = &t[3 * l].value;
            let edge = &t[3 * l + 1].value;
            let bias = &t[3 * l + 2].value;
            let neighbours = knn(&feats, self.cfg.knn_k);
            let cu = &feats * center;
            let pv = &feats * edge;
            let mut pre = DMatrix::zeros(n, c_out);
            let mut argmax = vec![0usize; n * c_out];
            for i in 0..n {
                for c in 0..c_out {
                    let mut best_j = neighbours[i][0];
                    let mut best = pv[(best_j, c)];
                    for &j in &neighbours[i][1..] {
                        if pv[(j, c)] > best {
                            best = pv[(j, c)];
                            best_j = j;
                        }
                    }
                    argmax[i * c_out + c] = best_j;
                    pre[(i, c)] = cu[(i, c)] - pv[(i, c)] + best + bias[(0, c)];
                }
            }
            let out = pre.map(leaky);
            blocks.push(BlockCache {
                input: feats,
                pre,
                argmax,
            });
            feats = out;
        }
        let c_last = feats.ncols();
        let mut pooled = vec![0.0; c_last];
        let mut pool_argmax = vec![0usize; c_last];
        for c in 0..c_last {
            let mut best_i = 0;
            for i in 1..n {
                if feats[(i, c)] > feats[(best_i, c)] {
                    best_i = i;
                }
            }
            pool_argmax[c] = best_i;
            pooled[c] = feats[(best_i, c)];
        }
        let head_w = &t[t.len() - 2].value;
        let head_b = &t[t.len() - 1].value;
        let z: Vec<f64> = (0..self.cfg.embedding_dim)
            .map(|d| head_b[(0, d)] + (0..c_last).map(|c| pooled[c] * head_w[(c, d)]).sum::<f64>())
            .collect();
        Ok((
            z,
            ForwardCache {
                blocks,
                pooled,
                pool_argmax,
            },
        ))
    }

    /// Accumulates `∂loss/∂params` into `grads` given `dz = ∂loss/∂z`.
    pub fn backward(&self, cache: &ForwardCache, dz: &[f64], grads: &mut Params) {
        let t = &self.params.tensors;
        let nt = t.len();
        let n = self.cfg.num_points;
        let c_last = cache.pooled.len();
        let head_w = &t[nt - 2].value;

        let mut dpooled = vec![0.0; c_last];
        {
            let gw = &mut grads.tensors[nt - 2].value;
            for c in 0..c_last {
                let mut acc = 0.0;
                for (d, &g) in dz.iter().enumerate() {
                    gw[(c, d)] += cache.pooled[c] * g;
                    acc += head_w[(c, d)] * g;
                }
                dpooled[c] = acc;
            }
        }
        {
            let gb = &mut grads.tensors[nt - 1].value;
            for (d, &g) in dz.iter().enumerate() {
                gb[(0, d)] += g;
            }
        }

        let mut dout = DMatrix::zeros(n, c_last);
        for c in 0..c_last {
            dout[(cache.pool_argmax[c], c)] = dpooled[c];
        }

        for (l, block) in cache.blocks.iter().enumerate().rev() {
            let c_out = block.pre.ncols();
            let center = &t[3 * l].value;
            let edge = &t[3 * l + 1].value;
            let mut dpre = dout;
            for i in 0..n {
                for c in 0..c_out {
                    dpre[(i, c)] *= leaky_grad(block.pre[(i, c)]);
                }
            }
            let mut dpv = -&dpre;
            for i in 0..n {
                for c in 0..c_out {
                    dpv[(block.argmax[i * c_out + c], c)] += dpre[(i, c)];
                }
            }
            grads.tensors[3 * l].value += block.input.tr_mul(&dpre);
            grads.tensors[3 * l + 1].value += block.input.tr_mul(&dpv);
            {
                let gb = &mut grads.tensors[3 * l + 2].value;
                for c in 0..c_out {
                    gb[(0, c)] += dpre.column(c).sum();
                }
            }
            if l > 0 {
                dout = &dpre * center.transpose() + &dpv * edge.transpose();
            } else {
                break;
            }
        }
    }

    /// Evaluation-mode embeddings of a batch, computed in parallel.
    pub fn embed(&self, batch: &[PointCloud]) -> Result<EmbeddingBatch> {
        let rows: Vec<Vec<f64>> = batch
            .par_iter()
            .map(|x| self.forward(x).map(|(z, _)| z))
            .collect::<Result<_>>()?;
        let d = self.cfg.embedding_dim;
        let matrix = DMatrix::from_fn(rows.len(), d, |r, c| rows[r][c]);
        EmbeddingBatch::new(matrix, batch.iter().map(|x| x.fiber_id).collect())
    }

    /// Forward passes for a batch, in parallel, keeping caches.
    pub fn forward_batch(&self, batch: &[&PointCloud]) -> Result<Vec<(Vec<f64>, ForwardCache)>> {
        batch.par_iter().map(|x| self.forward(x)).collect()
    }

    /// Summed parameter gradient over a batch. The reduction order is fixed,
    /// so the result does not depend on the thread count.
    pub fn backward_batch(&self, caches: &[&ForwardCache], dzs: &[Vec<f64>]) -> Params {
        let zero = self.params.zeros_like();
        let partials: Vec<Params> = caches
            .par_chunks(GRAD_CHUNK)
            .zip(dzs.par_chunks(GRAD_CHUNK))
            .map(|(cs, ds)| {
                let mut g = zero.clone();
                for (c, d) in cs.iter().zip(ds) {
                    self.backward(c, d, &mut g);
                }
                g
            })
            .collect();
        let mut total = zero;
        for p in &partials {
            total.add_assign(p);
        }
        total
    }

    /// Writes a self-describing JSON checkpoint.
    pub fn save(&self, path: &Path) -> Result<()> {
        let file = CheckpointFile {
            format: CHECKPOINT_FORMAT.into(),
            config: self.cfg.clone(),
            tensors: self
                .params
                .tensors
                .iter()
                .map(|t| StoredTensor {
                    name: t.name.clone(),
                    rows: t.value.nrows(),
                    cols: t.value.ncols(),
                    data: t.value.transpose().as_slice().to_vec(),
                })
                .collect(),
        };
        let text = serde_json::to_string(&file)
            .map_err(|e| Error::Model(format!("cannot serialise encoder: {e}")))?;
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    /// Loads a checkpoint. When `expected` is given the stored config must
    /// match it exactly.
    pub fn load(path: &Path, expected: Option<&EncoderConfig>) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let file: CheckpointFile = serde_json::from_str(&text)
            .map_err(|e| Error::Model(format!("{}: malformed checkpoint: {e}", path.display())))?;
        if file.format != CHECKPOINT_FORMAT {
            return Err(Error::Model(format!(
                "{}: unsupported checkpoint format {:?}",
                path.display(),
                file.format
            )));
        }
        if let Some(cfg) = expected {
            if cfg != &file.config {
                return Err(Error::Model(format!(
                    "{}: checkpoint config {:?} does not match expected {:?}",
                    path.display(),
                    file.config,
                    cfg
                )));
            }
        }
        let mut enc = Encoder::new(file.config, 0)?;
        if enc.params.tensors.len() != file.tensors.len() {
            return Err(Error::Model(format!(
                "{}: expected {} tensors, found {}",
                path.display(),
                enc.params.tensors.len(),
                file.tensors.len()
            )));
        }
        for (slot, stored) in enc.params.tensors.iter_mut().zip(file.tensors) {
            if slot.name != stored.name
                || slot.value.shape() != (stored.rows, stored.cols)
                || stored.data.len() != stored.rows * stored.cols
            {
                return Err(Error::Model(format!(
                    "{}: tensor {} ({}x{}) does not fit slot {} {:?}",
                    path.display(),
                    stored.name,
                    stored.rows,
                    stored.cols,
                    slot.name,
                    slot.value.shape()
                )));
            }
            if stored.data.iter().any(|v| !v.is_finite()) {
                return Err(Error::Model(format!(
                    "{}: tensor {} has non-finite values",
                    path.display(),
                    stored.name
                )));
            }
            slot.value = DMatrix::from_row_slice(stored.rows, stored.cols, &stored.data);
        }
        Ok(enc)
    }
}

#[derive(Serialize, Deserialize)]
struct CheckpointFile {
    format: String,
    config: EncoderConfig,
    tensors: Vec<StoredTensor>,
}

#[derive(Serialize, Deserialize)]
struct StoredTensor {
    name: String,
    rows: usize,
    cols: usize,
    /// Row-major.
    data: Vec<f64>,
}
