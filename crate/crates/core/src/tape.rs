//! Reverse-mode differentiation over a closed set of map operations.
//!
//! A [`Tape`] records every operation as a node holding its forward value.
//! [`Tape::backward`] walks the nodes in exact reverse order of recording and
//! returns a [`Gradients`] registry; it does not mutate the tape, so calling
//! it twice yields identical results.
//!
//! ```
//! use spixreg::tape::Tape;
//! use spixreg::FeatureMap;
//!
//! let mut tape = Tape::new();
//! let p = tape.parameter("p", FeatureMap::from_vec(1, 2, 1, vec![3.0, -2.0]).unwrap());
//! let sq = tape.pixel_norm_squared(p).unwrap();
//! let loss = tape.mean(sq);
//! let grads = tape.backward(loss).unwrap();
//! // d/dp of mean(p²) = p
//! assert_eq!(grads.param("p").unwrap().data(), &[3.0, -2.0]);
//! ```

use std::sync::Arc;

use crate::error::{shape_err, Error, Result};
use crate::labels::LabelMap;
use crate::losses::{self, ResidualNorm};
use crate::pooling;
use crate::superpixel::{self, SeedGrid, CANDIDATES};
use crate::tensor::{self, ConvGeometry, FeatureMap};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
enum Op {
    Constant,
    Parameter,
    Conv2d { input: NodeId, kernel: NodeId, geometry: ConvGeometry },
    AddBias { input: NodeId, bias: NodeId },
    Relu(NodeId),
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Scale(NodeId, f64),
    Mean(NodeId),
    SoftmaxCandidates(NodeId),
    CandidateDistances { pixels: NodeId, seeds: NodeId, grid: SeedGrid },
    Downsample { x: NodeId, weights: NodeId, grid: SeedGrid },
    Upsample { seeds: NodeId, weights: NodeId, grid: SeedGrid },
    PixelNorm(NodeId, ResidualNorm),
    MaskedCrossEntropy { logits: NodeId, labels: Arc<LabelMap> },
}

#[derive(Clone, Debug)]
struct Node {
    value: FeatureMap,
    op: Op,
    requires_grad: bool,
}

/// Recorded computation plus its parameter registry.
#[derive(Clone, Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    params: Vec<(String, NodeId)>,
    empty_seeds: usize,
}

/// Gradients produced by [`Tape::backward`].
#[derive(Clone, Debug)]
pub struct Gradients {
    nodes: Vec<Option<FeatureMap>>,
    params: Vec<(String, FeatureMap)>,
}

impl Gradients {
    /// Gradient of a node, `None` if the loss does not depend on it.
    pub fn get(&self, id: NodeId) -> Option<&FeatureMap> {
        self.nodes.get(id.0).and_then(|g| g.as_ref())
    }

    /// Gradient of a registered parameter (zeros if unreachable).
    pub fn param(&self, name: &str) -> Option<&FeatureMap> {
        self.params.iter().find(|(n, _)| n == name).map(|(_, g)| g)
    }

    /// Parameter gradients in registration order.
    pub fn params(&self) -> &[(String, FeatureMap)] {
        &self.params
    }

    pub fn into_params(self) -> Vec<(String, FeatureMap)> {
        self.params
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &FeatureMap {
        &self.nodes[id.0].value
    }

    pub fn scalar(&self, id: NodeId) -> Result<f64> {
        self.value(id).scalar_value()
    }

    /// Registered parameters in registration order.
    pub fn parameters(&self) -> &[(String, NodeId)] {
        &self.params
    }

    /// Seeds that received no assignment mass in downsampling ops so far.
    pub fn empty_seed_events(&self) -> usize {
        self.empty_seeds
    }

    fn push(&mut self, value: FeatureMap, op: Op, inputs: &[NodeId]) -> NodeId {
        let requires_grad = match op {
            Op::Parameter => true,
            Op::Constant => false,
            _ => inputs.iter().any(|i| self.nodes[i.0].requires_grad),
        };
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        NodeId(self.nodes.len() - 1)
    }

    pub fn constant(&mut self, value: FeatureMap) -> NodeId {
        self.push(value, Op::Constant, &[])
    }

    /// Registers a trainable map under `name`.
    pub fn parameter(&mut self, name: impl Into<String>, value: FeatureMap) -> NodeId {
        let id = self.push(value, Op::Parameter, &[]);
        self.params.push((name.into(), id));
        id
    }

    pub fn conv2d(&mut self, input: NodeId, kernel: NodeId, stride: usize, pad: usize) -> Result<NodeId> {
        let geometry = tensor::conv_geometry(self.value(input), self.value(kernel), stride, pad)?;
        let out = tensor::conv2d_forward(self.value(input), self.value(kernel), &geometry);
        Ok(self.push(out, Op::Conv2d { input, kernel, geometry }, &[input, kernel]))
    }

    /// Adds a `1×1×C` bias to every pixel.
    pub fn add_bias(&mut self, input: NodeId, bias: NodeId) -> Result<NodeId> {
        let (x, b) = (self.value(input), self.value(bias));
        if b.dims() != (1, 1, x.channels()) {
            return Err(shape_err!("bias {:?} for a map with {} channels", b.dims(), x.channels()));
        }
        let mut out = x.clone();
        let c = x.channels();
        for p in out.data_mut().chunks_mut(c) {
            for (v, bv) in p.iter_mut().zip(b.data()) {
                *v += bv;
            }
        }
        Ok(self.push(out, Op::AddBias { input, bias }, &[input, bias]))
    }

    pub fn relu(&mut self, input: NodeId) -> NodeId {
        let out = tensor::relu(self.value(input));
        self.push(out, Op::Relu(input), &[input])
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.value(a).ensure_same_dims(self.value(b), "add")?;
        let mut out = self.value(a).clone();
        out.accumulate(self.value(b));
        Ok(self.push(out, Op::Add(a, b), &[a, b]))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.value(a).ensure_same_dims(self.value(b), "sub")?;
        let mut out = self.value(a).clone();
        for (o, v) in out.data_mut().iter_mut().zip(self.value(b).data()) {
            *o -= v;
        }
        Ok(self.push(out, Op::Sub(a, b), &[a, b]))
    }

    pub fn scale(&mut self, input: NodeId, factor: f64) -> NodeId {
        let out = self.value(input).map(|v| v * factor);
        self.push(out, Op::Scale(input, factor), &[input])
    }

    /// Mean of all entries, as a scalar node.
    pub fn mean(&mut self, input: NodeId) -> NodeId {
        let out = FeatureMap::scalar(self.value(input).mean());
        self.push(out, Op::Mean(input), &[input])
    }

    /// Softmax over the valid candidate slots of `grid`.
    pub fn softmax_candidates(&mut self, logits: NodeId, grid: &SeedGrid) -> Result<NodeId> {
        let l = self.value(logits);
        if (l.height(), l.width(), l.channels()) != (grid.pixel_height, grid.pixel_width, CANDIDATES) {
            return Err(shape_err!("candidate logits {:?} on a {}x{} level", l.dims(), grid.pixel_height, grid.pixel_width));
        }
        let out = superpixel::softmax_candidates(l, &superpixel::grid_masks(grid))?;
        Ok(self.push(out, Op::SoftmaxCandidates(logits), &[logits]))
    }

    /// Squared distances from each pixel feature to its candidate seeds.
    pub fn candidate_sq_distances(&mut self, pixels: NodeId, seeds: NodeId, grid: &SeedGrid) -> Result<NodeId> {
        superpixel::check_distance_inputs(self.value(pixels), self.value(seeds), grid)?;
        let out = superpixel::candidate_sq_distances(self.value(pixels), self.value(seeds), grid)?;
        Ok(self.push(out, Op::CandidateDistances { pixels, seeds, grid: *grid }, &[pixels, seeds]))
    }

    /// Soft assignment `softmax(−‖x_p − s_c‖² / temperature)` as a weights node.
    pub fn soft_assign(&mut self, pixels: NodeId, seeds: NodeId, grid: &SeedGrid, temperature: f64) -> Result<NodeId> {
        if !(temperature > 0.0 && temperature.is_finite()) {
            return Err(Error::Parameter(format!("temperature must be positive, got {temperature}")));
        }
        let d = self.candidate_sq_distances(pixels, seeds, grid)?;
        let logits = self.scale(d, -1.0 / temperature);
        self.softmax_candidates(logits, grid)
    }

    pub fn sp_downsample(&mut self, x: NodeId, weights: NodeId, grid: &SeedGrid) -> Result<NodeId> {
        pooling::check_downsample(self.value(x), self.value(weights), grid)?;
        let d = pooling::downsample_forward(self.value(x), self.value(weights), grid);
        self.empty_seeds += d.empty_seeds;
        Ok(self.push(d.seeds, Op::Downsample { x, weights, grid: *grid }, &[x, weights]))
    }

    pub fn sp_upsample(&mut self, seeds: NodeId, weights: NodeId, grid: &SeedGrid) -> Result<NodeId> {
        pooling::check_upsample(self.value(seeds), self.value(weights), grid)?;
        let out = pooling::upsample_forward(self.value(seeds), self.value(weights), grid);
        Ok(self.push(out, Op::Upsample { seeds, weights, grid: *grid }, &[seeds, weights]))
    }

    /// Downsample through every level, then upsample back (`q`).
    pub fn q_pool(&mut self, x: NodeId, pyramid: &TapePyramid) -> Result<NodeId> {
        let mut cur = x;
        for (grid, w) in pyramid.levels() {
            cur = self.sp_downsample(cur, *w, grid)?;
        }
        for (grid, w) in pyramid.levels().iter().rev() {
            cur = self.sp_upsample(cur, *w, grid)?;
        }
        Ok(cur)
    }

    /// Upsample coarse scores through every level, coarsest first.
    pub fn decode(&mut self, coarse: NodeId, pyramid: &TapePyramid) -> Result<NodeId> {
        let mut cur = coarse;
        for (grid, w) in pyramid.levels().iter().rev() {
            cur = self.sp_upsample(cur, *w, grid)?;
        }
        Ok(cur)
    }

    /// Per-pixel residual norm (`H × W × 1`).
    pub fn pixel_norm(&mut self, input: NodeId, norm: ResidualNorm) -> NodeId {
        let out = losses::pixel_norm_forward(self.value(input), norm);
        self.push(out, Op::PixelNorm(input, norm), &[input])
    }

    pub fn pixel_norm_squared(&mut self, input: NodeId) -> Result<NodeId> {
        Ok(self.pixel_norm(input, ResidualNorm::Squared))
    }

    /// Mean residual norm between `features` and `q(features)`.
    pub fn pooled_residual(&mut self, features: NodeId, pyramid: &TapePyramid, norm: ResidualNorm) -> Result<NodeId> {
        let q = self.q_pool(features, pyramid)?;
        let diff = self.sub(features, q)?;
        let n = self.pixel_norm(diff, norm);
        Ok(self.mean(n))
    }

    pub fn masked_cross_entropy(&mut self, logits: NodeId, labels: Arc<LabelMap>) -> Result<NodeId> {
        losses::check_ce(self.value(logits), &labels)?;
        let (v, _) = losses::masked_ce_forward(self.value(logits), &labels);
        Ok(self.push(FeatureMap::scalar(v), Op::MaskedCrossEntropy { logits, labels }, &[logits]))
    }

    /// Gradients of a scalar node with respect to every node and parameter.
    pub fn backward(&self, loss: NodeId) -> Result<Gradients> {
        if self.value(loss).len() != 1 {
            return Err(shape_err!("backward needs a scalar loss, got {:?}", self.value(loss).dims()));
        }
        let mut grads: Vec<Option<FeatureMap>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(FeatureMap::scalar(1.0));

        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else {
                continue;
            };
            let node = &self.nodes[i];
            if node.requires_grad {
                self.propagate(node, &g, &mut grads);
            }
            grads[i] = Some(g);
        }

        let params = self
            .params
            .iter()
            .map(|(name, id)| {
                let g = grads[id.0]
                    .clone()
                    .unwrap_or_else(|| {
                        let (h, w, c) = self.value(*id).dims();
                        FeatureMap::zeros(h, w, c)
                    });
                (name.clone(), g)
            })
            .collect();
        Ok(Gradients { nodes: grads, params })
    }

    fn wants(&self, id: NodeId) -> bool {
        self.nodes[id.0].requires_grad
    }

    fn propagate(&self, node: &Node, g: &FeatureMap, grads: &mut [Option<FeatureMap>]) {
        let mut send = |id: NodeId, contrib: FeatureMap| match &mut grads[id.0] {
            Some(acc) => acc.accumulate(&contrib),
            slot @ None => *slot = Some(contrib),
        };
        match &node.op {
            Op::Constant | Op::Parameter => {}
            Op::Conv2d { input, kernel, geometry } => {
                let (gi, gk) = tensor::conv2d_backward(self.value(*input), self.value(*kernel), geometry, g);
                if self.wants(*input) {
                    send(*input, gi);
                }
                if self.wants(*kernel) {
                    send(*kernel, gk);
                }
            }
            Op::AddBias { input, bias } => {
                if self.wants(*bias) {
                    let c = g.channels();
                    let mut gb = FeatureMap::zeros(1, 1, c);
                    for p in g.data().chunks(c) {
                        for (b, v) in gb.data_mut().iter_mut().zip(p) {
                            *b += v;
                        }
                    }
                    send(*bias, gb);
                }
                if self.wants(*input) {
                    send(*input, g.clone());
                }
            }
            Op::Relu(input) => {
                let x = self.value(*input);
                let mut gi = g.clone();
                for (gv, &xv) in gi.data_mut().iter_mut().zip(x.data()) {
                    if xv <= 0.0 {
                        *gv = 0.0;
                    }
                }
                send(*input, gi);
            }
            Op::Add(a, b) => {
                if self.wants(*a) {
                    send(*a, g.clone());
                }
                if self.wants(*b) {
                    send(*b, g.clone());
                }
            }
            Op::Sub(a, b) => {
                if self.wants(*a) {
                    send(*a, g.clone());
                }
                if self.wants(*b) {
                    send(*b, g.map(|v| -v));
                }
            }
            Op::Scale(input, f) => send(*input, g.map(|v| v * f)),
            Op::Mean(input) => {
                let x = self.value(*input);
                let v = g.data()[0] / x.len().max(1) as f64;
                let (h, w, c) = x.dims();
                send(*input, FeatureMap::filled(h, w, c, v));
            }
            Op::SoftmaxCandidates(logits) => {
                send(*logits, superpixel::softmax_candidates_backward(&node.value, g));
            }
            Op::CandidateDistances { pixels, seeds, grid } => {
                let (gp, gs) =
                    superpixel::candidate_sq_distances_backward(self.value(*pixels), self.value(*seeds), grid, g);
                if self.wants(*pixels) {
                    send(*pixels, gp);
                }
                if self.wants(*seeds) {
                    send(*seeds, gs);
                }
            }
            Op::Downsample { x, weights, grid } => {
                let (gx, gw) =
                    pooling::downsample_backward(self.value(*x), self.value(*weights), grid, &node.value, g);
                if self.wants(*x) {
                    send(*x, gx);
                }
                if self.wants(*weights) {
                    send(*weights, gw);
                }
            }
            Op::Upsample { seeds, weights, grid } => {
                let (gy, gw) = pooling::upsample_backward(self.value(*seeds), self.value(*weights), grid, g);
                if self.wants(*seeds) {
                    send(*seeds, gy);
                }
                if self.wants(*weights) {
                    send(*weights, gw);
                }
            }
            Op::PixelNorm(input, norm) => {
                send(*input, losses::pixel_norm_backward(self.value(*input), *norm, g));
            }
            Op::MaskedCrossEntropy { logits, labels } => {
                send(*logits, losses::masked_ce_backward(self.value(*logits), labels, g.data()[0]));
            }
        }
    }
}

/// Assignment pyramid whose weights live on a tape, finest level first.
#[derive(Clone, Debug, Default)]
pub struct TapePyramid {
    levels: Vec<(SeedGrid, NodeId)>,
}

impl TapePyramid {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, grid: SeedGrid, weights: NodeId) {
        self.levels.push((grid, weights));
    }

    pub fn levels(&self) -> &[(SeedGrid, NodeId)] {
        &self.levels
    }

    /// Puts a plain pyramid's weights on the tape as constants.
    pub fn constant(tape: &mut Tape, pyramid: &superpixel::AssignmentPyramid) -> Self {
        let mut p = Self::new();
        for level in pyramid.levels() {
            let w = tape.constant(level.weights().clone());
            p.push(*level.grid(), w);
        }
        p
    }

    /// Reads the weights back into an [`AssignmentPyramid`](superpixel::AssignmentPyramid).
    pub fn to_pyramid(&self, tape: &Tape) -> Result<superpixel::AssignmentPyramid> {
        superpixel::AssignmentPyramid::new(
            self.levels
                .iter()
                .map(|(g, w)| superpixel::AssignmentLevel::new(*g, tape.value(*w).clone()))
                .collect::<Result<Vec<_>>>()?,
        )
    }
}
