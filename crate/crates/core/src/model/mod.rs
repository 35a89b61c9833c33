//! The graph network: input batch norm, a TAG-conv / linear stack, skip
//! concatenation with the normalized input, node embedding layers, a node
//! head and an edge head over endpoint embeddings plus edge features.

mod checkpoint;
mod train;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::doc_model::DocumentGraph;
use crate::error::{GlamError, Result};
use crate::featurize::FeatureSchema;
use crate::graph_build::EDGE_FEATURE_DIM;
use crate::tensor::{BatchStats, ParamBindings, ParamStore, Scalar, SparseAdjacency, Tape, Tensor, Var};

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use train::{class_weights, evaluate_graphs, train, EpochLog, Metrics, TrainConfig, TrainOutcome};

/// Architecture and loss hyperparameters. Recorded in checkpoints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    /// Width of the first TAG conv.
    pub hidden0: usize,
    /// Number of TAG-conv / linear stages.
    pub depth: usize,
    pub tag_hops: usize,
    /// Node embedding width (and edge head hidden width).
    pub embed_dim: usize,
    /// Layout classes plus background.
    pub n_classes: usize,
    pub node_features: usize,
    pub edge_features: usize,
    /// Edge loss scale.
    pub alpha: f64,
    pub seed: u64,
    pub activation: String,
    pub bn_momentum: f64,
    pub bn_eps: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            hidden0: 1024,
            depth: 3,
            tag_hops: 3,
            embed_dim: 64,
            n_classes: 12,
            node_features: FeatureSchema::v1().dim(),
            edge_features: EDGE_FEATURE_DIM,
            alpha: 4.0,
            seed: 0,
            activation: "relu".into(),
            bn_momentum: 0.1,
            bn_eps: 1e-5,
        }
    }
}

impl ModelConfig {
    /// PubLayNet-sized variant.
    pub fn publaynet() -> Self {
        ModelConfig { hidden0: 512, n_classes: 6, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(GlamError::Invalid(m));
        if self.depth == 0 {
            return bad("depth must be at least 1".into());
        }
        let div = 1usize.checked_shl(2 * self.depth as u32 - 1).unwrap_or(0);
        if div == 0 || !self.hidden0.is_multiple_of(div) {
            return bad(format!("hidden0 {} must be divisible by 2^(2*depth-1) = {div}", self.hidden0));
        }
        if self.embed_dim == 0 || self.n_classes < 2 || self.node_features == 0 {
            return bad("embed_dim, node_features must be positive and n_classes at least 2".into());
        }
        if self.activation != "relu" {
            return bad(format!("unsupported activation {:?}", self.activation));
        }
        if !(0.0..=1.0).contains(&self.bn_momentum) || self.bn_eps <= 0.0 || self.alpha < 0.0 {
            return bad("bn_momentum in [0,1], bn_eps > 0 and alpha >= 0 required".into());
        }
        Ok(())
    }

    /// `(in, out)` of each stage's TAG conv and linear layer.
    pub fn stage_widths(&self) -> Vec<((usize, usize), (usize, usize))> {
        let mut input = self.node_features;
        (0..self.depth)
            .map(|i| {
                let tag_out = self.hidden0 >> (2 * i);
                let lin_out = tag_out / 2;
                let stage = ((input, tag_out), (tag_out, lin_out));
                input = lin_out;
                stage
            })
            .collect()
    }

    pub fn stack_output(&self) -> usize {
        self.stage_widths().last().map_or(self.node_features, |s| s.1 .1)
    }

    pub fn edge_input(&self) -> usize {
        2 * self.embed_dim + self.edge_features
    }

    /// `(name, rows, cols)` of every trainable tensor, in storage order.
    pub fn layout(&self) -> Vec<(String, usize, usize)> {
        let f = self.node_features;
        let e = self.embed_dim;
        let mut l = vec![("input_bn.gamma".to_string(), 1, f), ("input_bn.beta".to_string(), 1, f)];
        for (i, ((tin, tout), (lin, lout))) in self.stage_widths().into_iter().enumerate() {
            l.push((format!("stack.{i}.tag.weight"), (self.tag_hops + 1) * tin, tout));
            l.push((format!("stack.{i}.tag.bias"), 1, tout));
            l.push((format!("stack.{i}.lin.weight"), lin, lout));
            l.push((format!("stack.{i}.lin.bias"), 1, lout));
        }
        l.push(("embed.0.weight".into(), self.stack_output() + f, e));
        l.push(("embed.0.bias".into(), 1, e));
        l.push(("embed.1.weight".into(), e, e));
        l.push(("embed.1.bias".into(), 1, e));
        l.push(("node_head.weight".into(), e, self.n_classes));
        l.push(("node_head.bias".into(), 1, self.n_classes));
        l.push(("edge_bn.gamma".into(), 1, self.edge_input()));
        l.push(("edge_bn.beta".into(), 1, self.edge_input()));
        l.push(("edge_head.0.weight".into(), self.edge_input(), e));
        l.push(("edge_head.0.bias".into(), 1, e));
        l.push(("edge_head.1.weight".into(), e, 2));
        l.push(("edge_head.1.bias".into(), 1, 2));
        l
    }

    /// Trainable parameter count (running statistics excluded).
    pub fn param_count(&self) -> usize {
        self.layout().iter().map(|(_, r, c)| r * c).sum()
    }
}

/// Train mode normalizes with per-forward statistics; eval mode with the
/// running statistics.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Exponential running mean and unbiased variance of a batch norm.
#[derive(Debug, Clone, PartialEq)]
pub struct RunningStats<T> {
    pub mean: Vec<T>,
    pub var: Vec<T>,
}

impl<T: Scalar> RunningStats<T> {
    fn new(dim: usize) -> Self {
        RunningStats { mean: vec![T::zero(); dim], var: vec![T::one(); dim] }
    }

    fn update(&mut self, stats: &BatchStats<T>, momentum: f64) {
        if stats.count == 0 {
            return;
        }
        let m = T::of_f64(momentum);
        let keep = T::one() - m;
        let correction = if stats.count > 1 { T::of_f64(stats.count as f64 / (stats.count - 1) as f64) } else { T::one() };
        for j in 0..self.mean.len() {
            self.mean[j] = keep * self.mean[j] + m * stats.mean[j];
            self.var[j] = keep * self.var[j] + m * stats.var[j] * correction;
        }
    }

    fn cast<U: Scalar>(&self) -> RunningStats<U> {
        RunningStats {
            mean: self.mean.iter().map(|v| U::of_f64(v.as_f64())).collect(),
            var: self.var.iter().map(|v| U::of_f64(v.as_f64())).collect(),
        }
    }
}

#[derive(Default)]
struct StatsSum {
    mean: Vec<f64>,
    var: Vec<f64>,
    batches: usize,
}

impl StatsSum {
    fn add<T: Scalar>(&mut self, stats: Option<&BatchStats<T>>) {
        let Some(s) = stats.filter(|s| s.count > 0) else { return };
        if self.mean.is_empty() {
            self.mean = vec![0.0; s.mean.len()];
            self.var = vec![0.0; s.var.len()];
        }
        let correction = if s.count > 1 { s.count as f64 / (s.count - 1) as f64 } else { 1.0 };
        for j in 0..self.mean.len() {
            self.mean[j] += s.mean[j].as_f64();
            self.var[j] += s.var[j].as_f64() * correction;
        }
        self.batches += 1;
    }

    fn store<T: Scalar>(&self, into: &mut RunningStats<T>) {
        if self.batches == 0 {
            return;
        }
        let n = self.batches as f64;
        into.mean = self.mean.iter().map(|v| T::of_f64(v / n)).collect();
        into.var = self.var.iter().map(|v| T::of_f64(v / n)).collect();
    }
}

/// Per-graph tensors the network consumes.
#[derive(Debug, Clone)]
pub struct GraphInputs<T> {
    pub x: Tensor<T>,
    pub adj: SparseAdjacency<T>,
    pub src: Vec<usize>,
    pub dst: Vec<usize>,
    pub edge_x: Tensor<T>,
    pub node_labels: Option<Vec<usize>>,
    pub edge_labels: Option<Vec<usize>>,
}

impl GraphInputs<f32> {
    pub fn from_graph(graph: &DocumentGraph) -> Result<Self> {
        Ok(GraphInputs {
            x: graph.node_features.clone(),
            adj: SparseAdjacency::from_edges(graph.num_nodes(), &graph.edges)?,
            src: graph.edges.iter().map(|e| e.src).collect(),
            dst: graph.edges.iter().map(|e| e.dst).collect(),
            edge_x: graph.edge_features.clone(),
            node_labels: graph.node_labels.clone(),
            edge_labels: graph.edge_labels.as_ref().map(|l| l.iter().map(|&p| p as usize).collect()),
        })
    }
}

impl<T: Scalar> GraphInputs<T> {
    pub fn cast<U: Scalar>(&self) -> GraphInputs<U> {
        GraphInputs {
            x: self.x.cast(),
            adj: self.adj.cast(),
            src: self.src.clone(),
            dst: self.dst.clone(),
            edge_x: self.edge_x.cast(),
            node_labels: self.node_labels.clone(),
            edge_labels: self.edge_labels.clone(),
        }
    }

    pub fn num_nodes(&self) -> usize {
        self.x.rows()
    }

    pub fn num_edges(&self) -> usize {
        self.src.len()
    }
}

/// Positions of the named tensors inside the parameter store.
#[derive(Debug, Clone, PartialEq)]
struct Ids {
    in_gamma: usize,
    in_beta: usize,
    stack: Vec<[usize; 4]>,
    embed: [[usize; 2]; 2],
    node_head: [usize; 2],
    edge_gamma: usize,
    edge_beta: usize,
    edge_head: [[usize; 2]; 2],
}

impl Ids {
    fn resolve<T: Scalar>(store: &ParamStore<T>, depth: usize) -> Result<Self> {
        let id = |n: &str| store.index_of(n).ok_or_else(|| GlamError::Format(format!("missing parameter {n}")));
        Ok(Ids {
            in_gamma: id("input_bn.gamma")?,
            in_beta: id("input_bn.beta")?,
            stack: (0..depth)
                .map(|i| {
                    Ok([
                        id(&format!("stack.{i}.tag.weight"))?,
                        id(&format!("stack.{i}.tag.bias"))?,
                        id(&format!("stack.{i}.lin.weight"))?,
                        id(&format!("stack.{i}.lin.bias"))?,
                    ])
                })
                .collect::<Result<_>>()?,
            embed: [[id("embed.0.weight")?, id("embed.0.bias")?], [id("embed.1.weight")?, id("embed.1.bias")?]],
            node_head: [id("node_head.weight")?, id("node_head.bias")?],
            edge_gamma: id("edge_bn.gamma")?,
            edge_beta: id("edge_bn.beta")?,
            edge_head: [
                [id("edge_head.0.weight")?, id("edge_head.0.bias")?],
                [id("edge_head.1.weight")?, id("edge_head.1.bias")?],
            ],
        })
    }
}

/// Network outputs for one graph.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardOutput<T> {
    pub node_logits: Tensor<T>,
    pub edge_logits: Tensor<T>,
    pub node_probs: Tensor<T>,
    pub edge_probs: Tensor<T>,
}

/// Variables of one recorded forward pass.
pub struct Recorded<T> {
    pub node_logits: Var,
    /// `None` when the graph has no edges.
    pub edge_logits: Option<Var>,
    pub input_stats: Option<BatchStats<T>>,
    pub edge_stats: Option<BatchStats<T>>,
}

/// Network parameters plus batch-norm running statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct Glam<T> {
    pub config: ModelConfig,
    pub params: ParamStore<T>,
    pub input_norm: RunningStats<T>,
    pub edge_norm: RunningStats<T>,
    ids: Ids,
}

/// `Y = sum_k A^k X W_k + b`, computed iteratively.
pub fn tag_conv<T: Scalar>(x: &Tensor<T>, adj: &SparseAdjacency<T>, weights: &[Tensor<T>], bias: &Tensor<T>) -> Result<Tensor<T>> {
    let Some(first) = weights.first() else {
        return Err(GlamError::Contract("tag_conv needs at least one weight".into()));
    };
    let out_dim = first.cols();
    if bias.shape() != (1, out_dim) {
        return Err(GlamError::Shape { op: "tag_conv bias", left: (1, out_dim), right: bias.shape() });
    }
    let mut y = Tensor::zeros(x.rows(), out_dim);
    let mut hop = x.clone();
    for (k, w) in weights.iter().enumerate() {
        if k > 0 {
            hop = adj.spmm(&hop)?;
        }
        let term = hop.matmul(w)?;
        for (d, &s) in y.data_mut().iter_mut().zip(term.data()) {
            *d += s;
        }
    }
    for row in y.data_mut().chunks_exact_mut(out_dim.max(1)) {
        for (d, &b) in row.iter_mut().zip(bias.data()) {
            *d += b;
        }
    }
    Ok(y)
}

/// Records a TAG conv whose per-hop weights are stacked row-wise in `w`
/// (`[(K+1)*in x out]`, hop-major).
pub fn tag_conv_op<'a, T: Scalar>(tape: &mut Tape<'a, T>, x: Var, adj: &'a SparseAdjacency<T>, hops: usize, w: Var, b: Var) -> Result<Var> {
    let mut parts = vec![x];
    for _ in 0..hops {
        let prev = *parts.last().expect("non-empty");
        parts.push(tape.spmm(adj, prev)?);
    }
    let cat = if parts.len() == 1 { x } else { tape.concat_cols(&parts)? };
    let y = tape.matmul(cat, w)?;
    tape.add_row(y, b)
}

/// `CE_node + alpha * CE_edge`; with no edges, `CE_node`.
pub fn joint_loss<T: Scalar>(
    tape: &mut Tape<'_, T>,
    node_logits: Var,
    node_labels: &[usize],
    edge_logits: Option<Var>,
    edge_labels: &[usize],
    alpha: f64,
    class_weights: Option<&[T]>,
) -> Result<Var> {
    let node = tape.cross_entropy(node_logits, node_labels, class_weights)?;
    match edge_logits {
        Some(e) if e.rows() > 0 => {
            let edge = tape.cross_entropy(e, edge_labels, None)?;
            let scaled = tape.scale(edge, T::of_f64(alpha));
            tape.add(node, scaled)
        }
        _ => Ok(node),
    }
}

/// Loss value for fixed logits.
pub fn joint_loss_value(node_logits: &Tensor<f64>, node_labels: &[usize], edge_logits: &Tensor<f64>, edge_labels: &[usize], alpha: f64) -> Result<f64> {
    let mut tape = Tape::new();
    let n = tape.input(node_logits.clone());
    let e = (edge_logits.rows() > 0).then(|| tape.input(edge_logits.clone()));
    let loss = joint_loss(&mut tape, n, node_labels, e, edge_labels, alpha, None)?;
    Ok(tape.value(loss)[0])
}

fn uniform<T: Scalar>(rng: &mut ChaCha8Rng, rows: usize, cols: usize, bound: f64) -> Tensor<T> {
    let data = (0..rows * cols).map(|_| T::of_f64(rng.gen_range(-bound..bound))).collect();
    Tensor::new(rows, cols, data).expect("shape")
}

impl<T: Scalar> Glam<T> {
    /// Freshly initialized network: He-uniform for layers feeding a ReLU,
    /// Glorot-uniform for output layers, zero biases, unit gamma.
    pub fn new(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut store = ParamStore::new();
        for (name, rows, cols) in config.layout() {
            let t = if name.ends_with(".gamma") {
                Tensor::filled(rows, cols, T::one())
            } else if name.ends_with(".bias") || name.ends_with(".beta") {
                Tensor::zeros(rows, cols)
            } else if name.starts_with("node_head") || name == "edge_head.1.weight" {
                uniform(&mut rng, rows, cols, (6.0 / (rows + cols) as f64).sqrt())
            } else {
                uniform(&mut rng, rows, cols, (6.0 / rows as f64).sqrt())
            };
            store.insert(name, t)?;
        }
        Self::from_parts(config, store, None)
    }

    pub(crate) fn from_parts(config: ModelConfig, params: ParamStore<T>, norms: Option<(RunningStats<T>, RunningStats<T>)>) -> Result<Self> {
        let ids = Ids::resolve(&params, config.depth)?;
        let (input_norm, edge_norm) =
            norms.unwrap_or_else(|| (RunningStats::new(config.node_features), RunningStats::new(config.edge_input())));
        Ok(Glam { config, params, input_norm, edge_norm, ids })
    }

    pub fn param_count(&self) -> usize {
        self.params.numel()
    }

    pub fn cast<U: Scalar>(&self) -> Glam<U> {
        Glam {
            config: self.config.clone(),
            params: self.params.cast(),
            input_norm: self.input_norm.cast(),
            edge_norm: self.edge_norm.cast(),
            ids: self.ids.clone(),
        }
    }

    fn check_inputs(&self, g: &GraphInputs<T>) -> Result<()> {
        if g.x.cols() != self.config.node_features {
            return Err(GlamError::Version(format!(
                "model expects {} node features, graph has {}",
                self.config.node_features,
                g.x.cols()
            )));
        }
        if g.num_edges() > 0 && g.edge_x.cols() != self.config.edge_features {
            return Err(GlamError::Version(format!(
                "model expects {} edge features, graph has {}",
                self.config.edge_features,
                g.edge_x.cols()
            )));
        }
        Ok(())
    }

    /// Records the forward pass of `g` on `tape`.
    pub fn record<'a>(&'a self, tape: &mut Tape<'a, T>, bind: &mut ParamBindings, g: &'a GraphInputs<T>, mode: Mode) -> Result<Recorded<T>> {
        self.check_inputs(g)?;
        let cfg = &self.config;
        let eps = T::of_f64(cfg.bn_eps);
        let p = &self.params;
        let ids = &self.ids;

        let x = tape.input_ref(&g.x);
        let gamma = bind.bind(tape, p, ids.in_gamma);
        let beta = bind.bind(tape, p, ids.in_beta);
        let (xn, input_stats) = match mode {
            Mode::Train => {
                let (v, s) = tape.batch_norm(x, gamma, beta, eps)?;
                (v, Some(s))
            }
            Mode::Eval => (tape.batch_norm_fixed(x, gamma, beta, &self.input_norm.mean, &self.input_norm.var, eps)?, None),
        };

        let mut h = xn;
        for stage in &ids.stack {
            let [tw, tb, lw, lb] = stage.map(|i| bind.bind(tape, p, i));
            let t = tag_conv_op(tape, h, &g.adj, cfg.tag_hops, tw, tb)?;
            let t = tape.relu(t);
            let l = tape.matmul(t, lw)?;
            let l = tape.add_row(l, lb)?;
            h = tape.relu(l);
        }

        let mut emb = tape.concat_cols(&[h, xn])?;
        for [w, b] in ids.embed {
            let (w, b) = (bind.bind(tape, p, w), bind.bind(tape, p, b));
            let y = tape.matmul(emb, w)?;
            let y = tape.add_row(y, b)?;
            emb = tape.relu(y);
        }
        let [nw, nb] = ids.node_head.map(|i| bind.bind(tape, p, i));
        let node_logits = tape.matmul(emb, nw)?;
        let node_logits = tape.add_row(node_logits, nb)?;

        if g.num_edges() == 0 {
            return Ok(Recorded { node_logits, edge_logits: None, input_stats, edge_stats: None });
        }
        let src = tape.gather_rows(emb, &g.src)?;
        let dst = tape.gather_rows(emb, &g.dst)?;
        let ex = tape.input_ref(&g.edge_x);
        let e = tape.concat_cols(&[src, dst, ex])?;
        let eg = bind.bind(tape, p, ids.edge_gamma);
        let eb = bind.bind(tape, p, ids.edge_beta);
        let (mut e, edge_stats) = match mode {
            Mode::Train => {
                let (v, s) = tape.batch_norm(e, eg, eb, eps)?;
                (v, Some(s))
            }
            Mode::Eval => (tape.batch_norm_fixed(e, eg, eb, &self.edge_norm.mean, &self.edge_norm.var, eps)?, None),
        };
        for (k, [w, b]) in ids.edge_head.into_iter().enumerate() {
            let (w, b) = (bind.bind(tape, p, w), bind.bind(tape, p, b));
            let y = tape.matmul(e, w)?;
            e = tape.add_row(y, b)?;
            if k == 0 {
                e = tape.relu(e);
            }
        }
        Ok(Recorded { node_logits, edge_logits: Some(e), input_stats, edge_stats })
    }

    /// Folds a training forward's batch statistics into the running stats.
    pub fn update_running_stats(&mut self, rec: &Recorded<T>) {
        let m = self.config.bn_momentum;
        if let Some(s) = &rec.input_stats {
            self.input_norm.update(s, m);
        }
        if let Some(s) = &rec.edge_stats {
            self.edge_norm.update(s, m);
        }
    }

    /// Replaces the running statistics with the average per-graph batch
    /// statistics of `graphs` under the current weights.
    pub fn recalibrate_running_stats(&mut self, graphs: &[&GraphInputs<T>]) -> Result<()> {
        let mut input = StatsSum::default();
        let mut edge = StatsSum::default();
        for g in graphs.iter().filter(|g| g.num_nodes() > 0) {
            let mut tape = Tape::new();
            let mut bind = ParamBindings::new();
            let rec = self.record(&mut tape, &mut bind, g, Mode::Train)?;
            input.add(rec.input_stats.as_ref());
            edge.add(rec.edge_stats.as_ref());
        }
        input.store(&mut self.input_norm);
        edge.store(&mut self.edge_norm);
        Ok(())
    }

    /// Logits and probabilities for one graph.
    pub fn forward(&self, g: &GraphInputs<T>, mode: Mode) -> Result<ForwardOutput<T>> {
        let n_classes = self.config.n_classes;
        if g.num_nodes() == 0 {
            return Ok(ForwardOutput {
                node_logits: Tensor::zeros(0, n_classes),
                edge_logits: Tensor::zeros(0, 2),
                node_probs: Tensor::zeros(0, n_classes),
                edge_probs: Tensor::zeros(0, 2),
            });
        }
        let mut tape = Tape::new();
        let mut bind = ParamBindings::new();
        let rec = self.record(&mut tape, &mut bind, g, mode)?;
        let node_probs = tape.softmax_rows(rec.node_logits);
        let (edge_logits, edge_probs) = match rec.edge_logits {
            Some(e) => {
                let p = tape.softmax_rows(e);
                (tape.tensor(e), tape.tensor(p))
            }
            None => (Tensor::zeros(0, 2), Tensor::zeros(0, 2)),
        };
        Ok(ForwardOutput { node_logits: tape.tensor(rec.node_logits), edge_logits, node_probs: tape.tensor(node_probs), edge_probs })
    }

    /// Eval-mode forward.
    pub fn predict(&self, g: &GraphInputs<T>) -> Result<ForwardOutput<T>> {
        self.forward(g, Mode::Eval)
    }

    /// Joint loss of a labeled graph, recorded for a backward pass.
    pub fn loss<'a>(
        &'a self,
        tape: &mut Tape<'a, T>,
        bind: &mut ParamBindings,
        g: &'a GraphInputs<T>,
        mode: Mode,
        class_weights: Option<&[T]>,
    ) -> Result<(Var, Recorded<T>)> {
        let (Some(nl), Some(el)) = (&g.node_labels, &g.edge_labels) else {
            return Err(GlamError::Contract("graph is not labeled".into()));
        };
        let rec = self.record(tape, bind, g, mode)?;
        let loss = joint_loss(tape, rec.node_logits, nl, rec.edge_logits, el, self.config.alpha, class_weights)?;
        Ok((loss, rec))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::doc_model::{Cell, Page, Rect};
    use crate::graph_build::build_graph;

    pub(crate) fn small_config() -> ModelConfig {
        ModelConfig { hidden0: 32, depth: 2, tag_hops: 2, embed_dim: 8, seed: 3, ..ModelConfig::default() }
    }

    fn page(n: usize) -> Page {
        let mut p = Page::new("m", 300.0, 300.0);
        for i in 0..n {
            let (x, y) = ((i % 3) as f64 * 60.0, (i / 3) as f64 * 30.0);
            p.cells.push(Cell {
                id: i,
                bbox: Rect::new(x, y, x + 50.0 - i as f64, y + 12.0),
                text: format!("w{i}"),
                font_name: if i % 2 == 0 { "Times".into() } else { "Arial-Bold".into() },
                font_size: 9.0 + i as f64,
                reading_index: i,
            });
        }
        p
    }

    #[test]
    fn default_parameter_count_in_band() {
        let n = ModelConfig::default().param_count();
        assert!((500_000..=2_500_000).contains(&n), "{n}");
        assert_eq!(Glam::<f32>::new(ModelConfig::default()).unwrap().param_count(), n);
    }

    #[test]
    fn widths_shrink_per_stage() {
        let w = ModelConfig::default().stage_widths();
        assert_eq!(w, vec![((33, 1024), (1024, 512)), ((512, 256), (256, 128)), ((128, 64), (64, 32))]);
        assert!(ModelConfig { hidden0: 1000, ..ModelConfig::default() }.validate().is_err());
    }

    #[test]
    fn isolated_node_probs_sum_to_one() {
        let g = GraphInputs::from_graph(&build_graph(&page(1))).unwrap();
        let m = Glam::<f32>::new(small_config()).unwrap();
        for mode in [Mode::Train, Mode::Eval] {
            let out = m.forward(&g, mode).unwrap();
            let s: f32 = out.node_probs.row(0).iter().sum();
            assert!((s - 1.0).abs() < 1e-5);
            assert_eq!(out.edge_logits.shape(), (0, 2));
        }
    }

    #[test]
    fn feature_dim_mismatch_is_version_error() {
        let m = Glam::<f32>::new(ModelConfig { node_features: 40, ..small_config() }).unwrap();
        let g = GraphInputs::from_graph(&build_graph(&page(3))).unwrap();
        assert!(matches!(m.forward(&g, Mode::Eval), Err(GlamError::Version(_))));
    }

    #[test]
    fn tag_conv_without_hops_is_linear() {
        let x = Tensor::from_rows(&[vec![1.0f64, 2.0], vec![3.0, -1.0]]).unwrap();
        let w = Tensor::from_rows(&[vec![0.5, 1.0, 0.0], vec![-1.0, 2.0, 1.0]]).unwrap();
        let b = Tensor::from_rows(&[vec![0.1, 0.2, 0.3]]).unwrap();
        let adj = SparseAdjacency::from_pairs(2, [(0, 1)]).unwrap();
        let y = tag_conv(&x, &adj, std::slice::from_ref(&w), &b).unwrap();
        let mut expect = x.matmul(&w).unwrap();
        for r in 0..2 {
            for c in 0..3 {
                expect.set(r, c, expect.get(r, c) + b.get(0, c));
            }
        }
        assert_eq!(y, expect);
        let empty = SparseAdjacency::from_pairs(2, []).unwrap();
        let zero = Tensor::zeros(2, 3);
        assert_eq!(tag_conv(&x, &empty, &[w, zero.clone(), zero], &b).unwrap(), expect);
    }

    #[test]
    fn uniform_logits_loss_closed_form() {
        let c = 12;
        let n = Tensor::zeros(5, c);
        let e = Tensor::zeros(7, 2);
        let l = joint_loss_value(&n, &[0, 1, 2, 3, 11], &e, &[0, 1, 1, 0, 0, 1, 0], 4.0).unwrap();
        assert!((l - ((c as f64).ln() + 4.0 * 2f64.ln())).abs() < 1e-12);
        let l0 = joint_loss_value(&n, &[0, 1, 2, 3, 11], &e, &[0, 1, 1, 0, 0, 1, 0], 0.0).unwrap();
        assert!((l0 - (c as f64).ln()).abs() < 1e-12);
        let none = joint_loss_value(&n, &[0, 1, 2, 3, 11], &Tensor::zeros(0, 2), &[], 4.0).unwrap();
        assert_eq!(none, l0);
        assert!(joint_loss_value(&n, &[0, 1, 2, 3, 12], &e, &[0; 7], 4.0).is_err());
    }

    #[test]
    fn confident_correct_logits_give_near_zero_loss() {
        let mut n = Tensor::zeros(2, 3);
        n.set(0, 1, 50.0);
        n.set(1, 2, 50.0);
        let mut e = Tensor::zeros(1, 2);
        e.set(0, 0, 50.0);
        assert!(joint_loss_value(&n, &[1, 2], &e, &[0], 4.0).unwrap() < 1e-12);
    }

    #[test]
    fn running_stats_use_unbiased_variance() {
        let mut r = RunningStats::<f64>::new(1);
        r.update(&BatchStats { mean: vec![2.0], var: vec![1.0], count: 4 }, 0.1);
        assert!((r.mean[0] - 0.2).abs() < 1e-15);
        assert!((r.var[0] - (0.9 + 0.1 * 4.0 / 3.0)).abs() < 1e-15);
    }
}
