use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{GlamError, Result};
use crate::tensor::{Adam, ParamBindings, Tape};

use super::{Glam, GraphInputs, Mode, ModelConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr: f64,
    /// Seeds the per-epoch shuffle.
    pub seed: u64,
    /// Weight node classes by inverse training frequency.
    pub class_weighting: bool,
    /// Epochs run with per-page batch statistics. The running statistics are
    /// then recomputed over the training set and frozen, and later epochs
    /// normalize with them as inference does.
    pub bn_warmup_epochs: usize,
    /// Cosine-decay the learning rate to `lr * min_lr_frac` by the last epoch.
    pub cosine: bool,
    pub min_lr_frac: f64,
}

impl TrainConfig {
    /// Learning rate used during `epoch` (1-based).
    pub fn lr_at(&self, epoch: usize) -> f64 {
        if !self.cosine || self.epochs <= 1 {
            return self.lr;
        }
        let progress = (epoch - 1) as f64 / (self.epochs - 1) as f64;
        let floor = self.lr * self.min_lr_frac;
        floor + 0.5 * (self.lr - floor) * (1.0 + (std::f64::consts::PI * progress).cos())
    }
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 20,
            lr: 1e-3,
            seed: 0,
            class_weighting: false,
            bn_warmup_epochs: 2,
            cosine: true,
            min_lr_frac: 0.02,
        }
    }
}

/// Mean loss and accuracies over a set of graphs.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Metrics {
    pub loss: f64,
    pub node_acc: f64,
    pub edge_acc: f64,
}

/// One line of the training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub loss: f64,
    pub node_acc: f64,
    pub edge_acc: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub val: Option<Metrics>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Best model by validation loss, or the last one without validation.
    pub model: Glam<f32>,
    pub history: Vec<EpochLog>,
    /// 1-based epoch the returned model comes from.
    pub best_epoch: usize,
}

/// Inverse-frequency node class weights, normalized to mean 1 over the
/// classes present. Absent classes get weight 1.
pub fn class_weights(graphs: &[GraphInputs<f32>], n_classes: usize) -> Vec<f32> {
    let mut counts = vec![0usize; n_classes];
    for g in graphs {
        for &l in g.node_labels.iter().flatten() {
            if l < n_classes {
                counts[l] += 1;
            }
        }
    }
    let total: usize = counts.iter().sum();
    let present = counts.iter().filter(|&&c| c > 0).count().max(1);
    counts
        .iter()
        .map(|&c| if c == 0 { 1.0 } else { (total as f64 / (present as f64 * c as f64)) as f32 })
        .collect()
}

#[derive(Default)]
struct Tally {
    loss: f64,
    graphs: usize,
    node_hit: usize,
    nodes: usize,
    edge_hit: usize,
    edges: usize,
}

impl Tally {
    fn add(&mut self, loss: f64, node_logits: &[f32], n_classes: usize, nl: &[usize], edge_logits: Option<&[f32]>, el: &[usize]) {
        self.loss += loss;
        self.graphs += 1;
        for (row, &l) in node_logits.chunks_exact(n_classes).zip(nl) {
            self.node_hit += (argmax(row) == l) as usize;
        }
        self.nodes += nl.len();
        if let Some(e) = edge_logits {
            for (row, &l) in e.chunks_exact(2).zip(el) {
                self.edge_hit += (argmax(row) == l) as usize;
            }
            self.edges += el.len();
        }
    }

    fn metrics(&self) -> Metrics {
        let ratio = |a: usize, b: usize| if b == 0 { 1.0 } else { a as f64 / b as f64 };
        Metrics {
            loss: if self.graphs == 0 { 0.0 } else { self.loss / self.graphs as f64 },
            node_acc: ratio(self.node_hit, self.nodes),
            edge_acc: ratio(self.edge_hit, self.edges),
        }
    }
}

fn argmax(row: &[f32]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

fn labels(g: &GraphInputs<f32>) -> Result<(&[usize], &[usize])> {
    match (&g.node_labels, &g.edge_labels) {
        (Some(n), Some(e)) => Ok((n, e)),
        _ => Err(GlamError::Contract("graph is not labeled".into())),
    }
}

/// Eval-mode loss and accuracies.
pub fn evaluate_graphs(model: &Glam<f32>, graphs: &[GraphInputs<f32>]) -> Result<Metrics> {
    let mut tally = Tally::default();
    for g in graphs.iter().filter(|g| g.num_nodes() > 0) {
        let (nl, el) = labels(g)?;
        let mut tape = Tape::new();
        let mut bind = ParamBindings::new();
        let (loss, rec) = model.loss(&mut tape, &mut bind, g, Mode::Eval, None)?;
        let edge = rec.edge_logits.map(|v| tape.value(v));
        tally.add(tape.value(loss)[0] as f64, tape.value(rec.node_logits), model.config.n_classes, nl, edge, el);
    }
    Ok(tally.metrics())
}

/// Trains with Adam, one step per page graph, pages shuffled every epoch.
/// `on_epoch` sees each epoch's log line as soon as it is complete.
pub fn train(
    graphs: &[GraphInputs<f32>],
    val: Option<&[GraphInputs<f32>]>,
    config: ModelConfig,
    tc: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochLog),
) -> Result<TrainOutcome> {
    let usable: Vec<&GraphInputs<f32>> = graphs.iter().filter(|g| g.num_nodes() > 0).collect();
    if usable.is_empty() {
        return Err(GlamError::Contract("training corpus has no non-empty graphs".into()));
    }
    for g in &usable {
        let (nl, _) = labels(g)?;
        if let Some(&bad) = nl.iter().find(|&&l| l >= config.n_classes) {
            return Err(GlamError::Contract(format!("node label {bad} out of range for {} classes", config.n_classes)));
        }
    }
    let weights = tc.class_weighting.then(|| class_weights(graphs, config.n_classes));
    let mut model = Glam::<f32>::new(config)?;
    let mut adam = Adam::new(tc.lr);
    let mut rng = ChaCha8Rng::seed_from_u64(tc.seed);
    let mut order: Vec<usize> = (0..usable.len()).collect();
    let mut history = Vec::with_capacity(tc.epochs);
    let mut best: Option<(f64, usize, Glam<f32>)> = None;

    for epoch in 1..=tc.epochs {
        if epoch == tc.bn_warmup_epochs + 1 {
            model.recalibrate_running_stats(&usable)?;
        }
        order.shuffle(&mut rng);
        adam.lr = tc.lr_at(epoch);
        let mode = if epoch <= tc.bn_warmup_epochs { Mode::Train } else { Mode::Eval };
        let mut tally = Tally::default();
        for &i in &order {
            let g = usable[i];
            let (nl, el) = labels(g)?;
            let mut tape = Tape::new();
            let mut bind = ParamBindings::new();
            let (loss, rec) = model.loss(&mut tape, &mut bind, g, mode, weights.as_deref())?;
            let edge = rec.edge_logits.map(|v| tape.value(v));
            tally.add(tape.value(loss)[0] as f64, tape.value(rec.node_logits), model.config.n_classes, nl, edge, el);
            let grads = tape.backward(loss)?;
            model.params.zero_grad();
            model.params.accumulate(&bind, &grads);
            adam.step(&mut model.params);
            if mode == Mode::Train {
                model.update_running_stats(&rec);
            }
        }
        let m = tally.metrics();
        let val_metrics = match val {
            Some(v) if !v.is_empty() => Some(evaluate_graphs(&model, v)?),
            _ => None,
        };
        let log = EpochLog { epoch, loss: m.loss, node_acc: m.node_acc, edge_acc: m.edge_acc, val: val_metrics };
        on_epoch(&log);
        history.push(log);
        if let Some(vm) = val_metrics {
            if best.as_ref().is_none_or(|(l, _, _)| vm.loss < *l) {
                best = Some((vm.loss, epoch, model.clone()));
            }
        }
    }
    let (model, best_epoch) = match best {
        Some((_, e, m)) => (m, e),
        None => (model, tc.epochs),
    };
    Ok(TrainOutcome { model, history, best_epoch })
}
