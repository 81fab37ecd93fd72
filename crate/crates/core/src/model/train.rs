//! Adversarial training, memory-only inference, and pooled baselines.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::losses::{check_weights, loss_adversarial, loss_center, loss_discriminator, loss_neighbors, loss_total};
use super::memory::MemoryBank;
use super::network::{BoundGenerator, VipGanParams};
use super::sections::{build_sections, Section, ShapeSection};
use crate::error::{contract_err, param_err, shape_err, Error, Result};
use crate::layers::{add_grads, derive_seed, take_grads, BoundDiscriminator, ParamSet};
use crate::tensor::{sgd_step, Real, Tape, Tensor, Var};

/// Optimization and loss settings.
#[derive(Debug, Clone, PartialEq)]
pub struct HyperParams {
    pub alpha: f64,
    pub beta: f64,
    /// Weight of `L_U`; 1 except in single-loss ablations.
    pub center_weight: f64,
    /// Memory learning rate ε.
    pub memory_lr: f64,
    /// Learning rate for network weights.
    pub lr: f64,
    pub views: usize,
    pub neighbors: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub cgan: bool,
    pub bidirectional: bool,
    pub seed: u64,
    /// Memory-only iterations in unknown-test mode.
    pub infer_iterations: usize,
    /// Memory learning rate used in unknown-test mode.
    pub infer_lr: f64,
}

impl Default for HyperParams {
    fn default() -> Self {
        Self {
            alpha: 3.0,
            beta: 0.05,
            center_weight: 1.0,
            memory_lr: 0.05,
            lr: 0.002,
            views: 12,
            neighbors: 4,
            epochs: 30,
            batch_size: 8,
            cgan: false,
            bidirectional: false,
            seed: 0,
            infer_iterations: 100,
            infer_lr: 0.005,
        }
    }
}

impl HyperParams {
    pub fn validate(&self) -> Result<()> {
        check_weights(self.alpha, self.beta)?;
        if !(self.center_weight >= 0.0) {
            return Err(param_err!("center weight must be non-negative"));
        }
        if !(self.lr >= 0.0 && self.memory_lr >= 0.0 && self.infer_lr >= 0.0) {
            return Err(param_err!("learning rates must be non-negative"));
        }
        if self.batch_size == 0 {
            return Err(param_err!("batch size must be positive"));
        }
        build_sections(self.views, self.neighbors).map(|_| ())
    }

    pub fn sections(&self) -> Result<Vec<Section>> {
        build_sections(self.views, self.neighbors)
    }
}

/// Nearest-neighbor upsampling or box downsampling of a `3×H×W` image to
/// `3×res×res`.
pub fn resize_image<T: Real>(img: &Tensor<T>, res: usize) -> Result<Tensor<T>> {
    let s = img.shape();
    if s.len() != 3 || s[1] != s[2] {
        return Err(shape_err!("resize expects a square C×H×W image, got {s:?}"));
    }
    let (c, n) = (s[0], s[1]);
    if n == res {
        return Ok(img.clone().with_requires_grad(false));
    }
    let src = img.data();
    let mut out = vec![T::zero(); c * res * res];
    if n > res && n % res == 0 {
        let f = n / res;
        let norm = T::one() / T::lit((f * f) as f64);
        for ch in 0..c {
            for y in 0..res {
                for x in 0..res {
                    let mut acc = T::zero();
                    for dy in 0..f {
                        for dx in 0..f {
                            acc += src[(ch * n + y * f + dy) * n + x * f + dx];
                        }
                    }
                    out[(ch * res + y) * res + x] = acc * norm;
                }
            }
        }
    } else {
        for ch in 0..c {
            for y in 0..res {
                let sy = y * n / res;
                for x in 0..res {
                    out[(ch * res + y) * res + x] = src[(ch * n + sy) * n + x * n / res];
                }
            }
        }
    }
    Tensor::from_vec(&[c, res, res], out)
}

/// The rendered view ring of one shape, plus its centers resized to the
/// generator output resolution.
#[derive(Debug, Clone, PartialEq)]
pub struct ShapeViews<T> {
    pub views: Vec<Tensor<T>>,
    pub targets: Vec<Tensor<T>>,
}

impl<T: Real> ShapeViews<T> {
    pub fn new(views: Vec<Tensor<T>>, target_resolution: usize) -> Result<Self> {
        let targets = views.iter().map(|v| resize_image(v, target_resolution)).collect::<Result<_>>()?;
        Ok(Self { views, targets })
    }

    pub fn len(&self) -> usize {
        self.views.len()
    }

    pub fn is_empty(&self) -> bool {
        self.views.is_empty()
    }
}

/// Mean losses over a batch or an epoch.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StepStats {
    pub l_u: f64,
    pub l_r: f64,
    pub l_d2u: f64,
    pub total: f64,
    /// Minimized discriminator objective `−L_D`.
    pub l_d: f64,
}

impl StepStats {
    fn add(&mut self, o: &StepStats, w: f64) {
        self.l_u += o.l_u * w;
        self.l_r += o.l_r * w;
        self.l_d2u += o.l_d2u * w;
        self.total += o.total * w;
        self.l_d += o.l_d * w;
    }

    pub fn is_finite(&self) -> bool {
        [self.l_u, self.l_r, self.l_d2u, self.total, self.l_d].iter().all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub stats: StepStats,
}

struct SectionLosses {
    l_u: Var,
    l_r: Var,
    l_d2u: Var,
    total: Var,
}

fn neighbor_leaves<'a, T: Real>(tape: &mut Tape<'a, T>, shape: &'a ShapeViews<T>, sec: &Section) -> Result<Vec<Var>> {
    sec.neighbors
        .iter()
        .map(|&j| {
            shape
                .views
                .get(j)
                .map(|v| tape.leaf(v))
                .ok_or_else(|| contract_err!("view {j} missing from shape with {} views", shape.len()))
        })
        .collect()
}

fn detach<T: Real>(tape: &mut Tape<'_, T>, v: Var) -> Result<Var> {
    let shape = tape.shape(v).to_vec();
    let data = tape.value(v).to_vec();
    tape.constant(&shape, data)
}

fn discriminate_with<T: Real>(tape: &mut Tape<'_, T>, d: &BoundDiscriminator, img: Var, conditions: &[Var]) -> Result<Var> {
    if d.is_conditional() {
        d.conditional_discriminate(tape, img, conditions)
    } else {
        d.discriminate(tape, img)
    }
}

/// Full generator-side forward pass and Eq.-5 objective for one section.
fn section_losses<'a, T: Real>(
    tape: &mut Tape<'a, T>,
    g: &BoundGenerator,
    d: &BoundDiscriminator,
    memory_row: Var,
    shape: &'a ShapeViews<T>,
    sec: &Section,
    hp: &HyperParams,
) -> Result<SectionLosses> {
    let imgs = neighbor_leaves(tape, shape, sec)?;
    let enc = g.encoder_forward(tape, memory_row, &imgs)?;
    let targets: Vec<Var> = enc.features.iter().map(|&f| detach(tape, f)).collect::<Result<_>>()?;
    let preds = g.decoder_forward(tape, enc.memory_input, enc.hidden, &enc.features)?;
    let center = g.generate_center(tape, enc.hidden)?;
    let truth = tape.leaf(&shape.targets[sec.center]);
    let l_u = loss_center(tape, center, truth)?;
    let l_r = loss_neighbors(tape, &preds, &targets)?;
    let d_fake = discriminate_with(tape, d, center, &targets)?;
    let l_d2u = loss_adversarial(tape, d_fake)?;
    let weighted_u = tape.scale(l_u, T::lit(hp.center_weight));
    let total = loss_total(tape, weighted_u, l_r, l_d2u, T::lit(hp.alpha), T::lit(hp.beta))?;
    Ok(SectionLosses { l_u, l_r, l_d2u, total })
}

fn value<T: Real>(tape: &Tape<'_, T>, v: Var) -> Result<f64> {
    Ok(tape.item(v)?.as_f64())
}

fn ensure_finite(stats: &StepStats) -> Result<()> {
    if stats.is_finite() {
        Ok(())
    } else {
        Err(Error::Numeric(format!("non-finite loss encountered: {stats:?}")))
    }
}

/// Applies `sgd_step` to every tensor of `set` that tracks gradients.
fn descend_trainable<T: Real>(set: &mut dyn ParamSet<T>, lr: f64) -> Result<()> {
    let mut ts: Vec<&mut Tensor<T>> = set.tensors_mut().into_iter().filter(|t| t.requires_grad()).collect();
    if ts.is_empty() {
        return Ok(());
    }
    sgd_step(&mut ts, T::lit(lr))
}

/// One adversarial update on a batch of sections.
///
/// Phase 1 updates only D on `−L_D`. Phase 2 recomputes the generator pass
/// and updates G's weights (rate `lr`) and the touched memory rows (rate ε)
/// on `L`, with D held fixed.
pub fn train_step<T: Real>(
    params: &mut VipGanParams<T>,
    memory: &mut MemoryBank<T>,
    data: &[ShapeViews<T>],
    batch: &[ShapeSection],
    hp: &HyperParams,
) -> Result<StepStats> {
    if batch.is_empty() {
        return Err(contract_err!("train_step needs a non-empty batch"));
    }
    if memory.dim() != params.config.f_dim {
        return Err(shape_err!("memory dim {} does not match network F_dim {}", memory.dim(), params.config.f_dim));
    }
    let mut items: Vec<ShapeSection> = batch.to_vec();
    if hp.bidirectional {
        items.extend(batch.iter().map(|s| ShapeSection { shape: s.shape, section: s.section.reversed() }));
    }
    for it in &items {
        if it.shape >= data.len() || it.shape >= memory.shapes() {
            return Err(contract_err!("section refers to unknown shape {}", it.shape));
        }
    }
    let inv = T::one() / T::lit(items.len() as f64);
    let w = 1.0 / items.len() as f64;
    let mut stats = StepStats::default();

    // phase 1: discriminator
    let mut d_grads = Vec::new();
    for it in &items {
        let shape = &data[it.shape];
        let mut tape = Tape::new();
        tape.freeze_leaves(true);
        let g = params.bind_generator(&mut tape);
        let row = tape.leaf_slice(&[memory.dim()], memory.row(it.shape), false)?;
        tape.freeze_leaves(false);
        let d = params.bind_discriminator(&mut tape);
        let imgs = neighbor_leaves(&mut tape, shape, &it.section)?;
        let enc = g.encoder_forward(&mut tape, row, &imgs)?;
        let fake = g.generate_center(&mut tape, enc.hidden)?;
        let real = tape.leaf(&shape.targets[it.section.center]);
        let d_real = discriminate_with(&mut tape, &d, real, &enc.features)?;
        let d_fake = discriminate_with(&mut tape, &d, fake, &enc.features)?;
        let l_d = loss_discriminator(&mut tape, d_real, d_fake)?;
        stats.l_d += value(&tape, l_d)? * w;
        let scaled = tape.scale(l_d, inv);
        tape.backward(scaled)?;
        add_grads(&mut d_grads, take_grads(&mut tape, &d.vars()));
    }
    ensure_finite(&stats)?;
    params.discriminator.accumulate_grads(&d_grads)?;
    descend_trainable(&mut params.discriminator, hp.lr)?;

    // phase 2: generator and memory
    let mut g_grads = Vec::new();
    let mut mem_grads: BTreeMap<usize, Vec<T>> = BTreeMap::new();
    for it in &items {
        let shape = &data[it.shape];
        let mut tape = Tape::new();
        let g = params.bind_generator(&mut tape);
        tape.freeze_leaves(true);
        let d = params.bind_discriminator(&mut tape);
        tape.freeze_leaves(false);
        let row = tape.leaf_slice(&[memory.dim()], memory.row(it.shape), memory.is_trainable(it.shape))?;
        let losses = section_losses(&mut tape, &g, &d, row, shape, &it.section, hp)?;
        let s = StepStats {
            l_u: value(&tape, losses.l_u)?,
            l_r: value(&tape, losses.l_r)?,
            l_d2u: value(&tape, losses.l_d2u)?,
            total: value(&tape, losses.total)?,
            l_d: 0.0,
        };
        stats.add(&s, w);
        let scaled = tape.scale(losses.total, inv);
        tape.backward(scaled)?;
        add_grads(&mut g_grads, take_grads(&mut tape, &g.vars()));
        if let Some(gr) = tape.take_grad(row) {
            match mem_grads.get_mut(&it.shape) {
                Some(acc) => acc.iter_mut().zip(&gr).for_each(|(a, &b)| *a += b),
                None => {
                    mem_grads.insert(it.shape, gr);
                }
            }
        }
    }
    ensure_finite(&stats)?;
    params.generator.accumulate_grads(&g_grads)?;
    descend_trainable(&mut params.generator, hp.lr)?;
    let updates: Vec<(usize, Vec<T>)> = mem_grads.into_iter().collect();
    memory.descend(&updates, T::lit(hp.memory_lr))?;
    params.steps += 1;
    Ok(stats)
}

/// All `(shape, section)` pairs of a dataset in canonical order.
pub fn all_sections(shapes: usize, hp: &HyperParams) -> Result<Vec<ShapeSection>> {
    let secs = hp.sections()?;
    Ok((0..shapes)
        .flat_map(|s| secs.iter().map(move |sec| ShapeSection { shape: s, section: sec.clone() }))
        .collect())
}

/// Runs one epoch: shuffles every section of every shape with a seed derived
/// from `(hp.seed, epoch)` and trains on consecutive batches.
pub fn train_epoch<T: Real>(
    params: &mut VipGanParams<T>,
    memory: &mut MemoryBank<T>,
    data: &[ShapeViews<T>],
    hp: &HyperParams,
    epoch: usize,
) -> Result<StepStats> {
    let mut order = all_sections(data.len(), hp)?;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(hp.seed, 1_000 + epoch as u64));
    order.shuffle(&mut rng);
    let mut acc = StepStats::default();
    let batches = order.len().div_ceil(hp.batch_size);
    for chunk in order.chunks(hp.batch_size) {
        let s = train_step(params, memory, data, chunk, hp)?;
        acc.add(&s, 1.0 / batches as f64);
    }
    Ok(acc)
}

/// Known-test mode: learns memory rows for every shape (train and test)
/// jointly with the networks. Returns the per-epoch loss history.
pub fn fit_known_test<T: Real>(
    params: &mut VipGanParams<T>,
    memory: &mut MemoryBank<T>,
    data: &[ShapeViews<T>],
    hp: &HyperParams,
) -> Result<Vec<EpochRecord>> {
    fit_known_test_from(params, memory, data, hp, 0, &mut |_, _, _| Ok(()))
}

/// Callback invoked after each completed epoch.
pub type EpochObserver<'o, T> = dyn FnMut(&EpochRecord, &VipGanParams<T>, &MemoryBank<T>) -> Result<()> + 'o;

/// [`fit_known_test`] starting at `start_epoch`, calling `observer` after
/// each epoch (used for checkpointing and resume).
pub fn fit_known_test_from<T: Real>(
    params: &mut VipGanParams<T>,
    memory: &mut MemoryBank<T>,
    data: &[ShapeViews<T>],
    hp: &HyperParams,
    start_epoch: usize,
    observer: &mut EpochObserver<'_, T>,
) -> Result<Vec<EpochRecord>> {
    hp.validate()?;
    if memory.shapes() != data.len() {
        return Err(contract_err!("memory has {} rows for {} shapes", memory.shapes(), data.len()));
    }
    if let Some(bad) = data.iter().position(|s| s.len() != hp.views) {
        return Err(contract_err!("shape {bad} has {} views, expected {}", data[bad].len(), hp.views));
    }
    let mut history = Vec::new();
    for epoch in start_epoch..hp.epochs {
        let stats = train_epoch(params, memory, data, hp, epoch)?;
        let rec = EpochRecord { epoch, stats };
        observer(&rec, params, memory)?;
        history.push(rec);
    }
    Ok(history)
}

/// Mean section losses of one shape under fixed networks (no updates).
pub fn evaluate_shape<T: Real>(
    params: &VipGanParams<T>,
    memory_row: &[T],
    shape: &ShapeViews<T>,
    hp: &HyperParams,
) -> Result<StepStats> {
    let secs = hp.sections()?;
    let mut acc = StepStats::default();
    for sec in &secs {
        let mut tape = Tape::new();
        tape.freeze_leaves(true);
        let g = params.bind_generator(&mut tape);
        let d = params.bind_discriminator(&mut tape);
        let row = tape.leaf_slice(&[memory_row.len()], memory_row, false)?;
        let l = section_losses(&mut tape, &g, &d, row, shape, sec, hp)?;
        let s = StepStats {
            l_u: value(&tape, l.l_u)?,
            l_r: value(&tape, l.l_r)?,
            l_d2u: value(&tape, l.l_d2u)?,
            total: value(&tape, l.total)?,
            l_d: 0.0,
        };
        acc.add(&s, 1.0 / secs.len() as f64);
    }
    Ok(acc)
}

/// Unknown-test mode: with every network parameter fixed, learns fresh
/// memory rows for `shapes` by gradient descent on `L`.
///
/// Returns the rows and, per iteration, the mean section loss over all new
/// shapes measured before that iteration's update.
pub fn infer_unknown_test<T: Real>(
    params: &VipGanParams<T>,
    shapes: &[ShapeViews<T>],
    hp: &HyperParams,
    seed: u64,
) -> Result<(MemoryBank<T>, Vec<f64>)> {
    hp.validate()?;
    if params.steps == 0 {
        return Err(contract_err!("unknown-test inference requires pretrained networks"));
    }
    let secs = hp.sections()?;
    let mut memory = MemoryBank::random(shapes.len().max(1), params.config.f_dim, seed)?;
    if shapes.is_empty() {
        return Ok((memory, Vec::new()));
    }
    let inv = T::one() / T::lit(secs.len() as f64);
    let mut history = Vec::with_capacity(hp.infer_iterations);
    for _ in 0..hp.infer_iterations {
        let mut updates = Vec::with_capacity(shapes.len());
        let mut total = 0.0;
        for (s, shape) in shapes.iter().enumerate() {
            let mut grad = vec![T::zero(); memory.dim()];
            for sec in &secs {
                let mut tape = Tape::new();
                tape.freeze_leaves(true);
                let g = params.bind_generator(&mut tape);
                let d = params.bind_discriminator(&mut tape);
                let row = tape.leaf_slice(&[memory.dim()], memory.row(s), true)?;
                let l = section_losses(&mut tape, &g, &d, row, shape, sec, hp)?;
                total += value(&tape, l.total)? / (secs.len() * shapes.len()) as f64;
                let scaled = tape.scale(l.total, inv);
                tape.backward(scaled)?;
                if let Some(gr) = tape.take_grad(row) {
                    grad.iter_mut().zip(&gr).for_each(|(a, &b)| *a += b);
                }
            }
            updates.push((s, grad));
        }
        if !total.is_finite() {
            return Err(Error::Numeric("non-finite loss during memory inference".into()));
        }
        history.push(total);
        memory.descend(&updates, T::lit(hp.infer_lr))?;
    }
    Ok((memory, history))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PoolKind {
    Max,
    Mean,
}

/// Pools the hidden states `h_i` of all sections of one shape. `memory_row`
/// of `None` feeds an all-zero memory vector.
pub fn pooled_feature<T: Real>(
    params: &VipGanParams<T>,
    memory_row: Option<&[T]>,
    shape: &ShapeViews<T>,
    hp: &HyperParams,
    kind: PoolKind,
) -> Result<Vec<T>> {
    let secs = hp.sections()?;
    let zeros = vec![T::zero(); params.config.f_dim];
    let row_data = memory_row.unwrap_or(&zeros);
    let hidden: Vec<Vec<T>> = secs
        .iter()
        .map(|sec| {
            let mut tape = Tape::new();
            tape.freeze_leaves(true);
            let g = params.bind_generator(&mut tape);
            let row = tape.leaf_slice(&[row_data.len()], row_data, false)?;
            let imgs = neighbor_leaves(&mut tape, shape, sec)?;
            let enc = g.encoder_forward(&mut tape, row, &imgs)?;
            Ok(tape.value(enc.hidden).to_vec())
        })
        .collect::<Result<_>>()?;
    Ok(pool(&hidden, kind))
}

/// Element-wise max or mean over equally long vectors.
pub fn pool<T: Real>(vectors: &[Vec<T>], kind: PoolKind) -> Vec<T> {
    let Some(first) = vectors.first() else { return Vec::new() };
    let mut out = first.clone();
    for v in &vectors[1..] {
        for (o, &x) in out.iter_mut().zip(v) {
            match kind {
                PoolKind::Max => *o = o.max(x),
                PoolKind::Mean => *o += x,
            }
        }
    }
    if kind == PoolKind::Mean {
        let n = T::lit(vectors.len() as f64);
        out.iter_mut().for_each(|o| *o = *o / n);
    }
    out
}

/// Predicted and ground-truth center images of one section.
pub fn predict_center<T: Real>(
    params: &VipGanParams<T>,
    memory_row: &[T],
    shape: &ShapeViews<T>,
    sec: &Section,
) -> Result<(Tensor<T>, Tensor<T>)> {
    let mut tape = Tape::new();
    tape.freeze_leaves(true);
    let g = params.bind_generator(&mut tape);
    let row = tape.leaf_slice(&[memory_row.len()], memory_row, false)?;
    let imgs = neighbor_leaves(&mut tape, shape, sec)?;
    let enc = g.encoder_forward(&mut tape, row, &imgs)?;
    let img = g.generate_center(&mut tape, enc.hidden)?;
    Ok((tape.to_tensor(img), shape.targets[sec.center].clone()))
}
