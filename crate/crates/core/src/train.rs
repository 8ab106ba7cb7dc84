//! Full-batch training loops.
//!
//! Every epoch builds a fresh tape, draws a new corruption permutation,
//! evaluates the loss, and takes one Adam step. Early stopping watches the
//! training loss and the loop returns the parameters of the best epoch.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::rc::Rc;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::model::{
    bce_pair, corrupt, embed, forward, forward_per_view, hemi_loss, EmbeddingSet, HemiConfig,
    ModelInputs, ModelParams, ParamVars,
};
use crate::tensor::{AdamState, Tape, Tensor, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StopReason {
    Patience,
    MaxEpochs,
}

impl StopReason {
    pub fn as_str(&self) -> &'static str {
        match self {
            StopReason::Patience => "patience",
            StopReason::MaxEpochs => "max-epochs",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainReport {
    /// Training loss of each epoch, in order. Epoch `e` is `losses[e - 1]`.
    pub losses: Vec<f64>,
    /// 1-based epoch whose parameters were returned.
    pub best_epoch: usize,
    pub best_loss: f64,
    pub stop: StopReason,
    pub seconds: f64,
    pub seed: u64,
}

impl TrainReport {
    pub fn epochs_run(&self) -> usize {
        self.losses.len()
    }

    /// `epoch<TAB>loss` lines under a header, then a `#` summary line.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("epoch\tloss\n");
        for (i, l) in self.losses.iter().enumerate() {
            let _ = writeln!(out, "{}\t{}", i + 1, l);
        }
        let _ = writeln!(
            out,
            "# best_epoch={} best_loss={} stop={} epochs={} seconds={:.3} seed={}",
            self.best_epoch,
            self.best_loss,
            self.stop.as_str(),
            self.losses.len(),
            self.seconds,
            self.seed
        );
        out
    }
}

/// Result of self-supervised training.
#[derive(Clone, Debug)]
pub struct Trained {
    pub params: ModelParams,
    pub embeddings: EmbeddingSet,
    pub report: TrainReport,
}

/// Result of a loss-augmented run: the model plus the task head.
#[derive(Clone, Debug)]
pub struct Augmented {
    pub params: ModelParams,
    /// `d × out` projection giving `h_v = z_v W_task`.
    pub w_task: Tensor,
    pub report: TrainReport,
}

impl Augmented {
    /// Task representations `H = Z W_task` from clean inputs.
    pub fn task_embeddings(&self, inputs: &ModelInputs) -> Result<Tensor> {
        embed(&self.params, inputs)?.fused.matmul(&self.w_task)
    }
}

/// Model parameters plus an optional task head, optimized together.
#[derive(Clone)]
struct Learnable {
    model: ModelParams,
    task: Option<Tensor>,
}

impl Learnable {
    fn tensors(&self) -> Vec<&Tensor> {
        let mut t = self.model.tensors();
        t.extend(self.task.iter());
        t
    }

    fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut t = self.model.tensors_mut();
        t.extend(self.task.iter_mut());
        t
    }
}

/// Scales `grads` in place so their joint norm is at most `max_norm`.
pub fn clip_global_norm(grads: &mut [Tensor], max_norm: f64) -> f64 {
    let norm = grads.iter().map(Tensor::squared_norm).sum::<f64>().sqrt();
    if norm > max_norm {
        let c = max_norm / norm;
        for g in grads.iter_mut() {
            g.scale_assign(c);
        }
    }
    norm
}

fn optimize<F>(
    mut state: Learnable,
    config: &HemiConfig,
    rng: &mut ChaCha8Rng,
    on_epoch: &mut dyn FnMut(usize, f64),
    mut loss_fn: F,
) -> Result<(Learnable, TrainReport)>
where
    F: for<'t> FnMut(&'t Tape, &ParamVars<'t>, Option<Var<'t>>, &mut ChaCha8Rng) -> Result<Var<'t>>,
{
    let started = Instant::now();
    let mut adam = AdamState::new(config.lr, &state.tensors());
    let mut losses = Vec::new();
    let mut best: Option<(f64, usize, Learnable)> = None;
    let mut wait = 0usize;
    let mut stop = StopReason::MaxEpochs;

    for epoch in 1..=config.epochs {
        let tape = Tape::new();
        let vars = state.model.on_tape(&tape);
        let task = state.task.as_ref().map(|t| tape.var(t.clone()));
        let loss = loss_fn(&tape, &vars, task, rng)?;
        let value = loss.item();
        if !value.is_finite() {
            return Err(Error::NonFinite { epoch, value });
        }
        losses.push(value);
        on_epoch(epoch, value);

        match &best {
            Some((b, _, _)) if value >= *b => wait += 1,
            _ => {
                best = Some((value, epoch, state.clone()));
                wait = 0;
            }
        }
        if wait >= config.patience {
            stop = StopReason::Patience;
            break;
        }

        let grads_all = loss.backward()?;
        let mut grads = vars.grads(&grads_all);
        if let Some(t) = task {
            grads.push(grads_all.get(t));
        }
        if let Some(c) = config.clip_norm {
            clip_global_norm(&mut grads, c);
        }
        adam.step(&mut state.tensors_mut(), &grads)?;
    }

    let (best_loss, best_epoch, best_state) = best.ok_or_else(|| {
        Error::InvalidArgument("training needs at least one epoch".into())
    })?;
    Ok((
        best_state,
        TrainReport {
            losses,
            best_epoch,
            best_loss,
            stop,
            seconds: started.elapsed().as_secs_f64(),
            seed: config.seed,
        },
    ))
}

/// Builds the self-supervised loss for one step, drawing corruption from `rng`.
pub fn selfsup_loss<'t>(
    tape: &'t Tape,
    vars: &ParamVars<'t>,
    inputs: &ModelInputs,
    config: &HemiConfig,
    rng: &mut impl Rng,
) -> Result<Var<'t>> {
    let x = tape.constant(inputs.features.clone());
    let clean = forward(tape, vars, &inputs.adjs, x)?;
    let corrupted = if config.share_corruption {
        let (xt, _) = corrupt(&inputs.features, rng);
        forward(tape, vars, &inputs.adjs, tape.constant(xt))?
    } else {
        let xs: Vec<_> = (0..inputs.num_metapaths())
            .map(|_| tape.constant(corrupt(&inputs.features, rng).0))
            .collect();
        forward_per_view(tape, vars, &inputs.adjs, &xs)?
    };
    hemi_loss(tape, &clean, corrupted.fused, vars, config.lambda)
}

pub fn train_selfsup(inputs: &ModelInputs, config: &HemiConfig) -> Result<Trained> {
    train_selfsup_with(inputs, config, &mut |_, _| {})
}

/// [`train_selfsup`] with a per-epoch callback receiving `(epoch, loss)`.
pub fn train_selfsup_with(
    inputs: &ModelInputs,
    config: &HemiConfig,
    on_epoch: &mut dyn FnMut(usize, f64),
) -> Result<Trained> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let model = ModelParams::init(inputs.in_dim(), inputs.num_metapaths(), config, &mut rng)?;
    let (best, report) = optimize(
        Learnable { model, task: None },
        config,
        &mut rng,
        on_epoch,
        |tape, vars, _, rng| selfsup_loss(tape, vars, inputs, config, rng),
    )?;
    let embeddings = embed(&best.model, inputs)?;
    Ok(Trained {
        params: best.model,
        embeddings,
        report,
    })
}

/// Mean cross-entropy of row-wise softmax over `logits` at the labeled rows.
pub fn nc_loss<'t>(tape: &'t Tape, logits: Var<'t>, labels: &[(usize, usize)]) -> Result<Var<'t>> {
    let classes = logits.value().cols();
    let rows = Rc::new(labels.iter().map(|&(v, _)| v).collect::<Vec<_>>());
    let mut mask = Tensor::zeros(&[labels.len(), classes]);
    for (i, &(_, c)) in labels.iter().enumerate() {
        mask.set(i, c, 1.0);
    }
    let picked = logits.log_softmax_rows()?.gather_rows(rows)?;
    Ok(picked
        .mul(tape.constant(mask))?
        .sum()
        .scale(-1.0 / labels.len() as f64))
}

/// `h_uᵀ h_v` for each pair.
pub fn pair_logits<'t>(h: Var<'t>, pairs: &[(usize, usize)]) -> Result<Var<'t>> {
    let us = Rc::new(pairs.iter().map(|p| p.0).collect::<Vec<_>>());
    let vs = Rc::new(pairs.iter().map(|p| p.1).collect::<Vec<_>>());
    h.gather_rows(us)?.mul(h.gather_rows(vs)?)?.row_sum()
}

/// Link-prediction BCE, `-mean log σ(h_uᵀh_v) - mean log σ(-h_uᵀh_u')`.
pub fn lp_loss<'t>(
    h: Var<'t>,
    positives: &[(usize, usize)],
    negatives: &[(usize, usize)],
) -> Result<Var<'t>> {
    if positives.is_empty() || negatives.is_empty() {
        return Err(Error::InvalidArgument("empty positive or negative pair set".into()));
    }
    Ok(bce_pair(pair_logits(h, positives)?, pair_logits(h, negatives)?))
}

/// Undirected pair key with the smaller index first.
fn key(u: usize, v: usize) -> (usize, usize) {
    if u < v {
        (u, v)
    } else {
        (v, u)
    }
}

/// I.i.d. uniform draws from unordered pairs `{u, v}`, `u != v`, absent from
/// `observed`.
pub fn sample_negatives<R: Rng + ?Sized>(
    n: usize,
    observed: &HashSet<(usize, usize)>,
    count: usize,
    rng: &mut R,
) -> Result<Vec<(usize, usize)>> {
    let total = n * n.saturating_sub(1) / 2;
    if total == 0 || observed.len() as f64 > 0.95 * total as f64 {
        return Err(Error::InvalidArgument(format!(
            "{} of {} pairs observed; too dense to sample negatives",
            observed.len(),
            total
        )));
    }
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let u = rng.gen_range(0..n);
        let v = rng.gen_range(0..n);
        if u == v || observed.contains(&key(u, v)) {
            continue;
        }
        out.push(key(u, v));
    }
    Ok(out)
}

fn with_hemi<'t>(
    tape: &'t Tape,
    supervised: Var<'t>,
    vars: &ParamVars<'t>,
    inputs: &ModelInputs,
    config: &HemiConfig,
    hemi_weight: Option<f64>,
    rng: &mut ChaCha8Rng,
) -> Result<Var<'t>> {
    match hemi_weight {
        None => Ok(supervised),
        Some(w) => supervised.add(selfsup_loss(tape, vars, inputs, config, rng)?.scale(w)),
    }
}

fn fused_of<'t>(tape: &'t Tape, vars: &ParamVars<'t>, inputs: &ModelInputs) -> Result<Var<'t>> {
    let x = tape.constant(inputs.features.clone());
    Ok(forward(tape, vars, &inputs.adjs, x)?.fused)
}

/// Semi-supervised node classification: cross-entropy of `softmax(Z W_task)`
/// on the labeled nodes plus `hemi_weight` times the self-supervised loss.
/// `hemi_weight = None` trains the supervised objective alone.
pub fn train_augmented_nc(
    inputs: &ModelInputs,
    labels: &[(usize, usize)],
    num_classes: usize,
    config: &HemiConfig,
    hemi_weight: Option<f64>,
) -> Result<Augmented> {
    config.validate()?;
    if labels.is_empty() {
        return Err(Error::InvalidArgument("no labeled nodes".into()));
    }
    if num_classes < 2 {
        return Err(Error::InvalidArgument("need at least two classes".into()));
    }
    let n = inputs.node_count();
    if let Some(&(v, c)) = labels.iter().find(|&&(v, c)| v >= n || c >= num_classes) {
        return Err(Error::Data(format!(
            "label ({v}, {c}) refers to an unknown node or class"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let model = ModelParams::init(inputs.in_dim(), inputs.num_metapaths(), config, &mut rng)?;
    let task = Tensor::glorot(config.dim, num_classes, &mut rng);
    let (best, report) = optimize(
        Learnable {
            model,
            task: Some(task),
        },
        config,
        &mut rng,
        &mut |_, _| {},
        |tape, vars, task, rng| {
            let logits = fused_of(tape, vars, inputs)?.matmul(task.expect("task head"))?;
            let sup = nc_loss(tape, logits, labels)?;
            with_hemi(tape, sup, vars, inputs, config, hemi_weight, rng)
        },
    )?;
    Ok(Augmented {
        params: best.model,
        w_task: best.task.expect("task head"),
        report,
    })
}

/// Link prediction: BCE between observed pairs and as many freshly sampled
/// unobserved pairs per epoch, on `h = Z W_task`, plus the weighted
/// self-supervised loss.
pub fn train_augmented_lp(
    inputs: &ModelInputs,
    positives: &[(usize, usize)],
    config: &HemiConfig,
    hemi_weight: Option<f64>,
) -> Result<Augmented> {
    config.validate()?;
    if positives.is_empty() {
        return Err(Error::InvalidArgument("no positive edges".into()));
    }
    let n = inputs.node_count();
    let mut observed = HashSet::new();
    for &(u, v) in positives {
        if u >= n || v >= n {
            return Err(Error::Data(format!("edge ({u}, {v}) outside {n} nodes")));
        }
        if u != v {
            observed.insert(key(u, v));
        }
    }
    let positives: Vec<(usize, usize)> = {
        let mut p: Vec<_> = observed.iter().copied().collect();
        p.sort_unstable();
        p
    };
    if positives.is_empty() {
        return Err(Error::InvalidArgument("only self-pairs given as positives".into()));
    }
    // fail early rather than on the first epoch
    sample_negatives(n, &observed, 0, &mut ChaCha8Rng::seed_from_u64(0))?;

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let model = ModelParams::init(inputs.in_dim(), inputs.num_metapaths(), config, &mut rng)?;
    let task = Tensor::glorot(config.dim, config.dim, &mut rng);
    let (best, report) = optimize(
        Learnable {
            model,
            task: Some(task),
        },
        config,
        &mut rng,
        &mut |_, _| {},
        |tape, vars, task, rng| {
            let negatives = sample_negatives(n, &observed, positives.len(), rng)?;
            let h = fused_of(tape, vars, inputs)?.matmul(task.expect("task head"))?;
            let sup = lp_loss(h, &positives, &negatives)?;
            with_hemi(tape, sup, vars, inputs, config, hemi_weight, rng)
        },
    )?;
    Ok(Augmented {
        params: best.model,
        w_task: best.task.expect("task head"),
        report,
    })
}
