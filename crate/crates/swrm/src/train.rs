//! Training: Adam over the flat parameter vector, one tape per minibatch,
//! early stopping on validation MAE, and multi-seed orchestration with
//! averaged test metrics.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::{AblationFlags, ModelDims, ResolvedConfig};
use crate::corpus::Utterance;
use crate::error::SwrmError;
use crate::eval::{compute_metrics, mean_report, MetricsReport};
use crate::fusion::{
    generate_unimodal_labels, multitask_loss, PseudoLabelGenerator, SequencePooling,
};
use crate::lexicon::Lexicon;
use crate::lm::MaskedLm;
use crate::model::{prepare_utterance, PreparedUtterance, SwrmModel};
use crate::tape::Tape;
use crate::util::derive_seed;

/// Adam with the conventional defaults (β₁ 0.9, β₂ 0.999, ε 1e-8).
pub struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl Adam {
    pub fn new(lr: f64, n_params: usize) -> Self {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
            t: 0,
        }
    }

    /// One update in place. `grads` must line up with `params`.
    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) {
        assert_eq!(params.len(), grads.len(), "gradient/parameter mismatch");
        assert_eq!(params.len(), self.m.len(), "optimizer sized for another model");
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for i in 0..params.len() {
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * grads[i];
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * grads[i] * grads[i];
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            params[i] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
        }
    }
}

/// Everything the loop needs beyond the data itself.
#[derive(Clone, Debug)]
pub struct TrainOptions {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub patience: usize,
    pub unimodal_weights: [f64; 3],
    pub ablate: AblationFlags,
    pub pooling: SequencePooling,
}

impl TrainOptions {
    pub fn from_config(cfg: &ResolvedConfig) -> Self {
        TrainOptions {
            learning_rate: cfg.train.learning_rate,
            batch_size: cfg.train.batch_size,
            epochs: cfg.train.epochs,
            patience: cfg.train.patience,
            unimodal_weights: cfg.train.unimodal_weights,
            ablate: cfg.ablate,
            pooling: cfg.pooling,
        }
    }
}

/// The three splits, already pushed through the adapter and detector.
pub struct TrainData<'a> {
    pub train: &'a [PreparedUtterance],
    pub valid: &'a [PreparedUtterance],
    pub test: &'a [PreparedUtterance],
}

/// One line of a seed's training log.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub valid_mae: f64,
}

/// The result of one fully trained seed.
#[derive(Debug)]
pub struct SeedOutcome {
    pub seed: u64,
    pub epochs_run: usize,
    pub best_valid_mae: f64,
    pub history: Vec<EpochRecord>,
    /// Metrics of the restored-best model on the test split; absent when
    /// there is none.
    pub test_report: Option<MetricsReport>,
}

pub struct MultiSeedOutcome {
    pub per_seed: Vec<SeedOutcome>,
    /// Field-wise average of the per-seed test reports.
    pub mean: Option<MetricsReport>,
}

/// Run adapter embedding, alignment, and detection over a whole split.
/// This is parameter-free, so it happens once, before any epoch.
pub fn prepare_split(
    utterances: &[Utterance],
    lm: &dyn MaskedLm,
    lexicon: &Lexicon,
    k: usize,
    ablate: &AblationFlags,
) -> Result<Vec<PreparedUtterance>, SwrmError> {
    utterances
        .iter()
        .map(|u| prepare_utterance(u, lm, lexicon, k, ablate))
        .collect()
}

/// Fused predictions for a prepared slice, in input order, paired with the
/// gold labels.
pub fn predict_split(
    model: &SwrmModel,
    prepared: &[PreparedUtterance],
    ablate: &AblationFlags,
    pooling: SequencePooling,
) -> Result<(Vec<f64>, Vec<f64>), SwrmError> {
    let mut preds = Vec::with_capacity(prepared.len());
    let mut labels = Vec::with_capacity(prepared.len());
    for p in prepared {
        let mut tape = Tape::new();
        let bound = model.store.bind(&mut tape);
        let pass = model.forward(&mut tape, &bound, p, ablate, pooling)?;
        preds.push(pass.predictions.values(&tape).fused);
        labels.push(p.label);
    }
    Ok((preds, labels))
}

fn split_mae(
    model: &SwrmModel,
    prepared: &[PreparedUtterance],
    ablate: &AblationFlags,
    pooling: SequencePooling,
) -> Result<f64, SwrmError> {
    let (preds, labels) = predict_split(model, prepared, ablate, pooling)?;
    Ok(preds
        .iter()
        .zip(labels.iter())
        .map(|(p, l)| (p - l).abs())
        .sum::<f64>()
        / preds.len() as f64)
}

/// Forward one minibatch on a shared tape and return the mean loss value
/// after an optimizer step. Non-finite losses abort with the label of the
/// first bad node in the graph.
fn train_batch(
    model: &mut SwrmModel,
    batch: &[&PreparedUtterance],
    opts: &TrainOptions,
    generator: &dyn PseudoLabelGenerator,
    adam: &mut Adam,
    epoch: usize,
    batch_index: usize,
) -> Result<f64, SwrmError> {
    let mut tape = Tape::new();
    let bound = model.store.bind(&mut tape);
    let mut losses = Vec::with_capacity(batch.len());
    for p in batch {
        let pass = model.forward(&mut tape, &bound, p, &opts.ablate, opts.pooling)?;
        let text = tape.value(pass.text_view).to_vec();
        let visual = tape.value(pass.visual_view).to_vec();
        let acoustic = tape.value(pass.acoustic_view).to_vec();
        let targets = generate_unimodal_labels(p.label, &text, &visual, &acoustic, generator);
        losses.push(multitask_loss(
            &mut tape,
            &pass.predictions,
            p.label,
            targets,
            opts.unimodal_weights,
        ));
    }
    let loss = tape.mean_of(&losses);
    let loss_value = tape.value(loss)[0];
    if !loss_value.is_finite() {
        let role = tape
            .first_non_finite()
            .and_then(|(_, label)| label)
            .unwrap_or("internal-state");
        return Err(SwrmError::Divergence {
            role: role.to_string(),
            epoch,
            batch: batch_index,
        });
    }
    let grads = tape.backward(loss);
    let grad_vec = model.store.gather_grads(&bound, &grads);
    adam.step(model.store.data_mut(), &grad_vec);
    Ok(loss_value)
}

/// Train one already-initialized model. Epoch order is shuffled with a
/// seed derived from `seed`, validation MAE drives early stopping, and the
/// best parameters are restored before the final test evaluation.
pub fn train_one_seed(
    model: &mut SwrmModel,
    data: &TrainData,
    opts: &TrainOptions,
    seed: u64,
    generator: &dyn PseudoLabelGenerator,
) -> Result<SeedOutcome, SwrmError> {
    if data.train.is_empty() {
        return Err(SwrmError::Config("the training split is empty".into()));
    }
    if opts.batch_size == 0 {
        return Err(SwrmError::Config("batch size must be at least 1".into()));
    }
    let monitor = if data.valid.is_empty() {
        log::warn!("no validation split; early stopping monitors the training split");
        data.train
    } else {
        data.valid
    };

    let mut adam = Adam::new(opts.learning_rate, model.store.data().len());
    let mut best_params = model.store.data().to_vec();
    let mut best_valid_mae = f64::INFINITY;
    let mut stale_epochs = 0usize;
    let mut history = Vec::new();
    let mut order: Vec<usize> = (0..data.train.len()).collect();

    for epoch in 1..=opts.epochs {
        let mut rng =
            ChaCha8Rng::seed_from_u64(derive_seed(seed, &format!("shuffle-epoch-{epoch}")));
        order.shuffle(&mut rng);

        let mut epoch_loss = 0.0;
        let mut batches = 0usize;
        for (batch_index, chunk) in order.chunks(opts.batch_size).enumerate() {
            let batch: Vec<&PreparedUtterance> =
                chunk.iter().map(|&i| &data.train[i]).collect();
            epoch_loss +=
                train_batch(model, &batch, opts, generator, &mut adam, epoch, batch_index)?;
            batches += 1;
        }
        let train_loss = epoch_loss / batches as f64;
        let valid_mae = split_mae(model, monitor, &opts.ablate, opts.pooling)?;
        history.push(EpochRecord {
            epoch,
            train_loss,
            valid_mae,
        });
        log::info!("seed {seed} epoch {epoch}: loss {train_loss:.4}, valid mae {valid_mae:.4}");

        if valid_mae < best_valid_mae {
            best_valid_mae = valid_mae;
            best_params.copy_from_slice(model.store.data());
            stale_epochs = 0;
        } else {
            stale_epochs += 1;
            if stale_epochs >= opts.patience {
                log::info!(
                    "seed {seed}: no improvement for {stale_epochs} epochs, stopping at {epoch}"
                );
                break;
            }
        }
    }

    model.store.data_mut().copy_from_slice(&best_params);
    let test_report = if data.test.is_empty() {
        None
    } else {
        let (preds, labels) = predict_split(model, data.test, &opts.ablate, opts.pooling)?;
        Some(compute_metrics(&preds, &labels)?)
    };

    Ok(SeedOutcome {
        seed,
        epochs_run: history.len(),
        best_valid_mae,
        history,
        test_report,
    })
}

/// Train one model per seed and average the test reports. `on_seed_done`
/// sees each trained model (parameters already restored to its best epoch)
/// so callers can persist checkpoints and logs.
#[allow(clippy::too_many_arguments)]
pub fn train_seeds(
    dims: &ModelDims,
    visual_feature_dim: usize,
    acoustic_feature_dim: usize,
    data: &TrainData,
    opts: &TrainOptions,
    seeds: &[u64],
    generator: &dyn PseudoLabelGenerator,
    mut on_seed_done: impl FnMut(&SwrmModel, &SeedOutcome) -> Result<(), SwrmError>,
) -> Result<MultiSeedOutcome, SwrmError> {
    if seeds.is_empty() {
        return Err(SwrmError::Config("at least one seed is required".into()));
    }
    let mut per_seed = Vec::with_capacity(seeds.len());
    for &seed in seeds {
        let mut model = SwrmModel::new(dims, visual_feature_dim, acoustic_feature_dim)?;
        model.init(seed);
        let outcome = train_one_seed(&mut model, data, opts, seed, generator)?;
        on_seed_done(&model, &outcome)?;
        per_seed.push(outcome);
    }
    let reports: Vec<MetricsReport> = per_seed
        .iter()
        .filter_map(|o| o.test_report)
        .collect();
    let mean = mean_report(&reports);
    Ok(MultiSeedOutcome { per_seed, mean })
}
