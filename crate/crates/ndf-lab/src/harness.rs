//! End-to-end experiment drivers.
//!
//! Three layers:
//!
//! 1. [`run_episode`] plays one policy-training episode: a fresh base model
//!    consumes shuffled mini-batches, the policy filters each batch, kept
//!    instances accumulate into full-size updates, and the episode ends when
//!    held-out accuracy crosses `tau` (or the arrival horizon runs out). The
//!    terminal reward is `-ln(i_tau / horizon)`.
//! 2. [`train_policy`] loops episodes, applies one REINFORCE update after
//!    each, and returns the snapshot that achieved the best terminal reward.
//! 3. [`apply_strategy`] trains the base model on the full dataset under any
//!    filtration strategy, logging the test-accuracy curve against effective
//!    training instances plus the hardness and drop-ratio logs.
//!
//! Per-run sub-seeds are derived from the four config seeds, so a whole
//! experiment is reproducible byte for byte.

use std::path::PathBuf;

use crate::data::{epoch_stream, generate_blob_pair, load_mnist, split, Dataset, SplitSpec};
use crate::error::{Error, Result};
use crate::features::{featurize, ModelHistory};
use crate::nn::{cross_entropy_losses, evaluate_accuracy, MlpModel};
use crate::optim::OptimizerState;
use crate::policy::{init_policy, PolicyNet, RewardBaseline, TrajectoryLog};
use crate::rng::{derive_seed, rng_from_seed, streams, ChaCha8Rng};
use crate::strategies::{
    AccumulationBuffer, BatchContext, DropLog, FiltrationStrategy, HardnessHistogram,
};

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Seeds {
    pub data: u64,
    pub policy: u64,
    pub strategy: u64,
    pub model: u64,
}

impl Default for Seeds {
    fn default() -> Self {
        Seeds {
            data: 1,
            policy: 2,
            strategy: 3,
            model: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum DatasetSpec {
    /// Standard IDX file pairs under `dir`; `subset` optionally samples that
    /// many training instances (seeded) before anything else happens.
    Mnist { dir: PathBuf, subset: Option<usize> },
    /// Synthetic Gaussian blobs; the test split shares class centers.
    Blobs {
        classes: usize,
        per_class: usize,
        test_per_class: usize,
        feature_dim: usize,
        spread: f64,
    },
}

impl DatasetSpec {
    pub fn default_blobs() -> Self {
        DatasetSpec::Blobs {
            classes: 10,
            per_class: 500,
            test_per_class: 200,
            feature_dim: 20,
            spread: 0.85,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StrategyId {
    Unfiltered,
    Spl,
    RandDrop,
    Ndf,
}

impl StrategyId {
    pub fn name(self) -> &'static str {
        match self {
            StrategyId::Unfiltered => "unfiltered",
            StrategyId::Spl => "spl",
            StrategyId::RandDrop => "randdrop",
            StrategyId::Ndf => "ndf",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "unfiltered" => Ok(StrategyId::Unfiltered),
            "spl" => Ok(StrategyId::Spl),
            "randdrop" => Ok(StrategyId::RandDrop),
            "ndf" => Ok(StrategyId::Ndf),
            other => Err(Error::config(format!(
                "unknown strategy `{other}` (expected unfiltered|spl|randdrop|ndf)"
            ))),
        }
    }
}

/// What `i_tau` counts when the dev threshold is crossed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ITauMode {
    /// Arrived mini-batches (the default reading of "first mini-batch index").
    Arrivals,
    /// Base-model updates performed.
    Updates,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub dataset: DatasetSpec,
    /// Mini-batch size M; every model update consumes exactly this many.
    pub batch_size: usize,
    pub strategy: StrategyId,
    /// Dev-accuracy threshold defining the terminal reward.
    pub tau: f64,
    /// Arrival cap T' per episode.
    pub horizon: u64,
    /// SPL epochs-to-full-inclusion S.
    pub spl_epochs: usize,
    /// Ratio log to replay (randdrop).
    pub droplog_path: Option<PathBuf>,
    /// Trained policy checkpoint (ndf apply runs).
    pub policy_checkpoint: Option<PathBuf>,
    /// Episode count L for policy training.
    pub episodes: u64,
    /// Discount factor, carried for completeness; inert under the
    /// terminal-only reward.
    pub gamma: f64,
    pub seeds: Seeds,
    /// Test/dev accuracy cadence (in base-model updates) for apply runs;
    /// fixes the effective-instance grid of the curves.
    pub eval_every_updates: u64,
    /// Dev-accuracy cadence inside policy-training episodes. This sets the
    /// resolution of `i_tau` and hence of the reward; the coarse apply-phase
    /// cadence quantizes rewards so heavily at small scale that episodes
    /// become indistinguishable.
    pub episode_eval_every_updates: u64,
    /// Repeated runs to average.
    pub runs: usize,
    /// |D'|: instances sampled for policy training, dev set included.
    pub ndf_subset_size: usize,
    /// |D'_dev| carved out of the subset.
    pub dev_size: usize,
    /// Passes over the full dataset when applying a strategy.
    pub apply_epochs: usize,
    pub policy_hidden_dim: usize,
    pub policy_lr: f64,
    pub base_lr: f64,
    pub base_momentum: f64,
    pub base_hidden_dim: usize,
    /// Base-model weights start uniform in (-init_scale, init_scale).
    pub init_scale: f64,
    pub i_tau_mode: ITauMode,
    /// Apply the NDF policy by thresholding at 0.5 instead of sampling.
    pub ndf_threshold_mode: bool,
}

impl Default for RunConfig {
    /// Desk-scale defaults: synthetic blobs, a 20x32x10 base model, M = 20,
    /// tau = 0.90, T' = 2000, L = 50, 5 runs.
    fn default() -> Self {
        RunConfig {
            dataset: DatasetSpec::default_blobs(),
            batch_size: 20,
            strategy: StrategyId::Unfiltered,
            tau: 0.90,
            horizon: 2000,
            spl_epochs: 4,
            droplog_path: None,
            policy_checkpoint: None,
            episodes: 50,
            gamma: 0.99,
            seeds: Seeds::default(),
            eval_every_updates: 25,
            episode_eval_every_updates: 5,
            runs: 5,
            ndf_subset_size: 5000,
            dev_size: 1000,
            apply_epochs: 8,
            policy_hidden_dim: 12,
            policy_lr: crate::policy::DEFAULT_POLICY_LR,
            base_lr: 0.01,
            base_momentum: 0.9,
            base_hidden_dim: 32,
            init_scale: 0.05,
            i_tau_mode: ITauMode::Arrivals,
            ndf_threshold_mode: false,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::config("batch size must be >= 1"));
        }
        if !(self.tau > 0.0 && self.tau < 1.0) {
            return Err(Error::config("tau must lie strictly inside (0,1)"));
        }
        if self.horizon == 0 {
            return Err(Error::config("horizon must be >= 1"));
        }
        if self.episodes == 0 {
            return Err(Error::config("episode count must be >= 1"));
        }
        if self.runs == 0 {
            return Err(Error::config("run count must be >= 1"));
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(Error::config("gamma must lie in [0,1]"));
        }
        if self.eval_every_updates == 0 || self.episode_eval_every_updates == 0 {
            return Err(Error::config("eval cadences must be >= 1"));
        }
        if self.spl_epochs == 0 {
            return Err(Error::config("spl epochs must be >= 1"));
        }
        if self.apply_epochs == 0 {
            return Err(Error::config("apply epochs must be >= 1"));
        }
        if self.dev_size == 0 || self.dev_size >= self.ndf_subset_size {
            return Err(Error::config(
                "dev size must be >= 1 and smaller than the policy subset",
            ));
        }
        if self.init_scale < 0.0 || !self.init_scale.is_finite() {
            return Err(Error::config("init scale must be finite and >= 0"));
        }
        Ok(())
    }

    fn base_layer_sizes(&self, feature_dim: usize, classes: usize) -> Vec<usize> {
        vec![feature_dim, self.base_hidden_dim, classes]
    }
}

// ---------------------------------------------------------------------------
// Data preparation
// ---------------------------------------------------------------------------

/// The datasets one experiment works with.
#[derive(Debug, Clone)]
pub struct PreparedData {
    /// Full training set D (after optional subsetting): the apply phase
    /// streams this.
    pub train: Dataset,
    pub test: Dataset,
    /// D'_train: the policy-training stream.
    pub policy_train: Dataset,
    /// D'_dev: the held-out set that defines the reward.
    pub policy_dev: Dataset,
}

/// Loads or generates the datasets and carves out the policy subset.
pub fn prepare_data(config: &RunConfig) -> Result<PreparedData> {
    let (train, test) = match &config.dataset {
        DatasetSpec::Mnist { dir, subset } => {
            let train = load_mnist(
                &dir.join("train-images-idx3-ubyte"),
                &dir.join("train-labels-idx1-ubyte"),
            )?;
            let test = load_mnist(
                &dir.join("t10k-images-idx3-ubyte"),
                &dir.join("t10k-labels-idx1-ubyte"),
            )?;
            let train = match subset {
                Some(n) => train.sample_subset(*n, config.seeds.data)?,
                None => train,
            };
            (train, test)
        }
        DatasetSpec::Blobs {
            classes,
            per_class,
            test_per_class,
            feature_dim,
            spread,
        } => {
            let (train, test) = generate_blob_pair(
                *classes,
                *per_class,
                *test_per_class,
                *feature_dim,
                *spread,
                config.seeds.data,
            )?;
            let test = test.ok_or_else(|| {
                Error::config("blob dataset needs test_per_class >= 1")
            })?;
            (train, test)
        }
    };

    let spec = SplitSpec {
        ndf_subset_size: config.ndf_subset_size.min(train.len()),
        dev_size: config.dev_size,
        seed: config.seeds.data,
    };
    let (policy_train, policy_dev, _) = split(&train, spec)?;
    if policy_train.len() < config.batch_size {
        return Err(Error::config(
            "policy training split smaller than one mini-batch",
        ));
    }
    Ok(PreparedData {
        train,
        test,
        policy_train,
        policy_dev,
    })
}

// ---------------------------------------------------------------------------
// Episodes
// ---------------------------------------------------------------------------

/// Outcome of one policy-training episode. `baseline` is filled in by
/// [`train_policy`] once the post-episode baseline update has run.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeRecord {
    /// 1-based episode index l.
    pub episode: u64,
    /// First mini-batch index at which dev accuracy reached tau, or the
    /// horizon if it never did.
    pub i_tau: u64,
    /// Terminal reward `-ln(i_tau / horizon)`.
    pub reward: f64,
    /// Baseline b_l after this episode's update.
    pub baseline: f64,
    /// Mini-batches consumed by the episode.
    pub episode_len: u64,
}

/// A point of the convergence curve: cumulative instances consumed by model
/// updates versus test accuracy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AccuracyCurvePoint {
    pub effective_instances: u64,
    pub test_accuracy: f64,
}

fn episode_epoch_seed(seeds: Seeds, episode: u64, epoch: u64) -> u64 {
    let base = derive_seed(seeds.data, streams::EPISODE_SHUFFLE, episode);
    derive_seed(base, streams::APPLY_SHUFFLE, epoch)
}

/// Plays one episode of policy-filtered training on `(d_train, d_dev)`.
///
/// A fresh base model (same seed every episode) consumes shuffled
/// mini-batches; per batch the policy samples keep bits, kept instances pass
/// through the accumulation buffer, dev accuracy is measured every
/// `eval_every_updates` updates, and the episode stops on the first
/// measurement at or above `tau` or once `horizon` mini-batches arrived.
pub fn run_episode(
    policy: &PolicyNet,
    d_train: &Dataset,
    d_dev: &Dataset,
    config: &RunConfig,
    episode: u64,
) -> Result<(EpisodeRecord, TrajectoryLog)> {
    if config.batch_size == 0 || config.horizon == 0 || config.episode_eval_every_updates == 0 {
        return Err(Error::input("batch size, horizon, and cadence must be >= 1"));
    }
    if !(0.0..1.0).contains(&config.tau) {
        return Err(Error::input("tau must lie in [0,1)"));
    }
    if d_train.len() < config.batch_size {
        return Err(Error::input("training split smaller than one mini-batch"));
    }

    let classes = d_train.num_classes();
    let mut model = MlpModel::new(
        &config.base_layer_sizes(d_train.feature_dim(), classes),
        config.init_scale,
        derive_seed(config.seeds.model, streams::MODEL_INIT, 0),
    )?;
    let mut optimizer =
        OptimizerState::momentum_sgd(&model, config.base_lr, config.base_momentum);
    let mut history = ModelHistory::new(config.horizon)?;
    let mut buffer = AccumulationBuffer::new(config.batch_size)?;
    let mut trajectory = TrajectoryLog::new();
    let mut policy_rng = rng_from_seed(derive_seed(
        config.seeds.policy,
        streams::POLICY_SAMPLE,
        episode,
    ));

    let mut arrivals: u64 = 0;
    let mut updates: u64 = 0;
    let mut pending_dev: Option<f64> = None;
    let mut crossed: Option<u64> = None;

    'episode: for epoch in 0.. {
        let batches = epoch_stream(
            d_train,
            config.batch_size,
            episode_epoch_seed(config.seeds, episode, epoch),
            arrivals + 1,
        )?;
        for batch in &batches {
            arrivals += 1;
            let (features, labels) = d_train.batch_matrix(&batch.indices);
            let probs = model.forward(&features)?;
            let losses = cross_entropy_losses(&probs, &labels)?;

            let mut feats = Vec::with_capacity(labels.len());
            for i in 0..labels.len() {
                feats.push(featurize(
                    labels[i],
                    classes,
                    probs.row(i),
                    losses[i],
                    &history,
                )?);
            }
            let decision = policy.decide(&feats, &mut policy_rng)?;
            let kept: Vec<usize> = batch
                .indices
                .iter()
                .zip(&decision.keep_mask)
                .filter(|&(_, &keep)| keep)
                .map(|(&i, _)| i)
                .collect();
            trajectory.push(feats, decision.keep_mask);

            for ready in buffer.accumulate(kept) {
                debug_assert_eq!(ready.len(), config.batch_size);
                let (bf, bl) = d_train.batch_matrix(&ready);
                let lg = model.loss_and_grad(&bf, &bl)?;
                optimizer.step(&mut model, &lg.grads)?;
                updates += 1;
                if updates % config.episode_eval_every_updates == 0 {
                    let acc = evaluate_accuracy(&model, d_dev)?;
                    pending_dev = Some(acc);
                    if acc >= config.tau {
                        crossed = Some(match config.i_tau_mode {
                            ITauMode::Arrivals => arrivals,
                            ITauMode::Updates => updates,
                        });
                        break;
                    }
                }
            }
            history.update(&losses, pending_dev.take())?;
            if crossed.is_some() || arrivals >= config.horizon {
                break 'episode;
            }
        }
    }

    let i_tau = crossed.unwrap_or(config.horizon);
    let reward = -((i_tau as f64 / config.horizon as f64).ln());
    Ok((
        EpisodeRecord {
            episode,
            i_tau,
            reward,
            baseline: 0.0,
            episode_len: arrivals,
        },
        trajectory,
    ))
}

/// Result of policy training: the best-performing snapshot plus the full
/// per-episode log.
#[derive(Debug, Clone)]
pub struct TrainedPolicy {
    pub policy: PolicyNet,
    pub baseline: RewardBaseline,
    /// Episode whose snapshot was kept (earliest on reward ties).
    pub best_episode: u64,
    pub records: Vec<EpisodeRecord>,
}

/// Runs `episodes` training episodes with one REINFORCE update after each
/// and keeps the parameters that achieved the best terminal reward. The kept
/// snapshot is the policy as it *acted* during its episode, i.e. before that
/// episode's update.
pub fn train_policy(
    d_train: &Dataset,
    d_dev: &Dataset,
    config: &RunConfig,
) -> Result<TrainedPolicy> {
    let classes = d_train.num_classes();
    let mut policy = init_policy(
        crate::features::feature_dim(classes),
        config.policy_hidden_dim,
        derive_seed(config.seeds.policy, streams::POLICY_INIT, 0),
        config.policy_lr,
    );
    let mut baseline = RewardBaseline::new();
    let mut best: Option<(f64, u64, PolicyNet)> = None;
    let mut records = Vec::with_capacity(config.episodes as usize);

    for episode in 1..=config.episodes {
        let (mut record, trajectory) = run_episode(&policy, d_train, d_dev, config, episode)?;
        if best.as_ref().map_or(true, |(r, _, _)| record.reward > *r) {
            best = Some((record.reward, episode, policy.clone()));
        }
        policy.reinforce_update(&trajectory, record.reward, &mut baseline)?;
        record.baseline = baseline.value();
        records.push(record);
    }

    let (_, best_episode, best_policy) = best.expect("at least one episode ran");
    Ok(TrainedPolicy {
        policy: best_policy,
        baseline,
        best_episode,
        records,
    })
}

// ---------------------------------------------------------------------------
// Strategy application
// ---------------------------------------------------------------------------

/// Everything an apply run produces.
#[derive(Debug, Clone)]
pub struct ApplyOutputs {
    pub curve: Vec<AccuracyCurvePoint>,
    pub histogram: HardnessHistogram,
    pub droplog: DropLog,
    /// Instances consumed by updates; always `updates * batch_size`.
    pub effective_instances: u64,
    pub updates: u64,
    pub arrivals: u64,
}

/// Trains the base model on `train` under `strategy` for
/// `config.apply_epochs` passes, logging a test-accuracy curve point every
/// `eval_every_updates` updates plus the hardness histogram and per-epoch
/// filter ratios. `dev` (when given) is evaluated on the same cadence purely
/// to keep the dev-accuracy state feature meaningful for policy strategies.
///
/// `run_id` offsets the data/model/strategy sub-seeds so repeated runs are
/// independent but reproducible.
pub fn apply_strategy(
    train: &Dataset,
    test: &Dataset,
    dev: Option<&Dataset>,
    strategy: &mut dyn FiltrationStrategy,
    config: &RunConfig,
    run_id: u64,
) -> Result<ApplyOutputs> {
    if train.len() < config.batch_size {
        return Err(Error::input("dataset smaller than one mini-batch"));
    }
    let classes = train.num_classes();
    let model_seed = derive_seed(
        derive_seed(config.seeds.model, streams::RUN, run_id),
        streams::MODEL_INIT,
        0,
    );
    let mut model = MlpModel::new(
        &config.base_layer_sizes(train.feature_dim(), classes),
        config.init_scale,
        model_seed,
    )?;
    let mut optimizer =
        OptimizerState::momentum_sgd(&model, config.base_lr, config.base_momentum);
    let mut history = ModelHistory::new(config.horizon)?;
    let mut buffer = AccumulationBuffer::new(config.batch_size)?;
    let mut histogram = HardnessHistogram::new(config.batch_size)?;
    let mut droplog = DropLog::default();
    let mut strategy_rng: ChaCha8Rng = rng_from_seed(derive_seed(
        derive_seed(config.seeds.strategy, streams::RUN, run_id),
        streams::STRATEGY,
        0,
    ));
    let shuffle_base = derive_seed(config.seeds.data, streams::RUN, run_id);

    let mut curve = Vec::new();
    let mut arrivals: u64 = 0;
    let mut updates: u64 = 0;
    let mut pending_dev: Option<f64> = None;

    for epoch in 0..config.apply_epochs {
        let batches = epoch_stream(
            train,
            config.batch_size,
            derive_seed(shuffle_base, streams::APPLY_SHUFFLE, epoch as u64),
            arrivals + 1,
        )?;
        let mut epoch_arrived: u64 = 0;
        let mut epoch_filtered: u64 = 0;
        for batch in &batches {
            arrivals += 1;
            let (features, labels) = train.batch_matrix(&batch.indices);
            let probs = model.forward(&features)?;
            let losses = cross_entropy_losses(&probs, &labels)?;
            let ctx = BatchContext {
                losses: &losses,
                predictions: &probs,
                labels: &labels,
                history: &history,
                epoch,
            };
            let mask = strategy.keep_mask(&ctx, &mut strategy_rng)?;
            if mask.len() != config.batch_size {
                return Err(Error::shape(format!(
                    "strategy `{}` returned mask of {} for batch of {}",
                    strategy.name(),
                    mask.len(),
                    config.batch_size
                )));
            }
            histogram.record(&losses, &mask, epoch)?;
            epoch_arrived += mask.len() as u64;
            epoch_filtered += mask.iter().filter(|&&k| !k).count() as u64;

            let kept: Vec<usize> = batch
                .indices
                .iter()
                .zip(&mask)
                .filter(|&(_, &keep)| keep)
                .map(|(&i, _)| i)
                .collect();
            for ready in buffer.accumulate(kept) {
                debug_assert_eq!(ready.len(), config.batch_size);
                let (bf, bl) = train.batch_matrix(&ready);
                let lg = model.loss_and_grad(&bf, &bl)?;
                optimizer.step(&mut model, &lg.grads)?;
                updates += 1;
                if updates % config.eval_every_updates == 0 {
                    curve.push(AccuracyCurvePoint {
                        effective_instances: updates * config.batch_size as u64,
                        test_accuracy: evaluate_accuracy(&model, test)?,
                    });
                    if let Some(dev_set) = dev {
                        pending_dev = Some(evaluate_accuracy(&model, dev_set)?);
                    }
                }
            }
            history.update(&losses, pending_dev.take())?;
        }
        droplog.push(epoch_filtered as f64 / epoch_arrived as f64)?;
    }

    Ok(ApplyOutputs {
        curve,
        histogram,
        droplog,
        effective_instances: updates * config.batch_size as u64,
        updates,
        arrivals,
    })
}

/// Builds the configured strategy, loading policy checkpoints and drop logs
/// as needed.
pub fn build_strategy(config: &RunConfig) -> Result<Box<dyn FiltrationStrategy>> {
    use crate::strategies::{NdfMode, NdfStrategy, RandDrop, SelfPaced, SplSchedule, Unfiltered};
    match config.strategy {
        StrategyId::Unfiltered => Ok(Box::new(Unfiltered)),
        StrategyId::Spl => Ok(Box::new(SelfPaced {
            schedule: SplSchedule::new(config.spl_epochs, config.batch_size)?,
        })),
        StrategyId::RandDrop => {
            let path = config.droplog_path.as_ref().ok_or_else(|| {
                Error::config("randdrop needs a drop log (--droplog)")
            })?;
            let log = crate::csvio::read_droplog(path)?;
            Ok(Box::new(RandDrop { log }))
        }
        StrategyId::Ndf => {
            let path = config.policy_checkpoint.as_ref().ok_or_else(|| {
                Error::config("ndf apply runs need a policy checkpoint (--policy)")
            })?;
            let (policy, _baseline) = PolicyNet::load_checkpoint(path)?;
            Ok(Box::new(NdfStrategy {
                policy,
                mode: if config.ndf_threshold_mode {
                    NdfMode::Threshold
                } else {
                    NdfMode::Sample
                },
            }))
        }
    }
}

// ---------------------------------------------------------------------------
// Averaging
// ---------------------------------------------------------------------------

/// Pointwise mean of several runs' curves over their common grid prefix.
/// All runs must agree on the effective-instance grid where they overlap;
/// runs may stop at different lengths because filtering varies.
pub fn average_runs(curves: &[Vec<AccuracyCurvePoint>]) -> Result<Vec<AccuracyCurvePoint>> {
    if curves.is_empty() {
        return Err(Error::input("no curves to average"));
    }
    let common = curves.iter().map(|c| c.len()).min().unwrap();
    let mut out = Vec::with_capacity(common);
    for i in 0..common {
        let grid = curves[0][i].effective_instances;
        for c in curves {
            if c[i].effective_instances != grid {
                return Err(Error::input(format!(
                    "mismatched grids at point {i}: {} vs {}",
                    c[i].effective_instances, grid
                )));
            }
        }
        let mean = curves.iter().map(|c| c[i].test_accuracy).sum::<f64>() / curves.len() as f64;
        out.push(AccuracyCurvePoint {
            effective_instances: grid,
            test_accuracy: mean,
        });
    }
    Ok(out)
}

/// Effective instances at which a curve first reaches `threshold`, if ever.
pub fn instances_to_accuracy(curve: &[AccuracyCurvePoint], threshold: f64) -> Option<u64> {
    curve
        .iter()
        .find(|p| p.test_accuracy >= threshold)
        .map(|p| p.effective_instances)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::strategies::Unfiltered;

    fn tiny_blob_config() -> RunConfig {
        RunConfig {
            dataset: DatasetSpec::Blobs {
                classes: 4,
                per_class: 60,
                test_per_class: 30,
                feature_dim: 6,
                spread: 0.25,
            },
            batch_size: 10,
            tau: 0.9,
            horizon: 200,
            episodes: 3,
            runs: 1,
            ndf_subset_size: 240,
            dev_size: 40,
            apply_epochs: 3,
            eval_every_updates: 5,
            base_hidden_dim: 12,
            ..RunConfig::default()
        }
    }

    #[test]
    fn prepared_data_has_disjoint_policy_splits() {
        let config = tiny_blob_config();
        let data = prepare_data(&config).unwrap();
        assert_eq!(data.policy_train.len() + data.policy_dev.len(), 240);
        assert_eq!(data.policy_dev.len(), 40);
        assert_eq!(data.train.len(), 240);
        assert_eq!(data.test.len(), 120);
    }

    #[test]
    fn episode_reward_zero_when_threshold_unreachable() {
        let mut config = tiny_blob_config();
        config.tau = 0.9999; // never reached at this scale
        config.horizon = 30;
        let data = prepare_data(&config).unwrap();
        let policy = init_policy(
            crate::features::feature_dim(4),
            config.policy_hidden_dim,
            1,
            config.policy_lr,
        );
        let (record, traj) =
            run_episode(&policy, &data.policy_train, &data.policy_dev, &config, 1).unwrap();
        assert_eq!(record.i_tau, 30);
        assert_eq!(record.reward, 0.0);
        assert_eq!(record.episode_len, 30);
        assert_eq!(traj.len(), 30);
    }

    #[test]
    fn episode_crossing_reward_matches_formula() {
        let mut config = tiny_blob_config();
        config.tau = 0.5; // easy threshold: crossed quickly
        let data = prepare_data(&config).unwrap();
        let policy = init_policy(
            crate::features::feature_dim(4),
            config.policy_hidden_dim,
            2,
            config.policy_lr,
        );
        let (record, _) =
            run_episode(&policy, &data.policy_train, &data.policy_dev, &config, 1).unwrap();
        assert!(record.i_tau < config.horizon);
        let expect = -((record.i_tau as f64 / config.horizon as f64).ln());
        assert_eq!(record.reward, expect);
        assert!(record.reward > 0.0);
    }

    #[test]
    fn train_policy_keeps_best_snapshot() {
        let config = tiny_blob_config();
        let data = prepare_data(&config).unwrap();
        let trained = train_policy(&data.policy_train, &data.policy_dev, &config).unwrap();
        assert_eq!(trained.records.len(), 3);
        let best_reward = trained
            .records
            .iter()
            .map(|r| r.reward)
            .fold(f64::NEG_INFINITY, f64::max);
        let first_best = trained
            .records
            .iter()
            .find(|r| r.reward == best_reward)
            .unwrap();
        assert_eq!(trained.best_episode, first_best.episode);
        assert_eq!(trained.baseline.episodes(), 3);
    }

    #[test]
    fn unfiltered_apply_never_filters_and_counts_instances() {
        let config = tiny_blob_config();
        let data = prepare_data(&config).unwrap();
        let mut strategy = Unfiltered;
        let out = apply_strategy(&data.train, &data.test, None, &mut strategy, &config, 0)
            .unwrap();
        assert!(out.droplog.ratios().iter().all(|&r| r == 0.0));
        assert_eq!(out.updates, out.arrivals);
        assert_eq!(out.effective_instances, out.updates * 10);
        assert_eq!(out.histogram.total_filtered(), 0);
        // curve x grid: cadence * batch
        for (i, p) in out.curve.iter().enumerate() {
            assert_eq!(p.effective_instances, (i as u64 + 1) * 5 * 10);
        }
    }

    #[test]
    fn apply_is_deterministic() {
        let config = tiny_blob_config();
        let data = prepare_data(&config).unwrap();
        let run = || {
            let mut strategy = Unfiltered;
            apply_strategy(&data.train, &data.test, None, &mut strategy, &config, 0)
                .unwrap()
                .curve
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn average_runs_identity_and_mean() {
        let a = vec![
            AccuracyCurvePoint { effective_instances: 100, test_accuracy: 0.8 },
            AccuracyCurvePoint { effective_instances: 200, test_accuracy: 0.9 },
        ];
        assert_eq!(average_runs(&[a.clone()]).unwrap(), a);

        let b = vec![
            AccuracyCurvePoint { effective_instances: 100, test_accuracy: 0.9 },
            AccuracyCurvePoint { effective_instances: 200, test_accuracy: 1.0 },
            AccuracyCurvePoint { effective_instances: 300, test_accuracy: 1.0 },
        ];
        let mean = average_runs(&[a.clone(), b]).unwrap();
        assert_eq!(mean.len(), 2);
        assert!((mean[0].test_accuracy - 0.85).abs() < 1e-12);
        assert!((mean[1].test_accuracy - 0.95).abs() < 1e-12);

        let shifted = vec![AccuracyCurvePoint { effective_instances: 150, test_accuracy: 0.9 }];
        assert!(average_runs(&[a, shifted]).is_err());
    }

    #[test]
    fn config_validation_catches_bad_values() {
        let mut config = tiny_blob_config();
        config.tau = 0.0;
        assert!(config.validate().is_err());
        let mut config = tiny_blob_config();
        config.runs = 0;
        assert!(config.validate().is_err());
        let mut config = tiny_blob_config();
        config.dev_size = config.ndf_subset_size;
        assert!(config.validate().is_err());
        assert!(tiny_blob_config().validate().is_ok());
    }
}
