//! Filtration strategies and the machinery that keeps them comparable.
//!
//! All strategies answer one question per arrived mini-batch: which of the
//! `M` instances may be used for training. Kept instances then pass through
//! an [`AccumulationBuffer`] so the base model is only ever updated with
//! batches of exactly `M`, whatever the strategy filtered. Filtered
//! instances are tallied by within-batch loss rank in a
//! [`HardnessHistogram`], and per-epoch filter ratios go to a [`DropLog`]
//! that the `randdrop` baseline replays.

use crate::error::{Error, Result};
use crate::features::{featurize, ModelHistory};
use crate::matrix::DenseMatrix;
use crate::policy::PolicyNet;
use crate::rng::ChaCha8Rng;

/// Everything a strategy may look at when deciding a batch. The batch itself
/// is never mutated.
pub struct BatchContext<'a> {
    /// Per-instance cross-entropy losses under the current model.
    pub losses: &'a [f64],
    /// Class probabilities under the current model, one row per instance.
    pub predictions: &'a DenseMatrix,
    pub labels: &'a [usize],
    pub history: &'a ModelHistory,
    /// 0-based epoch over the stream this batch belongs to.
    pub epoch: usize,
}

pub trait FiltrationStrategy {
    fn name(&self) -> &'static str;

    /// Returns the keep mask for the batch: `true` = train on it.
    fn keep_mask(&mut self, ctx: &BatchContext<'_>, rng: &mut ChaCha8Rng) -> Result<Vec<bool>>;
}

// ---------------------------------------------------------------------------
// Unfiltered
// ---------------------------------------------------------------------------

/// Keeps every instance; the no-selection baseline run through the same
/// code path as everything else.
#[derive(Debug, Clone, Default)]
pub struct Unfiltered;

impl FiltrationStrategy for Unfiltered {
    fn name(&self) -> &'static str {
        "unfiltered"
    }

    fn keep_mask(&mut self, ctx: &BatchContext<'_>, _rng: &mut ChaCha8Rng) -> Result<Vec<bool>> {
        Ok(vec![true; ctx.losses.len()])
    }
}

// ---------------------------------------------------------------------------
// Self-paced learning
// ---------------------------------------------------------------------------

/// Linear self-paced schedule: at epoch `e` the `K(e)` largest-loss instances
/// of each batch are filtered, with `K(0) = M-1` dropping to `K(S) = 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplSchedule {
    /// Epochs until all data is included.
    pub epochs_to_full: usize,
    pub batch_size: usize,
}

impl SplSchedule {
    pub fn new(epochs_to_full: usize, batch_size: usize) -> Result<Self> {
        if epochs_to_full == 0 {
            return Err(Error::input("SPL schedule needs at least one epoch"));
        }
        if batch_size == 0 {
            return Err(Error::input("batch size must be positive"));
        }
        Ok(SplSchedule {
            epochs_to_full,
            batch_size,
        })
    }
}

/// `K(e) = max(0, round((M-1) * (1 - e/S)))`, rounding half up.
pub fn spl_threshold(schedule: SplSchedule, epoch: usize) -> usize {
    let m = schedule.batch_size as f64;
    let s = schedule.epochs_to_full as f64;
    let raw = (m - 1.0) * (1.0 - epoch as f64 / s);
    raw.round().max(0.0) as usize
}

/// Filters the `k` largest-loss instances; on equal losses the lower arrival
/// index is filtered first. Exactly `losses.len() - k` entries stay `true`.
pub fn spl_mask(losses: &[f64], k: usize) -> Result<Vec<bool>> {
    if k > 0 && k >= losses.len() {
        return Err(Error::input(format!(
            "cannot filter {k} of {} instances",
            losses.len()
        )));
    }
    let mut order: Vec<usize> = (0..losses.len()).collect();
    order.sort_by(|&a, &b| {
        losses[b]
            .partial_cmp(&losses[a])
            .expect("losses are finite")
            .then(a.cmp(&b))
    });
    let mut mask = vec![true; losses.len()];
    for &idx in order.iter().take(k) {
        mask[idx] = false;
    }
    Ok(mask)
}

#[derive(Debug, Clone)]
pub struct SelfPaced {
    pub schedule: SplSchedule,
}

impl FiltrationStrategy for SelfPaced {
    fn name(&self) -> &'static str {
        "spl"
    }

    fn keep_mask(&mut self, ctx: &BatchContext<'_>, _rng: &mut ChaCha8Rng) -> Result<Vec<bool>> {
        let k = spl_threshold(self.schedule, ctx.epoch).min(ctx.losses.len().saturating_sub(1));
        spl_mask(ctx.losses, k)
    }
}

// ---------------------------------------------------------------------------
// Random drop
// ---------------------------------------------------------------------------

/// Per-epoch filter ratios, as logged by a run and replayed by `randdrop`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DropLog {
    ratios: Vec<f64>,
}

impl DropLog {
    pub fn new(ratios: Vec<f64>) -> Result<Self> {
        if ratios.iter().any(|r| !(0.0..=1.0).contains(r)) {
            return Err(Error::input("filter ratios must lie in [0,1]"));
        }
        Ok(DropLog { ratios })
    }

    pub fn push(&mut self, ratio: f64) -> Result<()> {
        if !(0.0..=1.0).contains(&ratio) {
            return Err(Error::input("filter ratios must lie in [0,1]"));
        }
        self.ratios.push(ratio);
        Ok(())
    }

    pub fn ratios(&self) -> &[f64] {
        &self.ratios
    }

    pub fn is_empty(&self) -> bool {
        self.ratios.is_empty()
    }

    /// Ratio for an epoch; epochs beyond the log reuse its last entry.
    pub fn ratio_for_epoch(&self, epoch: usize) -> Result<f64> {
        if self.ratios.is_empty() {
            return Err(Error::input("drop log is empty"));
        }
        Ok(self.ratios[epoch.min(self.ratios.len() - 1)])
    }
}

/// Independently filters each of `m` instances with probability `ratio`.
pub fn randdrop_mask(m: usize, ratio: f64, rng: &mut ChaCha8Rng) -> Result<Vec<bool>> {
    use rand::Rng;
    if !(0.0..=1.0).contains(&ratio) {
        return Err(Error::input("filter ratio must lie in [0,1]"));
    }
    Ok((0..m).map(|_| rng.gen::<f64>() >= ratio).collect())
}

#[derive(Debug, Clone)]
pub struct RandDrop {
    pub log: DropLog,
}

impl FiltrationStrategy for RandDrop {
    fn name(&self) -> &'static str {
        "randdrop"
    }

    fn keep_mask(&mut self, ctx: &BatchContext<'_>, rng: &mut ChaCha8Rng) -> Result<Vec<bool>> {
        let ratio = self.log.ratio_for_epoch(ctx.epoch)?;
        randdrop_mask(ctx.losses.len(), ratio, rng)
    }
}

// ---------------------------------------------------------------------------
// NDF
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NdfMode {
    /// Sample each keep bit from the policy's Bernoulli, as during training.
    Sample,
    /// Keep iff the policy's keep probability is at least one half.
    Threshold,
}

/// A trained policy applied as a filtration strategy.
pub struct NdfStrategy {
    pub policy: PolicyNet,
    pub mode: NdfMode,
}

impl FiltrationStrategy for NdfStrategy {
    fn name(&self) -> &'static str {
        "ndf"
    }

    fn keep_mask(&mut self, ctx: &BatchContext<'_>, rng: &mut ChaCha8Rng) -> Result<Vec<bool>> {
        let num_classes = ctx.predictions.cols();
        let mut feats = Vec::with_capacity(ctx.losses.len());
        for i in 0..ctx.losses.len() {
            feats.push(featurize(
                ctx.labels[i],
                num_classes,
                ctx.predictions.row(i),
                ctx.losses[i],
                ctx.history,
            )?);
        }
        let decision = match self.mode {
            NdfMode::Sample => self.policy.decide(&feats, rng)?,
            NdfMode::Threshold => self.policy.decide_threshold(&feats)?,
        };
        Ok(decision.keep_mask)
    }
}

// ---------------------------------------------------------------------------
// Accumulation buffer
// ---------------------------------------------------------------------------

/// FIFO of kept instances that releases training batches of exactly
/// `batch_size`. The remainder stays pending across arriving mini-batches and
/// across epoch boundaries; flushing early would produce under-sized updates.
#[derive(Debug, Clone)]
pub struct AccumulationBuffer {
    pending: Vec<usize>,
    batch_size: usize,
}

impl AccumulationBuffer {
    pub fn new(batch_size: usize) -> Result<Self> {
        if batch_size == 0 {
            return Err(Error::input("batch size must be positive"));
        }
        Ok(AccumulationBuffer {
            pending: Vec::new(),
            batch_size,
        })
    }

    pub fn pending_len(&self) -> usize {
        self.pending.len()
    }

    /// Appends kept instances in arrival order and drains every full batch.
    pub fn accumulate(&mut self, kept: impl IntoIterator<Item = usize>) -> Vec<Vec<usize>> {
        self.pending.extend(kept);
        let mut out = Vec::new();
        while self.pending.len() >= self.batch_size {
            out.push(self.pending.drain(..self.batch_size).collect());
        }
        out
    }
}

// ---------------------------------------------------------------------------
// Hardness histogram
// ---------------------------------------------------------------------------

pub const HARDNESS_BUCKETS: usize = 5;

/// Counts filtered instances per epoch in five equal ranges of within-batch
/// loss rank; rank 1 is the largest loss ("hardest"). For `M = 20` the
/// buckets are ranks 1-4, 5-8, 9-12, 13-16, 17-20.
#[derive(Debug, Clone, Default)]
pub struct HardnessHistogram {
    batch_size: usize,
    epochs: Vec<[u64; HARDNESS_BUCKETS]>,
}

impl HardnessHistogram {
    pub fn new(batch_size: usize) -> Result<Self> {
        if batch_size < HARDNESS_BUCKETS {
            return Err(Error::input(format!(
                "batch size {batch_size} smaller than {HARDNESS_BUCKETS} buckets"
            )));
        }
        Ok(HardnessHistogram {
            batch_size,
            epochs: Vec::new(),
        })
    }

    pub fn batch_size(&self) -> usize {
        self.batch_size
    }

    /// Bucket index for a 1-based rank.
    pub fn bucket_of_rank(&self, rank: usize) -> usize {
        ((rank - 1) * HARDNESS_BUCKETS) / self.batch_size
    }

    /// Inclusive rank range covered by a bucket, for labeling.
    pub fn bucket_rank_range(&self, bucket: usize) -> (usize, usize) {
        let lo = bucket * self.batch_size / HARDNESS_BUCKETS + 1;
        let hi = (bucket + 1) * self.batch_size / HARDNESS_BUCKETS;
        (lo, hi)
    }

    pub fn bucket_label(&self, bucket: usize) -> String {
        let (lo, hi) = self.bucket_rank_range(bucket);
        format!("{lo}-{hi}")
    }

    /// Folds one decided batch into the histogram: every filtered instance's
    /// loss rank (1 = largest loss, ties to the lower arrival index) lands in
    /// its bucket for `epoch`.
    pub fn record(&mut self, losses: &[f64], keep_mask: &[bool], epoch: usize) -> Result<()> {
        if losses.len() != self.batch_size || keep_mask.len() != self.batch_size {
            return Err(Error::shape(format!(
                "expected batch of {}, got losses {} / mask {}",
                self.batch_size,
                losses.len(),
                keep_mask.len()
            )));
        }
        while self.epochs.len() <= epoch {
            self.epochs.push([0; HARDNESS_BUCKETS]);
        }
        let mut order: Vec<usize> = (0..losses.len()).collect();
        order.sort_by(|&a, &b| {
            losses[b]
                .partial_cmp(&losses[a])
                .expect("losses are finite")
                .then(a.cmp(&b))
        });
        for (pos, &idx) in order.iter().enumerate() {
            if !keep_mask[idx] {
                let bucket = self.bucket_of_rank(pos + 1);
                self.epochs[epoch][bucket] += 1;
            }
        }
        Ok(())
    }

    pub fn epochs(&self) -> &[[u64; HARDNESS_BUCKETS]] {
        &self.epochs
    }

    pub fn total_filtered(&self) -> u64 {
        self.epochs.iter().flatten().sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;

    #[test]
    fn spl_threshold_endpoints_and_midpoint() {
        let s = SplSchedule::new(80, 20).unwrap();
        assert_eq!(spl_threshold(s, 0), 19);
        assert_eq!(spl_threshold(s, 80), 0);
        assert_eq!(spl_threshold(s, 200), 0);
        assert_eq!(spl_threshold(s, 40), 10); // round(19 * 0.5) = round(9.5)
    }

    #[test]
    fn spl_threshold_is_non_increasing() {
        let s = SplSchedule::new(37, 16).unwrap();
        let mut prev = usize::MAX;
        for e in 0..60 {
            let k = spl_threshold(s, e);
            assert!(k <= prev, "K({e}) = {k} > K({}) = {prev}", e - 1);
            prev = k;
        }
    }

    #[test]
    fn spl_mask_filters_largest_losses() {
        let mask = spl_mask(&[1.0, 5.0, 3.0], 1).unwrap();
        assert_eq!(mask, vec![true, false, true]);
        let mask = spl_mask(&[1.0, 5.0, 3.0], 0).unwrap();
        assert_eq!(mask, vec![true, true, true]);
    }

    #[test]
    fn spl_mask_ties_filter_lower_index_first() {
        let mask = spl_mask(&[2.0, 2.0, 1.0], 1).unwrap();
        assert_eq!(mask, vec![false, true, true]);
    }

    #[test]
    fn spl_mask_agrees_with_sort_oracle() {
        use rand::Rng;
        let mut rng = rng_from_seed(31);
        for _ in 0..100 {
            let m = rng.gen_range(2..40);
            let k = rng.gen_range(0..m);
            let losses: Vec<f64> = (0..m).map(|_| rng.gen_range(0.0..5.0)).collect();
            let mask = spl_mask(&losses, k).unwrap();

            // oracle: stable sort of (loss desc, index asc); first k filtered
            let mut pairs: Vec<(usize, f64)> = losses.iter().cloned().enumerate().collect();
            pairs.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
            let mut expect = vec![true; m];
            for &(idx, _) in pairs.iter().take(k) {
                expect[idx] = false;
            }
            assert_eq!(mask, expect);
            assert_eq!(mask.iter().filter(|&&b| b).count(), m - k);
        }
    }

    #[test]
    fn randdrop_extremes() {
        let mut rng = rng_from_seed(1);
        assert!(randdrop_mask(10, 0.0, &mut rng).unwrap().iter().all(|&k| k));
        assert!(randdrop_mask(10, 1.0, &mut rng).unwrap().iter().all(|&k| !k));
    }

    #[test]
    fn randdrop_empirical_rate() {
        let mut rng = rng_from_seed(2024);
        let n = 100_000;
        let mask = randdrop_mask(n, 0.3, &mut rng).unwrap();
        let filtered = mask.iter().filter(|&&k| !k).count() as f64 / n as f64;
        // binomial 3 sigma around 0.3 is ~0.0043
        assert!((filtered - 0.3).abs() < 0.005, "rate {filtered}");
    }

    #[test]
    fn droplog_replay_clamps_to_last_epoch() {
        let log = DropLog::new(vec![0.1, 0.2]).unwrap();
        assert_eq!(log.ratio_for_epoch(0).unwrap(), 0.1);
        assert_eq!(log.ratio_for_epoch(5).unwrap(), 0.2);
        assert!(DropLog::new(vec![1.5]).is_err());
        assert!(DropLog::default().ratio_for_epoch(0).is_err());
    }

    #[test]
    fn buffer_emits_only_full_batches() {
        let mut buf = AccumulationBuffer::new(20).unwrap();
        assert!(buf.accumulate(0..15).is_empty());
        assert_eq!(buf.pending_len(), 15);
        let out = buf.accumulate(100..110);
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].len(), 20);
        assert_eq!(buf.pending_len(), 5);

        let mut buf = AccumulationBuffer::new(20).unwrap();
        let out = buf.accumulate(0..20);
        assert_eq!(out.len(), 1);
        assert_eq!(buf.pending_len(), 0);
    }

    #[test]
    fn buffer_preserves_arrival_order() {
        use rand::Rng;
        let mut rng = rng_from_seed(44);
        let mut buf = AccumulationBuffer::new(7).unwrap();
        let mut arrivals = Vec::new();
        let mut emitted = Vec::new();
        let mut next_id = 0usize;
        for _ in 0..50 {
            let n = rng.gen_range(0..12);
            let chunk: Vec<usize> = (0..n).map(|_| {
                next_id += 1;
                next_id
            }).collect();
            arrivals.extend_from_slice(&chunk);
            for batch in buf.accumulate(chunk) {
                assert_eq!(batch.len(), 7);
                emitted.extend(batch);
            }
        }
        assert_eq!(emitted.as_slice(), &arrivals[..emitted.len()]);
        assert_eq!(emitted.len() + buf.pending_len(), arrivals.len());
    }

    #[test]
    fn hardness_buckets_for_batch_of_twenty() {
        let h = HardnessHistogram::new(20).unwrap();
        assert_eq!(h.bucket_label(0), "1-4");
        assert_eq!(h.bucket_label(1), "5-8");
        assert_eq!(h.bucket_label(2), "9-12");
        assert_eq!(h.bucket_label(3), "13-16");
        assert_eq!(h.bucket_label(4), "17-20");
        for rank in 1..=4 {
            assert_eq!(h.bucket_of_rank(rank), 0);
        }
        assert_eq!(h.bucket_of_rank(5), 1);
        assert_eq!(h.bucket_of_rank(20), 4);
    }

    #[test]
    fn hardness_record_counts_filtered_by_rank() {
        let mut h = HardnessHistogram::new(20).unwrap();
        let losses: Vec<f64> = (0..20).map(|i| i as f64).collect();
        // all kept: nothing recorded
        h.record(&losses, &vec![true; 20], 0).unwrap();
        assert_eq!(h.total_filtered(), 0);
        // filter the 4 largest (indices 16..20 hold the largest losses)
        let mut mask = vec![true; 20];
        for idx in 16..20 {
            mask[idx] = false;
        }
        h.record(&losses, &mask, 0).unwrap();
        assert_eq!(h.epochs()[0][0], 4);
        assert_eq!(h.epochs()[0].iter().sum::<u64>(), 4);
    }

    #[test]
    fn hardness_totals_conserve_filtered_count() {
        use rand::Rng;
        let mut rng = rng_from_seed(5);
        let mut h = HardnessHistogram::new(20).unwrap();
        let mut filtered_total = 0u64;
        for b in 0..50 {
            let losses: Vec<f64> = (0..20).map(|_| rng.gen_range(0.0..3.0)).collect();
            let mask: Vec<bool> = (0..20).map(|_| rng.gen::<f64>() < 0.7).collect();
            filtered_total += mask.iter().filter(|&&k| !k).count() as u64;
            h.record(&losses, &mask, b % 7).unwrap();
        }
        assert_eq!(h.total_filtered(), filtered_total);
        let per_epoch_sum: u64 = h.epochs().iter().map(|e| e.iter().sum::<u64>()).sum();
        assert_eq!(per_epoch_sum, filtered_total);
    }

    #[test]
    fn unfiltered_keeps_all_through_contract() {
        let mut s = Unfiltered;
        let history = ModelHistory::new(10).unwrap();
        let predictions = DenseMatrix::from_vec(2, 2, vec![0.5, 0.5, 0.4, 0.6]).unwrap();
        let ctx = BatchContext {
            losses: &[0.2, 0.4],
            predictions: &predictions,
            labels: &[0, 1],
            history: &history,
            epoch: 0,
        };
        let mask = s.keep_mask(&ctx, &mut rng_from_seed(0)).unwrap();
        assert_eq!(mask, vec![true, true]);
    }
}
