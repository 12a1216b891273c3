//! Batch construction from collected pools.
//!
//! The adaptive path keeps a fixed `n` samples per prompt, drawn to balance
//! correct and incorrect outcomes, and scores them against the mean of the
//! whole pool. The GRPO path normalises inside the group instead.

use std::io::Write;

use rand::seq::index;

use crate::env::Sample;
use crate::error::{Error, Result};
use crate::rng::Stream;
use crate::sampler::ResponsePool;
use crate::scalar::Real;

/// Reward statistics over a full pool.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroupStats<T> {
    pub mean_reward: T,
    /// Population standard deviation.
    pub std_reward: T,
    pub pool_size: usize,
}

/// Fixed-size group that enters the update, with per-member advantages.
#[derive(Debug, Clone, PartialEq)]
pub struct UpdateGroup<T> {
    pub prompt_id: usize,
    pub members: Vec<Sample<T>>,
    pub baseline: T,
    pub advantages: Vec<T>,
}

impl<T: Real> UpdateGroup<T> {
    /// True when every advantage is exactly zero, i.e. the group carries no
    /// gradient signal.
    pub fn is_zero_signal(&self) -> bool {
        self.advantages.iter().all(|a| a.is_zero())
    }

    /// Divides every advantage by `std + eps`. Used for the global-sigma
    /// ablation; after this the `advantage = reward - baseline` identity no
    /// longer holds.
    pub fn normalize_by_std(mut self, std: T, eps: T) -> Self {
        let scale = std + eps;
        for a in &mut self.advantages {
            *a /= scale;
        }
        self
    }
}

pub fn global_stats<T: Real>(pool: &ResponsePool<T>) -> GroupStats<T> {
    assert!(!pool.is_empty(), "global_stats on an empty pool");
    let n = T::of_usize(pool.len());
    let mean = T::of_usize(pool.num_correct()) / n;
    let var = pool
        .samples
        .iter()
        .map(|s| {
            let d = s.reward() - mean;
            d * d
        })
        .sum::<T>()
        / n;
    GroupStats {
        mean_reward: mean,
        std_reward: var.sqrt(),
        pool_size: pool.len(),
    }
}

/// Downsamples `pool` to `n` members, aiming for `n/2` of each outcome.
///
/// When one outcome has fewer than its quota, all of it is kept and the
/// other outcome fills the rest. Members keep their collection order. The
/// baseline is the mean of the *full* pool.
pub fn balanced_downsample<T: Real>(
    pool: &ResponsePool<T>,
    n: usize,
    rng: &mut Stream,
) -> Result<UpdateGroup<T>> {
    if pool.len() < n || n == 0 {
        return Err(Error::PoolTooSmall {
            prompt_id: pool.prompt_id,
            size: pool.len(),
            needed: n,
        });
    }
    let (correct, incorrect): (Vec<usize>, Vec<usize>) =
        (0..pool.len()).partition(|&i| pool.samples[i].correct);

    let mut take_correct = correct.len().min(n / 2);
    let take_incorrect = incorrect.len().min(n - take_correct);
    take_correct = correct.len().min(n - take_incorrect);

    let mut picked: Vec<usize> = index::sample(rng, correct.len(), take_correct)
        .into_iter()
        .map(|i| correct[i])
        .chain(
            index::sample(rng, incorrect.len(), take_incorrect)
                .into_iter()
                .map(|i| incorrect[i]),
        )
        .collect();
    picked.sort_unstable();

    let baseline = global_stats(pool).mean_reward;
    let members: Vec<Sample<T>> = picked.iter().map(|&i| pool.samples[i].clone()).collect();
    let advantages = members.iter().map(|s| s.reward() - baseline).collect();
    Ok(UpdateGroup {
        prompt_id: pool.prompt_id,
        members,
        baseline,
        advantages,
    })
}

/// Group-normalised advantages `(r - mean) / (std + eps)` over the group only.
pub fn grpo_advantages<T: Real>(rewards: &[T], epsilon: T) -> Vec<T> {
    assert!(!rewards.is_empty(), "grpo_advantages on an empty group");
    let n = T::of_usize(rewards.len());
    let mean = rewards.iter().copied().sum::<T>() / n;
    let std = (rewards.iter().map(|&r| (r - mean) * (r - mean)).sum::<T>() / n).sqrt();
    rewards
        .iter()
        .map(|&r| (r - mean) / (std + epsilon))
        .collect()
}

/// GRPO group from a uniform-baseline pool: the whole pool, group-normalised.
pub fn grpo_group<T: Real>(pool: &ResponsePool<T>, epsilon: T) -> UpdateGroup<T> {
    let rewards: Vec<T> = pool.samples.iter().map(Sample::reward).collect();
    let advantages = grpo_advantages(&rewards, epsilon);
    UpdateGroup {
        prompt_id: pool.prompt_id,
        members: pool.samples.clone(),
        baseline: global_stats(pool).mean_reward,
        advantages,
    }
}

/// Writes `prompt_id,action,reward,baseline,advantage,logprob_old`.
pub fn write_groups_csv<T: Real, W: Write>(groups: &[UpdateGroup<T>], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "prompt_id",
        "action",
        "reward",
        "baseline",
        "advantage",
        "logprob_old",
    ])?;
    for g in groups {
        for (s, a) in g.members.iter().zip(&g.advantages) {
            w.write_record([
                g.prompt_id.to_string(),
                s.action.to_string(),
                u8::from(s.correct).to_string(),
                g.baseline.to_string(),
                a.to_string(),
                s.logprob_old.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}
