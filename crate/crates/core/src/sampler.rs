//! Multi-round adaptive collection with successive elimination.
//!
//! Every prompt in the batch starts active. Each round draws `M` fresh
//! responses for every active prompt; at the round boundary the exit
//! condition is evaluated on the prompt's accumulated pool and satisfied
//! prompts are retired. Prompts still active after `N` rounds are reported as
//! unresolved and fall back to passive filtering.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rayon::prelude::*;

use crate::env::{sample_responses, Policy, Prompt, Sample};
use crate::error::{Error, Result};
use crate::rng::{substream, Purpose, Stream};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ExitCondition {
    /// Retire once at least one correct response has been seen.
    Pos,
    /// Retire once `n/2` correct and `n/2` incorrect responses have been seen.
    Balance,
    /// Uniform baseline: a single round, no elimination.
    None,
}

impl fmt::Display for ExitCondition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Pos => "pos",
            Self::Balance => "balance",
            Self::None => "none",
        })
    }
}

impl FromStr for ExitCondition {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.trim().to_ascii_lowercase().as_str() {
            "pos" => Ok(Self::Pos),
            "balance" => Ok(Self::Balance),
            "none" => Ok(Self::None),
            other => Err(format!("unknown exit condition {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SamplerConfig {
    /// Effective update group size `n`.
    pub group_size: usize,
    /// Samples drawn per active prompt per round (`M`).
    pub samples_per_round: usize,
    /// Maximum number of rounds (`N`).
    pub num_rounds: usize,
    pub exit_condition: ExitCondition,
}

impl SamplerConfig {
    /// `M = n`, `N = 32 / n` rounds, i.e. a cap of 32 samples per prompt.
    pub fn with_cap_32(group_size: usize, exit_condition: ExitCondition) -> Self {
        Self {
            group_size,
            samples_per_round: group_size,
            num_rounds: (32 / group_size.max(1)).max(1),
            exit_condition,
        }
    }

    pub fn uniform(group_size: usize) -> Self {
        Self {
            group_size,
            samples_per_round: group_size,
            num_rounds: 1,
            exit_condition: ExitCondition::None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::SamplerConfig(m));
        if self.group_size < 2 {
            return bad(format!("group size n={} must be >= 2", self.group_size));
        }
        if self.num_rounds < 1 {
            return bad("num_rounds N must be >= 1".into());
        }
        if self.samples_per_round < self.group_size {
            return bad(format!(
                "samples per round M={} must be >= n={}",
                self.samples_per_round, self.group_size
            ));
        }
        if self.exit_condition == ExitCondition::Balance && !self.group_size.is_multiple_of(2) {
            return bad(format!(
                "balance exit needs an even group size, got n={}",
                self.group_size
            ));
        }
        Ok(())
    }

    /// Rounds actually run; the uniform baseline always runs exactly one.
    pub fn effective_rounds(&self) -> usize {
        match self.exit_condition {
            ExitCondition::None => 1,
            _ => self.num_rounds,
        }
    }

    pub fn max_pool_size(&self) -> usize {
        self.samples_per_round * self.effective_rounds()
    }
}

/// All samples collected for one prompt (`S_x`).
#[derive(Debug, Clone, PartialEq)]
pub struct ResponsePool<T> {
    pub prompt_id: usize,
    pub samples: Vec<Sample<T>>,
    /// Round at which the exit condition fired.
    pub resolved_round: Option<usize>,
}

impl<T: Real> ResponsePool<T> {
    pub fn new(prompt_id: usize) -> Self {
        Self {
            prompt_id,
            samples: Vec::new(),
            resolved_round: None,
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn num_correct(&self) -> usize {
        self.samples.iter().filter(|s| s.correct).count()
    }

    pub fn num_incorrect(&self) -> usize {
        self.len() - self.num_correct()
    }

    /// True when every sample has the same reward.
    pub fn is_uniform(&self) -> bool {
        let c = self.num_correct();
        c == 0 || c == self.len()
    }
}

pub fn exit_pos<T: Real>(pool: &ResponsePool<T>) -> bool {
    pool.samples.iter().any(|s| s.correct)
}

pub fn exit_balance<T: Real>(pool: &ResponsePool<T>, n: usize) -> bool {
    let quota = n / 2;
    pool.num_correct() >= quota && pool.num_incorrect() >= quota
}

fn exit_met<T: Real>(pool: &ResponsePool<T>, config: &SamplerConfig) -> bool {
    match config.exit_condition {
        ExitCondition::Pos => exit_pos(pool),
        ExitCondition::Balance => exit_balance(pool, config.group_size),
        ExitCondition::None => false,
    }
}

/// Per-round sample accounting for one collection pass.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BudgetLedger {
    pub samples_per_round: usize,
    /// Active-set size entering each round.
    pub active_per_round: Vec<usize>,
    pub total_samples: usize,
    pub unresolved_prompt_ids: Vec<usize>,
    /// `resolved_within[t]` counts prompts retired at the end of round `t + 1`.
    pub resolved_within: Vec<usize>,
}

impl BudgetLedger {
    /// Writes `round,active_count,samples_this_round` with 1-based rounds.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["round", "active_count", "samples_this_round"])?;
        for (t, &active) in self.active_per_round.iter().enumerate() {
            w.write_record([
                (t + 1).to_string(),
                active.to_string(),
                (active * self.samples_per_round).to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Pools keyed by prompt id plus the ledger for the pass that built them.
#[derive(Debug, Clone)]
pub struct Collection<T> {
    pub pools: BTreeMap<usize, ResponsePool<T>>,
    pub ledger: BudgetLedger,
}

/// Source of the per-prompt rollout streams for one collection pass.
#[derive(Debug, Clone, Copy)]
pub struct RolloutSeed {
    pub master: u64,
    pub step: u64,
}

impl RolloutSeed {
    pub fn stream(&self, prompt_id: usize) -> Stream {
        substream(self.master, Purpose::Rollout, self.step, prompt_id as u64)
    }
}

struct Slot<'a, T> {
    prompt: &'a Prompt,
    pool: ResponsePool<T>,
    rng: Stream,
}

/// Runs the adaptive collection phase over `prompts`.
///
/// Each prompt consumes a single rollout stream across all rounds, so for a
/// fixed seed the pool under a stricter exit condition extends the pool under
/// a looser one.
pub fn adaptive_collect<T: Real>(
    policy: &Policy<T>,
    prompts: &[&Prompt],
    config: &SamplerConfig,
    seed: RolloutSeed,
) -> Result<Collection<T>> {
    config.validate()?;
    if prompts.is_empty() {
        return Err(Error::SamplerConfig("no prompts to collect for".into()));
    }
    let mut seen = BTreeSet::new();
    for p in prompts {
        if !seen.insert(p.id) {
            return Err(Error::SamplerConfig(format!(
                "prompt {} appears twice",
                p.id
            )));
        }
        if p.id >= policy.num_prompts() || p.num_candidates() != policy.num_candidates() {
            return Err(Error::ShapeMismatch {
                rows: policy.num_prompts(),
                cols: policy.num_candidates(),
                prompts: prompts.len(),
                k: p.num_candidates(),
            });
        }
    }

    let rounds = config.effective_rounds();
    let m = config.samples_per_round;
    let mut slots: Vec<Slot<'_, T>> = prompts
        .iter()
        .map(|&prompt| Slot {
            prompt,
            pool: ResponsePool::new(prompt.id),
            rng: seed.stream(prompt.id),
        })
        .collect();
    let mut active: Vec<usize> = (0..slots.len()).collect();
    let mut active_per_round = Vec::with_capacity(rounds);
    let mut resolved_within = vec![0; rounds];

    for round in 1..=rounds {
        active_per_round.push(active.len());
        if active.is_empty() {
            continue;
        }
        let mut chosen: Vec<&mut Slot<'_, T>> = Vec::with_capacity(active.len());
        {
            let mut it = active.iter().peekable();
            for (i, slot) in slots.iter_mut().enumerate() {
                if it.peek() == Some(&&i) {
                    chosen.push(slot);
                    it.next();
                }
            }
        }
        // Round barrier: every active prompt samples, then all are judged.
        let retired: Vec<bool> = chosen
            .into_par_iter()
            .map(|slot| {
                let fresh = sample_responses(policy, slot.prompt, m, &mut slot.rng, round);
                slot.pool.samples.extend(fresh);
                if exit_met(&slot.pool, config) {
                    slot.pool.resolved_round = Some(round);
                    true
                } else {
                    false
                }
            })
            .collect();
        resolved_within[round - 1] = retired.iter().filter(|&&r| r).count();
        active = active
            .into_iter()
            .zip(retired)
            .filter_map(|(i, r)| (!r).then_some(i))
            .collect();
    }

    let unresolved_prompt_ids = active.iter().map(|&i| slots[i].prompt.id).collect();
    let total_samples = m * active_per_round.iter().sum::<usize>();
    let pools = slots.into_iter().map(|s| (s.prompt.id, s.pool)).collect();
    Ok(Collection {
        pools,
        ledger: BudgetLedger {
            samples_per_round: m,
            active_per_round,
            total_samples,
            unresolved_prompt_ids,
            resolved_within,
        },
    })
}

/// Prompts whose pools may enter the training batch.
///
/// A prompt is dropped only when it stayed unresolved *and* its pool carries
/// no reward variation. Unresolved pools with mixed rewards stay eligible.
pub fn passive_filter<T: Real>(
    pools: &BTreeMap<usize, ResponsePool<T>>,
    ledger: &BudgetLedger,
) -> BTreeSet<usize> {
    let unresolved: BTreeSet<usize> = ledger.unresolved_prompt_ids.iter().copied().collect();
    pools
        .values()
        .filter(|pool| !(unresolved.contains(&pool.prompt_id) && pool.is_uniform()))
        .map(|pool| pool.prompt_id)
        .collect()
}

/// Writes `prompt_id,round,action,reward,logprob_old` for every sample.
pub fn write_pools_csv<T: Real, W: Write>(
    pools: &BTreeMap<usize, ResponsePool<T>>,
    out: W,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["prompt_id", "round", "action", "reward", "logprob_old"])?;
    for pool in pools.values() {
        for s in &pool.samples {
            w.write_record([
                s.prompt_id.to_string(),
                s.round.to_string(),
                s.action.to_string(),
                u8::from(s.correct).to_string(),
                s.logprob_old.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::PromptSet;
    use crate::scalar::Matrix;

    fn pool_of(rewards: &[u8]) -> ResponsePool<f64> {
        ResponsePool {
            prompt_id: 0,
            samples: rewards
                .iter()
                .map(|&r| Sample {
                    prompt_id: 0,
                    action: 0,
                    correct: r == 1,
                    logprob_old: -1.0,
                    round: 1,
                })
                .collect(),
            resolved_round: None,
        }
    }

    fn cfg(n: usize, m: usize, rounds: usize, exit: ExitCondition) -> SamplerConfig {
        SamplerConfig {
            group_size: n,
            samples_per_round: m,
            num_rounds: rounds,
            exit_condition: exit,
        }
    }

    #[test]
    fn exit_pos_cases() {
        assert!(!exit_pos(&pool_of(&[0, 0, 0, 0])));
        assert!(exit_pos(&pool_of(&[0, 0, 1, 0])));
        assert!(exit_pos(&pool_of(&[1, 1, 1, 1])));
    }

    #[test]
    fn exit_balance_cases() {
        assert!(exit_balance(&pool_of(&[1, 1, 0, 0]), 4));
        assert!(!exit_balance(&pool_of(&[1, 1, 1, 0]), 4));
        assert!(exit_balance(&pool_of(&[1, 1, 1, 1, 0, 0, 0, 0]), 4));
    }

    #[test]
    fn config_validation() {
        assert!(cfg(4, 4, 8, ExitCondition::Balance).validate().is_ok());
        assert!(cfg(4, 3, 8, ExitCondition::Pos).validate().is_err());
        assert!(cfg(3, 4, 8, ExitCondition::Balance).validate().is_err());
        assert!(cfg(3, 4, 8, ExitCondition::Pos).validate().is_ok());
        assert!(cfg(1, 4, 8, ExitCondition::Pos).validate().is_err());
        assert!(cfg(4, 4, 0, ExitCondition::Pos).validate().is_err());
        let d = SamplerConfig::with_cap_32(4, ExitCondition::Balance);
        assert_eq!((d.samples_per_round, d.num_rounds), (4, 8));
    }

    fn two_arm_set(p: usize) -> PromptSet {
        PromptSet::new(
            (0..p)
                .map(|i| Prompt::new(i, vec![true, false]).unwrap())
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn near_certain_prompt_resolves_in_first_round() {
        let set = two_arm_set(1);
        let pol = Policy::new(Matrix::from_vec(1, 2, vec![40.0, 0.0])).unwrap();
        let refs: Vec<&Prompt> = set.prompts().iter().collect();
        let c = adaptive_collect(
            &pol,
            &refs,
            &cfg(4, 4, 8, ExitCondition::Pos),
            RolloutSeed { master: 1, step: 0 },
        )
        .unwrap();
        let pool = &c.pools[&0];
        assert_eq!(pool.resolved_round, Some(1));
        assert_eq!(pool.len(), 4);
        assert_eq!(c.ledger.active_per_round, vec![1, 0, 0, 0, 0, 0, 0, 0]);
        assert_eq!(c.ledger.total_samples, 4);
    }

    #[test]
    fn uniform_baseline_is_single_round() {
        let set = two_arm_set(5);
        let pol = Policy::<f64>::uniform(5, 2);
        let refs: Vec<&Prompt> = set.prompts().iter().collect();
        let c = adaptive_collect(
            &pol,
            &refs,
            &cfg(4, 4, 8, ExitCondition::None),
            RolloutSeed { master: 2, step: 0 },
        )
        .unwrap();
        assert!(c
            .pools
            .values()
            .all(|p| p.len() == 4 && p.resolved_round.is_none()));
        assert_eq!(c.ledger.active_per_round, vec![5]);
        assert_eq!(c.ledger.total_samples, 20);
    }

    #[test]
    fn never_correct_prompt_stays_unresolved_and_is_filtered() {
        // Prompt 0 is effectively impossible, prompt 1 is a fair coin.
        let set = two_arm_set(2);
        let pol = Policy::new(Matrix::from_vec(2, 2, vec![-60.0, 0.0, 0.0, 0.0])).unwrap();
        let refs: Vec<&Prompt> = set.prompts().iter().collect();
        let c = adaptive_collect(
            &pol,
            &refs,
            &cfg(4, 4, 8, ExitCondition::Balance),
            RolloutSeed { master: 3, step: 0 },
        )
        .unwrap();
        assert_eq!(c.ledger.unresolved_prompt_ids, vec![0]);
        assert_eq!(c.pools[&0].len(), 32);
        let eligible = passive_filter(&c.pools, &c.ledger);
        assert!(!eligible.contains(&0));
        assert!(eligible.contains(&1));
    }

    #[test]
    fn unresolved_mixed_pool_stays_eligible() {
        let mut pool = pool_of(&[0; 32]);
        pool.samples[5].correct = true;
        let mut pools = BTreeMap::new();
        pools.insert(0, pool);
        let ledger = BudgetLedger {
            samples_per_round: 4,
            active_per_round: vec![1; 8],
            total_samples: 32,
            unresolved_prompt_ids: vec![0],
            resolved_within: vec![0; 8],
        };
        assert!(passive_filter(&pools, &ledger).contains(&0));
        pools.get_mut(&0).unwrap().samples[5].correct = false;
        assert!(passive_filter(&pools, &ledger).is_empty());
    }

    #[test]
    fn resolved_uniform_pool_is_eligible() {
        let mut pools = BTreeMap::new();
        let mut pool = pool_of(&[1, 1, 1, 1]);
        pool.resolved_round = Some(1);
        pools.insert(0, pool);
        let ledger = BudgetLedger {
            samples_per_round: 4,
            active_per_round: vec![1, 0],
            total_samples: 4,
            unresolved_prompt_ids: vec![],
            resolved_within: vec![1, 0],
        };
        assert!(passive_filter(&pools, &ledger).contains(&0));
    }

    #[test]
    fn rejects_duplicate_prompts() {
        let set = two_arm_set(2);
        let pol = Policy::<f64>::uniform(2, 2);
        let refs = vec![set.get(0), set.get(0)];
        assert!(adaptive_collect(
            &pol,
            &refs,
            &cfg(2, 2, 2, ExitCondition::Pos),
            RolloutSeed { master: 0, step: 0 }
        )
        .is_err());
    }

    #[test]
    fn csv_exports() {
        let set = two_arm_set(3);
        let pol = Policy::<f64>::uniform(3, 2);
        let refs: Vec<&Prompt> = set.prompts().iter().collect();
        let c = adaptive_collect(
            &pol,
            &refs,
            &cfg(2, 2, 3, ExitCondition::Balance),
            RolloutSeed { master: 9, step: 1 },
        )
        .unwrap();
        let mut buf = Vec::new();
        c.ledger.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "round,active_count,samples_this_round");
        assert_eq!(lines.len(), 4);
        assert_eq!(lines[1], "1,3,6");

        let mut buf = Vec::new();
        write_pools_csv(&c.pools, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(
            text.lines().next().unwrap(),
            "prompt_id,round,action,reward,logprob_old"
        );
        assert_eq!(text.lines().count(), 1 + c.ledger.total_samples);
        assert!(text
            .lines()
            .nth(1)
            .unwrap()
            .ends_with(&format!(",{}", (0.5f64).ln())));
    }
}
