//! Closed-form diagnostics: collapse probability of uniform groups, the
//! unbiased pass@k estimator, and expected pool sizes under each exit rule.

use crate::error::{Error, Result};
use crate::sampler::{ExitCondition, SamplerConfig};
use crate::scalar::Real;
use crate::trainer::StepRecord;

/// Probability that `n` i.i.d. draws with success rate `p` are all equal.
pub fn collapse_probability<T: Real>(p: T, n: usize) -> T {
    if p <= T::zero() || p >= T::one() {
        return T::one();
    }
    let n = n as i32;
    p.powi(n) + (T::one() - p).powi(n)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CollapseProfile<T> {
    pub pass_rate: T,
    pub group_sizes: Vec<usize>,
    pub all_correct: Vec<T>,
    pub all_incorrect: Vec<T>,
    /// `all_correct + all_incorrect`.
    pub collapse_probs: Vec<T>,
}

pub fn collapse_profile<T: Real>(p: T, group_sizes: &[usize]) -> CollapseProfile<T> {
    let all_correct: Vec<T> = group_sizes.iter().map(|&n| p.powi(n as i32)).collect();
    let all_incorrect: Vec<T> = group_sizes
        .iter()
        .map(|&n| (T::one() - p).powi(n as i32))
        .collect();
    CollapseProfile {
        pass_rate: p,
        group_sizes: group_sizes.to_vec(),
        collapse_probs: group_sizes
            .iter()
            .map(|&n| collapse_probability(p, n))
            .collect(),
        all_correct,
        all_incorrect,
    }
}

/// Unbiased pass@k from `n` samples with `c` correct: `1 - C(n-c,k)/C(n,k)`.
///
/// Evaluated as `1 - prod_{i=n-c+1}^{n} (1 - k/i)`, which never forms a
/// binomial coefficient.
pub fn pass_at_k<T: Real>(n: usize, c: usize, k: usize) -> Result<T> {
    if c > n || k == 0 || k > n {
        return Err(Error::PassAtK { n, c, k });
    }
    if n - c < k {
        return Ok(T::one());
    }
    let kk = T::of_usize(k);
    let miss = ((n - c + 1)..=n).fold(T::one(), |acc, i| acc * (T::one() - kk / T::of_usize(i)));
    Ok(T::one() - miss)
}

/// Expected per-prompt sample count and unresolved probability.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoolSizeProfile<T> {
    pub expected_pool_size: T,
    pub unresolved_probability: T,
}

/// Expected pool size for one prompt with i.i.d. per-draw success rate `p`.
///
/// `Pos` uses the geometric closed form. `Balance` runs an exact forward
/// recursion over (correct, incorrect) counts capped at the `n/2` quota.
pub fn expected_pool_size<T: Real>(p: T, config: &SamplerConfig) -> Result<PoolSizeProfile<T>> {
    config.validate()?;
    let m = config.samples_per_round;
    let rounds = config.num_rounds;
    match config.exit_condition {
        ExitCondition::Pos => {
            let miss_round = (T::one() - p).powi(m as i32);
            let mut active = T::one();
            let mut expected = T::zero();
            for _ in 0..rounds {
                expected += T::of_usize(m) * active;
                active *= miss_round;
            }
            Ok(PoolSizeProfile {
                expected_pool_size: expected,
                unresolved_probability: active,
            })
        }
        ExitCondition::Balance => Ok(balance_recursion(p, m, rounds, config.group_size / 2)),
        ExitCondition::None => Err(Error::SamplerConfig(
            "pool size is only defined for the pos and balance exits".into(),
        )),
    }
}

fn binomial_pmf<T: Real>(m: usize, p: T) -> Vec<T> {
    let mut pmf = Vec::with_capacity(m + 1);
    let mut coeff = T::one();
    for j in 0..=m {
        if j > 0 {
            coeff = coeff * T::of_usize(m - j + 1) / T::of_usize(j);
        }
        pmf.push(coeff * p.powi(j as i32) * (T::one() - p).powi((m - j) as i32));
    }
    pmf
}

fn balance_recursion<T: Real>(p: T, m: usize, rounds: usize, quota: usize) -> PoolSizeProfile<T> {
    let side = quota + 1;
    let idx = |c: usize, i: usize| c * side + i;
    let pmf = binomial_pmf(m, p);
    // Mass of still-active prompts by capped (correct, incorrect) counts.
    let mut state = vec![T::zero(); side * side];
    state[idx(0, 0)] = T::one();
    let mut expected = T::zero();
    for _ in 0..rounds {
        let active: T = state.iter().copied().sum();
        expected += T::of_usize(m) * active;
        let mut next = vec![T::zero(); side * side];
        for c in 0..side {
            for i in 0..side {
                let mass = state[idx(c, i)];
                if mass.is_zero() {
                    continue;
                }
                for (j, &w) in pmf.iter().enumerate() {
                    let nc = (c + j).min(quota);
                    let ni = (i + m - j).min(quota);
                    if nc == quota && ni == quota {
                        continue;
                    }
                    next[idx(nc, ni)] += mass * w;
                }
            }
        }
        state = next;
    }
    PoolSizeProfile {
        expected_pool_size: expected,
        unresolved_probability: state.iter().copied().sum(),
    }
}

/// `(entropy, expected_reward)` per step record, in order.
pub fn reward_entropy_trace(records: &[StepRecord]) -> Vec<(f64, f64)> {
    records
        .iter()
        .map(|r| (r.mean_entropy, r.expected_reward))
        .collect()
}
