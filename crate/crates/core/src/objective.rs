//! Clipped importance-weighted surrogate with an optional entropy bonus.
//!
//! Responses are single categorical actions, so each sample carries one
//! importance ratio. The surrogate is averaged over every sample in the batch
//! and is a quantity to *maximise*. Gradients are exact and expressed w.r.t.
//! the policy logits.

use std::collections::BTreeSet;

use crate::env::{row_entropy, Policy, Sample};
use crate::error::{Error, Result};
use crate::grouping::UpdateGroup;
use crate::scalar::{Matrix, Real};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClipConfig<T> {
    pub eps_low: T,
    pub eps_high: T,
    pub entropy_coeff: T,
}

impl<T: Real> ClipConfig<T> {
    /// Clip-higher range `[1 - 0.2, 1 + 0.28]`, entropy coefficient `1e-4`.
    pub fn clip_higher() -> Self {
        Self {
            eps_low: T::of(0.2),
            eps_high: T::of(0.28),
            entropy_coeff: T::of(1e-4),
        }
    }

    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    pub fn validate(&self) -> Result<()> {
        if !(self.eps_low > T::zero() && self.eps_low < T::one()) {
            return Err(Error::ClipConfig(format!(
                "eps_low={} not in (0,1)",
                self.eps_low
            )));
        }
        if !(self.eps_high > T::zero()) || !self.eps_high.is_finite() {
            return Err(Error::ClipConfig(format!(
                "eps_high={} must be > 0",
                self.eps_high
            )));
        }
        if !(self.entropy_coeff >= T::zero()) {
            return Err(Error::ClipConfig(format!(
                "entropy_coeff={} must be >= 0",
                self.entropy_coeff
            )));
        }
        Ok(())
    }

    pub fn with_entropy_coeff(self, entropy_coeff: T) -> Self {
        Self {
            entropy_coeff,
            ..self
        }
    }
}

/// Training batch `B` together with the policy that generated it.
#[derive(Debug, Clone)]
pub struct UpdateBatch<T> {
    pub groups: Vec<UpdateGroup<T>>,
    pub old_policy: Policy<T>,
}

impl<T: Real> UpdateBatch<T> {
    pub fn new(groups: Vec<UpdateGroup<T>>, old_policy: Policy<T>) -> Self {
        Self { groups, old_policy }
    }

    pub fn num_samples(&self) -> usize {
        self.groups.iter().map(|g| g.members.len()).sum()
    }

    /// Distinct prompts in the batch, ascending.
    pub fn prompt_ids(&self) -> BTreeSet<usize> {
        self.groups.iter().map(|g| g.prompt_id).collect()
    }

    /// Checks that stored old log-probabilities match the snapshot policy.
    pub fn check_consistency(&self, tol: T) -> bool {
        self.groups
            .iter()
            .flat_map(|g| &g.members)
            .all(|s| (self.old_policy.log_prob(s.prompt_id, s.action) - s.logprob_old).abs() <= tol)
    }

    fn samples(&self) -> impl Iterator<Item = (&Sample<T>, T)> {
        self.groups
            .iter()
            .flat_map(|g| g.members.iter().zip(g.advantages.iter().copied()))
    }
}

pub fn importance_ratio<T: Real>(policy: &Policy<T>, sample: &Sample<T>) -> T {
    (policy.log_prob(sample.prompt_id, sample.action) - sample.logprob_old).exp()
}

/// Surrogate value and its gradient w.r.t. the logits.
#[derive(Debug, Clone)]
pub struct Objective<T> {
    pub value: T,
    pub gradient: Matrix<T>,
    /// Samples whose clipped branch was selected by the `min`.
    pub clipped: usize,
}

/// Per-sample surrogate `min(rho * A, clip(rho) * A)`, plus whether the
/// constant (clipped) branch was selected.
pub fn clipped_term<T: Real>(ratio: T, advantage: T, clip: &ClipConfig<T>) -> (T, bool) {
    let lo = T::one() - clip.eps_low;
    let hi = T::one() + clip.eps_high;
    let unclipped = ratio * advantage;
    let clipped = ratio.max(lo).min(hi) * advantage;
    if clipped < unclipped {
        (clipped, true)
    } else {
        (unclipped, false)
    }
}

/// Evaluates the clipped surrogate at `policy`.
///
/// The gradient of a sample whose `min` selects the clipped branch is zero;
/// ties go to the unclipped branch. The entropy bonus is
/// `entropy_coeff * mean entropy` over the distinct prompts in the batch.
pub fn clipped_objective<T: Real>(
    batch: &UpdateBatch<T>,
    policy: &Policy<T>,
    clip: &ClipConfig<T>,
) -> Result<Objective<T>> {
    let count = batch.num_samples();
    if count == 0 {
        return Err(Error::TrainConfig(
            "clipped_objective on an empty batch".into(),
        ));
    }
    let scale = T::one() / T::of_usize(count);
    let mut gradient = Matrix::zeros(policy.num_prompts(), policy.num_candidates());
    let mut total = T::zero();
    let mut clipped = 0;

    for (sample, advantage) in batch.samples() {
        let ratio = importance_ratio(policy, sample);
        let (term, is_clipped) = clipped_term(ratio, advantage, clip);
        total += term;
        if is_clipped {
            clipped += 1;
            continue;
        }
        // d(rho * A)/dz = A * rho * (e_a - q)
        let coeff = advantage * ratio;
        accumulate_score(&mut gradient, policy, sample, coeff * scale);
    }
    let mut value = total * scale;

    if clip.entropy_coeff > T::zero() {
        let prompts = batch.prompt_ids();
        let weight = clip.entropy_coeff / T::of_usize(prompts.len());
        let mut entropy_sum = T::zero();
        for &row in &prompts {
            let q = policy.probs(row);
            let h = row_entropy(&q);
            entropy_sum += h;
            // dH/dz_k = -q_k (ln q_k + H)
            for (g, &qk) in gradient.row_mut(row).iter_mut().zip(&q) {
                if qk > T::zero() {
                    *g -= weight * qk * (qk.ln() + h);
                }
            }
        }
        value += weight * entropy_sum;
    }

    Ok(Objective {
        value,
        gradient,
        clipped,
    })
}

/// Plain Reinforce-with-baseline estimator `sum A * grad log pi / |B|`.
pub fn reinforce_gradient<T: Real>(batch: &UpdateBatch<T>, policy: &Policy<T>) -> Matrix<T> {
    let scale = T::one() / T::of_usize(batch.num_samples().max(1));
    let mut gradient = Matrix::zeros(policy.num_prompts(), policy.num_candidates());
    for (sample, advantage) in batch.samples() {
        accumulate_score(&mut gradient, policy, sample, advantage * scale);
    }
    gradient
}

fn accumulate_score<T: Real>(
    grad: &mut Matrix<T>,
    policy: &Policy<T>,
    sample: &Sample<T>,
    weight: T,
) {
    let q = policy.probs(sample.prompt_id);
    let row = grad.row_mut(sample.prompt_id);
    for (k, (g, &qk)) in row.iter_mut().zip(&q).enumerate() {
        let indicator = if k == sample.action {
            T::one()
        } else {
            T::zero()
        };
        *g += weight * (indicator - qk);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{sample_responses, Prompt};
    use crate::rng::{substream, Purpose};
    use approx::assert_abs_diff_eq;

    fn clip() -> ClipConfig<f64> {
        ClipConfig {
            eps_low: 0.2,
            eps_high: 0.28,
            entropy_coeff: 0.0,
        }
    }

    #[test]
    fn ratio_cases() {
        let pol = Policy::new(Matrix::from_vec(1, 3, vec![0.2, -0.4, 1.0])).unwrap();
        let s = Sample {
            prompt_id: 0,
            action: 2,
            correct: true,
            logprob_old: pol.log_prob(0, 2),
            round: 1,
        };
        assert_eq!(importance_ratio(&pol, &s), 1.0);
        let shifted = Sample {
            logprob_old: pol.log_prob(0, 2) - 1.5f64.ln(),
            ..s.clone()
        };
        assert_abs_diff_eq!(importance_ratio(&pol, &shifted), 1.5, epsilon = 1e-12);

        let mut newer = pol.clone();
        newer.logits_mut().set(0, 1, 0.7);
        let direct = newer.probs(0)[2] / pol.probs(0)[2];
        assert_abs_diff_eq!(importance_ratio(&newer, &s), direct, epsilon = 1e-12);
    }

    #[test]
    fn term_examples() {
        let (t, c) = clipped_term(1.5, 1.0, &clip());
        assert_abs_diff_eq!(t, 1.28, epsilon = 1e-15);
        assert!(c);
        let (t, c) = clipped_term(0.5, -1.0, &clip());
        assert_abs_diff_eq!(t, -0.8, epsilon = 1e-15);
        assert!(c);
        let (t, c) = clipped_term(1.1, -2.0, &clip());
        assert_abs_diff_eq!(t, -2.2, epsilon = 1e-15);
        assert!(!c);
        let (t, c) = clipped_term(0.5, 1.0, &clip());
        assert_eq!((t, c), (0.5, false));
    }

    #[test]
    fn clipped_sample_has_zero_gradient() {
        let old = Policy::<f64>::uniform(1, 3);
        let s = Sample {
            prompt_id: 0,
            action: 0,
            correct: true,
            logprob_old: old.log_prob(0, 0),
            round: 1,
        };
        let group = UpdateGroup {
            prompt_id: 0,
            members: vec![s],
            baseline: 0.0,
            advantages: vec![1.0],
        };
        let batch = UpdateBatch::new(vec![group], old.clone());
        // ratio = 3 * q_0 = 1.5 when q_0 = 0.5
        let newer = Policy::new(Matrix::from_vec(1, 3, vec![2f64.ln(), 0.0, 0.0])).unwrap();
        assert_abs_diff_eq!(
            importance_ratio(&newer, &batch.groups[0].members[0]),
            1.5,
            epsilon = 1e-12
        );
        let obj = clipped_objective(&batch, &newer, &clip()).unwrap();
        assert_abs_diff_eq!(obj.value, 1.28, epsilon = 1e-12);
        assert_eq!(obj.clipped, 1);
        assert!(obj.gradient.as_slice().iter().all(|g| *g == 0.0));
    }

    fn random_batch(seed: u64) -> (UpdateBatch<f64>, Vec<Prompt>) {
        use rand::Rng;
        let mut rng = substream(seed, Purpose::Instance, 0, 0);
        let (p, k) = (3, 5);
        let logits = (0..p * k).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let old = Policy::new(Matrix::from_vec(p, k, logits)).unwrap();
        let prompts: Vec<Prompt> = (0..p)
            .map(|i| Prompt::new(i, (0..k).map(|j| (i + j) % 2 == 0).collect()).unwrap())
            .collect();
        let groups = prompts
            .iter()
            .map(|pr| {
                let members = sample_responses(&old, pr, 4, &mut rng, 1);
                let advantages = members.iter().map(|_| rng.gen_range(-1.0..1.0)).collect();
                UpdateGroup {
                    prompt_id: pr.id,
                    members,
                    baseline: 0.0,
                    advantages,
                }
            })
            .collect();
        (UpdateBatch::new(groups, old), prompts)
    }

    #[test]
    fn at_old_policy_matches_reinforce_bitwise() {
        for seed in 0..5 {
            let (batch, _) = random_batch(seed);
            assert!(batch.check_consistency(1e-9));
            let obj = clipped_objective(&batch, &batch.old_policy, &clip()).unwrap();
            let plain = reinforce_gradient(&batch, &batch.old_policy);
            assert_eq!(obj.gradient, plain);
            assert_eq!(obj.clipped, 0);
        }
    }

    #[test]
    fn gradient_matches_finite_differences_with_entropy() {
        let (batch, _) = random_batch(42);
        let mut pol = batch.old_policy.clone();
        for v in pol.logits_mut().as_mut_slice().iter_mut().step_by(3) {
            *v += 0.05;
        }
        let cfg = ClipConfig {
            entropy_coeff: 0.3,
            ..clip()
        };
        let obj = clipped_objective(&batch, &pol, &cfg).unwrap();
        let h = 1e-5;
        for r in 0..pol.num_prompts() {
            for c in 0..pol.num_candidates() {
                let mut plus = pol.clone();
                let mut minus = pol.clone();
                let v = pol.logits().get(r, c);
                plus.logits_mut().set(r, c, v + h);
                minus.logits_mut().set(r, c, v - h);
                let fd = (clipped_objective(&batch, &plus, &cfg).unwrap().value
                    - clipped_objective(&batch, &minus, &cfg).unwrap().value)
                    / (2.0 * h);
                assert_abs_diff_eq!(obj.gradient.get(r, c), fd, epsilon = 1e-6);
            }
        }
    }

    #[test]
    fn value_is_permutation_invariant() {
        let (batch, _) = random_batch(7);
        let mut pol = batch.old_policy.clone();
        pol.logits_mut().set(1, 2, 0.9);
        let a = clipped_objective(&batch, &pol, &clip()).unwrap().value;
        let mut rev = batch.clone();
        rev.groups.reverse();
        for g in &mut rev.groups {
            g.members.reverse();
            g.advantages.reverse();
        }
        let b = clipped_objective(&rev, &pol, &clip()).unwrap().value;
        assert_abs_diff_eq!(a, b, epsilon = 1e-14);
    }

    #[test]
    fn validation() {
        assert!(clip().validate().is_ok());
        assert!(ClipConfig {
            eps_low: 0.0,
            ..clip()
        }
        .validate()
        .is_err());
        assert!(ClipConfig {
            eps_low: 1.0,
            ..clip()
        }
        .validate()
        .is_err());
        assert!(ClipConfig {
            eps_high: 0.0,
            ..clip()
        }
        .validate()
        .is_err());
        assert!(ClipConfig {
            eps_high: 1.5,
            ..clip()
        }
        .validate()
        .is_ok());
        assert!(ClipConfig {
            entropy_coeff: -1.0,
            ..clip()
        }
        .validate()
        .is_err());
    }

    #[test]
    fn empty_batch_is_an_error() {
        let batch = UpdateBatch::new(vec![], Policy::<f64>::uniform(1, 2));
        assert!(clipped_objective(&batch, &batch.old_policy, &clip()).is_err());
    }
}
