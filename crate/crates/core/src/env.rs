//! Synthetic generation environment.
//!
//! A prompt is a categorical choice over `K` labelled candidate responses and
//! the policy is one softmax row per prompt. Everything the training loop
//! needs has a closed form here: pass rate, entropy, and the exact gradient of
//! the mean pass rate with respect to the logits.

use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use rand::distributions::{Distribution, WeightedIndex};
use rand::seq::index;
use rand::Rng;

use crate::error::{Error, Result};
use crate::rng::{substream, Purpose, Stream};
use crate::scalar::{Matrix, Real};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Prompt {
    pub id: usize,
    /// `correctness[k]` is the verifier's verdict on candidate `k`.
    pub correctness: Vec<bool>,
}

impl Prompt {
    pub fn new(id: usize, correctness: Vec<bool>) -> Result<Self> {
        if correctness.len() < 2 {
            return Err(Error::PromptSet(format!(
                "prompt {id} has K={} < 2 candidates",
                correctness.len()
            )));
        }
        let correct = correctness.iter().filter(|&&c| c).count();
        if correct == 0 || correct == correctness.len() {
            return Err(Error::PromptSet(format!(
                "prompt {id} needs at least one correct and one incorrect candidate"
            )));
        }
        Ok(Self { id, correctness })
    }

    pub fn num_candidates(&self) -> usize {
        self.correctness.len()
    }

    pub fn num_correct(&self) -> usize {
        self.correctness.iter().filter(|&&c| c).count()
    }

    fn bitmask(&self) -> String {
        self.correctness
            .iter()
            .map(|&c| if c { '1' } else { '0' })
            .collect()
    }
}

/// How per-prompt pass-rate targets are drawn.
#[derive(Debug, Clone, PartialEq)]
pub enum PassRateTargets {
    Constant(f64),
    /// Evenly spaced from `lo` to `hi` across prompt ids.
    Grid {
        lo: f64,
        hi: f64,
    },
    /// I.i.d. uniform on `[lo, hi]`.
    Uniform {
        lo: f64,
        hi: f64,
    },
    /// I.i.d. uniform choice among the listed targets.
    Choice(Vec<f64>),
    /// One target per prompt, in id order.
    Explicit(Vec<f64>),
    /// 1 or 2 correct candidates out of `K`, chosen uniformly.
    Hard,
}

impl PassRateTargets {
    fn check(&self, num_prompts: usize) -> Result<()> {
        let in_range = |t: f64| t > 0.0 && t < 1.0;
        let bad = |msg: String| Err(Error::PromptSet(msg));
        match self {
            Self::Constant(t) if !in_range(*t) => bad(format!("target {t} outside (0,1)")),
            Self::Grid { lo, hi } | Self::Uniform { lo, hi } => {
                if !in_range(*lo) || !in_range(*hi) || lo > hi {
                    bad(format!("target range [{lo}, {hi}] not inside (0,1)"))
                } else {
                    Ok(())
                }
            }
            Self::Choice(ts) | Self::Explicit(ts) => {
                if ts.is_empty() {
                    return bad("empty target list".into());
                }
                if let Some(t) = ts.iter().find(|t| !in_range(**t)) {
                    return bad(format!("target {t} outside (0,1)"));
                }
                if matches!(self, Self::Explicit(_)) && ts.len() != num_prompts {
                    return bad(format!(
                        "{} explicit targets for {num_prompts} prompts",
                        ts.len()
                    ));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    fn target(&self, i: usize, num_prompts: usize, k: usize, rng: &mut Stream) -> f64 {
        match self {
            Self::Constant(t) => *t,
            Self::Grid { lo, hi } => {
                if num_prompts == 1 {
                    *lo
                } else {
                    lo + (hi - lo) * i as f64 / (num_prompts - 1) as f64
                }
            }
            Self::Uniform { lo, hi } => rng.gen_range(*lo..=*hi),
            Self::Choice(ts) => ts[rng.gen_range(0..ts.len())],
            Self::Explicit(ts) => ts[i],
            Self::Hard => rng.gen_range(1..=2usize) as f64 / k as f64,
        }
    }
}

impl fmt::Display for PassRateTargets {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let list = |ts: &[f64]| ts.iter().map(f64::to_string).collect::<Vec<_>>().join(",");
        match self {
            Self::Constant(t) => write!(f, "const:{t}"),
            Self::Grid { lo, hi } => write!(f, "grid:{lo}:{hi}"),
            Self::Uniform { lo, hi } => write!(f, "uniform:{lo}:{hi}"),
            Self::Choice(ts) => write!(f, "choice:{}", list(ts)),
            Self::Explicit(ts) => write!(f, "explicit:{}", list(ts)),
            Self::Hard => write!(f, "hard"),
        }
    }
}

impl FromStr for PassRateTargets {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let num = |v: &str| v.trim().parse::<f64>().map_err(|e| format!("{v:?}: {e}"));
        let list = |v: &str| {
            v.split(',')
                .map(num)
                .collect::<std::result::Result<Vec<_>, _>>()
        };
        let (kind, rest) = s.split_once(':').unwrap_or((s, ""));
        let pair = || -> std::result::Result<(f64, f64), String> {
            let (a, b) = rest
                .split_once(':')
                .ok_or_else(|| format!("expected {kind}:lo:hi"))?;
            Ok((num(a)?, num(b)?))
        };
        match kind.trim() {
            "const" => Ok(Self::Constant(num(rest)?)),
            "grid" => pair().map(|(lo, hi)| Self::Grid { lo, hi }),
            "uniform" => pair().map(|(lo, hi)| Self::Uniform { lo, hi }),
            "choice" => Ok(Self::Choice(list(rest)?)),
            "explicit" => Ok(Self::Explicit(list(rest)?)),
            "hard" => Ok(Self::Hard),
            other => Err(format!("unknown pass-rate distribution {other:?}")),
        }
    }
}

/// Record of how a prompt set was generated, kept for experiment reports.
#[derive(Debug, Clone, PartialEq)]
pub struct GenerationSpec {
    pub targets: PassRateTargets,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PromptSet {
    prompts: Vec<Prompt>,
    /// `None` when the set was loaded from a file.
    pub generation: Option<GenerationSpec>,
}

impl PromptSet {
    pub fn new(prompts: Vec<Prompt>) -> Result<Self> {
        if prompts.is_empty() {
            return Err(Error::PromptSet("prompt set is empty".into()));
        }
        for (i, p) in prompts.iter().enumerate() {
            if p.id != i {
                return Err(Error::PromptSet(format!(
                    "prompt ids must be dense 0..P-1, found id {} at position {i}",
                    p.id
                )));
            }
        }
        Ok(Self {
            prompts,
            generation: None,
        })
    }

    pub fn prompts(&self) -> &[Prompt] {
        &self.prompts
    }

    pub fn get(&self, id: usize) -> &Prompt {
        &self.prompts[id]
    }

    pub fn len(&self) -> usize {
        self.prompts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.prompts.is_empty()
    }

    /// Candidate count shared by every prompt, if it is uniform.
    pub fn uniform_candidates(&self) -> Option<usize> {
        let k = self.prompts[0].num_candidates();
        self.prompts
            .iter()
            .all(|p| p.num_candidates() == k)
            .then_some(k)
    }

    /// Writes one `id<TAB>K<TAB>bitmask` line per prompt.
    pub fn write_text<W: Write>(&self, mut out: W) -> Result<()> {
        for p in &self.prompts {
            writeln!(out, "{}\t{}\t{}", p.id, p.num_candidates(), p.bitmask())?;
        }
        Ok(())
    }

    pub fn read_text<R: BufRead>(input: R) -> Result<Self> {
        let mut prompts = Vec::new();
        for (i, line) in input.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let err = |msg: String| Error::Parse { line: i + 1, msg };
            let fields: Vec<&str> = line.split('\t').collect();
            let [id, k, mask] = fields[..] else {
                return Err(err(format!(
                    "expected 3 tab-separated fields, got {}",
                    fields.len()
                )));
            };
            let id: usize = id.parse().map_err(|e| err(format!("id: {e}")))?;
            let k: usize = k.parse().map_err(|e| err(format!("K: {e}")))?;
            let correctness = mask
                .chars()
                .map(|c| match c {
                    '0' => Ok(false),
                    '1' => Ok(true),
                    other => Err(err(format!("bad mask character {other:?}"))),
                })
                .collect::<Result<Vec<_>>>()?;
            if correctness.len() != k {
                return Err(err(format!("mask length {} != K={k}", correctness.len())));
            }
            prompts.push(Prompt::new(id, correctness).map_err(|e| err(e.to_string()))?);
        }
        Self::new(prompts)
    }
}

/// Number of correct candidates realising pass-rate `target` out of `k`.
pub fn correct_count_for(target: f64, k: usize) -> usize {
    ((target * k as f64).round() as usize).clamp(1, k - 1)
}

pub fn generate_prompt_set(
    num_prompts: usize,
    num_candidates: usize,
    targets: &PassRateTargets,
    seed: u64,
) -> Result<PromptSet> {
    if num_prompts == 0 {
        return Err(Error::PromptSet("num_prompts must be >= 1".into()));
    }
    if num_candidates < 2 {
        return Err(Error::PromptSet(format!(
            "num_candidates must be >= 2, got {num_candidates}"
        )));
    }
    targets.check(num_prompts)?;
    let prompts = (0..num_prompts)
        .map(|i| {
            let mut rng = substream(seed, Purpose::PromptGeneration, 0, i as u64);
            let target = targets.target(i, num_prompts, num_candidates, &mut rng);
            let count = correct_count_for(target, num_candidates);
            let mut correctness = vec![false; num_candidates];
            for pos in index::sample(&mut rng, num_candidates, count) {
                correctness[pos] = true;
            }
            Prompt::new(i, correctness)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut set = PromptSet::new(prompts)?;
    set.generation = Some(GenerationSpec {
        targets: targets.clone(),
        seed,
    });
    Ok(set)
}

/// Per-prompt softmax policy, one logit row per prompt.
#[derive(Debug, Clone, PartialEq)]
pub struct Policy<T> {
    logits: Matrix<T>,
}

impl<T: Real> Policy<T> {
    pub fn new(logits: Matrix<T>) -> Result<Self> {
        if logits.as_slice().iter().any(|v| !v.is_finite()) {
            return Err(Error::TrainConfig("policy logits must be finite".into()));
        }
        Ok(Self { logits })
    }

    pub fn uniform(num_prompts: usize, num_candidates: usize) -> Self {
        Self {
            logits: Matrix::zeros(num_prompts, num_candidates),
        }
    }

    /// Uniform policy shaped for `prompts`; fails if candidate counts differ.
    pub fn uniform_for(prompts: &PromptSet) -> Result<Self> {
        let k = prompts
            .uniform_candidates()
            .ok_or_else(|| Error::PromptSet("prompts have differing K".into()))?;
        Ok(Self::uniform(prompts.len(), k))
    }

    pub fn logits(&self) -> &Matrix<T> {
        &self.logits
    }

    pub fn logits_mut(&mut self) -> &mut Matrix<T> {
        &mut self.logits
    }

    pub fn num_prompts(&self) -> usize {
        self.logits.rows()
    }

    pub fn num_candidates(&self) -> usize {
        self.logits.cols()
    }

    pub fn check_shape(&self, prompts: &PromptSet) -> Result<()> {
        let ok = self.num_prompts() == prompts.len()
            && prompts
                .prompts()
                .iter()
                .all(|p| p.num_candidates() == self.num_candidates());
        if ok {
            Ok(())
        } else {
            Err(Error::ShapeMismatch {
                rows: self.num_prompts(),
                cols: self.num_candidates(),
                prompts: prompts.len(),
                k: prompts.get(0).num_candidates(),
            })
        }
    }

    /// Numerically stable log-softmax of one row.
    pub fn log_probs(&self, row: usize) -> Vec<T> {
        let z = self.logits.row(row);
        let max = z.iter().copied().fold(T::neg_infinity(), T::max);
        let lse = max + z.iter().map(|&v| (v - max).exp()).sum::<T>().ln();
        z.iter().map(|&v| v - lse).collect()
    }

    pub fn log_prob(&self, row: usize, action: usize) -> T {
        self.log_probs(row)[action]
    }

    pub fn probs(&self, row: usize) -> Vec<T> {
        let z = self.logits.row(row);
        let max = z.iter().copied().fold(T::neg_infinity(), T::max);
        let e: Vec<T> = z.iter().map(|&v| (v - max).exp()).collect();
        let total: T = e.iter().copied().sum();
        e.into_iter().map(|v| v / total).collect()
    }

    /// Gradient of `log pi(action | row)` w.r.t. the row's logits: `e_a - q`.
    pub fn score_function(&self, row: usize, action: usize) -> Vec<T> {
        let mut g: Vec<T> = self.probs(row).into_iter().map(|q| -q).collect();
        g[action] += T::one();
        g
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample<T> {
    pub prompt_id: usize,
    pub action: usize,
    pub correct: bool,
    /// `log pi_old(action | prompt)` under the sampling policy.
    pub logprob_old: T,
    /// 1-based collection round.
    pub round: usize,
}

impl<T: Real> Sample<T> {
    #[inline]
    pub fn reward(&self) -> T {
        if self.correct {
            T::one()
        } else {
            T::zero()
        }
    }
}

/// Draws `count` i.i.d. responses for `prompt` from its policy row.
pub fn sample_responses<T: Real>(
    policy: &Policy<T>,
    prompt: &Prompt,
    count: usize,
    rng: &mut Stream,
    round: usize,
) -> Vec<Sample<T>> {
    let row = prompt.id;
    let log_probs = policy.log_probs(row);
    let weights: Vec<f64> = policy.probs(row).into_iter().map(Real::as_f64).collect();
    let dist = WeightedIndex::new(&weights).expect("softmax weights are positive and finite");
    (0..count)
        .map(|_| {
            let action = dist.sample(rng);
            Sample {
                prompt_id: prompt.id,
                action,
                correct: prompt.correctness[action],
                logprob_old: log_probs[action],
                round,
            }
        })
        .collect()
}

/// Pass rate `p = sum_k q_k r_k` of one prompt under `policy`.
pub fn expected_reward<T: Real>(policy: &Policy<T>, prompt: &Prompt) -> T {
    policy
        .probs(prompt.id)
        .into_iter()
        .zip(&prompt.correctness)
        .filter(|(_, &c)| c)
        .map(|(q, _)| q)
        .sum()
}

/// Mean pass rate over the whole prompt set.
pub fn mean_expected_reward<T: Real>(policy: &Policy<T>, prompts: &PromptSet) -> T {
    let total: T = prompts
        .prompts()
        .iter()
        .map(|p| expected_reward(policy, p))
        .sum();
    total / T::of_usize(prompts.len())
}

/// Exact gradient of [`mean_expected_reward`] w.r.t. the logits.
pub fn analytic_gradient<T: Real>(policy: &Policy<T>, prompts: &PromptSet) -> Result<Matrix<T>> {
    policy.check_shape(prompts)?;
    let scale = T::one() / T::of_usize(prompts.len());
    let mut grad = Matrix::zeros(policy.num_prompts(), policy.num_candidates());
    for prompt in prompts.prompts() {
        let q = policy.probs(prompt.id);
        let p = expected_reward(policy, prompt);
        for (k, (g, &qk)) in grad.row_mut(prompt.id).iter_mut().zip(&q).enumerate() {
            let r = if prompt.correctness[k] {
                T::one()
            } else {
                T::zero()
            };
            *g = scale * qk * (r - p);
        }
    }
    Ok(grad)
}

/// Shannon entropy of one prompt's row, in nats.
pub fn policy_entropy<T: Real>(policy: &Policy<T>, prompt: &Prompt) -> T {
    row_entropy(&policy.probs(prompt.id))
}

pub fn mean_entropy<T: Real>(policy: &Policy<T>, prompts: &PromptSet) -> T {
    let total: T = prompts
        .prompts()
        .iter()
        .map(|p| policy_entropy(policy, p))
        .sum();
    total / T::of_usize(prompts.len())
}

pub(crate) fn row_entropy<T: Real>(q: &[T]) -> T {
    -q.iter()
        .filter(|&&v| v > T::zero())
        .map(|&v| v * v.ln())
        .sum::<T>()
}
