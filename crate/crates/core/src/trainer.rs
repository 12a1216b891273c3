//! End-to-end training loop and multi-seed comparison harness.

use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use rayon::prelude::*;

use crate::analysis::collapse_probability;
use crate::env::{expected_reward, mean_entropy, mean_expected_reward, Policy, Prompt, PromptSet};
use crate::error::{Error, Result};
use crate::grouping::{balanced_downsample, global_stats, grpo_group, UpdateGroup};
use crate::objective::{clipped_objective, ClipConfig, UpdateBatch};
use crate::optim::{Optimizer, OptimizerKind};
use crate::rng::{substream, Purpose};
use crate::sampler::{
    adaptive_collect, passive_filter, BudgetLedger, ExitCondition, RolloutSeed, SamplerConfig,
};
use crate::scalar::{Matrix, Real};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Algorithm {
    GrpoUniform,
    AdaPos,
    AdaBalance,
}

impl Algorithm {
    pub fn exit_condition(self) -> ExitCondition {
        match self {
            Self::GrpoUniform => ExitCondition::None,
            Self::AdaPos => ExitCondition::Pos,
            Self::AdaBalance => ExitCondition::Balance,
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::GrpoUniform => "grpo_uniform",
            Self::AdaPos => "ada_pos",
            Self::AdaBalance => "ada_balance",
        })
    }
}

impl FromStr for Algorithm {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "grpo_uniform" | "grpouniform" | "grpo" => Ok(Self::GrpoUniform),
            "ada_pos" | "adapos" => Ok(Self::AdaPos),
            "ada_balance" | "adabalance" => Ok(Self::AdaBalance),
            other => Err(format!("unknown algorithm {other:?}")),
        }
    }
}

/// How the entropy coefficient is phased in over the first steps.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EntropyWarmup {
    /// Off before the threshold, full strength from then on.
    Step,
    /// Ramps linearly to full strength over the warm-up window.
    Linear,
}

impl fmt::Display for EntropyWarmup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Step => "step",
            Self::Linear => "linear",
        })
    }
}

impl FromStr for EntropyWarmup {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.trim() {
            "step" => Ok(Self::Step),
            "linear" => Ok(Self::Linear),
            other => Err(format!("unknown entropy warm-up {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub algorithm: Algorithm,
    pub sampler: SamplerConfig,
    pub clip: ClipConfig<f64>,
    pub learning_rate: f64,
    pub num_steps: usize,
    pub batch_prompts: usize,
    pub seed: u64,
    /// Objective steps per collected batch (`E`).
    pub updates_per_batch: usize,
    pub optimizer: OptimizerKind,
    pub weight_decay: f64,
    /// Divide adaptive-path advantages by the pool's std (global-sigma ablation).
    pub advantage_std: bool,
    /// `epsilon` in GRPO normalisation, also used by `advantage_std`.
    pub grpo_epsilon: f64,
    pub entropy_warmup_steps: usize,
    pub entropy_warmup: EntropyWarmup,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            algorithm: Algorithm::AdaBalance,
            sampler: SamplerConfig::with_cap_32(4, ExitCondition::Balance),
            clip: ClipConfig::clip_higher(),
            learning_rate: 0.1,
            num_steps: 300,
            batch_prompts: 64,
            seed: 0,
            updates_per_batch: 1,
            optimizer: OptimizerKind::Sgd,
            weight_decay: 0.0,
            advantage_std: false,
            grpo_epsilon: 1e-6,
            entropy_warmup_steps: 0,
            entropy_warmup: EntropyWarmup::Step,
        }
    }
}

impl TrainConfig {
    pub fn for_algorithm(algorithm: Algorithm) -> Self {
        Self {
            algorithm,
            ..Self::default()
        }
        .normalized()
    }

    /// Aligns the sampler with the algorithm. The uniform GRPO baseline is
    /// forced to one round of exactly `n` samples.
    pub fn normalized(mut self) -> Self {
        self.sampler.exit_condition = self.algorithm.exit_condition();
        if self.algorithm == Algorithm::GrpoUniform {
            self.sampler.num_rounds = 1;
            self.sampler.samples_per_round = self.sampler.group_size;
        }
        self
    }

    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    pub fn validate(&self, prompts: &PromptSet) -> Result<()> {
        let bad = |m: String| Err(Error::TrainConfig(m));
        self.sampler.validate()?;
        self.clip.validate()?;
        if self.sampler.exit_condition != self.algorithm.exit_condition() {
            return bad(format!(
                "algorithm {} requires exit condition {}",
                self.algorithm,
                self.algorithm.exit_condition()
            ));
        }
        if self.algorithm == Algorithm::GrpoUniform
            && (self.sampler.num_rounds != 1
                || self.sampler.samples_per_round != self.sampler.group_size)
        {
            return bad(
                "grpo_uniform requires num_rounds=1 and samples_per_round=group_size".into(),
            );
        }
        if self.batch_prompts == 0 || self.batch_prompts > prompts.len() {
            return bad(format!(
                "batch_prompts={} must be in 1..={}",
                self.batch_prompts,
                prompts.len()
            ));
        }
        if self.updates_per_batch == 0 {
            return bad("updates_per_batch must be >= 1".into());
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return bad(format!("learning_rate={} must be > 0", self.learning_rate));
        }
        if !(self.grpo_epsilon > 0.0) {
            return bad("grpo_epsilon must be > 0".into());
        }
        if prompts.uniform_candidates().is_none() {
            return bad("all prompts must share one candidate count".into());
        }
        Ok(())
    }

    /// Entropy coefficient in effect at `step`.
    pub fn entropy_coeff_at(&self, step: usize) -> f64 {
        let full = self.clip.entropy_coeff;
        let w = self.entropy_warmup_steps;
        if w == 0 {
            return full;
        }
        match self.entropy_warmup {
            EntropyWarmup::Step if step < w => 0.0,
            EntropyWarmup::Step => full,
            EntropyWarmup::Linear => full * ((step + 1) as f64 / w as f64).min(1.0),
        }
    }

    /// Flat `key=value` rendering, one field per line.
    pub fn to_kv(&self) -> String {
        let s = &self.sampler;
        let c = &self.clip;
        [
            format!("algorithm={}", self.algorithm),
            format!("group_size={}", s.group_size),
            format!("samples_per_round={}", s.samples_per_round),
            format!("num_rounds={}", s.num_rounds),
            format!("exit_condition={}", s.exit_condition),
            format!("eps_low={}", c.eps_low),
            format!("eps_high={}", c.eps_high),
            format!("entropy_coeff={}", c.entropy_coeff),
            format!("learning_rate={}", self.learning_rate),
            format!("num_steps={}", self.num_steps),
            format!("batch_prompts={}", self.batch_prompts),
            format!("seed={}", self.seed),
            format!("updates_per_batch={}", self.updates_per_batch),
            format!("optimizer={}", self.optimizer),
            format!("weight_decay={}", self.weight_decay),
            format!("advantage_std={}", self.advantage_std),
            format!("grpo_epsilon={}", self.grpo_epsilon),
            format!("entropy_warmup_steps={}", self.entropy_warmup_steps),
            format!("entropy_warmup={}", self.entropy_warmup),
        ]
        .join("\n")
            + "\n"
    }
}

/// Metrics for one training step. Policy-derived fields are measured after
/// the step's updates.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub step: usize,
    /// Fraction of correct responses among every sample generated this step.
    pub mean_train_reward: f64,
    /// Mean pass rate over the whole prompt set.
    pub expected_reward: f64,
    pub mean_entropy: f64,
    pub samples_used: usize,
    /// Samples that entered the gradient.
    pub update_samples: usize,
    pub prompts_eligible: usize,
    pub zero_advantage_groups: usize,
    pub unresolved_count: usize,
    /// Mean of `p^n + (1-p)^n` over the batch under the sampling policy.
    pub predicted_collapse_fraction: f64,
    pub resolved_round_histogram: Vec<usize>,
}

pub const STEP_CSV_HEADER: [&str; 11] = [
    "step",
    "mean_train_reward",
    "expected_reward",
    "mean_entropy",
    "samples_used",
    "update_samples",
    "prompts_eligible",
    "zero_advantage_groups",
    "unresolved_count",
    "predicted_collapse_fraction",
    "resolved_round_histogram",
];

#[derive(Debug, Clone)]
pub struct TrainOutput<T> {
    pub records: Vec<StepRecord>,
    pub final_policy: Policy<T>,
    pub ledgers: Vec<BudgetLedger>,
}

/// Prompt ids for `step`, sequential round-robin over the set.
pub fn batch_ids(step: usize, batch: usize, num_prompts: usize) -> Vec<usize> {
    let start = (step * batch) % num_prompts;
    (0..batch).map(|j| (start + j) % num_prompts).collect()
}

struct Collected<T> {
    groups: Vec<UpdateGroup<T>>,
    ledger: BudgetLedger,
    mean_train_reward: f64,
    predicted_collapse: f64,
}

fn collect_step<T: Real>(
    config: &TrainConfig,
    policy: &Policy<T>,
    batch: &[&Prompt],
    step: usize,
) -> Result<Collected<T>> {
    let n = config.sampler.group_size;
    let predicted_collapse = batch
        .iter()
        .map(|p| collapse_probability(expected_reward(policy, p).as_f64(), n))
        .sum::<f64>()
        / batch.len() as f64;

    let collection = adaptive_collect(
        policy,
        batch,
        &config.sampler,
        RolloutSeed {
            master: config.seed,
            step: step as u64,
        },
    )?;
    let correct: usize = collection.pools.values().map(|p| p.num_correct()).sum();
    let mean_train_reward = correct as f64 / collection.ledger.total_samples as f64;

    let eps = T::of(config.grpo_epsilon);
    let groups = match config.algorithm {
        Algorithm::GrpoUniform => collection
            .pools
            .values()
            .map(|pool| grpo_group(pool, eps))
            .collect(),
        Algorithm::AdaPos | Algorithm::AdaBalance => {
            let eligible = passive_filter(&collection.pools, &collection.ledger);
            eligible
                .iter()
                .map(|&id| {
                    let pool = &collection.pools[&id];
                    let mut rng =
                        substream(config.seed, Purpose::Downsample, step as u64, id as u64);
                    let group = balanced_downsample(pool, n, &mut rng)?;
                    Ok(if config.advantage_std {
                        group.normalize_by_std(global_stats(pool).std_reward, eps)
                    } else {
                        group
                    })
                })
                .collect::<Result<Vec<_>>>()?
        }
    };
    Ok(Collected {
        groups,
        ledger: collection.ledger,
        mean_train_reward,
        predicted_collapse,
    })
}

/// Runs `config.num_steps` collect-then-update iterations from a uniform
/// initial policy.
pub fn train<T: Real>(config: &TrainConfig, prompts: &PromptSet) -> Result<TrainOutput<T>> {
    config.validate(prompts)?;
    let mut policy = Policy::<T>::uniform_for(prompts)?;
    let mut optimizer = Optimizer::new(
        config.optimizer,
        T::of(config.learning_rate),
        T::of(config.weight_decay),
    );
    let clip = ClipConfig {
        eps_low: T::of(config.clip.eps_low),
        eps_high: T::of(config.clip.eps_high),
        entropy_coeff: T::zero(),
    };
    let mut records = Vec::with_capacity(config.num_steps);
    let mut ledgers = Vec::with_capacity(config.num_steps);

    for step in 0..config.num_steps {
        let ids = batch_ids(step, config.batch_prompts, prompts.len());
        let batch: Vec<&Prompt> = ids.iter().map(|&i| prompts.get(i)).collect();
        let old_policy = policy.clone();
        let collected = collect_step(config, &old_policy, &batch, step)?;
        if collected.groups.is_empty() {
            return Err(Error::AllFiltered { step });
        }

        let prompts_eligible = collected.groups.len();
        let zero_advantage_groups = collected
            .groups
            .iter()
            .filter(|g| g.is_zero_signal())
            .count();
        let update = UpdateBatch::new(collected.groups, old_policy);
        let update_samples = update.num_samples();
        let step_clip = clip.with_entropy_coeff(T::of(config.entropy_coeff_at(step)));
        for _ in 0..config.updates_per_batch {
            let obj = clipped_objective(&update, &policy, &step_clip)?;
            optimizer.ascend(policy.logits_mut(), &obj.gradient);
        }

        let ledger = collected.ledger;
        records.push(StepRecord {
            step,
            mean_train_reward: collected.mean_train_reward,
            expected_reward: mean_expected_reward(&policy, prompts).as_f64(),
            mean_entropy: mean_entropy(&policy, prompts).as_f64(),
            samples_used: ledger.total_samples,
            update_samples,
            prompts_eligible,
            zero_advantage_groups,
            unresolved_count: ledger.unresolved_prompt_ids.len(),
            predicted_collapse_fraction: collected.predicted_collapse,
            resolved_round_histogram: ledger.resolved_within.clone(),
        });
        ledgers.push(ledger);
    }

    Ok(TrainOutput {
        records,
        final_policy: policy,
        ledgers,
    })
}

pub fn write_steps_csv<W: Write>(records: &[StepRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(STEP_CSV_HEADER)?;
    for r in records {
        let hist = r
            .resolved_round_histogram
            .iter()
            .map(usize::to_string)
            .collect::<Vec<_>>()
            .join(";");
        w.write_record([
            r.step.to_string(),
            r.mean_train_reward.to_string(),
            r.expected_reward.to_string(),
            r.mean_entropy.to_string(),
            r.samples_used.to_string(),
            r.update_samples.to_string(),
            r.prompts_eligible.to_string(),
            r.zero_advantage_groups.to_string(),
            r.unresolved_count.to_string(),
            r.predicted_collapse_fraction.to_string(),
            hist,
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Writes `step,round,active_count,samples_this_round` for every step.
pub fn write_ledgers_csv<W: Write>(ledgers: &[BudgetLedger], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["step", "round", "active_count", "samples_this_round"])?;
    for (step, ledger) in ledgers.iter().enumerate() {
        for (t, &active) in ledger.active_per_round.iter().enumerate() {
            w.write_record([
                step.to_string(),
                (t + 1).to_string(),
                active.to_string(),
                (active * ledger.samples_per_round).to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// One row per prompt, tab-separated logits with 17 significant digits.
pub fn write_policy_text<T: Real, W: Write>(policy: &Policy<T>, mut out: W) -> Result<()> {
    for r in 0..policy.num_prompts() {
        let row = policy
            .logits()
            .row(r)
            .iter()
            .map(|v| format!("{:.16e}", v.as_f64()))
            .collect::<Vec<_>>()
            .join("\t");
        writeln!(out, "{row}")?;
    }
    Ok(())
}

pub fn read_policy_text<R: BufRead>(input: R) -> Result<Policy<f64>> {
    let mut data = Vec::new();
    let mut rows = 0;
    let mut cols = None;
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let values = line
            .split('\t')
            .map(|v| v.parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::Parse {
                line: i + 1,
                msg: e.to_string(),
            })?;
        if *cols.get_or_insert(values.len()) != values.len() {
            return Err(Error::Parse {
                line: i + 1,
                msg: "ragged logits row".into(),
            });
        }
        data.extend(values);
        rows += 1;
    }
    Policy::new(Matrix::from_vec(rows, cols.unwrap_or(0), data))
}

/// Mean and sample standard deviation.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Normalised area under the expected-reward curve (mean over steps).
pub fn reward_auc(records: &[StepRecord]) -> f64 {
    records.iter().map(|r| r.expected_reward).sum::<f64>() / records.len().max(1) as f64
}

#[derive(Debug, Clone)]
pub struct ConfigResult {
    pub label: String,
    /// `[seed][step]` expected-reward curves.
    pub curves: Vec<Vec<f64>>,
    pub finals: Vec<f64>,
    pub aucs: Vec<f64>,
}

impl ConfigResult {
    /// Mean and std over seeds at every step.
    pub fn curve_stats(&self) -> Vec<(f64, f64)> {
        let steps = self.curves.first().map_or(0, Vec::len);
        (0..steps)
            .map(|t| mean_std(&self.curves.iter().map(|c| c[t]).collect::<Vec<_>>()))
            .collect()
    }
}

/// Seed-paired differences `candidate - reference`.
#[derive(Debug, Clone, PartialEq)]
pub struct PairedDelta {
    pub final_deltas: Vec<f64>,
    pub auc_deltas: Vec<f64>,
}

impl PairedDelta {
    pub fn final_wins(&self) -> usize {
        self.final_deltas.iter().filter(|d| **d > 0.0).count()
    }

    pub fn auc_wins(&self) -> usize {
        self.auc_deltas.iter().filter(|d| **d > 0.0).count()
    }
}

#[derive(Debug, Clone)]
pub struct ComparisonReport {
    pub seeds: Vec<u64>,
    pub results: Vec<ConfigResult>,
}

impl ComparisonReport {
    pub fn paired(&self, candidate: usize, reference: usize) -> PairedDelta {
        let (c, r) = (&self.results[candidate], &self.results[reference]);
        PairedDelta {
            final_deltas: c.finals.iter().zip(&r.finals).map(|(a, b)| a - b).collect(),
            auc_deltas: c.aucs.iter().zip(&r.aucs).map(|(a, b)| a - b).collect(),
        }
    }

    /// Per-config summary with deltas against the first config.
    pub fn write_summary_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "config",
            "seeds",
            "final_mean",
            "final_std",
            "auc_mean",
            "auc_std",
            "final_delta_mean",
            "final_delta_std",
            "auc_delta_mean",
            "auc_delta_std",
            "final_wins",
            "auc_wins",
        ])?;
        for (i, res) in self.results.iter().enumerate() {
            let (fm, fs) = mean_std(&res.finals);
            let (am, astd) = mean_std(&res.aucs);
            let d = self.paired(i, 0);
            let (dfm, dfs) = mean_std(&d.final_deltas);
            let (dam, das) = mean_std(&d.auc_deltas);
            w.write_record([
                res.label.clone(),
                self.seeds.len().to_string(),
                fm.to_string(),
                fs.to_string(),
                am.to_string(),
                astd.to_string(),
                dfm.to_string(),
                dfs.to_string(),
                dam.to_string(),
                das.to_string(),
                d.final_wins().to_string(),
                d.auc_wins().to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    /// `step,config,mean_expected_reward,std_expected_reward`.
    pub fn write_curves_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "step",
            "config",
            "mean_expected_reward",
            "std_expected_reward",
        ])?;
        for res in &self.results {
            for (t, (m, s)) in res.curve_stats().into_iter().enumerate() {
                w.write_record([
                    t.to_string(),
                    res.label.clone(),
                    m.to_string(),
                    s.to_string(),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Trains every `(label, config)` under every seed and aggregates the
/// expected-reward curves. Runs execute in parallel; results are ordered.
pub fn compare_runs(
    configs: &[(String, TrainConfig)],
    prompts: &PromptSet,
    seeds: &[u64],
) -> Result<ComparisonReport> {
    if configs.len() < 2 || seeds.len() < 2 {
        return Err(Error::TrainConfig(
            "comparison needs at least two configs and two seeds".into(),
        ));
    }
    if configs
        .iter()
        .any(|(_, c)| c.num_steps != configs[0].1.num_steps)
    {
        return Err(Error::TrainConfig(
            "compared configs must share num_steps".into(),
        ));
    }
    let jobs: Vec<(usize, u64)> = (0..configs.len())
        .flat_map(|c| seeds.iter().map(move |&s| (c, s)))
        .collect();
    let runs = jobs
        .par_iter()
        .map(|&(c, seed)| {
            let cfg = TrainConfig {
                seed,
                ..configs[c].1.clone()
            };
            train::<f64>(&cfg, prompts).map(|o| o.records)
        })
        .collect::<Result<Vec<_>>>()?;

    let results = configs
        .iter()
        .enumerate()
        .map(|(c, (label, _))| {
            let mine = &runs[c * seeds.len()..(c + 1) * seeds.len()];
            ConfigResult {
                label: label.clone(),
                curves: mine
                    .iter()
                    .map(|r| r.iter().map(|x| x.expected_reward).collect())
                    .collect(),
                finals: mine
                    .iter()
                    .map(|r| r.last().map_or(f64::NAN, |x| x.expected_reward))
                    .collect(),
                aucs: mine.iter().map(|r| reward_auc(r)).collect(),
            }
        })
        .collect();
    Ok(ComparisonReport {
        seeds: seeds.to_vec(),
        results,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{generate_prompt_set, PassRateTargets};

    fn small(algorithm: Algorithm) -> TrainConfig {
        TrainConfig {
            num_steps: 20,
            batch_prompts: 8,
            learning_rate: 2.0,
            ..TrainConfig::for_algorithm(algorithm)
        }
    }

    fn prompts() -> PromptSet {
        generate_prompt_set(16, 8, &PassRateTargets::Grid { lo: 0.1, hi: 0.9 }, 1).unwrap()
    }

    #[test]
    fn normalization_forces_uniform_baseline() {
        let c = TrainConfig {
            algorithm: Algorithm::GrpoUniform,
            ..TrainConfig::default()
        }
        .normalized();
        assert_eq!(c.sampler.exit_condition, ExitCondition::None);
        assert_eq!((c.sampler.num_rounds, c.sampler.samples_per_round), (1, 4));
        let bad = TrainConfig {
            algorithm: Algorithm::GrpoUniform,
            ..TrainConfig::default()
        };
        assert!(bad.validate(&prompts()).is_err());
    }

    #[test]
    fn batches_are_round_robin() {
        assert_eq!(batch_ids(0, 3, 5), vec![0, 1, 2]);
        assert_eq!(batch_ids(1, 3, 5), vec![3, 4, 0]);
        assert_eq!(batch_ids(2, 3, 5), vec![1, 2, 3]);
    }

    #[test]
    fn entropy_warmup_schedules() {
        let mut c = TrainConfig::default();
        c.clip.entropy_coeff = 1.0;
        assert_eq!(c.entropy_coeff_at(0), 1.0);
        c.entropy_warmup_steps = 10;
        assert_eq!(c.entropy_coeff_at(9), 0.0);
        assert_eq!(c.entropy_coeff_at(10), 1.0);
        c.entropy_warmup = EntropyWarmup::Linear;
        assert!((c.entropy_coeff_at(4) - 0.5).abs() < 1e-15);
        assert_eq!(c.entropy_coeff_at(50), 1.0);
    }

    #[test]
    fn records_are_consistent() {
        let set = prompts();
        for alg in [
            Algorithm::GrpoUniform,
            Algorithm::AdaPos,
            Algorithm::AdaBalance,
        ] {
            let out = train::<f64>(&small(alg), &set).unwrap();
            assert_eq!(out.records.len(), 20);
            for (r, l) in out.records.iter().zip(&out.ledgers) {
                assert_eq!(r.samples_used, l.total_samples);
                assert_eq!(r.update_samples, 4 * r.prompts_eligible);
                assert!(r.prompts_eligible <= 8);
                assert_eq!(r.resolved_round_histogram.len(), l.active_per_round.len());
                if alg == Algorithm::GrpoUniform {
                    assert_eq!(r.samples_used, 32);
                    assert_eq!(r.prompts_eligible, 8);
                } else {
                    assert!(r.samples_used >= 32);
                }
                if alg == Algorithm::AdaBalance {
                    assert_eq!(r.zero_advantage_groups, 0);
                }
            }
        }
    }

    #[test]
    fn two_arm_bandit_improves() {
        let set = PromptSet::new(vec![Prompt::new(0, vec![true, false]).unwrap()]).unwrap();
        for alg in [
            Algorithm::GrpoUniform,
            Algorithm::AdaPos,
            Algorithm::AdaBalance,
        ] {
            let cfg = TrainConfig {
                num_steps: 15,
                batch_prompts: 1,
                learning_rate: 0.25,
                ..TrainConfig::for_algorithm(alg)
            };
            let out = train::<f64>(&cfg, &set).unwrap();
            let first = out.records[0].expected_reward;
            let last = out.records.last().unwrap().expected_reward;
            eprintln!("{alg}: {first} -> {last}");
            assert!(last > first + 0.1, "{alg}: {first} -> {last}");
        }
    }

    #[test]
    fn single_precision_training_runs() {
        let out = train::<f32>(&small(Algorithm::AdaBalance), &prompts()).unwrap();
        assert_eq!(out.records.len(), 20);
        assert!(out.records.iter().all(|r| r.expected_reward.is_finite()));
    }

    #[test]
    fn policy_text_round_trips() {
        let out = train::<f64>(&small(Algorithm::AdaPos), &prompts()).unwrap();
        let mut buf = Vec::new();
        write_policy_text(&out.final_policy, &mut buf).unwrap();
        let back = read_policy_text(&buf[..]).unwrap();
        assert_eq!(&back, &out.final_policy);
    }

    #[test]
    fn steps_csv_shape() {
        let out = train::<f64>(&small(Algorithm::AdaBalance), &prompts()).unwrap();
        let mut buf = Vec::new();
        write_steps_csv(&out.records, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().next().unwrap(), STEP_CSV_HEADER.join(","));
        assert_eq!(text.lines().count(), 21);
        let mut buf = Vec::new();
        write_ledgers_csv(&out.ledgers, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 1 + 20 * 8);
    }

    #[test]
    fn identical_configs_compare_to_zero() {
        let set = prompts();
        let cfg = small(Algorithm::AdaPos);
        let report = compare_runs(
            &[("a".into(), cfg.clone()), ("b".into(), cfg)],
            &set,
            &[1, 2, 3],
        )
        .unwrap();
        let d = report.paired(1, 0);
        assert!(d
            .final_deltas
            .iter()
            .chain(&d.auc_deltas)
            .all(|x| *x == 0.0));
        assert_eq!(report.results[0].curves, report.results[1].curves);
        let mut buf = Vec::new();
        report.write_summary_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 3);
    }

    #[test]
    fn compare_rejects_too_few_inputs() {
        let set = prompts();
        let cfg = small(Algorithm::AdaPos);
        assert!(compare_runs(&[("a".into(), cfg.clone())], &set, &[1, 2]).is_err());
        assert!(compare_runs(&[("a".into(), cfg.clone()), ("b".into(), cfg)], &set, &[1]).is_err());
    }

    #[test]
    fn oversized_batch_is_rejected() {
        let cfg = TrainConfig {
            batch_prompts: 17,
            ..small(Algorithm::AdaPos)
        };
        assert!(train::<f64>(&cfg, &prompts()).is_err());
    }
}
