use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use reinforce_ada::analysis::{
    collapse_profile, expected_pool_size, pass_at_k, reward_entropy_trace,
};
use reinforce_ada::config::RunConfig;
use reinforce_ada::env::{generate_prompt_set, PassRateTargets};
use reinforce_ada::trainer::{
    compare_runs, train, write_ledgers_csv, write_policy_text, write_steps_csv,
};

#[derive(Parser)]
#[command(
    name = "reinforce-ada",
    about = "Adaptive-sampling policy-gradient simulator",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one configuration and write per-step metrics.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train several configurations over several seeds and compare them.
    Compare {
        #[arg(long, value_delimiter = ',', required = true)]
        configs: Vec<PathBuf>,
        #[arg(long, value_delimiter = ',', required = true)]
        seeds: Vec<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Closed-form diagnostics.
    Analyze {
        #[command(subcommand)]
        which: Analysis,
    },
    /// Generate a prompt set in the `id<TAB>K<TAB>bitmask` format.
    Prompts {
        #[arg(long, default_value_t = 256)]
        num_prompts: usize,
        #[arg(long, default_value_t = 16)]
        num_candidates: usize,
        /// e.g. `grid:0.05:0.95`, `uniform:0.1:0.3`, `const:0.5`, `hard`
        #[arg(long, default_value = "grid:0.05:0.95")]
        pass_rate: PassRateTargets,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct Output {
    /// Write CSV here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Analysis {
    /// Probability that a group of n draws has uniform rewards.
    Collapse {
        #[arg(long, value_delimiter = ',', required = true)]
        p: Vec<f64>,
        #[arg(long = "n-list", value_delimiter = ',', required = true)]
        n_list: Vec<usize>,
        #[command(flatten)]
        output: Output,
    },
    /// Unbiased pass@k from n samples with c correct.
    Passk {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        c: usize,
        #[arg(long = "k-list", value_delimiter = ',', required = true)]
        k_list: Vec<usize>,
        #[command(flatten)]
        output: Output,
    },
    /// Expected samples per prompt under the config's exit condition.
    PoolSize {
        #[arg(long)]
        config: PathBuf,
        #[arg(long = "p-list", value_delimiter = ',', required = true)]
        p_list: Vec<f64>,
        #[command(flatten)]
        output: Output,
    },
}

fn sink(out: &Option<PathBuf>) -> Result<Box<dyn Write>> {
    Ok(match out {
        Some(path) => Box::new(BufWriter::new(
            File::create(path).with_context(|| format!("creating {}", path.display()))?,
        )),
        None => Box::new(io::stdout().lock()),
    })
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    let path = dir.join(name);
    Ok(BufWriter::new(
        File::create(&path).with_context(|| format!("creating {}", path.display()))?,
    ))
}

fn load_config(path: &Path) -> Result<RunConfig> {
    RunConfig::from_path(path).with_context(|| format!("reading config {}", path.display()))
}

fn run_train(config: &Path, out: &Path) -> Result<()> {
    let run = load_config(config)?;
    let prompts = run.prompts.load(config.parent())?;
    fs::create_dir_all(out)?;
    let result = train::<f64>(&run.train, &prompts)?;

    write_steps_csv(&result.records, create(out, "steps.csv")?)?;
    write_ledgers_csv(&result.ledgers, create(out, "ledger.csv")?)?;
    write_policy_text(&result.final_policy, create(out, "final_policy.txt")?)?;
    prompts.write_text(create(out, "prompts.txt")?)?;
    create(out, "config.txt")?.write_all(run.to_kv().as_bytes())?;

    let mut trace = csv_writer(create(out, "trace.csv")?);
    trace.write_record(["step", "mean_entropy", "expected_reward"])?;
    for (i, (h, r)) in reward_entropy_trace(&result.records)
        .into_iter()
        .enumerate()
    {
        trace.write_record([i.to_string(), h.to_string(), r.to_string()])?;
    }
    trace.flush()?;

    if let Some(last) = result.records.last() {
        eprintln!(
            "{}: {} steps, final expected reward {:.4}, {} total samples",
            run.train.algorithm,
            result.records.len(),
            last.expected_reward,
            result.records.iter().map(|r| r.samples_used).sum::<usize>()
        );
    }
    Ok(())
}

fn csv_writer<W: Write>(w: W) -> csv::Writer<W> {
    csv::Writer::from_writer(w)
}

fn run_compare(configs: &[PathBuf], seeds: &[u64], out: &Path) -> Result<()> {
    if configs.len() < 2 || seeds.len() < 2 {
        bail!("compare needs at least two configs and two seeds");
    }
    let runs = configs
        .iter()
        .map(|p| {
            let label = p.file_stem().map_or_else(
                || p.display().to_string(),
                |s| s.to_string_lossy().into_owned(),
            );
            load_config(p).map(|c| (label, c))
        })
        .collect::<Result<Vec<_>>>()?;
    let prompts = runs[0].1.prompts.load(configs[0].parent())?;
    let named: Vec<_> = runs.into_iter().map(|(l, c)| (l, c.train)).collect();
    fs::create_dir_all(out)?;
    let report = compare_runs(&named, &prompts, seeds)?;
    report.write_summary_csv(create(out, "comparison.csv")?)?;
    report.write_curves_csv(create(out, "curves.csv")?)?;
    for (i, res) in report.results.iter().enumerate().skip(1) {
        let d = report.paired(i, 0);
        eprintln!(
            "{} vs {}: final wins {}/{}, auc wins {}/{}",
            res.label,
            report.results[0].label,
            d.final_wins(),
            seeds.len(),
            d.auc_wins(),
            seeds.len()
        );
    }
    Ok(())
}

fn run_analysis(which: Analysis) -> Result<()> {
    match which {
        Analysis::Collapse { p, n_list, output } => {
            let mut w = csv_writer(sink(&output.out)?);
            w.write_record(["p", "n", "all_correct", "all_incorrect", "collapse"])?;
            for &pr in &p {
                if !(0.0..=1.0).contains(&pr) {
                    bail!("p={pr} outside [0,1]");
                }
                let prof = collapse_profile(pr, &n_list);
                for (i, n) in n_list.iter().enumerate() {
                    w.write_record([
                        pr.to_string(),
                        n.to_string(),
                        prof.all_correct[i].to_string(),
                        prof.all_incorrect[i].to_string(),
                        prof.collapse_probs[i].to_string(),
                    ])?;
                }
            }
            w.flush()?;
        }
        Analysis::Passk {
            n,
            c,
            k_list,
            output,
        } => {
            let mut w = csv_writer(sink(&output.out)?);
            w.write_record(["n", "c", "k", "pass_at_k"])?;
            for k in k_list {
                let v: f64 = pass_at_k(n, c, k)?;
                w.write_record([n.to_string(), c.to_string(), k.to_string(), v.to_string()])?;
            }
            w.flush()?;
        }
        Analysis::PoolSize {
            config,
            p_list,
            output,
        } => {
            let run = load_config(&config)?;
            let sampler = run.train.sampler;
            let mut w = csv_writer(sink(&output.out)?);
            w.write_record([
                "p",
                "exit_condition",
                "expected_pool_size",
                "unresolved_probability",
            ])?;
            for p in p_list {
                if !(p > 0.0 && p < 1.0) {
                    bail!("p={p} outside (0,1)");
                }
                let prof = expected_pool_size(p, &sampler)?;
                w.write_record([
                    p.to_string(),
                    sampler.exit_condition.to_string(),
                    prof.expected_pool_size.to_string(),
                    prof.unresolved_probability.to_string(),
                ])?;
            }
            w.flush()?;
        }
    }
    Ok(())
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Train { config, out } => run_train(&config, &out),
        Command::Compare {
            configs,
            seeds,
            out,
        } => run_compare(&configs, &seeds, &out),
        Command::Analyze { which } => run_analysis(which),
        Command::Prompts {
            num_prompts,
            num_candidates,
            pass_rate,
            seed,
            out,
        } => {
            let set = generate_prompt_set(num_prompts, num_candidates, &pass_rate, seed)?;
            let mut w = sink(&out)?;
            set.write_text(&mut w)?;
            w.flush()?;
            Ok(())
        }
    }
}
