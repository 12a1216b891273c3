use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid prompt set: {0}")]
    PromptSet(String),
    #[error("invalid sampler config: {0}")]
    SamplerConfig(String),
    #[error("invalid clip config: {0}")]
    ClipConfig(String),
    #[error("invalid training config: {0}")]
    TrainConfig(String),
    #[error("pool for prompt {prompt_id} has {size} samples, need at least {needed}")]
    PoolTooSmall {
        prompt_id: usize,
        size: usize,
        needed: usize,
    },
    #[error("policy shape {rows}x{cols} does not match prompt set ({prompts} prompts, K={k})")]
    ShapeMismatch {
        rows: usize,
        cols: usize,
        prompts: usize,
        k: usize,
    },
    #[error("pass@k requires 0 <= c <= n and 1 <= k <= n (got n={n}, c={c}, k={k})")]
    PassAtK { n: usize, c: usize, k: usize },
    #[error("every prompt in step {step} was filtered out")]
    AllFiltered { step: usize },
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
