use std::fmt::Display;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("stage {stage} failed on {item}: {reason}")]
    Stage { stage: &'static str, item: String, reason: String },
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Stage { .. } => 3,
        }
    }

    pub fn stage(stage: &'static str, item: impl Into<String>, reason: impl Display) -> Self {
        CliError::Stage {
            stage,
            item: item.into(),
            reason: reason.to_string(),
        }
    }
}

/// `map_err` adapter: `.map_err(at("tile", &id))`.
pub fn at<'a, E: Display>(stage: &'static str, item: &'a str) -> impl FnOnce(E) -> CliError + 'a {
    move |e| CliError::stage(stage, item, e)
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;
