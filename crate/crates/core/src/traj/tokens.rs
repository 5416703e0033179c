use super::Trajectory;

/// Per-image token cost of a named vision-language model.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TokenModel {
    pub name: &'static str,
    pub tokens_per_image: u64,
    /// Longest context the model was trained for, in tokens.
    pub max_context: u64,
}

pub const TOKEN_MODELS: [TokenModel; 3] = [
    TokenModel {
        name: "deepseek-vl",
        tokens_per_image: 576,
        max_context: 512 * 1024,
    },
    TokenModel {
        name: "qwen2.5-vl",
        tokens_per_image: 121,
        max_context: 128 * 1024,
    },
    TokenModel {
        name: "gemini-2.0-flash",
        tokens_per_image: 258,
        max_context: 256 * 1024,
    },
];

pub fn token_model(name: &str) -> Option<TokenModel> {
    TOKEN_MODELS.iter().copied().find(|m| m.name == name)
}

/// Whitespace-token count of a goal sentence.
pub fn goal_tokens(text: &str) -> u64 {
    text.split_whitespace().count() as u64
}

/// Every recorded step costs one image plus a fixed text overhead; goal
/// sentences add their whitespace tokens.
pub fn token_length(traj: &Trajectory, tokens_per_image: u64, text_tokens_per_step: u64) -> u64 {
    let steps = traj.steps.len() as u64 * (tokens_per_image + text_tokens_per_step);
    steps + traj.goal_texts().iter().map(|t| goal_tokens(t)).sum::<u64>()
}
