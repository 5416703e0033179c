//! Long-context kit.
//!
//! Two independent pieces live here:
//!
//! * [`rope`]: rotary position embedding with the usual context-extension
//!   remappings (linear position interpolation, dynamic NTK base scaling,
//!   YaRN ramp blending with attention temperature, per-dimension LongRoPE
//!   factors) plus a reach/feasibility estimate for a token budget.
//! * [`ring`]: a single-process simulation of ring attention. Each simulated
//!   worker owns one query shard, key/value shards travel one hop per round
//!   around a directed cycle and every worker folds what it receives into an
//!   online-softmax accumulator. The result matches dense attention.
//!
//! All arithmetic is carried out in `f64`.

pub mod matrix;
pub mod ring;
pub mod rope;

pub use matrix::Matrix;
pub use ring::{
    dense_attention, ring_attention, Direction, ExecMode, Message, RingError, RingOutput, RingPlan,
    RingTrace,
};
pub use rope::{
    simulate_context_budget, ContextBudget, RopeConfig, RopeError, RopeFrequencies, ScalingMethod,
};
