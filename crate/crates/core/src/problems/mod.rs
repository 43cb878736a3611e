//! Instance families and their encodings as structured models.

mod circle;
mod random;
mod shared;

pub use circle::{encode_circle_cutting, CircleCuttingInstance, InstanceCheck, Rectangle};
pub use random::{gen_branching_adversary, gen_random_integer, RandomIntSpec};
pub use shared::{encode_shared_design, Scenario, SharedCheck, SharedDesignInstance, Stage};
