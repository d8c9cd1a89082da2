//! Capacity calculators and an exact mutual-information oracle over
//! enumerable toy worlds.

pub mod calculators;
pub mod toyworld;

pub use calculators::{
    acc_count_upper, alpha_scaling, binary_entropy, capacity_limit_facts, fact_entropy, per_token_entropy,
    AlphaScaling, Regime, TheoryInputs, DEFAULT_BITS_PER_PARAM,
};
pub use toyworld::{
    best_acc_count_with_models, mi_bruteforce, optimal_acc_count, random_toy_world, verify_random_worlds, Learner, MiReport,
    ToyWorld, WorldCheck, SUPPORT_LIMIT,
};
