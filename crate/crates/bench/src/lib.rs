//! Shared fixtures for the criterion benches.

use factlab::model::{init_model, BlockNorm, ModelConfig, ModelState};
use factlab::rng::seeded;
use factlab::synthdata::{generate_fact_table, sample_record, FactTable, FactTemplate};
use rand::Rng;

/// One-layer model sized like the desk recipe.
pub fn desk_model() -> ModelState {
    let cfg = ModelConfig {
        layers: 1,
        heads: 2,
        hidden: 32,
        context: 32,
        vocab: 39,
        precision_bits: 32,
        block_norm: BlockNorm::Pre,
    };
    init_model(cfg, 0).expect("valid model")
}

pub fn table(n: usize) -> FactTable {
    generate_fact_table(FactTemplate::default(), n, 1.0, 0).expect("valid table")
}

pub fn batch(table: &FactTable, b: usize) -> Vec<Vec<u32>> {
    let dist = table.distribution();
    let mut rng = seeded(1);
    (0..b).map(|_| sample_record(&dist, table, &mut rng).1).collect()
}

pub fn losses(n: usize) -> Vec<f64> {
    let mut rng = seeded(2);
    (0..n).map(|_| rng.gen::<f64>() * 60.0).collect()
}
