//! Synthetic fact worlds and corpora.

pub mod annotated;
pub mod facts;
pub mod io;
pub mod powerlaw;
pub mod vocab;

pub use annotated::{
    generate_annotated_corpus, generate_probe_corpus, parse_spans, AnnotatedRecord, CorpusSpec, FactSpan,
};
pub use facts::{
    difficulty_grid, generate_fact_table, generate_heterogeneous_mixture, sample_record, Fact,
    FactTable, FactTemplate,
};
pub use powerlaw::{power_law_weights, PowerLawDist};
pub use vocab::Vocab;

pub fn build_vocab(annotated: bool) -> Vocab {
    Vocab::new(annotated)
}
