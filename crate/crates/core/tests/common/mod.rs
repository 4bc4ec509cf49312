use wz_core::SourceModel;

/// Doubly symmetric binary source with crossover 0.25 and Hamming distortion.
pub fn dsbs() -> SourceModel {
    wz_core::load_source(concat!(env!("CARGO_MANIFEST_DIR"), "/tests/data/dsbs025.json")).unwrap()
}
