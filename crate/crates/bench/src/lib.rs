//! Fixtures shared by the benchmarks.

use absa_core::corpus::{synth_generate, Label, SynthSpec};
use absa_core::textprep::Normalizer;

/// Normalised token lists and aspect ids of a synthetic corpus.
pub fn corpus(n: usize, seed: u64) -> (Vec<Vec<String>>, Vec<usize>) {
    let ds = synth_generate(&SynthSpec::new(n, seed, 1.0)).expect("valid synth spec");
    let nz = Normalizer::default();
    ds.records
        .iter()
        .map(|c| (nz.tokens(&c.text), c.aspect.id()))
        .unzip()
}
