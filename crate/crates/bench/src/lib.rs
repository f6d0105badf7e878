//! Shared fixtures for the benchmarks.

use deepgp_core::{CompositionGraph, CompositionStructure, GpFamily, RateProfile, StructurePriorSpec, StructureSpace};

pub fn single_layer(d: usize, active: Vec<usize>, beta: f64) -> CompositionStructure {
    CompositionStructure::new(CompositionGraph::single_layer(d, active).expect("valid graph"), vec![beta], (beta, beta)).expect("valid structure")
}

/// Two-layer space over `[-1,1]^2` used by the prior and sampler benches.
pub fn small_space_prior(n: u64) -> StructurePriorSpec {
    let space = StructureSpace::new(2, 1, 2, 5, (0.6, 1.2));
    StructurePriorSpec::from_space(space, RateProfile::new(GpFamily::TruncatedWavelet), n)
}
