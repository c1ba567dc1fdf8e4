use std::sync::OnceLock;

use specgraph::eval::simulate_csd;
use specgraph::graph::{block_scores, extract_kpcg, shd, Normalization, DEFAULT_THRESHOLD};
use specgraph::spectral::naive_inverse;
use specgraph::synth::{ground_truth_kpcg, reference_partition, reference_structure, Band, BandStructure, SemEdge};
use specgraph::CsdTensor;

const T: usize = 1024;

/// One edge 0 -> 1 confined to bins 64..=127, which is block 1 of the
/// 8-block partition of 513 bins.
fn single_edge() -> BandStructure {
    BandStructure {
        n: 4,
        bands: vec![Band { start_k: 64, end_k: 127, edges: vec![SemEdge { from: 0, to: 1, coef: 0.8, lag: 1 }] }],
    }
}

fn single_edge_csd() -> &'static CsdTensor {
    static CSD: OnceLock<CsdTensor> = OnceLock::new();
    CSD.get_or_init(|| simulate_csd(&single_edge(), T, 7, 1000, 16).unwrap())
}

#[test]
fn naive_recovers_the_reference_truth_with_many_replicates() {
    let s = reference_structure();
    let part = reference_partition();
    let truth = ground_truth_kpcg(&s, &part).unwrap();
    let csd = simulate_csd(&s, T, 2024, 1000, 16).unwrap();
    let inv = naive_inverse(&csd).unwrap();
    let g = extract_kpcg(&inv, &part, DEFAULT_THRESHOLD, Normalization::PerBlock).unwrap();
    assert_eq!(shd(&g.graph, &truth).unwrap(), 0, "{:?}", g.graph.cardinalities());
}

#[test]
fn single_band_edge_lands_in_its_layer() {
    let part = reference_partition();
    assert_eq!(part.block(1), 64..128);
    let inv = naive_inverse(single_edge_csd()).unwrap();

    let g = extract_kpcg(&inv, &part, DEFAULT_THRESHOLD, Normalization::PerBlock).unwrap();
    assert!(g.graph.edge_set(1).contains(&(1, 0)));

    // on a common scale the noise pairs and the far blocks stay below the threshold
    let g = extract_kpcg(&inv, &part, DEFAULT_THRESHOLD, Normalization::Global).unwrap();
    assert_eq!(g.graph.edge_set(1).into_iter().collect::<Vec<_>>(), vec![(1, 0)]);
    for m in 3..8 {
        assert!(g.graph.edge_set(m).is_empty(), "layer {m}: {:?}", g.graph.edge_set(m));
    }
}

#[test]
fn leakage_outside_the_band_is_small() {
    let part = reference_partition();
    let inv = naive_inverse(single_edge_csd()).unwrap();
    let scores = block_scores(&inv, &part).unwrap();
    // pair (1, 0) is the first strictly-lower pair
    let in_band = scores[1][0];
    for m in 3..8 {
        assert!(scores[m][0] < 0.1 * in_band, "block {m}: {} vs {in_band}", scores[m][0]);
    }
}
