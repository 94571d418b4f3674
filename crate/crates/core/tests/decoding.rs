mod common;

use common::{brute_force_mst_weight, keys_predicted_distances, fixture, tree_weight, KEYS};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use synprobe::metrics::{extract_mst, score_uuas, uuas_gold_edges};

#[test]
fn mst_weight_equals_exhaustive_minimum() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for trial in 0..200 {
        let n = rng.random_range(1..=7);
        let mut d = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in i + 1..n {
                // a coarse grid makes ties common
                let w = if trial % 2 == 0 { rng.random_range(0..4) as f64 } else { rng.random_range(0.0..10.0) };
                d[(i, j)] = w;
                d[(j, i)] = w;
            }
        }
        let mst = extract_mst(&d, &vec![false; n]);
        assert_eq!(mst.len(), n.saturating_sub(1));
        let got = tree_weight(&d, &mst);
        let want = brute_force_mst_weight(&d);
        assert!((got - want).abs() < 1e-9, "trial {trial}: {got} vs {want}");
    }
}

#[test]
fn toy_tree_recovers_four_of_six_edges() {
    let parse = fixture(KEYS);
    assert_eq!(uuas_gold_edges(&parse).len(), 6);
    let mst = extract_mst(&keys_predicted_distances(), &parse.punct_mask());
    assert_eq!(score_uuas(&mst, &parse), 4.0 / 6.0);
}
