//! Randomized invariants, checked over generated networks and vectors.

use dqn::graph::{generate_connected_geometric, is_connected, metropolis_weights};
use dqn::penalty::BlockVector;
use dqn::trace::relative_error;
use nalgebra::DVector;
use proptest::prelude::*;

proptest! {
    /// Metropolis weights are symmetric, doubly stochastic, have strictly
    /// positive diagonal, and their extreme eigenvalues sit in (-1, 1].
    #[test]
    fn metropolis_weights_are_valid_mixing_matrices(n in 2usize..40, seed in 0u64..500) {
        let topo = generate_connected_geometric(n, seed).unwrap();
        prop_assert!(is_connected(&topo));
        let w = metropolis_weights(&topo).unwrap();

        let dense = w.to_dense();
        for i in 0..n {
            prop_assert!(w.diag[i] > 0.0, "w_{i}{i} = {}", w.diag[i]);
            let row: f64 = dense.row(i).iter().sum();
            prop_assert!((row - 1.0).abs() < 1e-12, "row {i} sums to {row}");
            for j in 0..n {
                prop_assert!((dense[(i, j)] - dense[(j, i)]).abs() < 1e-15);
                prop_assert!(dense[(i, j)] >= 0.0);
            }
        }
        prop_assert!((w.lambda_1 - 1.0).abs() < 1e-9, "lambda_1 = {}", w.lambda_1);
        prop_assert!(w.lambda_n > -1.0 && w.lambda_n <= 1.0 + 1e-12);
        prop_assert!(w.w_min <= w.w_max);
    }

    /// The error metric is invariant under scaling both the iterate and the
    /// reference, and exactly zero at consensus on the reference.
    #[test]
    fn relative_error_scaling_and_consensus(
        n in 1usize..12,
        p in 1usize..5,
        c in -100.0f64..100.0,
        entries in proptest::collection::vec(-10.0f64..10.0, 1..60),
    ) {
        prop_assume!(c.abs() > 1e-6);
        let y: DVector<f64> = DVector::from_fn(p, |i, _| 1.0 + entries[i % entries.len()].abs());
        let x = BlockVector::from_blocks(
            (0..n)
                .map(|i| DVector::from_fn(p, |a, _| entries[(i * p + a) % entries.len()]))
                .collect(),
        );

        let e = relative_error(&x, &y).unwrap();
        let scaled = relative_error(&x.scale(c), &(&y * c)).unwrap();
        prop_assert!((e - scaled.abs()).abs() <= 1e-9 * e.max(1.0));

        let consensus = BlockVector::consensus(n, &y);
        prop_assert_eq!(relative_error(&consensus, &y).unwrap(), 0.0);
    }
}
