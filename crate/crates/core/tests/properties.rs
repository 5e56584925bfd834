use approx::{assert_relative_eq, relative_eq};
use gwcrp::{
    cpo_lpml, dahl_partition, exposure, graph_distances, inverse_piecewise_survival, piecewise_survival, rand_index,
    weight_matrix, HazardPartition, Kernel, SpatialGraph,
};
use proptest::prelude::*;

fn partition_strategy() -> impl Strategy<Value = HazardPartition> {
    prop::collection::vec(0.05f64..20.0, 0..5).prop_map(|mut c| {
        c.sort_by(f64::total_cmp);
        c.dedup_by(|a, b| (*a - *b).abs() < 1e-3);
        HazardPartition::new(c).unwrap()
    })
}

fn adjacency_strategy() -> impl Strategy<Value = Vec<Vec<bool>>> {
    (1usize..12).prop_flat_map(|n| {
        prop::collection::vec(prop::bool::weighted(0.25), n * (n - 1) / 2).prop_map(move |bits| {
            let mut adj = vec![vec![false; n]; n];
            let mut k = 0;
            for i in 0..n {
                for j in i + 1..n {
                    adj[i][j] = bits[k];
                    adj[j][i] = bits[k];
                    k += 1;
                }
            }
            adj
        })
    })
}

fn floyd_warshall(adj: &[Vec<bool>]) -> Vec<Vec<Option<u32>>> {
    let n = adj.len();
    let mut d: Vec<Vec<Option<u32>>> = (0..n)
        .map(|i| (0..n).map(|j| if i == j { Some(0) } else if adj[i][j] { Some(1) } else { None }).collect())
        .collect();
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                if let (Some(a), Some(b)) = (d[i][k], d[k][j]) {
                    if d[i][j].is_none_or(|c| a + b < c) {
                        d[i][j] = Some(a + b);
                    }
                }
            }
        }
    }
    d
}

fn labels_strategy(n: usize, k: usize) -> impl Strategy<Value = Vec<usize>> {
    prop::collection::vec(0..k, n)
}

/// Rename label values through `perm`.
fn permute_labels(labels: &[usize], perm: &[usize]) -> Vec<usize> {
    labels.iter().map(|&z| perm[z]).collect()
}

proptest! {
    #[test]
    fn exposures_sum_to_follow_up(partition in partition_strategy(), t in 0.0f64..40.0) {
        let total: f64 = (0..partition.pieces()).map(|j| exposure(t, j, &partition).unwrap()).sum();
        prop_assert!(relative_eq!(total, t, epsilon = 1e-12, max_relative = 1e-12));
        for j in 0..partition.pieces() {
            let e = exposure(t, j, &partition).unwrap();
            prop_assert!(e >= 0.0 && e <= partition.upper(j) - partition.lower(j) + 1e-12);
        }
    }

    #[test]
    fn survival_inverse_round_trips(
        partition in partition_strategy(),
        lambda_seed in prop::collection::vec(0.01f64..2.0, 6),
        linpred in -2.0f64..2.0,
        u in 0.001f64..0.999,
    ) {
        let lambda = &lambda_seed[..partition.pieces()];
        let t = inverse_piecewise_survival(u, lambda, linpred, &partition);
        prop_assert!(t > 0.0);
        assert_relative_eq!(piecewise_survival(t, lambda, linpred, &partition), u, max_relative = 1e-9);
    }

    #[test]
    fn bfs_matches_floyd_warshall(adj in adjacency_strategy()) {
        prop_assert_eq!(graph_distances(&adj).unwrap(), floyd_warshall(&adj));
    }

    #[test]
    fn lattice_distance_is_manhattan(rows in 1usize..6, cols in 1usize..6) {
        let g = SpatialGraph::lattice(rows, cols);
        for a in 0..rows * cols {
            for b in 0..rows * cols {
                let want = (a / cols).abs_diff(b / cols) + (a % cols).abs_diff(b % cols);
                prop_assert_eq!(g.distances()[a][b], Some(want as u32));
            }
        }
    }

    #[test]
    fn weights_decrease_with_distance_and_decay(adj in adjacency_strategy(), h in 0.0f64..5.0, dh in 0.0f64..3.0) {
        let d = graph_distances(&adj).unwrap();
        let n = adj.len();
        for kernel in [Kernel::Exp, Kernel::SqExp] {
            let w = weight_matrix(&d, h, kernel).unwrap();
            let w2 = weight_matrix(&d, h + dh, kernel).unwrap();
            for i in 0..n {
                for j in 0..n {
                    prop_assert_eq!(w.get(i, j), w.get(j, i));
                    prop_assert!(w2.get(i, j) <= w.get(i, j));
                    match d[i][j] {
                        None => prop_assert_eq!(w.get(i, j), 0.0),
                        Some(x) if x <= 1 => prop_assert_eq!(w.get(i, j), 1.0),
                        Some(x) => {
                            if h == 0.0 {
                                prop_assert_eq!(w.get(i, j), 1.0);
                            }
                            for k in 0..n {
                                if let Some(y) = d[i][k] {
                                    if y >= x {
                                        prop_assert!(w.get(i, k) <= w.get(i, j));
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn rand_index_is_symmetric_and_label_free(
        a in labels_strategy(9, 4),
        b in labels_strategy(9, 4),
        perm in Just(vec![0usize, 1, 2, 3]).prop_shuffle(),
    ) {
        let ab = rand_index(&a, &b).unwrap();
        prop_assert!((0.0..=1.0).contains(&ab));
        prop_assert_eq!(ab, rand_index(&b, &a).unwrap());
        prop_assert_eq!(ab, rand_index(&permute_labels(&a, &perm), &b).unwrap());
        prop_assert_eq!(rand_index(&a, &permute_labels(&a, &perm)).unwrap(), 1.0);
    }

    #[test]
    fn dahl_ignores_label_names(
        draws in prop::collection::vec(labels_strategy(7, 3), 1..30),
        perms in prop::collection::vec(Just(vec![0usize, 1, 2]).prop_shuffle(), 30),
    ) {
        let relabeled: Vec<Vec<usize>> = draws.iter().zip(&perms).map(|(d, p)| permute_labels(d, p)).collect();
        let (b1, _) = dahl_partition(&draws).unwrap();
        let (b2, _) = dahl_partition(&relabeled).unwrap();
        prop_assert_eq!(b1, b2);
    }

    #[test]
    fn lpml_is_bracketed_by_extremes(ll in prop::collection::vec(prop::collection::vec(-50.0f64..5.0, 5), 2..40)) {
        let cpo = cpo_lpml(&ll).unwrap();
        for i in 0..5 {
            let lo = ll.iter().map(|r| r[i]).fold(f64::INFINITY, f64::min);
            let hi = ll.iter().map(|r| r[i]).fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(cpo.log_cpo[i] >= lo - 1e-9 && cpo.log_cpo[i] <= hi + 1e-9);
        }
        assert_relative_eq!(cpo.lpml, cpo.log_cpo.iter().sum::<f64>(), max_relative = 1e-12);
    }
}
