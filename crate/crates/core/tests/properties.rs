use std::collections::BTreeSet;

use gibbslab::covering::random_covering;
use gibbslab::factor::{factor_marginals_exact, homogeneous_slack};
use gibbslab::gibbs::markov_check;
use gibbslab::glauber::heat_bath_kernel;
use gibbslab::{
    bp_solve, brute_force_gibbs, chain_from_bp, decay_table, dlr_check, joint_at_distance,
    nice_vertices, transfer_potential, tv_distance, universal_ball_sizes, BlockCode, Graph,
    Potential, Topology, TreeModel,
};
use proptest::prelude::*;

/// Connected graph on `n` vertices: a random tree plus extra edges.
fn graph_strategy(max_n: usize) -> impl Strategy<Value = Graph> {
    (2..=max_n)
        .prop_flat_map(|n| {
            (
                Just(n),
                proptest::collection::vec(any::<u32>(), n - 1),
                any::<u64>(),
            )
        })
        .prop_map(|(n, parents, extra)| {
            let mut edges = BTreeSet::new();
            for (i, p) in parents.iter().enumerate() {
                let v = i + 1;
                edges.insert(((*p as usize) % v, v));
            }
            let mut bit = 0;
            for u in 0..n {
                for v in u + 1..n {
                    if extra >> (bit % 64) & 1 == 1 && bit % 3 == 0 {
                        edges.insert((u, v));
                    }
                    bit += 1;
                }
            }
            Graph::from_edges(&edges.into_iter().collect::<Vec<_>>()).unwrap()
        })
}

fn potential_strategy(g: Graph) -> impl Strategy<Value = (Graph, Potential<f64>)> {
    let (nv, ne) = (g.num_vertices(), g.num_edges());
    (2usize..=3)
        .prop_flat_map(move |q| {
            (
                Just(q),
                proptest::collection::vec(proptest::collection::vec(-1.0f64..1.0, q), nv),
                proptest::collection::vec(proptest::collection::vec(-1.0f64..1.0, q * q), ne),
            )
        })
        .prop_map(move |(q, fields, pairs)| (g.clone(), Potential::new(q, fields, pairs).unwrap()))
}

fn model() -> impl Strategy<Value = (Graph, Potential<f64>)> {
    graph_strategy(5).prop_flat_map(potential_strategy)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn gibbs_tables_are_positive_and_normalized((g, p) in model()) {
        let nu = brute_force_gibbs(&g, &p).unwrap();
        let total: f64 = nu.probs().iter().sum();
        prop_assert!((total - 1.0).abs() <= 1e-12);
        prop_assert!(nu.probs().iter().all(|&x| x > 0.0));
    }

    #[test]
    fn gibbs_tables_satisfy_dlr_for_small_regions((g, p) in model()) {
        let nu = brute_force_gibbs(&g, &p).unwrap();
        let n = g.num_vertices();
        let mut regions: Vec<Vec<usize>> = (0..n).map(|v| vec![v]).collect();
        for u in 0..n {
            for v in u + 1..n {
                regions.push(vec![u, v]);
            }
        }
        for r in &regions {
            prop_assert!(dlr_check(&nu, &p, &g, r).unwrap() <= 1e-10);
            prop_assert!(markov_check(&nu, &g, r).unwrap() <= 1e-10);
        }
    }

    #[test]
    fn heat_bath_leaves_gibbs_invariant((g, p) in model()) {
        let nu = brute_force_gibbs(&g, &p).unwrap();
        for v in 0..g.num_vertices() {
            let pushed = heat_bath_kernel(&nu, &g, &p, v).unwrap();
            prop_assert!(tv_distance(&pushed, &nu).unwrap() <= 1e-10);
        }
    }

    #[test]
    fn trivial_cover_transfer_is_the_base((g, p) in model()) {
        let cov = random_covering(&g, 1, 0).unwrap();
        let lifted = transfer_potential(&p, &cov).unwrap();
        let a = brute_force_gibbs(&g, &p).unwrap();
        let b = brute_force_gibbs(&cov, &lifted).unwrap();
        // fold 1 keeps vertex ids
        prop_assert!(tv_distance(&a, &b).unwrap() <= 1e-12);
    }

    #[test]
    fn coverings_are_local_isomorphisms(g in graph_strategy(6), fold in 1usize..40, seed in any::<u64>()) {
        let cov = random_covering(&g, fold, seed).unwrap();
        prop_assert_eq!(cov.num_vertices(), fold * g.num_vertices());
        for x in 0..cov.num_vertices() {
            prop_assert_eq!(cov.degree(x), g.degree(cov.project(x)));
        }
        for (le, &(a, b)) in cov.edges().iter().enumerate() {
            let (u, v) = g.edges()[cov.project_edge(le)];
            let ends = (cov.project(a).min(cov.project(b)), cov.project(a).max(cov.project(b)));
            prop_assert_eq!(ends, (u, v));
        }
        prop_assert_eq!(random_covering(&g, fold, seed).unwrap(), cov);
    }

    #[test]
    fn niceness_shrinks_with_radius(g in graph_strategy(6), fold in 1usize..60, seed in any::<u64>()) {
        let cov = random_covering(&g, fold, seed).unwrap();
        let mut prev = vec![true; cov.num_vertices()];
        for r in 1..4 {
            let nice = nice_vertices(&cov, r);
            for x in 0..nice.len() {
                prop_assert!(!nice[x] || prev[x]);
            }
            prev = nice;
        }
        if g.is_tree() {
            prop_assert!(prev.iter().all(|&b| b));
        }
        // plain breadth-first ball sizes in the cover
        let r = 2;
        let universal = universal_ball_sizes(&g, r);
        let nice = nice_vertices(&cov, r);
        for x in 0..cov.num_vertices() {
            let mut dist = vec![usize::MAX; cov.num_vertices()];
            dist[x] = 0;
            let mut queue = std::collections::VecDeque::from([x]);
            let mut size = 0;
            while let Some(y) = queue.pop_front() {
                size += 1;
                if dist[y] == r {
                    continue;
                }
                for &(z, _) in cov.incident(y) {
                    if dist[z] == usize::MAX {
                        dist[z] = dist[y] + 1;
                        queue.push_back(z);
                    }
                }
            }
            let full = universal[cov.project(x)];
            prop_assert!(size <= full);
            prop_assert_eq!(size == full, nice[x]);
        }
    }

    #[test]
    fn tree_chains_are_stationary_and_lose_information(beta in 0.0f64..0.5, field in -0.5f64..0.5, d in 3usize..5) {
        let model = TreeModel::ising(d, beta, field).unwrap();
        let chain = chain_from_bp(&bp_solve(&model, 1e-13, 4, 2).unwrap(), &model).unwrap();
        prop_assert!(chain.stationarity_residual() <= 1e-10);
        prop_assert!(chain.reversibility_residual() <= 1e-10);
        let pi = chain.root_marginal();
        for k in 1..6 {
            let xi = joint_at_distance(&chain, k).unwrap();
            for (i, &p) in xi.marginal(&[0]).probs().iter().enumerate() {
                prop_assert!((p - pi[i]).abs() <= 1e-12);
            }
            for (i, &p) in xi.marginal(&[1]).probs().iter().enumerate() {
                prop_assert!((p - pi[i]).abs() <= 1e-12);
            }
        }
        let rows = decay_table(&chain, 8).unwrap();
        for w in rows.windows(2) {
            prop_assert!(w[1].mutual_info <= w[0].mutual_info + 1e-15);
        }
    }

    // random invariant rules: hash the canonical pattern with a seed
    #[test]
    fn factors_of_unique_measures_have_nonnegative_slack(
        beta in 0.0f64..0.5,
        rule_seed in any::<u64>(),
        q_out in 2usize..4,
        radius in 0usize..2,
    ) {
        let model = TreeModel::ising(3, beta, 0.0).unwrap();
        let bp = bp_solve(&model, 1e-13, 4, 3).unwrap();
        prop_assume!(bp.unique);
        let chain = chain_from_bp(&bp, &model).unwrap();
        let code = BlockCode::tabulate(3, radius, 2, q_out, 0, |p| {
            let h = p
                .canonical()
                .bytes()
                .fold(rule_seed, |acc, b| (acc ^ b as u64).wrapping_mul(0x100_0000_01B3));
            (h % q_out as u64) as usize
        })
        .unwrap();
        let (mv, me) = factor_marginals_exact(&chain, &code).unwrap();
        for g in [Graph::complete(4).unwrap(), Graph::petersen()] {
            prop_assert!(homogeneous_slack(&g, &mv, &me, 1e-9).unwrap() >= -1e-9);
        }
    }
}
