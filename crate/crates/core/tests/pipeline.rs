use gibbslab::experiments::{
    run_concentration, run_count_colorings, run_decay, run_edge_vertex, ExperimentConfig,
};
use gibbslab::{
    apply_block_code, bp_solve, chain_from_bp, decay_table, empirical_dists,
    factor_marginals_exact, glauber_sample, random_covering, transfer_potential, tv_distance,
    BlockCode, Graph, Potential, Topology, TreeModel,
};

// A Glauber + factor sample on a large covering has empirical edge tables
// close to the exact factor marginals on every base edge.
#[test]
fn sampled_colorings_realize_the_factor_marginals() {
    let beta = 0.4;
    let model = TreeModel::ising(3, beta, 0.0).unwrap();
    let chain = chain_from_bp(&bp_solve(&model, 1e-12, 4, 0).unwrap(), &model).unwrap();
    let g = Graph::complete(4).unwrap();
    let cov = random_covering(&g, 4000, 21).unwrap();
    let lifted = transfer_potential(&Potential::ising(&g, beta, 0.0).unwrap(), &cov).unwrap();
    let coloring = glauber_sample(&cov, &lifted, 60, 22).unwrap();
    for code in [BlockCode::identity(2), BlockCode::majority(2)] {
        let (_, mu_e) = factor_marginals_exact(&chain, &code).unwrap();
        let out = apply_block_code(&cov, &coloring, &code).unwrap();
        let emp = empirical_dists::<f64>(&cov, &out, 2).unwrap();
        for (e, &(u, v)) in g.edges().iter().enumerate() {
            let target = mu_e.clone().with_domain(vec![u, v]).unwrap();
            let tv = tv_distance(&emp.edge[e], &target).unwrap();
            assert!(tv < 0.05, "edge {e}: tv {tv}");
        }
    }
}

#[test]
fn config_files_reproduce_byte_for_byte() {
    let dir = std::env::temp_dir().join(format!("gibbslab-pipeline-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("run.conf");
    std::fs::write(
        &path,
        "# small run\ngraph = k4\nbeta = 0.3\nn = 30, 60\ntrials = 6\nsweeps = 4\nseed = 5\n",
    )
    .unwrap();
    let cfg = ExperimentConfig::from_file(&path).unwrap();
    let first = run_concentration(&cfg).unwrap().csv;
    let second = run_concentration(&ExperimentConfig::from_file(&path).unwrap())
        .unwrap()
        .csv;
    assert_eq!(first, second);
    let hash = cfg.config_hash();
    for line in first.lines().skip(1) {
        assert!(line.ends_with(&format!(",5,{hash}")));
    }
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn every_runner_produces_rows() {
    let decay =
        run_decay(&ExperimentConfig::from_kv("model = potts\nq = 3\nbeta = 0.2\n").unwrap())
            .unwrap();
    assert_eq!(decay.csv.lines().count(), 9);
    assert!(!decay.violation);
    let ev = run_edge_vertex(
        &ExperimentConfig::from_kv("graph = p4\nbeta = 0.5\ncode = majority\n").unwrap(),
    )
    .unwrap();
    assert!(ev.csv.lines().nth(1).unwrap().contains(",exact,"));
    let counts =
        run_count_colorings(&ExperimentConfig::from_kv("graph = k2\nn = 2, 3\neps = 1\n").unwrap())
            .unwrap();
    let rows: Vec<&str> = counts.csv.lines().skip(1).collect();
    assert!(rows[0].starts_with("2,16,"));
    assert!(rows[1].starts_with("3,64,"));
}

#[test]
fn single_precision_tree_pipeline_tracks_double() {
    let m64 = TreeModel::<f64>::ising(3, 0.3, 0.1).unwrap();
    let m32 = TreeModel::<f32>::ising(3, 0.3, 0.1).unwrap();
    let c64 = chain_from_bp(&bp_solve(&m64, 1e-12, 4, 0).unwrap(), &m64).unwrap();
    let c32 = chain_from_bp(&bp_solve(&m32, 1e-6, 4, 0).unwrap(), &m32).unwrap();
    let r64 = decay_table(&c64, 4).unwrap();
    let r32 = decay_table(&c32, 4).unwrap();
    for (a, b) in r64.iter().zip(&r32) {
        assert!((a.ratio - b.ratio as f64).abs() < 1e-4);
        assert_eq!(a.bound, b.bound);
    }
}
