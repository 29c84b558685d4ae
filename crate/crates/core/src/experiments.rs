//! Experiment drivers shared by the command-line tool and the acceptance
//! suite. Each runner returns CSV text plus a flag telling whether any
//! checked inequality failed; every row ends with the seed and a hash of
//! the configuration that produced it.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use rand::Rng;
use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::covering::{niceness_audit, random_covering, seeded_rng, NFoldCovering};
use crate::dist::{check_cap, DistTable, DEFAULT_ENUMERATION_CAP};
use crate::error::{Error, Result};
use crate::factor::{
    apply_block_code, edge_vertex_slack, empirical_dists, factor_marginals_exact,
    homogeneous_slack, BlockCode, Pattern,
};
use crate::gibbs::{brute_force_gibbs_with_cap, transfer_potential, Potential};
use crate::glauber::glauber_sample;
use crate::graph::{Graph, Topology};
use crate::info::{DecorrelationChain, Observable};
use crate::tree::{bp_solve, chain_from_bp, decay_table, joint_at_distance, TreeChain, TreeModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    Ising,
    Potts,
}

impl std::str::FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ising" => Ok(ModelKind::Ising),
            "potts" => Ok(ModelKind::Potts),
            other => Err(Error::invalid(format!("unknown model `{other}`"))),
        }
    }
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ModelKind::Ising => "ising",
            ModelKind::Potts => "potts",
        })
    }
}

/// How `edge-vertex` obtains marginals.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SlackMethod {
    /// Exact where the base allows it, Monte Carlo otherwise.
    Auto,
    Exact,
    MonteCarlo,
    /// Both, plus an agreement column.
    Both,
}

impl std::str::FromStr for SlackMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "auto" => Ok(SlackMethod::Auto),
            "exact" => Ok(SlackMethod::Exact),
            "mc" => Ok(SlackMethod::MonteCarlo),
            "both" => Ok(SlackMethod::Both),
            other => Err(Error::invalid(format!("unknown method `{other}`"))),
        }
    }
}

impl std::fmt::Display for SlackMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SlackMethod::Auto => "auto",
            SlackMethod::Exact => "exact",
            SlackMethod::MonteCarlo => "mc",
            SlackMethod::Both => "both",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub model: ModelKind,
    pub beta: f64,
    pub field: f64,
    pub q: usize,
    /// Tree degree for `decay`.
    pub d: usize,
    /// `k<n>`, `c<n>`, `p<n>`, `petersen`, or an edge-list file.
    pub graph: String,
    pub n: Vec<usize>,
    pub r: usize,
    pub eps: f64,
    /// `concentration` marks a size `nice_ok` when the mean nice fraction
    /// exceeds `1 - delta`.
    pub delta: f64,
    pub seed: u64,
    pub trials: usize,
    pub sweeps: usize,
    pub k_max: usize,
    /// Built-in code name or a rule-table file.
    pub code: String,
    pub method: SlackMethod,
    /// Target marginals file for `count-colorings`; uniform when absent.
    pub targets: Option<String>,
    /// Base edge and cell `(b_u, b_v)` tracked by `concentration`.
    pub edge: usize,
    pub cell: (usize, usize),
    pub tol: f64,
    pub n_inits: usize,
    pub cap: u128,
    pub out: Option<String>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            model: ModelKind::Ising,
            beta: 0.4,
            field: 0.0,
            q: 2,
            d: 3,
            graph: "k4".into(),
            n: vec![100],
            r: 2,
            eps: 0.1,
            delta: 0.1,
            seed: 0,
            trials: 20,
            sweeps: 100,
            k_max: 8,
            code: "identity".into(),
            method: SlackMethod::Auto,
            targets: None,
            edge: 0,
            cell: (0, 0),
            tol: 1e-12,
            n_inits: 8,
            cap: DEFAULT_ENUMERATION_CAP,
            out: None,
        }
    }
}

fn parse_value<V: std::str::FromStr>(key: &str, value: &str) -> Result<V>
where
    V::Err: std::fmt::Display,
{
    value
        .parse()
        .map_err(|e| Error::invalid(format!("bad value `{value}` for `{key}`: {e}")))
}

impl ExperimentConfig {
    /// Parses `key = value` lines over the defaults.
    pub fn from_kv(text: &str) -> Result<Self> {
        let mut cfg = ExperimentConfig::default();
        for (i, raw) in text.lines().enumerate() {
            let line = crate::graph::strip_comment(raw);
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::parse(i + 1, "expected `key = value`"))?;
            cfg.set(k.trim(), v.trim())
                .map_err(|e| Error::parse(i + 1, e.to_string()))?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        ExperimentConfig::from_kv(&std::fs::read_to_string(path)?)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "model" => self.model = value.parse()?,
            "beta" => self.beta = parse_value(key, value)?,
            "field" => self.field = parse_value(key, value)?,
            "q" => self.q = parse_value(key, value)?,
            "d" => self.d = parse_value(key, value)?,
            "graph" => self.graph = value.to_string(),
            "n" => {
                self.n = value
                    .split(',')
                    .map(|s| parse_value(key, s.trim()))
                    .collect::<Result<Vec<usize>>>()?
            }
            "r" => self.r = parse_value(key, value)?,
            "eps" => self.eps = parse_value(key, value)?,
            "delta" => self.delta = parse_value(key, value)?,
            "seed" => self.seed = parse_value(key, value)?,
            "trials" => self.trials = parse_value(key, value)?,
            "sweeps" => self.sweeps = parse_value(key, value)?,
            "k_max" => self.k_max = parse_value(key, value)?,
            "code" => self.code = value.to_string(),
            "method" => self.method = value.parse()?,
            "targets" => self.targets = Some(value.to_string()),
            "edge" => self.edge = parse_value(key, value)?,
            "cell" => {
                let (a, b) = value
                    .split_once(',')
                    .ok_or_else(|| Error::invalid("cell is `b_u,b_v`"))?;
                self.cell = (parse_value(key, a.trim())?, parse_value(key, b.trim())?);
            }
            "tol" => self.tol = parse_value(key, value)?,
            "n_inits" => self.n_inits = parse_value(key, value)?,
            "cap" => self.cap = parse_value(key, value)?,
            "out" => self.out = Some(value.to_string()),
            other => return Err(Error::invalid(format!("unknown config key `{other}`"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if !self.beta.is_finite() || !self.field.is_finite() {
            return Err(Error::invalid("beta and field must be finite"));
        }
        if self.n.is_empty() || self.n.contains(&0) {
            return Err(Error::invalid("every N must be at least 1"));
        }
        if !(self.eps > 0.0 && self.eps <= 1.0) {
            return Err(Error::invalid("eps must lie in (0, 1]"));
        }
        if self.model == ModelKind::Potts && self.q < 2 {
            return Err(Error::invalid("potts needs q ≥ 2"));
        }
        if self.model == ModelKind::Potts && self.field != 0.0 {
            return Err(Error::invalid("field is only supported for ising"));
        }
        if self.trials == 0 || self.sweeps == 0 {
            return Err(Error::invalid("trials and sweeps must be positive"));
        }
        Ok(())
    }

    /// Canonical `key = value` listing; `out` is left out since it does not
    /// change results.
    pub fn to_kv(&self) -> String {
        let mut m = BTreeMap::new();
        m.insert("model", self.model.to_string());
        m.insert("beta", format!("{:?}", self.beta));
        m.insert("field", format!("{:?}", self.field));
        m.insert("q", self.q.to_string());
        m.insert("d", self.d.to_string());
        m.insert("graph", self.graph.clone());
        m.insert(
            "n",
            self.n
                .iter()
                .map(|n| n.to_string())
                .collect::<Vec<_>>()
                .join(","),
        );
        m.insert("r", self.r.to_string());
        m.insert("eps", format!("{:?}", self.eps));
        m.insert("delta", format!("{:?}", self.delta));
        m.insert("seed", self.seed.to_string());
        m.insert("trials", self.trials.to_string());
        m.insert("sweeps", self.sweeps.to_string());
        m.insert("k_max", self.k_max.to_string());
        m.insert("code", self.code.clone());
        m.insert("method", self.method.to_string());
        if let Some(t) = &self.targets {
            m.insert("targets", t.clone());
        }
        m.insert("edge", self.edge.to_string());
        m.insert("cell", format!("{},{}", self.cell.0, self.cell.1));
        m.insert("tol", format!("{:?}", self.tol));
        m.insert("n_inits", self.n_inits.to_string());
        m.insert("cap", self.cap.to_string());
        m.into_iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    /// First 16 hex digits of the SHA-256 of [`ExperimentConfig::to_kv`].
    pub fn config_hash(&self) -> String {
        let digest = Sha256::digest(self.to_kv().as_bytes());
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn alphabet(&self) -> usize {
        match self.model {
            ModelKind::Ising => 2,
            ModelKind::Potts => self.q,
        }
    }

    pub fn potential<G: Topology + ?Sized>(&self, g: &G) -> Result<Potential<f64>> {
        match self.model {
            ModelKind::Ising => Potential::ising(g, self.beta, self.field),
            ModelKind::Potts => Potential::potts(g, self.q, self.beta),
        }
    }

    pub fn tree_model(&self, degree: usize) -> Result<TreeModel<f64>> {
        match self.model {
            ModelKind::Ising => TreeModel::ising(degree, self.beta, self.field),
            ModelKind::Potts => TreeModel::potts(degree, self.q, self.beta),
        }
    }

    /// Spin for Ising, indicator of symbol 0 for Potts.
    pub fn observable(&self) -> Observable<f64> {
        match self.model {
            ModelKind::Ising => Observable::spin(),
            ModelKind::Potts => Observable::indicator(self.q, 0),
        }
    }

    pub fn load_graph(&self) -> Result<Graph> {
        load_graph(&self.graph)
    }

    pub fn load_code(&self) -> Result<BlockCode> {
        match self.code.as_str() {
            "identity" | "constant" | "majority" => BlockCode::builtin(&self.code, self.alphabet()),
            path => BlockCode::parse(&std::fs::read_to_string(path)?),
        }
    }
}

/// `k<n>` (complete), `c<n>` (cycle), `p<n>` (path), `petersen`, or a path
/// to an edge-list file.
pub fn load_graph(spec: &str) -> Result<Graph> {
    let named =
        |prefix: char| -> Option<usize> { spec.strip_prefix(prefix).and_then(|s| s.parse().ok()) };
    if spec == "petersen" {
        return Ok(Graph::petersen());
    }
    if let Some(n) = named('k') {
        return Graph::complete(n);
    }
    if let Some(n) = named('c') {
        return Graph::cycle(n);
    }
    if let Some(n) = named('p') {
        return Graph::path(n);
    }
    Graph::parse_edge_list(&std::fs::read_to_string(spec)?)
}

/// Independent seed for trial `t` at size `n`, mixed with splitmix64.
pub fn trial_seed(seed: u64, n: usize, t: usize) -> u64 {
    let mut z = seed
        ^ (n as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ (t as u64).wrapping_mul(0xD1B5_4A32_D192_ED03);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentOutput {
    pub csv: String,
    /// Some checked inequality failed.
    pub violation: bool,
}

fn with_provenance(header: &str, rows: &[String], cfg: &ExperimentConfig) -> String {
    let hash = cfg.config_hash();
    let mut out = format!("{header},seed,config_hash\n");
    for r in rows {
        writeln!(out, "{r},{},{hash}", cfg.seed).unwrap();
    }
    out
}

fn solved_chain(cfg: &ExperimentConfig, degree: usize) -> Result<(TreeChain<f64>, bool)> {
    let model = cfg.tree_model(degree)?;
    let bp = bp_solve(&model, cfg.tol, cfg.n_inits, cfg.seed)?;
    Ok((chain_from_bp(&bp, &model)?, bp.unique))
}

/// Mutual-information decay along a `d`-regular tree, with the
/// decorrelation chain for the configured observable.
pub fn run_decay(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    let (chain, unique) = solved_chain(cfg, cfg.d)?;
    let f = cfg.observable();
    let mut rows = Vec::new();
    let mut violation = false;
    for row in decay_table(&chain, cfg.k_max)? {
        let dc = DecorrelationChain::compute(&joint_at_distance(&chain, row.k)?, &f)?;
        let chain_ok = dc.holds(1e-10);
        let (pass, regime) = if unique {
            violation |= !row.pass || !chain_ok;
            (row.pass.to_string(), "unique")
        } else {
            (String::new(), "nonunique")
        };
        rows.push(format!(
            "{},{:e},{:e},{:e},{:e},{},{:e},{:e},{:e},{:e},{},{}",
            row.k,
            row.mutual_info,
            row.entropy,
            row.ratio,
            row.bound,
            pass,
            dc.covariance,
            dc.tv_from_product,
            dc.pinsker_bound,
            dc.covariance_bound,
            chain_ok,
            regime
        ));
    }
    Ok(ExperimentOutput {
        csv: with_provenance(
            "k,mutual_info,entropy,ratio,bound,pass,covariance,tv,pinsker_bound,covariance_bound,chain_ok,regime",
            &rows,
            cfg,
        ),
        violation,
    })
}

/// Vertex tables followed by edge tables.
pub type MarginalTables = (Vec<DistTable<f64>>, Vec<DistTable<f64>>);

/// Exact factor marginals of the Gibbs measure on a tree base, one table
/// per vertex and per edge.
pub fn tree_base_factor_marginals(
    g: &Graph,
    p: &Potential<f64>,
    code: &BlockCode,
    cap: u128,
) -> Result<MarginalTables> {
    if !g.is_tree() {
        return Err(Error::invalid("base graph is not a tree"));
    }
    let nu = brute_force_gibbs_with_cap(g, p, cap)?;
    let qo = code.output_alphabet;
    let mut vert = vec![vec![0.0; qo]; g.num_vertices()];
    let mut edge = vec![vec![0.0; qo * qo]; g.num_edges()];
    let mut coloring = vec![0; g.num_vertices()];
    let mut out = vec![0; g.num_vertices()];
    for (idx, &w) in nu.probs().iter().enumerate() {
        nu.decode(idx, &mut coloring);
        for (v, b) in out.iter_mut().enumerate() {
            *b = code.eval(&Pattern::from_topology(g, &coloring, v, code.radius));
            vert[v][*b] += w;
        }
        for (e, &(u, v)) in g.edges().iter().enumerate() {
            edge[e][out[u] * qo + out[v]] += w;
        }
    }
    let vert = vert
        .into_iter()
        .enumerate()
        .map(|(v, p)| DistTable::from_vector(v, p))
        .collect::<Result<Vec<_>>>()?;
    let edge = edge
        .into_iter()
        .zip(g.edges())
        .map(|(p, &(u, v))| DistTable::from_matrix((u, v), qo, p))
        .collect::<Result<Vec<_>>>()?;
    Ok((vert, edge))
}

/// Mean and standard error of the edge-vertex slack of each code over
/// independent Glauber samples on independent `n`-fold coverings.
pub fn monte_carlo_slack(
    g: &Graph,
    p: &Potential<f64>,
    codes: &[BlockCode],
    n: usize,
    trials: usize,
    sweeps: usize,
    seed: u64,
) -> Result<Vec<(f64, f64)>> {
    let per_trial: Vec<Vec<f64>> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let s = trial_seed(seed, n, t);
            let cov = random_covering(g, n, s)?;
            let lifted = transfer_potential(p, &cov)?;
            let coloring = glauber_sample(&cov, &lifted, sweeps, s.rotate_left(17))?;
            codes
                .iter()
                .map(|code| {
                    let out = apply_block_code(&cov, &coloring, code)?;
                    let emp = empirical_dists::<f64>(&cov, &out, code.output_alphabet)?;
                    edge_vertex_slack(g, &emp.vertex, &emp.edge, 1e-9)
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    Ok((0..codes.len())
        .map(|c| {
            let xs: Vec<f64> = per_trial.iter().map(|v| v[c]).collect();
            let (mean, var) = mean_and_variance(&xs);
            (mean, (var / trials as f64).sqrt())
        })
        .collect())
}

/// Sample mean and unbiased sample variance (0 for a single value).
pub fn mean_and_variance(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var)
}

/// Exact slack where available: tree bases by enumeration, regular bases
/// with degree at least 3 through the tree chain. `None` otherwise.
/// The flag is the uniqueness verdict (always true for trees).
pub fn exact_slack(
    cfg: &ExperimentConfig,
    g: &Graph,
    code: &BlockCode,
) -> Result<Option<(f64, bool)>> {
    if g.is_tree() {
        let (vert, edge) = tree_base_factor_marginals(g, &cfg.potential(g)?, code, cfg.cap)?;
        return Ok(Some((edge_vertex_slack(g, &vert, &edge, 1e-9)?, true)));
    }
    match g.regular_degree() {
        Some(d) if d >= 3 => {
            let (chain, unique) = solved_chain(cfg, d)?;
            let (mv, me) = factor_marginals_exact(&chain, code)?;
            Ok(Some((homogeneous_slack(g, &mv, &me, 1e-9)?, unique)))
        }
        _ => Ok(None),
    }
}

/// Edge-vertex slack of the configured code on the configured base.
pub fn run_edge_vertex(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    let g = cfg.load_graph()?;
    let code = cfg.load_code()?;
    let n = *cfg.n.iter().max().unwrap();
    let exact = match cfg.method {
        SlackMethod::MonteCarlo => None,
        _ => exact_slack(cfg, &g, &code)?,
    };
    if cfg.method == SlackMethod::Exact && exact.is_none() {
        return Err(Error::invalid(
            "exact slack needs a tree or a regular base of degree ≥ 3",
        ));
    }
    let want_mc = match cfg.method {
        SlackMethod::Exact => false,
        SlackMethod::Auto => exact.is_none(),
        SlackMethod::MonteCarlo | SlackMethod::Both => true,
    };
    let mc = if want_mc {
        let p = cfg.potential(&g)?;
        Some(
            monte_carlo_slack(
                &g,
                &p,
                std::slice::from_ref(&code),
                n,
                cfg.trials,
                cfg.sweeps,
                cfg.seed,
            )?[0],
        )
    } else {
        None
    };
    let unique = exact.is_none_or(|(_, u)| u);
    let mut rows = Vec::new();
    let mut violation = false;
    let prefix = format!("{},{},{:?},{}", cfg.graph, cfg.model, cfg.beta, cfg.code);
    if let Some((s, _)) = exact {
        let pass = s >= -1e-9;
        violation |= unique && !pass;
        let pass = if unique {
            pass.to_string()
        } else {
            String::new()
        };
        rows.push(format!("{prefix},exact,{s:e},0,{pass},,{}", regime(unique)));
    }
    if let Some((mean, se)) = mc {
        let pass = mean + 3.0 * se >= -1e-9;
        violation |= unique && !pass;
        let agree = exact.map_or(String::new(), |(s, _)| {
            ((mean - s).abs() <= 3.0 * se).to_string()
        });
        let pass = if unique {
            pass.to_string()
        } else {
            String::new()
        };
        rows.push(format!(
            "{prefix},mc±{se:.3e},{mean:e},{se:e},{pass},{agree},{}",
            regime(unique)
        ));
    }
    Ok(ExperimentOutput {
        csv: with_provenance(
            "graph,model,beta,code,method,slack,stderr,pass,agrees_with_exact,regime",
            &rows,
            cfg,
        ),
        violation,
    })
}

fn regime(unique: bool) -> &'static str {
    if unique {
        "unique"
    } else {
        "nonunique"
    }
}

/// Target vertex and edge laws for coloring counts.
#[derive(Debug, Clone, PartialEq)]
pub struct Targets {
    pub vertex: Vec<DistTable<f64>>,
    pub edge: Vec<DistTable<f64>>,
}

impl Targets {
    pub fn uniform(g: &Graph, q: usize) -> Self {
        Targets {
            vertex: (0..g.num_vertices())
                .map(|v| DistTable::uniform(vec![v], q))
                .collect(),
            edge: g
                .edges()
                .iter()
                .map(|&(u, v)| DistTable::uniform(vec![u, v], q))
                .collect(),
        }
    }

    /// Lines `v <vertex> p_0 ... p_{q-1}` and `e <u> <v> p_00 p_01 ...`
    /// (first index the color at `u`). Unlisted entries stay uniform.
    pub fn parse(text: &str, g: &Graph, q: usize) -> Result<Self> {
        let mut t = Targets::uniform(g, q);
        for (i, raw) in text.lines().enumerate() {
            let lineno = i + 1;
            let line = crate::graph::strip_comment(raw);
            if line.is_empty() {
                continue;
            }
            let toks: Vec<&str> = line.split_whitespace().collect();
            let int = |s: &str| -> Result<usize> {
                s.parse().map_err(|e| Error::parse(lineno, format!("{e}")))
            };
            let probs = |s: &[&str]| -> Result<Vec<f64>> {
                s.iter()
                    .map(|x| x.parse().map_err(|e| Error::parse(lineno, format!("{e}"))))
                    .collect()
            };
            match toks.first() {
                Some(&"v") if toks.len() == 2 + q => {
                    let v = int(toks[1])?;
                    if v >= g.num_vertices() {
                        return Err(Error::parse(lineno, "vertex out of range"));
                    }
                    t.vertex[v] = DistTable::from_vector(v, probs(&toks[2..])?)?;
                }
                Some(&"e") if toks.len() == 3 + q * q => {
                    let (u, v) = (int(toks[1])?, int(toks[2])?);
                    let e = g
                        .edge_index(u, v)
                        .ok_or_else(|| Error::parse(lineno, format!("no edge {{{u}, {v}}}")))?;
                    let mut mu = DistTable::from_matrix((u, v), q, probs(&toks[3..])?)?;
                    if u > v {
                        mu = mu.transpose()?;
                    }
                    t.edge[e] = mu;
                }
                _ => {
                    return Err(Error::parse(
                        lineno,
                        "expected a `v` or `e` line of the right length",
                    ))
                }
            }
        }
        Ok(t)
    }

    /// The predicted exponential rate; also checks consistency.
    pub fn rate(&self, g: &Graph) -> Result<f64> {
        edge_vertex_slack(g, &self.vertex, &self.edge, 1e-9)
    }
}

/// Number of colorings `c` of `cov` with `‖μ_e^c - μ_e‖_TV ≤ eps` for every
/// base edge `e`, by depth-first enumeration.
pub fn count_near_colorings(
    cov: &NFoldCovering,
    q: usize,
    edge_targets: &[DistTable<f64>],
    eps: f64,
    cap: u128,
) -> Result<u128> {
    let base = cov.base();
    if edge_targets.len() != base.num_edges()
        || edge_targets
            .iter()
            .any(|t| t.alphabet() != q || t.arity() != 2)
    {
        return Err(Error::DomainMismatch(
            "one q × q target per base edge required".into(),
        ));
    }
    check_cap(q, cov.num_vertices(), cap)?;
    let n = cov.fold() as f64;

    // visit vertices breadth first so that edges close early
    let nv = cov.num_vertices();
    let mut order = Vec::with_capacity(nv);
    let mut seen = vec![false; nv];
    for s in 0..nv {
        if seen[s] {
            continue;
        }
        seen[s] = true;
        order.push(s);
        let mut head = order.len() - 1;
        while head < order.len() {
            let x = order[head];
            head += 1;
            for &(y, _) in cov.incident(x) {
                if !seen[y] {
                    seen[y] = true;
                    order.push(y);
                }
            }
        }
    }
    let mut rank = vec![0; nv];
    for (i, &x) in order.iter().enumerate() {
        rank[x] = i;
    }
    // lifted edges closed by each vertex: (base edge, other end, self is the smaller base end)
    let closing: Vec<Vec<(usize, usize, bool)>> = order
        .iter()
        .map(|&x| {
            cov.incident(x)
                .iter()
                .filter(|&&(y, _)| rank[y] < rank[x])
                .map(|&(y, le)| {
                    let e = cov.project_edge(le);
                    (e, y, base.edges()[e].0 == cov.project(x))
                })
                .collect()
        })
        .collect();

    struct Search<'a> {
        q: usize,
        n: f64,
        eps: f64,
        order: &'a [usize],
        closing: &'a [Vec<(usize, usize, bool)>],
        targets: Vec<Vec<f64>>,
        counts: Vec<Vec<usize>>,
        coloring: Vec<usize>,
    }
    impl Search<'_> {
        // Σ max(0, p - t) only grows as cells fill, and equals the total
        // variation once every lifted edge over `e` is colored.
        fn excess(&self, e: usize) -> f64 {
            self.counts[e]
                .iter()
                .zip(&self.targets[e])
                .map(|(&c, &t)| (c as f64 / self.n - t).max(0.0))
                .sum()
        }

        fn go(&mut self, depth: usize) -> u128 {
            if depth == self.order.len() {
                return 1;
            }
            let x = self.order[depth];
            let mut total = 0;
            for a in 0..self.q {
                self.coloring[x] = a;
                let mut ok = true;
                for &(e, y, x_first) in &self.closing[depth] {
                    let b = self.coloring[y];
                    let cell = if x_first {
                        a * self.q + b
                    } else {
                        b * self.q + a
                    };
                    self.counts[e][cell] += 1;
                    ok &= self.excess(e) <= self.eps + 1e-12;
                }
                if ok {
                    total += self.go(depth + 1);
                }
                for &(e, y, x_first) in &self.closing[depth] {
                    let b = self.coloring[y];
                    let cell = if x_first {
                        a * self.q + b
                    } else {
                        b * self.q + a
                    };
                    self.counts[e][cell] -= 1;
                }
            }
            total
        }
    }

    let mut search = Search {
        q,
        n,
        eps,
        order: &order,
        closing: &closing,
        targets: edge_targets.iter().map(|t| t.probs().to_vec()).collect(),
        counts: vec![vec![0; q * q]; base.num_edges()],
        coloring: vec![0; nv],
    };
    Ok(search.go(0))
}

/// Exhaustive counts of near-target colorings on one random covering per N.
pub fn run_count_colorings(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    let g = cfg.load_graph()?;
    let q = cfg.alphabet();
    let targets = match &cfg.targets {
        Some(path) => Targets::parse(&std::fs::read_to_string(path)?, &g, q)?,
        None => Targets::uniform(&g, q),
    };
    let predicted = targets.rate(&g)?;
    let mut rows = Vec::new();
    for &n in &cfg.n {
        let cov = random_covering(&g, n, trial_seed(cfg.seed, n, 0))?;
        let count = count_near_colorings(&cov, q, &targets.edge, cfg.eps, cfg.cap)?;
        let rate = if count > 0 {
            (count as f64).ln() / n as f64
        } else {
            f64::NEG_INFINITY
        };
        rows.push(format!("{n},{count},{rate:e},{predicted:e}"));
    }
    Ok(ExperimentOutput {
        csv: with_provenance("N,count,rate,predicted_rate", &rows, cfg),
        violation: false,
    })
}

/// Percentile bootstrap interval for the sample variance.
pub fn bootstrap_variance_ci(xs: &[f64], resamples: usize, level: f64, seed: u64) -> (f64, f64) {
    let mut rng = seeded_rng(seed);
    let mut buf = vec![0.0; xs.len()];
    let mut vars: Vec<f64> = (0..resamples)
        .map(|_| {
            for b in buf.iter_mut() {
                *b = xs[rng.gen_range(0..xs.len())];
            }
            mean_and_variance(&buf).1
        })
        .collect();
    vars.sort_by(f64::total_cmp);
    let tail = (1.0 - level) / 2.0;
    let lo = ((tail * resamples as f64).floor() as usize).min(resamples - 1);
    let hi = (((1.0 - tail) * resamples as f64).ceil() as usize).clamp(1, resamples) - 1;
    (vars[lo], vars[hi])
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConcentrationRow {
    pub n: usize,
    /// `μ_e^c({(b_u, b_v)})` per trial.
    pub values: Vec<f64>,
    pub mean: f64,
    pub var: f64,
    pub ci: (f64, f64),
    /// Mean over trials of the smallest per-fiber `r`-nice fraction.
    pub nice_fraction: f64,
}

/// Per-trial pair frequencies of the factor coloring across coverings.
pub fn concentration_rows(cfg: &ExperimentConfig) -> Result<Vec<ConcentrationRow>> {
    let g = cfg.load_graph()?;
    let code = cfg.load_code()?;
    let p = cfg.potential(&g)?;
    let qo = code.output_alphabet;
    if cfg.edge >= g.num_edges() || cfg.cell.0 >= qo || cfg.cell.1 >= qo {
        return Err(Error::invalid("tracked edge or cell out of range"));
    }
    let cell = cfg.cell.0 * qo + cfg.cell.1;
    cfg.n
        .iter()
        .map(|&n| {
            let per_trial: Vec<(f64, f64)> = (0..cfg.trials)
                .into_par_iter()
                .map(|t| {
                    let s = trial_seed(cfg.seed, n, t);
                    let cov = random_covering(&g, n, s)?;
                    let lifted = transfer_potential(&p, &cov)?;
                    let coloring = glauber_sample(&cov, &lifted, cfg.sweeps, s.rotate_left(17))?;
                    let out = apply_block_code(&cov, &coloring, &code)?;
                    let emp = empirical_dists::<f64>(&cov, &out, qo)?;
                    let nice = if cfg.r == 0 {
                        1.0
                    } else {
                        niceness_audit(&cov, cfg.r)?.min_vertex_fraction()
                    };
                    Ok((emp.edge[cfg.edge].probs()[cell], nice))
                })
                .collect::<Result<_>>()?;
            let values: Vec<f64> = per_trial.iter().map(|x| x.0).collect();
            let (mean, var) = mean_and_variance(&values);
            let ci =
                bootstrap_variance_ci(&values, 2000, 0.95, trial_seed(cfg.seed, n, usize::MAX));
            let nice_fraction = per_trial.iter().map(|x| x.1).sum::<f64>() / cfg.trials as f64;
            Ok(ConcentrationRow {
                n,
                values,
                mean,
                var,
                ci,
                nice_fraction,
            })
        })
        .collect()
}

/// Variance of a tracked pair frequency against the covering size.
pub fn run_concentration(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    let rows: Vec<String> = concentration_rows(cfg)?
        .iter()
        .map(|r| {
            format!(
                "{},{:e},{:e},{:e},{:e},{:e},{}",
                r.n,
                r.var,
                r.nice_fraction,
                r.ci.0,
                r.ci.1,
                r.mean,
                r.nice_fraction > 1.0 - cfg.delta
            )
        })
        .collect();
    Ok(ExperimentOutput {
        csv: with_provenance(
            "N,var,nice_fraction,var_ci_low,var_ci_high,mean,nice_ok",
            &rows,
            cfg,
        ),
        violation: false,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoverStatsRow {
    pub n: usize,
    pub median_vertex_fraction: f64,
    pub median_edge_fraction: f64,
    /// Fraction of trials whose covering is `(r, eps)`-nice.
    pub achieving_fraction: f64,
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let m = xs.len() / 2;
    if xs.len() % 2 == 1 {
        xs[m]
    } else {
        (xs[m - 1] + xs[m]) / 2.0
    }
}

pub fn cover_stats_rows(cfg: &ExperimentConfig) -> Result<Vec<CoverStatsRow>> {
    let g = cfg.load_graph()?;
    cfg.n
        .iter()
        .map(|&n| {
            let reports = (0..cfg.trials)
                .into_par_iter()
                .map(|t| {
                    niceness_audit(&random_covering(&g, n, trial_seed(cfg.seed, n, t))?, cfg.r)
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(CoverStatsRow {
                n,
                median_vertex_fraction: median(
                    reports.iter().map(|r| r.min_vertex_fraction()).collect(),
                ),
                median_edge_fraction: median(
                    reports.iter().map(|r| r.min_edge_fraction()).collect(),
                ),
                achieving_fraction: reports.iter().filter(|r| r.is_nice(cfg.eps)).count() as f64
                    / cfg.trials as f64,
            })
        })
        .collect()
}

/// Niceness of random coverings against `N`.
pub fn run_cover_stats(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    let rows: Vec<String> = cover_stats_rows(cfg)?
        .iter()
        .map(|r| {
            format!(
                "{},{:e},{:e},{:e}",
                r.n, r.median_vertex_fraction, r.median_edge_fraction, r.achieving_fraction
            )
        })
        .collect();
    Ok(ExperimentOutput {
        csv: with_provenance(
            "N,median_vertex_fraction,median_edge_fraction,achieving_fraction",
            &rows,
            cfg,
        ),
        violation: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::info::entropy;
    use approx::assert_abs_diff_eq;

    fn cfg(text: &str) -> ExperimentConfig {
        ExperimentConfig::from_kv(text).unwrap()
    }

    #[test]
    fn config_parsing_and_hash() {
        let c = cfg("model = potts\nq = 3 # three colors\nbeta=0.2\nn = 4, 8,12\ncell = 1,0\n");
        assert_eq!(c.model, ModelKind::Potts);
        assert_eq!(c.n, vec![4, 8, 12]);
        assert_eq!(c.cell, (1, 0));
        assert_eq!(c.config_hash().len(), 16);
        let mut d = c.clone();
        d.out = Some("x.csv".into());
        assert_eq!(c.config_hash(), d.config_hash());
        d.set("beta", "0.21").unwrap();
        assert_ne!(c.config_hash(), d.config_hash());
        assert_eq!(cfg(&c.to_kv()), c);

        assert!(ExperimentConfig::from_kv("beta = inf\n").is_err());
        assert!(ExperimentConfig::from_kv("n = 0\n").is_err());
        assert!(ExperimentConfig::from_kv("eps = 1.5\n").is_err());
        assert!(ExperimentConfig::from_kv("colour = 1\n").is_err());
        assert!(ExperimentConfig::from_kv("beta 1\n").is_err());
    }

    #[test]
    fn named_graphs() {
        assert_eq!(load_graph("k4").unwrap().num_edges(), 6);
        assert_eq!(load_graph("c5").unwrap().num_edges(), 5);
        assert_eq!(load_graph("p3").unwrap().num_edges(), 2);
        assert_eq!(load_graph("petersen").unwrap().num_edges(), 15);
        assert!(load_graph("/nonexistent/graph.txt").is_err());
    }

    #[test]
    fn decay_at_zero_coupling_is_flat() {
        let out = run_decay(&cfg("beta = 0\n")).unwrap();
        assert!(!out.violation);
        for line in out.csv.lines().skip(1) {
            let cols: Vec<&str> = line.split(',').collect();
            assert_eq!(cols[3].parse::<f64>().unwrap(), 0.0);
        }
    }

    #[test]
    fn decay_flags_nonunique_rows() {
        let out = run_decay(&cfg("beta = 1.2\nk_max = 3\n")).unwrap();
        assert!(!out.violation);
        for line in out.csv.lines().skip(1) {
            let cols: Vec<&str> = line.split(',').collect();
            assert_eq!(cols[5], "");
            assert_eq!(cols[11], "nonunique");
        }
        assert!(out.csv.starts_with("k,mutual_info,"));
    }

    #[test]
    fn tree_base_slack_is_edge_entropy() {
        let c = cfg("graph = k2\nbeta = 0.7\nfield = 0.1\nmethod = exact\n");
        let g = c.load_graph().unwrap();
        let (_, edge) = tree_base_factor_marginals(
            &g,
            &c.potential(&g).unwrap(),
            &BlockCode::identity(2),
            c.cap,
        )
        .unwrap();
        let (s, unique) = exact_slack(&c, &g, &BlockCode::identity(2))
            .unwrap()
            .unwrap();
        assert!(unique);
        assert_abs_diff_eq!(s, entropy(&edge[0]), epsilon = 1e-15);
        let out = run_edge_vertex(&c).unwrap();
        assert!(out.csv.lines().nth(1).unwrap().contains(",exact,"));
    }

    #[test]
    fn petersen_majority_slack() {
        let c = cfg("graph = petersen\nbeta = 0.3\ncode = majority\nmethod = exact\n");
        let out = run_edge_vertex(&c).unwrap();
        assert!(!out.violation, "{}", out.csv);
    }

    #[test]
    fn exact_needs_a_supported_base() {
        let c = cfg("graph = c5\nmethod = exact\n");
        assert!(run_edge_vertex(&c).is_err());
    }

    #[test]
    fn counts_with_vacuous_or_forcing_targets() {
        let g = load_graph("k2").unwrap();
        let cov = random_covering(&g, 3, 1).unwrap();
        let uni = Targets::uniform(&g, 2);
        assert_eq!(
            count_near_colorings(&cov, 2, &uni.edge, 1.0, 1 << 20).unwrap(),
            64
        );
        // all pairs forced to (0, 1)
        let point = DistTable::from_matrix((0, 1), 2, vec![0.0, 1.0, 0.0, 0.0]).unwrap();
        assert_eq!(
            count_near_colorings(&cov, 2, &[point], 0.01, 1 << 20).unwrap(),
            1
        );
        assert!(matches!(
            count_near_colorings(
                &random_covering(&g, 20, 1).unwrap(),
                2,
                &uni.edge,
                0.1,
                1 << 20
            ),
            Err(Error::CapExceeded { .. })
        ));
    }

    #[test]
    fn counts_match_brute_force_on_a_triangle_cover() {
        // every coloring checked directly against the definition
        let g = load_graph("c3").unwrap();
        let cov = random_covering(&g, 3, 5).unwrap();
        let uni = Targets::uniform(&g, 2);
        let eps = 0.2;
        let mut brute = 0u128;
        for idx in 0..1usize << 9 {
            let c: Vec<usize> = (0..9).map(|i| idx >> i & 1).collect();
            let emp = empirical_dists::<f64>(&cov, &c, 2).unwrap();
            if emp
                .edge
                .iter()
                .zip(&uni.edge)
                .all(|(a, b)| crate::info::tv_distance(a, b).unwrap() <= eps + 1e-12)
            {
                brute += 1;
            }
        }
        assert_eq!(
            count_near_colorings(&cov, 2, &uni.edge, eps, 1 << 20).unwrap(),
            brute
        );
    }

    #[test]
    fn target_file_parsing() {
        let g = load_graph("k2").unwrap();
        let t = Targets::parse("v 0 0.5 0.5\ne 1 0 0.1 0.4 0.4 0.1\n", &g, 2).unwrap();
        assert_eq!(t.edge[0].probs(), &[0.1, 0.4, 0.4, 0.1]);
        assert!(t.rate(&g).is_ok());
        assert!(Targets::parse("e 0 1 0.5 0.5\n", &g, 2).is_err());
        let skew = Targets::parse("e 0 1 0.7 0.1 0.1 0.1\n", &g, 2).unwrap();
        assert!(matches!(
            skew.rate(&g),
            Err(Error::InconsistentMarginals { .. })
        ));
    }

    #[test]
    fn bootstrap_interval_brackets_the_variance() {
        let mut rng = seeded_rng(3);
        let xs: Vec<f64> = (0..200).map(|_| rng.gen::<f64>()).collect();
        let (_, var) = mean_and_variance(&xs);
        let (lo, hi) = bootstrap_variance_ci(&xs, 1000, 0.95, 1);
        assert!(lo < var && var < hi);
        assert_abs_diff_eq!(var, 1.0 / 12.0, epsilon = 0.02);
    }

    #[test]
    fn independent_sites_give_binomial_variance() {
        let c = cfg("graph = k4\nbeta = 0\nn = 100\ntrials = 200\nsweeps = 2\ncell = 1,1\nr = 1\n");
        let rows = concentration_rows(&c).unwrap();
        let p = 0.25;
        let oracle = p * (1.0 - p) / 100.0;
        assert!(
            rows[0].var < 3.0 * oracle && rows[0].var > oracle / 3.0,
            "{}",
            rows[0].var
        );
        assert_eq!(rows[0].nice_fraction, 1.0);
    }

    #[test]
    fn runs_are_reproducible() {
        let c = cfg("graph = c3\nn = 20, 50\ntrials = 8\nsweeps = 5\n");
        assert_eq!(
            run_concentration(&c).unwrap(),
            run_concentration(&c).unwrap()
        );
        assert_eq!(run_cover_stats(&c).unwrap(), run_cover_stats(&c).unwrap());
    }

    #[test]
    fn k2_covers_are_always_nice() {
        let c = cfg("graph = k2\nn = 1, 7, 30\nr = 4\ntrials = 5\n");
        for row in cover_stats_rows(&c).unwrap() {
            assert_eq!(row.median_vertex_fraction, 1.0);
            assert_eq!(row.median_edge_fraction, 1.0);
            assert_eq!(row.achieving_fraction, 1.0);
        }
    }
}
