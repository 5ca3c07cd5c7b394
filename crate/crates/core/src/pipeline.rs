//! Subcommand workflows. Each reads its inputs, runs one stage and writes
//! its outputs atomically; all randomness comes from explicit seeds.

use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use nalgebra::DMatrix;
use serde_json::{json, Value};

use crate::alignment::{estimate_qn_with, AlignmentResult, AlignmentTolerance};
use crate::clt::{ase_covariance, chi_squared_quantile, lse_covariance, mahalanobis_squared, LatentDistribution, Regime};
use crate::embed::{adjacency_spectral_embed, spectral_embed, EmbeddingKind};
use crate::error::{Error, Result};
use crate::estimation::{
    adjusted_rand_index, fit_gmm, fit_polytope, kmeans_baseline, recover_block_matrix, GmmOptions, MvesOptions,
};
use crate::io::{
    csv_text, format_float, matrix_rows, read_embedding, read_graph, read_indexed_matrix, read_labels,
    read_model_config, write_atomic, write_embedding, write_graph, write_indexed_matrix, write_json, write_labels,
    write_provenance,
};
use crate::linalg::Selection;
use crate::linkpred::{evaluate_task, new_edge_prediction_task, synthetic_stream, RocResult, ScoreMode, TemporalEdgeLog};
use crate::model::{sample_mmsbm, sample_sbm, three_block_mixed_model, two_block_matrix, BlockModelParams, Mixture};

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    Ok(())
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    /// Model configuration JSON.
    #[arg(long)]
    pub config: PathBuf,
    /// Output edge list.
    #[arg(long)]
    pub out: PathBuf,
    /// Optional CSV of latent positions.
    #[arg(long)]
    pub positions: Option<PathBuf>,
    /// Optional CSV of community labels or membership vectors.
    #[arg(long)]
    pub memberships: Option<PathBuf>,
    /// Overrides the configured node count.
    #[arg(long)]
    pub n: Option<usize>,
    /// Overrides the configured seed.
    #[arg(long)]
    pub seed: Option<u64>,
}

pub fn simulate(args: &SimulateArgs) -> Result<()> {
    let mut config = read_model_config(&args.config)?;
    if let Some(n) = args.n {
        config.n = n;
    }
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    let (graph, latent) = config.sample()?;
    write_graph(&args.out, &graph)?;
    if let Some(p) = &args.positions {
        write_indexed_matrix(p, &latent.x, "x")?;
    }
    if let Some(p) = &args.memberships {
        write_provenance(p, &latent)?;
    }
    log::info!("sampled {} nodes and {} edges", graph.n(), graph.edge_count());
    Ok(())
}

#[derive(Debug, Clone, Args)]
pub struct EmbedArgs {
    #[arg(long)]
    pub graph: PathBuf,
    #[arg(long)]
    pub d: usize,
    #[arg(long, default_value = "adjacency")]
    pub kind: EmbeddingKind,
    /// Keep the d algebraically largest eigenvalues (positive part only).
    #[arg(long)]
    pub positive_only: bool,
    /// Output CSV; the sidecar JSON is written next to it.
    #[arg(long)]
    pub out: PathBuf,
}

pub fn embed(args: &EmbedArgs) -> Result<()> {
    let graph = read_graph(&args.graph)?;
    let sel = if args.positive_only { Selection::PositiveAlgebraic(args.d) } else { Selection::Magnitude(args.d) };
    let e = spectral_embed(&graph, args.kind, sel)?;
    write_embedding(&args.out, &e)
}

#[derive(Debug, Clone, Args)]
pub struct AlignArgs {
    #[arg(long)]
    pub graph: PathBuf,
    /// Model configuration the graph was drawn from (for the signature).
    #[arg(long)]
    pub config: PathBuf,
    /// True latent positions.
    #[arg(long)]
    pub positions: PathBuf,
    #[arg(long, default_value = "adjacency")]
    pub kind: EmbeddingKind,
    #[arg(long)]
    pub out: PathBuf,
}

fn alignment_json(r: &AlignmentResult) -> Value {
    json!({
        "Q_n": matrix_rows(&r.q_n),
        "residual": r.residual,
        "norm": r.spectral_norm,
        "two_to_infinity_error": r.two_to_infinity_error(),
        "p": r.signature.p,
        "q": r.signature.q,
    })
}

pub fn align(args: &AlignArgs) -> Result<()> {
    let graph = read_graph(&args.graph)?;
    let sig = read_model_config(&args.config)?.params()?.signature();
    let (_, x) = read_indexed_matrix(&args.positions)?;
    let r = estimate_qn_with(&graph, &x, sig, args.kind, AlignmentTolerance::default())?;
    write_json(&args.out, &alignment_json(&r))
}

#[derive(Debug, Clone, Args)]
pub struct FitArgs {
    /// Number of communities.
    #[arg(long = "K")]
    pub k: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = crate::estimation::DEFAULT_RESTARTS)]
    pub restarts: usize,
}

#[derive(Debug, Clone, Args)]
pub struct ClusterArgs {
    #[arg(long)]
    pub embedding: PathBuf,
    #[command(flatten)]
    pub fit: FitArgs,
    #[arg(long, default_value_t = 1000)]
    pub max_iter: usize,
    /// Covariance diagonal loading (default scales with the data).
    #[arg(long)]
    pub reg: Option<f64>,
    /// Optional true labels (`node,z`) for agreement scores.
    #[arg(long)]
    pub truth: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

pub fn cluster(args: &ClusterArgs) -> Result<()> {
    let e = read_embedding(&args.embedding)?;
    let opts = GmmOptions {
        seed: args.fit.seed,
        restarts: args.fit.restarts,
        max_iter: args.max_iter,
        reg: args.reg,
        ..Default::default()
    };
    let fit = fit_gmm(&e.points, args.fit.k, &opts)?;
    let mut out = json!({
        "labels": fit.labels,
        "weights": fit.weights,
        "means": matrix_rows(&fit.means),
        "log_likelihood": fit.final_log_likelihood(),
        "iterations": fit.log_likelihood.len(),
    });
    // Laplacian cluster centres do not estimate the community vectors
    if e.kind == EmbeddingKind::Adjacency {
        let b = recover_block_matrix(&fit.means, e.signature)?;
        out["B_hat"] = json!(matrix_rows(&b.b));
        out["B_hat_out_of_range"] = json!(b.out_of_range);
    } else {
        out["B_hat"] = Value::Null;
    }
    if let Some(path) = &args.truth {
        let truth = read_labels(path)?;
        let km = kmeans_baseline(&e.points, args.fit.k, args.fit.seed)?;
        out["ari"] = json!(adjusted_rand_index(&truth, &fit.labels)?);
        out["ari_kmeans"] = json!(adjusted_rand_index(&truth, &km.labels)?);
    }
    write_json(&args.out, &out)
}

#[derive(Debug, Clone, Args)]
pub struct MixedArgs {
    #[arg(long)]
    pub embedding: PathBuf,
    #[command(flatten)]
    pub fit: FitArgs,
    #[arg(long)]
    pub out: PathBuf,
    /// CSV of estimated membership vectors.
    #[arg(long)]
    pub memberships_out: Option<PathBuf>,
}

pub fn mixed(args: &MixedArgs) -> Result<()> {
    let e = read_embedding(&args.embedding)?;
    let opts = MvesOptions { seed: args.fit.seed, restarts: args.fit.restarts, ..Default::default() };
    let fit = fit_polytope(&e.points, args.fit.k, &opts)?;
    let b = recover_block_matrix(&fit.lifted, e.signature)?;
    let out = json!({
        "B_hat": matrix_rows(&b.b),
        "B_hat_out_of_range": b.out_of_range,
        "vertices": matrix_rows(&fit.lifted),
        "projected_vertices": matrix_rows(&fit.vertices),
        "volume": fit.volume,
    });
    write_json(&args.out, &out)?;
    if let Some(p) = &args.memberships_out {
        write_indexed_matrix(p, &fit.memberships, "pi")?;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum RegimeArg {
    Dense,
    Sparse,
}

#[derive(Debug, Clone, Args)]
pub struct CltCheckArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Comma-separated node counts.
    #[arg(long, value_delimiter = ',', required = true)]
    pub n: Vec<usize>,
    /// Number of seeds, counting up from the configured seed.
    #[arg(long, default_value_t = 5)]
    pub seeds: u64,
    #[arg(long, default_value_t = 0.95)]
    pub level: f64,
    #[arg(long, default_value = "adjacency")]
    pub kind: EmbeddingKind,
    #[arg(long, value_enum, default_value = "dense")]
    pub regime: RegimeArg,
    #[arg(long)]
    pub out_dir: PathBuf,
}

/// Mahalanobis distances of aligned embedding rows to their limits under the
/// limiting covariance at the embedding's rate.
pub fn clt_distances(
    graph: &crate::graph::SymmetricGraph,
    latent: &crate::model::LatentSample,
    dist: &LatentDistribution,
    kind: EmbeddingKind,
    regime: Regime,
) -> Result<Vec<f64>> {
    let r = estimate_qn_with(graph, &latent.x, latent.signature, kind, AlignmentTolerance::default())?;
    let aligned = r.aligned_points();
    let n = graph.n() as f64;
    // adjacency errors shrink like n^{-1/2}, Laplacian errors like n^{-1}
    let scale = match kind {
        EmbeddingKind::Adjacency => n,
        EmbeddingKind::Laplacian => n * n,
    };
    let covariance = |x: &[f64]| match kind {
        EmbeddingKind::Adjacency => ase_covariance(x, dist, regime),
        EmbeddingKind::Laplacian => lse_covariance(x, dist, regime),
    };
    let labels = latent.labels();
    let mut cache: Vec<Option<DMatrix<f64>>> = vec![None; labels.map_or(0, |z| z.iter().max().map_or(0, |m| m + 1))];
    let mut out = Vec::with_capacity(graph.n());
    for i in 0..graph.n() {
        let x: Vec<f64> = latent.x.row(i).iter().copied().collect();
        let cov = match labels {
            Some(z) => {
                if cache[z[i]].is_none() {
                    cache[z[i]] = Some(covariance(&x)?);
                }
                cache[z[i]].clone().expect("cached")
            }
            None => covariance(&x)?,
        } / scale;
        let p: Vec<f64> = aligned.row(i).iter().copied().collect();
        let c: Vec<f64> = r.target.row(i).iter().copied().collect();
        out.push(mahalanobis_squared(&p, &c, &cov)?);
    }
    Ok(out)
}

pub fn clt_check(args: &CltCheckArgs) -> Result<()> {
    let config = read_model_config(&args.config)?;
    let params = config.params()?;
    let dist = LatentDistribution::from_params(&params)?;
    let regime = match args.regime {
        RegimeArg::Dense => Regime::Dense,
        RegimeArg::Sparse => Regime::Sparse,
    };
    let cutoff = chi_squared_quantile(params.signature().d(), args.level)?;
    create_dir(&args.out_dir)?;
    let mut rows = Vec::new();
    let mut per_n = Vec::new();
    let (mut covered_all, mut total_all) = (0usize, 0usize);
    for &n in &args.n {
        let mut covered = 0usize;
        for s in 0..args.seeds {
            let seed = config.seed.wrapping_add(s);
            let (graph, latent) = match params.mixture {
                Mixture::Weights(_) => sample_sbm(&params, n, seed)?,
                Mixture::Dirichlet(_) => sample_mmsbm(&params, n, seed)?,
            };
            let d2 = clt_distances(&graph, &latent, &dist, args.kind, regime)?;
            for (i, &m) in d2.iter().enumerate() {
                let inside = m <= cutoff;
                covered += inside as usize;
                rows.push(vec![n.to_string(), seed.to_string(), i.to_string(), format_float(m), (inside as u8).to_string()]);
            }
        }
        let total = n * args.seeds as usize;
        per_n.push(json!({"n": n, "coverage": covered as f64 / total as f64, "nodes": total}));
        covered_all += covered;
        total_all += total;
    }
    let header: Vec<String> = ["n", "seed", "node", "mahalanobis2", "covered"].iter().map(|s| s.to_string()).collect();
    write_atomic(&args.out_dir.join("coverage.csv"), &csv_text(&header, rows)?)?;
    let summary = json!({
        "level": args.level,
        "kind": args.kind,
        "chi2_cutoff": cutoff,
        "coverage": covered_all as f64 / total_all.max(1) as f64,
        "per_n": per_n,
    });
    write_json(&args.out_dir.join("summary.json"), &summary)
}

/// Parses `t0:t1`.
pub fn parse_window(s: &str) -> std::result::Result<(i64, i64), String> {
    let (a, b) = s.split_once(':').ok_or_else(|| format!("expected t0:t1, got `{s}`"))?;
    let a = a.trim().parse::<i64>().map_err(|e| format!("bad start `{a}`: {e}"))?;
    let b = b.trim().parse::<i64>().map_err(|e| format!("bad end `{b}`: {e}"))?;
    Ok((a, b))
}

#[derive(Debug, Clone, Args)]
pub struct LinkpredArgs {
    /// Tab-separated `time src dst` log.
    #[arg(long)]
    pub log: PathBuf,
    #[arg(long, value_parser = parse_window)]
    pub train: (i64, i64),
    #[arg(long, value_parser = parse_window)]
    pub test: (i64, i64),
    #[arg(long, default_value_t = 10)]
    pub d: usize,
    #[arg(long, default_value = "grdpg")]
    pub mode: ScoreMode,
    /// Seed for candidate subsampling on very large tasks.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// ROC curve CSV; the summary JSON is written next to it.
    #[arg(long)]
    pub out: PathBuf,
}

fn roc_csv(roc: &RocResult) -> Result<Vec<u8>> {
    let header: Vec<String> = ["threshold", "fpr", "tpr"].iter().map(|s| s.to_string()).collect();
    csv_text(
        &header,
        (0..roc.fpr.len()).map(|k| vec![format_float(roc.thresholds[k]), format_float(roc.fpr[k]), format_float(roc.tpr[k])]),
    )
}

pub fn linkpred(args: &LinkpredArgs) -> Result<()> {
    let log = TemporalEdgeLog::parse(std::io::BufReader::new(std::fs::File::open(&args.log)?))?;
    let task = new_edge_prediction_task(&log, args.train, args.test, args.seed)?;
    let (e, roc) = evaluate_task(&task, args.d, args.mode)?;
    write_atomic(&args.out, &roc_csv(&roc)?)?;
    let summary = json!({
        "auc": roc.auc,
        "mode": args.mode,
        "d": e.d(),
        "p": e.signature.p,
        "q": e.signature.q,
        "nodes": task.nodes.len(),
        "pairs": task.pairs.len(),
        "positives": task.positives(),
    });
    write_json(&args.out.with_extension("json"), &summary)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Experiment {
    Fig1,
    #[value(name = "fig5-synthetic")]
    Fig5Synthetic,
}

#[derive(Debug, Clone, Args)]
pub struct ReproduceArgs {
    #[arg(long, value_enum)]
    pub experiment: Experiment,
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

/// Closed 2-D level curve `{c + r L u}` of a Gaussian at the given level.
fn level_curve(center: &[f64], cov: &DMatrix<f64>, level: f64, points: usize) -> Result<Vec<[f64; 2]>> {
    let chol = cov.clone().cholesky().ok_or_else(|| Error::Numerical("covariance not positive definite".into()))?;
    let l = chol.l();
    let r = chi_squared_quantile(2, level)?.sqrt();
    Ok((0..=points)
        .map(|k| {
            let t = 2.0 * std::f64::consts::PI * (k % points) as f64 / points as f64;
            let (s, c) = t.sin_cos();
            [center[0] + r * (l[(0, 0)] * c), center[1] + r * (l[(1, 0)] * c + l[(1, 1)] * s)]
        })
        .collect())
}

fn curves_csv(curves: &[(usize, Vec<[f64; 2]>)]) -> Result<Vec<u8>> {
    let header: Vec<String> = ["component", "x1", "x2"].iter().map(|s| s.to_string()).collect();
    csv_text(
        &header,
        curves.iter().flat_map(|(k, pts)| pts.iter().map(move |p| vec![k.to_string(), format_float(p[0]), format_float(p[1])])),
    )
}

const LEVEL: f64 = 0.95;
const CURVE_POINTS: usize = 100;

fn reproduce_fig1(dir: &Path, seed: u64) -> Result<()> {
    // left column: two-community SBM
    let sbm = crate::model::two_block_model();
    let (g, latent) = sample_sbm(&sbm, 2000, seed)?;
    let z = latent.labels().expect("labels").to_vec();
    let e = adjacency_spectral_embed(&g, 2)?;
    write_indexed_matrix(&dir.join("a_embedding.csv"), &e.points, "x")?;
    write_labels(&dir.join("a_communities.csv"), &z)?;

    let fit = fit_gmm(&e.points, 2, &GmmOptions { seed, ..Default::default() })?;
    write_labels(&dir.join("b_gmm_labels.csv"), &fit.labels)?;
    write_indexed_matrix(&dir.join("b_centres.csv"), &fit.means, "x")?;
    let mut curves = Vec::new();
    for k in 0..fit.k() {
        let c: Vec<f64> = fit.means.row(k).iter().copied().collect();
        curves.push((k, level_curve(&c, &fit.covariances[k], LEVEL, CURVE_POINTS)?));
    }
    write_atomic(&dir.join("b_level_curves.csv"), &curves_csv(&curves)?)?;

    let r = estimate_qn_with(&g, &latent.x, latent.signature, EmbeddingKind::Adjacency, AlignmentTolerance::default())?;
    write_indexed_matrix(&dir.join("c_aligned.csv"), &r.aligned_points(), "x")?;
    let q = &r.q_n;
    let moved_means = &fit.means * q.transpose();
    write_indexed_matrix(&dir.join("c_empirical_centres.csv"), &moved_means, "x")?;
    let mut empirical = Vec::new();
    for k in 0..fit.k() {
        let c: Vec<f64> = moved_means.row(k).iter().copied().collect();
        empirical.push((k, level_curve(&c, &(q * &fit.covariances[k] * q.transpose()), LEVEL, CURVE_POINTS)?));
    }
    write_atomic(&dir.join("c_empirical_level_curves.csv"), &curves_csv(&empirical)?)?;
    let dist = LatentDistribution::from_params(&sbm)?;
    let v = sbm.scaled_vectors();
    write_indexed_matrix(&dir.join("c_asymptotic_centres.csv"), &v, "x")?;
    let mut asymptotic = Vec::new();
    for k in 0..sbm.k() {
        let c: Vec<f64> = v.row(k).iter().copied().collect();
        let cov = ase_covariance(&c, &dist, Regime::Dense)? / 2000.0;
        asymptotic.push((k, level_curve(&c, &cov, LEVEL, CURVE_POINTS)?));
    }
    write_atomic(&dir.join("c_asymptotic_level_curves.csv"), &curves_csv(&asymptotic)?)?;

    // right column: three-community mixed membership
    let mm = three_block_mixed_model();
    let (g, latent) = sample_mmsbm(&mm, 5000, seed)?;
    let e = adjacency_spectral_embed(&g, 3)?;
    write_indexed_matrix(&dir.join("d_embedding.csv"), &e.points, "x")?;
    write_provenance(&dir.join("d_memberships.csv"), &latent)?;
    let fit = fit_polytope(&e.points, 3, &MvesOptions { seed, ..Default::default() })?;
    write_indexed_matrix(&dir.join("e_principal_components.csv"), &fit.projection.points, "pc")?;
    write_indexed_matrix(&dir.join("e_simplex.csv"), &fit.vertices, "pc")?;
    let r = estimate_qn_with(&g, &latent.x, latent.signature, EmbeddingKind::Adjacency, AlignmentTolerance::default())?;
    write_indexed_matrix(&dir.join("f_aligned.csv"), &r.aligned_points(), "x")?;
    write_indexed_matrix(&dir.join("f_simplex.csv"), &mm.scaled_vectors(), "x")?;
    write_indexed_matrix(&dir.join("f_fitted_simplex.csv"), &(&fit.lifted * r.q_n.transpose()), "x")?;
    Ok(())
}

fn reproduce_fig5(dir: &Path, seed: u64) -> Result<()> {
    let params = BlockModelParams::new(two_block_matrix() * 10.0, Mixture::Weights(vec![0.2, 0.8]), 1.0)?;
    let window = 300;
    let (log, _) = synthetic_stream(&params, 1000, window, seed)?;
    let task = new_edge_prediction_task(&log, (0, window), (window, 2 * window), seed)?;
    let mut summary = json!({"n": 1000, "d": 2, "pairs": task.pairs.len(), "positives": task.positives()});
    for (mode, name) in [(ScoreMode::Grdpg, "grdpg"), (ScoreMode::Rdpg, "rdpg")] {
        let (_, roc) = evaluate_task(&task, 2, mode)?;
        write_atomic(&dir.join(format!("roc_{name}.csv")), &roc_csv(&roc)?)?;
        summary[format!("auc_{name}")] = json!(roc.auc);
    }
    write_json(&dir.join("summary.json"), &summary)
}

pub fn reproduce(args: &ReproduceArgs) -> Result<()> {
    create_dir(&args.out_dir)?;
    match args.experiment {
        Experiment::Fig1 => reproduce_fig1(&args.out_dir, args.seed),
        Experiment::Fig5Synthetic => reproduce_fig5(&args.out_dir, args.seed),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn windows_parse() {
        assert_eq!(parse_window("0:300"), Ok((0, 300)));
        assert_eq!(parse_window("-5: 7"), Ok((-5, 7)));
        assert!(parse_window("12").is_err());
        assert!(parse_window("a:1").is_err());
    }

    #[test]
    fn level_curve_has_chi_square_radius() {
        let cov = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let pts = level_curve(&[1.0, -1.0], &cov, 0.95, 40).unwrap();
        let cutoff = chi_squared_quantile(2, 0.95).unwrap();
        for p in &pts {
            let m = mahalanobis_squared(p, &[1.0, -1.0], &cov).unwrap();
            assert!((m - cutoff).abs() < 1e-9);
        }
        assert_eq!(pts.first(), pts.last());
    }
}
