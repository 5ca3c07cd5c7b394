//! Link prediction from spectral embeddings of a time-windowed edge log.

use std::collections::HashMap;
use std::io::BufRead;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::embed::{spectral_embed, Embedding, EmbeddingKind};
use crate::error::{Error, Result};
use crate::graph::SymmetricGraph;
use crate::linalg::Selection;
use crate::model::{sample_grdpg, sample_sbm, BlockModelParams};

/// Candidate pairs beyond this count are subsampled.
pub const MAX_CANDIDATES: usize = 5_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EdgeRecord {
    pub time: i64,
    pub src: usize,
    pub dst: usize,
}

/// Timestamped contacts over a dense node index.
#[derive(Debug, Clone, Default)]
pub struct TemporalEdgeLog {
    records: Vec<EdgeRecord>,
    ids: Vec<String>,
}

impl TemporalEdgeLog {
    /// Records over nodes `0..n` named by their index.
    pub fn from_records(n: usize, mut records: Vec<EdgeRecord>) -> Result<Self> {
        if let Some(r) = records.iter().find(|r| r.src >= n || r.dst >= n) {
            return Err(Error::InvalidInput(format!("record ({}, {}) outside 0..{n}", r.src, r.dst)));
        }
        records.sort_by_key(|r| r.time);
        Ok(TemporalEdgeLog { records, ids: (0..n).map(|i| i.to_string()).collect() })
    }

    /// Reads `time<TAB>src<TAB>dst` lines; ids are arbitrary strings mapped
    /// to indices in order of first appearance. Blank and `#` lines are skipped.
    pub fn parse<R: BufRead>(reader: R) -> Result<Self> {
        let mut lookup: HashMap<String, usize> = HashMap::new();
        let mut ids = Vec::new();
        let mut records = Vec::new();
        for (k, line) in reader.lines().enumerate() {
            let line = line?;
            let lineno = k + 1;
            let trimmed = line.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = trimmed.split('\t').collect();
            if fields.len() != 3 {
                return Err(Error::Parse { line: lineno, msg: format!("expected 3 tab-separated fields, got {}", fields.len()) });
            }
            let time = fields[0]
                .trim()
                .parse::<i64>()
                .map_err(|e| Error::Parse { line: lineno, msg: format!("bad timestamp `{}`: {e}", fields[0]) })?;
            let mut index_of = |name: &str| -> usize {
                let name = name.trim().to_string();
                if let Some(&i) = lookup.get(&name) {
                    return i;
                }
                let i = ids.len();
                lookup.insert(name.clone(), i);
                ids.push(name);
                i
            };
            let src = index_of(fields[1]);
            let dst = index_of(fields[2]);
            records.push(EdgeRecord { time, src, dst });
        }
        records.sort_by_key(|r| r.time);
        Ok(TemporalEdgeLog { records, ids })
    }

    pub fn n(&self) -> usize {
        self.ids.len()
    }

    pub fn records(&self) -> &[EdgeRecord] {
        &self.records
    }

    pub fn node_id(&self, i: usize) -> &str {
        &self.ids[i]
    }

    /// Records with `t0 <= time < t1`.
    pub fn window(&self, t0: i64, t1: i64) -> &[EdgeRecord] {
        let lo = self.records.partition_point(|r| r.time < t0);
        let hi = self.records.partition_point(|r| r.time < t1);
        &self.records[lo..hi.max(lo)]
    }
}

/// Undirected simple graph of contacts in `[t0, t1)` over every node of the log.
pub fn window_graph(log: &TemporalEdgeLog, t0: i64, t1: i64) -> Result<SymmetricGraph> {
    if t0 >= t1 {
        return Err(Error::InvalidInput(format!("empty time window [{t0}, {t1})")));
    }
    let edges: Vec<(usize, usize)> =
        log.window(t0, t1).iter().filter(|r| r.src != r.dst).map(|r| (r.src, r.dst)).collect();
    if edges.is_empty() {
        log::warn!("no contacts in window [{t0}, {t1})");
    }
    SymmetricGraph::from_edges(log.n(), edges)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScoreMode {
    /// Indefinite inner product with the embedding's signature.
    Grdpg,
    /// Euclidean inner product of a positive-eigenvalue embedding.
    Rdpg,
}

impl std::str::FromStr for ScoreMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "grdpg" | "indefinite" => Ok(ScoreMode::Grdpg),
            "rdpg" | "positive" => Ok(ScoreMode::Rdpg),
            other => Err(Error::InvalidInput(format!("unknown score mode `{other}`"))),
        }
    }
}

/// Embedding used for each scoring mode.
pub fn embed_for_mode(graph: &SymmetricGraph, d: usize, mode: ScoreMode) -> Result<Embedding> {
    let sel = match mode {
        ScoreMode::Grdpg => Selection::Magnitude(d),
        ScoreMode::Rdpg => Selection::PositiveAlgebraic(d),
    };
    spectral_embed(graph, EmbeddingKind::Adjacency, sel)
}

pub fn score_pairs(embedding: &Embedding, pairs: &[(usize, usize)], mode: ScoreMode) -> Result<Vec<f64>> {
    let n = embedding.n();
    if let Some(&(i, j)) = pairs.iter().find(|&&(i, j)| i >= n || j >= n) {
        return Err(Error::InvalidInput(format!("pair ({i}, {j}) outside 0..{n}")));
    }
    let sig = embedding.signature;
    let signs: Vec<f64> = match mode {
        ScoreMode::Grdpg => (0..sig.d()).map(|j| sig.sign(j)).collect(),
        ScoreMode::Rdpg => {
            if sig.q > 0 {
                return Err(Error::InvalidInput(
                    "positive-only scores need an embedding without negative eigenvalues".into(),
                ));
            }
            vec![1.0; sig.d()]
        }
    };
    let x = &embedding.points;
    Ok(pairs
        .par_iter()
        .map(|&(i, j)| (0..signs.len()).map(|c| signs[c] * x[(i, c)] * x[(j, c)]).sum())
        .collect())
}

/// Pairs of training nodes to classify, with the graph they are embedded from.
#[derive(Debug, Clone)]
pub struct PredictionTask {
    /// Training graph on the active nodes only.
    pub train: SymmetricGraph,
    /// Log index of each training node.
    pub nodes: Vec<usize>,
    /// Unordered candidate pairs in training-node indices, `i < j`.
    pub pairs: Vec<(usize, usize)>,
    /// Whether each pair appears in the test window.
    pub labels: Vec<bool>,
}

impl PredictionTask {
    pub fn positives(&self) -> usize {
        self.labels.iter().filter(|&&l| l).count()
    }
}

fn pair_from_linear(k: usize, n: usize, row: &mut usize, row_start: &mut usize) -> (usize, usize) {
    // rows of the strict upper triangle, row i holds n - 1 - i pairs
    while k >= *row_start + (n - 1 - *row) {
        *row_start += n - 1 - *row;
        *row += 1;
    }
    (*row, *row + 1 + (k - *row_start))
}

/// New-edge prediction between two windows: nodes are those with a contact
/// in the training window, candidates are their unordered non-adjacent pairs,
/// and a candidate is positive when it appears in the test window. Nodes first
/// seen in the test window are ignored.
pub fn new_edge_prediction_task(
    log: &TemporalEdgeLog,
    train: (i64, i64),
    test: (i64, i64),
    seed: u64,
) -> Result<PredictionTask> {
    let full = window_graph(log, train.0, train.1)?;
    let test_graph = window_graph(log, test.0, test.1)?;
    if train.0 < test.1 && test.0 < train.1 {
        log::warn!("training and test windows overlap");
    }
    let nodes: Vec<usize> = (0..full.n()).filter(|&i| full.degree(i) > 0).collect();
    let a = nodes.len();
    let train_graph = full.induced(&nodes)?;
    let total = a * a.saturating_sub(1) / 2;
    let candidates = total - train_graph.edge_count();
    if candidates == 0 {
        return Err(Error::EmptyTask("training window leaves no unlinked node pairs".into()));
    }
    let mut pairs = Vec::with_capacity(candidates.min(MAX_CANDIDATES));
    if candidates <= MAX_CANDIDATES {
        for i in 0..a {
            for j in i + 1..a {
                if !train_graph.has_edge(i, j) {
                    pairs.push((i, j));
                }
            }
        }
    } else {
        log::warn!("subsampling {MAX_CANDIDATES} of {candidates} candidate pairs");
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let draw = (MAX_CANDIDATES + train_graph.edge_count()).min(total);
        let mut picks = index::sample(&mut rng, total, draw).into_vec();
        picks.sort_unstable();
        let (mut row, mut start) = (0, 0);
        for k in picks {
            let (i, j) = pair_from_linear(k, a, &mut row, &mut start);
            if !train_graph.has_edge(i, j) {
                pairs.push((i, j));
                if pairs.len() == MAX_CANDIDATES {
                    break;
                }
            }
        }
    }
    let labels = pairs.iter().map(|&(i, j)| test_graph.has_edge(nodes[i], nodes[j])).collect();
    Ok(PredictionTask { train: train_graph, nodes, pairs, labels })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RocResult {
    /// Score threshold reached at each curve point (`inf` for the origin).
    pub thresholds: Vec<f64>,
    pub fpr: Vec<f64>,
    pub tpr: Vec<f64>,
    pub auc: f64,
}

/// ROC curve sweeping the threshold down through the distinct scores; equal
/// scores move together, so ties contribute a diagonal segment.
pub fn roc_curve(scores: &[f64], labels: &[bool]) -> Result<RocResult> {
    if scores.len() != labels.len() {
        return Err(Error::DimensionMismatch { expected: labels.len(), got: scores.len() });
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::InvalidInput("NaN score".into()));
    }
    let pos = labels.iter().filter(|&&l| l).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::UndefinedAuc(format!("{pos} positive and {neg} negative labels")));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut thresholds = vec![f64::INFINITY];
    let mut fpr = vec![0.0];
    let mut tpr = vec![0.0];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut auc = 0.0;
    let mut k = 0;
    while k < order.len() {
        let s = scores[order[k]];
        let (tp0, fp0) = (tp, fp);
        while k < order.len() && scores[order[k]] == s {
            if labels[order[k]] {
                tp += 1;
            } else {
                fp += 1;
            }
            k += 1;
        }
        auc += (fp - fp0) as f64 * (tp + tp0) as f64 / 2.0;
        thresholds.push(s);
        fpr.push(fp as f64 / neg as f64);
        tpr.push(tp as f64 / pos as f64);
    }
    Ok(RocResult { thresholds, fpr, tpr, auc: auc / (pos as f64 * neg as f64) })
}

/// Scores a task with an embedding of its training graph.
pub fn evaluate_task(task: &PredictionTask, d: usize, mode: ScoreMode) -> Result<(Embedding, RocResult)> {
    let embedding = embed_for_mode(&task.train, d, mode)?;
    let scores = score_pairs(&embedding, &task.pairs, mode)?;
    let roc = roc_curve(&scores, &task.labels)?;
    Ok((embedding, roc))
}

/// Two windows `[0, window)` and `[window, 2 window)` of independent graphs
/// drawn from the same block model and community assignment.
pub fn synthetic_stream(params: &BlockModelParams, n: usize, window: i64, seed: u64) -> Result<(TemporalEdgeLog, Vec<usize>)> {
    if window <= 0 {
        return Err(Error::InvalidInput("window length must be positive".into()));
    }
    let (first, latent) = sample_sbm(params, n, seed)?;
    let second = sample_grdpg(&latent.x, latent.signature, seed ^ 0x9e37_79b9_7f4a_7c15)?;
    let mut records = Vec::with_capacity(first.edge_count() + second.edge_count());
    for (w, g) in [(0, &first), (1, &second)] {
        records.extend(g.edges().map(|(i, j)| EdgeRecord { time: w * window, src: i, dst: j }));
    }
    let labels = latent.labels().expect("block model sample has labels").to_vec();
    Ok((TemporalEdgeLog::from_records(n, records)?, labels))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{edge_probability_matrix, givens_rotation, hyperbolic_rotation, two_block_matrix, Mixture};
    use crate::Signature;
    use nalgebra::DMatrix;
    use proptest::prelude::*;

    fn concordance(scores: &[f64], labels: &[bool]) -> f64 {
        let mut acc = 0.0;
        let mut count = 0.0;
        for (i, &li) in labels.iter().enumerate() {
            for (j, &lj) in labels.iter().enumerate() {
                if li && !lj {
                    count += 1.0;
                    acc += if scores[i] > scores[j] {
                        1.0
                    } else if scores[i] == scores[j] {
                        0.5
                    } else {
                        0.0
                    };
                }
            }
        }
        acc / count
    }

    fn log_of(lines: &str) -> TemporalEdgeLog {
        TemporalEdgeLog::parse(lines.as_bytes()).unwrap()
    }

    #[test]
    fn parse_and_windows() {
        let log = log_of("# header\n5\ta\tb\n1\tb\ta\n7\tc\ta\n\n9\ta\tb\n");
        assert_eq!(log.n(), 3);
        assert_eq!(log.node_id(0), "a");
        let times: Vec<i64> = log.records().iter().map(|r| r.time).collect();
        assert_eq!(times, vec![1, 5, 7, 9]);
        let g = window_graph(&log, 0, 6).unwrap();
        assert_eq!(g.edge_count(), 1);
        assert!(g.has_edge(0, 1));
        let h = window_graph(&log, 6, 10).unwrap();
        assert_eq!(h.edge_count(), 2);
        assert_eq!(h.n(), 3);
        assert_eq!(window_graph(&log, 20, 30).unwrap().edge_count(), 0);
        assert!(window_graph(&log, 3, 3).is_err());
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let err = TemporalEdgeLog::parse("1\ta\tb\nx\ta\tb\n".as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }));
        let err = TemporalEdgeLog::parse("1\ta\n".as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }));
    }

    #[test]
    fn single_record_gives_one_edge() {
        let log = log_of("0\tx\ty\n");
        assert_eq!(window_graph(&log, 0, 1).unwrap().edge_count(), 1);
    }

    #[test]
    fn roc_examples() {
        let r = roc_curve(&[0.9, 0.8, 0.1, 0.0], &[true, true, false, false]).unwrap();
        assert_eq!(r.auc, 1.0);
        let r = roc_curve(&[0.5; 6], &[true, false, true, false, false, true]).unwrap();
        assert_eq!(r.auc, 0.5);
        assert_eq!(r.fpr, vec![0.0, 1.0]);
        assert!(matches!(roc_curve(&[1.0, 2.0], &[true, true]), Err(Error::UndefinedAuc(_))));
        let scores: Vec<f64> = (0..11).map(|i| (i as f64 * 1.7).sin()).collect();
        let mut sorted = scores.clone();
        sorted.sort_by(f64::total_cmp);
        let median = sorted[5];
        let labels: Vec<bool> = scores.iter().map(|&s| s > median).collect();
        assert_eq!(roc_curve(&scores, &labels).unwrap().auc, 1.0);
        assert_eq!(concordance(&scores, &labels), 1.0);
    }

    proptest! {
        #[test]
        fn auc_is_concordance(
            raw in prop::collection::vec((0u8..6, any::<bool>()), 2..200)
        ) {
            let scores: Vec<f64> = raw.iter().map(|&(s, _)| s as f64 * 0.25).collect();
            let mut labels: Vec<bool> = raw.iter().map(|&(_, l)| l).collect();
            labels[0] = true;
            labels[1] = false;
            let r = roc_curve(&scores, &labels).unwrap();
            prop_assert!((r.auc - concordance(&scores, &labels)).abs() < 1e-12);
            prop_assert!(r.fpr.windows(2).all(|w| w[0] <= w[1]));
            prop_assert!(r.tpr.windows(2).all(|w| w[0] <= w[1]));
            prop_assert_eq!(*r.fpr.last().unwrap(), 1.0);
            prop_assert_eq!(*r.tpr.last().unwrap(), 1.0);
        }

        #[test]
        fn indefinite_scores_are_group_invariant(t in -2.0f64..2.0, theta in -1.5f64..1.5, seed in 0u64..1000) {
            let sig = Signature::new(1, 2);
            let x = DMatrix::from_fn(12, 3, |i, c| ((i * 3 + c) as f64 + seed as f64).sin());
            let emb = Embedding { points: x.clone(), signature: sig, eigenvalues: vec![1.0, -1.0, -1.0], kind: EmbeddingKind::Adjacency };
            let m = &hyperbolic_rotation(sig, 0, 1, theta).unwrap() * &givens_rotation(sig, 1, 2, t).unwrap();
            let moved = Embedding { points: &x * m.transpose(), ..emb.clone() };
            let pairs: Vec<(usize, usize)> = (0..12).flat_map(|i| (i..12).map(move |j| (i, j))).collect();
            let a = score_pairs(&emb, &pairs, ScoreMode::Grdpg).unwrap();
            let b = score_pairs(&moved, &pairs, ScoreMode::Grdpg).unwrap();
            for (u, v) in a.iter().zip(&b) {
                prop_assert!((u - v).abs() < 1e-9 * (1.0 + u.abs()));
            }
        }
    }

    #[test]
    fn score_examples() {
        let x = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 0.3, -0.2]);
        let null = Embedding { points: x.clone(), signature: Signature::new(1, 1), eigenvalues: vec![1.0, -1.0], kind: EmbeddingKind::Adjacency };
        assert_eq!(score_pairs(&null, &[(0, 0)], ScoreMode::Grdpg).unwrap(), vec![0.0]);
        assert!(score_pairs(&null, &[(0, 0)], ScoreMode::Rdpg).is_err());
        assert!(score_pairs(&null, &[(0, 2)], ScoreMode::Grdpg).is_err());
        let pos = Embedding { signature: Signature::new(2, 0), eigenvalues: vec![1.0, 0.5], ..null };
        let pairs = [(0, 1), (1, 1)];
        assert_eq!(
            score_pairs(&pos, &pairs, ScoreMode::Grdpg).unwrap(),
            score_pairs(&pos, &pairs, ScoreMode::Rdpg).unwrap()
        );
    }

    #[test]
    fn noise_free_scores_are_probabilities() {
        let b = two_block_matrix() * 10.0;
        let params = BlockModelParams::new(b, Mixture::Weights(vec![0.2, 0.8]), 1.0).unwrap();
        let (_, latent) = sample_sbm(&params, 60, 3).unwrap();
        let p = edge_probability_matrix(&latent.x, latent.signature).unwrap();
        let emb = crate::embed::embed_matrix(&p, Selection::Magnitude(2)).unwrap();
        let pairs: Vec<(usize, usize)> = (0..60).flat_map(|i| (i + 1..60).map(move |j| (i, j))).collect();
        let s = score_pairs(&emb, &pairs, ScoreMode::Grdpg).unwrap();
        for (&(i, j), v) in pairs.iter().zip(s) {
            assert!((v - p[(i, j)]).abs() < 1e-8);
        }
    }

    #[test]
    fn identical_windows_have_no_new_edges() {
        let log = log_of("0\ta\tb\n0\tb\tc\n0\tc\td\n");
        let task = new_edge_prediction_task(&log, (0, 1), (0, 1), 0).unwrap();
        assert_eq!(task.pairs.len(), 3);
        assert_eq!(task.positives(), 0);
    }

    #[test]
    fn empty_train_window_is_an_empty_task() {
        let log = log_of("5\ta\tb\n");
        assert!(matches!(new_edge_prediction_task(&log, (0, 5), (5, 6), 0), Err(Error::EmptyTask(_))));
        let pair = log_of("0\ta\tb\n1\ta\tb\n");
        assert!(matches!(new_edge_prediction_task(&pair, (0, 1), (1, 2), 0), Err(Error::EmptyTask(_))));
    }

    #[test]
    fn new_nodes_are_dropped_and_labels_follow_test_window() {
        let log = log_of("0\ta\tb\n0\tc\td\n1\ta\tc\n1\tb\te\n1\ta\tb\n");
        let task = new_edge_prediction_task(&log, (0, 1), (1, 2), 0).unwrap();
        assert_eq!(task.nodes.len(), 4);
        assert_eq!(task.pairs.len(), 4);
        let named: Vec<(String, String, bool)> = task
            .pairs
            .iter()
            .zip(&task.labels)
            .map(|(&(i, j), &l)| (log.node_id(task.nodes[i]).into(), log.node_id(task.nodes[j]).into(), l))
            .collect();
        assert!(named.contains(&("a".into(), "c".into(), true)));
        assert_eq!(task.positives(), 1);
    }

    #[test]
    fn linear_pair_indexing() {
        let n = 6;
        let (mut row, mut start) = (0, 0);
        let got: Vec<_> = (0..15).map(|k| pair_from_linear(k, n, &mut row, &mut start)).collect();
        let want: Vec<_> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
        assert_eq!(got, want);
    }

    #[test]
    fn synthetic_prevalence_matches_block_rates() {
        let b = two_block_matrix() * 10.0;
        let params = BlockModelParams::new(b.clone(), Mixture::Weights(vec![0.2, 0.8]), 1.0).unwrap();
        let (log, z) = synthetic_stream(&params, 400, 300, 11).unwrap();
        let task = new_edge_prediction_task(&log, (0, 300), (300, 600), 0).unwrap();
        let (mut mean, mut var) = (0.0, 0.0);
        for &(i, j) in &task.pairs {
            let p = b[(z[task.nodes[i]], z[task.nodes[j]])];
            mean += p;
            var += p * (1.0 - p);
        }
        let got = task.positives() as f64;
        assert!((got - mean).abs() < 4.0 * var.sqrt(), "{got} vs {mean} ± {}", var.sqrt());
    }

    #[test]
    fn disassortative_stream_favours_indefinite_scores() {
        let params = BlockModelParams::new(two_block_matrix() * 10.0, Mixture::Weights(vec![0.2, 0.8]), 1.0).unwrap();
        let (log, _) = synthetic_stream(&params, 300, 300, 2).unwrap();
        let task = new_edge_prediction_task(&log, (0, 300), (300, 600), 0).unwrap();
        let (_, g) = evaluate_task(&task, 2, ScoreMode::Grdpg).unwrap();
        let (_, r) = evaluate_task(&task, 2, ScoreMode::Rdpg).unwrap();
        assert!(g.auc > r.auc, "{} vs {}", g.auc, r.auc);
    }
}
