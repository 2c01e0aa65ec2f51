use std::collections::BTreeMap;

use log::{debug, warn};
use rayon::prelude::*;

use super::anchors::{cosine, ortho_anchors, AnchorSet};
use super::codebook::{CodeBook, LevelInfo, SidTable, TreeNode};
use super::hungarian::hungarian;
use super::kmeans::{balanced_kmeans, kmeans, Points};
use super::{Method, QuantizeError, QuantizerConfig};
use crate::data::EmbeddingMatrix;
use crate::rng::stream_rng;

const TREE_STREAM: u64 = 1;
const ANCHOR_STREAM: u64 = 2;
const RQ_STREAM: u64 = 3;

/// Last-level codes of one prefix, zero-residual matches, and duplicate groups.
type LeafCodes = (Vec<usize>, usize, Vec<Vec<usize>>);

/// Output of a quantizer run.
#[derive(Debug, Clone)]
pub struct Quantization {
    pub codebook: CodeBook,
    pub sids: SidTable,
    /// Groups of items (row indices, ascending) with identical embeddings that share a prefix
    /// and were told apart only by last-level order.
    pub duplicates: Vec<Vec<usize>>,
}

/// One child cluster of a parent node.
#[derive(Debug, Clone, PartialEq)]
pub struct Child {
    /// Item rows, ascending.
    pub members: Vec<usize>,
    pub centroid: Vec<f64>,
    pub code: usize,
}

/// Branching factors `(b_1, b_2)` with `b_1 ~ b_2` and `b_1 * b_2 ~ n / 15`.
pub fn default_branching(n: usize) -> Vec<usize> {
    let target = (n as f64 / 15.0).max(4.0);
    let b1 = target.sqrt().round().max(2.0) as usize;
    let b2 = (target / b1 as f64).round().max(2.0) as usize;
    vec![b1, b2]
}

fn embedding_points(emb: &EmbeddingMatrix) -> Points {
    Points::new(emb.values().iter().map(|&v| f64::from(v)).collect(), emb.dim())
}

/// Splits `members` into `min(b, |members|)` balanced clusters, numbered in k-means order.
pub fn partition_children(
    points: &Points,
    members: &[usize],
    b: usize,
    iters: usize,
    rng: &mut impl rand::Rng,
) -> Result<Vec<Child>, QuantizeError> {
    if members.is_empty() {
        return Err(QuantizeError::InvalidInput("cannot split an empty node".into()));
    }
    let b_eff = b.min(members.len());
    let local = points.gather(members);
    let clustering = balanced_kmeans(&local, b_eff, iters, rng)?;
    Ok(clustering
        .members()
        .into_iter()
        .enumerate()
        .map(|(c, idx)| Child {
            members: idx.into_iter().map(|i| members[i]).collect(),
            centroid: clustering.centroids.row(c).to_vec(),
            code: c,
        })
        .collect())
}

/// Matches centered child centroids to anchors by maximum total cosine. Returns each child's
/// anchor index and how many residuals were zero (matched on an all-zero similarity row).
pub fn align_to_anchors(
    parent_centroid: &[f64],
    child_centroids: &[&[f64]],
    anchors: &AnchorSet,
) -> Result<(Vec<usize>, usize), QuantizeError> {
    let mut zero = 0;
    let sims: Vec<Vec<f64>> = child_centroids
        .iter()
        .map(|c| {
            let residual: Vec<f64> = c.iter().zip(parent_centroid).map(|(x, p)| x - p).collect();
            if residual.iter().all(|&r| r == 0.0) {
                zero += 1;
            }
            anchors.vectors.iter().map(|a| cosine(&residual, a)).collect()
        })
        .collect();
    let assignment = hungarian(&sims, true)?;
    Ok((assignment.columns, zero))
}

/// Splits one parent into balanced children and labels each with an anchor index.
pub fn gaoq_level(
    points: &Points,
    parent_members: &[usize],
    parent_centroid: &[f64],
    b: usize,
    iters: usize,
    anchors: &AnchorSet,
    rng: &mut impl rand::Rng,
) -> Result<Vec<Child>, QuantizeError> {
    let mut children = partition_children(points, parent_members, b, iters, rng)?;
    let zero = relabel(&mut children, parent_centroid, anchors)?;
    if zero > 0 {
        warn!("{zero} child residual(s) have zero norm; matched on zero similarity");
    }
    Ok(children)
}

fn relabel(children: &mut [Child], parent_centroid: &[f64], anchors: &AnchorSet) -> Result<usize, QuantizeError> {
    let centroids: Vec<&[f64]> = children.iter().map(|c| c.centroid.as_slice()).collect();
    let (codes, zero) = align_to_anchors(parent_centroid, &centroids, anchors)?;
    children.iter_mut().zip(codes).for_each(|(c, code)| c.code = code);
    Ok(zero)
}

pub fn quantize(emb: &EmbeddingMatrix, config: &QuantizerConfig) -> Result<Quantization, QuantizeError> {
    match config.method {
        Method::Gaoq => quantize_gaoq(emb, config),
        Method::HkmeansLocal => quantize_hkmeans_local(emb, config),
        Method::RqKmeans => quantize_rq_kmeans(emb, config),
    }
}

pub fn quantize_gaoq(emb: &EmbeddingMatrix, config: &QuantizerConfig) -> Result<Quantization, QuantizeError> {
    build_tree(emb, config, true)
}

pub fn quantize_hkmeans_local(emb: &EmbeddingMatrix, config: &QuantizerConfig) -> Result<Quantization, QuantizeError> {
    build_tree(emb, config, false)
}

fn check_input(emb: &EmbeddingMatrix, config: &QuantizerConfig) -> Result<(), QuantizeError> {
    config.validate()?;
    if emb.dim() == 0 {
        return Err(QuantizeError::InvalidInput("embeddings have dimension 0".into()));
    }
    if emb.rows() < config.branching[0] {
        return Err(QuantizeError::TooFewPoints {
            points: emb.rows(),
            clusters: config.branching[0],
        });
    }
    Ok(())
}

fn build_tree(emb: &EmbeddingMatrix, config: &QuantizerConfig, aligned: bool) -> Result<Quantization, QuantizeError> {
    check_input(emb, config)?;
    let points = embedding_points(emb);
    let n = points.len();
    let dim = points.dim();
    let prefix_levels = config.branching.len();

    let mut nodes = vec![TreeNode {
        level: 0,
        parent: None,
        centroid: points.mean(),
        code: 0,
        members: (0..n).collect(),
        size: n,
    }];
    let mut levels = Vec::with_capacity(prefix_levels + 1);
    let mut frontier: Vec<usize> = vec![0];

    for l in 0..prefix_levels {
        let level = l + 1;
        let b = config.branching[l];
        let anchors = (aligned && l > 0).then(|| {
            let g = config.anchors_at(l);
            ortho_anchors(g, dim, &mut stream_rng(config.seed, &[ANCHOR_STREAM, level as u64]))
        });
        let results: Vec<Result<Vec<Child>, QuantizeError>> = frontier
            .par_iter()
            .enumerate()
            .map(|(ordinal, &p)| {
                let parent = &nodes[p];
                let mut rng = stream_rng(config.seed, &[TREE_STREAM, level as u64, ordinal as u64]);
                let mut children = partition_children(&points, &parent.members, b, config.iters, &mut rng)?;
                if let Some(anchors) = &anchors {
                    let zero = relabel(&mut children, &parent.centroid, anchors)?;
                    if zero > 0 {
                        warn!("level {level}: {zero} child residual(s) have zero norm; matched on zero similarity");
                    }
                }
                Ok(children)
            })
            .collect();
        let mut next = Vec::new();
        for (&p, children) in frontier.iter().zip(results) {
            for child in children? {
                next.push(nodes.len());
                nodes.push(TreeNode {
                    level,
                    parent: Some(p),
                    size: child.members.len(),
                    centroid: child.centroid,
                    code: child.code,
                    members: child.members,
                });
            }
        }
        let alphabet_size = anchors.as_ref().map_or(b, AnchorSet::len);
        debug!("level {level}: {} nodes", next.len());
        levels.push(LevelInfo {
            level,
            branching: Some(b),
            alphabet_size,
            anchors,
            centroids: None,
        });
        frontier = next;
    }

    // Last level: every item is its own child under its prefix.
    let last = prefix_levels + 1;
    let max_population = frontier.iter().map(|&p| nodes[p].size).max().unwrap_or(1);
    let capacity = config.last_level_anchors.unwrap_or(max_population);
    let prefix_of = |mut p: usize| {
        let mut codes = Vec::with_capacity(prefix_levels);
        while let Some(parent) = nodes[p].parent {
            codes.push(nodes[p].code);
            p = parent;
        }
        codes.reverse();
        codes
    };
    if let Some(&p) = frontier.iter().find(|&&p| nodes[p].size > capacity) {
        let items = nodes[p].members.iter().map(|&i| emb.row_tokens()[i].clone()).collect();
        return Err(QuantizeError::Capacity {
            prefix: prefix_of(p),
            population: nodes[p].size,
            capacity,
            items,
        });
    }
    let last_anchors = aligned.then(|| {
        ortho_anchors(
            capacity,
            dim,
            &mut stream_rng(config.seed, &[ANCHOR_STREAM, last as u64]),
        )
    });

    let leaf_results: Vec<Result<LeafCodes, QuantizeError>> = frontier
        .par_iter()
        .map(|&p| {
            let parent = &nodes[p];
            let members = &parent.members;
            let Some(anchors) = &last_anchors else {
                return Ok(((0..members.len()).collect(), 0, Vec::new()));
            };
            let rows: Vec<&[f64]> = members.iter().map(|&i| points.row(i)).collect();
            let (mut codes, zero) = align_to_anchors(&parent.centroid, &rows, anchors)?;
            let dups = duplicate_groups(&rows);
            for group in &dups {
                let mut assigned: Vec<usize> = group.iter().map(|&j| codes[j]).collect();
                assigned.sort_unstable();
                for (&j, code) in group.iter().zip(assigned) {
                    codes[j] = code;
                }
            }
            let dups = dups
                .into_iter()
                .map(|g| g.into_iter().map(|j| members[j]).collect())
                .collect();
            Ok((codes, zero, dups))
        })
        .collect();

    let mut sid_codes = vec![Vec::new(); n];
    let mut duplicates = Vec::new();
    let mut zero_total = 0;
    for (&p, result) in frontier.iter().zip(leaf_results) {
        let (codes, zero, dups) = result?;
        zero_total += zero;
        duplicates.extend(dups);
        let prefix = prefix_of(p);
        for (&item, code) in nodes[p].members.iter().zip(codes) {
            let mut c = prefix.clone();
            c.push(code);
            sid_codes[item] = c;
        }
    }
    if zero_total > 0 {
        debug!("last level: {zero_total} singleton prefix(es) matched on zero residual");
    }
    if !duplicates.is_empty() {
        warn!(
            "{} group(s) of duplicate embeddings separated by item order",
            duplicates.len()
        );
    }
    levels.push(LevelInfo {
        level: last,
        branching: None,
        alphabet_size: capacity,
        anchors: last_anchors,
        centroids: None,
    });

    let alphabet_sizes: Vec<usize> = levels.iter().map(|l| l.alphabet_size).collect();
    let sids = SidTable::new(emb.row_tokens().to_vec(), sid_codes, alphabet_sizes)?;
    Ok(Quantization {
        codebook: CodeBook {
            method: if aligned { Method::Gaoq } else { Method::HkmeansLocal },
            dim,
            levels,
            nodes,
        },
        sids,
        duplicates,
    })
}

/// Groups of local indices (size >= 2, ascending) whose rows are bitwise identical.
fn duplicate_groups(rows: &[&[f64]]) -> Vec<Vec<usize>> {
    let mut groups: BTreeMap<Vec<u64>, Vec<usize>> = BTreeMap::new();
    for (j, r) in rows.iter().enumerate() {
        groups
            .entry(r.iter().map(|v| v.to_bits()).collect())
            .or_default()
            .push(j);
    }
    let mut out: Vec<Vec<usize>> = groups.into_values().filter(|g| g.len() > 1).collect();
    out.sort();
    out
}

/// Residual k-means: level `l` clusters the residuals left by levels `< l` with standard
/// k-means; a final counter level numbers items sharing all earlier codes in item order.
pub fn quantize_rq_kmeans(emb: &EmbeddingMatrix, config: &QuantizerConfig) -> Result<Quantization, QuantizeError> {
    check_input(emb, config)?;
    let mut residuals = embedding_points(emb);
    let n = residuals.len();
    let dim = residuals.dim();
    let mut codes: Vec<Vec<usize>> = vec![Vec::with_capacity(config.branching.len() + 1); n];
    let mut levels = Vec::with_capacity(config.branching.len() + 1);
    for (l, &b) in config.branching.iter().enumerate() {
        let level = l + 1;
        if n < b {
            return Err(QuantizeError::TooFewPoints { points: n, clusters: b });
        }
        let mut rng = stream_rng(config.seed, &[RQ_STREAM, level as u64]);
        let clustering = kmeans(&residuals, b, config.iters, &mut rng)?;
        for (i, &c) in clustering.labels.iter().enumerate() {
            codes[i].push(c);
            let centroid = clustering.centroids.row(c);
            residuals.row_mut(i).iter_mut().zip(centroid).for_each(|(r, m)| *r -= m);
        }
        levels.push(LevelInfo {
            level,
            branching: Some(b),
            alphabet_size: b,
            anchors: None,
            centroids: Some(clustering.centroids.rows().map(<[f64]>::to_vec).collect()),
        });
    }
    let mut counters: BTreeMap<Vec<usize>, usize> = BTreeMap::new();
    for c in codes.iter_mut() {
        let k = counters.entry(c.clone()).or_insert(0);
        c.push(*k);
        *k += 1;
    }
    let widest = counters.values().copied().max().unwrap_or(1);
    levels.push(LevelInfo {
        level: config.branching.len() + 1,
        branching: None,
        alphabet_size: widest,
        anchors: None,
        centroids: None,
    });
    let alphabet_sizes = levels.iter().map(|l| l.alphabet_size).collect();
    let sids = SidTable::new(emb.row_tokens().to_vec(), codes, alphabet_sizes)?;
    Ok(Quantization {
        codebook: CodeBook {
            method: Method::RqKmeans,
            dim,
            levels,
            nodes: Vec::new(),
        },
        sids,
        duplicates: Vec::new(),
    })
}

/// `sum_i |z_i - sum_l centroid_l(c_il)|^2` for an RQ-KMeans codebook.
pub fn rq_reconstruction_error(emb: &EmbeddingMatrix, codebook: &CodeBook, sids: &SidTable) -> f64 {
    let points = embedding_points(emb);
    points
        .rows()
        .zip(&sids.codes)
        .map(|(z, c)| {
            let mut r = z.to_vec();
            for (level, &code) in codebook.levels.iter().zip(c) {
                if let Some(centroids) = &level.centroids {
                    r.iter_mut().zip(&centroids[code]).for_each(|(x, m)| *x -= m);
                }
            }
            r.iter().map(|x| x * x).sum::<f64>()
        })
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn matrix(rows: &[Vec<f64>]) -> EmbeddingMatrix {
        EmbeddingMatrix::from_rows_f64(rows).unwrap()
    }

    fn pairs_data() -> EmbeddingMatrix {
        // Four well-separated pairs; pair-mates differ slightly.
        let centers = [[10.0, 0.0], [-10.0, 0.0], [0.0, 10.0], [0.0, -10.0]];
        let rows: Vec<Vec<f64>> = centers
            .iter()
            .flat_map(|c| [vec![c[0] + 0.1, c[1]], vec![c[0] - 0.1, c[1] + 0.05]])
            .collect();
        matrix(&rows)
    }

    #[test]
    fn branching_heuristic() {
        assert_eq!(default_branching(15 * 400), vec![20, 20]);
        let b = default_branching(10_000);
        let prod = (b[0] * b[1]) as f64;
        assert!((prod - 10_000.0 / 15.0).abs() / (10_000.0 / 15.0) < 0.1, "{b:?}");
        assert!(default_branching(3).iter().all(|&b| b >= 2));
    }

    #[test]
    fn pairs_share_prefixes() {
        let emb = pairs_data();
        for method in [Method::Gaoq, Method::HkmeansLocal] {
            let q = quantize(&emb, &QuantizerConfig::new(method, vec![2, 2], 7)).unwrap();
            assert!(q.sids.all_unique());
            assert_eq!(q.sids.num_levels(), 3);
            for pair in 0..4 {
                let (a, b) = (&q.sids.codes[2 * pair], &q.sids.codes[2 * pair + 1]);
                assert_eq!(a[..2], b[..2], "{method}: pair {pair}");
            }
        }
    }

    #[test]
    fn single_level_config() {
        let emb = matrix(&[vec![0.0], vec![5.0], vec![10.0]]);
        let q = quantize_gaoq(&emb, &QuantizerConfig::new(Method::Gaoq, vec![3], 1)).unwrap();
        let mut first: Vec<usize> = q.sids.codes.iter().map(|c| c[0]).collect();
        first.sort_unstable();
        assert_eq!(first, vec![0, 1, 2]);
        assert!(q.sids.codes.iter().all(|c| c[1] == 0));
    }

    #[test]
    fn deterministic_across_runs() {
        let mut rng = stream_rng(5, &[]);
        let rows: Vec<Vec<f64>> = (0..300)
            .map(|_| (0..6).map(|_| rng.sample(StandardNormal)).collect())
            .collect();
        let emb = matrix(&rows);
        for method in [Method::Gaoq, Method::HkmeansLocal, Method::RqKmeans] {
            let cfg = QuantizerConfig::new(method, vec![4, 3], 11);
            let a = quantize(&emb, &cfg).unwrap();
            let b = quantize(&emb, &cfg).unwrap();
            assert_eq!(a.sids.to_tsv(), b.sids.to_tsv());
            assert_eq!(a.codebook.to_json(), b.codebook.to_json());
            assert!(a.sids.all_unique());
        }
    }

    #[test]
    fn gaoq_and_local_share_partitions() {
        let mut rng = stream_rng(9, &[]);
        let rows: Vec<Vec<f64>> = (0..200)
            .map(|_| (0..4).map(|_| rng.sample(StandardNormal)).collect())
            .collect();
        let emb = matrix(&rows);
        let g = quantize_gaoq(&emb, &QuantizerConfig::new(Method::Gaoq, vec![4, 5], 3)).unwrap();
        let h = quantize_hkmeans_local(&emb, &QuantizerConfig::new(Method::HkmeansLocal, vec![4, 5], 3)).unwrap();
        let members =
            |q: &Quantization| -> Vec<Vec<usize>> { q.codebook.nodes.iter().map(|n| n.members.clone()).collect() };
        assert_eq!(members(&g), members(&h));
        assert_eq!(g.sids.column(0), h.sids.column(0));
    }

    #[test]
    fn mirrored_parents_get_same_anchor() {
        // Two parents far apart, each with children at parent +/- v.
        let v = [0.6, 0.8, 0.0];
        let mut rows = Vec::new();
        for parent in [[50.0, 0.0, 0.0], [-50.0, 0.0, 0.0]] {
            for sign in [1.0, -1.0] {
                for k in 0..3 {
                    let jitter = 0.01 * k as f64;
                    rows.push(vec![
                        parent[0] + sign * v[0] + jitter,
                        parent[1] + sign * v[1],
                        parent[2] + jitter,
                    ]);
                }
            }
        }
        let emb = matrix(&rows);
        for seed in 0..10 {
            let q = quantize_gaoq(&emb, &QuantizerConfig::new(Method::Gaoq, vec![2, 2], seed)).unwrap();
            // Items 0..3 are +v under parent A, 6..9 are +v under parent B.
            assert_eq!(q.sids.codes[0][1], q.sids.codes[6][1], "seed {seed}");
            assert_eq!(q.sids.codes[3][1], q.sids.codes[9][1], "seed {seed}");
            assert_ne!(q.sids.codes[0][1], q.sids.codes[3][1]);
        }
    }

    #[test]
    fn exact_anchor_residuals_match_identity() {
        let anchors = ortho_anchors(3, 3, &mut stream_rng(4, &[]));
        let parent = [1.0, 2.0, 3.0];
        let children: Vec<Vec<f64>> = anchors
            .vectors
            .iter()
            .map(|a| a.iter().zip(&parent).map(|(x, p)| x + p).collect())
            .collect();
        let refs: Vec<&[f64]> = children.iter().map(Vec::as_slice).collect();
        let (codes, zero) = align_to_anchors(&parent, &refs, &anchors).unwrap();
        assert_eq!(codes, vec![0, 1, 2]);
        assert_eq!(zero, 0);
    }

    #[test]
    fn single_child_takes_best_anchor() {
        let anchors = AnchorSet {
            vectors: vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![-1.0, 0.0]],
            max_abs_cos: 1.0,
        };
        let (codes, _) = align_to_anchors(&[0.0, 0.0], &[&[-2.0, 0.5]], &anchors).unwrap();
        assert_eq!(codes, vec![2]);
    }

    #[test]
    fn duplicates_ordered_by_item() {
        let rows = vec![
            vec![1.0, 1.0],
            vec![1.0, 1.0],
            vec![1.0, 1.0],
            vec![-5.0, 0.0],
            vec![-5.0, 0.1],
            vec![-5.1, 0.0],
        ];
        let emb = matrix(&rows);
        let q = quantize_gaoq(&emb, &QuantizerConfig::new(Method::Gaoq, vec![2], 0)).unwrap();
        assert!(q.sids.all_unique());
        assert_eq!(q.duplicates, vec![vec![0, 1, 2]]);
        let last: Vec<usize> = (0..3).map(|i| q.sids.codes[i][1]).collect();
        assert!(last.windows(2).all(|w| w[0] < w[1]), "{last:?}");
    }

    #[test]
    fn fixed_last_level_too_small_names_items() {
        let rows = vec![vec![0.0], vec![0.0], vec![0.0], vec![9.0]];
        let emb = matrix(&rows);
        let mut cfg = QuantizerConfig::new(Method::Gaoq, vec![2], 0);
        cfg.last_level_anchors = Some(1);
        let err = quantize_gaoq(&emb, &cfg).unwrap_err().to_string();
        assert!(err.contains("\"0\"") && err.contains("\"1\""), "{err}");
    }

    #[test]
    fn config_validation() {
        let mut cfg = QuantizerConfig::new(Method::Gaoq, vec![4, 1], 0);
        assert!(cfg.validate().is_err());
        cfg.branching = vec![4, 4];
        cfg.anchors = Some(vec![3]);
        assert!(cfg.validate().is_err());
        cfg.anchors = Some(vec![6]);
        cfg.validate().unwrap();
        cfg.iters = 0;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn rq_zero_residual_collapse() {
        let rows = vec![vec![0.0, 0.0], vec![0.0, 0.0], vec![10.0, 0.0], vec![10.0, 0.0]];
        let emb = matrix(&rows);
        let q = quantize_rq_kmeans(&emb, &QuantizerConfig::new(Method::RqKmeans, vec![2, 2], 1)).unwrap();
        // All residuals are zero after level 1, so level 2 uses one code.
        let l2: std::collections::BTreeSet<usize> = q.sids.column(1).into_iter().collect();
        assert_eq!(l2.len(), 1);
        assert!(q.sids.all_unique());
        assert_eq!(rq_reconstruction_error(&emb, &q.codebook, &q.sids), 0.0);
    }

    #[test]
    fn rq_full_codebook_is_lossless() {
        let rows = vec![vec![0.0, 1.0], vec![3.0, 0.0], vec![-2.0, 2.0]];
        let emb = matrix(&rows);
        let q = quantize_rq_kmeans(&emb, &QuantizerConfig::new(Method::RqKmeans, vec![3], 1)).unwrap();
        assert!(rq_reconstruction_error(&emb, &q.codebook, &q.sids) < 1e-12);
    }

    #[test]
    fn rq_error_non_increasing_in_depth() {
        let mut rng = stream_rng(2, &[]);
        let rows: Vec<Vec<f64>> = (0..400)
            .map(|_| (0..5).map(|_| rng.sample(StandardNormal)).collect())
            .collect();
        let emb = matrix(&rows);
        let mut prev = f64::INFINITY;
        for depth in 1..=5 {
            let cfg = QuantizerConfig::new(Method::RqKmeans, vec![4; depth], 8);
            let q = quantize_rq_kmeans(&emb, &cfg).unwrap();
            let err = rq_reconstruction_error(&emb, &q.codebook, &q.sids);
            assert!(err <= prev + 1e-9, "depth {depth}: {err} > {prev}");
            prev = err;
        }
    }

    #[test]
    fn codebook_json_round_trip() {
        let q = quantize_gaoq(&pairs_data(), &QuantizerConfig::new(Method::Gaoq, vec![2, 2], 7)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("cb.json");
        q.codebook.write_json(&p).unwrap();
        let back = CodeBook::read_json(&p).unwrap();
        assert_eq!(back.levels, q.codebook.levels);
        assert_eq!(back.nodes.len(), q.codebook.nodes.len());
        assert_eq!(back.method, Method::Gaoq);
    }
}
