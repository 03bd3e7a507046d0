//! Preview selection: greedy relevance-diversity sampling with a routing
//! gate that falls back to duration-scaled temporal clustering when no
//! candidate matches the query well.
//!
//! Relevance is the cosine between a frame embedding and the query
//! embedding. The greedy rule picks the relevance argmax first, then
//! repeatedly the candidate maximizing
//!
//! ```text
//! score(i) = r_i * prod over selected j of (1 - exp(-alpha * |t_i - t_j|))
//! ```
//!
//! so a candidate at an already-covered timestamp scores exactly zero.
//! All ties resolve by earliest timestamp, then lowest index, which keeps
//! every selection reproducible.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::types::{Embedding, FrameRef, KeyframeSet, PipelineConfig, Query, SamplingMode};

/// A candidate frame with its query relevance, in [-1, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredCandidate {
    pub frame: FrameRef,
    pub relevance: f64,
}

/// Route chosen by the max-activation gate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RoutingDecision {
    /// At least one candidate matches the query well; pick greedily.
    Local,
    /// No reliable local anchor; cover the timeline by clustering.
    Global,
}

/// Preview plus the routing information that produced it.
#[derive(Debug, Clone)]
pub struct PreviewSelection {
    pub keyframes: KeyframeSet,
    pub routing: RoutingDecision,
    pub max_relevance: f64,
}

/// Scores every candidate against the query, preserving order.
pub fn relevance_scores(
    candidates: &[(FrameRef, Embedding)],
    query: &Query,
) -> Result<Vec<ScoredCandidate>> {
    candidates
        .iter()
        .map(|(frame, embedding)| {
            Ok(ScoredCandidate {
                frame: frame.clone(),
                relevance: embedding.dot(&query.embedding)?,
            })
        })
        .collect()
}

/// Diagnostic objective: total relevance minus a pairwise temporal
/// proximity penalty. The greedy rule below does not maximize this
/// exactly; it exists for audits and traces.
pub fn objective_value(
    selection: &[ScoredCandidate],
    alpha: f64,
    lambda_d: f64,
) -> Result<f64> {
    if selection.is_empty() {
        return Err(Error::EmptyCandidates);
    }
    let relevance: f64 = selection.iter().map(|c| c.relevance).sum();
    let mut penalty = 0.0;
    for i in 0..selection.len() {
        for j in (i + 1)..selection.len() {
            let gap = (selection[i].frame.timestamp_sec - selection[j].frame.timestamp_sec).abs();
            penalty += (-alpha * gap).exp();
        }
    }
    Ok(relevance - lambda_d * penalty)
}

/// `true` if `a` wins the deterministic tie-break against `b`.
pub fn breaks_tie(a: &FrameRef, b: &FrameRef) -> bool {
    match a.timestamp_sec.total_cmp(&b.timestamp_sec) {
        std::cmp::Ordering::Less => true,
        std::cmp::Ordering::Greater => false,
        std::cmp::Ordering::Equal => a.index < b.index,
    }
}

/// Greedy relevance-diversity selection of `k` frames.
///
/// The first pick is the relevance argmax; each later pick maximizes
/// relevance times the product of `1 - exp(-alpha * gap)` factors against
/// everything already selected.
pub fn greedy_select(
    candidates: &[ScoredCandidate],
    k: usize,
    alpha: f64,
) -> Result<KeyframeSet> {
    if candidates.is_empty() {
        return Err(Error::EmptyCandidates);
    }
    if k < 1 || k > candidates.len() {
        return Err(Error::InvalidBudget {
            k,
            n: candidates.len(),
        });
    }

    let n = candidates.len();
    let mut taken = vec![false; n];
    // Running product of diversity factors against the selection so far.
    let mut weight = vec![1.0_f64; n];
    let mut picked = Vec::with_capacity(k);

    for step in 0..k {
        let mut best: Option<(usize, f64)> = None;
        for i in 0..n {
            if taken[i] {
                continue;
            }
            let score = if step == 0 {
                candidates[i].relevance
            } else {
                candidates[i].relevance * weight[i]
            };
            best = match best {
                None => Some((i, score)),
                Some((bi, bs)) => {
                    if score > bs
                        || (score == bs && breaks_tie(&candidates[i].frame, &candidates[bi].frame))
                    {
                        Some((i, score))
                    } else {
                        Some((bi, bs))
                    }
                }
            };
        }
        let (choice, _) = best.expect("k <= candidate count leaves a free candidate");
        taken[choice] = true;
        let t_sel = candidates[choice].frame.timestamp_sec;
        for i in 0..n {
            if !taken[i] {
                let gap = (candidates[i].frame.timestamp_sec - t_sel).abs();
                weight[i] *= 1.0 - (-alpha * gap).exp();
            }
        }
        picked.push(candidates[choice].frame.clone());
    }

    KeyframeSet::new(picked, SamplingMode::RelevanceDiversity)
}

/// Max-activation routing: global iff the best relevance is strictly
/// below `tau_global`.
pub fn global_gate(scores: &[ScoredCandidate], tau_global: f64) -> Result<RoutingDecision> {
    let max = max_relevance(scores)?;
    Ok(if max < tau_global {
        RoutingDecision::Global
    } else {
        RoutingDecision::Local
    })
}

fn max_relevance(scores: &[ScoredCandidate]) -> Result<f64> {
    scores
        .iter()
        .map(|c| c.relevance)
        .reduce(f64::max)
        .ok_or(Error::EmptyCandidates)
}

/// Duration-scaled cluster count: one cluster per `seconds_per_cluster`
/// of video, at least `k_base`, capped at `cluster_cap`.
pub fn cluster_count(duration_sec: f64, config: &PipelineConfig) -> Result<usize> {
    if duration_sec.is_nan() || duration_sec <= 0.0 {
        return Err(Error::NonPositiveDuration(duration_sec));
    }
    let per_duration = (duration_sec / f64::from(config.seconds_per_cluster)).ceil();
    let scaled = if per_duration >= config.cluster_cap as f64 {
        config.cluster_cap
    } else {
        per_duration as usize
    };
    Ok(scaled.max(config.k_base).min(config.cluster_cap))
}

/// Seeded k-means over candidate embeddings; emits the member nearest
/// each non-empty cluster's centroid.
///
/// Initialization is k-means++ (squared-distance weighting), assignment
/// uses Euclidean distance, and iteration stops after 100 rounds or when
/// no centroid moves more than 1e-6. Empty clusters are dropped, so the
/// output may hold fewer than `k` frames.
pub fn cluster_select(
    candidates: &[(FrameRef, Embedding)],
    k: usize,
    seed: u64,
) -> Result<KeyframeSet> {
    if candidates.is_empty() {
        return Err(Error::EmptyCandidates);
    }
    if k < 1 || k > candidates.len() {
        return Err(Error::InvalidBudget {
            k,
            n: candidates.len(),
        });
    }

    let n = candidates.len();
    let dim = candidates[0].1.dim();
    for (_, e) in candidates {
        if e.dim() != dim {
            return Err(Error::DimMismatch {
                left: dim,
                right: e.dim(),
            });
        }
    }
    let points: Vec<&[f32]> = candidates.iter().map(|(_, e)| e.values()).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids: Vec<Vec<f64>> = Vec::with_capacity(k);
    let first = rng.random_range(0..n);
    centroids.push(points[first].iter().map(|&v| f64::from(v)).collect());

    // k-means++: weight each point by squared distance to its nearest
    // chosen centroid. A zero total means every point coincides with a
    // centroid; further centroids would duplicate, so stop early.
    let mut weights = vec![0.0_f64; n];
    while centroids.len() < k {
        let mut total = 0.0;
        for (i, p) in points.iter().enumerate() {
            let d = centroids
                .iter()
                .map(|c| squared_distance_mixed(p, c))
                .fold(f64::INFINITY, f64::min);
            weights[i] = d;
            total += d;
        }
        if total <= 0.0 || !total.is_finite() {
            break;
        }
        let draw = rng.random::<f64>() * total;
        let mut acc = 0.0;
        let mut chosen = None;
        for (i, &w) in weights.iter().enumerate() {
            if w <= 0.0 {
                continue;
            }
            acc += w;
            if draw < acc {
                chosen = Some(i);
                break;
            }
            chosen = Some(i);
        }
        let idx = chosen.expect("positive total weight has a positive entry");
        centroids.push(points[idx].iter().map(|&v| f64::from(v)).collect());
    }

    let k_eff = centroids.len();
    let mut assignment = vec![0_usize; n];
    for _ in 0..100 {
        for (i, p) in points.iter().enumerate() {
            let mut best = 0;
            let mut best_d = f64::INFINITY;
            for (c, centroid) in centroids.iter().enumerate() {
                let d = squared_distance_mixed(p, centroid);
                if d < best_d {
                    best_d = d;
                    best = c;
                }
            }
            assignment[i] = best;
        }

        let mut shift: f64 = 0.0;
        for (c, centroid) in centroids.iter_mut().enumerate() {
            let members: Vec<usize> = (0..n).filter(|&i| assignment[i] == c).collect();
            if members.is_empty() {
                continue;
            }
            let mut mean = vec![0.0_f64; dim];
            for &i in &members {
                for (d, &v) in points[i].iter().enumerate() {
                    mean[d] += f64::from(v);
                }
            }
            let inv = 1.0 / members.len() as f64;
            for v in &mut mean {
                *v *= inv;
            }
            shift = shift.max(
                centroid
                    .iter()
                    .zip(&mean)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt(),
            );
            *centroid = mean;
        }
        if shift < 1e-6 {
            break;
        }
    }

    let mut picked = Vec::new();
    for (c, centroid) in centroids.iter().enumerate().take(k_eff) {
        let mut representative: Option<(usize, f64)> = None;
        for i in (0..n).filter(|&i| assignment[i] == c) {
            let d = squared_distance_mixed(points[i], centroid);
            representative = match representative {
                None => Some((i, d)),
                Some((bi, bd)) => {
                    if d < bd
                        || (d == bd && breaks_tie(&candidates[i].0, &candidates[bi].0))
                    {
                        Some((i, d))
                    } else {
                        Some((bi, bd))
                    }
                }
            };
        }
        if let Some((i, _)) = representative {
            picked.push(candidates[i].0.clone());
        }
    }

    KeyframeSet::new(picked, SamplingMode::TemporalClustering)
}

fn squared_distance_mixed(p: &[f32], c: &[f64]) -> f64 {
    p.iter()
        .zip(c)
        .map(|(&x, &y)| {
            let d = f64::from(x) - y;
            d * d
        })
        .sum()
}

/// Thins a frame pool to one frame per integer second: timestamps are
/// rounded half-up, the first frame per distinct second wins.
pub fn one_fps_pool(candidates: &[(FrameRef, Embedding)]) -> Vec<(FrameRef, Embedding)> {
    let mut seen = std::collections::HashSet::new();
    candidates
        .iter()
        .filter(|(frame, _)| seen.insert((frame.timestamp_sec + 0.5).floor() as i64))
        .cloned()
        .collect()
}

/// Full preview construction: score, route, and select.
///
/// Local route: greedy selection with budget `min(k_base, pool size)`.
/// Global route: k-means with the duration-scaled cluster count, clamped
/// to the pool size.
pub fn sample_preview(
    candidates: &[(FrameRef, Embedding)],
    query: &Query,
    duration_sec: f64,
    config: &PipelineConfig,
) -> Result<PreviewSelection> {
    if candidates.is_empty() {
        return Err(Error::EmptyCandidates);
    }
    let scores = relevance_scores(candidates, query)?;
    let max_relevance = max_relevance(&scores)?;
    let routing = global_gate(&scores, config.tau_global)?;
    let keyframes = match routing {
        RoutingDecision::Local => {
            let k = config.k_base.min(candidates.len());
            greedy_select(&scores, k, config.alpha)?
        }
        RoutingDecision::Global => {
            let k = cluster_count(duration_sec, config)?.min(candidates.len());
            cluster_select(candidates, k, config.rng_seed)?
        }
    };
    Ok(PreviewSelection {
        keyframes,
        routing,
        max_relevance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn frame(index: u32, timestamp_sec: f64) -> FrameRef {
        FrameRef {
            source_id: "pool".into(),
            index,
            timestamp_sec,
            payload_offset: 0,
            payload_len: 0,
        }
    }

    fn scored(index: u32, timestamp_sec: f64, relevance: f64) -> ScoredCandidate {
        ScoredCandidate {
            frame: frame(index, timestamp_sec),
            relevance,
        }
    }

    fn unit_query(values: Vec<f32>) -> Query {
        Query::new("q", Embedding::normalized(values).unwrap()).unwrap()
    }

    #[test]
    fn relevance_of_identical_and_orthogonal_vectors() {
        let e1 = Embedding::normalized(vec![1.0, 0.0]).unwrap();
        let e2 = Embedding::normalized(vec![0.0, 1.0]).unwrap();
        let query = unit_query(vec![1.0, 0.0]);
        let scores = relevance_scores(
            &[(frame(0, 0.0), e1), (frame(1, 1.0), e2)],
            &query,
        )
        .unwrap();
        assert_abs_diff_eq!(scores[0].relevance, 1.0, epsilon = 1e-9);
        assert_abs_diff_eq!(scores[1].relevance, 0.0, epsilon = 1e-9);
    }

    #[test]
    fn relevance_hand_checked_dot_product() {
        let e = Embedding::normalized(vec![0.6, 0.8]).unwrap();
        let query = unit_query(vec![1.0, 0.0]);
        let scores = relevance_scores(&[(frame(0, 0.0), e)], &query).unwrap();
        // oracle: 0.6 * 1.0 + 0.8 * 0.0
        assert_abs_diff_eq!(scores[0].relevance, 0.6, epsilon = 1e-7);
    }

    #[test]
    fn relevance_dim_mismatch_names_both_dims() {
        let e = Embedding::normalized(vec![1.0, 0.0, 0.0]).unwrap();
        let query = unit_query(vec![1.0, 0.0]);
        assert!(matches!(
            relevance_scores(&[(frame(0, 0.0), e)], &query),
            Err(Error::DimMismatch { left: 3, right: 2 })
        ));
    }

    #[test]
    fn objective_single_frame_has_no_penalty() {
        let v = objective_value(&[scored(0, 3.0, 0.9)], 0.5, 1.0).unwrap();
        assert_abs_diff_eq!(v, 0.9, epsilon = 1e-12);
    }

    #[test]
    fn objective_same_timestamp_pays_full_penalty() {
        let v = objective_value(&[scored(0, 5.0, 0.9), scored(1, 5.0, 0.8)], 0.5, 1.0).unwrap();
        assert_abs_diff_eq!(v, 0.7, epsilon = 1e-12);
    }

    #[test]
    fn objective_distant_pair() {
        let v = objective_value(&[scored(0, 0.0, 0.9), scored(1, 10.0, 0.8)], 0.5, 1.0).unwrap();
        assert_abs_diff_eq!(v, 1.7 - (-5.0_f64).exp(), epsilon = 1e-12);
    }

    #[test]
    fn greedy_k1_is_relevance_argmax() {
        let cands = [scored(0, 0.0, 0.2), scored(1, 5.0, 0.9), scored(2, 9.0, 0.4)];
        let set = greedy_select(&cands, 1, 0.5).unwrap();
        assert_eq!(set.frames()[0].index, 1);
    }

    #[test]
    fn greedy_prefers_distant_peak_over_near_higher_relevance() {
        // second pick: 0.8 * (1 - e^-10) beats 0.5 * (1 - e^-5)
        let cands = [scored(0, 0.0, 0.9), scored(1, 10.0, 0.5), scored(2, 20.0, 0.8)];
        let set = greedy_select(&cands, 2, 0.5).unwrap();
        let idx: Vec<u32> = set.frames().iter().map(|f| f.index).collect();
        assert_eq!(idx, vec![0, 2]);
    }

    #[test]
    fn greedy_duplicate_timestamp_scores_zero_and_tie_breaks_by_index() {
        let cands = [scored(0, 5.0, 0.9), scored(1, 5.0, 0.8), scored(2, 5.0, 0.7)];
        let set = greedy_select(&cands, 2, 0.5).unwrap();
        // every remaining score is exactly zero; earliest index wins
        let idx: Vec<u32> = set.frames().iter().map(|f| f.index).collect();
        assert_eq!(idx, vec![0, 1]);
    }

    #[test]
    fn greedy_rejects_bad_budgets() {
        let cands = [scored(0, 0.0, 0.5)];
        assert!(matches!(
            greedy_select(&cands, 0, 0.5),
            Err(Error::InvalidBudget { k: 0, n: 1 })
        ));
        assert!(matches!(
            greedy_select(&cands, 2, 0.5),
            Err(Error::InvalidBudget { k: 2, n: 1 })
        ));
    }

    #[test]
    fn gate_routes_by_strict_threshold() {
        let high = [scored(0, 0.0, 0.9)];
        let low = [scored(0, 0.0, 0.10)];
        let at = [scored(0, 0.0, 0.25)];
        assert_eq!(global_gate(&high, 0.25).unwrap(), RoutingDecision::Local);
        assert_eq!(global_gate(&low, 0.25).unwrap(), RoutingDecision::Global);
        // equality does not switch: the rule is strictly-below
        assert_eq!(global_gate(&at, 0.25).unwrap(), RoutingDecision::Local);
    }

    #[test]
    fn cluster_count_table() {
        let config = PipelineConfig::default();
        assert_eq!(cluster_count(30.0, &config).unwrap(), 8);
        assert_eq!(cluster_count(600.0, &config).unwrap(), 10);
        assert_eq!(cluster_count(7200.0, &config).unwrap(), 32);
        assert!(matches!(
            cluster_count(0.0, &config),
            Err(Error::NonPositiveDuration(_))
        ));
    }

    #[test]
    fn cluster_select_singletons_when_k_equals_n() {
        let cands: Vec<(FrameRef, Embedding)> = (0..4)
            .map(|i| {
                let mut v = vec![0.0_f32; 4];
                v[i as usize] = 1.0;
                (frame(i, f64::from(i)), Embedding::normalized(v).unwrap())
            })
            .collect();
        let set = cluster_select(&cands, 4, 7).unwrap();
        assert_eq!(set.len(), 4);
        assert_eq!(set.mode(), SamplingMode::TemporalClustering);
    }

    #[test]
    fn cluster_select_two_separated_groups() {
        // group A hugs (1, 0), group B hugs (0, 1)
        let mk = |i: u32, t: f64, v: Vec<f32>| (frame(i, t), Embedding::normalized(v).unwrap());
        let cands = vec![
            mk(0, 0.0, vec![1.0, 0.05]),
            mk(1, 1.0, vec![1.0, -0.05]),
            mk(2, 2.0, vec![0.95, 0.0]),
            mk(3, 30.0, vec![0.05, 1.0]),
            mk(4, 31.0, vec![-0.05, 1.0]),
            mk(5, 32.0, vec![0.0, 0.95]),
        ];
        let set = cluster_select(&cands, 2, 0).unwrap();
        assert_eq!(set.len(), 2);
        let idx: Vec<u32> = set.frames().iter().map(|f| f.index).collect();
        // one representative per group: oracle below checks the exact pair
        assert!(idx[0] <= 2 && idx[1] >= 3, "one frame from each group: {idx:?}");

        // oracle: exhaustive 2-partition minimizing within-cluster sum of
        // squares, then the member nearest each group mean
        let pts: Vec<&[f32]> = cands.iter().map(|(_, e)| e.values()).collect();
        let mut best: Option<(f64, Vec<usize>)> = None;
        for mask in 1..(1_u32 << pts.len()) - 1 {
            let (mut a, mut b) = (Vec::new(), Vec::new());
            for i in 0..pts.len() {
                if mask & (1 << i) != 0 {
                    a.push(i);
                } else {
                    b.push(i);
                }
            }
            let wcss = |group: &[usize]| -> f64 {
                let dim = pts[0].len();
                let mut mean = vec![0.0_f64; dim];
                for &i in group {
                    for d in 0..dim {
                        mean[d] += f64::from(pts[i][d]);
                    }
                }
                for v in &mut mean {
                    *v /= group.len() as f64;
                }
                group
                    .iter()
                    .map(|&i| {
                        pts[i]
                            .iter()
                            .zip(&mean)
                            .map(|(&x, m)| (f64::from(x) - m) * (f64::from(x) - m))
                            .sum::<f64>()
                    })
                    .sum()
            };
            let cost = wcss(&a) + wcss(&b);
            if best.as_ref().is_none_or(|(c, _)| cost < *c) {
                let nearest = |group: &[usize]| -> usize {
                    let dim = pts[0].len();
                    let mut mean = vec![0.0_f64; dim];
                    for &i in group {
                        for d in 0..dim {
                            mean[d] += f64::from(pts[i][d]);
                        }
                    }
                    for v in &mut mean {
                        *v /= group.len() as f64;
                    }
                    *group
                        .iter()
                        .min_by(|&&i, &&j| {
                            let di: f64 = pts[i]
                                .iter()
                                .zip(&mean)
                                .map(|(&x, m)| (f64::from(x) - m) * (f64::from(x) - m))
                                .sum();
                            let dj: f64 = pts[j]
                                .iter()
                                .zip(&mean)
                                .map(|(&x, m)| (f64::from(x) - m) * (f64::from(x) - m))
                                .sum();
                            di.total_cmp(&dj)
                        })
                        .unwrap()
                };
                let mut reps = vec![nearest(&a), nearest(&b)];
                reps.sort_unstable();
                best = Some((cost, reps));
            }
        }
        let expected: Vec<u32> = best.unwrap().1.iter().map(|&i| cands[i].0.index).collect();
        assert_eq!(idx, expected);
    }

    #[test]
    fn cluster_select_collapses_identical_embeddings() {
        let e = Embedding::normalized(vec![1.0, 0.0]).unwrap();
        let cands = vec![(frame(0, 0.0), e.clone()), (frame(1, 1.0), e)];
        let set = cluster_select(&cands, 2, 3).unwrap();
        assert_eq!(set.len(), 1);
    }

    #[test]
    fn cluster_select_is_deterministic() {
        let cands: Vec<(FrameRef, Embedding)> = (0..20)
            .map(|i| {
                let angle = f64::from(i) * 0.37;
                let v = vec![angle.cos() as f32, angle.sin() as f32];
                (frame(i, f64::from(i)), Embedding::normalized(v).unwrap())
            })
            .collect();
        let a = cluster_select(&cands, 5, 42).unwrap();
        let b = cluster_select(&cands, 5, 42).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn one_fps_pool_keeps_first_frame_per_second() {
        let e = Embedding::normalized(vec![1.0]).unwrap();
        let cands: Vec<(FrameRef, Embedding)> = [0.0, 0.25, 0.5, 1.0, 1.25, 2.0]
            .iter()
            .enumerate()
            .map(|(i, &t)| (frame(i as u32, t), e.clone()))
            .collect();
        let pool = one_fps_pool(&cands);
        // 0.5 rounds half-up to second 1, so it claims that slot before 1.0
        let idx: Vec<u32> = pool.iter().map(|(f, _)| f.index).collect();
        assert_eq!(idx, vec![0, 2, 5]);
    }

    #[test]
    fn preview_routes_local_on_strong_match() {
        let query = unit_query(vec![1.0, 0.0]);
        let cands: Vec<(FrameRef, Embedding)> = (0..12)
            .map(|i| {
                let v = if i == 3 { vec![1.0, 0.0] } else { vec![0.1, 1.0] };
                (frame(i, f64::from(i)), Embedding::normalized(v).unwrap())
            })
            .collect();
        let preview =
            sample_preview(&cands, &query, 12.0, &PipelineConfig::default()).unwrap();
        assert_eq!(preview.routing, RoutingDecision::Local);
        assert_eq!(preview.keyframes.mode(), SamplingMode::RelevanceDiversity);
        assert_eq!(preview.keyframes.len(), 8);
        assert!(preview.max_relevance > 0.9);
    }

    #[test]
    fn preview_routes_global_on_flat_scores() {
        let query = unit_query(vec![1.0, 0.0, 0.0]);
        let cands: Vec<(FrameRef, Embedding)> = (0..700)
            .map(|i| {
                let angle = f64::from(i) * 0.1;
                let v = vec![0.0, angle.cos() as f32, angle.sin() as f32];
                (frame(i, f64::from(i)), Embedding::normalized(v).unwrap())
            })
            .collect();
        let preview = sample_preview(&cands, &query, 600.0, &PipelineConfig::default()).unwrap();
        assert_eq!(preview.routing, RoutingDecision::Global);
        assert_eq!(preview.keyframes.mode(), SamplingMode::TemporalClustering);
        assert!(preview.keyframes.len() <= 10, "len {}", preview.keyframes.len());
    }

    #[test]
    fn preview_clamps_budget_to_pool_size() {
        let query = unit_query(vec![1.0, 0.0]);
        let cands: Vec<(FrameRef, Embedding)> = (0..5)
            .map(|i| (frame(i, f64::from(i)), Embedding::normalized(vec![1.0, 0.0]).unwrap()))
            .collect();
        let preview = sample_preview(&cands, &query, 5.0, &PipelineConfig::default()).unwrap();
        assert_eq!(preview.keyframes.len(), 5);
    }
}
