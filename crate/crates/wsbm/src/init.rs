//! Starting assignments: absolute-value spectral clustering of the (possibly
//! residual) network, plus the split and merge derivations used by smoothing.
//!
//! The spectral step keeps the Q eigenvectors of the symmetric normalized
//! adjacency whose eigenvalues are largest in absolute value, so both
//! assortative and disassortative block structure is visible to the k-means
//! rounding.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::em::FitResult;
use crate::error::{Error, Result};
use crate::graph::{residual_network, HardPartition, Network, SoftAssignment};
use crate::models::{CovariateMode, ModelSpec};
use crate::mstep::m_step;

/// Isolated nodes get this degree so the normalization stays finite.
const DEGREE_FLOOR: f64 = 1e-10;
const KMEANS_RESTARTS: usize = 10;
const KMEANS_MAX_ITER: usize = 100;

/// Softening used when a hard partition becomes a starting tau.
pub(crate) fn softening_eps(q: usize) -> f64 {
    0.1 / q as f64
}

/// Clusters the nodes by the sign-agnostic top-Q eigenspace of
/// `D^{-1/2} A D^{-1/2}`, rounding with seeded k-means (k-means++ starts,
/// ten restarts, best within-cluster sum kept).
pub fn absolute_spectral_clustering(
    network: &Network,
    q: usize,
    seed: u64,
) -> Result<HardPartition> {
    let n = network.n;
    if q == 0 || q > n {
        return Err(Error::InvalidGroupCount { q, n });
    }
    if q == 1 {
        return Ok(HardPartition::new(vec![0; n], 1));
    }

    let mut a = DMatrix::zeros(n, n);
    for &(i, j, w) in &network.weights {
        let (i, j) = (i as usize, j as usize);
        if network.directed {
            a[(i, j)] += w / 2.0;
            a[(j, i)] += w / 2.0;
        } else {
            a[(i, j)] = w;
            a[(j, i)] = w;
        }
    }

    if network.weights.is_empty() || a.iter().all(|&v| v == 0.0) {
        // nothing to cluster on: hand back a flagged round-robin partition
        let labels = (0..n).map(|i| i % q).collect();
        let mut part = HardPartition::new(labels, q);
        part.degenerate = true;
        return Ok(part);
    }

    // degrees from absolute weights so real-valued networks stay normalizable
    let mut d_inv_sqrt = vec![0.0; n];
    for i in 0..n {
        let deg: f64 = (0..n).map(|j| a[(i, j)].abs()).sum();
        d_inv_sqrt[i] = 1.0 / deg.max(DEGREE_FLOOR).sqrt();
    }
    for i in 0..n {
        for j in 0..n {
            a[(i, j)] *= d_inv_sqrt[i] * d_inv_sqrt[j];
        }
    }

    let eig = a.symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| {
        eig.eigenvalues[y]
            .abs()
            .partial_cmp(&eig.eigenvalues[x].abs())
            .unwrap()
            .then(eig.eigenvalues[y].partial_cmp(&eig.eigenvalues[x]).unwrap())
            .then(x.cmp(&y))
    });

    let mut embedding = DMatrix::zeros(n, q);
    for (col, &k) in order.iter().take(q).enumerate() {
        for i in 0..n {
            embedding[(i, col)] = eig.eigenvectors[(i, k)];
        }
    }
    for i in 0..n {
        let norm: f64 = (0..q).map(|c| embedding[(i, c)].powi(2)).sum::<f64>().sqrt();
        if norm > 1e-300 {
            for c in 0..q {
                embedding[(i, c)] /= norm;
            }
        }
    }

    let labels = kmeans(&embedding, q, seed);
    Ok(HardPartition::new(labels, q))
}

/// Seeded k-means++ with `KMEANS_RESTARTS` restarts; deterministic given the
/// seed, ties between restarts broken toward the earlier restart.
fn kmeans(points: &DMatrix<f64>, k: usize, seed: u64) -> Vec<usize> {
    let mut master = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<(f64, Vec<usize>)> = None;

    for _ in 0..KMEANS_RESTARTS {
        let mut rng = ChaCha8Rng::seed_from_u64(master.random());
        let (labels, wcss) = kmeans_once(points, k, &mut rng);
        if best.as_ref().map_or(true, |(b, _)| wcss < *b) {
            best = Some((wcss, labels));
        }
    }
    best.unwrap().1
}

fn kmeans_once(points: &DMatrix<f64>, k: usize, rng: &mut ChaCha8Rng) -> (Vec<usize>, f64) {
    let n = points.nrows();
    let d = points.ncols();
    let sq_dist = |i: usize, c: &[f64]| -> f64 {
        (0..d).map(|e| (points[(i, e)] - c[e]).powi(2)).sum()
    };

    // k-means++ seeding
    let mut centers: Vec<Vec<f64>> = Vec::with_capacity(k);
    let first = rng.random_range(0..n);
    centers.push((0..d).map(|e| points[(first, e)]).collect());
    let mut dist2: Vec<f64> = (0..n).map(|i| sq_dist(i, &centers[0])).collect();
    while centers.len() < k {
        let total: f64 = dist2.iter().sum();
        let next = if total <= 0.0 {
            // all points coincide with some center; take the first uncovered
            (0..n).find(|&i| dist2[i] > 0.0).unwrap_or(centers.len() % n)
        } else {
            let mut u = rng.random::<f64>() * total;
            let mut pick = n - 1;
            for (i, &w) in dist2.iter().enumerate() {
                if u < w {
                    pick = i;
                    break;
                }
                u -= w;
            }
            pick
        };
        centers.push((0..d).map(|e| points[(next, e)]).collect());
        for i in 0..n {
            dist2[i] = dist2[i].min(sq_dist(i, centers.last().unwrap()));
        }
    }

    let mut labels = vec![0usize; n];
    for _ in 0..KMEANS_MAX_ITER {
        let mut changed = false;
        for i in 0..n {
            let mut best = 0;
            let mut best_d = sq_dist(i, &centers[0]);
            for (c, center) in centers.iter().enumerate().skip(1) {
                let dd = sq_dist(i, center);
                if dd < best_d {
                    best_d = dd;
                    best = c;
                }
            }
            if labels[i] != best {
                labels[i] = best;
                changed = true;
            }
        }

        let mut counts = vec![0usize; k];
        let mut sums = vec![vec![0.0; d]; k];
        for i in 0..n {
            counts[labels[i]] += 1;
            for e in 0..d {
                sums[labels[i]][e] += points[(i, e)];
            }
        }
        for c in 0..k {
            if counts[c] == 0 {
                // claim the point farthest from its current center
                let far = (0..n)
                    .max_by(|&x, &y| {
                        sq_dist(x, &centers[labels[x]])
                            .partial_cmp(&sq_dist(y, &centers[labels[y]]))
                            .unwrap()
                            .then(y.cmp(&x))
                    })
                    .unwrap();
                if sq_dist(far, &centers[labels[far]]) > 0.0 {
                    labels[far] = c;
                    counts[c] = 1;
                    centers[c] = (0..d).map(|e| points[(far, e)]).collect();
                    changed = true;
                }
                continue;
            }
            for e in 0..d {
                centers[c][e] = sums[c][e] / counts[c] as f64;
            }
        }
        if !changed {
            break;
        }
    }

    let wcss: f64 = (0..n).map(|i| sq_dist(i, &centers[labels[i]])).sum();
    (labels, wcss)
}

/// The spectral starting assignment for a fit. Covariate models first
/// regress out the covariate effect with a one-group fit and cluster the
/// residual network; the hard labels are then softened.
pub fn initial_tau(
    network: &Network,
    spec: &ModelSpec,
    q: usize,
    seed: u64,
) -> Result<SoftAssignment> {
    let hard = if spec.uses_covariates() {
        let ones = SoftAssignment::trivial(network.n);
        let out = match m_step(spec, network, &ones, None) {
            Ok(o) => o,
            Err(Error::GlmNonConvergence { best }) => *best,
            Err(e) => return Err(e),
        };
        let beta = out.params.beta_for(0, 0).unwrap().to_vec();
        let residual = residual_network(network, &beta, spec)?;
        absolute_spectral_clustering(&residual, q, seed)?
    } else {
        absolute_spectral_clustering(network, q, seed)?
    };
    Ok(SoftAssignment::from_hard(&hard, softening_eps(q)))
}

/// Ascend reinitialization: split one group of a Q-group result in two by
/// spectral clustering of the induced (residual) subnetwork, keeping every
/// other node in its previous hardened group. The new group takes index Q.
pub fn split_init(
    previous: &FitResult,
    target_group: usize,
    network: &Network,
    seed: u64,
) -> Result<SoftAssignment> {
    let q_prev = previous.q;
    if target_group >= q_prev {
        return Err(Error::InvalidGroupCount { q: target_group, n: q_prev });
    }
    let hard = previous.tau.harden();
    let members = hard.group_members(target_group);
    if members.len() < 2 {
        return Err(Error::UnsplittableGroup {
            group: target_group,
            size: members.len(),
        });
    }

    let base = if previous.spec.uses_covariates() {
        let beta = match previous.spec.covariates {
            CovariateMode::Heterogeneous => previous
                .params
                .beta_for(target_group, target_group)
                .unwrap()
                .to_vec(),
            _ => previous.params.beta_for(0, 0).unwrap().to_vec(),
        };
        residual_network(network, &beta, &previous.spec)?
    } else {
        network.clone()
    };

    let sub_labels = if members.len() == 2 {
        vec![0, 1]
    } else {
        let index_of: std::collections::HashMap<usize, usize> =
            members.iter().enumerate().map(|(k, &node)| (node, k)).collect();
        let mut edges = Vec::new();
        for &(i, j, w) in &base.weights {
            if let (Some(&si), Some(&sj)) = (index_of.get(&(i as usize)), index_of.get(&(j as usize)))
            {
                edges.push((si, sj, w));
            }
        }
        let sub = Network {
            n: members.len(),
            directed: base.directed,
            weights: {
                let mut e = edges;
                e.sort_by_key(|&(i, j, _)| (i, j));
                e.into_iter().map(|(i, j, w)| (i as u32, j as u32, w)).collect()
            },
            covariates: None,
        };
        absolute_spectral_clustering(&sub, 2, seed)?.labels
    };

    let new_q = q_prev + 1;
    let mut labels = hard.labels.clone();
    for (k, &node) in members.iter().enumerate() {
        if sub_labels[k] == 1 {
            labels[node] = q_prev;
        }
    }
    let part = HardPartition::new(labels, new_q);
    Ok(SoftAssignment::from_hard(&part, softening_eps(new_q)))
}

/// Descend reinitialization: merge two groups of a Q-group result by summing
/// their tau columns; group indices are compacted.
pub fn merge_init(previous: &FitResult, group_a: usize, group_b: usize) -> Result<SoftAssignment> {
    let q = previous.q;
    if group_a == group_b || group_a >= q || group_b >= q {
        return Err(Error::InvalidGroupCount { q: group_a.max(group_b), n: q });
    }
    let (lo, hi) = (group_a.min(group_b), group_a.max(group_b));
    let t = previous.tau.matrix();
    let n = t.nrows();
    let mut out = DMatrix::zeros(n, q - 1);
    for i in 0..n {
        let mut c = 0;
        for g in 0..q {
            if g == hi {
                continue;
            }
            let v = if g == lo { t[(i, lo)] + t[(i, hi)] } else { t[(i, g)] };
            out[(i, c)] = v;
            c += 1;
        }
    }
    Ok(SoftAssignment::from_matrix_unchecked(out))
}
