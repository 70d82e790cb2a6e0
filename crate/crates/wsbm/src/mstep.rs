//! Parameter maximization given soft memberships.
//!
//! Without covariates every update is closed-form: `alpha` from tau column
//! means, connectivity from tau-weighted dyad means, `sigma2` from the pooled
//! weighted mean squared residual. With covariates the `(connectivity, beta)`
//! pair is fitted by Newton-Raphson with step halving on the tau-weighted
//! log-likelihood: log-link Poisson regression, linear regression for the
//! Gaussian family, and projected Newton for the product-form Bernoulli laws
//! (box constraint `pi_ql` in `[0, 1]`).

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::graph::{dyad_index, Network, SoftAssignment};
use crate::models::{dot, logistic, CovariateMode, Family, ModelSpec, Parameters};

/// A group is effectively empty when its tau mass falls below `1e-8 * n`.
const GROUP_FLOOR_PER_NODE: f64 = 1e-8;
/// Block weight mass below this freezes the block at its previous value.
const BLOCK_MASS_FLOOR: f64 = 1e-12;
const NEWTON_MAX_ITER: usize = 50;
const NEWTON_REL_TOL: f64 = 1e-6;
const SIGMA2_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct MStepOutcome {
    pub params: Parameters,
    /// Set when a group was effectively empty (or a block carried no mass)
    /// and its parameters were frozen instead of re-estimated.
    pub degenerate: bool,
}

/// Maximizes the variational objective over parameters, holding tau fixed.
pub fn m_step(
    spec: &ModelSpec,
    network: &Network,
    tau: &SoftAssignment,
    warm_start: Option<&Parameters>,
) -> Result<MStepOutcome> {
    let n = network.n;
    if tau.n() != n {
        return Err(Error::DimensionMismatch { what: "tau rows", expected: n, got: tau.n() });
    }
    let q = tau.q();
    let t = tau.matrix();

    let mut alpha = vec![0.0; q];
    for g in 0..q {
        let mut s = 0.0;
        for i in 0..n {
            s += t[(i, g)];
        }
        alpha[g] = s / n as f64;
    }
    let group_mass: Vec<f64> = alpha.iter().map(|a| a * n as f64).collect();
    let mut degenerate = group_mass.iter().any(|&s| s < GROUP_FLOOR_PER_NODE * n as f64);

    let params = if spec.uses_covariates() {
        let blocks = canonical_blocks(q, network.directed);
        let data = DyadGlmData::build(network, tau, &blocks);
        let parts = covariate_fit(spec, network, &blocks, &data, q, warm_start)?;
        degenerate |= parts.frozen;
        let params = Parameters {
            alpha,
            connectivity: parts.connectivity,
            sigma2: parts.sigma2,
            beta: parts.beta,
            beta_ql: parts.beta_ql,
        };
        if !parts.converged {
            return Err(Error::GlmNonConvergence {
                best: Box::new(MStepOutcome { params, degenerate: true }),
            });
        }
        params
    } else {
        let stats = BlockStats::compute(network, tau);
        let (connectivity, sigma2, frozen) =
            closed_form(spec, network, &stats, &group_mass, warm_start);
        degenerate |= frozen;
        Parameters { alpha, connectivity, sigma2, beta: None, beta_ql: None }
    };

    Ok(MStepOutcome { params, degenerate })
}

/// Canonical block pairs: all `(q, l)` when directed, `q <= l` otherwise.
pub(crate) fn canonical_blocks(q: usize, directed: bool) -> Vec<(usize, usize)> {
    let mut blocks = Vec::new();
    for a in 0..q {
        for b in 0..q {
            if directed || b >= a {
                blocks.push((a, b));
            }
        }
    }
    blocks
}

/// Ordered-pair tau block sums, using sparse weights.
struct BlockStats {
    q: usize,
    /// `sum_{i != j} tau_iq tau_jl` (ordered pairs, diagonal removed)
    den: DMatrix<f64>,
    /// `sum_{i != j} tau_iq tau_jl w_ij`; for undirected networks the
    /// symmetric contributions are accumulated on the `q <= l` triangle and
    /// mirrored, so the matrix is symmetric bit-for-bit.
    num: DMatrix<f64>,
    /// same as `num` with squared weights (for the Gaussian variance)
    sq_num: DMatrix<f64>,
}

impl BlockStats {
    fn compute(network: &Network, tau: &SoftAssignment) -> BlockStats {
        let q = tau.q();
        let t = tau.matrix();
        let n = network.n;

        let mut col_sum = vec![0.0; q];
        for g in 0..q {
            for i in 0..n {
                col_sum[g] += t[(i, g)];
            }
        }
        let mut den = DMatrix::zeros(q, q);
        for a in 0..q {
            for b in 0..q {
                let mut diag = 0.0;
                for i in 0..n {
                    diag += t[(i, a)] * t[(i, b)];
                }
                den[(a, b)] = col_sum[a] * col_sum[b] - diag;
            }
        }

        let mut num = DMatrix::zeros(q, q);
        let mut sq_num = DMatrix::zeros(q, q);
        for &(i, j, w) in &network.weights {
            let (i, j) = (i as usize, j as usize);
            for a in 0..q {
                for b in 0..q {
                    if network.directed {
                        let m = t[(i, a)] * t[(j, b)];
                        num[(a, b)] += m * w;
                        sq_num[(a, b)] += m * w * w;
                    } else if b >= a {
                        let m = if a == b {
                            2.0 * t[(i, a)] * t[(j, a)]
                        } else {
                            t[(i, a)] * t[(j, b)] + t[(i, b)] * t[(j, a)]
                        };
                        num[(a, b)] += m * w;
                        sq_num[(a, b)] += m * w * w;
                    }
                }
            }
        }
        if !network.directed {
            for a in 0..q {
                for b in 0..a {
                    num[(a, b)] = num[(b, a)];
                    sq_num[(a, b)] = sq_num[(b, a)];
                }
            }
        }
        BlockStats { q, den, num, sq_num }
    }
}

fn closed_form(
    spec: &ModelSpec,
    network: &Network,
    stats: &BlockStats,
    group_mass: &[f64],
    warm: Option<&Parameters>,
) -> (DMatrix<f64>, Option<f64>, bool) {
    let q = stats.q;
    let n = network.n as f64;
    let total_num: f64 = stats.num.iter().sum();
    let total_den: f64 = stats.den.iter().sum();
    let global_mean = if total_den > 0.0 { total_num / total_den } else { 0.0 };

    let mut frozen = false;
    let mut conn = DMatrix::zeros(q, q);
    for a in 0..q {
        for b in 0..q {
            let empty = group_mass[a] < GROUP_FLOOR_PER_NODE * n
                || group_mass[b] < GROUP_FLOOR_PER_NODE * n
                || stats.den[(a, b)] < BLOCK_MASS_FLOOR;
            if empty {
                frozen = true;
                conn[(a, b)] = match warm {
                    Some(w) => w.connectivity[(a, b)],
                    None => global_mean,
                };
            } else {
                let mut v = stats.num[(a, b)] / stats.den[(a, b)];
                if spec.family == Family::Bernoulli {
                    v = v.clamp(0.0, 1.0);
                }
                conn[(a, b)] = v;
            }
        }
    }

    let sigma2 = if spec.family == Family::Gaussian {
        let mut rss = 0.0;
        let mut mass = 0.0;
        for a in 0..q {
            for b in 0..q {
                if stats.den[(a, b)] < BLOCK_MASS_FLOOR {
                    continue;
                }
                let mu = conn[(a, b)];
                rss += stats.sq_num[(a, b)] - 2.0 * mu * stats.num[(a, b)]
                    + mu * mu * stats.den[(a, b)];
                mass += stats.den[(a, b)];
            }
        }
        Some(if mass > 0.0 { (rss / mass).max(SIGMA2_FLOOR) } else { 1.0 })
    } else {
        None
    };

    (conn, sigma2, frozen)
}

/// Dense per-dyad view used by the covariate GLMs: weight, covariate row and
/// the tau block masses `m[dyad * B + block]`.
struct DyadGlmData {
    w: Vec<f64>,
    y: Vec<f64>,
    p: usize,
    m: Vec<f64>,
    n_dyads: usize,
}

impl DyadGlmData {
    fn build(network: &Network, tau: &SoftAssignment, blocks: &[(usize, usize)]) -> DyadGlmData {
        let n_dyads = network.dyad_count();
        let cov = network.covariates.as_ref().expect("covariate models need covariates");
        let p = cov.p;
        let t = tau.matrix();
        let bc = blocks.len();

        let mut w = vec![0.0; n_dyads];
        for &(i, j, weight) in &network.weights {
            w[dyad_index(network.n, network.directed, i as usize, j as usize)] = weight;
        }

        let mut m = vec![0.0; n_dyads * bc];
        for (idx, (i, j)) in network.all_dyads().enumerate() {
            for (b, &(a, c)) in blocks.iter().enumerate() {
                m[idx * bc + b] = if network.directed {
                    t[(i, a)] * t[(j, c)]
                } else if a == c {
                    t[(i, a)] * t[(j, a)]
                } else {
                    t[(i, a)] * t[(j, c)] + t[(i, c)] * t[(j, a)]
                };
            }
        }

        DyadGlmData { w, y: cov.data.clone(), p, m, n_dyads }
    }

    fn y_row(&self, d: usize) -> &[f64] {
        &self.y[d * self.p..(d + 1) * self.p]
    }
}

struct CovariateFitParts {
    connectivity: DMatrix<f64>,
    sigma2: Option<f64>,
    beta: Option<Vec<f64>>,
    beta_ql: Option<Vec<Vec<f64>>>,
    frozen: bool,
    converged: bool,
}

fn covariate_fit(
    spec: &ModelSpec,
    network: &Network,
    blocks: &[(usize, usize)],
    data: &DyadGlmData,
    q: usize,
    warm: Option<&Parameters>,
) -> Result<CovariateFitParts> {
    let bc = blocks.len();
    let p = data.p;

    // per-block mass and weighted means, for freezes and starting values
    let mut mass = vec![0.0; bc];
    let mut wsum = vec![0.0; bc];
    for d in 0..data.n_dyads {
        for b in 0..bc {
            mass[b] += data.m[d * bc + b];
            wsum[b] += data.m[d * bc + b] * data.w[d];
        }
    }
    let active: Vec<usize> = (0..bc).filter(|&b| mass[b] >= BLOCK_MASS_FLOOR).collect();
    let frozen_any = active.len() != bc;

    let start_conn = |b: usize| -> f64 {
        match warm {
            Some(wp) => wp.connectivity[(blocks[b].0, blocks[b].1)],
            None => {
                if mass[b] >= BLOCK_MASS_FLOOR {
                    wsum[b] / mass[b]
                } else {
                    0.0
                }
            }
        }
    };
    let start_beta = |bq: usize, bl: usize| -> Vec<f64> {
        match warm {
            Some(wp) => wp.beta_for(bq, bl).unwrap().to_vec(),
            None => vec![0.0; p],
        }
    };

    let mut conn = DMatrix::zeros(q, q);
    let mut sigma2 = None;
    let mut beta = None;
    let mut beta_ql = None;
    let mut nonconvergence = false;

    match (spec.family, spec.covariates) {
        (Family::Poisson, CovariateMode::Homogeneous) => {
            let mut x = Vec::with_capacity(active.len() + p);
            for &b in &active {
                x.push(start_conn(b).clamp(1e-6, f64::MAX).ln());
            }
            x.extend_from_slice(&start_beta(0, 0));
            let res = poisson_newton(data, blocks, &active, p, x, true);
            let (x, converged) = res;
            nonconvergence |= !converged;
            for (k, &b) in active.iter().enumerate() {
                set_block(&mut conn, blocks[b], x[k].exp(), network.directed);
            }
            beta = Some(x[active.len()..].to_vec());
        }
        (Family::Poisson, CovariateMode::Heterogeneous) => {
            let mut bql = vec![vec![0.0; p]; q * q];
            for &b in &active {
                let (bq, bl) = blocks[b];
                let mut x = vec![start_conn(b).clamp(1e-6, f64::MAX).ln()];
                x.extend_from_slice(&start_beta(bq, bl));
                let (x, converged) = poisson_newton(data, blocks, &[b], p, x, false);
                nonconvergence |= !converged;
                set_block(&mut conn, (bq, bl), x[0].exp(), network.directed);
                bql[bq * q + bl] = x[1..].to_vec();
                bql[bl * q + bq] = x[1..].to_vec();
            }
            beta_ql = Some(bql);
        }
        (Family::Gaussian, CovariateMode::Homogeneous) => {
            let (coef, s2) = gaussian_wls(data, &active, p, true)?;
            for (k, &b) in active.iter().enumerate() {
                set_block(&mut conn, blocks[b], coef[k], network.directed);
            }
            beta = Some(coef[active.len()..].to_vec());
            sigma2 = Some(s2);
        }
        (Family::Gaussian, CovariateMode::Heterogeneous) => {
            let mut bql = vec![vec![0.0; p]; q * q];
            let mut rss = 0.0;
            let mut total_mass = 0.0;
            for &b in &active {
                let (bq, bl) = blocks[b];
                let (coef, block_rss) = gaussian_wls_block(data, b, blocks.len(), p)?;
                set_block(&mut conn, (bq, bl), coef[0], network.directed);
                bql[bq * q + bl] = coef[1..].to_vec();
                bql[bl * q + bq] = coef[1..].to_vec();
                rss += block_rss;
                total_mass += mass[b];
            }
            beta_ql = Some(bql);
            sigma2 =
                Some(if total_mass > 0.0 { (rss / total_mass).max(SIGMA2_FLOOR) } else { 1.0 });
        }
        (Family::Bernoulli, CovariateMode::Homogeneous) => {
            let mut x = Vec::with_capacity(active.len() + p);
            for &b in &active {
                x.push(start_conn(b).clamp(0.05, 0.95));
            }
            x.extend_from_slice(&start_beta(0, 0));
            let (x, converged) = bernoulli_newton(data, blocks, &active, p, x);
            nonconvergence |= !converged;
            for (k, &b) in active.iter().enumerate() {
                set_block(&mut conn, blocks[b], x[k], network.directed);
            }
            beta = Some(x[active.len()..].to_vec());
        }
        (Family::Bernoulli, CovariateMode::Heterogeneous) => {
            let mut bql = vec![vec![0.0; p]; q * q];
            for &b in &active {
                let (bq, bl) = blocks[b];
                let mut x = vec![start_conn(b).clamp(0.05, 0.95)];
                x.extend_from_slice(&start_beta(bq, bl));
                let (x, converged) = bernoulli_newton(data, blocks, &[b], p, x);
                nonconvergence |= !converged;
                set_block(&mut conn, (bq, bl), x[0], network.directed);
                bql[bq * q + bl] = x[1..].to_vec();
                bql[bl * q + bq] = x[1..].to_vec();
            }
            beta_ql = Some(bql);
        }
        (_, CovariateMode::None) => unreachable!("covariate_fit called without covariates"),
    }

    // frozen blocks keep warm-start (or neutral) values
    for b in 0..bc {
        if mass[b] < BLOCK_MASS_FLOOR {
            let (bq, bl) = blocks[b];
            set_block(&mut conn, (bq, bl), start_conn(b), network.directed);
            if let Some(bql) = beta_ql.as_mut() {
                bql[bq * q + bl] = start_beta(bq, bl);
                bql[bl * q + bq] = start_beta(bq, bl);
            }
        }
    }
    if spec.family == Family::Gaussian && sigma2.is_none() {
        sigma2 = Some(warm.and_then(|w| w.sigma2).unwrap_or(1.0));
    }

    Ok(CovariateFitParts {
        connectivity: conn,
        sigma2,
        beta,
        beta_ql,
        frozen: frozen_any,
        converged: !nonconvergence,
    })
}

fn set_block(conn: &mut DMatrix<f64>, (a, b): (usize, usize), v: f64, directed: bool) {
    conn[(a, b)] = v;
    if !directed {
        conn[(b, a)] = v;
    }
}

/// Newton-Raphson with step halving for the tau-weighted Poisson likelihood.
/// Parameters are `[eta_b for active blocks..., beta]` when `shared_beta`,
/// otherwise a single block's `[eta, beta_b]`. Returns (x, converged).
fn poisson_newton(
    data: &DyadGlmData,
    blocks: &[(usize, usize)],
    active: &[usize],
    p: usize,
    x0: Vec<f64>,
    shared_beta: bool,
) -> (Vec<f64>, bool) {
    let bc = blocks.len();
    let na = active.len();
    let dim = na + p;
    debug_assert!(shared_beta || na == 1);

    let objective = |x: &[f64]| -> f64 {
        let mut f = 0.0;
        for d in 0..data.n_dyads {
            let lp = dot(&x[na..], data.y_row(d));
            for (k, &b) in active.iter().enumerate() {
                let m = data.m[d * bc + b];
                if m == 0.0 {
                    continue;
                }
                let eta = x[k] + lp;
                f += m * (data.w[d] * eta - eta.exp());
            }
        }
        f
    };

    let grad_hess = |x: &[f64]| -> (DVector<f64>, DMatrix<f64>) {
        let mut g = DVector::zeros(dim);
        let mut h = DMatrix::zeros(dim, dim);
        for d in 0..data.n_dyads {
            let y = data.y_row(d);
            let lp = dot(&x[na..], y);
            let mut resid_sum = 0.0;
            let mut mu_sum = 0.0;
            for (k, &b) in active.iter().enumerate() {
                let m = data.m[d * bc + b];
                if m == 0.0 {
                    continue;
                }
                let mu = (x[k] + lp).exp();
                let r = m * (data.w[d] - mu);
                g[k] += r;
                h[(k, k)] -= m * mu;
                resid_sum += r;
                mu_sum += m * mu;
                for (e, &yv) in y.iter().enumerate() {
                    h[(k, na + e)] -= m * mu * yv;
                }
            }
            for (e, &yv) in y.iter().enumerate() {
                g[na + e] += resid_sum * yv;
                for (e2, &yv2) in y.iter().enumerate() {
                    h[(na + e, na + e2)] -= mu_sum * yv * yv2;
                }
            }
        }
        for k in 0..na {
            for e in 0..p {
                h[(na + e, k)] = h[(k, na + e)];
            }
        }
        (g, h)
    };

    newton_ascend(x0, objective, grad_hess, |_x| {})
}

/// Projected Newton for the product-form Bernoulli likelihood
/// `p = pi_b * logistic(beta' y)`; `pi` is kept in `[1e-9, 1]`.
fn bernoulli_newton(
    data: &DyadGlmData,
    blocks: &[(usize, usize)],
    active: &[usize],
    p: usize,
    x0: Vec<f64>,
) -> (Vec<f64>, bool) {
    let bc = blocks.len();
    let na = active.len();
    let dim = na + p;

    let objective = |x: &[f64]| -> f64 {
        let mut f = 0.0;
        for d in 0..data.n_dyads {
            let s = logistic(dot(&x[na..], data.y_row(d)));
            for (k, &b) in active.iter().enumerate() {
                let m = data.m[d * bc + b];
                if m == 0.0 {
                    continue;
                }
                let u = (x[k] * s).clamp(1e-12, 1.0 - 1e-12);
                f += m * if data.w[d] == 1.0 { u.ln() } else { (1.0 - u).ln() };
            }
        }
        f
    };

    let gradient = |x: &[f64]| -> DVector<f64> {
        let mut g = DVector::zeros(dim);
        for d in 0..data.n_dyads {
            let y = data.y_row(d);
            let s = logistic(dot(&x[na..], y));
            let mut beta_factor = 0.0;
            for (k, &b) in active.iter().enumerate() {
                let m = data.m[d * bc + b];
                if m == 0.0 {
                    continue;
                }
                let pi = x[k].max(1e-12);
                if data.w[d] == 1.0 {
                    g[k] += m / pi;
                    beta_factor += m * (1.0 - s);
                } else {
                    let v = (1.0 - pi * s).max(1e-12);
                    g[k] -= m * s / v;
                    beta_factor -= m * pi * s * (1.0 - s) / v;
                }
            }
            for (e, &yv) in y.iter().enumerate() {
                g[na + e] += beta_factor * yv;
            }
        }
        g
    };

    // numerical Hessian from the analytic gradient; these problems are tiny
    let grad_hess = |x: &[f64]| -> (DVector<f64>, DMatrix<f64>) {
        let g = gradient(x);
        let mut h = DMatrix::zeros(dim, dim);
        let mut xp = x.to_vec();
        for c in 0..dim {
            let step = 1e-6 * (1.0 + x[c].abs());
            xp[c] = x[c] + step;
            let gp = gradient(&xp);
            xp[c] = x[c] - step;
            let gm = gradient(&xp);
            xp[c] = x[c];
            for r in 0..dim {
                h[(r, c)] = (gp[r] - gm[r]) / (2.0 * step);
            }
        }
        let sym = (&h + h.transpose()) * 0.5;
        (g, sym)
    };

    let project = move |x: &mut [f64]| {
        for v in x.iter_mut().take(na) {
            *v = v.clamp(1e-9, 1.0);
        }
    };

    newton_ascend(x0, objective, grad_hess, project)
}

/// Maximizes a smooth concave-ish objective by damped Newton ascent.
/// Convergence: relative step size below `NEWTON_REL_TOL`.
fn newton_ascend(
    mut x: Vec<f64>,
    objective: impl Fn(&[f64]) -> f64,
    grad_hess: impl Fn(&[f64]) -> (DVector<f64>, DMatrix<f64>),
    project: impl Fn(&mut [f64]),
) -> (Vec<f64>, bool) {
    let dim = x.len();
    project(&mut x);
    let mut f = objective(&x);
    let mut best = (x.clone(), f);

    for _ in 0..NEWTON_MAX_ITER {
        let (g, h) = grad_hess(&x);
        let mut neg_h = -h;
        let mut ridge = 0.0;
        let delta = loop {
            let mut m = neg_h.clone();
            if ridge > 0.0 {
                for k in 0..dim {
                    m[(k, k)] += ridge;
                }
            }
            match m.cholesky() {
                Some(ch) => break ch.solve(&g),
                None => {
                    let scale: f64 = (0..dim).map(|k| neg_h[(k, k)].abs()).sum::<f64>()
                        / dim as f64;
                    ridge = if ridge == 0.0 { (scale * 1e-8).max(1e-10) } else { ridge * 10.0 };
                    if ridge > scale.max(1.0) * 1e6 {
                        // hopeless curvature; fall back to a gradient step
                        neg_h = DMatrix::identity(dim, dim);
                        ridge = 0.0;
                    }
                }
            }
        };

        let mut t = 1.0;
        let mut improved = false;
        let mut cand = x.clone();
        for _ in 0..40 {
            for k in 0..dim {
                cand[k] = x[k] + t * delta[k];
            }
            project(&mut cand);
            let fc = objective(&cand);
            if fc.is_finite() && fc >= f - 1e-14 {
                let step: f64 = cand
                    .iter()
                    .zip(&x)
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max);
                let scale = 1.0 + x.iter().map(|v| v.abs()).fold(0.0, f64::max);
                x = cand.clone();
                f = fc;
                if f > best.1 {
                    best = (x.clone(), f);
                }
                improved = true;
                if step <= NEWTON_REL_TOL * scale {
                    return (best.0, true);
                }
                break;
            }
            t *= 0.5;
        }
        if !improved {
            // cannot move: converged to numerical precision
            return (best.0, true);
        }
    }
    (best.0, false)
}

/// Weighted least squares for the homogeneous Gaussian model: coefficients are
/// `[mu_b for active blocks..., beta]`, and the pooled ML variance.
fn gaussian_wls(
    data: &DyadGlmData,
    active: &[usize],
    p: usize,
    _shared: bool,
) -> Result<(Vec<f64>, f64)> {
    let bc = data.m.len() / data.n_dyads.max(1);
    let na = active.len();
    let dim = na + p;
    let mut a = DMatrix::zeros(dim, dim);
    let mut rhs = DVector::zeros(dim);
    let mut mass = 0.0;

    for d in 0..data.n_dyads {
        let y = data.y_row(d);
        let mut m_tot = 0.0;
        for (k, &b) in active.iter().enumerate() {
            let m = data.m[d * bc + b];
            if m == 0.0 {
                continue;
            }
            m_tot += m;
            a[(k, k)] += m;
            rhs[k] += m * data.w[d];
            for (e, &yv) in y.iter().enumerate() {
                a[(k, na + e)] += m * yv;
                a[(na + e, k)] += m * yv;
            }
        }
        for (e, &yv) in y.iter().enumerate() {
            rhs[na + e] += m_tot * data.w[d] * yv;
            for (e2, &yv2) in y.iter().enumerate() {
                a[(na + e, na + e2)] += m_tot * yv * yv2;
            }
        }
        mass += m_tot;
    }

    let coef = solve_spd(a, rhs)?;
    let mut rss = 0.0;
    for d in 0..data.n_dyads {
        let y = data.y_row(d);
        let lp = dot(&coef.as_slice()[na..], y);
        for (k, &b) in active.iter().enumerate() {
            let m = data.m[d * bc + b];
            if m == 0.0 {
                continue;
            }
            let r = data.w[d] - coef[k] - lp;
            rss += m * r * r;
        }
    }
    let s2 = if mass > 0.0 { (rss / mass).max(SIGMA2_FLOOR) } else { 1.0 };
    Ok((coef.as_slice().to_vec(), s2))
}

/// Per-block weighted least squares (`[mu_b, beta_b]`), returning the block RSS.
fn gaussian_wls_block(
    data: &DyadGlmData,
    b: usize,
    bc: usize,
    p: usize,
) -> Result<(Vec<f64>, f64)> {
    let dim = 1 + p;
    let mut a = DMatrix::zeros(dim, dim);
    let mut rhs = DVector::zeros(dim);
    for d in 0..data.n_dyads {
        let m = data.m[d * bc + b];
        if m == 0.0 {
            continue;
        }
        let y = data.y_row(d);
        a[(0, 0)] += m;
        rhs[0] += m * data.w[d];
        for (e, &yv) in y.iter().enumerate() {
            a[(0, 1 + e)] += m * yv;
            a[(1 + e, 0)] += m * yv;
            rhs[1 + e] += m * data.w[d] * yv;
            for (e2, &yv2) in y.iter().enumerate() {
                a[(1 + e, 1 + e2)] += m * yv * yv2;
            }
        }
    }
    let coef = solve_spd(a, rhs)?;
    let mut rss = 0.0;
    for d in 0..data.n_dyads {
        let m = data.m[d * bc + b];
        if m == 0.0 {
            continue;
        }
        let r = data.w[d] - coef[0] - dot(&coef.as_slice()[1..], data.y_row(d));
        rss += m * r * r;
    }
    Ok((coef.as_slice().to_vec(), rss))
}

fn solve_spd(mut a: DMatrix<f64>, rhs: DVector<f64>) -> Result<DVector<f64>> {
    let dim = a.nrows();
    let trace: f64 = (0..dim).map(|k| a[(k, k)].abs()).sum();
    for attempt in 0..6 {
        if attempt > 0 {
            let ridge = trace.max(1.0) * 1e-12 * 10f64.powi(attempt);
            for k in 0..dim {
                a[(k, k)] += ridge;
            }
        }
        if let Some(ch) = a.clone().cholesky() {
            return Ok(ch.solve(&rhs));
        }
    }
    Err(Error::InvalidParameters("singular least-squares system".into()))
}
