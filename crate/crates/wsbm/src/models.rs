//! The family of conditional edge laws: Bernoulli, Poisson and Gaussian, each
//! without covariates or with homogeneous / heterogeneous covariate effects.
//!
//! Success probabilities and rates follow the product/log-link forms
//! `pi_ql * logistic(beta' y)`, `lambda_ql * exp(beta' y)` and
//! `mu_ql + beta' y`; the Gaussian variance `sigma2` is one scalar shared by
//! all blocks.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::Distribution;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::graph::Network;

/// Probabilities and rates are clamped to this floor before logs.
pub(crate) const PROB_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Family {
    Bernoulli,
    Poisson,
    Gaussian,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CovariateMode {
    None,
    Homogeneous,
    Heterogeneous,
}

/// Which of the nine edge laws is in force.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelSpec {
    pub family: Family,
    pub covariates: CovariateMode,
}

impl ModelSpec {
    pub fn new(family: Family, covariates: CovariateMode) -> ModelSpec {
        ModelSpec { family, covariates }
    }

    pub fn uses_covariates(&self) -> bool {
        self.covariates != CovariateMode::None
    }

    /// Parses the command-line model names.
    pub fn from_cli_name(name: &str) -> Result<ModelSpec> {
        let spec = match name {
            "bernoulli" => ModelSpec::new(Family::Bernoulli, CovariateMode::None),
            "BH" => ModelSpec::new(Family::Bernoulli, CovariateMode::Homogeneous),
            "BI" => ModelSpec::new(Family::Bernoulli, CovariateMode::Heterogeneous),
            "poisson" => ModelSpec::new(Family::Poisson, CovariateMode::None),
            "PRMH" => ModelSpec::new(Family::Poisson, CovariateMode::Homogeneous),
            "PRMI" => ModelSpec::new(Family::Poisson, CovariateMode::Heterogeneous),
            "gaussian" => ModelSpec::new(Family::Gaussian, CovariateMode::None),
            "GRMH" => ModelSpec::new(Family::Gaussian, CovariateMode::Homogeneous),
            "GRMI" => ModelSpec::new(Family::Gaussian, CovariateMode::Heterogeneous),
            other => return Err(Error::UnknownModel(other.to_string())),
        };
        Ok(spec)
    }

    pub fn cli_name(&self) -> &'static str {
        match (self.family, self.covariates) {
            (Family::Bernoulli, CovariateMode::None) => "bernoulli",
            (Family::Bernoulli, CovariateMode::Homogeneous) => "BH",
            (Family::Bernoulli, CovariateMode::Heterogeneous) => "BI",
            (Family::Poisson, CovariateMode::None) => "poisson",
            (Family::Poisson, CovariateMode::Homogeneous) => "PRMH",
            (Family::Poisson, CovariateMode::Heterogeneous) => "PRMI",
            (Family::Gaussian, CovariateMode::None) => "gaussian",
            (Family::Gaussian, CovariateMode::Homogeneous) => "GRMH",
            (Family::Gaussian, CovariateMode::Heterogeneous) => "GRMI",
        }
    }

    /// All nine model specifications, in CLI-name order.
    pub fn all() -> [ModelSpec; 9] {
        ["bernoulli", "BH", "BI", "poisson", "PRMH", "PRMI", "gaussian", "GRMH", "GRMI"]
            .map(|n| ModelSpec::from_cli_name(n).unwrap())
    }
}

impl std::fmt::Display for ModelSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.cli_name())
    }
}

/// Fitted parameters for one (model, Q) pair.
///
/// `connectivity` holds `pi_ql`, `lambda_ql` or `mu_ql` depending on the
/// family. `beta` is present for homogeneous covariate effects, `beta_ql`
/// (row-major `q * Q + l`, each of length `p`) for heterogeneous ones.
#[derive(Debug, Clone, PartialEq)]
pub struct Parameters {
    pub alpha: Vec<f64>,
    pub connectivity: DMatrix<f64>,
    pub sigma2: Option<f64>,
    pub beta: Option<Vec<f64>>,
    pub beta_ql: Option<Vec<Vec<f64>>>,
}

impl Parameters {
    pub fn q(&self) -> usize {
        self.alpha.len()
    }

    pub fn p(&self) -> usize {
        if let Some(b) = &self.beta {
            b.len()
        } else if let Some(bs) = &self.beta_ql {
            bs.first().map_or(0, |b| b.len())
        } else {
            0
        }
    }

    /// The covariate coefficients applying to block `(q, l)`, if any.
    pub fn beta_for(&self, q: usize, l: usize) -> Option<&[f64]> {
        if let Some(b) = &self.beta {
            Some(b.as_slice())
        } else {
            self.beta_ql.as_ref().map(|bs| bs[q * self.q() + l].as_slice())
        }
    }

    /// Checks structural and value invariants against a model specification.
    pub fn validate(&self, spec: &ModelSpec, p: usize, directed: bool) -> Result<()> {
        let q = self.q();
        if q == 0 {
            return Err(Error::InvalidParameters("alpha is empty".into()));
        }
        let s: f64 = self.alpha.iter().sum();
        if (s - 1.0).abs() > 1e-10 || self.alpha.iter().any(|&a| a < 0.0) {
            return Err(Error::InvalidParameters(format!(
                "alpha must be a simplex vector, sums to {s}"
            )));
        }
        if self.connectivity.nrows() != q || self.connectivity.ncols() != q {
            return Err(Error::DimensionMismatch {
                what: "connectivity",
                expected: q,
                got: self.connectivity.nrows(),
            });
        }
        match spec.family {
            Family::Bernoulli => {
                if self.connectivity.iter().any(|&v| !(0.0..=1.0).contains(&v)) {
                    return Err(Error::InvalidParameters("pi outside [0, 1]".into()));
                }
            }
            Family::Poisson => {
                if self.connectivity.iter().any(|&v| v < 0.0) {
                    return Err(Error::InvalidParameters("lambda negative".into()));
                }
            }
            Family::Gaussian => match self.sigma2 {
                Some(s2) if s2 > 0.0 => {}
                _ => return Err(Error::InvalidParameters("sigma2 must be positive".into())),
            },
        }
        match spec.covariates {
            CovariateMode::None => {}
            CovariateMode::Homogeneous => match &self.beta {
                Some(b) if b.len() == p => {}
                _ => {
                    return Err(Error::DimensionMismatch {
                        what: "beta length",
                        expected: p,
                        got: self.beta.as_ref().map_or(0, |b| b.len()),
                    })
                }
            },
            CovariateMode::Heterogeneous => match &self.beta_ql {
                Some(bs) if bs.len() == q * q && bs.iter().all(|b| b.len() == p) => {}
                _ => {
                    return Err(Error::DimensionMismatch {
                        what: "beta_ql",
                        expected: q * q,
                        got: self.beta_ql.as_ref().map_or(0, |b| b.len()),
                    })
                }
            },
        }
        if !directed {
            for a in 0..q {
                for b in (a + 1)..q {
                    if self.connectivity[(a, b)] != self.connectivity[(b, a)] {
                        return Err(Error::InvalidParameters(format!(
                            "connectivity not symmetric at ({a}, {b})"
                        )));
                    }
                    if let Some(bs) = &self.beta_ql {
                        if bs[a * q + b] != bs[b * q + a] {
                            return Err(Error::InvalidParameters(format!(
                                "beta_ql not symmetric at ({a}, {b})"
                            )));
                        }
                    }
                }
            }
        }
        Ok(())
    }
}

pub(crate) fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Log-density of one edge weight under block pair `(q, l)`.
pub fn log_density(
    spec: &ModelSpec,
    w: f64,
    q: usize,
    l: usize,
    y: Option<&[f64]>,
    params: &Parameters,
) -> Result<f64> {
    if spec.uses_covariates() && y.is_none() {
        return Err(Error::MissingCovariates {
            model: spec.cli_name().to_string(),
        });
    }
    match spec.family {
        Family::Bernoulli if w != 0.0 && w != 1.0 => {
            return Err(Error::SupportViolation {
                model: spec.cli_name().to_string(),
                i: q,
                j: l,
                weight: w,
            })
        }
        Family::Poisson if w < 0.0 || w.fract() != 0.0 => {
            return Err(Error::SupportViolation {
                model: spec.cli_name().to_string(),
                i: q,
                j: l,
                weight: w,
            })
        }
        _ => {}
    }
    Ok(log_density_unchecked(spec, w, q, l, y, params))
}

/// Hot-path log-density without support checks; callers validate up front.
pub(crate) fn log_density_unchecked(
    spec: &ModelSpec,
    w: f64,
    q: usize,
    l: usize,
    y: Option<&[f64]>,
    params: &Parameters,
) -> f64 {
    let eta = match spec.covariates {
        CovariateMode::None => 0.0,
        _ => dot(params.beta_for(q, l).unwrap(), y.unwrap()),
    };
    let base = params.connectivity[(q, l)];
    match spec.family {
        Family::Bernoulli => {
            let prob = match spec.covariates {
                CovariateMode::None => base,
                _ => base * logistic(eta),
            };
            bernoulli_log(w, prob)
        }
        Family::Poisson => {
            let rate = match spec.covariates {
                CovariateMode::None => base,
                _ => base * eta.exp(),
            };
            poisson_log(w, rate)
        }
        Family::Gaussian => {
            let mean = base + eta;
            gaussian_log(w, mean, params.sigma2.unwrap())
        }
    }
}

pub(crate) fn bernoulli_log(w: f64, prob: f64) -> f64 {
    let p = prob.clamp(PROB_FLOOR, 1.0 - PROB_FLOOR);
    if w == 1.0 {
        p.ln()
    } else {
        (1.0 - p).ln()
    }
}

pub(crate) fn poisson_log(w: f64, rate: f64) -> f64 {
    let r = rate.max(PROB_FLOOR);
    w * r.ln() - r - ln_gamma(w + 1.0)
}

pub(crate) fn gaussian_log(w: f64, mean: f64, sigma2: f64) -> f64 {
    let d = w - mean;
    -0.5 * (2.0 * std::f64::consts::PI * sigma2).ln() - d * d / (2.0 * sigma2)
}

/// Number of free connectivity-side parameters (feeds the ICL penalty):
/// one connectivity value per block pair, plus covariate coefficients, plus
/// the shared Gaussian variance.
pub fn parameter_count(spec: &ModelSpec, q: usize, p: usize, directed: bool) -> usize {
    let blocks = if directed { q * q } else { q * (q + 1) / 2 };
    let mut count = blocks;
    match spec.covariates {
        CovariateMode::None => {}
        CovariateMode::Homogeneous => count += p,
        CovariateMode::Heterogeneous => count += blocks * p,
    }
    if spec.family == Family::Gaussian {
        count += 1;
    }
    count
}

/// Draws one edge weight from `F_ql(y)`; deterministic given the rng state.
pub fn sample_edge<R: Rng>(
    spec: &ModelSpec,
    q: usize,
    l: usize,
    y: Option<&[f64]>,
    params: &Parameters,
    rng: &mut R,
) -> f64 {
    let eta = match spec.covariates {
        CovariateMode::None => 0.0,
        _ => dot(params.beta_for(q, l).unwrap(), y.unwrap()),
    };
    let base = params.connectivity[(q, l)];
    match spec.family {
        Family::Bernoulli => {
            let prob = match spec.covariates {
                CovariateMode::None => base,
                _ => base * logistic(eta),
            };
            if rng.random::<f64>() < prob {
                1.0
            } else {
                0.0
            }
        }
        Family::Poisson => {
            let rate = match spec.covariates {
                CovariateMode::None => base,
                _ => base * eta.exp(),
            };
            if rate <= 0.0 {
                0.0
            } else {
                rand_distr::Poisson::new(rate).unwrap().sample(rng)
            }
        }
        Family::Gaussian => {
            let mean = base + eta;
            let sd = params.sigma2.unwrap().sqrt();
            mean + sd * rng.sample::<f64, _>(rand_distr::StandardNormal)
        }
    }
}

/// Rejects weights outside the law's support and covariate models on
/// covariate-free networks, before any fitting starts.
pub fn check_support(spec: &ModelSpec, network: &Network) -> Result<()> {
    if spec.uses_covariates() && network.p() == 0 {
        return Err(Error::MissingCovariates {
            model: spec.cli_name().to_string(),
        });
    }
    for &(i, j, w) in &network.weights {
        let bad = match spec.family {
            Family::Bernoulli => w != 0.0 && w != 1.0,
            Family::Poisson => w < 0.0 || w.fract() != 0.0,
            Family::Gaussian => !w.is_finite(),
        };
        if bad {
            return Err(Error::SupportViolation {
                model: spec.cli_name().to_string(),
                i: i as usize + 1,
                j: j as usize + 1,
                weight: w,
            });
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn flat_params(q: usize, value: f64, sigma2: Option<f64>) -> Parameters {
        Parameters {
            alpha: vec![1.0 / q as f64; q],
            connectivity: DMatrix::from_element(q, q, value),
            sigma2,
            beta: None,
            beta_ql: None,
        }
    }

    #[test]
    fn poisson_zero_weight_unit_rate() {
        let spec = ModelSpec::new(Family::Poisson, CovariateMode::None);
        let params = flat_params(1, 1.0, None);
        let ld = log_density(&spec, 0.0, 0, 0, None, &params).unwrap();
        assert_abs_diff_eq!(ld, -1.0, epsilon = 1e-14);
    }

    #[test]
    fn bernoulli_half() {
        let spec = ModelSpec::new(Family::Bernoulli, CovariateMode::None);
        let params = flat_params(1, 0.5, None);
        let ld = log_density(&spec, 1.0, 0, 0, None, &params).unwrap();
        assert_abs_diff_eq!(ld, 0.5f64.ln(), epsilon = 1e-14);
    }

    #[test]
    fn gaussian_at_peak_with_unit_normalizer() {
        let spec = ModelSpec::new(Family::Gaussian, CovariateMode::None);
        let params = flat_params(1, 2.5, Some(1.0 / (2.0 * std::f64::consts::PI)));
        let ld = log_density(&spec, 2.5, 0, 0, None, &params).unwrap();
        assert_abs_diff_eq!(ld, 0.0, epsilon = 1e-14);
    }

    #[test]
    fn zero_beta_matches_covariate_free() {
        let spec0 = ModelSpec::new(Family::Poisson, CovariateMode::None);
        let spec1 = ModelSpec::new(Family::Poisson, CovariateMode::Homogeneous);
        let p0 = flat_params(2, 3.0, None);
        let mut p1 = flat_params(2, 3.0, None);
        p1.beta = Some(vec![0.0, 0.0]);
        for w in [0.0, 1.0, 4.0] {
            let a = log_density(&spec0, w, 0, 1, None, &p0).unwrap();
            let b = log_density(&spec1, w, 0, 1, Some(&[0.7, -1.3]), &p1).unwrap();
            assert_abs_diff_eq!(a, b, epsilon = 1e-14);
        }
    }

    #[test]
    fn support_errors() {
        let spec = ModelSpec::new(Family::Bernoulli, CovariateMode::None);
        let params = flat_params(1, 0.5, None);
        assert!(log_density(&spec, 2.0, 0, 0, None, &params).is_err());
        let spec = ModelSpec::new(Family::Poisson, CovariateMode::None);
        assert!(log_density(&spec, 1.5, 0, 0, None, &params).is_err());
        let spec = ModelSpec::new(Family::Poisson, CovariateMode::Homogeneous);
        assert!(matches!(
            log_density(&spec, 1.0, 0, 0, None, &params),
            Err(Error::MissingCovariates { .. })
        ));
    }

    #[test]
    fn parameter_counts() {
        let b = ModelSpec::new(Family::Bernoulli, CovariateMode::None);
        assert_eq!(parameter_count(&b, 3, 0, true), 9);
        let ph = ModelSpec::new(Family::Poisson, CovariateMode::Homogeneous);
        assert_eq!(parameter_count(&ph, 2, 2, false), 5);
        let g = ModelSpec::new(Family::Gaussian, CovariateMode::None);
        assert_eq!(parameter_count(&g, 1, 0, false), 2);
        let bi = ModelSpec::new(Family::Bernoulli, CovariateMode::Heterogeneous);
        assert_eq!(parameter_count(&bi, 2, 3, false), 3 + 9);
    }

    #[test]
    fn densities_normalize() {
        // Poisson summed to a far tail, Gaussian by quadrature, Bernoulli exactly
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..5 {
            let lambda = 0.3 + 7.0 * rng.random::<f64>();
            let spec = ModelSpec::new(Family::Poisson, CovariateMode::None);
            let params = flat_params(1, lambda, None);
            let total: f64 = (0..200)
                .map(|w| log_density(&spec, w as f64, 0, 0, None, &params).unwrap().exp())
                .sum();
            assert_abs_diff_eq!(total, 1.0, epsilon = 1e-9);

            let pi = rng.random::<f64>();
            let spec = ModelSpec::new(Family::Bernoulli, CovariateMode::None);
            let params = flat_params(1, pi, None);
            let total = log_density(&spec, 0.0, 0, 0, None, &params).unwrap().exp()
                + log_density(&spec, 1.0, 0, 0, None, &params).unwrap().exp();
            assert_abs_diff_eq!(total, 1.0, epsilon = 1e-9);

            let mu = 4.0 * rng.random::<f64>() - 2.0;
            let s2 = 0.2 + rng.random::<f64>();
            let spec = ModelSpec::new(Family::Gaussian, CovariateMode::None);
            let params = flat_params(1, mu, Some(s2));
            let h = 1e-3;
            let total: f64 = (-40_000..40_000)
                .map(|k| {
                    let w = mu + k as f64 * h;
                    log_density(&spec, w, 0, 0, None, &params).unwrap().exp() * h
                })
                .sum();
            assert_abs_diff_eq!(total, 1.0, epsilon = 1e-6);
        }
    }

    #[test]
    fn sampling_degenerate_laws() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let spec = ModelSpec::new(Family::Bernoulli, CovariateMode::None);
        let params = flat_params(1, 1.0, None);
        assert!((0..100).all(|_| sample_edge(&spec, 0, 0, None, &params, &mut rng) == 1.0));
        let spec = ModelSpec::new(Family::Poisson, CovariateMode::None);
        let params = flat_params(1, 0.0, None);
        assert!((0..100).all(|_| sample_edge(&spec, 0, 0, None, &params, &mut rng) == 0.0));
    }

    #[test]
    fn sampling_poisson_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let spec = ModelSpec::new(Family::Poisson, CovariateMode::None);
        let params = flat_params(1, 3.0, None);
        let total: f64 = (0..100_000)
            .map(|_| sample_edge(&spec, 0, 0, None, &params, &mut rng))
            .sum();
        assert_abs_diff_eq!(total / 100_000.0, 3.0, epsilon = 0.05);
    }

    #[test]
    fn cli_names_round_trip() {
        for spec in ModelSpec::all() {
            assert_eq!(ModelSpec::from_cli_name(spec.cli_name()).unwrap(), spec);
        }
        assert!(ModelSpec::from_cli_name("negbin").is_err());
    }
}
