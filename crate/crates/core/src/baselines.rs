//! Non-neural baselines: IID Gaussian and Gaussian GARCH(1,1).

use argmin::core::{CostFunction, Executor, State};
use argmin::solver::neldermead::NelderMead;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::nn::Predictive;
use crate::util::{self, HALF_LN_2PI};

/// IID Gaussian increments; horizon `T` aggregates are `N(T mu, T sigma^2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IidGaussian {
    pub mean: f64,
    pub var: f64,
}

impl IidGaussian {
    /// Maximum-likelihood fit (population variance).
    pub fn fit(train: &[f64]) -> Result<Self> {
        if train.len() < 2 {
            return Err(Error::TooShort {
                required: 2,
                actual: train.len(),
            });
        }
        let var = util::pop_var(train);
        if !(var > 0.0) {
            return Err(Error::Domain("training variance is zero".into()));
        }
        Ok(Self {
            mean: util::mean(train),
            var,
        })
    }

    pub fn predictive(&self, t: usize) -> Predictive {
        Predictive::Gaussian {
            mean: t as f64 * self.mean,
            std: (t as f64 * self.var).sqrt(),
        }
    }
}

/// Mean test NLL of the horizon-`t` IID Gaussian fitted on `train`.
pub fn iid_gaussian_nll(train: &[f64], test_targets: &[f64], t: usize) -> Result<f64> {
    let m = IidGaussian::fit(train)?;
    crate::nn::flow::nll(&vec![m.predictive(t); test_targets.len()], test_targets)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GarchParams {
    pub omega: f64,
    pub alpha: f64,
    pub beta: f64,
    /// Total training log-likelihood at the fitted parameters.
    pub log_likelihood: f64,
}

impl GarchParams {
    pub fn persistence(&self) -> f64 {
        self.alpha + self.beta
    }
}

pub const GARCH_MIN_LEN: usize = 250;
const MAX_PERSISTENCE: f64 = 1.0 - 1e-6;

/// Fitted GARCH(1,1) with the mean and initial variance taken from training data.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Garch {
    pub params: GarchParams,
    pub mean: f64,
    /// `sigma^2_0`, the training sample variance.
    pub initial_var: f64,
}

/// Conditional variances `sigma^2_t` for `t = 0..=x.len()`: the last entry is
/// the one-step forecast after the final observation.
pub fn garch_variances(p: &GarchParams, mean: f64, initial_var: f64, x: &[f64]) -> Vec<f64> {
    let mut s = Vec::with_capacity(x.len() + 1);
    s.push(initial_var);
    for &r in x {
        let e = r - mean;
        let prev = *s.last().unwrap();
        s.push(p.omega + p.alpha * e * e + p.beta * prev);
    }
    s
}

fn neg_log_lik(p: &GarchParams, mean: f64, initial_var: f64, x: &[f64]) -> f64 {
    let s = garch_variances(p, mean, initial_var, x);
    let mut nll = 0.0;
    for (r, v) in x.iter().zip(&s) {
        let e = r - mean;
        nll += HALF_LN_2PI + 0.5 * v.ln() + 0.5 * e * e / v;
    }
    nll
}

fn unpack(theta: &[f64]) -> (f64, f64, f64) {
    let omega = theta[0].exp();
    let persistence = MAX_PERSISTENCE * crate::nn::tape::sigmoid(theta[1]);
    let alpha = persistence * crate::nn::tape::sigmoid(theta[2]);
    (omega, alpha, persistence - alpha)
}

fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

struct GarchCost<'a> {
    x: &'a [f64],
    mean: f64,
    initial_var: f64,
}

impl CostFunction for GarchCost<'_> {
    type Param = Vec<f64>;
    type Output = f64;

    fn cost(&self, theta: &Self::Param) -> std::result::Result<f64, argmin::core::Error> {
        let (omega, alpha, beta) = unpack(theta);
        let p = GarchParams {
            omega,
            alpha,
            beta,
            log_likelihood: 0.0,
        };
        let v = neg_log_lik(&p, self.mean, self.initial_var, self.x);
        Ok(if v.is_finite() { v } else { f64::MAX })
    }
}

/// Gaussian MLE by Nelder-Mead on `(ln omega, logit persistence, logit alpha share)`
/// from a fixed 3x3 grid of starts.
pub fn garch_fit(train: &[f64]) -> Result<Garch> {
    if train.len() < GARCH_MIN_LEN {
        return Err(Error::TooShort {
            required: GARCH_MIN_LEN,
            actual: train.len(),
        });
    }
    let mean = util::mean(train);
    let var = util::pop_var(train);
    if !(var > 0.0) {
        return Err(Error::Domain("training variance is zero".into()));
    }
    let mut best: Option<(Vec<f64>, f64)> = None;
    for persistence in [0.5, 0.8, 0.95] {
        for share in [0.05, 0.15, 0.3] {
            let start = vec![(var * (1.0 - persistence)).ln(), logit(persistence), logit(share)];
            let mut simplex = vec![start.clone()];
            for i in 0..3 {
                let mut v = start.clone();
                v[i] += 0.5;
                simplex.push(v);
            }
            let cost = GarchCost {
                x: train,
                mean,
                initial_var: var,
            };
            let solver = NelderMead::new(simplex)
                .with_sd_tolerance(1e-12)
                .map_err(|e| Error::Numerical(e.to_string()))?;
            let res = Executor::new(cost, solver)
                .configure(|s| s.max_iters(3000))
                .run()
                .map_err(|e| Error::Numerical(e.to_string()))?;
            let state = res.state();
            let f = state.get_best_cost();
            if let Some(theta) = state.get_best_param() {
                if f.is_finite() && f < f64::MAX && best.as_ref().map_or(true, |(_, b)| f < *b) {
                    best = Some((theta.clone(), f));
                }
            }
        }
    }
    let (theta, f) = best.ok_or_else(|| Error::Numerical("GARCH likelihood non-finite at every start".into()))?;
    let (omega, alpha, beta) = unpack(&theta);
    Ok(Garch {
        params: GarchParams {
            omega,
            alpha,
            beta,
            log_likelihood: -f,
        },
        mean,
        initial_var: var,
    })
}

impl Garch {
    /// Sum of the `t` forecast variances starting from `sigma2_next`.
    pub fn horizon_variance(&self, sigma2_next: f64, t: usize) -> f64 {
        let p = &self.params;
        let pers = p.persistence();
        if pers <= 0.0 {
            return sigma2_next + (t as f64 - 1.0) * p.omega;
        }
        let long_run = p.omega / (1.0 - pers);
        (0..t).map(|h| long_run + pers.powi(h as i32) * (sigma2_next - long_run)).sum()
    }

    /// Gaussian predictives for the sums `x[o..o+t]` at each origin `o`, with
    /// the variance filter run over `x[..o]` from the start of `x`.
    pub fn predictives(&self, x: &[f64], origins: &[usize], t: usize) -> Result<Vec<Predictive>> {
        if t == 0 {
            return Err(invalid("horizon must be >= 1"));
        }
        let s = garch_variances(&self.params, self.mean, self.initial_var, x);
        origins
            .iter()
            .map(|&o| {
                if o > x.len() {
                    return Err(invalid(format!("origin {o} beyond series of length {}", x.len())));
                }
                Ok(Predictive::Gaussian {
                    mean: t as f64 * self.mean,
                    std: self.horizon_variance(s[o], t).sqrt(),
                })
            })
            .collect()
    }
}

/// Mean NLL of the horizon-`t` targets `x[o..o+t]` for each origin.
pub fn garch_nll(model: &Garch, x: &[f64], origins: &[usize], t: usize) -> Result<f64> {
    let preds = model.predictives(x, origins, t)?;
    let targets: Vec<f64> = origins
        .iter()
        .map(|&o| {
            x.get(o..o + t)
                .map(|s| s.iter().sum())
                .ok_or_else(|| invalid(format!("target {o}..{} beyond series", o + t)))
        })
        .collect::<Result<_>>()?;
    crate::nn::flow::nll(&preds, &targets)
}

/// Simulated GARCH(1,1) path with zero mean, started at the stationary variance.
pub fn simulate_garch(omega: f64, alpha: f64, beta: f64, n: usize, seed: u64) -> Result<Vec<f64>> {
    if !(omega > 0.0) || alpha < 0.0 || beta < 0.0 || alpha + beta >= 1.0 {
        return Err(invalid("need omega > 0, alpha, beta >= 0, alpha + beta < 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut s2 = omega / (1.0 - alpha - beta);
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let z: f64 = StandardNormal.sample(&mut rng);
        let r = s2.sqrt() * z;
        out.push(r);
        s2 = omega + alpha * r * r + beta * s2;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nested_model_equals_iid() {
        let x: Vec<f64> = (0..400).map(|i| ((i * 31 % 23) as f64 - 11.0) / 7.0).collect();
        let iid = IidGaussian::fit(&x[..300]).unwrap();
        let g = Garch {
            params: GarchParams {
                omega: iid.var,
                alpha: 0.0,
                beta: 0.0,
                log_likelihood: 0.0,
            },
            mean: iid.mean,
            initial_var: iid.var,
        };
        for t in [1, 5, 21] {
            let origins: Vec<usize> = (300..=400 - t).collect();
            let targets: Vec<f64> = origins.iter().map(|&o| x[o..o + t].iter().sum()).collect();
            let a = iid_gaussian_nll(&x[..300], &targets, t).unwrap();
            let b = garch_nll(&g, &x, &origins, t).unwrap();
            assert!((a - b).abs() <= 1e-10, "t={t}: {a} vs {b}");
        }
    }

    #[test]
    fn errors() {
        assert!(iid_gaussian_nll(&[1.0; 10], &[0.0], 1).is_err());
        assert!(garch_fit(&[0.1; 100]).is_err());
    }

    #[test]
    fn horizon_variance_floor() {
        let g = Garch {
            params: GarchParams {
                omega: 0.05,
                alpha: 0.1,
                beta: 0.85,
                log_likelihood: 0.0,
            },
            mean: 0.0,
            initial_var: 1.0,
        };
        for s in [0.01, 1.0, 5.0] {
            assert!(g.horizon_variance(s, 21) >= 21.0 * 0.05);
        }
    }
}
