//! GLM families (Gaussian, logistic), the negative log-likelihood loss
//! `sum_i [gamma(eta_i) - y_i eta_i]`, its gradient, and unpenalized
//! maximum-likelihood fitting used in the refit step.
//!
//! The loss is kept on the raw sum scale (no division by n) so penalty
//! levels stay comparable with the theoretical lambda formula.

use ndarray::{Array1, Array2, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Gaussian,
    Logistic,
}

impl std::str::FromStr for Family {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gaussian" => Ok(Family::Gaussian),
            "logistic" => Ok(Family::Logistic),
            other => Err(Error::InvalidParameter(format!(
                "unknown family `{other}` (expected gaussian|logistic)"
            ))),
        }
    }
}

impl std::fmt::Display for Family {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Family::Gaussian => write!(f, "gaussian"),
            Family::Logistic => write!(f, "logistic"),
        }
    }
}

fn softplus(a: f64) -> f64 {
    if a > 0.0 {
        a + (-a).exp().ln_1p()
    } else {
        a.exp().ln_1p()
    }
}

fn sigmoid(a: f64) -> f64 {
    if a >= 0.0 {
        1.0 / (1.0 + (-a).exp())
    } else {
        let e = a.exp();
        e / (1.0 + e)
    }
}

impl Family {
    /// Cumulant gamma: a^2/2 (gaussian) or log(1 + exp(a)) (logistic).
    pub fn gamma(self, a: f64) -> f64 {
        match self {
            Family::Gaussian => 0.5 * a * a,
            Family::Logistic => softplus(a),
        }
    }

    /// Mean function gamma-dot.
    pub fn gamma_dot(self, a: f64) -> f64 {
        match self {
            Family::Gaussian => a,
            Family::Logistic => sigmoid(a),
        }
    }

    /// Variance function gamma-double-dot.
    pub fn gamma_ddot(self, a: f64) -> f64 {
        match self {
            Family::Gaussian => 1.0,
            Family::Logistic => {
                let s = sigmoid(a);
                s * (1.0 - s)
            }
        }
    }

    /// Curvature upper bound used for proximal step sizes.
    pub fn curvature_bound(self) -> f64 {
        match self {
            Family::Gaussian => 1.0,
            Family::Logistic => 0.25,
        }
    }

    pub fn check_response(self, y: ArrayView1<'_, f64>) -> Result<()> {
        if self == Family::Logistic {
            for (i, &v) in y.iter().enumerate() {
                if v != 0.0 && v != 1.0 {
                    return Err(Error::Data(format!(
                        "logistic response must be 0/1; row {} has {v}",
                        i + 1
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Loss of the linear predictor: `sum_i [gamma(eta_i) - y_i * eta_i]`.
pub fn loss(family: Family, y: ArrayView1<'_, f64>, eta: ArrayView1<'_, f64>) -> Result<f64> {
    if y.len() != eta.len() {
        return Err(Error::Dimension(format!(
            "loss: y has {} entries, eta has {}",
            y.len(),
            eta.len()
        )));
    }
    Ok(y.iter()
        .zip(eta.iter())
        .map(|(&yi, &ei)| family.gamma(ei) - yi * ei)
        .sum())
}

/// Gradient `X^T (gamma_dot(X beta) - y)`.
pub fn loss_gradient(
    family: Family,
    y: ArrayView1<'_, f64>,
    x: &Array2<f64>,
    beta: ArrayView1<'_, f64>,
) -> Result<Array1<f64>> {
    if beta.len() != x.ncols() {
        return Err(Error::Dimension(format!(
            "loss_gradient: beta has {} entries, X has {} columns",
            beta.len(),
            x.ncols()
        )));
    }
    if y.len() != x.nrows() {
        return Err(Error::Dimension(format!(
            "loss_gradient: y has {} entries, X has {} rows",
            y.len(),
            x.nrows()
        )));
    }
    let eta = x.dot(&beta);
    let resid = eta.mapv(|e| family.gamma_dot(e)) - &y;
    Ok(x.t().dot(&resid))
}

#[derive(Debug, Clone)]
pub struct MleFit {
    pub beta: Array1<f64>,
    pub loss: f64,
    pub iterations: usize,
}

const NEWTON_GRAD_TOL: f64 = 1e-8;
const NEWTON_MAX_ITER: usize = 100;
const SEPARATION_NORM: f64 = 1e6;
const LOSS_STALL_RTOL: f64 = 1e-12;
const RANK_TOL: f64 = 1e-10;

/// Unpenalized maximum likelihood on design `z`: least squares for the
/// gaussian family, damped (step-halving) Newton for logistic.
pub fn fit_mle(z: &Array2<f64>, y: ArrayView1<'_, f64>, family: Family) -> Result<MleFit> {
    if z.nrows() != y.len() {
        return Err(Error::Dimension(format!(
            "fit_mle: Z has {} rows, y has {}",
            z.nrows(),
            y.len()
        )));
    }
    family.check_response(y)?;
    let (_, dependent) = linalg::independent_columns(z, RANK_TOL);
    if !dependent.is_empty() {
        return Err(Error::RankDeficient {
            columns: dependent.iter().map(|j| format!("col{j}")).collect(),
        });
    }
    match family {
        Family::Gaussian => {
            let y_owned = y.to_owned();
            let beta = linalg::solve_least_squares(z, &y_owned)
                .ok_or_else(|| Error::Numerical("least-squares solve failed".into()))?;
            let eta = z.dot(&beta);
            let l = loss(family, y, eta.view())?;
            Ok(MleFit {
                beta,
                loss: l,
                iterations: 1,
            })
        }
        Family::Logistic => {
            let p = z.ncols();
            let mut beta = Array1::zeros(p);
            let mut eta = z.dot(&beta);
            let mut cur_loss = loss(family, y, eta.view())?;
            // gradient entries are sums over n observations; the tolerance
            // must scale with n or large datasets stall at rounding noise
            let grad_tol = NEWTON_GRAD_TOL * (1.0 + z.nrows() as f64);
            for iter in 1..=NEWTON_MAX_ITER {
                let mu = eta.mapv(|e| family.gamma_dot(e));
                let grad = z.t().dot(&(&mu - &y));
                let gmax = grad.iter().fold(0.0_f64, |m, g| m.max(g.abs()));
                if gmax <= grad_tol {
                    return Ok(MleFit {
                        beta,
                        loss: cur_loss,
                        iterations: iter,
                    });
                }
                let d = eta.mapv(|e| family.gamma_ddot(e));
                // H = Z^T D Z
                let zd = {
                    let mut zd = z.clone();
                    for (mut row, &di) in zd.rows_mut().into_iter().zip(d.iter()) {
                        row.mapv_inplace(|v| v * di);
                    }
                    zd
                };
                let h = z.t().dot(&zd);
                let delta = linalg::solve_spd(&h, &grad).ok_or_else(|| {
                    Error::Numerical("Newton step failed: Hessian not positive definite".into())
                })?;
                // step halving on the loss
                let prev_loss = cur_loss;
                let mut step = 1.0;
                let mut accepted = false;
                for _ in 0..50 {
                    let cand = &beta - &delta.mapv(|v| v * step);
                    let cand_eta = z.dot(&cand);
                    let cand_loss = loss(family, y, cand_eta.view())?;
                    if cand_loss <= cur_loss {
                        beta = cand;
                        eta = cand_eta;
                        cur_loss = cand_loss;
                        accepted = true;
                        break;
                    }
                    step *= 0.5;
                }
                if !accepted {
                    return Ok(MleFit {
                        beta,
                        loss: cur_loss,
                        iterations: iter,
                    });
                }
                // an accepted step whose decrease is below the rounding
                // noise of the summed loss cannot make further progress
                if prev_loss - cur_loss <= LOSS_STALL_RTOL * (1.0 + cur_loss.abs()) {
                    return Ok(MleFit {
                        beta,
                        loss: cur_loss,
                        iterations: iter,
                    });
                }
                if beta.dot(&beta).sqrt() > SEPARATION_NORM {
                    return Err(Error::Numerical(
                        "logistic MLE diverged: separation suspected".into(),
                    ));
                }
            }
            Err(Error::Numerical(format!(
                "logistic MLE did not converge in {NEWTON_MAX_ITER} iterations"
            )))
        }
    }
}

/// Intercept-only MLE: the mean for gaussian, logit of the positive fraction
/// for logistic.
pub fn intercept_only_mle(y: ArrayView1<'_, f64>, family: Family) -> Result<f64> {
    if y.is_empty() {
        return Err(Error::Data("empty response".into()));
    }
    let mean = y.sum() / y.len() as f64;
    match family {
        Family::Gaussian => Ok(mean),
        Family::Logistic => {
            if mean <= 0.0 || mean >= 1.0 {
                return Err(Error::Data(
                    "degenerate logistic response: all labels equal".into(),
                ));
            }
            Ok((mean / (1.0 - mean)).ln())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn gaussian_loss_at_zero() {
        let y = Array1::zeros(4);
        let eta = Array1::zeros(4);
        assert_eq!(loss(Family::Gaussian, y.view(), eta.view()).unwrap(), 0.0);
    }

    #[test]
    fn logistic_loss_at_zero_is_log2() {
        let y = array![0.0];
        let eta = array![0.0];
        let l = loss(Family::Logistic, y.view(), eta.view()).unwrap();
        assert!((l - 2.0_f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn logistic_loss_no_overflow() {
        let y = array![1.0];
        let eta = array![700.0];
        let l = loss(Family::Logistic, y.view(), eta.view()).unwrap();
        // softplus(700) - 700 is ~ exp(-700), numerically 0
        assert!(l.is_finite());
        assert!(l.abs() < 1e-300);
    }

    #[test]
    fn loss_dimension_mismatch() {
        let y = array![0.0, 1.0];
        let eta = array![0.0];
        assert!(loss(Family::Gaussian, y.view(), eta.view()).is_err());
    }

    fn random_instance(rng: &mut ChaCha8Rng, n: usize, p: usize) -> (Array2<f64>, Array1<f64>) {
        let x = Array2::from_shape_fn((n, p), |_| rng.gen_range(-1.0..1.0));
        let y = Array1::from_shape_fn(n, |_| if rng.gen_bool(0.5) { 1.0 } else { 0.0 });
        (x, y)
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for family in [Family::Gaussian, Family::Logistic] {
            for _ in 0..10 {
                let (x, y) = random_instance(&mut rng, 20, 4);
                let beta = Array1::from_shape_fn(4, |_| rng.gen_range(-1.0..1.0));
                let grad = loss_gradient(family, y.view(), &x, beta.view()).unwrap();
                for j in 0..4 {
                    let h = 1e-6 * (1.0 + beta[j].abs());
                    let mut bp = beta.clone();
                    bp[j] += h;
                    let mut bm = beta.clone();
                    bm[j] -= h;
                    let lp = loss(family, y.view(), x.dot(&bp).view()).unwrap();
                    let lm = loss(family, y.view(), x.dot(&bm).view()).unwrap();
                    let fd = (lp - lm) / (2.0 * h);
                    let rel = (grad[j] - fd).abs() / (1.0 + fd.abs());
                    assert!(rel <= 1e-5, "family {family}: grad {} vs fd {}", grad[j], fd);
                }
            }
        }
    }

    #[test]
    fn gaussian_gradient_closed_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let (x, y) = random_instance(&mut rng, 15, 3);
        let beta = array![0.3, -0.2, 1.0];
        let grad = loss_gradient(Family::Gaussian, y.view(), &x, beta.view()).unwrap();
        let direct = x.t().dot(&(x.dot(&beta) - &y));
        for j in 0..3 {
            assert!((grad[j] - direct[j]).abs() < 1e-12);
        }
    }

    #[test]
    fn mle_intercept_only_gaussian_is_mean() {
        let z = Array2::ones((3, 1));
        let y = array![1.0, 2.0, 3.0];
        let fit = fit_mle(&z, y.view(), Family::Gaussian).unwrap();
        assert!((fit.beta[0] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn mle_intercept_only_logistic_is_logit() {
        let z = Array2::ones((4, 1));
        let y = array![1.0, 0.0, 0.0, 0.0];
        let fit = fit_mle(&z, y.view(), Family::Logistic).unwrap();
        let expect = (0.25_f64 / 0.75).ln();
        assert!((fit.beta[0] - expect).abs() < 1e-8);
    }

    #[test]
    fn gaussian_mle_matches_normal_equations() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let x = Array2::from_shape_fn((30, 4), |_| rng.gen_range(-1.0..1.0));
        let y = Array1::from_shape_fn(30, |_| rng.gen_range(-2.0..2.0));
        let fit = fit_mle(&x, y.view(), Family::Gaussian).unwrap();
        let g = x.t().dot(&x);
        let rhs = x.t().dot(&y);
        let oracle = linalg::solve_spd(&g, &rhs).unwrap();
        for j in 0..4 {
            assert!((fit.beta[j] - oracle[j]).abs() < 1e-10);
        }
    }

    #[test]
    fn rank_deficient_reported() {
        let mut z = Array2::ones((5, 2));
        z.column_mut(1).fill(1.0);
        let y = array![1.0, 0.0, 1.0, 0.0, 1.0];
        match fit_mle(&z, y.view(), Family::Gaussian) {
            Err(Error::RankDeficient { columns }) => assert_eq!(columns, vec!["col1"]),
            other => panic!("expected rank deficiency, got {other:?}"),
        }
    }

    #[test]
    fn gradient_zero_at_mle() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let (x, y) = random_instance(&mut rng, 40, 3);
        for family in [Family::Gaussian, Family::Logistic] {
            let fit = fit_mle(&x, y.view(), family).unwrap();
            let g = loss_gradient(family, y.view(), &x, fit.beta.view()).unwrap();
            let gmax = g.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
            assert!(gmax <= 1e-7 * (1.0 + fit.loss.abs()));
        }
    }

    #[test]
    fn gaussian_loss_offset_constant() {
        // Eq-style loss differs from 0.5 ||y - eta||^2 by 0.5 ||y||^2,
        // independent of beta
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let (x, y) = random_instance(&mut rng, 12, 3);
        let b1 = Array1::from_shape_fn(3, |_| rng.gen_range(-1.0..1.0));
        let b2 = Array1::from_shape_fn(3, |_| rng.gen_range(-1.0..1.0));
        let rss = |b: &Array1<f64>| {
            let r = &y - &x.dot(b);
            0.5 * r.dot(&r)
        };
        let l1 = loss(Family::Gaussian, y.view(), x.dot(&b1).view()).unwrap();
        let l2 = loss(Family::Gaussian, y.view(), x.dot(&b2).view()).unwrap();
        let d_loss = l1 - l2;
        let d_rss = rss(&b1) - rss(&b2);
        assert!((d_loss - d_rss).abs() < 1e-10);
    }

    #[test]
    fn convexity_along_segments() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for family in [Family::Gaussian, Family::Logistic] {
            let (x, y) = random_instance(&mut rng, 25, 4);
            for _ in 0..20 {
                let b1 = Array1::from_shape_fn(4, |_| rng.gen_range(-2.0..2.0));
                let b2 = Array1::from_shape_fn(4, |_| rng.gen_range(-2.0..2.0));
                let t: f64 = rng.gen_range(0.0..1.0);
                let mix = &b1 * t + &b2 * (1.0 - t);
                let lm = loss(family, y.view(), x.dot(&mix).view()).unwrap();
                let l1 = loss(family, y.view(), x.dot(&b1).view()).unwrap();
                let l2 = loss(family, y.view(), x.dot(&b2).view()).unwrap();
                assert!(lm <= t * l1 + (1.0 - t) * l2 + 1e-10);
            }
        }
    }
}
