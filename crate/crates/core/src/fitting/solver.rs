use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MAX_ITERATIONS: usize = 200;
pub const COST_RTOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitStatus {
    Converged,
    MaxIter,
    /// The normal equations are rank deficient at the solution; the affected
    /// uncertainties are infinite.
    Singular,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub names: Vec<String>,
    pub params: Vec<f64>,
    pub errors: Vec<f64>,
    pub covariance: Vec<Vec<f64>>,
    pub chi2_red: f64,
    pub status: FitStatus,
    pub iterations: usize,
    pub n_points: usize,
    pub warnings: Vec<String>,
}

impl FitResult {
    fn index(&self, name: &str) -> usize {
        self.names
            .iter()
            .position(|n| n == name)
            .unwrap_or_else(|| panic!("no parameter named {name}"))
    }

    pub fn get(&self, name: &str) -> f64 {
        self.params[self.index(name)]
    }

    pub fn error(&self, name: &str) -> f64 {
        self.errors[self.index(name)]
    }
}

/// Box constraints, enforced by clamping every trial point.
#[derive(Debug, Clone, PartialEq)]
pub struct Bounds {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Bounds {
    pub fn unbounded(n: usize) -> Self {
        Self {
            lower: vec![f64::NEG_INFINITY; n],
            upper: vec![f64::INFINITY; n],
        }
    }

    fn clamp(&self, p: &mut [f64]) {
        for (i, x) in p.iter_mut().enumerate() {
            *x = x.clamp(self.lower[i], self.upper[i]);
        }
    }
}

/// A least-squares problem: `model(p)` predicts all `y` at once.
pub struct Problem<'a> {
    pub model: &'a dyn Fn(&[f64]) -> Result<Vec<f64>>,
    pub y: &'a [f64],
    /// Per-point standard deviations; `None` for an unweighted fit.
    pub sigma: Option<&'a [f64]>,
    pub names: &'a [&'a str],
}

impl Problem<'_> {
    fn residuals(&self, p: &[f64]) -> Result<DVector<f64>> {
        let f = (self.model)(p)?;
        if f.len() != self.y.len() {
            return Err(Error::contract(format!(
                "model returned {} values for {} data points",
                f.len(),
                self.y.len()
            )));
        }
        if let Some(i) = f.iter().position(|v| !v.is_finite()) {
            return Err(Error::domain(format!(
                "model output is not finite at point {i} for parameters {p:?}"
            )));
        }
        Ok(DVector::from_iterator(
            f.len(),
            f.iter().enumerate().map(|(i, fi)| {
                let s = self.sigma.map_or(1.0, |s| s[i]);
                (self.y[i] - fi) / s
            }),
        ))
    }

    /// Jacobian of the weighted model `f/σ` by central differences with step
    /// `max(1e-6·|p|, 1e-9)`, one-sided where a bound blocks the step.
    pub fn jacobian(&self, p: &[f64], bounds: &Bounds) -> Result<DMatrix<f64>> {
        let n = self.y.len();
        let mut j = DMatrix::zeros(n, p.len());
        let mut q = p.to_vec();
        for k in 0..p.len() {
            let h = (1e-6 * p[k].abs()).max(1e-9);
            let hi = (p[k] + h).min(bounds.upper[k]);
            let lo = (p[k] - h).max(bounds.lower[k]);
            q[k] = hi;
            let rp = self.residuals(&q)?;
            q[k] = lo;
            let rm = self.residuals(&q)?;
            q[k] = p[k];
            // Residuals are (y − f)/σ, so ∂(f/σ) = −∂r.
            j.set_column(k, &((rm - rp) / (hi - lo)));
        }
        Ok(j)
    }
}

fn cost(r: &DVector<f64>) -> f64 {
    0.5 * r.norm_squared()
}

/// Damped Gauss-Newton (Levenberg-Marquardt with Marquardt diagonal scaling).
///
/// Stops when an accepted step changes the cost by less than `1e-10`
/// relatively, or after 200 iterations.
pub fn nlls_solve(
    problem: &Problem<'_>,
    init: &[f64],
    bounds: Option<&Bounds>,
) -> Result<FitResult> {
    let m = init.len();
    let n = problem.y.len();
    if problem.names.len() != m {
        return Err(Error::contract("one name per parameter required"));
    }
    if n < m + 1 {
        return Err(Error::config(format!(
            "{n} data points cannot constrain {m} parameters"
        )));
    }
    let bounds = bounds.cloned().unwrap_or_else(|| Bounds::unbounded(m));
    if init
        .iter()
        .enumerate()
        .any(|(i, &x)| !(x >= bounds.lower[i] && x <= bounds.upper[i]))
    {
        return Err(Error::config(format!(
            "initial point {init:?} outside bounds"
        )));
    }

    let mut p = init.to_vec();
    let mut r = problem.residuals(&p)?;
    let mut c = cost(&r);
    let mut lambda = 1e-3;
    let mut status = FitStatus::MaxIter;
    let mut iterations = 0;
    let mut jac = problem.jacobian(&p, &bounds)?;

    while iterations < MAX_ITERATIONS {
        iterations += 1;
        if c == 0.0 {
            status = FitStatus::Converged;
            break;
        }
        let a = jac.transpose() * &jac;
        let g = jac.transpose() * &r;
        let mut damped = a.clone();
        for i in 0..m {
            let d = a[(i, i)].max(1e-300);
            damped[(i, i)] += lambda * d;
        }
        let step = match damped.cholesky() {
            Some(ch) => ch.solve(&g),
            None => {
                lambda *= 10.0;
                if lambda > 1e16 {
                    status = FitStatus::Converged;
                    break;
                }
                continue;
            }
        };
        let mut trial = p.clone();
        for i in 0..m {
            trial[i] += step[i];
        }
        bounds.clamp(&mut trial);
        let r_trial = problem.residuals(&trial)?;
        let c_trial = cost(&r_trial);
        if c_trial <= c {
            let rel = (c - c_trial) / c;
            p = trial;
            r = r_trial;
            c = c_trial;
            lambda = (lambda / 10.0).max(1e-12);
            jac = problem.jacobian(&p, &bounds)?;
            if rel < COST_RTOL {
                status = FitStatus::Converged;
                break;
            }
        } else {
            lambda *= 10.0;
            if lambda > 1e16 {
                // No direction lowers the cost at machine precision.
                status = FitStatus::Converged;
                break;
            }
        }
    }

    let dof = (n - m) as f64;
    let chi2_red = 2.0 * c / dof;
    let a = jac.transpose() * &jac;
    let (cov, singular) = covariance(&a);
    let scale = if problem.sigma.is_some() {
        1.0
    } else {
        chi2_red
    };
    let covariance: Vec<Vec<f64>> = (0..m)
        .map(|i| {
            (0..m)
                .map(|k| {
                    let v = cov[(i, k)];
                    if v.is_finite() {
                        v * scale
                    } else {
                        v
                    }
                })
                .collect()
        })
        .collect();
    let errors = (0..m)
        .map(|i| {
            let v = covariance[i][i];
            if v.is_nan() {
                f64::INFINITY
            } else {
                v.max(0.0).sqrt()
            }
        })
        .collect();
    let mut warnings = Vec::new();
    if singular {
        status = FitStatus::Singular;
        warnings.push("normal equations are singular; some parameters are unconstrained".into());
    }
    Ok(FitResult {
        names: problem.names.iter().map(|s| s.to_string()).collect(),
        params: p,
        errors,
        covariance,
        chi2_red,
        status,
        iterations,
        n_points: n,
        warnings,
    })
}

/// Inverse of the normal matrix in its correlation form. Parameters with a
/// zero column, and directions with a relative eigenvalue below 1e-12, are
/// reported as infinite variance.
fn covariance(a: &DMatrix<f64>) -> (DMatrix<f64>, bool) {
    let m = a.nrows();
    let free: Vec<usize> = (0..m).filter(|&i| a[(i, i)] > 0.0).collect();
    let mut singular = free.len() < m;
    let mut cov = DMatrix::from_element(m, m, 0.0);
    for i in 0..m {
        if !free.contains(&i) {
            cov[(i, i)] = f64::INFINITY;
        }
    }
    if free.is_empty() {
        return (cov, true);
    }
    let s: Vec<f64> = free.iter().map(|&i| a[(i, i)].sqrt()).collect();
    let k = free.len();
    let corr = DMatrix::from_fn(k, k, |i, j| a[(free[i], free[j])] / (s[i] * s[j]));
    let eig = SymmetricEigen::new(corr);
    let max = eig.eigenvalues.max();
    let mut inv = DMatrix::zeros(k, k);
    let mut unbounded = vec![false; k];
    for (j, &ev) in eig.eigenvalues.iter().enumerate() {
        let v = eig.eigenvectors.column(j);
        if ev <= 1e-12 * max {
            singular = true;
            for i in 0..k {
                if v[i].abs() > 1e-6 {
                    unbounded[i] = true;
                }
            }
            continue;
        }
        inv += (v * v.transpose()) / ev;
    }
    for i in 0..k {
        for j in 0..k {
            cov[(free[i], free[j])] = if unbounded[i] || unbounded[j] {
                if i == j {
                    f64::INFINITY
                } else {
                    f64::NAN
                }
            } else {
                inv[(i, j)] / (s[i] * s[j])
            };
        }
    }
    (cov, singular)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_distr::{Distribution, Normal};

    #[test]
    fn exact_line() {
        let x: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let y: Vec<f64> = x.iter().map(|v| 3.0 * v - 2.0).collect();
        let model = |p: &[f64]| Ok(x.iter().map(|v| p[0] * v + p[1]).collect());
        let prob = Problem {
            model: &model,
            y: &y,
            sigma: None,
            names: &["slope", "intercept"],
        };
        let fit = nlls_solve(&prob, &[1.0, 0.0], None).unwrap();
        assert_eq!(fit.status, FitStatus::Converged);
        assert!((fit.get("slope") - 3.0).abs() < 1e-8);
        assert!((fit.get("intercept") + 2.0).abs() < 1e-8);
        assert!(fit.chi2_red < 1e-12);
    }

    fn exp_problem_data(seed: u64, noise: f64) -> (Vec<f64>, Vec<f64>) {
        let x: Vec<f64> = (0..60).map(|i| i as f64 * 0.1).collect();
        let mut r = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let nrm = Normal::new(0.0, noise).unwrap();
        let y = x
            .iter()
            .map(|v| 5.0 * (-0.8 * v).exp() + nrm.sample(&mut r))
            .collect();
        (x, y)
    }

    #[test]
    fn exponential_rate_coverage() {
        let noise = 0.05;
        let mut inside = 0;
        for seed in 0..100 {
            let (x, y) = exp_problem_data(seed, noise);
            let sigma = vec![noise; x.len()];
            let model = |p: &[f64]| Ok(x.iter().map(|v| p[0] * (-p[1] * v).exp()).collect());
            let prob = Problem {
                model: &model,
                y: &y,
                sigma: Some(&sigma),
                names: &["a", "k"],
            };
            let fit = nlls_solve(&prob, &[1.0, 0.3], None).unwrap();
            assert_eq!(fit.status, FitStatus::Converged);
            if (fit.get("k") - 0.8).abs() < 3.0 * fit.error("k") {
                inside += 1;
            }
        }
        assert!(inside >= 95, "{inside}");
    }

    #[test]
    fn start_at_truth_converges_fast() {
        let (x, y) = exp_problem_data(1, 0.05);
        let model = |p: &[f64]| Ok(x.iter().map(|v| p[0] * (-p[1] * v).exp()).collect());
        let prob = Problem {
            model: &model,
            y: &y,
            sigma: None,
            names: &["a", "k"],
        };
        let fit = nlls_solve(&prob, &[5.0, 0.8], None).unwrap();
        assert_eq!(fit.status, FitStatus::Converged);
        assert!(fit.iterations <= 3, "{}", fit.iterations);
    }

    #[test]
    fn nan_output_is_domain_error() {
        let y = vec![1.0; 5];
        let model = |p: &[f64]| Ok(vec![p[0].sqrt(); 5]);
        let prob = Problem {
            model: &model,
            y: &y,
            sigma: None,
            names: &["a"],
        };
        assert!(matches!(
            nlls_solve(&prob, &[-1.0], None),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn degenerate_parameters_flagged() {
        let x: Vec<f64> = (0..8).map(|i| i as f64).collect();
        let y: Vec<f64> = x.iter().map(|v| 2.0 * v + 0.1 * (v * 1.7).sin()).collect();
        // Only the product p0·p1 is identifiable.
        let model = |p: &[f64]| Ok(x.iter().map(|v| p[0] * p[1] * v).collect());
        let prob = Problem {
            model: &model,
            y: &y,
            sigma: None,
            names: &["a", "b"],
        };
        let fit = nlls_solve(&prob, &[1.0, 1.0], None).unwrap();
        assert_eq!(fit.status, FitStatus::Singular);
        assert!(fit.errors.iter().all(|e| e.is_infinite()));
    }

    #[test]
    fn bounds_are_respected() {
        let x: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let y: Vec<f64> = x.iter().map(|v| -1.0 * v).collect();
        let model = |p: &[f64]| Ok(x.iter().map(|v| p[0] * v).collect());
        let prob = Problem {
            model: &model,
            y: &y,
            sigma: None,
            names: &["a"],
        };
        let b = Bounds {
            lower: vec![0.0],
            upper: vec![10.0],
        };
        let fit = nlls_solve(&prob, &[2.0], Some(&b)).unwrap();
        assert_eq!(fit.get("a"), 0.0);
        assert!(matches!(
            nlls_solve(&prob, &[-2.0], Some(&b)),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn too_few_points() {
        let y = vec![1.0, 2.0];
        let model = |p: &[f64]| Ok(vec![p[0], p[1]]);
        let prob = Problem {
            model: &model,
            y: &y,
            sigma: None,
            names: &["a", "b"],
        };
        assert!(matches!(
            nlls_solve(&prob, &[0.0, 0.0], None),
            Err(Error::Config(_))
        ));
    }
}
