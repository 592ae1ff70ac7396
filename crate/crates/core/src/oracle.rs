//! Independent verification oracles: central finite differences and a
//! literal (linear-space, unstabilized) mixture likelihood.
//!
//! Nothing in here shares arithmetic with [`crate::genotype`]; these are the
//! references the analytic gradients and log-densities are checked against.
//!
//! Gradient checks difference a double-double evaluation of the
//! log-density. In plain doubles the rounding error of a log-density near 10
//! is about 1e-10 after dividing by `2 * 1e-5`, which swamps coordinates whose
//! true gradient is below 1e-6 (components with negligible responsibility).

use std::f64::consts::PI;

use ndarray::Array2;
use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::Serialize;
use thiserror::Error;

use crate::dd::Dd;
use crate::genotype::{Genotype, GenotypeModel, ModelKind, Params};
use crate::plastic::RULE_DIM;
use crate::seed::{self, Purpose};

/// Finite-difference step used by the verification suite.
pub const DEFAULT_STEP: f64 = 1e-5;
/// Maximum relative error accepted by the verification suite.
pub const DEFAULT_TOLERANCE: f64 = 1e-4;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error("function is not finite at coordinate {coordinate} (step {step})")]
    NonFinite { coordinate: usize, step: f64 },
    #[error("step must be positive and finite, got {0}")]
    BadStep(f64),
    #[error("instance not applicable: linear-space density is {0}")]
    Inapplicable(f64),
    #[error("dimension mismatch: {0}")]
    Shape(String),
}

/// `|a - f| / max(|a|, |f|, 1e-8)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

/// Central differences `(f(x + s e) - f(x - s e)) / 2s` for every coordinate.
pub fn finite_diff<F>(f: F, theta: &[f64], step: f64) -> Result<Vec<f64>, OracleError>
where
    F: Fn(&[f64]) -> f64,
{
    if !(step.is_finite() && step > 0.0) {
        return Err(OracleError::BadStep(step));
    }
    let mut x = theta.to_vec();
    let mut grad = Vec::with_capacity(theta.len());
    for i in 0..theta.len() {
        let orig = x[i];
        x[i] = orig + step;
        let fp = f(&x);
        x[i] = orig - step;
        let fm = f(&x);
        x[i] = orig;
        if !(fp.is_finite() && fm.is_finite()) {
            return Err(OracleError::NonFinite { coordinate: i, step });
        }
        grad.push((fp - fm) / (2.0 * step));
    }
    Ok(grad)
}

/// Central differences of an extended-precision function. The denominator is
/// the exact distance between the two rounded evaluation points.
pub(crate) fn finite_diff_dd<F>(f: F, theta: &[f64], step: f64) -> Result<Vec<f64>, OracleError>
where
    F: Fn(&[f64]) -> Dd,
{
    if !(step.is_finite() && step > 0.0) {
        return Err(OracleError::BadStep(step));
    }
    let mut x = theta.to_vec();
    let mut grad = Vec::with_capacity(theta.len());
    for i in 0..theta.len() {
        let orig = x[i];
        let (xp, xm) = (orig + step, orig - step);
        x[i] = xp;
        let fp = f(&x);
        x[i] = xm;
        let fm = f(&x);
        x[i] = orig;
        if !(fp.is_finite() && fm.is_finite()) {
            return Err(OracleError::NonFinite { coordinate: i, step });
        }
        grad.push(((fp - fm) / Dd::diff(xp, xm)).to_f64());
    }
    Ok(grad)
}

/// Log-density of `g` under any model kind, computed from the definitions in
/// double-double precision. Mixture terms are summed in linear space.
pub fn precise_log_prob(
    kind: ModelKind,
    params: &Params,
    sigma: f64,
    assignment: Option<&[usize]>,
    g: &Genotype,
) -> Result<Dd, OracleError> {
    let mu = &params.mu;
    let (m, d) = mu.dim();
    let n = g.h.nrows();
    if g.h.ncols() != d {
        return Err(OracleError::Shape(format!("mu {:?}, h {:?}", mu.dim(), g.h.dim())));
    }
    let s2 = Dd::from_f64(sigma) * Dd::from_f64(sigma);
    // -|h_i - mu_k|^2 / (2 sigma^2)
    let exponent = |i: usize, k: usize| -> Dd {
        let mut sq = Dd::ZERO;
        for j in 0..d {
            let diff = Dd::diff(g.h[[i, j]], mu[[k, j]]);
            sq = sq + diff * diff;
        }
        -(sq / (Dd::from_f64(2.0) * s2))
    };
    let log_norm = Dd::from_f64(-(d as f64) / 2.0) * (Dd::from_f64(2.0 * PI) * s2).ln();
    let log_z = |i: usize| -> Dd {
        let lambda = params.lambda.as_ref().expect("mixture kinds carry lambda");
        let mut z = Dd::ZERO;
        for k in 0..m {
            z = z + Dd::from_f64(lambda[[i, k]]).exp();
        }
        z.ln()
    };
    let fixed = |comp: &dyn Fn(usize) -> usize| -> Dd {
        let mut total = Dd::ZERO;
        for i in 0..n {
            total = total + exponent(i, comp(i)) + log_norm;
        }
        total
    };
    let total = match kind {
        ModelKind::PerSynapse => {
            if m != n {
                return Err(OracleError::Shape(format!("{m} rows of mu for {n} synapses")));
            }
            fixed(&|i| i)
        }
        ModelKind::FixedRandom => {
            let a = assignment.ok_or_else(|| OracleError::Shape("missing assignment".into()))?;
            fixed(&|i| a[i])
        }
        ModelKind::JointGmm => {
            let ks = g.k.as_ref().ok_or_else(|| OracleError::Shape("missing k".into()))?;
            let lambda = params
                .lambda
                .as_ref()
                .ok_or_else(|| OracleError::Shape("missing lambda".into()))?;
            let mut total = fixed(&|i| ks[i]);
            for (i, &k) in ks.iter().enumerate() {
                total = total + Dd::from_f64(lambda[[i, k]]) - log_z(i);
            }
            total
        }
        ModelKind::SharedGmm | ModelKind::SingleRule => {
            let lambda = params
                .lambda
                .as_ref()
                .ok_or_else(|| OracleError::Shape("missing lambda".into()))?;
            if lambda.dim() != (n, m) {
                return Err(OracleError::Shape(format!("lambda {:?}", lambda.dim())));
            }
            let mut total = Dd::ZERO;
            for i in 0..n {
                let mut mixture = Dd::ZERO;
                for k in 0..m {
                    mixture = mixture + (exponent(i, k) + Dd::from_f64(lambda[[i, k]])).exp();
                }
                if mixture.hi == 0.0 {
                    return Err(OracleError::Inapplicable(0.0));
                }
                total = total + mixture.ln() - log_z(i) + log_norm;
            }
            total
        }
    };
    Ok(total)
}

/// `log prod_i sum_k N(h_i | mu_k, sigma^2 I) softmax(lambda_i)_k`, evaluated
/// literally in linear space. Only usable on small instances.
pub fn brute_force_gmm_log_prob(
    mu: &Array2<f64>,
    lambda: &Array2<f64>,
    sigma: f64,
    h: &Array2<f64>,
) -> Result<f64, OracleError> {
    let (m, d) = mu.dim();
    if lambda.ncols() != m || lambda.nrows() != h.nrows() || h.ncols() != d {
        return Err(OracleError::Shape(format!(
            "mu {:?}, lambda {:?}, h {:?}",
            mu.dim(),
            lambda.dim(),
            h.dim()
        )));
    }
    let norm = (2.0 * PI * sigma * sigma).powf(-(d as f64) / 2.0);
    let mut product = 1.0;
    for i in 0..h.nrows() {
        let z: f64 = (0..m).map(|k| lambda[[i, k]].exp()).sum();
        let mut mixture = 0.0;
        for k in 0..m {
            let mut sq = 0.0;
            for j in 0..d {
                let diff = h[[i, j]] - mu[[k, j]];
                sq += diff * diff;
            }
            let density = norm * (-sq / (2.0 * sigma * sigma)).exp();
            mixture += density * lambda[[i, k]].exp() / z;
        }
        product *= mixture;
    }
    if product == 0.0 || !product.is_finite() {
        return Err(OracleError::Inapplicable(product));
    }
    Ok(product.ln())
}

/// Outcome of a batch of gradient checks.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradCheckReport {
    pub kind: ModelKind,
    pub max_rel_error: f64,
    /// `(trial, flat parameter index)` of the worst coordinate.
    pub argmax: (usize, usize),
    pub step: f64,
    pub trials: usize,
    /// Trials whose finite differences hit a non-finite value.
    pub skipped: usize,
    pub tolerance: f64,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.skipped == 0 && self.max_rel_error < self.tolerance
    }
}

/// A randomized model instance with `N <= 8`, `M <= 3` and an individual
/// whose rows lie within 3 sigma (per coordinate) of their component mean.
#[derive(Debug, Clone)]
pub struct Instance {
    pub model: GenotypeModel,
    pub genotype: Genotype,
}

pub fn random_instance(kind: ModelKind, seed: u64) -> Instance {
    let mut rng = seed::rng_from_seed(seed);
    let n = rng.random_range(1..=8usize);
    let m = match kind {
        ModelKind::PerSynapse => n,
        ModelKind::SingleRule => 1,
        _ => rng.random_range(1..=3usize),
    };
    let sigma = rng.random_range(0.5..1.0);
    let mut normal = |scale: f64| -> f64 {
        let z: f64 = rng.sample(StandardNormal);
        scale * z
    };
    let mu = Array2::from_shape_simple_fn((m, RULE_DIM), || normal(1.0));
    let lambda = kind
        .has_lambda()
        .then(|| Array2::from_shape_simple_fn((n, m), || normal(1.0)));
    let assignment =
        (kind == ModelKind::FixedRandom).then(|| (0..n).map(|_| rng.random_range(0..m)).collect::<Vec<usize>>());
    let comps: Vec<usize> = match (&assignment, kind) {
        (Some(a), _) => a.clone(),
        (None, ModelKind::PerSynapse) => (0..n).collect(),
        _ => (0..n).map(|_| rng.random_range(0..m)).collect(),
    };
    let h = Array2::from_shape_fn((n, RULE_DIM), |(i, j)| {
        mu[[comps[i], j]] + sigma * rng.random_range(-3.0..3.0)
    });
    let model = GenotypeModel::from_parts(kind, Params { mu, lambda }, sigma, assignment)
        .expect("instance shapes are consistent");
    let k = (kind == ModelKind::JointGmm).then_some(comps);
    Instance {
        model,
        genotype: Genotype { h, k },
    }
}

/// Compares `grad_log_prob` against central differences of the log-density
/// on `trials` random instances of `kind`.
pub fn check_gradients(kind: ModelKind, trials: usize, base_seed: u64, step: f64) -> GradCheckReport {
    let mut report = GradCheckReport {
        kind,
        max_rel_error: 0.0,
        argmax: (0, 0),
        step,
        trials,
        skipped: 0,
        tolerance: DEFAULT_TOLERANCE,
    };
    for t in 0..trials {
        let inst = random_instance(
            kind,
            seed::derive(base_seed, Purpose::Verify, kind.tag().into(), t as u64, 0),
        );
        let analytic = inst
            .model
            .grad_log_prob(&inst.genotype)
            .expect("instance is well-formed")
            .to_flat();
        let theta = inst.model.params().to_flat();
        let f = |x: &[f64]| {
            let mut p = inst.model.params().clone();
            p.set_from_flat(x).expect("same length");
            precise_log_prob(kind, &p, inst.model.sigma(), inst.model.assignment(), &inst.genotype)
                .unwrap_or(Dd::from_f64(f64::NAN))
        };
        match finite_diff_dd(f, &theta, step) {
            Ok(numeric) => {
                for (c, (a, n)) in analytic.iter().zip(&numeric).enumerate() {
                    let e = relative_error(*a, *n);
                    if e > report.max_rel_error {
                        report.max_rel_error = e;
                        report.argmax = (t, c);
                    }
                }
            }
            Err(_) => report.skipped += 1,
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn constant_function_has_zero_gradient() {
        let g = finite_diff(|_| 3.5, &[1.0, -2.0, 0.5], 1e-5).unwrap();
        assert_eq!(g, vec![0.0; 3]);
    }

    #[test]
    fn linear_function_is_exact() {
        let v = [0.5, -1.25, 2.0, 0.0];
        let f = |x: &[f64]| x.iter().zip(&v).map(|(a, b)| a * b).sum::<f64>();
        let g = finite_diff(f, &[0.1, 0.2, -0.3, 0.4], 1e-5).unwrap();
        for (a, b) in g.iter().zip(&v) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn non_finite_evaluations_are_reported() {
        let f = |x: &[f64]| if x[1] > 0.0 { f64::NAN } else { x[0] };
        assert_eq!(
            finite_diff(f, &[0.0, 0.0], 1e-5),
            Err(OracleError::NonFinite {
                coordinate: 1,
                step: 1e-5
            })
        );
        assert!(matches!(
            finite_diff(|_| 0.0, &[0.0], 0.0),
            Err(OracleError::BadStep(_))
        ));
    }

    #[test]
    fn brute_force_density_at_mean() {
        let mu = array![[0.3, -0.2, 1.0, 0.0, 0.5]];
        let v = brute_force_gmm_log_prob(&mu, &array![[0.0]], 0.1, &mu).unwrap();
        assert!((v - 6.918_232_798_946_865).abs() < 1e-10);
    }

    #[test]
    fn brute_force_is_monotone_toward_the_mean() {
        let mu = array![[0.0, 0.0, 0.0, 0.0, 0.0]];
        let mut prev = f64::NEG_INFINITY;
        for s in (0..=10).rev() {
            let x = s as f64 * 0.05;
            let h = array![[x, -x, x, 0.0, 0.5 * x]];
            let v = brute_force_gmm_log_prob(&mu, &array![[0.0]], 0.1, &h).unwrap();
            assert!(v >= prev);
            prev = v;
        }
    }

    #[test]
    fn brute_force_reports_underflow() {
        let mu = array![[0.0; 5]];
        let h = array![[100.0; 5]];
        assert!(matches!(
            brute_force_gmm_log_prob(&mu, &array![[0.0]], 0.1, &h),
            Err(OracleError::Inapplicable(_))
        ));
    }

    #[test]
    fn precise_log_prob_agrees_with_model() {
        for kind in ModelKind::ALL {
            for s in 0..30 {
                let inst = random_instance(kind, 100 + s);
                let m = &inst.model;
                let p = precise_log_prob(kind, m.params(), m.sigma(), m.assignment(), &inst.genotype).unwrap();
                let lp = m.log_prob(&inst.genotype).unwrap();
                assert!(
                    (p.to_f64() - lp).abs() < 1e-11 * lp.abs().max(1.0),
                    "{kind:?}: {p:?} vs {lp}"
                );
            }
        }
    }

    #[test]
    fn precise_differences_resolve_tiny_gradients() {
        // the second component is ~9 sigma away, so its mean gradient is ~1e-17
        let mu = array![[0.0; 5], [4.5, 0.0, 0.0, 0.0, 0.0]];
        let params = Params {
            mu,
            lambda: Some(array![[0.0, 0.0]]),
        };
        let g = Genotype::new(array![[0.0; 5]]);
        let f = |x: &[f64]| {
            let mut p = params.clone();
            p.set_from_flat(x).unwrap();
            precise_log_prob(ModelKind::SharedGmm, &p, 0.5, None, &g).unwrap()
        };
        let numeric = finite_diff_dd(f, &params.to_flat(), DEFAULT_STEP).unwrap();
        // d/dmu_2[0] = r_2 * (h - mu_2) / sigma^2 with r_2 = e^{-40.5} / (1 + e^{-40.5})
        let r2 = (-40.5f64).exp() / (1.0 + (-40.5f64).exp());
        let exact = r2 * (0.0 - 4.5) / 0.25;
        assert!(relative_error(exact, numeric[5]) < 1e-6, "{exact} vs {}", numeric[5]);
    }

    #[test]
    fn instances_respect_size_limits() {
        for kind in ModelKind::ALL {
            for s in 0..20 {
                let inst = random_instance(kind, s);
                assert!(inst.model.n_rows() <= 8);
                if kind != ModelKind::PerSynapse {
                    assert!(inst.model.n_components() <= 3);
                }
                assert!(inst.model.log_prob(&inst.genotype).is_ok());
            }
        }
    }
}
