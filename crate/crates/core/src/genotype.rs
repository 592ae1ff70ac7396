//! Distributions `p(z | theta)` over per-synapse Hebbian rules.
//!
//! Every model here draws one row `h_i` per synapse (width 5 for Hebbian
//! rules; width 1 when the rows are direct network parameters, as for the
//! static and recurrent baselines). The meta-parameters `theta` are a
//! [`Params`] value: component means `mu` and, for the mixture kinds,
//! assignment logits `lambda`.
//!
//! | kind         | `mu`    | `lambda` | individual        |
//! |--------------|---------|----------|-------------------|
//! | per-synapse  | `N x w` | none     | `h`               |
//! | shared-gmm   | `M x 5` | `N x M`  | `h` (k marginal)  |
//! | joint-gmm    | `M x 5` | `N x M`  | `{h, k}`          |
//! | single-rule  | `1 x 5` | `N x 1`  | `h`               |
//! | fixed-random | `M x 5` | none     | `h`, fixed `k`    |
//!
//! Gradients of `log p` are closed form. For the mixture,
//! with responsibilities `r_ik` (posterior of component `k` for row `i`) and
//! mixing weights `p_ik = softmax(lambda_i)_k`:
//! `d/d mu_k = sum_i r_ik (h_i - mu_k) / sigma^2` and
//! `d/d lambda_ik = r_ik - p_ik`.
//!
//! Component indices in [`Genotype::k`] are 0-based.

use std::f64::consts::PI;

use ndarray::{Array2, ArrayView1, Zip};
use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::plastic::{RuleAssignment, Topology, RULE_DIM};
use crate::seed::{self, Rng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    PerSynapse,
    SharedGmm,
    JointGmm,
    SingleRule,
    FixedRandom,
}

impl ModelKind {
    pub const ALL: [ModelKind; 5] = [
        ModelKind::PerSynapse,
        ModelKind::SharedGmm,
        ModelKind::JointGmm,
        ModelKind::SingleRule,
        ModelKind::FixedRandom,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::PerSynapse => "per-synapse",
            ModelKind::SharedGmm => "shared-gmm",
            ModelKind::JointGmm => "joint-gmm",
            ModelKind::SingleRule => "single-rule",
            ModelKind::FixedRandom => "fixed-random",
        }
    }

    /// Stable numeric tag used by the checkpoint format.
    pub fn tag(self) -> u8 {
        match self {
            ModelKind::PerSynapse => 0,
            ModelKind::SharedGmm => 1,
            ModelKind::JointGmm => 2,
            ModelKind::SingleRule => 3,
            ModelKind::FixedRandom => 4,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.tag() == tag)
    }

    pub fn has_lambda(self) -> bool {
        matches!(self, ModelKind::SharedGmm | ModelKind::JointGmm | ModelKind::SingleRule)
    }
}

/// Meta-parameters `theta`, also used for gradients and optimizer moments.
#[derive(Debug, Clone, PartialEq)]
pub struct Params {
    pub mu: Array2<f64>,
    pub lambda: Option<Array2<f64>>,
}

impl Params {
    pub fn zeros_like(&self) -> Self {
        Self {
            mu: Array2::zeros(self.mu.dim()),
            lambda: self.lambda.as_ref().map(|l| Array2::zeros(l.dim())),
        }
    }

    pub fn len(&self) -> usize {
        self.mu.len() + self.lambda.as_ref().map_or(0, |l| l.len())
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn same_shape(&self, other: &Params) -> bool {
        self.mu.dim() == other.mu.dim()
            && self.lambda.as_ref().map(|l| l.dim()) == other.lambda.as_ref().map(|l| l.dim())
    }

    fn check_shape(&self, other: &Params, context: &'static str) -> Result<()> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(Error::DimensionMismatch {
                context,
                expected: self.len(),
                actual: other.len(),
            })
        }
    }

    /// `mu` entries followed by `lambda` entries, both row-major.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.len());
        out.extend(self.mu.iter());
        if let Some(l) = &self.lambda {
            out.extend(l.iter());
        }
        out
    }

    pub fn set_from_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.len() {
            return Err(Error::DimensionMismatch {
                context: "flat parameters",
                expected: self.len(),
                actual: flat.len(),
            });
        }
        let mut it = flat.iter();
        for v in self.mu.iter_mut() {
            *v = *it.next().expect("length checked");
        }
        if let Some(l) = &mut self.lambda {
            for v in l.iter_mut() {
                *v = *it.next().expect("length checked");
            }
        }
        Ok(())
    }

    /// `self += k * other`.
    pub fn add_scaled(&mut self, k: f64, other: &Params) -> Result<()> {
        self.check_shape(other, "parameter update")?;
        self.zip_mut_with(other, |a, b| *a += k * b);
        Ok(())
    }

    /// Applies `f` to every aligned pair of entries. Shapes must match.
    pub fn zip_mut_with(&mut self, other: &Params, mut f: impl FnMut(&mut f64, f64)) {
        Zip::from(&mut self.mu).and(&other.mu).for_each(|a, &b| f(a, b));
        if let (Some(a), Some(b)) = (&mut self.lambda, &other.lambda) {
            Zip::from(a).and(b).for_each(|a, &b| f(a, b));
        }
    }

    pub fn mu_inf_norm(&self) -> f64 {
        self.mu.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    pub fn lambda_inf_norm(&self) -> Option<f64> {
        self.lambda
            .as_ref()
            .map(|l| l.iter().fold(0.0_f64, |m, v| m.max(v.abs())))
    }

    pub fn is_finite(&self) -> bool {
        self.mu.iter().all(|v| v.is_finite()) && self.lambda.as_ref().is_none_or(|l| l.iter().all(|v| v.is_finite()))
    }
}

/// One individual: sampled rows and, where the model records them, the
/// component each row was drawn from.
#[derive(Debug, Clone, PartialEq)]
pub struct Genotype {
    pub h: Array2<f64>,
    pub k: Option<Vec<usize>>,
}

impl Genotype {
    pub fn new(h: Array2<f64>) -> Self {
        Self { h, k: None }
    }
}

/// `max(1, round(N / rho))`.
pub fn rho_to_components(n_synapses: usize, rho: usize) -> Result<usize> {
    if rho == 0 || rho > n_synapses {
        return Err(Error::RhoOutOfRange { rho, n_synapses });
    }
    let m = (n_synapses as f64 / rho as f64).round() as usize;
    Ok(m.max(1))
}

/// Log density of a spherical normal `N(h | mu, sigma^2 I)`.
#[inline]
pub fn log_normal(h: ArrayView1<f64>, mu: ArrayView1<f64>, sigma: f64) -> f64 {
    let d = h.len() as f64;
    let sq: f64 = h.iter().zip(mu.iter()).map(|(a, b)| (a - b) * (a - b)).sum();
    -0.5 * d * (2.0 * PI * sigma * sigma).ln() - sq / (2.0 * sigma * sigma)
}

/// `log(sum(exp(x)))`, stable for any finite input.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// Log-softmax of one logit row into `out`.
fn log_softmax_into(logits: ArrayView1<f64>, out: &mut [f64]) {
    let row: Vec<f64> = logits.to_vec();
    let lse = log_sum_exp(&row);
    for (o, l) in out.iter_mut().zip(row) {
        *o = l - lse;
    }
}

/// Parameterized distribution over genotypes.
#[derive(Debug, Clone, PartialEq)]
pub struct GenotypeModel {
    kind: ModelKind,
    params: Params,
    sigma: f64,
    n_rows: usize,
    /// Fixed component per row, fixed-random kind only.
    assignment: Option<Vec<usize>>,
}

fn normal_matrix(rows: usize, cols: usize, std: f64, rng: &mut Rng) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || {
        let z: f64 = rng.sample(StandardNormal);
        std * z
    })
}

impl GenotypeModel {
    /// Independent normal per row, `mu` initialized i.i.d. `N(0, mu_init_std^2)`.
    pub fn per_synapse(n: usize, width: usize, sigma: f64, mu_init_std: f64, seed: u64) -> Result<Self> {
        let mut rng = seed::rng_from_seed(seed);
        let mu = normal_matrix(n, width, mu_init_std, &mut rng);
        Self::from_parts(ModelKind::PerSynapse, Params { mu, lambda: None }, sigma, None)
    }

    /// Mixture of `m` shared rules with uniform initial assignment logits.
    pub fn shared_gmm(n: usize, m: usize, sigma: f64, mu_init_std: f64, seed: u64) -> Result<Self> {
        Self::mixture(ModelKind::SharedGmm, n, m, sigma, mu_init_std, seed)
    }

    /// Mixture whose individuals carry their sampled components.
    pub fn joint_gmm(n: usize, m: usize, sigma: f64, mu_init_std: f64, seed: u64) -> Result<Self> {
        Self::mixture(ModelKind::JointGmm, n, m, sigma, mu_init_std, seed)
    }

    /// One rule shared by every synapse (the mixture with `M = 1`).
    pub fn single_rule(n: usize, sigma: f64, mu_init_std: f64, seed: u64) -> Result<Self> {
        Self::mixture(ModelKind::SingleRule, n, 1, sigma, mu_init_std, seed)
    }

    /// `m` shared rules with a uniformly random assignment drawn once from
    /// `assignment_seed`; only `mu` is learned.
    pub fn fixed_random(
        n: usize,
        m: usize,
        sigma: f64,
        mu_init_std: f64,
        seed: u64,
        assignment_seed: u64,
    ) -> Result<Self> {
        if m == 0 {
            return Err(Error::InvalidModel("need at least one component".into()));
        }
        let mut rng = seed::rng_from_seed(seed);
        let mu = normal_matrix(m, RULE_DIM, mu_init_std, &mut rng);
        let mut arng = seed::rng_from_seed(assignment_seed);
        let assignment = (0..n).map(|_| arng.random_range(0..m)).collect();
        Self::from_parts(
            ModelKind::FixedRandom,
            Params { mu, lambda: None },
            sigma,
            Some(assignment),
        )
    }

    fn mixture(kind: ModelKind, n: usize, m: usize, sigma: f64, mu_init_std: f64, seed: u64) -> Result<Self> {
        if m == 0 {
            return Err(Error::InvalidModel("need at least one component".into()));
        }
        let mut rng = seed::rng_from_seed(seed);
        let mu = normal_matrix(m, RULE_DIM, mu_init_std, &mut rng);
        let lambda = Some(Array2::zeros((n, m)));
        Self::from_parts(kind, Params { mu, lambda }, sigma, None)
    }

    /// Reassembles a model from raw parts, validating every shape invariant.
    pub fn from_parts(kind: ModelKind, params: Params, sigma: f64, assignment: Option<Vec<usize>>) -> Result<Self> {
        if !(sigma.is_finite() && sigma > 0.0) {
            return Err(Error::InvalidModel(format!("sigma must be positive, got {sigma}")));
        }
        let (mu_rows, width) = params.mu.dim();
        if mu_rows == 0 || width == 0 {
            return Err(Error::InvalidModel("empty mean matrix".into()));
        }
        let n_rows = match kind {
            ModelKind::PerSynapse => {
                if params.lambda.is_some() || assignment.is_some() {
                    return Err(Error::InvalidModel(
                        "per-synapse model takes neither logits nor an assignment".into(),
                    ));
                }
                mu_rows
            }
            ModelKind::SharedGmm | ModelKind::JointGmm | ModelKind::SingleRule => {
                if width != RULE_DIM {
                    return Err(Error::InvalidModel(format!(
                        "mixture components must have width {RULE_DIM}, got {width}"
                    )));
                }
                if assignment.is_some() {
                    return Err(Error::InvalidModel("mixture models learn their assignment".into()));
                }
                let lambda = params
                    .lambda
                    .as_ref()
                    .ok_or_else(|| Error::InvalidModel("mixture model needs logits".into()))?;
                if lambda.ncols() != mu_rows {
                    return Err(Error::InvalidModel(format!(
                        "logits have {} columns for {} components",
                        lambda.ncols(),
                        mu_rows
                    )));
                }
                if kind == ModelKind::SingleRule && mu_rows != 1 {
                    return Err(Error::InvalidModel(
                        "single-rule model has exactly one component".into(),
                    ));
                }
                if lambda.nrows() == 0 {
                    return Err(Error::InvalidModel("no synapses".into()));
                }
                lambda.nrows()
            }
            ModelKind::FixedRandom => {
                if width != RULE_DIM {
                    return Err(Error::InvalidModel(format!(
                        "shared rules must have width {RULE_DIM}, got {width}"
                    )));
                }
                if params.lambda.is_some() {
                    return Err(Error::InvalidModel("fixed-random model has no logits".into()));
                }
                let a = assignment
                    .as_ref()
                    .ok_or_else(|| Error::InvalidModel("fixed-random model needs an assignment".into()))?;
                if a.is_empty() {
                    return Err(Error::InvalidModel("no synapses".into()));
                }
                if let Some(&bad) = a.iter().find(|&&k| k >= mu_rows) {
                    return Err(Error::InvalidModel(format!(
                        "assignment index {bad} out of range for {mu_rows} components"
                    )));
                }
                a.len()
            }
        };
        Ok(Self {
            kind,
            params,
            sigma,
            n_rows,
            assignment,
        })
    }

    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    pub fn params(&self) -> &Params {
        &self.params
    }

    /// Mutable access for optimizer updates. Callers must not change shapes.
    pub fn params_mut(&mut self) -> &mut Params {
        &mut self.params
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    /// Rows per genotype (N).
    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    /// Row width (5 for Hebbian rules).
    pub fn width(&self) -> usize {
        self.params.mu.ncols()
    }

    /// M for the shared kinds, N for per-synapse.
    pub fn n_components(&self) -> usize {
        self.params.mu.nrows()
    }

    pub fn assignment(&self) -> Option<&[usize]> {
        self.assignment.as_deref()
    }

    fn check_genotype(&self, g: &Genotype) -> Result<()> {
        if g.h.dim() != (self.n_rows, self.width()) {
            return Err(Error::DimensionMismatch {
                context: "genotype rows x width",
                expected: self.n_rows * self.width(),
                actual: g.h.len(),
            });
        }
        if self.kind == ModelKind::JointGmm {
            let k = g.k.as_ref().ok_or(Error::MissingComponents("joint-gmm"))?;
            if k.len() != self.n_rows {
                return Err(Error::DimensionMismatch {
                    context: "component indices",
                    expected: self.n_rows,
                    actual: k.len(),
                });
            }
            if let Some(&bad) = k.iter().find(|&&c| c >= self.n_components()) {
                return Err(Error::InvalidModel(format!("component index {bad} out of range")));
            }
        }
        Ok(())
    }

    /// Mixing probabilities `softmax(lambda_i)` as an `N x M` matrix.
    pub fn mixing_probabilities(&self) -> Result<Array2<f64>> {
        let lambda = self.lambda_or_err("mixing_probabilities")?;
        let mut out = Array2::zeros(lambda.dim());
        let mut buf = vec![0.0; lambda.ncols()];
        for (i, row) in lambda.rows().into_iter().enumerate() {
            log_softmax_into(row, &mut buf);
            for (k, lp) in buf.iter().enumerate() {
                out[[i, k]] = lp.exp();
            }
        }
        Ok(out)
    }

    fn lambda_or_err(&self, op: &'static str) -> Result<&Array2<f64>> {
        self.params.lambda.as_ref().ok_or(Error::WrongModelKind {
            op,
            kind: self.kind.name(),
        })
    }

    /// Draws one genotype, deterministically from `seed`.
    pub fn sample(&self, seed: u64) -> Genotype {
        let mut rng = seed::rng_from_seed(seed);
        self.sample_with(&mut rng)
    }

    pub fn sample_with(&self, rng: &mut Rng) -> Genotype {
        let width = self.width();
        let mut h = Array2::zeros((self.n_rows, width));
        let mu = &self.params.mu;
        let mut draw_row = |i: usize, c: usize, rng: &mut Rng| {
            for d in 0..width {
                let z: f64 = rng.sample(StandardNormal);
                h[[i, d]] = mu[[c, d]] + self.sigma * z;
            }
        };
        match self.kind {
            ModelKind::PerSynapse => {
                for i in 0..self.n_rows {
                    draw_row(i, i, rng);
                }
                Genotype { h, k: None }
            }
            ModelKind::FixedRandom => {
                let a = self.assignment.as_ref().expect("validated at construction");
                for (i, &c) in a.iter().enumerate() {
                    draw_row(i, c, rng);
                }
                Genotype { h, k: Some(a.clone()) }
            }
            ModelKind::SharedGmm | ModelKind::JointGmm | ModelKind::SingleRule => {
                let lambda = self.params.lambda.as_ref().expect("validated at construction");
                let m = lambda.ncols();
                let mut logp = vec![0.0; m];
                let mut ks = Vec::with_capacity(self.n_rows);
                for i in 0..self.n_rows {
                    log_softmax_into(lambda.row(i), &mut logp);
                    let u: f64 = rng.random();
                    let mut acc = 0.0;
                    let mut c = m - 1;
                    for (k, lp) in logp.iter().enumerate() {
                        acc += lp.exp();
                        if u < acc {
                            c = k;
                            break;
                        }
                    }
                    draw_row(i, c, rng);
                    ks.push(c);
                }
                let k = (self.kind == ModelKind::JointGmm).then_some(ks);
                Genotype { h, k }
            }
        }
    }

    /// The most probable individual: component means, taking the most likely
    /// component per row for the mixtures.
    pub fn mode_genotype(&self) -> Genotype {
        let mu = &self.params.mu;
        let pick = |comps: Vec<usize>| {
            let mut h = Array2::zeros((self.n_rows, self.width()));
            for (i, &c) in comps.iter().enumerate() {
                h.row_mut(i).assign(&mu.row(c));
            }
            (h, comps)
        };
        match self.kind {
            ModelKind::PerSynapse => Genotype::new(mu.clone()),
            ModelKind::FixedRandom => {
                let (h, k) = pick(self.assignment.clone().expect("validated"));
                Genotype { h, k: Some(k) }
            }
            _ => {
                let lambda = self.params.lambda.as_ref().expect("validated");
                let comps = lambda
                    .rows()
                    .into_iter()
                    .map(|r| {
                        r.iter()
                            .enumerate()
                            .fold(
                                (0, f64::NEG_INFINITY),
                                |best, (k, &v)| {
                                    if v > best.1 {
                                        (k, v)
                                    } else {
                                        best
                                    }
                                },
                            )
                            .0
                    })
                    .collect();
                let (h, k) = pick(comps);
                let k = (self.kind == ModelKind::JointGmm).then_some(k);
                Genotype { h, k }
            }
        }
    }

    /// `log p(g | theta)`.
    pub fn log_prob(&self, g: &Genotype) -> Result<f64> {
        self.check_genotype(g)?;
        let mu = &self.params.mu;
        let sigma = self.sigma;
        let total = match self.kind {
            ModelKind::PerSynapse => {
                g.h.rows()
                    .into_iter()
                    .zip(mu.rows())
                    .map(|(h, m)| log_normal(h, m, sigma))
                    .sum()
            }
            ModelKind::FixedRandom => {
                let a = self.assignment.as_ref().expect("validated");
                g.h.rows()
                    .into_iter()
                    .zip(a)
                    .map(|(h, &c)| log_normal(h, mu.row(c), sigma))
                    .sum()
            }
            ModelKind::JointGmm => {
                let lambda = self.params.lambda.as_ref().expect("validated");
                let k = g.k.as_ref().expect("checked");
                let mut logp = vec![0.0; lambda.ncols()];
                let mut total = 0.0;
                for (i, h) in g.h.rows().into_iter().enumerate() {
                    log_softmax_into(lambda.row(i), &mut logp);
                    total += log_normal(h, mu.row(k[i]), sigma) + logp[k[i]];
                }
                total
            }
            ModelKind::SharedGmm | ModelKind::SingleRule => {
                let lambda = self.params.lambda.as_ref().expect("validated");
                let m = lambda.ncols();
                let mut logp = vec![0.0; m];
                let mut joint = vec![0.0; m];
                let mut total = 0.0;
                for (i, h) in g.h.rows().into_iter().enumerate() {
                    log_softmax_into(lambda.row(i), &mut logp);
                    for c in 0..m {
                        joint[c] = log_normal(h, mu.row(c), sigma) + logp[c];
                    }
                    total += log_sum_exp(&joint);
                }
                total
            }
        };
        Ok(total)
    }

    /// Posterior component probabilities `r_ik` for rows `h`, computed in log
    /// space. Mixture kinds only.
    pub fn responsibilities(&self, h: &Array2<f64>) -> Result<Array2<f64>> {
        let lambda = self.lambda_or_err("responsibilities")?;
        if h.dim() != (self.n_rows, self.width()) {
            return Err(Error::DimensionMismatch {
                context: "rule matrix",
                expected: self.n_rows * self.width(),
                actual: h.len(),
            });
        }
        let m = lambda.ncols();
        let mut out = Array2::zeros((self.n_rows, m));
        let mut buf = vec![0.0; m];
        for (i, hi) in h.rows().into_iter().enumerate() {
            self.row_responsibilities(hi, i, &mut buf);
            for (c, r) in buf.iter().enumerate() {
                out[[i, c]] = *r;
            }
        }
        Ok(out)
    }

    /// Fills `out` with the responsibilities of row `i`.
    fn row_responsibilities(&self, h: ArrayView1<f64>, i: usize, out: &mut [f64]) {
        let lambda = self.params.lambda.as_ref().expect("mixture kind");
        log_softmax_into(lambda.row(i), out);
        for (c, o) in out.iter_mut().enumerate() {
            *o += log_normal(h, self.params.mu.row(c), self.sigma);
        }
        let lse = log_sum_exp(out);
        for o in out.iter_mut() {
            *o = (*o - lse).exp();
        }
    }

    /// `grad_theta log p(g | theta)`, shaped like [`GenotypeModel::params`].
    pub fn grad_log_prob(&self, g: &Genotype) -> Result<Params> {
        let mut acc = self.params.zeros_like();
        self.accumulate_grad_log_prob(g, 1.0, &mut acc)?;
        Ok(acc)
    }

    /// `acc += weight * grad_theta log p(g | theta)` without materializing
    /// the per-individual gradient.
    pub fn accumulate_grad_log_prob(&self, g: &Genotype, weight: f64, acc: &mut Params) -> Result<()> {
        self.check_genotype(g)?;
        self.params.check_shape(acc, "gradient accumulator")?;
        let mu = &self.params.mu;
        let inv_var = 1.0 / (self.sigma * self.sigma);
        let width = self.width();
        match self.kind {
            ModelKind::PerSynapse => {
                Zip::from(&mut acc.mu)
                    .and(&g.h)
                    .and(mu)
                    .for_each(|a, &h, &m| *a += weight * (h - m) * inv_var);
            }
            ModelKind::FixedRandom => {
                let a = self.assignment.as_ref().expect("validated");
                for (i, &c) in a.iter().enumerate() {
                    for d in 0..width {
                        acc.mu[[c, d]] += weight * (g.h[[i, d]] - mu[[c, d]]) * inv_var;
                    }
                }
            }
            ModelKind::JointGmm => {
                let lambda = self.params.lambda.as_ref().expect("validated");
                let k = g.k.as_ref().expect("checked");
                let acc_lambda = acc.lambda.as_mut().expect("shape checked");
                let mut logp = vec![0.0; lambda.ncols()];
                for (i, &c) in k.iter().enumerate() {
                    for d in 0..width {
                        acc.mu[[c, d]] += weight * (g.h[[i, d]] - mu[[c, d]]) * inv_var;
                    }
                    log_softmax_into(lambda.row(i), &mut logp);
                    for (j, lp) in logp.iter().enumerate() {
                        let indicator = if j == c { 1.0 } else { 0.0 };
                        acc_lambda[[i, j]] += weight * (indicator - lp.exp());
                    }
                }
            }
            ModelKind::SharedGmm | ModelKind::SingleRule => {
                let lambda = self.params.lambda.as_ref().expect("validated");
                let m = lambda.ncols();
                let acc_lambda = acc.lambda.as_mut().expect("shape checked");
                let mut r = vec![0.0; m];
                let mut logp = vec![0.0; m];
                for (i, hi) in g.h.rows().into_iter().enumerate() {
                    self.row_responsibilities(hi, i, &mut r);
                    log_softmax_into(lambda.row(i), &mut logp);
                    for c in 0..m {
                        let rw = weight * r[c] * inv_var;
                        for d in 0..width {
                            acc.mu[[c, d]] += rw * (hi[d] - mu[[c, d]]);
                        }
                        acc_lambda[[i, c]] += weight * (r[c] - logp[c].exp());
                    }
                }
            }
        }
        Ok(())
    }
}

/// Binds sampled rules to synapses: rule `i` is row `i` of `h`.
pub fn materialize(g: &Genotype, topology: &Topology) -> Result<RuleAssignment> {
    let n = topology.n_synapses();
    if g.h.nrows() != n {
        return Err(Error::DimensionMismatch {
            context: "genotype rows vs synapses",
            expected: n,
            actual: g.h.nrows(),
        });
    }
    RuleAssignment::from_matrix(&g.h)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    // -5 ln(0.1 sqrt(2 pi)), computed offline.
    const LOG_DENSITY_AT_MEAN: f64 = 6.918_232_798_946_865;

    fn gmm(mu: Array2<f64>, lambda: Array2<f64>, sigma: f64) -> GenotypeModel {
        GenotypeModel::from_parts(
            ModelKind::SharedGmm,
            Params {
                mu,
                lambda: Some(lambda),
            },
            sigma,
            None,
        )
        .unwrap()
    }

    #[test]
    fn rho_examples() {
        assert_eq!(rho_to_components(1024, 128).unwrap(), 8);
        assert_eq!(rho_to_components(200, 1).unwrap(), 200);
        assert_eq!(rho_to_components(200, 200).unwrap(), 1);
        assert_eq!(rho_to_components(200, 32).unwrap(), 6);
        assert!(rho_to_components(200, 0).is_err());
        assert!(rho_to_components(200, 201).is_err());
    }

    #[test]
    fn log_density_at_mean_closed_form() {
        // -5 ln(0.1 sqrt(2 pi)) evaluated independently
        let expected = -5.0 * (0.1 * (2.0 * PI).sqrt()).ln();
        assert!((expected - LOG_DENSITY_AT_MEAN).abs() < 1e-12);
        let mu = array![[0.3, -0.2, 1.0, 0.0, 0.5]];
        let m = gmm(mu.clone(), array![[0.0]], 0.1);
        let lp = m.log_prob(&Genotype::new(mu)).unwrap();
        assert!((lp - LOG_DENSITY_AT_MEAN).abs() < 1e-12);
    }

    #[test]
    fn identical_components_match_single_component() {
        let mu1 = array![[0.1, 0.2, 0.3, 0.4, 0.5]];
        let mu2 = array![[0.1, 0.2, 0.3, 0.4, 0.5], [0.1, 0.2, 0.3, 0.4, 0.5]];
        let one = gmm(mu1, Array2::zeros((3, 1)), 0.2);
        let two = gmm(mu2, Array2::zeros((3, 2)), 0.2);
        let g = one.sample(11);
        let a = one.log_prob(&g).unwrap();
        let b = two.log_prob(&g).unwrap();
        assert!((a - b).abs() < 1e-12);
        let r = two.responsibilities(&g.h).unwrap();
        assert!(r.iter().all(|&v| (v - 0.5).abs() < 1e-15));
        let grad = two.grad_log_prob(&g).unwrap();
        assert!(grad.lambda.unwrap().iter().all(|v| v.abs() < 1e-15));
    }

    #[test]
    fn dominant_component_takes_all_responsibility() {
        let mu = array![[0.0, 0.0, 0.0, 0.0, 0.0], [5.0, 5.0, 5.0, 5.0, 5.0]];
        let m = gmm(mu, Array2::zeros((1, 2)), 0.1);
        let h = array![[1e-3, 0.0, -1e-3, 0.0, 0.0]];
        let r = m.responsibilities(&h).unwrap();
        assert!((r[[0, 0]] - 1.0).abs() < 1e-6 && r[[0, 1]] < 1e-6);
    }

    #[test]
    fn gradient_vanishes_at_unique_mean() {
        let mu = array![[0.3, -0.2, 1.0, 0.0, 0.5]];
        let m = gmm(mu.clone(), array![[0.0], [0.0]], 0.1);
        let h = ndarray::concatenate![ndarray::Axis(0), mu, mu];
        let grad = m.grad_log_prob(&Genotype::new(h)).unwrap();
        assert!(grad.mu.iter().all(|&v| v == 0.0));
        assert!(grad.lambda.unwrap().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn degenerate_sigma_samples_the_mean() {
        let m = GenotypeModel::single_rule(6, 1e-12, 1.0, 3).unwrap();
        let g = m.sample(4);
        for row in g.h.rows() {
            for (a, b) in row.iter().zip(m.params().mu.row(0)) {
                assert!((a - b).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn sampling_is_seeded() {
        for kind in ModelKind::ALL {
            let m = build(kind, 7, 3);
            assert_eq!(m.sample(5), m.sample(5));
            assert_ne!(m.sample(5), m.sample(6));
        }
    }

    fn build(kind: ModelKind, n: usize, m: usize) -> GenotypeModel {
        match kind {
            ModelKind::PerSynapse => GenotypeModel::per_synapse(n, RULE_DIM, 0.1, 1.0, 1),
            ModelKind::SharedGmm => GenotypeModel::shared_gmm(n, m, 0.1, 1.0, 1),
            ModelKind::JointGmm => GenotypeModel::joint_gmm(n, m, 0.1, 1.0, 1),
            ModelKind::SingleRule => GenotypeModel::single_rule(n, 0.1, 1.0, 1),
            ModelKind::FixedRandom => GenotypeModel::fixed_random(n, m, 0.1, 1.0, 1, 2),
        }
        .unwrap()
    }

    #[test]
    fn categorical_frequency_matches_softmax() {
        let lambda = array![[2.0, -1.0]];
        let mu = array![[0.0; 5], [10.0; 5]];
        let m = GenotypeModel::from_parts(
            ModelKind::JointGmm,
            Params {
                mu,
                lambda: Some(lambda),
            },
            0.1,
            None,
        )
        .unwrap();
        let trials = 10_000;
        let hits = (0..trials).filter(|&s| m.sample(s as u64).k.unwrap()[0] == 0).count();
        let p = 1.0 / (1.0 + (-3.0_f64).exp());
        let freq = hits as f64 / trials as f64;
        let tol = 3.0 * (p * (1.0 - p) / trials as f64).sqrt();
        assert!((freq - p).abs() < tol, "freq {freq} p {p}");
    }

    #[test]
    fn joint_kind_requires_components() {
        let m = build(ModelKind::JointGmm, 4, 2);
        let mut g = m.sample(1);
        g.k = None;
        assert_eq!(m.log_prob(&g), Err(Error::MissingComponents("joint-gmm")));
        g.k = Some(vec![0, 1, 5, 0]);
        assert!(m.log_prob(&g).is_err());
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let m = build(ModelKind::SharedGmm, 4, 2);
        let g = Genotype::new(Array2::zeros((3, 5)));
        assert!(matches!(m.log_prob(&g), Err(Error::DimensionMismatch { .. })));
        assert!(m.grad_log_prob(&g).is_err());
        assert!(m.responsibilities(&g.h).is_err());
        let p = build(ModelKind::PerSynapse, 4, 1);
        assert!(matches!(
            p.responsibilities(&Array2::zeros((4, 5))),
            Err(Error::WrongModelKind { .. })
        ));
    }

    #[test]
    fn from_parts_validates_shapes() {
        let bad_lambda = Params {
            mu: Array2::zeros((2, 5)),
            lambda: Some(Array2::zeros((4, 3))),
        };
        assert!(GenotypeModel::from_parts(ModelKind::SharedGmm, bad_lambda, 0.1, None).is_err());
        let ok = Params {
            mu: Array2::zeros((2, 5)),
            lambda: Some(Array2::zeros((4, 2))),
        };
        assert!(GenotypeModel::from_parts(ModelKind::SingleRule, ok.clone(), 0.1, None).is_err());
        assert!(GenotypeModel::from_parts(ModelKind::SharedGmm, ok.clone(), 0.0, None).is_err());
        assert!(GenotypeModel::from_parts(ModelKind::PerSynapse, ok, 0.1, None).is_err());
        let fixed = Params {
            mu: Array2::zeros((2, 5)),
            lambda: None,
        };
        assert!(GenotypeModel::from_parts(ModelKind::FixedRandom, fixed.clone(), 0.1, Some(vec![0, 2])).is_err());
        assert!(GenotypeModel::from_parts(ModelKind::FixedRandom, fixed, 0.1, Some(vec![0, 1])).is_ok());
    }

    #[test]
    fn fixed_random_assignment_is_seeded_and_only_mu_is_learned() {
        let a = GenotypeModel::fixed_random(50, 4, 0.1, 1.0, 1, 77).unwrap();
        let b = GenotypeModel::fixed_random(50, 4, 0.1, 1.0, 9, 77).unwrap();
        assert_eq!(a.assignment(), b.assignment());
        assert!(a.params().lambda.is_none());
        let g = a.sample(3);
        assert_eq!(g.k.as_deref(), a.assignment());
        let grad = a.grad_log_prob(&g).unwrap();
        assert!(grad.lambda.is_none());
        assert_eq!(grad.mu.dim(), (4, 5));
    }

    #[test]
    fn materialize_binds_rows_in_order() {
        let t = Topology::new(vec![1, 1]).unwrap();
        let h = array![[0.1, 0.2, 0.3, 0.4, 0.5]];
        let a = materialize(&Genotype::new(h.clone()), &t).unwrap();
        assert_eq!(a.rules()[0].to_row(), [0.1, 0.2, 0.3, 0.4, 0.5]);

        let t = Topology::new(vec![2, 2]).unwrap();
        let h = Array2::from_shape_fn((4, 5), |(i, j)| (i * 5 + j) as f64);
        let a = materialize(&Genotype::new(h.clone()), &t).unwrap();
        assert_eq!(a.to_matrix(), h);
        let perm = [2, 0, 3, 1];
        let hp = Array2::from_shape_fn((4, 5), |(i, j)| h[[perm[i], j]]);
        let ap = materialize(&Genotype::new(hp), &t).unwrap();
        for (i, &p) in perm.iter().enumerate() {
            assert_eq!(ap.rules()[i], a.rules()[p]);
        }
        assert!(materialize(&Genotype::new(Array2::zeros((3, 5))), &t).is_err());
    }

    #[test]
    fn mode_genotype_picks_means() {
        let mu = array![[1.0; 5], [2.0; 5]];
        let lambda = array![[0.0, 3.0], [1.0, -1.0]];
        let m = gmm(mu, lambda, 0.1);
        let g = m.mode_genotype();
        assert_eq!(g.h.row(0).to_vec(), vec![2.0; 5]);
        assert_eq!(g.h.row(1).to_vec(), vec![1.0; 5]);
    }

    #[test]
    fn params_flat_round_trip() {
        let m = build(ModelKind::SharedGmm, 3, 2);
        let flat = m.params().to_flat();
        assert_eq!(flat.len(), 2 * 5 + 3 * 2);
        let mut p = m.params().zeros_like();
        p.set_from_flat(&flat).unwrap();
        assert_eq!(&p, m.params());
        assert!(p.set_from_flat(&flat[1..]).is_err());
    }
}
