//! Pre-training verification pass: analytic gradients against finite
//! differences, and mixture log-densities against literal summation.

use hebb_core::oracle::{brute_force_gmm_log_prob, check_gradients, random_instance, GradCheckReport, DEFAULT_STEP};
use hebb_core::seed::{self, Purpose};
use hebb_core::ModelKind;
use serde::Serialize;

pub const REPORT_FILE: &str = "verify.json";
pub const BRUTE_FORCE_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BruteForceReport {
    pub kind: ModelKind,
    pub instances: usize,
    /// Instances whose linear-space density underflowed.
    pub inapplicable: usize,
    pub max_abs_error: f64,
    pub tolerance: f64,
}

impl BruteForceReport {
    pub fn passed(&self) -> bool {
        self.inapplicable < self.instances && self.max_abs_error < self.tolerance
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifyReport {
    pub seed: u64,
    pub gradients: Vec<GradCheckReport>,
    pub brute_force: Vec<BruteForceReport>,
    pub passed: bool,
}

impl VerifyReport {
    pub fn summary(&self) -> String {
        let mut lines = Vec::new();
        for g in &self.gradients {
            lines.push(format!(
                "{:<7} grad {:<13} trials {:>4}  max rel err {:.3e} at {:?}  step {:e}  skipped {}",
                verdict(g.passed()),
                g.kind.name(),
                g.trials,
                g.max_rel_error,
                g.argmax,
                g.step,
                g.skipped
            ));
        }
        for b in &self.brute_force {
            lines.push(format!(
                "{:<7} brute {:<12} instances {:>4}  max abs err {:.3e}  inapplicable {}",
                verdict(b.passed()),
                b.kind.name(),
                b.instances,
                b.max_abs_error,
                b.inapplicable
            ));
        }
        lines.push(format!("verify: {}", verdict(self.passed)));
        lines.join("\n")
    }
}

fn verdict(ok: bool) -> &'static str {
    if ok {
        "PASS"
    } else {
        "FAIL"
    }
}

pub fn brute_force_agreement(kind: ModelKind, instances: usize, base_seed: u64) -> BruteForceReport {
    let mut report = BruteForceReport {
        kind,
        instances,
        inapplicable: 0,
        max_abs_error: 0.0,
        tolerance: BRUTE_FORCE_TOLERANCE,
    };
    for t in 0..instances {
        let inst = random_instance(
            kind,
            seed::derive(base_seed, Purpose::Verify, 100 + u64::from(kind.tag()), t as u64, 0),
        );
        let p = inst.model.params();
        let lambda = p.lambda.as_ref().expect("mixture kinds carry logits");
        match brute_force_gmm_log_prob(&p.mu, lambda, inst.model.sigma(), &inst.genotype.h) {
            Ok(brute) => {
                let lp = inst.model.log_prob(&inst.genotype).expect("instance is well-formed");
                report.max_abs_error = report.max_abs_error.max((lp - brute).abs());
            }
            Err(_) => report.inapplicable += 1,
        }
    }
    report
}

/// Gradient checks for every model kind and brute-force checks for the
/// marginal mixture kinds, `trials` instances each.
pub fn run_verify(trials: usize, base_seed: u64) -> VerifyReport {
    let gradients: Vec<_> = ModelKind::ALL
        .iter()
        .map(|&k| check_gradients(k, trials, base_seed, DEFAULT_STEP))
        .collect();
    let brute_force: Vec<_> = [ModelKind::SharedGmm, ModelKind::SingleRule]
        .iter()
        .map(|&k| brute_force_agreement(k, trials, base_seed))
        .collect();
    let passed = trials > 0 && gradients.iter().all(|g| g.passed()) && brute_force.iter().all(|b| b.passed());
    VerifyReport {
        seed: base_seed,
        gradients,
        brute_force,
        passed,
    }
}
