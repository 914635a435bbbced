//! Central finite-difference verification of analytic gradients.

use crate::tensor::Tensor;

pub const FD_STEP: f64 = 1e-5;
pub const FD_TOLERANCE: f64 = 1e-4;

#[derive(Debug, Clone)]
pub struct CheckOutcome {
    pub name: String,
    pub worst_rel_err: f64,
    /// "tensor index / element index" of the worst entry.
    pub worst_location: String,
    pub checked: usize,
    pub passed: bool,
}

impl CheckOutcome {
    pub fn line(&self) -> String {
        format!(
            "{} {:24} worst rel err {:.3e} at {} ({} entries)",
            if self.passed { "ok  " } else { "FAIL" },
            self.name,
            self.worst_rel_err,
            self.worst_location,
            self.checked
        )
    }
}

/// Relative error with a small floor so near-zero entries compare on an
/// absolute scale instead of dividing by noise.
fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-3)
}

/// Compare `analytic` gradients against central differences of `loss`.
///
/// `loss` must be a deterministic function of the parameter tensors alone;
/// it is re-evaluated 2 times per scalar entry with step [`FD_STEP`].
pub fn finite_difference_check(
    name: &str,
    params: &[Tensor],
    analytic: &[Tensor],
    tol: f64,
    mut loss: impl FnMut(&[Tensor]) -> f64,
) -> CheckOutcome {
    assert_eq!(params.len(), analytic.len(), "gradcheck: tensor count mismatch");
    let mut work: Vec<Tensor> = params.to_vec();
    let mut worst = 0.0f64;
    let mut worst_loc = String::from("-");
    let mut checked = 0usize;
    for ti in 0..work.len() {
        assert_eq!(
            params[ti].shape(),
            analytic[ti].shape(),
            "gradcheck: gradient shape mismatch on tensor {ti}"
        );
        for ei in 0..params[ti].len() {
            let orig = work[ti].data()[ei];
            work[ti].data_mut()[ei] = orig + FD_STEP;
            let fp = loss(&work);
            work[ti].data_mut()[ei] = orig - FD_STEP;
            let fm = loss(&work);
            work[ti].data_mut()[ei] = orig;
            let numeric = (fp - fm) / (2.0 * FD_STEP);
            let a = analytic[ti].data()[ei];
            let e = rel_err(a, numeric);
            checked += 1;
            if e > worst {
                worst = e;
                worst_loc = format!("tensor {ti} entry {ei}");
            }
        }
    }
    CheckOutcome {
        name: name.to_string(),
        worst_rel_err: worst,
        worst_location: worst_loc,
        checked,
        passed: worst < tol,
    }
}
