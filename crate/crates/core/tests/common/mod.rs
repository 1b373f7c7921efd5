#![allow(dead_code)]

/// Relative error with an absolute floor so vanishing gradients compare by
/// absolute difference.
pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}

#[derive(Debug, Default, Clone, Copy)]
pub struct FdReport {
    pub checked: usize,
    /// Worst relative error over parameters whose stencil is smooth.
    pub worst: f64,
    /// Parameters whose ±ε stencil straddles a ReLU or max-pool switch.
    pub kinks: usize,
    /// Kinked parameters whose analytic value matched neither side.
    pub kink_failures: usize,
}

impl FdReport {
    pub fn passed(&self, tol: f64) -> bool {
        self.worst < tol && self.kink_failures == 0 && self.kinks * 1000 <= self.checked.max(1000)
    }
}

/// Compares `grad[i]` with the central difference of `loss` for every `i`
/// in `indices`, perturbing parameter `i` through `set`.
///
/// Piecewise-linear activations make the loss non-differentiable on a
/// measure-zero set; when the two one-sided slopes disagree the stencil
/// crosses such a point, and the analytic value must instead match one of
/// the one-sided slopes.
pub fn check_gradient(
    grad: &[f64],
    indices: impl IntoIterator<Item = usize>,
    eps: f64,
    tol: f64,
    mut loss_at: impl FnMut(usize, f64) -> f64,
    base: f64,
) -> FdReport {
    let mut rep = FdReport::default();
    for i in indices {
        rep.checked += 1;
        let lp = loss_at(i, eps);
        let lm = loss_at(i, -eps);
        let central = (lp - lm) / (2.0 * eps);
        let err = rel_err(grad[i], central);
        if err < tol {
            rep.worst = rep.worst.max(err);
            continue;
        }
        let fwd = (lp - base) / eps;
        let bwd = (base - lm) / eps;
        if rel_err(fwd, bwd) > 1e-2 {
            rep.kinks += 1;
            if rel_err(grad[i], fwd).min(rel_err(grad[i], bwd)) > 1e-2 {
                rep.kink_failures += 1;
            }
        } else {
            rep.worst = rep.worst.max(err);
        }
    }
    rep
}
