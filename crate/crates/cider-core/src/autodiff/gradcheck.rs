//! Central-finite-difference verification of tape gradients.
//!
//! The closure must be deterministic: any randomness (noise draws, dropout
//! masks) has to be sampled once, outside, and captured by value, or the
//! difference quotient measures the noise instead of the derivative.

use crate::autodiff::mat::Mat;
use crate::autodiff::tape::{Tape, Tensor};
use crate::error::{CiderError, Result};

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    /// (parameter index, flat entry index) of the worst disagreement.
    pub worst: Option<(usize, usize)>,
    pub entries_checked: usize,
}

impl GradCheckReport {
    pub fn passes(&self, tol: f64) -> bool {
        self.max_rel_err <= tol
    }
}

/// Compare tape gradients of a scalar-valued function against central
/// differences with the given step, entry by entry, over every parameter.
pub fn grad_check<F>(f: F, params: &[Mat], step: f64) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape, &[Tensor]) -> Result<Tensor>,
{
    let eval = |values: &[Mat]| -> Result<f64> {
        let mut tape = Tape::new();
        let handles: Vec<Tensor> = values.iter().map(|m| tape.leaf(m.clone())).collect();
        let out = f(&mut tape, &handles)?;
        if !out.is_scalar() {
            return Err(CiderError::contract(format!(
                "grad_check needs a scalar output, got {}x{}",
                out.rows, out.cols
            )));
        }
        Ok(tape.value(out).data[0])
    };

    // one analytic pass
    let mut tape = Tape::new();
    let handles: Vec<Tensor> = params.iter().map(|m| tape.leaf(m.clone())).collect();
    let out = f(&mut tape, &handles)?;
    if !out.is_scalar() {
        return Err(CiderError::contract(format!(
            "grad_check needs a scalar output, got {}x{}",
            out.rows, out.cols
        )));
    }
    tape.backward(out)?;
    let analytic: Vec<Mat> = handles
        .iter()
        .zip(params)
        .map(|(&h, p)| {
            tape.grad(h)
                .cloned()
                .unwrap_or_else(|| Mat::zeros(p.rows, p.cols))
        })
        .collect();

    let mut report = GradCheckReport {
        max_rel_err: 0.0,
        worst: None,
        entries_checked: 0,
    };
    let mut work: Vec<Mat> = params.to_vec();
    for pi in 0..params.len() {
        for ei in 0..params[pi].data.len() {
            let orig = work[pi].data[ei];
            work[pi].data[ei] = orig + step;
            let up = eval(&work)?;
            work[pi].data[ei] = orig - step;
            let down = eval(&work)?;
            work[pi].data[ei] = orig;

            let fd = (up - down) / (2.0 * step);
            let an = analytic[pi].data[ei];
            let denom = an.abs().max(fd.abs()).max(1e-6);
            let rel = (an - fd).abs() / denom;
            report.entries_checked += 1;
            if rel > report.max_rel_err {
                report.max_rel_err = rel;
                report.worst = Some((pi, ei));
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_form_checks_out() {
        // f(W, x) = sum((W·x)^2)
        let w = Mat::from_rows(&[vec![0.4, -0.3], vec![0.1, 0.9]]).unwrap();
        let x = Mat::from_rows(&[vec![1.2], vec![-0.7]]).unwrap();
        let report = grad_check(
            |tape, p| {
                let y = tape.matmul(p[0], p[1])?;
                let sq = tape.mul(y, y)?;
                tape.sum(sq)
            },
            &[w, x],
            1e-3,
        )
        .unwrap();
        assert_eq!(report.entries_checked, 6);
        assert!(report.passes(1e-6), "max rel err {}", report.max_rel_err);
    }

    #[test]
    fn detects_a_wrong_gradient() {
        // relu is evaluated at a kink: analytic and FD must disagree there.
        let x = Mat::from_vec(1, 1, vec![0.0]).unwrap();
        let report = grad_check(
            |tape, p| {
                let y = tape.relu(p[0])?;
                tape.sum(y)
            },
            &[x],
            1e-3,
        )
        .unwrap();
        assert!(!report.passes(1e-4));
        assert_eq!(report.worst, Some((0, 0)));
    }
}
