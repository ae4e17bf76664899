//! Central-difference verification of [`Network::backward`].
//!
//! A ReLU network is piecewise linear in each parameter, so a difference
//! quotient taken across a kink measures neither side's slope. Picks whose
//! `+eps` and `-eps` evaluations switch any unit on or off are counted as
//! kinks and redrawn instead of being compared.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{NnError, Result};
use crate::network::{cross_entropy, Input, Network};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Pick {
    /// Uniform over every scalar parameter.
    Uniform,
    /// Tensors in turn, uniform entry within each.
    PerTensor,
}

#[derive(Clone, Debug, Default)]
pub struct GradCheck {
    /// Parameters compared against a difference quotient.
    pub checked: usize,
    /// Draws rejected because the step crossed a kink.
    pub kinks: usize,
    /// Worst `|a - n| / max(1, |a|)` over the compared parameters.
    pub worst: f64,
    /// Compared parameters per tensor, in parameter order.
    pub per_tensor: Vec<usize>,
}

/// Compares `checks` parameters of `net` at step `eps` on the mean
/// cross-entropy of `inputs`. Gives up after `20 * checks` draws.
pub fn gradient_check(
    net: &mut Network<f64>,
    inputs: &[Input<'_>],
    labels: &[usize],
    checks: usize,
    eps: f64,
    pick: Pick,
    seed: u64,
) -> Result<GradCheck> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pass = net.forward::<ChaCha8Rng>(inputs, None)?;
    let pattern = pass.activation_pattern();
    let grads = net.backward(&pass, labels)?;
    let total = grads.len();
    let mut report = GradCheck { per_tensor: vec![0; grads.tensors.len()], ..Default::default() };

    let eval = |net: &Network<f64>| -> Result<(f64, Vec<bool>)> {
        let pass = net.forward::<ChaCha8Rng>(inputs, None)?;
        Ok((cross_entropy(pass.probs(), labels)?, pass.activation_pattern()))
    };

    let mut draws = 0;
    while report.checked < checks {
        if draws == 20 * checks {
            return Err(NnError::InvalidParams(format!(
                "only {} of {checks} draws avoided kinks",
                report.checked
            )));
        }
        draws += 1;
        let (ti, idx) = match pick {
            Pick::PerTensor => {
                let ti = report.checked % grads.tensors.len();
                (ti, rng.gen_range(0..grads.tensors[ti].data.len()))
            }
            Pick::Uniform => {
                let mut flat = rng.gen_range(0..total);
                let mut ti = 0;
                while flat >= grads.tensors[ti].data.len() {
                    flat -= grads.tensors[ti].data.len();
                    ti += 1;
                }
                (ti, flat)
            }
        };
        let orig = net.params().tensors[ti].data[idx];
        net.params_mut().tensors[ti].data[idx] = orig + eps;
        let up = eval(net);
        net.params_mut().tensors[ti].data[idx] = orig - eps;
        let down = eval(net);
        net.params_mut().tensors[ti].data[idx] = orig;
        let ((up, up_pattern), (down, down_pattern)) = (up?, down?);
        if up_pattern != pattern || down_pattern != pattern {
            report.kinks += 1;
            continue;
        }
        let analytic = grads.tensors[ti].data[idx];
        let numeric = (up - down) / (2.0 * eps);
        report.worst = report.worst.max((analytic - numeric).abs() / analytic.abs().max(1.0));
        report.checked += 1;
        report.per_tensor[ti] += 1;
    }
    Ok(report)
}
