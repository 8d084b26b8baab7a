//! Central-difference verification of backpropagated gradients.

use super::{mse_loss, Sequential, Tensor};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckOptions {
    /// Perturbation for the central difference.
    pub eps: f64,
    /// Largest accepted relative error.
    pub tolerance: f64,
    /// Relative error is `|a - n| / max(|a|, |n|, scale_floor)`; gradients
    /// smaller than the floor are compared absolutely against it.
    pub scale_floor: f64,
    /// When set, larger tensors are checked at this many evenly spaced entries.
    pub max_entries_per_tensor: Option<usize>,
    /// Also check the gradient with respect to the network input.
    pub check_input: bool,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        Self {
            eps: 1e-5,
            tolerance: 1e-4,
            scale_floor: 1e-6,
            max_entries_per_tensor: None,
            check_input: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// Tensor name and flat index of the worst entry.
    pub worst: Option<(String, usize)>,
    pub entries_checked: usize,
    pub passed: bool,
}

/// Backpropagated gradients of the MSE loss.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub params: Vec<Tensor>,
    pub input: Tensor,
}

fn loss_at(net: &mut Sequential, input: &Tensor, target: &Tensor) -> Result<f64> {
    let pred = net.forward(input)?;
    let (loss, _) = mse_loss(&pred, target)?;
    if !loss.is_finite() {
        return Err(Error::NonFiniteLoss {
            value: loss,
            context: "gradient check".into(),
        });
    }
    Ok(loss)
}

pub fn analytic_gradients(
    net: &mut Sequential,
    input: &Tensor,
    target: &Tensor,
) -> Result<Gradients> {
    net.zero_grad();
    let pred = net.forward(input)?;
    let (loss, grad) = mse_loss(&pred, target)?;
    if !loss.is_finite() {
        return Err(Error::NonFiniteLoss {
            value: loss,
            context: "gradient check".into(),
        });
    }
    let input_grad = net.backward(&grad)?;
    let params = net.params().iter().map(|p| p.grad.clone()).collect();
    net.zero_grad();
    Ok(Gradients {
        params,
        input: input_grad,
    })
}

fn sample_indices(len: usize, limit: Option<usize>) -> Vec<usize> {
    match limit {
        Some(m) if m < len => (0..m).map(|i| i * len / m + (len / m) / 2).collect(),
        _ => (0..len).collect(),
    }
}

struct Tracker<'a> {
    opts: &'a GradCheckOptions,
    max_rel: f64,
    worst: Option<(String, usize)>,
    checked: usize,
}

impl Tracker<'_> {
    fn record(&mut self, name: &str, index: usize, analytic: f64, numeric: f64) {
        let scale = analytic.abs().max(numeric.abs()).max(self.opts.scale_floor);
        let rel = (analytic - numeric).abs() / scale;
        self.checked += 1;
        if rel > self.max_rel || rel.is_nan() {
            self.max_rel = rel;
            self.worst = Some((name.to_string(), index));
        }
    }
}

/// Compares `analytic` against central differences of the loss.
pub fn compare_gradients(
    net: &mut Sequential,
    input: &Tensor,
    target: &Tensor,
    analytic: &Gradients,
    opts: &GradCheckOptions,
) -> Result<GradCheckReport> {
    let mut tracker = Tracker {
        opts,
        max_rel: 0.0,
        worst: None,
        checked: 0,
    };
    let eps = opts.eps;
    let param_count = net.params().len();
    if analytic.params.len() != param_count {
        return Err(Error::shape(
            "gradient count",
            &[analytic.params.len()],
            &[param_count],
        ));
    }

    for p in 0..param_count {
        let (name, len) = {
            let param = &net.params()[p];
            (param.name.clone(), param.value.len())
        };
        for idx in sample_indices(len, opts.max_entries_per_tensor) {
            let original = net.params()[p].value.data()[idx];
            net.params_mut()[p].value.data_mut()[idx] = original + eps;
            let plus = loss_at(net, input, target)?;
            net.params_mut()[p].value.data_mut()[idx] = original - eps;
            let minus = loss_at(net, input, target)?;
            net.params_mut()[p].value.data_mut()[idx] = original;
            let numeric = (plus - minus) / (2.0 * eps);
            tracker.record(&name, idx, analytic.params[p].data()[idx], numeric);
        }
    }

    if opts.check_input {
        let mut x = input.clone();
        for idx in sample_indices(x.len(), opts.max_entries_per_tensor) {
            let original = x.data()[idx];
            x.data_mut()[idx] = original + eps;
            let plus = loss_at(net, &x, target)?;
            x.data_mut()[idx] = original - eps;
            let minus = loss_at(net, &x, target)?;
            x.data_mut()[idx] = original;
            let numeric = (plus - minus) / (2.0 * eps);
            tracker.record("input", idx, analytic.input.data()[idx], numeric);
        }
    }

    let passed = tracker.max_rel < opts.tolerance;
    Ok(GradCheckReport {
        max_rel_error: tracker.max_rel,
        worst: tracker.worst,
        entries_checked: tracker.checked,
        passed,
    })
}

/// Backpropagates once, then checks every (or every sampled) parameter and
/// input entry against central differences.
pub fn grad_check(
    net: &mut Sequential,
    input: &Tensor,
    target: &Tensor,
    opts: &GradCheckOptions,
) -> Result<GradCheckReport> {
    let analytic = analytic_gradients(net, input, target)?;
    compare_gradients(net, input, target, &analytic, opts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Layer, Linear};

    #[test]
    fn linear_least_squares_closed_form() {
        // L = mean((W x + b - t)^2) over 2 outputs, batch 1:
        // dL/dW[o,i] = (W x + b - t)[o] * x[i], dL/db[o] = (W x + b - t)[o].
        let mut fc = Linear::new("fc", 3, 2, false);
        fc.weight
            .value
            .data_mut()
            .copy_from_slice(&[0.5, -1.0, 2.0, 0.25, 0.0, -0.75]);
        fc.bias.value.data_mut().copy_from_slice(&[0.1, -0.2]);
        let mut net = Sequential::new(vec![Layer::Linear(fc)]);
        let x = [1.0, 2.0, -0.5];
        let t = [0.3, 0.7];
        let input = Tensor::new(vec![1, 3], x.to_vec()).unwrap();
        let target = Tensor::new(vec![1, 2], t.to_vec()).unwrap();

        let w = [[0.5, -1.0, 2.0], [0.25, 0.0, -0.75]];
        let b = [0.1, -0.2];
        let r: Vec<f64> = (0..2)
            .map(|o| w[o][0] * x[0] + w[o][1] * x[1] + w[o][2] * x[2] + b[o] - t[o])
            .collect();
        let grads = analytic_gradients(&mut net, &input, &target).unwrap();
        for o in 0..2 {
            for i in 0..3 {
                assert!((grads.params[0].data()[o * 3 + i] - r[o] * x[i]).abs() < 1e-15);
            }
            assert!((grads.params[1].data()[o] - r[o]).abs() < 1e-15);
        }

        let opts = GradCheckOptions {
            tolerance: 1e-9,
            ..GradCheckOptions::default()
        };
        let report = compare_gradients(&mut net, &input, &target, &grads, &opts).unwrap();
        assert!(report.passed, "{report:?}");
        assert_eq!(report.entries_checked, 6 + 2 + 3);
    }

    #[test]
    fn corrupted_gradient_fails() {
        let mut fc = Linear::new("fc", 2, 2, false);
        fc.weight
            .value
            .data_mut()
            .copy_from_slice(&[1.0, 2.0, 3.0, 4.0]);
        let mut net = Sequential::new(vec![Layer::Linear(fc)]);
        let input = Tensor::new(vec![1, 2], vec![0.5, -0.5]).unwrap();
        let target = Tensor::new(vec![1, 2], vec![1.0, 1.0]).unwrap();
        let mut grads = analytic_gradients(&mut net, &input, &target).unwrap();
        grads.params[0].data_mut()[1] *= 1.01;
        let report = compare_gradients(
            &mut net,
            &input,
            &target,
            &grads,
            &GradCheckOptions::default(),
        )
        .unwrap();
        assert!(!report.passed);
        assert_eq!(report.worst, Some(("fc.weight".to_string(), 1)));
    }

    #[test]
    fn sampled_indices_are_spread() {
        assert_eq!(sample_indices(4, None), vec![0, 1, 2, 3]);
        assert_eq!(sample_indices(4, Some(10)), vec![0, 1, 2, 3]);
        let s = sample_indices(100, Some(4));
        assert_eq!(s, vec![12, 37, 62, 87]);
    }
}
