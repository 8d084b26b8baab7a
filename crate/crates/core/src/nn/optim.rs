use serde::{Deserialize, Serialize};

use super::{Param, Tensor};
use crate::error::{Error, Result};

/// Momentum SGD with step decay and a learning-rate multiplier for layers
/// flagged as new.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizerConfig {
    pub momentum: f64,
    pub base_lr: f64,
    pub decay_factor: f64,
    /// Epochs between decays.
    pub decay_every: usize,
    pub new_layer_lr_multiplier: f64,
    pub weight_decay: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            momentum: 0.95,
            base_lr: 1e-5,
            decay_factor: 0.1,
            decay_every: 10,
            new_layer_lr_multiplier: 50.0,
            weight_decay: 0.0,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.momentum >= 0.0
            && self.momentum < 1.0
            && self.base_lr >= 0.0
            && self.decay_factor > 0.0
            && self.decay_every >= 1
            && self.new_layer_lr_multiplier > 0.0
            && self.weight_decay >= 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!(
                "invalid optimizer settings: {self:?}"
            )))
        }
    }

    /// `base_lr * decay_factor^floor(epoch / decay_every)`, times the
    /// multiplier for new layers.
    ///
    /// The product is formed exactly on the shortest decimal forms of the
    /// configured values and rounded once, so `1e-5` decayed once by `0.1` is
    /// exactly `1e-6`. Products too long for that fall back to float math.
    pub fn learning_rate(&self, epoch: usize, new_layer: bool) -> f64 {
        let steps = (epoch / self.decay_every) as u32;
        let mult = if new_layer {
            self.new_layer_lr_multiplier
        } else {
            1.0
        };
        decimal_product(self.base_lr, self.decay_factor, steps, mult)
            .unwrap_or_else(|| self.base_lr * self.decay_factor.powi(steps as i32) * mult)
    }
}

/// `(digits, exponent)` with `x == digits * 10^exponent`, from the shortest
/// round-trip representation.
fn decimal_parts(x: f64) -> Option<(u128, i32)> {
    let text = format!("{x:e}");
    let (mantissa, exp) = text.split_once('e')?;
    let exp: i32 = exp.parse().ok()?;
    let (int, frac) = mantissa.split_once('.').unwrap_or((mantissa, ""));
    let digits: u128 = format!("{int}{frac}").parse().ok()?;
    Some((digits, exp - frac.len() as i32))
}

fn decimal_product(base: f64, decay: f64, steps: u32, mult: f64) -> Option<f64> {
    if !(base.is_finite() && decay.is_finite() && mult.is_finite()) || base < 0.0 {
        return None;
    }
    let (mut digits, mut exp) = decimal_parts(base)?;
    let (decay_digits, decay_exp) = decimal_parts(decay)?;
    for _ in 0..steps {
        digits = digits.checked_mul(decay_digits)?;
        exp = exp.checked_add(decay_exp)?;
    }
    let (mult_digits, mult_exp) = decimal_parts(mult)?;
    digits = digits.checked_mul(mult_digits)?;
    exp = exp.checked_add(mult_exp)?;
    format!("{digits}e{exp}").parse().ok()
}

/// One update of every parameter: `v <- momentum * v - lr * grad`,
/// `w <- w + v`.
pub fn sgd_step(
    params: &mut [&mut Param],
    velocity: &mut [Tensor],
    config: &OptimizerConfig,
    epoch: usize,
) -> Result<()> {
    if params.len() != velocity.len() {
        return Err(Error::shape(
            "sgd velocity count",
            &[params.len()],
            &[velocity.len()],
        ));
    }
    for (param, vel) in params.iter_mut().zip(velocity.iter_mut()) {
        param.value.check_same_shape(vel, "sgd velocity")?;
        param.value.check_same_shape(&param.grad, "sgd grad")?;
        let lr = config.learning_rate(epoch, param.new_layer);
        let Param { value, grad, .. } = &mut **param;
        for ((w, &g), v) in value
            .data_mut()
            .iter_mut()
            .zip(grad.data())
            .zip(vel.data_mut())
        {
            let g = g + config.weight_decay * *w;
            *v = config.momentum * *v - lr * g;
            *w += *v;
        }
    }
    Ok(())
}

/// Optimizer state: one velocity tensor per parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct Sgd {
    pub config: OptimizerConfig,
    pub velocity: Vec<Tensor>,
}

impl Sgd {
    pub fn new<'a>(config: OptimizerConfig, params: impl IntoIterator<Item = &'a Param>) -> Self {
        let velocity = params
            .into_iter()
            .map(|p| Tensor::zeros(p.value.shape()))
            .collect();
        Self { config, velocity }
    }

    pub fn step(&mut self, params: &mut [&mut Param], epoch: usize) -> Result<()> {
        sgd_step(params, &mut self.velocity, &self.config, epoch)
    }
}
