//! Adam with decoupled weight decay.

use super::matrix::Matrix;
use super::params::ParamStore;
use crate::error::{GslError, Result};

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPS: f64 = 1e-8;

#[derive(Clone, Debug)]
pub struct AdamState {
    pub lr: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step_count: u64,
    first_moment: Vec<Option<Matrix>>,
    second_moment: Vec<Option<Matrix>>,
}

/// What happened during one [`AdamState::step`].
#[derive(Clone, Debug, Default, PartialEq)]
pub struct StepReport {
    pub updated: usize,
    /// Names of parameters that had no gradient and were left untouched.
    pub skipped: Vec<String>,
}

impl AdamState {
    pub fn new(lr: f64, weight_decay: f64) -> Result<Self> {
        if !(lr > 0.0 && lr.is_finite()) {
            return Err(GslError::config("lr", format!("learning rate must be positive, got {lr}")));
        }
        if !(weight_decay >= 0.0 && weight_decay.is_finite()) {
            return Err(GslError::config(
                "weight_decay",
                format!("weight decay must be nonnegative, got {weight_decay}"),
            ));
        }
        Ok(Self {
            lr,
            weight_decay,
            beta1: BETA1,
            beta2: BETA2,
            eps: EPS,
            step_count: 0,
            first_moment: Vec::new(),
            second_moment: Vec::new(),
        })
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    pub fn first_moment(&self, index: usize) -> Option<&Matrix> {
        self.first_moment.get(index).and_then(Option::as_ref)
    }

    pub fn second_moment(&self, index: usize) -> Option<&Matrix> {
        self.second_moment.get(index).and_then(Option::as_ref)
    }

    pub fn step(&mut self, params: &mut ParamStore) -> StepReport {
        self.step_count += 1;
        let t = self.step_count as i32;
        let bias1 = 1.0 - self.beta1.powi(t);
        let bias2 = 1.0 - self.beta2.powi(t);
        if self.first_moment.len() < params.len() {
            self.first_moment.resize(params.len(), None);
            self.second_moment.resize(params.len(), None);
        }
        let mut report = StepReport::default();
        for id in params.ids().collect::<Vec<_>>() {
            let p = params.get_mut(id);
            let Some(grad) = p.grad.take() else {
                log::warn!("parameter `{}` has no gradient; skipping Adam update", p.name);
                report.skipped.push(p.name.clone());
                continue;
            };
            let i = id.index();
            let m = self.first_moment[i].get_or_insert_with(|| Matrix::zeros(grad.rows(), grad.cols()));
            let v = self.second_moment[i].get_or_insert_with(|| Matrix::zeros(grad.rows(), grad.cols()));
            let decay = self.lr * self.weight_decay;
            let values = p.value.as_mut_slice();
            for (((w, g), mk), vk) in values
                .iter_mut()
                .zip(grad.as_slice())
                .zip(m.as_mut_slice())
                .zip(v.as_mut_slice())
            {
                *w -= decay * *w;
                *mk = self.beta1 * *mk + (1.0 - self.beta1) * g;
                *vk = self.beta2 * *vk + (1.0 - self.beta2) * g * g;
                let m_hat = *mk / bias1;
                let v_hat = *vk / bias2;
                *w -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
            }
            report.updated += 1;
        }
        report
    }
}
