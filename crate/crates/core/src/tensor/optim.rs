use serde::{Deserialize, Serialize};

use super::{Gradients, ParamStore};
use crate::error::{dim_err, Error, Result};

/// Step-decayed learning rate: constant for the first `decay_start_epoch`
/// epochs, then multiplied by `decay_factor` once per further epoch.
/// Epochs are numbered from 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SgdSchedule {
    pub initial_lr: f64,
    pub decay_factor: f64,
    pub decay_start_epoch: u32,
    pub total_epochs: u32,
}

impl SgdSchedule {
    /// lr 0.1, halved after epoch 5, 15 epochs.
    pub const BASE: SgdSchedule = SgdSchedule {
        initial_lr: 0.1,
        decay_factor: 0.5,
        decay_start_epoch: 5,
        total_epochs: 15,
    };

    /// lr 0.08, times 0.9 after epoch 1, 30 epochs.
    pub const CONTEXTUAL: SgdSchedule = SgdSchedule {
        initial_lr: 0.08,
        decay_factor: 0.9,
        decay_start_epoch: 1,
        total_epochs: 30,
    };

    pub fn validate(&self) -> Result<()> {
        if !(self.initial_lr > 0.0 && self.initial_lr.is_finite()) {
            return Err(Error::Config(format!(
                "initial lr {} must be positive",
                self.initial_lr
            )));
        }
        if !(self.decay_factor > 0.0 && self.decay_factor <= 1.0) {
            return Err(Error::Config(format!(
                "decay factor {} must lie in (0, 1]",
                self.decay_factor
            )));
        }
        if self.total_epochs == 0 {
            return Err(Error::Config("total epochs must be at least 1".into()));
        }
        Ok(())
    }

    pub fn lr(&self, epoch: u32) -> f64 {
        let decays = epoch.saturating_sub(self.decay_start_epoch);
        self.initial_lr * self.decay_factor.powi(decays as i32)
    }

    pub fn with_epochs(mut self, total_epochs: u32) -> Self {
        self.total_epochs = total_epochs;
        self
    }
}

/// `p ← p − lr·g` for every parameter that has a gradient.
pub fn sgd_step(params: &mut ParamStore, grads: &Gradients, lr: f64) -> Result<()> {
    for (id, g) in grads.params() {
        let p = params.get_mut(id);
        if p.shape() != g.shape() {
            return dim_err(format!(
                "gradient shape {:?} does not match parameter shape {:?}",
                g.shape(),
                p.shape()
            ));
        }
        for (pv, gv) in p.data_mut().iter_mut().zip(g.data()) {
            *pv -= lr * gv;
        }
    }
    Ok(())
}

/// Rescales all parameter gradients so their joint L2 norm is at most
/// `max_norm`. Returns the norm before clipping.
pub fn clip_grad_norm(grads: &mut Gradients, max_norm: f64) -> f64 {
    let mut ids: Vec<_> = grads.params().map(|(id, _)| id).collect();
    ids.sort();
    let sq: f64 = ids
        .iter()
        .map(|id| grads.param(*id).unwrap().data().iter().map(|v| v * v).sum::<f64>())
        .sum();
    let norm = sq.sqrt();
    if norm > max_norm && norm > 0.0 {
        let scale = max_norm / norm;
        for (_, g) in grads.params_mut() {
            for v in g.data_mut() {
                *v *= scale;
            }
        }
    }
    norm
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::{Tape, Tensor};

    #[test]
    fn single_step() {
        let mut ps = ParamStore::new();
        let id = ps.insert("p", Tensor::vector(vec![1.0])).unwrap();
        let mut g = Gradients::new();
        {
            let mut t = Tape::new(&ps);
            let p = t.param(id);
            let l = t.sum(p).unwrap();
            t.backward(l, &mut g).unwrap();
        }
        sgd_step(&mut ps, &g, SgdSchedule::BASE.lr(1)).unwrap();
        assert!((ps.get(id).data()[0] - 0.9).abs() < 1e-15);
    }

    #[test]
    fn closed_form_examples() {
        assert_eq!(SgdSchedule::BASE.lr(7), 0.1 * 0.5 * 0.5);
        assert_eq!(SgdSchedule::BASE.lr(6), 0.05);
        assert_eq!(SgdSchedule::BASE.lr(5), 0.1);
        assert_eq!(SgdSchedule::CONTEXTUAL.lr(3), 0.08 * 0.9 * 0.9);
        assert!((SgdSchedule::CONTEXTUAL.lr(2) - 0.072).abs() < 1e-15);
        assert_eq!(SgdSchedule::CONTEXTUAL.lr(1), 0.08);
    }

    #[test]
    fn lr_non_increasing() {
        for s in [SgdSchedule::BASE, SgdSchedule::CONTEXTUAL] {
            for e in 1..s.total_epochs {
                assert!(s.lr(e + 1) <= s.lr(e));
                assert!(s.lr(e) > 0.0);
            }
        }
    }

    #[test]
    fn invalid_schedules() {
        let mut s = SgdSchedule::BASE;
        s.initial_lr = 0.0;
        assert!(s.validate().is_err());
        let mut s = SgdSchedule::BASE;
        s.decay_factor = 1.5;
        assert!(s.validate().is_err());
    }

    #[test]
    fn clipping_scales_to_bound() {
        let mut ps = ParamStore::new();
        let id = ps.insert("p", Tensor::vector(vec![3.0, 4.0])).unwrap();
        let mut g = Gradients::new();
        {
            let mut t = Tape::new(&ps);
            let p = t.param(id);
            let sq = t.mul(p, p).unwrap();
            let l = t.sum(sq).unwrap();
            t.backward(l, &mut g).unwrap();
        }
        let norm = clip_grad_norm(&mut g, 1.0);
        assert!((norm - 10.0).abs() < 1e-12);
        let d = g.param(id).unwrap().data();
        assert!(((d[0] * d[0] + d[1] * d[1]).sqrt() - 1.0).abs() < 1e-12);
    }
}
