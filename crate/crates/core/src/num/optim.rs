//! Adam updates and learning-rate schedules.

use crate::error::{Error, Result};
use crate::num::tensor::{Scalar, Tensor};

#[derive(Clone, Copy, Debug)]
pub struct AdamHyper {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamHyper {
    fn default() -> Self {
        AdamHyper { beta1: 0.8, beta2: 0.99, eps: 1e-8 }
    }
}

/// Per-parameter Adam accumulators.
#[derive(Clone, Debug)]
pub struct AdamState<F> {
    pub m: Tensor<F>,
    pub v: Tensor<F>,
    pub step: u64,
}

impl<F: Scalar> AdamState<F> {
    pub fn new(shape: &[usize]) -> Self {
        AdamState { m: Tensor::zeros(shape), v: Tensor::zeros(shape), step: 0 }
    }
}

/// One bias-corrected Adam update in place.
pub fn adam_step<F: Scalar>(
    param: &mut Tensor<F>,
    grad: &Tensor<F>,
    state: &mut AdamState<F>,
    hp: AdamHyper,
    lr: f64,
) -> Result<()> {
    if param.shape() != grad.shape() {
        return Err(Error::shape("adam_step", param.shape(), grad.shape()));
    }
    if param.shape() != state.m.shape() {
        return Err(Error::shape("adam_step state", param.shape(), state.m.shape()));
    }
    if !grad.is_all_finite() {
        return Err(Error::invalid("adam_step: non-finite gradient"));
    }
    state.step += 1;
    let b1 = F::of_f64(hp.beta1);
    let b2 = F::of_f64(hp.beta2);
    let one = F::one();
    let eps = F::of_f64(hp.eps);
    let c1 = F::of_f64(1.0 / (1.0 - hp.beta1.powi(state.step as i32)));
    let c2 = F::of_f64(1.0 / (1.0 - hp.beta2.powi(state.step as i32)));
    let lr = F::of_f64(lr);
    let (pd, gd) = (param.data_mut(), grad.data());
    let (md, vd) = (state.m.data_mut(), state.v.data_mut());
    for i in 0..pd.len() {
        let g = gd[i];
        md[i] = b1 * md[i] + (one - b1) * g;
        vd[i] = b2 * vd[i] + (one - b2) * g * g;
        let mhat = md[i] * c1;
        let vhat = vd[i] * c2;
        pd[i] = pd[i] - lr * mhat / (vhat.sqrt() + eps);
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ScheduleKind {
    Constant,
    SlantedTriangular,
}

/// Learning-rate schedule over a whole stage.
#[derive(Clone, Copy, Debug)]
pub struct LrSchedule {
    pub kind: ScheduleKind,
    pub lr_max: f64,
    pub total_steps: u64,
    pub cut_frac: f64,
    pub ratio: f64,
}

impl LrSchedule {
    pub fn constant(lr: f64) -> Self {
        LrSchedule {
            kind: ScheduleKind::Constant,
            lr_max: lr,
            total_steps: 0,
            cut_frac: 0.1,
            ratio: 32.0,
        }
    }

    pub fn slanted(lr_max: f64, total_steps: u64, cut_frac: f64, ratio: f64) -> Self {
        LrSchedule { kind: ScheduleKind::SlantedTriangular, lr_max, total_steps, cut_frac, ratio }
    }

    pub fn lr(&self, t: u64) -> Result<f64> {
        match self.kind {
            ScheduleKind::Constant => Ok(self.lr_max),
            ScheduleKind::SlantedTriangular => stlr(t, self),
        }
    }
}

/// Slanted-triangular learning rate: short linear warmup to `lr_max`, long
/// linear decay down to `lr_max / ratio`.
pub fn stlr(t: u64, sched: &LrSchedule) -> Result<f64> {
    let cut = (sched.total_steps as f64 * sched.cut_frac).floor();
    if cut == 0.0 {
        return Err(Error::invalid("stlr: cut is 0 (total_steps * cut_frac < 1)"));
    }
    let t = t as f64;
    let p = if t < cut {
        t / cut
    } else {
        1.0 - (t - cut) / (cut * (1.0 / sched.cut_frac - 1.0))
    };
    Ok(sched.lr_max * (1.0 + p * (sched.ratio - 1.0)) / sched.ratio)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn adam_zero_grad_leaves_params() {
        let mut p = Tensor::<f32>::vector(vec![0.5, -0.5]);
        let g = Tensor::zeros(&[2]);
        let mut st = AdamState::new(&[2]);
        adam_step(&mut p, &g, &mut st, AdamHyper::default(), 0.1).unwrap();
        assert_eq!(p.data(), &[0.5, -0.5]);
    }

    #[test]
    fn adam_first_step_moves_by_lr() {
        // m̂/√v̂ is exactly 1 after one step with g = 1
        let mut p = Tensor::<f64>::vector(vec![0.0]);
        let g = Tensor::vector(vec![1.0]);
        let mut st = AdamState::new(&[1]);
        adam_step(&mut p, &g, &mut st, AdamHyper::default(), 0.01).unwrap();
        assert!((p.data()[0] + 0.01).abs() < 1e-9, "{}", p.data()[0]);
    }

    #[test]
    fn adam_constant_grad_decreases_param() {
        let mut p = Tensor::<f64>::vector(vec![1.0]);
        let g = Tensor::vector(vec![1.0]);
        let mut st = AdamState::new(&[1]);
        let mut last = 1.0;
        for _ in 0..2 {
            adam_step(&mut p, &g, &mut st, AdamHyper::default(), 0.1).unwrap();
            assert!(p.data()[0] < last);
            last = p.data()[0];
        }
    }

    #[test]
    fn adam_rejects_non_finite_grad() {
        let mut p = Tensor::<f32>::vector(vec![0.0]);
        let g = Tensor::vector(vec![f32::NAN]);
        let mut st = AdamState::new(&[1]);
        assert!(adam_step(&mut p, &g, &mut st, AdamHyper::default(), 0.1).is_err());
    }

    #[test]
    fn stlr_matches_hand_values() {
        let s = LrSchedule::slanted(0.01, 100, 0.1, 32.0);
        assert!((s.lr(10).unwrap() - 0.01).abs() < 1e-15);
        assert!((s.lr(0).unwrap() - 3.125e-4).abs() < 1e-15);
        assert!((s.lr(100).unwrap() - 3.125e-4).abs() < 1e-15);
    }

    #[test]
    fn stlr_zero_cut_errors() {
        let s = LrSchedule::slanted(0.01, 5, 0.1, 32.0);
        assert!(s.lr(1).is_err());
    }

    #[test]
    fn stlr_positive_everywhere() {
        let s = LrSchedule::slanted(0.02, 333, 0.1, 32.0);
        for t in 0..=333 {
            assert!(s.lr(t).unwrap() > 0.0);
        }
    }
}
