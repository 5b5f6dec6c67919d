use crate::config::AdamConfig;
use crate::error::{Error, Result};
use crate::nn::Params;

/// First and second moment estimates for one parameter group.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Params,
    pub v: Params,
    pub t: u64,
}

impl AdamState {
    pub fn new(params: &Params) -> Self {
        Self {
            m: params.zeros_like(),
            v: params.zeros_like(),
            t: 0,
        }
    }

    /// One bias-corrected update in place.
    pub fn step(&mut self, params: &mut Params, grads: &Params, lr: f64, cfg: &AdamConfig) -> Result<()> {
        self.t += 1;
        let b1t = 1.0 - cfg.beta1.powi(self.t as i32);
        let b2t = 1.0 - cfg.beta2.powi(self.t as i32);
        for (name, p) in params.iter_mut() {
            let g = grads.get(name)?;
            let m = self.m.get_mut(name).ok_or_else(|| Error::config(format!("no moment for `{name}`")))?;
            let v = self.v.get_mut(name).ok_or_else(|| Error::config(format!("no moment for `{name}`")))?;
            if g.shape() != p.shape() || m.shape() != p.shape() || v.shape() != p.shape() {
                return Err(Error::config(format!("shape mismatch in optimizer state for `{name}`")));
            }
            let (pd, gd) = (p.data_mut(), g.data());
            let (md, vd) = (m.data_mut(), v.data_mut());
            for i in 0..pd.len() {
                md[i] = cfg.beta1 * md[i] + (1.0 - cfg.beta1) * gd[i];
                vd[i] = cfg.beta2 * vd[i] + (1.0 - cfg.beta2) * gd[i] * gd[i];
                pd[i] -= lr * (md[i] / b1t) / ((vd[i] / b2t).sqrt() + cfg.eps);
            }
        }
        Ok(())
    }
}

/// Rescale all gradients so their joint L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_global_norm(grads: &mut Params, max_norm: f64) -> f64 {
    let norm = grads.iter().map(|(_, t)| t.sq_norm()).sum::<f64>().sqrt();
    if norm > max_norm && norm.is_finite() {
        let s = max_norm / norm;
        for (_, t) in grads.iter_mut() {
            t.data_mut().iter_mut().for_each(|v| *v *= s);
        }
    }
    norm
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autograd::Tensor;

    fn one(v: Vec<f64>) -> Params {
        let mut p = Params::new();
        p.insert("w", Tensor::new(vec![v.len()], v));
        p
    }

    #[test]
    fn first_step_moves_by_lr_times_sign() {
        let cfg = AdamConfig { beta1: 0.9, beta2: 0.999, eps: 1e-8 };
        let mut p = one(vec![1.0, -2.0, 0.5]);
        let mut s = AdamState::new(&p);
        s.step(&mut p, &one(vec![3.0, -0.1, 0.0]), 0.01, &cfg).unwrap();
        let d = p.get("w").unwrap().data();
        assert!((d[0] - 0.99).abs() < 1e-6);
        assert!((d[1] + 1.99).abs() < 1e-6);
        assert_eq!(d[2], 0.5);
        assert_eq!(s.t, 1);
    }

    #[test]
    fn clipping_scales_to_max_norm() {
        let mut g = one(vec![3.0, 4.0]);
        assert_eq!(clip_global_norm(&mut g, 1.0), 5.0);
        assert!((g.get("w").unwrap().data()[0] - 0.6).abs() < 1e-15);
        let mut small = one(vec![0.3, 0.4]);
        clip_global_norm(&mut small, 1.0);
        assert_eq!(small.get("w").unwrap().data(), &[0.3, 0.4]);
    }
}
