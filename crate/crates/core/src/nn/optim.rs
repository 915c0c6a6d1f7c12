use super::tensor::{Parameters, Tensor};

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPSILON: f64 = 1e-8;

/// Adam moment estimates, one accumulator per parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub first_moment: Vec<Tensor>,
    pub second_moment: Vec<Tensor>,
    pub step: u64,
}

impl OptimizerState {
    pub fn new<P: Parameters + ?Sized>(params: &P) -> Self {
        let zeros: Vec<Tensor> = params.tensors().iter().map(|t| Tensor::zeros(t.shape())).collect();
        Self {
            first_moment: zeros.clone(),
            second_moment: zeros,
            step: 0,
        }
    }
}

/// One bias-corrected Adam update, in place.
pub fn adam_step<P: Parameters + ?Sized>(params: &mut P, grads: &P, state: &mut OptimizerState, learning_rate: f64) {
    state.step += 1;
    let t = state.step as i32;
    let correction1 = 1.0 - BETA1.powi(t);
    let correction2 = 1.0 - BETA2.powi(t);

    let grads = grads.tensors();
    for (((p, g), m), v) in params
        .tensors_mut()
        .into_iter()
        .zip(grads)
        .zip(state.first_moment.iter_mut())
        .zip(state.second_moment.iter_mut())
    {
        debug_assert_eq!(p.shape(), g.shape());
        for (((pv, &gv), mv), vv) in p
            .as_mut_slice()
            .iter_mut()
            .zip(g.as_slice())
            .zip(m.as_mut_slice())
            .zip(v.as_mut_slice())
        {
            *mv = BETA1 * *mv + (1.0 - BETA1) * gv;
            *vv = BETA2 * *vv + (1.0 - BETA2) * gv * gv;
            let m_hat = *mv / correction1;
            let v_hat = *vv / correction2;
            *pv -= learning_rate * m_hat / (v_hat.sqrt() + EPSILON);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_params() {
        let mut p = Tensor::from_vec(&[3], vec![1.0, -2.0, 0.5]).unwrap();
        let before = p.clone();
        let g = Tensor::zeros(&[3]);
        let mut s = OptimizerState::new(&p);
        adam_step(&mut p, &g, &mut s, 0.01);
        assert_eq!(p, before);
        assert_eq!(s.step, 1);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        // m̂ = 1, v̂ = 1, so Δθ = −lr · 1/(1 + 1e-8).
        let mut p = Tensor::scalar(0.0);
        let g = Tensor::scalar(1.0);
        let mut s = OptimizerState::new(&p);
        adam_step(&mut p, &g, &mut s, 0.001);
        let expect = -0.001 / (1.0 + 1e-8);
        assert!((p.as_slice()[0] - expect).abs() < 1e-15);
    }

    #[test]
    fn deterministic() {
        let p0 = Tensor::from_vec(&[2], vec![0.3, 0.7]).unwrap();
        let g = Tensor::from_vec(&[2], vec![0.1, -0.2]).unwrap();
        let run = || {
            let mut p = p0.clone();
            let mut s = OptimizerState::new(&p);
            adam_step(&mut p, &g, &mut s, 0.01);
            adam_step(&mut p, &g, &mut s, 0.01);
            (p, s)
        };
        assert_eq!(run(), run());
    }
}
