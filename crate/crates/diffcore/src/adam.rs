use crate::tensor::Tensor;

/// Adam hyperparameters with decoupled weight decay.
#[derive(Clone, Copy, Debug)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { lr: 1e-3, beta1: 0.9, beta2: 0.999, eps: 1e-8, weight_decay: 1e-5 }
    }
}

/// First/second-moment accumulators, one pair per parameter tensor.
pub struct AdamState {
    m: Vec<Tensor>,
    v: Vec<Tensor>,
    step: u64,
    pub cfg: AdamConfig,
}

impl AdamState {
    pub fn new(params: &[Tensor], cfg: AdamConfig) -> Self {
        let m = params.iter().map(|p| Tensor::zeros(p.rows(), p.cols())).collect();
        let v = params.iter().map(|p| Tensor::zeros(p.rows(), p.cols())).collect();
        AdamState { m, v, step: 0, cfg }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }
}

/// One Adam update with bias correction and decoupled weight decay:
///
/// ```text
/// m <- b1 m + (1-b1) g        v <- b2 v + (1-b2) g^2
/// p <- p - lr * ( m_hat / (sqrt(v_hat) + eps) + wd * p )
/// ```
///
/// Panics if the parameter, gradient, and state shapes disagree.
pub fn adam_step(params: &mut [Tensor], grads: &[Tensor], state: &mut AdamState) {
    assert_eq!(params.len(), grads.len(), "adam_step: {} params vs {} grads", params.len(), grads.len());
    assert_eq!(params.len(), state.m.len(), "adam_step: state sized for {} params", state.m.len());
    state.step += 1;
    let t = state.step as i32;
    let c = state.cfg;
    let bc1 = 1.0 - c.beta1.powi(t);
    let bc2 = 1.0 - c.beta2.powi(t);

    for ((p, g), (m, v)) in
        params.iter_mut().zip(grads).zip(state.m.iter_mut().zip(state.v.iter_mut()))
    {
        assert_eq!(p.shape(), g.shape(), "adam_step: param/grad shape mismatch");
        let (pm, gm) = (p.data_mut(), g.data());
        let (md, vd) = (m.data_mut(), v.data_mut());
        for i in 0..pm.len() {
            let gi = gm[i];
            md[i] = c.beta1 * md[i] + (1.0 - c.beta1) * gi;
            vd[i] = c.beta2 * vd[i] + (1.0 - c.beta2) * gi * gi;
            let m_hat = md[i] / bc1;
            let v_hat = vd[i] / bc2;
            pm[i] -= c.lr * (m_hat / (v_hat.sqrt() + c.eps) + c.weight_decay * pm[i]);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(lr: f64, wd: f64) -> AdamConfig {
        AdamConfig { lr, weight_decay: wd, ..AdamConfig::default() }
    }

    #[test]
    fn zero_gradient_zero_decay_is_fixed_point() {
        let mut params = vec![Tensor::row(vec![1.0, -2.0, 3.0])];
        let grads = vec![Tensor::row(vec![0.0, 0.0, 0.0])];
        let mut state = AdamState::new(&params, cfg(1e-3, 0.0));
        adam_step(&mut params, &grads, &mut state);
        assert_eq!(params[0].data(), &[1.0, -2.0, 3.0]);
    }

    #[test]
    fn positive_gradient_decreases_param() {
        let mut params = vec![Tensor::scalar(1.0)];
        let grads = vec![Tensor::scalar(1.0)];
        let mut state = AdamState::new(&params, cfg(1e-3, 0.0));
        adam_step(&mut params, &grads, &mut state);
        assert!(params[0].item() < 1.0);
    }

    #[test]
    fn first_step_is_near_signed_lr() {
        // With bias correction, step 1 moves by ~lr * sign(g).
        let mut params = vec![Tensor::scalar(1.0)];
        let grads = vec![Tensor::scalar(2.0)];
        let mut state = AdamState::new(&params, cfg(0.1, 0.0));
        adam_step(&mut params, &grads, &mut state);
        assert!((params[0].item() - 0.9).abs() < 1e-8);
    }

    #[test]
    fn three_steps_match_scalar_reference_trace() {
        // Independent per-step recurrence on f(p) = p^2 (g = 2p），written
        // out exactly as the update formulas state.
        let c = cfg(0.1, 0.0);
        let mut p_ref = 1.0f64;
        let (mut m, mut v) = (0.0f64, 0.0f64);
        let mut trace = Vec::new();
        for t in 1..=3 {
            let g = 2.0 * p_ref;
            m = c.beta1 * m + (1.0 - c.beta1) * g;
            v = c.beta2 * v + (1.0 - c.beta2) * g * g;
            let m_hat = m / (1.0 - c.beta1.powi(t));
            let v_hat = v / (1.0 - c.beta2.powi(t));
            p_ref -= c.lr * m_hat / (v_hat.sqrt() + c.eps);
            trace.push(p_ref);
        }

        let mut params = vec![Tensor::scalar(1.0)];
        let mut state = AdamState::new(&params, c);
        for expected in trace {
            let g = vec![Tensor::scalar(2.0 * params[0].item())];
            adam_step(&mut params, &g, &mut state);
            assert!((params[0].item() - expected).abs() < 1e-15);
        }
    }

    #[test]
    fn decoupled_decay_shrinks_params_without_gradient() {
        let mut params = vec![Tensor::scalar(4.0)];
        let grads = vec![Tensor::scalar(0.0)];
        let mut state = AdamState::new(&params, cfg(0.1, 0.01));
        adam_step(&mut params, &grads, &mut state);
        assert!((params[0].item() - (4.0 - 0.1 * 0.01 * 4.0)).abs() < 1e-12);
    }
}
