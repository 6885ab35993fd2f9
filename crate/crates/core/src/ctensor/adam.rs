use super::{ComplexTensor, TensorError};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// L2 coefficient added to the gradient before the moment updates.
    pub weight_decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 5e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 1e-6,
        }
    }
}

#[derive(Debug, Clone, Default)]
struct Moments {
    m_re: Vec<f64>,
    m_im: Vec<f64>,
    v_re: Vec<f64>,
    v_im: Vec<f64>,
}

/// Adam with the real and imaginary part of every weight treated as
/// independent real parameters.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub config: AdamConfig,
    step: u64,
    moments: Vec<Moments>,
}

impl AdamState {
    pub fn new(config: AdamConfig) -> Self {
        Self {
            config,
            step: 0,
            moments: Vec::new(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// Applies one update to `params` using their stored gradients, then clears them.
    pub fn step(&mut self, params: &mut [&mut ComplexTensor]) -> Result<(), TensorError> {
        if self.moments.is_empty() {
            self.moments = params
                .iter()
                .map(|p| Moments {
                    m_re: vec![0.0; p.len()],
                    m_im: vec![0.0; p.len()],
                    v_re: vec![0.0; p.len()],
                    v_im: vec![0.0; p.len()],
                })
                .collect();
        }
        if self.moments.len() != params.len() {
            return Err(TensorError::StateMismatch(params.len()));
        }
        for (i, p) in params.iter().enumerate() {
            match &p.grad {
                None => return Err(TensorError::MissingGrad(i)),
                Some((gr, _)) if gr.len() != p.len() => return Err(TensorError::StateMismatch(i)),
                _ if self.moments[i].m_re.len() != p.len() => return Err(TensorError::StateMismatch(i)),
                _ => {}
            }
        }

        let AdamConfig {
            lr,
            beta1,
            beta2,
            eps,
            weight_decay,
        } = self.config;
        let t = (self.step + 1) as i32;
        let bc1 = 1.0 - beta1.powi(t);
        let bc2 = 1.0 - beta2.powi(t);

        // Stage the update so a non-finite value leaves everything untouched.
        let mut staged = Vec::with_capacity(params.len());
        for (p, mom) in params.iter().zip(&self.moments) {
            let (gr, gi) = p.grad.as_ref().expect("checked above");
            let mut next = mom.clone();
            let mut new_re = p.re.clone();
            let mut new_im = p.im.clone();
            let planes = [
                (&mut new_re, gr, &mut next.m_re, &mut next.v_re),
                (&mut new_im, gi, &mut next.m_im, &mut next.v_im),
            ];
            for (w, g, m, v) in planes {
                for j in 0..w.len() {
                    let gj = g[j] + weight_decay * w[j];
                    m[j] = beta1 * m[j] + (1.0 - beta1) * gj;
                    v[j] = beta2 * v[j] + (1.0 - beta2) * gj * gj;
                    let mh = m[j] / bc1;
                    let vh = v[j] / bc2;
                    w[j] -= lr * mh / (vh.sqrt() + eps);
                    if !w[j].is_finite() {
                        return Err(TensorError::NonFinite("adam update"));
                    }
                }
            }
            staged.push((next, new_re, new_im));
        }

        for ((p, mom), (next, re, im)) in params.iter_mut().zip(self.moments.iter_mut()).zip(staged) {
            *mom = next;
            p.re = re;
            p.im = im;
            p.grad = None;
        }
        self.step += 1;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn param(v: f64, g: f64) -> ComplexTensor {
        let mut p = ComplexTensor::scalar(v, 0.0).with_grad();
        p.grad = Some((vec![g], vec![0.0]));
        p
    }

    #[test]
    fn zero_gradient_leaves_parameter() {
        let mut st = AdamState::new(AdamConfig {
            weight_decay: 0.0,
            ..Default::default()
        });
        let mut p = param(0.7, 0.0);
        st.step(&mut [&mut p]).unwrap();
        assert_eq!(p.re()[0], 0.7);
        assert_eq!(st.step_count(), 1);
        assert!(p.grad.is_none());
    }

    #[test]
    fn first_step_is_normalized_gradient() {
        let cfg = AdamConfig {
            weight_decay: 0.0,
            ..Default::default()
        };
        let mut st = AdamState::new(cfg);
        let mut p = param(1.0, 0.3);
        st.step(&mut [&mut p]).unwrap();
        let expect = 1.0 - cfg.lr * 0.3 / (0.3 + cfg.eps);
        assert!((p.re()[0] - expect).abs() < 1e-15);
    }

    #[test]
    fn two_steps_match_hand_trace() {
        let cfg = AdamConfig {
            lr: 0.1,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.01,
        };
        let mut st = AdamState::new(cfg);
        let mut p = param(2.0, 0.5);
        st.step(&mut [&mut p]).unwrap();
        p.grad = Some((vec![-0.25], vec![0.0]));
        st.step(&mut [&mut p]).unwrap();

        // hand recurrence
        let mut w: f64 = 2.0;
        let (mut m, mut v) = (0.0f64, 0.0f64);
        for (t, g) in [(1, 0.5f64), (2, -0.25f64)] {
            let g = g + 0.01 * w;
            m = 0.9 * m + 0.1 * g;
            v = 0.999 * v + 0.001 * g * g;
            let mh = m / (1.0 - 0.9f64.powi(t));
            let vh = v / (1.0 - 0.999f64.powi(t));
            w -= 0.1 * mh / (vh.sqrt() + 1e-8);
        }
        assert!((p.re()[0] - w).abs() < 1e-12);
        // the imaginary component saw zero gradient and zero weight
        assert_eq!(p.im()[0], 0.0);
    }

    #[test]
    fn missing_grad_is_an_error() {
        let mut st = AdamState::new(AdamConfig::default());
        let mut p = ComplexTensor::scalar(1.0, 1.0);
        assert_eq!(st.step(&mut [&mut p]), Err(TensorError::MissingGrad(0)));
    }

    #[test]
    fn non_finite_update_is_rejected() {
        let mut st = AdamState::new(AdamConfig::default());
        let mut p = param(1.0, f64::NAN);
        assert_eq!(st.step(&mut [&mut p]), Err(TensorError::NonFinite("adam update")));
        assert_eq!(p.re()[0], 1.0);
    }
}
