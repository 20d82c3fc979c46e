use super::config::AdamConfig;
use super::params::CaptionerParams;
use super::tensor::Real;
use super::ModelError;

/// First/second moment estimates and step count, one buffer per tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<T> {
    pub step: u64,
    pub first: Vec<Vec<T>>,
    pub second: Vec<Vec<T>>,
}

impl<T: Real> AdamState<T> {
    pub fn for_shapes(lengths: impl IntoIterator<Item = usize>) -> Self {
        let lengths: Vec<usize> = lengths.into_iter().collect();
        Self {
            step: 0,
            first: lengths.iter().map(|&n| vec![T::zero(); n]).collect(),
            second: lengths.iter().map(|&n| vec![T::zero(); n]).collect(),
        }
    }

    pub fn for_params(params: &CaptionerParams<T>) -> Self {
        Self::for_shapes(params.tensors().iter().map(|(_, t)| t.len()))
    }
}

/// One bias-corrected Adam update over parallel parameter/gradient slices.
/// Nothing is modified when any gradient is non-finite.
pub fn adam_update<T: Real>(
    hyper: &AdamConfig,
    state: &mut AdamState<T>,
    params: &mut [&mut [T]],
    grads: &[(&str, &[T])],
) -> Result<(), ModelError> {
    for (name, g) in grads {
        if let Some(index) = g.iter().position(|v| !v.is_finite()) {
            return Err(ModelError::NonFiniteGradient {
                tensor: (*name).to_owned(),
                index,
            });
        }
    }
    state.step += 1;
    let t = state.step as i32;
    let (b1, b2) = (T::lit(hyper.beta1), T::lit(hyper.beta2));
    let correction1 = T::one() - T::lit(hyper.beta1.powi(t));
    let correction2 = T::one() - T::lit(hyper.beta2.powi(t));
    let lr = T::lit(hyper.lr);
    let eps = T::lit(hyper.epsilon);
    for (k, (p, (_, g))) in params.iter_mut().zip(grads).enumerate() {
        let m = &mut state.first[k];
        let v = &mut state.second[k];
        for i in 0..p.len() {
            m[i] = b1 * m[i] + (T::one() - b1) * g[i];
            v[i] = b2 * v[i] + (T::one() - b2) * g[i] * g[i];
            let m_hat = m[i] / correction1;
            let v_hat = v[i] / correction2;
            p[i] -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}

/// Applies [`adam_update`] to every tensor of the captioner.
pub fn adam_step<T: Real>(
    params: &mut CaptionerParams<T>,
    grads: &CaptionerParams<T>,
    state: &mut AdamState<T>,
    hyper: &AdamConfig,
) -> Result<(), ModelError> {
    let named = grads.tensors();
    let grad_slices: Vec<(&str, &[T])> = named.iter().map(|(n, t)| (n.as_str(), t.data.as_slice())).collect();
    let mut param_slices: Vec<&mut [T]> = params
        .tensors_mut()
        .into_iter()
        .map(|(_, t)| t.data.as_mut_slice())
        .collect();
    adam_update(hyper, state, &mut param_slices, &grad_slices)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run(params: &mut Vec<f64>, grads: &[f64], state: &mut AdamState<f64>, hyper: &AdamConfig) {
        let mut slices = [params.as_mut_slice()];
        adam_update(hyper, state, &mut slices, &[("x", grads)]).unwrap();
    }

    #[test]
    fn zero_gradient_is_a_fixed_point_and_moments_decay() {
        let hyper = AdamConfig::default();
        let mut state = AdamState::<f64>::for_shapes([2]);
        let mut p = vec![1.0, -2.0];
        run(&mut p, &[0.5, -0.5], &mut state, &hyper);
        let (m, v) = (state.first[0].clone(), state.second[0].clone());
        let before = p.clone();
        run(&mut p, &[0.0, 0.0], &mut state, &hyper);
        for i in 0..2 {
            assert!((state.first[0][i] - 0.9 * m[i]).abs() < 1e-15);
            assert!((state.second[0][i] - 0.999 * v[i]).abs() < 1e-15);
        }
        // The decayed first moment still moves the parameters; from a fresh
        // state a zero gradient leaves them untouched.
        assert_ne!(p, before);
        let mut fresh = AdamState::<f64>::for_shapes([2]);
        let mut q = vec![1.0, -2.0];
        run(&mut q, &[0.0, 0.0], &mut fresh, &hyper);
        assert_eq!(q, vec![1.0, -2.0]);
        assert_eq!(fresh.step, 1);
    }

    #[test]
    fn first_step_hand_evaluated() {
        // t = 1: m_hat = g, v_hat = g^2, update = -lr * g / (|g| + eps).
        let hyper = AdamConfig {
            lr: 0.01,
            ..Default::default()
        };
        let mut state = AdamState::<f64>::for_shapes([3]);
        let g = [0.3, -2.0, 1e-3];
        let mut p = vec![0.0; 3];
        run(&mut p, &g, &mut state, &hyper);
        for i in 0..3 {
            let expected = -0.01 * g[i] / (g[i].abs() + 1e-8);
            assert!((p[i] - expected).abs() < 1e-12, "{i}: {} vs {expected}", p[i]);
        }
    }

    #[test]
    fn deterministic() {
        let hyper = AdamConfig::default();
        let mut s1 = AdamState::<f32>::for_shapes([4]);
        let mut s2 = s1.clone();
        let mut p1 = vec![0.1f32, 0.2, 0.3, 0.4];
        let mut p2 = p1.clone();
        let g = [0.01f32, -0.3, 2.0, 0.0];
        adam_update(&hyper, &mut s1, &mut [p1.as_mut_slice()], &[("w", &g)]).unwrap();
        adam_update(&hyper, &mut s2, &mut [p2.as_mut_slice()], &[("w", &g)]).unwrap();
        assert_eq!(p1, p2);
        assert_eq!(s1, s2);
    }

    #[test]
    fn non_finite_gradient_aborts() {
        let hyper = AdamConfig::default();
        let mut state = AdamState::<f64>::for_shapes([2]);
        let mut p = vec![1.0, 1.0];
        let err = adam_update(&hyper, &mut state, &mut [p.as_mut_slice()], &[("w", &[0.0, f64::NAN])]).unwrap_err();
        assert!(matches!(err, ModelError::NonFiniteGradient { index: 1, .. }));
        assert_eq!(state.step, 0);
        assert_eq!(p, vec![1.0, 1.0]);
    }

    #[test]
    fn decreases_positive_definite_quadratic() {
        // f(x) = 0.5 x^T A x - b^T x with A symmetric positive definite.
        let a = [[4.0, 1.0, 0.0], [1.0, 3.0, 0.5], [0.0, 0.5, 2.0]];
        let b = [1.0, -2.0, 0.5];
        let f = |x: &[f64]| {
            let mut v = 0.0;
            for i in 0..3 {
                for j in 0..3 {
                    v += 0.5 * x[i] * a[i][j] * x[j];
                }
                v -= b[i] * x[i];
            }
            v
        };
        let grad = |x: &[f64]| -> Vec<f64> { (0..3).map(|i| (0..3).map(|j| a[i][j] * x[j]).sum::<f64>() - b[i]).collect() };
        let hyper = AdamConfig {
            lr: 1e-4,
            ..Default::default()
        };
        let mut state = AdamState::<f64>::for_shapes([3]);
        let mut x = vec![2.0, 1.0, -3.0];
        for _ in 0..5 {
            let before = f(&x);
            let g = grad(&x);
            run(&mut x, &g, &mut state, &hyper);
            assert!(f(&x) < before);
        }
    }
}
