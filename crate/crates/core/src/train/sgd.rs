use super::config::UpdateRule;
use crate::error::{Error, Result};
use crate::tensor::{Param, Scalar};

/// Hyperparameters of one optimizer step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SgdStep {
    pub lr: f64,
    pub momentum: f64,
    pub decay: f64,
    pub rule: UpdateRule,
}

/// Updates one weight buffer in place from its gradient and velocity.
pub fn sgd_update<T: Scalar>(w: &mut [T], g: &[T], v: &mut [T], step: SgdStep) {
    let lr = T::from_f64_lossy(step.lr);
    let m = T::from_f64_lossy(step.momentum);
    let d = T::from_f64_lossy(step.decay);
    for ((w, &g), v) in w.iter_mut().zip(g).zip(v.iter_mut()) {
        match step.rule {
            UpdateRule::Standard => {
                *v = m * *v - lr * (g + d * *w);
                *w += *v;
            }
            UpdateRule::Literal => {
                *v = lr * g - m * *v + d * lr * *w;
                *w -= *v;
            }
        }
    }
}

/// Applies one step to every trainable block. Nothing is modified when any
/// gradient is non-finite.
pub fn sgd_step<T: Scalar>(params: &mut [&mut Param<T>], step: SgdStep) -> Result<()> {
    for p in params.iter().filter(|p| !p.frozen) {
        if let Some(i) = p.grad.iter().position(|g| !g.is_finite()) {
            let msg = format!("non-finite gradient in {} at index {i}, step aborted", p.name);
            log::error!("{msg}");
            return Err(Error::NonFinite(msg));
        }
    }
    for p in params.iter_mut().filter(|p| !p.frozen) {
        let Param {
            value, grad, velocity, ..
        } = &mut **p;
        sgd_update(value, grad, velocity, step);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn plain(lr: f64) -> SgdStep {
        SgdStep {
            lr,
            momentum: 0.0,
            decay: 0.0,
            rule: UpdateRule::Standard,
        }
    }

    #[test]
    fn plain_gradient_step() {
        let (mut w, mut v) = ([1.0f64], [0.0f64]);
        sgd_update(&mut w, &[0.5], &mut v, plain(0.1));
        assert!((w[0] - 0.95).abs() < 1e-15);
    }

    #[test]
    fn decay_only_shrinks() {
        let (mut w, mut v) = ([2.0f64], [0.0f64]);
        let step = SgdStep {
            decay: 0.005,
            ..plain(0.1)
        };
        sgd_update(&mut w, &[0.0], &mut v, step);
        assert!((w[0] - (2.0 - 0.1 * 0.005 * 2.0)).abs() < 1e-15);
    }

    #[test]
    fn literal_rule_alternates_momentum_sign() {
        let step = SgdStep {
            lr: 0.1,
            momentum: 0.9,
            decay: 0.0,
            rule: UpdateRule::Literal,
        };
        let (mut w, mut v) = ([1.0f64], [0.0f64]);
        sgd_update(&mut w, &[0.5], &mut v, step);
        assert!((w[0] - 0.95).abs() < 1e-15);
        sgd_update(&mut w, &[0.5], &mut v, step);
        // Δ2 = 0.05 − 0.9·0.05
        assert!((w[0] - (0.95 - 0.005)).abs() < 1e-15);
    }

    #[test]
    fn non_finite_gradient_aborts_without_side_effects() {
        let mut a = Param::<f32>::filled("a", &[2], 1.0);
        let mut b = Param::<f32>::filled("b", &[1], 1.0);
        a.grad = vec![0.1, 0.1];
        b.grad = vec![f32::NAN];
        let err = sgd_step(&mut [&mut a, &mut b], plain(0.1)).unwrap_err();
        assert!(matches!(err, Error::NonFinite(ref m) if m.contains('b')));
        assert_eq!(a.value, vec![1.0, 1.0]);
    }

    #[test]
    fn frozen_blocks_are_untouched() {
        let mut a = Param::<f64>::filled("a", &[1], 1.0);
        a.grad = vec![1.0];
        a.frozen = true;
        sgd_step(&mut [&mut a], plain(0.1)).unwrap();
        assert_eq!(a.value, vec![1.0]);
    }

    proptest! {
        #[test]
        fn small_steps_descend_on_a_quadratic(w0 in -10.0f64..10.0, c in -5.0f64..5.0, a in 0.1f64..4.0) {
            // L = a/2·(w − c)²
            let (mut w, mut v) = ([w0], [0.0]);
            let lr = 0.5 / a;
            for _ in 0..5 {
                let before = a / 2.0 * (w[0] - c).powi(2);
                let g = [a * (w[0] - c)];
                sgd_update(&mut w, &g, &mut v, plain(lr));
                let after = a / 2.0 * (w[0] - c).powi(2);
                prop_assert!(after <= before);
                v[0] = 0.0;
            }
        }
    }
}
