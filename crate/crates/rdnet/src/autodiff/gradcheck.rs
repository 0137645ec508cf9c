//! Finite-difference verification of the tape's reverse-mode gradients.

use crate::autodiff::tape::{Tape, ValueId};
use crate::autodiff::tensor::{Scalar, Tensor};

/// Compares reverse-mode gradients of a scalar-valued tape program against
/// central finite differences and returns the worst relative error.
///
/// `build` receives a fresh tape plus the leaf ids of `inputs` (same order)
/// and must return a scalar value id. The finite-difference step is absolute.
pub fn grad_check<T, F>(inputs: &[Tensor<T>], step: f64, build: F) -> f64
where
    T: Scalar,
    F: Fn(&mut Tape<T>, &[ValueId]) -> ValueId,
{
    let eval = |tensors: &[Tensor<T>]| -> f64 {
        let mut tape = Tape::new();
        let ids: Vec<ValueId> = tensors.iter().map(|t| tape.leaf(t.clone())).collect();
        let root = build(&mut tape, &ids);
        tape.value(root).scalar_value().to_f64()
    };

    // Reverse-mode gradients at the unperturbed point.
    let mut tape = Tape::new();
    let ids: Vec<ValueId> = inputs.iter().map(|t| tape.leaf(t.clone())).collect();
    let root = build(&mut tape, &ids);
    let grads = tape.backward(root).expect("scalar root");

    let mut worst = 0.0f64;
    let mut work: Vec<Tensor<T>> = inputs.to_vec();
    for (i, input) in inputs.iter().enumerate() {
        let analytic = grads.get_or_zero(ids[i], input.shape());
        for j in 0..input.numel() {
            let orig = input.data()[j];
            work[i].data_mut()[j] = orig + T::from_f64(step);
            let plus = eval(&work);
            work[i].data_mut()[j] = orig - T::from_f64(step);
            let minus = eval(&work);
            work[i].data_mut()[j] = orig;
            let fd = (plus - minus) / (2.0 * step);
            let ad = analytic.data()[j].to_f64();
            let denom = ad.abs().max(fd.abs()).max(1.0);
            let rel = (ad - fd).abs() / denom;
            if rel > worst {
                worst = rel;
            }
        }
    }
    worst
}
