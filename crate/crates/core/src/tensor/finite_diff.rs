//! Central finite differences, the independent oracle for every gradient.

use alloc::vec::Vec;

use super::{Tensor, TensorError, TensorResult};
use crate::math;

/// Central-difference gradient estimate of a scalar-valued function.
///
/// Perturbs every coordinate of `x` by `±h` and returns
/// `(f(x + h e_i) - f(x - h e_i)) / 2h` per coordinate.
pub fn finite_difference_gradient<F>(mut f: F, x: &Tensor, h: f64) -> TensorResult<Tensor>
where
    F: FnMut(&Tensor) -> TensorResult<f64>,
{
    if h <= 0.0 {
        return Err(TensorError::BadArgument {
            op: "finite_difference_gradient",
            msg: alloc::format!("step must be positive, got {h}"),
        });
    }
    let coords: Vec<usize> = (0..x.numel()).collect();
    let grads = probe(&mut f, x, h, &coords)?;
    Tensor::new(x.shape().to_vec(), grads)
}

/// Finite differences on a subset of coordinates; returns `(coord, estimate)`
/// pairs. Used where probing every pixel would be wasteful.
pub fn finite_difference_select<F>(
    mut f: F,
    x: &Tensor,
    h: f64,
    coords: &[usize],
) -> TensorResult<Vec<(usize, f64)>>
where
    F: FnMut(&Tensor) -> TensorResult<f64>,
{
    if h <= 0.0 {
        return Err(TensorError::BadArgument {
            op: "finite_difference_gradient",
            msg: alloc::format!("step must be positive, got {h}"),
        });
    }
    let grads = probe(&mut f, x, h, coords)?;
    Ok(coords.iter().copied().zip(grads).collect())
}

fn probe<F>(f: &mut F, x: &Tensor, h: f64, coords: &[usize]) -> TensorResult<Vec<f64>>
where
    F: FnMut(&Tensor) -> TensorResult<f64>,
{
    let mut point = x.clone();
    let mut out = Vec::with_capacity(coords.len());
    for &i in coords {
        let orig = point.data()[i];
        point.data_mut()[i] = orig + h;
        let plus = f(&point)?;
        point.data_mut()[i] = orig - h;
        let minus = f(&point)?;
        point.data_mut()[i] = orig;
        if !plus.is_finite() || !minus.is_finite() {
            return Err(TensorError::NonFinite {
                op: "finite_difference_gradient",
            });
        }
        out.push((plus - minus) / (2.0 * h));
    }
    Ok(out)
}

/// Max-norm relative error between an analytic gradient and a reference.
///
/// `max_i |a_i - b_i| / max(max_i |b_i|, 1e-8)`; the floor keeps exactly-zero
/// gradients comparable.
pub fn max_rel_err(analytic: &[f64], reference: &[f64]) -> f64 {
    let denom = reference
        .iter()
        .fold(0.0_f64, |m, &v| m.max(math::abs(v)))
        .max(1e-8);
    analytic
        .iter()
        .zip(reference)
        .fold(0.0_f64, |m, (&a, &b)| m.max(math::abs(a - b)))
        / denom
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn quadratic_gradient() {
        // f = sum of squares at [1, 2] -> gradient [2, 4]
        let x = Tensor::from_vec(vec![1.0, 2.0]);
        let g = finite_difference_gradient(
            |t| Ok(t.data().iter().map(|v| v * v).sum()),
            &x,
            1e-5,
        )
        .unwrap();
        assert!((g.data()[0] - 2.0).abs() < 1e-8);
        assert!((g.data()[1] - 4.0).abs() < 1e-8);
    }

    #[test]
    fn constant_function_gives_zero() {
        let x = Tensor::from_vec(vec![0.3, -0.7, 2.0]);
        let g = finite_difference_gradient(|_| Ok(4.25), &x, 1e-5).unwrap();
        assert!(g.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn rejects_bad_step_and_nonfinite() {
        let x = Tensor::from_vec(vec![1.0]);
        assert!(finite_difference_gradient(|_| Ok(0.0), &x, 0.0).is_err());
        let err = finite_difference_gradient(|_| Ok(f64::NAN), &x, 1e-5);
        assert!(matches!(err, Err(TensorError::NonFinite { .. })));
    }

    #[test]
    fn select_probes_only_requested_coords() {
        let x = Tensor::from_vec(vec![1.0, 2.0, 3.0]);
        let got =
            finite_difference_select(|t| Ok(t.data().iter().map(|v| v * v).sum()), &x, 1e-5, &[2])
                .unwrap();
        assert_eq!(got.len(), 1);
        assert_eq!(got[0].0, 2);
        assert!((got[0].1 - 6.0).abs() < 1e-8);
    }
}
