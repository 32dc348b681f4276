//! Central finite-difference gradient checking.

use crate::tensor::Tensor;

/// Central differences of `f` with respect to every element of `inputs[slot]`.
pub fn central_difference(
    inputs: &[Tensor],
    slot: usize,
    step: f64,
    f: impl Fn(&[Tensor]) -> f64,
) -> Vec<f64> {
    let indices: Vec<usize> = (0..inputs[slot].len()).collect();
    central_difference_at(inputs, slot, &indices, step, f)
}

/// Central differences with respect to the selected elements of `inputs[slot]`.
pub fn central_difference_at(
    inputs: &[Tensor],
    slot: usize,
    indices: &[usize],
    step: f64,
    f: impl Fn(&[Tensor]) -> f64,
) -> Vec<f64> {
    let mut work = inputs.to_vec();
    indices
        .iter()
        .map(|&i| {
            let orig = work[slot].data()[i];
            work[slot].data_mut()[i] = orig + step;
            let plus = f(&work);
            work[slot].data_mut()[i] = orig - step;
            let minus = f(&work);
            work[slot].data_mut()[i] = orig;
            (plus - minus) / (2.0 * step)
        })
        .collect()
}

/// `‖a − b‖ / max(‖a‖, ‖b‖)`, and 0 when both vectors vanish.
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    let scale = na.max(nb);
    if scale == 0.0 {
        0.0
    } else {
        diff / scale
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn differences_of_a_cubic() {
        let x = Tensor::new(vec![2], vec![1.5, -0.5]).unwrap();
        let g = central_difference(&[x], 0, 1e-5, |t| t[0].data().iter().map(|v| v.powi(3)).sum());
        assert!((g[0] - 3.0 * 1.5f64.powi(2)).abs() < 1e-8);
        assert!((g[1] - 0.75).abs() < 1e-8);
    }

    #[test]
    fn relative_error_edge_cases() {
        assert_eq!(relative_error(&[0.0, 0.0], &[0.0, 0.0]), 0.0);
        assert!((relative_error(&[1.0, 0.0], &[0.0, 0.0]) - 1.0).abs() < 1e-15);
    }
}
