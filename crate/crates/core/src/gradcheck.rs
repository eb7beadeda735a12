//! Central finite differences for checking hand-written gradients.

use crate::error::Result;
use crate::tensor::Tensor;

/// `(f(x + h·eᵢ) − f(x − h·eᵢ)) / 2h` for every element `i` of `x`.
pub fn central_difference(x: &Tensor<f64>, h: f64, mut f: impl FnMut(&Tensor<f64>) -> Result<f64>) -> Result<Tensor<f64>> {
    let mut probe = x.clone();
    let mut out = Tensor::zeros(x.shape());
    for i in 0..x.len() {
        let orig = probe.data()[i];
        probe.data_mut()[i] = orig + h;
        let up = f(&probe)?;
        probe.data_mut()[i] = orig - h;
        let down = f(&probe)?;
        probe.data_mut()[i] = orig;
        out.data_mut()[i] = (up - down) / (2.0 * h);
    }
    Ok(out)
}

/// `‖a − b‖ / max(‖a‖, ‖b‖)`, or 0 when both are zero.
pub fn rel_error(a: &Tensor<f64>, b: &Tensor<f64>) -> f64 {
    let diff: f64 = a.data().iter().zip(b.data()).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let na = a.data().iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.data().iter().map(|x| x * x).sum::<f64>().sqrt();
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
    fn cubic() {
        let x = Tensor::new(vec![2], vec![1.0, -2.0]).unwrap();
        let g = central_difference(&x, 1e-5, |t| Ok(t.data().iter().map(|v| v * v * v).sum())).unwrap();
        let want = Tensor::new(vec![2], vec![3.0, 12.0]).unwrap();
        assert!(rel_error(&g, &want) < 1e-9);
    }
}
