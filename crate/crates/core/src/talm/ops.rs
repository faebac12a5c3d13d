//! Row-wise numeric kernels with their backward passes.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis, Zip};

pub(crate) const LN_EPS: f64 = 1e-5;

/// Saved state of a row-wise layer norm.
#[derive(Clone, Debug)]
pub(crate) struct LayerNormCache {
    pub xhat: Array2<f64>,
    pub inv_std: Array1<f64>,
}

pub(crate) fn layer_norm(x: &Array2<f64>, gamma: &Array1<f64>, beta: &Array1<f64>) -> (Array2<f64>, LayerNormCache) {
    let d = x.ncols() as f64;
    let mut xhat = x.clone();
    let mut inv_std = Array1::zeros(x.nrows());
    for (mut row, s) in xhat.axis_iter_mut(Axis(0)).zip(inv_std.iter_mut()) {
        let mean = row.sum() / d;
        row.mapv_inplace(|v| v - mean);
        let var = row.iter().map(|v| v * v).sum::<f64>() / d;
        *s = 1.0 / (var + LN_EPS).sqrt();
        let k = *s;
        row.mapv_inplace(|v| v * k);
    }
    let y = &xhat * gamma + beta;
    (y, LayerNormCache { xhat, inv_std })
}

/// Returns dx and accumulates dgamma/dbeta.
pub(crate) fn layer_norm_backward(
    dy: &Array2<f64>,
    cache: &LayerNormCache,
    gamma: &Array1<f64>,
    dgamma: &mut Array1<f64>,
    dbeta: &mut Array1<f64>,
) -> Array2<f64> {
    *dgamma += &(dy * &cache.xhat).sum_axis(Axis(0));
    *dbeta += &dy.sum_axis(Axis(0));
    let d = dy.ncols() as f64;
    let mut dx = dy * gamma;
    for ((mut row, xh), &s) in dx
        .axis_iter_mut(Axis(0))
        .zip(cache.xhat.axis_iter(Axis(0)))
        .zip(cache.inv_std.iter())
    {
        let mean_d = row.sum() / d;
        let mean_dx = row.dot(&xh) / d;
        Zip::from(&mut row).and(&xh).for_each(|g, &h| *g = s * (*g - mean_d - h * mean_dx));
    }
    dx
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2 / pi)
const GELU_A: f64 = 0.044_715;

pub(crate) fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + GELU_A * x * x * x)).tanh())
}

pub(crate) fn gelu_grad(x: f64) -> f64 {
    let t = (GELU_C * (x + GELU_A * x * x * x)).tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * GELU_A * x * x)
}

/// In-place row softmax. `-inf` entries come out as exact zeros.
pub(crate) fn softmax_rows(x: &mut Array2<f64>) {
    for mut row in x.axis_iter_mut(Axis(0)) {
        let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row.mapv_inplace(|v| v / sum);
    }
}

/// Backward of a row softmax: dS = P * (dP - rowsum(dP * P)).
pub(crate) fn softmax_rows_backward(p: ArrayView2<f64>, dp: &Array2<f64>) -> Array2<f64> {
    let mut ds = dp * &p;
    for (mut row, prow) in ds.axis_iter_mut(Axis(0)).zip(p.axis_iter(Axis(0))) {
        let s = row.sum();
        Zip::from(&mut row).and(&prow).for_each(|g, &pv| *g -= pv * s);
    }
    ds
}

/// Natural log of the softmax of one logit row.
pub(crate) fn log_softmax(row: ArrayView1<f64>) -> Array1<f64> {
    let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
    let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
    row.mapv(|v| v - lse)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn gelu_derivative_matches_differences() {
        for &x in &[-3.0, -1.2, -0.1, 0.0, 0.4, 2.5] {
            let h = 1e-6;
            let fd = (gelu(x + h) - gelu(x - h)) / (2.0 * h);
            assert!((fd - gelu_grad(x)).abs() < 1e-8, "{x}");
        }
    }

    #[test]
    fn softmax_masks_to_zero() {
        let mut x = array![[1.0, f64::NEG_INFINITY, 3.0]];
        softmax_rows(&mut x);
        assert_eq!(x[[0, 1]], 0.0);
        assert!((x.sum() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn layer_norm_rows_are_standardized() {
        let x = array![[1.0, 2.0, 3.0, 4.0], [0.5, -0.5, 2.0, 0.0]];
        let (y, _) = layer_norm(&x, &Array1::ones(4), &Array1::zeros(4));
        for row in y.rows() {
            assert!(row.sum().abs() < 1e-12);
            let var = row.iter().map(|v| v * v).sum::<f64>() / 4.0;
            assert!((var - 1.0).abs() < 1e-4);
        }
    }

    #[test]
    fn log_softmax_is_stable() {
        let l = log_softmax(array![1000.0, 0.0].view());
        assert!(l[0].abs() < 1e-12);
        assert!((l[1] + 1000.0).abs() < 1e-9);
    }
}
