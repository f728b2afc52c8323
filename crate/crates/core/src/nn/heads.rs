//! Loss heads with hand-derived gradients.

use std::f64::consts::PI;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis, Zip};

use crate::error::{Error, Result};

/// `(1/n) sum_i |pred_i - target_i|^2` and its gradient with respect to `pred`.
pub fn squared_error(pred: ArrayView2<f64>, target: ArrayView2<f64>) -> Result<(f64, Array2<f64>)> {
    if pred.dim() != target.dim() {
        return Err(Error::shape(
            "squared error",
            format!("{:?}", pred.dim()),
            format!("{:?}", target.dim()),
        ));
    }
    let n = pred.nrows().max(1) as f64;
    let diff = &pred - &target;
    let loss = diff.iter().map(|d| d * d).sum::<f64>() / n;
    let grad = diff * (2.0 / n);
    Ok((loss, grad))
}

/// Log density of a diagonal Gaussian, one value per row.
pub fn gaussian_log_prob(
    mean: ArrayView2<f64>,
    log_std: ArrayView1<f64>,
    x: ArrayView2<f64>,
) -> Array1<f64> {
    let dim = log_std.len() as f64;
    let log_norm = -0.5 * dim * (2.0 * PI).ln() - log_std.sum();
    let inv_var = log_std.mapv(|l| (-2.0 * l).exp());
    let mut out = Array1::from_elem(mean.nrows(), log_norm);
    Zip::from(&mut out)
        .and(mean.rows())
        .and(x.rows())
        .for_each(|o, m, xi| {
            let mut q = 0.0;
            for d in 0..m.len() {
                let z = xi[d] - m[d];
                q += z * z * inv_var[d];
            }
            *o -= 0.5 * q;
        });
    out
}

/// Mean negative log-likelihood of `x` under `N(mean, diag(exp(2 log_std)))`,
/// with gradients with respect to `mean` (per row) and `log_std`.
pub fn gaussian_nll(
    mean: ArrayView2<f64>,
    log_std: ArrayView1<f64>,
    x: ArrayView2<f64>,
) -> Result<(f64, Array2<f64>, Array1<f64>)> {
    if mean.dim() != x.dim() || mean.ncols() != log_std.len() {
        return Err(Error::shape(
            "gaussian nll",
            format!("{:?} with {} log-std entries", mean.dim(), mean.ncols()),
            format!("{:?} with {} log-std entries", x.dim(), log_std.len()),
        ));
    }
    let n = mean.nrows().max(1) as f64;
    let loss = -gaussian_log_prob(mean, log_std, x).sum() / n;
    let inv_var = log_std.mapv(|l| (-2.0 * l).exp());
    // d(-log p)/d mean = -(x - mean) / var
    let mut grad_mean = &mean - &x;
    for mut row in grad_mean.rows_mut() {
        row *= &inv_var;
    }
    grad_mean /= n;
    // d(-log p)/d log_std = 1 - (x - mean)^2 / var
    let sq = (&x - &mean).mapv(|z| z * z);
    let mean_sq = sq.sum_axis(Axis(0)) / n;
    let grad_log_std = Zip::from(&mean_sq)
        .and(&inv_var)
        .map_collect(|s, iv| 1.0 - s * iv);
    Ok((loss, grad_mean, grad_log_std))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn squared_error_definition() {
        let p = array![[1.0, 2.0], [0.0, 0.0]];
        let t = array![[1.0, 0.0], [3.0, 4.0]];
        let (loss, grad) = squared_error(p.view(), t.view()).unwrap();
        assert_eq!(loss, (4.0 + 25.0) / 2.0);
        assert_eq!(grad, array![[0.0, 2.0], [-3.0, -4.0]]);
    }

    #[test]
    fn log_prob_at_mean_unit_std() {
        let lp = gaussian_log_prob(
            array![[0.3, -1.0]].view(),
            array![0.0, 0.0].view(),
            array![[0.3, -1.0]].view(),
        );
        assert!((lp[0] + (2.0 * PI).ln()).abs() < 1e-15);
    }

    #[test]
    fn nll_shape_mismatch() {
        assert!(gaussian_nll(
            array![[0.0, 0.0]].view(),
            array![0.0].view(),
            array![[0.0, 0.0]].view()
        )
        .is_err());
    }
}
