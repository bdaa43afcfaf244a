//! Finite-difference derivatives of vector fields.

use crate::linalg::Matrix;

/// Forward-difference Jacobian with step `max(1e-7, 1e-7·|x_j|)`.
pub fn forward_jacobian<F>(f: F, x: &[f64]) -> Matrix
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    let n = x.len();
    let f0 = f(x);
    let mut jac = Matrix::zeros(n);
    let mut xp = x.to_vec();
    for j in 0..n {
        let h = f64::max(1e-7, 1e-7 * x[j].abs());
        xp[j] = x[j] + h;
        // Use the representable step actually taken.
        let h = xp[j] - x[j];
        let fp = f(&xp);
        for i in 0..n {
            jac[(i, j)] = (fp[i] - f0[i]) / h;
        }
        xp[j] = x[j];
    }
    jac
}

/// Step used for coordinate `x`: `rel · max(1, |x|)`.
pub fn central_step(rel: f64, x: f64) -> f64 {
    rel * x.abs().max(1.0)
}

/// Second partial derivatives `∂²f_k/∂x_i∂x_j`, indexed `[k][(i, j)]`.
///
/// Central differences with steps `rel·max(1, |x|)`, refined once by
/// Richardson extrapolation against half steps.
pub fn second_partials<F>(f: F, x: &[f64], rel: f64) -> Vec<Matrix>
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    let n = x.len();
    let coarse = raw_second_partials(&f, x, rel);
    let fine = raw_second_partials(&f, x, rel / 2.0);
    (0..n)
        .map(|k| Matrix::from_fn(n, |i, j| (4.0 * fine[k][(i, j)] - coarse[k][(i, j)]) / 3.0))
        .collect()
}

fn raw_second_partials<F>(f: &F, x: &[f64], rel: f64) -> Vec<Matrix>
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    let n = x.len();
    let mut out = vec![Matrix::zeros(n); n];
    let eval = |di: (usize, f64), dj: (usize, f64)| {
        let mut xp = x.to_vec();
        xp[di.0] += di.1;
        xp[dj.0] += dj.1;
        f(&xp)
    };
    let f0 = f(x);
    for i in 0..n {
        let hi = central_step(rel, x[i]);
        for j in i..n {
            let hj = central_step(rel, x[j]);
            let values: Vec<f64> = if i == j {
                let fp = eval((i, hi), (i, 0.0));
                let fm = eval((i, -hi), (i, 0.0));
                (0..n).map(|k| (fp[k] - 2.0 * f0[k] + fm[k]) / (hi * hi)).collect()
            } else {
                let fpp = eval((i, hi), (j, hj));
                let fpm = eval((i, hi), (j, -hj));
                let fmp = eval((i, -hi), (j, hj));
                let fmm = eval((i, -hi), (j, -hj));
                (0..n).map(|k| (fpp[k] - fpm[k] - fmp[k] + fmm[k]) / (4.0 * hi * hj)).collect()
            };
            for k in 0..n {
                out[k][(i, j)] = values[k];
                out[k][(j, i)] = values[k];
            }
        }
    }
    out
}

/// Mixed partials `∂²f_k/∂x_i∂p` with respect to a scalar parameter,
/// indexed `[k][i]`; central differences plus one Richardson pass.
pub fn parameter_partials<F>(f: F, x: &[f64], p: f64, rel: f64) -> Vec<Vec<f64>>
where
    F: Fn(&[f64], f64) -> Vec<f64>,
{
    let raw = |rel: f64| {
        let n = x.len();
        let hp = central_step(rel, p);
        let mut out = vec![vec![0.0; n]; n];
        for i in 0..n {
            let hi = central_step(rel, x[i]);
            let mut xp = x.to_vec();
            let mut xm = x.to_vec();
            xp[i] += hi;
            xm[i] -= hi;
            let (fpp, fpm) = (f(&xp, p + hp), f(&xp, p - hp));
            let (fmp, fmm) = (f(&xm, p + hp), f(&xm, p - hp));
            for k in 0..n {
                out[k][i] = (fpp[k] - fpm[k] - fmp[k] + fmm[k]) / (4.0 * hi * hp);
            }
        }
        out
    };
    let coarse = raw(rel);
    let fine = raw(rel / 2.0);
    coarse
        .iter()
        .zip(&fine)
        .map(|(c, f)| c.iter().zip(f).map(|(c, f)| (4.0 * f - c) / 3.0).collect())
        .collect()
}
