//! Dense least squares through the normal equations. Only used for the
//! handful of regressors a lagged autoregression needs.

use crate::scalar::Real;

/// Solves `A x = b` for symmetric positive-definite `A` (row-major, `p × p`).
/// Returns `None` when `A` is not numerically positive definite.
pub(crate) fn cholesky_solve<T: Real>(a: &[T], b: &[T], p: usize) -> Option<Vec<T>> {
    let mut l = vec![T::zero(); p * p];
    let scale = (0..p).map(|i| a[i * p + i].abs()).fold(T::zero(), T::max);
    let tiny = scale * T::epsilon() * T::count(p) * T::lit(16.0);
    for i in 0..p {
        for j in 0..=i {
            let mut sum = a[i * p + j];
            for k in 0..j {
                sum = sum - l[i * p + k] * l[j * p + k];
            }
            if i == j {
                if !(sum > tiny) {
                    return None;
                }
                l[i * p + i] = sum.sqrt();
            } else {
                l[i * p + j] = sum / l[j * p + j];
            }
        }
    }
    let mut z = vec![T::zero(); p];
    for i in 0..p {
        let mut sum = b[i];
        for k in 0..i {
            sum = sum - l[i * p + k] * z[k];
        }
        z[i] = sum / l[i * p + i];
    }
    let mut x = vec![T::zero(); p];
    for i in (0..p).rev() {
        let mut sum = z[i];
        for k in i + 1..p {
            sum = sum - l[k * p + i] * x[k];
        }
        x[i] = sum / l[i * p + i];
    }
    Some(x)
}

/// Residual sum of squares of regressing `target` on the columns produced by
/// `row(i, buf)` for each observation `i`.
pub(crate) fn regression_rss<T: Real>(
    n: usize,
    p: usize,
    target: impl Fn(usize) -> T,
    row: impl Fn(usize, &mut [T]),
) -> Option<T> {
    let mut xtx = vec![T::zero(); p * p];
    let mut xty = vec![T::zero(); p];
    let mut buf = vec![T::zero(); p];
    for i in 0..n {
        row(i, &mut buf);
        let y = target(i);
        for r in 0..p {
            xty[r] = xty[r] + buf[r] * y;
            for c in 0..=r {
                xtx[r * p + c] = xtx[r * p + c] + buf[r] * buf[c];
            }
        }
    }
    for r in 0..p {
        for c in r + 1..p {
            xtx[r * p + c] = xtx[c * p + r];
        }
    }
    let beta = cholesky_solve(&xtx, &xty, p)?;
    let mut rss = T::zero();
    for i in 0..n {
        row(i, &mut buf);
        let fitted = buf.iter().zip(&beta).fold(T::zero(), |acc, (&x, &b)| acc + x * b);
        let r = target(i) - fitted;
        rss = rss + r * r;
    }
    Some(rss)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_small_system() {
        // [[4,2],[2,3]] x = [2,1] -> x = [0.5, 0]
        let x = cholesky_solve::<f64>(&[4.0, 2.0, 2.0, 3.0], &[2.0, 1.0], 2).unwrap();
        assert!((x[0] - 0.5).abs() < 1e-15 && x[1].abs() < 1e-15);
        assert!(cholesky_solve(&[1.0, 1.0, 1.0, 1.0], &[1.0, 1.0], 2).is_none());
    }

    #[test]
    fn exact_line_has_zero_rss() {
        let xs: Vec<f64> = (0..20).map(f64::from).collect();
        let rss = regression_rss(20, 2, |i| 3.0 + 2.0 * xs[i], |i, b| {
            b[0] = 1.0;
            b[1] = xs[i];
        })
        .unwrap();
        assert!(rss < 1e-20);
    }
}
