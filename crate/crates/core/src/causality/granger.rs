use crate::error::{MetricsError, Result};
use crate::scalar::Real;

use super::lstsq::regression_rss;

/// Share of `y`'s one-step prediction error removed by adding `x`'s history.
///
/// Fits `y_t` on an intercept and `y_{t-1..t-lag}` (restricted) and on the
/// same plus `x_{t-1..t-lag}` (full), both over `t = lag..n`, and returns
/// `max(0, 1 - RSS_full / RSS_restricted)`, kept strictly below 1.
pub fn granger_influence<T: Real>(x: &[T], y: &[T], lag: usize) -> Result<T> {
    if lag == 0 {
        return Err(MetricsError::arg("lag must be at least 1"));
    }
    if x.len() != y.len() {
        return Err(MetricsError::arg(format!(
            "series lengths differ ({} vs {})",
            x.len(),
            y.len()
        )));
    }
    let n = x.len();
    if n < 10 * lag {
        return Err(MetricsError::InsufficientData(format!(
            "{n} points is fewer than 10 x lag ({})",
            10 * lag
        )));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(MetricsError::data("series contains non-finite values"));
    }
    let centered = |s: &[T], name: &str| -> Result<Vec<T>> {
        let mean = s.iter().fold(T::zero(), |a, &v| a + v) / T::count(s.len());
        if s.iter().all(|&v| v == s[0]) {
            return Err(MetricsError::data(format!("series {name} has zero variance")));
        }
        Ok(s.iter().map(|&v| v - mean).collect())
    };
    let x = centered(x, "x")?;
    let y = centered(y, "y")?;

    let rows = n - lag;
    let target = |i: usize| y[i + lag];
    let restricted = regression_rss(rows, 1 + lag, target, |i, b| {
        let t = i + lag;
        b[0] = T::one();
        for l in 1..=lag {
            b[l] = y[t - l];
        }
    });
    let full = regression_rss(rows, 1 + 2 * lag, target, |i, b| {
        let t = i + lag;
        b[0] = T::one();
        for l in 1..=lag {
            b[l] = y[t - l];
            b[lag + l] = x[t - l];
        }
    });
    let (Some(rss_r), Some(rss_f)) = (restricted, full) else {
        return Err(MetricsError::data("lagged regressors are collinear"));
    };
    if !(rss_r > T::zero()) {
        // y is perfectly predicted from its own past; x cannot add anything
        return Ok(T::zero());
    }
    let influence = (T::one() - rss_f / rss_r).max(T::zero());
    Ok(influence.min(T::one() - T::epsilon()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn white(seed: u64, n: usize, std: f64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = Normal::new(0.0, std).unwrap();
        (0..n).map(|_| d.sample(&mut rng)).collect()
    }

    #[test]
    fn independent_noise_has_little_influence() {
        let x = white(1, 2000, 1.0);
        let y = white(2, 2000, 1.0);
        assert!(granger_influence(&x, &y, 2).unwrap() <= 0.05);
        assert!(granger_influence(&y, &x, 2).unwrap() <= 0.05);
    }

    #[test]
    fn planted_lag_one_edge_is_found() {
        let x = white(3, 2000, 1.0);
        let eps = white(4, 2000, 0.1);
        let mut y = vec![eps[0]];
        y.extend((1..2000).map(|t| 0.9 * x[t - 1] + eps[t]));
        assert!(granger_influence(&x, &y, 2).unwrap() >= 0.5);
        assert!(granger_influence(&y, &x, 2).unwrap() <= 0.1);
    }

    #[test]
    fn exact_dependence_stays_below_one() {
        let x = white(5, 200, 1.0);
        let mut y = vec![0.0];
        y.extend((1..200).map(|t| x[t - 1]));
        let v = granger_influence(&x, &y, 1).unwrap();
        assert!(v < 1.0 && v > 0.999);
    }

    #[test]
    fn precondition_errors() {
        let x = white(6, 100, 1.0);
        let flat = vec![1.0; 100];
        assert!(matches!(granger_influence(&flat, &x, 2), Err(MetricsError::Data(_))));
        assert!(matches!(granger_influence(&x, &flat, 2), Err(MetricsError::Data(_))));
        assert!(matches!(granger_influence(&x[..15], &x[..15], 2), Err(MetricsError::InsufficientData(_))));
        assert!(granger_influence(&x, &x[..50], 2).unwrap_err().is_argument_error());
        assert!(granger_influence(&x, &x, 0).unwrap_err().is_argument_error());
    }

    #[test]
    fn works_in_single_precision() {
        let x: Vec<f32> = white(7, 500, 1.0).into_iter().map(|v| v as f32).collect();
        let eps: Vec<f32> = white(8, 500, 0.1).into_iter().map(|v| v as f32).collect();
        let mut y = vec![eps[0]];
        y.extend((1..500).map(|t| 0.9 * x[t - 1] + eps[t]));
        assert!(granger_influence(&x, &y, 1).unwrap() > 0.9);
    }

    #[test]
    fn null_bias_bound() {
        let (n, lag) = (400, 2);
        let mean: f64 = (0..100)
            .map(|s| granger_influence(&white(1000 + s, n, 1.0), &white(5000 + s, n, 1.0), lag).unwrap())
            .sum::<f64>()
            / 100.0;
        assert!(mean <= 2.0 * lag as f64 / n as f64 + 0.02, "mean null influence {mean}");
    }
}
