//! Newton cooling: `T(t) = Te + (T0 - Te) * exp(-k t)`.

use serde::{Deserialize, Serialize};

use crate::error::{MetricsError, Result};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThermalParams<T> {
    /// Device temperature at t = 0, °C.
    pub t0_c: T,
    /// Ambient temperature, °C.
    pub te_c: T,
    /// Cooling-rate constant, 1/s.
    pub k: T,
}

impl<T: Real> ThermalParams<T> {
    pub fn new(t0_c: T, te_c: T, k: T) -> Result<Self> {
        let p = ThermalParams { t0_c, te_c, k };
        p.check()?;
        Ok(p)
    }

    pub fn check(&self) -> Result<()> {
        if !(self.k > T::zero()) || !self.k.is_finite() {
            return Err(MetricsError::arg(format!("cooling constant k must be positive, got {:?}", self.k)));
        }
        if !self.t0_c.is_finite() || !self.te_c.is_finite() {
            return Err(MetricsError::arg("temperatures must be finite"));
        }
        Ok(())
    }

    /// Temperature at `t` without argument checks.
    pub fn temperature_at(&self, t: T) -> T {
        self.te_c + (self.t0_c - self.te_c) * (-self.k * t).exp()
    }
}

pub fn predict_temperature<T: Real>(params: &ThermalParams<T>, t: T) -> Result<T> {
    params.check()?;
    if !(t >= T::zero()) {
        return Err(MetricsError::arg(format!("time must be non-negative, got {t:?}")));
    }
    Ok(params.temperature_at(t))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CoolingFit<T> {
    pub params: ThermalParams<T>,
    /// RMS of predicted minus observed temperature, °C.
    pub rms_residual_c: T,
    /// Whether `te_c` was searched for rather than supplied.
    pub te_estimated: bool,
}

/// Weighted log-linear fit with a fixed ambient temperature.
///
/// Regresses `ln(T - Te)` on `t` with weights `(T - Te)^2`, which is exact on
/// noiseless data and keeps points near ambient from dominating under noise.
fn fit_known_ambient<T: Real>(series: &[(T, T)], te: T) -> Result<CoolingFit<T>> {
    let mut sw = T::zero();
    let mut swt = T::zero();
    let mut swy = T::zero();
    let mut logs = Vec::with_capacity(series.len());
    for (i, &(t, temp)) in series.iter().enumerate() {
        let excess = temp - te;
        if !(excess > T::zero()) {
            return Err(MetricsError::data(format!(
                "point {i} (t={t:?}, T={temp:?}) is not above ambient {te:?}"
            )));
        }
        let w = excess * excess;
        let y = excess.ln();
        sw = sw + w;
        swt = swt + w * t;
        swy = swy + w * y;
        logs.push((t, y, w));
    }
    let t_bar = swt / sw;
    let y_bar = swy / sw;
    let (mut sxy, mut sxx) = (T::zero(), T::zero());
    for &(t, y, w) in &logs {
        let dt = t - t_bar;
        sxy = sxy + w * dt * (y - y_bar);
        sxx = sxx + w * dt * dt;
    }
    if !(sxx > T::zero()) {
        return Err(MetricsError::Unidentifiable("all samples share one timestamp".into()));
    }
    let slope = sxy / sxx;
    let k = -slope;
    if !(k > T::zero()) {
        return Err(MetricsError::Unidentifiable(format!(
            "series does not decay towards ambient {te:?} (fitted k = {k:?})"
        )));
    }
    let intercept = y_bar - slope * t_bar;
    let params = ThermalParams {
        t0_c: te + intercept.exp(),
        te_c: te,
        k,
    };
    Ok(CoolingFit {
        rms_residual_c: rms_residual(&params, series),
        params,
        te_estimated: false,
    })
}

fn rms_residual<T: Real>(params: &ThermalParams<T>, series: &[(T, T)]) -> T {
    let sq = series.iter().fold(T::zero(), |acc, &(t, temp)| {
        let r = params.temperature_at(t) - temp;
        acc + r * r
    });
    (sq / T::count(series.len())).sqrt()
}

/// Width below `min(T)` searched for an unknown ambient temperature, °C.
pub const AMBIENT_SEARCH_WIDTH_C: f64 = 50.0;

/// Fits cooling parameters to `(t, temperature)` observations.
///
/// With `te_known`, `k` and `T0` come from the weighted log-linear fit. Without
/// it, `Te` is chosen in `[min T - 50, min T)` to minimize the RMS residual: a
/// coarse scan brackets the minimum, then golden-section search refines it.
pub fn fit_cooling<T: Real>(series: &[(T, T)], te_known: Option<T>) -> Result<CoolingFit<T>> {
    let needed = if te_known.is_some() { 2 } else { 3 };
    if series.len() < needed {
        return Err(MetricsError::InsufficientData(format!(
            "cooling fit needs at least {needed} points, got {}",
            series.len()
        )));
    }
    if series.iter().any(|(t, v)| !t.is_finite() || !v.is_finite()) {
        return Err(MetricsError::data("cooling series contains non-finite values"));
    }
    let (lo, hi) = series.iter().fold((T::infinity(), T::neg_infinity()), |(lo, hi), &(_, v)| {
        (lo.min(v), hi.max(v))
    });
    if lo == hi {
        return Err(MetricsError::Unidentifiable("temperature series is constant".into()));
    }
    let (t_lo, t_hi) = series.iter().fold((T::infinity(), T::neg_infinity()), |(a, b), &(t, _)| {
        (a.min(t), b.max(t))
    });
    if t_lo == t_hi {
        return Err(MetricsError::Unidentifiable("all samples share one timestamp".into()));
    }
    if let Some(te) = te_known {
        return fit_known_ambient(series, te);
    }

    let objective = |te: T| {
        fit_known_ambient(series, te)
            .map(|f| f.rms_residual_c)
            .unwrap_or_else(|_| T::infinity())
    };
    let gap = T::lit(1e-9) * lo.abs().max(T::one());
    let lower = lo - T::lit(AMBIENT_SEARCH_WIDTH_C);
    let upper = lo - gap;

    const SCAN: usize = 64;
    let step = (upper - lower) / T::count(SCAN);
    let grid: Vec<T> = (0..=SCAN).map(|i| lower + step * T::count(i)).collect();
    let best = (0..=SCAN)
        .map(|i| (i, objective(grid[i])))
        .fold((0, T::infinity()), |acc, (i, v)| if v < acc.1 { (i, v) } else { acc });
    if !best.1.is_finite() {
        return Err(MetricsError::Unidentifiable(
            "no ambient temperature candidate yields a decaying fit".into(),
        ));
    }
    let mut a = grid[best.0.saturating_sub(1)];
    let mut b = grid[(best.0 + 1).min(SCAN)];

    let inv_phi = T::lit((5f64.sqrt() - 1.0) / 2.0);
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (objective(c), objective(d));
    for _ in 0..200 {
        if (b - a).abs() <= T::epsilon() * T::lit(4.0) * (a.abs() + b.abs()).max(T::one()) {
            break;
        }
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = objective(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = objective(d);
        }
    }
    let candidates = [grid[best.0], c, d, (a + b) / T::lit(2.0)];
    let te = candidates
        .into_iter()
        .fold((grid[best.0], best.1), |acc, te| {
            let v = objective(te);
            if v < acc.1 {
                (te, v)
            } else {
                acc
            }
        })
        .0;
    let mut fit = fit_known_ambient(series, te)?;
    fit.te_estimated = true;
    Ok(fit)
}
