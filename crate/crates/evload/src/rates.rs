//! Average meter-power recovery from fuse peak data, and the rated-power
//! distribution used to draw per-charger power levels.
//!
//! The estimation problem: each line fuse `n` serves `a_n` non-EV meters and
//! `b_n` EV meters and records a peak demand `P_n`. With `X` and `Y` the
//! average non-EV and EV meter powers, `a_n X + b_n Y ≈ P_n`, and the
//! weighted least-squares estimate minimizes
//! `J = Σ (P_n - a_n X - b_n Y)² / σ_n²`.

use rand::Rng;

use crate::data::LineFuseRecord;
use crate::error::{Error, Result};
use crate::scalar::{real, Real};

/// Maximum condition number accepted for the 2x2 normal matrix.
const CONDITION_LIMIT: f64 = 1e12;

/// A collection of fuse records forming an (over)determined two-variable
/// estimation problem.
#[derive(Debug, Clone)]
pub struct WlsProblem<T> {
    records: Vec<LineFuseRecord<T>>,
}

impl<T: Real> WlsProblem<T> {
    /// Requires at least two records whose meter-count vectors are not
    /// proportional, otherwise the two averages cannot be separated.
    pub fn new(records: Vec<LineFuseRecord<T>>) -> Result<Self> {
        if records.len() < 2 {
            return Err(Error::TooFewRecords {
                need: 2,
                got: records.len(),
            });
        }
        let independent = records.iter().enumerate().any(|(i, r)| {
            records[i + 1..]
                .iter()
                .any(|s| u64::from(r.n_nonev) * u64::from(s.n_ev) != u64::from(s.n_nonev) * u64::from(r.n_ev))
        });
        if !independent {
            return Err(Error::IllConditioned { cond: f64::INFINITY });
        }
        Ok(WlsProblem { records })
    }

    pub fn records(&self) -> &[LineFuseRecord<T>] {
        &self.records
    }
}

/// Estimated average powers, in kW.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateEstimate<T> {
    /// Average non-EV meter peak power.
    pub x_nonev_kw: T,
    /// Average EV meter peak power.
    pub y_ev_kw: T,
    /// Average charging power, `y_ev_kw - x_nonev_kw`.
    pub ev_charging_kw: T,
    /// Weighted sum of squared residuals at the optimum.
    pub objective: T,
}

/// Solve the two-variable weighted least-squares problem through its normal
/// equations, by direct 2x2 elimination with a condition-number guard.
pub fn solve_wls<T: Real>(problem: &WlsProblem<T>) -> Result<RateEstimate<T>> {
    let mut sxx = T::zero();
    let mut sxy = T::zero();
    let mut syy = T::zero();
    let mut bx = T::zero();
    let mut by = T::zero();
    for r in problem.records() {
        let a = real::<T>(f64::from(r.n_nonev));
        let b = real::<T>(f64::from(r.n_ev));
        let w = (r.sigma * r.sigma).recip();
        sxx += w * a * a;
        sxy += w * a * b;
        syy += w * b * b;
        bx += w * a * r.peak_kw;
        by += w * b * r.peak_kw;
    }

    // Symmetric 2x2 eigenvalues give the condition number directly.
    let tr = sxx + syy;
    let det = sxx * syy - sxy * sxy;
    let gap = ((sxx - syy) * (sxx - syy) + real::<T>(4.0) * sxy * sxy).sqrt();
    let two = real::<T>(2.0);
    let lo = (tr - gap) / two;
    let hi = (tr + gap) / two;
    let cond = (hi / lo).to_f64().unwrap_or(f64::INFINITY);
    if !(lo > T::zero()) || !(det > T::zero()) || cond > CONDITION_LIMIT {
        return Err(Error::IllConditioned { cond });
    }

    // Gaussian elimination with the larger pivot in the first column.
    let (x, y) = if sxx.abs() >= sxy.abs() {
        let m = sxy / sxx;
        let y = (by - m * bx) / (syy - m * sxy);
        let x = (bx - sxy * y) / sxx;
        (x, y)
    } else {
        let m = sxx / sxy;
        let y = (bx - m * by) / (sxy - m * syy);
        let x = (by - syy * y) / sxy;
        (x, y)
    };

    let mut objective = T::zero();
    for r in problem.records() {
        let a = real::<T>(f64::from(r.n_nonev));
        let b = real::<T>(f64::from(r.n_ev));
        let resid = r.peak_kw - (a * x + b * y);
        objective += resid * resid / (r.sigma * r.sigma);
    }

    Ok(RateEstimate {
        x_nonev_kw: x,
        y_ev_kw: y,
        ev_charging_kw: y - x,
        objective,
    })
}

/// Exponential density restricted to `[lower_kw, upper_kw]`, parameterized by
/// its bounds and target mean. The signed rate is solved so the analytic mean
/// hits `mean_kw`; a rate of zero encodes the uniform (midpoint-mean) case,
/// positive rates put more mass near the lower bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruncExpModel<T> {
    lower_kw: T,
    upper_kw: T,
    mean_kw: T,
    rate: T,
}

/// Relative mean position as a function of `t = rate * width`:
/// `g(t) = 1/t - 1/(e^t - 1)`, continued with `g(0) = 1/2`.
/// Decreases monotonically from 1 (t -> -inf) to 0 (t -> +inf).
fn mean_fraction<T: Real>(t: T) -> T {
    if t.abs() < real(1e-3) {
        // series around 0 avoids cancellation between the two huge terms
        let half = real::<T>(0.5);
        let t2 = t * t;
        half - t / real(12.0) + t * t2 / real(720.0)
    } else {
        t.recip() - t.exp_m1().recip()
    }
}

impl<T: Real> TruncExpModel<T> {
    /// Solve the signed rate by bisection so the analytic mean matches
    /// `mean_kw`. The bracket `[1e-9, 64/(upper-lower)]` on the absolute
    /// rate covers any practical skew; 200 iterations cap the search.
    pub fn fit(lower_kw: T, upper_kw: T, mean_kw: T) -> Result<Self> {
        if !(lower_kw < upper_kw) {
            return Err(Error::InvalidParameter(format!(
                "lower bound {lower_kw} must be below upper bound {upper_kw}"
            )));
        }
        if !(lower_kw < mean_kw && mean_kw < upper_kw) {
            return Err(Error::InvalidParameter(format!(
                "mean {mean_kw} must lie strictly inside ({lower_kw}, {upper_kw})"
            )));
        }
        let width = upper_kw - lower_kw;
        let midpoint = lower_kw + width / real(2.0);
        if (mean_kw - midpoint).abs() < real(1e-9) {
            return Ok(TruncExpModel {
                lower_kw,
                upper_kw,
                mean_kw,
                rate: T::zero(),
            });
        }

        // Positive rates pull the mean below the midpoint; solve on the
        // magnitude and restore the sign.
        let sign = if mean_kw < midpoint { T::one() } else { -T::one() };
        let target = if mean_kw < midpoint {
            mean_kw
        } else {
            // mirror symmetry: mean(-rate) = lower + upper - mean(rate)
            lower_kw + upper_kw - mean_kw
        };

        let mean_at = |rate: T| lower_kw + width * mean_fraction(rate * width);
        let mut lo = real::<T>(1e-9);
        let mut hi = real::<T>(64.0) / width;
        for _ in 0..200 {
            let mid = (lo + hi) / real(2.0);
            if mean_at(mid) > target {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= T::epsilon() * hi {
                break;
            }
        }
        let rate = sign * (lo + hi) / real(2.0);

        let model = TruncExpModel {
            lower_kw,
            upper_kw,
            mean_kw,
            rate,
        };
        // 1e-6 kW is attainable in f64; degrade gracefully in f32
        let tol = real::<T>(1e-6).max(T::epsilon() * real(64.0) * width);
        let residual = (model.analytic_mean() - mean_kw).abs();
        if residual > tol {
            return Err(Error::NoConvergence {
                residual: residual.to_f64().unwrap_or(f64::NAN),
            });
        }
        Ok(model)
    }

    pub fn lower_kw(&self) -> T {
        self.lower_kw
    }

    pub fn upper_kw(&self) -> T {
        self.upper_kw
    }

    pub fn mean_kw(&self) -> T {
        self.mean_kw
    }

    /// Signed rate; zero encodes the uniform case.
    pub fn rate(&self) -> T {
        self.rate
    }

    /// Mean implied by the stored rate (not the stored target).
    pub fn analytic_mean(&self) -> T {
        let width = self.upper_kw - self.lower_kw;
        self.lower_kw + width * mean_fraction(self.rate * width)
    }

    pub fn pdf(&self, x: T) -> T {
        if x < self.lower_kw || x > self.upper_kw {
            return T::zero();
        }
        let width = self.upper_kw - self.lower_kw;
        if self.rate.is_zero() {
            return width.recip();
        }
        let z = -(self.rate * width);
        // normalizer 1 - e^(-rate*width) = -expm1(-rate*width)
        self.rate * (-(self.rate * (x - self.lower_kw))).exp() / (-z.exp_m1())
    }

    pub fn cdf(&self, x: T) -> T {
        if x <= self.lower_kw {
            return T::zero();
        }
        if x >= self.upper_kw {
            return T::one();
        }
        let width = self.upper_kw - self.lower_kw;
        if self.rate.is_zero() {
            return (x - self.lower_kw) / width;
        }
        let num = -(-(self.rate * (x - self.lower_kw))).exp_m1();
        let den = -(-(self.rate * width)).exp_m1();
        num / den
    }

    /// Inverse-CDF draw; always lands inside `[lower_kw, upper_kw]`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> T {
        let u = rng.random_range(T::zero()..T::one());
        if self.rate.is_zero() {
            return self.lower_kw + u * (self.upper_kw - self.lower_kw);
        }
        let width = self.upper_kw - self.lower_kw;
        let x = self.lower_kw - (u * (-(self.rate * width)).exp_m1()).ln_1p() / self.rate;
        x.min(self.upper_kw).max(self.lower_kw)
    }
}
