//! Constant-rate charging sessions driven by charge-time statistics
//! derived from the EV / non-EV load-difference profile.
//!
//! The pipeline: [`derive_time_stats`] reads mean start/end times off the
//! difference profile, [`ChargeTimeModel`] moment-matches a log-normal or
//! gamma distribution to them, [`sample_session`] draws sessions with a
//! battery-capacity cap, and [`aggregate_method1_profile`] rasterizes a
//! fleet of sessions onto the daily grid.
//!
//! End times live on a 0-48 h axis (04:15 next day is 28.25) so that
//! `start < end` holds without modular arithmetic.

use rand::Rng;
use rayon::prelude::*;

use crate::data::DailyProfile;
use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::rates::TruncExpModel;
use crate::rng::substream;
use crate::scalar::{real, wrap, Real};

const DAY_H: f64 = 24.0;

/// Charge-time statistics read off a load-difference profile.
///
/// `mean_end_h` is on the 0-48 h axis; an end time of 28.25 means 04:15 the
/// next day.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LoadDiffStats<T> {
    pub mean_start_h: T,
    pub std_start_h: T,
    pub mean_end_h: T,
    pub std_end_h: T,
}

impl<T: Real> LoadDiffStats<T> {
    pub fn new(mean_start_h: T, std_start_h: T, mean_end_h: T, std_end_h: T) -> Result<Self> {
        let day = real::<T>(DAY_H);
        if !(mean_start_h >= T::zero() && mean_start_h < day) {
            return Err(Error::InvalidParameter(format!(
                "mean start {mean_start_h} must lie in [0, 24)"
            )));
        }
        if !(mean_end_h > mean_start_h && mean_end_h < mean_start_h + day) {
            return Err(Error::InvalidParameter(format!(
                "mean end {mean_end_h} must lie in (start, start + 24)"
            )));
        }
        if !(std_start_h > T::zero() && std_end_h > T::zero()) {
            return Err(Error::InvalidParameter(
                "standard deviations must be positive".into(),
            ));
        }
        Ok(LoadDiffStats {
            mean_start_h,
            std_start_h,
            mean_end_h,
            std_end_h,
        })
    }
}

/// Locate where the piecewise-linear interpolant through slot midpoints
/// crosses `level`. `upward` selects rising crossings. Returns times in
/// [0, 24), including crossings interpolated across the midnight wrap.
fn level_crossings<T: Real>(values: &[T], grid: TimeGrid, level: T, upward: bool) -> Vec<T> {
    let n = values.len();
    let dt = real::<T>(grid.slot_hours());
    let day = real::<T>(DAY_H);
    let mut out = Vec::new();
    for s in 0..n {
        let v0 = values[s];
        let v1 = values[(s + 1) % n];
        let hit = if upward {
            v0 < level && v1 >= level
        } else {
            v0 >= level && v1 < level
        };
        if hit {
            let frac = (level - v0) / (v1 - v0);
            let t0 = real::<T>(grid.slot_mid_h(s));
            out.push(wrap(t0 + frac * dt, day));
        }
    }
    out
}

/// Times where the profile itself crosses or touches zero.
fn zero_points<T: Real>(values: &[T], grid: TimeGrid) -> Vec<T> {
    let n = values.len();
    let dt = real::<T>(grid.slot_hours());
    let day = real::<T>(DAY_H);
    let mut out = Vec::new();
    for s in 0..n {
        let v0 = values[s];
        let v1 = values[(s + 1) % n];
        let t0 = real::<T>(grid.slot_mid_h(s));
        if v0.is_zero() {
            out.push(t0);
        } else if (v0 < T::zero()) != (v1 <= T::zero()) {
            // strict sign change between midpoints
            let frac = (T::zero() - v0) / (v1 - v0);
            out.push(wrap(t0 + frac * dt, day));
        }
    }
    out
}

fn circular_distance_24<T: Real>(a: T, b: T) -> T {
    let day = real::<T>(DAY_H);
    let d = wrap(a - b, day);
    d.min(day - d)
}

/// Estimate mean start/end charge times and their spreads from a
/// load-difference profile.
///
/// The mean start time is the earliest upward crossing of the profile's own
/// daily mean in the 12:00-24:00 window; the mean end time is the earliest
/// downward crossing in the 00:00-12:00 window, reported on the 0-48 h axis.
/// Each spread is the circular distance from that mean time to the nearest
/// zero of the profile. Crossings are interpolated linearly between slot
/// midpoints.
pub fn derive_time_stats<T: Real>(diff: &DailyProfile<T>) -> Result<LoadDiffStats<T>> {
    let grid = diff.grid();
    let values = diff.values();
    let mean = diff.daily_mean();
    let noon = real::<T>(12.0);
    let day = real::<T>(DAY_H);

    let start = level_crossings(values, grid, mean, true)
        .into_iter()
        .filter(|&t| t >= noon && t < day)
        .fold(None::<T>, |best, t| match best {
            Some(b) if b <= t => Some(b),
            _ => Some(t),
        })
        .ok_or(Error::NoCrossing {
            kind: "upward",
            window: "12:00-24:00",
        })?;

    let end = level_crossings(values, grid, mean, false)
        .into_iter()
        .filter(|&t| t >= T::zero() && t < noon)
        .fold(None::<T>, |best, t| match best {
            Some(b) if b <= t => Some(b),
            _ => Some(t),
        })
        .ok_or(Error::NoCrossing {
            kind: "downward",
            window: "00:00-12:00",
        })?;

    let zeros = zero_points(values, grid);
    if zeros.is_empty() {
        return Err(Error::NoZeroCrossing);
    }
    let nearest = |t: T| {
        zeros
            .iter()
            .map(|&z| circular_distance_24(t, z))
            .fold(T::infinity(), T::min)
    };
    let std_start = nearest(start);
    let std_end = nearest(wrap(end, day));
    if std_start.is_zero() || std_end.is_zero() {
        return Err(Error::DegenerateStats(
            "mean charge time coincides with a zero of the profile".into(),
        ));
    }

    LoadDiffStats::new(start, std_start, end + day, std_end)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TimeModelFamily {
    LogNormal,
    Gamma,
}

impl TimeModelFamily {
    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "lognormal" | "log-normal" => Ok(TimeModelFamily::LogNormal),
            "gamma" => Ok(TimeModelFamily::Gamma),
            other => Err(Error::InvalidParameter(format!(
                "unknown distribution family `{other}` (expected lognormal or gamma)"
            ))),
        }
    }
}

/// Moment-matched charge-time distribution.
///
/// For the log-normal family `p1`/`p2` are the log-space location and scale;
/// for the gamma family they are shape and scale. `axis_offset_h` is added
/// to every draw (zero for clock-time starts and for ends already expressed
/// on the 0-48 h axis).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChargeTimeModel<T> {
    pub family: TimeModelFamily,
    pub p1: T,
    pub p2: T,
    pub axis_offset_h: T,
}

impl<T: Real> ChargeTimeModel<T> {
    /// Log-normal with the given mean and standard deviation:
    /// `s^2 = ln(1 + sigma^2/mu^2)`, `m = ln(mu) - s^2/2`.
    pub fn lognormal(mean: T, std: T) -> Result<Self> {
        if !(mean > T::zero()) || !(std > T::zero()) {
            return Err(Error::InvalidParameter(
                "log-normal moments must be positive".into(),
            ));
        }
        let ratio = std / mean;
        let s2 = (ratio * ratio).ln_1p();
        Ok(ChargeTimeModel {
            family: TimeModelFamily::LogNormal,
            p1: mean.ln() - s2 / real(2.0),
            p2: s2.sqrt(),
            axis_offset_h: T::zero(),
        })
    }

    /// Gamma with the given mean and standard deviation:
    /// `k = mu^2/sigma^2`, `theta = sigma^2/mu`.
    pub fn gamma(mean: T, std: T) -> Result<Self> {
        if !(mean > T::zero()) || !(std > T::zero()) {
            return Err(Error::InvalidParameter(
                "gamma moments must be positive".into(),
            ));
        }
        Ok(ChargeTimeModel {
            family: TimeModelFamily::Gamma,
            p1: (mean / std) * (mean / std),
            p2: std * std / mean,
            axis_offset_h: T::zero(),
        })
    }

    pub fn from_moments(family: TimeModelFamily, mean: T, std: T) -> Result<Self> {
        match family {
            TimeModelFamily::LogNormal => Self::lognormal(mean, std),
            TimeModelFamily::Gamma => Self::gamma(mean, std),
        }
    }

    /// Analytic mean of the fitted distribution (offset included).
    pub fn mean(&self) -> T {
        let core = match self.family {
            TimeModelFamily::LogNormal => (self.p1 + self.p2 * self.p2 / real(2.0)).exp(),
            TimeModelFamily::Gamma => self.p1 * self.p2,
        };
        core + self.axis_offset_h
    }

    /// Analytic standard deviation of the fitted distribution.
    pub fn std(&self) -> T {
        match self.family {
            TimeModelFamily::LogNormal => {
                let s2 = self.p2 * self.p2;
                (self.p1 + s2 / real(2.0)).exp() * s2.exp_m1().sqrt()
            }
            TimeModelFamily::Gamma => self.p1.sqrt() * self.p2,
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> T {
        let draw = match self.family {
            TimeModelFamily::LogNormal => (self.p1 + self.p2 * T::std_normal(rng)).exp(),
            TimeModelFamily::Gamma => T::gamma_sample(rng, self.p1, self.p2),
        };
        self.axis_offset_h + draw
    }
}

/// Session sampling limits.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SessionPolicy<T> {
    /// Battery capacity cap; sessions are truncated once this much energy
    /// has been drawn.
    pub capacity_kwh: T,
    pub max_duration_h: T,
    pub max_resamples: usize,
}

impl<T: Real> Default for SessionPolicy<T> {
    fn default() -> Self {
        SessionPolicy {
            capacity_kwh: real(60.0),
            max_duration_h: real(DAY_H),
            max_resamples: 100,
        }
    }
}

/// One constant-rate charging session. `start_h` is clock time in [0, 24);
/// `end_h` may run past 24 into the next day.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChargingSession<T> {
    pub start_h: T,
    pub end_h: T,
    pub rated_kw: T,
    pub energy_kwh: T,
}

impl<T: Real> ChargingSession<T> {
    pub fn duration_h(&self) -> T {
        self.end_h - self.start_h
    }
}

/// Draw one session: start from `start_model` reduced mod 24, end from
/// `end_model` on the 0-48 h axis, with joint resampling until the duration
/// lands in `(0, max_duration_h]`; the rated power comes from `power_model`
/// and the end time is truncated once `capacity_kwh` would be exceeded.
pub fn sample_session<T: Real, R: Rng + ?Sized>(
    start_model: &ChargeTimeModel<T>,
    end_model: &ChargeTimeModel<T>,
    power_model: &TruncExpModel<T>,
    policy: &SessionPolicy<T>,
    rng: &mut R,
) -> Result<ChargingSession<T>> {
    if !(policy.capacity_kwh > T::zero()) || !(policy.max_duration_h > T::zero()) {
        return Err(Error::InvalidParameter(
            "session policy must have positive capacity and duration caps".into(),
        ));
    }
    let day = real::<T>(DAY_H);
    for _ in 0..policy.max_resamples.max(1) {
        let start = wrap(start_model.sample(rng), day);
        let end = end_model.sample(rng);
        let duration = end - start;
        if !(duration > T::zero() && duration <= policy.max_duration_h) {
            continue;
        }
        let rated_kw = power_model.sample(rng);
        let (end_h, energy_kwh) = if rated_kw * duration > policy.capacity_kwh {
            (start + policy.capacity_kwh / rated_kw, policy.capacity_kwh)
        } else {
            (end, rated_kw * duration)
        };
        return Ok(ChargingSession {
            start_h: start,
            end_h,
            rated_kw,
            energy_kwh,
        });
    }
    Err(Error::ResampleLimit(policy.max_resamples))
}

/// Add a session's demand onto a daily grid, weighting partial slots by
/// overlap and wrapping past midnight onto the same day.
fn rasterize_wrapping<T: Real>(values: &mut [T], grid: TimeGrid, session: &ChargingSession<T>) {
    let spd = grid.slots_per_day();
    let dt = grid.slot_hours();
    let start = session.start_h.to_f64().expect("finite start");
    let end = session.end_h.to_f64().expect("finite end");
    debug_assert!(end > start);
    let first = (start / dt).floor() as usize;
    let last = (end / dt).ceil() as usize;
    for slot in first..last {
        let lo = (slot as f64 * dt).max(start);
        let hi = ((slot + 1) as f64 * dt).min(end);
        if hi > lo {
            let frac = real::<T>((hi - lo) / dt);
            values[slot % spd] += session.rated_kw * frac;
        }
    }
}

/// Sum per-EV session demand over a fleet. The sampler is called once per
/// EV index and the resulting sessions are rasterized onto one shared day.
pub fn aggregate_method1_profile<T, F>(
    n_ev: usize,
    mut sampler: F,
    grid: TimeGrid,
) -> Result<DailyProfile<T>>
where
    T: Real,
    F: FnMut(usize) -> Result<ChargingSession<T>>,
{
    if n_ev == 0 {
        return Err(Error::EmptyInput("fleet size must be at least 1"));
    }
    let mut values = vec![T::zero(); grid.slots_per_day()];
    for ev in 0..n_ev {
        let session = sampler(ev)?;
        rasterize_wrapping(&mut values, grid, &session);
    }
    DailyProfile::new(grid, values)
}

/// A sampled fleet: the aggregate daily profile plus the sessions behind it.
#[derive(Debug, Clone)]
pub struct Method1Fleet<T> {
    pub profile: DailyProfile<T>,
    pub sessions: Vec<ChargingSession<T>>,
}

/// Sample one session per EV in parallel (one deterministic substream per EV
/// index) and aggregate. Output is independent of worker count.
pub fn sample_method1_fleet<T: Real>(
    n_ev: usize,
    start_model: &ChargeTimeModel<T>,
    end_model: &ChargeTimeModel<T>,
    power_model: &TruncExpModel<T>,
    policy: &SessionPolicy<T>,
    grid: TimeGrid,
    master_seed: u64,
) -> Result<Method1Fleet<T>> {
    if n_ev == 0 {
        return Err(Error::EmptyInput("fleet size must be at least 1"));
    }
    let sessions: Vec<ChargingSession<T>> = (0..n_ev)
        .into_par_iter()
        .map(|ev| {
            let mut rng = substream(master_seed, &[ev as u64]);
            sample_session(start_model, end_model, power_model, policy, &mut rng)
        })
        .collect::<Result<_>>()?;
    let mut values = vec![T::zero(); grid.slots_per_day()];
    for session in &sessions {
        rasterize_wrapping(&mut values, grid, session);
    }
    Ok(Method1Fleet {
        profile: DailyProfile::new(grid, values)?,
        sessions,
    })
}
