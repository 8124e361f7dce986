//! Meter series, daily profiles, and line-fuse records.

use chrono::NaiveDate;

use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::scalar::{real, Real};

/// One meter's interval readings in kW, covering a whole number of days.
///
/// Readings are the average demand over each slot; the energy drawn during a
/// slot is `kw * slot_hours`. Immutable after construction.
#[derive(Debug, Clone, PartialEq)]
pub struct MeterSeries<T> {
    meter_id: String,
    is_ev: bool,
    start_date: NaiveDate,
    grid: TimeGrid,
    readings: Vec<T>,
}

impl<T: Real> MeterSeries<T> {
    pub fn new(
        meter_id: impl Into<String>,
        is_ev: bool,
        start_date: NaiveDate,
        grid: TimeGrid,
        readings: Vec<T>,
    ) -> Result<Self> {
        let meter_id = meter_id.into();
        let spd = grid.slots_per_day();
        if readings.is_empty() || readings.len() % spd != 0 {
            return Err(Error::BadSeries {
                meter_id,
                msg: format!(
                    "length {} is not a positive multiple of {spd} slots per day",
                    readings.len()
                ),
            });
        }
        if let Some(i) = readings.iter().position(|r| !r.is_finite() || *r < T::zero()) {
            return Err(Error::BadSeries {
                meter_id,
                msg: format!("reading at slot {i} is negative or not finite"),
            });
        }
        Ok(MeterSeries {
            meter_id,
            is_ev,
            start_date,
            grid,
            readings,
        })
    }

    pub fn meter_id(&self) -> &str {
        &self.meter_id
    }

    pub fn is_ev(&self) -> bool {
        self.is_ev
    }

    pub fn start_date(&self) -> NaiveDate {
        self.start_date
    }

    pub fn grid(&self) -> TimeGrid {
        self.grid
    }

    pub fn readings(&self) -> &[T] {
        &self.readings
    }

    pub fn days(&self) -> usize {
        self.readings.len() / self.grid.slots_per_day()
    }
}

/// Per-fuse meter counts and the recorded peak demand downstream of the fuse.
#[derive(Debug, Clone, PartialEq)]
pub struct LineFuseRecord<T> {
    pub fuse_id: String,
    /// Number of meters without a registered EV charger.
    pub n_nonev: u32,
    /// Number of meters with a registered EV charger.
    pub n_ev: u32,
    pub peak_kw: T,
    /// Weight for the peak measurement; larger values down-weight the fuse.
    pub sigma: T,
}

impl<T: Real> LineFuseRecord<T> {
    pub fn new(
        fuse_id: impl Into<String>,
        n_nonev: u32,
        n_ev: u32,
        peak_kw: T,
        sigma: T,
    ) -> Result<Self> {
        if n_nonev + n_ev == 0 {
            return Err(Error::InvalidParameter(
                "fuse must serve at least one meter".into(),
            ));
        }
        if !(peak_kw > T::zero()) || !peak_kw.is_finite() {
            return Err(Error::InvalidParameter("peak_kw must be positive".into()));
        }
        if !(sigma > T::zero()) || !sigma.is_finite() {
            return Err(Error::InvalidParameter("sigma must be positive".into()));
        }
        Ok(LineFuseRecord {
            fuse_id: fuse_id.into(),
            n_nonev,
            n_ev,
            peak_kw,
            sigma,
        })
    }
}

/// Average daily curve on a [`TimeGrid`].
///
/// Difference profiles may hold negative values; plain load profiles are
/// nonnegative by construction of their inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct DailyProfile<T> {
    grid: TimeGrid,
    values: Vec<T>,
}

impl<T: Real> DailyProfile<T> {
    pub fn new(grid: TimeGrid, values: Vec<T>) -> Result<Self> {
        if values.len() != grid.slots_per_day() {
            return Err(Error::LengthMismatch(values.len(), grid.slots_per_day()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter(
                "profile values must be finite".into(),
            ));
        }
        Ok(DailyProfile { grid, values })
    }

    pub fn zero(grid: TimeGrid) -> Self {
        DailyProfile {
            grid,
            values: vec![T::zero(); grid.slots_per_day()],
        }
    }

    pub fn grid(&self) -> TimeGrid {
        self.grid
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn daily_mean(&self) -> T {
        crate::stats::mean(&self.values)
    }

    /// Total energy under the curve over one day, in kWh.
    pub fn energy_kwh(&self) -> T {
        self.values.iter().copied().sum::<T>() * real(self.grid.slot_hours())
    }
}

/// Per-slot mean over all meters and all days.
pub fn average_daily_profile<T: Real>(series: &[MeterSeries<T>]) -> Result<DailyProfile<T>> {
    let first = series.first().ok_or(Error::EmptyInput("meter series"))?;
    let grid = first.grid();
    if series.iter().any(|s| s.grid() != grid) {
        return Err(Error::GridMismatch);
    }
    let spd = grid.slots_per_day();
    let mut sums = vec![T::zero(); spd];
    let mut total_days = 0usize;
    for s in series {
        for day in s.readings().chunks_exact(spd) {
            for (slot, &v) in day.iter().enumerate() {
                sums[slot] += v;
            }
        }
        total_days += s.days();
    }
    let denom = real::<T>(total_days as f64);
    let values = sums.into_iter().map(|v| v / denom).collect();
    DailyProfile::new(grid, values)
}

/// Per-slot `ev - nonev`; the result may be negative.
pub fn profile_difference<T: Real>(
    ev: &DailyProfile<T>,
    nonev: &DailyProfile<T>,
) -> Result<DailyProfile<T>> {
    if ev.grid() != nonev.grid() {
        return Err(Error::GridMismatch);
    }
    let values = ev
        .values()
        .iter()
        .zip(nonev.values())
        .map(|(&a, &b)| a - b)
        .collect();
    DailyProfile::new(ev.grid(), values)
}
