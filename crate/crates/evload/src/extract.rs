//! Charging-load isolation from EV meter series: baseline construction,
//! range normalization, valley alignment, subtraction with amplitude
//! restoration, and event segmentation.

use crate::data::MeterSeries;
use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::scalar::{real, Real};
use crate::stats::quantile;

/// Normalized non-EV consumption pattern: per-slot mean across meters,
/// min-max scaled to [0, 1]. The anchors record the pre-normalization range.
#[derive(Debug, Clone, PartialEq)]
pub struct BaselineCurve<T> {
    grid: TimeGrid,
    values: Vec<T>,
    source_min_kw: T,
    source_max_kw: T,
}

impl<T: Real> BaselineCurve<T> {
    pub fn grid(&self) -> TimeGrid {
        self.grid
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn source_min_kw(&self) -> T {
        self.source_min_kw
    }

    pub fn source_max_kw(&self) -> T {
        self.source_max_kw
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

fn min_max<T: Real>(values: &[T]) -> (T, T) {
    values.iter().fold((T::infinity(), T::neg_infinity()), |(lo, hi), &v| {
        (lo.min(v), hi.max(v))
    })
}

/// Average the non-EV meters slot by slot and normalize the result to [0, 1].
pub fn build_baseline<T: Real>(nonev: &[MeterSeries<T>]) -> Result<BaselineCurve<T>> {
    let first = nonev.first().ok_or(Error::EmptyInput("non-EV meter series"))?;
    let grid = first.grid();
    let len = first.readings().len();
    for s in nonev {
        if s.grid() != grid {
            return Err(Error::GridMismatch);
        }
        if s.readings().len() != len {
            return Err(Error::LengthMismatch(s.readings().len(), len));
        }
    }
    let denom = real::<T>(nonev.len() as f64);
    let mean: Vec<T> = (0..len)
        .map(|i| nonev.iter().map(|s| s.readings()[i]).sum::<T>() / denom)
        .collect();
    let (lo, hi) = min_max(&mean);
    if !(hi > lo) {
        return Err(Error::ZeroRange);
    }
    let range = hi - lo;
    let values = mean.into_iter().map(|v| (v - lo) / range).collect();
    Ok(BaselineCurve {
        grid,
        values,
        source_min_kw: lo,
        source_max_kw: hi,
    })
}

/// Range and offset of the EV series in kW, recorded for exact inversion of
/// the normalization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScaleParams<T> {
    pub scale: T,
    pub offset: T,
}

/// Map the EV series into the baseline's normalized space:
/// `scaled = (ev - min(ev)) / (max(ev) - min(ev))`.
pub fn scale_to_baseline<T: Real>(
    ev: &MeterSeries<T>,
    baseline: &BaselineCurve<T>,
) -> Result<(Vec<T>, ScaleParams<T>)> {
    if ev.readings().len() != baseline.len() {
        return Err(Error::LengthMismatch(ev.readings().len(), baseline.len()));
    }
    let (lo, hi) = min_max(ev.readings());
    if !(hi > lo) {
        return Err(Error::ZeroRange);
    }
    let range = hi - lo;
    let scaled = ev.readings().iter().map(|&v| (v - lo) / range).collect();
    Ok((
        scaled,
        ScaleParams {
            scale: range,
            offset: lo,
        },
    ))
}

/// Circular within-day displacement applied to the baseline before
/// subtraction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AlignmentResult {
    pub shift_slots: isize,
}

/// Rotate each day of a series by `shift` slots: positive shifts delay the
/// signal, so `out[s] = in[(s - shift) mod slots_per_day]` within each day.
pub fn rotate_within_days<T: Copy>(series: &[T], slots_per_day: usize, shift: isize) -> Vec<T> {
    debug_assert_eq!(series.len() % slots_per_day, 0);
    let n = slots_per_day as isize;
    let shift = ((shift % n) + n) % n;
    let mut out = Vec::with_capacity(series.len());
    for day in series.chunks_exact(slots_per_day) {
        for s in 0..n {
            out.push(day[((s - shift + n) % n) as usize]);
        }
    }
    out
}

/// Slots whose value is at or below the signal's 5th percentile - the
/// deepest 5% of the signal.
fn valley_slots<T: Real>(values: &[T]) -> Result<Vec<usize>> {
    let (lo, hi) = min_max(values);
    if !(hi > lo) {
        return Err(Error::ConstantSignal);
    }
    let cut = quantile(values, 0.05);
    Ok(values
        .iter()
        .enumerate()
        .filter(|(_, &v)| v <= cut)
        .map(|(i, _)| i)
        .collect())
}

/// Circular centroid angle (radians) of a set of day-folded slots.
fn valley_centroid(slots: &[usize], slots_per_day: usize) -> f64 {
    let step = std::f64::consts::TAU / slots_per_day as f64;
    let (mut x, mut y) = (0.0_f64, 0.0_f64);
    for &s in slots {
        let theta = ((s % slots_per_day) as f64 + 0.5) * step;
        x += theta.cos();
        y += theta.sin();
    }
    y.atan2(x)
}

/// Find the within-day rotation of the baseline that lines its valley
/// centroid up with the EV signal's valley centroid.
///
/// Valleys are the slots at or below each signal's own 5th percentile, so
/// the alignment is amplitude-blind. One shift is computed over the whole
/// series using day-folded valley sets.
pub fn align_valleys<T: Real>(
    scaled_ev: &[T],
    baseline: &BaselineCurve<T>,
) -> Result<AlignmentResult> {
    if scaled_ev.len() != baseline.len() {
        return Err(Error::LengthMismatch(scaled_ev.len(), baseline.len()));
    }
    let spd = baseline.grid().slots_per_day();
    let ev_valleys = valley_slots(scaled_ev)?;
    let base_valleys = valley_slots(baseline.values())?;
    let phi_ev = valley_centroid(&ev_valleys, spd);
    let phi_base = valley_centroid(&base_valleys, spd);

    let step = std::f64::consts::TAU / spd as f64;
    let mut delta = (phi_ev - phi_base) / step;
    let n = spd as f64;
    delta -= (delta / n).round() * n; // minimal circular displacement
    let shift = delta.round() as isize;
    debug_assert!(shift.unsigned_abs() < spd);
    Ok(AlignmentResult {
        shift_slots: shift,
    })
}

/// Subtract the aligned baseline in normalized space and restore kW
/// amplitude: `residual = max(0, (scaled_ev - rotated_baseline) * scale)`.
///
/// Only the scale is applied on the way back; the offsets of the two signals
/// cancel in the difference.
pub fn subtract_and_restore<T: Real>(
    scaled_ev: &[T],
    baseline: &BaselineCurve<T>,
    alignment: AlignmentResult,
    params: ScaleParams<T>,
) -> Vec<T> {
    debug_assert_eq!(scaled_ev.len(), baseline.len());
    let rotated = rotate_within_days(
        baseline.values(),
        baseline.grid().slots_per_day(),
        alignment.shift_slots,
    );
    scaled_ev
        .iter()
        .zip(&rotated)
        .map(|(&ev, &b)| ((ev - b) * params.scale).max(T::zero()))
        .collect()
}

/// One extracted charging event, in global slot indices (`end_slot`
/// exclusive).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChargingEvent<T> {
    pub start_slot: usize,
    pub end_slot: usize,
    pub energy_kwh: T,
    pub avg_power_kw: T,
}

impl<T: Real> ChargingEvent<T> {
    pub fn duration_slots(&self) -> usize {
        self.end_slot - self.start_slot
    }
}

/// Thresholds for turning a residual series into discrete events.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SegmentationPolicy<T> {
    /// Slots at or above this power count as charging.
    pub power_threshold_kw: T,
    /// Runs shorter than this many slots are dropped.
    pub min_duration_slots: usize,
    /// Runs separated by at most this many below-threshold slots are merged.
    pub merge_gap_slots: usize,
}

impl<T: Real> Default for SegmentationPolicy<T> {
    fn default() -> Self {
        // a 4 kW charger is always detectable at these defaults
        SegmentationPolicy {
            power_threshold_kw: T::one(),
            min_duration_slots: 2,
            merge_gap_slots: 2,
        }
    }
}

/// Split a residual series into maximal above-threshold runs, merge runs
/// separated by small gaps, drop too-short runs, and book energy over each
/// run (gap slots included).
pub fn segment_events<T: Real>(
    residual: &[T],
    policy: &SegmentationPolicy<T>,
    grid: TimeGrid,
) -> Vec<ChargingEvent<T>> {
    let mut runs: Vec<(usize, usize)> = Vec::new();
    let mut start = None;
    for (i, &v) in residual.iter().enumerate() {
        if v >= policy.power_threshold_kw {
            if start.is_none() {
                start = Some(i);
            }
        } else if let Some(s) = start.take() {
            runs.push((s, i));
        }
    }
    if let Some(s) = start {
        runs.push((s, residual.len()));
    }

    let mut merged: Vec<(usize, usize)> = Vec::new();
    for run in runs {
        match merged.last_mut() {
            Some(prev) if run.0 - prev.1 <= policy.merge_gap_slots => prev.1 = run.1,
            _ => merged.push(run),
        }
    }

    let slot_h = real::<T>(grid.slot_hours());
    merged
        .into_iter()
        .filter(|(s, e)| e - s >= policy.min_duration_slots.max(1))
        .map(|(s, e)| {
            let energy: T = residual[s..e].iter().copied().sum::<T>() * slot_h;
            let hours = real::<T>((e - s) as f64) * slot_h;
            ChargingEvent {
                start_slot: s,
                end_slot: e,
                energy_kwh: energy,
                avg_power_kw: energy / hours,
            }
        })
        .collect()
}

/// Full per-meter extraction: normalize the EV series against the baseline,
/// align, subtract, and segment.
pub fn extract_events<T: Real>(
    ev: &MeterSeries<T>,
    baseline: &BaselineCurve<T>,
    policy: &SegmentationPolicy<T>,
) -> Result<Vec<ChargingEvent<T>>> {
    let (scaled, params) = scale_to_baseline(ev, baseline)?;
    let alignment = align_valleys(&scaled, baseline)?;
    let residual = subtract_and_restore(&scaled, baseline, alignment, params);
    Ok(segment_events(&residual, policy, ev.grid()))
}
