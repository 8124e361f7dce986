//! Annual fleet simulation: two-phase taper charging profiles sampled from
//! KDE models, Monte Carlo over EVs and days, fleet summary statistics, and
//! rate-category datasets.

use std::fmt::Write as _;
use std::path::Path;

use chrono::NaiveDate;
use rand::Rng;
use rayon::prelude::*;

use crate::data::DailyProfile;
use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::io::{self, EventRecord};
use crate::kde::KdeModel;
use crate::rng::substream;
use crate::scalar::{real, Real};
use crate::stats::{mean, quantile};

/// Two-phase charging shape: sessions drawing more than `threshold_kwh`
/// run at the sampled average power for the first `threshold_kwh` and at
/// `taper_fraction` of it for the rest; smaller sessions run at the average
/// power for `pre_taper_energy_fraction` of the energy and taper for the
/// remainder.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TaperPolicy<T> {
    pub threshold_kwh: T,
    pub taper_fraction: T,
    pub pre_taper_energy_fraction: T,
}

impl<T: Real> Default for TaperPolicy<T> {
    fn default() -> Self {
        TaperPolicy {
            threshold_kwh: real(50.0),
            taper_fraction: real(0.7),
            pre_taper_energy_fraction: real(0.9),
        }
    }
}

impl<T: Real> TaperPolicy<T> {
    pub fn validate(&self) -> Result<()> {
        if !(self.threshold_kwh > T::zero()) {
            return Err(Error::InvalidParameter(
                "taper threshold must be positive".into(),
            ));
        }
        for (name, v) in [
            ("taper_fraction", self.taper_fraction),
            ("pre_taper_energy_fraction", self.pre_taper_energy_fraction),
        ] {
            if !(v > T::zero() && v < T::one()) {
                return Err(Error::InvalidParameter(format!(
                    "{name} must lie strictly between 0 and 1"
                )));
            }
        }
        Ok(())
    }
}

/// One constant-power stretch of a charging profile.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerSegment<T> {
    pub duration_h: T,
    pub power_kw: T,
}

impl<T: Real> PowerSegment<T> {
    pub fn energy_kwh(&self) -> T {
        self.duration_h * self.power_kw
    }
}

/// Split a sampled (energy, average power) pair into the two taper segments.
/// Segment energies sum to the input exactly; a demand of exactly
/// `threshold_kwh` takes the small-session branch.
pub fn two_phase_profile<T: Real>(
    energy_kwh: T,
    avg_power_kw: T,
    policy: &TaperPolicy<T>,
) -> Result<Vec<PowerSegment<T>>> {
    policy.validate()?;
    if !(energy_kwh > T::zero()) || !(avg_power_kw > T::zero()) {
        return Err(Error::InvalidParameter(
            "energy and power must be positive".into(),
        ));
    }
    let first_energy = if energy_kwh > policy.threshold_kwh {
        policy.threshold_kwh
    } else {
        policy.pre_taper_energy_fraction * energy_kwh
    };
    let second_energy = energy_kwh - first_energy; // exact complement
    let taper_power = policy.taper_fraction * avg_power_kw;
    Ok(vec![
        PowerSegment {
            duration_h: first_energy / avg_power_kw,
            power_kw: avg_power_kw,
        },
        PowerSegment {
            duration_h: second_energy / taper_power,
            power_kw: taper_power,
        },
    ])
}

/// Fleet simulation parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig<T> {
    pub fleet_size: usize,
    pub days: usize,
    pub daily_charge_probability: f64,
    pub grid: TimeGrid,
    /// Lower edges of the charger-rate categories, strictly increasing; the
    /// last category is open-ended.
    pub category_boundaries_kw: Vec<T>,
    pub master_seed: u64,
    /// Percentiles (low, high) of the across-days variability band.
    pub band_percentiles: (f64, f64),
}

impl<T: Real> Default for ScenarioConfig<T> {
    fn default() -> Self {
        ScenarioConfig {
            fleet_size: 144,
            days: 365,
            daily_charge_probability: 0.9,
            grid: TimeGrid::default(),
            category_boundaries_kw: vec![real(4.0), real(7.0), real(11.2), real(15.0)],
            master_seed: 0,
            band_percentiles: (5.0, 95.0),
        }
    }
}

impl<T: Real> ScenarioConfig<T> {
    pub fn validate(&self) -> Result<()> {
        if self.fleet_size == 0 {
            return Err(Error::InvalidParameter("fleet_size must be at least 1".into()));
        }
        if self.days == 0 {
            return Err(Error::InvalidParameter("days must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.daily_charge_probability) {
            return Err(Error::InvalidParameter(
                "daily_charge_probability must lie in [0, 1]".into(),
            ));
        }
        if self.category_boundaries_kw.is_empty()
            || self
                .category_boundaries_kw
                .windows(2)
                .any(|w| !(w[0] < w[1]))
        {
            return Err(Error::InvalidParameter(
                "category boundaries must be strictly increasing".into(),
            ));
        }
        let (lo, hi) = self.band_percentiles;
        if !(0.0..=100.0).contains(&lo) || !(0.0..=100.0).contains(&hi) || lo > hi {
            return Err(Error::InvalidParameter(
                "band percentiles must satisfy 0 <= low <= high <= 100".into(),
            ));
        }
        Ok(())
    }
}

/// Scenario plus taper settings parsed from a `key=value` file.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulationSettings<T> {
    pub scenario: ScenarioConfig<T>,
    pub taper: TaperPolicy<T>,
}

impl<T: Real> Default for SimulationSettings<T> {
    fn default() -> Self {
        SimulationSettings {
            scenario: ScenarioConfig::default(),
            taper: TaperPolicy::default(),
        }
    }
}

impl<T: Real> SimulationSettings<T> {
    /// Parse `key=value` lines (`#` starts a comment). Unknown keys are an
    /// error; missing keys keep their defaults.
    pub fn parse(text: &str) -> Result<Self> {
        let mut settings = SimulationSettings::<T>::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::BadConfig(format!("line {}: expected key=value", i + 1)))?;
            let key = key.trim();
            let value = value.trim();
            let bad = |msg: &str| Error::BadConfig(format!("line {}: {msg} `{value}`", i + 1));
            match key {
                "fleet_size" => {
                    settings.scenario.fleet_size =
                        value.parse().map_err(|_| bad("bad fleet_size"))?;
                }
                "days" => {
                    settings.scenario.days = value.parse().map_err(|_| bad("bad days"))?;
                }
                "daily_charge_probability" => {
                    settings.scenario.daily_charge_probability =
                        value.parse().map_err(|_| bad("bad probability"))?;
                }
                "slot_minutes" => {
                    let minutes: u32 = value.parse().map_err(|_| bad("bad slot_minutes"))?;
                    settings.scenario.grid = TimeGrid::new(minutes)?;
                }
                "category_boundaries" => {
                    let bounds = value
                        .split(',')
                        .map(|s| {
                            s.trim()
                                .parse::<f64>()
                                .map(real::<T>)
                                .map_err(|_| bad("bad category boundary"))
                        })
                        .collect::<Result<Vec<T>>>()?;
                    settings.scenario.category_boundaries_kw = bounds;
                }
                "master_seed" => {
                    settings.scenario.master_seed =
                        value.parse().map_err(|_| bad("bad master_seed"))?;
                }
                "band_low_pct" => {
                    settings.scenario.band_percentiles.0 =
                        value.parse().map_err(|_| bad("bad band_low_pct"))?;
                }
                "band_high_pct" => {
                    settings.scenario.band_percentiles.1 =
                        value.parse().map_err(|_| bad("bad band_high_pct"))?;
                }
                "taper_threshold_kwh" => {
                    let v: f64 = value.parse().map_err(|_| bad("bad taper_threshold_kwh"))?;
                    settings.taper.threshold_kwh = real(v);
                }
                "taper_fraction" => {
                    let v: f64 = value.parse().map_err(|_| bad("bad taper_fraction"))?;
                    settings.taper.taper_fraction = real(v);
                }
                "pre_taper_energy_fraction" => {
                    let v: f64 = value
                        .parse()
                        .map_err(|_| bad("bad pre_taper_energy_fraction"))?;
                    settings.taper.pre_taper_energy_fraction = real(v);
                }
                other => return Err(Error::BadConfig(format!("line {}: unknown key `{other}`", i + 1))),
            }
        }
        settings.scenario.validate()?;
        settings.taper.validate()?;
        Ok(settings)
    }
}

/// One simulated charging event; times are hours from the start of the
/// simulation horizon.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimEvent<T> {
    pub ev: usize,
    pub start_h: T,
    pub end_h: T,
    pub energy_kwh: T,
    pub avg_power_kw: T,
}

/// Simulated fleet demand: one kW series per EV over the whole horizon,
/// plus the events behind it.
#[derive(Debug, Clone, PartialEq)]
pub struct FleetSimulation<T> {
    pub grid: TimeGrid,
    pub days: usize,
    pub per_ev: Vec<Vec<T>>,
    pub events: Vec<SimEvent<T>>,
    /// Energy that spilled past the final day and was dropped.
    pub dropped_kwh: T,
}

impl<T: Real> FleetSimulation<T> {
    /// Aggregate fleet demand for one day-slot.
    fn fleet_demand(&self, day: usize, slot: usize) -> T {
        let idx = day * self.grid.slots_per_day() + slot;
        self.per_ev.iter().map(|s| s[idx]).sum()
    }

    /// Total rasterized energy across the fleet, in kWh.
    pub fn grid_energy_kwh(&self) -> T {
        let slot_h = real::<T>(self.grid.slot_hours());
        self.per_ev
            .iter()
            .map(|s| s.iter().copied().sum::<T>())
            .sum::<T>()
            * slot_h
    }
}

/// Add `[t0, t1)` hours at `power` onto a global slot series; returns the
/// energy falling outside the series horizon.
fn rasterize_global<T: Real>(series: &mut [T], grid: TimeGrid, t0: f64, t1: f64, power: T) -> T {
    debug_assert!(t1 >= t0);
    let dt = grid.slot_hours();
    let horizon = series.len() as f64 * dt;
    let a = t0.max(0.0);
    let b = t1.min(horizon);
    let inside_h = (b - a).max(0.0);
    if inside_h > 0.0 {
        let first = (a / dt).floor() as usize;
        let last = (b / dt).ceil() as usize;
        for slot in first..last.min(series.len()) {
            let lo = (slot as f64 * dt).max(a);
            let hi = ((slot + 1) as f64 * dt).min(b);
            if hi > lo {
                series[slot] += power * real((hi - lo) / dt);
            }
        }
    }
    power * real((t1 - t0) - inside_h)
}

/// Monte Carlo fleet simulation.
///
/// For every EV and day, an independent substream of `master_seed` decides
/// whether the EV charges (with `daily_charge_probability`), then draws a
/// start time from the circular `start_model` and a (power, energy) pair
/// from the 2-D `joint_pe_model` (rejection-resampled until both are
/// positive), builds the two-phase profile, and rasterizes it onto the
/// 15-minute grid. Charging spills into following days; energy past the
/// final day is dropped and reported in `dropped_kwh`. Output is a pure
/// function of the inputs regardless of worker count.
pub fn simulate_fleet<T: Real>(
    config: &ScenarioConfig<T>,
    start_model: &KdeModel<T>,
    joint_pe_model: &KdeModel<T>,
    taper: &TaperPolicy<T>,
) -> Result<FleetSimulation<T>> {
    config.validate()?;
    taper.validate()?;
    if start_model.dims() != 1 {
        return Err(Error::DimensionMismatch {
            expected: 1,
            got: start_model.dims(),
        });
    }
    if joint_pe_model.dims() != 2 {
        return Err(Error::DimensionMismatch {
            expected: 2,
            got: joint_pe_model.dims(),
        });
    }

    let spd = config.grid.slots_per_day();
    let total_slots = config.days * spd;
    let per_ev_results: Vec<(Vec<T>, Vec<SimEvent<T>>, T)> = (0..config.fleet_size)
        .into_par_iter()
        .map(|ev| {
            let mut series = vec![T::zero(); total_slots];
            let mut events = Vec::new();
            let mut dropped = T::zero();
            for day in 0..config.days {
                let mut rng = substream(config.master_seed, &[ev as u64, day as u64]);
                if !rng.random_bool(config.daily_charge_probability) {
                    continue;
                }
                let start_h = start_model.sample1(&mut rng);
                let (power, energy) = loop {
                    let (p, e) = joint_pe_model.sample2(&mut rng);
                    if p > T::zero() && e > T::zero() {
                        break (p, e);
                    }
                };
                let segments = two_phase_profile(energy, power, taper)
                    .expect("positive inputs by rejection");
                let start_global =
                    day as f64 * 24.0 + start_h.to_f64().expect("finite start");
                let mut t = start_global;
                for seg in &segments {
                    let dur = seg.duration_h.to_f64().expect("finite duration");
                    dropped += rasterize_global(&mut series, config.grid, t, t + dur, seg.power_kw);
                    t += dur;
                }
                let total_duration: T = segments.iter().map(|s| s.duration_h).sum();
                events.push(SimEvent {
                    ev,
                    start_h: real::<T>(start_global),
                    end_h: real::<T>(start_global) + total_duration,
                    energy_kwh: energy,
                    avg_power_kw: energy / total_duration,
                });
            }
            (series, events, dropped)
        })
        .collect();

    let mut per_ev = Vec::with_capacity(config.fleet_size);
    let mut events = Vec::new();
    let mut dropped_kwh = T::zero();
    for (series, ev_events, dropped) in per_ev_results {
        per_ev.push(series);
        events.extend(ev_events);
        dropped_kwh += dropped;
    }
    if dropped_kwh > T::zero() {
        log::warn!(
            "dropped {:.3} kWh of charging that spilled past the simulation horizon",
            dropped_kwh.to_f64().unwrap_or(f64::NAN)
        );
    }

    Ok(FleetSimulation {
        grid: config.grid,
        days: config.days,
        per_ev,
        events,
        dropped_kwh,
    })
}

/// Mean aggregate demand per clock slot with an across-days percentile band.
#[derive(Debug, Clone, PartialEq)]
pub struct FleetProfileSummary<T> {
    grid: TimeGrid,
    pub mean_kw: Vec<T>,
    pub band_low_kw: Vec<T>,
    pub band_high_kw: Vec<T>,
}

impl<T: Real> FleetProfileSummary<T> {
    pub fn grid(&self) -> TimeGrid {
        self.grid
    }
}

/// Aggregate the fleet per day and slot, then reduce across days: mean plus
/// the configured percentile band. The band is widened to bracket the mean
/// where a heavily skewed slot would otherwise exclude it.
pub fn summarize_fleet<T: Real>(
    sim: &FleetSimulation<T>,
    config: &ScenarioConfig<T>,
) -> Result<FleetProfileSummary<T>> {
    if sim.per_ev.is_empty() {
        return Err(Error::EmptyInput("fleet simulation has no series"));
    }
    let spd = sim.grid.slots_per_day();
    let (p_lo, p_hi) = config.band_percentiles;
    let mut mean_kw = Vec::with_capacity(spd);
    let mut band_low_kw = Vec::with_capacity(spd);
    let mut band_high_kw = Vec::with_capacity(spd);
    let mut across_days = vec![T::zero(); sim.days];
    for slot in 0..spd {
        for (day, v) in across_days.iter_mut().enumerate() {
            *v = sim.fleet_demand(day, slot);
        }
        let m = mean(&across_days);
        let lo = quantile(&across_days, p_lo / 100.0);
        let hi = quantile(&across_days, p_hi / 100.0);
        mean_kw.push(m);
        band_low_kw.push(lo.min(m));
        band_high_kw.push(hi.max(m));
    }
    Ok(FleetProfileSummary {
        grid: sim.grid,
        mean_kw,
        band_low_kw,
        band_high_kw,
    })
}

/// EV indices grouped by average charging power into the configured
/// half-open intervals `[b_k, b_{k+1})`, with the last interval open-ended.
/// EVs whose average power falls below the first boundary (or that never
/// charged) are flagged in `below_range` rather than dropped.
#[derive(Debug, Clone, PartialEq)]
pub struct CategorizedFleet<T> {
    pub boundaries_kw: Vec<T>,
    pub members: Vec<Vec<usize>>,
    pub below_range: Vec<usize>,
    /// Energy-weighted average charging power per EV; `None` without events.
    pub avg_power_kw: Vec<Option<T>>,
}

pub fn categorize_by_rate<T: Real>(
    sim: &FleetSimulation<T>,
    config: &ScenarioConfig<T>,
) -> Result<CategorizedFleet<T>> {
    config.validate()?;
    let bounds = &config.category_boundaries_kw;
    let n_ev = sim.per_ev.len();
    let mut energy = vec![T::zero(); n_ev];
    let mut hours = vec![T::zero(); n_ev];
    for e in &sim.events {
        energy[e.ev] += e.energy_kwh;
        hours[e.ev] += e.end_h - e.start_h;
    }
    let mut members = vec![Vec::new(); bounds.len()];
    let mut below_range = Vec::new();
    let mut avg_power_kw = Vec::with_capacity(n_ev);
    for ev in 0..n_ev {
        if !(hours[ev] > T::zero()) {
            avg_power_kw.push(None);
            below_range.push(ev);
            continue;
        }
        let avg = energy[ev] / hours[ev];
        avg_power_kw.push(Some(avg));
        // half-open intervals, lower edge inclusive
        match bounds.iter().rposition(|&b| avg >= b) {
            Some(k) => members[k].push(ev),
            None => below_range.push(ev),
        }
    }
    Ok(CategorizedFleet {
        boundaries_kw: bounds.clone(),
        members,
        below_range,
        avg_power_kw,
    })
}

/// Mean daily aggregate profile of a subset of EVs.
fn mean_daily_profile_of<T: Real>(sim: &FleetSimulation<T>, evs: &[usize]) -> Result<DailyProfile<T>> {
    let spd = sim.grid.slots_per_day();
    let mut values = vec![T::zero(); spd];
    for &ev in evs {
        for (i, v) in sim.per_ev[ev].iter().enumerate() {
            values[i % spd] += *v;
        }
    }
    let days = real::<T>(sim.days as f64);
    for v in &mut values {
        *v = *v / days;
    }
    DailyProfile::new(sim.grid, values)
}

/// Write the simulation dataset into `out_dir`:
/// `events.csv` (shared event schema, timestamps anchored at `start_date`),
/// `summary.csv` (`slot_start_hhmm,mean_kw,band_low_kw,band_high_kw`), and
/// one mean daily profile per rate category (`category_1.csv` ...,
/// `category_below.csv`). Output bytes depend only on the inputs.
pub fn export_dataset<T: Real>(
    sim: &FleetSimulation<T>,
    summary: &FleetProfileSummary<T>,
    categories: &CategorizedFleet<T>,
    out_dir: &Path,
    start_date: NaiveDate,
) -> Result<()> {
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;

    let records: Vec<EventRecord> = sim
        .events
        .iter()
        .map(|e| EventRecord {
            meter_id: format!("ev_{:03}", e.ev),
            start: io::datetime_from_hours(start_date, e.start_h.to_f64().expect("finite")),
            end: io::datetime_from_hours(start_date, e.end_h.to_f64().expect("finite")),
            energy_kwh: e.energy_kwh.to_f64().expect("finite"),
            avg_power_kw: e.avg_power_kw.to_f64().expect("finite"),
        })
        .collect();
    io::write_events_csv(&out_dir.join("events.csv"), &records)?;

    let mut out = String::from("slot_start_hhmm,mean_kw,band_low_kw,band_high_kw\n");
    for slot in 0..summary.grid().slots_per_day() {
        writeln!(
            out,
            "{},{},{},{}",
            summary.grid().slot_label(slot),
            summary.mean_kw[slot],
            summary.band_low_kw[slot],
            summary.band_high_kw[slot]
        )
        .expect("string write");
    }
    io::write_atomic(&out_dir.join("summary.csv"), &out)?;

    for (k, evs) in categories.members.iter().enumerate() {
        let profile = mean_daily_profile_of(sim, evs)?;
        io::write_profile_csv(&out_dir.join(format!("category_{}.csv", k + 1)), &profile)?;
    }
    let below = mean_daily_profile_of(sim, &categories.below_range)?;
    io::write_profile_csv(&out_dir.join("category_below.csv"), &below)?;
    Ok(())
}

/// Group an event dataset by meter and categorize each meter by its
/// energy-weighted average charging power. Returns meter ids per category
/// plus the below-range group.
pub fn categorize_event_records(
    events: &[EventRecord],
    boundaries_kw: &[f64],
) -> Result<(Vec<Vec<String>>, Vec<String>)> {
    if boundaries_kw.is_empty() || boundaries_kw.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::InvalidParameter(
            "category boundaries must be strictly increasing".into(),
        ));
    }
    let mut order: Vec<String> = Vec::new();
    let mut totals: std::collections::HashMap<String, (f64, f64)> = std::collections::HashMap::new();
    for e in events {
        let entry = totals.entry(e.meter_id.clone()).or_insert_with(|| {
            order.push(e.meter_id.clone());
            (0.0, 0.0)
        });
        entry.0 += e.energy_kwh;
        entry.1 += (e.end - e.start).num_seconds() as f64 / 3600.0;
    }
    let mut members = vec![Vec::new(); boundaries_kw.len()];
    let mut below = Vec::new();
    for id in order {
        let (energy, hours) = totals[&id];
        if !(hours > 0.0) {
            below.push(id);
            continue;
        }
        let avg = energy / hours;
        match boundaries_kw.iter().rposition(|&b| avg >= b) {
            Some(k) => members[k].push(id),
            None => below.push(id),
        }
    }
    Ok((members, below))
}

/// Mean daily aggregate profile of an event dataset, averaged over the span
/// of whole days the events cover.
pub fn events_mean_daily_profile(
    events: &[EventRecord],
    grid: TimeGrid,
) -> Result<DailyProfile<f64>> {
    let spd = grid.slots_per_day();
    if events.is_empty() {
        return DailyProfile::new(grid, vec![0.0; spd]);
    }
    let first_day = events.iter().map(|e| e.start.date()).min().expect("nonempty");
    let last_day = events.iter().map(|e| e.end.date()).max().expect("nonempty");
    let days = (last_day - first_day).num_days() as usize + 1;
    let origin = first_day.and_hms_opt(0, 0, 0).expect("midnight exists");

    let mut series = vec![0.0_f64; days * spd];
    for e in events {
        let t0 = (e.start - origin).num_seconds() as f64 / 3600.0;
        let t1 = (e.end - origin).num_seconds() as f64 / 3600.0;
        rasterize_global(&mut series, grid, t0, t1, e.avg_power_kw);
    }
    let mut values = vec![0.0_f64; spd];
    for (i, v) in series.iter().enumerate() {
        values[i % spd] += v;
    }
    for v in &mut values {
        *v /= days as f64;
    }
    DailyProfile::new(grid, values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::substream;
    use proptest::prelude::*;

    #[test]
    fn taper_examples_match_derived_segments() {
        let policy = TaperPolicy::<f64>::default();

        // 60 kWh at 10 kW: 50 kWh at 10 kW then 10 kWh at 7 kW
        let segs = two_phase_profile(60.0_f64, 10.0, &policy).unwrap();
        assert_eq!(segs.len(), 2);
        assert!((segs[0].duration_h - 5.0).abs() < 1e-12);
        assert_eq!(segs[0].power_kw, 10.0);
        assert!((segs[1].duration_h - 10.0 / 7.0).abs() < 1e-12);
        assert!((segs[1].power_kw - 7.0).abs() < 1e-12);

        // 40 kWh at 10 kW: 36 kWh at 10 kW then 4 kWh at 7 kW
        let segs = two_phase_profile(40.0, 10.0, &policy).unwrap();
        assert!((segs[0].duration_h - 3.6).abs() < 1e-12);
        assert!((segs[1].duration_h - 4.0 / 7.0).abs() < 1e-12);

        // exactly 50 kWh takes the small-session branch
        let segs = two_phase_profile(50.0, 10.0, &policy).unwrap();
        assert!((segs[0].duration_h - 4.5).abs() < 1e-12);
        assert!((segs[1].duration_h - 5.0 / 7.0).abs() < 1e-12);
    }

    #[test]
    fn taper_rejects_bad_inputs() {
        let policy = TaperPolicy::<f64>::default();
        assert!(two_phase_profile(0.0, 10.0, &policy).is_err());
        assert!(two_phase_profile(10.0, 0.0, &policy).is_err());
        let bad = TaperPolicy {
            taper_fraction: 1.0,
            ..TaperPolicy::default()
        };
        assert!(two_phase_profile(10.0, 5.0, &bad).is_err());
    }

    proptest! {
        #[test]
        fn taper_conserves_energy(
            energy in 0.01f64..120.0,
            power in 0.5f64..25.0,
        ) {
            let policy = TaperPolicy::<f64>::default();
            let segs = two_phase_profile(energy, power, &policy).unwrap();
            let total: f64 = segs.iter().map(PowerSegment::energy_kwh).sum();
            prop_assert!((total - energy).abs() < 1e-12);
        }
    }

    #[test]
    fn profile_duration_is_continuous_at_the_threshold() {
        let policy = TaperPolicy::<f64>::default();
        let total = |e: f64| -> f64 {
            two_phase_profile(e, 10.0, &policy)
                .unwrap()
                .iter()
                .map(|s| s.duration_h)
                .sum()
        };
        let eps = 1e-9;
        assert!((total(50.0) - total(50.0 - eps)).abs() < 1e-6);
        assert!((total(50.0 + eps) - total(50.0)).abs() < 1e-6);
    }

    fn pinned_start(h: f64) -> KdeModel<f64> {
        KdeModel::fit_1d(&[h, h + 1e-9], true)
            .unwrap()
            .with_bandwidth(&[1e-12])
            .unwrap()
    }

    fn pinned_pe(power: f64, energy: f64) -> KdeModel<f64> {
        KdeModel::fit_2d(&[(power, energy), (power + 1e-9, energy + 1e-9)], (false, false))
            .unwrap()
            .with_bandwidth(&[1e-12, 1e-12])
            .unwrap()
    }

    #[test]
    fn zero_probability_gives_all_zero_series() {
        let config = ScenarioConfig {
            fleet_size: 3,
            days: 4,
            daily_charge_probability: 0.0,
            master_seed: 5,
            ..ScenarioConfig::default()
        };
        let sim = simulate_fleet(
            &config,
            &pinned_start(20.0),
            &pinned_pe(10.0, 40.0),
            &TaperPolicy::default(),
        )
        .unwrap();
        assert!(sim.events.is_empty());
        assert!(sim.per_ev.iter().all(|s| s.iter().all(|&v| v == 0.0)));
        assert_eq!(sim.dropped_kwh, 0.0);
    }

    #[test]
    fn pinned_models_carry_exact_daily_energy() {
        let config = ScenarioConfig {
            fleet_size: 1,
            days: 30,
            daily_charge_probability: 1.0,
            master_seed: 77,
            ..ScenarioConfig::default()
        };
        let sim = simulate_fleet(
            &config,
            &pinned_start(18.0),
            &pinned_pe(10.0, 40.0),
            &TaperPolicy::default(),
        )
        .unwrap();
        assert_eq!(sim.events.len(), 30);
        for e in &sim.events {
            assert!((e.energy_kwh - 40.0).abs() < 1e-6);
        }
        // 18:00 start, ~4.17 h charge: nothing spills past the horizon
        assert_eq!(sim.dropped_kwh, 0.0);
        let total: f64 = sim.events.iter().map(|e| e.energy_kwh).sum();
        assert!((sim.grid_energy_kwh() - total).abs() < 1e-6);
    }

    #[test]
    fn rasterization_conserves_energy_with_spill_accounting() {
        let config = ScenarioConfig {
            fleet_size: 4,
            days: 3,
            daily_charge_probability: 1.0,
            master_seed: 3,
            ..ScenarioConfig::default()
        };
        // 23:30 starts guarantee spill across midnight and off the horizon
        let sim = simulate_fleet(
            &config,
            &pinned_start(23.5),
            &pinned_pe(8.0, 30.0),
            &TaperPolicy::default(),
        )
        .unwrap();
        let sampled: f64 = sim.events.iter().map(|e| e.energy_kwh).sum();
        assert!(sim.dropped_kwh > 0.0);
        assert!(
            (sim.grid_energy_kwh() + sim.dropped_kwh - sampled).abs() < 1e-6,
            "grid {} + dropped {} vs sampled {sampled}",
            sim.grid_energy_kwh(),
            sim.dropped_kwh
        );
    }

    #[test]
    fn simulation_is_deterministic() {
        let config = ScenarioConfig {
            fleet_size: 8,
            days: 20,
            master_seed: 11,
            ..ScenarioConfig::default()
        };
        let mut rng = substream(31, &[0]);
        let starts: Vec<f64> = (0..200)
            .map(|_| crate::scalar::wrap(21.0 + 1.2 * f64::std_normal(&mut rng), 24.0))
            .collect();
        let pairs: Vec<(f64, f64)> = (0..200)
            .map(|_| {
                (
                    rng.random_range(5.0..18.0),
                    (20.0 + 8.0 * f64::std_normal(&mut rng)).max(1.0),
                )
            })
            .collect();
        let start_model = KdeModel::fit_1d(&starts, true).unwrap();
        let pe_model = KdeModel::fit_2d(&pairs, (false, false)).unwrap();
        let a = simulate_fleet(&config, &start_model, &pe_model, &TaperPolicy::default()).unwrap();
        let b = simulate_fleet(&config, &start_model, &pe_model, &TaperPolicy::default()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn summary_band_collapses_on_replicated_days() {
        let config = ScenarioConfig {
            fleet_size: 2,
            days: 6,
            daily_charge_probability: 1.0,
            master_seed: 13,
            ..ScenarioConfig::default()
        };
        // 18:00 sessions end the same evening, so every day is identical
        let sim = simulate_fleet(
            &config,
            &pinned_start(18.0),
            &pinned_pe(10.0, 40.0),
            &TaperPolicy::default(),
        )
        .unwrap();
        assert_eq!(sim.dropped_kwh, 0.0);
        let summary = summarize_fleet(&sim, &config).unwrap();
        for slot in 0..96 {
            let (lo, m, hi) = (
                summary.band_low_kw[slot],
                summary.mean_kw[slot],
                summary.band_high_kw[slot],
            );
            assert!(lo >= 0.0 && lo <= m && m <= hi);
            assert!((hi - lo).abs() < 1e-9, "slot {slot}: {lo} {m} {hi}");
        }
    }

    #[test]
    fn summary_mean_matches_brute_force() {
        let config = ScenarioConfig {
            fleet_size: 3,
            days: 2,
            daily_charge_probability: 1.0,
            master_seed: 17,
            ..ScenarioConfig::default()
        };
        let sim = simulate_fleet(
            &config,
            &pinned_start(18.0),
            &pinned_pe(9.0, 20.0),
            &TaperPolicy::default(),
        )
        .unwrap();
        let summary = summarize_fleet(&sim, &config).unwrap();
        for slot in 0..96 {
            let mut acc = 0.0;
            for day in 0..2 {
                for ev in &sim.per_ev {
                    acc += ev[day * 96 + slot];
                }
            }
            assert!((summary.mean_kw[slot] - acc / 2.0).abs() < 1e-12);
        }
    }

    #[test]
    fn categories_use_half_open_intervals() {
        let config = ScenarioConfig::<f64>::default();
        let mk_sim = |avg_power: f64| {
            let mut sim = FleetSimulation {
                grid: config.grid,
                days: 1,
                per_ev: vec![vec![0.0; 96]],
                events: vec![],
                dropped_kwh: 0.0,
            };
            sim.events.push(SimEvent {
                ev: 0,
                start_h: 0.0,
                end_h: 2.0,
                energy_kwh: avg_power * 2.0,
                avg_power_kw: avg_power,
            });
            sim
        };

        // boundary value lands in the interval it opens
        let cats = categorize_by_rate(&mk_sim(7.0), &config).unwrap();
        assert_eq!(cats.members[1], vec![0]);

        let cats = categorize_by_rate(&mk_sim(10.53), &config).unwrap();
        assert_eq!(cats.members[1], vec![0]);

        let cats = categorize_by_rate(&mk_sim(3.0), &config).unwrap();
        assert!(cats.members.iter().all(Vec::is_empty));
        assert_eq!(cats.below_range, vec![0]);

        let cats = categorize_by_rate(&mk_sim(17.0), &config).unwrap();
        assert_eq!(cats.members[3], vec![0]);
    }

    #[test]
    fn never_charging_evs_are_flagged_not_dropped() {
        let config = ScenarioConfig {
            fleet_size: 2,
            days: 2,
            daily_charge_probability: 0.0,
            ..ScenarioConfig::default()
        };
        let sim = simulate_fleet(
            &config,
            &pinned_start(20.0),
            &pinned_pe(10.0, 40.0),
            &TaperPolicy::default(),
        )
        .unwrap();
        let cats = categorize_by_rate(&sim, &config).unwrap();
        assert_eq!(cats.below_range, vec![0, 1]);
        assert_eq!(cats.avg_power_kw, vec![None, None]);
    }

    #[test]
    fn settings_parse_round_trip() {
        let text = "\
# scenario
fleet_size = 12
days=7
daily_charge_probability = 0.5
slot_minutes = 15
category_boundaries = 4, 7, 11.2, 15
master_seed = 99
band_low_pct = 10
band_high_pct = 90
taper_threshold_kwh = 50
taper_fraction = 0.7
pre_taper_energy_fraction = 0.9
";
        let settings = SimulationSettings::<f64>::parse(text).unwrap();
        assert_eq!(settings.scenario.fleet_size, 12);
        assert_eq!(settings.scenario.days, 7);
        assert_eq!(settings.scenario.master_seed, 99);
        assert_eq!(settings.scenario.band_percentiles, (10.0, 90.0));
        assert_eq!(settings.taper.threshold_kwh, 50.0);

        assert!(SimulationSettings::<f64>::parse("not_a_key = 3").is_err());
        assert!(SimulationSettings::<f64>::parse("fleet_size").is_err());
        assert!(SimulationSettings::<f64>::parse("fleet_size = 0").is_err());
    }

    #[test]
    fn export_writes_byte_stable_files() {
        let config = ScenarioConfig {
            fleet_size: 3,
            days: 5,
            master_seed: 23,
            ..ScenarioConfig::default()
        };
        let sim = simulate_fleet(
            &config,
            &pinned_start(21.0),
            &pinned_pe(11.0, 25.0),
            &TaperPolicy::default(),
        )
        .unwrap();
        let summary = summarize_fleet(&sim, &config).unwrap();
        let cats = categorize_by_rate(&sim, &config).unwrap();
        let date = NaiveDate::from_ymd_opt(2022, 1, 1).unwrap();

        let dir = tempfile::tempdir().unwrap();
        let out1 = dir.path().join("a");
        let out2 = dir.path().join("b");
        export_dataset(&sim, &summary, &cats, &out1, date).unwrap();
        export_dataset(&sim, &summary, &cats, &out2, date).unwrap();
        for name in [
            "events.csv",
            "summary.csv",
            "category_1.csv",
            "category_2.csv",
            "category_3.csv",
            "category_4.csv",
            "category_below.csv",
        ] {
            let a = std::fs::read(out1.join(name)).unwrap();
            let b = std::fs::read(out2.join(name)).unwrap();
            assert_eq!(a, b, "{name} differs between runs");
            assert!(!a.is_empty());
        }

        // events survive a load round trip
        let loaded = crate::io::load_events_csv(&out1.join("events.csv")).unwrap();
        assert_eq!(loaded.len(), sim.events.len());
    }

    #[test]
    fn event_record_categorization_and_profile() {
        let date = NaiveDate::from_ymd_opt(2022, 1, 1).unwrap();
        let mk = |id: &str, start_h: f64, hours: f64, power: f64| EventRecord {
            meter_id: id.into(),
            start: io::datetime_from_hours(date, start_h),
            end: io::datetime_from_hours(date, start_h + hours),
            energy_kwh: power * hours,
            avg_power_kw: power,
        };
        let events = vec![
            mk("a", 19.0, 4.0, 10.0),
            mk("a", 43.0, 2.0, 10.0), // next day
            mk("b", 20.0, 3.0, 5.0),
            mk("c", 10.0, 1.0, 2.0),
        ];
        let (members, below) = categorize_event_records(&events, &[4.0, 7.0, 11.2, 15.0]).unwrap();
        assert_eq!(members[2], vec!["a".to_string()]);
        assert_eq!(members[1], Vec::<String>::new());
        assert_eq!(members[0], vec!["b".to_string()]);
        assert_eq!(below, vec!["c".to_string()]);

        let profile = events_mean_daily_profile(&events, TimeGrid::default()).unwrap();
        // two-day span; 10 kW on 19:00-23:00 day one and 19:00-21:00 day two
        // averages to 15 kW-slots at slot 76 across the two days
        assert!((profile.values()[76] - (10.0 + 10.0) / 2.0).abs() < 1e-9);
        let total_energy: f64 = events.iter().map(|e| e.energy_kwh).sum();
        assert!((profile.energy_kwh() * 2.0 - total_energy).abs() < 1e-9);
    }
}
