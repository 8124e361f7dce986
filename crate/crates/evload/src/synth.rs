//! Synthetic interval meter data with known injected charging sessions,
//! used to exercise the extraction pipeline end to end.

use chrono::NaiveDate;
use rand::Rng;

use crate::data::MeterSeries;
use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::scalar::{real, Real};

/// Smooth two-peak household shape: a flat base plus Gaussian morning and
/// evening bumps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BaseLoadModel<T> {
    pub base_kw: T,
    pub morning_peak_kw: T,
    pub morning_center_h: T,
    pub morning_width_h: T,
    pub evening_peak_kw: T,
    pub evening_center_h: T,
    pub evening_width_h: T,
}

impl<T: Real> Default for BaseLoadModel<T> {
    fn default() -> Self {
        BaseLoadModel {
            base_kw: real(0.6),
            morning_peak_kw: real(0.9),
            morning_center_h: real(7.5),
            morning_width_h: real(1.3),
            evening_peak_kw: real(1.6),
            evening_center_h: real(19.0),
            evening_width_h: real(1.6),
        }
    }
}

impl<T: Real> BaseLoadModel<T> {
    pub fn value_at(&self, hour: T) -> T {
        let bump = |amp: T, center: T, width: T| {
            let z = (hour - center) / width;
            amp * (-(z * z) / real(2.0)).exp()
        };
        self.base_kw
            + bump(self.morning_peak_kw, self.morning_center_h, self.morning_width_h)
            + bump(self.evening_peak_kw, self.evening_center_h, self.evening_width_h)
    }
}

/// Parameters for injecting rectangular charging sessions into EV meters.
///
/// Start and duration are snapped to whole slots so the injected rectangle
/// is exactly representable on the grid. The start window may wrap past
/// midnight (e.g. 23.0 to 25.0 means 23:00-01:00).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InjectionModel<T> {
    /// Probability that an EV meter charges on a given day.
    pub daily_probability: f64,
    pub power_range_kw: (T, T),
    pub start_window_h: (f64, f64),
    pub duration_range_h: (f64, f64),
}

impl<T: Real> Default for InjectionModel<T> {
    fn default() -> Self {
        InjectionModel {
            daily_probability: 0.9,
            power_range_kw: (real(8.0), real(12.0)),
            start_window_h: (23.0, 24.5),
            duration_range_h: (1.5, 3.5),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig<T> {
    pub n_nonev: usize,
    pub n_ev: usize,
    pub days: usize,
    pub grid: TimeGrid,
    pub start_date: NaiveDate,
    pub base: BaseLoadModel<T>,
    pub noise_std_kw: T,
    pub injection: InjectionModel<T>,
}

impl<T: Real> Default for SynthConfig<T> {
    fn default() -> Self {
        SynthConfig {
            n_nonev: 20,
            n_ev: 20,
            days: 30,
            grid: TimeGrid::default(),
            start_date: NaiveDate::from_ymd_opt(2022, 1, 1).expect("valid date"),
            base: BaseLoadModel::default(),
            noise_std_kw: real(0.1),
            injection: InjectionModel::default(),
        }
    }
}

/// Ground truth for one injected session, in global grid slots
/// (`end_slot` exclusive).
#[derive(Debug, Clone, PartialEq)]
pub struct InjectedSession<T> {
    pub meter_id: String,
    pub start_slot: usize,
    pub end_slot: usize,
    pub power_kw: T,
}

impl<T: Real> InjectedSession<T> {
    pub fn energy_kwh(&self, grid: TimeGrid) -> T {
        self.power_kw * real((self.end_slot - self.start_slot) as f64 * grid.slot_hours())
    }
}

fn base_day_readings<T: Real, R: Rng + ?Sized>(
    config: &SynthConfig<T>,
    rng: &mut R,
    out: &mut Vec<T>,
) {
    let spd = config.grid.slots_per_day();
    for slot in 0..spd {
        let hour = real::<T>(config.grid.slot_mid_h(slot));
        let noise = config.noise_std_kw * T::std_normal(rng);
        out.push((config.base.value_at(hour) + noise).max(T::zero()));
    }
}

/// Generate non-EV and EV meter series plus the ground-truth session list.
///
/// Non-EV meters are the household shape plus noise; EV meters additionally
/// carry rectangular sessions drawn from the injection model, at most one
/// per day, skipped when it would touch the previous session. Identical
/// seeds give identical output.
pub fn synthesize_meter_data<T: Real, R: Rng + ?Sized>(
    config: &SynthConfig<T>,
    rng: &mut R,
) -> Result<(Vec<MeterSeries<T>>, Vec<InjectedSession<T>>)> {
    if config.n_nonev == 0 && config.n_ev == 0 {
        return Err(Error::InvalidParameter(
            "at least one meter must be generated".into(),
        ));
    }
    if config.days == 0 {
        return Err(Error::InvalidParameter("days must be positive".into()));
    }
    let inj = &config.injection;
    if !(0.0..=1.0).contains(&inj.daily_probability) {
        return Err(Error::InvalidParameter(
            "daily_probability must lie in [0, 1]".into(),
        ));
    }
    if !(inj.power_range_kw.0 > T::zero() && inj.power_range_kw.1 >= inj.power_range_kw.0) {
        return Err(Error::InvalidParameter("bad injection power range".into()));
    }
    if !(inj.duration_range_h.0 > 0.0 && inj.duration_range_h.1 >= inj.duration_range_h.0) {
        return Err(Error::InvalidParameter("bad injection duration range".into()));
    }

    let grid = config.grid;
    let spd = grid.slots_per_day();
    let slot_h = grid.slot_hours();
    let total_slots = config.days * spd;

    let mut series = Vec::with_capacity(config.n_nonev + config.n_ev);
    for m in 0..config.n_nonev {
        let mut readings = Vec::with_capacity(total_slots);
        for _ in 0..config.days {
            base_day_readings(config, rng, &mut readings);
        }
        series.push(MeterSeries::new(
            format!("nonev_{m:03}"),
            false,
            config.start_date,
            grid,
            readings,
        )?);
    }

    let mut truth = Vec::new();
    for m in 0..config.n_ev {
        let meter_id = format!("ev_{m:03}");
        let mut readings = Vec::with_capacity(total_slots);
        for _ in 0..config.days {
            base_day_readings(config, rng, &mut readings);
        }
        let mut last_end = 0usize;
        for day in 0..config.days {
            if !rng.random_bool(inj.daily_probability) {
                continue;
            }
            let power = if inj.power_range_kw.1 > inj.power_range_kw.0 {
                rng.random_range(inj.power_range_kw.0..inj.power_range_kw.1)
            } else {
                inj.power_range_kw.0
            };
            let start_h = rng.random_range(inj.start_window_h.0..inj.start_window_h.1.max(inj.start_window_h.0 + 1e-9));
            let duration_h = rng.random_range(inj.duration_range_h.0..inj.duration_range_h.1.max(inj.duration_range_h.0 + 1e-9));
            let start_slot = day * spd + (start_h / slot_h).round() as usize;
            let n_slots = (duration_h / slot_h).round().max(1.0) as usize;
            let end_slot = (start_slot + n_slots).min(total_slots);
            // keep ground truth unambiguous: skip sessions that would touch
            // the previous one
            if start_slot >= end_slot || (last_end > 0 && start_slot <= last_end + 1) {
                continue;
            }
            for r in &mut readings[start_slot..end_slot] {
                *r += power;
            }
            last_end = end_slot;
            truth.push(InjectedSession {
                meter_id: meter_id.clone(),
                start_slot,
                end_slot,
                power_kw: power,
            });
        }
        series.push(MeterSeries::new(
            meter_id,
            true,
            config.start_date,
            grid,
            readings,
        )?);
    }

    Ok((series, truth))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::substream;

    #[test]
    fn zero_sessions_leave_ev_meters_plain() {
        let config = SynthConfig::<f64> {
            n_nonev: 2,
            n_ev: 2,
            days: 3,
            injection: InjectionModel {
                daily_probability: 0.0,
                ..InjectionModel::default()
            },
            ..SynthConfig::default()
        };
        let mut rng = substream(1, &[0]);
        let (series, truth) = synthesize_meter_data(&config, &mut rng).unwrap();
        assert!(truth.is_empty());
        assert_eq!(series.len(), 4);
        // without injections, EV meters stay within plausible household range
        let max_ev = series
            .iter()
            .filter(|s| s.is_ev())
            .flat_map(|s| s.readings())
            .fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        assert!(max_ev < 4.0, "unexpected spike {max_ev}");
    }

    #[test]
    fn injection_raises_exactly_the_injected_slots() {
        // fixed window and duration pin the session to 19:00-23:00
        let config = SynthConfig::<f64> {
            n_nonev: 1,
            n_ev: 1,
            days: 1,
            noise_std_kw: 0.0,
            injection: InjectionModel {
                daily_probability: 1.0,
                power_range_kw: (10.0, 10.0),
                start_window_h: (19.0, 19.0),
                duration_range_h: (4.0, 4.0),
            },
            ..SynthConfig::default()
        };
        let mut rng = substream(2, &[0]);
        let (series, truth) = synthesize_meter_data(&config, &mut rng).unwrap();
        assert_eq!(truth.len(), 1);
        assert_eq!(truth[0].start_slot, 76);
        assert_eq!(truth[0].end_slot, 92);
        assert!((truth[0].energy_kwh(config.grid) - 40.0).abs() < 1e-12);

        let ev = series.iter().find(|s| s.is_ev()).unwrap();
        let base = &config.base;
        for (slot, &v) in ev.readings().iter().enumerate() {
            let expect = base.value_at(config.grid.slot_mid_h(slot))
                + if (76..92).contains(&slot) { 10.0 } else { 0.0 };
            assert!((v - expect).abs() < 1e-12, "slot {slot}");
        }
    }

    #[test]
    fn same_seed_reproduces_output_exactly() {
        let config = SynthConfig::<f64> {
            n_nonev: 3,
            n_ev: 3,
            days: 5,
            ..SynthConfig::default()
        };
        let (s1, t1) = synthesize_meter_data(&config, &mut substream(9, &[0])).unwrap();
        let (s2, t2) = synthesize_meter_data(&config, &mut substream(9, &[0])).unwrap();
        assert_eq!(s1, s2);
        assert_eq!(t1, t2);
    }

    #[test]
    fn bad_configs_are_rejected() {
        let mut rng = substream(1, &[0]);
        let mut config = SynthConfig::<f64>::default();
        config.n_nonev = 0;
        config.n_ev = 0;
        assert!(synthesize_meter_data(&config, &mut rng).is_err());

        let mut config = SynthConfig::<f64>::default();
        config.days = 0;
        assert!(synthesize_meter_data(&config, &mut rng).is_err());

        let mut config = SynthConfig::<f64>::default();
        config.injection.daily_probability = 1.5;
        assert!(synthesize_meter_data(&config, &mut rng).is_err());
    }
}
