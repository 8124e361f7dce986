//! CSV interchange formats and atomic file writing.
//!
//! Formats:
//! - meter readings: `meter_id,is_ev,timestamp,kw` with `YYYY-MM-DDTHH:MM`
//!   timestamps and `is_ev` in {0,1};
//! - line fuses: `fuse_id,n_nonev,n_ev,peak_kw,sigma` (the `sigma` column or
//!   individual values may be omitted; missing weights default to 1);
//! - daily profiles: `slot_start_hhmm,kw`;
//! - charging events: `meter_id,start_iso,end_iso,energy_kwh,avg_power_kw`
//!   with energy and power written to 4 decimals.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;

use chrono::{Duration, NaiveDate, NaiveDateTime, Timelike};

use crate::data::{DailyProfile, LineFuseRecord, MeterSeries};
use crate::error::{Error, Result};
use crate::extract::ChargingEvent;
use crate::grid::TimeGrid;
use crate::scalar::{real, Real};
use crate::sessions::ChargingSession;

const MINUTE_FORMAT: &str = "%Y-%m-%dT%H:%M";
const SECOND_FORMAT: &str = "%Y-%m-%dT%H:%M:%S";

/// Write `content` to `path` via a temp file in the same directory plus an
/// atomic rename, so readers never observe a partial file.
pub fn write_atomic(path: &Path, content: &str) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(path, e))?;
    tmp.write_all(content.as_bytes())
        .map_err(|e| Error::io(path, e))?;
    tmp.persist(path)
        .map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

fn parse_timestamp(s: &str) -> Option<NaiveDateTime> {
    NaiveDateTime::parse_from_str(s, SECOND_FORMAT)
        .or_else(|_| NaiveDateTime::parse_from_str(s, MINUTE_FORMAT))
        .ok()
}

fn format_timestamp(t: NaiveDateTime) -> String {
    if t.second() == 0 {
        t.format(MINUTE_FORMAT).to_string()
    } else {
        t.format(SECOND_FORMAT).to_string()
    }
}

/// Timestamp `hours` (possibly fractional) after midnight of `start_date`,
/// rounded to the nearest second.
pub fn datetime_from_hours(start_date: NaiveDate, hours: f64) -> NaiveDateTime {
    let seconds = (hours * 3600.0).round() as i64;
    start_date.and_hms_opt(0, 0, 0).expect("midnight exists") + Duration::seconds(seconds)
}

fn open_reader(path: &Path) -> Result<csv::Reader<std::fs::File>> {
    csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            other => Error::malformed(path, 0, format!("{other:?}")),
        })
}

fn check_header(path: &Path, reader: &mut csv::Reader<std::fs::File>, want: &[&str]) -> Result<()> {
    let headers = reader
        .headers()
        .map_err(|e| Error::malformed(path, 1, e.to_string()))?;
    let got: Vec<&str> = headers.iter().map(str::trim).collect();
    if got != want {
        return Err(Error::malformed(
            path,
            1,
            format!("expected header `{}`, got `{}`", want.join(","), got.join(",")),
        ));
    }
    Ok(())
}

struct MeterAccum<T> {
    is_ev: bool,
    start: NaiveDateTime,
    next: NaiveDateTime,
    readings: Vec<T>,
}

/// Load interval meter data. One [`MeterSeries`] per meter id, in order of
/// first appearance; rows for different meters may be interleaved.
///
/// Each meter must start at midnight and advance in whole grid slots with no
/// gaps; anything else is an error rather than being repaired.
pub fn load_meter_csv<T: Real>(path: &Path, grid: TimeGrid) -> Result<Vec<MeterSeries<T>>> {
    let mut reader = open_reader(path)?;
    check_header(path, &mut reader, &["meter_id", "is_ev", "timestamp", "kw"])?;

    let mut order: Vec<String> = Vec::new();
    let mut meters: HashMap<String, MeterAccum<T>> = HashMap::new();
    let step = Duration::minutes(i64::from(grid.slot_minutes()));

    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, csv::Position::line);
            Error::malformed(path, line, e.to_string())
        })?;
        let line = record.position().map_or(0, csv::Position::line);
        let bad = |msg: String| Error::malformed(path, line, msg);

        if record.len() != 4 {
            return Err(bad(format!("expected 4 fields, got {}", record.len())));
        }
        let meter_id = record[0].trim().to_string();
        if meter_id.is_empty() {
            return Err(bad("empty meter_id".into()));
        }
        let is_ev = match record[1].trim() {
            "0" => false,
            "1" => true,
            other => return Err(bad(format!("is_ev must be 0 or 1, got `{other}`"))),
        };
        let ts = parse_timestamp(record[2].trim())
            .ok_or_else(|| bad(format!("bad timestamp `{}`", &record[2])))?;
        let kw: f64 = record[3]
            .trim()
            .parse()
            .map_err(|_| bad(format!("bad kw value `{}`", &record[3])))?;
        if !kw.is_finite() || kw < 0.0 {
            return Err(bad(format!("reading {kw} is negative or not finite")));
        }

        match meters.get_mut(&meter_id) {
            None => {
                if ts.time().num_seconds_from_midnight() != 0 {
                    return Err(bad(format!(
                        "meter {meter_id} must start at midnight, got {ts}"
                    )));
                }
                order.push(meter_id.clone());
                meters.insert(
                    meter_id,
                    MeterAccum {
                        is_ev,
                        start: ts,
                        next: ts + step,
                        readings: vec![real(kw)],
                    },
                );
            }
            Some(acc) => {
                if acc.is_ev != is_ev {
                    return Err(bad(format!("meter {meter_id} changes is_ev mid-file")));
                }
                if ts < acc.next {
                    return Err(bad(format!(
                        "non-monotonic timestamp {ts} for meter {meter_id}"
                    )));
                }
                if ts > acc.next {
                    return Err(bad(format!(
                        "gap in meter {meter_id}: expected {}, got {ts}",
                        acc.next
                    )));
                }
                acc.readings.push(real(kw));
                acc.next = ts + step;
            }
        }
    }

    if order.is_empty() {
        return Err(Error::EmptyInput("meter CSV has no data rows"));
    }

    order
        .into_iter()
        .map(|id| {
            let acc = meters.remove(&id).expect("accumulated above");
            let spd = grid.slots_per_day();
            if acc.readings.len() % spd != 0 {
                return Err(Error::BadSeries {
                    meter_id: id,
                    msg: format!(
                        "{} readings is not a whole number of {spd}-slot days",
                        acc.readings.len()
                    ),
                });
            }
            MeterSeries::new(id, acc.is_ev, acc.start.date(), grid, acc.readings)
        })
        .collect()
}

/// Write meter series back out in the ingestion schema. Values are written
/// with `Display`, which round-trips `f32`/`f64` exactly.
pub fn write_meter_csv<T: Real>(path: &Path, series: &[MeterSeries<T>]) -> Result<()> {
    let mut out = String::from("meter_id,is_ev,timestamp,kw\n");
    for s in series {
        let step = Duration::minutes(i64::from(s.grid().slot_minutes()));
        let mut ts = s.start_date().and_hms_opt(0, 0, 0).expect("midnight exists");
        for r in s.readings() {
            writeln!(
                out,
                "{},{},{},{}",
                s.meter_id(),
                u8::from(s.is_ev()),
                ts.format(MINUTE_FORMAT),
                r
            )
            .expect("string write");
            ts += step;
        }
    }
    write_atomic(path, &out)
}

/// Load line-fuse records. A missing `sigma` column or empty sigma field
/// defaults the weight to 1, which reduces the estimate to ordinary least
/// squares.
pub fn load_fuse_csv<T: Real>(path: &Path) -> Result<Vec<LineFuseRecord<T>>> {
    let mut reader = open_reader(path)?;
    let headers = reader
        .headers()
        .map_err(|e| Error::malformed(path, 1, e.to_string()))?;
    let got: Vec<&str> = headers.iter().map(str::trim).collect();
    let has_sigma = match got.as_slice() {
        ["fuse_id", "n_nonev", "n_ev", "peak_kw", "sigma"] => true,
        ["fuse_id", "n_nonev", "n_ev", "peak_kw"] => false,
        _ => {
            return Err(Error::malformed(
                path,
                1,
                format!("unexpected fuse CSV header `{}`", got.join(",")),
            ))
        }
    };

    let mut records = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, csv::Position::line);
            Error::malformed(path, line, e.to_string())
        })?;
        let line = record.position().map_or(0, csv::Position::line);
        let bad = |msg: String| Error::malformed(path, line, msg);

        let want_len = if has_sigma { 5 } else { 4 };
        if record.len() != want_len {
            return Err(bad(format!(
                "expected {want_len} fields, got {}",
                record.len()
            )));
        }
        let fuse_id = record[0].trim().to_string();
        let n_nonev: u32 = record[1]
            .trim()
            .parse()
            .map_err(|_| bad(format!("bad n_nonev `{}`", &record[1])))?;
        let n_ev: u32 = record[2]
            .trim()
            .parse()
            .map_err(|_| bad(format!("bad n_ev `{}`", &record[2])))?;
        let peak_kw: f64 = record[3]
            .trim()
            .parse()
            .map_err(|_| bad(format!("bad peak_kw `{}`", &record[3])))?;
        let sigma: f64 = if has_sigma && !record[4].trim().is_empty() {
            record[4]
                .trim()
                .parse()
                .map_err(|_| bad(format!("bad sigma `{}`", &record[4])))?
        } else {
            1.0
        };
        records.push(
            LineFuseRecord::new(fuse_id, n_nonev, n_ev, real(peak_kw), real(sigma))
                .map_err(|e| bad(e.to_string()))?,
        );
    }
    if records.is_empty() {
        return Err(Error::EmptyInput("fuse CSV has no data rows"));
    }
    Ok(records)
}

/// Write a daily profile as `slot_start_hhmm,kw`.
pub fn write_profile_csv<T: Real>(path: &Path, profile: &DailyProfile<T>) -> Result<()> {
    let mut out = String::from("slot_start_hhmm,kw\n");
    for (slot, v) in profile.values().iter().enumerate() {
        writeln!(out, "{},{}", profile.grid().slot_label(slot), v).expect("string write");
    }
    write_atomic(path, &out)
}

/// Load a daily profile written by [`write_profile_csv`].
pub fn load_profile_csv<T: Real>(path: &Path, grid: TimeGrid) -> Result<DailyProfile<T>> {
    let mut reader = open_reader(path)?;
    check_header(path, &mut reader, &["slot_start_hhmm", "kw"])?;
    let mut values: Vec<T> = Vec::with_capacity(grid.slots_per_day());
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, csv::Position::line);
            Error::malformed(path, line, e.to_string())
        })?;
        let line = record.position().map_or(0, csv::Position::line);
        let bad = |msg: String| Error::malformed(path, line, msg);
        if record.len() != 2 {
            return Err(bad(format!("expected 2 fields, got {}", record.len())));
        }
        let want = grid.slot_label(values.len());
        if record[0].trim() != want {
            return Err(bad(format!(
                "expected slot label `{want}`, got `{}`",
                &record[0]
            )));
        }
        let kw: f64 = record[1]
            .trim()
            .parse()
            .map_err(|_| bad(format!("bad kw value `{}`", &record[1])))?;
        values.push(real(kw));
    }
    if values.len() != grid.slots_per_day() {
        return Err(Error::LengthMismatch(values.len(), grid.slots_per_day()));
    }
    DailyProfile::new(grid, values)
}

/// One exported charging event. This is the event dataset schema shared by
/// the extraction stage, the session sampler, and the fleet simulator.
#[derive(Debug, Clone, PartialEq)]
pub struct EventRecord {
    pub meter_id: String,
    pub start: NaiveDateTime,
    pub end: NaiveDateTime,
    pub energy_kwh: f64,
    pub avg_power_kw: f64,
}

impl EventRecord {
    /// Convert a slot-indexed extraction event using the series' start date.
    pub fn from_charging_event<T: Real>(
        meter_id: &str,
        start_date: NaiveDate,
        grid: TimeGrid,
        event: &ChargingEvent<T>,
    ) -> Self {
        let slot_h = grid.slot_hours();
        EventRecord {
            meter_id: meter_id.to_string(),
            start: datetime_from_hours(start_date, event.start_slot as f64 * slot_h),
            end: datetime_from_hours(start_date, event.end_slot as f64 * slot_h),
            energy_kwh: event.energy_kwh.to_f64().expect("finite energy"),
            avg_power_kw: event.avg_power_kw.to_f64().expect("finite power"),
        }
    }

    /// Convert a sampled session anchored at midnight of `date`.
    pub fn from_session<T: Real>(meter_id: &str, date: NaiveDate, s: &ChargingSession<T>) -> Self {
        EventRecord {
            meter_id: meter_id.to_string(),
            start: datetime_from_hours(date, s.start_h.to_f64().expect("finite start")),
            end: datetime_from_hours(date, s.end_h.to_f64().expect("finite end")),
            energy_kwh: s.energy_kwh.to_f64().expect("finite energy"),
            avg_power_kw: s.rated_kw.to_f64().expect("finite power"),
        }
    }
}

/// Write the charging-event dataset (`energy_kwh` and `avg_power_kw` to 4
/// decimals).
pub fn write_events_csv(path: &Path, events: &[EventRecord]) -> Result<()> {
    let mut out = String::from("meter_id,start_iso,end_iso,energy_kwh,avg_power_kw\n");
    for e in events {
        writeln!(
            out,
            "{},{},{},{:.4},{:.4}",
            e.meter_id,
            format_timestamp(e.start),
            format_timestamp(e.end),
            e.energy_kwh,
            e.avg_power_kw
        )
        .expect("string write");
    }
    write_atomic(path, &out)
}

/// Load a charging-event dataset written by [`write_events_csv`].
pub fn load_events_csv(path: &Path) -> Result<Vec<EventRecord>> {
    let mut reader = open_reader(path)?;
    check_header(
        path,
        &mut reader,
        &["meter_id", "start_iso", "end_iso", "energy_kwh", "avg_power_kw"],
    )?;
    let mut events = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, csv::Position::line);
            Error::malformed(path, line, e.to_string())
        })?;
        let line = record.position().map_or(0, csv::Position::line);
        let bad = |msg: String| Error::malformed(path, line, msg);
        if record.len() != 5 {
            return Err(bad(format!("expected 5 fields, got {}", record.len())));
        }
        let start = parse_timestamp(record[1].trim())
            .ok_or_else(|| bad(format!("bad timestamp `{}`", &record[1])))?;
        let end = parse_timestamp(record[2].trim())
            .ok_or_else(|| bad(format!("bad timestamp `{}`", &record[2])))?;
        if end <= start {
            return Err(bad(format!("event ends at {end} before it starts at {start}")));
        }
        let energy_kwh: f64 = record[3]
            .trim()
            .parse()
            .map_err(|_| bad(format!("bad energy `{}`", &record[3])))?;
        let avg_power_kw: f64 = record[4]
            .trim()
            .parse()
            .map_err(|_| bad(format!("bad power `{}`", &record[4])))?;
        if !(energy_kwh > 0.0) || !(avg_power_kw > 0.0) {
            return Err(bad("energy and power must be positive".into()));
        }
        events.push(EventRecord {
            meter_id: record[0].trim().to_string(),
            start,
            end,
            energy_kwh,
            avg_power_kw,
        });
    }
    Ok(events)
}
