//! Clock-time sampling grid for interval readings.

use crate::error::{Error, Result};

pub const MINUTES_PER_DAY: u32 = 1440;

/// Uniform within-day grid. The default is 15-minute slots, 96 per day.
///
/// Timestamps are local clock time and a day is always exactly
/// `slots_per_day` slots; there is no DST handling.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TimeGrid {
    slot_minutes: u32,
    slots_per_day: usize,
}

impl TimeGrid {
    pub fn new(slot_minutes: u32) -> Result<Self> {
        if slot_minutes == 0 || MINUTES_PER_DAY % slot_minutes != 0 {
            return Err(Error::InvalidGrid(format!(
                "{slot_minutes} minutes does not evenly divide a day"
            )));
        }
        Ok(TimeGrid {
            slot_minutes,
            slots_per_day: (MINUTES_PER_DAY / slot_minutes) as usize,
        })
    }

    pub fn slot_minutes(&self) -> u32 {
        self.slot_minutes
    }

    pub fn slots_per_day(&self) -> usize {
        self.slots_per_day
    }

    /// Slot width in hours.
    pub fn slot_hours(&self) -> f64 {
        f64::from(self.slot_minutes) / 60.0
    }

    /// Hours since midnight at the start of `slot` (slot taken modulo a day).
    pub fn slot_start_h(&self, slot: usize) -> f64 {
        (slot % self.slots_per_day) as f64 * self.slot_hours()
    }

    /// Hours since midnight at the midpoint of `slot`.
    pub fn slot_mid_h(&self, slot: usize) -> f64 {
        self.slot_start_h(slot) + 0.5 * self.slot_hours()
    }

    /// `HHMM` label for the start of `slot`, e.g. `"1845"`.
    pub fn slot_label(&self, slot: usize) -> String {
        let minutes = (slot % self.slots_per_day) as u32 * self.slot_minutes;
        format!("{:02}{:02}", minutes / 60, minutes % 60)
    }

    /// Slot index covering the given minute of day; `None` when the minute
    /// does not fall on a slot boundary.
    pub fn slot_of_minute(&self, minute_of_day: u32) -> Option<usize> {
        if minute_of_day >= MINUTES_PER_DAY || minute_of_day % self.slot_minutes != 0 {
            return None;
        }
        Some((minute_of_day / self.slot_minutes) as usize)
    }
}

impl Default for TimeGrid {
    fn default() -> Self {
        TimeGrid::new(15).expect("15 minutes divides a day")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_grid_is_15_minutes() {
        let g = TimeGrid::default();
        assert_eq!(g.slot_minutes(), 15);
        assert_eq!(g.slots_per_day(), 96);
        assert_eq!(g.slot_hours(), 0.25);
    }

    #[test]
    fn rejects_non_divisor_widths() {
        assert!(TimeGrid::new(0).is_err());
        assert!(TimeGrid::new(7).is_err());
        assert!(TimeGrid::new(25).is_err());
        assert!(TimeGrid::new(60).is_ok());
        assert!(TimeGrid::new(1440).is_ok());
    }

    #[test]
    fn labels_and_slot_lookup() {
        let g = TimeGrid::default();
        assert_eq!(g.slot_label(0), "0000");
        assert_eq!(g.slot_label(75), "1845");
        assert_eq!(g.slot_of_minute(1125), Some(75));
        assert_eq!(g.slot_of_minute(1126), None);
        assert_eq!(g.slot_of_minute(1440), None);
        assert_eq!(g.slot_mid_h(0), 0.125);
    }
}
