use serde::{Deserialize, Serialize};

use crate::stream::{hour_of_week, HOUR, WEEK};

pub const SLOTS: usize = 168;

/// Work intensity per hour of the week, slot 0 = Monday 00:00 UTC.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeeklyCalendar {
    weights: Vec<f64>,
}

impl Default for WeeklyCalendar {
    fn default() -> Self {
        WeeklyCalendar { weights: vec![0.0; SLOTS] }
    }
}

impl WeeklyCalendar {
    pub fn always_open() -> Self {
        WeeklyCalendar { weights: vec![1.0; SLOTS] }
    }

    /// Builds from explicit weights; values are clamped into [0, 1].
    pub fn from_weights(weights: &[f64]) -> Self {
        assert_eq!(weights.len(), SLOTS, "a weekly calendar has 168 slots");
        WeeklyCalendar { weights: weights.iter().map(|w| w.clamp(0.0, 1.0)).collect() }
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weight_at(&self, ts: i64) -> f64 {
        self.weights[hour_of_week(ts)]
    }

    pub fn is_all_zero(&self) -> bool {
        self.weights.iter().all(|&w| w == 0.0)
    }

    /// Earliest time `>= ts` inside an open slot; `None` when no slot is open.
    pub fn next_open(&self, ts: i64) -> Option<i64> {
        let slot = hour_of_week(ts);
        if self.weights[slot] > 0.0 {
            return Some(ts);
        }
        let slot_start = ts - ts.rem_euclid(HOUR);
        (1..SLOTS as i64).find(|k| self.weights[(slot + *k as usize) % SLOTS] > 0.0).map(|k| slot_start + k * HOUR)
    }
}

/// Slot weight = events in slot / events in the busiest slot.
pub fn calendar_from_events(timestamps: &[i64]) -> WeeklyCalendar {
    let mut counts = [0u64; SLOTS];
    for &ts in timestamps {
        counts[hour_of_week(ts)] += 1;
    }
    let max = counts.iter().copied().max().unwrap_or(0);
    if max == 0 {
        return WeeklyCalendar::default();
    }
    WeeklyCalendar { weights: counts.iter().map(|&c| c as f64 / max as f64).collect() }
}

/// Chance of an empty bin under uniform activity below which the bin is
/// taken as closed.
pub const CLOSED_BIN_ALPHA: f64 = 0.01;

/// Calendar as the product of a weekday profile and an hour-of-day profile,
/// each an event rate per unit of exposure inside `[from, to)` scaled by its
/// busiest value. A weekday observed for less than one full day, or an hour
/// observed for less than one full hour, stays open at weight 1. An empty
/// bin is closed only when uniform activity would leave it empty with
/// probability below [`CLOSED_BIN_ALPHA`]; otherwise it is credited half an
/// event.
pub fn calendar_over(timestamps: &[i64], from: i64, to: i64) -> WeeklyCalendar {
    if timestamps.is_empty() {
        return WeeklyCalendar::default();
    }
    let (mut day_n, mut hour_n) = ([0.0f64; 7], [0.0f64; 24]);
    for &ts in timestamps {
        let s = hour_of_week(ts);
        day_n[s / 24] += 1.0;
        hour_n[s % 24] += 1.0;
    }
    // exposure in seconds per weekday and per hour of day
    let weeks = ((to - from).max(0) / WEEK) as f64;
    let (mut day_x, mut hour_x) = ([weeks * (24 * HOUR) as f64; 7], [weeks * (7 * HOUR) as f64; 24]);
    let mut t = from + (to - from).max(0) / WEEK * WEEK;
    while t < to {
        let next = (t - t.rem_euclid(HOUR)).saturating_add(HOUR).min(to);
        let s = hour_of_week(t);
        day_x[s / 24] += (next - t) as f64;
        hour_x[s % 24] += (next - t) as f64;
        t = next;
    }
    let day = profile(&day_n, &day_x, (24 * HOUR) as f64);
    let hour = profile(&hour_n, &hour_x, HOUR as f64);
    WeeklyCalendar { weights: (0..SLOTS).map(|s| day[s / 24] * hour[s % 24]).collect() }
}

fn profile<const N: usize>(counts: &[f64; N], exposure: &[f64; N], full: f64) -> [f64; N] {
    let n: f64 = counts.iter().sum();
    let total: f64 = exposure.iter().sum::<f64>().max(1.0);
    let observed = |i: usize| exposure[i] >= full;
    let closed = |i: usize| counts[i] == 0.0 && (-n * exposure[i] / total).exp() < CLOSED_BIN_ALPHA;
    let rate = |i: usize| counts[i].max(0.5) / exposure[i];
    let max = (0..N).filter(|&i| observed(i) && !closed(i)).map(rate).fold(0.0, f64::max);
    let mut out = [1.0; N];
    for (i, w) in out.iter_mut().enumerate() {
        if observed(i) {
            *w = if closed(i) || max == 0.0 { 0.0 } else { rate(i) / max };
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stream::DAY;

    // 2024-01-01 was a Monday
    const MONDAY: i64 = 1_704_067_200;

    #[test]
    fn ratios() {
        let mut ts = vec![MONDAY + 9 * HOUR; 10];
        ts.extend(vec![MONDAY + 10 * HOUR + 59; 5]);
        let c = calendar_from_events(&ts);
        assert_eq!(c.weights()[9], 1.0);
        assert_eq!(c.weights()[10], 0.5);
        assert_eq!(c.weights().iter().filter(|&&w| w > 0.0).count(), 2);
        assert!(calendar_from_events(&[]).is_all_zero());
    }

    /// Office hours over `weeks` weeks, one event per working hour.
    fn office(weeks: i64) -> Vec<i64> {
        (0..weeks * 7).filter(|d| d % 7 < 5).flat_map(|d| (9..17).map(move |h| MONDAY + d * DAY + h * HOUR)).collect()
    }

    #[test]
    fn weights_are_day_times_hour_rates() {
        // Monday twice as busy as Tuesday, 9:00 twice as busy as 10:00
        let mut ts = Vec::new();
        for w in 0..20 {
            let base = MONDAY + w * 7 * DAY;
            for (day, hour, n) in [(0, 9, 4), (0, 10, 2), (1, 9, 2), (1, 10, 1)] {
                ts.extend(vec![base + day * DAY + hour * HOUR; n]);
            }
        }
        let c = calendar_over(&ts, MONDAY, MONDAY + 140 * DAY);
        assert_eq!(c.weights()[9], 1.0);
        assert!((c.weights()[10] - 0.5).abs() < 1e-12);
        assert!((c.weights()[24 + 9] - 0.5).abs() < 1e-12);
        assert!((c.weights()[24 + 10] - 0.25).abs() < 1e-12);
        assert_eq!(c.weights().iter().filter(|&&w| w > 0.0).count(), 4);
        assert!(calendar_over(&[], MONDAY, MONDAY + DAY).is_all_zero());
    }

    #[test]
    fn thin_evidence_keeps_empty_hours_open() {
        // 40 events cannot rule out any single hour of the day
        let c = calendar_over(&office(1), MONDAY, MONDAY + 7 * DAY);
        assert!(c.weights()[3] > 0.0 && c.weights()[3] <= 0.1);
        assert_eq!(c.weights()[5 * 24 + 10], 0.0);
        // four weeks can
        let c = calendar_over(&office(4), MONDAY, MONDAY + 28 * DAY);
        assert_eq!(c.weights()[3], 0.0);
    }

    #[test]
    fn unobserved_slots_stay_open() {
        // first seen on a Thursday afternoon, watched until Sunday night
        let thu = MONDAY + 3 * DAY;
        let ts: Vec<i64> = (0..4).flat_map(|d| (13..17).map(move |h| thu + d * DAY + h * HOUR)).collect();
        let c = calendar_over(&ts, thu + 13 * HOUR, MONDAY + 7 * DAY);
        // Monday to Thursday were never watched for a whole day
        assert!((0..4).all(|d| c.weights()[d * 24 + 14] == 1.0));
        assert!((4..7).all(|d| c.weights()[d * 24 + 14] == 1.0));
        // four quiet evenings are too few to close 20:00
        assert!(c.weights()[4 * 24 + 20] > 0.0 && c.weights()[4 * 24 + 20] < 0.2);
        // a single event says nothing about any other slot
        assert!(calendar_over(&[MONDAY + 9 * HOUR], MONDAY + 9 * HOUR, MONDAY + 9 * HOUR + 1).weights().iter().all(|&w| w == 1.0));
    }

    #[test]
    fn office_hours_have_closed_weekends() {
        let c = calendar_over(&office(4), MONDAY, MONDAY + 28 * DAY);
        assert!(c.weights()[5 * 24..].iter().all(|&w| w == 0.0));
        assert!(c.weights()[9..17].iter().all(|&w| w == 1.0));
    }

    #[test]
    fn friday_night_advances_to_monday_morning() {
        let c = calendar_over(&office(4), MONDAY, MONDAY + 28 * DAY);
        let friday_2330 = MONDAY + 4 * DAY + 23 * HOUR + 30 * 60;
        assert_eq!(c.next_open(friday_2330), Some(MONDAY + 7 * DAY + 9 * HOUR));
        assert_eq!(c.next_open(MONDAY + 9 * HOUR + 5), Some(MONDAY + 9 * HOUR + 5));
        assert_eq!(WeeklyCalendar::default().next_open(MONDAY), None);
    }
}
