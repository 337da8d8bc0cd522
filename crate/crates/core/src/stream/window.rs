use serde::{Deserialize, Serialize};

use super::{Event, StreamError};

pub const WEEK: i64 = 7 * 86_400;

/// Time interval of one window. Only the first window of a tiling is closed
/// at its start; later windows leave a shared boundary to their predecessor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowBounds {
    pub index: usize,
    pub start: i64,
    pub end: i64,
    pub closed_start: bool,
}

impl WindowBounds {
    pub fn contains(&self, ts: i64) -> bool {
        let after_start = if self.closed_start { ts >= self.start } else { ts > self.start };
        after_start && ts <= self.end
    }

    pub fn width(&self) -> i64 {
        self.end - self.start
    }
}

/// Events of one sliding window, sorted by timestamp; ties are ordered by
/// case id and then ingestion order.
#[derive(Debug, Clone, PartialEq)]
pub struct StreamWindow {
    pub start: i64,
    pub end: i64,
    pub events: Vec<Event>,
}

impl StreamWindow {
    pub fn empty(start: i64, end: i64) -> Self {
        StreamWindow { start, end, events: Vec::new() }
    }

    /// Window restricted to `bounds`, honouring its boundary convention.
    pub fn from_bounds<'a>(events: impl IntoIterator<Item = &'a Event>, bounds: &WindowBounds) -> Self {
        let mut evs: Vec<Event> = events.into_iter().filter(|e| bounds.contains(e.timestamp)).cloned().collect();
        sort_window(&mut evs);
        StreamWindow { start: bounds.start, end: bounds.end, events: evs }
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }
}

fn sort_window(events: &mut [Event]) {
    events.sort_by(|a, b| a.timestamp.cmp(&b.timestamp).then_with(|| a.case_id.cmp(&b.case_id)));
}

/// Events `e` with `t - w <= time(e) <= t`, rejecting sources whose
/// timestamps regress.
pub fn collect_window<'a>(stream: impl IntoIterator<Item = &'a Event>, w: i64, t: i64) -> Result<StreamWindow, StreamError> {
    collect_window_with_slack(stream, w, t, 0)
}

/// As [`collect_window`], tolerating regressions of up to `slack` seconds
/// behind the running maximum.
pub fn collect_window_with_slack<'a>(
    stream: impl IntoIterator<Item = &'a Event>,
    w: i64,
    t: i64,
    slack: i64,
) -> Result<StreamWindow, StreamError> {
    if w <= 0 {
        return Err(StreamError::InvalidWindow(w));
    }
    let start = t - w;
    let mut watermark = i64::MIN;
    let mut events = Vec::new();
    for e in stream {
        if e.timestamp < watermark.saturating_sub(slack) {
            return Err(StreamError::OutOfOrderEvent { timestamp: e.timestamp, watermark, slack });
        }
        watermark = watermark.max(e.timestamp);
        if e.timestamp >= start && e.timestamp <= t {
            events.push(e.clone());
        }
    }
    sort_window(&mut events);
    Ok(StreamWindow { start, end: t, events })
}

/// Abutting windows of width `w` ending at `first_end`, `first_end + w`, ...
/// Every event in `[first_end - w, first_end + (n - 1) w]` lands in exactly
/// one window; shared boundaries belong to the earlier window.
pub fn tile_windows<'a>(
    stream: impl IntoIterator<Item = &'a Event> + Clone,
    w: i64,
    first_end: i64,
    n: usize,
) -> Result<Vec<StreamWindow>, StreamError> {
    if w <= 0 {
        return Err(StreamError::InvalidWindow(w));
    }
    // validate ordering once
    collect_window(stream.clone(), w, first_end)?;
    Ok((0..n)
        .map(|i| {
            let end = first_end + i as i64 * w;
            let bounds = WindowBounds { index: i, start: end - w, end, closed_start: i == 0 };
            StreamWindow::from_bounds(stream.clone(), &bounds)
        })
        .collect())
}

/// Splits `[min_ts, max_ts]` into `k` windows of whole weeks. The number of
/// weeks is rounded up; remainder weeks go to the earliest windows.
pub fn partition_into_windows(min_ts: i64, max_ts: i64, k: usize) -> Result<Vec<WindowBounds>, StreamError> {
    if max_ts <= min_ts || k == 0 {
        return Err(StreamError::InvalidSpan { min: min_ts, max: max_ts });
    }
    let span = max_ts - min_ts;
    let weeks = (span + WEEK - 1) / WEEK;
    if weeks < k as i64 {
        return Err(StreamError::SpanTooShort { weeks, k });
    }
    let base = weeks / k as i64;
    let rem = weeks % k as i64;
    let mut out = Vec::with_capacity(k);
    let mut cursor = min_ts;
    for i in 0..k {
        let len = base + i64::from((i as i64) < rem);
        let end = cursor + len * WEEK;
        out.push(WindowBounds { index: i, start: cursor, end, closed_start: i == 0 });
        cursor = end;
    }
    Ok(out)
}
