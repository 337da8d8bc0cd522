use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

/// Buckets kept per level before the two oldest merge.
pub const MAX_BUCKETS: usize = 5;
const MIN_WINDOW: u64 = 5;
const GRACE: u64 = 10;

/// One level of the exponential histogram. Every bucket of level `i`
/// summarizes `2^i` values; the front is the newest.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
struct Level {
    totals: VecDeque<f64>,
    variances: VecDeque<f64>,
}

/// Adaptive windowing drift detector over an exponential histogram.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adwin {
    delta: f64,
    clock: u64,
    levels: Vec<Level>,
    width: u64,
    total: f64,
    /// Sum of squared deviations from the mean.
    variance: f64,
    tick: u64,
    detections: u64,
}

impl Default for Adwin {
    fn default() -> Self {
        Adwin::new(0.002)
    }
}

fn merged_variance(n0: f64, u0: f64, v0: f64, n1: f64, u1: f64, v1: f64) -> f64 {
    if n0 == 0.0 || n1 == 0.0 {
        return v0 + v1;
    }
    let d = u0 / n0 - u1 / n1;
    v0 + v1 + n0 * n1 * d * d / (n0 + n1)
}

impl Adwin {
    pub fn new(delta: f64) -> Self {
        Adwin::with_clock(delta, 32)
    }

    /// `clock` sets how many insertions pass between cut checks.
    pub fn with_clock(delta: f64, clock: u64) -> Self {
        assert!(delta > 0.0 && delta < 1.0);
        assert!(clock >= 1);
        Adwin { delta, clock, levels: Vec::new(), width: 0, total: 0.0, variance: 0.0, tick: 0, detections: 0 }
    }

    pub fn width(&self) -> u64 {
        self.width
    }

    pub fn total(&self) -> f64 {
        self.total
    }

    pub fn mean(&self) -> f64 {
        if self.width == 0 {
            0.0
        } else {
            self.total / self.width as f64
        }
    }

    /// Population variance of the window.
    pub fn variance(&self) -> f64 {
        if self.width == 0 {
            0.0
        } else {
            self.variance / self.width as f64
        }
    }

    pub fn detections(&self) -> u64 {
        self.detections
    }

    /// Adds `x`; true when the window was cut.
    pub fn update(&mut self, x: f64) -> bool {
        debug_assert!(x.is_finite());
        self.insert(x);
        self.tick += 1;
        if self.tick.is_multiple_of(self.clock) && self.width > GRACE {
            let cut = self.detect_change();
            if cut {
                self.detections += 1;
            }
            return cut;
        }
        false
    }

    fn insert(&mut self, x: f64) {
        let n = self.width as f64;
        if self.width > 0 {
            let d = x - self.total / n;
            self.variance += n * d * d / (n + 1.0);
        }
        self.width += 1;
        self.total += x;
        if self.levels.is_empty() {
            self.levels.push(Level::default());
        }
        self.levels[0].totals.push_front(x);
        self.levels[0].variances.push_front(0.0);
        self.compress();
    }

    fn compress(&mut self) {
        let mut i = 0;
        while i < self.levels.len() {
            if self.levels[i].totals.len() <= MAX_BUCKETS {
                break;
            }
            let size = (1u64 << i) as f64;
            let level = &mut self.levels[i];
            let (u1, v1) = (level.totals.pop_back().unwrap(), level.variances.pop_back().unwrap());
            let (u0, v0) = (level.totals.pop_back().unwrap(), level.variances.pop_back().unwrap());
            let merged = merged_variance(size, u0, v0, size, u1, v1);
            if i + 1 == self.levels.len() {
                self.levels.push(Level::default());
            }
            self.levels[i + 1].totals.push_front(u0 + u1);
            self.levels[i + 1].variances.push_front(merged);
            i += 1;
        }
    }

    fn drop_oldest(&mut self) {
        let top = self.levels.len() - 1;
        let size = 1u64 << top;
        let level = &mut self.levels[top];
        let u = level.totals.pop_back().expect("nonempty level");
        let v = level.variances.pop_back().expect("nonempty level");
        if level.totals.is_empty() {
            self.levels.pop();
        }
        self.width -= size;
        self.total -= u;
        if self.width == 0 {
            self.total = 0.0;
            self.variance = 0.0;
            return;
        }
        let (n, w) = (size as f64, self.width as f64);
        let d = u / n - self.total / w;
        self.variance = (self.variance - v - n * w * d * d / (n + w)).max(0.0);
    }

    fn cut_threshold(&self, n0: f64, n1: f64) -> f64 {
        let delta_prime = (2.0 * (self.width as f64).ln() / self.delta).ln();
        let m = 1.0 / (n0 - MIN_WINDOW as f64 + 1.0) + 1.0 / (n1 - MIN_WINDOW as f64 + 1.0);
        (2.0 * m * self.variance() * delta_prime).sqrt() + 2.0 / 3.0 * delta_prime * m
    }

    fn detect_change(&mut self) -> bool {
        let mut changed = false;
        'scan: loop {
            let (mut n0, mut u0) = (0.0, 0.0);
            let (mut n1, mut u1) = (self.width as f64, self.total);
            for i in (0..self.levels.len()).rev() {
                let size = (1u64 << i) as f64;
                for k in (0..self.levels[i].totals.len()).rev() {
                    let ui = self.levels[i].totals[k];
                    n0 += size;
                    u0 += ui;
                    n1 -= size;
                    u1 -= ui;
                    if n1 < MIN_WINDOW as f64 {
                        break 'scan;
                    }
                    if n0 >= MIN_WINDOW as f64 && (u0 / n0 - u1 / n1).abs() > self.cut_threshold(n0, n1) {
                        changed = true;
                        self.drop_oldest();
                        if self.width > 0 {
                            continue 'scan;
                        }
                        break 'scan;
                    }
                }
            }
            break;
        }
        changed
    }
}
