use serde::{Deserialize, Serialize};

/// Half-open awake interval `[start, end)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Window {
    pub start: f64,
    pub end: f64,
}

impl Window {
    pub fn len(&self) -> f64 {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }

    pub fn overlaps(&self, other: &Window) -> bool {
        self.start < other.end && other.start < self.end
    }
}

/// Periodic sleep/awake regime: awake for `awake_fraction * period_s`
/// starting at `phase_s + k * period_s`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DutyCycleSchedule {
    pub period_s: f64,
    pub awake_fraction: f64,
    #[serde(default)]
    pub phase_s: f64,
}

impl DutyCycleSchedule {
    pub fn new(period_s: f64, awake_fraction: f64, phase_s: f64) -> Self {
        Self {
            period_s,
            awake_fraction,
            phase_s,
        }
    }

    pub fn always_on(period_s: f64) -> Self {
        Self::new(period_s, 1.0, 0.0)
    }

    pub fn is_always_on(&self) -> bool {
        self.awake_fraction >= 1.0
    }

    pub fn window_len(&self) -> f64 {
        self.awake_fraction * self.period_s
    }

    /// Index of the period containing `t`, consistent with `window(k).start`
    /// even where the division rounds across a boundary.
    fn index_at(&self, t: f64) -> i64 {
        let mut k = ((t - self.phase_s) / self.period_s).floor() as i64;
        if self.window(k + 1).start <= t {
            k += 1;
        } else if self.window(k).start > t {
            k -= 1;
        }
        k
    }

    /// The `k`-th wake window (k may be negative for windows before the phase).
    pub fn window(&self, k: i64) -> Window {
        let start = self.phase_s + k as f64 * self.period_s;
        Window {
            start,
            end: start + self.window_len(),
        }
    }

    pub fn is_awake(&self, t: f64) -> bool {
        if self.is_always_on() {
            return true;
        }
        let w = self.window(self.index_at(t));
        w.start <= t && t < w.end
    }

    /// Like [`is_awake`](Self::is_awake) but also true at a window's closing
    /// instant (within `1e-9` s), when work that just finished is reported.
    pub fn is_awake_closed(&self, t: f64) -> bool {
        if self.is_awake(t) {
            return true;
        }
        let w = self.window(self.index_at(t));
        w.start <= t && t <= w.end + 1e-9
    }

    /// The window containing `t`, or the first one starting after `t`.
    pub fn current_or_next(&self, t: f64) -> Window {
        let k = self.index_at(t);
        let w = self.window(k);
        if t < w.end && t >= w.start {
            w
        } else if t < w.start {
            w
        } else {
            self.window(k + 1)
        }
    }

    /// Start of the next period boundary strictly after `t`.
    pub fn next_period_start(&self, t: f64) -> f64 {
        let mut k = self.index_at(t) + 1;
        while self.window(k).start <= t {
            k += 1;
        }
        self.window(k).start
    }

    /// Wake windows intersecting `[0, horizon)`, clipped to it. Contiguous
    /// windows (always-on schedules) come back merged.
    pub fn awake_windows(&self, horizon_s: f64) -> Vec<Window> {
        let mut out: Vec<Window> = Vec::new();
        if horizon_s <= 0.0 {
            return out;
        }
        if self.is_always_on() {
            out.push(Window {
                start: 0.0,
                end: horizon_s,
            });
            return out;
        }
        let mut k = self.index_at(0.0);
        loop {
            let w = self.window(k);
            if w.start >= horizon_s {
                break;
            }
            let clipped = Window {
                start: w.start.max(0.0),
                end: w.end.min(horizon_s),
            };
            if !clipped.is_empty() {
                match out.last_mut() {
                    Some(prev) if prev.end >= clipped.start => prev.end = clipped.end,
                    _ => out.push(clipped),
                }
            }
            k += 1;
        }
        out
    }

    /// Total awake seconds in `[0, horizon)`.
    pub fn awake_seconds(&self, horizon_s: f64) -> f64 {
        self.awake_windows(horizon_s).iter().map(Window::len).sum()
    }

    /// Time at which `work_s` seconds of awake time, accrued from `start`,
    /// have elapsed. Work pauses while asleep and resumes on the next wake.
    pub fn finish_time(&self, start: f64, work_s: f64) -> f64 {
        if work_s <= 0.0 {
            return start;
        }
        if self.is_always_on() {
            return start + work_s;
        }
        let mut t = start;
        let mut left = work_s;
        loop {
            let w = self.current_or_next(t);
            let from = t.max(w.start);
            let avail = w.end - from;
            if left <= avail {
                return from + left;
            }
            left -= avail;
            t = w.end;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn w(start: f64, end: f64) -> Window {
        Window { start, end }
    }

    #[test]
    fn ten_percent_windows() {
        let s = DutyCycleSchedule::new(100.0, 0.10, 0.0);
        assert_eq!(s.awake_windows(200.0), vec![w(0.0, 10.0), w(100.0, 110.0)]);
    }

    #[test]
    fn always_on_is_one_window() {
        let s = DutyCycleSchedule::always_on(10.0);
        assert_eq!(s.awake_windows(55.0), vec![w(0.0, 55.0)]);
    }

    #[test]
    fn one_percent_windows() {
        let s = DutyCycleSchedule::new(100.0, 0.01, 0.0);
        assert_eq!(s.awake_windows(150.0), vec![w(0.0, 1.0), w(100.0, 101.0)]);
    }

    #[test]
    fn windows_are_clipped_to_horizon() {
        let s = DutyCycleSchedule::new(10.0, 0.5, 2.0);
        assert_eq!(s.awake_windows(13.0), vec![w(2.0, 7.0), w(12.0, 13.0)]);
        assert!(s.awake_windows(0.0).is_empty());
    }

    #[test]
    fn window_wrapping_zero_is_clipped() {
        let s = DutyCycleSchedule::new(10.0, 0.5, 8.0);
        assert_eq!(s.awake_windows(10.0), vec![w(0.0, 3.0), w(8.0, 10.0)]);
    }

    #[test]
    fn finish_time_accrues_only_while_awake() {
        let s = DutyCycleSchedule::new(100.0, 0.10, 0.0);
        // 10 s in the first window, 5 s in the second
        assert_eq!(s.finish_time(0.0, 15.0), 105.0);
        assert_eq!(s.finish_time(50.0, 5.0), 105.0);
        assert_eq!(s.finish_time(3.0, 2.0), 5.0);
        assert_eq!(DutyCycleSchedule::always_on(100.0).finish_time(3.0, 2.0), 5.0);
    }

    #[test]
    fn window_starts_are_awake_despite_rounding() {
        let s = DutyCycleSchedule::new(20.0, 0.01, 13.671_234_567_8);
        for k in 0..10_000 {
            let w = s.window(k);
            assert!(s.is_awake(w.start), "window {k} start");
            assert!(s.is_awake_closed(w.end), "window {k} end");
            assert_eq!(s.current_or_next(w.start), w);
        }
    }

    #[test]
    fn awake_queries() {
        let s = DutyCycleSchedule::new(10.0, 0.2, 1.0);
        assert!(s.is_awake(1.0));
        assert!(s.is_awake(2.9));
        assert!(!s.is_awake(3.0));
        assert!(!s.is_awake(0.5));
        assert_eq!(s.current_or_next(5.0), w(11.0, 13.0));
        assert_eq!(s.current_or_next(2.0), w(1.0, 3.0));
        assert_eq!(s.next_period_start(1.0), 11.0);
        assert_eq!(s.next_period_start(0.0), 1.0);
    }

    #[test]
    fn awake_seconds_match_fraction() {
        let s = DutyCycleSchedule::new(7.0, 0.3, 2.5);
        let h = 7000.0;
        assert!((s.awake_seconds(h) - 0.3 * h).abs() <= s.window_len());
    }
}
