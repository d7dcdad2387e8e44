use serde::{Deserialize, Serialize};

/// Largest in-range delay in milliseconds.
pub const HISTOGRAM_RANGE_MS: usize = 500;

/// Packet delay histogram for one slice over one decision interval.
///
/// Bin `b` (0..=500) is centred on `b` ms and collects delays in
/// `[b - 0.5, b + 0.5)`; the final bin collects everything beyond the range
/// and is treated as centred at 501 ms.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DelayHistogram {
    bins: Vec<u64>,
}

impl Default for DelayHistogram {
    fn default() -> Self {
        Self { bins: vec![0; HISTOGRAM_RANGE_MS + 2] }
    }
}

impl DelayHistogram {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn overflow_index() -> usize {
        HISTOGRAM_RANGE_MS + 1
    }

    fn bin_of(delay_ms: f64) -> usize {
        let b = (delay_ms.max(0.0) + 0.5).floor();
        if b > HISTOGRAM_RANGE_MS as f64 {
            Self::overflow_index()
        } else {
            b as usize
        }
    }

    pub fn record(&mut self, delay_ms: f64) {
        self.bins[Self::bin_of(delay_ms)] += 1;
    }

    pub fn add_to_bin(&mut self, bin: usize, count: u64) {
        self.bins[bin] += count;
    }

    pub fn bins(&self) -> &[u64] {
        &self.bins
    }

    pub fn total(&self) -> u64 {
        self.bins.iter().sum()
    }

    pub fn clear(&mut self) {
        self.bins.iter_mut().for_each(|b| *b = 0);
    }

    pub fn bin_center(bin: usize) -> f64 {
        bin as f64
    }

    /// Count-weighted mean of the bin centres; 0 for an empty window.
    pub fn mean_delay_ms(&self) -> f64 {
        let total = self.total();
        if total == 0 {
            return 0.0;
        }
        let weighted: f64 = self.bins.iter().enumerate().map(|(b, &c)| c as f64 * Self::bin_center(b)).sum();
        weighted / total as f64
    }
}

/// Fraction of delivered packets whose delay exceeds `threshold_ms`.
///
/// A window with no deliveries reports 0.
pub fn delay_violation_rate(hist: &DelayHistogram, threshold_ms: f64) -> f64 {
    let total = hist.total();
    if total == 0 {
        return 0.0;
    }
    let late: u64 = hist
        .bins()
        .iter()
        .enumerate()
        .filter(|(b, _)| DelayHistogram::bin_center(*b) > threshold_ms)
        .map(|(_, &c)| c)
        .sum();
    late as f64 / total as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_of_ten_late() {
        let mut h = DelayHistogram::new();
        for d in [1.0, 3.0, 5.0, 9.0, 12.0, 20.0, 30.0, 49.0, 51.0, 80.0] {
            h.record(d);
        }
        assert_eq!(h.total(), 10);
        assert!((delay_violation_rate(&h, 50.0) - 0.2).abs() < 1e-15);
    }

    #[test]
    fn empty_window_has_no_violations() {
        assert_eq!(delay_violation_rate(&DelayHistogram::new(), 10.0), 0.0);
        assert_eq!(DelayHistogram::new().mean_delay_ms(), 0.0);
    }

    #[test]
    fn everything_late() {
        let mut h = DelayHistogram::new();
        h.record(700.0);
        h.record(120.0);
        assert_eq!(delay_violation_rate(&h, 100.0), 1.0);
    }

    #[test]
    fn threshold_is_strict() {
        let mut h = DelayHistogram::new();
        h.record(50.0);
        assert_eq!(delay_violation_rate(&h, 50.0), 0.0);
        assert_eq!(delay_violation_rate(&h, 49.5), 1.0);
    }

    #[test]
    fn overflow_bin_is_counted_past_the_range() {
        let mut h = DelayHistogram::new();
        h.record(10_000.0);
        h.record(1.0);
        assert_eq!(h.bins()[DelayHistogram::overflow_index()], 1);
        assert!((h.mean_delay_ms() - (501.0 + 1.0) / 2.0).abs() < 1e-12);
    }
}
