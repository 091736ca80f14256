use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::geo::haversine;
use crate::{Error, Result, Trip};

/// Record count up to which corpus quantiles are exact.
pub const EXACT_QUANTILE_LIMIT: usize = 10_000_000;

const HISTOGRAM_BINS: usize = 20;

/// Per-trip descriptive statistics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TripStats {
    pub duration_s: f64,
    /// Sum of consecutive great-circle distances.
    pub length_m: f64,
    pub n_waypoints: usize,
    pub median_lapse_s: f64,
    pub median_spacing_m: f64,
}

/// Lower median: element `floor((n - 1) / 2)` of the sorted values.
///
/// Sorts `values` in place. Panics on an empty slice.
pub fn lower_median(values: &mut [f64]) -> f64 {
    assert!(!values.is_empty(), "median of empty slice");
    values.sort_by(f64::total_cmp);
    values[(values.len() - 1) / 2]
}

pub fn trip_stats(trip: &Trip) -> TripStats {
    let wps = trip.waypoints();
    let mut lapses_ms: Vec<i64> = Vec::with_capacity(wps.len() - 1);
    let mut spacings: Vec<f64> = Vec::with_capacity(wps.len() - 1);
    for w in wps.windows(2) {
        lapses_ms.push(w[1].t_ms - w[0].t_ms);
        spacings.push(haversine(w[0].pos(), w[1].pos()));
    }
    let length_m = spacings.iter().sum();
    lapses_ms.sort_unstable();
    let median_lapse_ms = lapses_ms[(lapses_ms.len() - 1) / 2];
    TripStats {
        duration_s: trip.duration_ms() as f64 / 1000.0,
        length_m,
        n_waypoints: wps.len(),
        median_lapse_s: median_lapse_ms as f64 / 1000.0,
        median_spacing_m: lower_median(&mut spacings),
    }
}

/// Equal-width histogram.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    /// `counts.len() + 1` bin edges.
    pub edges: Vec<f64>,
    pub counts: Vec<u64>,
}

impl Histogram {
    fn build<I: Iterator<Item = (f64, u64)>>(min: f64, max: f64, items: I) -> Self {
        let width = (max - min) / HISTOGRAM_BINS as f64;
        let edges = (0..=HISTOGRAM_BINS).map(|i| min + width * i as f64).collect();
        let mut counts = vec![0u64; HISTOGRAM_BINS];
        for (v, c) in items {
            let bin = if width > 0.0 {
                (((v - min) / width).floor() as usize).min(HISTOGRAM_BINS - 1)
            } else {
                0
            };
            counts[bin] += c;
        }
        Histogram { edges, counts }
    }
}

/// Quartiles and histogram of one metric. Quantiles use the lower
/// convention: element `floor(q * (n - 1))` of the sorted values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Distribution {
    pub count: u64,
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
    pub mean: f64,
    /// True once the accumulator fell back to the relative-error sketch.
    pub approximate: bool,
    pub histogram: Histogram,
}

impl Distribution {
    pub fn iqr(&self) -> f64 {
        self.q3 - self.q1
    }
}

/// Log-bucketed quantile sketch with relative accuracy `alpha`
/// (any returned quantile is within `alpha * |true value|` of an element of
/// the right rank). Handles non-negative values; negatives are clamped to zero.
#[derive(Debug, Clone)]
pub struct QuantileSketch {
    alpha: f64,
    ln_gamma: f64,
    zero_count: u64,
    buckets: BTreeMap<i32, u64>,
    count: u64,
}

const SKETCH_MIN_POSITIVE: f64 = 1e-9;

impl QuantileSketch {
    pub fn new(alpha: f64) -> Self {
        assert!(alpha > 0.0 && alpha < 1.0);
        let gamma = (1.0 + alpha) / (1.0 - alpha);
        QuantileSketch {
            alpha,
            ln_gamma: gamma.ln(),
            zero_count: 0,
            buckets: BTreeMap::new(),
            count: 0,
        }
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn insert(&mut self, v: f64, n: u64) {
        self.count += n;
        if v < SKETCH_MIN_POSITIVE {
            self.zero_count += n;
        } else {
            let k = (v.ln() / self.ln_gamma).ceil() as i32;
            *self.buckets.entry(k).or_default() += n;
        }
    }

    fn bucket_value(&self, k: i32) -> f64 {
        let gamma = self.ln_gamma.exp();
        2.0 * (self.ln_gamma * k as f64).exp() / (gamma + 1.0)
    }

    /// Iterates `(representative value, count)` in ascending order.
    fn iter(&self) -> impl Iterator<Item = (f64, u64)> + '_ {
        std::iter::once((0.0, self.zero_count))
            .filter(|(_, c)| *c > 0)
            .chain(self.buckets.iter().map(|(&k, &c)| (self.bucket_value(k), c)))
    }

    pub fn quantile(&self, q: f64) -> Option<f64> {
        if self.count == 0 {
            return None;
        }
        let rank = (q * (self.count - 1) as f64).floor() as u64;
        let mut seen = 0u64;
        for (v, c) in self.iter() {
            seen += c;
            if seen > rank {
                return Some(v);
            }
        }
        None
    }
}

/// Exact value store that degrades to a [`QuantileSketch`] past a limit.
#[derive(Debug, Clone)]
struct QuantileAccumulator {
    exact: Vec<f64>,
    sketch: Option<QuantileSketch>,
    limit: usize,
    count: u64,
    sum: f64,
    min: f64,
    max: f64,
}

impl QuantileAccumulator {
    fn new(limit: usize) -> Self {
        QuantileAccumulator {
            exact: Vec::new(),
            sketch: None,
            limit,
            count: 0,
            sum: 0.0,
            min: f64::INFINITY,
            max: f64::NEG_INFINITY,
        }
    }

    fn push(&mut self, v: f64) {
        self.count += 1;
        self.sum += v;
        self.min = self.min.min(v);
        self.max = self.max.max(v);
        match &mut self.sketch {
            Some(s) => s.insert(v, 1),
            None => {
                self.exact.push(v);
                if self.exact.len() > self.limit {
                    let mut s = QuantileSketch::new(0.005);
                    for x in self.exact.drain(..) {
                        s.insert(x, 1);
                    }
                    self.sketch = Some(s);
                }
            }
        }
    }

    fn finish(mut self) -> Distribution {
        let (quartiles, histogram, approximate) = match &self.sketch {
            None => {
                self.exact.sort_by(f64::total_cmp);
                let n = self.exact.len();
                let q = |p: f64| self.exact[(p * (n - 1) as f64).floor() as usize];
                let h = Histogram::build(self.min, self.max, self.exact.iter().map(|&v| (v, 1)));
                ([q(0.25), q(0.5), q(0.75)], h, false)
            }
            Some(s) => {
                let q = |p: f64| s.quantile(p).expect("non-empty sketch");
                let h = Histogram::build(
                    self.min,
                    self.max,
                    s.iter().map(|(v, c)| (v.clamp(self.min, self.max), c)),
                );
                ([q(0.25), q(0.5), q(0.75)], h, true)
            }
        };
        Distribution {
            count: self.count,
            min: self.min,
            q1: quartiles[0],
            median: quartiles[1],
            q3: quartiles[2],
            max: self.max,
            mean: self.sum / self.count as f64,
            approximate,
            histogram,
        }
    }
}

/// Corpus-level distributions of trip duration, length, and the per-trip
/// median lapse and spacing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusSummary {
    pub trips: u64,
    pub duration_s: Distribution,
    pub length_m: Distribution,
    pub lapse_s: Distribution,
    pub spacing_m: Distribution,
}

/// Streaming corpus summarizer.
#[derive(Debug, Clone)]
pub struct CorpusSummarizer {
    duration: QuantileAccumulator,
    length: QuantileAccumulator,
    lapse: QuantileAccumulator,
    spacing: QuantileAccumulator,
}

impl Default for CorpusSummarizer {
    fn default() -> Self {
        Self::with_exact_limit(EXACT_QUANTILE_LIMIT)
    }
}

impl CorpusSummarizer {
    pub fn with_exact_limit(limit: usize) -> Self {
        CorpusSummarizer {
            duration: QuantileAccumulator::new(limit),
            length: QuantileAccumulator::new(limit),
            lapse: QuantileAccumulator::new(limit),
            spacing: QuantileAccumulator::new(limit),
        }
    }

    pub fn push(&mut self, s: &TripStats) {
        self.duration.push(s.duration_s);
        self.length.push(s.length_m);
        self.lapse.push(s.median_lapse_s);
        self.spacing.push(s.median_spacing_m);
    }

    pub fn finish(self) -> Result<CorpusSummary> {
        if self.duration.count == 0 {
            return Err(Error::Domain("cannot summarize an empty corpus".into()));
        }
        Ok(CorpusSummary {
            trips: self.duration.count,
            duration_s: self.duration.finish(),
            length_m: self.length.finish(),
            lapse_s: self.lapse.finish(),
            spacing_m: self.spacing.finish(),
        })
    }
}

pub fn summarize_corpus<I>(stats: I) -> Result<CorpusSummary>
where
    I: IntoIterator<Item = TripStats>,
{
    let mut s = CorpusSummarizer::default();
    for st in stats {
        s.push(&st);
    }
    s.finish()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geo::{destination, haversine};
    use crate::{Point, Waypoint};
    use proptest::prelude::*;

    const T0: i64 = 1_443_657_600_000;

    fn stats_with_duration(d: f64) -> TripStats {
        TripStats {
            duration_s: d,
            length_m: 2.0 * d,
            n_waypoints: 2,
            median_lapse_s: 1.0,
            median_spacing_m: 28.0,
        }
    }

    #[test]
    fn two_point_trip() {
        let a = Point { lat: 39.0, lon: -76.6 };
        let b = destination(a, 90.0, 28.0);
        let t = Trip::vehicle(
            "t",
            vec![
                Waypoint { lat: a.lat, lon: a.lon, t_ms: T0 },
                Waypoint { lat: b.lat, lon: b.lon, t_ms: T0 + 1000 },
            ],
        )
        .unwrap();
        let s = trip_stats(&t);
        assert_eq!(s.duration_s, 1.0);
        assert!((s.length_m - 28.0).abs() < 1e-6);
        assert_eq!(s.median_lapse_s, 1.0);
        assert!((s.median_spacing_m - 28.0).abs() < 1e-6);
    }

    #[test]
    fn collinear_equal_spacing() {
        // along a meridian consecutive haversines are exactly additive
        let n = 12;
        let w: Vec<Waypoint> = (0..n)
            .map(|i| Waypoint { lat: 39.0 + 0.001 * i as f64, lon: -76.6, t_ms: T0 + 1000 * i as i64 })
            .collect();
        let spacing = haversine(w[0].pos(), w[1].pos());
        let s = trip_stats(&Trip::vehicle("t", w).unwrap());
        assert!((s.length_m - (n - 1) as f64 * spacing).abs() < 1e-6);
    }

    #[test]
    fn lapses_sum_to_duration_and_lower_median() {
        let lapses = [1000, 3000, 2000, 500];
        let mut t = T0;
        let mut w = vec![Waypoint { lat: 39.0, lon: -76.6, t_ms: t }];
        for l in lapses {
            t += l;
            w.push(Waypoint { lat: 39.0, lon: -76.6, t_ms: t });
        }
        let s = trip_stats(&Trip::vehicle("t", w).unwrap());
        assert_eq!(s.duration_s, 6.5);
        assert_eq!(s.median_lapse_s, 1.0);
    }

    #[test]
    fn single_trip_quartiles_collapse() {
        let s = summarize_corpus([stats_with_duration(1080.0)]).unwrap();
        let d = &s.duration_s;
        assert_eq!((d.q1, d.median, d.q3), (1080.0, 1080.0, 1080.0));
        assert_eq!(d.iqr(), 0.0);
    }

    #[test]
    fn uniform_durations_lower_median() {
        let n = 1000;
        let s = summarize_corpus((1..=n).map(|i| stats_with_duration(i as f64))).unwrap();
        assert_eq!(s.duration_s.median, (n / 2) as f64);
        assert_eq!(s.duration_s.histogram.counts.iter().sum::<u64>(), n as u64);
    }

    #[test]
    fn identical_corpus_has_zero_iqr() {
        let s = summarize_corpus(std::iter::repeat(stats_with_duration(60.0)).take(50)).unwrap();
        assert_eq!(s.duration_s.iqr(), 0.0);
        assert_eq!(s.length_m.iqr(), 0.0);
    }

    #[test]
    fn empty_corpus_is_error() {
        assert!(summarize_corpus(std::iter::empty()).is_err());
    }

    #[test]
    fn sketch_mode_is_within_alpha() {
        let n = 20_000;
        let mut s = CorpusSummarizer::with_exact_limit(1000);
        for i in 1..=n {
            s.push(&stats_with_duration(i as f64));
        }
        let out = s.finish().unwrap();
        assert!(out.duration_s.approximate);
        let exact = (n / 2) as f64;
        assert!((out.duration_s.median - exact).abs() <= 0.005 * exact + 1.0);
        assert_eq!(out.duration_s.histogram.counts.iter().sum::<u64>(), n as u64);
    }

    proptest! {
        #[test]
        fn length_at_least_straight_line(
            steps in prop::collection::vec((0.0f64..360.0, 0.0f64..200.0, 1i64..5000), 1..40)
        ) {
            let mut p = Point { lat: 39.0, lon: -76.6 };
            let mut t = T0;
            let mut w = vec![Waypoint { lat: p.lat, lon: p.lon, t_ms: t }];
            for (b, d, dt) in steps {
                p = destination(p, b, d);
                t += dt;
                w.push(Waypoint { lat: p.lat, lon: p.lon, t_ms: t });
            }
            let trip = Trip::vehicle("t", w).unwrap();
            let s = trip_stats(&trip);
            prop_assert!(s.length_m + 1e-6 >= haversine(trip.origin(), trip.destination()));
            prop_assert!(s.duration_s >= 0.0);
        }
    }
}
