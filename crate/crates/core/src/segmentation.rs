//! Top-down piecewise-linear segmentation of a monthly series.
//!
//! Each candidate segment is summarized by the maximum absolute residual of
//! its least-squares line. A segment is split at the index minimizing the sum
//! of the two children's maxima, recursively, until every segment is within
//! the threshold or is too short to split (two points or fewer).

use rayon::join;
use schemars::JsonSchema;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::month::MonthSpan;

/// Least-squares line `y = slope * i + intercept`, with `i` the absolute
/// series index.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
}

impl LineFit {
    pub fn at(&self, i: usize) -> f64 {
        self.slope * i as f64 + self.intercept
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct Segment {
    /// Inclusive.
    pub start_idx: usize,
    /// Inclusive.
    pub end_idx: usize,
    pub fit: LineFit,
    pub max_residual: f64,
}

impl Segment {
    pub fn len(&self) -> usize {
        self.end_idx - self.start_idx + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

/// Error threshold, either a fraction of the series range or an absolute value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum Threshold {
    Fraction(f64),
    Absolute(f64),
}

impl Default for Threshold {
    fn default() -> Self {
        Threshold::Fraction(0.05)
    }
}

impl Threshold {
    /// Absolute threshold for `series`. A flat series has zero range; the
    /// fraction then applies to 1.0 so the threshold stays positive.
    pub fn resolve(&self, series: &[f64]) -> f64 {
        match *self {
            Threshold::Absolute(v) => v,
            Threshold::Fraction(f) => {
                let (lo, hi) = series
                    .iter()
                    .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
                let range = hi - lo;
                f * if range > 0.0 { range } else { 1.0 }
            }
        }
    }
}

impl std::str::FromStr for Threshold {
    type Err = Error;

    /// `0.05` is a fraction of the range; `abs:12.5` is absolute.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::invalid(format!("bad threshold {s:?}"));
        match s.strip_prefix("abs:") {
            Some(v) => Ok(Threshold::Absolute(v.parse().map_err(|_| bad())?)),
            None => Ok(Threshold::Fraction(s.parse().map_err(|_| bad())?)),
        }
    }
}

/// Least-squares fit over `series[lo..=hi]` and its maximum absolute residual.
pub fn segment_error(series: &[f64], lo: usize, hi: usize) -> (LineFit, f64) {
    assert!(lo <= hi && hi < series.len(), "segment [{lo}, {hi}] out of bounds");
    let n = (hi - lo + 1) as f64;
    if hi == lo {
        return (
            LineFit {
                slope: 0.0,
                intercept: series[lo],
            },
            0.0,
        );
    }
    // Centered sums keep the normal equations well-conditioned for large
    // absolute indices.
    let x_mean = (lo + hi) as f64 / 2.0;
    let y_mean = series[lo..=hi].iter().sum::<f64>() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (i, &y) in series[lo..=hi].iter().enumerate() {
        let dx = (lo + i) as f64 - x_mean;
        sxy += dx * (y - y_mean);
        sxx += dx * dx;
    }
    let slope = sxy / sxx;
    let fit = LineFit {
        slope,
        intercept: y_mean - slope * x_mean,
    };
    let max_residual = series[lo..=hi]
        .iter()
        .enumerate()
        .map(|(i, &y)| (y - fit.at(lo + i)).abs())
        .fold(0.0, f64::max);
    (fit, max_residual)
}

/// The split `s` in `(lo, hi)` minimizing the summed maximum residuals of
/// `[lo, s]` and `[s + 1, hi]`; ties go to the smallest `s`.
pub fn best_split(series: &[f64], lo: usize, hi: usize) -> Result<usize> {
    if hi < lo + 2 {
        return Err(Error::Unsplittable { lo, hi });
    }
    let mut best = (lo + 1, f64::INFINITY);
    for s in lo + 1..hi {
        let cost = segment_error(series, lo, s).1 + segment_error(series, s + 1, hi).1;
        if cost < best.1 {
            best = (s, cost);
        }
    }
    Ok(best.0)
}

/// Top-down segmentation with a per-segment maximum-residual bound.
pub fn topdown_segment(series: &[f64], max_error: f64) -> Result<Vec<Segment>> {
    if series.is_empty() {
        return Err(Error::invalid("cannot segment an empty series"));
    }
    if !(max_error > 0.0) {
        return Err(Error::invalid(format!("threshold must be positive, got {max_error}")));
    }
    Ok(split_recursive(series, 0, series.len() - 1, max_error))
}

fn split_recursive(series: &[f64], lo: usize, hi: usize, max_error: f64) -> Vec<Segment> {
    let (fit, max_residual) = segment_error(series, lo, hi);
    if max_residual <= max_error || hi < lo + 2 {
        return vec![Segment {
            start_idx: lo,
            end_idx: hi,
            fit,
            max_residual,
        }];
    }
    let s = best_split(series, lo, hi).expect("length checked");
    let (mut left, right) = join(
        || split_recursive(series, lo, s, max_error),
        || split_recursive(series, s + 1, hi, max_error),
    );
    left.extend(right);
    left
}

/// Sum of the per-segment maxima.
pub fn total_error(segments: &[Segment]) -> f64 {
    segments.iter().map(|s| s.max_residual).sum()
}

/// Coarsens a segmentation into display periods: segments shorter than
/// `min_len` are merged into a neighbour, then the `top_k` longest are kept
/// in chronological order. Returns inclusive index ranges.
pub fn select_periods(segments: &[Segment], min_len: usize, top_k: usize) -> Vec<(usize, usize)> {
    let mut ranges: Vec<(usize, usize)> = segments.iter().map(|s| (s.start_idx, s.end_idx)).collect();
    loop {
        if ranges.len() <= 1 {
            break;
        }
        let Some(i) = ranges.iter().position(|&(a, b)| b - a + 1 < min_len) else {
            break;
        };
        // merge into the shorter neighbour; the first sliver merges forward
        let target = if i == 0 {
            1
        } else if i + 1 == ranges.len() {
            i - 1
        } else {
            let len = |j: usize| ranges[j].1 - ranges[j].0;
            if len(i - 1) <= len(i + 1) {
                i - 1
            } else {
                i + 1
            }
        };
        let (a, b) = (i.min(target), i.max(target));
        ranges[a] = (ranges[a].0, ranges[b].1);
        ranges.remove(b);
    }
    let mut order: Vec<usize> = (0..ranges.len()).collect();
    order.sort_by_key(|&i| (std::cmp::Reverse(ranges[i].1 - ranges[i].0), i));
    order.truncate(top_k);
    order.sort_unstable();
    order.into_iter().map(|i| ranges[i]).collect()
}

/// A display period: a contiguous run of snapshot indices and its months.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
pub struct Period {
    pub index: usize,
    /// Inclusive.
    pub start_idx: usize,
    /// Inclusive.
    pub end_idx: usize,
    pub span: MonthSpan,
}

/// Attaches months to index ranges of a series whose index 0 is `series.start`.
pub fn periods_from_ranges(ranges: &[(usize, usize)], series: &MonthSpan) -> Result<Vec<Period>> {
    ranges
        .iter()
        .enumerate()
        .map(|(index, &(a, b))| {
            if a > b || b >= series.len() {
                return Err(Error::invalid(format!("period range {a}..={b} outside series of {}", series.len())));
            }
            Ok(Period {
                index,
                start_idx: a,
                end_idx: b,
                span: MonthSpan::new(series.month_at(a), series.month_at(b))?,
            })
        })
        .collect()
}
