use serde::{Deserialize, Serialize};

use crate::error::{GaiError, Result};

/// `100/d · Σ |β̂ⱼ - β*ⱼ| / (|β*ⱼ| + c)`.
pub fn mape(beta_hat: &[f64], beta_star: &[f64], c: f64) -> Result<f64> {
    if beta_hat.len() != beta_star.len() || beta_hat.is_empty() {
        return Err(GaiError::dim("mape needs two non-empty vectors of equal length"));
    }
    if !(c >= 0.0) {
        return Err(GaiError::config(format!("offset c must be nonnegative, got {c}")));
    }
    if c == 0.0 && beta_star.contains(&0.0) {
        return Err(GaiError::Domain("c = 0 with a zero true coefficient".into()));
    }
    let s: f64 = beta_hat.iter().zip(beta_star).map(|(h, s)| (h - s).abs() / (s.abs() + c)).sum();
    Ok(100.0 * s / beta_hat.len() as f64)
}

pub fn covers(lower: f64, upper: f64, truth: f64) -> bool {
    lower <= truth && truth <= upper
}

/// Interval-level outcome relative to the truth.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecisionError {
    None,
    /// Excludes the truth and both bounds have the opposite sign.
    WrongSign,
    /// Excludes the truth and spans zero.
    SpansZero,
}

pub fn classify_interval(lower: f64, upper: f64, truth: f64) -> DecisionError {
    if covers(lower, upper, truth) {
        DecisionError::None
    } else if lower <= 0.0 && upper >= 0.0 {
        DecisionError::SpansZero
    } else if (lower > 0.0 && truth < 0.0) || (upper < 0.0 && truth > 0.0) {
        DecisionError::WrongSign
    } else {
        DecisionError::None
    }
}

/// One trial's intervals for an estimator.
#[derive(Debug, Clone, Copy)]
pub struct Interval<'a> {
    pub lower: &'a [f64],
    pub upper: &'a [f64],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Coverage {
    /// Percent of (trial, coefficient) cells covering the truth.
    pub pooled: f64,
    pub per_coefficient: Vec<f64>,
    pub mean_width: f64,
}

pub fn coverage_and_width(intervals: &[Interval<'_>], beta_star: &[f64]) -> Result<Coverage> {
    check_intervals(intervals, beta_star)?;
    let d = beta_star.len();
    let mut hits = vec![0usize; d];
    let mut width = 0.0;
    for iv in intervals {
        for j in 0..d {
            if covers(iv.lower[j], iv.upper[j], beta_star[j]) {
                hits[j] += 1;
            }
            width += iv.upper[j] - iv.lower[j];
        }
    }
    let t = intervals.len() as f64;
    Ok(Coverage {
        pooled: 100.0 * hits.iter().sum::<usize>() as f64 / (t * d as f64),
        per_coefficient: hits.iter().map(|h| 100.0 * *h as f64 / t).collect(),
        mean_width: width / (t * d as f64),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecisionErrors {
    /// Percent of intervals of type (i).
    pub wrong_sign: f64,
    /// Percent of intervals of type (ii).
    pub spans_zero: f64,
}

pub fn decision_errors(intervals: &[Interval<'_>], beta_star: &[f64]) -> Result<DecisionErrors> {
    check_intervals(intervals, beta_star)?;
    let (mut i, mut ii) = (0usize, 0usize);
    for iv in intervals {
        for (j, b) in beta_star.iter().enumerate() {
            match classify_interval(iv.lower[j], iv.upper[j], *b) {
                DecisionError::WrongSign => i += 1,
                DecisionError::SpansZero => ii += 1,
                DecisionError::None => {}
            }
        }
    }
    let cells = (intervals.len() * beta_star.len()) as f64;
    Ok(DecisionErrors { wrong_sign: 100.0 * i as f64 / cells, spans_zero: 100.0 * ii as f64 / cells })
}

fn check_intervals(intervals: &[Interval<'_>], beta_star: &[f64]) -> Result<()> {
    if intervals.is_empty() {
        return Err(GaiError::input("no intervals to summarize"));
    }
    let d = beta_star.len();
    if intervals.iter().any(|iv| iv.lower.len() != d || iv.upper.len() != d) {
        return Err(GaiError::dim("interval length does not match the true coefficients"));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mape_examples() {
        let m = mape(&[1.1, 2.2], &[1.0, 2.0], 1.0).unwrap();
        assert!((m - 50.0 * (0.1 / 2.0 + 0.2 / 3.0)).abs() < 1e-12);
        assert_eq!(mape(&[1.0, 2.0], &[1.0, 2.0], 1.0).unwrap(), 0.0);
        assert_eq!(mape(&[2.0], &[1.0], 0.0).unwrap(), 100.0);
        assert!(mape(&[2.0], &[0.0], 0.0).is_err());
    }

    #[test]
    fn interval_classes() {
        assert_eq!(classify_interval(0.0, 2.0, 1.0), DecisionError::None);
        assert_eq!(classify_interval(0.2, 0.8, -0.5), DecisionError::WrongSign);
        assert_eq!(classify_interval(-0.1, 0.3, 0.5), DecisionError::SpansZero);
        assert_eq!(classify_interval(0.2, 0.8, 0.5), DecisionError::None);
        assert_eq!(classify_interval(0.2, 0.8, 1.5), DecisionError::None);
    }

    #[test]
    fn counting() {
        let lo: Vec<[f64; 1]> = (0..100).map(|i| if i < 90 { [0.0] } else { [2.0] }).collect();
        let hi: Vec<[f64; 1]> = (0..100).map(|i| if i < 90 { [2.0] } else { [3.0] }).collect();
        let ivs: Vec<Interval> = lo.iter().zip(&hi).map(|(l, h)| Interval { lower: l, upper: h }).collect();
        let c = coverage_and_width(&ivs, &[1.0]).unwrap();
        assert_eq!(c.pooled, 90.0);
        assert!((c.mean_width - 1.9).abs() < 1e-12);
    }
}
