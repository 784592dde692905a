//! Streaming change detection for contexts where the series never ends and
//! rescanning history per datapoint is too expensive.
//!
//! Classic two-sided CUSUM: deviations from a reference mean accumulate in
//! one sum per direction, drained by a slack term, and an alarm fires when a
//! sum crosses the threshold. After an alarm the detector re-baselines on
//! the most recent observations and keeps going.

use std::collections::VecDeque;

use super::ChangeKind;
use crate::Error;

/// Two-sided CUSUM detector state. Single-owner: one stream, one state.
#[derive(Debug, Clone)]
pub struct CusumState {
    mu0: f64,
    kappa: f64,
    h: f64,
    min_segment: usize,
    s_pos: f64,
    s_neg: f64,
    recent: VecDeque<f64>,
}

impl CusumState {
    /// `mu0`: reference mean of the in-control regime. `kappa`: slack per
    /// observation (deviations smaller than this never accumulate).
    /// `h`: alarm threshold, must be positive. `min_segment`: observations
    /// used to re-baseline the reference mean after an alarm.
    pub fn new(mu0: f64, kappa: f64, h: f64, min_segment: usize) -> crate::Result<Self> {
        if !(h > 0.0) {
            return Err(Error::InvalidParameter(
                "cusum threshold h must be positive".into(),
            ));
        }
        if !(kappa >= 0.0) {
            return Err(Error::InvalidParameter(
                "cusum slack kappa must be non-negative".into(),
            ));
        }
        if !mu0.is_finite() {
            return Err(Error::InvalidParameter(
                "cusum reference mean must be finite".into(),
            ));
        }
        if min_segment == 0 {
            return Err(Error::InvalidParameter(
                "cusum min_segment must be at least 1".into(),
            ));
        }
        Ok(CusumState {
            mu0,
            kappa,
            h,
            min_segment,
            s_pos: 0.0,
            s_neg: 0.0,
            recent: VecDeque::with_capacity(min_segment),
        })
    }

    /// Current reference mean.
    pub fn mu0(&self) -> f64 {
        self.mu0
    }

    /// Current accumulated sums (upward, downward).
    pub fn sums(&self) -> (f64, f64) {
        (self.s_pos, self.s_neg)
    }

    /// Feeds one observation; returns the alarm it triggers, if any.
    ///
    /// An upward alarm means the degree rose (a bug landed), a downward one
    /// means it dropped (a fix landed). On alarm both sums reset and the
    /// reference mean becomes the mean of the last `min_segment`
    /// observations. If both sums cross in the same step the larger wins,
    /// with the upward direction breaking an exact tie.
    pub fn step(&mut self, x: f64) -> Option<ChangeKind> {
        if self.recent.len() == self.min_segment {
            self.recent.pop_front();
        }
        self.recent.push_back(x);

        self.s_pos = (self.s_pos + (x - self.mu0 - self.kappa)).max(0.0);
        self.s_neg = (self.s_neg + (self.mu0 - x - self.kappa)).max(0.0);

        let alarm = match (self.s_pos > self.h, self.s_neg > self.h) {
            (false, false) => None,
            (true, false) => Some(ChangeKind::Bug),
            (false, true) => Some(ChangeKind::Fix),
            (true, true) => Some(if self.s_pos >= self.s_neg {
                ChangeKind::Bug
            } else {
                ChangeKind::Fix
            }),
        };
        if alarm.is_some() {
            self.s_pos = 0.0;
            self.s_neg = 0.0;
            self.mu0 = self.recent.iter().sum::<f64>() / self.recent.len() as f64;
        }
        alarm
    }
}
