//! Searching `(alpha, beta)` for a requested relief height.
//!
//! Heights shrink as `alpha` grows. For a fixed `beta` the search brackets the
//! target between consecutive doublings of `alpha` starting at `0.001` and
//! then bisects inside the bracket. When no bracket exists for the current
//! `beta`, or bisection stalls, `beta` is doubled (starting from `1e-5`).
//! The span being matched is the control span before detail, aimed at
//! `(1 - gamma) h0` so the enhanced relief lands near `h0`.

use serde::{Deserialize, Serialize};

use crate::compression::MIN_ALPHA;
use crate::error::{ReliefError, Result};

pub const DEFAULT_MAX_SOLVES: usize = 200;
/// Relative tolerance on the span.
pub const TOLERANCE: f64 = 0.01;
/// Successive spans closer than this fraction of `h0` count as a stall.
pub const STALL: f64 = 0.001;
pub const ALPHA_START: f64 = 0.001;
/// Doublings of `alpha` covered by a bracket search.
pub const ALPHA_DOUBLINGS: i32 = 20;
pub const BETA_START: f64 = 1e-5;
/// `beta` used when probing the largest reachable span.
const BETA_PROBE: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TargetRequest {
    pub h0: f64,
    #[serde(default = "default_max_solves")]
    pub max_solves: usize,
}

fn default_max_solves() -> usize {
    DEFAULT_MAX_SOLVES
}

impl TargetRequest {
    pub fn new(h0: f64) -> Self {
        Self {
            h0,
            max_solves: DEFAULT_MAX_SOLVES,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TargetProgress {
    pub solves: usize,
    pub alpha: f64,
    pub beta: f64,
    pub span: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TargetOutcome {
    pub alpha: f64,
    pub beta: f64,
    /// Control span before detail.
    pub span: f64,
    /// `span / (1 - gamma)`, the height the request is measured against.
    pub height: f64,
    pub solves: usize,
}

struct Search<F, P> {
    span_at: F,
    progress: P,
    target: f64,
    h0: f64,
    gamma: f64,
    solves: usize,
    max_solves: usize,
    best: Option<(f64, f64, f64)>,
}

enum Step {
    Done(TargetOutcome),
    Span(f64),
}

impl<F, P> Search<F, P>
where
    F: FnMut(f64, f64) -> Result<f64>,
    P: FnMut(TargetProgress),
{
    fn rel(&self, s: f64) -> f64 {
        (s - self.target).abs() / self.target
    }

    fn eval(&mut self, alpha: f64, beta: f64) -> Result<Step> {
        if self.solves >= self.max_solves {
            return Err(self.unreachable());
        }
        let s = (self.span_at)(alpha, beta)?;
        self.solves += 1;
        if self.best.is_none_or(|(_, _, b)| self.rel(s) < self.rel(b)) {
            self.best = Some((alpha, beta, s));
        }
        (self.progress)(TargetProgress {
            solves: self.solves,
            alpha,
            beta,
            span: s,
        });
        if self.rel(s) <= TOLERANCE {
            return Ok(Step::Done(TargetOutcome {
                alpha,
                beta,
                span: s,
                height: s / (1.0 - self.gamma),
                solves: self.solves,
            }));
        }
        Ok(Step::Span(s))
    }

    fn unreachable(&self) -> ReliefError {
        let (a, b, s) = self.best.unwrap_or((f64::NAN, f64::NAN, 0.0));
        ReliefError::TargetUnreachable {
            best_alpha: a,
            best_beta: b,
            best_span: s / (1.0 - self.gamma),
        }
    }
}

macro_rules! step {
    ($e:expr) => {
        match $e? {
            Step::Done(o) => return Ok(o),
            Step::Span(s) => s,
        }
    };
}

/// Runs the search. `span_at(alpha, beta)` returns the control span before
/// detail; `start` is tried first.
pub fn search_height<F, P>(
    req: &TargetRequest,
    gamma: f64,
    start: (f64, f64),
    span_at: F,
    progress: P,
) -> Result<TargetOutcome>
where
    F: FnMut(f64, f64) -> Result<f64>,
    P: FnMut(TargetProgress),
{
    if !(req.h0 > 0.0 && req.h0.is_finite()) {
        return Err(ReliefError::InvalidParams(format!(
            "target height {} must be > 0",
            req.h0
        )));
    }
    if !(0.0..1.0).contains(&gamma) {
        return Err(ReliefError::InvalidParams(format!(
            "gamma {gamma} must be in [0, 1)"
        )));
    }
    let mut s = Search {
        span_at,
        progress,
        target: (1.0 - gamma) * req.h0,
        h0: req.h0,
        gamma,
        solves: 0,
        max_solves: req.max_solves,
        best: None,
    };
    let target = s.target;

    step!(s.eval(start.0, start.1));
    let top = step!(s.eval(MIN_ALPHA, BETA_PROBE));
    if top < target {
        return Err(s.unreachable());
    }

    let alpha_at = |j: i32| ALPHA_START * 2f64.powi(j);
    let mut beta = BETA_START;
    loop {
        if step!(s.eval(ALPHA_START, beta)) < target {
            beta *= 2.0;
            continue;
        }
        if step!(s.eval(alpha_at(ALPHA_DOUBLINGS), beta)) > target {
            beta *= 2.0;
            continue;
        }
        // Smallest doubling whose span falls below the target.
        let (mut j_hi_above, mut j_below) = (0, ALPHA_DOUBLINGS);
        while j_below - j_hi_above > 1 {
            let mid = (j_hi_above + j_below) / 2;
            if step!(s.eval(alpha_at(mid), beta)) < target {
                j_below = mid;
            } else {
                j_hi_above = mid;
            }
        }
        let (mut lo, mut hi) = (alpha_at(j_below) / 2.0, alpha_at(j_below));
        let mut prev: Option<f64> = None;
        loop {
            let mid = 0.5 * (lo + hi);
            let span = step!(s.eval(mid, beta));
            if span < target {
                hi = mid;
            } else {
                lo = mid;
            }
            if prev.is_some_and(|p| (span - p).abs() / s.h0 <= STALL) {
                break;
            }
            prev = Some(span);
        }
        beta *= 2.0;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Decreasing in alpha; beta widens the reachable range.
    fn model(alpha: f64, beta: f64) -> f64 {
        let x = (1.0 / alpha).powf(beta.min(2.0));
        0.1 + 0.9 * (1.0 - (-x).exp())
    }

    #[test]
    fn converges_on_model() {
        for h in [0.2, 0.4, 0.6, 0.8, 0.95] {
            let o = search_height(
                &TargetRequest::new(h),
                0.0,
                (4.0, 0.01),
                |a, b| Ok(model(a, b)),
                |_| {},
            )
            .unwrap();
            assert!((o.height - h).abs() / h <= 0.01, "{h} {o:?}");
            assert_eq!(model(o.alpha, o.beta), o.span);
            assert!(o.solves <= 60, "{h} {}", o.solves);
        }
    }

    #[test]
    fn gamma_budget() {
        let o = search_height(
            &TargetRequest::new(0.5),
            0.1,
            (4.0, 0.01),
            |a, b| Ok(model(a, b)),
            |_| {},
        )
        .unwrap();
        assert!((o.span - 0.45).abs() / 0.45 <= 0.01);
        assert!((o.height - 0.5).abs() / 0.5 <= 0.01);
    }

    #[test]
    fn start_already_matches() {
        let h = model(4.0, 0.01);
        let o = search_height(
            &TargetRequest::new(h),
            0.0,
            (4.0, 0.01),
            |a, b| Ok(model(a, b)),
            |_| {},
        )
        .unwrap();
        assert_eq!(o.solves, 1);
        assert_eq!((o.alpha, o.beta), (4.0, 0.01));
    }

    #[test]
    fn too_tall() {
        let e = search_height(
            &TargetRequest::new(5.0),
            0.0,
            (4.0, 0.01),
            |a, b| Ok(model(a, b)),
            |_| {},
        )
        .unwrap_err();
        assert_eq!(e.code(), "TargetUnreachable");
    }

    #[test]
    fn budget_exhausted() {
        // Flat response below the target except at the reachability probe.
        let f = |a: f64, _b: f64| Ok(if a == MIN_ALPHA { 1.0 } else { 0.2 });
        let req = TargetRequest {
            h0: 0.5,
            max_solves: 30,
        };
        let mut calls = 0;
        let e = search_height(&req, 0.0, (4.0, 0.01), f, |_| calls += 1).unwrap_err();
        assert_eq!(e.code(), "TargetUnreachable");
        assert_eq!(calls, 30);
    }

    #[test]
    fn bad_requests() {
        assert!(search_height(
            &TargetRequest::new(0.0),
            0.0,
            (1.0, 1.0),
            |_, _| Ok(1.0),
            |_| {}
        )
        .is_err());
        assert!(search_height(
            &TargetRequest::new(1.0),
            1.0,
            (1.0, 1.0),
            |_, _| Ok(1.0),
            |_| {}
        )
        .is_err());
    }
}
