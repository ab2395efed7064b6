//! Optimal distortion exponent with 1-bit instantaneous feedback.
//!
//! Two routes to the same number:
//!
//! * the closed-form sum `sum_{i=1}^{m_min} min{b, 2i - 1 + m_max - m_min}`
//!   ([`upper_bound_exponent`]);
//! * the highest y-intercept of a line of slope `-b` that stays under the
//!   convex DMT curve ([`delta_line`]). Such a line rests on a corner of the
//!   curve, so the intercept is `min_j d*(j) + b j`.

use serde::Serialize;

use crate::dmt::{AntennaConfig, DmtCurve};
use crate::error::{domain, Result};

/// `|b - s| < TIE_TOLERANCE` for a segment slope magnitude `s` counts as a
/// tie: the supporting line then coincides with a whole DMT segment.
pub const TIE_TOLERANCE: f64 = 1e-9;

/// Supporting line of slope `-b` under the DMT curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DeltaLine {
    pub b: f64,
    /// y-intercept, the distortion exponent.
    pub intercept: f64,
    /// Corner where the line meets the curve (smallest index on ties).
    pub touch_corner: u32,
    pub x_intercept: f64,
    /// `-b` equals the slope of one of the DMT segments.
    pub tie: bool,
}

impl DeltaLine {
    /// Height of the line at multiplexing gain `r`.
    pub fn height(&self, r: f64) -> f64 {
        self.intercept - self.b * r
    }
}

fn check_b(b: f64) -> Result<()> {
    if !(b >= 0.0) || !b.is_finite() {
        return Err(domain(format!(
            "bandwidth ratio must be finite and >= 0 (got {b})"
        )));
    }
    Ok(())
}

/// `sum_{i=1}^{m_min} min{b, 2i - 1 + m_max - m_min}`.
pub fn upper_bound_exponent(cfg: AntennaConfig, b: f64) -> Result<f64> {
    check_b(b)?;
    let offset = (cfg.m_max() - cfg.m_min()) as f64;
    Ok((1..=cfg.m_min())
        .map(|i| b.min(2.0 * i as f64 - 1.0 + offset))
        .sum())
}

/// Whether `b` coincides with one of the segment slope magnitudes of the
/// curve for `cfg`.
pub fn is_tie(cfg: AntennaConfig, b: f64) -> bool {
    let sum = (cfg.m_t() + cfg.m_r()) as f64;
    (1..=cfg.m_min()).any(|k| (b - (sum - 2.0 * k as f64 + 1.0)).abs() < TIE_TOLERANCE)
}

/// Highest supporting line of slope `-b` under the DMT curve.
pub fn delta_line(cfg: AntennaConfig, b: f64) -> Result<DeltaLine> {
    check_b(b)?;
    if b == 0.0 {
        return Err(domain("the supporting line needs b > 0"));
    }
    let curve = DmtCurve::new(cfg);
    let (touch_corner, intercept) = curve
        .corners()
        .iter()
        .map(|c| (c.gain, c.diversity as f64 + b * c.gain as f64))
        .fold((0, f64::INFINITY), |best, cand| {
            if cand.1 < best.1 {
                cand
            } else {
                best
            }
        });
    Ok(DeltaLine {
        b,
        intercept,
        touch_corner,
        x_intercept: intercept / b,
        tie: is_tie(cfg, b),
    })
}

/// Optimal exponent for any `b >= 0`; zero bandwidth gives exponent 0.
pub fn optimal_exponent(cfg: AntennaConfig, b: f64) -> Result<f64> {
    check_b(b)?;
    if b == 0.0 {
        return Ok(0.0);
    }
    Ok(delta_line(cfg, b)?.intercept)
}

/// Corner of the exponent-versus-`b` curve.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Breakpoint {
    pub b: u32,
    pub exponent: u32,
}

/// Breakpoints of the exponent as a function of `b`, ascending in `b`.
///
/// For `k = 0..m_min` the line of slope `-(m_t + m_r - 2k - 1)` runs along
/// DMT segment `k + 1` and meets the y-axis at
/// `(m_t + m_r - 2k - 1)(k + 1) + d*(k + 1)`. The `k = 0` point is the
/// saturation point `(m_t + m_r - 1, m_t m_r)`. Between breakpoints the
/// exponent is linear, it starts at the origin and stays flat after
/// saturation.
pub fn exponent_breakpoints(cfg: AntennaConfig) -> Vec<Breakpoint> {
    let (m_t, m_r) = (cfg.m_t(), cfg.m_r());
    let mut points: Vec<Breakpoint> = (0..cfg.m_min())
        .map(|k| {
            let b = m_t + m_r - (2 * k + 1);
            Breakpoint {
                b,
                exponent: b * (k + 1) + (m_t - k - 1) * (m_r - k - 1),
            }
        })
        .collect();
    points.sort_by_key(|p| p.b);
    points
}

/// Piecewise-linear interpolation through `(0, 0)` and the breakpoints,
/// constant after the last one.
pub fn interpolate_breakpoints(points: &[Breakpoint], b: f64) -> f64 {
    let mut prev = (0.0, 0.0);
    for p in points {
        let (pb, pe) = (p.b as f64, p.exponent as f64);
        if b <= pb {
            return prev.1 + (pe - prev.1) * (b - prev.0) / (pb - prev.0);
        }
        prev = (pb, pe);
    }
    prev.1
}
