//! Layer-rate assignment for progressive transmission with ARQ feedback.
//!
//! With `n` successive-refinement layers at multiplexing gains
//! `r_1, ..., r_n` and cumulative gains `R_k = r_1 + ... + r_k`, the scheme
//! achieves the exponent
//!
//! ```text
//! Delta_n = min_{0 <= k <= n} d*(R_{k+1}) + b R_k,   R_0 = 0, d*(R_{n+1}) = 0.
//! ```
//!
//! The allocation is built from the supporting line of slope `-b` with
//! intercept `c`, on which every point `(R_k, d*(R_{k+1}))` is placed. With
//! `n = 2m`, a forward pass walks down from the y-axis:
//!
//! ```text
//! d*(R_1) = c,   d*(R_{k+1}) = c - b R_k      (k = 1 .. m-1)
//! ```
//!
//! and a backward pass walks in from the x-intercept:
//!
//! ```text
//! R_n = c / b,   R_k = (c - d*(R_{k+1})) / b  (k = n-1 .. m+1)
//! ```
//!
//! Both passes approach the corner `j` where the line touches the curve, so
//! `Delta_n = d*(R_{m+1}) + b R_m` tends to `c` as `n` grows. The rate
//! `r_{m+1} = R_{m+1} - R_m` bridges the two passes and carries the finite-`n`
//! deficit.
//!
//! When `b` equals a segment slope the line coincides with that segment and
//! both passes stall at its end corners. The line is then tilted to slope
//! `-(b - eps)`.

use serde::Serialize;

use crate::dmt::{AntennaConfig, DmtCurve};
use crate::error::{domain, Error, Result};
use crate::exponent::{delta_line, is_tie};

/// Relative tie perturbation used when the caller does not pick one.
pub const DEFAULT_RELATIVE_EPS: f64 = 1e-6;

const MAX_EPS_RETRIES: u32 = 32;

/// Slack allowed on rounding when checking monotone cumulative gains.
const ROUNDING_SLACK: f64 = 1e-9;

/// Per-layer multiplexing gains for an `n`-layer scheme.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LayerAllocation {
    pub cfg: AntennaConfig,
    /// Bandwidth ratio the scheme operates at.
    pub b: f64,
    pub n: usize,
    /// Slope perturbation applied to the construction (0 without a tie).
    pub eps: f64,
    /// Intercept of the (possibly tilted) supporting line.
    pub intercept: f64,
    /// Corner the supporting line rests on.
    pub touch_corner: u32,
    pub rates: Vec<f64>,
    pub cumulative: Vec<f64>,
    /// Finite-`n` exponent, evaluated at the true `b`.
    pub delta_n: f64,
}

impl LayerAllocation {
    /// Slope magnitude the construction actually used.
    pub fn b_eff(&self) -> f64 {
        self.b - self.eps
    }

    /// `m = n / 2`.
    pub fn half(&self) -> usize {
        self.n / 2
    }
}

/// `eps` used by [`assign_layers_default`].
pub fn default_eps(b: f64) -> f64 {
    DEFAULT_RELATIVE_EPS * b
}

/// Builds the two-pass allocation for `n` layers (even, `>= 2`).
///
/// `eps` is only applied when `b` ties with a DMT segment slope; if `b - eps`
/// ties again (or drops to zero) `eps` is halved, a bounded number of times.
pub fn assign_layers(cfg: AntennaConfig, b: f64, n: usize, eps: f64) -> Result<LayerAllocation> {
    if !(b > 0.0) || !b.is_finite() {
        return Err(domain(format!(
            "bandwidth ratio must be positive (got {b})"
        )));
    }
    if n < 2 || !n.is_multiple_of(2) {
        return Err(domain(format!(
            "number of layers must be even and >= 2 (got {n})"
        )));
    }
    if !(eps > 0.0) || !eps.is_finite() {
        return Err(domain(format!("eps must be positive (got {eps})")));
    }

    let applied = if is_tie(cfg, b) {
        let mut eps = eps;
        let mut retries = 0;
        while b - eps <= 0.0 || is_tie(cfg, b - eps) {
            retries += 1;
            if retries > MAX_EPS_RETRIES {
                return Err(domain(format!(
                    "could not break the slope tie at b={b} by perturbation"
                )));
            }
            eps /= 2.0;
        }
        eps
    } else {
        0.0
    };
    let b_eff = b - applied;

    let curve = DmtCurve::new(cfg);
    let line = delta_line(cfg, b_eff)?;
    let c = line.intercept;
    let m = n / 2;

    // Forward iterates stay at or left of j and backward ones at or right of
    // it. Past j either recursion expands, so rounding across j is clamped.
    let j = line.touch_corner as f64;
    let mut cumulative = vec![0.0; n];
    cumulative[0] = curve.gain_at(c).min(j);
    for k in 1..m {
        let target = (c - b_eff * cumulative[k - 1]).max(0.0);
        cumulative[k] = curve.gain_at(target).min(j);
    }
    cumulative[n - 1] = (c / b_eff).max(j);
    for k in (m..n - 1).rev() {
        cumulative[k] = ((c - curve.value_at(cumulative[k + 1])) / b_eff).max(j);
    }

    let mut rates = Vec::with_capacity(n);
    let mut prev = 0.0;
    for (k, &cum) in cumulative.iter().enumerate() {
        let r = cum - prev;
        if r < -ROUNDING_SLACK {
            return Err(Error::Integrity(format!(
                "negative gain {r} for layer {} (b={b}, n={n})",
                k + 1
            )));
        }
        rates.push(r.max(0.0));
        prev = cum;
    }

    let mut alloc = LayerAllocation {
        cfg,
        b,
        n,
        eps: applied,
        intercept: c,
        touch_corner: line.touch_corner,
        rates,
        cumulative,
        delta_n: 0.0,
    };
    alloc.delta_n = finite_layer_exponent(&alloc, &curve)?;
    Ok(alloc)
}

/// [`assign_layers`] with `eps = 1e-6 b`.
pub fn assign_layers_default(cfg: AntennaConfig, b: f64, n: usize) -> Result<LayerAllocation> {
    assign_layers(cfg, b, n, default_eps(b))
}

/// [`assign_layers`] with `eps` chosen for this `n`.
///
/// Near a tie the passes contract by a factor close to `1 - eps / b` per
/// layer, so a tiny `eps` leaves most of the tied segment to the bridge
/// layer while a large one lowers the line. Candidates `b 2^(-i/8)` down to
/// `b 2^-40` are tried and the one with the largest `delta_n` kept. Without
/// a tie this is the same as [`assign_layers_default`].
pub fn assign_layers_tuned(cfg: AntennaConfig, b: f64, n: usize) -> Result<LayerAllocation> {
    let mut best = assign_layers_default(cfg, b, n)?;
    if !is_tie(cfg, b) {
        return Ok(best);
    }
    for i in 9..=320 {
        let eps = b * f64::powf(2.0, -(i as f64) / 8.0);
        if let Ok(alloc) = assign_layers(cfg, b, n, eps) {
            if alloc.delta_n > best.delta_n {
                best = alloc;
            }
        }
    }
    Ok(best)
}

fn check_consistency(alloc: &LayerAllocation, curve: &DmtCurve) -> Result<()> {
    if curve.config() != alloc.cfg {
        return Err(Error::Integrity(
            "allocation and curve use different antennas".into(),
        ));
    }
    if alloc.rates.len() != alloc.n || alloc.cumulative.len() != alloc.n {
        return Err(Error::Integrity(format!(
            "expected {} layers, found {} rates and {} cumulative gains",
            alloc.n,
            alloc.rates.len(),
            alloc.cumulative.len()
        )));
    }
    let mut sum = 0.0;
    for (k, (&r, &cum)) in alloc.rates.iter().zip(&alloc.cumulative).enumerate() {
        if !(r >= 0.0) {
            return Err(Error::Integrity(format!("layer {} has gain {r}", k + 1)));
        }
        sum += r;
        if (sum - cum).abs() > ROUNDING_SLACK * cum.abs().max(1.0) {
            return Err(Error::Integrity(format!(
                "cumulative gain {cum} at layer {} does not match the rate sum {sum}",
                k + 1
            )));
        }
    }
    Ok(())
}

fn terms_at(cumulative: &[f64], curve: &DmtCurve, b: f64) -> Vec<f64> {
    let n = cumulative.len();
    (0..=n)
        .map(|k| {
            let below = if k == 0 { 0.0 } else { cumulative[k - 1] };
            let next = if k == n {
                0.0
            } else {
                curve.value_at(cumulative[k])
            };
            next + b * below
        })
        .collect()
}

/// The `n + 1` exponents `d*(R_{k+1}) + b R_k`, `k = 0..=n`, at the true `b`.
pub fn exponent_terms(alloc: &LayerAllocation, curve: &DmtCurve) -> Result<Vec<f64>> {
    check_consistency(alloc, curve)?;
    Ok(terms_at(&alloc.cumulative, curve, alloc.b))
}

/// Finite-`n` exponent `min_k d*(R_{k+1}) + b R_k`.
pub fn finite_layer_exponent(alloc: &LayerAllocation, curve: &DmtCurve) -> Result<f64> {
    Ok(exponent_terms(alloc, curve)?
        .into_iter()
        .fold(f64::INFINITY, f64::min))
}

/// Index of the smallest exponent term (first one on ties within `tol`).
pub fn minimizing_term(alloc: &LayerAllocation, curve: &DmtCurve, tol: f64) -> Result<usize> {
    let terms = exponent_terms(alloc, curve)?;
    let min = terms.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(terms.iter().position(|&t| t <= min + tol).unwrap_or(0))
}

/// Residual of one equal-exponent equation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Residual {
    /// Layer index `k` of the equation (1-based).
    pub k: usize,
    pub value: f64,
}

/// Residuals of the equal-exponent system
///
/// ```text
/// d*(R_{k+1}) + b r_k - d*(R_k) = 0   (k = 1 .. n-1)
/// b r_n - d*(R_n) = 0
/// ```
///
/// evaluated at the slope the construction used. Equation `k` states that
/// exponent terms `k - 1` and `k` agree. Term `m` is the one the bridge
/// layer lowers, so equations `m` and `m + 1` are reported separately.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EqualExponentCheck {
    pub equations: Vec<Residual>,
    pub bridge: Vec<Residual>,
}

impl EqualExponentCheck {
    pub fn max_abs(&self) -> f64 {
        self.equations
            .iter()
            .map(|r| r.value.abs())
            .fold(0.0, f64::max)
    }
}

pub fn verify_equal_exponents(
    alloc: &LayerAllocation,
    curve: &DmtCurve,
) -> Result<EqualExponentCheck> {
    check_consistency(alloc, curve)?;
    let b = alloc.b_eff();
    let n = alloc.n;
    let m = alloc.half();
    let d = |k: usize| curve.value_at(alloc.cumulative[k - 1]);
    let mut check = EqualExponentCheck {
        equations: Vec::new(),
        bridge: Vec::new(),
    };
    for k in 1..=n {
        let value = if k < n {
            d(k + 1) + b * alloc.rates[k - 1] - d(k)
        } else {
            b * alloc.rates[n - 1] - d(n)
        };
        let res = Residual { k, value };
        if k == m || k == m + 1 {
            check.bridge.push(res);
        } else {
            check.equations.push(res);
        }
    }
    Ok(check)
}

/// `(n, Delta_n)` for each `n` in `layer_counts`, using
/// [`assign_layers_tuned`].
pub fn convergence_sweep(
    cfg: AntennaConfig,
    b: f64,
    layer_counts: &[usize],
) -> Result<Vec<(usize, f64)>> {
    layer_counts
        .iter()
        .map(|&n| Ok((n, assign_layers_tuned(cfg, b, n)?.delta_n)))
        .collect()
}

/// Best gain for a single layer: `b r = d*(r)`, the point where the line
/// `b r` through the origin crosses the DMT curve.
pub fn single_layer_gain(cfg: AntennaConfig, b: f64) -> Result<f64> {
    if !(b > 0.0) || !b.is_finite() {
        return Err(domain(format!(
            "bandwidth ratio must be positive (got {b})"
        )));
    }
    let curve = DmtCurve::new(cfg);
    // b r - d*(r) is strictly increasing; it is linear between corners.
    let gap = |r: f64| b * r - curve.value_at(r);
    let corner = (1..=curve.max_gain())
        .find(|&k| gap(k as f64) >= 0.0)
        .unwrap_or(curve.max_gain());
    let (lo, hi) = ((corner - 1) as f64, corner as f64);
    let (g_lo, g_hi) = (gap(lo), gap(hi));
    Ok(lo + (hi - lo) * (-g_lo) / (g_hi - g_lo))
}
