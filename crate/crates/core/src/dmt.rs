//! The diversity–multiplexing tradeoff of an i.i.d. Rayleigh block-fading
//! MIMO channel.
//!
//! The optimal tradeoff `d*(r)` is the piecewise-linear curve through the
//! integer corners `(k, (m_t - k)(m_r - k))` for `k = 0..=min(m_t, m_r)`.
//! Beyond full multiplexing the curve is extended by `d*(r) = 0`.

use serde::Serialize;

use crate::error::{domain, Result};

/// Transmit/receive antenna counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub struct AntennaConfig {
    m_t: u32,
    m_r: u32,
}

impl AntennaConfig {
    pub fn new(m_t: u32, m_r: u32) -> Result<Self> {
        if m_t == 0 || m_r == 0 {
            return Err(domain(format!(
                "antenna counts must be positive (got m_t={m_t}, m_r={m_r})"
            )));
        }
        Ok(AntennaConfig { m_t, m_r })
    }

    /// Single-antenna link.
    pub fn siso() -> Self {
        AntennaConfig { m_t: 1, m_r: 1 }
    }

    pub fn m_t(&self) -> u32 {
        self.m_t
    }

    pub fn m_r(&self) -> u32 {
        self.m_r
    }

    /// Degrees of freedom, `min(m_t, m_r)`.
    pub fn m_min(&self) -> u32 {
        self.m_t.min(self.m_r)
    }

    pub fn m_max(&self) -> u32 {
        self.m_t.max(self.m_r)
    }

    /// Maximal diversity `m_t * m_r`.
    pub fn full_diversity(&self) -> u32 {
        self.m_t * self.m_r
    }

    pub fn is_siso(&self) -> bool {
        self.m_t == 1 && self.m_r == 1
    }
}

/// A DMT corner `(k, d*(k))`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Corner {
    pub gain: u32,
    pub diversity: u32,
}

/// Piecewise-linear optimal DMT curve, stored as its integer corners.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DmtCurve {
    cfg: AntennaConfig,
    corners: Vec<Corner>,
}

impl DmtCurve {
    pub fn new(cfg: AntennaConfig) -> Self {
        let corners = (0..=cfg.m_min())
            .map(|k| Corner {
                gain: k,
                diversity: (cfg.m_t() - k) * (cfg.m_r() - k),
            })
            .collect();
        DmtCurve { cfg, corners }
    }

    pub fn config(&self) -> AntennaConfig {
        self.cfg
    }

    pub fn corners(&self) -> &[Corner] {
        &self.corners
    }

    /// Largest multiplexing gain on the curve, `min(m_t, m_r)`.
    pub fn max_gain(&self) -> u32 {
        self.cfg.m_min()
    }

    /// `d*(r)`. Negative or non-finite `r` is rejected.
    pub fn eval(&self, r: f64) -> Result<f64> {
        if !(r >= 0.0) || r.is_nan() {
            return Err(domain(format!("multiplexing gain must be >= 0 (got {r})")));
        }
        Ok(self.value_at(r))
    }

    /// `d*(r)` for `r >= 0`, without argument checks.
    pub(crate) fn value_at(&self, r: f64) -> f64 {
        let last = self.max_gain();
        if r >= last as f64 {
            return 0.0;
        }
        // r lies on segment (k, k + 1) with k < m_min.
        let k = (r.floor() as usize).min(last as usize - 1);
        let left = self.corners[k].diversity as f64;
        let right = self.corners[k + 1].diversity as f64;
        let t = r - k as f64;
        left + (right - left) * t
    }

    /// The unique `r` in `[0, m_min]` with `d*(r) = d`.
    pub fn invert(&self, d: f64) -> Result<f64> {
        let top = self.cfg.full_diversity() as f64;
        if !(0.0..=top).contains(&d) {
            return Err(domain(format!(
                "diversity must lie in [0, {top}] (got {d})"
            )));
        }
        Ok(self.gain_at(d))
    }

    pub(crate) fn gain_at(&self, d: f64) -> f64 {
        if d <= 0.0 {
            return self.max_gain() as f64;
        }
        // First segment whose right corner lies at or below d.
        let k = self
            .corners
            .windows(2)
            .position(|w| (w[1].diversity as f64) <= d)
            .unwrap_or(self.corners.len() - 2);
        let left = self.corners[k].diversity as f64;
        let right = self.corners[k + 1].diversity as f64;
        k as f64 + (left - d) / (left - right)
    }

    /// Slopes of the `m_min` segments; segment `k` joins corners `k-1` and
    /// `k` and has slope `-(m_t + m_r - 2k + 1)`.
    pub fn segment_slopes(&self) -> Vec<i64> {
        self.corners
            .windows(2)
            .map(|w| w[1].diversity as i64 - w[0].diversity as i64)
            .collect()
    }
}

/// Convenience wrapper around [`DmtCurve::new`].
pub fn build_dmt(cfg: AntennaConfig) -> DmtCurve {
    DmtCurve::new(cfg)
}
