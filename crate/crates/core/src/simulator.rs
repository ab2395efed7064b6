//! Finite-SNR distortion of the layered ARQ scheme.
//!
//! Each layer `k` is channel coded at `R_k = r_k log2(snr)` bits per channel
//! use and the transmitter moves to the next layer as soon as the receiver
//! acknowledges the current one. Over a block with capacity `C`, layer `k`
//! takes a fraction `R_k / C` of the block, so exactly the first `k` layers
//! get through when `R_1 + ... + R_k <= C < R_1 + ... + R_{k+1}`. Decoding `k`
//! layers leaves distortion `D_k = 2^(-b (R_1 + ... + R_k))`.

use serde::Serialize;

use crate::channel::{capacity_unchecked, outage_prob_siso_exact, run_chunks, sample_channel};
use crate::dmt::AntennaConfig;
use crate::error::{domain, Error, Result};
use crate::layering::LayerAllocation;
use crate::stats::{db_to_linear, fit_line};

/// Number of layers decoded within a block of capacity `capacity_bpcu`: the
/// largest `k` whose cumulative rate does not exceed the capacity.
pub fn decoded_layers(capacity_bpcu: f64, rates_bpcu: &[f64]) -> usize {
    let mut total = 0.0;
    for (k, &r) in rates_bpcu.iter().enumerate() {
        total += r;
        if total > capacity_bpcu {
            return k;
        }
    }
    rates_bpcu.len()
}

/// `D_k = 2^(-b (R_1 + ... + R_k))`, with `D_0 = 1`.
pub fn distortion_of(k: usize, rates_bpcu: &[f64], b: f64) -> f64 {
    let total: f64 = rates_bpcu[..k].iter().sum();
    (-b * total).exp2()
}

/// Channel model for [`run_sim`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Oracle {
    /// Monte Carlo over channel draws.
    Mc,
    /// Closed-form event probabilities (1x1 only).
    Exact,
}

/// Simulation parameters.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimConfig {
    pub cfg: AntennaConfig,
    pub b: f64,
    /// Multiplexing gains `r_1..r_n` of the layers.
    pub gains: Vec<f64>,
    pub snr_grid_db: Vec<f64>,
    /// Channel draws per grid point (ignored by the exact oracle).
    pub trials: u64,
    pub seed: u64,
    pub oracle: Oracle,
}

impl SimConfig {
    pub fn from_allocation(
        alloc: &LayerAllocation,
        snr_grid_db: Vec<f64>,
        trials: u64,
        seed: u64,
        oracle: Oracle,
    ) -> Self {
        SimConfig {
            cfg: alloc.cfg,
            b: alloc.b,
            gains: alloc.rates.clone(),
            snr_grid_db,
            trials,
            seed,
            oracle,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.b > 0.0) || !self.b.is_finite() {
            return Err(domain(format!(
                "bandwidth ratio must be positive (got {})",
                self.b
            )));
        }
        if self.gains.is_empty() {
            return Err(domain("at least one layer is needed"));
        }
        if let Some(g) = self.gains.iter().find(|g| !(**g >= 0.0) || !g.is_finite()) {
            return Err(domain(format!(
                "layer gains must be finite and >= 0 (got {g})"
            )));
        }
        if let Some(db) = self
            .snr_grid_db
            .iter()
            .find(|&&db| !(db > 0.0) || !db.is_finite())
        {
            return Err(domain(format!(
                "snr must exceed 0 dB so that log2(snr) > 0 (got {db} dB)"
            )));
        }
        match self.oracle {
            Oracle::Exact if !self.cfg.is_siso() => {
                Err(domain("the exact oracle needs a 1x1 link"))
            }
            Oracle::Mc if self.trials == 0 => Err(domain("trials must be >= 1")),
            _ => Ok(()),
        }
    }
}

/// Result at one SNR.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PointRecord {
    pub snr_db: f64,
    pub snr: f64,
    pub mean_distortion: f64,
    /// Standard error of the mean; zero for exact values.
    pub std_error: f64,
    /// Probability of decoding exactly `k` layers, `k = 0..=n`.
    pub layer_probabilities: Vec<f64>,
    /// Draws that decoded exactly `k` layers (Monte Carlo only, else empty).
    pub layer_counts: Vec<u64>,
    pub trials: u64,
}

impl PointRecord {
    /// `Pr{decoded >= k}` for `k = 0..=n`.
    pub fn tail_probabilities(&self) -> Vec<f64> {
        let mut tail: Vec<f64> = self
            .layer_probabilities
            .iter()
            .rev()
            .scan(0.0, |acc, p| {
                *acc += p;
                Some(*acc)
            })
            .collect();
        tail.reverse();
        tail
    }
}

/// Per-SNR distortion plus the fitted exponent.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DistortionReport {
    pub points: Vec<PointRecord>,
    /// Least-squares slope of `-log10 E[D]` against `log10 snr`, when the
    /// grid has at least three points.
    pub fitted_exponent: Option<f64>,
    pub fit_residuals: Vec<f64>,
}

fn simulate_point(sc: &SimConfig, index: usize, snr_db: f64) -> PointRecord {
    let snr = db_to_linear(snr_db);
    let rates: Vec<f64> = sc.gains.iter().map(|g| g * snr.log2()).collect();
    let n = rates.len();
    let distortions: Vec<f64> = (0..=n).map(|k| distortion_of(k, &rates, sc.b)).collect();
    match sc.oracle {
        Oracle::Exact => {
            // Pr{A_k} = F(Rbar_{k+1}) - F(Rbar_k) with F the outage cdf,
            // written as exp(-t_k) (1 - exp(-(t_{k+1} - t_k))) to keep the
            // small differences accurate.
            let mut thresholds = Vec::with_capacity(n + 1);
            let mut total = 0.0;
            thresholds.push(0.0);
            for r in &rates {
                total += r;
                thresholds.push((total * std::f64::consts::LN_2).exp_m1() / snr);
            }
            let probs: Vec<f64> = (0..=n)
                .map(|k| {
                    let survive = (-thresholds[k]).exp();
                    if k == n {
                        survive
                    } else {
                        survive * -(-(thresholds[k + 1] - thresholds[k])).exp_m1()
                    }
                })
                .collect();
            debug_assert!({
                let p_n = 1.0 - outage_prob_siso_exact(snr, total);
                (probs[n] - p_n).abs() < 1e-12
            });
            let mean = probs.iter().zip(&distortions).map(|(p, d)| p * d).sum();
            PointRecord {
                snr_db,
                snr,
                mean_distortion: mean,
                std_error: 0.0,
                layer_probabilities: probs,
                layer_counts: Vec::new(),
                trials: 0,
            }
        }
        Oracle::Mc => {
            let alpha = snr / sc.cfg.m_t() as f64;
            let stream_base = (index as u64) << 32;
            let chunks = run_chunks(sc.trials, sc.seed, stream_base, |rng, count| {
                let mut counts = vec![0u64; n + 1];
                for _ in 0..count {
                    let cap = capacity_unchecked(&sample_channel(sc.cfg, rng), alpha);
                    counts[decoded_layers(cap, &rates)] += 1;
                }
                counts
            });
            let mut counts = vec![0u64; n + 1];
            for chunk in chunks {
                for (total, c) in counts.iter_mut().zip(chunk) {
                    *total += c;
                }
            }
            let trials = sc.trials as f64;
            let probs: Vec<f64> = counts.iter().map(|&c| c as f64 / trials).collect();
            let mean: f64 = probs.iter().zip(&distortions).map(|(p, d)| p * d).sum();
            let second: f64 = probs.iter().zip(&distortions).map(|(p, d)| p * d * d).sum();
            let var = (second - mean * mean).max(0.0) * trials / (trials - 1.0).max(1.0);
            PointRecord {
                snr_db,
                snr,
                mean_distortion: mean,
                std_error: (var / trials).sqrt(),
                layer_probabilities: probs,
                layer_counts: counts,
                trials: sc.trials,
            }
        }
    }
}

/// Average distortion of the layered scheme at every grid point.
pub fn run_sim(sc: &SimConfig) -> Result<DistortionReport> {
    sc.validate()?;
    let points: Vec<PointRecord> = sc
        .snr_grid_db
        .iter()
        .enumerate()
        .map(|(i, &db)| simulate_point(sc, i, db))
        .collect();
    let mut report = DistortionReport {
        points,
        fitted_exponent: None,
        fit_residuals: Vec::new(),
    };
    if report.points.len() >= 3 {
        let (slope, residuals) = fit_exponent(&report)?;
        report.fitted_exponent = Some(slope);
        report.fit_residuals = residuals;
    }
    Ok(report)
}

/// Slope of `-log10 E[D]` against `log10 snr` and the per-point residuals.
pub fn fit_exponent(report: &DistortionReport) -> Result<(f64, Vec<f64>)> {
    if report.points.len() < 3 {
        return Err(domain(
            "fitting an exponent needs at least three grid points",
        ));
    }
    if let Some(p) = report.points.iter().find(|p| !(p.mean_distortion > 0.0)) {
        return Err(Error::Integrity(format!(
            "non-positive mean distortion {} at {} dB",
            p.mean_distortion, p.snr_db
        )));
    }
    let x: Vec<f64> = report.points.iter().map(|p| p.snr.log10()).collect();
    let y: Vec<f64> = report
        .points
        .iter()
        .map(|p| -p.mean_distortion.log10())
        .collect();
    let fit = fit_line(&x, &y).ok_or_else(|| domain("grid points must have distinct snr"))?;
    Ok((fit.slope, fit.residuals))
}
