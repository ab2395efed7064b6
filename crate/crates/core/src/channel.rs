//! Rayleigh block-fading MIMO channel: sampling, instantaneous capacity and
//! outage probability.
//!
//! All rates and capacities are in bits per channel use.

use num_complex::Complex64;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use crate::dmt::AntennaConfig;
use crate::error::{domain, Result};
use crate::stats::{db_to_linear, fit_line};

/// Trials per independent random stream in Monte Carlo runs. Fixed so that
/// results do not depend on the thread count.
pub const CHUNK_TRIALS: u64 = 1 << 14;

/// `m_r x m_t` complex channel matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelMatrix {
    rows: usize,
    cols: usize,
    entries: Vec<Complex64>,
}

impl ChannelMatrix {
    pub fn from_rows(rows: &[Vec<Complex64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.is_empty() || cols == 0 || rows.iter().any(|r| r.len() != cols) {
            return Err(domain("channel matrix must be a non-empty rectangle"));
        }
        Ok(ChannelMatrix {
            rows: rows.len(),
            cols,
            entries: rows.concat(),
        })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        ChannelMatrix {
            rows,
            cols,
            entries: vec![Complex64::new(0.0, 0.0); rows * cols],
        }
    }

    pub fn identity(dim: usize) -> Self {
        let mut h = Self::zeros(dim, dim);
        for i in 0..dim {
            h.entries[i * dim + i] = Complex64::new(1.0, 0.0);
        }
        h
    }

    /// Receive antennas.
    pub fn rows(&self) -> usize {
        self.rows
    }

    /// Transmit antennas.
    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn entries(&self) -> &[Complex64] {
        &self.entries
    }

    pub fn get(&self, row: usize, col: usize) -> Complex64 {
        self.entries[row * self.cols + col]
    }

    /// Conjugate transpose.
    pub fn adjoint(&self) -> ChannelMatrix {
        let mut entries = Vec::with_capacity(self.entries.len());
        for c in 0..self.cols {
            for r in 0..self.rows {
                entries.push(self.get(r, c).conj());
            }
        }
        ChannelMatrix {
            rows: self.cols,
            cols: self.rows,
            entries,
        }
    }

    /// Gram matrix of the smaller dimension: `H H^†` if `m_r <= m_t`, else
    /// `H^† H`. Row-major, `dim x dim`.
    pub fn small_gram(&self) -> (usize, Vec<Complex64>) {
        let zero = Complex64::new(0.0, 0.0);
        if self.rows <= self.cols {
            let dim = self.rows;
            let mut g = vec![zero; dim * dim];
            for i in 0..dim {
                for j in 0..dim {
                    g[i * dim + j] = (0..self.cols)
                        .map(|k| self.get(i, k) * self.get(j, k).conj())
                        .sum();
                }
            }
            (dim, g)
        } else {
            let dim = self.cols;
            let mut g = vec![zero; dim * dim];
            for i in 0..dim {
                for j in 0..dim {
                    g[i * dim + j] = (0..self.rows)
                        .map(|k| self.get(k, i).conj() * self.get(k, j))
                        .sum();
                }
            }
            (dim, g)
        }
    }
}

/// Draws `H` with i.i.d. `CN(0, 1)` entries: independent real and imaginary
/// parts, each `N(0, 1/2)`.
pub fn sample_channel<R: Rng + ?Sized>(cfg: AntennaConfig, rng: &mut R) -> ChannelMatrix {
    let (rows, cols) = (cfg.m_r() as usize, cfg.m_t() as usize);
    let scale = std::f64::consts::FRAC_1_SQRT_2;
    let entries = (0..rows * cols)
        .map(|_| {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            Complex64::new(re * scale, im * scale)
        })
        .collect();
    ChannelMatrix {
        rows,
        cols,
        entries,
    }
}

/// `log2 det(I + alpha G)` for a Hermitian positive semidefinite `G`, via the
/// Cholesky factor of the positive definite `I + alpha G`.
fn log2_det_shifted(dim: usize, gram: &[Complex64], alpha: f64) -> f64 {
    if dim == 1 {
        return (alpha * gram[0].re).ln_1p() / std::f64::consts::LN_2;
    }
    let mut a: Vec<Complex64> = gram.iter().map(|g| g * alpha).collect();
    for i in 0..dim {
        a[i * dim + i] += 1.0;
    }
    let mut log_det = 0.0;
    for j in 0..dim {
        let mut diag = a[j * dim + j].re;
        for k in 0..j {
            diag -= a[j * dim + k].norm_sqr();
        }
        let l_jj = diag.sqrt();
        log_det += diag.ln();
        a[j * dim + j] = Complex64::new(l_jj, 0.0);
        for i in j + 1..dim {
            let mut v = a[i * dim + j];
            for k in 0..j {
                v -= a[i * dim + k] * a[j * dim + k].conj();
            }
            a[i * dim + j] = v / l_jj;
        }
    }
    log_det / std::f64::consts::LN_2
}

/// Instantaneous capacity `log2 det(I + (snr / m_t) H H^†)`.
pub fn capacity(h: &ChannelMatrix, snr: f64, m_t: u32) -> Result<f64> {
    if !(snr > 0.0) || !snr.is_finite() {
        return Err(domain(format!(
            "snr must be positive and finite (got {snr})"
        )));
    }
    if m_t == 0 {
        return Err(domain("m_t must be positive"));
    }
    if h.entries
        .iter()
        .any(|z| !z.re.is_finite() || !z.im.is_finite())
    {
        return Err(domain("channel matrix has non-finite entries"));
    }
    Ok(capacity_unchecked(h, snr / m_t as f64))
}

pub(crate) fn capacity_unchecked(h: &ChannelMatrix, alpha: f64) -> f64 {
    let (dim, gram) = h.small_gram();
    log2_det_shifted(dim, &gram, alpha).max(0.0)
}

/// Runs `body` on `ceil(trials / CHUNK_TRIALS)` chunks in parallel, each with
/// its own ChaCha stream `stream_base + chunk`, and returns the per-chunk
/// results in chunk order.
pub(crate) fn run_chunks<T, F>(trials: u64, seed: u64, stream_base: u64, body: F) -> Vec<T>
where
    T: Send,
    F: Fn(&mut ChaCha8Rng, u64) -> T + Sync,
{
    let chunks = trials.div_ceil(CHUNK_TRIALS);
    (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(stream_base + c);
            let count = CHUNK_TRIALS.min(trials - c * CHUNK_TRIALS);
            body(&mut rng, count)
        })
        .collect()
}

/// Empirical or exact outage probability at one operating point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OutageEstimate {
    pub probability: f64,
    /// `sqrt(p (1 - p) / trials)`; zero for exact values.
    pub std_error: f64,
    /// Channel draws; zero for exact values.
    pub trials: u64,
    /// Linear SNR.
    pub snr: f64,
    /// Attempted rate in bits per channel use.
    pub rate: f64,
}

/// Monte Carlo estimate of `Pr{C(H) < rate}`.
pub fn outage_prob_mc(
    cfg: AntennaConfig,
    snr: f64,
    rate: f64,
    trials: u64,
    seed: u64,
) -> Result<OutageEstimate> {
    if trials == 0 {
        return Err(domain("trials must be >= 1"));
    }
    if !(snr > 0.0) || !snr.is_finite() {
        return Err(domain(format!(
            "snr must be positive and finite (got {snr})"
        )));
    }
    if !(rate >= 0.0) {
        return Err(domain(format!("rate must be >= 0 (got {rate})")));
    }
    let alpha = snr / cfg.m_t() as f64;
    let outages: u64 = run_chunks(trials, seed, 0, |rng, count| {
        (0..count)
            .filter(|_| capacity_unchecked(&sample_channel(cfg, rng), alpha) < rate)
            .count() as u64
    })
    .into_iter()
    .sum();
    let p = outages as f64 / trials as f64;
    Ok(OutageEstimate {
        probability: p,
        std_error: (p * (1.0 - p) / trials as f64).sqrt(),
        trials,
        snr,
        rate,
    })
}

/// Exact single-antenna outage probability. `|h|^2` is unit-mean
/// exponential, so `Pr{log2(1 + snr |h|^2) < rate} = 1 - exp(-(2^rate - 1) / snr)`.
pub fn outage_prob_siso_exact(snr: f64, rate: f64) -> f64 {
    if rate <= 0.0 {
        return 0.0;
    }
    if rate.is_infinite() {
        return 1.0;
    }
    -(-(rate * std::f64::consts::LN_2).exp_m1() / snr).exp_m1()
}

/// How the attempted rate depends on SNR.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum RateLaw {
    /// `rate = r log2(snr)` for multiplexing gain `r`.
    Scaled(f64),
    /// A fixed rate in bits per channel use.
    Fixed(f64),
}

impl RateLaw {
    pub fn rate_at(&self, snr: f64) -> f64 {
        match *self {
            RateLaw::Scaled(r) => r * snr.log2(),
            RateLaw::Fixed(rate) => rate,
        }
    }
}

/// Where outage probabilities come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum OutageSource {
    MonteCarlo {
        trials: u64,
        seed: u64,
    },
    /// Closed form; single-antenna links only.
    ExactSiso,
}

/// Diversity estimated as the slope of `-log10 P_out` against `log10 snr`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiversityFit {
    pub slope: f64,
    /// Per-point estimates, including excluded ones.
    pub points: Vec<OutageEstimate>,
    /// SNRs (linear) left out of the fit because no outage was observed.
    pub excluded: Vec<f64>,
    pub residuals: Vec<f64>,
}

pub fn estimate_diversity(
    cfg: AntennaConfig,
    rate: RateLaw,
    snr_grid_db: &[f64],
    source: OutageSource,
) -> Result<DiversityFit> {
    if source == OutageSource::ExactSiso && !cfg.is_siso() {
        return Err(domain("the exact outage oracle needs a 1x1 link"));
    }
    let mut points = Vec::with_capacity(snr_grid_db.len());
    for (i, &db) in snr_grid_db.iter().enumerate() {
        let snr = db_to_linear(db);
        let r = rate.rate_at(snr);
        if !(r >= 0.0) {
            return Err(domain(format!("rate at {db} dB is negative")));
        }
        let est = match source {
            OutageSource::MonteCarlo { trials, seed } => {
                outage_prob_mc(cfg, snr, r, trials, seed.wrapping_add(i as u64))?
            }
            OutageSource::ExactSiso => OutageEstimate {
                probability: outage_prob_siso_exact(snr, r),
                std_error: 0.0,
                trials: 0,
                snr,
                rate: r,
            },
        };
        points.push(est);
    }
    let (used, excluded): (Vec<&OutageEstimate>, Vec<&OutageEstimate>) =
        points.iter().partition(|p| p.probability > 0.0);
    let x: Vec<f64> = used.iter().map(|p| p.snr.log10()).collect();
    let y: Vec<f64> = used.iter().map(|p| -p.probability.log10()).collect();
    let fit = fit_line(&x, &y)
        .ok_or_else(|| domain("need at least two grid points with observed outages"))?;
    Ok(DiversityFit {
        slope: fit.slope,
        excluded: excluded.iter().map(|p| p.snr).collect(),
        points,
        residuals: fit.residuals,
    })
}
