//! Electron coherence under free evolution and under designed gate sequences.

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use super::cce::cce2_final;
use super::dense::{dense_bath_coherence_many, DENSE_BATH_LIMIT};
use super::{cce, SpinBath};
use crate::error::{Error, Result};
use crate::linalg::ONE;
use crate::propagator::{system_propagator, PulseSequence};
use crate::spin_model::SystemParameters;

/// The first decay window ends once `|L|` falls below this.
const FIT_FLOOR: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoherenceSeries {
    /// `(t_us, L)`
    pub samples: Vec<(f64, C64)>,
}

impl CoherenceSeries {
    pub fn times(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.0).collect()
    }

    pub fn magnitudes(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.1.norm()).collect()
    }

    pub fn max_abs(&self) -> f64 {
        self.samples.iter().map(|s| s.1.norm()).fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct T2StarFit {
    /// us
    pub t2star: f64,
    /// RMS deviation of `|L|` from the fitted envelope.
    pub rms_residual: f64,
    pub n_points: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitDiagnostics {
    pub reason: String,
    pub n_points: usize,
    pub min_abs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FidResult {
    pub series: CoherenceSeries,
    pub fit: std::result::Result<T2StarFit, FitDiagnostics>,
}

impl FidResult {
    pub fn t2star(&self) -> Option<f64> {
        self.fit.as_ref().ok().map(|f| f.t2star)
    }
}

/// Bath coherence at the end of each sequence: dense for small baths, CCE-2 otherwise.
pub fn bath_coherence_many(bath: &SpinBath, seqs: &[PulseSequence]) -> Vec<C64> {
    if bath.len() <= DENSE_BATH_LIMIT {
        dense_bath_coherence_many(bath, seqs).expect("within dense capacity")
    } else {
        seqs.iter().map(|s| cce2_final(bath, s)).collect()
    }
}

fn sample_times(t_max: f64, dt: f64) -> Result<Vec<f64>> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::Domain(format!("dt must be positive, got {dt}")));
    }
    if !(t_max >= 0.0 && t_max.is_finite()) {
        return Err(Error::Domain(format!("t_max must be nonnegative, got {t_max}")));
    }
    let n = (t_max / dt + 1e-9).floor() as usize;
    Ok((0..=n).map(|k| k as f64 * dt).collect())
}

/// Free induction decay of the electron superposition, with a Gaussian
/// `exp(-(t/T2*)^2)` fit to `|L|` over the first decay.
pub fn fid_coherence(bath: &SpinBath, t_max: f64, dt: f64) -> Result<FidResult> {
    let times = sample_times(t_max, dt)?;
    let series = if bath.len() <= DENSE_BATH_LIMIT {
        let seqs = times.iter().map(|&t| PulseSequence::free(t)).collect::<Result<Vec<_>>>()?;
        CoherenceSeries {
            samples: times.iter().copied().zip(bath_coherence_many(bath, &seqs)).collect(),
        }
    } else {
        cce::cce2_coherence(bath, &PulseSequence::free(t_max)?, &times)
    };
    let fit = fit_t2star(&series);
    Ok(FidResult { series, fit })
}

/// Least-squares Gaussian fit of `|L|` over the first decay window.
pub fn fit_t2star(series: &CoherenceSeries) -> std::result::Result<T2StarFit, FitDiagnostics> {
    let mags = series.magnitudes();
    let times = series.times();
    let mut end = mags.len();
    for k in 1..mags.len() {
        if mags[k] < FIT_FLOOR {
            end = k + 1;
            break;
        }
        if k + 1 < mags.len() && mags[k + 1] > mags[k] {
            end = k + 1;
            break;
        }
    }
    let (t, y) = (&times[..end], &mags[..end]);
    let min_abs = y.iter().copied().fold(f64::INFINITY, f64::min);
    let decline = |reason: &str| FitDiagnostics {
        reason: reason.to_string(),
        n_points: t.len(),
        min_abs,
    };
    if t.len() < 3 {
        return Err(decline("fewer than 3 samples in the first decay"));
    }
    if !(min_abs <= (-1.0f64).exp()) {
        return Err(decline("coherence did not decay below 1/e within the first decay"));
    }
    let cost = |log_tau: f64| {
        let tau = log_tau.exp();
        t.iter()
            .zip(y)
            .map(|(&ti, &yi)| {
                let r = yi - (-(ti / tau).powi(2)).exp();
                r * r
            })
            .sum::<f64>()
    };
    let t_end = t[t.len() - 1];
    let dt = t[1] - t[0];
    let (lo, hi) = ((0.1 * dt).ln(), (10.0 * t_end).ln());
    let n_grid = 400;
    let grid: Vec<f64> = (0..=n_grid).map(|k| lo + (hi - lo) * k as f64 / n_grid as f64).collect();
    let best = (0..=n_grid)
        .min_by(|&a, &b| cost(grid[a]).total_cmp(&cost(grid[b])))
        .expect("nonempty grid");
    let (mut a, mut b) = (grid[best.saturating_sub(1)], grid[(best + 1).min(n_grid)]);
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    for _ in 0..100 {
        if cost(c) < cost(d) {
            b = d;
        } else {
            a = c;
        }
        c = b - g * (b - a);
        d = a + g * (b - a);
    }
    let log_tau = 0.5 * (a + b);
    Ok(T2StarFit {
        t2star: log_tau.exp(),
        rms_residual: (cost(log_tau) / t.len() as f64).sqrt(),
        n_points: t.len(),
    })
}

/// Coherence factor of the target spin alone, `<psi| u_1^dagger u_0 |psi>`.
pub fn target_coherence(params: &SystemParameters, seq: &PulseSequence, psi: &[C64; 2]) -> C64 {
    let u = system_propagator(params, seq);
    let a = u.u0.apply(psi);
    let b = u.u1.apply(psi);
    b[0].conj() * a[0] + b[1].conj() * a[1]
}

/// Bath coherence after running `seq` twice (CCE-2).
pub fn doubled_gate_coherence(bath: &SpinBath, seq: &PulseSequence) -> C64 {
    if bath.is_empty() && bath.n14.is_none() {
        return ONE;
    }
    cce2_final(bath, &seq.concat(seq))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RepeatSample {
    pub repeats: usize,
    /// us
    pub total_time: f64,
    pub bath: C64,
    pub target: C64,
}

impl RepeatSample {
    /// Electron coherence with the target spin and the bath.
    pub fn coherence(&self) -> C64 {
        self.bath * self.target
    }
}

/// Coherence after `k` back-to-back runs of `seq` for each `k` in `repeats`.
/// Odd repeat counts are rejected unless `allow_odd` is set.
pub fn repeated_gate_coherence(
    params: &SystemParameters,
    bath: &SpinBath,
    seq: &PulseSequence,
    psi_target: &[C64; 2],
    repeats: &[usize],
    allow_odd: bool,
) -> Result<Vec<RepeatSample>> {
    repeats
        .iter()
        .map(|&k| {
            if k == 0 {
                return Err(Error::Validation("repeat count must be at least 1".into()));
            }
            if k % 2 == 1 && !allow_odd {
                return Err(Error::Validation(format!("repeat count {k} is odd")));
            }
            let s = seq.repeated(k)?;
            let bath_l = if bath.is_empty() && bath.n14.is_none() {
                ONE
            } else {
                cce2_final(bath, &s)
            };
            Ok(RepeatSample {
                repeats: k,
                total_time: s.total_time(),
                bath: bath_l,
                target: target_coherence(params, &s, psi_target),
            })
        })
        .collect()
}
