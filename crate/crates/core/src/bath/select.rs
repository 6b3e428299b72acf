//! Choosing a random bath whose free induction decay matches a target T2*.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::coherence::{fid_coherence, FidResult};
use super::{generate_bath, BathSpec, SpinBath};
use crate::error::{Error, Result};
use crate::rng;

/// Candidates evaluated concurrently per round.
const CHUNK: usize = 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateRecord {
    pub candidate: usize,
    pub seed: u64,
    pub n_spins: usize,
    pub t2star: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BathSelection {
    pub bath: SpinBath,
    pub fid: FidResult,
    pub t2star: f64,
    pub candidate: usize,
    /// Every candidate evaluated up to and including the accepted one.
    pub history: Vec<CandidateRecord>,
}

/// Seed of candidate `c` for a spec.
pub fn candidate_seed(spec: &BathSpec, c: usize) -> u64 {
    rng::split(spec.seed, c as u64)
}

/// FID window used during selection: four target widths, 160 samples.
pub fn selection_window(spec: &BathSpec) -> (f64, f64) {
    (4.0 * spec.target_t2star, spec.target_t2star / 40.0)
}

fn evaluate(spec: &BathSpec, c: usize) -> Result<(CandidateRecord, SpinBath, FidResult)> {
    let seed = candidate_seed(spec, c);
    let bath = generate_bath(&BathSpec { seed, ..spec.clone() })?;
    let short = spec.n_spins.is_some_and(|n| bath.len() < n);
    let (t_max, dt) = selection_window(spec);
    let fid = fid_coherence(&bath, t_max, dt)?;
    let record = CandidateRecord {
        candidate: c,
        seed,
        n_spins: bath.len(),
        t2star: if short { None } else { fid.t2star() },
    };
    Ok((record, bath, fid))
}

/// Generate candidates in order and keep the first whose fitted T2* lies
/// within `target_t2star +- t2star_tolerance`.
pub fn select_bath(spec: &BathSpec) -> Result<BathSelection> {
    spec.validate()?;
    let lo = spec.target_t2star - spec.t2star_tolerance;
    let hi = spec.target_t2star + spec.t2star_tolerance;
    let mut history = Vec::new();
    let mut start = 0;
    while start < spec.max_candidates {
        let end = (start + CHUNK).min(spec.max_candidates);
        let round = (start..end)
            .into_par_iter()
            .map(|c| evaluate(spec, c))
            .collect::<Result<Vec<_>>>()?;
        for (record, bath, fid) in round {
            let hit = record.t2star.filter(|t| (lo..=hi).contains(t));
            history.push(record);
            if let Some(t2star) = hit {
                let candidate = history.len() - 1;
                return Ok(BathSelection {
                    bath,
                    fid,
                    t2star,
                    candidate,
                    history,
                });
            }
        }
        start = end;
    }
    Err(Error::Selection(format!(
        "none of {} candidates has T2* in [{lo}, {hi}] us",
        spec.max_candidates
    )))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn impossible_target_fails_with_history_bound() {
        let spec = BathSpec {
            n_spins: Some(2),
            target_t2star: 1e4,
            t2star_tolerance: 1.0,
            max_candidates: 3,
            ..BathSpec::default()
        };
        assert!(matches!(select_bath(&spec), Err(Error::Selection(_))));
    }

    #[test]
    fn candidate_seeds_are_distinct() {
        let spec = BathSpec::default();
        assert_ne!(candidate_seed(&spec, 0), candidate_seed(&spec, 1));
    }
}
