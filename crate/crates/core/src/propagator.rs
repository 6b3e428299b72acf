//! Branch and system propagators under ideal instantaneous pi-pulses.
//!
//! A sequence of `N` pulses splits the gate window into `N + 1` free-evolution
//! intervals `t_0 .. t_N`. A pulse swaps the electron branch, so the nuclear
//! spin alternates between the two conditional Hamiltonians. For a start
//! branch `m` the interval `alpha` evolves under `h_{m xor (alpha mod 2)}`.

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, Mat2, Vec3, ZERO};
use crate::spin_model::{Branch, SystemParameters};

/// Inter-pulse delays `t_0 .. t_N` in us.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct PulseSequence {
    delays: Vec<f64>,
}

impl TryFrom<Vec<f64>> for PulseSequence {
    type Error = Error;
    fn try_from(delays: Vec<f64>) -> Result<Self> {
        PulseSequence::new(delays)
    }
}

impl From<PulseSequence> for Vec<f64> {
    fn from(s: PulseSequence) -> Vec<f64> {
        s.delays
    }
}

impl PulseSequence {
    pub fn new(delays: Vec<f64>) -> Result<Self> {
        if delays.is_empty() {
            return Err(Error::Validation("a sequence needs at least one delay".into()));
        }
        if let Some((i, t)) = delays.iter().enumerate().find(|(_, t)| !(**t >= 0.0) || !t.is_finite()) {
            return Err(Error::Validation(format!(
                "delay t[{i}] = {t} us must be finite and nonnegative"
            )));
        }
        Ok(Self { delays })
    }

    /// Free evolution of duration `t` with no pulses.
    pub fn free(t: f64) -> Result<Self> {
        Self::new(vec![t])
    }

    /// Evenly spaced CPMG-style sequence: `tau/2, tau, ..., tau, tau/2`.
    pub fn cpmg(n_pulses: usize, total: f64) -> Result<Self> {
        if n_pulses == 0 {
            return Self::free(total);
        }
        let tau = total / n_pulses as f64;
        let mut d = vec![tau; n_pulses + 1];
        d[0] = 0.5 * tau;
        d[n_pulses] = 0.5 * tau;
        Self::new(d)
    }

    pub fn delays(&self) -> &[f64] {
        &self.delays
    }

    pub fn n_pulses(&self) -> usize {
        self.delays.len() - 1
    }

    pub fn total_time(&self) -> f64 {
        self.delays.iter().sum()
    }

    /// `sum_alpha (-1)^alpha t_alpha`.
    pub fn echo_residual(&self) -> f64 {
        self.delays
            .iter()
            .enumerate()
            .map(|(a, t)| if a % 2 == 0 { *t } else { -*t })
            .sum()
    }

    /// True when `t_n == t_{N-n}` bit for bit.
    pub fn is_symmetric(&self) -> bool {
        let n = self.delays.len();
        (0..n / 2).all(|i| self.delays[i].to_bits() == self.delays[n - 1 - i].to_bits())
    }

    /// Pulse instants, measured from the start of the sequence.
    pub fn pulse_times(&self) -> Vec<f64> {
        let mut acc = 0.0;
        self.delays[..self.n_pulses()]
            .iter()
            .map(|t| {
                acc += t;
                acc
            })
            .collect()
    }

    /// Run `self` then `other`. The last interval of `self` and the first
    /// interval of `other` merge into one, since no pulse separates them.
    pub fn concat(&self, other: &PulseSequence) -> PulseSequence {
        let mut d = self.delays.clone();
        let last = d.pop().expect("nonempty");
        d.push(last + other.delays[0]);
        d.extend_from_slice(&other.delays[1..]);
        PulseSequence { delays: d }
    }

    /// `self` repeated `k >= 1` times.
    pub fn repeated(&self, k: usize) -> Result<PulseSequence> {
        if k == 0 {
            return Err(Error::Domain("repeat count must be at least 1".into()));
        }
        let mut s = self.clone();
        for _ in 1..k {
            s = s.concat(self);
        }
        Ok(s)
    }

    /// All delays multiplied by `c`.
    pub fn scaled(&self, c: f64) -> Result<PulseSequence> {
        Self::new(self.delays.iter().map(|t| t * c).collect())
    }

    /// The prefix of the sequence up to time `t`, pulses included.
    pub fn truncated(&self, t: f64) -> PulseSequence {
        let mut out = Vec::with_capacity(self.delays.len());
        let mut acc = 0.0;
        for &d in &self.delays {
            if acc + d >= t {
                out.push((t - acc).max(0.0));
                return PulseSequence { delays: out };
            }
            out.push(d);
            acc += d;
        }
        // past the end: extend the final free interval
        let last = out.pop().expect("nonempty");
        out.push(last + (t - acc).max(0.0));
        PulseSequence { delays: out }
    }
}

/// Branch active during interval `alpha` for start branch `m`.
pub fn branch_at(m: Branch, alpha: usize) -> Branch {
    if alpha % 2 == 0 {
        m
    } else {
        m.flipped()
    }
}

/// Nuclear propagator conditioned on the electron starting in branch `m`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BranchPropagator {
    pub m: Branch,
    pub matrix: Mat2,
}

/// `U = |0><0| (x) u_0 + |1><1| (x) u_1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SystemPropagator {
    pub u0: Mat2,
    pub u1: Mat2,
}

impl SystemPropagator {
    pub fn identity() -> Self {
        Self {
            u0: Mat2::identity(),
            u1: Mat2::identity(),
        }
    }

    pub fn block(&self, m: Branch) -> &Mat2 {
        match m {
            Branch::Zero => &self.u0,
            Branch::One => &self.u1,
        }
    }

    /// 4x4 matrix in the basis `|0 up>, |0 down>, |1 up>, |1 down>`.
    pub fn to_dense(&self) -> [[C64; 4]; 4] {
        let mut out = [[ZERO; 4]; 4];
        for (k, b) in [self.u0, self.u1].iter().enumerate() {
            for i in 0..2 {
                for j in 0..2 {
                    out[2 * k + i][2 * k + j] = b.0[i][j];
                }
            }
        }
        out
    }

    pub fn unitarity_residual(&self) -> f64 {
        self.u0.unitarity_residual().max(self.u1.unitarity_residual())
    }
}

/// Per-interval factors `exp(-i h_{b(alpha)} t_alpha)` in time order.
pub fn interval_factors(params: &SystemParameters, seq: &PulseSequence, m: Branch) -> Vec<Mat2> {
    seq.delays
        .iter()
        .enumerate()
        .map(|(a, &t)| Mat2::precession(params.fields.field(branch_at(m, a)), t))
        .collect()
}

pub fn branch_propagator(params: &SystemParameters, seq: &PulseSequence, m: Branch) -> BranchPropagator {
    let mut u = Mat2::identity();
    for (a, &t) in seq.delays.iter().enumerate() {
        u = Mat2::precession(params.fields.field(branch_at(m, a)), t) * u;
    }
    BranchPropagator { m, matrix: u }
}

pub fn system_propagator(params: &SystemParameters, seq: &PulseSequence) -> SystemPropagator {
    SystemPropagator {
        u0: branch_propagator(params, seq, Branch::Zero).matrix,
        u1: branch_propagator(params, seq, Branch::One).matrix,
    }
}

/// One sample of a conditional nuclear Bloch trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryPoint {
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

/// Nuclear spin-down, the `-1/2` eigenstate of `sigma_z`.
pub const SPIN_DOWN: [C64; 2] = [ZERO, linalg::ONE];
pub const SPIN_UP: [C64; 2] = [linalg::ONE, ZERO];

/// Sample the conditional nuclear Bloch vector every `dt` us, plus every pulse
/// instant and the end of the sequence.
pub fn bloch_trajectory(
    params: &SystemParameters,
    seq: &PulseSequence,
    m: Branch,
    psi0: [C64; 2],
    dt: f64,
) -> Result<Vec<TrajectoryPoint>> {
    if !(dt > 0.0) {
        return Err(Error::Domain(format!("sampling step dt must be positive, got {dt}")));
    }
    let norm2 = psi0[0].norm_sqr() + psi0[1].norm_sqr();
    if (norm2 - 1.0).abs() > 1e-9 {
        return Err(Error::Domain(format!("initial nuclear state has norm^2 {norm2}, expected 1")));
    }

    let push = |out: &mut Vec<TrajectoryPoint>, t: f64, psi: &[C64; 2]| {
        if out.last().is_some_and(|p| p.t == t) {
            return;
        }
        let [x, y, z] = linalg::bloch_vector(psi);
        out.push(TrajectoryPoint { t, x, y, z });
    };

    let mut out = Vec::new();
    let mut psi = psi0;
    let mut start = 0.0;
    let mut k: u64 = 1;
    push(&mut out, 0.0, &psi);
    for (a, &dur) in seq.delays.iter().enumerate() {
        let field: Vec3 = *params.fields.field(branch_at(m, a));
        let end = start + dur;
        loop {
            let tk = k as f64 * dt;
            if tk >= end {
                break;
            }
            let local = Mat2::precession(&field, tk - start).apply(&psi);
            push(&mut out, tk, &local);
            k += 1;
        }
        psi = Mat2::precession(&field, dur).apply(&psi);
        push(&mut out, end, &psi);
        start = end;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spin_model::ConditionalFieldPair;
    use proptest::prelude::*;
    use std::f64::consts::TAU;

    fn params(w0: Vec3, w1: Vec3) -> SystemParameters {
        SystemParameters::new(ConditionalFieldPair::new(w0, w1).unwrap())
    }

    #[test]
    fn zero_duration_is_identity() {
        let p = SystemParameters::experimental();
        let s = PulseSequence::free(0.0).unwrap();
        assert_eq!(branch_propagator(&p, &s, Branch::One).matrix, Mat2::identity());
        let u = system_propagator(&p, &s);
        assert_eq!(u, SystemPropagator::identity());
    }

    #[test]
    fn half_turn_about_z() {
        let p = params([0.0, 0.0, TAU], [0.0, 0.0, TAU]);
        let u = branch_propagator(&p, &PulseSequence::free(0.5).unwrap(), Branch::Zero).matrix;
        let expect = Mat2::new(C64::new(0.0, -1.0), ZERO, ZERO, C64::new(0.0, 1.0));
        assert!((u - expect).max_abs() < 1e-15);
    }

    #[test]
    fn branch_toggles_after_each_pulse() {
        // t0 under h0, t1 under h1, t2 under h0 for the zero branch
        let p = params([1.0, 0.0, 0.0], [0.0, 0.0, 3.0]);
        let s = PulseSequence::new(vec![0.2, 0.5, 0.7]).unwrap();
        let manual = Mat2::precession(&[1.0, 0.0, 0.0], 0.7)
            * Mat2::precession(&[0.0, 0.0, 3.0], 0.5)
            * Mat2::precession(&[1.0, 0.0, 0.0], 0.2);
        let u0 = branch_propagator(&p, &s, Branch::Zero).matrix;
        assert!((u0 - manual).max_abs() < 1e-15);
        let manual1 = Mat2::precession(&[0.0, 0.0, 3.0], 0.7)
            * Mat2::precession(&[1.0, 0.0, 0.0], 0.5)
            * Mat2::precession(&[0.0, 0.0, 3.0], 0.2);
        let u1 = branch_propagator(&p, &s, Branch::One).matrix;
        assert!((u1 - manual1).max_abs() < 1e-15);
    }

    #[test]
    fn sequence_validation() {
        assert!(PulseSequence::new(vec![]).is_err());
        assert!(PulseSequence::new(vec![0.1, -0.1]).is_err());
        assert!(PulseSequence::new(vec![0.1, f64::NAN]).is_err());
        let s = PulseSequence::new(vec![0.1, 0.35, 0.5, 0.35, 0.1]).unwrap();
        assert_eq!(s.n_pulses(), 4);
        assert!(s.is_symmetric());
        assert!((s.total_time() - 1.4).abs() < 1e-15);
        assert!(s.echo_residual().abs() < 1e-15);
        let ts = s.pulse_times();
        assert_eq!(ts.len(), 4);
        assert!((ts[3] - 1.3).abs() < 1e-15);
    }

    #[test]
    fn repeat_and_truncate() {
        let s = PulseSequence::new(vec![0.1, 0.2, 0.1]).unwrap();
        let r = s.repeated(3).unwrap();
        assert_eq!(r.n_pulses(), 6);
        assert!((r.total_time() - 1.2).abs() < 1e-15);
        assert!(s.repeated(0).is_err());
        let t = r.truncated(0.25);
        assert_eq!(t.n_pulses(), 1);
        assert!((t.total_time() - 0.25).abs() < 1e-15);
        let beyond = s.truncated(1.0);
        assert_eq!(beyond.n_pulses(), 2);
        assert!((beyond.total_time() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn trajectory_zero_duration() {
        let p = SystemParameters::experimental();
        let tr = bloch_trajectory(&p, &PulseSequence::free(0.0).unwrap(), Branch::Zero, SPIN_DOWN, 0.01).unwrap();
        assert_eq!(tr, vec![TrajectoryPoint { t: 0.0, x: 0.0, y: 0.0, z: -1.0 }]);
    }

    #[test]
    fn trajectory_rejects_bad_inputs() {
        let p = SystemParameters::experimental();
        let s = PulseSequence::free(1.0).unwrap();
        assert!(bloch_trajectory(&p, &s, Branch::Zero, SPIN_DOWN, 0.0).is_err());
        assert!(bloch_trajectory(&p, &s, Branch::Zero, SPIN_DOWN, -1.0).is_err());
        assert!(bloch_trajectory(&p, &s, Branch::Zero, [linalg::ONE, linalg::ONE], 0.1).is_err());
    }

    #[test]
    fn trajectory_includes_pulse_instants() {
        let p = SystemParameters::experimental();
        let s = PulseSequence::new(vec![0.13, 0.27, 0.13]).unwrap();
        let tr = bloch_trajectory(&p, &s, Branch::One, SPIN_DOWN, 0.1).unwrap();
        let times: Vec<f64> = tr.iter().map(|p| p.t).collect();
        for pt in s.pulse_times() {
            assert!(times.contains(&pt), "missing pulse instant {pt}");
        }
        assert!(times.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(*times.last().unwrap(), s.total_time());
    }

    fn seq_strategy() -> impl Strategy<Value = PulseSequence> {
        prop::collection::vec(0.0..1.5f64, 1..16).prop_map(|d| PulseSequence::new(d).unwrap())
    }

    fn field() -> impl Strategy<Value = Vec3> {
        [-45.0..45.0f64, -45.0..45.0f64, -45.0..45.0f64]
    }

    proptest! {
        #[test]
        fn composition_with_parity(a in seq_strategy(), b in seq_strategy(), w0 in field(), w1 in field()) {
            let p = params(w0, w1);
            let ab = a.concat(&b);
            for m in [Branch::Zero, Branch::One] {
                let ua = branch_propagator(&p, &a, m).matrix;
                let mb = if a.n_pulses() % 2 == 0 { m } else { m.flipped() };
                let ub = branch_propagator(&p, &b, mb).matrix;
                let uab = branch_propagator(&p, &ab, m).matrix;
                prop_assert!((uab - ub * ua).max_abs() <= 1e-10);
            }
        }

        #[test]
        fn time_scaling_invariance(s in seq_strategy(), w0 in field(), w1 in field(), c in 0.1..10.0f64) {
            let p = params(w0, w1);
            let mut q = p.clone();
            q.fields = p.fields.scaled(1.0 / c);
            let sc = s.scaled(c).unwrap();
            for m in [Branch::Zero, Branch::One] {
                let u = branch_propagator(&p, &s, m).matrix;
                let v = branch_propagator(&q, &sc, m).matrix;
                prop_assert!((u - v).max_abs() <= 1e-10);
            }
        }

        #[test]
        fn equal_fields_commute_through_pulses(s in seq_strategy(), w in field()) {
            let p = params(w, w);
            let free = Mat2::precession(&w, s.total_time());
            for m in [Branch::Zero, Branch::One] {
                prop_assert!((branch_propagator(&p, &s, m).matrix - free).max_abs() <= 1e-10);
            }
        }

        #[test]
        fn trajectory_norm_and_endpoint(s in seq_strategy(), w0 in field(), w1 in field(), th in 0.0..3.14f64, ph in 0.0..6.28f64) {
            let p = params(w0, w1);
            let psi0 = [C64::new((th / 2.0).cos(), 0.0), C64::from_polar((th / 2.0).sin(), ph)];
            let tr = bloch_trajectory(&p, &s, Branch::One, psi0, 0.05).unwrap();
            for q in &tr {
                prop_assert!(((q.x * q.x + q.y * q.y + q.z * q.z).sqrt() - 1.0).abs() <= 1e-12);
            }
            let end = branch_propagator(&p, &s, Branch::One).matrix.apply(&psi0);
            let b = linalg::bloch_vector(&end);
            let last = tr.last().unwrap();
            prop_assert!((last.x - b[0]).abs() <= 1e-9 && (last.y - b[1]).abs() <= 1e-9 && (last.z - b[2]).abs() <= 1e-9);
        }
    }
}
