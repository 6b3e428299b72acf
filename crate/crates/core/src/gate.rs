//! Target gates in conditional form and the average two-qubit gate fidelity.

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Mat2;
use crate::propagator::{branch_at, interval_factors, system_propagator, PulseSequence, SystemPropagator};
use crate::spin_model::{Branch, SystemParameters};

/// Hilbert-space dimension of the electron-nuclear register.
pub const DIM: f64 = 4.0;

const UNITARITY_TOL: f64 = 1e-9;

/// Built-in target gates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum GateKind {
    /// Controlled-NOT, electron control, nuclear target.
    #[serde(rename = "CeNOTn")]
    CeNot,
    #[serde(rename = "Hn")]
    Hadamard,
    #[serde(rename = "Xn")]
    PauliX,
    #[serde(rename = "Zn")]
    PauliZ,
    #[serde(rename = "NULL")]
    Null,
}

impl GateKind {
    pub const ALL: [GateKind; 5] = [
        GateKind::CeNot,
        GateKind::Hadamard,
        GateKind::PauliX,
        GateKind::PauliZ,
        GateKind::Null,
    ];

    pub fn name(self) -> &'static str {
        match self {
            GateKind::CeNot => "CeNOTn",
            GateKind::Hadamard => "Hn",
            GateKind::PauliX => "Xn",
            GateKind::PauliZ => "Zn",
            GateKind::Null => "NULL",
        }
    }

    pub fn target(self) -> TargetGate {
        match self {
            GateKind::CeNot => TargetGate::cenot(),
            GateKind::Hadamard => TargetGate::uniform("Hn", Mat2::hadamard()),
            GateKind::PauliX => TargetGate::uniform("Xn", Mat2::pauli_x()),
            GateKind::PauliZ => TargetGate::uniform("Zn", Mat2::pauli_z()),
            GateKind::Null => TargetGate::uniform("NULL", Mat2::identity()),
        }
    }
}

impl fmt::Display for GateKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for GateKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let key = s.to_ascii_lowercase();
        match key.as_str() {
            "cenotn" | "cenot" | "cnot" => Ok(GateKind::CeNot),
            "hn" | "h" | "hadamard" => Ok(GateKind::Hadamard),
            "xn" | "x" => Ok(GateKind::PauliX),
            "zn" | "z" => Ok(GateKind::PauliZ),
            "null" | "identity" => Ok(GateKind::Null),
            _ => Err(Error::Validation(format!("unknown gate '{s}'"))),
        }
    }
}

/// `G = |0><0| (x) o0 + |1><1| (x) o1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetGate {
    pub name: String,
    pub o0: Mat2,
    pub o1: Mat2,
    /// Ignore the relative phase between electron branches.
    pub phase_free: bool,
}

impl TargetGate {
    pub fn new(name: impl Into<String>, o0: Mat2, o1: Mat2, phase_free: bool) -> Result<Self> {
        for (m, o) in [(0, &o0), (1, &o1)] {
            let r = o.unitarity_residual();
            if r > 1e-12 {
                return Err(Error::Validation(format!("gate block o{m} is not unitary (residual {r:e})")));
            }
        }
        Ok(Self {
            name: name.into(),
            o0,
            o1,
            phase_free,
        })
    }

    /// Controlled-NOT, defined up to a relative electron phase.
    pub fn cenot() -> Self {
        Self::new("CeNOTn", Mat2::identity(), Mat2::pauli_x(), true).expect("unitary")
    }

    /// The same nuclear gate on both branches, phase-locked.
    pub fn uniform(name: &str, o: Mat2) -> Self {
        Self::new(name, o, o, false).expect("unitary")
    }

    pub fn with_phase_free(mut self, phase_free: bool) -> Self {
        self.phase_free = phase_free;
        self
    }

    pub fn block(&self, m: Branch) -> &Mat2 {
        match m {
            Branch::Zero => &self.o0,
            Branch::One => &self.o1,
        }
    }

    /// `Tr(o_m^dagger u_m)` for both branches.
    pub fn branch_overlaps(&self, u: &SystemPropagator) -> [C64; 2] {
        [
            (self.o0.adjoint() * u.u0).trace(),
            (self.o1.adjoint() * u.u1).trace(),
        ]
    }

    /// Effective `|Tr(G^dagger U)|`, maximized over branch phases in phase-free mode.
    pub fn overlap_modulus(&self, u: &SystemPropagator) -> f64 {
        let [t0, t1] = self.branch_overlaps(u);
        if self.phase_free {
            t0.norm() + t1.norm()
        } else {
            (t0 + t1).norm()
        }
    }

    /// Gate blocks with the phases that best match `u`: per branch in
    /// phase-free mode, one global phase otherwise.
    pub fn aligned_blocks(&self, u: &SystemPropagator) -> [Mat2; 2] {
        let [t0, t1] = self.branch_overlaps(u);
        let phase = |z: C64| {
            if z.norm() > 0.0 {
                z / z.norm()
            } else {
                C64::new(1.0, 0.0)
            }
        };
        if self.phase_free {
            [self.o0.scale(phase(t0)), self.o1.scale(phase(t1))]
        } else {
            let p = phase(t0 + t1);
            [self.o0.scale(p), self.o1.scale(p)]
        }
    }
}

fn fidelity_from_overlap(x: f64) -> f64 {
    ((x * x + DIM) / (DIM * (DIM + 1.0))).clamp(0.0, 1.0)
}

/// Average gate fidelity `(|Tr(G^dagger U)|^2 + d) / (d (d + 1))` with `d = 4`.
pub fn average_gate_fidelity(u: &SystemPropagator, g: &TargetGate) -> Result<f64> {
    let r = u.unitarity_residual();
    if !(r <= UNITARITY_TOL) {
        return Err(Error::Validation(format!("propagator is not unitary (residual {r:e})")));
    }
    Ok(fidelity_from_overlap(g.overlap_modulus(u)))
}

/// Fidelity of `seq` against `g`, evaluated from scratch.
pub fn sequence_fidelity(params: &SystemParameters, seq: &PulseSequence, g: &TargetGate) -> f64 {
    fidelity_from_overlap(g.overlap_modulus(&system_propagator(params, seq)))
}

/// `d Tr(o^dagger u) / d t_alpha` for every interval of one branch, plus the trace itself.
fn branch_trace_derivatives(
    params: &SystemParameters,
    seq: &PulseSequence,
    m: Branch,
    o: &Mat2,
) -> (C64, Vec<C64>) {
    let factors = interval_factors(params, seq, m);
    let n = factors.len();
    // prefix[a] = f_{a-1} ... f_0, suffix[a] = f_{n-1} ... f_{a+1}
    let mut prefix = Vec::with_capacity(n);
    let mut acc = Mat2::identity();
    for f in &factors {
        prefix.push(acc);
        acc = *f * acc;
    }
    let total = acc;
    let mut suffix = vec![Mat2::identity(); n];
    let mut acc = Mat2::identity();
    for a in (0..n).rev() {
        suffix[a] = acc;
        acc = acc * factors[a];
    }
    let od = o.adjoint();
    let minus_i = C64::new(0.0, -1.0);
    let derivs = (0..n)
        .map(|a| {
            let h = params.hamiltonian(branch_at(m, a)).matrix;
            let du = suffix[a] * h.scale(minus_i) * factors[a] * prefix[a];
            (od * du).trace()
        })
        .collect();
    ((od * total).trace(), derivs)
}

/// Fidelity together with `dF/dt_alpha` for every delay.
pub fn fidelity_and_gradient(params: &SystemParameters, seq: &PulseSequence, g: &TargetGate) -> (f64, Vec<f64>) {
    let (t0, d0) = branch_trace_derivatives(params, seq, Branch::Zero, &g.o0);
    let (t1, d1) = branch_trace_derivatives(params, seq, Branch::One, &g.o1);
    let norm = 2.0 / (DIM * (DIM + 1.0));
    if g.phase_free {
        let (a0, a1) = (t0.norm(), t1.norm());
        let s = a0 + a1;
        let dabs = |t: C64, a: f64, d: C64| if a > 0.0 { (t.conj() * d).re / a } else { 0.0 };
        let grad = d0
            .iter()
            .zip(&d1)
            .map(|(x, y)| norm * s * (dabs(t0, a0, *x) + dabs(t1, a1, *y)))
            .collect();
        (fidelity_from_overlap(s), grad)
    } else {
        let x = t0 + t1;
        let grad = d0
            .iter()
            .zip(&d1)
            .map(|(a, b)| norm * (x.conj() * (a + b)).re)
            .collect();
        (fidelity_from_overlap(x.norm()), grad)
    }
}

/// `dF/dt_alpha` for every delay of `seq`.
pub fn fidelity_gradient(params: &SystemParameters, seq: &PulseSequence, g: &TargetGate) -> Vec<f64> {
    fidelity_and_gradient(params, seq, g).1
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::propagator::system_propagator;
    use crate::spin_model::ConditionalFieldPair;

    fn phase(theta: f64) -> C64 {
        C64::from_polar(1.0, theta)
    }

    #[test]
    fn perfect_gate_scores_one() {
        for k in GateKind::ALL {
            let g = k.target();
            let u = SystemPropagator { u0: g.o0, u1: g.o1 };
            assert!((average_gate_fidelity(&u, &g).unwrap() - 1.0).abs() < 1e-15, "{k}");
        }
    }

    #[test]
    fn orthogonal_propagator_scores_one_fifth() {
        // Tr(G^dagger U) = 0: identity against Z on both branches
        let g = TargetGate::uniform("Zn", Mat2::pauli_z());
        let f = average_gate_fidelity(&SystemPropagator::identity(), &g).unwrap();
        assert!((f - 0.2).abs() < 1e-15);
    }

    #[test]
    fn branch_phases_and_phase_free_mode() {
        let g = TargetGate::cenot();
        let u = SystemPropagator {
            u0: Mat2::identity().scale(phase(0.3)),
            u1: Mat2::pauli_x().scale(phase(0.3 + std::f64::consts::FRAC_PI_2)),
        };
        assert!((average_gate_fidelity(&u, &g).unwrap() - 1.0).abs() < 1e-14);
        let locked = g.clone().with_phase_free(false);
        let f = average_gate_fidelity(&u, &locked).unwrap();
        // |2 + 2i|^2 = 8 -> (8 + 4) / 20
        assert!((f - 0.6).abs() < 1e-14);
        // global phase alone never matters
        let v = SystemPropagator {
            u0: Mat2::identity().scale(phase(1.1)),
            u1: Mat2::pauli_x().scale(phase(1.1)),
        };
        assert!((average_gate_fidelity(&v, &locked).unwrap() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn non_unitary_rejected() {
        let u = SystemPropagator {
            u0: Mat2::identity().scale(C64::new(1.1, 0.0)),
            u1: Mat2::identity(),
        };
        assert!(matches!(average_gate_fidelity(&u, &TargetGate::cenot()), Err(Error::Validation(_))));
        assert!(TargetGate::new("bad", Mat2::zeros(), Mat2::identity(), false).is_err());
    }

    #[test]
    fn zero_hyperfine_null_gradient_vanishes() {
        // no field and no hyperfine: every sequence is the identity
        let p = SystemParameters::new(ConditionalFieldPair::new([0.0; 3], [0.0; 3]).unwrap());
        let s = PulseSequence::new(vec![0.1, 0.7, 1.2, 0.7, 0.1]).unwrap();
        let (f, g) = fidelity_and_gradient(&p, &s, &GateKind::Null.target());
        assert!((f - 1.0).abs() < 1e-15);
        assert!(g.iter().all(|x| x.abs() < 1e-15), "{g:?}");
    }

    #[test]
    fn gradient_matches_finite_difference_on_fixed_instance() {
        let p = SystemParameters::experimental();
        let s = PulseSequence::new(vec![0.11, 0.42, 0.37, 0.29, 0.05, 0.6]).unwrap();
        for k in GateKind::ALL {
            let g = k.target();
            let grad = fidelity_gradient(&p, &s, &g);
            let h = 1e-6;
            for a in 0..s.delays().len() {
                let mut up = s.delays().to_vec();
                let mut dn = s.delays().to_vec();
                up[a] += h;
                dn[a] -= h;
                let fd = (sequence_fidelity(&p, &PulseSequence::new(up).unwrap(), &g)
                    - sequence_fidelity(&p, &PulseSequence::new(dn).unwrap(), &g))
                    / (2.0 * h);
                assert!((fd - grad[a]).abs() < 1e-6 * grad[a].abs().max(1.0), "{k} a={a}: {fd} vs {}", grad[a]);
            }
        }
    }

    #[test]
    fn aligned_blocks_absorb_phases() {
        let g = TargetGate::cenot();
        let u = SystemPropagator {
            u0: Mat2::identity().scale(phase(0.7)),
            u1: Mat2::pauli_x().scale(phase(-1.2)),
        };
        let [a0, a1] = g.aligned_blocks(&u);
        assert!((a0 - u.u0).max_abs() < 1e-15);
        assert!((a1 - u.u1).max_abs() < 1e-15);
    }

    #[test]
    fn gate_names_parse() {
        for k in GateKind::ALL {
            assert_eq!(k.name().parse::<GateKind>().unwrap(), k);
        }
        assert!("toffoli".parse::<GateKind>().is_err());
        let p = SystemParameters::experimental();
        let s = PulseSequence::free(0.0).unwrap();
        assert_eq!(sequence_fidelity(&p, &s, &GateKind::Null.target()), 1.0);
        let _ = system_propagator(&p, &s);
    }
}
