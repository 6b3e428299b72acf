//! On-disk schemas: system parameters, pulse sequences, design results and
//! baths. Frequencies are stored in linear MHz where noted and converted to
//! rad/us on load.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize, Serializer};
use serde_json::value::RawValue;

use crate::bath::{BathSpec, BathSpin, N14Coupling, SpinBath};
use crate::design::{DDConstraintSet, DesignResult};
use crate::error::{Error, Result};
use crate::gate::{sequence_fidelity, TargetGate};
use crate::linalg::{self, Vec3};
use crate::propagator::PulseSequence;
use crate::spin_model::{ConditionalFieldPair, SystemParameters, GAMMA_C13};

pub const FORMAT_VERSION: u32 = 1;

fn mhz(v: &Vec3) -> Vec3 {
    linalg::scale(v, 1.0 / TAU)
}

fn angular(v: &Vec3) -> Vec3 {
    linalg::scale(v, TAU)
}

fn check_version(found: u32, what: &str) -> Result<()> {
    if found != FORMAT_VERSION {
        return Err(Error::Validation(format!(
            "{what}: unsupported format_version {found} (expected {FORMAT_VERSION})"
        )));
    }
    Ok(())
}

/// Conditional fields in linear MHz, applied field in gauss.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemParamsFile {
    pub omega0_mhz: Vec3,
    pub omega1_mhz: Vec3,
    #[serde(default)]
    pub b_field_gauss: f64,
}

impl SystemParamsFile {
    pub fn experimental() -> Self {
        Self::from_params(&SystemParameters::experimental())
    }

    pub fn from_params(p: &SystemParameters) -> Self {
        Self {
            omega0_mhz: mhz(&p.fields.omega0),
            omega1_mhz: mhz(&p.fields.omega1),
            b_field_gauss: p.b_field_gauss,
        }
    }

    pub fn to_params(&self) -> Result<SystemParameters> {
        let fields = ConditionalFieldPair::from_mhz(self.omega0_mhz, self.omega1_mhz)?;
        let mut p = SystemParameters::new(fields);
        p.b_field_gauss = self.b_field_gauss;
        p.validate()?;
        Ok(p)
    }
}

fn ser_delays<S: Serializer>(delays: &[f64], s: S) -> std::result::Result<S::Ok, S::Error> {
    // 17 significant digits: exact round trip for every f64
    let raw: Vec<Box<RawValue>> = delays
        .iter()
        .map(|d| RawValue::from_string(format!("{d:.16e}")).expect("valid JSON number"))
        .collect();
    raw.serialize(s)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SequenceFile {
    pub format_version: u32,
    pub n_pulses: usize,
    #[serde(serialize_with = "ser_delays")]
    pub delays_us: Vec<f64>,
    #[serde(default)]
    pub label: String,
}

impl SequenceFile {
    pub fn new(seq: &PulseSequence, label: impl Into<String>) -> Self {
        Self {
            format_version: FORMAT_VERSION,
            n_pulses: seq.n_pulses(),
            delays_us: seq.delays().to_vec(),
            label: label.into(),
        }
    }

    pub fn to_sequence(&self) -> Result<PulseSequence> {
        check_version(self.format_version, "sequence")?;
        if self.delays_us.len() != self.n_pulses + 1 {
            return Err(Error::Validation(format!(
                "sequence: n_pulses = {} requires {} delays, found {}",
                self.n_pulses,
                self.n_pulses + 1,
                self.delays_us.len()
            )));
        }
        PulseSequence::new(self.delays_us.clone())
    }
}

/// A design together with everything needed to re-evaluate it exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DesignFile {
    pub format_version: u32,
    pub target: String,
    pub sequence: SequenceFile,
    pub fidelity: f64,
    pub gate_time_us: f64,
    pub echo_residual_us: f64,
    pub order: u8,
    pub seed: u64,
    pub iterations: usize,
    pub converged: bool,
    pub projected_grad_norm: f64,
    pub start_index: usize,
    /// Parameters in rad/us, exactly as used.
    pub params: SystemParameters,
    pub gate: TargetGate,
}

impl DesignFile {
    pub fn new(result: &DesignResult, params: &SystemParameters, gate: &TargetGate) -> Self {
        Self {
            format_version: FORMAT_VERSION,
            target: result.target.clone(),
            sequence: SequenceFile::new(&result.sequence, &result.target),
            fidelity: result.fidelity,
            gate_time_us: result.gate_time,
            echo_residual_us: result.echo_residual,
            order: result.order,
            seed: result.seed,
            iterations: result.iterations,
            converged: result.converged,
            projected_grad_norm: result.projected_grad_norm,
            start_index: result.start_index,
            params: params.clone(),
            gate: gate.clone(),
        }
    }

    pub fn to_result(&self) -> Result<DesignResult> {
        check_version(self.format_version, "design")?;
        Ok(DesignResult {
            target: self.target.clone(),
            sequence: self.sequence.to_sequence()?,
            fidelity: self.fidelity,
            gate_time: self.gate_time_us,
            echo_residual: self.echo_residual_us,
            order: self.order,
            iterations: self.iterations,
            converged: self.converged,
            projected_grad_norm: self.projected_grad_norm,
            start_index: self.start_index,
            seed: self.seed,
        })
    }
}

/// Outcome of re-evaluating a stored design.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub stored_fidelity: f64,
    pub recomputed_fidelity: f64,
    pub fidelity_bit_exact: bool,
    pub gate_time_bit_exact: bool,
    pub symmetric: bool,
    pub echo_residual_us: f64,
    pub echo_within_tolerance: bool,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.fidelity_bit_exact && self.gate_time_bit_exact && self.symmetric && self.echo_within_tolerance
    }
}

impl DesignFile {
    /// Recompute the fidelity from the stored parameters, gate and delays.
    pub fn verify(&self) -> Result<VerifyReport> {
        let result = self.to_result()?;
        self.params.validate()?;
        let recomputed = sequence_fidelity(&self.params, &result.sequence, &self.gate);
        let echo = result.sequence.echo_residual();
        let tol = DDConstraintSet::default().echo_tolerance;
        Ok(VerifyReport {
            stored_fidelity: self.fidelity,
            recomputed_fidelity: recomputed,
            fidelity_bit_exact: recomputed.to_bits() == self.fidelity.to_bits(),
            gate_time_bit_exact: result.sequence.total_time().to_bits() == self.gate_time_us.to_bits(),
            symmetric: self.order < 2 || result.sequence.is_symmetric(),
            echo_residual_us: echo,
            echo_within_tolerance: echo.abs() <= tol,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BathSpinRecord {
    pub position_angstrom: Vec3,
    pub hyperfine_mhz: Vec3,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PairRecord {
    pub i: usize,
    pub j: usize,
    pub coupling_mhz: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BathFile {
    pub format_version: u32,
    pub seed: u64,
    pub spec: BathSpec,
    pub n_spins: usize,
    /// Fitted FID dephasing time, when selection produced one.
    pub t2star_us: Option<f64>,
    pub spins: Vec<BathSpinRecord>,
    pub pair_couplings: Vec<PairRecord>,
    pub n14_a_parallel_mhz: Option<f64>,
}

impl BathFile {
    pub fn new(bath: &SpinBath, spec: &BathSpec, t2star: Option<f64>) -> Self {
        Self {
            format_version: FORMAT_VERSION,
            seed: bath.seed,
            spec: spec.clone(),
            n_spins: bath.len(),
            t2star_us: t2star,
            spins: bath
                .spins
                .iter()
                .map(|s| BathSpinRecord {
                    position_angstrom: s.position,
                    hyperfine_mhz: mhz(&s.center_coupling),
                })
                .collect(),
            pair_couplings: bath
                .pair_couplings
                .iter()
                .map(|p| PairRecord {
                    i: p.i,
                    j: p.j,
                    coupling_mhz: p.d / TAU,
                })
                .collect(),
            n14_a_parallel_mhz: bath.n14.map(|n| n.a_parallel / TAU),
        }
    }

    pub fn to_bath(&self) -> Result<SpinBath> {
        check_version(self.format_version, "bath")?;
        let n = self.spins.len();
        if n != self.n_spins {
            return Err(Error::Validation(format!(
                "bath: n_spins = {} but {} spins listed",
                self.n_spins, n
            )));
        }
        if self.pair_couplings.len() != n * n.saturating_sub(1) / 2 {
            return Err(Error::Validation(format!(
                "bath: expected {} pair couplings, found {}",
                n * n.saturating_sub(1) / 2,
                self.pair_couplings.len()
            )));
        }
        let mut bath = SpinBath::from_positions(
            &self.spins.iter().map(|s| s.position_angstrom).collect::<Vec<_>>(),
            self.spec.b_field_gauss,
            self.seed,
        )?;
        bath.spins = self
            .spins
            .iter()
            .map(|s| BathSpin {
                position: s.position_angstrom,
                center_coupling: angular(&s.hyperfine_mhz),
            })
            .collect();
        for (slot, rec) in bath.pair_couplings.iter_mut().zip(&self.pair_couplings) {
            if (rec.i, rec.j) != (slot.i, slot.j) {
                return Err(Error::Validation(format!(
                    "bath: pair ({}, {}) out of order, expected ({}, {})",
                    rec.i, rec.j, slot.i, slot.j
                )));
            }
            slot.d = rec.coupling_mhz * TAU;
        }
        bath.zeeman = [0.0, 0.0, GAMMA_C13 * self.spec.b_field_gauss];
        bath.n14 = self.n14_a_parallel_mhz.map(|a| N14Coupling { a_parallel: a * TAU });
        Ok(bath)
    }
}

/// Pretty JSON with a trailing newline.
pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

pub fn from_json<T: for<'de> Deserialize<'de>>(text: &str) -> Result<T> {
    Ok(serde_json::from_str(text)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bath::generate_bath;
    use proptest::prelude::*;

    #[test]
    fn params_file_round_trip() {
        let f = SystemParamsFile::experimental();
        let text = to_json(&f).unwrap();
        let back: SystemParamsFile = from_json(&text).unwrap();
        assert_eq!(back, f);
        assert_eq!(to_json(&back).unwrap(), text);
        let p = back.to_params().unwrap();
        assert_eq!(p.fields, SystemParameters::experimental().fields);
        assert!(from_json::<SystemParamsFile>(r#"{"omega0_mhz":[0,0,1],"omega1_mhz":[0,0,1],"bogus":1}"#).is_err());
    }

    #[test]
    fn sequence_file_rejects_bad_input() {
        let bad_len = r#"{"format_version":1,"n_pulses":2,"delays_us":[1.0,2.0],"label":""}"#;
        assert!(from_json::<SequenceFile>(bad_len).unwrap().to_sequence().is_err());
        let negative = r#"{"format_version":1,"n_pulses":1,"delays_us":[1.0,-2.0],"label":""}"#;
        assert!(from_json::<SequenceFile>(negative).unwrap().to_sequence().is_err());
        let version = r#"{"format_version":9,"n_pulses":1,"delays_us":[1.0,2.0],"label":""}"#;
        assert!(from_json::<SequenceFile>(version).unwrap().to_sequence().is_err());
    }

    #[test]
    fn delays_written_with_17_digits() {
        let seq = PulseSequence::new(vec![0.5, 1.0, 0.5]).unwrap();
        let text = to_json(&SequenceFile::new(&seq, "x")).unwrap();
        assert!(text.contains("5.0000000000000000e-1"), "{text}");
    }

    #[test]
    fn bath_file_round_trip() {
        let spec = BathSpec {
            seed: 11,
            n_spins: Some(5),
            include_n14: true,
            ..BathSpec::default()
        };
        let bath = generate_bath(&spec).unwrap();
        let file = BathFile::new(&bath, &spec, Some(1.5));
        let text = to_json(&file).unwrap();
        let back: BathFile = from_json(&text).unwrap();
        assert_eq!(to_json(&back).unwrap(), text);
        let b2 = back.to_bath().unwrap();
        assert_eq!(b2.len(), bath.len());
        for (a, b) in b2.spins.iter().zip(&bath.spins) {
            assert_eq!(a.position, b.position);
            for k in 0..3 {
                assert!((a.center_coupling[k] - b.center_coupling[k]).abs() <= 1e-15 * b.center_coupling[k].abs().max(1.0));
            }
        }
        for (a, b) in b2.pair_couplings.iter().zip(&bath.pair_couplings) {
            assert!((a.d - b.d).abs() <= 1e-15 * b.d.abs());
        }
        assert!(b2.n14.is_some());
    }

    #[test]
    fn stored_design_verifies_bit_exactly() {
        use crate::design::{design_gate, OptimizerConfig};
        use crate::gate::GateKind;
        let params = SystemParameters::experimental();
        let g = GateKind::Null.target();
        let cfg = OptimizerConfig {
            n_starts: 2,
            max_iters: 200,
            ..OptimizerConfig::default()
        };
        let r = design_gate(&params, &g, &cfg, &DDConstraintSet::default()).unwrap();
        let text = to_json(&DesignFile::new(&r, &params, &g)).unwrap();
        let mut back: DesignFile = from_json(&text).unwrap();
        let report = back.verify().unwrap();
        assert!(report.passed(), "{report:?}");
        back.fidelity = f64::from_bits(back.fidelity.to_bits() - 1);
        assert!(!back.verify().unwrap().passed());
    }

    proptest! {
        #[test]
        fn sequence_file_round_trips_bit_exactly(delays in prop::collection::vec(0.0f64..10.0, 1..16)) {
            let seq = PulseSequence::new(delays).unwrap();
            let text = to_json(&SequenceFile::new(&seq, "p")).unwrap();
            let back = from_json::<SequenceFile>(&text).unwrap().to_sequence().unwrap();
            prop_assert_eq!(back.delays(), seq.delays());
        }
    }
}
