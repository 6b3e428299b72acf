//! Electron-nuclear two-qubit model.
//!
//! The nuclear spin sees a local field that depends on the electron state:
//! `H = sum_m |m><m| (omega_m . I)`. Electron energies are dropped (rotating
//! frame). Branch `1` is the `m = -1` electron state. Frequencies are angular,
//! in rad/us; times are in us.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, Mat2, Vec3};

/// Electron branch label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Branch {
    Zero,
    One,
}

impl Branch {
    pub fn index(self) -> usize {
        match self {
            Branch::Zero => 0,
            Branch::One => 1,
        }
    }

    pub fn from_index(m: usize) -> Result<Self> {
        match m {
            0 => Ok(Branch::Zero),
            1 => Ok(Branch::One),
            _ => Err(Error::Domain(format!("electron branch must be 0 or 1, got {m}"))),
        }
    }

    /// The branch after a pi-pulse.
    pub fn flipped(self) -> Self {
        match self {
            Branch::Zero => Branch::One,
            Branch::One => Branch::Zero,
        }
    }
}

/// Conditional nuclear local fields `omega_0`, `omega_1` in rad/us.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConditionalFieldPair {
    pub omega0: Vec3,
    pub omega1: Vec3,
}

impl ConditionalFieldPair {
    pub fn new(omega0: Vec3, omega1: Vec3) -> Result<Self> {
        if omega0.iter().chain(omega1.iter()).any(|x| !x.is_finite()) {
            return Err(Error::Validation("conditional fields must be finite".into()));
        }
        Ok(Self { omega0, omega1 })
    }

    /// Build from linear frequencies in MHz; each component is multiplied by 2 pi.
    pub fn from_mhz(omega0_mhz: Vec3, omega1_mhz: Vec3) -> Result<Self> {
        Self::new(linalg::scale(&omega0_mhz, TAU), linalg::scale(&omega1_mhz, TAU))
    }

    /// Perpendicular pair with the given magnitudes in MHz: `omega_0` along x,
    /// `omega_1` along z.
    pub fn perpendicular_mhz(omega0_mhz: f64, omega1_mhz: f64) -> Result<Self> {
        Self::from_mhz([omega0_mhz, 0.0, 0.0], [0.0, 0.0, omega1_mhz])
    }

    pub fn field(&self, m: Branch) -> &Vec3 {
        match m {
            Branch::Zero => &self.omega0,
            Branch::One => &self.omega1,
        }
    }

    /// Rescale both fields by `s` (used by time-scaling checks).
    pub fn scaled(&self, s: f64) -> Self {
        Self {
            omega0: linalg::scale(&self.omega0, s),
            omega1: linalg::scale(&self.omega1, s),
        }
    }

    pub fn is_trivial(&self) -> bool {
        linalg::norm(&self.omega0) == 0.0 && linalg::norm(&self.omega1) == 0.0
    }
}

/// `omega_m . I` for one electron branch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConditionalHamiltonian {
    pub m: Branch,
    pub matrix: Mat2,
}

/// Model parameters for one electron-nuclear register.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemParameters {
    pub fields: ConditionalFieldPair,
    /// Applied field magnitude, kept for provenance only.
    pub b_field_gauss: f64,
    /// Nuclear gyromagnetic ratio in rad/(us G).
    pub gyromagnetic_ratio_nuc: f64,
    /// Hyperfine field vector in rad/us, when the pair was built from one.
    pub hyperfine_vec: Option<Vec3>,
}

/// 13C gyromagnetic ratio, 1.07084 kHz/G, as rad/(us G).
pub const GAMMA_C13: f64 = TAU * 1.070_84e-3;

/// Measured local-field magnitudes of the demonstrated register, MHz.
pub const EXPERIMENTAL_OMEGA0_MHZ: f64 = 0.256;
pub const EXPERIMENTAL_OMEGA1_MHZ: f64 = 6.410;
pub const EXPERIMENTAL_B_GAUSS: f64 = 100.0;

impl SystemParameters {
    pub fn new(fields: ConditionalFieldPair) -> Self {
        Self {
            fields,
            b_field_gauss: 0.0,
            gyromagnetic_ratio_nuc: GAMMA_C13,
            hyperfine_vec: None,
        }
    }

    /// The demonstrated register: `|omega_0| = 0.256 MHz`, `|omega_1| = 6.410 MHz`,
    /// perpendicular, with `omega_1` along the nuclear quantization axis z.
    pub fn experimental() -> Self {
        let fields = ConditionalFieldPair::perpendicular_mhz(
            EXPERIMENTAL_OMEGA0_MHZ,
            EXPERIMENTAL_OMEGA1_MHZ,
        )
        .expect("finite constants");
        let hyperfine = linalg::sub(&fields.omega1, &fields.omega0);
        Self {
            fields,
            b_field_gauss: EXPERIMENTAL_B_GAUSS,
            gyromagnetic_ratio_nuc: GAMMA_C13,
            hyperfine_vec: Some(hyperfine),
        }
    }

    pub fn from_hyperfine(b_vec: Vec3, gamma_n: f64, a_vec: Vec3) -> Result<Self> {
        let fields = local_fields_from_hyperfine(b_vec, gamma_n, a_vec)?;
        Ok(Self {
            fields,
            b_field_gauss: linalg::norm(&b_vec),
            gyromagnetic_ratio_nuc: gamma_n,
            hyperfine_vec: Some(a_vec),
        })
    }

    pub fn validate(&self) -> Result<()> {
        ConditionalFieldPair::new(self.fields.omega0, self.fields.omega1)?;
        if let Some(a) = &self.hyperfine_vec {
            let expect = linalg::add(&self.fields.omega0, a);
            let dev = linalg::norm(&linalg::sub(&expect, &self.fields.omega1));
            if !(dev <= 1e-9) {
                return Err(Error::Validation(format!(
                    "omega1 differs from omega0 + hyperfine by {dev:e} rad/us"
                )));
            }
        }
        Ok(())
    }

    pub fn hamiltonian(&self, m: Branch) -> ConditionalHamiltonian {
        conditional_hamiltonian(&self.fields, m)
    }
}

/// `omega_0 = gamma_n B`, `omega_1 = omega_0 + A`.
pub fn local_fields_from_hyperfine(
    b_vec: Vec3,
    gamma_n: f64,
    a_vec: Vec3,
) -> Result<ConditionalFieldPair> {
    if b_vec.iter().any(|x| !x.is_finite()) {
        return Err(Error::Domain("magnetic field must be finite".into()));
    }
    let omega0 = linalg::scale(&b_vec, gamma_n);
    let omega1 = linalg::add(&omega0, &a_vec);
    ConditionalFieldPair::new(omega0, omega1)
}

/// Angle between the two conditional fields, in `[0, pi]`.
pub fn field_angle(fields: &ConditionalFieldPair) -> Result<f64> {
    let n0 = linalg::norm(&fields.omega0);
    let n1 = linalg::norm(&fields.omega1);
    if n0 == 0.0 {
        return Err(Error::Domain("omega0 (branch 0) is the zero vector".into()));
    }
    if n1 == 0.0 {
        return Err(Error::Domain("omega1 (branch 1) is the zero vector".into()));
    }
    let c = linalg::dot(&fields.omega0, &fields.omega1) / (n0 * n1);
    Ok(c.clamp(-1.0, 1.0).acos())
}

pub fn conditional_hamiltonian(fields: &ConditionalFieldPair, m: Branch) -> ConditionalHamiltonian {
    ConditionalHamiltonian {
        m,
        matrix: Mat2::spin_half(fields.field(m)),
    }
}
