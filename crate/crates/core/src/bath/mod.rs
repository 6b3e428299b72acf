//! Simulated 13C nuclear spin baths and the engines that evaluate designed
//! sequences against them.
//!
//! Conventions:
//! * The electron sits at the origin with its quantization axis along z (the
//!   NV axis). The applied field is along z as well, so every bath spin has
//!   the same branch-0 field `gamma_n B z`.
//! * Bath spin `j` sees `omega_1 = omega_0 + a_j` in branch 1, where `a_j` is
//!   the secular dipolar hyperfine field of the electron.
//! * Bath spins interact through the secular like-spin dipolar coupling
//!   `D_ij [Iz Iz - (I+ I- + I- I+) / 4]`.
//! * The bath starts maximally mixed.
//! * The target nuclear spin is not part of the bath and has no coupling to it.

pub mod cce;
pub mod coherence;
pub mod dense;
pub mod lattice;
pub mod select;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, Vec3};
use crate::rng;
use crate::spin_model::GAMMA_C13;

/// `mu_0 hbar / (4 pi)` in units where gyromagnetic ratios are rad/(us G),
/// distances are angstrom and the result is rad/us.
pub const DIPOLAR_PREFACTOR: f64 = 1.054_571_817e3;

/// Electron gyromagnetic ratio magnitude, 2.8025 MHz/G, as rad/(us G).
pub const GAMMA_E: f64 = std::f64::consts::TAU * 2.802_5;

/// Natural 13C abundance.
pub const NATURAL_ABUNDANCE: f64 = 0.011;

/// Secular dipolar coefficient `mu_0 hbar gamma_i gamma_j (1 - 3 cos^2 theta) / (4 pi r^3)`,
/// with `theta` the angle between `r_j - r_i` and z. Returns rad/us.
pub fn dipolar_coupling(r_i: &Vec3, r_j: &Vec3, gamma_i: f64, gamma_j: f64) -> Result<f64> {
    let d = linalg::sub(r_j, r_i);
    let r = linalg::norm(&d);
    if r == 0.0 {
        return Err(Error::Domain("dipolar coupling of coincident positions".into()));
    }
    let cos = d[2] / r;
    Ok(DIPOLAR_PREFACTOR * gamma_i * gamma_j * (1.0 - 3.0 * cos * cos) / (r * r * r))
}

/// Secular hyperfine field seen by a nuclear spin at `r` when the electron
/// is in branch 1: `C (3 n_z n - z) / r^3` with `C = mu_0 hbar gamma_e gamma_n / 4 pi`.
pub fn dipolar_hyperfine(r: &Vec3, gamma_n: f64) -> Result<Vec3> {
    let d = linalg::norm(r);
    if d == 0.0 {
        return Err(Error::Domain("hyperfine field at the electron position".into()));
    }
    let n = linalg::scale(r, 1.0 / d);
    let c = DIPOLAR_PREFACTOR * GAMMA_E * gamma_n / (d * d * d);
    Ok([c * 3.0 * n[2] * n[0], c * 3.0 * n[2] * n[1], c * (3.0 * n[2] * n[2] - 1.0)])
}

/// Host 14N nucleus, treated as a static spin-1 shift of branch 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct N14Coupling {
    /// Longitudinal hyperfine constant, rad/us.
    pub a_parallel: f64,
}

impl N14Coupling {
    /// `A_par = -2.16 MHz`, a commonly quoted NV value.
    pub fn nv_default() -> Self {
        Self {
            a_parallel: std::f64::consts::TAU * -2.16,
        }
    }
}

/// Missing fields take their [`Default`] values when deserialized.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BathSpec {
    /// Sphere radius for lattice placement, angstrom.
    pub radius: f64,
    /// Sites at or inside this radius stay empty, angstrom.
    pub exclusion_radius: f64,
    pub abundance: f64,
    /// Keep only the `n` spins with the strongest hyperfine field. Candidates
    /// with fewer spins are rejected during selection.
    pub n_spins: Option<usize>,
    pub b_field_gauss: f64,
    pub include_n14: bool,
    pub n14: N14Coupling,
    /// Target FID dephasing time and accepted deviation, us.
    pub target_t2star: f64,
    pub t2star_tolerance: f64,
    pub max_candidates: usize,
    pub seed: u64,
}

impl Default for BathSpec {
    fn default() -> Self {
        Self {
            radius: 18.0,
            exclusion_radius: 4.0,
            abundance: NATURAL_ABUNDANCE,
            n_spins: None,
            b_field_gauss: 100.0,
            include_n14: false,
            n14: N14Coupling::nv_default(),
            target_t2star: 1.55,
            t2star_tolerance: 0.25,
            max_candidates: 200,
            seed: 0,
        }
    }
}

impl BathSpec {
    /// A small bath of the 6 most strongly coupled spins.
    pub fn small() -> Self {
        Self {
            n_spins: Some(6),
            ..Self::default()
        }
    }

    /// A 44-spin bath for cluster-expansion runs.
    pub fn large() -> Self {
        Self {
            n_spins: Some(44),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Validation(m.to_string()));
        if !(self.abundance > 0.0 && self.abundance < 1.0) {
            return bad("abundance must lie in (0, 1)");
        }
        if !(self.radius > 0.0) {
            return bad("radius must be positive");
        }
        if !(self.exclusion_radius >= 0.0 && self.exclusion_radius < self.radius) {
            return bad("exclusion_radius must lie in [0, radius)");
        }
        if !self.b_field_gauss.is_finite() {
            return bad("b_field_gauss must be finite");
        }
        if !(self.target_t2star > 0.0 && self.t2star_tolerance >= 0.0) {
            return bad("target_t2star must be positive and t2star_tolerance nonnegative");
        }
        if self.max_candidates < 1 {
            return bad("max_candidates must be at least 1");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BathSpin {
    /// Angstrom, NV frame.
    pub position: Vec3,
    /// Branch-1 hyperfine field, rad/us.
    pub center_coupling: Vec3,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairCoupling {
    pub i: usize,
    pub j: usize,
    /// rad/us
    pub d: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpinBath {
    pub spins: Vec<BathSpin>,
    /// One entry per unordered pair `i < j`, row-major.
    pub pair_couplings: Vec<PairCoupling>,
    /// Common branch-0 field `gamma_n B`, rad/us.
    pub zeeman: Vec3,
    pub n14: Option<N14Coupling>,
    pub seed: u64,
}

impl SpinBath {
    pub fn empty() -> Self {
        Self {
            spins: Vec::new(),
            pair_couplings: Vec::new(),
            zeeman: [0.0; 3],
            n14: None,
            seed: 0,
        }
    }

    /// Build couplings for explicit spin positions.
    pub fn from_positions(positions: &[Vec3], b_field_gauss: f64, seed: u64) -> Result<Self> {
        let spins = positions
            .iter()
            .map(|r| {
                Ok(BathSpin {
                    position: *r,
                    center_coupling: dipolar_hyperfine(r, GAMMA_C13)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let mut pair_couplings = Vec::new();
        for i in 0..spins.len() {
            for j in i + 1..spins.len() {
                let d = dipolar_coupling(&spins[i].position, &spins[j].position, GAMMA_C13, GAMMA_C13)?;
                pair_couplings.push(PairCoupling { i, j, d });
            }
        }
        Ok(Self {
            spins,
            pair_couplings,
            zeeman: [0.0, 0.0, GAMMA_C13 * b_field_gauss],
            n14: None,
            seed,
        })
    }

    pub fn len(&self) -> usize {
        self.spins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.spins.is_empty()
    }

    /// Branch fields of spin `k`.
    pub fn fields(&self, k: usize) -> [Vec3; 2] {
        [self.zeeman, linalg::add(&self.zeeman, &self.spins[k].center_coupling)]
    }

    pub fn coupling(&self, i: usize, j: usize) -> f64 {
        let (a, b) = if i < j { (i, j) } else { (j, i) };
        let n = self.spins.len();
        // offset of row a in the packed upper triangle
        let idx = a * n - a * (a + 1) / 2 + (b - a - 1);
        self.pair_couplings[idx].d
    }

    /// The same bath with spins reordered: new spin `k` is old spin `perm[k]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        let mut seen = vec![false; self.len()];
        for &k in perm {
            if k >= self.len() || std::mem::replace(&mut seen[k], true) {
                return Err(Error::Validation(format!("{perm:?} is not a permutation of the bath")));
            }
        }
        if perm.len() != self.len() {
            return Err(Error::Validation(format!("{perm:?} is not a permutation of the bath")));
        }
        let positions: Vec<Vec3> = perm.iter().map(|&k| self.spins[k].position).collect();
        let mut out = Self::from_positions(&positions, 0.0, self.seed)?;
        out.zeeman = self.zeeman;
        out.n14 = self.n14;
        out.spins = perm.iter().map(|&k| self.spins[k]).collect();
        Ok(out)
    }

    /// Static 14N dephasing factor for a sequence with echo residual `echo`.
    /// Averages `exp(i A m_I echo)` over `m_I in {-1, 0, 1}`.
    pub fn n14_factor(&self, echo: f64) -> f64 {
        match self.n14 {
            Some(n) => (1.0 + 2.0 * (n.a_parallel * echo).cos()) / 3.0,
            None => 1.0,
        }
    }
}

/// Place 13C spins on diamond sites, one independent draw per site.
pub fn generate_bath(spec: &BathSpec) -> Result<SpinBath> {
    spec.validate()?;
    let mut rng = rng::stream(spec.seed, 0);
    let sites = lattice::carbon_sites(spec.radius, spec.exclusion_radius);
    let mut occupied: Vec<Vec3> = sites
        .into_iter()
        .filter(|_| rng.random::<f64>() < spec.abundance)
        .collect();
    if let Some(n) = spec.n_spins {
        if occupied.len() > n {
            let strength = |r: &Vec3| linalg::norm(&dipolar_hyperfine(r, GAMMA_C13).expect("nonzero"));
            // stable sort keeps the enumeration order among equal strengths
            occupied.sort_by(|a, b| strength(b).total_cmp(&strength(a)));
            occupied.truncate(n);
        }
    }
    let mut bath = SpinBath::from_positions(&occupied, spec.b_field_gauss, spec.seed)?;
    if spec.include_n14 {
        bath.n14 = Some(spec.n14);
    }
    Ok(bath)
}

/// Number of lattice sites a spec draws from.
pub fn candidate_site_count(spec: &BathSpec) -> usize {
    lattice::carbon_sites(spec.radius, spec.exclusion_radius).len()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn magic_angle_coupling_vanishes() {
        let c = (1.0f64 / 3.0).sqrt();
        let s = (1.0 - c * c).sqrt();
        let d = dipolar_coupling(&[0.0; 3], &[3.0 * s, 0.0, 3.0 * c], GAMMA_C13, GAMMA_C13).unwrap();
        assert!(d.abs() < 1e-17);
    }

    #[test]
    fn inverse_cube_law() {
        let a = dipolar_coupling(&[0.0; 3], &[1.0, 2.0, 2.0], GAMMA_C13, GAMMA_C13).unwrap();
        let b = dipolar_coupling(&[0.0; 3], &[2.0, 4.0, 4.0], GAMMA_C13, GAMMA_C13).unwrap();
        assert_eq!(a / b, 8.0);
    }

    #[test]
    fn coincident_positions_rejected() {
        assert!(dipolar_coupling(&[1.0; 3], &[1.0; 3], 1.0, 1.0).is_err());
    }

    #[test]
    fn axial_pair_against_si_pipeline() {
        // independent route in SI units: mu0/4pi * hbar * gamma^2 * (1 - 3) / r^3
        let mu0_over_4pi = 1e-7; // T m / A
        let hbar = 1.054_571_817e-34; // J s
        let gamma_si = 2.0 * std::f64::consts::PI * 10.7084e6; // rad / (s T)
        let r: f64 = 3e-10; // m
        let si = mu0_over_4pi * hbar * gamma_si * gamma_si * (1.0 - 3.0) / r.powi(3); // rad/s
        let expect = si * 1e-6; // rad/us
        let got = dipolar_coupling(&[0.0; 3], &[0.0, 0.0, 3.0], GAMMA_C13, GAMMA_C13).unwrap();
        assert!((got / expect - 1.0).abs() < 1e-12, "{got} vs {expect}");
        // about -0.56 kHz in linear units
        assert!((got / std::f64::consts::TAU * 1e3 + 0.563).abs() < 0.001);
    }

    #[test]
    fn hyperfine_magnitude_at_five_angstrom() {
        // 19.9 MHz A^3 / r^3 along the axis -> 2 * 0.159 MHz
        let a = dipolar_hyperfine(&[0.0, 0.0, 5.0], GAMMA_C13).unwrap();
        let mhz = a[2] / std::f64::consts::TAU;
        assert!((mhz - 2.0 * 19.9 / 125.0).abs() < 0.003, "{mhz}");
    }

    #[test]
    fn zero_abundance_limit_gives_empty_bath() {
        let spec = BathSpec {
            abundance: 1e-12,
            ..BathSpec::default()
        };
        assert!(generate_bath(&spec).unwrap().is_empty());
        let bad = BathSpec {
            abundance: 0.0,
            ..BathSpec::default()
        };
        assert!(generate_bath(&bad).is_err());
    }

    #[test]
    fn generation_is_deterministic_and_respects_spec() {
        let spec = BathSpec {
            seed: 42,
            ..BathSpec::default()
        };
        let a = generate_bath(&spec).unwrap();
        let b = generate_bath(&spec).unwrap();
        assert_eq!(a, b);
        for s in &a.spins {
            let r = linalg::norm(&s.position);
            assert!(r > spec.exclusion_radius && r <= spec.radius);
        }
        let n = a.len();
        assert_eq!(a.pair_couplings.len(), n * (n - 1) / 2);
        for p in &a.pair_couplings {
            assert!(p.i < p.j);
            assert_eq!(a.coupling(p.i, p.j), p.d);
            assert_eq!(a.coupling(p.j, p.i), p.d);
        }
    }

    #[test]
    fn truncation_keeps_strongest() {
        let spec = BathSpec {
            seed: 3,
            n_spins: Some(6),
            ..BathSpec::default()
        };
        let full = generate_bath(&BathSpec { n_spins: None, ..spec.clone() }).unwrap();
        let small = generate_bath(&spec).unwrap();
        assert_eq!(small.len(), 6);
        let weakest_kept = small
            .spins
            .iter()
            .map(|s| linalg::norm(&s.center_coupling))
            .fold(f64::INFINITY, f64::min);
        let stronger = full
            .spins
            .iter()
            .filter(|s| linalg::norm(&s.center_coupling) > weakest_kept)
            .count();
        assert!(stronger <= 5);
    }

    #[test]
    fn spin_count_is_binomial() {
        let spec = BathSpec::default();
        let n = candidate_site_count(&spec) as f64;
        let mean = n * spec.abundance;
        let sigma = (n * spec.abundance * (1.0 - spec.abundance)).sqrt();
        for seed in 0..100 {
            let k = generate_bath(&BathSpec { seed, ..spec.clone() }).unwrap().len() as f64;
            assert!((k - mean).abs() <= 4.0 * sigma, "seed {seed}: {k} vs {mean} +- {sigma}");
        }
    }
}
