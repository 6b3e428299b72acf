//! Exact evolution of a small nuclear register under the two electron
//! branches, by diagonalizing each branch Hamiltonian once.
//!
//! Basis ordering: spin 0 is the most significant bit, bit value 0 is spin up.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64 as C64;

use super::SpinBath;
use crate::error::{Error, Result};
use crate::gate::TargetGate;
use crate::linalg::{Vec3, ZERO};
use crate::propagator::{branch_at, system_propagator, PulseSequence};
use crate::spin_model::{Branch, SystemParameters};

/// Largest bath the dense engine accepts.
pub const DENSE_BATH_LIMIT: usize = 8;

/// Nuclear spins with branch-dependent fields and secular like-spin couplings.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseRegister {
    pub fields: Vec<[Vec3; 2]>,
    /// `(i, j, D)` with the term `D [Iz Iz - (I+ I- + I- I+) / 4]`.
    pub couplings: Vec<(usize, usize, f64)>,
}

struct Spectrum {
    vectors: DMatrix<C64>,
    values: DVector<f64>,
}

impl Spectrum {
    fn exp(&self, t: f64) -> DMatrix<C64> {
        let phases = self.values.map(|e| C64::from_polar(1.0, -e * t));
        let mut left = self.vectors.clone();
        for (k, mut col) in left.column_iter_mut().enumerate() {
            col *= phases[k];
        }
        left * self.vectors.adjoint()
    }
}

impl DenseRegister {
    /// Bath spins only.
    pub fn from_bath(bath: &SpinBath) -> Result<Self> {
        check_capacity(bath)?;
        Ok(Self {
            fields: (0..bath.len()).map(|k| bath.fields(k)).collect(),
            couplings: bath.pair_couplings.iter().map(|p| (p.i, p.j, p.d)).collect(),
        })
    }

    /// Target spin (index 0) followed by the bath spins, with no target-bath coupling.
    pub fn with_target(params: &SystemParameters, bath: &SpinBath) -> Result<Self> {
        check_capacity(bath)?;
        let mut fields = vec![[params.fields.omega0, params.fields.omega1]];
        fields.extend((0..bath.len()).map(|k| bath.fields(k)));
        let couplings = bath.pair_couplings.iter().map(|p| (p.i + 1, p.j + 1, p.d)).collect();
        Ok(Self { fields, couplings })
    }

    pub fn n_spins(&self) -> usize {
        self.fields.len()
    }

    pub fn dim(&self) -> usize {
        1 << self.fields.len()
    }

    pub fn hamiltonian(&self, m: Branch) -> DMatrix<C64> {
        let n = self.n_spins();
        let dim = self.dim();
        let bit = |idx: usize, s: usize| (idx >> (n - 1 - s)) & 1;
        let sz = |idx: usize, s: usize| if bit(idx, s) == 0 { 0.5 } else { -0.5 };
        let mut h = DMatrix::from_element(dim, dim, ZERO);
        for idx in 0..dim {
            for (s, f) in self.fields.iter().enumerate() {
                let w = f[m.index()];
                h[(idx, idx)] += C64::new(w[2] * sz(idx, s), 0.0);
                if bit(idx, s) == 0 {
                    // <up| w.sigma/2 |down> = (wx - i wy)/2
                    let jdx = idx | (1 << (n - 1 - s));
                    let e = C64::new(w[0] / 2.0, -w[1] / 2.0);
                    h[(idx, jdx)] += e;
                    h[(jdx, idx)] += e.conj();
                }
            }
            for &(i, j, d) in &self.couplings {
                h[(idx, idx)] += C64::new(d * sz(idx, i) * sz(idx, j), 0.0);
                if bit(idx, i) != bit(idx, j) {
                    let jdx = idx ^ (1 << (n - 1 - i)) ^ (1 << (n - 1 - j));
                    h[(idx, jdx)] += C64::new(-d / 4.0, 0.0);
                }
            }
        }
        h
    }

    fn spectra(&self) -> [Spectrum; 2] {
        [Branch::Zero, Branch::One].map(|m| {
            let e = SymmetricEigen::new(self.hamiltonian(m));
            Spectrum {
                vectors: e.eigenvectors,
                values: e.eigenvalues,
            }
        })
    }

    /// `[V_0, V_1]`, where `V_m` is the register propagator for the electron
    /// starting in branch `m`.
    pub fn propagators(&self, seq: &PulseSequence) -> [DMatrix<C64>; 2] {
        self.propagators_with(&self.spectra(), seq)
    }

    fn propagators_with(&self, spectra: &[Spectrum; 2], seq: &PulseSequence) -> [DMatrix<C64>; 2] {
        let dim = self.dim();
        [Branch::Zero, Branch::One].map(|m| {
            let mut v = DMatrix::<C64>::identity(dim, dim);
            for (a, &t) in seq.delays().iter().enumerate() {
                if t == 0.0 {
                    continue;
                }
                v = spectra[branch_at(m, a).index()].exp(t) * v;
            }
            v
        })
    }
}

fn check_capacity(bath: &SpinBath) -> Result<()> {
    if bath.len() > DENSE_BATH_LIMIT {
        return Err(Error::Capacity {
            spins: bath.len(),
            limit: DENSE_BATH_LIMIT,
        });
    }
    Ok(())
}

/// `max |V^dagger V - I|` entry.
pub fn unitarity_residual(v: &DMatrix<C64>) -> f64 {
    let d = v.adjoint() * v - DMatrix::<C64>::identity(v.nrows(), v.ncols());
    d.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Bath coherence factor `Tr(V_1^dagger V_0) / 2^n` for a maximally mixed bath.
pub fn dense_bath_coherence(bath: &SpinBath, seq: &PulseSequence) -> Result<C64> {
    Ok(dense_bath_coherence_many(bath, std::slice::from_ref(seq))?[0])
}

/// [`dense_bath_coherence`] for several sequences, diagonalizing once.
pub fn dense_bath_coherence_many(bath: &SpinBath, seqs: &[PulseSequence]) -> Result<Vec<C64>> {
    let reg = DenseRegister::from_bath(bath)?;
    if reg.n_spins() == 0 {
        return Ok(seqs.iter().map(|s| C64::from(bath.n14_factor(s.echo_residual()))).collect());
    }
    let spectra = reg.spectra();
    Ok(seqs
        .iter()
        .map(|s| {
            let [v0, v1] = reg.propagators_with(&spectra, s);
            let tr = (v1.adjoint() * v0).trace();
            tr / reg.dim() as f64 * bath.n14_factor(s.echo_residual())
        })
        .collect())
}

/// State fidelity `<phi|rho_s|phi>` of the electron and target after `seq`,
/// with the bath traced out. `psi0` is in the basis
/// `|0 up>, |0 down>, |1 up>, |1 down>`; `phi` is the ideal gate output, with
/// gate phases chosen to best match the bath-free propagator.
pub fn exact_state_fidelity(
    params: &SystemParameters,
    bath: &SpinBath,
    seq: &PulseSequence,
    g: &TargetGate,
    psi0: &[C64; 4],
) -> Result<f64> {
    let norm: f64 = psi0.iter().map(|z| z.norm_sqr()).sum();
    if !((norm - 1.0).abs() < 1e-9) {
        return Err(Error::Domain(format!("psi0 is not normalized (norm^2 = {norm})")));
    }
    let reg = DenseRegister::with_target(params, bath)?;
    let [v0, v1] = reg.propagators(seq);
    let db = 1usize << bath.len();

    // joint output for bath basis state b: sum_m |m> (x) V_m (psi_m (x) |b>)
    // reduced state: rho_s = (1/db) sum_b Tr_bath |w_b><w_b|
    let mut rho = [[ZERO; 4]; 4];
    for b in 0..db {
        let mut cols: [DVector<C64>; 2] = [DVector::zeros(2 * db), DVector::zeros(2 * db)];
        for (m, v) in [&v0, &v1].iter().enumerate() {
            for t in 0..2 {
                let amp = psi0[2 * m + t];
                if amp != ZERO {
                    cols[m] += v.column(t * db + b) * amp;
                }
            }
        }
        // rho[(m,t),(m',t')] += sum_{b'} cols[m][t,b'] conj(cols[m'][t',b'])
        for r in 0..4 {
            for c in 0..4 {
                let (m, t) = (r / 2, r % 2);
                let (m2, t2) = (c / 2, c % 2);
                let mut acc = ZERO;
                for bp in 0..db {
                    acc += cols[m][t * db + bp] * cols[m2][t2 * db + bp].conj();
                }
                rho[r][c] += acc;
            }
        }
    }
    let n14 = bath.n14_factor(seq.echo_residual());
    for r in 0..4 {
        for c in 0..4 {
            rho[r][c] /= db as f64;
            if r / 2 != c / 2 {
                rho[r][c] *= n14;
            }
        }
    }

    let ideal = system_propagator(params, seq);
    let [o0, o1] = g.aligned_blocks(&ideal);
    let p0 = o0.apply(&[psi0[0], psi0[1]]);
    let p1 = o1.apply(&[psi0[2], psi0[3]]);
    let phi = [p0[0], p0[1], p1[0], p1[1]];
    let mut f = ZERO;
    for r in 0..4 {
        for c in 0..4 {
            f += phi[r].conj() * rho[r][c] * phi[c];
        }
    }
    Ok(f.re)
}
