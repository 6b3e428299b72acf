//! Pair-order cluster-correlation expansion of the bath coherence factor.

use nalgebra::{Matrix2, Matrix4, SymmetricEigen, Vector4};
use num_complex::Complex64 as C64;
use rayon::prelude::*;

use super::coherence::CoherenceSeries;
use super::SpinBath;
use crate::linalg::{Mat2, Vec3, ONE, ZERO};
use crate::propagator::{branch_at, PulseSequence};
use crate::spin_model::Branch;

/// Pair corrections are skipped when the single-spin product falls below this.
const SINGLE_PRODUCT_FLOOR: f64 = 1e-10;

fn single_factor(fields: &[Vec3; 2], seq: &PulseSequence) -> C64 {
    let v = |m: Branch| {
        let mut u = Mat2::identity();
        for (a, &t) in seq.delays().iter().enumerate() {
            u = Mat2::precession(&fields[branch_at(m, a).index()], t) * u;
        }
        u
    };
    (v(Branch::One).adjoint() * v(Branch::Zero)).trace() / 2.0
}

fn pauli() -> [Matrix2<C64>; 3] {
    let i = C64::new(0.0, 1.0);
    [
        Matrix2::new(ZERO, ONE, ONE, ZERO),
        Matrix2::new(ZERO, -i, i, ZERO),
        Matrix2::new(ONE, ZERO, ZERO, -ONE),
    ]
}

/// Two-spin branch Hamiltonian built from Kronecker products.
pub(crate) fn pair_hamiltonian(fi: &Vec3, fj: &Vec3, d: f64) -> Matrix4<C64> {
    let s = pauli();
    let id = Matrix2::<C64>::identity();
    let mut h = Matrix4::<C64>::zeros();
    for k in 0..3 {
        h += s[k].kronecker(&id) * C64::from(fi[k] / 2.0);
        h += id.kronecker(&s[k]) * C64::from(fj[k] / 2.0);
    }
    h += s[2].kronecker(&s[2]) * C64::from(d / 4.0);
    h -= (s[0].kronecker(&s[0]) + s[1].kronecker(&s[1])) * C64::from(d / 8.0);
    h
}

struct PairSpectra {
    vectors: [Matrix4<C64>; 2],
    values: [Vector4<f64>; 2],
}

impl PairSpectra {
    fn new(fi: &[Vec3; 2], fj: &[Vec3; 2], d: f64) -> Self {
        let e = [0, 1].map(|m| SymmetricEigen::new(pair_hamiltonian(&fi[m], &fj[m], d)));
        Self {
            vectors: [e[0].eigenvectors, e[1].eigenvectors],
            values: [e[0].eigenvalues, e[1].eigenvalues],
        }
    }

    fn exp(&self, k: usize, t: f64) -> Matrix4<C64> {
        let mut left = self.vectors[k];
        for c in 0..4 {
            let p = C64::from_polar(1.0, -self.values[k][c] * t);
            left.column_mut(c).iter_mut().for_each(|z| *z *= p);
        }
        left * self.vectors[k].adjoint()
    }

    fn factor(&self, seq: &PulseSequence) -> C64 {
        let v = |m: Branch| {
            let mut u = Matrix4::<C64>::identity();
            for (a, &t) in seq.delays().iter().enumerate() {
                if t == 0.0 {
                    continue;
                }
                u = self.exp(branch_at(m, a).index(), t) * u;
            }
            u
        };
        (v(Branch::One).adjoint() * v(Branch::Zero)).trace() / 4.0
    }
}

/// Exact coherence factor of the two-spin cluster `(i, j)`.
pub fn pair_factor(bath: &SpinBath, i: usize, j: usize, seq: &PulseSequence) -> C64 {
    PairSpectra::new(&bath.fields(i), &bath.fields(j), bath.coupling(i, j)).factor(seq)
}

/// Exact coherence factor of spin `i` alone.
pub fn spin_factor(bath: &SpinBath, i: usize, seq: &PulseSequence) -> C64 {
    single_factor(&bath.fields(i), seq)
}

/// Bath coherence at the end of each sequence in `seqs`, CCE-2.
fn cce2_many(bath: &SpinBath, seqs: &[PulseSequence]) -> Vec<C64> {
    let n = bath.len();
    let singles: Vec<Vec<C64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let f = bath.fields(i);
            seqs.iter().map(|s| single_factor(&f, s)).collect()
        })
        .collect();
    let pairs: Vec<(usize, usize)> = bath.pair_couplings.iter().map(|p| (p.i, p.j)).collect();
    let pair_terms: Vec<Vec<C64>> = pairs
        .par_iter()
        .map(|&(i, j)| {
            let spectra = PairSpectra::new(&bath.fields(i), &bath.fields(j), bath.coupling(i, j));
            seqs.iter()
                .enumerate()
                .map(|(k, s)| {
                    let lij = spectra.factor(s);
                    let denom = singles[i][k] * singles[j][k];
                    if denom.norm() < SINGLE_PRODUCT_FLOOR {
                        ONE
                    } else {
                        lij / denom
                    }
                })
                .collect()
        })
        .collect();
    seqs.iter()
        .enumerate()
        .map(|(k, s)| {
            let mut l = ONE;
            for f in &singles {
                l *= f[k];
            }
            for f in &pair_terms {
                l *= f[k];
            }
            l * bath.n14_factor(s.echo_residual())
        })
        .collect()
}

/// CCE-2 bath coherence at the end of `seq`.
pub fn cce2_final(bath: &SpinBath, seq: &PulseSequence) -> C64 {
    cce2_many(bath, std::slice::from_ref(seq))[0]
}

/// CCE-2 bath coherence sampled at `times` along `seq`. Times past the end
/// extend the final free interval.
pub fn cce2_coherence(bath: &SpinBath, seq: &PulseSequence, times: &[f64]) -> CoherenceSeries {
    let seqs: Vec<PulseSequence> = times.iter().map(|&t| seq.truncated(t)).collect();
    let values = cce2_many(bath, &seqs);
    CoherenceSeries {
        samples: times.iter().copied().zip(values).collect(),
    }
}
