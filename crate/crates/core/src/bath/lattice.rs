//! Diamond lattice sites around an NV centre.
//!
//! The vacancy sits on a lattice site at the origin and the nitrogen on the
//! nearest-neighbour site along [111]. Coordinates are rotated so that [111]
//! (the NV axis and electron quantization axis) is the z axis.

use crate::linalg::{self, Vec3};

/// Conventional cubic lattice constant of diamond, in angstrom.
pub const DIAMOND_LATTICE_CONSTANT: f64 = 3.567;

const FCC: [[f64; 3]; 4] = [
    [0.0, 0.0, 0.0],
    [0.0, 0.5, 0.5],
    [0.5, 0.0, 0.5],
    [0.5, 0.5, 0.0],
];
const BASIS: [[f64; 3]; 2] = [[0.0, 0.0, 0.0], [0.25, 0.25, 0.25]];

/// Cubic coordinates -> NV frame with [111] along z.
fn to_nv_frame(r: &Vec3) -> Vec3 {
    let s2 = std::f64::consts::SQRT_2;
    let s3 = 3f64.sqrt();
    let s6 = 6f64.sqrt();
    let e1 = [1.0 / s2, -1.0 / s2, 0.0];
    let e2 = [1.0 / s6, 1.0 / s6, -2.0 / s6];
    let e3 = [1.0 / s3, 1.0 / s3, 1.0 / s3];
    [linalg::dot(r, &e1), linalg::dot(r, &e2), linalg::dot(r, &e3)]
}

/// Position of the nitrogen site in the NV frame.
pub fn nitrogen_site() -> Vec3 {
    to_nv_frame(&linalg::scale(&BASIS[1], DIAMOND_LATTICE_CONSTANT))
}

/// Carbon sites with `exclusion < |r| <= radius`, in a fixed enumeration
/// order. The vacancy and nitrogen sites are never returned.
pub fn carbon_sites(radius: f64, exclusion: f64) -> Vec<Vec3> {
    let a = DIAMOND_LATTICE_CONSTANT;
    let cells = (radius / a).ceil() as i64 + 1;
    let nitrogen = nitrogen_site();
    let mut out = Vec::new();
    for i in -cells..=cells {
        for j in -cells..=cells {
            for k in -cells..=cells {
                for f in &FCC {
                    for b in &BASIS {
                        let cubic = [
                            (i as f64 + f[0] + b[0]) * a,
                            (j as f64 + f[1] + b[1]) * a,
                            (k as f64 + f[2] + b[2]) * a,
                        ];
                        let r = to_nv_frame(&cubic);
                        let d = linalg::norm(&r);
                        if d == 0.0 || d > radius || d <= exclusion {
                            continue;
                        }
                        if linalg::norm(&linalg::sub(&r, &nitrogen)) < 1e-9 {
                            continue;
                        }
                        out.push(r);
                    }
                }
            }
        }
    }
    out
}
