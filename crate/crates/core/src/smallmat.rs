//! Dense 4x4 complex and 3x3 real kernels used per Fourier mode.
//!
//! Everything here is allocation-free and sized for the one job: the coupled
//! density-velocity symbol is 4x4, Hessians of the phase are 3x3. Matrix
//! exponentials use Pade(6) with scaling and squaring at theta = 0.25; the
//! phi-functions share the scaling step and double back up with
//! phi2(2A) = (2 phi2 + phi1^2)/4, phi1(2A) = (E + I) phi1 / 2, E(2A) = E^2.

use num_complex::Complex64;

pub type C = Complex64;

const ZERO: C = C::new(0.0, 0.0);
const ONE: C = C::new(1.0, 0.0);

/// Row-major complex 4x4 matrix.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct M4(pub [[C; 4]; 4]);

impl M4 {
    pub fn zero() -> M4 {
        M4([[ZERO; 4]; 4])
    }

    pub fn identity() -> M4 {
        let mut m = M4::zero();
        for i in 0..4 {
            m.0[i][i] = ONE;
        }
        m
    }

    pub fn scale(&self, s: C) -> M4 {
        let mut out = *self;
        for row in out.0.iter_mut() {
            for v in row.iter_mut() {
                *v *= s;
            }
        }
        out
    }

    pub fn add(&self, other: &M4) -> M4 {
        let mut out = *self;
        for i in 0..4 {
            for j in 0..4 {
                out.0[i][j] += other.0[i][j];
            }
        }
        out
    }

    pub fn sub(&self, other: &M4) -> M4 {
        let mut out = *self;
        for i in 0..4 {
            for j in 0..4 {
                out.0[i][j] -= other.0[i][j];
            }
        }
        out
    }

    pub fn mul(&self, other: &M4) -> M4 {
        let mut out = M4::zero();
        for i in 0..4 {
            for k in 0..4 {
                let a = self.0[i][k];
                if a == ZERO {
                    continue;
                }
                for j in 0..4 {
                    out.0[i][j] += a * other.0[k][j];
                }
            }
        }
        out
    }

    pub fn mul_vec(&self, v: &[C; 4]) -> [C; 4] {
        let mut out = [ZERO; 4];
        for i in 0..4 {
            for k in 0..4 {
                out[i] += self.0[i][k] * v[k];
            }
        }
        out
    }

    pub fn adjoint(&self) -> M4 {
        let mut out = M4::zero();
        for i in 0..4 {
            for j in 0..4 {
                out.0[i][j] = self.0[j][i].conj();
            }
        }
        out
    }

    pub fn trace(&self) -> C {
        self.0[0][0] + self.0[1][1] + self.0[2][2] + self.0[3][3]
    }

    /// Maximum absolute column sum.
    pub fn one_norm(&self) -> f64 {
        (0..4)
            .map(|j| (0..4).map(|i| self.0[i][j].norm()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.0
            .iter()
            .flat_map(|r| r.iter())
            .map(|v| v.norm())
            .fold(0.0, f64::max)
    }

    /// Largest |A - B| entry.
    pub fn distance(&self, other: &M4) -> f64 {
        self.sub(other).max_abs()
    }
}

/// Monic characteristic polynomial of A by Faddeev-LeVerrier:
/// returns [c0, c1, c2, c3] with p(l) = l^4 + c3 l^3 + c2 l^2 + c1 l + c0.
pub fn char_poly(a: &M4) -> [C; 4] {
    let mut n = a.mul(&M4::identity());
    let c3 = -n.trace();
    n = a.mul(&n.add(&M4::identity().scale(c3)));
    let c2 = -n.trace() / 2.0;
    n = a.mul(&n.add(&M4::identity().scale(c2)));
    let c1 = -n.trace() / 3.0;
    n = a.mul(&n.add(&M4::identity().scale(c1)));
    let c0 = -n.trace() / 4.0;
    [c0, c1, c2, c3]
}

/// All four roots of the monic quartic l^4 + c3 l^3 + c2 l^2 + c1 l + c0 by
/// Durand-Kerner iteration.
pub fn quartic_roots(c: &[C; 4]) -> [C; 4] {
    let eval = |z: C| -> C { ((z + c[3]) * z + c[2]) * z * z + c[1] * z + c[0] };
    // Radius bound: 1 + max |c_k| encloses every root.
    let radius = 1.0 + c.iter().map(|v| v.norm()).fold(0.0, f64::max);
    let seed = C::new(0.4, 0.9);
    let mut z = [ZERO; 4];
    let mut acc = ONE;
    for zk in z.iter_mut() {
        acc *= seed;
        *zk = acc * radius;
    }
    for _ in 0..500 {
        let mut next = z;
        let mut moved = 0.0f64;
        for i in 0..4 {
            let mut denom = ONE;
            for j in 0..4 {
                if i != j {
                    denom *= z[i] - z[j];
                }
            }
            if denom == ZERO {
                // Collided guesses: nudge apart and restart the pass.
                next[i] += C::new(1e-6 * radius, 1e-6 * radius);
                continue;
            }
            let step = eval(z[i]) / denom;
            next[i] = z[i] - step;
            moved = moved.max(step.norm());
        }
        z = next;
        if moved <= 1e-15 * radius {
            break;
        }
    }
    z
}

/// Evaluate a monic quartic with coefficients [c0..c3] at z.
pub fn quartic_eval(c: &[C; 4], z: C) -> C {
    ((z + c[3]) * z + c[2]) * z * z + c[1] * z + c[0]
}

/// Eigen-decomposition of a Hermitian 4x4 by cyclic complex Jacobi rotations.
/// Returns eigenvalues ascending and the matching unitary columns.
pub fn hermitian_eigen(h: &M4) -> ([f64; 4], M4) {
    let mut a = *h;
    let mut v = M4::identity();
    for _ in 0..60 {
        let mut off = 0.0f64;
        for p in 0..4 {
            for q in (p + 1)..4 {
                off = off.max(a.0[p][q].norm());
            }
        }
        if off < 1e-15 * (1.0 + a.one_norm()) {
            break;
        }
        for p in 0..4 {
            for q in (p + 1)..4 {
                let apq = a.0[p][q];
                if apq.norm() < 1e-300 {
                    continue;
                }
                let app = a.0[p][p].re;
                let aqq = a.0[q][q].re;
                let phase = apq / apq.norm();
                let theta = 0.5 * (2.0 * apq.norm()).atan2(app - aqq);
                let (sn, cs) = theta.sin_cos();
                let c = C::new(cs, 0.0);
                let s = phase * sn;
                // Columns p, q of V and rows/cols of A rotate by
                // [[c, -s], [conj(s), c]] acting on the right.
                let mut rot = M4::identity();
                rot.0[p][p] = c;
                rot.0[p][q] = -s;
                rot.0[q][p] = s.conj();
                rot.0[q][q] = c;
                a = rot.adjoint().mul(&a).mul(&rot);
                v = v.mul(&rot);
            }
        }
    }
    let mut order = [0usize, 1, 2, 3];
    let vals = [a.0[0][0].re, a.0[1][1].re, a.0[2][2].re, a.0[3][3].re];
    order.sort_by(|&i, &j| vals[i].partial_cmp(&vals[j]).unwrap());
    let mut out_vals = [0.0f64; 4];
    let mut out_vecs = M4::zero();
    for (k, &i) in order.iter().enumerate() {
        out_vals[k] = vals[i];
        for r in 0..4 {
            out_vecs.0[r][k] = v.0[r][i];
        }
    }
    (out_vals, out_vecs)
}

/// Solve A X = B by Gaussian elimination with partial pivoting.
/// Returns None when the pivot underflows (singular system).
pub fn solve4(a: &M4, b: &M4) -> Option<M4> {
    let mut m = *a;
    let mut rhs = *b;
    for col in 0..4 {
        let (piv, mag) = (col..4)
            .map(|r| (r, m.0[r][col].norm()))
            .max_by(|x, y| x.1.partial_cmp(&y.1).unwrap())?;
        if mag < 1e-300 {
            return None;
        }
        if piv != col {
            m.0.swap(piv, col);
            rhs.0.swap(piv, col);
        }
        let inv = ONE / m.0[col][col];
        for r in 0..4 {
            if r == col {
                continue;
            }
            let f = m.0[r][col] * inv;
            if f == ZERO {
                continue;
            }
            for j in 0..4 {
                let mj = m.0[col][j];
                let bj = rhs.0[col][j];
                m.0[r][j] -= f * mj;
                rhs.0[r][j] -= f * bj;
            }
        }
    }
    let mut x = M4::zero();
    for r in 0..4 {
        let inv = ONE / m.0[r][r];
        for j in 0..4 {
            x.0[r][j] = rhs.0[r][j] * inv;
        }
    }
    Some(x)
}

const PADE6: [f64; 7] = [
    1.0,
    0.5,
    5.0 / 44.0,
    1.0 / 66.0,
    1.0 / 792.0,
    1.0 / 15840.0,
    1.0 / 665280.0,
];

fn scaling_power(norm: f64, theta: f64) -> u32 {
    if norm <= theta {
        0
    } else {
        (norm / theta).log2().ceil() as u32
    }
}

/// Matrix exponential by Pade(6) with scaling and squaring.
pub fn expm(a: &M4) -> M4 {
    let s = scaling_power(a.one_norm(), 0.25);
    let b = a.scale(C::new(exp2_neg(s), 0.0));
    let b2 = b.mul(&b);
    let b4 = b2.mul(&b2);
    let b6 = b2.mul(&b4);
    let id = M4::identity();
    let u_poly = id
        .scale(C::new(PADE6[1], 0.0))
        .add(&b2.scale(C::new(PADE6[3], 0.0)))
        .add(&b4.scale(C::new(PADE6[5], 0.0)));
    let u = b.mul(&u_poly);
    let v = id
        .scale(C::new(PADE6[0], 0.0))
        .add(&b2.scale(C::new(PADE6[2], 0.0)))
        .add(&b4.scale(C::new(PADE6[4], 0.0)))
        .add(&b6.scale(C::new(PADE6[6], 0.0)));
    let mut e = solve4(&v.sub(&u), &v.add(&u)).expect("Pade denominator is nonsingular");
    for _ in 0..s {
        e = e.mul(&e);
    }
    e
}

fn exp2_neg(s: u32) -> f64 {
    (0.5f64).powi(s as i32)
}

/// exp(A) together with phi1(A) = (e^A - I) A^{-1} and
/// phi2(A) = (e^A - I - A) A^{-2}, defined by their entire series so singular
/// A is fine. Shares one scaling pass; bases are 12-term Taylor sums.
pub fn expm_phi(a: &M4) -> (M4, M4, M4) {
    let s = scaling_power(a.one_norm(), 0.25);
    let b = a.scale(C::new(exp2_neg(s), 0.0));
    let id = M4::identity();
    // 12-term Taylor bases; the truncation tail at norm 0.25 sits below 1e-17.
    let mut term = id;
    let mut e = id;
    let mut phi1 = id;
    let mut phi2 = id.scale(C::new(0.5, 0.0));
    let mut k_fact = 1.0f64;
    for k in 1..=12u32 {
        term = term.mul(&b);
        k_fact *= k as f64;
        e = e.add(&term.scale(C::new(1.0 / k_fact, 0.0)));
        phi1 = phi1.add(&term.scale(C::new(1.0 / (k_fact * (k as f64 + 1.0)), 0.0)));
        phi2 = phi2.add(&term.scale(C::new(
            1.0 / (k_fact * (k as f64 + 1.0) * (k as f64 + 2.0)),
            0.0,
        )));
    }
    for _ in 0..s {
        let phi2_new = phi2.scale(C::new(2.0, 0.0)).add(&phi1.mul(&phi1)).scale(C::new(0.25, 0.0));
        let phi1_new = e.add(&id).mul(&phi1).scale(C::new(0.5, 0.0));
        e = e.mul(&e);
        phi2 = phi2_new;
        phi1 = phi1_new;
    }
    (e, phi1, phi2)
}

/// Real symmetric 3x3 matrix with Jacobi eigen-decomposition.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Sym3(pub [[f64; 3]; 3]);

impl Sym3 {
    pub fn det(&self) -> f64 {
        let m = &self.0;
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
            - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    }

    pub fn max_abs(&self) -> f64 {
        self.0
            .iter()
            .flat_map(|r| r.iter())
            .map(|v| v.abs())
            .fold(0.0, f64::max)
    }

    pub fn distance(&self, other: &Sym3) -> f64 {
        let mut d = 0.0f64;
        for i in 0..3 {
            for j in 0..3 {
                d = d.max((self.0[i][j] - other.0[i][j]).abs());
            }
        }
        d
    }

    /// Eigenvalues ascending with orthonormal eigenvector columns.
    pub fn eigen(&self) -> ([f64; 3], [[f64; 3]; 3]) {
        let mut a = self.0;
        let mut v = [[0.0f64; 3]; 3];
        for (i, row) in v.iter_mut().enumerate() {
            row[i] = 1.0;
        }
        for _ in 0..60 {
            let off = a[0][1].abs().max(a[0][2].abs()).max(a[1][2].abs());
            if off < 1e-15 * (1.0 + self.max_abs()) {
                break;
            }
            for p in 0..3 {
                for q in (p + 1)..3 {
                    if a[p][q].abs() < 1e-300 {
                        continue;
                    }
                    let theta = 0.5 * (2.0 * a[p][q]).atan2(a[p][p] - a[q][q]);
                    let (s, c) = theta.sin_cos();
                    let rot = |m: &mut [[f64; 3]; 3]| {
                        for r in 0..3 {
                            let mp = m[r][p];
                            let mq = m[r][q];
                            m[r][p] = c * mp + s * mq;
                            m[r][q] = -s * mp + c * mq;
                        }
                    };
                    rot(&mut a);
                    // Left action: rows of the symmetric matrix.
                    for col in 0..3 {
                        let mp = a[p][col];
                        let mq = a[q][col];
                        a[p][col] = c * mp + s * mq;
                        a[q][col] = -s * mp + c * mq;
                    }
                    rot(&mut v);
                }
            }
        }
        let vals = [a[0][0], a[1][1], a[2][2]];
        let mut order = [0usize, 1, 2];
        order.sort_by(|&i, &j| vals[i].partial_cmp(&vals[j]).unwrap());
        let mut out_vals = [0.0f64; 3];
        let mut out_vecs = [[0.0f64; 3]; 3];
        for (k, &i) in order.iter().enumerate() {
            out_vals[k] = vals[i];
            for r in 0..3 {
                out_vecs[r][k] = v[r][i];
            }
        }
        (out_vals, out_vecs)
    }

    /// Count of eigenvalues larger than `threshold` in magnitude.
    pub fn rank(&self, threshold: f64) -> usize {
        let (vals, _) = self.eigen();
        vals.iter().filter(|v| v.abs() > threshold).count()
    }
}
