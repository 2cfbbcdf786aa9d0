//! Periodic grid, field storage and the 3d transform.
//!
//! The box is [0, 2*pi*L)^3 sampled at n points per axis, so wavenumbers live
//! on the lattice (1/L)*Z^3 with the Nyquist index -n/2 present exactly once.
//! The forward transform carries the 1/n^3 so that a constant field c has
//! mode-0 coefficient c and a unit plane wave has a unit coefficient; the
//! inverse carries the n^3 back. L^2 bookkeeping under this convention:
//! (vol/n^3) sum_x |f|^2 = vol * sum_xi |f^|^2.

use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{CoreError, Result};

pub const MIN_N: usize = 8;
pub const MAX_N: usize = 512;

/// Fraction of axis indices kept by the two-thirds rule: |index| <= n/3.
pub fn dealias_cutoff(n: usize) -> i64 {
    (n / 3) as i64
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum Repr {
    Physical,
    Spectral,
}

#[derive(Clone)]
pub struct Grid {
    n: usize,
    period: f64,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for Grid {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Grid")
            .field("n", &self.n)
            .field("period", &self.period)
            .finish()
    }
}

impl PartialEq for Grid {
    fn eq(&self, other: &Self) -> bool {
        self.n == other.n && self.period == other.period
    }
}

impl Grid {
    /// n must be a power of two in [8, 512]; period is the box side 2*pi*L.
    pub fn new(n: usize, period: f64) -> Result<Grid> {
        if !n.is_power_of_two() || !(MIN_N..=MAX_N).contains(&n) {
            return Err(CoreError::Config(format!(
                "grid size {n} not a power of two in [{MIN_N}, {MAX_N}]"
            )));
        }
        if !(period.is_finite() && period > 0.0) {
            return Err(CoreError::Config(format!("period {period} not positive")));
        }
        let mut planner = FftPlanner::new();
        Ok(Grid {
            n,
            period,
            fwd: planner.plan_fft_forward(n),
            inv: planner.plan_fft_inverse(n),
        })
    }

    /// Default box: L = 16, so spacing 1/16.
    pub fn with_default_period(n: usize) -> Result<Grid> {
        Grid::new(n, 2.0 * std::f64::consts::PI * 16.0)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.n * self.n * self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn period(&self) -> f64 {
        self.period
    }

    pub fn volume(&self) -> f64 {
        self.period.powi(3)
    }

    /// Wavenumber lattice spacing 1/L.
    pub fn spacing(&self) -> f64 {
        2.0 * std::f64::consts::PI / self.period
    }

    /// Physical sample coordinate along one axis.
    pub fn x(&self, i: usize) -> f64 {
        self.period * i as f64 / self.n as f64
    }

    /// Signed integer frequency index for storage index i: 0..n/2-1, then
    /// -n/2..-1, Nyquist once at -n/2.
    pub fn freq_index(&self, i: usize) -> i64 {
        let n = self.n as i64;
        let i = i as i64;
        if i < n / 2 {
            i
        } else {
            i - n
        }
    }

    /// Wavenumber component for storage index i.
    pub fn wavenumber(&self, i: usize) -> f64 {
        self.freq_index(i) as f64 * self.spacing()
    }

    /// Storage index for an (ix, iy, iz) triple; x varies fastest.
    #[inline]
    pub fn idx(&self, ix: usize, iy: usize, iz: usize) -> usize {
        ix + self.n * (iy + self.n * iz)
    }

    /// Corner of the resolved lattice, sqrt(3) * (n/2) * spacing.
    pub fn max_resolved_wavenumber(&self) -> f64 {
        3f64.sqrt() * (self.n as f64 / 2.0) * self.spacing()
    }

    /// Largest |xi| along a single axis excluding the Nyquist index.
    pub fn max_axis_wavenumber(&self) -> f64 {
        (self.n as f64 / 2.0 - 1.0) * self.spacing()
    }

    pub fn zeros(&self, repr: Repr) -> Field {
        Field {
            n: self.n,
            repr,
            data: vec![Complex64::new(0.0, 0.0); self.len()],
        }
    }

    /// Sample a physical-space function on the lattice.
    pub fn from_fn(&self, f: impl Fn(f64, f64, f64) -> f64) -> Field {
        let mut out = self.zeros(Repr::Physical);
        for iz in 0..self.n {
            let z = self.x(iz);
            for iy in 0..self.n {
                let y = self.x(iy);
                for ix in 0..self.n {
                    out.data[self.idx(ix, iy, iz)] = Complex64::new(f(self.x(ix), y, z), 0.0);
                }
            }
        }
        out
    }

    /// Visit every mode with its wavenumber vector; f gets (flat index, xi).
    pub fn for_each_mode(&self, mut f: impl FnMut(usize, [f64; 3])) {
        for iz in 0..self.n {
            let kz = self.wavenumber(iz);
            for iy in 0..self.n {
                let ky = self.wavenumber(iy);
                for ix in 0..self.n {
                    f(self.idx(ix, iy, iz), [self.wavenumber(ix), ky, kz]);
                }
            }
        }
    }

    /// Physical -> spectral, scaled by 1/n^3.
    pub fn forward(&self, field: &mut Field) {
        assert_eq!(field.repr, Repr::Physical, "forward wants a physical field");
        assert_eq!(field.n, self.n);
        self.fft_all_axes(&mut field.data, &self.fwd);
        let scale = 1.0 / self.len() as f64;
        for v in field.data.iter_mut() {
            *v *= scale;
        }
        field.repr = Repr::Spectral;
    }

    /// Spectral -> physical; the n^3 rides on this side.
    pub fn inverse(&self, field: &mut Field) {
        assert_eq!(field.repr, Repr::Spectral, "inverse wants a spectral field");
        assert_eq!(field.n, self.n);
        self.fft_all_axes(&mut field.data, &self.inv);
        field.repr = Repr::Physical;
    }

    pub fn to_spectral(&self, field: &Field) -> Field {
        let mut f = field.clone();
        if f.repr == Repr::Physical {
            self.forward(&mut f);
        }
        f
    }

    pub fn to_physical(&self, field: &Field) -> Field {
        let mut f = field.clone();
        if f.repr == Repr::Spectral {
            self.inverse(&mut f);
        }
        f
    }

    fn fft_all_axes(&self, data: &mut [Complex64], plan: &Arc<dyn Fft<f64>>) {
        let n = self.n;
        // Axis x: lanes are contiguous, the whole buffer is n^2 stacked lanes.
        plan.process(data);
        // Axes y and z: transpose each plane into a scratch of n lanes.
        let mut buf = vec![Complex64::new(0.0, 0.0); n * n];
        let mut scratch = vec![Complex64::new(0.0, 0.0); plan.get_inplace_scratch_len()];
        for iz in 0..n {
            let base = n * n * iz;
            for iy in 0..n {
                for ix in 0..n {
                    buf[ix * n + iy] = data[base + iy * n + ix];
                }
            }
            plan.process_with_scratch(&mut buf, &mut scratch);
            for iy in 0..n {
                for ix in 0..n {
                    data[base + iy * n + ix] = buf[ix * n + iy];
                }
            }
        }
        for iy in 0..n {
            let base = n * iy;
            for iz in 0..n {
                for ix in 0..n {
                    buf[ix * n + iz] = data[base + n * n * iz + ix];
                }
            }
            plan.process_with_scratch(&mut buf, &mut scratch);
            for iz in 0..n {
                for ix in 0..n {
                    data[base + n * n * iz + ix] = buf[ix * n + iz];
                }
            }
        }
    }

    /// Two-thirds rule: zero every coefficient with any axis index beyond
    /// floor(n/3). Idempotent.
    pub fn dealias(&self, field: &mut Field) {
        assert_eq!(field.repr, Repr::Spectral, "dealias acts on spectral data");
        let cut = dealias_cutoff(self.n);
        for iz in 0..self.n {
            let keep_z = self.freq_index(iz).abs() <= cut;
            for iy in 0..self.n {
                let keep_yz = keep_z && self.freq_index(iy).abs() <= cut;
                for ix in 0..self.n {
                    if !(keep_yz && self.freq_index(ix).abs() <= cut) {
                        field.data[self.idx(ix, iy, iz)] = Complex64::new(0.0, 0.0);
                    }
                }
            }
        }
    }

    /// Count of modes surviving the two-thirds rule.
    pub fn dealias_survivors(&self) -> usize {
        let per_axis = (2 * dealias_cutoff(self.n) + 1) as usize;
        per_axis * per_axis * per_axis
    }

    /// Evolution operators do not act on the unmatched Nyquist index.
    pub fn zero_nyquist(&self, field: &mut Field) {
        assert_eq!(field.repr, Repr::Spectral);
        let nyq = -(self.n as i64) / 2;
        for iz in 0..self.n {
            for iy in 0..self.n {
                for ix in 0..self.n {
                    if self.freq_index(ix) == nyq
                        || self.freq_index(iy) == nyq
                        || self.freq_index(iz) == nyq
                    {
                        field.data[self.idx(ix, iy, iz)] = Complex64::new(0.0, 0.0);
                    }
                }
            }
        }
    }

    /// Spectral derivative along axis: multiply by i*xi_axis (Nyquist zeroed).
    pub fn derivative(&self, field: &Field, axis: usize) -> Field {
        assert_eq!(field.repr, Repr::Spectral);
        let nyq = -(self.n as i64) / 2;
        let mut out = field.clone();
        self.for_each_mode(|i, xi| {
            let comp = [ix_of(i, self.n), iy_of(i, self.n), iz_of(i, self.n)][axis];
            if self.freq_index(comp) == nyq {
                out.data[i] = Complex64::new(0.0, 0.0);
            } else {
                out.data[i] *= Complex64::new(0.0, xi[axis]);
            }
        });
        out
    }

    /// L^2 norm of a physical field by the rectangle rule.
    pub fn l2_physical(&self, field: &Field) -> f64 {
        assert_eq!(field.repr, Repr::Physical);
        let w = self.volume() / self.len() as f64;
        (field.data.iter().map(|v| v.norm_sqr()).sum::<f64>() * w).sqrt()
    }

    /// L^2 norm of a spectral field via the transform convention.
    pub fn l2_spectral(&self, field: &Field) -> f64 {
        assert_eq!(field.repr, Repr::Spectral);
        (field.data.iter().map(|v| v.norm_sqr()).sum::<f64>() * self.volume()).sqrt()
    }

    /// Largest relative deviation from f^(-xi) = conj(f^(xi)).
    pub fn conjugate_symmetry_defect(&self, field: &Field) -> f64 {
        assert_eq!(field.repr, Repr::Spectral);
        let n = self.n;
        let norm = field
            .data
            .iter()
            .map(|v| v.norm())
            .fold(0.0f64, f64::max)
            .max(1e-300);
        let mut worst = 0.0f64;
        for iz in 0..n {
            let jz = (n - iz) % n;
            for iy in 0..n {
                let jy = (n - iy) % n;
                for ix in 0..n {
                    let jx = (n - ix) % n;
                    let d = (field.data[self.idx(ix, iy, iz)]
                        - field.data[self.idx(jx, jy, jz)].conj())
                    .norm();
                    worst = worst.max(d);
                }
            }
        }
        worst / norm
    }
}

#[inline]
fn ix_of(i: usize, n: usize) -> usize {
    i % n
}
#[inline]
fn iy_of(i: usize, n: usize) -> usize {
    (i / n) % n
}
#[inline]
fn iz_of(i: usize, n: usize) -> usize {
    i / (n * n)
}

/// One scalar field on the grid: n^3 complex values plus a representation tag.
#[derive(Clone, Debug, PartialEq)]
pub struct Field {
    n: usize,
    pub repr: Repr,
    pub data: Vec<Complex64>,
}

impl Field {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn scale(&mut self, s: f64) {
        for v in self.data.iter_mut() {
            *v *= s;
        }
    }

    pub fn axpy(&mut self, s: Complex64, other: &Field) {
        assert_eq!(self.repr, other.repr);
        for (a, b) in self.data.iter_mut().zip(other.data.iter()) {
            *a += s * b;
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    pub fn max_abs_im(&self) -> f64 {
        self.data.iter().map(|v| v.im.abs()).fold(0.0, f64::max)
    }
}

/// Velocity-style 3-vector of fields, shared representation.
#[derive(Clone, Debug)]
pub struct Field3(pub [Field; 3]);

impl Field3 {
    pub fn zeros(grid: &Grid, repr: Repr) -> Field3 {
        Field3([grid.zeros(repr), grid.zeros(repr), grid.zeros(repr)])
    }

    pub fn repr(&self) -> Repr {
        self.0[0].repr
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::prelude::*;

    fn random_real_field(grid: &Grid, seed: u64) -> Field {
        let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(seed);
        let mut f = grid.zeros(Repr::Physical);
        for v in f.data.iter_mut() {
            *v = Complex64::new(rng.gen_range(-1.0..1.0), 0.0);
        }
        f
    }

    /// Brute-force DFT oracle, same normalization as Grid::forward.
    fn dft_oracle(grid: &Grid, f: &Field) -> Field {
        let n = grid.n();
        let mut out = grid.zeros(Repr::Spectral);
        for kz in 0..n {
            for ky in 0..n {
                for kx in 0..n {
                    let mut acc = Complex64::new(0.0, 0.0);
                    for iz in 0..n {
                        for iy in 0..n {
                            for ix in 0..n {
                                let phase = -2.0 * std::f64::consts::PI
                                    * ((kx * ix + ky * iy + kz * iz) as f64)
                                    / n as f64;
                                acc += f.data[grid.idx(ix, iy, iz)]
                                    * Complex64::from_polar(1.0, phase);
                            }
                        }
                    }
                    out.data[grid.idx(kx, ky, kz)] = acc / grid.len() as f64;
                }
            }
        }
        out
    }

    #[test]
    fn rejects_bad_sizes() {
        assert!(Grid::new(12, 1.0).is_err());
        assert!(Grid::new(4, 1.0).is_err());
        assert!(Grid::new(1024, 1.0).is_err());
        assert!(Grid::new(16, -1.0).is_err());
        assert!(Grid::new(16, 2.0 * std::f64::consts::PI).is_ok());
    }

    #[test]
    fn wavenumber_lattice_layout() {
        let grid = Grid::new(8, 2.0 * std::f64::consts::PI).unwrap();
        let idx: Vec<i64> = (0..8).map(|i| grid.freq_index(i)).collect();
        assert_eq!(idx, vec![0, 1, 2, 3, -4, -3, -2, -1]);
        assert_relative_eq!(grid.spacing(), 1.0);

        let grid = Grid::new(16, 4.0 * std::f64::consts::PI).unwrap();
        assert_relative_eq!(grid.spacing(), 0.5);
        assert_relative_eq!(grid.max_axis_wavenumber(), 3.5);

        let grid = Grid::new(64, 2.0 * std::f64::consts::PI * 8.0).unwrap();
        assert_relative_eq!(grid.spacing(), 0.125);
        assert_relative_eq!(
            grid.max_resolved_wavenumber(),
            3f64.sqrt() * 4.0,
            max_relative = 1e-12
        );
    }

    #[test]
    fn constant_field_concentrates_at_mode_zero() {
        let grid = Grid::new(16, 7.0).unwrap();
        let mut f = grid.from_fn(|_, _, _| 2.5);
        grid.forward(&mut f);
        assert_relative_eq!(f.data[0].re, 2.5, max_relative = 1e-13);
        let rest: f64 = f.data[1..].iter().map(|v| v.norm()).sum();
        assert!(rest < 1e-12, "leakage {rest}");
    }

    #[test]
    fn plane_wave_is_a_single_unit_coefficient() {
        let grid = Grid::new(16, 2.0 * std::f64::consts::PI).unwrap();
        // e^{i xi0 . x} with xi0 = (2, -3, 1) on the integer lattice.
        let mut f = grid.zeros(Repr::Physical);
        for iz in 0..16 {
            for iy in 0..16 {
                for ix in 0..16 {
                    let phase = 2.0 * grid.x(ix) - 3.0 * grid.x(iy) + grid.x(iz);
                    f.data[grid.idx(ix, iy, iz)] = Complex64::from_polar(1.0, phase);
                }
            }
        }
        grid.forward(&mut f);
        let target = grid.idx(2, 16 - 3, 1);
        assert_relative_eq!(f.data[target].re, 1.0, max_relative = 1e-12);
        let leak: f64 = f
            .data
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != target)
            .map(|(_, v)| v.norm())
            .fold(0.0, f64::max);
        assert!(leak < 1e-12);
    }

    #[test]
    fn matches_brute_force_dft() {
        let grid = Grid::new(8, 3.0).unwrap();
        let f = random_real_field(&grid, 7);
        let oracle = dft_oracle(&grid, &f);
        let mut fast = f.clone();
        grid.forward(&mut fast);
        let mut worst = 0.0f64;
        for (a, b) in fast.data.iter().zip(oracle.data.iter()) {
            worst = worst.max((a - b).norm());
        }
        assert!(worst < 1e-12, "fft vs dft defect {worst}");
    }

    #[test]
    fn roundtrip_and_parseval() {
        let grid = Grid::new(16, 5.0).unwrap();
        let f = random_real_field(&grid, 3);
        let mut g = f.clone();
        grid.forward(&mut g);
        let l2_spec = grid.l2_spectral(&g);
        assert!(grid.conjugate_symmetry_defect(&g) < 1e-12);
        grid.inverse(&mut g);
        let mut worst = 0.0f64;
        for (a, b) in f.data.iter().zip(g.data.iter()) {
            worst = worst.max((a - b).norm());
        }
        assert!(worst < 1e-12, "roundtrip defect {worst}");
        assert_relative_eq!(grid.l2_physical(&f), l2_spec, max_relative = 1e-12);
    }

    #[test]
    fn spectral_derivative_matches_analytic() {
        let grid = Grid::new(32, 2.0 * std::f64::consts::PI * 2.0).unwrap();
        // f = sin(2x) cos(y/2): df/dx = 2 cos(2x) cos(y/2).
        let f = grid.from_fn(|x, y, _| (2.0 * x).sin() * (0.5 * y).cos());
        let fs = grid.to_spectral(&f);
        let d = grid.to_physical(&grid.derivative(&fs, 0));
        let mut worst = 0.0f64;
        for iz in 0..grid.n() {
            for iy in 0..grid.n() {
                for ix in 0..grid.n() {
                    let want = 2.0 * (2.0 * grid.x(ix)).cos() * (0.5 * grid.x(iy)).cos();
                    worst = worst.max((d.data[grid.idx(ix, iy, iz)].re - want).abs());
                }
            }
        }
        assert!(worst < 1e-10, "derivative defect {worst}");
    }

    #[test]
    fn dealias_survivor_count() {
        let grid = Grid::new(16, 1.0).unwrap();
        assert_eq!(grid.dealias_survivors(), 1331);
        let mut f = grid.zeros(Repr::Spectral);
        for v in f.data.iter_mut() {
            *v = Complex64::new(1.0, 0.0);
        }
        grid.dealias(&mut f);
        let alive = f.data.iter().filter(|v| v.norm() > 0.0).count();
        assert_eq!(alive, 1331);
        let copy = f.clone();
        grid.dealias(&mut f);
        assert_eq!(f, copy, "dealias must be idempotent");
    }

    #[test]
    fn nyquist_zeroing() {
        let grid = Grid::new(8, 1.0).unwrap();
        let mut f = grid.zeros(Repr::Spectral);
        for v in f.data.iter_mut() {
            *v = Complex64::new(1.0, 0.0);
        }
        grid.zero_nyquist(&mut f);
        let alive = f.data.iter().filter(|v| v.norm() > 0.0).count();
        assert_eq!(alive, 7 * 7 * 7);
    }
}
