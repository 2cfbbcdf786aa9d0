//! Dyadic frequency decomposition and Besov-type norms on the grid.
//!
//! The ring function phi0 is built from the C-infinity step
//! s(x) = g(x)/(g(x)+g(1-x)), g(x) = exp(-1/x) for x > 0, via the radial cap
//! H(rho) = 1 - s(rho - 1) (identically 1 below rho = 1, identically 0 above
//! rho = 2): phi0(rho) = H(rho) - H(2 rho). Then supp phi0 = [1/2, 2] and the
//! dilates phi_j(xi) = phi0(|xi|/2^j) telescope to 1 away from the origin.
//! Truncated band norms follow the low/mid/high convention: a block j belongs
//! to a band (lo, hi] iff lo < 2^j <= hi.

use serde::ser::{SerializeMap, SerializeSeq};
use serde::{Serialize, Serializer};

use crate::error::{CoreError, Result};
use crate::grid::{Field, Grid, Repr};

fn g(x: f64) -> f64 {
    if x > 0.0 {
        (-1.0 / x).exp()
    } else {
        0.0
    }
}

/// Smooth step: 0 for x <= 0, 1 for x >= 1, strictly increasing between.
pub fn smooth_step(x: f64) -> f64 {
    let a = g(x);
    let b = g(1.0 - x);
    if a == 0.0 {
        0.0
    } else if b == 0.0 {
        1.0
    } else {
        a / (a + b)
    }
}

/// Radial cap: 1 on [0,1], 0 on [2, inf).
pub fn radial_cap(rho: f64) -> f64 {
    1.0 - smooth_step(rho - 1.0)
}

/// Ring profile phi0(rho), supported on [1/2, 2], equal to 1 at rho = 1.
pub fn ring_profile(rho: f64) -> f64 {
    radial_cap(rho) - radial_cap(2.0 * rho)
}

/// phi_j evaluated at a frequency vector.
pub fn phi_weight(j: i32, xi: [f64; 3]) -> f64 {
    let rho = (xi[0] * xi[0] + xi[1] * xi[1] + xi[2] * xi[2]).sqrt();
    ring_profile(rho / exp2_i(j))
}

pub fn exp2_i(j: i32) -> f64 {
    (2.0f64).powi(j)
}

/// Lebesgue exponent; Inf is a first-class value.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Lp {
    Finite(f64),
    Inf,
}

impl Lp {
    pub fn from_f64(p: f64) -> Result<Lp> {
        if p.is_infinite() && p > 0.0 {
            Ok(Lp::Inf)
        } else if p.is_finite() && p >= 1.0 {
            Ok(Lp::Finite(p))
        } else {
            Err(CoreError::Config(format!("bad Lebesgue exponent {p}")))
        }
    }

    pub fn as_f64(self) -> f64 {
        match self {
            Lp::Finite(p) => p,
            Lp::Inf => f64::INFINITY,
        }
    }
}

/// Dyadic band (lo, hi]; lo = 0 reaches the bottom, hi = inf the top.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Band {
    pub lo: f64,
    pub hi: f64,
}

impl Band {
    pub fn all() -> Band {
        Band { lo: 0.0, hi: f64::INFINITY }
    }
    /// 2^j <= alpha.
    pub fn low(alpha: f64) -> Band {
        Band { lo: 0.0, hi: alpha }
    }
    /// alpha < 2^j <= beta.
    pub fn mid(alpha: f64, beta: f64) -> Band {
        Band { lo: alpha, hi: beta }
    }
    /// beta < 2^j.
    pub fn high(beta: f64) -> Band {
        Band { lo: beta, hi: f64::INFINITY }
    }

    pub fn contains(&self, j: i32) -> bool {
        let t = exp2_i(j);
        self.lo < t && t <= self.hi
    }
}

/// Per-block contribution ledger attached to every computed norm.
#[derive(Clone, Debug)]
pub struct NormReport {
    pub value: f64,
    pub s: f64,
    pub p: f64,
    pub sigma: f64,
    pub band: Band,
    pub blocks: Vec<(i32, f64)>,
}

fn serialize_ext<S: Serializer>(v: f64, ser: S) -> std::result::Result<S::Ok, S::Error> {
    if v.is_infinite() {
        ser.serialize_str("inf")
    } else {
        ser.serialize_f64(v)
    }
}

struct Ext(f64);
impl Serialize for Ext {
    fn serialize<S: Serializer>(&self, ser: S) -> std::result::Result<S::Ok, S::Error> {
        serialize_ext(self.0, ser)
    }
}

impl Serialize for NormReport {
    fn serialize<S: Serializer>(&self, ser: S) -> std::result::Result<S::Ok, S::Error> {
        struct Blocks<'a>(&'a [(i32, f64)]);
        impl Serialize for Blocks<'_> {
            fn serialize<S: Serializer>(&self, ser: S) -> std::result::Result<S::Ok, S::Error> {
                let mut seq = ser.serialize_seq(Some(self.0.len()))?;
                for (j, c) in self.0 {
                    #[derive(Serialize)]
                    struct B {
                        j: i32,
                        contrib: f64,
                    }
                    seq.serialize_element(&B { j: *j, contrib: *c })?;
                }
                seq.end()
            }
        }
        let mut map = ser.serialize_map(Some(6))?;
        map.serialize_entry("value", &self.value)?;
        map.serialize_entry("s", &self.s)?;
        map.serialize_entry("p", &Ext(self.p))?;
        map.serialize_entry("sigma", &Ext(self.sigma))?;
        map.serialize_entry("band", &[Ext(self.band.lo), Ext(self.band.hi)])?;
        map.serialize_entry("blocks", &Blocks(&self.blocks))?;
        map.end()
    }
}

/// Grid-aware decomposition: the block range actually resolved.
#[derive(Clone, Debug)]
pub struct Decomp {
    grid: Grid,
    j_min: i32,
    j_max: i32,
}

impl Decomp {
    /// j_min = ceil(log2(2 spacing)), j_max = floor(log2(max resolved |xi| / 2)).
    pub fn new(grid: &Grid) -> Decomp {
        let j_min = (2.0 * grid.spacing()).log2().ceil_eps();
        let j_max = (grid.max_resolved_wavenumber() / 2.0).log2().floor_eps();
        Decomp { grid: grid.clone(), j_min, j_max }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }
    pub fn j_min(&self) -> i32 {
        self.j_min
    }
    pub fn j_max(&self) -> i32 {
        self.j_max
    }
    pub fn blocks(&self) -> impl Iterator<Item = i32> {
        self.j_min..=self.j_max
    }

    /// Apply the multiplier phi_j to a spectral field.
    pub fn block_project(&self, f: &Field, j: i32) -> Field {
        assert_eq!(f.repr, Repr::Spectral, "block_project wants spectral data");
        let mut out = f.clone();
        self.grid.for_each_mode(|i, xi| {
            out.data[i] *= phi_weight(j, xi);
        });
        out
    }

    /// ||f||_{L^p} of a physical field by the rectangle rule; for p = inf the
    /// lattice max.
    pub fn lp_physical(&self, fields: &[&Field], p: Lp) -> f64 {
        let n3 = self.grid.len();
        let mag = |i: usize| -> f64 {
            fields.iter().map(|f| f.data[i].norm_sqr()).sum::<f64>().sqrt()
        };
        match p {
            Lp::Inf => (0..n3).map(mag).fold(0.0, f64::max),
            Lp::Finite(p) => {
                let w = self.grid.volume() / n3 as f64;
                let mut acc = 0.0;
                if (p - 2.0).abs() < 1e-14 {
                    for i in 0..n3 {
                        acc += fields.iter().map(|f| f.data[i].norm_sqr()).sum::<f64>();
                    }
                } else {
                    for i in 0..n3 {
                        acc += mag(i).powf(p);
                    }
                }
                (acc * w).powf(1.0 / p)
            }
        }
    }

    /// Block L^p norm from spectral components: project, transform, integrate.
    /// p = 2 short-circuits through the coefficient sum.
    pub fn block_lp(&self, fields: &[&Field], j: i32, p: Lp) -> f64 {
        if let Lp::Finite(pv) = p {
            if (pv - 2.0).abs() < 1e-14 {
                let mut acc = 0.0;
                self.grid.for_each_mode(|i, xi| {
                    let w = phi_weight(j, xi);
                    if w > 0.0 {
                        let m: f64 = fields.iter().map(|f| f.data[i].norm_sqr()).sum();
                        acc += w * w * m;
                    }
                });
                return (acc * self.grid.volume()).sqrt();
            }
        }
        let phys: Vec<Field> = fields
            .iter()
            .map(|f| self.grid.to_physical(&self.block_project(f, j)))
            .collect();
        let refs: Vec<&Field> = phys.iter().collect();
        self.lp_physical(&refs, p)
    }

    /// Homogeneous Besov norm over a band: l^sigma over j of 2^{sj} ||Delta_j f||_p.
    /// Components are combined pointwise (Euclidean magnitude).
    pub fn besov(&self, fields: &[&Field], s: f64, p: Lp, sigma: f64, band: Band) -> NormReport {
        let mut blocks = Vec::new();
        for j in self.blocks() {
            if band.contains(j) {
                blocks.push((j, exp2_i(j).powf(s) * self.block_lp(fields, j, p)));
            }
        }
        NormReport {
            value: sequence_norm(blocks.iter().map(|(_, c)| *c), sigma),
            s,
            p: p.as_f64(),
            sigma,
            band,
            blocks,
        }
    }

    /// Time-dependent norms over a sampled trajectory. `tilde` selects the
    /// Chemin-Lerner order (time integral per block, then l^sigma); otherwise
    /// the Besov norm is taken per sample and the time norm applied outside.
    /// `blocks` in the report always carries the per-block time norms.
    pub fn time_norm(
        &self,
        times: &[f64],
        frames: &[Vec<&Field>],
        r: Lp,
        s: f64,
        p: Lp,
        sigma: f64,
        band: Band,
        tilde: bool,
    ) -> Result<NormReport> {
        if times.len() != frames.len() || times.is_empty() {
            return Err(CoreError::Quadrature("empty or mismatched trajectory".into()));
        }
        if matches!(r, Lp::Finite(_)) && times.len() < 2 {
            return Err(CoreError::Quadrature(
                "time integral needs at least two samples".into(),
            ));
        }
        let js: Vec<i32> = self.blocks().filter(|j| band.contains(*j)).collect();
        // Per-block time series of L^p norms.
        let mut series: Vec<Vec<f64>> = vec![Vec::with_capacity(times.len()); js.len()];
        let mut per_sample_besov: Vec<f64> = Vec::with_capacity(times.len());
        for frame in frames {
            let mut bes = 0.0f64;
            let mut contribs = Vec::with_capacity(js.len());
            for (k, &j) in js.iter().enumerate() {
                let v = self.block_lp(frame, j, p);
                series[k].push(v);
                contribs.push(exp2_i(j).powf(s) * v);
            }
            bes += sequence_norm(contribs.iter().copied(), sigma);
            per_sample_besov.push(bes);
        }
        let blocks: Vec<(i32, f64)> = js
            .iter()
            .enumerate()
            .map(|(k, &j)| (j, exp2_i(j).powf(s) * time_lr(times, &series[k], r)))
            .collect();
        let value = if tilde {
            sequence_norm(blocks.iter().map(|(_, c)| *c), sigma)
        } else {
            time_lr(times, &per_sample_besov, r)
        };
        Ok(NormReport { value, s, p: p.as_f64(), sigma, band, blocks })
    }
}

/// l^sigma of a nonnegative sequence; sigma = inf gives the sup.
pub fn sequence_norm(vals: impl Iterator<Item = f64>, sigma: f64) -> f64 {
    if sigma.is_infinite() {
        vals.fold(0.0, f64::max)
    } else if (sigma - 1.0).abs() < 1e-14 {
        vals.sum()
    } else {
        vals.map(|v| v.powf(sigma)).sum::<f64>().powf(1.0 / sigma)
    }
}

/// L^r in time by the (possibly nonuniform) trapezoid rule; r = inf is the max.
pub fn time_lr(times: &[f64], vals: &[f64], r: Lp) -> f64 {
    match r {
        Lp::Inf => vals.iter().copied().fold(0.0, f64::max),
        Lp::Finite(rv) => {
            let mut acc = 0.0;
            for k in 1..times.len() {
                let dt = times[k] - times[k - 1];
                acc += 0.5 * dt * (vals[k - 1].powf(rv) + vals[k].powf(rv));
            }
            acc.powf(1.0 / rv)
        }
    }
}

trait RoundEps {
    fn ceil_eps(self) -> i32;
    fn floor_eps(self) -> i32;
}

impl RoundEps for f64 {
    fn ceil_eps(self) -> i32 {
        (self - 1e-9).ceil() as i32
    }
    fn floor_eps(self) -> i32 {
        (self + 1e-9).floor() as i32
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use num_complex::Complex64;
    use rand::prelude::*;

    #[test]
    fn step_partition_identity() {
        for &x in &[0.01, 0.2, 0.5, 0.77, 0.99] {
            assert_relative_eq!(smooth_step(x) + smooth_step(1.0 - x), 1.0, epsilon = 1e-15);
        }
        assert_eq!(smooth_step(-0.5), 0.0);
        assert_eq!(smooth_step(1.5), 1.0);
    }

    #[test]
    fn ring_profile_shape() {
        assert_eq!(ring_profile(0.49), 0.0);
        assert_eq!(ring_profile(2.0), 0.0);
        assert_eq!(ring_profile(2.5), 0.0);
        assert_relative_eq!(ring_profile(1.0), 1.0);
        for k in 0..=100 {
            let rho = 0.01 + 3.0 * k as f64 / 100.0;
            let v = ring_profile(rho);
            assert!((0.0..=1.0).contains(&v), "phi0({rho}) = {v} out of range");
        }
    }

    #[test]
    fn phi_values_from_the_contract() {
        // |xi| = 2^j -> 1; |xi| = 2^{j+2} -> 0; |xi| = 3*2^{j-1} splits between
        // exactly two rings.
        for j in [-2, 0, 5] {
            let t = exp2_i(j);
            assert_relative_eq!(phi_weight(j, [t, 0.0, 0.0]), 1.0);
            assert_eq!(phi_weight(j, [4.0 * t, 0.0, 0.0]), 0.0);
            let mid = [1.5 * t, 0.0, 0.0];
            let pair = phi_weight(j, mid) + phi_weight(j + 1, mid);
            assert_relative_eq!(pair, 1.0, epsilon = 1e-14);
        }
    }

    #[test]
    fn rings_telescope_to_one() {
        let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(5);
        for _ in 0..50 {
            let rho = 10f64.powf(rng.gen_range(-3.0..3.0));
            let dir: [f64; 3] = [rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5];
            let len = (dir[0] * dir[0] + dir[1] * dir[1] + dir[2] * dir[2]).sqrt();
            let xi = [rho * dir[0] / len, rho * dir[1] / len, rho * dir[2] / len];
            let total: f64 = (-14..=14).map(|j| phi_weight(j, xi)).sum();
            assert_relative_eq!(total, 1.0, epsilon = 1e-13);
        }
    }

    #[test]
    fn block_range_follows_the_grid() {
        let grid = crate::grid::Grid::new(64, 2.0 * std::f64::consts::PI * 16.0).unwrap();
        let d = Decomp::new(&grid);
        // spacing 1/16: j_min = ceil(log2(1/8)) = -3; corner sqrt(3)*2:
        // j_max = floor(log2(sqrt(3))) = 0.
        assert_eq!(d.j_min(), -3);
        assert_eq!(d.j_max(), 0);
    }

    #[test]
    fn partition_of_unity_on_resolved_annulus() {
        let grid = crate::grid::Grid::new(32, 2.0 * std::f64::consts::PI * 4.0).unwrap();
        let d = Decomp::new(&grid);
        let lo = exp2_i(d.j_min());
        let hi = exp2_i(d.j_max());
        let mut checked = 0usize;
        grid.for_each_mode(|_, xi| {
            let rho = (xi[0] * xi[0] + xi[1] * xi[1] + xi[2] * xi[2]).sqrt();
            if rho >= lo && rho <= hi {
                let total: f64 = d.blocks().map(|j| phi_weight(j, xi)).sum();
                assert!((total - 1.0).abs() < 1e-13, "sum {total} at rho {rho}");
                checked += 1;
            }
        });
        assert!(checked > 100, "annulus unexpectedly thin ({checked} modes)");
    }

    #[test]
    fn bernstein_with_factor_two_slack() {
        let grid = crate::grid::Grid::new(32, 2.0 * std::f64::consts::PI * 2.0).unwrap();
        let d = Decomp::new(&grid);
        let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(42);
        let mut f = grid.zeros(Repr::Physical);
        for v in f.data.iter_mut() {
            *v = Complex64::new(rng.gen_range(-1.0..1.0), 0.0);
        }
        let fs = grid.to_spectral(&f);
        for j in d.blocks() {
            let b = d.block_project(&fs, j);
            let l2 = grid.l2_spectral(&b);
            if l2 < 1e-14 {
                continue;
            }
            let grad: f64 = (0..3)
                .map(|ax| grid.l2_spectral(&grid.derivative(&b, ax)).powi(2))
                .sum::<f64>()
                .sqrt();
            assert!(
                grad <= 2.0 * exp2_i(j + 1) * l2,
                "Bernstein violated at j={j}: {grad} vs {}",
                2.0 * exp2_i(j + 1) * l2
            );
        }
    }

    #[test]
    fn band_additivity_for_sigma_one() {
        let grid = crate::grid::Grid::new(32, 2.0 * std::f64::consts::PI * 2.0).unwrap();
        let d = Decomp::new(&grid);
        let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(9);
        let mut f = grid.zeros(Repr::Spectral);
        for v in f.data.iter_mut() {
            *v = Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        }
        let s = 0.5;
        let p = Lp::Finite(2.0);
        let alpha = 1.0;
        let beta = 4.0;
        let total = d.besov(&[&f], s, p, 1.0, Band::all()).value;
        let lo = d.besov(&[&f], s, p, 1.0, Band::low(alpha)).value;
        let mid = d.besov(&[&f], s, p, 1.0, Band::mid(alpha, beta)).value;
        let hi = d.besov(&[&f], s, p, 1.0, Band::high(beta)).value;
        assert_relative_eq!(lo + mid + hi, total, max_relative = 1e-13);
    }

    #[test]
    fn single_mode_lq_is_exact() {
        let grid = crate::grid::Grid::new(16, 2.0 * std::f64::consts::PI).unwrap();
        let d = Decomp::new(&grid);
        let vol = grid.volume();
        // |e^{i xi x}| = 1: every L^q norm is vol^{1/q}.
        let mut f = grid.zeros(Repr::Physical);
        for iz in 0..16 {
            for iy in 0..16 {
                for ix in 0..16 {
                    f.data[grid.idx(ix, iy, iz)] =
                        Complex64::from_polar(1.0, grid.x(ix) + 2.0 * grid.x(iy));
                }
            }
        }
        for q in [1.0, 2.0, 4.0, 6.0] {
            assert_relative_eq!(
                d.lp_physical(&[&f], Lp::Finite(q)),
                vol.powf(1.0 / q),
                max_relative = 1e-13
            );
        }
        assert_relative_eq!(d.lp_physical(&[&f], Lp::Inf), 1.0, max_relative = 1e-13);
        // cos(2x): mean of cos^4 is 3/8, rectangle rule exact (no aliasing at n=16).
        let c = grid.from_fn(|x, _, _| (2.0 * x).cos());
        assert_relative_eq!(
            d.lp_physical(&[&c], Lp::Finite(4.0)),
            (vol * 3.0 / 8.0).powf(0.25),
            max_relative = 1e-13
        );
    }

    #[test]
    fn chemin_lerner_matches_analytic_decay() {
        // f(t) = e^{-t} f0 with f0 a single ring: the per-block L^2-in-time
        // norm is ||Delta_j f0|| * sqrt((1 - e^{-2T})/2).
        let grid = crate::grid::Grid::new(16, 2.0 * std::f64::consts::PI).unwrap();
        let d = Decomp::new(&grid);
        let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(17);
        let mut f0 = grid.zeros(Repr::Spectral);
        grid.for_each_mode(|i, xi| {
            let rho = (xi[0] * xi[0] + xi[1] * xi[1] + xi[2] * xi[2]).sqrt();
            if (1.0..2.0).contains(&rho) {
                f0.data[i] = Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
            }
        });
        let t_end = 1.0;
        let steps = 2000;
        let times: Vec<f64> = (0..=steps).map(|k| t_end * k as f64 / steps as f64).collect();
        let fields: Vec<Field> = times
            .iter()
            .map(|t| {
                let mut f = f0.clone();
                f.scale((-t).exp());
                f
            })
            .collect();
        let frames: Vec<Vec<&Field>> = fields.iter().map(|f| vec![f]).collect();
        let rep = d
            .time_norm(&times, &frames, Lp::Finite(2.0), 0.0, Lp::Finite(2.0), 1.0, Band::all(), true)
            .unwrap();
        let factor = ((1.0 - (-2.0 * t_end).exp()) / 2.0).sqrt();
        let expected: f64 = d.blocks().map(|j| d.block_lp(&[&f0], j, Lp::Finite(2.0))).sum::<f64>() * factor;
        assert_relative_eq!(rep.value, expected, max_relative = 1e-6);
        // L^inf in time is the t = 0 snapshot.
        let sup = d
            .time_norm(&times, &frames, Lp::Inf, 0.0, Lp::Finite(2.0), 1.0, Band::all(), true)
            .unwrap();
        let init = d.besov(&[&f0], 0.0, Lp::Finite(2.0), 1.0, Band::all()).value;
        assert_relative_eq!(sup.value, init, max_relative = 1e-12);
        // Minkowski: the tilde norm cannot exceed the plain one for r >= sigma.
        let plain = d
            .time_norm(&times, &frames, Lp::Finite(2.0), 0.0, Lp::Finite(2.0), 1.0, Band::all(), false)
            .unwrap();
        assert!(rep.value <= plain.value * (1.0 + 1e-12));
    }

    #[test]
    fn degenerate_time_quadrature_is_an_error() {
        let grid = crate::grid::Grid::new(8, 1.0).unwrap();
        let d = Decomp::new(&grid);
        let f = grid.zeros(Repr::Spectral);
        let e = d.time_norm(&[0.0], &[vec![&f]], Lp::Finite(1.0), 0.0, Lp::Finite(2.0), 1.0, Band::all(), true);
        assert!(e.is_err());
    }

    #[test]
    fn report_serialization_shape() {
        let rep = NormReport {
            value: 1.5,
            s: 0.5,
            p: 2.0,
            sigma: f64::INFINITY,
            band: Band::high(4.0),
            blocks: vec![(3, 1.5)],
        };
        let v: serde_json::Value = serde_json::to_value(&rep).unwrap();
        assert_eq!(v["value"], 1.5);
        assert_eq!(v["sigma"], "inf");
        assert_eq!(v["band"][0], 4.0);
        assert_eq!(v["band"][1], "inf");
        assert_eq!(v["blocks"][0]["j"], 3);
    }
}
