//! Oscillatory integrals of the dyadic wave groups.
//!
//! The central object is I_j(t,x) = int e^{i x.xi} e^{i t lambda(xi)}
//! phi_j(xi) dxi over R^3, its sup-norm decay in t, the rank of the phase
//! Hessian that drives that decay, and the scaling of space-time norms of the
//! frequency-localized half-wave evolution in Omega and eps. Everything here
//! quadratures R^3 directly; the periodic box of `grid` would let the wave
//! packets recur and mask the decay.
//!
//! Two evaluation paths exist. `eval_oscillatory_block` is the literal
//! trapezoid-plus-FFT on the support box, exact but cubic in the node count,
//! used for fixtures and cross-checks at moderate t. The sup and L^q
//! measurements at large t reduce the integral over the axisymmetric phase to
//! a Bessel transform in the horizontal radius times an FFT in xi3, with the
//! mean vertical group velocity removed first; extents and step sizes are
//! chosen adaptively from the sampled gradient range of the phase, and the
//! field is rejected (and retried wider) if mass reaches the window edge.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::Serialize;

use crate::dyadic::{exp2_i, ring_profile, Lp};
use crate::error::{CoreError, Result};
use crate::propagator::{evolve_trajectory, SpectralState};
use crate::symbol::{lambda, lambda_hessian, Branch, Params};

type C = Complex64;

/// Oversampling of the fastest ring-direction oscillation in the Bessel step.
const OSR_RHO: f64 = 7.0;
/// Extent safety factor on top of the sampled group-velocity range.
const EXTENT_SAFETY: f64 = 1.35;
/// Edge fraction above which an evaluation window is declared too small.
const EDGE_TOL: f64 = 0.02;

// ---------------------------------------------------------------------------
// Bessel J0
// ---------------------------------------------------------------------------

/// J0 by the classical rational fits: series form below 3, modulus/phase
/// asymptotics above. Absolute error below 1e-7 on the whole line.
pub fn bessel_j0(x: f64) -> f64 {
    let ax = x.abs();
    if ax <= 3.0 {
        let y = (ax / 3.0) * (ax / 3.0);
        1.0 + y
            * (-2.249_999_7
                + y * (1.265_620_8
                    + y * (-0.316_386_6
                        + y * (0.044_447_9 + y * (-0.003_944_4 + y * 0.000_210_0)))))
    } else {
        let z = 3.0 / ax;
        let f0 = 0.797_884_56
            + z * (-0.000_000_77
                + z * (-0.005_527_40
                    + z * (-0.000_095_12
                        + z * (0.001_372_37 + z * (-0.000_728_05 + z * 0.000_144_76)))));
        let th = ax - 0.785_398_16
            + z * (-0.041_663_97
                + z * (-0.000_039_54
                    + z * (0.002_625_73
                        + z * (-0.000_541_25 + z * (-0.000_293_33 + z * 0.000_135_58)))));
        f0 * th.cos() / ax.sqrt()
    }
}

// ---------------------------------------------------------------------------
// Literal box quadrature
// ---------------------------------------------------------------------------

/// int phi_j dxi = 2^{3j} * 4 pi * int phi0(rho) rho^2 drho, by Simpson.
pub fn phi_mass(j: i32) -> f64 {
    let n = 4096;
    let (a, b) = (0.5, 2.0);
    let h = (b - a) / n as f64;
    let f = |r: f64| ring_profile(r) * r * r;
    let mut s = f(a) + f(b);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        s += w * f(a + i as f64 * h);
    }
    exp2_i(3 * j) * 4.0 * PI * s * h / 3.0
}

/// I_j(t,.) sampled on a periodic x-lattice by zero-padded FFT of the box
/// quadrature. `x_step` is the lattice spacing; index k (wrapped signed)
/// sits at x = k * x_step per axis.
pub struct OscillatoryBlock {
    pub j: i32,
    pub branch: Branch,
    pub t: f64,
    pub x_step: f64,
    pub n_quad: usize,
    pub x_points: usize,
    /// Sum of phi_j over the quadrature nodes times h^3; the exact triangle
    /// bound for every value in `values`.
    pub node_mass: f64,
    values: Vec<C>,
}

impl OscillatoryBlock {
    pub fn values(&self) -> &[C] {
        &self.values
    }

    pub fn sup_abs(&self) -> f64 {
        self.values.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    pub fn at_origin(&self) -> C {
        self.values[0]
    }

    /// Value at the signed lattice index (kx, ky, kz).
    pub fn value_at(&self, k: [i64; 3]) -> C {
        let p = self.x_points as i64;
        let wrap = |i: i64| ((i % p + p) % p) as usize;
        self.values[wrap(k[0]) + self.x_points * (wrap(k[1]) + self.x_points * wrap(k[2]))]
    }

    pub fn x_coord(&self, k: i64) -> f64 {
        k as f64 * self.x_step
    }
}

fn fft3_pow_any(data: &mut [C], p: usize, plan: &Arc<dyn Fft<f64>>) {
    // Axis x: contiguous lanes.
    plan.process(data);
    let mut buf = vec![C::new(0.0, 0.0); p * p];
    let mut scratch = vec![C::new(0.0, 0.0); plan.get_inplace_scratch_len()];
    for iz in 0..p {
        let base = p * p * iz;
        for iy in 0..p {
            for ix in 0..p {
                buf[ix * p + iy] = data[base + iy * p + ix];
            }
        }
        plan.process_with_scratch(&mut buf, &mut scratch);
        for iy in 0..p {
            for ix in 0..p {
                data[base + iy * p + ix] = buf[ix * p + iy];
            }
        }
    }
    for iy in 0..p {
        let base = p * iy;
        for iz in 0..p {
            for ix in 0..p {
                buf[ix * p + iz] = data[base + p * p * iz + ix];
            }
        }
        plan.process_with_scratch(&mut buf, &mut scratch);
        for iz in 0..p {
            for ix in 0..p {
                data[base + p * p * iz + ix] = buf[ix * p + iz];
            }
        }
    }
}

/// Trapezoid quadrature of I_j over [-2^{j+1}, 2^{j+1}]^3 with n_quad nodes
/// per axis, pushed to the x-lattice of size x_points^3 by zero-padded
/// inverse FFT. The lattice resolves |x| up to pi * n_quad / (2 * 2^{j+1});
/// `x_extent` declares how much of that window the caller intends to use.
pub fn eval_oscillatory_block(
    j: i32,
    branch: Branch,
    t: f64,
    x_extent: f64,
    x_points: usize,
    n_quad: usize,
) -> Result<OscillatoryBlock> {
    if !(x_extent > 0.0) || !t.is_finite() {
        return Err(CoreError::Config(
            "oscillatory block needs a positive x_extent and finite t".into(),
        ));
    }
    let b = exp2_i(j + 1);
    // 8 nodes across the shell thickness 1.5 * 2^j; with h = 2B/N that floor
    // is independent of j.
    let shell_req = (16.0 * b / (1.5 * exp2_i(j))).ceil() as usize;
    let window_req = (2.0 * b * x_extent / PI).ceil() as usize;
    let required = shell_req.max(window_req);
    if n_quad < required {
        return Err(CoreError::Resolution {
            msg: format!(
                "quadrature cannot resolve the 2^{j} shell out to |x| = {x_extent}"
            ),
            required,
        });
    }
    if x_points < n_quad {
        return Err(CoreError::Resolution {
            msg: "zero-padded lattice must hold every quadrature node".into(),
            required: n_quad,
        });
    }
    if x_points > 512 {
        return Err(CoreError::Config(
            "x lattice beyond 512^3 is not supported".into(),
        ));
    }
    let n = n_quad;
    let p = x_points;
    let h = 2.0 * b / n as f64;
    let inv_scale = exp2_i(-j);
    let mut data = vec![C::new(0.0, 0.0); p * p * p];
    let mut node_mass = 0.0;
    for a3 in 0..n {
        let z = -b + a3 as f64 * h;
        for a2 in 0..n {
            let y = -b + a2 as f64 * h;
            for a1 in 0..n {
                let x = -b + a1 as f64 * h;
                let w = ring_profile((x * x + y * y + z * z).sqrt() * inv_scale);
                if w == 0.0 {
                    continue;
                }
                node_mass += w;
                let ph = t * lambda(branch, [x, y, z]);
                data[a1 + p * (a2 + p * a3)] = C::new(w * ph.cos(), w * ph.sin());
            }
        }
    }
    let h3 = h * h * h;
    node_mass *= h3;
    let mut planner = FftPlanner::new();
    let plan = planner.plan_fft_inverse(p);
    fft3_pow_any(&mut data, p, &plan);
    // Undo the node offset -B: each axis contributes e^{-i B x_k}.
    let x_step = 2.0 * PI / (p as f64 * h);
    let phase: Vec<C> = (0..p)
        .map(|k| {
            let ks = if k <= p / 2 { k as i64 } else { k as i64 - p as i64 };
            let ang = -b * ks as f64 * x_step;
            C::new(ang.cos(), ang.sin())
        })
        .collect();
    for a3 in 0..p {
        for a2 in 0..p {
            let pp = phase[a3] * phase[a2];
            let row = p * (a2 + p * a3);
            for a1 in 0..p {
                data[row + a1] *= pp * phase[a1] * h3;
            }
        }
    }
    Ok(OscillatoryBlock {
        j,
        branch,
        t,
        x_step,
        n_quad,
        x_points,
        node_mass,
        values: data,
    })
}

/// I_j(t,x) at one point by the same trapezoid sum, without the transform.
pub fn eval_block_point(j: i32, branch: Branch, t: f64, x: [f64; 3], n_quad: usize) -> C {
    let b = exp2_i(j + 1);
    let n = n_quad;
    let h = 2.0 * b / n as f64;
    let inv_scale = exp2_i(-j);
    let mut acc = C::new(0.0, 0.0);
    for a3 in 0..n {
        let z = -b + a3 as f64 * h;
        for a2 in 0..n {
            let y = -b + a2 as f64 * h;
            for a1 in 0..n {
                let xx = -b + a1 as f64 * h;
                let w = ring_profile((xx * xx + y * y + z * z).sqrt() * inv_scale);
                if w == 0.0 {
                    continue;
                }
                let ph = t * lambda(branch, [xx, y, z]) + x[0] * xx + x[1] * y + x[2] * z;
                acc += C::new(w * ph.cos(), w * ph.sin());
            }
        }
    }
    acc * h * h * h
}

// ---------------------------------------------------------------------------
// Axisymmetric evaluation engine
// ---------------------------------------------------------------------------

pub struct FieldStats {
    pub sup: f64,
    /// ||G||_{L^q(R^3)} when requested.
    pub lq: Option<f64>,
}

/// Range of the phase gradient over the shell supp phi0(.|/b): max radial
/// slope, midrange vertical slope, half-width of the vertical slope range.
fn shell_gradients(b: f64, branch: Branch) -> (f64, f64, f64) {
    let s = branch.sign();
    let mut g_rho = 0.0f64;
    let mut gz_min = f64::INFINITY;
    let mut gz_max = f64::NEG_INFINITY;
    for ir in 0..=24 {
        let rad = b * (0.5 + 1.5 * ir as f64 / 24.0);
        for ia in 0..=64 {
            let th = PI * ia as f64 / 64.0;
            let rho = rad * th.sin();
            let z = rad * th.cos();
            let ep = (rho * rho + (z + 1.0) * (z + 1.0)).sqrt();
            let em = (rho * rho + (z - 1.0) * (z - 1.0)).sqrt();
            if ep < 1e-9 || em < 1e-9 {
                // The gradient direction is not defined at the poles, but its
                // components stay in [-1, 1]; neighbors cover the range.
                continue;
            }
            let dr = 0.5 * rho * (1.0 / ep + s / em);
            let dz = 0.5 * ((z + 1.0) / ep + s * (z - 1.0) / em);
            g_rho = g_rho.max(dr.abs());
            gz_min = gz_min.min(dz);
            gz_max = gz_max.max(dz);
        }
    }
    let v = 0.5 * (gz_min + gz_max);
    let gzh = 0.5 * (gz_max - gz_min);
    (g_rho * 1.02 + 1e-4, v, gzh * 1.05 + 1e-4)
}

fn lam2d(branch: Branch, rho: f64, z: f64) -> f64 {
    let h2 = rho * rho;
    let ep = (h2 + (z + 1.0) * (z + 1.0)).sqrt();
    let em = (h2 + (z - 1.0) * (z - 1.0)).sqrt();
    0.5 * (ep + branch.sign() * em)
}

fn next_pow2(n: usize) -> usize {
    let mut p = 1;
    while p < n {
        p *= 2;
    }
    p
}

fn parabola_peak(ym: f64, y0: f64, yp: f64) -> f64 {
    let den = ym - 2.0 * y0 + yp;
    if den >= -1e-300 {
        return y0;
    }
    y0 - (yp - ym) * (yp - ym) / (8.0 * den)
}

/// Field of int J0(r rho) e^{i z xi3} e^{i tau (lambda - v xi3)} phi0(|.|/b)
/// rho drho dxi3 over an adaptive (r, z) window: sup always, L^q on request.
/// The drift v and global phases only translate z and rotate the values, so
/// the modulus statistics are those of the untranslated field.
pub fn axisym_stats(b: f64, branch: Branch, tau: f64, q: Option<f64>, quad: f64) -> Result<FieldStats> {
    if !(b > 0.0) || !b.is_finite() || !tau.is_finite() || !(quad >= 1.0) {
        return Err(CoreError::Config(
            "axisymmetric evaluation needs b > 0, finite tau, quad >= 1".into(),
        ));
    }
    if let Some(qv) = q {
        if !(2.0..=16.0).contains(&qv) {
            return Err(CoreError::Config("L^q accumulation supports 2 <= q <= 16".into()));
        }
    }
    let (g_rho, v, g_zh) = shell_gradients(b, branch);
    let at = tau.abs();
    let mut margin = 45.0 * 1.0f64.max(1.0 / b);
    let target_factor = if q.is_some() { 4.5 } else { 3.5 };
    let mut planner = FftPlanner::new();
    for _attempt in 0..4 {
        let r_ext = EXTENT_SAFETY * at * g_rho + margin;
        let z_ext = EXTENT_SAFETY * at * g_zh + margin;
        let h_rho =
            (2.0 * PI / (OSR_RHO * (at * g_rho + r_ext + 1.0))).min(1.5 * b / 8.0) / quad;
        let h_z = (PI / (1.05 * z_ext)).min(1.5 * b / 8.0) / quad;
        let n_rho = (2.0 * b / h_rho).ceil() as usize + 1;
        let n_z = (4.0 * b / h_z).ceil() as usize + 2;
        if n_rho * n_z > 80_000_000 {
            return Err(CoreError::Resolution {
                msg: format!("axisymmetric lattice for b={b}, tau={tau} exceeds memory"),
                required: n_rho * n_z,
            });
        }
        // Integrand with the rho h_rho h_z weight folded in; row i-1 holds
        // rho_i = i h_rho (the rho = 0 ring has zero weight).
        let c0 = lam2d(branch, b, 0.0);
        let mut g = vec![C::new(0.0, 0.0); n_rho * n_z];
        for i in 1..=n_rho {
            let rho = i as f64 * h_rho;
            let base = (i - 1) * n_z;
            // 2 pi from the angular integral of the axisymmetric weight.
            let wr = 2.0 * PI * rho * h_rho * h_z;
            for n in 0..n_z {
                let z = -2.0 * b + n as f64 * h_z;
                let w = ring_profile((rho * rho + z * z).sqrt() / b);
                if w == 0.0 {
                    continue;
                }
                let ph = tau * (lam2d(branch, rho, z) - v * z - c0);
                g[base + n] = C::new(w * wr * ph.cos(), w * wr * ph.sin());
            }
        }
        let delta = PI / (target_factor * b);
        let n_r = (r_ext / delta).ceil() as usize + 1;
        let p_z = next_pow2(((2.0 * PI / (h_z * delta)).ceil() as usize).max(n_z));
        let dz_out = 2.0 * PI / (p_z as f64 * h_z);
        let z_half = PI / h_z;
        let plan = planner.plan_fft_inverse(p_z);
        let mut scratch = vec![C::new(0.0, 0.0); plan.get_inplace_scratch_len()];
        let qv = q.unwrap_or(4.0);

        let r_edge = 0.90 * (n_r - 1) as f64 * delta;
        let z_edge = 0.90 * z_half;
        let mut sup = 0.0f64;
        let mut best = (0usize, 0usize);
        let mut edge_sup = 0.0f64;
        let mut mass = 0.0f64;
        let mut edge_mass = 0.0f64;

        let block = 128usize;
        let mut w_blk = vec![0.0f64; block * n_rho];
        let mut c_blk = vec![0.0f64; block * 2 * n_z];
        let mut fftbuf = vec![C::new(0.0, 0.0); p_z];
        let mut row_out = vec![0.0f64; p_z];

        // One r-row of field moduli: Bessel-weighted column sum, then FFT.
        let mut eval_rows = |m0: usize,
                             rows: usize,
                             w_blk: &mut [f64],
                             c_blk: &mut [f64],
                             fftbuf: &mut [C],
                             scratch: &mut [C],
                             sink: &mut dyn FnMut(usize, &[f64])| {
            for (row, wrow) in w_blk.chunks_mut(n_rho).enumerate().take(rows) {
                let r = (m0 + row) as f64 * delta;
                for (i, wv) in wrow.iter_mut().enumerate() {
                    *wv = bessel_j0(r * (i + 1) as f64 * h_rho);
                }
            }
            unsafe {
                matrixmultiply::dgemm(
                    rows,
                    n_rho,
                    2 * n_z,
                    1.0,
                    w_blk.as_ptr(),
                    n_rho as isize,
                    1,
                    g.as_ptr() as *const f64,
                    2 * n_z as isize,
                    1,
                    0.0,
                    c_blk.as_mut_ptr(),
                    2 * n_z as isize,
                    1,
                );
            }
            for row in 0..rows {
                for slot in fftbuf.iter_mut() {
                    *slot = C::new(0.0, 0.0);
                }
                let src = &c_blk[row * 2 * n_z..(row + 1) * 2 * n_z];
                for n in 0..n_z {
                    fftbuf[n] = C::new(src[2 * n], src[2 * n + 1]);
                }
                plan.process_with_scratch(fftbuf, scratch);
                for k in 0..p_z {
                    row_out[k] = fftbuf[k].norm();
                }
                sink(m0 + row, &row_out);
            }
        };

        let mut m0 = 0;
        while m0 < n_r {
            let rows = block.min(n_r - m0);
            eval_rows(
                m0,
                rows,
                &mut w_blk,
                &mut c_blk,
                &mut fftbuf,
                &mut scratch,
                &mut |m, moduli| {
                    let r = m as f64 * delta;
                    let on_r_edge = r >= r_edge;
                    for (k, &a) in moduli.iter().enumerate() {
                        if a > sup {
                            sup = a;
                            best = (m, k);
                        }
                        let ks = if k <= p_z / 2 { k as f64 } else { k as f64 - p_z as f64 };
                        let on_edge = on_r_edge || (ks * dz_out).abs() >= z_edge;
                        if on_edge && a > edge_sup {
                            edge_sup = a;
                        }
                        if q.is_some() {
                            let cell = r * a.powf(qv);
                            mass += cell;
                            if on_edge {
                                edge_mass += cell;
                            }
                        }
                    }
                },
            );
            m0 += rows;
        }

        // Refine the sup by a parabola through the argmax neighbors in both
        // lattice directions; the moduli are smooth on the target spacing.
        let (bm, bk) = best;
        let mut refined = sup;
        let mut neighbor_vals = vec![0.0f64; 3];
        let m_lo = bm.saturating_sub(1);
        let rows = (bm + 2).min(n_r) - m_lo;
        eval_rows(
            m_lo,
            rows,
            &mut w_blk,
            &mut c_blk,
            &mut fftbuf,
            &mut scratch,
            &mut |m, moduli| {
                neighbor_vals[m - m_lo] = moduli[bk];
                if m == bm {
                    let km = (bk + p_z - 1) % p_z;
                    let kp = (bk + 1) % p_z;
                    refined = refined.max(parabola_peak(moduli[km], moduli[bk], moduli[kp]));
                }
            },
        );
        if rows == 3 {
            refined = refined.max(parabola_peak(
                neighbor_vals[0],
                neighbor_vals[1],
                neighbor_vals[2],
            ));
        }

        if sup <= 0.0 {
            return Err(CoreError::Quadrature(
                "axisymmetric field evaluated to zero".into(),
            ));
        }
        let edge_sup_ratio = edge_sup / sup;
        let edge_mass_ratio = if mass > 0.0 { edge_mass / mass } else { 0.0 };
        let window_ok =
            edge_sup_ratio < EDGE_TOL && (q.is_none() || edge_mass_ratio < EDGE_TOL);
        if window_ok {
            let lq = q.map(|qv| (2.0 * PI * delta * dz_out * mass).powf(1.0 / qv));
            return Ok(FieldStats { sup: refined, lq });
        }
        margin *= 1.7;
    }
    Err(CoreError::Quadrature(format!(
        "wave tail still reaches the window edge for b={b}, tau={tau} after widening"
    )))
}

/// sup_x |I_j(t,.)| via the axisymmetric engine. `quad` >= 1 sharpens every
/// step size by that factor; doubling it is the self-convergence probe.
pub fn oscillatory_sup(j: i32, branch: Branch, t: f64, quad: f64) -> Result<f64> {
    axisym_stats(exp2_i(j), branch, t, None, quad).map(|s| s.sup)
}

/// Relative change of sup_x |I_j(t,.)| under doubled quadrature resolution.
pub fn sup_self_convergence(j: i32, branch: Branch, t: f64) -> Result<f64> {
    let coarse = oscillatory_sup(j, branch, t, 1.0)?;
    let fine = oscillatory_sup(j, branch, t, 2.0)?;
    Ok((coarse - fine).abs() / fine)
}

// ---------------------------------------------------------------------------
// Decay fits
// ---------------------------------------------------------------------------

/// A fitted power law for one dyadic block and branch.
#[derive(Debug, Clone, Serialize)]
pub struct DecayFit {
    pub j: i32,
    pub branch: Branch,
    /// "low" when the 2^{3j} clock is slower than unit time, else "unit".
    pub band: String,
    /// (t, sup_x |I_j(t,.)|), strictly increasing in t.
    pub samples: Vec<(f64, f64)>,
    pub exponent: f64,
    pub prefactor: f64,
    pub max_log_residual: f64,
}

fn ols(xs: &[f64], ys: &[f64]) -> (f64, f64, f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    let mut syy = 0.0;
    for (&x, &y) in xs.iter().zip(ys) {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
        syy += (y - my) * (y - my);
    }
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let intercept = my - slope * mx;
    let mut max_resid = 0.0f64;
    let mut ss_res = 0.0;
    for (&x, &y) in xs.iter().zip(ys) {
        let r = y - (intercept + slope * x);
        max_resid = max_resid.max(r.abs());
        ss_res += r * r;
    }
    let r2 = if syy > 0.0 { 1.0 - ss_res / syy } else { 1.0 };
    (slope, intercept, max_resid, r2)
}

pub fn sup_decay_fit(
    j: i32,
    branch: Branch,
    t_range: (f64, f64),
    n_samples: usize,
) -> Result<DecayFit> {
    sup_decay_fit_quad(j, branch, t_range, n_samples, 1.0)
}

/// Fit log sup_x |I_j| against log(min{2^{3j},1} t) over log-spaced samples;
/// only samples with that clock >= 5 enter the fit.
pub fn sup_decay_fit_quad(
    j: i32,
    branch: Branch,
    t_range: (f64, f64),
    n_samples: usize,
    quad: f64,
) -> Result<DecayFit> {
    let (t_lo, t_hi) = t_range;
    if !(t_lo > 0.0 && t_hi > t_lo) || n_samples < 4 {
        return Err(CoreError::Config(
            "decay fit needs 0 < t_lo < t_hi and at least 4 samples".into(),
        ));
    }
    let clock = exp2_i(3 * j).min(1.0);
    let ratio = (t_hi / t_lo).powf(1.0 / (n_samples as f64 - 1.0));
    let mut samples = Vec::with_capacity(n_samples);
    for k in 0..n_samples {
        let t = t_lo * ratio.powi(k as i32);
        let sup = oscillatory_sup(j, branch, t, quad)?;
        samples.push((t, sup));
    }
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for &(t, s) in &samples {
        if clock * t >= 5.0 - 1e-9 {
            xs.push((clock * t).ln());
            ys.push(s.ln());
        }
    }
    if xs.len() < 4 {
        return Err(CoreError::Config(format!(
            "fit window too short: only {} samples reach clock 5; extend t_range past {:.3e}",
            xs.len(),
            5.0 / clock
        )));
    }
    let (slope, intercept, max_resid, _) = ols(&xs, &ys);
    Ok(DecayFit {
        j,
        branch,
        band: if j < 0 { "low".into() } else { "unit".into() },
        samples,
        exponent: slope,
        prefactor: intercept.exp(),
        max_log_residual: max_resid,
    })
}

// ---------------------------------------------------------------------------
// Hessian rank survey
// ---------------------------------------------------------------------------

/// Histogram of numerical Hessian ranks over a frequency sample.
#[derive(Debug, Clone, Serialize)]
pub struct RankMap {
    pub counts: [usize; 4],
    pub min_rank: usize,
    pub points: usize,
}

/// Numerical rank of the phase Hessian at each point: eigenvalues above
/// 1e-8 times the largest magnitude count. Points must keep a distance of
/// 1e-3 from the two singular frequencies (0, 0, -+1).
pub fn hessian_rank_map(branch: Branch, points: &[[f64; 3]]) -> Result<RankMap> {
    let mut counts = [0usize; 4];
    let mut min_rank = 3usize;
    for &p in points {
        for pole in [1.0, -1.0] {
            let d2 = p[0] * p[0] + p[1] * p[1] + (p[2] - pole) * (p[2] - pole);
            if d2 < 1e-3 * 1e-3 {
                return Err(CoreError::SingularPoint(p[0], p[1], p[2]));
            }
        }
        let h = lambda_hessian(branch, p)?;
        let (vals, _) = h.eigen();
        let top = vals.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let rank = h.rank(1e-8 * top);
        counts[rank] += 1;
        min_rank = min_rank.min(rank);
    }
    Ok(RankMap {
        counts,
        min_rank,
        points: points.len(),
    })
}

/// Cubic lattice over [-r_max, r_max]^3 restricted to the closed annulus
/// r_min <= |xi| <= r_max.
pub fn annulus_lattice(n: usize, r_min: f64, r_max: f64) -> Vec<[f64; 3]> {
    let mut out = Vec::new();
    for iz in 0..n {
        for iy in 0..n {
            for ix in 0..n {
                let c = |i: usize| -r_max + 2.0 * r_max * i as f64 / (n as f64 - 1.0);
                let p = [c(ix), c(iy), c(iz)];
                let r = (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt();
                if r >= r_min && r <= r_max {
                    out.push(p);
                }
            }
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Power-law fits
// ---------------------------------------------------------------------------

/// Log-log least squares for a parameter sweep.
#[derive(Debug, Clone, Serialize)]
pub struct ScalingFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub points: usize,
}

pub fn scaling_fit(xs: &[f64], ys: &[f64]) -> Result<ScalingFit> {
    if xs.len() != ys.len() || xs.len() < 4 {
        return Err(CoreError::Config(
            "scaling fit needs at least 4 matched points".into(),
        ));
    }
    if xs.iter().chain(ys).any(|&v| !(v > 0.0) || !v.is_finite()) {
        return Err(CoreError::Config(
            "scaling fit needs strictly positive finite values".into(),
        ));
    }
    let lx: Vec<f64> = xs.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|v| v.ln()).collect();
    let (slope, intercept, _, r2) = ols(&lx, &ly);
    Ok(ScalingFit {
        slope,
        intercept,
        r_squared: r2,
        points: xs.len(),
    })
}

/// Two-regressor log-log least squares: ln y = c + a ln x1 + b ln x2.
#[derive(Debug, Clone, Serialize)]
pub struct JointFit {
    pub exp1: f64,
    pub exp2: f64,
    pub intercept: f64,
}

pub fn joint_power_fit(points: &[(f64, f64, f64)]) -> Result<JointFit> {
    if points.len() < 4 {
        return Err(CoreError::Config(
            "joint fit needs at least 4 sweep points".into(),
        ));
    }
    if points
        .iter()
        .any(|&(x1, x2, y)| !(x1 > 0.0 && x2 > 0.0 && y > 0.0))
    {
        return Err(CoreError::Config(
            "joint fit needs strictly positive values".into(),
        ));
    }
    // Normal equations for [1, ln x1, ln x2].
    let mut m = [[0.0f64; 3]; 3];
    let mut rhs = [0.0f64; 3];
    for &(x1, x2, y) in points {
        let row = [1.0, x1.ln(), x2.ln()];
        let ly = y.ln();
        for i in 0..3 {
            rhs[i] += row[i] * ly;
            for k in 0..3 {
                m[i][k] += row[i] * row[k];
            }
        }
    }
    // Gaussian elimination with partial pivoting on the 3x3 system.
    let mut aug = [[0.0f64; 4]; 3];
    for i in 0..3 {
        aug[i][..3].copy_from_slice(&m[i]);
        aug[i][3] = rhs[i];
    }
    for col in 0..3 {
        let piv = (col..3)
            .max_by(|&a, &b| aug[a][col].abs().total_cmp(&aug[b][col].abs()))
            .unwrap();
        aug.swap(col, piv);
        if aug[col][col].abs() < 1e-12 {
            return Err(CoreError::Config(
                "joint fit design is rank deficient; vary both parameters".into(),
            ));
        }
        for r in col + 1..3 {
            let f = aug[r][col] / aug[col][col];
            for c in col..4 {
                aug[r][c] -= f * aug[col][c];
            }
        }
    }
    let mut sol = [0.0f64; 3];
    for i in (0..3).rev() {
        let mut acc = aug[i][3];
        for k in i + 1..3 {
            acc -= aug[i][k] * sol[k];
        }
        sol[i] = acc / aug[i][i];
    }
    Ok(JointFit {
        exp1: sol[1],
        exp2: sol[2],
        intercept: sol[0],
    })
}

// ---------------------------------------------------------------------------
// Strichartz norms
// ---------------------------------------------------------------------------

fn admissible(q: f64, r: f64) -> bool {
    let iq = if q.is_infinite() { 0.0 } else { 1.0 / q };
    let ir = if r.is_infinite() { 0.0 } else { 1.0 / r };
    if q < 2.0 || r < 2.0 {
        return false;
    }
    if q.is_infinite() && (r - 2.0).abs() < 1e-12 {
        return false;
    }
    iq + ir <= 0.5 + 1e-12
}

/// ||Delta_j (a,u)||_{L^r(0,T; L^q)} along the exact linear evolution on the
/// periodic box. The spatial exponent is q, the temporal one r; the pair must
/// satisfy 1/q + 1/r <= 1/2 with (q,r) = (inf, 2) excluded.
pub fn strichartz_block_norm(
    p: &Params,
    state0: &SpectralState,
    j: i32,
    q: Lp,
    r: Lp,
    t_final: f64,
    n_frames: usize,
) -> Result<f64> {
    if !admissible(q.as_f64(), r.as_f64()) {
        return Err(CoreError::Config(format!(
            "inadmissible exponents (q, r) = ({}, {}): need 1/q + 1/r <= 1/2 and (q, r) != (inf, 2)",
            q.as_f64(),
            r.as_f64()
        )));
    }
    if !(t_final > 0.0) || n_frames < 2 {
        return Err(CoreError::Config(
            "strichartz norm needs t_final > 0 and at least 2 frames".into(),
        ));
    }
    let decomp = crate::dyadic::Decomp::new(state0.grid());
    if j < decomp.j_min() || j > decomp.j_max() {
        return Err(CoreError::Config(format!(
            "block {j} outside the resolved range [{}, {}]",
            decomp.j_min(),
            decomp.j_max()
        )));
    }
    let times: Vec<f64> = (0..n_frames)
        .map(|i| t_final * i as f64 / (n_frames as f64 - 1.0))
        .collect();
    let traj = evolve_trajectory(p, state0, &times)?;
    let vals: Vec<f64> = traj
        .iter()
        .map(|s| decomp.block_lp(&s.fields(), j, q))
        .collect();
    Ok(crate::dyadic::time_lr(&times, &vals, r))
}

/// One measured point of the half-wave space-time norm scaling.
#[derive(Debug, Clone, Serialize)]
pub struct StrichartzPoint {
    pub omega: f64,
    pub eps: f64,
    pub j: i32,
    /// Shell radius of the normalized phase argument, 2^j / (|Omega| eps).
    pub b: f64,
    pub q: f64,
    pub r: f64,
    /// ||e^{i t Omega lambda(D / (Omega eps))} psi_j||_{L^r_t(R; L^q(R^3))}.
    pub norm: f64,
    /// The same norm in the rescaled frame, before the exact Omega, eps
    /// prefactors are restored.
    pub normalized: f64,
    /// Fitted decay exponent of the time integrand tail.
    pub tail_exponent: f64,
}

/// Geometric ladder of normalized clock values for the time quadrature.
const CLOCK_LADDER: [f64; 12] = [
    0.0, 0.25, 0.42, 0.70, 1.17, 1.95, 3.26, 5.44, 9.10, 15.20, 25.40, 42.40,
];

/// Space-time norm of the frequency-localized scalar half-wave evolution on
/// R^3, data phi0(|xi| / 2^j). Substituting xi = Omega eps eta maps the phase
/// t Omega lambda(xi / (Omega eps)) to tau lambda(eta) with tau = Omega t and
/// shell b = 2^j / (Omega eps); the norm carries the exact Jacobian factors
/// (Omega eps)^{3 - 3/q} Omega^{-1/r} back. Only the rescaled profile is
/// quadratured, so every oscillation lives at unit scale.
pub fn halfwave_strichartz_norm(
    branch: Branch,
    omega: f64,
    eps: f64,
    j: i32,
    q: f64,
    r: f64,
    quad: f64,
) -> Result<StrichartzPoint> {
    if !(omega != 0.0 && omega.is_finite() && eps > 0.0 && eps.is_finite()) {
        return Err(CoreError::Config(
            "halfwave norm needs omega != 0 and eps > 0".into(),
        ));
    }
    if !q.is_finite() || !r.is_finite() || !admissible(q, r) {
        return Err(CoreError::Config(format!(
            "inadmissible exponents (q, r) = ({q}, {r}) for the halfwave norm"
        )));
    }
    let om = omega.abs();
    let b = exp2_i(j) / (om * eps);
    let clock = (b * b * b).min(1.0);
    let mut taus = Vec::with_capacity(CLOCK_LADDER.len());
    let mut integrand = Vec::with_capacity(CLOCK_LADDER.len());
    for &c in CLOCK_LADDER.iter() {
        let tau = c / clock;
        let stats = axisym_stats(b, branch, tau, Some(q), quad)?;
        taus.push(tau);
        integrand.push(stats.lq.unwrap().powf(r));
    }
    // Trapezoid over the ladder plus a fitted power-law tail.
    let mut head = 0.0;
    for k in 1..taus.len() {
        head += 0.5 * (taus[k] - taus[k - 1]) * (integrand[k] + integrand[k - 1]);
    }
    let nfit = 4;
    let lx: Vec<f64> = taus[taus.len() - nfit..].iter().map(|t| t.ln()).collect();
    let ly: Vec<f64> = integrand[integrand.len() - nfit..]
        .iter()
        .map(|m| m.max(1e-300).ln())
        .collect();
    let (slope, _, _, _) = ols(&lx, &ly);
    let beta = -slope;
    if beta <= 1.15 {
        return Err(CoreError::Quadrature(format!(
            "time integrand decays like tau^{:.3}; integral not convergent enough to truncate",
            slope
        )));
    }
    let tail = integrand.last().unwrap() * taus.last().unwrap() / (beta - 1.0);
    let normalized = (2.0 * (head + tail)).powf(1.0 / r);
    let norm = (om * eps).powf(3.0 - 3.0 / q) * om.powf(-1.0 / r) * normalized;
    Ok(StrichartzPoint {
        omega,
        eps,
        j,
        b,
        q,
        r,
        norm,
        normalized,
        tail_exponent: beta,
    })
}
