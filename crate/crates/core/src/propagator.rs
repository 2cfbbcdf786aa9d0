//! Exact per-mode linear evolution, Duhamel forcing, the effective-velocity
//! change of variables, and the block energy functionals.
//!
//! Every operator here is a Fourier multiplier built from the 4x4 symbol, so
//! evolution commutes with dyadic projection by construction. The Nyquist
//! planes are zeroed on every step: the unpaired -n/2 index is self-conjugate
//! and the complex mode matrix would push it off the real-field manifold.

use num_complex::Complex64;

use crate::dyadic::{exp2_i, phi_weight, Band};
use crate::error::{CoreError, Result};
use crate::grid::{Field, Field3, Grid, Repr};
use crate::smallmat::{expm, quartic_roots, solve4, C, M4};
use crate::symbol::{generator, quartic_coefficients, Params};

/// Transformed pair (a_hat, u_hat) at one instant.
#[derive(Clone, Debug)]
pub struct SpectralState {
    grid: Grid,
    pub time: f64,
    pub a: Field,
    pub u: Field3,
}

impl SpectralState {
    pub fn new(grid: &Grid, time: f64, a: Field, u: Field3) -> Result<SpectralState> {
        let s = SpectralState { grid: grid.clone(), time, a, u };
        s.validate()?;
        Ok(s)
    }

    pub fn zeros(grid: &Grid, time: f64) -> SpectralState {
        SpectralState {
            grid: grid.clone(),
            time,
            a: grid.zeros(Repr::Spectral),
            u: Field3::zeros(grid, Repr::Spectral),
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    /// Finite entries, spectral storage, conjugate symmetry.
    pub fn validate(&self) -> Result<()> {
        for f in self.fields() {
            if f.repr != Repr::Spectral {
                return Err(CoreError::Representation { expected: "spectral" });
            }
            if f.n() != self.grid.n() {
                return Err(CoreError::Config("state field size differs from grid".into()));
            }
            let mut max = 0.0f64;
            for v in &f.data {
                if !v.re.is_finite() || !v.im.is_finite() {
                    return Err(CoreError::Config("non-finite spectral coefficient".into()));
                }
                max = max.max(v.norm());
            }
            // The defect is relative to the largest coefficient; rescale so a
            // field that is zero up to roundoff cannot trip the check.
            let defect = self.grid.conjugate_symmetry_defect(f) * max;
            if defect > 1e-10 * (1.0 + max) {
                return Err(CoreError::Config(format!(
                    "conjugate symmetry defect {defect} exceeds tolerance"
                )));
            }
        }
        Ok(())
    }

    pub fn fields(&self) -> [&Field; 4] {
        [&self.a, &self.u.0[0], &self.u.0[1], &self.u.0[2]]
    }

    /// L2 norm of the pair over the box.
    pub fn l2(&self) -> f64 {
        self.fields()
            .iter()
            .map(|f| self.grid.l2_spectral(f).powi(2))
            .sum::<f64>()
            .sqrt()
    }

    pub(crate) fn mode(&self, i: usize) -> [C; 4] {
        [self.a.data[i], self.u.0[0].data[i], self.u.0[1].data[i], self.u.0[2].data[i]]
    }

    pub(crate) fn set_mode(&mut self, i: usize, v: [C; 4]) {
        self.a.data[i] = v[0];
        self.u.0[0].data[i] = v[1];
        self.u.0[1].data[i] = v[2];
        self.u.0[2].data[i] = v[3];
    }

    pub(crate) fn zero_nyquist(&mut self) {
        let g = self.grid.clone();
        g.zero_nyquist(&mut self.a);
        for f in self.u.0.iter_mut() {
            g.zero_nyquist(f);
        }
    }
}

fn apply_multiplier(
    state: &SpectralState,
    new_time: f64,
    mut mat: impl FnMut([f64; 3]) -> M4,
) -> Result<SpectralState> {
    let mut out = state.clone();
    out.time = new_time;
    state.grid.for_each_mode(|i, xi| {
        let m = mat(xi);
        out.set_mode(i, m.mul_vec(&state.mode(i)));
    });
    out.zero_nyquist();
    out.validate()?;
    Ok(out)
}

/// Flow of the full linear system for time t (negative t only when inviscid).
pub fn evolve(p: &Params, state: &SpectralState, t: f64) -> Result<SpectralState> {
    if t < 0.0 && !p.is_inviscid() {
        return Err(CoreError::Config(format!(
            "viscous semigroup runs forward only, got t = {t}"
        )));
    }
    apply_multiplier(state, state.time + t, |xi| {
        expm(&generator(p, xi).scale(C::new(t, 0.0)))
    })
}

/// Rotation-acoustic group at the given Omega, eps; any sign of t.
pub fn evolve_inviscid(state: &SpectralState, t: f64, omega: f64, eps: f64) -> Result<SpectralState> {
    let p = Params::inviscid(omega, eps, 2.0)?;
    evolve(&p, state, t)
}

/// Evolve along uniformly spaced `times`, returning the whole trajectory.
/// One multiplier table serves every step.
pub fn evolve_trajectory(
    p: &Params,
    state0: &SpectralState,
    times: &[f64],
) -> Result<Vec<SpectralState>> {
    let dt = uniform_dt(times)?;
    if dt < 0.0 && !p.is_inviscid() {
        return Err(CoreError::Config("viscous semigroup runs forward only".into()));
    }
    let grid = state0.grid.clone();
    let mut table: Vec<M4> = Vec::with_capacity(grid.len());
    grid.for_each_mode(|_, xi| {
        table.push(expm(&generator(p, xi).scale(C::new(dt, 0.0))));
    });
    let mut out = Vec::with_capacity(times.len());
    let mut cur = state0.clone();
    cur.time = times[0];
    cur.zero_nyquist();
    out.push(cur.clone());
    for &t in &times[1..] {
        let mut next = cur.clone();
        next.time = t;
        grid.for_each_mode(|i, _| {
            next.set_mode(i, table[i].mul_vec(&cur.mode(i)));
        });
        next.zero_nyquist();
        out.push(next.clone());
        cur = next;
    }
    out.last().unwrap().validate()?;
    Ok(out)
}

fn uniform_dt(times: &[f64]) -> Result<f64> {
    if times.len() < 2 {
        return Err(CoreError::Config("need at least two time samples".into()));
    }
    let dt = times[1] - times[0];
    for k in 1..times.len() {
        let step = times[k] - times[k - 1];
        if (step - dt).abs() > 1e-9 * (1.0 + dt.abs()) {
            return Err(CoreError::Config("time samples must be uniformly spaced".into()));
        }
    }
    Ok(dt)
}

/// Forced evolution d/dt y = -M y + F by the exponential midpoint rule:
/// y_{k+1} = E y_k + dt E_half (F_k + F_{k+1})/2. Second order in dt.
pub fn duhamel(
    p: &Params,
    state0: &SpectralState,
    forcing: &[SpectralState],
    times: &[f64],
) -> Result<Vec<SpectralState>> {
    if forcing.len() != times.len() {
        return Err(CoreError::Config(format!(
            "forcing has {} samples for {} times",
            forcing.len(),
            times.len()
        )));
    }
    let dt = uniform_dt(times)?;
    if dt <= 0.0 {
        return Err(CoreError::Config("duhamel needs increasing times".into()));
    }
    let grid = state0.grid.clone();
    for f in forcing {
        if f.grid.n() != grid.n() {
            return Err(CoreError::Config("forcing grid differs from state grid".into()));
        }
    }
    let mut table: Vec<(M4, M4)> = Vec::with_capacity(grid.len());
    grid.for_each_mode(|_, xi| {
        let g = generator(p, xi);
        table.push((
            expm(&g.scale(C::new(dt, 0.0))),
            expm(&g.scale(C::new(0.5 * dt, 0.0))),
        ));
    });
    let mut out = Vec::with_capacity(times.len());
    let mut cur = state0.clone();
    cur.time = times[0];
    cur.zero_nyquist();
    out.push(cur.clone());
    for k in 1..times.len() {
        let mut next = cur.clone();
        next.time = times[k];
        grid.for_each_mode(|i, _| {
            let (e, e_half) = &table[i];
            let y = e.mul_vec(&cur.mode(i));
            let fa = forcing[k - 1].mode(i);
            let fb = forcing[k].mode(i);
            let mut avg = [C::new(0.0, 0.0); 4];
            for c in 0..4 {
                avg[c] = (fa[c] + fb[c]) * (0.5 * dt);
            }
            let kick = e_half.mul_vec(&avg);
            let mut v = y;
            for c in 0..4 {
                v[c] += kick[c];
            }
            next.set_mode(i, v);
        });
        next.zero_nyquist();
        out.push(next.clone());
        cur = next;
    }
    out.last().unwrap().validate()?;
    Ok(out)
}

/// w_hat = u_hat + (i xi / |xi|^2) a_hat / eps; mode 0 correction dropped.
/// The sign makes div w = div u - a/eps.
pub fn effective_velocity(state: &SpectralState, eps: f64) -> Field3 {
    let mut w = state.u.clone();
    state.grid.for_each_mode(|i, xi| {
        let rho2 = xi[0] * xi[0] + xi[1] * xi[1] + xi[2] * xi[2];
        if rho2 > 0.0 {
            let f = Complex64::new(0.0, 1.0) * state.a.data[i] / (eps * rho2);
            for k in 0..3 {
                w.0[k].data[i] += f * xi[k];
            }
        }
    });
    w
}

/// ||Delta_j (a, u)||_{L^2} from spectral data.
pub fn block_l2_pair(state: &SpectralState, j: i32) -> f64 {
    let mut acc = 0.0;
    state.grid.for_each_mode(|i, xi| {
        let w = phi_weight(j, xi);
        if w > 0.0 {
            let m: f64 = state.fields().iter().map(|f| f.data[i].norm_sqr()).sum();
            acc += w * w * m;
        }
    });
    (acc * state.grid.volume()).sqrt()
}

/// Squared hybrid block functional:
/// V_j^2 = ||Delta_j (a,u)||^2 + 2 delta Re<eps grad Delta_j a, Delta_j u>.
pub fn vj_squared(state: &SpectralState, j: i32, delta: f64, eps: f64) -> f64 {
    let mut base = 0.0;
    let mut cross = 0.0;
    state.grid.for_each_mode(|i, xi| {
        let w = phi_weight(j, xi);
        if w > 0.0 {
            let w2 = w * w;
            let m: f64 = state.fields().iter().map(|f| f.data[i].norm_sqr()).sum();
            base += w2 * m;
            for k in 0..3 {
                let grad_a = Complex64::new(0.0, xi[k]) * state.a.data[i];
                cross += w2 * (grad_a * state.u.0[k].data[i].conj()).re;
            }
        }
    });
    let vol = state.grid.volume();
    vol * (base + 2.0 * delta * eps * cross)
}

/// Starting from 0.1 min(mu, 1), halve delta until the Bernstein bound
/// 2 delta eps 2^{j_hi + 1} <= 1/2 guarantees the equivalence
/// 1/2 ||.||^2 <= V_j^2 <= 3/2 ||.||^2 across the band.
pub fn choose_delta(mu: f64, eps: f64, j_hi: i32) -> f64 {
    let mut delta = 0.1 * mu.min(1.0);
    while 2.0 * delta * eps * exp2_i(j_hi + 1) > 0.5 {
        delta *= 0.5;
    }
    delta
}

/// Rotation-to-pressure window |Omega| eps < 2^j <= beta0 / eps.
pub fn mid_band(p: &Params, beta0: f64) -> Band {
    Band { lo: p.omega().abs() * p.eps(), hi: beta0 / p.eps() }
}

/// Relative defect of the block energy balance over a uniformly sampled
/// trajectory: ||Delta_j(a,u)(T)||^2 - ||...(0)||^2 plus twice the Simpson
/// integral of mu ||grad Delta_j u||^2 + (mu + mu') ||div Delta_j u||^2.
/// Needs an odd number of samples (>= 3).
pub fn block_energy_residual(p: &Params, traj: &[SpectralState], j: i32) -> Result<f64> {
    if traj.len() < 3 || traj.len() % 2 == 0 {
        return Err(CoreError::Quadrature(
            "Simpson rule needs an odd sample count >= 3".into(),
        ));
    }
    let times: Vec<f64> = traj.iter().map(|s| s.time).collect();
    let dt = uniform_dt(&times)?;
    let dissipation: Vec<f64> = traj.iter().map(|s| block_dissipation(p, s, j)).collect();
    let mut integral = 0.0;
    let mut k = 0;
    while k + 2 < traj.len() {
        integral += dt / 3.0 * (dissipation[k] + 4.0 * dissipation[k + 1] + dissipation[k + 2]);
        k += 2;
    }
    let e0 = block_l2_pair(&traj[0], j).powi(2);
    let e1 = block_l2_pair(traj.last().unwrap(), j).powi(2);
    let scale = e0.max(e1).max(1e-300);
    Ok((e1 - e0 + 2.0 * integral).abs() / scale)
}

fn block_dissipation(p: &Params, state: &SpectralState, j: i32) -> f64 {
    let mut grad = 0.0;
    let mut div = 0.0;
    state.grid.for_each_mode(|i, xi| {
        let w = phi_weight(j, xi);
        if w > 0.0 {
            let w2 = w * w;
            let rho2 = xi[0] * xi[0] + xi[1] * xi[1] + xi[2] * xi[2];
            let usq: f64 = (0..3).map(|k| state.u.0[k].data[i].norm_sqr()).sum();
            grad += w2 * rho2 * usq;
            let mut d = Complex64::new(0.0, 0.0);
            for k in 0..3 {
                d += Complex64::new(0.0, xi[k]) * state.u.0[k].data[i];
            }
            div += w2 * d.norm_sqr();
        }
    });
    let vol = state.grid.volume();
    vol * (p.mu() * grad + (p.mu() + p.mu_prime()) * div)
}

/// Root of the mode quartic nearest 1/eps^2, in units of 1/eps^2.
pub fn slow_root_ratio(p: &Params, xi: [f64; 3]) -> f64 {
    let target = 1.0 / (p.eps() * p.eps());
    let coeffs = quartic_coefficients(p, xi);
    let cc = [
        C::new(coeffs[0], 0.0),
        C::new(coeffs[1], 0.0),
        C::new(coeffs[2], 0.0),
        C::new(coeffs[3], 0.0),
    ];
    let roots = quartic_roots(&cc);
    let slow = roots
        .iter()
        .min_by(|a, b| {
            (*a - target).norm().partial_cmp(&(*b - target).norm()).unwrap()
        })
        .unwrap();
    (slow / target).norm()
}

/// Smallest dyadic beta0 such that every sampled mode with |xi| >= beta0/eps
/// has its slow quartic root within 25% of 1/eps^2; falls back to 8.
pub fn calibrate_beta0(p: &Params) -> f64 {
    let dirs: [[f64; 3]; 5] = [
        [1.0, 0.0, 0.0],
        [0.0, 0.0, 1.0],
        [0.577350, 0.577350, 0.577350],
        [0.707107, 0.0, 0.707107],
        [0.3, 0.4, 0.866025],
    ];
    for m in -3..=3i32 {
        let beta = exp2_i(m);
        let mut ok = true;
        'outer: for k in 0..=5 {
            let rho = beta / p.eps() * exp2_i(k);
            for d in dirs {
                let xi = [rho * d[0], rho * d[1], rho * d[2]];
                if (slow_root_ratio(p, xi) - 1.0).abs() > 0.25 {
                    ok = false;
                    break 'outer;
                }
            }
        }
        if ok {
            return beta;
        }
    }
    8.0
}

/// Constant-forcing closed form per mode: (e^{tG} - I) G^{-1} F with G = -M.
/// Oracle for the Duhamel integrator; fails when G is singular.
pub fn constant_forcing_exact(p: &Params, xi: [f64; 3], f: [C; 4], t: f64) -> Option<[C; 4]> {
    let g = generator(p, xi);
    let e = expm(&g.scale(C::new(t, 0.0)));
    let mut rhs = M4::zero();
    for r in 0..4 {
        rhs.0[r][0] = f[r];
    }
    let ginv_f = solve4(&g, &rhs)?;
    let em1 = e.sub(&M4::identity());
    let col = em1.mul(&ginv_f);
    Some([col.0[0][0], col.0[1][0], col.0[2][0], col.0[3][0]])
}
