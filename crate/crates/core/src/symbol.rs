//! Fourier symbol of the linearized system and its spectral anatomy.
//!
//! Mode convention: the transformed pair v = (a_hat, u_hat) obeys
//! d/dt v = -M(xi) v, with
//!
//!   M(xi) = [ 0            i xi^T / eps                                  ]
//!           [ i xi / eps   mu |xi|^2 I + (mu + mu') xi xi^T + Omega E3   ]
//!
//! where E3 is the matrix of e3 x (rotation about the vertical axis). The
//! characteristic polynomial of +M is the quartic produced by
//! `quartic_coefficients`; that expansion hard-wires the bulk normalization
//! 2 mu + mu' = 1, so `Params` only admits that line or the inviscid corner
//! mu = mu' = 0. In the inviscid case -M is Omega A(xi/(Omega eps)) for a
//! fixed skew-Hermitian A whose spectrum is {+-i lambda+, +-i lambda-} with
//! lambda+- = (|xi + e3| +- |xi - e3|)/2. lambda- carries the sign of xi3.

use serde::Serialize;

use crate::error::{CoreError, Result};
use crate::smallmat::{char_poly, hermitian_eigen, quartic_roots, Sym3, C, M4};

/// Bulk parameters. Invariant: 2 mu + mu' = 1 exactly, or mu = mu' = 0.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct Params {
    mu: f64,
    mu_prime: f64,
    omega: f64,
    eps: f64,
    gamma: f64,
}

impl Params {
    pub fn new(mu: f64, mu_prime: f64, omega: f64, eps: f64, gamma: f64) -> Result<Params> {
        if !(eps > 0.0) || !eps.is_finite() {
            return Err(CoreError::Config(format!("eps must be positive, got {eps}")));
        }
        if !(gamma >= 1.0) {
            return Err(CoreError::Config(format!("gamma must be >= 1, got {gamma}")));
        }
        if !omega.is_finite() {
            return Err(CoreError::Config("omega must be finite".into()));
        }
        if mu < 0.0 || mu + mu_prime < 0.0 {
            return Err(CoreError::Config(
                "need mu >= 0 and mu + mu' >= 0 for a dissipative bulk".into(),
            ));
        }
        let inviscid = mu == 0.0 && mu_prime == 0.0;
        let nu = 2.0 * mu + mu_prime;
        if !inviscid && (nu - 1.0).abs() > 1e-12 {
            return Err(CoreError::Config(format!(
                "bulk viscosity 2 mu + mu' must equal 1 (rescaled units), got {nu}"
            )));
        }
        Ok(Params { mu, mu_prime, omega, eps, gamma })
    }

    /// Viscous line: mu' chosen so 2 mu + mu' = 1. Needs 0 < mu <= 1.
    pub fn viscous(mu: f64, omega: f64, eps: f64, gamma: f64) -> Result<Params> {
        if !(mu > 0.0) {
            return Err(CoreError::Config(format!("viscous mu must be positive, got {mu}")));
        }
        Params::new(mu, 1.0 - 2.0 * mu, omega, eps, gamma)
    }

    pub fn inviscid(omega: f64, eps: f64, gamma: f64) -> Result<Params> {
        Params::new(0.0, 0.0, omega, eps, gamma)
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }
    pub fn mu_prime(&self) -> f64 {
        self.mu_prime
    }
    pub fn omega(&self) -> f64 {
        self.omega
    }
    pub fn eps(&self) -> f64 {
        self.eps
    }
    pub fn gamma(&self) -> f64 {
        self.gamma
    }
    pub fn nu(&self) -> f64 {
        2.0 * self.mu + self.mu_prime
    }
    pub fn is_inviscid(&self) -> bool {
        self.mu == 0.0 && self.mu_prime == 0.0
    }
}

/// Frequency branch of the rotation-corrected wave phase.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Branch {
    Plus,
    Minus,
}

impl Branch {
    pub fn sign(&self) -> f64 {
        match self {
            Branch::Plus => 1.0,
            Branch::Minus => -1.0,
        }
    }
}

fn norm3(xi: [f64; 3]) -> f64 {
    (xi[0] * xi[0] + xi[1] * xi[1] + xi[2] * xi[2]).sqrt()
}

/// (|xi + e3|, |xi - e3|).
pub fn eta_pm(xi: [f64; 3]) -> (f64, f64) {
    let h2 = xi[0] * xi[0] + xi[1] * xi[1];
    let p = (h2 + (xi[2] + 1.0) * (xi[2] + 1.0)).sqrt();
    let m = (h2 + (xi[2] - 1.0) * (xi[2] - 1.0)).sqrt();
    (p, m)
}

/// (lambda+, lambda-) = ((eta+ + eta-)/2, (eta+ - eta-)/2). lambda- is signed.
pub fn lambda_pm(xi: [f64; 3]) -> (f64, f64) {
    let (ep, em) = eta_pm(xi);
    (0.5 * (ep + em), 0.5 * (ep - em))
}

pub fn lambda(branch: Branch, xi: [f64; 3]) -> f64 {
    let (p, m) = lambda_pm(xi);
    match branch {
        Branch::Plus => p,
        Branch::Minus => m,
    }
}

/// The fixed skew-Hermitian symbol at Omega = eps = 1.
pub fn normalized_inviscid_symbol(xi: [f64; 3]) -> M4 {
    let i = C::new(0.0, 1.0);
    let mut a = M4::zero();
    for k in 0..3 {
        a.0[0][k + 1] = -i * xi[k];
        a.0[k + 1][0] = -i * xi[k];
    }
    a.0[1][2] = C::new(1.0, 0.0);
    a.0[2][1] = C::new(-1.0, 0.0);
    a
}

/// M(xi): d/dt (a_hat, u_hat) = -M (a_hat, u_hat).
pub fn symbol_matrix(p: &Params, xi: [f64; 3]) -> M4 {
    let i = C::new(0.0, 1.0);
    let rho2 = xi[0] * xi[0] + xi[1] * xi[1] + xi[2] * xi[2];
    let mut m = M4::zero();
    for k in 0..3 {
        m.0[0][k + 1] = i * xi[k] / p.eps;
        m.0[k + 1][0] = i * xi[k] / p.eps;
    }
    for r in 0..3 {
        m.0[r + 1][r + 1] += C::new(p.mu * rho2, 0.0);
        for c in 0..3 {
            m.0[r + 1][c + 1] += C::new((p.mu + p.mu_prime) * xi[r] * xi[c], 0.0);
        }
    }
    m.0[1][2] += C::new(-p.omega, 0.0);
    m.0[2][1] += C::new(p.omega, 0.0);
    m
}

/// -M(xi), the generator the propagator exponentiates.
pub fn generator(p: &Params, xi: [f64; 3]) -> M4 {
    symbol_matrix(p, xi).scale(C::new(-1.0, 0.0))
}

/// Monic quartic [c0, c1, c2, c3] equal to det(lambda I - M(xi)).
pub fn quartic_coefficients(p: &Params, xi: [f64; 3]) -> [f64; 4] {
    let mu = p.mu;
    let mp = p.mu_prime;
    let om2 = p.omega * p.omega;
    let e2 = p.eps * p.eps;
    let rho2 = xi[0] * xi[0] + xi[1] * xi[1] + xi[2] * xi[2];
    let rho4 = rho2 * rho2;
    let rho6 = rho4 * rho2;
    let xi3sq = xi[2] * xi[2];
    let c3 = -(4.0 * mu + mp) * rho2;
    let c2 = rho2 / e2 + mu * (5.0 * mu + 2.0 * mp) * rho4 + om2;
    let c1 = -(2.0 * mu * rho4 / e2 + mu * mu * rho6 + om2 * mu * rho2 + om2 * (mu + mp) * xi3sq);
    let c0 = mu * mu * rho6 / e2 + om2 * xi3sq / e2;
    [c0, c1, c2, c3]
}

/// Eigenvalues of M(xi) as roots of its characteristic polynomial.
pub fn symbol_eigenvalues(p: &Params, xi: [f64; 3]) -> [C; 4] {
    quartic_roots(&char_poly(&symbol_matrix(p, xi)))
}

/// Gap below which two phase speeds count as one.
pub const DEGENERACY_GAP: f64 = 1e-8;

/// Spectral data of the normalized inviscid symbol at one frequency.
#[derive(Clone, Debug)]
pub struct InviscidEigen {
    /// Frequencies mu_k ascending; the symbol's eigenvalues are i mu_k.
    pub frequencies: [f64; 4],
    /// Unitary eigenvector columns matching `frequencies`.
    pub vectors: M4,
    /// Some eigenspaces merged (vertical axis directions).
    pub degenerate: bool,
}

/// Diagonalize A(xi) through the Hermitian form -iA.
pub fn inviscid_eigensystem(xi: [f64; 3]) -> InviscidEigen {
    let a = normalized_inviscid_symbol(xi);
    let h = a.scale(C::new(0.0, -1.0));
    let (frequencies, vectors) = hermitian_eigen(&h);
    let mut degenerate = false;
    for k in 1..4 {
        if frequencies[k] - frequencies[k - 1] < DEGENERACY_GAP {
            degenerate = true;
        }
    }
    InviscidEigen { frequencies, vectors, degenerate }
}

fn eta_hessian(sign: f64, xi: [f64; 3]) -> Result<Sym3> {
    let v = [xi[0], xi[1], xi[2] + sign];
    let eta = norm3(v);
    if eta < 1e-12 {
        return Err(CoreError::SingularPoint(xi[0], xi[1], xi[2]));
    }
    let inv = 1.0 / eta;
    let inv3 = inv * inv * inv;
    let mut h = [[0.0f64; 3]; 3];
    for r in 0..3 {
        for c in 0..3 {
            h[r][c] = -inv3 * v[r] * v[c];
        }
        h[r][r] += inv;
    }
    Ok(Sym3(h))
}

/// Hessian of lambda+-; fails at the two singular frequencies -+e3.
pub fn lambda_hessian(branch: Branch, xi: [f64; 3]) -> Result<Sym3> {
    let hp = eta_hessian(1.0, xi)?;
    let hm = eta_hessian(-1.0, xi)?;
    let s = branch.sign();
    let mut out = [[0.0f64; 3]; 3];
    for r in 0..3 {
        for c in 0..3 {
            out[r][c] = 0.5 * (hp.0[r][c] + s * hm.0[r][c]);
        }
    }
    Ok(Sym3(out))
}

/// det of the lambda+ Hessian: |xi_h|^2 (eta+ + eta-) / (2 eta+^4 eta-^4).
pub fn lambda_plus_hessian_det(xi: [f64; 3]) -> f64 {
    let (ep, em) = eta_pm(xi);
    let h2 = xi[0] * xi[0] + xi[1] * xi[1];
    h2 * (ep + em) / (2.0 * ep.powi(4) * em.powi(4))
}

/// det of the lambda- Hessian: 2 |xi_h|^2 xi3 / (eta+^4 eta-^4 (eta+ + eta-)).
/// Sign pinned by finite differences; it tracks the sign of xi3.
pub fn lambda_minus_hessian_det(xi: [f64; 3]) -> f64 {
    let (ep, em) = eta_pm(xi);
    let h2 = xi[0] * xi[0] + xi[1] * xi[1];
    2.0 * h2 * xi[2] / (ep.powi(4) * em.powi(4) * (ep + em))
}

/// Frequency regime the phase expansions target.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Regime {
    Low,
    High,
}

/// Difference between lambda+- and its leading model in the given regime:
/// high: lambda+ - |xi| and lambda- - xi3/|xi|;
/// low:  lambda+ - 1 - |xi_h|^2/2 and lambda- - xi3 + xi3 |xi_h|^2 / 2.
/// Diagnostic domains: high wants |xi| >= 4, low wants |xi| <= 1/4.
pub fn phase_remainder(branch: Branch, regime: Regime, xi: [f64; 3]) -> Result<f64> {
    let rho = norm3(xi);
    match regime {
        Regime::High if rho < 4.0 => {
            return Err(CoreError::Config(format!(
                "high-regime remainder needs |xi| >= 4, got {rho}"
            )))
        }
        Regime::Low if rho > 0.25 => {
            return Err(CoreError::Config(format!(
                "low-regime remainder needs |xi| <= 1/4, got {rho}"
            )))
        }
        _ => {}
    }
    let lam = lambda(branch, xi);
    let h2 = xi[0] * xi[0] + xi[1] * xi[1];
    Ok(match (branch, regime) {
        (Branch::Plus, Regime::High) => lam - rho,
        (Branch::Minus, Regime::High) => lam - xi[2] / rho,
        (Branch::Plus, Regime::Low) => lam - 1.0 - 0.5 * h2,
        (Branch::Minus, Regime::Low) => lam - xi[2] + 0.5 * xi[2] * h2,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::prelude::*;

    fn random_xi(rng: &mut impl Rng, scale: f64) -> [f64; 3] {
        [
            rng.gen_range(-scale..scale),
            rng.gen_range(-scale..scale),
            rng.gen_range(-scale..scale),
        ]
    }

    #[test]
    fn params_guard_the_bulk_normalization() {
        assert!(Params::viscous(0.25, 1.0, 0.1, 2.0).is_ok());
        let p = Params::viscous(0.25, 1.0, 0.1, 2.0).unwrap();
        assert_relative_eq!(p.mu_prime(), 0.5);
        assert_relative_eq!(p.nu(), 1.0);
        assert!(Params::new(0.3, 0.3, 1.0, 0.1, 2.0).is_err());
        assert!(Params::inviscid(1.0, 0.1, 2.0).unwrap().is_inviscid());
        assert!(Params::new(0.0, 0.0, 1.0, -0.1, 2.0).is_err());
        assert!(Params::new(0.5, 0.0, 1.0, 0.1, 0.5).is_err());
        assert!(Params::viscous(0.0, 1.0, 0.1, 2.0).is_err());
    }

    #[test]
    fn lambda_identities() {
        let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(2);
        for _ in 0..1000 {
            let xi = random_xi(&mut rng, 5.0);
            let (lp, lm) = lambda_pm(xi);
            let rho2 = xi[0] * xi[0] + xi[1] * xi[1] + xi[2] * xi[2];
            assert_relative_eq!(lp * lm, xi[2], epsilon = 1e-12, max_relative = 1e-12);
            assert_relative_eq!(lp * lp + lm * lm, rho2 + 1.0, max_relative = 1e-12);
            assert!(lp >= lm.abs());
            assert!(lm.signum() * xi[2] >= 0.0 || xi[2] == 0.0);
        }
    }

    #[test]
    fn quartic_equals_characteristic_polynomial() {
        let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(7);
        for trial in 0..200 {
            let p = if trial % 2 == 0 {
                Params::viscous(rng.gen_range(0.05..0.5), rng.gen_range(-4.0..4.0), rng.gen_range(0.05..2.0), 2.0)
                    .unwrap()
            } else {
                Params::inviscid(rng.gen_range(-4.0..4.0), rng.gen_range(0.05..2.0), 2.0).unwrap()
            };
            let xi = random_xi(&mut rng, 3.0);
            let want = quartic_coefficients(&p, xi);
            let got = char_poly(&symbol_matrix(&p, xi));
            for k in 0..4 {
                let scale = 1.0 + want[k].abs();
                assert!(
                    (got[k] - C::new(want[k], 0.0)).norm() / scale < 1e-10,
                    "coefficient {k}: {} vs {}",
                    got[k],
                    want[k]
                );
            }
        }
    }

    #[test]
    fn zero_rotation_quartic_factorizes() {
        // Without rotation the quartic splits into the double shear root
        // mu |xi|^2 and the acoustic quadratic l^2 - |xi|^2 l + |xi|^2/eps^2.
        let p = Params::viscous(0.3, 0.0, 0.5, 2.0).unwrap();
        let xi = [1.2, -0.7, 0.4];
        let rho2 = xi[0] * xi[0] + xi[1] * xi[1] + xi[2] * xi[2];
        let roots = symbol_eigenvalues(&p, xi);
        let shear = C::new(p.mu() * rho2, 0.0);
        let disc = C::new(rho2 * rho2 - 4.0 * rho2 / (p.eps() * p.eps()), 0.0).sqrt();
        let ac1 = (C::new(rho2, 0.0) + disc) * 0.5;
        let ac2 = (C::new(rho2, 0.0) - disc) * 0.5;
        // The shear root is double; root-finding accuracy there is only
        // sqrt(machine epsilon).
        for want in [shear, shear, ac1, ac2] {
            let best = roots.iter().map(|z| (z - want).norm()).fold(f64::MAX, f64::min);
            assert!(best < 1e-6, "missing root {want}, best distance {best}");
        }
    }

    #[test]
    fn inviscid_generator_is_scaled_normalized_symbol() {
        let p = Params::inviscid(3.0, 0.25, 2.0).unwrap();
        let xi = [0.9, -1.1, 0.3];
        let scaled = [
            xi[0] / (p.omega() * p.eps()),
            xi[1] / (p.omega() * p.eps()),
            xi[2] / (p.omega() * p.eps()),
        ];
        let want = normalized_inviscid_symbol(scaled).scale(C::new(p.omega(), 0.0));
        assert!(generator(&p, xi).distance(&want) < 1e-12);
    }

    #[test]
    fn inviscid_spectrum_is_pm_lambda() {
        let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(19);
        for _ in 0..300 {
            let xi = random_xi(&mut rng, 4.0);
            let (lp, lm) = lambda_pm(xi);
            let eig = inviscid_eigensystem(xi);
            let mut want = [-lp, -lm.abs(), lm.abs(), lp];
            want.sort_by(|a, b| a.partial_cmp(b).unwrap());
            for k in 0..4 {
                assert!(
                    (eig.frequencies[k] - want[k]).abs() < 1e-10,
                    "frequency {k}: {} vs {}",
                    eig.frequencies[k],
                    want[k]
                );
            }
            // Same multiset through the quartic route on M.
            let p = Params::inviscid(1.0, 1.0, 2.0).unwrap();
            let roots = symbol_eigenvalues(&p, xi);
            for f in eig.frequencies {
                let target = C::new(0.0, f);
                let best = roots.iter().map(|z| (z - target).norm()).fold(f64::MAX, f64::min);
                assert!(best < 1e-9);
            }
        }
    }

    #[test]
    fn degeneracy_flags_on_the_axis() {
        assert!(inviscid_eigensystem([0.0, 0.0, 1.0]).degenerate);
        assert!(inviscid_eigensystem([0.0, 0.0, -1.0]).degenerate);
        assert!(inviscid_eigensystem([0.5, 0.0, 0.0]).degenerate, "lambda- = 0 is double");
        assert!(!inviscid_eigensystem([1.0, 0.5, 0.7]).degenerate);
    }

    fn fd_hessian(branch: Branch, xi: [f64; 3], h: f64) -> Sym3 {
        let f = |x: [f64; 3]| lambda(branch, x);
        let mut out = [[0.0f64; 3]; 3];
        for r in 0..3 {
            for c in 0..3 {
                let mut xpp = xi;
                let mut xpm = xi;
                let mut xmp = xi;
                let mut xmm = xi;
                xpp[r] += h;
                xpp[c] += h;
                xpm[r] += h;
                xpm[c] -= h;
                xmp[r] -= h;
                xmp[c] += h;
                xmm[r] -= h;
                xmm[c] -= h;
                out[r][c] = (f(xpp) - f(xpm) - f(xmp) + f(xmm)) / (4.0 * h * h);
            }
        }
        Sym3(out)
    }

    #[test]
    fn hessian_matches_finite_differences() {
        let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(23);
        for _ in 0..40 {
            let mut xi = random_xi(&mut rng, 2.0);
            // Step away from the singular verticals.
            xi[0] += 0.3 * xi[0].signum() + 0.3;
            for branch in [Branch::Plus, Branch::Minus] {
                let exact = lambda_hessian(branch, xi).unwrap();
                let fd = fd_hessian(branch, xi, 1e-4);
                assert!(
                    exact.distance(&fd) < 1e-5,
                    "Hessian mismatch {} at {xi:?}",
                    exact.distance(&fd)
                );
            }
        }
    }

    #[test]
    fn hessian_determinant_closed_forms() {
        let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(29);
        for _ in 0..200 {
            let xi = random_xi(&mut rng, 2.5);
            if (xi[0] * xi[0] + xi[1] * xi[1]).sqrt() < 1e-3 {
                continue;
            }
            let hp = lambda_hessian(Branch::Plus, xi).unwrap();
            let hm = lambda_hessian(Branch::Minus, xi).unwrap();
            assert_relative_eq!(hp.det(), lambda_plus_hessian_det(xi), epsilon = 1e-12, max_relative = 1e-9);
            assert_relative_eq!(hm.det(), lambda_minus_hessian_det(xi), epsilon = 1e-12, max_relative = 1e-9);
        }
        // Frozen value at (1, 0, 0): sqrt(2)/16.
        assert_relative_eq!(
            lambda_plus_hessian_det([1.0, 0.0, 0.0]),
            2.0f64.sqrt() / 16.0,
            max_relative = 1e-14
        );
    }

    #[test]
    fn hessian_special_slices() {
        // On the vertical axis with |xi3| < 1 both Hessians are
        // (1/(2|xi3+1|) +- 1/(2|xi3-1|)) diag(1, 1, 0).
        let xi3 = 0.4;
        let cp = 0.5 * (1.0 / (xi3 + 1.0) + 1.0 / (1.0 - xi3));
        let cm = 0.5 * (1.0 / (xi3 + 1.0) - 1.0 / (1.0 - xi3));
        let hp = lambda_hessian(Branch::Plus, [0.0, 0.0, xi3]).unwrap();
        let hm = lambda_hessian(Branch::Minus, [0.0, 0.0, xi3]).unwrap();
        let want_p = Sym3([[cp, 0.0, 0.0], [0.0, cp, 0.0], [0.0, 0.0, 0.0]]);
        let want_m = Sym3([[cm, 0.0, 0.0], [0.0, cm, 0.0], [0.0, 0.0, 0.0]]);
        assert!(hp.distance(&want_p) < 1e-13);
        assert!(hm.distance(&want_m) < 1e-13);
        assert_eq!(hp.rank(1e-10), 2);
        // In the horizontal plane the minus Hessian couples only (h, xi3).
        let xi = [0.8f64, -0.5, 0.0];
        let f = (xi[0] * xi[0] + xi[1] * xi[1] + 1.0).powf(-1.5);
        let want = Sym3([
            [0.0, 0.0, -f * xi[0]],
            [0.0, 0.0, -f * xi[1]],
            [-f * xi[0], -f * xi[1], 0.0],
        ]);
        let hm0 = lambda_hessian(Branch::Minus, xi).unwrap();
        assert!(hm0.distance(&want) < 1e-13, "distance {}", hm0.distance(&want));
    }

    #[test]
    fn hessian_singular_points_error() {
        // Both branches blow up at both poles: each eta factor degenerates at
        // one of them and both enter each lambda.
        for branch in [Branch::Plus, Branch::Minus] {
            assert!(lambda_hessian(branch, [0.0, 0.0, 1.0]).is_err());
            assert!(lambda_hessian(branch, [0.0, 0.0, -1.0]).is_err());
            assert!(lambda_hessian(branch, [0.0, 0.0, 0.99]).is_ok());
        }
    }

    #[test]
    fn high_frequency_remainders_decay() {
        // Along a fixed direction lambda+ - |xi| falls off like
        // (1 - (xi3/|xi|)^2)/(2|xi|): fit the log-log slope over
        // |xi| in [2^4, 2^10] and expect -1 within 0.1.
        let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(31);
        for _ in 0..10 {
            let dir = loop {
                let v = random_xi(&mut rng, 1.0);
                let n = norm3(v);
                if n > 0.3 && v[2].abs() / n < 0.9 {
                    break [v[0] / n, v[1] / n, v[2] / n];
                }
            };
            let mut pts = Vec::new();
            for k in 4..=10 {
                let rho = (2.0f64).powi(k);
                let xi = [rho * dir[0], rho * dir[1], rho * dir[2]];
                let rp = phase_remainder(Branch::Plus, Regime::High, xi).unwrap();
                assert!(rp > 0.0);
                pts.push((rho.ln(), rp.ln()));
                let rm = phase_remainder(Branch::Minus, Regime::High, xi).unwrap();
                assert!(rm.abs() < 1.0 / (rho * rho));
            }
            let n = pts.len() as f64;
            let sx: f64 = pts.iter().map(|p| p.0).sum();
            let sy: f64 = pts.iter().map(|p| p.1).sum();
            let sxx: f64 = pts.iter().map(|p| p.0 * p.0).sum();
            let sxy: f64 = pts.iter().map(|p| p.0 * p.1).sum();
            let slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
            assert!((slope + 1.0).abs() < 0.1, "decay exponent {slope}");
        }
    }

    #[test]
    fn remainder_regime_guards() {
        assert!(phase_remainder(Branch::Plus, Regime::High, [1.0, 0.0, 0.0]).is_err());
        assert!(phase_remainder(Branch::Plus, Regime::Low, [1.0, 0.0, 0.0]).is_err());
        assert!(phase_remainder(Branch::Plus, Regime::High, [5.0, 0.0, 0.0]).is_ok());
        assert!(phase_remainder(Branch::Plus, Regime::Low, [0.1, 0.0, 0.0]).is_ok());
    }

    #[test]
    fn low_frequency_remainders_are_cubic_or_better() {
        // Exactly zero on the axis for the minus branch: lambda- there is
        // xi3 itself.
        for xi3 in [-0.25, -0.1, 0.0, 0.05, 0.2] {
            let r = phase_remainder(Branch::Minus, Regime::Low, [0.0, 0.0, xi3]).unwrap();
            assert!(r.abs() < 1e-15, "axis remainder {r} at xi3 = {xi3}");
        }
        let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(37);
        for _ in 0..200 {
            let xi = random_xi(&mut rng, 0.1);
            let rho = norm3(xi);
            if rho < 1e-4 {
                continue;
            }
            let rp = phase_remainder(Branch::Plus, Regime::Low, xi).unwrap();
            assert!(rp.abs() <= rho.powi(4) + 1e-15, "plus remainder {rp} at rho {rho}");
            let rm = phase_remainder(Branch::Minus, Regime::Low, xi).unwrap();
            assert!(rm.abs() <= 2.0 * rho.powi(3), "minus remainder {rm} at rho {rho}");
        }
    }
}
