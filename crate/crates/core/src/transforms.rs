//! Spectral analysis of the doubly infinite three-term operator coming from
//! the second-order q-difference equation: boundary-adapted solutions, the
//! connection c-function, Green kernel, the transform diagonalising the
//! operator, and on top of it the very-well-poised spherical function with
//! its difference operator and the inversion formula of the spherical
//! transform.

use crate::linalg::gauss_legendre;
use crate::measures::{nu_measure, nu_measure_c, nur_measure, SpectralMeasure};
use crate::num::C64;
use crate::qseries::{in_q_lattice, phi21_ac, poch_inf, theta_pair, vwp};
use crate::{Error, Result};

/// Branch of the inverse of `mu(y) = (y + 1/y)/2` inside the closed unit
/// disk; on the cut `[-1,1]` the representative with non-negative imaginary
/// part is taken.
pub fn mu_inv_in_disk(x: C64) -> C64 {
    // The two roots of y^2 - 2xy + 1 multiply to 1. Build the LARGE root by
    // the sign choice that adds magnitudes (no cancellation) and invert, so
    // the small root stays accurate even for |x| ~ 1e12.
    let s = (x * x - C64::one()).sqrt();
    let big = if x.re * s.re + x.im * s.im >= 0.0 { x + s } else { x - s };
    let y = big.inv();
    if y.abs() > 1.0 - 1e-12 && y.im < 0.0 {
        // on the cut: take the representative with Im y >= 0
        y.conj()
    } else {
        y
    }
}

/// Parameters of the q-hypergeometric difference operator, normalised so
/// that `case (2)` has its band index at zero.
#[derive(Clone, Copy, Debug)]
pub struct HypDiffParams {
    pub c: f64,
    pub d: C64,
    pub z: C64,
    pub q: f64,
    pub case: u8,
}

impl HypDiffParams {
    /// Validates the symmetrisability gate: `dz` real, `0 < c <= q^2`, the
    /// pole lattice avoided, and one of
    /// (1) `conj(z) c = d^2 z`, (2) `z > 0`, (3) `z < 0` with `c/d^2 > 0`;
    /// band positivity is verified directly on a window.
    pub fn new(c: f64, d: C64, z: C64, q: f64) -> Result<HypDiffParams> {
        if !(q > 0.0 && q < 1.0) {
            return Err(Error::Invalid("base q must lie in (0,1)".into()));
        }
        if !(c > 0.0 && c <= q * q + 1e-14) {
            return Err(Error::Guard(format!(
                "essential self-adjointness needs 0 < c <= q^2, got c={c}"
            )));
        }
        let dz = d * z;
        if dz.im.abs() > 1e-10 * dz.abs() {
            return Err(Error::Guard("dz must be real".into()));
        }
        let case = if z.im.abs() > 1e-12 * z.abs() {
            let lhs = z.conj().scale(c);
            let rhs = d * d * z;
            if (lhs - rhs).abs() > 1e-10 * rhs.abs() {
                return Err(Error::Guard(
                    "complex z requires conj(z) c = d^2 z".into(),
                ));
            }
            1u8
        } else if z.re > 0.0 {
            2
        } else {
            3
        };
        let cdd = C64::real(c) / (d * d);
        if case == 3 && !(cdd.re > 0.0 && cdd.im.abs() < 1e-10 * cdd.re) {
            return Err(Error::Guard("case (3) needs c/d^2 > 0".into()));
        }
        // lattice guards on z and c/(d^2 z) (the lattice is positive, so
        // negative values pass automatically)
        if in_q_lattice(z.to_c64(), q).is_some() {
            return Err(Error::Guard("z on the q-lattice".into()));
        }
        let w = C64::real(c) / (d * d * z);
        if in_q_lattice(w, q).is_some() {
            return Err(Error::Guard("c/(d^2 z) on the q-lattice".into()));
        }
        let mut p = HypDiffParams { c, d, z, q, case };
        if case == 2 {
            // shift the band index so 1 < z < 1/q
            let k0 = (-(z.re.ln()) / q.ln()).floor() as i32;
            p.z = C64::real(z.re * q.powi(k0));
            if !(p.z.re > 1.0 && p.z.re < 1.0 / q) {
                p.z = C64::real(z.re * q.powi(k0 + 1));
            }
        }
        // the radicands must be positive across the working window
        for k in -80..=80 {
            if let Err(e) = p.l_coeffs(k) {
                return Err(Error::Guard(format!("band positivity fails at k={k}: {e}")));
            }
        }
        Ok(p)
    }

    /// Tridiagonal data: `2L e_k = a_k e_{k+1} + b_k e_k + a_{k-1} e_{k-1}`,
    /// `a_k = sqrt((1 - q^{-k}/z)(1 - c q^{-k}/(d^2 z))) > 0`,
    /// `b_k = q^{-k}(c+q)/(dz)`.
    pub fn l_coeffs(&self, k: i64) -> Result<(f64, f64)> {
        let qk = C64::real(self.q.powi(-k as i32));
        let w = (C64::one() - qk / self.z)
            * (C64::one() - qk.scale(self.c) / (self.d * self.d * self.z));
        if w.im.abs() > 1e-9 * w.abs().max(1e-250) || w.re <= 0.0 {
            return Err(Error::Guard(format!("radicand not positive at k={k}: {w}")));
        }
        let b = (qk.scale(self.c + self.q) / (self.d * self.z)).re;
        Ok((w.re.sqrt(), b))
    }

    /// Weight `w(k)` conjugating solutions of the difference equation into
    /// eigenvectors of the symmetric operator; phase convention `psi_0 = 0`.
    pub fn weight_w(&self, k: i64) -> Result<C64> {
        let q = self.q;
        let mut psi = 0.0f64;
        let step = |kk: i64| -> f64 {
            let v = self.d
                * (C64::one() - C64::real(q.powi(-kk as i32)) / self.z.conj());
            v.im.atan2(v.re)
        };
        if k > 0 {
            for kk in 0..k {
                psi += step(kk);
            }
        } else {
            for kk in k..0 {
                psi -= step(kk);
            }
        }
        let dmag = self.d.abs();
        let mag = if k <= 0 {
            // direct form: magnitudes stay tame on this side
            let arg1 = (self.d * self.d * self.z).inv().scale(self.c * q.powi((1 - k) as i32));
            let arg2 = self.z.conj().inv().scale(q.powi((1 - k) as i32));
            let ratio = poch_inf(arg1, q)? / poch_inf(arg2, q)?;
            if ratio.im.abs() > 1e-9 * ratio.abs() || ratio.re <= 0.0 {
                return Err(Error::Domain("weight ratio not positive".into()));
            }
            dmag.powi(k as i32) * ratio.re.sqrt()
        } else {
            // theta-shifted form regular for k -> +infinity
            let d2zc = self.d * self.d * self.z / C64::real(self.c);
            let r0c = self.z.conj() / d2zc;
            if r0c.im.abs() > 1e-9 * r0c.abs() || r0c.re <= 0.0 {
                return Err(Error::Domain("weight growth factor not positive".into()));
            }
            let qq = C64::real(q);
            let qk = C64::real(q.powi(k as i32));
            let s = poch_inf(self.z.conj() * qk, q)?
                * poch_inf(d2zc, q)?
                * poch_inf(qq / d2zc, q)?
                / (poch_inf(d2zc * qk, q)?
                    * poch_inf(self.z.conj(), q)?
                    * poch_inf(qq / self.z.conj(), q)?);
            if s.im.abs() > 1e-8 * s.abs() || s.re <= 0.0 {
                return Err(Error::Domain("weight theta ratio not positive".into()));
            }
            dmag.powi(k as i32) * r0c.re.powf(0.5 * k as f64) * s.re.sqrt()
        };
        Ok(C64::new(mag * psi.cos(), mag * psi.sin()))
    }

    /// Solution symmetric in `y <-> 1/y`:
    /// `f_{mu(y)}(k) = 2phi1(dy, d/y; c; q, z q^k)`.
    pub fn sol_f(&self, k: i64, y: C64) -> Result<C64> {
        phi21_ac(
            self.d * y,
            self.d / y,
            C64::real(self.c),
            self.q,
            self.z.scale(self.q.powi(k as i32)),
        )
    }

    /// Asymptotically free solution:
    /// `F_y(k) = (dy)^{-k} 2phi1(dy, q dy/c; q y^2; q, q^{1-k} c/(d^2 z))`.
    pub fn sol_big_f(&self, k: i64, y: C64) -> Result<C64> {
        let dy = self.d * y;
        let pre = dy.powi(-k);
        let arg = (self.d * self.d * self.z)
            .inv()
            .scale(self.c * self.q.powi((1 - k) as i32));
        let v = phi21_ac(dy, dy.scale(self.q / self.c), (y * y).scale(self.q), self.q, arg)?;
        Ok(pre * v)
    }

    /// Connection coefficient
    /// `c(y) = (c/(dy), d/y, dzy, q/(dzy);q)_inf / ((1/y^2, c, z, q/z;q)_inf)`.
    pub fn cfun(&self, y: C64) -> Result<C64> {
        let q = self.q;
        let dz = self.d * self.z;
        let num = poch_inf(C64::real(self.c) / (self.d * y), q)?
            * poch_inf(self.d / y, q)?
            * poch_inf(dz * y, q)?
            * poch_inf(C64::real(q) / (dz * y), q)?;
        let den = poch_inf((y * y).inv(), q)?
            * poch_inf(C64::real(self.c), q)?
            * poch_inf(self.z, q)?
            * poch_inf(C64::real(q) / self.z, q)?;
        Ok(num / den)
    }

    /// Discrete Wronskian `[u, v](k) = (a_k/2)(u(k+1)v(k) - v(k+1)u(k))` of
    /// the operator `L` (with the 1/2 normalisation).
    pub fn wronskian(
        &self,
        u: &dyn Fn(i64) -> Result<C64>,
        v: &dyn Fn(i64) -> Result<C64>,
        k: i64,
    ) -> Result<C64> {
        let (a, _) = self.l_coeffs(k)?;
        Ok((u(k + 1)? * v(k)? - v(k + 1)? * u(k)?).scale(0.5 * a))
    }

    /// Green kernel `G_x(k,l)` of the resolvent `(x - L)^{-1}`, for `x` off
    /// the real axis.
    pub fn green(&self, k: i64, l: i64, x: C64) -> Result<C64> {
        if x.im.abs() <= 1e-14 * x.abs().max(1.0) {
            return Err(Error::Domain("green kernel needs Im x != 0".into()));
        }
        let y = mu_inv_in_disk(x);
        let phi_big = |kk: i64| -> Result<C64> { Ok(self.weight_w(kk)? * self.sol_big_f(kk, y)?) };
        let ybar = mu_inv_in_disk(x.conj());
        let phi_small =
            |kk: i64| -> Result<C64> { Ok((self.weight_w(kk)? * self.sol_f(kk, ybar)?).conj()) };
        let w = self.wronskian(&phi_big, &phi_small, 0)?;
        if w.abs() < 1e-12 {
            return Err(Error::Guard("wronskian vanishes: spurious eigenvalue".into()));
        }
        let v = if k <= l {
            phi_big(k)? * phi_small(l)?
        } else {
            phi_big(l)? * phi_small(k)?
        };
        Ok(v / w)
    }

    /// The transform `(F u)(x) = sum_k u(k) conj(w(k) f_x(k))` for finitely
    /// supported `u`; `x` is passed through its `y`-coordinate.
    pub fn transform(&self, u: &[(i64, C64)], y: C64) -> Result<C64> {
        let mut acc = C64::zero();
        for &(k, uk) in u {
            acc = acc + uk * (self.weight_w(k)? * self.sol_f(k, y)?).conj();
        }
        Ok(acc)
    }

    /// Measure of the spectral theorem: `d nu(x; c/d, d; q/(dz) | q)`.
    pub fn spectral_measure(&self) -> Result<SpectralMeasure> {
        let dz = (self.d * self.z).re;
        nu_measure_c(C64::real(self.c) / self.d, self.d, self.q / dz, self.q)
    }

    /// Both sides of the spectral identity
    /// `<L e_i, e_j> = |(c, z, q/z;q)_inf|^2
    ///     int x (F e_i)(x) conj((F e_j)(x)) d nu(x; c/d, d; q/(dz))`.
    pub fn spectral_identity(&self, i: i64, j: i64) -> Result<(C64, C64)> {
        let lhs = if i == j {
            C64::real(0.5 * self.l_coeffs(i)?.1)
        } else if (i - j).abs() == 1 {
            C64::real(0.5 * self.l_coeffs(i.min(j))?.0)
        } else {
            C64::zero()
        };
        let scale = (poch_inf(C64::real(self.c), self.q)?
            * poch_inf(self.z, self.q)?
            * poch_inf(C64::real(self.q) / self.z, self.q)?)
        .norm_sqr();
        let m = self.spectral_measure()?;
        let wi = self.weight_w(i)?;
        let wj = self.weight_w(j)?;
        let integrand = |x: f64, y: C64| -> Result<C64> {
            let fi = (wi * self.sol_f(i, y)?).conj();
            let fj = (wj * self.sol_f(j, y)?).conj();
            Ok((fi * fj.conj()).scale(x))
        };
        let ac_re = crate::measures::integrate_upper_circle(
            &|theta| {
                let y = C64::new(theta.cos(), theta.sin());
                Ok(m.ac_density(theta)? * integrand(theta.cos(), y)?.re)
            },
            1e-11,
        )?;
        let ac_im = crate::measures::integrate_upper_circle(
            &|theta| {
                let y = C64::new(theta.cos(), theta.sin());
                Ok(m.ac_density(theta)? * integrand(theta.cos(), y)?.im)
            },
            1e-11,
        )?;
        let mut rhs = C64::new(ac_re, ac_im);
        // Atoms ascending in |z|. The true term sequence decays to zero much
        // faster than the masses grow, but the computed values bottom out at
        // the f64 cancellation floor and then read garbage. Collect terms up
        // to an evident blowup, truncate the sum at the global minimum of
        // |term| (the floor), and require that minimum to be insignificant.
        let mut atoms: Vec<_> = m.atoms.iter().collect();
        atoms.sort_by(|a, b| a.z.abs().partial_cmp(&b.z.abs()).unwrap());
        let mut terms: Vec<C64> = Vec::new();
        let mut runmax = rhs.abs().max(1e-250);
        for at in atoms {
            let y = C64::real(1.0 / at.z); // representative inside the disk
            let term = integrand(at.location, y)?.scale(at.mass);
            if !term.is_finite() || term.abs() > 1e3 * runmax {
                break;
            }
            runmax = runmax.max(term.abs());
            terms.push(term);
        }
        if !terms.is_empty() {
            let valley = terms
                .iter()
                .enumerate()
                .min_by(|a, b| a.1.abs().partial_cmp(&b.1.abs()).unwrap())
                .map(|(i, _)| i)
                .unwrap();
            for t in &terms[..=valley] {
                rhs = rhs + *t;
            }
            // certificate in final units: the dropped tail is bounded by the
            // valley term, which must be insignificant at the identity scale
            if terms[valley].abs() * scale > 1e-6 * (rhs.abs() * scale).max(1.0) {
                return Err(Error::Convergence(
                    "spectral identity: atom tail not negligible".into(),
                ));
            }
        }
        Ok((lhs, rhs.scale(scale)))
    }
}

// ---------------------------------------------------------------------------
// The very-well-poised spherical function and its difference operator.
// ---------------------------------------------------------------------------

/// Spherical function parametrised by the spectral coordinate `sz`
/// (`sigma = mu(sz)`, `sz = q^{1+2 lambda}`), in the expansion whose
/// very-well-poised series converges for all relevant `x`:
/// `Phi_sigma(mu(x)) = [(q^{3+2L} x^{+-1}/(st);q^2)_inf
///    / ((q^{4+2L}/t^2, q^{2+2L}/s^2, q^2/s^2, q x^{+-1}/(st);q^2)_inf)]
///    8W7(q^{2+2L}/t^2; q(s/t)x^{+-1}, q^{2+2L}, q^{2+2L}, q^{2+2L}/t^2;
///        q^2, q^{-2L}/s^2)`.
pub fn aw_phi(sz: C64, x: C64, s: f64, t: f64, q: f64) -> Result<C64> {
    // At doubly discrete points (spectral atom, x-space atom) the product
    // q^3 w x / (st) lands on the lattice q^{2Z<=0}: the prefactor vanishes
    // exactly against a pole of the series. The function itself is analytic
    // in x there; evaluate by a symmetric limit.
    let w = sz.scale(1.0 / q);
    let collides = |v: C64| -> bool {
        matches!(in_q_lattice(v.to_c64(), q * q), Some(k) if k <= 0)
    };
    let st = s * t;
    if collides(w * x.scale(q.powi(3) / st)) || collides((w / x).scale(q.powi(3) / st)) {
        let eval = |h: f64| -> Result<C64> {
            let a = aw_phi_raw(sz, x.scale(1.0 + h), s, t, q)?;
            let b = aw_phi_raw(sz, x.scale(1.0 - h), s, t, q)?;
            Ok((a + b).scale(0.5))
        };
        let r1 = eval(1e-4)?;
        let r2 = eval(5e-5)?;
        return Ok((r2.scale(4.0) - r1).scale(1.0 / 3.0));
    }
    aw_phi_raw(sz, x, s, t, q)
}

fn aw_phi_raw(sz: C64, x: C64, s: f64, t: f64, q: f64) -> Result<C64> {
    let q2 = q * q;
    let w = sz.scale(1.0 / q); // q^{2 lambda}
    let winv = w.inv();
    let r = C64::real;
    let st = s * t;
    let q2w = w.scale(q2); // q^{2+2 lambda}
    let num =
        poch_inf(w * x.scale(q2 * q / st), q2)? * poch_inf((w / x).scale(q2 * q / st), q2)?;
    let den = poch_inf(q2w.scale(q2 / (t * t)), q2)?
        * poch_inf(q2w.scale(1.0 / (s * s)), q2)?
        * poch_inf(r(q2 / (s * s)), q2)?
        * poch_inf(x.scale(q / st), q2)?
        * poch_inf(x.inv().scale(q / st), q2)?;
    let tail = [
        x.scale(q * s / t),
        x.inv().scale(q * s / t),
        q2w,
        q2w,
        q2w.scale(1.0 / (t * t)),
    ];
    let series = vwp(q2w.scale(1.0 / (t * t)), &tail, q2, winv.scale(1.0 / (s * s)))?;
    Ok(num / den * series)
}

/// The same spherical function in its first very-well-poised form (used for
/// the `lambda <-> -1-lambda` invariance check); takes `w = q^{2 lambda}`.
pub fn phi_lambda_w(w: C64, z: C64, s: f64, t: f64, q: f64) -> Result<C64> {
    let q2 = q * q;
    let r = C64::real;
    let st = s * t;
    let u = w.inv(); // q^{-2 lambda}
    let num = poch_inf(r(q2), q2)?
        * poch_inf(r(q2 / (st * st)), q2)?
        * poch_inf((u / z).scale(q / st), q2)?
        * poch_inf((u * z).scale(q / st), q2)?;
    let den = poch_inf(u, q2)?
        * poch_inf(u.scale(q2 / (st * st)), q2)?
        * poch_inf(z.scale(q / st), q2)?
        * poch_inf(z.inv().scale(q / st), q2)?;
    let tail = [
        u.scale(1.0 / (s * s)),
        u.scale(1.0 / (t * t)),
        u,
        z.scale(q / st),
        z.inv().scale(q / st),
    ];
    let series = vwp(u.scale(1.0 / (st * st)), &tail, q2, w.scale(q2))?;
    Ok(num / den * series)
}

/// Coefficient `psi(z)` of the difference operator.
#[derive(Clone, Copy, Debug)]
pub enum PsiKind {
    /// the spherical operator
    Spherical { s: f64, t: f64 },
    /// the `(i,j)`-type operator (half-integers passed doubled)
    Type { s: f64, t: f64, i2: i64, j2: i64 },
}

impl PsiKind {
    pub fn psi(&self, z: C64, q: f64) -> Result<C64> {
        let one = C64::one();
        let den = (one - z * z) * (one - (z * z).scale(q * q));
        if den.abs() < 1e-12 {
            return Err(Error::Domain("psi pole: z^2 in {1, q^-2}".into()));
        }
        let num = match *self {
            PsiKind::Spherical { s, t } => {
                (one - z.scale(q * s * t))
                    * (one - z.scale(q * s / t))
                    * (one - z.scale(q * t / s))
                    * (one - z.scale(q / (s * t)))
            }
            PsiKind::Type { s, t, i2, j2 } => {
                (one - z.scale(q * t / s))
                    * (one - z.scale(q.powi((1 + i2 - j2) as i32) / (s * t)))
                    * (one - z.scale(q * s * t))
                    * (one - z.scale(q.powi((1 + i2 + j2) as i32) * s / t))
            }
        };
        Ok(num / den)
    }

    /// Constant term of the `(i,j)` normalisation, zero for the spherical
    /// operator.
    pub fn constant(&self, q: f64) -> f64 {
        match *self {
            PsiKind::Spherical { .. } => 0.0,
            PsiKind::Type { i2, .. } => {
                let v = 1.0 - q.powi(i2 as i32 + 1);
                v * v
            }
        }
    }
}

/// Difference operator
/// `(L F)(z) = psi(z)(F(q^2 z) - F(z)) + psi(1/z)(F(q^{-2} z) - F(z))`
/// plus the constant term when the `(i,j)` form requests it.
pub fn aw_diffop(
    f: &dyn Fn(C64) -> Result<C64>,
    z: C64,
    psi: &PsiKind,
    q: f64,
    with_constant: bool,
) -> Result<C64> {
    let q2 = q * q;
    let fz = f(z)?;
    let up = f(z.scale(q2))? - fz;
    let down = f(z.scale(1.0 / q2))? - fz;
    let mut out = psi.psi(z, q)? * up + psi.psi(z.inv(), q)? * down;
    if with_constant {
        out = out + fz.scale(psi.constant(q));
    }
    Ok(out)
}

/// The spherical transform pair at fixed `(s, t, q)`, `s >= t >= 1`.
pub struct SphericalTransform {
    pub s: f64,
    pub t: f64,
    pub q: f64,
    pub forward_measure: SpectralMeasure,
    pub inverse_measure: SpectralMeasure,
    pub c_const: f64,
}

impl SphericalTransform {
    pub fn new(s: f64, t: f64, q: f64) -> Result<SphericalTransform> {
        if !(s >= t && t >= 1.0) {
            return Err(Error::Guard("spherical transform needs s >= t >= 1".into()));
        }
        let q2 = q * q;
        let forward = nu_measure(q * t / s, q * s / t, -q * s * t, q2)?;
        let inverse = nur_measure(
            -1.0 / (q2 * q2 * s * s),
            q,
            q,
            q / (t * t),
            q * s * s,
            q2,
        )?;
        let th = |a: f64| -> Result<f64> { Ok(theta_pair(C64::real(a), q2)?.re) };
        let p5 = (poch_inf(C64::real(q2), q2)?
            * poch_inf(C64::real(q2), q2)?
            * poch_inf(C64::real(q2 / (t * t)), q2)?
            * poch_inf(C64::real(q2 / (t * t)), q2)?
            * poch_inf(C64::real(q2 / (s * s)), q2)?)
        .re;
        let c = 1.0 / (q * s)
            * p5
            * p5
            * th(-q2)?
            * th(-q2)?
            * th(-1.0 / (t * t))?
            * th(-1.0 / (s * s))?;
        Ok(SphericalTransform {
            s,
            t,
            q,
            forward_measure: forward,
            inverse_measure: inverse,
            c_const: c,
        })
    }

    /// Forward transform at the spectral coordinate `sz`, using fixed-node
    /// quadrature with `panels x 32` points on the continuous part.
    pub fn forward(&self, f: &dyn Fn(f64) -> f64, sz: C64, panels: usize) -> Result<C64> {
        let rule = gauss_legendre(32);
        let mut acc = C64::zero();
        let h = std::f64::consts::PI / panels as f64;
        for p in 0..panels {
            let (mid, half) = ((p as f64 + 0.5) * h, 0.5 * h);
            for &(xx, ww) in &rule {
                let theta = mid + half * xx;
                let x = theta.cos();
                if f(x) == 0.0 {
                    continue;
                }
                let phi = aw_phi(sz, C64::new(theta.cos(), theta.sin()), self.s, self.t, self.q)?;
                acc = acc
                    + phi.conj().scale(
                        ww * half * self.forward_measure.ac_density(theta)? * f(x)
                            / (2.0 * std::f64::consts::PI),
                    );
            }
        }
        for at in &self.forward_measure.atoms {
            if f(at.location) == 0.0 {
                continue;
            }
            let phi = aw_phi(sz, C64::real(at.z), self.s, self.t, self.q)?;
            acc = acc + phi.conj().scale(at.mass * f(at.location));
        }
        Ok(acc)
    }

    /// Round trip: forward transform on the spectral nodes of the inversion
    /// measure, then the inversion integral back on x-space; returns the
    /// relative L2 error against the forward measure.
    pub fn roundtrip_l2_error(&self, f: &dyn Fn(f64) -> f64, panels: usize) -> Result<f64> {
        let rule = gauss_legendre(32);
        let h = std::f64::consts::PI / panels as f64;
        struct Node {
            y: C64,
            weight: f64,
        }
        let mut nodes = Vec::new();
        for p in 0..panels {
            let (mid, half) = ((p as f64 + 0.5) * h, 0.5 * h);
            for &(xx, ww) in &rule {
                let chi = mid + half * xx;
                nodes.push(Node {
                    y: C64::new(chi.cos(), chi.sin()),
                    weight: ww * half * self.inverse_measure.ac_density(chi)?
                        / (2.0 * std::f64::consts::PI),
                });
            }
        }
        // inversion atoms ascending in |z|; the masses decay geometrically,
        // so drop the far tail (negligible at the target accuracy, and far
        // spherical-function evaluations would overflow)
        let mut inv_atoms: Vec<_> = self.inverse_measure.atoms.iter().collect();
        inv_atoms.sort_by(|a, b| a.z.abs().partial_cmp(&b.z.abs()).unwrap());
        let max_mass = inv_atoms.iter().map(|a| a.mass.abs()).fold(0.0, f64::max);
        for at in inv_atoms {
            if at.mass.abs() < 1e-13 * max_mass {
                break;
            }
            nodes.push(Node { y: C64::real(at.z), weight: at.mass });
        }
        let ff: Vec<C64> = nodes
            .iter()
            .map(|n| self.forward(f, n.y, panels))
            .collect::<Result<_>>()?;
        let recon = |x: C64| -> Result<C64> {
            let mut acc = C64::zero();
            for (n, v) in nodes.iter().zip(ff.iter()) {
                let phi = aw_phi(n.y, x, self.s, self.t, self.q)?;
                acc = acc + (*v * phi).scale(n.weight);
            }
            Ok(acc.scale(self.c_const))
        };
        let mut num = 0.0;
        let mut den = 0.0;
        for p in 0..panels {
            let (mid, half) = ((p as f64 + 0.5) * h, 0.5 * h);
            for &(xx, ww) in &rule {
                let theta = mid + half * xx;
                let x = theta.cos();
                let w = ww * half * self.forward_measure.ac_density(theta)?
                    / (2.0 * std::f64::consts::PI);
                let r = recon(C64::new(theta.cos(), theta.sin()))?;
                num += w * (r - C64::real(f(x))).norm_sqr();
                den += w * f(x) * f(x);
            }
        }
        for at in &self.forward_measure.atoms {
            if at.mass.abs() * f(at.location).abs() == 0.0 && at.z.abs() > 40.0 {
                continue; // far ladder: nothing to compare
            }
            let r = recon(C64::real(at.z))?;
            num += at.mass.abs() * (r - C64::real(f(at.location))).norm_sqr();
            den += at.mass.abs() * f(at.location) * f(at.location);
        }
        if den <= 0.0 {
            return Err(Error::Invalid("round trip needs a nonzero test function".into()));
        }
        Ok((num / den).sqrt())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measures::mu_c;

    fn case3() -> HypDiffParams {
        HypDiffParams::new(0.2, C64::real(1.3), C64::real(-1.0), 0.5).unwrap()
    }

    fn case1() -> HypDiffParams {
        // c = |d|^2, z = |z| e^{-i arg d}
        let d = C64::new(0.4 * f64::cos(0.3), 0.4 * f64::sin(0.3));
        let z = C64::new(1.3 * f64::cos(-0.3), 1.3 * f64::sin(-0.3));
        HypDiffParams::new(0.16, d, z, 0.5).unwrap()
    }

    fn case2() -> HypDiffParams {
        HypDiffParams::new(0.2, C64::real(0.45), C64::real(1.5), 0.5).unwrap()
    }

    #[test]
    fn case_detection_and_bands() {
        assert_eq!(case1().case, 1);
        assert_eq!(case2().case, 2);
        assert_eq!(case3().case, 3);
        for p in [case1(), case2(), case3()] {
            for k in -30..=30 {
                let (a, b) = p.l_coeffs(k).unwrap();
                assert!(a > 0.0 && b.is_finite(), "case {} k={k}", p.case);
            }
        }
    }

    #[test]
    fn f_symmetric_in_y() {
        let p = case3();
        let y = C64::new(0.6 * f64::cos(0.2), 0.6 * f64::sin(0.2));
        for k in [-3i64, 0, 4] {
            let a = p.sol_f(k, y).unwrap();
            let b = p.sol_f(k, y.inv()).unwrap();
            assert!((a - b).abs() <= 1e-12 * a.abs().max(1e-30), "k={k}");
        }
    }

    /// pointwise residual of the difference equation
    fn diff_eq_residual(
        p: &HypDiffParams,
        sol: &dyn Fn(i64) -> Result<C64>,
        y: C64,
        k: i64,
    ) -> f64 {
        let q = p.q;
        let dz = p.d * p.z;
        let lhs = (y + y.inv()) * sol(k).unwrap();
        let rhs = (p.d - dz.inv().scale(p.c * q.powi(-k as i32))) * sol(k + 1).unwrap()
            + sol(k).unwrap().scale(q.powi(-k as i32) * (p.c + q)) / dz
            + (p.d.inv() - dz.inv().scale(q.powi((1 - k) as i32))) * sol(k - 1).unwrap();
        (lhs - rhs).abs() / lhs.abs().max(1e-10)
    }

    #[test]
    fn solutions_satisfy_difference_equation() {
        for p in [case1(), case2(), case3()] {
            let y = C64::new(0.55 * f64::cos(0.4), 0.55 * f64::sin(0.4));
            for k in [-4i64, 0, 3] {
                let rf = diff_eq_residual(&p, &|kk| p.sol_f(kk, y), y, k);
                assert!(rf <= 1e-10, "case {} f k={k}: {rf}", p.case);
                let rg = diff_eq_residual(&p, &|kk| p.sol_big_f(kk, y), y, k);
                assert!(rg <= 1e-10, "case {} F k={k}: {rg}", p.case);
            }
        }
    }

    #[test]
    fn connection_expansion() {
        // f = c(y) F_y + c(1/y) F_{1/y} on a window
        let p = case3();
        let y = C64::new(0.6 * f64::cos(0.2), 0.6 * f64::sin(0.2));
        let cy = p.cfun(y).unwrap();
        let cyi = p.cfun(y.inv()).unwrap();
        for k in -5i64..=5 {
            let lhs = p.sol_f(k, y).unwrap();
            let rhs = cy * p.sol_big_f(k, y).unwrap() + cyi * p.sol_big_f(k, y.inv()).unwrap();
            assert!(
                (lhs - rhs).abs() <= 1e-9 * lhs.abs().max(1e-20),
                "k={k}: {lhs} vs {rhs}"
            );
        }
    }

    #[test]
    fn weighted_solution_is_eigenvector() {
        // 2 L (w f) = (y + 1/y)(w f) componentwise
        for p in [case1(), case2(), case3()] {
            let y = C64::new(0.7 * f64::cos(0.15), 0.7 * f64::sin(0.15));
            let u = |k: i64| -> C64 { p.weight_w(k).unwrap() * p.sol_f(k, y).unwrap() };
            for k in -6i64..=6 {
                let (ak, bk) = p.l_coeffs(k).unwrap();
                let (akm, _) = p.l_coeffs(k - 1).unwrap();
                let lhs = u(k + 1).scale(ak) + u(k).scale(bk) + u(k - 1).scale(akm);
                let rhs = (y + y.inv()) * u(k);
                assert!(
                    (lhs - rhs).abs() <= 1e-10 * rhs.abs().max(1e-18),
                    "case {} k={k}",
                    p.case
                );
            }
        }
    }

    #[test]
    fn wronskian_limit_value() {
        // [wF_y, conj(wF_{conj(y)^{-1}})] -> (1/y - y)/2 toward -infinity
        let p = case3();
        let y = C64::new(0.6 * f64::cos(0.35), 0.6 * f64::sin(0.35));
        let u = |k: i64| -> Result<C64> { Ok(p.weight_w(k)? * p.sol_big_f(k, y)?) };
        let v = |k: i64| -> Result<C64> {
            Ok((p.weight_w(k)? * p.sol_big_f(k, y.conj().inv())?).conj())
        };
        let w = p.wronskian(&u, &v, -25).unwrap();
        let expect = (y.inv() - y).scale(0.5);
        assert!((w - expect).abs() <= 1e-8 * expect.abs(), "{w} vs {expect}");
    }

    #[test]
    fn green_kernel_properties() {
        let p = case3();
        let x = C64::new(0.4, 0.7);
        let g12 = p.green(1, 3, x).unwrap();
        let g21 = p.green(3, 1, x).unwrap();
        assert!((g12 - g21).abs() <= 1e-12 * g12.abs());
        // resolvent identity: (x - L) G_x(., l) = delta_l on the interior
        let l = 0i64;
        for k in -6i64..=6 {
            let (ak, bk) = p.l_coeffs(k).unwrap();
            let (akm, _) = p.l_coeffs(k - 1).unwrap();
            let lg = p.green(k + 1, l, x).unwrap().scale(0.5 * ak)
                + p.green(k, l, x).unwrap().scale(0.5 * bk)
                + p.green(k - 1, l, x).unwrap().scale(0.5 * akm);
            let v = x * p.green(k, l, x).unwrap() - lg;
            let expect = if k == l { C64::one() } else { C64::zero() };
            assert!((v - expect).abs() <= 1e-8, "k={k}: {v}");
        }
        // decay away from the diagonal
        let g0 = p.green(0, 0, x).unwrap().abs();
        let g8 = p.green(8, 0, x).unwrap().abs();
        let g16 = p.green(16, 0, x).unwrap().abs();
        assert!(g8 < g0 && g16 < g8 * 0.2);
    }

    #[test]
    fn c_function_zeros_outside_disk_are_real() {
        // a sign change of the (rescaled) c-function exists on the real
        // axis, while |c| stays away from zero on a complex rectangle
        let p = case3();
        let mut min_off_axis = f64::INFINITY;
        for i in 0..40 {
            for j in 1..=12 {
                let y = C64::new(1.05 + 0.2 * i as f64, 0.15 * j as f64);
                min_off_axis = min_off_axis.min(p.cfun(y).unwrap().abs());
            }
        }
        let mut sign_change = false;
        let mut yy = 1.05;
        while yy < 9.0 {
            let c1 = p.cfun(C64::real(yy)).unwrap();
            let c2 = p.cfun(C64::real(yy + 0.01)).unwrap();
            if c1.re.signum() != c2.re.signum() {
                sign_change = true;
            }
            yy += 0.01;
        }
        assert!(sign_change, "no zero found on the real axis");
        assert!(min_off_axis > 1e-3, "off-axis minimum {min_off_axis}");
    }

    #[test]
    fn spectral_identity_all_cases() {
        for p in [case1(), case2(), case3()] {
            for i in -3i64..=3 {
                for j in -3i64..=3 {
                    let (lhs, rhs) = p.spectral_identity(i, j).unwrap();
                    assert!(
                        (lhs - rhs).abs() <= 1e-6 * lhs.abs().max(1.0),
                        "case {} i={i} j={j}: {lhs} vs {rhs}",
                        p.case
                    );
                }
            }
        }
    }

    #[test]
    fn aw_phi_lambda_reflection() {
        // invariance under lambda <-> -1-lambda, i.e. w <-> q^{-2}/w; both
        // series converge for 1 < |w| < q^{-2}
        let (s, t, q) = (2.0f64, 1.5f64, 0.5f64);
        let z = C64::new(0.9 * f64::cos(0.7), 0.9 * f64::sin(0.7));
        for &(wr, wi) in &[
            (1.5 * f64::cos(0.3), 1.5 * f64::sin(0.3)),
            (2.0, 0.0),                                   // principal line
            (-1.3, 0.0),                                  // strange line
            (3.2 * f64::cos(-0.2), 3.2 * f64::sin(-0.2)),
        ] {
            let w = C64::new(wr, wi);
            let wref = w.inv().scale(1.0 / (q * q));
            let a = phi_lambda_w(w, z, s, t, q).unwrap();
            let b = phi_lambda_w(wref, z, s, t, q).unwrap();
            assert!((a - b).abs() <= 1e-9 * a.abs(), "w={w}: {a} vs {b}");
        }
    }

    #[test]
    fn aw_phi_matches_phi_lambda_up_to_normalisation() {
        // Phi = phi_lambda * (q^{-2L}, q^{2+2L};q^2)_inf
        //   / ((q^2, q^2, q^{-2L}/s^2, q^{2+2L}/s^2, q^2/t^2;q^2)_inf):
        // the ratio of the two forms must be constant in x.
        let (s, t, q) = (2.0f64, 1.5f64, 0.5f64);
        let w = C64::new(0.4, 0.3);
        let sz = w.scale(q);
        let mut ratios = Vec::new();
        for &xv in &[0.2, 0.55, 0.8] {
            let z = mu_inv_in_disk(C64::real(xv));
            let a = aw_phi(sz, z, s, t, q).unwrap();
            let b = phi_lambda_w(w, z, s, t, q).unwrap();
            ratios.push(a / b);
        }
        for r in &ratios[1..] {
            assert!((*r - ratios[0]).abs() <= 1e-9 * ratios[0].abs());
        }
    }

    #[test]
    fn aw_phi_eigenfunction_residual() {
        // L Phi = (-1 - q^2 + q^{2+2L} + q^{-2L}) Phi on the q^nu grid
        let (s, t, q) = (2.0f64, 1.5f64, 0.5f64);
        let b = 0.3 * (-std::f64::consts::PI / (2.0 * q.ln()));
        let w = C64::new((2.0 * b * q.ln()).cos(), (2.0 * b * q.ln()).sin()).scale(1.0 / q);
        let sz = w.scale(q);
        let eig = C64::real(-1.0 - q * q) + w.scale(q * q) + w.inv();
        let psi = PsiKind::Spherical { s, t };
        let phi = |zz: C64| aw_phi(sz, zz, s, t, q);
        // nu in {-1, 0, 1} sits on the psi poles (z or 1/z in {1, 1/q}),
        // excluded by the operator's own precondition
        for nu in (-6i64..=6).filter(|&n| n.abs() > 1) {
            let z = C64::real(q.powi(nu as i32));
            let lphi = aw_diffop(&phi, z, &psi, q, false).unwrap();
            let target = eig * phi(z).unwrap();
            let resid = (lphi - target).abs() / target.abs().max(1e-18);
            assert!(resid <= 1e-8, "nu={nu}: {resid}");
        }
    }

    #[test]
    fn type_operator_reduces_to_spherical() {
        let (s, t, q) = (2.0f64, 1.5f64, 0.5f64);
        let sph = PsiKind::Spherical { s, t };
        let typ = PsiKind::Type { s, t, i2: 0, j2: 0 };
        for &(re, im) in &[(0.7, 0.2), (-0.4, 0.8), (1.6, -0.1)] {
            let z = C64::new(re, im);
            let a = sph.psi(z, q).unwrap();
            let b = typ.psi(z, q).unwrap();
            assert!((a - b).abs() <= 1e-13 * a.abs());
        }
        assert_eq!(typ.constant(q), (1.0 - q) * (1.0 - q));
        let one = |_: C64| Ok(C64::one());
        let v = aw_diffop(&one, C64::new(0.3, 0.1), &sph, q, false).unwrap();
        assert!(v.abs() <= 1e-13);
        let v2 = aw_diffop(&one, C64::new(0.3, 0.1), &typ, q, true).unwrap();
        assert!((v2 - C64::real(typ.constant(q))).abs() <= 1e-13);
    }

    #[test]
    fn diffop_symmetric_for_analytic_decaying_functions() {
        // int (Lf) g dnu = int f (Lg) dnu. The test functions are entire
        // (polynomial in x times a Gaussian) to allow evaluation at the
        // complex points mu(q^{+-2} z), and decay so the integrals converge
        // along the growing ladder.
        let (s, t, q) = (2.0f64, 1.5f64, 0.5f64);
        let q2 = q * q;
        let m = nu_measure(q * t / s, q * s / t, -q * s * t, q2).unwrap();
        let psi = PsiKind::Spherical { s, t };
        let cexp = |v: C64| -> C64 {
            let r = v.re.exp();
            C64::new(r * v.im.cos(), r * v.im.sin())
        };
        let fpoly = move |z: C64| -> Result<C64> {
            let x = mu_c(z);
            Ok((x * x * x - x.scale(0.5) + C64::real(0.25)) * cexp(-(x * x)))
        };
        let gpoly = move |z: C64| -> Result<C64> {
            let x = mu_c(z);
            Ok((x * x + x.scale(2.0)) * cexp(-(x * x)))
        };
        let lf_g = m
            .integrate(&|x| {
                let z = mu_inv_in_disk(C64::real(x));
                (aw_diffop(&fpoly, z, &psi, q, false).unwrap() * gpoly(z).unwrap()).re
            })
            .unwrap();
        let f_lg = m
            .integrate(&|x| {
                let z = mu_inv_in_disk(C64::real(x));
                (fpoly(z).unwrap() * aw_diffop(&gpoly, z, &psi, q, false).unwrap()).re
            })
            .unwrap();
        assert!(
            (lf_g - f_lg).abs() <= 1e-7 * lf_g.abs().max(1.0),
            "{lf_g} vs {f_lg}"
        );
    }

    #[test]
    fn plancherel_support_of_inversion_measure() {
        let (s, t, q) = (1.7f64, 1.3f64, 0.5f64);
        let st = SphericalTransform::new(s, t, q).unwrap();
        // atoms sit exactly at mu(-q^{-1-2k}), independently of s and t
        let mut zs: Vec<f64> = st.inverse_measure.atoms.iter().map(|a| a.z).collect();
        zs.sort_by(|x, y| x.abs().partial_cmp(&y.abs()).unwrap());
        for (k, z) in zs.iter().enumerate() {
            let expect = -q.powi(-(1 + 2 * k as i32));
            assert!(
                (z - expect).abs() <= 1e-10 * expect.abs(),
                "k={k}: {z} vs {expect}"
            );
        }
        let st2 = SphericalTransform::new(2.6, 1.9, q).unwrap();
        assert_eq!(st2.inverse_measure.atoms.len(), st.inverse_measure.atoms.len());
    }

    #[test]
    fn big_q_legendre_limit() {
        // s -> infinity: phi_lambda at mu(z) = -q s y/2 approaches the
        // 3phi2 limit form in y
        let (q, t) = (0.5f64, 1.5f64);
        let q2 = q * q;
        let s = 1.0e4;
        let lambda = -0.3;
        let w = C64::real(q.powf(2.0 * lambda));
        let y = 0.35f64;
        let x = -q * s * y / 2.0;
        let z = mu_inv_in_disk(C64::real(x));
        let lhs = phi_lambda_w(w, z, s, t, q).unwrap();
        let u = w.inv();
        let r = C64::real;
        let num = poch_inf(r(q2), q2).unwrap() * poch_inf(u.scale(-q2 * y / t), q2).unwrap();
        let den = poch_inf(u, q2).unwrap() * poch_inf(r(-q2 * y / t), q2).unwrap();
        let series = crate::qseries::phi(&crate::qseries::SeriesSpec::new(
            vec![u.scale(1.0 / (t * t)), u, r(-q2 * y / t)],
            vec![r(q2 / (t * t)), u.scale(-q2 * y / t)],
            q2,
            w.scale(q2),
        ))
        .unwrap();
        let rhs = num / den * series;
        assert!(
            (lhs - rhs).abs() <= 1e-6 * rhs.abs(),
            "{lhs} vs {rhs} (rel {})",
            (lhs - rhs).abs() / rhs.abs()
        );
    }

    // The round trip per the printed inversion display does not close (see
    // the acceptance suite, which runs it at the stated tolerance and
    // reports the measured error and the fitted compensating constant).
    // These tests pin the machinery: the reconstruction is finite,
    // deterministic, and its error is reproducible.
    #[test]
    fn roundtrip_machinery_is_stable() {
        let (s, t, q) = (1.7f64, 1.3f64, 0.5f64);
        let st = SphericalTransform::new(s, t, q).unwrap();
        let f = |x: f64| {
            if x.abs() < 0.8 {
                (-1.0 / (1.0 - (x / 0.8).powi(2))).exp()
            } else {
                0.0
            }
        };
        let e1 = st.roundtrip_l2_error(&f, 8).unwrap();
        let e2 = st.roundtrip_l2_error(&f, 8).unwrap();
        assert!(e1.is_finite() && e1 > 0.0);
        assert_eq!(e1, e2);
    }

    #[test]
    fn forward_transform_linear_and_finite() {
        let (s, t, q) = (1.7f64, 1.3f64, 0.5f64);
        let st = SphericalTransform::new(s, t, q).unwrap();
        let f = |x: f64| if x.abs() < 0.7 { 1.0 - x * x } else { 0.0 };
        let g = |x: f64| if x.abs() < 0.7 { x * (1.0 - x * x) } else { 0.0 };
        let sz = C64::new(0.3, 0.6);
        let vf = st.forward(&f, sz, 8).unwrap();
        let vg = st.forward(&g, sz, 8).unwrap();
        let vfg = st
            .forward(&|x| 2.0 * f(x) - 0.5 * g(x), sz, 8)
            .unwrap();
        assert!((vfg - vf.scale(2.0) + vg.scale(0.5)).abs() <= 1e-12 * vfg.abs().max(1e-20));
        // zero in, zero out
        let vz = st.forward(&|_| 0.0, sz, 8).unwrap();
        assert_eq!(vz.abs(), 0.0);
    }
}
