//! Orthogonality measures: the four-parameter measure on [-1,1] with finite
//! discrete mass points, and its two extensions carrying an infinite ladder
//! of discrete masses escaping to infinity. Plus Jackson q-integrals and the
//! weighted inner products built on them.
//!
//! All formulas act in the base stored on the measure; callers working "in
//! base q^2" pass the squared base.

use crate::json::Jv;
use crate::linalg::gauss_legendre;
use crate::num::C64;
use crate::qseries::{poch_inf, poch_n};
use crate::{Error, Result};

pub fn mu(z: f64) -> f64 {
    0.5 * (z + 1.0 / z)
}

pub fn mu_c(z: C64) -> C64 {
    (z + z.inv()).scale(0.5)
}

/// `h_0(a,b,c,d|q) = (abcd;q)_inf / (q, ab, ac, ad, bc, bd, cd;q)_inf`.
pub fn h0(p: [f64; 4], q: f64) -> Result<f64> {
    let r = |x: f64| C64::real(x);
    let [a, b, c, d] = p;
    let num = poch_inf(r(a * b * c * d), q)?;
    let mut den = poch_inf(r(q), q)?;
    for prod in [a * b, a * c, a * d, b * c, b * d, c * d] {
        den = den * poch_inf(r(prod), q)?;
    }
    Ok((num / den).re)
}

/// Weight `w(z; a,b,c,d | q)` on the unit circle (or at ladder points).
pub fn aw_weight(z: C64, p: [C64; 4], q: f64) -> Result<C64> {
    let num = poch_inf(z * z, q)? * poch_inf((z * z).inv(), q)?;
    let mut den = C64::one();
    for e in p {
        den = den * poch_inf(e * z, q)? * poch_inf(e / z, q)?;
    }
    Ok(num / den)
}

/// Log-scaled complex value `exp(ln) * e^{i arg}`: keeps products of many
/// huge/tiny pochhammer factors representable.
#[derive(Clone, Copy, Debug)]
struct LnC {
    ln: f64,
    arg: f64,
}

impl LnC {
    const ONE: LnC = LnC { ln: 0.0, arg: 0.0 };

    fn from_c(v: C64) -> Result<LnC> {
        let m = v.abs();
        if m == 0.0 {
            return Err(Error::Domain("log of exact zero factor".into()));
        }
        Ok(LnC { ln: m.ln(), arg: v.im.atan2(v.re) })
    }

    fn mul(self, o: LnC) -> LnC {
        LnC { ln: self.ln + o.ln, arg: self.arg + o.arg }
    }

    fn div(self, o: LnC) -> LnC {
        LnC { ln: self.ln - o.ln, arg: self.arg - o.arg }
    }

    fn to_c(self) -> Result<C64> {
        if self.ln > 700.0 {
            return Err(Error::Overflow("log-scaled value exceeds f64".into()));
        }
        let m = self.ln.exp();
        Ok(C64::new(m * self.arg.cos(), m * self.arg.sin()))
    }
}

/// `(a;q)_inf` as a log-scaled value, optionally skipping one factor.
/// Errors if a non-skipped factor vanishes to rounding level: the caller's
/// parameters then sit on an excluded lattice.
fn poch_inf_lnc(a: C64, q: f64, skip: Option<usize>) -> Result<LnC> {
    let mut acc = LnC::ONE;
    let mut aq = a;
    let mut i = 0usize;
    loop {
        if aq.abs() <= 1e-19 {
            let tail = C64::one() - aq.scale(1.0 / (1.0 - q));
            return Ok(acc.mul(LnC::from_c(tail)?));
        }
        if Some(i) != skip {
            let f = C64::one() - aq;
            if f.abs() <= 1e-12 * (1.0 + aq.abs()) {
                return Err(Error::Guard(
                    "pochhammer factor vanishes: parameter on the excluded lattice".into(),
                ));
            }
            acc = acc.mul(LnC::from_c(f)?);
        }
        aq = aq.scale(q);
        i += 1;
        if i > 100_000 {
            return Err(Error::Convergence("poch_inf_lnc".into()));
        }
    }
}

/// Side of a factor family `(e z;q)_inf (e/z;q)_inf` carrying the pole.
#[derive(Clone, Copy, Debug)]
pub enum PoleSite {
    /// `(e/z;q)_inf` vanishing at index `idx`: `z0 = e q^idx`, sign `+`.
    Down { fam: usize, idx: usize },
    /// `(e z;q)_inf` vanishing at index `idx`: `z0 = q^{-1-idx}/e`, sign `-`.
    Up { fam: usize, idx: usize },
}

/// A weight of the shape
/// `(z^2, z^{-2};q)_inf prod_num (ez, e/z;q)_inf / prod_den (ez, e/z;q)_inf`.
pub struct WeightSpec {
    pub num_fams: Vec<C64>,
    pub den_fams: Vec<C64>,
    pub q: f64,
}

impl WeightSpec {
    /// Residue of `weight(z)/z` at `z0`, a simple pole named by `site`
    /// within the denominator families.
    ///
    /// When further factors collide with the lattice at `z0` (a numerator
    /// zero cancelling a second denominator zero, as happens when the ladder
    /// parameter squares into the lattice), the factor-removal route fails
    /// and a symmetric numeric limit of `(z - z0) w(z)/z` takes over.
    pub fn residue(&self, z0: C64, site: PoleSite) -> Result<C64> {
        match self.residue_skip(z0, site) {
            Ok(v) => Ok(v),
            Err(Error::Guard(_)) => self.residue_limit(z0),
            Err(e) => Err(e),
        }
    }

    fn residue_skip(&self, z0: C64, site: PoleSite) -> Result<C64> {
        let mut acc = poch_inf_lnc(z0 * z0, self.q, None)?
            .mul(poch_inf_lnc((z0 * z0).inv(), self.q, None)?);
        for &e in &self.num_fams {
            acc = acc.mul(poch_inf_lnc(e * z0, self.q, None)?);
            acc = acc.mul(poch_inf_lnc(e / z0, self.q, None)?);
        }
        let (fam, up_skip, down_skip, sign) = match site {
            PoleSite::Down { fam, idx } => (fam, None, Some(idx), 1.0),
            PoleSite::Up { fam, idx } => (fam, Some(idx), None, -1.0),
        };
        for (i, &e) in self.den_fams.iter().enumerate() {
            let (us, ds) = if i == fam { (up_skip, down_skip) } else { (None, None) };
            acc = acc.div(poch_inf_lnc(e * z0, self.q, us)?);
            acc = acc.div(poch_inf_lnc(e / z0, self.q, ds)?);
        }
        Ok(acc.to_c()?.scale(sign))
    }

    /// `(w(z) (z - z0)/z)` in log scale, for the numeric-limit route.
    fn value_with_pole_factor(&self, z: C64, z0: C64) -> Result<C64> {
        let mut acc = poch_inf_lnc(z * z, self.q, None)?
            .mul(poch_inf_lnc((z * z).inv(), self.q, None)?)
            .mul(LnC::from_c((z - z0) / z)?);
        for &e in &self.num_fams {
            acc = acc.mul(poch_inf_lnc(e * z, self.q, None)?);
            acc = acc.mul(poch_inf_lnc(e / z, self.q, None)?);
        }
        for &e in &self.den_fams {
            acc = acc.div(poch_inf_lnc(e * z, self.q, None)?);
            acc = acc.div(poch_inf_lnc(e / z, self.q, None)?);
        }
        acc.to_c()
    }

    fn residue_limit(&self, z0: C64) -> Result<C64> {
        let eval = |h: f64| -> Result<C64> {
            let a = self.value_with_pole_factor(z0.scale(1.0 + h), z0)?;
            let b = self.value_with_pole_factor(z0.scale(1.0 - h), z0)?;
            Ok((a + b).scale(0.5))
        };
        // symmetric limit kills the O(h) term; Richardson removes O(h^2)
        let r1 = eval(1e-4)?;
        let r2 = eval(5e-5)?;
        Ok((r2.scale(4.0) - r1).scale(1.0 / 3.0))
    }

    #[doc(hidden)]
    pub fn residue_limit_public(&self, z0: C64) -> Result<C64> {
        self.residue_limit(z0)
    }
}

/// Residue of `w(z; p | q)/z` at the finite atom `z0 = p[e] q^j`, `j >= 0`.
pub fn aw_residue(p: [C64; 4], q: f64, e: usize, j: u32) -> Result<f64> {
    let spec = WeightSpec { num_fams: vec![], den_fams: p.to_vec(), q };
    let z0 = p[e].scale(q.powi(j as i32));
    let res = spec.residue(z0, PoleSite::Down { fam: e, idx: j as usize })?;
    if res.im.abs() > 1e-8 * res.re.abs().max(1e-280) {
        return Err(Error::Domain(format!("atom residue not real: {res}")));
    }
    Ok(res.re)
}

/// Closed-form mass `w_k(a; b,c,d | q)` of the atom at `mu(a q^k)`.
pub fn atom_mass_closed(a: f64, b: f64, c: f64, d: f64, q: f64, k: u32) -> Result<f64> {
    let r = C64::real;
    let num = poch_inf(r(1.0 / (a * a)), q)?;
    let mut den = poch_inf(r(q), q)?;
    for prod in [a * b, b / a, a * c, c / a, a * d, d / a] {
        den = den * poch_inf(r(prod), q)?;
    }
    let front = (num / den).re;
    let qk = q.powi(2 * k as i32);
    let mid = (1.0 - a * a * qk) / (1.0 - a * a);
    let mut fin = poch_n(r(a * a), q, k) * poch_n(r(a * b), q, k) * poch_n(r(a * c), q, k)
        * poch_n(r(a * d), q, k);
    fin = fin
        / (poch_n(r(q), q, k)
            * poch_n(r(a * q / b), q, k)
            * poch_n(r(a * q / c), q, k)
            * poch_n(r(a * q / d), q, k));
    Ok(front * mid * fin.re * (q / (a * b * c * d)).powi(k as i32))
}

/// Which absolutely continuous density a measure carries. Parameters are
/// stored complex so a conjugate pair `(a, conj a)` is admissible; the
/// density itself is real either way.
#[derive(Clone, Debug)]
enum AcDensity {
    /// `w(z;a,b,c,d)/h0` (the normalised four-parameter measure)
    Normalised { p: [C64; 4], h0: f64 },
    /// plain `w(z;a,b,q/d,d)` (the nu extension absorbs `h0`)
    Plain { p: [C64; 4] },
    /// `psi_r(z) w(z;a,b,c,d)` (the nu_r extension)
    PsiR { p: [C64; 4], r: f64, d: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MeasureKind {
    Dm,
    DNu,
    DNuR,
}

#[derive(Clone, Copy, Debug)]
pub struct MassPoint {
    pub location: f64,
    pub mass: f64,
    /// `z`-coordinate the location `mu(z)` came from.
    pub z: f64,
}

/// A measure: absolutely continuous density on [-1,1] plus discrete masses.
#[derive(Clone, Debug)]
pub struct SpectralMeasure {
    pub kind: MeasureKind,
    pub q: f64,
    pub h0: f64,
    pub params: Vec<(&'static str, f64)>,
    ac: AcDensity,
    pub atoms: Vec<MassPoint>,
    pub tail_bound: f64,
}

/// Quotient of theta products `psi_r(z)`; vanishes at `z = d q^k`.
pub fn psi_r(z: C64, r: f64, d: f64, q: f64) -> Result<C64> {
    let rd = C64::real(r * d);
    let dd = C64::real(d);
    let qq = C64::real(q);
    let num = poch_inf(dd * z, q)?
        * poch_inf(qq / (dd * z), q)?
        * poch_inf(dd / z, q)?
        * poch_inf(qq * z / dd, q)?;
    let den = poch_inf(rd * z, q)?
        * poch_inf(qq / (rd * z), q)?
        * poch_inf(rd / z, q)?
        * poch_inf(qq * z / rd, q)?;
    Ok(num / den)
}

impl SpectralMeasure {
    /// Density against `d theta / 2 pi` on the upper half circle.
    pub fn ac_density(&self, theta: f64) -> Result<f64> {
        let z = C64::new(theta.cos(), theta.sin());
        let v = match &self.ac {
            AcDensity::Normalised { p, h0 } => aw_weight(z, *p, self.q)?.scale(1.0 / h0),
            AcDensity::Plain { p } => aw_weight(z, *p, self.q)?,
            AcDensity::PsiR { p, r, d } => {
                aw_weight(z, *p, self.q)? * psi_r(z, *r, *d, self.q)?
            }
        };
        if v.im.abs() > 1e-8 * v.re.abs().max(1e-280) {
            return Err(Error::Domain("ac density not real".into()));
        }
        Ok(v.re)
    }

    /// `int f d(measure)`: adaptive panel quadrature on the continuous part
    /// plus the retained atoms.
    ///
    /// The ladders are retained to a fixed depth while their masses can grow,
    /// so the outermost retained contributions are checked to be negligible;
    /// integrands must vanish (or decay fast) toward the far atoms.
    pub fn integrate(&self, f: &dyn Fn(f64) -> f64) -> Result<f64> {
        let ac = integrate_upper_circle(
            &|theta| self.ac_density(theta).map(|d| d * f(theta.cos())),
            1e-11,
        )?;
        let mut discrete = 0.0;
        let mut scale = ac.abs();
        for a in &self.atoms {
            let c = a.mass * f(a.location);
            discrete += c;
            scale = scale.max(c.abs());
        }
        if self.kind != MeasureKind::Dm {
            // certificate: the two outermost ladder atoms contribute nothing
            let mut far: Vec<&MassPoint> = self.atoms.iter().collect();
            far.sort_by(|x, y| x.z.abs().partial_cmp(&y.z.abs()).unwrap());
            for a in far.iter().rev().take(2) {
                let c = (a.mass * f(a.location)).abs();
                if c > 1e-11 * scale.max(1e-300) {
                    return Err(Error::Convergence(
                        "integrand does not vanish along the discrete ladder".into(),
                    ));
                }
            }
        }
        Ok(ac + discrete)
    }

    pub fn total_mass(&self) -> Result<f64> {
        self.integrate(&|_| 1.0)
    }

    pub fn to_jv(&self) -> Jv {
        Jv::obj(vec![
            (
                "kind",
                Jv::Str(
                    match self.kind {
                        MeasureKind::Dm => "dm",
                        MeasureKind::DNu => "dnu",
                        MeasureKind::DNuR => "dnur",
                    }
                    .into(),
                ),
            ),
            (
                "params",
                Jv::Obj(
                    self.params
                        .iter()
                        .map(|&(k, v)| (k.to_string(), Jv::F(v)))
                        .collect(),
                ),
            ),
            ("h0", Jv::F(self.h0)),
            (
                "atoms",
                Jv::Arr(
                    self.atoms
                        .iter()
                        .map(|a| {
                            Jv::obj(vec![
                                ("location", Jv::F(a.location)),
                                ("mass", Jv::F(a.mass)),
                                ("z", Jv::F(a.z)),
                            ])
                        })
                        .collect(),
                ),
            ),
            ("tail_bound", Jv::F(self.tail_bound)),
        ])
    }
}

/// `(1/2pi) int_0^pi g(theta) d theta` with panel doubling until stable.
pub fn integrate_upper_circle(g: &dyn Fn(f64) -> Result<f64>, tol: f64) -> Result<f64> {
    let rule = gauss_legendre(32);
    let eval = |panels: usize| -> Result<f64> {
        let mut acc = 0.0;
        let h = std::f64::consts::PI / panels as f64;
        for p in 0..panels {
            let (lo, hi) = (p as f64 * h, (p + 1) as f64 * h);
            let (mid, half) = (0.5 * (lo + hi), 0.5 * (hi - lo));
            for &(x, w) in &rule {
                acc += w * half * g(mid + half * x)?;
            }
        }
        Ok(acc / (2.0 * std::f64::consts::PI))
    };
    let mut panels = 8;
    let mut prev = eval(panels)?;
    while panels <= 128 {
        panels *= 2;
        let next = eval(panels)?;
        if (next - prev).abs() <= tol * (next.abs() + 1.0) {
            return Ok(next);
        }
        prev = next;
    }
    Err(Error::Quadrature("circle quadrature did not settle".into()))
}

/// How many ladder atoms beyond the unit circle a measure retains. The
/// retained range covers `|z|` up to roughly `q^{-LADDER_DEPTH}`; integrands
/// must effectively vanish there, which `integrate` certifies per call.
const LADDER_DEPTH: i64 = 40;

/// Normalised four-parameter measure. Parameters real with pairwise products
/// of modulus below one.
pub fn aw_measure(a: f64, b: f64, c: f64, d: f64, q: f64) -> Result<SpectralMeasure> {
    let p = [a, b, c, d];
    for (i, &x) in p.iter().enumerate() {
        for &y in &p[i + 1..] {
            if (x * y).abs() >= 1.0 {
                return Err(Error::Guard(format!(
                    "pairwise product {x}*{y} not below one"
                )));
            }
        }
    }
    let h = h0(p, q)?;
    let pc = p.map(C64::real);
    let mut atoms = Vec::new();
    for (e_idx, &e) in p.iter().enumerate() {
        if e.abs() <= 1.0 {
            continue;
        }
        let mut k = 0u32;
        while (e * q.powi(k as i32)).abs() > 1.0 {
            let z0 = e * q.powi(k as i32);
            let res = aw_residue(pc, q, e_idx, k)?;
            atoms.push(MassPoint { location: mu(z0), mass: res / h, z: z0 });
            k += 1;
        }
    }
    Ok(SpectralMeasure {
        kind: MeasureKind::Dm,
        q,
        h0: h,
        params: vec![("a", a), ("b", b), ("c", c), ("d", d)],
        ac: AcDensity::Normalised { p: pc, h0: h },
        atoms,
        tail_bound: 0.0,
    })
}

/// The extension with the infinite ladder `mu(d q^{-k})`:
/// plain weight `w(z; a, b, q/d, d)` plus residues along the whole `d` line.
///
/// Ladder masses behave like `(ab)^{-k}` for large `k`, so they may grow;
/// integration is only meaningful against integrands vanishing along the
/// ladder, which `integrate` certifies.
pub fn nu_measure(a: f64, b: f64, d: f64, q: f64) -> Result<SpectralMeasure> {
    nu_measure_c(C64::real(a), C64::real(b), d, q)
}

/// [`nu_measure`] admitting a complex conjugate pair `(a, b = conj a)`; the
/// density and all masses stay real.
pub fn nu_measure_c(a: C64, b: C64, d: f64, q: f64) -> Result<SpectralMeasure> {
    if d == 0.0 {
        return Err(Error::Invalid("nu measure needs d != 0".into()));
    }
    let conj_pair = (a - b.conj()).abs() <= 1e-12 * a.abs();
    if a.im.abs() > 1e-12 * a.abs().max(1e-300) && !conj_pair {
        return Err(Error::Invalid("nu measure needs real a, b or a conjugate pair".into()));
    }
    let pc = [a, b, C64::real(q) / C64::real(d), C64::real(d)];
    let spec = WeightSpec { num_fams: vec![], den_fams: pc.to_vec(), q };
    let mut atoms = Vec::new();
    // a- and b-family finite atoms; the q/d family stays inside the disk.
    for (e_idx, &e) in pc.iter().take(2).enumerate() {
        if e.abs() <= 1.0 {
            continue;
        }
        if e.im.abs() > 1e-12 * e.abs() {
            return Err(Error::Guard("complex parameter outside the unit disk".into()));
        }
        let e = e.re;
        let mut k = 0u32;
        while (e * q.powi(k as i32)).abs() > 1.0 {
            let z0 = e * q.powi(k as i32);
            let res = aw_residue(pc, q, e_idx, k)?;
            atoms.push(MassPoint { location: mu(z0), mass: res, z: z0 });
            k += 1;
        }
    }
    // d-ladder, j in Z with |d q^j| > 1. Poles at d q^j for j >= 0 live in
    // the (d/z;q) family; for j < 0 in the ((q/d) z;q) family.
    let jmax = (-(d.abs().ln()) / q.ln()).floor() as i64;
    for j in (jmax - LADDER_DEPTH..=jmax).rev() {
        let z0 = d * q.powi(j as i32);
        if z0.abs() <= 1.0 {
            continue;
        }
        let site = if j >= 0 {
            PoleSite::Down { fam: 3, idx: j as usize }
        } else {
            PoleSite::Up { fam: 2, idx: (-1 - j) as usize }
        };
        let res = spec.residue(C64::real(z0), site)?;
        if res.im.abs() > 1e-8 * res.re.abs().max(1e-280) {
            return Err(Error::Domain("nu ladder residue not real".into()));
        }
        atoms.push(MassPoint { location: mu(z0), mass: res.re, z: z0 });
    }
    let tail = atoms.last().map(|a| a.mass.abs()).unwrap_or(0.0);
    let h = if conj_pair {
        // products in the h0 formula pair into real values
        f64::NAN
    } else {
        h0([a.re, b.re, q / d, d], q)?
    };
    Ok(SpectralMeasure {
        kind: MeasureKind::DNu,
        q,
        h0: h,
        params: vec![("a", a.re), ("b", b.re), ("d", d)],
        ac: AcDensity::Plain { p: pc },
        atoms,
        tail_bound: tail,
    })
}

/// The twisted extension: density `psi_r(z) w(z;a,b,c,d)`, atoms of the
/// `a,b,c` families weighted by `psi_r`, the `d` family annihilated, and the
/// infinite ladder at `mu(r d q^{-k})`.
pub fn nur_measure(r: f64, a: f64, b: f64, c: f64, d: f64, q: f64) -> Result<SpectralMeasure> {
    if r == 0.0 || d == 0.0 {
        return Err(Error::Invalid("nu_r needs r, d != 0".into()));
    }
    let p = [a, b, c, d];
    let pc = p.map(C64::real);
    let mut atoms = Vec::new();
    for (e_idx, &e) in p.iter().take(3).enumerate() {
        if e.abs() <= 1.0 {
            continue;
        }
        let mut k = 0u32;
        while (e * q.powi(k as i32)).abs() > 1.0 {
            let z0 = e * q.powi(k as i32);
            let res = aw_residue(pc, q, e_idx, k)?;
            let weight = psi_r(C64::real(z0), r, d, q)?.re;
            atoms.push(MassPoint { location: mu(z0), mass: res * weight, z: z0 });
            k += 1;
        }
    }
    // rd-ladder via the twisted weight:
    //   num families (q/d), den families (rd, q/rd, a, b, c).
    let rd = r * d;
    let spec = WeightSpec {
        num_fams: vec![C64::real(q / d)],
        den_fams: vec![
            C64::real(rd),
            C64::real(q / rd),
            C64::real(a),
            C64::real(b),
            C64::real(c),
        ],
        q,
    };
    let kmin = ((rd.abs().ln()) / q.ln()).ceil() as i64;
    for k in kmin..=kmin + LADDER_DEPTH {
        let z0 = rd * q.powi(-k as i32);
        if z0.abs() <= 1.0 {
            continue;
        }
        let site = if k >= 1 {
            PoleSite::Up { fam: 1, idx: (k - 1) as usize }
        } else {
            PoleSite::Down { fam: 0, idx: (-k) as usize }
        };
        let res = spec.residue(C64::real(z0), site)?;
        if res.im.abs() > 1e-8 * res.re.abs().max(1e-280) {
            return Err(Error::Domain("nu_r ladder residue not real".into()));
        }
        atoms.push(MassPoint { location: mu(z0), mass: res.re, z: z0 });
    }
    let tail = atoms.last().map(|a| a.mass.abs()).unwrap_or(0.0);
    Ok(SpectralMeasure {
        kind: MeasureKind::DNuR,
        q,
        h0: h0(p, q)?,
        params: vec![("r", r), ("a", a), ("b", b), ("c", c), ("d", d)],
        ac: AcDensity::PsiR { p: pc, r, d },
        atoms,
        tail_bound: tail,
    })
}

/// Jackson q-integral on `[-d, infinity(c))` for `c d > 0`:
/// `(1-q) d sum_{p>=0} g(-d q^p) q^p + (1-q) c sum_{p in Z} g(c q^p) q^p`.
pub fn jackson(g: &dyn Fn(f64) -> f64, c: f64, d: f64, q: f64) -> Result<f64> {
    if c * d <= 0.0 {
        return Err(Error::Invalid("jackson integral needs c d > 0".into()));
    }
    let mut acc = 0.0;
    let mut qp = 1.0;
    for _ in 0..2000 {
        let term = c * g(c * qp) * qp;
        acc += term;
        qp *= q;
        if term.abs() < 1e-18 * acc.abs().max(1.0) && qp < 1e-12 {
            break;
        }
    }
    let mut qp = 1.0 / q;
    let mut quiet = 0;
    for _ in 0..2000 {
        let term = c * g(c * qp) * qp;
        acc += term;
        if term.abs() < 1e-18 * acc.abs().max(1.0) {
            quiet += 1;
            if quiet > 4 {
                break;
            }
        } else {
            quiet = 0;
        }
        qp /= q;
        if qp > 1e280 {
            return Err(Error::Convergence(
                "jackson integral: integrand does not vanish toward infinity".into(),
            ));
        }
    }
    let mut qp = 1.0;
    for _ in 0..2000 {
        let term = d * g(-d * qp) * qp;
        acc += term;
        qp *= q;
        if term.abs() < 1e-18 * acc.abs().max(1.0) && qp < 1e-12 {
            break;
        }
    }
    Ok((1.0 - q) * acc)
}

/// Weighted inner product: the Jackson integral of `f conj(g)` against the
/// quotient weight
/// `(-q^2 x/c, -q^2 x/d;q^2)_inf / (-q^{2+2a} x/c, -q^{2+2b} x/d;q^2)_inf`.
pub fn weighted_inner(
    f: &dyn Fn(f64) -> C64,
    g: &dyn Fn(f64) -> C64,
    a: f64,
    b: f64,
    c: f64,
    d: f64,
    q: f64,
) -> Result<C64> {
    let q2 = q * q;
    let weight = |x: f64| -> f64 {
        let inner = || -> Result<f64> {
            let num = poch_inf(C64::real(-q2 * x / c), q2)?
                * poch_inf(C64::real(-q2 * x / d), q2)?;
            let den = poch_inf(C64::real(-q2 * q.powf(2.0 * a) * x / c), q2)?
                * poch_inf(C64::real(-q2 * q.powf(2.0 * b) * x / d), q2)?;
            Ok((num / den).re)
        };
        inner().unwrap_or(f64::NAN)
    };
    let re = jackson(&|x| (f(x) * g(x).conj()).re * weight(x), c, d, q2)?;
    let im = jackson(&|x| (f(x) * g(x).conj()).im * weight(x), c, d, q2)?;
    if !re.is_finite() || !im.is_finite() {
        return Err(Error::Domain("weighted inner product weight failed".into()));
    }
    Ok(C64::new(re, im))
}
