//! Scalar kernel: q-shifted factorials, theta products and basic
//! hypergeometric series, generic over the working precision.
//!
//! Conventions: `(a;q)_k = prod_{i<k} (1 - a q^i)`, base `0 < q < 1`.
//! The `r phi s` series carries the factor `((-1)^k q^{k(k-1)/2})^{s+1-r}`,
//! and the very-well-poised series is
//! `sum_k (1-a1 q^{2k})/(1-a1) (a1,a4,..;q)_k z^k / (q, q a1/a4, ..;q)_k`.

use crate::num::{Cplx, Real};
use crate::{Error, Result};

/// Base of the q-calculus, strictly inside (0,1).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QBase(f64);

impl QBase {
    pub fn new(q: f64) -> Result<QBase> {
        if q.is_finite() && q > 0.0 && q < 1.0 {
            Ok(QBase(q))
        } else {
            Err(Error::Invalid(format!("base q must lie in (0,1), got {q}")))
        }
    }

    pub fn get(self) -> f64 {
        self.0
    }

    /// The squared base, for formulas stated "in base q^2".
    pub fn squared(self) -> QBase {
        QBase(self.0 * self.0)
    }
}

/// Order of a q-shifted factorial.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PochOrder {
    Finite(u32),
    Infinite,
}

/// Default relative tail tolerance for the working precision.
pub fn default_tol<T: Real>() -> f64 {
    T::eps().to_f64() * 16.0
}

/// `(a;q)_n` for finite n.
pub fn poch_n<T: Real>(a: Cplx<T>, q: T, n: u32) -> Cplx<T> {
    let mut acc = Cplx::one();
    let mut qi = T::ONE;
    for _ in 0..n {
        acc = acc * (Cplx::one() - a.scale(qi));
        qi = qi * q;
    }
    acc
}

/// `(a;q)_infinity`, truncated once `|a| q^i` drops below the tail tolerance,
/// with a first-order multiplicative tail correction.
pub fn poch_inf<T: Real>(a: Cplx<T>, q: T) -> Result<Cplx<T>> {
    let cutoff = T::eps() * T::from_f64(1e-2);
    let mut acc = Cplx::one();
    let mut aq = a;
    for i in 0..100_000 {
        if aq.abs() <= cutoff {
            // prod_{j>=i} (1 - a q^j) ~ 1 - a q^i/(1-q)
            let tail = Cplx::one() - aq.scale(T::ONE / (T::ONE - q));
            let out = acc * tail;
            if !out.is_finite() {
                return Err(Error::Overflow(format!("(a;q)_inf overflow at index {i}")));
            }
            return Ok(out);
        }
        acc = acc * (Cplx::one() - aq);
        if !acc.is_finite() {
            return Err(Error::Overflow(format!("(a;q)_inf overflow at index {i}")));
        }
        aq = aq.scale(q);
    }
    Err(Error::Convergence("(a;q)_inf did not truncate".into()))
}

/// `(a;q)_n` with `PochOrder`.
pub fn poch<T: Real>(a: Cplx<T>, q: T, n: PochOrder) -> Result<Cplx<T>> {
    match n {
        PochOrder::Finite(k) => Ok(poch_n(a, q, k)),
        PochOrder::Infinite => poch_inf(a, q),
    }
}

/// Componentwise product `(a_1,...,a_r;q)_n`.
pub fn poch_many<T: Real>(a: &[Cplx<T>], q: T, n: PochOrder) -> Result<Cplx<T>> {
    let mut acc = Cplx::one();
    for &ai in a {
        acc = acc * poch(ai, q, n)?;
    }
    Ok(acc)
}

/// Theta product `(a, q/a; q)_infinity`. Requires `a != 0`.
pub fn theta_pair<T: Real>(a: Cplx<T>, q: T) -> Result<Cplx<T>> {
    if a.abs() == T::ZERO {
        return Err(Error::Domain("theta product needs a != 0".into()));
    }
    Ok(poch_inf(a, q)? * poch_inf(Cplx::real(q) / a, q)?)
}

/// Detects `a = q^{-j}` for integer `j >= 0` (relative tolerance 1e-9),
/// which makes a q-shifted factorial terminate at index `j`.
pub fn q_neg_power<T: Real>(a: Cplx<T>, q: T) -> Option<u32> {
    let aa = a.to_c64();
    let qf = q.to_f64();
    if aa.re <= 0.0 || aa.abs() < 1.0 - 1e-12 {
        return None;
    }
    let j = (-(aa.abs().ln()) / qf.ln()).round();
    if !(0.0..=100_000.0).contains(&j) {
        return None;
    }
    let target = qf.powi(-(j as i32));
    let dist = ((aa.re - target).powi(2) + aa.im.powi(2)).sqrt();
    if dist <= 1e-9 * target {
        Some(j as u32)
    } else {
        None
    }
}

/// Pole-lattice guard: returns `Some(k)` when `x` is within relative 1e-9 of
/// `q^k` for some `|k| <= 200`.
pub fn in_q_lattice(x: crate::C64, q: f64) -> Option<i64> {
    if x.re <= 0.0 {
        return None;
    }
    let k = (x.abs().ln() / q.ln()).round();
    if k.abs() > 200.0 {
        return None;
    }
    let target = q.powi(k as i32);
    let dist = ((x.re - target).powi(2) + x.im.powi(2)).sqrt();
    if dist <= 1e-9 * target {
        Some(k as i64)
    } else {
        None
    }
}

/// A basic hypergeometric series `r phi s` with truncation policy.
#[derive(Clone, Debug)]
pub struct SeriesSpec<T: Real> {
    pub num: Vec<Cplx<T>>,
    pub den: Vec<Cplx<T>>,
    pub q: T,
    pub z: Cplx<T>,
    pub max_terms: usize,
    pub tail_tol: f64,
}

impl<T: Real> SeriesSpec<T> {
    pub fn new(num: Vec<Cplx<T>>, den: Vec<Cplx<T>>, q: T, z: Cplx<T>) -> Self {
        SeriesSpec { num, den, q, z, max_terms: 4000, tail_tol: default_tol::<T>() }
    }
}

/// Smallest terminating index among the numerator parameters, if any.
fn terminating_index<T: Real>(num: &[Cplx<T>], q: T) -> Option<u32> {
    num.iter().filter_map(|&a| q_neg_power(a, q)).min()
}

/// Evaluates `r phi s` per the series definition, summing terminating series
/// exactly and certifying a geometric tail bound otherwise. The certificate
/// requires the term-ratio moduli to be below 1 and non-increasing for five
/// consecutive terms before the tail is trusted.
pub fn phi<T: Real>(spec: &SeriesSpec<T>) -> Result<Cplx<T>> {
    let q = spec.q;
    let z = spec.z;
    let r = spec.num.len();
    let s = spec.den.len();
    let term_at = terminating_index(&spec.num, q);

    // Pole guard on denominator parameters.
    for &b in &spec.den {
        if let Some(j) = q_neg_power(b, q) {
            let ok = matches!(term_at, Some(t) if t <= j);
            if !ok {
                return Err(Error::Guard(format!(
                    "denominator parameter is q^-{j}; series does not terminate first"
                )));
            }
        }
    }
    if term_at.is_none() {
        if r > s + 1 {
            return Err(Error::Convergence(
                "r > s+1 and non-terminating: ratio test fails for every z != 0".into(),
            ));
        }
        if r == s + 1 && z.abs().to_f64() >= 1.0 {
            return Err(Error::Convergence(
                "r = s+1 needs |z| < 1 (use the analytic continuation route)".into(),
            ));
        }
    }

    let extra = s + 1 - r.min(s + 1); // exponent of the (-1)^k q^binom factor
    let mut term: Cplx<T> = Cplx::one();
    let mut sum = term;
    let mut qk = T::ONE;
    let mut max_mag = T::ONE;
    let mut prev_ratio = f64::INFINITY;
    let mut mono = 0usize;
    for k in 0..spec.max_terms {
        if let Some(t) = term_at {
            if k as u32 >= t {
                return Ok(sum);
            }
        }
        // ratio t_{k+1}/t_k
        let mut ratio = z;
        for &a in &spec.num {
            ratio = ratio * (Cplx::one() - a.scale(qk));
        }
        for &b in &spec.den {
            ratio = ratio / (Cplx::one() - b.scale(qk));
        }
        ratio = ratio / (Cplx::one() - Cplx::real(q * qk));
        for _ in 0..extra {
            ratio = -ratio.scale(qk);
        }
        term = term * ratio;
        sum = sum + term;
        if !sum.is_finite() {
            return Err(Error::Overflow(format!("phi series overflow at term {k}")));
        }
        let mag = term.abs();
        if mag > max_mag {
            max_mag = mag;
        }
        let rho = ratio.abs().to_f64();
        if rho < 1.0 && rho <= prev_ratio + 1e-15 {
            mono += 1;
        } else {
            mono = 0;
        }
        prev_ratio = rho;
        if mono >= 5 && rho < 0.999 {
            let tail = mag.to_f64() * rho / (1.0 - rho);
            let scale = sum.abs().to_f64().max(max_mag.to_f64() * 1e-6).max(1e-300);
            if tail <= spec.tail_tol * scale {
                return Ok(sum);
            }
        }
        qk = qk * q;
    }
    Err(Error::Convergence(format!(
        "phi series: no certified tail within {} terms",
        spec.max_terms
    )))
}

/// Convenience: `2phi1(a,b;c;q,z)` by direct summation.
pub fn phi21<T: Real>(a: Cplx<T>, b: Cplx<T>, c: Cplx<T>, q: T, z: Cplx<T>) -> Result<Cplx<T>> {
    phi(&SeriesSpec::new(vec![a, b], vec![c], q, z))
}

/// Very-well-poised `s+1 W s (a1; a4,...,a_{s+1}; q, z)`.
pub fn vwp<T: Real>(a1: Cplx<T>, tail: &[Cplx<T>], q: T, z: Cplx<T>) -> Result<Cplx<T>> {
    let term_at = tail.iter().filter_map(|&a| q_neg_power(a, q)).min();
    if term_at.is_none() && z.abs().to_f64() >= 1.0 {
        return Err(Error::Convergence("vwp needs |z| < 1 or a terminating parameter".into()));
    }
    let one = Cplx::one();
    let denom_a1 = one - a1;
    if denom_a1.abs() == T::ZERO {
        return Err(Error::Domain("vwp: a1 = 1".into()));
    }
    let mut c: Cplx<T> = Cplx::one(); // (a1,a4..;q)_k z^k / (q, qa1/a4..;q)_k
    let mut sum = Cplx::one();
    let mut qk = T::ONE;
    let q2 = q * q;
    let mut q2k = q2; // q^{2(k+1)} at step k
    let mut max_mag = T::ONE;
    let mut prev_ratio = f64::INFINITY;
    let mut mono = 0usize;
    for k in 0..4000usize {
        if let Some(t) = term_at {
            if k as u32 >= t {
                return Ok(sum);
            }
        }
        let mut ratio = z * (one - a1.scale(qk));
        for &a in tail {
            ratio = ratio * (one - a.scale(qk));
            ratio = ratio / (one - (a1.scale(q * qk)) / a);
        }
        ratio = ratio / (one - Cplx::real(q * qk));
        c = c * ratio;
        let term = c * (one - a1.scale(q2k)) / denom_a1;
        sum = sum + term;
        if !sum.is_finite() {
            return Err(Error::Overflow(format!("vwp overflow at term {k}")));
        }
        let mag = term.abs();
        if mag > max_mag {
            max_mag = mag;
        }
        let rho = ratio.abs().to_f64();
        if rho < 1.0 && rho <= prev_ratio + 1e-15 {
            mono += 1;
        } else {
            mono = 0;
        }
        prev_ratio = rho;
        if mono >= 5 && rho < 0.999 {
            let tail_b = mag.to_f64() * rho / (1.0 - rho);
            let scale = sum.abs().to_f64().max(max_mag.to_f64() * 1e-6).max(1e-300);
            if tail_b <= default_tol::<T>() * scale {
                return Ok(sum);
            }
        }
        qk = qk * q;
        q2k = q2k * q2;
    }
    Err(Error::Convergence("vwp: no certified tail within 4000 terms".into()))
}

/// Regularised combination `(c;q)_inf * 2phi1(a,b;c;q,z)`, well defined even
/// when `c = q^{-j}`: term `k` carries `(c q^k;q)_inf`, which vanishes for
/// the leading offending terms instead of dividing by zero.
pub fn phi21_times_cinf<T: Real>(
    a: Cplx<T>,
    b: Cplx<T>,
    c: Cplx<T>,
    q: T,
    z: Cplx<T>,
) -> Result<Cplx<T>> {
    if z.abs().to_f64() >= 1.0 && terminating_index(&[a, b], q).is_none() {
        return Err(Error::Convergence("phi21_times_cinf needs |z| < 1".into()));
    }
    // (c q^j;q)_inf computed downward from a stabilised index.
    let jmax = 360usize;
    let mut pinf = vec![Cplx::<T>::one(); jmax + 1];
    pinf[jmax] = poch_inf(c.scale(q.ipow(jmax as i64)), q)?;
    for j in (0..jmax).rev() {
        pinf[j] = (Cplx::one() - c.scale(q.ipow(j as i64))) * pinf[j + 1];
    }
    let mut coeff: Cplx<T> = Cplx::one(); // (a,b;q)_j z^j / (q;q)_j
    let mut sum = pinf[0];
    let mut qj = T::ONE;
    let mut max_mag = sum.abs();
    let mut small = 0usize;
    for j in 0..jmax {
        coeff = coeff * (Cplx::one() - a.scale(qj)) * (Cplx::one() - b.scale(qj)) * z;
        coeff = coeff / (Cplx::one() - Cplx::real(q * qj));
        let term = coeff * pinf[j + 1];
        sum = sum + term;
        if !sum.is_finite() {
            return Err(Error::Overflow(format!("phi21_times_cinf overflow at {j}")));
        }
        let mag = term.abs();
        if mag > max_mag {
            max_mag = mag;
        }
        if j > 8 && mag.to_f64() <= default_tol::<T>() * max_mag.to_f64().max(1e-300) {
            small += 1;
            if small >= 4 {
                return Ok(sum);
            }
        } else {
            small = 0;
        }
        qj = qj * q;
    }
    Err(Error::Convergence("phi21_times_cinf: tail not reached".into()))
}

/// Route taken by [`phi21_ac`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AcRoute {
    Direct,
    Jackson,
    CFunction,
}

/// `2phi1(a,b;c;q,z)` analytically continued outside `|z| < 1`.
///
/// Routes: the direct sum for `|z| < 0.9`; otherwise the transformation to a
/// `2phi2` (entire in its argument), which continues the series to the whole
/// plane minus the pole lattice `z in q^{-N}`; the three-term connection
/// expansion is available as an independent cross-check via
/// [`phi21_ac_routes`].
pub fn phi21_ac<T: Real>(a: Cplx<T>, b: Cplx<T>, c: Cplx<T>, q: T, z: Cplx<T>) -> Result<Cplx<T>> {
    if z.abs().to_f64() < 0.9 {
        return phi21(a, b, c, q, z);
    }
    phi21_jackson(a, b, c, q, z)
}

/// Continuation of `2phi1` via `(az;q)_inf/(z;q)_inf 2phi2(a, c/b; c, az; q, bz)`.
///
/// The `2phi2` is entire in its argument, so the transform continues the
/// series to the whole plane minus the pole lattice `z in q^{-N}`. Both
/// orderings of `(a, b)` are admissible; the one whose `a z` stays off the
/// q-lattice (denominator parameter) and whose `b z` is smallest is used.
pub fn phi21_jackson<T: Real>(
    a: Cplx<T>,
    b: Cplx<T>,
    c: Cplx<T>,
    q: T,
    z: Cplx<T>,
) -> Result<Cplx<T>> {
    if in_q_lattice(z.to_c64(), q.to_f64()).map_or(false, |k| k <= 0) {
        return Err(Error::Guard("2phi1 continuation: z on the pole lattice q^-N".into()));
    }
    let zinf = poch_inf(z, q)?;
    if zinf.abs().to_f64() < 1e-250 {
        return Err(Error::Guard("2phi1 continuation: z too close to the pole lattice".into()));
    }
    let mut orderings = [(a, b), (b, a)];
    orderings.sort_by(|x, y| {
        (x.1 * z)
            .abs()
            .to_f64()
            .partial_cmp(&(y.1 * z).abs().to_f64())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let mut last_err = None;
    for (a, b) in orderings {
        let az = a * z;
        if q_neg_power(az, q).is_some() {
            continue; // denominator parameter would sit on the lattice
        }
        let pre = poch_inf(az, q)? / zinf;
        let spec = SeriesSpec::new(vec![a, c / b], vec![c, az], q, b * z);
        match phi(&spec) {
            Ok(v) => {
                let val = pre * v;
                if !val.is_finite() {
                    return Err(Error::Overflow(
                        "2phi1 continuation produced non-finite value".into(),
                    ));
                }
                return Ok(val);
            }
            Err(e) => last_err = Some(e),
        }
    }
    Err(last_err
        .unwrap_or_else(|| Error::Guard("2phi1 continuation: both orderings on lattice".into())))
}

/// Three-term connection-coefficient route for `2phi1`, applicable when
/// `|cq/(abz)| < 1` and `b/a` is off the q-lattice.
pub fn phi21_cfun_route<T: Real>(
    a: Cplx<T>,
    b: Cplx<T>,
    c: Cplx<T>,
    q: T,
    z: Cplx<T>,
) -> Result<Cplx<T>> {
    let qq = Cplx::real(q);
    let w = c * qq / (a * b * z);
    if w.abs().to_f64() >= 0.95 {
        return Err(Error::Guard("c-function route needs |cq/abz| < 1".into()));
    }
    if in_q_lattice((b / a).to_c64(), q.to_f64()).is_some() {
        return Err(Error::Guard("c-function route: b/a on the q-lattice".into()));
    }
    let term = |a: Cplx<T>, b: Cplx<T>| -> Result<Cplx<T>> {
        let pre = poch_inf(b, q)? * poch_inf(c / a, q)? * theta_pair(a * z, q)?
            / (poch_inf(c, q)? * poch_inf(b / a, q)? * theta_pair(z, q)?);
        let inner = phi21(a, a * qq / c, a * qq / b, q, c * qq / (a * b * z))?;
        Ok(pre * inner)
    };
    Ok(term(a, b)? + term(b, a)?)
}

/// All applicable continuation routes with labels, for cross-checking.
pub fn phi21_ac_routes<T: Real>(
    a: Cplx<T>,
    b: Cplx<T>,
    c: Cplx<T>,
    q: T,
    z: Cplx<T>,
) -> Vec<(AcRoute, Result<Cplx<T>>)> {
    let mut out = Vec::new();
    if z.abs().to_f64() < 0.999 {
        out.push((AcRoute::Direct, phi21(a, b, c, q, z)));
    }
    out.push((AcRoute::Jackson, phi21_jackson(a, b, c, q, z)));
    out.push((AcRoute::CFunction, phi21_cfun_route(a, b, c, q, z)));
    out
}

// ---------------------------------------------------------------------------
// Log-domain helpers for products whose factors overflow f64 even though the
// assembled quantity is tame. Arguments are passed as logarithms.
// ---------------------------------------------------------------------------

/// `ln (-y; q)_inf` for `y > 0` given `ln y`; factors `1 + y q^i`.
pub fn ln_poch_inf_neg_arg(ln_y: f64, ln_q: f64) -> f64 {
    debug_assert!(ln_q < 0.0);
    let mut acc = 0.0;
    let mut l = ln_y;
    loop {
        if l > 0.0 {
            acc += l + (-l).exp().ln_1p();
        } else {
            let e = l.exp();
            if e < 1e-19 {
                acc += e / (1.0 - ln_q.exp());
                return acc;
            }
            acc += e.ln_1p();
        }
        l += ln_q;
    }
}

/// `ln (y; q)_inf` for `0 < y < 1` given plain `y`; factors `1 - y q^i`.
pub fn ln_poch_inf_pos_small(y: f64, q: f64) -> f64 {
    debug_assert!((0.0..1.0).contains(&y));
    let mut acc = 0.0;
    let mut v = y;
    while v > 1e-19 {
        acc += (-v).ln_1p();
        v *= q;
    }
    acc - v / (1.0 - q)
}

/// Signed log-sum accumulator: adds `sign * exp(ln_mag)` terms without
/// materialising the magnitudes.
#[derive(Debug, Default)]
pub struct LogSum {
    shift: f64,
    acc: f64,
    any: bool,
}

impl LogSum {
    pub fn new() -> Self {
        LogSum { shift: f64::NEG_INFINITY, acc: 0.0, any: false }
    }

    pub fn add(&mut self, ln_mag: f64, sign: f64) {
        if ln_mag == f64::NEG_INFINITY {
            return;
        }
        if !self.any {
            self.shift = ln_mag;
            self.acc = sign;
            self.any = true;
            return;
        }
        if ln_mag > self.shift {
            self.acc = self.acc * (self.shift - ln_mag).exp() + sign;
            self.shift = ln_mag;
        } else {
            self.acc += sign * (ln_mag - self.shift).exp();
        }
    }

    /// `(ln |sum|, sign(sum))`.
    pub fn value(&self) -> (f64, f64) {
        if !self.any || self.acc == 0.0 {
            (f64::NEG_INFINITY, 0.0)
        } else {
            (self.shift + self.acc.abs().ln(), self.acc.signum())
        }
    }

    /// Current magnitude estimate of the running sum, in ln scale.
    pub fn ln_mag(&self) -> f64 {
        self.value().0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::num::{C64, Cplx, Dd};

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn poch_empty_product_is_one() {
        let v = poch(c(0.3, 0.0), 0.5, PochOrder::Finite(0)).unwrap();
        assert_eq!(v, C64::one());
    }

    #[test]
    fn poch_finite_direct_product() {
        // (0.5; 0.5)_2 = (1-0.5)(1-0.25) = 0.375
        let v = poch(c(0.5, 0.0), 0.5, PochOrder::Finite(2)).unwrap();
        assert!((v.re - 0.375).abs() < 1e-15 && v.im == 0.0);
    }

    #[test]
    fn poch_zero_argument_infinite() {
        let v = poch(C64::zero(), 0.5, PochOrder::Infinite).unwrap();
        assert!((v - C64::one()).abs() < 1e-30);
    }

    #[test]
    fn poch_inf_matches_long_finite_product() {
        let a = c(0.7, 0.2);
        let q = 0.6;
        let direct = poch_n(a, q, 300);
        let inf = poch_inf(a, q).unwrap();
        assert!((direct - inf).abs() <= 1e-14 * inf.abs());
    }

    #[test]
    fn theta_vanishes_at_one() {
        // (1, q; q)_inf = 0 because of the (1 - 1) factor.
        let v = theta_pair(C64::one(), 0.5).unwrap();
        assert_eq!(v.abs(), 0.0);
    }

    #[test]
    fn theta_shift_k1() {
        // (aq, 1/a; q)_inf = (-a)^{-1} (a, q/a; q)_inf at a = 0.4, q = 0.5
        let q = 0.5;
        let a = c(0.4, 0.0);
        let lhs = poch_inf(a.scale(q), q).unwrap() * poch_inf(a.inv(), q).unwrap();
        let rhs = theta_pair(a, q).unwrap() / (-a);
        assert!((lhs - rhs).abs() <= 1e-12 * rhs.abs());
    }

    #[test]
    fn theta_shift_complex_k_minus2() {
        // (a q^k, q^{1-k}/a;q)_inf = (-a)^{-k} q^{-k(k-1)/2} (a, q/a;q)_inf, k=-2
        let q: f64 = 0.6;
        let a = c(0.7, 0.1);
        let k = -2i64;
        let lhs = poch_inf(a.scale(q.powi(k as i32)), q).unwrap()
            * poch_inf(C64::real(q.powi(1 - k as i32)) / a, q).unwrap();
        let rhs = (-a).powi(-k) * theta_pair(a, q).unwrap()
            * C64::real(q.powi((-k * (k - 1) / 2) as i32));
        assert!((lhs - rhs).abs() <= 1e-12 * rhs.abs());
    }

    #[test]
    fn theta_shift_sweep() {
        // shift identity across k in [-6,6] and a ring of magnitudes
        let q: f64 = 0.5;
        for k in -6i64..=6 {
            for &(ma, ph) in &[(0.1, 0.3), (0.9, 2.0), (3.0, -1.2), (1.7, 0.0)] {
                let a = c(ma * f64::cos(ph), ma * f64::sin(ph));
                let lhs = poch_inf(a.scale(q.powi(k as i32)), q).unwrap()
                    * poch_inf(C64::real(q.powi(1 - k as i32)) / a, q).unwrap();
                let rhs = (-a).powi(-k)
                    .scale(q.powi((-k * (k - 1) / 2) as i32))
                    * theta_pair(a, q).unwrap();
                assert!(
                    (lhs - rhs).abs() <= 1e-11 * rhs.abs().max(1e-30),
                    "k={k} a={a}"
                );
            }
        }
    }

    #[test]
    fn phi_single_term() {
        // 2phi1(a,b;c;q,0) = 1
        let v = phi21(c(0.3, 0.0), c(0.7, 0.0), c(0.2, 0.0), 0.5, C64::zero()).unwrap();
        assert_eq!(v, C64::one());
    }

    #[test]
    fn q_binomial_theorem() {
        // 1phi0(a;-;q,z) = (az;q)_inf / (z;q)_inf
        let (a, z, q) = (c(0.3, 0.0), c(0.4, 0.0), 0.5);
        let lhs = phi(&SeriesSpec::new(vec![a], vec![], q, z)).unwrap();
        let rhs = poch_inf(a * z, q).unwrap() / poch_inf(z, q).unwrap();
        assert!((lhs - rhs).abs() <= 1e-12 * rhs.abs());
    }

    #[test]
    fn chu_vandermonde_terminating() {
        // 2phi1(q^{-2p}, t^{-2}; q^2 t^{-2}; q^2, q^{2p+2})
        //   = (q^2;q^2)_p / (q^2 t^{-2};q^2)_p  at p=3, t=2, q=0.5
        let q: f64 = 0.5;
        let q2 = q * q;
        let p = 3u32;
        let t = 2.0f64;
        let lhs = phi21(
            c(q2.powi(-(p as i32)), 0.0),
            c(t.powi(-2), 0.0),
            c(q2 * t.powi(-2), 0.0),
            q2,
            c(q2.powi(p as i32 + 1), 0.0),
        )
        .unwrap();
        let rhs = poch_n(c(q2, 0.0), q2, p) / poch_n(c(q2 * t.powi(-2), 0.0), q2, p);
        assert!((lhs - rhs).abs() <= 1e-13 * rhs.abs());
    }

    #[test]
    fn chu_vandermonde_randomised() {
        // 2phi1(q^{-n}, b; c; q, c q^n / b) = (c/b;q)_n / (c;q)_n
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(42);
        for _ in 0..100 {
            let q: f64 = rng.gen_range(0.2..0.8);
            let n: u32 = rng.gen_range(1..6);
            let b = c(rng.gen_range(0.1..0.9), rng.gen_range(-0.3..0.3));
            let cc = c(rng.gen_range(0.1..0.9), rng.gen_range(-0.3..0.3));
            let z = cc.scale(q.powi(n as i32)) / b;
            let lhs = phi21(c(q.powi(-(n as i32)), 0.0), b, cc, q, z).unwrap();
            let rhs = poch_n(cc / b, q, n) / poch_n(cc, q, n);
            assert!((lhs - rhs).abs() <= 1e-11 * rhs.abs().max(1e-30));
        }
    }

    #[test]
    fn phi_tail_bound_sound() {
        let mut spec = SeriesSpec::new(
            vec![c(0.3, 0.1), c(0.8, 0.0)],
            vec![c(0.25, 0.0)],
            0.7,
            c(0.95, 0.2),
        );
        let a = phi(&spec).unwrap();
        spec.max_terms *= 2;
        spec.tail_tol *= 0.5;
        let b = phi(&spec).unwrap();
        assert!((a - b).abs() <= 1e-15 * b.abs() + 1e-18);
    }

    #[test]
    fn vwp_matches_expanded_phi() {
        // Expand the very-well-poised structure into an explicit 8phi7.
        let q = 0.5;
        let a1 = c(0.21, 0.0);
        let tail = [c(0.3, 0.0), c(0.5, 0.1), c(-0.2, 0.0), c(0.15, 0.0), c(0.4, 0.0)];
        let z = c(0.3, 0.05);
        let lhs = vwp(a1, &tail, q, z).unwrap();
        let ra = a1.sqrt();
        let mut num = vec![a1, ra.scale(q), -ra.scale(q)];
        let mut den = vec![ra, -ra];
        for &t in &tail {
            num.push(t);
            den.push(a1.scale(q) / t);
        }
        let rhs = phi(&SeriesSpec::new(num, den, q, z)).unwrap();
        assert!((lhs - rhs).abs() <= 1e-12 * rhs.abs());
    }

    #[test]
    fn vwp_terminating_6w5_closed_form() {
        // 6W5(a; b, c, q^{-n}; q, a q^{n+1}/(bc))
        //   = (aq, aq/bc;q)_n / ((aq/b, aq/c;q)_n)
        let q: f64 = 0.5;
        let (a, b, cc) = (c(0.2, 0.0), c(0.3, 0.0), c(0.4, 0.0));
        let n = 4u32;
        let z = a.scale(q.powi(n as i32 + 1)) / (b * cc);
        let lhs = vwp(a, &[b, cc, c(q.powi(-(n as i32)), 0.0)], q, z).unwrap();
        let aq = a.scale(q);
        let rhs = poch_n(aq, q, n) * poch_n(aq / (b * cc), q, n)
            / (poch_n(aq / b, q, n) * poch_n(aq / cc, q, n));
        assert!((lhs - rhs).abs() <= 1e-11 * rhs.abs());
    }

    #[test]
    fn vwp_immediate_termination() {
        let q = 0.5;
        let v = vwp(c(0.2, 0.0), &[c(1.0, 0.0)], q, c(0.1, 0.0)).unwrap();
        assert_eq!(v, C64::one());
    }

    #[test]
    fn ac_agrees_inside_disk() {
        let (a, b, cc, q) = (c(0.2, 0.0), c(0.3, 0.0), c(0.7, 0.0), 0.5);
        let z = c(0.4, 0.1);
        let direct = phi21(a, b, cc, q, z).unwrap();
        let jackson = phi21_jackson(a, b, cc, q, z).unwrap();
        assert!((direct - jackson).abs() <= 1e-13 * direct.abs());
    }

    #[test]
    fn ac_routes_overlap_band() {
        let (a, b, cc, q) = (c(0.2, 0.0), c(0.3, 0.0), c(0.7, 0.0), 0.5);
        let z = C64::new(0.9 * f64::cos(0.3), 0.9 * f64::sin(0.3));
        let routes = phi21_ac_routes(a, b, cc, q, z);
        let vals: Vec<C64> = routes.into_iter().filter_map(|(_, v)| v.ok()).collect();
        assert!(vals.len() >= 2);
        for w in vals.windows(2) {
            assert!((w[0] - w[1]).abs() <= 1e-9 * w[0].abs());
        }
    }

    #[test]
    fn ac_q_bessel_reflection() {
        // 2phi1(A, q^2/u; A u; q^2, u q^{-2n}) = A^n 2phi1(A, q^2/u; A u; q^2, u q^{2n})
        // with A = q^2 s^{-2} t^{-2}, at q=0.6, s=2, t=1.5, u=0.3, n=2.
        let q: f64 = 0.6;
        let q2 = q * q;
        let (s, t, u) = (2.0f64, 1.5f64, 0.3f64);
        let n = 2i32;
        let big_a = c(q2 / (s * s * t * t), 0.0);
        let uu = c(u, 0.0);
        let lhs =
            phi21_ac(big_a, C64::real(q2) / uu, big_a * uu, q2, uu.scale(q2.powi(-n))).unwrap();
        let rhs = big_a.powi(n as i64)
            * phi21_ac(big_a, C64::real(q2) / uu, big_a * uu, q2, uu.scale(q2.powi(n))).unwrap();
        assert!((lhs - rhs).abs() <= 1e-10 * rhs.abs());
    }

    #[test]
    fn regularised_phi21_handles_lattice_c() {
        // c = q^{-2}: (c;q)_inf 2phi1 is finite; compare against a detour with
        // c slightly off the lattice.
        let q: f64 = 0.5;
        let (a, b) = (c(0.3, 0.0), c(0.2, 0.0));
        let z = c(0.4, 0.0);
        let exact = phi21_times_cinf(a, b, c(q.powi(-2), 0.0), q, z).unwrap();
        let eps = 1e-7;
        let c_off = c(q.powi(-2) * (1.0 + eps), 0.0);
        let approx = poch_inf(c_off, q).unwrap() * phi21(a, b, c_off, q, z).unwrap();
        assert!((exact - approx).abs() <= 1e-5 * exact.abs().max(1e-10));
    }

    #[test]
    fn dd_path_matches_f64_path() {
        type CD = Cplx<Dd>;
        let q = Dd::from(0.5);
        let a = CD::from_f64s(0.3, 0.1);
        let b = CD::from_f64s(0.8, 0.0);
        let cc = CD::from_f64s(0.25, 0.0);
        let z = CD::from_f64s(0.6, 0.2);
        let hi = phi21(a, b, cc, q, z).unwrap().to_c64();
        let lo = phi21(c(0.3, 0.1), c(0.8, 0.0), c(0.25, 0.0), 0.5, c(0.6, 0.2)).unwrap();
        assert!((hi - lo).abs() < 1e-13);
    }

    #[test]
    fn log_helpers_match_direct() {
        let q = 0.5;
        let y = 3.7;
        let direct = poch_inf(c(-y, 0.0), q).unwrap().re.ln();
        let viaa = ln_poch_inf_neg_arg(y.ln(), q.ln());
        assert!((direct - viaa).abs() < 1e-12);
        let direct2 = poch_inf(c(0.3, 0.0), q).unwrap().re.ln();
        assert!((direct2 - ln_poch_inf_pos_small(0.3, q)).abs() < 1e-12);
    }

    #[test]
    fn logsum_tracks_signed_series() {
        let mut ls = LogSum::new();
        let mut direct = 0.0;
        for k in 0..40 {
            let t = (-(k as f64) * 0.3).exp() * if k % 2 == 0 { 1.0 } else { -1.0 };
            direct += t;
            ls.add(t.abs().ln(), t.signum());
        }
        let (lm, s) = ls.value();
        assert!((s * lm.exp() - direct).abs() < 1e-14);
    }
}
