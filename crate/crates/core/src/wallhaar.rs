//! Normalised Wall functions, the star product of matrix-element
//! functionals, and the invariant weight `h = sum_k q^{-2k} omega^0_{k,k}`.
//!
//! The Wall function `f^x_m(k)` is assembled in log space: its prefactor and
//! the `1phi1` part separately overflow `f64` at large indices even though
//! the value itself is tame (or underflows harmlessly to zero).

use crate::num::C64;
use crate::qseries::{ln_poch_inf_neg_arg, ln_poch_inf_pos_small, LogSum, QBase};
use crate::{Error, Result};
use std::collections::BTreeMap;

/// `f^x_m(k)`: the normalised Wall function. Real for real `q`.
///
/// Negative `x` is routed through the reflection `f^x_m(k) = f^{-x}_m(k-x)`;
/// for `x >= 0` the `1phi1` is first rewritten so that every term is regular
/// and positive powers of `q` never pile up:
/// `sum_{l >= max(0, m-k)} (q^{2+2k-2m+2l};q^2)_inf
///    (-q^{2-2m};q^2)_l / (q^2;q^2)_l (-1)^l q^{l(l-1)} q^{l(2+2x)}`.
pub fn wall(x: i64, m: i64, k: i64, q: QBase) -> Result<f64> {
    if x < 0 {
        return wall(-x, m, k - x, q);
    }
    let qf = q.get();
    let lnq = qf.ln();
    let lnq2 = 2.0 * lnq;

    let ln_a = ln_poch_inf_neg_arg((2 - 2 * k) as f64 * lnq, lnq2);
    let ln_b = ln_poch_inf_neg_arg((2 - 2 * m) as f64 * lnq, lnq2);
    let ln_c = ln_poch_inf_neg_arg((2 - 2 * k + 2 * x) as f64 * lnq, lnq2);
    let ln_qq2 = ln_poch_inf_pos_small(qf * qf, qf * qf);

    // The regularised series.
    let l0 = 0.max(m - k);
    let mut ln_coef = 0.0; // ln (-q^{2-2m};q^2)_l
    let mut ln_den = 0.0; // ln (q^2;q^2)_l
    for i in 0..l0 {
        ln_coef += ln1p_exp((2 - 2 * m + 2 * i) as f64 * lnq);
        ln_den += ln1m_qpow((2 + 2 * i) as f64 * lnq);
    }
    let mut sum = LogSum::new();
    let mut below = 0;
    for l in l0..l0 + 800 {
        let j = 1 + k - m + l; // (q^{2j};q^2)_inf factor
        debug_assert!(j >= 1);
        let arg = ((2 * j) as f64 * lnq).exp();
        let ln_pinf = if arg > 0.0 { ln_poch_inf_pos_small(arg, qf * qf) } else { 0.0 };
        let ln_term =
            ln_pinf + ln_coef - ln_den + ((l * (l - 1) + l * (2 + 2 * x)) as f64) * lnq;
        let sign = if l % 2 == 0 { 1.0 } else { -1.0 };
        sum.add(ln_term, sign);
        if ln_term < sum.ln_mag() - 45.0 {
            below += 1;
            if below >= 3 {
                break;
            }
        } else {
            below = 0;
        }
        ln_coef += ln1p_exp((2 - 2 * m + 2 * l) as f64 * lnq);
        ln_den += ln1m_qpow((2 + 2 * l) as f64 * lnq);
    }
    let (ln_s, sign_s) = sum.value();

    let exponent = ((k - m) * (1 + x)) as f64 * lnq + 0.5 * (ln_a - ln_b - ln_c) - ln_qq2 + ln_s;
    if exponent > 700.0 {
        return Err(Error::Overflow(format!("wall({x},{m},{k}) magnitude exceeds f64")));
    }
    let sign_k = if k % 2 == 0 { 1.0 } else { -1.0 };
    Ok(sign_k * sign_s * exponent.exp())
}

/// `ln(1 + e^t)` for a log-domain argument `t`.
fn ln1p_exp(t: f64) -> f64 {
    if t > 0.0 {
        t + (-t).exp().ln_1p()
    } else {
        t.exp().ln_1p()
    }
}

/// `ln(1 - e^t)` for `t < 0`.
fn ln1m_qpow(t: f64) -> f64 {
    debug_assert!(t < 0.0);
    (-t.exp()).ln_1p()
}

/// Right-hand side of the two-regime bound on `|f^x_m(k)|` for `x >= 0`.
pub fn wall_bound(x: i64, m: i64, k: i64, q: QBase) -> f64 {
    assert!(x >= 0);
    let qf = q.get();
    let lnq = qf.ln();
    let lnq2 = 2.0 * lnq;
    let pre = 0.5 * ln_poch_inf_neg_arg((2 - 2 * k) as f64 * lnq, lnq2)
        + 0.5 * ln_poch_inf_neg_arg((2 - 2 * m) as f64 * lnq, lnq2)
        + ln_poch_inf_neg_arg((2 + 2 * x) as f64 * lnq, lnq2)
        - 0.5 * ln_poch_inf_neg_arg((2 - 2 * k + 2 * x) as f64 * lnq, lnq2)
        - ln_poch_inf_pos_small(qf * qf, qf * qf);
    let tailexp = if m <= k {
        ((k - m) * (1 + x)) as f64 * lnq
    } else {
        ((m - k) * (1 + x) + (m - k) * (m - k - 1)) as f64 * lnq
    };
    (pre + tailexp).exp()
}

/// Orthogonality sum `sum_{|k| <= cap} q^{-2k} f^{s-k}_m(s) f^{r-k}_{m+r-s}(r)`;
/// equals `delta_{r,s} q^{-2m}` in the limit.
pub fn wall_orthogonality_sum(r: i64, s: i64, m: i64, q: QBase, cap: i64) -> Result<f64> {
    let mut acc = 0.0;
    for k in -cap..=cap {
        let f1 = wall(s - k, m, s, q)?;
        let f2 = wall(r - k, m + r - s, r, q)?;
        acc += q.get().powi(-2 * k as i32) * f1 * f2;
    }
    Ok(acc)
}

/// Finite functional `sum c * omega^x_{k,l}` keyed by `(x, k, l)`.
#[derive(Clone, Debug, Default)]
pub struct OmegaFunctional {
    pub terms: BTreeMap<(i64, i64, i64), C64>,
}

impl OmegaFunctional {
    pub fn basis(x: i64, k: i64, l: i64) -> OmegaFunctional {
        let mut terms = BTreeMap::new();
        terms.insert((x, k, l), C64::one());
        OmegaFunctional { terms }
    }

    pub fn add(&mut self, x: i64, k: i64, l: i64, c: C64) {
        let e = self.terms.entry((x, k, l)).or_insert_with(C64::zero);
        *e = *e + c;
        if e.abs() == 0.0 {
            self.terms.remove(&(x, k, l));
        }
    }

    /// `omega_xi` for `xi = sum xi_{x,m} f_{x,m}`:
    /// `sum xi_{x1,m1} conj(xi_{x2,m2}) omega^{x2-x1}_{m2,m1}`.
    pub fn from_vector(xi: &[((i64, i64), C64)]) -> OmegaFunctional {
        let mut w = OmegaFunctional::default();
        for &((x1, m1), c1) in xi {
            for &((x2, m2), c2) in xi {
                w.add(x2 - x1, m2, m1, c1 * c2.conj());
            }
        }
        w
    }

    /// Coefficient `c` with `omega star h = c h`: the sum of diagonal
    /// `omega^0_{k,k}` coefficients.
    pub fn invariance_coefficient(&self) -> C64 {
        let mut c = C64::zero();
        for (&(x, k, l), &v) in &self.terms {
            if x == 0 && k == l {
                c = c + v;
            }
        }
        c
    }
}

/// Element of the function algebra with finite Fourier data: `coeffs[(n,m,j)]`
/// is the j-th Fourier coefficient of the n-th shift layer on the circle of
/// radius `q^{-m}`.
#[derive(Clone, Debug, Default)]
pub struct TestElement {
    pub coeffs: BTreeMap<(i64, i64, i64), C64>,
}

impl TestElement {
    pub fn atom(n: i64, m: i64, j: i64, c: C64) -> TestElement {
        let mut coeffs = BTreeMap::new();
        coeffs.insert((n, m, j), c);
        TestElement { coeffs }
    }

    pub fn get(&self, n: i64, m: i64, j: i64) -> C64 {
        self.coeffs.get(&(n, m, j)).copied().unwrap_or_else(C64::zero)
    }

    pub fn to_json(&self) -> String {
        use crate::json::Jv;
        let rows = self
            .coeffs
            .iter()
            .map(|(&(n, m, j), &c)| {
                Jv::Arr(vec![Jv::Int(n), Jv::Int(m), Jv::Int(j), Jv::F(c.re), Jv::F(c.im)])
            })
            .collect();
        Jv::obj(vec![("coeffs", Jv::Arr(rows))]).to_json()
    }

    pub fn from_json(text: &str) -> Result<TestElement> {
        let v: serde_json::Value = serde_json::from_str(text)
            .map_err(|e| Error::Invalid(format!("test element JSON: {e}")))?;
        let rows = v
            .get("coeffs")
            .and_then(|c| c.as_array())
            .ok_or_else(|| Error::Invalid("test element JSON: missing coeffs".into()))?;
        let mut te = TestElement::default();
        for row in rows {
            let row = row
                .as_array()
                .filter(|r| r.len() == 5)
                .ok_or_else(|| Error::Invalid("coeff rows are [n,m,j,re,im]".into()))?;
            let idx: Vec<i64> = row[..3].iter().map(|x| x.as_i64().unwrap_or(0)).collect();
            let re = row[3].as_f64().unwrap_or(0.0);
            let im = row[4].as_f64().unwrap_or(0.0);
            te.coeffs.insert((idx[0], idx[1], idx[2]), C64::new(re, im));
        }
        Ok(te)
    }
}

/// Evaluation `omega^x_{k,l}(f)`: the definitional integral collapses to the
/// single Fourier coefficient `coeffs[(k-l, k, x)]`.
pub fn omega_eval_basis(x: i64, k: i64, l: i64, f: &TestElement) -> C64 {
    f.get(k - l, k, x)
}

/// Evaluation of a finite functional.
pub fn omega_eval(w: &OmegaFunctional, f: &TestElement) -> C64 {
    let mut acc = C64::zero();
    for (&(x, k, l), &c) in &w.terms {
        acc = acc + c * omega_eval_basis(x, k, l, f);
    }
    acc
}

/// The invariant weight `h(f) = sum_k q^{-2k} omega^0_{k,k}(f)`; exact finite
/// sum for finitely supported `f`.
pub fn haar(f: &TestElement, q: QBase) -> C64 {
    let mut acc = C64::zero();
    for (&(n, m, j), &c) in &f.coeffs {
        if n == 0 && j == 0 {
            acc = acc + c.scale(q.get().powi(-2 * m as i32));
        }
    }
    acc
}

/// Star product of two basis functionals, truncated to `|n| <= n_trunc`:
/// `omega^x_{k,l} star omega^y_{r,s} = delta_{l-k-y, s-r+x} (-1)^{l-k-y}
///    sum_n f^{s-l}_{n+l-k-y}(s) f^{r-k}_n(r) omega^{r-s+l-k}_{n, n+l-k-y}`.
pub fn star_basis(
    (x, k, l): (i64, i64, i64),
    (y, r, s): (i64, i64, i64),
    q: QBase,
    n_trunc: i64,
) -> Result<OmegaFunctional> {
    let mut out = OmegaFunctional::default();
    if l - k - y != s - r + x {
        return Ok(out);
    }
    let d = l - k - y;
    let sign = if d.rem_euclid(2) == 0 { 1.0 } else { -1.0 };
    let mut maxmag = 0.0f64;
    let mut edge = 0.0f64;
    for n in -n_trunc..=n_trunc {
        let c = wall(s - l, n + d, s, q)? * wall(r - k, n, r, q)?;
        let mag = c.abs();
        if mag > maxmag {
            maxmag = mag;
        }
        if n.abs() == n_trunc {
            edge = edge.max(mag);
        }
        if mag > 0.0 {
            out.add(r - s + l - k, n, n + d, C64::real(sign * c));
        }
    }
    if edge > 1e-13 * maxmag.max(1e-300) {
        return Err(Error::Convergence(format!(
            "star product tail above tolerance at |n| = {n_trunc}; increase the truncation"
        )));
    }
    Ok(out)
}

/// Star product of finite functionals (bilinear extension of [`star_basis`]).
pub fn star_product(
    w1: &OmegaFunctional,
    w2: &OmegaFunctional,
    q: QBase,
    n_trunc: i64,
) -> Result<OmegaFunctional> {
    let mut out = OmegaFunctional::default();
    for (&t1, &c1) in &w1.terms {
        for (&t2, &c2) in &w2.terms {
            let part = star_basis(t1, t2, q, n_trunc)?;
            for (&(x, k, l), &c) in &part.terms {
                out.add(x, k, l, c * c1 * c2);
            }
        }
    }
    Ok(out)
}

/// `(h star w)(f)` with the k-sum truncated to `|k| <= cap`: the inner n-sum
/// is exact (finite support of `f`).
pub fn haar_star_omega(w: &OmegaFunctional, f: &TestElement, q: QBase, cap: i64) -> Result<C64> {
    let mut acc = C64::zero();
    for (&(y, r, s), &cw) in &w.terms {
        if s - r != -y {
            continue;
        }
        let sign = if y.rem_euclid(2) == 0 { 1.0 } else { -1.0 };
        // omega^{r-s}_{n, n-y}(f) = coeffs[(y, n, r-s)]
        let mut inner = C64::zero();
        for (&(nn, n, jj), &cf) in &f.coeffs {
            if nn != y || jj != r - s {
                continue;
            }
            let mut ksum = 0.0;
            for k in -cap..=cap {
                ksum += q.get().powi(-2 * k as i32)
                    * wall(s - k, n - y, s, q)?
                    * wall(r - k, n, r, q)?;
            }
            inner = inner + cf.scale(sign * ksum);
        }
        acc = acc + cw * inner;
    }
    Ok(acc)
}

/// `(w star h)(f)` with the k-sum truncated to `|k| <= cap`.
pub fn omega_star_haar(w: &OmegaFunctional, f: &TestElement, q: QBase, cap: i64) -> Result<C64> {
    let mut acc = C64::zero();
    for (&(y, r, s), &cw) in &w.terms {
        if s - r != y {
            continue;
        }
        let sign = if y.rem_euclid(2) == 0 { 1.0 } else { -1.0 };
        // omega^{s-r}_{n, n+s-r}(f) = coeffs[(r-s, n, s-r)]
        let mut inner = C64::zero();
        for (&(nn, n, jj), &cf) in &f.coeffs {
            if nn != r - s || jj != s - r {
                continue;
            }
            let mut ksum = 0.0;
            for k in -cap..=cap {
                ksum += q.get().powi(-2 * k as i32)
                    * wall(k - s, n + s - r, k, q)?
                    * wall(k - r, n, k, q)?;
            }
            inner = inner + cf.scale(sign * ksum);
        }
        acc = acc + cw * inner;
    }
    Ok(acc)
}

/// Invariance check: both truncated products `(h star w)(f)` and
/// `(w star h)(f)` against the target `c h(f)` with
/// `c = sum of diagonal omega^0_{k,k} coefficients of w`.
pub struct InvarianceCheck {
    pub h_star_w: C64,
    pub w_star_h: C64,
    pub target: C64,
    pub resid_left: f64,
    pub resid_right: f64,
}

pub fn invariance_residual(
    w: &OmegaFunctional,
    f: &TestElement,
    q: QBase,
    cap: i64,
) -> Result<InvarianceCheck> {
    let hw = haar_star_omega(w, f, q, cap)?;
    let wh = omega_star_haar(w, f, q, cap)?;
    let target = w.invariance_coefficient() * haar(f, q);
    let scale = target.abs().max(1.0);
    Ok(InvarianceCheck {
        h_star_w: hw,
        w_star_h: wh,
        target,
        resid_left: (hw - target).abs() / scale,
        resid_right: (wh - target).abs() / scale,
    })
}
