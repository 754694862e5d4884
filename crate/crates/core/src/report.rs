//! Identity verification reports.

use crate::json::Jv;
use crate::num::C64;

/// Floor protecting the relative error against 0/0 when both sides of an
/// identity vanish.
pub const EPS_FLOOR: f64 = 1e-300;

/// Outcome of one two-sided identity evaluation.
#[derive(Clone, Debug)]
pub struct IdentityReport {
    pub id: String,
    pub params: Vec<(String, C64)>,
    pub lhs: C64,
    pub rhs: C64,
    pub abs_err: f64,
    pub rel_err: f64,
    pub terms_used: usize,
    pub pass: bool,
}

impl IdentityReport {
    pub fn new(
        id: &str,
        params: Vec<(String, C64)>,
        lhs: C64,
        rhs: C64,
        terms_used: usize,
        tol: f64,
    ) -> IdentityReport {
        let abs_err = (lhs - rhs).abs();
        let rel_err = abs_err / lhs.abs().max(rhs.abs()).max(EPS_FLOOR);
        IdentityReport {
            id: id.to_string(),
            params,
            lhs,
            rhs,
            abs_err,
            rel_err,
            terms_used,
            pass: rel_err <= tol,
        }
    }

    pub fn to_jv(&self) -> Jv {
        Jv::obj(vec![
            ("id", Jv::Str(self.id.clone())),
            (
                "params",
                Jv::Obj(
                    self.params
                        .iter()
                        .map(|(k, v)| (k.clone(), Jv::complex(*v)))
                        .collect(),
                ),
            ),
            ("lhs", Jv::complex(self.lhs)),
            ("rhs", Jv::complex(self.rhs)),
            ("abs_err", Jv::F(self.abs_err)),
            ("rel_err", Jv::F(self.rel_err)),
            ("terms_used", Jv::Int(self.terms_used as i64)),
            ("pass", Jv::Bool(self.pass)),
        ])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rel_err_floor_handles_double_zero() {
        let r = IdentityReport::new("z", vec![], C64::zero(), C64::zero(), 1, 1e-9);
        assert!(r.pass);
        assert_eq!(r.abs_err, 0.0);
    }
}
