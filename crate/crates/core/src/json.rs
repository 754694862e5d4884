//! Deterministic JSON emission: field order fixed by construction, floats
//! printed with 17 significant digits so identical runs produce identical
//! bytes.

use crate::num::C64;

#[derive(Clone, Debug)]
pub enum Jv {
    Null,
    Bool(bool),
    Int(i64),
    F(f64),
    Str(String),
    Arr(Vec<Jv>),
    Obj(Vec<(String, Jv)>),
}

impl Jv {
    pub fn obj(fields: Vec<(&str, Jv)>) -> Jv {
        Jv::Obj(fields.into_iter().map(|(k, v)| (k.to_string(), v)).collect())
    }

    pub fn complex(z: C64) -> Jv {
        Jv::obj(vec![("re", Jv::F(z.re)), ("im", Jv::F(z.im))])
    }

    fn write(&self, out: &mut String) {
        match self {
            Jv::Null => out.push_str("null"),
            Jv::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
            Jv::Int(n) => out.push_str(&n.to_string()),
            Jv::F(x) => {
                if x.is_finite() {
                    out.push_str(&format!("{x:.16e}"));
                } else {
                    out.push_str("null");
                }
            }
            Jv::Str(s) => {
                out.push('"');
                for ch in s.chars() {
                    match ch {
                        '"' => out.push_str("\\\""),
                        '\\' => out.push_str("\\\\"),
                        '\n' => out.push_str("\\n"),
                        '\t' => out.push_str("\\t"),
                        '\r' => out.push_str("\\r"),
                        c if (c as u32) < 0x20 => out.push_str(&format!("\\u{:04x}", c as u32)),
                        c => out.push(c),
                    }
                }
                out.push('"');
            }
            Jv::Arr(items) => {
                out.push('[');
                for (i, item) in items.iter().enumerate() {
                    if i > 0 {
                        out.push(',');
                    }
                    item.write(out);
                }
                out.push(']');
            }
            Jv::Obj(fields) => {
                out.push('{');
                for (i, (k, v)) in fields.iter().enumerate() {
                    if i > 0 {
                        out.push(',');
                    }
                    Jv::Str(k.clone()).write(out);
                    out.push(':');
                    v.write(out);
                }
                out.push('}');
            }
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = String::new();
        self.write(&mut s);
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stable_formatting() {
        let v = Jv::obj(vec![
            ("id", Jv::Str("x".into())),
            ("val", Jv::F(0.1)),
            ("n", Jv::Int(-3)),
            ("arr", Jv::Arr(vec![Jv::Bool(true), Jv::Null])),
        ]);
        assert_eq!(
            v.to_json(),
            "{\"id\":\"x\",\"val\":1.0000000000000001e-1,\"n\":-3,\"arr\":[true,null]}"
        );
    }
}
