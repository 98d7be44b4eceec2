//! Deterministic JSON emitter for certificates.
//!
//! Keys keep insertion order and every float is printed with 17 significant
//! digits (`{:.16e}`), so identical inputs and flags produce byte-identical
//! output.

#[derive(Debug, Clone)]
pub enum J {
    Null,
    Bool(bool),
    Int(i64),
    Num(f64),
    Str(String),
    Arr(Vec<J>),
    Obj(Vec<(String, J)>),
}

impl J {
    pub fn obj() -> Self {
        J::Obj(Vec::new())
    }

    pub fn push(&mut self, key: &str, value: J) {
        match self {
            J::Obj(fields) => fields.push((key.to_string(), value)),
            _ => panic!("push on a non-object"),
        }
    }

    pub fn str(s: impl Into<String>) -> Self {
        J::Str(s.into())
    }

    pub fn opt_num(v: Option<f64>) -> Self {
        v.map_or(J::Null, J::Num)
    }

    pub fn opt_int(v: Option<i64>) -> Self {
        v.map_or(J::Null, J::Int)
    }

    pub fn floats(xs: impl IntoIterator<Item = f64>) -> Self {
        J::Arr(xs.into_iter().map(J::Num).collect())
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        self.write(&mut out, 0);
        out.push('\n');
        out
    }

    fn write(&self, out: &mut String, depth: usize) {
        match self {
            J::Null => out.push_str("null"),
            J::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
            J::Int(i) => out.push_str(&i.to_string()),
            J::Num(x) => {
                assert!(x.is_finite(), "non-finite value in certificate");
                out.push_str(&format!("{x:.16e}"));
            }
            J::Str(s) => {
                out.push('"');
                for c in s.chars() {
                    match c {
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
            J::Arr(items) => {
                if items.is_empty() {
                    out.push_str("[]");
                    return;
                }
                out.push('[');
                for (k, item) in items.iter().enumerate() {
                    if k > 0 {
                        out.push(',');
                    }
                    out.push('\n');
                    indent(out, depth + 1);
                    item.write(out, depth + 1);
                }
                out.push('\n');
                indent(out, depth);
                out.push(']');
            }
            J::Obj(fields) => {
                if fields.is_empty() {
                    out.push_str("{}");
                    return;
                }
                out.push('{');
                for (k, (key, value)) in fields.iter().enumerate() {
                    if k > 0 {
                        out.push(',');
                    }
                    out.push('\n');
                    indent(out, depth + 1);
                    out.push('"');
                    out.push_str(key);
                    out.push_str("\": ");
                    value.write(out, depth + 1);
                }
                out.push('\n');
                indent(out, depth);
                out.push('}');
            }
        }
    }
}

fn indent(out: &mut String, depth: usize) {
    for _ in 0..depth {
        out.push_str("  ");
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn float_format_is_fixed_width() {
        assert_eq!(J::Num(0.5).render().trim(), "5.0000000000000000e-1");
        assert_eq!(J::Num(0.0).render().trim(), "0.0000000000000000e0");
    }

    #[test]
    fn rendering_is_deterministic() {
        let mut a = J::obj();
        a.push("x", J::Num(1.0 / 3.0));
        a.push("y", J::Arr(vec![J::Int(1), J::Null]));
        let mut b = J::obj();
        b.push("x", J::Num(1.0 / 3.0));
        b.push("y", J::Arr(vec![J::Int(1), J::Null]));
        assert_eq!(a.render(), b.render());
    }

    #[test]
    fn float_round_trips_through_text() {
        for &x in &[1.0 / 3.0, 2.0f64.sqrt(), -1e-300, 6.02e23] {
            let s = format!("{x:.16e}");
            let back: f64 = s.parse().unwrap();
            assert_eq!(back.to_bits(), x.to_bits());
        }
    }
}
