use std::collections::HashMap;

use super::{ActionOut, Flag, Instr, Program, Reg};

pub const DEFAULT_FLOAT_DIGITS: usize = 6;
const INDENT: &str = "    ";

/// `%g`-style formatting with `digits` significant digits.
pub fn format_float(v: f64, digits: usize) -> String {
    let digits = digits.max(1);
    if v == 0.0 {
        return "0".into();
    }
    if !v.is_finite() {
        return format!("{v}");
    }
    let sci = format!("{:.*e}", digits - 1, v);
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if exp < -4 || exp >= digits as i32 {
        let mantissa = trim_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{mantissa}e{sign}{:02}", exp.abs())
    } else {
        let decimals = (digits as i32 - 1 - exp).max(0) as usize;
        trim_zeros(&format!("{v:.decimals$}")).to_string()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

#[derive(Clone, Copy, PartialEq, PartialOrd)]
enum Prec {
    Sum,
    Product,
    Atom,
}

struct Emitter<'a> {
    program: &'a Program,
    digits: usize,
    temps: HashMap<Reg, &'a Instr>,
    conds: HashMap<Flag, &'a Instr>,
    out: String,
}

impl<'a> Emitter<'a> {
    fn collect(&mut self, block: &'a [Instr]) {
        for instr in block {
            match instr {
                Instr::CmpGt { flag, .. } | Instr::CmpLe { flag, .. } => {
                    self.conds.insert(*flag, instr);
                }
                Instr::If {
                    then, otherwise, ..
                } => {
                    self.collect(then);
                    self.collect(otherwise);
                }
                _ => {
                    if let Some(d) = instr.dst() {
                        if self.program.reg_name(d).is_none() {
                            self.temps.insert(d, instr);
                        }
                    }
                }
            }
        }
    }

    fn expr(&self, r: Reg) -> (String, Prec) {
        if let Some(name) = self.program.reg_name(r) {
            return (name.to_string(), Prec::Atom);
        }
        self.rhs(self.temps[&r])
    }

    fn operand(&self, r: Reg, min: Prec) -> String {
        let (s, p) = self.expr(r);
        if p < min {
            format!("({s})")
        } else {
            s
        }
    }

    fn rhs(&self, instr: &Instr) -> (String, Prec) {
        match instr {
            Instr::LoadInput { index, .. } => (format!("s[{index}]"), Prec::Atom),
            Instr::Const { value, .. } => {
                let s = format_float(*value, self.digits);
                let p = if s.starts_with('-') {
                    Prec::Product
                } else {
                    Prec::Atom
                };
                (s, p)
            }
            Instr::Mul { a, b, .. } => (
                format!(
                    "{}*{}",
                    self.operand(*a, Prec::Product),
                    self.operand(*b, Prec::Atom)
                ),
                Prec::Product,
            ),
            Instr::Add { a, b, .. } => {
                let left = self.operand(*a, Prec::Sum);
                let right = self.operand(*b, Prec::Product);
                let s = match right.strip_prefix('-') {
                    Some(rest) => format!("{left} - {rest}"),
                    None => format!("{left} + {right}"),
                };
                (s, Prec::Sum)
            }
            Instr::Relu { src, .. } => (format!("max(0, {})", self.expr(*src).0), Prec::Atom),
            Instr::Mov { src, .. } => self.expr(*src),
            _ => unreachable!("not a value instruction"),
        }
    }

    fn line(&mut self, depth: usize, text: &str) {
        for _ in 0..depth {
            self.out.push_str(INDENT);
        }
        self.out.push_str(text);
        self.out.push('\n');
    }

    fn block(&mut self, block: &'a [Instr], depth: usize) {
        for instr in block {
            match instr {
                Instr::CmpGt { .. } | Instr::CmpLe { .. } => {}
                Instr::If {
                    flag,
                    then,
                    otherwise,
                } => {
                    let cond = match self.conds[flag] {
                        Instr::CmpGt { a, b, .. } => {
                            format!("{} > {}", self.expr(*a).0, self.expr(*b).0)
                        }
                        Instr::CmpLe { a, b, .. } => {
                            format!("{} <= {}", self.expr(*a).0, self.expr(*b).0)
                        }
                        _ => unreachable!(),
                    };
                    self.line(depth, &format!("if {cond}:"));
                    self.block(then, depth + 1);
                    if !otherwise.is_empty() {
                        self.line(depth, "else:");
                        self.block(otherwise, depth + 1);
                    }
                }
                Instr::SetAction(out) => {
                    let text = match out {
                        ActionOut::Index(a) => Some(format!("action = {a}")),
                        ActionOut::Reg(r) => match self.program.reg_name(*r) {
                            Some("action") => None,
                            _ => Some(format!("action = {}", self.expr(*r).0)),
                        },
                        ActionOut::Regs(rs) => {
                            let parts: Vec<String> = rs.iter().map(|r| self.expr(*r).0).collect();
                            Some(format!("action = [{}]", parts.join(", ")))
                        }
                    };
                    if let Some(t) = text {
                        self.line(depth, &t);
                    }
                }
                _ => {
                    let dst = instr.dst().expect("value instruction");
                    if let Some(name) = self.program.reg_name(dst) {
                        let line = format!("{name} = {}", self.rhs(instr).0);
                        self.line(depth, &line);
                    }
                }
            }
        }
    }
}

/// Renders `program` as indented straight-line text: temporaries are
/// inlined into their consumer, constants carry `digits` significant
/// digits and `If` bodies are indented four spaces.
pub fn emit_text(program: &Program, digits: usize) -> String {
    let mut e = Emitter {
        program,
        digits,
        temps: HashMap::new(),
        conds: HashMap::new(),
        out: String::new(),
    };
    e.collect(&program.instrs);
    e.block(&program.instrs, 0);
    e.out
}
