//! Unfolding: lowering any policy into a loop-free, vector-free program of
//! scalar instructions, so that every class is measured in one common
//! representation.
//!
//! The lowering replays the folded inference of [`crate::policy`] operation
//! by operation (same products, same left-to-right sums, same strict-greater
//! argmax), so interpretation is bit-identical to `Policy::predict`.

mod emit;
mod interp;

use std::collections::HashSet;

use crate::error::{Error, Result};
use crate::policy::{Dense, Leaf, Node, Policy, PolicyClass, Split, Task, Tree};

pub use emit::{emit_text, format_float, DEFAULT_FLOAT_DIGITS};
pub use interp::ExecTrace;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Reg(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Flag(pub u32);

/// What the single executed `SetAction` hands to the environment.
#[derive(Debug, Clone, PartialEq)]
pub enum ActionOut {
    Index(usize),
    /// Register holding a discrete action index.
    Reg(Reg),
    /// Continuous action vector.
    Regs(Vec<Reg>),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Instr {
    LoadInput {
        dst: Reg,
        index: usize,
    },
    Const {
        dst: Reg,
        value: f64,
    },
    Mul {
        dst: Reg,
        a: Reg,
        b: Reg,
    },
    Add {
        dst: Reg,
        a: Reg,
        b: Reg,
    },
    Relu {
        dst: Reg,
        src: Reg,
    },
    Mov {
        dst: Reg,
        src: Reg,
    },
    CmpGt {
        flag: Flag,
        a: Reg,
        b: Reg,
    },
    CmpLe {
        flag: Flag,
        a: Reg,
        b: Reg,
    },
    If {
        flag: Flag,
        then: Vec<Instr>,
        otherwise: Vec<Instr>,
    },
    SetAction(ActionOut),
}

impl Instr {
    fn dst(&self) -> Option<Reg> {
        match self {
            Instr::LoadInput { dst, .. }
            | Instr::Const { dst, .. }
            | Instr::Mul { dst, .. }
            | Instr::Add { dst, .. }
            | Instr::Relu { dst, .. }
            | Instr::Mov { dst, .. } => Some(*dst),
            _ => None,
        }
    }

    fn reads(&self) -> Vec<Reg> {
        match self {
            Instr::Mul { a, b, .. }
            | Instr::Add { a, b, .. }
            | Instr::CmpGt { a, b, .. }
            | Instr::CmpLe { a, b, .. } => {
                vec![*a, *b]
            }
            Instr::Relu { src, .. } | Instr::Mov { src, .. } => vec![*src],
            Instr::SetAction(ActionOut::Reg(r)) => vec![*r],
            Instr::SetAction(ActionOut::Regs(rs)) => rs.clone(),
            _ => Vec::new(),
        }
    }
}

/// An unfolded policy: the instruction stream plus its canonical text.
#[derive(Debug, Clone, PartialEq)]
pub struct Program {
    instrs: Vec<Instr>,
    /// Register names; `None` marks a temporary, which is written once,
    /// read once and inlined into its consumer when emitted.
    names: Vec<Option<String>>,
    n_flags: usize,
    state_dim: usize,
    source_class: PolicyClass,
    task: Task,
    text: String,
}

impl Program {
    /// Validates register discipline and renders the canonical text.
    pub fn new(
        instrs: Vec<Instr>,
        names: Vec<Option<String>>,
        n_flags: usize,
        state_dim: usize,
        source_class: PolicyClass,
        task: Task,
    ) -> Result<Program> {
        let mut program = Program {
            instrs,
            names,
            n_flags,
            state_dim,
            source_class,
            task,
            text: String::new(),
        };
        program.validate()?;
        program.text = emit_text(&program, DEFAULT_FLOAT_DIGITS);
        Ok(program)
    }

    pub fn instrs(&self) -> &[Instr] {
        &self.instrs
    }

    pub fn reg_name(&self, r: Reg) -> Option<&str> {
        self.names[r.0 as usize].as_deref()
    }

    pub fn n_regs(&self) -> usize {
        self.names.len()
    }

    pub fn n_flags(&self) -> usize {
        self.n_flags
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn source_class(&self) -> PolicyClass {
        self.source_class
    }

    pub fn task(&self) -> Task {
        self.task
    }

    /// Canonical text at [`DEFAULT_FLOAT_DIGITS`] significant digits.
    pub fn text(&self) -> &str {
        &self.text
    }

    pub fn size_bytes(&self) -> usize {
        self.text.len()
    }

    /// Total number of instructions, nested blocks included.
    pub fn len(&self) -> usize {
        fn count(block: &[Instr]) -> usize {
            block
                .iter()
                .map(|i| match i {
                    Instr::If {
                        then, otherwise, ..
                    } => 1 + count(then) + count(otherwise),
                    _ => 1,
                })
                .sum()
        }
        count(&self.instrs)
    }

    pub fn is_empty(&self) -> bool {
        self.instrs.is_empty()
    }

    /// Number of `If` instructions anywhere in the program.
    pub fn if_count(&self) -> usize {
        fn count(block: &[Instr]) -> usize {
            block
                .iter()
                .map(|i| match i {
                    Instr::If {
                        then, otherwise, ..
                    } => 1 + count(then) + count(otherwise),
                    _ => 0,
                })
                .sum()
        }
        count(&self.instrs)
    }

    fn validate(&self) -> Result<()> {
        let mut temp_writes = vec![0usize; self.names.len()];
        let mut temp_reads = vec![0usize; self.names.len()];
        let mut flag_reads = vec![0usize; self.n_flags];
        let mut written = HashSet::new();
        let mut flags = HashSet::new();
        let per_path = self.check_block(
            &self.instrs,
            &mut written,
            &mut flags,
            &mut temp_writes,
            &mut temp_reads,
            &mut flag_reads,
        )?;
        if per_path != 1 {
            return Err(Error::Validation(format!(
                "{per_path} SetAction per run, expected exactly one"
            )));
        }
        for (i, name) in self.names.iter().enumerate() {
            if name.is_none() && (temp_writes[i] != 1 || temp_reads[i] != 1) {
                return Err(Error::Validation(format!(
                    "temporary r{i} must be written once and read once"
                )));
            }
        }
        if flag_reads.iter().any(|&n| n != 1) {
            return Err(Error::Validation(
                "every flag must be consumed by exactly one If".into(),
            ));
        }
        Ok(())
    }

    /// Checks a block given the registers definitely written before it;
    /// returns the number of `SetAction`s executed on every path through it.
    fn check_block(
        &self,
        block: &[Instr],
        written: &mut HashSet<Reg>,
        flags: &mut HashSet<Flag>,
        temp_writes: &mut [usize],
        temp_reads: &mut [usize],
        flag_reads: &mut [usize],
    ) -> Result<usize> {
        let mut actions = 0;
        for instr in block {
            for r in instr.reads() {
                let idx = r.0 as usize;
                if idx >= self.names.len() || !written.contains(&r) {
                    return Err(Error::Validation(format!(
                        "register r{idx} read before written"
                    )));
                }
                if self.names[idx].is_none() {
                    temp_reads[idx] += 1;
                }
            }
            if let Some(d) = instr.dst() {
                let idx = d.0 as usize;
                if idx >= self.names.len() {
                    return Err(Error::Validation(format!("register r{idx} out of range")));
                }
                if self.names[idx].is_none() {
                    temp_writes[idx] += 1;
                }
                written.insert(d);
            }
            match instr {
                Instr::LoadInput { index, .. } if *index >= self.state_dim => {
                    return Err(Error::Validation(format!("input s[{index}] out of range")));
                }
                Instr::CmpGt { flag, .. } | Instr::CmpLe { flag, .. } => {
                    if flag.0 as usize >= self.n_flags {
                        return Err(Error::Validation("flag out of range".into()));
                    }
                    flags.insert(*flag);
                }
                Instr::If {
                    flag,
                    then,
                    otherwise,
                } => {
                    if !flags.contains(flag) {
                        return Err(Error::Validation("If reads an unset flag".into()));
                    }
                    flag_reads[flag.0 as usize] += 1;
                    let mut w_then = written.clone();
                    let mut f_then = flags.clone();
                    let a = self.check_block(
                        then,
                        &mut w_then,
                        &mut f_then,
                        temp_writes,
                        temp_reads,
                        flag_reads,
                    )?;
                    let mut w_else = written.clone();
                    let mut f_else = flags.clone();
                    let b = self.check_block(
                        otherwise,
                        &mut w_else,
                        &mut f_else,
                        temp_writes,
                        temp_reads,
                        flag_reads,
                    )?;
                    if a != b {
                        return Err(Error::Validation(
                            "branches execute different numbers of SetAction".into(),
                        ));
                    }
                    actions += a;
                    *written = w_then.intersection(&w_else).copied().collect();
                    *flags = f_then.intersection(&f_else).copied().collect();
                }
                Instr::SetAction(_) => actions += 1,
                _ => {}
            }
        }
        Ok(actions)
    }
}

/// Emits instructions while allocating registers and flags.
struct Builder {
    names: Vec<Option<String>>,
    n_flags: usize,
}

impl Builder {
    fn new() -> Builder {
        Builder {
            names: Vec::new(),
            n_flags: 0,
        }
    }

    fn temp(&mut self) -> Reg {
        self.names.push(None);
        Reg(self.names.len() as u32 - 1)
    }

    fn named(&mut self, name: String) -> Reg {
        self.names.push(Some(name));
        Reg(self.names.len() as u32 - 1)
    }

    fn flag(&mut self) -> Flag {
        self.n_flags += 1;
        Flag(self.n_flags as u32 - 1)
    }

    fn constant(&mut self, out: &mut Vec<Instr>, value: f64) -> Reg {
        let dst = self.temp();
        out.push(Instr::Const { dst, value });
        dst
    }

    /// `w0*x0 + w1*x1 + ... [+ bias]` accumulated left to right; the final
    /// result lands in `dst`.
    fn affine(
        &mut self,
        out: &mut Vec<Instr>,
        w: &[f64],
        inputs: &Input<'_>,
        bias: Option<f64>,
        dst: Reg,
    ) {
        let n_terms = w.len() + usize::from(bias.is_some());
        let mut acc: Option<Reg> = None;
        for (j, wj) in w.iter().enumerate() {
            let c = self.constant(out, *wj);
            let x = inputs.read(self, out, j);
            let last = j + 1 == n_terms;
            let prod = if last && acc.is_none() {
                dst
            } else {
                self.temp()
            };
            out.push(Instr::Mul {
                dst: prod,
                a: c,
                b: x,
            });
            acc = Some(match acc {
                None => prod,
                Some(a) => {
                    let sum = if last { dst } else { self.temp() };
                    out.push(Instr::Add {
                        dst: sum,
                        a,
                        b: prod,
                    });
                    sum
                }
            });
        }
        if let Some(b) = bias {
            let c = self.constant(out, b);
            out.push(Instr::Add {
                dst,
                a: acc.expect("at least one weight"),
                b: c,
            });
        }
    }

    /// Sequential argmax over `scores` into a register named `action`.
    fn argmax(&mut self, out: &mut Vec<Instr>, scores: &[Reg]) -> Reg {
        let max_val = self.named("max_val".into());
        let action = self.named("action".into());
        out.push(Instr::Mov {
            dst: max_val,
            src: scores[0],
        });
        out.push(Instr::Const {
            dst: action,
            value: 0.0,
        });
        for (k, &y) in scores.iter().enumerate().skip(1) {
            let flag = self.flag();
            out.push(Instr::CmpGt {
                flag,
                a: y,
                b: max_val,
            });
            let mut then = Vec::new();
            if k + 1 < scores.len() {
                then.push(Instr::Mov {
                    dst: max_val,
                    src: y,
                });
            }
            then.push(Instr::Const {
                dst: action,
                value: k as f64,
            });
            out.push(Instr::If {
                flag,
                then,
                otherwise: Vec::new(),
            });
        }
        action
    }

    fn dense(
        &mut self,
        out: &mut Vec<Instr>,
        layer: &Dense,
        inputs: &Input<'_>,
        names: impl Fn(usize) -> String,
        relu: bool,
    ) -> Vec<Reg> {
        (0..layer.n_out())
            .map(|i| {
                let name = self.named(names(i));
                if relu {
                    let pre = self.temp();
                    self.affine(out, &layer.weights[i], inputs, Some(layer.bias[i]), pre);
                    out.push(Instr::Relu {
                        dst: name,
                        src: pre,
                    });
                } else {
                    self.affine(out, &layer.weights[i], inputs, Some(layer.bias[i]), name);
                }
                name
            })
            .collect()
    }

    fn output(&mut self, out: &mut Vec<Instr>, scores: Vec<Reg>, task: Task) {
        match task {
            Task::Classify => {
                let action = self.argmax(out, &scores);
                out.push(Instr::SetAction(ActionOut::Reg(action)));
            }
            Task::Regress => out.push(Instr::SetAction(ActionOut::Regs(scores))),
        }
    }

    fn leaf(&mut self, out: &mut Vec<Instr>, leaf: &Leaf) {
        match leaf {
            Leaf::Class(a) => out.push(Instr::SetAction(ActionOut::Index(*a))),
            Leaf::Values(v) => {
                let regs = v.iter().map(|x| self.constant(out, *x)).collect();
                out.push(Instr::SetAction(ActionOut::Regs(regs)));
            }
        }
    }

    fn tree<S: Split>(
        &mut self,
        out: &mut Vec<Instr>,
        tree: &Tree<S>,
        node: usize,
        lhs: &impl Fn(&mut Builder, &mut Vec<Instr>, &S) -> (Reg, f64),
    ) {
        match &tree.nodes()[node] {
            Node::Leaf(leaf) => self.leaf(out, leaf),
            Node::Internal { split, left, right } => {
                let (x, threshold) = lhs(self, out, split);
                let t = self.constant(out, threshold);
                let flag = self.flag();
                out.push(Instr::CmpLe { flag, a: x, b: t });
                let mut then = Vec::new();
                self.tree(&mut then, tree, *left, lhs);
                let mut otherwise = Vec::new();
                self.tree(&mut otherwise, tree, *right, lhs);
                out.push(Instr::If {
                    flag,
                    then,
                    otherwise,
                });
            }
        }
    }
}

/// Where an affine map reads its j-th input from.
enum Input<'a> {
    State,
    Regs(&'a [Reg]),
}

impl Input<'_> {
    fn read(&self, b: &mut Builder, out: &mut Vec<Instr>, j: usize) -> Reg {
        match self {
            Input::State => {
                let dst = b.temp();
                out.push(Instr::LoadInput { dst, index: j });
                dst
            }
            Input::Regs(r) => r[j],
        }
    }
}

/// Lowers `policy` into a straight-line [`Program`].
pub fn unfold(policy: &Policy) -> Program {
    let mut b = Builder::new();
    let mut out = Vec::new();
    match policy {
        Policy::Linear(p) => {
            let scores = b.dense(
                &mut out,
                &p.layer,
                &Input::State,
                |k| format!("y{k}"),
                false,
            );
            b.output(&mut out, scores, p.task);
        }
        Policy::ReluMlp(m) => {
            let last = m.layers.len() - 1;
            let mut prev: Vec<Reg> = Vec::new();
            for (l, layer) in m.layers.iter().enumerate() {
                let inputs = if l == 0 {
                    Input::State
                } else {
                    Input::Regs(&prev)
                };
                let regs = if l < last {
                    b.dense(&mut out, layer, &inputs, |i| format!("h{l}_{i}"), true)
                } else {
                    b.dense(&mut out, layer, &inputs, |k| format!("y{k}"), false)
                };
                prev = regs;
            }
            b.output(&mut out, prev, m.task);
        }
        Policy::AxisTree(t) => b.tree(&mut out, t, 0, &|b, out, s| {
            let dst = b.temp();
            out.push(Instr::LoadInput {
                dst,
                index: s.feature,
            });
            (dst, s.threshold)
        }),
        Policy::ObliqueTree(t) => b.tree(&mut out, t, 0, &|b, out, s| {
            let dst = b.temp();
            b.affine(out, &s.weights, &Input::State, None, dst);
            (dst, s.threshold)
        }),
    }
    Program::new(
        out,
        b.names,
        b.n_flags,
        policy.state_dim(),
        policy.class(),
        policy.task(),
    )
    .expect("lowering produces well-formed programs")
}
