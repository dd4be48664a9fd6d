use super::{ActionOut, Instr, Program};
use crate::env::Action;
use crate::error::{Error, Result};
use crate::policy::relu;

/// Execution counts from one traced run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ExecTrace {
    /// Instructions executed, `If` headers included.
    pub instructions: usize,
    pub branches: usize,
}

struct Machine<'a> {
    state: &'a [f64],
    regs: Vec<f64>,
    flags: Vec<bool>,
    action: Option<Action>,
}

impl Machine<'_> {
    fn run<const TRACE: bool>(&mut self, block: &[Instr], trace: &mut ExecTrace) {
        for instr in block {
            if TRACE {
                trace.instructions += 1;
            }
            match instr {
                Instr::LoadInput { dst, index } => self.regs[dst.0 as usize] = self.state[*index],
                Instr::Const { dst, value } => self.regs[dst.0 as usize] = *value,
                Instr::Mul { dst, a, b } => {
                    self.regs[dst.0 as usize] = self.regs[a.0 as usize] * self.regs[b.0 as usize]
                }
                Instr::Add { dst, a, b } => {
                    self.regs[dst.0 as usize] = self.regs[a.0 as usize] + self.regs[b.0 as usize]
                }
                Instr::Relu { dst, src } => {
                    self.regs[dst.0 as usize] = relu(self.regs[src.0 as usize])
                }
                Instr::Mov { dst, src } => self.regs[dst.0 as usize] = self.regs[src.0 as usize],
                Instr::CmpGt { flag, a, b } => {
                    self.flags[flag.0 as usize] = self.regs[a.0 as usize] > self.regs[b.0 as usize]
                }
                Instr::CmpLe { flag, a, b } => {
                    self.flags[flag.0 as usize] = self.regs[a.0 as usize] <= self.regs[b.0 as usize]
                }
                Instr::If {
                    flag,
                    then,
                    otherwise,
                } => {
                    if TRACE {
                        trace.branches += 1;
                    }
                    if self.flags[flag.0 as usize] {
                        self.run::<TRACE>(then, trace);
                    } else {
                        self.run::<TRACE>(otherwise, trace);
                    }
                }
                Instr::SetAction(out) => {
                    self.action = Some(match out {
                        ActionOut::Index(a) => Action::Discrete(*a),
                        ActionOut::Reg(r) => Action::Discrete(self.regs[r.0 as usize] as usize),
                        ActionOut::Regs(rs) => {
                            Action::Continuous(rs.iter().map(|r| self.regs[r.0 as usize]).collect())
                        }
                    })
                }
            }
        }
    }
}

impl Program {
    fn execute<const TRACE: bool>(&self, state: &[f64]) -> Result<(Action, ExecTrace)> {
        if state.len() != self.state_dim {
            return Err(Error::Shape {
                expected: self.state_dim,
                got: state.len(),
            });
        }
        let mut m = Machine {
            state,
            regs: vec![0.0; self.names.len()],
            flags: vec![false; self.n_flags],
            action: None,
        };
        let mut trace = ExecTrace::default();
        m.run::<TRACE>(&self.instrs, &mut trace);
        // Validation guarantees exactly one SetAction on every path.
        Ok((m.action.expect("validated program sets an action"), trace))
    }

    /// Runs the program on one state.
    pub fn interpret(&self, state: &[f64]) -> Result<Action> {
        self.execute::<false>(state).map(|(a, _)| a)
    }

    pub fn interpret_traced(&self, state: &[f64]) -> Result<(Action, ExecTrace)> {
        self.execute::<true>(state)
    }
}
