use std::collections::HashMap;

use super::{apply_binary, apply_powi, apply_unary, BinaryOp, EvalError, Expr, Node, UnaryOp};

#[derive(Debug, Clone, Copy)]
enum Instr {
    Const(f64),
    Var(usize),
    Unary(UnaryOp, u32),
    Binary(BinaryOp, u32, u32),
    Powi(u32, i32),
}

/// A set of expressions flattened into a straight-line program.
///
/// Shared nodes across all outputs are evaluated once per call.
#[derive(Debug, Clone)]
pub struct Tape {
    instrs: Vec<Instr>,
    outputs: Vec<u32>,
    min_dim: usize,
}

impl Tape {
    pub fn compile(exprs: &[Expr]) -> Self {
        let mut builder = Builder {
            instrs: Vec::new(),
            slots: HashMap::new(),
            min_dim: 0,
        };
        let outputs = exprs.iter().map(|e| builder.visit(e)).collect();
        Tape {
            instrs: builder.instrs,
            outputs,
            min_dim: builder.min_dim,
        }
    }

    pub fn len(&self) -> usize {
        self.outputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.outputs.is_empty()
    }

    /// Evaluate every output, writing into `out` (resized to the output count).
    pub fn eval_into(&self, point: &[f64], out: &mut Vec<f64>) -> Result<(), EvalError> {
        if point.len() < self.min_dim {
            return Err(EvalError::Arity {
                index: self.min_dim - 1,
                dim: point.len(),
            });
        }
        let mut regs = Vec::with_capacity(self.instrs.len());
        for instr in &self.instrs {
            let v = match *instr {
                Instr::Const(c) => c,
                Instr::Var(i) => point[i],
                Instr::Unary(op, a) => apply_unary(op, regs[a as usize])?,
                Instr::Binary(op, a, b) => apply_binary(op, regs[a as usize], regs[b as usize])?,
                Instr::Powi(a, n) => apply_powi(regs[a as usize], n)?,
            };
            regs.push(v);
        }
        out.clear();
        out.extend(self.outputs.iter().map(|&o| regs[o as usize]));
        Ok(())
    }

    pub fn eval(&self, point: &[f64]) -> Result<Vec<f64>, EvalError> {
        let mut out = Vec::with_capacity(self.outputs.len());
        self.eval_into(point, &mut out)?;
        Ok(out)
    }

    /// Evaluate a single-output tape.
    pub fn eval_one(&self, point: &[f64]) -> Result<f64, EvalError> {
        Ok(self.eval(point)?[0])
    }
}

struct Builder {
    instrs: Vec<Instr>,
    slots: HashMap<*const Node, u32>,
    min_dim: usize,
}

impl Builder {
    fn push(&mut self, instr: Instr) -> u32 {
        self.instrs.push(instr);
        (self.instrs.len() - 1) as u32
    }

    fn visit(&mut self, e: &Expr) -> u32 {
        if let Some(&slot) = self.slots.get(&e.key()) {
            return slot;
        }
        let slot = match e.node() {
            Node::Const(c) => self.push(Instr::Const(*c)),
            Node::Var(i) => {
                self.min_dim = self.min_dim.max(i + 1);
                self.push(Instr::Var(*i))
            }
            Node::Unary(op, a) => {
                let a = self.visit(a);
                self.push(Instr::Unary(*op, a))
            }
            Node::Binary(op, a, b) => {
                let a = self.visit(a);
                let b = self.visit(b);
                self.push(Instr::Binary(*op, a, b))
            }
            Node::Powi(a, n) => {
                let a = self.visit(a);
                self.push(Instr::Powi(a, *n))
            }
        };
        self.slots.insert(e.key(), slot);
        slot
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shared_outputs() {
        let r2 = Expr::var(0).powi(2) + Expr::var(1).powi(2);
        let tape = Tape::compile(&[r2.clone(), r2.sqrt(), Expr::constant(7.0)]);
        assert_eq!(tape.eval(&[3.0, 4.0]).unwrap(), vec![25.0, 5.0, 7.0]);
    }

    #[test]
    fn empty_tape() {
        let tape = Tape::compile(&[]);
        assert!(tape.is_empty());
        assert!(tape.eval(&[]).unwrap().is_empty());
    }
}
