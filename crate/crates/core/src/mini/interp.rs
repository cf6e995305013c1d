//! Reference interpreter for mini-IR, used to check that passes preserve
//! return values.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use thiserror::Error;

use super::syntax::{Function, Inst, IntTy, Operand};

/// Upper bound on executed instructions before giving up.
pub const STEP_LIMIT: usize = 100_000;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum InterpError {
    #[error("expected {expected} arguments, got {got}")]
    Arity { expected: usize, got: usize },
    #[error("load from uninitialized slot via '%{0}'")]
    UninitializedLoad(String),
    #[error("value '%{0}' used before it was computed")]
    Unbound(String),
    #[error("branch to unknown block '%{0}'")]
    UnknownBlock(String),
    #[error("block ended without a terminator")]
    FellThrough,
    #[error("operand is not a pointer")]
    NotAPointer,
    #[error("step limit exceeded")]
    StepLimit,
}

#[derive(Debug, Clone, Copy)]
enum Val {
    Int(u64),
    Ptr(usize),
}

/// Runs `f` on `args` (each truncated to its parameter's width) and returns
/// the masked return value, or `None` for a `void` function.
pub fn run(f: &Function, args: &[u64]) -> Result<Option<u64>, InterpError> {
    if args.len() != f.params.len() {
        return Err(InterpError::Arity { expected: f.params.len(), got: args.len() });
    }
    let mut env: BTreeMap<&str, Val> = BTreeMap::new();
    for ((name, ty), a) in f.params.iter().zip(args) {
        env.insert(name, Val::Int(ty.mask(*a)));
    }
    let mut memory: Vec<Option<u64>> = Vec::new();

    let int = |env: &BTreeMap<&str, Val>, op: &Operand, ty: IntTy| -> Result<u64, InterpError> {
        match op {
            Operand::Const(c) => Ok(ty.mask(*c as u64)),
            Operand::Value(n) => match env.get(n.as_str()) {
                Some(Val::Int(v)) => Ok(*v),
                Some(Val::Ptr(_)) => Err(InterpError::NotAPointer),
                None => Err(InterpError::Unbound(n.clone())),
            },
        }
    };
    let ptr = |env: &BTreeMap<&str, Val>, op: &Operand| -> Result<usize, InterpError> {
        match op {
            Operand::Value(n) => match env.get(n.as_str()) {
                Some(Val::Ptr(p)) => Ok(*p),
                Some(Val::Int(_)) => Err(InterpError::NotAPointer),
                None => Err(InterpError::Unbound(n.clone())),
            },
            Operand::Const(_) => Err(InterpError::NotAPointer),
        }
    };

    let mut block = 0usize;
    let mut steps = 0usize;
    loop {
        let mut next: Option<usize> = None;
        for inst in &f.blocks[block].insts {
            steps += 1;
            if steps > STEP_LIMIT {
                return Err(InterpError::StepLimit);
            }
            match inst {
                Inst::Alloca { dest, .. } => {
                    memory.push(None);
                    env.insert(dest, Val::Ptr(memory.len() - 1));
                }
                Inst::Load { dest, ptr: p, .. } => {
                    let slot = ptr(&env, p)?;
                    let v = memory[slot].ok_or_else(|| {
                        InterpError::UninitializedLoad(String::from(p.value_name().unwrap_or("?")))
                    })?;
                    env.insert(dest, Val::Int(v));
                }
                Inst::Store { ty, value, ptr: p } => {
                    let v = int(&env, value, *ty)?;
                    let slot = ptr(&env, p)?;
                    memory[slot] = Some(v);
                }
                Inst::Binary { dest, op, ty, lhs, rhs } => {
                    let v = op.eval(*ty, int(&env, lhs, *ty)?, int(&env, rhs, *ty)?);
                    env.insert(dest, Val::Int(v));
                }
                Inst::Icmp { dest, pred, ty, lhs, rhs } => {
                    let v = pred.eval(*ty, int(&env, lhs, *ty)?, int(&env, rhs, *ty)?);
                    env.insert(dest, Val::Int(u64::from(v)));
                }
                Inst::Br { target } => {
                    next = Some(lookup(f, target)?);
                    break;
                }
                Inst::CondBr { cond, if_true, if_false } => {
                    let c = int(&env, cond, IntTy::I1)?;
                    next = Some(lookup(f, if c == 1 { if_true } else { if_false })?);
                    break;
                }
                Inst::Ret { value } => {
                    return match value {
                        None => Ok(None),
                        Some((ty, v)) => Ok(Some(int(&env, v, *ty)?)),
                    };
                }
            }
        }
        block = next.ok_or(InterpError::FellThrough)?;
    }
}

fn lookup(f: &Function, label: &str) -> Result<usize, InterpError> {
    f.block_index(label).ok_or_else(|| InterpError::UnknownBlock(String::from(label)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mini::syntax::parse_function;

    #[test]
    fn executes_branches_and_memory() {
        let f = parse_function(
            "define i32 @f(i32 %a, i32 %b) {\n%p = alloca i32\n%c = icmp slt i32 %a, %b\nbr i1 %c, label %t, label %e\nt:\nstore i32 %a, i32* %p\nbr label %j\ne:\nstore i32 %b, i32* %p\nbr label %j\nj:\n%m = load i32, i32* %p\n%r = mul i32 %m, -1\nret i32 %r\n}",
        )
        .unwrap();
        // min(a, b) * -1, 32-bit wrapping.
        assert_eq!(run(&f, &[3, 9]).unwrap(), Some(IntTy::I32.mask((-3i64) as u64)));
        assert_eq!(run(&f, &[0xffff_fffe, 1]).unwrap(), Some(2));
    }

    #[test]
    fn uninitialized_load_is_an_error() {
        let f = parse_function("define i32 @f() {\n%p = alloca i32\n%v = load i32, i32* %p\nret i32 %v\n}").unwrap();
        assert!(matches!(run(&f, &[]), Err(InterpError::UninitializedLoad(_))));
    }

    #[test]
    fn infinite_loop_hits_step_limit() {
        let f = parse_function("define void @f() {\nbr label %l\nl:\nbr label %l\n}").unwrap();
        assert_eq!(run(&f, &[]), Err(InterpError::StepLimit));
    }

    #[test]
    fn arity_checked() {
        let f = parse_function("define void @f(i32 %a) {\nret void\n}").unwrap();
        assert_eq!(run(&f, &[]), Err(InterpError::Arity { expected: 1, got: 0 }));
        assert_eq!(run(&f, &[1]), Ok(None));
    }
}
