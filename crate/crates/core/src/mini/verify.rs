//! Structural, type and dominance checks for mini-IR functions. Diagnostics
//! use the same wording as the LLVM parser/verifier so one classification
//! table serves both backends.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;

use super::cfg::Cfg;
use super::syntax::{Function, Inst, IntTy, Operand};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum ValueTy {
    Int(IntTy),
    Ptr(IntTy),
    Label,
}

impl ValueTy {
    fn name(self) -> String {
        match self {
            ValueTy::Int(t) => String::from(t.name()),
            ValueTy::Ptr(t) => format!("{}*", t.name()),
            ValueTy::Label => String::from("label"),
        }
    }
}

/// Where a local value is defined: `None` for parameters and labels.
type DefSite = Option<(usize, usize)>;

fn define<'a>(
    env: &mut BTreeMap<&'a str, (ValueTy, DefSite)>,
    name: &'a str,
    ty: ValueTy,
    site: DefSite,
) -> Result<(), String> {
    if env.insert(name, (ty, site)).is_some() {
        Err(format!("multiple definition of local value named '{name}'"))
    } else {
        Ok(())
    }
}

pub fn verify(f: &Function) -> Result<(), String> {
    let mut env: BTreeMap<&str, (ValueTy, DefSite)> = BTreeMap::new();
    for (name, ty) in &f.params {
        define(&mut env, name, ValueTy::Int(*ty), None)?;
    }
    for (bi, block) in f.blocks.iter().enumerate() {
        if let Some(label) = &block.label {
            define(&mut env, label, ValueTy::Label, None)?;
        }
        for (ii, inst) in block.insts.iter().enumerate() {
            let ty = match inst {
                Inst::Alloca { ty, .. } => ValueTy::Ptr(*ty),
                Inst::Load { ty, .. } | Inst::Binary { ty, .. } => ValueTy::Int(*ty),
                Inst::Icmp { .. } => ValueTy::Int(IntTy::I1),
                _ => continue,
            };
            let dest = inst.dest().expect("value-producing instruction");
            define(&mut env, dest, ty, Some((bi, ii)))?;
        }
    }

    for (bi, block) in f.blocks.iter().enumerate() {
        let name = block.label.as_deref().unwrap_or("entry");
        match block.insts.last() {
            Some(last) if last.is_terminator() => {}
            _ => return Err(format!("basic block '{name}' does not have terminator")),
        }
        if block.insts[..block.insts.len() - 1].iter().any(Inst::is_terminator) {
            return Err(format!("instruction after terminator in basic block '{name}'"));
        }
        if bi > 0 && block.label.is_none() {
            return Err(format!("basic block {bi} has no label"));
        }
        for target in block.insts.last().into_iter().flat_map(Inst::successors) {
            match env.get(target) {
                None => return Err(format!("use of undefined value '%{target}'")),
                Some((ValueTy::Label, _)) => {}
                Some((t, _)) => {
                    return Err(format!("'%{target}' defined with type '{}' but expected 'label'", t.name()))
                }
            }
        }
    }

    let cfg = Cfg::new(f);
    if !cfg.preds[0].is_empty() {
        return Err(String::from("entry block to function must not have predecessors"));
    }

    for (bi, block) in f.blocks.iter().enumerate() {
        for (ii, inst) in block.insts.iter().enumerate() {
            let expected: alloc::vec::Vec<(&Operand, ValueTy)> = match inst {
                Inst::Alloca { .. } | Inst::Br { .. } => alloc::vec![],
                Inst::Load { ty, ptr, .. } => alloc::vec![(ptr, ValueTy::Ptr(*ty))],
                Inst::Store { ty, value, ptr } => {
                    alloc::vec![(value, ValueTy::Int(*ty)), (ptr, ValueTy::Ptr(*ty))]
                }
                Inst::Binary { ty, lhs, rhs, .. } | Inst::Icmp { ty, lhs, rhs, .. } => {
                    alloc::vec![(lhs, ValueTy::Int(*ty)), (rhs, ValueTy::Int(*ty))]
                }
                Inst::CondBr { cond, .. } => alloc::vec![(cond, ValueTy::Int(IntTy::I1))],
                Inst::Ret { value } => {
                    let declared = value.as_ref().map(|(t, _)| *t);
                    if declared != f.ret {
                        return Err(format!(
                            "value doesn't match function result type '{}'",
                            f.ret.map_or("void", IntTy::name)
                        ));
                    }
                    value.iter().map(|(t, v)| (v, ValueTy::Int(*t))).collect()
                }
            };
            for (op, want) in expected {
                match op {
                    Operand::Const(c) => match want {
                        ValueTy::Int(t) if t.accepts(*c) => {}
                        ValueTy::Int(t) => {
                            return Err(format!("integer constant out of range for type '{}'", t.name()))
                        }
                        other => {
                            return Err(format!(
                                "constant '{c}' defined with type 'i64' but expected '{}'",
                                other.name()
                            ))
                        }
                    },
                    Operand::Value(name) => {
                        let Some((have, site)) = env.get(name.as_str()) else {
                            return Err(format!("use of undefined value '%{name}'"));
                        };
                        if *have != want {
                            return Err(format!(
                                "'%{name}' defined with type '{}' but expected '{}'",
                                have.name(),
                                want.name()
                            ));
                        }
                        if let Some((db, di)) = *site {
                            if cfg.reachable[bi] {
                                let ok = if db == bi { di < ii } else { cfg.dominates(db, bi) };
                                if !ok {
                                    return Err(format!("instruction does not dominate all uses: '%{name}'"));
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mini::syntax::parse_function;

    fn check(src: &str) -> Result<(), String> {
        verify(&parse_function(src).expect("parses"))
    }

    #[test]
    fn accepts_valid_function() {
        check(
            "define i32 @f(i32 %a) {\n%p = alloca i32\nstore i32 %a, i32* %p\n%v = load i32, i32* %p\n%c = icmp eq i32 %v, 0\nbr i1 %c, label %z, label %n\nz:\nret i32 0\nn:\nret i32 %v\n}",
        )
        .unwrap();
    }

    #[test]
    fn reports_errors_in_llvm_wording() {
        let e = check("define i1 @f(i32 %a) {\n%x = add i32 %a, 1\nret i1 %x\n}").unwrap_err();
        assert_eq!(e, "'%x' defined with type 'i32' but expected 'i1'");

        let e = check("define i32 @f() {\nret i32 %nope\n}").unwrap_err();
        assert_eq!(e, "use of undefined value '%nope'");

        let e = check("define i32 @f(i32 %a) {\n%a = add i32 1, 2\nret i32 %a\n}").unwrap_err();
        assert!(e.starts_with("multiple definition of local value"));

        let e = check("define i32 @f() {\n%y = add i32 %x, 1\n%x = add i32 1, 1\nret i32 %y\n}").unwrap_err();
        assert!(e.contains("does not dominate all uses"));

        let e = check("define i1 @f() {\nret i1 2\n}").unwrap_err();
        assert!(e.contains("constant out of range"));

        let e = check("define void @f() {\nret i32 0\n}").unwrap_err();
        assert!(e.contains("doesn't match function result type"));

        let e = check("define void @f() {\nbr label %missing\n}").unwrap_err();
        assert_eq!(e, "use of undefined value '%missing'");

        let e = check("define void @f() {\n%x = add i32 1, 1\n}").unwrap_err();
        assert!(e.contains("does not have terminator"));

        let e = check("define void @f() {\nret void\nret void\n}").unwrap_err();
        assert!(e.contains("after terminator"));

        let e = check("define void @f() {\ne:\nbr label %e\n}").unwrap_err();
        assert!(e.contains("must not have predecessors"));
    }

    #[test]
    fn cross_block_dominance() {
        let diamond_use = "define i32 @f(i1 %c) {\nbr i1 %c, label %a, label %b\na:\n%x = add i32 1, 2\nbr label %j\nb:\nbr label %j\nj:\nret i32 %x\n}";
        assert!(check(diamond_use).unwrap_err().contains("does not dominate"));

        let dominated = "define i32 @f(i1 %c) {\n%x = add i32 1, 2\nbr i1 %c, label %a, label %b\na:\nret i32 %x\nb:\nret i32 %x\n}";
        check(dominated).unwrap();

        // Uses in unreachable code are not dominance-checked.
        let unreachable = "define i32 @f() {\nret i32 0\ndead:\nret i32 %y\nlater:\n%y = add i32 1, 1\nbr label %dead\n}";
        check(unreachable).unwrap();
    }
}
