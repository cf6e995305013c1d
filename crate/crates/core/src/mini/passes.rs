//! The six mini-IR optimization passes.
//!
//! Each pass is deterministic, runs to its own fixpoint and reports whether
//! it changed the function.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;

use super::cfg::Cfg;
use super::syntax::{BinOp, Function, Inst, IntTy, Operand, Pred};

pub const CONSTFOLD: &str = "-constfold";
pub const DCE: &str = "-dce";
pub const MEM2REG: &str = "-mem2reg-lite";
pub const SIMPLIFYCFG: &str = "-simplifycfg-lite";
pub const INSTCOMBINE: &str = "-instcombine-lite";
pub const GVN: &str = "-gvn-lite";

/// Vocabulary order.
pub const PASSES: [&str; 6] = [CONSTFOLD, DCE, MEM2REG, SIMPLIFYCFG, INSTCOMBINE, GVN];

/// One round of the `-Oz` pipeline; the meta-flag runs it twice.
pub const OZ_ROUND: [&str; 6] = [MEM2REG, CONSTFOLD, INSTCOMBINE, GVN, DCE, SIMPLIFYCFG];

/// Runs one named pass. Returns `None` for an unknown name.
pub fn run_pass(name: &str, f: &mut Function) -> Option<bool> {
    Some(match name {
        CONSTFOLD => constfold(f),
        DCE => dce(f),
        MEM2REG => mem2reg(f),
        SIMPLIFYCFG => simplifycfg(f),
        INSTCOMBINE => instcombine(f),
        GVN => gvn(f),
        _ => return None,
    })
}

pub fn run_oz(f: &mut Function) -> bool {
    let mut changed = false;
    for _ in 0..2 {
        for p in OZ_ROUND {
            changed |= run_pass(p, f).expect("pipeline pass exists");
        }
    }
    changed
}

fn replace_uses(f: &mut Function, name: &str, with: &Operand) {
    for block in &mut f.blocks {
        for inst in &mut block.insts {
            for op in inst.operands_mut() {
                if op.value_name() == Some(name) {
                    *op = with.clone();
                }
            }
        }
    }
}

fn use_counts(f: &Function) -> BTreeMap<String, usize> {
    let mut counts = BTreeMap::new();
    for inst in f.insts() {
        for op in inst.operands() {
            if let Some(n) = op.value_name() {
                *counts.entry(String::from(n)).or_insert(0) += 1;
            }
        }
    }
    counts
}

fn remove_positions(f: &mut Function, positions: &BTreeSet<(usize, usize)>) {
    for (bi, block) in f.blocks.iter_mut().enumerate() {
        let mut ii = 0;
        block.insts.retain(|_| {
            let keep = !positions.contains(&(bi, ii));
            ii += 1;
            keep
        });
    }
}

fn find_def<'a>(f: &'a Function, name: &str) -> Option<(usize, usize, &'a Inst)> {
    for (bi, block) in f.blocks.iter().enumerate() {
        for (ii, inst) in block.insts.iter().enumerate() {
            if inst.dest() == Some(name) {
                return Some((bi, ii, inst));
            }
        }
    }
    None
}

/// Literal in its canonical spelling: 0/1 for `i1`, sign-extended otherwise.
fn canonical(ty: IntTy, bits: u64) -> i64 {
    match ty {
        IntTy::I1 => (bits & 1) as i64,
        _ => ty.sext(bits),
    }
}

fn is_literal(op: &Operand, ty: IntTy, value: u64) -> bool {
    op.as_const().is_some_and(|c| ty.mask(c as u64) == value)
}

/// Folds arithmetic and comparisons whose operands are all literals, and
/// turns branches on literal conditions into unconditional branches.
pub fn constfold(f: &mut Function) -> bool {
    let mut changed = false;
    loop {
        let mut folded: Vec<(usize, usize, String, Operand)> = Vec::new();
        for (bi, block) in f.blocks.iter().enumerate() {
            for (ii, inst) in block.insts.iter().enumerate() {
                let lit = |op: &Operand, ty: IntTy| op.as_const().map(|c| ty.mask(c as u64));
                match inst {
                    Inst::Binary { dest, op, ty, lhs, rhs } => {
                        if let (Some(a), Some(b)) = (lit(lhs, *ty), lit(rhs, *ty)) {
                            let v = canonical(*ty, op.eval(*ty, a, b));
                            folded.push((bi, ii, dest.clone(), Operand::Const(v)));
                        }
                    }
                    Inst::Icmp { dest, pred, ty, lhs, rhs } => {
                        if let (Some(a), Some(b)) = (lit(lhs, *ty), lit(rhs, *ty)) {
                            let v = i64::from(pred.eval(*ty, a, b));
                            folded.push((bi, ii, dest.clone(), Operand::Const(v)));
                        }
                    }
                    _ => {}
                }
            }
        }
        let mut branch_changed = false;
        for block in &mut f.blocks {
            if let Some(Inst::CondBr { cond: Operand::Const(c), if_true, if_false }) = block.insts.last() {
                let target = if c & 1 == 1 { if_true.clone() } else { if_false.clone() };
                *block.insts.last_mut().expect("terminator") = Inst::Br { target };
                branch_changed = true;
            }
        }
        if folded.is_empty() && !branch_changed {
            break;
        }
        changed = true;
        let positions = folded.iter().map(|(b, i, _, _)| (*b, *i)).collect();
        remove_positions(f, &positions);
        for (_, _, name, value) in &folded {
            replace_uses(f, name, value);
        }
    }
    changed
}

/// Deletes value-producing instructions with no uses.
pub fn dce(f: &mut Function) -> bool {
    let mut changed = false;
    loop {
        let counts = use_counts(f);
        let mut dead = BTreeSet::new();
        for (bi, block) in f.blocks.iter().enumerate() {
            for (ii, inst) in block.insts.iter().enumerate() {
                if let Some(d) = inst.dest() {
                    if !counts.contains_key(d) {
                        dead.insert((bi, ii));
                    }
                }
            }
        }
        if dead.is_empty() {
            return changed;
        }
        remove_positions(f, &dead);
        changed = true;
    }
}

/// Promotes an alloca to its stored value when it is only loaded and
/// stored, has exactly one store, and that store dominates every load.
pub fn mem2reg(f: &mut Function) -> bool {
    let cfg = Cfg::new(f);
    let allocas: Vec<String> = f
        .insts()
        .filter_map(|i| match i {
            Inst::Alloca { dest, .. } => Some(dest.clone()),
            _ => None,
        })
        .collect();
    let mut changed = false;
    for slot in allocas {
        let me = Operand::Value(slot.clone());
        let mut stores: Vec<(usize, usize, Operand)> = Vec::new();
        let mut loads: Vec<(usize, usize, String)> = Vec::new();
        let mut escapes = false;
        let mut def: Option<(usize, usize)> = None;
        for (bi, block) in f.blocks.iter().enumerate() {
            for (ii, inst) in block.insts.iter().enumerate() {
                match inst {
                    Inst::Alloca { dest, .. } if *dest == slot => def = Some((bi, ii)),
                    Inst::Load { dest, ptr, .. } if *ptr == me => loads.push((bi, ii, dest.clone())),
                    Inst::Store { value, ptr, .. } if *ptr == me && *value != me => {
                        stores.push((bi, ii, value.clone()));
                    }
                    other => escapes |= other.operands().contains(&&me),
                }
            }
        }
        if escapes || stores.len() != 1 {
            continue;
        }
        let (sb, si, value) = stores.pop().expect("one store");
        let dominated = loads
            .iter()
            .all(|(lb, li, _)| if *lb == sb { si < *li } else { cfg.dominates(sb, *lb) });
        if !dominated {
            continue;
        }
        let mut positions: BTreeSet<(usize, usize)> = loads.iter().map(|(b, i, _)| (*b, *i)).collect();
        positions.insert((sb, si));
        positions.insert(def.expect("alloca defined"));
        remove_positions(f, &positions);
        for (_, _, name) in &loads {
            replace_uses(f, name, &value);
        }
        changed = true;
    }
    changed
}

/// Removes unreachable blocks and merges a block into its predecessor when
/// the predecessor ends in an unconditional branch to it and is its only
/// predecessor.
pub fn simplifycfg(f: &mut Function) -> bool {
    let mut changed = false;
    loop {
        let cfg = Cfg::new(f);
        if cfg.reachable.iter().any(|r| !r) {
            let mut i = 0;
            f.blocks.retain(|_| {
                let keep = cfg.reachable[i];
                i += 1;
                keep
            });
            changed = true;
            continue;
        }
        let mut merge: Option<(usize, usize)> = None;
        for (a, block) in f.blocks.iter().enumerate() {
            if let Some(Inst::Br { target }) = block.insts.last() {
                if let Some(b) = f.block_index(target) {
                    if b != a && b != 0 && cfg.preds[b] == [a] {
                        merge = Some((a, b));
                        break;
                    }
                }
            }
        }
        let Some((a, b)) = merge else {
            return changed;
        };
        let absorbed = f.blocks.remove(b);
        let a = if b < a { a - 1 } else { a };
        let target = &mut f.blocks[a].insts;
        target.pop();
        target.extend(absorbed.insts);
        changed = true;
    }
}

fn peephole(f: &Function, inst: &Inst) -> Option<Operand> {
    let Inst::Binary { op, ty, lhs, rhs, .. } = inst else {
        return None;
    };
    match op {
        BinOp::Add | BinOp::Sub if is_literal(rhs, *ty, 0) => Some(lhs.clone()),
        BinOp::Mul if is_literal(rhs, *ty, 1) => Some(lhs.clone()),
        BinOp::Sub if is_literal(lhs, *ty, 0) => {
            let inner = rhs.value_name()?;
            match find_def(f, inner)?.2 {
                Inst::Binary { op: BinOp::Sub, ty: t2, lhs: l2, rhs: r2, .. }
                    if t2 == ty && is_literal(l2, *ty, 0) =>
                {
                    Some(r2.clone())
                }
                _ => None,
            }
        }
        _ => None,
    }
}

/// Peepholes `add x, 0`, `sub x, 0`, `mul x, 1` and `sub 0, (sub 0, x)` to
/// `x`, erasing each rewritten instruction and any pure operand it leaves
/// without uses.
pub fn instcombine(f: &mut Function) -> bool {
    let mut changed = false;
    loop {
        let mut hit: Option<(usize, usize, String, Operand, Vec<String>)> = None;
        'scan: for (bi, block) in f.blocks.iter().enumerate() {
            for (ii, inst) in block.insts.iter().enumerate() {
                if let Some(x) = peephole(f, inst) {
                    let dest = String::from(inst.dest().expect("binary has dest"));
                    let operands = inst.operands().iter().filter_map(|o| o.value_name()).map(String::from).collect();
                    hit = Some((bi, ii, dest, x, operands));
                    break 'scan;
                }
            }
        }
        let Some((bi, ii, dest, x, operands)) = hit else {
            return changed;
        };
        changed = true;
        f.blocks[bi].insts.remove(ii);
        replace_uses(f, &dest, &x);

        // Erase operands this rewrite left dead.
        let mut worklist = operands;
        while let Some(name) = worklist.pop() {
            if use_counts(f).contains_key(&name) {
                continue;
            }
            let Some((db, di, def)) = find_def(f, &name) else { continue };
            if !def.is_pure() {
                continue;
            }
            worklist.extend(def.operands().iter().filter_map(|o| o.value_name()).map(String::from));
            f.blocks[db].insts.remove(di);
        }
    }
}

#[derive(PartialEq, Eq, PartialOrd, Ord)]
enum ExprKey {
    Binary(BinOp, IntTy, Operand, Operand),
    Icmp(Pred, IntTy, Operand, Operand),
}

fn expr_key(inst: &Inst) -> Option<ExprKey> {
    match inst {
        Inst::Binary { op, ty, lhs, rhs, .. } => Some(ExprKey::Binary(*op, *ty, lhs.clone(), rhs.clone())),
        Inst::Icmp { pred, ty, lhs, rhs, .. } => Some(ExprKey::Icmp(*pred, *ty, lhs.clone(), rhs.clone())),
        _ => None,
    }
}

/// Replaces a pure instruction by an earlier identical one in the same
/// block.
pub fn gvn(f: &mut Function) -> bool {
    let mut changed = false;
    loop {
        let mut hit: Option<(usize, usize, String, String)> = None;
        'blocks: for (bi, block) in f.blocks.iter().enumerate() {
            let mut seen: BTreeMap<ExprKey, &str> = BTreeMap::new();
            for (ii, inst) in block.insts.iter().enumerate() {
                let Some(key) = expr_key(inst) else { continue };
                let dest = inst.dest().expect("pure instruction has dest");
                if let Some(first) = seen.get(&key) {
                    hit = Some((bi, ii, String::from(dest), String::from(*first)));
                    break 'blocks;
                }
                seen.insert(key, dest);
            }
        }
        let Some((bi, ii, dup, first)) = hit else {
            return changed;
        };
        f.blocks[bi].insts.remove(ii);
        replace_uses(f, &dup, &Operand::Value(first));
        changed = true;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mini::syntax::parse_function;
    use crate::mini::verify::verify;

    fn apply(pass: &str, src: &str) -> String {
        let mut f = parse_function(src).unwrap();
        verify(&f).unwrap();
        run_pass(pass, &mut f).unwrap();
        verify(&f).unwrap();
        f.print()
    }

    #[test]
    fn constfold_folds_chains_and_branches() {
        let out = apply(
            CONSTFOLD,
            "define i32 @f() {\n%a = add i32 2, 3\n%b = mul i32 %a, 4\n%c = icmp slt i32 %b, 100\nbr i1 %c, label %t, label %e\nt:\nret i32 %b\ne:\nret i32 0\n}",
        );
        assert_eq!(out, "define i32 @f() {\nbr label %t\nt:\nret i32 20\ne:\nret i32 0\n}");
    }

    #[test]
    fn constfold_wraps_at_width() {
        let out = apply(CONSTFOLD, "define i32 @f() {\n%a = add i32 2147483647, 1\nret i32 %a\n}");
        assert_eq!(out, "define i32 @f() {\nret i32 -2147483648\n}");
    }

    #[test]
    fn dce_removes_transitively_dead() {
        let out = apply(
            DCE,
            "define i32 @f(i32 %x) {\n%a = add i32 %x, 1\n%b = mul i32 %a, %a\n%p = alloca i32\nret i32 %x\n}",
        );
        assert_eq!(out, "define i32 @f(i32 %x) {\nret i32 %x\n}");
    }

    #[test]
    fn dce_keeps_stores() {
        let src = "define void @f(i32 %x) {\n%p = alloca i32\nstore i32 %x, i32* %p\nret void\n}";
        assert_eq!(apply(DCE, src), src);
    }

    #[test]
    fn mem2reg_promotes_single_dominating_store() {
        let out = apply(
            MEM2REG,
            "define i32 @f(i32 %x) {\n%p = alloca i32\nstore i32 %x, i32* %p\n%v = load i32, i32* %p\n%w = add i32 %v, %v\nret i32 %w\n}",
        );
        assert_eq!(out, "define i32 @f(i32 %x) {\n%w = add i32 %x, %x\nret i32 %w\n}");
    }

    #[test]
    fn mem2reg_skips_two_stores_and_non_dominating_store() {
        let two = "define i32 @f(i32 %x) {\n%p = alloca i32\nstore i32 %x, i32* %p\nstore i32 1, i32* %p\n%v = load i32, i32* %p\nret i32 %v\n}";
        assert_eq!(apply(MEM2REG, two), two);
        let branchy = "define i32 @f(i1 %c) {\n%p = alloca i32\nbr i1 %c, label %a, label %b\na:\nstore i32 1, i32* %p\nbr label %j\nb:\nbr label %j\nj:\nret i32 0\n}";
        // The store does not dominate anything here but there are no loads, so it is promoted.
        assert_eq!(
            apply(MEM2REG, branchy),
            "define i32 @f(i1 %c) {\nbr i1 %c, label %a, label %b\na:\nbr label %j\nb:\nbr label %j\nj:\nret i32 0\n}"
        );
        let load_elsewhere = "define i32 @f(i1 %c) {\n%p = alloca i32\nbr i1 %c, label %a, label %j\na:\nstore i32 1, i32* %p\nbr label %j\nj:\n%v = load i32, i32* %p\nret i32 %v\n}";
        assert_eq!(apply(MEM2REG, load_elsewhere), load_elsewhere);
    }

    #[test]
    fn simplifycfg_merges_and_prunes() {
        let out = apply(
            SIMPLIFYCFG,
            "define i32 @f(i32 %x) {\nbr label %a\na:\n%y = add i32 %x, 1\nbr label %b\nb:\nret i32 %y\ndead:\nret i32 0\n}",
        );
        assert_eq!(out, "define i32 @f(i32 %x) {\n%y = add i32 %x, 1\nret i32 %y\n}");
    }

    #[test]
    fn simplifycfg_keeps_join_with_two_preds() {
        let src = "define i32 @f(i1 %c) {\nbr i1 %c, label %a, label %b\na:\nbr label %j\nb:\nbr label %j\nj:\nret i32 0\n}";
        assert_eq!(apply(SIMPLIFYCFG, src), src);
    }

    #[test]
    fn instcombine_double_negation_removes_two() {
        // The pattern of a failed instcombine translation: sub 0, (sub 0, x).
        let src = "define void @f(i64 %a) {\n%p = alloca i64\n%t2 = sub i64 0, %a\n%t3 = sub i64 0, %t2\nstore i64 %t3, i64* %p\nret void\n}";
        let out = apply(INSTCOMBINE, src);
        assert_eq!(out, "define void @f(i64 %a) {\n%p = alloca i64\nstore i64 %a, i64* %p\nret void\n}");
        let before = parse_function(src).unwrap().instruction_count();
        let after = parse_function(&out).unwrap().instruction_count();
        assert_eq!(before - after, 2);
    }

    #[test]
    fn instcombine_identities_reach_fixpoint() {
        let src = "define i32 @f(i32 %x) {\n%a = add i32 %x, 0\n%b = mul i32 %a, 1\n%c = sub i32 %b, 0\nret i32 %c\n}";
        let once = apply(INSTCOMBINE, src);
        assert_eq!(once, "define i32 @f(i32 %x) {\nret i32 %x\n}");
        assert_eq!(apply(INSTCOMBINE, &once), once);
    }

    #[test]
    fn instcombine_leaves_preexisting_dead_code() {
        let src = "define i32 @f(i32 %x) {\n%d = mul i32 %x, 7\n%a = add i32 %x, 0\nret i32 %a\n}";
        assert_eq!(apply(INSTCOMBINE, src), "define i32 @f(i32 %x) {\n%d = mul i32 %x, 7\nret i32 %x\n}");
    }

    #[test]
    fn gvn_dedups_within_block_only() {
        let out = apply(
            GVN,
            "define i32 @f(i32 %x) {\n%a = add i32 %x, 3\n%b = add i32 %x, 3\n%c = mul i32 %a, %b\n%d = mul i32 %a, %a\nbr label %n\nn:\n%e = add i32 %x, 3\n%r = add i32 %d, %e\nret i32 %r\n}",
        );
        assert_eq!(
            out,
            "define i32 @f(i32 %x) {\n%a = add i32 %x, 3\n%c = mul i32 %a, %a\nbr label %n\nn:\n%e = add i32 %x, 3\n%r = add i32 %c, %e\nret i32 %r\n}"
        );
    }

    #[test]
    fn oz_runs_two_rounds() {
        let mut f = parse_function(
            "define i32 @f(i32 %x) {\n%p = alloca i32\nstore i32 5, i32* %p\n%v = load i32, i32* %p\n%c = icmp slt i32 %v, 10\nbr i1 %c, label %t, label %e\nt:\n%r = add i32 %x, 0\nret i32 %r\ne:\nret i32 0\n}",
        )
        .unwrap();
        assert!(run_oz(&mut f));
        assert_eq!(f.print(), "define i32 @f(i32 %x) {\nret i32 %x\n}");
    }
}
