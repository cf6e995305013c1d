//! Mini-IR data model, parser and printer.
//!
//! The printed form is already normalized text, so a printed function can be
//! fed straight back into [`crate::ir::normalize`] and the instruction
//! counter.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt::Write as _;

use crate::ir::{normalize, tokenize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum IntTy {
    I1,
    I32,
    I64,
}

impl IntTy {
    pub fn bits(self) -> u32 {
        match self {
            IntTy::I1 => 1,
            IntTy::I32 => 32,
            IntTy::I64 => 64,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            IntTy::I1 => "i1",
            IntTy::I32 => "i32",
            IntTy::I64 => "i64",
        }
    }

    fn parse(tok: &str) -> Option<IntTy> {
        match tok {
            "i1" => Some(IntTy::I1),
            "i32" => Some(IntTy::I32),
            "i64" => Some(IntTy::I64),
            _ => None,
        }
    }

    /// Truncates to the type's width.
    pub fn mask(self, v: u64) -> u64 {
        match self {
            IntTy::I64 => v,
            t => v & ((1u64 << t.bits()) - 1),
        }
    }

    /// Sign-extends a value of this width to 64 bits.
    pub fn sext(self, v: u64) -> i64 {
        let shift = 64 - self.bits();
        ((self.mask(v) << shift) as i64) >> shift
    }

    /// Whether a literal is accepted for this type: either the signed or the
    /// unsigned range of the width.
    pub fn accepts(self, c: i64) -> bool {
        match self {
            IntTy::I1 => c == 0 || c == 1,
            IntTy::I32 => (i64::from(i32::MIN)..=i64::from(u32::MAX)).contains(&c),
            IntTy::I64 => true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Operand {
    Value(String),
    Const(i64),
}

impl Operand {
    pub fn value_name(&self) -> Option<&str> {
        match self {
            Operand::Value(n) => Some(n),
            Operand::Const(_) => None,
        }
    }

    pub fn as_const(&self) -> Option<i64> {
        match self {
            Operand::Const(c) => Some(*c),
            Operand::Value(_) => None,
        }
    }

    fn render(&self, ty: IntTy, out: &mut String) {
        match self {
            Operand::Value(n) => {
                out.push('%');
                out.push_str(n);
            }
            Operand::Const(c) if ty == IntTy::I1 => {
                out.push_str(if *c & 1 == 1 { "true" } else { "false" });
            }
            Operand::Const(c) => {
                let _ = write!(out, "{c}");
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
}

impl BinOp {
    pub fn name(self) -> &'static str {
        match self {
            BinOp::Add => "add",
            BinOp::Sub => "sub",
            BinOp::Mul => "mul",
        }
    }

    pub fn eval(self, ty: IntTy, a: u64, b: u64) -> u64 {
        let r = match self {
            BinOp::Add => a.wrapping_add(b),
            BinOp::Sub => a.wrapping_sub(b),
            BinOp::Mul => a.wrapping_mul(b),
        };
        ty.mask(r)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Pred {
    Eq,
    Ne,
    Slt,
}

impl Pred {
    pub fn name(self) -> &'static str {
        match self {
            Pred::Eq => "eq",
            Pred::Ne => "ne",
            Pred::Slt => "slt",
        }
    }

    pub fn eval(self, ty: IntTy, a: u64, b: u64) -> bool {
        match self {
            Pred::Eq => ty.mask(a) == ty.mask(b),
            Pred::Ne => ty.mask(a) != ty.mask(b),
            Pred::Slt => ty.sext(a) < ty.sext(b),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Inst {
    Alloca { dest: String, ty: IntTy },
    Load { dest: String, ty: IntTy, ptr: Operand },
    Store { ty: IntTy, value: Operand, ptr: Operand },
    Binary { dest: String, op: BinOp, ty: IntTy, lhs: Operand, rhs: Operand },
    Icmp { dest: String, pred: Pred, ty: IntTy, lhs: Operand, rhs: Operand },
    Br { target: String },
    CondBr { cond: Operand, if_true: String, if_false: String },
    Ret { value: Option<(IntTy, Operand)> },
}

impl Inst {
    pub fn dest(&self) -> Option<&str> {
        match self {
            Inst::Alloca { dest, .. }
            | Inst::Load { dest, .. }
            | Inst::Binary { dest, .. }
            | Inst::Icmp { dest, .. } => Some(dest),
            _ => None,
        }
    }

    pub fn is_terminator(&self) -> bool {
        matches!(self, Inst::Br { .. } | Inst::CondBr { .. } | Inst::Ret { .. })
    }

    /// Arithmetic and comparisons: no memory or control effects.
    pub fn is_pure(&self) -> bool {
        matches!(self, Inst::Binary { .. } | Inst::Icmp { .. })
    }

    pub fn operands(&self) -> Vec<&Operand> {
        match self {
            Inst::Alloca { .. } | Inst::Br { .. } => Vec::new(),
            Inst::Load { ptr, .. } => alloc::vec![ptr],
            Inst::Store { value, ptr, .. } => alloc::vec![value, ptr],
            Inst::Binary { lhs, rhs, .. } | Inst::Icmp { lhs, rhs, .. } => alloc::vec![lhs, rhs],
            Inst::CondBr { cond, .. } => alloc::vec![cond],
            Inst::Ret { value } => value.iter().map(|(_, v)| v).collect(),
        }
    }

    pub fn operands_mut(&mut self) -> Vec<&mut Operand> {
        match self {
            Inst::Alloca { .. } | Inst::Br { .. } => Vec::new(),
            Inst::Load { ptr, .. } => alloc::vec![ptr],
            Inst::Store { value, ptr, .. } => alloc::vec![value, ptr],
            Inst::Binary { lhs, rhs, .. } | Inst::Icmp { lhs, rhs, .. } => alloc::vec![lhs, rhs],
            Inst::CondBr { cond, .. } => alloc::vec![cond],
            Inst::Ret { value } => value.iter_mut().map(|(_, v)| v).collect(),
        }
    }

    pub fn successors(&self) -> Vec<&str> {
        match self {
            Inst::Br { target } => alloc::vec![target.as_str()],
            Inst::CondBr { if_true, if_false, .. } => alloc::vec![if_true.as_str(), if_false.as_str()],
            _ => Vec::new(),
        }
    }

    fn render(&self, out: &mut String) {
        match self {
            Inst::Alloca { dest, ty } => {
                let _ = write!(out, "%{dest} = alloca {}", ty.name());
            }
            Inst::Load { dest, ty, ptr } => {
                let _ = write!(out, "%{dest} = load {t}, {t}* ", t = ty.name());
                ptr.render(*ty, out);
            }
            Inst::Store { ty, value, ptr } => {
                let _ = write!(out, "store {} ", ty.name());
                value.render(*ty, out);
                let _ = write!(out, ", {}* ", ty.name());
                ptr.render(*ty, out);
            }
            Inst::Binary { dest, op, ty, lhs, rhs } => {
                let _ = write!(out, "%{dest} = {} {} ", op.name(), ty.name());
                lhs.render(*ty, out);
                out.push_str(", ");
                rhs.render(*ty, out);
            }
            Inst::Icmp { dest, pred, ty, lhs, rhs } => {
                let _ = write!(out, "%{dest} = icmp {} {} ", pred.name(), ty.name());
                lhs.render(*ty, out);
                out.push_str(", ");
                rhs.render(*ty, out);
            }
            Inst::Br { target } => {
                let _ = write!(out, "br label %{target}");
            }
            Inst::CondBr { cond, if_true, if_false } => {
                out.push_str("br i1 ");
                cond.render(IntTy::I1, out);
                let _ = write!(out, ", label %{if_true}, label %{if_false}");
            }
            Inst::Ret { value: None } => out.push_str("ret void"),
            Inst::Ret { value: Some((ty, v)) } => {
                let _ = write!(out, "ret {} ", ty.name());
                v.render(*ty, out);
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Block {
    /// Only the entry block may be unlabeled.
    pub label: Option<String>,
    pub insts: Vec<Inst>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Function {
    pub name: String,
    /// `None` for `void`.
    pub ret: Option<IntTy>,
    pub params: Vec<(String, IntTy)>,
    pub blocks: Vec<Block>,
}

impl Function {
    pub fn block_index(&self, label: &str) -> Option<usize> {
        self.blocks.iter().position(|b| b.label.as_deref() == Some(label))
    }

    pub fn insts(&self) -> impl Iterator<Item = &Inst> {
        self.blocks.iter().flat_map(|b| b.insts.iter())
    }

    pub fn instruction_count(&self) -> usize {
        self.blocks.iter().map(|b| b.insts.len()).sum()
    }

    /// Prints the normalized text form.
    pub fn print(&self) -> String {
        let mut out = String::new();
        let ret = self.ret.map_or("void", IntTy::name);
        let _ = write!(out, "define {ret} @{}(", self.name);
        for (i, (name, ty)) in self.params.iter().enumerate() {
            if i > 0 {
                out.push_str(", ");
            }
            let _ = write!(out, "{} %{name}", ty.name());
        }
        out.push_str(") {");
        for block in &self.blocks {
            if let Some(label) = &block.label {
                out.push('\n');
                out.push_str(label);
                out.push(':');
            }
            for inst in &block.insts {
                out.push('\n');
                inst.render(&mut out);
            }
        }
        out.push_str("\n}");
        out
    }
}

/// A syntax error with its 1-based line number in the normalized text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SyntaxError {
    pub line: usize,
    pub message: String,
}

struct Cursor<'a> {
    toks: Vec<&'a str>,
    pos: usize,
}

type PResult<T> = Result<T, String>;

impl<'a> Cursor<'a> {
    fn new(line: &'a str) -> Self {
        Cursor { toks: tokenize(line), pos: 0 }
    }

    fn peek(&self) -> Option<&'a str> {
        self.toks.get(self.pos).copied()
    }

    fn next(&mut self) -> Option<&'a str> {
        let t = self.peek();
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    fn expect(&mut self, tok: &str) -> PResult<()> {
        match self.next() {
            Some(t) if t == tok => Ok(()),
            Some(t) => Err(format!("expected '{tok}' but found '{t}'")),
            None => Err(format!("expected '{tok}' at end of line")),
        }
    }

    fn done(&self) -> PResult<()> {
        match self.peek() {
            None => Ok(()),
            Some(t) => Err(format!("expected end of line but found '{t}'")),
        }
    }

    fn int_ty(&mut self) -> PResult<IntTy> {
        let t = self.next().ok_or_else(|| "expected type".to_string())?;
        IntTy::parse(t).ok_or_else(|| format!("expected type but found '{t}'"))
    }

    /// `<ty>*`
    fn ptr_ty(&mut self) -> PResult<IntTy> {
        let ty = self.int_ty()?;
        self.expect("*")?;
        Ok(ty)
    }

    fn local(&mut self) -> PResult<String> {
        match self.next() {
            Some(t) if t.len() > 1 && t.starts_with('%') => Ok(t[1..].to_string()),
            Some(t) => Err(format!("expected local name but found '{t}'")),
            None => Err("expected local name".to_string()),
        }
    }

    fn operand(&mut self) -> PResult<Operand> {
        let t = self.next().ok_or_else(|| "expected value token".to_string())?;
        if let Some(name) = t.strip_prefix('%') {
            if name.is_empty() {
                return Err("expected value token".to_string());
            }
            return Ok(Operand::Value(name.to_string()));
        }
        match t {
            "true" => return Ok(Operand::Const(1)),
            "false" => return Ok(Operand::Const(0)),
            _ => {}
        }
        let digits = t.strip_prefix('-').unwrap_or(t);
        if !digits.is_empty() && digits.bytes().all(|b| b.is_ascii_digit()) {
            return t
                .parse::<i64>()
                .map(Operand::Const)
                .or_else(|_| t.parse::<u64>().map(|u| Operand::Const(u as i64)))
                .map_err(|_| format!("integer constant out of range: '{t}'"));
        }
        Err(format!("expected value token but found '{t}'"))
    }

    fn label_ref(&mut self) -> PResult<String> {
        self.expect("label")?;
        self.local()
    }
}

/// Name, return type (`None` for void) and parameters.
type Header = (String, Option<IntTy>, Vec<(String, IntTy)>);

fn parse_header(line: &str) -> PResult<Header> {
    let mut c = Cursor::new(line);
    c.expect("define")?;
    let ret = match c.next() {
        Some("void") => None,
        Some(t) => Some(IntTy::parse(t).ok_or_else(|| format!("expected type but found '{t}'"))?),
        None => return Err("expected type".to_string()),
    };
    let name = match c.next() {
        Some(t) if t.len() > 1 && t.starts_with('@') => t[1..].to_string(),
        _ => return Err("expected function name".to_string()),
    };
    c.expect("(")?;
    let mut params = Vec::new();
    if c.peek() == Some(")") {
        c.next();
    } else {
        loop {
            let ty = c.int_ty()?;
            let pname = c.local()?;
            params.push((pname, ty));
            match c.next() {
                Some(",") => continue,
                Some(")") => break,
                _ => return Err("expected ',' or ')' in parameter list".to_string()),
            }
        }
    }
    c.expect("{")?;
    c.done()?;
    Ok((name, ret, params))
}

fn parse_inst(line: &str) -> PResult<Inst> {
    let mut c = Cursor::new(line);
    let first = c.peek().ok_or_else(|| "expected instruction opcode".to_string())?;
    let inst = if first.starts_with('%') {
        let dest = c.local()?;
        c.expect("=")?;
        match c.next() {
            Some("alloca") => Inst::Alloca { dest, ty: c.int_ty()? },
            Some("load") => {
                let ty = c.int_ty()?;
                c.expect(",")?;
                let pty = c.ptr_ty()?;
                if pty != ty {
                    return Err(format!(
                        "explicit pointee type doesn't match operand's pointee type: {} vs {}",
                        ty.name(),
                        pty.name()
                    ));
                }
                Inst::Load { dest, ty, ptr: c.operand()? }
            }
            Some(op @ ("add" | "sub" | "mul")) => {
                let op = match op {
                    "add" => BinOp::Add,
                    "sub" => BinOp::Sub,
                    _ => BinOp::Mul,
                };
                let ty = c.int_ty()?;
                let lhs = c.operand()?;
                c.expect(",")?;
                let rhs = c.operand()?;
                Inst::Binary { dest, op, ty, lhs, rhs }
            }
            Some("icmp") => {
                let pred = match c.next() {
                    Some("eq") => Pred::Eq,
                    Some("ne") => Pred::Ne,
                    Some("slt") => Pred::Slt,
                    _ => return Err("expected icmp predicate".to_string()),
                };
                let ty = c.int_ty()?;
                let lhs = c.operand()?;
                c.expect(",")?;
                let rhs = c.operand()?;
                Inst::Icmp { dest, pred, ty, lhs, rhs }
            }
            _ => return Err("expected instruction opcode".to_string()),
        }
    } else {
        match c.next() {
            Some("store") => {
                let ty = c.int_ty()?;
                let value = c.operand()?;
                c.expect(",")?;
                let pty = c.ptr_ty()?;
                if pty != ty {
                    return Err(format!(
                        "stored value and pointer type do not match: {} vs {}*",
                        ty.name(),
                        pty.name()
                    ));
                }
                Inst::Store { ty, value, ptr: c.operand()? }
            }
            Some("br") => {
                if c.peek() == Some("label") {
                    Inst::Br { target: c.label_ref()? }
                } else {
                    let ty = c.int_ty()?;
                    if ty != IntTy::I1 {
                        return Err(format!("branch condition defined with type '{}' but expected 'i1'", ty.name()));
                    }
                    let cond = c.operand()?;
                    c.expect(",")?;
                    let if_true = c.label_ref()?;
                    c.expect(",")?;
                    let if_false = c.label_ref()?;
                    Inst::CondBr { cond, if_true, if_false }
                }
            }
            Some("ret") => {
                if c.peek() == Some("void") {
                    c.next();
                    Inst::Ret { value: None }
                } else {
                    let ty = c.int_ty()?;
                    Inst::Ret { value: Some((ty, c.operand()?)) }
                }
            }
            _ => return Err("expected instruction opcode".to_string()),
        }
    };
    c.done()?;
    Ok(inst)
}

fn is_label_line(line: &str) -> Option<&str> {
    let name = line.strip_suffix(':')?;
    if !name.is_empty() && name.bytes().all(|b| b.is_ascii_alphanumeric() || b == b'_' || b == b'.') {
        Some(name)
    } else {
        None
    }
}

/// Parses a single mini-IR function. The text is normalized first.
pub fn parse_function(text: &str) -> Result<Function, SyntaxError> {
    let norm = normalize(text);
    let lines: Vec<&str> = norm.as_str().lines().collect();
    let err = |line: usize, message: String| SyntaxError { line: line + 1, message };

    let mut i = 0;
    let header = match lines.first() {
        Some(l) if l.starts_with("define ") => *l,
        _ => return Err(err(i, "expected top-level entity 'define'".to_string())),
    };
    let (name, ret, params) = parse_header(header).map_err(|m| err(i, m))?;
    i += 1;

    let mut blocks: Vec<Block> = Vec::new();
    let mut closed = false;
    while i < lines.len() {
        let line = lines[i];
        if line == "}" {
            closed = true;
            i += 1;
            break;
        }
        if let Some(label) = is_label_line(line) {
            blocks.push(Block { label: Some(label.to_string()), insts: Vec::new() });
        } else {
            let inst = parse_inst(line).map_err(|m| err(i, m))?;
            if blocks.is_empty() {
                blocks.push(Block { label: None, insts: Vec::new() });
            }
            blocks.last_mut().expect("block exists").insts.push(inst);
        }
        i += 1;
    }
    if !closed {
        return Err(err(i.saturating_sub(1), "expected '}' at end of function".to_string()));
    }
    if i < lines.len() {
        return Err(err(i, "expected end of input after function".to_string()));
    }
    if blocks.is_empty() {
        return Err(err(0, "function body requires at least one basic block".to_string()));
    }
    Ok(Function { name, ret, params, blocks })
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = "define i32 @f(i32 %a, i64 %b) {\n\
        %p = alloca i32\n\
        store i32 %a, i32* %p\n\
        %v = load i32, i32* %p\n\
        %c = icmp slt i32 %v, -3\n\
        br i1 %c, label %t, label %e\n\
        t:\n\
        %w = mul i32 %v, 2\n\
        ret i32 %w\n\
        e:\n\
        br label %x\n\
        x:\n\
        ret i32 0\n\
        }";

    #[test]
    fn parse_print_round_trip() {
        let f = parse_function(SAMPLE).unwrap();
        assert_eq!(f.blocks.len(), 4);
        assert_eq!(f.instruction_count(), 9);
        assert_eq!(f.print(), SAMPLE);
    }

    #[test]
    fn indented_input_parses() {
        let f = parse_function("define void @g() {\n  br label %b ; go\nb:\n  ret void\n}\n").unwrap();
        assert_eq!(f.print(), "define void @g() {\nbr label %b\nb:\nret void\n}");
    }

    #[test]
    fn i1_constants_print_as_booleans() {
        let f = parse_function("define i1 @g() {\nret i1 1\n}").unwrap();
        assert_eq!(f.print(), "define i1 @g() {\nret i1 true\n}");
    }

    #[test]
    fn syntax_errors_carry_line() {
        let e = parse_function("define i32 @f() {\n%x = frobnicate i32 1, 2\nret i32 0\n}").unwrap_err();
        assert_eq!(e.line, 2);
        assert!(e.message.contains("expected instruction opcode"));
        let e = parse_function("define i32 @f() {\nret i32 0").unwrap_err();
        assert!(e.message.contains("expected '}'"));
        let e = parse_function("define i32 @f() {\nret i32 0\n}\ndefine i32 @g() {\nret i32 0\n}").unwrap_err();
        assert!(e.message.contains("end of input"));
    }

    #[test]
    fn width_helpers() {
        assert_eq!(IntTy::I32.mask(u64::MAX), 0xffff_ffff);
        assert_eq!(IntTy::I32.sext(0xffff_ffff), -1);
        assert_eq!(IntTy::I1.sext(1), -1);
        assert_eq!(IntTy::I64.sext(5), 5);
        assert!(Pred::Slt.eval(IntTy::I32, 0xffff_ffff, 0));
        assert_eq!(BinOp::Sub.eval(IntTy::I32, 0, 1), 0xffff_ffff);
        assert!(IntTy::I32.accepts(-1) && IntTy::I32.accepts(4_294_967_295));
        assert!(!IntTy::I32.accepts(4_294_967_296) && !IntTy::I1.accepts(2));
    }
}
