//! Deterministic generator of mini-IR functions seeded with optimization
//! opportunities: redundant allocas, constant expressions, dead code,
//! double negations, identity arithmetic, duplicate expressions and
//! constant branches whose removal unlocks further promotion. Chains of
//! such branches need more cleanup rounds than `-Oz` performs.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::syntax::IntTy;
use crate::ir::IrFunction;
use crate::seed::derive_seed;

/// `source_dataset` tag of generated functions.
pub const MINI_DATASET: &str = "mini-synthetic";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Snippet {
    RedundantAlloca,
    ConstExpr,
    DeadCode,
    DoubleNeg,
    Identity,
    Duplicate,
    Useful,
    Jump,
    ConstBranch,
    StoredConstBranch,
    RealBranch,
    ConstChain,
}

/// Diamonds in a [`Snippet::ConstChain`].
const CHAIN_LEN: usize = 3;

const WEIGHTED: [(Snippet, u32); 12] = [
    (Snippet::RedundantAlloca, 3),
    (Snippet::ConstExpr, 3),
    (Snippet::DeadCode, 2),
    (Snippet::DoubleNeg, 2),
    (Snippet::Identity, 2),
    (Snippet::Duplicate, 2),
    (Snippet::Useful, 3),
    (Snippet::Jump, 1),
    (Snippet::ConstBranch, 2),
    (Snippet::StoredConstBranch, 2),
    (Snippet::RealBranch, 1),
    (Snippet::ConstChain, 1),
];

struct Gen<'r> {
    rng: &'r mut ChaCha8Rng,
    ty: &'static str,
    lines: Vec<String>,
    pool: Vec<String>,
    values: usize,
    labels: usize,
}

impl Gen<'_> {
    fn value(&mut self) -> String {
        self.values += 1;
        format!("%v{}", self.values)
    }

    fn label(&mut self) -> String {
        self.labels += 1;
        format!("bb{}", self.labels)
    }

    fn pick(&mut self) -> String {
        let i = self.rng.gen_range(0..self.pool.len());
        self.pool[i].clone()
    }

    fn konst(&mut self) -> i64 {
        self.rng.gen_range(-20..=20)
    }

    fn op(&mut self) -> &'static str {
        ["add", "sub", "mul"][self.rng.gen_range(0..3)]
    }

    fn pred(&mut self) -> &'static str {
        ["eq", "ne", "slt"][self.rng.gen_range(0..3)]
    }

    fn emit(&mut self, line: String) {
        self.lines.push(line);
    }

    fn choose(&mut self, depth: usize) -> Snippet {
        let allowed: Vec<(Snippet, u32)> = WEIGHTED
            .iter()
            .copied()
            .filter(|(s, _)| {
                depth == 0
                    || !matches!(
                        s,
                        Snippet::ConstBranch | Snippet::StoredConstBranch | Snippet::RealBranch | Snippet::ConstChain
                    )
            })
            .collect();
        let total: u32 = allowed.iter().map(|(_, w)| w).sum();
        let mut roll = self.rng.gen_range(0..total);
        for (s, w) in allowed {
            if roll < w {
                return s;
            }
            roll -= w;
        }
        unreachable!("roll below total weight")
    }

    fn snippet(&mut self, kind: Snippet, depth: usize) {
        let t = self.ty;
        match kind {
            Snippet::RedundantAlloca => {
                let (p, l, x) = (self.value(), self.value(), self.pick());
                self.emit(format!("{p} = alloca {t}"));
                self.emit(format!("store {t} {x}, {t}* {p}"));
                self.emit(format!("{l} = load {t}, {t}* {p}"));
                self.pool.push(l);
            }
            Snippet::ConstExpr => {
                let (c, u) = (self.value(), self.value());
                let (op, k1, k2, x) = (self.op(), self.konst(), self.konst(), self.pick());
                self.emit(format!("{c} = {op} {t} {k1}, {k2}"));
                self.emit(format!("{u} = add {t} {c}, {x}"));
                self.pool.push(u);
            }
            Snippet::DeadCode => {
                let (d, a, b) = (self.value(), self.pick(), self.pick());
                let op = self.op();
                self.emit(format!("{d} = {op} {t} {a}, {b}"));
            }
            Snippet::DoubleNeg => {
                let (n1, n2, x) = (self.value(), self.value(), self.pick());
                self.emit(format!("{n1} = sub {t} 0, {x}"));
                self.emit(format!("{n2} = sub {t} 0, {n1}"));
                self.pool.push(n2);
            }
            Snippet::Identity => {
                let (i, x) = (self.value(), self.pick());
                let form = ["add {t} {x}, 0", "sub {t} {x}, 0", "mul {t} {x}, 1"][self.rng.gen_range(0..3)];
                let rhs = form.replace("{t}", t).replace("{x}", &x);
                self.emit(format!("{i} = {rhs}"));
                self.pool.push(i);
            }
            Snippet::Duplicate => {
                let (x, y, z) = (self.value(), self.value(), self.value());
                let (a, b, op) = (self.pick(), self.pick(), self.op());
                self.emit(format!("{x} = {op} {t} {a}, {b}"));
                self.emit(format!("{y} = {op} {t} {a}, {b}"));
                self.emit(format!("{z} = mul {t} {x}, {y}"));
                self.pool.push(z);
            }
            Snippet::Useful => {
                let (x, a, b, op) = (self.value(), self.pick(), self.pick(), self.op());
                self.emit(format!("{x} = {op} {t} {a}, {b}"));
                self.pool.push(x);
            }
            Snippet::Jump => {
                let l = self.label();
                self.emit(format!("br label %{l}"));
                self.emit(format!("{l}:"));
            }
            Snippet::ConstBranch => {
                let c = self.value();
                let (pred, k1, k2) = (self.pred(), self.konst(), self.konst());
                self.emit(format!("{c} = icmp {pred} {t} {k1}, {k2}"));
                self.diamond(&c, depth);
            }
            Snippet::StoredConstBranch => {
                let (p, l, c) = (self.value(), self.value(), self.value());
                let (k1, k2, pred) = (self.konst(), self.konst(), self.pred());
                self.emit(format!("{p} = alloca {t}"));
                self.emit(format!("store {t} {k1}, {t}* {p}"));
                self.emit(format!("{l} = load {t}, {t}* {p}"));
                self.emit(format!("{c} = icmp {pred} {t} {l}, {k2}"));
                self.diamond(&c, depth);
            }
            Snippet::RealBranch => {
                let c = self.value();
                let (pred, a, b) = (self.pred(), self.pick(), self.pick());
                self.emit(format!("{c} = icmp {pred} {t} {a}, {b}"));
                self.diamond(&c, depth);
            }
            Snippet::ConstChain => {
                let c = self.value();
                let (pred, k1, k2) = (self.pred(), self.konst(), self.konst());
                self.emit(format!("{c} = icmp {pred} {t} {k1}, {k2}"));
                let mut cond = c;
                for i in 0..CHAIN_LEN {
                    let (merged, first) = self.const_diamond(&cond);
                    if i + 1 == CHAIN_LEN {
                        self.pool.push(merged);
                    } else {
                        cond = self.value();
                        self.emit(format!("{cond} = icmp eq {t} {merged}, {first}"));
                    }
                }
            }
        }
    }

    /// Diamond whose arms store distinct constants; returns the merged value
    /// and the constant stored on the true arm.
    fn const_diamond(&mut self, cond: &str) -> (String, i64) {
        let t = self.ty;
        let slot = self.value();
        let at = self.lines.len() - 1;
        self.lines.insert(at, format!("{slot} = alloca {t}"));
        let (then_l, else_l, join_l) = (self.label(), self.label(), self.label());
        let a = self.konst();
        let b = if self.rng.gen_bool(0.5) { a + 1 } else { a - 1 };
        self.emit(format!("br i1 {cond}, label %{then_l}, label %{else_l}"));
        for (arm, k) in [(&then_l, a), (&else_l, b)] {
            self.emit(format!("{arm}:"));
            self.emit(format!("store {t} {k}, {t}* {slot}"));
            self.emit(format!("br label %{join_l}"));
        }
        self.emit(format!("{join_l}:"));
        let merged = self.value();
        self.emit(format!("{merged} = load {t}, {t}* {slot}"));
        (merged, a)
    }

    /// Two arms that each store into a merge slot, joined by a load.
    fn diamond(&mut self, cond: &str, depth: usize) {
        let t = self.ty;
        let slot = self.value();
        // The slot is allocated before the branch so both arms can reach it.
        let at = self.lines.len() - 1;
        self.lines.insert(at, format!("{slot} = alloca {t}"));
        let (then_l, else_l, join_l) = (self.label(), self.label(), self.label());
        self.emit(format!("br i1 {cond}, label %{then_l}, label %{else_l}"));
        let outer = self.pool.clone();
        for arm in [&then_l, &else_l] {
            self.emit(format!("{arm}:"));
            for _ in 0..self.rng.gen_range(0..=2) {
                let s = self.choose(depth + 1);
                self.snippet(s, depth + 1);
            }
            let x = self.pick();
            self.emit(format!("store {t} {x}, {t}* {slot}"));
            self.emit(format!("br label %{join_l}"));
            self.pool = outer.clone();
        }
        self.emit(format!("{join_l}:"));
        let merged = self.value();
        self.emit(format!("{merged} = load {t}, {t}* {slot}"));
        self.pool.push(merged);
    }
}

/// Generates the text of one function named `@{name}`.
pub fn generate_function(rng: &mut ChaCha8Rng, name: &str) -> String {
    let ty = if rng.gen_bool(0.5) { IntTy::I32 } else { IntTy::I64 };
    let t = ty.name();
    let n_params = rng.gen_range(1..=3);
    let params: Vec<String> = (0..n_params).map(|i| format!("%a{i}")).collect();
    let header = format!(
        "define {t} @{name}({}) {{",
        params.iter().map(|p| format!("{t} {p}")).collect::<Vec<_>>().join(", ")
    );
    let mut g = Gen { rng, ty: t, lines: Vec::new(), pool: params, values: 0, labels: 0 };
    let n_snippets = g.rng.gen_range(2..=6);
    for _ in 0..n_snippets {
        let s = g.choose(0);
        g.snippet(s, 0);
    }
    let result = if g.pool.len() >= 2 && g.rng.gen_bool(0.5) {
        let (r, a, b) = (g.value(), g.pick(), g.pick());
        g.emit(format!("{r} = add {t} {a}, {b}"));
        r
    } else {
        let last = g.pool.len() - 1;
        g.pool[last].clone()
    };
    g.emit(format!("ret {t} {result}"));

    let mut text = header;
    for line in g.lines {
        text.push('\n');
        text.push_str(&line);
    }
    text.push_str("\n}");
    text
}

/// `n` functions with ids `mini-00000`, `mini-00001`, ... Each function
/// depends only on `(seed, id)`, so a larger corpus extends a smaller one.
pub fn generate_corpus(n: usize, seed: u64) -> Vec<IrFunction> {
    (0..n)
        .map(|i| {
            let id = format!("mini-{i:05}");
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &id));
            let text = generate_function(&mut rng, &format!("f{i}"));
            IrFunction::new(id, MINI_DATASET, text).expect("generator emits one well-formed function")
        })
        .collect()
}
