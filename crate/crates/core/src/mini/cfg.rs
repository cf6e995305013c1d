//! Control-flow graph and dominator tree (Cooper, Harvey & Kennedy's
//! iterative algorithm over reverse post-order).

use alloc::vec;
use alloc::vec::Vec;

use super::syntax::Function;

pub struct Cfg {
    pub succs: Vec<Vec<usize>>,
    pub preds: Vec<Vec<usize>>,
    pub reachable: Vec<bool>,
    idom: Vec<Option<usize>>,
}

impl Cfg {
    /// Builds the graph. Branches to unknown labels are ignored; the
    /// verifier reports them separately.
    pub fn new(f: &Function) -> Cfg {
        let n = f.blocks.len();
        let mut succs = vec![Vec::new(); n];
        let mut preds = vec![Vec::new(); n];
        for (i, b) in f.blocks.iter().enumerate() {
            if let Some(term) = b.insts.last() {
                for label in term.successors() {
                    if let Some(j) = f.block_index(label) {
                        succs[i].push(j);
                        preds[j].push(i);
                    }
                }
            }
        }

        let mut reachable = vec![false; n];
        let mut post = Vec::with_capacity(n);
        if n > 0 {
            // Iterative DFS producing post-order.
            let mut stack = vec![(0usize, 0usize)];
            reachable[0] = true;
            while let Some(top) = stack.last_mut() {
                let node = top.0;
                if let Some(&s) = succs[node].get(top.1) {
                    top.1 += 1;
                    if !reachable[s] {
                        reachable[s] = true;
                        stack.push((s, 0));
                    }
                } else {
                    post.push(node);
                    stack.pop();
                }
            }
        }
        let mut rpo_index = vec![usize::MAX; n];
        let rpo: Vec<usize> = post.iter().rev().copied().collect();
        for (i, &b) in rpo.iter().enumerate() {
            rpo_index[b] = i;
        }

        let mut idom: Vec<Option<usize>> = vec![None; n];
        if n > 0 {
            idom[0] = Some(0);
            let mut changed = true;
            while changed {
                changed = false;
                for &b in rpo.iter().skip(1) {
                    let mut new_idom: Option<usize> = None;
                    for &p in &preds[b] {
                        if idom[p].is_none() {
                            continue;
                        }
                        new_idom = Some(match new_idom {
                            None => p,
                            Some(cur) => intersect(&idom, &rpo_index, p, cur),
                        });
                    }
                    if new_idom.is_some() && idom[b] != new_idom {
                        idom[b] = new_idom;
                        changed = true;
                    }
                }
            }
        }
        Cfg { succs, preds, reachable, idom }
    }

    /// Whether block `a` dominates block `b`. Only meaningful for reachable
    /// blocks; returns false when either is unreachable.
    pub fn dominates(&self, a: usize, b: usize) -> bool {
        if !self.reachable[a] || !self.reachable[b] {
            return false;
        }
        let mut cur = b;
        loop {
            if cur == a {
                return true;
            }
            match self.idom[cur] {
                Some(next) if next != cur => cur = next,
                _ => return false,
            }
        }
    }
}

fn intersect(idom: &[Option<usize>], rpo_index: &[usize], mut a: usize, mut b: usize) -> usize {
    while a != b {
        while rpo_index[a] > rpo_index[b] {
            a = idom[a].expect("processed block has idom");
        }
        while rpo_index[b] > rpo_index[a] {
            b = idom[b].expect("processed block has idom");
        }
    }
    a
}
