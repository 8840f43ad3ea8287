//! Straight-line programs over complex numbers with reverse-mode Jacobians.

use num_complex::Complex64;

pub type C64 = Complex64;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Op {
    Var(usize),
    Param(usize),
    Const(f64),
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Neg(usize),
}

/// Handle to a node of a program under construction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Node(usize);

/// Builds a program with constant folding and structural sharing.
#[derive(Debug, Default)]
pub struct SlpBuilder {
    ops: Vec<Op>,
    memo: std::collections::HashMap<OpKey, usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
enum OpKey {
    Var(usize),
    Param(usize),
    Const(u64),
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Neg(usize),
}

impl SlpBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    fn push(&mut self, op: Op) -> Node {
        let key = match op {
            Op::Var(i) => OpKey::Var(i),
            Op::Param(i) => OpKey::Param(i),
            Op::Const(c) => OpKey::Const((c + 0.0).to_bits()),
            Op::Add(a, b) => OpKey::Add(a.min(b), a.max(b)),
            Op::Mul(a, b) => OpKey::Mul(a.min(b), a.max(b)),
            Op::Sub(a, b) => OpKey::Sub(a, b),
            Op::Neg(a) => OpKey::Neg(a),
        };
        if let Some(&i) = self.memo.get(&key) {
            return Node(i);
        }
        self.ops.push(op);
        let i = self.ops.len() - 1;
        self.memo.insert(key, i);
        Node(i)
    }

    fn constant_of(&self, n: Node) -> Option<f64> {
        match self.ops[n.0] {
            Op::Const(c) => Some(c),
            _ => None,
        }
    }

    pub fn var(&mut self, i: usize) -> Node {
        self.push(Op::Var(i))
    }

    pub fn param(&mut self, i: usize) -> Node {
        self.push(Op::Param(i))
    }

    pub fn constant(&mut self, c: f64) -> Node {
        self.push(Op::Const(c))
    }

    pub fn add(&mut self, a: Node, b: Node) -> Node {
        match (self.constant_of(a), self.constant_of(b)) {
            (Some(x), Some(y)) => self.constant(x + y),
            (Some(x), _) if x == 0.0 => b,
            (_, Some(y)) if y == 0.0 => a,
            _ => self.push(Op::Add(a.0, b.0)),
        }
    }

    pub fn sub(&mut self, a: Node, b: Node) -> Node {
        if a == b {
            return self.constant(0.0);
        }
        match (self.constant_of(a), self.constant_of(b)) {
            (Some(x), Some(y)) => self.constant(x - y),
            (Some(x), _) if x == 0.0 => self.neg(b),
            (_, Some(y)) if y == 0.0 => a,
            _ => self.push(Op::Sub(a.0, b.0)),
        }
    }

    pub fn mul(&mut self, a: Node, b: Node) -> Node {
        match (self.constant_of(a), self.constant_of(b)) {
            (Some(x), Some(y)) => self.constant(x * y),
            (Some(x), _) | (_, Some(x)) if x == 0.0 => self.constant(0.0),
            (Some(x), _) if x == 1.0 => b,
            (_, Some(y)) if y == 1.0 => a,
            (Some(x), _) if x == -1.0 => self.neg(b),
            (_, Some(y)) if y == -1.0 => self.neg(a),
            _ => self.push(Op::Mul(a.0, b.0)),
        }
    }

    pub fn neg(&mut self, a: Node) -> Node {
        match self.ops[a.0] {
            Op::Const(c) => self.constant(-c),
            Op::Neg(inner) => Node(inner),
            _ => self.push(Op::Neg(a.0)),
        }
    }

    pub fn scale(&mut self, c: f64, a: Node) -> Node {
        let k = self.constant(c);
        self.mul(k, a)
    }

    pub fn sum(&mut self, terms: &[Node]) -> Node {
        let zero = self.constant(0.0);
        terms.iter().fold(zero, |acc, &t| self.add(acc, t))
    }

    /// Finishes the program; unused nodes are dropped.
    pub fn finish(self, outputs: &[Node], num_vars: usize, num_params: usize) -> Slp {
        let n = self.ops.len();
        let mut live = vec![false; n];
        for o in outputs {
            live[o.0] = true;
        }
        for i in (0..n).rev() {
            if !live[i] {
                continue;
            }
            match self.ops[i] {
                Op::Add(a, b) | Op::Sub(a, b) | Op::Mul(a, b) => {
                    live[a] = true;
                    live[b] = true;
                }
                Op::Neg(a) => live[a] = true,
                _ => {}
            }
        }
        let mut remap = vec![usize::MAX; n];
        let mut ops = Vec::new();
        for i in 0..n {
            if live[i] {
                remap[i] = ops.len();
                ops.push(match self.ops[i] {
                    Op::Add(a, b) => Op::Add(remap[a], remap[b]),
                    Op::Sub(a, b) => Op::Sub(remap[a], remap[b]),
                    Op::Mul(a, b) => Op::Mul(remap[a], remap[b]),
                    Op::Neg(a) => Op::Neg(remap[a]),
                    op => op,
                });
            }
        }
        let outputs: Vec<usize> = outputs.iter().map(|o| remap[o.0]).collect();
        let cones = outputs.iter().map(|&o| cone(&ops, o)).collect();
        Slp { ops, outputs, cones, num_vars, num_params }
    }
}

/// Nodes an output depends on, ascending.
fn cone(ops: &[Op], root: usize) -> Vec<u32> {
    let mut mark = vec![false; root + 1];
    mark[root] = true;
    for i in (0..=root).rev() {
        if !mark[i] {
            continue;
        }
        match ops[i] {
            Op::Add(a, b) | Op::Sub(a, b) | Op::Mul(a, b) => {
                mark[a] = true;
                mark[b] = true;
            }
            Op::Neg(a) => mark[a] = true,
            _ => {}
        }
    }
    (0..=root).filter(|&i| mark[i]).map(|i| i as u32).collect()
}

/// A compiled program: topologically ordered operations and output nodes.
#[derive(Debug, Clone)]
pub struct Slp {
    ops: Vec<Op>,
    outputs: Vec<usize>,
    cones: Vec<Vec<u32>>,
    num_vars: usize,
    num_params: usize,
}

/// Scratch buffers for one evaluating thread.
#[derive(Debug, Clone)]
pub struct SlpWorkspace {
    vals: Vec<C64>,
    aux: Vec<C64>,
}

impl Slp {
    pub fn num_outputs(&self) -> usize {
        self.outputs.len()
    }

    pub fn num_vars(&self) -> usize {
        self.num_vars
    }

    pub fn num_params(&self) -> usize {
        self.num_params
    }

    pub fn num_nodes(&self) -> usize {
        self.ops.len()
    }

    pub fn workspace(&self) -> SlpWorkspace {
        SlpWorkspace {
            vals: vec![C64::new(0.0, 0.0); self.ops.len()],
            aux: vec![C64::new(0.0, 0.0); self.ops.len()],
        }
    }

    fn forward(&self, x: &[C64], p: &[C64], vals: &mut [C64]) {
        for (i, op) in self.ops.iter().enumerate() {
            vals[i] = match *op {
                Op::Var(k) => x[k],
                Op::Param(k) => p[k],
                Op::Const(c) => C64::new(c, 0.0),
                Op::Add(a, b) => vals[a] + vals[b],
                Op::Sub(a, b) => vals[a] - vals[b],
                Op::Mul(a, b) => vals[a] * vals[b],
                Op::Neg(a) => -vals[a],
            };
        }
    }

    pub fn evaluate(&self, x: &[C64], p: &[C64], ws: &mut SlpWorkspace, out: &mut [C64]) {
        self.forward(x, p, &mut ws.vals);
        for (o, &node) in out.iter_mut().zip(&self.outputs) {
            *o = ws.vals[node];
        }
    }

    /// Residual and row-major Jacobians. `jx` is outputs × vars; `jp`, when
    /// given, is outputs × params.
    pub fn jacobians(
        &self,
        x: &[C64],
        p: &[C64],
        ws: &mut SlpWorkspace,
        out: &mut [C64],
        jx: &mut [C64],
        mut jp: Option<&mut [C64]>,
    ) {
        let zero = C64::new(0.0, 0.0);
        self.forward(x, p, &mut ws.vals);
        jx.fill(zero);
        if let Some(jp) = jp.as_deref_mut() {
            jp.fill(zero);
        }
        let (nv, np) = (self.num_vars, self.num_params);
        let vals = &ws.vals;
        let adj = &mut ws.aux;
        for (row, (&root, cone)) in self.outputs.iter().zip(&self.cones).enumerate() {
            out[row] = vals[root];
            for &i in cone {
                adj[i as usize] = zero;
            }
            adj[root] = C64::new(1.0, 0.0);
            for &i in cone.iter().rev() {
                let i = i as usize;
                let g = adj[i];
                if g == zero {
                    continue;
                }
                match self.ops[i] {
                    Op::Var(k) => jx[row * nv + k] += g,
                    Op::Param(k) => {
                        if let Some(jp) = jp.as_deref_mut() {
                            jp[row * np + k] += g;
                        }
                    }
                    Op::Const(_) => {}
                    Op::Add(a, b) => {
                        adj[a] += g;
                        adj[b] += g;
                    }
                    Op::Sub(a, b) => {
                        adj[a] += g;
                        adj[b] -= g;
                    }
                    Op::Mul(a, b) => {
                        adj[a] += g * vals[b];
                        adj[b] += g * vals[a];
                    }
                    Op::Neg(a) => adj[a] -= g,
                }
            }
        }
    }

    /// Directional derivative along the parameters, `(∂F/∂p)·ṗ`.
    pub fn param_derivative(
        &self,
        x: &[C64],
        p: &[C64],
        pdot: &[C64],
        ws: &mut SlpWorkspace,
        out: &mut [C64],
    ) {
        let zero = C64::new(0.0, 0.0);
        let SlpWorkspace { vals, aux: tan } = ws;
        for (i, op) in self.ops.iter().enumerate() {
            let (v, t) = match *op {
                Op::Var(k) => (x[k], zero),
                Op::Param(k) => (p[k], pdot[k]),
                Op::Const(c) => (C64::new(c, 0.0), zero),
                Op::Add(a, b) => (vals[a] + vals[b], tan[a] + tan[b]),
                Op::Sub(a, b) => (vals[a] - vals[b], tan[a] - tan[b]),
                Op::Mul(a, b) => (vals[a] * vals[b], tan[a] * vals[b] + vals[a] * tan[b]),
                Op::Neg(a) => (-vals[a], -tan[a]),
            };
            vals[i] = v;
            tan[i] = t;
        }
        for (o, &node) in out.iter_mut().zip(&self.outputs) {
            *o = tan[node];
        }
    }
}
