//! Reverse-mode tape.
//!
//! Nodes are appended in evaluation order, so parents always precede their
//! children. Each node stores its value and the local partials with respect
//! to its parents. Nodes that do not depend on any leaf are kept as plain
//! values and never receive edges.

use alloc::vec::Vec;

use super::engine::Engine;

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(u32);

impl Var {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

#[derive(Debug, Default, Clone)]
pub struct Tape {
    values: Vec<f64>,
    /// Whether the node depends on at least one leaf.
    live: Vec<bool>,
    /// Edges of node `i` are `edge_end[i - 1]..edge_end[i]`.
    edge_end: Vec<u32>,
    parents: Vec<u32>,
    partials: Vec<f64>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    /// Forgets every node but keeps the allocations.
    pub fn clear(&mut self) {
        self.values.clear();
        self.live.clear();
        self.edge_end.clear();
        self.parents.clear();
        self.partials.clear();
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn edge_count(&self) -> usize {
        self.parents.len()
    }

    /// Creates a differentiable leaf.
    pub fn leaf(&mut self, value: f64) -> Var {
        self.push(value, true)
    }

    fn push(&mut self, value: f64, live: bool) -> Var {
        let id = self.values.len();
        assert!(id < u32::MAX as usize, "tape overflow");
        self.values.push(value);
        self.live.push(live);
        self.edge_end.push(self.parents.len() as u32);
        Var(id as u32)
    }

    #[inline]
    fn edge(&mut self, parent: Var, partial: f64) {
        self.parents.push(parent.0);
        self.partials.push(partial);
    }

    #[inline]
    fn is_live(&self, v: Var) -> bool {
        self.live[v.index()]
    }

    /// Accumulates `∂output/∂node` for every node into `adjoints`.
    ///
    /// Each node is visited once, from the output back to the first node.
    pub fn backward_into(&self, output: Var, adjoints: &mut Vec<f64>) {
        adjoints.clear();
        adjoints.resize(self.values.len(), 0.0);
        adjoints[output.index()] = 1.0;
        for node in (0..=output.index()).rev() {
            let g = adjoints[node];
            if g == 0.0 {
                continue;
            }
            let start = if node == 0 { 0 } else { self.edge_end[node - 1] as usize };
            let end = self.edge_end[node] as usize;
            for e in start..end {
                adjoints[self.parents[e] as usize] += g * self.partials[e];
            }
        }
    }

    pub fn gradient(&self, output: Var) -> Gradients {
        let mut adjoints = Vec::new();
        self.backward_into(output, &mut adjoints);
        Gradients { adjoints }
    }

    /// Number of nodes a reverse pass from `output` walks.
    pub fn reverse_visits(&self, output: Var) -> usize {
        output.index() + 1
    }
}

/// Adjoints produced by a reverse pass.
#[derive(Debug, Clone)]
pub struct Gradients {
    adjoints: Vec<f64>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> f64 {
        self.adjoints.get(v.index()).copied().unwrap_or(0.0)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.adjoints
    }
}

impl Engine for Tape {
    type Scalar = Var;

    fn constant(&mut self, value: f64) -> Var {
        self.push(value, false)
    }

    #[inline]
    fn value(&self, s: Var) -> f64 {
        self.values[s.index()]
    }

    fn unary(&mut self, a: Var, value: f64, partial: impl FnOnce() -> f64) -> Var {
        if !self.is_live(a) {
            return self.push(value, false);
        }
        let p = partial();
        let out = self.push(value, true);
        self.edge(a, p);
        self.edge_end[out.index()] = self.parents.len() as u32;
        out
    }

    fn binary(
        &mut self,
        a: Var,
        b: Var,
        value: f64,
        partials: impl FnOnce() -> (f64, f64),
    ) -> Var {
        let (la, lb) = (self.is_live(a), self.is_live(b));
        if !la && !lb {
            return self.push(value, false);
        }
        let (pa, pb) = partials();
        let out = self.push(value, true);
        if la {
            self.edge(a, pa);
        }
        if lb {
            self.edge(b, pb);
        }
        self.edge_end[out.index()] = self.parents.len() as u32;
        out
    }

    fn affine(&mut self, w: &[Var], x: &[Var], bias: Option<Var>) -> Var {
        debug_assert_eq!(w.len(), x.len());
        let mut acc = 0.0;
        let mut live = false;
        if let Some(b) = bias {
            acc += self.value(b);
            live |= self.is_live(b);
        }
        for (&wi, &xi) in w.iter().zip(x) {
            acc += self.value(wi) * self.value(xi);
            live |= self.is_live(wi) || self.is_live(xi);
        }
        let out = self.push(acc, live);
        if !live {
            return out;
        }
        if let Some(b) = bias {
            if self.is_live(b) {
                self.edge(b, 1.0);
            }
        }
        for (&wi, &xi) in w.iter().zip(x) {
            let (vw, vx) = (self.value(wi), self.value(xi));
            if self.is_live(wi) {
                self.edge(wi, vx);
            }
            if self.is_live(xi) {
                self.edge(xi, vw);
            }
        }
        self.edge_end[out.index()] = self.parents.len() as u32;
        out
    }
}

/// Builds `f` on a fresh tape and returns its value and gradient with respect
/// to `inputs`.
pub fn gradient_of(
    inputs: &[f64],
    f: impl FnOnce(&mut Tape, &[Var]) -> Var,
) -> (f64, Vec<f64>) {
    let mut tape = Tape::new();
    let leaves: Vec<Var> = inputs.iter().map(|&v| tape.leaf(v)).collect();
    let out = f(&mut tape, &leaves);
    let grads = tape.gradient(out);
    let g = leaves.iter().map(|&l| grads.get(l)).collect();
    (tape.value(out), g)
}
