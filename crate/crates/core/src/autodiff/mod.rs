//! Reverse-mode automatic differentiation over a recorded tape.
//!
//! A [`Tape`] owns every node created during a forward pass. Each node keeps
//! its value and, when it depends on a parameter, a closure mapping the
//! upstream gradient to gradients for its parents. Nodes are appended in
//! evaluation order, so replaying the tape backwards is a valid topological
//! order.

mod conv;
mod gradcheck;
mod linalg;
mod ops;

pub use gradcheck::{gradient_check, GradCheckReport};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

type BackwardFn = Box<dyn Fn(&Tensor) -> Vec<Option<Tensor>>>;

enum Slot {
    Live(Tensor),
    // Freed by a scope on a tape without gradients; only the shape remains.
    Released(Vec<usize>),
}

struct Node {
    value: Slot,
    parents: Vec<usize>,
    backward: Option<BackwardFn>,
    requires_grad: bool,
}

pub struct Tape {
    nodes: Vec<Node>,
    // Accumulated gradients of leaf nodes.
    grads: Vec<Option<Tensor>>,
    grad_enabled: bool,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape {
            nodes: Vec::new(),
            grads: Vec::new(),
            grad_enabled: true,
        }
    }

    /// A tape that records values only; parameters are treated as constants.
    pub fn no_grad() -> Self {
        Tape {
            grad_enabled: false,
            ..Self::new()
        }
    }

    pub fn grad_enabled(&self) -> bool {
        self.grad_enabled
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push_leaf(value, false)
    }

    pub fn param(&mut self, value: Tensor) -> Var {
        let rg = self.grad_enabled;
        self.push_leaf(value, rg)
    }

    fn push_leaf(&mut self, value: Tensor, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value: Slot::Live(value),
            parents: Vec::new(),
            backward: None,
            requires_grad,
        });
        self.grads.push(None);
        Var(self.nodes.len() - 1)
    }

    /// Records an operation. `backward` receives the gradient of the output
    /// and returns one optional gradient per parent, in order.
    pub fn record(
        &mut self,
        value: Tensor,
        parents: &[Var],
        backward: impl Fn(&Tensor) -> Vec<Option<Tensor>> + 'static,
    ) -> Var {
        let requires_grad =
            self.grad_enabled && parents.iter().any(|p| self.nodes[p.0].requires_grad);
        self.nodes.push(Node {
            value: Slot::Live(value),
            parents: parents.iter().map(|p| p.0).collect(),
            backward: requires_grad.then(|| Box::new(backward) as BackwardFn),
            requires_grad,
        });
        self.grads.push(None);
        Var(self.nodes.len() - 1)
    }

    /// # Panics
    /// If the value was released by an enclosing [`Tape::scope`].
    pub fn value(&self, v: Var) -> &Tensor {
        match &self.nodes[v.0].value {
            Slot::Live(t) => t,
            Slot::Released(_) => panic!("value of node {} was released by a no-grad scope", v.0),
        }
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        match &self.nodes[v.0].value {
            Slot::Live(t) => t.shape(),
            Slot::Released(s) => s,
        }
    }

    /// Runs `f`. On a tape without gradients, every node `f` created is then
    /// released except those in its result, so a forward-only pass holds the
    /// values later stages read rather than every intermediate. With
    /// gradients enabled this is just `f(self)`.
    pub fn scope<R: Retain>(&mut self, f: impl FnOnce(&mut Tape) -> Result<R>) -> Result<R> {
        let start = self.nodes.len();
        let out = f(self)?;
        if !self.grad_enabled {
            let mut keep = Vec::new();
            out.retain(&mut keep);
            for (i, node) in self.nodes.iter_mut().enumerate().skip(start) {
                if !keep.contains(&Var(i)) {
                    if let Slot::Live(t) = &node.value {
                        node.value = Slot::Released(t.shape().to_vec());
                    }
                }
            }
        }
        Ok(out)
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Gradient accumulated on a leaf by previous `backward` calls.
    pub fn grad(&self, v: Var) -> Option<&Tensor> {
        self.grads[v.0].as_ref()
    }

    /// Like [`Tape::grad`], with unreached leaves reported as zeros.
    pub fn grad_or_zeros(&self, v: Var) -> Tensor {
        self.grad(v)
            .cloned()
            .unwrap_or_else(|| Tensor::zeros(self.shape(v)))
    }

    pub fn zero_grad(&mut self) {
        self.grads.iter_mut().for_each(|g| *g = None);
    }

    /// Propagates d(loss)/d(node) to every leaf reachable from `loss`.
    /// Repeated calls accumulate into the stored leaf gradients.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        let numel = self.value(loss).numel();
        if numel != 1 {
            return Err(Error::Usage(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.shape(loss)
            )));
        }
        if !self.nodes[loss.0].requires_grad {
            return Ok(());
        }
        let mut pending: Vec<Option<Tensor>> = vec![None; loss.0 + 1];
        pending[loss.0] = Some(Tensor::ones(self.shape(loss)));
        for i in (0..=loss.0).rev() {
            let Some(g) = pending[i].take() else { continue };
            let node = &self.nodes[i];
            match &node.backward {
                Some(bw) => {
                    let parent_grads = bw(&g);
                    debug_assert_eq!(parent_grads.len(), node.parents.len());
                    for (&p, pg) in node.parents.iter().zip(parent_grads) {
                        let Some(pg) = pg else { continue };
                        if !self.nodes[p].requires_grad {
                            continue;
                        }
                        debug_assert_eq!(pg.shape(), self.shape(Var(p)));
                        accumulate(&mut pending[p], pg);
                    }
                }
                None if node.requires_grad => accumulate(&mut self.grads[i], g),
                None => {}
            }
        }
        Ok(())
    }
}

/// Results of a [`Tape::scope`] whose values must survive it.
pub trait Retain {
    fn retain(&self, keep: &mut Vec<Var>);
}

impl Retain for Var {
    fn retain(&self, keep: &mut Vec<Var>) {
        keep.push(*self);
    }
}

impl<A: Retain, B: Retain> Retain for (A, B) {
    fn retain(&self, keep: &mut Vec<Var>) {
        self.0.retain(keep);
        self.1.retain(keep);
    }
}

fn accumulate(slot: &mut Option<Tensor>, g: Tensor) {
    match slot {
        Some(acc) => acc.add_assign(&g),
        None => *slot = Some(g),
    }
}
