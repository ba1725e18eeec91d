//! The gradient tape.
//!
//! Every forward operation appends a node holding its value and, when any
//! input requires a gradient, a closure mapping the output gradient to input
//! gradients. Node ids are assigned in execution order, so reverse id order is
//! a valid reverse topological order.

use std::cell::{Cell, RefCell};
use std::fmt;
use std::rc::Rc;

use crate::error::{AutodiffError, Result};
use crate::tensor::Tensor;

/// Maps the output gradient to one optional gradient per parent. The flag
/// slice says which parents need one; entries for the others may be `None`.
pub type BackwardFn = Box<dyn Fn(&Tensor, &[bool]) -> Vec<Option<Tensor>>>;

struct Node {
    value: Rc<Tensor>,
    parents: Vec<usize>,
    backward: Option<BackwardFn>,
    requires_grad: bool,
}

pub struct Tape {
    nodes: RefCell<Vec<Node>>,
    grad_enabled: bool,
    check_finite: bool,
    flops: Cell<u64>,
    non_finite: RefCell<Option<String>>,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl fmt::Debug for Tape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Tape")
            .field("nodes", &self.nodes.borrow().len())
            .field("grad_enabled", &self.grad_enabled)
            .field("flops", &self.flops.get())
            .finish()
    }
}

impl Tape {
    /// A recording tape. Finite-value checks follow `debug_assertions`.
    pub fn new() -> Self {
        Self {
            nodes: RefCell::new(Vec::new()),
            grad_enabled: true,
            check_finite: cfg!(debug_assertions),
            flops: Cell::new(0),
            non_finite: RefCell::new(None),
        }
    }

    /// A tape that records values only; no backward closures are kept.
    pub fn inference() -> Self {
        Self {
            grad_enabled: false,
            ..Self::new()
        }
    }

    pub fn with_finite_check(mut self, on: bool) -> Self {
        self.check_finite = on;
        self
    }

    pub fn grad_enabled(&self) -> bool {
        self.grad_enabled
    }

    /// Approximate floating point operations executed by forward ops so far.
    pub fn flops(&self) -> u64 {
        self.flops.get()
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Name of the first op that produced a NaN or infinity, when checking is on.
    pub fn first_non_finite(&self) -> Option<String> {
        self.non_finite.borrow().clone()
    }

    pub fn constant(&self, value: Tensor) -> Var<'_> {
        self.leaf(value, false)
    }

    /// A leaf that receives a gradient.
    pub fn param(&self, value: Tensor) -> Var<'_> {
        self.leaf(value, true)
    }

    pub fn leaf(&self, value: Tensor, requires_grad: bool) -> Var<'_> {
        self.push(
            Node {
                value: Rc::new(value),
                parents: Vec::new(),
                backward: None,
                requires_grad: requires_grad && self.grad_enabled,
            },
            "leaf",
        )
    }

    /// Append an operation node. `backward` is dropped when no parent
    /// requires a gradient.
    pub fn push_op<F>(
        &self,
        name: &'static str,
        parents: &[Var<'_>],
        value: Tensor,
        flops: u64,
        backward: F,
    ) -> Var<'_>
    where
        F: Fn(&Tensor, &[bool]) -> Vec<Option<Tensor>> + 'static,
    {
        self.flops.set(self.flops.get() + flops);
        let requires_grad = self.grad_enabled && parents.iter().any(|p| p.requires_grad());
        let node = Node {
            value: Rc::new(value),
            parents: parents.iter().map(|p| p.id).collect(),
            backward: if requires_grad {
                Some(Box::new(backward))
            } else {
                None
            },
            requires_grad,
        };
        self.push(node, name)
    }

    fn push(&self, node: Node, name: &'static str) -> Var<'_> {
        if self.check_finite && !node.value.is_finite() {
            let mut slot = self.non_finite.borrow_mut();
            if slot.is_none() {
                *slot = Some(name.to_string());
            }
        }
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(node);
        Var {
            tape: self,
            id: nodes.len() - 1,
        }
    }

    fn value_of(&self, id: usize) -> Rc<Tensor> {
        Rc::clone(&self.nodes.borrow()[id].value)
    }

    fn requires_grad_of(&self, id: usize) -> bool {
        self.nodes.borrow()[id].requires_grad
    }

    /// Reverse-mode accumulation from a scalar output. Gradients of every
    /// leaf reachable from `output` are retained.
    pub fn backward(&self, output: Var<'_>) -> Result<Gradients> {
        let nodes = self.nodes.borrow();
        let out = &nodes[output.id];
        if out.value.len() != 1 {
            return Err(AutodiffError::NonScalarOutput(out.value.shape().to_vec()));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; output.id + 1];
        grads[output.id] = Some(Tensor::full(out.value.shape(), 1.0));
        let mut leaf_grads: Vec<Option<Tensor>> = vec![None; output.id + 1];

        for id in (0..=output.id).rev() {
            let Some(g) = grads[id].take() else { continue };
            let node = &nodes[id];
            let Some(backward) = &node.backward else {
                if node.requires_grad {
                    leaf_grads[id] = Some(g);
                }
                continue;
            };
            let needs: Vec<bool> = node
                .parents
                .iter()
                .map(|&p| nodes[p].requires_grad)
                .collect();
            let parent_grads = backward(&g, &needs);
            debug_assert_eq!(parent_grads.len(), node.parents.len());
            for ((&pid, pg), need) in node.parents.iter().zip(parent_grads).zip(&needs) {
                let Some(pg) = pg else { continue };
                if !need {
                    continue;
                }
                debug_assert_eq!(pg.shape(), nodes[pid].value.shape());
                match &mut grads[pid] {
                    Some(acc) => acc.add_assign(&pg),
                    slot @ None => *slot = Some(pg),
                }
            }
        }
        Ok(Gradients { grads: leaf_grads })
    }
}

/// Gradients of leaves, indexed by node id.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, v: Var<'_>) -> Option<&Tensor> {
        self.grads.get(v.id).and_then(|g| g.as_ref())
    }

    /// Gradient of `v`, or zeros of its shape when `v` did not influence the output.
    pub fn get_or_zeros(&self, v: Var<'_>) -> Tensor {
        self.get(v)
            .cloned()
            .unwrap_or_else(|| Tensor::zeros(v.value().shape()))
    }
}

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy)]
pub struct Var<'t> {
    pub(crate) tape: &'t Tape,
    pub(crate) id: usize,
}

impl fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Var#{}{:?}", self.id, self.shape())
    }
}

impl<'t> Var<'t> {
    pub fn tape(&self) -> &'t Tape {
        self.tape
    }

    pub fn id(&self) -> usize {
        self.id
    }

    pub fn value(&self) -> Rc<Tensor> {
        self.tape.value_of(self.id)
    }

    pub fn shape(&self) -> Vec<usize> {
        self.tape.nodes.borrow()[self.id].value.shape().to_vec()
    }

    pub fn requires_grad(&self) -> bool {
        self.tape.requires_grad_of(self.id)
    }

    /// Scalar value; panics on non-scalar nodes.
    pub fn item(&self) -> f64 {
        self.value().item()
    }
}
