//! Tape-based reverse-mode differentiation.
//!
//! Complex quantities are differentiated by treating real and imaginary parts
//! as independent real variables. The adjoint of a node with value `a + ib` is
//! stored as the complex tensor `dL/da + i dL/db`; with this convention the
//! adjoint of `x` through `y = w * x` is `conj(w) * adjoint(y)`.

use std::cell::RefCell;
use std::collections::BTreeMap;
use std::fmt;

use crate::{Result, Shape, Tensor, TensorError};

/// Backward rule of a recorded operation.
///
/// Receives the adjoint of the output and, per parent, whether that parent
/// needs a gradient. Returns one optional adjoint per parent, each shaped like
/// the parent's value.
pub type BackwardFn = Box<dyn Fn(&Tensor, &[bool]) -> Result<Vec<Option<Tensor>>>>;

/// Identifier of a trainable parameter, stable across forward passes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub usize);

impl fmt::Display for ParamId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "p{}", self.0)
    }
}

struct Node {
    kind: &'static str,
    value: Tensor,
    parents: Vec<usize>,
    backward: Option<BackwardFn>,
    param: Option<ParamId>,
    requires_grad: bool,
}

/// Computation graph for a single forward/backward pass.
///
/// Nodes are appended in evaluation order, so the tape order is already a
/// topological order. A graph is confined to one thread.
#[derive(Default)]
pub struct Graph {
    nodes: RefCell<Vec<Node>>,
}

/// Handle to a node of a [`Graph`].
#[derive(Clone, Copy)]
pub struct Var<'g> {
    graph: &'g Graph,
    id: usize,
}

impl fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let nodes = self.graph.nodes.borrow();
        let node = &nodes[self.id];
        write!(f, "Var#{}({}, {})", self.id, node.kind, node.value.shape())
    }
}

/// Gradient of a real loss with respect to one parameter `a + ib`.
#[derive(Clone, Debug)]
pub struct GradientPair {
    pub d_re: Tensor,
    pub d_im: Tensor,
}

impl GradientPair {
    fn from_adjoint(adj: &Tensor) -> Self {
        GradientPair {
            d_re: adj.real_part(),
            d_im: adj.imag_part(),
        }
    }

    pub fn shape(&self) -> &Shape {
        self.d_re.shape()
    }

    pub fn all_finite(&self) -> bool {
        self.d_re.all_finite() && self.d_im.all_finite()
    }
}

/// Gradients keyed by parameter, in deterministic order.
#[derive(Clone, Debug, Default)]
pub struct Gradients(BTreeMap<ParamId, GradientPair>);

impl Gradients {
    pub fn get(&self, id: ParamId) -> Option<&GradientPair> {
        self.0.get(&id)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&ParamId, &GradientPair)> {
        self.0.iter()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.borrow().is_empty()
    }

    fn push(&self, node: Node) -> Var<'_> {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(node);
        Var {
            graph: self,
            id: nodes.len() - 1,
        }
    }

    /// Leaf that never receives a gradient.
    pub fn constant(&self, value: Tensor) -> Var<'_> {
        self.push(Node {
            kind: "constant",
            value,
            parents: Vec::new(),
            backward: None,
            param: None,
            requires_grad: false,
        })
    }

    /// Leaf whose gradient is reported by [`Graph::backward`] under `id`.
    pub fn param(&self, id: ParamId, value: Tensor) -> Var<'_> {
        self.push(Node {
            kind: "param",
            value,
            parents: Vec::new(),
            backward: None,
            param: Some(id),
            requires_grad: true,
        })
    }

    /// Record the result of an operation on `parents`.
    ///
    /// Used by operator libraries to add differentiable operations; `backward`
    /// is only invoked when at least one parent requires a gradient.
    pub fn record<'g>(
        &'g self,
        kind: &'static str,
        value: Tensor,
        parents: &[Var<'g>],
        backward: BackwardFn,
    ) -> Var<'g> {
        let requires_grad = {
            let nodes = self.nodes.borrow();
            parents.iter().any(|p| {
                debug_assert!(std::ptr::eq(p.graph, self), "var from another graph");
                nodes[p.id].requires_grad
            })
        };
        self.push(Node {
            kind,
            value,
            parents: parents.iter().map(|p| p.id).collect(),
            backward: requires_grad.then_some(backward),
            param: None,
            requires_grad,
        })
    }

    /// Gradients of the real scalar `loss` with respect to every parameter it
    /// depends on.
    pub fn backward(&self, loss: Var<'_>) -> Result<Gradients> {
        let nodes = self.nodes.borrow();
        let root = &nodes[loss.id].value;
        if root.numel() != 1 {
            return Err(TensorError::Contract(format!(
                "backward needs a scalar loss, got shape {}",
                root.shape()
            )));
        }
        if !root.has_zero_imag() {
            return Err(TensorError::Contract(
                "backward needs a real loss, got nonzero imaginary part".into(),
            ));
        }

        let mut adjoints: Vec<Option<Tensor>> = vec![None; loss.id + 1];
        adjoints[loss.id] = Some(Tensor::full(root.shape().clone(), 1.0));
        let mut grads = BTreeMap::new();

        for id in (0..=loss.id).rev() {
            let Some(adj) = adjoints[id].take() else {
                continue;
            };
            let node = &nodes[id];
            if let Some(pid) = node.param {
                accumulate_pair(&mut grads, pid, &adj)?;
            }
            let Some(backward) = &node.backward else {
                continue;
            };
            let needs: Vec<bool> = node
                .parents
                .iter()
                .map(|&p| nodes[p].requires_grad)
                .collect();
            let parent_grads = backward(&adj, &needs)?;
            if parent_grads.len() != node.parents.len() {
                return Err(TensorError::Contract(format!(
                    "{} backward returned {} gradients for {} inputs",
                    node.kind,
                    parent_grads.len(),
                    node.parents.len()
                )));
            }
            for (&p, g) in node.parents.iter().zip(parent_grads) {
                let Some(mut g) = g else { continue };
                if !nodes[p].requires_grad {
                    continue;
                }
                let target = &nodes[p].value;
                if g.shape() != target.shape() {
                    return Err(TensorError::Contract(format!(
                        "{} backward produced gradient of shape {} for input of shape {}",
                        node.kind,
                        g.shape(),
                        target.shape()
                    )));
                }
                // a real-flagged value has no imaginary degree of freedom
                if target.is_real() && !g.is_real() {
                    g = g.real_part();
                }
                adjoints[p] = Some(match adjoints[p].take() {
                    Some(acc) => acc.add(&g)?,
                    None => g,
                });
            }
        }
        Ok(Gradients(grads))
    }
}

fn accumulate_pair(
    grads: &mut BTreeMap<ParamId, GradientPair>,
    id: ParamId,
    adj: &Tensor,
) -> Result<()> {
    let pair = GradientPair::from_adjoint(adj);
    match grads.get_mut(&id) {
        Some(acc) => {
            acc.d_re = acc.d_re.add(&pair.d_re)?;
            acc.d_im = acc.d_im.add(&pair.d_im)?;
        }
        None => {
            grads.insert(id, pair);
        }
    }
    Ok(())
}

impl<'g> Var<'g> {
    pub fn graph(&self) -> &'g Graph {
        self.graph
    }

    pub fn value(&self) -> Tensor {
        self.graph.nodes.borrow()[self.id].value.clone()
    }

    pub fn shape(&self) -> Shape {
        self.graph.nodes.borrow()[self.id].value.shape().clone()
    }

    pub fn is_real(&self) -> bool {
        self.graph.nodes.borrow()[self.id].value.is_real()
    }

    pub fn requires_grad(&self) -> bool {
        self.graph.nodes.borrow()[self.id].requires_grad
    }

    pub fn kind(&self) -> &'static str {
        self.graph.nodes.borrow()[self.id].kind
    }
}
