//! Tape-based reverse-mode differentiation.
//!
//! A [`Graph`] records one forward computation; every op on [`Tensor`]
//! handles pushes a node carrying its value, its parent ids and a backward
//! closure. Nodes only ever reference earlier nodes, so the recorded graph
//! is acyclic by construction. [`Graph::backward`] walks the tape in
//! reverse creation order, which also fixes the gradient accumulation
//! order: repeated runs are bit-identical.
//!
//! A recorded graph is confined to one thread; independent graphs may run
//! concurrently.

use std::cell::{Ref, RefCell};
use std::collections::HashMap;
use std::rc::Rc;
use std::sync::atomic::{AtomicU64, Ordering};

use crate::array::Array;
use crate::error::{CoreError, Result};
use crate::kernels;
use crate::scalar::Scalar;

pub(crate) type NodeId = usize;
pub(crate) type BackwardFn<F> = Box<dyn Fn(&Array<F>, &mut GradSink<'_, F>)>;

static NEXT_PARAM_ID: AtomicU64 = AtomicU64::new(1);

/// A named trainable parameter that persists across training steps.
/// Graphs intern it as a leaf node on first use, so a parameter used in
/// several places accumulates gradient over all paths.
pub struct Param<F: Scalar> {
    id: u64,
    name: String,
    value: RefCell<Array<F>>,
}

pub type ParamRef<F> = Rc<Param<F>>;

impl<F: Scalar> Param<F> {
    pub fn new(name: impl Into<String>, value: Array<F>) -> ParamRef<F> {
        Rc::new(Param {
            id: NEXT_PARAM_ID.fetch_add(1, Ordering::Relaxed),
            name: name.into(),
            value: RefCell::new(value),
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn value(&self) -> Ref<'_, Array<F>> {
        self.value.borrow()
    }

    pub fn shape(&self) -> Vec<usize> {
        self.value.borrow().shape().to_vec()
    }

    pub fn numel(&self) -> usize {
        self.value.borrow().numel()
    }

    /// Replaces the stored value. Must not be called while a graph built
    /// from this parameter is still alive (updates are exclusive).
    pub fn set_value(&self, value: Array<F>) {
        assert_eq!(
            value.shape(),
            self.value.borrow().shape(),
            "parameter `{}` shape change",
            self.name
        );
        *self.value.borrow_mut() = value;
    }

    pub fn update(&self, f: impl FnOnce(&mut Array<F>)) {
        f(&mut self.value.borrow_mut())
    }

    pub(crate) fn id(&self) -> u64 {
        self.id
    }
}

struct Node<F: Scalar> {
    value: Rc<Array<F>>,
    backward: Option<BackwardFn<F>>,
    needs_grad: bool,
}

pub(crate) struct GraphInner<F: Scalar> {
    nodes: RefCell<Vec<Node<F>>>,
    param_nodes: RefCell<HashMap<u64, NodeId>>,
}

/// One recorded forward computation.
#[derive(Clone)]
pub struct Graph<F: Scalar> {
    inner: Rc<GraphInner<F>>,
}

impl<F: Scalar> Default for Graph<F> {
    fn default() -> Self {
        Self::new()
    }
}

impl<F: Scalar> Graph<F> {
    pub fn new() -> Self {
        Graph {
            inner: Rc::new(GraphInner {
                nodes: RefCell::new(Vec::new()),
                param_nodes: RefCell::new(HashMap::new()),
            }),
        }
    }

    pub fn same_graph(&self, other: &Graph<F>) -> bool {
        Rc::ptr_eq(&self.inner, &other.inner)
    }

    pub fn num_nodes(&self) -> usize {
        self.inner.nodes.borrow().len()
    }

    /// A leaf that does not require gradient.
    pub fn constant(&self, value: Array<F>) -> Tensor<F> {
        self.push(value, false, None)
    }

    /// A leaf bound to a persistent parameter; interned per graph.
    pub fn param(&self, p: &ParamRef<F>) -> Tensor<F> {
        if let Some(&id) = self.inner.param_nodes.borrow().get(&p.id()) {
            let value = self.inner.nodes.borrow()[id].value.clone();
            return Tensor {
                graph: self.clone(),
                id,
                value,
            };
        }
        let t = self.push(p.value().clone(), true, None);
        self.inner.param_nodes.borrow_mut().insert(p.id(), t.id);
        t
    }

    pub(crate) fn push(
        &self,
        value: Array<F>,
        needs_grad: bool,
        backward: Option<BackwardFn<F>>,
    ) -> Tensor<F> {
        let value = Rc::new(value);
        let mut nodes = self.inner.nodes.borrow_mut();
        let id = nodes.len();
        nodes.push(Node {
            value: value.clone(),
            backward,
            needs_grad,
        });
        Tensor {
            graph: self.clone(),
            id,
            value,
        }
    }

    /// Records an op node. The backward closure is only kept when some
    /// parent requires gradient.
    pub(crate) fn op(
        &self,
        value: Array<F>,
        parents: &[&Tensor<F>],
        make_backward: impl FnOnce() -> BackwardFn<F>,
    ) -> Tensor<F> {
        let next_id = self.inner.nodes.borrow().len();
        let mut needs = false;
        for p in parents {
            assert!(self.same_graph(&p.graph), "tensors belong to different graphs");
            assert!(p.id < next_id, "op parent must precede the new node");
            needs |= self.node_needs_grad(p.id);
        }
        let backward = if needs { Some(make_backward()) } else { None };
        self.push(value, needs, backward)
    }

    pub(crate) fn node_needs_grad(&self, id: NodeId) -> bool {
        self.inner.nodes.borrow()[id].needs_grad
    }

    /// Propagates dL/dnode from a scalar root to every reachable node.
    /// Leaf gradients are retained; interior gradients are freed once
    /// consumed. Parameters that do not reach the root simply have no
    /// entry, which reads back as zero.
    pub fn backward(&self, root: &Tensor<F>) -> Result<GradStore<F>> {
        assert!(self.same_graph(&root.graph), "root from a different graph");
        if !root.value.is_scalar() {
            return Err(CoreError::NonScalarRoot {
                shape: root.value.shape().to_vec(),
            });
        }
        let nodes = self.inner.nodes.borrow();
        let mut grads: Vec<Option<Array<F>>> = (0..nodes.len()).map(|_| None).collect();
        grads[root.id] = Some(Array::full(root.value.shape().to_vec(), F::one()));

        for id in (0..=root.id).rev() {
            let node = &nodes[id];
            if !node.needs_grad {
                grads[id] = None;
                continue;
            }
            let Some(back) = node.backward.as_ref() else {
                continue; // leaf: keep accumulated gradient
            };
            let Some(g) = grads[id].take() else {
                continue; // not reachable from root
            };
            let mut sink = GradSink { slots: &mut grads };
            back(&g, &mut sink);
        }

        Ok(GradStore {
            grads,
            param_nodes: self.inner.param_nodes.borrow().clone(),
        })
    }
}

/// Mutable view over the gradient slots, handed to backward closures.
pub struct GradSink<'a, F: Scalar> {
    slots: &'a mut [Option<Array<F>>],
}

impl<F: Scalar> GradSink<'_, F> {
    /// The gradient buffer for `id`, created as zeros on first touch.
    /// Closures accumulate into it.
    pub fn slot(&mut self, id: NodeId, shape: &[usize]) -> &mut Array<F> {
        let entry = &mut self.slots[id];
        if entry.is_none() {
            *entry = Some(Array::zeros(shape.to_vec()));
        }
        let arr = entry.as_mut().expect("slot just created");
        debug_assert_eq!(arr.shape(), shape);
        arr
    }

    /// Elementwise `slot[id] += g`.
    pub fn accumulate(&mut self, id: NodeId, g: &Array<F>) {
        let slot = self.slot(id, g.shape());
        kernels::axpy(F::one(), g.data(), slot.data_mut());
    }
}

/// Gradients produced by one backward pass.
pub struct GradStore<F: Scalar> {
    grads: Vec<Option<Array<F>>>,
    param_nodes: HashMap<u64, NodeId>,
}

impl<F: Scalar> GradStore<F> {
    /// Gradient of a leaf tensor (constants and parameters). Interior node
    /// gradients are freed during the backward sweep.
    pub fn of(&self, t: &Tensor<F>) -> Option<&Array<F>> {
        self.grads.get(t.id).and_then(|g| g.as_ref())
    }

    /// Gradient of a parameter; `None` when the parameter was not used in
    /// the graph or does not reach the root (treated as zero).
    pub fn of_param(&self, p: &ParamRef<F>) -> Option<&Array<F>> {
        self.param_nodes
            .get(&p.id())
            .and_then(|&id| self.grads[id].as_ref())
    }

    pub fn scale_param_grads(&mut self, factor: F) {
        for &id in self.param_nodes.values() {
            if let Some(g) = self.grads[id].as_mut() {
                for v in g.data_mut() {
                    *v = *v * factor;
                }
            }
        }
    }
}

/// Handle to one node of a [`Graph`].
#[derive(Clone)]
pub struct Tensor<F: Scalar> {
    pub(crate) graph: Graph<F>,
    pub(crate) id: NodeId,
    pub(crate) value: Rc<Array<F>>,
}

impl<F: Scalar> Tensor<F> {
    pub fn value(&self) -> &Array<F> {
        &self.value
    }

    pub(crate) fn value_rc(&self) -> Rc<Array<F>> {
        self.value.clone()
    }

    pub fn shape(&self) -> &[usize] {
        self.value.shape()
    }

    pub fn graph(&self) -> &Graph<F> {
        &self.graph
    }

    pub fn scalar_value(&self) -> F {
        self.value.scalar_value()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_gradient() {
        let g = Graph::<f64>::new();
        let w = Param::new("w", Array::scalar(3.0));
        let wt = g.param(&w);
        let y = wt.mul(&wt);
        let grads = g.backward(&y).unwrap();
        assert_eq!(grads.of_param(&w).unwrap().scalar_value(), 6.0);
    }

    #[test]
    fn sum_gradient_is_ones() {
        let g = Graph::<f64>::new();
        let w = Param::new("w", Array::from_fn(vec![3, 4], |i| i as f64));
        let y = g.param(&w).sum();
        let grads = g.backward(&y).unwrap();
        let gw = grads.of_param(&w).unwrap();
        assert!(gw.data().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn non_scalar_root_rejected() {
        let g = Graph::<f64>::new();
        let w = Param::new("w", Array::zeros(vec![2]));
        let t = g.param(&w);
        assert!(matches!(
            g.backward(&t),
            Err(CoreError::NonScalarRoot { .. })
        ));
    }

    #[test]
    fn gradient_accumulates_over_paths() {
        // d(f+g)/dw = df/dw + dg/dw on the same recorded graph
        let g = Graph::<f64>::new();
        let w = Param::new("w", Array::scalar(2.0));
        let wt = g.param(&w);
        let f = wt.mul(&wt); // w^2, df/dw = 4
        let h = wt.scale(3.0); // 3w, dh/dw = 3
        let total = f.add(&h);
        let grads = g.backward(&total).unwrap();
        assert_eq!(grads.of_param(&w).unwrap().scalar_value(), 7.0);
    }

    #[test]
    fn unused_param_has_no_gradient() {
        let g = Graph::<f64>::new();
        let w = Param::new("w", Array::scalar(2.0));
        let u = Param::new("u", Array::scalar(5.0));
        let wt = g.param(&w);
        let _ut = g.param(&u);
        let y = wt.mul(&wt);
        let grads = g.backward(&y).unwrap();
        assert!(grads.of_param(&u).is_none());
    }

    #[test]
    fn param_interned_once_per_graph() {
        let g = Graph::<f64>::new();
        let w = Param::new("w", Array::scalar(1.0));
        let a = g.param(&w);
        let b = g.param(&w);
        assert_eq!(a.id, b.id);
    }
}
