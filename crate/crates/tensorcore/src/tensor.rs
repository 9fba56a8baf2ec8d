use std::cell::{Cell, RefCell};
use std::collections::HashSet;
use std::rc::Rc;

use crate::error::{Result, TensorError};

thread_local! {
    static NEXT_ID: Cell<u64> = const { Cell::new(0) };
}

fn fresh_id() -> u64 {
    NEXT_ID.with(|c| {
        let id = c.get();
        c.set(id + 1);
        id
    })
}

/// Backward function of a non-leaf node. Receives the gradient flowing into
/// the node and is responsible for accumulating into the node's parents
/// (which it captures by handle).
pub type BackwardFn = Box<dyn Fn(&[f32])>;

pub(crate) struct Node {
    id: u64,
    shape: Vec<usize>,
    data: RefCell<Vec<f32>>,
    grad: RefCell<Option<Vec<f32>>>,
    requires_grad: bool,
    parents: Vec<Tensor>,
    backward: Option<BackwardFn>,
}

/// Dense n-dimensional f32 tensor participating in a dynamic reverse-mode
/// differentiation graph.
///
/// Cloning a `Tensor` is cheap: it copies a reference-counted handle and
/// both handles alias the same storage. The graph is rebuilt on every
/// forward pass; a single graph is confined to one thread.
#[derive(Clone)]
pub struct Tensor {
    node: Rc<Node>,
}

impl std::fmt::Debug for Tensor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "Tensor(id={}, shape={:?}, requires_grad={})",
            self.node.id, self.node.shape, self.node.requires_grad
        )
    }
}

fn check_len(data: &[f32], shape: &[usize]) -> Result<()> {
    let expected: usize = shape.iter().product();
    if data.len() != expected {
        return Err(TensorError::DataLength {
            shape: shape.to_vec(),
            expected,
            got: data.len(),
        });
    }
    Ok(())
}

impl Tensor {
    /// Constant leaf (no gradient tracking).
    pub fn from_vec(data: Vec<f32>, shape: &[usize]) -> Result<Tensor> {
        check_len(&data, shape)?;
        Ok(Tensor {
            node: Rc::new(Node {
                id: fresh_id(),
                shape: shape.to_vec(),
                data: RefCell::new(data),
                grad: RefCell::new(None),
                requires_grad: false,
                parents: Vec::new(),
                backward: None,
            }),
        })
    }

    /// Trainable leaf: participates in backward() and accumulates a gradient.
    pub fn param(data: Vec<f32>, shape: &[usize]) -> Result<Tensor> {
        check_len(&data, shape)?;
        Ok(Tensor {
            node: Rc::new(Node {
                id: fresh_id(),
                shape: shape.to_vec(),
                data: RefCell::new(data),
                grad: RefCell::new(None),
                requires_grad: true,
                parents: Vec::new(),
                backward: None,
            }),
        })
    }

    pub fn zeros(shape: &[usize]) -> Tensor {
        let n: usize = shape.iter().product();
        Tensor::from_vec(vec![0.0; n], shape).expect("zeros: consistent by construction")
    }

    pub fn full(shape: &[usize], value: f32) -> Tensor {
        let n: usize = shape.iter().product();
        Tensor::from_vec(vec![value; n], shape).expect("full: consistent by construction")
    }

    pub fn scalar(value: f32) -> Tensor {
        Tensor::from_vec(vec![value], &[1]).expect("scalar")
    }

    /// Result node of an operator. `backward` receives the output gradient
    /// and must accumulate into the captured parents. When no parent needs
    /// gradients the graph edge is dropped entirely so evaluation-only
    /// forward passes stay cheap.
    pub fn from_op(
        data: Vec<f32>,
        shape: Vec<usize>,
        parents: Vec<Tensor>,
        backward: BackwardFn,
    ) -> Tensor {
        debug_assert_eq!(data.len(), shape.iter().product::<usize>());
        let requires = parents.iter().any(|p| p.requires_grad());
        if !requires {
            return Tensor {
                node: Rc::new(Node {
                    id: fresh_id(),
                    shape,
                    data: RefCell::new(data),
                    grad: RefCell::new(None),
                    requires_grad: false,
                    parents: Vec::new(),
                    backward: None,
                }),
            };
        }
        Tensor {
            node: Rc::new(Node {
                id: fresh_id(),
                shape,
                data: RefCell::new(data),
                grad: RefCell::new(None),
                requires_grad: true,
                parents,
                backward: Some(backward),
            }),
        }
    }

    pub fn id(&self) -> u64 {
        self.node.id
    }

    pub fn shape(&self) -> &[usize] {
        &self.node.shape
    }

    pub fn numel(&self) -> usize {
        self.node.shape.iter().product()
    }

    pub fn requires_grad(&self) -> bool {
        self.node.requires_grad
    }

    pub fn is_leaf(&self) -> bool {
        self.node.backward.is_none()
    }

    /// Borrow the underlying data. Panics if a mutable borrow is live.
    pub fn data(&self) -> std::cell::Ref<'_, Vec<f32>> {
        self.node.data.borrow()
    }

    pub fn to_vec(&self) -> Vec<f32> {
        self.node.data.borrow().clone()
    }

    /// Value of a one-element tensor.
    pub fn item(&self) -> f32 {
        debug_assert_eq!(self.numel(), 1, "item() on non-scalar");
        self.node.data.borrow()[0]
    }

    /// Overwrite the stored values in place (shape preserved).
    pub fn set_data(&self, values: &[f32]) {
        let mut d = self.node.data.borrow_mut();
        assert_eq!(d.len(), values.len(), "set_data: length mismatch");
        d.copy_from_slice(values);
    }

    /// In-place elementwise update of the stored values.
    pub fn update_data(&self, f: impl FnMut(&mut f32)) {
        self.node.data.borrow_mut().iter_mut().for_each(f);
    }

    pub fn grad(&self) -> Option<Vec<f32>> {
        self.node.grad.borrow().clone()
    }

    pub fn zero_grad(&self) {
        *self.node.grad.borrow_mut() = None;
    }

    /// Add a contribution to this node's gradient accumulator.
    pub fn accumulate_grad(&self, contrib: &[f32]) {
        debug_assert_eq!(contrib.len(), self.numel());
        let mut slot = self.node.grad.borrow_mut();
        match slot.as_mut() {
            Some(g) => {
                for (gi, ci) in g.iter_mut().zip(contrib) {
                    *gi += ci;
                }
            }
            None => *slot = Some(contrib.to_vec()),
        }
    }

    /// Detached constant copy of this tensor's current values.
    pub fn detach(&self) -> Tensor {
        Tensor::from_vec(self.to_vec(), &self.node.shape).expect("detach")
    }

    /// Reverse-mode differentiation from a scalar loss. Gradients are
    /// accumulated into every `requires_grad` tensor reachable from the
    /// loss; traversal is reverse topological over the dynamic tape.
    pub fn backward(&self) -> Result<()> {
        if self.numel() != 1 {
            return Err(TensorError::NotScalar {
                op: "backward",
                shape: self.node.shape.clone(),
            });
        }
        let order = topo_order(self);
        self.accumulate_grad(&[1.0]);
        for t in order.iter().rev() {
            if let Some(back) = &t.node.backward {
                // A node with no incoming gradient is on a dead branch.
                let g = t.node.grad.borrow().clone();
                if let Some(g) = g {
                    back(&g);
                }
            }
        }
        // Intermediate accumulators are dropped with the graph; only leaf
        // gradients are meant to outlive backward().
        for t in order.iter() {
            if !t.is_leaf() {
                t.zero_grad();
            }
        }
        Ok(())
    }
}

/// Post-order DFS over parents; iterative to tolerate deep graphs.
fn topo_order(root: &Tensor) -> Vec<Tensor> {
    let mut order = Vec::new();
    let mut visited: HashSet<u64> = HashSet::new();
    // (tensor, next parent index to visit)
    let mut stack: Vec<(Tensor, usize)> = vec![(root.clone(), 0)];
    visited.insert(root.id());
    while let Some((t, pi)) = stack.pop() {
        if pi < t.node.parents.len() {
            let parent = t.node.parents[pi].clone();
            stack.push((t, pi + 1));
            if parent.requires_grad() && visited.insert(parent.id()) {
                stack.push((parent, 0));
            }
        } else {
            order.push(t);
        }
    }
    order
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ops;

    #[test]
    fn leaf_construction_and_len_check() {
        let t = Tensor::from_vec(vec![1.0, 2.0, 3.0, 4.0], &[2, 2]).unwrap();
        assert_eq!(t.shape(), &[2, 2]);
        assert_eq!(t.numel(), 4);
        assert!(!t.requires_grad());

        let err = Tensor::from_vec(vec![1.0; 3], &[2, 2]).unwrap_err();
        assert!(matches!(err, TensorError::DataLength { expected: 4, got: 3, .. }));
    }

    #[test]
    fn backward_rejects_non_scalar() {
        let w = Tensor::param(vec![1.0, 2.0], &[2]).unwrap();
        let err = w.backward().unwrap_err();
        assert!(matches!(err, TensorError::NotScalar { .. }));
    }

    #[test]
    fn backward_sum_gives_ones() {
        let w = Tensor::param(vec![0.3, -1.2, 7.0, 0.0, 2.5, -4.0], &[2, 3]).unwrap();
        let loss = ops::sum(&w);
        loss.backward().unwrap();
        assert_eq!(w.grad().unwrap(), vec![1.0; 6]);
    }

    #[test]
    fn backward_sum_of_squares() {
        let w = Tensor::param(vec![3.0], &[1]).unwrap();
        let loss = ops::sum(&ops::square(&w));
        loss.backward().unwrap();
        assert_eq!(w.grad().unwrap(), vec![6.0]);
    }

    #[test]
    fn reuse_accumulates_both_contributions() {
        // f(w) = w*w + w  =>  f'(w) = 2w + 1
        let w = Tensor::param(vec![1.5, -0.5], &[2]).unwrap();
        let f = ops::add(&ops::mul(&w, &w).unwrap(), &w).unwrap();
        let loss = ops::sum(&f);
        loss.backward().unwrap();
        assert_eq!(w.grad().unwrap(), vec![4.0, 0.0]);
    }

    #[test]
    fn dead_branches_do_not_contribute() {
        let w = Tensor::param(vec![2.0], &[1]).unwrap();
        let _unused = ops::scale(&w, 100.0);
        let loss = ops::sum(&w);
        loss.backward().unwrap();
        assert_eq!(w.grad().unwrap(), vec![1.0]);
    }

    #[test]
    fn grad_accumulates_across_backward_calls() {
        let w = Tensor::param(vec![1.0], &[1]).unwrap();
        ops::sum(&w).backward().unwrap();
        ops::sum(&w).backward().unwrap();
        assert_eq!(w.grad().unwrap(), vec![2.0]);
        w.zero_grad();
        assert!(w.grad().is_none());
    }

    #[test]
    fn constant_inputs_build_no_graph() {
        let a = Tensor::from_vec(vec![1.0, 2.0], &[2]).unwrap();
        let b = Tensor::from_vec(vec![3.0, 4.0], &[2]).unwrap();
        let c = ops::add(&a, &b).unwrap();
        assert!(c.is_leaf());
        assert!(!c.requires_grad());
    }
}
