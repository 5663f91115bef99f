use std::cell::Cell;
use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, RwLock, RwLockReadGuard, RwLockWriteGuard};

use crate::element::{DType, Element};
use crate::error::{arg_err, shape_err, Result};

static NEXT_ID: AtomicU64 = AtomicU64::new(0);

thread_local! {
    static GRAD_ENABLED: Cell<bool> = const { Cell::new(true) };
}

/// Runs `f` without recording any graph edges on this thread.
pub fn no_grad<R>(f: impl FnOnce() -> R) -> R {
    struct Restore(bool);
    impl Drop for Restore {
        fn drop(&mut self) {
            GRAD_ENABLED.with(|g| g.set(self.0));
        }
    }
    let _restore = Restore(GRAD_ENABLED.with(|g| g.replace(false)));
    f()
}

pub fn is_grad_enabled() -> bool {
    GRAD_ENABLED.with(|g| g.get())
}

/// Inputs handed to a backward closure.
pub(crate) struct BackwardCtx<'a, T: Element> {
    pub grad_out: &'a [T],
    pub output: &'a [T],
    pub inputs: &'a [Tensor<T>],
}

pub(crate) type BackwardFn<T> =
    Box<dyn Fn(&BackwardCtx<'_, T>) -> Vec<Option<Vec<T>>> + Send + Sync>;

struct GradFn<T: Element> {
    op: &'static str,
    inputs: Vec<Tensor<T>>,
    backward: BackwardFn<T>,
}

struct Inner<T: Element> {
    id: u64,
    shape: Vec<usize>,
    data: RwLock<Vec<T>>,
    grad: Mutex<Option<Vec<T>>>,
    requires_grad: bool,
    grad_fn: Option<GradFn<T>>,
}

/// Reference-counted tensor handle. Cloning is cheap and shares storage.
pub struct Tensor<T: Element> {
    inner: Arc<Inner<T>>,
}

impl<T: Element> Clone for Tensor<T> {
    fn clone(&self) -> Self {
        Self {
            inner: Arc::clone(&self.inner),
        }
    }
}

impl<T: Element> fmt::Debug for Tensor<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Tensor")
            .field("shape", &self.inner.shape)
            .field("dtype", &T::DTYPE)
            .field("requires_grad", &self.inner.requires_grad)
            .field(
                "op",
                &self.inner.grad_fn.as_ref().map(|g| g.op).unwrap_or("leaf"),
            )
            .finish()
    }
}

impl<T: Element> Tensor<T> {
    fn build(
        shape: Vec<usize>,
        data: Vec<T>,
        requires_grad: bool,
        grad_fn: Option<GradFn<T>>,
    ) -> Self {
        Self {
            inner: Arc::new(Inner {
                id: NEXT_ID.fetch_add(1, Ordering::Relaxed),
                shape,
                data: RwLock::new(data),
                grad: Mutex::new(None),
                requires_grad,
                grad_fn,
            }),
        }
    }

    pub fn from_vec(shape: &[usize], data: Vec<T>) -> Result<Self> {
        let numel: usize = shape.iter().product();
        if numel != data.len() {
            return shape_err(format!(
                "dims {shape:?} hold {numel} values but {} were given",
                data.len()
            ));
        }
        Ok(Self::build(shape.to_vec(), data, false, None))
    }

    pub fn from_f64(shape: &[usize], data: &[f64]) -> Result<Self> {
        Self::from_vec(shape, data.iter().map(|&v| T::from_f64_lossy(v)).collect())
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::full(shape, T::zero())
    }

    pub fn ones(shape: &[usize]) -> Self {
        Self::full(shape, T::one())
    }

    pub fn full(shape: &[usize], value: T) -> Self {
        let numel = shape.iter().product();
        Self::build(shape.to_vec(), vec![value; numel], false, None)
    }

    pub fn scalar(value: T) -> Self {
        Self::build(Vec::new(), vec![value], false, None)
    }

    /// A fresh leaf that accumulates gradients.
    pub fn parameter(shape: &[usize], data: Vec<T>) -> Result<Self> {
        let t = Self::from_vec(shape, data)?;
        Ok(t.into_leaf(true))
    }

    /// Detached leaf with the same values, optionally tracking gradients.
    pub fn into_leaf(self, requires_grad: bool) -> Self {
        let data = self.to_vec();
        Self::build(self.inner.shape.clone(), data, requires_grad, None)
    }

    pub fn detach(&self) -> Self {
        Self::build(self.inner.shape.clone(), self.to_vec(), false, None)
    }

    /// Result of a differentiable op. Graph edges are recorded only when
    /// gradients are enabled and some input participates in the graph.
    pub(crate) fn from_op(
        op: &'static str,
        shape: Vec<usize>,
        data: Vec<T>,
        inputs: &[&Tensor<T>],
        backward: BackwardFn<T>,
    ) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        let track = is_grad_enabled() && inputs.iter().any(|t| t.requires_grad());
        if track {
            let grad_fn = GradFn {
                op,
                inputs: inputs.iter().map(|t| (*t).clone()).collect(),
                backward,
            };
            Self::build(shape, data, true, Some(grad_fn))
        } else {
            Self::build(shape, data, false, None)
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.inner.shape
    }

    pub fn ndim(&self) -> usize {
        self.inner.shape.len()
    }

    pub fn numel(&self) -> usize {
        self.inner.shape.iter().product()
    }

    pub fn dtype(&self) -> DType {
        T::DTYPE
    }

    pub fn dim(&self, axis: usize) -> usize {
        self.inner.shape[axis]
    }

    pub fn requires_grad(&self) -> bool {
        self.inner.requires_grad
    }

    pub fn is_leaf(&self) -> bool {
        self.inner.grad_fn.is_none()
    }

    /// Name of the op that produced this tensor, `None` for leaves.
    pub fn op_name(&self) -> Option<&'static str> {
        self.inner.grad_fn.as_ref().map(|g| g.op)
    }

    /// True when both handles refer to the same storage.
    pub fn same_storage(&self, other: &Tensor<T>) -> bool {
        Arc::ptr_eq(&self.inner, &other.inner)
    }

    pub fn data(&self) -> RwLockReadGuard<'_, Vec<T>> {
        self.inner.data.read().expect("tensor data lock poisoned")
    }

    /// Mutable access to the values. Intended for optimizer updates on
    /// leaves; mutating a tensor that is part of a live graph changes what
    /// a later backward pass sees.
    pub fn data_mut(&self) -> RwLockWriteGuard<'_, Vec<T>> {
        self.inner.data.write().expect("tensor data lock poisoned")
    }

    pub fn to_vec(&self) -> Vec<T> {
        self.data().clone()
    }

    pub fn to_f64_vec(&self) -> Vec<f64> {
        self.data().iter().map(|v| v.to_f64_lossy()).collect()
    }

    pub fn item(&self) -> T {
        let d = self.data();
        assert_eq!(d.len(), 1, "item() on a tensor with {} values", d.len());
        d[0]
    }

    pub fn all_finite(&self) -> bool {
        self.data().iter().all(|v| v.is_finite())
    }

    pub fn set_data(&self, values: &[T]) -> Result<()> {
        let mut d = self.data_mut();
        if d.len() != values.len() {
            return shape_err(format!(
                "cannot assign {} values to a tensor of {}",
                values.len(),
                d.len()
            ));
        }
        d.copy_from_slice(values);
        Ok(())
    }

    pub fn cast<U: Element>(&self) -> Tensor<U> {
        let data = self
            .data()
            .iter()
            .map(|v| U::from_f64_lossy(v.to_f64_lossy()))
            .collect();
        Tensor::build(self.inner.shape.clone(), data, false, None)
    }

    /// Accumulated gradient, if any backward pass reached this leaf.
    pub fn grad(&self) -> Option<Vec<T>> {
        self.inner.grad.lock().expect("grad lock poisoned").clone()
    }

    pub fn zero_grad(&self) {
        *self.inner.grad.lock().expect("grad lock poisoned") = None;
    }

    pub(crate) fn accumulate_grad(&self, g: &[T]) {
        let mut slot = self.inner.grad.lock().expect("grad lock poisoned");
        match slot.as_mut() {
            Some(acc) => acc.iter_mut().zip(g).for_each(|(a, &b)| *a = *a + b),
            None => *slot = Some(g.to_vec()),
        }
    }

    /// Back-propagates from this scalar into every reachable leaf that
    /// requires gradients. Gradients accumulate across calls.
    pub fn backward(&self) -> Result<()> {
        if self.numel() != 1 {
            return arg_err(format!(
                "backward needs a scalar loss, got dims {:?}",
                self.shape()
            ));
        }
        if !self.requires_grad() {
            return Ok(());
        }

        // Parents are always created before their consumers, so descending
        // creation id is a valid reverse topological order.
        let mut nodes: BTreeMap<u64, Tensor<T>> = BTreeMap::new();
        let mut stack = vec![self.clone()];
        while let Some(t) = stack.pop() {
            if !t.requires_grad() || nodes.contains_key(&t.inner.id) {
                continue;
            }
            if let Some(gf) = &t.inner.grad_fn {
                stack.extend(gf.inputs.iter().filter(|i| i.requires_grad()).cloned());
            }
            nodes.insert(t.inner.id, t);
        }

        let mut grads: HashMap<u64, Vec<T>> = HashMap::new();
        grads.insert(self.inner.id, vec![T::one()]);
        for (id, node) in nodes.iter().rev() {
            let Some(g) = grads.remove(id) else { continue };
            match &node.inner.grad_fn {
                None => node.accumulate_grad(&g),
                Some(gf) => {
                    let output = node.data();
                    let ctx = BackwardCtx {
                        grad_out: &g,
                        output: &output,
                        inputs: &gf.inputs,
                    };
                    let input_grads = (gf.backward)(&ctx);
                    debug_assert_eq!(input_grads.len(), gf.inputs.len());
                    for (input, ig) in gf.inputs.iter().zip(input_grads) {
                        let Some(ig) = ig else { continue };
                        if !input.requires_grad() {
                            continue;
                        }
                        debug_assert_eq!(ig.len(), input.numel(), "grad size from {}", gf.op);
                        match grads.get_mut(&input.inner.id) {
                            Some(acc) => acc.iter_mut().zip(&ig).for_each(|(a, &b)| *a = *a + b),
                            None => {
                                grads.insert(input.inner.id, ig);
                            }
                        }
                    }
                }
            }
        }
        Ok(())
    }
}
