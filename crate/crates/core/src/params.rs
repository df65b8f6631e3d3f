//! Named parameter tensors, binding onto a [`Tape`], and the Adam optimizer.

use std::cell::{Cell, RefCell};
use std::rc::Rc;

use ndarray::Array2;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::tape::{Gradients, Mat, Tape, Var};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ParamId(pub usize);

#[derive(Debug, Clone, PartialEq)]
pub struct ParamStore {
    names: Vec<String>,
    values: Vec<Rc<Mat>>,
}

#[derive(Debug, Clone, Copy)]
pub enum Init {
    Zeros,
    /// Uniform in `[-1/sqrt(fan), 1/sqrt(fan)]`.
    Uniform { fan: usize },
}

impl Default for ParamStore {
    fn default() -> Self {
        Self::new()
    }
}

impl ParamStore {
    pub fn new() -> Self {
        ParamStore { names: Vec::new(), values: Vec::new() }
    }

    pub fn add(&mut self, name: impl Into<String>, value: Mat) -> ParamId {
        let name = name.into();
        assert!(self.id(&name).is_none(), "duplicate parameter {name}");
        self.names.push(name);
        self.values.push(Rc::new(value));
        ParamId(self.values.len() - 1)
    }

    pub fn add_init(&mut self, name: impl Into<String>, shape: (usize, usize), init: Init, rng: &mut ChaCha8Rng) -> ParamId {
        let value = match init {
            Init::Zeros => Mat::zeros(shape),
            Init::Uniform { fan } => {
                let bound = 1.0 / (fan.max(1) as f64).sqrt();
                Array2::from_shape_simple_fn(shape, || rng.gen_range(-bound..=bound))
            }
        };
        self.add(name, value)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.names.iter().position(|n| n == name).map(ParamId)
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn get(&self, id: ParamId) -> &Mat {
        &self.values[id.0]
    }

    pub fn get_rc(&self, id: ParamId) -> Rc<Mat> {
        Rc::clone(&self.values[id.0])
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Mat {
        Rc::make_mut(&mut self.values[id.0])
    }

    pub fn set(&mut self, id: ParamId, value: Mat) {
        assert_eq!(self.values[id.0].dim(), value.dim(), "shape change for {}", self.names[id.0]);
        self.values[id.0] = Rc::new(value);
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &str, &Mat)> {
        self.names
            .iter()
            .zip(&self.values)
            .enumerate()
            .map(|(i, (n, v))| (ParamId(i), n.as_str(), &**v))
    }

    pub fn n_scalars(&self) -> usize {
        self.values.iter().map(|v| v.len()).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.values.iter().all(|v| v.iter().all(|x| x.is_finite()))
    }
}

/// A forward pass over a [`ParamStore`]: parameters are bound to tape leaves
/// on first use, and reads are counted per parameter.
pub struct Forward<'a> {
    pub tape: Tape,
    store: &'a ParamStore,
    bound: RefCell<Vec<Option<Var>>>,
    reads: Vec<Cell<usize>>,
}

impl<'a> Forward<'a> {
    pub fn new(store: &'a ParamStore) -> Self {
        Forward {
            tape: Tape::new(),
            store,
            bound: RefCell::new(vec![None; store.len()]),
            reads: (0..store.len()).map(|_| Cell::new(0)).collect(),
        }
    }

    pub fn p(&self, id: ParamId) -> Var {
        self.reads[id.0].set(self.reads[id.0].get() + 1);
        let mut bound = self.bound.borrow_mut();
        *bound[id.0].get_or_insert_with(|| self.tape.param(id.0, self.store.get_rc(id)))
    }

    pub fn reads(&self, id: ParamId) -> usize {
        self.reads[id.0].get()
    }

    pub fn store(&self) -> &ParamStore {
        self.store
    }

    /// Gradient per parameter (zeros for parameters the pass never touched).
    pub fn gradients(&self, loss: Var) -> Vec<Mat> {
        let grads: Gradients = self.tape.backward(loss);
        let mut out: Vec<Mat> = self.store.values.iter().map(|v| Mat::zeros(v.dim())).collect();
        for (id, g) in grads.params() {
            out[id] += g;
        }
        out
    }
}

/// Adam with decoupled weight decay.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    pub step: u64,
    m: Vec<Mat>,
    v: Vec<Mat>,
}

impl Adam {
    pub fn new(store: &ParamStore, lr: f64, weight_decay: f64) -> Self {
        let zeros: Vec<Mat> = store.values.iter().map(|v| Mat::zeros(v.dim())).collect();
        Adam { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8, weight_decay, step: 0, m: zeros.clone(), v: zeros }
    }

    pub fn update(&mut self, store: &mut ParamStore, grads: &[Mat]) {
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        for (i, g) in grads.iter().enumerate() {
            let (b1, b2, lr, eps, wd) = (self.beta1, self.beta2, self.lr, self.eps, self.weight_decay);
            let m = &mut self.m[i];
            let v = &mut self.v[i];
            let p = Rc::make_mut(&mut store.values[i]);
            ndarray::Zip::from(p).and(m).and(v).and(g).for_each(|p, m, v, &g| {
                *m = b1 * *m + (1.0 - b1) * g;
                *v = b2 * *v + (1.0 - b2) * g * g;
                let mh = *m / c1;
                let vh = *v / c2;
                *p -= lr * (mh / (vh.sqrt() + eps) + wd * *p);
            });
        }
    }
}

/// Central finite-difference gradient of `f` with respect to one parameter.
pub fn finite_difference<F>(store: &ParamStore, id: ParamId, h: f64, f: F) -> Mat
where
    F: Fn(&ParamStore) -> f64,
{
    let mut work = store.clone();
    let shape = store.get(id).dim();
    let mut out = Mat::zeros(shape);
    for r in 0..shape.0 {
        for c in 0..shape.1 {
            let orig = work.get(id)[[r, c]];
            work.get_mut(id)[[r, c]] = orig + h;
            let up = f(&work);
            work.get_mut(id)[[r, c]] = orig - h;
            let down = f(&work);
            work.get_mut(id)[[r, c]] = orig;
            out[[r, c]] = (up - down) / (2.0 * h);
        }
    }
    out
}

/// `‖a − b‖ / max(‖a‖, ‖b‖)`, or 0 when both are (numerically) zero.
pub fn relative_error(a: &Mat, b: &Mat) -> f64 {
    let diff = (a - b).mapv(|x| x * x).sum().sqrt();
    let scale = a.mapv(|x| x * x).sum().sqrt().max(b.mapv(|x| x * x).sum().sqrt());
    if scale < 1e-12 {
        0.0
    } else {
        diff / scale
    }
}
