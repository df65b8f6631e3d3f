//! A small reverse-mode automatic differentiation tape over dense `f64`
//! matrices.
//!
//! Every value is a 2-D matrix (vectors are `1 x d` rows). Operations are
//! recorded in creation order, so the node index is already a topological
//! order and [`Tape::backward`] just walks the list in reverse.

use std::cell::RefCell;
use std::rc::Rc;

use ndarray::{s, Array2, Axis};

pub type Mat = Array2<f64>;

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    MatMulNt(Var, Var),
    Transpose(Var),
    Add(Var, Var),
    Sub(Var, Var),
    AddRow(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    OneMinus(Var),
    Sigmoid(Var),
    Tanh(Var),
    GatherRows(Var, Rc<Vec<usize>>),
    ScatterAddRows { base: Var, rows: Var, index: Rc<Vec<usize>> },
    HCat(Vec<Var>),
    VCat(Vec<Var>),
    GatherCols(Var, Rc<Vec<usize>>),
    SliceCols(Var, usize, usize),
    MeanRows(Var),
    SoftmaxRows(Var),
    SegmentAttend { scores: Var, values: Var, groups: Rc<Vec<Vec<usize>>>, weights: Vec<Vec<f64>> },
    BinaryCrossEntropy { probs: Var, target: Rc<Vec<f64>>, eps: f64 },
    Sum(Vec<Var>),
}

struct Node {
    value: Rc<Mat>,
    op: Op,
    param: Option<usize>,
}

/// Records a forward computation so its gradient can be taken.
#[derive(Default)]
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
}

/// Gradients produced by [`Tape::backward`], indexed by node.
pub struct Gradients {
    grads: Vec<Option<Mat>>,
    params: Vec<(usize, usize)>,
}

impl Gradients {
    pub fn of(&self, v: Var) -> Option<&Mat> {
        self.grads[v.0].as_ref()
    }

    /// `(param id, gradient)` for every parameter leaf that received one.
    pub fn params(&self) -> impl Iterator<Item = (usize, &Mat)> {
        self.params
            .iter()
            .filter_map(|&(id, node)| self.grads[node].as_ref().map(|g| (id, g)))
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Numerically stable softmax of a slice.
pub fn softmax(xs: &[f64]) -> Vec<f64> {
    if xs.is_empty() {
        return Vec::new();
    }
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = xs.iter().map(|x| (x - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn push(&self, value: Mat, op: Op) -> Var {
        self.push_rc(Rc::new(value), op, None)
    }

    fn push_rc(&self, value: Rc<Mat>, op: Op, param: Option<usize>) -> Var {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node { value, op, param });
        Var(nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> Rc<Mat> {
        Rc::clone(&self.nodes.borrow()[v.0].value)
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.nodes.borrow()[v.0].value.dim()
    }

    /// Scalar value of a `1 x 1` node.
    pub fn scalar(&self, v: Var) -> f64 {
        let value = self.value(v);
        debug_assert_eq!(value.dim(), (1, 1));
        value[[0, 0]]
    }

    pub fn constant(&self, value: Mat) -> Var {
        self.push(value, Op::Leaf)
    }

    pub fn constant_rc(&self, value: Rc<Mat>) -> Var {
        self.push_rc(value, Op::Leaf, None)
    }

    /// A leaf whose gradient is reported under `id` by [`Gradients::params`].
    pub fn param(&self, id: usize, value: Rc<Mat>) -> Var {
        self.push_rc(value, Op::Leaf, Some(id))
    }

    pub fn matmul(&self, a: Var, b: Var) -> Var {
        let out = self.value(a).dot(&*self.value(b));
        self.push(out, Op::MatMul(a, b))
    }

    /// `a · bᵀ` without materializing the transpose.
    pub fn matmul_nt(&self, a: Var, b: Var) -> Var {
        let out = self.value(a).dot(&self.value(b).t());
        self.push(out, Op::MatMulNt(a, b))
    }

    pub fn transpose(&self, a: Var) -> Var {
        let out = self.value(a).t().to_owned();
        self.push(out, Op::Transpose(a))
    }

    pub fn add(&self, a: Var, b: Var) -> Var {
        let out = &*self.value(a) + &*self.value(b);
        self.push(out, Op::Add(a, b))
    }

    pub fn sub(&self, a: Var, b: Var) -> Var {
        let out = &*self.value(a) - &*self.value(b);
        self.push(out, Op::Sub(a, b))
    }

    /// Adds the `1 x d` row `row` to every row of `a`.
    pub fn add_row(&self, a: Var, row: Var) -> Var {
        let r = self.value(row);
        assert_eq!(r.nrows(), 1, "add_row expects a single row");
        let out = &*self.value(a) + &r.row(0);
        self.push(out, Op::AddRow(a, row))
    }

    pub fn mul(&self, a: Var, b: Var) -> Var {
        let out = &*self.value(a) * &*self.value(b);
        self.push(out, Op::Mul(a, b))
    }

    pub fn scale(&self, a: Var, c: f64) -> Var {
        let out = &*self.value(a) * c;
        self.push(out, Op::Scale(a, c))
    }

    pub fn one_minus(&self, a: Var) -> Var {
        let out = self.value(a).mapv(|x| 1.0 - x);
        self.push(out, Op::OneMinus(a))
    }

    pub fn sigmoid(&self, a: Var) -> Var {
        let out = self.value(a).mapv(sigmoid);
        self.push(out, Op::Sigmoid(a))
    }

    pub fn tanh(&self, a: Var) -> Var {
        let out = self.value(a).mapv(f64::tanh);
        self.push(out, Op::Tanh(a))
    }

    pub fn gather_rows(&self, a: Var, index: Rc<Vec<usize>>) -> Var {
        let src = self.value(a);
        let out = src.select(Axis(0), &index);
        self.push(out, Op::GatherRows(a, index))
    }

    /// `base` with `rows[k]` added onto row `index[k]`.
    pub fn scatter_add_rows(&self, base: Var, rows: Var, index: Rc<Vec<usize>>) -> Var {
        let mut out = (*self.value(base)).clone();
        let r = self.value(rows);
        assert_eq!(r.nrows(), index.len());
        for (k, &i) in index.iter().enumerate() {
            let mut dst = out.row_mut(i);
            dst += &r.row(k);
        }
        self.push(out, Op::ScatterAddRows { base, rows, index })
    }

    pub fn hcat(&self, parts: &[Var]) -> Var {
        let values: Vec<Rc<Mat>> = parts.iter().map(|&p| self.value(p)).collect();
        let views: Vec<_> = values.iter().map(|v| v.view()).collect();
        let out = ndarray::concatenate(Axis(1), &views).expect("hcat row counts differ");
        self.push(out, Op::HCat(parts.to_vec()))
    }

    pub fn vcat(&self, parts: &[Var]) -> Var {
        let values: Vec<Rc<Mat>> = parts.iter().map(|&p| self.value(p)).collect();
        let views: Vec<_> = values.iter().map(|v| v.view()).collect();
        let out = ndarray::concatenate(Axis(0), &views).expect("vcat column counts differ");
        self.push(out, Op::VCat(parts.to_vec()))
    }

    pub fn gather_cols(&self, a: Var, index: Rc<Vec<usize>>) -> Var {
        let out = self.value(a).select(Axis(1), &index);
        self.push(out, Op::GatherCols(a, index))
    }

    pub fn slice_cols(&self, a: Var, start: usize, end: usize) -> Var {
        let out = self.value(a).slice(s![.., start..end]).to_owned();
        self.push(out, Op::SliceCols(a, start, end))
    }

    /// Mean over rows, giving a `1 x d` row.
    pub fn mean_rows(&self, a: Var) -> Var {
        let v = self.value(a);
        assert!(v.nrows() > 0, "mean of zero rows");
        let out = v.mean_axis(Axis(0)).unwrap().insert_axis(Axis(0));
        self.push(out, Op::MeanRows(a))
    }

    pub fn softmax_rows(&self, a: Var) -> Var {
        let v = self.value(a);
        let mut out = Mat::zeros(v.dim());
        for (src, mut dst) in v.rows().into_iter().zip(out.rows_mut()) {
            let row = softmax(&src.to_vec());
            for (d, x) in dst.iter_mut().zip(row) {
                *d = x;
            }
        }
        self.push(out, Op::SoftmaxRows(a))
    }

    /// For each group `g`, a softmax over `scores[g[..]]` used to weight the
    /// matching rows of `values`. An empty group yields a zero row.
    ///
    /// `scores` is `n x 1`, `values` is `n x d`, the result is `groups.len() x d`.
    pub fn segment_attend(&self, scores: Var, values: Var, groups: Rc<Vec<Vec<usize>>>) -> Var {
        let s = self.value(scores);
        let v = self.value(values);
        assert_eq!(s.ncols(), 1, "segment_attend scores must be a column");
        assert_eq!(s.nrows(), v.nrows());
        let mut out = Mat::zeros((groups.len(), v.ncols()));
        let mut weights = Vec::with_capacity(groups.len());
        for (g, members) in groups.iter().enumerate() {
            let logits: Vec<f64> = members.iter().map(|&i| s[[i, 0]]).collect();
            let w = softmax(&logits);
            let mut dst = out.row_mut(g);
            for (&i, &wi) in members.iter().zip(&w) {
                dst.scaled_add(wi, &v.row(i));
            }
            weights.push(w);
        }
        self.push(out, Op::SegmentAttend { scores, values, groups, weights })
    }

    /// Sum over entries of `-[t log p + (1 - t) log(1 - p)]` with `p` clamped
    /// to `[eps, 1 - eps]`. Returns `1 x 1`.
    pub fn binary_cross_entropy(&self, probs: Var, target: Rc<Vec<f64>>, eps: f64) -> Var {
        let p = self.value(probs);
        assert_eq!(p.len(), target.len());
        let total: f64 = p
            .iter()
            .zip(target.iter())
            .map(|(&pi, &ti)| {
                let q = pi.clamp(eps, 1.0 - eps);
                -(ti * q.ln() + (1.0 - ti) * (1.0 - q).ln())
            })
            .sum();
        self.push(Mat::from_elem((1, 1), total), Op::BinaryCrossEntropy { probs, target, eps })
    }

    pub fn sum(&self, parts: &[Var]) -> Var {
        let mut out = (*self.value(parts[0])).clone();
        for &p in &parts[1..] {
            out += &*self.value(p);
        }
        self.push(out, Op::Sum(parts.to_vec()))
    }

    /// Reverse pass from the scalar node `root`.
    pub fn backward(&self, root: Var) -> Gradients {
        let nodes = self.nodes.borrow();
        let mut grads: Vec<Option<Mat>> = (0..nodes.len()).map(|_| None).collect();
        grads[root.0] = Some(Mat::ones(nodes[root.0].value.dim()));

        fn acc(grads: &mut [Option<Mat>], v: Var, g: Mat) {
            match &mut grads[v.0] {
                Some(existing) => *existing += &g,
                slot => *slot = Some(g),
            }
        }

        for idx in (0..=root.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &nodes[idx];
            let val = |v: Var| &nodes[v.0].value;
            match &node.op {
                Op::Leaf => {}
                Op::MatMul(a, b) => {
                    acc(&mut grads, *a, g.dot(&val(*b).t()));
                    acc(&mut grads, *b, val(*a).t().dot(&g));
                }
                Op::MatMulNt(a, b) => {
                    acc(&mut grads, *a, g.dot(&**val(*b)));
                    acc(&mut grads, *b, g.t().dot(&**val(*a)));
                }
                Op::Transpose(a) => acc(&mut grads, *a, g.t().to_owned()),
                Op::Add(a, b) => {
                    acc(&mut grads, *a, g.clone());
                    acc(&mut grads, *b, g.clone());
                }
                Op::Sub(a, b) => {
                    acc(&mut grads, *a, g.clone());
                    acc(&mut grads, *b, -&g);
                }
                Op::AddRow(a, row) => {
                    acc(&mut grads, *row, g.sum_axis(Axis(0)).insert_axis(Axis(0)));
                    acc(&mut grads, *a, g.clone());
                }
                Op::Mul(a, b) => {
                    acc(&mut grads, *a, &g * &**val(*b));
                    acc(&mut grads, *b, &g * &**val(*a));
                }
                Op::Scale(a, c) => acc(&mut grads, *a, &g * *c),
                Op::OneMinus(a) => acc(&mut grads, *a, -&g),
                Op::Sigmoid(a) => {
                    let y = &node.value;
                    acc(&mut grads, *a, &g * &y.mapv(|s| s * (1.0 - s)));
                }
                Op::Tanh(a) => {
                    let y = &node.value;
                    acc(&mut grads, *a, &g * &y.mapv(|t| 1.0 - t * t));
                }
                Op::GatherRows(a, index) => {
                    let mut ga = Mat::zeros(val(*a).dim());
                    for (k, &i) in index.iter().enumerate() {
                        let mut dst = ga.row_mut(i);
                        dst += &g.row(k);
                    }
                    acc(&mut grads, *a, ga);
                }
                Op::ScatterAddRows { base, rows, index } => {
                    acc(&mut grads, *rows, g.select(Axis(0), index));
                    acc(&mut grads, *base, g.clone());
                }
                Op::HCat(parts) => {
                    let mut start = 0;
                    for &p in parts {
                        let w = val(p).ncols();
                        acc(&mut grads, p, g.slice(s![.., start..start + w]).to_owned());
                        start += w;
                    }
                }
                Op::VCat(parts) => {
                    let mut start = 0;
                    for &p in parts {
                        let h = val(p).nrows();
                        acc(&mut grads, p, g.slice(s![start..start + h, ..]).to_owned());
                        start += h;
                    }
                }
                Op::GatherCols(a, index) => {
                    let mut ga = Mat::zeros(val(*a).dim());
                    for (k, &j) in index.iter().enumerate() {
                        let mut dst = ga.column_mut(j);
                        dst += &g.column(k);
                    }
                    acc(&mut grads, *a, ga);
                }
                Op::SliceCols(a, start, end) => {
                    let mut ga = Mat::zeros(val(*a).dim());
                    ga.slice_mut(s![.., *start..*end]).assign(&g);
                    acc(&mut grads, *a, ga);
                }
                Op::MeanRows(a) => {
                    let n = val(*a).nrows();
                    let row = g.row(0).mapv(|x| x / n as f64);
                    let ga = row.broadcast(val(*a).dim()).unwrap().to_owned();
                    acc(&mut grads, *a, ga);
                }
                Op::SoftmaxRows(a) => {
                    let y = &node.value;
                    let mut ga = Mat::zeros(y.dim());
                    for ((yr, gr), mut dst) in y.rows().into_iter().zip(g.rows()).zip(ga.rows_mut()) {
                        let dot: f64 = yr.iter().zip(gr.iter()).map(|(a, b)| a * b).sum();
                        for ((d, &yi), &gi) in dst.iter_mut().zip(yr.iter()).zip(gr.iter()) {
                            *d = yi * (gi - dot);
                        }
                    }
                    acc(&mut grads, *a, ga);
                }
                Op::SegmentAttend { scores, values, groups, weights } => {
                    let v = val(*values);
                    let mut gs = Mat::zeros(val(*scores).dim());
                    let mut gv = Mat::zeros(v.dim());
                    for (gi, (members, w)) in groups.iter().zip(weights).enumerate() {
                        let grow = g.row(gi);
                        // d out / d w_k = v_k ; softmax Jacobian folds that into scores.
                        let dots: Vec<f64> = members.iter().map(|&i| grow.dot(&v.row(i))).collect();
                        let mean: f64 = dots.iter().zip(w).map(|(dk, wk)| dk * wk).sum();
                        for ((&i, &wk), dk) in members.iter().zip(w).zip(&dots) {
                            gs[[i, 0]] += wk * (dk - mean);
                            gv.row_mut(i).scaled_add(wk, &grow);
                        }
                    }
                    acc(&mut grads, *scores, gs);
                    acc(&mut grads, *values, gv);
                }
                Op::BinaryCrossEntropy { probs, target, eps } => {
                    let p = val(*probs);
                    let upstream = g[[0, 0]];
                    let mut gp = Mat::zeros(p.dim());
                    for ((d, &pi), &ti) in gp.iter_mut().zip(p.iter()).zip(target.iter()) {
                        if pi > *eps && pi < 1.0 - *eps {
                            *d = upstream * (-ti / pi + (1.0 - ti) / (1.0 - pi));
                        }
                    }
                    acc(&mut grads, *probs, gp);
                }
                Op::Sum(parts) => {
                    for &p in parts {
                        acc(&mut grads, p, g.clone());
                    }
                }
            }
            grads[idx] = Some(g);
        }

        let params = nodes
            .iter()
            .enumerate()
            .filter_map(|(i, n)| n.param.map(|id| (id, i)))
            .collect();
        Gradients { grads, params }
    }
}
