//! Reverse-mode autodiff over dense 2-D arrays.
//!
//! A [`Tape`] records one forward computation as a flat list of nodes; each
//! op pushes a node whose backward closure maps the node's output gradient
//! to gradients for its parents. [`Tape::backward`] walks the list in
//! reverse and accumulates.

use std::cell::RefCell;

use ndarray::{concatenate, s, Array2, Axis};
use num_traits::{FromPrimitive, ToPrimitive};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::ClickseqError;

/// Float widths the engine supports.
pub trait Scalar: ndarray::NdFloat + FromPrimitive + ToPrimitive {}
impl Scalar for f32 {}
impl Scalar for f64 {}

#[inline]
pub fn cast<F: Scalar>(x: f64) -> F {
    F::from_f64(x).expect("finite literal")
}

/// Handle to a node on a tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(pub(crate) usize);

type Backward<F> = Box<dyn Fn(&Array2<F>) -> Vec<Array2<F>>>;

struct Node<F: Scalar> {
    value: Array2<F>,
    parents: Vec<usize>,
    backward: Option<Backward<F>>,
}

/// One forward computation graph.
pub struct Tape<F: Scalar> {
    nodes: RefCell<Vec<Node<F>>>,
    training: bool,
    rng: RefCell<ChaCha8Rng>,
}

/// Gradients of one backward pass, indexed by [`Var`].
pub struct Grads<F: Scalar> {
    grads: Vec<Option<Array2<F>>>,
}

impl<F: Scalar> Grads<F> {
    /// Gradient of the loss w.r.t. `v`; zeros if the var did not contribute.
    pub fn get(&self, v: Var, shape: (usize, usize)) -> Array2<F> {
        match &self.grads[v.0] {
            Some(g) => g.clone(),
            None => Array2::zeros(shape),
        }
    }

    pub fn take(&mut self, v: Var) -> Option<Array2<F>> {
        self.grads[v.0].take()
    }
}

impl<F: Scalar> Default for Tape<F> {
    fn default() -> Self {
        Self::new()
    }
}

impl<F: Scalar> Tape<F> {
    /// Inference-mode tape: dropout is the identity.
    pub fn new() -> Self {
        Tape {
            nodes: RefCell::new(Vec::new()),
            training: false,
            rng: RefCell::new(ChaCha8Rng::seed_from_u64(0)),
        }
    }

    /// Training-mode tape; `seed` drives dropout masks.
    pub fn training(seed: u64) -> Self {
        Tape {
            nodes: RefCell::new(Vec::new()),
            training: true,
            rng: RefCell::new(ChaCha8Rng::seed_from_u64(seed)),
        }
    }

    pub fn is_training(&self) -> bool {
        self.training
    }

    fn push(&self, value: Array2<F>, parents: Vec<usize>, backward: Option<Backward<F>>) -> Var {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node { value, parents, backward });
        Var(nodes.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn value(&self, v: Var) -> Array2<F> {
        self.nodes.borrow()[v.0].value.clone()
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        let n = self.nodes.borrow();
        let s = n[v.0].value.dim();
        s
    }

    pub fn scalar(&self, v: Var) -> F {
        self.nodes.borrow()[v.0].value[(0, 0)]
    }

    /// Leaf node. Gradients w.r.t. leaves are available after `backward`.
    pub fn leaf(&self, value: Array2<F>) -> Var {
        self.push(value, vec![], None)
    }

    /// Alias of [`Tape::leaf`]; reads better for non-trainable inputs.
    pub fn constant(&self, value: Array2<F>) -> Var {
        self.leaf(value)
    }

    pub fn add(&self, a: Var, b: Var) -> Var {
        let (va, vb) = {
            let n = self.nodes.borrow();
            (n[a.0].value.clone(), n[b.0].value.clone())
        };
        assert_eq!(va.dim(), vb.dim(), "add shape mismatch");
        let out = &va + &vb;
        self.push(
            out,
            vec![a.0, b.0],
            Some(Box::new(|g: &Array2<F>| vec![g.clone(), g.clone()])),
        )
    }

    /// Adds a `(1, d)` row vector to every row of `a`.
    pub fn add_row(&self, a: Var, b: Var) -> Var {
        let (va, vb) = {
            let n = self.nodes.borrow();
            (n[a.0].value.clone(), n[b.0].value.clone())
        };
        assert_eq!(vb.nrows(), 1, "add_row rhs must be a single row");
        assert_eq!(va.ncols(), vb.ncols(), "add_row width mismatch");
        let out = &va + &vb.row(0);
        self.push(
            out,
            vec![a.0, b.0],
            Some(Box::new(|g: &Array2<F>| {
                let db = g.sum_axis(Axis(0)).insert_axis(Axis(0));
                vec![g.clone(), db]
            })),
        )
    }

    pub fn sub(&self, a: Var, b: Var) -> Var {
        let (va, vb) = {
            let n = self.nodes.borrow();
            (n[a.0].value.clone(), n[b.0].value.clone())
        };
        assert_eq!(va.dim(), vb.dim(), "sub shape mismatch");
        let out = &va - &vb;
        self.push(
            out,
            vec![a.0, b.0],
            Some(Box::new(|g: &Array2<F>| vec![g.clone(), g.mapv(|x| -x)])),
        )
    }

    pub fn mul(&self, a: Var, b: Var) -> Var {
        let (va, vb) = {
            let n = self.nodes.borrow();
            (n[a.0].value.clone(), n[b.0].value.clone())
        };
        assert_eq!(va.dim(), vb.dim(), "mul shape mismatch");
        let out = &va * &vb;
        self.push(
            out,
            vec![a.0, b.0],
            Some(Box::new(move |g: &Array2<F>| vec![g * &vb, g * &va])),
        )
    }

    pub fn scale(&self, a: Var, c: f64) -> Var {
        let va = self.nodes.borrow()[a.0].value.clone();
        let cf = cast::<F>(c);
        let out = va.mapv(|x| x * cf);
        self.push(
            out,
            vec![a.0],
            Some(Box::new(move |g: &Array2<F>| vec![g.mapv(|x| x * cf)])),
        )
    }

    /// `a (n,k) · b (k,m) -> (n,m)`.
    pub fn matmul(&self, a: Var, b: Var) -> Var {
        let (va, vb) = {
            let n = self.nodes.borrow();
            (n[a.0].value.clone(), n[b.0].value.clone())
        };
        assert_eq!(va.ncols(), vb.nrows(), "matmul inner dim mismatch");
        let out = va.dot(&vb);
        self.push(
            out,
            vec![a.0, b.0],
            Some(Box::new(move |g: &Array2<F>| {
                vec![g.dot(&vb.t()), va.t().dot(g)]
            })),
        )
    }

    /// `a (n,k) · b (m,k)ᵀ -> (n,m)`.
    pub fn matmul_nt(&self, a: Var, b: Var) -> Var {
        let (va, vb) = {
            let n = self.nodes.borrow();
            (n[a.0].value.clone(), n[b.0].value.clone())
        };
        assert_eq!(va.ncols(), vb.ncols(), "matmul_nt inner dim mismatch");
        let out = va.dot(&vb.t());
        self.push(
            out,
            vec![a.0, b.0],
            Some(Box::new(move |g: &Array2<F>| {
                vec![g.dot(&vb), g.t().dot(&va)]
            })),
        )
    }

    pub fn concat_rows(&self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty());
        let values: Vec<Array2<F>> = {
            let n = self.nodes.borrow();
            parts.iter().map(|v| n[v.0].value.clone()).collect()
        };
        let views: Vec<_> = values.iter().map(|v| v.view()).collect();
        let out = concatenate(Axis(0), &views).expect("concat_rows width mismatch");
        let sizes: Vec<usize> = values.iter().map(|v| v.nrows()).collect();
        self.push(
            out,
            parts.iter().map(|v| v.0).collect(),
            Some(Box::new(move |g: &Array2<F>| {
                let mut offset = 0;
                sizes
                    .iter()
                    .map(|&rows| {
                        let part = g.slice(s![offset..offset + rows, ..]).to_owned();
                        offset += rows;
                        part
                    })
                    .collect()
            })),
        )
    }

    pub fn concat_cols(&self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty());
        let values: Vec<Array2<F>> = {
            let n = self.nodes.borrow();
            parts.iter().map(|v| n[v.0].value.clone()).collect()
        };
        let views: Vec<_> = values.iter().map(|v| v.view()).collect();
        let out = concatenate(Axis(1), &views).expect("concat_cols height mismatch");
        let sizes: Vec<usize> = values.iter().map(|v| v.ncols()).collect();
        self.push(
            out,
            parts.iter().map(|v| v.0).collect(),
            Some(Box::new(move |g: &Array2<F>| {
                let mut offset = 0;
                sizes
                    .iter()
                    .map(|&cols| {
                        let part = g.slice(s![.., offset..offset + cols]).to_owned();
                        offset += cols;
                        part
                    })
                    .collect()
            })),
        )
    }

    pub fn slice_cols(&self, a: Var, start: usize, end: usize) -> Var {
        let va = self.nodes.borrow()[a.0].value.clone();
        assert!(start < end && end <= va.ncols(), "slice_cols out of range");
        let out = va.slice(s![.., start..end]).to_owned();
        let (rows, cols) = va.dim();
        self.push(
            out,
            vec![a.0],
            Some(Box::new(move |g: &Array2<F>| {
                let mut da = Array2::zeros((rows, cols));
                da.slice_mut(s![.., start..end]).assign(g);
                vec![da]
            })),
        )
    }

    pub fn select_row(&self, a: Var, row: usize) -> Var {
        let va = self.nodes.borrow()[a.0].value.clone();
        assert!(row < va.nrows(), "select_row out of range");
        let out = va.slice(s![row..row + 1, ..]).to_owned();
        let (rows, cols) = va.dim();
        self.push(
            out,
            vec![a.0],
            Some(Box::new(move |g: &Array2<F>| {
                let mut da = Array2::zeros((rows, cols));
                da.slice_mut(s![row..row + 1, ..]).assign(g);
                vec![da]
            })),
        )
    }

    pub fn mean_rows(&self, a: Var) -> Var {
        let va = self.nodes.borrow()[a.0].value.clone();
        let n = va.nrows();
        let out = va.mean_axis(Axis(0)).unwrap().insert_axis(Axis(0));
        let inv = cast::<F>(1.0 / n as f64);
        self.push(
            out,
            vec![a.0],
            Some(Box::new(move |g: &Array2<F>| {
                let row = g.mapv(|x| x * inv);
                let mut da = Array2::zeros((n, row.ncols()));
                for mut r in da.rows_mut() {
                    r.assign(&row.row(0));
                }
                vec![da]
            })),
        )
    }

    pub fn sum_all(&self, a: Var) -> Var {
        let va = self.nodes.borrow()[a.0].value.clone();
        let total = va.sum();
        let dim = va.dim();
        let out = Array2::from_elem((1, 1), total);
        self.push(
            out,
            vec![a.0],
            Some(Box::new(move |g: &Array2<F>| {
                vec![Array2::from_elem(dim, g[(0, 0)])]
            })),
        )
    }

    /// GELU with the tanh approximation.
    pub fn gelu(&self, a: Var) -> Var {
        let va = self.nodes.borrow()[a.0].value.clone();
        let c = cast::<F>(0.7978845608028654); // sqrt(2/pi)
        let k = cast::<F>(0.044715);
        let half = cast::<F>(0.5);
        let one = F::one();
        let three = cast::<F>(3.0);
        let out = va.mapv(|x| half * x * (one + (c * (x + k * x * x * x)).tanh()));
        self.push(
            out,
            vec![a.0],
            Some(Box::new(move |g: &Array2<F>| {
                let dv = va.mapv(|x| {
                    let u = c * (x + k * x * x * x);
                    let t = u.tanh();
                    half * (one + t) + half * x * (one - t * t) * c * (one + three * k * x * x)
                });
                vec![g * &dv]
            })),
        )
    }

    /// Per-row layer normalization with gain and bias rows.
    pub fn layernorm(&self, a: Var, gain: Var, bias: Var) -> Var {
        let (va, vg, vb) = {
            let n = self.nodes.borrow();
            (n[a.0].value.clone(), n[gain.0].value.clone(), n[bias.0].value.clone())
        };
        let d = va.ncols();
        assert_eq!(vg.dim(), (1, d), "layernorm gain shape");
        assert_eq!(vb.dim(), (1, d), "layernorm bias shape");
        let eps = cast::<F>(1e-5);
        let inv_d = cast::<F>(1.0 / d as f64);

        let mut xhat = Array2::zeros(va.dim());
        let mut inv_std = Vec::with_capacity(va.nrows());
        for (i, row) in va.rows().into_iter().enumerate() {
            let mean = row.sum() * inv_d;
            let var = row.fold(F::zero(), |acc, &x| acc + (x - mean) * (x - mean)) * inv_d;
            let istd = F::one() / (var + eps).sqrt();
            inv_std.push(istd);
            for (j, &x) in row.iter().enumerate() {
                xhat[(i, j)] = (x - mean) * istd;
            }
        }
        let out = &xhat * &vg.row(0) + &vb.row(0);
        let xhat_b = xhat.clone();
        self.push(
            out,
            vec![a.0, gain.0, bias.0],
            Some(Box::new(move |g: &Array2<F>| {
                let dgain = (g * &xhat_b).sum_axis(Axis(0)).insert_axis(Axis(0));
                let dbias = g.sum_axis(Axis(0)).insert_axis(Axis(0));
                let mut da = Array2::zeros(g.dim());
                for i in 0..g.nrows() {
                    let istd = inv_std[i];
                    // dxhat for this row
                    let mut m1 = F::zero();
                    let mut m2 = F::zero();
                    for j in 0..g.ncols() {
                        let dxh = g[(i, j)] * vg[(0, j)];
                        m1 = m1 + dxh;
                        m2 = m2 + dxh * xhat_b[(i, j)];
                    }
                    m1 = m1 * inv_d;
                    m2 = m2 * inv_d;
                    for j in 0..g.ncols() {
                        let dxh = g[(i, j)] * vg[(0, j)];
                        da[(i, j)] = istd * (dxh - m1 - xhat_b[(i, j)] * m2);
                    }
                }
                vec![da, dgain, dbias]
            })),
        )
    }

    /// Softmax along each row, restricted to `mask`ed-true columns. Invalid
    /// columns receive exactly zero weight.
    pub fn softmax_rows(&self, a: Var, mask: &[bool]) -> Var {
        let va = self.nodes.borrow()[a.0].value.clone();
        assert_eq!(mask.len(), va.ncols(), "softmax mask length");
        assert!(mask.iter().any(|&m| m), "softmax needs one valid slot");
        let mask = mask.to_vec();
        let mut out = Array2::zeros(va.dim());
        for (i, row) in va.rows().into_iter().enumerate() {
            let max = row
                .iter()
                .zip(&mask)
                .filter(|(_, &m)| m)
                .map(|(&x, _)| x)
                .fold(F::neg_infinity(), F::max);
            let mut denom = F::zero();
            for (j, &x) in row.iter().enumerate() {
                if mask[j] {
                    let e = (x - max).exp();
                    out[(i, j)] = e;
                    denom = denom + e;
                }
            }
            for j in 0..row.len() {
                out[(i, j)] = out[(i, j)] / denom;
            }
        }
        let y = out.clone();
        self.push(
            out,
            vec![a.0],
            Some(Box::new(move |g: &Array2<F>| {
                let mut da = Array2::zeros(g.dim());
                for i in 0..g.nrows() {
                    let mut dot = F::zero();
                    for j in 0..g.ncols() {
                        dot = dot + g[(i, j)] * y[(i, j)];
                    }
                    for j in 0..g.ncols() {
                        da[(i, j)] = y[(i, j)] * (g[(i, j)] - dot);
                    }
                }
                vec![da]
            })),
        )
    }

    /// Numerically stable masked softmax cross-entropy over a single row of
    /// logits. Returns `-log p(target)` as a `(1,1)` scalar.
    pub fn softmax_xent(&self, logits: Var, target: usize, mask: &[bool]) -> Result<Var, ClickseqError> {
        let vl = self.nodes.borrow()[logits.0].value.clone();
        if vl.nrows() != 1 || mask.len() != vl.ncols() {
            return Err(ClickseqError::ShapeMismatch(format!(
                "cross-entropy expects (1,n) logits and matching mask, got {:?} and {}",
                vl.dim(),
                mask.len()
            )));
        }
        if target >= mask.len() || !mask[target] {
            return Err(ClickseqError::TargetMasked);
        }
        let mask = mask.to_vec();
        let max = vl
            .row(0)
            .iter()
            .zip(&mask)
            .filter(|(_, &m)| m)
            .map(|(&x, _)| x)
            .fold(F::neg_infinity(), F::max);
        let mut denom = F::zero();
        let mut probs = vec![F::zero(); mask.len()];
        for (j, &m) in mask.iter().enumerate() {
            if m {
                let e = (vl[(0, j)] - max).exp();
                probs[j] = e;
                denom = denom + e;
            }
        }
        for p in probs.iter_mut() {
            *p = *p / denom;
        }
        let loss = -(probs[target].ln());
        let out = Array2::from_elem((1, 1), loss);
        Ok(self.push(
            out,
            vec![logits.0],
            Some(Box::new(move |g: &Array2<F>| {
                let scale = g[(0, 0)];
                let mut da = Array2::zeros((1, probs.len()));
                for (j, &m) in mask.iter().enumerate() {
                    if m {
                        let indicator = if j == target { F::one() } else { F::zero() };
                        da[(0, j)] = scale * (probs[j] - indicator);
                    }
                }
                vec![da]
            })),
        ))
    }

    /// Inverted dropout. Identity when the tape is in inference mode or the
    /// rate is zero.
    pub fn dropout(&self, a: Var, rate: f64) -> Var {
        if !self.training || rate <= 0.0 {
            return a;
        }
        let va = self.nodes.borrow()[a.0].value.clone();
        let keep = 1.0 - rate;
        let scale = cast::<F>(1.0 / keep);
        let mut rng = self.rng.borrow_mut();
        let mask = Array2::from_shape_fn(va.dim(), |_| {
            if rng.gen::<f64>() < keep {
                scale
            } else {
                F::zero()
            }
        });
        drop(rng);
        let out = &va * &mask;
        self.push(
            out,
            vec![a.0],
            Some(Box::new(move |g: &Array2<F>| vec![g * &mask])),
        )
    }

    /// Embedding lookup: gathers `ids` rows of `table` into an `(n, d)`
    /// matrix. The gradient scatters additively back into the table rows.
    pub fn gather_rows(&self, table: Var, ids: &[usize]) -> Result<Var, ClickseqError> {
        let vt = self.nodes.borrow()[table.0].value.clone();
        let (rows, cols) = vt.dim();
        for &id in ids {
            if id >= rows {
                return Err(ClickseqError::IndexOutOfRange { id, size: rows });
            }
        }
        let mut out = Array2::zeros((ids.len(), cols));
        for (i, &id) in ids.iter().enumerate() {
            out.row_mut(i).assign(&vt.row(id));
        }
        let ids = ids.to_vec();
        Ok(self.push(
            out,
            vec![table.0],
            Some(Box::new(move |g: &Array2<F>| {
                let mut dt = Array2::zeros((rows, cols));
                for (i, &id) in ids.iter().enumerate() {
                    let mut row = dt.row_mut(id);
                    row += &g.row(i);
                }
                vec![dt]
            })),
        ))
    }

    /// Reverse pass from a `(1,1)` scalar loss.
    pub fn backward(&self, loss: Var) -> Grads<F> {
        let nodes = self.nodes.borrow();
        let mut grads: Vec<Option<Array2<F>>> = vec![None; nodes.len()];
        grads[loss.0] = Some(Array2::from_elem(nodes[loss.0].value.dim(), F::one()));
        for i in (0..nodes.len()).rev() {
            let g = match grads[i].clone() {
                Some(g) => g,
                None => continue,
            };
            let node = &nodes[i];
            if let Some(backward) = &node.backward {
                let parent_grads = backward(&g);
                debug_assert_eq!(parent_grads.len(), node.parents.len());
                for (p, pg) in node.parents.iter().zip(parent_grads) {
                    match &mut grads[*p] {
                        Some(acc) => *acc += &pg,
                        slot => *slot = Some(pg),
                    }
                }
            }
        }
        Grads { grads }
    }
}
