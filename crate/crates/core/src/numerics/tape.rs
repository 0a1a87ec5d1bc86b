//! Reverse-mode differentiation via a Wengert tape.
//!
//! Forward helpers compute values eagerly and record one node per primitive.
//! [`Tape::backward`] walks the nodes once in reverse, accumulating gradients
//! into per-store [`Gradients`] maps. Parameters are memoized per
//! `(store, name)` pair, so a network applied several times in one graph
//! shares leaves and its gradient contributions sum naturally.

use std::collections::HashMap;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::numerics::{Gradients, Matrix, ParamStore};

/// Handle to a value recorded on the tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    /// Input data or other non-differentiated constant.
    Constant,
    /// Leaf bound to `(store, name)`.
    Param { store: usize, name: String },
    MatMul { a: Var, b: Var },
    Add { a: Var, b: Var },
    /// `a + row` with `row` a 1xC matrix broadcast over the rows of `a`.
    AddRow { a: Var, row: Var },
    Sub { a: Var, b: Var },
    /// Elementwise product.
    Mul { a: Var, b: Var },
    Scale { a: Var, c: f64 },
    AddScalar { a: Var },
    Relu { a: Var },
    /// Mask entries are 0 or 1/(1-p) (inverted scaling), fixed at forward time.
    Dropout { a: Var, mask: Matrix },
    /// Training-mode batch normalization; saves what backward needs.
    BatchNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        x_hat: Matrix,
        inv_std: Vec<f64>,
    },
    Concat { parts: Vec<Var> },
    SliceCols { a: Var, start: usize },
    /// Column subset in a given order; backward scatter-adds.
    GatherCols { a: Var, indices: Vec<usize> },
    /// Columns of `a` written into a wider zero matrix at `indices`.
    ScatterCols { a: Var, indices: Vec<usize> },
    /// One output coordinate block of a per-row 3D rotation.
    RotateRows {
        x: Var,
        y: Var,
        z: Var,
        rots: Arc<Vec<[[f64; 3]; 3]>>,
        axis: usize,
    },
    /// Sum of squares of all entries, a 1x1 output.
    SumSquares { a: Var },
    /// Mean of all entries, a 1x1 output.
    Mean { a: Var },
    /// `a - col` with `col` a Bx1 matrix broadcast across columns.
    SubCol { a: Var, col: Var },
    /// `a * col` elementwise with `col` a Bx1 matrix broadcast across columns.
    MulCol { a: Var, col: Var },
    /// Per-row max of |entry| over the horizontally concatenated parts;
    /// backward routes to the first attaining entry (subgradient).
    RowMaxAbs {
        parts: Vec<Var>,
        argmax: Vec<(usize, usize)>,
        sign: Vec<f64>,
    },
    /// Elementwise reciprocal.
    Recip { a: Var },
}

struct Node {
    value: Matrix,
    op: Op,
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
    param_cache: HashMap<(usize, String), Var>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[v.0].value
    }

    /// Value of a 1x1 node.
    pub fn scalar(&self, v: Var) -> f64 {
        let m = self.value(v);
        assert_eq!(m.shape(), (1, 1), "scalar() on non-scalar node");
        m[(0, 0)]
    }

    fn push(&mut self, value: Matrix, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn constant(&mut self, value: Matrix) -> Var {
        self.push(value, Op::Constant)
    }

    /// Bind a parameter leaf; repeated binds of the same `(store, name)`
    /// return the same node.
    pub fn param(&mut self, store_idx: usize, name: &str, store: &ParamStore) -> Var {
        let key = (store_idx, name.to_string());
        if let Some(&v) = self.param_cache.get(&key) {
            return v;
        }
        let v = self.push(
            store.get(name).clone(),
            Op::Param {
                store: store_idx,
                name: name.to_string(),
            },
        );
        self.param_cache.insert(key, v);
        v
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a).matmul(self.value(b)).expect("matmul shapes");
        self.push(value, Op::MatMul { a, b })
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a).add(self.value(b)).expect("add shapes");
        self.push(value, Op::Add { a, b })
    }

    pub fn add_row(&mut self, a: Var, row: Var) -> Var {
        let (ar, ac) = self.value(a).shape();
        let rv = self.value(row);
        assert_eq!(rv.shape(), (1, ac), "add_row broadcast shape");
        let mut out = self.value(a).clone();
        for r in 0..ar {
            for c in 0..ac {
                out[(r, c)] += rv[(0, c)];
            }
        }
        self.push(out, Op::AddRow { a, row })
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a).sub(self.value(b)).expect("sub shapes");
        self.push(value, Op::Sub { a, b })
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let value = self
            .value(a)
            .zip_map(self.value(b), |x, y| x * y)
            .expect("mul shapes");
        self.push(value, Op::Mul { a, b })
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let value = self.value(a).scale(c);
        self.push(value, Op::Scale { a, c })
    }

    pub fn neg(&mut self, a: Var) -> Var {
        self.scale(a, -1.0)
    }

    pub fn add_scalar(&mut self, a: Var, c: f64) -> Var {
        let value = self.value(a).map(|v| v + c);
        self.push(value, Op::AddScalar { a })
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let value = self.value(a).map(|v| v.max(0.0));
        self.push(value, Op::Relu { a })
    }

    /// Inverted-scaling dropout with a caller-supplied mask whose entries are
    /// 0 (dropped) or 1/(1-p) (kept).
    pub fn dropout(&mut self, a: Var, mask: Matrix) -> Var {
        let value = self
            .value(a)
            .zip_map(&mask, |x, m| x * m)
            .expect("dropout mask shape");
        self.push(value, Op::Dropout { a, mask })
    }

    /// Training-mode batch normalization over the rows of `x`.
    ///
    /// Returns the output plus the per-feature batch mean and biased variance
    /// so the caller can update running statistics. Fails for batches of fewer
    /// than two rows, where the statistics are undefined.
    pub fn batch_norm_train(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        eps: f64,
    ) -> Result<(Var, Vec<f64>, Vec<f64>)> {
        let xv = self.value(x);
        let (rows, cols) = xv.shape();
        if rows < 2 {
            return Err(Error::Config(
                "batch normalization undefined in training mode for batch size < 2".into(),
            ));
        }
        let n = rows as f64;
        let mut mean = vec![0.0; cols];
        for r in 0..rows {
            for c in 0..cols {
                mean[c] += xv[(r, c)];
            }
        }
        for m in &mut mean {
            *m /= n;
        }
        let mut var = vec![0.0; cols];
        for r in 0..rows {
            for c in 0..cols {
                let d = xv[(r, c)] - mean[c];
                var[c] += d * d;
            }
        }
        for v in &mut var {
            *v /= n;
        }
        let inv_std: Vec<f64> = var.iter().map(|&v| 1.0 / (v + eps).sqrt()).collect();
        let mut x_hat = Matrix::zeros(rows, cols);
        for r in 0..rows {
            for c in 0..cols {
                x_hat[(r, c)] = (xv[(r, c)] - mean[c]) * inv_std[c];
            }
        }
        let gv = self.value(gamma);
        let bv = self.value(beta);
        assert_eq!(gv.shape(), (1, cols), "gamma shape");
        assert_eq!(bv.shape(), (1, cols), "beta shape");
        let mut out = Matrix::zeros(rows, cols);
        for r in 0..rows {
            for c in 0..cols {
                out[(r, c)] = gv[(0, c)] * x_hat[(r, c)] + bv[(0, c)];
            }
        }
        let v = self.push(
            out,
            Op::BatchNorm {
                x,
                gamma,
                beta,
                x_hat,
                inv_std,
            },
        );
        Ok((v, mean, var))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        let values: Vec<&Matrix> = parts.iter().map(|&p| self.value(p)).collect();
        let out = Matrix::concat_cols(&values);
        self.push(
            out,
            Op::Concat {
                parts: parts.to_vec(),
            },
        )
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Var {
        let value = self.value(a).slice_cols(start, len);
        self.push(value, Op::SliceCols { a, start })
    }

    pub fn gather_cols(&mut self, a: Var, indices: &[usize]) -> Var {
        let av = self.value(a);
        let mut out = Matrix::zeros(av.rows(), indices.len());
        for r in 0..av.rows() {
            for (j, &idx) in indices.iter().enumerate() {
                out[(r, j)] = av[(r, idx)];
            }
        }
        self.push(
            out,
            Op::GatherCols {
                a,
                indices: indices.to_vec(),
            },
        )
    }

    /// Place the columns of `a` at `indices` inside a Bx`width` zero matrix.
    pub fn scatter_cols(&mut self, a: Var, indices: &[usize], width: usize) -> Var {
        let av = self.value(a);
        assert_eq!(av.cols(), indices.len(), "scatter_cols index count");
        let mut out = Matrix::zeros(av.rows(), width);
        for r in 0..av.rows() {
            for (j, &idx) in indices.iter().enumerate() {
                out[(r, idx)] = av[(r, j)];
            }
        }
        self.push(
            out,
            Op::ScatterCols {
                a,
                indices: indices.to_vec(),
            },
        )
    }

    /// Per-row 3D rotation of coordinate blocks.
    ///
    /// `x`, `y`, `z` are BxN blocks; `rots` holds one rotation matrix per row.
    /// Returns the rotated `(x', y', z')` blocks.
    pub fn rotate_rows(
        &mut self,
        x: Var,
        y: Var,
        z: Var,
        rots: Arc<Vec<[[f64; 3]; 3]>>,
    ) -> (Var, Var, Var) {
        let (rows, cols) = self.value(x).shape();
        assert_eq!(self.value(y).shape(), (rows, cols));
        assert_eq!(self.value(z).shape(), (rows, cols));
        assert_eq!(rots.len(), rows, "one rotation per row");
        let mut outs = Vec::with_capacity(3);
        for axis in 0..3 {
            let mut out = Matrix::zeros(rows, cols);
            {
                let xv = self.value(x);
                let yv = self.value(y);
                let zv = self.value(z);
                for r in 0..rows {
                    let rm = &rots[r][axis];
                    for c in 0..cols {
                        out[(r, c)] = rm[0] * xv[(r, c)] + rm[1] * yv[(r, c)] + rm[2] * zv[(r, c)];
                    }
                }
            }
            outs.push(self.push(
                out,
                Op::RotateRows {
                    x,
                    y,
                    z,
                    rots: Arc::clone(&rots),
                    axis,
                },
            ));
        }
        (outs[0], outs[1], outs[2])
    }

    pub fn sub_col(&mut self, a: Var, col: Var) -> Var {
        let av = self.value(a);
        let cv = self.value(col);
        assert_eq!(cv.shape(), (av.rows(), 1), "sub_col broadcast shape");
        let mut out = av.clone();
        for r in 0..out.rows() {
            let c = cv[(r, 0)];
            for j in 0..out.cols() {
                out[(r, j)] -= c;
            }
        }
        self.push(out, Op::SubCol { a, col })
    }

    pub fn mul_col(&mut self, a: Var, col: Var) -> Var {
        let av = self.value(a);
        let cv = self.value(col);
        assert_eq!(cv.shape(), (av.rows(), 1), "mul_col broadcast shape");
        let mut out = av.clone();
        for r in 0..out.rows() {
            let c = cv[(r, 0)];
            for j in 0..out.cols() {
                out[(r, j)] *= c;
            }
        }
        self.push(out, Op::MulCol { a, col })
    }

    /// Per-row max-abs over the concatenation of `parts`, as a Bx1 column.
    pub fn row_max_abs(&mut self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty());
        let rows = self.value(parts[0]).rows();
        let mut out = Matrix::zeros(rows, 1);
        let mut argmax = vec![(0usize, 0usize); rows];
        let mut sign = vec![1.0f64; rows];
        for r in 0..rows {
            let mut best = f64::NEG_INFINITY;
            for (pi, &p) in parts.iter().enumerate() {
                let pv = self.value(p);
                assert_eq!(pv.rows(), rows, "row_max_abs row count");
                for j in 0..pv.cols() {
                    let v = pv[(r, j)];
                    if v.abs() > best {
                        best = v.abs();
                        argmax[r] = (pi, j);
                        sign[r] = if v < 0.0 { -1.0 } else { 1.0 };
                    }
                }
            }
            out[(r, 0)] = best;
        }
        self.push(
            out,
            Op::RowMaxAbs {
                parts: parts.to_vec(),
                argmax,
                sign,
            },
        )
    }

    pub fn recip(&mut self, a: Var) -> Var {
        let value = self.value(a).map(|v| 1.0 / v);
        self.push(value, Op::Recip { a })
    }

    pub fn sum_squares(&mut self, a: Var) -> Var {
        let s = self.value(a).sum_squares();
        self.push(Matrix::from_vec(1, 1, vec![s]).unwrap(), Op::SumSquares { a })
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let v = self.value(a);
        let s = v.sum() / v.len() as f64;
        self.push(Matrix::from_vec(1, 1, vec![s]).unwrap(), Op::Mean { a })
    }

    /// Reverse sweep from a scalar loss.
    ///
    /// Returns one [`Gradients`] per store in `stores`, with zeros for
    /// parameters the loss does not depend on.
    pub fn backward(&self, loss: Var, stores: &[&ParamStore]) -> Result<Vec<Gradients>> {
        if self.value(loss).shape() != (1, 1) {
            return Err(Error::Contract(format!(
                "backward requires a scalar loss node, got {:?}",
                self.value(loss).shape()
            )));
        }
        let mut grads: Vec<Option<Matrix>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Matrix::from_vec(1, 1, vec![1.0]).unwrap());

        let mut out: Vec<Gradients> = stores.iter().map(|s| Gradients::zeros_like(s)).collect();

        for idx in (0..self.nodes.len()).rev() {
            let g = match grads[idx].take() {
                Some(g) => g,
                None => continue,
            };
            match &self.nodes[idx].op {
                Op::Constant => {}
                Op::Param { store, name } => {
                    if let Some(target) = out.get_mut(*store) {
                        target.accumulate(name, &g);
                    }
                }
                Op::MatMul { a, b } => {
                    let (av, bv) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
                    let ga = grads[a.0].get_or_insert_with(|| Matrix::zeros(av.rows(), av.cols()));
                    ga.gemm_acc(1.0, &g, false, bv, true);
                    let gb = grads[b.0].get_or_insert_with(|| Matrix::zeros(bv.rows(), bv.cols()));
                    gb.gemm_acc(1.0, av, true, &g, false);
                }
                Op::Add { a, b } => {
                    accumulate(&mut grads, *a, &g, &self.nodes);
                    accumulate(&mut grads, *b, &g, &self.nodes);
                }
                Op::AddRow { a, row } => {
                    accumulate(&mut grads, *a, &g, &self.nodes);
                    let mut rg = Matrix::zeros(1, g.cols());
                    for r in 0..g.rows() {
                        for c in 0..g.cols() {
                            rg[(0, c)] += g[(r, c)];
                        }
                    }
                    accumulate(&mut grads, *row, &rg, &self.nodes);
                }
                Op::Sub { a, b } => {
                    accumulate(&mut grads, *a, &g, &self.nodes);
                    let neg = g.scale(-1.0);
                    accumulate(&mut grads, *b, &neg, &self.nodes);
                }
                Op::Mul { a, b } => {
                    let ga = g
                        .zip_map(&self.nodes[b.0].value, |x, y| x * y)
                        .expect("mul backward");
                    let gb = g
                        .zip_map(&self.nodes[a.0].value, |x, y| x * y)
                        .expect("mul backward");
                    accumulate(&mut grads, *a, &ga, &self.nodes);
                    accumulate(&mut grads, *b, &gb, &self.nodes);
                }
                Op::Scale { a, c } => {
                    let ga = g.scale(*c);
                    accumulate(&mut grads, *a, &ga, &self.nodes);
                }
                Op::AddScalar { a } => {
                    accumulate(&mut grads, *a, &g, &self.nodes);
                }
                Op::Relu { a } => {
                    let ga = g
                        .zip_map(&self.nodes[a.0].value, |gv, xv| if xv > 0.0 { gv } else { 0.0 })
                        .expect("relu backward");
                    accumulate(&mut grads, *a, &ga, &self.nodes);
                }
                Op::Dropout { a, mask } => {
                    let ga = g.zip_map(mask, |gv, m| gv * m).expect("dropout backward");
                    accumulate(&mut grads, *a, &ga, &self.nodes);
                }
                Op::BatchNorm {
                    x,
                    gamma,
                    beta,
                    x_hat,
                    inv_std,
                } => {
                    let (rows, cols) = g.shape();
                    let n = rows as f64;
                    let gv = &self.nodes[gamma.0].value;
                    let mut d_beta = Matrix::zeros(1, cols);
                    let mut d_gamma = Matrix::zeros(1, cols);
                    for r in 0..rows {
                        for c in 0..cols {
                            d_beta[(0, c)] += g[(r, c)];
                            d_gamma[(0, c)] += g[(r, c)] * x_hat[(r, c)];
                        }
                    }
                    let mut dx = Matrix::zeros(rows, cols);
                    for r in 0..rows {
                        for c in 0..cols {
                            dx[(r, c)] = gv[(0, c)] * inv_std[c] / n
                                * (n * g[(r, c)] - d_beta[(0, c)] - x_hat[(r, c)] * d_gamma[(0, c)]);
                        }
                    }
                    accumulate(&mut grads, *x, &dx, &self.nodes);
                    accumulate(&mut grads, *gamma, &d_gamma, &self.nodes);
                    accumulate(&mut grads, *beta, &d_beta, &self.nodes);
                }
                Op::Concat { parts } => {
                    let mut at = 0;
                    for &p in parts {
                        let w = self.nodes[p.0].value.cols();
                        let gp = g.slice_cols(at, w);
                        accumulate(&mut grads, p, &gp, &self.nodes);
                        at += w;
                    }
                }
                Op::SliceCols { a, start } => {
                    let av = &self.nodes[a.0].value;
                    let mut ga = Matrix::zeros(av.rows(), av.cols());
                    for r in 0..g.rows() {
                        for c in 0..g.cols() {
                            ga[(r, start + c)] = g[(r, c)];
                        }
                    }
                    accumulate(&mut grads, *a, &ga, &self.nodes);
                }
                Op::GatherCols { a, indices } => {
                    let av = &self.nodes[a.0].value;
                    let mut ga = Matrix::zeros(av.rows(), av.cols());
                    for r in 0..g.rows() {
                        for (j, &idx) in indices.iter().enumerate() {
                            ga[(r, idx)] += g[(r, j)];
                        }
                    }
                    accumulate(&mut grads, *a, &ga, &self.nodes);
                }
                Op::ScatterCols { a, indices } => {
                    let av = &self.nodes[a.0].value;
                    let mut ga = Matrix::zeros(av.rows(), av.cols());
                    for r in 0..g.rows() {
                        for (j, &idx) in indices.iter().enumerate() {
                            ga[(r, j)] = g[(r, idx)];
                        }
                    }
                    accumulate(&mut grads, *a, &ga, &self.nodes);
                }
                Op::RotateRows { x, y, z, rots, axis } => {
                    let (rows, cols) = g.shape();
                    for (src, var) in [(0usize, *x), (1, *y), (2, *z)] {
                        let mut gs = Matrix::zeros(rows, cols);
                        for r in 0..rows {
                            let coef = rots[r][*axis][src];
                            for c in 0..cols {
                                gs[(r, c)] = coef * g[(r, c)];
                            }
                        }
                        accumulate(&mut grads, var, &gs, &self.nodes);
                    }
                }
                Op::SumSquares { a } => {
                    let s = g[(0, 0)];
                    let ga = self.nodes[a.0].value.scale(2.0 * s);
                    accumulate(&mut grads, *a, &ga, &self.nodes);
                }
                Op::Mean { a } => {
                    let av = &self.nodes[a.0].value;
                    let s = g[(0, 0)] / av.len() as f64;
                    let ga = Matrix::from_vec(
                        av.rows(),
                        av.cols(),
                        vec![s; av.len()],
                    )
                    .unwrap();
                    accumulate(&mut grads, *a, &ga, &self.nodes);
                }
                Op::SubCol { a, col } => {
                    accumulate(&mut grads, *a, &g, &self.nodes);
                    let mut gc = Matrix::zeros(g.rows(), 1);
                    for r in 0..g.rows() {
                        for j in 0..g.cols() {
                            gc[(r, 0)] -= g[(r, j)];
                        }
                    }
                    accumulate(&mut grads, *col, &gc, &self.nodes);
                }
                Op::MulCol { a, col } => {
                    let av = &self.nodes[a.0].value;
                    let cv = &self.nodes[col.0].value;
                    let mut ga = Matrix::zeros(g.rows(), g.cols());
                    let mut gc = Matrix::zeros(g.rows(), 1);
                    for r in 0..g.rows() {
                        let c = cv[(r, 0)];
                        for j in 0..g.cols() {
                            ga[(r, j)] = g[(r, j)] * c;
                            gc[(r, 0)] += g[(r, j)] * av[(r, j)];
                        }
                    }
                    accumulate(&mut grads, *a, &ga, &self.nodes);
                    accumulate(&mut grads, *col, &gc, &self.nodes);
                }
                Op::RowMaxAbs { parts, argmax, sign } => {
                    for (pi, &p) in parts.iter().enumerate() {
                        let pv = &self.nodes[p.0].value;
                        let mut gp = Matrix::zeros(pv.rows(), pv.cols());
                        let mut any = false;
                        for r in 0..pv.rows() {
                            if argmax[r].0 == pi {
                                gp[(r, argmax[r].1)] = sign[r] * g[(r, 0)];
                                any = true;
                            }
                        }
                        if any {
                            accumulate(&mut grads, p, &gp, &self.nodes);
                        }
                    }
                }
                Op::Recip { a } => {
                    let av = &self.nodes[a.0].value;
                    let ga = g
                        .zip_map(av, |gv, x| -gv / (x * x))
                        .expect("recip backward");
                    accumulate(&mut grads, *a, &ga, &self.nodes);
                }
            }
        }
        Ok(out)
    }
}

fn accumulate(grads: &mut [Option<Matrix>], var: Var, g: &Matrix, nodes: &[Node]) {
    match &mut grads[var.0] {
        Some(existing) => existing.add_assign(g),
        slot => {
            let value = &nodes[var.0].value;
            debug_assert_eq!(value.shape(), g.shape(), "gradient shape");
            *slot = Some(g.clone());
        }
    }
}
