//! Tape-based reverse-mode differentiation over dense vectors.
//!
//! A [`Graph`] records every forward operation as a node holding its output
//! value. [`Graph::backward_into`] walks the tape in reverse and accumulates
//! vector-Jacobian products; gradients reaching parameter leaves are added
//! into a [`Gradients`] buffer laid out like the borrowed [`ParamStore`].
//!
//! The forward graph is static per sample, so there is no control-flow
//! tracing: model code simply calls the op constructors in order.
//!
//! Shape mismatches inside the graph are programming errors and panic; the
//! value-level layer functions in [`crate::numeric::layers`] validate their
//! inputs and return errors instead. Non-finite outputs are recorded and
//! surface as [`Error::NonFinite`] from [`Graph::check_finite`] and backward.

use crate::error::{Error, Result};
use crate::numeric::{Gradients, ParamId, ParamStore, Tensor};

/// Node handle.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(usize);

/// Geometry of a 2-D convolution with square kernel.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Conv2dShape {
    pub in_channels: usize,
    pub height: usize,
    pub width: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
}

impl Conv2dShape {
    pub fn out_height(&self) -> usize {
        (self.height + 2 * self.pad - self.kernel) / self.stride + 1
    }

    pub fn out_width(&self) -> usize {
        (self.width + 2 * self.pad - self.kernel) / self.stride + 1
    }

    fn out_len(&self) -> usize {
        self.out_channels * self.out_height() * self.out_width()
    }
}

#[derive(Clone, Debug)]
enum Op {
    Input,
    Param(ParamId),
    /// W[rows×cols] · x + b
    Affine {
        w: Var,
        x: Var,
        b: Option<Var>,
        rows: usize,
        cols: usize,
    },
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    Sigmoid(Var),
    Tanh(Var),
    Relu(Var),
    Exp(Var),
    Sum(Var),
    Concat(Vec<Var>),
    Slice {
        x: Var,
        start: usize,
    },
    Mean(Vec<Var>),
    Conv2d {
        x: Var,
        w: Var,
        b: Var,
        geom: Conv2dShape,
    },
    GlobalAvgPool {
        x: Var,
        channels: usize,
    },
}

#[derive(Clone, Debug)]
struct Node {
    value: Vec<f64>,
    op: Op,
}

/// Forward tape borrowing an optional parameter store.
pub struct Graph<'p> {
    params: Option<&'p ParamStore>,
    nodes: Vec<Node>,
    non_finite: Option<usize>,
}

impl Default for Graph<'_> {
    fn default() -> Self {
        Graph::new()
    }
}

impl<'p> Graph<'p> {
    /// A graph with no parameter store. Only inputs can be leaves.
    pub fn new() -> Self {
        Graph {
            params: None,
            nodes: Vec::with_capacity(64),
            non_finite: None,
        }
    }

    pub fn with_params(params: &'p ParamStore) -> Self {
        Graph {
            params: Some(params),
            nodes: Vec::with_capacity(256),
            non_finite: None,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &[f64] {
        match self.nodes[v.0].op {
            Op::Param(id) => self
                .params
                .expect("param node without store")
                .value(id)
                .data(),
            _ => &self.nodes[v.0].value,
        }
    }

    pub fn dim(&self, v: Var) -> usize {
        self.value(v).len()
    }

    pub fn scalar(&self, v: Var) -> f64 {
        let val = self.value(v);
        assert_eq!(val.len(), 1, "scalar() on a vector of length {}", val.len());
        val[0]
    }

    pub fn to_tensor(&self, v: Var) -> Tensor {
        let data = self.value(v).to_vec();
        Tensor::from_parts_unchecked(vec![data.len()], data)
    }

    pub fn check_finite(&self) -> Result<()> {
        match self.non_finite {
            None => Ok(()),
            Some(i) => Err(Error::NonFinite(format!(
                "graph node {i} ({})",
                op_name(&self.nodes[i].op)
            ))),
        }
    }

    fn push(&mut self, value: Vec<f64>, op: Op) -> Var {
        if self.non_finite.is_none() && value.iter().any(|v| !v.is_finite()) {
            self.non_finite = Some(self.nodes.len());
        }
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    // ---- leaves -------------------------------------------------------

    pub fn input(&mut self, data: &[f64]) -> Var {
        self.push(data.to_vec(), Op::Input)
    }

    pub fn input_vec(&mut self, data: Vec<f64>) -> Var {
        self.push(data, Op::Input)
    }

    pub fn zeros(&mut self, n: usize) -> Var {
        self.push(vec![0.0; n], Op::Input)
    }

    pub fn param(&mut self, id: ParamId) -> Var {
        let store = self.params.expect("Graph::param requires a parameter store");
        if !store.value(id).is_finite() && self.non_finite.is_none() {
            self.non_finite = Some(self.nodes.len());
        }
        self.nodes.push(Node {
            value: Vec::new(),
            op: Op::Param(id),
        });
        Var(self.nodes.len() - 1)
    }

    // ---- linear algebra ----------------------------------------------

    /// `W·x + b` with `W` of shape `rows × cols` stored row-major.
    pub fn affine(&mut self, w: Var, x: Var, b: Option<Var>, rows: usize) -> Var {
        let wv = self.value(w);
        let xv = self.value(x);
        let cols = xv.len();
        assert_eq!(
            wv.len(),
            rows * cols,
            "affine: weight has {} values, expected {rows}x{cols}",
            wv.len()
        );
        let mut out = match b {
            Some(b) => {
                let bv = self.value(b);
                assert_eq!(bv.len(), rows, "affine: bias length");
                bv.to_vec()
            }
            None => vec![0.0; rows],
        };
        for (o, row) in out.iter_mut().zip(wv.chunks_exact(cols)) {
            *o += dot(row, xv);
        }
        self.push(
            out,
            Op::Affine {
                w,
                x,
                b,
                rows,
                cols,
            },
        )
    }

    pub fn matvec(&mut self, w: Var, x: Var, rows: usize) -> Var {
        self.affine(w, x, None, rows)
    }

    // ---- elementwise --------------------------------------------------

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let out = zip_map(self.value(a), self.value(b), |x, y| x + y);
        self.push(out, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let out = zip_map(self.value(a), self.value(b), |x, y| x - y);
        self.push(out, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let out = zip_map(self.value(a), self.value(b), |x, y| x * y);
        self.push(out, Op::Mul(a, b))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let out = self.value(a).iter().map(|x| x * c).collect();
        self.push(out, Op::Scale(a, c))
    }

    pub fn add_scalar(&mut self, a: Var, c: f64) -> Var {
        let out = self.value(a).iter().map(|x| x + c).collect();
        self.push(out, Op::AddScalar(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let out = self.value(a).iter().map(|&x| sigmoid(x)).collect();
        self.push(out, Op::Sigmoid(a))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let out = self.value(a).iter().map(|x| x.tanh()).collect();
        self.push(out, Op::Tanh(a))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let out = self.value(a).iter().map(|&x| x.max(0.0)).collect();
        self.push(out, Op::Relu(a))
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let out = self.value(a).iter().map(|x| x.exp()).collect();
        self.push(out, Op::Exp(a))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).iter().sum();
        self.push(vec![s], Op::Sum(a))
    }

    // ---- structural ---------------------------------------------------

    pub fn concat(&mut self, parts: &[Var]) -> Var {
        let n = parts.iter().map(|&p| self.dim(p)).sum();
        let mut out = Vec::with_capacity(n);
        for &p in parts {
            out.extend_from_slice(self.value(p));
        }
        self.push(out, Op::Concat(parts.to_vec()))
    }

    pub fn slice(&mut self, x: Var, start: usize, len: usize) -> Var {
        let out = self.value(x)[start..start + len].to_vec();
        self.push(out, Op::Slice { x, start })
    }

    /// Elementwise mean of equally sized vectors; the empty mean is the zero
    /// vector of length `dim`.
    pub fn mean(&mut self, parts: &[Var], dim: usize) -> Var {
        let mut out = vec![0.0; dim];
        for &p in parts {
            let v = self.value(p);
            assert_eq!(v.len(), dim, "mean: part length");
            for (o, x) in out.iter_mut().zip(v) {
                *o += x;
            }
        }
        if !parts.is_empty() {
            let inv = 1.0 / parts.len() as f64;
            out.iter_mut().for_each(|o| *o *= inv);
        }
        self.push(out, Op::Mean(parts.to_vec()))
    }

    // ---- convolution --------------------------------------------------

    /// Zero-padded strided 2-D convolution over a `C×H×W` input with weights
    /// `O×C×k×k` and bias `O`.
    pub fn conv2d(&mut self, x: Var, w: Var, b: Var, geom: Conv2dShape) -> Var {
        let xv = self.value(x);
        let wv = self.value(w);
        let bv = self.value(b);
        let k = geom.kernel;
        assert_eq!(xv.len(), geom.in_channels * geom.height * geom.width);
        assert_eq!(wv.len(), geom.out_channels * geom.in_channels * k * k);
        assert_eq!(bv.len(), geom.out_channels);
        let (oh, ow) = (geom.out_height(), geom.out_width());
        let mut out = vec![0.0; geom.out_len()];
        for o in 0..geom.out_channels {
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut acc = bv[o];
                    for c in 0..geom.in_channels {
                        for ky in 0..k {
                            let Some(iy) = conv_index(oy, ky, geom.stride, geom.pad, geom.height)
                            else {
                                continue;
                            };
                            for kx in 0..k {
                                let Some(ix) =
                                    conv_index(ox, kx, geom.stride, geom.pad, geom.width)
                                else {
                                    continue;
                                };
                                acc += wv[((o * geom.in_channels + c) * k + ky) * k + kx]
                                    * xv[(c * geom.height + iy) * geom.width + ix];
                            }
                        }
                    }
                    out[(o * oh + oy) * ow + ox] = acc;
                }
            }
        }
        self.push(out, Op::Conv2d { x, w, b, geom })
    }

    /// Per-channel mean over spatial positions of a `C×(H·W)` input.
    pub fn global_avg_pool(&mut self, x: Var, channels: usize) -> Var {
        let xv = self.value(x);
        assert_eq!(xv.len() % channels, 0);
        let hw = xv.len() / channels;
        let out = xv
            .chunks_exact(hw)
            .map(|c| c.iter().sum::<f64>() / hw as f64)
            .collect();
        self.push(out, Op::GlobalAvgPool { x, channels })
    }

    // ---- reverse pass -------------------------------------------------

    /// Back-propagates from the scalar `loss`, returning a fresh gradient
    /// buffer for the borrowed store.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let store = self
            .params
            .expect("Graph::backward requires a parameter store");
        let mut grads = store.zero_gradients();
        self.backward_into(loss, &mut grads)?;
        Ok(grads)
    }

    /// Back-propagates from the scalar `loss`, adding parameter gradients
    /// into `out`.
    pub fn backward_into(&self, loss: Var, out: &mut Gradients) -> Result<()> {
        self.backward_seeded(loss, &[1.0], out).map(|_| ())
    }

    /// General reverse pass: seeds `root` with `seed` and returns the
    /// adjoint of every node (`None` where unreachable). Parameter adjoints
    /// are added into `out`.
    pub(crate) fn backward_seeded(
        &self,
        root: Var,
        seed: &[f64],
        out: &mut Gradients,
    ) -> Result<Vec<Option<Vec<f64>>>> {
        self.check_finite()?;
        assert_eq!(self.dim(root), seed.len(), "backward seed length");
        let mut adj: Vec<Option<Vec<f64>>> = vec![None; root.0 + 1];
        adj[root.0] = Some(seed.to_vec());

        for i in (0..=root.0).rev() {
            let Some(g) = adj[i].take() else { continue };
            match &self.nodes[i].op {
                Op::Input => {}
                Op::Param(id) => {
                    for (o, v) in out.per_param[id.0].iter_mut().zip(&g) {
                        *o += v;
                    }
                }
                &Op::Affine {
                    w,
                    x,
                    b,
                    rows,
                    cols,
                } => {
                    let xv = self.value(x);
                    let wv = self.value(w);
                    {
                        let gw = slot(&mut adj, w, rows * cols);
                        for (r, gr) in g.iter().enumerate() {
                            if *gr != 0.0 {
                                let row = &mut gw[r * cols..(r + 1) * cols];
                                for (a, xj) in row.iter_mut().zip(xv) {
                                    *a += gr * xj;
                                }
                            }
                        }
                    }
                    {
                        let gx = slot(&mut adj, x, cols);
                        for (r, gr) in g.iter().enumerate() {
                            if *gr != 0.0 {
                                let row = &wv[r * cols..(r + 1) * cols];
                                for (a, wj) in gx.iter_mut().zip(row) {
                                    *a += gr * wj;
                                }
                            }
                        }
                    }
                    if let Some(b) = b {
                        add_into(slot(&mut adj, b, rows), &g);
                    }
                }
                &Op::Add(a, b) => {
                    add_into(slot(&mut adj, a, g.len()), &g);
                    add_into(slot(&mut adj, b, g.len()), &g);
                }
                &Op::Sub(a, b) => {
                    add_into(slot(&mut adj, a, g.len()), &g);
                    let gb = slot(&mut adj, b, g.len());
                    for (o, v) in gb.iter_mut().zip(&g) {
                        *o -= v;
                    }
                }
                &Op::Mul(a, b) => {
                    let av = self.value(a).to_vec();
                    let bv = self.value(b);
                    let ga: Vec<f64> = g.iter().zip(bv).map(|(g, y)| g * y).collect();
                    let gb: Vec<f64> = g.iter().zip(&av).map(|(g, x)| g * x).collect();
                    add_into(slot(&mut adj, a, g.len()), &ga);
                    add_into(slot(&mut adj, b, g.len()), &gb);
                }
                &Op::Scale(a, c) => {
                    let ga = slot(&mut adj, a, g.len());
                    for (o, v) in ga.iter_mut().zip(&g) {
                        *o += c * v;
                    }
                }
                &Op::AddScalar(a) => add_into(slot(&mut adj, a, g.len()), &g),
                &Op::Sigmoid(a) => {
                    let y = &self.nodes[i].value;
                    let ga = slot(&mut adj, a, g.len());
                    for ((o, v), y) in ga.iter_mut().zip(&g).zip(y) {
                        *o += v * y * (1.0 - y);
                    }
                }
                &Op::Tanh(a) => {
                    let y = &self.nodes[i].value;
                    let ga = slot(&mut adj, a, g.len());
                    for ((o, v), y) in ga.iter_mut().zip(&g).zip(y) {
                        *o += v * (1.0 - y * y);
                    }
                }
                &Op::Relu(a) => {
                    let y = &self.nodes[i].value;
                    let ga = slot(&mut adj, a, g.len());
                    for ((o, v), y) in ga.iter_mut().zip(&g).zip(y) {
                        if *y > 0.0 {
                            *o += v;
                        }
                    }
                }
                &Op::Exp(a) => {
                    let y = &self.nodes[i].value;
                    let ga = slot(&mut adj, a, g.len());
                    for ((o, v), y) in ga.iter_mut().zip(&g).zip(y) {
                        *o += v * y;
                    }
                }
                &Op::Sum(a) => {
                    let n = self.dim(a);
                    let ga = slot(&mut adj, a, n);
                    ga.iter_mut().for_each(|o| *o += g[0]);
                }
                Op::Concat(parts) => {
                    let mut off = 0;
                    for &p in parts {
                        let n = self.dim(p);
                        add_into(slot(&mut adj, p, n), &g[off..off + n]);
                        off += n;
                    }
                }
                &Op::Slice { x, start } => {
                    let n = self.dim(x);
                    let gx = slot(&mut adj, x, n);
                    add_into(&mut gx[start..start + g.len()], &g);
                }
                Op::Mean(parts) => {
                    if !parts.is_empty() {
                        let inv = 1.0 / parts.len() as f64;
                        let scaled: Vec<f64> = g.iter().map(|v| v * inv).collect();
                        for &p in parts {
                            add_into(slot(&mut adj, p, g.len()), &scaled);
                        }
                    }
                }
                &Op::Conv2d { x, w, b, geom } => {
                    self.conv2d_backward(&mut adj, &g, x, w, b, geom);
                }
                &Op::GlobalAvgPool { x, channels } => {
                    let n = self.dim(x);
                    let hw = n / channels;
                    let gx = slot(&mut adj, x, n);
                    for (c, gc) in g.iter().enumerate() {
                        let v = gc / hw as f64;
                        gx[c * hw..(c + 1) * hw].iter_mut().for_each(|o| *o += v);
                    }
                }
            }
            adj[i] = Some(g);
        }
        Ok(adj)
    }

    fn conv2d_backward(
        &self,
        adj: &mut [Option<Vec<f64>>],
        g: &[f64],
        x: Var,
        w: Var,
        b: Var,
        geom: Conv2dShape,
    ) {
        let xv = self.value(x);
        let wv = self.value(w);
        let k = geom.kernel;
        let (oh, ow) = (geom.out_height(), geom.out_width());
        let mut gx = vec![0.0; xv.len()];
        let mut gw = vec![0.0; wv.len()];
        let mut gb = vec![0.0; geom.out_channels];
        for o in 0..geom.out_channels {
            for oy in 0..oh {
                for ox in 0..ow {
                    let go = g[(o * oh + oy) * ow + ox];
                    if go == 0.0 {
                        continue;
                    }
                    gb[o] += go;
                    for c in 0..geom.in_channels {
                        for ky in 0..k {
                            let Some(iy) = conv_index(oy, ky, geom.stride, geom.pad, geom.height)
                            else {
                                continue;
                            };
                            for kx in 0..k {
                                let Some(ix) =
                                    conv_index(ox, kx, geom.stride, geom.pad, geom.width)
                                else {
                                    continue;
                                };
                                let wi = ((o * geom.in_channels + c) * k + ky) * k + kx;
                                let xi = (c * geom.height + iy) * geom.width + ix;
                                gw[wi] += go * xv[xi];
                                gx[xi] += go * wv[wi];
                            }
                        }
                    }
                }
            }
        }
        add_into(slot(adj, x, gx.len()), &gx);
        add_into(slot(adj, w, gw.len()), &gw);
        add_into(slot(adj, b, gb.len()), &gb);
    }
}

#[inline]
fn conv_index(o: usize, k: usize, stride: usize, pad: usize, extent: usize) -> Option<usize> {
    let i = (o * stride + k) as isize - pad as isize;
    (i >= 0 && (i as usize) < extent).then_some(i as usize)
}

fn slot(adj: &mut [Option<Vec<f64>>], v: Var, n: usize) -> &mut Vec<f64> {
    adj[v.0].get_or_insert_with(|| vec![0.0; n])
}

#[inline]
fn add_into(dst: &mut [f64], src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn zip_map(a: &[f64], b: &[f64], f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
    assert_eq!(a.len(), b.len(), "elementwise op: length mismatch");
    a.iter().zip(b).map(|(&x, &y)| f(x, y)).collect()
}

fn op_name(op: &Op) -> &'static str {
    match op {
        Op::Input => "input",
        Op::Param(_) => "param",
        Op::Affine { .. } => "affine",
        Op::Add(..) => "add",
        Op::Sub(..) => "sub",
        Op::Mul(..) => "mul",
        Op::Scale(..) => "scale",
        Op::AddScalar(..) => "add_scalar",
        Op::Sigmoid(_) => "sigmoid",
        Op::Tanh(_) => "tanh",
        Op::Relu(_) => "relu",
        Op::Exp(_) => "exp",
        Op::Sum(_) => "sum",
        Op::Concat(_) => "concat",
        Op::Slice { .. } => "slice",
        Op::Mean(_) => "mean",
        Op::Conv2d { .. } => "conv2d",
        Op::GlobalAvgPool { .. } => "global_avg_pool",
    }
}
