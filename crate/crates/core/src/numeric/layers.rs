//! Network building blocks.
//!
//! Each block exists twice: a graph-level form that records onto a
//! [`Graph`] (used by the model so gradients flow), and a value-level form
//! over plain [`Tensor`]s that validates shapes and returns errors. The
//! value-level forms are thin wrappers that run the graph form on a
//! throwaway tape, so both paths share one arithmetic implementation.

use crate::error::{Error, Result};
use crate::numeric::graph::{Conv2dShape, Graph, Var};
use crate::numeric::Tensor;

/// Stage widths of the scene CNN.
pub const CONV1_CHANNELS: usize = 8;
pub const CONV2_CHANNELS: usize = 16;
pub const CONV_KERNEL: usize = 3;
pub const CONV_STRIDE: usize = 2;
pub const CONV_PAD: usize = 1;

// ---------------------------------------------------------------------------
// graph-level

/// LSTM weights on a graph. Gates are stacked in the order input, forget,
/// candidate, output: `w_ih` is `4d×n`, `w_hh` is `4d×d`, `bias` is `4d`.
#[derive(Clone, Copy, Debug)]
pub struct LstmVars {
    pub w_ih: Var,
    pub w_hh: Var,
    pub bias: Var,
    pub hidden: usize,
}

/// One LSTM step. Returns the new `(hidden, cell)`.
pub fn lstm_step(g: &mut Graph, w: &LstmVars, hidden: Var, cell: Var, x: Var) -> (Var, Var) {
    let d = w.hidden;
    let xi = g.affine(w.w_ih, x, Some(w.bias), 4 * d);
    let hh = g.matvec(w.w_hh, hidden, 4 * d);
    let pre = g.add(xi, hh);
    let i = g.slice(pre, 0, d);
    let f = g.slice(pre, d, d);
    let c = g.slice(pre, 2 * d, d);
    let o = g.slice(pre, 3 * d, d);
    let i = g.sigmoid(i);
    let f = g.sigmoid(f);
    let c = g.tanh(c);
    let o = g.sigmoid(o);
    let keep = g.mul(f, cell);
    let write = g.mul(i, c);
    let cell = g.add(keep, write);
    let squashed = g.tanh(cell);
    let hidden = g.mul(o, squashed);
    (hidden, cell)
}

/// Mean-aggregating graph convolution for a single target node:
/// `ReLU(b + mean_j W·a_j)` over the given neighbor features. With no
/// neighbors the mean is the zero vector and the output is `ReLU(b)`.
pub fn graph_conv_step(g: &mut Graph, w: Var, b: Var, neighbors: &[Var], out_dim: usize) -> Var {
    let msgs: Vec<Var> = neighbors.iter().map(|&a| g.matvec(w, a, out_dim)).collect();
    let agg = g.mean(&msgs, out_dim);
    let pre = g.add(agg, b);
    g.relu(pre)
}

/// Scene CNN weights on a graph.
#[derive(Clone, Copy, Debug)]
pub struct ConvNetVars {
    pub conv1_w: Var,
    pub conv1_b: Var,
    pub conv2_w: Var,
    pub conv2_b: Var,
    pub fc_w: Var,
    pub fc_b: Var,
    pub out_dim: usize,
}

/// Geometry of the two conv stages for a `C×H×W` input.
pub fn conv_net_geometry(channels: usize, height: usize, width: usize) -> (Conv2dShape, Conv2dShape) {
    let first = Conv2dShape {
        in_channels: channels,
        height,
        width,
        out_channels: CONV1_CHANNELS,
        kernel: CONV_KERNEL,
        stride: CONV_STRIDE,
        pad: CONV_PAD,
    };
    let second = Conv2dShape {
        in_channels: CONV1_CHANNELS,
        height: first.out_height(),
        width: first.out_width(),
        out_channels: CONV2_CHANNELS,
        kernel: CONV_KERNEL,
        stride: CONV_STRIDE,
        pad: CONV_PAD,
    };
    (first, second)
}

/// conv(C→8, 3×3, s2) → ReLU → conv(8→16, 3×3, s2) → ReLU → global average
/// pool → linear(16→d).
pub fn conv_net_forward(
    g: &mut Graph,
    w: &ConvNetVars,
    grid: Var,
    channels: usize,
    height: usize,
    width: usize,
) -> Var {
    let (first, second) = conv_net_geometry(channels, height, width);
    let a = g.conv2d(grid, w.conv1_w, w.conv1_b, first);
    let a = g.relu(a);
    let a = g.conv2d(a, w.conv2_w, w.conv2_b, second);
    let a = g.relu(a);
    let pooled = g.global_avg_pool(a, CONV2_CHANNELS);
    g.affine(w.fc_w, pooled, Some(w.fc_b), w.out_dim)
}

// ---------------------------------------------------------------------------
// value-level

fn expect_shape(op: &'static str, t: &Tensor, shape: &[usize]) -> Result<()> {
    if t.shape() == shape {
        Ok(())
    } else {
        Err(Error::shape(op, format!("{shape:?}"), format!("{:?}", t.shape())))
    }
}

fn expect_vector(op: &'static str, t: &Tensor) -> Result<usize> {
    if t.rank() == 1 {
        Ok(t.len())
    } else {
        Err(Error::shape(op, "rank-1 tensor", format!("{:?}", t.shape())))
    }
}

/// `y = W·x + b`.
pub fn linear(x: &Tensor, w: &Tensor, b: &Tensor) -> Result<Tensor> {
    let n = expect_vector("linear", x)?;
    let m = expect_vector("linear", b)?;
    expect_shape("linear", w, &[m, n])?;
    let mut g = Graph::new();
    let xv = g.input(x.data());
    let wv = g.input(w.data());
    let bv = g.input(b.data());
    let y = g.affine(wv, xv, Some(bv), m);
    g.check_finite()?;
    Ok(g.to_tensor(y))
}

#[derive(Clone, Debug, PartialEq)]
pub struct LstmState {
    pub hidden: Tensor,
    pub cell: Tensor,
}

impl LstmState {
    pub fn zeros(d: usize) -> Self {
        LstmState {
            hidden: Tensor::zeros(&[d]),
            cell: Tensor::zeros(&[d]),
        }
    }
}

#[derive(Clone, Debug)]
pub struct LstmWeights {
    pub w_ih: Tensor,
    pub w_hh: Tensor,
    pub bias: Tensor,
}

pub fn lstm_cell(state: &LstmState, x: &Tensor, weights: &LstmWeights) -> Result<LstmState> {
    let d = expect_vector("lstm_cell", &state.hidden)?;
    expect_shape("lstm_cell", &state.cell, &[d])?;
    let n = expect_vector("lstm_cell", x)?;
    expect_shape("lstm_cell", &weights.w_ih, &[4 * d, n])?;
    expect_shape("lstm_cell", &weights.w_hh, &[4 * d, d])?;
    expect_shape("lstm_cell", &weights.bias, &[4 * d])?;
    let mut g = Graph::new();
    let w = LstmVars {
        w_ih: g.input(weights.w_ih.data()),
        w_hh: g.input(weights.w_hh.data()),
        bias: g.input(weights.bias.data()),
        hidden: d,
    };
    let h = g.input(state.hidden.data());
    let c = g.input(state.cell.data());
    let xv = g.input(x.data());
    let (h, c) = lstm_step(&mut g, &w, h, c, xv);
    g.check_finite()?;
    Ok(LstmState {
        hidden: g.to_tensor(h),
        cell: g.to_tensor(c),
    })
}

/// Graph convolution for node `self_idx` over `node_feats`, aggregating
/// every node except `self_idx`.
pub fn graph_conv(self_idx: usize, node_feats: &[Tensor], w: &Tensor, b: &Tensor) -> Result<Tensor> {
    let m = expect_vector("graph_conv", b)?;
    if w.rank() != 2 || w.shape()[0] != m {
        return Err(Error::shape(
            "graph_conv",
            format!("[{m}, n]"),
            format!("{:?}", w.shape()),
        ));
    }
    let n = w.shape()[1];
    if self_idx >= node_feats.len() {
        return Err(Error::shape(
            "graph_conv",
            format!("self index < {}", node_feats.len()),
            self_idx,
        ));
    }
    for f in node_feats {
        expect_shape("graph_conv", f, &[n])?;
    }
    let mut g = Graph::new();
    let wv = g.input(w.data());
    let bv = g.input(b.data());
    let neighbors: Vec<Var> = node_feats
        .iter()
        .enumerate()
        .filter(|(j, _)| *j != self_idx)
        .map(|(_, f)| g.input(f.data()))
        .collect();
    let y = graph_conv_step(&mut g, wv, bv, &neighbors, m);
    g.check_finite()?;
    Ok(g.to_tensor(y))
}

#[derive(Clone, Debug)]
pub struct ConvNetWeights {
    /// `8×C×3×3`
    pub conv1_w: Tensor,
    pub conv1_b: Tensor,
    /// `16×8×3×3`
    pub conv2_w: Tensor,
    pub conv2_b: Tensor,
    /// `d×16`
    pub fc_w: Tensor,
    pub fc_b: Tensor,
}

pub fn conv_net(grid: &Tensor, weights: &ConvNetWeights) -> Result<Tensor> {
    if grid.rank() != 3 {
        return Err(Error::shape("conv_net", "C×H×W grid", format!("{:?}", grid.shape())));
    }
    let (c, h, w) = (grid.shape()[0], grid.shape()[1], grid.shape()[2]);
    let k = CONV_KERNEL;
    expect_shape("conv_net", &weights.conv1_w, &[CONV1_CHANNELS, c, k, k])?;
    expect_shape("conv_net", &weights.conv1_b, &[CONV1_CHANNELS])?;
    expect_shape("conv_net", &weights.conv2_w, &[CONV2_CHANNELS, CONV1_CHANNELS, k, k])?;
    expect_shape("conv_net", &weights.conv2_b, &[CONV2_CHANNELS])?;
    let d = expect_vector("conv_net", &weights.fc_b)?;
    expect_shape("conv_net", &weights.fc_w, &[d, CONV2_CHANNELS])?;
    let mut g = Graph::new();
    let vars = ConvNetVars {
        conv1_w: g.input(weights.conv1_w.data()),
        conv1_b: g.input(weights.conv1_b.data()),
        conv2_w: g.input(weights.conv2_w.data()),
        conv2_b: g.input(weights.conv2_b.data()),
        fc_w: g.input(weights.fc_w.data()),
        fc_b: g.input(weights.fc_b.data()),
        out_dim: d,
    };
    let x = g.input(grid.data());
    let y = conv_net_forward(&mut g, &vars, x, c, h, w);
    g.check_finite()?;
    Ok(g.to_tensor(y))
}
