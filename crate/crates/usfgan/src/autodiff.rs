//! Minimal reverse-mode autodiff over [`Mat`] values.
//!
//! The training graph is rebuilt every iteration: leaves are copied in,
//! operations append nodes, and `backward` walks the tape in reverse. The op
//! set is exactly what the source/filter networks and their losses need.
//! Everything is sequential f64, so gradients are bit-reproducible run to run.

use std::rc::Rc;

use crate::mat::{axpy_slice, dot, Mat};

pub type NodeId = usize;

/// Scalar loss with a hand-derived gradient, plugged into the graph as a
/// single node (used for the spectral losses, whose internals are FFT chains
/// rather than tape primitives).
pub trait ScalarLoss {
    fn forward(&self, input: &Mat) -> f64;
    /// dLoss/dInput, same shape as the input.
    fn backward(&self, input: &Mat) -> Mat;
}

/// Dilation pattern of a 1-D convolution tap layout.
#[derive(Clone)]
pub enum Dilation {
    Fixed(usize),
    /// One dilation per time step (pitch-dependent taps).
    PerSample(Rc<Vec<usize>>),
}

impl Dilation {
    #[inline]
    fn at(&self, t: usize) -> usize {
        match self {
            Dilation::Fixed(d) => *d,
            Dilation::PerSample(v) => v[t],
        }
    }
}

enum Op {
    Leaf,
    Add(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Scale(NodeId, f64),
    Tanh(NodeId),
    Sigmoid(NodeId),
    Relu(NodeId),
    LeakyRelu(NodeId, f64),
    /// Same-length 1-D convolution with zero padding outside the sequence.
    /// Weights: Mat(rows = c_in, cols = kernel * c_out), column `j * c_out + o`
    /// is the c_in tap vector for kernel position j, output channel o.
    Conv1d { x: NodeId, w: NodeId, b: Option<NodeId>, kernel: usize, dilation: Dilation },
    SliceRows { x: NodeId, start: usize, len: usize },
    /// mean((x - target)^2) over all entries -> scalar.
    MeanSqErrConst { x: NodeId, target: f64 },
    /// Custom scalar loss -> 1x1 node.
    Custom { x: NodeId, f: Rc<dyn ScalarLoss> },
}

struct Node {
    value: Mat,
    op: Op,
    needs_grad: bool,
}

#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

impl Graph {
    pub fn new() -> Self {
        Graph { nodes: Vec::new() }
    }

    fn push(&mut self, value: Mat, op: Op, needs_grad: bool) -> NodeId {
        self.nodes.push(Node { value, op, needs_grad });
        self.nodes.len() - 1
    }

    fn ng(&self, id: NodeId) -> bool {
        self.nodes[id].needs_grad
    }

    /// Constant input (no gradient tracked).
    pub fn leaf(&mut self, value: Mat) -> NodeId {
        self.push(value, Op::Leaf, false)
    }

    /// Trainable input (gradient tracked).
    pub fn param(&mut self, value: Mat) -> NodeId {
        self.push(value, Op::Leaf, true)
    }

    pub fn value(&self, id: NodeId) -> &Mat {
        &self.nodes[id].value
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        assert_eq!(self.nodes[a].value.shape(), self.nodes[b].value.shape(), "add shape");
        let mut v = self.nodes[a].value.clone();
        v.add_assign(&self.nodes[b].value);
        let ng = self.ng(a) || self.ng(b);
        self.push(v, Op::Add(a, b), ng)
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        assert_eq!(self.nodes[a].value.shape(), self.nodes[b].value.shape(), "mul shape");
        let av = &self.nodes[a].value;
        let bv = &self.nodes[b].value;
        let data: Vec<f64> = av.data().iter().zip(bv.data().iter()).map(|(x, y)| x * y).collect();
        let v = Mat::from_vec(av.rows(), av.cols(), data);
        let ng = self.ng(a) || self.ng(b);
        self.push(v, Op::Mul(a, b), ng)
    }

    pub fn scale(&mut self, a: NodeId, s: f64) -> NodeId {
        let v = self.nodes[a].value.map(|x| x * s);
        let ng = self.ng(a);
        self.push(v, Op::Scale(a, s), ng)
    }

    pub fn tanh(&mut self, a: NodeId) -> NodeId {
        let v = self.nodes[a].value.map(f64::tanh);
        let ng = self.ng(a);
        self.push(v, Op::Tanh(a), ng)
    }

    pub fn sigmoid(&mut self, a: NodeId) -> NodeId {
        let v = self.nodes[a].value.map(|x| 1.0 / (1.0 + (-x).exp()));
        let ng = self.ng(a);
        self.push(v, Op::Sigmoid(a), ng)
    }

    pub fn relu(&mut self, a: NodeId) -> NodeId {
        let v = self.nodes[a].value.map(|x| x.max(0.0));
        let ng = self.ng(a);
        self.push(v, Op::Relu(a), ng)
    }

    pub fn leaky_relu(&mut self, a: NodeId, slope: f64) -> NodeId {
        let v = self.nodes[a].value.map(|x| if x >= 0.0 { x } else { slope * x });
        let ng = self.ng(a);
        self.push(v, Op::LeakyRelu(a, slope), ng)
    }

    pub fn slice_rows(&mut self, a: NodeId, start: usize, len: usize) -> NodeId {
        let src = &self.nodes[a].value;
        assert!(start + len <= src.rows(), "slice_rows out of range");
        let mut v = Mat::zeros(len, src.cols());
        for t in 0..src.cols() {
            v.col_mut(t).copy_from_slice(&src.col(t)[start..start + len]);
        }
        let ng = self.ng(a);
        self.push(v, Op::SliceRows { x: a, start, len }, ng)
    }

    /// Same-length non-causal dilated convolution; `kernel` must be odd.
    pub fn conv1d(
        &mut self,
        x: NodeId,
        w: NodeId,
        b: Option<NodeId>,
        kernel: usize,
        dilation: Dilation,
    ) -> NodeId {
        assert!(kernel % 2 == 1, "conv1d kernel must be odd");
        let xv = &self.nodes[x].value;
        let wv = &self.nodes[w].value;
        assert_eq!(wv.cols() % kernel, 0, "conv1d weight cols must be kernel*c_out");
        let c_out = wv.cols() / kernel;
        assert_eq!(wv.rows(), xv.rows(), "conv1d c_in mismatch");
        if let Dilation::PerSample(d) = &dilation {
            assert_eq!(d.len(), xv.cols(), "per-sample dilation length mismatch");
        }
        let bias = b.map(|bid| {
            let bv = &self.nodes[bid].value;
            assert_eq!(bv.shape(), (c_out, 1), "conv1d bias shape");
            bv.clone()
        });
        let v = conv1d_forward(xv, wv, bias.as_ref(), kernel, &dilation);
        let ng = self.ng(x) || self.ng(w) || b.map(|bb| self.ng(bb)).unwrap_or(false);
        self.push(v, Op::Conv1d { x, w, b, kernel, dilation }, ng)
    }

    /// 1x1 convolution (pointwise channel mix).
    pub fn conv1x1(&mut self, x: NodeId, w: NodeId, b: Option<NodeId>) -> NodeId {
        self.conv1d(x, w, b, 1, Dilation::Fixed(1))
    }

    pub fn mean_sq_err_const(&mut self, x: NodeId, target: f64) -> NodeId {
        let xv = &self.nodes[x].value;
        let n = xv.len() as f64;
        let s: f64 = xv.data().iter().map(|&v| (v - target) * (v - target)).sum();
        let ng = self.ng(x);
        self.push(Mat::scalar(s / n), Op::MeanSqErrConst { x, target }, ng)
    }

    pub fn custom_loss(&mut self, x: NodeId, f: Rc<dyn ScalarLoss>) -> NodeId {
        let v = f.forward(&self.nodes[x].value);
        let ng = self.ng(x);
        self.push(Mat::scalar(v), Op::Custom { x, f }, ng)
    }

    /// Reverse pass from a scalar node. Returns per-node gradients (None where
    /// no gradient was needed or reached).
    pub fn backward(&self, loss: NodeId) -> Grads {
        assert_eq!(self.nodes[loss].value.shape(), (1, 1), "backward from non-scalar");
        let mut grads: Vec<Option<Mat>> = vec![None; self.nodes.len()];
        grads[loss] = Some(Mat::scalar(1.0));
        for id in (0..=loss).rev() {
            if !self.nodes[id].needs_grad {
                continue;
            }
            let g = match grads[id].take() {
                Some(g) => g,
                None => continue,
            };
            self.backprop_node(id, &g, &mut grads);
            grads[id] = Some(g);
        }
        Grads { grads }
    }

    fn accumulate(grads: &mut [Option<Mat>], id: NodeId, delta: Mat) {
        match &mut grads[id] {
            Some(g) => g.add_assign(&delta),
            slot @ None => *slot = Some(delta),
        }
    }

    fn backprop_node(&self, id: NodeId, g: &Mat, grads: &mut Vec<Option<Mat>>) {
        match &self.nodes[id].op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                if self.ng(*a) {
                    Self::accumulate(grads, *a, g.clone());
                }
                if self.ng(*b) {
                    Self::accumulate(grads, *b, g.clone());
                }
            }
            Op::Mul(a, b) => {
                if self.ng(*a) {
                    let bv = &self.nodes[*b].value;
                    let mut d = g.clone();
                    for (x, y) in d.data_mut().iter_mut().zip(bv.data().iter()) {
                        *x *= y;
                    }
                    Self::accumulate(grads, *a, d);
                }
                if self.ng(*b) {
                    let av = &self.nodes[*a].value;
                    let mut d = g.clone();
                    for (x, y) in d.data_mut().iter_mut().zip(av.data().iter()) {
                        *x *= y;
                    }
                    Self::accumulate(grads, *b, d);
                }
            }
            Op::Scale(a, s) => {
                if self.ng(*a) {
                    let mut d = g.clone();
                    d.scale_in_place(*s);
                    Self::accumulate(grads, *a, d);
                }
            }
            Op::Tanh(a) => {
                if self.ng(*a) {
                    let y = &self.nodes[id].value;
                    let mut d = g.clone();
                    for (x, yv) in d.data_mut().iter_mut().zip(y.data().iter()) {
                        *x *= 1.0 - yv * yv;
                    }
                    Self::accumulate(grads, *a, d);
                }
            }
            Op::Sigmoid(a) => {
                if self.ng(*a) {
                    let y = &self.nodes[id].value;
                    let mut d = g.clone();
                    for (x, yv) in d.data_mut().iter_mut().zip(y.data().iter()) {
                        *x *= yv * (1.0 - yv);
                    }
                    Self::accumulate(grads, *a, d);
                }
            }
            Op::Relu(a) => {
                if self.ng(*a) {
                    let xv = &self.nodes[*a].value;
                    let mut d = g.clone();
                    for (x, in_v) in d.data_mut().iter_mut().zip(xv.data().iter()) {
                        if *in_v <= 0.0 {
                            *x = 0.0;
                        }
                    }
                    Self::accumulate(grads, *a, d);
                }
            }
            Op::LeakyRelu(a, slope) => {
                if self.ng(*a) {
                    let xv = &self.nodes[*a].value;
                    let mut d = g.clone();
                    for (x, in_v) in d.data_mut().iter_mut().zip(xv.data().iter()) {
                        if *in_v < 0.0 {
                            *x *= slope;
                        }
                    }
                    Self::accumulate(grads, *a, d);
                }
            }
            Op::SliceRows { x, start, len } => {
                if self.ng(*x) {
                    let src = &self.nodes[*x].value;
                    let mut d = Mat::zeros(src.rows(), src.cols());
                    for t in 0..src.cols() {
                        d.col_mut(t)[*start..*start + *len].copy_from_slice(g.col(t));
                    }
                    Self::accumulate(grads, *x, d);
                }
            }
            Op::Conv1d { x, w, b, kernel, dilation } => {
                let xv = &self.nodes[*x].value;
                let wv = &self.nodes[*w].value;
                let (gx, gw, gb) = conv1d_backward(
                    xv,
                    wv,
                    g,
                    *kernel,
                    dilation,
                    self.ng(*x),
                    self.ng(*w),
                    b.map(|bb| self.ng(bb)).unwrap_or(false),
                );
                if let Some(gx) = gx {
                    Self::accumulate(grads, *x, gx);
                }
                if let Some(gw) = gw {
                    Self::accumulate(grads, *w, gw);
                }
                if let (Some(bid), Some(gb)) = (b, gb) {
                    Self::accumulate(grads, *bid, gb);
                }
            }
            Op::MeanSqErrConst { x, target } => {
                if self.ng(*x) {
                    let xv = &self.nodes[*x].value;
                    let n = xv.len() as f64;
                    let s = 2.0 * g.item() / n;
                    let d = xv.map(|v| s * (v - target));
                    Self::accumulate(grads, *x, d);
                }
            }
            Op::Custom { x, f } => {
                if self.ng(*x) {
                    let mut d = f.backward(&self.nodes[*x].value);
                    d.scale_in_place(g.item());
                    Self::accumulate(grads, *x, d);
                }
            }
        }
    }
}

pub struct Grads {
    grads: Vec<Option<Mat>>,
}

impl Grads {
    pub fn get(&self, id: NodeId) -> Option<&Mat> {
        self.grads.get(id).and_then(|g| g.as_ref())
    }

    pub fn take(&mut self, id: NodeId) -> Option<Mat> {
        self.grads.get_mut(id).and_then(|g| g.take())
    }
}

fn conv1d_forward(
    x: &Mat,
    w: &Mat,
    bias: Option<&Mat>,
    kernel: usize,
    dilation: &Dilation,
) -> Mat {
    let c_in = x.rows();
    let t_len = x.cols();
    let c_out = w.cols() / kernel;
    let mid = (kernel / 2) as isize;
    let mut out = Mat::zeros(c_out, t_len);
    for t in 0..t_len {
        let d = dilation.at(t) as isize;
        let oc = out.col_mut(t);
        if let Some(b) = bias {
            oc.copy_from_slice(b.col(0));
        }
        for j in 0..kernel {
            let src = t as isize + (j as isize - mid) * d;
            if src < 0 || src >= t_len as isize {
                continue;
            }
            let xc = x.col(src as usize);
            let wbase = j * c_out;
            for (o, acc) in oc.iter_mut().enumerate() {
                *acc += dot(w.col(wbase + o), xc);
            }
        }
        let _ = c_in;
    }
    out
}

#[allow(clippy::too_many_arguments)]
fn conv1d_backward(
    x: &Mat,
    w: &Mat,
    gout: &Mat,
    kernel: usize,
    dilation: &Dilation,
    want_gx: bool,
    want_gw: bool,
    want_gb: bool,
) -> (Option<Mat>, Option<Mat>, Option<Mat>) {
    let t_len = x.cols();
    let c_out = w.cols() / kernel;
    let mid = (kernel / 2) as isize;

    let mut gx = if want_gx { Some(Mat::zeros(x.rows(), t_len)) } else { None };
    let mut gw = if want_gw { Some(Mat::zeros(w.rows(), w.cols())) } else { None };
    let mut gb = if want_gb { Some(Mat::zeros(c_out, 1)) } else { None };

    for t in 0..t_len {
        let d = dilation.at(t) as isize;
        let gcol = gout.col(t);
        if let Some(gb) = gb.as_mut() {
            for (o, g) in gcol.iter().enumerate() {
                gb.col_mut(0)[o] += g;
            }
        }
        for j in 0..kernel {
            let src = t as isize + (j as isize - mid) * d;
            if src < 0 || src >= t_len as isize {
                continue;
            }
            let src = src as usize;
            let wbase = j * c_out;
            if let Some(gx) = gx.as_mut() {
                let gxc = gx.col_mut(src);
                for (o, &g) in gcol.iter().enumerate() {
                    if g != 0.0 {
                        axpy_slice(gxc, g, w.col(wbase + o));
                    }
                }
            }
            if let Some(gw) = gw.as_mut() {
                let xc = x.col(src);
                for (o, &g) in gcol.iter().enumerate() {
                    if g != 0.0 {
                        axpy_slice(gw.col_mut(wbase + o), g, xc);
                    }
                }
            }
        }
    }
    (gx, gw, gb)
}
