//! Tape-based reverse-mode automatic differentiation.
//!
//! The model builds its forward pass on a [`Tape`]: every operation appends a
//! node holding its value and the ids of its inputs, so node ids are already
//! topologically ordered. `backward` walks the tape once in reverse and
//! returns a gradient per node; parameter nodes keep theirs.
//!
//! Values are dynamic-rank `ndarray` arrays, but only rank 1 (vectors, with
//! scalars as length-1 vectors) and rank 2 (matrices) occur. Everything is
//! generic over [`Scalar`] so training can run in single or double precision;
//! gradient verification requires double.

use ndarray::{Array1, Array2, ArrayD, ArrayView1, ArrayView2, Axis, Ix1, Ix2};

/// Floating-point scalar usable by the tape: `f32` or `f64`.
pub trait Scalar:
    num_traits::Float
    + ndarray::LinalgScalar
    + ndarray::ScalarOperand
    + rand::distributions::uniform::SampleUniform
    + std::fmt::Debug
    + std::fmt::Display
    + std::iter::Sum
    + Send
    + Sync
    + 'static
{
    /// Name recorded in checkpoints ("f32" / "f64").
    const NAME: &'static str;
    const BYTES: usize;

    fn from_f64(v: f64) -> Self;
    fn as_f64(self) -> f64;
    fn write_le_bytes(self, out: &mut Vec<u8>);
    fn read_le_bytes(bytes: &[u8]) -> Self;
}

impl Scalar for f32 {
    const NAME: &'static str = "f32";
    const BYTES: usize = 4;

    fn from_f64(v: f64) -> Self {
        v as f32
    }
    fn as_f64(self) -> f64 {
        self as f64
    }
    fn write_le_bytes(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }
    fn read_le_bytes(bytes: &[u8]) -> Self {
        f32::from_le_bytes(bytes.try_into().expect("4 bytes per f32"))
    }
}

impl Scalar for f64 {
    const NAME: &'static str = "f64";
    const BYTES: usize = 8;

    fn from_f64(v: f64) -> Self {
        v
    }
    fn as_f64(self) -> f64 {
        self
    }
    fn write_le_bytes(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }
    fn read_le_bytes(bytes: &[u8]) -> Self {
        f64::from_le_bytes(bytes.try_into().expect("8 bytes per f64"))
    }
}

pub type NodeId = usize;

#[derive(Debug, Clone)]
enum Op {
    Leaf { requires_grad: bool },
    MatVec(NodeId, NodeId),
    MatTVec(NodeId, NodeId),
    Add(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Dot(NodeId, NodeId),
    Scale(NodeId, NodeId),
    MulConst(NodeId),
    AddN(Vec<NodeId>),
    Sigmoid(NodeId),
    Tanh(NodeId),
    Relu(NodeId),
    Softmax(NodeId),
    Ln(NodeId),
    Neg(NodeId),
    OneMinus(NodeId),
    Concat(Vec<NodeId>),
    Slice(NodeId, usize),
    Row(NodeId, usize),
    Stack(Vec<NodeId>),
    Gather(NodeId, usize),
    ScatterAdd(NodeId, Vec<usize>),
    PadZeros(NodeId),
}

struct Node<S> {
    value: ArrayD<S>,
    op: Op,
    /// Constant factor for MulConst.
    aux: S,
}

/// Gradients of one backward pass, indexed by node id.
pub struct Gradients<S>(Vec<Option<ArrayD<S>>>);

impl<S: Scalar> Gradients<S> {
    pub fn get(&self, id: NodeId) -> Option<&ArrayD<S>> {
        self.0.get(id).and_then(|g| g.as_ref())
    }
}

fn as1<S>(v: &ArrayD<S>) -> ArrayView1<'_, S> {
    v.view().into_dimensionality::<Ix1>().expect("rank-1 value")
}

fn as2<S>(v: &ArrayD<S>) -> ArrayView2<'_, S> {
    v.view().into_dimensionality::<Ix2>().expect("rank-2 value")
}

fn outer<S: Scalar>(a: ArrayView1<S>, b: ArrayView1<S>) -> Array2<S> {
    let a = a.insert_axis(Axis(1));
    let b = b.insert_axis(Axis(0));
    a.dot(&b)
}

/// Numerically stable logistic function.
pub fn sigmoid_scalar<S: Scalar>(x: S) -> S {
    if x >= S::zero() {
        S::one() / (S::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (S::one() + e)
    }
}

pub fn softmax_vec<S: Scalar>(x: ArrayView1<S>) -> Array1<S> {
    let max = x.iter().cloned().fold(S::neg_infinity(), S::max);
    let exps: Array1<S> = x.mapv(|v| (v - max).exp());
    let sum = exps.sum();
    exps / sum
}

/// Arena of forward nodes; appending is the only mutation.
pub struct Tape<S> {
    nodes: Vec<Node<S>>,
}

impl<S: Scalar> Default for Tape<S> {
    fn default() -> Self {
        Self::new()
    }
}

impl<S: Scalar> Tape<S> {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &ArrayD<S> {
        &self.nodes[id].value
    }

    /// Value of a length-1 node.
    pub fn scalar_value(&self, id: NodeId) -> S {
        let v = as1(self.value(id));
        debug_assert_eq!(v.len(), 1);
        v[0]
    }

    pub fn vector_value(&self, id: NodeId) -> Array1<S> {
        as1(self.value(id)).to_owned()
    }

    fn push(&mut self, value: ArrayD<S>, op: Op) -> NodeId {
        self.nodes.push(Node {
            value,
            op,
            aux: S::zero(),
        });
        self.nodes.len() - 1
    }

    /// A leaf that receives no gradient.
    pub fn constant(&mut self, value: ArrayD<S>) -> NodeId {
        self.push(value, Op::Leaf { requires_grad: false })
    }

    pub fn constant_vec(&mut self, value: Array1<S>) -> NodeId {
        self.constant(value.into_dyn())
    }

    pub fn constant_scalar(&mut self, value: S) -> NodeId {
        self.constant(Array1::from_elem(1, value).into_dyn())
    }

    /// A leaf whose gradient is retained by `backward`.
    pub fn param(&mut self, value: ArrayD<S>) -> NodeId {
        self.push(value, Op::Leaf { requires_grad: true })
    }

    /// Matrix-vector product `A x`.
    pub fn matvec(&mut self, m: NodeId, v: NodeId) -> NodeId {
        let value = as2(self.value(m)).dot(&as1(self.value(v)));
        self.push(value.into_dyn(), Op::MatVec(m, v))
    }

    /// Transposed product `A^T x`.
    pub fn mattvec(&mut self, m: NodeId, v: NodeId) -> NodeId {
        let value = as2(self.value(m)).t().dot(&as1(self.value(v)));
        self.push(value.into_dyn(), Op::MatTVec(m, v))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let value = self.value(a) + self.value(b);
        self.push(value, Op::Add(a, b))
    }

    /// Elementwise product of same-shape values.
    pub fn mul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let value = self.value(a) * self.value(b);
        self.push(value, Op::Mul(a, b))
    }

    /// Inner product of two vectors, as a length-1 node.
    pub fn dot(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let value = as1(self.value(a)).dot(&as1(self.value(b)));
        self.push(Array1::from_elem(1, value).into_dyn(), Op::Dot(a, b))
    }

    /// Scales vector `v` by length-1 node `s`.
    pub fn scale(&mut self, s: NodeId, v: NodeId) -> NodeId {
        let factor = self.scalar_value(s);
        let value = self.value(v) * factor;
        self.push(value, Op::Scale(s, v))
    }

    /// Scales by a constant (no gradient through the constant).
    pub fn mul_const(&mut self, v: NodeId, c: S) -> NodeId {
        let value = self.value(v) * c;
        let id = self.push(value, Op::MulConst(v));
        self.nodes[id].aux = c;
        id
    }

    /// Sum of any number of same-shape values.
    pub fn add_n(&mut self, parts: Vec<NodeId>) -> NodeId {
        assert!(!parts.is_empty(), "add_n of nothing");
        let mut value = self.value(parts[0]).clone();
        for p in &parts[1..] {
            value = value + self.value(*p);
        }
        self.push(value, Op::AddN(parts))
    }

    pub fn sigmoid(&mut self, x: NodeId) -> NodeId {
        let value = self.value(x).mapv(sigmoid_scalar);
        self.push(value, Op::Sigmoid(x))
    }

    pub fn tanh(&mut self, x: NodeId) -> NodeId {
        let value = self.value(x).mapv(|v| v.tanh());
        self.push(value, Op::Tanh(x))
    }

    pub fn relu(&mut self, x: NodeId) -> NodeId {
        let value = self.value(x).mapv(|v| v.max(S::zero()));
        self.push(value, Op::Relu(x))
    }

    pub fn softmax(&mut self, x: NodeId) -> NodeId {
        let value = softmax_vec(as1(self.value(x)));
        self.push(value.into_dyn(), Op::Softmax(x))
    }

    pub fn ln(&mut self, x: NodeId) -> NodeId {
        let value = self.value(x).mapv(|v| v.ln());
        self.push(value, Op::Ln(x))
    }

    pub fn neg(&mut self, x: NodeId) -> NodeId {
        let value = self.value(x).mapv(|v| -v);
        self.push(value, Op::Neg(x))
    }

    pub fn one_minus(&mut self, x: NodeId) -> NodeId {
        let value = self.value(x).mapv(|v| S::one() - v);
        self.push(value, Op::OneMinus(x))
    }

    pub fn concat(&mut self, parts: Vec<NodeId>) -> NodeId {
        let mut data = Vec::new();
        for p in &parts {
            data.extend(as1(self.value(*p)).iter().cloned());
        }
        self.push(Array1::from_vec(data).into_dyn(), Op::Concat(parts))
    }

    /// Contiguous sub-vector `[start, start+len)`.
    pub fn slice(&mut self, x: NodeId, start: usize, len: usize) -> NodeId {
        let value = as1(self.value(x)).slice(ndarray::s![start..start + len]).to_owned();
        self.push(value.into_dyn(), Op::Slice(x, start))
    }

    /// Row of a matrix, used for embedding lookup.
    pub fn row(&mut self, m: NodeId, index: usize) -> NodeId {
        let value = as2(self.value(m)).row(index).to_owned();
        self.push(value.into_dyn(), Op::Row(m, index))
    }

    /// Stacks n same-length vectors into an (n, d) matrix.
    pub fn stack(&mut self, rows: Vec<NodeId>) -> NodeId {
        assert!(!rows.is_empty(), "stack of nothing");
        let d = as1(self.value(rows[0])).len();
        let mut value = Array2::zeros((rows.len(), d));
        for (i, r) in rows.iter().enumerate() {
            value.row_mut(i).assign(&as1(self.value(*r)));
        }
        self.push(value.into_dyn(), Op::Stack(rows))
    }

    /// Single element as a length-1 node.
    pub fn gather(&mut self, x: NodeId, index: usize) -> NodeId {
        let value = as1(self.value(x))[index];
        self.push(Array1::from_elem(1, value).into_dyn(), Op::Gather(x, index))
    }

    /// out[map[j]] += x[j], over a fresh zero vector of length `size`.
    pub fn scatter_add(&mut self, x: NodeId, map: Vec<usize>, size: usize) -> NodeId {
        let xs = as1(self.value(x));
        assert_eq!(xs.len(), map.len(), "scatter map length");
        let mut value = Array1::zeros(size);
        for (j, &k) in map.iter().enumerate() {
            value[k] = value[k] + xs[j];
        }
        self.push(value.into_dyn(), Op::ScatterAdd(x, map))
    }

    /// Extends a vector with zeros up to `size`.
    pub fn pad_zeros(&mut self, x: NodeId, size: usize) -> NodeId {
        let xs = as1(self.value(x));
        assert!(size >= xs.len(), "pad target shorter than input");
        let mut value = Array1::zeros(size);
        value.slice_mut(ndarray::s![..xs.len()]).assign(&xs);
        self.push(value.into_dyn(), Op::PadZeros(x))
    }

    /// Reverse pass from a length-1 root. Returns one gradient slot per node;
    /// only leaves created with [`Tape::param`] keep theirs, plus interior
    /// nodes still holding unread accumulations.
    pub fn backward(&self, root: NodeId) -> Gradients<S> {
        assert_eq!(
            as1(self.value(root)).len(),
            1,
            "backward root must be scalar"
        );
        let mut grads: Vec<Option<ArrayD<S>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[root] = Some(Array1::from_elem(1, S::one()).into_dyn());

        for id in (0..=root).rev() {
            let Some(gy) = grads[id].take() else { continue };
            let node = &self.nodes[id];
            match &node.op {
                Op::Leaf { requires_grad } => {
                    if *requires_grad {
                        grads[id] = Some(gy);
                    }
                    continue;
                }
                Op::MatVec(m, v) => {
                    let gyv = as1(&gy);
                    let mv = as2(self.value(*m));
                    let xv = as1(self.value(*v));
                    accumulate(&mut grads[*m], outer(gyv, xv).into_dyn());
                    accumulate(&mut grads[*v], mv.t().dot(&gyv).into_dyn());
                }
                Op::MatTVec(m, v) => {
                    let gyv = as1(&gy);
                    let mv = as2(self.value(*m));
                    let xv = as1(self.value(*v));
                    accumulate(&mut grads[*m], outer(xv, gyv).into_dyn());
                    accumulate(&mut grads[*v], mv.dot(&gyv).into_dyn());
                }
                Op::Add(a, b) => {
                    accumulate(&mut grads[*a], gy.clone());
                    accumulate(&mut grads[*b], gy);
                }
                Op::Mul(a, b) => {
                    accumulate(&mut grads[*a], &gy * self.value(*b));
                    accumulate(&mut grads[*b], &gy * self.value(*a));
                }
                Op::Dot(a, b) => {
                    let g = as1(&gy)[0];
                    accumulate(&mut grads[*a], self.value(*b) * g);
                    accumulate(&mut grads[*b], self.value(*a) * g);
                }
                Op::Scale(s, v) => {
                    let factor = self.scalar_value(*s);
                    let gs = as1(&gy).dot(&as1(self.value(*v)));
                    accumulate(&mut grads[*s], Array1::from_elem(1, gs).into_dyn());
                    accumulate(&mut grads[*v], &gy * factor);
                }
                Op::MulConst(v) => {
                    accumulate(&mut grads[*v], &gy * node.aux);
                }
                Op::AddN(parts) => {
                    for p in parts {
                        accumulate(&mut grads[*p], gy.clone());
                    }
                }
                Op::Sigmoid(x) => {
                    let y = &node.value;
                    accumulate(&mut grads[*x], &gy * &(y * &y.mapv(|v| S::one() - v)));
                }
                Op::Tanh(x) => {
                    let y = &node.value;
                    accumulate(&mut grads[*x], &gy * &y.mapv(|v| S::one() - v * v));
                }
                Op::Relu(x) => {
                    let mask = self
                        .value(*x)
                        .mapv(|v| if v > S::zero() { S::one() } else { S::zero() });
                    accumulate(&mut grads[*x], &gy * &mask);
                }
                Op::Softmax(x) => {
                    let y = as1(&node.value);
                    let gyv = as1(&gy);
                    let inner = gyv.dot(&y);
                    let gx = Array1::from_shape_fn(y.len(), |i| y[i] * (gyv[i] - inner));
                    accumulate(&mut grads[*x], gx.into_dyn());
                }
                Op::Ln(x) => {
                    accumulate(&mut grads[*x], &gy / self.value(*x));
                }
                Op::Neg(x) => {
                    accumulate(&mut grads[*x], gy.mapv(|v| -v));
                }
                Op::OneMinus(x) => {
                    accumulate(&mut grads[*x], gy.mapv(|v| -v));
                }
                Op::Concat(parts) => {
                    let gyv = as1(&gy);
                    let mut offset = 0;
                    for p in parts {
                        let len = as1(self.value(*p)).len();
                        let piece = gyv.slice(ndarray::s![offset..offset + len]).to_owned();
                        accumulate(&mut grads[*p], piece.into_dyn());
                        offset += len;
                    }
                }
                Op::Slice(x, start) => {
                    let gyv = as1(&gy);
                    let mut gx = Array1::zeros(as1(self.value(*x)).len());
                    gx.slice_mut(ndarray::s![*start..*start + gyv.len()])
                        .assign(&gyv);
                    accumulate(&mut grads[*x], gx.into_dyn());
                }
                Op::Row(m, index) => {
                    let shape = as2(self.value(*m)).raw_dim();
                    let mut gm = Array2::zeros(shape);
                    gm.row_mut(*index).assign(&as1(&gy));
                    accumulate(&mut grads[*m], gm.into_dyn());
                }
                Op::Stack(rows) => {
                    let gym = as2(&gy);
                    for (i, r) in rows.iter().enumerate() {
                        accumulate(&mut grads[*r], gym.row(i).to_owned().into_dyn());
                    }
                }
                Op::Gather(x, index) => {
                    let mut gx = Array1::zeros(as1(self.value(*x)).len());
                    gx[*index] = as1(&gy)[0];
                    accumulate(&mut grads[*x], gx.into_dyn());
                }
                Op::ScatterAdd(x, map) => {
                    let gyv = as1(&gy);
                    let gx = Array1::from_shape_fn(map.len(), |j| gyv[map[j]]);
                    accumulate(&mut grads[*x], gx.into_dyn());
                }
                Op::PadZeros(x) => {
                    let len = as1(self.value(*x)).len();
                    let piece = as1(&gy).slice(ndarray::s![..len]).to_owned();
                    accumulate(&mut grads[*x], piece.into_dyn());
                }
            }
        }
        Gradients(grads)
    }
}

fn accumulate<S: Scalar>(slot: &mut Option<ArrayD<S>>, delta: ArrayD<S>) {
    match slot {
        Some(g) => *g = &*g + &delta,
        None => *slot = Some(delta),
    }
}
