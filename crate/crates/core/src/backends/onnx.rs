//! Self-contained reader and executor for a subset of the ONNX interchange
//! format, enough to run exported classifier heads.
//!
//! Parsing walks the protobuf wire format directly, so there is no runtime
//! dependency. The executor supports float32 graphs built from: Gemm,
//! MatMul, Add, Relu, Flatten, Reshape, ReduceMean, GlobalAveragePool,
//! Softmax and Identity. Anything else is rejected at load time with the
//! offending operator named.

use std::collections::HashMap;

use crate::{Error, Result};

const SUPPORTED_OPS: [&str; 10] = [
    "Gemm",
    "MatMul",
    "Add",
    "Relu",
    "Flatten",
    "Reshape",
    "ReduceMean",
    "GlobalAveragePool",
    "Softmax",
    "Identity",
];

fn model_err(detail: impl Into<String>) -> Error {
    Error::Model(detail.into())
}

// ---- protobuf wire reading ----

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(buf: &'a [u8]) -> Self {
        Reader { buf, pos: 0 }
    }

    fn done(&self) -> bool {
        self.pos >= self.buf.len()
    }

    fn byte(&mut self) -> Result<u8> {
        let b = *self
            .buf
            .get(self.pos)
            .ok_or_else(|| model_err(format!("unexpected end of stream at byte {}", self.pos)))?;
        self.pos += 1;
        Ok(b)
    }

    fn varint(&mut self) -> Result<u64> {
        let mut value = 0u64;
        for shift in (0..64).step_by(7) {
            let b = self.byte()?;
            value |= ((b & 0x7f) as u64) << shift;
            if b & 0x80 == 0 {
                return Ok(value);
            }
        }
        Err(model_err("varint longer than 10 bytes"))
    }

    /// Field number and wire type of the next key.
    fn key(&mut self) -> Result<(u64, u8)> {
        let k = self.varint()?;
        Ok((k >> 3, (k & 7) as u8))
    }

    fn fixed32(&mut self) -> Result<u32> {
        let mut v = [0u8; 4];
        for b in &mut v {
            *b = self.byte()?;
        }
        Ok(u32::from_le_bytes(v))
    }

    fn fixed64(&mut self) -> Result<u64> {
        let mut v = [0u8; 8];
        for b in &mut v {
            *b = self.byte()?;
        }
        Ok(u64::from_le_bytes(v))
    }

    fn bytes(&mut self) -> Result<&'a [u8]> {
        let len = self.varint()? as usize;
        let end = self
            .pos
            .checked_add(len)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| {
                model_err(format!("length-delimited field overruns stream at byte {}", self.pos))
            })?;
        let slice = &self.buf[self.pos..end];
        self.pos = end;
        Ok(slice)
    }

    fn string(&mut self) -> Result<String> {
        String::from_utf8(self.bytes()?.to_vec()).map_err(|_| model_err("invalid UTF-8 string"))
    }

    fn skip(&mut self, wire: u8) -> Result<()> {
        match wire {
            0 => {
                self.varint()?;
            }
            1 => {
                self.fixed64()?;
            }
            2 => {
                self.bytes()?;
            }
            5 => {
                self.fixed32()?;
            }
            w => return Err(model_err(format!("unsupported wire type {w}"))),
        }
        Ok(())
    }
}

/// Repeated int64 field: either a single varint or a packed block.
fn read_i64s(r: &mut Reader, wire: u8, out: &mut Vec<i64>) -> Result<()> {
    match wire {
        0 => out.push(r.varint()? as i64),
        2 => {
            let mut p = Reader::new(r.bytes()?);
            while !p.done() {
                out.push(p.varint()? as i64);
            }
        }
        w => return Err(model_err(format!("int64 field with wire type {w}"))),
    }
    Ok(())
}

/// Repeated float field: either a single fixed32 or a packed block.
fn read_f32s(r: &mut Reader, wire: u8, out: &mut Vec<f32>) -> Result<()> {
    match wire {
        5 => out.push(f32::from_bits(r.fixed32()?)),
        2 => {
            let mut p = Reader::new(r.bytes()?);
            while !p.done() {
                out.push(f32::from_bits(p.fixed32()?));
            }
        }
        w => return Err(model_err(format!("float field with wire type {w}"))),
    }
    Ok(())
}

// ---- decoded model structures ----

/// Dense tensor, float32 activations or int64 shape/axis data.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub dims: Vec<usize>,
    pub data: TensorData,
}

#[derive(Debug, Clone, PartialEq)]
pub enum TensorData {
    F32(Vec<f32>),
    I64(Vec<i64>),
}

impl Tensor {
    pub fn f32(dims: Vec<usize>, data: Vec<f32>) -> Self {
        debug_assert_eq!(dims.iter().product::<usize>(), data.len());
        Tensor {
            dims,
            data: TensorData::F32(data),
        }
    }

    pub fn len(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn floats(&self) -> Result<&[f32]> {
        match &self.data {
            TensorData::F32(v) => Ok(v),
            TensorData::I64(_) => Err(model_err("expected a float tensor")),
        }
    }

    fn ints(&self) -> Result<&[i64]> {
        match &self.data {
            TensorData::I64(v) => Ok(v),
            TensorData::F32(_) => Err(model_err("expected an int64 tensor")),
        }
    }
}

#[derive(Debug, Clone)]
enum Attr {
    Int(i64),
    Ints(Vec<i64>),
    Float(f32),
    #[allow(dead_code)]
    Floats(Vec<f32>),
}

#[derive(Debug, Clone)]
struct Node {
    op_type: String,
    name: String,
    inputs: Vec<String>,
    outputs: Vec<String>,
    attrs: HashMap<String, Attr>,
}

impl Node {
    fn attr_i(&self, name: &str, default: i64) -> i64 {
        match self.attrs.get(name) {
            Some(Attr::Int(v)) => *v,
            _ => default,
        }
    }

    fn attr_f(&self, name: &str, default: f32) -> f32 {
        match self.attrs.get(name) {
            Some(Attr::Float(v)) => *v,
            _ => default,
        }
    }

    fn attr_ints(&self, name: &str) -> Option<&[i64]> {
        match self.attrs.get(name) {
            Some(Attr::Ints(v)) => Some(v),
            _ => None,
        }
    }
}

/// Declared graph input or output: name plus static dims where known.
#[derive(Debug, Clone)]
pub struct ValueInfo {
    pub name: String,
    /// `None` marks a symbolic dimension (typically the batch axis).
    pub dims: Vec<Option<usize>>,
}

/// Parsed, validated ONNX graph ready to execute on one input.
#[derive(Debug, Clone)]
pub struct OnnxModel {
    nodes: Vec<Node>,
    initializers: HashMap<String, Tensor>,
    input: ValueInfo,
    output: ValueInfo,
}

impl OnnxModel {
    /// Parse model bytes and refuse anything the executor cannot run.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes);
        let mut graph = None;
        while !r.done() {
            let (field, wire) = r.key()?;
            match (field, wire) {
                (7, 2) => graph = Some(parse_graph(r.bytes()?)?),
                _ => r.skip(wire)?,
            }
        }
        let (nodes, initializers, inputs, outputs) =
            graph.ok_or_else(|| model_err("model has no graph"))?;

        for node in &nodes {
            if !SUPPORTED_OPS.contains(&node.op_type.as_str()) {
                return Err(model_err(format!(
                    "unsupported operator {:?} (node {:?}); supported: {}",
                    node.op_type,
                    node.name,
                    SUPPORTED_OPS.join(", ")
                )));
            }
        }
        let mut dynamic: Vec<ValueInfo> = inputs
            .into_iter()
            .filter(|vi| !initializers.contains_key(&vi.name))
            .collect();
        if dynamic.len() != 1 {
            return Err(model_err(format!(
                "expected exactly one dynamic input, found {}",
                dynamic.len()
            )));
        }
        let output = outputs
            .into_iter()
            .next()
            .ok_or_else(|| model_err("model declares no output"))?;
        Ok(OnnxModel {
            nodes,
            initializers,
            input: dynamic.remove(0),
            output,
        })
    }

    pub fn input_info(&self) -> &ValueInfo {
        &self.input
    }

    /// Static class count from the output declaration, if present.
    pub fn declared_classes(&self) -> Option<usize> {
        self.output.dims.last().copied().flatten()
    }

    /// Execute the graph on one input tensor and return the first output.
    pub fn run(&self, input: Tensor) -> Result<Tensor> {
        for (dim, declared) in input.dims.iter().zip(&self.input.dims) {
            if let Some(d) = declared {
                if dim != d {
                    return Err(model_err(format!(
                        "input dims {:?} do not match declared {:?}",
                        input.dims, self.input.dims
                    )));
                }
            }
        }
        let mut env: HashMap<&str, Tensor> = HashMap::new();
        for (name, t) in &self.initializers {
            env.insert(name, t.clone());
        }
        env.insert(&self.input.name, input);

        for node in &self.nodes {
            let out = eval_node(node, &env)?;
            for (name, tensor) in node.outputs.iter().zip(out) {
                env.insert(name, tensor);
            }
        }
        env.remove(self.output.name.as_str())
            .ok_or_else(|| model_err(format!("output {:?} was never produced", self.output.name)))
    }
}

type ParsedGraph = (Vec<Node>, HashMap<String, Tensor>, Vec<ValueInfo>, Vec<ValueInfo>);

fn parse_graph(bytes: &[u8]) -> Result<ParsedGraph> {
    let mut r = Reader::new(bytes);
    let mut nodes = Vec::new();
    let mut initializers = HashMap::new();
    let mut inputs = Vec::new();
    let mut outputs = Vec::new();
    while !r.done() {
        let (field, wire) = r.key()?;
        match (field, wire) {
            (1, 2) => nodes.push(parse_node(r.bytes()?)?),
            (5, 2) => {
                let (name, tensor) = parse_tensor(r.bytes()?)?;
                initializers.insert(name, tensor);
            }
            (11, 2) => inputs.push(parse_value_info(r.bytes()?)?),
            (12, 2) => outputs.push(parse_value_info(r.bytes()?)?),
            _ => r.skip(wire)?,
        }
    }
    Ok((nodes, initializers, inputs, outputs))
}

fn parse_node(bytes: &[u8]) -> Result<Node> {
    let mut r = Reader::new(bytes);
    let mut node = Node {
        op_type: String::new(),
        name: String::new(),
        inputs: Vec::new(),
        outputs: Vec::new(),
        attrs: HashMap::new(),
    };
    while !r.done() {
        let (field, wire) = r.key()?;
        match (field, wire) {
            (1, 2) => node.inputs.push(r.string()?),
            (2, 2) => node.outputs.push(r.string()?),
            (3, 2) => node.name = r.string()?,
            (4, 2) => node.op_type = r.string()?,
            (5, 2) => {
                if let Some((name, attr)) = parse_attribute(r.bytes()?)? {
                    node.attrs.insert(name, attr);
                }
            }
            _ => r.skip(wire)?,
        }
    }
    Ok(node)
}

fn parse_attribute(bytes: &[u8]) -> Result<Option<(String, Attr)>> {
    let mut r = Reader::new(bytes);
    let mut name = String::new();
    let mut ints = Vec::new();
    let mut floats = Vec::new();
    let mut single_i = None;
    let mut single_f = None;
    while !r.done() {
        let (field, wire) = r.key()?;
        match (field, wire) {
            (1, 2) => name = r.string()?,
            (2, 5) => single_f = Some(f32::from_bits(r.fixed32()?)),
            (3, 0) => single_i = Some(r.varint()? as i64),
            (7, _) => read_f32s(&mut r, wire, &mut floats)?,
            (8, _) => read_i64s(&mut r, wire, &mut ints)?,
            _ => r.skip(wire)?,
        }
    }
    // The `type` field is deliberately ignored; populated payloads decide.
    let attr = if !ints.is_empty() {
        Some(Attr::Ints(ints))
    } else if !floats.is_empty() {
        Some(Attr::Floats(floats))
    } else if let Some(i) = single_i {
        Some(Attr::Int(i))
    } else {
        single_f.map(Attr::Float)
    };
    Ok(attr.map(|a| (name, a)))
}

fn parse_tensor(bytes: &[u8]) -> Result<(String, Tensor)> {
    let mut r = Reader::new(bytes);
    let mut dims: Vec<i64> = Vec::new();
    let mut data_type = 0i64;
    let mut floats = Vec::new();
    let mut ints = Vec::new();
    let mut raw: Option<&[u8]> = None;
    let mut name = String::new();
    while !r.done() {
        let (field, wire) = r.key()?;
        match (field, wire) {
            (1, _) => read_i64s(&mut r, wire, &mut dims)?,
            (2, 0) => data_type = r.varint()? as i64,
            (4, _) => read_f32s(&mut r, wire, &mut floats)?,
            (7, _) => read_i64s(&mut r, wire, &mut ints)?,
            (8, 2) => name = r.string()?,
            (9, 2) => raw = Some(r.bytes()?),
            _ => r.skip(wire)?,
        }
    }
    let dims: Vec<usize> = dims.iter().map(|&d| d.max(0) as usize).collect();
    let expected: usize = dims.iter().product();
    let data = match data_type {
        // FLOAT
        1 => {
            let values = if let Some(raw) = raw {
                raw.chunks_exact(4)
                    .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                    .collect()
            } else {
                floats
            };
            TensorData::F32(values)
        }
        // INT64
        7 => {
            let values = if let Some(raw) = raw {
                raw.chunks_exact(8)
                    .map(|c| i64::from_le_bytes([c[0], c[1], c[2], c[3], c[4], c[5], c[6], c[7]]))
                    .collect()
            } else {
                ints
            };
            TensorData::I64(values)
        }
        t => {
            return Err(model_err(format!(
                "tensor {name:?} has unsupported data type {t} (only float32 and int64)"
            )))
        }
    };
    let actual = match &data {
        TensorData::F32(v) => v.len(),
        TensorData::I64(v) => v.len(),
    };
    if actual != expected {
        return Err(model_err(format!(
            "tensor {name:?} holds {actual} values but dims {dims:?} expect {expected}"
        )));
    }
    Ok((name, Tensor { dims, data }))
}

fn parse_value_info(bytes: &[u8]) -> Result<ValueInfo> {
    let mut r = Reader::new(bytes);
    let mut name = String::new();
    let mut dims = Vec::new();
    while !r.done() {
        let (field, wire) = r.key()?;
        match (field, wire) {
            (1, 2) => name = r.string()?,
            (2, 2) => dims = parse_type_dims(r.bytes()?)?,
            _ => r.skip(wire)?,
        }
    }
    Ok(ValueInfo { name, dims })
}

/// TypeProto -> tensor_type -> shape -> dims.
fn parse_type_dims(bytes: &[u8]) -> Result<Vec<Option<usize>>> {
    let mut r = Reader::new(bytes);
    while !r.done() {
        let (field, wire) = r.key()?;
        if (field, wire) == (1, 2) {
            // TypeProto.Tensor
            let mut t = Reader::new(r.bytes()?);
            while !t.done() {
                let (tf, tw) = t.key()?;
                if (tf, tw) == (2, 2) {
                    // TensorShapeProto
                    let mut s = Reader::new(t.bytes()?);
                    let mut dims = Vec::new();
                    while !s.done() {
                        let (sf, sw) = s.key()?;
                        if (sf, sw) == (1, 2) {
                            // Dimension: dim_value=1 varint, dim_param=2 string
                            let mut d = Reader::new(s.bytes()?);
                            let mut dim = None;
                            while !d.done() {
                                let (df, dw) = d.key()?;
                                if (df, dw) == (1, 0) {
                                    let v = d.varint()? as i64;
                                    dim = (v > 0).then_some(v as usize);
                                } else {
                                    d.skip(dw)?;
                                }
                            }
                            dims.push(dim);
                        } else {
                            s.skip(sw)?;
                        }
                    }
                    return Ok(dims);
                }
                t.skip(tw)?;
            }
        } else {
            r.skip(wire)?;
        }
    }
    Ok(Vec::new())
}

// ---- executor ----

fn fetch<'e>(env: &'e HashMap<&str, Tensor>, name: &str, node: &Node) -> Result<&'e Tensor> {
    env.get(name).ok_or_else(|| {
        model_err(format!(
            "node {:?} ({}) reads undefined tensor {name:?}",
            node.name, node.op_type
        ))
    })
}

fn eval_node(node: &Node, env: &HashMap<&str, Tensor>) -> Result<Vec<Tensor>> {
    let t = match node.op_type.as_str() {
        "Identity" => fetch(env, &node.inputs[0], node)?.clone(),
        "Relu" => {
            let a = fetch(env, &node.inputs[0], node)?;
            Tensor::f32(a.dims.clone(), a.floats()?.iter().map(|v| v.max(0.0)).collect())
        }
        "Add" => {
            let a = fetch(env, &node.inputs[0], node)?;
            let b = fetch(env, &node.inputs[1], node)?;
            add(a, b)?
        }
        "MatMul" => {
            let a = fetch(env, &node.inputs[0], node)?;
            let b = fetch(env, &node.inputs[1], node)?;
            matmul(a, b, false)?
        }
        "Gemm" => {
            let a = fetch(env, &node.inputs[0], node)?;
            let b = fetch(env, &node.inputs[1], node)?;
            let alpha = node.attr_f("alpha", 1.0);
            let beta = node.attr_f("beta", 1.0);
            if node.attr_i("transA", 0) != 0 {
                return Err(model_err("Gemm transA=1 is not supported"));
            }
            let mut out = matmul(a, b, node.attr_i("transB", 0) != 0)?;
            if let TensorData::F32(v) = &mut out.data {
                for x in v.iter_mut() {
                    *x *= alpha;
                }
            }
            if let Some(c_name) = node.inputs.get(2) {
                let mut c = fetch(env, c_name, node)?.clone();
                if let TensorData::F32(v) = &mut c.data {
                    for x in v.iter_mut() {
                        *x *= beta;
                    }
                }
                out = add(&out, &c)?;
            }
            out
        }
        "Flatten" => {
            let a = fetch(env, &node.inputs[0], node)?;
            let axis = normalize_axis(node.attr_i("axis", 1), a.dims.len())?;
            let lead: usize = a.dims[..axis].iter().product();
            let tail: usize = a.dims[axis..].iter().product();
            Tensor {
                dims: vec![lead.max(1), tail],
                data: a.data.clone(),
            }
        }
        "Reshape" => {
            let a = fetch(env, &node.inputs[0], node)?;
            let shape = fetch(env, &node.inputs[1], node)?.ints()?.to_vec();
            reshape(a, &shape)?
        }
        "ReduceMean" => {
            let a = fetch(env, &node.inputs[0], node)?;
            let axes: Vec<i64> = if let Some(axes) = node.attr_ints("axes") {
                axes.to_vec()
            } else if let Some(name) = node.inputs.get(1) {
                fetch(env, name, node)?.ints()?.to_vec()
            } else {
                (0..a.dims.len() as i64).collect()
            };
            reduce_mean(a, &axes, node.attr_i("keepdims", 1) != 0)?
        }
        "GlobalAveragePool" => {
            let a = fetch(env, &node.inputs[0], node)?;
            if a.dims.len() < 3 {
                return Err(model_err("GlobalAveragePool expects an N,C,spatial tensor"));
            }
            let spatial: Vec<i64> = (2..a.dims.len() as i64).collect();
            reduce_mean(a, &spatial, true)?
        }
        "Softmax" => {
            let a = fetch(env, &node.inputs[0], node)?;
            softmax_axis(a, node.attr_i("axis", -1))?
        }
        op => return Err(model_err(format!("unsupported operator {op:?}"))),
    };
    Ok(vec![t])
}

fn normalize_axis(axis: i64, rank: usize) -> Result<usize> {
    let a = if axis < 0 { axis + rank as i64 } else { axis };
    if a < 0 || a as usize > rank {
        return Err(model_err(format!("axis {axis} out of range for rank {rank}")));
    }
    Ok(a as usize)
}

fn add(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let av = a.floats()?;
    let bv = b.floats()?;
    // Equal shapes, or a trailing-dimension vector broadcast.
    if a.dims == b.dims {
        let out = av.iter().zip(bv).map(|(x, y)| x + y).collect();
        return Ok(Tensor::f32(a.dims.clone(), out));
    }
    let (big, big_dims, small) = if av.len() >= bv.len() {
        (av, &a.dims, bv)
    } else {
        (bv, &b.dims, av)
    };
    let n = small.len();
    if n == 0 || big.len() % n != 0 || *big_dims.last().unwrap_or(&0) != n {
        return Err(model_err(format!(
            "cannot broadcast shapes {:?} and {:?}",
            a.dims, b.dims
        )));
    }
    let out = big
        .iter()
        .enumerate()
        .map(|(i, x)| x + small[i % n])
        .collect();
    Ok(Tensor::f32(big_dims.clone(), out))
}

fn matmul(a: &Tensor, b: &Tensor, trans_b: bool) -> Result<Tensor> {
    let av = a.floats()?;
    let bv = b.floats()?;
    if a.dims.len() != 2 || b.dims.len() != 2 {
        return Err(model_err(format!(
            "matmul expects 2-D tensors, got {:?} x {:?}",
            a.dims, b.dims
        )));
    }
    let (m, k) = (a.dims[0], a.dims[1]);
    let (bk, n) = if trans_b {
        (b.dims[1], b.dims[0])
    } else {
        (b.dims[0], b.dims[1])
    };
    if k != bk {
        return Err(model_err(format!(
            "matmul inner dims disagree: {:?} x {:?}",
            a.dims, b.dims
        )));
    }
    let mut out = vec![0.0f32; m * n];
    for i in 0..m {
        for j in 0..n {
            let mut acc = 0.0f32;
            for p in 0..k {
                let bvp = if trans_b { bv[j * k + p] } else { bv[p * n + j] };
                acc += av[i * k + p] * bvp;
            }
            out[i * n + j] = acc;
        }
    }
    Ok(Tensor::f32(vec![m, n], out))
}

fn reshape(a: &Tensor, shape: &[i64]) -> Result<Tensor> {
    let total = a.len();
    let mut dims: Vec<usize> = Vec::with_capacity(shape.len());
    let mut infer = None;
    for (i, &s) in shape.iter().enumerate() {
        match s {
            -1 if infer.is_none() => {
                infer = Some(i);
                dims.push(1);
            }
            0 => dims.push(*a.dims.get(i).ok_or_else(|| model_err("reshape 0-dim out of range"))?),
            s if s > 0 => dims.push(s as usize),
            _ => return Err(model_err(format!("invalid reshape target {shape:?}"))),
        }
    }
    let known: usize = dims.iter().product();
    if let Some(i) = infer {
        if known == 0 || total % known != 0 {
            return Err(model_err(format!("cannot infer reshape {shape:?} from {total} values")));
        }
        dims[i] = total / known;
    } else if known != total {
        return Err(model_err(format!(
            "reshape {shape:?} does not preserve {total} values"
        )));
    }
    Ok(Tensor {
        dims,
        data: a.data.clone(),
    })
}

fn reduce_mean(a: &Tensor, axes: &[i64], keepdims: bool) -> Result<Tensor> {
    let rank = a.dims.len();
    let av = a.floats()?;
    let mut reduce = vec![false; rank];
    for &ax in axes {
        let ax = normalize_axis(ax, rank)?;
        if ax == rank {
            return Err(model_err("reduce axis out of range"));
        }
        reduce[ax] = true;
    }
    let out_dims_full: Vec<usize> = a
        .dims
        .iter()
        .zip(&reduce)
        .map(|(&d, &r)| if r { 1 } else { d })
        .collect();
    let out_len: usize = out_dims_full.iter().product();
    let mut sums = vec![0.0f64; out_len];

    // Row-major strides for input and collapsed output.
    let mut strides = vec![1usize; rank];
    for i in (0..rank.saturating_sub(1)).rev() {
        strides[i] = strides[i + 1] * a.dims[i + 1];
    }
    let mut out_strides = vec![1usize; rank];
    for i in (0..rank.saturating_sub(1)).rev() {
        out_strides[i] = out_strides[i + 1] * out_dims_full[i + 1];
    }
    for (flat, &v) in av.iter().enumerate() {
        let mut out_flat = 0;
        for d in 0..rank {
            let idx = flat / strides[d] % a.dims[d];
            if !reduce[d] {
                out_flat += idx * out_strides[d];
            }
        }
        sums[out_flat] += v as f64;
    }
    let count: usize = a
        .dims
        .iter()
        .zip(&reduce)
        .filter(|(_, &r)| r)
        .map(|(&d, _)| d)
        .product::<usize>()
        .max(1);
    let data: Vec<f32> = sums.iter().map(|s| (s / count as f64) as f32).collect();
    let dims = if keepdims {
        out_dims_full
    } else {
        a.dims
            .iter()
            .zip(&reduce)
            .filter(|(_, &r)| !r)
            .map(|(&d, _)| d)
            .collect()
    };
    Ok(Tensor::f32(if dims.is_empty() { vec![1] } else { dims }, data))
}

fn softmax_axis(a: &Tensor, axis: i64) -> Result<Tensor> {
    let rank = a.dims.len();
    let ax = normalize_axis(axis, rank)?;
    if ax >= rank {
        return Err(model_err("softmax axis out of range"));
    }
    let av = a.floats()?;
    let axis_len = a.dims[ax];
    let inner: usize = a.dims[ax + 1..].iter().product();
    let outer: usize = a.dims[..ax].iter().product();
    let mut out = vec![0.0f32; av.len()];
    for o in 0..outer {
        for i in 0..inner {
            let idx = |j: usize| (o * axis_len + j) * inner + i;
            let max = (0..axis_len)
                .map(|j| av[idx(j)])
                .fold(f32::NEG_INFINITY, f32::max);
            let mut sum = 0.0f64;
            for j in 0..axis_len {
                let e = ((av[idx(j)] - max) as f64).exp();
                out[idx(j)] = e as f32;
                sum += e;
            }
            for j in 0..axis_len {
                out[idx(j)] = (out[idx(j)] as f64 / sum) as f32;
            }
        }
    }
    Ok(Tensor::f32(a.dims.clone(), out))
}
