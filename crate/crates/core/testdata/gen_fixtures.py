#!/usr/bin/env python3
"""Regenerate the ONNX fixtures used by the external-backend tests.

Both graphs are tiny classifier heads over a [1, 3, 8, 8] float input:
spatial mean per channel, then a fixed 3x3 linear layer (weights stored
[out, in], applied via Gemm transB=1, matching common Linear exports).
head_logits.onnx stops at the logits; head_softmax.onnx appends a softmax
so tests can cover the "output is already a distribution" path.

The files are written with a minimal protobuf serializer over the public
ONNX schema (onnx.proto3), deliberately independent of the Rust reader it
tests. Weights are hard-coded so tests can recompute outputs by hand.
The logits fixture stores tensor dims unpacked and the softmax fixture
stores them packed, covering both legal encodings.

Run from this directory: python3 gen_fixtures.py
"""

import struct

WEIGHT = [
    [0.9, -0.3, 0.1],
    [-0.5, 0.8, -0.2],
    [0.2, -0.4, 0.6],
]
BIAS = [0.05, -0.10, 0.00]

# --- protobuf wire helpers ---


def varint(n: int) -> bytes:
    n &= (1 << 64) - 1  # negative int64 as two's complement
    out = bytearray()
    while True:
        b = n & 0x7F
        n >>= 7
        if n:
            out.append(b | 0x80)
        else:
            out.append(b)
            return bytes(out)


def tag(field: int, wire: int) -> bytes:
    return varint(field << 3 | wire)


def f_varint(field: int, n: int) -> bytes:
    return tag(field, 0) + varint(n)


def f_bytes(field: int, payload: bytes) -> bytes:
    return tag(field, 2) + varint(len(payload)) + payload


def f_string(field: int, s: str) -> bytes:
    return f_bytes(field, s.encode())


def f_float(field: int, x: float) -> bytes:
    return tag(field, 5) + struct.pack("<f", x)


# --- ONNX messages ---

FLOAT = 1  # TensorProto.DataType
ATTR_FLOAT, ATTR_INT, ATTR_INTS = 1, 2, 7  # AttributeProto.AttributeType


def attr_int(name: str, value: int) -> bytes:
    body = f_string(1, name) + f_varint(3, value) + f_varint(20, ATTR_INT)
    return f_bytes(5, body)


def attr_ints(name: str, values) -> bytes:
    packed = b"".join(varint(v) for v in values)
    body = f_string(1, name) + f_bytes(8, packed) + f_varint(20, ATTR_INTS)
    return f_bytes(5, body)


def attr_float(name: str, value: float) -> bytes:
    body = f_string(1, name) + f_float(2, value) + f_varint(20, ATTR_FLOAT)
    return f_bytes(5, body)


def node(op: str, name: str, inputs, outputs, attrs=b"") -> bytes:
    body = b"".join(f_string(1, i) for i in inputs)
    body += b"".join(f_string(2, o) for o in outputs)
    body += f_string(3, name) + f_string(4, op) + attrs
    return f_bytes(1, body)


def tensor(name: str, dims, values, packed_dims: bool) -> bytes:
    if packed_dims:
        body = f_bytes(1, b"".join(varint(d) for d in dims))
    else:
        body = b"".join(f_varint(1, d) for d in dims)
    body += f_varint(2, FLOAT)
    body += f_string(8, name)
    body += f_bytes(9, b"".join(struct.pack("<f", v) for v in values))
    return f_bytes(5, body)


def value_info(field: int, name: str, dims) -> bytes:
    shape = b"".join(f_bytes(1, f_varint(1, d)) for d in dims)
    tensor = f_varint(1, FLOAT) + f_bytes(2, shape)
    type_proto = f_bytes(1, tensor)  # TypeProto.tensor_type
    return f_bytes(field, f_string(1, name) + f_bytes(2, type_proto))


def model(graph: bytes) -> bytes:
    opset = f_bytes(8, f_varint(2, 13))
    return f_varint(1, 8) + f_string(2, "gen_fixtures") + f_bytes(7, graph) + opset


def build(softmax: bool, packed_dims: bool) -> bytes:
    flat_w = [v for row in WEIGHT for v in row]
    gemm_out = "logits" if softmax else "scores"
    nodes = node("ReduceMean", "pool", ["patch"], ["pooled"],
                 attr_ints("axes", [2, 3]) + attr_int("keepdims", 0))
    nodes += node("Gemm", "fc", ["pooled", "W", "B"], [gemm_out],
                  attr_float("alpha", 1.0) + attr_float("beta", 1.0)
                  + attr_int("transB", 1))
    if softmax:
        nodes += node("Softmax", "prob", ["logits"], ["scores"],
                      attr_int("axis", -1))
    graph = nodes
    graph += f_string(2, "head")
    graph += tensor("W", [3, 3], flat_w, packed_dims)
    graph += tensor("B", [3], BIAS, packed_dims)
    graph += value_info(11, "patch", [1, 3, 8, 8])
    graph += value_info(12, "scores", [1, 3])
    return model(graph)


if __name__ == "__main__":
    for softmax, path in [(False, "head_logits.onnx"), (True, "head_softmax.onnx")]:
        data = build(softmax, packed_dims=softmax)
        with open(path, "wb") as f:
            f.write(data)
        print(f"wrote {path} ({len(data)} bytes)")
