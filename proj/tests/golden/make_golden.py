#!/usr/bin/env python3
"""Regenerates the binary golden files for the container tests.

The writer here is intentionally independent of the C++ implementation: it
assembles headers with json.dumps and packs payloads with struct, so byte
comparisons in the tests check the C++ writer against a second
implementation of the format rather than against itself.

Run from this directory: python3 make_golden.py
"""

import json
import struct


def bf16_bytes(x: float) -> bytes:
    """float -> bfloat16 bits, round-to-nearest-even from the float32 value.

    Only use values exactly representable in bfloat16 so the double->bf16
    rounding done by the library cannot disagree with this float64->float32
    route.
    """
    b = int.from_bytes(struct.pack("<f", x), "little")
    lower = b & 0xFFFF
    upper = b >> 16
    if lower > 0x8000 or (lower == 0x8000 and (upper & 1)):
        upper += 1
    return struct.pack("<H", upper & 0xFFFF)


def write_container(path: str, entries, metadata=None) -> None:
    """entries: list of (name, dtype, shape, payload_bytes)."""
    by_name = {e[0]: e for e in entries}
    names = sorted(by_name)
    header = {}
    data = b""
    offset = 0
    for name in names:
        _, dtype, shape, payload = by_name[name]
        header[name] = {
            "data_offsets": [offset, offset + len(payload)],
            "dtype": dtype,
            "shape": shape,
        }
        data += payload
        offset += len(payload)
    if metadata:
        header["__metadata__"] = metadata
    blob = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as f:
        f.write(struct.pack("<Q", len(blob)))
        f.write(blob)
        f.write(data)


def checkpoint_value(layer: int, matrix: int, i: int, j: int) -> float:
    # Exactly representable in float32: integer numerator below 2**24,
    # divided by a power of two.
    return (layer * 4 + matrix) + (i * 131 + j * 7 - 300) / 256.0


def main() -> None:
    # One F32 tensor "w" holding [[1, 2], [3, 4]].
    write_container(
        "simple_f32.bin",
        [("w", "F32", [2, 2], struct.pack("<4f", 1.0, 2.0, 3.0, 4.0))],
    )

    # Empty header "{}".
    write_container("empty.bin", [])

    # Mixed dtypes plus metadata; the canonical-bytes comparison target.
    write_container(
        "canonical.bin",
        [
            ("alpha", "F64", [3], struct.pack("<3d", 0.1, -2.5, 1e300)),
            ("beta.1", "F16", [2, 2], struct.pack("<4e", 1.0, -0.5, 0.25, 2048.0)),
            ("gamma", "BF16", [2], bf16_bytes(1.5) + bf16_bytes(-3.0)),
            ("delta", "F32", [2], struct.pack("<2f", 3.25, -0.125)),
        ],
        metadata={"purpose": "golden", "version": "1"},
    )

    # simple_f32.bin with the data section cut short.
    with open("simple_f32.bin", "rb") as f:
        blob = f.read()
    with open("truncated.bin", "wb") as f:
        f.write(blob[:-4])

    # Two-layer synthetic checkpoint, d_model = 64, h = 4, all F32.
    # q/k/v are stored transposed relative to the forward-pass orientation
    # (transpose_on_load true in naming.json); o is stored directly.
    entries = []
    d = 64
    for layer in range(2):
        for m_index, m_name in enumerate("qkvo"):
            payload = b"".join(
                struct.pack("<f", checkpoint_value(layer, m_index, i, j))
                for i in range(d)
                for j in range(d)
            )
            name = f"model.layers.{layer}.attn.{m_name}.weight"
            entries.append((name, "F32", [d, d], payload))
    write_container("checkpoint.bin", entries)

    naming = {
        "q": "model.layers.{layer}.attn.q.weight",
        "k": "model.layers.{layer}.attn.k.weight",
        "v": "model.layers.{layer}.attn.v.weight",
        "o": "model.layers.{layer}.attn.o.weight",
        "transpose_on_load": {"q": True, "k": True, "v": True, "o": False},
        "n_heads": 4,
        "n_layers": 2,
    }
    with open("naming.json", "w") as f:
        json.dump(naming, f, indent=2)
        f.write("\n")


if __name__ == "__main__":
    main()
