#!/usr/bin/env python3
"""Train the desk-scale reference network shipped in crates/core/fixtures/digits.

The Rust engine never trains; this script regenerates the fixture files:

    model.toml         layer manifest
    fc{1,2}.{w,b}.bin  little-endian f32 weights ([out][in] row-major) and biases
    calib.ds, test.ds  datasets (header + f32 features in [0, 1] + u32 labels)

Run: python3 tools/train_reference.py crates/core/fixtures/digits
"""
import struct
import sys
from pathlib import Path

import numpy as np
from sklearn.datasets import load_digits
from sklearn.neural_network import MLPClassifier

SEED = 20241
HIDDEN = 32


def write_f32(path, arr):
    path.write_bytes(np.asarray(arr, dtype="<f4").tobytes())


def write_dataset(path, x, y):
    header = b"FTDS" + struct.pack("<III", 1, x.shape[0], x.shape[1])
    body = np.asarray(x, dtype="<f4").tobytes() + np.asarray(y, dtype="<u4").tobytes()
    path.write_bytes(header + body)


def main(out):
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    digits = load_digits()
    x = (digits.data / 16.0).astype(np.float32)
    y = digits.target.astype(np.uint32)
    rng = np.random.default_rng(SEED)
    order = rng.permutation(len(x))
    x, y = x[order], y[order]
    train, calib, test = slice(0, 1000), slice(1000, 1297), slice(1297, None)

    clf = MLPClassifier(hidden_layer_sizes=(HIDDEN,), activation="relu",
                        alpha=1e-3, max_iter=2000, random_state=SEED)
    clf.fit(x[train], y[train])
    print("train acc", clf.score(x[train], y[train]))
    print("calib acc", clf.score(x[calib], y[calib]))
    print("test acc", clf.score(x[test], y[test]))

    write_f32(out / "fc1.w.bin", clf.coefs_[0].T)
    write_f32(out / "fc1.b.bin", clf.intercepts_[0])
    write_f32(out / "fc2.w.bin", clf.coefs_[1].T)
    write_f32(out / "fc2.b.bin", clf.intercepts_[1])
    write_dataset(out / "calib.ds", x[calib], y[calib])
    write_dataset(out / "test.ds", x[test], y[test])

    (out / "model.toml").write_text(f"""# Desk-scale reference network: 8x8 digits, 64 -> {HIDDEN} -> 10.
# Regenerate with tools/train_reference.py.
name = "digits-mlp"
weight_bits = 8

[[layers]]
id = "fc1"
kind = "dense"
in_dim = 64
out_dim = {HIDDEN}
activation = "relu"
backend = {{ family = "exact", width = 8 }}
protection = "none"
weights = "fc1.w.bin"
bias = "fc1.b.bin"

[[layers]]
id = "fc2"
kind = "dense"
in_dim = {HIDDEN}
out_dim = 10
activation = "softmax"
backend = {{ family = "exact", width = 8 }}
protection = "none"
weights = "fc2.w.bin"
bias = "fc2.b.bin"
""")


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else "crates/core/fixtures/digits")
