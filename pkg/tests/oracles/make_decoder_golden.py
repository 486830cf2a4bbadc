"""Freeze the micro-decoder golden (2 layers, 2 heads, width 8, 4 tokens) from the numpy oracle.

Run from the repository root: ``python3 tests/oracles/make_decoder_golden.py``.
"""
import json
import os
import sys

import numpy as np

sys.path.insert(0, os.path.join(os.path.dirname(__file__), ".."))

from oracles.decoder_numpy import decode, hand_set_weights  # noqa: E402

DIM, FF, LAYERS, HEADS = 8, 16, 2, 2


def inputs():
    tokens = np.array([[np.sin(0.5 * i + 0.25 * j) for j in range(DIM)] for i in range(4)])
    positions = np.array([0, 1, 2, 3])
    position_table = np.array([[0.1 * np.cos(i + 2 * j) for j in range(DIM)] for i in range(4)])
    return tokens, positions, position_table


def main():
    tokens, positions, table = inputs()
    blocks = hand_set_weights(DIM, FF, LAYERS)
    full = decode(tokens, [True] * 4, positions, table, blocks, HEADS)
    # same input with the qualifier pair masked (treated as padding)
    masked = decode(tokens, [True, True, False, False], positions, table, blocks, HEADS)
    out = {"dim": DIM, "ff_dim": FF, "layers": LAYERS, "heads": HEADS,
           "pooled_all_real": full.tolist(), "pooled_two_real": masked.tolist()}
    with open(os.path.join(os.path.dirname(__file__), "..", "golden", "decoder_micro.json"), "w") as fh:
        json.dump(out, fh, indent=1)


if __name__ == "__main__":
    main()
