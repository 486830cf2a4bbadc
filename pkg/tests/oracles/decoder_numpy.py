"""Step-by-step numpy Transformer decoder (pre-norm, masked attention, GELU, mean pooling)."""
import math

import numpy as np


def layer_norm(x, gamma, beta, eps=1e-5):
    mu = x.mean(-1, keepdims=True)
    var = ((x - mu) ** 2).mean(-1, keepdims=True)
    return (x - mu) / np.sqrt(var + eps) * gamma + beta


def gelu(x):
    erf = np.vectorize(math.erf)
    return 0.5 * x * (1.0 + erf(x / math.sqrt(2.0)))


def attention(x, mask, w_qkv, b_qkv, w_out, b_out, heads):
    length, d = x.shape
    hd = d // heads
    proj = x @ w_qkv.T + b_qkv
    q, k, v = proj[:, :d], proj[:, d:2 * d], proj[:, 2 * d:]
    out = np.zeros((length, d))
    for h in range(heads):
        sl = slice(h * hd, (h + 1) * hd)
        for i in range(length):
            logits = []
            for j in range(length):
                logits.append(q[i, sl] @ k[j, sl] / math.sqrt(hd) if mask[j] else -np.inf)
            logits = np.array(logits)
            w = np.exp(logits - logits.max())
            w = w / w.sum()
            out[i, sl] = sum(w[j] * v[j, sl] for j in range(length))
    return out @ w_out.T + b_out


def block(x, mask, p, heads):
    x = x + attention(layer_norm(x, p["ln1_w"], p["ln1_b"]), mask, p["qkv"], p["qkv_bias"],
                      p["out"], p["out_bias"], heads)
    h = gelu(layer_norm(x, p["ln2_w"], p["ln2_b"]) @ p["ff1"].T + p["ff1_bias"])
    return x + h @ p["ff2"].T + p["ff2_bias"]


def decode(vectors, mask, positions, position_table, blocks, heads):
    x = vectors + position_table[positions]
    for p in blocks:
        x = block(x, mask, p, heads)
    real = [i for i in range(len(mask)) if mask[i]]
    return x[real].mean(0)


def hand_set_weights(dim, ff_dim, layers, tag=0.0):
    """Deterministic weights from trigonometric formulas; no random generator involved."""
    def grid(rows, cols, a, b):
        i = np.arange(rows)[:, None]
        j = np.arange(cols)[None, :]
        return 0.3 * np.sin(a * i + b * j + tag)

    blocks = []
    for n in range(layers):
        c = n + 1.0
        blocks.append({
            "ln1_w": 1.0 + 0.1 * np.cos(np.arange(dim) * c), "ln1_b": 0.05 * np.sin(np.arange(dim) + c),
            "ln2_w": 1.0 - 0.1 * np.sin(np.arange(dim) * c), "ln2_b": 0.05 * np.cos(np.arange(dim) - c),
            "qkv": grid(3 * dim, dim, 0.7 * c, 1.3), "qkv_bias": 0.02 * np.cos(np.arange(3 * dim) * c),
            "out": grid(dim, dim, 1.1, 0.5 * c), "out_bias": 0.03 * np.sin(np.arange(dim) * c),
            "ff1": grid(ff_dim, dim, 0.9, 0.4 * c), "ff1_bias": 0.01 * np.arange(ff_dim) / ff_dim,
            "ff2": grid(dim, ff_dim, 0.3 * c, 1.7), "ff2_bias": -0.02 * np.cos(np.arange(dim)),
        })
    return blocks
