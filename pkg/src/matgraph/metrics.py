"""Evaluation metrics: NER, masked-program memorization, KID, Gram style loss, pixel L1."""
from __future__ import annotations

import re
import struct
from pathlib import Path

import numpy as np

from .engine import ImageBuffer
from .transpiler import parse_compact_raw
from .transpiler.values import map_value_spans

MASK = "_"
FEATURE_MAGIC = b"MGFT"

# Tokens: identifiers/numbers (with dots and signs), or single punctuation marks.
TOKEN_RE = re.compile(r"[A-Za-z0-9_.+\-<>]+|[{}\[\],:]")


class MetricError(Exception):
    def __init__(self, code, message):
        super().__init__(f"{code}: {message}")
        self.code = code


def ner(stats) -> float:
    """Discarded over generated nodes; 0 when nothing was generated."""
    gen = stats.nodes_generated
    return stats.nodes_discarded / gen if gen else 0.0


def corpus_ner(ratios) -> float:
    ratios = list(ratios)
    return float(np.mean(ratios)) if ratios else 0.0


def tokenize(text: str) -> list:
    """Whitespace/punctuation split: ``{scale: 4}`` -> ``{ scale : 4 }``.

    Dotted references such as ``noise.output`` and signed decimals stay single tokens.
    """
    return TOKEN_RE.findall(text)


def mask_text(doc: str) -> str:
    """Replace every value inside ``params:`` maps with ``_``; keep everything else."""
    out = []
    for line in doc.split("\n"):
        stripped = line.lstrip(" ")
        if stripped.startswith("params: {"):
            base = len(line) - len(stripped) + len("params: ")
            body = line[base:]
            pieces, last = [], 0
            for _, start, end in map_value_spans(body):
                pieces.append(body[last:start])
                pieces.append(MASK)
                last = end
            pieces.append(body[last:])
            line = line[:base] + "".join(pieces)
        out.append(line)
    return "\n".join(out)


def mask_params(doc: str) -> list:
    """Masked token sequence of a compact document (ParseFailure if it does not parse)."""
    parse_compact_raw(doc)
    return tokenize(mask_text(doc))


def longest_common_run(a, b) -> int:
    """Length of the longest common contiguous token run (dynamic programming)."""
    if not a or not b:
        return 0
    index = {}
    for j, t in enumerate(b):
        index.setdefault(t, []).append(j)
    best = 0
    prev = {}
    for t in a:
        cur = {}
        for j in index.get(t, ()):
            n = prev.get(j - 1, 0) + 1
            cur[j] = n
            if n > best:
                best = n
        prev = cur
    return best


def consec_match_score(candidate, corpus) -> float:
    """Best longest-common-substring over the corpus, divided by candidate length."""
    if not candidate:
        raise MetricError("EMPTY_CANDIDATE", "candidate has no tokens")
    best = 0
    for ref in corpus:
        best = max(best, longest_common_run(candidate, ref))
        if best == len(candidate):
            break
    return best / len(candidate)


def _as_matrix(x):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2:
        raise MetricError("DIMENSION_MISMATCH", "feature matrices must be 2-D")
    if not np.all(np.isfinite(x)):
        raise MetricError("NON_FINITE", "feature matrix has NaN or Inf")
    return x


def _mmd2(x, y):
    d = x.shape[1]
    kxx = (x @ x.T / d + 1.0) ** 3
    kyy = (y @ y.T / d + 1.0) ** 3
    kxy = (x @ y.T / d + 1.0) ** 3
    m, n = len(x), len(y)
    sxx = (kxx.sum() - np.trace(kxx)) / (m * (m - 1))
    syy = (kyy.sum() - np.trace(kyy)) / (n * (n - 1))
    return float(sxx + syy - 2.0 * kxy.mean())


def kid(x, y, block_size=None) -> float:
    """Unbiased MMD^2 with the cubic polynomial kernel k(a,b) = (a.b/d + 1)^3.

    With ``block_size``, rows are split into consecutive disjoint blocks and the
    block estimates are averaged.
    """
    x, y = _as_matrix(x), _as_matrix(y)
    if x.shape[1] != y.shape[1]:
        raise MetricError("DIMENSION_MISMATCH", f"feature dims {x.shape[1]} != {y.shape[1]}")
    if len(x) < 2 or len(y) < 2:
        raise MetricError("INSUFFICIENT_SAMPLES", "need at least 2 rows in each matrix")
    if block_size is None:
        return _mmd2(x, y)
    if block_size < 2:
        raise MetricError("INSUFFICIENT_SAMPLES", "block size must be at least 2")
    n_blocks = min(len(x), len(y)) // block_size
    if n_blocks == 0:
        raise MetricError("INSUFFICIENT_SAMPLES", "fewer rows than one block")
    vals = [_mmd2(x[k * block_size:(k + 1) * block_size], y[k * block_size:(k + 1) * block_size])
            for k in range(n_blocks)]
    return float(np.mean(vals))


def gram(f) -> np.ndarray:
    """Gram matrix f f^T / (c h w) of a (c, h*w) or (c, h, w) feature map."""
    f = np.asarray(f, dtype=np.float64)
    c = f.shape[0]
    f = f.reshape(c, -1)
    return f @ f.T / (c * f.shape[1])


def gram_l1(fa, fb) -> float:
    """Sum over layers of the mean absolute difference of Gram matrices."""
    if len(fa) != len(fb):
        raise MetricError("DIMENSION_MISMATCH", "different number of layers")
    total = 0.0
    for a, b in zip(fa, fb):
        a, b = np.asarray(a), np.asarray(b)
        if a.shape != b.shape:
            raise MetricError("DIMENSION_MISMATCH", f"layer shapes {a.shape} != {b.shape}")
        total += float(np.abs(gram(a) - gram(b)).mean())
    return total


def pixel_l1(a, b) -> float:
    da = a.data if isinstance(a, ImageBuffer) else np.asarray(a)
    db = b.data if isinstance(b, ImageBuffer) else np.asarray(b)
    if da.shape != db.shape:
        raise MetricError("DIMENSION_MISMATCH", f"image shapes {da.shape} != {db.shape}")
    return float(np.abs(da.astype(np.float64) - db.astype(np.float64)).mean())


def write_features(path, x) -> None:
    """Feature file: b"MGFT", uint32 n, uint32 d (little endian), then n*d float32."""
    x = np.asarray(x, dtype="<f4")
    n, d = x.shape
    Path(path).write_bytes(FEATURE_MAGIC + struct.pack("<II", n, d) + x.tobytes())


def read_features(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    if raw[:4] != FEATURE_MAGIC or len(raw) < 12:
        raise MetricError("BAD_FEATURE_FILE", f"{path}: bad magic or truncated header")
    n, d = struct.unpack("<II", raw[4:12])
    if len(raw) != 12 + 4 * n * d:
        raise MetricError("BAD_FEATURE_FILE", f"{path}: expected {n}x{d} floats")
    return np.frombuffer(raw, dtype="<f4", offset=12).reshape(n, d).astype(np.float64)
