"""Counter-based Gaussian increments for two-sided Brownian motion.

Each (seed, path_id, substream) triple keys a Philox4x64 bit generator.
Increment ``k`` of a path is a pure function of ``(seed, path_id, k)``: its
raw 64-bit words sit at a fixed counter offset, so blocks can be produced
in any order and by any number of workers.

The lattice index ``k`` is two-sided: ``k >= 0`` covers ``[k h, (k+1) h]``
and draws from substream 0; ``k < 0`` draws index ``-k - 1`` of the
independent substream 1, which realises ``W(t) = -W2(-t)`` for ``t <= 0``.
Substream 2 is reserved for initial-law sampling.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = ["BrownianStream", "path_key", "increment_block", "uniform_block", "normal_block"]

POSITIVE, NEGATIVE, INITIAL = 0, 1, 2
_TWO_PI = 2.0 * math.pi
_INV_2_53 = 1.0 / 9007199254740992.0


def path_key(seed: int, path_id: int, substream: int) -> np.ndarray:
    ss = np.random.SeedSequence([int(seed) & (2**64 - 1), int(path_id), int(substream)])
    return ss.generate_state(2, np.uint64)


def _raw_block(keys, start_word: int, n_words: int) -> np.ndarray:
    """Raw Philox words ``[start_word, start_word + n_words)`` for each key."""
    counter, skip = divmod(start_word, 4)
    out = np.empty((len(keys), n_words), dtype=np.uint64)
    bg = np.random.Philox(key=np.zeros(2, dtype=np.uint64))
    state = bg.state
    state["buffer_pos"] = 4
    ctr = np.array([counter, 0, 0, 0], dtype=np.uint64)
    for i, key in enumerate(keys):
        # reassigning the state is cheaper than constructing a generator
        state["state"] = {"counter": ctr, "key": key}
        bg.state = state
        raw = bg.random_raw(n_words + skip)
        out[i] = raw[skip:]
    return out


def _box_muller(raw: np.ndarray, m: int) -> np.ndarray:
    """Pairs of raw words along the last axis -> the first ``m`` standard normals."""
    u1 = 1.0 - (raw[..., 0::2] >> np.uint64(11)).astype(np.float64) * _INV_2_53
    u2 = (raw[..., 1::2] >> np.uint64(11)).astype(np.float64) * _INV_2_53
    r = np.sqrt(-2.0 * np.log(u1))
    ang = _TWO_PI * u2
    out = np.empty(raw.shape[:-1] + (m,), dtype=np.float64)
    out[..., 0::2] = r * np.cos(ang)
    if m > 1:
        out[..., 1::2] = (r * np.sin(ang))[..., : m // 2]
    return out


def normal_block(keys, m: int, start: int, count: int) -> np.ndarray:
    """Standard normals of shape ``(len(keys), count, m)`` for stream indices
    ``start .. start + count - 1`` of one substream."""
    words = 2 * ((m + 1) // 2)
    raw = _raw_block(keys, start * words, count * words).reshape(len(keys), count, words)
    return _box_muller(raw, m)


def uniform_block(keys, start: int, count: int) -> np.ndarray:
    """Uniforms in ``[0, 1)`` of shape ``(len(keys), count)``."""
    raw = _raw_block(keys, start, count)
    return (raw >> np.uint64(11)).astype(np.float64) * _INV_2_53


def increment_block(seed: int, path_ids, m: int, h: float, k_start: int, count: int, keys=None) -> np.ndarray:
    """Brownian increments for lattice steps ``k_start .. k_start + count - 1``.

    Returns an array of shape ``(len(path_ids), count, m)`` with
    ``N(0, h)`` entries. ``keys`` may carry precomputed
    ``{substream: [key per path]}`` to avoid re-deriving them.
    """
    path_ids = list(path_ids)
    keys = keys or {}
    out = np.empty((len(path_ids), count, m))
    k_end = k_start + count
    sqrt_h = math.sqrt(h)
    if k_start < 0:
        neg_end = min(k_end, 0)
        n_neg = neg_end - k_start
        ks = keys.get(NEGATIVE) or [path_key(seed, p, NEGATIVE) for p in path_ids]
        # steps k_start..neg_end-1 map to substream indices -k-1, descending
        z = normal_block(ks, m, -neg_end, n_neg)
        out[:, :n_neg] = z[:, ::-1] * sqrt_h
    if k_end > 0:
        pos_start = max(k_start, 0)
        ks = keys.get(POSITIVE) or [path_key(seed, p, POSITIVE) for p in path_ids]
        out[:, pos_start - k_start :] = normal_block(ks, m, pos_start, k_end - pos_start) * sqrt_h
    return out


@dataclass(frozen=True)
class BrownianStream:
    """Increments of one path's two-sided Brownian motion on the lattice
    ``k * h``."""

    seed: int
    path_id: int
    m: int
    h: float

    def increments(self, k_start: int, count: int) -> np.ndarray:
        return increment_block(self.seed, [self.path_id], self.m, self.h, k_start, count)[0]

    def increment(self, k: int) -> np.ndarray:
        """``W((k + 1) h) - W(k h)`` as an ``m``-vector."""
        return self.increments(k, 1)[0]

    def value(self, k: int) -> np.ndarray:
        """``W(k h)`` with ``W(0) = 0``."""
        if k >= 0:
            return self.increments(0, k).sum(axis=0) if k else np.zeros(self.m)
        return -self.increments(k, -k).sum(axis=0)
