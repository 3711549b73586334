"""Information quantities and capacity machinery.

Everything is in bits (logs base 2). Zero-probability terms follow the
0*log(0/q) = 0 convention throughout.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .core import Dist, as_probs, enum_cap, validate_dist

BA_MAX_ITER = 10 ** 6


class OutOfRange(ValueError):
    """Argument outside its documented domain."""


class DimensionMismatch(ValueError):
    """Channel matrices or priors with incompatible shapes."""


class NonConvergence(RuntimeError):
    """Blahut-Arimoto hit the iteration cap before reaching tolerance."""


class EmptyList(ValueError):
    """An averaging operation received no kernels."""


def binary_entropy(p: float) -> float:
    """h_b(p) in bits; h_b(0) = h_b(1) = 0."""
    if not 0.0 <= p <= 1.0:
        raise OutOfRange(f"binary_entropy needs p in [0,1], got {p}")
    if p == 0.0 or p == 1.0:
        return 0.0
    return float(-p * math.log2(p) - (1.0 - p) * math.log2(1.0 - p))


def hb_mono(p: float) -> float:
    """Monotone continuation of h_b: evaluates at min(p, 1/2), so it is
    nondecreasing and concave on p >= 0."""
    if p < 0.0:
        raise OutOfRange(f"hb_mono needs p >= 0, got {p}")
    return binary_entropy(min(p, 0.5))


def entropy_bits(p) -> float:
    """Shannon entropy of a distribution, in bits."""
    probs = as_probs(p)
    nz = probs[probs > 0]
    return float(-(nz * np.log2(nz)).sum())


class Dmc:
    """A discrete memoryless channel: one probability row per input letter."""

    __slots__ = ("matrix",)

    def __init__(self, matrix):
        m = np.asarray(matrix, dtype=float)
        if m.ndim != 2 or m.shape[0] < 1 or m.shape[1] < 1:
            raise DimensionMismatch("channel matrix must be 2-d and nonempty")
        for row in m:
            validate_dist(row)
        m = np.clip(m, 0.0, None)
        m.flags.writeable = False
        self.matrix = m

    @property
    def input_size(self) -> int:
        return self.matrix.shape[0]

    @property
    def output_size(self) -> int:
        return self.matrix.shape[1]

    def row(self, x: int) -> np.ndarray:
        return self.matrix[x]

    def __repr__(self) -> str:
        return f"Dmc({self.input_size}x{self.output_size})"


def _as_matrix(w) -> np.ndarray:
    return w.matrix if isinstance(w, Dmc) else Dmc(w).matrix


def mutual_information(q, w) -> float:
    """I(X;Y) in bits under the joint law Q(x) W(y|x)."""
    probs = as_probs(q)
    m = _as_matrix(w)
    if probs.size != m.shape[0]:
        raise DimensionMismatch(f"prior size {probs.size} != input count {m.shape[0]}")
    py = probs @ m
    joint = probs[:, None] * m
    mask = joint > 0
    ratio = np.divide(m, py[None, :], out=np.ones_like(m), where=mask)
    return float((joint[mask] * np.log2(ratio[mask])).sum())


@dataclass(frozen=True)
class CapacityResult:
    """Certified capacity: |capacity - C(W)| <= gap_bound <= requested tol."""

    capacity: float
    prior: np.ndarray
    iterations: int
    gap_bound: float


def blahut_arimoto(w, tol: float = 1e-9, max_iter: int = BA_MAX_ITER) -> CapacityResult:
    """Channel capacity max_Q I(Q,W) by the Blahut-Arimoto iteration.

    Stops when the standard certificate upper - lower <= tol, where
    lower = I(Q_t, W) and upper = max_x D(W(.|x) || Q_t W).
    """
    if tol <= 0:
        raise OutOfRange("tol must be positive")
    m = _as_matrix(w)
    nx = m.shape[0]
    q = np.full(nx, 1.0 / nx)
    mask = m > 0
    logm = np.zeros_like(m)
    logm[mask] = np.log2(m[mask])
    neg_row_entropy = (m * logm).sum(axis=1)
    for it in range(1, max_iter + 1):
        py = np.maximum(q @ m, 1e-300)
        # D(W(.|x) || QW) per input letter
        d = neg_row_entropy - m @ np.log2(py)
        lower = float(q @ d)
        upper = float(d.max())
        if upper - lower <= tol:
            return CapacityResult(max(lower, 0.0), q, it, max(upper - lower, 0.0))
        q = q * np.exp2(d - upper)
        q = q / q.sum()
    raise NonConvergence(f"no convergence to tol={tol} within {max_iter} iterations")


def mix_channels(ws, p) -> Dmc:
    """Entrywise mixture sum_i p_i W_i of channels on common alphabets."""
    mats = [_as_matrix(w) for w in ws]
    if not mats:
        raise EmptyList("need at least one channel")
    shape = mats[0].shape
    for m in mats[1:]:
        if m.shape != shape:
            raise DimensionMismatch("mixed channels must share alphabets")
    weights = as_probs(p)
    if weights.size != len(mats):
        raise DimensionMismatch(f"{weights.size} weights for {len(mats)} channels")
    mixed = np.tensordot(weights, np.stack(mats), axes=1)
    return Dmc(mixed)


def mixing_bounds(ws, p, tol: float = 1e-9):
    """(lower, mixed_capacity, upper) for the capacity of a channel mixture:
    sum p_i C(W_i) - H(p) <= C(sum p_i W_i) <= sum p_i C(W_i)."""
    weights = as_probs(p)
    caps = np.array([blahut_arimoto(w, tol=tol).capacity for w in ws])
    avg = float(weights @ caps)
    mixed = blahut_arimoto(mix_channels(ws, p), tol=tol).capacity
    return avg - entropy_bits(weights), mixed, avg


def averaged_channel(kernels) -> Dmc:
    """Unweighted entrywise mean of a nonempty list of kernels."""
    mats = [_as_matrix(k) for k in kernels]
    if not mats:
        raise EmptyList("need at least one kernel")
    shape = mats[0].shape
    for m in mats[1:]:
        if m.shape != shape:
            raise DimensionMismatch("averaged kernels must share alphabets")
    return Dmc(np.mean(np.stack(mats), axis=0))


def pessimistic_capacity(ch, q: int, n: int, tol: float = 1e-9) -> float:
    """Worst-case capacity of the state-conditioned averaged block channel.

    Minimizes C over all length-n sequences of channel states (one per
    super-symbol of dimension q), with no consistency constraint between
    consecutive states. Exact for channels whose conditional law given the
    history collapses to a finite state set.
    """
    from .channels import NotEnumerable, per_position_state_kernels

    if not getattr(ch, "state_enumerable", False):
        raise NotEnumerable("channel does not expose a finite state collapse")
    if n < 1 or q < 1:
        raise ValueError("need q >= 1 and n >= 1")
    s_count = ch.state_count
    if s_count ** n > enum_cap():
        raise NotEnumerable(
            f"{s_count}^{n} state sequences exceed enumeration cap {enum_cap()}")
    kernels = per_position_state_kernels(ch, q, n)
    best = math.inf
    if all(np.array_equal(kernels[i], kernels[0]) for i in range(1, n)):
        # position-independent kernels: the average over any state sequence is
        # a mixture of per-state kernels with rational weights j/n
        per_state = kernels[0]
        for counts in itertools.combinations_with_replacement(range(s_count), n):
            avg = np.mean([per_state[s] for s in counts], axis=0)
            best = min(best, blahut_arimoto(avg, tol=tol).capacity)
        return best
    for states in itertools.product(range(s_count), repeat=n):
        avg = np.mean([kernels[i][s] for i, s in enumerate(states)], axis=0)
        best = min(best, blahut_arimoto(avg, tol=tol).capacity)
    return best
