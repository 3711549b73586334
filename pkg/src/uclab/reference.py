"""Reference systems: fixed block codes applied repeatedly over a channel.

Covers code construction, iterative-mapping (IFB) and arbitrary-mapping (AFB)
error probability, alignment-set bookkeeping between code blocks and
super-symbols, collapsed channels, and the block-error variant of the Fano
bound. Messages are 0-based indices internally.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .capacity import Dmc, hb_mono
from .channels import CausalChannel, NotEnumerable, output_block_dist
from .core import Overflow, RandomSource, enum_cap, tuple_codec


class TooManyMessages(ValueError):
    """More messages than distinct codewords."""


class InvalidGeometry(ValueError):
    """Alignment geometry violates 1 <= L <= q."""


class InvalidArgs(ValueError):
    """Inconsistent arguments to a bound computation."""


@dataclass(frozen=True)
class BlockCode:
    """An (encoder, decoder) pair of fixed block length.

    encoder: [M, k] integer array of codewords; decoder: flat array over
    output k-tuple indices (lexicographic) holding the decoded message.
    """

    k: int
    M: int
    input_size: int
    output_size: int
    encoder: np.ndarray
    decoder: np.ndarray

    def __post_init__(self):
        enc = np.asarray(self.encoder, dtype=np.int64)
        dec = np.asarray(self.decoder, dtype=np.int64)
        if enc.shape != (self.M, self.k):
            raise ValueError(f"encoder shape {enc.shape} != ({self.M}, {self.k})")
        if enc.min() < 0 or enc.max() >= self.input_size:
            raise ValueError("codeword symbol out of range")
        if dec.shape != (self.output_size ** self.k,):
            raise ValueError("decoder must be total on output k-tuples")
        if dec.min() < 0 or dec.max() >= self.M:
            raise ValueError("decoded message out of range")
        enc.flags.writeable = False
        dec.flags.writeable = False
        object.__setattr__(self, "encoder", enc)
        object.__setattr__(self, "decoder", dec)

    @property
    def rate(self) -> float:
        return math.log2(self.M) / self.k

    def codeword(self, w: int):
        return tuple(int(v) for v in self.encoder[w])

    def to_text(self) -> str:
        """One codeword per line, symbols space-separated."""
        return "\n".join(" ".join(str(v) for v in row) for row in self.encoder) + "\n"

    @classmethod
    def from_text(cls, text: str, output_size: int, kernel=None) -> "BlockCode":
        rows = [[int(v) for v in line.split()] for line in text.splitlines() if line.strip()]
        if not rows:
            raise ValueError("empty code table")
        enc = np.asarray(rows, dtype=np.int64)
        input_size = int(enc.max()) + 1
        dec = _build_decoder(enc, input_size, output_size, kernel)
        return cls(enc.shape[1], enc.shape[0], input_size, output_size, enc, dec)


def _build_decoder(encoder: np.ndarray, input_size: int, output_size: int,
                   kernel) -> np.ndarray:
    """ML table against a per-symbol kernel, or minimum-Hamming fallback.

    Ties break toward the lowest message index.
    """
    m_count, k = encoder.shape
    out_codec = tuple_codec(k, output_size, cap=enum_cap())
    if kernel is not None:
        mat = kernel.matrix if isinstance(kernel, Dmc) else np.asarray(kernel, float)
        if mat.shape != (input_size, output_size):
            raise ValueError("kernel shape does not match code alphabets")
        with np.errstate(divide="ignore"):
            logm = np.log(mat)
        scores = np.zeros((out_codec.count, m_count))
        for yi in range(out_codec.count):
            ys = out_codec.tuple_of(yi)
            for w in range(m_count):
                scores[yi, w] = sum(logm[encoder[w, t], ys[t]] for t in range(k))
        return np.argmax(scores, axis=1).astype(np.int64)
    if output_size != input_size:
        raise ValueError("minimum-Hamming decoding needs matching alphabets")
    dec = np.empty(out_codec.count, dtype=np.int64)
    for yi in range(out_codec.count):
        ys = np.asarray(out_codec.tuple_of(yi))
        dists = (encoder != ys[None, :]).sum(axis=1)
        dec[yi] = int(np.argmin(dists))
    return dec


def random_block_code(k: int, M: int, Q, rng: RandomSource, kernel=None,
                      output_size: int | None = None,
                      exhaustive: bool = False) -> BlockCode:
    """Codebook with i.i.d. rows from Q^k (or the exhaustive lexicographic
    codebook), with an ML or minimum-Hamming decoder."""
    from .core import as_probs

    probs = as_probs(Q)
    input_size = probs.size
    if M > input_size ** k:
        raise TooManyMessages(f"M={M} exceeds {input_size}^{k}")
    if M < 1 or k < 1:
        raise ValueError("need M >= 1 and k >= 1")
    if output_size is None:
        if kernel is not None:
            mat = kernel.matrix if isinstance(kernel, Dmc) else np.asarray(kernel)
            output_size = mat.shape[1]
        else:
            output_size = input_size
    if exhaustive:
        codec = tuple_codec(k, input_size)
        enc = np.asarray([codec.tuple_of(i) for i in range(M)], dtype=np.int64)
    else:
        gen = rng.generator()
        enc = np.empty((M, k), dtype=np.int64)
        for w in range(M):
            for t in range(k):
                enc[w, t] = int(np.searchsorted(np.cumsum(probs), gen.random(),
                                                side="right"))
        enc = np.clip(enc, 0, input_size - 1)
    dec = _build_decoder(enc, input_size, output_size, kernel)
    return BlockCode(k, M, input_size, output_size, enc, dec)


# ---------------------------------------------------------------------------
# error probabilities
# ---------------------------------------------------------------------------


def block_code_error(code: BlockCode, vector_kernel) -> float:
    """Exact error of the code over an arbitrary vector channel given as a
    matrix indexed by (input k-tuple, output k-tuple)."""
    mat = vector_kernel.matrix if isinstance(vector_kernel, Dmc) else \
        np.asarray(vector_kernel, dtype=float)
    in_codec = tuple_codec(code.k, code.input_size)
    if mat.shape != (in_codec.count, code.output_size ** code.k):
        raise ValueError("vector kernel shape does not match the code")
    err = 0.0
    for w in range(code.M):
        row = mat[in_codec.index_of(code.codeword(w))]
        err += row[code.decoder != w].sum()
    return err / code.M


def _block_step(ch: CausalChannel, code: BlockCode, t0: int,
                alpha: np.ndarray):
    """One code block from state distribution alpha at time t0.

    Returns (error probability, unconditional next-state distribution), with
    the message uniform over the codebook.
    """
    s_count = ch.state_count
    err = 0.0
    nxt = np.zeros(s_count)
    for w in range(code.M):
        xs = code.codeword(w)
        carry = alpha[None, :]
        for step, x in enumerate(xs):
            tbl = ch.step_table(t0 + step)[:, x]
            carry = np.einsum("ps,sye->pye", carry, tbl).reshape(-1, s_count)
        mass = carry.sum(axis=1)
        err += mass[code.decoder != w].sum()
        nxt += carry.sum(axis=0)
    return err / code.M, nxt / code.M


def ifb_error_exact(code: BlockCode, ch: CausalChannel, m: int) -> float:
    """Average error probability of m iterated blocks, computed exactly."""
    if m < 1:
        raise ValueError("need m >= 1")
    if not getattr(ch, "exactly_enumerable", False):
        raise NotEnumerable("exact IFB error needs an enumerable channel")
    _check_code_channel(code, ch)
    ch._check_horizon(m * code.k)
    alpha = ch.initial_state_dist()
    total = 0.0
    for i in range(m):
        err, alpha = _block_step(ch, code, i * code.k + 1, alpha)
        total += err
    return total / m


def ifb_error(code: BlockCode, ch: CausalChannel, m: int, trials: int,
              rng: RandomSource):
    """Monte-Carlo IFB error; returns (estimate, standard error)."""
    if m < 1 or trials < 1:
        raise ValueError("need m >= 1 and trials >= 1")
    _check_code_channel(code, ch)
    out_codec = tuple_codec(code.k, code.output_size)
    means = np.empty(trials)
    for t in range(trials):
        chan = ch.clone()
        gen = rng.derive("ifb-trial", t).generator()
        wrong = 0
        for i in range(m):
            w = int(gen.integers(code.M))
            ys = chan.sample_block(code.codeword(w), gen)
            if int(code.decoder[out_codec.index_of(ys)]) != w:
                wrong += 1
        means[t] = wrong / m
    est = float(means.mean())
    se = float(means.std(ddof=1) / math.sqrt(trials)) if trials > 1 else float("nan")
    return est, se


def afb_error(code: BlockCode, ch: CausalChannel, m: int) -> float:
    """Average over blocks of the worst-case-state block error.

    The maximum over histories collapses to a maximum over reachable channel
    states before each block (exact for state-enumerable channels); the first
    block sees the channel's initial condition.
    """
    if m < 1:
        raise ValueError("need m >= 1")
    if not getattr(ch, "state_enumerable", False):
        raise NotEnumerable("AFB error needs a state-enumerable channel")
    _check_code_channel(code, ch)
    ch._check_horizon(m * code.k)
    s_count = ch.state_count
    init = ch.initial_state_dist()
    total, _ = _block_step(ch, code, 1, init)
    reach = init > 0
    t = 1
    for i in range(1, m):
        # advance reachability over the previous block's k symbols
        for _ in range(code.k):
            tbl = ch.step_table(t)
            step_any = tbl.sum(axis=2)  # [s, x, s']
            reach = np.einsum("s,sxe->e", reach.astype(float),
                              step_any).astype(bool) if reach.any() else reach
            t += 1
        worst = 0.0
        for s in np.flatnonzero(reach):
            point = np.zeros(s_count)
            point[s] = 1.0
            err, _ = _block_step(ch, code, i * code.k + 1, point)
            worst = max(worst, err)
        total += worst
    return total / m


def _check_code_channel(code: BlockCode, ch: CausalChannel) -> None:
    if code.input_size != ch.input_size or code.output_size != ch.output_size:
        raise ValueError("code alphabets do not match the channel")


# ---------------------------------------------------------------------------
# alignment sets
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AlignmentSummary:
    """Per-set sizes and coverage fractions for blocks inside super-symbols.

    lambdas[0] is the uncovered fraction; lambdas[j] for j = 1..k covers the
    blocks counted in set B_j. The fractions are exact rationals summing to 1.
    """

    q: int
    k: int
    L: int
    n_supers: int
    set_sizes: tuple
    block_counts: tuple
    n0: int
    lambdas: tuple

    @property
    def covered_symbols(self) -> int:
        return sum(b * nb * self.k for b, nb in zip(self.set_sizes, self.block_counts))


def alignment(q: int, k: int, L: int, n_supers: int) -> AlignmentSummary:
    """Alignment-set accounting for block length k inside super-symbols of
    dimension q, keeping only blocks fully within symbols L..q."""
    if q < 1 or k < 1 or n_supers < 1:
        raise ValueError("q, k, n_supers must be >= 1")
    if not 1 <= L <= q:
        raise InvalidGeometry(f"need 1 <= L <= q, got L={L}, q={q}")
    set_sizes = []
    block_counts = []
    for j in range(1, k + 1):
        size = (n_supers - j) // k + 1 if j <= n_supers else 0
        set_sizes.append(size)
        # block starts sit at global positions = 1 (mod k); relative to a
        # B_j super-symbol start they are = rho_j (mod k)
        rho = (1 - (j - 1) * q) % k
        first = L + ((rho - L) % k)
        last = q - k + 1
        block_counts.append((last - first) // k + 1 if first <= last else 0)
    covered = sum(b * nb * k for b, nb in zip(set_sizes, block_counts))
    n0 = n_supers * q - covered
    total = n_supers * q
    lambdas = [Fraction(n0, total)]
    lambdas += [Fraction(b * nb * k, total)
                for b, nb in zip(set_sizes, block_counts)]
    return AlignmentSummary(q, k, L, n_supers, tuple(set_sizes),
                            tuple(block_counts), n0, tuple(lambdas))


# ---------------------------------------------------------------------------
# collapsed channels
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CollapsedChannel:
    """Per-alignment-set averaged super-symbol kernel.

    Input letters are q-tuples, output letters are the (q-L+1)-tuples of
    symbols L..q. provenance records whether pre-block histories were the
    realized code-induced ones or forced states.
    """

    dmc: Dmc
    provenance: str
    q: int
    L: int


def _code_state_before(ch: CausalChannel, code: BlockCode, symbols: int) -> np.ndarray:
    """State distribution after `symbols` channel uses driven by the iterated
    code with uniform i.i.d. messages."""
    s_count = ch.state_count
    psi = None  # [s, w] joint with the in-flight message
    alpha = ch.initial_state_dist()
    for t in range(symbols):
        pos = t % code.k
        if pos == 0:
            psi = alpha[:, None] * np.full(code.M, 1.0 / code.M)[None, :]
        tbl = ch.step_table(t + 1)
        step_any = tbl.sum(axis=2)  # [s, x, s']
        nxt = np.zeros_like(psi)
        for w in range(code.M):
            nxt[:, w] = psi[:, w] @ step_any[:, code.encoder[w, pos], :]
        psi = nxt
        alpha = psi.sum(axis=1)
    return alpha


def collapsed_channel(ch: CausalChannel, code: BlockCode, b_set, q: int, L: int,
                      mode: str = "realized", states=None) -> CollapsedChannel:
    """Average the super-symbol kernel (outputs L..q) over the given set of
    super-symbol indices.

    mode "realized" conditions each term on the code-induced history; mode
    "forced" conditions super-symbol i on the supplied channel state.
    """
    if not getattr(ch, "exactly_enumerable", False):
        raise NotEnumerable("collapsed channel needs an enumerable channel")
    if not 1 <= L <= q:
        raise InvalidGeometry(f"need 1 <= L <= q, got L={L}, q={q}")
    indices = sorted(int(i) for i in b_set)
    if not indices or indices[0] < 1:
        raise ValueError("b_set must be nonempty with 1-based indices")
    in_codec = tuple_codec(q, ch.input_size)
    out_count = ch.output_size ** (q - L + 1)
    if in_codec.count * out_count > enum_cap():
        raise Overflow("collapsed kernel exceeds enumeration cap")
    ch._check_horizon(indices[-1] * q)
    if mode == "forced":
        if states is None or len(states) != len(indices):
            raise ValueError("forced mode needs one state per index in b_set")
    elif mode != "realized":
        raise ValueError(f"unknown mode {mode!r}")

    s_count = ch.state_count
    acc = np.zeros((in_codec.count, out_count))
    for pos, i in enumerate(indices):
        t0 = (i - 1) * q + 1
        if mode == "realized":
            alpha = _code_state_before(ch, code, (i - 1) * q)
        else:
            alpha = np.zeros(s_count)
            alpha[int(states[pos])] = 1.0
        for xi in range(in_codec.count):
            acc[xi] += output_block_dist(ch, t0, alpha, in_codec.tuple_of(xi),
                                         skip=L - 1)
    acc /= len(indices)
    return CollapsedChannel(Dmc(acc), mode, q, L)


# ---------------------------------------------------------------------------
# bounds
# ---------------------------------------------------------------------------


def fano_lower_bound(K: float, n_blocks: int, k: int, R: float,
                     eps_bar: float) -> float:
    """Block-error Fano bound: the collapsed-channel capacity must be at
    least K (1 - eps_bar) - n_blocks * hb_mono(eps_bar)."""
    if eps_bar < 0 or n_blocks < 1 or k < 1 or R < 0:
        raise InvalidArgs("need eps_bar >= 0, n_blocks >= 1, k >= 1, R >= 0")
    if abs(K - n_blocks * k * R) > 1e-9 * max(1.0, abs(K)):
        raise InvalidArgs(f"K={K} is not n_blocks*k*R={n_blocks * k * R}")
    return K * (1.0 - eps_bar) - n_blocks * hb_mono(eps_bar)


def delta1(k: int, R: float, t: float) -> float:
    """Rate-loss term R*t + hb_mono(t)/k; concave and vanishing at t=0."""
    if k < 1 or R < 0 or t < 0:
        raise InvalidArgs("need k >= 1, R >= 0, t >= 0")
    return R * t + hb_mono(t) / k


def delta2_bound(k: int, R: float, L: int, q: int) -> float:
    """Alignment/mixing overhead bound R*(L-1+2k)/q + log2(k)/q."""
    if k < 1 or R < 0 or L < 1 or q < 1:
        raise InvalidArgs("need k >= 1, R >= 0, L >= 1, q >= 1")
    return R * (L - 1 + 2 * k) / q + math.log2(k) / q
