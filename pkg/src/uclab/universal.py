"""The epoch/super-symbol universal scheme with feedback.

An N-symbol horizon is split into epochs with doubling super-symbol
dimension. Inside each epoch the inner adaptive scheme runs once: a training
prefix with uniform inputs (outputs fed back) estimates the time-averaged
super-symbol kernel, a random tree code drawn from the capacity-achieving
prior of that estimate carries the message, and beam decoding plus a trailing
hash make mis-decoding detectable, so an undecodable epoch degrades to rate 0
rather than to bit errors. The announced rate per epoch therefore tracks the
capacity of the trained kernel minus an explicit margin.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .channels import CausalChannel, super_symbol_view
from .core import ALPHABET_CAP, RandomSource

MEMORY_BITS = 16           # shift-register memory of the inner trellis code
TRAIN_SMOOTHING = 0.5
NOISY_RATE_FACTOR = 0.68
RATE_UP = 1.03             # window rate adaptation on hash pass ...
RATE_DOWN = 0.85           # ... and on hash fail
FIRST_WINDOW_TRIM = 0.85   # insurance discount while the estimate is raw
DECLARED_FRACTION = 0.75   # fraction of the plan the margin commits to
WINDOW_SUPERS = 1024       # ARQ window length in super-symbols
MAX_BITS_PER_STEP = 8
HASH_BITS_WINDOW = 16      # per-window acceptance hash
HASH_BITS_DET = 4
MIN_EPOCH_SUPERS = 16
MIN_CODED_WINDOW = 64      # shortest stretch worth coding
TAIL_PARITY_STEPS = 64     # release-free steps guarding each window tail
EXTENSION_STEPS = 192      # incremental-redundancy segment on a failed window
MAX_EXTENSIONS = 2
LIST_ENDS = 16             # end states whose tracebacks get hash-checked
_TRACE = None              # set to a list to record per-window outcomes
PRIOR_LUT_BITS = 10        # quantization of the codeword prior


class InvalidArgs(ValueError):
    """Argument outside its documented domain."""


class NTooSmall(ValueError):
    """Horizon too short for the first epoch."""


class BudgetExceeded(RuntimeError):
    """Feedback usage went past the configured link budget."""


class AlphabetOverflow(ValueError):
    """Super-symbol alphabet too large for the inner scheme."""


class Misalignment(ValueError):
    """Per-epoch results do not line up with the schedule."""


class InvalidSequence(ValueError):
    """Weight sequence not positive and nondecreasing."""


def delta_c(n, c_delta: float) -> float:
    """Per-epoch capacity margin c_delta * (ln^2(n)/n)^(1/4)."""
    if n < 2:
        raise InvalidArgs(f"need n >= 2, got {n}")
    if c_delta < 0:
        raise InvalidArgs("c_delta must be nonnegative")
    return c_delta * (math.log(n) ** 2 / n) ** 0.25


# ---------------------------------------------------------------------------
# schedule
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class EpochSpec:
    m: int
    q: int
    n_supers: int
    eps_m: float
    delta_m: float

    @property
    def symbols(self) -> int:
        return self.q * self.n_supers


@dataclass(frozen=True)
class EpochSchedule:
    N: int
    epsilon: float
    delta_c_target: float
    c_delta: float
    epochs: tuple

    @property
    def total_symbols(self) -> int:
        return sum(e.symbols for e in self.epochs)


def _min_n_for_delta(target: float, c_delta: float) -> int:
    """Smallest n >= MIN_EPOCH_SUPERS with delta_c(n) <= target."""
    lo = MIN_EPOCH_SUPERS
    if delta_c(lo, c_delta) <= target:
        return lo
    hi = lo
    while delta_c(hi, c_delta) > target:
        hi *= 2
        if hi > 2 ** 62:
            raise InvalidArgs(f"delta_c target {target} unattainable")
    while lo + 1 < hi:
        mid = (lo + hi) // 2
        if delta_c(mid, c_delta) <= target:
            hi = mid
        else:
            lo = mid
    return hi


def build_schedule(N: int, epsilon: float, delta_c_target: float,
                   n_star_rule=None, c_delta: float = 1.0) -> EpochSchedule:
    """Epoch plan: lengths satisfy the minimum-length rule, the delta_c rule,
    and the final-epoch extension rule, with sum q_m * N_m = N exactly.

    When the leftover after the extension is not a whole super-symbol, the
    remainder (< q of the last epoch) is absorbed by the first epoch, which
    runs at q = 1.
    """
    if not 0 < epsilon < 1:
        raise InvalidArgs("epsilon must be in (0, 1)")
    if delta_c_target <= 0:
        raise InvalidArgs("delta_c_target must be positive")
    n2 = _min_n_for_delta(delta_c_target, c_delta)

    def floor_for(m: int, prev_symbols: int) -> int:
        if n_star_rule is not None:
            base = max(MIN_EPOCH_SUPERS, int(n_star_rule(m)))
        else:
            base = max(64, -(-prev_symbols // 2 ** (m - 1)))
        return max(base, n2)

    epochs: list[list] = []
    cum = 0
    prev_symbols = 0
    m = 1
    while True:
        q = 2 ** (m - 1)
        base = floor_for(m, prev_symbols)
        need = q * base
        if cum + need > N:
            if not epochs:
                raise NTooSmall(f"N={N} below the first epoch minimum {need}")
            raise AssertionError("lookahead should have extended the previous epoch")
        next_need = 2 ** m * floor_for(m + 1, need)
        if cum + need + next_need > N:
            n_m = (N - cum) // q
            rem = N - cum - q * n_m
            epochs.append([m, q, n_m])
            if rem:
                epochs[0][2] += rem  # epoch 1 has q = 1
            break
        epochs.append([m, q, base])
        cum += need
        prev_symbols = need
        m += 1

    specs = tuple(
        EpochSpec(m_, q_, n_, epsilon * 2.0 ** (-m_) / 2.0,
                  epsilon * 2.0 ** (-m_) / 2.0)
        for m_, q_, n_ in epochs)
    sched = EpochSchedule(N, epsilon, delta_c_target, c_delta, specs)
    if sched.total_symbols != N:
        raise AssertionError("schedule does not cover N exactly")
    return sched


# ---------------------------------------------------------------------------
# feedback accounting
# ---------------------------------------------------------------------------


class FeedbackLink:
    """Budgeted noiseless feedback: total bits <= budget * forward symbols."""

    def __init__(self, budget_bits_per_symbol: float):
        if budget_bits_per_symbol <= 0:
            raise InvalidArgs("feedback budget must be positive")
        self.budget = float(budget_bits_per_symbol)
        self.used_bits = 0
        self.forward_symbols = 0

    def charge(self, bits: int) -> None:
        self.used_bits += int(bits)

    def note_forward(self, symbols: int) -> None:
        self.forward_symbols += int(symbols)

    def ensure_within_budget(self) -> None:
        if self.used_bits > self.budget * self.forward_symbols:
            raise BudgetExceeded(
                f"{self.used_bits} feedback bits over budget "
                f"{self.budget} x {self.forward_symbols} symbols")


# ---------------------------------------------------------------------------
# keyed hashing for tree codewords and payload checks
# ---------------------------------------------------------------------------

_GOLD = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_U64 = np.uint64


def _mix64(x):
    """splitmix64 finalizer, vectorized over uint64 arrays."""
    with np.errstate(over="ignore"):
        x = (x + _GOLD).astype(np.uint64, copy=False)
        x = (x ^ (x >> _U64(30))) * _MIX1
        x = (x ^ (x >> _U64(27))) * _MIX2
        return x ^ (x >> _U64(31))


def _key64(rng: RandomSource) -> np.uint64:
    return _mix64(np.asarray(
        [(rng.seed & 0xFFFFFFFFFFFFFFFF) ^ _mix64(np.uint64(rng.stream & 0xFFFFFFFFFFFFFFFF))],
        dtype=np.uint64))[0]


def _prf01(hashes, step: int, key) -> np.ndarray:
    """Deterministic uniform(0,1) per (prefix hash, time step)."""
    with np.errstate(over="ignore"):
        h = _mix64(hashes ^ _mix64(np.asarray([key ^ _U64(step)], dtype=np.uint64))[0])
    return (h >> _U64(11)).astype(np.float64) / float(1 << 53)


def _hash_bits(bits: np.ndarray, key, g: int) -> int:
    """g-bit keyed digest of a 0/1 bit array."""
    h = np.asarray([key], dtype=np.uint64)
    padded = np.zeros(((bits.size + 63) // 64) * 64, dtype=np.uint64)
    padded[: bits.size] = bits.astype(np.uint64)
    for word in (padded.reshape(-1, 64) << np.arange(64, dtype=np.uint64)).sum(
            axis=1, dtype=np.uint64):
        with np.errstate(over="ignore"):
            h = _mix64(h ^ word)
    return int(h[0] & _U64((1 << g) - 1))


# ---------------------------------------------------------------------------
# inner adaptive scheme
# ---------------------------------------------------------------------------


@dataclass
class AdaptiveResult:
    """Outcome of one epoch of the inner scheme."""

    rate: float                 # bits per super-symbol
    bit_count: int              # decoded bits = ceil(n * rate)
    error: bool
    est_capacity: float         # capacity of the trained kernel
    margin: float               # declared margin: est_capacity - planned rate
    delta_c_value: float
    feedback_bits: int
    mode: str                   # "normal" | "silent" | "abort"
    n_supers: int
    q: int
    est_kernel: np.ndarray | None = None
    obs_inputs: tuple = ()
    obs_outputs: tuple = ()


def _train_kernel(counts: dict):
    """Empirical conditional over observed letters, and a smoothed copy with a
    one-letter escape column for decoding likelihoods."""
    obs_x = sorted(counts)
    obs_y = sorted({y for row in counts.values() for y in row})
    ymap = {y: i for i, y in enumerate(obs_y)}
    ny = len(obs_y)
    a = TRAIN_SMOOTHING
    raw = np.zeros((len(obs_x), ny))
    smooth = np.full((len(obs_x), ny + 1), a)
    det = True
    for xi, x in enumerate(obs_x):
        row = counts[x]
        tot = sum(row.values())
        det = det and len(row) == 1
        for y, c in row.items():
            raw[xi, ymap[y]] = c / tot
            smooth[xi, ymap[y]] += c
        smooth[xi] /= tot + a * (ny + 1)
    return obs_x, obs_y, ymap, raw, smooth, det


def inner_scheme_run(view: CausalChannel, n: int, eps: float, delta: float,
                     fb: FeedbackLink, rng: RandomSource,
                     c_delta: float = 1.0, memory_bits: int = MEMORY_BITS) -> AdaptiveResult:
    """One epoch of the adaptive scheme over a (super-symbol) channel.

    Training estimates the time-averaged kernel through the feedback link;
    the message then rides a random time-varying convolutional code drawn
    from the capacity-achieving prior of the estimate, decoded by Viterbi
    under the estimate. A trailing keyed hash turns undecodable epochs into
    rate-0 epochs instead of bit errors, so the announced rate tracks
    est_capacity minus the declared margin while errors stay rare.
    """
    if n < MIN_EPOCH_SUPERS:
        raise InvalidArgs(f"need n >= {MIN_EPOCH_SUPERS}, got {n}")
    if not 0 < eps < 1 or not 0 < delta < 1:
        raise InvalidArgs("eps and delta must be in (0, 1)")
    nx, ny_full = view.input_size, view.output_size
    if nx > ALPHABET_CAP or ny_full > ALPHABET_CAP:
        raise AlphabetOverflow("super-symbol alphabet exceeds cap")
    q_base = getattr(view, "q", 1)
    gen_chan = rng.derive("channel").generator()
    gen_train = rng.derive("train").generator()
    key_tree = _key64(rng.derive("tree"))
    key_hash = _key64(rng.derive("hash"))
    fb_bits_y = max(1, math.ceil(math.log2(ny_full)))
    dc_value = delta_c(n, c_delta)

    # training: i.i.d. uniform inputs, outputs fed back symbol by symbol
    t = max(4, min(math.ceil(n / 8), math.ceil(math.sqrt(n))))
    counts: dict[int, dict[int, int]] = {}
    for _ in range(t):
        x = int(gen_train.integers(nx))
        y = view.sample_step(x, gen_chan)
        counts.setdefault(x, {}).setdefault(y, 0)
        counts[x][y] += 1
    fb.charge(t * fb_bits_y)
    fb.note_forward(t * q_base)

    obs_x, obs_y, ymap, w_raw, w_hat, det = _train_kernel(counts)
    from .capacity import blahut_arimoto

    ba = blahut_arimoto(w_raw, tol=1e-6)
    c_hat = ba.capacity
    # chi-square scale of spurious empirical mutual information
    gate = len(obs_x) * (len(obs_y) + 1) / t

    n_data = n - t
    if det:
        rate0 = min(c_hat, float(MAX_BITS_PER_STEP))
    else:
        c_low = max(0.0, c_hat - _capacity_sigma(w_raw, ba.prior, counts)
                    - (len(obs_x) - 1) * (len(obs_y) - 1) / (2 * t * math.log(2)))
        rate0 = min(NOISY_RATE_FACTOR * c_low, float(MAX_BITS_PER_STEP))
    planned = _planned_payload(det, n_data, rate0, memory_bits)

    def finish(mode: str, rate: float, bits: int, error: bool) -> AdaptiveResult:
        fb.charge(max(1, math.ceil(math.log2(max(planned, 0) + 2))))
        fb.note_forward(n_data * q_base)
        fb.ensure_within_budget()
        small = len(obs_x) * (len(obs_y) + 1) <= 4096
        committed = DECLARED_FRACTION * planned / n if planned > 0 else 0.0
        return AdaptiveResult(
            rate=rate, bit_count=bits, error=error, est_capacity=c_hat,
            margin=c_hat - committed,
            delta_c_value=dc_value, feedback_bits=fb_bits_y * t,
            mode=mode, n_supers=n, q=q_base,
            est_kernel=w_hat if small else None,
            obs_inputs=tuple(obs_x), obs_outputs=tuple(obs_y))

    if (not det and c_hat <= gate) or planned < 1:
        for _ in range(n_data):
            view.sample_step(0, gen_chan)
        return finish("silent", 0.0, 0, False)

    msg_gen = rng.derive("message").generator()
    if det:
        decoded, truth = _det_phase(view, gen_chan, msg_gen, key_tree, key_hash,
                                    n_data, counts)
    else:
        decoded, truth = _arq_phase(view, gen_chan, msg_gen, key_tree, key_hash,
                                    n_data, rate0, memory_bits, counts)
    if decoded is None:
        return finish("abort", 0.0, 0, False)
    bits = decoded.size
    if bits == 0:
        return finish("silent", 0.0, 0, False)
    error = bool(np.any(decoded != truth[:bits]))
    return finish("normal", bits / n, bits, error)


def _capacity_sigma(w_raw: np.ndarray, prior: np.ndarray, counts: dict) -> float:
    """Delta-method standard deviation of the plug-in capacity estimate."""
    py = prior @ w_raw
    var = 0.0
    for xi, x in enumerate(sorted(counts)):
        t_x = sum(counts[x].values())
        row = w_raw[xi]
        nz = row > 0
        lr = np.zeros_like(row)
        lr[nz] = np.log2(row[nz] / np.maximum(py[nz], 1e-300))
        d_x = float(row @ lr)
        var += prior[xi] ** 2 * max(0.0, float(row @ lr ** 2) - d_x ** 2) / max(t_x, 1)
    return math.sqrt(var)


def _planned_payload(det: bool, n_data: int, rate0: float, nu: int) -> int:
    """Bits the epoch plans to deliver when every window decodes."""
    if det:
        return max(0, int(math.floor(n_data * rate0)) - HASH_BITS_DET)
    total = 0
    for v in _window_sizes(n_data):
        span = v - min(v // 8, TAIL_PARITY_STEPS)
        total += max(0, int(math.floor(span * rate0)) - HASH_BITS_WINDOW)
    return total


def _window_sizes(n_data: int):
    """Nominal ARQ windows covering n_data steps: a halved first window
    (cheap insurance while the kernel estimate is raw), then full windows,
    with a short tail merged backwards. Short epochs use smaller windows so
    they still get a few ARQ rounds."""
    base = min(WINDOW_SUPERS, max(MIN_CODED_WINDOW * 2, n_data // 4))
    sizes = []
    rest = n_data
    if rest >= base + base // 2:
        sizes.append(base // 2)
        rest -= base // 2
    while rest:
        if rest < base + base // 2:
            sizes.append(rest)
            rest = 0
        else:
            sizes.append(base)
            rest -= base
    return sizes


def _prior_lut(prior: np.ndarray) -> np.ndarray:
    """Quantized inverse CDF of the codeword prior, indexed by hash bits."""
    cells = 1 << PRIOR_LUT_BITS
    cum = np.cumsum(prior)
    cum[-1] = 1.0
    grid = (np.arange(cells) + 0.5) / cells
    return np.searchsorted(cum, grid, side="right").astype(np.int64)


_GOLD_INT = 0x9E3779B97F4A7C15
_MIX1_INT = 0xBF58476D1CE4E5B9
_M64 = (1 << 64) - 1


def _cell_scalar(state: int, tkey: int) -> int:
    """Codeword-table cell for one trellis state at one step."""
    h = ((state ^ tkey) * _GOLD_INT) & _M64
    h = ((h ^ (h >> 31)) * _MIX1_INT) & _M64
    return h >> (64 - PRIOR_LUT_BITS)


def _cells_vector(states: np.ndarray, tkey: int, buf: np.ndarray) -> np.ndarray:
    """Vectorized _cell_scalar over all states, reusing buf."""
    with np.errstate(over="ignore"):
        np.bitwise_xor(states, _U64(tkey), out=buf)
        np.multiply(buf, _U64(_GOLD_INT), out=buf)
        np.bitwise_xor(buf, buf >> _U64(31), out=buf)
        np.multiply(buf, _U64(_MIX1_INT), out=buf)
        np.right_shift(buf, _U64(64 - PRIOR_LUT_BITS), out=buf)
    return buf


def _step_keys(key, tau0: int, count: int) -> np.ndarray:
    """Per-step mixing keys tkey = mix64(tau ^ key)."""
    taus = np.arange(tau0, tau0 + count, dtype=np.uint64)
    return _mix64(taus ^ _U64(key))


def _det_phase(view, gen_chan, msg_gen, key_tree, key_hash, n_data, counts):
    """Deterministic-estimate fast path: a per-step masked bijection between
    bit chunks and distinguishable inputs, decoded by direct inversion, with
    one trailing in-band hash."""
    # keep one input per distinct observed output, then a power-of-two subset
    seen: dict[int, int] = {}
    for x in sorted(counts):
        y = next(iter(counts[x]))
        seen.setdefault(y, x)
    xs = sorted(seen.values())
    b = int(math.floor(math.log2(len(xs)))) if xs else 0
    if b < 1:
        return np.empty(0, dtype=np.int64), np.empty(0, dtype=np.int64)
    xs = np.asarray(xs[: 1 << b], dtype=np.int64)
    inv = {int(x): i for i, x in enumerate(xs)}
    total = n_data * b
    payload = total - HASH_BITS_DET
    if payload < 1:
        return np.empty(0, dtype=np.int64), np.empty(0, dtype=np.int64)
    msg_bits = msg_gen.integers(0, 2, size=payload)
    check = _hash_bits(msg_bits, key_hash, HASH_BITS_DET)
    all_bits = np.concatenate(
        [msg_bits, [(check >> i) & 1 for i in range(HASH_BITS_DET)]])
    decoded = np.empty(total, dtype=np.int64)
    ok = True
    pos = 0
    for tau in range(n_data):
        chunk = 0
        for _ in range(b):
            chunk = (chunk << 1) | int(all_bits[pos])
            pos += 1
        mask_tau = int(_mix64(np.asarray([key_tree ^ _U64(tau)],
                                         dtype=np.uint64))[0]) & ((1 << b) - 1)
        x = int(xs[chunk ^ mask_tau])
        y = view.sample_step(x, gen_chan)
        got = seen.get(y)
        if ok and got is not None and got in inv:
            dchunk = inv[got] ^ mask_tau
            for i in range(b):
                decoded[pos - b + i] = (dchunk >> (b - 1 - i)) & 1
        else:
            ok = False
    if not ok:
        return None, None
    cand, tail = decoded[:payload], decoded[payload:]
    if _hash_bits(cand, key_hash, HASH_BITS_DET) != int(
            sum(int(v) << i for i, v in enumerate(tail))):
        return None, None
    return cand, msg_bits


def _arq_phase(view, gen_chan, msg_gen, key_tree, key_hash, n_data, rate0,
               nu, counts):
    """Windowed trellis coding with hash-verified acceptance, incremental
    redundancy, and per-window re-estimation.

    The message pointer advances only on windows whose decode passes the
    keyed hash; both ends evaluate that verdict identically (the decoder
    directly, the encoder by replaying the decoder on the fed-back outputs).
    A failed window first receives parity-only extension steps (incremental
    redundancy); if it still fails it is retransmitted later. After each
    window both sides refit the kernel from everything observed so far, so an
    unlucky initial estimate washes out. No extra signaling is needed for any
    of this.
    """
    from .capacity import blahut_arimoto

    n_states = 1 << nu
    mask = n_states - 1
    states = np.arange(n_states, dtype=np.uint64)
    shifted_cache = {r: (np.arange(n_states) >> r).astype(np.int64)
                     for r in range(1, MAX_BITS_PER_STEP + 1)}
    stream: list[int] = []

    def stream_bits(upto: int):
        while len(stream) < upto:
            stream.extend(int(v) for v in msg_gen.integers(0, 2, size=256))

    def refit():
        obs_x, obs_y, ymap, w_raw, w_hat, _ = _train_kernel(counts)
        ba = blahut_arimoto(w_raw, tol=1e-6)
        sigma = _capacity_sigma(w_raw, ba.prior, counts)
        c_low = max(0.0, ba.capacity - sigma)
        with np.errstate(divide="ignore"):
            log_w = np.log2(w_hat)
        return (np.asarray(obs_x, dtype=np.int64), ymap, len(obs_y),
                _prior_lut(ba.prior), log_w,
                min(NOISY_RATE_FACTOR * c_low, float(MAX_BITS_PER_STEP)))

    x_letters, ymap, escape_col, lut, log_w, rate_fit = refit()
    pointer = 0
    delivered: list[np.ndarray] = []
    truth_parts: list[np.ndarray] = []
    cursor = 0
    w_idx = 0
    trim = 1.0
    # short epochs still get a few ARQ rounds
    base_window = min(WINDOW_SUPERS, max(MIN_CODED_WINDOW * 2, n_data // 4))

    while n_data - cursor >= MIN_CODED_WINDOW:
        rest = n_data - cursor
        if rest < base_window + base_window // 2:
            v = rest
        elif w_idx == 0:
            v = base_window // 2
        else:
            v = base_window
        first = FIRST_WINDOW_TRIM if w_idx == 0 else 1.0
        rate_w = min(max(rate_fit, rate0 * 0.25) * trim * first, MAX_BITS_PER_STEP)
        span = v - min(v // 8, TAIL_PARITY_STEPS)  # release span; rest is parity
        bits_w = int(math.floor(span * rate_w))
        payload = bits_w - HASH_BITS_WINDOW
        if payload < 1:
            # nothing worth coding at this rate; spend the window on more
            # round-robin training
            for s in range(v):
                x = int(x_letters[s % x_letters.size])
                y = view.sample_step(x, gen_chan)
                counts.setdefault(x, {}).setdefault(y, 0)
                counts[x][y] += 1
            cursor += v
            w_idx += 1
            x_letters, ymap, escape_col, lut, log_w, rate_fit = refit()
            continue
        stream_bits(pointer + payload)
        msg_w = np.asarray(stream[pointer: pointer + payload], dtype=np.int64)
        wkey = _U64(key_hash) ^ _mix64(np.asarray([_U64(w_idx)], dtype=np.uint64))[0]
        check = _hash_bits(msg_w, wkey, HASH_BITS_WINDOW)
        all_bits = np.concatenate(
            [msg_w, [(check >> i) & 1 for i in range(HASH_BITS_WINDOW)]])
        releases = [(s + 1) * bits_w // span - s * bits_w // span
                    for s in range(span)]

        metric = np.full(n_states, -np.inf)
        metric[0] = 0.0
        trace: dict[int, np.ndarray] = {}
        cell_buf = np.empty(n_states, dtype=np.uint64)
        enc_state = 0
        sent = 0
        steps_used = 0
        accepted = False
        cand = None
        extensions = 0
        seg_len = v
        while True:
            # drive the channel for this segment (the codeword path is fixed
            # by the message, so outputs can be collected up front) ...
            tkeys = _step_keys(key_tree, cursor + steps_used, seg_len)
            cols = np.empty(seg_len, dtype=np.int64)
            for s in range(seg_len):
                r = releases[steps_used + s] if steps_used + s < len(releases) else 0
                for bit in all_bits[sent: sent + r]:
                    enc_state = ((enc_state << 1) | int(bit)) & mask
                sent += r
                cell = _cell_scalar(enc_state, int(tkeys[s]))
                x = int(x_letters[lut[cell]])
                y = view.sample_step(x, gen_chan)
                counts.setdefault(x, {}).setdefault(y, 0)
                counts[x][y] += 1
                cols[s] = ymap.get(y, escape_col)
            # ... then advance the trellis over it
            tabs = log_w[lut[None, :], cols[:, None]]
            for s in range(seg_len):
                tau = steps_used + s
                r = releases[tau] if tau < len(releases) else 0
                if r:
                    shifted = shifted_cache[r]
                    best = np.full(n_states, -np.inf)
                    best_j = np.zeros(n_states, dtype=np.uint8)
                    for j in range(1 << r):
                        pred = metric[shifted | (j << (nu - r))]
                        better = pred > best
                        best[better] = pred[better]
                        best_j[better] = j
                    metric = best
                    trace[tau] = best_j
                cells = _cells_vector(states, int(tkeys[s]), cell_buf)
                metric = metric + tabs[s, cells]
            steps_used += seg_len

            cand = _list_traceback(metric, trace, releases, bits_w, nu,
                                   payload, wkey)
            accepted = cand is not None
            rest_after = n_data - cursor - steps_used
            if accepted or extensions >= MAX_EXTENSIONS \
                    or rest_after < EXTENSION_STEPS:
                break
            extensions += 1
            seg_len = EXTENSION_STEPS

        if accepted:
            delivered.append(cand)
            truth_parts.append(msg_w)
            pointer += payload
            trim = min(1.0, trim * RATE_UP)
        else:
            trim = max(trim * RATE_DOWN, 0.05)
        if _TRACE is not None:
            _TRACE.append((w_idx, steps_used, round(rate_w, 4), payload, accepted))
        cursor += steps_used
        w_idx += 1
        x_letters, ymap, escape_col, lut, log_w, rate_fit = refit()

    while cursor < n_data:
        view.sample_step(int(x_letters[0]), gen_chan)
        cursor += 1

    if not delivered:
        return np.empty(0, dtype=np.int64), np.empty(0, dtype=np.int64)
    return np.concatenate(delivered), np.concatenate(truth_parts)


def _list_traceback(metric, trace, releases, bits_w, nu, payload, wkey):
    """Hash-check tracebacks from the best end states; return the first
    passing payload, or None."""
    order = np.argsort(-metric, kind="stable")[:LIST_ENDS]
    for end in order:
        if not np.isfinite(metric[end]):
            break
        bits = np.empty(bits_w, dtype=np.int64)
        state = int(end)
        pos = bits_w
        for s in range(len(releases) - 1, -1, -1):
            r = releases[s]
            if not r:
                continue
            chunk = state & ((1 << r) - 1)
            for i in range(r):
                bits[pos - r + i] = (chunk >> (r - 1 - i)) & 1
            state = (state >> r) | (int(trace[s][state]) << (nu - r))
            pos -= r
        cand = bits[:payload]
        tail = bits[payload: payload + HASH_BITS_WINDOW]
        if _hash_bits(cand, wkey, HASH_BITS_WINDOW) == int(
                sum(int(b) << i for i, b in enumerate(tail))):
            return cand
    return None



# ---------------------------------------------------------------------------
# full horizon
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class UniversalResult:
    rate: float                 # bits per channel symbol over all N
    error: bool
    epoch_results: tuple
    schedule: EpochSchedule
    feedback_bits: int


def universal_run(ch: CausalChannel, N: int, eps: float, c_delta: float,
                  fb_budget: float, rng: RandomSource) -> UniversalResult:
    """Run the full epoch scheme over a fresh channel for N symbols."""
    target = delta_c(max(MIN_EPOCH_SUPERS, N // 4), c_delta) if c_delta > 0 else 1.0
    schedule = build_schedule(N, eps, target, c_delta=c_delta)
    fb = FeedbackLink(fb_budget)
    results = []
    error = False
    for spec in schedule.epochs:
        view = super_symbol_view(ch, spec.q)
        res = inner_scheme_run(view, spec.n_supers, spec.eps_m, spec.delta_m,
                               fb, rng.derive("epoch", spec.m), c_delta)
        results.append(res)
        error = error or res.error
    fb.ensure_within_budget()
    return UniversalResult(weighted_rate(results, schedule), error,
                           tuple(results), schedule, fb.used_bits)


def weighted_rate(results, schedule: EpochSchedule) -> float:
    """Overall bits per symbol: sum_m R_m N_m / N."""
    if len(results) != len(schedule.epochs):
        raise Misalignment(f"{len(results)} results for {len(schedule.epochs)} epochs")
    total = 0.0
    for res, spec in zip(results, schedule.epochs):
        n_res = getattr(res, "n_supers", spec.n_supers)
        if n_res != spec.n_supers:
            raise Misalignment(f"epoch {spec.m}: result covers {n_res} supers, "
                               f"schedule says {spec.n_supers}")
        total += res.rate * spec.n_supers
    return total / schedule.N


def summation_check(a, d, n: int | None = None) -> float:
    """Weighted average sum a_i d_i / sum a_i over the first n terms, for a
    positive nondecreasing weight sequence."""
    a = np.asarray(a, dtype=float)
    d = np.asarray(d, dtype=float)
    if a.size != d.size:
        raise InvalidSequence("sequences must have equal length")
    if n is None:
        n = a.size
    if not 1 <= n <= a.size:
        raise InvalidSequence(f"n={n} out of range")
    a, d = a[:n], d[:n]
    if np.any(a <= 0) or np.any(np.diff(a) < 0):
        raise InvalidSequence("weights must be positive and nondecreasing")
    return float((a * d).sum() / a.sum())
