"""Causal channel models.

Every channel here is represented internally by a (possibly time-varying)
finite-state step kernel

    P_i[s, x, y, s'] = Pr(emit y, move to state s' | state s, input x at time i)

plus an initial state distribution. That single representation drives
sampling, exact block conditionals, fading-memory measurement, and the
state-collapsed computations used by the reference-system and capacity
modules. Times are 1-based throughout.
"""

from __future__ import annotations

import json
import math

import numpy as np

from .core import (
    Dist,
    Overflow,
    RandomSource,
    Transcript,
    enum_cap,
    tuple_codec,
)


class SymbolOutOfRange(ValueError):
    """Input or output symbol outside the channel alphabet."""


class NotEnumerable(ValueError):
    """Exact computation requested from a channel that cannot provide it."""


class InvalidBeta(ValueError):
    """Transition floor outside [0, 1/|S|]."""


def _check_rows(mat: np.ndarray, what: str) -> None:
    sums = mat.sum(axis=-1)
    if np.any(np.abs(sums - 1.0) > 1e-9) or np.any(mat < -1e-12):
        raise ValueError(f"{what} rows must be probability vectors")


class CausalChannel:
    """Base class; subclasses fill in alphabets, state space and step tables."""

    input_size: int
    output_size: int
    samplable = True
    exactly_enumerable = True
    state_enumerable = True
    state_count: int

    def __init__(self):
        self._time = 1
        self._state: int | None = None

    # -- exact interface -------------------------------------------------

    def initial_state_dist(self) -> np.ndarray:
        raise NotImplementedError

    def step_table(self, i: int) -> np.ndarray:
        """Joint kernel [S, X, Y, S'] for time step i >= 1."""
        raise NotImplementedError

    def horizon(self):
        """Last defined time step, or None when unbounded."""
        return None

    # -- sampling --------------------------------------------------------

    def reset(self) -> None:
        self._time = 1
        self._state = None

    def clone(self) -> "CausalChannel":
        raise NotImplementedError

    def sample_step(self, x: int, gen: np.random.Generator) -> int:
        """Feed one input symbol, advance the state, return the output."""
        if not 0 <= x < self.input_size:
            raise SymbolOutOfRange(f"input {x} not in 0..{self.input_size - 1}")
        self._check_horizon(self._time)
        if self._state is None:
            self._state = _draw(self.initial_state_dist(), gen)
        joint = self.step_table(self._time)[self._state, x].reshape(-1)
        idx = _draw(joint, gen)
        y, nxt = divmod(idx, self.state_count)
        self._state = nxt
        self._time += 1
        return int(y)

    def sample_block(self, xs, gen: np.random.Generator):
        return [self.sample_step(x, gen) for x in xs]

    def _check_horizon(self, upto: int) -> None:
        h = self.horizon()
        if h is not None and upto > h:
            raise NotEnumerable(f"channel defined only up to time {h}, asked for {upto}")


def _draw(probs: np.ndarray, gen: np.random.Generator) -> int:
    c = np.cumsum(probs)
    return int(min(np.searchsorted(c, gen.random() * c[-1], side="right"),
                   probs.size - 1))


# ---------------------------------------------------------------------------
# concrete channel families
# ---------------------------------------------------------------------------


class DmcChannel(CausalChannel):
    """Memoryless channel: a fixed stochastic matrix applied per symbol."""

    state_count = 1

    def __init__(self, matrix):
        super().__init__()
        m = np.asarray(matrix, dtype=float)
        if m.ndim != 2:
            raise ValueError("DMC matrix must be 2-d")
        _check_rows(m, "DMC")
        self.matrix = m
        self.input_size, self.output_size = m.shape
        self._table = m[None, :, :, None]

    def initial_state_dist(self) -> np.ndarray:
        return np.ones(1)

    def step_table(self, i: int) -> np.ndarray:
        return self._table

    def clone(self) -> "DmcChannel":
        return DmcChannel(self.matrix)


class PeriodicNoise:
    """Noise repeating a fixed pattern forever."""

    def __init__(self, pattern):
        self.pattern = [int(v) for v in pattern]
        if not self.pattern:
            raise ValueError("noise pattern must be nonempty")

    def z(self, i: int) -> int:
        return self.pattern[(i - 1) % len(self.pattern)]

    def horizon(self):
        return None

    def config(self):
        return {"type": "periodic", "pattern": list(self.pattern)}


class ExplicitNoise:
    """Finite explicit noise list; the channel is defined up to its length."""

    def __init__(self, values):
        self.values = [int(v) for v in values]
        if not self.values:
            raise ValueError("noise list must be nonempty")

    def z(self, i: int) -> int:
        if i > len(self.values):
            raise NotEnumerable(f"noise defined only up to time {len(self.values)}")
        return self.values[i - 1]

    def horizon(self):
        return len(self.values)

    def config(self):
        return {"type": "explicit", "values": list(self.values)}


class SeededNoise:
    """Individual noise sequence materialized lazily from a fixed seed."""

    def __init__(self, seed: int, size: int):
        self.seed = int(seed)
        self.size = size
        self._gen = RandomSource(self.seed).derive("modulo-noise").generator()
        self._cache: list[int] = []

    def z(self, i: int) -> int:
        while len(self._cache) < i:
            self._cache.extend(
                int(v) for v in self._gen.integers(0, self.size, size=1024))
        return self._cache[i - 1]

    def horizon(self):
        return None

    def config(self):
        return {"type": "seeded", "seed": self.seed}


class ModuloAdditiveChannel(CausalChannel):
    """y_i = (x_i + z_i) mod |X| for an individual noise sequence z."""

    state_count = 1

    def __init__(self, size: int, noise):
        super().__init__()
        if size < 2:
            raise ValueError("alphabet size must be >= 2")
        self.input_size = self.output_size = int(size)
        self.noise = noise
        eye = np.eye(size)
        self._tables = [
            np.roll(eye, z, axis=1)[None, :, :, None] for z in range(size)]

    def initial_state_dist(self) -> np.ndarray:
        return np.ones(1)

    def step_table(self, i: int) -> np.ndarray:
        return self._tables[self.noise.z(i) % self.input_size]

    def horizon(self):
        return self.noise.horizon()

    def clone(self) -> "ModuloAdditiveChannel":
        return ModuloAdditiveChannel(self.input_size, self.noise)

    def sample_step(self, x: int, gen: np.random.Generator) -> int:
        if not 0 <= x < self.input_size:
            raise SymbolOutOfRange(f"input {x} not in 0..{self.input_size - 1}")
        y = (x + self.noise.z(self._time)) % self.input_size
        self._time += 1
        return y


class PasswordChannel(CausalChannel):
    """Binary channel whose first input bit fixes good/bad mode forever.

    Good mode passes the input through unchanged; bad mode emits constant 0.
    `polarity` is the value of the first input that selects good mode.
    """

    state_count = 3  # 0 undecided, 1 good, 2 bad

    def __init__(self, polarity: int = 1):
        super().__init__()
        if polarity not in (0, 1):
            raise ValueError("polarity must be 0 or 1")
        self.polarity = polarity
        self.input_size = self.output_size = 2
        t = np.zeros((3, 2, 2, 3))
        for x in (0, 1):
            good = x == polarity
            t[0, x, x if good else 0, 1 if good else 2] = 1.0
            t[1, x, x, 1] = 1.0
            t[2, x, 0, 2] = 1.0
        self._table = t

    def initial_state_dist(self) -> np.ndarray:
        return np.array([1.0, 0.0, 0.0])

    def step_table(self, i: int) -> np.ndarray:
        return self._table

    def clone(self) -> "PasswordChannel":
        return PasswordChannel(self.polarity)


class FsmChannel(CausalChannel):
    """Finite-state channel with per-time kernels.

    Transition kernels T_i[s, x, s'] give the next-state law from state s when
    the previous input was x; output kernels W_i[s, x, y] give the output law
    in state s for current input x. Kernels may repeat with a period.  The
    state tracked here is the one in effect while a symbol is emitted, so the
    step at time i emits with W_i and then moves with T_{i+1}.  The first
    transition (into the state of time 1) is taken with previous input 0.
    """

    def __init__(self, transitions, outputs, beta: float = 0.0,
                 initial_state: int = 0):
        super().__init__()
        t_list = _phase_list(transitions, 3)
        w_list = _phase_list(outputs, 3)
        if len(t_list) != len(w_list):
            if len(t_list) == 1:
                t_list = t_list * len(w_list)
            elif len(w_list) == 1:
                w_list = w_list * len(t_list)
            else:
                raise ValueError("transition and output schedules differ in period")
        s_count, x_count, s2 = t_list[0].shape
        if s2 != s_count:
            raise ValueError("transition kernel must be square in the state")
        y_count = w_list[0].shape[2]
        for t in t_list:
            if t.shape != (s_count, x_count, s_count):
                raise ValueError("inconsistent transition shapes")
            _check_rows(t, "transition")
        for w in w_list:
            if w.shape != (s_count, x_count, y_count):
                raise ValueError("inconsistent output shapes")
            _check_rows(w, "output")
        if not 0.0 <= beta <= 1.0 / s_count + 1e-12:
            raise InvalidBeta(f"beta {beta} outside [0, 1/{s_count}]")
        if beta > 0 and any(t.min() < beta - 1e-12 for t in t_list):
            raise InvalidBeta("transition entries fall below the declared floor")
        if not 0 <= initial_state < s_count:
            raise ValueError("initial state out of range")
        self.transitions = t_list
        self.outputs = w_list
        self.beta = float(beta)
        self.initial_state = int(initial_state)
        self.state_count = s_count
        self.input_size = x_count
        self.output_size = y_count
        self._phases = len(t_list)
        self._table_cache: dict[int, np.ndarray] = {}

    @property
    def period(self) -> int:
        return 0 if self._phases == 1 else self._phases

    def initial_state_dist(self) -> np.ndarray:
        return self.transitions[0][self.initial_state, 0].copy()

    def step_table(self, i: int) -> np.ndarray:
        phase = (i - 1) % self._phases
        tbl = self._table_cache.get(phase)
        if tbl is None:
            w = self.outputs[phase]
            t_next = self.transitions[i % self._phases]
            tbl = np.einsum("sxy,sxe->sxye", w, t_next)
            self._table_cache[phase] = tbl
        return tbl

    def clone(self) -> "FsmChannel":
        return FsmChannel(self.transitions, self.outputs, beta=self.beta,
                          initial_state=self.initial_state)


def _phase_list(kernels, ndim: int) -> list[np.ndarray]:
    arr = np.asarray(kernels, dtype=float)
    if arr.ndim == ndim:
        return [arr]
    if arr.ndim == ndim + 1:
        return [arr[i] for i in range(arr.shape[0])]
    raise ValueError(f"kernel schedule must have {ndim} or {ndim + 1} dims")


# ---------------------------------------------------------------------------
# super-symbol view
# ---------------------------------------------------------------------------


class SuperSymbolView(CausalChannel):
    """The base channel seen through q-symbol tuples as single letters.

    Sampling shares the base channel instance (and therefore its state and
    clock); exact computations compose q base steps per view step.
    """

    def __init__(self, base: CausalChannel, q: int):
        super().__init__()
        if q < 1:
            raise ValueError("q must be >= 1")
        self.base = base
        self.q = q
        self.in_codec = tuple_codec(q, base.input_size)
        self.out_codec = tuple_codec(q, base.output_size)
        self.input_size = self.in_codec.count
        self.output_size = self.out_codec.count
        self.exactly_enumerable = base.exactly_enumerable
        self.state_enumerable = base.state_enumerable
        self.state_count = base.state_count
        self._table_cache: dict[int, np.ndarray] = {}

    def initial_state_dist(self) -> np.ndarray:
        return self.base.initial_state_dist()

    def step_table(self, i: int) -> np.ndarray:
        if self.input_size * self.output_size > enum_cap():
            raise Overflow(
                f"super-symbol table {self.input_size}x{self.output_size} "
                f"exceeds enumeration cap {enum_cap()}")
        tbl = self._table_cache.get(i)
        if tbl is not None:
            return tbl
        s = self.state_count
        t0 = (i - 1) * self.q + 1
        self.base._check_horizon(t0 + self.q - 1)
        out = np.empty((s, self.input_size, self.output_size, s))
        for xi in range(self.input_size):
            xs = self.in_codec.tuple_of(xi)
            carry = np.eye(s)[:, None, :]  # [s0, y-prefix, s]
            for step, x in enumerate(xs):
                base_tbl = self.base.step_table(t0 + step)[:, x]  # [s, y, s']
                carry = np.einsum("aps,sye->apye", carry, base_tbl)
                carry = carry.reshape(s, -1, s)
            out[:, xi, :, :] = carry
        self._table_cache[i] = out
        return out

    def horizon(self):
        h = self.base.horizon()
        return None if h is None else h // self.q

    def reset(self) -> None:
        super().reset()
        self.base.reset()

    def clone(self) -> "SuperSymbolView":
        return SuperSymbolView(self.base.clone(), self.q)

    def sample_step(self, x: int, gen: np.random.Generator) -> int:
        if not 0 <= x < self.input_size:
            raise SymbolOutOfRange(f"input {x} not in 0..{self.input_size - 1}")
        ys = self.base.sample_block(self.in_codec.tuple_of(x), gen)
        self._time += 1
        return self.out_codec.index_of(ys)


def super_symbol_view(ch: CausalChannel, q: int) -> SuperSymbolView:
    """View the channel over tuples of q consecutive symbols."""
    return SuperSymbolView(ch, q)


# ---------------------------------------------------------------------------
# exact conditionals
# ---------------------------------------------------------------------------


def _require_enumerable(ch: CausalChannel) -> None:
    if not getattr(ch, "exactly_enumerable", False):
        raise NotEnumerable("channel does not support exact conditionals")


def filter_history(ch: CausalChannel, history: Transcript,
                   alpha: np.ndarray | None = None) -> np.ndarray:
    """Unnormalized state vector after observing the transcript from time 1."""
    _require_enumerable(ch)
    history.validate_alphabets(ch.input_size, ch.output_size)
    a = ch.initial_state_dist().copy() if alpha is None else alpha.copy()
    for t in range(history.n):
        tbl = ch.step_table(t + 1)
        a = a @ tbl[:, history.x[t], history.y[t], :]
    return a


def output_block_dist(ch: CausalChannel, t0: int, alpha: np.ndarray, xs,
                      skip: int = 0) -> np.ndarray:
    """Distribution of the outputs at times t0+skip .. t0+len(xs)-1 given the
    state distribution alpha at time t0 and the inputs xs; the first `skip`
    outputs are marginalized out."""
    _require_enumerable(ch)
    if not 0 <= skip <= len(xs):
        raise ValueError("skip out of range")
    count = ch.output_size ** (len(xs) - skip)
    if count > enum_cap():
        raise Overflow(f"{count} output tuples exceed enumeration cap {enum_cap()}")
    ch._check_horizon(t0 + len(xs) - 1)
    carry = alpha[None, :]
    for step, x in enumerate(xs):
        if not 0 <= x < ch.input_size:
            raise SymbolOutOfRange(f"input {x} not in 0..{ch.input_size - 1}")
        tbl = ch.step_table(t0 + step)[:, x]  # [s, y, s']
        if step < skip:
            carry = carry @ tbl.sum(axis=1)
        else:
            carry = np.einsum("ps,sye->pye", carry, tbl)
            carry = carry.reshape(-1, ch.state_count)
    return carry.sum(axis=1)


def block_conditional(ch: CausalChannel, history: Transcript, xblock):
    """Exact law of the next len(xblock) outputs given the realized history."""
    alpha = filter_history(ch, history)
    mass = alpha.sum()
    if mass <= 0.0:
        raise ValueError("history has probability zero under this channel")
    dist = output_block_dist(ch, history.n + 1, alpha / mass, list(xblock))
    total = dist.sum()
    if abs(total - 1.0) > 1e-9:
        raise AssertionError(f"conditional mass {total} drifted from 1")
    return Dist(dist / total)


def per_position_state_kernels(ch: CausalChannel, q: int, n: int):
    """For i = 1..n, the block kernel [S, X^q, Y^q] of super-symbol i when the
    pre-block state is forced to each value."""
    _require_enumerable(ch)
    view_in = tuple_codec(q, ch.input_size)
    view_out = tuple_codec(q, ch.output_size)
    if view_in.count * view_out.count > enum_cap():
        raise Overflow("super-symbol kernel exceeds enumeration cap")
    s_count = ch.state_count
    kernels = []
    for i in range(1, n + 1):
        t0 = (i - 1) * q + 1
        k = np.empty((s_count, view_in.count, view_out.count))
        for s in range(s_count):
            point = np.zeros(s_count)
            point[s] = 1.0
            for xi in range(view_in.count):
                k[s, xi] = output_block_dist(ch, t0, point, view_in.tuple_of(xi))
        kernels.append(k)
    return kernels


# ---------------------------------------------------------------------------
# fading memory
# ---------------------------------------------------------------------------


def fading_memory_gap(ch: CausalChannel, n: int, m: int, L: int,
                      ref_history: Transcript) -> float:
    """Worst-case L1 gap between the law of the outputs at times n..m given a
    realized history through time n-L-1 and the same law with the reference
    history substituted, maximized over histories and over the inputs at
    times n-L..m. Witnesses the constructive two-sided fading-memory bound.
    """
    _require_enumerable(ch)
    if n < 1 or m < n or L < 0:
        raise ValueError("need 1 <= n <= m and L >= 0")
    hist_len = n - L - 1
    if hist_len < 0:
        raise ValueError(f"n-L-1 = {hist_len} is negative")
    if ref_history.n != hist_len:
        raise ValueError(f"reference history must have length {hist_len}")
    ch._check_horizon(m)
    cap = enum_cap()
    n_future_inputs = m - n + L + 1
    if (ch.input_size * ch.output_size) ** hist_len > cap \
            or ch.input_size ** n_future_inputs > cap \
            or ch.output_size ** (m - n + 1) > cap:
        raise Overflow("fading-memory enumeration exceeds cap")

    # all positive-probability histories, as normalized state vectors
    stack = [ch.initial_state_dist()]
    for t in range(1, hist_len + 1):
        tbl = ch.step_table(t)
        nxt = []
        for a in stack:
            for x in range(ch.input_size):
                for y in range(ch.output_size):
                    a2 = a @ tbl[:, x, y, :]
                    if a2.sum() > 0.0:
                        nxt.append(a2)
        stack = nxt
    alphas = [a / a.sum() for a in stack]

    ref_alpha = filter_history(ch, ref_history)
    ref_mass = ref_alpha.sum()
    if ref_mass <= 0.0:
        raise ValueError("reference history has probability zero")
    ref_alpha = ref_alpha / ref_mass

    in_codec = tuple_codec(n_future_inputs, ch.input_size, cap=cap)
    worst = 0.0
    for xi in range(in_codec.count):
        xs = list(in_codec.tuple_of(xi))
        d_ref = output_block_dist(ch, hist_len + 1, ref_alpha, xs, skip=L)
        for a in alphas:
            d = output_block_dist(ch, hist_len + 1, a, xs, skip=L)
            worst = max(worst, float(np.abs(d - d_ref).sum()))
    return worst


def prop3_bound(state_count: int, beta: float, L: int) -> float:
    """Exponential fading bound 2 (1 - |S| beta)^(L+1) for beta-floor FSMs."""
    if state_count < 1:
        raise ValueError("state count must be >= 1")
    if L < 0:
        raise ValueError("L must be >= 0")
    if beta < 0.0 or state_count * beta > 1.0 + 1e-12:
        raise InvalidBeta(f"need 0 <= beta <= 1/{state_count}")
    lam = min(state_count * beta, 1.0)
    return 2.0 * (1.0 - lam) ** (L + 1)


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------


def _noise_from_config(cfg: dict, size: int):
    kind = cfg.get("type")
    if kind == "periodic":
        return PeriodicNoise(cfg["pattern"])
    if kind == "explicit":
        return ExplicitNoise(cfg["values"])
    if kind == "seeded":
        return SeededNoise(cfg["seed"], size)
    raise ValueError(f"unknown noise type {kind!r}")


def channel_from_config(cfg: dict) -> CausalChannel:
    """Build a channel from a plain config dict (see README for the schema)."""
    if not isinstance(cfg, dict) or "kind" not in cfg:
        raise ValueError("channel config must be a dict with a 'kind' key")
    kind = cfg["kind"]
    try:
        if kind == "dmc":
            return DmcChannel(cfg["matrix"])
        if kind == "modulo_additive":
            size = int(cfg["size"])
            return ModuloAdditiveChannel(size, _noise_from_config(cfg["noise"], size))
        if kind == "password":
            return PasswordChannel(int(cfg.get("polarity", 1)))
        if kind == "fsm":
            return FsmChannel(
                cfg["transitions"], cfg["outputs"],
                beta=float(cfg.get("beta", 0.0)),
                initial_state=int(cfg.get("initial_state", 0)))
    except KeyError as exc:
        raise ValueError(f"channel config missing key {exc}") from exc
    raise ValueError(f"unknown channel kind {kind!r}")


def load_channel(path) -> CausalChannel:
    with open(path) as fh:
        return channel_from_config(json.load(fh))
