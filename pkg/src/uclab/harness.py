"""Experiment runner and lemma-check batteries.

Scenarios come from JSON configs; runs are deterministic per seed and the
CSV output is byte-identical across reruns with equal inputs. The check
batteries double as the acceptance-suite engines and as `uclab check`
suites.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from . import capacity as cap
from . import channels as chan
from . import reference as ref
from . import universal as uni
from .core import RandomSource, Transcript


class ConfigError(ValueError):
    """Malformed scenario or channel configuration."""


class IoError(OSError):
    """Failed to write a report."""


# ---------------------------------------------------------------------------
# scenarios
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Scenario:
    name: str
    channel: dict
    N: int
    epsilon: float = 0.1
    c_delta: float = 1.0
    fb_budget: float = 8.0
    seeds: tuple = (0,)
    reference: dict | None = None
    checks: tuple = ()

    @classmethod
    def from_dict(cls, raw: dict) -> "Scenario":
        if not isinstance(raw, dict):
            raise ConfigError("scenario must be a JSON object")
        try:
            name = str(raw["name"])
            channel = raw["channel"]
            scheme = raw.get("scheme", {})
            n_symbols = int(scheme.get("N", raw.get("N")))
            seeds = tuple(int(s) for s in raw.get("seeds", [0]))
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"bad scenario fields: {exc}") from exc
        if not seeds:
            raise ConfigError("seed list must be nonempty")
        try:
            chan.channel_from_config(channel)
        except (ValueError, KeyError) as exc:
            raise ConfigError(f"bad channel config: {exc}") from exc
        reference = raw.get("reference")
        if reference is not None and not isinstance(reference, dict):
            raise ConfigError("reference must be an object")
        return cls(
            name=name, channel=channel, N=n_symbols,
            epsilon=float(scheme.get("epsilon", 0.1)),
            c_delta=float(scheme.get("c_delta", 1.0)),
            fb_budget=float(scheme.get("fb_budget", 8.0)),
            seeds=seeds, reference=reference,
            checks=tuple(raw.get("checks", ())))

    @classmethod
    def from_json(cls, path) -> "Scenario":
        try:
            with open(path) as fh:
                raw = json.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read scenario: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"scenario is not valid JSON: {exc}") from exc
        return cls.from_dict(raw)


@dataclass(frozen=True)
class SeedResult:
    seed: int
    rate: float
    error: bool
    feedback_bits: int
    epochs: tuple  # (m, q, n_supers, rate_per_symbol, cap_per_symbol, error, fb_bits)


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str


@dataclass(frozen=True)
class RunReport:
    scenario: Scenario
    seed_results: tuple
    reference: dict | None
    checks: tuple


def _run_seed(scenario: Scenario, seed: int) -> SeedResult:
    channel = chan.channel_from_config(scenario.channel)
    res = uni.universal_run(channel, scenario.N, scenario.epsilon,
                            scenario.c_delta, scenario.fb_budget,
                            RandomSource(seed))
    epochs = tuple(
        (spec.m, spec.q, spec.n_supers, er.rate / spec.q,
         er.est_capacity / spec.q, er.error, er.feedback_bits)
        for spec, er in zip(res.schedule.epochs, res.epoch_results))
    return SeedResult(seed, res.rate, res.error, res.feedback_bits, epochs)


def _seed_job(args):
    raw, seed = args
    return _run_seed(Scenario.from_dict(raw), seed)


def _scenario_dict(s: Scenario) -> dict:
    return {"name": s.name, "channel": s.channel,
            "scheme": {"N": s.N, "epsilon": s.epsilon, "c_delta": s.c_delta,
                       "fb_budget": s.fb_budget},
            "seeds": list(s.seeds)}


def _reference_eval(scenario: Scenario) -> dict | None:
    cfg = scenario.reference
    if not cfg:
        return None
    k = int(cfg.get("k", 1))
    m_count = int(cfg.get("M", 2))
    blocks = int(cfg.get("blocks", 16))
    channel = chan.channel_from_config(scenario.channel)
    kernel = channel.matrix if isinstance(channel, chan.DmcChannel) else None
    if "codewords" in cfg:
        enc = np.asarray(cfg["codewords"], dtype=np.int64)
        dec = ref._build_decoder(enc, channel.input_size, channel.output_size,
                                 kernel)
        code = ref.BlockCode(enc.shape[1], enc.shape[0], channel.input_size,
                             channel.output_size, enc, dec)
    else:
        prior = cfg.get("prior")
        if prior is None:
            prior = [1.0 / channel.input_size] * channel.input_size
        code = ref.random_block_code(k, m_count, prior,
                                     RandomSource(int(cfg.get("seed", 0))),
                                     kernel=kernel,
                                     output_size=channel.output_size)
    out = {"k": code.k, "M": code.M, "rate": code.rate}
    out["ifb_error"] = ref.ifb_error_exact(code, channel.clone(), blocks)
    if getattr(channel, "state_enumerable", False):
        out["afb_error"] = ref.afb_error(code, channel.clone(), blocks)
    return out


def run_experiment(scenario: Scenario, jobs: int = 1) -> RunReport:
    """Universal runs for every seed, plus the configured reference baseline
    and check suites."""
    if jobs > 1:
        raw = _scenario_dict(scenario)
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_seed_job,
                                    [(raw, s) for s in sorted(scenario.seeds)]))
    else:
        results = [_run_seed(scenario, s) for s in sorted(scenario.seeds)]
    reference = _reference_eval(scenario)
    checks = tuple(run_check(name) for name in scenario.checks)
    return RunReport(scenario, tuple(results), reference, checks)


def _fmt(x) -> str:
    if isinstance(x, bool):
        return "1" if x else "0"
    if isinstance(x, float):
        return f"{x:.12g}"
    return str(x)


CSV_HEADER = ("scenario,seed,epoch,q,N_m,rate_bits_per_symbol,"
              "capacity_estimate,error_flag,feedback_bits")


def report_csv(report: RunReport, path) -> None:
    """Write the per-(seed, epoch) table plus a summary block; byte-identical
    across reruns with equal inputs."""
    lines = [CSV_HEADER]
    for sr in sorted(report.seed_results, key=lambda r: r.seed):
        for (m, q, n_m, rate, cap_est, err, fb) in sr.epochs:
            lines.append(",".join(_fmt(v) for v in (
                report.scenario.name, sr.seed, m, q, n_m, rate, cap_est,
                err, fb)))
    lines.append("# summary")
    lines.append("scenario,seed,overall_rate_bits_per_symbol,error_flag,"
                 "feedback_bits_total")
    for sr in sorted(report.seed_results, key=lambda r: r.seed):
        lines.append(",".join(_fmt(v) for v in (
            report.scenario.name, sr.seed, sr.rate, sr.error,
            sr.feedback_bits)))
    if report.reference:
        items = ",".join(f"{k}={_fmt(v)}" for k, v in
                         sorted(report.reference.items()))
        lines.append(f"# reference,{items}")
    for chk in report.checks:
        lines.append(f"# check,{chk.name},{'pass' if chk.passed else 'FAIL'},"
                     f"{chk.detail}")
    try:
        with open(path, "w") as fh:
            fh.write("\n".join(lines) + "\n")
    except OSError as exc:
        raise IoError(f"cannot write report to {path}: {exc}") from exc


# ---------------------------------------------------------------------------
# lemma-check batteries (shared by `uclab check` and the acceptance tests)
# ---------------------------------------------------------------------------


def _random_dmc(gen, nx: int, ny: int) -> np.ndarray:
    w = gen.random((nx, ny)) + 1e-3
    return w / w.sum(axis=1, keepdims=True)


def check_mixing(instances: int = 1000, tol: float = 1e-9,
                 seed: int = 7) -> CheckResult:
    """Capacity-mixing bounds on random channel families."""
    gen = RandomSource(seed).derive("mixing").generator()
    worst = 0.0
    for _ in range(instances):
        nx = int(gen.integers(2, 5))
        ny = int(gen.integers(2, 5))
        j = int(gen.integers(1, 4))
        ws = [_random_dmc(gen, nx, ny) for _ in range(j)]
        p = gen.random(j) + 1e-3
        p = p / p.sum()
        lower, mixed, upper = cap.mixing_bounds(ws, p, tol=tol)
        worst = max(worst, lower - mixed, mixed - upper)
    return CheckResult("mixing", worst <= tol,
                       f"{instances} instances, worst violation {worst:.3g}")


def check_l1_deterioration(instances: int = 1000, seed: int = 11) -> CheckResult:
    """Error-probability stability under L1 kernel perturbation."""
    gen = RandomSource(seed).derive("l1det").generator()
    worst = -math.inf
    for _ in range(instances):
        nx = int(gen.integers(2, 5))
        ny = int(gen.integers(2, 5))
        k = int(gen.integers(1, 3))
        m_count = int(gen.integers(2, min(5, nx ** k + 1)))
        enc = gen.integers(0, nx, size=(m_count, k))
        dec = gen.integers(0, m_count, size=ny ** k)
        code = ref.BlockCode(k, m_count, nx, ny, enc, dec)
        w1 = _random_dmc(gen, nx ** k, ny ** k)
        w2 = _random_dmc(gen, nx ** k, ny ** k)
        h_w = float(np.abs(w1 - w2).sum(axis=1).max())
        e1 = ref.block_code_error(code, w1)
        e2 = ref.block_code_error(code, w2)
        worst = max(worst, abs(e1 - e2) - h_w)
    return CheckResult("l1-deterioration", worst <= 1e-12,
                       f"{instances} instances, worst excess {worst:.3g}")


def check_fano(dmcs: int = 200, seed: int = 13) -> CheckResult:
    """Block-error Fano bound against exactly computed collapsed channels."""
    gen = RandomSource(seed).derive("fano").generator()
    worst = -math.inf
    count = 0
    while count < dmcs:
        k = int(gen.integers(1, 4))
        m_count = int(gen.integers(2, min(5, 2 ** k + 1)))
        extra = int(gen.integers(0, 3))
        q = k + extra
        if 2 ** q * 2 ** q > 4096:
            continue
        w = _random_dmc(gen, 2, 2)
        summary = ref.alignment(q, k, L=1, n_supers=max(4, 2 * k))
        j = max(range(1, k + 1), key=lambda jj: summary.block_counts[jj - 1])
        n_b = summary.block_counts[j - 1]
        if n_b < 1:
            continue
        channel = chan.DmcChannel(w)
        code = ref.random_block_code(k, m_count, [0.5, 0.5],
                                     RandomSource(seed).derive("code", count),
                                     kernel=w)
        b_set = [i for i in range(1, summary.n_supers + 1)
                 if (i - j) % k == 0][: summary.set_sizes[j - 1]]
        collapsed = ref.collapsed_channel(channel, code, b_set, q, 1)
        c_val = cap.blahut_arimoto(collapsed.dmc, tol=1e-7).capacity
        # exact per-block error of the code inside the window (memoryless,
        # identical across blocks)
        eps = ref.ifb_error_exact(code, channel.clone(), 1)
        bound = ref.fano_lower_bound(n_b * k * code.rate, n_b, k, code.rate,
                                     eps)
        worst = max(worst, bound - c_val)
        count += 1
    return CheckResult("fano", worst <= 1e-9,
                       f"{dmcs} instances, worst bound excess {worst:.3g}")


def _random_floor_fsm(gen, beta: float, phases: int = 1):
    states = 2
    lam = states * beta
    ts, ws = [], []
    for _ in range(phases):
        t = gen.random((states, 2, states)) + 1e-3
        t = t / t.sum(axis=-1, keepdims=True)
        t = lam / states + (1 - lam) * t
        w = gen.random((states, 2, 2)) + 1e-3
        w = w / w.sum(axis=-1, keepdims=True)
        ts.append(t)
        ws.append(w)
    return chan.FsmChannel(ts, ws, beta=beta)


def check_prop3(n_channels: int = 50, seed: int = 17) -> CheckResult:
    """Measured fading-memory gaps against the exponential floor bound."""
    gen = RandomSource(seed).derive("prop3").generator()
    worst = -math.inf
    for idx in range(n_channels):
        beta = float(gen.uniform(0.05, 0.45))
        phases = int(gen.integers(1, 3))
        fsm = _random_floor_fsm(gen, beta, phases)
        for L in range(4):
            n = L + 2
            m = n + int(gen.integers(0, 3))
            gap = chan.fading_memory_gap(fsm, n, m, L, Transcript((0,), (0,)))
            bound = chan.prop3_bound(2, beta, L)
            worst = max(worst, gap - bound)
    return CheckResult("prop3", worst <= 1e-12,
                       f"{n_channels} channels, worst excess {worst:.3g}")


def _brute_alignment_counts(q: int, k: int, L: int, n_supers: int):
    """Blocks fully inside symbols L..q of each super-symbol by direct
    placement of k-blocks at global positions 1, k+1, 2k+1, ..."""
    per_super = []
    for i in range(1, n_supers + 1):
        lo = (i - 1) * q + L
        hi = i * q
        count = 0
        g = 1
        while g + k - 1 <= n_supers * q + k:  # a little past the end
            if g >= lo and g + k - 1 <= hi:
                count += 1
            g += k
        per_super.append(count)
    return per_super


def check_alignment(points: int = 500, seed: int = 19) -> CheckResult:
    """Alignment-set identities and the uncovered-symbol bound."""
    gen = RandomSource(seed).derive("alignment").generator()
    for _ in range(points):
        q = int(gen.integers(1, 65))
        k = int(gen.integers(1, 9))
        L = int(gen.integers(1, q + 1))
        n_supers = int(gen.integers(1, 33))
        s = ref.alignment(q, k, L, n_supers)
        if sum(s.lambdas) != Fraction(1):
            return CheckResult("alignment", False,
                               f"lambda sum != 1 at {(q, k, L, n_supers)}")
        if s.n0 > (L - 1 + 2 * k) * n_supers:
            return CheckResult("alignment", False,
                               f"n0 bound violated at {(q, k, L, n_supers)}")
        if s.lambdas[0] > Fraction(L - 1 + 2 * k, q):
            return CheckResult("alignment", False,
                               f"lambda0 bound violated at {(q, k, L, n_supers)}")
        brute = _brute_alignment_counts(q, k, L, n_supers)
        for j in range(1, k + 1):
            for i in range(1, n_supers + 1):
                if (i - j) % k == 0:
                    if brute[i - 1] != s.block_counts[j - 1]:
                        return CheckResult(
                            "alignment", False,
                            f"n_B mismatch at {(q, k, L, n_supers)} super {i}")
    return CheckResult("alignment", True, f"{points} grid points")


def _random_small_channel(gen):
    kind = int(gen.integers(0, 4))
    if kind == 0:
        return chan.DmcChannel(_random_dmc(gen, 2, 2))
    if kind == 1:
        pattern = [int(v) for v in gen.integers(0, 2, size=int(gen.integers(1, 4)))]
        return chan.ModuloAdditiveChannel(2, chan.PeriodicNoise(pattern))
    if kind == 2:
        return chan.PasswordChannel(int(gen.integers(0, 2)))
    return _random_floor_fsm(gen, float(gen.uniform(0.05, 0.45)))


def check_afb_ifb(instances: int = 100, seed: int = 23) -> CheckResult:
    """Arbitrary-mapping error dominates iterative-mapping error."""
    gen = RandomSource(seed).derive("afbifb").generator()
    worst = -math.inf
    for idx in range(instances):
        channel = _random_small_channel(gen)
        k = int(gen.integers(1, 3))
        m_count = int(gen.integers(2, 2 ** k + 1)) if k > 1 else 2
        code = ref.random_block_code(
            k, m_count, [0.5, 0.5], RandomSource(seed).derive("code", idx),
            output_size=channel.output_size)
        blocks = int(gen.integers(1, 5))
        ifb = ref.ifb_error_exact(code, channel.clone(), blocks)
        afb = ref.afb_error(code, channel.clone(), blocks)
        worst = max(worst, ifb - afb)
    return CheckResult("afb-ifb", worst <= 1e-12,
                       f"{instances} instances, worst IFB excess {worst:.3g}")


def check_summation(seed: int = 0) -> CheckResult:
    """Weighted-average decay with geometric weights."""
    ns = [10, 20, 40, 80]
    vals = []
    for n in ns:
        a = [2.0 ** i for i in range(1, n + 1)]
        d = [1.0 / i for i in range(1, n + 1)]
        vals.append(uni.summation_check(a, d))
    monotone = all(vals[i] > vals[i + 1] for i in range(len(vals) - 1))
    ok = monotone and vals[-1] < 0.05
    return CheckResult("summation", ok,
                       f"values {['%.4f' % v for v in vals]}")


CHECKS = {
    "mixing": check_mixing,
    "l1-deterioration": check_l1_deterioration,
    "fano": check_fano,
    "prop3": check_prop3,
    "alignment": check_alignment,
    "afb-ifb": check_afb_ifb,
    "summation": check_summation,
}


def run_check(name: str, **kwargs) -> CheckResult:
    if name not in CHECKS:
        raise ConfigError(f"unknown check suite {name!r}; "
                          f"known: {', '.join(sorted(CHECKS))}")
    return CHECKS[name](**kwargs)
