"""Blockwise information sums, factorization residuals, and experiments.

The central estimate is the per-symbol sum of negative log-probabilities of
the blocks of a parsing; for sublinear block counts it converges to the
per-realization entropy rate, matching the plain information content
-log P([x_1^N]) / N.  Experiments here drive that convergence along nested
prefixes of one trajectory (almost-sure flavor) or across independent seeds
(L1 flavor), reproduce the two-limit behavior of linear parsings, check
robustness under subextensive block perturbations, and verify that
sublinearly many shifted observations cannot move a normalized ergodic sum.

Oracle targets are always computed before estimation and carried in the
records, so a report never compares one estimate against another.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence, Union

import numpy as np

from .errors import (
    BudgetNotSubextensiveError,
    GapTooSmallError,
    OutOfSupportError,
)
from .measures import (
    DEFAULT_ENUM_CAP,
    EntropyBracket,
    MixtureModel,
    ProcessModel,
    Trajectory,
    block_log_probs,
    entropy_rate,
    marginal_entropy,
    discrepancy_gap,
    prefix_log_probs,
    sample_trajectory,
)
from .parsing import (
    Parsing,
    ParserSpec,
    PerturbedParsing,
    apply_perturbation_plan,
    make_parsing,
)


@dataclass(frozen=True)
class OracleTarget:
    """A point or bracket limit computed before any estimation runs."""

    lower: float
    upper: float

    @property
    def mid(self) -> float:
        return 0.5 * (self.lower + self.upper)

    def deviation(self, value: float) -> float:
        """Distance from the bracket (zero inside it)."""
        return max(self.lower - value, value - self.upper, 0.0)


@dataclass(frozen=True)
class EstimatorRecord:
    """One (seed, N) cell: estimates next to their oracle target."""

    N: int
    seed: int
    parser_family: str
    parser_params: str
    blockwise_info: float
    smb_info: float
    residual: float
    c_over_N: float
    target: OracleTarget
    deviation: float


@dataclass(frozen=True)
class ConvergenceReport:
    series: tuple
    target: OracleTarget
    mode: str
    tol: float
    effective_tol: float
    tail_deviation: float
    l1_deviation: float
    verdict: bool


@dataclass(frozen=True)
class CounterexampleReport:
    series: tuple
    limit_even: float            # fixed-block limit H(P_K)/K
    limit_odd: OracleTarget      # tail-parsing limit (2 H(P_{K/2})/K + h)/2
    gap: float
    h_bracket: EntropyBracket
    even_tail_avg: float
    odd_tail_avg: float
    parity_gap: float
    tol_even: float
    tol_odd: float
    tol_gap: float
    even_ok: bool
    odd_ok: bool
    gap_ok: bool

    @property
    def verdict(self) -> bool:
        return self.even_ok and self.odd_ok and self.gap_ok


@dataclass(frozen=True)
class BirkhoffSeries:
    rows: tuple                  # (N, normalized partial sum)
    observable: str
    index_family: str
    depth: int
    tol: Optional[float] = None

    @property
    def final_value(self) -> float:
        return self.rows[-1][1]

    @property
    def passed(self) -> Optional[bool]:
        return None if self.tol is None else self.final_value < self.tol


# ---------------------------------------------------------------------------
# Pointwise estimators
# ---------------------------------------------------------------------------


def _blocks_of(parsing: Union[Parsing, PerturbedParsing]):
    if isinstance(parsing, Parsing):
        return parsing.starts, parsing.ends, parsing.N, parsing.c
    return parsing.starts, parsing.ends, parsing.origin.N, parsing.c


def blockwise_info(model: ProcessModel, traj: Trajectory,
                   parsing: Union[Parsing, PerturbedParsing]) -> float:
    """Per-symbol sum of block information contents, in nats.

    Perturbed parsings keep the 1/N normalization of their origin prefix.
    """
    starts, ends, n, _ = _blocks_of(parsing)
    if n > len(traj):
        raise ValueError("parsing covers more symbols than the trajectory has")
    logs = block_log_probs(model, traj.symbols, starts, ends)
    if not np.all(np.isfinite(logs)):
        raise OutOfSupportError("a block has probability zero under the model")
    return -float(np.sum(logs)) / n


def smb_info(model: ProcessModel, traj: Trajectory, N: int) -> float:
    """Plain per-symbol information content -log P([x_1^N]) / N, in nats."""
    if not 1 <= N <= len(traj):
        raise ValueError(f"need 1 <= N <= trajectory length, got N={N}")
    lp = prefix_log_probs(model, traj.symbols[:N])[-1]
    if not np.isfinite(lp):
        raise OutOfSupportError("prefix has probability zero under the model")
    return -float(lp) / N


def factorization_residual(model: ProcessModel, traj: Trajectory,
                           parsing: Union[Parsing, PerturbedParsing]) -> float:
    """Per-symbol log gap between the cylinder probability and the block product.

    Positive when the product of block probabilities underestimates the
    joint cylinder probability; identically zero for product measures.
    """
    _, _, n, _ = _blocks_of(parsing)
    return blockwise_info(model, traj, parsing) - smb_info(model, traj, n)


# ---------------------------------------------------------------------------
# Oracle targets
# ---------------------------------------------------------------------------


def _rate_target(model: ProcessModel, rate_tol: float, n_cap: int, cap: int) -> OracleTarget:
    br = entropy_rate(model, tol=rate_tol, n_cap=n_cap, cap=cap)
    return OracleTarget(br.lower, br.upper)


def _tail_parsing_target(model: ProcessModel, K: int, rate_tol: float, n_cap: int,
                         cap: int) -> OracleTarget:
    h_half = marginal_entropy(model, K // 2, cap)
    br = entropy_rate(model, tol=rate_tol, n_cap=n_cap, cap=cap)
    return OracleTarget(0.5 * (2.0 * h_half / K + br.lower),
                        0.5 * (2.0 * h_half / K + br.upper))


def oracle_target(model: ProcessModel, spec: ParserSpec, rate_tol: float = 1e-5,
                  n_cap: int = 22, cap: int = DEFAULT_ENUM_CAP) -> OracleTarget:
    """The limit the blockwise estimate must approach for this (model, spec)."""
    fam = spec.family
    if fam in ("fixed", "counterexample_u"):
        k = spec.params["K"]
        h_k = marginal_entropy(model, k, cap)
        return OracleTarget(h_k / k, h_k / k)
    if fam == "counterexample_v":
        if isinstance(model, MixtureModel):
            raise ValueError("tail-selecting parsings need an ergodic model")
        return _tail_parsing_target(model, spec.params["K"], rate_tol, n_cap, cap)
    if fam == "counterexample_w":
        raise ValueError("the alternating family has two limits; run counterexample_experiment")
    return _rate_target(model, rate_tol, n_cap, cap)


# ---------------------------------------------------------------------------
# Experiments
# ---------------------------------------------------------------------------


def _check_grid(N_grid) -> list:
    grid = [int(n) for n in N_grid]
    if not grid:
        raise ValueError("N_grid must be non-empty")
    if any(b <= a for a, b in zip(grid, grid[1:])):
        raise ValueError("N_grid must be strictly increasing")
    return grid


def _tail_window(count: int) -> int:
    """Number of trailing grid points forming the 'last quartile' window."""
    return max(1, math.ceil(count / 4))


def _record(model, traj, parsing, spec_family, spec_params, n, seed, target,
            prefix_logs) -> EstimatorRecord:
    starts, ends, n_norm, c = _blocks_of(parsing)
    logs = block_log_probs(model, traj.symbols, starts, ends)
    if not np.all(np.isfinite(logs)):
        raise OutOfSupportError("a block has probability zero under the model")
    blockwise = -float(np.sum(logs)) / n_norm
    smb = -float(prefix_logs[n]) / n
    return EstimatorRecord(
        N=n, seed=traj.seed, parser_family=spec_family, parser_params=spec_params,
        blockwise_info=blockwise, smb_info=smb, residual=blockwise - smb,
        c_over_N=c / n, target=target, deviation=target.deviation(blockwise),
    )


def _component_targets(model: MixtureModel, rate_tol: float, n_cap: int, cap: int):
    return tuple(_rate_target(comp, rate_tol, n_cap, cap) for comp in model.components)


def _seed_cell(args) -> list:
    """All records of one seed; self-contained so cells can run in workers."""
    model, spec, grid, seed, headline, per_component, h_for_tail = args
    traj = sample_trajectory(model, grid[-1], seed)
    target = headline if per_component is None else per_component[traj.component]
    prefix_logs = prefix_log_probs(model, traj.symbols)
    out = []
    for n in grid:
        parsing = make_parsing(spec, n, model=model, traj=traj, h_ref=h_for_tail)
        out.append(_record(model, traj, parsing, spec.family, spec.describe(),
                           n, seed, target, prefix_logs))
    return out


def convergence_experiment(model: ProcessModel, spec: ParserSpec, N_grid,
                           seeds: Sequence[int], target_mode: str = "as",
                           tol: float = 0.01, rate_tol: float = 1e-5,
                           n_cap: int = 22, cap: int = DEFAULT_ENUM_CAP,
                           map_fn: Callable = map) -> ConvergenceReport:
    """Blockwise-information convergence against a pre-computed oracle limit.

    Almost-sure mode follows nested prefixes of one trajectory (one seed);
    L1 mode averages absolute deviations across at least 20 seeds at the
    largest N.  For mixture models each seed is scored against the rate of
    the component it sampled, and the report target is the bracket hull.

    ``map_fn`` may be a pool map; seeds are independent cells and the merge
    order is fixed, so results do not depend on the worker count.
    """
    grid = _check_grid(N_grid)
    seeds = [int(s) for s in seeds]
    if target_mode == "as":
        if len(seeds) != 1:
            raise ValueError("almost-sure mode follows one trajectory: pass exactly one seed")
    elif target_mode == "l1":
        if len(seeds) < 20:
            raise ValueError("L1 mode needs at least 20 seeds")
        if len(set(seeds)) != len(seeds):
            raise ValueError("seeds must be distinct")
    else:
        raise ValueError("target_mode must be 'as' or 'l1'")

    headline = oracle_target(model, spec, rate_tol, n_cap, cap)
    per_component = None
    if isinstance(model, MixtureModel) and spec.family not in ("fixed", "counterexample_u"):
        per_component = _component_targets(model, rate_tol, n_cap, cap)
    # Tail selection compares suffix information rates against the entropy
    # rate itself, not against the experiment's limit value.
    h_for_tail = None
    if spec.family == "counterexample_v":
        h_for_tail = entropy_rate(model, tol=rate_tol, n_cap=n_cap, cap=cap).mid

    tasks = [(model, spec, grid, seed, headline, per_component, h_for_tail) for seed in seeds]
    records = [rec for cell in map_fn(_seed_cell, tasks) for rec in cell]
    records.sort(key=lambda r: (r.N, r.seed))

    window = {grid[i] for i in range(len(grid) - _tail_window(len(grid)), len(grid))}
    tail_dev = max(r.deviation for r in records if r.N in window)
    at_max = [r for r in records if r.N == grid[-1]]
    l1_dev = float(np.mean([r.deviation for r in at_max]))
    if target_mode == "l1":
        spread = float(np.std([r.blockwise_info for r in at_max], ddof=1)) if len(at_max) > 1 else 0.0
        effective_tol = max(tol, 3.0 * spread / math.sqrt(len(at_max)))
        verdict = l1_dev <= effective_tol
    else:
        effective_tol = tol
        verdict = tail_dev <= effective_tol
    return ConvergenceReport(series=tuple(records), target=headline, mode=target_mode,
                             tol=tol, effective_tol=effective_tol,
                             tail_deviation=tail_dev, l1_deviation=l1_dev, verdict=verdict)


def counterexample_experiment(model: ProcessModel, K: int, epsilon_schedule: Sequence[float],
                              N_grid, seed: int, tol_rel: float = 0.02,
                              min_gap: float = 1e-3, rate_tol: float = 1e-5,
                              n_cap: int = 22, cap: int = DEFAULT_ENUM_CAP) -> CounterexampleReport:
    """Two-limit behavior of the alternating parsing on a linear block budget.

    Requires an ergodic model whose fixed-K and tail-parsing limits are
    separated by more than ``min_gap`` (verified by enumeration before the
    run).  The grid must contain both parities; the epsilon schedule is
    applied in contiguous non-increasing segments, emulating a diagonal
    refinement of the tail-selection window.
    """
    if isinstance(model, MixtureModel):
        raise ValueError("the two-limit construction needs an ergodic model; mixtures are not")
    grid = _check_grid(N_grid)
    eps = [float(e) for e in epsilon_schedule]
    if not eps or any(b > a for a, b in zip(eps, eps[1:])):
        raise ValueError("epsilon_schedule must be non-increasing and non-empty")
    if any(not 0.0 < e < 0.25 for e in eps):
        raise ValueError("epsilon values must lie in (0, 1/4)")
    parities = {n % 2 for n in grid}
    if parities != {0, 1}:
        raise ValueError("N_grid must contain both even and odd lengths")

    gap_info = discrepancy_gap(model, K, cap=cap, rate_tol=rate_tol, n_cap=n_cap)
    if gap_info.gap <= min_gap:
        raise GapTooSmallError(
            f"fixed-block and tail-parsing limits are {gap_info.gap:.3e} nats apart "
            f"(resolution {min_gap:.1e}); the two-limit experiment cannot resolve them"
        )
    h_k = marginal_entropy(model, K, cap)
    limit_even = h_k / K
    limit_odd = _tail_parsing_target(model, K, rate_tol, n_cap, cap)
    even_target = OracleTarget(limit_even, limit_even)

    traj = sample_trajectory(model, grid[-1], seed)
    prefix_logs = prefix_log_probs(model, traj.symbols)
    h_mid = gap_info.h_bracket.mid
    records = []
    for i, n in enumerate(grid):
        e = eps[min(i * len(eps) // len(grid), len(eps) - 1)]
        parsing = make_parsing(ParserSpec("counterexample_w", {"K": K, "epsilon": e}),
                               n, model=model, traj=traj, h_ref=h_mid)
        target = even_target if n % 2 == 0 else limit_odd
        params = json.dumps({"K": K, "epsilon": e}, sort_keys=True, separators=(",", ":"))
        records.append(_record(model, traj, parsing, "counterexample_w", params,
                               n, seed, target, prefix_logs))

    window = max(4, math.ceil(len(grid) / 4))
    while window < len(grid):
        tail = grid[-window:]
        if {n % 2 for n in tail} == {0, 1}:
            break
        window += 1
    tail_set = set(grid[-window:])
    even_vals = [r.blockwise_info for r in records if r.N in tail_set and r.N % 2 == 0]
    odd_vals = [r.blockwise_info for r in records if r.N in tail_set and r.N % 2 == 1]
    even_avg = float(np.mean(even_vals))
    odd_avg = float(np.mean(odd_vals))
    parity_gap = even_avg - odd_avg
    tol_even = tol_rel * limit_even
    tol_odd = tol_rel * limit_odd.mid
    tol_gap = tol_even + tol_odd
    return CounterexampleReport(
        series=tuple(records), limit_even=limit_even, limit_odd=limit_odd,
        gap=gap_info.gap, h_bracket=gap_info.h_bracket,
        even_tail_avg=even_avg, odd_tail_avg=odd_avg, parity_gap=parity_gap,
        tol_even=tol_even, tol_odd=tol_odd, tol_gap=tol_gap,
        even_ok=abs(even_avg - limit_even) <= tol_even,
        odd_ok=abs(odd_avg - limit_odd.mid) <= tol_odd,
        gap_ok=abs(parity_gap - gap_info.gap) <= tol_gap,
    )


def perturbation_experiment(model: ProcessModel, spec: ParserSpec,
                            plan: Union[str, Callable], N_grid, seed: int,
                            tol: float = 0.01, rate_tol: float = 1e-5,
                            n_cap: int = 22, cap: int = DEFAULT_ENUM_CAP) -> ConvergenceReport:
    """Convergence of blockwise information under per-block perturbations.

    The plan (a name from the built-in plans or a callable mapping a parsing
    to a perturbed one) must be subextensive: the modification ratio has to
    decrease along the grid and drop below 1% at the largest N, otherwise
    BudgetNotSubextensiveError is raised before any estimation.
    """
    grid = _check_grid(N_grid)
    if isinstance(plan, str):
        plan_name = plan
        apply_plan = lambda parsing: apply_perturbation_plan(parsing, plan_name)  # noqa: E731
    else:
        plan_name = getattr(plan, "__name__", "custom")
        apply_plan = plan
    target = oracle_target(model, spec, rate_tol, n_cap, cap)
    h_for_tail = None
    if spec.family in ("counterexample_v", "counterexample_w"):
        h_for_tail = entropy_rate(model, tol=rate_tol, n_cap=n_cap, cap=cap).mid

    traj = sample_trajectory(model, grid[-1], seed)
    prefix_logs = prefix_log_probs(model, traj.symbols)
    cells = []
    for n in grid:
        base = make_parsing(spec, n, model=model, traj=traj, h_ref=h_for_tail)
        cells.append((n, apply_plan(base)))
    ratios = [p.modification / n for n, p in cells]
    if ratios[-1] >= 0.01 or any(b > a + 1e-12 for a, b in zip(ratios, ratios[1:])):
        raise BudgetNotSubextensiveError(
            f"modification ratios along the grid are {['%.3g' % r for r in ratios]}; "
            "they must decrease and end below 0.01"
        )

    params = json.dumps({**spec.params, "plan": plan_name}, sort_keys=True,
                        separators=(",", ":"))
    records = [
        _record(model, traj, perturbed, spec.family, params, n, seed, target, prefix_logs)
        for n, perturbed in cells
    ]
    window = {grid[i] for i in range(len(grid) - _tail_window(len(grid)), len(grid))}
    tail_dev = max(r.deviation for r in records if r.N in window)
    l1_dev = float(np.mean([r.deviation for r in records if r.N == grid[-1]]))
    return ConvergenceReport(series=tuple(records), target=target, mode="as", tol=tol,
                             effective_tol=tol, tail_deviation=tail_dev,
                             l1_deviation=l1_dev, verdict=tail_dev <= tol)


_BIRKHOFF_OBSERVABLES = ("log_zmax_to_depth_d", "abs_log_z_d")
_INDEX_FAMILIES = ("prefix_sqrt", "random_sqrt")


def sublinear_birkhoff_check(model: ProcessModel, observable: str = "abs_log_z_d",
                             index_family: str = "prefix_sqrt", N_grid=(10_000, 100_000, 1_000_000),
                             seed: int = 0, depth: int = 8,
                             tol: Optional[float] = None) -> BirkhoffSeries:
    """Normalized sums of a bounded shift observable over sqrt-many indices.

    For each N the index set holds floor(sqrt(N)) offsets (an initial
    segment, or a seeded uniform draw), and the observable is a depth-d
    martingale-ratio statistic evaluated through sliding windows.  The
    normalized sum must vanish like |A_N|/N, i.e. by a factor of about
    sqrt(10) per decade of N.
    """
    if observable not in _BIRKHOFF_OBSERVABLES:
        raise ValueError(f"observable must be one of {_BIRKHOFF_OBSERVABLES}")
    if index_family not in _INDEX_FAMILIES:
        raise ValueError(f"index_family must be one of {_INDEX_FAMILIES}")
    grid = _check_grid(N_grid)
    traj = sample_trajectory(model, grid[-1] + depth, seed)
    x = traj.symbols
    rows = []
    for n in grid:
        m = math.isqrt(n)
        if index_family == "prefix_sqrt":
            ks = np.arange(m, dtype=np.int64)
        else:
            rng = np.random.default_rng(np.random.SeedSequence([seed, n]))
            ks = np.sort(rng.choice(n, size=m, replace=False)).astype(np.int64)
        if observable == "abs_log_z_d":
            full = block_log_probs(model, x, ks, ks + depth)
            shifted = block_log_probs(model, x, ks + 1, ks + depth)
            values = np.abs(shifted - full)
        else:
            stack = np.empty((depth, m))
            for d in range(1, depth + 1):
                full = block_log_probs(model, x, ks, ks + d)
                shifted = block_log_probs(model, x, ks + 1, ks + d) if d > 1 else np.zeros(m)
                stack[d - 1] = shifted - full
            values = stack.max(axis=0)
        rows.append((n, float(values.sum()) / n))
    return BirkhoffSeries(rows=tuple(rows), observable=observable,
                          index_family=index_family, depth=depth, tol=tol)
