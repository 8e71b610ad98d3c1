"""The ratio martingale of a stationary source, and exact verifiers for it.

For a word w of length n the martingale value is the ratio of the shifted
cylinder probability to the full one, Z_n = P([w_2..w_n]) / P([w_1..w_n])
(with Z_1 = 1/P([w_1])); its logarithm is non-negative by stationarity and
telescopes the information content of a prefix:

    -log P([x_1^n]) = sum_{k=0}^{n-1} log Z_{n-k} evaluated along the shifts.

This module exposes single-word and trajectory evaluations of log Z, the
untruncated and depth-M-truncated splits of that telescoping identity, and
three exact enumeration verifiers: the one-step martingale identity, the
maximal-ratio tail bound, and the expectation identity
E[log Z_n] = H(P_n) - H(P_{n-1}).

The almost-sure limit of Z_n has no finite representation; it is exposed
only through deep truncations.  First-order Markov models reach the limit
at depth 2 exactly, which the tests use as an exact-limit case.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import InsufficientLengthError, OutOfSupportError
from .measures import (
    DEFAULT_ENUM_CAP,
    ProcessModel,
    Trajectory,
    _entropy_of,
    _safe_log,
    block_log_probs,
    level_probs,
    log_cylinder_prob,
    prefix_log_probs,
    suffix_log_probs,
)


@dataclass(frozen=True)
class MartingaleTrace:
    """log Z_1..log Z_n along one trajectory suffix, plus the running maximum."""

    z_log: np.ndarray
    running_max_log: np.ndarray
    base_index: int

    def __len__(self) -> int:
        return self.z_log.shape[0]


@dataclass(frozen=True)
class DecompositionResult:
    """Split of -log P([x_1^n]) into a shift-sum and a residual part.

    ``truncation_M`` is None for the untruncated split (the limit is proxied
    by the deepest ratio the trajectory supports) and the truncation depth
    otherwise.  ``identity_residual`` is the float-level discrepancy between
    the directly evaluated information content and ``i_term + j_term``; the
    identity is exact, so the residual only measures accumulation error.
    """

    neg_log_prob: float
    i_term: float
    j_term: float
    truncation_M: Optional[int] = None

    @property
    def identity_residual(self) -> float:
        return self.neg_log_prob - (self.i_term + self.j_term)


@dataclass(frozen=True)
class TailCheckRow:
    """Exact tail of the running-maximum ratio at one threshold vs. its bounds."""

    threshold: float
    tail_prob: float
    ratio_bound: float
    log_tail_prob: float
    exp_bound: float

    @property
    def passed(self) -> bool:
        return self.tail_prob <= self.ratio_bound and self.log_tail_prob <= self.exp_bound


def z_value(model: ProcessModel, word) -> float:
    """log Z for a single word: shifted minus full cylinder log-probability.

    Raises OutOfSupportError for words of probability zero (the ratio is
    undefined off the support).
    """
    w = np.asarray(word, dtype=np.int64)
    full = log_cylinder_prob(model, w)
    if not np.isfinite(full):
        raise OutOfSupportError("word has probability zero under the model")
    shifted = 0.0 if w.shape[0] == 1 else log_cylinder_prob(model, w[1:])
    return shifted - full


def z_trace(model: ProcessModel, traj: Trajectory, n: int, base: int = 0) -> MartingaleTrace:
    """log Z_1..log Z_n evaluated on the trajectory suffix starting at ``base``."""
    if n < 1:
        raise ValueError("trace depth must be >= 1")
    if base < 0 or base + n > len(traj):
        raise InsufficientLengthError(
            f"trace needs symbols [{base}, {base + n}) but trajectory has length {len(traj)}"
        )
    word = traj.symbols[base:base + n]
    full = prefix_log_probs(model, word)
    if not np.isfinite(full[-1]):
        raise OutOfSupportError("trajectory suffix has probability zero under the model")
    shifted = prefix_log_probs(model, word[1:]) if n > 1 else np.zeros(1)
    z_log = shifted[:n] - full[1:]
    return MartingaleTrace(z_log=z_log, running_max_log=np.maximum.accumulate(z_log),
                           base_index=base)


def _three_levels(model: ProcessModel, n: int, cap: int):
    """Return (P_{n-1}, P_n, P_{n+1}) as rank-indexed arrays, with P_0 = [1]."""
    levels = {0: np.ones(1)}
    for k, level in level_probs(model, n + 1, cap):
        if k >= n - 1:
            levels[k] = level
    return levels[n - 1], levels[n], levels[n + 1]


def verify_martingale_property(model: ProcessModel, n: int, cap: int = DEFAULT_ENUM_CAP) -> float:
    """Max residual of the one-step identity, over every length-n word in support.

    For each such word u the sum of Z_{n+1}(ua) P([ua]) over in-support
    extensions must equal P([u]) Z_n(u), i.e. the shifted probability
    P([u_2..u_n]); the residual is the absolute gap, exactly enumerated.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    a = model.alphabet_size
    p_prev, p_n, p_next = _three_levels(model, n, cap)
    shift_rank = np.arange(p_n.shape[0], dtype=np.int64) % p_prev.shape[0]
    ext = p_next.reshape(-1, a)                      # P([u a])
    shifted_ext = p_n[shift_rank[:, None] * a + np.arange(a, dtype=np.int64)[None, :]]
    contrib = np.where(ext > 0, shifted_ext, 0.0).sum(axis=1)
    target = p_prev[shift_rank]
    in_support = p_n > 0
    if not in_support.any():
        return 0.0
    return float(np.abs(contrib[in_support] - target[in_support]).max())


def expected_logz_check(model: ProcessModel, n: int, cap: int = DEFAULT_ENUM_CAP) -> float:
    """|E[log Z_n] - (H(P_n) - H(P_{n-1}))| with both sides exactly enumerated."""
    if n < 1:
        raise ValueError("n must be >= 1")
    levels = {0: np.ones(1)}
    for k, level in level_probs(model, n, cap):
        if k >= n - 1:
            levels[k] = level
    p_prev, p_n = levels[n - 1], levels[n]
    shift_rank = np.arange(p_n.shape[0], dtype=np.int64) % p_prev.shape[0]
    mask = p_n > 0
    z_log = _safe_log(p_prev[shift_rank[mask]]) - _safe_log(p_n[mask])
    expectation = float((p_n[mask] * z_log).sum())
    increment = _entropy_of(p_n) - _entropy_of(p_prev)
    return abs(expectation - increment)


def zmax_tail_check(model: ProcessModel, n: int, t_grid, cap: int = DEFAULT_ENUM_CAP):
    """Exact tails of max_{k<=n} Z_k against the |A|/t and |A| e^{-t} bounds.

    Returns one row per threshold t: the exact probability that the running
    maximum exceeds t (compared to |A|/t), and the exact probability that
    its logarithm exceeds t (compared to |A| e^{-t}).
    """
    thresholds = [float(t) for t in t_grid]
    if any(t <= 0 for t in thresholds):
        raise ValueError("thresholds must be positive")
    a = model.alphabet_size
    prev = np.ones(1)
    running = None
    level_n = None
    for k, level in level_probs(model, n, cap):
        shift_rank = np.arange(level.shape[0], dtype=np.int64) % prev.shape[0]
        with np.errstate(invalid="ignore"):
            z_log = np.where(level > 0, _safe_log(prev[shift_rank]) - _safe_log(level), -np.inf)
        running = z_log if running is None else np.maximum(np.repeat(running, a), z_log)
        prev = level
        level_n = level
    rows = []
    for t in thresholds:
        tail = float(level_n[running > math.log(t)].sum())
        log_tail = float(level_n[running > t].sum())
        rows.append(TailCheckRow(threshold=t, tail_prob=tail, ratio_bound=a / t,
                                 log_tail_prob=log_tail, exp_bound=a * math.exp(-t)))
    return rows


def chain_rule_decomposition(model: ProcessModel, traj: Trajectory, n: int) -> DecompositionResult:
    """Telescoping split of -log P([x_1^n]) along the shifts of one trajectory.

    The two sides are evaluated by different recursions (a forward pass for
    the information content, a backward pass for the per-shift ratios), so
    ``identity_residual`` genuinely cross-checks the identity.  The i-term
    sums the deepest ratio available at each shift given the trajectory
    length (the limit proxy); the j-term collects what remains.
    """
    if n < 1 or n > len(traj):
        raise InsufficientLengthError(f"need 1 <= n <= {len(traj)}, got {n}")
    x = traj.symbols
    forward = prefix_log_probs(model, x[:n])
    if not np.isfinite(forward[-1]):
        raise OutOfSupportError("prefix has probability zero under the model")
    neg_log_prob = -float(forward[-1])
    tele = np.diff(suffix_log_probs(model, x[:n]))        # log Z_{n-k} at shift k
    proxy = np.diff(suffix_log_probs(model, x))[:n]        # deepest available ratio
    i_term = float(np.sum(proxy))
    j_term = float(np.sum(tele - proxy))
    return DecompositionResult(neg_log_prob=neg_log_prob, i_term=i_term,
                               j_term=j_term, truncation_M=None)


def truncated_decomposition(model: ProcessModel, traj: Trajectory, n: int, M: int) -> DecompositionResult:
    """Depth-M truncated split: i-term sums log Z_M along the first n shifts.

    Needs n + M <= trajectory length (the window at the last shift reads M
    symbols).  The j-term is fixed by the identity and is cross-checked
    against the direct summation of the per-shift differences.
    """
    if M < 1:
        raise ValueError("truncation depth M must be >= 1")
    if n < 1 or n + M > len(traj):
        raise InsufficientLengthError(
            f"need n + M <= trajectory length ({len(traj)}), got n={n}, M={M}"
        )
    x = traj.symbols
    starts = np.arange(n, dtype=np.int64)
    full = block_log_probs(model, x, starts, starts + M)
    if M == 1:
        shifted = np.zeros(n)
    else:
        shifted = block_log_probs(model, x, starts + 1, starts + M)
    z_m = shifted - full
    if not np.all(np.isfinite(z_m)):
        raise OutOfSupportError("a depth-M window has probability zero under the model")
    forward = prefix_log_probs(model, x[:n])
    if not np.isfinite(forward[-1]):
        raise OutOfSupportError("prefix has probability zero under the model")
    neg_log_prob = -float(forward[-1])
    i_term = float(np.sum(z_m))
    j_term = neg_log_prob - i_term
    direct = float(np.sum(np.diff(suffix_log_probs(model, x[:n])) - z_m))
    if abs(direct - j_term) > 1e-8 * max(1.0, abs(neg_log_prob)):
        raise RuntimeError(
            f"truncated split inconsistent: by-identity j={j_term!r}, direct j={direct!r}"
        )
    return DecompositionResult(neg_log_prob=neg_log_prob, i_term=i_term,
                               j_term=j_term, truncation_M=M)
