"""Stationary finite-alphabet source models and exact log-domain probabilities.

This module defines the four source variants (i.i.d., first-order Markov,
hidden Markov, two-component mixture), their validation, seeded sampling,
and the probability engines used everywhere else in the package:

- ``log_cylinder_prob`` evaluates a single word exactly in log domain,
- ``prefix_log_probs`` / ``suffix_log_probs`` / ``block_log_probs`` are the
  vectorized batch versions used on long trajectories,
- ``level_probs`` enumerates full marginals for exact entropy computations.

All probabilities are kept in natural-log units (nats) end to end; the
value ``-inf`` is reserved for out-of-support words.  Higher-order Markov
sources are expressed as hidden-Markov models or by alphabet extension;
only first-order transition matrices are accepted directly.

Stationary initial distributions are supplied explicitly and validated,
never solved for silently; ``stationary_distribution`` is provided as a
convenience for building model files.
"""

from __future__ import annotations

import hashlib
import json
import math
import weakref
from dataclasses import dataclass
from typing import Iterator, Optional, Sequence, Union

import numpy as np

from .errors import CapExceededError, ModelFormatError

DEFAULT_ENUM_CAP = 1 << 22

# Hidden-Markov blocks up to this length are evaluated through cached
# full-marginal tables; longer blocks get an individual forward pass.
_HMM_TABLE_MAX_LEN = 12

_ROW_SUM_TOL = 1e-12
_STATIONARY_TOL = 1e-10


def _frozen_array(values, dtype=float) -> np.ndarray:
    arr = np.array(values, dtype=dtype)
    arr.setflags(write=False)
    return arr


def _safe_log(arr: np.ndarray) -> np.ndarray:
    """Elementwise log with log(0) = -inf and no warning noise."""
    with np.errstate(divide="ignore"):
        return np.log(arr)


# ---------------------------------------------------------------------------
# Model types
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class IIDModel:
    """Product measure with symbol distribution ``p`` (length = alphabet size)."""

    p: np.ndarray

    def __post_init__(self):
        p = _frozen_array(self.p)
        if p.ndim != 1 or p.shape[0] < 1:
            raise ValueError("p must be a 1-d distribution over the alphabet")
        object.__setattr__(self, "p", p)

    @property
    def alphabet_size(self) -> int:
        return self.p.shape[0]


@dataclass(frozen=True, eq=False)
class MarkovModel:
    """First-order chain: row-stochastic ``transition`` and stationary ``initial``."""

    transition: np.ndarray
    initial: np.ndarray

    def __post_init__(self):
        t = _frozen_array(self.transition)
        pi = _frozen_array(self.initial)
        if t.ndim != 2 or t.shape[0] != t.shape[1]:
            raise ValueError("transition must be a square matrix")
        if pi.shape != (t.shape[0],):
            raise ValueError("initial must be a distribution over the alphabet")
        object.__setattr__(self, "transition", t)
        object.__setattr__(self, "initial", pi)

    @property
    def alphabet_size(self) -> int:
        return self.transition.shape[0]


@dataclass(frozen=True, eq=False)
class HiddenMarkovModel:
    """Hidden chain with stationary start, emitting one symbol per step."""

    hidden_transition: np.ndarray
    hidden_initial: np.ndarray
    emission: np.ndarray

    def __post_init__(self):
        q = _frozen_array(self.hidden_transition)
        rho = _frozen_array(self.hidden_initial)
        b = _frozen_array(self.emission)
        if q.ndim != 2 or q.shape[0] != q.shape[1]:
            raise ValueError("hidden_transition must be a square matrix")
        if b.ndim != 2 or b.shape[0] != q.shape[0]:
            raise ValueError("emission must have one row per hidden state")
        if rho.shape != (q.shape[0],):
            raise ValueError("hidden_initial must be a distribution over hidden states")
        object.__setattr__(self, "hidden_transition", q)
        object.__setattr__(self, "hidden_initial", rho)
        object.__setattr__(self, "emission", b)

    @property
    def alphabet_size(self) -> int:
        return self.emission.shape[1]

    @property
    def hidden_states(self) -> int:
        return self.emission.shape[0]


@dataclass(frozen=True, eq=False)
class MixtureModel:
    """Convex combination of two stationary components over the same alphabet.

    The canonical non-ergodic example: sampling draws one component per
    trajectory, so the per-realization information rate is a non-constant
    function of the realization.
    """

    weight: float
    first: "ProcessModel"
    second: "ProcessModel"

    @property
    def alphabet_size(self) -> int:
        return self.first.alphabet_size

    @property
    def components(self):
        return (self.first, self.second)


ProcessModel = Union[IIDModel, MarkovModel, HiddenMarkovModel, MixtureModel]


@dataclass(frozen=True, eq=False)
class Trajectory:
    """A sampled finite prefix with its seed provenance.

    ``component`` records the index drawn for mixture models (None otherwise).
    """

    symbols: np.ndarray
    seed: int
    model_id: str
    component: Optional[int] = None

    def __post_init__(self):
        object.__setattr__(self, "symbols", _frozen_array(self.symbols, dtype=np.int64))

    def __len__(self) -> int:
        return self.symbols.shape[0]


@dataclass(frozen=True)
class EntropyBracket:
    """Two-sided enclosure of the entropy rate, in nats per symbol."""

    lower: float
    upper: float
    n_used: int
    converged: bool = True

    @property
    def width(self) -> float:
        return self.upper - self.lower

    @property
    def mid(self) -> float:
        return 0.5 * (self.lower + self.upper)

    def hull(self, other: "EntropyBracket") -> "EntropyBracket":
        return EntropyBracket(
            lower=min(self.lower, other.lower),
            upper=max(self.upper, other.upper),
            n_used=max(self.n_used, other.n_used),
            converged=self.converged and other.converged,
        )


# ---------------------------------------------------------------------------
# Validation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ValidationCheck:
    name: str
    passed: bool
    residual: float
    bound: float


@dataclass(frozen=True)
class ModelValidationReport:
    checks: tuple

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    @property
    def failures(self) -> tuple:
        return tuple(c for c in self.checks if not c.passed)


def _check(name: str, residual: float, bound: float) -> ValidationCheck:
    residual = float(residual)
    return ValidationCheck(name=name, passed=residual <= bound, residual=residual, bound=bound)


def _distribution_checks(name: str, v: np.ndarray) -> list:
    return [
        _check(f"{name}.nonnegative", max(0.0, float(-v.min(initial=0.0))), 0.0),
        _check(f"{name}.sums_to_one", abs(float(v.sum()) - 1.0), _ROW_SUM_TOL),
    ]


def _matrix_checks(name: str, m: np.ndarray) -> list:
    rows = np.abs(m.sum(axis=1) - 1.0)
    return [
        _check(f"{name}.nonnegative", max(0.0, float(-m.min(initial=0.0))), 0.0),
        _check(f"{name}.rows_sum_to_one", float(rows.max()), _ROW_SUM_TOL),
    ]


def validate_model(model: ProcessModel, prefix: str = "") -> ModelValidationReport:
    """Check stochasticity and stationarity invariants, with numeric residuals.

    Failures do not raise; the report carries one row per invariant, e.g.
    the sup-norm of ``initial @ transition - initial`` for Markov models.
    """
    checks: list = []
    if isinstance(model, IIDModel):
        checks += _distribution_checks(prefix + "p", model.p)
        checks.append(_check(prefix + "alphabet_size", 0.0 if model.alphabet_size >= 2 else 1.0, 0.0))
    elif isinstance(model, MarkovModel):
        checks += _matrix_checks(prefix + "transition", model.transition)
        checks += _distribution_checks(prefix + "initial", model.initial)
        resid = float(np.abs(model.initial @ model.transition - model.initial).max())
        checks.append(_check(prefix + "stationarity", resid, _STATIONARY_TOL))
        checks.append(_check(prefix + "alphabet_size", 0.0 if model.alphabet_size >= 2 else 1.0, 0.0))
    elif isinstance(model, HiddenMarkovModel):
        checks += _matrix_checks(prefix + "hidden_transition", model.hidden_transition)
        checks += _matrix_checks(prefix + "emission", model.emission)
        checks += _distribution_checks(prefix + "hidden_initial", model.hidden_initial)
        resid = float(np.abs(model.hidden_initial @ model.hidden_transition - model.hidden_initial).max())
        checks.append(_check(prefix + "stationarity", resid, _STATIONARY_TOL))
        checks.append(_check(prefix + "alphabet_size", 0.0 if model.alphabet_size >= 2 else 1.0, 0.0))
    elif isinstance(model, MixtureModel):
        w_ok = 0.0 < model.weight < 1.0
        checks.append(_check(prefix + "weight_in_open_unit_interval", 0.0 if w_ok else 1.0, 0.0))
        same = model.first.alphabet_size == model.second.alphabet_size
        checks.append(_check(prefix + "components_share_alphabet", 0.0 if same else 1.0, 0.0))
        checks += validate_model(model.first, prefix=prefix + "first.").checks
        checks += validate_model(model.second, prefix=prefix + "second.").checks
    else:
        raise TypeError(f"unknown model type: {type(model)!r}")
    return ModelValidationReport(checks=tuple(checks))


def stationary_distribution(transition, tol: float = 1e-14, max_iter: int = 200_000) -> np.ndarray:
    """Stationary row vector of a row-stochastic matrix, by power iteration."""
    t = np.asarray(transition, dtype=float)
    k = t.shape[0]
    pi = np.full(k, 1.0 / k)
    for _ in range(max_iter):
        nxt = pi @ t
        nxt /= nxt.sum()
        if float(np.abs(nxt - pi).sum()) < tol:
            return nxt
        pi = nxt
    return pi


# ---------------------------------------------------------------------------
# Cylinder probability engines
# ---------------------------------------------------------------------------


def _as_word(model: ProcessModel, word) -> np.ndarray:
    w = np.asarray(word, dtype=np.int64)
    if w.ndim != 1 or w.shape[0] == 0:
        raise ValueError("word must be a non-empty 1-d sequence of symbols")
    if w.min() < 0 or w.max() >= model.alphabet_size:
        raise ValueError("word contains symbols outside the alphabet")
    return w


def log_cylinder_prob(model: ProcessModel, word) -> float:
    """Exact log-probability of the cylinder of ``word``; -inf off support."""
    w = _as_word(model, word)
    return float(prefix_log_probs(model, w)[-1])


def prefix_log_probs(model: ProcessModel, symbols) -> np.ndarray:
    """Array ``L`` of length n+1 with ``L[j]`` = log-probability of the first j symbols.

    ``L[0] = 0`` (empty word).  A single pass serves every nested prefix of a
    long trajectory.
    """
    x = np.asarray(symbols, dtype=np.int64)
    n = x.shape[0]
    if isinstance(model, IIDModel):
        out = np.empty(n + 1)
        out[0] = 0.0
        np.cumsum(_safe_log(model.p)[x], out=out[1:])
        return out
    if isinstance(model, MarkovModel):
        out = np.empty(n + 1)
        out[0] = 0.0
        out[1] = _safe_log(model.initial)[x[0]]
        if n > 1:
            steps = _safe_log(model.transition)[x[:-1], x[1:]]
            np.cumsum(steps, out=out[2:])
            out[2:] += out[1]
        return out
    if isinstance(model, HiddenMarkovModel):
        return _hmm_scan_log_probs(model, x, forward=True)
    if isinstance(model, MixtureModel):
        la, lb = math.log(model.weight), math.log1p(-model.weight)
        return np.logaddexp(la + prefix_log_probs(model.first, x),
                            lb + prefix_log_probs(model.second, x))
    raise TypeError(f"unknown model type: {type(model)!r}")


def suffix_log_probs(model: ProcessModel, symbols) -> np.ndarray:
    """Array ``S`` of length n+1 with ``S[j]`` = log-probability of ``symbols[j:]``.

    ``S[n] = 0``.  By stationarity this is the cylinder probability of the
    suffix word; the hidden-Markov case runs one scaled backward recursion.
    """
    x = np.asarray(symbols, dtype=np.int64)
    n = x.shape[0]
    if isinstance(model, IIDModel):
        out = np.zeros(n + 1)
        out[:n] = _safe_log(model.p)[x][::-1].cumsum()[::-1]
        return out
    if isinstance(model, MarkovModel):
        out = np.zeros(n + 1)
        start = _safe_log(model.initial)[x]
        if n > 1:
            steps = _safe_log(model.transition)[x[:-1], x[1:]]
            tail = np.zeros(n)
            tail[:-1] = steps[::-1].cumsum()[::-1]
            out[:n] = start + tail
        else:
            out[0] = start[0]
        return out
    if isinstance(model, HiddenMarkovModel):
        return _hmm_scan_log_probs(model, x, forward=False)
    if isinstance(model, MixtureModel):
        la, lb = math.log(model.weight), math.log1p(-model.weight)
        return np.logaddexp(la + suffix_log_probs(model.first, x),
                            lb + suffix_log_probs(model.second, x))
    raise TypeError(f"unknown model type: {type(model)!r}")


def _hmm_scan_two_state(model: HiddenMarkovModel, x: np.ndarray, forward: bool) -> np.ndarray:
    """Unrolled two-hidden-state scan; ~4x the generic loop on long inputs."""
    n = x.shape[0]
    (q00, q01), (q10, q11) = model.hidden_transition.tolist()
    b = model.emission.tolist()
    r0, r1 = model.hidden_initial.tolist()
    obs = x.tolist()
    out = np.empty(n + 1)
    if forward:
        out[0] = 0.0
        o = obs[0]
        v0, v1 = r0 * b[0][o], r1 * b[1][o]
        logc = 0.0
        for j in range(n):
            if j > 0:
                o = obs[j]
                v0, v1 = (v0 * q00 + v1 * q10) * b[0][o], (v0 * q01 + v1 * q11) * b[1][o]
            c = v0 + v1
            if c <= 0.0:
                out[j + 1:] = -math.inf
                return out
            logc += math.log(c)
            v0 /= c
            v1 /= c
            out[j + 1] = logc
        return out
    out[n] = 0.0
    o = obs[n - 1]
    v0, v1 = b[0][o], b[1][o]
    logc = 0.0
    for j in range(n - 1, -1, -1):
        if j < n - 1:
            o = obs[j]
            v0, v1 = b[0][o] * (q00 * v0 + q01 * v1), b[1][o] * (q10 * v0 + q11 * v1)
        c = v0 + v1
        if c <= 0.0:
            out[: j + 1] = -math.inf
            return out
        logc += math.log(c)
        v0 /= c
        v1 /= c
        total = r0 * v0 + r1 * v1
        out[j] = (logc + math.log(total)) if total > 0.0 else -math.inf
    return out


def _hmm_scan_log_probs(model: HiddenMarkovModel, x: np.ndarray, forward: bool) -> np.ndarray:
    """Scaled sequential pass over all prefixes (forward) or suffixes (backward).

    Plain-float inner loop: at trajectory lengths of 10^6 this is several
    times faster than per-step numpy dispatch.
    """
    n = x.shape[0]
    if n == 0:
        return np.zeros(1)
    if model.hidden_states == 2 and n > 2:
        return _hmm_scan_two_state(model, x, forward)
    S = model.hidden_states
    q = model.hidden_transition.tolist()
    b = model.emission.tolist()
    rho = model.hidden_initial.tolist()
    out = np.empty(n + 1)
    obs = x.tolist()
    states = range(S)
    if forward:
        out[0] = 0.0
        vec = [rho[s] * b[s][obs[0]] for s in states]
        logc = 0.0
        for j in range(n):
            if j > 0:
                o = obs[j]
                vec = [sum(vec[s] * q[s][t] for s in states) * b[t][o] for t in states]
            c = sum(vec)
            if c <= 0.0:
                out[j + 1:] = -math.inf
                return out
            logc += math.log(c)
            vec = [v / c for v in vec]
            out[j + 1] = logc
        return out
    out[n] = 0.0
    vec = [b[s][obs[n - 1]] for s in states]
    logc = 0.0
    for j in range(n - 1, -1, -1):
        if j < n - 1:
            o = obs[j]
            vec = [b[s][o] * sum(q[s][t] * vec[t] for t in states) for s in states]
        c = sum(vec)
        if c <= 0.0:
            out[: j + 1] = -math.inf
            return out
        logc += math.log(c)
        vec = [v / c for v in vec]
        total = sum(rho[s] * vec[s] for s in states)
        out[j] = (logc + math.log(total)) if total > 0.0 else -math.inf
    return out


def _hmm_forward_word(model: HiddenMarkovModel, w: np.ndarray) -> float:
    return float(_hmm_scan_log_probs(model, w, forward=True)[-1])


def _hmm_block_table(model: HiddenMarkovModel, length: int) -> np.ndarray:
    """Log-probabilities of every word of the given length, indexed by rank."""
    try:
        cache = _HMM_TABLE_CACHE[model]
    except KeyError:
        cache = _HMM_TABLE_CACHE[model] = {}
    if length not in cache:
        for n, level in level_probs(model, length, cap=DEFAULT_ENUM_CAP):
            if n == length:
                cache[length] = _safe_log(level)
    return cache[length]


_HMM_TABLE_CACHE = weakref.WeakKeyDictionary()


def block_log_probs(model: ProcessModel, symbols, starts, ends) -> np.ndarray:
    """Log-probabilities of the sub-words ``symbols[starts[i]:ends[i]]``.

    Vectorized over blocks; all blocks must be non-empty and lie inside the
    symbol array.  This is the workhorse behind blockwise information sums.
    """
    x = np.asarray(symbols, dtype=np.int64)
    s = np.asarray(starts, dtype=np.int64)
    e = np.asarray(ends, dtype=np.int64)
    if s.shape != e.shape:
        raise ValueError("starts and ends must have equal shape")
    if s.shape[0] == 0:
        return np.empty(0)
    if (e <= s).any() or s.min() < 0 or e.max() > x.shape[0]:
        raise ValueError("blocks must be non-empty and inside the symbol array")
    if isinstance(model, IIDModel):
        cs = np.concatenate(([0.0], _safe_log(model.p)[x].cumsum()))
        with np.errstate(invalid="ignore"):
            return cs[e] - cs[s]
    if isinstance(model, MarkovModel):
        ct = np.zeros(x.shape[0])
        if x.shape[0] > 1:
            ct[1:] = _safe_log(model.transition)[x[:-1], x[1:]].cumsum()
        with np.errstate(invalid="ignore"):
            return _safe_log(model.initial)[x[s]] + ct[e - 1] - ct[s]
    if isinstance(model, HiddenMarkovModel):
        out = np.empty(s.shape[0])
        lengths = e - s
        for ell in np.unique(lengths):
            mask = lengths == ell
            if ell <= _HMM_TABLE_MAX_LEN:
                table = _hmm_block_table(model, int(ell))
                powers = model.alphabet_size ** np.arange(ell - 1, -1, -1, dtype=np.int64)
                windows = x[s[mask][:, None] + np.arange(ell)[None, :]]
                out[mask] = table[windows @ powers]
            else:
                out[mask] = [_hmm_forward_word(model, x[a:b]) for a, b in zip(s[mask], e[mask])]
        return out
    if isinstance(model, MixtureModel):
        la, lb = math.log(model.weight), math.log1p(-model.weight)
        return np.logaddexp(la + block_log_probs(model.first, x, s, e),
                            lb + block_log_probs(model.second, x, s, e))
    raise TypeError(f"unknown model type: {type(model)!r}")


# ---------------------------------------------------------------------------
# Sampling
# ---------------------------------------------------------------------------


def model_id(model: ProcessModel) -> str:
    """Stable 12-hex digest of the model parameters (canonical JSON)."""
    payload = json.dumps(model_to_dict(model), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(payload.encode()).hexdigest()[:12]


def _inverse_cdf(cum: Sequence[float], u: float) -> int:
    for i, c in enumerate(cum):
        if u < c:
            return i
    return len(cum) - 1


def _sample_symbols(model: ProcessModel, n: int, rng: np.random.Generator):
    """Draw n symbols; returns (symbols, component_index_or_None).

    Draw order is fixed so that (model, n, seed) is bit-reproducible:
    i.i.d. uses one uniform per symbol (inverse CDF); Markov uses one
    uniform for the initial symbol then one per transition; hidden Markov
    draws the full hidden path first, then all emissions; mixtures draw the
    component label first and then delegate to it with the same generator.
    """
    if isinstance(model, MixtureModel):
        comp = 0 if rng.random() < model.weight else 1
        symbols, _ = _sample_symbols(model.components[comp], n, rng)
        return symbols, comp
    if isinstance(model, IIDModel):
        cum = np.cumsum(model.p)
        drawn = np.searchsorted(cum, rng.random(n), side="right")
        return np.minimum(drawn, model.alphabet_size - 1).astype(np.int64), None
    if isinstance(model, MarkovModel):
        u = rng.random(n)
        cum_init = list(np.cumsum(model.initial))
        cum_rows = np.cumsum(model.transition, axis=1).tolist()
        ul = u.tolist()
        out = [0] * n
        state = _inverse_cdf(cum_init, ul[0])
        out[0] = state
        for k in range(1, n):
            state = _inverse_cdf(cum_rows[state], ul[k])
            out[k] = state
        return np.asarray(out, dtype=np.int64), None
    if isinstance(model, HiddenMarkovModel):
        u = rng.random(n)
        cum_init = list(np.cumsum(model.hidden_initial))
        cum_rows = np.cumsum(model.hidden_transition, axis=1).tolist()
        ul = u.tolist()
        path = [0] * n
        state = _inverse_cdf(cum_init, ul[0])
        path[0] = state
        for k in range(1, n):
            state = _inverse_cdf(cum_rows[state], ul[k])
            path[k] = state
        cum_emit = np.cumsum(model.emission, axis=1)
        ue = rng.random(n)
        symbols = (ue[:, None] >= cum_emit[np.asarray(path)]).sum(axis=1)
        return symbols.astype(np.int64), None
    raise TypeError(f"unknown model type: {type(model)!r}")


def sample_trajectory(model: ProcessModel, n: int, seed: int) -> Trajectory:
    """Sample a length-n trajectory; identical (model, n, seed) is bit-identical."""
    if n < 1:
        raise ValueError("trajectory length must be >= 1")
    rng = np.random.default_rng(seed)
    symbols, comp = _sample_symbols(model, n, rng)
    return Trajectory(symbols=symbols, seed=int(seed), model_id=model_id(model), component=comp)


# ---------------------------------------------------------------------------
# Exact enumeration of marginals
# ---------------------------------------------------------------------------


def _check_cap(alphabet_size: int, n: int, cap: int):
    if alphabet_size ** n > cap:
        raise CapExceededError(
            f"enumeration of {alphabet_size}^{n} atoms exceeds the cap of {cap}"
        )


def level_probs(model: ProcessModel, n_max: int, cap: int = DEFAULT_ENUM_CAP,
                hidden_start: Optional[np.ndarray] = None) -> Iterator:
    """Yield ``(n, P_n)`` for n = 1..n_max, with P_n over all rank-ordered words.

    Ranks are base-``|A|`` encodings with the first symbol most significant.
    ``hidden_start`` overrides the hidden initial distribution (hidden-Markov
    models only); it is used for conditional-entropy sandwich bounds.
    """
    if n_max < 1:
        raise ValueError("n_max must be >= 1")
    a = model.alphabet_size
    _check_cap(a, n_max, cap)
    if isinstance(model, IIDModel):
        level = model.p.copy()
        yield 1, level
        for n in range(2, n_max + 1):
            level = np.kron(level, model.p)
            yield n, level
        return
    if isinstance(model, MarkovModel):
        level = model.initial.copy()
        yield 1, level
        for n in range(2, n_max + 1):
            last = np.arange(level.shape[0], dtype=np.int64) % a
            level = (level[:, None] * model.transition[last, :]).ravel()
            yield n, level
        return
    if isinstance(model, HiddenMarkovModel):
        rho = model.hidden_initial if hidden_start is None else np.asarray(hidden_start, dtype=float)
        fwd = rho[None, :] * model.emission.T  # (A words, S): rho(s) B(s, a)
        yield 1, fwd.sum(axis=1)
        for n in range(2, n_max + 1):
            g = fwd @ model.hidden_transition
            fwd = (g[:, None, :] * model.emission.T[None, :, :]).reshape(-1, model.hidden_states)
            yield n, fwd.sum(axis=1)
        return
    if isinstance(model, MixtureModel):
        if hidden_start is not None:
            raise ValueError("hidden_start applies to hidden-Markov models only")
        w = model.weight
        for (n, p1), (_, p2) in zip(level_probs(model.first, n_max, cap),
                                    level_probs(model.second, n_max, cap)):
            yield n, w * p1 + (1.0 - w) * p2
        return
    raise TypeError(f"unknown model type: {type(model)!r}")


def _entropy_of(level: np.ndarray) -> float:
    mask = level > 0
    p = level[mask]
    return float(-(p * np.log(p)).sum())


def marginal_entropy(model: ProcessModel, n: int, cap: int = DEFAULT_ENUM_CAP) -> float:
    """Exact Shannon entropy of the n-th marginal, by full enumeration (nats)."""
    for k, level in level_probs(model, n, cap):
        if k == n:
            return _entropy_of(level)
    raise AssertionError("unreachable")


def beta_sequence(model: ProcessModel, n_max: int, cap: int = DEFAULT_ENUM_CAP) -> np.ndarray:
    """Increments H(P_n) - H(P_{n-1}) for n = 1..n_max, with H(P_0) = 0.

    Non-increasing, and flat from n = m+1 on exactly for Markov sources of
    order <= m; the limit is the entropy rate.
    """
    entropies = [0.0]
    for _, level in level_probs(model, n_max, cap):
        entropies.append(_entropy_of(level))
    return np.diff(np.asarray(entropies))


def _markov_rate(model: MarkovModel) -> float:
    rows = model.transition
    mask = rows > 0
    contrib = np.where(mask, -rows * _safe_log(np.where(mask, rows, 1.0)), 0.0)
    return float(model.initial @ contrib.sum(axis=1))


def entropy_rate(model: ProcessModel, tol: float = 1e-5, n_cap: int = 22,
                 cap: int = DEFAULT_ENUM_CAP) -> EntropyBracket:
    """Entropy rate as an exact point or a sandwich bracket (nats per symbol).

    i.i.d. and Markov models have closed forms.  Hidden-Markov models are
    bracketed between the conditional entropy of the next symbol given the
    past with and without the initial hidden state, both computed by exact
    enumeration and widening n until the width drops below ``tol``; if the
    cap or ``n_cap`` is reached first, the widest achieved bracket is
    returned with ``converged=False``.  Mixtures return the hull of their
    component brackets (the per-realization rate is not constant).
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    if isinstance(model, IIDModel):
        h = _entropy_of(model.p)
        return EntropyBracket(h, h, n_used=1)
    if isinstance(model, MarkovModel):
        h = _markov_rate(model)
        return EntropyBracket(h, h, n_used=2)
    if isinstance(model, MixtureModel):
        return entropy_rate(model.first, tol, n_cap, cap).hull(
            entropy_rate(model.second, tol, n_cap, cap))
    if not isinstance(model, HiddenMarkovModel):
        raise TypeError(f"unknown model type: {type(model)!r}")

    a, S = model.alphabet_size, model.hidden_states
    n_max, atoms = 0, 1
    while n_max < n_cap and atoms * a <= cap:
        atoms *= a
        n_max += 1
    if n_max < 1:
        raise CapExceededError(f"cannot enumerate even one level of {a} atoms under cap {cap}")
    sweeps = [level_probs(model, n_max, cap)]
    for s in range(S):
        start = np.zeros(S)
        start[s] = 1.0
        sweeps.append(level_probs(model, n_max, cap, hidden_start=start))
    rho = model.hidden_initial
    prev_upper_h = 0.0
    prev_lower_h = np.zeros(S)
    lower, upper, n_used = 0.0, float(np.log(a)), 0
    for n in range(1, n_max + 1):
        levels = [next(sweep) for sweep in sweeps]
        upper_h = _entropy_of(levels[0][1])
        lower_h = np.array([_entropy_of(levels[1 + s][1]) for s in range(S)])
        upper_n = upper_h - prev_upper_h
        lower_n = float(rho @ (lower_h - prev_lower_h))
        prev_upper_h, prev_lower_h = upper_h, lower_h
        lower, upper = min(lower_n, upper_n), max(lower_n, upper_n)
        n_used = n
        if upper - lower <= tol:
            return EntropyBracket(lower, upper, n_used=n_used)
    return EntropyBracket(lower, upper, n_used=n_used, converged=False)


class DiscrepancyGap:
    """Result of ``discrepancy_gap``: the gap and the rate-bracket width used."""

    __slots__ = ("gap", "h_bracket")

    def __init__(self, gap: float, h_bracket: EntropyBracket):
        self.gap = gap
        self.h_bracket = h_bracket

    @property
    def bracket_width(self) -> float:
        return self.h_bracket.width

    def __repr__(self):
        return f"DiscrepancyGap(gap={self.gap!r}, bracket_width={self.bracket_width!r})"


def discrepancy_gap(model: ProcessModel, K: int, cap: int = DEFAULT_ENUM_CAP,
                    rate_tol: float = 1e-5, n_cap: int = 22) -> DiscrepancyGap:
    """H(P_K)/K - (2 H(P_{K/2})/K + h)/2, positive iff the two-limit split exists.

    Zero (up to the reported bracket width) exactly when the model is Markov
    of order <= K; strictly positive otherwise.
    """
    if K % 2 != 0 or K < 2:
        raise ValueError("K must be a positive even integer")
    h_k = marginal_entropy(model, K, cap)
    h_half = marginal_entropy(model, K // 2, cap)
    bracket = entropy_rate(model, tol=rate_tol, n_cap=n_cap, cap=cap)
    gap = h_k / K - 0.5 * (2.0 * h_half / K + bracket.mid)
    return DiscrepancyGap(gap=gap, h_bracket=bracket)


# ---------------------------------------------------------------------------
# Model files (JSON)
# ---------------------------------------------------------------------------


def model_to_dict(model: ProcessModel) -> dict:
    if isinstance(model, IIDModel):
        return {"alphabet_size": model.alphabet_size, "variant": "iid",
                "p": model.p.tolist()}
    if isinstance(model, MarkovModel):
        return {"alphabet_size": model.alphabet_size, "variant": "markov",
                "transition": model.transition.tolist(),
                "initial": model.initial.tolist()}
    if isinstance(model, HiddenMarkovModel):
        return {"alphabet_size": model.alphabet_size, "variant": "hidden_markov",
                "hidden_states": model.hidden_states,
                "hidden_transition": model.hidden_transition.tolist(),
                "hidden_initial": model.hidden_initial.tolist(),
                "emission": model.emission.tolist()}
    if isinstance(model, MixtureModel):
        return {"alphabet_size": model.alphabet_size, "variant": "mixture",
                "weight": model.weight,
                "components": [model_to_dict(model.first), model_to_dict(model.second)]}
    raise TypeError(f"unknown model type: {type(model)!r}")


_REQUIRED_KEYS = {
    "iid": {"alphabet_size", "variant", "p"},
    "markov": {"alphabet_size", "variant", "transition", "initial"},
    "hidden_markov": {"alphabet_size", "variant", "hidden_states",
                      "hidden_transition", "hidden_initial", "emission"},
    "mixture": {"alphabet_size", "variant", "weight", "components"},
}


def model_from_dict(d: dict, path: str = "$") -> ProcessModel:
    """Build a model from its dict form; unknown or missing keys are errors."""
    if not isinstance(d, dict):
        raise ModelFormatError(f"{path}: expected an object")
    variant = d.get("variant")
    if variant not in _REQUIRED_KEYS:
        raise ModelFormatError(f"{path}.variant: expected one of {sorted(_REQUIRED_KEYS)}, got {variant!r}")
    required = _REQUIRED_KEYS[variant]
    missing = required - set(d)
    if missing:
        raise ModelFormatError(f"{path}: missing keys {sorted(missing)}")
    unknown = set(d) - required
    if unknown:
        raise ModelFormatError(f"{path}: unknown keys {sorted(unknown)}")
    try:
        if variant == "iid":
            model: ProcessModel = IIDModel(p=d["p"])
        elif variant == "markov":
            model = MarkovModel(transition=d["transition"], initial=d["initial"])
        elif variant == "hidden_markov":
            model = HiddenMarkovModel(hidden_transition=d["hidden_transition"],
                                      hidden_initial=d["hidden_initial"],
                                      emission=d["emission"])
            if model.hidden_states != d["hidden_states"]:
                raise ModelFormatError(f"{path}.hidden_states: inconsistent with emission shape")
        else:
            comps = d["components"]
            if not isinstance(comps, list) or len(comps) != 2:
                raise ModelFormatError(f"{path}.components: expected a list of exactly 2 models")
            model = MixtureModel(weight=float(d["weight"]),
                                 first=model_from_dict(comps[0], path=f"{path}.components[0]"),
                                 second=model_from_dict(comps[1], path=f"{path}.components[1]"))
    except (ValueError, TypeError) as exc:
        raise ModelFormatError(f"{path}: malformed parameters ({exc})") from exc
    if model.alphabet_size != d["alphabet_size"]:
        raise ModelFormatError(f"{path}.alphabet_size: inconsistent with parameter shapes")
    if variant == "hidden_markov" and model.hidden_transition.shape[0] != model.emission.shape[0]:
        raise ModelFormatError(f"{path}: hidden_transition and emission disagree on state count")
    return model


def load_model(path) -> ProcessModel:
    """Read and validate a model JSON file; raises ModelFormatError on problems."""
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ModelFormatError(f"{path}: invalid JSON at line {exc.lineno}, column {exc.colno}") from exc
    except OSError as exc:
        raise ModelFormatError(f"{path}: {exc}") from exc
    model = model_from_dict(raw)
    report = validate_model(model)
    if not report.passed:
        rows = "; ".join(f"{c.name} (residual {c.residual:.3g}, bound {c.bound:.3g})"
                         for c in report.failures)
        raise ModelFormatError(f"{path}: model invariants violated: {rows}")
    return model


def save_model(model: ProcessModel, path) -> None:
    with open(path, "w") as fh:
        json.dump(model_to_dict(model), fh, indent=2, sort_keys=True)
        fh.write("\n")


# ---------------------------------------------------------------------------
# Bundled reference models
# ---------------------------------------------------------------------------


def reference_model(name: str) -> ProcessModel:
    """Reference sources used by the verification suites.

    - ``m1``: binary Markov chain with p(0->1)=0.3, p(1->0)=0.2, start (0.4, 0.6)
    - ``h1``: binary symmetric hidden-Markov source, hidden flip 0.1,
      emission fidelity 0.9
    - ``iid_uniform``: fair-coin product measure
    - ``mixture_m1_uniform``: equal-weight mixture of ``m1`` and ``iid_uniform``
    """
    if name == "m1":
        return MarkovModel(transition=[[0.7, 0.3], [0.2, 0.8]], initial=[0.4, 0.6])
    if name == "h1":
        return HiddenMarkovModel(hidden_transition=[[0.9, 0.1], [0.1, 0.9]],
                                 hidden_initial=[0.5, 0.5],
                                 emission=[[0.9, 0.1], [0.1, 0.9]])
    if name == "iid_uniform":
        return IIDModel(p=[0.5, 0.5])
    if name == "mixture_m1_uniform":
        return MixtureModel(weight=0.5, first=reference_model("m1"),
                            second=reference_model("iid_uniform"))
    raise ValueError(f"unknown reference model {name!r}")


REFERENCE_MODEL_NAMES = ("m1", "h1", "iid_uniform", "mixture_m1_uniform")
