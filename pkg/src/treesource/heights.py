"""Exact height distributions for kernel-driven tree sources.

Everything here runs on one engine: a layered scan over survival vectors
S_h[m] = P(height of a random size-m tree > h).  Conditioning on the root
split and using independence of the subtrees,

    S_{h+1}[m] = sum_k sigma(k, m-k) * (S_h[k] + S_h[m-k] - S_h[k] * S_h[m-k])

which vectorizes to two matrix products per layer.  Working with survivals
instead of CDF differences matters: expected height is a plain sum of
survivals, and exponential moments become E(b^H) = 1 + (b-1) * sum_h b^h S_h,
so deep tails are never formed by subtracting nearly equal doubles and then
amplified by b^h.

Moment accumulation runs in log space throughout; values that would overflow
a double are still returned as finite logs.

A scan is sequential in h by data dependence.  Scans for different kernels
or sizes are independent and may run in parallel; results are immutable.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterator, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.special import logsumexp

from .kernels import SplitKernel
from .trees import enumerate_trees, inner_split_sizes

__all__ = [
    "DEFAULT_TAIL_TOL",
    "DEFAULT_MEM_BUDGET",
    "ScanBudgetError",
    "HeightCdf",
    "ExpMoment",
    "MomentRecursionReport",
    "survival_layers",
    "height_cdf",
    "expected_height",
    "expected_height_grid",
    "exp_moment",
    "exp_moment_grid",
    "brute_expected_height",
    "check_moment_recursion",
]

DEFAULT_TAIL_TOL = 1e-12
DEFAULT_MEM_BUDGET = 512 << 20

BRUTE_FORCE_LIMIT = 12

_MAX_LOG = math.log(np.finfo(float).max)


class ScanBudgetError(MemoryError):
    """A scan would allocate more than the configured memory budget."""


def _split_matrices(kernel: SplitKernel, n: int) -> tuple[np.ndarray, np.ndarray]:
    W = kernel.pmf_matrix(n)
    Wr = np.zeros_like(W)
    for m in range(2, n + 1):
        Wr[m, 1:m] = W[m, m - 1:0:-1]
    return W, W + Wr


def survival_layers(
    kernel: SplitKernel, n: int, mem_budget: int = DEFAULT_MEM_BUDGET
) -> Iterator[tuple[int, np.ndarray]]:
    """Yield (h, S) for h = 0, 1, ... where S[m] = P(H_m > h), m = 0..n.

    Each yielded vector is freshly allocated and safe to keep.  The scan
    ends after h = n-1, by which point S is identically zero.
    """
    if n < 1:
        raise ValueError(f"need n >= 1, got {n}")
    # three dense (n+1)^2 matrices dominate the footprint
    need = 3 * 8 * (n + 1) ** 2
    if need > mem_budget:
        raise ScanBudgetError(
            f"scan at n={n} needs ~{need >> 20} MiB for split matrices, "
            f"budget is {mem_budget >> 20} MiB"
        )
    W, Wsum = _split_matrices(kernel, n)
    WT = np.empty_like(W)
    S = np.ones(n + 1)
    S[0] = 0.0
    pad = np.zeros(2 * n + 1)
    h = 0
    while True:
        # T[m, k] = S[m-k] (0 when k > m), read off a zero-padded window view
        pad[n:] = S
        T = sliding_window_view(pad, n + 1)[: n + 1, ::-1]
        np.multiply(W, T, out=WT)
        S = Wsum @ S - WT @ S
        # a tree on m leaves has height <= m-1, so these entries are exactly 0
        S[: min(h + 2, n + 1)] = 0.0
        np.clip(S, 0.0, 1.0, out=S)
        # and height >= log2(m), so survival is exactly 1 while m > 2^h
        if h < 62 and (1 << h) < n:
            S[(1 << h) + 1 :] = 1.0
        yield h, S
        if h >= n - 1:
            return
        h += 1


@dataclass(frozen=True)
class HeightCdf:
    """Height distribution of one tree size, truncated at h_cut.

    values[h] = P(H_n <= h) and survivals[h] = 1 - values[h] for
    0 <= h <= h_cut, where h_cut is the first layer whose survival
    dropped to tail_tol or below (always <= n-1).
    """

    n: int
    values: np.ndarray
    survivals: np.ndarray
    tail_tol: float

    @property
    def h_cut(self) -> int:
        return len(self.values) - 1

    @property
    def tail_mass(self) -> float:
        return float(self.survivals[-1])

    def expected_height(self) -> float:
        """Sum of survivals up to the truncation point."""
        return float(self.survivals.sum())

    def truncation_error(self) -> float:
        """Upper bound on the expected-height mass beyond h_cut."""
        return max(0.0, self.tail_mass * (self.n - 1 - self.h_cut))


def height_cdf(
    kernel: SplitKernel,
    n: int,
    tail_tol: float = DEFAULT_TAIL_TOL,
    mem_budget: int = DEFAULT_MEM_BUDGET,
) -> HeightCdf:
    """Height CDF of size n under a kernel.

    Stops at the first h with survival <= tail_tol; tail_tol = 0 runs the
    recurrence until the survival is exactly zero (h = n-1 at the latest).
    """
    if tail_tol < 0:
        raise ValueError(f"tail_tol must be >= 0, got {tail_tol}")
    surv = []
    for h, S in survival_layers(kernel, n, mem_budget):
        s = float(S[n])
        surv.append(s)
        if s <= tail_tol:
            break
    survivals = np.array(surv)
    values = 1.0 - survivals
    survivals.setflags(write=False)
    values.setflags(write=False)
    return HeightCdf(n=n, values=values, survivals=survivals, tail_tol=tail_tol)


def expected_height(
    kernel: SplitKernel,
    n: int,
    tail_tol: float = DEFAULT_TAIL_TOL,
    mem_budget: int = DEFAULT_MEM_BUDGET,
) -> float:
    """E(H_n) as the truncated sum of survivals."""
    return height_cdf(kernel, n, tail_tol, mem_budget).expected_height()


def expected_height_grid(
    kernel: SplitKernel,
    n_max: int,
    tail_tol: float = DEFAULT_TAIL_TOL,
    mem_budget: int = DEFAULT_MEM_BUDGET,
) -> np.ndarray:
    """E(H_m) for every size m = 0..n_max in a single scan.

    Each size stops accumulating at its own truncation layer, so entry m
    agrees with expected_height(kernel, m, tail_tol) up to the rounding
    difference between a size-m scan and this shared size-n_max scan.
    """
    if tail_tol < 0:
        raise ValueError(f"tail_tol must be >= 0, got {tail_tol}")
    E = np.zeros(n_max + 1)
    active = np.ones(n_max + 1, dtype=bool)
    active[:2] = False
    for h, S in survival_layers(kernel, n_max, mem_budget):
        E[active] += S[active]
        active &= S > tail_tol
        if not active.any():
            break
    return E


@dataclass(frozen=True)
class ExpMoment:
    """E(base^H_n), carried as a log so huge moments stay representable."""

    n: int
    base: float
    log_value: float
    h_cut: int
    tail_tol: float

    @property
    def overflowed(self) -> bool:
        return self.log_value > _MAX_LOG

    @property
    def value(self) -> float:
        return math.inf if self.overflowed else math.exp(self.log_value)

    def __float__(self) -> float:
        return self.value


def exp_moment_grid(
    kernel: SplitKernel,
    n_max: int,
    bases: "float | Sequence[float] | np.ndarray",
    tail_tol: float = DEFAULT_TAIL_TOL,
    mem_budget: int = DEFAULT_MEM_BUDGET,
) -> tuple[np.ndarray, np.ndarray]:
    """log E(bases[m]^H_m) for every size m = 0..n_max in one scan.

    bases may be a scalar or a per-size array with entries >= 1 (entries
    for sizes 0 and 1 are ignored; those moments are identically 1).
    Returns (log_moments, stop_layers).  Size m stops once its remaining
    tail, bounded by bases[m]^(m-1) * S_h[m], is at most tail_tol times
    the moment accumulated so far.
    """
    if tail_tol < 0:
        raise ValueError(f"tail_tol must be >= 0, got {tail_tol}")
    b = np.broadcast_to(np.asarray(bases, dtype=float), (n_max + 1,)).copy()
    b[:2] = 1.0
    if np.any(b < 1.0) or not np.all(np.isfinite(b)):
        raise ValueError("moment bases must be finite and >= 1")
    lb = np.log(b)
    with np.errstate(divide="ignore"):
        lbm1 = np.log(b - 1.0)
    log_tol = math.log(tail_tol) if tail_tol > 0 else -math.inf

    sizes = np.arange(n_max + 1)
    acc = np.full(n_max + 1, -np.inf)  # log sum of b^h * S_h
    stop = np.zeros(n_max + 1, dtype=int)
    active = np.ones(n_max + 1, dtype=bool)
    active[:2] = False
    for h, S in survival_layers(kernel, n_max, mem_budget):
        with np.errstate(divide="ignore"):
            lnS = np.log(S)
        acc[active] = np.logaddexp(acc[active], h * lb[active] + lnS[active])
        log_moment = np.logaddexp(0.0, lbm1 + acc)
        done = active & ((sizes - 1) * lb + lnS <= log_tol + log_moment)
        stop[done] = h
        active &= ~done
        if not active.any():
            break
    return np.logaddexp(0.0, lbm1 + acc), stop


def exp_moment(
    kernel: SplitKernel,
    n: int,
    base: float,
    tail_tol: float = DEFAULT_TAIL_TOL,
    mem_budget: int = DEFAULT_MEM_BUDGET,
) -> ExpMoment:
    """E(base^H_n) for base > 1, in log form."""
    if not base > 1.0:
        raise ValueError(f"moment base must be > 1, got {base}")
    logs, stops = exp_moment_grid(kernel, max(n, 1), base, tail_tol, mem_budget)
    return ExpMoment(
        n=n, base=base, log_value=float(logs[n]), h_cut=int(stops[n]), tail_tol=tail_tol
    )


def brute_expected_height(kernel: SplitKernel, n: int) -> Fraction:
    """E(H_n) by exhaustive enumeration, in exact rational arithmetic.

    Kernels with float parameters contribute the exact rational value of
    each stored double, so the result is reproducible to the bit.  Guarded
    at n <= 12 where enumeration is still cheap.
    """
    if not 1 <= n <= BRUTE_FORCE_LIMIT:
        raise ValueError(f"brute force is limited to 1 <= n <= {BRUTE_FORCE_LIMIT}, got {n}")
    total = Fraction(0)
    for t in enumerate_trees(n):
        p = Fraction(1)
        for i, j in inner_split_sizes(t):
            p *= kernel.sigma_exact(i, j)
        total += p * t.height
    return total


@dataclass(frozen=True)
class MomentRecursionReport:
    """Per-size slack of the subtree moment recursion.

    For each size n, lhs_log[i] = log E(phi_n^H_n) and rhs_log[i] is the
    log of phi_n * sum_k sigma(k, n-k) * (E(phi_k^H_k) + E(phi_{n-k}^H_{n-k})).
    Slack is taken on the log scale: near phi = e the two sides agree to
    enormous relative precision and a linear difference would be pure
    rounding noise.
    """

    ns: np.ndarray
    phi: np.ndarray
    lhs_log: np.ndarray
    rhs_log: np.ndarray
    slack_floor: float

    @property
    def slack(self) -> np.ndarray:
        return self.rhs_log - self.lhs_log

    @property
    def min_slack(self) -> float:
        return float(self.slack.min())

    @property
    def worst_n(self) -> int:
        return int(self.ns[int(np.argmin(self.slack))])

    @property
    def passed(self) -> bool:
        return bool(np.all(self.slack >= self.slack_floor))

    def summary(self) -> str:
        verdict = "holds" if self.passed else "VIOLATED"
        return (
            f"moment recursion {verdict} for n=2..{self.ns[-1]}: "
            f"min log-slack {self.min_slack:.3e} at n={self.worst_n} "
            f"(floor {self.slack_floor:g})"
        )


def check_moment_recursion(
    kernel: SplitKernel,
    n_max: int,
    phi: "Sequence[float] | np.ndarray",
    slack_floor: float = -1e-9,
    tail_tol: float = 0.0,
    mem_budget: int = DEFAULT_MEM_BUDGET,
) -> MomentRecursionReport:
    """Check E(phi_n^H_n) <= phi_n * sum_k sigma(k,n-k) (E(phi_k^H_k) + E(phi_{n-k}^H_{n-k})).

    phi is indexed by size (entry 0 unused) and must be nonincreasing with
    every entry > 1 over sizes 1..n_max.  Both sides are evaluated from one
    per-size moment scan; the default tail_tol of 0 runs scans untruncated.
    """
    phi = np.asarray(phi, dtype=float)
    if phi.shape != (n_max + 1,):
        raise ValueError(f"phi must have one entry per size 0..{n_max}")
    if np.any(phi[1:] <= 1.0):
        raise ValueError("phi entries must all be > 1")
    if np.any(np.diff(phi[1:]) > 0):
        raise ValueError("phi must be nonincreasing in size")

    log_m, _ = exp_moment_grid(kernel, n_max, phi, tail_tol, mem_budget)
    ns = np.arange(2, n_max + 1)
    lhs = log_m[2:]
    rhs = np.empty_like(lhs)
    for i, n in enumerate(ns):
        k = np.arange(1, n)
        with np.errstate(divide="ignore"):
            log_row = np.log(kernel.split_pmf(n))
        rhs[i] = math.log(phi[n]) + logsumexp(
            log_row + np.logaddexp(log_m[k], log_m[n - k])
        )
    return MomentRecursionReport(
        ns=ns, phi=phi, lhs_log=lhs, rhs_log=rhs, slack_floor=slack_floor
    )
