"""Split kernels: the probability law that drives a random tree source.

A kernel assigns to every size n >= 2 a distribution over root splits,
sigma(i, j) with i + j = n, meaning "the left subtree gets i of the n
leaves".  Rows must be nonnegative and sum to one.  The probability of a
whole tree is the product of sigma over its inner nodes.

Built-in kernels. With n = i + j:

  bst          sigma(i, j) = 1/(n - 1), the split law of binary search
               tree insertion under a random permutation
  uniform      sigma(i, j) = T_i * T_j / T_n where T_m counts trees of
               size m, so every shape of size n is equally likely
  binomial(p)  sigma(i, j) = C(n-2, i-1) p^(i-1) (1-p)^(j-1), the left
               subtree size is 1 + Binomial(n-2, p)
  table        explicit per-n rows with a built-in fallback elsewhere

Kernels are immutable and safe to share across threads: row caches are
filled under a lock and only ever read afterwards.
"""

from __future__ import annotations

import json
import math
import threading
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
from scipy.stats import binom as _binom

from .trees import BinaryTree, count_trees, inner_split_sizes

__all__ = [
    "SplitKernel",
    "BstKernel",
    "UniformKernel",
    "BinomialKernel",
    "TableKernel",
    "KernelSpec",
    "KernelFormatError",
    "ValidationReport",
    "make_kernel",
    "validate_kernel",
    "tree_probability",
    "load_kernel_spec",
    "render_kernel_spec",
    "PMF_CACHE_LIMIT",
]

PMF_CACHE_LIMIT = 4096

CLOSED_FORM_TOL = 1e-12
TABLE_TOL = 1e-9


class KernelFormatError(ValueError):
    """Raised for malformed or inconsistent kernel descriptions."""


def _check_pair(i: int, j: int) -> int:
    if i < 1 or j < 1:
        raise ValueError(f"split sides must be >= 1, got ({i}, {j})")
    return i + j


class SplitKernel:
    """Base class; concrete kernels implement _row and the scalar forms."""

    kind: str = "abstract"

    def __init__(self) -> None:
        self._rows: dict[int, np.ndarray] = {}
        self._cdfs: dict[int, list[float]] = {}
        self._lock = threading.Lock()

    # --- scalar interface -------------------------------------------------

    def sigma(self, i: int, j: int) -> float:
        """Probability of the root split (i, j) at size i + j."""
        raise NotImplementedError

    def sigma_exact(self, i: int, j: int) -> Fraction:
        """sigma(i, j) as an exact rational.

        For float-parameterized kernels the stored double is treated as the
        exact parameter value.
        """
        raise NotImplementedError

    # --- row interface ----------------------------------------------------

    def _row(self, n: int) -> np.ndarray:
        raise NotImplementedError

    def split_pmf(self, n: int) -> np.ndarray:
        """Raw split row at size n: entry k-1 holds sigma(k, n-k).

        Rows for n up to PMF_CACHE_LIMIT are memoized; cached arrays are
        read-only and shared, so callers must not mutate them.
        """
        if n < 2:
            raise ValueError(f"split rows exist for n >= 2, got {n}")
        if n > PMF_CACHE_LIMIT:
            return self._row(n)
        row = self._rows.get(n)
        if row is None:
            with self._lock:
                row = self._rows.get(n)
                if row is None:
                    row = self._row(n)
                    row.setflags(write=False)
                    self._rows[n] = row
        return row

    def split_cdf(self, n: int) -> list[float]:
        """Cumulative split row as a plain list, used by inverse-CDF sampling."""
        if n <= PMF_CACHE_LIMIT:
            cdf = self._cdfs.get(n)
            if cdf is not None:
                return cdf
        cdf = np.cumsum(self.split_pmf(n)).tolist()
        if n <= PMF_CACHE_LIMIT:
            with self._lock:
                self._cdfs.setdefault(n, cdf)
        return cdf

    def pmf_matrix(self, n: int) -> np.ndarray:
        """Dense (n+1) x (n+1) matrix W with W[m, k] = sigma(k, m-k)."""
        W = np.zeros((n + 1, n + 1))
        for m in range(2, n + 1):
            W[m, 1:m] = self.split_pmf(m)
        return W

    # --- description ------------------------------------------------------

    def spec(self) -> "KernelSpec":
        raise NotImplementedError

    def describe(self) -> str:
        return self.kind

    def __repr__(self) -> str:
        return f"{type(self).__name__}({self.describe()})"


class BstKernel(SplitKernel):
    """Uniform split position: sigma(i, j) = 1/(i + j - 1)."""

    kind = "bst"

    def sigma(self, i: int, j: int) -> float:
        n = _check_pair(i, j)
        return 1.0 / (n - 1)

    def sigma_exact(self, i: int, j: int) -> Fraction:
        n = _check_pair(i, j)
        return Fraction(1, n - 1)

    def _row(self, n: int) -> np.ndarray:
        return np.full(n - 1, 1.0 / (n - 1))

    def spec(self) -> "KernelSpec":
        return KernelSpec(kind="bst")


class UniformKernel(SplitKernel):
    """Catalan-weighted splits; induces the uniform law on tree shapes.

    Rows are exact big-integer ratios up to exact_limit leaves and switch
    to a cumulative log-count table beyond, which keeps every entry within
    a few ulp without overflowing.
    """

    kind = "uniform"

    def __init__(self, exact_limit: int = 30):
        super().__init__()
        self.exact_limit = exact_limit
        self._log_counts = np.zeros(2)
        self._log_lock = threading.Lock()

    def _log_count(self, upto: int) -> np.ndarray:
        # log T_m for m = 0..upto; T_m / T_{m-1} = (4m - 6) / m
        if len(self._log_counts) <= upto:
            with self._log_lock:
                if len(self._log_counts) <= upto:
                    hi = max(upto + 1, 2 * len(self._log_counts), 1024)
                    m = np.arange(hi, dtype=float)
                    inc = np.zeros(hi)
                    inc[2:] = np.log((4.0 * m[2:] - 6.0) / m[2:])
                    self._log_counts = np.cumsum(inc)
        return self._log_counts

    def sigma(self, i: int, j: int) -> float:
        n = _check_pair(i, j)
        if n <= self.exact_limit:
            return float(self.sigma_exact(i, j))
        lt = self._log_count(n)
        return float(math.exp(lt[i] + lt[j] - lt[n]))

    def sigma_exact(self, i: int, j: int) -> Fraction:
        n = _check_pair(i, j)
        return Fraction(count_trees(i) * count_trees(j), count_trees(n))

    def _row(self, n: int) -> np.ndarray:
        if n <= self.exact_limit:
            tn = count_trees(n)
            return np.array(
                [Fraction(count_trees(k) * count_trees(n - k), tn) for k in range(1, n)],
                dtype=float,
            )
        lt = self._log_count(n)
        k = np.arange(1, n)
        return np.exp(lt[k] + lt[n - k] - lt[n])

    def spec(self) -> "KernelSpec":
        return KernelSpec(kind="uniform")


class BinomialKernel(SplitKernel):
    """Left size is 1 + Binomial(n-2, p); p = 1/2 gives the most balanced rows."""

    kind = "binomial"

    def __init__(self, p: float):
        super().__init__()
        if not 0.0 < p < 1.0:
            raise ValueError(f"binomial parameter must lie in (0, 1), got {p}")
        self.p = float(p)

    def sigma(self, i: int, j: int) -> float:
        n = _check_pair(i, j)
        return float(_binom.pmf(i - 1, n - 2, self.p))

    def sigma_exact(self, i: int, j: int) -> Fraction:
        n = _check_pair(i, j)
        p = Fraction(self.p)
        return p ** (i - 1) * (1 - p) ** (j - 1) * math.comb(n - 2, i - 1)

    def _row(self, n: int) -> np.ndarray:
        return _binom.pmf(np.arange(n - 1), n - 2, self.p)

    def describe(self) -> str:
        return f"binomial(p={self.p!r})"

    def spec(self) -> "KernelSpec":
        return KernelSpec(kind="binomial", p=self.p)


class TableKernel(SplitKernel):
    """Explicit rows for listed sizes, delegating to a fallback kernel elsewhere.

    Rows are validated on construction: length n-1, nonnegative entries,
    sum within TABLE_TOL of one.
    """

    kind = "table"

    def __init__(self, rows: dict[int, "np.ndarray | list[float]"], fallback: SplitKernel):
        super().__init__()
        if isinstance(fallback, TableKernel):
            raise KernelFormatError("fallback must be a closed-form kernel")
        self.fallback = fallback
        self.rows: dict[int, np.ndarray] = {}
        for n, row in rows.items():
            arr = np.asarray(row, dtype=float)
            if n < 2:
                raise KernelFormatError(f"table rows need n >= 2, got n={n}")
            if arr.shape != (n - 1,):
                raise KernelFormatError(
                    f"row for n={n} must have {n - 1} entries, got {arr.shape[0]}"
                )
            if np.any(arr < 0) or not np.all(np.isfinite(arr)):
                raise KernelFormatError(f"row for n={n} has negative or non-finite entries")
            dev = abs(float(arr.sum()) - 1.0)
            if dev > TABLE_TOL:
                raise KernelFormatError(
                    f"row for n={n} sums to 1{dev:+.3e}, beyond tolerance {TABLE_TOL:g}"
                )
            arr.setflags(write=False)
            self.rows[n] = arr

    def sigma(self, i: int, j: int) -> float:
        n = _check_pair(i, j)
        row = self.rows.get(n)
        if row is not None:
            return float(row[i - 1])
        return self.fallback.sigma(i, j)

    def sigma_exact(self, i: int, j: int) -> Fraction:
        n = _check_pair(i, j)
        row = self.rows.get(n)
        if row is not None:
            return Fraction(float(row[i - 1]))
        return self.fallback.sigma_exact(i, j)

    def _row(self, n: int) -> np.ndarray:
        row = self.rows.get(n)
        if row is not None:
            return row
        return self.fallback.split_pmf(n)

    def describe(self) -> str:
        sizes = ",".join(str(n) for n in sorted(self.rows))
        return f"table(n={{{sizes}}}, fallback={self.fallback.describe()})"

    def spec(self) -> "KernelSpec":
        fb = self.fallback.spec()
        return KernelSpec(
            kind="table",
            rows={n: [float(x) for x in row] for n, row in self.rows.items()},
            fallback=fb.kind,
            fallback_p=fb.p,
        )


def make_kernel(kind: str, p: float | None = None) -> SplitKernel:
    """Construct a closed-form kernel by name."""
    if kind == "bst":
        return BstKernel()
    if kind == "uniform":
        return UniformKernel()
    if kind == "binomial":
        if p is None:
            raise KernelFormatError("binomial kernel needs a parameter p")
        return BinomialKernel(p)
    raise KernelFormatError(f"unknown kernel kind {kind!r}")


# --- whole-tree probability ------------------------------------------------


def tree_probability(kernel: SplitKernel, t: BinaryTree) -> tuple[float, float]:
    """Probability of a tree under a kernel, as (linear, natural log).

    The linear value is a running product and may underflow to 0 for deep
    trees; the log value stays finite unless some split has probability 0,
    in which case it is -inf.  Split weights are read from the cached rows,
    so batch evaluation over many trees stays cheap.
    """
    prob = 1.0
    logprob = 0.0
    for i, j in inner_split_sizes(t):
        s = float(kernel.split_pmf(i + j)[i - 1])
        prob *= s
        logprob += math.log(s) if s > 0.0 else -math.inf
    return prob, logprob


# --- validation --------------------------------------------------------------


@dataclass(frozen=True)
class ValidationReport:
    """Row-sum and nonnegativity audit of a kernel over sizes 2..n_max."""

    kernel: str
    n_max: int
    tol: float
    worst_deviation: float
    worst_n: int
    min_entry: float
    min_entry_n: int
    offenders: tuple[int, ...]

    @property
    def passed(self) -> bool:
        return not self.offenders

    def summary(self) -> str:
        if self.passed:
            return (
                f"{self.kernel}: rows 2..{self.n_max} normalized within {self.tol:g} "
                f"(worst {self.worst_deviation:.3e} at n={self.worst_n})"
            )
        head = ", ".join(str(n) for n in self.offenders[:8])
        more = "" if len(self.offenders) <= 8 else f" and {len(self.offenders) - 8} more"
        return (
            f"{self.kernel}: FAILED at n={{{head}{more}}}; "
            f"worst deviation {self.worst_deviation:.3e} at n={self.worst_n}, "
            f"tolerance {self.tol:g}"
        )


def default_tolerance(kernel: SplitKernel) -> float:
    return TABLE_TOL if kernel.kind == "table" else CLOSED_FORM_TOL


def validate_kernel(kernel: SplitKernel, n_max: int, tol: float | None = None) -> ValidationReport:
    """Check row sums and nonnegativity for all sizes 2..n_max."""
    if n_max < 2:
        raise ValueError(f"n_max must be >= 2, got {n_max}")
    if tol is None:
        tol = default_tolerance(kernel)
    worst_dev, worst_n = 0.0, 2
    min_entry, min_entry_n = math.inf, 2
    offenders = []
    for n in range(2, n_max + 1):
        row = kernel.split_pmf(n)
        dev = abs(float(row.sum()) - 1.0)
        lo = float(row.min())
        if dev > worst_dev:
            worst_dev, worst_n = dev, n
        if lo < min_entry:
            min_entry, min_entry_n = lo, n
        if dev > tol or lo < 0.0:
            offenders.append(n)
    return ValidationReport(
        kernel=kernel.describe(),
        n_max=n_max,
        tol=tol,
        worst_deviation=worst_dev,
        worst_n=worst_n,
        min_entry=min_entry,
        min_entry_n=min_entry_n,
        offenders=tuple(offenders),
    )


# --- serialized kernel descriptions ------------------------------------------
#
# A kernel description is a single JSON object:
#
#   {"kind": "bst"}
#   {"kind": "uniform"}
#   {"kind": "binomial", "p": 0.3}
#   {"kind": "table",
#    "rows": {"4": [0.25, 0.5, 0.25]},
#    "fallback": "binomial", "fallback_p": 0.5}
#
# "p" is required exactly when kind is binomial; table rows map the decimal
# size to n-1 nonnegative numbers summing to 1 within 1e-9; "fallback" names
# a closed-form kind and "fallback_p" is required exactly when the fallback
# is binomial.  Unknown fields are rejected.

_CLOSED_KINDS = ("bst", "uniform", "binomial")


@dataclass(frozen=True)
class KernelSpec:
    """Parsed form of the JSON kernel description; round-trips exactly."""

    kind: str
    p: float | None = None
    rows: dict[int, list[float]] | None = field(default=None)
    fallback: str | None = None
    fallback_p: float | None = None

    @staticmethod
    def parse(text: str) -> "KernelSpec":
        try:
            obj = json.loads(text)
        except json.JSONDecodeError as exc:
            raise KernelFormatError(f"not valid JSON: {exc}") from exc
        if not isinstance(obj, dict):
            raise KernelFormatError("kernel description must be a JSON object")
        kind = obj.get("kind")
        if kind not in _CLOSED_KINDS + ("table",):
            raise KernelFormatError(f"unknown kernel kind {kind!r}")
        allowed = {"kind"}
        if kind == "binomial":
            allowed.add("p")
        if kind == "table":
            allowed |= {"rows", "fallback", "fallback_p"}
        extra = set(obj) - allowed
        if extra:
            raise KernelFormatError(f"unexpected fields for kind {kind!r}: {sorted(extra)}")

        p = None
        if kind == "binomial":
            p = _parse_p(obj, "p")
        rows = None
        fallback = None
        fallback_p = None
        if kind == "table":
            raw = obj.get("rows")
            if not isinstance(raw, dict) or not raw:
                raise KernelFormatError("table kernel needs a nonempty 'rows' object")
            rows = {}
            for key, val in raw.items():
                if not isinstance(key, str) or not key.isdigit():
                    raise KernelFormatError(f"row key must be a decimal size string, got {key!r}")
                n = int(key)
                if not isinstance(val, list) or not all(
                    isinstance(x, (int, float)) and not isinstance(x, bool) for x in val
                ):
                    raise KernelFormatError(f"row for n={n} must be an array of numbers")
                rows[n] = [float(x) for x in val]
            fallback = obj.get("fallback")
            if fallback not in _CLOSED_KINDS:
                raise KernelFormatError(
                    f"table fallback must be one of {list(_CLOSED_KINDS)}, got {fallback!r}"
                )
            if fallback == "binomial":
                fallback_p = _parse_p(obj, "fallback_p")
            elif "fallback_p" in obj:
                raise KernelFormatError("fallback_p only applies to a binomial fallback")
        return KernelSpec(kind=kind, p=p, rows=rows, fallback=fallback, fallback_p=fallback_p)

    def render(self) -> str:
        obj: dict = {"kind": self.kind}
        if self.kind == "binomial":
            obj["p"] = self.p
        if self.kind == "table":
            assert self.rows is not None
            obj["rows"] = {str(n): self.rows[n] for n in sorted(self.rows)}
            obj["fallback"] = self.fallback
            if self.fallback == "binomial":
                obj["fallback_p"] = self.fallback_p
        return json.dumps(obj, sort_keys=True)

    def build(self) -> SplitKernel:
        if self.kind == "table":
            assert self.rows is not None and self.fallback is not None
            try:
                fb = make_kernel(self.fallback, self.fallback_p)
                return TableKernel({n: row for n, row in self.rows.items()}, fb)
            except KernelFormatError:
                raise
            except ValueError as exc:
                raise KernelFormatError(str(exc)) from exc
        try:
            return make_kernel(self.kind, self.p)
        except ValueError as exc:
            raise KernelFormatError(str(exc)) from exc


def _parse_p(obj: dict, key: str) -> float:
    val = obj.get(key)
    if not isinstance(val, (int, float)) or isinstance(val, bool):
        raise KernelFormatError(f"'{key}' must be a number in (0, 1)")
    val = float(val)
    if not 0.0 < val < 1.0:
        raise KernelFormatError(f"'{key}' must lie strictly in (0, 1), got {val}")
    return val


def load_kernel_spec(text: str) -> SplitKernel:
    """Parse a JSON kernel description and build the kernel."""
    return KernelSpec.parse(text).build()


def render_kernel_spec(kernel: SplitKernel) -> str:
    """Serialize a kernel back to its JSON description."""
    return kernel.spec().render()
