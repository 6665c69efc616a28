"""Seeded random generation of trees from a split kernel.

A sample is grown top-down: starting from the full leaf budget, each
pending block of m leaves either becomes a leaf (m = 1) or draws a left
share k from the size-m split row and splits into blocks of k and m - k.
Expansion uses an explicit work stack in pre-order, so comb-like trees of
any size cannot overflow the interpreter stack.

Reproducibility contract: a sample is a pure function of (kernel, size,
seed) for a fixed build of this package.  Replicate r of a Monte Carlo run
draws its own generator from mix64(master_seed, r), so estimates do not
depend on chunking or thread count.  Bit-identical output across numpy
versions is not promised.
"""

from __future__ import annotations

import os
from bisect import bisect_right
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .kernels import BinomialKernel, BstKernel, SplitKernel
from .trees import LEAF, BinaryTree, node, tree_from_shape_bits

__all__ = [
    "SampleConfig",
    "THREADS_ENV_VAR",
    "default_threads",
    "mix64",
    "replicate_seed",
    "sample_tree",
    "sample_height",
    "sample_uniform_remy",
    "mc_expected_height",
]

THREADS_ENV_VAR = "TREESOURCE_THREADS"

_STRATEGIES = ("auto", "cdf", "specialized")

_GOLDEN64 = 0x9E3779B97F4A7C15
_MASK64 = (1 << 64) - 1


def mix64(x: int) -> int:
    """splitmix64 finalizer: avalanching 64-bit mixer, stated for auditability."""
    z = x & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def replicate_seed(master_seed: int, replicate: int) -> int:
    """Derived seed for one replicate; unordered in r by construction."""
    return mix64(master_seed + (replicate + 1) * _GOLDEN64)


def default_threads() -> int:
    """Worker count: the documented environment override, else the CPU count."""
    raw = os.environ.get(THREADS_ENV_VAR)
    if raw is not None:
        try:
            return max(1, int(raw))
        except ValueError:
            raise ValueError(f"{THREADS_ENV_VAR} must be an integer, got {raw!r}") from None
    return os.cpu_count() or 1


@dataclass(frozen=True)
class SampleConfig:
    """One Monte Carlo run: size, replicate count, master seed, split strategy."""

    n: int
    replicates: int = 10_000
    seed: int = 0
    strategy: str = "auto"

    def __post_init__(self) -> None:
        if self.n < 1:
            raise ValueError(f"need n >= 1, got {self.n}")
        if self.replicates < 1:
            raise ValueError(f"need replicates >= 1, got {self.replicates}")
        if self.strategy not in _STRATEGIES:
            raise ValueError(f"strategy must be one of {_STRATEGIES}, got {self.strategy!r}")


def _rng(seed: "int | np.random.Generator") -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def _split_drawer(
    kernel: SplitKernel, rng: np.random.Generator, strategy: str
) -> Callable[[int], int]:
    """Pick the draw function k = draw(m) for the left share at block size m."""
    if strategy not in _STRATEGIES:
        raise ValueError(f"strategy must be one of {_STRATEGIES}, got {strategy!r}")
    if strategy != "cdf":
        if isinstance(kernel, BstKernel):
            return lambda m: int(rng.integers(1, m))
        if isinstance(kernel, BinomialKernel):
            p = kernel.p
            return lambda m: 1 + int(rng.binomial(m - 2, p))
        if strategy == "specialized":
            raise ValueError(f"no specialized sampler for kernel kind {kernel.kind!r}")

    def draw(m: int) -> int:
        cdf = kernel.split_cdf(m)
        # clamp: cumulative row can fall a few ulp short of 1
        return min(bisect_right(cdf, rng.random()) + 1, m - 1)

    return draw


def _preorder_bits(
    kernel: SplitKernel, n: int, rng: np.random.Generator, strategy: str
) -> list[str]:
    """Expand n leaves to pre-order shape bits, drawing one split per inner node."""
    if n < 1:
        raise ValueError(f"need n >= 1, got {n}")
    draw = _split_drawer(kernel, rng, strategy)
    bits = []
    stack = [n]
    while stack:
        m = stack.pop()
        if m == 1:
            bits.append("0")
        else:
            bits.append("1")
            k = draw(m)
            stack.append(m - k)
            stack.append(k)
    return bits


def sample_tree(
    kernel: SplitKernel, n: int, seed: "int | np.random.Generator", strategy: str = "auto"
) -> BinaryTree:
    """Draw one size-n tree from the kernel's distribution."""
    return tree_from_shape_bits("".join(_preorder_bits(kernel, n, _rng(seed), strategy)))


def sample_height(
    kernel: SplitKernel, n: int, seed: "int | np.random.Generator", strategy: str = "auto"
) -> int:
    """Height of sample_tree(kernel, n, seed) without materializing the tree.

    Consumes random draws in exactly the same order as sample_tree, so the
    two agree for equal seeds.
    """
    rng = _rng(seed)
    if n < 1:
        raise ValueError(f"need n >= 1, got {n}")
    draw = _split_drawer(kernel, rng, strategy)
    height = 0
    stack = [(n, 0)]
    while stack:
        m, depth = stack.pop()
        if m == 1:
            if depth > height:
                height = depth
        else:
            k = draw(m)
            stack.append((m - k, depth + 1))
            stack.append((k, depth + 1))
    return height


def sample_uniform_remy(n: int, seed: "int | np.random.Generator") -> BinaryTree:
    """Uniform tree on n leaves by random growth, independent of any kernel.

    Grows one leaf at a time: an edge (or the root) is chosen uniformly
    among all 2m - 1 nodes and a new inner node is spliced in there, with
    the new leaf put on a uniformly random side.  Each of the m steps is
    uniform, which makes the final shape uniform; this serves as an oracle
    for the Catalan-weighted kernel's sampler.
    """
    if n < 1:
        raise ValueError(f"need n >= 1, got {n}")
    rng = _rng(seed)
    # flat arrays; child < 0 marks a leaf
    left = [-1]
    right = [-1]
    parent = [-1]
    root = 0
    for m in range(1, n):
        pick = int(rng.integers(0, 2 * m - 1))
        side = int(rng.integers(0, 2))
        inner = len(left)
        new_leaf = inner + 1
        par = parent[pick]
        children = (pick, new_leaf) if side == 0 else (new_leaf, pick)
        left.extend([children[0], -1])
        right.extend([children[1], -1])
        parent.extend([par, inner])
        parent[pick] = inner
        if par < 0:
            root = inner
        elif left[par] == pick:
            left[par] = inner
        else:
            right[par] = inner
    if n == 1:
        return LEAF
    # fold bottom-up from reversed pre-order
    order = []
    stack = [root]
    while stack:
        v = stack.pop()
        order.append(v)
        if left[v] >= 0:
            stack.append(right[v])
            stack.append(left[v])
    built: list[BinaryTree] = []
    for v in reversed(order):
        if left[v] < 0:
            built.append(LEAF)
        else:
            built.append(node(built.pop(), built.pop()))
    return built[0]


def mc_expected_height(
    kernel: SplitKernel,
    n: int,
    replicates: int,
    seed: int = 0,
    strategy: str = "auto",
    threads: "int | None" = None,
) -> tuple[float, float]:
    """Monte Carlo mean and standard error of the height at size n.

    Replicate r is driven by replicate_seed(seed, r), so the estimate is
    invariant under the thread count used to compute it.
    """
    if replicates < 2:
        raise ValueError(f"need replicates >= 2 for a standard error, got {replicates}")
    heights = np.empty(replicates)

    def fill(lo: int, hi: int) -> None:
        for r in range(lo, hi):
            heights[r] = sample_height(kernel, n, replicate_seed(seed, r), strategy)

    workers = default_threads() if threads is None else max(1, threads)
    workers = min(workers, replicates)
    if workers == 1:
        fill(0, replicates)
    else:
        step = -(-replicates // workers)
        spans = [(lo, min(lo + step, replicates)) for lo in range(0, replicates, step)]
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(lambda span: fill(*span), spans))
    mean = float(heights.mean())
    stderr = float(heights.std(ddof=1) / np.sqrt(replicates))
    return mean, stderr
