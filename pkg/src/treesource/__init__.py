"""Random binary tree sources driven by split kernels.

A source draws a full binary tree of a given leaf count by recursively
splitting the leaf budget at each internal node according to a kernel
sigma(i, j).  The package computes exact height distributions and
exponential height moments by dynamic programming, samples trees
reproducibly, and verifies closed-form certificates that bound the
expected height for envelope-bounded and weakly balanced kernels.
"""

from .bounds import (
    BalanceCertificate,
    BoundReport,
    BoundRow,
    PhiFunction,
    Preset,
    PRESET_NAMES,
    UpperBoundCertificate,
    UpperBoundedParams,
    WeaklyBalancedParams,
    asymptotic_power_bound,
    balance_exponent,
    make_preset,
    phi_balance,
    psi_envelope,
    upper_bounded_certificate,
    verify_certificates,
    weakly_balanced_certificate,
)
from .heights import (
    ExpMoment,
    HeightCdf,
    MomentRecursionReport,
    ScanBudgetError,
    brute_expected_height,
    check_moment_recursion,
    exp_moment,
    exp_moment_grid,
    expected_height,
    expected_height_grid,
    height_cdf,
)
from .kernels import (
    BinomialKernel,
    BstKernel,
    KernelFormatError,
    KernelSpec,
    SplitKernel,
    TableKernel,
    UniformKernel,
    load_kernel_spec,
    make_kernel,
    render_kernel_spec,
    tree_probability,
    validate_kernel,
)
from .sampling import (
    SampleConfig,
    mc_expected_height,
    replicate_seed,
    sample_height,
    sample_tree,
    sample_uniform_remy,
)
from .trees import (
    LEAF,
    BinaryTree,
    count_trees,
    enumerate_trees,
    leaf,
    node,
    shape_bits,
    tree_from_shape_bits,
)

__version__ = "0.1.0"

__all__ = [
    "BinaryTree",
    "LEAF",
    "leaf",
    "node",
    "count_trees",
    "enumerate_trees",
    "shape_bits",
    "tree_from_shape_bits",
    "SplitKernel",
    "BstKernel",
    "UniformKernel",
    "BinomialKernel",
    "TableKernel",
    "KernelSpec",
    "KernelFormatError",
    "make_kernel",
    "validate_kernel",
    "tree_probability",
    "load_kernel_spec",
    "render_kernel_spec",
    "HeightCdf",
    "ExpMoment",
    "MomentRecursionReport",
    "ScanBudgetError",
    "height_cdf",
    "expected_height",
    "expected_height_grid",
    "exp_moment",
    "exp_moment_grid",
    "brute_expected_height",
    "check_moment_recursion",
    "SampleConfig",
    "replicate_seed",
    "sample_tree",
    "sample_height",
    "sample_uniform_remy",
    "mc_expected_height",
    "PhiFunction",
    "UpperBoundedParams",
    "WeaklyBalancedParams",
    "UpperBoundCertificate",
    "BalanceCertificate",
    "BoundRow",
    "BoundReport",
    "Preset",
    "PRESET_NAMES",
    "make_preset",
    "psi_envelope",
    "phi_balance",
    "balance_exponent",
    "asymptotic_power_bound",
    "upper_bounded_certificate",
    "weakly_balanced_certificate",
    "verify_certificates",
    "__version__",
]
