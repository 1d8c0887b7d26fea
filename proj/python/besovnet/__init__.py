"""Explicit ReLU constructions on synthetic manifolds."""

from ._core import (
    Manifold,
    Network,
    Target,
    build,
    build_classifier,
    covering_bound,
    fit_bspline,
    load_network,
    run_suite,
    suite_names,
)

__all__ = [
    "Manifold",
    "Network",
    "Target",
    "build",
    "build_classifier",
    "covering_bound",
    "fit_bspline",
    "load_network",
    "run_suite",
    "suite_names",
]
