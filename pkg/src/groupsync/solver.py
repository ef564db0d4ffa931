"""Spectral initialisation and the generalized power method (GPM)."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from .blocklin import blockmatvec, top_eigenvectors
from .groups import CYCLIC, SPECIAL_ORTHOGONAL, GroupSpec, cyclic_index, project
from .model import Instance


@dataclass(frozen=True)
class SolveConfig:
    max_iters: int = 200
    tol: float = 1e-10
    record_trace: bool = True

    def __post_init__(self):
        if int(self.max_iters) < 1:
            raise ValueError(f"max_iters must be >= 1, got {self.max_iters}")
        if not float(self.tol) > 0:
            raise ValueError(f"tol must be > 0, got {self.tol}")


@dataclass
class SolveTrace:
    """Per-iterate record of a GPM run; index ``t`` refers to ``G^t``.

    ``step_norm[t]`` is ``||G^t - G^{t-1}||_F / sqrt(n)`` (NaN at ``t = 0``).
    ``epsilon`` and ``alignment`` (``G*^T G^t``) are only filled when the
    instance carries ground truth.
    """

    epsilon: List[float] = field(default_factory=list)
    objective: List[float] = field(default_factory=list)
    step_norm: List[float] = field(default_factory=list)
    alignment: List[np.ndarray] = field(default_factory=list)
    final_Q: Optional[np.ndarray] = None
    iterations: int = 0
    converged: bool = False
    degenerate_projections: int = 0

    def rows(self):
        for t in range(len(self.objective)):
            eps = self.epsilon[t] if t < len(self.epsilon) else None
            yield t, eps, self.objective[t], self.step_norm[t]

    def write_csv(self, path) -> None:
        def fmt(x):
            return "" if x is None or (isinstance(x, float) and np.isnan(x)) else repr(float(x))

        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["iter", "epsilon", "objective", "step_norm"])
            for t, eps, obj, step in self.rows():
                writer.writerow([t, fmt(eps), fmt(obj), fmt(step)])


def block_project_all(spec: GroupSpec, Y) -> np.ndarray:
    """Project every ``d x d`` block of an ``(n, d, d)`` block column onto the group."""
    return project(spec, Y)


def count_degenerate(spec: GroupSpec, Y) -> int:
    """Blocks whose projection is not well defined (cyclic zero-angle inputs)."""
    if spec.kind != CYCLIC:
        return 0
    return int(np.count_nonzero(cyclic_index(Y, spec.m)[1]))


def spectral_estimator(instance: Instance) -> np.ndarray:
    """Block-wise projection of the top-``d`` eigenvectors of the data matrix.

    Eigenvectors are defined only up to a right ``O(d)`` factor. For groups
    inside SO(d) the last column is flipped when the blocks are mostly
    reflections, since a pure reflection carries no information for the
    cyclic projection.
    """
    spec, n, d = instance.spec, instance.n, instance.d
    _, V = top_eigenvectors(instance.C, d)
    V = V.reshape(n, d, d)
    if spec.kind in (SPECIAL_ORTHOGONAL, CYCLIC) and np.sum(np.linalg.det(V)) < 0:
        V[:, :, -1] *= -1.0
    return block_project_all(spec, V)


def _alignment_error(spec: GroupSpec, G: np.ndarray, Gstar: np.ndarray):
    A = np.einsum("nji,njk->ik", Gstar, G)
    Q = project(spec, A)
    return A, Q, float(np.linalg.norm(G - Gstar @ Q))


def gpm(instance: Instance, G0, cfg: SolveConfig = SolveConfig()):
    """Generalized power method ``G^{t+1} = Pi^n(C G^t)``.

    Runs until ``||G^{t+1} - G^t||_F / sqrt(n) <= cfg.tol`` or
    ``cfg.max_iters`` iterations.

    Returns
    -------
    G : ndarray, shape (n, d, d)
        Final iterate; every block is a group element.
    trace : SolveTrace
    """
    spec, C, n = instance.spec, instance.C, instance.n
    Gstar = instance.ground_truth
    G = np.array(G0, dtype=float).reshape(n, instance.d, instance.d)
    trace = SolveTrace()
    record = cfg.record_trace

    def note(G, step):
        if not record:
            return
        trace.step_norm.append(step)
        if Gstar is not None:
            A, Q, eps = _alignment_error(spec, G, Gstar)
            trace.alignment.append(A)
            trace.epsilon.append(eps)
            trace.final_Q = Q

    note(G, float("nan"))
    CG = blockmatvec(C, G)
    for t in range(cfg.max_iters):
        if record:
            trace.objective.append(float(np.sum(G * CG)))
        trace.degenerate_projections += count_degenerate(spec, CG)
        G_next = block_project_all(spec, CG)
        step = float(np.linalg.norm(G_next - G)) / np.sqrt(n)
        G = G_next
        trace.iterations = t + 1
        note(G, step)
        CG = blockmatvec(C, G)
        if step <= cfg.tol:
            trace.converged = True
            break
    if record:
        trace.objective.append(float(np.sum(G * CG)))
    return G, trace


def solve(instance: Instance, cfg: SolveConfig = SolveConfig()):
    """Spectral initialisation followed by GPM; returns ``(G, trace, G0)``."""
    G0 = spectral_estimator(instance)
    G, trace = gpm(instance, G0, cfg)
    return G, trace, G0
