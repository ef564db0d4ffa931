"""Error metrics and run-time checks of the GPM convergence theorem.

The theorem guarantees, for GPM iterates with ``t >= 1``,

    eps(G^t) <= (5/8)^(t+1) eps(G^0) + (16/3) ||D^-1 Delta G*||_F

provided that (i) the projection inequality with constant rho holds at every
iterate, (ii) kappa <= 1/1024, (iii) ||D^-1 Delta|| <= 1/32 and
||D^-1 Delta G*||_F <= sqrt(n)/(32 rho), and (iv) eps(G^0) <= sqrt(n)/(2 rho).
:func:`master_report` evaluates every one of these on a recorded run.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Iterable, List

import numpy as np

from .blocklin import blockmatvec, operator_norm
from .groups import CYCLIC, GroupSpec, cyclic_element, project, rho, sample_uniform
from .model import ConnectivityStats, Instance, connectivity_stats, degree_inverse_apply, delta_matrix
from .solver import SolveTrace

KAPPA_LIMIT = 1.0 / 1024.0
OPNORM_LIMIT = 1.0 / 32.0
ENVELOPE_RATE = 5.0 / 8.0
ENVELOPE_FLOOR = 16.0 / 3.0
ENVELOPE_SLACK = 1e-9
RECOVERY_TOL = 1e-6
# absolute slack per unit of n for the projection inequality, which is tight (0 <= 0) at exact recovery
COND_I_SLACK = 1e-9


def estimation_error(spec: GroupSpec, G, Gstar):
    """Gauge-invariant error ``min_Q ||G - G* Q||_F`` and its minimiser ``Q``.

    The minimiser is the projection of ``G*^T G`` onto the group.
    """
    G = np.asarray(G, dtype=float)
    Gstar = np.asarray(Gstar, dtype=float)
    if G.shape != Gstar.shape or G.ndim != 3:
        raise ValueError(f"block columns must have equal (n, d, d) shapes, got {G.shape} and {Gstar.shape}")
    Q = project(spec, np.einsum("nji,njk->ik", Gstar, G))
    return float(np.linalg.norm(G - Gstar @ Q)), Q


def recovery_rate(spec: GroupSpec, G, Gstar, tol: float = RECOVERY_TOL) -> float:
    """Fraction of blocks with ``||G_i - G*_i Q||_F <= tol`` after global alignment."""
    _, Q = estimation_error(spec, G, Gstar)
    errors = np.linalg.norm(np.asarray(G) - np.asarray(Gstar) @ Q, axis=(1, 2))
    return float(np.mean(errors <= tol))


def projection_inequality_gap(spec: GroupSpec, A: np.ndarray, n: int, rho_value: float) -> float:
    """``||A - n Pi(A)||_F - rho Tr(n I - Pi(A)^T A)``; non-positive when the inequality holds."""
    Q = project(spec, A)
    lhs = np.linalg.norm(A - n * Q)
    rhs = rho_value * np.trace(n * np.eye(spec.d) - Q.T @ A)
    return float(lhs - rhs)


@dataclass
class MasterReport:
    rho: float
    kappa: ConnectivityStats
    op_norm_dinv_delta: float
    frob_norm_dinv_delta_gstar: float
    eps0: float
    cond_i_per_iter: List[bool]
    cond_ii: bool
    cond_iii: bool
    cond_iv: bool
    envelope: List[float] = field(default_factory=list)
    envelope_violations: List[int] = field(default_factory=list)

    @property
    def cond_i(self) -> bool:
        return all(self.cond_i_per_iter)

    @property
    def all_conditions_hold(self) -> bool:
        return self.cond_i and self.cond_ii and self.cond_iii and self.cond_iv

    def to_dict(self) -> dict:
        out = asdict(self)
        out["cond_i"] = self.cond_i
        out["all_conditions_hold"] = self.all_conditions_hold
        return out

    def write_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2)
            fh.write("\n")


def master_report(instance: Instance, trace: SolveTrace) -> MasterReport:
    """Evaluate the theorem's hypotheses and conclusion on a recorded GPM run.

    The report never asserts anything; envelope violations are listed for
    every recorded iterate ``t >= 1`` regardless of whether the hypotheses
    hold.
    """
    Gstar = instance.require_ground_truth()
    if not trace.epsilon or len(trace.alignment) != len(trace.epsilon):
        raise ValueError("master_report needs a trace recorded with ground truth")
    spec, graph, n = instance.spec, instance.graph, instance.n
    rho_value = rho(spec)
    kappa = connectivity_stats(graph)
    Delta = delta_matrix(instance)

    def apply(x):
        return degree_inverse_apply(graph, blockmatvec(Delta, x))

    def apply_transpose(x):
        return blockmatvec(Delta, degree_inverse_apply(graph, x))

    op_norm = operator_norm(apply, apply_transpose, instance.C.size)
    frob = float(np.linalg.norm(degree_inverse_apply(graph, blockmatvec(Delta, Gstar))))
    eps0 = trace.epsilon[0]

    cond_i = [
        projection_inequality_gap(spec, A, n, rho_value) <= COND_I_SLACK * n for A in trace.alignment
    ]
    sqrt_n = math.sqrt(n)
    envelope = [ENVELOPE_RATE ** (t + 1) * eps0 + ENVELOPE_FLOOR * frob for t in range(len(trace.epsilon))]
    violations = [t for t in range(1, len(trace.epsilon)) if trace.epsilon[t] > envelope[t] + ENVELOPE_SLACK]
    return MasterReport(
        rho=rho_value,
        kappa=kappa,
        op_norm_dinv_delta=op_norm,
        frob_norm_dinv_delta_gstar=frob,
        eps0=eps0,
        cond_i_per_iter=cond_i,
        cond_ii=kappa.kappa <= KAPPA_LIMIT,
        cond_iii=op_norm <= OPNORM_LIMIT and frob <= sqrt_n / (32.0 * rho_value),
        cond_iv=eps0 <= sqrt_n / (2.0 * rho_value),
        envelope=envelope,
        envelope_violations=violations,
    )


def contraction_holds(spec: GroupSpec, r: float, X, Q, slack: float = 1e-9) -> bool:
    X = np.asarray(X, dtype=float)
    lhs = np.linalg.norm(project(spec, X) - Q)
    return bool(lhs <= 2.0 * np.linalg.norm(X / r - Q) + slack)


def contraction_check(spec: GroupSpec, samples: Iterable) -> bool:
    """True iff ``||Pi(X) - Q|| <= 2 ||X/r - Q|| + 1e-9`` for every ``(r, X, Q)``."""
    samples = list(samples)
    if not samples:
        raise ValueError("contraction_check needs at least one sample")
    return all(contraction_holds(spec, r, X, Q) for r, X, Q in samples)


def contraction_samples(spec: GroupSpec, count: int, rng: np.random.Generator, radii=(0.1, 1.0, 10.0)):
    """Random ``(r, X, Q)`` triples; X is either Gaussian or a perturbed scaled element.

    For the cyclic group a share of the samples sits exactly on the boundary
    between two neighbouring elements, where the projection switches.
    """
    d = spec.d
    for s in range(count):
        r = float(radii[s % len(radii)])
        Q = sample_uniform(spec, rng)
        kind = s % 3
        if kind == 0:
            X = rng.standard_normal((d, d))
        elif kind == 1:
            X = r * (sample_uniform(spec, rng) + 0.5 * rng.standard_normal((d, d)))
        elif spec.kind == CYCLIC and spec.m > 1:
            k = rng.integers(spec.m)
            X = rng.uniform(0.1, 3.0) * (cyclic_element(k, spec.m) + cyclic_element(k + 1, spec.m)) / 2.0
        else:
            X = r * Q + rng.standard_normal((d, d)) * rng.uniform(0.0, 2.0)
        yield r, X, Q
