"""Seeded synthetic instances: Erdos-Renyi graphs, ground truth and noise."""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np
from scipy.integrate import quad

from .groups import CYCLIC, PERMUTATION, SPECIAL_ORTHOGONAL, GroupSpec, project, sample_uniform
from .model import DisconnectedGraphError, Instance, MeasurementGraph

MAX_GRAPH_DRAWS = 100

ADDITIVE_GAUSSIAN = "additive_gaussian"
ADDITIVE_UNIFORM = "additive_uniform"
OUTLIER_LANGEVIN = "outlier_langevin"
OUTLIER = "outlier"
PROJECTED_ADDITIVE = "projected_additive"

NOISE_MODELS = (ADDITIVE_GAUSSIAN, ADDITIVE_UNIFORM, OUTLIER_LANGEVIN, OUTLIER, PROJECTED_ADDITIVE)


class GraphGenerationError(RuntimeError):
    pass


@dataclass(frozen=True)
class GraphConfig:
    n: int
    p: float = 1.0

    def __post_init__(self):
        if int(self.n) < 2:
            raise ValueError(f"graph.n must be >= 2, got {self.n}")
        if not 0.0 < float(self.p) <= 1.0:
            raise ValueError(f"graph.p must lie in (0, 1], got {self.p}")

    @classmethod
    def from_dict(cls, data: dict) -> "GraphConfig":
        unknown = set(data) - {"n", "p"}
        if unknown:
            raise ValueError(f"unknown graph config fields: {sorted(unknown)}")
        return cls(int(data["n"]), float(data.get("p", 1.0)))


@dataclass(frozen=True)
class NoiseConfig:
    """Noise model and its parameters.

    ``sigma`` is the entry standard deviation for additive Gaussian noise,
    ``bound`` the half-width for additive uniform noise, ``q`` the probability
    that an edge is *not* corrupted by an outlier, ``gamma`` the Langevin
    concentration and ``delta`` the Gaussian magnitude for projected additive
    noise on permutations.
    """

    model: str = ADDITIVE_GAUSSIAN
    sigma: float = 0.0
    bound: float = 0.0
    q: float = 1.0
    gamma: float = 0.0
    delta: float = 0.0

    def __post_init__(self):
        if self.model not in NOISE_MODELS:
            raise ValueError(f"unknown noise model {self.model!r}; expected one of {NOISE_MODELS}")
        for name in ("sigma", "bound", "gamma", "delta"):
            if not float(getattr(self, name)) >= 0.0:
                raise ValueError(f"noise.{name} must be >= 0, got {getattr(self, name)}")
        if not 0.0 < float(self.q) <= 1.0:
            raise ValueError(f"noise.q must lie in (0, 1], got {self.q}")

    @classmethod
    def from_dict(cls, data: dict) -> "NoiseConfig":
        unknown = set(data) - {"model", "sigma", "bound", "q", "gamma", "delta"}
        if unknown:
            raise ValueError(f"unknown noise config fields: {sorted(unknown)}")
        values = {k: (v if k == "model" else float(v)) for k, v in data.items()}
        return cls(**values)

    def to_dict(self) -> dict:
        return asdict(self)


def make_rngs(seed: int):
    """Independent counter-based generators for graph, ground truth and noise."""
    children = np.random.SeedSequence(int(seed)).spawn(3)
    return tuple(np.random.Generator(np.random.Philox(child)) for child in children)


def gen_graph(cfg: GraphConfig, rng: np.random.Generator) -> MeasurementGraph:
    """Erdos-Renyi graph: each pair ``i < j`` is an edge with probability ``p``.

    Disconnected draws are discarded; after ``MAX_GRAPH_DRAWS`` failures a
    ``GraphGenerationError`` is raised.
    """
    n, p = cfg.n, cfg.p
    iu, ju = np.triu_indices(n, 1)
    for _ in range(MAX_GRAPH_DRAWS):
        keep = rng.random(len(iu)) < p
        try:
            return MeasurementGraph(n, np.stack([iu[keep], ju[keep]], 1))
        except DisconnectedGraphError:
            continue
    raise GraphGenerationError(
        f"{MAX_GRAPH_DRAWS} consecutive Erdos-Renyi draws with n={n}, p={p} were disconnected; use a larger p"
    )


def gen_ground_truth(spec: GroupSpec, n: int, rng: np.random.Generator) -> np.ndarray:
    return sample_uniform(spec, rng, size=n)


def haar_rotation_angles(size: int, rng: np.random.Generator) -> np.ndarray:
    """Rotation angles of Haar-uniform SO(3) elements, density (1 - cos phi)/pi."""
    quat = rng.standard_normal((size, 4))
    w = np.abs(quat[:, 0]) / np.linalg.norm(quat, axis=1)
    return 2.0 * np.arccos(np.clip(w, 0.0, 1.0))


def _haar_acceptance(gamma: float) -> float:
    # exp(2 gamma (cos phi - 1)) <= exp(-4 gamma phi^2 / pi^2), negligible past 20 / sqrt(gamma)
    upper = np.pi if gamma <= 0 else min(np.pi, 20.0 / np.sqrt(gamma))
    value, _ = quad(lambda phi: np.exp(2.0 * gamma * (np.cos(phi) - 1.0)) * (1.0 - np.cos(phi)) / np.pi, 0.0, upper)
    return value


def _maxwell_acceptance(gamma: float) -> float:
    # target and envelope written in the half angle psi = phi / 2
    upper = min(np.pi / 2, 10.0 / np.sqrt(gamma))
    target, _ = quad(lambda psi: np.sin(psi) ** 2 * np.exp(-4.0 * gamma * np.sin(psi) ** 2), 0.0, upper)
    envelope = np.sqrt(np.pi) / 4.0 * (np.pi**2 / (16.0 * gamma)) ** 1.5
    return target / envelope


def langevin_angles(gamma: float, size: int, rng: np.random.Generator) -> np.ndarray:
    """Angles with density proportional to ``exp(2 gamma cos phi) (1 - cos phi)``.

    Exact rejection sampling from whichever envelope accepts more often:

    * the Haar angle law, accepted with probability ``exp(2 gamma (cos phi - 1))``;
    * for the half angle ``psi``, the Maxwell density
      ``psi^2 exp(-16 gamma psi^2 / pi^2)``, which dominates the target
      ``sin^2 psi exp(-4 gamma sin^2 psi)`` because ``sin psi >= 2 psi / pi``.
    """
    haar = _haar_acceptance(gamma)
    maxwell = _maxwell_acceptance(gamma) if gamma > 0 else 0.0
    rate = max(haar, maxwell, 1e-12)
    out = np.empty(size)
    filled = 0
    while filled < size:
        want = size - filled
        batch = min(max(64, int(1.2 * want / rate)), 1 << 22)
        if maxwell > haar:
            scale = np.pi / np.sqrt(32.0 * gamma)
            psi = scale * np.sqrt(np.einsum("ij,ij->i", *(2 * [rng.standard_normal((batch, 3))])))
            clipped = np.clip(psi, 1e-300, np.pi / 2)
            sin2 = np.sin(clipped) ** 2
            ratio = sin2 / clipped**2 * np.exp(-4.0 * gamma * sin2 + 16.0 * gamma * clipped**2 / np.pi**2)
            accept = (psi <= np.pi / 2) & (rng.random(batch) < ratio)
            phi = 2.0 * psi
        else:
            phi = haar_rotation_angles(batch, rng)
            accept = rng.random(batch) < np.exp(2.0 * gamma * (np.cos(phi) - 1.0))
        taken = phi[accept][:want]
        out[filled:filled + len(taken)] = taken
        filled += len(taken)
    return out


def axis_angle_to_matrix(axis: np.ndarray, angle: np.ndarray) -> np.ndarray:
    """Rodrigues formula for stacks of unit axes ``(N, 3)`` and angles ``(N,)``."""
    x, y, z = axis[:, 0], axis[:, 1], axis[:, 2]
    zero = np.zeros_like(x)
    K = np.stack(
        [np.stack([zero, -z, y], -1), np.stack([z, zero, -x], -1), np.stack([-y, x, zero], -1)], -2
    )
    s, c = np.sin(angle)[:, None, None], np.cos(angle)[:, None, None]
    return np.eye(3) + s * K + (1.0 - c) * (K @ K)


def sample_langevin_so3(gamma: float, rng: np.random.Generator, size: Optional[int] = None) -> np.ndarray:
    """Rotations with density proportional to ``exp(gamma * Tr R)`` against Haar measure.

    The axis is uniform on the sphere and the angle follows
    :func:`langevin_angles`; since ``Tr R = 1 + 2 cos phi`` this realises the
    target density. ``gamma = 0`` gives the uniform distribution on SO(3).
    """
    if gamma < 0:
        raise ValueError(f"gamma must be >= 0, got {gamma}")
    count = 1 if size is None else int(size)
    axis = rng.standard_normal((count, 3))
    axis /= np.linalg.norm(axis, axis=1, keepdims=True)
    R = axis_angle_to_matrix(axis, langevin_angles(gamma, count, rng))
    return R[0] if size is None else R


def gen_observations(
    spec: GroupSpec, graph: MeasurementGraph, G: np.ndarray, noise: NoiseConfig, rng: np.random.Generator
) -> np.ndarray:
    """Noisy ratios ``C_ij`` for every edge, aligned with ``graph.edges``.

    All randomness is drawn in sorted edge order, so the result depends only
    on the seed and not on how edges were enumerated by the caller.
    """
    i, j = graph.edges.T
    m = len(i)
    d = spec.d
    clean = G[i] @ np.swapaxes(G[j], 1, 2)
    model = noise.model
    if model == ADDITIVE_GAUSSIAN:
        return clean + noise.sigma * rng.standard_normal((m, d, d))
    if model == ADDITIVE_UNIFORM:
        return clean + rng.uniform(-noise.bound, noise.bound, size=(m, d, d))
    if model == OUTLIER_LANGEVIN:
        if not (spec.kind == SPECIAL_ORTHOGONAL and d == 3):
            raise ValueError(f"{OUTLIER_LANGEVIN} noise requires SO(3), got {spec}")
        return clean @ _outliers(spec, m, noise.q, rng) @ sample_langevin_so3(noise.gamma, rng, size=m)
    if model == OUTLIER:
        if spec.kind != CYCLIC:
            raise ValueError(f"{OUTLIER} noise requires a cyclic group, got {spec}")
        return clean @ _outliers(spec, m, noise.q, rng)
    if spec.kind != PERMUTATION:
        raise ValueError(f"{PROJECTED_ADDITIVE} noise requires a permutation group, got {spec}")
    return project(spec, clean + noise.delta * rng.standard_normal((m, d, d)))


def _outliers(spec: GroupSpec, count: int, q: float, rng: np.random.Generator) -> np.ndarray:
    corrupted = rng.random(count) >= q
    theta = np.broadcast_to(np.eye(spec.d), (count, spec.d, spec.d)).copy()
    theta[corrupted] = sample_uniform(spec, rng, size=int(corrupted.sum())).reshape(-1, spec.d, spec.d)
    return theta


def gen_instance(spec: GroupSpec, graph_cfg: GraphConfig, noise: NoiseConfig, seed: int) -> Instance:
    graph_rng, truth_rng, noise_rng = make_rngs(seed)
    graph = gen_graph(graph_cfg, graph_rng)
    G = gen_ground_truth(spec, graph.n, truth_rng)
    return Instance(spec, graph, gen_observations(spec, graph, G, noise, noise_rng), G)
