"""Problem instances: measurement graph, observations and derived matrices."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Mapping, Optional, Union

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from .blocklin import BlockSymMatrix
from .groups import GroupSpec


class DisconnectedGraphError(ValueError):
    pass


class GroundTruthMissing(ValueError):
    pass


@dataclass(frozen=True)
class MeasurementGraph:
    """Undirected graph on ``range(n)``; ``edges`` holds pairs ``i < j``.

    The extended graph adds a self-loop at every node, so ``adjacency`` has a
    unit diagonal and every degree is at least 1.
    """

    n: int
    edges: np.ndarray

    def __post_init__(self):
        edges = np.asarray(self.edges, dtype=np.int64).reshape(-1, 2)
        if self.n < 1:
            raise ValueError("graph needs at least one node")
        if len(edges):
            if np.any(edges[:, 0] >= edges[:, 1]):
                raise ValueError("edges must be given as pairs (i, j) with i < j")
            if edges.min() < 0 or edges.max() >= self.n:
                raise ValueError(f"edge endpoint out of range for n={self.n}")
        edges = np.unique(edges, axis=0) if len(edges) else edges
        edges.setflags(write=False)
        object.__setattr__(self, "edges", edges)
        if self.component_count() != 1:
            raise DisconnectedGraphError(
                f"measurement graph has {self.component_count()} connected components; it must be connected"
            )

    @classmethod
    def complete(cls, n: int) -> "MeasurementGraph":
        i, j = np.triu_indices(n, 1)
        return cls(n, np.stack([i, j], 1))

    @property
    def num_edges(self) -> int:
        return len(self.edges)

    def component_count(self) -> int:
        i, j = self.edges.T if len(self.edges) else (np.zeros(0, int), np.zeros(0, int))
        A = coo_matrix((np.ones(len(i)), (i, j)), shape=(self.n, self.n))
        return connected_components(A, directed=False)[0]

    @property
    def adjacency(self) -> np.ndarray:
        """Dense 0/1 adjacency ``w`` of the extended graph."""
        w = np.eye(self.n)
        i, j = self.edges.T
        w[i, j] = 1.0
        w[j, i] = 1.0
        return w

    @property
    def degrees(self) -> np.ndarray:
        r = np.ones(self.n)
        np.add.at(r, self.edges[:, 0], 1.0)
        np.add.at(r, self.edges[:, 1], 1.0)
        return r


@dataclass(frozen=True)
class ConnectivityStats:
    kappa1: float
    kappa2: float
    kappa: float
    worst_pair: tuple
    worst_node: int


def connectivity_stats(graph: MeasurementGraph) -> ConnectivityStats:
    """Graph connectivity parameters built from ``mu_jk = sum_i w_ij w_ik / r_i^2``.

    ``kappa1 = n * max_{j<k} |mu_jk - 1/n|``, ``kappa2 = max_j (mu_jj - 1/n)``.
    Both vanish on the complete graph.
    """
    n = graph.n
    if n < 2:
        raise ValueError("connectivity stats need n >= 2")
    w = graph.adjacency
    r = w.sum(axis=1)
    # integer common-neighbour counts per degree class keep mu exact on regular graphs
    mu = np.zeros((n, n))
    for degree in np.unique(r):
        rows = w[r == degree]
        mu += (rows.T @ rows) / (degree * degree)
    iu, ju = np.triu_indices(n, 1)
    off = np.abs(mu[iu, ju] - 1.0 / n)
    pair = int(np.argmax(off))
    on = np.diagonal(mu) - 1.0 / n
    node = int(np.argmax(on))
    kappa1 = float(n * off[pair])
    kappa2 = float(on[node])
    return ConnectivityStats(kappa1, kappa2, kappa1 + kappa2, (int(iu[pair]), int(ju[pair])), node)


def degree_inverse_apply(graph: MeasurementGraph, Y) -> np.ndarray:
    """Apply ``D^{-1}``: scale block ``i`` of ``Y`` by ``1 / r_i``."""
    Y = np.asarray(Y, dtype=float)
    n = graph.n
    r = graph.degrees
    if Y.shape[0] == n:
        return Y / r.reshape((n,) + (1,) * (Y.ndim - 1))
    d = Y.shape[0] // n
    if d * n != Y.shape[0]:
        raise ValueError(f"cannot split {Y.shape[0]} rows into {n} blocks")
    return Y / np.repeat(r, d).reshape((n * d,) + (1,) * (Y.ndim - 1))


Observations = Union[np.ndarray, Mapping]


def _aligned_observations(graph: MeasurementGraph, observations: Observations, d: int) -> np.ndarray:
    if isinstance(observations, Mapping):
        keys = {(int(i), int(j)) for i, j in observations}
        edge_keys = {(int(i), int(j)) for i, j in graph.edges}
        missing = edge_keys - keys
        if missing:
            raise ValueError(f"missing observation for edge {min(missing)}")
        extra = keys - edge_keys
        if extra:
            raise ValueError(f"observation {min(extra)} is not an edge (i < j) of the graph")
        blocks = np.array([observations[(int(i), int(j))] for i, j in graph.edges], dtype=float)
        blocks = blocks.reshape(-1, d, d)
    else:
        blocks = np.asarray(observations, dtype=float)
        if blocks.shape != (graph.num_edges, d, d):
            raise ValueError(f"expected observations of shape {(graph.num_edges, d, d)}, got {blocks.shape}")
    if not np.all(np.isfinite(blocks)):
        raise ValueError("observations contain non-finite entries")
    return blocks


def assemble_C(graph: MeasurementGraph, observations: Observations, d: int) -> BlockSymMatrix:
    """Data matrix: ``C_ij`` on edges, their transposes below, ``I_d`` on the diagonal."""
    blocks = _aligned_observations(graph, observations, d)
    diag = np.broadcast_to(np.eye(d), (graph.n, d, d))
    return BlockSymMatrix(graph.n, d, graph.edges[:, 0], graph.edges[:, 1], blocks, diag)


@dataclass(frozen=True)
class Instance:
    spec: GroupSpec
    graph: MeasurementGraph
    observations: np.ndarray
    ground_truth: Optional[np.ndarray] = None
    _cache: dict = field(default_factory=dict, init=False, repr=False, compare=False)

    def __post_init__(self):
        d = self.spec.d
        object.__setattr__(self, "observations", _aligned_observations(self.graph, self.observations, d))
        if self.ground_truth is not None:
            G = np.asarray(self.ground_truth, dtype=float).reshape(-1, d, d)
            if len(G) != self.graph.n:
                raise ValueError(f"ground truth has {len(G)} blocks, graph has {self.graph.n} nodes")
            object.__setattr__(self, "ground_truth", G)

    @property
    def n(self) -> int:
        return self.graph.n

    @property
    def d(self) -> int:
        return self.spec.d

    @property
    def C(self) -> BlockSymMatrix:
        if "C" not in self._cache:
            self._cache["C"] = assemble_C(self.graph, self.observations, self.d)
        return self._cache["C"]

    def observation_map(self) -> dict:
        return {(int(i), int(j)): block for (i, j), block in zip(self.graph.edges, self.observations)}

    def require_ground_truth(self) -> np.ndarray:
        if self.ground_truth is None:
            raise GroundTruthMissing("this instance has no ground truth")
        return self.ground_truth


def delta_matrix(instance: Instance) -> BlockSymMatrix:
    """Noise matrix: ``C_ij - G*_i G*_j^T`` on edges, zero elsewhere (diagonal included)."""
    G = instance.require_ground_truth()
    i, j = instance.graph.edges.T
    clean = G[i] @ np.swapaxes(G[j], 1, 2)
    d = instance.d
    return BlockSymMatrix(instance.n, d, i, j, instance.observations - clean, np.zeros((instance.n, d, d)))


def _floats(a: np.ndarray) -> list:
    return [float(x) for x in np.asarray(a, dtype=float).reshape(-1)]


def instance_to_dict(instance: Instance) -> dict:
    out = {
        "spec": instance.spec.to_dict(),
        "n": instance.n,
        "edges": [[int(i), int(j)] for i, j in instance.graph.edges],
        "obs": [
            {"i": int(i), "j": int(j), "block": _floats(block)}
            for (i, j), block in zip(instance.graph.edges, instance.observations)
        ],
    }
    if instance.ground_truth is not None:
        out["ground_truth"] = _floats(instance.ground_truth)
    return out


def instance_from_dict(data: dict) -> Instance:
    for key in ("spec", "n", "edges", "obs"):
        if key not in data:
            raise ValueError(f"instance file is missing '{key}'")
    spec = GroupSpec.from_dict(data["spec"])
    d = spec.d
    graph = MeasurementGraph(int(data["n"]), np.array(data["edges"], dtype=np.int64).reshape(-1, 2))
    obs = {}
    for entry in data["obs"]:
        i, j = int(entry["i"]), int(entry["j"])
        if (i, j) in obs:
            raise ValueError(f"duplicate observation for edge ({i}, {j})")
        block = np.array(entry["block"], dtype=float)
        if block.size != d * d:
            raise ValueError(f"observation ({i}, {j}) has {block.size} entries, expected {d * d}")
        obs[(i, j)] = block.reshape(d, d)
    truth = data.get("ground_truth")
    if truth is not None:
        truth = np.array(truth, dtype=float)
        if truth.size != graph.n * d * d:
            raise ValueError(f"ground truth has {truth.size} entries, expected {graph.n * d * d}")
        truth = truth.reshape(graph.n, d, d)
    return Instance(spec, graph, obs, truth)


def save_instance(instance: Instance, path) -> None:
    with open(path, "w") as fh:
        json.dump(instance_to_dict(instance), fh)
        fh.write("\n")


def load_instance(path) -> Instance:
    with open(path) as fh:
        return instance_from_dict(json.load(fh))


def block_column_to_dict(G: np.ndarray) -> dict:
    G = np.asarray(G, dtype=float)
    n, d, _ = G.shape
    return {"n": n, "d": d, "blocks": _floats(G)}


def block_column_from_dict(data: dict) -> np.ndarray:
    n, d = int(data["n"]), int(data["d"])
    blocks = np.array(data["blocks"], dtype=float)
    if blocks.size != n * d * d:
        raise ValueError(f"block column has {blocks.size} entries, expected {n * d * d}")
    return blocks.reshape(n, d, d)
