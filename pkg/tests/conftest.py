from itertools import permutations

import numpy as np
import pytest

from groupsync.groups import CYCLIC, PERMUTATION, GroupSpec, cyclic_element


def all_permutations(d):
    eye = np.eye(d)
    return np.array([eye[list(p)] for p in permutations(range(d))])


def enumerate_group(spec: GroupSpec):
    """Every element of a finite group (brute-force oracle)."""
    if spec.kind == PERMUTATION:
        return all_permutations(spec.d)
    if spec.kind == CYCLIC:
        return cyclic_element(np.arange(spec.m), spec.m)
    raise ValueError(f"{spec} is not finite")


def brute_force_max(X, elements):
    """max over the listed group elements of <X, Q>, and the maximiser."""
    scores = np.einsum("ij,kij->k", X, elements)
    k = int(np.argmax(scores))
    return scores[k], elements[k]


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


ALL_SPECS = [
    GroupSpec.orthogonal(1),
    GroupSpec.orthogonal(2),
    GroupSpec.orthogonal(3),
    GroupSpec.special_orthogonal(2),
    GroupSpec.special_orthogonal(3),
    GroupSpec.special_orthogonal(4),
    GroupSpec.permutation(3),
    GroupSpec.permutation(5),
    GroupSpec.cyclic(1),
    GroupSpec.cyclic(2),
    GroupSpec.cyclic(3),
    GroupSpec.cyclic(7),
]


# one PASS/FAIL line per acceptance criterion, shown in the terminal summary
ACCEPTANCE_RESULTS = {}


def record_criterion(number: int, title: str, ok: bool, detail: str = "") -> None:
    line = f"criterion {number:2d} {'PASS' if ok else 'FAIL'}  {title}" + (f"  ({detail})" if detail else "")
    ACCEPTANCE_RESULTS[number] = line
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_RESULTS:
        terminalreporter.section("acceptance criteria")
        for number in sorted(ACCEPTANCE_RESULTS):
            terminalreporter.write_line(ACCEPTANCE_RESULTS[number])
