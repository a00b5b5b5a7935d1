"""Shared fixtures for the test suite.

Fitting dominates the suite's runtime, so every fitted scene is built once
per session and reused by the module tests and the acceptance gate alike.
Each fixture records the wall time of its own construction so runtime
bounds can be checked without fitting twice.
"""

import time
from dataclasses import dataclass

import numpy as np
import pytest

from ias import shapes
from ias.fit import FitConfig, FitResult, fit
from ias.mesh import SampleSet, TriMesh, build_sample_set, normalize
from ias.scene import Scene

_ACCEPT_LINES = []


@pytest.fixture(scope="session")
def acceptance_log():
    """Recorder for one-line pass/fail verdicts, echoed after the run."""

    def record(name: str, ok: bool, detail: str) -> str:
        line = f"{'PASS' if ok else 'FAIL'}  {name}: {detail}"
        _ACCEPT_LINES.append(line)
        print(line)
        return line

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if _ACCEPT_LINES:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPT_LINES:
            terminalreporter.write_line(line)


@dataclass
class FittedFixture:
    """A normalized target mesh, its sample set, and a fitted scene."""

    name: str
    mesh: TriMesh
    samples: SampleSet
    result: FitResult
    seconds: float  # wall time of sampling plus fitting

    @property
    def scene(self) -> Scene:
        return self.result.scene


def fit_target(name, mesh, primitives, iters=3000, seed=0, **overrides):
    t0 = time.perf_counter()
    normalized, _ = normalize(mesh)
    samples = build_sample_set(normalized, n_volume=100_000, n_surface=10_000, seed=0)
    result = fit(samples, FitConfig(primitives=primitives, iters=iters, seed=seed,
                                    **overrides))
    seconds = time.perf_counter() - t0
    return FittedFixture(name=name, mesh=normalized, samples=samples,
                         result=result, seconds=seconds)


@pytest.fixture(scope="session")
def sphere_fit():
    return fit_target("sphere", shapes.icosphere(subdivisions=3, radius=0.8), 8)


@pytest.fixture(scope="session")
def box_fit():
    return fit_target("box", shapes.box((1.0, 0.6, 0.4)), 8)


@pytest.fixture(scope="session")
def torus_fit():
    return fit_target("torus", shapes.torus(0.6, 0.25, n_major=48, n_minor=24), 8)


@pytest.fixture(scope="session")
def sphere16_unpruned():
    """Sixteen primitives on the sphere leave spare capacity; kept unpruned."""
    return fit_target("sphere16", shapes.icosphere(subdivisions=3, radius=0.8),
                      16, iters=6000, seed=3, prune_on_finish=False)


def sphere_form(radius=1.0, center=(0.0, 0.0, 0.0)):
    """(x^2 + y^2 + z^2)^2 - radius^4 as a quadratic form; exact sphere."""
    A = np.zeros((10, 10))
    A[4:7, 4:7] = 1.0
    A[0, 0] = -float(radius) ** 4
    return A, np.asarray(center, dtype=np.float64)


def torus_form(major=0.6, minor=0.25):
    """(x^2 + y^2 + z^2 + R^2 - r^2)^2 - 4 R^2 (x^2 + y^2); genus-one zero set."""
    s = major * major - minor * minor
    A = np.zeros((10, 10))
    A[4:7, 4:7] = 1.0
    A[0, 4:7] = s
    A[4:7, 0] = s
    A[0, 0] = s * s
    A[1, 1] = -4.0 * major * major
    A[2, 2] = -4.0 * major * major
    return A, np.zeros(3)


@pytest.fixture()
def unit_sphere_scene():
    return Scene.from_matrices([sphere_form()])
