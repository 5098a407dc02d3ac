"""Falsification search for nontrivial solutions above the nonexistence threshold.

Any solution of (a + b lam n(u)) (-Lu + V u) = |u|^{p-1} u with
n(u) = int |Du|^2 + V u^2 satisfies N(u) = a n + b lam n^2 - int|u|^{p+1} = 0.
Along a ray s -> s u,

    N(s u) / s^2 = a n + b lam n^2 s^2 - P s^{p-1},     P = int|u|^{p+1},

which for 1 < p < 3 is minimized at s* = ((p-1) P / (2 b lam n^2))^{1/(3-p)}.
The scan samples random profiles and checks that this ray minimum stays
positive, so no multiple of any sample can be a solution.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from . import algebra
from . import functional as F
from . import radial
from .errors import OutOfHypothesisError
from .functional import PotentialSpec
from .radial import RadialFunction, RadialGrid

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class RayMinimum:
    s_star: float
    value: float  # min_s N(s u) / s^2
    margin: float  # value / (a n)


def ray_minimum(norm_sq: float, pow_int: float, a: float, b: float, lam: float, p: float) -> RayMinimum:
    """Closed-form minimum over s > 0 of N(s u) / s^2."""
    if not 1 < p < 3:
        raise OutOfHypothesisError(f"closed-form ray minimum needs 1 < p < 3, got {p}")
    c2 = b * lam * norm_sq**2
    s = ((p - 1) * pow_int / (2 * c2)) ** (1 / (3 - p))
    value = a * norm_sq + c2 * s**2 - pow_int * s ** (p - 1)
    return RayMinimum(s, value, value / (a * norm_sq))


def nehari_on_ray(s, norm_sq, pow_int, a, b, lam, p):
    """N(s u) = s^2 a n + s^4 b lam n^2 - s^{p+1} P."""
    s = np.asarray(s, dtype=float)
    return s**2 * a * norm_sq + s**4 * b * lam * norm_sq**2 - s ** (p + 1) * pow_int


def random_profiles(grid: RadialGrid, count: int, seed: int = 0):
    """Random signed sums of one to four Gaussian bumps spanning many scales."""
    rng = np.random.default_rng(seed)
    r = grid.nodes
    lo, hi = 2 * grid.h, grid.r_max / 4
    for _ in range(count):
        k = rng.integers(1, 5)
        vals = np.zeros_like(r)
        for _ in range(k):
            c = rng.uniform(0, grid.r_max / 2)
            w = np.exp(rng.uniform(np.log(lo), np.log(hi)))
            amp = rng.choice([-1.0, 1.0]) * 10 ** rng.uniform(-2, 2)
            vals += amp * np.exp(-(((r - c) / w) ** 2))
        yield RadialFunction.from_samples(grid, vals)


@dataclass
class ScanResult:
    a: float
    b: float
    p: float
    lam: float
    lam0: float
    sobolev_C: float
    samples: int
    min_margin: float
    counterexamples: list = field(default_factory=list, repr=False)

    @property
    def passed(self) -> bool:
        return not self.counterexamples

    def to_dict(self) -> dict:
        return {
            "a": self.a, "b": self.b, "p": self.p, "lambda": self.lam,
            "lambda0": self.lam0, "sobolev_C": self.sobolev_C,
            "samples": self.samples, "min_margin": self.min_margin,
            "counterexamples": len(self.counterexamples), "passed": self.passed,
        }


def check_hypotheses(a, b, p) -> None:
    if not (1 < p <= 2):
        raise OutOfHypothesisError(f"nonexistence needs 1 < p <= 2, got {p}")
    if not a > 1:
        raise OutOfHypothesisError(f"nonexistence needs a > 1, got {a}")
    if not b > 0:
        raise OutOfHypothesisError(f"need b > 0, got {b}")


def threshold(a: float, b: float, C: float) -> float:
    return float(algebra.nonexistence_threshold(Fraction(a), Fraction(b), Fraction(C)))


def nonexist_scan(
    a: float,
    b: float,
    p: float,
    lam: float | None = None,
    lam_factor: float = 1.0,
    grid: RadialGrid | None = None,
    V: PotentialSpec | None = None,
    samples: int = 1000,
    seed: int = 0,
    C: float | None = None,
) -> ScanResult:
    """Search random profiles for N(s u) <= 0 at lam (default lam_factor * lambda_0).

    lambda_0 is built from the discrete embedding constant C of H^1 into
    L^3 on the same grid, unless C is supplied.
    """
    check_hypotheses(a, b, p)
    grid = grid or radial.make_grid()
    V = V or PotentialSpec.constant(1.0)
    if C is None:
        C = F.sobolev_constant(grid, V, q=3.0, a=1.0)
    lam0 = threshold(a, b, C)
    lam = lam0 * lam_factor if lam is None else lam
    vv = V.values(grid)
    bad = []
    worst = np.inf
    for u in random_profiles(grid, samples, seed):
        n = radial.dirichlet(grid, u) + radial.quad(grid, vv * u.values**2)
        pw = radial.quad(grid, np.abs(u.values) ** (p + 1))
        rm = ray_minimum(n, pw, a, b, lam, p)
        worst = min(worst, rm.margin)
        if rm.value <= 0:
            bad.append((u, rm))
    if bad:
        log.warning("%d of %d profiles admit N(s u) <= 0 at lambda=%g", len(bad), samples, lam)
    return ScanResult(a, b, p, lam, lam0, C, samples, float(worst), bad)
