"""Exact rational checks of the manifold algebra and the nonexistence threshold.

Write alpha = a int|Du|^2, beta = int u^2, mu = b (int|Du|^2)^2,
delta = int|u|^{p+1} and k = I(u).  On the manifold these four positive
numbers satisfy small linear systems whose solutions are known in closed
form; every closed form here is recomputed by exact Gaussian elimination
on the linear system itself and the two are compared with zero tolerance.
Sign conclusions are then read off the exact values.

All arithmetic uses :class:`fractions.Fraction`.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from numbers import Rational

import numpy as np

from .errors import KirchhoffError, OutOfHypothesisError, SingularSystemError


class ClaimViolation(KirchhoffError, AssertionError):
    """A closed form or sign claim disagreed with the exact computation."""


def Q(x) -> Fraction:
    """Coerce ints, Fractions, decimal strings and floats (exactly) to Fraction."""
    if isinstance(x, Fraction):
        return x
    if isinstance(x, (int, Rational, str)):
        return Fraction(x)
    if isinstance(x, float):
        return Fraction(x)
    raise TypeError(f"cannot use {x!r} as an exact rational")


# -- exact linear algebra -------------------------------------------------------


def solve_exact(matrix, rhs) -> list[Fraction]:
    """Solve a square system by Gaussian elimination over the rationals."""
    n = len(matrix)
    aug = [[Q(v) for v in row] + [Q(b)] for row, b in zip(matrix, rhs)]
    for col in range(n):
        piv = next((r for r in range(col, n) if aug[r][col] != 0), None)
        if piv is None:
            raise SingularSystemError(f"matrix is singular (no pivot in column {col})")
        aug[col], aug[piv] = aug[piv], aug[col]
        pv = aug[col][col]
        for r in range(n):
            if r != col and aug[r][col] != 0:
                f = aug[r][col] / pv
                aug[r] = [x - f * y for x, y in zip(aug[r], aug[col])]
    return [aug[i][n] / aug[i][i] for i in range(n)]


def det_exact(matrix) -> Fraction:
    """Determinant by fraction-exact elimination with row swaps."""
    m = [[Q(v) for v in row] for row in matrix]
    n = len(m)
    det = Fraction(1)
    for col in range(n):
        piv = next((r for r in range(col, n) if m[r][col] != 0), None)
        if piv is None:
            return Fraction(0)
        if piv != col:
            m[col], m[piv] = m[piv], m[col]
            det = -det
        det *= m[col][col]
        for r in range(col + 1, n):
            f = m[r][col] / m[col][col]
            if f:
                m[r] = [x - f * y for x, y in zip(m[r], m[col])]
    return det


def residuals(matrix, x, rhs) -> list[Fraction]:
    return [sum((Q(a) * xi for a, xi in zip(row, x)), Fraction(0)) - Q(b) for row, b in zip(matrix, rhs)]


# -- the systems ----------------------------------------------------------------


def energy_row(p) -> list[Fraction]:
    """Coefficients of I = k in (alpha, beta, mu, delta)."""
    p = Q(p)
    return [Fraction(1, 2), Fraction(1, 2), Fraction(1, 4), -1 / (p + 1)]


def constraint_row(p) -> list[Fraction]:
    """Coefficients of G = 0."""
    p = Q(p)
    return [Fraction(3, 2), Fraction(5, 2), Fraction(3, 2), -(p + 4) / (p + 1)]


def degenerate_constraint_system(p) -> tuple[list, list]:
    """Energy/constraint rows plus the Nehari and Pohozaev rows of G'(u) = 0."""
    p = Q(p)
    rows = [
        energy_row(p),
        constraint_row(p),
        [Fraction(3), Fraction(5), Fraction(6), -(p + 4)],
        [Fraction(3, 2), Fraction(15, 2), Fraction(3), -3 * (p + 4) / (p + 1)],
    ]
    return rows, [Fraction(1), Fraction(0), Fraction(0), Fraction(0)]


def multiplier_matrix(lam, p) -> list[list[Fraction]]:
    """Coefficient matrix of the system for I'(u) = lam G'(u) on the manifold."""
    lam, p = Q(lam), Q(p)
    return [
        energy_row(p),
        constraint_row(p),
        [3 * lam - 1, 5 * lam - 1, 6 * lam - 1, -((p + 4) * lam - 1)],
        [(3 * lam - 1) / 2, 3 * (5 * lam - 1) / 2, (6 * lam - 1) / 2, -3 * ((p + 4) * lam - 1) / (p + 1)],
    ]


# -- energy/constraint pair -------------------------------------------------------


def step2_closed_form(k, alpha, beta, p) -> tuple[Fraction, Fraction]:
    k, alpha, beta, p = map(Q, (k, alpha, beta, p))
    if p == 2:
        raise SingularSystemError("p = 2: the (mu, delta) system is singular")
    mu = (4 * k * (p + 4) - 2 * alpha * (p + 1) - 2 * beta * (p - 1)) / (p - 2)
    delta = (6 * k - 3 * alpha / 2 - beta / 2) / (p - 2) * (p + 1)
    return mu, delta


def step2_solve(k, alpha, beta, p) -> tuple[Fraction, Fraction]:
    """(mu, delta) from the energy and constraint equations given k, alpha, beta.

    The closed form is compared with direct elimination of the 2x2 system.
    When mu > 0, p > 2 and alpha > 0 the resulting lower bound
    (alpha + beta)(p - 1) < 2k(p + 4) is asserted; the middle inequality
    of that chain needs alpha > 0, which holds on the manifold.
    """
    k, alpha, beta, p = map(Q, (k, alpha, beta, p))
    mu, delta = step2_closed_form(k, alpha, beta, p)
    e, g = energy_row(p), constraint_row(p)
    sys = [[e[2], e[3]], [g[2], g[3]]]
    rhs = [k - e[0] * alpha - e[1] * beta, -g[0] * alpha - g[1] * beta]
    mu_e, delta_e = solve_exact(sys, rhs)
    if (mu_e, delta_e) != (mu, delta):
        raise ClaimViolation(f"closed form ({mu}, {delta}) != elimination ({mu_e}, {delta_e})")
    if mu > 0 and p > 2 and alpha > 0:
        lhs = (alpha + beta) * (p - 1)
        mid = beta * (p - 1) + alpha * (p + 1)
        if not (lhs < mid < 2 * k * (p + 4)):
            raise ClaimViolation(f"lower-bound chain fails: {lhs} < {mid} < {2 * k * (p + 4)}")
    return mu, delta


@dataclass(frozen=True)
class SystemVerdict:
    """Exact outcome of one of the 4x4 systems.

    ``solution`` is (alpha, beta, mu, delta) when the system is regular;
    ``contradiction`` names the violated positivity requirement, if any.
    """

    det: Fraction
    solution: tuple | None = None
    contradiction: str | None = None
    singular: bool = False
    case: str = ""
    relation: tuple | None = None

    def to_dict(self) -> dict:
        return {
            "case": self.case,
            "det": rational_json(self.det),
            "singular": self.singular,
            "solution": None if self.solution is None else {
                name: rational_json(v) for name, v in zip(("alpha", "beta", "mu", "delta"), self.solution)
            },
            "relation": None if self.relation is None else [rational_json(v) for v in self.relation],
            "contradiction": self.contradiction,
        }


def rational_json(x: Fraction) -> dict:
    return {"numerator": x.numerator, "denominator": x.denominator}


def _positivity_failure(sol) -> str | None:
    bad = [name for name, v in zip(("alpha", "beta", "mu", "delta"), sol) if v <= 0]
    if not bad:
        return None
    return f"{', '.join(bad)} <= 0 but all four quantities must be positive"


def step3_closed_form(k, p) -> tuple[Fraction, ...]:
    k, p = Q(k), Q(p)
    return (
        10 * k * (p + 4) / (3 * p),
        2 * k * (p - 5) * (p + 4) / (p * (p - 1)),
        -20 * k * (p + 4) / (3 * p),
        -20 * k * (p + 1) / (p * (p - 1)),
    )


def step3_solve(k, p) -> SystemVerdict:
    """Solve the system a point with G'(u) = 0 on the manifold would satisfy."""
    k, p = Q(k), Q(p)
    if p in (0, 1):
        raise SingularSystemError(f"p = {p} makes the closed form singular")
    rows, rhs = degenerate_constraint_system(p)
    det = det_exact(rows)
    sol = tuple(solve_exact(rows, [k * b for b in rhs]))
    if any(residuals(rows, sol, [k * b for b in rhs])):
        raise ClaimViolation("elimination result does not satisfy the system")
    closed = step3_closed_form(k, p)
    if sol != closed:
        raise ClaimViolation(f"closed form {closed} != elimination {sol}")
    reason = None
    if k > 0 and sol[2] < 0 and sol[3] < 0:
        reason = "mu < 0 and delta < 0 but both must be positive"
    elif k > 0:
        reason = _positivity_failure(sol)
    return SystemVerdict(det, sol, reason, case="G'(u)=0")


def det_A_closed_form(lam, p) -> Fraction:
    lam, p = Q(lam), Q(p)
    if p == -1:
        raise SingularSystemError("p = -1")
    return lam * (p - 1) * (2 * p - 1 - 9 * p * lam) / (8 * (p + 1))


def det_A(lam, p) -> Fraction:
    """Determinant of the multiplier matrix; must equal its closed form exactly."""
    lam, p = Q(lam), Q(p)
    closed = det_A_closed_form(lam, p)
    value = det_exact(multiplier_matrix(lam, p))
    if value != closed:
        raise ClaimViolation(f"det A = {value} by elimination but {closed} by the closed form")
    return value


def critical_multiplier(p) -> Fraction:
    p = Q(p)
    return (2 * p - 1) / (9 * p)


def step4_closed_form(lam, p, k) -> tuple[Fraction, Fraction]:
    lam, p, k = map(Q, (lam, p, k))
    den = (p - 1) * (2 * p - 1 - 9 * p * lam)
    beta = -18 * k * (p - 5) * ((p + 4) * lam - 1) / den
    delta = 36 * k * (1 + p) * (5 * lam - 1) / den
    return beta, delta


def multiplier_bracket_holds(p) -> bool:
    """1/6 < (2p - 1)/(9p) < 1/5."""
    c = critical_multiplier(p)
    return Fraction(1, 6) < c < Fraction(1, 5)


def step4_case_analysis(lam, p, k) -> SystemVerdict:
    """Exclude a nonzero Lagrange multiplier ``lam`` for I'(u) = lam G'(u).

    lam = 0 is the consistent case.  Otherwise either the 4x4 system is
    regular and the exact (beta, delta) violate positivity, or lam equals
    the critical value (2p - 1)/(9p) and the last two equations force
    beta + (p - 2) delta = 0.
    """
    lam, p, k = map(Q, (lam, p, k))
    if not (k > 0 and 2 < p < 5):
        raise OutOfHypothesisError("need k > 0 and 2 < p < 5")
    if not multiplier_bracket_holds(p):
        raise ClaimViolation(f"bracket 1/6 < (2p-1)/(9p) < 1/5 fails at p = {p}")
    if lam == 0:
        return SystemVerdict(Fraction(0), None, None, singular=True, case="zero multiplier")
    crit = critical_multiplier(p)
    if lam == crit:
        return _degenerate_case(lam, p)

    mat = multiplier_matrix(lam, p)
    det = det_A(lam, p)
    sol = tuple(solve_exact(mat, [k, 0, 0, 0]))
    beta, delta = step4_closed_form(lam, p, k)
    if (sol[1], sol[3]) != (beta, delta):
        raise ClaimViolation(f"closed form (beta, delta) = ({beta}, {delta}) != elimination ({sol[1]}, {sol[3]})")
    # the two printed sign claims, on their stated lambda ranges
    if lam >= Fraction(1, 5) or lam < crit:
        if not delta <= 0:
            raise ClaimViolation(f"delta = {delta} > 0 at lambda = {lam}")
        reason = "delta <= 0 but delta must be positive"
    else:
        if not beta < 0:
            raise ClaimViolation(f"beta = {beta} >= 0 at lambda = {lam}")
        reason = "beta < 0 but beta must be positive"
    return SystemVerdict(det, sol, reason, case="regular")


def reduced_rows(p) -> list[list[Fraction]]:
    """The last two multiplier equations at lam = (2p - 1)/(9p), as printed."""
    p = Q(p)
    return [
        [-(p + 1) / (3 * p), (p - 5) / (9 * p), (p - 2) / (3 * p), -2 * (p + 1) * (p - 2) / (9 * p)],
        [-(p + 1) / (6 * p), (p - 5) / (6 * p), (p - 2) / (6 * p), -2 * (p - 2) / (3 * p)],
    ]


def _degenerate_case(lam, p) -> SystemVerdict:
    full = multiplier_matrix(lam, p)[2:]
    rows = reduced_rows(p)
    if full != rows:
        raise ClaimViolation(f"reduced equations differ from the matrix rows: {rows} vs {full}")
    r1, r2 = rows
    # combination c1 r1 + c2 r2 that kills the alpha coefficient
    c1, c2 = r2[0], -r1[0]
    comb = [c1 * x + c2 * y for x, y in zip(r1, r2)]
    if comb[2] != 0:
        raise ClaimViolation(f"eliminating alpha leaves mu coefficient {comb[2]}")
    if comb[1] == 0:
        raise ClaimViolation("combination has no beta term")
    relation = tuple(c / comb[1] for c in comb)  # coefficients of (alpha, beta, mu, delta)
    if relation != (0, 1, 0, p - 2):
        raise ClaimViolation(f"derived relation {relation} is not beta + (p-2) delta = 0")
    return SystemVerdict(
        Fraction(0), None,
        "beta + (p-2) delta = 0 with p > 2 forces beta or delta <= 0",
        singular=True, case="critical multiplier", relation=relation,
    )


# -- nonexistence ---------------------------------------------------------------


def _require_a(a) -> None:
    if not a > 1:
        raise OutOfHypothesisError(f"need a > 1, got {a}")


def nonexistence_threshold(a, b, C) -> Fraction:
    """lambda_0 = 1 / (4 b (a - 1) C^3)."""
    a, b, C = map(Q, (a, b, C))
    _require_a(a)
    if not (b > 0 and C > 0):
        raise OutOfHypothesisError("need b > 0 and C > 0")
    return 1 / (4 * b * (a - 1) * C**3)


def g_nonneg_condition(a, b, lam, norm_sq, l3_int, C=None) -> bool:
    """Discriminant test (int|u|^3)^2 <= 4(a-1) b lam (norm_sq)^3.

    With ``C`` given, whenever lam >= lambda_0(a, b, C) and ``l3_int``
    respects the embedding bound (int|u|^3)^2 <= norm_sq^3 / C^3, the
    condition must hold; a failure raises :class:`ClaimViolation`.
    """
    a, b, lam, norm_sq, l3_int = map(Q, (a, b, lam, norm_sq, l3_int))
    _require_a(a)
    holds = l3_int**2 <= 4 * (a - 1) * b * lam * norm_sq**3
    if C is not None:
        C = Q(C)
        if lam >= nonexistence_threshold(a, b, C) and l3_int**2 * C**3 <= norm_sq**3 and not holds:
            raise ClaimViolation("embedding bound and lam >= lambda_0 did not imply the discriminant test")
    return holds


H_GRID = np.geomspace(1e-6, 1e6, 20001)


def h_nonneg_check(p) -> bool:
    """h(t) = t^2 + t^3 - t^{p+1} >= 0 on t >= 0, zero only at t = 0.

    The argument is the factorization h = t^2 (1 + t - t^{p-1}) together
    with t^{p-1} <= max(1, t) < 1 + t when 0 < p - 1 <= 1.  Each piece is
    checked on a log grid over [1e-6, 1e6]; the grid is a falsification
    search, not a proof.
    """
    pq = Q(p)
    if not (1 < pq <= 2):
        raise OutOfHypothesisError(f"need 1 < p <= 2, got {p}")
    # t^2 * t^{p-1} = t^{p+1}: the factorization is an exponent identity
    factorization = Fraction(2) + (pq - 1) == pq + 1
    e = float(pq - 1)
    t = H_GRID
    power = t**e
    bound = bool(np.all(power <= np.maximum(1.0, t) * (1 + 4e-16)))
    # scan h / t^2 so that neither underflow near 0 nor cancellation of
    # t^3 against t^{p+1} for large t can hide a sign change
    positive = bool(np.all(1 + t - power > 0))
    return bool(factorization and bound and positive)
