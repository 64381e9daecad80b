"""Gauss-Legendre and Gauss-Lobatto-Legendre quadrature rules on [-1, 1].

Rules are generated on demand by Newton iteration on the Legendre three-term
recurrence, starting from Chebyshev-point initial guesses.  No tables are
embedded, so every supported point count goes through the same code path and
repeated calls are bitwise reproducible.

The two families:

* GL:  the q roots of P_q, exact for polynomials of degree 2q-1.
* GLL: endpoints -1, +1 plus the q-2 roots of P'_{q-1}, exact for degree 2q-3.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# Newton solve parameters.  Convergence is quadratic from the Chebyshev
# guesses; 100 iterations is a generous safety margin, not a tuning knob.
_NEWTON_TOL = 1e-15
_NEWTON_MAX_ITERS = 100

# Largest supported point count.  Covers order p = 15 with q = p + 2.
MAX_POINTS = 17


@dataclass(frozen=True)
class QuadRule1D:
    """A one-dimensional quadrature rule on the reference interval [-1, 1].

    Attributes:
        kind: "GL" or "GLL".
        q: number of points.
        points: strictly increasing array of q abscissae in [-1, 1].
        weights: array of q positive weights summing to 2.
    """

    kind: str
    q: int
    points: np.ndarray
    weights: np.ndarray

    def __post_init__(self) -> None:
        if self.kind not in ("GL", "GLL"):
            raise ValueError(f"unknown quadrature kind {self.kind!r}")
        if self.points.shape != (self.q,) or self.weights.shape != (self.q,):
            raise ValueError("points/weights shape does not match q")
        # Freeze the arrays so a rule can be shared across threads safely.
        self.points.flags.writeable = False
        self.weights.flags.writeable = False

    def integrate(self, values: np.ndarray) -> float:
        """Apply the rule to function values sampled at the points."""
        return float(np.dot(self.weights, values))


def legendre_eval(p: int, x):
    """Evaluate the Legendre polynomial P_p and its derivative at x.

    Uses the three-term recurrence for the values together with the
    derivative recurrence P'_n = (2n-1) P_{n-1} + P'_{n-2}, which stays
    finite at the interval endpoints.

    Args:
        p: polynomial degree, >= 0.
        x: scalar or array of evaluation points.

    Returns:
        Tuple (P_p(x), P'_p(x)) with the same shape as x.
    """
    if p < 0:
        raise ValueError("degree p must be nonnegative")
    x = np.asarray(x, dtype=float)
    ones = np.ones_like(x)
    if p == 0:
        return (ones if x.ndim else 1.0, np.zeros_like(x) if x.ndim else 0.0)
    pm1, dm1 = ones, np.zeros_like(x)  # P_0, P'_0
    pn, dn = x.copy(), ones.copy()     # P_1, P'_1
    for n in range(2, p + 1):
        a = (2.0 * n - 1.0) / n
        b = (n - 1.0) / n
        pm1, pn = pn, a * x * pn - b * pm1
        dm1, dn = dn, (2.0 * n - 1.0) * pm1 + dm1
    if x.ndim == 0:
        return float(pn), float(dn)
    return pn, dn


def _check_order(q: int, minimum: int) -> None:
    if q < minimum:
        raise ValueError(f"point count q={q} below minimum {minimum}")
    if q > MAX_POINTS:
        raise ValueError(
            f"point count q={q} exceeds supported maximum {MAX_POINTS}")


def _newton(x0: np.ndarray, f_df) -> np.ndarray:
    """Newton-iterate every entry of x0 with update rule f/df."""
    x = x0.copy()
    for _ in range(_NEWTON_MAX_ITERS):
        f, df = f_df(x)
        dx = f / df
        x -= dx
        if np.max(np.abs(dx)) < _NEWTON_TOL:
            return x
    raise RuntimeError("quadrature root finding did not converge")


def _symmetrize(points: np.ndarray, weights: np.ndarray):
    # Enforce the exact reflection symmetry of both families; Newton gets
    # within an ulp, this pins it bitwise (and zeroes the middle point).
    points = 0.5 * (points - points[::-1])
    weights = 0.5 * (weights + weights[::-1])
    return points, weights


def gauss_legendre(q: int) -> QuadRule1D:
    """Build the q-point Gauss-Legendre rule.

    Points are the roots of P_q; weights are 2 / ((1 - x^2) P'_q(x)^2).

    Args:
        q: number of points, 1 <= q <= 17.

    Returns:
        QuadRule1D of kind "GL", exact for degree 2q - 1.
    """
    _check_order(q, 1)
    i = np.arange(q, dtype=float)
    guess = -np.cos(np.pi * (i + 0.75) / (q + 0.5))
    x = _newton(guess, lambda t: legendre_eval(q, t))
    _, dp = legendre_eval(q, x)
    w = 2.0 / ((1.0 - x * x) * dp * dp)
    x, w = _symmetrize(x, w)
    return QuadRule1D("GL", q, x, w)


def gauss_lobatto_legendre(q: int) -> QuadRule1D:
    """Build the q-point Gauss-Lobatto-Legendre rule.

    Endpoints are exactly -1 and +1; interior points are the roots of
    P'_{q-1}; weights are 2 / (q (q-1) P_{q-1}(x)^2).

    Args:
        q: number of points, 2 <= q <= 17.

    Returns:
        QuadRule1D of kind "GLL", exact for degree 2q - 3.
    """
    _check_order(q, 2)
    n = q - 1  # degree whose derivative roots are the interior points
    if q == 2:
        interior = np.empty(0)
    else:
        i = np.arange(1, q - 1, dtype=float)
        guess = -np.cos(np.pi * i / n)

        def f_df(t):
            pn, dn = legendre_eval(n, t)
            # P'' from the Legendre ODE; interior points keep 1 - t^2 > 0.
            d2 = (2.0 * t * dn - n * (n + 1.0) * pn) / (1.0 - t * t)
            return dn, d2

        interior = _newton(guess, f_df)
    x = np.concatenate(([-1.0], interior, [1.0]))
    pn, _ = legendre_eval(n, x)
    w = 2.0 / (q * n * pn * pn)
    x, w = _symmetrize(x, w)
    x[0], x[-1] = -1.0, 1.0
    return QuadRule1D("GLL", q, x, w)


def make_rule(kind: str, q: int) -> QuadRule1D:
    """Dispatch on the rule family name ("GL" or "GLL")."""
    if kind == "GL":
        return gauss_legendre(q)
    if kind == "GLL":
        return gauss_lobatto_legendre(q)
    raise ValueError(f"unknown quadrature kind {kind!r}")
