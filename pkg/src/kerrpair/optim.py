"""Derivative-free 1-D minimisation."""
from __future__ import annotations

import math
from dataclasses import dataclass

INVPHI = (math.sqrt(5.0) - 1.0) / 2.0


@dataclass(frozen=True)
class GoldenResult:
    x: float
    fun: float
    nfev: int
    at_edge: bool


def golden_section(f, lo: float, hi: float, tol: float, maxiter: int = 200) -> GoldenResult:
    """Minimise ``f`` on ``[lo, hi]`` to an interval width of ``tol``.

    The end points are evaluated too; if one of them beats the interior
    optimum it is returned and ``at_edge`` is set, which is how callers
    detect a non-unimodal or too-narrow bracket.
    """
    if not hi > lo:
        raise ValueError("empty bracket")
    a, b = lo, hi
    c = b - INVPHI * (b - a)
    d = a + INVPHI * (b - a)
    fc, fd = f(c), f(d)
    nfev = 2
    for _ in range(maxiter):
        if b - a <= tol:
            break
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - INVPHI * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + INVPHI * (b - a)
            fd = f(d)
        nfev += 1
    x, fx = (c, fc) if fc < fd else (d, fd)
    f_lo, f_hi = f(lo), f(hi)
    nfev += 2
    edge = min((f_lo, lo), (f_hi, hi))
    if edge[0] < fx:
        return GoldenResult(edge[1], edge[0], nfev, True)
    # an interior optimum that collapsed onto the bracket end is still an edge hit
    near = abs(x - lo) <= 2 * tol or abs(x - hi) <= 2 * tol
    return GoldenResult(x, fx, nfev, near)
