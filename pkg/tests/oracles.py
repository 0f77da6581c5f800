"""Closed-form capture-cavity outputs for Fock-basis inputs present at the end of the pulse.

Each entry maps ``(left, right)`` occupations ``(n_system, n_capture)`` to a
function of ``(xi, eps)`` returning ``{(i, j): coefficient}`` for the capture
matrix ``sum c_ij |i><j|``.
"""
import math

r2, r3 = math.sqrt(2.0), math.sqrt(3.0)

OPTICAL_TABLE = {
    ((0, 0), (0, 0)): lambda x, e: {(0, 0): 1.0},
    ((1, 0), (0, 0)): lambda x, e: {(1, 0): math.sqrt(x)},
    ((1, 0), (1, 0)): lambda x, e: {(1, 1): x, (0, 0): 1 - x},
    ((2, 0), (0, 0)): lambda x, e: {(2, 0): x},
    ((2, 0), (1, 0)): lambda x, e: {(2, 1): math.sqrt(x) * x, (1, 0): math.sqrt(x) * r2 * (1 - x)},
    ((2, 0), (2, 0)): lambda x, e: {(2, 2): x * x, (1, 1): 2 * x * (1 - x), (0, 0): (1 - x) ** 2},
    ((3, 0), (0, 0)): lambda x, e: {(3, 0): x ** 1.5},
    ((3, 0), (1, 0)): lambda x, e: {(3, 1): x * x, (2, 0): x * r3 * (1 - x)},
    ((0, 1), (0, 0)): lambda x, e: {(1, 0): math.sqrt(e)},
    ((0, 1), (1, 0)): lambda x, e: {(1, 1): math.sqrt(x * e), (0, 0): -math.sqrt(x * e)},
    ((1, 1), (0, 0)): lambda x, e: {(2, 0): math.sqrt(2 * x * e)},
    ((1, 1), (1, 0)): lambda x, e: {(2, 1): math.sqrt(e) * r2 * x, (1, 0): math.sqrt(e) * (1 - 2 * x)},
    ((0, 1), (2, 0)): lambda x, e: {(1, 2): x * math.sqrt(e), (0, 1): -x * math.sqrt(e) * r2},
    ((0, 1), (0, 1)): lambda x, e: {(1, 1): e, (0, 0): 1 - e},
    ((1, 1), (0, 1)): lambda x, e: {(2, 1): math.sqrt(x) * r2 * e, (1, 0): math.sqrt(x) * (1 - 2 * e)},
    ((1, 1), (1, 1)): lambda x, e: {(2, 2): 2 * x * e, (1, 1): x + e - 4 * x * e, (0, 0): 1 - x - e + 2 * x * e},
    ((0, 2), (0, 0)): lambda x, e: {(2, 0): e},
    ((0, 2), (1, 0)): lambda x, e: {(2, 1): e * math.sqrt(x), (1, 0): -e * math.sqrt(x) * r2},
    # bosonic normalisation sqrt((n + m)! / (n! m!)) = sqrt(3) for one system and two capture photons
    ((1, 2), (0, 0)): lambda x, e: {(3, 0): e * math.sqrt(3 * x)},
    ((1, 2), (1, 0)): lambda x, e: {(3, 1): x * e * r3, (2, 0): e * (1 - 3 * x)},
}

# rows with at most one system excitation on each side carry over unchanged
MICROWAVE_TABLE = {k: f for k, f in OPTICAL_TABLE.items() if k[0][0] <= 1 and k[1][0] <= 1}
MICROWAVE_TABLE.update({
    ((2, 0), (0, 0)): lambda x, e: {},
    ((3, 0), (0, 0)): lambda x, e: {},
    ((2, 0), (1, 0)): lambda x, e: {},
    ((3, 0), (1, 0)): lambda x, e: {},
    ((2, 0), (2, 0)): lambda x, e: {(1, 1): 2 * x / 3, (0, 0): 1 - 2 * x / 3},
})


def expected_matrix(entry, xi, eps, dim):
    import numpy as np
    out = np.zeros((dim, dim), dtype=complex)
    for (i, j), c in entry(xi, eps).items():
        out[i, j] = c
    return out
