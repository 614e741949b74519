"""First-order asymptotic tensors of the ALE instanton family.

For a deformation parameter with Gram matrix Z and a finite symmetry group
of order |Gamma|, the weight is w = |Gamma| / pi^2 (the universal constant
1/(2 Vol(B^4)) = 1/pi^2 times the group order).  With full symmetrization
b.c := b (x) c + c (x) b and plain squares b^2 := b (x) b, the metric
correction is

  h = -w/r^6 [ sum_cyc Z_jj ((rdr)^2 + a_j^2 - a_k^2 - a_l^2)
             + Z_12 (a1.a2 - rdr.a3) + Z_13 (a1.a3 + rdr.a2)
             + Z_23 (a2.a3 - rdr.a1) ],

the Kahler-form correction is varpi_1 = -w (Z_11 theta_1 + Z_12 theta_2
+ Z_13 theta_3), and the complex-structure correction iota_1 is the
e-symmetric endomorphism with coupling

  e(iota_1 ., .) = w/r^6 [ (Z_33 - Z_22) a2.a3 - (Z_33 + Z_22) rdr.a1
                         - Z_23 ((rdr)^2 + a3^2 - a1^2 - a2^2) ].

h is exactly trace-free, divergence-free, and decomposes as
h = varpi_3''(., I3 .) + varpi_2'(., I2 .) + varpi_1(., I1 .) where the
primed tensors come from the Gram matrix with its first (first two) rows
and columns zeroed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import PoleAtOrigin
from .euclidean_base import (I1, I2, I3, STRUCTURES, quaternion_rotation,
                             so3_of_quaternion, theta)
from .so3_normalization import check_gram, zero_first, zero_first_two

VOL_B4 = math.pi ** 2 / 2.0  # euclidean volume of the unit 4-ball


@dataclass(frozen=True)
class GroupWeight:
    """|Gamma| and the normalization |Gamma|/pi^2 entering every tensor."""

    gamma_order: int

    def __post_init__(self):
        if self.gamma_order < 1:
            raise ValueError("group order must be a positive integer")

    @property
    def norm(self) -> float:
        return self.gamma_order / math.pi ** 2


def dihedral_weight(k: int) -> GroupWeight:
    return GroupWeight(4 * k)


def _sym(b, c):
    return np.outer(b, c) + np.outer(c, b)


def _pole_guard(p, what):
    p = np.asarray(p, dtype=float)
    rr = float(p @ p)
    if rr < 1e-16:
        raise PoleAtOrigin(f"{what} has an r^-4 pole at the origin")
    return p, rr


def h_zeta(gram: np.ndarray, weight: GroupWeight, p: np.ndarray,
           structures=STRUCTURES) -> np.ndarray:
    """Metric correction h at p (symmetric 4x4, trace-free)."""
    Z = check_gram(gram)
    p, rr = _pole_guard(p, "h")
    w = weight.norm
    P = p
    A = [J @ p for J in structures]
    sq = [np.outer(a, a) for a in A]
    sqP = np.outer(P, P)
    tot = sum(sq)
    t = (Z[0, 0] * (sqP + 2 * sq[0] - tot)
         + Z[1, 1] * (sqP + 2 * sq[1] - tot)
         + Z[2, 2] * (sqP + 2 * sq[2] - tot)
         + Z[0, 1] * (_sym(A[0], A[1]) - _sym(P, A[2]))
         + Z[0, 2] * (_sym(A[0], A[2]) + _sym(P, A[1]))
         + Z[1, 2] * (_sym(A[1], A[2]) - _sym(P, A[0])))
    return -w * t / rr ** 3


def _theta_triple(p, structures):
    P = np.asarray(p, dtype=float)
    rr = float(P @ P)
    A = [J @ P for J in structures]
    out = []
    for a in range(3):
        b, c = (a + 1) % 3, (a + 2) % 3
        W = (np.outer(P, A[a]) - np.outer(A[a], P)
             - (np.outer(A[b], A[c]) - np.outer(A[c], A[b])))
        out.append(W / rr ** 3)
    return out


def varpi1(gram: np.ndarray, weight: GroupWeight, p: np.ndarray,
           structures=STRUCTURES) -> np.ndarray:
    """Kahler-form correction: -w (Z_11 theta_1 + Z_12 theta_2 + Z_13 theta_3)."""
    Z = check_gram(gram)
    p, _ = _pole_guard(p, "varpi_1")
    th = _theta_triple(p, structures)
    return -weight.norm * (Z[0, 0] * th[0] + Z[0, 1] * th[1] + Z[0, 2] * th[2])


def varpi2(gram: np.ndarray, weight: GroupWeight, p: np.ndarray,
           structures=STRUCTURES) -> np.ndarray:
    """Second 2-form correction at the once-zeroed level: -w (Z_22 theta_2 + Z_23 theta_3)."""
    Z = check_gram(gram)
    p, _ = _pole_guard(p, "varpi_2")
    th = _theta_triple(p, structures)
    return -weight.norm * (Z[1, 1] * th[1] + Z[1, 2] * th[2])


def varpi3(gram: np.ndarray, weight: GroupWeight, p: np.ndarray,
           structures=STRUCTURES) -> np.ndarray:
    """Third 2-form correction at the twice-zeroed level: -w Z_33 theta_3."""
    Z = check_gram(gram)
    p, _ = _pole_guard(p, "varpi_3")
    th = _theta_triple(p, structures)
    return -weight.norm * Z[2, 2] * th[2]


def varpi_row(j: int, gram: np.ndarray, weight: GroupWeight, p: np.ndarray,
              structures=STRUCTURES) -> np.ndarray:
    """Row map -w sum_k Z[j-1, k] theta_k; the SO(3)-equivariant 2-form content."""
    Z = check_gram(gram)
    th = _theta_triple(p, structures)
    return -weight.norm * sum(Z[j - 1, k] * th[k] for k in range(3))


def iota1(gram: np.ndarray, weight: GroupWeight, p: np.ndarray) -> np.ndarray:
    """Complex-structure correction as an endomorphism (indices raised with e).

    e-symmetric and anticommuting with I1.
    """
    Z = check_gram(gram)
    p, rr = _pole_guard(p, "iota_1")
    w = weight.norm
    P = p
    A = [J @ p for J in STRUCTURES]
    T = ((Z[2, 2] - Z[1, 1]) * _sym(A[1], A[2])
         - (Z[2, 2] + Z[1, 1]) * _sym(P, A[0])
         - Z[1, 2] * (np.outer(P, P) + np.outer(A[2], A[2])
                      - np.outer(A[0], A[0]) - np.outer(A[1], A[1])))
    return w * T / rr ** 3


def iota1_coupling(gram: np.ndarray, weight: GroupWeight, p: np.ndarray) -> np.ndarray:
    """The (0,2)-coupling e(iota_1 ., .); numerically the same matrix as iota1."""
    return iota1(gram, weight, p)


def h_from_decomposition(gram: np.ndarray, weight: GroupWeight, p: np.ndarray) -> np.ndarray:
    """Independent route to h: varpi_3''(., I3 .) + varpi_2'(., I2 .) + varpi_1(., I1 .).

    S(X, Y) = W(X, I Y) turns each 2-form into a symmetric tensor: S = W @ I.
    """
    Z = check_gram(gram)
    Zp = zero_first(Z)
    Zpp = zero_first_two(Z)
    return (varpi3(Zpp, weight, p) @ I3
            + varpi2(Zp, weight, p) @ I2
            + varpi1(Z, weight, p) @ I1)


def perturbed_structure_field(gram: np.ndarray, weight: GroupWeight):
    """Evaluator p -> I1 + iota_1(p), the first-order model complex structure."""
    def J(p):
        return I1 + iota1(gram, weight, p)
    return J


def model_kahler_form(gram: np.ndarray, weight: GroupWeight):
    """Evaluator p -> omega_1^e + varpi_1(p), the first-order model Kahler form."""
    def W(p):
        return I1.T + varpi1(gram, weight, p)
    return W


# ---------------------------------------------------------------------------
# Sphere-Laplacian system and the dihedral invariant-theory kernel
# ---------------------------------------------------------------------------

def sphere_directions(p: np.ndarray):
    """Radial e_0 = x/r and tangential e_j = I_j x / r at p."""
    p = np.asarray(p, dtype=float)
    r = float(np.linalg.norm(p))
    return p / r, [J @ p / r for J in STRUCTURES]


def sphere_gradient(f, p, direction, h: float = 1e-5) -> float:
    """Directional derivative of f along a unit tangent vector at p/|p|."""
    p = np.asarray(p, dtype=float)
    d = np.asarray(direction, dtype=float)
    return (f(p + h * d) - f(p - h * d)) / (2 * h)


def sphere_laplacian(f, p, h: float = 1e-4) -> float:
    """Laplace-Beltrami operator of S^3 (positive spectrum: 8 on degree-2 harmonics).

    Computed on the degree-0 homogeneous extension F(x) = f(x/|x|).
    """
    p = np.asarray(p, dtype=float)
    p = p / np.linalg.norm(p)

    def F(x):
        return f(x / np.linalg.norm(x))

    lap = 0.0
    for i in range(4):
        e = np.zeros(4)
        e[i] = h
        lap += (F(p + e) - 2 * F(p) + F(p - e)) / h ** 2
    return -lap


def sphere_system_check(f, g, h_fun, p: np.ndarray, step: float = 1e-4):
    """Residuals of the two coupled sphere systems at p/|p|.

    First system (harmonicity of f theta_1 + g theta_2 + h theta_3 for
    sphere functions f, g, h):
        Lap f - 4 (e3.g - e2.h),  Lap g - 4 (e1.h - e3.f),
        Lap h - 4 (e2.f - e1.g).
    Second system (the degree -6 analogue on ftilde = r^2 f etc.):
        Lap ft - 16 ft - 4 (e3.gt) + 4 (e2.ht)  and cyclic.
    Returns (res1, res2), each a 3-vector.
    """
    p = np.asarray(p, dtype=float)
    pn = p / np.linalg.norm(p)
    _, tang = sphere_directions(pn)
    e1, e2, e3 = tang

    def lap(F):
        return sphere_laplacian(F, pn, step)

    def dd(F, d):
        return sphere_gradient(F, pn, d, step)

    res1 = np.array([
        lap(f) - 4 * (dd(g, e3) - dd(h_fun, e2)),
        lap(g) - 4 * (dd(h_fun, e1) - dd(f, e3)),
        lap(h_fun) - 4 * (dd(f, e2) - dd(g, e1)),
    ])
    res2 = np.array([
        lap(f) - 16 * f(pn) - 4 * dd(g, e3) + 4 * dd(h_fun, e2),
        lap(g) - 16 * g(pn) - 4 * dd(h_fun, e1) + 4 * dd(f, e3),
        lap(h_fun) - 16 * h_fun(pn) - 4 * dd(f, e2) + 4 * dd(g, e1),
    ])
    return res1, res2


def harmonic_quadratics():
    """Basis of the 9-dimensional space of degree-2 harmonic polynomials on R^4."""
    basis = []
    for j in (1, 2, 3):
        basis.append(lambda x, j=j: x[0] ** 2 - x[j] ** 2)
    for a in range(4):
        for b in range(a + 1, 4):
            basis.append(lambda x, a=a, b=b: x[a] * x[b])
    return basis


def dihedral_average_operator(k: int, rng=None) -> np.ndarray:
    """Matrix of the D_k-averaging projector on degree-2 harmonics.

    Coordinates are taken in the 9-element basis of ``harmonic_quadratics``
    by sampling; the operator vanishes identically for every k >= 2 (there
    is no invariant degree-2 harmonic polynomial).
    """
    from .euclidean_base import DihedralGroup
    basis = harmonic_quadratics()
    if rng is None:
        rng = np.random.default_rng(20240)
    pts = rng.normal(size=(24, 4))
    Mb = np.array([[b(x) for b in basis] for x in pts])  # 24 x 9
    grp = DihedralGroup(k)
    els = grp.elements()
    out = np.zeros((9, 9))
    for j, b in enumerate(basis):
        avg_vals = np.zeros(len(pts))
        for gmat in els:
            avg_vals += np.array([b(gmat @ x) for x in pts])
        avg_vals /= len(els)
        coef, *_ = np.linalg.lstsq(Mb, avg_vals, rcond=None)
        out[:, j] = coef
    return out


def equivariance_data(rng):
    """A random unit quaternion with its 4d rotation and SO(3) image."""
    q = rng.normal(size=4)
    q /= np.linalg.norm(q)
    return q, quaternion_rotation(q), so3_of_quaternion(q)
