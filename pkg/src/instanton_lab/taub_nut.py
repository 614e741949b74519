"""Taub-NUT metric family f_m on C^2 in LeBrun coordinates.

The auxiliary functions u, v : C^2 -> [0, inf) solve the implicit system

    |z1| = exp(m (u^2 - v^2)) u,      |z2| = exp(m (v^2 - u^2)) v,

from which y1 = (u^2 - v^2)/2, y2 + i y3 = -i z1 z2, R = (u^2 + v^2)/2,
V = (1 + 4 m R)/(2 R) and the potential

    phi_m = (u^2 + v^2 + m (u^4 + v^4))/4 = (R + m (R^2 + y1^2))/2.

The 1-forms dy_j come from exact implicit differentiation (never finite
differences), eta = V * I1(dy1), and

    f_m = V (dy1^2 + dy2^2 + dy3^2) + V^-1 eta^2 = ddc_{I1}(phi_m)(., I1 .),

with det f_m = 1 (vol = Omega_e) and f_m(0) = e.  Useful exact identities
(all tested):  r^2 = 2 (R cosh(4 m y1) + y1 sinh(4 m y1)),
u^2 v^2 = |z1 z2|^2,  R <= 2 r^2,  and the mass-rescaling law
f_m(s p) = f_{m s^2}(p) as matrices (equivalent to kappa_s^* f_m = s^2 f_{m s^2}).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import NoConvergence, OriginFrame, PoleAtOrigin
from .euclidean_base import I1, I2, I3, act_on_covector

_LOG_TINY = -745.0  # exp underflows below this


@dataclass(frozen=True)
class TaubNutCoords:
    """LeBrun data at a point: u, v >= 0, fibration coordinates and V."""

    u: float
    v: float
    y1: float
    y2: float
    y3: float
    R: float
    V: float
    residual: float
    iterations: int

    @property
    def y(self) -> np.ndarray:
        return np.array([self.y1, self.y2, self.y3])


def check_mass(m: float) -> float:
    m = float(m)
    if not (m > 0) or not math.isfinite(m):
        raise ValueError(f"mass parameter must be a positive real, got {m}")
    return m


def fibre_length_at_infinity(m: float) -> float:
    """L(m) = pi sqrt(2/m), the limit of 2 pi V^{-1/2}."""
    return math.pi * math.sqrt(2.0 / check_mass(m))


def _solve_axis(lnC: float, m: float):
    """Solve 2 m e^x + x = lnC for x = log(a); strictly monotone in x."""
    F = lambda x: 2 * m * math.exp(x) + x - lnC if x > _LOG_TINY else x - lnC
    lo, hi = _LOG_TINY, 710.0 - math.log(2 * m) if m > 1e-300 else 710.0
    # bracket then polish with Newton (global convergence: F monotone)
    if F(lo) > 0:
        return lo, 0
    x = min(lnC, hi)
    trace = 0
    for it in range(100):
        fx = 2 * m * math.exp(x) + x - lnC
        if fx > 0:
            hi = x
        else:
            lo = x
        dfx = 2 * m * math.exp(x) + 1.0
        step = -fx / dfx
        xn = x + step
        if not (lo <= xn <= hi):
            xn = 0.5 * (lo + hi)
        if abs(xn - x) < 1e-16 * max(1.0, abs(x)):
            x = xn
            trace = it
            break
        x = xn
        trace = it
    return x, trace


def solve_lebrun(p: np.ndarray, m: float, tol: float = 1e-13) -> TaubNutCoords:
    """Solve the implicit system for (u, v) at p; residual is relative.

    The solve runs in the log variables (x, y) = (log u^2, log v^2), which
    enforce positivity and condition the exponential stiffness.  The sum
    equation is linear there and solved exactly, x + y = log|z1 z2|^2 (the
    product identity u^2 v^2 = |z1 z2|^2 from multiplying the two defining
    equations), so the system reduces to the difference coordinate t with

        F(t) = 8 m sqrt(AB) sinh(t) + 2 t - log(A/B) = 0,
        A = |z1|^2,  B = |z2|^2,  u^2 = sqrt(AB) e^t,  v^2 = sqrt(AB) e^-t.

    F is strictly increasing with F(0) F(log(A/B)/2) <= 0, so a damped
    Newton iteration with a bisection safeguard on that bracket converges
    for every input; the sinh form also avoids the catastrophic
    cancellation in u^2 - v^2 that limits a naive 2D iteration to ~1e-11.
    Points on the axes z1 = 0 / z2 = 0 use the exact reduction v = 0 with
    a 1D solve for u.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    m = check_mass(m)
    p = np.asarray(p, dtype=float)
    A = float(p[0] ** 2 + p[1] ** 2)
    B = float(p[2] ** 2 + p[3] ** 2)
    z1z2 = complex(p[0], p[1]) * complex(p[2], p[3])
    y2, y3 = z1z2.imag, -z1z2.real

    if A == 0.0 and B == 0.0:
        return TaubNutCoords(0., 0., 0., 0., 0., 0., math.inf, 0., 0)
    if A == 0.0 or B == 0.0:
        C = max(A, B)
        x, its = _solve_axis(math.log(C), m)
        a = math.exp(x)
        res = abs(math.exp(2 * m * a) * a - C) / (1.0 + C)
        if res > tol:
            raise NoConvergence(
                f"axis solve failed at p={p.tolist()}, m={m}: residual {res:.3e}")
        u, v = (math.sqrt(a), 0.0) if A >= B else (0.0, math.sqrt(a))
        y1 = 0.5 * a if A >= B else -0.5 * a
        R = 0.5 * a
        V = (1.0 + 4 * m * R) / (2 * R)
        return TaubNutCoords(u, v, y1, y2, y3, R, V, res, its)

    half_ln_ratio = 0.5 * (math.log(A) - math.log(B))
    sqAB = math.sqrt(A) * math.sqrt(B)
    c = 4.0 * m * sqAB

    def F(t):
        return c * math.sinh(t) + t - half_ln_ratio

    def Fp(t):
        return c * math.cosh(t) + 1.0

    lo, hi = (0.0, half_ln_ratio) if half_ln_ratio >= 0 else (half_ln_ratio, 0.0)
    # seed: exact in the two regimes c -> 0 and c -> inf
    t = half_ln_ratio if c < 1.0 else math.asinh(half_ln_ratio / c)
    t = min(max(t, lo), hi)
    trace = []
    for it in range(100):
        ft = F(t)
        trace.append((it, abs(ft)))
        if abs(ft) <= 4e-16 * (c * abs(math.sinh(t)) + abs(t) + abs(half_ln_ratio) + 1):
            break
        if ft > 0:
            hi = t
        else:
            lo = t
        tn = t - ft / Fp(t)
        if not (lo <= tn <= hi):
            tn = 0.5 * (lo + hi)  # bisection safeguard
        if tn == t:
            break
        t = tn

    a = sqAB * math.exp(t)
    b = sqAB * math.exp(-t)
    y1 = sqAB * math.sinh(t)
    R = sqAB * math.cosh(t)
    # relative residual of the original equations, via the stable difference
    res = abs(math.exp(min(4 * m * y1, 700.0)) * a - A) / (1.0 + A)
    res = max(res, abs(math.exp(min(-4 * m * y1, 700.0)) * b - B) / (1.0 + B))
    if res > tol:
        raise NoConvergence(
            f"LeBrun solve failed at p={p.tolist()}, m={m}: residual {res:.3e}",
            trace=trace)
    V = (1.0 + 4 * m * R) / (2 * R)
    return TaubNutCoords(math.sqrt(a), math.sqrt(b), y1, y2, y3, R, V, res,
                         len(trace))


def lebrun_residual(p: np.ndarray, m: float, coords: TaubNutCoords) -> float:
    """Relative residual of the defining system at the solved (u, v).

    Uses 2m(u^2 - v^2) = 4m y1 with the stably-stored y1.
    """
    p = np.asarray(p, dtype=float)
    A = p[0] ** 2 + p[1] ** 2
    B = p[2] ** 2 + p[3] ** 2
    a, b = coords.u ** 2, coords.v ** 2
    r1 = abs(math.exp(min(4 * m * coords.y1, 700.0)) * a - A) / (1.0 + A)
    r2 = abs(math.exp(min(-4 * m * coords.y1, 700.0)) * b - B) / (1.0 + B)
    return max(r1, r2)


def potential(p: np.ndarray, m: float, coords: TaubNutCoords | None = None) -> float:
    """LeBrun potential phi_m; both closed forms agree to solver precision."""
    c = coords if coords is not None else solve_lebrun(p, m)
    return 0.5 * (c.R + m * (c.R ** 2 + c.y1 ** 2))


def potential_quartic_form(p: np.ndarray, m: float, coords: TaubNutCoords | None = None) -> float:
    """The (u, v)-form of the potential, (u^2 + v^2 + m(u^4 + v^4))/4."""
    c = coords if coords is not None else solve_lebrun(p, m)
    return 0.25 * (c.u ** 2 + c.v ** 2 + m * (c.u ** 4 + c.v ** 4))


def xi(p: np.ndarray) -> np.ndarray:
    """Generator of the circle action (z1, z2) -> (e^{it} z1, e^{-it} z2)."""
    return np.array([-p[1], p[0], p[3], -p[2]], dtype=float)


def dy_forms(p: np.ndarray, m: float, coords: TaubNutCoords | None = None):
    """(dy1, dy2, dy3, eta) at p as exact covector values.

    dy1 = [e^{-4 m y1} (x1 dx1 + x2 dx2) - e^{4 m y1} (x3 dx3 + x4 dx4)] / (1 + 4 m R)
    comes from solving the implicit-function linear system; dy2, dy3 are the
    exact differentials of Im(z1 z2), -Re(z1 z2); eta = V * I1(dy1).
    """
    p = np.asarray(p, dtype=float)
    c = coords if coords is not None else solve_lebrun(p, m)
    if c.R == 0.0:
        raise PoleAtOrigin("fibration data degenerates at the origin")
    em, ep = math.exp(-4 * m * c.y1), math.exp(4 * m * c.y1)
    dy1 = np.array([em * p[0], em * p[1], -ep * p[2], -ep * p[3]]) / (1.0 + 4 * m * c.R)
    dy2 = np.array([p[3], p[2], p[1], p[0]])
    dy3 = np.array([-p[2], p[3], -p[0], p[1]])
    eta = c.V * act_on_covector(I1, dy1)
    return dy1, dy2, dy3, eta


def metric(p: np.ndarray, m: float, coords: TaubNutCoords | None = None) -> np.ndarray:
    """f_m(p) as a symmetric 4x4 matrix; extends to the origin by f_m(0) = e."""
    p = np.asarray(p, dtype=float)
    if float(p @ p) == 0.0:
        return np.eye(4)
    c = coords if coords is not None else solve_lebrun(p, m)
    dy1, dy2, dy3, eta = dy_forms(p, m, c)
    F = c.V * (np.outer(dy1, dy1) + np.outer(dy2, dy2) + np.outer(dy3, dy3))
    F += np.outer(eta, eta) / c.V
    return F


def metric_field(m: float):
    """Closed-form evaluator p -> f_m(p) for the differential operators."""
    return lambda p: metric(p, m)


def metric_factors(m: float):
    """f_m as weighted covector squares with exact derivatives.

    Returns an evaluator q -> [(w, beta, dw, dbeta), ...] with
    f_m = sum w beta (x) beta, dw[a] = d_a w and dbeta[a, b] = d_a beta_b
    all in closed form.  The factored representation keeps frame-gauge
    curvature arithmetic free of the heavy/light cancellation of the
    assembled matrix, and the analytic derivatives remove the inner
    finite-difference layer from Christoffel symbols.
    """
    def factors(p):
        c = solve_lebrun(p, m)
        dy1, dy2, dy3, et = dy_forms(p, m, c)
        ddy1, ddy2, ddy3, deta = dy_form_derivatives(p, m, c)
        dR = (c.y1 * dy1 + c.y2 * dy2 + c.y3 * dy3) / c.R
        dV = -dR / (2 * c.R ** 2)
        # 1/V = 2R/(1+4mR), so d(1/V) = 2 dR/(1+4mR)^2
        dVinv = 2.0 * dR / (1.0 + 4 * m * c.R) ** 2
        return [(c.V, dy1, dV, ddy1), (c.V, dy2, dV, ddy2),
                (c.V, dy3, dV, ddy3), (1.0 / c.V, et, dVinv, deta)]
    return factors


def beth_pulled_metric_factors(m: float, bmap):
    """Factored form of beth^* f_m: weights V o beth, covectors D beth^T (dy_j o beth)."""
    def factors(p):
        q = bmap(p)
        D = bmap.differential(p)
        c = solve_lebrun(q, m)
        dy1, dy2, dy3, et = dy_forms(q, m, c)
        return [(c.V, D.T @ dy1), (c.V, D.T @ dy2), (c.V, D.T @ dy3),
                (1.0 / c.V, D.T @ et)]
    return factors


def dy_form_derivatives(p: np.ndarray, m: float, coords: TaubNutCoords | None = None):
    """Exact spatial derivatives d_a (dy_j)_b and d_a eta_b, shape (4, 4) each.

    Obtained by differentiating the implicit-solution formulas once more;
    no finite differences anywhere.
    """
    p = np.asarray(p, dtype=float)
    c = coords if coords is not None else solve_lebrun(p, m)
    if c.R == 0.0:
        raise PoleAtOrigin("fibration data degenerates at the origin")
    dy1, dy2, dy3, et = dy_forms(p, m, c)
    dR = (c.y1 * dy1 + c.y2 * dy2 + c.y3 * dy3) / c.R
    em, ep = math.exp(-4 * m * c.y1), math.exp(4 * m * c.y1)
    den = 1.0 + 4 * m * c.R
    x12 = np.array([p[0], p[1], 0.0, 0.0])
    x34 = np.array([0.0, 0.0, p[2], p[3]])
    D12 = np.diag([1.0, 1.0, 0.0, 0.0])
    D34 = np.diag([0.0, 0.0, 1.0, 1.0])
    # N = em * x12 - ep * x34 ;  dy1 = N / den
    dN = (em * D12 - ep * D34
          - 4 * m * np.outer(dy1, em * x12 + ep * x34))
    N = em * x12 - ep * x34
    ddy1 = dN / den - np.outer(dR, N) * (4 * m / den ** 2)
    ddy2 = np.array([[0., 0, 0, 1], [0, 0, 1, 0], [0, 1, 0, 0], [1, 0, 0, 0]])
    ddy3 = np.array([[0., 0, -1, 0], [0, 0, 0, 1], [-1, 0, 0, 0], [0, 1, 0, 0]])
    dV = -dR / (2 * c.R ** 2)  # V = 2m + 1/(2R)
    # eta_b = V (I1 dy1)_b with (I1 beta) = I1 @ beta for the antisymmetric I1
    deta = np.outer(dV, I1 @ dy1) + c.V * (ddy1 @ I1.T)
    return ddy1, ddy2, ddy3, deta


def metric_derivatives(p: np.ndarray, m: float) -> np.ndarray:
    """Exact dG[a, b, c] = d_a (f_m)_{bc}; feeds analytic Christoffel symbols."""
    p = np.asarray(p, dtype=float)
    c = solve_lebrun(p, m)
    dy1, dy2, dy3, et = dy_forms(p, m, c)
    ddy1, ddy2, ddy3, deta = dy_form_derivatives(p, m, c)
    dR = (c.y1 * dy1 + c.y2 * dy2 + c.y3 * dy3) / c.R
    dV = -dR / (2 * c.R ** 2)
    dG = np.zeros((4, 4, 4))
    for beta, dbeta in ((dy1, ddy1), (dy2, ddy2), (dy3, ddy3)):
        pair = np.einsum('ab,c->abc', dbeta, beta)
        dG += c.V * (pair + np.einsum('abc->acb', pair))
        dG += np.einsum('a,b,c->abc', dV, beta, beta)
    pair = np.einsum('ab,c->abc', deta, et)
    dG += (pair + np.einsum('abc->acb', pair)) / c.V
    dG -= np.einsum('a,b,c->abc', dV / c.V ** 2, et, et)
    return dG


def kahler_form(p: np.ndarray, m: float) -> np.ndarray:
    """omega_f = f_m(I1 ., .); equals ddc_{I1} phi_m (verified numerically)."""
    return I1.T @ metric(p, m)


def eta(p: np.ndarray, m: float) -> np.ndarray:
    return dy_forms(p, m)[3]


def dphi(p: np.ndarray, m: float, coords: TaubNutCoords | None = None) -> np.ndarray:
    """Exact differential of phi_m: (1 + 2 m R)/2 dR + m y1 dy1."""
    p = np.asarray(p, dtype=float)
    c = coords if coords is not None else solve_lebrun(p, m)
    if c.R == 0.0:
        return np.zeros(4)
    dy1, dy2, dy3, _ = dy_forms(p, m, c)
    dR = (c.y1 * dy1 + c.y2 * dy2 + c.y3 * dy3) / c.R
    return 0.5 * (1.0 + 2 * m * c.R) * dR + m * c.y1 * dy1


def fibre_length(p: np.ndarray, m: float) -> float:
    """Length of the circle fibre through p, 2 pi V^{-1/2}."""
    c = solve_lebrun(p, m)
    if c.R == 0.0:
        raise PoleAtOrigin("fibre degenerates at the origin")
    return 2 * math.pi / math.sqrt(c.V)


def zeta_frame(p: np.ndarray, m: float, coords: TaubNutCoords | None = None) -> np.ndarray:
    """Horizontal lift of d/dy2: the unique vector dual to dy2 in the coframe.

    The displayed closed form for this vector field is typographically
    corrupted in the source material, so it is defined here by the duality
    property (eta, dy1, dy2, dy3)(zeta) = (0, 0, 1, 0), which also forces
    V^{-1/2} zeta to be f-unit.
    """
    dy1, dy2, dy3, et = dy_forms(p, m, coords)
    M = np.vstack([et, dy1, dy2, dy3])
    return np.linalg.solve(M, np.array([0.0, 0.0, 1.0, 0.0]))


def frames(p: np.ndarray, m: float):
    """The f-orthonormal frame (e_0..e_3) and dual coframe (e_0^*..e_3^*).

    e = (V^{1/2} xi, -I1 V^{1/2} xi, V^{-1/2} zeta, V^{-1/2} I1 zeta),
    e^* = (V^{-1/2} eta, V^{1/2} dy1, V^{1/2} dy2, V^{1/2} dy3).
    """
    p = np.asarray(p, dtype=float)
    if float(p @ p) == 0.0:
        raise OriginFrame("frame requested at the origin")
    c = solve_lebrun(p, m)
    dy1, dy2, dy3, et = dy_forms(p, m, c)
    sv = math.sqrt(c.V)
    x = xi(p)
    zf = zeta_frame(p, m, c)
    e = (sv * x, -sv * (I1 @ x), zf / sv, (I1 @ zf) / sv)
    estar = (et / sv, sv * dy1, sv * dy2, sv * dy3)
    return e, estar


def companion_structures(p: np.ndarray, m: float):
    """J2, J3 solving f_m(J_j ., .) = omega_j^e pointwise: J_j = f_m^{-1} I_j.

    At the origin they reduce to I2, I3; away from it they satisfy the
    quaternion relations with I1 and are f_m-hermitian.
    """
    F = metric(p, m)
    return np.linalg.solve(F, I2), np.linalg.solve(F, I3)


def dalpha_dmu_y1(p: np.ndarray, mu: float) -> float:
    """Exact mass derivative d y_{1,mu} / d mu = -4 R_mu y_{1,mu} / (1 + 4 mu R_mu)."""
    c = solve_lebrun(p, mu)
    return -4.0 * c.R * c.y1 / (1.0 + 4.0 * mu * c.R)
