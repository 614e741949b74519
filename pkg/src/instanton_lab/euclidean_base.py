"""Flat hyperkahler base of R^4 ~ C^2.

Coordinates z1 = x1 + i*x2, z2 = x3 + i*x4.  The three standard complex
structures are the ones attached to the coordinate pairs

    I1: (z1, z2),   I2: (x1 + i*x3, x4 + i*x2),   I3: (x1 + i*x4, x2 + i*x3),

satisfying I1*I2*I3 = -Id.  The action of a complex structure J on a
covector is fixed once and for all as

    (J beta)(X) := -beta(J X),

which is the unique choice making theta_j = (1/4) ddc_{I_j}(r^-2) and
omega_j = (1/2) ddc_{I_j}(r^2/2) hold (both are verified in the tests).

Fields are closed-form evaluators: points are float arrays of shape (4,),
covector values are shape (4,), 2-form values are antisymmetric (4, 4)
matrices W with W[a, b] = omega(e_a, e_b), symmetric 2-tensors are
symmetric (4, 4) matrices.
"""

from __future__ import annotations

import numpy as np

from .errors import PoleAtOrigin

I1 = np.array([[0., -1, 0, 0], [1, 0, 0, 0], [0, 0, 0, -1], [0, 0, 1, 0]])
I2 = np.array([[0., 0, -1, 0], [0, 0, 0, 1], [1, 0, 0, 0], [0, -1, 0, 0]])
I3 = np.array([[0., 0, 0, -1], [0, 0, -1, 0], [0, 1, 0, 0], [1, 0, 0, 0]])
STRUCTURES = (I1, I2, I3)

EPS4 = np.zeros((4, 4, 4, 4))
for _perm, _sgn in (
    ((0, 1, 2, 3), 1), ((0, 2, 3, 1), 1), ((0, 3, 1, 2), 1),
    ((1, 0, 3, 2), 1), ((1, 2, 0, 3), 1), ((1, 3, 2, 0), 1),
    ((2, 0, 1, 3), 1), ((2, 1, 3, 0), 1), ((2, 3, 0, 1), 1),
    ((3, 0, 2, 1), 1), ((3, 1, 0, 2), 1), ((3, 2, 1, 0), 1),
    ((0, 1, 3, 2), -1), ((0, 2, 1, 3), -1), ((0, 3, 2, 1), -1),
    ((1, 0, 2, 3), -1), ((1, 2, 3, 0), -1), ((1, 3, 0, 2), -1),
    ((2, 0, 3, 1), -1), ((2, 1, 0, 3), -1), ((2, 3, 1, 0), -1),
    ((3, 0, 1, 2), -1), ((3, 1, 2, 0), -1), ((3, 2, 0, 1), -1),
):
    EPS4[_perm] = _sgn


def point(x1: float, x2: float, x3: float, x4: float) -> np.ndarray:
    return np.array([x1, x2, x3, x4], dtype=float)


def from_complex(z1: complex, z2: complex) -> np.ndarray:
    return np.array([z1.real, z1.imag, z2.real, z2.imag])


def z1(p: np.ndarray) -> complex:
    return complex(p[0], p[1])


def z2(p: np.ndarray) -> complex:
    return complex(p[2], p[3])


def r2(p: np.ndarray) -> float:
    return float(p @ p)


def act_on_covector(J: np.ndarray, beta: np.ndarray) -> np.ndarray:
    """(J beta)(X) = -beta(J X); components -J^T beta."""
    return -J.T @ beta


def standard_structures():
    """The constant triple (I1, I2, I3) with I1*I2*I3 = -Id."""
    return STRUCTURES


def rdr(p: np.ndarray) -> np.ndarray:
    """The exact 1-form r dr = (1/2) d(r^2), components x_i."""
    return np.asarray(p, dtype=float).copy()


def alpha(j: int, p: np.ndarray) -> np.ndarray:
    """alpha_j = I_j (r dr); components (I_j x)_i for the antisymmetric I_j."""
    return STRUCTURES[j - 1] @ np.asarray(p, dtype=float)


def omega_e(j: int) -> np.ndarray:
    """Constant Kahler form omega_j = e(I_j ., .); component matrix I_j^T."""
    return STRUCTURES[j - 1].T.copy()


def theta(j: int, p: np.ndarray, min_r: float = 1e-8) -> np.ndarray:
    """theta_a = (rdr ^ alpha_a - alpha_b ^ alpha_c) / r^6, (a,b,c) cyclic.

    Closed, anti-self-dual, with an r^-4 pole at the origin.
    """
    p = np.asarray(p, dtype=float)
    rr = p @ p
    if rr < min_r ** 2:
        raise PoleAtOrigin(f"theta_{j} has an r^-4 pole; |p| = {np.sqrt(rr):.3e}")
    a, b, c = j - 1, j % 3, (j + 1) % 3
    P = p
    Aa, Ab, Ac = STRUCTURES[a] @ p, STRUCTURES[b] @ p, STRUCTURES[c] @ p
    W = (np.outer(P, Aa) - np.outer(Aa, P)) - (np.outer(Ab, Ac) - np.outer(Ac, Ab))
    return W / rr ** 3


def base_forms(p: np.ndarray):
    """All base fields at p: (rdr, alpha1..3, omega1..3, theta1..3).

    theta_j require p != 0.
    """
    p = np.asarray(p, dtype=float)
    al = [alpha(j, p) for j in (1, 2, 3)]
    om = [omega_e(j) for j in (1, 2, 3)]
    th = [theta(j, p) for j in (1, 2, 3)]
    return rdr(p), al[0], al[1], al[2], om[0], om[1], om[2], th[0], th[1], th[2]


def hodge_star_2form(W: np.ndarray) -> np.ndarray:
    """Euclidean Hodge star on 2-forms (orientation dx1^dx2^dx3^dx4)."""
    return 0.5 * np.einsum('abcd,ab->cd', EPS4, W)


def wedge_2forms(W1: np.ndarray, W2: np.ndarray) -> float:
    """Coefficient of W1 ^ W2 against the volume form dx1^dx2^dx3^dx4."""
    return 0.25 * float(np.einsum('abcd,ab,cd->', EPS4, W1, W2))


def volume_form_coefficient(W: np.ndarray) -> float:
    """(1/2) W ^ W / Omega_e; equals 1 for each omega_j."""
    return 0.5 * wedge_2forms(W, W)


# ---------------------------------------------------------------------------
# Binary dihedral group D_k < SU(2), order 4k.
# ---------------------------------------------------------------------------

def _complex2_to_real4(M: np.ndarray) -> np.ndarray:
    """Real 4x4 matrix of a complex-linear map of (z1, z2)."""
    out = np.zeros((4, 4))
    for i in range(2):
        for j in range(2):
            w = M[i, j]
            out[2 * i:2 * i + 2, 2 * j:2 * j + 2] = [[w.real, -w.imag], [w.imag, w.real]]
    return out


class DihedralGroup:
    """The binary dihedral group D_k, k >= 2, acting on (z1, z2).

    Generated by zeta_k = diag(e^{i pi/k}, e^{-i pi/k}) and
    tau = [[0, -1], [1, 0]]; tau^2 = zeta_k^k, |D_k| = 4k.
    """

    def __init__(self, k: int):
        if k < 2:
            raise ValueError("dihedral order parameter k must be >= 2")
        self.k = k
        w = np.exp(1j * np.pi / k)
        self.zeta_k = _complex2_to_real4(np.array([[w, 0], [0, np.conj(w)]]))
        self.tau = _complex2_to_real4(np.array([[0, -1], [1, 0]], dtype=complex))

    @property
    def order(self) -> int:
        return 4 * self.k

    def elements(self):
        """All 4k elements as real 4x4 matrices: zeta^j and zeta^j tau."""
        out = []
        g = np.eye(4)
        for _ in range(2 * self.k):
            out.append(g.copy())
            out.append(g @ self.tau)
            g = g @ self.zeta_k
        return out

    def act(self, g: np.ndarray, p: np.ndarray) -> np.ndarray:
        return g @ np.asarray(p, dtype=float)


def pullback_scalar(g: np.ndarray, f, p: np.ndarray) -> float:
    return f(g @ p)


def pullback_covector(g: np.ndarray, beta_value_at_gp: np.ndarray) -> np.ndarray:
    """(g^* beta)|_p = g^T beta|_{g p} for a linear map g."""
    return g.T @ beta_value_at_gp


def pullback_2form(g: np.ndarray, W_at_gp: np.ndarray) -> np.ndarray:
    return g.T @ W_at_gp @ g


def pullback_sym2(g: np.ndarray, S_at_gp: np.ndarray) -> np.ndarray:
    return g.T @ S_at_gp @ g


def pullback_structure(g: np.ndarray, J_at_gp: np.ndarray) -> np.ndarray:
    """(g^* J)|_p = g^{-1} J|_{g p} g for a linear diffeomorphism g."""
    return np.linalg.solve(g, J_at_gp @ g)


def quaternion_rotation(q: np.ndarray) -> np.ndarray:
    """Orthogonal map u = q0 Id + q1 I1 + q2 I2 + q3 I3 for a unit quaternion q.

    Conjugation u^T I_j u rotates the structure triple by a matrix in SO(3);
    see :func:`so3_of_quaternion`.
    """
    q = np.asarray(q, dtype=float)
    return q[0] * np.eye(4) + q[1] * I1 + q[2] * I2 + q[3] * I3


def so3_of_quaternion(q: np.ndarray) -> np.ndarray:
    """The SO(3) matrix rho with u^T I_j u = sum_l rho[j,l] I_l."""
    u = quaternion_rotation(q)
    rho = np.zeros((3, 3))
    for j in range(3):
        M = u.T @ STRUCTURES[j] @ u
        for l in range(3):
            rho[j, l] = np.einsum('ab,ab->', M, STRUCTURES[l]) / 4.0
    return rho
