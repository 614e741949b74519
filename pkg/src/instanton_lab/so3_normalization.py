"""Gram-matrix calculus for the deformation parameter.

The triple zeta = (zeta_1, zeta_2, zeta_3) of vectors in an inner-product
space enters every formula of this toolkit only through its Gram matrix
Z[j, l] = <zeta_j, zeta_l>.  An SO(3) rotation of the triple acts as
Z -> A Z A^T, and ``normalize`` produces A with

    (A Z A^T)[1, 1] = (A Z A^T)[2, 2]   and   (A Z A^T)[1, 2] = 0

(0-based indices), i.e. |xi_2|^2 = |xi_3|^2, <xi_2, xi_3> = 0 for the
rotated triple xi = A zeta.  The common value is always the middle
eigenvalue of Z.
"""

from __future__ import annotations

import math

import numpy as np

# signed permutation matrices in SO(3) used to reorder eigenvalues
_PERMS = {
    (0, 1, 2): np.eye(3),
    (0, 2, 1): np.array([[1., 0, 0], [0, 0, 1], [0, -1, 0]]),
    (1, 0, 2): np.array([[0., 1, 0], [-1, 0, 0], [0, 0, 1]]),
    (2, 1, 0): np.array([[0., 0, 1], [0, 1, 0], [-1, 0, 0]]),
    (1, 2, 0): np.array([[0., 1, 0], [-1, 0, 0], [0, 0, 1]]) @ np.array([[1., 0, 0], [0, 0, 1], [0, -1, 0]]),
    (2, 0, 1): np.array([[0., 0, 1], [0, 1, 0], [-1, 0, 0]]) @ np.array([[1., 0, 0], [0, 0, 1], [0, -1, 0]]),
}


def check_gram(Z: np.ndarray, tol: float = 1e-10) -> np.ndarray:
    Z = np.asarray(Z, dtype=float)
    if Z.shape != (3, 3):
        raise ValueError("Gram matrix must be 3x3")
    if np.abs(Z - Z.T).max() > tol * max(1.0, np.abs(Z).max()):
        raise ValueError("Gram matrix must be symmetric")
    return 0.5 * (Z + Z.T)


def gram_of_vectors(zetas) -> np.ndarray:
    """Z[j, l] = <zeta_j, zeta_l> for three vectors of any common dimension."""
    zetas = [np.asarray(z, dtype=float) for z in zetas]
    return np.array([[float(a @ b) for b in zetas] for a in zetas])


def is_rotation(A: np.ndarray, tol: float = 1e-12) -> bool:
    A = np.asarray(A, dtype=float)
    return (np.abs(A.T @ A - np.eye(3)).max() <= tol
            and abs(np.linalg.det(A) - 1.0) <= tol)


def act(A: np.ndarray, Z: np.ndarray) -> np.ndarray:
    """Z -> A Z A^T; preserves the spectrum and positive semidefiniteness."""
    A = np.asarray(A, dtype=float)
    Z = check_gram(Z)
    return A @ Z @ A.T


def eig_symmetric_3x3(Z: np.ndarray):
    """Closed-form (Cardano) spectral decomposition of a symmetric 3x3 matrix.

    Returns eigenvalues descending and an orthogonal eigenvector matrix O
    with O @ diag(lam) @ O.T = Z and det O = +1.  One inverse-iteration
    polish step refines each eigenpair; no LAPACK involved.
    """
    Z = check_gram(Z)
    scale = max(np.abs(Z).max(), 1e-300)
    M = Z / scale
    q = np.trace(M) / 3.0
    B = M - q * np.eye(3)
    p2 = float(np.sum(B * B)) / 6.0
    if p2 <= 0:
        lam = np.array([q, q, q]) * scale
        return lam, np.eye(3)
    pp = math.sqrt(p2)
    detB = np.linalg.det(B / pp)
    rho = max(-1.0, min(1.0, detB / 2.0))
    phi = math.acos(rho) / 3.0
    l1 = q + 2 * pp * math.cos(phi)
    l3 = q + 2 * pp * math.cos(phi + 2 * math.pi / 3.0)
    l2 = 3 * q - l1 - l3
    lam = np.array([l1, l2, l3])

    # eigenvectors by cross products of rows of (M - lam I), then polish
    vecs = []
    for i, lv in enumerate(lam):
        Ml = M - lv * np.eye(3)
        rows = [np.cross(Ml[a], Ml[b]) for a, b in ((0, 1), (0, 2), (1, 2))]
        v = max(rows, key=lambda r: float(r @ r))
        nv = np.linalg.norm(v)
        if nv < 1e-14:
            # degenerate pair: complete later by orthogonality
            vecs.append(None)
            continue
        v = v / nv
        # one inverse-iteration polish with a tiny shift
        shift = lv + 1e-13 * (1 + abs(lv))
        try:
            w = np.linalg.solve(M - shift * np.eye(3), v)
            v = w / np.linalg.norm(w)
        except np.linalg.LinAlgError:
            pass
        vecs.append(v)
    # fill degenerate slots by Gram-Schmidt against the known vectors
    known = [v for v in vecs if v is not None]
    for i in range(3):
        if vecs[i] is None:
            cand = np.eye(3)
            for basis in cand:
                w = basis.copy()
                for u in known:
                    w -= (w @ u) * u
                if np.linalg.norm(w) > 1e-8:
                    w /= np.linalg.norm(w)
                    vecs[i] = w
                    known.append(w)
                    break
    O = np.array(vecs).T
    # re-orthonormalize (protects near-degenerate spectra) and fix det = +1
    Q, _ = np.linalg.qr(O)
    # keep column signs aligned with the unpolished vectors
    for i in range(3):
        if Q[:, i] @ O[:, i] < 0:
            Q[:, i] = -Q[:, i]
    if np.linalg.det(Q) < 0:
        Q[:, 2] = -Q[:, 2]
    lam = lam * scale
    # polish eigenvalues by the Rayleigh quotient of the final vectors
    lam = np.array([float(Q[:, i] @ Z @ Q[:, i]) for i in range(3)])
    order = np.argsort(lam)[::-1]
    lam = lam[order]
    Q = Q[:, order]
    if np.linalg.det(Q) < 0:
        Q[:, 2] = -Q[:, 2]
    return lam, Q


def _q_matrix(lam: np.ndarray) -> np.ndarray:
    """The explicit rotation sending diag(l1 >= l2 >= l3) to the normalized shape."""
    l1, l2, l3 = lam
    c = math.sqrt((l1 - l2) / (l1 - l3))
    s = math.sqrt((l2 - l3) / (l1 - l3))
    return np.array([[c, 0., s], [0., 1., 0.], [-s, 0., c]])


def normalize(Z: np.ndarray, tol: float = 1e-12):
    """Rotation A with (A Z A^T)[1,1] = (A Z A^T)[2,2], (A Z A^T)[1,2] = 0.

    Algorithm: spectral decomposition Z = O diag(lam) O^T with descending
    eigenvalues and O in SO(3), then the explicit planar rotation Q built
    from the eigenvalue gaps; A = Q O^T.  Degenerate spectra (l1 = l2 or
    l2 = l3 within 1e-10 * |Z|) skip Q: the sorted diagonal form already
    satisfies the constraints.  Returns (A, A Z A^T).
    """
    Z = check_gram(Z)
    lam, O = eig_symmetric_3x3(Z)
    tie = 1e-10 * max(1.0, float(np.abs(Z).max()))
    if lam[0] - lam[1] <= tie or lam[1] - lam[2] <= tie:
        A = O.T
    else:
        A = _q_matrix(lam) @ O.T
    Zn = A @ Z @ A.T
    # clean exact-zero targets below tol without touching the rest
    if abs(Zn[1, 2]) > tol * max(1.0, np.abs(Z).max()) or \
       abs(Zn[1, 1] - Zn[2, 2]) > tol * max(1.0, np.abs(Z).max()):
        raise ArithmeticError(
            f"normalization missed its constraints: off={Zn[1, 2]:.3e}, "
            f"diff={Zn[1, 1] - Zn[2, 2]:.3e}")
    return A, Zn


def middle_eigenvalue(Z: np.ndarray) -> float:
    lam, _ = eig_symmetric_3x3(Z)
    return float(lam[1])


def normalized_family(Z: np.ndarray, phi: float) -> np.ndarray:
    """The one-parameter family of all normalized shapes congruent to Z.

    With eigenvalues l1 >= l2 >= l3 and L = sqrt((l1-l2)(l2-l3)):
    [[l1+l3-l2, L cos phi, L sin phi], [L cos phi, l2, 0], [L sin phi, 0, l2]].
    Every member has the same characteristic polynomial as Z.
    """
    lam, _ = eig_symmetric_3x3(Z)
    l1, l2, l3 = lam
    L = math.sqrt(max((l1 - l2) * (l2 - l3), 0.0))
    c, s = L * math.cos(phi), L * math.sin(phi)
    return np.array([[l1 + l3 - l2, c, s], [c, l2, 0.0], [s, 0.0, l2]])


def zero_first(Z: np.ndarray) -> np.ndarray:
    """Gram of (0, zeta_2, zeta_3): first row and column zeroed."""
    Zp = check_gram(Z).copy()
    Zp[0, :] = 0.0
    Zp[:, 0] = 0.0
    return Zp


def zero_first_two(Z: np.ndarray) -> np.ndarray:
    """Gram of (0, 0, zeta_3)."""
    Zpp = zero_first(Z)
    Zpp[1, :] = 0.0
    Zpp[:, 1] = 0.0
    return Zpp


def random_gram(rng, dim: int = 5, scale: float = 1.0) -> np.ndarray:
    """Gram matrix of three random vectors in R^dim (PSD by construction)."""
    V = rng.normal(size=(3, dim)) * scale
    return V @ V.T


def random_rotation(rng) -> np.ndarray:
    q = rng.normal(size=4)
    q /= np.linalg.norm(q)
    w, x, y, z = q
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)],
        [2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)],
        [2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)],
    ])
