"""Complex Clifford representations (gamma matrices) for flat Dirac operators.

Generators e_1, ..., e_m are skew-adjoint complex N x N matrices with
N = 2^floor(m/2) satisfying

    e_i e_j + e_j e_i = -2 delta_ij I,      e_i^dagger = -e_i.

The construction is a fixed recursive tensor doubling from the m = 2 base
pair (i*sigma_1, i*sigma_2), so the matrices are identical across runs and
platforms.  All downstream sign choices (torus Dirac blocks, the Euclidean
solution family) inherit the e_i^2 = -I convention from here.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

_SIGMA1 = np.array([[0, 1], [1, 0]], dtype=complex)
_SIGMA2 = np.array([[0, -1j], [1j, 0]], dtype=complex)
_SIGMA3 = np.array([[1, 0], [0, -1]], dtype=complex)


class CliffordError(ValueError):
    """Invalid dimension or shape mismatch in Clifford operations."""


@dataclass(frozen=True)
class CliffordRep:
    """Immutable gamma-matrix representation for dimension ``m``.

    ``gamma`` is a tuple of m skew-adjoint complex (N, N) arrays.
    """

    m: int
    N: int
    gamma: tuple

    def relation_residuals(self):
        """Max residuals of the anticommutation and skew-adjointness relations.

        Returns a dict with keys ``anticommutation``, ``skew_adjoint``,
        ``unitary`` (e_i^dagger e_i = I).
        """
        eye = np.eye(self.N)
        anti = 0.0
        skew = 0.0
        unit = 0.0
        for i in range(self.m):
            gi = self.gamma[i]
            skew = max(skew, np.abs(gi.conj().T + gi).max())
            unit = max(unit, np.abs(gi.conj().T @ gi - eye).max())
            for j in range(self.m):
                r = gi @ self.gamma[j] + self.gamma[j] @ gi + 2.0 * (i == j) * eye
                anti = max(anti, np.abs(r).max())
        return {"anticommutation": anti, "skew_adjoint": skew, "unitary": unit}


def _hermitian_generators(m):
    # E_j hermitian, E_j^2 = I, pairwise anticommuting; gamma_j = i E_j.
    if m == 2:
        return [_SIGMA1, _SIGMA2]
    if m % 2 == 1:
        base = _hermitian_generators(m - 1)
        r = (m - 1) // 2
        prod = np.eye(base[0].shape[0], dtype=complex)
        for ej in base:
            prod = prod @ ej
        # (-i)^r E_1...E_{m-1} is hermitian with square one.
        return base + [(-1j) ** r * prod]
    base = _hermitian_generators(m - 2)
    n = base[0].shape[0]
    eye = np.eye(n, dtype=complex)
    out = [np.kron(ej, _SIGMA3) for ej in base]
    out.append(np.kron(eye, _SIGMA1))
    out.append(np.kron(eye, _SIGMA2))
    return out


def build_rep(m):
    """Build the rank 2^floor(m/2) gamma representation for dimension m >= 2."""
    if not isinstance(m, (int, np.integer)) or m < 2:
        raise CliffordError(f"dimension must be an integer >= 2, got {m!r}")
    gammas = tuple(1j * ej for ej in _hermitian_generators(int(m)))
    n = gammas[0].shape[0]
    for g in gammas:
        g.setflags(write=False)
    return CliffordRep(m=int(m), N=n, gamma=gammas)


def _check_shapes(rep, x, s):
    x = np.asarray(x, dtype=float)
    s = np.asarray(s, dtype=complex)
    if x.shape != (rep.m,):
        raise CliffordError(f"vector must have shape ({rep.m},), got {x.shape}")
    if s.shape[-1] != rep.N:
        raise CliffordError(f"spinor must have last axis {rep.N}, got {s.shape}")
    return x, s


def clifford_mul(rep, x, s):
    """Clifford multiplication x . s = sum_j x_j (e_j s).

    ``s`` may carry leading batch axes; the contraction acts on the last axis.
    """
    x, s = _check_shapes(rep, x, s)
    mat = sum(x[j] * rep.gamma[j] for j in range(rep.m))
    return s @ mat.T


def one_minus_x_mul(rep, x, s):
    """Action of (1 - x) in the Clifford algebra: s - x . s.

    Satisfies |(1 - x) . s|^2 = (1 + |x|^2) |s|^2.
    """
    x, s = _check_shapes(rep, x, s)
    return s - clifford_mul(rep, x, s)
