"""Dense complex-matrix kernels shared by the rest of the package.

Everything here operates on plain ``numpy.ndarray`` objects of dtype
complex128 (real input is promoted).  Partial traces take an explicit list
of factor dimensions and the set of factors to keep, so multipartite index
bookkeeping lives in one place.
"""

from __future__ import annotations

import math
from collections.abc import Iterable, Sequence

import numpy as np

from .errors import DomainError, InvalidDims, NotHermitian, NotNormalized, NotPSD

__all__ = [
    "kron",
    "partial_trace",
    "herm_eig",
    "psd_sqrt",
    "trace_norm",
    "fidelity",
    "flip_operator",
    "swap_factors",
    "complete_elliptic",
    "hermitianize",
    "dagger",
]

# Relative floor below which eigenvalues are treated as exact zeros (rank
# detection after partial traces and outer products).
EIG_FLOOR = 1e-12

# Relative negativity beyond which an operator is rejected as not PSD.
PSD_TOL = 1e-8

HERM_TOL = 1e-10
TRACE_TOL = 1e-9


def dagger(a: np.ndarray) -> np.ndarray:
    """Conjugate transpose."""
    return a.conj().T


def hermitianize(a: np.ndarray) -> np.ndarray:
    """Hermitian part (a + a†) / 2."""
    return (a + dagger(a)) / 2


def kron(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Kronecker product of two matrices."""
    return np.kron(a, b)


def _check_square(m: np.ndarray) -> int:
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise InvalidDims(f"expected a square matrix, got shape {m.shape}")
    return m.shape[0]


def partial_trace(
    m: np.ndarray, dims: Sequence[int], keep: Iterable[int]
) -> np.ndarray:
    """Trace out every tensor factor not listed in ``keep``.

    Parameters
    ----------
    m : square matrix on the tensor product of the given factors
    dims : ordered factor dimensions, whose product must equal the side of m
    keep : indices (into dims) of the factors to retain, in original order

    Returns
    -------
    The reduced matrix on the kept factors.  The full trace is preserved.
    """
    side = _check_square(m)
    dims = [int(d) for d in dims]
    if any(d < 1 for d in dims) or math.prod(dims) != side:
        raise InvalidDims(f"factor dims {dims} do not multiply to side {side}")
    n = len(dims)
    keep = sorted(set(int(k) for k in keep))
    if any(k < 0 or k >= n for k in keep):
        raise InvalidDims(f"keep indices {keep} out of range for {n} factors")

    t = m.reshape(dims + dims)
    # Repeat the index letter on (row, col) legs of every traced factor.
    row = list(range(n))
    col = [n + i if i in keep else i for i in range(n)]
    out = [i for i in keep] + [n + i for i in keep]
    reduced = np.einsum(t, row + col, out)
    d_keep = math.prod(dims[k] for k in keep) if keep else 1
    return reduced.reshape(d_keep, d_keep)


def _require_hermitian(m: np.ndarray, tol: float = HERM_TOL) -> np.ndarray:
    _check_square(m)
    scale = max(np.max(np.abs(m)), 1.0)
    if np.max(np.abs(m - dagger(m))) > tol * scale:
        raise NotHermitian("matrix is not Hermitian within tolerance")
    return hermitianize(np.asarray(m, dtype=complex))


def herm_eig(m: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Spectral decomposition of a Hermitian matrix.

    Returns ``(vals, vecs)`` with eigenvalues sorted in non-increasing order
    and ``vecs[:, i]`` the matching orthonormal eigenvectors.  Ties keep the
    stable order produced by the underlying solver, so output is
    deterministic for identical input.
    """
    h = _require_hermitian(m)
    vals, vecs = np.linalg.eigh(h)
    order = np.argsort(-vals, kind="stable")
    return vals[order].real, vecs[:, order]


def _floored(vals: np.ndarray, floor: float = EIG_FLOOR) -> np.ndarray:
    """Clamp eigenvalues below floor * max to exact zero."""
    top = float(np.max(vals, initial=0.0))
    out = np.where(vals < floor * max(top, 0.0), 0.0, vals)
    return np.maximum(out, 0.0)


def psd_sqrt(m: np.ndarray) -> np.ndarray:
    """Positive-semidefinite square root via the spectral decomposition.

    Eigenvalues in a small negative band (floating-point drift after partial
    traces) are clamped to zero; anything below ``-PSD_TOL * max|eig|``
    raises :class:`NotPSD`.
    """
    vals, vecs = herm_eig(m)
    top = max(float(np.max(np.abs(vals), initial=0.0)), 1e-300)
    if float(np.min(vals, initial=0.0)) < -PSD_TOL * top:
        raise NotPSD(f"eigenvalue {np.min(vals):.3e} below the PSD tolerance")
    root = np.sqrt(_floored(vals))
    return hermitianize((vecs * root) @ dagger(vecs))


def trace_norm(m: np.ndarray) -> float:
    """Sum of singular values (Schatten-1 norm)."""
    if m.ndim != 2:
        raise InvalidDims(f"expected a matrix, got shape {m.shape}")
    return float(np.linalg.svd(m, compute_uv=False).sum())


def fidelity(rho: np.ndarray, sigma: np.ndarray) -> float:
    """Uhlmann fidelity of two density matrices.

    Computed as ``||sqrt(rho) sqrt(sigma)||_1^2``, which equals the maximal
    squared overlap between purifications of the two states.  Both inputs
    must be unit-trace PSD matrices of the same size.
    """
    for name, op in (("rho", rho), ("sigma", sigma)):
        side = _check_square(op)
        if abs(np.trace(op) - 1.0) > TRACE_TOL:
            raise NotNormalized(f"{name} has trace {np.trace(op):.12g}, expected 1")
    if rho.shape != sigma.shape:
        raise InvalidDims("fidelity arguments must have equal shape")
    f = trace_norm(psd_sqrt(rho) @ psd_sqrt(sigma)) ** 2
    return float(min(max(f, 0.0), 1.0))


def flip_operator(d: int) -> np.ndarray:
    """Swap operator F on C^d x C^d, F |a,b> = |b,a>.

    Satisfies tr[(X x Y) F] = tr(XY), F^2 = 1, and F = F†.
    """
    if d < 1:
        raise InvalidDims("flip dimension must be >= 1")
    f = np.zeros((d * d, d * d))
    idx = np.arange(d * d)
    i, j = divmod(idx, d)
    f[idx, j * d + i] = 1.0
    return f


def swap_factors(dims: Sequence[int], i: int, j: int) -> np.ndarray:
    """Operator swapping tensor factors i and j of a multipartite space.

    The two factors must have equal dimension; all other factors are left
    untouched.  Used to assemble flip-operator identities on spaces holding
    two copies of a system.
    """
    dims = [int(d) for d in dims]
    n = len(dims)
    if not (0 <= i < n and 0 <= j < n) or dims[i] != dims[j]:
        raise InvalidDims(f"cannot swap factors {i},{j} of dims {dims}")
    side = math.prod(dims)
    perm = list(range(n))
    perm[i], perm[j] = perm[j], perm[i]
    eye = np.eye(side)
    # Row multi-index permuted, columns left alone.
    t = eye.reshape(dims + [side]).transpose(perm + [n])
    return t.reshape(side, side)


def complete_elliptic(m: float) -> tuple[float, float]:
    """Complete elliptic integrals (K(m), E(m)) in the parameter convention.

    ``m`` is the parameter (squared modulus).  Evaluated by the
    arithmetic-geometric mean iteration; K(1) is reported as ``inf`` with
    E(1) = 1 exactly.
    """
    if not 0.0 <= m <= 1.0:
        raise DomainError(f"elliptic parameter {m} outside [0, 1]")
    if m == 1.0:
        return float("inf"), 1.0
    a, b = 1.0, math.sqrt(1.0 - m)
    c_sum = 0.5 * m  # 2^(n-1) c_n^2 accumulated from c_0 = sqrt(m)
    power = 0.5
    for _ in range(64):
        c = 0.5 * (a - b)
        a, b = 0.5 * (a + b), math.sqrt(a * b)
        power *= 2.0
        c_sum += power * c * c
        if c < 1e-17:
            break
    k = math.pi / (2.0 * a)
    e = k * (1.0 - c_sum)
    return k, e
