"""Choi, Kraus, and Stinespring representations of quantum channels.

Conventions, fixed globally:

* tensor factor order is I x O x E (input, output, environment), row-major;
* Choi operators are unnormalized, with tr C = d_i and tr_O C = 1_I;
* purification vectors are Choi vectors of isometries, squared norm d_i;
* the canonical purification uses Kraus operators from descending
  eigenvalues of C and the computational basis on the environment.  Any
  other purification of the same channel differs by a unitary on E.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (
    EnvironmentTooSmall,
    InvalidDims,
    NotNormalized,
    NotPSD,
    NotTracePreserving,
    NotUnitary,
)
from . import linalg
from .linalg import dagger, herm_eig, partial_trace

__all__ = [
    "ChoiOperator",
    "PurificationVector",
    "KrausSet",
    "choi_from_kraus",
    "kraus_from_choi",
    "stinespring_from_choi",
    "apply_env_unitary",
    "embed_env",
    "depolarizing_choi",
    "max_entangled_purification",
    "identity_isometry_purification",
    "separable_purification",
]

RANK_TOL = 1e-10  # relative to the largest eigenvalue

PSD_ATOL = 1e-9
TP_ATOL = 1e-9
TRACE_ATOL = 1e-10
NORM_ATOL = 1e-10


def _complex_vector(v) -> np.ndarray:
    return np.asarray(v, dtype=complex).reshape(-1)


@dataclass(frozen=True)
class ChoiOperator:
    """Unnormalized Choi matrix of a channel, acting on H_I x H_O."""

    d_i: int
    d_o: int
    matrix: np.ndarray

    def __post_init__(self) -> None:
        side = self.d_i * self.d_o
        m = np.asarray(self.matrix, dtype=complex)
        if m.shape != (side, side):
            raise InvalidDims(
                f"Choi matrix shape {m.shape} does not match dims "
                f"({self.d_i}, {self.d_o})"
            )
        object.__setattr__(self, "matrix", m)

    def validate(self) -> "ChoiOperator":
        """Check Hermiticity, positivity, trace d_i, and trace preservation."""
        m = self.matrix
        scale = max(float(np.max(np.abs(m))), 1e-300)
        if np.max(np.abs(m - dagger(m))) > 1e-10 * scale:
            raise NotPSD("Choi matrix is not Hermitian")
        vals = np.linalg.eigvalsh(linalg.hermitianize(m))
        if vals.min() < -PSD_ATOL * max(vals.max(), 1.0):
            raise NotPSD(f"Choi matrix has eigenvalue {vals.min():.3e}")
        if abs(np.trace(m) - self.d_i) > TRACE_ATOL * max(1.0, self.d_i):
            raise NotNormalized(f"tr C = {np.trace(m):.12g}, expected {self.d_i}")
        marg = partial_trace(m, (self.d_i, self.d_o), keep=(0,))
        if np.max(np.abs(marg - np.eye(self.d_i))) > TP_ATOL:
            raise NotTracePreserving("tr_O C deviates from the identity")
        return self

    def normalized(self) -> np.ndarray:
        """Density-matrix normalization C / d_i (used inside fidelities)."""
        return self.matrix / self.d_i

    def eigenvalues_desc(self) -> np.ndarray:
        vals, _ = herm_eig(self.matrix)
        return vals

    def rank(self, tol: float = RANK_TOL) -> int:
        vals = np.linalg.eigvalsh(linalg.hermitianize(self.matrix))
        top = max(float(vals.max()), 1e-300)
        return int(np.sum(vals > tol * top))

    def purity(self) -> float:
        """tr(C^2)."""
        return float(np.vdot(self.matrix, self.matrix).real)

    def to_json_dict(self) -> dict:
        flat = self.matrix.reshape(-1)
        return {
            "d_i": self.d_i,
            "d_o": self.d_o,
            "re_im": [[float(z.real), float(z.imag)] for z in flat],
        }

    @classmethod
    def from_json_dict(cls, data: dict) -> "ChoiOperator":
        d_i, d_o = int(data["d_i"]), int(data["d_o"])
        side = d_i * d_o
        flat = np.array([complex(re, im) for re, im in data["re_im"]])
        return cls(d_i, d_o, flat.reshape(side, side))


@dataclass(frozen=True)
class PurificationVector:
    """Choi vector of an isometry on H_I x H_O x H_E, squared norm d_i."""

    d_i: int
    d_o: int
    d_e: int
    vector: np.ndarray

    def __post_init__(self) -> None:
        v = _complex_vector(self.vector)
        if v.size != self.d_i * self.d_o * self.d_e:
            raise InvalidDims(
                f"vector length {v.size} does not match dims "
                f"({self.d_i}, {self.d_o}, {self.d_e})"
            )
        object.__setattr__(self, "vector", v)

    def validate(self, *, check_marginal: bool = True) -> "PurificationVector":
        norm_sq = float(np.vdot(self.vector, self.vector).real)
        if abs(norm_sq - self.d_i) > NORM_ATOL * max(1.0, self.d_i):
            raise NotNormalized(f"squared norm {norm_sq:.12g}, expected {self.d_i}")
        if check_marginal:
            self.marginal_choi().validate()
        return self

    def as_matrix(self) -> np.ndarray:
        """Reshape to (d_i * d_o, d_e): rows joint system, columns environment."""
        return self.vector.reshape(self.d_i * self.d_o, self.d_e)

    def projector(self) -> np.ndarray:
        return np.outer(self.vector, self.vector.conj())

    def marginal_choi(self) -> ChoiOperator:
        m = self.as_matrix()
        return ChoiOperator(self.d_i, self.d_o, m @ dagger(m))

    def to_json_dict(self) -> dict:
        return {
            "d_i": self.d_i,
            "d_o": self.d_o,
            "d_e": self.d_e,
            "re_im": [[float(z.real), float(z.imag)] for z in self.vector],
        }

    @classmethod
    def from_json_dict(cls, data: dict) -> "PurificationVector":
        flat = np.array([complex(re, im) for re, im in data["re_im"]])
        return cls(int(data["d_i"]), int(data["d_o"]), int(data["d_e"]), flat)


@dataclass(frozen=True)
class KrausSet:
    """Kraus operators K_i (d_o x d_i) with sum K†K = 1."""

    d_i: int
    d_o: int
    operators: tuple[np.ndarray, ...]

    def __post_init__(self) -> None:
        ops = tuple(np.asarray(k, dtype=complex) for k in self.operators)
        for k in ops:
            if k.shape != (self.d_o, self.d_i):
                raise InvalidDims(
                    f"Kraus operator shape {k.shape}, expected "
                    f"({self.d_o}, {self.d_i})"
                )
        object.__setattr__(self, "operators", ops)

    def completeness_defect(self) -> float:
        acc = sum(dagger(k) @ k for k in self.operators)
        return float(np.max(np.abs(acc - np.eye(self.d_i))))

    def validate(self, atol: float = TP_ATOL) -> "KrausSet":
        if self.completeness_defect() > atol:
            raise NotTracePreserving("Kraus completeness relation violated")
        return self


def _choi_vec_of_operator(k: np.ndarray) -> np.ndarray:
    """|K> = sum_i |i> x K|i>, flattened with the input index major."""
    return np.ascontiguousarray(k.T).reshape(-1)


def choi_from_kraus(kraus: KrausSet) -> ChoiOperator:
    """Choi operator sum_k |K_k><K_k| of a channel given by Kraus operators."""
    kraus.validate()
    side = kraus.d_i * kraus.d_o
    c = np.zeros((side, side), dtype=complex)
    for k in kraus.operators:
        v = _choi_vec_of_operator(k)
        c += np.outer(v, v.conj())
    return ChoiOperator(kraus.d_i, kraus.d_o, c)


def kraus_from_choi(c: ChoiOperator, tol: float = RANK_TOL) -> KrausSet:
    """Kraus operators from the spectral decomposition of the Choi matrix.

    One operator per eigenvalue above ``tol`` (relative to the largest),
    ordered by descending eigenvalue.
    """
    vals, vecs = herm_eig(c.matrix)
    top = max(float(vals[0]), 1e-300)
    ops = []
    for lam, col in zip(vals, vecs.T):
        if lam <= tol * top:
            break
        mat = col.reshape(c.d_i, c.d_o)  # index order (i, o)
        ops.append(np.sqrt(lam) * mat.T)
    return KrausSet(c.d_i, c.d_o, tuple(ops))


def stinespring_from_choi(c: ChoiOperator, d_e: int) -> PurificationVector:
    """Canonical purification of a Choi operator on an environment of size d_e.

    Requires d_e >= rank(C).  Kraus operators from descending eigenvalues
    are attached to the computational environment basis, so the output is a
    deterministic representative of the unitary orbit of purifications.
    """
    kraus = kraus_from_choi(c)
    r = len(kraus.operators)
    if d_e < r:
        raise EnvironmentTooSmall(f"rank {r} exceeds environment size {d_e}")
    vec = np.zeros((c.d_i * c.d_o, d_e), dtype=complex)
    for e, k in enumerate(kraus.operators):
        vec[:, e] = _choi_vec_of_operator(k)
    return PurificationVector(c.d_i, c.d_o, d_e, vec.reshape(-1))


def apply_env_unitary(v: PurificationVector, u: np.ndarray) -> PurificationVector:
    """Act with a unitary on the environment: the marginal channel is unchanged."""
    u = np.asarray(u, dtype=complex)
    if u.shape != (v.d_e, v.d_e):
        raise InvalidDims(f"unitary shape {u.shape}, expected ({v.d_e}, {v.d_e})")
    if np.max(np.abs(dagger(u) @ u - np.eye(v.d_e))) > 1e-10:
        raise NotUnitary("environment operator is not unitary within 1e-10")
    rotated = v.as_matrix() @ u.T
    return PurificationVector(v.d_i, v.d_o, v.d_e, rotated.reshape(-1))


def embed_env(v: PurificationVector, d_e_new: int) -> PurificationVector:
    """Isometrically enlarge the environment by zero-padding extra dimensions."""
    if d_e_new < v.d_e:
        raise EnvironmentTooSmall("cannot shrink the environment by embedding")
    mat = np.zeros((v.d_i * v.d_o, d_e_new), dtype=complex)
    mat[:, : v.d_e] = v.as_matrix()
    return PurificationVector(v.d_i, v.d_o, d_e_new, mat.reshape(-1))


def depolarizing_choi(d_i: int, d_o: int) -> ChoiOperator:
    """Choi operator 1 / d_o of the fully depolarizing channel."""
    side = d_i * d_o
    return ChoiOperator(d_i, d_o, np.eye(side) / d_o)


def max_entangled_purification(d_i: int, d_o: int) -> PurificationVector:
    """Purification of the fully depolarizing channel, maximally entangled
    across the (system pair) | environment cut; environment size d_i * d_o."""
    side = d_i * d_o
    vec = np.zeros((side, side), dtype=complex)
    np.fill_diagonal(vec, 1.0 / np.sqrt(d_o))
    return PurificationVector(d_i, d_o, side, vec.reshape(-1))


def identity_isometry_purification(d_i: int, d_o: int) -> PurificationVector:
    """Choi vector of the canonical embedding isometry |i> -> |i> (d_o >= d_i)."""
    if d_o < d_i:
        raise InvalidDims("embedding isometry needs d_o >= d_i")
    k = np.zeros((d_o, d_i), dtype=complex)
    for i in range(d_i):
        k[i, i] = 1.0
    vec = _choi_vec_of_operator(k)
    return PurificationVector(d_i, d_o, 1, vec)


def separable_purification(
    upsilon: PurificationVector, psi: np.ndarray
) -> PurificationVector:
    """Product purification |Upsilon> x |psi| of an isometric channel.

    ``upsilon`` must be an isometric channel's Choi vector (d_e = 1) and
    ``psi`` a normalized environment state.  The marginal is |Y><Y|
    regardless of psi.
    """
    if upsilon.d_e != 1:
        raise InvalidDims("separable purification needs an isometric (d_e = 1) core")
    psi = _complex_vector(psi)
    if abs(np.vdot(psi, psi).real - 1.0) > 1e-10:
        raise NotNormalized("environment state psi must be normalized")
    vec = np.kron(upsilon.vector, psi)
    return PurificationVector(upsilon.d_i, upsilon.d_o, psi.size, vec)
