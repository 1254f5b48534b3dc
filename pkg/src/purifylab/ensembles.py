"""Random ensembles: Ginibre matrices, Haar isometries, random channels.

Channels are drawn by tracing the environment of a Haar-random isometry
``V : H_I -> H_O x H_E``.  The canonical sampler is the polar construction
``V = G (G†G)^(-1/2)`` applied to a complex Ginibre matrix G, which is
Haar-distributed on the Stiefel manifold.  A normalized-Wishart route to the
same Choi distribution is provided as an independent cross-check, together
with the Marchenko-Pastur reference density that governs the spectra at
large dimension.

All randomness flows through :class:`RandomStream`, a counter-based keyed
stream: identical ``(seed, index)`` always reproduces the same draws, no
matter how samples are distributed over workers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, InvalidDims, SingularNormalizer
from .linalg import partial_trace

__all__ = [
    "EnsembleSpec",
    "RandomStream",
    "sample_ginibre",
    "sample_haar_isometry",
    "sample_haar_unitary",
    "sample_choi",
    "sample_wishart_choi",
    "mp_support",
    "mp_density",
    "mp_atom",
    "mp_cdf",
    "mp_mu",
]

_MASK64 = (1 << 64) - 1

# Purpose tags partitioning the substream index space, so that e.g. weight
# estimation never consumes the streams used for error evaluation.
PURPOSE_SAMPLE = 0
PURPOSE_WEIGHTS = 1
PURPOSE_FIXED = 2


@dataclass(frozen=True)
class EnsembleSpec:
    """Dimension triple (d_i, d_o, d_e) plus the Monte Carlo seed.

    ``d_e`` controls the prior over channels: d_e = 1 draws only isometric
    channels, d_e = d_i * d_o the uniform Choi measure, and large d_e
    concentrates near the fully depolarizing channel.
    """

    d_i: int
    d_o: int
    d_e: int
    seed: int = 0

    def __post_init__(self) -> None:
        if self.d_i < 1 or self.d_o < 2 or self.d_e < 1:
            raise InvalidDims(
                f"need d_i >= 1, d_o >= 2, d_e >= 1, got "
                f"({self.d_i}, {self.d_o}, {self.d_e})"
            )
        if self.d_o * self.d_e < self.d_i:
            raise InvalidDims("no isometry exists: d_o * d_e < d_i")

    @property
    def dims(self) -> tuple[int, int, int]:
        return (self.d_i, self.d_o, self.d_e)

    def stream(self, index: int, purpose: int = PURPOSE_SAMPLE) -> "RandomStream":
        """Counter-based substream for sample ``index`` of a given purpose."""
        return RandomStream(self.seed, (purpose << 48) + index)


@dataclass(frozen=True)
class RandomStream:
    """Keyed, counter-based random stream (Philox).

    The (seed, index) pair fully determines the draw sequence, independent
    of host, thread count, or draw history of other streams.  Value type:
    copying the stream and calling :meth:`generator` twice replays the same
    sequence.
    """

    seed: int
    index: int = 0

    def generator(self) -> np.random.Generator:
        key = np.array([self.seed & _MASK64, self.index & _MASK64], dtype=np.uint64)
        return np.random.Generator(np.random.Philox(key=key))


def _as_generator(rs: RandomStream | np.random.Generator) -> np.random.Generator:
    if isinstance(rs, np.random.Generator):
        return rs
    return rs.generator()


def sample_ginibre(
    rows: int, cols: int, rs: RandomStream | np.random.Generator
) -> np.ndarray:
    """Complex Ginibre matrix: i.i.d. entries with Re, Im ~ N(0, 1/2)."""
    if rows < 1 or cols < 1:
        raise InvalidDims("Ginibre dimensions must be >= 1")
    rng = _as_generator(rs)
    z = rng.standard_normal((rows, cols, 2))
    return (z[..., 0] + 1j * z[..., 1]) / math.sqrt(2.0)


def _polar_isometry(g: np.ndarray) -> np.ndarray:
    """Polar factor G (G†G)^(-1/2); Haar on the Stiefel manifold for Ginibre G."""
    h = g.conj().T @ g
    vals, vecs = np.linalg.eigh(h)
    inv_root = (vecs / np.sqrt(vals)) @ vecs.conj().T
    return g @ inv_root


def sample_haar_isometry(
    d_in: int, d_out: int, rs: RandomStream | np.random.Generator
) -> np.ndarray:
    """Haar-random isometry V (d_out x d_in) with V†V = 1."""
    if d_out < d_in:
        raise InvalidDims(f"isometry needs d_out >= d_in, got {d_out} < {d_in}")
    return _polar_isometry(sample_ginibre(d_out, d_in, rs))


def sample_haar_unitary(d: int, rs: RandomStream | np.random.Generator) -> np.ndarray:
    """Haar-random unitary (square case of the polar construction)."""
    return sample_haar_isometry(d, d, rs)


def haar_unitaries_batch(d: int, count: int, rng: np.random.Generator) -> np.ndarray:
    """Stack of ``count`` independent Haar unitaries, drawn in one pass."""
    z = rng.standard_normal((count, d, d, 2))
    g = (z[..., 0] + 1j * z[..., 1]) / math.sqrt(2.0)
    h = np.einsum("bji,bjk->bik", g.conj(), g)
    vals, vecs = np.linalg.eigh(h)
    inv_root = np.einsum("bij,bj,bkj->bik", vecs, 1.0 / np.sqrt(vals), vecs.conj())
    return g @ inv_root


def choi_vector_from_isometry(v_iso: np.ndarray) -> np.ndarray:
    """Choi vector sum_i |i> x V|i> of an isometry, flattened in (I, OE) order."""
    return np.ascontiguousarray(v_iso.T).reshape(-1)


def sample_choi(spec: EnsembleSpec, rs: RandomStream | np.random.Generator):
    """Draw one random channel: returns ``(choi, purification)``.

    The purification is the Choi vector of a Haar isometry
    d_i -> d_o * d_e; the Choi operator is its environment marginal.
    Deferred import keeps this module free of a channels dependency cycle.
    """
    from .channels import PurificationVector

    v_iso = sample_haar_isometry(spec.d_i, spec.d_o * spec.d_e, rs)
    vec = choi_vector_from_isometry(v_iso)
    pur = PurificationVector(spec.d_i, spec.d_o, spec.d_e, vec)
    return pur.marginal_choi(), pur


def sample_wishart_choi(spec: EnsembleSpec, rs: RandomStream | np.random.Generator):
    """Random Choi matrix via the normalized-Wishart route.

    Forms W = GG† for Ginibre G (d_i d_o x d_e) and enforces trace
    preservation with T = tr_O W through (T^(-1/2) x 1) W (T^(-1/2) x 1).
    Same distribution as the marginal of :func:`sample_choi`.
    """
    from .channels import ChoiOperator

    g = sample_ginibre(spec.d_i * spec.d_o, spec.d_e, rs)
    w = g @ g.conj().T
    t = partial_trace(w, (spec.d_i, spec.d_o), keep=(0,))
    vals, vecs = np.linalg.eigh(t)
    if np.min(vals) <= 1e-14 * max(np.max(vals), 1e-300):
        raise SingularNormalizer("tr_O(GG†) is numerically singular")
    t_inv_root = (vecs / np.sqrt(vals)) @ vecs.conj().T
    s = np.kron(t_inv_root, np.eye(spec.d_o))
    return ChoiOperator(spec.d_i, spec.d_o, s @ w @ s)


# ---------------------------------------------------------------------------
# Marchenko-Pastur reference quantities
# ---------------------------------------------------------------------------


def mp_support(c: float) -> tuple[float, float]:
    """Support edges ((1 - sqrt(c))^2, (1 + sqrt(c))^2) of the bulk."""
    if c <= 0:
        raise DomainError("aspect ratio c must be positive")
    s = math.sqrt(c)
    return (1.0 - s) ** 2, (1.0 + s) ** 2


def mp_density(c: float, x) -> np.ndarray | float:
    """Absolutely continuous part of the Marchenko-Pastur density.

    The point mass at zero (weight ``(1 - 1/c)+`` for c > 1) is reported
    separately by :func:`mp_atom`, not folded into the density.
    """
    lo, hi = mp_support(c)
    xs = np.asarray(x, dtype=float)
    inside = (xs > lo) & (xs < hi) & (xs > 0.0)
    out = np.zeros_like(xs)
    xin = xs[inside]
    out[inside] = np.sqrt((hi - xin) * (xin - lo)) / (2.0 * math.pi * c * xin)
    if np.isscalar(x):
        return float(out)
    return out


def mp_atom(c: float) -> float:
    """Weight of the point mass at zero: (1 - 1/c)+."""
    if c <= 0:
        raise DomainError("aspect ratio c must be positive")
    return max(0.0, 1.0 - 1.0 / c)


def mp_cdf(c: float, x) -> np.ndarray | float:
    """Cumulative distribution of the Marchenko-Pastur law, atom included.

    Evaluated by dense trapezoidal integration of the bulk density
    (absolute accuracy well below 1e-6, enough for KS statistics).
    """
    lo, hi = mp_support(c)
    grid = np.linspace(lo, hi, 20001)
    dens = mp_density(c, grid)
    cum = np.concatenate(([0.0], np.cumsum((dens[1:] + dens[:-1]) / 2 * np.diff(grid))))
    total = cum[-1]
    atom = mp_atom(c)
    xs = np.asarray(x, dtype=float)
    out = np.interp(xs, grid, cum, left=0.0, right=total)
    out = out / total * (1.0 - atom) + np.where(xs >= 0.0, atom, 0.0)
    if np.isscalar(x):
        return float(out)
    return out


def mp_mu(c: float) -> float:
    """Mean of sqrt(x) under the Marchenko-Pastur law, for 0 < c <= 1.

    Closed form in terms of complete elliptic integrals with parameter
    m = 4 sqrt(c) / (1 + sqrt(c))^2; equals 8 / (3 pi) at c = 1 and tends
    to 1 as c -> 0.
    """
    from .linalg import complete_elliptic

    if not 0.0 < c <= 1.0:
        raise DomainError(f"mp_mu defined for 0 < c <= 1, got {c}")
    s = math.sqrt(c)
    m = 4.0 * s / (1.0 + s) ** 2
    k, e = complete_elliptic(min(m, 1.0))
    coef_k = (1.0 - s) ** 2
    k_term = 0.0 if coef_k == 0.0 else coef_k * k
    return (2.0 * (1.0 + s)) / (3.0 * math.pi * c) * ((1.0 + c) * e - k_term)
