"""The purification machines as executable objects.

Each strategy maps an input Choi operator to a machine output on the
A x B x E space (a PSD operator of trace d_i).  The implemented families:

* ``PureOutput``   - ignore the input, emit a fixed pure Choi operator;
* ``AppendState``  - leave the input unchanged, append a fixed state;
* ``AppendMaxMixed`` / ``AppendOptimal`` / ``AppendPure`` - append special
  spectra (maximally mixed, optimal thresholded weights, pure);
* ``MapToDepolarizing`` - emit the flat operator 1/(d_o d_e);
* ``AverageEnvUnitary`` - the append-maximally-mixed machine scored by the
  environment-unitary average instead of the minimum;
* ``Estimation``   - a k-copy measure-and-reprepare machine built on
  single-copy tomography in random bases.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from .channels import (
    ChoiOperator,
    PurificationVector,
    apply_env_unitary,
    identity_isometry_purification,
    max_entangled_purification,
    separable_purification,
    stinespring_from_choi,
)
from .ensembles import (
    EnsembleSpec,
    PURPOSE_FIXED,
    RandomStream,
    _as_generator,
    haar_unitaries_batch,
    sample_haar_unitary,
)
from .errors import InvalidDims, InvalidWeights
from .linalg import hermitianize

__all__ = [
    "PureOutput",
    "AppendState",
    "AppendMaxMixed",
    "AppendOptimal",
    "MapToDepolarizing",
    "AverageEnvUnitary",
    "Estimation",
    "Strategy",
    "STRATEGY_GRAMMAR",
    "apply",
    "optimal_append_spectrum",
    "tomography_estimate",
    "parse_strategy",
]


@dataclass(frozen=True)
class PureOutput:
    """Emit the fixed pure Choi operator |w><w| regardless of the input."""

    w: PurificationVector
    label: str = "pure"


@dataclass(frozen=True)
class AppendState:
    """Append the fixed environment state rho_e to the unchanged input."""

    rho_e: np.ndarray
    label: str = "append"

    def __post_init__(self) -> None:
        object.__setattr__(self, "rho_e", np.asarray(self.rho_e, dtype=complex))


@dataclass(frozen=True)
class AppendMaxMixed:
    d_e: int
    label: str = "append:maxmixed"


@dataclass(frozen=True)
class AppendOptimal:
    """Append a state with the error-minimizing spectrum.

    ``weights`` are ordered-eigenvalue second moments (descending, length
    d_e, zero-padded); the appended spectrum is weights normalized to unit
    sum.
    """

    weights: tuple[float, ...]
    label: str = "append:optimal"

    def spectrum(self) -> np.ndarray:
        w = np.asarray(self.weights, dtype=float)
        return w / w.sum()


@dataclass(frozen=True)
class MapToDepolarizing:
    d_e: int
    label: str = "dep"


@dataclass(frozen=True)
class AverageEnvUnitary:
    """Append-maximally-mixed machine, scored by the average over environment
    unitaries rather than the orbit minimum."""

    d_e: int
    label: str = "avg-ue"


@dataclass(frozen=True)
class Estimation:
    """Measure k copies, reprepare the estimated purification.

    ``k = None`` is the infinite-copy surrogate: the exact input is fed
    through the canonical purifier.
    """

    k: Optional[int]
    label: str = "tomo"


Strategy = Union[
    PureOutput,
    AppendState,
    AppendMaxMixed,
    AppendOptimal,
    MapToDepolarizing,
    AverageEnvUnitary,
    Estimation,
]

STRATEGY_GRAMMAR = (
    "pure:omega | pure:separable | pure:random | append:maxmixed | "
    "append:optimal | append:pure | dep | avg-ue | tomo:k=<int|inf>"
)


def apply(
    strategy: Strategy,
    c: ChoiOperator,
    rs: RandomStream | np.random.Generator | None = None,
) -> np.ndarray:
    """Machine output Q(C) on the joint A x B x E space.

    Always a PSD operator of trace d_i.  Only the estimation machine
    consumes randomness.
    """
    d_i, d_o = c.d_i, c.d_o
    if isinstance(strategy, PureOutput):
        w = strategy.w
        if (w.d_i, w.d_o) != (d_i, d_o):
            raise InvalidDims("pure output dims do not match the input channel")
        return w.projector()
    if isinstance(strategy, AppendState):
        rho = strategy.rho_e
        if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
            raise InvalidDims("appended state must be a square matrix")
        return np.kron(c.matrix, rho)
    if isinstance(strategy, (AppendMaxMixed, AverageEnvUnitary)):
        return np.kron(c.matrix, np.eye(strategy.d_e) / strategy.d_e)
    if isinstance(strategy, AppendOptimal):
        return np.kron(c.matrix, np.diag(strategy.spectrum()).astype(complex))
    if isinstance(strategy, MapToDepolarizing):
        side = d_i * d_o * strategy.d_e
        return np.eye(side, dtype=complex) * (d_i / side)
    if isinstance(strategy, Estimation):
        if rs is None:
            raise InvalidDims("estimation strategy needs a random stream")
        est = tomography_estimate(c, strategy.k, rs)
        return est.projector()
    raise TypeError(f"unknown strategy {strategy!r}")


def optimal_append_spectrum(
    weights, avg_purity: float, *, tol: float = 1e-6
) -> np.ndarray:
    """Error-minimizing spectrum of the appended state: lambda_i = w_i / purity.

    ``weights`` must be non-negative and non-increasing with sum equal to
    the average purity within ``tol`` (the thresholding solution of the
    constrained quadratic program has threshold zero exactly then).
    """
    w = np.asarray(weights, dtype=float)
    if w.size == 0 or np.any(w < 0):
        raise InvalidWeights("weights must be non-negative and non-empty")
    if np.any(np.diff(w) > 1e-12 * max(w.max(), 1.0)):
        raise InvalidWeights("weights must be non-increasing")
    if abs(w.sum() - avg_purity) > tol * max(1.0, abs(avg_purity)):
        raise InvalidWeights(
            f"sum of weights {w.sum():.6g} is not the average purity "
            f"{avg_purity:.6g} within tolerance"
        )
    return w / avg_purity


_TOMO_CHUNK = 2048


def tomography_estimate(
    c: ChoiOperator, k: Optional[int], rs: RandomStream | np.random.Generator
) -> PurificationVector:
    """Single-copy tomography surrogate for the estimation machine.

    A uniformly random purification of the input (canonical purification
    rotated by one Haar environment unitary) is measured ``k`` times, each
    shot in a fresh Haar-random orthonormal basis of the joint space.  The
    unbiased linear-inversion estimator

        rho_hat = mean_j [ (D + 1) |b_j><b_j| - 1 ],   D = joint dimension,

    is projected onto the PSD cone; its top eigenvector, rescaled to norm
    sqrt(d_i), is the reprepared purification.  The environment size is the
    numerical rank of the input, and the infidelity decays like 1/k.
    """
    rng = _as_generator(rs)
    r = max(c.rank(), 1)
    v0 = stinespring_from_choi(c, r)
    if k is None:
        return v0
    if k < 1:
        raise InvalidDims("copy budget k must be >= 1")

    u_env = sample_haar_unitary(r, rng)
    target = apply_env_unitary(v0, u_env)
    psi = target.vector / math.sqrt(c.d_i)
    dim = psi.size

    basis_sum = np.zeros((dim, dim), dtype=complex)
    done = 0
    while done < k:
        batch = min(_TOMO_CHUNK, k - done)
        bases = haar_unitaries_batch(dim, batch, rng)
        amps = np.einsum("bxm,x->bm", bases.conj(), psi)
        probs = np.abs(amps) ** 2
        probs /= probs.sum(axis=1, keepdims=True)
        u = rng.random((batch, 1))
        outcome = (np.cumsum(probs, axis=1) < u).sum(axis=1)
        outcome = np.minimum(outcome, dim - 1)
        chosen = bases[np.arange(batch), :, outcome]
        basis_sum += np.einsum("bi,bj->ij", chosen, chosen.conj())
        done += batch

    rho_hat = hermitianize((dim + 1) * basis_sum / k - np.eye(dim))
    vals, vecs = np.linalg.eigh(rho_hat)
    top = vecs[:, -1]
    return PurificationVector(c.d_i, c.d_o, r, math.sqrt(c.d_i) * top)


def parse_strategy(
    text: str,
    spec: EnsembleSpec,
    *,
    append_weights=None,
) -> Strategy:
    """Build a strategy from its command-line description.

    Grammar: ``pure:omega``, ``pure:separable``, ``pure:random``,
    ``append:maxmixed``, ``append:optimal``, ``append:pure``, ``dep``,
    ``avg-ue``, ``tomo:k=<int|inf>``.  ``append:optimal`` needs externally
    estimated ordered weights (see metrics.estimate_ordered_weights).
    ``pure:random`` draws its fixed output once from a reserved substream
    of the ensemble seed, so repeated parses agree.
    """
    text = text.strip()
    if text == "pure:omega":
        return PureOutput(max_entangled_purification(spec.d_i, spec.d_o), label=text)
    if text == "pure:separable":
        ups = identity_isometry_purification(spec.d_i, spec.d_o)
        psi = np.zeros(spec.d_e)
        psi[0] = 1.0
        return PureOutput(separable_purification(ups, psi), label=text)
    if text == "pure:random":
        from .ensembles import sample_choi

        _, w = sample_choi(spec, spec.stream(0, PURPOSE_FIXED))
        return PureOutput(w, label=text)
    if text == "append:maxmixed":
        return AppendMaxMixed(spec.d_e)
    if text == "append:optimal":
        if append_weights is None:
            raise InvalidWeights(
                "append:optimal needs estimated ordered weights; see "
                "metrics.make_strategy"
            )
        w = np.zeros(spec.d_e)
        got = np.asarray(append_weights, dtype=float)
        w[: got.size] = got[: spec.d_e]
        return AppendOptimal(tuple(w))
    if text == "append:pure":
        rho = np.zeros((spec.d_e, spec.d_e), dtype=complex)
        rho[0, 0] = 1.0
        return AppendState(rho, label=text)
    if text == "dep":
        return MapToDepolarizing(spec.d_e)
    if text == "avg-ue":
        return AverageEnvUnitary(spec.d_e)
    if text.startswith("tomo:k="):
        raw = text.split("=", 1)[1]
        if raw in ("inf", "none"):
            return Estimation(None, label=text)
        k = int(raw)
        if k < 1:
            raise InvalidDims("tomo copy budget must be >= 1")
        return Estimation(k, label=text)
    raise InvalidDims(f"unknown strategy {text!r}; expected one of {STRATEGY_GRAMMAR}")


def strategy_label(strategy: Strategy) -> str:
    label = getattr(strategy, "label", None)
    if isinstance(strategy, Estimation) and strategy.label == "tomo":
        return f"tomo:k={strategy.k if strategy.k is not None else 'inf'}"
    return label or type(strategy).__name__
