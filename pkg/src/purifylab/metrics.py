"""Per-sample purification errors and Monte Carlo estimators.

The figure of merit is the squared Hilbert-Schmidt distance between the
machine output and the closest purification of the input channel, where
"closest" minimizes over unitaries on the environment.  For the append and
pure-output families that minimum has exact per-sample expressions (the
ordered-eigenvalue trace inequality and the Uhlmann fidelity); a Riemannian
ascent over the environment unitary group covers everything else, with a
grid search on U(2) as an independent oracle.

Reduction contract: per-sample values depend only on (seed, sample index)
and are combined in fixed index order, so every reported mean is identical
for any worker count.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import theory
from .channels import ChoiOperator, PurificationVector
from .ensembles import (
    EnsembleSpec,
    PURPOSE_SAMPLE,
    PURPOSE_WEIGHTS,
    RandomStream,
    _as_generator,
    haar_unitaries_batch,
    sample_ginibre,
)
from .errors import InvalidDims, NotPSD, TooLarge
from .linalg import (
    EIG_FLOOR,
    dagger,
    hermitianize,
    psd_sqrt,
    swap_factors,
    trace_norm,
)
from .strategies import (
    AppendMaxMixed,
    AppendOptimal,
    AppendState,
    AverageEnvUnitary,
    Estimation,
    MapToDepolarizing,
    PureOutput,
    Strategy,
    parse_strategy,
    strategy_label,
    tomography_estimate,
)

__all__ = [
    "ErrorReport",
    "OrbitOptOptions",
    "OrbitResult",
    "MomentReport",
    "error_pure_output",
    "error_append",
    "error_map_to_depolarizing",
    "error_avg_env_unitary",
    "error_orbit_numeric",
    "orbit_bruteforce",
    "estimate_average_error",
    "estimate_moments",
    "estimate_ordered_weights",
    "make_strategy",
    "second_moment_operator",
    "second_moment_closed_form",
    "channel_pair_moment_closed_form",
]

ZERO_VARIANCE = 1e-20
_CHUNK = 512


# ---------------------------------------------------------------------------
# Report types
# ---------------------------------------------------------------------------


@dataclass
class ErrorReport:
    """Monte Carlo estimate of an average purification error."""

    strategy: str
    d_i: int
    d_o: int
    d_e: int
    n: int
    seed: int
    mean: float
    stderr: float
    closed_form: Optional[float] = None
    per_sample: Optional[np.ndarray] = None

    def consistent_with_closed_form(self, n_sigma: float = 4.0) -> Optional[bool]:
        """None when no closed form is attached; otherwise the n-sigma check."""
        if self.closed_form is None:
            return None
        slack = n_sigma * self.stderr + 1e-9
        return abs(self.mean - self.closed_form) <= slack

    def to_json_dict(self) -> dict:
        return {
            "strategy": self.strategy,
            "d_i": self.d_i,
            "d_o": self.d_o,
            "d_e": self.d_e,
            "n": self.n,
            "seed": self.seed,
            "mean": self.mean,
            "stderr": self.stderr,
            "closed_form": self.closed_form,
        }


@dataclass(frozen=True)
class OrbitOptOptions:
    """Knobs of the environment-unitary ascent."""

    restarts: int = 20
    max_iters: int = 500
    rel_tol: float = 1e-9
    armijo_slope: float = 1e-4
    backtrack: float = 0.5
    initial_step: float = 1.0

    def __post_init__(self) -> None:
        if self.restarts < 1:
            raise InvalidDims("orbit optimizer needs at least one restart")


@dataclass(frozen=True)
class OrbitResult:
    error: float
    overlap: float
    converged: bool
    best_unitary: np.ndarray

    def __float__(self) -> float:
        return self.error


@dataclass(frozen=True)
class MomentReport:
    """Monte Carlo estimate of a spectral moment (vector-valued in general)."""

    name: str
    values: np.ndarray
    stderr: np.ndarray
    n: int
    seed: int

    @property
    def value(self) -> float:
        return float(self.values[0])


# ---------------------------------------------------------------------------
# Sample bank (batched channel draws keyed by sample index)
# ---------------------------------------------------------------------------


def _vmat_bank(spec: EnsembleSpec, lo: int, hi: int, purpose: int) -> np.ndarray:
    """Purification matrices (batch, d_i*d_o, d_e) for sample indices [lo, hi)."""
    d_i, d_o, d_e = spec.dims
    big = d_o * d_e
    count = hi - lo
    gs = np.empty((count, big, d_i), dtype=complex)
    for j, i in enumerate(range(lo, hi)):
        gs[j] = sample_ginibre(big, d_i, spec.stream(i, purpose))
    h = np.einsum("bji,bjk->bik", gs.conj(), gs)
    vals, vecs = np.linalg.eigh(h)
    inv_root = np.einsum("bij,bj,bkj->bik", vecs, 1.0 / np.sqrt(vals), vecs.conj())
    visos = gs @ inv_root
    return visos.transpose(0, 2, 1).reshape(count, d_i * d_o, d_e)


def _choi_bank(spec: EnsembleSpec, lo: int, hi: int, purpose: int) -> np.ndarray:
    vm = _vmat_bank(spec, lo, hi, purpose)
    return vm @ vm.conj().transpose(0, 2, 1)


def _floored_eigvalsh(stack: np.ndarray) -> np.ndarray:
    """Ascending eigenvalues with the relative zero floor applied."""
    vals = np.linalg.eigvalsh(stack)
    top = np.maximum(vals.max(axis=1, keepdims=True), 0.0)
    vals = np.where(vals < EIG_FLOOR * top, 0.0, vals)
    return np.maximum(vals, 0.0)


# ---------------------------------------------------------------------------
# Per-sample error routes (exact minimizations)
# ---------------------------------------------------------------------------


def error_pure_output(c: ChoiOperator, w: PurificationVector) -> float:
    """Exact orbit-minimized error of a fixed pure output against channel c.

    By the Uhlmann relation the best overlap with a purification of c is
    the fidelity of the marginals, so the error is
    2 d_i^2 - 2 ||sqrt(C) sqrt(tr_E |w><w|)||_1^2.
    Depends on w only through its marginal; environments of different size
    need no explicit embedding.
    """
    if (c.d_i, c.d_o) != (w.d_i, w.d_o):
        raise InvalidDims("channel and pure output dims differ")
    m_w = w.marginal_choi().matrix
    overlap = trace_norm(psd_sqrt(c.matrix) @ psd_sqrt(m_w)) ** 2
    return _clip_error(2.0 * c.d_i**2 - 2.0 * overlap, c.d_i)


def error_append(c: ChoiOperator, rho_e: np.ndarray) -> float:
    """Exact orbit-minimized error of appending state rho_e to channel c.

    The orbit maximum of the overlap is the descending-eigenvalue pairing
    sum_i (c_i)^2 lambda_i (ordered trace inequality), giving
    d_i^2 + tr(C^2) tr(rho^2) - 2 sum_i (c_i)^2 lambda_i.
    """
    rho_e = np.asarray(rho_e, dtype=complex)
    cvals = np.sort(np.linalg.eigvalsh(hermitianize(c.matrix)))[::-1]
    lam = np.sort(np.linalg.eigvalsh(hermitianize(rho_e)))[::-1]
    return _append_error_from_spectra(c.d_i, cvals, lam)


def _append_error_from_spectra(d_i: int, cvals: np.ndarray, lam: np.ndarray) -> float:
    k = min(cvals.size, lam.size)
    purity = float(np.sum(cvals**2))
    rho_purity = float(np.sum(lam**2))
    pair = float(np.sum((cvals[:k] ** 2) * lam[:k]))
    return _clip_error(d_i**2 + purity * rho_purity - 2.0 * pair, d_i)


def error_map_to_depolarizing(d_i: int, d_o: int, d_e: int) -> float:
    """Constant per-sample error of the map-to-depolarizing machine."""
    return d_i**2 - d_i / (d_o * d_e)


def error_avg_env_unitary(c: ChoiOperator, d_e: int) -> float:
    """Per-sample value of the environment-averaged objective for C x 1/d_e."""
    return _clip_error(c.d_i**2 - c.purity() / d_e, c.d_i)


def _clip_error(err: float, d_i: int) -> float:
    return float(min(max(err, 0.0), 2.0 * d_i**2))


# ---------------------------------------------------------------------------
# Orbit optimization (numeric route) and U(2) brute force (oracle)
# ---------------------------------------------------------------------------


def _polar_unitary(a: np.ndarray) -> np.ndarray:
    u, _, vh = np.linalg.svd(a)
    return u @ vh


def _tangent_project(u: np.ndarray, z: np.ndarray) -> np.ndarray:
    inner = dagger(u) @ z
    return z - u @ (inner + dagger(inner)) / 2.0


def _overlap(q: np.ndarray, vmat: np.ndarray, u: np.ndarray) -> tuple[float, np.ndarray]:
    v_u = (vmat @ u.T).reshape(-1)
    g_vec = q @ v_u
    f = float(np.vdot(v_u, g_vec).real)
    gmat = g_vec.reshape(vmat.shape)
    grad = 2.0 * (gmat.T @ vmat.conj())
    return f, grad


def _ascend(
    q: np.ndarray, vmat: np.ndarray, u0: np.ndarray, opts: OrbitOptOptions
) -> tuple[float, np.ndarray, bool]:
    """Armijo-safeguarded ascent with Barzilai-Borwein trial steps.

    The BB step adapts to the local curvature, which matters on the nearly
    flat ridges that appear when the overlap spectrum is close to
    degenerate; plain fixed-growth steps crawl there.
    """
    u = u0
    f, grad = _overlap(q, vmat, u)
    xi = _tangent_project(u, grad)
    step = opts.initial_step
    converged = False
    for _ in range(opts.max_iters):
        slope = float(np.vdot(xi, xi).real)
        if slope <= opts.rel_tol**2 * max(1.0, abs(f)):
            converged = True
            break
        improved = False
        alpha = step
        for _ in range(60):
            trial = _polar_unitary(u + alpha * xi)
            f_trial, grad_trial = _overlap(q, vmat, trial)
            if f_trial >= f + opts.armijo_slope * alpha * slope:
                improved = True
                break
            alpha *= opts.backtrack
        if not improved:
            converged = True
            break
        xi_new = _tangent_project(trial, grad_trial)
        s_vec = alpha * xi
        y_vec = xi_new - xi
        sy = abs(float(np.vdot(s_vec, y_vec).real))
        yy = float(np.vdot(y_vec, y_vec).real)
        step = sy / yy if sy > 1e-300 and yy > 1e-300 else alpha * 2.0
        step = min(max(step, 1e-8), 1e8)
        u, f, grad, xi = trial, f_trial, grad_trial, xi_new
    return f, u, converged


def error_orbit_numeric(
    q_out: np.ndarray,
    v: PurificationVector,
    opts: OrbitOptOptions | None = None,
    rs: RandomStream | np.random.Generator | None = None,
) -> OrbitResult:
    """Best-of-restarts Riemannian ascent of the orbit overlap.

    Maximizes tr[Q (1 x U) |V><V| (1 x U†)] over environment unitaries by
    gradient ascent with tangent-space projection, polar retraction, and
    Armijo backtracking; the identity is always one of the starting points.
    The returned error tr(Q^2) + d_i^2 - 2 * best is an upper bound on the
    true orbit minimum that matches the exact routes on the append and
    pure-output families.
    """
    opts = opts or OrbitOptOptions()
    rng = _as_generator(rs if rs is not None else RandomStream(0, 0))
    q = np.asarray(q_out, dtype=complex)
    side = v.d_i * v.d_o * v.d_e
    if q.shape != (side, side):
        raise InvalidDims(f"machine output shape {q.shape}, expected {(side, side)}")
    scale = max(float(np.max(np.abs(q))), 1e-300)
    if np.max(np.abs(q - dagger(q))) > 1e-9 * scale:
        raise NotPSD("machine output must be Hermitian")
    if float(np.min(np.linalg.eigvalsh(hermitianize(q)))) < -1e-8 * scale:
        raise NotPSD("machine output must be PSD")

    vmat = v.as_matrix()
    q_purity = float(np.vdot(q, q).real)
    best_f = -np.inf
    best_u = np.eye(v.d_e, dtype=complex)
    best_conv = False
    starts = [np.eye(v.d_e, dtype=complex)]
    if opts.restarts > 1:
        starts.extend(haar_unitaries_batch(v.d_e, opts.restarts - 1, rng))
    for u0 in starts:
        f, u, conv = _ascend(q, vmat, u0, opts)
        if f > best_f:
            best_f, best_u, best_conv = f, u, conv
    err = _clip_error(q_purity + v.d_i**2 - 2.0 * best_f, v.d_i)
    return OrbitResult(err, best_f, best_conv, best_u)


def orbit_bruteforce(
    q_out: np.ndarray, v: PurificationVector, resolution: int = 24
) -> float:
    """Deterministic grid minimum of the orbit error for d_e <= 2.

    Scans an Euler-angle grid on U(2) modulo global phase (``resolution``
    points per angle); the result upper-bounds the true orbit minimum and
    serves as an independent oracle for the numeric ascent.
    """
    if v.d_e > 2:
        raise TooLarge("brute-force grid supports d_e <= 2 only")
    q = np.asarray(q_out, dtype=complex)
    q_purity = float(np.vdot(q, q).real)
    vmat = v.as_matrix()
    if v.d_e == 1:
        f = float(np.vdot(vmat.reshape(-1), q @ vmat.reshape(-1)).real)
        return _clip_error(q_purity + v.d_i**2 - 2.0 * f, v.d_i)

    alphas = np.linspace(0.0, 2.0 * math.pi, resolution, endpoint=False)
    betas = np.linspace(0.0, math.pi, resolution)
    gammas = np.linspace(0.0, 2.0 * math.pi, resolution, endpoint=False)
    a, b, g = np.meshgrid(alphas, betas, gammas, indexing="ij")
    a, b, g = a.ravel(), b.ravel(), g.ravel()
    # U = Rz(a) Ry(b) Rz(g), global phase dropped.
    cos_b, sin_b = np.cos(b / 2), np.sin(b / 2)
    u = np.empty((a.size, 2, 2), dtype=complex)
    u[:, 0, 0] = np.exp(-0.5j * (a + g)) * cos_b
    u[:, 0, 1] = -np.exp(-0.5j * (a - g)) * sin_b
    u[:, 1, 0] = np.exp(0.5j * (a - g)) * sin_b
    u[:, 1, 1] = np.exp(0.5j * (a + g)) * cos_b

    v_u = np.einsum("gef,mf->gme", u, vmat).reshape(a.size, -1)
    f = np.einsum("gi,ij,gj->g", v_u.conj(), q, v_u).real
    return _clip_error(q_purity + v.d_i**2 - 2.0 * float(f.max()), v.d_i)


# ---------------------------------------------------------------------------
# Monte Carlo estimators
# ---------------------------------------------------------------------------


def _per_sample_chunk(strategy: Strategy, spec: EnsembleSpec, lo: int, hi: int) -> np.ndarray:
    """Errors for sample indices [lo, hi), each by its tightest exact route."""
    d_i, d_o, d_e = spec.dims

    if isinstance(strategy, MapToDepolarizing):
        val = error_map_to_depolarizing(d_i, d_o, strategy.d_e)
        return np.full(hi - lo, val)

    if isinstance(strategy, Estimation):
        out = np.empty(hi - lo)
        for j, i in enumerate(range(lo, hi)):
            gen = spec.stream(i).generator()
            g = sample_ginibre(d_o * d_e, d_i, gen)
            h = g.conj().T @ g
            vals, vecs = np.linalg.eigh(h)
            viso = g @ ((vecs / np.sqrt(vals)) @ vecs.conj().T)
            vmat = np.ascontiguousarray(viso.T).reshape(d_i * d_o, d_e)
            c = ChoiOperator(d_i, d_o, vmat @ vmat.conj().T)
            est = tomography_estimate(c, strategy.k, gen)
            out[j] = error_pure_output(c, est)
        return out

    chois = _choi_bank(spec, lo, hi, PURPOSE_SAMPLE)

    if isinstance(strategy, PureOutput):
        m_w = strategy.w.marginal_choi().matrix
        sqrt_w = psd_sqrt(m_w)
        vals, vecs = np.linalg.eigh(chois)
        top = np.maximum(vals.max(axis=1, keepdims=True), 0.0)
        vals = np.where(vals < EIG_FLOOR * top, 0.0, np.maximum(vals, 0.0))
        sqrt_c = np.einsum("bij,bj,bkj->bik", vecs, np.sqrt(vals), vecs.conj())
        prod = sqrt_c @ sqrt_w
        overlap = np.linalg.svd(prod, compute_uv=False).sum(axis=1) ** 2
        errs = 2.0 * d_i**2 - 2.0 * overlap
        return np.clip(errs, 0.0, 2.0 * d_i**2)

    if isinstance(strategy, AverageEnvUnitary):
        purities = np.einsum("bij,bij->b", chois.conj(), chois).real
        errs = d_i**2 - purities / strategy.d_e
        return np.clip(errs, 0.0, 2.0 * d_i**2)

    if isinstance(strategy, (AppendState, AppendMaxMixed, AppendOptimal)):
        if isinstance(strategy, AppendMaxMixed):
            lam = np.full(strategy.d_e, 1.0 / strategy.d_e)
        elif isinstance(strategy, AppendOptimal):
            lam = np.sort(strategy.spectrum())[::-1]
        else:
            lam = np.sort(np.linalg.eigvalsh(hermitianize(strategy.rho_e)))[::-1]
        cvals = np.sort(np.linalg.eigvalsh(chois), axis=1)[:, ::-1]
        k = min(cvals.shape[1], lam.size)
        purity = np.sum(cvals**2, axis=1)
        pair = (cvals[:, :k] ** 2) @ lam[:k]
        errs = d_i**2 + purity * float(np.sum(lam**2)) - 2.0 * pair
        return np.clip(errs, 0.0, 2.0 * d_i**2)

    raise TypeError(f"no per-sample route for strategy {strategy!r}")


def _chunk_worker(args):
    strategy, spec, lo, hi = args
    return _per_sample_chunk(strategy, spec, lo, hi)


def per_sample_errors(
    strategy: Strategy, spec: EnsembleSpec, n: int, workers: int = 1
) -> np.ndarray:
    """Per-sample errors for indices 0..n-1, identical for any worker count."""
    bounds = [(lo, min(lo + _CHUNK, n)) for lo in range(0, n, _CHUNK)]
    if workers <= 1 or len(bounds) == 1:
        parts = [_per_sample_chunk(strategy, spec, lo, hi) for lo, hi in bounds]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(
                pool.map(_chunk_worker, [(strategy, spec, lo, hi) for lo, hi in bounds])
            )
    return np.concatenate(parts)


def _default_closed_form(strategy: Strategy, spec: EnsembleSpec) -> Optional[float]:
    d_i, d_o, d_e = spec.dims
    if isinstance(strategy, MapToDepolarizing):
        return theory.eps_dep(d_i, d_o, strategy.d_e)
    if isinstance(strategy, (AverageEnvUnitary, AppendMaxMixed)):
        return theory.eps_avg_ue(d_i, d_o, d_e)
    if isinstance(strategy, PureOutput):
        if strategy.label == "pure:separable":
            return theory.eps_separable_pure_output(d_i, d_o)
        if d_e == 1:
            return theory.eps_pure_isometric_inputs(d_i, d_o)
        return None
    if isinstance(strategy, (AppendState, AppendOptimal)) and d_e == 1:
        return 0.0
    return None


def estimate_average_error(
    strategy: Strategy,
    spec: EnsembleSpec,
    n: int,
    *,
    workers: int = 1,
    keep_per_sample: bool = False,
) -> ErrorReport:
    """Monte Carlo mean and standard error of the per-sample purification error.

    Each sample uses the substream keyed by its index; the closed-form field
    is filled whenever the strategy admits a moment-free exact value.
    Sample variance below 1e-20 is reported as stderr exactly zero
    (genuinely constant strategies).
    """
    if n < 2:
        raise InvalidDims("Monte Carlo estimation needs n >= 2")
    per = per_sample_errors(strategy, spec, n, workers)
    mean = float(np.mean(per))
    var = float(np.var(per, ddof=1))
    stderr = 0.0 if var < ZERO_VARIANCE else math.sqrt(var / n)
    return ErrorReport(
        strategy=strategy_label(strategy),
        d_i=spec.d_i,
        d_o=spec.d_o,
        d_e=spec.d_e,
        n=n,
        seed=spec.seed,
        mean=mean,
        stderr=stderr,
        closed_form=_default_closed_form(strategy, spec),
        per_sample=per if keep_per_sample else None,
    )


_MOMENT_NAMES = ("purity", "sqrt_trace_sq", "ordered_eig_sq", "cmax_sq")


def _moment_chunk(spec: EnsembleSpec, lo: int, hi: int, which: str, purpose: int):
    chois = _choi_bank(spec, lo, hi, purpose)
    vals = _floored_eigvalsh(chois)  # ascending, floored at zero
    if which == "purity":
        return np.sum(vals**2, axis=1)[:, None]
    if which == "sqrt_trace_sq":
        return (np.sum(np.sqrt(vals), axis=1) ** 2)[:, None]
    if which == "cmax_sq":
        return (vals[:, -1] ** 2)[:, None]
    if which == "ordered_eig_sq":
        r = min(spec.d_e, spec.d_i * spec.d_o)
        desc = vals[:, ::-1]
        return desc[:, :r] ** 2
    raise InvalidDims(f"unknown moment {which!r}; expected one of {_MOMENT_NAMES}")


def _moment_worker(args):
    spec, lo, hi, which, purpose = args
    return _moment_chunk(spec, lo, hi, which, purpose)


def estimate_moments(
    spec: EnsembleSpec,
    n: int,
    which: str,
    *,
    workers: int = 1,
    purpose: int = PURPOSE_SAMPLE,
) -> MomentReport:
    """Monte Carlo estimate of a spectral moment of the channel ensemble.

    ``which`` is one of ``purity`` (tr C^2), ``sqrt_trace_sq``
    ((tr sqrt C)^2), ``ordered_eig_sq`` (vector of descending-eigenvalue
    second moments, length min(d_e, d_i d_o)), or ``cmax_sq``.
    """
    if n < 2:
        raise InvalidDims("moment estimation needs n >= 2")
    bounds = [(lo, min(lo + _CHUNK, n)) for lo in range(0, n, _CHUNK)]
    if workers <= 1 or len(bounds) == 1:
        parts = [_moment_chunk(spec, lo, hi, which, purpose) for lo, hi in bounds]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(
                pool.map(
                    _moment_worker,
                    [(spec, lo, hi, which, purpose) for lo, hi in bounds],
                )
            )
    samples = np.concatenate(parts, axis=0)
    values = samples.mean(axis=0)
    stderr = samples.std(axis=0, ddof=1) / math.sqrt(n)
    return MomentReport(which, values, stderr, n, spec.seed)


def estimate_ordered_weights(
    spec: EnsembleSpec, n: int, *, workers: int = 1
) -> np.ndarray:
    """Ordered-eigenvalue second moments from the reserved weight streams."""
    report = estimate_moments(
        spec, n, "ordered_eig_sq", workers=workers, purpose=PURPOSE_WEIGHTS
    )
    return report.values


def make_strategy(
    text: str, spec: EnsembleSpec, *, n_weights: int = 2000, workers: int = 1
) -> Strategy:
    """Parse a strategy string, estimating weights for append:optimal."""
    if text.strip() == "append:optimal":
        w = estimate_ordered_weights(spec, n_weights, workers=workers)
        return parse_strategy(text, spec, append_weights=w)
    return parse_strategy(text, spec)


# ---------------------------------------------------------------------------
# Second-moment operator (Monte Carlo vs exact two-copy average)
# ---------------------------------------------------------------------------


def _second_moment_chunk(spec: EnsembleSpec, lo: int, hi: int) -> np.ndarray:
    vm = _vmat_bank(spec, lo, hi, PURPOSE_SAMPLE)
    vecs = vm.reshape(hi - lo, -1)
    pairs = np.einsum("bi,bj->bij", vecs, vecs).reshape(hi - lo, -1)
    return np.einsum("bi,bj->ij", pairs, pairs.conj())


def _second_moment_worker(args):
    spec, lo, hi = args
    return _second_moment_chunk(spec, lo, hi)


def second_moment_operator(
    spec: EnsembleSpec, n: int, *, workers: int = 1
) -> np.ndarray:
    """Monte Carlo average of the two-copy projector |V><V| x |V><V|.

    Chunk partial sums are combined in fixed order, so the result is
    worker-count independent.  Dense storage limits the joint dimension to
    d_i * d_o * d_e <= 64.
    """
    side = spec.d_i * spec.d_o * spec.d_e
    if side > 64:
        raise TooLarge("two-copy operator needs d_i * d_o * d_e <= 64")
    bounds = [(lo, min(lo + _CHUNK, n)) for lo in range(0, n, _CHUNK)]
    if workers <= 1 or len(bounds) == 1:
        parts = [_second_moment_chunk(spec, lo, hi) for lo, hi in bounds]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(
                pool.map(_second_moment_worker, [(spec, lo, hi) for lo, hi in bounds])
            )
    acc = parts[0].copy()
    for p in parts[1:]:
        acc += p
    return acc / n


def second_moment_closed_form(spec: EnsembleSpec) -> np.ndarray:
    """Exact Haar average of |V><V| x |V><V| from the two-moment identity.

    With D = d_o * d_e the average equals
    (1 + F_I F_O F_E) / (D^2 - 1) - (F_I + F_O F_E) / (D (D^2 - 1)),
    where F_X swaps the X factors of the two copies.
    """
    d_i, d_o, d_e = spec.dims
    side = d_i * d_o * d_e
    if side > 64:
        raise TooLarge("two-copy operator needs d_i * d_o * d_e <= 64")
    big = d_o * d_e
    dims = [d_i, d_o, d_e, d_i, d_o, d_e]
    f_i = swap_factors(dims, 0, 3)
    f_oe = swap_factors(dims, 1, 4) @ swap_factors(dims, 2, 5)
    eye = np.eye(side * side)
    return (eye + f_i @ f_oe) / (big**2 - 1) - (f_i + f_oe) / (big * (big**2 - 1))


def channel_pair_moment_closed_form(spec: EnsembleSpec) -> np.ndarray:
    """Exact E[C x C] on I O I' O', the environment trace of the two-copy average.

    (d_e^2 1 + d_e F_I F_O) / (D^2 - 1)
    - (d_e^2 F_I + d_e F_O) / (D (D^2 - 1)), D = d_o * d_e.
    """
    d_i, d_o, d_e = spec.dims
    big = d_o * d_e
    dims = [d_i, d_o, d_i, d_o]
    f_i = swap_factors(dims, 0, 2)
    f_o = swap_factors(dims, 1, 3)
    side = (d_i * d_o) ** 2
    eye = np.eye(side)
    lead = (d_e**2 * eye + d_e * f_i @ f_o) / (big**2 - 1)
    sub = (d_e**2 * f_i + d_e * f_o) / (big * (big**2 - 1))
    return lead - sub
