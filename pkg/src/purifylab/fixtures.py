"""Golden fixture runner.

Each fixture record names a public operation, its JSON-encoded input, the
expected output, a tolerance, and a provenance tag (``closed_form`` for
values fixed by exact formulas, ``trivial`` for definitional cases,
``derived`` for values computed by an independent oracle).
"""

from __future__ import annotations

import json
from importlib import resources

import numpy as np

from . import theory
from .channels import ChoiOperator, choi_from_kraus, kraus_from_choi, stinespring_from_choi
from .channels import depolarizing_choi
from .ensembles import mp_mu
from .errors import PurifyLabError
from .linalg import complete_elliptic, fidelity, flip_operator
from .metrics import error_map_to_depolarizing

__all__ = ["run_fixtures", "PROVENANCE_TAGS"]

PROVENANCE_TAGS = ("closed_form", "trivial", "derived")


def _matrix_from_json(data: dict) -> np.ndarray:
    side = int(data["side"])
    flat = np.array([complex(re, im) for re, im in data["re_im"]])
    return flat.reshape(side, side)


def _op_depolarizing_choi(inp):
    return depolarizing_choi(inp["d_i"], inp["d_o"]).matrix


def _op_avg_purity(inp):
    return theory.avg_purity(inp["d_i"], inp["d_o"], inp["d_e"])


def _op_eps_dep(inp):
    return theory.eps_dep(inp["d_i"], inp["d_o"], inp["d_e"])


def _op_eps_avg_ue(inp):
    return theory.eps_avg_ue(inp["d_i"], inp["d_o"], inp["d_e"])


def _op_eps_app_bounds(inp):
    return list(theory.eps_app_bounds(inp["d_i"], inp["d_o"], inp["d_e"]))


def _op_error_map_to_depolarizing(inp):
    return error_map_to_depolarizing(inp["d_i"], inp["d_o"], inp["d_e"])


def _op_mp_mu(inp):
    return mp_mu(inp["c"])


def _op_complete_elliptic(inp):
    return list(complete_elliptic(inp["m"]))


def _op_flip_trace(inp):
    return float(np.trace(flip_operator(inp["d"])).real)


def _op_fidelity(inp):
    return fidelity(_matrix_from_json(inp["rho"]), _matrix_from_json(inp["sigma"]))


def _op_kraus_roundtrip_dev(inp):
    c = ChoiOperator.from_json_dict(inp["choi"])
    back = choi_from_kraus(kraus_from_choi(c))
    return float(np.max(np.abs(back.matrix - c.matrix)))


def _op_stinespring_marginal_dev(inp):
    c = ChoiOperator.from_json_dict(inp["choi"])
    v = stinespring_from_choi(c, inp["d_e"])
    return float(np.max(np.abs(v.marginal_choi().matrix - c.matrix)))


_OPS = {
    "depolarizing_choi": _op_depolarizing_choi,
    "avg_purity": _op_avg_purity,
    "eps_dep": _op_eps_dep,
    "eps_avg_ue": _op_eps_avg_ue,
    "eps_app_bounds": _op_eps_app_bounds,
    "error_map_to_depolarizing": _op_error_map_to_depolarizing,
    "mp_mu": _op_mp_mu,
    "complete_elliptic": _op_complete_elliptic,
    "flip_trace": _op_flip_trace,
    "fidelity": _op_fidelity,
    "kraus_roundtrip_dev": _op_kraus_roundtrip_dev,
    "stinespring_marginal_dev": _op_stinespring_marginal_dev,
}


def _max_dev(got, expected) -> float:
    if isinstance(expected, dict) and "re_im" in expected:
        want = np.array([complex(re, im) for re, im in expected["re_im"]])
        return float(np.max(np.abs(np.asarray(got).reshape(-1) - want)))
    got_arr = np.asarray(got, dtype=float).reshape(-1)
    want_arr = np.asarray(expected, dtype=float).reshape(-1)
    if got_arr.shape != want_arr.shape:
        raise PurifyLabError("fixture output shape mismatch")
    return float(np.max(np.abs(got_arr - want_arr)))


def run_fixtures(path: str | None = None) -> dict:
    """Evaluate every fixture record; returns a pass/fail report dict."""
    if path is None:
        source = resources.files("purifylab").joinpath("data/golden_fixtures.json")
        raw = source.read_text(encoding="utf-8")
    else:
        with open(path, encoding="utf-8") as fh:
            raw = fh.read()
    try:
        records = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise PurifyLabError(f"fixture file does not parse: {exc}") from exc

    results = []
    passed = 0
    for rec in records:
        for key in ("name", "op", "input", "expected", "tol", "provenance"):
            if key not in rec:
                raise PurifyLabError(f"fixture record missing field {key!r}: {rec}")
        if rec["provenance"] not in PROVENANCE_TAGS:
            raise PurifyLabError(f"unknown provenance tag {rec['provenance']!r}")
        op = _OPS.get(rec["op"])
        if op is None:
            raise PurifyLabError(f"unknown fixture op {rec['op']!r}")
        got = op(rec["input"])
        dev = _max_dev(got, rec["expected"])
        ok = dev <= rec["tol"]
        passed += ok
        results.append(
            {
                "name": rec["name"],
                "provenance": rec["provenance"],
                "deviation": dev,
                "tolerance": rec["tol"],
                "status": "pass" if ok else "FAIL",
            }
        )
    return {"total": len(records), "passed": passed, "records": results}
