"""Two-step GAM + ARMA modelling of high-frequency nitrate sensor data."""

import json as _json

from . import _core
from ._core import (
    DataError,
    Error,
    Frame,
    aaic,
    arma_loglik,
    load_frame,
    read_frame,
    set_max_threads,
    simulate,
    tprs_basis,
    vif,
    write_frame,
)

__all__ = [
    "DataError",
    "Error",
    "Frame",
    "aaic",
    "arma_loglik",
    "fit_arma",
    "fit_gam",
    "load_frame",
    "read_frame",
    "run_config",
    "run_pipeline",
    "select_order",
    "set_max_threads",
    "simulate",
    "summarize",
    "tprs_basis",
    "vif",
    "write_frame",
]


def summarize(frame):
    """Per-column summary statistics as a list of dicts."""
    return _json.loads(_core.summarize(frame))


def fit_gam(frame, candidates, stepwise=True, basis_dim=7):
    """Penalized thin-plate GAM; stepwise AIC selection unless stepwise=False."""
    return _json.loads(_core.fit_gam(frame, list(candidates), stepwise, basis_dim))


def fit_arma(series, p, q, gap_mode="kalman"):
    """Exact maximum-likelihood ARMA(p, q). None or NaN entries are gaps."""
    return _json.loads(_core.fit_arma(_gaps(series), p, q, gap_mode))


def select_order(series, p_max=5, q_max=5, gap_mode="kalman"):
    """AIC order selection over the (p, q) grid."""
    return _json.loads(_core.select_order(_gaps(series), p_max, q_max, gap_mode))


def run_pipeline(frame, candidates, importance=True, p_max=5, q_max=5):
    """Stepwise GAM, ARMA on its residuals and variable importance; returns the report dict."""
    return _json.loads(_core.run_pipeline(frame, list(candidates), importance, p_max, q_max))


def run_config(config, output=None):
    """Runs the pipeline described by a configuration file and writes its artifacts."""
    return _json.loads(_core.run_config(str(config), None if output is None else str(output)))


def _gaps(series):
    out = []
    for v in series:
        if v is None or v != v:
            out.append(None)
        else:
            out.append(float(v))
    return out
