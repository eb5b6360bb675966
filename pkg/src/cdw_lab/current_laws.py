"""Current-field laws for sliding transport and least-squares fits to them.

``current_ss`` is the soliton tunnelling law

    I = c_tilde cosh(sqrt(2E / (E_T c_V)) - sqrt(E_T c_V / E)) exp(-E_T c_V / E)

and ``current_zener`` the older Zener-type law

    I = G_p (E - E_T) exp(-E_T / E)  for E > E_T, else 0.

In the soliton law E_T and c_V only enter through their product, so a fit can
pin down one of them at most; by default the threshold is held at its
supplied value and (c_tilde, c_V) are fitted.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, replace

import numpy as np
from scipy.optimize import minimize

from .errors import InvalidParameterError, RankDeficiencyWarning

LAWS = ("ss", "zener")
SCALE_PARAM = {"ss": "c_tilde", "zener": "g_p"}
DEFAULT_FREE = {"ss": ("c_tilde", "c_v"), "zener": ("g_p", "e_t")}
PARAM_NAMES = ("e_t", "c_v", "c_tilde", "g_p")


@dataclass(frozen=True)
class CurrentLawParams:
    e_t: float = 1.0
    c_v: float = 1.0
    c_tilde: float = 1.0
    g_p: float = 1.0

    def __post_init__(self):
        for name in PARAM_NAMES:
            v = getattr(self, name)
            if not (np.isfinite(v) and v > 0):
                raise InvalidParameterError(f"{name} must be positive, got {v}")


def current_ss(e, p: CurrentLawParams):
    e = np.asarray(e, dtype=float)
    if np.any(~(e > 0)):
        raise InvalidParameterError("the soliton law is defined for e > 0 only")
    a = p.e_t * p.c_v
    u = np.sqrt(2.0 * e / a) - np.sqrt(a / e)
    # cosh(u) exp(-a/e) combined in log space so small fields underflow cleanly
    log_cosh = np.abs(u) + np.log1p(np.exp(-2.0 * np.abs(u))) - np.log(2.0)
    return p.c_tilde * np.exp(log_cosh - a / e)


def current_zener(e, p: CurrentLawParams):
    e = np.asarray(e, dtype=float)
    if np.any(e < 0):
        raise InvalidParameterError("the Zener law needs e >= 0")
    out = np.zeros_like(e)
    above = e > p.e_t
    ea = e[above]
    out[above] = p.g_p * (ea - p.e_t) * np.exp(-p.e_t / ea)
    return out


LAW_FUNCS = {"ss": current_ss, "zener": current_zener}


@dataclass
class FitResult:
    law: str
    params: CurrentLawParams
    free: tuple
    residual: float
    converged: bool
    evaluations: int
    loss: str = "linear"

    def predict(self, e):
        return LAW_FUNCS[self.law](e, self.params)


def _best_scale(i, shape, loss):
    """Closed-form least-squares scale for a fixed shape."""
    if loss == "linear":
        den = np.dot(shape, shape)
        return np.dot(i, shape) / den if den > 0 else np.nan
    ok = shape > 0
    return np.exp(np.mean(np.log(i[ok]) - np.log(shape[ok]))) if ok.any() else np.nan


def _rms(i, model, loss):
    if loss == "linear":
        return float(np.sqrt(np.mean((i - model) ** 2)))
    with np.errstate(divide="ignore"):
        return float(np.sqrt(np.mean((np.log(i) - np.log(model)) ** 2)))


def fit_current_law(data, law="ss", init: CurrentLawParams | None = None, free=None,
                    loss="linear", max_evals=20_000) -> FitResult:
    """Least-squares fit of one law to (e, i) samples.

    Shape parameters are searched with Nelder-Mead in log space; the linear
    scale (c_tilde or g_p), when free, is solved in closed form at each step.
    ``loss="log"`` fits log currents instead, for data spanning decades.
    The residual is the root-mean-square error in the chosen loss.
    """
    if law not in LAWS:
        raise InvalidParameterError(f"law must be one of {LAWS}, got {law!r}")
    if loss not in ("linear", "log"):
        raise InvalidParameterError(f"loss must be 'linear' or 'log', got {loss!r}")
    arr = np.asarray(data, dtype=float).reshape(-1, 2)
    e, i = arr[:, 0], arr[:, 1]
    if not np.all(np.isfinite(arr)) or np.any(e <= 0):
        raise InvalidParameterError("data must be finite with e > 0")
    if loss == "log" and np.any(i <= 0):
        raise InvalidParameterError("log loss needs positive currents")
    free = tuple(DEFAULT_FREE[law] if free is None else free)
    for name in free:
        if name not in PARAM_NAMES:
            raise InvalidParameterError(f"unknown parameter {name!r}")
    init = init or CurrentLawParams()

    n_e = np.unique(e).size
    if n_e < max(4, len(free)) or e.max() / e.min() < 10.0:
        warnings.warn(f"{n_e} distinct fields spanning {e.max() / e.min():.3g}x: parameters are poorly "
                      "determined (need >= 4 points over at least a decade)", RankDeficiencyWarning,
                      stacklevel=2)
    if law == "ss" and {"e_t", "c_v"} <= set(free):
        warnings.warn("e_t and c_v enter the soliton law only as a product", RankDeficiencyWarning,
                      stacklevel=2)

    fn = LAW_FUNCS[law]
    scale_name = SCALE_PARAM[law]
    scale_free = scale_name in free
    shape_names = [n for n in free if n != scale_name]

    def build(logs):
        kw = {n: float(np.exp(v)) for n, v in zip(shape_names, logs)}
        p = replace(init, **{scale_name: 1.0} if scale_free else {}, **kw)
        shape = fn(e, p)
        s = _best_scale(i, shape, loss) if scale_free else getattr(init, scale_name)
        return p, shape, s

    def objective(logs):
        if not np.all(np.abs(logs) < 700):
            return np.inf
        _, shape, s = build(logs)
        if not np.isfinite(s) or s <= 0:
            return np.inf
        with np.errstate(all="ignore"):
            r = _rms(i, s * shape, loss)
        return r if np.isfinite(r) else np.inf

    x0 = np.log([getattr(init, n) for n in shape_names])
    evals = 0
    converged = True
    if shape_names:
        # restart once from the first optimum so the simplex is rebuilt at the solution
        for _ in range(2):
            res = minimize(objective, x0, method="Nelder-Mead",
                           options={"maxfev": max_evals, "maxiter": max_evals, "xatol": 1e-12,
                                    "fatol": 1e-15 * float(np.abs(i).max()), "adaptive": True})
            evals += int(res.nfev)
            x0 = res.x
        converged = bool(res.success)
    p, shape, s = build(x0)
    if not np.isfinite(s) or s <= 0:
        raise InvalidParameterError("no positive scale fits the data")
    p = replace(p, **{scale_name: float(s)})
    return FitResult(law, p, free, _rms(i, fn(e, p), loss), converged, evals, loss)
