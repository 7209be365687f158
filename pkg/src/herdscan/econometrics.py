"""Least squares with significance testing, the two dispersion regressions,
and CAPM beta statistics.

The herding detector regresses the cross-sectional absolute deviation on
the absolute market return and its square:

    basic:  csad_t = b0 + b1*|rm_t| + b2*rm_t^2 + e_t
    split:  csad_t = g0 + g1*Dup*|rm_t| + g2*Dup*rm_t^2
                        + g3*Ddn*|rm_t| + g4*Ddn*rm_t^2 + z_t

Herding is a significantly *negative* coefficient on a squared term:
dispersion shrinking during large market moves. Significance is graded
at the 1% / 5% / 10% two-sided levels; the verdict additionally requires
the negative sign. In the split model the up-regime squared coefficient
is reported as ``gamma2`` and the down-regime squared coefficient as
``gamma3``, matching the usual reporting convention for the two regimes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Mapping

import numpy as np
from scipy import linalg as sla
from scipy import stats as sstats

from .errors import (
    DegenerateRegressor,
    EmptyInput,
    ModelMismatch,
    OneSidedSample,
    RankDeficient,
    TooFewObservations,
    ZeroVarianceProxy,
)
from .returns import CsadSeries, up_down_masks

#: Residual variance below this marks a fit as an exact (degenerate) fit.
EXACT_FIT_VARIANCE = 1e-20


class Model(Enum):
    OLS = "ols"
    CSAD_BASIC = "csad_basic"
    CSAD_UPDOWN = "csad_updown"
    CAPM_BETA = "capm_beta"


class Significance(Enum):
    AT_1PCT = "1%"
    AT_5PCT = "5%"
    AT_10PCT = "10%"
    NOT_SIGNIFICANT = "ns"


def grade_significance(p_value: float) -> Significance:
    if p_value < 0.01:
        return Significance.AT_1PCT
    if p_value < 0.05:
        return Significance.AT_5PCT
    if p_value < 0.10:
        return Significance.AT_10PCT
    return Significance.NOT_SIGNIFICANT


@dataclass(frozen=True)
class RegressionFit:
    """OLS result with classical (or HAC) standard errors."""

    coefficients: np.ndarray
    std_errors: np.ndarray
    t_stats: np.ndarray
    p_values: np.ndarray
    n_obs: int
    dof: int
    residual_variance: float
    model: Model

    @property
    def degenerate_exact(self) -> bool:
        """True for numerically exact fits, where t statistics saturate."""
        return self.residual_variance < EXACT_FIT_VARIANCE


@dataclass(frozen=True)
class HerdingVerdict:
    """Signs and significance of the squared-term coefficients.

    ``gamma2``/``gamma3`` (and their t statistics) are None when the split
    regression was not available; both regime flags are then false.
    """

    beta2: float
    beta2_significance: Significance
    gamma2: float | None
    gamma2_significance: Significance
    gamma3: float | None
    gamma3_significance: Significance
    herding_overall: bool
    herding_up: bool
    herding_down: bool
    herding_any: bool
    t_beta2: float = float("nan")
    t_gamma2: float | None = None
    t_gamma3: float | None = None
    degenerate_exact: bool = False


@dataclass(frozen=True)
class BetaReport:
    """Per-asset betas against one proxy plus distance-from-unity stats."""

    betas: Mapping[str, float]
    mae: float
    rmse: float
    proxy: str


def ols(design: np.ndarray, response: np.ndarray, *,
        hac: bool = False, model: Model = Model.OLS) -> RegressionFit:
    """Least squares via pivoted QR with rank checking.

    Classical homoskedastic standard errors by default; ``hac=True``
    switches to Newey-West with the usual floor(4*(n/100)^(2/9)) lag.
    Two-sided p-values come from the Student-t with n-k degrees of freedom.
    """
    X = np.asarray(design, dtype=np.float64)
    y = np.asarray(response, dtype=np.float64)
    if X.ndim != 2 or y.ndim != 1 or X.shape[0] != y.size:
        raise ValueError("design must be [n, k] and response [n]")
    n, k = X.shape
    if n <= k:
        raise TooFewObservations(f"need n > k, got n={n}, k={k}")

    q_mat, r_mat, piv = sla.qr(X, mode="economic", pivoting=True)
    diag = np.abs(np.diag(r_mat))
    tol = (diag[0] if diag[0] > 0 else 1.0) * max(n, k) * np.finfo(np.float64).eps
    bad = np.nonzero(diag <= tol)[0]
    if diag[0] == 0 or bad.size:
        raise RankDeficient(int(piv[bad[0]] if bad.size else piv[0]))

    coef_pivoted = sla.solve_triangular(r_mat, q_mat.T @ y)
    coef = np.empty(k)
    coef[piv] = coef_pivoted

    residuals = y - X @ coef
    dof = n - k
    rss = float(residuals @ residuals)
    s2 = rss / dof

    r_inv = sla.solve_triangular(r_mat, np.eye(k))
    xtx_inv_pivoted = r_inv @ r_inv.T
    xtx_inv = np.empty_like(xtx_inv_pivoted)
    xtx_inv[np.ix_(piv, piv)] = xtx_inv_pivoted

    if hac:
        cov = xtx_inv @ _newey_west_meat(X, residuals) @ xtx_inv
    else:
        cov = s2 * xtx_inv
    se = np.sqrt(np.maximum(np.diag(cov), 0.0))

    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(se > 0, coef / se,
                     np.where(coef == 0, 0.0, np.sign(coef) * np.inf))
    p = np.where(np.isinf(t), 0.0, 2.0 * sstats.t.sf(np.abs(t), dof))

    return RegressionFit(coefficients=coef, std_errors=se, t_stats=t,
                         p_values=p, n_obs=n, dof=dof,
                         residual_variance=s2, model=model)


def newey_west_lag(n_obs: int) -> int:
    return int(math.floor(4.0 * (n_obs / 100.0) ** (2.0 / 9.0)))


def _newey_west_meat(X: np.ndarray, residuals: np.ndarray) -> np.ndarray:
    """Bartlett-weighted long-run covariance of the score, sum form."""
    scores = residuals[:, None] * X
    meat = scores.T @ scores
    lag = newey_west_lag(X.shape[0])
    for j in range(1, lag + 1):
        gamma = scores[j:].T @ scores[:-j]
        meat += (1.0 - j / (lag + 1.0)) * (gamma + gamma.T)
    return meat


def basic_design(cs: CsadSeries) -> np.ndarray:
    rm = cs.market_return
    return np.column_stack([np.ones(rm.size), np.abs(rm), rm ** 2])


def updown_design(cs: CsadSeries) -> np.ndarray:
    rm = cs.market_return
    up, down = up_down_masks(cs)
    return np.column_stack([np.ones(rm.size),
                            up * np.abs(rm), up * rm ** 2,
                            down * np.abs(rm), down * rm ** 2])


def fit_csad_basic(cs: CsadSeries, *, min_obs: int = 10,
                   hac: bool = False) -> RegressionFit:
    """Fit the basic dispersion regression on [1, |rm|, rm^2]."""
    if len(cs) < min_obs:
        raise TooFewObservations(f"{len(cs)} observations, need {min_obs}")
    if np.ptp(cs.market_return) == 0:
        raise DegenerateRegressor("market return is constant")
    return ols(basic_design(cs), cs.csad, hac=hac, model=Model.CSAD_BASIC)


def fit_csad_updown(cs: CsadSeries, *, min_obs: int = 10, min_regime: int = 5,
                    hac: bool = False) -> RegressionFit:
    """Fit the regime-split dispersion regression with up/down dummies."""
    if len(cs) < min_obs:
        raise TooFewObservations(f"{len(cs)} observations, need {min_obs}")
    up, down = up_down_masks(cs)
    n_up, n_down = int(up.sum()), int(down.sum())
    if n_up < min_regime or n_down < min_regime:
        raise OneSidedSample(
            f"regime sizes up={n_up}, down={n_down}; need {min_regime} each")
    return ols(updown_design(cs), cs.csad, hac=hac, model=Model.CSAD_UPDOWN)


def verdict(fit4: RegressionFit,
            fit5: RegressionFit | None = None) -> HerdingVerdict:
    """Grade the squared-term coefficients into a herding verdict.

    A regime is herded only when its coefficient is negative *and*
    significant at the 10% level or better. Without a split fit the two
    regime flags are false.
    """
    if fit4.model is not Model.CSAD_BASIC:
        raise ModelMismatch(f"expected a basic csad fit, got {fit4.model}")
    if fit5 is not None and fit5.model is not Model.CSAD_UPDOWN:
        raise ModelMismatch(f"expected an up/down csad fit, got {fit5.model}")

    beta2 = float(fit4.coefficients[2])
    sig4 = grade_significance(float(fit4.p_values[2]))
    overall = beta2 < 0 and sig4 is not Significance.NOT_SIGNIFICANT

    gamma2 = gamma3 = t_gamma2 = t_gamma3 = None
    sig_up = sig_down = Significance.NOT_SIGNIFICANT
    up = down = False
    degenerate = fit4.degenerate_exact
    if fit5 is not None:
        gamma2 = float(fit5.coefficients[2])   # up-regime squared term
        gamma3 = float(fit5.coefficients[4])   # down-regime squared term
        sig_up = grade_significance(float(fit5.p_values[2]))
        sig_down = grade_significance(float(fit5.p_values[4]))
        up = gamma2 < 0 and sig_up is not Significance.NOT_SIGNIFICANT
        down = gamma3 < 0 and sig_down is not Significance.NOT_SIGNIFICANT
        t_gamma2 = float(fit5.t_stats[2])
        t_gamma3 = float(fit5.t_stats[4])
        degenerate = degenerate or fit5.degenerate_exact

    return HerdingVerdict(
        beta2=beta2, beta2_significance=sig4,
        gamma2=gamma2, gamma2_significance=sig_up,
        gamma3=gamma3, gamma3_significance=sig_down,
        herding_overall=overall, herding_up=up, herding_down=down,
        herding_any=overall or up or down,
        t_beta2=float(fit4.t_stats[2]),
        t_gamma2=t_gamma2, t_gamma3=t_gamma3,
        degenerate_exact=degenerate,
    )


def capm_beta(asset: np.ndarray, proxy: np.ndarray, *,
              min_obs: int = 10) -> float:
    """Slope of asset returns on proxy returns: cov(asset, proxy)/var(proxy)."""
    a = np.asarray(asset, dtype=np.float64)
    p = np.asarray(proxy, dtype=np.float64)
    if a.shape != p.shape or a.ndim != 1:
        raise ValueError("asset and proxy must be equal-length vectors")
    if a.size < min_obs:
        raise TooFewObservations(f"{a.size} observations, need {min_obs}")
    p_dev = p - p.mean()
    var = float(p_dev @ p_dev)
    if var < 1e-30:
        raise ZeroVarianceProxy("proxy returns have zero variance")
    return float((a - a.mean()) @ p_dev / var)


def beta_distance_stats(betas: Mapping[str, float]) -> tuple[float, float]:
    """Mean absolute and root-mean-square distance of betas from unity."""
    if not betas:
        raise EmptyInput("no betas")
    dev = np.fromiter(betas.values(), dtype=np.float64) - 1.0
    return float(np.abs(dev).mean()), float(np.sqrt((dev ** 2).mean()))


def build_beta_report(betas: Mapping[str, float], proxy: str) -> BetaReport:
    mae, rmse = beta_distance_stats(betas)
    return BetaReport(betas=dict(sorted(betas.items())), mae=mae,
                      rmse=rmse, proxy=proxy)
