"""
Closed-form connectivity results for ALOHA Poisson networks, a numerical
oracle for nu(beta), and the time-constant regression used on delay samples.

All functions are pure. Divergent quantities are returned as ``math.inf``.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import pandas as pd
from scipy import integrate, stats

from aloha_connectivity.exceptions import InsufficientDataError

LOGGER = logging.getLogger(__name__)

# continuum percolation threshold of the unit-density disc graph, lambda * eta^2
PERCOLATION_CONSTANT = 1.435

MIN_SAMPLES_PER_DISTANCE = 20
MAX_FIT_CENSORED_FRACTION = 0.10


def _check_p(p):
    if not 0 < p < 1:
        raise ValueError(f"p must lie in (0, 1), got {p}")


def _check_beta(beta):
    if not beta > 0:
        raise ValueError(f"beta must be greater than 0, got {beta}")


def expected_out_degree(lam: float, p: float, beta: float, eta: float) -> float:
    """
    Mean number of receivers reached by a transmitter,
    ((1 - p) / p) beta^-2 (1 - exp(-lam p pi beta^2 eta^2)).

    eta = inf gives the interference-limited value ((1 - p) / p) beta^-2 and
    beta = 0 the noise-limited value lam (1 - p) pi eta^2.
    """
    _check_p(p)
    if beta < 0:
        raise ValueError(f"beta must be at least 0, got {beta}")
    if beta == 0:
        return lam * (1 - p) * math.pi * eta ** 2
    if math.isinf(eta):
        return (1 - p) / (p * beta ** 2)
    return (1 - p) * lam * math.pi * eta ** 2 * _saturation(lam * p * math.pi * beta ** 2 * eta ** 2)


def expected_in_degree(lam: float, p: float, beta: float, eta: float) -> float:
    """Mean number of transmitters reaching a receiver, beta^-2 (1 - exp(-pi beta^2 lam p eta^2))."""
    _check_p(p)
    if beta < 0:
        raise ValueError(f"beta must be at least 0, got {beta}")
    if beta == 0:
        return lam * p * math.pi * eta ** 2
    if math.isinf(eta):
        return beta ** -2
    return p * lam * math.pi * eta ** 2 * _saturation(lam * p * math.pi * beta ** 2 * eta ** 2)


def _saturation(x):
    # (1 - exp(-x)) / x, stable near 0
    return -math.expm1(-x) / x if x > 0 else 1.0


def isolation_probability_lb(lam: float, p: float, beta: float, eta: float) -> float:
    """Jensen lower bound exp(-E[N_t]) on P(a transmitter reaches nobody)."""
    return math.exp(-expected_out_degree(lam, p, beta, eta))


def laplace_out_degree_lb(s: float, lam: float, p: float, beta: float, eta: float) -> float:
    """Lower bound exp(-(1 - e^-s) E[N_t]) on the Laplace transform E[exp(-s N_t)]."""
    if s < 0:
        raise ValueError(f"s must be at least 0, got {s}")
    return math.exp(-(-math.expm1(-s)) * expected_out_degree(lam, p, beta, eta))


def nn_distance_cdf(r, lam: float):
    """Rayleigh law of the nearest-neighbour distance, 1 - exp(-lam pi r^2)."""
    return -np.expm1(-lam * math.pi * np.square(r))


def void_probability(lam: float, eta: float) -> float:
    """P(B(o, eta) is empty): the mass of nodes that can never connect."""
    return math.exp(-lam * math.pi * eta ** 2)


def nu_lens(beta: float) -> float:
    """Lens expression of nu(beta), valid for 0 < beta <= 2."""
    _check_beta(beta)
    if beta > 2:
        raise ValueError(f"The lens expression needs beta <= 2, got {beta}")
    lens = (
        beta ** 2 * math.acos(beta / 2)
        + math.acos(1 - beta ** 2 / 2)
        - beta / 2 * math.sqrt(4 - beta ** 2)
    )
    return beta ** 2 - lens / math.pi


def nu(beta: float) -> float:
    """
    Area of B(z, beta ||z||) outside B(o, ||z||), in units of pi ||z||^2.

    beta^2 - 1 once the guard disk swallows the nearest-neighbour disk
    (beta >= 2), the lens expression below that.
    """
    _check_beta(beta)
    if beta >= 2:
        return beta ** 2 - 1
    return nu_lens(beta)


def nu_numeric(beta: float) -> float:
    """
    nu(beta) by adaptive 2-D integration of area(B((1, 0), beta) minus B(o, 1)) / pi.

    The upper half plane is integrated over x with y running from the unit
    circle (or 0) up to the guard circle; the x range is split where the
    boundary curves have kinks.
    """
    _check_beta(beta)
    left, right = 1 - beta, 1 + beta
    kinks = {left, right, -1.0, 1.0, 1 - beta ** 2 / 2}
    cuts = sorted(x for x in kinks if left <= x <= right)
    tol = 1e-10 * min(1.0, beta ** 2)

    def unit(x):
        return math.sqrt(max(0.0, 1 - x * x))

    def guard(x):
        return max(math.sqrt(max(0.0, beta ** 2 - (x - 1) ** 2)), unit(x))

    area = 0.0
    for lo, hi in zip(cuts[:-1], cuts[1:]):
        if hi > lo:
            part, _ = integrate.dblquad(lambda y, x: 1.0, lo, hi, unit, guard, epsabs=tol, epsrel=1e-11)
            area += part
    return 2 * area / math.pi


def aloha_cutoff(beta: float) -> float:
    """ALOHA probability at and above which E[T_N] is infinite, 1 / (1 + nu(beta))."""
    return 1 / (1 + nu(beta))


def expected_nn_time(lam: Optional[float], p: float, beta: float) -> float:
    """
    Mean slots to connect to the nearest neighbour (interference limited),
    (p (1 - p) - p^2 nu(beta))^-1 for p < 1 / (1 + nu(beta)), inf otherwise.

    The result does not depend on lam, the argument is kept for symmetry.
    """
    _check_p(p)
    if p >= aloha_cutoff(beta):
        return math.inf
    return 1 / (p * (1 - p) - p ** 2 * nu(beta))


def nn_time_optimum(beta: float):
    """(p*, E[T_N](p*)) = (0.5 / (1 + nu), 4 (1 + nu))."""
    scale = 1 + nu(beta)
    return 0.5 / scale, 4 * scale


def opportunistic_time_lb(p: float, beta: float) -> float:
    """
    Lower bound on the mean opportunistic connection time (beta > 1).

    1 < beta < 2: (beta - 1)^2 (2 + p + (beta - 1)^2) / (p (1 - p^2));
    beta >= 2: (p - p^2 (beta - 1)^2)^-1 if p < (beta - 1)^-2, inf otherwise.
    """
    _check_p(p)
    if not beta > 1:
        raise ValueError(f"The opportunistic bound needs beta > 1, got {beta}")
    gap = (beta - 1) ** 2
    if beta < 2:
        return gap * (2 + p + gap) / (p * (1 - p ** 2))
    if p >= 1 / gap:
        return math.inf
    return 1 / (p - p ** 2 * gap)


def percolation_threshold(lam: float) -> float:
    """Link range above which the eta-disc graph percolates, sqrt(1.435 / lam)."""
    return math.sqrt(PERCOLATION_CONSTANT / lam)


def per_hop_time_ub(lam: float, p: float, beta: float, eta: float) -> float:
    """Upper bound exp((p / (1 - p)) lam pi eta^2 nu(beta)) on the conditional mean time of one eta-hop."""
    _check_p(p)
    exponent = p / (1 - p) * lam * math.pi * eta ** 2 * nu(beta)
    return math.exp(exponent) if exponent < 700 else math.inf


def time_constant_lb(eta: float) -> float:
    """Every hop is shorter than eta, so mu >= 1 / eta."""
    return 1 / eta


def closed_forms(lam: float, p: float, beta: float, eta: float) -> dict:
    """Every closed form for one parameter point (the `formulas` payload)."""
    forms = {
        "lambda": lam,
        "p": p,
        "beta": beta,
        "eta": eta,
        "expected_out_degree": expected_out_degree(lam, p, beta, eta),
        "expected_in_degree": expected_in_degree(lam, p, beta, eta),
        "isolation_probability_lb": isolation_probability_lb(lam, p, beta, eta),
        "nu": nu(beta),
        "aloha_cutoff": aloha_cutoff(beta),
        "expected_nn_time": expected_nn_time(lam, p, beta),
        "nn_time_optimum_p": nn_time_optimum(beta)[0],
        "nn_time_optimum": nn_time_optimum(beta)[1],
        "opportunistic_time_lb": opportunistic_time_lb(p, beta) if beta > 1 else None,
        "percolation_threshold": percolation_threshold(lam),
    }
    if math.isfinite(eta):
        forms.update({
            "void_probability": void_probability(lam, eta),
            "percolates": eta > percolation_threshold(lam),
            "per_hop_time_ub": per_hop_time_ub(lam, p, beta, eta),
            "time_constant_lb": time_constant_lb(eta),
        })
    return forms


@dataclass(frozen=True)
class TimeConstantFit:
    """Least-squares line E[T(o, x)] ~ mu_hat x + c_hat over per-distance means."""

    mu_hat: float
    c_hat: float
    r_squared: float
    mu_stderr: float
    c_stderr: float
    table: pd.DataFrame = field(repr=False, compare=False)


def delay_table(records) -> pd.DataFrame:
    """Per-distance delay and hop statistics of DelayRecords (or of their rows as a DataFrame)."""
    if isinstance(records, pd.DataFrame):
        frame = records
    else:
        frame = pd.DataFrame([r.as_row() for r in records])
    if frame.empty:
        raise InsufficientDataError("No delay records to summarize")
    return summarize_delays(frame, ["distance"])


def summarize_delays(frame: pd.DataFrame, keys) -> pd.DataFrame:
    """Group raw delay rows by keys; means over uncensored rows, censoring over all rows."""
    frame = frame.copy()
    frame["censored"] = frame["censored"].astype(bool)
    for name in ("delay", "hops"):
        frame[name] = pd.to_numeric(frame[name]).astype(float)
    frame["hop_length"] = frame["node_distance"] / frame["hops"].where(frame["hops"] > 0)

    def _se(values):
        values = values.dropna()
        return values.std(ddof=1) / math.sqrt(len(values)) if len(values) > 1 else math.nan

    rows = []
    for key, group in frame.groupby(keys, sort=True):
        done = group[~group["censored"]]
        rows.append({
            **dict(zip(keys, key if isinstance(key, tuple) else (key,))),
            "mean_delay": done["delay"].mean(),
            "se_delay": _se(done["delay"]),
            "mean_hops": done["hops"].mean(),
            "se_hops": _se(done["hops"]),
            "n": len(group),
            "n_uncensored": len(done),
            "censored_fraction": group["censored"].mean(),
            "mean_hop_length": done["hop_length"].mean(),
            "se_hop_length": _se(done["hop_length"]),
        })
    return pd.DataFrame(rows)


def fit_time_constant(records, min_distance: Optional[float] = None,
                      eta: Optional[float] = None) -> TimeConstantFit:
    """
    Unweighted least squares of mean delay against distance.

    Parameters
    ----------
    records: iterable of DelayRecord, or a DataFrame of their rows
    min_distance: float, optional
        Smallest distance used, defaults to 5 * eta (MAC contention dominates
        below), or 0 when eta is not given either
    """
    if min_distance is None:
        min_distance = 5 * eta if eta is not None and math.isfinite(eta) else 0.0
    table = delay_table(records)
    table = table[table["distance"] >= min_distance].reset_index(drop=True)

    heavy = table[table["censored_fraction"] > MAX_FIT_CENSORED_FRACTION]
    if not heavy.empty:
        worst = heavy.iloc[0]
        raise InsufficientDataError(
            f"Refusing fit: {worst['censored_fraction']:.1%} censored at distance {worst['distance']:g} "
            f"(limit {MAX_FIT_CENSORED_FRACTION:.0%})"
        )
    thin = table[table["n_uncensored"] < MIN_SAMPLES_PER_DISTANCE]
    if not thin.empty:
        raise InsufficientDataError(
            f"Distance {thin.iloc[0]['distance']:g} has {int(thin.iloc[0]['n_uncensored'])} uncensored samples, "
            f"need {MIN_SAMPLES_PER_DISTANCE}"
        )
    if len(table) < 3:
        raise InsufficientDataError(f"Need at least 3 distances >= {min_distance:g}, got {len(table)}")

    line = stats.linregress(table["distance"].to_numpy(float), table["mean_delay"].to_numpy(float))
    r_squared = min(1.0, float(line.rvalue) ** 2)
    LOGGER.debug(f"Time-constant fit: mu={line.slope:.4f} (se {line.stderr:.4f}), C={line.intercept:.3f}, R2={r_squared:.4f}")
    return TimeConstantFit(
        mu_hat=float(line.slope),
        c_hat=float(line.intercept),
        r_squared=r_squared,
        mu_stderr=float(line.stderr),
        c_stderr=float(line.intercept_stderr),
        table=table,
    )
