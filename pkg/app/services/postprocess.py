"""
A module for postprocess in the app.services package.
"""

import logging
from collections.abc import Mapping, Sequence
from typing import NamedTuple

import numpy as np
import pandas as pd
from scipy import linalg, stats

from app.exceptions.exceptions import (
    BracketingError,
    ConvergenceError,
    EmptySampleError,
    InvalidMixtureError,
    NumericalDomainError,
)
from app.schemas.arrays import FloatArray
from app.schemas.chain import ChainState
from app.schemas.interval import Interval
from app.schemas.mixture import GumbelMixture
from app.schemas.model import CCPMatrix, DDCModel, EmaxConfig, EmaxSolution
from app.schemas.report import (
    CCPCredibleSet,
    CredibleSetSummary,
    FunctionalSummary,
    GewekeResult,
    PosteriorReport,
)
from app.services.counterfactual import DrawFunctional, draw_parameters
from app.services.diagnostics import MIN_GEWEKE_LENGTH, geweke_diagnostic
from app.services.dp_solver import ccps, emax_apply, solve_emax
from app.services.mixture import mixture_mean, scale_factor
from app.services.numerics import chi_square_quantile, hpd_interval

logger: logging.Logger = logging.getLogger(__name__)

ITER_COLUMN: str = "iter"
M_COLUMN: str = "m"
LOG_POST_COLUMN: str = "log_post"
LOG_LIK_COLUMN: str = "log_lik"
SCALE_COLUMN: str = "s"
CHI_COLUMN: str = "chi"
CHAIN_COLUMN: str = "chain"
THETA_RENORM_PREFIX: str = "theta_renorm_"
MIX_MEAN_PREFIX: str = "mix_mean_"
CCP_PREFIX: str = "ccp_"
FUNCTIONAL_PREFIX: str = "functional_"
PARAM_PREFIX: str = "param_"
Q_PREFIX: str = "q_"
RIDGE_FACTOR: float = 1e-10
_RIDGE_ATTEMPTS: int = 12
DENSITY_COLUMNS: list[str] = ["quantity", "x", "density"]

DrawRecord = dict[str, float | int | str]


class RenormalizedDraw(NamedTuple):
    """Utility parameters on the logistic reporting scale."""

    theta: FloatArray
    scale: float
    mean: FloatArray


class SummaryTables(NamedTuple):
    """Report and plot-ready tables of a store."""

    report: PosteriorReport
    traces: pd.DataFrame
    m_pmf: pd.DataFrame
    densities: pd.DataFrame
    scatter: pd.DataFrame


def renormalize_draw(
    model: DDCModel, theta: FloatArray, mix: GumbelMixture
) -> RenormalizedDraw:
    """
    Map a draw to the normalization where shocks have mean zero and the
     logistic upper truncated mean: intercepts absorb the mixture mean and
     every coefficient is multiplied by the scale factor s

    :param model: Model carrying the intercept positions and signs
    :type model: DDCModel
    :param theta: Full utility parameter vector of the draw
    :type theta: FloatArray
    :param mix: Mixture of the draw
    :type mix: GumbelMixture
    :return: Renormalized parameters, s and the mixture mean
    :rtype: RenormalizedDraw
    """
    mean: FloatArray = mixture_mean(mix)
    shifted: FloatArray = np.array(theta, dtype=np.float64)
    for j, (index, sign) in enumerate(
        zip(model.intercept_indices, model.intercept_signs)
    ):
        shifted[index] += sign * mean[j]
    s: float = scale_factor(mix)
    return RenormalizedDraw(s * shifted, s, mean)


def ccp_vector(probabilities: FloatArray, occupied: FloatArray) -> FloatArray:
    """
    Stack p(d|x) for d = 1..J over occupied states, state by state

    :param probabilities: CCPs of shape (K, J+1)
    :type probabilities: FloatArray
    :param occupied: Boolean mask of shape (K,)
    :type occupied: FloatArray
    :return: Vector of length J times the occupied state count
    :rtype: FloatArray
    """
    mask = np.asarray(occupied, dtype=bool)
    return np.asarray(probabilities[mask, 1:]).ravel()


def draw_record(
    model: DDCModel,
    free_indices: Sequence[int],
    occupied: FloatArray,
    state: ChainState,
    iteration: int,
    functionals: Mapping[str, DrawFunctional],
    config: EmaxConfig,
) -> DrawRecord:
    """
    Row of the draw store: the position plus every derived quantity.

    The Emax of the state is re-verified against the tolerance, and solved
    again from it when the check fails. Quantities that cannot be computed
    at an extreme draw are stored as NaN.

    :param model: Model holding the fixed utility parameters
    :type model: DDCModel
    :param free_indices: Sampled theta positions
    :type free_indices: Sequence[int]
    :param occupied: Boolean mask of states with data
    :type occupied: FloatArray
    :param state: Chain state
    :type state: ChainState
    :param iteration: Iteration number
    :type iteration: int
    :param functionals: Functionals of the CCPs to store
    :type functionals: Mapping[str, DrawFunctional]
    :param config: Emax solver settings
    :type config: EmaxConfig
    :return: Column name to value
    :rtype: DrawRecord
    """
    chi: FloatArray = np.asarray(state.chi, dtype=np.float64)
    record: DrawRecord = {
        ITER_COLUMN: iteration,
        M_COLUMN: state.m,
        LOG_POST_COLUMN: float(
            state.log_density if state.log_density is not None else np.nan
        ),
        LOG_LIK_COLUMN: float(
            state.log_likelihood if state.log_likelihood is not None else np.nan
        ),
    }
    drawn = draw_parameters(model, free_indices, state.m, chi)
    n_theta: int = model.n_theta
    J: int = model.J
    try:
        renormalized: RenormalizedDraw = renormalize_draw(
            model, drawn.model.theta, drawn.mixture
        )
        theta_renorm: FloatArray = renormalized.theta
        s: float = renormalized.scale
    except (BracketingError, NumericalDomainError, InvalidMixtureError) as e:
        logger.warning(f"Renormalization failed at iteration {iteration}: {e}")
        theta_renorm, s = np.full(n_theta, np.nan), float("nan")
    mean: FloatArray = mixture_mean(drawn.mixture)
    for i in range(n_theta):
        record[f"{THETA_RENORM_PREFIX}{i + 1}"] = float(theta_renorm[i])
    record[SCALE_COLUMN] = s
    for j in range(J):
        record[f"{MIX_MEAN_PREFIX}{j + 1}"] = float(mean[j])
    q: FloatArray | None = _verified_emax(
        drawn.model, drawn.mixture, state.q, config
    )
    n_ccp: int = int(np.sum(occupied)) * J
    matrix: CCPMatrix | None = None
    vector: FloatArray = np.full(n_ccp, np.nan)
    if q is not None:
        matrix = ccps(drawn.model, drawn.mixture, q)
        vector = ccp_vector(matrix.probabilities, occupied)
    for c in range(n_ccp):
        record[f"{CCP_PREFIX}{c + 1}"] = float(vector[c])
    for name, functional in functionals.items():
        value: float = (
            functional(drawn.model, matrix) if matrix is not None else np.nan
        )
        record[f"{FUNCTIONAL_PREFIX}{name}"] = float(value)
    for i in range(n_theta):
        record[f"{PARAM_PREFIX}{i + 1}"] = float(drawn.model.theta[i])
    q_values: FloatArray = (
        q if q is not None else np.full(model.n_states, np.nan)
    )
    for x in range(model.n_states):
        record[f"{Q_PREFIX}{x + 1}"] = float(q_values[x])
    record[CHI_COLUMN] = " ".join(repr(float(v)) for v in chi)
    return record


def _verified_emax(
    model: DDCModel,
    mix: GumbelMixture,
    q: FloatArray | None,
    config: EmaxConfig,
) -> FloatArray | None:
    if q is not None:
        residual: float = float(np.max(np.abs(emax_apply(model, mix, q) - q)))
        if residual <= config.tol:
            return np.asarray(q)
    try:
        solution: EmaxSolution = solve_emax(model, mix, q, config)
    except (NumericalDomainError, ConvergenceError) as e:
        logger.warning(f"Emax of a stored draw failed: {e}")
        return None
    if not solution.converged:
        logger.warning(
            f"Emax of a stored draw stopped at residual {solution.residual:.3e}"
        )
        return None
    return solution.q


def ccp_credible_set(draws: FloatArray, alpha: float = 0.05) -> CCPCredibleSet:
    """
    Ellipsoidal 1 - alpha credible set of stacked CCP vectors, centered at
     their mean with the draw covariance and a chi-square threshold.

    A singular covariance receives a diagonal ridge of 1e-10 times its mean
    variance, raised tenfold until the Cholesky factorization succeeds.

    :param draws: CCP vectors, shape (n, dim)
    :type draws: FloatArray
    :param alpha: Level in (0, 1)
    :type alpha: float
    :return: The credible set
    :rtype: CCPCredibleSet
    :raises EmptySampleError: If n <= dim
    :raises NumericalDomainError: If alpha is outside (0, 1)
    """
    values: FloatArray = np.atleast_2d(np.asarray(draws, dtype=np.float64))
    n, dim = values.shape
    if not 0.0 < alpha < 1.0:
        raise NumericalDomainError(detail=f"alpha={alpha} must lie in (0, 1)")
    if n < dim + 1:
        raise EmptySampleError(
            detail=f"A credible set in dimension {dim} needs {dim + 1} draws,"
            f" got {n}"
        )
    center: FloatArray = values.mean(axis=0)
    covariance: FloatArray = np.atleast_2d(np.cov(values, rowvar=False))
    covariance = 0.5 * (covariance + covariance.T)
    ridge: float = 0.0
    trace: float = float(np.trace(covariance))
    base: float = RIDGE_FACTOR * (trace / dim if trace > 0.0 else 1.0)
    for attempt in range(_RIDGE_ATTEMPTS):
        try:
            cholesky: FloatArray = linalg.cholesky(
                covariance + ridge * np.eye(dim), lower=True
            )
            break
        except linalg.LinAlgError:
            ridge = base * 10.0**attempt
    else:
        raise NumericalDomainError(
            detail="CCP covariance stays singular after regularization"
        )
    if ridge > 0.0:
        logger.warning(f"Regularized the CCP covariance with ridge {ridge:.3e}")
    return CCPCredibleSet(
        center=center,
        covariance=covariance + ridge * np.eye(dim),
        cholesky=cholesky,
        threshold=chi_square_quantile(1.0 - alpha, dim),
        ridge=ridge,
    )


def credible_set_members(
    credible_set: CCPCredibleSet, draws: FloatArray
) -> np.ndarray:  # type: ignore[type-arg]
    """
    Membership of CCP vectors in the ellipsoid

    :param credible_set: The set
    :type credible_set: CCPCredibleSet
    :param draws: Vectors, shape (n, dim) or (dim,)
    :type draws: FloatArray
    :return: Boolean array of shape (n,); rows with NaN are outside
    :rtype: np.ndarray
    """
    values: FloatArray = np.atleast_2d(np.asarray(draws, dtype=np.float64))
    whitened: FloatArray = linalg.solve_triangular(
        credible_set.cholesky,
        (values - credible_set.center).T,
        lower=True,
        check_finite=False,
    )
    distance: FloatArray = np.sum(whitened**2, axis=0)
    return np.asarray(distance <= credible_set.threshold)


def identified_set_interval(
    draws: FloatArray, values: FloatArray, credible_set: CCPCredibleSet
) -> Interval:
    """
    Credible interval of an identified-set functional: range of the
     functional over draws whose CCPs fall in the ellipsoid

    :param draws: CCP vectors, shape (n, dim)
    :type draws: FloatArray
    :param values: Functional per draw, shape (n,)
    :type values: FloatArray
    :param credible_set: The CCP credible set
    :type credible_set: CCPCredibleSet
    :return: [min, max] over member draws
    :rtype: Interval
    :raises EmptySampleError: If no draw is a member
    """
    eta: FloatArray = np.asarray(values, dtype=np.float64).ravel()
    members: np.ndarray = credible_set_members(  # type: ignore[type-arg]
        credible_set, draws
    )
    if members.shape != eta.shape:
        raise EmptySampleError(
            detail=f"{members.size} CCP draws for {eta.size} functional values"
        )
    selected: FloatArray = eta[members & np.isfinite(eta)]
    if selected.size == 0:
        raise EmptySampleError(detail="No draw lies inside the credible set")
    return Interval(lo=float(selected.min()), hi=float(selected.max()))


def _columns(frame: pd.DataFrame, prefix: str) -> list[str]:
    return [c for c in frame.columns if c.startswith(prefix)]


def select_draws(
    frame: pd.DataFrame, burn_in: int, thin: int
) -> pd.DataFrame:
    """
    Drop the burn-in iterations and thin the remaining draws

    :param frame: Stored draws
    :type frame: pd.DataFrame
    :param burn_in: First iteration kept
    :type burn_in: int
    :param thin: Keep every thin-th draw
    :type thin: int
    :return: The selected draws
    :rtype: pd.DataFrame
    :raises EmptySampleError: If nothing is left
    """
    kept: pd.DataFrame = frame[frame[ITER_COLUMN] >= burn_in].iloc[::thin]
    if kept.empty:
        raise EmptySampleError(
            detail=f"No draws after burn-in {burn_in} in a store of"
            f" {len(frame)} draws"
        )
    return kept.reset_index(drop=True)


def summarize_values(values: FloatArray, mass: float) -> FunctionalSummary:
    """
    Posterior mean, standard deviation and HPD interval of a scalar

    :param values: Draws
    :type values: FloatArray
    :param mass: HPD mass
    :type mass: float
    :return: The summary
    :rtype: FunctionalSummary
    """
    finite: FloatArray = values[np.isfinite(values)]
    return FunctionalSummary(
        mean=float(finite.mean()),
        sd=float(finite.std(ddof=1)),
        hpd=hpd_interval(finite, mass),
    )


def density_grid(values: FloatArray, points: int) -> pd.DataFrame | None:
    """
    Gaussian kernel density estimate on an even grid spanning the draws

    :param values: Draws
    :type values: FloatArray
    :param points: Grid size
    :type points: int
    :return: Columns x and density, None for degenerate draws
    :rtype: pd.DataFrame | None
    """
    finite: FloatArray = values[np.isfinite(values)]
    if finite.size < 2 or np.ptp(finite) == 0.0:
        return None
    try:
        kde = stats.gaussian_kde(finite)
    except np.linalg.LinAlgError:
        return None
    pad: float = 3.0 * float(np.sqrt(kde.covariance[0, 0]))
    grid: FloatArray = np.linspace(
        finite.min() - pad, finite.max() + pad, points
    )
    return pd.DataFrame({"x": grid, "density": kde(grid)})


def ccp_draws(frame: pd.DataFrame) -> FloatArray:
    """
    Stacked CCP vectors of the stored draws, NaN where a draw failed

    :param frame: Stored draws
    :type frame: pd.DataFrame
    :return: Array of shape (n, dim)
    :rtype: FloatArray
    """
    return frame[_columns(frame, CCP_PREFIX)].to_numpy(dtype=np.float64)


def posterior_credible_set(
    draws: FloatArray, alpha: float
) -> CCPCredibleSet | None:
    """
    CCP credible set over the draws with finite CCPs, None when too few
     draws span it

    :param draws: Stacked CCP vectors, shape (n, dim)
    :type draws: FloatArray
    :param alpha: Level in (0, 1)
    :type alpha: float
    :return: The credible set
    :rtype: CCPCredibleSet | None
    """
    finite: FloatArray = draws[np.all(np.isfinite(draws), axis=1)]
    dim: int = draws.shape[1]
    if dim == 0 or finite.shape[0] <= dim:
        logger.warning(
            f"{finite.shape[0]} draws cannot span a credible set in"
            f" dimension {dim}"
        )
        return None
    return ccp_credible_set(finite, alpha)


def functional_summary(
    values: FloatArray,
    mass: float,
    draws: FloatArray | None = None,
    credible_set: CCPCredibleSet | None = None,
) -> FunctionalSummary:
    """
    Posterior summary of a functional, with its identified-set interval
     when a CCP credible set is given

    :param values: Functional per draw
    :type values: FloatArray
    :param mass: HPD mass
    :type mass: float
    :param draws: Stacked CCP vectors aligned with the values
    :type draws: FloatArray | None
    :param credible_set: The CCP credible set
    :type credible_set: CCPCredibleSet | None
    :return: The summary
    :rtype: FunctionalSummary
    """
    summary: FunctionalSummary = summarize_values(values, mass)
    if credible_set is None or draws is None:
        return summary
    try:
        interval: Interval = identified_set_interval(
            draws, values, credible_set
        )
    except EmptySampleError as e:
        logger.warning(f"No identified-set interval: {e}")
        return summary
    return summary.model_copy(update={"identified_set": interval})


def _geweke_by_chain(kept: pd.DataFrame) -> dict[str, GewekeResult]:
    geweke: dict[str, GewekeResult] = {}
    chains: list[tuple[object, pd.DataFrame]] = (
        list(kept.groupby(CHAIN_COLUMN, sort=True))
        if CHAIN_COLUMN in kept.columns
        else [(None, kept)]
    )
    for chain, rows in chains:
        for column in _columns(rows, MIX_MEAN_PREFIX):
            series: FloatArray = rows[column].to_numpy(dtype=np.float64)
            series = series[np.isfinite(series)]
            if series.size < MIN_GEWEKE_LENGTH:
                continue
            key: str = column if chain is None else f"{column}@chain{chain}"
            geweke[key] = geweke_diagnostic(series)
    return geweke


def summarize(
    frame: pd.DataFrame,
    burn_in: int,
    thin: int = 1,
    credible_mass: float = 0.95,
    alpha: float = 0.05,
    density_points: int = 200,
) -> SummaryTables:
    """
    Posterior report and plot-ready tables of a draw store.

    Scalars summarized are the renormalized parameters, s, the mixture mean
    and the stored functionals; functionals also get their identified-set
    interval when the CCP ellipsoid can be formed. Geweke tests run on the
    mixture mean coordinates of every chain.

    :param frame: Stored draws, optionally with a chain column
    :type frame: pd.DataFrame
    :param burn_in: First iteration kept
    :type burn_in: int
    :param thin: Extra thinning
    :type thin: int
    :param credible_mass: HPD mass
    :type credible_mass: float
    :param alpha: Level of the CCP credible set
    :type alpha: float
    :param density_points: Grid size of the density exports
    :type density_points: int
    :return: The report and tables
    :rtype: SummaryTables
    :raises EmptySampleError: If the store has no draw after burn-in
    """
    kept: pd.DataFrame = select_draws(frame, burn_in, thin)
    draws: FloatArray = ccp_draws(kept)
    credible_set: CCPCredibleSet | None = posterior_credible_set(draws, alpha)
    scalars: list[str] = (
        _columns(kept, THETA_RENORM_PREFIX)
        + [SCALE_COLUMN]
        + _columns(kept, MIX_MEAN_PREFIX)
        + _columns(kept, FUNCTIONAL_PREFIX)
    )
    functionals: dict[str, FunctionalSummary] = {}
    density_frames: list[pd.DataFrame] = []
    for column in scalars:
        values: FloatArray = kept[column].to_numpy(dtype=np.float64)
        if np.isfinite(values).sum() < 2:
            logger.warning(f"Too few finite draws of {column}")
            continue
        functionals[column] = (
            functional_summary(values, credible_mass, draws, credible_set)
            if column.startswith(FUNCTIONAL_PREFIX)
            else summarize_values(values, credible_mass)
        )
        grid: pd.DataFrame | None = density_grid(values, density_points)
        if grid is not None:
            density_frames.append(grid.assign(quantity=column))
    m_counts: pd.Series = (
        kept[M_COLUMN].value_counts(normalize=True).sort_index()
    )
    m_pmf: dict[int, float] = {int(k): float(v) for k, v in m_counts.items()}
    geweke: dict[str, GewekeResult] = _geweke_by_chain(kept)
    credible_summary: CredibleSetSummary | None = None
    if credible_set is not None:
        credible_summary = CredibleSetSummary(
            dim=credible_set.dim,
            threshold=credible_set.threshold,
            ridge=credible_set.ridge,
            members=int(credible_set_members(credible_set, draws).sum()),
            draws=int(np.all(np.isfinite(draws), axis=1).sum()),
        )
    report = PosteriorReport(
        n_draws=len(kept),
        burn_in=burn_in,
        thin=thin,
        credible_mass=credible_mass,
        functionals=functionals,
        m_pmf=m_pmf,
        credible_set=credible_summary,
        diagnostics={
            "geweke": {k: v.model_dump() for k, v in geweke.items()},
            "geweke_min_draws": MIN_GEWEKE_LENGTH,
        },
    )
    leading: list[str] = [
        c for c in (CHAIN_COLUMN, ITER_COLUMN) if c in kept.columns
    ]
    densities: pd.DataFrame = (
        pd.concat(density_frames, ignore_index=True)[DENSITY_COLUMNS]
        if density_frames
        else pd.DataFrame(columns=DENSITY_COLUMNS)
    )
    return SummaryTables(
        report=report,
        traces=kept[leading + [M_COLUMN, LOG_POST_COLUMN] + scalars].copy(),
        m_pmf=pd.DataFrame(
            {"m": list(m_pmf), "probability": list(m_pmf.values())}
        ),
        densities=densities,
        scatter=kept[leading + _columns(kept, THETA_RENORM_PREFIX)].copy(),
    )


def trace_tables(traces: pd.DataFrame) -> dict[str, pd.DataFrame]:
    """
    Split the combined trace table into one table per quantity, each
     keeping the chain and iteration columns

    :param traces: Retained draws with chain, iter and quantity columns
    :type traces: pd.DataFrame
    :return: Trace tables keyed by quantity name
    :rtype: dict[str, pd.DataFrame]
    """
    leading: list[str] = [
        c for c in (CHAIN_COLUMN, ITER_COLUMN) if c in traces.columns
    ]
    return {
        column: traces[leading + [column]].copy()
        for column in traces.columns
        if column not in leading
    }
