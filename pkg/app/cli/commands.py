"""
A module for commands in the app.cli package.
"""

import argparse
import logging
from collections.abc import Mapping, Sequence
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Any, NamedTuple

import numpy as np
import pandas as pd

from app.cli.parser import build_parser
from app.config.config import get_init_settings, get_settings
from app.config.presets import load_run_config
from app.core.decorators import log_stage
from app.core.lifecycle import command_lifespan
from app.db.draw_store import DrawStore, parse_chi
from app.exceptions.exceptions import (
    BracketingError,
    ConfigError,
    ConvergenceError,
    DataMismatchError,
    DDCError,
    DimensionMismatchError,
    EmptySampleError,
    InvalidMixtureError,
    InvalidModelError,
    NumericalDomainError,
    StoreError,
)
from app.schemas.arrays import FloatArray
from app.schemas.chain import ChainCheckpoint, ChainState
from app.schemas.mixture import GumbelMixture
from app.schemas.model import CCPMatrix, DDCModel, EmaxSolution, PanelCounts
from app.schemas.report import (
    CCPCredibleSet,
    ComparisonRow,
    CounterfactualReport,
    FunctionalEstimate,
    LogitMLEResult,
    PosteriorReport,
)
from app.schemas.run_config import (
    CustomBlock,
    DGPBlock,
    MixtureBlock,
    ModelBlock,
    RunConfig,
)
from app.services.chain import ChainRun, initial_state, run_chain
from app.services.counterfactual import (
    counterfactual_draws,
    counterfactual_model,
    default_functionals,
    expected_visits,
    logit_functionals,
)
from app.services.ddc_model import (
    build_custom_model,
    build_gilleskie_model,
    build_rust_model,
    ccps_to_counts,
    counts_from_table,
    counts_table,
    simulate_panel,
)
from app.services.dp_solver import ccps, solve_emax
from app.services.likelihood import PosteriorTarget, logit_ccps, logit_mle
from app.services.mixture import make_mixture
from app.services.postprocess import (
    CHAIN_COLUMN,
    CHI_COLUMN,
    FUNCTIONAL_PREFIX,
    ITER_COLUMN,
    M_COLUMN,
    SummaryTables,
    ccp_draws,
    functional_summary,
    posterior_credible_set,
    select_draws,
    summarize,
    trace_tables,
)
from app.utils.io_utils import (
    config_hash,
    read_csv,
    read_json,
    write_csv,
    write_json,
)

logger: logging.Logger = logging.getLogger(__name__)

EXIT_OK: int = 0
EXIT_USAGE: int = 2
EXIT_NUMERICAL: int = 3
USAGE_ERRORS: tuple[type[DDCError], ...] = (
    ConfigError,
    DataMismatchError,
    StoreError,
    EmptySampleError,
    InvalidModelError,
    InvalidMixtureError,
    DimensionMismatchError,
)
NUMERICAL_ERRORS: tuple[type[DDCError], ...] = (
    ConvergenceError,
    NumericalDomainError,
    BracketingError,
)
BASELINE_VISITS: str = "expected_visits"
BASELINE_ABSENCES: str = "expected_absences"
COUNTERFACTUAL_VISITS: str = "counterfactual_expected_visits"


class RunPaths(NamedTuple):
    """Directories of one experiment."""

    data: Path
    estimate: Path
    summary: Path
    counterfactual: Path


def run_paths(
    config: RunConfig,
    out: Path | None = None,
    data: Path | None = None,
    store: Path | None = None,
) -> RunPaths:
    """
    Directories of an experiment, rooted at <output.directory>/<name>
     unless given explicitly

    :param config: Run configuration
    :type config: RunConfig
    :param out: Root directory
    :type out: Path | None
    :param data: Data directory
    :type data: Path | None
    :param store: Chain store directory
    :type store: Path | None
    :return: The directories
    :rtype: RunPaths
    """
    init_settings = get_init_settings()
    root: Path = (
        out if out is not None else config.output.directory / config.name
    )
    return RunPaths(
        data=data if data is not None else root / init_settings.DATA_DIR,
        estimate=(
            store if store is not None else root / init_settings.ESTIMATE_DIR
        ),
        summary=root / init_settings.SUMMARY_DIR,
        counterfactual=root / init_settings.COUNTERFACTUAL_DIR,
    )


def _custom_tables(block: CustomBlock) -> tuple[FloatArray, FloatArray]:
    moves: pd.DataFrame = read_csv(block.transitions_file)
    payoffs: pd.DataFrame = read_csv(block.utilities_file)
    missing: set[str] = ({"d", "x", "y", "p"} - set(moves.columns)) | (
        {"d", "x", "u"} - set(payoffs.columns)
    )
    if missing:
        raise DataMismatchError(
            detail=f"Model tables lack the columns {sorted(missing)}"
        )
    md = moves["d"].to_numpy(dtype=np.int64)
    mx = moves["x"].to_numpy(dtype=np.int64)
    my = moves["y"].to_numpy(dtype=np.int64)
    ud = payoffs["d"].to_numpy(dtype=np.int64)
    ux = payoffs["x"].to_numpy(dtype=np.int64)
    indices = np.concatenate([md, mx, my, ud, ux])
    if indices.size == 0 or indices.min() < 0:
        raise DataMismatchError(
            detail="Model tables need non-negative state and action indices"
        )
    n_actions: int = int(max(md.max(), ud.max())) + 1
    n_states: int = int(max(mx.max(), my.max(), ux.max())) + 1
    transitions: FloatArray = np.zeros((n_actions, n_states, n_states))
    np.add.at(transitions, (md, mx, my), moves["p"].to_numpy(np.float64))
    utilities: FloatArray = np.full((n_states, n_actions), np.nan)
    utilities[ux, ud] = payoffs["u"].to_numpy(np.float64)
    if np.isnan(utilities).any():
        raise DataMismatchError(
            detail="The utility table misses some (x, d) pairs"
        )
    return transitions, utilities


def build_model(block: ModelBlock) -> DDCModel:
    """
    The dynamic model of a configuration

    :param block: Model settings
    :type block: ModelBlock
    :return: The model
    :rtype: DDCModel
    :raises ConfigError: If the block of the chosen kind is missing
    """
    if block.kind == "rust" and block.rust is not None:
        theta0, theta1 = block.rust.theta
        theta2, theta3 = block.rust.mileage_transition
        return build_rust_model(
            theta0, theta1, theta2, theta3, block.beta, block.rust.states
        )
    if block.kind == "gilleskie" and block.gilleskie is not None:
        return build_gilleskie_model(block.gilleskie, block.beta)
    if block.kind == "custom" and block.custom is not None:
        transitions, utilities = _custom_tables(block.custom)
        return build_custom_model(transitions, utilities, block.beta)
    raise ConfigError(detail=f"No [model.{block.kind}] settings")


def _mixture(block: MixtureBlock) -> GumbelMixture:
    return make_mixture(
        block.weights, block.locations, block.component_scales, block.scale
    )


def true_ccps(model: DDCModel, dgp: DGPBlock) -> CCPMatrix:
    """
    Choice probabilities of the data generating process

    :param model: The model
    :type model: DDCModel
    :param dgp: Shock law of the DGP
    :type dgp: DGPBlock
    :return: The CCPs
    :rtype: CCPMatrix
    :raises ConvergenceError: If the Emax does not converge
    """
    if dgp.kind == "logit" or dgp.mixture is None:
        return logit_ccps(model)
    mix: GumbelMixture = _mixture(dgp.mixture)
    solution: EmaxSolution = solve_emax(model, mix)
    if not solution.converged:
        raise ConvergenceError(
            detail="The Emax of the data generating process did not converge",
            residual=solution.residual,
            trace=solution.residual_trace,
        )
    logger.info(
        f"DGP Emax solved with residual {solution.residual:.3e} after"
        f" {solution.successive_iterations} + {solution.newton_iterations}"
        " iterations"
    )
    return ccps(model, mix, solution.q)


def true_functionals(
    model: DDCModel,
    dgp: DGPBlock,
    ccp: CCPMatrix,
    overrides: Mapping[str, float],
) -> dict[str, float]:
    """
    Functionals of the data generating process, its counterfactual
     included for illness-episode models

    :param model: The model
    :type model: DDCModel
    :param dgp: Shock law of the DGP
    :type dgp: DGPBlock
    :param ccp: CCPs of the DGP
    :type ccp: CCPMatrix
    :param overrides: Counterfactual consumption technology
    :type overrides: Mapping[str, float]
    :return: Values keyed by functional name
    :rtype: dict[str, float]
    """
    values: dict[str, float] = {
        name: functional(model, ccp)
        for name, functional in default_functionals(model).items()
    }
    if model.name == "gilleskie":
        changed: DDCModel = counterfactual_model(model, overrides)
        values[COUNTERFACTUAL_VISITS] = expected_visits(
            changed, true_ccps(changed, dgp)
        )
    return values


def read_counts(path: Path, model: DDCModel) -> PanelCounts:
    """
    Read a d, x, n counts table written by the simulate command

    :param path: The CSV file
    :type path: Path
    :param model: Model the counts must fit
    :type model: DDCModel
    :return: The counts
    :rtype: PanelCounts
    :raises DataMismatchError: If the table does not fit the model
    """
    try:
        return counts_from_table(
            read_csv(path), model.n_states, model.n_actions
        )
    except DataMismatchError as e:
        raise DataMismatchError(detail=f"{path}: {e.detail}") from e


@log_stage
def cmd_simulate(
    config: RunConfig, data_dir: Path, seed: int | None = None
) -> dict[str, Any]:
    """
    Simulate data from the configured DGP: a counts table, a panel of
     histories for panel designs and a manifest with the DGP truth

    :param config: Run configuration
    :type config: RunConfig
    :param data_dir: Output directory
    :type data_dir: Path
    :param seed: Overrides the DGP seed
    :type seed: int | None
    :return: The manifest
    :rtype: dict[str, Any]
    """
    init_settings = get_init_settings()
    dgp: DGPBlock = config.dgp
    dgp_seed: int = dgp.seed if seed is None else seed
    model: DDCModel = build_model(config.model)
    ccp: CCPMatrix = true_ccps(model, dgp)
    panel_path: Path = data_dir / init_settings.PANEL_FILE
    data_dir.mkdir(parents=True, exist_ok=True)
    if dgp.decision_makers is not None:
        counts: PanelCounts = ccps_to_counts(ccp, dgp.decision_makers)
        panel_path.unlink(missing_ok=True)
    elif dgp.individuals is not None and dgp.periods is not None:
        records, counts = simulate_panel(
            model,
            ccp,
            dgp.individuals,
            dgp.periods,
            dgp.initial_state or 0,
            np.random.default_rng(dgp_seed),
        )
        write_csv(records, panel_path, init_settings.CSV_FLOAT_FORMAT)
        logger.info(f"Simulated {len(records)} panel records")
    else:
        raise ConfigError(detail="The DGP block has no sample design")
    write_csv(
        counts_table(counts),
        data_dir / init_settings.COUNTS_FILE,
        init_settings.CSV_FLOAT_FORMAT,
    )
    manifest: dict[str, Any] = {
        "command": "simulate",
        "project": init_settings.PROJECT_NAME,
        "version": init_settings.VERSION,
        "config_hash": config_hash(config),
        "seed": dgp_seed,
        "config": config.model_dump(mode="json"),
        "true_ccp": ccp.probabilities,
        "true_functionals": true_functionals(
            model, dgp, ccp, config.counterfactual.overrides
        ),
    }
    write_json(manifest, data_dir / init_settings.MANIFEST_FILE)
    return manifest


class ChainJob(NamedTuple):
    """Everything a worker process needs to run one chain."""

    chain: int
    directory: Path
    config: RunConfig
    model: DDCModel
    counts: PanelCounts
    seed: np.random.SeedSequence
    resume: bool
    digest: str


def _resume_point(store: DrawStore, chain: int) -> ChainCheckpoint | None:
    checkpoint: ChainCheckpoint | None = store.load_checkpoint()
    if checkpoint is None:
        logger.warning(f"Chain {chain} has no checkpoint; starting over")
        return None
    kept: int = store.truncate(checkpoint.iteration)
    if kept != checkpoint.draws_written:
        raise StoreError(
            detail=f"Chain {chain} holds {kept} draws but its checkpoint"
            f" expects {checkpoint.draws_written}"
        )
    return checkpoint


def run_chain_job(job: ChainJob) -> dict[str, Any]:
    """
    Run one chain into its store, from its checkpoint when resuming

    :param job: The chain to run
    :type job: ChainJob
    :return: Sidecar metadata of the finished chain
    :rtype: dict[str, Any]
    """
    mcmc = job.config.mcmc
    store = DrawStore(job.directory)
    target = PosteriorTarget(
        job.counts, job.model, job.config.prior, prior_only=mcmc.prior_only
    )
    checkpoint: ChainCheckpoint | None = (
        _resume_point(store, job.chain) if job.resume else None
    )
    if checkpoint is None:
        store.reset()
    metadata: dict[str, Any] = {
        "chain": job.chain,
        "config_hash": job.digest,
        "seed_entropy": str(job.seed.entropy),
        "spawn_key": list(job.seed.spawn_key),
        "theta": job.model.theta,
        "free_indices": list(target.free_indices),
        "config": job.config.model_dump(mode="json"),
        "status": "running",
    }
    store.write_metadata(metadata)
    start: ChainState | None = None
    if checkpoint is None:
        start = initial_state(target, mcmc.initial_m)
    run: ChainRun = run_chain(
        target,
        mcmc.hmc_config(),
        mcmc.schedule(),
        np.random.default_rng(job.seed),
        start,
        store,
        default_functionals(job.model),
        checkpoint,
    )
    metadata.update(
        status="complete",
        iterations=run.iterations,
        draws=run.draws_written,
        final_m=run.state.m,
        acceptance=run.stats.model_dump(),
        rates=run.stats.rates(),
        step_sizes={m: s.model_dump() for m, s in run.step_sizes.items()},
    )
    store.write_metadata(metadata)
    return metadata


def _fit_logit(
    config: RunConfig, model: DDCModel, counts: PanelCounts, seed: int
) -> LogitMLEResult | None:
    free: tuple[int, ...] = config.model.logit_free_indices
    if not free:
        logger.info("No dynamic logit parameters to fit")
        return None
    try:
        return logit_mle(
            counts,
            model,
            free,
            logit_functionals(model, config.counterfactual.overrides),
            alpha=config.report.alpha,
            rng=np.random.default_rng(seed),
        )
    except ConvergenceError as e:
        logger.warning(
            f"Dynamic logit fit failed; chains keep the configured"
            f" parameters: {e.detail}"
        )
        return None


@log_stage
def cmd_estimate(
    config: RunConfig,
    data_dir: Path,
    store_dir: Path,
    chains: int = 1,
    seed: int | None = None,
    resume: bool = False,
) -> dict[str, Any]:
    """
    Fit the dynamic logit benchmark, then run independent posterior
     chains, one process each, from children of the chain seed

    :param config: Run configuration
    :type config: RunConfig
    :param data_dir: Directory holding the counts
    :type data_dir: Path
    :param store_dir: Directory of the chain stores
    :type store_dir: Path
    :param chains: Number of chains
    :type chains: int
    :param seed: Overrides the chain seed
    :type seed: int | None
    :param resume: Continue the chains from their checkpoints
    :type resume: bool
    :return: The estimate document
    :rtype: dict[str, Any]
    """
    init_settings = get_init_settings()
    settings = get_settings()
    chain_seed: int = config.mcmc.seed if seed is None else seed
    model: DDCModel = build_model(config.model)
    counts: PanelCounts = read_counts(
        data_dir / init_settings.COUNTS_FILE, model
    )
    logit: LogitMLEResult | None = _fit_logit(config, model, counts, chain_seed)
    chain_model: DDCModel = (
        model if logit is None else model.with_theta(logit.theta)
    )
    digest: str = config_hash(config)
    seeds = np.random.SeedSequence(chain_seed).spawn(chains)
    jobs: list[ChainJob] = [
        ChainJob(
            chain=k,
            directory=store_dir / f"{init_settings.CHAIN_DIR_PREFIX}{k}",
            config=config,
            model=chain_model,
            counts=counts,
            seed=child,
            resume=resume,
            digest=digest,
        )
        for k, child in enumerate(seeds)
    ]
    if chains == 1:
        results: list[dict[str, Any]] = [run_chain_job(jobs[0])]
    else:
        workers: int = min(chains, settings.CHAINS_MAX_WORKERS or chains)
        logger.info(f"Running {chains} chains on {workers} processes")
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run_chain_job, jobs))
    estimate: dict[str, Any] = {
        "command": "estimate",
        "config_hash": digest,
        "seed": chain_seed,
        "theta": chain_model.theta,
        "free_indices": list(config.prior.free_theta_indices),
        "logit": logit.model_dump(mode="json") if logit is not None else None,
        "chains": [
            {k: v for k, v in result.items() if k != "config"}
            for result in results
        ],
    }
    write_json(estimate, store_dir / init_settings.ESTIMATE_FILE)
    return estimate


def _chain_index(path: Path, prefix: str) -> int | None:
    suffix: str = path.name[len(prefix) :]
    if not path.is_dir() or not path.name.startswith(prefix):
        return None
    return int(suffix) if suffix.isdigit() else None


def chain_stores(store_dir: Path) -> list[tuple[int, DrawStore]]:
    """
    The chain stores under an estimate directory, by chain number

    :param store_dir: Estimate directory
    :type store_dir: Path
    :return: (chain, store) pairs
    :rtype: list[tuple[int, DrawStore]]
    :raises StoreError: If the directory holds no chain
    """
    prefix: str = get_init_settings().CHAIN_DIR_PREFIX
    indexed: list[tuple[int, Path]] = []
    if store_dir.is_dir():
        for path in store_dir.iterdir():
            index: int | None = _chain_index(path, prefix)
            if index is not None:
                indexed.append((index, path))
    if not indexed:
        raise StoreError(detail=f"No chain stores under {store_dir}")
    return [(index, DrawStore(path)) for index, path in sorted(indexed)]


def read_chains(store_dir: Path) -> pd.DataFrame:
    """
    Stored draws of every chain with a leading chain column

    :param store_dir: Estimate directory
    :type store_dir: Path
    :return: The draws
    :rtype: pd.DataFrame
    :raises EmptySampleError: If no chain stored a draw
    """
    frames: list[pd.DataFrame] = []
    for index, store in chain_stores(store_dir):
        frame: pd.DataFrame = store.read_draws()
        if frame.empty:
            logger.warning(f"Chain {index} stored no draws")
            continue
        frame.insert(0, CHAIN_COLUMN, index)
        frames.append(frame)
    if not frames:
        raise EmptySampleError(detail=f"No stored draws under {store_dir}")
    return pd.concat(frames, ignore_index=True)


def _check_store_hash(store_dir: Path, digest: str) -> dict[str, Any]:
    estimate: dict[str, Any] = read_json(
        store_dir / get_init_settings().ESTIMATE_FILE
    )
    if estimate.get("config_hash") != digest:
        logger.warning(
            f"The store was estimated under configuration"
            f" {estimate.get('config_hash')}, not {digest}"
        )
    return estimate


def _burn_in(config: RunConfig) -> int:
    if config.report.burn_in is not None:
        return config.report.burn_in
    return config.mcmc.schedule().effective_burn_in


@log_stage
def cmd_summarize(
    config: RunConfig, store_dir: Path, summary_dir: Path
) -> PosteriorReport:
    """
    Summarize the chain stores into a JSON report and plot-ready tables:
     traces, the pmf of m, kernel densities and the renormalized scatter

    :param config: Run configuration
    :type config: RunConfig
    :param store_dir: Estimate directory
    :type store_dir: Path
    :param summary_dir: Output directory
    :type summary_dir: Path
    :return: The report
    :rtype: PosteriorReport
    """
    init_settings = get_init_settings()
    digest: str = config_hash(config)
    frame: pd.DataFrame = read_chains(store_dir)
    tables: SummaryTables = summarize(
        frame,
        _burn_in(config),
        config.report.thin,
        config.report.credible_mass,
        config.report.alpha,
        config.report.density_points,
    )
    acceptance: dict[str, Any] = {}
    for index, store in chain_stores(store_dir):
        metadata: dict[str, Any] = store.read_metadata()
        acceptance[f"chain{index}"] = metadata.get("rates")
    report: PosteriorReport = tables.report.model_copy(
        update={
            "config_hash": digest,
            "diagnostics": {
                **tables.report.diagnostics,
                "acceptance": acceptance,
            },
        }
    )
    write_json(
        report.model_dump(mode="json", by_alias=True),
        summary_dir / init_settings.SUMMARY_FILE,
    )
    fmt: str = init_settings.CSV_FLOAT_FORMAT
    write_csv(tables.traces, summary_dir / init_settings.TRACES_FILE, fmt)
    for name, trace in trace_tables(tables.traces).items():
        write_csv(
            trace,
            summary_dir / init_settings.TRACE_FILE_TEMPLATE.format(name=name),
            fmt,
        )
    write_csv(tables.m_pmf, summary_dir / init_settings.M_PMF_FILE, fmt)
    write_csv(tables.densities, summary_dir / init_settings.DENSITIES_FILE, fmt)
    write_csv(tables.scatter, summary_dir / init_settings.SCATTER_FILE, fmt)
    logger.info(f"Summarized {report.n_draws} draws; m pmf {report.m_pmf}")
    return report


def _manifest_truth(data_dir: Path) -> dict[str, float]:
    path: Path = data_dir / get_init_settings().MANIFEST_FILE
    if not path.exists():
        logger.info(f"No manifest at {path}; the report has no true values")
        return {}
    truth: dict[str, float] = read_json(path).get("true_functionals", {})
    return truth


def _stored_column(frame: pd.DataFrame, column: str) -> FloatArray:
    if column not in frame.columns:
        raise StoreError(detail=f"The draws lack the column {column}")
    return frame[column].to_numpy(dtype=np.float64)


@log_stage
def cmd_counterfactual(
    config: RunConfig, store_dir: Path, data_dir: Path, out_dir: Path
) -> CounterfactualReport:
    """
    Solve the counterfactual illness-episode model at every retained draw
     and compare expected visits across the DGP truth, the posterior and
     the dynamic logit fit

    :param config: Run configuration
    :type config: RunConfig
    :param store_dir: Estimate directory
    :type store_dir: Path
    :param data_dir: Directory with the DGP manifest
    :type data_dir: Path
    :param out_dir: Output directory
    :type out_dir: Path
    :return: The report
    :rtype: CounterfactualReport
    :raises ConfigError: If the model is not an illness-episode model
    :raises EmptySampleError: If no draw survives the burn-in
    """
    init_settings = get_init_settings()
    if config.model.kind != "gilleskie":
        raise ConfigError(
            detail="Counterfactuals need an illness-episode model, not"
            f" {config.model.kind}"
        )
    digest: str = config_hash(config)
    estimate: dict[str, Any] = _check_store_hash(store_dir, digest)
    model: DDCModel = build_model(config.model).with_theta(
        np.asarray(estimate["theta"], dtype=np.float64)
    )
    free: tuple[int, ...] = tuple(estimate["free_indices"])
    kept: pd.DataFrame = select_draws(
        read_chains(store_dir), _burn_in(config), config.report.thin
    )
    draws: list[tuple[int, FloatArray]] = [
        (int(m), parse_chi(text))
        for m, text in zip(kept[M_COLUMN], kept[CHI_COLUMN])
    ]
    overrides: dict[str, float] = dict(config.counterfactual.overrides)
    values: dict[str, FloatArray] = {
        BASELINE_VISITS: _stored_column(
            kept, f"{FUNCTIONAL_PREFIX}{BASELINE_VISITS}"
        ),
        BASELINE_ABSENCES: _stored_column(
            kept, f"{FUNCTIONAL_PREFIX}{BASELINE_ABSENCES}"
        ),
        COUNTERFACTUAL_VISITS: counterfactual_draws(
            model, free, draws, overrides
        ),
    }
    stacked: FloatArray = ccp_draws(kept)
    credible_set: CCPCredibleSet | None = posterior_credible_set(
        stacked, config.report.alpha
    )
    truth: dict[str, float] = _manifest_truth(data_dir)
    logit: dict[str, Any] = (estimate.get("logit") or {}).get("functionals", {})
    rows: list[ComparisonRow] = []
    for name, series in values.items():
        if np.isfinite(series).sum() < 2:
            raise EmptySampleError(detail=f"Too few finite draws of {name}")
        rows.append(
            ComparisonRow(
                name=name,
                true_value=truth.get(name),
                posterior=functional_summary(
                    series, config.report.credible_mass, stacked, credible_set
                ),
                logit=(
                    FunctionalEstimate.model_validate(logit[name])
                    if name in logit
                    else None
                ),
            )
        )
    report = CounterfactualReport(
        overrides=overrides, rows=rows, draws=len(kept), config_hash=digest
    )
    write_json(
        report.model_dump(mode="json", by_alias=True),
        out_dir / init_settings.COUNTERFACTUAL_FILE,
    )
    write_csv(
        pd.DataFrame(
            {
                CHAIN_COLUMN: kept[CHAIN_COLUMN],
                ITER_COLUMN: kept[ITER_COLUMN],
                **values,
            }
        ),
        out_dir / init_settings.COUNTERFACTUAL_DRAWS_FILE,
        init_settings.CSV_FLOAT_FORMAT,
    )
    return report


def _dispatch(args: argparse.Namespace) -> None:
    config: RunConfig = load_run_config(args.config)
    paths: RunPaths = run_paths(config, args.out, args.data, args.store)
    match args.command:
        case "simulate":
            cmd_simulate(config, paths.data, args.seed)
        case "estimate":
            cmd_estimate(
                config,
                paths.data,
                paths.estimate,
                args.chains,
                args.seed,
                args.resume,
            )
        case "summarize":
            cmd_summarize(config, paths.estimate, paths.summary)
        case "counterfactual":
            cmd_counterfactual(
                config, paths.estimate, paths.data, paths.counterfactual
            )


def main(argv: Sequence[str] | None = None) -> int:
    """
    Run a command and map domain errors to exit codes: 2 for usage,
     configuration and data errors, 3 for numerical failures

    :param argv: Arguments without the program name; sys.argv when None
    :type argv: Sequence[str] | None
    :return: The exit code
    :rtype: int
    """
    args: argparse.Namespace = build_parser().parse_args(argv)
    try:
        with command_lifespan(args.command, args.log_level):
            _dispatch(args)
    except USAGE_ERRORS as e:
        logger.error(f"{type(e).__name__}: {e.detail}")
        return EXIT_USAGE
    except NUMERICAL_ERRORS as e:
        logger.error(f"{type(e).__name__}: {e.detail}")
        return EXIT_NUMERICAL
    return EXIT_OK
