"""
A module for ddc model in the app.services package.
"""

import logging
from collections.abc import Sequence

import numpy as np
import pandas as pd
from pydantic import ValidationError

from app.exceptions.exceptions import DataMismatchError, InvalidModelError
from app.schemas.arrays import FloatArray
from app.schemas.model import CCPMatrix, DDCModel, GilleskieParams, PanelCounts

logger: logging.Logger = logging.getLogger(__name__)

GilleskieState = tuple[int, int, int]
VISIT_ACTIONS: frozenset[int] = frozenset({1, 3})
ABSENCE_ACTIONS: frozenset[int] = frozenset({2, 3})
PANEL_COLUMNS: list[str] = ["i", "t", "x", "d"]


def _validated_model(**fields: object) -> DDCModel:
    try:
        return DDCModel.model_validate(fields)
    except ValidationError as e:
        raise InvalidModelError(detail=f"Invalid model: {e}") from e


def build_rust_model(
    theta0: float,
    theta1: float,
    theta2: float,
    theta3: float,
    beta: float,
    K: int = 90,
) -> DDCModel:
    """
    Bus engine replacement model.

    Keeping the engine (d=0) pays theta0 + theta1 x and moves mileage up by
    0, 1 or 2 bins with probabilities theta2, theta3 and 1 - theta2 -
    theta3, piling overflow on bin K. Replacing (d=1) pays 0 and resets
    mileage to bin 1. The shock enters the replacement action, so the
    engine-keeping intercept is tied to it with sign -1.

    :param theta0: Intercept of the keep utility
    :type theta0: float
    :param theta1: Mileage slope of the keep utility
    :type theta1: float
    :param theta2: Probability of no mileage increase
    :type theta2: float
    :param theta3: Probability of a one-bin increase
    :type theta3: float
    :param beta: Discount factor
    :type beta: float
    :param K: Number of mileage bins
    :type K: int
    :return: The model
    :rtype: DDCModel
    :raises InvalidModelError: If the mileage probabilities are invalid
    """
    if theta2 < 0.0 or theta3 < 0.0 or theta2 + theta3 > 1.0:
        raise InvalidModelError(
            detail=f"Invalid mileage probabilities ({theta2}, {theta3})"
        )
    if K < 2:
        raise InvalidModelError(detail=f"K={K} must be at least 2")
    steps: tuple[float, float, float] = (theta2, theta3, 1.0 - theta2 - theta3)
    transitions: FloatArray = np.zeros((2, K, K))
    for x in range(K):
        for jump, probability in enumerate(steps):
            transitions[0, x, min(x + jump, K - 1)] += probability
    transitions[1, :, 0] = 1.0
    mileage: FloatArray = np.arange(1, K + 1, dtype=np.float64)
    design: FloatArray = np.zeros((K, 2, 2))
    design[:, 0, 0] = 1.0
    design[:, 0, 1] = mileage
    return _validated_model(
        name="rust",
        beta=beta,
        transitions=transitions,
        design=design,
        theta=np.array([theta0, theta1]),
        intercept_indices=(0,),
        intercept_signs=(-1.0,),
        theta_names=("theta0", "theta1"),
        state_labels=tuple(str(int(x)) for x in mileage),
    )


def gilleskie_states(T: int) -> list[GilleskieState]:
    """
    Enumerate the illness-episode states (t, v, a) in lexicographic order,
     the well state (0, 0, 0) first

    :param T: Episode length
    :type T: int
    :return: The states
    :rtype: list[GilleskieState]
    """
    states: list[GilleskieState] = [(0, 0, 0)]
    for t in range(1, T + 1):
        states.extend((t, v, a) for v in range(t) for a in range(t))
    return states


def _logistic(x: float) -> float:
    return float(1.0 / (1.0 + np.exp(-x)))


def sickness_probability(params: GilleskieParams) -> float:
    """
    Probability of moving from the well state into an illness

    :param params: The illness parameters
    :type params: GilleskieParams
    :return: pi^S
    :rtype: float
    """
    if params.sick_probability is not None:
        return params.sick_probability
    return 1.0 / (1.0 + float(np.exp(params.sick_index)))


def _recovery_probability(
    params: GilleskieParams, x: int, t: int, v_next: int, a_next: int, d: int
) -> float:
    if params.recovery_table is not None:
        return float(params.recovery_table[x, d])
    eta = params.recovery_coefficients
    assert eta is not None
    index: float = (
        eta[0]
        + eta[1] * v_next
        + eta[2] * v_next**2
        + eta[3] * a_next
        + eta[4] * a_next**2
        + eta[5] * v_next * a_next
        + eta[6] * t
        + eta[7] * t**2
        + eta[8] * t**3
        + params.recovery_shift
    )
    return _logistic(index)


def _next_counts(v: int, a: int, d: int) -> tuple[int, int]:
    return v + int(d in VISIT_ACTIONS), a + int(d in ABSENCE_ACTIONS)


def gilleskie_consumption(
    params: GilleskieParams, state: GilleskieState, d: int
) -> float:
    """
    Per-period consumption; during illness visits cost the coinsurance
     payment and absences lose the uncovered share of income

    :param params: The illness parameters
    :type params: GilleskieParams
    :param state: (t, v, a)
    :type state: GilleskieState
    :param d: Action 0..3
    :type d: int
    :return: Consumption C(x, d)
    :rtype: float
    """
    t, v, a = state
    if t == 0:
        return params.income
    _, a_next = _next_counts(v, a, d)
    paid_leave: float = _logistic(params.phi1 + params.phi2 * a_next)
    cost: float = 0.0
    if d in VISIT_ACTIONS:
        cost += params.coinsurance
    if d in ABSENCE_ACTIONS:
        cost += params.income * (
            1.0 - params.sick_leave_coverage * paid_leave
        )
    return params.income - cost


def gilleskie_design(params: GilleskieParams) -> FloatArray:
    """
    Utility regressors of the illness model, shape (K, 4, 6).

    Columns hold the three action intercepts, the well-state penalty on
    seeking care or absence, the well-state utility of the baseline action
    and consumption during illness.

    :param params: The illness parameters
    :type params: GilleskieParams
    :return: The design tensor
    :rtype: FloatArray
    """
    states: list[GilleskieState] = gilleskie_states(params.T)
    design: FloatArray = np.zeros((len(states), 4, 6))
    for x, state in enumerate(states):
        well: float = float(state[0] == 0)
        for d in range(4):
            if d > 0:
                design[x, d, d - 1] = 1.0
                design[x, d, 3] = well
            else:
                design[x, d, 4] = well
            design[x, d, 5] = (1.0 - well) * gilleskie_consumption(
                params, state, d
            )
    return design


def gilleskie_transitions(params: GilleskieParams) -> FloatArray:
    """
    Transition matrices of the illness model, shape (4, K, K)

    :param params: The illness parameters
    :type params: GilleskieParams
    :return: Row-stochastic matrices G^d
    :rtype: FloatArray
    :raises InvalidModelError: If a recovery table has the wrong size
    """
    states: list[GilleskieState] = gilleskie_states(params.T)
    if params.recovery_table is not None and (
        params.recovery_table.shape[0] != len(states)
    ):
        raise InvalidModelError(
            detail=f"Recovery table has {params.recovery_table.shape[0]}"
            f" rows for {len(states)} states"
        )
    position: dict[GilleskieState, int] = {s: i for i, s in enumerate(states)}
    pi_sick: float = sickness_probability(params)
    transitions: FloatArray = np.zeros((4, len(states), len(states)))
    for x, (t, v, a) in enumerate(states):
        for d in range(4):
            if t == 0:
                transitions[d, x, position[(1, 0, 0)]] = pi_sick
                transitions[d, x, 0] += 1.0 - pi_sick
            elif t == params.T:
                transitions[d, x, 0] = 1.0
            else:
                v_next, a_next = _next_counts(v, a, d)
                recover: float = _recovery_probability(
                    params, x, t, v_next, a_next, d
                )
                transitions[d, x, 0] = recover
                transitions[d, x, position[(t + 1, v_next, a_next)]] = (
                    1.0 - recover
                )
    return transitions


def build_gilleskie_model(params: GilleskieParams, beta: float) -> DDCModel:
    """
    Illness episode model with actions 0 (neither), 1 (visit), 2 (absence)
     and 3 (both), and states (t, v, a)

    :param params: The illness parameters
    :type params: GilleskieParams
    :param beta: Discount factor
    :type beta: float
    :return: The model
    :rtype: DDCModel
    """
    states: list[GilleskieState] = gilleskie_states(params.T)
    model: DDCModel = _validated_model(
        name="gilleskie",
        beta=beta,
        transitions=gilleskie_transitions(params),
        design=gilleskie_design(params),
        theta=np.asarray(params.theta),
        intercept_indices=(0, 1, 2),
        intercept_signs=(1.0, 1.0, 1.0),
        theta_names=tuple(f"theta{i}" for i in range(1, 7)),
        state_labels=tuple(f"({t},{v},{a})" for t, v, a in states),
        gilleskie=params,
    )
    logger.info(f"Built illness model with T={params.T}, K={len(states)}")
    return model


def build_custom_model(
    transitions: FloatArray, utilities: FloatArray, beta: float
) -> DDCModel:
    """
    Model from explicit tables; the utility table becomes a one-column
     design with theta = (1,)

    :param transitions: G^d, shape (J+1, K, K)
    :type transitions: FloatArray
    :param utilities: u(x, d), shape (K, J+1)
    :type utilities: FloatArray
    :param beta: Discount factor
    :type beta: float
    :return: The model
    :rtype: DDCModel
    """
    table: FloatArray = np.asarray(utilities, dtype=np.float64)
    if table.ndim != 2:
        raise InvalidModelError(detail="utilities must have shape (K, J+1)")
    return _validated_model(
        name="custom",
        beta=beta,
        transitions=np.asarray(transitions, dtype=np.float64),
        design=table[:, :, None],
        theta=np.ones(1),
        theta_names=("scale",),
    )


def ccps_to_counts(ccp: CCPMatrix, N: float) -> PanelCounts:
    """
    Count design n_dx = p(d|x) N with real-valued counts

    :param ccp: Choice probabilities
    :type ccp: CCPMatrix
    :param N: Decision makers per state
    :type N: float
    :return: The counts
    :rtype: PanelCounts
    :raises DataMismatchError: If the counts are all zero or negative
    """
    try:
        return PanelCounts(counts=ccp.probabilities * float(N))
    except ValidationError as e:
        raise DataMismatchError(detail=f"Invalid count design: {e}") from e


def _draw_rows(
    cumulative: FloatArray, rng: np.random.Generator
) -> np.ndarray:  # type: ignore[type-arg]
    draws: FloatArray = rng.random(cumulative.shape[0])
    index = np.sum(draws[:, None] >= cumulative, axis=1)
    return np.minimum(index, cumulative.shape[1] - 1)


def simulate_panel(
    model: DDCModel,
    ccp: CCPMatrix,
    individuals: int,
    periods: int,
    initial: int | Sequence[float] | FloatArray,
    rng: np.random.Generator,
) -> tuple[pd.DataFrame, PanelCounts]:
    """
    Forward simulate histories: choices from p(.|x_t), next states from
     G^{d_t}

    :param model: The model
    :type model: DDCModel
    :param ccp: Choice probabilities
    :type ccp: CCPMatrix
    :param individuals: Number of histories n
    :type individuals: int
    :param periods: Periods per history
    :type periods: int
    :param initial: Initial state index or initial state distribution
    :type initial: int | Sequence[float] | FloatArray
    :param rng: Random generator
    :type rng: np.random.Generator
    :return: Records with columns i, t, x, d and the aggregated counts
    :rtype: tuple[pd.DataFrame, PanelCounts]
    """
    if ccp.probabilities.shape != (model.n_states, model.n_actions):
        raise DataMismatchError(
            detail=f"CCP shape {ccp.probabilities.shape} does not match the"
            f" model ({model.n_states}, {model.n_actions})"
        )
    if isinstance(initial, (int, np.integer)):
        states = np.full(individuals, int(initial))
    else:
        law: FloatArray = np.asarray(initial, dtype=np.float64)
        states = rng.choice(model.n_states, size=individuals, p=law)
    choice_cdf: FloatArray = np.cumsum(ccp.probabilities, axis=1)
    state_cdf: FloatArray = np.cumsum(model.transitions, axis=2)
    people = np.arange(individuals)
    frames: list[pd.DataFrame] = []
    for t in range(periods):
        actions = _draw_rows(choice_cdf[states], rng)
        frames.append(
            pd.DataFrame({"i": people, "t": t, "x": states, "d": actions})
        )
        states = _draw_rows(state_cdf[actions, states], rng)
    records: pd.DataFrame = (
        pd.concat(frames, ignore_index=True)
        if frames
        else pd.DataFrame(columns=PANEL_COLUMNS, dtype=np.int64)
    )
    records = records.sort_values(["i", "t"], kind="stable").reset_index(
        drop=True
    )
    return records, counts_from_panel(
        records, model.n_states, model.n_actions
    )


def counts_from_panel(
    records: pd.DataFrame, n_states: int, n_actions: int
) -> PanelCounts:
    """
    Aggregate panel records into counts n_dx

    :param records: Frame with integer columns x and d
    :type records: pd.DataFrame
    :param n_states: K
    :type n_states: int
    :param n_actions: J+1
    :type n_actions: int
    :return: The counts
    :rtype: PanelCounts
    :raises DataMismatchError: If records fall outside the model
    """
    counts: FloatArray = np.zeros((n_states, n_actions))
    x = records["x"].to_numpy(dtype=np.int64)
    d = records["d"].to_numpy(dtype=np.int64)
    outside: bool = bool(
        x.size
        and (
            x.min() < 0
            or x.max() >= n_states
            or d.min() < 0
            or d.max() >= n_actions
        )
    )
    if outside:
        raise DataMismatchError(
            detail="Panel records reference states or actions outside the"
            " model"
        )
    np.add.at(counts, (x, d), 1.0)
    try:
        return PanelCounts(counts=counts)
    except ValidationError as e:
        raise DataMismatchError(detail=f"Empty panel: {e}") from e


def counts_table(counts: PanelCounts) -> pd.DataFrame:
    """
    Counts in long form, one row per (d, x) pair with columns d, x, n

    :param counts: The counts
    :type counts: PanelCounts
    :return: The table ordered by action, then state
    :rtype: pd.DataFrame
    """
    d, x = np.meshgrid(
        np.arange(counts.n_actions), np.arange(counts.n_states), indexing="ij"
    )
    return pd.DataFrame(
        {"d": d.ravel(), "x": x.ravel(), "n": counts.counts.T.ravel()}
    )


def counts_from_table(
    table: pd.DataFrame, n_states: int, n_actions: int
) -> PanelCounts:
    """
    Read counts from the long d, x, n form. Every (d, x) pair of the
     model must appear exactly once.

    :param table: Frame with columns d, x, n
    :type table: pd.DataFrame
    :param n_states: K
    :type n_states: int
    :param n_actions: J+1
    :type n_actions: int
    :return: The counts
    :rtype: PanelCounts
    :raises DataMismatchError: On missing, duplicate or foreign pairs
    """
    if set(table.columns) != {"d", "x", "n"}:
        raise DataMismatchError(
            detail=f"Counts need columns d, x, n, got {list(table.columns)}"
        )
    if table.duplicated(subset=["d", "x"]).any():
        raise DataMismatchError(detail="Counts repeat a (d, x) pair")
    expected = pd.MultiIndex.from_product(
        [range(n_states), range(n_actions)], names=["x", "d"]
    )
    try:
        wide: pd.Series = table.set_index(["x", "d"])["n"].astype(np.float64)
    except (TypeError, ValueError) as e:
        raise DataMismatchError(detail=f"Non-numeric counts: {e}") from e
    if len(wide) != len(expected) or not wide.index.isin(expected).all():
        raise DataMismatchError(
            detail=f"Counts must cover {n_states} states and {n_actions}"
            " actions exactly once"
        )
    values: FloatArray = (
        wide.reindex(expected).to_numpy().reshape(n_states, n_actions)
    )
    try:
        return PanelCounts(counts=values)
    except ValidationError as e:
        raise DataMismatchError(detail=f"Invalid counts: {e}") from e
