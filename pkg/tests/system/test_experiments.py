"""
Long-running checks of the illness-episode experiment.
"""

import math
from pathlib import Path

import numpy as np
import orjson
import pytest

from app.cli.commands import EXIT_OK, main
from app.schemas.model import GilleskieParams
from app.services.counterfactual import expected_visits
from app.services.ddc_model import (
    VISIT_ACTIONS,
    build_gilleskie_model,
    simulate_panel,
)
from app.services.likelihood import logit_ccps

pytestmark = pytest.mark.slow


class EpisodeOracleTestSuite:
    def test_exact_visits_match_simulated_episodes(self) -> None:
        model = build_gilleskie_model(GilleskieParams(), 0.9)
        ccp = logit_ccps(model)
        records, _ = simulate_panel(
            model, ccp, 20_000, 8, 1, np.random.default_rng(17)
        )
        records = records.sort_values(["i", "t"])
        returned = (records["x"] == 0).groupby(records["i"]).cummax()
        in_episode = records[~returned]
        visits = (
            in_episode["d"]
            .isin(VISIT_ACTIONS)
            .groupby(in_episode["i"])
            .sum()
            .reindex(range(20_000), fill_value=0)
            .to_numpy(dtype=np.float64)
        )
        se = visits.std(ddof=1) / math.sqrt(visits.size)
        exact = expected_visits(model, ccp)
        assert abs(visits.mean() - exact) < 3.0 * se


class IllnessSmokeTestSuite:
    def test_counterfactual_report_from_a_short_chain(
        self, tmp_path: Path
    ) -> None:
        out = tmp_path / "gilleskie"
        args = ["--config", "gilleskie-mix", "--out", str(out)]
        assert main(["simulate", *args]) == EXIT_OK
        config = tmp_path / "short.toml"
        config.write_text(_SHORT_RUN)
        short = ["--config", str(config), "--out", str(out)]
        assert main(["estimate", *short]) == EXIT_OK
        assert main(["summarize", *short]) == EXIT_OK
        assert main(["counterfactual", *short]) == EXIT_OK
        report = orjson.loads(
            (out / "counterfactual" / "counterfactual.json").read_bytes()
        )
        rows = {row["name"]: row for row in report["rows"]}
        changed = rows["counterfactual_expected_visits"]
        assert changed["true_value"] is not None
        hpd = changed["posterior"]["hpd"]
        assert hpd["lo"] <= changed["posterior"]["mean"] <= hpd["hi"]


_SHORT_RUN: str = """
name = "gilleskie-short"

[model]
kind = "gilleskie"
beta = 0.9

[model.gilleskie]
T = 8

[dgp]
kind = "mixture"
seed = 20240602
individuals = 100
periods = 8
initial_state = 1

[dgp.mixture]
weights = [0.5568, 0.4432]
locations = [[-0.4683, 3.4628, -0.0914], [0.9798, -2.2437, 1.3496]]
component_scales = [3.7045, 0.6378]

[prior]
preset = "gilleskie"

[mcmc]
iterations = 600
burn_in = 200
thin = 5
hmc_per_jump = 10
leapfrog_steps = 5
adapt_steps = 200
seed = 11
"""
