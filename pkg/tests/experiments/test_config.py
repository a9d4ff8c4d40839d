import logging
import math

import pytest

from aloha_connectivity.exceptions import ConfigError
from aloha_connectivity.experiments import DEFAULT_P_GRID, ExperimentKind, ExperimentSpec, parse_config
from aloha_connectivity.pointprocess import Boundary, NetworkConfig

LOGGER = logging.getLogger(__name__)

MINIMAL = """\
[experiment]
kind = {kind}

[network]
lambda = 1
p = 0.2
beta = 1.2
eta = {eta}
"""


def test_minimal_config_gets_defaults():
    spec = parse_config(MINIMAL.format(kind="delay_vs_distance", eta="1.5"))
    assert spec.kind is ExperimentKind.DELAY_VS_DISTANCE
    assert spec.base == NetworkConfig(lam=1.0, p=0.2, beta=1.2, eta=1.5)
    assert spec.base.window_half == 50.0
    assert spec.base.seed == 0
    assert spec.replications == 200
    assert spec.distances == tuple(float(x) for x in range(5, 50, 5))
    assert spec.base.boundary is Boundary.WINDOW
    assert spec.planned_runs == 200


@pytest.mark.parametrize("kind", ["degrees", "formulas"])
def test_torus_is_default_for_degree_kinds(kind):
    assert parse_config(MINIMAL.format(kind=kind, eta="1")).base.boundary is Boundary.TORUS


def test_infinite_eta_accepted_for_connection_times():
    spec = parse_config(MINIMAL.format(kind="nn_time", eta="inf"))
    assert math.isinf(spec.base.eta)
    assert spec.base.boundary is Boundary.TORUS


def test_connection_times_need_infinite_eta():
    with pytest.raises(ConfigError, match="needs eta = inf") as err:
        parse_config(MINIMAL.format(kind="opportunistic_time", eta="1.5"))
    assert err.value.line == 8


def test_percolation_needs_finite_eta():
    with pytest.raises(ConfigError, match="finite eta"):
        parse_config(MINIMAL.format(kind="percolation_scan", eta="inf").replace("[network]", "[network]\nboundary = torus"))


def test_range_error_names_field_and_line():
    text = MINIMAL.format(kind="degrees", eta="1").replace("p = 0.2", "p = 1.5")
    with pytest.raises(ConfigError) as err:
        parse_config(text)
    assert err.value.line == 6
    assert "p must lie in (0, 1), got 1.5" in str(err.value)
    assert str(err.value).startswith("line 6:")


def test_type_mismatch():
    text = MINIMAL.format(kind="degrees", eta="1").replace("beta = 1.2", "beta = wide")
    with pytest.raises(ConfigError, match="beta must be a number, got 'wide'") as err:
        parse_config(text)
    assert err.value.line == 7


def test_unknown_key_is_an_error():
    text = MINIMAL.format(kind="degrees", eta="1") + "gamma = 3\n"
    with pytest.raises(ConfigError, match="unknown key 'gamma' in \\[network\\]") as err:
        parse_config(text)
    assert err.value.line == 9


def test_unknown_section_and_kind():
    with pytest.raises(ConfigError, match="unknown section \\[plots\\]"):
        parse_config(MINIMAL.format(kind="degrees", eta="1") + "[plots]\n")
    with pytest.raises(ConfigError, match="kind must be one of") as err:
        parse_config(MINIMAL.format(kind="movies", eta="1"))
    assert err.value.line == 2


def test_missing_required_keys():
    with pytest.raises(ConfigError, match="missing required key 'kind'"):
        parse_config("[network]\nlambda = 1\n")
    with pytest.raises(ConfigError, match="missing required key 'eta'"):
        parse_config(MINIMAL.format(kind="degrees", eta="1").replace("eta = 1\n", ""))


def test_duplicate_key_and_malformed_line():
    with pytest.raises(ConfigError, match="duplicate key 'p'"):
        parse_config(MINIMAL.format(kind="degrees", eta="1") + "p = 0.3\n")
    with pytest.raises(ConfigError, match="expected 'key = value'") as err:
        parse_config("[experiment]\nkind degrees\n")
    assert err.value.line == 2


def test_comments_and_experiment_options():
    text = """\
    # delay study
    [experiment]
    kind = hops_vs_distance   # trailing comment
    ; full line comment
    replications = 12
    seed = 99
    output = results/hops
    distances = 2, 4, 8
    restrict_to_giant = yes
    min_distance = 3

    [network]
    lambda = 1
    p = 0.2
    beta = 1.2
    eta = 1.5
    window_half = 20
    max_slots = 500
    """
    spec = parse_config("\n".join(line.strip() for line in text.splitlines()))
    assert spec.replications == 12
    assert spec.base.seed == 99
    assert spec.output == "results/hops"
    assert spec.distances == (2.0, 4.0, 8.0)
    assert spec.restrict_to_giant is True
    assert spec.min_distance == 3.0
    assert spec.base.window_half == 20.0
    assert spec.base.max_slots == 500


def test_sweep_accounting():
    text = MINIMAL.format(kind="delay_vs_distance", eta="1.5") + "\n[sweep]\np = 0.1, 0.2, 0.3, 0.4, 0.5\n"
    spec = parse_config(text)
    assert spec.planned_runs == 1000
    assert [spec.config_for(i).p for i in range(5)] == [0.1, 0.2, 0.3, 0.4, 0.5]
    assert spec.sweep_label(2) == 0.3


def test_sweep_grid_over_two_parameters():
    text = MINIMAL.format(kind="degrees", eta="1") + "\n[sweep]\np = 0.1, 0.2\nbeta = 1, 2, 3\n"
    spec = parse_config(text)
    assert len(spec.sweep_points()) == 6
    assert spec.sweep_label(5) == "p=0.2;beta=3"
    assert spec.config_for(5).beta == 3.0


def test_sweep_values_are_validated():
    text = MINIMAL.format(kind="degrees", eta="1") + "\n[sweep]\np = 0.1, 1.2\n"
    with pytest.raises(ConfigError, match="p must lie in") as err:
        parse_config(text)
    assert err.value.line == 11


def test_time_constant_gets_default_p_grid():
    spec = parse_config(MINIMAL.format(kind="time_constant_vs_p", eta="1.5"))
    assert spec.sweep == (("p", DEFAULT_P_GRID),)
    assert DEFAULT_P_GRID == (0.05, 0.1, 0.15, 0.2, 0.25, 0.3, 0.35, 0.4, 0.45, 0.5)


def test_window_guard_reported_as_config_error():
    text = MINIMAL.format(kind="delay_vs_distance", eta="1.5") + "window_half = 5\n"
    with pytest.raises(ConfigError, match="window_half must be at least 5"):
        parse_config(text)


def test_spec_validation():
    base = NetworkConfig(lam=1.0, p=0.2, beta=1.2, eta=1.5)
    with pytest.raises(ValueError, match="replications must be at least 1"):
        ExperimentSpec(ExperimentKind.DEGREES, base, replications=0)
    with pytest.raises(ValueError, match="Cannot sweep 'gamma'"):
        ExperimentSpec(ExperimentKind.DEGREES, base, sweep=[("gamma", [1])])
    assert ExperimentSpec("degrees", base).with_seed(5).base.seed == 5


def test_delay_kinds_default_to_the_giant_component():
    assert parse_config(MINIMAL.format(kind="delay_vs_distance", eta="1.5")).restrict_to_giant is True
    assert parse_config(MINIMAL.format(kind="time_constant_vs_p", eta="1.5")).restrict_to_giant is True
    assert parse_config(MINIMAL.format(kind="degrees", eta="1")).restrict_to_giant is False
    explicit = MINIMAL.format(kind="delay_vs_distance", eta="1.5").replace("[network]",
                                                                           "restrict_to_giant = no\n\n[network]")
    assert parse_config(explicit).restrict_to_giant is False


def test_delay_kind_without_link_range_propagates_on_everything():
    text = MINIMAL.format(kind="delay_vs_distance", eta="inf").replace("[network]", "[network]\nboundary = torus")
    assert parse_config(text).restrict_to_giant is False
    base = NetworkConfig(lam=1.0, p=0.2, beta=1.2, eta=1.5)
    assert ExperimentSpec(ExperimentKind.HOPS_VS_DISTANCE, base).restrict_to_giant is True
    assert ExperimentSpec(ExperimentKind.HOPS_VS_DISTANCE, base, sweep=[("eta", [1.5, math.inf])]).restrict_to_giant \
        is False
