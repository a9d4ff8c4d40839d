"""
Experiment specs, replication orchestration and CSV/JSON artifacts.

Replication r of sweep point s always draws from the stream
SeedSequence(seed, spawn_key=(s, r)), so results do not depend on the
number of worker processes or on scheduling order.
"""

import enum
import itertools
import json
import logging
import math
import multiprocessing
import re
import time
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import List, NamedTuple, Optional

import numpy as np
import pandas as pd

from aloha_connectivity import __version__, analytics
from aloha_connectivity.dynamic_graph import measure_delays
from aloha_connectivity.exceptions import ConfigError, InsufficientDataError, ReplicationError
from aloha_connectivity.percolation import giant_component
from aloha_connectivity.pointprocess import (
    Boundary,
    NetworkConfig,
    check_network_field,
    replication_stream,
    sample_ppp,
)
from aloha_connectivity.protocol_model import (
    degree_sample,
    nn_time_sample,
    opportunistic_diverges,
    opportunistic_time_sample,
    ratio_mean,
    reduce_degrees,
    summarize_connect_times,
)

LOGGER = logging.getLogger(__name__)


class ExperimentKind(str, enum.Enum):
    DEGREES = "degrees"
    NN_TIME = "nn_time"
    OPPORTUNISTIC_TIME = "opportunistic_time"
    DELAY_VS_DISTANCE = "delay_vs_distance"
    TIME_CONSTANT_VS_P = "time_constant_vs_p"
    HOPS_VS_DISTANCE = "hops_vs_distance"
    PERCOLATION_SCAN = "percolation_scan"
    FORMULAS = "formulas"


DELAY_KINDS = {ExperimentKind.DELAY_VS_DISTANCE, ExperimentKind.TIME_CONSTANT_VS_P, ExperimentKind.HOPS_VS_DISTANCE}
CONNECT_KINDS = {ExperimentKind.NN_TIME, ExperimentKind.OPPORTUNISTIC_TIME}
TORUS_KINDS = {ExperimentKind.DEGREES, ExperimentKind.FORMULAS} | CONNECT_KINDS

# config key -> NetworkConfig field
NETWORK_KEYS = {
    "lambda": "lam",
    "p": "p",
    "beta": "beta",
    "eta": "eta",
    "window_half": "window_half",
    "boundary": "boundary",
    "max_slots": "max_slots",
}
SWEEPABLE = {key: name for key, name in NETWORK_KEYS.items() if key != "boundary"}
EXPERIMENT_KEYS = {"kind", "replications", "seed", "output", "distances", "restrict_to_giant", "min_distance"}
REQUIRED_NETWORK_KEYS = ("lambda", "p", "beta", "eta")

DEFAULT_REPLICATIONS = 200
DEFAULT_DISTANCES = tuple(float(x) for x in range(5, 50, 5))
DEFAULT_P_GRID = tuple(round(0.05 * i, 2) for i in range(1, 11))
OPTIMUM_RESAMPLES = 200

DEFAULTS_HELP = f"""\
Configuration file format (INI style, '#' starts a comment):

  [experiment]
  kind = delay_vs_distance      # one of: {", ".join(k.value for k in ExperimentKind)}
  replications = {DEFAULT_REPLICATIONS}
  seed = 0
  output = <kind>               # output path prefix
  distances = 5, 10, ..., 45    # delay kinds only
  restrict_to_giant = true      # delay kinds with finite eta: propagate on the eta-disc giant component
  min_distance = 5 * eta        # smallest distance used in time-constant fits

  [network]
  lambda = 1                    # required
  p = 0.2                       # required
  beta = 1.2                    # required
  eta = 1.5                     # required, 'inf' for the interference-limited regime
  window_half = 50
  boundary = torus | window     # torus for degrees/nn_time/opportunistic_time/formulas, window otherwise
  max_slots = 2000

  [sweep]
  p = 0.1, 0.2, 0.3             # any numeric [network] key, several keys form a grid

time_constant_vs_p sweeps p over {", ".join(f"{p:g}" for p in DEFAULT_P_GRID)} unless p is swept explicitly.
"""


@dataclass(frozen=True)
class ExperimentSpec:
    """
    One experiment: a kind, a base network, an optional parameter grid and a
    replication count per grid point.
    """

    kind: ExperimentKind
    base: NetworkConfig
    sweep: tuple = ()
    replications: int = DEFAULT_REPLICATIONS
    output: Optional[str] = None
    distances: tuple = DEFAULT_DISTANCES
    restrict_to_giant: Optional[bool] = None
    min_distance: Optional[float] = None

    def __post_init__(self):
        object.__setattr__(self, "kind", ExperimentKind(self.kind))
        object.__setattr__(self, "sweep", tuple((str(k), tuple(v)) for k, v in self.sweep))
        object.__setattr__(self, "distances", tuple(float(x) for x in self.distances))
        if self.restrict_to_giant is None:
            etas = [self.base.eta] + [v for k, values in self.sweep if k == "eta" for v in values]
            giant = self.kind in DELAY_KINDS and all(math.isfinite(e) for e in etas)
            object.__setattr__(self, "restrict_to_giant", giant)
        if self.replications < 1:
            raise ValueError(f"replications must be at least 1, got {self.replications}")
        for key, values in self.sweep:
            if key not in SWEEPABLE:
                raise ValueError(f"Cannot sweep {key!r}, sweepable parameters: {', '.join(SWEEPABLE)}")
            if not values:
                raise ValueError(f"Sweep over {key!r} has no values")

    def sweep_points(self) -> List[dict]:
        """Parameter overrides of every grid point (one empty point without a sweep)."""
        if not self.sweep:
            return [{}]
        keys = [k for k, _ in self.sweep]
        return [dict(zip(keys, combo)) for combo in itertools.product(*(v for _, v in self.sweep))]

    def config_for(self, index: int) -> NetworkConfig:
        overrides = self.sweep_points()[index]
        return self.base.with_(**{SWEEPABLE[k]: v for k, v in overrides.items()})

    def sweep_label(self, index: int):
        overrides = self.sweep_points()[index]
        if not overrides:
            return "base"
        if len(overrides) == 1:
            return next(iter(overrides.values()))
        return ";".join(f"{k}={v:g}" for k, v in overrides.items())

    @property
    def planned_runs(self) -> int:
        if self.kind is ExperimentKind.FORMULAS:
            return 0
        return len(self.sweep_points()) * self.replications

    def with_seed(self, seed: int) -> "ExperimentSpec":
        return replace(self, base=self.base.with_(seed=seed))


_SECTION = re.compile(r"^\[\s*(?P<name>[A-Za-z_]+)\s*\]$")
_ENTRY = re.compile(r"^(?P<key>[A-Za-z_][A-Za-z0-9_]*)\s*[=:]\s*(?P<value>.*)$")
_ALLOWED = {"experiment": EXPERIMENT_KEYS, "network": set(NETWORK_KEYS), "sweep": set(SWEEPABLE)}


def _read_sections(text: str) -> dict:
    sections = {}
    current = None
    for number, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line or line.startswith(";"):
            continue
        match = _SECTION.match(line)
        if match:
            name = match["name"].lower()
            if name not in _ALLOWED:
                raise ConfigError(f"unknown section [{name}], expected one of {', '.join(_ALLOWED)}", number)
            if name in sections:
                raise ConfigError(f"section [{name}] appears twice", number)
            current = name
            sections[name] = {}
            continue
        match = _ENTRY.match(line)
        if not match:
            raise ConfigError(f"expected 'key = value', got {line!r}", number)
        key = match["key"].lower()
        if current is None:
            raise ConfigError(f"{key!r} appears before any [section]", number)
        if key not in _ALLOWED[current]:
            raise ConfigError(f"unknown key {key!r} in [{current}]", number)
        if key in sections[current]:
            raise ConfigError(f"duplicate key {key!r} in [{current}]", number)
        sections[current][key] = (match["value"].strip(), number)
    return sections


def _number(key, value, line):
    try:
        return float(value)
    except ValueError:
        raise ConfigError(f"{key} must be a number, got {value!r}", line) from None


def _integer(key, value, line):
    try:
        return int(value)
    except ValueError:
        raise ConfigError(f"{key} must be an integer, got {value!r}", line) from None


def _boolean(key, value, line):
    lowered = value.lower()
    if lowered in ("true", "yes", "on", "1"):
        return True
    if lowered in ("false", "no", "off", "0"):
        return False
    raise ConfigError(f"{key} must be true or false, got {value!r}", line)


def _values(key, value, line, convert):
    parts = [part.strip() for part in value.split(",")]
    if not all(parts):
        raise ConfigError(f"{key} must be a comma-separated list of values, got {value!r}", line)
    return tuple(convert(key, part, line) for part in parts)


def _network_value(key, value, line):
    if key == "boundary":
        raw = value
    elif key == "max_slots":
        raw = _integer(key, value, line)
    else:
        raw = _number(key, value, line)
    try:
        return check_network_field(NETWORK_KEYS[key], raw)
    except ValueError as err:
        raise ConfigError(str(err), line) from None


def parse_config(text: str) -> ExperimentSpec:
    """
    Parse and validate an experiment file (format in DEFAULTS_HELP).

    Raises ConfigError with the offending line for syntax errors, unknown
    keys, type mismatches and out-of-range values.
    """
    sections = _read_sections(text)
    experiment = sections.get("experiment", {})
    network = sections.get("network", {})
    sweep_entries = sections.get("sweep", {})

    if "kind" not in experiment:
        raise ConfigError("missing required key 'kind' in [experiment]")
    value, line = experiment["kind"]
    try:
        kind = ExperimentKind(value)
    except ValueError:
        options = ", ".join(k.value for k in ExperimentKind)
        raise ConfigError(f"kind must be one of {options}, got {value!r}", line) from None
    for key in REQUIRED_NETWORK_KEYS:
        if key not in network:
            raise ConfigError(f"missing required key {key!r} in [network]")

    fields = {NETWORK_KEYS[key]: _network_value(key, value, line) for key, (value, line) in network.items()}
    fields.setdefault("boundary", Boundary.TORUS if kind in TORUS_KINDS else Boundary.WINDOW)

    options = {}
    if "seed" in experiment:
        value, line = experiment["seed"]
        try:
            fields["seed"] = check_network_field("seed", _integer("seed", value, line))
        except ValueError as err:
            raise ConfigError(str(err), line) from None
    if "replications" in experiment:
        value, line = experiment["replications"]
        options["replications"] = _integer("replications", value, line)
        if options["replications"] < 1:
            raise ConfigError(f"replications must be at least 1, got {options['replications']}", line)
    if "output" in experiment:
        options["output"] = experiment["output"][0]
    if "distances" in experiment:
        value, line = experiment["distances"]
        options["distances"] = _values("distances", value, line, _number)
        if not all(0 <= x and math.isfinite(x) for x in options["distances"]):
            raise ConfigError(f"distances must be finite and non-negative, got {value!r}", line)
    if "restrict_to_giant" in experiment:
        options["restrict_to_giant"] = _boolean("restrict_to_giant", *experiment["restrict_to_giant"])
    if "min_distance" in experiment:
        value, line = experiment["min_distance"]
        options["min_distance"] = _number("min_distance", value, line)
        if options["min_distance"] < 0:
            raise ConfigError(f"min_distance must be at least 0, got {options['min_distance']}", line)

    anchor = network.get("window_half", network["eta"])[1]
    try:
        base = NetworkConfig(**fields)
    except ValueError as err:
        raise ConfigError(str(err), anchor) from None

    sweep = []
    for key, (value, line) in sweep_entries.items():
        convert = _integer if key == "max_slots" else _number
        values = _values(key, value, line, convert)
        for v in values:
            try:
                check_network_field(SWEEPABLE[key], v)
            except ValueError as err:
                raise ConfigError(str(err), line) from None
        sweep.append((key, values))
    if kind is ExperimentKind.TIME_CONSTANT_VS_P and "p" not in sweep_entries:
        sweep.insert(0, ("p", DEFAULT_P_GRID))

    spec = ExperimentSpec(kind=kind, base=base, sweep=tuple(sweep), **options)
    sweep_line = min((line for _, line in sweep_entries.values()), default=anchor)
    for index in range(len(spec.sweep_points())):
        try:
            config = spec.config_for(index)
        except ValueError as err:
            raise ConfigError(f"sweep point {spec.sweep_label(index)}: {err}", sweep_line) from None
        if kind in CONNECT_KINDS and not config.interference_limited:
            raise ConfigError(f"{kind.value} needs eta = inf, got eta={config.eta}", network["eta"][1])
        if kind is ExperimentKind.PERCOLATION_SCAN and config.interference_limited:
            raise ConfigError("percolation_scan needs a finite eta", network["eta"][1])
        if spec.restrict_to_giant and config.interference_limited:
            raise ConfigError("restrict_to_giant needs a finite eta", network["eta"][1])
    LOGGER.debug(f"Parsed {kind.value} experiment with {spec.planned_runs} planned runs")
    return spec


class TaskOutput(NamedTuple):
    rows: list
    payload: object = None


def _degrees_task(spec, config, stream, replication):
    sample = degree_sample(config, stream)
    row = {
        "transmitters": sample.out_degrees.size,
        "receivers": sample.in_degrees.size,
        "out_edges": int(sample.out_degrees.sum()),
        "in_edges": int(sample.in_degrees.sum()),
        "isolated": sample.isolated,
        "max_in_degree": int(sample.in_degrees.max(initial=0)),
        "mean_out_degree": sample.out_degrees.mean() if sample.out_degrees.size else math.nan,
        "mean_in_degree": sample.in_degrees.mean() if sample.in_degrees.size else math.nan,
    }
    return TaskOutput([row], sample)


def _connect_task(sampler):
    def task(spec, config, stream, replication):
        delay = sampler(config, stream)
        return TaskOutput([{"delay": delay, "censored": delay is None}])
    return task


def _delay_task(spec, config, stream, replication):
    ps = sample_ppp(config, stream)
    members = giant_component(ps, config.eta, config.lam).members if spec.restrict_to_giant else None
    records = measure_delays(ps, config, stream, spec.distances, members=members, replication=replication)
    rows = []
    for record in records:
        row = record.as_row()
        del row["replication"]
        rows.append(row)
    return TaskOutput(rows)


def _percolation_task(spec, config, stream, replication):
    ps = sample_ppp(config, stream)
    giant = giant_component(ps, config.eta, config.lam)
    return TaskOutput([{
        "n_nodes": ps.count,
        "n_components": giant.n_components,
        "giant_size": giant.size,
        "giant_fraction": giant.fraction,
    }])


_TASKS = {
    ExperimentKind.DEGREES: _degrees_task,
    ExperimentKind.NN_TIME: _connect_task(nn_time_sample),
    ExperimentKind.OPPORTUNISTIC_TIME: _connect_task(opportunistic_time_sample),
    ExperimentKind.DELAY_VS_DISTANCE: _delay_task,
    ExperimentKind.TIME_CONSTANT_VS_P: _delay_task,
    ExperimentKind.HOPS_VS_DISTANCE: _delay_task,
    ExperimentKind.PERCOLATION_SCAN: _percolation_task,
}

RAW_COLUMNS = {
    ExperimentKind.DEGREES: ["transmitters", "receivers", "out_edges", "in_edges", "isolated", "max_in_degree",
                             "mean_out_degree", "mean_in_degree"],
    ExperimentKind.NN_TIME: ["delay", "censored"],
    ExperimentKind.OPPORTUNISTIC_TIME: ["delay", "censored"],
    ExperimentKind.DELAY_VS_DISTANCE: ["distance", "delay", "hops", "censored", "node_distance"],
    ExperimentKind.TIME_CONSTANT_VS_P: ["distance", "delay", "hops", "censored", "node_distance"],
    ExperimentKind.HOPS_VS_DISTANCE: ["distance", "delay", "hops", "censored", "node_distance"],
    ExperimentKind.PERCOLATION_SCAN: ["n_nodes", "n_components", "giant_size", "giant_fraction"],
}


def _run_task(task):
    """Worker entry point: one replication of one sweep point."""
    spec, sweep_index, replication = task
    stream = replication_stream(spec.base.seed, sweep_index, replication)
    try:
        config = spec.config_for(sweep_index)
        output = _TASKS[spec.kind](spec, config, stream, replication)
    except Exception as err:
        raise ReplicationError(
            f"Replication {replication} at sweep value {spec.sweep_label(sweep_index)} "
            f"(seed {spec.base.seed}, stream key ({sweep_index}, {replication})) failed: {err!r}"
        ) from err
    return sweep_index, replication, output


def _execute(spec: ExperimentSpec, jobs: int):
    tasks = [(spec, s, r) for s in range(len(spec.sweep_points())) for r in range(spec.replications)]
    LOGGER.info(f"Running {len(tasks)} replications of {spec.kind.value} on {jobs} worker(s) ...")
    if jobs <= 1:
        results = [_run_task(task) for task in tasks]
    else:
        with multiprocessing.Pool(jobs) as pool:
            results = pool.map(_run_task, tasks, chunksize=max(1, len(tasks) // (4 * jobs)))
    return sorted(results, key=lambda item: (item[0], item[1]))


def _raw_frame(spec: ExperimentSpec, results) -> pd.DataFrame:
    rows = []
    for sweep_index, replication, output in results:
        for row in output.rows:
            rows.append({"sweep_index": sweep_index, "sweep_value": spec.sweep_label(sweep_index),
                         "replication": replication, **row})
    columns = ["sweep_index", "sweep_value", "replication"] + RAW_COLUMNS[spec.kind]
    frame = pd.DataFrame(rows, columns=columns)
    for name in ("delay", "hops"):
        if name in frame:
            frame[name] = pd.to_numeric(frame[name]).astype("Int64")
    if "censored" in frame:
        frame["censored"] = frame["censored"].astype(bool)
    return frame


def _degrees_summary(spec, raw, results):
    rows = []
    for index, group in raw.groupby("sweep_index", sort=True):
        config = spec.config_for(index)
        mean_out, se_out = ratio_mean(group["out_edges"], group["transmitters"])
        mean_in, se_in = ratio_mean(group["in_edges"], group["receivers"])
        isolated, se_isolated = ratio_mean(group["isolated"], group["transmitters"])
        rows.append({
            "sweep_index": index,
            "mean_out_degree": mean_out,
            "se_out_degree": se_out,
            "mean_in_degree": mean_in,
            "se_in_degree": se_in,
            "isolated_fraction": isolated,
            "se_isolated": se_isolated,
            "max_in_degree": int(group["max_in_degree"].max()),
            "flow_gap": config.p * mean_out - (1 - config.p) * mean_in,
            "flow_se": math.hypot(config.p * se_out, (1 - config.p) * se_in),
            "expected_out_degree": analytics.expected_out_degree(config.lam, config.p, config.beta, config.eta),
            "expected_in_degree": analytics.expected_in_degree(config.lam, config.p, config.beta, config.eta),
            "isolation_probability_lb": analytics.isolation_probability_lb(config.lam, config.p, config.beta, config.eta),
            "replications": len(group),
        })
    return pd.DataFrame(rows)


def _connect_summary(spec, raw, results):
    rows = []
    for index, group in raw.groupby("sweep_index", sort=True):
        config = spec.config_for(index)
        delays = [None if c else int(d) for d, c in zip(group["delay"], group["censored"])]
        if spec.kind is ExperimentKind.NN_TIME:
            diverges = config.p >= analytics.aloha_cutoff(config.beta)
            reference = analytics.expected_nn_time(config.lam, config.p, config.beta)
        else:
            diverges = opportunistic_diverges(config.p, config.beta)
            reference = analytics.opportunistic_time_lb(config.p, config.beta) if config.beta > 1 else math.nan
        summary = summarize_connect_times(delays, diverges)
        if summary.censored_fraction > 0:
            LOGGER.warning(f"{spec.kind.value} at {spec.sweep_label(index)}: {summary.censored_fraction:.1%} of runs "
                           f"censored at max_slots={config.max_slots}" + (" (divergent regime)" if diverges else ""))
        rows.append({"sweep_index": index, **summary.to_record(), "closed_form": reference})
    return pd.DataFrame(rows)


def _delay_summary(spec, raw, results):
    table = analytics.summarize_delays(raw, ["sweep_index", "distance"])
    columns = ["sweep_index", "distance", "mean_delay", "se_delay", "mean_hops", "se_hops", "n",
               "censored_fraction", "mean_hop_length", "se_hop_length", "n_uncensored"]
    return table[columns]


def _percolation_summary(spec, raw, results):
    rows = []
    for index, group in raw.groupby("sweep_index", sort=True):
        config = spec.config_for(index)
        fractions = group["giant_fraction"].to_numpy(float)
        threshold = analytics.percolation_threshold(config.lam)
        rows.append({
            "sweep_index": index,
            "eta": config.eta,
            "lambda": config.lam,
            "threshold": threshold,
            "threshold_ok": config.eta > threshold,
            "giant_fraction": fractions.mean(),
            "se_giant_fraction": fractions.std(ddof=1) / math.sqrt(len(fractions)) if len(fractions) > 1 else math.nan,
            "n_components": group["n_components"].mean(),
            "replications": len(group),
        })
    return pd.DataFrame(rows)


def _formulas_summary(spec):
    rows = []
    for index in range(len(spec.sweep_points())):
        config = spec.config_for(index)
        rows.append({"sweep_index": index, **analytics.closed_forms(config.lam, config.p, config.beta, config.eta)})
    return pd.DataFrame(rows)


_SUMMARIES = {
    ExperimentKind.DEGREES: _degrees_summary,
    ExperimentKind.NN_TIME: _connect_summary,
    ExperimentKind.OPPORTUNISTIC_TIME: _connect_summary,
    ExperimentKind.DELAY_VS_DISTANCE: _delay_summary,
    ExperimentKind.TIME_CONSTANT_VS_P: _delay_summary,
    ExperimentKind.HOPS_VS_DISTANCE: _delay_summary,
    ExperimentKind.PERCOLATION_SCAN: _percolation_summary,
}


FIT_COLUMNS = ["sweep_index", "mu_hat", "mu_se", "c_hat", "c_se", "r_squared", "note"]


def _fit_table(spec, raw):
    rows = []
    for index, group in raw.groupby("sweep_index", sort=True):
        config = spec.config_for(index)
        try:
            fit = analytics.fit_time_constant(group, min_distance=spec.min_distance, eta=config.eta)
        except InsufficientDataError as err:
            LOGGER.warning(f"No time-constant fit at sweep value {spec.sweep_label(index)}: {err}")
            rows.append({"sweep_index": index, "mu_hat": math.nan, "mu_se": math.nan, "c_hat": math.nan,
                         "c_se": math.nan, "r_squared": math.nan, "note": str(err)})
            continue
        rows.append({"sweep_index": index, "mu_hat": fit.mu_hat, "mu_se": fit.mu_stderr, "c_hat": fit.c_hat,
                     "c_se": fit.c_stderr, "r_squared": fit.r_squared, "note": ""})
    return pd.DataFrame(rows, columns=FIT_COLUMNS)


def sweeps_p_only(spec: ExperimentSpec) -> bool:
    return [key for key, _ in spec.sweep] == ["p"] and len(spec.sweep[0][1]) > 1


def optimum_table(spec: ExperimentSpec, raw: pd.DataFrame, resamples: int = OPTIMUM_RESAMPLES) -> pd.DataFrame:
    """
    Delay-minimising p at every distance of a p sweep.

    p_opt_se is the spread of the argmin over bootstrap resamples of the
    replications. The resamples come from stream (seed, number of sweep
    points, 0), which no replication uses. A p whose runs are all censored at
    a distance is not a candidate there.
    """
    p_values = np.array([spec.config_for(i).p for i in range(len(spec.sweep_points()))])
    stream = replication_stream(spec.base.seed, len(p_values), 0)
    done = raw[~raw["censored"].astype(bool)]
    rows = []
    for distance, group in done.groupby("distance", sort=True):
        samples = [group.loc[group["sweep_index"] == i, "delay"].to_numpy(dtype=float) for i in range(len(p_values))]
        means = np.array([s.mean() if s.size else np.inf for s in samples])
        boot = np.full((resamples, len(p_values)), np.inf)
        for i, s in enumerate(samples):
            if s.size:
                boot[:, i] = s[stream.integers(0, s.size, size=(resamples, s.size))].mean(axis=1)
        best = int(np.argmin(means))
        picks = p_values[np.argmin(boot, axis=1)]
        winner = samples[best]
        rows.append({
            "distance": distance,
            "p_opt": p_values[best],
            "p_opt_se": float(picks.std(ddof=1)),
            "mean_delay": means[best],
            "se_delay": winner.std(ddof=1) / math.sqrt(winner.size) if winner.size > 1 else math.nan,
            "candidates": int(np.isfinite(means).sum()),
        })
    table = pd.DataFrame(rows, columns=["distance", "p_opt", "p_opt_se", "mean_delay", "se_delay", "candidates"])
    LOGGER.debug(f"Delay-optimal p by distance: {dict(zip(table['distance'], table['p_opt']))}")
    return table


def labelled(spec, frame):
    """Replace the internal sweep_index column by sweep_value."""
    frame = frame.copy()
    frame.insert(0, "sweep_value", [spec.sweep_label(i) for i in frame["sweep_index"]])
    return frame.drop(columns="sweep_index")


def to_jsonable(value):
    if isinstance(value, float) and not math.isfinite(value):
        return None if math.isnan(value) else ("inf" if value > 0 else "-inf")
    if isinstance(value, enum.Enum):
        return value.value
    if isinstance(value, (np.integer, np.floating, np.bool_)):
        return to_jsonable(value.item())
    if isinstance(value, dict):
        return {k: to_jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_jsonable(v) for v in value]
    return value


def verify(spec: ExperimentSpec, summary: pd.DataFrame, fits: Optional[pd.DataFrame] = None) -> pd.DataFrame:
    """
    Compare simulated summaries with the closed forms, 3 standard errors of slack.

    Checks whose standard error is undefined (a single replication) are skipped.
    """
    checks = []

    def add(name, index, observed, reference, se, passed):
        if isinstance(se, float) and math.isnan(se):
            LOGGER.warning(f"Skipping check {name} at {spec.sweep_label(index)}: no standard error")
            return
        checks.append({"check": name, "sweep_value": spec.sweep_label(index), "observed": observed,
                       "reference": reference, "slack": 3 * se, "passed": bool(passed)})

    for row in summary.to_dict("records"):
        index = row["sweep_index"]
        if spec.kind is ExperimentKind.DEGREES:
            add("mean out-degree", index, row["mean_out_degree"], row["expected_out_degree"], row["se_out_degree"],
                abs(row["mean_out_degree"] - row["expected_out_degree"]) <= 3 * row["se_out_degree"])
            add("mean in-degree", index, row["mean_in_degree"], row["expected_in_degree"], row["se_in_degree"],
                abs(row["mean_in_degree"] - row["expected_in_degree"]) <= 3 * row["se_in_degree"])
            add("isolation lower bound", index, row["isolated_fraction"], row["isolation_probability_lb"],
                row["se_isolated"], row["isolated_fraction"] >= row["isolation_probability_lb"] - 3 * row["se_isolated"])
            add("flow identity", index, row["flow_gap"], 0.0, row["flow_se"], abs(row["flow_gap"]) <= 3 * row["flow_se"])
            if spec.config_for(index).beta > 1:
                # guard disks of two transmitters cannot both leave y clear
                add("in-degree <= 1", index, row["max_in_degree"], 1, 0.0, row["max_in_degree"] <= 1)
        elif spec.kind is ExperimentKind.NN_TIME:
            if math.isinf(row["closed_form"]):
                add("divergence flagged", index, row["estimate"], row["closed_form"], 0.0, row["diverges"])
            else:
                add("nearest-neighbour time", index, row["estimate"], row["closed_form"], row["std_error"],
                    abs(row["estimate"] - row["closed_form"]) <= 3 * row["std_error"])
        elif spec.kind is ExperimentKind.OPPORTUNISTIC_TIME:
            if math.isfinite(row["closed_form"]):
                add("opportunistic lower bound", index, row["estimate"], row["closed_form"], row["std_error"],
                    row["estimate"] >= row["closed_form"] - 3 * row["std_error"])
        elif spec.kind is ExperimentKind.FORMULAS:
            scale = max(abs(row["expected_out_degree"]), 1.0)
            gap = row["p"] * row["expected_out_degree"] - (1 - row["p"]) * row["expected_in_degree"]
            add("flow identity", index, gap, 0.0, 1e-12 * scale, abs(gap) <= 3e-12 * scale)
    if fits is not None:
        for row in fits.dropna(subset=["mu_hat"]).to_dict("records"):
            bound = analytics.time_constant_lb(spec.config_for(row["sweep_index"]).eta)
            add("time constant >= 1/eta", row["sweep_index"], row["mu_hat"], bound, row["mu_se"],
                row["mu_hat"] >= bound - 3 * row["mu_se"])
    return pd.DataFrame(checks, columns=["check", "sweep_value", "observed", "reference", "slack", "passed"])


@dataclass
class ExperimentResult:
    spec: ExperimentSpec
    summary: pd.DataFrame
    raw: Optional[pd.DataFrame] = None
    fits: Optional[pd.DataFrame] = None
    files: dict = field(default_factory=dict)
    wall_time: float = 0.0


def _output_prefix(spec: ExperimentSpec, out_dir) -> Path:
    prefix = Path(spec.output or spec.kind.value)
    if out_dir is not None:
        prefix = Path(out_dir) / prefix.name
    return prefix


def run_experiment(spec: ExperimentSpec, jobs: int = 1, out_dir=None) -> ExperimentResult:
    """
    Run every (sweep point, replication) pair and write the artifacts:
    ``<prefix>_raw.csv``, ``<prefix>_summary.csv``, ``<prefix>_manifest.json``
    and, depending on the kind, ``_fit.csv``, ``_histogram.csv``,
    ``_estimates.json`` or ``_components.json``.
    """
    started = time.perf_counter()
    prefix = _output_prefix(spec, out_dir)
    prefix.parent.mkdir(parents=True, exist_ok=True)
    LOGGER.info(f"Experiment {spec.kind.value}: {len(spec.sweep_points())} sweep point(s) x {spec.replications} "
                f"replication(s), seed {spec.base.seed}, writing to {prefix}_*")

    files = {}
    raw = fits = None
    if spec.kind is ExperimentKind.FORMULAS:
        summary = _formulas_summary(spec)
    else:
        results = _execute(spec, jobs)
        raw = _raw_frame(spec, results)
        summary = _SUMMARIES[spec.kind](spec, raw, results)
        files["raw"] = Path(f"{prefix}_raw.csv")
        raw.drop(columns="sweep_index").to_csv(files["raw"], index=False)

        if spec.kind in DELAY_KINDS:
            fits = _fit_table(spec, raw)
            files["fit"] = Path(f"{prefix}_fit.csv")
            labelled(spec, fits).to_csv(files["fit"], index=False)
            if sweeps_p_only(spec):
                files["optimum"] = Path(f"{prefix}_optimum.csv")
                optimum_table(spec, raw).to_csv(files["optimum"], index=False)
        elif spec.kind is ExperimentKind.DEGREES:
            files["histogram"] = Path(f"{prefix}_histogram.csv")
            _write_histograms(spec, results, files["histogram"])
        elif spec.kind in CONNECT_KINDS:
            files["estimates"] = Path(f"{prefix}_estimates.json")
            records = [{"sweep_value": spec.sweep_label(r["sweep_index"]),
                        **{k: r[k] for k in ("estimate", "std_error", "n", "censored_fraction", "diverges")}}
                       for r in summary.to_dict("records")]
            files["estimates"].write_text(json.dumps(to_jsonable(records), indent=2) + "\n")
        elif spec.kind is ExperimentKind.PERCOLATION_SCAN:
            files["components"] = Path(f"{prefix}_components.json")
            records = [{k: r[k] for k in ("eta", "lambda", "threshold_ok", "giant_fraction", "n_components")}
                       for r in summary.to_dict("records")]
            files["components"].write_text(json.dumps(to_jsonable(records), indent=2) + "\n")

    files["summary"] = Path(f"{prefix}_summary.csv")
    labelled(spec, summary).to_csv(files["summary"], index=False)

    elapsed = time.perf_counter() - started
    files["manifest"] = Path(f"{prefix}_manifest.json")
    manifest = {
        "tool": "aloha-connectivity",
        "version": __version__,
        "kind": spec.kind,
        "seed": spec.base.seed,
        "seeding": "numpy SeedSequence(seed, spawn_key=(sweep_index, replication))",
        "network": asdict(spec.base),
        "sweep": [{"parameter": key, "values": list(values)} for key, values in spec.sweep],
        "sweep_values": [spec.sweep_label(i) for i in range(len(spec.sweep_points()))],
        "replications": spec.replications,
        "planned_runs": spec.planned_runs,
        "distances": list(spec.distances) if spec.kind in DELAY_KINDS else None,
        "restrict_to_giant": spec.restrict_to_giant,
        "min_distance": spec.min_distance,
        "jobs": jobs,
        "files": {name: str(path) for name, path in files.items()},
        "wall_time_s": elapsed,
    }
    files["manifest"].write_text(json.dumps(to_jsonable(manifest), indent=2) + "\n")
    LOGGER.info(f"Experiment {spec.kind.value} finished in {elapsed:.1f} s")
    return ExperimentResult(spec, summary, raw, fits, files, elapsed)


def _write_histograms(spec, results, path):
    frames = []
    by_sweep = {}
    for sweep_index, _, output in results:
        by_sweep.setdefault(sweep_index, []).append(output.payload)
    for sweep_index, samples in sorted(by_sweep.items()):
        stats = reduce_degrees(samples, spec.config_for(sweep_index).p)
        for role in ("out", "in"):
            frame = stats.histogram_frame(role)
            frame.insert(0, "role", role)
            frame.insert(0, "sweep_value", spec.sweep_label(sweep_index))
            frames.append(frame)
    pd.concat(frames, ignore_index=True).to_csv(path, index=False)
