"""Parameter sweeps, batch execution and result files.

Run r at sweep point p uses seed ``seed_base + p * runs_per_point + r``, so a
sweep's output depends only on its spec, never on how many workers ran it.

CSV layout (``emit_csv``): first column is the swept parameter, then a
``<series>_mean`` / ``<series>_std`` pair for every series in
``AggregateResult.series`` order: strategy labels in universe order,
``cooperation_rate``, ``mean_payoff``, then the family's extra measures.
"""

from __future__ import annotations

import csv
import dataclasses
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .config import ConfigError, ModelConfig, parse_value
from .engine import MetricsRecord, long_run_summary, run_simulation

log = logging.getLogger(__name__)


class SweepError(RuntimeError):
    def __init__(self, point: int, run: int, seed: int, cause: BaseException):
        self.point, self.run, self.seed = point, run, seed
        super().__init__(f"run failed at point {point}, run {run}, seed {seed}: {cause!r}")


@dataclass(frozen=True)
class SweepSpec:
    parameter_path: str
    values: tuple
    runs_per_point: int
    base_config: ModelConfig
    seed_base: int = 0

    def __post_init__(self):
        if len(self.values) == 0:
            raise ConfigError("sweep needs at least one value", key="values")
        if self.runs_per_point < 1:
            raise ConfigError("runs per point must be >= 1", key="runs")
        self.field_name  # validates the parameter name

    @property
    def field_name(self) -> str:
        fname, _ = parse_value(self.parameter_path, "0") if self.parameter_path != "family" else ("family", None)
        if fname == "family":
            raise ConfigError("the model family cannot be swept", key="parameter")
        return fname

    def seed(self, point: int, run: int) -> int:
        return self.seed_base + point * self.runs_per_point + run

    def config_at(self, point: int) -> ModelConfig:
        fname = self.field_name
        value = self.values[point]
        current = getattr(self.base_config, fname)
        if isinstance(current, bool):
            value = bool(value)
        elif isinstance(current, int):
            if float(value) != int(value):
                raise ConfigError(f"sweep value {value} is not an integer", key=self.parameter_path)
            value = int(value)
        return self.base_config.replace(**{fname: value})

    @classmethod
    def from_mapping(cls, base: ModelConfig, sweep: dict) -> "SweepSpec":
        missing = [k for k in ("parameter", "values") if k not in sweep]
        if missing:
            raise ConfigError(f"[sweep] section is missing {missing}", key=missing[0])
        return cls(
            parameter_path=sweep["parameter"],
            values=tuple(sweep["values"]),
            runs_per_point=sweep.get("runs", 1),
            base_config=base,
            seed_base=sweep.get("seed_base", 0),
        )


@dataclass
class AggregateResult:
    parameter_path: str
    values: tuple
    series: list[str]
    means: np.ndarray  # (points, series)
    stds: np.ndarray
    runs_per_point: int
    per_run: list[list[dict]] = dataclasses.field(default_factory=list, repr=False)

    def column(self, name: str) -> np.ndarray:
        return self.means[:, self.series.index(name)]

    def std_column(self, name: str) -> np.ndarray:
        return self.stds[:, self.series.index(name)]


def _run_job(config: ModelConfig, seed: int, burn_in: float) -> dict:
    records = run_simulation(config, seed)
    return long_run_summary(records, config.strategy_labels(), burn_in)


def _aggregate(spec: SweepSpec, per_run: list[list[dict]]) -> AggregateResult:
    series = list(per_run[0][0].keys())
    means = np.empty((len(per_run), len(series)))
    stds = np.empty_like(means)
    for p, runs in enumerate(per_run):
        table = np.array([[r[s] for s in series] for r in runs], dtype=float)
        means[p] = table.mean(axis=0)
        stds[p] = table.std(axis=0)
    return AggregateResult(spec.parameter_path, tuple(spec.values), series, means, stds, spec.runs_per_point, per_run)


def run_sweep(spec: SweepSpec, parallelism: int = 1, burn_in: float | None = None) -> AggregateResult:
    """Run every (point, run) job and aggregate long-run averages.

    Per run the time average is taken over all generations after the burn-in
    fraction; across runs we report the mean and (population) standard
    deviation. Results are identical for any ``parallelism``.
    """
    burn = spec.base_config.burn_in if burn_in is None else burn_in
    configs = [spec.config_at(p) for p in range(len(spec.values))]
    jobs = [(p, r, spec.seed(p, r)) for p in range(len(configs)) for r in range(spec.runs_per_point)]
    results: dict[tuple[int, int], dict] = {}

    if parallelism <= 1:
        for p, r, seed in jobs:
            try:
                results[p, r] = _run_job(configs[p], seed, burn)
            except Exception as exc:
                raise SweepError(p, r, seed, exc) from exc
            log.debug("point %d run %d done", p, r)
    else:
        with ProcessPoolExecutor(max_workers=parallelism) as pool:
            futures = {(p, r, seed): pool.submit(_run_job, configs[p], seed, burn) for p, r, seed in jobs}
            for (p, r, seed), fut in futures.items():
                try:
                    results[p, r] = fut.result()
                except Exception as exc:
                    for other in futures.values():
                        other.cancel()
                    raise SweepError(p, r, seed, exc) from exc

    per_run = [[results[p, r] for r in range(spec.runs_per_point)] for p in range(len(configs))]
    return _aggregate(spec, per_run)


# ---------------------------------------------------------------------------
# output


def _fmt(x: float) -> str:
    return f"{x:.6g}"


def _x(value) -> str:
    return _fmt(float(value)) if not isinstance(value, str) else value


def emit_csv(result: AggregateResult, path: str | os.PathLike) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        header = [result.parameter_path]
        for s in result.series:
            header += [f"{s}_mean", f"{s}_std"]
        writer.writerow(header)
        for p, value in enumerate(result.values):
            row = [_x(value)]
            for j in range(len(result.series)):
                row += [_fmt(result.means[p, j]), _fmt(result.stds[p, j])]
            writer.writerow(row)


def read_csv(path: str | os.PathLike) -> tuple[list[str], list[list[float]]]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], [[float(x) for x in row] for row in rows[1:]]


def emit_plot_data(result: AggregateResult, path: str | os.PathLike) -> None:
    """One block per series: a ``# series`` comment, then ``x mean std`` rows.

    Blocks are separated by two blank lines (gnuplot ``index`` convention).
    """
    if len(result.values) == 0 or len(result.series) == 0:
        raise ValueError("refusing to write plot data for an empty sweep")
    blocks = []
    for j, name in enumerate(result.series):
        lines = [f"# series: {name}", f"# {result.parameter_path} mean std"]
        for p, value in enumerate(result.values):
            lines.append(f"{_x(value)} {_fmt(result.means[p, j])} {_fmt(result.stds[p, j])}")
        blocks.append("\n".join(lines))
    with open(path, "w") as fh:
        fh.write("\n\n\n".join(blocks) + "\n")


def read_plot_data(path: str | os.PathLike) -> dict[str, np.ndarray]:
    series: dict[str, list] = {}
    current = None
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if line.startswith("# series: "):
                current = line[len("# series: "):]
                series[current] = []
            elif line and not line.startswith("#"):
                series[current].append([float(x) for x in line.split()])
    return {k: np.array(v) for k, v in series.items()}


def emit_run_csv(records: list[MetricsRecord], labels: list[str], path: str | os.PathLike) -> None:
    """Per-generation metrics of a single run."""
    extras = list(records[0].extras) if records else []
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["generation", *labels, "cooperation_rate", "mean_payoff", *extras])
        for r in records:
            writer.writerow(
                [r.generation, *(_fmt(p) for p in r.strategy_proportions), _fmt(r.cooperation_rate),
                 _fmt(r.mean_payoff), *(_fmt(r.extras[k]) for k in extras)]
            )

