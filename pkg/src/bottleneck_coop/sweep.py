"""Parameter grid enumeration, parallel execution and CSV persistence."""

from __future__ import annotations

import csv
import io
import logging
import multiprocessing
import os
import time
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import yaml

from . import engine
from .behavior import derive_seed
from .core import DEFAULT_COMM_RANGE, DEFAULT_TURNS, ScenarioParams, Variant, validate_params
from .metrics import AGGREGATE_COLUMNS, SWEEP_COLUMNS, aggregate_likely

log = logging.getLogger(__name__)

TRAILER = "# complete rows="
DEFAULT_BASE_SEED = 20210611


def default_base_seed() -> int:
    env = os.environ.get("BOTTLENECK_SEED")
    return int(env) if env else DEFAULT_BASE_SEED


class IncompleteSweep(ValueError):
    """The CSV lacks its completion trailer or the row count does not match."""


@dataclass
class GridSpec:
    kappa_values: list = field(default_factory=lambda: [i / 50 for i in range(51)])
    p_f_values: list = field(default_factory=lambda: [0.0, 0.1, 0.2, 0.3, 0.4, 0.5])
    p_b_values: list = field(default_factory=lambda: [0.12, 0.25, 0.5, 1.0])
    dmaxmax_values: list = field(default_factory=lambda: list(range(4, 21, 2)))
    variants: list = field(default_factory=lambda: [Variant.COUNTING, Variant.NON_COUNTING])
    base_seed: int = field(default_factory=default_base_seed)
    turns_target: int = DEFAULT_TURNS
    comm_range: int = DEFAULT_COMM_RANGE
    repeats: int = 1

    def __post_init__(self):
        self.variants = [Variant.parse(v) for v in self.variants]

    @classmethod
    def from_file(cls, path: "str | Path", **overrides) -> "GridSpec":
        """Load a YAML (or JSON) mapping whose keys mirror the field names."""
        data = yaml.safe_load(Path(path).read_text()) or {}
        if not isinstance(data, dict):
            raise ValueError(f"{path}: expected a mapping of grid settings")
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"{path}: unknown keys {sorted(unknown)}")
        data.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**data)

    def with_overrides(self, **overrides) -> "GridSpec":
        return replace(self, **{k: v for k, v in overrides.items() if v is not None})


def grid(spec: GridSpec) -> list[ScenarioParams]:
    """Cartesian product: variant, then dmaxmax, p_f, p_b, kappa, repeat."""
    out = []
    for variant in spec.variants:
        for dmaxmax in spec.dmaxmax_values:
            for p_f in spec.p_f_values:
                for p_b in spec.p_b_values:
                    for kappa in spec.kappa_values:
                        for _ in range(spec.repeats):
                            seed = derive_seed(spec.base_seed, len(out))
                            p = ScenarioParams(kappa=float(kappa), p_f=float(p_f), p_b=float(p_b),
                                               dmaxmax=int(dmaxmax), variant=variant,
                                               comm_range=spec.comm_range,
                                               turns_target=spec.turns_target, seed=seed)
                            out.append(validate_params(p))
    return out


@dataclass
class SweepReport:
    path: Path
    rows: int
    wall_time: float
    workers: int
    failures: list = field(default_factory=list)


def _run_row(args) -> list[str]:
    params, log_dir = args
    log_path = None
    if log_dir is not None:
        log_path = Path(log_dir) / f"run_{params.seed:016x}.jsonl"
    return engine.run(params, log=log_path).csv_row()


def _csv_line(values) -> str:
    buf = io.StringIO()
    csv.writer(buf, lineterminator="\n").writerow(values)
    return buf.getvalue()


def run_sweep(spec: GridSpec, worker_count: int, output_path: "str | Path",
              log_dir: "str | Path | None" = None, chunksize: int = 16) -> SweepReport:
    """Run every grid entry and write rows in grid order.

    The trailer line is written only after the last row, so an aborted sweep
    leaves a file that :func:`read_sweep` refuses.
    """
    params = grid(spec)
    output_path = Path(output_path)
    if log_dir is not None:
        Path(log_dir).mkdir(parents=True, exist_ok=True)
    jobs = [(p, log_dir) for p in params]
    start = time.perf_counter()
    worker_count = max(1, int(worker_count))

    with output_path.open("w", newline="") as fh:
        fh.write(_csv_line(SWEEP_COLUMNS))
        if worker_count == 1 or len(jobs) <= 1:
            rows = map(_run_row, jobs)
            n = _write_rows(fh, rows)
        else:
            _warm_up()
            ctx = multiprocessing.get_context("fork" if os.name == "posix" else "spawn")
            with ctx.Pool(worker_count) as pool:
                # imap hands out chunks on demand and yields in submission order
                n = _write_rows(fh, pool.imap(_run_row, jobs, chunksize=chunksize))
        fh.write(f"{TRAILER}{n}\n")

    wall = time.perf_counter() - start
    log.info("sweep: %d rows in %.1fs with %d workers", n, wall, worker_count)
    return SweepReport(output_path, n, wall, worker_count)


def _write_rows(fh, rows) -> int:
    n = 0
    for row in rows:
        fh.write(_csv_line(row))
        n += 1
    return n


def _warm_up() -> None:
    engine.run(ScenarioParams(0.5, 0.1, 0.5, 4, turns_target=10))


_INT_COLUMNS = {"dmaxmax", "seed", "turns", "drained_free", "drained_blocked",
                "direction_changes", "episode_count", "n_combos"}


def _typed(row: dict) -> dict:
    out = {}
    for k, v in row.items():
        if k == "variant":
            out[k] = v
        elif k in _INT_COLUMNS:
            out[k] = int(v)
        else:
            out[k] = float(v)
    return out


def read_sweep(path: "str | Path", columns=SWEEP_COLUMNS) -> list[dict]:
    """Parse a completed CSV written by :func:`run_sweep` or :func:`aggregate`."""
    lines = Path(path).read_text().splitlines()
    if not lines or not lines[-1].startswith(TRAILER):
        raise IncompleteSweep(f"{path}: missing completion trailer")
    expected = int(lines[-1][len(TRAILER):])
    reader = csv.DictReader(lines[:-1])
    if tuple(reader.fieldnames or ()) != tuple(columns):
        raise IncompleteSweep(f"{path}: unexpected header {reader.fieldnames}")
    rows = [_typed(r) for r in reader]
    if len(rows) != expected:
        raise IncompleteSweep(f"{path}: trailer says {expected} rows, found {len(rows)}")
    return rows


def aggregate(input_csv: "str | Path", mode: str = "likely",
              output_path: "str | Path | None" = None) -> list[dict]:
    """Mean phi per (variant, dmaxmax, kappa); ``mode`` is ``likely`` or ``all``."""
    if mode not in ("likely", "all"):
        raise ValueError("mode must be 'likely' or 'all'")
    rows = read_sweep(input_csv)
    table = aggregate_likely(rows, likely_only=(mode == "likely"))
    out = [{"variant": v, "dmaxmax": d, "kappa": k, "mean_phi": phi, "n_combos": n}
           for (v, d, k), (phi, n) in table.items()]
    order = {v.value: i for i, v in enumerate(Variant)}
    out.sort(key=lambda r: (order.get(r["variant"], 99), r["dmaxmax"], r["kappa"]))
    if output_path is not None:
        write_aggregate(out, output_path)
    return out


def write_aggregate(rows: list[dict], path: "str | Path") -> None:
    with Path(path).open("w", newline="") as fh:
        fh.write(_csv_line(AGGREGATE_COLUMNS))
        for r in rows:
            fh.write(_csv_line([r[c] if isinstance(r[c], str) else repr(r[c])
                                for c in AGGREGATE_COLUMNS]))
        fh.write(f"{TRAILER}{len(rows)}\n")


def params_from_row(row: dict, comm_range: int = DEFAULT_COMM_RANGE) -> ScenarioParams:
    """Scenario behind a sweep row, for standalone re-runs."""
    return ScenarioParams(kappa=row["kappa"], p_f=row["p_f"], p_b=row["p_b"],
                          dmaxmax=row["dmaxmax"], variant=Variant.parse(row["variant"]),
                          comm_range=comm_range, turns_target=row["turns"], seed=row["seed"])
