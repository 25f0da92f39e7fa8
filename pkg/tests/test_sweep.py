import random

import pytest

from bottleneck_coop import engine
from bottleneck_coop.core import ParameterError, Variant
from bottleneck_coop.metrics import CoverageError, is_likely
from bottleneck_coop.sweep import (
    TRAILER,
    GridSpec,
    IncompleteSweep,
    aggregate,
    default_base_seed,
    grid,
    params_from_row,
    read_sweep,
    run_sweep,
)


def small_spec(**kw):
    base = dict(kappa_values=[0.0, 0.5, 1.0], p_f_values=[0.1, 0.5], p_b_values=[0.25, 1.0],
                dmaxmax_values=[4, 10], turns_target=2000, base_seed=7)
    base.update(kw)
    return GridSpec(**base)


def test_default_grid_size():
    assert len(grid(GridSpec(variants=[Variant.COUNTING]))) == 11_016
    assert len(grid(GridSpec())) == 22_032


def test_single_value_grid():
    spec = GridSpec(kappa_values=[0.5], p_f_values=[0.1], p_b_values=[0.5], dmaxmax_values=[8],
                    variants=["counting"])
    assert len(grid(spec)) == 1


def test_grid_order_and_seeds():
    spec = small_spec()
    entries = grid(spec)
    keys = [(e.variant.value, e.dmaxmax, e.p_f, e.p_b, e.kappa) for e in entries]
    order = {"counting": 0, "non-counting": 1}
    assert keys == sorted(keys, key=lambda k: (order[k[0]],) + k[1:])
    assert entries == grid(spec)
    assert len({e.seed for e in entries}) == len(entries)


def test_grid_rejects_invalid_values():
    with pytest.raises(ParameterError):
        grid(small_spec(dmaxmax_values=[5]))


def test_repeats_expand_grid():
    spec = small_spec(repeats=3)
    entries = grid(spec)
    assert len(entries) == 3 * len(grid(small_spec()))
    assert entries[0].kappa == entries[1].kappa == entries[2].kappa
    assert len({e.seed for e in entries[:3]}) == 3


def test_env_seed_override(monkeypatch):
    monkeypatch.setenv("BOTTLENECK_SEED", "123")
    assert default_base_seed() == 123
    assert GridSpec().base_seed == 123
    monkeypatch.delenv("BOTTLENECK_SEED")
    assert default_base_seed() == 20210611


def test_worker_count_does_not_change_output(tmp_path):
    spec = small_spec()
    one, many = tmp_path / "one.csv", tmp_path / "many.csv"
    r1 = run_sweep(spec, 1, one)
    r3 = run_sweep(spec, 3, many, chunksize=2)
    assert r1.rows == r3.rows == len(grid(spec))
    assert one.read_bytes() == many.read_bytes()
    assert one.read_text().splitlines()[-1] == f"{TRAILER}{r1.rows}"


def test_empty_grid(tmp_path):
    out = tmp_path / "empty.csv"
    report = run_sweep(small_spec(kappa_values=[]), 2, out)
    assert report.rows == 0
    assert read_sweep(out) == []
    assert len(out.read_text().splitlines()) == 2


def test_incomplete_file_is_refused(tmp_path):
    out = tmp_path / "s.csv"
    run_sweep(small_spec(), 1, out)
    lines = out.read_text().splitlines()
    (tmp_path / "cut.csv").write_text("\n".join(lines[:-1]) + "\n")
    with pytest.raises(IncompleteSweep):
        read_sweep(tmp_path / "cut.csv")
    (tmp_path / "short.csv").write_text("\n".join(lines[:-3] + lines[-1:]) + "\n")
    with pytest.raises(IncompleteSweep):
        read_sweep(tmp_path / "short.csv")
    with pytest.raises(IncompleteSweep):
        aggregate(tmp_path / "cut.csv")


def test_rows_rerun_standalone(tmp_path):
    out = tmp_path / "s.csv"
    run_sweep(small_spec(), 2, out)
    text = out.read_text().splitlines()
    for line, row in zip(text[1:-1], read_sweep(out)):
        r = engine.run(params_from_row(row))
        assert ",".join(r.csv_row()) == line


def test_log_dir_writes_one_log_per_run(tmp_path):
    spec = small_spec(kappa_values=[0.5], dmaxmax_values=[4], turns_target=300)
    run_sweep(spec, 1, tmp_path / "s.csv", log_dir=tmp_path / "logs")
    logs = sorted((tmp_path / "logs").glob("*.jsonl"))
    assert len(logs) == len(grid(spec))
    for path in logs:
        engine.replay(path)


def test_likely_combo_count():
    spec = GridSpec()
    combos = [(f, b) for f in spec.p_f_values for b in spec.p_b_values if f < b]
    assert len(combos) == 16
    assert sum(is_likely(f, b) for f in spec.p_f_values for b in spec.p_b_values) == 16


def test_aggregate_modes(tmp_path):
    out = tmp_path / "s.csv"
    spec = small_spec()
    run_sweep(spec, 1, out)
    likely = aggregate(out, "likely", tmp_path / "agg.csv")
    every = aggregate(out, "all")
    keys = 2 * 2 * 3
    assert len(likely) == len(every) == keys
    assert {r["n_combos"] for r in likely} == {3}
    assert {r["n_combos"] for r in every} == {4}
    again = read_sweep(tmp_path / "agg.csv", columns=("variant", "dmaxmax", "kappa", "mean_phi", "n_combos"))
    assert again == likely
    with pytest.raises(ValueError):
        aggregate(out, "median")


def test_aggregate_single_unlikely_row(tmp_path):
    out = tmp_path / "s.csv"
    run_sweep(small_spec(kappa_values=[0.5], p_f_values=[0.5], p_b_values=[0.25], dmaxmax_values=[4],
                         variants=["counting"]), 1, out)
    assert aggregate(out, "likely") == []


def test_aggregate_reports_gaps(tmp_path):
    out = tmp_path / "s.csv"
    run_sweep(small_spec(), 1, out)
    lines = out.read_text().splitlines()
    kept = lines[:2] + lines[3:-1]
    (tmp_path / "gap.csv").write_text("\n".join(kept + [f"{TRAILER}{len(kept) - 1}"]) + "\n")
    with pytest.raises(CoverageError):
        aggregate(tmp_path / "gap.csv", "all")


def test_config_file(tmp_path):
    cfg = tmp_path / "grid.yaml"
    cfg.write_text("kappa_values: [0.0, 1.0]\np_f_values: [0.1]\np_b_values: [0.5]\n"
                   "dmaxmax_values: [8]\nvariants: [counting, non-counting]\nturns_target: 100\n")
    spec = GridSpec.from_file(cfg, base_seed=3)
    assert spec.base_seed == 3
    assert spec.variants == [Variant.COUNTING, Variant.NON_COUNTING]
    assert len(grid(spec)) == 4
    cfg.write_text("kappas: [0.0]\n")
    with pytest.raises(ValueError, match="unknown keys"):
        GridSpec.from_file(cfg)


def test_full_sweep_shape(full_sweep):
    rows = full_sweep["rows"]
    assert len(rows) == 22_032
    assert all(r["turns"] == r["drained_free"] + r["drained_blocked"] + r["direction_changes"]
               for r in rows)
    lines = full_sweep["path"].read_text().splitlines()
    rnd = random.Random(1)
    for i in rnd.sample(range(len(rows)), 25):
        r = engine.run(params_from_row(rows[i]))
        assert ",".join(r.csv_row()) == lines[i + 1]


def test_full_sweep_aggregate_keys(full_sweep):
    every = aggregate(full_sweep["path"], "all")
    likely = aggregate(full_sweep["path"], "likely")
    assert len(every) == len(likely) == 2 * 9 * 51
    assert {r["n_combos"] for r in likely} == {16}
    assert {r["n_combos"] for r in every} == {24}
