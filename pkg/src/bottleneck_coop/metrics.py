"""Flow-balance metric, run summaries and aggregation over behaviour combos."""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass
from typing import Iterable

from .core import ScenarioParams

SWEEP_COLUMNS = (
    "variant", "kappa", "p_f", "p_b", "dmaxmax", "seed", "turns",
    "drained_free", "drained_blocked", "direction_changes", "phi",
    "episode_count", "mean_blocked_drains_per_episode",
)
AGGREGATE_COLUMNS = ("variant", "dmaxmax", "kappa", "mean_phi", "n_combos")


class CoverageError(ValueError):
    """Some aggregation keys lack required (p_f, p_b) combinations."""

    def __init__(self, missing: dict):
        self.missing = missing
        lines = [f"{key}: missing {sorted(combos)}" for key, combos in sorted(missing.items())]
        super().__init__("incomplete coverage:\n" + "\n".join(lines))


def flow_balance(drained_free: int, drained_blocked: int) -> float:
    """+1 when only the free lane drains, -1 when only the blocked lane does."""
    total = drained_free + drained_blocked
    if total < 1:
        raise ValueError("flow balance is undefined without drained vehicles")
    return 2 * drained_free / total - 1


@dataclass(frozen=True)
class RunResult:
    params: ScenarioParams
    drained_free: int
    drained_blocked: int
    direction_changes: int
    phi: float
    episode_count: int
    mean_blocked_drains_per_episode: float
    mean_free_drains_per_episode: float
    mean_free_drains_per_free_phase: float
    seed: int
    rng_draws: int

    @classmethod
    def build(cls, params, drained_free, drained_blocked, direction_changes, episode_count,
              blocked_drains_total, free_drains_total, finished_blocked_phases,
              free_phases, rng_draws) -> "RunResult":
        n = finished_blocked_phases
        return cls(
            params=params,
            drained_free=int(drained_free),
            drained_blocked=int(drained_blocked),
            direction_changes=int(direction_changes),
            phi=flow_balance(int(drained_free), int(drained_blocked)),
            episode_count=int(episode_count),
            mean_blocked_drains_per_episode=blocked_drains_total / n if n else 0.0,
            mean_free_drains_per_episode=free_drains_total / n if n else 0.0,
            mean_free_drains_per_free_phase=drained_free / free_phases if free_phases else 0.0,
            seed=params.seed,
            rng_draws=int(rng_draws),
        )

    @property
    def turns(self) -> int:
        return self.drained_free + self.drained_blocked + self.direction_changes

    def to_dict(self) -> dict:
        return {
            "params": self.params.to_dict(),
            "drained_free": self.drained_free,
            "drained_blocked": self.drained_blocked,
            "direction_changes": self.direction_changes,
            "phi": self.phi,
            "episode_count": self.episode_count,
            "mean_blocked_drains_per_episode": self.mean_blocked_drains_per_episode,
            "mean_free_drains_per_episode": self.mean_free_drains_per_episode,
            "mean_free_drains_per_free_phase": self.mean_free_drains_per_free_phase,
            "seed": self.seed,
            "rng_draws": self.rng_draws,
        }

    def csv_row(self) -> list[str]:
        p = self.params
        values = (p.variant.value, p.kappa, p.p_f, p.p_b, p.dmaxmax, self.seed, p.turns_target,
                  self.drained_free, self.drained_blocked, self.direction_changes, self.phi,
                  self.episode_count, self.mean_blocked_drains_per_episode)
        return [v if isinstance(v, str) else repr(v) for v in values]


def is_likely(p_f: float, p_b: float) -> bool:
    """Assertive free-lane drivers, careful blocked-lane drivers."""
    return p_f < p_b


def aggregate_likely(results: Iterable, likely_only: bool = True) -> dict:
    """Mean phi per ``(variant, dmaxmax, kappa)`` over the behaviour combos.

    ``results`` may hold :class:`RunResult` objects or plain row dicts with
    the sweep columns. Repeated runs of one combo are averaged first so every
    combo weighs the same. Returns ``{key: (mean_phi, n_combos)}``.
    """
    per_combo = defaultdict(list)
    all_combos = set()
    for r in results:
        row = _as_row(r)
        combo = (row["p_f"], row["p_b"])
        if likely_only and not is_likely(*combo):
            continue
        all_combos.add(combo)
        per_combo[(row["variant"], row["dmaxmax"], row["kappa"]), combo].append(row["phi"])

    by_key = defaultdict(dict)
    for (key, combo), phis in per_combo.items():
        by_key[key][combo] = sum(phis) / len(phis)

    missing = {key: all_combos - set(combos) for key, combos in by_key.items()
               if all_combos - set(combos)}
    if missing:
        raise CoverageError(missing)
    return {key: (sum(c.values()) / len(c), len(c)) for key, c in sorted(by_key.items())}


def _as_row(r) -> dict:
    if isinstance(r, RunResult):
        p = r.params
        return {"variant": p.variant.value, "dmaxmax": p.dmaxmax, "kappa": p.kappa,
                "p_f": p.p_f, "p_b": p.p_b, "phi": r.phi}
    return r
