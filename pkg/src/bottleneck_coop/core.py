"""Domain types shared by the simulator, protocol and sweep modules."""

from __future__ import annotations

import enum
from dataclasses import asdict, dataclass, field, fields, replace
from typing import Optional


class ParameterError(ValueError):
    """Raised when a scenario parameter violates its declared range."""


class VehicleKind(enum.Enum):
    HUMAN = "human"
    CAV = "cav"


class Lane(enum.Enum):
    FREE = "free"
    BLOCKED = "blocked"

    @property
    def opposite(self) -> "Lane":
        return Lane.BLOCKED if self is Lane.FREE else Lane.FREE


class Variant(enum.Enum):
    COUNTING = "counting"
    NON_COUNTING = "non-counting"
    BASELINE = "baseline"

    @classmethod
    def parse(cls, value: "str | Variant") -> "Variant":
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower().replace("_", "-")
        aliases = {"noncounting": "non-counting", "non-connected": "baseline"}
        key = aliases.get(key, key)
        for member in cls:
            if member.value == key:
                return member
        raise ParameterError(f"unknown variant {value!r}")


@dataclass(frozen=True)
class Vehicle:
    id: int
    kind: VehicleKind
    dmax: Optional[int] = None
    is_cav: bool = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if (self.kind is VehicleKind.CAV) != (self.dmax is not None):
            raise ValueError("dmax must be set for CAVs and only for CAVs")
        object.__setattr__(self, "is_cav", self.kind is VehicleKind.CAV)


@dataclass(frozen=True)
class FlowState:
    direction: Lane = Lane.FREE
    first_after_change: bool = False


DEFAULT_COMM_RANGE = 20
DEFAULT_TURNS = 50_000


@dataclass(frozen=True)
class ScenarioParams:
    kappa: float
    p_f: float
    p_b: float
    dmaxmax: int
    variant: Variant = Variant.COUNTING
    comm_range: int = DEFAULT_COMM_RANGE
    turns_target: int = DEFAULT_TURNS
    seed: int = 0

    def with_seed(self, seed: int) -> "ScenarioParams":
        return replace(self, seed=seed)

    def to_dict(self) -> dict:
        out = asdict(self)
        out["variant"] = self.variant.value
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "ScenarioParams":
        known = {f.name for f in fields(cls)}
        kwargs = {k: v for k, v in data.items() if k in known}
        kwargs["variant"] = Variant.parse(kwargs.get("variant", Variant.COUNTING))
        return cls(**kwargs)


def validate_params(params: ScenarioParams) -> ScenarioParams:
    """Return ``params`` unchanged if every field is in range.

    Raises :class:`ParameterError` naming the first violated constraint.
    """
    if not 0.0 <= params.kappa <= 1.0:
        raise ParameterError("kappa must be in [0, 1]")
    if not 0.0 <= params.p_f <= 1.0:
        raise ParameterError("p_f must be in [0, 1]")
    if not params.p_b > 0:
        raise ParameterError("p_b must be > 0")
    if params.p_b > 1.0:
        raise ParameterError("p_b must be <= 1")
    d = params.dmaxmax
    if isinstance(d, bool) or not isinstance(d, int) or d % 2 or not 4 <= d <= 20:
        raise ParameterError("dmaxmax must be even in [4,20]")
    if not isinstance(params.variant, Variant):
        raise ParameterError("variant must be a Variant")
    if not isinstance(params.comm_range, int) or params.comm_range < 1:
        raise ParameterError("comm_range must be a positive integer")
    if not isinstance(params.turns_target, int) or params.turns_target < 1:
        raise ParameterError("turns_target must be a positive integer")
    if not isinstance(params.seed, int) or not 0 <= params.seed < 2**64:
        raise ParameterError("seed must be a 64-bit unsigned integer")
    return params
