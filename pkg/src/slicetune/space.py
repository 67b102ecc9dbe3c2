"""Knob search space: specs, configurations, sampling and distances.

The knob order of a :class:`ConfigSpace` is fixed for a session and defines
the feature-vector layout used by the surrogate forest.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass
from typing import Any, Iterable, Sequence

import numpy as np

NUMERIC_CONTINUOUS = "numeric-continuous"
NUMERIC_INTEGER = "numeric-integer"
CATEGORICAL = "categorical"

_KINDS = (NUMERIC_CONTINUOUS, NUMERIC_INTEGER, CATEGORICAL)


@dataclass(frozen=True)
class KnobSpec:
    """A single tunable knob: numeric (continuous/integer) or categorical."""

    name: str
    kind: str
    lower: float | None = None
    upper: float | None = None
    choices: tuple[Any, ...] | None = None
    default: Any = None
    scale: str = "linear"

    def __post_init__(self) -> None:
        if self.kind not in _KINDS:
            raise ValueError(f"unknown knob kind {self.kind!r}")
        if self.scale not in ("linear", "logarithmic"):
            raise ValueError(f"unknown scale {self.scale!r}")
        if self.is_categorical:
            if not self.choices:
                raise ValueError(f"knob {self.name}: choice list must be non-empty")
            if len(set(self.choices)) != len(self.choices):
                raise ValueError(f"knob {self.name}: duplicate choices")
            if self.default not in self.choices:
                raise ValueError(f"knob {self.name}: default not among choices")
        else:
            if self.lower is None or self.upper is None:
                raise ValueError(f"knob {self.name}: numeric knob needs min/max")
            if not self.lower < self.upper:
                raise ValueError(f"knob {self.name}: min must be < max")
            if self.scale == "logarithmic" and self.lower <= 0:
                raise ValueError(f"knob {self.name}: log scale requires min > 0")
            if self.default is None or not self.lower <= self.default <= self.upper:
                raise ValueError(f"knob {self.name}: default outside range")
            if self.kind == NUMERIC_INTEGER and round(self.default) != self.default:
                raise ValueError(f"knob {self.name}: integer knob needs integer default")

    @property
    def is_categorical(self) -> bool:
        return self.kind == CATEGORICAL

    @property
    def is_numeric(self) -> bool:
        return not self.is_categorical

    def to_unit(self, value: Any) -> float:
        """Map a native value to [0, 1] in the knob's sampling scale."""
        if self.is_categorical:
            raise TypeError("to_unit is only defined for numeric knobs")
        if self.scale == "logarithmic":
            lo, hi = math.log(self.lower), math.log(self.upper)
            return (math.log(value) - lo) / (hi - lo)
        return (value - self.lower) / (self.upper - self.lower)

    def from_unit(self, u: float) -> Any:
        """Inverse of :meth:`to_unit`; integer knobs round ties toward the lower value."""
        if self.is_categorical:
            raise TypeError("from_unit is only defined for numeric knobs")
        if self.scale == "logarithmic":
            lo, hi = math.log(self.lower), math.log(self.upper)
            value = math.exp(lo + u * (hi - lo))
        else:
            value = self.lower + u * (self.upper - self.lower)
        value = min(max(value, self.lower), self.upper)
        if self.kind == NUMERIC_INTEGER:
            value = int(math.ceil(value - 0.5))
            value = min(max(value, int(self.lower)), int(self.upper))
        return value

    def validate_value(self, value: Any) -> None:
        if self.is_categorical:
            if value not in self.choices:
                raise ValueError(f"knob {self.name}: {value!r} not among choices")
        else:
            if not self.lower <= value <= self.upper:
                raise ValueError(f"knob {self.name}: {value!r} outside range")
            if self.kind == NUMERIC_INTEGER and round(value) != value:
                raise ValueError(f"knob {self.name}: {value!r} is not an integer")


@dataclass(frozen=True)
class Configuration:
    """A concrete knob assignment, aligned to the owning space's knob order."""

    id: int
    values: tuple[Any, ...]

    def as_dict(self, space: "ConfigSpace") -> dict[str, Any]:
        return {k.name: v for k, v in zip(space.knobs, self.values)}


class ConfigSpace:
    """Ordered, immutable list of knob specs plus a configuration id counter."""

    def __init__(self, knobs: Sequence[KnobSpec]):
        knobs = tuple(knobs)
        names = [k.name for k in knobs]
        if len(set(names)) != len(names):
            raise ValueError("knob names must be unique")
        if not knobs:
            raise ValueError("space must contain at least one knob")
        self.knobs = knobs
        self._by_name = {k.name: k for k in knobs}
        self._ids = itertools.count()

    def __len__(self) -> int:
        return len(self.knobs)

    def __getitem__(self, name: str) -> KnobSpec:
        return self._by_name[name]

    def configuration(self, values: Iterable[Any]) -> Configuration:
        """Validate and wrap a value tuple, assigning a fresh id."""
        values = tuple(values)
        if len(values) != len(self.knobs):
            raise ValueError("value count does not match knob count")
        for knob, value in zip(self.knobs, values):
            knob.validate_value(value)
        return Configuration(id=next(self._ids), values=values)

    def configuration_from_dict(self, mapping: dict[str, Any]) -> Configuration:
        return self.configuration(mapping[k.name] for k in self.knobs)

    def default_configuration(self) -> Configuration:
        return self.configuration(k.default for k in self.knobs)


def load_space(path: str) -> ConfigSpace:
    """Parse a knob-space file: a JSON array of knob objects.

    Each object carries ``name``, ``kind`` (``numeric-continuous``,
    ``numeric-integer`` or ``categorical``), ``min``/``max`` or ``choices``,
    ``default`` and an optional ``scale`` (``linear`` or ``logarithmic``).
    """
    with open(path) as fh:
        raw = json.load(fh)
    if not isinstance(raw, list):
        raise ValueError("knob-space file must contain a JSON array")
    knobs = []
    for obj in raw:
        knobs.append(
            KnobSpec(
                name=obj["name"],
                kind=obj["kind"],
                lower=obj.get("min"),
                upper=obj.get("max"),
                choices=tuple(obj["choices"]) if "choices" in obj else None,
                default=obj["default"],
                scale=obj.get("scale", "linear"),
            )
        )
    return ConfigSpace(knobs)


def sample_lhs(space: ConfigSpace, n: int, seed: int) -> list[Configuration]:
    """Latin hypercube sample of ``n`` configurations.

    Per numeric knob the samples occupy ``n`` distinct equal-probability strata
    of the knob's sampling scale; categorical knobs draw uniformly via a
    stratified unit sample mapped onto the choice list.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = np.random.default_rng(seed)
    columns = []
    for knob in space.knobs:
        perm = rng.permutation(n)
        unit = (perm + rng.random(n)) / n
        if knob.is_categorical:
            k = len(knob.choices)
            columns.append([knob.choices[min(int(u * k), k - 1)] for u in unit])
        else:
            columns.append([knob.from_unit(u) for u in unit])
    return [space.configuration(values) for values in zip(*columns)]


def sample_uniform(space: ConfigSpace, n: int, rng: np.random.Generator) -> list[Configuration]:
    """Uniform draw per knob in its sampling scale (categorical: uniform choice)."""
    out = []
    for _ in range(n):
        values = []
        for knob in space.knobs:
            if knob.is_categorical:
                values.append(knob.choices[rng.integers(len(knob.choices))])
            else:
                values.append(knob.from_unit(rng.random()))
        out.append(space.configuration(values))
    return out


def gower_distance(a: Configuration, b: Configuration, space: ConfigSpace) -> float:
    """Mean per-knob distance in [0, 1].

    Numeric knobs contribute the range-normalized absolute difference computed
    in the knob's sampling scale; categorical knobs contribute 0/1 mismatch.
    """
    total = 0.0
    for knob, va, vb in zip(space.knobs, a.values, b.values):
        if knob.is_categorical:
            total += 0.0 if va == vb else 1.0
        else:
            total += abs(knob.to_unit(va) - knob.to_unit(vb))
    return total / len(space.knobs)


def set_similarity(theta: Configuration, labeled: Iterable[Configuration], space: ConfigSpace) -> float:
    """Max over the labeled set of 1 / (1 + Gower distance)."""
    labeled = list(labeled)
    if not labeled:
        raise ValueError("no labeled configurations")
    return max(1.0 / (1.0 + gower_distance(theta, d, space)) for d in labeled)


def encode(theta: Configuration, space: ConfigSpace) -> np.ndarray:
    """Numeric feature vector: unit-scale values, categorical choice indices."""
    out = np.empty(len(space.knobs))
    for i, (knob, value) in enumerate(zip(space.knobs, theta.values)):
        if knob.is_categorical:
            out[i] = knob.choices.index(value)
        else:
            out[i] = knob.to_unit(value)
    return out
