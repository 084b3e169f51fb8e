"""AST for combinatorial specifications."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Union

#: Name of the implicit size atom. Constructor weights are exponents of it.
SIZE = "size"

OPERATORS = ("Seq", "MSet", "MSet1", "Cycle")


class SpecError(ValueError):
    """Malformed or inconsistent specification."""

    def __init__(self, message: str, line: int = 0, col: int = 0):
        self.line = line
        self.col = col
        where = f" at line {line}, column {col}" if line else ""
        super().__init__(f"{message}{where}")


class NotWellFounded(SpecError):
    def __init__(self, name: str, reason: str):
        self.name = name
        self.reason = reason
        super().__init__(f"class {name!r} is not well-founded: {reason}")


@dataclass(frozen=True)
class ClassRef:
    name: str


@dataclass(frozen=True)
class MarkerRef:
    name: str


@dataclass(frozen=True)
class Op:
    """Pólya or sequence operator applied to a (possibly generated) class."""

    kind: str
    arg: str


Factor = Union[ClassRef, MarkerRef, Op]


@dataclass(frozen=True)
class Alternative:
    factors: tuple = ()
    weight: int = 0
    constructor: Optional[str] = None
    frequency: Optional[float] = None
    # weight-0 marker generated from a ``[f]`` annotation
    marker: Optional[str] = None

    @property
    def class_refs(self) -> list[str]:
        return [f.name for f in self.factors if isinstance(f, ClassRef)]

    @property
    def operators(self) -> list[Op]:
        return [f for f in self.factors if isinstance(f, Op)]

    @property
    def marker_exponent(self) -> int:
        """Occurrences of the frequency marker contributed by this alternative.

        Frequencies are shares of total size, so the marker is raised to the
        alternative's weight (or 1 for weightless alternatives).
        """
        return max(self.weight, 1)

    def is_atomic(self) -> bool:
        return not any(isinstance(f, (ClassRef, Op)) for f in self.factors)


@dataclass(frozen=True)
class ClassDef:
    alternatives: tuple


@dataclass(frozen=True)
class Marker:
    name: str
    frequency: Optional[float] = None
    implicit: bool = False


@dataclass
class SpecAst:
    classes: dict = field(default_factory=dict)
    markers: dict = field(default_factory=dict)
    root: str = ""

    @property
    def atoms(self) -> dict:
        return {SIZE: 1}

    def is_generated(self, name: str) -> bool:
        return name.startswith("_")

    def targets(self) -> dict:
        """Marker name -> target frequency, for annotated markers only."""
        return {m.name: m.frequency for m in self.markers.values() if m.frequency is not None}

    def alternatives(self):
        for name, cdef in self.classes.items():
            for i, alt in enumerate(cdef.alternatives):
                yield name, i, alt
