"""Domain types for material node graphs."""
from __future__ import annotations

import re
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Mapping, Optional, Union

NAME_RE = re.compile(r"[a-z][a-z0-9_]*\Z")

CHANNELS = ("basecolor", "normal", "roughness", "metallic", "height")


class SignalType(str, Enum):
    GRAYSCALE = "grayscale"
    COLOR = "color"


# Slot typing markers beyond the two concrete signal types.
ANY = "any"  # input accepting either type


@dataclass(frozen=True)
class Match:
    """Slot type equal to whatever is connected to input ``slot``."""

    slot: str


@dataclass(frozen=True)
class Free:
    """Output type chosen per node instance (declared in the node's outputs)."""

    default: SignalType = SignalType.COLOR


InputType = Union[SignalType, str, Match]
OutputType = Union[SignalType, Match, Free]

CHANNEL_TYPES = {
    "basecolor": SignalType.COLOR,
    "normal": SignalType.COLOR,
    "roughness": SignalType.GRAYSCALE,
    "metallic": SignalType.GRAYSCALE,
    "height": SignalType.GRAYSCALE,
}


@dataclass(frozen=True)
class InputSlot:
    name: str
    type: InputType
    required: bool = True


@dataclass(frozen=True)
class OutputSlot:
    name: str
    type: OutputType

    @property
    def polymorphic(self) -> bool:
        return not isinstance(self.type, SignalType)


@dataclass(frozen=True)
class ParamSpec:
    """Schema entry for one node parameter.

    ``kind`` is one of ``int``, ``float``, ``enum`` or ``bool``; ``arity`` > 1
    makes it a tuple parameter. ``lo``/``hi`` bound every component.
    """

    kind: str
    default: Any
    arity: int = 1
    lo: Optional[float] = None
    hi: Optional[float] = None
    continuous: bool = False
    choices: tuple = ()


@dataclass(frozen=True)
class NodeTypeSpec:
    type_name: str
    inputs: tuple = ()
    outputs: tuple = ()
    params: Mapping[str, ParamSpec] = field(default_factory=dict)
    external: bool = False
    evaluable: bool = True

    @property
    def is_generator(self) -> bool:
        return not self.inputs

    def input(self, name: str) -> Optional[InputSlot]:
        for slot in self.inputs:
            if slot.name == name:
                return slot
        return None

    def output(self, name: str) -> Optional[OutputSlot]:
        for slot in self.outputs:
            if slot.name == name:
                return slot
        return None


@dataclass(frozen=True)
class Connection:
    src_node: str
    src_slot: str
    dst_slot: str


@dataclass(frozen=True)
class NodeDef:
    name: str
    type_name: str
    params: Mapping[str, Any] = field(default_factory=dict)
    connections: tuple = ()
    output_types: Mapping[str, SignalType] = field(default_factory=dict)
    subgraph: Optional["MaterialGraph"] = None

    def connection(self, dst_slot: str) -> Optional[Connection]:
        for c in self.connections:
            if c.dst_slot == dst_slot:
                return c
        return None

    def primary_output(self) -> Optional[str]:
        return next(iter(self.output_types), None)


@dataclass(frozen=True)
class MaterialGraph:
    """Topologically ordered node list plus PBR channel bindings.

    ``outputs`` maps channel -> (node, slot). ``extra_outputs`` holds bindings
    for non-PBR channels read from verbose documents; preprocessing drops them
    and the compact format cannot express them.
    """

    nodes: tuple = ()
    outputs: Mapping[str, tuple] = field(default_factory=dict)
    extra_outputs: Mapping[str, tuple] = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.nodes)

    def node(self, name: str) -> Optional[NodeDef]:
        for v in self.nodes:
            if v.name == name:
                return v
        return None

    def index(self) -> dict:
        return {v.name: v for v in self.nodes}

    def names(self) -> list:
        return [v.name for v in self.nodes]


class ErrorCode(str, Enum):
    TOPOLOGY_VIOLATION = "TOPOLOGY_VIOLATION"
    TYPE_MISMATCH = "TYPE_MISMATCH"
    UNKNOWN_SOURCE = "UNKNOWN_SOURCE"
    UNKNOWN_SLOT = "UNKNOWN_SLOT"
    UNKNOWN_PARAM = "UNKNOWN_PARAM"
    BAD_PARAM_VALUE = "BAD_PARAM_VALUE"
    DUPLICATE_NAME = "DUPLICATE_NAME"
    UNBOUND_REQUIRED_INPUT = "UNBOUND_REQUIRED_INPUT"
    UNKNOWN_TYPE = "UNKNOWN_TYPE"


@dataclass(frozen=True)
class Issue:
    code: ErrorCode
    where: str  # node name or output channel
    message: str
    # slot-level detail used by repair
    slot: Optional[str] = None
    key: Optional[str] = None

    def __str__(self) -> str:
        return f"{self.code.value} [{self.where}] {self.message}"


@dataclass(frozen=True)
class ValidationReport:
    errors: tuple = ()

    @property
    def ok(self) -> bool:
        return not self.errors

    def codes(self) -> set:
        return {e.code for e in self.errors}

    def __str__(self) -> str:
        if self.ok:
            return "ok"
        return "\n".join(str(e) for e in self.errors)
