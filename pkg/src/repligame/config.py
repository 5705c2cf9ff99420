"""Scenario configuration: flat ``key = value`` documents validated into pydantic models."""

import re
from pathlib import Path
from typing import Any, Literal

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .analysis import Scenario
from .errors import ConfigParseError, ConfigValidationError
from .grid import GridSpec, InitialKind, TerminalKind, build_grid
from .mfg import FixedPointConfig
from .rates import TransitionRateSpec, normalize_family
from .utilities import EnergyParams, KernelKind

ExperimentKind = Literal["grd", "mfg", "delta_sweep", "refinement", "longrun", "equilibrium"]

_EXPERIMENTS: dict[str, ExperimentKind] = {
    "grd": "grd",
    "mfg": "mfg",
    "deltasweep": "delta_sweep",
    "sweep": "delta_sweep",
    "refinement": "refinement",
    "longrun": "longrun",
    "equilibrium": "equilibrium",
}

_SECTION_RE = re.compile(r"^\[\s*([A-Za-z_][A-Za-z0-9_]*)\s*\]$")
_KEY_RE = re.compile(r"^[A-Za-z_][A-Za-z0-9_]*$")


def _split_list(value: Any) -> Any:
    if isinstance(value, str):
        return [item.strip() for item in value.split(",") if item.strip()]
    return value


def _none_literal(value: Any) -> Any:
    if isinstance(value, str) and value.strip().lower() in ("none", ""):
        return None
    return value


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True, populate_by_name=True)


class RateSection(_Section):
    family: str = "power"
    q: float = 1.0
    truncation: float | None = None

    parse_none = field_validator("truncation", mode="before")(_none_literal)

    @field_validator("family")
    @classmethod
    def check_family(cls, value: str) -> str:
        return normalize_family(value)

    @model_validator(mode="after")
    def check_spec(self) -> "RateSection":
        self.to_spec()
        return self

    def to_spec(self) -> TransitionRateSpec:
        return TransitionRateSpec(self.family, self.q, self.truncation)


class KernelSection(_Section):
    kind: KernelKind = "concave"
    alpha: float = 0.5
    sigma: float = 1.25
    w: float = 1.25
    x_bar: float = 0.5

    @model_validator(mode="after")
    def check_energy(self) -> "KernelSection":
        self.energy_params()
        return self

    def energy_params(self) -> EnergyParams:
        return EnergyParams(alpha=self.alpha, sigma=self.sigma, w=self.w, x_bar=self.x_bar)


class InitSection(_Section):
    kind: InitialKind = "uniform"


class TerminalSection(_Section):
    kind: TerminalKind = "zero"
    psi_bar: float = 0.0

    @field_validator("kind", mode="before")
    @classmethod
    def expand_kind(cls, value: Any) -> Any:
        return "linear_gain" if value == "linear" else value

    @field_validator("psi_bar")
    @classmethod
    def check_psi_bar(cls, value: float) -> float:
        if value < 0:
            raise ValueError(f"psi_bar >= 0 required, got {value}")
        return value


class GridSection(_Section):
    big_i: int = Field(10000, alias="I")
    big_j: int = Field(200, alias="J")
    t_end: float = Field(100.0, alias="T")

    @model_validator(mode="after")
    def check_grid(self) -> "GridSection":
        self.to_grid()
        return self

    def to_grid(self) -> GridSpec:
        return build_grid(self.big_i, self.big_j, self.t_end)


class FixedPointSection(_Section):
    relaxation: float = 0.25
    max_iters: int = 1000
    tol: float = 1e-9
    divergence_cap: float = 1e6
    enforce_stability: bool = False

    @model_validator(mode="after")
    def check_fixed_point(self) -> "FixedPointSection":
        self.to_config()
        return self

    def to_config(self) -> FixedPointConfig:
        return FixedPointConfig(**self.model_dump())


class LongrunSection(_Section):
    x_bars: tuple[float, ...] = (0.1, 0.8)
    times: tuple[float, ...] = (250.0, 1000.0, 4000.0)
    dt: float = 0.1
    dx: float = 0.01

    split_lists = field_validator("x_bars", "times", mode="before")(_split_list)

    @field_validator("x_bars")
    @classmethod
    def check_x_bars(cls, value: tuple[float, ...]) -> tuple[float, ...]:
        if not value or any(not 0 < x <= 1 for x in value):
            raise ValueError("0 < x_bar <= 1 required for every entry")
        return value

    @field_validator("times")
    @classmethod
    def check_times(cls, value: tuple[float, ...]) -> tuple[float, ...]:
        if not value or any(t < 0 for t in value):
            raise ValueError("times >= 0 required")
        return value

    @field_validator("dt", "dx")
    @classmethod
    def check_steps(cls, value: float) -> float:
        if not value > 0:
            raise ValueError(f"step > 0 required, got {value}")
        return value


class RefinementSection(_Section):
    levels: int = 5

    @field_validator("levels")
    @classmethod
    def check_levels(cls, value: int) -> int:
        if value < 3:
            raise ValueError(f"levels >= 3 required, got {value}")
        return value


class ScenarioConfig(_Section):
    """A validated scenario document."""

    experiment: ExperimentKind = "grd"
    output_path: Path = Path("output")
    delta: float = 1.0
    deltas: tuple[float, ...] = (0.01, 0.1, 1.0, 10.0, 100.0)
    rate: RateSection = Field(default_factory=RateSection)
    kernel: KernelSection = Field(default_factory=KernelSection)
    init: InitSection = Field(default_factory=InitSection)
    terminal: TerminalSection = Field(default_factory=TerminalSection)
    grid: GridSection = Field(default_factory=GridSection)
    fixed_point: FixedPointSection = Field(default_factory=FixedPointSection)
    longrun: LongrunSection = Field(default_factory=LongrunSection)
    refinement: RefinementSection = Field(default_factory=RefinementSection)

    split_deltas = field_validator("deltas", mode="before")(_split_list)

    @field_validator("experiment", mode="before")
    @classmethod
    def normalize_experiment(cls, value: Any) -> Any:
        if isinstance(value, str):
            key = value.strip().lower().replace("_", "").replace("-", "")
            return _EXPERIMENTS.get(key, value)
        return value

    @field_validator("delta")
    @classmethod
    def check_delta(cls, value: float) -> float:
        if not value > 0:
            raise ValueError(f"delta > 0 required, got {value}")
        return value

    @field_validator("deltas")
    @classmethod
    def check_deltas(cls, value: tuple[float, ...]) -> tuple[float, ...]:
        if not value:
            raise ValueError("deltas must list at least one discount rate")
        if any(not d > 0 for d in value):
            raise ValueError("delta > 0 required for every entry of deltas")
        if len(set(value)) != len(value):
            raise ValueError("deltas must be distinct")
        return value

    def to_scenario(self, threads: int | None = None) -> Scenario:
        deltas = (self.delta,) if self.experiment == "mfg" else tuple(sorted(self.deltas))
        return Scenario(
            kernel_kind=self.kernel.kind,
            rate=self.rate.to_spec(),
            grid=self.grid.to_grid(),
            deltas=deltas,
            init=self.init.kind,
            terminal=self.terminal.kind,
            psi_bar=self.terminal.psi_bar,
            energy=self.kernel.energy_params(),
            fixed_point=self.fixed_point.to_config(),
            threads=threads,
        )


_SECTION_NAMES = ("rate", "kernel", "init", "terminal", "grid", "fixed_point", "longrun", "refinement")


def _parse_lines(text: str) -> dict[str, Any]:
    document: dict[str, Any] = {}
    target = document
    seen_sections: set[str] = set()
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("["):
            match = _SECTION_RE.match(line)
            if not match:
                raise ConfigParseError(line_no, f"malformed section header {raw.strip()!r}")
            name = match.group(1)
            if name in seen_sections:
                raise ConfigParseError(line_no, f"section [{name}] appears twice")
            seen_sections.add(name)
            target = document.setdefault(name, {})
            continue
        key, sep, value = line.partition("=")
        key = key.strip()
        if not sep or not _KEY_RE.match(key):
            raise ConfigParseError(line_no, f"expected 'key = value', got {raw.strip()!r}")
        if key in target:
            raise ConfigParseError(line_no, f"duplicate key {key!r}")
        target[key] = value.strip()
    return document


def _describe(error: ValidationError) -> str:
    first = error.errors()[0]
    location = ".".join(str(part) for part in first["loc"]) or "config"
    message = first["msg"].removeprefix("Value error, ")
    extra = len(error.errors()) - 1
    suffix = f" (and {extra} more)" if extra else ""
    return f"{location}: {message}{suffix}"


def parse_config(text: str) -> ScenarioConfig:
    """Parse and validate a scenario document.

    Raises:
        ConfigParseError: on a malformed line, with its line number
        ConfigValidationError: on an unknown key or a violated invariant
    """
    document = _parse_lines(text)
    try:
        return ScenarioConfig.model_validate(document)
    except ValidationError as e:
        raise ConfigValidationError(_describe(e)) from e


def load_config(path: str | Path) -> ScenarioConfig:
    return parse_config(Path(path).read_text(encoding="utf-8"))


def _render_value(value: Any) -> str:
    if value is None:
        return "none"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, (tuple, list)):
        return ", ".join(_render_value(item) for item in value)
    return str(value)


def render(config: ScenarioConfig) -> str:
    """Serialize ``config`` so that ``parse_config(render(config)) == config``."""
    lines = [
        f"experiment = {config.experiment}",
        f"output_path = {config.output_path}",
        f"delta = {_render_value(config.delta)}",
        f"deltas = {_render_value(config.deltas)}",
    ]
    for name in _SECTION_NAMES:
        section: _Section = getattr(config, name)
        lines.append("")
        lines.append(f"[{name}]")
        for key, value in section.model_dump(by_alias=True).items():
            lines.append(f"{key} = {_render_value(value)}")
    return "\n".join(lines) + "\n"
