"""JSON pipeline configuration.

Lengths are micrometres in the file and are converted to database units
once, against the units of the input library.  Unknown keys are rejected
and every accepted config survives load -> dump -> load unchanged.
"""

from __future__ import annotations

import json
import os
import re
from typing import Annotated, Literal, Optional, Union

from pydantic import (BaseModel, ConfigDict, Field, PrivateAttr, ValidationError,
                      field_validator, model_validator)

from .compose import LayerStyle
from .gdsii import GdsUnits, LayerKey
from .meerkat import ArtRules

_LAYER = re.compile(r"^(\d+)/(\d+)$")
_COLOR = re.compile(r"^#[0-9a-fA-F]{6}$")
Rect4 = Annotated[list[float], Field(min_length=4, max_length=4)]


class ConfigError(ValueError):
    pass


def parse_layer(text: str) -> LayerKey:
    """
    >>> parse_layer("134/0")
    LayerKey(layer=134, datatype=0)
    """
    m = _LAYER.match(text)
    if not m:
        raise ValueError(f"layer must look like '134/0', got {text!r}")
    return LayerKey(int(m.group(1)), int(m.group(2)))


def parse_color(text: str) -> tuple[int, int, int]:
    return tuple(int(text[i:i + 2], 16) for i in (1, 3, 5))


def um_to_dbu(value: float, units: GdsUnits) -> int:
    dbu = value * 1e-6 / units.meters_per_dbu
    n = round(dbu)
    if abs(dbu - n) > 1e-6 * max(1.0, abs(dbu)):
        raise ConfigError(f"{value} um is not a whole number of database units")
    return int(n)


class _Model(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True, strict=True)


def _check_layer(v: str) -> str:
    parse_layer(v)
    return v


def _check_color(v: str) -> str:
    if not _COLOR.match(v):
        raise ValueError(f"colour must be '#rrggbb', got {v!r}")
    return v.lower()


class RulesConfig(_Model):
    cell_size: float = Field(gt=0)
    gap: float = Field(gt=0)
    min_cells: int = Field(1, ge=1, le=4)
    max_cells: int = Field(4, ge=1, le=4)
    keepout: float = Field(0.0, ge=0)
    density_window: int = Field(8, ge=1)  # in grid cells
    max_density: float = Field(1.0, ge=0, le=1)
    seed: int = Field(0, ge=0, lt=2**64)
    min_width: Optional[float] = Field(None, gt=0)
    min_spacing: Optional[float] = Field(None, gt=0)
    max_width: Optional[float] = Field(None, gt=0)

    def to_rules(self, units: GdsUnits) -> ArtRules:
        opt = (lambda v: None if v is None else um_to_dbu(v, units))
        return ArtRules(um_to_dbu(self.cell_size, units), um_to_dbu(self.gap, units),
                        self.min_cells, self.max_cells, um_to_dbu(self.keepout, units),
                        self.density_window, self.max_density, self.seed,
                        opt(self.min_width), opt(self.min_spacing), opt(self.max_width))


class LogoConfig(_Model):
    path: str
    placement: Rect4  # x0, y0, x1, y1 in um
    rules: RulesConfig
    threshold: int = Field(128, ge=1, le=255)
    verify: bool = True

    @field_validator("placement")
    @classmethod
    def _placement(cls, v):
        if not (v[2] > v[0] and v[3] > v[1]):
            raise ValueError("placement must be [x0, y0, x1, y1] with x1 > x0 and y1 > y0")
        return v


class FrameConfig(_Model):
    nm_per_px: float = Field(gt=0)  # render (tile) resolution
    window: Union[Literal["auto"], Rect4] = "auto"
    supersample: Literal[1, 2, 4, 8] = 4
    max_tile_px: int = Field(250_000_000, ge=64)
    downscale: Literal[1, 2, 4, 8] = 1
    dpi: float = Field(300.0, gt=0)
    part_max_px: Optional[int] = Field(None, ge=1)
    png_level: int = Field(6, ge=0, le=9)

    @field_validator("window")
    @classmethod
    def _window(cls, v):
        if v != "auto" and not (v[2] > v[0] and v[3] > v[1]):
            raise ValueError("window must be 'auto' or [x0, y0, x1, y1] with positive extent")
        return v


class StyleConfig(_Model):
    layer: str
    color: str
    opacity: float = Field(1.0, ge=0, le=1)
    z_order: Optional[int] = None

    _layer = field_validator("layer")(classmethod(lambda cls, v: _check_layer(v)))
    _color = field_validator("color")(classmethod(lambda cls, v: _check_color(v)))

    def to_style(self) -> LayerStyle:
        return LayerStyle(parse_layer(self.layer), parse_color(self.color), self.opacity,
                          self.z_order)


class OutputsConfig(_Model):
    gds_out: Optional[str] = None
    png_out: Optional[str] = None
    pdf_out: Optional[str] = None
    svg_out: Optional[str] = None
    tiles_dir: Optional[str] = None
    metal_gds_out: Optional[str] = None
    art_gds_out: Optional[str] = None


class PipelineConfig(_Model):
    gds_in: str
    top_cell: str
    top_metal: str
    logo: Optional[LogoConfig] = None
    frame: Optional[FrameConfig] = None
    stack: list[StyleConfig] = []
    background: str = "#000000"
    outputs: OutputsConfig = OutputsConfig()

    _base_dir: str = PrivateAttr(default=".")

    _top_metal = field_validator("top_metal")(classmethod(lambda cls, v: _check_layer(v)))
    _background = field_validator("background")(classmethod(lambda cls, v: _check_color(v)))

    @model_validator(mode="after")
    def _stack_order(self):
        # an omitted z_order means "position in the list"
        if any(s.z_order is None for s in self.stack):
            stack = list(s if s.z_order is not None else s.model_copy(update={"z_order": i})
                         for i, s in enumerate(self.stack))
            object.__setattr__(self, "stack", stack)
        z = [s.z_order for s in self.stack]
        if len(set(z)) != len(z):
            raise ValueError("stack z_order values must be unique")
        return self

    # -- helpers ---------------------------------------------------------------

    @property
    def base_dir(self) -> str:
        return self._base_dir

    def resolve(self, path: str) -> str:
        return path if os.path.isabs(path) else os.path.join(self._base_dir, path)

    def output(self, name: str) -> Optional[str]:
        p = getattr(self.outputs, name)
        return None if p is None else self.resolve(p)

    @property
    def top_metal_key(self) -> LayerKey:
        return parse_layer(self.top_metal)

    @property
    def background_rgb(self) -> tuple[int, int, int]:
        return parse_color(self.background)

    def styles(self) -> list[LayerStyle]:
        return [s.to_style() for s in self.stack]

    def dumps(self) -> str:
        return json.dumps(self.model_dump(mode="json"), indent=2) + "\n"


def _format(err: ValidationError) -> str:
    lines = []
    for e in err.errors():
        loc = ".".join(str(p) for p in e["loc"]) or "config"
        msg = e["msg"]
        if e["type"] == "missing":
            msg = f"missing required field '{e['loc'][-1]}'"
        lines.append(f"{loc}: {msg}")
    return "; ".join(lines)


def config_from_dict(data: dict, base_dir: str = ".") -> PipelineConfig:
    try:
        cfg = PipelineConfig.model_validate(data)
    except ValidationError as e:
        raise ConfigError(_format(e)) from None
    cfg._base_dir = base_dir
    return cfg


def loads_config(text: str, base_dir: str = ".") -> PipelineConfig:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(f"invalid JSON: {e}") from None
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    return config_from_dict(data, base_dir)


def load_config(path) -> PipelineConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e.strerror}") from None
    return loads_config(text, os.path.dirname(os.path.abspath(path)))


REQUIRES = {
    "extract": ("outputs.metal_gds_out",),
    "art": ("logo", "outputs.svg_out|outputs.art_gds_out"),
    "merge": ("logo", "outputs.gds_out"),
    "render": ("frame", "stack", "outputs.tiles_dir|$ARTISTIC_TMPDIR"),
    "compose": ("frame", "stack", "outputs.png_out", "outputs.tiles_dir|$ARTISTIC_TMPDIR"),
    "pipeline": ("frame", "stack", "outputs.png_out"),
}


def _present(cfg: PipelineConfig, item: str) -> bool:
    if item.startswith("$"):
        return bool(os.environ.get(item[1:]))
    obj = cfg
    for part in item.split("."):
        obj = getattr(obj, part)
    return bool(obj)


def require(cfg: PipelineConfig, command: str) -> None:
    """Raise ConfigError naming the first field a command needs but lacks."""
    for item in REQUIRES[command]:
        if not any(_present(cfg, alt) for alt in item.split("|")):
            names = " or ".join(f"'{a}'" for a in item.split("|"))
            raise ConfigError(f"command '{command}' requires {names} in the config")
