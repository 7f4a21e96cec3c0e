"""Configuration and run manifests, both YAML.

A configuration file has up to four sections, ``filter``, ``sensor_model``,
``camera`` and ``simulation``; every key missing from the file keeps its
default. The camera is given either by ``width``, ``height`` and
``hfov_deg`` or by ``width``, ``height``, ``fx``, ``fy``, ``cx`` and ``cy``.
"""
import logging
import math
import os
from dataclasses import dataclass
from dataclasses import field
from dataclasses import fields
from dataclasses import replace
from typing import List
from typing import Optional

import yaml

from .errors import ConfigError
from .geometry import CameraIntrinsics
from .localizer import DEFAULT_CAMERA
from .localizer import Mode
from .particle_filter import FilterConfig
from .sensor_models import SensorModelParams
from .simulator import SimConfig


_CAMERA_KEYS = {"width", "height", "hfov_deg", "fx", "fy", "cx", "cy"}
_MANIFEST_KEYS = {"world", "map", "annotations", "sequences", "mode", "output", "config"}

_logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Settings:
    """Every tunable parameter of a run."""

    filter: FilterConfig = field(default_factory=FilterConfig)
    sensor_model: SensorModelParams = field(default_factory=SensorModelParams)
    camera: CameraIntrinsics = DEFAULT_CAMERA
    simulation: SimConfig = field(default_factory=SimConfig)


def _section(cls, values: dict, section: str):
    names = {f.name for f in fields(cls)}
    unknown = set(values) - names
    if unknown:
        raise ConfigError(f"unknown keys in section {section!r}: {', '.join(sorted(unknown))}")
    try:
        return cls(**values)
    except (TypeError, ValueError) as error:
        raise ConfigError(f"invalid section {section!r}: {error}") from error


def _camera(values: dict) -> CameraIntrinsics:
    unknown = set(values) - _CAMERA_KEYS
    if unknown:
        raise ConfigError(f"unknown keys in section 'camera': {', '.join(sorted(unknown))}")
    width = int(values.get("width", DEFAULT_CAMERA.image_width))
    height = int(values.get("height", DEFAULT_CAMERA.image_height))
    try:
        if "fx" in values:
            return CameraIntrinsics(
                float(values["fx"]),
                float(values.get("fy", values["fx"])),
                float(values.get("cx", width / 2.0)),
                float(values.get("cy", height / 2.0)),
                width,
                height,
            )
        return CameraIntrinsics.from_fov(width, height, math.radians(float(values.get("hfov_deg", 65.0))))
    except (TypeError, ValueError) as error:
        raise ConfigError(f"invalid section 'camera': {error}") from error


def parse_config(document: Optional[dict]) -> Settings:
    """Build :class:`Settings` from a parsed configuration document."""
    document = document or {}
    if not isinstance(document, dict):
        raise ConfigError("a configuration must be a mapping of sections")
    unknown = set(document) - {f.name for f in fields(Settings)}
    if unknown:
        raise ConfigError(f"unknown configuration sections: {', '.join(sorted(unknown))}")
    return Settings(
        filter=_section(FilterConfig, document.get("filter") or {}, "filter"),
        sensor_model=_section(SensorModelParams, document.get("sensor_model") or {}, "sensor_model"),
        camera=_camera(document.get("camera") or {}),
        simulation=_section(SimConfig, document.get("simulation") or {}, "simulation"),
    )


def load_config(path=None) -> Settings:
    """Load the configuration file at ``path``, or the defaults without one."""
    if path is None:
        return Settings()
    try:
        with open(path) as _file:
            document = yaml.load(_file, Loader=yaml.FullLoader)
    except OSError as error:
        raise ConfigError(f"cannot read configuration {path}: {error}") from error
    except yaml.YAMLError as error:
        raise ConfigError(f"configuration {path} is not valid YAML: {error}") from error
    settings = parse_config(document)
    _logger.debug("Loaded configuration %s", path)
    return settings


def with_seed(settings: Settings, seed: int) -> Settings:
    """``settings`` with both the filter and the simulation seeded with ``seed``."""
    return replace(
        settings,
        filter=replace(settings.filter, rng_seed=seed),
        simulation=replace(settings.simulation, rng_seed=seed),
    )


@dataclass(frozen=True)
class RunManifest:
    """What a ``run`` processes: the map, the sequences, the mode and where results go."""

    sequences: List[str]
    output: str
    world: Optional[str] = None
    map_image: Optional[str] = None
    annotations: Optional[str] = None
    mode: Mode = Mode.FUSION
    config: Optional[str] = None

    def __post_init__(self):
        """Check that a map is named and every referenced file exists."""
        if not self.sequences:
            raise ConfigError("a manifest needs at least one sequence")
        if (self.world is None) == (self.map_image is None):
            raise ConfigError("a manifest names either a bundled world or a map image")
        if self.map_image is not None and self.annotations is None:
            raise ConfigError("a map image needs its annotation sidecar")
        try:
            object.__setattr__(self, "mode", Mode(self.mode))
        except ValueError:
            raise ConfigError(f"unknown mode {self.mode!r}; use fusion or range_only") from None
        for path in [*self.sequences, self.map_image, self.annotations, self.config]:
            if path is not None and not os.path.isfile(path):
                raise ConfigError(f"manifest refers to missing file {path}")


def load_manifest(path) -> RunManifest:
    """Load a manifest; relative paths are taken relative to the manifest's directory."""
    try:
        with open(path) as _file:
            document = yaml.load(_file, Loader=yaml.FullLoader) or {}
    except OSError as error:
        raise ConfigError(f"cannot read manifest {path}: {error}") from error
    unknown = set(document) - _MANIFEST_KEYS
    if unknown:
        raise ConfigError(f"unknown manifest keys: {', '.join(sorted(unknown))}")

    base = os.path.dirname(os.path.abspath(path))

    def resolve(value):
        return None if value is None else os.path.join(base, value)

    sequences = document.get("sequences") or []
    if isinstance(sequences, str):
        sequences = [sequences]
    return RunManifest(
        sequences=[resolve(s) for s in sequences],
        output=resolve(document.get("output", ".")),
        world=document.get("world"),
        map_image=resolve(document.get("map")),
        annotations=resolve(document.get("annotations")),
        mode=document.get("mode", Mode.FUSION.value),
        config=resolve(document.get("config")),
    )
