"""Pipeline configuration and dataset manifests."""

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path

from .errors import SelfieGenError


class ConfigError(SelfieGenError):
    """Bad configuration or command-line usage (exit code 1)."""


_PATH_FIELDS = (
    "volumes_dir", "images_dir", "typical_dir", "collection_dir", "pool_dir",
    "selfie_upper_map", "selfie_lower_map", "selfie_shoes_map", "taxonomy",
    "semantic_map", "background", "face_image", "upper_image", "lower_image", "shoes_image",
)


@dataclass
class PipelineConfig:
    # inputs
    volumes_dir: str | None = None
    images_dir: str | None = None
    typical_dir: str | None = None
    collection_dir: str | None = None
    pool_dir: str | None = None
    selfie_upper_map: str | None = None
    selfie_lower_map: str | None = None
    selfie_shoes_map: str | None = None
    taxonomy: str | None = None
    semantic_map: str | None = None
    background: str | None = None
    face_image: str | None = None
    upper_image: str | None = None
    lower_image: str | None = None
    shoes_image: str | None = None
    out: str = "out"

    # undistortion pairs
    iso_level: float | None = None
    focal_f0: float = 2.9
    input_distances: list = field(default_factory=lambda: [1.0, 1.3, 1.6, 1.9])
    gt_distance: float = 10.0
    resolution: int = 512
    rotation: list | None = None
    light_direction: list = field(default_factory=lambda: [0.0, 0.0, -1.0])
    ambient: float = 0.3
    diffuse: float = 0.6
    specular: float = 0.1
    shininess: float = 16.0
    background_color: list = field(default_factory=lambda: [0, 0, 0])

    # selfie simulation
    selfie_size: int = 512
    confidence_threshold: float = 0.3

    # pose selection and masks
    selfie_min_pixels: int = 21
    reference_min_pixels: int = 5
    bbox_factor: float = 1.1
    dilate_radius: int = 21
    canny_low: float = 50.0
    canny_high: float = 150.0

    # latent blending
    blend_s: float = 0.4
    total_steps: int = 50

    # augmentation
    pool_size: int = 20
    finetune_outputs: int = 200
    dreambooth_outputs: int = 50
    dreambooth_resolution: int = 512
    face_res_range: list = field(default_factory=lambda: [350, 450])
    shoes_res_range: list = field(default_factory=lambda: [400, 500])
    center_crop: bool = True

    rng_seed: int = 0
    jobs: int = 1

    @classmethod
    def from_dict(cls, data):
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(data) - names)
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        return cls(**data)

    @classmethod
    def load(cls, path):
        try:
            data = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError(f"{path}: config must be a JSON object")
        return cls.from_dict(data)

    def override(self, **values):
        """Copy with the non-None ``values`` replacing file values (flags win)."""
        return dataclasses.replace(self, **{k: v for k, v in values.items() if v is not None})

    def check_paths(self):
        for name in _PATH_FIELDS:
            value = getattr(self, name)
            if value is not None and not Path(value).exists():
                raise ConfigError(f"{name}: path does not exist: {value}")
        if self.jobs < 1:
            raise ConfigError("jobs must be >= 1")

    def require(self, *names):
        missing = [n for n in names if getattr(self, n) is None]
        if missing:
            raise ConfigError("missing required setting(s): " + ", ".join(
                "--" + n.replace("_", "-") for n in missing))

    def to_dict(self):
        return dataclasses.asdict(self)


@dataclass
class DatasetManifest:
    command: str
    parameters: dict = field(default_factory=dict)
    entries: list = field(default_factory=list)
    skipped: list = field(default_factory=list)

    def files(self):
        out = []
        for e in self.entries:
            out.extend(e.get("files", []))
        return out

    def to_json(self):
        return {
            "command": self.command,
            "parameters": self.parameters,
            "counts": {"entries": len(self.entries), "files": len(self.files()),
                       "skipped": len(self.skipped)},
            "entries": self.entries,
            "skipped": self.skipped,
        }

    def write(self, out_dir, name="manifest.json"):
        path = Path(out_dir) / name
        path.write_text(json.dumps(self.to_json(), indent=2, sort_keys=False) + "\n")
        return path
