"""Run configuration: every tunable constant in one flat-keyed JSON document."""
from __future__ import annotations

import hashlib
import json
from dataclasses import MISSING, dataclass, field, fields, replace
from pathlib import Path

from .bands import DEFAULT_DIVISIONS, FREQ_RANGE, MIN_GAP_WIDTH, N_BANDS, SENTINEL, DispersionSettings
from .geometry import CELL_SIZE, DEFAULT_MATERIALS, DESIGN_BOUNDS, MaterialSpec, Region
from .neural.training import TrainConfig
from .verify import FREQ_STEP, LOSS_FACTOR


class ConfigError(ValueError):
    pass


def _key(path: str, default=MISSING, factory=MISSING):
    if factory is not MISSING:
        return field(default_factory=factory, metadata={"key": path})
    return field(default=default, metadata={"key": path})


_M, _F, _R = (DEFAULT_MATERIALS[r] for r in Region)


@dataclass(frozen=True)
class RunConfig:
    # materials
    matrix_modulus: float = _key("materials.matrix.youngs_modulus_pa", _M.youngs_modulus)
    matrix_poisson: float = _key("materials.matrix.poisson_ratio", _M.poisson_ratio)
    matrix_density: float = _key("materials.matrix.density_kg_m3", _M.density)
    matrix_thickness: float = _key("materials.matrix.thickness_m", _M.thickness)
    filler_modulus: float = _key("materials.filler.youngs_modulus_pa", _F.youngs_modulus)
    filler_poisson: float = _key("materials.filler.poisson_ratio", _F.poisson_ratio)
    filler_density: float = _key("materials.filler.density_kg_m3", _F.density)
    filler_thickness: float = _key("materials.filler.thickness_m", _F.thickness)
    resonator_modulus: float = _key("materials.resonator.youngs_modulus_pa", _R.youngs_modulus)
    resonator_poisson: float = _key("materials.resonator.poisson_ratio", _R.poisson_ratio)
    resonator_density: float = _key("materials.resonator.density_kg_m3", _R.density)
    resonator_thickness: float = _key("materials.resonator.thickness_m", _R.thickness)
    # geometry and dispersion
    bounds: dict = _key("design.bounds_mm", factory=lambda: {k: list(v) for k, v in DESIGN_BOUNDS.items()})
    cell_size: float = _key("design.cell_size_mm", CELL_SIZE)
    divisions: tuple = _key("mesh.divisions", DEFAULT_DIVISIONS)
    shear: str = _key("mesh.shear", "mitc4")
    n_per_segment: int = _key("dispersion.points_per_segment", 6)
    n_bands: int = _key("dispersion.n_bands", N_BANDS)
    freq_range: tuple = _key("bandgap.freq_range_hz", FREQ_RANGE)
    min_gap_width: float = _key("bandgap.min_width_hz", MIN_GAP_WIDTH)
    sentinel: tuple = _key("bandgap.sentinel_hz", SENTINEL)
    # networks and training
    inn_blocks: int = _key("inn.blocks", 10)
    inn_width: int = _key("inn.subnet_width", 100)
    inn_hidden: int = _key("inn.subnet_hidden_layers", 4)
    inn_bidirectional: bool = _key("inn.bidirectional_loss", False)
    inn_epochs: int | None = _key("inn.epochs", None)  # None: use train.epochs
    dnn_width: int = _key("dnn.width", 150)
    dnn_hidden: int = _key("dnn.hidden_layers", 7)
    learning_rate: float = _key("train.learning_rate", 1e-4)
    epochs: int = _key("train.epochs", 2000)
    batch_size: int = _key("train.batch_size", 128)
    val_fraction: float = _key("train.val_fraction", 0.1)
    patience: int = _key("train.patience", 200)
    train_dtype: str = _key("train.dtype", "float32")
    # seeds
    data_seed: int = _key("seeds.data", 7)
    train_seed: int = _key("seeds.train", 0)
    opt_seed: int = _key("seeds.optimize", 0)
    # optimization and verification
    budget: int = _key("optimize.budget", 200)
    trials: int = _key("optimize.trials", 10)
    plate_cells: tuple = _key("verify.plate_cells", (8, 8))
    loss_factor: float = _key("verify.loss_factor", LOSS_FACTOR)
    freq_step: float = _key("verify.freq_step_hz", FREQ_STEP)
    verify_range: tuple = _key("verify.freq_range_hz", (100.0, 2000.0))

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, list):
                object.__setattr__(self, f.name, tuple(v))

    @staticmethod
    def keys() -> dict[str, str]:
        """Flat key path -> attribute name."""
        return {f.metadata["key"]: f.name for f in fields(RunConfig)}

    def to_flat(self) -> dict:
        out = {}
        for f in fields(self):
            v = getattr(self, f.name)
            out[f.metadata["key"]] = list(v) if isinstance(v, tuple) else v
        return out

    @classmethod
    def from_flat(cls, values: dict) -> "RunConfig":
        keys = cls.keys()
        unknown = sorted(set(values) - set(keys))
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        return cls(**{keys[k]: v for k, v in values.items()})

    @classmethod
    def load(cls, path: str | Path) -> "RunConfig":
        try:
            data = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError(f"{path}: expected a JSON object of flat keys")
        return cls.from_flat(data)

    def save(self, path: str | Path) -> Path:
        path = Path(path)
        path.write_text(json.dumps(self.to_flat(), indent=2, sort_keys=True) + "\n")
        return path

    def override(self, **changes) -> "RunConfig":
        return replace(self, **{k: v for k, v in changes.items() if v is not None})

    @property
    def hash(self) -> str:
        blob = json.dumps(self.to_flat(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:12]

    def materials(self) -> dict[Region, MaterialSpec]:
        return {
            Region.MATRIX: MaterialSpec(self.matrix_modulus, self.matrix_poisson,
                                        self.matrix_density, self.matrix_thickness),
            Region.FILLER: MaterialSpec(self.filler_modulus, self.filler_poisson,
                                        self.filler_density, self.filler_thickness),
            Region.RESONATOR: MaterialSpec(self.resonator_modulus, self.resonator_poisson,
                                           self.resonator_density, self.resonator_thickness),
        }

    def design_bounds(self) -> dict[str, tuple[float, float]]:
        return {k: (float(v[0]), float(v[1])) for k, v in self.bounds.items()}

    def dispersion_settings(self) -> DispersionSettings:
        return DispersionSettings(
            n_per_segment=int(self.n_per_segment), n_bands=int(self.n_bands),
            divisions=tuple(int(d) for d in self.divisions), materials=self.materials(),
            shear=self.shear, a=float(self.cell_size), min_width=float(self.min_gap_width),
            freq_range=tuple(float(v) for v in self.freq_range),
            sentinel=tuple(float(v) for v in self.sentinel))

    def train_config(self, kind: str = "dnn") -> TrainConfig:
        inn = kind == "inn"
        epochs = self.inn_epochs if inn and self.inn_epochs is not None else self.epochs
        return TrainConfig(learning_rate=self.learning_rate, epochs=int(epochs),
                           bidirectional=inn and bool(self.inn_bidirectional),
                           batch_size=int(self.batch_size), seed=int(self.train_seed),
                           val_fraction=float(self.val_fraction), patience=int(self.patience),
                           dtype=self.train_dtype)
