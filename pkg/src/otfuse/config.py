"""Experiment configuration: a versioned JSON object, unknown keys rejected."""

import json
from dataclasses import asdict, dataclass, field, fields, replace

from .exceptions import DataError, ParameterError
from .losses import LossWeights
from .scene_anchor import AttributeSpace
from .transport import SinkhornConfig

CONFIG_VERSION = 1

DEFAULT_ATTRIBUTES = {
    "weather": ["sunny", "cloudy", "rainy", "foggy", "snowy"],
    "time_of_day": ["day", "night"],
    "road_type": ["dirt", "grass"],
}


def default_train_combinations(space):
    """Withhold every third combination (by a skewed index) from training.

    Every single category still appears in at least one training
    combination, so the withheld ones are novel only as combinations.
    """
    kept = []
    for combo in space.combinations():
        iw, idn, ir = space.label_indices(combo)
        if (iw + 2 * idn + ir) % 3 != 0:
            kept.append(space.key(combo))
    return kept


@dataclass
class ExperimentConfig:
    version: int = CONFIG_VERSION
    attributes: dict = field(default_factory=lambda: {k: list(v) for k, v in DEFAULT_ATTRIBUTES.items()})
    classes: list = field(default_factory=lambda: ["traversable", "non_traversable"])
    embedding_dim: int = 32
    grid: list = field(default_factory=lambda: [16, 16])
    epsilon: float = 0.05
    tolerance: float = 1e-6
    max_iters: int = 1000
    fusion_lambda: float = 0.5
    projection: str = "row-normalized"
    pooling: str = "aggregate"
    loss_weights: dict = field(default_factory=lambda: asdict(LossWeights()))
    seed: int = 42
    train_combinations: list = None
    samples_per_combination: int = 10
    temperature: float = 0.07
    head_steps: int = 500
    learning_rate: float = 0.1
    cls_noise: float = 0.15
    text_noise: float = 0.6
    feature_noise: float = 0.05
    preseg_confidence: float = 1.0
    focal_length: float = 100.0
    obstacle_slope: float = 0.02
    parallel: int = 1
    output_format: str = "both"
    out: str = "otfuse_out"

    def __post_init__(self):
        if self.version != CONFIG_VERSION:
            raise DataError(f"unsupported config version {self.version!r}")
        space = self.attribute_space
        if self.train_combinations is None:
            self.train_combinations = default_train_combinations(space)
        valid = {space.key(c) for c in space.combinations()}
        bad = [k for k in self.train_combinations if k not in valid]
        if bad:
            raise DataError(f"train combinations outside the attribute space: {bad}")
        if len(self.grid) != 2 or min(self.grid) < 1:
            raise ParameterError(f"grid must be [height, width] with positive sizes, got {self.grid}")
        if len(self.classes) != 2:
            raise ParameterError("the synthetic generator supports exactly two classes")
        if self.embedding_dim < sum(space.sizes) + 1:
            raise ParameterError(
                f"embedding_dim must be at least {sum(space.sizes) + 1} for this attribute space"
            )
        if self.samples_per_combination < 0:
            raise ParameterError("samples_per_combination must be nonnegative")
        if self.parallel < 1:
            raise ParameterError("parallel must be at least 1")
        if self.output_format not in ("csv", "svg", "both"):
            raise ParameterError(f"unknown output format {self.output_format!r}")
        if not 0.5 < self.preseg_confidence <= 1.0:
            raise ParameterError("preseg_confidence must lie in (0.5, 1]")
        self.sinkhorn_config()
        self.weights()

    @property
    def attribute_space(self):
        return AttributeSpace.from_dict(self.attributes)

    def train_set(self):
        space = self.attribute_space
        return {space.parse_key(k) for k in self.train_combinations}

    def sinkhorn_config(self):
        return SinkhornConfig(epsilon=self.epsilon, tolerance=self.tolerance, max_iters=self.max_iters)

    def weights(self):
        return LossWeights(**self.loss_weights)

    def to_dict(self):
        return asdict(self)

    def dumps(self):
        return json.dumps(self.to_dict(), indent=1, sort_keys=True) + "\n"

    def updated(self, **changes):
        changes = {k: v for k, v in changes.items() if v is not None}
        return replace(self, **changes) if changes else self

    @classmethod
    def from_dict(cls, data):
        names = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - names)
        if unknown:
            raise DataError(f"unknown config keys: {unknown}")
        if "version" not in data:
            raise DataError("config is missing 'version'")
        return cls(**data)

    @classmethod
    def load(cls, path):
        with open(path, encoding="utf-8") as fh:
            try:
                data = json.load(fh)
            except json.JSONDecodeError as exc:
                raise DataError(f"{path}: invalid JSON ({exc})") from exc
        if not isinstance(data, dict):
            raise DataError(f"{path}: config must be a JSON object")
        return cls.from_dict(data)
