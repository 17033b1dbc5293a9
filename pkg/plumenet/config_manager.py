import os
import json
import logging
from dataclasses import dataclass, field, fields, is_dataclass, asdict
from typing import Any, Dict, Optional, Tuple

from plumenet.errors import ConfigError

logger = logging.getLogger(__name__)

SENTINEL2_BANDS: Tuple[str, ...] = (
    "B01", "B02", "B03", "B04", "B05", "B06",
    "B07", "B08", "B8A", "B09", "B11", "B12",
)

# typical L2A reflectance over arid terrain, same order as SENTINEL2_BANDS
DEFAULT_BAND_BASE: Tuple[float, ...] = (
    0.08, 0.10, 0.13, 0.17, 0.20, 0.22,
    0.23, 0.25, 0.26, 0.08, 0.30, 0.25,
)


@dataclass
class AttMetNetConfig:
    """Network geometry and block layout"""
    in_channels: int = 13
    base_filters: int = 64
    depth: int = 4
    att_inter_ratio: float = 0.5
    block_order: str = "conv-relu-bn"
    patch_size: int = 128
    bn_momentum: float = 0.1
    bn_eps: float = 1e-5

    def validate(self):
        if self.in_channels < 1:
            raise ConfigError("model.in_channels", "must be >= 1")
        if self.base_filters < 1:
            raise ConfigError("model.base_filters", "must be >= 1")
        if self.depth < 1:
            raise ConfigError("model.depth", "must be >= 1")
        if not 0.0 < self.att_inter_ratio <= 1.0:
            raise ConfigError("model.att_inter_ratio", "must lie in (0, 1]")
        if self.block_order not in ("conv-relu-bn", "conv-bn-relu"):
            raise ConfigError("model.block_order", "must be conv-relu-bn or conv-bn-relu")
        if self.patch_size < 1 or self.patch_size % (2 ** self.depth) != 0:
            raise ConfigError(
                "model.patch_size",
                f"{self.patch_size} is not divisible by 2**depth = {2 ** self.depth}",
            )
        if not 0.0 <= self.bn_momentum <= 1.0:
            raise ConfigError("model.bn_momentum", "must lie in [0, 1]")
        if self.bn_eps <= 0:
            raise ConfigError("model.bn_eps", "must be > 0")


@dataclass
class LossConfig:
    """Training loss selection"""
    kind: str = "focal"
    alpha: float = 0.75
    gamma: float = 2.0
    pos_weight: float = 3.0
    reduction: str = "mean"

    def validate(self):
        if self.kind not in ("focal", "bce", "weighted_bce"):
            raise ConfigError("train.loss.kind", "must be focal, bce or weighted_bce")
        if not 0.0 < self.alpha < 1.0:
            raise ConfigError("train.loss.alpha", "must lie in (0, 1)")
        if self.gamma < 0:
            raise ConfigError("train.loss.gamma", "must be >= 0")
        if self.pos_weight <= 0:
            raise ConfigError("train.loss.pos_weight", "must be > 0")
        if self.reduction != "mean":
            raise ConfigError("train.loss.reduction", "only 'mean' is supported")


@dataclass
class SchedulerConfig:
    """Reduce-on-plateau learning rate policy"""
    factor: float = 0.5
    patience: int = 7
    min_delta: float = 1e-6
    monitor: str = "val_loss"

    def validate(self):
        if not 0.0 < self.factor < 1.0:
            raise ConfigError("train.scheduler.factor", "must lie in (0, 1)")
        if self.patience < 0:
            raise ConfigError("train.scheduler.patience", "must be >= 0")
        if self.min_delta < 0:
            raise ConfigError("train.scheduler.min_delta", "must be >= 0")
        if self.monitor != "val_loss":
            raise ConfigError("train.scheduler.monitor", "only 'val_loss' is supported")


@dataclass
class AdamConfig:
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def validate(self):
        if not 0.0 <= self.beta1 < 1.0:
            raise ConfigError("train.optimizer.beta1", "must lie in [0, 1)")
        if not 0.0 <= self.beta2 < 1.0:
            raise ConfigError("train.optimizer.beta2", "must lie in [0, 1)")
        if self.eps <= 0:
            raise ConfigError("train.optimizer.eps", "must be > 0")


@dataclass
class TrainConfig:
    """Optimization loop settings"""
    lr: float = 1e-4
    epochs: int = 100
    batch_size: int = 16
    seed: int = 0
    neg_ratio: int = 2
    train_split: str = "train"
    val_split: str = "val"
    val_crop: str = "random"
    max_grad_norm: Optional[float] = None
    loss: LossConfig = field(default_factory=LossConfig)
    scheduler: SchedulerConfig = field(default_factory=SchedulerConfig)
    optimizer: AdamConfig = field(default_factory=AdamConfig)

    def validate(self):
        if self.lr <= 0:
            raise ConfigError("train.lr", "must be > 0")
        if self.epochs < 0:
            raise ConfigError("train.epochs", "must be >= 0")
        if self.batch_size < 1:
            raise ConfigError("train.batch_size", "must be >= 1")
        if self.neg_ratio < 0:
            raise ConfigError("train.neg_ratio", "must be >= 0")
        if self.val_crop not in ("random", "center"):
            raise ConfigError("train.val_crop", "must be random or center")
        if self.max_grad_norm is not None and self.max_grad_norm <= 0:
            raise ConfigError("train.max_grad_norm", "must be > 0 when set")
        self.loss.validate()
        self.scheduler.validate()
        self.optimizer.validate()


@dataclass
class SynthConfig:
    """Synthetic Gaussian-plume scene generator"""
    size: int = 128
    band_base: Tuple[float, ...] = DEFAULT_BAND_BASE
    noise_std: float = 0.01
    texture_std: float = 0.05
    amplitude: float = 0.1
    sigma_x: float = 8.0
    sigma_y: float = 8.0
    center: Optional[Tuple[float, float]] = None
    profile: str = "gaussian"
    mask_cutoff: float = 0.05
    positive_fraction: float = 0.5
    resolution_m: float = 20.0
    seed: int = 0

    def validate(self):
        if self.size < 1:
            raise ConfigError("synth.size", "must be >= 1")
        if len(self.band_base) != len(SENTINEL2_BANDS):
            raise ConfigError("synth.band_base", f"needs {len(SENTINEL2_BANDS)} values")
        if any(b <= 0 for b in self.band_base):
            raise ConfigError("synth.band_base", "reflectances must be > 0")
        if self.noise_std < 0 or self.texture_std < 0:
            raise ConfigError("synth.noise_std", "noise levels must be >= 0")
        if not 0.0 <= self.amplitude < 1.0:
            raise ConfigError("synth.amplitude", "must lie in [0, 1)")
        if self.sigma_x <= 0 or self.sigma_y <= 0:
            raise ConfigError("synth.sigma_x", "plume spreads must be > 0")
        if self.center is not None and len(self.center) != 2:
            raise ConfigError("synth.center", "must be a (row, col) pair")
        if self.profile not in ("gaussian", "flat"):
            raise ConfigError("synth.profile", "must be gaussian or flat")
        if not 0.0 < self.mask_cutoff < 1.0:
            raise ConfigError("synth.mask_cutoff", "must lie in (0, 1)")
        if not 0.0 <= self.positive_fraction <= 1.0:
            raise ConfigError("synth.positive_fraction", "must lie in [0, 1]")


@dataclass
class AugmentConfig:
    enabled: bool = True
    rotate: bool = True
    noise_frac: float = 0.05

    def validate(self):
        if self.noise_frac < 0:
            raise ConfigError("augment.noise_frac", "must be >= 0")


@dataclass
class EvalConfig:
    """Binarization and scene-rule thresholds"""
    prob_threshold: float = 0.5
    min_pixels: int = 90
    connectivity: int = 8
    miou_mode: str = "two_class"

    def validate(self):
        if not 0.0 < self.prob_threshold < 1.0:
            raise ConfigError("eval.prob_threshold", "must lie in (0, 1)")
        if self.min_pixels < 0:
            raise ConfigError("eval.min_pixels", "must be >= 0")
        if self.connectivity not in (4, 8):
            raise ConfigError("eval.connectivity", "must be 4 or 8")
        if self.miou_mode not in ("two_class", "foreground"):
            raise ConfigError("eval.miou_mode", "must be two_class or foreground")


@dataclass
class MBMPConfig:
    threshold: float = -0.05
    min_pixels: int = 90
    connectivity: int = 8

    def validate(self):
        if self.threshold >= 0:
            raise ConfigError("mbmp.threshold", "must be negative")
        if self.connectivity not in (4, 8):
            raise ConfigError("mbmp.connectivity", "must be 4 or 8")


@dataclass
class LoggingConfig:
    """Logging configuration"""
    level: str = "INFO"
    file: str = "plumenet.log"
    max_bytes: int = 10485760  # 10MB
    backup_count: int = 5
    format: str = "%(asctime)s [%(levelname)s] %(name)s: %(message)s"

    def validate(self):
        if self.level.upper() not in ("DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"):
            raise ConfigError("logging.level", f"unknown level {self.level}")


SECTIONS = ("model", "train", "synth", "augment", "eval", "mbmp", "logging")


def _coerce(current: Any, value: Any) -> Any:
    """JSON lists come back as lists; keep tuple-typed fields tuples"""
    if isinstance(current, tuple) and isinstance(value, list):
        return tuple(value)
    if isinstance(current, float) and isinstance(value, int) and not isinstance(value, bool):
        return float(value)
    if current is None and isinstance(value, list):
        return tuple(value)
    return value


def _apply_section(target: Any, data: Dict[str, Any], path: str) -> None:
    if not isinstance(data, dict):
        raise ConfigError(path, "expected a JSON object")
    known = {f.name for f in fields(target)}
    for key, value in data.items():
        if key not in known:
            raise ConfigError(f"{path}.{key}", "unknown key")
        current = getattr(target, key)
        if is_dataclass(current):
            _apply_section(current, value, f"{path}.{key}")
        else:
            setattr(target, key, _coerce(current, value))


class ConfigManager:
    """Resolve run configuration: override > JSON file > environment > default"""

    def __init__(self, config_file: Optional[str] = None, env_file: str = ".env",
                 overrides: Optional[Dict[str, Any]] = None):
        self.env_file = env_file
        self.config_file = config_file

        self.model = AttMetNetConfig()
        self.train = TrainConfig()
        self.synth = SynthConfig()
        self.augment = AugmentConfig()
        self.eval = EvalConfig()
        self.mbmp = MBMPConfig()
        self.logging = LoggingConfig()

        self._load_from_env()
        self._load_from_json()
        if overrides:
            self.apply_overrides(overrides)

        self._validate_config()
        logger.debug("[CONFIG] Configuration resolved")

    def _load_from_env(self):
        """Logging settings from .env / process environment"""
        from dotenv import load_dotenv
        if self.env_file and os.path.exists(self.env_file):
            load_dotenv(self.env_file)

        self.logging.level = os.getenv("PLUMENET_LOG_LEVEL", self.logging.level).upper()
        self.logging.file = os.getenv("PLUMENET_LOG_FILE", self.logging.file)
        try:
            self.logging.max_bytes = int(os.getenv("PLUMENET_LOG_MAX_BYTES", self.logging.max_bytes))
            self.logging.backup_count = int(os.getenv("PLUMENET_LOG_BACKUP_COUNT", self.logging.backup_count))
        except ValueError as e:
            raise ConfigError("logging", f"bad integer in environment: {e}")

    def _load_from_json(self):
        """Load configuration from JSON file; unknown keys are rejected"""
        if not self.config_file:
            return
        if not os.path.exists(self.config_file):
            raise ConfigError("config", f"file not found: {self.config_file}")

        try:
            with open(self.config_file, "r", encoding="utf-8") as f:
                config_data = json.load(f)
        except json.JSONDecodeError as e:
            raise ConfigError("config", f"invalid JSON in {self.config_file}: {e}")

        if not isinstance(config_data, dict):
            raise ConfigError("config", "top level must be a JSON object")

        for section, values in config_data.items():
            if section not in SECTIONS:
                raise ConfigError(section, "unknown section")
            _apply_section(getattr(self, section), values, section)

        logger.info(f"[CONFIG] Loaded configuration from {self.config_file}")

    def apply_overrides(self, overrides: Dict[str, Any]):
        """Apply dotted-path overrides (``train.lr`` ...); ``None`` values are skipped"""
        for dotted, value in overrides.items():
            if value is None:
                continue
            parts = dotted.split(".")
            if parts[0] not in SECTIONS:
                raise ConfigError(dotted, "unknown section")
            target = getattr(self, parts[0])
            for name in parts[1:-1]:
                if not hasattr(target, name) or not is_dataclass(getattr(target, name)):
                    raise ConfigError(dotted, "unknown key")
                target = getattr(target, name)
            key = parts[-1]
            if len(parts) < 2 or key not in {f.name for f in fields(target)}:
                raise ConfigError(dotted, "unknown key")
            setattr(target, key, _coerce(getattr(target, key), value))

    def _validate_config(self):
        for section in SECTIONS:
            getattr(self, section).validate()
        # the network consumes what the generator emits
        if self.synth.size < self.model.patch_size:
            logger.warning(
                f"[CONFIG] synth.size {self.synth.size} < model.patch_size {self.model.patch_size}; "
                f"generated scenes cannot be cropped to the model input"
            )

    def to_dict(self) -> Dict[str, Any]:
        return {section: asdict(getattr(self, section)) for section in SECTIONS}

    def save_config(self, path: str):
        """Write the resolved configuration as JSON"""
        os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
        with open(path, "w", encoding="utf-8") as f:
            json.dump(self.to_dict(), f, indent=2, sort_keys=True)
        logger.info(f"[CONFIG] Configuration saved to {path}")


def parse_override(text: str) -> Tuple[str, Any]:
    """``section.key=value`` with a JSON value, or a bare string"""
    if "=" not in text:
        raise ConfigError(text, "override must look like section.key=value")
    key, raw = text.split("=", 1)
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return key.strip(), value
