"""Experiment configuration: a flat key = value text file.

Lines are `key = value`; blank lines and lines starting with `#` are
ignored.  Lists are comma-separated.  Booleans are true/false.  Unknown
keys are rejected so typos fail loudly.

Schema (defaults in parentheses):

  dataset                path to the transactions file        (required)
  format                 csv | cdnow                          (csv)
  merge_same_day         true | false                         (false)
  covariates             subset of units,total_spend,mean_spend  (empty)
  train_fraction         in-sample share of customers         (0.6)
  sweeps                 Gibbs sweeps                         (4000)
  burn_in                discarded sweeps                     (1000)
  thin                   keep every k-th sweep                (2)
  hidden_layers          hidden layer count                   (2)
  hidden_width           units per hidden layer               (20)
  dropout_p              hidden dropout probability           (0.2)
  epochs                 max training epochs                  (500)
  batch_size             minibatch size                       (256)
  learning_rate          Adam step size                       (0.001)
  patience               early-stop patience, 0 disables      (10)
  validation_fraction    held-back validation share           (0.1)
  losses                 loss kinds to train                  (all eight)
  ratio_interpretation   weighted_nll | abs_log_ratio         (weighted_nll)
  threshold              inactive if p_alive < threshold      (0.5)
  rounding               half_away | floor | nearest          (half_away)
  cap                    histogram overflow bin start         (7)
  horizon_weeks          forecast horizon override            (holdout length)
  out                    output directory                     (required)
  seed                   global seed                          (0)
"""

from dataclasses import dataclass, fields

from .forecast import ROUNDING_MODES
from .network import LOSS_KINDS, RATIO_INTERPRETATIONS


@dataclass
class ExperimentConfig:
    dataset: str = ""
    format: str = "csv"
    merge_same_day: bool = False
    covariates: tuple = ()
    train_fraction: float = 0.6
    sweeps: int = 4000
    burn_in: int = 1000
    thin: int = 2
    hidden_layers: int = 2
    hidden_width: int = 20
    dropout_p: float = 0.2
    epochs: int = 500
    batch_size: int = 256
    learning_rate: float = 1e-3
    patience: int = 10
    validation_fraction: float = 0.1
    losses: tuple = LOSS_KINDS
    ratio_interpretation: str = "weighted_nll"
    threshold: float = 0.5
    rounding: str = "half_away"
    cap: int = 7
    horizon_weeks: float = None
    out: str = ""
    seed: int = 0

    def validate(self):
        if not self.dataset:
            raise ValueError("config needs a dataset path")
        if not self.out:
            raise ValueError("config needs an output directory")
        if self.format not in ("csv", "cdnow"):
            raise ValueError(f"unknown dataset format {self.format!r}")
        if not self.losses:
            raise ValueError("at least one loss kind is required")
        for kind in self.losses:
            if kind not in LOSS_KINDS:
                raise ValueError(f"unknown loss kind {kind!r}")
        if self.ratio_interpretation not in RATIO_INTERPRETATIONS:
            raise ValueError(
                f"unknown ratio interpretation {self.ratio_interpretation!r}")
        if self.rounding not in ROUNDING_MODES:
            raise ValueError(f"unknown rounding mode {self.rounding!r}")
        if not 0.0 <= self.threshold <= 1.0:
            raise ValueError("threshold must lie in [0, 1]")
        if not 0.0 < self.train_fraction < 1.0:
            raise ValueError("train_fraction must lie strictly in (0, 1)")
        if self.cap < 1:
            raise ValueError("cap must be at least 1")
        if self.horizon_weeks is not None and self.horizon_weeks <= 0:
            raise ValueError("horizon_weeks must be positive")
        return self


def _coerce(key, text, target):
    if target is bool:
        low = text.lower()
        if low in ("true", "false"):
            return low == "true"
        raise ValueError(f"{key} expects true or false, got {text!r}")
    if target is tuple:
        return tuple(part.strip() for part in text.split(",") if part.strip())
    return target(text)


_FIELD_TYPES = {
    "dataset": str, "format": str, "merge_same_day": bool,
    "covariates": tuple, "train_fraction": float, "sweeps": int,
    "burn_in": int, "thin": int, "hidden_layers": int, "hidden_width": int,
    "dropout_p": float, "epochs": int, "batch_size": int,
    "learning_rate": float, "patience": int, "validation_fraction": float,
    "losses": tuple, "ratio_interpretation": str, "threshold": float,
    "rounding": str, "cap": int, "horizon_weeks": float, "out": str,
    "seed": int,
}


def parse_config(path):
    """Read a key = value config file into an ExperimentConfig."""
    values = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ValueError(f"{path}: line {lineno}: expected key = value")
            key, _, text = line.partition("=")
            key = key.strip()
            text = text.strip()
            if key not in _FIELD_TYPES:
                raise ValueError(f"{path}: line {lineno}: unknown key {key!r}")
            if key in values:
                raise ValueError(f"{path}: line {lineno}: duplicate key {key!r}")
            try:
                values[key] = _coerce(key, text, _FIELD_TYPES[key])
            except ValueError as exc:
                raise ValueError(f"{path}: line {lineno}: {exc}") from None
    return ExperimentConfig(**values)


def write_config(path, cfg):
    """Emit a config file that parse_config reads back identically."""
    lines = []
    for f in fields(ExperimentConfig):
        value = getattr(cfg, f.name)
        if value is None:
            continue
        if isinstance(value, tuple):
            value = ",".join(value)
        elif isinstance(value, bool):
            value = "true" if value else "false"
        elif isinstance(value, float):
            value = repr(value)
        lines.append(f"{f.name} = {value}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
