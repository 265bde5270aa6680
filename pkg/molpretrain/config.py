# This Source Code Form is subject to the terms of the Mozilla Public
# License, v. 2.0. If a copy of the MPL was not distributed with this
# file, You can obtain one at http://mozilla.org/MPL/2.0/.

import argparse
import configparser
import io
from pathlib import Path
from typing import (
    Any,
    Optional,
)

from .exceptions import ConfigError, MissingInputError
from .finetuning import FinetuneSettings
from .logger import logger
from .molgnet import MolGNetConfig
from .optim import AdamState
from .pretraining import PretrainSettings

DEFAULTS = """
    [run]
    seed = 0
    precision = 64

    [model]
    n_layers = 3
    steps_per_layer = 2
    hidden = 64
    ffn = 256
    heads = 4
    literal_gru_blend = True
    reset_hidden_per_layer = True
    readout = collection

    [optimizer]
    lr_pretrain = 0.001
    lr_finetune = 0.0001
    beta1 = 0.9
    beta2 = 0.999
    eps = 1e-8

    [pretrain]
    steps = 1000
    batch_size = 32
    mask_rate = 0.15
    mask_weight = 1.0
    checkpoint_every = 100
    holdout_fraction = 0.1

    [finetune]
    epochs = 100
    batch_size = 32
    patience = 10
    repeats = 1

    [paths]
    corpus =
    dataset =
    checkpoint = molpretrain.ckpt
    log = metrics.jsonl
    out =

    [error_reporting]
    dsn =
    """

# command line flag -> (section, option)
ARG_OVERRIDES = {
    "seed": ("run", "seed"),
    "precision": ("run", "precision"),
    "steps": ("pretrain", "steps"),
    "batch_size": ("pretrain", "batch_size"),
    "epochs": ("finetune", "epochs"),
    "repeats": ("finetune", "repeats"),
    "readout": ("model", "readout"),
    "corpus": ("paths", "corpus"),
    "dataset": ("paths", "dataset"),
    "checkpoint": ("paths", "checkpoint"),
    "log": ("paths", "log"),
    "out": ("paths", "out"),
}


class RunConfig(object):
    """Every knob of a run, as INI text.

    Defaults are overlaid with an optional config file and then with command
    line flags.  The text form is stored in every checkpoint.
    """

    def __init__(self, filename: Optional[Path] = None, text: Optional[str] = None):
        self.filename = filename
        self._config = configparser.ConfigParser()
        self._config.read_file(
            io.StringIO("\n".join([line.strip() for line in DEFAULTS.splitlines()]))
        )
        if filename is not None:
            if not Path(filename).is_file():
                raise MissingInputError(filename)
            self._config.read([filename], encoding="utf-8")
        if text is not None:
            self._config.read_string(text)
        self._load()

    def _load(self):
        try:
            self.seed = self._getint("run", "seed")
            self.precision = self._getint("run", "precision")

            self.n_layers = self._getint("model", "n_layers")
            self.steps_per_layer = self._getint("model", "steps_per_layer")
            self.hidden = self._getint("model", "hidden")
            self.ffn = self._getint("model", "ffn")
            self.heads = self._getint("model", "heads")
            self.literal_gru_blend = self._getboolean("model", "literal_gru_blend")
            self.reset_hidden_per_layer = self._getboolean(
                "model", "reset_hidden_per_layer"
            )
            self.readout = self._config.get("model", "readout")

            self.lr_pretrain = self._getfloat("optimizer", "lr_pretrain")
            self.lr_finetune = self._getfloat("optimizer", "lr_finetune")
            self.beta1 = self._getfloat("optimizer", "beta1")
            self.beta2 = self._getfloat("optimizer", "beta2")
            self.eps = self._getfloat("optimizer", "eps")

            self.pretrain_steps = self._getint("pretrain", "steps")
            self.pretrain_batch_size = self._getint("pretrain", "batch_size")
            self.mask_rate = self._getfloat("pretrain", "mask_rate")
            self.mask_weight = self._getfloat("pretrain", "mask_weight")
            self.checkpoint_every = self._getint("pretrain", "checkpoint_every")
            self.holdout_fraction = self._getfloat("pretrain", "holdout_fraction")

            self.epochs = self._getint("finetune", "epochs")
            self.finetune_batch_size = self._getint("finetune", "batch_size")
            self.patience = self._getint("finetune", "patience")
            self.repeats = self._getint("finetune", "repeats")
        except ValueError as e:
            raise ConfigError(str(e))

        self.corpus = self._getpath("corpus")
        self.dataset = self._getpath("dataset")
        self.checkpoint = self._getpath("checkpoint")
        self.log = self._getpath("log")
        self.out = self._getpath("out")
        self.sentry_dsn = self._config.get("error_reporting", "dsn")
        self.validate()

    def validate(self):
        if self.precision not in (32, 64):
            raise ConfigError("run.precision must be 32 or 64")
        if not 0.0 < self.mask_rate < 1.0:
            raise ConfigError("pretrain.mask_rate must lie in (0, 1)")
        if not 0.0 <= self.holdout_fraction < 1.0:
            raise ConfigError("pretrain.holdout_fraction must lie in [0, 1)")
        for name in (
            "pretrain_batch_size",
            "finetune_batch_size",
            "epochs",
            "patience",
            "repeats",
        ):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name.replace('_', ' ')} must be positive")
        if self.pretrain_steps < 0 or self.checkpoint_every < 0:
            raise ConfigError("pretrain.steps and pretrain.checkpoint_every must be >= 0")
        self.model_config()

    def _set(self, section: str, option: str, value: Any):
        if not self._config.has_section(section):
            self._config.add_section(section)
        self._config.set(section, option, str(value))

    def _getboolean(self, section: str, option: str) -> bool:
        try:
            return self._config.getboolean(section, option)
        except ValueError as e:
            raise ValueError(
                f"could not convert {section}.{option} to a boolean: {str(e)}"
            )

    def _getint(self, section: str, option: str) -> int:
        try:
            return self._config.getint(section, option)
        except ValueError as e:
            raise ValueError(
                f"could not convert {section}.{option} to an integer: {str(e)}"
            )

    def _getfloat(self, section: str, option: str) -> float:
        try:
            return self._config.getfloat(section, option)
        except ValueError as e:
            raise ValueError(
                f"could not convert {section}.{option} to a number: {str(e)}"
            )

    def _getpath(self, option: str) -> Optional[Path]:
        value = self._config.get("paths", option)
        return Path(value).expanduser() if value else None

    def apply_args(self, args: argparse.Namespace):
        """Overlay flags given on the command line; flags win over the file."""
        for name, (section, option) in ARG_OVERRIDES.items():
            value = getattr(args, name, None)
            if value is not None:
                logger.debug("%s.%s overridden from the command line", section, option)
                self._set(section, option, value)
        self._load()

    def model_config(self, **overrides) -> MolGNetConfig:
        values = dict(
            n_layers=self.n_layers,
            steps_per_layer=self.steps_per_layer,
            hidden=self.hidden,
            heads=self.heads,
            ffn=self.ffn,
            literal_gru_blend=self.literal_gru_blend,
            reset_hidden_per_layer=self.reset_hidden_per_layer,
            readout=self.readout,
        )
        values.update(overrides)
        return MolGNetConfig(**values)

    def pretrain_settings(self) -> PretrainSettings:
        return PretrainSettings(
            steps=self.pretrain_steps,
            batch_size=self.pretrain_batch_size,
            mask_rate=self.mask_rate,
            mask_weight=self.mask_weight,
            checkpoint_every=self.checkpoint_every,
            holdout_fraction=self.holdout_fraction,
            seed=self.seed,
            optimizer=AdamState(
                lr=self.lr_pretrain, beta1=self.beta1, beta2=self.beta2, eps=self.eps
            ),
        )

    def finetune_settings(self, seed: Optional[int] = None) -> FinetuneSettings:
        return FinetuneSettings(
            epochs=self.epochs,
            batch_size=self.finetune_batch_size,
            patience=self.patience,
            seed=self.seed if seed is None else seed,
            readout=self.readout,
            optimizer=AdamState(
                lr=self.lr_finetune, beta1=self.beta1, beta2=self.beta2, eps=self.eps
            ),
        )

    def to_text(self) -> str:
        buffer = io.StringIO()
        self._config.write(buffer)
        return buffer.getvalue()

    @classmethod
    def from_text(cls, text: str) -> "RunConfig":
        return cls(text=text)

    def write(self, filename: Optional[Path] = None):
        filename = Path(filename or self.filename)
        logger.debug("writing %s", filename)
        with filename.open("w", encoding="utf-8") as f:
            self._config.write(f)
