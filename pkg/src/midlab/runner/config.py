"""
Experiment configuration files.

Line-oriented format::

    # comment
    [section]
    key = value

Values are integers, reals, double-quoted strings, or comma-separated lists
of numbers. Every section and key is checked against SCHEMA; anything not
listed there is an error in strict mode. Errors carry the offending line.
"""

from __future__ import annotations

import hashlib
import math
import re
from dataclasses import dataclass, field, replace

import numpy as np

from ..domains import FAMILIES, DomainSpec
from ..errors import ConfigError
from ..middlegan import VARIANTS, GanTrainConfig
from ..oracles import CentroidSolverConfig
from ..pipeline import ClassifierConfig, PseudoLabelConfig

KINDS = ("gan_train", "oracle_centroid", "verify_identity", "adaptation", "agnosticism", "gradcheck")
TARGET_PRESETS = {"identical": 0.0, "mild": 30.0, "severe": 180.0, "custom": None}

_INT = re.compile(r"[+-]?\d+")
_REAL = re.compile(r"[+-]?(\d+\.\d*|\.\d+|\d+)([eE][+-]?\d+)?|[+-]?inf")
_STR = re.compile(r'"([^"\\]*)"')


@dataclass(frozen=True)
class Key:
    type: str  # int, real, str, ints, reals
    default: object = None  # None means required
    check: object = None  # (predicate, description)
    choices: tuple = ()

    @property
    def required(self):
        return self.default is None


def _pos(x):
    return x > 0


def _nonneg(x):
    return x >= 0


POSITIVE = (_pos, "must be > 0")
NONNEG = (_nonneg, "must be >= 0")
AT_LEAST_1 = (lambda x: x >= 1, "must be >= 1")
AT_LEAST_2 = (lambda x: x >= 2, "must be >= 2")
UNIT = (lambda x: 0.0 <= x <= 1.0, "must lie in [0, 1]")
ALL_POSITIVE = (lambda xs: all(v > 0 for v in xs), "entries must be > 0")
ALL_AT_LEAST_1 = (lambda xs: all(v >= 1 for v in xs), "entries must be >= 1")
DEGREES = (lambda x: 0.0 <= x < 360.0, "must lie in [0, 360)")

_DOMAIN_KEYS = {
    "family": Key("str", "gaussian_mixture", choices=FAMILIES),
    "class_count": Key("int", 2, AT_LEAST_1),
    # flat list, class-major: class_count * dim entries
    "means": Key("reals", (-2.0, 0.0, 2.0, 0.0)),
    "std": Key("real", 1.0, POSITIVE),
    "radii": Key("reals", (1.0, 3.0), ALL_POSITIVE),
    "noise": Key("real", 0.1, NONNEG),
    "scale": Key("real", 2.0, POSITIVE),
    "rotation_degrees": Key("real", 0.0, DEGREES),
    "shift": Key("reals", (0.0,)),
}

SCHEMA = {
    "experiment": {
        "kind": Key("str", choices=KINDS),
        "seeds": Key("ints"),
        "output_dir": Key("str", "runs"),
    },
    "source": _DOMAIN_KEYS,
    "target": {"preset": Key("str", "mild", choices=tuple(TARGET_PRESETS)), **_DOMAIN_KEYS},
    "data": {
        "n_per_class": Key("int", 500, AT_LEAST_1),
        "n_test_per_class": Key("int", 500, AT_LEAST_1),
    },
    "gan": {
        "epochs": Key("int", 100, AT_LEAST_1),
        "batch_size": Key("int", 64, AT_LEAST_2),
        "noise_dim": Key("int", 4, AT_LEAST_1),
        "lr_g": Key("real", 0.0002, POSITIVE),
        "lr_ds": Key("real", 0.0002, POSITIVE),
        "lr_dt": Key("real", 0.0002, POSITIVE),
        "beta1": Key("real", 0.5, UNIT),
        "beta2": Key("real", 0.999, UNIT),
        "generator_hidden": Key("ints", (32, 32), ALL_AT_LEAST_1),
        "discriminator_hidden": Key("ints", (32, 32), ALL_AT_LEAST_1),
        "generator_loss_variant": Key("str", "saturating", choices=VARIANTS),
        "label_smoothing": Key("real", 0.0, (lambda x: 0.0 <= x <= 0.2, "must lie in [0, 0.2]")),
        # -1: one fake per source sample of the class
        "n_fake_per_class": Key("int", -1, (lambda x: x >= -1, "must be >= 0, or -1 for the default")),
        "n_generate": Key("int", 50_000, AT_LEAST_1),
    },
    "classifier": {
        "hidden": Key("ints", (64, 64), ALL_AT_LEAST_1),
        "epochs": Key("int", 5, AT_LEAST_1),
        "batch_size": Key("int", 32, AT_LEAST_1),
        "learning_rate": Key("real", 0.0002, POSITIVE),
        "beta1": Key("real", 0.9, UNIT),
    },
    "pseudo_label": {
        "method": Key("str", "source_classifier", choices=("source_classifier", "nearest_class_centroid")),
        "confidence_threshold": Key("real", 0.8, UNIT),
        "hidden": Key("ints", (64, 64), ALL_AT_LEAST_1),
        "epochs": Key("int", 5, AT_LEAST_1),
        "batch_size": Key("int", 32, AT_LEAST_1),
        "learning_rate": Key("real", 0.0002, POSITIVE),
    },
    "agnosticism": {
        # -1: use the target preset's rotation
        "rotation_degrees": Key("real", -1.0, (lambda x: x == -1.0 or 0.0 <= x < 360.0, "must lie in [0, 360) or be -1")),
    },
    "grid": {
        "low": Key("reals", (-6.0,)),
        "high": Key("reals", (6.0,)),
        "bins": Key("ints", (241,), ALL_AT_LEAST_1),
    },
    "solver": {
        "method": Key("str", "simplex_descent", choices=("simplex_descent", "mixture_sweep")),
        "sweep_resolution": Key("int", 101, (lambda x: x >= 11, "must be >= 11")),
        "descent_steps": Key("int", 500, AT_LEAST_1),
        "descent_rate": Key("real", 0.1, POSITIVE),
        "tolerance": Key("real", 1e-9, POSITIVE),
        "n_probes": Key("int", 100, NONNEG),
    },
    "verify": {
        "n_triples": Key("int", 100, AT_LEAST_1),
        "cells": Key("int", 30, AT_LEAST_2),
    },
    "gradcheck": {
        "n_architectures": Key("int", 20, AT_LEAST_1),
        "batch": Key("int", 6, AT_LEAST_1),
        "fd_step": Key("real", 1e-5, POSITIVE),
    },
}

# excluded from the digest: they choose where and how often, not what
_DIGEST_EXCLUDED = {("experiment", "seeds"), ("experiment", "output_dir")}


@dataclass
class ExperimentConfig:
    kind: str
    seeds: tuple
    output_dir: str
    values: dict = field(default_factory=dict)  # section -> key -> value

    def get(self, section, key):
        return self.values[section][key]

    def section(self, name):
        return dict(self.values[name])

    # -- typed views -------------------------------------------------------------
    def source_spec(self) -> DomainSpec:
        return _domain_spec(self.values["source"])

    def target_rotation(self) -> float:
        preset = self.get("target", "preset")
        if preset == "custom":
            return float(self.get("target", "rotation_degrees"))
        return TARGET_PRESETS[preset]  # relative to the source

    def target_spec(self) -> DomainSpec:
        preset = self.get("target", "preset")
        if preset == "custom":
            return _domain_spec(self.values["target"])
        src = self.source_spec()
        # presets turn the source domain further about the origin
        return replace(src, rotation_degrees=(src.rotation_degrees + TARGET_PRESETS[preset]) % 360.0)

    def gan_config(self) -> GanTrainConfig:
        g = self.values["gan"]
        return GanTrainConfig(**{k: v for k, v in g.items() if k not in ("n_fake_per_class", "n_generate")})

    def n_fake_per_class(self):
        n = self.get("gan", "n_fake_per_class")
        return None if n == -1 else n

    def classifier_config(self) -> ClassifierConfig:
        return ClassifierConfig(**self.values["classifier"])

    def pseudo_label_config(self) -> PseudoLabelConfig:
        p = self.values["pseudo_label"]
        clf = ClassifierConfig(
            hidden=p["hidden"], epochs=p["epochs"], batch_size=p["batch_size"], learning_rate=p["learning_rate"]
        )
        return PseudoLabelConfig(p["method"], p["confidence_threshold"], clf)

    def agnosticism_rotation(self) -> float:
        r = self.get("agnosticism", "rotation_degrees")
        return self.target_rotation() if r == -1.0 else r

    def grid_spec(self):
        g = self.values["grid"]
        if not len(g["low"]) == len(g["high"]) == len(g["bins"]):
            raise ConfigError("grid low, high and bins must have equal lengths", key="grid")
        return tuple(zip(g["low"], g["high"])), tuple(g["bins"])

    def solver_config(self) -> CentroidSolverConfig:
        s = self.values["solver"]
        return CentroidSolverConfig(
            s["method"], s["sweep_resolution"], s["descent_steps"], s["descent_rate"], s["tolerance"]
        )

    @property
    def digest(self):
        return config_digest(self)

    def with_seeds(self, seeds):
        return replace(self, seeds=_check_seeds(list(seeds), None))

    def with_output_dir(self, path):
        v = {s: dict(kv) for s, kv in self.values.items()}
        v["experiment"]["output_dir"] = str(path)
        return replace(self, output_dir=str(path), values=v)


def _domain_spec(v) -> DomainSpec:
    fam = v["family"]
    kw = dict(
        family=fam,
        class_count=v["class_count"],
        noise=v["noise"],
        scale=v["scale"],
        rotation_degrees=v["rotation_degrees"],
    )
    if fam == "gaussian_mixture":
        means = np.asarray(v["means"], dtype=np.float64)
        if means.size % v["class_count"]:
            raise ConfigError(
                f"means has {means.size} entries, not a multiple of class_count {v['class_count']}",
                key="means",
            )
        kw.update(means=means.reshape(v["class_count"], -1), std=v["std"])
    elif fam == "ring":
        kw.update(radii=list(v["radii"]))
    shift = np.asarray(v["shift"], dtype=np.float64)
    if np.any(shift != 0):
        kw.update(shift=shift)
    return DomainSpec(**kw)


# -- parsing ---------------------------------------------------------------------------


def _scalar(text):
    if _INT.fullmatch(text):
        return int(text)
    if _REAL.fullmatch(text):
        return float(text)
    m = _STR.fullmatch(text)
    if m:
        return m.group(1)
    return None


def _coerce(raw, spec: Key, key, line):
    def fail(msg):
        raise ConfigError(f"{key}: {msg}", line=line, key=key)

    if raw == "":
        fail("missing value")
    if spec.type in ("ints", "reals"):
        parts = [p.strip() for p in raw.split(",")]
        items = [_scalar(p) for p in parts]
        if spec.type == "ints":
            if not all(isinstance(x, int) and not isinstance(x, bool) for x in items):
                fail(f"expected a list of integers, got {raw!r}")
            value = tuple(items)
        else:
            if not all(isinstance(x, (int, float)) for x in items):
                fail(f"expected a list of reals, got {raw!r}")
            value = tuple(float(x) for x in items)
    else:
        value = _scalar(raw)
        if spec.type == "int":
            if not isinstance(value, int):
                fail(f"expected an integer, got {raw!r}")
        elif spec.type == "real":
            if not isinstance(value, (int, float)) or isinstance(value, str):
                fail(f"expected a real, got {raw!r}")
            value = float(value)
            if not math.isfinite(value):
                fail("must be finite")
        elif not isinstance(value, str):
            fail(f"expected a quoted string, got {raw!r}")
    if spec.choices and value not in spec.choices:
        fail(f"must be one of {', '.join(spec.choices)}; got {value!r}")
    if spec.check is not None:
        pred, desc = spec.check
        if not pred(value):
            fail(f"{desc}; got {value!r}")
    return value


def _check_seeds(seeds, line):
    if not seeds:
        raise ConfigError("seeds must be nonempty", line=line, key="seeds")
    if len(set(seeds)) != len(seeds):
        raise ConfigError("seeds must be distinct", line=line, key="seeds")
    if any(s < 0 for s in seeds):
        raise ConfigError("seeds must be >= 0", line=line, key="seeds")
    return tuple(seeds)


def parse_config(text: str, strict: bool = True) -> ExperimentConfig:
    """Parse and validate a config; see the module docstring for the format."""
    found: dict = {}
    lines: dict = {}
    section = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = _strip_comment(raw)
        if not line:
            continue
        if line.startswith("["):
            if not line.endswith("]"):
                raise ConfigError(f"malformed section header {line!r}", line=lineno)
            section = line[1:-1].strip()
            if section in found:
                raise ConfigError(
                    f"duplicate section [{section}] (first at line {lines[(section, None)]})",
                    line=lineno,
                    key=section,
                )
            if section not in SCHEMA and strict:
                raise ConfigError(f"unknown section [{section}]", line=lineno, key=section)
            found[section] = {}
            lines[(section, None)] = lineno
            continue
        if "=" not in line:
            raise ConfigError(f"expected 'key = value', got {line!r}", line=lineno)
        if section is None:
            raise ConfigError("entry outside any section", line=lineno)
        key, value = (s.strip() for s in line.split("=", 1))
        schema = SCHEMA.get(section)
        if schema is None:
            continue  # unknown section tolerated in non-strict mode
        if key not in schema:
            if strict:
                raise ConfigError(f"unknown key {key!r} in [{section}]", line=lineno, key=key)
            continue
        if key in found[section]:
            raise ConfigError(f"duplicate key {key!r} in [{section}]", line=lineno, key=key)
        found[section][key] = _coerce(value, schema[key], key, lineno)
        lines[(section, key)] = lineno

    values = {}
    for sec, keys in SCHEMA.items():
        got = found.get(sec, {})
        values[sec] = {}
        for key, spec in keys.items():
            if key in got:
                values[sec][key] = got[key]
            elif spec.required:
                where = lines.get((sec, None))
                raise ConfigError(
                    f"missing required key {key!r} in [{sec}]", line=where, key=key
                )
            else:
                values[sec][key] = spec.default
    exp = values["experiment"]
    seeds = _check_seeds(list(exp["seeds"]), lines.get(("experiment", "seeds")))
    cfg = ExperimentConfig(exp["kind"], seeds, exp["output_dir"], values)
    _validate(cfg, lines)
    return cfg


def _strip_comment(raw):
    out, quoted = [], False
    for ch in raw:
        if ch == '"':
            quoted = not quoted
        elif ch == "#" and not quoted:
            break
        out.append(ch)
    return "".join(out).strip()


def _validate(cfg: ExperimentConfig, lines):
    """Build every sub-config so module invariants surface as config errors."""
    builders = {
        "source": cfg.source_spec,
        "target": cfg.target_spec,
        "gan": cfg.gan_config,
        "classifier": cfg.classifier_config,
        "pseudo_label": cfg.pseudo_label_config,
        "grid": cfg.grid_spec,
        "solver": cfg.solver_config,
    }
    for sec, build in builders.items():
        try:
            build()
        except ConfigError as exc:
            line = lines.get((sec, exc.key), lines.get((sec, None)))
            raise ConfigError(f"[{sec}] {exc.bare}", line=line, key=exc.key) from None
        except ValueError as exc:
            raise ConfigError(f"[{sec}] {exc}", line=lines.get((sec, None)), key=sec) from None
    src, tgt = cfg.source_spec(), cfg.target_spec()
    for name, spec in (("source", src), ("target", tgt)):
        one_d = spec.family == "gaussian_mixture" and spec.means.shape[1] == 1
        if one_d and spec.rotation_degrees % 180.0:
            raise ConfigError(
                f"[{name}] 1-D domains only rotate by multiples of 180 degrees "
                f"(got {spec.rotation_degrees}); for the target use preset identical, severe or custom",
                line=lines.get((name, None)),
                key="rotation_degrees",
            )
    if cfg.kind in ("gan_train", "adaptation", "agnosticism"):
        if src.class_count != tgt.class_count:
            raise ConfigError(
                "source and target class_count differ", line=lines.get(("target", None)), key="class_count"
            )


# -- serialization ---------------------------------------------------------------------


def _fmt(value):
    if isinstance(value, tuple):
        return ", ".join(_fmt(v) for v in value)
    if isinstance(value, str):
        return f'"{value}"'
    if isinstance(value, float):
        return repr(value)
    return str(value)


def serialize_config(cfg: ExperimentConfig, include_run=True) -> str:
    """Canonical text: every section and key in schema order, defaults filled."""
    out = []
    for sec, keys in SCHEMA.items():
        out.append(f"[{sec}]")
        for key in keys:
            if not include_run and (sec, key) in _DIGEST_EXCLUDED:
                continue
            out.append(f"{key} = {_fmt(cfg.values[sec][key])}")
        out.append("")
    return "\n".join(out)


def config_digest(cfg: ExperimentConfig) -> str:
    """sha256 of the canonical form, without seeds and output_dir."""
    return hashlib.sha256(serialize_config(cfg, include_run=False).encode("utf-8")).hexdigest()


def load_config(path, strict=True) -> ExperimentConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read(), strict=strict)
