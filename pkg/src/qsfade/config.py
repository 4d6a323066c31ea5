"""Experiment configuration: nested YAML sections mapped onto dataclasses.

Unknown keys and badly typed values raise ``ConfigError`` naming the key
path (``channel.count``). ``dump_config`` writes a canonical form, so
``dump_config(load_config(text))`` is stable under repeated round trips.
"""

from __future__ import annotations

import dataclasses
import hashlib
import types
import typing
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np
import yaml

from .channels import (CorrelationMatrix, Ensemble, SVParams, full_tone_grid, generate_rayleigh_ensemble,
                       generate_sv_ensemble, mbofdm_tone_grid)
from .code import CodeSpec
from .events import EDGE_MODES, SnrPoint
from .interleaving import BlockStage, InterleaverSpec, Permutation, build, load_permutation, mbofdm_spec
from .modem import SUPPORTED_ORDERS, Constellation, make_constellation
from .presets import channel_preset, code_preset


class ConfigError(ValueError):
    def __init__(self, path: str, message: str):
        super().__init__(f"{path or '<root>'}: {message}")
        self.path = path


@dataclass
class CodeConfig:
    preset: str | None = "mbofdm-1/2"
    constraint_length: int | None = None
    generators: list[str] | None = None  # octal strings
    puncture: list[str] | None = None  # one "1"/"0" string per generator
    repetition: int = 1


@dataclass
class InterleaverConfig:
    preset: str = "mbofdm"  # mbofdm | block | identity | file
    n_symbols: int = 3
    tone_rows: int = 10
    stages: list[list[int]] | None = None  # [[rows, cols], ...] for preset "block"
    path: str | None = None


@dataclass
class ChannelConfig:
    model: str = "cm1"  # cm1 | sv | rayleigh | awgn
    count: int = 100
    seed: int | None = None  # defaults to the master seed
    n_tones: int = 300  # rayleigh and awgn only; sv models use the MB-OFDM grid
    sv: dict[str, float] | None = None  # overrides of the SV parameters
    ensemble: str | None = None  # load realizations instead of generating them
    correlation: str | None = None  # correlation file (rayleigh generation, method II)


@dataclass
class SnrConfig:
    start: float = 0.0
    stop: float = 10.0
    step: float = 1.0


@dataclass
class AnalysisConfig:
    w_max: int = 14
    outage_x: float = 10.0
    edge: str = "wrap"
    reference_seed: int = 20070101
    nodes: int = 64
    shadow_nodes: int = 20


@dataclass
class SimulationConfig:
    min_errors: int = 100
    max_bits: int = 10_000_000
    max_packets: int | None = None


@dataclass
class CurveRef:
    name: str
    path: str
    column: str


@dataclass
class CompareConfig:
    ber_levels: list[float] = field(default_factory=lambda: [1e-3, 1e-4])
    curves: list[CurveRef] | None = None


@dataclass
class VariabilityConfig:
    subsets: int = 4
    sizes: list[int] = field(default_factory=lambda: [100, 1000])


@dataclass
class ExperimentConfig:
    modulation: int = 4
    seed: int = 1
    output: str = "out"
    threads: int = 1
    code: CodeConfig = field(default_factory=CodeConfig)
    interleaver: InterleaverConfig = field(default_factory=InterleaverConfig)
    channel: ChannelConfig = field(default_factory=ChannelConfig)
    snr: SnrConfig = field(default_factory=SnrConfig)
    analysis: AnalysisConfig = field(default_factory=AnalysisConfig)
    simulation: SimulationConfig = field(default_factory=SimulationConfig)
    compare: CompareConfig = field(default_factory=CompareConfig)
    variability: VariabilityConfig = field(default_factory=VariabilityConfig)


# ---------------------------------------------------------------------------
# parsing


def _join(path: str, key) -> str:
    return f"{path}[{key}]" if isinstance(key, int) else (f"{path}.{key}" if path else key)


def _coerce(tp, value, path: str):
    origin = typing.get_origin(tp)
    args = typing.get_args(tp)
    if origin in (typing.Union, types.UnionType):
        if value is None and type(None) in args:
            return None
        inner = [a for a in args if a is not type(None)]
        return _coerce(inner[0], value, path)
    if dataclasses.is_dataclass(tp):
        return _from_dict(tp, value, path)
    if origin is list:
        if not isinstance(value, list):
            raise ConfigError(path, f"expected a list, got {type(value).__name__}")
        return [_coerce(args[0], v, _join(path, k)) for k, v in enumerate(value)]
    if origin is dict:
        if not isinstance(value, dict):
            raise ConfigError(path, f"expected a mapping, got {type(value).__name__}")
        return {str(k): _coerce(args[1], v, _join(path, k)) for k, v in value.items()}
    if tp is bool:
        if not isinstance(value, bool):
            raise ConfigError(path, "expected true or false")
        return value
    if tp is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(path, f"expected an integer, got {value!r}")
        return value
    if tp is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(path, f"expected a number, got {value!r}")
        return float(value)
    if tp is str:
        if isinstance(value, (dict, list)) or value is None:
            raise ConfigError(path, f"expected a string, got {value!r}")
        return str(value)
    raise TypeError(f"unsupported config type {tp}")


def _from_dict(cls, data, path: str = ""):
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError(path, f"expected a mapping, got {type(data).__name__}")
    hints = typing.get_type_hints(cls)
    names = {f.name for f in dataclasses.fields(cls)}
    for key in data:
        if key not in names:
            raise ConfigError(_join(path, key), "unknown key")
    kwargs = {k: _coerce(hints[k], v, _join(path, k)) for k, v in data.items()}
    try:
        return cls(**kwargs)
    except TypeError as exc:
        raise ConfigError(path, str(exc)) from None


def validate(cfg: ExperimentConfig) -> ExperimentConfig:
    if cfg.modulation not in SUPPORTED_ORDERS:
        raise ConfigError("modulation", f"must be one of {SUPPORTED_ORDERS}")
    if cfg.threads < 1:
        raise ConfigError("threads", "must be at least 1")
    if not cfg.snr.step > 0:
        raise ConfigError("snr.step", "must be positive")
    if cfg.snr.stop < cfg.snr.start:
        raise ConfigError("snr.stop", "must not be below snr.start")
    if cfg.analysis.edge not in EDGE_MODES:
        raise ConfigError("analysis.edge", f"must be one of {EDGE_MODES}")
    if not 0 <= cfg.analysis.outage_x < 100:
        raise ConfigError("analysis.outage_x", "must be in [0, 100)")
    if cfg.analysis.w_max < 1:
        raise ConfigError("analysis.w_max", "must be at least 1")
    if cfg.channel.model not in ("cm1", "sv", "rayleigh", "awgn"):
        raise ConfigError("channel.model", "must be cm1, sv, rayleigh or awgn")
    if cfg.channel.count < 1:
        raise ConfigError("channel.count", "must be at least 1")
    if cfg.interleaver.preset not in ("mbofdm", "block", "identity", "file"):
        raise ConfigError("interleaver.preset", "must be mbofdm, block, identity or file")
    if cfg.interleaver.preset == "file" and not cfg.interleaver.path:
        raise ConfigError("interleaver.path", "required when preset is 'file'")
    if cfg.interleaver.preset == "block" and not cfg.interleaver.stages:
        raise ConfigError("interleaver.stages", "required when preset is 'block'")
    if cfg.variability.subsets < 1:
        raise ConfigError("variability.subsets", "must be at least 1")
    for k, lvl in enumerate(cfg.compare.ber_levels):
        if not 0 < lvl < 1:
            raise ConfigError(f"compare.ber_levels[{k}]", "must be in (0, 1)")
    make_code(cfg.code)
    return cfg


def parse_config(text: str) -> ExperimentConfig:
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError("", f"not valid YAML ({exc})") from None
    return validate(_from_dict(ExperimentConfig, data))


def load_config(path) -> ExperimentConfig:
    return parse_config(Path(path).read_text())


def _strip(obj):
    if dataclasses.is_dataclass(obj):
        return {f.name: _strip(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
    if isinstance(obj, list):
        return [_strip(v) for v in obj]
    if isinstance(obj, dict):
        return {k: _strip(v) for k, v in obj.items()}
    return obj


def dump_config(cfg: ExperimentConfig) -> str:
    return yaml.safe_dump(_strip(cfg), sort_keys=True, default_flow_style=False)


def config_hash(cfg: ExperimentConfig) -> str:
    return hashlib.sha256(dump_config(cfg).encode()).hexdigest()


# ---------------------------------------------------------------------------
# building objects


def make_code(cc: CodeConfig) -> CodeSpec:
    if cc.generators is None:
        if not cc.preset:
            raise ConfigError("code", "give a preset or explicit generators")
        try:
            base = code_preset(cc.preset)
        except KeyError as exc:
            raise ConfigError("code.preset", exc.args[0]) from None
        if cc.repetition == 1:
            return base
        try:
            return dataclasses.replace(base, repetition=base.repetition * cc.repetition, nominal_rate=None)
        except ValueError as exc:
            raise ConfigError("code.repetition", str(exc)) from None
    if cc.constraint_length is None:
        raise ConfigError("code.constraint_length", "required with explicit generators")
    try:
        gens = tuple(int(g, 8) for g in cc.generators)
    except ValueError:
        raise ConfigError("code.generators", "generators must be octal strings") from None
    punct = None
    if cc.puncture is not None:
        if any(set(row) - {"0", "1"} for row in cc.puncture):
            raise ConfigError("code.puncture", "rows must be strings of 0 and 1")
        punct = tuple(tuple(ch == "1" for ch in row) for row in cc.puncture)
        if len({len(r) for r in punct}) > 1:
            raise ConfigError("code.puncture", "rows must have equal length")
    try:
        return CodeSpec(cc.constraint_length, gens, puncture=punct, repetition=cc.repetition,
                        name=cc.preset or "")
    except ValueError as exc:
        raise ConfigError("code", str(exc)) from None


def make_constellation_cfg(cfg: ExperimentConfig) -> Constellation:
    return make_constellation(cfg.modulation)


def n_tones(cfg: ExperimentConfig) -> int:
    if cfg.channel.model in ("cm1", "sv"):
        return mbofdm_tone_grid().N
    return cfg.channel.n_tones


def make_permutation(cfg: ExperimentConfig) -> Permutation:
    ic = cfg.interleaver
    m = make_constellation_cfg(cfg).bits_per_symbol
    N = n_tones(cfg)
    L_c = N * m
    if ic.preset == "file":
        perm = load_permutation(ic.path)
        if perm.length != L_c:
            raise ConfigError("interleaver.path", f"permutation has length {perm.length}, need {L_c}")
        return perm
    try:
        if ic.preset == "identity":
            spec = InterleaverSpec(length=L_c)
        elif ic.preset == "block":
            stages = tuple(BlockStage(rows=s[0], cols=s[1]) for s in ic.stages)
            spec = InterleaverSpec(length=L_c, stages=stages)
        else:
            spec = mbofdm_spec(N, m, n_symbols=ic.n_symbols, tone_rows=ic.tone_rows)
        return build(spec)
    except (ValueError, IndexError) as exc:
        raise ConfigError("interleaver", str(exc)) from None


def sv_params(cfg: ExperimentConfig) -> SVParams:
    base = channel_preset("cm1")
    if not cfg.channel.sv:
        return base
    names = {f.name for f in dataclasses.fields(SVParams)} - {"name", "nlos"}
    for key in cfg.channel.sv:
        if key not in names:
            raise ConfigError(f"channel.sv.{key}", "unknown SV parameter")
    try:
        return dataclasses.replace(base, name="sv", **cfg.channel.sv)
    except ValueError as exc:
        raise ConfigError("channel.sv", str(exc)) from None


def shadow_sigma_db(cfg: ExperimentConfig) -> float:
    return sv_params(cfg).shadow_sigma_db if cfg.channel.model in ("cm1", "sv") else 0.0


def channel_seed(cfg: ExperimentConfig) -> int:
    return cfg.seed if cfg.channel.seed is None else cfg.channel.seed


def load_correlation(cfg: ExperimentConfig) -> CorrelationMatrix | None:
    if cfg.channel.correlation is None:
        return None
    corr = CorrelationMatrix.load(cfg.channel.correlation)
    if corr.N != n_tones(cfg):
        raise ValueError(f"correlation file is {corr.N}x{corr.N}, config uses {n_tones(cfg)} tones")
    return corr


def make_ensemble(cfg: ExperimentConfig, count: int | None = None) -> Ensemble:
    """Load the configured ensemble file or generate the realizations."""
    cc = cfg.channel
    count = cc.count if count is None else count
    N = n_tones(cfg)
    if cc.ensemble is not None:
        ens = Ensemble.load(cc.ensemble)
        if ens.N != N:
            raise ValueError(f"ensemble has {ens.N} tones, config uses {N}")
        if ens.count < count:
            raise ValueError(f"ensemble holds {ens.count} realizations, {count} requested")
        return ens.subset(slice(0, count))
    seed = channel_seed(cfg)
    if cc.model in ("cm1", "sv"):
        return generate_sv_ensemble(sv_params(cfg), mbofdm_tone_grid(), count, seed, threads=cfg.threads)
    if cc.model == "rayleigh":
        corr = load_correlation(cfg)
        sigma = np.eye(N) if corr is None else corr.sigma
        return generate_rayleigh_ensemble(sigma, count, seed)
    return Ensemble(h=np.ones((count, N), dtype=complex), G=np.ones(count), model_id="awgn", seed=seed)


def snr_grid_db(cfg: ExperimentConfig) -> np.ndarray:
    s = cfg.snr
    n = int(np.floor((s.stop - s.start) / s.step + 1e-9)) + 1
    return np.round(s.start + s.step * np.arange(n), 10)


def snr_points(cfg: ExperimentConfig, code: CodeSpec) -> list[SnrPoint]:
    m = make_constellation_cfg(cfg).bits_per_symbol
    return [SnrPoint(float(db), float(Fraction(code.rate)), m) for db in snr_grid_db(cfg)]


def tone_grid(cfg: ExperimentConfig):
    if cfg.channel.model in ("cm1", "sv"):
        return mbofdm_tone_grid()
    return full_tone_grid(cfg.channel.n_tones)
