"""Experiment configuration: JSON file in, validated dataclass out."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

from . import fem, problem as problem_mod
from .errors import ConfigError

PRESETS = ("heat-rect", "elasticity-lshape")


@dataclass
class ExperimentConfig:
    preset: str = "heat-rect"
    tolerances: list = field(default_factory=lambda: [0.5, 0.25])
    levels: list = field(default_factory=lambda: [2, 3])
    m_hat: int = 180
    gamma: float = 0.5
    s: float = 1.0
    h_coarse: float | None = None
    h_fine: float | None = None
    fraction_q: int = 64
    repetitions: int = 1
    mc_repetitions: int | None = None
    mc_pilot: int = 64
    mc_baseline: bool = True
    reference_repetitions: int = 4
    master_seed: int = 20240901
    out_dir: str = "out"
    threads: int = 1
    solver: str = "direct"
    problem: dict = field(default_factory=dict)

    def validate(self):
        if self.preset not in PRESETS:
            raise ConfigError("preset", f"must be one of {PRESETS}")
        if not self.tolerances:
            raise ConfigError("tolerances", "must not be empty")
        if any(t <= 0 for t in self.tolerances):
            raise ConfigError("tolerances", "must be positive")
        if any(b >= a for a, b in zip(self.tolerances, self.tolerances[1:])):
            raise ConfigError("tolerances", "must be strictly decreasing")
        if not self.levels or any(int(l) < 1 for l in self.levels):
            raise ConfigError("levels", "need at least one level count >= 1")
        if self.repetitions < 1:
            raise ConfigError("repetitions", "must be at least 1")
        if self.m_hat < 2:
            raise ConfigError("m_hat", "need at least two pilot samples")
        if not 0.0 < self.gamma < 1.0:
            raise ConfigError("gamma", "must lie in (0, 1)")
        if self.threads < 1:
            raise ConfigError("threads", "must be at least 1")
        if self.solver not in ("direct", "cg"):
            raise ConfigError("solver", "must be 'direct' or 'cg'")
        if self.reference_repetitions < 4:
            raise ConfigError("reference_repetitions", "need at least 4 repetitions")
        return self

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(data) - known
        if unknown:
            raise ConfigError(sorted(unknown)[0], "unknown configuration key")
        cfg = cls(**data)
        return cfg.validate()

    @classmethod
    def from_file(cls, path) -> "ExperimentConfig":
        with open(path, "r", encoding="utf-8") as fh:
            try:
                data = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ConfigError(str(path), f"not valid JSON: {exc}") from exc
        return cls.from_dict(data)

    def to_file(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")

    @property
    def mc_reps(self):
        return self.repetitions if self.mc_repetitions is None else self.mc_repetitions


def build_problem(config: ExperimentConfig):
    """Instantiate the preset problem with any explicit overrides."""
    solver = fem.SolverOptions(method=config.solver)
    kwargs = dict(config.problem)
    kwargs.setdefault("fraction_q", config.fraction_q)
    kwargs["solver"] = solver
    if config.preset == "heat-rect":
        prob = problem_mod.heat_rect_problem(**kwargs)
    else:
        prob = problem_mod.elasticity_lshape_problem(**kwargs)
    if config.h_coarse is not None:
        prob.coarse_level = fem.refinement_level(prob.partition, config.h_coarse)
    if config.h_fine is not None:
        prob.fine_level = fem.refinement_level(prob.partition, config.h_fine)
    if prob.fine_level < prob.coarse_level:
        raise ConfigError("h_fine", "must be finer than h_coarse")
    prob._validate_qoi()
    return prob
