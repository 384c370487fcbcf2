"""Experiment configuration: a JSON document that fully determines a run.

All randomness is seeded explicitly; a config round-trips through its file
form losslessly and two runs of the same config produce byte-identical data
files.  Validation errors name the offending key.

Schema (JSON object):

    problem:     {"kind": "logistic"|"sigmoid_nonconvex"|"median"|"relu_net",
                  "n": int, "p": int, "seed": int}
    strategy:    {"variant": "constant", "alpha": float}
               | {"variant": "decreasing_sqrt"}
               | {"variant": "decreasing_cbrt", "L": float | "auto"}
               | {"variant": "adaptive", "beta": float|"auto", "delta": float|"auto"}
    eval_policy: {"variant": "full_gradient"|"incremental"}
               | {"variant": "mini_batch", "b": int}
               | {"variant": "delayed_async", "max_delay": int, "seed": int}
               | {"variant": "convex_mix", "seed": int}
    perm_policy: {"variant": "identity"} | {"variant": "fixed", "perm": [..]}
               | {"variant": "shuffled", "seed": int} | {"variant": "adversarial"}
    x0:          {"kind": "zero"} | {"kind": "ball", "radius": float, "seed": int}
    epochs:      int >= 1
    record_level: "full" | "epoch_only"   (default "epoch_only")
    checks:      [check names]            (default [])
    output_dir:  str                      (default "out")

"auto" resolves against the instantiated problem (L, or beta = n^2 and
delta = n^3 for the adaptive rule).
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
import numpy as np

from .engine import RunConfig
from .problems import PROBLEM_KINDS, FiniteSumProblem, make_problem
from .schedules import (
    ConvexMix,
    DelayedAsync,
    FixedPermutation,
    FullGradient,
    Identity,
    Incremental,
    MiniBatch,
    ShuffledPerEpoch,
    AdversarialMaxNorm,
    counter_rng,
)
from .steps import Adaptive, Constant, DecreasingCbrtWithL, DecreasingSqrt

_X0_TAG = 11


class ConfigError(ValueError):
    """Malformed experiment configuration; the message names the key."""


@dataclass
class ExperimentConfig:
    problem: dict
    strategy: dict
    eval_policy: dict = field(default_factory=lambda: {"variant": "incremental"})
    perm_policy: dict = field(default_factory=lambda: {"variant": "identity"})
    x0: dict = field(default_factory=lambda: {"kind": "zero"})
    epochs: int = 1
    record_level: str = "epoch_only"
    checks: list = field(default_factory=list)
    output_dir: str = "out"

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, doc: dict) -> "ExperimentConfig":
        known = {
            "problem",
            "strategy",
            "eval_policy",
            "perm_policy",
            "x0",
            "epochs",
            "record_level",
            "checks",
            "output_dir",
        }
        for key in doc:
            if key not in known:
                raise ConfigError(f"unknown config key {key!r}")
        for key in ("problem", "strategy"):
            if key not in doc:
                raise ConfigError(f"missing config key {key!r}")
        cfg = cls(
            problem=dict(doc["problem"]),
            strategy=dict(doc["strategy"]),
            eval_policy=dict(doc.get("eval_policy", {"variant": "incremental"})),
            perm_policy=dict(doc.get("perm_policy", {"variant": "identity"})),
            x0=dict(doc.get("x0", {"kind": "zero"})),
            epochs=doc.get("epochs", 1),
            record_level=doc.get("record_level", "epoch_only"),
            checks=list(doc.get("checks", [])),
            output_dir=doc.get("output_dir", "out"),
        )
        cfg.validate()
        return cfg

    def validate(self) -> None:
        kind = self.problem.get("kind")
        if kind not in PROBLEM_KINDS:
            raise ConfigError(f"problem.kind must be one of {PROBLEM_KINDS}, got {kind!r}")
        for key in ("n", "p", "seed"):
            if key not in self.problem:
                raise ConfigError(f"missing config key 'problem.{key}'")
            if not isinstance(self.problem[key], int):
                raise ConfigError(f"'problem.{key}' must be an integer")
        if self.problem["n"] < 1 or self.problem["p"] < 1:
            raise ConfigError("'problem.n' and 'problem.p' must be at least 1")
        if not isinstance(self.epochs, int) or self.epochs < 1:
            raise ConfigError("'epochs' must be an integer >= 1")
        if self.record_level not in ("full", "epoch_only"):
            raise ConfigError("'record_level' must be 'full' or 'epoch_only'")
        if self.x0.get("kind") not in ("zero", "ball"):
            raise ConfigError("'x0.kind' must be 'zero' or 'ball'")
        if self.x0.get("kind") == "ball":
            for key in ("radius", "seed"):
                if key not in self.x0:
                    raise ConfigError(f"missing config key 'x0.{key}'")

    def build(self) -> RunConfig:
        self.validate()
        problem = make_problem(
            self.problem["kind"],
            self.problem["n"],
            self.problem["p"],
            self.problem["seed"],
        )
        return RunConfig(
            problem=problem,
            strategy=build_strategy(self.strategy, problem),
            eval_policy=build_eval_policy(self.eval_policy),
            perm_policy=build_perm_policy(self.perm_policy),
            x0=build_x0(self.x0, problem),
            epochs=self.epochs,
            record_level=self.record_level,
        )


def build_strategy(spec: dict, problem: FiniteSumProblem):
    variant = spec.get("variant")
    n = problem.n
    if variant == "constant":
        if "alpha" not in spec:
            raise ConfigError("missing config key 'strategy.alpha'")
        return Constant(alpha=float(spec["alpha"]), n=n)
    if variant == "decreasing_sqrt":
        return DecreasingSqrt(n=n)
    if variant == "decreasing_cbrt":
        lip = spec.get("L", "auto")
        if lip == "auto":
            if problem.L is None:
                raise ConfigError("'strategy.L' = auto needs a smooth problem")
            lip = problem.L
        return DecreasingCbrtWithL(L=float(lip), n=n)
    if variant == "adaptive":
        beta = spec.get("beta", "auto")
        delta = spec.get("delta", "auto")
        beta = float(n) ** 2 if beta == "auto" else float(beta)
        delta = float(n) ** 3 if delta == "auto" else float(delta)
        return Adaptive(delta=delta, beta=beta, n=n)
    raise ConfigError(f"unknown 'strategy.variant' {variant!r}")


def build_eval_policy(spec: dict):
    variant = spec.get("variant")
    if variant == "full_gradient":
        return FullGradient()
    if variant == "incremental":
        return Incremental()
    if variant == "mini_batch":
        if "b" not in spec:
            raise ConfigError("missing config key 'eval_policy.b'")
        return MiniBatch(b=int(spec["b"]))
    if variant == "delayed_async":
        for key in ("max_delay", "seed"):
            if key not in spec:
                raise ConfigError(f"missing config key 'eval_policy.{key}'")
        return DelayedAsync(max_delay=int(spec["max_delay"]), seed=int(spec["seed"]))
    if variant == "convex_mix":
        if "seed" not in spec:
            raise ConfigError("missing config key 'eval_policy.seed'")
        return ConvexMix(seed=int(spec["seed"]))
    raise ConfigError(f"unknown 'eval_policy.variant' {variant!r}")


def build_perm_policy(spec: dict):
    variant = spec.get("variant")
    if variant == "identity":
        return Identity()
    if variant == "fixed":
        if "perm" not in spec:
            raise ConfigError("missing config key 'perm_policy.perm'")
        return FixedPermutation(perm=tuple(spec["perm"]))
    if variant == "shuffled":
        if "seed" not in spec:
            raise ConfigError("missing config key 'perm_policy.seed'")
        return ShuffledPerEpoch(seed=int(spec["seed"]))
    if variant == "adversarial":
        return AdversarialMaxNorm()
    raise ConfigError(f"unknown 'perm_policy.variant' {variant!r}")


def build_x0(spec: dict, problem: FiniteSumProblem) -> np.ndarray:
    if spec.get("kind") == "zero":
        return np.zeros(problem.p)
    radius = float(spec["radius"])
    rng = counter_rng(int(spec["seed"]), _X0_TAG)
    direction = rng.standard_normal(problem.p)
    direction /= np.linalg.norm(direction)
    return radius * rng.random() ** (1.0 / problem.p) * direction


def load_config(path) -> ExperimentConfig:
    with open(path) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as err:
            raise ConfigError(f"config file is not valid JSON: {err}") from err
    return ExperimentConfig.from_dict(doc)


def save_config(config: ExperimentConfig, path) -> None:
    with open(path, "w") as fh:
        json.dump(config.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")


def set_key(doc: dict, dotted: str, value) -> None:
    """Set a dotted path like 'strategy.alpha' in a nested config dict."""
    parts = dotted.split(".")
    here = doc
    for part in parts[:-1]:
        if part not in here or not isinstance(here[part], dict):
            here[part] = {}
        here = here[part]
    here[parts[-1]] = value


def parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text
