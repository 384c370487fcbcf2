"""Evaluation-point policies and per-epoch query orders.

At inner step i of an epoch, the direction oracle is queried at a point
zhat_{K,i-1} lying in the convex hull of the epoch's earlier iterates
z_{K,0}, ..., z_{K,i-1}.  A policy returns the hull weights; the built-in
variants model the classical schemes:

    FullGradient   all mass on z_{K,0} = x_K       (batch gradient descent)
    Incremental    all mass on z_{K,i-1}           (pure incremental)
    MiniBatch(b)   mass on the batch's start point z_{K, b*floor((i-1)/b)}
    DelayedAsync   mass on z_{K, i-1-delay}, delay drawn per (K, i)
    ConvexMix      strictly positive Dirichlet weights (general hull case)

Draw-based policies use counter-based generators keyed on (seed, K, i), so
runs replay exactly without storing the draws.  Permutation policies decide
the order components are queried in; every epoch visits each component
exactly once.  Component indices are 0-based; inner positions are 1-based.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

# stream tags keep draw streams for different purposes disjoint
_TAG_DELAY = 1
_TAG_MIX = 2
_TAG_PERM = 3


def counter_rng(seed: int, *counters: int) -> np.random.Generator:
    """Deterministic generator for the given (seed, counters...) key."""
    if seed < 0:
        raise ValueError("seed must be nonnegative")
    return np.random.default_rng((int(seed),) + tuple(int(c) for c in counters))


# ---------------------------------------------------------------------------
# evaluation points
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FullGradient:
    pass


@dataclass(frozen=True)
class Incremental:
    pass


@dataclass(frozen=True)
class MiniBatch:
    b: int

    def __post_init__(self):
        if self.b < 1:
            raise ValueError("batch size must be at least 1")


@dataclass(frozen=True)
class DelayedAsync:
    max_delay: int
    seed: int

    def __post_init__(self):
        if self.max_delay < 0:
            raise ValueError("max_delay must be nonnegative")


@dataclass(frozen=True)
class ConvexMix:
    seed: int


EvalPointPolicy = Union[FullGradient, Incremental, MiniBatch, DelayedAsync, ConvexMix]


def eval_support(policy: EvalPointPolicy, K: int, i: int) -> Optional[int]:
    """Index j with zhat = z_{K,j} for single-point policies, None otherwise."""
    if i < 1:
        raise ValueError("inner index i must be at least 1")
    if isinstance(policy, FullGradient):
        return 0
    if isinstance(policy, Incremental):
        return i - 1
    if isinstance(policy, MiniBatch):
        return ((i - 1) // policy.b) * policy.b
    if isinstance(policy, DelayedAsync):
        delay = int(
            counter_rng(policy.seed, _TAG_DELAY, K, i).integers(0, policy.max_delay + 1)
        )
        return max(0, i - 1 - delay)
    return None


def eval_point(policy: EvalPointPolicy, K: int, i: int) -> np.ndarray:
    """Hull weights over (z_{K,0}, ..., z_{K,i-1}): nonnegative, summing to 1."""
    j = eval_support(policy, K, i)
    if j is not None:
        w = np.zeros(i)
        w[j] = 1.0
        return w
    return counter_rng(policy.seed, _TAG_MIX, K, i).dirichlet(np.ones(i))


def hull_point(weights: np.ndarray, points) -> np.ndarray:
    """Combination sum_j weights[j] * points[j], in increasing index order.

    Both the engine and the replay checker call this, so recomputing a
    stored zhat from its stored weights reproduces it bitwise.
    """
    nz = np.flatnonzero(weights)
    if nz.size == 0:
        raise ValueError("weights must have at least one nonzero entry")
    if nz.size == 1 and weights[nz[0]] == 1.0:
        return points[nz[0]].copy()
    acc = weights[nz[0]] * points[nz[0]]
    for j in nz[1:]:
        acc = acc + weights[j] * points[j]
    return acc


# ---------------------------------------------------------------------------
# permutations
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Identity:
    pass


@dataclass(frozen=True)
class FixedPermutation:
    perm: tuple

    def __post_init__(self):
        if sorted(self.perm) != list(range(len(self.perm))):
            raise ValueError("perm must be a 0-based permutation of range(n)")


@dataclass(frozen=True)
class ShuffledPerEpoch:
    seed: int


@dataclass(frozen=True)
class AdversarialMaxNorm:
    """Queries components by descending ||d_i(x_K)|| (worst-case probing)."""


PermutationPolicy = Union[Identity, FixedPermutation, ShuffledPerEpoch, AdversarialMaxNorm]


def permutation(
    policy: PermutationPolicy,
    K: int,
    n: int,
    probe: Optional[np.ndarray] = None,
) -> np.ndarray:
    """0-based query order for epoch K; always a bijection on range(n)."""
    if n < 1:
        raise ValueError("n must be at least 1")
    if isinstance(policy, Identity):
        return np.arange(n)
    if isinstance(policy, FixedPermutation):
        if len(policy.perm) != n:
            raise ValueError("fixed permutation length does not match n")
        return np.asarray(policy.perm, dtype=int)
    if isinstance(policy, ShuffledPerEpoch):
        return counter_rng(policy.seed, _TAG_PERM, K).permutation(n)
    if probe is None:
        raise ValueError("AdversarialMaxNorm needs per-index probe values")
    probe = np.asarray(probe, dtype=float)
    if probe.shape != (n,):
        raise ValueError("probe must have one value per component")
    return np.argsort(-probe, kind="stable")


def needs_probe(policy: PermutationPolicy) -> bool:
    return isinstance(policy, AdversarialMaxNorm)


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------


def eval_policy_to_dict(policy: EvalPointPolicy) -> dict:
    if isinstance(policy, FullGradient):
        return {"variant": "full_gradient"}
    if isinstance(policy, Incremental):
        return {"variant": "incremental"}
    if isinstance(policy, MiniBatch):
        return {"variant": "mini_batch", "b": policy.b}
    if isinstance(policy, DelayedAsync):
        return {"variant": "delayed_async", "max_delay": policy.max_delay, "seed": policy.seed}
    return {"variant": "convex_mix", "seed": policy.seed}


def eval_policy_from_dict(doc: dict) -> EvalPointPolicy:
    variant = doc.get("variant")
    if variant == "full_gradient":
        return FullGradient()
    if variant == "incremental":
        return Incremental()
    if variant == "mini_batch":
        return MiniBatch(b=doc["b"])
    if variant == "delayed_async":
        return DelayedAsync(max_delay=doc["max_delay"], seed=doc["seed"])
    if variant == "convex_mix":
        return ConvexMix(seed=doc["seed"])
    raise ValueError(f"unknown eval policy variant {variant!r}")


def perm_policy_to_dict(policy: PermutationPolicy) -> dict:
    if isinstance(policy, Identity):
        return {"variant": "identity"}
    if isinstance(policy, FixedPermutation):
        return {"variant": "fixed", "perm": list(policy.perm)}
    if isinstance(policy, ShuffledPerEpoch):
        return {"variant": "shuffled", "seed": policy.seed}
    return {"variant": "adversarial"}


def perm_policy_from_dict(doc: dict) -> PermutationPolicy:
    variant = doc.get("variant")
    if variant == "identity":
        return Identity()
    if variant == "fixed":
        return FixedPermutation(perm=tuple(doc["perm"]))
    if variant == "shuffled":
        return ShuffledPerEpoch(seed=doc["seed"])
    if variant == "adversarial":
        return AdversarialMaxNorm()
    raise ValueError(f"unknown permutation policy variant {variant!r}")
