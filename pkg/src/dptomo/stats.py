"""Event sampling and bootstrap uncertainty over random probe subsets."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from . import fit


def multinomial_sample(p, n, seed=None):
    """Counts of ``n`` events drawn from the categorical distribution ``p``."""
    p = np.asarray(p, dtype=float)
    if np.any(p < 0) or abs(p.sum() - 1) > 1e-9:
        raise ValueError("p must be a probability vector")
    if n < 0:
        raise ValueError("number of events must be nonnegative")
    rng = np.random.default_rng(seed)
    return rng.multinomial(int(n), p / p.sum())


@dataclass
class BootstrapEnsemble:
    members: list
    M_used: int
    repetitions: int
    view: str = "joint"
    dropped: list = field(default_factory=list)
    results: list = field(default_factory=list, repr=False)

    def __post_init__(self):
        if not self.members:
            raise ValueError("ensemble has no members")

    @property
    def stack(self):
        return np.array(self.members)

    @property
    def mean(self):
        return self.stack.mean(axis=0)

    @property
    def std(self):
        return self.stack.std(axis=0)

    def statistic(self, fn):
        """Mean and standard deviation of ``fn(member)`` over the ensemble."""
        values = np.array([fn(P) for P in self.members])
        return float(values.mean()), float(values.std())


def bootstrap_reconstruct(library, data, M, repetitions=100, view="joint", d=None, seed=0, cfg=None, problem=None):
    """Repeat the fit on random size-``M`` probe subsets.

    Each repetition draws its subset (uniformly, without replacement) from a
    generator spawned from ``seed`` and the repetition index, so results do
    not depend on execution order. A prebuilt ``problem`` from
    :func:`fit.assemble` may be passed to skip the reduction step.
    """
    if repetitions < 1:
        raise ValueError("need at least one repetition")
    if problem is None:
        problem = fit.assemble(library, data, view, d, cfg)
    n = problem.n_probes
    if not 1 <= M <= n:
        raise ValueError(f"subset size {M} outside 1..{n}")
    members, results, dropped = [], [], []
    for rep, ss in enumerate(np.random.SeedSequence(seed).spawn(repetitions)):
        rng = np.random.default_rng(ss)
        subset = np.sort(rng.choice(n, size=M, replace=False))
        try:
            res = fit.solve(problem.subset(subset))
        except fit.InfeasibleProblemError:
            dropped.append(rep)
            continue
        members.append(res.P)
        results.append(res)
    if not members:
        raise fit.InfeasibleProblemError("every bootstrap repetition failed")
    if dropped:
        warnings.warn(f"{len(dropped)} repetitions dropped", stacklevel=2)
    return BootstrapEnsemble(members, M, repetitions, problem.view, dropped, results)
