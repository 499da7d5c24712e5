"""Estimators computed from a batch of sampled trees.

Three estimators: the left Frobenius eigenvector from relative type
frequencies, offspring probabilities from relative rule frequencies, and the
right Frobenius eigenvector component from depth-discounted node sums with a
discount schedule tied to the sample size.
"""

from __future__ import annotations

import csv
import json
import warnings
from dataclasses import dataclass, field

import numpy as np

from .limits import additive_mean

__all__ = [
    "EstimateReport",
    "EmptySampleError",
    "TypeNeverObservedError",
    "ZeroAdditiveMeanWarning",
    "estimate_v",
    "estimate_offspring",
    "estimate_u",
    "discount_for",
    "additive_sum",
]


class EmptySampleError(ValueError):
    """No usable trees in the batch."""


class TypeNeverObservedError(ValueError):
    """The requested type never occurred in the sample."""


class ZeroAdditiveMeanWarning(UserWarning):
    """The additive statistic has (numerically) zero mean per rule; the
    square-root limit scaling is degenerate."""


def estimate_v(batch):
    """Relative frequencies of types pooled over all trees:
    (sum of per-type counts) / (total particles).  Censored trees are
    included; their truncation barely moves type frequencies."""
    total = int(batch.size.sum())
    if batch.n_trees == 0 or total == 0:
        raise EmptySampleError("no particles in batch")
    return batch.f.sum(axis=0) / total


def estimate_offspring(batch, j):
    """Relative frequencies of the tracked rules of type j:
    applications of each rule / particles of type j.  Untracked rules are
    absent from the result rather than reported as zero."""
    fj = int(batch.f[:, j].sum())
    if fj == 0:
        raise TypeNeverObservedError(f"type {j} never observed")
    out = {}
    for t, (jt, n) in enumerate(batch.config.tracked_rules):
        if jt != j:
            continue
        out[n] = int(batch.tracked_counts[:, t].sum()) / fj
    return out


def discount_for(num_trees, beta):
    """Discount schedule 1 - N^(-beta); beta in (0, 1/2) keeps the
    almost-sure convergence of the right-eigenvector estimator."""
    if not 0.0 < beta < 0.5:
        raise ValueError(f"beta must lie in (0, 1/2), got {beta!r}")
    return 1.0 - float(num_trees) ** (-beta)


def estimate_u(batch, beta=0.25):
    """Right-eigenvector component at the root type:
    (1 - lam_N)/N * sum of depth-discounted node sums at lam_N = 1 - N^-beta,
    re-evaluated from stored depth histograms.  Censored trees are excluded
    (their deep levels are missing, which is exactly what this statistic
    weighs), and N counts the uncensored trees."""
    keep = ~batch.censored
    n = int(keep.sum())
    if n == 0:
        raise EmptySampleError("no uncensored trees in batch")
    lam = discount_for(n, beta)
    sums = batch.depth_discounted(lam)[keep]
    return (1.0 - lam) / n * float(sums.sum())


def additive_sum(batch, spec, eigen, g, zero_tol=1e-12):
    """Scaled additive statistic N^-2 sum G(tree) over the batch together
    with the per-rule mean constant of its limit law.

    g must be the same value tables the batch was sampled with (the per-tree
    sums are accumulated during sampling; rule-level detail is not stored).
    """
    if batch.g_sum is None:
        raise EmptySampleError("batch was sampled without additive value tables")
    n = batch.n_trees
    if n == 0:
        raise EmptySampleError("empty batch")
    mean = additive_mean(spec, eigen, g)
    if abs(mean) <= zero_tol:
        warnings.warn(
            "additive statistic has zero mean per rule; limit scaling degenerate",
            ZeroAdditiveMeanWarning,
        )
    return float(batch.g_sum.sum()) / n**2, mean


@dataclass
class EstimateReport:
    """All estimates from one batch, with the denominators that produced
    them and enough metadata to reproduce the run."""

    num_trees: int
    censored_count: int
    master_seed: int
    v_hat: np.ndarray
    p_hat: dict  # type index -> {offspring tuple: estimate}
    u_hat: float | None
    beta: float | None
    root_type: int
    total_particles: int
    type_totals: np.ndarray

    @classmethod
    def from_batch(cls, batch, offspring_types=(), beta=None):
        v_hat = estimate_v(batch)
        p_hat = {}
        for j in sorted(set(int(j) for j in offspring_types)):
            p_hat[j] = estimate_offspring(batch, j)
        u_hat = None
        if beta is not None:
            u_hat = estimate_u(batch, beta)
        return cls(
            num_trees=batch.n_trees,
            censored_count=batch.censored_count,
            master_seed=batch.config.master_seed,
            v_hat=v_hat,
            p_hat=p_hat,
            u_hat=u_hat,
            beta=beta,
            root_type=batch.config.root_type,
            total_particles=int(batch.size.sum()),
            type_totals=batch.f.sum(axis=0),
        )

    def rows(self, truth=None):
        """Flat (name, estimate, truth, abs_error) rows; truth may supply
        entries keyed like the row names."""
        truth = truth or {}

        def row(name, value):
            ref = truth.get(name)
            err = abs(value - ref) if ref is not None else None
            return (name, value, ref, err)

        out = [row(f"v_hat_{k + 1}", float(x)) for k, x in enumerate(self.v_hat)]
        for j, table in self.p_hat.items():
            for n, p in sorted(table.items()):
                out.append(row(f"p_hat_{j + 1}{list(n)}", float(p)))
        if self.u_hat is not None:
            out.append(row(f"u_hat_{self.root_type + 1}", float(self.u_hat)))
        return out

    def to_json_dict(self):
        return {
            "num_trees": self.num_trees,
            "censored_count": self.censored_count,
            "master_seed": self.master_seed,
            "root_type": self.root_type + 1,
            "total_particles": self.total_particles,
            "type_totals": [int(x) for x in self.type_totals],
            "v_hat": [float(x) for x in self.v_hat],
            "p_hat": {
                str(j + 1): {str(list(n)): float(p) for n, p in sorted(table.items())}
                for j, table in self.p_hat.items()
            },
            "u_hat": None if self.u_hat is None else float(self.u_hat),
            "beta": self.beta,
        }

    def to_csv(self, path, truth=None, header_comment=None):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            if header_comment:
                fh.write(f"# {header_comment}\n")
            writer = csv.writer(fh)
            writer.writerow(["name", "estimate", "truth", "abs_error"])
            for name, value, ref, err in self.rows(truth):
                writer.writerow(
                    [
                        name,
                        f"{value:.17g}",
                        "" if ref is None else f"{ref:.17g}",
                        "" if err is None else f"{err:.17g}",
                    ]
                )

    def to_json(self, path, header=None):
        payload = self.to_json_dict()
        if header:
            payload = {**header, **payload}
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True)
            fh.write("\n")
