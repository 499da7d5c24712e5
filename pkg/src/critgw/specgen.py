"""Random critical process generator for property testing.

A random finite-support offspring law is almost never critical, so raw
weights are tilted through the one-parameter family

    p_theta(n)  proportional to  w(n) * theta**|n|

whose spectral radius sweeps continuously from 0 (all mass on extinction)
past 1 (mass on large broods), and the critical theta is pinned by
root-finding.  Badly conditioned draws (subdominant eigenvalue close to the
spectral radius, tiny eigenvector entries, near-degenerate fluctuation form)
are rejected so identity checks keep comfortable numerical headroom.
"""

from __future__ import annotations

import numpy as np
from scipy.optimize import brentq

from .process import (
    ProcessSpec,
    frobenius_eigenpair,
    is_primitive,
    mean_matrix,
    mixture_quad_form,
    validate_spec,
)

__all__ = ["random_critical_spec"]


def _spectral_radius(m):
    return float(np.abs(np.linalg.eigvals(m)).max())


def _tilted(counts, weights, theta):
    probs = []
    for cnt, w in zip(counts, weights):
        p = w * theta ** cnt.sum(axis=1)
        probs.append(p / p.sum())
    return probs


def _random_support(rng, num_types, max_rules, max_count):
    """Supports containing extinction and at least one brood of 2+, with a
    connectivity pattern that is primitive."""
    counts = []
    for _ in range(num_types):
        n_extra = int(rng.integers(1, max_rules))
        rows = {(0,) * num_types}
        while len(rows) < n_extra + 1:
            rows.add(tuple(int(x) for x in rng.integers(0, max_count + 1, size=num_types)))
        rows = sorted(rows)
        if max(sum(r) for r in rows) < 2:
            big = list(rng.integers(0, max_count + 1, size=num_types))
            big[int(rng.integers(num_types))] = 2
            rows.append(tuple(big))
        counts.append(np.array(sorted(set(rows)), dtype=np.int64))
    return counts


def random_critical_spec(
    rng,
    num_types=None,
    max_rules=4,
    max_count=3,
    max_attempts=200,
    subdominant_cap=0.8,
    min_component=0.02,
    min_quad=0.05,
):
    """Draw a validated critical process.

    rng: numpy Generator.  num_types defaults to a draw from {1, 2, 3}.
    Raises RuntimeError if no acceptable spec is found in max_attempts.
    """
    for _ in range(max_attempts):
        v_types = int(rng.integers(1, 4)) if num_types is None else int(num_types)
        counts = _random_support(rng, v_types, max_rules, max_count)
        weights = [rng.uniform(0.2, 1.0, size=c.shape[0]) for c in counts]

        pattern = np.zeros((v_types, v_types))
        for k, cnt in enumerate(counts):
            pattern[k] = cnt.sum(axis=0)
        if not is_primitive(pattern):
            continue

        def rho_of(theta):
            probs = _tilted(counts, weights, theta)
            m = np.array([p @ c for p, c in zip(probs, counts)])
            return _spectral_radius(m)

        lo, hi = 1e-3, 1.0
        if rho_of(lo) >= 1.0:
            continue
        tries = 0
        while rho_of(hi) <= 1.0:
            hi *= 2.0
            tries += 1
            if tries > 60:
                break
        if tries > 60:
            continue
        theta = brentq(lambda t: rho_of(t) - 1.0, lo, hi, xtol=1e-15, rtol=8.9e-16)
        probs = _tilted(counts, weights, theta)
        spec = ProcessSpec(tuple(counts), tuple(p for p in probs))

        m = mean_matrix(spec)
        eigs = np.sort(np.abs(np.linalg.eigvals(m)))[::-1]
        if len(eigs) > 1 and eigs[1] > subdominant_cap:
            continue
        report = validate_spec(spec)
        if not report.ok:
            continue
        eigen = report.eigen
        if eigen.v.min() < min_component or eigen.u.min() < min_component:
            continue
        if report.quad_form_at_u < min_quad:
            continue
        return spec
    raise RuntimeError(f"no acceptable critical spec in {max_attempts} attempts")
