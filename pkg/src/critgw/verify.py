"""Monte Carlo comparison of sampled-tree statistics against their
closed-form limit laws: empirical characteristic functions on fixed grids,
Kolmogorov-Smirnov distance against the one-sided stable distribution, and
error curves for the right-eigenvector estimator.

All runs are reproducible bit for bit from (configuration, master seed):
replicate r uses a seed derived from (master_seed, r), and results are
merged in replicate order regardless of worker scheduling.
"""

from __future__ import annotations

import csv
import json
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .estimators import EmptySampleError, estimate_u, estimate_offspring, estimate_v
from .limits import (
    levy_cdf,
    s_lambda,
    theorem1_cf,
    theorem1_scale,
    theorem2_cf,
    theorem3_cf,
    unit_directions,
)
from .process import validate_spec
from .sampler import SamplerConfig, derive_key, sample_batch

__all__ = [
    "VerificationReport",
    "ExcessiveCensoringError",
    "empirical_cf",
    "empirical_joint_cf",
    "ks_statistic",
    "default_t_grid",
    "default_ck_grid",
    "verify_theorem1",
    "verify_theorem2",
    "verify_theorem3",
    "verify_theorem4",
    "derive_seed",
]


class ExcessiveCensoringError(RuntimeError):
    """More than the allowed fraction of trees hit the node cap; the heavy
    tail driving the limit law is truncated and the run is invalid."""


def derive_seed(master_seed, *ids):
    """Derived 63-bit integer seed for a sub-experiment."""
    return int(derive_key(master_seed, *ids)[0] >> 1)


def empirical_cf(samples, t):
    """Mean of exp(i t x) over scalar samples."""
    samples = np.asarray(samples, dtype=np.float64)
    if samples.size == 0:
        raise EmptySampleError("no samples")
    return complex(np.exp(1j * t * samples).mean())


def empirical_joint_cf(vectors, scalars, c, k_imag):
    """Mean of exp(i (c . z + K w)) over paired samples (z, w)."""
    vectors = np.asarray(vectors, dtype=np.float64)
    scalars = np.asarray(scalars, dtype=np.float64)
    if vectors.shape[0] == 0:
        raise EmptySampleError("no samples")
    phases = vectors @ np.asarray(c, dtype=np.float64) + k_imag * scalars
    return complex(np.exp(1j * phases).mean())


def ks_statistic(samples, cdf):
    """Exact Kolmogorov-Smirnov distance between the empirical law of the
    samples and a continuous reference distribution function."""
    x = np.sort(np.asarray(samples, dtype=np.float64))
    n = x.shape[0]
    if n == 0:
        raise EmptySampleError("no samples")
    ref = cdf(x)
    grid = np.arange(1, n + 1) / n
    return float(np.maximum(np.abs(grid - ref), np.abs(grid - 1.0 / n - ref)).max())


def default_t_grid():
    """Moderate |t| values where stable-type CF discrepancies are visible."""
    base = np.array([0.1, 0.2, 0.5, 1.0, 2.0, 5.0])
    return np.concatenate([-base[::-1], base])


def default_ck_grid(dim, seed, v=None, k_values=(-1.0, -0.3, 0.3, 1.0)):
    """Eight (c, K) pairs: two fixed-seed unit directions crossed with the
    default K values."""
    dirs = unit_directions(dim, 2, seed, v=v)
    return [(dirs[i], float(k)) for i in range(dirs.shape[0]) for k in k_values]


@dataclass
class VerificationReport:
    """Outcome of one verification experiment."""

    experiment: str
    theorem: str
    master_seed: int
    num_trees: object
    replicates: int
    censored_fraction: float
    tolerance: dict
    passed: bool
    sup_cf_distance: float | None = None
    avg_cf_distance: float | None = None
    ks_statistic: float | None = None
    table_header: list = field(default_factory=list)
    table: list = field(default_factory=list)
    extra: dict = field(default_factory=dict)

    def to_json_dict(self):
        return {
            "experiment": self.experiment,
            "theorem": self.theorem,
            "master_seed": self.master_seed,
            "num_trees": self.num_trees,
            "replicates": self.replicates,
            "censored_fraction": self.censored_fraction,
            "tolerance": self.tolerance,
            "passed": self.passed,
            "sup_cf_distance": self.sup_cf_distance,
            "avg_cf_distance": self.avg_cf_distance,
            "ks_statistic": self.ks_statistic,
            "table_header": list(self.table_header),
            "table": [list(row) for row in self.table],
            "extra": self.extra,
        }

    def to_json(self, path, header=None):
        payload = self.to_json_dict()
        if header:
            payload = {**header, **payload}
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True)
            fh.write("\n")

    def to_csv(self, path, header_comment=None):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            if header_comment:
                fh.write(f"# {header_comment}\n")
            writer = csv.writer(fh)
            writer.writerow(self.table_header)
            for row in self.table:
                writer.writerow(
                    [f"{x:.17g}" if isinstance(x, float) else x for x in row]
                )


def _require_valid(spec):
    report = validate_spec(spec)
    report.raise_if_invalid()
    return report.eigen, report.quad_form_at_u


def _censoring_gate(censored, total, max_fraction):
    frac = censored / max(1, total)
    if frac > max_fraction:
        raise ExcessiveCensoringError(
            f"{frac:.2%} of trees hit the node cap (limit {max_fraction:.0%}); "
            "raise node_cap or shrink the per-replicate sample"
        )
    if frac > 0.01:
        warnings.warn(f"censored fraction {frac:.2%} above 1%", RuntimeWarning)
    return frac


def _replicate_sums(spec, config, num_trees):
    """Sample one replicate and reduce it to the sums the verifiers need,
    excluding censored trees from the statistics."""
    batch = sample_batch(spec, config, num_trees, workers=1)
    keep = ~batch.censored
    return {
        "f_sum": batch.f[keep].sum(axis=0),
        "size_sum": int(batch.size[keep].sum()),
        "tracked_sum": batch.tracked_counts[keep].sum(axis=0),
        "censored": batch.censored_count,
    }


def _map_replicates(spec, base_config, num_trees, replicates, master_seed, workers):
    configs = [
        dataclass_replace(base_config, master_seed=derive_seed(master_seed, r))
        for r in range(replicates)
    ]
    if workers <= 1:
        return [_replicate_sums(spec, cfg, num_trees) for cfg in configs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        futures = [pool.submit(_replicate_sums, spec, cfg, num_trees) for cfg in configs]
        return [f.result() for f in futures]


def dataclass_replace(cfg, **kw):
    from dataclasses import replace

    return replace(cfg, **kw)


def verify_theorem1(
    spec,
    root_type,
    num_trees,
    replicates,
    t_grid=None,
    c=None,
    master_seed=0,
    node_cap=10**11,
    workers=1,
    cf_tol=0.08,
    ks_tol=0.08,
    max_censored_fraction=0.05,
    experiment="thm1",
):
    """Compare the law of the scaled type-frequency sum against its stable
    limit: empirical CF on a t grid, and (when the direction is not
    asymptotically degenerate) a KS distance against the one-sided stable
    distribution function."""
    if replicates < 1:
        raise EmptySampleError("need at least one replicate")
    eigen, quad_u = _require_valid(spec)
    v_dim = spec.num_types
    c = np.ones(v_dim) if c is None else np.asarray(c, dtype=np.float64)
    t_grid = default_t_grid() if t_grid is None else np.asarray(t_grid, dtype=np.float64)
    config = SamplerConfig(
        root_type=root_type,
        master_seed=0,
        node_cap=node_cap,
        lambdas=(),
        keep_depth_histogram=False,
    )
    sums = _map_replicates(spec, config, num_trees, replicates, master_seed, workers)
    censored = sum(s["censored"] for s in sums)
    frac = _censoring_gate(censored, num_trees * replicates, max_censored_fraction)

    x = np.array([float(c @ s["f_sum"]) / num_trees**2 for s in sums])
    theory = theorem1_cf(spec, eigen, root_type, c, t_grid)
    empirical = np.array([empirical_cf(x, t) for t in t_grid])
    diffs = np.abs(empirical - theory)

    scale = theorem1_scale(spec, eigen, root_type, c)
    ks = None
    if scale > 0:
        ks = ks_statistic(x / scale, levy_cdf)

    table = [
        (f"{t:g}", th.real, th.imag, em.real, em.imag, float(d))
        for t, th, em, d in zip(t_grid, theory, empirical, diffs)
    ]
    passed = float(diffs.max()) <= cf_tol and (ks is None or ks <= ks_tol)
    return VerificationReport(
        experiment=experiment,
        theorem="total-progeny stable limit",
        master_seed=master_seed,
        num_trees=num_trees,
        replicates=replicates,
        censored_fraction=frac,
        tolerance={"cf": cf_tol, "ks": ks_tol},
        passed=passed,
        sup_cf_distance=float(diffs.max()),
        avg_cf_distance=float(diffs.mean()),
        ks_statistic=ks,
        table_header=["t", "re_theory", "im_theory", "re_empirical", "im_empirical", "abs_diff"],
        table=table,
        extra={"direction": [float(y) for y in c], "stable_scale": scale},
    )


def _ck_label(c, k_imag):
    cs = ",".join(f"{x:.3g}" for x in np.atleast_1d(c))
    return f"c=({cs}) K={k_imag:g}"


def verify_theorem2(
    spec,
    root_type,
    num_trees,
    replicates,
    ck_grid=None,
    master_seed=0,
    node_cap=10**11,
    workers=1,
    cf_tol=0.1,
    max_censored_fraction=0.05,
    experiment="thm2",
):
    """Compare the joint law of centred type frequencies and the scaled
    total size against its limit CF on a grid of (c, K) points."""
    if replicates < 1:
        raise EmptySampleError("need at least one replicate")
    eigen, _ = _require_valid(spec)
    if ck_grid is None:
        ck_grid = default_ck_grid(spec.num_types, derive_seed(master_seed, 0xC), v=eigen.v)
    config = SamplerConfig(
        root_type=root_type,
        master_seed=0,
        node_cap=node_cap,
        keep_depth_histogram=False,
    )
    sums = _map_replicates(spec, config, num_trees, replicates, master_seed, workers)
    censored = sum(s["censored"] for s in sums)
    frac = _censoring_gate(censored, num_trees * replicates, max_censored_fraction)

    z = np.array(
        [(s["f_sum"] - eigen.v * s["size_sum"]) / num_trees for s in sums]
    )
    w = np.array([s["size_sum"] / num_trees**2 for s in sums])

    table = []
    diffs = []
    for c, k_imag in ck_grid:
        th = theorem2_cf(spec, eigen, root_type, c, k_imag)
        em = empirical_joint_cf(z, w, c, k_imag)
        d = abs(em - th)
        diffs.append(d)
        table.append((_ck_label(c, k_imag), th.real, th.imag, em.real, em.imag, float(d)))
    diffs = np.array(diffs)
    passed = float(diffs.max()) <= cf_tol
    return VerificationReport(
        experiment=experiment,
        theorem="joint type-frequency fluctuation limit",
        master_seed=master_seed,
        num_trees=num_trees,
        replicates=replicates,
        censored_fraction=frac,
        tolerance={"cf": cf_tol},
        passed=passed,
        sup_cf_distance=float(diffs.max()),
        avg_cf_distance=float(diffs.mean()),
        table_header=["point", "re_theory", "im_theory", "re_empirical", "im_empirical", "abs_diff"],
        table=table,
    )


def verify_theorem3(
    spec,
    root_type,
    rule_type,
    rules,
    num_trees,
    replicates,
    ck_grid=None,
    master_seed=0,
    node_cap=10**11,
    workers=1,
    cf_tol=0.1,
    max_censored_fraction=0.05,
    experiment="thm3",
):
    """Compare the joint law of centred tracked-rule counts and the scaled
    type population against its limit CF on a grid of (c, K) points."""
    if replicates < 1:
        raise EmptySampleError("need at least one replicate")
    eigen, _ = _require_valid(spec)
    rules = [tuple(int(x) for x in n) for n in rules]
    q = np.array([spec.probs[rule_type][spec.rule_index(rule_type, n)] for n in rules])
    if ck_grid is None:
        ck_grid = default_ck_grid(len(rules), derive_seed(master_seed, 0xCC))
    config = SamplerConfig(
        root_type=root_type,
        master_seed=0,
        node_cap=node_cap,
        tracked_rules=tuple((rule_type, n) for n in rules),
        keep_depth_histogram=False,
    )
    sums = _map_replicates(spec, config, num_trees, replicates, master_seed, workers)
    censored = sum(s["censored"] for s in sums)
    frac = _censoring_gate(censored, num_trees * replicates, max_censored_fraction)

    z = np.array(
        [(s["tracked_sum"] - q * s["f_sum"][rule_type]) / num_trees for s in sums]
    )
    w = np.array([s["f_sum"][rule_type] / num_trees**2 for s in sums])

    table = []
    diffs = []
    for c, k_imag in ck_grid:
        th = theorem3_cf(spec, eigen, root_type, rule_type, rules, c, k_imag)
        em = empirical_joint_cf(z, w, c, k_imag)
        d = abs(em - th)
        diffs.append(d)
        table.append((_ck_label(c, k_imag), th.real, th.imag, em.real, em.imag, float(d)))
    diffs = np.array(diffs)
    passed = float(diffs.max()) <= cf_tol
    return VerificationReport(
        experiment=experiment,
        theorem="joint rule-frequency fluctuation limit",
        master_seed=master_seed,
        num_trees=num_trees,
        replicates=replicates,
        censored_fraction=frac,
        tolerance={"cf": cf_tol},
        passed=passed,
        sup_cf_distance=float(diffs.max()),
        avg_cf_distance=float(diffs.mean()),
        table_header=["point", "re_theory", "im_theory", "re_empirical", "im_empirical", "abs_diff"],
        table=table,
        extra={"rule_type": rule_type + 1, "rules": [list(n) for n in rules]},
    )


def _thm4_chain(spec, config, n_grid, beta):
    batch = sample_batch(spec, config, max(n_grid), workers=1)
    out = []
    for n in n_grid:
        out.append(estimate_u(batch.prefix(n), beta))
    return out, batch.censored_count


def verify_theorem4(
    spec,
    root_type,
    n_grid,
    beta=0.25,
    seed_chains=10,
    master_seed=0,
    node_cap=10**9,
    workers=1,
    final_tol=0.05,
    max_censored_fraction=0.05,
    experiment="thm4",
):
    """Error curves of the right-eigenvector estimator over a grid of sample
    sizes: one batch per seed chain, prefixes re-used across sizes, the
    discount re-evaluated from stored depth histograms.  Also reports the
    exact expected value of the estimator per size, which isolates the
    deterministic discount bias from Monte Carlo noise."""
    eigen, _ = _require_valid(spec)
    n_grid = sorted(int(n) for n in n_grid)
    truth = float(eigen.u[root_type])
    base = SamplerConfig(
        root_type=root_type,
        master_seed=0,
        node_cap=node_cap,
        keep_depth_histogram=True,
    )
    configs = [
        dataclass_replace(base, master_seed=derive_seed(master_seed, 0x44, chain))
        for chain in range(seed_chains)
    ]
    if workers <= 1:
        results = [_thm4_chain(spec, cfg, n_grid, beta) for cfg in configs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(_thm4_chain, spec, cfg, n_grid, beta) for cfg in configs]
            results = [f.result() for f in futures]
    censored = sum(r[1] for r in results)
    frac = _censoring_gate(censored, max(n_grid) * seed_chains, max_censored_fraction)

    estimates = np.array([r[0] for r in results])  # (chains, len(n_grid))
    errors = np.abs(estimates - truth)
    med = np.median(errors, axis=0)

    exact_bias = []
    from .estimators import discount_for

    for n in n_grid:
        lam = discount_for(n, beta)
        exact = (1.0 - lam) * s_lambda(eigen.mean, lam)[root_type]
        exact_bias.append(abs(exact - truth))

    decreasing = bool(np.all(np.diff(med) < 0)) if len(med) > 1 else True
    passed = decreasing and float(med[-1]) <= final_tol
    table = [
        (str(n), float(m), float(b)) for n, m, b in zip(n_grid, med, exact_bias)
    ]
    return VerificationReport(
        experiment=experiment,
        theorem="right-eigenvector estimator consistency",
        master_seed=master_seed,
        num_trees=n_grid,
        replicates=seed_chains,
        censored_fraction=frac,
        tolerance={"final_abs_error": final_tol},
        passed=passed,
        table_header=["num_trees", "median_abs_error", "exact_expectation_abs_error"],
        table=table,
        extra={
            "beta": beta,
            "truth": truth,
            "median_errors": [float(m) for m in med],
            "exact_expectation_errors": [float(b) for b in exact_bias],
            "per_chain_estimates": [[float(x) for x in row] for row in estimates],
            "decreasing": decreasing,
        },
    )
