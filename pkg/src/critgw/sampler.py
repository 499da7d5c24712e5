"""Stream-sample branching trees and emit per-tree sufficient statistics.

Trees are never materialised.  A tree is generated level by level: all
particles of one type in a generation draw their branching rules jointly as
one multinomial, which is equal in law to independent per-particle draws for
every statistic collected here (all of them are functions of per-type rule
application counts and of the generation size profile).  The cost of a tree
is therefore proportional to its depth, not its size, which is what makes
heavy critical trees affordable.

Reproducibility contract: tree ``i`` of a run is generated from a Philox
counter-based stream keyed by a splitmix64 hash of ``(master_seed, i)``, so
any partition of the index range across workers yields bit-identical output.
"""

from __future__ import annotations

import csv
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .process import ProcessSpec

__all__ = [
    "SamplerConfig",
    "TreeStats",
    "BatchAccumulator",
    "CapExceededError",
    "UnknownRuleError",
    "sample_tree",
    "sample_batch",
    "replay_tree",
    "derive_key",
]

_M64 = (1 << 64) - 1
_GAMMA = 0x9E3779B97F4A7C15


class CapExceededError(RuntimeError):
    """A tree outgrew the node cap under the abort policy."""


class UnknownRuleError(KeyError):
    """A tracked rule does not occur in the offspring table of its type."""


def _splitmix64(x):
    x &= _M64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _M64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _M64
    return x ^ (x >> 31)


def derive_key(master_seed, *ids):
    """128-bit Philox key from a master seed and a path of stream indices."""
    h = _splitmix64(int(master_seed) ^ _GAMMA)
    for i in ids:
        h = _splitmix64(h ^ _splitmix64(int(i) + _GAMMA))
    return np.array([h, _splitmix64(h ^ _GAMMA)], dtype=np.uint64)


class _KeyedGenerator:
    """A reusable numpy Generator over a Philox stream that can be re-keyed
    cheaply (fresh construction costs ~25x more than a state reset)."""

    def __init__(self):
        self._bitgen = np.random.Philox(key=np.zeros(2, dtype=np.uint64))
        self.generator = np.random.Generator(self._bitgen)
        self._state = self._bitgen.state

    def rekey(self, key):
        st = self._state
        st["state"]["key"][:] = key
        st["state"]["counter"][:] = 0
        st["buffer_pos"] = 4
        st["has_uint32"] = 0
        st["uinteger"] = 0
        self._bitgen.state = st
        return self.generator


@dataclass(frozen=True)
class SamplerConfig:
    """What to sample and what to record.

    tracked_rules are (type_index, offspring_vector) pairs whose application
    counts are recorded per tree.  additive_g, when given, maps each type
    index to a value table aligned with that type's rule order; the per-tree
    sum of g over applied rules is then recorded.  lambdas are discount
    factors in (0, 1) at which the depth-discounted node sum is evaluated.
    """

    root_type: int
    master_seed: int
    node_cap: int = 10**7
    cap_policy: str = "censor"
    lambdas: tuple = ()
    tracked_rules: tuple = ()
    additive_g: dict | None = None
    keep_depth_histogram: bool = True

    def __post_init__(self):
        if self.cap_policy not in ("censor", "abort"):
            raise ValueError(f"cap_policy must be 'censor' or 'abort', got {self.cap_policy!r}")
        if self.node_cap < 1:
            raise ValueError("node_cap must be positive")
        for lam in self.lambdas:
            if not 0.0 < lam < 1.0:
                raise ValueError(f"lambda {lam!r} outside (0, 1)")
        object.__setattr__(self, "lambdas", tuple(float(x) for x in self.lambdas))
        object.__setattr__(
            self,
            "tracked_rules",
            tuple((int(j), tuple(int(x) for x in n)) for j, n in self.tracked_rules),
        )


@dataclass(frozen=True)
class TreeStats:
    """Sufficient statistics of one sampled tree.

    f counts created particles per type (the root plus every birth), so
    size == f.sum() always.  rule_counts cover applied rules only; in a
    censored tree the unexpanded frontier is created but never applies a
    rule, so per-type rule counts fall short of f exactly then.
    depth_histogram[d] is the number of particles at depth d.
    """

    f: np.ndarray
    size: int
    censored: bool
    rule_counts: dict
    s_lambda: np.ndarray
    g_sum: float | None
    depth_histogram: np.ndarray | None

    def depth_discounted_sum(self, lam):
        """Sum of lam**depth over all particles, from the depth histogram."""
        if self.depth_histogram is None:
            raise ValueError("tree was sampled without a depth histogram")
        return _discounted(self.depth_histogram.astype(np.float64), lam)


def _discounted(hist_float, lam):
    powers = np.power(lam, np.arange(hist_float.shape[0], dtype=np.float64))
    return float(powers @ hist_float)


class _Tables:
    """Per-type sampling tables resolved once per run."""

    def __init__(self, spec: ProcessSpec, config: SamplerConfig):
        self.num_types = spec.num_types
        if not 0 <= config.root_type < spec.num_types:
            raise ValueError(f"root_type {config.root_type} outside 0..{spec.num_types - 1}")
        self.pvals = [np.ascontiguousarray(p / p.sum()) for p in spec.probs]
        self.offm = [np.ascontiguousarray(c) for c in spec.counts]
        self.tracked = []
        for j, n in config.tracked_rules:
            if not 0 <= j < spec.num_types:
                raise UnknownRuleError(f"tracked rule for unknown type {j}")
            try:
                row = spec.rule_index(j, n)
            except KeyError as exc:
                raise UnknownRuleError(str(exc)) from exc
            self.tracked.append((j, row))
        self.g_tables = None
        if config.additive_g is not None:
            tables = []
            for k in range(spec.num_types):
                try:
                    g = np.asarray(config.additive_g[k], dtype=np.float64)
                except KeyError as exc:
                    raise ValueError(f"additive_g missing table for type {k}") from exc
                if g.shape != (spec.counts[k].shape[0],):
                    raise ValueError(f"additive_g table for type {k} has wrong length")
                tables.append(g)
            self.g_tables = tables


def _grow(generator, tables, root_type, node_cap, abort):
    """Run one tree; returns (per-type rule count totals, depth profile,
    total created, censored)."""
    nt = tables.num_types
    pvals = tables.pvals
    offm = tables.offm
    rule_tot = [np.zeros(p.shape[0], dtype=np.int64) for p in pvals]
    gen_counts = np.zeros(nt, dtype=np.int64)
    gen_counts[root_type] = 1
    alive = 1
    total = 1
    profile = [1]
    censored = False
    multinomial = generator.multinomial
    while alive:
        if total > node_cap:
            if abort:
                raise CapExceededError(f"tree exceeded node cap {node_cap}")
            censored = True
            break
        nxt = np.zeros(nt, dtype=np.int64)
        for s in range(nt):
            m = gen_counts[s]
            if m == 0:
                continue
            cnt = multinomial(m, pvals[s])
            rule_tot[s] += cnt
            nxt += cnt @ offm[s]
        alive = int(nxt.sum())
        if alive:
            profile.append(alive)
        total += alive
        gen_counts = nxt
    return rule_tot, profile, total, censored


def _finish(tables, config, root_type, rule_tot, profile, total, censored):
    f = np.zeros(tables.num_types, dtype=np.int64)
    f[root_type] = 1
    for s in range(tables.num_types):
        f += rule_tot[s] @ tables.offm[s]
    hist = np.asarray(profile, dtype=np.int64)
    hist_float = hist.astype(np.float64)
    s_lam = np.array([_discounted(hist_float, lam) for lam in config.lambdas])
    tracked = np.array([rule_tot[j][row] for j, row in tables.tracked], dtype=np.int64)
    g_sum = None
    if tables.g_tables is not None:
        g_sum = float(sum(g @ rt for g, rt in zip(tables.g_tables, rule_tot)))
    return f, int(total), bool(censored), tracked, s_lam, g_sum, hist


def sample_tree(spec, config, tree_index):
    """Sample one tree and return its TreeStats; deterministic in
    (config.master_seed, tree_index)."""
    tables = _Tables(spec, config)
    keyed = _KeyedGenerator()
    gen = keyed.rekey(derive_key(config.master_seed, tree_index))
    rule_tot, profile, total, censored = _grow(
        gen, tables, config.root_type, config.node_cap, config.cap_policy == "abort"
    )
    f, size, censored, tracked, s_lam, g_sum, hist = _finish(
        tables, config, config.root_type, rule_tot, profile, total, censored
    )
    rule_counts = {
        (j, tuple(int(x) for x in spec.counts[j][row])): int(tracked[t])
        for t, (j, row) in enumerate(tables.tracked)
    }
    return TreeStats(
        f=f,
        size=size,
        censored=censored,
        rule_counts=rule_counts,
        s_lambda=s_lam,
        g_sum=g_sum,
        depth_histogram=hist if config.keep_depth_histogram else None,
    )


def replay_tree(spec, config, forced_rules):
    """Build TreeStats from an explicit breadth-first rule sequence.

    forced_rules[i] is the offspring vector applied by the i-th particle in
    breadth-first order (a bare int is accepted for single-type processes).
    The sequence must cover the whole tree.  Used to pin down hand-built
    trees in tests and demonstrations.
    """
    tables = _Tables(spec, config)
    rules = []
    for n in forced_rules:
        if isinstance(n, (int, np.integer)):
            n = (n,)
        rules.append(tuple(int(x) for x in n))
    queue = [(config.root_type, 0)]  # (type, depth)
    rule_tot = [np.zeros(p.shape[0], dtype=np.int64) for p in tables.pvals]
    profile = [1]
    head = 0
    total = 1
    for n in rules:
        if head >= len(queue):
            raise ValueError("forced rule sequence longer than the tree it builds")
        s, depth = queue[head]
        head += 1
        row = spec.rule_index(s, n)
        rule_tot[s][row] += 1
        for child_type in range(spec.num_types):
            for _ in range(int(spec.counts[s][row][child_type])):
                queue.append((child_type, depth + 1))
                if depth + 1 >= len(profile):
                    profile.append(0)
                profile[depth + 1] += 1
                total += 1
    if head != len(queue):
        raise ValueError(f"forced rule sequence covers {head} of {len(queue)} particles")
    f, size, censored, tracked, s_lam, g_sum, hist = _finish(
        tables, config, config.root_type, rule_tot, profile, total, False
    )
    rule_counts = {
        (j, tuple(int(x) for x in spec.counts[j][row])): int(tracked[t])
        for t, (j, row) in enumerate(tables.tracked)
    }
    return TreeStats(
        f=f,
        size=size,
        censored=censored,
        rule_counts=rule_counts,
        s_lambda=s_lam,
        g_sum=g_sum,
        depth_histogram=hist if config.keep_depth_histogram else None,
    )


@dataclass
class BatchAccumulator:
    """Mergeable per-tree records of a sample of trees.

    Rows are kept sorted by tree index, so merging the pieces of any
    partition of an index range reproduces the single-pass result exactly.
    Depth histograms are stored as one ragged int64 array with offsets.
    """

    spec: ProcessSpec
    config: SamplerConfig
    tree_index: np.ndarray
    f: np.ndarray  # (N, V)
    size: np.ndarray  # (N,)
    censored: np.ndarray  # (N,) bool
    tracked_counts: np.ndarray  # (N, T)
    s_lambda: np.ndarray  # (N, L)
    g_sum: np.ndarray | None
    depth_offsets: np.ndarray | None  # (N + 1,)
    depth_values: np.ndarray | None

    @property
    def n_trees(self):
        return int(self.tree_index.shape[0])

    @property
    def censored_count(self):
        return int(self.censored.sum())

    @property
    def censored_fraction(self):
        return self.censored_count / max(1, self.n_trees)

    def merge(self, other):
        """Combine two accumulators over disjoint index sets (associative
        and commutative thanks to the index sort)."""
        if other.spec is not self.spec and other.spec != self.spec:
            raise ValueError("cannot merge accumulators from different specs")
        order = np.argsort(np.concatenate([self.tree_index, other.tree_index]), kind="stable")

        def cat(a, b):
            return np.concatenate([a, b])[order]

        depth_offsets = depth_values = None
        if self.depth_offsets is not None and other.depth_offsets is not None:
            lengths = cat(np.diff(self.depth_offsets), np.diff(other.depth_offsets))
            depth_offsets = np.zeros(lengths.shape[0] + 1, dtype=np.int64)
            np.cumsum(lengths, out=depth_offsets[1:])
            chunks_a = np.split(self.depth_values, self.depth_offsets[1:-1])
            chunks_b = np.split(other.depth_values, other.depth_offsets[1:-1])
            chunks = chunks_a + chunks_b
            depth_values = np.concatenate([chunks[i] for i in order]) if chunks else np.zeros(0, np.int64)
        g = None
        if self.g_sum is not None and other.g_sum is not None:
            g = cat(self.g_sum, other.g_sum)
        return BatchAccumulator(
            spec=self.spec,
            config=self.config,
            tree_index=cat(self.tree_index, other.tree_index),
            f=np.concatenate([self.f, other.f])[order],
            size=cat(self.size, other.size),
            censored=cat(self.censored, other.censored),
            tracked_counts=np.concatenate([self.tracked_counts, other.tracked_counts])[order],
            s_lambda=np.concatenate([self.s_lambda, other.s_lambda])[order],
            g_sum=g,
            depth_offsets=depth_offsets,
            depth_values=depth_values,
        )

    def prefix(self, n):
        """Restrict to trees with index < n (for sweeping the sample size
        over one fixed seed chain without resampling)."""
        keep = self.tree_index < n
        depth_offsets = depth_values = None
        if self.depth_offsets is not None:
            lengths = np.diff(self.depth_offsets)[keep]
            depth_offsets = np.zeros(lengths.shape[0] + 1, dtype=np.int64)
            np.cumsum(lengths, out=depth_offsets[1:])
            kept_chunks = [
                self.depth_values[self.depth_offsets[i]:self.depth_offsets[i + 1]]
                for i in np.nonzero(keep)[0]
            ]
            depth_values = (
                np.concatenate(kept_chunks) if kept_chunks else np.zeros(0, np.int64)
            )
        return BatchAccumulator(
            spec=self.spec,
            config=self.config,
            tree_index=self.tree_index[keep],
            f=self.f[keep],
            size=self.size[keep],
            censored=self.censored[keep],
            tracked_counts=self.tracked_counts[keep],
            s_lambda=self.s_lambda[keep],
            g_sum=None if self.g_sum is None else self.g_sum[keep],
            depth_offsets=depth_offsets,
            depth_values=depth_values,
        )

    def depth_discounted(self, lam):
        """Per-tree depth-discounted node sums at an arbitrary discount,
        re-evaluated from the stored histograms."""
        if self.depth_offsets is None:
            raise ValueError("batch was sampled without depth histograms")
        out = np.empty(self.n_trees, dtype=np.float64)
        vals = self.depth_values.astype(np.float64)
        for i in range(self.n_trees):
            seg = vals[self.depth_offsets[i]:self.depth_offsets[i + 1]]
            out[i] = _discounted(seg, lam)
        return out

    def to_csv(self, path, header_comment=None):
        """One row per tree: tree_index, size, f_1..f_V, censored, then one
        column per configured discount factor."""
        v = self.spec.num_types
        lambdas = self.config.lambdas
        with open(path, "w", newline="", encoding="utf-8") as fh:
            if header_comment:
                fh.write(f"# {header_comment}\n")
            writer = csv.writer(fh)
            writer.writerow(
                ["tree_index", "size"]
                + [f"f_{k + 1}" for k in range(v)]
                + ["censored"]
                + [f"s_lambda_{lam:g}" for lam in lambdas]
            )
            for i in range(self.n_trees):
                writer.writerow(
                    [int(self.tree_index[i]), int(self.size[i])]
                    + [int(x) for x in self.f[i]]
                    + [int(self.censored[i])]
                    + [f"{x:.17g}" for x in self.s_lambda[i]]
                )


def _sample_range(spec, config, start, stop):
    """Sample trees start..stop-1 into plain arrays (worker unit)."""
    tables = _Tables(spec, config)
    keyed = _KeyedGenerator()
    n = stop - start
    v = spec.num_types
    f = np.zeros((n, v), dtype=np.int64)
    size = np.zeros(n, dtype=np.int64)
    censored = np.zeros(n, dtype=bool)
    tracked = np.zeros((n, len(tables.tracked)), dtype=np.int64)
    s_lam = np.zeros((n, len(config.lambdas)), dtype=np.float64)
    g_sum = np.zeros(n, dtype=np.float64) if tables.g_tables is not None else None
    hists = [] if config.keep_depth_histogram else None
    abort = config.cap_policy == "abort"
    for i in range(n):
        gen = keyed.rekey(derive_key(config.master_seed, start + i))
        rule_tot, profile, total, cens = _grow(
            gen, tables, config.root_type, config.node_cap, abort
        )
        fi, sz, cens, trk, sl, gs, hist = _finish(
            tables, config, config.root_type, rule_tot, profile, total, cens
        )
        f[i] = fi
        size[i] = sz
        censored[i] = cens
        tracked[i] = trk
        s_lam[i] = sl
        if g_sum is not None:
            g_sum[i] = gs
        if hists is not None:
            hists.append(hist)
    depth_offsets = depth_values = None
    if hists is not None:
        lengths = np.array([h.shape[0] for h in hists], dtype=np.int64)
        depth_offsets = np.zeros(n + 1, dtype=np.int64)
        np.cumsum(lengths, out=depth_offsets[1:])
        depth_values = np.concatenate(hists) if hists else np.zeros(0, np.int64)
    return {
        "tree_index": np.arange(start, stop, dtype=np.int64),
        "f": f,
        "size": size,
        "censored": censored,
        "tracked_counts": tracked,
        "s_lambda": s_lam,
        "g_sum": g_sum,
        "depth_offsets": depth_offsets,
        "depth_values": depth_values,
    }


def _assemble(spec, config, parts):
    acc = None
    for part in parts:
        piece = BatchAccumulator(spec=spec, config=config, **part)
        acc = piece if acc is None else acc.merge(piece)
    return acc


def sample_batch(spec, config, num_trees, workers=1):
    """Sample ``num_trees`` i.i.d. trees (indices 0..num_trees-1).

    The result is bit-identical for any worker count because each tree owns
    its derived stream and rows are assembled in index order.
    """
    if num_trees < 1:
        raise ValueError("num_trees must be >= 1")
    _Tables(spec, config)  # validate tables before forking
    if workers <= 1 or num_trees < 64:
        return _assemble(spec, config, [_sample_range(spec, config, 0, num_trees)])
    bounds = np.linspace(0, num_trees, 4 * workers + 1, dtype=np.int64)
    spans = [(int(a), int(b)) for a, b in zip(bounds[:-1], bounds[1:]) if b > a]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        futures = [pool.submit(_sample_range, spec, config, a, b) for a, b in spans]
        parts = [f.result() for f in futures]
    return _assemble(spec, config, parts)
