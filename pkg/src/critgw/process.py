"""Offspring laws of a multi-type branching process and the constants derived
from them: mean matrix, Frobenius eigenpair, mixture measure over branching
rules, and the quadratic fluctuation forms.

A process is specified by a finite-support offspring distribution per type.
Finite support keeps every moment finite and every sum in this module exact
up to float rounding.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

__all__ = [
    "ProcessSpec",
    "EigenData",
    "OffspringMixture",
    "ValidationReport",
    "ProcessError",
    "NotAProbabilityError",
    "NotPrimitiveError",
    "NotCriticalError",
    "DegenerateOffspringError",
    "NoConvergenceError",
    "SingularResolventError",
    "mean_matrix",
    "is_primitive",
    "frobenius_eigenpair",
    "offspring_mixture",
    "offspring_quad_form",
    "mixture_quad_form",
    "validate_spec",
    "wielandt_bound",
]


class ProcessError(Exception):
    """Base class for process specification errors."""


class NotAProbabilityError(ProcessError):
    """Offspring weights of some type do not form a probability distribution."""


class NotPrimitiveError(ProcessError):
    """The mean matrix is not primitive (no power is entrywise positive)."""


class NotCriticalError(ProcessError):
    """Spectral radius of the mean matrix differs from 1."""

    def __init__(self, rho, tol):
        self.rho = float(rho)
        self.tol = float(tol)
        super().__init__(f"spectral radius {self.rho!r} differs from 1 by more than {self.tol:g}")


class DegenerateOffspringError(ProcessError):
    """Every particle produces at most one offspring, so the quadratic
    fluctuation form vanishes identically and no stable limit exists."""


class NoConvergenceError(ProcessError):
    """Power iteration failed to reach the requested residual."""


class SingularResolventError(ProcessError):
    """A resolvent-style linear system was singular; the eigen data is
    inconsistent with a validated critical process."""


def _as_prob(value, where):
    """Parse a probability given as a number, decimal string or 'a/b'."""
    if isinstance(value, str):
        try:
            return float(Fraction(value))
        except (ValueError, ZeroDivisionError) as exc:
            raise NotAProbabilityError(f"{where}: cannot parse probability {value!r}") from exc
    p = float(value)
    return p


@dataclass(frozen=True)
class ProcessSpec:
    """Finite-support offspring distributions, one per particle type.

    counts[k] is an integer array of shape (R_k, V): row r is the offspring
    vector of rule r of type k.  probs[k] holds the matching probabilities.
    Type indices are 0-based internally; the JSON file format is 1-based.
    """

    counts: tuple
    probs: tuple

    def __post_init__(self):
        if len(self.counts) != len(self.probs) or not self.counts:
            raise NotAProbabilityError("need one offspring table per type")
        v = len(self.counts)
        frozen_counts = []
        frozen_probs = []
        for k, (cnt, prb) in enumerate(zip(self.counts, self.probs)):
            cnt = np.ascontiguousarray(np.asarray(cnt, dtype=np.int64))
            prb = np.ascontiguousarray(np.asarray(prb, dtype=np.float64))
            if cnt.ndim != 2 or cnt.shape[1] != v or cnt.shape[0] == 0:
                raise NotAProbabilityError(f"type {k}: offspring table must be (rules, {v})")
            if prb.shape != (cnt.shape[0],):
                raise NotAProbabilityError(f"type {k}: need one probability per rule")
            if (cnt < 0).any():
                raise NotAProbabilityError(f"type {k}: negative offspring count")
            if (prb < 0).any():
                bad = int(np.argmin(prb))
                raise NotAProbabilityError(f"type {k}, rule {bad}: negative probability")
            if abs(prb.sum() - 1.0) > 1e-12:
                raise NotAProbabilityError(
                    f"type {k}: probabilities sum to {prb.sum()!r}, not 1"
                )
            seen = {tuple(row) for row in cnt}
            if len(seen) != cnt.shape[0]:
                raise NotAProbabilityError(f"type {k}: duplicate offspring vectors")
            cnt.setflags(write=False)
            prb.setflags(write=False)
            frozen_counts.append(cnt)
            frozen_probs.append(prb)
        object.__setattr__(self, "counts", tuple(frozen_counts))
        object.__setattr__(self, "probs", tuple(frozen_probs))

    @property
    def num_types(self):
        return len(self.counts)

    @classmethod
    def from_rules(cls, rules_per_type):
        """Build from ``[[(offspring_vector, prob), ...], ...]``.

        For a single-type process the offspring vector may be a bare int.
        """
        counts, probs = [], []
        for table in rules_per_type:
            cnt = []
            prb = []
            for n, p in table:
                if isinstance(n, (int, np.integer)):
                    n = (n,)
                cnt.append(tuple(int(x) for x in n))
                prb.append(_as_prob(p, f"rule {n}"))
            counts.append(np.array(cnt, dtype=np.int64))
            probs.append(np.array(prb, dtype=np.float64))
        return cls(tuple(counts), tuple(probs))

    @classmethod
    def from_dict(cls, data):
        """Parse the JSON file schema:

        ``{"types": V, "rules": [{"type": k, "offspring": [n_1..n_V], "prob": p}, ...]}``

        with 1-based type indices and probabilities given as numbers,
        decimal strings, or rationals ``"a/b"``.
        """
        try:
            v = int(data["types"])
            rules = data["rules"]
        except (KeyError, TypeError) as exc:
            raise NotAProbabilityError(f"malformed process file: {exc}") from exc
        tables = [[] for _ in range(v)]
        for i, rule in enumerate(rules):
            try:
                k = int(rule["type"])
                n = tuple(int(x) for x in rule["offspring"])
                p = _as_prob(rule["prob"], f"rule {i}")
            except (KeyError, TypeError, ValueError) as exc:
                raise NotAProbabilityError(f"rule {i}: {exc}") from exc
            if not 1 <= k <= v:
                raise NotAProbabilityError(f"rule {i}: type {k} outside 1..{v}")
            if len(n) != v:
                raise NotAProbabilityError(f"rule {i}: offspring vector has length {len(n)}, need {v}")
            tables[k - 1].append((n, p))
        for k, table in enumerate(tables):
            if not table:
                raise NotAProbabilityError(f"type {k + 1}: no rules")
        return cls.from_rules(tables)

    @classmethod
    def from_file(cls, path):
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))

    def to_dict(self):
        rules = []
        for k in range(self.num_types):
            for n, p in zip(self.counts[k], self.probs[k]):
                rules.append({"type": k + 1, "offspring": [int(x) for x in n], "prob": float(p)})
        return {"types": self.num_types, "rules": rules}

    def to_file(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2)
            fh.write("\n")

    def rule_index(self, k, n):
        """Row index of offspring vector ``n`` in type ``k``'s table."""
        n = np.asarray(n, dtype=np.int64)
        hit = np.nonzero((self.counts[k] == n).all(axis=1))[0]
        if hit.size == 0:
            raise KeyError(f"type {k} has no rule with offspring {tuple(n)}")
        return int(hit[0])

    def max_brood(self):
        """Largest total offspring count over all rules of all types."""
        return max(int(c.sum(axis=1).max()) for c in self.counts)


def mean_matrix(spec):
    """V x V matrix of expected offspring counts: entry (k, l) is the mean
    number of type-l children of a type-k particle."""
    v = spec.num_types
    m = np.empty((v, v), dtype=np.float64)
    for k in range(v):
        m[k] = spec.probs[k] @ spec.counts[k]
    return m


def wielandt_bound(num_types):
    """Power bound (V-1)^2 + 1 sufficient to certify primitivity."""
    return (num_types - 1) ** 2 + 1


def is_primitive(m):
    """Exact primitivity test via boolean powers of the support pattern."""
    pattern = np.asarray(m) > 0
    power = pattern.copy()
    for _ in range(wielandt_bound(pattern.shape[0])):
        if power.all():
            return True
        power = power @ pattern
    return bool(power.all())


@dataclass(frozen=True)
class EigenData:
    """Frobenius eigen data of a mean matrix.

    v, u are the positive left/right eigenvectors normalised so that
    sum(v) = 1 and v.u = 1.  residual is M - rho * outer(u, v), the part of
    M acting off the dominant direction.  centering solves
    (I - residual) X = I - outer(1, v) and maps a direction c to the
    deterministic centering vector of the type-frequency fluctuation limit.
    """

    mean: np.ndarray
    rho: float
    v: np.ndarray
    u: np.ndarray
    residual: np.ndarray
    centering: np.ndarray


def _power_iterate(m, start, tol, max_iter):
    x = start / start.sum()
    for it in range(max_iter):
        y = x @ m
        norm = y.sum()
        if norm <= 0.0:
            raise NoConvergenceError("power iteration collapsed to zero (matrix not primitive?)")
        y = y / norm
        if np.abs(y - x).max() <= tol:
            return y, norm, it + 1
        x = y
    raise NoConvergenceError(f"no convergence in {max_iter} iterations")


def frobenius_eigenpair(m, tol=1e-12, max_iter=10**6):
    """Compute EigenData for a primitive nonnegative matrix by power
    iteration on the matrix and its transpose, deterministic uniform start.
    """
    m = np.asarray(m, dtype=np.float64)
    n = m.shape[0]
    start = np.ones(n)
    v, rho_left, _ = _power_iterate(m, start, tol, max_iter)
    u, rho_right, _ = _power_iterate(m.T, start, tol, max_iter)
    rho = 0.5 * (rho_left + rho_right)
    v = v / v.sum()
    u = u / (v @ u)
    res_v = np.abs(v @ m - rho * v).max()
    res_u = np.abs(m @ u - rho * u).max()
    if max(res_v, res_u) > max(1e-10, 10 * tol) * max(1.0, rho):
        raise NoConvergenceError(
            f"eigen residuals {res_v:.2e}/{res_u:.2e} above tolerance; "
            "subdominant eigenvalue too close to the spectral radius?"
        )
    residual = m - rho * np.outer(u, v)
    ones_v = np.tile(v, (n, 1))  # row k is v; this is outer(1, v)
    lhs = np.eye(n) - residual
    try:
        centering = np.linalg.solve(lhs, np.eye(n) - ones_v)
    except np.linalg.LinAlgError as exc:
        raise SingularResolventError("I - residual is singular") from exc
    if not np.isfinite(centering).all():
        raise SingularResolventError("centering solve produced non-finite entries")
    for arr in (m, v, u, residual, centering):
        arr.setflags(write=False)
    return EigenData(mean=m, rho=float(rho), v=v, u=u, residual=residual, centering=centering)


@dataclass(frozen=True)
class OffspringMixture:
    """Offspring law of a particle whose type is drawn from the left
    Frobenius eigenvector: weight of vector n is sum_s v_s p_s(n)."""

    support: np.ndarray  # (K, V) int64, lexicographically sorted
    weights: np.ndarray  # (K,) float64

    def mean(self):
        return self.weights @ self.support

    def dot_moments(self, a, b):
        """E[(X.a)(X.b)] over the mixture."""
        return self.weights @ ((self.support @ a) * (self.support @ b))


def offspring_mixture(spec, v):
    """Mix the per-type offspring laws with weights v (the left eigenvector)."""
    acc = {}
    for k in range(spec.num_types):
        for n, p in zip(spec.counts[k], spec.probs[k]):
            key = tuple(int(x) for x in n)
            acc[key] = acc.get(key, 0.0) + float(v[k]) * float(p)
    keys = sorted(acc)
    support = np.array(keys, dtype=np.int64)
    weights = np.array([acc[key] for key in keys], dtype=np.float64)
    return OffspringMixture(support=support, weights=weights)


def offspring_quad_form(spec, k, z):
    """Quadratic fluctuation form of type k's offspring law at z:
    E[(n.z)^2] minus the diagonal first-moment part sum_s M_ks z_s^2.

    Homogeneous of order 2 with nonnegative coefficients; identically zero
    exactly when type k never produces more than one offspring.
    """
    z = np.asarray(z)
    dots = spec.counts[k] @ z
    m_row = spec.probs[k] @ spec.counts[k]
    return spec.probs[k] @ (dots * dots) - m_row @ (z * z)


def mixture_quad_form(spec, eigen, z):
    """Same quadratic form under the eigenvector-weighted offspring mixture:
    E_mix[(X.z)^2] - sum_s v_s z_s^2.

    For a critical process this equals sum_s v_s * offspring_quad_form(s, z);
    evaluated here from the mixture definition so the identity stays an
    independent cross-check.  Positive at z = u for any valid process.
    """
    z = np.asarray(z)
    v = eigen.v
    second = 0.0
    for k in range(spec.num_types):
        dots = spec.counts[k] @ z
        second = second + v[k] * (spec.probs[k] @ (dots * dots))
    return second - v @ (z * z)


@dataclass(frozen=True)
class ValidationReport:
    """Outcome of the four structural checks on a process specification."""

    num_types: int
    prob_ok: bool
    prob_message: str
    primitive: bool
    rho: float
    critical: bool
    crit_tol: float
    degenerate: bool
    quad_form_at_u: float
    eigen: EigenData | None

    @property
    def ok(self):
        return self.prob_ok and self.primitive and self.critical and not self.degenerate

    def problems(self):
        out = []
        if not self.prob_ok:
            out.append(f"NotAProbability: {self.prob_message}")
        if not self.primitive:
            out.append("NotPrimitive: some type pair is unreachable at every horizon")
        if not self.critical:
            out.append(f"NotCritical: spectral radius {self.rho!r}")
        if self.degenerate:
            out.append("DegenerateOffspring: every rule has at most one child")
        return out

    def raise_if_invalid(self):
        if not self.prob_ok:
            raise NotAProbabilityError(self.prob_message)
        if not self.primitive:
            raise NotPrimitiveError("mean matrix is not primitive")
        if not self.critical:
            raise NotCriticalError(self.rho, self.crit_tol)
        if self.degenerate:
            raise DegenerateOffspringError(
                "every particle produces exactly one offspring almost surely"
            )
        return self


def validate_spec(spec, crit_tol=1e-9, eigen_tol=1e-12, max_iter=10**6):
    """Run all structural checks and return a ValidationReport.

    Checks: (a) per-type probability normalisation, (b) primitivity of the
    mean matrix via boolean powers up to the Wielandt bound, (c) criticality
    |rho - 1| <= crit_tol, (d) nondegeneracy of the quadratic form.
    Criticality is rejected, never repaired.
    """
    prob_ok, prob_message = True, ""
    for k in range(spec.num_types):
        dev = abs(spec.probs[k].sum() - 1.0)
        if dev > 1e-12:
            prob_ok, prob_message = False, f"type {k}: probabilities sum to 1{dev:+.2e}"
            break

    m = mean_matrix(spec)
    primitive = is_primitive(m)

    eigen = None
    rho = float("nan")
    critical = False
    quad_at_u = float("nan")
    degenerate = all(int(c.sum(axis=1).max()) <= 1 for c in spec.counts)
    if primitive:
        eigen = frobenius_eigenpair(m, tol=eigen_tol, max_iter=max_iter)
        rho = eigen.rho
        critical = abs(rho - 1.0) <= crit_tol
        quad_at_u = float(np.real(mixture_quad_form(spec, eigen, eigen.u)))

    return ValidationReport(
        num_types=spec.num_types,
        prob_ok=prob_ok,
        prob_message=prob_message,
        primitive=primitive,
        rho=rho,
        critical=critical,
        crit_tol=float(crit_tol),
        degenerate=degenerate,
        quad_form_at_u=quad_at_u,
        eigen=eigen,
    )
