"""Closed-form limiting objects for critical branching samples.

Everything here is deterministic arithmetic on a validated process: the
one-sided stable characteristic function and its distribution function, the
limit CF of scaled type-frequency sums, the joint limit CFs of centred
type-frequency and rule-frequency fluctuations, the small-argument slope of
additive-statistic CFs, and the resolvent-style expected depth-discounted
size vector.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import erfc

from .process import mixture_quad_form, offspring_mixture

__all__ = [
    "stable_cf",
    "levy_cdf",
    "levy_quantile",
    "theorem1_scale",
    "theorem1_cf",
    "additive_mean",
    "additive_cf_slope",
    "centering_vector",
    "theorem2_coeffs",
    "theorem3_coeffs",
    "cf_quadratic_root",
    "theorem2_cf",
    "theorem3_cf",
    "s_lambda",
    "unit_directions",
    "LimitTarget",
    "joint_cf",
    "write_cf_table",
    "ZeroAdditiveMeanError",
    "SingularSystemError",
]


class ZeroAdditiveMeanError(ValueError):
    """The additive statistic has zero mean per rule application, so the
    square-root scaling of its limit degenerates."""


class SingularSystemError(np.linalg.LinAlgError):
    """(I - lam * M) was singular; impossible for lam in (0,1) at spectral
    radius 1, so the eigen data fed in is inconsistent."""


def stable_cf(t):
    """Characteristic function exp(-(1 - i sgn t) sqrt(|t|)) of the
    one-sided stable law with exponent 1/2; sign(0) = 0 gives value 1."""
    t = np.asarray(t, dtype=np.float64)
    val = np.exp(-(1.0 - 1j * np.sign(t)) * np.sqrt(np.abs(t)))
    return complex(val) if val.ndim == 0 else val


def levy_cdf(x):
    """Distribution function erfc(1 / sqrt(2x)) on x > 0 (zero otherwise)
    of the law with CF ``stable_cf``: density (2 pi)^(-1/2) x^(-3/2)
    exp(-1/(2x)).  The identification is pinned down in the test suite by
    numerical inversion of the CF."""
    x = np.asarray(x, dtype=np.float64)
    out = np.zeros(x.shape, dtype=np.float64)
    pos = x > 0
    out[pos] = erfc(1.0 / np.sqrt(2.0 * x[pos]))
    return float(out) if out.ndim == 0 else out


def levy_quantile(q):
    """Inverse of levy_cdf, handy for choosing comparison grids."""
    from scipy.special import erfcinv

    q = np.asarray(q, dtype=np.float64)
    val = 0.5 / erfcinv(q) ** 2
    return float(val) if val.ndim == 0 else val


def theorem1_scale(spec, eigen, k, c):
    """Scale factor (c.v) u_k^2 / quad_form(u) of the stable limit of
    N^-2 sum c.f(tree)."""
    quad_u = float(np.real(mixture_quad_form(spec, eigen, eigen.u)))
    return float(np.dot(c, eigen.v)) * eigen.u[k] ** 2 / quad_u


def theorem1_cf(spec, eigen, k, c, t):
    """Limit CF at t of the direction-c projection of the scaled
    type-frequency sum started from a type-k root."""
    return stable_cf(np.asarray(t) * theorem1_scale(spec, eigen, k, c))


def additive_mean(spec, eigen, g):
    """Mean of the additive statistic per rule application under the
    eigenvector-weighted rule law: sum_s v_s sum_n p_s(n) g_s(n)."""
    total = 0.0
    for k in range(spec.num_types):
        gk = np.asarray(g[k], dtype=np.float64)
        total += eigen.v[k] * float(spec.probs[k] @ gk)
    return total


def additive_cf_slope(spec, eigen, g, k, zero_tol=0.0):
    """Small-t slope of (phi_k(t) - 1)/sqrt(t) for an additive statistic:
    -u_k (1 - i sgn(mean)) sqrt(|mean|) / sqrt(quad_form(u))."""
    mean = additive_mean(spec, eigen, g)
    if mean == 0.0 or abs(mean) <= zero_tol:
        raise ZeroAdditiveMeanError("additive statistic has zero mean per rule")
    quad_u = float(np.real(mixture_quad_form(spec, eigen, eigen.u)))
    return -eigen.u[k] * (1.0 - 1j * math.copysign(1.0, mean)) * math.sqrt(abs(mean)) / math.sqrt(quad_u)


def centering_vector(eigen, c):
    """Deterministic centering direction of the type-frequency fluctuation
    limit: the centering matrix applied to c."""
    return eigen.centering @ np.asarray(c, dtype=np.float64)


def theorem2_coeffs(spec, eigen, c):
    """Drift and curvature coefficients (A, B) of the quadratic satisfied
    by the joint CF exponent of centred type frequencies and scaled size."""
    c = np.asarray(c, dtype=np.float64)
    v, u = eigen.v, eigen.u
    eta = centering_vector(eigen, c)
    mix = offspring_mixture(spec, v)
    xu = mix.support @ u
    xeta = mix.support @ eta
    mean_u = float(mix.weights @ xu)
    mean_eta = float(mix.weights @ xeta)
    cov = float(mix.weights @ (xu * xeta)) - mean_u * mean_eta
    var = float(mix.weights @ (xeta * xeta)) - mean_eta**2
    cv = float(c @ v)
    a = cov - float((v * u) @ (eta - c)) - cv
    b = -var + float(v @ (c - eta) ** 2) - cv**2
    return a, b


def theorem3_coeffs(spec, eigen, j, rules, c):
    """Drift and curvature coefficients (A, B) for the joint limit of
    centred counts of the given rules of type j and the scaled type-j
    population:

        A = sum_m c_m p_j(n_m) (n_m . u) - (c.q) u_j
        B = (c.q)^2 - sum_m p_j(n_m) c_m^2

    with q the rule probabilities.  The constant term is calibrated against
    exact single-type enumeration in the test suite.
    """
    c = np.asarray(c, dtype=np.float64)
    rows = [spec.rule_index(j, n) for n in rules]
    if len(set(rows)) != len(rows):
        raise ValueError("tracked rules must be distinct")
    p = spec.probs[j][rows]
    ndotu = spec.counts[j][rows] @ eigen.u
    cq = float(c @ p)
    a = float((c * p) @ ndotu) - cq * eigen.u[j]
    b = cq**2 - float((c * c) @ p)
    return a, b


def cf_quadratic_root(quad_at_u, a_coef, b_coef, k_imag, type_weight=1.0):
    """Root with nonpositive real part of
    z^2 + (2 w A i / Q) z + (w / Q)(B + 2 K i) = 0,
    where Q = quad_at_u, A = a_coef, B = b_coef, K = k_imag, w = type_weight.

    At K = 0 with both roots purely imaginary the root is chosen by
    continuity from K -> 0+.
    """
    alpha = type_weight * a_coef / quad_at_u
    disc = -alpha * alpha - (type_weight / quad_at_u) * complex(b_coef, 2.0 * k_imag)
    if disc.imag == 0.0 and disc.real < 0.0:
        return 1j * (math.sqrt(-disc.real) - alpha)
    root = np.sqrt(complex(disc))  # principal branch: Re >= 0
    return complex(-1j * alpha - root)


def theorem2_cf(spec, eigen, k, c, k_imag):
    """Joint limit CF at (c, K) of (centred type frequencies, scaled total
    size) for trees rooted at type k."""
    quad_u = float(np.real(mixture_quad_form(spec, eigen, eigen.u)))
    a, b = theorem2_coeffs(spec, eigen, c)
    z = cf_quadratic_root(quad_u, a, b, k_imag, 1.0)
    eta = centering_vector(eigen, c)
    return complex(np.exp(z * eigen.u[k] + 1j * eta[k]))


def theorem3_cf(spec, eigen, k, j, rules, c, k_imag):
    """Joint limit CF at (c, K) of (centred tracked-rule counts of type j,
    scaled type-j population) for trees rooted at type k."""
    quad_u = float(np.real(mixture_quad_form(spec, eigen, eigen.u)))
    a, b = theorem3_coeffs(spec, eigen, j, rules, c)
    z = cf_quadratic_root(quad_u, a, b, k_imag, eigen.v[j])
    return complex(np.exp(z * eigen.u[k]))


def s_lambda(m, lam):
    """Expected depth-discounted size vector: the solution of
    (I - lam M) S^t = 1^t.  Entry j is the expectation of the
    depth-discounted node sum of a tree rooted at type j."""
    m = np.asarray(m, dtype=np.float64)
    n = m.shape[0]
    lhs = np.eye(n) - lam * m
    try:
        sol = np.linalg.solve(lhs, np.ones(n))
    except np.linalg.LinAlgError as exc:
        raise SingularSystemError(f"I - {lam} M is singular") from exc
    if not np.isfinite(sol).all():
        raise SingularSystemError(f"I - {lam} M is numerically singular")
    return sol


def unit_directions(dim, count, seed, v=None, min_dot=1e-6):
    """Deterministic unit direction vectors, rejecting the measure-zero
    degenerate set nearly orthogonal to v when v is given."""
    rng = np.random.Generator(np.random.Philox(key=np.array([seed, 0xD1EC7], dtype=np.uint64)))
    out = np.empty((count, dim), dtype=np.float64)
    got = 0
    while got < count:
        c = rng.normal(size=dim)
        norm = np.linalg.norm(c)
        if norm < 1e-12:
            continue
        c /= norm
        if v is not None and abs(float(c @ v)) < min_dot:
            continue
        out[got] = c
        got += 1
    return out


@dataclass(frozen=True)
class LimitTarget:
    """A resolved limiting law: which theorem-style limit, for which process,
    root type and (for rule frequencies) tracked rules or value tables."""

    kind: str  # "type_frequencies" | "joint_type" | "joint_rule" | "additive"
    spec: object
    eigen: object
    root_type: int
    rule_type: int | None = None
    rules: tuple = ()
    g: tuple | None = None

    def __post_init__(self):
        kinds = ("type_frequencies", "joint_type", "joint_rule", "additive")
        if self.kind not in kinds:
            raise ValueError(f"kind must be one of {kinds}")
        if self.kind == "joint_rule" and self.rule_type is None:
            raise ValueError("joint_rule target needs rule_type and rules")
        if self.kind == "additive" and self.g is None:
            raise ValueError("additive target needs value tables g")


def joint_cf(target, c, k_imag=0.0):
    """Evaluate the limiting CF of a LimitTarget.

    type_frequencies: c is the projection direction, k_imag the evaluation
    point t.  joint_type / joint_rule: CF at (c, K).  additive: CF value
    exp(slope) reached by the scaled sum at t = 1, with c ignored.
    """
    if target.kind == "type_frequencies":
        return complex(theorem1_cf(target.spec, target.eigen, target.root_type, c, k_imag))
    if target.kind == "joint_type":
        return theorem2_cf(target.spec, target.eigen, target.root_type, c, k_imag)
    if target.kind == "joint_rule":
        return theorem3_cf(
            target.spec, target.eigen, target.root_type, target.rule_type, target.rules, c, k_imag
        )
    slope = additive_cf_slope(target.spec, target.eigen, target.g, target.root_type)
    return complex(np.exp(slope))


def write_cf_table(path, labels, theory, header_comment=None):
    """CSV of a theory CF grid: label, Re, Im per grid point."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        if header_comment:
            fh.write(f"# {header_comment}\n")
        writer = csv.writer(fh)
        writer.writerow(["point", "re_theory", "im_theory"])
        for label, val in zip(labels, theory):
            writer.writerow([label, f"{val.real:.17g}", f"{val.imag:.17g}"])
