"""Four small critical processes with hand-derivable constants.

These are the workhorses of the test and verification suites.  All four are
critical (spectral radius exactly 1 in exact arithmetic) and primitive.
"""

from __future__ import annotations

from .process import ProcessSpec

__all__ = [
    "binary_fission",
    "coupled_pair",
    "skewed_pair",
    "asymmetric_two_type",
    "benchmark_processes",
]


def binary_fission():
    """Single type: die with probability 1/2, split in two with 1/2.

    Mean matrix [1], v = u = (1), quadratic form at u equals 1.
    """
    return ProcessSpec.from_rules([[(0, "1/2"), (2, "1/2")]])


def coupled_pair():
    """Two types, both with the same law: die with probability 1/2 or
    produce one child of each type with 1/2.

    M = [[.5, .5], [.5, .5]], v = (1/2, 1/2), u = (1, 1), quad form at u = 1.
    The off-dominant residual is zero, so the centering matrix is
    [[1/2, -1/2], [-1/2, 1/2]].
    """
    table = [((0, 0), "1/2"), ((1, 1), "1/2")]
    return ProcessSpec.from_rules([list(table), list(table)])


def skewed_pair():
    """Same mean matrix as coupled_pair but different second moments:
    type 1 dies w.p. 1/4, spawns (2,0) w.p. 1/4, spawns (0,1) w.p. 1/2;
    type 2 behaves as in coupled_pair.  Quad form at u drops to 3/4.
    """
    return ProcessSpec.from_rules(
        [
            [((0, 0), "1/4"), ((2, 0), "1/4"), ((0, 1), "1/2")],
            [((0, 0), "1/2"), ((1, 1), "1/2")],
        ]
    )


def asymmetric_two_type():
    """Two types with asymmetric roles:
    type 1: (0,0) w.p. 1/4, (1,0) w.p. 1/2, (0,1) w.p. 1/4;
    type 2: (0,0) w.p. 1/2, (2,1) w.p. 1/2.

    M = [[1/2, 1/4], [1, 1/2]], v = (2/3, 1/3), u = (3/4, 3/2),
    quad form at u equals 15/16.
    """
    return ProcessSpec.from_rules(
        [
            [((0, 0), "1/4"), ((1, 0), "1/2"), ((0, 1), "1/4")],
            [((0, 0), "1/2"), ((2, 1), "1/2")],
        ]
    )


def benchmark_processes():
    """Name -> spec for the four benchmark processes."""
    return {
        "binary_fission": binary_fission(),
        "coupled_pair": coupled_pair(),
        "skewed_pair": skewed_pair(),
        "asymmetric_two_type": asymmetric_two_type(),
    }
