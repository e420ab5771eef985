"""Atom array geometry, addressing patterns and shot-to-shot positional disorder.

Conventions: coordinates in um, time in us, velocities in um/us.  All
structures are immutable after construction so they can be shared freely
across parallel Monte Carlo shots.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import IntEnum

import numpy as np


class AtomClass(IntEnum):
    """Light-shift multiplier carried by an atom: 0, 1 or 2 units."""

    ZERO = 0
    ONE = 1
    TWO = 2


@dataclass(frozen=True)
class ArrayGeometry:
    """Nominal atom positions (N x 3, um) plus the lattice constant."""

    positions: np.ndarray
    lattice_constant: float

    def __post_init__(self):
        pos = np.atleast_2d(np.asarray(self.positions, dtype=float))
        if pos.shape[1] != 3:
            raise ValueError("positions must be an (N, 3) array")
        if pos.shape[0] < 1:
            raise ValueError("need at least one atom")
        if self.lattice_constant <= 0:
            raise ValueError("lattice constant must be positive")
        d = pairwise_distances(pos)
        n = pos.shape[0]
        if n > 1 and np.min(d[np.triu_indices(n, k=1)]) <= 0:
            raise ValueError("coincident atoms in geometry")
        pos.setflags(write=False)
        object.__setattr__(self, "positions", pos)

    @property
    def n_atoms(self) -> int:
        return self.positions.shape[0]


@dataclass(frozen=True)
class AddressingPattern:
    """Per-atom class assignment, e.g. which atoms carry 0, 1 or 2 light shifts."""

    classes: tuple
    label: str = ""

    def __post_init__(self):
        object.__setattr__(
            self, "classes", tuple(AtomClass(c) for c in self.classes)
        )

    @property
    def n_atoms(self) -> int:
        return len(self.classes)

    def atoms_of_class(self, cls: AtomClass) -> list:
        return [i for i, c in enumerate(self.classes) if c == cls]

    def multipliers(self) -> np.ndarray:
        return np.array([int(c) for c in self.classes], dtype=float)


@dataclass(frozen=True)
class DisorderModel:
    """Gaussian shot-to-shot position/velocity fluctuations.

    sigma_xy acts on x and y, sigma_z on z (um); sigma_v is isotropic
    (um/us).  With enabled=False sampling returns the zero realization.
    """

    sigma_xy: float = 0.1
    sigma_z: float = 0.6
    sigma_v: float = 0.03
    enabled: bool = True

    def __post_init__(self):
        if min(self.sigma_xy, self.sigma_z, self.sigma_v) < 0:
            raise ValueError("disorder sigmas must be >= 0")

    @classmethod
    def off(cls) -> "DisorderModel":
        return cls(0.0, 0.0, 0.0, enabled=False)


@dataclass(frozen=True)
class DisorderRealization:
    """One sampled set of per-atom offsets (um) and velocities (um/us)."""

    offsets: np.ndarray
    velocities: np.ndarray
    seed: int = 0

    def __post_init__(self):
        off = np.atleast_2d(np.asarray(self.offsets, dtype=float))
        vel = np.atleast_2d(np.asarray(self.velocities, dtype=float))
        if off.shape != vel.shape or off.shape[1] != 3:
            raise ValueError("offsets and velocities must both be (N, 3)")
        off.setflags(write=False)
        vel.setflags(write=False)
        object.__setattr__(self, "offsets", off)
        object.__setattr__(self, "velocities", vel)

    @classmethod
    def zero(cls, n_atoms: int) -> "DisorderRealization":
        return cls(np.zeros((n_atoms, 3)), np.zeros((n_atoms, 3)))


def pairwise_distances(positions: np.ndarray) -> np.ndarray:
    """Symmetric distance matrix for an (N, 3) position array."""
    diff = positions[:, None, :] - positions[None, :, :]
    return np.sqrt(np.sum(diff * diff, axis=-1))


def _triangle(a: float, vertex_angles_deg, center=(0.0, 0.0)) -> np.ndarray:
    r = a / np.sqrt(3.0)  # circumradius
    ang = np.deg2rad(vertex_angles_deg)
    return np.stack([center[0] + r * np.cos(ang),
                     center[1] + r * np.sin(ang),
                     np.zeros(3)], axis=1)


# default center-to-center separations for the two-triangle experiments:
# interacting pairs sit close enough for the chirality-exchange splitting
# to dominate the ramp (>99% adiabatic at tau = 0.55 us), the control pair
# far enough that the inter-triangle coupling is negligible
INTERACTING_SEPARATION = 24.8
NONINTERACTING_SEPARATION = 72.0


def build_triangle_array(a: float, n_triangles: int = 1,
                         separation: float | None = None,
                         orientation: str = "outward") -> ArrayGeometry:
    """Equilateral triangle(s) of side a in the z=0 plane.

    One triangle: vertices at 90/330/210 degrees, centered at the origin.
    Atom order runs clockwise viewed from +z, matching the handedness that
    makes the phase-imprinted winding states carry positive chirality in
    the counter-clockwise operator convention.

    Two triangles: centers at -/+ separation/2 on the x axis, mirror images
    of each other with one vertex of each on the x axis, pointing away from
    the partner triangle ('outward') or towards it ('inward').  Both
    layouts are invariant under the y-axis mirror (x -> -x) and point
    inversion about the array center, so either spatial symmetry can be
    realized as an atom permutation; atom 3+i is the mirror image of atom
    i.  The inward orientation is the one whose antiferromagnetic
    two-excitation ground state is inversion-odd, which the interacting
    adiabatic experiments rely on; outward keeps the triangles farther
    apart for the non-interacting control.
    """
    if a <= 0:
        raise ValueError("triangle side must be positive")
    if n_triangles not in (1, 2):
        raise ValueError("n_triangles must be 1 or 2")
    if n_triangles == 1:
        return ArrayGeometry(_triangle(a, [90.0, 330.0, 210.0]), a)
    if separation is None or separation < a:
        raise ValueError("two triangles need separation >= a")
    if orientation == "outward":
        left_angles, right_angles = [180.0, 60.0, 300.0], [0.0, 120.0, 240.0]
    elif orientation == "inward":
        left_angles, right_angles = [0.0, 120.0, 240.0], [180.0, 60.0, 300.0]
    else:
        raise ValueError("orientation must be 'outward' or 'inward'")
    left = _triangle(a, left_angles, center=(-separation / 2.0, 0.0))
    right = _triangle(a, right_angles, center=(separation / 2.0, 0.0))
    return ArrayGeometry(np.vstack([left, right]), a)


def triangle_indices(geometry: ArrayGeometry) -> list:
    """Index triples of the triangles making up a 3- or 6-atom array."""
    n = geometry.n_atoms
    if n == 3:
        return [(0, 1, 2)]
    if n == 6:
        return [(0, 1, 2), (3, 4, 5)]
    raise ValueError("expected a 3- or 6-atom triangle array")


def mirror_pattern(label: str = "pattern-1") -> AddressingPattern:
    """Two-triangle classes related by the y-axis mirror.

    With the `build_triangle_array` indexing (atom 3+i = mirror image of
    atom i), mirror-related classes mean class(3+i) = class(i).  The mirror
    reverses in-plane orientation, so the two class triples have opposite
    handedness (eta = -1).  Within each triangle, the unaddressed atom sits
    off the x axis: with the on-axis vertex singly addressed the light-shift
    ramp stays clear of the narrow avoided crossings, which keeps the
    adiabatic fidelity above 99% at the calibrated ramp speed.
    """
    return AddressingPattern(
        (AtomClass.ONE, AtomClass.ZERO, AtomClass.TWO,
         AtomClass.ONE, AtomClass.ZERO, AtomClass.TWO),
        label=label,
    )


def inversion_pattern(label: str = "pattern-2") -> AddressingPattern:
    """Two-triangle classes related by point inversion (180 deg rotation).

    Inversion preserves in-plane orientation, so both class triples share
    the same handedness (eta = +1).  Under the `build_triangle_array`
    layout, inversion maps atoms (0, 1, 2) onto (3, 5, 4), so the classes
    satisfy class(3) = class(0), class(5) = class(1), class(4) = class(2).
    The per-triangle assignment matches `mirror_pattern`.
    """
    return AddressingPattern(
        (AtomClass.ONE, AtomClass.ZERO, AtomClass.TWO,
         AtomClass.ONE, AtomClass.TWO, AtomClass.ZERO),
        label=label,
    )


def single_triangle_pattern(label: str = "triangle") -> AddressingPattern:
    """One triangle with one atom of each class, CCW order (0, 1, 2)."""
    return AddressingPattern(
        (AtomClass.ZERO, AtomClass.ONE, AtomClass.TWO), label=label
    )


def sample_disorder(geometry: ArrayGeometry, model: DisorderModel,
                    seed: int) -> DisorderRealization:
    """Draw one disorder realization; deterministic for a given seed."""
    n = geometry.n_atoms
    if not model.enabled:
        return DisorderRealization.zero(n)
    rng = np.random.default_rng(seed)
    offsets = np.empty((n, 3))
    offsets[:, 0] = rng.normal(0.0, model.sigma_xy, n) if model.sigma_xy else 0.0
    offsets[:, 1] = rng.normal(0.0, model.sigma_xy, n) if model.sigma_xy else 0.0
    offsets[:, 2] = rng.normal(0.0, model.sigma_z, n) if model.sigma_z else 0.0
    if model.sigma_v:
        velocities = rng.normal(0.0, model.sigma_v, (n, 3))
    else:
        velocities = np.zeros((n, 3))
    return DisorderRealization(offsets, velocities, seed=seed)


def positions_at(geometry: ArrayGeometry, realization: DisorderRealization,
                 t: float) -> np.ndarray:
    """Ballistic positions nominal + offset + velocity * t (traps are off)."""
    if t < 0:
        raise ValueError("time must be >= 0")
    return geometry.positions + realization.offsets + realization.velocities * t


def pattern_orientation(geometry: ArrayGeometry, pattern: AddressingPattern,
                        triangle: tuple) -> int:
    """+1 if the (0d, 1d, 2d) class triple runs counter-clockwise, -1 otherwise.

    Orientation is evaluated in the z=0 plane viewed from +z.
    """
    by_class = {}
    for i in triangle:
        by_class[int(pattern.classes[i])] = i
    if sorted(by_class) != [0, 1, 2]:
        raise ValueError("triangle must contain one atom of each class")
    p0 = geometry.positions[by_class[0]][:2]
    p1 = geometry.positions[by_class[1]][:2]
    p2 = geometry.positions[by_class[2]][:2]
    u, v = p1 - p0, p2 - p0
    cross = u[0] * v[1] - u[1] * v[0]
    if cross == 0:
        raise ValueError("degenerate (collinear) triangle")
    return 1 if cross > 0 else -1


def relative_handedness(geometry: ArrayGeometry,
                        pattern: AddressingPattern) -> int:
    """Sign eta = orientation_A * orientation_B of a two-triangle pattern."""
    tri_a, tri_b = triangle_indices(geometry)
    return (pattern_orientation(geometry, pattern, tri_a)
            * pattern_orientation(geometry, pattern, tri_b))


def _permutation_from_isometry(geometry: ArrayGeometry, transform,
                               tol: float = 1e-9) -> np.ndarray:
    """Atom permutation realizing a spatial map, or raise if it is not one."""
    pos = geometry.positions
    center = pos.mean(axis=0)
    mapped = np.array([transform(p - center) + center for p in pos])
    perm = np.full(geometry.n_atoms, -1, dtype=int)
    for i, q in enumerate(mapped):
        dist = np.linalg.norm(pos - q, axis=1)
        j = int(np.argmin(dist))
        if dist[j] > tol:
            raise ValueError("geometry is not invariant under the requested map")
        perm[i] = j
    if len(set(perm.tolist())) != geometry.n_atoms:
        raise ValueError("spatial map is not a bijection on the atoms")
    return perm


def mirror_y_permutation(geometry: ArrayGeometry) -> np.ndarray:
    """Permutation realizing the y-axis mirror x -> -x about the centroid."""
    return _permutation_from_isometry(
        geometry, lambda p: np.array([-p[0], p[1], p[2]]))


def inversion_permutation(geometry: ArrayGeometry) -> np.ndarray:
    """Permutation realizing point inversion about the centroid (in plane)."""
    return _permutation_from_isometry(
        geometry, lambda p: np.array([-p[0], -p[1], p[2]]))


def load_geometry_config(path) -> tuple:
    """Read geometry + pattern from JSON.

    Schema: {"atoms": [[x, y, z], ...], "lattice_constant": a,
             "classes": [0|1|2, ...], "label": "..."}.
    """
    with open(path) as fh:
        cfg = json.load(fh)
    geometry = ArrayGeometry(np.array(cfg["atoms"], dtype=float),
                             float(cfg["lattice_constant"]))
    pattern = AddressingPattern(tuple(cfg["classes"]),
                                label=cfg.get("label", ""))
    if pattern.n_atoms != geometry.n_atoms:
        raise ValueError("classes length does not match atom count")
    return geometry, pattern
