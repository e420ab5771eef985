"""Spin observables: Pauli correlators, chirality, chi-chi correlators, Mermin score.

All functions accept either a `QuantumState` or a bare numpy array (vector
or density matrix).  Atom orderings for chirality are counter-clockwise in
the lab frame viewed from +z; the handedness factor relating a measurement
pattern to this convention is computed from the geometry rather than
hard-coded.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from itertools import permutations
from typing import Optional

import numpy as np

from .geometry import (
    AddressingPattern,
    ArrayGeometry,
    AtomClass,
    pattern_orientation,
    relative_handedness,
    triangle_indices,
)
from .hilbert import AtomModel, QuantumState, pauli_string

SQRT3 = np.sqrt(3.0)
CHIRALITY_MAX = 2.0 * SQRT3

# even permutations of (x, y, z) carry +1, odd ones -1
_PERMS = [("x", "y", "z"), ("y", "z", "x"), ("z", "x", "y"),
          ("y", "x", "z"), ("x", "z", "y"), ("z", "y", "x")]
_SIGNS = [1, 1, 1, -1, -1, -1]


@dataclass(frozen=True)
class PauliString:
    """Per-atom Pauli symbols, '1' marking identity atoms."""

    symbols: tuple

    def __post_init__(self):
        syms = tuple(str(s) for s in self.symbols)
        for s in syms:
            if s not in ("x", "y", "z", "1"):
                raise ValueError(f"unknown Pauli symbol {s!r}")
        object.__setattr__(self, "symbols", syms)

    @property
    def n_atoms(self) -> int:
        return len(self.symbols)

    def matrix(self, model: AtomModel = AtomModel.QUBIT) -> np.ndarray:
        return pauli_string(self.symbols, model)

    @classmethod
    def on_atoms(cls, n_atoms: int, assignment: dict) -> "PauliString":
        """Build from {atom index: symbol}; unlisted atoms get identity."""
        syms = ["1"] * n_atoms
        for atom, s in assignment.items():
            syms[atom] = s
        return cls(tuple(syms))


def _state_parts(state):
    if isinstance(state, QuantumState):
        return state.array, state.model, state.kind
    arr = np.asarray(state)
    kind = "density" if arr.ndim == 2 else "vector"
    n = int(round(np.log2(arr.shape[0])))
    if 2 ** n != arr.shape[0]:
        raise ValueError("bare arrays must live in a qubit register space")
    return arr, AtomModel.QUBIT, kind


def expect(state, pauli: PauliString) -> float:
    """Real expectation value of a Pauli string."""
    arr, model, kind = _state_parts(state)
    op = pauli.matrix(model)
    if op.shape[0] != arr.shape[0]:
        raise ValueError("operator and state dimensions differ")
    if kind == "vector":
        val = np.vdot(arr, op @ arr)
    else:
        val = np.trace(op @ arr)
    if abs(val.imag) > 1e-9 * max(1.0, abs(val.real)):
        raise ValueError("expectation of a Hermitian string came out complex")
    return float(val.real)


@dataclass(frozen=True)
class ChiralityResult:
    """Six-term chirality decomposition; value = signed sum of the terms."""

    value: float
    terms: tuple  # six (axes-triple, signed term) pairs
    std_error: Optional[float] = None

    def __float__(self):
        return self.value


def chirality(state, ordering) -> ChiralityResult:
    """(sigma_i x sigma_j) . sigma_k for an atom triple ordered counter-clockwise.

    The triple ordering fixes the sign: swapping two atoms negates the
    result, so callers must pass atoms in counter-clockwise lab-frame
    order to follow the sign convention of the chiral states.
    """
    i, j, k = ordering
    if len({i, j, k}) != 3:
        raise ValueError("chirality needs three distinct atoms")
    arr, model, kind = _state_parts(state)
    n = int(round(np.log(arr.shape[0]) / np.log(model.dim)))
    terms = []
    total = 0.0
    for axes, sign in zip(_PERMS, _SIGNS):
        p = PauliString.on_atoms(n, {i: axes[0], j: axes[1], k: axes[2]})
        term = sign * expect(state, p)
        terms.append((axes, term))
        total += term
    return ChiralityResult(total, tuple(terms))


def ccw_triangle_orderings(geometry: ArrayGeometry) -> list:
    """Atom triples of each triangle, reordered counter-clockwise."""
    out = []
    for tri in triangle_indices(geometry):
        i, j, k = tri
        p = geometry.positions
        u, v = p[j][:2] - p[i][:2], p[k][:2] - p[i][:2]
        cross = u[0] * v[1] - u[1] * v[0]
        out.append((i, j, k) if cross > 0 else (i, k, j))
    return out


def mermin_s(state_or_correlators, atoms=(0, 1, 2)) -> float:
    """Mermin-Bell score S = |<zzz> - <xxz> - <xzx> - <zxx>|.

    Accepts a state, or a dict with keys 'zzz', 'xxz', 'xzx', 'zxx'
    holding measured correlator values.
    """
    keys = ("zzz", "xxz", "xzx", "zxx")
    if isinstance(state_or_correlators, dict):
        vals = {k: float(state_or_correlators[k]) for k in keys}
    else:
        arr, model, _ = _state_parts(state_or_correlators)
        n = int(round(np.log(arr.shape[0]) / np.log(model.dim)))
        vals = {}
        for key in keys:
            assign = {a: s for a, s in zip(atoms, key)}
            vals[key] = expect(state_or_correlators,
                               PauliString.on_atoms(n, assign))
    return abs(vals["zzz"] - vals["xxz"] - vals["xzx"] - vals["zxx"])


def mermin_lhv_bound() -> float:
    """Max |zzz - xxz - xzx - zxx| over deterministic local assignments."""
    best = 0.0
    vals = (-1, 1)
    for z0 in vals:
        for z1 in vals:
            for z2 in vals:
                for x0 in vals:
                    for x1 in vals:
                        for x2 in vals:
                            s = abs(z0 * z1 * z2 - x0 * x1 * z2
                                    - x0 * z1 * x2 - z0 * x1 * x2)
                            best = max(best, s)
    return best


def _six_body(state, tri_a, tri_b, axes_a, axes_b):
    arr, model, _ = _state_parts(state)
    n = int(round(np.log(arr.shape[0]) / np.log(model.dim)))
    assign = {a: s for a, s in zip(tri_a, axes_a)}
    assign.update({a: s for a, s in zip(tri_b, axes_b)})
    return expect(state, PauliString.on_atoms(n, assign))


def _three_body(state, tri, axes):
    arr, model, _ = _state_parts(state)
    n = int(round(np.log(arr.shape[0]) / np.log(model.dim)))
    return expect(state, PauliString.on_atoms(n, {a: s for a, s in
                                                  zip(tri, axes)}))


def chi_chi_full(state, tri_a, tri_b) -> float:
    """Connected <chi_A chi_B> over all 36 permutation pairs.

    Both triples must be counter-clockwise ordered; use
    `ccw_triangle_orderings` to obtain them from a geometry.
    """
    if set(tri_a) & set(tri_b):
        raise ValueError("triangles must be disjoint")
    total = 0.0
    for axes_a, sign_a in zip(_PERMS, _SIGNS):
        ca = _three_body(state, tri_a, axes_a)
        for axes_b, sign_b in zip(_PERMS, _SIGNS):
            cb = _three_body(state, tri_b, axes_b)
            six = _six_body(state, tri_a, tri_b, axes_a, axes_b)
            total += sign_a * sign_b * (six - ca * cb)
    return total


def class_atoms_by_triangle(geometry: ArrayGeometry,
                            pattern: AddressingPattern) -> list:
    """Per triangle, the atom indices ordered by class (0d, 1d, 2d)."""
    out = []
    for tri in triangle_indices(geometry):
        by_class = {}
        for atom in tri:
            by_class[int(pattern.classes[atom])] = atom
        if sorted(by_class) != [0, 1, 2]:
            raise ValueError("each triangle needs one atom per class")
        out.append((by_class[0], by_class[1], by_class[2]))
    return out


def chi_chi_restricted(state, geometry: ArrayGeometry,
                       pattern: AddressingPattern) -> float:
    """Measured chi-chi estimator: eta * sum over same-permutation pairs.

    Each of the six terms assigns one permutation of (x, y, z) to the
    (0d, 1d, 2d) classes in both triangles, i.e. the six basis settings a
    single addressing pattern can realize.  The handedness factor eta
    (product of the two class-triple orientations) restores the sign
    convention of the full correlator.
    """
    tri_class = class_atoms_by_triangle(geometry, pattern)
    eta = relative_handedness(geometry, pattern)
    total = 0.0
    for axes in _PERMS:
        ca = _three_body(state, tri_class[0], axes)
        cb = _three_body(state, tri_class[1], axes)
        six = _six_body(state, tri_class[0], tri_class[1], axes, axes)
        total += six - ca * cb
    return eta * total


def correlator_table_csv(path, rows) -> None:
    """Write (basis label, value, std error, shots) rows to CSV."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["basis", "value", "std_error", "n_shots"])
        for r in rows:
            w.writerow(list(r))
