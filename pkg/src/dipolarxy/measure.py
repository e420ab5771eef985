"""Projective sampling, SPAM error channel, and detection-error correction.

Readout maps the two qubit levels onto atom presence/absence: a recaptured
atom reads up, an expelled one reads down.  Leaked levels follow the same
mapping: ground-state atoms are recaptured (read up), reservoir Rydberg
states are expelled (read down).  Addressing-loss events therefore read
down by default; the polarity is configurable.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .geometry import AddressingPattern, AtomClass
from .hilbert import DOWN, GROUND, P6, RESERVOIR, UP, AtomModel, QuantumState
from .pulses import CompiledBasisProgram, program_unitary

# per-level readout image: recaptured levels read up, expelled ones down
READOUT_IMAGE = {UP: "u", DOWN: "d", GROUND: "u", P6: "u", RESERVOIR: "d"}


@dataclass(frozen=True)
class ErrorModel:
    """Calibrated SPAM error probabilities.

    epsilon_up:    P(read down | atom in up)
    epsilon_down:  P(read up | atom in down)
    eta_stirap:    per-atom preparation success probability
    loss_1delta:   addressing loss probability for singly addressed atoms
    loss_2delta:   addressing loss probability for doubly addressed atoms
    jitter_sigma_ns: Gaussian timing jitter of the addressing turn-on
    loss_reads:    readout image of a lost atom ('d' by default)
    """

    epsilon_up: float = 0.027
    epsilon_down: float = 0.015
    eta_stirap: float = 0.98
    loss_1delta: float = 0.003
    loss_2delta: float = 0.013
    jitter_sigma_ns: float = 2.0
    loss_reads: str = "d"

    def __post_init__(self):
        for name in ("epsilon_up", "epsilon_down", "eta_stirap",
                     "loss_1delta", "loss_2delta"):
            p = getattr(self, name)
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"{name} = {p} outside [0, 1]")
        if self.loss_reads not in ("u", "d"):
            raise ValueError("loss_reads must be 'u' or 'd'")

    @classmethod
    def ideal(cls) -> "ErrorModel":
        return cls(0.0, 0.0, 1.0, 0.0, 0.0, 0.0)

    def loss_probability(self, cls_: AtomClass) -> float:
        if cls_ == AtomClass.ONE:
            return self.loss_1delta
        if cls_ == AtomClass.TWO:
            return self.loss_2delta
        return 0.0


@dataclass(frozen=True)
class ShotRecord:
    """One projective readout of the full register."""

    outcomes: tuple  # per-atom 'u'/'d'
    basis: Optional[str]  # per-atom measured Pauli axes, e.g. 'xyz...'
    seed: Optional[int] = None
    realization_id: Optional[int] = None

    def __post_init__(self):
        for o in self.outcomes:
            if o not in ("u", "d"):
                raise ValueError(f"bad outcome symbol {o!r}")

    @property
    def bitstring(self) -> str:
        return "".join(self.outcomes)

    def eigenvalue(self, atom: int) -> int:
        return 1 if self.outcomes[atom] == "u" else -1


@dataclass(frozen=True)
class CorrectionMatrix:
    """Single-atom readout channel M[read, true] and its inverse.

    Columns (true up, true down) are stochastic; the register channel is
    the N-fold tensor power.
    """

    epsilon_up: float
    epsilon_down: float

    @classmethod
    def from_error_model(cls, model: ErrorModel) -> "CorrectionMatrix":
        return cls(model.epsilon_up, model.epsilon_down)

    @property
    def matrix(self) -> np.ndarray:
        return np.array([[1.0 - self.epsilon_up, self.epsilon_down],
                         [self.epsilon_up, 1.0 - self.epsilon_down]])

    @property
    def inverse(self) -> np.ndarray:
        if self.epsilon_up + self.epsilon_down >= 1.0:
            raise ValueError("epsilon_up + epsilon_down >= 1: channel "
                             "is not invertible")
        return np.linalg.inv(self.matrix)


def _state_array(state):
    if isinstance(state, QuantumState):
        return state.array, state.model, state.kind
    arr = np.asarray(state)
    kind = "density" if arr.ndim == 2 else "vector"
    return arr, AtomModel.QUBIT, kind


def readout_distribution(state, program: Optional[CompiledBasisProgram] = None,
                         pattern: Optional[AddressingPattern] = None
                         ) -> np.ndarray:
    """Probabilities over {up, down}^N after the basis rotation and readout.

    Leaked levels of the five-level model are marginalized through the
    presence/absence readout image.  `program=None` measures z directly.
    """
    arr, model, kind = _state_array(state)
    n = int(round(np.log(arr.shape[0]) / np.log(model.dim)))
    if program is not None:
        if pattern is None:
            raise ValueError("a compiled program needs the addressing pattern")
        # C^dag sigma_z C = sigma_b, so target-basis statistics of psi are
        # the z-basis statistics of C psi
        u = program_unitary(program, pattern, model)
        if kind == "vector":
            arr = u @ arr
        else:
            arr = u @ arr @ u.conj().T
    if kind == "vector":
        level_probs = np.abs(arr) ** 2
    else:
        level_probs = np.real(np.diag(arr))
    level_probs = np.clip(level_probs, 0.0, None)
    probs = np.zeros(2 ** n)
    for idx, p in enumerate(level_probs):
        if p == 0.0:
            continue
        bit_idx = 0
        rem = idx
        levels = []
        for _ in range(n):
            rem, level = divmod(rem, model.dim)
            levels.append(level)
        levels.reverse()
        for level in levels:
            bit_idx = bit_idx * 2 + (0 if READOUT_IMAGE[level] == "u" else 1)
        probs[bit_idx] += p
    total = probs.sum()
    if total <= 0:
        raise ValueError("state has no readout weight")
    return probs / total


def _basis_string(program: Optional[CompiledBasisProgram],
                  pattern: Optional[AddressingPattern],
                  n_atoms: int) -> Optional[str]:
    if program is None:
        return "z" * n_atoms
    if pattern is None:
        return None
    return "".join(program.basis.for_class(AtomClass(int(c)))
                   for c in pattern.classes)


def sample_shots(state, program: Optional[CompiledBasisProgram],
                 error_model: ErrorModel, n_shots: int, seed: int,
                 pattern: Optional[AddressingPattern] = None,
                 realization_id: Optional[int] = None) -> list:
    """Draw projective shots with readout flips and addressing losses.

    Preparation failures (STIRAP) act upstream of the dynamics and are the
    sequence runner's responsibility, not applied here.  Deterministic for
    a given seed.
    """
    if n_shots < 1:
        raise ValueError("need at least one shot")
    arr, model, _ = _state_array(state)
    n = int(round(np.log(arr.shape[0]) / np.log(model.dim)))
    probs = readout_distribution(state, program, pattern)
    rng = np.random.default_rng(seed)
    draws = rng.choice(probs.size, size=n_shots, p=probs)
    loss_p = np.zeros(n)
    if pattern is not None:
        loss_p = np.array([error_model.loss_probability(AtomClass(int(c)))
                           for c in pattern.classes])
    basis = _basis_string(program, pattern, n)
    shots = []
    for d in draws:
        bits = [(d >> (n - 1 - a)) & 1 for a in range(n)]
        outcome = []
        for a, b in enumerate(bits):
            sym = "u" if b == 0 else "d"
            if loss_p[a] > 0 and rng.random() < loss_p[a]:
                sym = error_model.loss_reads
            elif sym == "u" and rng.random() < error_model.epsilon_up:
                sym = "d"
            elif sym == "d" and rng.random() < error_model.epsilon_down:
                sym = "u"
            outcome.append(sym)
        shots.append(ShotRecord(tuple(outcome), basis, seed, realization_id))
    return shots


def shot_distribution(shots: Sequence[ShotRecord]) -> np.ndarray:
    """Empirical probabilities over {up, down}^N (up = bit 0)."""
    n = len(shots[0].outcomes)
    probs = np.zeros(2 ** n)
    for s in shots:
        idx = 0
        for o in s.outcomes:
            idx = idx * 2 + (0 if o == "u" else 1)
        probs[idx] += 1.0
    return probs / len(shots)


def _apply_per_atom(prob_table: np.ndarray, mat: np.ndarray) -> np.ndarray:
    p = np.asarray(prob_table, dtype=float)
    n = int(round(np.log2(p.size)))
    if 2 ** n != p.size:
        raise ValueError("probability table length must be a power of two")
    t = p.reshape((2,) * n)
    for axis in range(n):
        t = np.moveaxis(np.tensordot(mat, t, axes=([1], [axis])), 0, axis)
    return t.reshape(-1)


def forward_detection_errors(prob_table: np.ndarray,
                             error_model: ErrorModel) -> np.ndarray:
    """Apply the readout channel M^{tensor N} to ideal probabilities."""
    return _apply_per_atom(prob_table,
                           CorrectionMatrix.from_error_model(error_model).matrix)


def correct_detection_errors(prob_table: np.ndarray, error_model: ErrorModel,
                             clip: bool = False) -> np.ndarray:
    """Invert the readout channel; exact inverse of the forward map.

    The result sums to 1 but may contain small negative entries; they are
    preserved for likelihood-based downstream fits unless `clip` is set,
    which zeroes negatives and renormalizes for display.
    """
    out = _apply_per_atom(prob_table,
                          CorrectionMatrix.from_error_model(error_model).inverse)
    if clip:
        out = np.clip(out, 0.0, None)
        s = out.sum()
        if s > 0:
            out = out / s
    return out


def estimate_correlator(shots: Sequence[ShotRecord], pauli) -> tuple:
    """Empirical mean and standard error of a Pauli-string product.

    Each shot must have been measured in a basis matching the string on
    its support (checked when the shot records carry basis labels).
    """
    support = [a for a, s in enumerate(pauli.symbols) if s != "1"]
    if not shots:
        raise ValueError("no shots")
    vals = np.empty(len(shots))
    for i, shot in enumerate(shots):
        if shot.basis is not None:
            for a in support:
                if shot.basis[a] != pauli.symbols[a]:
                    raise ValueError(
                        f"shot basis {shot.basis!r} incompatible with "
                        f"{pauli.symbols} at atom {a}")
        v = 1
        for a in support:
            v *= shot.eigenvalue(a)
        vals[i] = v
    mean = float(vals.mean())
    if len(vals) > 1:
        err = float(vals.std(ddof=1) / np.sqrt(len(vals)))
    else:
        err = float("nan")
    return mean, err


# ---------------------------------------------------------------------------
# shot files

def write_shots_csv(path, shots: Sequence[ShotRecord]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["shot_id", "basis", "outcome", "seed", "realization_id"])
        for i, s in enumerate(shots):
            w.writerow([i, s.basis or "", s.bitstring,
                        "" if s.seed is None else s.seed,
                        "" if s.realization_id is None else s.realization_id])


def read_shots_csv(path) -> list:
    shots = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            shots.append(ShotRecord(
                tuple(row["outcome"]),
                row["basis"] or None,
                int(row["seed"]) if row["seed"] else None,
                int(row["realization_id"]) if row["realization_id"] else None))
    return shots
