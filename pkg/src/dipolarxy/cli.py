"""Command-line interface: spectra, experiment plans, and tomography.

Exit codes: 0 success, 2 configuration error, 3 numerical failure.
All floating-point output uses repr(), which round-trips bitwise.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .geometry import (AddressingPattern, ArrayGeometry,
                       INTERACTING_SEPARATION, NONINTERACTING_SEPARATION,
                       build_triangle_array, inversion_pattern,
                       mirror_pattern, single_triangle_pattern)
from .hilbert import (CouplingConstants, HamiltonianTerm, TWO_PI, chi_state,
                      exact_spectrum, lightshift_hamiltonian,
                      magnetization_sector_indices, symmetry_label, w_state,
                      xy_hamiltonian)
from .measure import (ErrorModel, correct_detection_errors,
                      forward_detection_errors, read_shots_csv)
from .montecarlo import (ExperimentPlan, MECHANISMS, SweepResult,
                         adiabatic_plan, chirality_phase_plan, ramsey_plan,
                         run_plan)
from .pulses import ALL_BASES
from .tomography import (TomographyDataset, dataset_from_state,
                         mle_reconstruct, read_dataset_csv,
                         reconstruction_report, write_dataset_csv)


class ConfigError(Exception):
    """User-supplied configuration is invalid (exit code 2)."""


class NumericalError(Exception):
    """A computation failed to converge or produced invalid numbers."""


# ---------------------------------------------------------------------------
# manifest

@dataclass
class RunManifest:
    """Everything needed to reproduce a CLI invocation bitwise."""

    command: list
    config_path: str | None
    parameters: dict
    master_seed: int | None
    version: str = __version__
    outputs: list = field(default_factory=list)
    wall_clock_s: float = 0.0

    def write(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(asdict(self), fh, indent=2)


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


# ---------------------------------------------------------------------------
# spectrum

_PATTERNS = {
    "single": single_triangle_pattern,
    "mirror": mirror_pattern,
    "inversion": inversion_pattern,
}

_PATTERN_SYMMETRY = {"mirror": "mirror_y", "inversion": "inversion"}


def _read_positions_csv(path) -> np.ndarray:
    rows = []
    with open(path, newline="") as fh:
        for row in csv.reader(fh):
            if not row or row[0].lstrip().startswith("#"):
                continue
            rows.append([float(v) for v in row])
    return np.array(rows, dtype=float)


def _sector_labels(h_full: np.ndarray, sector: np.ndarray,
                   geometry: ArrayGeometry, pattern: AddressingPattern,
                   symmetry: str, vals: np.ndarray,
                   vecs: np.ndarray) -> list:
    """Mirror/inversion parity of each sector eigenstate."""
    term = HamiltonianTerm(h_full, "ramp")
    dim_full = h_full.shape[0]
    labels = []
    for idx in range(len(vals)):
        close = [j for j in range(len(vals))
                 if j != idx and abs(vals[j] - vals[idx]) < 1e-8]
        full_vec = np.zeros(dim_full, dtype=complex)
        full_vec[sector] = vecs[:, idx]
        partners = None
        if close:
            partners = np.zeros((dim_full, len(close)), dtype=complex)
            partners[sector] = vecs[:, close]
        labels.append(symmetry_label(full_vec, symmetry, geometry, pattern,
                                     term, degenerate_partners=partners))
    return labels


def cmd_spectrum(args) -> int:
    out = _out_dir(args)
    t0 = time.time()
    rows = [("time_us", "index", "energy_mhz", "symmetry")]
    parity_mismatch = None
    if args.positions is not None:
        positions = _read_positions_csv(args.positions)
        if positions.size == 0:
            raise ConfigError(f"no atom positions in {args.positions}")
        constants = CouplingConstants(j_mhz=args.j)
        h = xy_hamiltonian(positions, constants)
        vals, _ = exact_spectrum(h)
        for i, v in enumerate(vals):
            rows.append(("0.0", i, repr(float(v / TWO_PI)), ""))
        params = {"positions": str(args.positions), "j_mhz": args.j}
    elif args.pattern == "single":
        geometry = build_triangle_array(args.lattice_constant)
        constants = CouplingConstants(j_mhz=args.j,
                                      lattice_constant=args.lattice_constant)
        h = xy_hamiltonian(geometry.positions, constants)
        sector = magnetization_sector_indices(3, 2)  # one-excitation states
        vals = np.linalg.eigvalsh(h.matrix[np.ix_(sector, sector)]) / TWO_PI
        for i, v in enumerate(vals):
            rows.append(("0.0", i, repr(float(v)), ""))
        rows.append(("0.0", "gap", repr(float(vals[-1] - vals[0])), ""))
        params = {"pattern": "single", "j_mhz": args.j,
                  "lattice_constant": args.lattice_constant}
    else:
        pattern = _PATTERNS[args.pattern]()
        separation = (args.separation if args.separation is not None
                      else INTERACTING_SEPARATION)
        geometry = build_triangle_array(args.lattice_constant, n_triangles=2,
                                        separation=separation,
                                        orientation="inward")
        # the ramp analysis runs in the frame where the prepared states are
        # low-energy, i.e. with the antiferromagnetic coupling sign
        constants = CouplingConstants(j_mhz=abs(args.j),
                                      lattice_constant=args.lattice_constant)
        h_xy = xy_hamiltonian(geometry.positions, constants).matrix
        h_shift = lightshift_hamiltonian(pattern, 1.0).matrix
        n_up = sum(1 for m in pattern.multipliers() if m == 0)
        sector = magnetization_sector_indices(pattern.n_atoms, n_up)
        symmetry = _PATTERN_SYMMETRY[args.pattern]
        t_end = args.t_end if args.t_end is not None else 10.0 * args.tau
        times = np.linspace(0.0, t_end, args.n_times)
        for t in times:
            delta = args.delta * np.exp(-t / args.tau)
            h_full = h_xy + delta * h_shift
            sub = h_full[np.ix_(sector, sector)]
            vals, vecs = np.linalg.eigh(sub)
            labels = _sector_labels(h_full, sector, geometry, pattern,
                                    symmetry, vals, vecs)
            for i, (v, lab) in enumerate(zip(vals, labels)):
                rows.append((repr(float(t)), i, repr(float(v / TWO_PI)),
                             f"{lab:+d}"))
        # adiabatic connectivity: the ramp starts in a symmetric product
        # state (parity +1); a ground state of opposite parity cannot be
        # reached adiabatically
        final_labels = labels
        parity_mismatch = final_labels[0] != 1
        params = {"pattern": args.pattern, "j_mhz": args.j,
                  "lattice_constant": args.lattice_constant,
                  "separation": separation, "delta0_mhz": args.delta,
                  "tau_us": args.tau, "t_end_us": t_end,
                  "n_times": args.n_times, "symmetry": symmetry,
                  "ground_parity": final_labels[0],
                  "parity_mismatch": parity_mismatch}

    path = out / "spectrum.csv"
    with open(path, "w", newline="") as fh:
        csv.writer(fh).writerows(rows)
    if parity_mismatch is not None and parity_mismatch:
        print("parity mismatch: the ramp ground state has odd symmetry and "
              "cannot be adiabatically connected to the initial state; the "
              "ramp targets the lowest even state instead")
    manifest = RunManifest(command=sys.argv, config_path=args.positions,
                           parameters=params, master_seed=None,
                           outputs=[str(path)],
                           wall_clock_s=time.time() - t0)
    manifest.write(out / "spectrum.manifest.json")
    print(f"wrote {path}")
    return 0


# ---------------------------------------------------------------------------
# run

def _parse_toggles(pairs) -> dict | None:
    if not pairs:
        return None
    toggles = {}
    for item in pairs:
        if "=" not in item:
            raise ConfigError(f"--toggle expects mechanism=on|off, got {item!r}")
        mech, _, value = item.partition("=")
        if mech not in MECHANISMS:
            raise ConfigError(f"unknown mechanism {mech!r}; choose from "
                              f"{', '.join(MECHANISMS)}")
        if value not in ("on", "off"):
            raise ConfigError(f"--toggle value must be on or off, got {value!r}")
        toggles[mech] = value == "on"
    return toggles


def _apply_overrides(plan: ExperimentPlan, args) -> ExperimentPlan:
    d = json.loads(plan.to_json())
    if args.seed is not None:
        d["master_seed"] = args.seed
    if args.shots is not None:
        d["shots"] = args.shots
    if args.realizations is not None:
        d["n_realizations"] = args.realizations
    overrides = _parse_toggles(args.toggle)
    if overrides:
        d["toggles"].update(overrides)
    return ExperimentPlan.from_json(json.dumps(d))


def _preset_plans(preset: str) -> list:
    if preset == "fig1c":
        return [ramsey_plan()]
    if preset == "fig2c":
        return [chirality_phase_plan()]
    if preset == "fig4c":
        return [adiabatic_plan("mirror"),
                adiabatic_plan("inversion"),
                adiabatic_plan("mirror", interacting=False)]
    raise ConfigError(f"unknown preset {preset!r}")


def _write_result(result: SweepResult, out: Path, fmt: str) -> list:
    name = result.plan.name
    outputs = []
    if fmt == "csv":
        path = out / f"{name}.csv"
        result.write_csv(path)
    else:
        path = out / f"{name}.json"
        payload = {
            "sweep_values": [repr(float(v)) for v in result.sweep_values],
            "means": {k: [repr(float(x)) for x in v]
                      for k, v in result.means.items()},
            "stds": {k: [repr(float(x)) for x in v]
                     for k, v in result.stds.items()},
            "n_realizations": result.n_realizations,
        }
        with open(path, "w") as fh:
            json.dump(payload, fh, indent=2)
    outputs.append(str(path))
    mpath = out / f"{name}.manifest.json"
    result.write_manifest(mpath)
    outputs.append(str(mpath))
    return outputs


def _print_summary(result: SweepResult) -> None:
    names = result.observable_names()
    print(f"\n{result.plan.name}: {len(result.sweep_values)} sweep points, "
          f"{result.n_realizations} realizations, "
          f"{result.wall_clock_s:.1f} s")
    header = "sweep".ljust(12) + "".join(n.rjust(18) for n in names)
    print(header)
    for i, v in enumerate(result.sweep_values):
        line = f"{v:<12.4g}"
        for n in names:
            line += f"{result.means[n][i]:>18.4g}"
        print(line)


def cmd_run(args) -> int:
    out = _out_dir(args)
    t0 = time.time()
    if args.plan is not None:
        try:
            text = Path(args.plan).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read plan file: {exc}") from exc
        try:
            plans = [ExperimentPlan.from_json(text)]
        except (ValueError, KeyError, TypeError) as exc:
            raise ConfigError(f"invalid plan: {exc}") from exc
    else:
        plans = _preset_plans(args.preset)
    plans = [_apply_overrides(p, args) for p in plans]

    outputs = []
    for plan in plans:
        result = run_plan(plan, progress=lambda msg: print(msg, flush=True))
        if not all(np.all(np.isfinite(v)) for v in result.means.values()):
            raise NumericalError(f"non-finite observables in {plan.name}")
        outputs += _write_result(result, out, args.format)
        _print_summary(result)
    manifest = RunManifest(command=sys.argv, config_path=args.plan,
                           parameters={"plans": [json.loads(p.to_json())
                                                 for p in plans]},
                           master_seed=plans[0].master_seed,
                           outputs=outputs,
                           wall_clock_s=time.time() - t0)
    manifest.write(out / "run.manifest.json")
    return 0


# ---------------------------------------------------------------------------
# tomography

_TOMO_TARGETS = {
    "w": lambda: w_state(),
    "chi+": lambda: chi_state(2.0 * np.pi / 3.0),
    "chi-": lambda: chi_state(4.0 * np.pi / 3.0),
}


def _dataset_from_shots(shots, pattern: AddressingPattern
                        ) -> TomographyDataset:
    """Histogram shot records into per-basis outcome distributions.

    Shot basis strings are atom-ordered; dataset labels are class-ordered.
    """
    atom_of_class = {int(c): a for a, c in enumerate(pattern.classes)}
    raw: dict = {}
    for s in shots:
        if s.basis is None:
            raise ConfigError("shot records carry no basis annotation")
        label = "".join(s.basis[atom_of_class[c]] for c in (0, 1, 2))
        idx = 0
        for sym in s.outcomes:
            idx = idx * 2 + (0 if sym == "u" else 1)
        raw.setdefault(label, np.zeros(8))[idx] += 1
    probs = {}
    counts = {}
    for label, vals in raw.items():
        counts[label] = int(vals.sum())
        probs[label] = vals / vals.sum()
    return TomographyDataset(probs, counts)


def _synthetic_dataset(args) -> TomographyDataset:
    psi = _TOMO_TARGETS[args.preset]()
    rho = np.outer(psi, psi.conj())
    dataset = dataset_from_state(rho)
    probs = dict(dataset.probabilities)
    if args.spam:
        em = ErrorModel()
        probs = {lb: forward_detection_errors(p, em)
                 for lb, p in probs.items()}
    counts = {}
    if args.shots_per_basis is not None:
        rng = np.random.default_rng(args.seed)
        n = args.shots_per_basis
        probs = {lb: rng.multinomial(n, p) / n for lb, p in probs.items()}
        counts = {lb: n for lb in probs}
    return TomographyDataset(probs, counts)


def cmd_tomography(args) -> int:
    out = _out_dir(args)
    t0 = time.time()
    sources = [s for s in (args.dataset, args.shots_file, args.preset)
               if s is not None]
    if len(sources) != 1:
        raise ConfigError("choose exactly one input: --dataset, --shots-file "
                          "or --preset")
    if args.dataset is not None:
        dataset = read_dataset_csv(args.dataset)
    elif args.shots_file is not None:
        dataset = _dataset_from_shots(read_shots_csv(args.shots_file),
                                      single_triangle_pattern())
    else:
        dataset = _synthetic_dataset(args)

    missing = sorted(b.label for b in ALL_BASES
                     if b.label not in dataset.probabilities)
    if missing and not args.allow_incomplete:
        raise ConfigError(
            f"dataset is missing {len(missing)} of 27 measurement bases: "
            + ", ".join(missing))

    if args.correct:
        em = ErrorModel()
        dataset = TomographyDataset(
            {lb: correct_detection_errors(p, em)
             for lb, p in dataset.probabilities.items()},
            dataset.shot_counts)

    result = mle_reconstruct(dataset, n_restarts=args.restarts,
                             seed=args.seed)
    if not result.converged:
        raise NumericalError(
            f"reconstruction did not converge (gradient norm "
            f"{result.gradient_norm:.3e})")
    targets = {name: fn() for name, fn in _TOMO_TARGETS.items()}
    report = reconstruction_report(result, targets)
    path = out / "tomography.json"
    with open(path, "w") as fh:
        json.dump(report, fh, indent=2)
    dpath = out / "tomography.dataset.csv"
    write_dataset_csv(dpath, dataset)

    print(f"reconstruction: cost {result.cost:.3e}, "
          f"{result.n_iterations} iterations, {result.n_bases} bases")
    for name, info in report["fidelities"].items():
        verdict = "entangled (witness)" if info["witness"] else "-"
        print(f"  fidelity vs {name:<5} {info['value']:.4f}  {verdict}")
    manifest = RunManifest(command=sys.argv,
                           config_path=args.dataset or args.shots_file,
                           parameters={"preset": args.preset,
                                       "spam": args.spam,
                                       "correct": args.correct,
                                       "shots_per_basis": args.shots_per_basis,
                                       "restarts": args.restarts},
                           master_seed=args.seed,
                           outputs=[str(path), str(dpath)],
                           wall_clock_s=time.time() - t0)
    manifest.write(out / "tomography.manifest.json")
    return 0


# ---------------------------------------------------------------------------
# parser

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dipolarxy",
        description="Desk-scale simulator for dipolar XY Rydberg tweezer "
                    "arrays with local light-shift control.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("spectrum",
                        help="eigenvalue tables for triangles and ramps")
    sp.add_argument("--pattern", choices=sorted(_PATTERNS), default="single")
    sp.add_argument("--positions", default=None,
                    help="CSV of atom positions (x,y[,z] in um); overrides "
                         "--pattern and emits a plain XY spectrum")
    sp.add_argument("--j", type=float, default=-0.82,
                    help="XY coupling at the lattice constant (MHz)")
    sp.add_argument("--lattice-constant", type=float, default=12.3)
    sp.add_argument("--separation", type=float, default=None,
                    help="triangle separation for two-triangle patterns (um)")
    sp.add_argument("--delta", type=float, default=23.0,
                    help="initial light shift per addressing unit (MHz)")
    sp.add_argument("--tau", type=float, default=0.55,
                    help="ramp time constant (us)")
    sp.add_argument("--t-end", type=float, default=None)
    sp.add_argument("--n-times", type=int, default=61)
    sp.add_argument("--out", default=".")
    sp.set_defaults(func=cmd_spectrum)

    rp = sub.add_parser("run", help="execute an experiment plan")
    group = rp.add_mutually_exclusive_group(required=True)
    group.add_argument("--preset", choices=("fig1c", "fig2c", "fig4c"))
    group.add_argument("--plan", help="JSON plan file")
    rp.add_argument("--seed", type=int, default=None)
    rp.add_argument("--shots", type=int, default=None)
    rp.add_argument("--realizations", type=int, default=None)
    rp.add_argument("--toggle", action="append", default=[],
                    metavar="MECHANISM=on|off")
    rp.add_argument("--out", default=".")
    rp.add_argument("--format", choices=("csv", "json"), default="csv")
    rp.set_defaults(func=cmd_run)

    tp = sub.add_parser("tomography",
                        help="maximum-likelihood state reconstruction")
    tp.add_argument("--dataset", default=None,
                    help="CSV of per-basis outcome probabilities or counts")
    tp.add_argument("--shots-file", default=None,
                    help="CSV of annotated shot records")
    tp.add_argument("--preset", choices=sorted(_TOMO_TARGETS), default=None,
                    help="synthetic dataset from an ideal target state")
    tp.add_argument("--shots-per-basis", type=int, default=None,
                    help="sample finite statistics for synthetic presets")
    tp.add_argument("--spam", action="store_true",
                    help="apply readout errors to synthetic presets")
    tp.add_argument("--correct", action="store_true",
                    help="invert the readout channel before reconstruction")
    tp.add_argument("--allow-incomplete", action="store_true")
    tp.add_argument("--restarts", type=int, default=8)
    tp.add_argument("--seed", type=int, default=0)
    tp.add_argument("--out", default=".")
    tp.set_defaults(func=cmd_tomography)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, KeyError, TypeError, OSError,
            json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (NumericalError, FloatingPointError,
            np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
