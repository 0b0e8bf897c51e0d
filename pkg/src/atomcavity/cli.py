"""Command-line entry point: seeded campaigns that emit figure data as CSV.

Every run writes ``<out>/<run_id>/`` containing its CSV/JSON outputs and a
``manifest.json`` that ``atomcavity replay`` can re-execute.
"""

from __future__ import annotations

import argparse
import csv
import datetime as _dt
import hashlib
import io
import json
import os
import sys
import tempfile
from pathlib import Path

import numpy as np

from . import __version__
from .config import ConfigError, PRESETS, load_config, make_config
from .experiments import defect_free_curve, scaling_campaign, stream
from .fit import fit_spectrum
from .loading import sample_occupancy, run_loading_campaign, trial_rng
from .rearrange import (
    InsufficientAtomsError,
    crest_factor,
    optimize_tone_phases,
    plan_rearrangement,
    synthesize_tone_sweeps,
    total_displacement,
)
from .spectra import Spectrum, SpectrumParams, default_grid, synthesize_spectrum, transmission


def _fmt(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return str(int(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def write_atomic(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    with os.fdopen(fd, "w", newline="") as fh:
        fh.write(text)
    os.replace(tmp, path)


def _json(obj) -> str:
    def default(o):
        if isinstance(o, np.generic):
            return o.item()
        if isinstance(o, np.ndarray):
            return o.tolist()
        raise TypeError(type(o).__name__)

    return json.dumps(obj, indent=2, sort_keys=True, default=default) + "\n"


class Run:
    """Collects outputs of one command invocation inside its run directory."""

    def __init__(self, out: Path, run_id: str):
        self.dir = out / run_id
        self.run_id = run_id
        self.outputs: list[str] = []

    def write(self, name: str, text: str) -> None:
        write_atomic(self.dir / name, text)
        self.outputs.append(name)


# -- commands -----------------------------------------------------------------

def cmd_load_sim(cfg, args, run: Run) -> None:
    stats = run_loading_campaign(cfg.loading, args.trials or 890, args.seed)
    run.write("histogram.csv", csv_text(["atom_count", "trials"], enumerate(stats.histogram)))
    run.write("trials.csv", csv_text(
        ["trial_id", "atom_count", "occupancy_bitstring"],
        ((i, c, "".join("1" if b else "0" for b in occ))
         for i, (c, occ) in enumerate(zip(stats.atom_counts, stats.occupancies))),
    ))
    run.write("stats.json", _json(stats.manifest()))
    print(f"mean atom number {stats.mean:.3f} +/- {stats.std:.3f} over {stats.n_trials} trials")


def cmd_defect_free_curve(cfg, args, run: Run) -> None:
    n_max = args.n_max or cfg["tweezer.n_traps"]
    rows = defect_free_curve(cfg, range(args.n_min, n_max + 1), args.trials or 100_000, args.seed)
    header = list(rows[0])
    run.write("defect_free.csv", csv_text(header, ([r[h] for h in header] for r in rows)))
    run.write("survival.json", _json({"survival": cfg.survival}))


def _spectrum_params(cfg, args) -> SpectrumParams:
    cav = cfg.cavity
    if args.omega is not None:
        omega = args.omega
    else:
        omega = cfg["spectrum.g_MHz"] * np.sqrt(args.atoms)
    dca = cfg["spectrum.delta_ca_MHz"] if args.delta_ca is None else args.delta_ca
    return SpectrumParams(float(omega), float(dca), cav.kappa, cav.gamma, 1.0)


def cmd_spectrum(cfg, args, run: Run) -> None:
    params = _spectrum_params(cfg, args)
    sigma = cfg["noise.sigma"] if args.noise is None else args.noise
    grid = default_grid(cfg["spectrum.span_MHz"], cfg["spectrum.points"])
    spec = synthesize_spectrum(grid, params, sigma, stream(args.seed, 0))
    run.write("spectrum.csv", spec.to_csv())
    run.write("params.json", _json(params.__dict__))


def cmd_fit(cfg, args, run: Run) -> None:
    spec = Spectrum.from_csv(Path(args.file))
    cav = cfg.cavity
    res = fit_spectrum(spec, cav.kappa, cav.gamma)
    run.write("fit.json", _json(res.to_record()))
    model = transmission(spec.detuning, res.params(cav.kappa, cav.gamma))
    run.write("fit_curve.csv", csv_text(["detuning_MHz", "transmission", "model"],
                                        zip(spec.detuning, spec.transmission, model)))
    print(f"omega_eff = {res.omega_eff:.5f} +/- {res.uncertainties['omega_eff']:.5f} MHz, "
          f"delta_ca = {res.delta_ca:.4f} MHz, converged={res.converged}")


def cmd_scaling(cfg, args, run: Run) -> None:
    atoms = range(args.n_min, args.n_max + 1)
    result = scaling_campaign(cfg, atoms, args.seed, model=args.coupling_model)
    sc = result.scaling
    run.write("scaling.csv", csv_text(["N", "omega_N", "g_per_N", "model_g_sqrtN"], sc.rows()))
    run.write("scaling.json", _json(sc.to_record()))
    run.write("fits.json", _json({str(n): f.to_record() for n, f in result.fits.items()}))
    for n, spec in result.spectra.items():
        run.write(f"spectra/N{n:02d}.csv", spec.to_csv())
    print(f"g0_hat = {sc.g0_hat:.4f} +/- {sc.g0_sigma:.4f} MHz, mean g = {sc.mean_g:.4f} MHz, "
          f"max deviation {100 * sc.max_rel_dev:.2f}%")


def cmd_plan(cfg, args, run: Run) -> None:
    tw = cfg.tweezer
    load = cfg.loading
    # repeat the load until enough atoms are present, one trial stream per attempt
    for attempt in range(args.max_reloads):
        occ = sample_occupancy(tw.n_traps, load.p, trial_rng(args.seed, attempt, load.words_per_trial), attempt)
        try:
            plan = plan_rearrangement(occ, args.atoms, tw, cfg["rearrange.sweep_us"])
            break
        except InsufficientAtomsError:
            if attempt == args.max_reloads - 1:
                raise
    phases = optimize_tone_phases(len(plan.moves))
    sched = synthesize_tone_sweeps(plan, cfg["rearrange.sweep_us"], cfg["rearrange.sample_rate_MSps"],
                                   cfg["rearrange.aod_MHz_per_um"], cfg["rearrange.aod_center_MHz"],
                                   phases=phases)
    record = plan.to_record()
    record["occupancy_bitstring"] = occ.bitstring()
    record["load_attempts"] = occ.trial_id + 1
    record["total_displacement_um"] = total_displacement(plan, tw)
    record["crest_factor"] = crest_factor(phases)
    run.write("plan.json", _json(record))
    run.write("tones.csv", csv_text(["time_us", "tone_index", "freq_MHz", "amplitude", "phase_rad"],
                                    sched.rows()))


COMMANDS = {
    "load-sim": cmd_load_sim,
    "defect-free-curve": cmd_defect_free_curve,
    "spectrum": cmd_spectrum,
    "fit": cmd_fit,
    "scaling": cmd_scaling,
    "plan": cmd_plan,
}


# -- parser -------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="JSON file of dotted config keys")
    common.add_argument("--preset", default="paper-2024", choices=sorted(PRESETS))
    common.add_argument("--seed", type=int, default=0, help="master seed")
    common.add_argument("--out", type=Path, default=Path("runs"), help="root output directory")
    common.add_argument("--trials", type=int, help="Monte Carlo trials")
    common.add_argument("--run-id", help="override the derived run id")

    p = argparse.ArgumentParser(prog="atomcavity", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    sub.add_parser("load-sim", parents=[common], help="loading histogram (Fig. 2 data)")

    d = sub.add_parser("defect-free-curve", parents=[common], help="defect-free success vs N")
    d.add_argument("--n-min", type=int, default=1)
    d.add_argument("--n-max", type=int)

    s = sub.add_parser("spectrum", parents=[common], help="synthesize a transmission spectrum")
    s.add_argument("--omega", type=float, help="collective coupling in MHz")
    s.add_argument("--atoms", type=int, default=3, help="atom number (used when --omega absent)")
    s.add_argument("--delta-ca", type=float)
    s.add_argument("--noise", type=float, help="noise sigma; defaults to noise.sigma")

    f = sub.add_parser("fit", parents=[common], help="fit a spectrum CSV")
    f.add_argument("file")

    sc = sub.add_parser("scaling", parents=[common], help="sqrt(N) scaling campaign (Fig. 5 data)")
    sc.add_argument("--n-min", type=int, default=3)
    sc.add_argument("--n-max", type=int, default=26)
    sc.add_argument("--coupling-model", choices=["uniform", "geometric"], default="uniform")

    pl = sub.add_parser("plan", parents=[common], help="rearrangement plan and AOD tone sweeps")
    pl.add_argument("--atoms", type=int, default=20)
    pl.add_argument("--max-reloads", type=int, default=1000)

    r = sub.add_parser("replay", help="re-run a manifest")
    r.add_argument("manifest", type=Path)
    r.add_argument("--out", type=Path, help="root output directory for the replay")
    return p


_RUN_KEYS = ("config", "preset", "out", "run_id", "command", "manifest")


def _arg_snapshot(args) -> dict:
    return {k: (str(v) if isinstance(v, Path) else v) for k, v in vars(args).items() if k not in _RUN_KEYS}


def _run_id(command: str, cfg, snap: dict) -> str:
    blob = json.dumps({"command": command, "config": cfg.values, "args": snap}, sort_keys=True)
    return f"{command}-{hashlib.sha256(blob.encode()).hexdigest()[:12]}"


def execute(command: str, cfg, args) -> Path:
    snap = _arg_snapshot(args)
    run = Run(Path(args.out), args.run_id or _run_id(command, cfg, snap))
    COMMANDS[command](cfg, args, run)
    manifest = {
        "run_id": run.run_id,
        "timestamp": _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
        "command": command,
        "args": snap,
        "master_seed": args.seed,
        "config": cfg.values,
        "outputs": sorted(run.outputs),
        "tool_version": __version__,
    }
    write_atomic(run.dir / "manifest.json", _json(manifest))
    print(run.dir)
    return run.dir


def replay(manifest_path: Path, out: Path | None = None) -> Path:
    """Re-execute the run described by ``manifest_path``."""
    manifest = json.loads(Path(manifest_path).read_text())
    cfg = make_config(manifest["config"])
    args = argparse.Namespace(**manifest["args"])
    args.out = out if out is not None else Path(manifest_path).parent.parent
    args.run_id = manifest["run_id"]
    return execute(manifest["command"], cfg, args)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "replay":
            replay(args.manifest, args.out)
            return 0
        cfg = load_config(args.config, args.preset)
        if args.trials is not None and args.trials < 1:
            raise ConfigError("--trials", "must be >= 1")
        execute(args.command, cfg, args)
    except ConfigError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - any runtime failure maps to exit code 1
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
