"""Command-line interface: ``rydblock <command> [options]``.

Every command that writes a file also writes ``<file>.manifest.json`` holding
the argument vector, resolved configuration and data-file hashes. Running
``rydblock --from-manifest <manifest>`` repeats the run.

Exit codes: 0 success, 2 configuration error, 3 numerical failure,
4 self-test failure.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import time
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import __version__
from .atomdata import (
    HALF,
    AtomState,
    QuantumDefectTable,
    default_constants,
    default_table,
    level_energy,
)
from .errors import AmbiguityError, ConfigurationError, NumericalError, StaleCacheError
from .io import RunManifest, file_sha256, manifest_path, read_csv, write_csv, write_json

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_SELFTEST = 0, 2, 3, 4
CACHE_ENV = "RYDBLOCK_CACHE_DIR"
CACHE_FILE = "radial_elements.txt"


def cache_dir() -> Path:
    env = os.environ.get(CACHE_ENV)
    if env:
        return Path(env)
    return Path(os.environ.get("XDG_CACHE_HOME", Path.home() / ".cache")) / "rydblock"


def _parse_j(text: str) -> Fraction:
    try:
        return Fraction(text)
    except (ValueError, ZeroDivisionError) as exc:
        raise argparse.ArgumentTypeError(f"bad half-integer {text!r}") from exc


def _parse_range(text: str) -> tuple[int, int]:
    lo, _, hi = text.partition(":")
    try:
        return int(lo), int(hi or lo)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected N or N1:N2, got {text!r}") from exc


def _grid(start: float, stop: float, step: float) -> np.ndarray:
    if step <= 0 or stop < start:
        raise ConfigurationError("grid needs step > 0 and stop >= start")
    count = int(math.floor((stop - start) / step + 1e-9)) + 1
    return np.round(start + step * np.arange(count), 10)


class Session:
    """Data files, cache and manifest bookkeeping for one invocation."""

    def __init__(self, args):
        self.args = args
        if getattr(args, "hydrogenic", False):
            self.table = QuantumDefectTable.hydrogenic()
        elif args.defect_table:
            self.table = QuantumDefectTable.from_file(args.defect_table)
        else:
            self.table = default_table()
        self.consts = default_constants()
        self._cache = None
        self.started = time.perf_counter()

    @property
    def cache_path(self) -> Path:
        return cache_dir() / CACHE_FILE

    def cache(self):
        from .radial import MatrixElementCache

        if self._cache is None:
            self._cache = MatrixElementCache(self.table, self.consts, enabled=True)
            if not self.args.no_cache and not self.args.rebuild_cache:
                self._cache.load(self.cache_path)
        return self._cache

    def save_cache(self) -> None:
        if self._cache is not None and not self.args.no_cache and len(self._cache):
            self._cache.save(self.cache_path)

    def model(self, n: int = 79):
        from .pairint import PairInteraction, build_pair_basis, forster_channels

        basis = build_pair_basis(forster_channels(n))
        return PairInteraction(basis, self.table, self.consts, self.cache(), rydberg_n=n)

    def hashes(self) -> dict:
        out = {"quantum_defects": self.table.content_hash, "constants": self.consts.source_hash}
        if self._cache is not None and not self.args.no_cache:
            out["radial_cache"] = file_sha256(self.cache_path)
        return out

    def finish(self, output, config: dict, seed=None, extra_outputs=()) -> None:
        self.save_cache()
        if output is None:
            return
        outputs = {str(p): file_sha256(p) for p in (output, *extra_outputs)}
        manifest = RunManifest(
            command=self.args.command,
            argv=list(self.args.argv),
            config=config,
            data_hashes=self.hashes(),
            seed=seed,
            wall_time_s=round(time.perf_counter() - self.started, 3),
            outputs=outputs,
        )
        manifest.write(manifest_path(output))


def _print_json(payload) -> None:
    print(json.dumps(payload, indent=2, sort_keys=True, default=str))


# commands

def cmd_energy(args, session: Session) -> int:
    table, consts = session.table, session.consts
    if args.table:
        lo, hi = args.table
        rows = []
        for n in range(lo, hi + 1):
            for l in (1, 2, 3):
                for j in (l - HALF, l + HALF):
                    st = AtomState(n, l, j, HALF)
                    rows.append({
                        "n": n, "l": l, "j": str(j), "label": st.label().rsplit(",", 1)[0],
                        "defect": table.defect(n, l, j), "energy_mhz": level_energy(st, table, consts),
                    })
        cols = [("n", "1"), ("l", "1"), ("j", "1"), ("label", "text"), ("defect", "1"), ("energy_mhz", "MHz")]
        if args.out:
            write_csv(args.out, cols, rows, [f"rydblock {__version__} energy"])
            session.finish(args.out, {"table": list(args.table), "hydrogenic": args.hydrogenic})
        else:
            for r in rows:
                print(f"{r['label']:>10s}  defect {r['defect']:.8f}  E = {r['energy_mhz']:.6f} MHz")
        return EXIT_OK
    if args.j is None:
        raise ConfigurationError("--j is required unless --table is given")
    st = AtomState(args.n, args.l, args.j, args.j)
    energy = level_energy(st, table, consts)
    payload = {
        "state": st.label().rsplit(",", 1)[0],
        "defect": table.defect(args.n, args.l, args.j),
        "energy_mhz": energy,
    }
    if args.l == 2:
        other = AtomState(args.n, 2, 2 + HALF if args.j == 2 - HALF else 2 - HALF, HALF)
        payload["fine_structure_splitting_mhz"] = abs(energy - level_energy(other, table, consts))
    _print_json(payload)
    return EXIT_OK


SPECTRUM_COLUMNS = [
    ("dy_um", "um"), ("R_um", "um"), ("theta_rad", "rad"), ("curve", "index"),
    ("energy_mhz", "MHz, relative to twice the dressed |r> energy"), ("kappa2", "1"), ("dimension", "1"),
]


def cmd_pair_spectrum(args, session: Session) -> int:
    from .pairint import scan_curves, zero_crossings

    model = session.model(args.n)
    dys = _grid(args.dy_min, args.dy_max, args.dy_step)
    scan = scan_curves(model, args.Z, dys, args.field)
    dim = model.basis.dimension
    keep = np.arange(dim)
    if args.window is not None:
        keep = np.nonzero(np.any(np.abs(scan.energies) <= args.window, axis=0))[0]
    rows = []
    for k, dy in enumerate(dys):
        for c in keep:
            rows.append({
                "dy_um": float(dy), "R_um": float(scan.R[k]), "theta_rad": float(scan.theta[k]),
                "curve": int(c), "energy_mhz": float(scan.energies[k, c]),
                "kappa2": float(scan.overlaps[k, c]), "dimension": dim,
            })
    crossings = zero_crossings(scan, 1e-8)
    summary = {
        "dimension": dim,
        "points": len(dys),
        "min_tracking_overlap": float(scan.tracking_overlap.min()),
        "zero_crossings": crossings,
    }
    config = {k: getattr(args, k) for k in ("Z", "dy_min", "dy_max", "dy_step", "field", "n", "window")}
    if args.out:
        write_csv(args.out, SPECTRUM_COLUMNS, rows, [f"rydblock {__version__} pair-spectrum"])
        side = Path(str(args.out) + ".json")
        write_json(side, {"summary": summary, "config": config})
        session.finish(args.out, config, extra_outputs=[side])
    _print_json(summary)
    return EXIT_OK


def cmd_asymptotic(args, session: Session) -> int:
    from .pairint import asymptotic_energies_vs_field

    model = session.model(args.n)
    fields = _grid(args.field_min, args.field_max, args.field_step)
    rows = asymptotic_energies_vs_field(fields, model)
    cols = [("field", "mT"), ("channel", "text"), ("atom1", "text"), ("atom2", "text"),
            ("energy", "MHz, relative to twice the zero-field nd5/2 level")]
    config = {k: getattr(args, k) for k in ("field_min", "field_max", "field_step", "n")}
    if args.out:
        write_csv(args.out, cols, rows, [f"rydblock {__version__} asymptotic"])
        session.finish(args.out, config)
    else:
        for r in rows:
            print(f"{r['field']:.4f} {r['channel']:>10s} {r['atom1']:>14s} {r['atom2']:>14s} {r['energy']:.6f}")
    return EXIT_OK


def cmd_blockade(args, session: Session) -> int:
    from .blockade import BlockadeCalculator

    calc = BlockadeCalculator(session.model(args.n), workers=args.workers)
    dys = _grid(0.0, args.dy_max, args.dy_step)
    rows, summaries = [], []
    for field in args.field:
        curve = calc.averaged(args.Z, args.sigma_y, field, args.omega, nodes=args.nodes,
                              sigma_z=args.sigma_z, dy_samples=dys)
        summaries.append(curve.summary())
        for dy, p2, b in zip(curve.dy, curve.p2, curve.shift):
            rows.append({"field_mt": float(field), "dy_um": float(dy), "p2": float(p2), "shift_mhz": float(b)})
    config = {k: getattr(args, k) for k in ("Z", "sigma_y", "sigma_z", "field", "omega", "n", "nodes", "dy_max", "dy_step")}
    if args.out:
        cols = [("field_mt", "mT"), ("dy_um", "um"), ("p2", "1"), ("shift_mhz", "MHz")]
        write_csv(args.out, cols, rows, [f"rydblock {__version__} blockade"])
        side = Path(str(args.out) + ".json")
        write_json(side, {"summary": summaries, "config": config})
        session.finish(args.out, config, extra_outputs=[side])
    else:
        session.save_cache()
    _print_json(summaries)
    return EXIT_OK


EXPERIMENT_COLUMNS = [
    ("T", "us"), ("site", "control|target"), ("mean_retention", "1"), ("std_retention", "1"),
    ("stderr", "1"), ("n_shots", "1"), ("n_postselected", "1"), ("mean_rydberg_population", "1"),
]


def _experiment_config(args):
    from .expsim import ExperimentConfig

    data = {}
    if args.config:
        data = json.loads(Path(args.config).read_text(encoding="utf-8"))
    for key in ("shots", "seed"):
        if getattr(args, key) is not None:
            data[key] = getattr(args, key)
    try:
        return ExperimentConfig.from_dict(data)
    except TypeError as exc:
        raise ConfigurationError(str(exc)) from exc


def cmd_simulate(args, session: Session) -> int:
    from .blockade import BlockadeCalculator
    from .expsim import blockade_lookup, run_experiment, with_excitation_efficiency

    config = _experiment_config(args)
    if args.efficiency is not None:
        config = with_excitation_efficiency(config, args.efficiency)
    if args.t_values:
        T = [float(t) for t in args.t_values.split(",")]
    else:
        T = _grid(0.0, args.t_max, args.t_step)
    shift_fn = None
    if config.blockade_mhz is None and args.sequence == "fig3":
        shift_fn = blockade_lookup(config, BlockadeCalculator(session.model()))
    result = run_experiment(config, args.sequence, T, shards=args.shards, shift_fn=shift_fn)
    resolved = config.to_dict()
    if args.out:
        write_csv(args.out, EXPERIMENT_COLUMNS, result.rows, [f"rydblock {__version__} simulate {args.sequence}"])
        session.finish(args.out, {"experiment": resolved, "sequence": args.sequence, "T_grid": list(map(float, T))},
                       seed=config.seed)
    else:
        session.save_cache()
    site = "control" if args.sequence == "fig2-crosstalk" else "target"
    ret = np.array([r["mean_retention"] for r in result.rows if r["site"] == site])
    _print_json({
        "sequence": args.sequence,
        "points": len(T),
        "site": site,
        "max_rydberg_excitation": float(1.0 - np.nanmin(ret)),
        "prep_error": config.prep_error,
        "seed": config.seed,
    })
    return EXIT_OK


def cmd_fit(args, session: Session) -> int:
    from .fitting import fit_damped_rabi

    rows = read_csv(args.input)
    if not rows:
        raise ConfigurationError(f"{args.input}: no data rows")
    if "site" in rows[0]:
        rows = [r for r in rows if r["site"] == args.site]
    try:
        t = np.array([float(r[args.t_column]) for r in rows])
        y = np.array([float(r[args.y_column]) for r in rows])
    except KeyError as exc:
        raise ConfigurationError(f"{args.input}: missing column {exc}") from exc
    ok = np.isfinite(y)
    result = fit_damped_rabi(t[ok], y[ok]).as_dict()
    result["input"] = str(args.input)
    if args.out:
        write_json(args.out, result)
        session.finish(args.out, {"input": str(args.input), "site": args.site})
    _print_json(result)
    return EXIT_OK


def cmd_cache(args, session: Session) -> int:
    path = session.cache_path
    if args.rebuild:
        from .pairint import build_pair_basis, forster_channels

        cache = session.cache()
        atoms = build_pair_basis(forster_channels(args.n)).atom_states
        levels = {}
        for a in atoms:
            levels.setdefault(a.level, a)
        levels = list(levels.values())
        for i, a in enumerate(levels):
            for b in levels[i + 1:]:
                if abs(a.l - b.l) == 1:
                    cache.radial(a, b)
        cache.save(path)
    from .radial import MatrixElementCache

    stats = {"path": str(path), "exists": path.exists(), "entries": 0}
    if path.exists():
        probe = MatrixElementCache(session.table, session.consts)
        stats["entries"] = probe.load(path)
        stats["table_hash"] = probe.table_hash
        stats["grid_hash"] = probe.grid_hash
        stats["sha256"] = file_sha256(path)
    _print_json(stats)
    return EXIT_OK


def cmd_selftest(args, session: Session) -> int:
    from .acceptance import run_all

    only = set(args.only) if args.only else None
    checks = run_all(only)
    failed = [c for c in checks if not c.passed]
    print(f"{len(checks) - len(failed)}/{len(checks)} criteria passed")
    return EXIT_SELFTEST if failed else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rydblock",
        description="Rydberg pair interactions, blockade shifts and two-atom experiment simulation.",
        epilog=f"Radial-integral cache directory: ${CACHE_ENV} (default ~/.cache/rydblock).",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--from-manifest", metavar="JSON", help="repeat the run recorded in a manifest")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--defect-table", metavar="PATH", help="quantum-defect table (default: shipped file)")
    common.add_argument("--no-cache", action="store_true", help="neither read nor write the radial-integral cache")
    common.add_argument("--rebuild-cache", action="store_true", help="ignore the stored cache and overwrite it")
    sub = parser.add_subparsers(dest="command")

    p = sub.add_parser("energy", parents=[common], help="single-atom level energies")
    p.add_argument("--n", type=int, default=79, help="principal quantum number")
    p.add_argument("--l", type=int, default=2, help="orbital angular momentum")
    p.add_argument("--j", type=_parse_j, default=None, help="total angular momentum, e.g. 5/2")
    p.add_argument("--hydrogenic", action="store_true", help="use zero quantum defects")
    p.add_argument("--table", type=_parse_range, metavar="N1:N2", help="dump p, d, f levels for n in N1..N2")
    p.add_argument("--out", type=Path, help="CSV output for --table")
    p.set_defaults(func=cmd_energy)

    p = sub.add_parser("pair-spectrum", parents=[common], help="molecular curves versus transverse offset")
    p.add_argument("--Z", type=float, default=11.0, help="site separation along the array axis (um)")
    p.add_argument("--dy-min", type=float, default=0.0, help="first transverse offset (um)")
    p.add_argument("--dy-max", type=float, default=12.0, help="last transverse offset (um)")
    p.add_argument("--dy-step", type=float, default=0.05, help="offset step (um)")
    p.add_argument("--field", type=float, default=1.15, help="magnetic field (mT)")
    p.add_argument("--n", type=int, default=79, help="principal quantum number of the nd level")
    p.add_argument("--window", type=float, default=None,
                   help="only emit curves that come within this many MHz of U=0")
    p.add_argument("--out", type=Path, help="CSV output (a .json summary is written alongside)")
    p.set_defaults(func=cmd_pair_spectrum)

    p = sub.add_parser("asymptotic", parents=[common], help="non-interacting pair energies versus field")
    p.add_argument("--field-min", type=float, default=0.0, help="mT")
    p.add_argument("--field-max", type=float, default=2.0, help="mT")
    p.add_argument("--field-step", type=float, default=0.05, help="mT")
    p.add_argument("--n", type=int, default=79)
    p.add_argument("--out", type=Path)
    p.set_defaults(func=cmd_asymptotic)

    p = sub.add_parser("blockade", parents=[common], help="P2 and blockade shift with thermal averaging")
    p.add_argument("--Z", type=float, default=11.0, help="site separation (um)")
    p.add_argument("--sigma-y", type=float, default=2.6, help="transverse position spread per atom (um)")
    p.add_argument("--sigma-z", type=float, default=0.0, help="axial position spread per atom (um); 0 skips")
    p.add_argument("--field", type=float, nargs="+", default=[0.0, 1.15], help="magnetic field(s) (mT)")
    p.add_argument("--omega", type=float, default=0.51, help="Rabi frequency over 2 pi (MHz)")
    p.add_argument("--n", type=int, default=79)
    p.add_argument("--nodes", type=int, default=40, help="initial Gauss-Hermite node count (>= 40)")
    p.add_argument("--dy-max", type=float, default=12.0, help="last sampled offset in the CSV (um)")
    p.add_argument("--dy-step", type=float, default=0.1, help="offset step in the CSV (um)")
    p.add_argument("--workers", type=int, default=1, help="threads for spectrum evaluation")
    p.add_argument("--out", type=Path, help="CSV output (a .json summary is written alongside)")
    p.set_defaults(func=cmd_blockade)

    p = sub.add_parser("simulate", parents=[common], help="Monte Carlo of the two-site pulse sequences")
    p.add_argument("--config", type=Path, help="JSON file with ExperimentConfig keys")
    p.add_argument("--sequence", choices=["fig2", "fig2-crosstalk", "fig3"], default="fig2")
    p.add_argument("--t-max", type=float, default=4.0, help="longest target pulse (us)")
    p.add_argument("--t-step", type=float, default=0.05, help="pulse-length step (us)")
    p.add_argument("--t-values", help="comma-separated pulse lengths (us), overrides the grid")
    p.add_argument("--shots", type=int, default=None, help="shots per pulse length")
    p.add_argument("--seed", type=int, default=None, help="64-bit seed")
    p.add_argument("--efficiency", type=float, default=None,
                   help="calibrate the dark-atom fraction to this pi-pulse excitation probability")
    p.add_argument("--shards", type=int, default=1, help="split shots into chunks (results unchanged)")
    p.add_argument("--out", type=Path, help="CSV output")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("fit", parents=[common], help="damped Rabi fit of retention data")
    p.add_argument("--in", dest="input", type=Path, required=True, help="CSV with T and retention columns")
    p.add_argument("--site", default="target", help="site to fit when the CSV has a site column")
    p.add_argument("--t-column", default="T", help="time column (us)")
    p.add_argument("--y-column", default="mean_retention", help="retention column")
    p.add_argument("--out", type=Path, help="JSON output")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("cache", parents=[common], help="radial-integral cache maintenance")
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--rebuild", action="store_true", help="recompute every integral of the pair basis")
    g.add_argument("--stats", action="store_true", help="report the stored entries")
    p.add_argument("--n", type=int, default=79)
    p.set_defaults(func=cmd_cache)

    p = sub.add_parser("selftest", parents=[common], help="run the acceptance checks")
    p.add_argument("--only", type=int, nargs="+", help="criterion numbers to run")
    p.set_defaults(func=cmd_selftest)
    return parser


def _replay_argv(path) -> list[str]:
    manifest = RunManifest.read(path)
    argv = list(manifest.argv)
    args = build_parser().parse_args(argv)
    current = Session(args).hashes()
    for key in ("quantum_defects", "constants"):
        if manifest.data_hashes.get(key) != current[key]:
            raise ConfigurationError(f"manifest {key} hash differs from the current data file")
    return argv


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.from_manifest:
            argv = _replay_argv(args.from_manifest)
            args = parser.parse_args(argv)
        if not args.command:
            parser.print_help()
            return EXIT_CONFIG
        args.argv = argv
        return args.func(args, Session(args))
    except (ConfigurationError, StaleCacheError, FileNotFoundError, ValueError) as exc:
        hint = " (use --rebuild-cache or --no-cache)" if isinstance(exc, StaleCacheError) else ""
        print(f"rydblock: error: {exc}{hint}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericalError, AmbiguityError, ArithmeticError) as exc:
        print(f"rydblock: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
