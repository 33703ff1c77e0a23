"""Command-line driver: simulate, calibrate, reconstruct, report.

Exit codes: 0 success, 1 bad configuration, 2 unreadable or unwritable
files, 3 every solver repetition failed.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import fit, fock, herald, io, probes, stats, tmd

EXIT_CONFIG = 1
EXIT_IO = 2
EXIT_SOLVER = 3

log = logging.getLogger("dptomo")


class _Failure(Exception):
    def __init__(self, code, message):
        super().__init__(message)
        self.code = code


def cmd_simulate(config_path, out_dir):
    """Probe library plus one PDC data histogram per configured mean photon number."""
    try:
        cfg = io.ExperimentConfig.load(config_path)
    except io.ConfigError as exc:
        raise _Failure(EXIT_CONFIG, f"config: {exc}") from exc
    out = Path(out_dir)
    det = cfg.detector
    chash = det.config_hash()
    lib_seed, src_seed = np.random.SeedSequence(cfg.seed).spawn(2)
    grid = probes.generate_probe_grid(cfg.alpha_max, cfg.grid, cfg.spacing)
    log.info("simulating %d probes", len(grid))
    library = probes.simulate_library(
        grid,
        det,
        cfg.probe_events,
        lib_seed,
        exact=cfg.exact_probes,
        mu_scale_error=cfg.mu_scale_error,
    )
    try:
        out.mkdir(parents=True, exist_ok=True)
        cfg.save(out / "config.ini")
        io.write_library(out / "probes", library, chash)
        (out / "data").mkdir(exist_ok=True)
        for k, (mean_n, ss) in enumerate(zip(cfg.mean_n, src_seed.spawn(len(cfg.mean_n))), 1):
            P = fock.apply_loss(fock.pdc_distribution(mean_n, cfg.source_cutoff), cfg.coupling)
            counts = tmd.sample_patterns(P, det, cfg.source_events, ss)
            meta = {
                "source": "pdc",
                "mean_n": repr(mean_n),
                "coupling_signal": repr(cfg.coupling[0]),
                "coupling_idler": repr(cfg.coupling[1]),
                "config_hash": chash,
            }
            io.write_histogram(out / "data" / f"pdc_{k}.csv", counts, meta)
    except OSError as exc:
        raise _Failure(EXIT_IO, f"cannot write {out}: {exc}") from exc
    return 0


def _load_library(path):
    try:
        return io.read_library(path)
    except (OSError, ValueError, StopIteration) as exc:
        raise _Failure(EXIT_IO, f"cannot read library {path}: {exc}") from exc


def cmd_calibrate(library_path, stream=None):
    stream = stream or sys.stdout
    library = _load_library(library_path)
    try:
        eta, std = probes.estimate_efficiency(library)
    except probes.InsufficientDataError as exc:
        raise _Failure(EXIT_CONFIG, str(exc)) from exc
    print(f"eta = {eta:.4f} +/- {std:.4f}", file=stream)
    return 0


def _source_meta(meta):
    """Source parameters stored with a data histogram, if any."""
    if "mean_n" not in meta:
        return None
    return (
        float(meta["mean_n"]),
        (float(meta.get("coupling_signal", 1.0)), float(meta.get("coupling_idler", 1.0))),
    )


def theory_for_view(view, mean_n, coupling, det, d, cutoff=60):
    """Predicted reconstruction for a lossy thermal twin-beam source, truncated to ``d``."""
    if view.startswith("heralded-"):
        return herald.theory_heralded_idler(mean_n, view.split("-", 1)[1], det, d, coupling)
    P = fock.apply_loss(fock.pdc_distribution(mean_n, cutoff), coupling)
    mode = fit._fock_mode(view)
    if mode == "joint":
        return P[:d, :d]
    ps, pi = fock.marginals(P)
    return (ps if mode == "signal" else pi)[:d]


def _single_mode(P, view):
    """Single-mode distribution used for summary numbers (signal marginal for joint)."""
    return fock.marginals(P)[0] if P.ndim == 2 else P


def cmd_reconstruct(data_path, library_path, out_path, view="joint", d=None, M=50, reps=100, seed=0):
    library = _load_library(library_path)
    try:
        counts, meta = io.read_histogram(data_path)
    except (OSError, ValueError, StopIteration) as exc:
        raise _Failure(EXIT_IO, f"cannot read data {data_path}: {exc}") from exc
    det = library.config or tmd.DetectorConfig()
    if view not in fit.VIEWS:
        raise _Failure(EXIT_CONFIG, f"unknown view {view!r}")
    d = d or fit.default_cutoff(view)
    try:
        problem = fit.assemble(library, counts, view, d, det)
        M = min(M, problem.n_probes)
        ens = stats.bootstrap_reconstruct(library, counts, M, reps, view, d, seed, det, problem=problem)
    except fit.InfeasibleProblemError as exc:
        raise _Failure(EXIT_SOLVER, str(exc)) from exc
    except (ValueError, probes.InsufficientDataError) as exc:
        raise _Failure(EXIT_CONFIG, str(exc)) from exc

    w0 = ens.statistic(lambda P: fock.wigner_at_origin(_single_mode(P, view)))
    nbar = ens.statistic(lambda P: fock.mean_photon(_single_mode(P, view)))
    out_meta = {
        "view": view,
        "d": d,
        "M": M,
        "repetitions": reps,
        "members": len(ens.members),
        "seed": seed,
        "data": Path(data_path).name,
        "config_hash": det.config_hash(),
        "n_mean": repr(nbar[0]),
        "n_std": repr(nbar[1]),
        "w0_mean": repr(w0[0]),
        "w0_std": repr(w0[1]),
    }
    for key in ("mean_n", "coupling_signal", "coupling_idler"):
        if key in meta:
            out_meta[key] = meta[key]
    mean, std = ens.mean, ens.std
    columns = {"reconstructed": mean, "error": std}
    src = _source_meta(meta)
    if src is not None:
        columns["theory"] = theory_for_view(view, src[0], src[1], det, d)
    if mean.ndim == 1 and not view.startswith("heralded-"):
        # Bose-Einstein curve with the reconstruction's mean photon number
        columns["bose_einstein"] = fock.thermal(fock.mean_photon(mean), d)
    out = Path(out_path)
    try:
        out.parent.mkdir(parents=True, exist_ok=True)
        io.write_reconstruction(out, mean, std, out_meta)
        io.write_plot_data(out.with_name(out.stem + "_plot.csv"), columns, out_meta)
    except OSError as exc:
        raise _Failure(EXIT_IO, f"cannot write {out}: {exc}") from exc
    return 0


def _report_inputs(paths):
    files = []
    for p in map(Path, paths):
        if p.is_dir():
            files += sorted(f for f in p.glob("*.csv") if not f.stem.endswith("_plot"))
        else:
            files.append(p)
    return files


def cmd_report(paths, stream=None, detector=None):
    stream = stream or sys.stdout
    files = _report_inputs(paths)
    if not files:
        raise _Failure(EXIT_IO, "no reconstruction files found")
    det = detector or tmd.DetectorConfig()
    rows = []
    for f in files:
        try:
            mean, std, meta = io.read_reconstruction(f)
        except (OSError, ValueError, StopIteration) as exc:
            raise _Failure(EXIT_IO, f"cannot read {f}: {exc}") from exc
        view = meta.get("view", "joint" if mean.ndim == 2 else "marginal-idler")
        nbar = f"{float(meta['n_mean']):.3f} +/- {float(meta['n_std']):.3f}"
        w0 = f"{float(meta['w0_mean']):+.3f} +/- {float(meta['w0_std']):.3f}"
        src_n = th_n = th_w0 = fid = "-"
        src = _source_meta(meta)
        if src is not None:
            mean_n, coupling = src
            theory = theory_for_view(view, mean_n, coupling, det, mean.shape[0])
            th_mode = fock.normalized(_single_mode(theory, view))
            th_n = f"{fock.mean_photon(th_mode):.3f}"
            th_w0 = f"{fock.wigner_at_origin(th_mode):+.3f}"
            fid = f"{fock.fidelity(fock.normalized(mean), fock.normalized(theory)):.4f}"
            if not view.startswith("heralded-"):
                eta = coupling[1] if fit._fock_mode(view) == "idler" else coupling[0]
                src_n = f"{float(meta['n_mean']) / eta:.3f} ({mean_n:g})"
        rows.append((f.name, view, meta.get("M", "-"), nbar, th_n, src_n, w0, th_w0, fid))
    header = ("file", "view", "M", "<n>", "<n> theory", "<n> source (set)", "W(0)", "W(0) theory", "fidelity")
    widths = [max(len(str(r[k])) for r in rows + [header]) for k in range(len(header))]
    for r in [header] + rows:
        print("  ".join(str(v).ljust(w) for v, w in zip(r, widths)).rstrip(), file=stream)
    return 0


def build_parser():
    parser = argparse.ArgumentParser(prog="dptomo", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="simulate a probe library and PDC data")
    p.add_argument("config")
    p.add_argument("out_dir")

    p = sub.add_parser("calibrate", help="estimate detector efficiency from a library")
    p.add_argument("library")

    p = sub.add_parser("reconstruct", help="bootstrap data-pattern reconstruction")
    p.add_argument("data")
    p.add_argument("library")
    p.add_argument("-o", "--out", required=True)
    p.add_argument("--view", default="joint", choices=fit.VIEWS)
    p.add_argument("--d", type=int, default=None, help="cutoff (default 8 joint, 12 single-mode)")
    p.add_argument("--M", type=int, default=50)
    p.add_argument("--reps", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("report", help="summary table for reconstruction files")
    p.add_argument("paths", nargs="+")
    p.add_argument("--config", help="config.ini with the detector used for theory curves")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        if args.command == "simulate":
            return cmd_simulate(args.config, args.out_dir)
        if args.command == "calibrate":
            return cmd_calibrate(args.library)
        if args.command == "reconstruct":
            return cmd_reconstruct(args.data, args.library, args.out, args.view, args.d, args.M, args.reps, args.seed)
        det = None
        if args.config:
            try:
                det = io.ExperimentConfig.load(args.config).detector
            except io.ConfigError as exc:
                raise _Failure(EXIT_CONFIG, f"config: {exc}") from exc
        return cmd_report(args.paths, detector=det)
    except _Failure as exc:
        print(f"dptomo: {exc}", file=sys.stderr)
        return exc.code


if __name__ == "__main__":
    sys.exit(main())
