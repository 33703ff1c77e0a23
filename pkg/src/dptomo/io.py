"""File formats: experiment configs, histograms, probe manifests, reconstructions.

All tabular files are CSV preceded by ``# key=value`` metadata lines.
"""

from __future__ import annotations

import configparser
import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import probes, tmd


class ConfigError(ValueError):
    pass


def _floats(text):
    return tuple(float(v) for v in text.replace(",", " ").split())


def _ints(text):
    return tuple(int(v) for v in text.replace(",", " ").split())


def _fmt(values):
    return ", ".join(repr(v) for v in values)


@dataclass
class ExperimentConfig:
    detector: tmd.DetectorConfig = field(default_factory=tmd.DetectorConfig)
    alpha_max: float = 2.0
    grid: tuple = (16, 16)
    spacing: str = "linear"
    probe_events: int = 4_200_000
    exact_probes: bool = False
    mu_scale_error: float = 1.0
    mean_n: tuple = (0.11, 0.76, 1.34)
    coupling: tuple = (0.75, 0.75)
    source_events: int = 4_200_000
    source_cutoff: int = 40
    view: str = "joint"
    d: int = 8
    tolerance: float = 1e-8
    M: int = 50
    repetitions: int = 100
    seed: int = 1

    def to_parser(self):
        det = self.detector
        cp = configparser.ConfigParser()
        cp["detector"] = {
            "efficiency": repr(det.efficiency),
            "dark_count_prob": repr(det.dark_count_prob),
            "afterpulse_prob": repr(det.afterpulse_prob),
            "afterpulse_decay": repr(det.afterpulse_decay),
            "bin_probabilities_signal": _fmt(det.bin_probabilities[0]),
            "bin_probabilities_idler": _fmt(det.bin_probabilities[1]),
            "gate_detector_signal": _fmt(det.gate_detector[0]),
            "gate_detector_idler": _fmt(det.gate_detector[1]),
            "gate_time_signal": _fmt(det.gate_time[0]),
            "gate_time_idler": _fmt(det.gate_time[1]),
        }
        cp["probes"] = {
            "alpha_max": repr(self.alpha_max),
            "grid": _fmt(self.grid),
            "spacing": self.spacing,
            "events": str(self.probe_events),
            "exact": str(self.exact_probes).lower(),
            "mu_scale_error": repr(self.mu_scale_error),
        }
        cp["source"] = {
            "mean_n": _fmt(self.mean_n),
            "coupling": _fmt(self.coupling),
            "events": str(self.source_events),
            "cutoff": str(self.source_cutoff),
        }
        cp["fit"] = {
            "view": self.view,
            "d": str(self.d),
            "tolerance": repr(self.tolerance),
            "M": str(self.M),
            "repetitions": str(self.repetitions),
        }
        cp["run"] = {"seed": str(self.seed)}
        return cp

    def dumps(self):
        import io as _io

        buf = _io.StringIO()
        self.to_parser().write(buf)
        return buf.getvalue()

    def save(self, path):
        Path(path).write_text(self.dumps())

    @classmethod
    def loads(cls, text):
        cp = configparser.ConfigParser()
        try:
            cp.read_string(text)
        except configparser.Error as exc:
            raise ConfigError(str(exc)) from exc
        return cls.from_parser(cp)

    @classmethod
    def load(cls, path):
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f"config file {path} not found")
        return cls.loads(path.read_text())

    @classmethod
    def from_parser(cls, cp):
        default = cls()
        try:
            kw = {}
            if cp.has_section("detector"):
                s = cp["detector"]
                dd = default.detector
                kw["detector"] = tmd.DetectorConfig(
                    bin_probabilities=(
                        _floats(s.get("bin_probabilities_signal", _fmt(dd.bin_probabilities[0]))),
                        _floats(s.get("bin_probabilities_idler", _fmt(dd.bin_probabilities[1]))),
                    ),
                    efficiency=s.getfloat("efficiency", dd.efficiency),
                    dark_count_prob=s.getfloat("dark_count_prob", dd.dark_count_prob),
                    afterpulse_prob=s.getfloat("afterpulse_prob", dd.afterpulse_prob),
                    afterpulse_decay=s.getfloat("afterpulse_decay", dd.afterpulse_decay),
                    gate_detector=(
                        _ints(s.get("gate_detector_signal", _fmt(dd.gate_detector[0]))),
                        _ints(s.get("gate_detector_idler", _fmt(dd.gate_detector[1]))),
                    ),
                    gate_time=(
                        _ints(s.get("gate_time_signal", _fmt(dd.gate_time[0]))),
                        _ints(s.get("gate_time_idler", _fmt(dd.gate_time[1]))),
                    ),
                )
            if cp.has_section("probes"):
                s = cp["probes"]
                kw["alpha_max"] = s.getfloat("alpha_max", default.alpha_max)
                kw["grid"] = _ints(s.get("grid", _fmt(default.grid)))
                kw["spacing"] = s.get("spacing", default.spacing)
                kw["probe_events"] = s.getint("events", default.probe_events)
                kw["exact_probes"] = s.getboolean("exact", default.exact_probes)
                kw["mu_scale_error"] = s.getfloat("mu_scale_error", default.mu_scale_error)
            if cp.has_section("source"):
                s = cp["source"]
                kw["mean_n"] = _floats(s.get("mean_n", _fmt(default.mean_n)))
                kw["coupling"] = _floats(s.get("coupling", _fmt(default.coupling)))
                kw["source_events"] = s.getint("events", default.source_events)
                kw["source_cutoff"] = s.getint("cutoff", default.source_cutoff)
            if cp.has_section("fit"):
                s = cp["fit"]
                kw["view"] = s.get("view", default.view)
                kw["d"] = s.getint("d", default.d)
                kw["tolerance"] = s.getfloat("tolerance", default.tolerance)
                kw["M"] = s.getint("M", default.M)
                kw["repetitions"] = s.getint("repetitions", default.repetitions)
            if cp.has_section("run"):
                kw["seed"] = cp["run"].getint("seed", default.seed)
            cfg = cls(**kw)
        except (ValueError, TypeError) as exc:
            raise ConfigError(str(exc)) from exc
        cfg.validate()
        return cfg

    def validate(self):
        if len(self.grid) != 2 or min(self.grid) < 1:
            raise ConfigError("probe grid needs two positive sizes")
        if self.alpha_max <= 0:
            raise ConfigError("alpha_max must be positive")
        if len(self.coupling) != 2 or not all(0 <= c <= 1 for c in self.coupling):
            raise ConfigError("coupling needs two efficiencies in [0, 1]")
        if any(m < 0 for m in self.mean_n):
            raise ConfigError("mean_n must be nonnegative")
        if self.probe_events < 1 or self.source_events < 1:
            raise ConfigError("event counts must be positive")
        if self.spacing not in ("linear", "log"):
            raise ConfigError(f"unknown spacing {self.spacing!r}")


def _write_table(path, meta, header, rows):
    path = Path(path)
    with path.open("w", newline="") as fh:
        for k, v in meta.items():
            fh.write(f"# {k}={v}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _read_table(path):
    meta, lines = {}, []
    with Path(path).open() as fh:
        for line in fh:
            if line.startswith("#"):
                k, _, v = line[1:].strip().partition("=")
                meta[k.strip()] = v.strip()
            elif line.strip():
                lines.append(line)
    reader = csv.reader(lines)
    header = next(reader)
    return meta, header, list(reader)


def write_histogram(path, counts, meta=None):
    """Sparse joint histogram: rows ``pattern_index,count`` for nonzero cells."""
    counts = np.asarray(counts, dtype=np.int64)
    meta = dict(meta or {})
    meta["N"] = int(counts.sum())
    nz = np.flatnonzero(counts)
    _write_table(path, meta, ["pattern_index", "count"], zip(nz.tolist(), counts[nz].tolist()))


def read_histogram(path):
    meta, header, rows = _read_table(path)
    if header != ["pattern_index", "count"]:
        raise ValueError(f"{path}: not a histogram file")
    counts = np.zeros(tmd.N_JOINT, dtype=np.int64)
    for idx, cnt in rows:
        counts[int(idx)] += int(cnt)
    if "N" in meta and int(meta["N"]) != counts.sum():
        raise ValueError(f"{path}: counts do not add up to N")
    return counts, meta


def write_library(directory, library, config_hash=""):
    """Manifest plus one histogram file per probe."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    rows = []
    for p, freq, n in zip(library.probes, library.frequencies, library.events):
        name = f"probe_{p.id:04d}.csv"
        if n > 0:
            counts = np.rint(freq * n).astype(np.int64)
            write_histogram(directory / name, counts, {"probe_id": p.id, "config_hash": config_hash})
        else:
            # exact responses are kept as probabilities
            nz = np.flatnonzero(freq)
            _write_table(
                directory / name,
                {"probe_id": p.id, "exact": "true", "config_hash": config_hash},
                ["pattern_index", "probability"],
                ((int(i), repr(float(freq[i]))) for i in nz),
            )
        rows.append((p.id, repr(p.mu_signal), repr(p.mu_idler), int(n), name))
    _write_table(
        directory / "manifest.csv",
        {"config_hash": config_hash},
        ["probe_id", "mu_signal", "mu_idler", "N", "file"],
        rows,
    )


def read_library(manifest, detector=None):
    manifest = Path(manifest)
    if manifest.is_dir():
        manifest = manifest / "manifest.csv"
    meta, header, rows = _read_table(manifest)
    if header[:4] != ["probe_id", "mu_signal", "mu_idler", "N"]:
        raise ValueError(f"{manifest}: not a probe manifest")
    plist, freqs, events = [], [], []
    for pid, mus, mui, n, name in rows:
        plist.append(probes.CoherentProbe(int(pid), float(mus), float(mui)))
        pmeta, pheader, prow = _read_table(manifest.parent / name)
        f = np.zeros(tmd.N_JOINT)
        for idx, val in prow:
            f[int(idx)] += float(val)
        freqs.append(f / f.sum())
        events.append(int(n))
    if detector is None:
        cfg_path = manifest.parent / "config.ini"
        if not cfg_path.is_file():
            cfg_path = manifest.parent.parent / "config.ini"
        if cfg_path.is_file():
            detector = ExperimentConfig.load(cfg_path).detector
    return probes.PatternLibrary(plist, np.array(freqs), np.array(events), detector, meta)


def write_reconstruction(path, mean, std=None, meta=None):
    """Table of reconstructed probabilities: ``m,n,mean,std`` or ``n,mean,std``."""
    mean = np.asarray(mean)
    std = np.zeros_like(mean) if std is None else np.asarray(std)
    if mean.ndim == 2:
        header = ["m", "n", "mean", "std"]
        rows = [
            (m, n, repr(float(mean[m, n])), repr(float(std[m, n])))
            for m in range(mean.shape[0])
            for n in range(mean.shape[1])
        ]
    else:
        header = ["n", "mean", "std"]
        rows = [(n, repr(float(mean[n])), repr(float(std[n]))) for n in range(mean.shape[0])]
    _write_table(path, dict(meta or {}), header, rows)


def read_reconstruction(path):
    meta, header, rows = _read_table(path)
    if header == ["m", "n", "mean", "std"]:
        d = max(int(r[0]) for r in rows) + 1
        mean, std = np.zeros((d, d)), np.zeros((d, d))
        for m, n, mu, sd in rows:
            mean[int(m), int(n)], std[int(m), int(n)] = float(mu), float(sd)
    elif header == ["n", "mean", "std"]:
        d = max(int(r[0]) for r in rows) + 1
        mean, std = np.zeros(d), np.zeros(d)
        for n, mu, sd in rows:
            mean[int(n)], std[int(n)] = float(mu), float(sd)
    else:
        raise ValueError(f"{path}: not a reconstruction file")
    return mean, std, meta


def write_plot_data(path, columns, meta=None):
    """Bar-chart data: one row per Fock index, columns given as name -> array."""
    names = list(columns)
    first = np.asarray(columns[names[0]])
    if first.ndim == 2:
        d = first.shape[0]
        rows = [
            [m, n] + [repr(float(np.asarray(columns[k])[m, n])) for k in names]
            for m in range(d)
            for n in range(d)
        ]
        header = ["m", "n"] + names
    else:
        rows = [[n] + [repr(float(np.asarray(columns[k])[n])) for k in names] for n in range(first.shape[0])]
        header = ["n"] + names
    _write_table(path, dict(meta or {}), header, rows)
