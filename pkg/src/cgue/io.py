"""Flat-file persistence: spectra CSV, constraint sets, density exports, manifests."""

from __future__ import annotations

import csv
import datetime as _dt
import hashlib
import json
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ._version import __version__
from .basis import (ConstraintSet, band_complement_constraints, diagonal_p_constraints,
                    explicit_constraints, random_traceless_constraints)
from .ensembles import EnsembleSpec
from .errors import InvalidArgumentError
from .hermitian import read_matrices, write_matrix

OUT_ENV = "CGUE_OUT"
DEFAULT_OUT = "cgue-out"


def _jsonable(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, complex):
        return {"re": obj.real, "im": obj.imag}
    if isinstance(obj, Path):
        return str(obj)
    if isinstance(obj, tuple):
        return list(obj)
    raise TypeError(f"not JSON serialisable: {type(obj).__name__}")


def dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2, default=_jsonable) + "\n"


def write_json(path, obj) -> Path:
    path = Path(path)
    path.write_text(dumps(obj))
    return path


def read_json(path):
    with open(path) as fh:
        return json.load(fh)


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def output_root(flag=None, config=None) -> Path:
    """``--out`` beats the config's ``out`` beats ``$CGUE_OUT`` beats ``./cgue-out``."""
    for cand in (flag, (config or {}).get("out"), os.environ.get(OUT_ENV)):
        if cand:
            return Path(cand)
    return Path(DEFAULT_OUT)


# ---------------------------------------------------------------------------
# spectra
# ---------------------------------------------------------------------------

def write_spectra_csv(path, samples) -> Path:
    """One row per sample: index, then ascending eigenvalues as round-trip floats."""
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        for s in samples:
            idx = getattr(s, "sample_index", None)
            ev = getattr(s, "eigenvalues", s)
            if idx is None:
                idx, ev = s
            w.writerow([int(idx), *(repr(float(v)) for v in np.sort(ev))])
    return path


def read_spectra_csv(path) -> list[tuple[int, np.ndarray]]:
    rows = []
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row:
                continue
            try:
                idx = int(row[0])
                ev = np.array([float(v) for v in row[1:]])
            except ValueError as exc:
                raise InvalidArgumentError(f"{path}:{lineno}: {exc}") from exc
            if len(ev) == 0:
                raise InvalidArgumentError(f"{path}:{lineno}: row has no eigenvalues")
            if np.any(np.diff(ev) < 0):
                raise InvalidArgumentError(f"{path}:{lineno}: eigenvalues not ascending")
            rows.append((idx, ev))
    if not rows:
        raise InvalidArgumentError(f"{path}: no spectra")
    return rows


# ---------------------------------------------------------------------------
# constraint sets
# ---------------------------------------------------------------------------

def constraint_record(cs: ConstraintSet) -> dict:
    rec = {"dim": cs.dim, "n_q": cs.n_q, "seed": cs.seed, "generator": cs.generator}
    rec.update({k: v for k, v in cs.params.items() if isinstance(v, (int, float, str, bool))})
    return rec


def write_constraints(path, cs: ConstraintSet) -> list[Path]:
    """Manifest record at ``path``; explicit sets add ``path.bin`` with the Q matrices."""
    path = Path(path)
    rec = constraint_record(cs)
    written = []
    if cs.generator == "explicit":
        bin_path = path.with_suffix(".bin")
        with open(bin_path, "wb") as fh:
            for mat in cs.q_matrices():
                write_matrix(fh, mat)
        rec["matrices"] = bin_path.name
        written.append(bin_path)
    written.insert(0, write_json(path, rec))
    return written


def constraints_from_config(cfg: dict, base_dir=None) -> ConstraintSet:
    gen = cfg.get("generator", "random-traceless")
    dim = cfg.get("dim")
    if gen == "random-traceless":
        return random_traceless_constraints(int(dim), int(cfg["n_q"]), int(cfg.get("seed", 0)))
    if gen == "diagonal-p":
        return diagonal_p_constraints(int(dim))
    if gen == "band-complement":
        return band_complement_constraints(int(dim), int(cfg.get("bandwidth", cfg.get("b"))))
    if gen == "explicit":
        if "diagonals" in cfg:
            mats = [np.diag(np.asarray(d, dtype=float)) for d in cfg["diagonals"]]
            return explicit_constraints([m / np.linalg.norm(m) for m in mats])
        src = Path(cfg["matrices"])
        if base_dir is not None and not src.is_absolute():
            src = Path(base_dir) / src
        with open(src, "rb") as fh:
            mats = [m.entries for m in read_matrices(fh)]
        if not mats:
            raise InvalidArgumentError(f"{src}: no matrices")
        return explicit_constraints(mats)
    raise InvalidArgumentError(f"unknown constraint generator {gen!r}")


def read_constraints(path) -> ConstraintSet:
    path = Path(path)
    return constraints_from_config(read_json(path), base_dir=path.parent)


def spec_from_config(cfg: dict, seed: int | None = None) -> EnsembleSpec:
    ens = dict(cfg.get("ensemble", cfg))
    kind = ens.get("kind", "gue")
    cons = None
    if "constraints" in ens or "constraints" in cfg:
        c = dict(ens.get("constraints", cfg.get("constraints")))
        c.setdefault("dim", ens.get("dim"))
        cons = constraints_from_config(c)
    if seed is None:
        seed = cfg.get("seed", ens.get("seed"))
    if seed is None:
        raise InvalidArgumentError("a seed is required")
    return EnsembleSpec(kind=kind, dim=ens.get("dim"), lam=float(ens.get("lambda", 1.0)),
                        constraints=cons, epsilon=float(ens.get("epsilon", 0.0)),
                        bandwidth=ens.get("bandwidth"), l=ens.get("l"), m=ens.get("m"),
                        k=ens.get("k"), seed=int(seed))


# ---------------------------------------------------------------------------
# density exports
# ---------------------------------------------------------------------------

def write_density(prefix, dm, extra: dict | None = None) -> list[Path]:
    prefix = Path(prefix)
    csv_path = prefix.with_suffix(".csv")
    with open(csv_path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["eps", "rho"])
        for e, r in zip(dm.grid, dm.rho):
            w.writerow([repr(float(e)), repr(float(r))])
    meta = dm.to_dict()
    if extra:
        meta.update(extra)
    return [csv_path, write_json(prefix.with_suffix(".json"), meta)]


def read_density_csv(path) -> tuple[np.ndarray, np.ndarray]:
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return data[:, 0], data[:, 1]


# ---------------------------------------------------------------------------
# plots
# ---------------------------------------------------------------------------

def write_report_svg(report, path) -> Path:
    """Static NNSD and number-variance panels; byte-stable for identical input."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    from .stats import wigner_surmise_pdf

    with matplotlib.rc_context({"svg.hashsalt": "cgue", "svg.fonttype": "none"}):
        fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9, 3.6))
        nn = report.nnsd
        mid = 0.5 * (nn.edges[1:] + nn.edges[:-1])
        ax1.bar(mid, nn.density, width=np.diff(nn.edges), alpha=0.5, label="data")
        s = np.linspace(0, nn.edges[-1], 200)
        ax1.plot(s, wigner_surmise_pdf(s), label="Wigner surmise")
        ax1.plot(s, np.exp(-s), "--", label="Poisson")
        ax1.set_xlabel("s")
        ax1.set_ylabel("p(s)")
        ax1.legend()
        c = report.sigma2
        ax2.errorbar(c.L, c.value, yerr=c.stderr, fmt="o", ms=3, label="data")
        ax2.plot(c.L, c.L, "--", label="Poisson")
        ax2.set_xlabel("L")
        ax2.set_ylabel("number variance")
        ax2.legend()
        fig.tight_layout()
        fig.savefig(path, format="svg", metadata={"Date": None})
        plt.close(fig)
    return Path(path)


# ---------------------------------------------------------------------------
# manifests
# ---------------------------------------------------------------------------

@dataclass
class RunManifest:
    command: str
    config: dict
    code_version: str = __version__
    created: str = field(default_factory=lambda: _dt.datetime.now(_dt.timezone.utc).isoformat())
    files: dict = field(default_factory=dict)

    def add(self, *paths) -> None:
        for p in paths:
            p = Path(p)
            self.files[p.name] = sha256_file(p)

    def content_digest(self) -> str:
        """Hash over data-file hashes only; timestamps do not enter."""
        blob = json.dumps(sorted(self.files.items())).encode()
        return hashlib.sha256(blob).hexdigest()

    def write(self, out_dir, name: str = "manifest.json") -> Path:
        rec = {"command": self.command, "config": self.config, "code_version": self.code_version,
               "created": self.created, "files": dict(sorted(self.files.items())),
               "content_digest": self.content_digest()}
        return write_json(Path(out_dir) / name, rec)
