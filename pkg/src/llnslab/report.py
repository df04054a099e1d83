"""Machine-readable result reports and reproducibility manifests.

Every CLI run emits a manifest carrying the fully resolved parameter set,
the seed and declared partition, the code version, wall-clock data and a
digest of every output file; replaying a manifest must reproduce the
deterministic outputs bit for bit.  Numeric values are serialised with
shortest round-trip decimals, so files parse back losslessly.
"""

from __future__ import annotations

import hashlib
import json
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Optional

METHODS = ("closed-form", "quadrature", "monte-carlo", "lattice",
           "resolvent", "simulation")


@dataclass
class ConstantsReport:
    """Named scalar results with method, uncertainty and provenance."""

    entries: Dict[str, dict] = field(default_factory=dict)

    def add(self, name: str, value: float, method: str,
            stderr: Optional[float] = None, tol: Optional[float] = None,
            reference: str = "", **extra):
        if method not in METHODS:
            raise ValueError(f"unknown method {method!r}")
        if stderr is None and tol is None:
            raise ValueError("every entry carries an uncertainty: "
                             "give stderr or tol")
        row = {"value": float(value), "method": method, "reference": reference}
        if stderr is not None:
            row["stderr"] = float(stderr)
        if tol is not None:
            row["tol"] = float(tol)
        row.update(extra)
        self.entries[name] = row

    def to_json(self, path):
        payload = {"kind": "constants", "entries": self.entries}
        Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True,
                                         default=_js) + "\n")
        return path

    def to_table(self) -> str:
        width = max((len(n) for n in self.entries), default=4)
        lines = [f"{'name':<{width}}  {'value':>18}  {'uncert':>12}  method"]
        for name in sorted(self.entries):
            row = self.entries[name]
            unc = row.get("stderr", row.get("tol", float("nan")))
            lines.append(f"{name:<{width}}  {row['value']:>18.12g}  "
                         f"{unc:>12.3g}  {row['method']}")
        return "\n".join(lines) + "\n"


def _js(x):
    try:
        return float(x)
    except Exception:
        return str(x)


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for blob in iter(lambda: fh.read(1 << 20), b""):
            h.update(blob)
    return "sha256:" + h.hexdigest()


@dataclass
class RunManifest:
    command: str
    params: dict
    seed: int
    threads: int
    version: str
    started: str = ""
    elapsed_s: float = 0.0
    outputs: Dict[str, str] = field(default_factory=dict)

    @classmethod
    def begin(cls, command: str, params: dict, seed: int, threads: int,
              version: str) -> "RunManifest":
        return cls(command, params, seed, threads, version,
                   started=time.strftime("%Y-%m-%dT%H:%M:%S"))

    def finish(self, outdir, filenames, t0: float):
        self.elapsed_s = time.time() - t0
        outdir = Path(outdir)
        for name in filenames:
            self.outputs[name] = sha256_file(outdir / name)
        return self

    def write(self, path):
        Path(path).write_text(json.dumps(self.__dict__, indent=2,
                                         sort_keys=True, default=_js) + "\n")
        return path

    @classmethod
    def load(cls, path) -> "RunManifest":
        doc = json.loads(Path(path).read_text())
        return cls(**doc)
