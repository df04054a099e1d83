"""Batch front-end: constants, verification suite, simulation, replay.

Exit codes: 0 success, 1 computational failure or failed verification,
2 usage or configuration error.  Every run writes a manifest with the
resolved parameters and output digests; `replay` re-executes a manifest
and compares digests.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .params import ModelParams
from .report import ConstantsReport, RunManifest, sha256_file
from .simulate import SimConfig, SimulationError, config_from_dict, run
from .stack import ResolventError


def _parse_modes(text: str):
    """'0,0,1:0;0,1,0:1' -> (((0,0,1),0), ((0,1,0),1))"""
    out = []
    for part in text.split(";"):
        ks, a = part.split(":")
        out.append((tuple(int(c) for c in ks.split(",")), int(a)))
    return tuple(out)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="llnslab",
        description="effective-diffusivity laboratory for the truncated "
                    "fluctuating Navier-Stokes system")
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--out", default=".", help="output directory")
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--threads", type=int, default=1,
                        help="declared partition; part of the determinism key")

    co = sub.add_parser("coeff", help="compute diffusivity constants")
    common(co)
    co.add_argument("--d", type=int, choices=(2, 3), required=True)
    co.add_argument("--lambda", dest="lam", type=float, default=1.0)
    co.add_argument("--f1", action="store_true",
                    help="first d=3 coefficient by all three routes")
    co.add_argument("--f2", action="store_true",
                    help="second d=3 coefficient by Monte Carlo")
    co.add_argument("--mc-samples", type=float, default=1e7)
    co.add_argument("--N", type=float, default=None,
                    help="cutoff for the resolvent entry")
    co.add_argument("--n", type=int, default=3,
                    help="chaos truncation for the resolvent entry")
    co.add_argument("--k", default="0,0,1", help="fiber momentum, e.g. 0,0,1")
    co.add_argument("--resolvent", action="store_true",
                    help="include the truncated-resolvent diffusivity")

    ve = sub.add_parser("verify", help="run the invariant suite")
    common(ve)
    ve.add_argument("--only", default="",
                    help="comma list of checks (default: all)")
    ve.add_argument("--N", default="",
                    help="comma list of cutoffs for replacement/decoupling")
    ve.add_argument("--d", type=int, default=None)
    ve.add_argument("--mc-samples", type=float, default=2e6)

    si = sub.add_parser("simulate", help="integrate the truncated dynamics")
    common(si)
    si.add_argument("--config", default=None,
                    help="JSON config document (overrides flags)")
    si.add_argument("--d", type=int, choices=(2, 3))
    si.add_argument("--lambda", dest="lam", type=float, default=0.0)
    si.add_argument("--N", type=float)
    si.add_argument("--T", type=float)
    si.add_argument("--dt", type=float, default=None)
    si.add_argument("--ensemble", type=int, default=16)
    si.add_argument("--stride", type=int, default=10)
    si.add_argument("--modes", default="",
                    help="estimator modes 'k1,k2,k3:alpha;...'")
    si.add_argument("--track", action="store_true",
                    help="record mode trajectories (autocorrelation input)")
    si.add_argument("--estimate", default="",
                    help="comma list: green-kubo, autocorr")

    re = sub.add_parser("replay", help="re-run a manifest and compare digests")
    re.add_argument("manifest")
    re.add_argument("--out", default=None,
                    help="directory for the replayed outputs "
                         "(default: '<manifest dir>/replay')")
    return ap


# ---------------------------------------------------------------------------
# coeff
# ---------------------------------------------------------------------------

def cmd_coeff(args) -> int:
    from . import diffusivity as dv
    t0 = time.time()
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    rep = ConstantsReport()
    lam = args.lam
    if args.d == 2:
        D = dv.d2_effective_D(lam)
        rep.add("effective_D_d2", D, "closed-form", tol=1e-14,
                reference="sqrt(lam^2/(8 pi) + 1) - 1")
        from .replacement import G
        rep.add("effective_D_d2_profile_chain", float(G(2 * lam * lam)),
                "closed-form", tol=1e-14,
                reference="G(2 lam^2), the dressed-profile route")
        rep.add("replacement_D_d2", math.sqrt(2 * (1 / (16 * math.pi))
                                              * lam * lam + 1) - 1,
                "closed-form", tol=1e-14,
                reference="sqrt(2 c lam^2 + 1) - 1 with c = 1/(16 pi)")
    else:
        rep.add("nu_eff_minus_1", dv.nu_eff(lam) - 1.0, "closed-form",
                tol=1e-14, reference="sqrt(1 + lam^2/pi) - 1")
        rep.add("replacement_D_d3", dv.D_rep(dv.F1_CLOSED, lam),
                "closed-form", tol=1e-14,
                reference="positive root of x(1+x) = c lam^2, c = 7/(30 pi)")
        if args.f1:
            rep.add("f1_closed", dv.f1_closed(), "closed-form", tol=1e-15,
                    reference="7/(30 pi)")
            v, err = dv.f1_quadrature()
            rep.add("f1_quadrature", v, "quadrature", tol=max(err, 1e-12),
                    reference="spherical integral of the one-step chain")
            a = dv.f1_lattice(24.5)
            b = dv.f1_lattice(48.5)
            rep.add("f1_lattice_extrapolated", dv.richardson2(a, 24.5, b, 48.5),
                    "lattice", tol=5e-3 * dv.F1_CLOSED,
                    reference="cutoff sums at 24.5/48.5, 1/N extrapolation",
                    raw={"24.5": a, "48.5": b})
        if args.f2:
            mc = dv.f2_monte_carlo(samples=int(args.mc_samples), seed=args.seed
                                   or 20240)
            rep.add("f2_magnitude_mc", mc.value, "monte-carlo",
                    stderr=mc.stderr,
                    reference="importance-sampled limit integral, "
                              "Euclidean cutoff",
                    accepted=mc.accepted, proposals=mc.proposals)
            rep.add("f2_reported_reference", dv.F2_REPORTED, "closed-form",
                    tol=0.02 * dv.F2_REPORTED,
                    reference="reference value 8.588/(2 (2 pi)^4); not "
                              "reproduced by this laboratory, see README")
        if args.resolvent or args.N is not None:
            N = args.N if args.N is not None else 4.5
            p = ModelParams(3, lam, N, args.n)
            k = tuple(int(c) for c in args.k.split(","))
            D = dv.D_truncated(p, k)
            rep.add(f"resolvent_D_N{N}_n{args.n}", D, "resolvent", tol=1e-8 * D
                    if D else 1e-12,
                    reference="truncated-resolvent quadratic form",
                    lam=lam, N=N, n=args.n)
    rep.to_json(outdir / "constants.json")
    (outdir / "constants.txt").write_text(rep.to_table())
    man = RunManifest.begin("coeff", _resolved(args), args.seed, args.threads,
                            __version__)
    man.finish(outdir, ["constants.json", "constants.txt"], t0)
    man.write(outdir / "manifest.json")
    sys.stdout.write(rep.to_table())
    return 0


def _resolved(args) -> dict:
    return {k: v for k, v in vars(args).items() if k != "command"}


# ---------------------------------------------------------------------------
# verify
# ---------------------------------------------------------------------------

def cmd_verify(args) -> int:
    from .checks import run_checks
    t0 = time.time()
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    only = [s for s in args.only.split(",") if s] or None
    overrides = {}
    if args.N:
        Ns = tuple(float(x) for x in args.N.split(","))
        overrides["replacement"] = {"N_values": Ns}
        overrides["decoupling"] = {"N_values": Ns}
    if args.mc_samples:
        overrides["corollary"] = {"mc_samples": int(args.mc_samples)}
    try:
        results = run_checks(only, overrides)
    except KeyError as exc:
        sys.stderr.write(f"{exc}\n")
        return 2
    doc = {"kind": "verify",
           "results": [{"name": r.name, "passed": r.passed, "detail": r.detail}
                       for r in results]}
    (outdir / "verify.json").write_text(json.dumps(doc, indent=2,
                                                   sort_keys=True) + "\n")
    man = RunManifest.begin("verify", _resolved(args), args.seed, args.threads,
                            __version__)
    man.finish(outdir, ["verify.json"], t0)
    man.write(outdir / "manifest.json")
    failed = [r for r in results if not r.passed]
    for r in results:
        sys.stdout.write(str(r) + "\n")
    if failed:
        sys.stderr.write(f"failed checks: {[r.name for r in failed]}\n")
        return 1
    return 0


# ---------------------------------------------------------------------------
# simulate
# ---------------------------------------------------------------------------

def cmd_simulate(args) -> int:
    if args.config:
        doc = json.loads(Path(args.config).read_text())
        try:
            cfg = config_from_dict(doc)
        except (KeyError, TypeError, ValueError) as exc:
            sys.stderr.write(f"config error: {exc}\n")
            return 2
    else:
        missing = [name for name, val in (("--d", args.d), ("--N", args.N),
                                          ("--T", args.T)) if val is None]
        if missing:
            sys.stderr.write(f"missing required flags: {missing}\n")
            return 2
        cfg = SimConfig(d=args.d, lam=args.lam, N=args.N, T=args.T,
                        dt=args.dt, ensemble=args.ensemble, seed=args.seed,
                        record_stride=args.stride,
                        estimator_modes=_parse_modes(args.modes)
                        if args.modes else (),
                        track_all_modes=args.track, threads=args.threads)
    wanted = [s for s in args.estimate.split(",") if s]
    bad = [w for w in wanted if w not in ("green-kubo", "autocorr")]
    if bad:
        sys.stderr.write(f"unknown estimators {bad}\n")
        return 2
    return _run_simulate(cfg, wanted, Path(args.out))


def _run_simulate(cfg: SimConfig, wanted, outdir: Path) -> int:
    from .estimators import EstimatorError, green_kubo, mode_autocorr
    t0 = time.time()
    outdir.mkdir(parents=True, exist_ok=True)
    try:
        traj = run(cfg)
    except SimulationError as exc:
        sys.stderr.write(f"simulation aborted: {exc}\n")
        return 1
    traj.write_csv(outdir / "trajectory.csv")
    est_doc = {}
    try:
        for what in wanted:
            if what == "green-kubo":
                for k, a in cfg.estimator_modes:
                    est = green_kubo(traj, k, a)
                    est_doc[f"green_kubo:{','.join(map(str, k))}:{a}"] = {
                        "value": est.value, "stderr": est.stderr,
                        "method": "simulation", **est.detail}
            elif what == "autocorr":
                for k, _ in cfg.estimator_modes or ():
                    est = mode_autocorr(traj, k)
                    est_doc[f"autocorr:{','.join(map(str, k))}"] = {
                        "value": est.value, "stderr": est.stderr,
                        "method": "simulation", **{k2: v for k2, v in
                                                   est.detail.items()
                                                   if k2 != "mode"}}
    except EstimatorError as exc:
        sys.stderr.write(f"estimator failure: {exc}\n")
        return 1
    (outdir / "estimators.json").write_text(
        json.dumps({"kind": "estimators", "entries": est_doc}, indent=2,
                   sort_keys=True, default=float) + "\n")
    man = RunManifest.begin("simulate",
                            {"config": _sim_params(cfg), "estimate": wanted},
                            cfg.seed, cfg.threads, __version__)
    man.finish(outdir, ["trajectory.csv", "estimators.json"], t0)
    man.write(outdir / "manifest.json")
    return 0


def _sim_params(cfg: SimConfig) -> dict:
    doc = {f: getattr(cfg, f) for f in cfg.__dataclass_fields__}
    doc["estimator_modes"] = [[list(k), a] for k, a in cfg.estimator_modes]
    return doc


# ---------------------------------------------------------------------------
# replay
# ---------------------------------------------------------------------------

def cmd_replay(args) -> int:
    man = RunManifest.load(args.manifest)
    base = Path(args.manifest).parent
    outdir = Path(args.out) if args.out else base / "replay"
    outdir.mkdir(parents=True, exist_ok=True)
    if man.command == "simulate":
        doc = dict(man.params["config"])
        doc["estimator_modes"] = tuple(
            (tuple(k), a) for k, a in doc.get("estimator_modes", ()))
        rc = _run_simulate(config_from_dict(doc), man.params.get("estimate", []),
                           outdir)
        if rc:
            return rc
    elif man.command in ("coeff", "verify"):
        ns_doc = dict(man.params)
        ns_doc["out"] = str(outdir)
        rc = (cmd_coeff if man.command == "coeff"
              else cmd_verify)(argparse.Namespace(**ns_doc))
        if rc and man.command == "coeff":
            return rc
    else:
        sys.stderr.write(f"cannot replay command {man.command!r}\n")
        return 2
    produced = {name: sha256_file(outdir / name)
                for name in man.outputs if (outdir / name).exists()}
    ok = True
    for name, dig in man.outputs.items():
        if name not in produced:
            status = "MISSING"
        elif produced[name] == dig:
            status = "MATCH"
        else:
            status = "DIFFERS"
        ok &= status == "MATCH"
        sys.stdout.write(f"{name}: {status}\n")
    return 0 if ok else 1


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "coeff":
            return cmd_coeff(args)
        if args.command == "verify":
            return cmd_verify(args)
        if args.command == "simulate":
            return cmd_simulate(args)
        if args.command == "replay":
            return cmd_replay(args)
    except (ResolventError, SimulationError) as exc:
        sys.stderr.write(f"computation failed: {exc}\n")
        return 1
    except (ValueError, KeyError) as exc:
        sys.stderr.write(f"invalid input: {exc}\n")
        return 2
    return 2


if __name__ == "__main__":
    sys.exit(main())
