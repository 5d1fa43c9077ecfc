"""Command-line entry point.

    heavytail <subcommand> [--config JSON] [--seed S] [--jobs J] [--out-dir DIR] [--bins B] ...

Every run writes its data files plus manifest-<hash>.json into --out-dir.
The hash covers the subcommand, the resolved configuration, the seed and
the library versions, so identical invocations produce byte-identical data
files.  Exit codes: 2 for configuration errors, 1 for a failed
verification, 0 otherwise.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import platform
import sys
import time
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from pathlib import Path

import networkx
import numpy as np
import scipy

from . import __version__


class ConfigError(ValueError):
    pass


@dataclass
class RunManifest:
    subcommand: str
    config: dict
    seed: int
    versions: dict
    outputs: list = field(default_factory=list)
    wall_clock: float = 0.0

    @property
    def hash(self) -> str:
        core = {"subcommand": self.subcommand, "config": self.config, "seed": self.seed,
                "versions": self.versions}
        blob = json.dumps(core, sort_keys=True, default=str).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    def to_json(self) -> str:
        return json.dumps(dict(asdict(self), hash=self.hash), sort_keys=True, indent=1, default=str)


def versions() -> dict:
    return {"heavytail": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
            "networkx": networkx.__version__, "python": platform.python_version()}


class _Writer:
    def __init__(self, out_dir: Path, manifest: RunManifest):
        self.out_dir = out_dir
        self.manifest = manifest
        out_dir.mkdir(parents=True, exist_ok=True)

    def csv(self, name: str, body: str) -> Path:
        return self._write(name, f"# manifest {self.manifest.hash}\n{body}")

    def json(self, name: str, obj) -> Path:
        obj = dict(obj, manifest=self.manifest.hash)
        return self._write(name, json.dumps(obj, sort_keys=True, indent=1, default=_json_default) + "\n")

    def _write(self, name: str, text: str) -> Path:
        path = self.out_dir / name
        path.write_text(text)
        self.manifest.outputs.append(str(path))
        return path


def _json_default(x):
    if isinstance(x, Fraction):
        return str(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.floating,)):
        return float(x)
    if isinstance(x, complex):
        return [x.real, x.imag]
    if isinstance(x, np.ndarray):
        return x.tolist()
    return str(x)


# ------------------------------------------------------------------ config


def _load_config(arg: str | None) -> dict:
    if arg is None:
        return {}
    text = Path(arg).read_text() if not arg.lstrip().startswith("{") else arg
    try:
        cfg = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON config: {exc}") from exc
    if not isinstance(cfg, dict):
        raise ConfigError("config must be a JSON object")
    return cfg


def _ensemble(args, cfg: dict):
    from .models import EnsembleConfig

    d = dict(cfg.get("ensemble", {}))
    for key in ("n", "d", "alpha"):
        v = getattr(args, key, None)
        if v is not None:
            d[key] = v
    if getattr(args, "ensemble", None):
        d["kind"] = args.ensemble
    d.setdefault("kind", "sparse_wigner")
    d["seed"] = args.seed
    if d["kind"] == "config_model" and "degrees" not in d and "degree" in d:
        d["degrees"] = [int(d.pop("degree"))] * int(d["n"])
    try:
        return EnsembleConfig.from_dict(d)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def _matrix(cfg):
    from .graph_core import MarkedGraph, to_operator
    from .models import sample

    Y = sample(cfg)
    if isinstance(Y, MarkedGraph):
        Y = to_operator(Y, 0, sparse=True)
    return Y


# -------------------------------------------------------------- subcommands


def cmd_sample(args, cfg, out: _Writer) -> int:
    from .graph_core import MarkedGraph, from_matrix
    from .models import sample

    ens = _ensemble(args, cfg)
    out.manifest.config["ensemble"] = ens.to_dict()
    Y = sample(ens)
    g = Y if isinstance(Y, MarkedGraph) else from_matrix(Y)
    out.json("graph.json", g.to_dict())
    print(f"sampled {ens.kind}: n={g.n}, edges={g.m}")
    return 0


def cmd_esd(args, cfg, out: _Writer) -> int:
    from .spectral import esd, measure_to_json

    ens = _ensemble(args, cfg)
    out.manifest.config["ensemble"] = ens.to_dict()
    L = esd(_matrix(ens), check=ens.n <= 4000)
    out.csv("esd.csv", L.to_csv())
    out.json("esd_hist.json", json.loads(measure_to_json(L, args.bins)))
    print(f"esd: {len(L.values)} eigenvalues in [{L.values.min():.4g}, {L.values.max():.4g}]")
    return 0


def cmd_localaw(args, cfg, out: _Writer) -> int:
    from .graph_core import MarkedGraph, Quantizer, from_matrix
    from .local_law import neighborhood_distribution
    from .models import sample

    ens = _ensemble(args, cfg)
    h = int(cfg.get("h", args.h))
    q = Quantizer(float(cfg.get("delta", args.delta or Quantizer.delta)),
                  float(cfg.get("kappa", args.kappa or Quantizer.kappa)))
    out.manifest.config.update(ensemble=ens.to_dict(), h=h, delta=q.delta, kappa=q.kappa)
    Y = sample(ens)
    g = Y if isinstance(Y, MarkedGraph) else from_matrix(Y)
    law = neighborhood_distribution(g, h, q, cap=None)
    out.json("local_law.json", law.to_dict())
    print(f"local law: depth {h}, {len(law)} atoms")
    return 0


def cmd_limits(args, cfg, out: _Writer) -> int:
    from .limits import DegreeLaw, IntensityMeasure
    from .spectral import limit_esd_estimate, measure_to_json

    sampler = cfg.get("sampler", args.sampler)
    h = int(cfg.get("h", args.h))
    n_samples = int(cfg.get("samples", args.samples))
    theta = cfg.get("theta", args.theta)
    try:
        if sampler == "ugw":
            pi = cfg.get("pi", {"poisson": 2.0})
            if isinstance(pi, dict) and "poisson" in pi:
                law = DegreeLaw.poisson(float(pi["poisson"]))
            else:
                law = DegreeLaw.from_dict({int(k): float(v) for k, v in pi.items()})
            params = {"gamma": cfg.get("gamma", 1.0), "pi": law}
            rec = {"pi": pi, "gamma": params["gamma"]}
        elif sampler == "pwit":
            lam = cfg.get("intensity", {"stable": 1.25})
            if "stable" in lam:
                inten = IntensityMeasure.stable(float(lam["stable"]))
            else:
                inten = IntensityMeasure.finite(float(lam["lam"]), lam["law"])
            params = {"intensity": inten, "eps": float(cfg.get("eps", 0.05)),
                      "max_vertices": cfg.get("max_vertices", 2000)}
            rec = {"intensity": lam, "eps": params["eps"], "max_vertices": params["max_vertices"]}
        else:
            raise ConfigError(f"unknown sampler {sampler!r}")
    except (TypeError, KeyError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    out.manifest.config.update(sampler=sampler, h=h, samples=n_samples, theta=theta, **rec)
    L = limit_esd_estimate(sampler, params, h, theta, n_samples, seed=args.seed, jobs=args.jobs)
    out.csv("limit_esd.csv", L.to_csv())
    out.json("limit_esd_hist.json", json.loads(measure_to_json(L, args.bins)))
    print(f"limit estimate: {sampler}, h={h}, {n_samples} samples, {len(L.values)} atoms")
    return 0


def _test_graphs(args, cfg) -> dict:
    from .traffics import TestGraph

    graphs = {}
    src = cfg.get("test_graphs", args.graphs)
    if src:
        p = Path(src)
        files = sorted(p.glob("*.json")) if p.is_dir() else [p]
        if not files:
            raise ConfigError(f"no test graphs found in {src}")
        for f in files:
            try:
                graphs[f.stem] = TestGraph.from_dict(json.loads(f.read_text()))
            except (OSError, KeyError, ValueError) as exc:
                raise ConfigError(f"{f}: {exc}") from exc
    else:
        for k in range(1, args.max_cycle + 1):
            graphs[f"cycle{k}"] = TestGraph.cycle(k)
    return graphs


def cmd_traffic(args, cfg, out: _Writer) -> int:
    from .traffics import BRUTE_FORCE_CAP, traffic_eval

    ens = _ensemble(args, cfg)
    graphs = _test_graphs(args, cfg)
    out.manifest.config.update(ensemble=ens.to_dict(), test_graphs={k: g.to_dict() for k, g in graphs.items()})
    Y = _matrix(ens)
    values = {}
    for name, H in graphs.items():
        if H.n_vertices > BRUTE_FORCE_CAP and not H.is_cycle_or_path():
            raise ConfigError(f"test graph {name} exceeds the {BRUTE_FORCE_CAP}-vertex cap")
        v = traffic_eval(Y, H)
        values[name] = [v.real, v.imag]
        print(f"tau[{name}] = {v.real:.10g} {v.imag:+.10g}i")
    out.json("traffic.json", {"values": values})
    return 0


def cmd_entropy(args, cfg, out: _Writer) -> int:
    from .entropy import discretized_kl_sweep, sigma0, sigma_er, sweep_to_csv
    from .limits import DegreeLaw, ugw_exact_law
    from .local_law import NeighborhoodLaw

    kind = cfg.get("kind", args.kind)
    if kind == "sweep":
        p = cfg.get("p", {"gaussian": [0, 1]})
        q = cfg.get("q", {"gaussian": [1, 1]})
        kappa = float(cfg.get("kappa", 8.0))
        deltas = cfg.get("deltas", [2.0 ** -j for j in range(1, 7)])
        out.manifest.config.update(kind=kind, p=p, q=q, kappa=kappa, deltas=deltas)
        try:
            rows = discretized_kl_sweep(p, q, kappa, deltas)
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc
        out.csv("kl_sweep.csv", sweep_to_csv(rows))
        for d, v in rows:
            print(f"delta={d:.6g} kl={v:.10g}")
        return 0
    if kind not in ("sigma0", "sigma_er"):
        raise ConfigError(f"unknown entropy kind {kind!r}")
    h = int(cfg.get("h", args.h))
    if "law" in cfg or args.law:
        src = cfg.get("law", args.law)
        law = NeighborhoodLaw.from_dict(json.loads(Path(src).read_text()) if isinstance(src, str) else src)
        out.manifest.config.update(law=law.to_dict())
    else:
        pi = cfg.get("pi", {"0": "1/2", "2": "1/2"})
        try:
            dl = DegreeLaw.from_dict({int(k): Fraction(v) if isinstance(v, str) else float(v)
                                      for k, v in pi.items()})
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc
        law, dropped = ugw_exact_law(dl, h)
        out.manifest.config.update(pi=pi)
    out.manifest.config.update(kind=kind, h=h)
    if kind == "sigma0":
        rep = sigma0(law, cfg.get("d"), h)
    else:
        gamma = {float(k): float(v) for k, v in cfg.get("gamma", {"1.0": 1.0}).items()}
        d = float(cfg.get("d", 1.0))
        out.manifest.config.update(gamma=gamma, d=d)
        rep = sigma_er(law, gamma, d, h)
    out.json("entropy.json", rep.to_dict())
    print(f"{kind} = {rep.value:.10g}")
    for name, v in rep.terms.items():
        print(f"  {name} = {v:.10g}")
    return 0


def cmd_verify(args, cfg, out: _Writer) -> int:
    from .acceptance import SUITES, run_suite

    suite = cfg.get("suite", args.suite)
    if suite not in SUITES:
        raise ConfigError(f"unknown suite {suite!r}; choose from {sorted(SUITES)}")
    out.manifest.config.update(suite=suite)
    results = run_suite(suite, report=lambda r: print(r.line(), flush=True))
    passed = sum(r.passed for r in results)
    print(f"{passed}/{len(results)} criteria passed")
    # runtimes vary between runs, so the data file keeps only the verdicts
    out.json("verify.json", {"suite": suite, "results": [
        {"number": r.number, "name": r.name, "passed": r.passed, "tolerance": r.tolerance}
        for r in results]})
    return 0 if passed == len(results) else 1


def cmd_report(args, cfg, out: _Writer) -> int:
    rows = []
    for path in sorted(Path(args.out_dir).glob("manifest-*.json")):
        m = json.loads(path.read_text())
        rows.append({"hash": m["hash"], "subcommand": m["subcommand"], "seed": m["seed"],
                     "outputs": sorted(m["outputs"])})
    for r in rows:
        print(f"{r['hash']}  {r['subcommand']:<8} seed={r['seed']}  {len(r['outputs'])} files")
    out.json("report.json", {"runs": rows})
    return 0


COMMANDS = {"sample": cmd_sample, "esd": cmd_esd, "localaw": cmd_localaw, "limits": cmd_limits,
            "traffic": cmd_traffic, "entropy": cmd_entropy, "verify": cmd_verify, "report": cmd_report}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON file or inline JSON object")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--jobs", type=int, default=1)
    common.add_argument("--out-dir", default="out")
    common.add_argument("--bins", type=int, default=50)

    ensemble = argparse.ArgumentParser(add_help=False)
    ensemble.add_argument("--ensemble", choices=["sparse_wigner", "config_model", "levy", "general_gamma_n",
                                                 "er_marked"])
    ensemble.add_argument("--n", type=int)
    ensemble.add_argument("--d", type=float)
    ensemble.add_argument("--alpha", type=float)

    p = argparse.ArgumentParser(prog="heavytail", description="Heavy-tailed and sparse random matrix toolkit.")
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("sample", parents=[common, ensemble], help="sample an ensemble as a marked graph")
    sub.add_parser("esd", parents=[common, ensemble], help="empirical spectral distribution")
    s = sub.add_parser("localaw", parents=[common, ensemble], help="empirical neighborhood law")
    s.add_argument("--h", type=int, default=2)
    s.add_argument("--delta", type=float)
    s.add_argument("--kappa", type=float)
    s = sub.add_parser("limits", parents=[common], help="limit ESD estimate from UGW/PWIT samples")
    s.add_argument("--sampler", choices=["ugw", "pwit"], default="ugw")
    s.add_argument("--h", type=int, default=6)
    s.add_argument("--samples", type=int, default=100)
    s.add_argument("--theta", type=float)
    s = sub.add_parser("traffic", parents=[common, ensemble], help="traffic distribution on test graphs")
    s.add_argument("--graphs", help="test-graph JSON file or directory of them")
    s.add_argument("--max-cycle", type=int, default=6)
    s = sub.add_parser("entropy", parents=[common], help="entropy functionals and KL sweeps")
    s.add_argument("--kind", choices=["sweep", "sigma0", "sigma_er"], default="sweep")
    s.add_argument("--h", type=int, default=2)
    s.add_argument("--law", help="NeighborhoodLaw JSON file")
    s = sub.add_parser("verify", parents=[common], help="run an acceptance suite")
    s.add_argument("--suite", default="fast")
    sub.add_parser("report", parents=[common], help="summarize the manifests in --out-dir")
    return p


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    t0 = time.perf_counter()
    try:
        cfg = _load_config(args.config)
        if "seed" in cfg:
            args.seed = int(cfg.pop("seed"))
        manifest = RunManifest(args.command, {}, args.seed, versions())
        out = _Writer(Path(args.out_dir), manifest)
        code = COMMANDS[args.command](args, cfg, out)
    except (ConfigError, OSError, ValueError, KeyError) as exc:
        print(f"heavytail {args.command}: configuration error: {exc}", file=sys.stderr)
        parser.print_usage(sys.stderr)
        return 2
    manifest.wall_clock = round(time.perf_counter() - t0, 3)
    (Path(args.out_dir) / f"manifest-{manifest.hash}.json").write_text(manifest.to_json() + "\n")
    return code


def main():
    sys.exit(run())
