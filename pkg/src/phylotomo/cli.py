"""Command-line experiment harness.

Subcommands: simulate, reconstruct, infer-moments, sweep, oracle-check.
Every command reads an optional JSON config (paths inside it are relative to
the config file), is deterministic given the config and seed, and writes a
JSON report carrying the config hash, seed and package versions.

Exit codes: 0 success, 2 invalid input, 3 reconstruction failure,
4 oracle residual above tolerance, 5 reconstructed tree differs from the
reference tree.
"""

from __future__ import annotations

import argparse
import csv
import logging
import math
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .afi import afi
from .delays import DiscreteDelay, sample_delays, uniform_model
from .dmr import DmrParams, DmrReport, dmr_reconstruct
from .errors import GuardError, ReconstructionError, TomographyError, ValidationError
from .estimators import DistortedMetric, SampleStatistics, estimated_variance_metric
from .families import (
    MAX_SUPPORT,
    DiscreteFamilySpec,
    UniformFamilySpec,
    psi_discrete,
    psi_uniform,
)
from .generate import make_tree
from .io import (
    config_hash,
    model_from_config,
    per_edge_setting,
    read_json,
    read_metric,
    read_samples,
    tree_from_config,
    versions,
    write_json,
    write_metric,
    write_samples,
)
from .moments import MomentTable, er, sym_er
from .newick import parse_newick, to_newick
from .oracle import (
    check_lemma_identities,
    exact_delta,
    exact_joint,
    exact_tree_metric,
    random_instance,
)
from .tree import RoutingTree, chord_depth

log = logging.getLogger("phylotomo")

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_RECONSTRUCTION = 3
EXIT_RESIDUAL = 4
EXIT_WRONG_TREE = 5


class Context:
    """Resolved command inputs: config, its directory, seed, jobs and output dir."""

    def __init__(self, args):
        if args.config:
            path = Path(args.config)
            self.config = read_json(path)
            self.base = path.resolve().parent
        else:
            self.config, self.base = {}, Path.cwd()
        seed = args.seed if args.seed is not None else self.config.get("seed", 0)
        if isinstance(seed, bool) or not isinstance(seed, int) or seed < 0:
            raise ValidationError(f"seed must be a nonnegative integer, got {seed!r}")
        self.seed = seed
        self.jobs = max(1, args.jobs)
        if args.out:
            self.out = Path(args.out)
        else:
            self.out = self.base / self.config.get("out", ".")
        self.out.mkdir(parents=True, exist_ok=True)

    def path(self, flag_value, key):
        """A path from a CLI flag (cwd-relative) or a config key (config-relative)."""
        if flag_value:
            return Path(flag_value)
        if key in self.config:
            return self.base / self.config[key]
        return None

    def tree(self, flag_value=None) -> RoutingTree | None:
        if flag_value:
            return parse_newick(Path(flag_value).read_text())[0]
        if "tree" in self.config:
            return tree_from_config(self.config["tree"], self.base)
        return None

    def report(self, **body) -> dict:
        return {
            "config_hash": config_hash(self.config),
            "seed": self.seed,
            "versions": versions(),
            **body,
        }


def _need(value, what):
    if value is None:
        raise ValidationError(f"missing {what}")
    return value


def _dmr_params(spec: dict, f=None, g=None, depth=None) -> DmrParams:
    spec = dict(spec or {})
    f = spec.pop("f", f)
    g = spec.pop("g", g)
    depth = spec.pop("depth", depth)
    return DmrParams.recipe(
        float(_need(f, "variance floor 'f' for DMR parameters")),
        float(_need(g, "variance ceiling 'g' for DMR parameters")),
        float(_need(depth, "chord depth bound 'depth' for DMR parameters")),
        **spec,
    )


def default_depth(n_leaves: int) -> int:
    """Chord depth bound valid for every tree on ``n_leaves`` leaves with internal degree >= 3."""
    return max(2, math.ceil(2 * math.log2(n_leaves) - 1))


# ---------------------------------------------------------------- simulate


def cmd_simulate(args, ctx: Context) -> int:
    cfg = ctx.config
    tree = _need(ctx.tree(), "'tree' in config")
    model = model_from_config(tree, _need(cfg.get("model"), "'model' in config"))
    k = args.k if args.k is not None else cfg.get("k")
    if isinstance(k, bool) or not isinstance(k, int) or k < 2:
        raise ValidationError(f"k must be an integer >= 2, got {k!r}")
    samples = sample_delays(model, k, ctx.seed, jobs=ctx.jobs)
    write_samples(ctx.out / "samples.csv", samples)
    (ctx.out / "tree.nwk").write_text(to_newick(tree) + "\n")
    write_json(ctx.out / "model.json", model.to_dict())
    write_json(
        ctx.out / "simulate.json",
        ctx.report(command="simulate", k=k, leaves=list(samples.leaves), M=float(model.bound)),
    )
    log.info("wrote %d replicas over %d leaves to %s", k, len(samples.leaves), ctx.out)
    return EXIT_OK


# ------------------------------------------------------------- reconstruct


def _exact_variance_metric(tree, model, params) -> DistortedMetric:
    W = exact_tree_metric(tree, {e: float(v) for e, v in model.moment_weights(2).items()})
    return DistortedMetric(W.leaves, W.values.astype(float), params.tau, params.M_tilde)


def cmd_reconstruct(args, ctx: Context) -> int:
    cfg = ctx.config
    reference = ctx.tree(args.reference)
    dmr_spec = dict(cfg.get("dmr", {}))
    params_path = ctx.path(args.params, "params")
    if params_path:
        dmr_spec.update(read_json(params_path))

    model = None
    if "model" in cfg and reference is not None:
        model = model_from_config(reference, cfg["model"])
    f = g = None
    if model is not None:
        variances = [float(v) for v in model.moment_weights(2).values()]
        f, g = min(variances), max(variances)
        if not g > f:
            g = 1.2 * f

    metric_path = ctx.path(args.metric, "metric")
    samples_path = ctx.path(args.samples, "samples")
    exact = args.exact or cfg.get("exact", False)

    if metric_path:
        metric = read_metric(metric_path)
        leaves = metric.leaves
    elif samples_path:
        samples = read_samples(samples_path)
        leaves = samples.leaves
    elif exact:
        leaves = _need(reference, "reference tree for exact mode").leaves
    else:
        raise ValidationError("reconstruct needs --samples, --metric or --exact")

    depth = dmr_spec.pop("depth", None)
    if depth is None:
        depth = default_depth(len(leaves))
    params = _dmr_params(dmr_spec, f, g, depth)

    if metric_path:
        metric = DistortedMetric(metric.leaves, metric.values, params.tau, params.M_tilde,
                                 k=metric.k, seed=metric.seed)
    elif samples_path:
        metric = estimated_variance_metric(samples, params.tau, params.M_tilde)
        write_metric(ctx.out / "metric.csv", metric)
    else:
        metric = _exact_variance_metric(reference, _need(model, "'model' for exact mode"), params)

    report = DmrReport()
    body = {"command": "reconstruct", "params": params.to_dict(), "exact": bool(exact)}
    try:
        tree = dmr_reconstruct(metric, params, report)
    except ReconstructionError as exc:
        body.update(status="inconsistent", error=str(exc), dmr=report.to_dict(), success=False)
        write_json(ctx.out / "reconstruct.json", ctx.report(**body))
        log.error("reconstruction failed: %s", exc)
        return EXIT_RECONSTRUCTION

    (ctx.out / "tree.nwk").write_text(to_newick(tree) + "\n")
    body.update(status="ok", dmr=report.to_dict(), newick=to_newick(tree))
    code = EXIT_OK
    if reference is not None:
        match = tree == reference
        body["success"] = match
        if not match:
            body["status"] = "wrong_tree"
            code = EXIT_WRONG_TREE
    write_json(ctx.out / "reconstruct.json", ctx.report(**body))
    return code


# ----------------------------------------------------------- infer-moments


def _family_estimates(tree: RoutingTree, table: MomentTable, spec: dict) -> dict:
    kind = spec.get("kind")
    out = []
    if kind == "uniform":
        fam = UniformFamilySpec(float(spec["theta_lo"]), float(spec["theta_hi"]))
        for e in tree.edges:
            out.append({"edge": list(e), "theta": psi_uniform(table.get(e, 2), fam)})
    elif kind == "discrete":
        fam = DiscreteFamilySpec(int(spec["M"]))
        if "mu" not in spec:
            raise ValidationError("discrete family needs per-edge integer means 'mu'")
        mus = per_edge_setting(tree, spec["mu"], "mu")
        need = 2 * fam.M
        if table.filled < need:
            raise ValidationError(f"discrete family with M={fam.M} needs J >= {need}")
        for e in tree.edges:
            if e not in mus:
                raise ValidationError(f"no mean given for edge {e}")
            w = [table.get(e, j) for j in range(2, need + 1)]
            out.append({"edge": list(e), "probs": [float(p) for p in psi_discrete(w, fam, mus[e])]})
    else:
        raise ValidationError(f"unknown family kind {kind!r}")
    return {"kind": kind, "edges": out}


def cmd_infer_moments(args, ctx: Context) -> int:
    cfg = ctx.config
    tree = _need(ctx.tree(args.tree), "tree (--tree or 'tree' in config)")
    samples = read_samples(_need(ctx.path(args.samples, "samples"), "samples (--samples)"))
    J = args.J if args.J is not None else cfg.get("J", 4)
    mode = args.mode or cfg.get("mode", "general")
    if mode not in ("sym", "general"):
        raise ValidationError(f"mode must be 'sym' or 'general', got {mode!r}")
    pairs = cfg.get("pairs", "afi")
    stats = SampleStatistics(samples)
    table = (sym_er if mode == "sym" else er)(stats, tree, J, pairs=pairs)
    body = {"command": "infer-moments", "mode": mode, "pairs": pairs, **table.to_dict()}
    if "family" in cfg:
        body["family"] = _family_estimates(tree, table, cfg["family"])
    write_json(ctx.out / "moments.json", ctx.report(**body))
    return EXIT_OK


# ------------------------------------------------------------------ sweep

SWEEP_COLUMNS = ("n", "k", "replicates", "success_rate", "max_moment_error", "wallclock")


def _sweep_cell(spec: dict, seed: int, n: int, k: int) -> dict:
    start = time.perf_counter()
    shape = spec.get("shape", "balanced")
    theta = spec.get("theta", 1.0)
    R = int(spec.get("replicates", 10))
    J = int(spec.get("J", 4))
    tree = make_tree(shape, n, seed)
    model = uniform_model(tree, theta)
    f = float(model.floor)
    g = float(spec.get("g", 1.2 * f))
    depth = spec.get("depth") or chord_depth(tree)
    params = DmrParams.recipe(f, g, depth)
    wins, worst = 0, 0.0
    for r in range(R):
        rep_seed = int(np.random.SeedSequence([seed, n, k, r]).generate_state(1)[0])
        samples = sample_delays(model, k, rep_seed)
        metric = estimated_variance_metric(samples, params.tau, params.M_tilde)
        try:
            wins += dmr_reconstruct(metric, params) == tree
        except ReconstructionError:
            pass
        if J >= 2:
            table = er(SampleStatistics(samples), tree, J)
            for e in tree.edges:
                for j in range(2, J + 1):
                    worst = max(worst, abs(float(table.get(e, j)) - float(model.moment(e, j))))
    return {
        "n": n,
        "k": k,
        "replicates": R,
        "success_rate": wins / R,
        "max_moment_error": worst if J >= 2 else "",
        "wallclock": time.perf_counter() - start,
    }


def cmd_sweep(args, ctx: Context) -> int:
    spec = _need(ctx.config.get("sweep"), "'sweep' in config")
    ns = [int(x) for x in spec.get("n", [16])]
    ks = [int(x) for x in spec.get("k", [1000])]
    if args.replicates is not None:
        spec = {**spec, "replicates": args.replicates}
    if any(k < 2 for k in ks) or any(n < 2 for n in ns):
        raise ValidationError("sweep needs n >= 2 and k >= 2")
    cells = [(n, k) for n in ns for k in ks]
    path = ctx.out / "sweep.csv"
    written = 0
    with open(path, "w", newline="") as fh, ThreadPoolExecutor(max_workers=ctx.jobs) as pool:
        writer = csv.DictWriter(fh, fieldnames=SWEEP_COLUMNS, lineterminator="\n")
        writer.writeheader()
        fh.flush()
        futures = [pool.submit(_sweep_cell, spec, ctx.seed, n, k) for n, k in cells]
        try:
            # rows are written in grid order, one at a time, as results arrive
            for fut in futures:
                writer.writerow(fut.result())
                fh.flush()
                written += 1
        except KeyboardInterrupt:
            for fut in futures:
                fut.cancel()
            log.warning("interrupted after %d of %d cells; partial results kept", written, len(cells))
            return 130
    write_json(
        ctx.out / "sweep.json",
        ctx.report(command="sweep", cells=len(cells), columns=list(SWEEP_COLUMNS)),
    )
    return EXIT_OK


# ----------------------------------------------------------- oracle-check


def _integer_family_cases(model):
    """Edges whose law is an integer distribution on ``0..M`` with an integer mean."""
    M = model.bound
    if int(M) != M or not 1 <= M <= MAX_SUPPORT:
        return []
    M = int(M)
    cases = []
    for e, d in model.dists.items():
        if not isinstance(d, DiscreteDelay):
            continue
        if not all(int(v) == v and 0 <= v <= M for v in d.values):
            continue
        if int(d.mean) != d.mean:
            continue
        probs = [0] * (M + 1)
        for v, p in zip(d.values, d.probs):
            probs[int(v)] += p
        cases.append((e, d, M, int(d.mean), probs))
    return cases


def _check_instance(tree, model, J):
    lemma = check_lemma_identities(tree, model, J)
    variances = model.moment_weights(2)
    W = exact_tree_metric(tree, variances)
    joint_res = 0
    for i, a in enumerate(tree.leaves):
        for b in tree.leaves[i + 1 :]:
            d2 = exact_delta(exact_joint(tree, model, (a, b)), a, b, 2)
            joint_res = max(joint_res, abs(d2 - W(a, b)))
    rec = afi(tree, W)
    afi_res = max(abs(rec[e] - variances[e]) for e in tree.edges)
    psi_res = 0
    cases = _integer_family_cases(model)
    for e, d, M, mu, probs in cases:
        w = [d.central_moment(j) for j in range(2, 2 * M + 1)]
        got = psi_discrete(w, DiscreteFamilySpec(M), mu)
        psi_res = max(psi_res, max(abs(x - y) for x, y in zip(got, probs)))
    return lemma, joint_res, afi_res, psi_res, len(cases)


def cmd_oracle_check(args, ctx: Context) -> int:
    cfg = ctx.config
    J = args.J if args.J is not None else cfg.get("J", 5)
    tol = float(cfg.get("tolerance", 1e-9))
    instances = []
    if "random" in cfg:
        spec = cfg["random"]
        rng = np.random.default_rng(ctx.seed)
        for _ in range(int(spec.get("instances", 20))):
            instances.append(
                random_instance(rng, int(spec.get("max_receivers", 6)), int(spec.get("max_support", 3)))
            )
    else:
        tree = _need(ctx.tree(), "'tree' or 'random' in config")
        instances.append((tree, model_from_config(tree, _need(cfg.get("model"), "'model' in config"))))

    lemma = None
    joint_res = afi_res = psi_res = psi_cases = 0
    for tree, model in instances:
        rep, jr, ar, pr, pc = _check_instance(tree, model, J)
        psi_cases += pc
        lemma = rep if lemma is None else lemma.merge(rep)
        joint_res, afi_res, psi_res = max(joint_res, jr), max(afi_res, ar), max(psi_res, pr)

    uniform_res = 0.0
    fam = cfg.get("uniform_family")
    if fam:
        spec = UniformFamilySpec(float(fam["theta_lo"]), float(fam["theta_hi"]))
        for theta in fam.get("thetas", []):
            uniform_res = max(uniform_res, abs(psi_uniform(theta**2 / 12, spec) - theta))

    n = len(instances)
    identities = lemma.to_dict() + [
        {"identity": "variance_metric", "max_residual": float(joint_res), "instances": n},
        {"identity": "afi_round_trip", "max_residual": float(afi_res), "instances": n},
        {"identity": "discrete_family_round_trip", "max_residual": float(psi_res), "instances": n,
         "checks": psi_cases},
        {"identity": "uniform_family_round_trip", "max_residual": uniform_res, "instances": 1},
    ]
    passed = all(x["max_residual"] <= tol for x in identities)
    write_json(
        ctx.out / "oracle.json",
        ctx.report(command="oracle-check", J=J, tolerance=tol, identities=identities, passed=passed),
    )
    if not passed:
        log.error("identity residual above tolerance %g", tol)
        return EXIT_RESIDUAL
    return EXIT_OK


# ------------------------------------------------------------------ main


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON experiment config")
    common.add_argument("--seed", type=int, help="override the config seed")
    common.add_argument("--jobs", type=int, default=1, help="worker threads")
    common.add_argument("--out", help="output directory")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="phylotomo", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", parents=[common], help="sample leaf delays from a model")
    p.add_argument("--k", type=int, help="number of replicas (overrides config)")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("reconstruct", parents=[common], help="recover the routing tree")
    p.add_argument("--samples", help="samples CSV")
    p.add_argument("--metric", help="distorted metric CSV (sidecar JSON next to it)")
    p.add_argument("--exact", action="store_true", help="use the exact variance metric of the config model")
    p.add_argument("--params", help="JSON with DMR settings (f, g, depth, overrides)")
    p.add_argument("--reference", help="Newick file of the true tree")
    p.set_defaults(func=cmd_reconstruct)

    p = sub.add_parser("infer-moments", parents=[common], help="recover per-edge central moments")
    p.add_argument("--samples", help="samples CSV")
    p.add_argument("--tree", help="Newick file of the routing tree")
    p.add_argument("--J", type=int, help="highest moment order")
    p.add_argument("--mode", choices=("sym", "general"))
    p.set_defaults(func=cmd_infer_moments)

    p = sub.add_parser("sweep", parents=[common], help="success rate over a grid of n and k")
    p.add_argument("--replicates", type=int, help="seeds per grid cell (overrides config)")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("oracle-check", parents=[common], help="exact identity and round-trip checks")
    p.add_argument("--J", type=int, help="highest moment order")
    p.set_defaults(func=cmd_oracle_check)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        ctx = Context(args)
        return args.func(args, ctx)
    except GuardError as exc:
        log.error("refused: %s", exc)
        return EXIT_INVALID
    except ValidationError as exc:
        log.error("invalid input: %s", exc)
        return EXIT_INVALID
    except ReconstructionError as exc:
        log.error("reconstruction failed: %s", exc)
        return EXIT_RECONSTRUCTION
    except (KeyError, TypeError, OSError) as exc:
        log.error("bad config or input: %s", exc)
        return EXIT_INVALID
    except TomographyError as exc:
        log.error("%s", exc)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
