"""Command-line front end.

Subcommands: ``run``, ``exit-times``, ``stepsize-scan``, ``ef``, ``ref-weights``.
Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.
"""

from __future__ import annotations

import argparse
import os
import sys
import tempfile
import warnings
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import config as cfgmod
from .bias import BiasSpec, Rho
from .estimators import ef_scan_csv, g_frak, stepsize_diagnostic
from .experiments import ExitCampaignSpec, campaign, campaign_csv, campaign_fits, derive_seed, fits_csv
from .kernel import ProposalSpec
from .model import (ContinuousTarget, DomainError, Partition, QuadratureError, QuadratureSpec,
                    ToyTarget, reference_weights, weights_csv)
from .sampler import InvariantViolation, SamplerConfig, run

SECTIONS = {
    "run": ("model", "bias", "proposal", "run", "output"),
    "exit-times": ("model", "bias", "proposal", "run", "experiment", "output"),
    "stepsize-scan": ("model", "bias", "proposal", "run", "experiment", "output"),
    "ef": ("model", "experiment", "output"),
    "ref-weights": ("model", "output"),
}
REQUIRED = {
    "run": ("model", "run"),
    "exit-times": ("model", "experiment"),
    "stepsize-scan": ("model", "run", "experiment"),
    "ef": ("model",),
    "ref-weights": ("model",),
}


class UsageError(Exception):
    pass


def write_atomic(path: str, data: str | bytes):
    """Write via a temp file in the same directory, then rename over ``path``."""
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    mode = "wb" if isinstance(data, bytes) else "w"
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-")
    try:
        kwargs = {} if mode == "wb" else {"encoding": "utf-8", "newline": "\n"}
        with os.fdopen(fd, mode, **kwargs) as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


# -- building objects from a resolved manifest -------------------------------

def build_model(m: dict):
    if m["target"] == "toy":
        return ToyTarget(m["epsilon"]), Partition.identity(3)
    if m["target"] == "two-well":
        return (ContinuousTarget(beta=m["beta"], R=m["R"], potential="two-well"),
                Partition.uniform(m["R"], m["d"]))
    raise DomainError(f"unknown target {m['target']!r}")


def build_bias(b: dict, a: float | None = None, alpha: float | None = None,
               mu: float | None = None) -> BiasSpec:
    rho = Rho(b["rho.family"], b["rho.a"] if a is None else a, b["rho.t0"], b["rho.value"])
    alpha = b["alpha"] if alpha is None else alpha
    # an explicit gamma only applies to the bias section's own alpha
    gamma = b.get("gamma") if alpha == b["alpha"] else None
    return BiasSpec(rho, alpha, b["mu"] if mu is None else mu, gamma)


def quad_spec(m: dict) -> QuadratureSpec:
    return QuadratureSpec(x2_min=m["quad.x2_min"], x2_max=m["quad.x2_max"], rtol=m["quad.rtol"],
                          max_levels=m["quad.max_levels"])


def build_sampler(r: dict, target, partition, bias, proposal, seed: int, **over) -> SamplerConfig:
    x0 = r.get("x0")
    if isinstance(target, ToyTarget):
        x0 = 1 if x0 is None else int(x0)
    elif x0 is not None:
        x0 = tuple(x0)
    kw = dict(n_steps=r["steps"], seed=seed, proposal=proposal, schedule=r["schedule"],
              schedule_c=r["schedule_c"], x0=x0, stride=r["stride"],
              theta_stride=r["theta_stride"], verify=r["verify"])
    kw.update(over)
    return SamplerConfig(target, partition, bias, **kw)


def parameter_sets(res: dict) -> list[BiasSpec]:
    e, b = res["experiment"], res["bias"]
    alphas = e.get("sets.alpha", [b["alpha"]])
    n = len(alphas)
    a_list = e.get("sets.a", [b["rho.a"]] * n)
    mu_list = e.get("sets.mu", [b["mu"]] * n)
    if not len(a_list) == len(mu_list) == n:
        raise cfgmod.ConfigError("sets.alpha, sets.a and sets.mu must have equal lengths")
    return [build_bias(b, a, al, mu) for al, a, mu in zip(alphas, a_list, mu_list)]


# -- subcommands ---------------------------------------------------------------

def cmd_run(res: dict, seed: int, out: str, jobs: int, dry_run: bool) -> int:
    target, partition = build_model(res["model"])
    bias = build_bias(res["bias"])
    cfg = build_sampler(res["run"], target, partition, bias, ProposalSpec(res["proposal"]["sigma2"]), seed)
    if dry_run:
        print(f"run: {cfg.n_steps} steps, d={partition.d}, seed={seed}")
        return 0
    rec = run(cfg)
    write_atomic(os.path.join(out, "run.csv"), rec.to_csv())
    write_atomic(os.path.join(out, "theta.bin"), rec.theta_bytes())
    lines = ["index,theta_n,visits,is_sum"]
    for i, (t, v, s) in enumerate(zip(rec.final_theta, rec.visits, rec.is_sums), start=1):
        lines.append(f"{i},{float(t)!r},{int(v)},{float(s)!r}")
    write_atomic(os.path.join(out, "final.csv"), "\n".join(lines) + "\n")
    return 0


def cmd_exit_times(res: dict, seed: int, out: str, jobs: int, dry_run: bool) -> int:
    m, e = res["model"], res["experiment"]
    if "grid" not in e:
        raise cfgmod.ConfigError("experiment.grid is required for exit-times")
    toy = m["target"] == "toy"
    sets = parameter_sets(res)
    x0 = res["run"].get("x0")
    spec = ExitCampaignSpec(
        kind="toy" if toy else "plane", grid=tuple(e["grid"]), biases=tuple(sets), K=e["K"],
        cap=e.get("cap"), master_seed=seed, R=m["R"], d=m["d"],
        sigma2=res["proposal"]["sigma2"], x0=(-1.0, 0.0) if x0 is None or toy else tuple(x0),
        exit_x1=e["exit_x1"])
    if dry_run:
        label = "epsilon" if toy else "beta"
        print(f"grid ({label}): {list(spec.grid)}")
        for i, b in enumerate(sets):
            print(f"set {i}: alpha={b.alpha} a={b.a} mu={b.mu} gamma={b.gamma}")
        print(f"trials: {spec.n_trials} (K={spec.K}, cap={spec.resolved_cap})")
        return 0
    rows = campaign(spec, jobs=jobs)
    fits = campaign_fits(spec, rows)
    write_atomic(os.path.join(out, "campaign.csv"), campaign_csv(rows))
    write_atomic(os.path.join(out, "fits.csv"), fits_csv(fits))
    return 0


def _theta_star(res: dict):
    target, partition = build_model(res["model"])
    return reference_weights(target, partition, quad_spec(res["model"]))


def _scan_replica(args):
    cfg, = args
    return run(cfg)


def cmd_stepsize_scan(res: dict, seed: int, out: str, jobs: int, dry_run: bool) -> int:
    target, partition = build_model(res["model"])
    bias = build_bias(res["bias"])
    K = res["experiment"]["replicas"]
    prop = ProposalSpec(res["proposal"]["sigma2"])
    cfgs = [build_sampler(res["run"], target, partition, bias, prop, derive_seed(seed, 0, r),
                          theta_stride=0, track_is=False) for r in range(K)]
    if dry_run:
        print(f"stepsize-scan: {K} replicas x {res['run']['steps']} steps, alpha={bias.alpha} a={bias.a}")
        return 0
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            records = list(pool.map(_scan_replica, [(c,) for c in cfgs]))
    else:
        records = [run(c) for c in cfgs]
    g = g_frak(_theta_star(res), bias.a)
    diag = stepsize_diagnostic(records, bias.alpha, bias.mu, g_ref=g)
    write_atomic(os.path.join(out, "stepsize.csv"), diag.to_csv())
    mean, se = diag.plateau(start_fraction=0.9)
    expected = g * (1.0 / bias.mu if bias.alpha == 1.0 else
                    (1 - bias.alpha) * bias.gamma ** (1 / bias.alpha - 1))
    text = ("replicas,plateau_mean,plateau_stderr,g_a,expected_limit\n"
            f"{K},{mean!r},{se!r},{g!r},{expected!r}\n")
    write_atomic(os.path.join(out, "plateau.csv"), text)
    return 0


def cmd_ef(res: dict, seed: int, out: str, jobs: int, dry_run: bool) -> int:
    e = res.get("experiment", {})
    a_grid = e.get("a_grid", [round(0.1 * k, 10) for k in range(11)])
    if dry_run:
        print(f"ef: a grid {a_grid}")
        return 0
    theta = np.asarray(e["theta_star"]) if "theta_star" in e else _theta_star(res)
    if np.any(theta <= 0) or not np.isclose(theta.sum(), 1.0):
        raise cfgmod.ConfigError("experiment.theta_star must be a probability vector")
    write_atomic(os.path.join(out, "ef.csv"), ef_scan_csv(theta, a_grid))
    return 0


def cmd_ref_weights(res: dict, seed: int, out: str, jobs: int, dry_run: bool) -> int:
    target, partition = build_model(res["model"])
    if dry_run:
        print(f"ref-weights: target={res['model']['target']} d={partition.d}")
        return 0
    theta = reference_weights(target, partition, quad_spec(res["model"]))
    write_atomic(os.path.join(out, "ref_weights.csv"), weights_csv(partition, theta))
    return 0


COMMANDS = {
    "run": cmd_run,
    "exit-times": cmd_exit_times,
    "stepsize-scan": cmd_stepsize_scan,
    "ef": cmd_ef,
    "ref-weights": cmd_ref_weights,
}


def make_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="shus", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        s = sub.add_parser(name)
        s.add_argument("--config", required=True, metavar="PATH")
        s.add_argument("--seed", type=int, default=None, help="overrides run.seed (unsigned 64-bit)")
        s.add_argument("--jobs", type=int, default=1, help="worker processes")
        s.add_argument("--out", default=None, metavar="DIR", help="overrides output.dir")
        s.add_argument("--dry-run", action="store_true")
    return p


def main(argv=None) -> int:
    args = make_parser().parse_args(argv)
    try:
        if not os.path.isfile(args.config):
            raise UsageError(f"config file not found: {args.config}")
        if args.seed is not None and not 0 <= args.seed < 2**64:
            raise UsageError("--seed must be an unsigned 64-bit integer")
        if args.jobs < 1:
            raise UsageError("--jobs must be at least 1")
        raw = cfgmod.load(args.config)
        for section in REQUIRED[args.command]:
            if section not in raw:
                raise cfgmod.ConfigError(f"[{section}] is required for {args.command}")
        extra = set(raw) - set(SECTIONS[args.command])
        if extra:
            raise cfgmod.ConfigError(f"sections not used by {args.command}: {sorted(extra)}")
        res = cfgmod.resolve(raw, SECTIONS[args.command])
        if args.seed is not None:
            res.setdefault("run", {})["seed"] = args.seed
        if args.out is not None:
            res["output"]["dir"] = args.out
        seed = res.get("run", {}).get("seed", 0)
        out = res["output"]["dir"]
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            # validate object construction before any sampling
            build_model(res["model"])
            if "bias" in res:
                build_bias(res["bias"])
    except (UsageError, cfgmod.ConfigError, DomainError, OSError) as exc:
        print(f"shus: error: {exc}", file=sys.stderr)
        return 2
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            code = COMMANDS[args.command](res, seed, out, args.jobs, args.dry_run)
        if not args.dry_run:
            write_atomic(os.path.join(out, "resolved_config.toml"), cfgmod.dump(res))
        return code
    except (cfgmod.ConfigError, DomainError) as exc:
        print(f"shus: error: {exc}", file=sys.stderr)
        return 2
    except (InvariantViolation, QuadratureError, RuntimeError, OSError, ValueError) as exc:
        print(f"shus: runtime error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
