"""Command-line harness: ``ailsrs <subcommand> ...``.

Subcommands: train-expert, record, imitate, eval, export-curves.

Exit statuses: 0 success, 1 internal error, 2 usage or invalid config,
3 I/O or file-format error, 4 numerical failure.

Every run writes ``manifest.json`` holding the argv, the fully resolved
config and a SHA-256 digest of the output-affecting part (everything except
worker count and output paths). The digest is also the first line of each
metrics file.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import platform
import sys
from dataclasses import asdict, replace
from importlib import resources
from pathlib import Path

import numpy as np

from . import __version__
from .dataset import load_dataset, record_expert, save_dataset
from .discriminator import save_discriminator
from .envs import available_envs, make_env
from .errors import FileFormatError, InvalidArgument, NumericalFailure
from .imitation import (AilsrsConfig, AilsrsState, BcConfig, ailsrs_train, bc_fit, load_checkpoint,
                        save_checkpoint)
from .metrics import MetricsRow, MetricsWriter, export_curves
from .policy import load_policy, save_policy
from .search import ArsConfig, evaluate_policy, train_expert

EXIT_OK, EXIT_INTERNAL, EXIT_USAGE, EXIT_IO, EXIT_NUMERICAL = 0, 1, 2, 3, 4
PROFILES = ("desk", "full")
PROFILE_VERSION = 1


def load_profile(name: str) -> dict:
    if name not in PROFILES:
        raise InvalidArgument(f"unknown profile {name!r}; choose from {PROFILES}")
    text = resources.files("ailsrs").joinpath(f"data/profiles/{name}.json").read_text()
    prof = json.loads(text)
    if prof.get("version") != PROFILE_VERSION:
        raise InvalidArgument(f"profile {name!r} has unsupported version {prof.get('version')}")
    return prof


def parse_seeds(text: str) -> list[int]:
    try:
        seeds = [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise InvalidArgument(f"--seeds expects comma-separated integers, got {text!r}") from None
    if not seeds or len(set(seeds)) != len(seeds):
        raise InvalidArgument(f"--seeds needs distinct integers, got {text!r}")
    return seeds


def _jsonable(x):
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, (tuple, list)):
        return [_jsonable(v) for v in x]
    if isinstance(x, dict):
        return {k: _jsonable(v) for k, v in x.items()}
    if isinstance(x, np.generic):
        return x.item()
    return x


def config_digest(config: dict) -> str:
    blob = json.dumps(_jsonable(config), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()


def write_manifest(path: Path, command: str, argv, config: dict, runtime: dict) -> str:
    """``config`` determines outputs; ``runtime`` (workers, paths) must not."""
    digest = config_digest(config)
    manifest = {
        "format": "ailsrs-manifest", "version": 1, "command": command, "argv": list(argv),
        "config": _jsonable(config), "runtime": _jsonable(runtime), "config_sha256": digest,
        "code_version": __version__, "python": platform.python_version(), "numpy": np.__version__,
    }
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return digest


def _override(cfg, **changes):
    return replace(cfg, **{k: v for k, v in changes.items() if v is not None})


def _ars_config(prof, args) -> ArsConfig:
    cfg = ArsConfig(**prof["ars"])
    return _override(cfg, alpha=args.alpha, n_directions=args.n_directions, nu=args.nu,
                     variant=args.variant, eval_episodes=args.eval_episodes)


def _env(args, prof):
    horizon = args.horizon if args.horizon is not None else prof.get("horizon")
    return make_env(args.env, horizon)


def _writer(path: Path, digest: str):
    return MetricsWriter(path / "metrics.csv", digest, path / "timing.csv")


def cmd_train_expert(args) -> int:
    prof = load_profile(args.profile)
    env = _env(args, prof)
    cfg = _ars_config(prof, args)
    iters = args.iterations if args.iterations is not None else prof["expert"]["iterations"]
    seeds = parse_seeds(args.seeds)
    out = Path(args.out)
    config = {"profile": args.profile, "env": env.describe(), "ars": asdict(cfg), "iterations": iters,
              "seeds": seeds}
    digest = write_manifest(out / "manifest.json", "train-expert", args.argv, config,
                            {"workers": args.workers, "out": str(out)})
    for seed in seeds:
        d = out / f"seed-{seed}"
        d.mkdir(parents=True, exist_ok=True)
        with _writer(d, digest) as w:
            policy, _ = train_expert(env, cfg, seed, iters, args.workers, on_iteration=w)
        save_policy(policy, d / "policy.txt")
        print(f"seed {seed}: final eval return {policy_eval_summary(env, policy, seed, cfg.eval_episodes)}")
    return EXIT_OK


def policy_eval_summary(env, policy, seed, episodes) -> str:
    r = evaluate_policy(env, policy, seed, 0, episodes)
    return f"{r.mean():.6g} ± {r.std():.6g}"


def cmd_record(args) -> int:
    prof = load_profile(args.profile)
    env = _env(args, prof)
    policy = load_policy(args.policy, env)
    ds = record_expert(env, policy, args.episodes, args.seed)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_dataset(ds, out)
    config = {"profile": args.profile, "env": env.describe(), "policy": policy.theta,
              "normalizer_mean": policy.normalizer.mean, "normalizer_count": policy.normalizer.count,
              "episodes": args.episodes, "seed": args.seed}
    write_manifest(out.parent / (out.name + ".manifest.json"), "record", args.argv, config,
                   {"out": str(out), "policy_path": args.policy})
    print(f"recorded {args.episodes} episodes, mean return {ds.mean_return:.6g} -> {out}")
    return EXIT_OK


def _budgets(text):
    if text is None:
        return None
    vals = parse_seeds(text)
    if any(b < 1 for b in vals):
        raise InvalidArgument("--episodes-budget values must be >= 1")
    return vals


def _imitate_one(args, env, dataset, prof, out: Path, budget) -> None:
    seeds = parse_seeds(args.seeds)
    eval_episodes = args.eval_episodes or prof["ars"]["eval_episodes"]
    if args.method == "bc":
        bc_cfg = _override(BcConfig(**prof["bc"]), ridge_lambda=args.ridge, solver=args.bc_solver)
        config = {"method": "bc", "profile": args.profile, "env": env.describe(), "bc": asdict(bc_cfg),
                  "seeds": seeds, "episodes_budget": budget, "eval_episodes": eval_episodes,
                  "dataset_mean_return": dataset.mean_return, "dataset_recorder_seed": dataset.recorder_seed}
        digest = write_manifest(out / "manifest.json", "imitate", args.argv, config,
                                {"out": str(out), "dataset": args.dataset})
        policy = bc_fit(dataset, env, bc_cfg)
        for seed in seeds:
            d = out / f"seed-{seed}"
            d.mkdir(parents=True, exist_ok=True)
            r = evaluate_policy(env, policy, seed, 0, eval_episodes)
            with _writer(d, digest) as w:
                w(MetricsRow(seed, 0, float(r.mean()), 0.0, 0.0, 0.0))
            save_policy(policy, d / "policy.txt")
            print(f"bc seed {seed}: {r.mean():.6g} ± {r.std():.6g}")
        return

    ars = _ars_config(prof, args)
    cfg = _override(AilsrsConfig(ars=ars, **prof["ailsrs"]), max_iterations=args.iterations,
                    eval_every=args.eval_every, disc_lr=args.disc_lr)
    if args.bc_pretrain:
        cfg = replace(cfg, bc_pretrain=True)
    config = {"method": "ailsrs", "profile": args.profile, "env": env.describe(), "ailsrs": asdict(cfg),
              "seeds": seeds, "episodes_budget": budget, "dataset_mean_return": dataset.mean_return,
              "dataset_recorder_seed": dataset.recorder_seed,
              "checkpoint_every": args.checkpoint_every}
    digest = write_manifest(out / "manifest.json", "imitate", args.argv, config,
                            {"workers": args.workers, "out": str(out), "dataset": args.dataset})
    for seed in seeds:
        d = out / f"seed-{seed}"
        d.mkdir(parents=True, exist_ok=True)
        ckpt = d / "checkpoint"
        with _writer(d, digest) as w:
            policy, disc, _ = ailsrs_train(env, dataset, cfg, seed, args.workers, on_iteration=w,
                                           checkpoint_dir=ckpt, checkpoint_every=args.checkpoint_every)
        save_policy(policy, d / "policy.txt")
        save_discriminator(disc, d / "discriminator.json")
        print(f"ailsrs seed {seed}: final eval return {policy_eval_summary(env, policy, seed, eval_episodes)}")


def cmd_imitate(args) -> int:
    prof = load_profile(args.profile)
    env = _env(args, prof)
    dataset = load_dataset(args.dataset, env)
    budgets = _budgets(args.episodes_budget)
    out = Path(args.out)
    if budgets is None:
        _imitate_one(args, env, dataset, prof, out, len(dataset))
    else:
        for b in budgets:
            _imitate_one(args, env, dataset.subset(b), prof, out / f"budget-{b}", b)
    return EXIT_OK


def cmd_resume(args) -> int:
    """Continue an imitate run from its checkpoint directory."""
    prof = load_profile(args.profile)
    env = _env(args, prof)
    dataset = load_dataset(args.dataset, env)
    state, seed = load_checkpoint(args.checkpoint, env)
    cfg = AilsrsConfig(ars=_ars_config(prof, args), **prof["ailsrs"])
    cfg = _override(cfg, max_iterations=args.iterations, eval_every=args.eval_every, disc_lr=args.disc_lr)
    if args.bc_pretrain:
        cfg = replace(cfg, bc_pretrain=True)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with _writer(out, "") as w:
        policy, disc, _ = ailsrs_train(env, dataset, cfg, seed, args.workers, on_iteration=w, resume=state)
    save_policy(policy, out / "policy.txt")
    save_checkpoint(AilsrsState(policy, disc, cfg.max_iterations), seed, out / "checkpoint")
    return EXIT_OK


def cmd_eval(args) -> int:
    prof = load_profile(args.profile)
    env = _env(args, prof)
    policy = load_policy(args.policy, env)
    episodes = args.episodes if args.episodes is not None else prof["eval"]["episodes"]
    if episodes < 1:
        raise InvalidArgument("--episodes must be >= 1")
    r = evaluate_policy(env, policy, args.seed, 0, episodes, args.workers)
    print(f"{r.mean():.6g} ± {r.std():.6g}")
    return EXIT_OK


def cmd_export_curves(args) -> int:
    if args.sigma < 0:
        raise InvalidArgument("--sigma must be >= 0")
    export_curves(args.inputs, args.out, args.sigma)
    print(f"wrote {args.out}")
    return EXIT_OK


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise InvalidArgument(message)


def _common(p, seeds=True):
    p.add_argument("--env", required=True, help=f"one of {', '.join(available_envs())}")
    p.add_argument("--profile", default="desk", choices=PROFILES)
    p.add_argument("--horizon", type=int, default=None, help="override the profile/env episode length")
    p.add_argument("--workers", type=int, default=1)
    if seeds:
        p.add_argument("--seeds", default="0,1,2", help="comma-separated seed list")


def _ars_flags(p):
    p.add_argument("--alpha", type=float)
    p.add_argument("--n-directions", type=int)
    p.add_argument("--nu", type=float)
    p.add_argument("--variant", choices=("ars-v2", "brs"))
    p.add_argument("--eval-episodes", type=int)
    p.add_argument("--iterations", type=int)


def _ailsrs_flags(p):
    p.add_argument("--dataset", required=True)
    p.add_argument("--eval-every", type=int)
    p.add_argument("--disc-lr", type=float)
    p.add_argument("--bc-pretrain", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="ailsrs", description="Random-search adversarial imitation on desk-scale envs")
    parser.add_argument("--version", action="version", version=f"ailsrs {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("train-expert", help="train a linear expert with ARS on the true reward")
    _common(p)
    p.add_argument("--seed", type=int, help="single seed (same as --seeds S)")
    _ars_flags(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train_expert)

    p = sub.add_parser("record", help="record expert demonstrations to a dataset file")
    _common(p, seeds=False)
    p.add_argument("--policy", required=True)
    p.add_argument("--episodes", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_record)

    p = sub.add_parser("imitate", help="run AILSRS or behavioral cloning on a dataset")
    _common(p)
    p.add_argument("--method", choices=("ailsrs", "bc"), default="ailsrs")
    _ars_flags(p)
    _ailsrs_flags(p)
    p.add_argument("--episodes-budget", help="comma-separated expert-episode budgets, one subdir each")
    p.add_argument("--ridge", type=float)
    p.add_argument("--bc-solver", choices=("closed-form", "iterative"))
    p.add_argument("--checkpoint-every", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_imitate)

    p = sub.add_parser("resume", help="continue an AILSRS run from a checkpoint directory")
    _common(p, seeds=False)
    _ars_flags(p)
    _ailsrs_flags(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_resume)

    p = sub.add_parser("eval", help="evaluate a policy; prints 'R ± S' (population std)")
    _common(p, seeds=False)
    p.add_argument("--policy", required=True)
    p.add_argument("--episodes", type=int)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("export-curves", help="merge per-seed metrics into mean/std curves")
    p.add_argument("inputs", nargs="+")
    p.add_argument("--out", required=True)
    p.add_argument("--sigma", type=float, default=5.0, help="Gaussian smoothing width in iterations")
    p.set_defaults(func=cmd_export_curves)
    return parser


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = build_parser().parse_args(argv)
        args.argv = argv
        if getattr(args, "seed", None) is not None and hasattr(args, "seeds"):
            args.seeds = str(args.seed)
        if getattr(args, "workers", 1) < 1:
            raise InvalidArgument("--workers must be >= 1")
        return args.func(args)
    except SystemExit as exc:          # --help / --version
        return int(exc.code or 0)
    except NumericalFailure as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (FileFormatError, OSError) as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO
    except InvalidArgument as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ValueError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
