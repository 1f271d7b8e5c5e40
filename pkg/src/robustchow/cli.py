"""Command line front end.

    robust-chow chow               --config cfg.json --samples data.csv --out chow.json
    robust-chow learn-ltf          --eps 0.05 --m 100000 [--strategy chow_attack] ...
    robust-chow learn-ptf          --d 2 --eps 0.05 --m 100000 [--xi 0.1] ...
    robust-chow learn-intersection --k 2 --eps 0.02 --m 200000 ...
    robust-chow experiment         --config sweep.json [--out results.csv] [--seed 7]

Exit codes: 0 success, 2 config error, 3 learner failure.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from .adversary import AdversaryStrategy, LabeledSampleSet, corrupt
from .chowfilter import FilterParams, robust_chow
from .distributions import from_config, gaussian_descriptor
from .errors import ConfigError, RobustChowError
from .harness import (ExperimentConfig, make_corrupted_source, run_experiment,
                      score)
from .intersection_learner import Intersection, learn_intersection
from .ltf_learner import LTF, learn_ltf
from .ptf_learner import learn_ptf

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_LEARNER = 3


def _load_json(path: str) -> dict:
    with open(path) as fh:
        return json.load(fh)


def _write_json(payload: dict, out: str | None):
    text = json.dumps(payload, indent=2, sort_keys=True)
    if out is None or out == "-":
        print(text)
    else:
        with open(out, "w") as fh:
            fh.write(text + "\n")


def _cmd_chow(args) -> int:
    cfg = _load_json(args.config)
    eps = float(args.eps if args.eps is not None else cfg.get("eps", 0.0))
    dist = from_config(cfg["dist"] if "dist" in cfg else cfg, eps)
    samples_path = args.samples or cfg.get("samples")
    if samples_path is None:
        raise ConfigError("chow: provide --samples or a 'samples' config entry")
    s = LabeledSampleSet.from_csv(samples_path)
    if s.n != dist.n:
        raise ConfigError(f"chow: sample dimension {s.n} != config n {dist.n}")
    est = robust_chow(s, dist, FilterParams(eps=eps))
    _write_json(est.to_json(), args.out)
    return EXIT_OK


def _synthetic_ltf(args):
    ss = np.random.SeedSequence(args.seed)
    s_plant, s_draw, s_adv = ss.spawn(3)
    dist = gaussian_descriptor(args.n, 1, args.eps)
    rng = np.random.default_rng(s_plant)
    v = rng.standard_normal(args.n)
    v /= np.linalg.norm(v)
    plant = LTF(v, args.theta_plant)
    pts = dist.sample(args.m, s_draw)
    clean = LabeledSampleSet(pts, plant.evaluate(pts).astype(np.float64))
    strategy = AdversaryStrategy(args.strategy)
    corrupted = corrupt(clean, plant, args.eps, strategy, dist, s_adv)
    return dist, plant, strategy, corrupted


def _cmd_learn_ltf(args) -> int:
    dist, plant, strategy, corrupted = _synthetic_ltf(args)
    source = make_corrupted_source(plant, dist, args.eps, strategy)
    hyp = learn_ltf(corrupted, dist, args.eps, source=source, seed=args.seed)
    err = score(hyp, plant, dist, 100_000, np.random.SeedSequence(args.seed, spawn_key=(99,)))
    payload = hyp.to_json()
    payload["disagreement_estimate"] = err
    _write_json(payload, args.out)
    return EXIT_OK


def _cmd_learn_ptf(args) -> int:
    from .polybasis import Polynomial
    from .ptf_learner import PTF
    ss = np.random.SeedSequence(args.seed)
    s_draw, s_adv = ss.spawn(2)
    dist = gaussian_descriptor(args.n, args.d, args.eps)
    if args.plant_coeffs is not None:
        coeffs = np.asarray(json.loads(args.plant_coeffs), dtype=np.float64)
    else:
        coeffs = np.zeros(dist.basis.ell)
        coeffs[0] = -1.0
        exp = [0] * args.n
        exp[0] = 2
        coeffs[dist.basis.index_of(tuple(exp))] = 1.0
    plant = PTF(Polynomial(dist.basis, coeffs))
    pts = dist.sample(args.m, s_draw)
    clean = LabeledSampleSet(pts, plant.evaluate(pts).astype(np.float64))
    strategy = AdversaryStrategy(args.strategy)
    corrupted = corrupt(clean, plant, args.eps, strategy, dist, s_adv)
    hyp = learn_ptf(corrupted, dist, args.d, args.eps, xi=args.xi,
                    oracle_strategy=strategy, seed=args.seed)
    err = score(hyp, plant, dist, 100_000, np.random.SeedSequence(args.seed, spawn_key=(99,)))
    payload = hyp.to_json()
    payload["disagreement_estimate"] = err
    _write_json(payload, args.out)
    return EXIT_OK


def _cmd_learn_intersection(args) -> int:
    ss = np.random.SeedSequence(args.seed)
    s_plant, s_draw, s_adv = ss.spawn(3)
    dist = gaussian_descriptor(args.n, 2, args.eps)
    rng = np.random.default_rng(s_plant)
    q, _ = np.linalg.qr(rng.standard_normal((args.n, args.k)))
    plant = Intersection([LTF(q[:, i], args.theta_plant) for i in range(args.k)])
    pts = dist.sample(args.m, s_draw)
    clean = LabeledSampleSet(pts, plant.evaluate(pts).astype(np.float64))
    strategy = AdversaryStrategy(args.strategy)
    corrupted = corrupt(clean, plant, args.eps, strategy, dist, s_adv)
    source = make_corrupted_source(plant, dist, args.eps, strategy)
    hyp = learn_intersection(corrupted, args.k, args.eps, source=source,
                             delta_override=args.delta_override, seed=args.seed)
    err = score(hyp, plant, dist, 100_000, np.random.SeedSequence(args.seed, spawn_key=(99,)))
    payload = hyp.to_json()
    payload["disagreement_estimate"] = err
    _write_json(payload, args.out)
    return EXIT_OK


def _cmd_experiment(args) -> int:
    cfg = ExperimentConfig.from_json(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
    run_experiment(cfg, out=args.out)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="robust-chow",
                                     description="Robust Chow-parameter estimation and learners")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("chow", help="robust Chow estimate from a sample CSV")
    p.add_argument("--config", required=True, help="JSON with distribution descriptor")
    p.add_argument("--samples", help="CSV of labeled samples (overrides config)")
    p.add_argument("--eps", type=float, default=None)
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_chow)

    common = dict(n=20, m=100_000, eps=0.05, seed=0, strategy="chow_attack")

    p = sub.add_parser("learn-ltf", help="learn a halfspace from a corrupted synthetic plant")
    p.add_argument("--n", type=int, default=common["n"])
    p.add_argument("--m", type=int, default=common["m"])
    p.add_argument("--eps", type=float, default=common["eps"])
    p.add_argument("--strategy", default=common["strategy"])
    p.add_argument("--theta-plant", type=float, default=0.5, dest="theta_plant")
    p.add_argument("--seed", type=int, default=common["seed"])
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_learn_ltf)

    p = sub.add_parser("learn-ptf", help="learn a polynomial threshold function")
    p.add_argument("--n", type=int, default=8)
    p.add_argument("--d", type=int, default=2)
    p.add_argument("--m", type=int, default=common["m"])
    p.add_argument("--eps", type=float, default=common["eps"])
    p.add_argument("--xi", type=float, default=None)
    p.add_argument("--strategy", default=common["strategy"])
    p.add_argument("--plant-coeffs", default=None, dest="plant_coeffs",
                   help="JSON list of basis coefficients for the planted sign polynomial")
    p.add_argument("--seed", type=int, default=common["seed"])
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_learn_ptf)

    p = sub.add_parser("learn-intersection", help="learn an intersection of halfspaces")
    p.add_argument("--n", type=int, default=8)
    p.add_argument("--k", type=int, default=2)
    p.add_argument("--m", type=int, default=200_000)
    p.add_argument("--eps", type=float, default=0.02)
    p.add_argument("--delta-override", type=float, default=None, dest="delta_override")
    p.add_argument("--strategy", default="chow_attack")
    p.add_argument("--theta-plant", type=float, default=0.5, dest="theta_plant")
    p.add_argument("--seed", type=int, default=common["seed"])
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_learn_intersection)

    p = sub.add_parser("experiment", help="run a (strategy, eps, trial) sweep to CSV")
    p.add_argument("--config", required=True)
    p.add_argument("--out", default=None)
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=_cmd_experiment)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse uses exit code 2 for bad flags
        return int(exc.code or 0)
    try:
        return args.func(args)
    except (ConfigError, FileNotFoundError, json.JSONDecodeError, KeyError,
            ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except RobustChowError as exc:
        print(f"learner failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_LEARNER


if __name__ == "__main__":
    sys.exit(main())
