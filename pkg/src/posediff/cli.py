"""Command-line interface: ``posediff <command> [--config run.yaml] [flags]``.

Values resolve as built-in defaults, then the YAML config file, then flags.
Each command writes ``<output>.config.yaml`` (the resolved configuration) and
``<output>.telemetry.json`` (timings and step counts) next to its main output,
so the main outputs depend only on the configuration and seed.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np
import torch
import yaml

from . import evaluate as EV
from . import net as NN
from . import seeding
from . import synth as SY
from . import tracker as TR
from .errors import CheckpointError, ConfigError, DatasetError, PoseDiffError
from .estimator import AggregationConfig, estimate, pose_errors
from .sampler import OdeConfig, log_likelihood_ode, sample_candidates

DEFAULTS: dict[str, dict] = {
    "gen-data": {"out": None, "seed": 0, "counts": {c: 100 for c in SY.CATEGORIES}, "n_points": 1024,
                 "workers": 1},
    "gen-trajectory": {"out": None, "seed": 0, "category": "box", "frames": 50, "n_points": 1024,
                       "deg_per_frame": 2.0, "trans_per_frame": 0.004, "static": False},
    "train": {"role": None, "dataset": None, "out": None, "score": None, "seed": 0, "steps": 1000,
              "lr": 1e-4, "batch_size": 192, "poses_per_cloud": 4, "lr_decay_final": 1.0,
              "checkpoint_every": 100, "point_layers": [64, 128, 256], "head_hidden": 256,
              "parameterization": "noise", "weighting": "sigma2", "antithetic": False},
    "estimate": {"dataset": None, "score": None, "energy": None, "out": None, "seed": 0, "K": 50, "delta": 0.6,
                 "ranking": "energy", "method": "rk45-adaptive", "abs_tol": 1e-5, "rel_tol": 1e-5,
                 "euler_steps": 500, "limit": None, "workers": 1,
                 "thresholds": ["5deg2cm", "5deg5cm", "10deg2cm", "10deg5cm"]},
    "track": {"trajectory": None, "score": None, "energy": None, "out": None, "seed": 0, "init": "gt-perturbed",
              "K": 50, "delta": 0.6, "perturb_deg": 5.0, "perturb_trans": 0.02, "paper_faithful": False,
              "method": "rk45-adaptive", "abs_tol": 1e-5, "rel_tol": 1e-5, "euler_steps": 500, "cold": False},
    "likelihood-check": {"dataset": None, "score": None, "energy": None, "out": None, "seed": 0, "scenes": 20,
                         "K": 50, "divergence": "exact", "n_probes": 64, "abs_tol": 1e-5, "rel_tol": 1e-5},
    "ablate": {"dataset": None, "score": None, "energy": None, "out": None, "seed": 0, "limit": None,
               "Ks": [10, 50, 100], "deltas": [0.2, 0.4, 0.6, 0.8, 1.0], "threshold": "10deg2cm",
               "abs_tol": 1e-5, "rel_tol": 1e-5},
}

REQUIRED = {
    "gen-data": ["out"], "gen-trajectory": ["out"], "train": ["role", "dataset", "out"],
    "estimate": ["dataset", "score", "energy", "out"], "track": ["trajectory", "score", "energy", "out"],
    "likelihood-check": ["dataset", "score", "energy", "out"], "ablate": ["dataset", "score", "energy", "out"],
}
INPUT_FILES = ("dataset", "score", "energy", "trajectory")


def _flag(key: str) -> str:
    return "--" + key.replace("_", "-")


def _counts(text: str) -> dict[str, int]:
    out = {}
    for part in text.split(","):
        k, _, v = part.partition("=")
        out[k.strip()] = int(v)
    return out


def _csv_list(kind):
    return lambda text: [kind(x) for x in text.split(",")]


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="posediff", description="Diffusion-based category-level pose estimation.")
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, help_text):
        sp = sub.add_parser(name, help=help_text)
        sp.add_argument("--config", type=Path, help="YAML file with values for this command")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--out", type=Path)
        return sp

    g = add("gen-data", "generate a synthetic dataset and manifest")
    g.add_argument("--counts", type=_counts, help="e.g. cylinder=100,box=100")
    g.add_argument("--n-points", type=int)
    g.add_argument("--workers", type=int)

    g = add("gen-trajectory", "generate a smooth synthetic trajectory")
    g.add_argument("--category")
    g.add_argument("--frames", type=int)
    g.add_argument("--n-points", type=int)
    g.add_argument("--deg-per-frame", type=float)
    g.add_argument("--trans-per-frame", type=float)
    g.add_argument("--static", action="store_true", default=None)

    g = add("train", "train the score or energy network")
    g.add_argument("--role", choices=NN.ROLES)
    g.add_argument("--dataset", type=Path)
    g.add_argument("--score", type=Path, help="score checkpoint used to warm-start energy training")
    g.add_argument("--steps", type=int)
    g.add_argument("--lr", type=float)
    g.add_argument("--batch-size", type=int)
    g.add_argument("--poses-per-cloud", type=int)
    g.add_argument("--lr-decay-final", type=float)
    g.add_argument("--parameterization", choices=NN.PARAMETERIZATIONS)
    g.add_argument("--weighting", choices=NN.WEIGHTINGS)
    g.add_argument("--antithetic", action="store_true", default=None, help="pair each noise draw with its negation")

    for name, help_text in [("estimate", "estimate poses for every scene of a dataset"),
                            ("track", "track an object through a trajectory file"),
                            ("likelihood-check", "compare energy ranking with ODE likelihood ranking"),
                            ("ablate", "K/delta grid and ranking-mode comparison")]:
        g = add(name, help_text)
        g.add_argument("--score", type=Path)
        g.add_argument("--energy", type=Path)
        g.add_argument("--abs-tol", type=float)
        g.add_argument("--rel-tol", type=float)
        if name == "track":
            g.add_argument("--trajectory", type=Path)
            g.add_argument("--init", choices=("gt", "gt-perturbed"))
            g.add_argument("--paper-faithful", action="store_true", default=None)
            g.add_argument("--cold", action="store_true", default=None, help="independent cold start per frame")
        else:
            g.add_argument("--dataset", type=Path)
        if name in ("estimate", "track"):
            g.add_argument("--K", type=int)
            g.add_argument("--delta", type=float)
            g.add_argument("--method", choices=("rk45-adaptive", "euler-fixed"))
            g.add_argument("--euler-steps", type=int)
        if name == "estimate":
            g.add_argument("--ranking", choices=("energy", "random", "gt-oracle"))
            g.add_argument("--limit", type=int)
            g.add_argument("--workers", type=int)
        if name == "likelihood-check":
            g.add_argument("--scenes", type=int)
            g.add_argument("--K", type=int)
            g.add_argument("--divergence", choices=("exact", "hutchinson"))
            g.add_argument("--n-probes", type=int)
        if name == "ablate":
            g.add_argument("--limit", type=int)
            g.add_argument("--Ks", type=_csv_list(int))
            g.add_argument("--deltas", type=_csv_list(float))
            g.add_argument("--threshold")
    return p


def resolve(args: argparse.Namespace) -> dict:
    """Merge defaults, config file and flags; raise ConfigError listing every problem."""
    cmd = args.command
    cfg = dict(DEFAULTS[cmd])
    problems = []
    if args.config is not None:
        try:
            loaded = yaml.safe_load(Path(args.config).read_text()) or {}
        except (OSError, yaml.YAMLError) as exc:
            raise ConfigError([f"--config: cannot read {args.config}: {exc}"]) from exc
        if not isinstance(loaded, dict):
            raise ConfigError(["--config: expected a mapping at the top level"])
        for k, v in loaded.items():
            key = k.replace("-", "_")
            if key not in cfg:
                problems.append(f"--config: unknown key {k!r} for {cmd}")
            else:
                cfg[key] = v
    for k, v in vars(args).items():
        if k in cfg and v is not None:
            cfg[k] = v
    for k in REQUIRED[cmd]:
        if cfg.get(k) is None:
            problems.append(f"{_flag(k)} is required")
    for k in INPUT_FILES:
        if cfg.get(k) is not None and not Path(cfg[k]).is_file():
            problems.append(f"{_flag(k)}: file not found: {cfg[k]}")
    if cmd == "train" and cfg.get("role") == "energy" and cfg.get("score") is None:
        problems.append("--score is required to warm-start energy training")
    for k in ("K", "steps", "batch_size", "frames", "n_points", "scenes", "workers", "euler_steps"):
        if k in cfg and cfg[k] is not None and int(cfg[k]) < 1:
            problems.append(f"{_flag(k)} must be >= 1")
    if "delta" in cfg and not 0 < float(cfg["delta"]) <= 1:
        problems.append("--delta must lie in (0, 1]")
    elif "delta" in cfg and "K" in cfg and int(float(cfg["delta"]) * int(cfg["K"])) < 1:
        problems.append("--delta times --K must keep at least one candidate")
    if cmd == "gen-data":
        bad = [c for c in cfg["counts"] if c not in SY.CATEGORIES]
        if bad:
            problems.append(f"--counts: unknown categories {bad}")
        if any(int(v) < 1 for v in cfg["counts"].values()):
            problems.append("--counts: every count must be >= 1")
    if cmd == "gen-trajectory" and cfg["category"] not in SY.CATEGORIES:
        problems.append(f"--category must be one of {SY.CATEGORIES}")
    if problems:
        raise ConfigError(problems)
    return {k: (str(v) if isinstance(v, Path) else v) for k, v in cfg.items()}


def _sidecars(out: Path, cfg: dict, command: str, telemetry: dict) -> None:
    snap = {"command": command, **cfg}
    Path(str(out) + ".config.yaml").write_text(yaml.safe_dump(snap, sort_keys=True))
    Path(str(out) + ".telemetry.json").write_text(json.dumps(telemetry, indent=2, sort_keys=True, default=float) + "\n")


def _load_net(path: str, flag: str) -> NN.PoseNet:
    try:
        return NN.load_checkpoint(path)
    except CheckpointError as exc:
        raise CheckpointError(f"{flag}: {exc}") from exc


def _ode(cfg: dict) -> OdeConfig:
    return OdeConfig(cfg.get("method", "rk45-adaptive"), float(cfg["abs_tol"]), float(cfg["rel_tol"]),
                     int(cfg.get("euler_steps", 500)))


def _scenes(cfg: dict):
    scenes = SY.load_dataset(cfg["dataset"])
    if not scenes:
        raise DatasetError(f"--dataset: {cfg['dataset']} holds no records")
    limit = cfg.get("limit")
    return scenes[:int(limit)] if limit else scenes


# ------------------------------------------------------------------ commands

def cmd_gen_data(cfg: dict) -> dict:
    spec = SY.DatasetSpec({k: int(v) for k, v in cfg["counts"].items()}, int(cfg["seed"]),
                          SY.RenderConfig(n_points=int(cfg["n_points"])))
    t0 = time.perf_counter()
    manifest = SY.generate_dataset(spec, cfg["out"], workers=int(cfg["workers"]))
    return {"records": manifest["records"], "wall_s": time.perf_counter() - t0}


def cmd_gen_trajectory(cfg: dict) -> dict:
    frames = SY.make_trajectory(cfg["category"], int(cfg["seed"]), int(cfg["frames"]),
                                SY.RenderConfig(n_points=int(cfg["n_points"])), float(cfg["deg_per_frame"]),
                                float(cfg["trans_per_frame"]), bool(cfg["static"]))
    SY.write_trajectory(frames, cfg["out"])
    return {"frames": len(frames)}


def cmd_train(cfg: dict) -> dict:
    scenes = SY.load_dataset(cfg["dataset"])
    if not scenes:
        raise DatasetError(f"--dataset: {cfg['dataset']} holds no records")
    data = NN.PoseDataset([s.cloud for s in scenes], [s.gt_pose for s in scenes])
    tcfg = NN.TrainingConfig(batch_size=int(cfg["batch_size"]), lr=float(cfg["lr"]), steps=int(cfg["steps"]),
                             seed=int(cfg["seed"]), poses_per_cloud=int(cfg["poses_per_cloud"]),
                             checkpoint_every=int(cfg["checkpoint_every"]),
                             lr_decay_final=float(cfg["lr_decay_final"]), weighting=cfg["weighting"],
                             antithetic=bool(cfg["antithetic"]))
    ncfg = NN.NetConfig(point_layers=tuple(int(x) for x in cfg["point_layers"]), head_hidden=int(cfg["head_hidden"]),
                        parameterization=cfg["parameterization"])
    t0 = time.perf_counter()
    if cfg["role"] == "score":
        net, log = NN.train_score(data, tcfg, net_config=ncfg)
    else:
        net, log = NN.train_energy(data, tcfg, init_from=_load_net(cfg["score"], "--score"))
    NN.save_checkpoint(net, cfg["out"])
    lines = [f"# format_version={EV.CSV_FORMAT_VERSION}", "step,loss"]
    lines += [f"{i},{v:.9g}" for i, v in enumerate(log.losses)]
    Path(str(cfg["out"]) + ".loss.csv").write_text("\n".join(lines) + "\n")
    first, last = log.window_means()
    return {"loss_first_window": first, "loss_last_window": last, "wall_s": time.perf_counter() - t0}


def _estimate_one(job):
    i, s, score_path, energy_path, cfg = job
    torch.set_num_threads(1)
    score, energy = NN.load_checkpoint(score_path), NN.load_checkpoint(energy_path)
    seed = seeding.child_seed(int(cfg["seed"]), "scene", i)
    agg = AggregationConfig(int(cfg["K"]), float(cfg["delta"]), cfg["ranking"])
    res = estimate(s.cloud, score, energy, agg, _ode(cfg), seed=seed, gt=s.gt_pose, sym=s.symmetry)
    r, t = pose_errors(res.pose, s.gt_pose, s.symmetry)
    rec = {"index": i, "category": s.category, "pred_rot6d": res.pose[:6].tolist(),
           "pred_trans": res.pose[6:].tolist(), "gt_rot6d": s.gt_pose[:6].tolist(),
           "gt_trans": s.gt_pose[6:].tolist(), "sym": s.symmetry.to_dict(), "rot_err_deg": r,
           "trans_err_cm": t, "candidates": res.candidates.candidates.tolist()}
    tel = {"index": i, "mean_accepted": res.telemetry["mean_accepted"], "M": res.telemetry["M"],
           "kept_dispersion_deg": res.telemetry["kept_dispersion_deg"]}
    return json.dumps(rec, separators=(",", ":")), tel, (res.pose, s.gt_pose, s.symmetry, s.category)


def cmd_estimate(cfg: dict) -> dict:
    scenes = _scenes(cfg)
    _load_net(cfg["score"], "--score"), _load_net(cfg["energy"], "--energy")
    thresholds = [EV.MetricThreshold.parse(x) for x in cfg["thresholds"]]
    jobs = [(i, s, cfg["score"], cfg["energy"], cfg) for i, s in enumerate(scenes)]
    t0 = time.perf_counter()
    if int(cfg["workers"]) > 1:
        with ProcessPoolExecutor(int(cfg["workers"])) as ex:
            outs = list(ex.map(_estimate_one, jobs))
    else:
        outs = [_estimate_one(j) for j in jobs]
    Path(cfg["out"]).write_text("".join(o[0] + "\n" for o in outs))
    report = EV.evaluate_results([EV.PoseResult(*o[2]) for o in outs], thresholds,
                                 config={"K": cfg["K"], "delta": cfg["delta"], "ranking": cfg["ranking"]})
    report.to_csv(str(cfg["out"]) + ".report.csv")
    return {"scenes": [o[1] for o in outs], "wall_s": time.perf_counter() - t0}


def cmd_track(cfg: dict) -> dict:
    traj = TR.Trajectory.load(cfg["trajectory"])
    score, energy = _load_net(cfg["score"], "--score"), _load_net(cfg["energy"], "--energy")
    tcfg = TR.TrackerConfig(K=int(cfg["K"]), delta=float(cfg["delta"]), ode=_ode(cfg),
                            paper_faithful=bool(cfg["paper_faithful"]), perturb_deg=float(cfg["perturb_deg"]),
                            perturb_trans=float(cfg["perturb_trans"]))
    t0 = time.perf_counter()
    seed = int(cfg["seed"])
    if cfg["cold"]:
        res = TR.cold_sequence(traj, score, energy, tcfg, seed)
    else:
        res = TR.track_sequence(traj, cfg["init"], score, energy, tcfg, seed)
    lines = [f"# format_version={EV.CSV_FORMAT_VERSION}",
             "frame,r6_0,r6_1,r6_2,r6_3,r6_4,r6_5,t_0,t_1,t_2,rot_err_deg,trans_err_cm,mean_accepted,fallback"]
    for k, p in enumerate(res.estimates):
        vals = ",".join(f"{v:.9g}" for v in p)
        lines.append(f"{k},{vals},{res.rot_err[k]:.6f},{res.trans_err_cm[k]:.6f},{res.steps[k]:.6f},"
                     f"{int(res.fallbacks[k])}")
    Path(cfg["out"]).write_text("\n".join(lines) + "\n")
    TR.write_summary_csv([res], str(cfg["out"]) + ".summary.csv")
    return {"summary": res.summary(), "wall_s": time.perf_counter() - t0}


def kendall_audit(scenes, score, energy, K: int, seed: int, divergence: str = "exact", n_probes: int = 64,
                  ode_cfg: OdeConfig | None = None) -> list[dict]:
    """Per-scene Kendall tau-b between energy and ODE log-likelihood over K candidates."""
    from scipy.stats import kendalltau

    from .sampler import bind

    out = []
    for i, s in enumerate(scenes):
        sseed = seeding.child_seed(seed, "scene", i)
        cands = sample_candidates(score, s.cloud, K, ode_cfg, seed=sseed)
        e = bind(energy, s.cloud).energy(cands.candidates, np.full(K, energy.schedule.eps_min))
        ll = log_likelihood_ode(score, s.cloud, cands.candidates, ode_cfg, divergence, n_probes, seed=sseed)
        tau = float(kendalltau(e, ll, variant="b").statistic)
        out.append({"scene": i, "category": s.category, "kendall_tau_b": tau})
    return out


def cmd_likelihood_check(cfg: dict) -> dict:
    scenes = SY.load_dataset(cfg["dataset"])[:int(cfg["scenes"])]
    if not scenes:
        raise DatasetError(f"--dataset: {cfg['dataset']} holds no records")
    score, energy = _load_net(cfg["score"], "--score"), _load_net(cfg["energy"], "--energy")
    t0 = time.perf_counter()
    rows = kendall_audit(scenes, score, energy, int(cfg["K"]), int(cfg["seed"]), cfg["divergence"],
                         int(cfg["n_probes"]), OdeConfig(abs_tol=float(cfg["abs_tol"]), rel_tol=float(cfg["rel_tol"])))
    taus = [r["kendall_tau_b"] for r in rows]
    lines = [f"# format_version={EV.CSV_FORMAT_VERSION}", "scene,category,kendall_tau_b"]
    lines += [f"{r['scene']},{r['category']},{r['kendall_tau_b']:.6f}" for r in rows]
    lines.append(f"mean,all,{float(np.mean(taus)):.6f}")
    Path(cfg["out"]).write_text("\n".join(lines) + "\n")
    return {"mean_tau_b": float(np.mean(taus)), "wall_s": time.perf_counter() - t0}


def cmd_ablate(cfg: dict) -> dict:
    scenes = _scenes(cfg)
    score, energy = _load_net(cfg["score"], "--score"), _load_net(cfg["energy"], "--energy")
    Ks = [int(k) for k in cfg["Ks"]]
    th = EV.MetricThreshold.parse(cfg["threshold"])
    t0 = time.perf_counter()
    ode_cfg = OdeConfig(abs_tol=float(cfg["abs_tol"]), rel_tol=float(cfg["rel_tol"]))
    pool = EV.collect_candidates(scenes, score, energy, max(Ks), ode_cfg, int(cfg["seed"]))
    table = EV.ablation_grid(pool, Ks, [float(d) for d in cfg["deltas"]], th)
    out = Path(cfg["out"])
    table.to_csv(out)
    K_cmp = 50 if 50 in Ks else max(Ks)
    EV.write_comparison_csv(EV.ranking_comparison(pool, K_cmp, 0.6, th), str(out) + ".ranking.csv")
    return {"scenes": len(pool), "wall_s": time.perf_counter() - t0}


COMMANDS = {"gen-data": cmd_gen_data, "gen-trajectory": cmd_gen_trajectory, "train": cmd_train,
            "estimate": cmd_estimate, "track": cmd_track, "likelihood-check": cmd_likelihood_check,
            "ablate": cmd_ablate}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    # fixed intra-op threading keeps float reductions, and therefore outputs, reproducible
    torch.set_num_threads(1)
    stage = "config"
    try:
        cfg = resolve(args)
        stage = args.command
        telemetry = COMMANDS[args.command](cfg)
        _sidecars(Path(cfg["out"]), cfg, args.command, telemetry)
    except ConfigError as exc:
        print(f"error [config]: {exc}", file=sys.stderr)
        return exc.exit_code
    except PoseDiffError as exc:
        print(f"error [{exc.stage or stage}]: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"error [{stage}]: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
