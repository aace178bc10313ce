"""Command line interface: hoflow verify|rate|train|sample|audit-net."""

import argparse
import os
import sys

from .config import ExperimentConfig
from .suites import (VERIFY_SUITES, load_model, run_pipeline, run_rate_study,
                     run_verify, save_model, write_points_csv)


def _load_cfg(args) -> ExperimentConfig:
    cfg = ExperimentConfig.load(args.config) if args.config else ExperimentConfig()
    if getattr(args, "seed", None) is not None:
        cfg.set("seed", args.seed)
    if getattr(args, "jobs", None) is not None:
        cfg.set("jobs", args.jobs)
    if getattr(args, "no_figures", False):
        cfg.set("figures", False)
    return cfg


def _common(sub, out_default="out"):
    sub.add_argument("--config", help="experiment config file")
    sub.add_argument("--out", default=out_default, help="output directory")
    sub.add_argument("--seed", type=int, default=None)
    sub.add_argument("--jobs", type=int,
                     default=int(os.environ.get("HOFLOW_JOBS", "1")))
    sub.add_argument("--no-figures", action="store_true")


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="hoflow",
                                 description="second-order flow matching "
                                             "verification harness")
    sp = ap.add_subparsers(dest="cmd", required=True)

    v = sp.add_parser("verify", help="run bound-verification suites")
    _common(v)
    v.add_argument("--suite", default=None,
                   help=f"comma list from {','.join(VERIFY_SUITES)}")

    r = sp.add_parser("rate", help="run approximation-rate studies")
    _common(r)

    t = sp.add_parser("train", help="train velocity/acceleration heads")
    _common(t)
    t.add_argument("--order", type=int, choices=(1, 2), default=None)

    s = sp.add_parser("sample", help="sample via the flow ODE")
    s.add_argument("--model", required=True)
    s.add_argument("--n", type=int, default=4096)
    s.add_argument("--steps", type=int, default=64)
    s.add_argument("--order", type=int, choices=(1, 2), default=1)
    s.add_argument("--seed", type=int, default=1)
    s.add_argument("--out", default="pts.csv")

    a = sp.add_parser("audit-net", help="print network complexity stats")
    a.add_argument("file")

    args = ap.parse_args(argv)

    if args.cmd == "verify":
        cfg = _load_cfg(args)
        suites = args.suite.split(",") if args.suite else None
        rep = run_verify(cfg, out_dir=args.out, suites=suites,
                         jobs=int(cfg["jobs"]))
        for line in rep.summary_lines():
            print(line)
        print(f"report: {os.path.join(args.out, 'report.json')}"
              f"  (config {rep.config_hash})")
        return 0 if rep.all_passed else 1

    if args.cmd == "rate":
        cfg = _load_cfg(args)
        rep = run_rate_study(cfg, out_dir=args.out, jobs=int(cfg["jobs"]))
        for line in rep.summary_lines():
            print(line)
        return 0 if not rep.errors else 1

    if args.cmd == "train":
        cfg = _load_cfg(args)
        if args.order is not None:
            cfg.set("train.order", args.order)
        rep = run_pipeline(cfg, out_dir=args.out)
        for row in rep.tables.get("distances", []):
            print(f"order={row['order']} steps={row['steps']:3d} "
                  f"W1={row['W1']:.4f} W2={row['W2']:.4f}")
        for e in rep.errors:
            print("ERROR:", e)
        print(f"model: {os.path.join(args.out, 'model.txt')}")
        return 0 if not rep.errors else 1

    if args.cmd == "sample":
        from .suites import sample_ode
        model = load_model(args.model)
        pts = sample_ode(model, args.n, args.steps, args.order, args.seed)
        write_points_csv(pts, args.out)
        print(f"wrote {args.n} points to {args.out}")
        return 0

    if args.cmd == "audit-net":
        from .relunet import ReluNetwork, network_stats
        with open(args.file) as fh:
            text = fh.read()
        nets = []
        if text.startswith("hoflow-model"):
            model = load_model(args.file)
            nets.append(("velocity", model.velocity_net.to_relunet()))
            if model.accel_net is not None:
                nets.append(("accel", model.accel_net.to_relunet()))
        else:
            nets.append(("network", ReluNetwork.loads(text)))
        for name, net in nets:
            L, W, S, B = network_stats(net)
            print(f"{name}: L={L} widths={W} S={S} B={B:.6g}")
        return 0

    return 2


if __name__ == "__main__":
    sys.exit(main())
