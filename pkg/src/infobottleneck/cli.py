"""
Command line entry point: one subcommand per stage.

    infobottleneck generate --world world.json --out data/
    infobottleneck sweep --config sweep.json [--workers N] [--seed-override S]
    infobottleneck probes --config sweep.json
    infobottleneck render --report runs/vision/
    infobottleneck inspect <path>

Exit status is 0 on success, 2 for an invalid configuration and 1 for any
other error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .data import decode_f32, load_dataset
from .errors import ConfigError, InfoBottleneckError
from .evaluation.curves import loads_records

EXIT_OK, EXIT_ERROR, EXIT_CONFIG = 0, 1, 2


def _load_json(path, what):
    try:
        return json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise ConfigError(f"{what} file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: line {exc.lineno}: {exc.msg}") from None


def cmd_generate(args) -> int:
    from .synthetic import SyntheticWorldConfig, generate_text_world, generate_vision_world
    from .data import save_dataset

    d = _load_json(args.world, "world config")
    if not isinstance(d, dict):
        raise ConfigError("world config must be a JSON object")
    if args.seed_override is not None:
        d["seed"] = args.seed_override
    try:
        cfg = SyntheticWorldConfig.from_dict(d)
    except TypeError as exc:
        raise ConfigError(f"invalid world settings: {exc}") from None
    gen = generate_vision_world if cfg.kind == "shapes-image" else generate_text_world
    dataset, truth = gen(cfg)
    out = Path(args.out)
    save_dataset(dataset, out)
    truth.save(out / "truth")
    print(f"wrote {cfg.kind} world ({dataset.num_examples} examples) to {out}")
    return EXIT_OK


def _sweep_config(args):
    from .harness import SweepConfig

    cfg = SweepConfig.load(args.config)
    if args.seed_override is not None:
        cfg = cfg.with_seeds([args.seed_override])
    return cfg


def cmd_sweep(args) -> int:
    from .harness import run_sweep

    cfg = _sweep_config(args)
    run_sweep(cfg, workers=args.workers)
    print(f"wrote {cfg.output_dir / 'curve.csv'}")
    return EXIT_OK


def cmd_probes(args) -> int:
    from .harness import run_probes

    cfg = _sweep_config(args)
    run_probes(cfg)
    print(f"wrote {cfg.output_dir / 'probes.csv'}")
    return EXIT_OK


def cmd_render(args) -> int:
    from .harness import render_report

    for p in render_report(args.report):
        print(f"wrote {p}")
    return EXIT_OK


def inspect_path(path: Path) -> str:
    """Human-readable description of a dataset, bundle, sweep directory,
    payload or config file."""
    lines = []
    if path.is_dir() and (path / "records.jsonl").exists():
        from .harness.render import summary_text

        rep = loads_records((path / "records.jsonl").read_text())
        if (path / "run.json").exists():
            run = json.loads((path / "run.json").read_text())
            lines.append(f"sweep run {run['config_hash'][:16]} (artifact {run['artifact_version']})")
        lines.append(summary_text(rep).rstrip("\n"))
    elif path.is_dir() and (path / "manifest.json").exists():
        m = json.loads((path / "manifest.json").read_text())
        kind = m.get("kind")
        lines.append(f"{kind} (schema {m.get('schema_version')})")
        if kind == "paired_dataset":
            ds = load_dataset(path)
            lines.append(f"  examples: {ds.num_examples}, stimuli: {ds.stimuli.kind}")
            for s in ds.streams:
                lines.append(f"  stream {s.name}: {s.channels} channels x {s.steps} steps")
            sp = ds.splits
            lines.append(f"  splits: train {len(sp.train)}, validation {len(sp.validation)}, test {len(sp.test)}")
            if ds.meta.get("world"):
                lines.append("  world: " + json.dumps(ds.meta["world"], sort_keys=True))
        else:
            for name, e in sorted(m.get("arrays", {}).items()):
                lines.append(f"  {name}: shape {tuple(e.get('shape', ()))}")
            meta = m.get("meta", {})
            for k in sorted(meta):
                if isinstance(meta[k], (int, float, str, bool)) or meta[k] is None:
                    lines.append(f"  {k}: {meta[k]}")
    elif path.is_dir() and (path / "run.json").exists():
        run = json.loads((path / "run.json").read_text())
        lines.append(f"incomplete sweep {run['config_hash'][:16]}: {len(list(path.glob('cells/*/result.json')))} cells done")
    elif path.is_file() and path.suffix == ".f32":
        a = decode_f32(path.read_bytes(), path.name).astype(np.float64)
        lines.append(f"f32 payload {a.shape}: min {a.min():.6g}, max {a.max():.6g}, mean {a.mean():.6g}")
    elif path.is_file() and path.suffix == ".json":
        from .harness import SweepConfig

        cfg = SweepConfig.load(path)
        lines.append(f"sweep config, hash {cfg.config_hash()}")
        lines.append(json.dumps(cfg.to_dict(), sort_keys=True, indent=1))
    else:
        raise InfoBottleneckError(f"nothing to inspect at {path}")
    return "\n".join(lines)


def cmd_inspect(args) -> int:
    print(inspect_path(Path(args.path)))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="infobottleneck", description="Linear bottleneck analysis of reconstruction pipelines.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)
    g = sub.add_parser("generate", help="write a synthetic world with ground truth")
    g.add_argument("--world", required=True, help="world config (JSON)")
    g.add_argument("--out", required=True, help="output directory")
    g.add_argument("--seed-override", type=int, help="replace the world seed")
    g.set_defaults(func=cmd_generate)
    for name, func, hlp in (("sweep", cmd_sweep, "run or resume a sweep"),
                            ("probes", cmd_probes, "feature probes on a finished sweep")):
        s = sub.add_parser(name, help=hlp)
        s.add_argument("--config", required=True, help="sweep config (JSON)")
        s.add_argument("--seed-override", type=int, help="run with this single seed instead of the config's")
        if name == "sweep":
            s.add_argument("--workers", type=int, default=1, help="cells run in parallel")
        s.set_defaults(func=func)
    r = sub.add_parser("render", help="render figures and summary.txt")
    r.add_argument("--report", required=True, help="sweep output directory")
    r.set_defaults(func=cmd_render)
    i = sub.add_parser("inspect", help="describe a dataset, sweep, payload or config")
    i.add_argument("path")
    i.set_defaults(func=cmd_inspect)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if getattr(args, "workers", 1) is not None and getattr(args, "workers", 1) < 1:
        print("error: --workers must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"invalid config: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (InfoBottleneckError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
