"""Command-line interface.

Subcommands: filter (apply the reveal pipeline), evaluate (score predictions),
synth (generate a synthetic set, optionally with the oracle study), query
(batch-send a manifest to a vision-chat endpoint), report (re-render a saved
report as a table). Option precedence is flag > --config file > built-in
default, and the effective configuration is echoed into every output
directory for provenance.
"""

from __future__ import annotations

import argparse
import json
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, fields
from pathlib import Path

from . import imageio, metrics, synth
from .client import EndpointConfig, run_evaluation
from .dataset import Manifest, load_manifest, load_predictions
from .imaging import replicate_to_rgb
from .pipeline import FilterConfig, reveal, validate_config
from .synth import SynthSpec, benefit_study, generate_set

IMAGE_SUFFIXES = (".png", ".ppm", ".pgm")


@dataclass(frozen=True)
class RunConfig:
    """Merged view of all tool settings for one invocation."""

    command: str
    root: Path
    jobs: int
    filter: FilterConfig
    endpoint: EndpointConfig | None = None
    synth: SynthSpec | None = None

    def to_json(self) -> bytes:
        payload = {
            "command": self.command,
            "root": str(self.root),
            "jobs": self.jobs,
            "filter": asdict(self.filter),
            "endpoint": asdict(self.endpoint) if self.endpoint else None,
            "synth": asdict(self.synth) if self.synth else None,
        }
        return (json.dumps(payload, sort_keys=True, indent=2) + "\n").encode("utf-8")


def _load_config_file(path: str | None) -> dict:
    if not path:
        return {}
    with open(path, encoding="utf-8") as fh:
        cfg = json.load(fh)
    if not isinstance(cfg, dict):
        raise ValueError(f"{path}: config file must hold a JSON object")
    return cfg


def _merged(cls, section: dict, args: argparse.Namespace, names: dict[str, str]):
    """Build a config dataclass honoring flag > config-file > default."""
    values = {}
    for f in fields(cls):
        if f.name in section:
            values[f.name] = section[f.name]
        arg = names.get(f.name, f.name)
        flag = getattr(args, arg, None)
        if flag is not None:
            values[f.name] = flag
    return cls(**values)


def _filter_config(args, file_cfg) -> FilterConfig:
    cfg = _merged(FilterConfig, file_cfg.get("filter", {}), args, {})
    validate_config(cfg)
    return cfg


def _echo_config(out_dir: Path, cfg: RunConfig) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "effective-config.json").write_bytes(cfg.to_json())


def _filter_one(src: Path, dst: Path, cfg: FilterConfig, replicate3: bool) -> None:
    img = reveal(imageio.read_image(src), cfg)
    if replicate3:
        img = replicate_to_rgb(img)
    dst.parent.mkdir(parents=True, exist_ok=True)
    imageio.write_image(dst, img)


def _out_name(rel: Path, replicate3: bool) -> Path:
    # reveal() output is single-channel, which PPM cannot hold
    if rel.suffix.lower() == ".ppm" and not replicate3:
        return rel.with_suffix(".pgm")
    if rel.suffix.lower() == ".pgm" and replicate3:
        return rel.with_suffix(".ppm")
    return rel


def cmd_filter(args) -> int:
    file_cfg = _load_config_file(args.config)
    cfg = _filter_config(args, file_cfg)
    root = Path(args.root)
    out_dir = Path(args.output)
    jobs = args.jobs or 1

    tasks: list[tuple[Path, Path]] = []
    if args.manifest:
        manifest = load_manifest(root / args.manifest)
        for rec in manifest.records:
            rel = Path(rec.image_path)
            tasks.append((root / rel, out_dir / _out_name(rel, args.replicate3)))
    else:
        src = root / args.input
        if src.is_dir():
            for p in sorted(src.rglob("*")):
                if p.suffix.lower() in IMAGE_SUFFIXES:
                    rel = p.relative_to(src)
                    tasks.append((p, out_dir / _out_name(rel, args.replicate3)))
        else:
            tasks.append((src, out_dir / _out_name(Path(src.name), args.replicate3)))

    _echo_config(out_dir, RunConfig("filter", root, jobs, cfg))
    failures: list[tuple[Path, str]] = []

    def run(task: tuple[Path, Path]):
        src, dst = task
        try:
            _filter_one(src, dst, cfg, args.replicate3)
        except Exception as exc:
            return (src, str(exc))
        return None

    with ThreadPoolExecutor(max_workers=jobs) as pool:
        for res in pool.map(run, tasks):
            if res is not None:
                failures.append(res)

    ok = len(tasks) - len(failures)
    print(f"{ok} ok, {len(failures)} failed")
    for src, err in failures:
        print(f"failed: {src}: {err}", file=sys.stderr)
    return 1 if failures else 0


def cmd_evaluate(args) -> int:
    root = Path(args.root)
    manifest = load_manifest(root / args.manifest)
    predictions = load_predictions(root / args.predictions)
    report = metrics.score_predictions(manifest, predictions, args.kind)
    out_dir = Path(args.output)
    _echo_config(out_dir, RunConfig("evaluate", root, 1, _filter_config(args, _load_config_file(args.config))))
    (out_dir / "report.json").write_bytes(metrics.render_canonical(report))
    table = metrics.render_table(report)
    (out_dir / "report.txt").write_text(table, encoding="utf-8")
    print(table, end="")
    return 0


def cmd_synth(args) -> int:
    file_cfg = _load_config_file(args.config)
    spec = _merged(SynthSpec, file_cfg.get("synth", {}), args,
                   {"class_count": "classes", "no_illusion_fraction": "no_illusion_fraction"})
    filter_cfg = _filter_config(args, file_cfg)
    out_dir = Path(args.output)
    manifest = generate_set(spec, args.n, out_dir)
    _echo_config(out_dir, RunConfig("synth", Path(args.root), 1, filter_cfg, synth=spec))
    print(f"wrote {len(manifest.records)} samples to {out_dir}")
    if args.study:
        result = benefit_study(spec, args.n, filter_cfg)
        lines = [
            f"{'':<12}{'unfiltered':>12}{'filtered':>12}",
            f"{'accuracy':<12}{result.unfiltered_accuracy:>12.2f}{result.filtered_accuracy:>12.2f}",
            f"gap: {result.gap:.2f} percentage points over {result.total} samples",
        ]
        table = "\n".join(lines) + "\n"
        payload = {"total": result.total,
                   "unfiltered_correct": result.unfiltered_correct,
                   "filtered_correct": result.filtered_correct,
                   "unfiltered_accuracy": result.unfiltered_accuracy,
                   "filtered_accuracy": result.filtered_accuracy,
                   "gap": result.gap}
        (out_dir / "study.json").write_bytes(
            (json.dumps(payload, sort_keys=True, indent=2) + "\n").encode("utf-8"))
        (out_dir / "study.txt").write_text(table, encoding="utf-8")
        print(table, end="")
    return 0


def cmd_query(args) -> int:
    file_cfg = _load_config_file(args.config)
    endpoint = _merged(EndpointConfig, file_cfg.get("endpoint", {}), args,
                       {"model_name": "model", "auth_token_env": "auth_env"})
    filter_cfg = _filter_config(args, file_cfg)
    root = Path(args.root)
    manifest = load_manifest(root / args.manifest)
    output = Path(args.output)
    summary = run_evaluation(manifest, args.variant, endpoint, output,
                             images_root=root, filter_config=filter_cfg,
                             replicate_channels=args.replicate3)
    _echo_config(output.parent, RunConfig("query", root, endpoint.max_concurrent,
                                          filter_cfg, endpoint=endpoint))
    print(f"{summary.requested} new requests, {summary.succeeded} succeeded, "
          f"{summary.failed} failed, {summary.skipped} skipped")
    for sid, reason in summary.failures:
        print(f"failed: {sid}: {reason}", file=sys.stderr)
    return 1 if summary.failed else 0


def cmd_report(args) -> int:
    report = metrics.parse_canonical(Path(args.input).read_bytes())
    print(metrics.render_table(report), end="")
    return 0


def _add_filter_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--gaussian-ksize", dest="gaussian_ksize", type=int)
    p.add_argument("--box-kw", dest="box_kw", type=int)
    p.add_argument("--box-kh", dest="box_kh", type=int)
    p.add_argument("--median-ksize", dest="median_ksize", type=int)


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--root", default=".", help="base directory for relative paths")
    p.add_argument("--config", help="JSON config file (flag > file > default)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="squint")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("filter", help="apply the reveal pipeline to images")
    grp = p.add_mutually_exclusive_group(required=True)
    grp.add_argument("--input", help="image file or directory")
    grp.add_argument("--manifest", help="manifest whose images get filtered")
    p.add_argument("--output", required=True)
    p.add_argument("--replicate3", action="store_true",
                   help="write 3-channel output for APIs that reject grayscale")
    p.add_argument("--jobs", type=int, default=None)
    _add_filter_flags(p)
    _add_common(p)
    p.set_defaults(func=cmd_filter)

    p = sub.add_parser("evaluate", help="score a predictions file against a manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--predictions", required=True)
    p.add_argument("--kind", required=True, choices=("classification", "char"))
    p.add_argument("--output", required=True)
    _add_filter_flags(p)
    _add_common(p)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("synth", help="generate a synthetic illusion dataset")
    p.add_argument("--output", required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--classes", type=int, default=None)
    p.add_argument("--image-size", dest="image_size", type=int)
    p.add_argument("--alpha", type=float)
    p.add_argument("--carrier-scale", dest="carrier_scale", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--no-illusion-fraction", dest="no_illusion_fraction", type=float)
    p.add_argument("--study", action="store_true",
                   help="also run the filtered-vs-unfiltered oracle study")
    _add_filter_flags(p)
    _add_common(p)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("query", help="send manifest images to a vision-chat endpoint")
    p.add_argument("--manifest", required=True)
    p.add_argument("--variant", required=True, choices=("raw", "illusion", "filtered"))
    p.add_argument("--output", required=True, help="predictions file (resumable)")
    p.add_argument("--base-url", dest="base_url")
    p.add_argument("--model", dest="model")
    p.add_argument("--auth-env", dest="auth_env")
    p.add_argument("--max-concurrent", dest="max_concurrent", type=int)
    p.add_argument("--retry-limit", dest="retry_limit", type=int)
    p.add_argument("--timeout", type=float)
    p.add_argument("--replicate3", action="store_true")
    _add_filter_flags(p)
    _add_common(p)
    p.set_defaults(func=cmd_query)

    p = sub.add_parser("report", help="render a saved report.json as a table")
    p.add_argument("--input", required=True)
    p.set_defaults(func=cmd_report)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except Exception as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
