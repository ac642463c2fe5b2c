"""Command line entry point: ``berthloc <command> ...``."""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from pathlib import Path

from . import __version__
from .baseline import run_baseline
from .exceptions import BerthlocError, ConfigError, MissingTuningError
from .geometry import write_geojson, write_svg
from .ingest import Dataset, load_dataset, load_raw, provenance_csv, save_dataset
from .pipeline import (ABLATION_AXES, Hyperparameters, RunManifest, ablation_csv, cmd_ablate, cmd_evaluate,
                       cmd_localize)
from .preprocess import SplitPair, preprocess_full, preprocess_splits
from .synth import SynthPort, write_outputs
from .tuner import read_trials, tune
from .types import PortConfig, RoiPolygon

log = logging.getLogger("berthloc")


def _common(p: argparse.ArgumentParser, plot: bool = False) -> None:
    p.add_argument("--config", type=Path, help="port configuration JSON")
    p.add_argument("--seed", type=int, help="master seed (overrides the config)")
    p.add_argument("--geohash", action=argparse.BooleanOptionalAction, default=None,
                   help="snap augmented points to geohash cells")
    p.add_argument("--jobs", type=int, help="maximum worker threads")
    p.add_argument("--manifest", type=Path, help="where to write the run manifest (default: next to --out)")
    if plot:
        p.add_argument("--plot", type=Path, help="write an SVG plot")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="berthloc", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="parse raw AIS into a dataset")
    p.add_argument("--input", required=True, type=Path)
    p.add_argument("--out", required=True, type=Path)
    _common(p)

    p = sub.add_parser("preprocess", help="clean, split, resample and heading-filter a dataset")
    p.add_argument("--in", dest="inp", required=True, type=Path)
    p.add_argument("--out-a", type=Path)
    p.add_argument("--out-b", type=Path)
    p.add_argument("--out-full", type=Path)
    p.add_argument("--provenance", type=Path, help="CSV of per-stage record counts")
    _common(p)

    p = sub.add_parser("tune", help="search DBSCAN hyperparameters")
    p.add_argument("--split-a", required=True, type=Path)
    p.add_argument("--split-b", required=True, type=Path)
    p.add_argument("--out", required=True, type=Path, help="trials file (JSON Lines, resumable)")
    p.add_argument("--trials", type=int)
    p.add_argument("--warm-start", type=int)
    _common(p)

    p = sub.add_parser("localize", help="fit the final mixture and emit berth polygons")
    p.add_argument("--in", dest="inp", required=True, type=Path, help="full preprocessed dataset")
    p.add_argument("--out", required=True, type=Path)
    p.add_argument("--trials-file", type=Path, help="tuning trials to take the best setting from")
    p.add_argument("--epsilon", type=float)
    p.add_argument("--min-points", type=int)
    p.add_argument("--n-components", type=int)
    p.add_argument("--model-out", type=Path, help="write the fitted mixture as JSON")
    _common(p, plot=True)

    p = sub.add_parser("evaluate", help="split-consistency Bhattacharyya distance")
    p.add_argument("--split-a", required=True, type=Path)
    p.add_argument("--split-b", required=True, type=Path)
    p.add_argument("--raw", type=Path, help="raw dataset for the baseline comparison")
    p.add_argument("--out", required=True, type=Path, help="evaluation JSON")
    p.add_argument("--csv", type=Path, help="evaluation CSV (port, method, mean, std)")
    p.add_argument("--trials-file", type=Path)
    p.add_argument("--epsilon", type=float)
    p.add_argument("--min-points", type=int)
    p.add_argument("--n-components", type=int)
    p.add_argument("--reruns", type=int)
    _common(p, plot=True)

    p = sub.add_parser("baseline", help="mooring-event clustering baseline")
    p.add_argument("--in", dest="inp", required=True, type=Path, help="raw dataset")
    p.add_argument("--roi", type=Path, help="port polygon GeoJSON (defaults to the dataset's ROI)")
    p.add_argument("--out", required=True, type=Path)
    _common(p, plot=True)

    p = sub.add_parser("synth", help="generate a synthetic port")
    p.add_argument("--spec", required=True, type=Path)
    p.add_argument("--out-ais", required=True, type=Path)
    p.add_argument("--out-truth", required=True, type=Path)
    p.add_argument("--out-labels", type=Path)
    p.add_argument("--out-config", type=Path, help="write a matching port configuration")
    _common(p)

    p = sub.add_parser("ablate", help="tune and evaluate across one setting")
    p.add_argument("--in", dest="inp", required=True, type=Path, help="raw dataset covering the longest POI")
    p.add_argument("--axis", required=True, choices=sorted(ABLATION_AXES))
    p.add_argument("--values", type=float, nargs="+")
    p.add_argument("--trials", type=int)
    p.add_argument("--warm-start", type=int)
    p.add_argument("--out", required=True, type=Path, help="CSV table")
    _common(p)
    return parser


def _apply_overrides(config: PortConfig, args) -> PortConfig:
    changes = {}
    if getattr(args, "seed", None) is not None:
        changes["rng_seed"] = args.seed
    if getattr(args, "geohash", None) is not None:
        changes["geohash_enabled"] = args.geohash
    if getattr(args, "jobs", None) is not None:
        if args.jobs < 1:
            raise ConfigError("--jobs must be >= 1")
        changes["jobs"] = args.jobs
    return config.with_(**changes) if changes else config


def _config(args, fallback: Dataset | None = None) -> PortConfig:
    if args.config is not None:
        config = PortConfig.load(args.config)
    elif fallback is not None:
        config = fallback.port
    else:
        raise ConfigError("--config is required")
    return _apply_overrides(config, args)


def _rescope(d: Dataset, config: PortConfig) -> Dataset:
    return Dataset(config, d.tracks, d.provenance)


def _hyperparameters(args, config: PortConfig) -> Hyperparameters:
    if args.trials_file is not None:
        finite = [t for t in read_trials(args.trials_file) if not t.failed]
        if not finite:
            raise MissingTuningError(f"{args.trials_file} has no successful trial")
        best = min(finite, key=lambda t: (t.objective, t.index))
        hp = Hyperparameters(best.params.epsilon, best.params.min_points, int(best.n_components))
    else:
        hp = None
    eps = args.epsilon if args.epsilon is not None else (hp.epsilon if hp else config.epsilon)
    mp = args.min_points if args.min_points is not None else (hp.min_points if hp else config.min_points)
    nc = args.n_components if args.n_components is not None else (hp.n_components if hp else config.n_components)
    return Hyperparameters.from_config(config.with_(epsilon=eps, min_points=mp, n_components=nc))


def _run(args, manifest: RunManifest) -> None:
    cmd = args.command
    if cmd == "ingest":
        config = _config(args)
        manifest.add_input(args.input)
        with manifest.stage("ingest"):
            d = load_raw(args.input, config)
            save_dataset(d, args.out)
        manifest.add_output(args.out)
        print(provenance_csv(d), end="")

    elif cmd == "preprocess":
        manifest.add_input(args.inp)
        raw = load_dataset(args.inp)
        config = _config(args, raw)
        raw = _rescope(raw, config)
        with manifest.stage("preprocess"):
            if args.out_a or args.out_b:
                pair = preprocess_splits(raw)
                for d, path in ((pair.split_a, args.out_a), (pair.split_b, args.out_b)):
                    if path:
                        save_dataset(d, path)
                        manifest.add_output(path)
            if args.out_full:
                full = preprocess_full(raw)
                save_dataset(full, args.out_full)
                manifest.add_output(args.out_full)
        if args.provenance:
            lines = []
            if args.out_a or args.out_b:
                for name, d in (("a", pair.split_a), ("b", pair.split_b)):
                    lines += [f"{name},{row}" for row in provenance_csv(d).splitlines()[1:]]
            if args.out_full:
                lines += [f"full,{row}" for row in provenance_csv(full).splitlines()[1:]]
            args.provenance.write_text("split,stage,before,after\n" + "\n".join(lines) + "\n")
            manifest.add_output(args.provenance)

    elif cmd == "tune":
        for p in (args.split_a, args.split_b):
            manifest.add_input(p)
        a, b = load_dataset(args.split_a), load_dataset(args.split_b)
        config = _config(args, a)
        with manifest.stage("tune"):
            result = tune(_rescope(a, config), _rescope(b, config), config, args.out, args.trials, args.warm_start)
        manifest.add_output(args.out)
        print(json.dumps(result.best.to_dict()))

    elif cmd == "localize":
        manifest.add_input(args.inp)
        full = load_dataset(args.inp)
        config = _config(args, full)
        hp = _hyperparameters(args, config)
        with manifest.stage("localize"):
            res = cmd_localize(config, _rescope(full, config), hp)
            write_geojson(res.berths, args.out, method="gmm")
        manifest.add_output(args.out)
        if args.model_out:
            args.model_out.write_text(json.dumps(res.model.to_dict(), indent=1, sort_keys=True) + "\n")
            manifest.add_output(args.model_out)
        if args.plot:
            write_svg(args.plot, res.cloud.points, res.berths, res.model)
        print(json.dumps({"berths": len(res.berths), "n_components": hp.n_components}))

    elif cmd == "evaluate":
        for p in (args.split_a, args.split_b, args.raw):
            manifest.add_input(p)
        a, b = load_dataset(args.split_a), load_dataset(args.split_b)
        config = _config(args, a)
        if args.reruns is not None:
            config = config.with_(mci_reruns=args.reruns)
        hp = _hyperparameters(args, config)
        raw = _rescope(load_dataset(args.raw), config) if args.raw else None
        with manifest.stage("evaluate"):
            report = cmd_evaluate(config, SplitPair(_rescope(a, config), _rescope(b, config)), hp, raw)
        args.out.write_text(json.dumps(report.to_dict(), indent=1, sort_keys=True, default=_json_float) + "\n")
        manifest.add_output(args.out)
        if args.csv:
            args.csv.write_text(report.to_csv())
            manifest.add_output(args.csv)
        print(report.to_csv(), end="")

    elif cmd == "baseline":
        manifest.add_input(args.inp)
        raw = load_dataset(args.inp)
        config = _config(args, raw)
        if args.roi is not None:
            try:
                config = config.with_(roi=RoiPolygon.from_geojson(json.loads(args.roi.read_text())))
            except (OSError, ValueError) as exc:
                raise ConfigError(f"cannot read ROI {args.roi}: {exc}") from exc
        with manifest.stage("baseline"):
            berths = run_baseline(_rescope(raw, config))
            write_geojson(berths.berths, args.out, method="steenari")
        manifest.add_output(args.out)
        if args.plot:
            write_svg(args.plot, raw.lonlat(), berths.berths)
        print(json.dumps({"clusters": len(berths.clusters), "noise_events": len(berths.noise_event_ids)}))

    elif cmd == "synth":
        manifest.add_input(args.spec)
        spec = SynthPort.load(args.spec)
        if args.seed is not None:
            spec = SynthPort.from_dict({**spec.to_dict(), "seed": args.seed})
        with manifest.stage("synth"):
            records, truth = write_outputs(spec, args.out_ais, args.out_truth, args.out_labels)
        for p in (args.out_ais, args.out_truth, args.out_labels):
            manifest.add_output(p)
        if args.out_config:
            spec.port_config().save(args.out_config)
            manifest.add_output(args.out_config)
        print(json.dumps({"records": len(records), "berths": len(truth.berths)}))

    elif cmd == "ablate":
        manifest.add_input(args.inp)
        raw = load_dataset(args.inp)
        config = _config(args, raw)
        with manifest.stage("ablate"):
            rows = cmd_ablate(config, _rescope(raw, config), args.axis, args.values, args.trials, args.warm_start)
        args.out.write_text(ablation_csv(rows))
        manifest.add_output(args.out)
        print(ablation_csv(rows), end="")


def _json_float(x):
    if isinstance(x, float) and not math.isfinite(x):
        return str(x)
    raise TypeError(type(x))


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    manifest = RunManifest(args.command, argv, None, getattr(args, "seed", None))
    try:
        if args.config is not None:
            manifest.config = PortConfig.load(args.config).to_dict()
            manifest.add_input(args.config)
        _run(args, manifest)
    except BerthlocError as exc:
        print(f"berthloc {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code
    out = getattr(args, "out", None) or getattr(args, "out_full", None) or getattr(args, "out_ais", None)
    target = args.manifest or (Path(str(out) + ".manifest.json") if out else None)
    if target is not None:
        manifest.save(target)
    return 0


def replay(manifest_path) -> int:
    """Re-run the command recorded in a manifest."""
    return main(RunManifest.load(manifest_path).argv)


if __name__ == "__main__":
    sys.exit(main())
