"""Command-line surface for the affordance pipeline.

Subcommands: fit, segment-select, extract, score, train, project,
evaluate, gen-synthetic. Exit codes: 0 success, 2 usage error,
1 runtime failure (message on stderr).
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .evaluation import DatasetManifest, build_report
from .fitting import fit_best, fit_variant
from .pipeline import learn_task_function
from .pointcloud import read_ply, write_ply
from .projection import ProjectionConfig, project
from .ptool import PTool, extract_ptools, features, render
from .synthetic import TOOL_KINDS, make_tool, random_ptools
from .taskfn import LabeledSet, TaskFunctionModel, train, train_with_pruning
from .tasks import TASK_NAMES, TaskSpec, categorize, load_default_task, score_tool


def _build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ptools",
                                description="Tool affordance assessment from point clouds")
    p.add_argument("--seed", type=int, default=None,
                   help="RNG seed (default 0; required with --strict-repro)")
    p.add_argument("--n-seeds", type=int, default=20, help="projection seed count")
    p.add_argument("--w-fit", type=float, default=1.0, help="fit score weight")
    p.add_argument("--w-task", type=float, default=1.0, help="task score weight")
    p.add_argument("--config", type=Path, default=None,
                   help="JSON file with default values for the global flags")
    p.add_argument("--strict-repro", action="store_true",
                   help="fail if a randomized command is run without --seed")
    sub = p.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("fit", help="fit the best superquadric to a cloud")
    sp.add_argument("cloud", type=Path)
    sp.add_argument("--out", type=Path, default=None)
    sp.add_argument("--fit-trace", type=Path, default=None,
                    help="dump per-iteration objectives (line-oriented text)")

    sp = sub.add_parser("segment-select",
                        help="pick the best segmentation option by fit score")
    sp.add_argument("options", type=Path, nargs="+")

    sp = sub.add_parser("extract", help="extract p-tools from a segmented cloud")
    sp.add_argument("cloud", type=Path)
    sp.add_argument("--mass", type=float, required=True)
    sp.add_argument("--out", type=Path, default=None)

    sp = sub.add_parser("score", help="oracle-score p-tools for a task")
    sp.add_argument("ptools", type=Path)
    sp.add_argument("--task", choices=TASK_NAMES, default=None)
    sp.add_argument("--task-file", type=Path, default=None)
    sp.add_argument("--runs", type=int, default=3)
    sp.add_argument("--out", type=Path, default=None)

    sp = sub.add_parser("train", help="train a task function model")
    sp.add_argument("--task", choices=TASK_NAMES, default=None)
    sp.add_argument("--task-file", type=Path, default=None)
    sp.add_argument("--manifest", type=Path, default=None,
                    help="train from labeled clouds instead of synthetic p-tools")
    sp.add_argument("--prune", action="store_true", default=True)
    sp.add_argument("--no-prune", dest="prune", action="store_false")
    sp.add_argument("--n-initial", type=int, default=200)
    sp.add_argument("--target-n", type=int, default=400)
    sp.add_argument("--out", type=Path, required=True)

    sp = sub.add_parser("project", help="project a cloud onto its best p-tool")
    sp.add_argument("cloud", type=Path)
    sp.add_argument("--mass", type=float, required=True)
    sp.add_argument("--task", choices=TASK_NAMES, default=None)
    sp.add_argument("--task-file", type=Path, default=None)
    sp.add_argument("--model", type=Path, required=True)
    sp.add_argument("--radii-per-seed", type=int, default=10)
    sp.add_argument("--out", type=Path, default=None)
    sp.add_argument("--render-ply", type=Path, default=None,
                    help="write the winning p-tool as a PLY cloud")

    sp = sub.add_parser("evaluate", help="score predictions against a manifest")
    sp.add_argument("--manifest", type=Path, required=True)
    sp.add_argument("--predictions", type=Path, required=True)
    sp.add_argument("--trials", type=int, default=100_000)
    sp.add_argument("--out", type=Path, default=None)

    sp = sub.add_parser("gen-synthetic", help="emit synthetic tool clouds or p-tools")
    sp.add_argument("--kind", choices=TOOL_KINDS, default=None)
    sp.add_argument("--n-points", type=int, default=1200)
    sp.add_argument("--ptools", type=int, default=None,
                    help="emit N random p-tools as JSON instead of a cloud")
    sp.add_argument("--out", type=Path, required=True)
    return p


_RANDOMIZED = {"fit", "extract", "train", "project", "gen-synthetic",
               "segment-select"}


def _load_task(args) -> TaskSpec:
    if args.task_file is not None:
        return TaskSpec.load(args.task_file)
    if args.task is not None:
        return load_default_task(args.task)
    raise ValueError("provide --task or --task-file")


def _emit(payload: dict | list, out: Path | None) -> None:
    text = json.dumps(payload, indent=2)
    if out is None:
        print(text)
    else:
        out.write_text(text + "\n")


def _cmd_fit(args) -> int:
    cloud = read_ply(args.cloud)
    trace: list | None = [] if args.fit_trace else None
    if trace is not None:
        # fit_best with tracing: trace each variant sequentially.
        from .fitting import VARIANT_ORDER
        best = None
        for kind in VARIANT_ORDER:
            sub_trace: list = []
            try:
                res = fit_variant(cloud, kind, args.seed, trace=sub_trace)
            except Exception:
                continue
            trace.extend((kind.value, i, o) for i, o in sub_trace)
            if best is None or res.sym_distance < best.sym_distance:
                best = res
        if best is None:
            raise ValueError("all fitting variants failed")
        args.fit_trace.write_text(
            "\n".join(f"{v} {i} {o:.10e}" for v, i, o in trace) + "\n")
    else:
        best = fit_best(cloud, args.seed)
    _emit({"params": best.params.to_dict(), "residual": best.residual,
           "sym_distance": best.sym_distance, "variant": best.variant.value},
          args.out)
    return 0


def _cmd_segment_select(args) -> int:
    from .pointcloud import select_segmentation
    options = [read_ply(p) for p in args.options]
    print(select_segmentation(options, rng_seed=args.seed))
    return 0


def _cmd_extract(args) -> int:
    cloud = read_ply(args.cloud)
    if cloud.segment_ids is None:
        raise ValueError("extract requires a segmented cloud (PLY 'segment' property)")
    fits = [fit_best(cloud.select(idx), args.seed)
            for idx in cloud.segments().values()]
    out = extract_ptools(fits, args.mass, rng_seed=args.seed)
    _emit([dict(pt.to_dict(), fit_score=score) for pt, score in out], args.out)
    return 0


def _cmd_score(args) -> int:
    task = _load_task(args)
    items = json.loads(args.ptools.read_text())
    rows = []
    for item in items:
        pt = PTool.from_dict(item)
        raw = score_tool(features(pt), task, runs=args.runs)
        rows.append({"raw": raw, "category": categorize(raw, task.thresholds)})
    _emit(rows, args.out)
    return 0


def _train_from_manifest(args, task: TaskSpec) -> TaskFunctionModel:
    """Desk-scale manifest training: best whole/segment fits per entry,
    manifest category labels as regression targets."""
    manifest = DatasetManifest.load(args.manifest)
    base = args.manifest.parent
    feats, raws, cats = [], [], []
    for entry in manifest.entries:
        if task.name not in entry.labels:
            continue
        cloud = read_ply(base / entry.cloud_path)
        if cloud.segment_ids is not None and len(cloud.segments()) > 1:
            fits = [fit_best(cloud.select(idx), args.seed)
                    for idx in cloud.segments().values()]
        else:
            fits = [fit_best(cloud, args.seed)]
        candidates = extract_ptools(fits, entry.mass, rng_seed=args.seed)
        best_pt, _ = min(candidates, key=lambda c: c[1])
        feats.append(features(best_pt))
        raws.append(float(entry.labels[task.name]))
        cats.append(entry.labels[task.name])
    if len(feats) < 10:
        raise ValueError("manifest training needs at least 10 labeled entries")
    data = LabeledSet(features=feats, raw_scores=np.array(raws),
                      categories=np.array(cats))
    if args.prune:
        return train_with_pruning(data, args.seed, task_name=task.name)
    return train(data, args.seed, task_name=task.name)


def _cmd_train(args) -> int:
    task = _load_task(args)
    if args.manifest is not None:
        model = _train_from_manifest(args, task)
    else:
        model = learn_task_function(task, rng_seed=args.seed,
                                    n_initial=args.n_initial,
                                    target_n=args.target_n, prune=args.prune)
    model.save(args.out)
    print(f"model saved to {args.out} "
          f"({len(model.active_dims)} active dims, n={len(model.y)})")
    return 0


def _cmd_project(args) -> int:
    cloud = read_ply(args.cloud)
    task = _load_task(args)
    model = TaskFunctionModel.load(args.model)
    cfg = ProjectionConfig(n_seeds=args.n_seeds, radii_per_seed=args.radii_per_seed,
                           w_fit=args.w_fit, w_task=args.w_task,
                           rng_seed=args.seed)
    result = project(cloud, args.mass, task, model, cfg)
    _emit(result.to_dict(), args.out)
    if args.render_ply is not None:
        write_ply(render(result.best, 1000, args.seed), args.render_ply)
    return 0


def _cmd_evaluate(args) -> int:
    manifest = DatasetManifest.load(args.manifest, check_paths=False)
    preds = json.loads(args.predictions.read_text())
    task = preds["task"]
    s = list(map(int, preds["scores"]))
    g = [e.labels[task] for e in manifest.entries if task in e.labels]
    if len(s) != len(g):
        raise ValueError(f"{len(s)} predictions vs {len(g)} labeled entries")
    report = build_report(s, g, c=4, trials=args.trials, rng_seed=args.seed)
    _emit(report.to_dict(), args.out)
    return 0


def _cmd_gen_synthetic(args) -> int:
    if args.ptools is not None:
        pts = random_ptools(args.ptools, args.seed)
        _emit([pt.to_dict() for pt in pts], args.out)
        return 0
    if args.kind is None:
        raise ValueError("provide --kind for a cloud or --ptools N for p-tools")
    tool = make_tool(args.kind, args.seed, n_points=args.n_points)
    write_ply(tool.cloud, args.out)
    print(json.dumps({"kind": tool.kind, "mass": tool.mass,
                      "true_ptool": tool.true_ptool.to_dict()}))
    return 0


_COMMANDS = {
    "fit": _cmd_fit,
    "segment-select": _cmd_segment_select,
    "extract": _cmd_extract,
    "score": _cmd_score,
    "train": _cmd_train,
    "project": _cmd_project,
    "evaluate": _cmd_evaluate,
    "gen-synthetic": _cmd_gen_synthetic,
}


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    if args.config is not None:
        defaults = json.loads(Path(args.config).read_text())
        for key in ("seed", "n_seeds", "w_fit", "w_task"):
            if key in defaults and getattr(args, key, None) == parser.get_default(key):
                setattr(args, key, defaults[key])
    if args.seed is None:
        if args.strict_repro and args.command in _RANDOMIZED:
            print("error: --strict-repro requires an explicit --seed",
                  file=sys.stderr)
            return 2
        args.seed = 0
    try:
        return _COMMANDS[args.command](args)
    except BrokenPipeError:
        return 1
    except Exception as exc:  # surface a clean message, nonzero exit
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
