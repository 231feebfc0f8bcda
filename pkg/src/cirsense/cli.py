"""``cirsense`` command line: simulate, train, eval and reproduce.

Exit codes: 0 success, 1 usage error, 2 configuration error, 3 runtime
error.  On failure a single JSON line ``{"error": KIND, "exit_code": N,
"message": TEXT}`` goes to stderr.

The output directory is, in order of precedence, ``--out``, the
``CIRSENSE_OUT`` environment variable, then ``out_dir`` from the config.
Every command writes ``config.json`` (the canonical config snapshot) next
to its artifacts.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path


from . import gbt, nn
from ._container import FormatError
from .config import ALL_COMBOS, ProtocolEntry, RunConfig, load_config
from .dataset import campaign_metadata, generate_campaign, load_dataset, save_dataset, split_campaign
from .evaluation import (
    MODEL_KINDS,
    TASKS,
    EvalReport,
    FittedModel,
    LinkCombo,
    _cell_data,
    check_split_hygiene,
    comparison_table,
    detection_accuracy,
    emit_report,
    fit_model,
    load_baseline,
    position_error_stats,
    run_experiment_suite,
    save_baseline,
)
from .sim import ConfigError

OUT_ENV = "CIRSENSE_OUT"
EXIT_OK, EXIT_USAGE, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2, 3

DATASET_FILE = "dataset.cirs"
CONFIG_FILE = "config.json"
CHECKPOINT_SUFFIX = {"typea": ".cnn", "typeb": ".cnn", "typec": ".gbt", "baseline": ".base"}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _csv_list(text: str) -> list[str]:
    return [t.strip() for t in text.split(",") if t.strip()]


def _links_combo(text: str) -> str:
    try:
        return LinkCombo(tuple(int(t) for t in _csv_list(text))).name
    except ValueError as exc:
        raise UsageError(f"--links: {exc}") from exc


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", help="YAML or JSON run configuration")
    common.add_argument("--seed", type=int, help="global seed (overrides the config)")
    common.add_argument("--out", help=f"output directory (overrides ${OUT_ENV} and the config)")

    roster = _Parser(add_help=False)
    roster.add_argument("--models", help=f"comma list from {','.join(MODEL_KINDS)}")
    roster.add_argument("--combos", help="comma list of link combinations, e.g. N2,N234")
    roster.add_argument("--links", help="comma list of receiver ids; shorthand for one combination")
    roster.add_argument("--jobs", type=int, default=1, help="suite cells run in parallel (default 1)")

    parser = _Parser(prog="cirsense", description="Passive target detection and positioning from multistatic CIRs.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    sub.add_parser("simulate", parents=[common], help="generate the synthetic campaign dataset")

    p = sub.add_parser("train", parents=[common], help="train one model and write its checkpoint")
    p.add_argument("--data", required=True, help="dataset file")
    p.add_argument("--model", required=True, choices=MODEL_KINDS)
    p.add_argument("--task", default="position", choices=TASKS)
    p.add_argument("--links", default="2,3,4", help="comma list of receiver ids (default 2,3,4)")

    p = sub.add_parser("eval", parents=[common, roster], help="train and evaluate suite cells, write reports")
    p.add_argument("--data", required=True, help="dataset file")
    p.add_argument("--task", default="position", choices=TASKS)
    p.add_argument("--checkpoint", action="append", default=[], help="evaluate this checkpoint instead of training")

    sub.add_parser("reproduce", parents=[common, roster], help="simulate and run the full evaluation protocol")
    return parser


# -- helpers --------------------------------------------------------------------------------


def resolve_config(args) -> tuple[RunConfig, Path]:
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    cfg = load_config(args.config, overrides)
    out = args.out or os.environ.get(OUT_ENV) or cfg.out_dir
    out_dir = Path(out)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        probe = out_dir / ".write-test"
        probe.write_bytes(b"")
        probe.unlink()
    except OSError as exc:
        raise ConfigError([f"output directory {out_dir} is not writable: {exc.strerror}"]) from exc
    return cfg, out_dir


def snapshot_dict(cfg: RunConfig) -> dict:
    """Config as embedded in artifacts; the output location is not part of a run's identity."""
    d = cfg.to_dict()
    d.pop("out_dir")
    return d


def seeds_dict(cfg: RunConfig) -> dict:
    return {
        "global": cfg.seed,
        "scene": cfg.seed if cfg.scene.seed is None else cfg.scene.seed,
        "split": cfg.seed if cfg.split.seed is None else cfg.split.seed,
        "train": cfg.models.train.seed,
        "boost": cfg.models.boost.seed,
    }


def write_snapshot(cfg: RunConfig, out_dir: Path) -> None:
    text = json.dumps(snapshot_dict(cfg), sort_keys=True, indent=2) + "\n"
    (out_dir / CONFIG_FILE).write_text(text, encoding="utf-8")


def _combos(args) -> list[str] | None:
    combos = _csv_list(args.combos) if args.combos else None
    if args.links:
        if combos is not None:
            raise UsageError("--links and --combos are mutually exclusive")
        combos = [_links_combo(args.links)]
    if combos is not None:
        bad = [c for c in combos if c not in ALL_COMBOS]
        if bad:
            raise UsageError(f"unknown combos {bad}; choose from {list(ALL_COMBOS)}")
    return combos


def _models(args) -> list[str] | None:
    if not args.models:
        return None
    models = _csv_list(args.models)
    bad = [m for m in models if m not in MODEL_KINDS]
    if bad:
        raise UsageError(f"unknown models {bad}; choose from {list(MODEL_KINDS)}")
    return models


def _load_campaign(path, cfg: RunConfig):
    samples, header = load_dataset(path, with_header=True)
    if not samples:
        raise ConfigError([f"dataset {path} holds no samples"])
    bins = {s.bin_index for s in samples}
    if max(bins) >= cfg.grid.size:
        raise ConfigError([f"dataset {path} has bins beyond the configured grid of {cfg.grid.size} cells"])
    return samples, header


def _stamp(reports: list[EvalReport], cfg: RunConfig) -> None:
    snap, seeds = snapshot_dict(cfg), seeds_dict(cfg)
    for r in reports:
        r.config = snap
        r.seeds = seeds


def write_reports(reports: list[EvalReport], out_dir: Path) -> None:
    emit_report(reports, "csv", out_dir / "reports.csv")
    emit_report(reports, "json", out_dir / "reports.json")
    emit_report([r for r in reports if r.task == "position"], "svg", out_dir / "position_cdf.svg")
    (out_dir / "summary.txt").write_text(comparison_table(reports), encoding="utf-8")


# -- commands -------------------------------------------------------------------------------


def cmd_simulate(cfg: RunConfig, out_dir: Path) -> Path:
    scene = cfg.build_scene()
    samples = generate_campaign(cfg.grid, scene, cfg.sweep, cfg.seed, cfg.features, cfg.target_template())
    meta = campaign_metadata(cfg.grid, scene, cfg.sweep, cfg.features, cfg.seed)
    meta["run_config"] = snapshot_dict(cfg)
    path = out_dir / DATASET_FILE
    save_dataset(samples, path, meta)
    write_snapshot(cfg, out_dir)
    return path


def cmd_train(cfg: RunConfig, data_path, kind: str, task: str, combo: LinkCombo, out_dir: Path) -> Path:
    samples, _ = _load_campaign(data_path, cfg)
    splits = split_campaign(samples, cfg.build_split())
    data = _cell_data(splits, combo, task)
    channels = samples[0].features.channels_per_link
    fitted = fit_model(kind, task, data, cfg.models, channels, len(combo.receiver_ids))
    meta = {
        "kind": kind,
        "task": task,
        "combo": combo.name,
        "run_config": snapshot_dict(cfg),
        "seeds": seeds_dict(cfg),
        "details": fitted.details,
    }
    path = out_dir / f"{kind}-{task}-{combo.name}{CHECKPOINT_SUFFIX[kind]}"
    if kind in ("typea", "typeb"):
        m = fitted.model
        nn.save_network(nn.TrainedNetwork(m.spec, m.params, m.hyper, m.history, meta), path)
    elif kind == "typec":
        m = fitted.model
        gbt.save_ensemble(gbt.Ensemble(m.trees_per_output, m.base_score, m.config, m.objective, {}, meta), path)
    else:
        save_baseline(fitted.model, path, meta)
    write_snapshot(cfg, out_dir)
    return path


def _load_checkpoint(path) -> tuple[dict, FittedModel]:
    path = Path(path)
    if path.suffix == ".base":
        model, meta = load_baseline(path, with_metadata=True)
    elif path.suffix == ".cnn":
        model = nn.load_network(path)
        meta = model.metadata
    elif path.suffix == ".gbt":
        model = gbt.load_ensemble(path)
        meta = model.metadata
    else:
        raise FormatError(f"unknown checkpoint suffix {path.suffix!r} for {path}")
    return meta, FittedModel(meta["kind"], meta["task"], model)


def cmd_eval(
    cfg: RunConfig,
    data_path,
    task: str,
    out_dir: Path,
    models=None,
    combos=None,
    checkpoints=(),
    jobs: int = 1,
) -> list[EvalReport]:
    samples, _ = _load_campaign(data_path, cfg)
    split = cfg.build_split()
    if checkpoints:
        splits = split_campaign(samples, split)
        reports = []
        for ckpt in checkpoints:
            meta, model = _load_checkpoint(ckpt)
            combo = LinkCombo.parse(meta["combo"])
            ck_task = meta["task"]
            data = _cell_data(splits, combo, ck_task)
            r = EvalReport(
                ck_task,
                meta["kind"],
                combo,
                train_bins=tuple(sorted(splits.train_bins)),
                val_bins=tuple(sorted(splits.val_bins)),
                test_bins=tuple(sorted(splits.test_bins)),
                details={"checkpoint": Path(ckpt).name},
            )
            if ck_task == "detect":
                r.accuracy = detection_accuracy(model, data.x_test, data.y_test)
            else:
                r.mean_error_m, r.error_cdf = position_error_stats(model, data.x_test, data.y_test)
            check_split_hygiene(r)
            reports.append(r)
    else:
        models = models or ["typea", "typeb", "typec", "baseline"]
        combo_objs = [LinkCombo.parse(c) for c in (combos or ["N2", "N234"])]
        reports = run_experiment_suite(samples, models, combo_objs, split, task, cfg.models, jobs)
    _stamp(reports, cfg)
    write_reports(reports, out_dir)
    write_snapshot(cfg, out_dir)
    return reports


def _filter_protocol(protocol, models, combos) -> list[ProtocolEntry]:
    out = []
    for p in protocol:
        ms = tuple(m for m in p.models if models is None or m in models)
        cs = tuple(c for c in p.combos if combos is None or c in combos)
        if ms and cs:
            out.append(ProtocolEntry(p.task, ms, cs))
    return out


def cmd_reproduce(cfg: RunConfig, out_dir: Path, models=None, combos=None, jobs: int = 1) -> list[EvalReport]:
    """Simulate the campaign and run every protocol cell; writes the full artifact set."""
    protocol = _filter_protocol(cfg.protocol, models, combos)
    if not protocol:
        raise ConfigError(["no protocol cell matches the requested models and combos"])
    data_path = cmd_simulate(cfg, out_dir)
    samples = load_dataset(data_path)
    split = cfg.build_split()
    reports = []
    for entry in protocol:
        combo_objs = [LinkCombo.parse(c) for c in entry.combos]
        reports += run_experiment_suite(samples, list(entry.models), combo_objs, split, entry.task, cfg.models, jobs)
    _stamp(reports, cfg)
    write_reports(reports, out_dir)
    write_snapshot(cfg, out_dir)
    return reports


# -- entry point ----------------------------------------------------------------------------


def _fail(kind: str, code: int, message: str) -> int:
    line = json.dumps({"error": kind, "exit_code": code, "message": " ".join(str(message).split())})
    print(line, file=sys.stderr)
    return code


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command in ("eval", "reproduce"):
            models, combos = _models(args), _combos(args)
            if args.jobs < 1:
                raise UsageError("--jobs must be >= 1")
        elif args.command == "train":
            combo = LinkCombo.parse(_links_combo(args.links))
        cfg, out_dir = resolve_config(args)

        if args.command == "simulate":
            print(cmd_simulate(cfg, out_dir))
            return EXIT_OK
        if args.command == "train":
            print(cmd_train(cfg, args.data, args.model, args.task, combo, out_dir))
            return EXIT_OK
        if args.command == "eval":
            reports = cmd_eval(cfg, args.data, args.task, out_dir, models, combos, args.checkpoint, args.jobs)
        else:
            reports = cmd_reproduce(cfg, out_dir, models, combos, args.jobs)
        sys.stdout.write(comparison_table(reports))
        failed = [f"{r.model_id}/{r.combo.name}/{r.task}: {r.error}" for r in reports if r.error]
        if failed:
            return _fail("runtime", EXIT_RUNTIME, f"{len(failed)} suite cell(s) failed; first: {failed[0]}")
        return EXIT_OK
    except UsageError as exc:
        return _fail("usage", EXIT_USAGE, exc)
    except ConfigError as exc:
        return _fail("config", EXIT_CONFIG, "; ".join(exc.problems))
    except FileNotFoundError as exc:
        return _fail("config", EXIT_CONFIG, f"file not found: {exc.filename}")
    except FormatError as exc:
        return _fail("runtime", EXIT_RUNTIME, f"unreadable artifact: {exc}")
    except Exception as exc:  # anything else is a runtime failure with a one-line report
        return _fail("runtime", EXIT_RUNTIME, f"{type(exc).__name__}: {exc}")


if __name__ == "__main__":
    sys.exit(main())
