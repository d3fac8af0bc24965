"""Batch command-line front end.

Every command writes its artifacts plus a ``manifest_<command>.json`` into
``--out-dir``. Artifacts are staged in memory and committed only once the
command has succeeded, so a failing run leaves nothing behind. Diagnostics
are a single ``appspred: error: ...`` line on stderr.

Seeds: ``--seed`` seeds the synthetic generator (when ``--preset`` supplies
the data), the fold assignment and the forest master seed.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import time
from dataclasses import asdict
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .baselines import (
    DEFAULT_C,
    DEFAULT_EPOCHS,
    DEFAULT_L2,
    DEFAULT_LEARNING_RATE,
    ROSTER_NAMES,
    default_roster,
)
from .encode import LabelEncoder, encode_dataset
from .evaluation import CvConfig, compare_models, cross_validate
from .exceptions import AppsPredError, ConfigError, InputError
from .forest import (
    DEFAULT_EPSILON,
    DEFAULT_GRID,
    ForestConfig,
    RandomForest,
    RandomForestClassifier,
    measure_training_time,
    sweep_optimal_trees,
    train_forest,
)
from .schema import LABEL_COLUMN, ContextSchema, clean_missing, dump_csv, load_dataset
from .synth import PRESETS, generate, preset

MODEL_FORMAT = "appspred-forest"
THREADS_ENV = "APPSPRED_THREADS"
# artifacts whose bytes legitimately change between runs
NONDETERMINISTIC = {"timing.csv"}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.exit(2, f"{self.prog}: error: {message}\n")


def _grid(text: str) -> list[int]:
    try:
        grid = [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        grid = []
    if not grid or grid[0] < 1 or any(b <= a for a, b in zip(grid, grid[1:])):
        raise argparse.ArgumentTypeError(
            f"invalid grid {text!r}; expected increasing positive integers, e.g. 1,5,10")
    return grid


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="appspred", description="Context-aware app prediction experiments.")
    parser.add_argument("--version", action="version", version=f"appspred {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p, data=True):
        p.add_argument("--out-dir", default=".", help="directory for artifacts and manifest")
        p.add_argument("--seed", type=int, default=0)
        if data:
            p.add_argument("--data", help="CSV file with an 'app' label column")
            p.add_argument("--schema", help="schema JSON (taken from --model when omitted)")
            p.add_argument("--preset", choices=PRESETS, help="generate the data instead of reading it")
            p.add_argument("--n-records", type=int)
            p.add_argument("--noise-rate", type=float)
            p.add_argument("--missing-rate", type=float)

    def forest_opts(p, n_trees=True):
        if n_trees:
            p.add_argument("--n-trees", type=int, default=15)
        p.add_argument("--subset-size", type=int, help="features drawn per node (default floor(sqrt(D)))")
        p.add_argument("--no-bootstrap", action="store_true")

    def cv_opts(p):
        p.add_argument("--k", type=int, default=10)
        p.add_argument("--no-stratify", action="store_true")

    def baseline_opts(p):
        p.add_argument("--criterion", choices=("gini", "info_gain"), default="info_gain",
                       help="split criterion of the single-tree baseline")
        p.add_argument("--alpha", type=float, default=1.0)
        p.add_argument("--learning-rate", type=float, default=DEFAULT_LEARNING_RATE)
        p.add_argument("--epochs", type=int, default=DEFAULT_EPOCHS)
        p.add_argument("--l2", type=float, default=DEFAULT_L2)
        p.add_argument("--C", type=float, default=DEFAULT_C)

    def sweep_opts(p):
        p.add_argument("--grid", type=_grid, default=list(DEFAULT_GRID))
        p.add_argument("--epsilon", type=float, default=DEFAULT_EPSILON)

    p = sub.add_parser("synth", help="generate a synthetic dataset")
    common(p)
    p.set_defaults(preset="ds01-like")

    p = sub.add_parser("train", help="train a forest and write model.json")
    common(p)
    forest_opts(p)

    p = sub.add_parser("predict", help="predict apps for a CSV")
    common(p, data=False)
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)

    p = sub.add_parser("sweep", help="cross-validated F1 over tree counts")
    common(p)
    forest_opts(p, n_trees=False)
    cv_opts(p)
    sweep_opts(p)

    p = sub.add_parser("time", help="training time over tree counts")
    common(p)
    forest_opts(p, n_trees=False)
    p.add_argument("--grid", type=_grid, default=list(DEFAULT_GRID))

    p = sub.add_parser("evaluate", help="cross-validate one model")
    common(p)
    forest_opts(p)
    cv_opts(p)
    baseline_opts(p)
    p.add_argument("--model", help="model.json whose forest settings are evaluated")
    p.add_argument("--classifier", choices=ROSTER_NAMES, default="RF")

    p = sub.add_parser("compare", help="cross-validate all six models on shared folds")
    common(p)
    forest_opts(p)
    cv_opts(p)
    baseline_opts(p)
    sweep_opts(p)
    p.set_defaults(n_trees=None)

    p = sub.add_parser("replay", help="rerun a manifest and check its artifacts")
    p.add_argument("manifest")
    p.add_argument("--out-dir", help="where to write the rerun (default: the original)")
    return parser


# -- helpers ---------------------------------------------------------------

def n_jobs_from_env():
    """Worker count from ``APPSPRED_THREADS``: unset/0 = all cores, 1 = serial."""
    raw = os.environ.get(THREADS_ENV, "0").strip() or "0"
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError(f"{THREADS_ENV} must be an integer, got {raw!r}") from None
    if n < 0:
        raise ConfigError(f"{THREADS_ENV} must be >= 0")
    if n == 0:
        n = os.cpu_count() or 1
    return None if n == 1 else n


def _sha256(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def _read(path: str) -> str:
    with open(path, encoding="utf-8") as fh:
        return fh.read()


class _Run:
    """Collects inputs, outputs and manifest extras for a single command."""

    def __init__(self, params: dict):
        self.params = params
        self.inputs: dict[str, str] = {}
        self.outputs: dict[str, bytes] = {}
        self.extra: dict = {}

    def read(self, path: str) -> str:
        text = _read(path)
        self.inputs[str(Path(path).resolve())] = _sha256(text.encode("utf-8"))
        return text

    def emit(self, name: str, text: str):
        self.outputs[name] = text.encode("utf-8")


def _schema(run: _Run, params) -> ContextSchema:
    if params.get("schema"):
        return ContextSchema.from_json(run.read(params["schema"]))
    if params.get("model"):
        return _load_model(run, params["model"])[0]
    raise InputError("--schema is required with --data")


def _dataset(run: _Run, params):
    """Cleaned dataset from ``--preset`` or ``--data``/``--schema``."""
    if params.get("preset") and not params.get("data"):
        overrides = {k: params[k] for k in ("n_records", "noise_rate", "missing_rate")
                     if params.get(k) is not None}
        spec = preset(params["preset"], seed=params["seed"], **overrides)
        run.extra["generator"] = spec.to_dict()
        dataset = generate(spec)
    elif params.get("data"):
        schema = _schema(run, params)
        dataset = load_dataset(run.read(params["data"]), schema, Path(params["data"]).stem)
    else:
        raise InputError("either --data (with --schema) or --preset is required")
    cleaned = clean_missing(dataset)
    run.extra["records"] = {"loaded": len(dataset), "used": len(cleaned)}
    return cleaned


def _forest_config(params, n_trees=None) -> ForestConfig:
    return ForestConfig(
        n_trees=n_trees if n_trees is not None else params.get("n_trees", 15),
        feature_subset_size=params.get("subset_size"),
        bootstrap=not params.get("no_bootstrap", False),
        seed=params["seed"],
    )


def _cv(params) -> CvConfig:
    return CvConfig(k=params["k"], seed=params["seed"], stratified=not params["no_stratify"])


def _model_json(schema: ContextSchema, forest: RandomForest) -> str:
    obj = {"format": MODEL_FORMAT, "version": __version__, "schema": schema.to_dict(),
           "forest": forest.to_dict()}
    return json.dumps(obj, separators=(",", ":")) + "\n"


def _load_model(run: _Run, path: str):
    try:
        obj = json.loads(run.read(path))
    except json.JSONDecodeError as exc:
        raise InputError(f"{path} is not valid JSON: {exc.msg}") from None
    if not isinstance(obj, dict) or obj.get("format") != MODEL_FORMAT:
        raise InputError(f"{path} is not an appspred model file")
    return ContextSchema.from_dict(obj["schema"]), RandomForest.from_dict(obj["forest"])


# -- commands --------------------------------------------------------------

def cmd_synth(run: _Run, p):
    overrides = {k: p[k] for k in ("n_records", "noise_rate", "missing_rate") if p.get(k) is not None}
    spec = preset(p["preset"], seed=p["seed"], **overrides)
    dataset = generate(spec)
    run.extra["generator"] = spec.to_dict()
    run.emit("schema.json", dataset.schema.to_json())
    run.emit("data.csv", dump_csv(dataset))


def cmd_train(run: _Run, p):
    encoded = encode_dataset(_dataset(run, p))
    config = _forest_config(p)
    forest = train_forest(encoded, config, n_jobs_from_env())
    run.extra["forest"] = asdict(config)
    run.emit("model.json", _model_json(encoded.encoder.schema, forest))


def cmd_predict(run: _Run, p):
    schema, forest = _load_model(run, p["model"])
    dataset = load_dataset(run.read(p["data"]), schema, require_label=False)
    encoder = LabelEncoder(schema)
    complete = [i for i, r in enumerate(dataset.records) if not any(r.missing_mask[:-1])]
    labels = schema.label_domain
    pred = np.zeros(0, dtype=np.int64)
    proba = np.zeros((0, len(labels)))
    if complete:
        X = np.array([encoder.encode_row(dataset.records[i].values) for i in complete], dtype=np.int64)
        pred = forest.predict(X)
        proba = forest.predict_proba(X)
    by_row = {i: k for k, i in enumerate(complete)}
    header = ["row", LABEL_COLUMN] + list(labels)
    lines = [",".join(_cell(h) for h in header)]
    for i in range(len(dataset)):
        if i in by_row:
            k = by_row[i]
            cells = [str(i), _cell(labels[pred[k]])] + [f"{v:.6f}" for v in proba[k]]
        else:  # records with missing contexts get no prediction
            cells = [str(i), "?"] + [""] * len(labels)
        lines.append(",".join(cells))
    run.extra["records"] = {"loaded": len(dataset), "predicted": len(complete)}
    run.emit("predictions.csv", "\n".join(lines) + "\n")


def _cell(s: str) -> str:
    return f'"{s}"' if any(ch in s for ch in ',"\n') else s


def cmd_sweep(run: _Run, p):
    encoded = encode_dataset(_dataset(run, p))
    result = sweep_optimal_trees(encoded, p["grid"], p["epsilon"], _cv(p), _forest_config(p, 1),
                                 n_jobs_from_env())
    run.extra["chosen_n"] = result.chosen_n
    run.extra["best_f1"] = max(pt.f1 for pt in result.curve)
    run.emit("sweep.csv", result.to_csv())


def cmd_time(run: _Run, p):
    encoded = encode_dataset(_dataset(run, p))
    report = measure_training_time(encoded, p["grid"], _forest_config(p, 1), n_jobs_from_env())
    run.emit("timing.csv", report.to_csv())


def _roster(p, n_trees):
    return default_roster(n_trees=n_trees, seed=p["seed"], subset_size=p.get("subset_size"),
                          dt_criterion=p["criterion"], alpha=p["alpha"],
                          learning_rate=p["learning_rate"], epochs=p["epochs"], l2=p["l2"], C=p["C"])


def cmd_evaluate(run: _Run, p):
    dataset = _dataset(run, p)
    encoded = encode_dataset(dataset)
    labels = list(encoded.encoder.schema.label_domain)
    if p.get("model"):
        config = _load_model(run, p["model"])[1].config
        factory = RandomForestClassifier(config.n_trees, config.feature_subset_size, config.bootstrap,
                                         config.seed, config.max_depth, config.min_samples_split,
                                         n_classes=encoded.n_classes)
        name, params = "RF", asdict(config)
    elif p["classifier"] == "RF":
        config = _forest_config(p)
        factory = RandomForestClassifier(config.n_trees, config.feature_subset_size, config.bootstrap,
                                         config.seed, n_classes=encoded.n_classes)
        name, params = "RF", asdict(config)
    else:
        name = p["classifier"]
        factory = dict(_roster(p, p["n_trees"]))[name]
        params = {}
    report = cross_validate(factory, encoded, _cv(p), n_jobs_from_env(), name=name, params=params)
    run.extra["mean"] = report.to_dict(labels)["mean"]
    run.extra["timings"] = report.timings
    run.emit("report.json", json.dumps(report.to_dict(labels), indent=2) + "\n")
    run.emit("per_class.csv", report.per_class_csv(labels))


def cmd_compare(run: _Run, p):
    encoded = encode_dataset(_dataset(run, p))
    n_trees = p.get("n_trees")
    if n_trees is None:
        sweep = sweep_optimal_trees(encoded, p["grid"], p["epsilon"], _cv(p), _forest_config(p, 1),
                                    n_jobs_from_env())
        n_trees = sweep.chosen_n
        run.extra["sweep"] = [asdict(pt) for pt in sweep.curve]
    run.extra["chosen_n"] = n_trees
    table = compare_models(encoded, _cv(p), _roster(p, n_trees), n_jobs_from_env())
    run.emit("comparison.csv", table.to_csv())


COMMANDS = {
    "synth": cmd_synth, "train": cmd_train, "predict": cmd_predict, "sweep": cmd_sweep,
    "time": cmd_time, "evaluate": cmd_evaluate, "compare": cmd_compare,
}

_PATH_PARAMS = ("data", "schema", "model")


def _resolved_params(ns: argparse.Namespace) -> dict:
    params = {k: v for k, v in vars(ns).items() if k != "command"}
    for key in _PATH_PARAMS:
        if params.get(key):
            params[key] = str(Path(params[key]).resolve())
    params["out_dir"] = str(Path(params["out_dir"]).resolve())
    return params


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="milliseconds")


def _commit(out_dir: Path, files: dict[str, bytes]) -> None:
    """Write every file via a temporary sibling + rename; undo all on failure."""
    out_dir.mkdir(parents=True, exist_ok=True)
    done = []
    try:
        for name, data in files.items():
            target = out_dir / name
            tmp = out_dir / f".{name}.tmp-{os.getpid()}"
            try:
                tmp.write_bytes(data)
                os.replace(tmp, target)
            finally:
                tmp.unlink(missing_ok=True)
            done.append(target)
    except BaseException:
        for path in done:
            path.unlink(missing_ok=True)
        raise


def execute(command: str, params: dict, argv=None) -> dict:
    """Run one command from resolved parameters; returns the manifest written."""
    run = _Run(params)
    started, t0 = _now(), time.perf_counter()
    COMMANDS[command](run, params)
    out_dir = Path(params["out_dir"])
    manifest = {
        "command": command,
        "argv": list(argv) if argv is not None else None,
        "params": params,
        "seeds": {"seed": params.get("seed"),
                  "tree_seeds": "tree_seed(seed, i) = splitmix64(seed + (i + 1) * 0x9E3779B97F4A7C15)"},
        "inputs": run.inputs,
        "outputs": {name: {"path": str(out_dir / name), "sha256": _sha256(data)}
                    for name, data in run.outputs.items()},
        "version": __version__,
        "started": started,
        "finished": _now(),
        "elapsed_seconds": round(time.perf_counter() - t0, 3),
        **run.extra,
    }
    files = dict(run.outputs)
    files[f"manifest_{command}.json"] = (json.dumps(manifest, indent=2) + "\n").encode("utf-8")
    _commit(out_dir, files)
    return manifest


def replay(manifest_path: str, out_dir: str | None = None) -> dict:
    """Rerun the command recorded in a manifest and compare artifact hashes."""
    old = json.loads(_read(manifest_path))
    command = old.get("command")
    if command not in COMMANDS:
        raise InputError(f"{manifest_path} names no known command")
    params = dict(old["params"])
    if out_dir is not None:
        params["out_dir"] = str(Path(out_dir).resolve())
    new = execute(command, params, old.get("argv"))
    changed = [name for name, entry in old["outputs"].items()
               if name not in NONDETERMINISTIC
               and new["outputs"].get(name, {}).get("sha256") != entry["sha256"]]
    if changed:
        raise AppsPredError(f"replay changed artifact(s): {', '.join(sorted(changed))}")
    return new


def _diagnostic(exc: BaseException) -> str:
    msg = str(exc) or type(exc).__name__
    if isinstance(exc, OSError) and exc.filename:
        msg = f"{exc.strerror or msg}: {exc.filename}"
    return " ".join(msg.split())


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    args = build_parser().parse_args(argv)
    try:
        if args.command == "replay":
            manifest = replay(args.manifest, args.out_dir)
        else:
            manifest = execute(args.command, _resolved_params(args), argv)
    except (AppsPredError, OSError, ValueError, KeyError, TypeError) as exc:
        print(f"appspred: error: {_diagnostic(exc)}", file=sys.stderr)
        return 1
    if "chosen_n" in manifest:
        print(f"chosen_n={manifest['chosen_n']}")
    for entry in manifest["outputs"].values():
        print(entry["path"])
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
