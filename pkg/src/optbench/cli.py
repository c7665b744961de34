"""Command line pipeline: gen, split, train, evaluate, report.

Configuration is flat dotted key=value pairs, read from --config files
(one pair per line, # comments) and overridden by repeated --set flags;
--seed and --data override their keys last. Exit codes: 0 success,
1 usage, 2 data problem, 3 training failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
import time
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .blackscholes import VOL_FLOOR, BsInputs, bs_price
from .core import (
    Dataset,
    OptionType,
    SplitSpec,
    filter_quotes,
    split_dataset,
    split_indices,
)
from .errors import (
    CsvRowError,
    DivergenceError,
    IncompatibleModelError,
    InconsistentEvaluationError,
    OptbenchError,
    SchemaError,
    UsageError,
    ValidationError,
)
from .evaluation import (
    ModelResult,
    compare_models,
    histogram,
    summary_stats,
    write_histogram_csv,
    write_report,
    write_summary_csv,
)
from .gbdt import EtaSchedule, GbdtConfig, TreeEnsemble, predict_gbdt, train_gbdt
from .ingest import (
    load_model,
    load_model_manifest,
    read_csv,
    save_model,
    write_csv,
    write_metrics_csv,
)
from .mlp import FIVE_LAYER, THREE_LAYER, MlpTrainConfig, forward, train_mlp
from .simgen import SimConfig, generate_dataset, realized_vol

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_TRAINING = 3

MODEL_KINDS = ("gbdt5", "gbdt10", "mlp3", "mlp5")

logger = logging.getLogger(__name__)


def _parse_int(text: str) -> int:
    return int(text)


def _parse_float(text: str) -> float:
    return float(text)


def _parse_float_list(text: str) -> tuple[float, ...]:
    return tuple(float(part) for part in text.split(",") if part != "")


def _parse_regimes(text: str) -> tuple[tuple[float, float], ...]:
    # "sigma:weight,sigma:weight,..."
    regimes = []
    for part in text.split(","):
        sigma, _, weight = part.partition(":")
        if not _:
            raise ValueError(f"expected sigma:weight, got {part!r}")
        regimes.append((float(sigma), float(weight)))
    return tuple(regimes)


def _parse_optional_int(text: str):
    if text.lower() in ("none", "null", ""):
        return None
    return int(text)


KNOWN_KEYS = {
    "data": str,
    "seed": _parse_int,
    "sim.n_underlyings": _parse_int,
    "sim.days_per_underlying": _parse_int,
    "sim.s0_min": _parse_float,
    "sim.s0_max": _parse_float,
    "sim.vol_regimes": _parse_regimes,
    "sim.drift": _parse_float,
    "sim.rate_min": _parse_float,
    "sim.rate_max": _parse_float,
    "sim.yield_min": _parse_float,
    "sim.yield_max": _parse_float,
    "sim.maturities": _parse_float_list,
    "sim.moneyness": _parse_float_list,
    "sim.half_spread": _parse_float,
    "sim.seed": _parse_int,
    "split.train_fraction": _parse_float,
    "split.val_fraction": _parse_float,
    "split.test_fraction": _parse_float,
    "split.seed": _parse_int,
    "gbdt.num_rounds": _parse_int,
    "gbdt.early_stopping_rounds": _parse_optional_int,
    "gbdt.n_bins": _parse_int,
    "gbdt.reg_lambda": _parse_float,
    "gbdt.min_child_weight": _parse_float,
    "gbdt.eta_base": _parse_float,
    "gbdt.eta_min": _parse_float,
    "gbdt.max_iter_decay": _parse_int,
    "mlp.initial_lr": _parse_float,
    "mlp.plateau_factor": _parse_float,
    "mlp.plateau_patience": _parse_int,
    "mlp.min_lr": _parse_float,
    "mlp.early_stop_patience": _parse_int,
    "mlp.max_epochs": _parse_int,
    "mlp.batch_size": _parse_int,
    "mlp.seed": _parse_int,
    "eval.curve_bins": _parse_int,
    "report.hist_bins": _parse_int,
}


def _set_key(cfg: dict, key: str, raw: str, source: str) -> None:
    if key not in KNOWN_KEYS:
        raise UsageError(f"{source}: unknown configuration key {key!r}")
    try:
        cfg[key] = KNOWN_KEYS[key](raw.strip())
    except ValueError as exc:
        raise UsageError(f"{source}: bad value for {key!r}: {exc}") from exc


def parse_config_file(path: str | Path) -> dict:
    """key = value lines; blank lines and # comments ignored."""
    path = Path(path)
    if not path.exists():
        raise UsageError(f"--config: no such file: {path}")
    cfg: dict = {}
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        key, sep, value = stripped.partition("=")
        if not sep:
            raise UsageError(f"{path}:{lineno}: expected key = value, got {line!r}")
        _set_key(cfg, key.strip(), value, f"{path}:{lineno}")
    return cfg


def load_config(args: argparse.Namespace) -> dict:
    cfg: dict = {}
    if args.config:
        cfg.update(parse_config_file(args.config))
    for item in args.set or []:
        key, sep, value = item.partition("=")
        if not sep:
            raise UsageError(f"--set: expected key=value, got {item!r}")
        _set_key(cfg, key.strip(), value, "--set")
    if getattr(args, "seed", None) is not None:
        cfg["seed"] = args.seed
    if getattr(args, "data", None) is not None:
        cfg["data"] = args.data
    return cfg


def _seed_for(cfg: dict, key: str) -> int:
    return cfg.get(key, cfg.get("seed", 0))


def build_sim_config(cfg: dict) -> SimConfig:
    defaults = SimConfig()
    try:
        return SimConfig(
            n_underlyings=cfg.get("sim.n_underlyings", defaults.n_underlyings),
            days_per_underlying=cfg.get(
                "sim.days_per_underlying", defaults.days_per_underlying
            ),
            s0_range=(
                cfg.get("sim.s0_min", defaults.s0_range[0]),
                cfg.get("sim.s0_max", defaults.s0_range[1]),
            ),
            vol_regimes=cfg.get("sim.vol_regimes", defaults.vol_regimes),
            drift=cfg.get("sim.drift", defaults.drift),
            rate_range=(
                cfg.get("sim.rate_min", defaults.rate_range[0]),
                cfg.get("sim.rate_max", defaults.rate_range[1]),
            ),
            yield_range=(
                cfg.get("sim.yield_min", defaults.yield_range[0]),
                cfg.get("sim.yield_max", defaults.yield_range[1]),
            ),
            maturities=cfg.get("sim.maturities", defaults.maturities),
            moneyness_grid=cfg.get("sim.moneyness", defaults.moneyness_grid),
            half_spread=cfg.get("sim.half_spread", defaults.half_spread),
            seed=_seed_for(cfg, "sim.seed"),
        )
    except ValidationError as exc:
        raise UsageError(f"sim configuration: {exc}") from exc


def build_split_spec(cfg: dict) -> SplitSpec:
    defaults = SplitSpec()
    try:
        return SplitSpec(
            train_fraction=cfg.get("split.train_fraction", defaults.train_fraction),
            val_fraction=cfg.get("split.val_fraction", defaults.val_fraction),
            test_fraction=cfg.get("split.test_fraction", defaults.test_fraction),
            seed=_seed_for(cfg, "split.seed"),
        )
    except ValidationError as exc:
        raise UsageError(f"split configuration: {exc}") from exc


def build_gbdt_config(cfg: dict, max_depth: int) -> GbdtConfig:
    defaults = GbdtConfig()
    try:
        eta = EtaSchedule(
            eta_base=cfg.get("gbdt.eta_base", EtaSchedule().eta_base),
            eta_min=cfg.get("gbdt.eta_min", EtaSchedule().eta_min),
            max_iter_decay=cfg.get("gbdt.max_iter_decay", EtaSchedule().max_iter_decay),
        )
        return GbdtConfig(
            max_depth=max_depth,
            num_rounds=cfg.get("gbdt.num_rounds", defaults.num_rounds),
            early_stopping_rounds=cfg.get(
                "gbdt.early_stopping_rounds", defaults.early_stopping_rounds
            ),
            n_bins=cfg.get("gbdt.n_bins", defaults.n_bins),
            reg_lambda=cfg.get("gbdt.reg_lambda", defaults.reg_lambda),
            min_child_weight=cfg.get("gbdt.min_child_weight", defaults.min_child_weight),
            eta=eta,
        )
    except ValidationError as exc:
        raise UsageError(f"gbdt configuration: {exc}") from exc


def build_mlp_config(cfg: dict) -> MlpTrainConfig:
    defaults = MlpTrainConfig()
    try:
        return MlpTrainConfig(
            initial_lr=cfg.get("mlp.initial_lr", defaults.initial_lr),
            plateau_factor=cfg.get("mlp.plateau_factor", defaults.plateau_factor),
            plateau_patience=cfg.get("mlp.plateau_patience", defaults.plateau_patience),
            min_lr=cfg.get("mlp.min_lr", defaults.min_lr),
            early_stop_patience=cfg.get(
                "mlp.early_stop_patience", defaults.early_stop_patience
            ),
            max_epochs=cfg.get("mlp.max_epochs", defaults.max_epochs),
            batch_size=cfg.get("mlp.batch_size", defaults.batch_size),
            seed=_seed_for(cfg, "mlp.seed"),
        )
    except ValidationError as exc:
        raise UsageError(f"mlp configuration: {exc}") from exc


def _require_data(cfg: dict) -> Path:
    if "data" not in cfg:
        raise UsageError("no dataset given; pass --data or set data= in the config")
    return Path(cfg["data"])


def _sim_config_manifest(sim: SimConfig) -> dict:
    return {
        "n_underlyings": sim.n_underlyings,
        "days_per_underlying": sim.days_per_underlying,
        "s0_range": list(sim.s0_range),
        "vol_regimes": [list(r) for r in sim.vol_regimes],
        "drift": sim.drift,
        "rate_range": list(sim.rate_range),
        "yield_range": list(sim.yield_range),
        "maturities": list(sim.maturities),
        "moneyness_grid": list(sim.moneyness_grid),
        "half_spread": sim.half_spread,
        "seed": sim.seed,
    }


def _split_manifest(spec: SplitSpec) -> dict:
    return {
        "train_fraction": spec.train_fraction,
        "val_fraction": spec.val_fraction,
        "test_fraction": spec.test_fraction,
        "seed": spec.seed,
    }


def _write_json(doc: dict, path: Path) -> None:
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _file_digest(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _now() -> str:
    return datetime.now(timezone.utc).isoformat()


def cmd_gen(cfg: dict, out: Path) -> int:
    sim = build_sim_config(cfg)
    quotes = generate_dataset(sim)
    if not quotes:
        logger.warning("generated an empty dataset (n_underlyings=%d)", sim.n_underlyings)
    out.mkdir(parents=True, exist_ok=True)
    data_path = write_csv(quotes, out / "dataset.csv")
    _write_json(
        {
            "command": "gen",
            "rows": len(quotes),
            "config": _sim_config_manifest(sim),
            "created_at": _now(),
        },
        out / "dataset.manifest.json",
    )
    print(f"wrote {len(quotes)} quotes to {data_path}")
    return EXIT_OK


def _load_filtered(data_path: Path):
    quotes = read_csv(data_path)
    kept, dropped, by_reason = filter_quotes(quotes)
    if dropped:
        logger.warning("dropped %d of %d quotes: %s", dropped, len(quotes), by_reason)
    return kept, dropped, by_reason


def cmd_split(cfg: dict, out: Path) -> int:
    data_path = _require_data(cfg)
    spec = build_split_spec(cfg)
    kept, dropped, by_reason = _load_filtered(data_path)
    if not kept:
        raise ValidationError(f"{data_path}: no usable quotes after filtering")
    train_idx, val_idx, test_idx = split_indices(len(kept), spec)
    out.mkdir(parents=True, exist_ok=True)
    parts = {}
    for name, idx in (("train", train_idx), ("val", val_idx), ("test", test_idx)):
        part_path = write_csv([kept[i] for i in idx], out / f"{name}.csv")
        parts[name] = {"rows": int(len(idx)), "path": part_path.name}
    _write_json(
        {
            "command": "split",
            "source_rows": len(kept) + dropped,
            "kept_rows": len(kept),
            "dropped_rows": dropped,
            "dropped_by_reason": by_reason,
            "split": _split_manifest(spec),
            "parts": parts,
            "created_at": _now(),
        },
        out / "split.manifest.json",
    )
    print(
        f"split {len(kept)} quotes into "
        f"{len(train_idx)} train / {len(val_idx)} val / {len(test_idx)} test"
    )
    return EXIT_OK


def cmd_train(cfg: dict, kind: str, out: Path) -> int:
    data_path = _require_data(cfg)
    spec = build_split_spec(cfg)
    kept, _, _ = _load_filtered(data_path)
    if not kept:
        raise ValidationError(f"{data_path}: no usable quotes after filtering")
    ds = Dataset.from_quotes(kept, provenance="ingested")
    train, val, _ = split_dataset(ds, spec)
    digest = _file_digest(data_path)

    started = time.perf_counter()
    if kind in ("gbdt5", "gbdt10"):
        depth = 5 if kind == "gbdt5" else 10
        gcfg = build_gbdt_config(cfg, max_depth=depth)
        model = train_gbdt(train, val, gcfg)
        records = model.history
        best = model.best_round
        hyper = {
            "max_depth": gcfg.max_depth,
            "num_rounds": gcfg.num_rounds,
            "early_stopping_rounds": gcfg.early_stopping_rounds,
            "n_bins": gcfg.n_bins,
            "reg_lambda": gcfg.reg_lambda,
            "min_child_weight": gcfg.min_child_weight,
            "eta_base": gcfg.eta.eta_base,
            "eta_min": gcfg.eta.eta_min,
            "max_iter_decay": gcfg.eta.max_iter_decay,
            "eval_metric": gcfg.eval_metric,
        }
        progress = {"rounds_trained": len(records), "best_round": best}
    elif kind in ("mlp3", "mlp5"):
        arch = THREE_LAYER if kind == "mlp3" else FIVE_LAYER
        mcfg = build_mlp_config(cfg)
        model, records = train_mlp(train, val, arch, mcfg)
        best = min(range(len(records)), key=lambda i: records[i].val_mae) + 1 if records else 0
        hyper = {
            "layers": [[spec_.units, spec_.activation] for spec_ in arch.layers],
            "initial_lr": mcfg.initial_lr,
            "plateau_factor": mcfg.plateau_factor,
            "plateau_patience": mcfg.plateau_patience,
            "min_lr": mcfg.min_lr,
            "early_stop_patience": mcfg.early_stop_patience,
            "max_epochs": mcfg.max_epochs,
            "batch_size": mcfg.batch_size,
            "beta1": mcfg.beta1,
            "beta2": mcfg.beta2,
            "epsilon": mcfg.epsilon,
            "seed": mcfg.seed,
        }
        progress = {"epochs_trained": len(records), "best_epoch": best}
    else:
        raise UsageError(f"unknown model kind {kind!r}; expected one of {MODEL_KINDS}")
    seconds = time.perf_counter() - started

    out.mkdir(parents=True, exist_ok=True)
    manifest = {
        "kind": kind,
        "hyperparameters": hyper,
        "dataset_digest": digest,
        "dataset_name": data_path.name,
        "split": _split_manifest(spec),
    }
    model_path = save_model(model, out / f"{kind}.model", manifest)
    if records:
        write_metrics_csv(records, out / f"{kind}_metrics.csv")
    _write_json(
        {
            **manifest,
            **progress,
            "training_seconds": seconds,
            "trained_at": _now(),
            "final_val_mae": records[-1].val_mae if records else None,
        },
        out / f"{kind}.manifest.json",
    )
    print(f"trained {kind} in {seconds:.1f}s; model at {model_path}")
    return EXIT_OK


def _bs_implied_predictions(test: Dataset) -> np.ndarray:
    vols = test.implied_vols
    if not np.all(np.isfinite(vols)):
        missing = int(np.sum(~np.isfinite(vols)))
        raise ValidationError(
            f"implied_vol: {missing} evaluation rows have no implied volatility; "
            "the repricing baseline needs it on every row"
        )
    return _bs_predictions(test, vols)


def _bs_realized_predictions(test: Dataset) -> np.ndarray:
    vols = np.array(
        [max(realized_vol(row[6:]), VOL_FLOOR) for row in test.features]
    )
    return _bs_predictions(test, vols)


def _bs_predictions(test: Dataset, vols: np.ndarray) -> np.ndarray:
    preds = np.empty(len(test))
    for i, row in enumerate(test.features):
        preds[i] = bs_price(
            BsInputs(
                underlying_price=row[1],
                strike=row[0],
                maturity_years=row[4],
                rate=row[2],
                dividend_yield=row[3],
                sigma=float(vols[i]),
                option_type=OptionType.CALL if row[5] == 1.0 else OptionType.PUT,
            )
        )
    return preds


def cmd_evaluate(cfg: dict, model_paths: list[str], include_bs: bool, out: Path) -> int:
    data_path = _require_data(cfg)
    spec = build_split_spec(cfg)
    kept, _, _ = _load_filtered(data_path)
    if not kept:
        raise ValidationError(f"{data_path}: no usable quotes after filtering")
    ds = Dataset.from_quotes(kept, provenance="ingested")
    _, _, test = split_dataset(ds, spec)
    if len(test) == 0:
        raise ValidationError(
            f"{data_path}: the test fraction selects zero rows; nothing to evaluate"
        )
    digest = _file_digest(data_path)

    results = []
    for raw_path in model_paths:
        path = Path(raw_path)
        model = load_model(path)
        manifest = load_model_manifest(path)
        stored_digest = manifest.get("dataset_digest")
        if stored_digest is not None and stored_digest != digest:
            raise InconsistentEvaluationError(
                f"{path}: model was trained from a dataset with digest "
                f"{stored_digest[:12]}..., but {data_path} has {digest[:12]}..."
            )
        stored_split = manifest.get("split")
        if stored_split is not None and stored_split != _split_manifest(spec):
            raise InconsistentEvaluationError(
                f"{path}: model was trained with split {stored_split}, "
                f"but this evaluation uses {_split_manifest(spec)}"
            )
        if isinstance(model, TreeEnsemble):
            preds = predict_gbdt(model, test.features)
        else:
            preds = forward(model, test.features)
        training_seconds = None
        side = path.with_suffix(".manifest.json")
        if side.exists():
            try:
                training_seconds = json.loads(side.read_text(encoding="utf-8")).get(
                    "training_seconds"
                )
            except (OSError, json.JSONDecodeError):
                training_seconds = None
        results.append(
            ModelResult(
                name=manifest.get("kind", path.stem),
                predictions=preds,
                targets=test.targets,
                training_seconds=training_seconds,
            )
        )
    if include_bs:
        results.append(
            ModelResult("bs_implied", _bs_implied_predictions(test), test.targets)
        )
        results.append(
            ModelResult("bs_realized", _bs_realized_predictions(test), test.targets)
        )
    report = compare_models(results, cfg.get("eval.curve_bins", 20))
    out.mkdir(parents=True, exist_ok=True)
    written = write_report(report, out)
    _write_json(
        {
            "command": "evaluate",
            "dataset_digest": digest,
            "split": _split_manifest(spec),
            "rows_evaluated": report.n_rows,
            "models": [row.name for row in report.rows],
            "created_at": _now(),
        },
        out / "evaluate.manifest.json",
    )
    print(report.to_text(), end="")
    print(f"report files in {written[0].parent}")
    return EXIT_OK


REPORT_COLUMNS = (
    "midpoint",
    "strike",
    "underlying_price",
    "rate",
    "dividend_yield",
    "maturity_years",
    "implied_vol",
)


def cmd_report(cfg: dict, out: Path) -> int:
    data_path = _require_data(cfg)
    kept, _, _ = _load_filtered(data_path)
    if not kept:
        raise ValidationError(f"{data_path}: no usable quotes after filtering")
    ds = Dataset.from_quotes(kept, provenance="ingested")
    n_bins = cfg.get("report.hist_bins", 30)
    out.mkdir(parents=True, exist_ok=True)
    stats = {}
    for column in REPORT_COLUMNS:
        values = ds.column(column)
        if column == "implied_vol":
            values = values[np.isfinite(values)]
            if values.size == 0:
                continue
        stats[column] = summary_stats(values)
        write_histogram_csv(histogram(values, n_bins), out / f"hist_{column}.csv")
    write_summary_csv(stats, out / "summary.csv")
    width = max(len(c) for c in stats)
    print(f"{'column'.ljust(width)}  {'count':>8}  {'mean':>12}  {'std':>12}  "
          f"{'min':>12}  {'median':>12}  {'max':>12}")
    for column, s in stats.items():
        print(
            f"{column.ljust(width)}  {s.count:>8}  {s.mean:>12.4f}  {s.std:>12.4f}  "
            f"{s.minimum:>12.4f}  {s.median:>12.4f}  {s.maximum:>12.4f}"
        )
    print(f"summary files in {out}")
    return EXIT_OK


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # route argparse failures to exit code 1
        raise UsageError(message)


def build_parser() -> _Parser:
    parser = _Parser(prog="optbench", description=__doc__)
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="key = value configuration file")
        p.add_argument("--set", action="append", metavar="KEY=VALUE",
                       help="override one configuration key (repeatable)")
        p.add_argument("--seed", type=int, help="master seed override")
        p.add_argument("--data", help="dataset CSV path")
        p.add_argument("--out", default=".", help="output directory (default: .)")

    p_gen = sub.add_parser("gen", help="generate a synthetic quote dataset")
    common(p_gen)

    p_split = sub.add_parser("split", help="filter and split a dataset CSV")
    common(p_split)

    p_train = sub.add_parser("train", help="train one model on a dataset")
    p_train.add_argument("kind", choices=MODEL_KINDS)
    common(p_train)

    p_eval = sub.add_parser("evaluate", help="score trained models on the test split")
    p_eval.add_argument("models", nargs="*", help="model file paths")
    p_eval.add_argument("--include-bs", action="store_true",
                        help="add the closed-form repricing baselines")
    common(p_eval)

    p_report = sub.add_parser("report", help="summarize a dataset's distributions")
    common(p_report)
    return parser


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        cfg = load_config(args)
        out = Path(args.out)
        if args.command == "gen":
            return cmd_gen(cfg, out)
        if args.command == "split":
            return cmd_split(cfg, out)
        if args.command == "train":
            return cmd_train(cfg, args.kind, out)
        if args.command == "evaluate":
            if not args.models and not args.include_bs:
                raise UsageError("evaluate: give at least one model path or --include-bs")
            return cmd_evaluate(cfg, args.models, args.include_bs, out)
        if args.command == "report":
            return cmd_report(cfg, out)
        raise UsageError(f"unknown command {args.command!r}")
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DivergenceError as exc:
        print(f"training error: {exc}", file=sys.stderr)
        return EXIT_TRAINING
    except (OptbenchError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except SystemExit as exc:  # argparse --help/--version
        code = exc.code
        return int(code) if isinstance(code, int) else 0


if __name__ == "__main__":
    sys.exit(main())
