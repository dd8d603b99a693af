"""Command-line interface: ``scorekit <command> --input data.csv ...``."""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from . import classification, comparison, decomposition, identification, simulation
from .core import EvaluationSample, ScoreSpec, TargetFunctional
from .data_io import ColumnSchema, FeatureKind, SplitMethod, SplitSpec, partitions_csv, read_csv_text, split
from .errors import ScorekitError

DIGITS = 6
DECOMPOSITION_RTOL = decomposition.IDENTITY_RTOL


class UsageError(ScorekitError, ValueError):
    module = "cli"


# ---------------------------------------------------------------- formatting


def _fmt(value, digits: Optional[int] = DIGITS) -> str:
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        v = float(value)
        if math.isnan(v):
            return "nan"
        return f"{v:.{digits}g}" if digits else repr(v)
    return str(value)


def _jsonable(value):
    if isinstance(value, dict):
        return {k: _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return [_jsonable(v) for v in value.tolist()]
    if isinstance(value, (np.bool_,)):
        return bool(value)
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        v = float(value)
        return v if math.isfinite(v) else None
    return value


@dataclass
class Report:
    """A table of rows plus metadata; rendered once the command succeeded."""

    columns: list
    rows: list
    meta: dict

    def render(self, fmt: str) -> str:
        if fmt == "json":
            payload = dict(self.meta)
            payload["rows"] = [dict(zip(self.columns, r)) for r in self.rows]
            return json.dumps(_jsonable(payload), indent=2, sort_keys=False) + "\n"
        if fmt == "csv":
            buf = io.StringIO()
            writer = csv.writer(buf, lineterminator="\n")
            writer.writerow(self.columns)
            for r in self.rows:
                writer.writerow([_fmt(v) for v in r])
            return buf.getvalue()
        cells = [[str(c) for c in self.columns]] + [[_fmt(v) or "-" for v in r] for r in self.rows]
        widths = [max(len(row[i]) for row in cells) for i in range(len(self.columns))]
        lines = []
        for key, value in self.meta.items():
            if not isinstance(value, (list, dict)):
                lines.append(f"# {key}: {_fmt(value)}")
        for j, row in enumerate(cells):
            lines.append("  ".join(c.rjust(w) if j else c.ljust(w) for c, w in zip(row, widths)).rstrip())
        return "\n".join(lines) + "\n"


# ------------------------------------------------------------------ parsing


def _split_list(text: Optional[str]) -> list[str]:
    return [t.strip() for t in text.split(",") if t.strip()] if text else []


def _floats(text: str, what: str) -> list[float]:
    try:
        return [float(t) for t in _split_list(text)]
    except ValueError:
        raise UsageError(f"{what} must be a comma-separated list of numbers, got {text!r}") from None


def _feature_flags(flags: Sequence[str]) -> list[tuple[str, Optional[FeatureKind]]]:
    out = []
    for flag in flags or []:
        name, _, kind = flag.partition(":")
        if not kind:
            out.append((name, None))
            continue
        kind = {"num": "numeric", "cat": "categorical"}.get(kind, kind)
        try:
            out.append((name, FeatureKind(kind)))
        except ValueError:
            raise UsageError(f"feature kind must be numeric or categorical, got {flag!r}") from None
    return out


def _looks_numeric(text: str, column: str) -> bool:
    reader = csv.reader(io.StringIO(text))
    header = [h.strip() for h in next(reader, [])]
    if column not in header:
        return True  # let the loader report the missing column
    j = header.index(column)
    for row in reader:
        if len(row) > j and row[j].strip():
            try:
                float(row[j])
            except ValueError:
                return False
    return True


def _read_input(path: str) -> str:
    if path == "-":
        return sys.stdin.read()
    with open(path, newline="", encoding="utf-8-sig") as fh:
        return fh.read()


def _load(args, preds: Sequence[str], extra_features: Sequence[str] = ()) -> EvaluationSample:
    text = _read_input(args.input)
    feats = _feature_flags(args.feature)
    declared = {name for name, _ in feats}
    feats += [(name, None) for name in extra_features if name not in declared and name != args.obs]
    resolved = []
    for name, kind in feats:
        if kind is None:
            kind = FeatureKind.NUMERIC if _looks_numeric(text, name) else FeatureKind.CATEGORICAL
        resolved.append((name, kind))
    schema = ColumnSchema(response=args.obs, predictions=tuple(preds), weight=args.weight, features=tuple(resolved))
    return read_csv_text(text, schema)


def _score_spec(text: str) -> ScoreSpec:
    return ScoreSpec.parse(text)


def _models(args) -> list[str]:
    models = _split_list(args.pred)
    if not models:
        raise UsageError("at least one prediction column is required (--pred)")
    return models


# ----------------------------------------------------------------- commands


def cmd_score(args) -> Report:
    spec = _score_spec(args.score)
    models = _models(args)
    functional = TargetFunctional.parse(args.functional) if args.functional else spec.functional()
    reference = args.reference
    if reference == "trivial" and functional is None:
        raise UsageError(f"score {spec.name} has no default functional; pass --functional or --reference")
    sample = _load(args, models)
    meta = {"command": "score", "score": spec.name}
    if reference == "trivial":
        if args.train:
            train = read_csv_text(_read_input(args.train), ColumnSchema(response=args.obs, weight=args.weight))
            const = comparison.trivial_model(functional, train.y, train.weights)
            source = f"trivial {functional} of --train file"
        else:
            const = comparison.trivial_model(functional, sample.y, sample.weights)
            source = f"trivial {functional} of the evaluation sample"
        sample = sample.with_predictions(trivial=const)
        models = models + ["trivial"] if "trivial" not in models else models
        meta["reference"] = "trivial"
        meta["reference_source"] = source
        meta["trivial_prediction"] = const
    else:
        if reference not in models:
            models.append(reference)
            sample = _load(args, models)
        meta["reference"] = reference
    summaries = {m: comparison.empirical_score(spec, sample, m) for m in models}
    ref_score = summaries[reference].mean_score
    rows = []
    for m in models:
        s = summaries[m]
        skill = comparison.skill_score(spec, sample, m, reference) if ref_score > 0 else None
        rows.append([m, s.mean_score, s.std_error, s.n, s.weighted, skill])
    return Report(["model", "mean_score", "std_error", "n", "weighted", "skill_score"], rows, meta)


def _parse_phi(text: str, sample: EvaluationSample) -> list:
    kind, _, rest = text.partition(":")
    if kind == "bins":
        name, _, k = rest.rpartition(":")
        try:
            k = int(k)
        except ValueError:
            raise UsageError(f"bins needs NAME:K, got {text!r}") from None
        return identification.quantile_bins(sample, name, k)
    return [identification.parse_test_function(text)]


def _phi_features(texts: Sequence[str]) -> list[str]:
    names = []
    for text in texts:
        kind, _, rest = text.partition(":")
        if kind in ("col", "bins", "bin"):
            names.append(rest.split(":")[0])
        elif kind == "cat":
            names.append(rest.partition("=")[0])
        elif kind == "product":
            names += _phi_features(rest.split("*"))
    return names


def _check_phi_syntax(texts: Sequence[str]) -> None:
    for text in texts:
        kind, _, rest = text.partition(":")
        if kind == "bins":
            if rest.count(":") < 1:
                raise UsageError(f"bins needs NAME:K, got {text!r}")
        elif kind == "product":
            _check_phi_syntax(rest.split("*"))
        elif text not in ("constant", "model") and kind not in ("col", "cat", "bin"):
            raise UsageError(f"unknown test function {text!r}")


def cmd_calibrate(args) -> Report:
    functional = TargetFunctional.parse(args.functional or "mean")
    _check_phi_syntax(args.phi or [])
    model = args.model or (_models(args)[0])
    sample = _load(args, [model], extra_features=_phi_features(args.phi or []))
    phis = []
    for text in args.phi or []:
        phis += _parse_phi(text, sample)
    rows_ = identification.calibration_report(
        functional, sample, model, phis=phis, include_defaults=not args.no_defaults
    )
    meta = {"command": "calibrate", "functional": str(functional), "model": model, "n": sample.n}
    if args.joint_wald:
        chosen = phis if phis else identification.default_test_functions(sample, drop_first_level=True)
        w, p = identification.wald_joint_test(functional, sample, model, chosen)
        meta["wald_statistic"] = w
        meta["wald_p_value"] = p
        meta["wald_df"] = len(chosen)
    rows = [[r.test_function, r.v_bar, r.std_error, r.t_stat, r.p_value, r.n_effective] for r in rows_]
    return Report(["test_function", "v_bar", "std_error", "t_stat", "p_value", "n_effective"], rows, meta)


def cmd_compare(args) -> Report:
    spec = _score_spec(args.score)
    alternative = comparison.Alternative.parse(args.alternative)
    sample = _load(args, [args.model_a] + ([args.model_b] if args.model_b != args.model_a else []))
    res = comparison.dm_test(spec, sample, args.model_a, args.model_b, alternative)
    meta = {
        "command": "compare",
        "score": spec.name,
        "model_a": args.model_a,
        "model_b": args.model_b,
        "alternative": alternative.value,
    }
    return Report(["mean_diff", "t", "p", "n"], [[res.mean_diff, res.t_stat, res.p_value, res.n]], meta)


def cmd_murphy(args) -> Report:
    models = _models(args)
    window = None
    if args.window:
        bounds = _floats(args.window, "--window")
        if len(bounds) != 2:
            raise UsageError("--window takes LO,HI")
        window = tuple(bounds)
    if args.mode == "tweedie":
        powers = _floats(args.powers, "--powers")
        if not powers:
            raise UsageError("--powers must not be empty")
        for p in powers:
            if 0.0 < p < 1.0:
                raise UsageError(f"Tweedie power {p:g} lies in the excluded interval (0, 1)")
        sample = _load(args, models)
        curve = comparison.murphy_tweedie(sample, models, powers, rescale=not args.no_rescale)
    else:
        grid = _floats(args.theta_grid, "--theta-grid") if args.theta_grid else None
        sample = _load(args, models)
        if grid is None and args.grid_points:
            lo, hi = window if window else (
                float(min(sample.y.min(), *(sample.prediction(m).min() for m in models))),
                float(max(sample.y.max(), *(sample.prediction(m).max() for m in models))),
            )
            grid = np.linspace(lo, hi, args.grid_points)
        curve = comparison.murphy_elementary(sample, models, grid, window)
    meta = {"command": "murphy", "mode": args.mode, "rescaled": curve.rescaled}
    return Report(["parameter", "model", "mean_score"], [list(r) for r in curve.rows()], meta)


def cmd_decompose(args) -> Report:
    spec = _score_spec(args.score)
    if not spec.is_bregman():
        raise UsageError(f"decomposition needs a consistent score for the mean, got {spec.name}")
    model = args.model or _models(args)[0]
    sample = _load(args, [model])
    res, fit = decomposition.corp_decomposition(spec, sample, model)
    err = res.identity_error()
    if not err <= DECOMPOSITION_RTOL:
        raise ScorekitError(f"decomposition identity violated (relative error {err:.3g})")
    points = decomposition.reliability_points(fit)
    if args.reliability:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["prediction", "cep"])
        for p, c in points:
            writer.writerow([repr(p), repr(c)])
        _write_file(args.reliability, buf.getvalue())
    meta = {"command": "decompose", "score": spec.name, "model": model, "n": sample.n}
    if args.format == "json":
        meta["reliability"] = [{"prediction": p, "cep": c} for p, c in points]
    rows = [[res.mean_score, res.mcb, res.dsc, res.unc, fit.n_blocks]]
    return Report(["mean_score", "mcb", "dsc", "unc", "blocks"], rows, meta)


def cmd_roc(args) -> Report:
    model = args.model or _models(args)[0]
    sample = _load(args, [model])
    binary = classification.BinarySample.from_sample(sample)
    res = classification.roc_auc(binary, model)
    stats = classification.confusion_stats(binary, model, args.threshold)
    if args.curve:
        _write_file(args.curve, res.curve.to_csv())
    meta = {"command": "roc", "model": model, "threshold": args.threshold}
    if args.format == "json":
        meta["curve"] = {"c": res.curve.thresholds, "far": res.curve.far, "hr": res.curve.hr}
    row = [
        res.auc,
        res.mann_whitney_u,
        stats.hr,
        stats.far,
        stats.accuracy,
        classification.trivial_accuracy(binary),
        classification.log_loss(binary, model) if _log_loss_defined(binary, model) else None,
        classification.brier_score(binary, model),
    ]
    cols = ["auc", "mann_whitney_u", "hit_rate", "false_alarm_rate", "accuracy", "trivial_accuracy", "log_loss", "brier"]
    return Report(cols, [row], meta)


def _log_loss_defined(binary, model) -> bool:
    p, y = binary.probability(model), binary.y
    return not np.any(((p == 0) & (y == 1)) | ((p == 1) & (y == 0)))


def cmd_simulate_efficiency(args) -> Report:
    grid = [int(v) for v in _floats(args.n_grid, "--n-grid")]
    powers = _floats(args.powers, "--powers")
    cfg = simulation.GammaSimConfig(seed=args.seed, dispersion=args.dispersion)
    results = simulation.efficiency_study(
        cfg,
        train_size=args.train_size,
        n_grid=grid,
        replications=args.replications,
        powers=powers,
        refit=args.refit,
    )
    rows = []
    for res in results:
        for n, cv, scv, undef in zip(res.n_grid, res.cv, res.sqrt_n_cv, res.undefined):
            rows.append([res.score, int(n), cv, scv, res.replications, bool(undef)])
    meta = {"command": "simulate-efficiency", "seed": args.seed, "refit": args.refit}
    if any(r[-1] for r in rows):
        print("warning: [simulation] coefficient of variation undefined for some rows (nan)", file=sys.stderr)
    return Report(["score", "n", "cv", "sqrt_n_cv", "replications", "cv_undefined"], rows, meta)


def cmd_split(args) -> Report:
    fractions = _floats(args.fractions, "--fractions")
    names = tuple(_split_list(args.names)) or None
    spec = SplitSpec(
        method=SplitMethod(args.method.replace("-", "_")),
        fractions=tuple(fractions),
        k=args.k,
        seed=args.seed,
        column=args.column,
        names=names,
    )
    extra = [spec.column] if spec.column and spec.column != args.obs else []
    sample = _load(args, [], extra_features=extra)
    parts = split(sample, spec)
    text = partitions_csv(parts)
    rows = [line.split(",") for line in text.strip().splitlines()[1:]]
    rows = [[int(i), p] for i, p in rows]
    meta = {"command": "split", "method": spec.method.value, "seed": spec.seed}
    return Report(["row_index", "partition"], rows, meta)


# ------------------------------------------------------------------- driver


def _write_file(path: str, text: str) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


def _common(p: argparse.ArgumentParser, needs_input: bool = True) -> None:
    if needs_input:
        p.add_argument("--input", required=True, help="CSV file with a header row ('-' for stdin)")
        p.add_argument("--obs", default="y", help="observation column (default: y)")
        p.add_argument("--pred", help="comma-separated prediction columns")
        p.add_argument("--weight", help="case weight column")
        p.add_argument(
            "--feature", action="append", default=[], metavar="NAME[:KIND]", help="feature column; KIND numeric|categorical"
        )
    p.add_argument("--format", choices=("table", "csv", "json"), default="table")
    p.add_argument("--out", help="write the result here instead of stdout")
    p.add_argument("--seed", type=int, default=0)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="scorekit", description="Evaluate point forecasts with consistent scores.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("score", help="mean scores and skill against a reference")
    _common(p)
    p.add_argument("--score", required=True, help="NAME[:PARAM], e.g. gamma, tweedie:1.5, pinball:0.9")
    p.add_argument("--functional", help="functional for the trivial reference (default: from the score)")
    p.add_argument("--reference", default="trivial", help="reference model column, or 'trivial'")
    p.add_argument("--train", help="CSV whose observations define the trivial reference")
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("calibrate", help="generalized residuals against test functions")
    _common(p)
    p.add_argument("--functional", default="mean")
    p.add_argument("--model", help="prediction column (default: first of --pred)")
    p.add_argument(
        "--phi",
        action="append",
        default=[],
        help="constant | model | col:NAME | cat:NAME=LABEL | bins:NAME:K | product:A*B",
    )
    p.add_argument("--no-defaults", action="store_true", help="only use the --phi test functions")
    p.add_argument("--joint-wald", action="store_true", help="joint Wald test over --phi (or the defaults less one level per category)")
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("compare", help="Diebold-Mariano test of two models")
    _common(p)
    p.add_argument("--score", required=True)
    p.add_argument("--model-a", required=True)
    p.add_argument("--model-b", required=True)
    p.add_argument("--alternative", default="two-sided", help="two-sided | a-greater | b-greater")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("murphy", help="Murphy diagram data (long CSV)")
    _common(p)
    p.add_argument("--mode", choices=("elementary", "tweedie"), default="elementary")
    p.add_argument("--window", help="LO,HI restricts the theta grid")
    p.add_argument("--theta-grid", help="explicit comma-separated theta values")
    p.add_argument("--grid-points", type=int, help="uniform theta grid with this many points")
    p.add_argument("--powers", default="0,1,1.5,2,3", help="Tweedie powers (tweedie mode)")
    p.add_argument("--no-rescale", action="store_true", help="do not multiply by ybar**(p-2)")
    p.set_defaults(func=cmd_murphy, format="csv")

    p = sub.add_parser("decompose", help="miscalibration/discrimination/uncertainty decomposition")
    _common(p)
    p.add_argument("--score", default="squared_error")
    p.add_argument("--model", help="prediction column (default: first of --pred)")
    p.add_argument("--reliability", help="write reliability diagram points to this CSV")
    p.set_defaults(func=cmd_decompose)

    p = sub.add_parser("roc", help="ROC curve, AUC and confusion statistics")
    _common(p)
    p.add_argument("--model", help="probability column (default: first of --pred)")
    p.add_argument("--threshold", type=float, default=0.5, help="classify 1 iff p > threshold")
    p.add_argument("--curve", help="write the ROC curve (c, far, hr) to this CSV")
    p.set_defaults(func=cmd_roc)

    p = sub.add_parser("simulate-efficiency", help="convergence of mean score differences")
    _common(p, needs_input=False)
    p.add_argument("--n-grid", default=",".join(str(n) for n in simulation.DEFAULT_N_GRID))
    p.add_argument("--replications", type=int, default=50)
    p.add_argument("--train-size", type=int, default=1000)
    p.add_argument("--powers", default="0,1,2,3")
    p.add_argument("--dispersion", type=float, default=2.0)
    p.add_argument("--refit", action="store_true", help="draw a fresh training set per replication")
    p.set_defaults(func=cmd_simulate_efficiency, format="csv")

    p = sub.add_parser("split", help="train/test partitions as (row_index, partition) CSV")
    _common(p)
    p.add_argument("--method", default="random", choices=[m.value.replace("_", "-") for m in SplitMethod])
    p.add_argument("--fractions", default="0.8,0.2")
    p.add_argument("--k", type=int)
    p.add_argument("--column", help="strata, group or ordering column")
    p.add_argument("--names", help="comma-separated partition names")
    p.set_defaults(func=cmd_split, format="csv")
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    command: Callable = args.func
    try:
        report = command(args)
        text = report.render(args.format)
        if args.out:
            _write_file(args.out, text)
        else:
            sys.stdout.write(text)
            sys.stdout.flush()
    except BrokenPipeError:
        # reader went away (e.g. piped into head); not an error of ours
        os.dup2(os.open(os.devnull, os.O_WRONLY), sys.stdout.fileno())
        return 0
    except (ScorekitError, ValueError, KeyError) as exc:
        module = getattr(exc, "module", "cli")
        print(f"error: [{module}] {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: [io] {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
