"""Command-line pipeline: ingest a dataset, match counterparts, audit fairness.

Every subcommand reads one JSON config file, merges it over built-in
defaults, applies command-line overrides, and writes its artifacts under the
output directory.  Each artifact embeds a sha256 digest of the merged config,
so files from different runs can be told apart after the fact.

Exit codes: 0 success, 2 configuration problem, 3 unusable data,
4 no admissible pairs, 5 numerical failure.
"""

import argparse
import copy
import csv
import hashlib
import json
import math
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .errors import AllUnmatchedError, ConfigError, DataError, NumericalError
from .fairness import audit_fairness
from .matching import balance_report, delta_groups, greedy_match, pairs_to_table_rows
from .metric import MetricConfig, learn_metric, metric_to_json
from .models import TrainConfig, train_classifier
from .propensity import (
    CLAMP_EPSILON,
    build_candidates,
    delta_threshold,
    propensity_scores,
)
from .stats import folded_normal_stats
from .synth import SynthConfig, run_synthetic_experiment
from .tabular import load_compas, load_table, make_folds, preprocess, split_by_group

ARTIFACT_FORMAT_VERSION = 1

DEFAULTS = {
    "seed": 0,
    "out": "artifacts",
    "dataset": {
        "path": None,
        "adapter": None,
        "schema": {},
        "target": None,
        "protected": None,
    },
    "preprocess": {
        "outlier_columns": [],
        "lo_pct": 2.5,
        "hi_pct": 97.5,
        "scale": True,
    },
    "propensity": {
        "model": {"kind": "forest"},
        "percentile": 90.0,
        "pair_budget": 10_000_000,
    },
    "metric": {
        "learning_rate": 1e-4,
        "max_iterations": 100,
        "epsilon0": 1e-6,
        "psd_projection": True,
    },
    "match": {"order_by": "dissimilarity"},
    "outcome": {
        "model": {"kind": "forest"},
        "smote": {"enabled": False, "k_neighbors": 5},
        "positive_class": None,
    },
    "folds": {"k": 5, "rematch_per_fold": False},
    "synth": {},
    "foldnorm": {"delta_nu": 0.0, "sigma1": 1.0},
}

# sections whose keys are data (column names, estimator kwargs), not part of
# the fixed config vocabulary
_OPEN_SECTIONS = {"dataset.schema", "propensity.model", "outcome.model", "synth"}


def _merge(base, override, path=""):
    out = {k: copy.deepcopy(v) for k, v in base.items()}
    for key, value in override.items():
        here = f"{path}.{key}" if path else key
        if path in _OPEN_SECTIONS:
            out[key] = copy.deepcopy(value)
            continue
        if key not in base:
            raise ConfigError(f"unknown config key {here!r}")
        if isinstance(base[key], dict):
            if not isinstance(value, dict):
                raise ConfigError(f"config key {here!r} must be an object")
            out[key] = _merge(base[key], value, here)
        elif isinstance(value, dict):
            raise ConfigError(f"config key {here!r} must not be an object")
        else:
            out[key] = copy.deepcopy(value)
    return out


def _read_config_file(path):
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON in config {path}: {exc}") from None
    if not isinstance(doc, dict):
        raise ConfigError("config root must be a JSON object")
    return doc


def merged_config(args):
    """Defaults <- config file <- command-line overrides."""
    override = _read_config_file(args.config) if args.config else {}
    config = _merge(DEFAULTS, override)
    if args.seed is not None:
        config["seed"] = args.seed
    if args.out is not None:
        config["out"] = args.out
    if getattr(args, "percentile", None) is not None:
        config["propensity"]["percentile"] = args.percentile
    if getattr(args, "psd", None) is not None:
        config["metric"]["psd_projection"] = args.psd
    if getattr(args, "rematch_per_fold", None):
        config["folds"]["rematch_per_fold"] = True
    if not isinstance(config["seed"], int) or isinstance(config["seed"], bool):
        raise ConfigError(f"seed must be an integer, got {config['seed']!r}")
    if config["seed"] < 0:
        raise ConfigError("seed must be non-negative")
    return config


def _jsonable(value):
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return [_jsonable(v) for v in value.tolist()]
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        f = float(value)
        return f if math.isfinite(f) else None
    return value


def config_digest(config):
    # the output directory has no effect on what gets computed, so two runs
    # that differ only in destination share a digest
    doc = {k: v for k, v in config.items() if k != "out"}
    canon = json.dumps(_jsonable(doc), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode("utf-8")).hexdigest()


def _write_json(out_dir, name, payload, digest):
    doc = {
        "format": name,
        "format_version": ARTIFACT_FORMAT_VERSION,
        "config_sha256": digest,
    }
    doc.update(payload)
    path = out_dir / f"{name}.json"
    path.write_text(
        json.dumps(_jsonable(doc), sort_keys=True, indent=2) + "\n", encoding="utf-8"
    )
    return path


def _cell(value):
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (float, np.floating)):
        f = float(value)
        return "" if math.isnan(f) else repr(f)
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return str(value)


def _write_csv(out_dir, filename, fmt, header, rows):
    path = out_dir / filename
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(f"# counterfair-format: {fmt}/{ARTIFACT_FORMAT_VERSION}\n")
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([_cell(v) for v in row])
    return path


def _train_config(model_dict, seed, where):
    kwargs = dict(model_dict)
    kwargs["seed"] = seed
    try:
        return TrainConfig(**kwargs)
    except TypeError as exc:
        raise ConfigError(f"bad {where} model config: {exc}") from None


def _load_dataset(config):
    ds = config["dataset"]
    if not ds["path"]:
        raise ConfigError("dataset.path is required")
    adapter = ds["adapter"]
    if adapter == "compas":
        table, meta = load_compas(ds["path"], target=ds["target"] or "two_year_recid")
        target, protected = meta["target"], meta["protected"]
    elif adapter is None:
        if not ds["schema"]:
            raise ConfigError("dataset.schema is required when no adapter is set")
        target = ds["target"]
        table = load_table(ds["path"], dict(ds["schema"]), target=target)
        protected = ds["protected"]
    else:
        raise ConfigError(f"unknown dataset adapter {adapter!r}")
    if not protected:
        raise ConfigError("dataset.protected is required")
    if protected not in table.names:
        raise ConfigError(f"protected column {protected!r} not in dataset")
    if target is not None and target not in table.names:
        raise ConfigError(f"target column {target!r} not in dataset")
    return table, target, protected


class _Pipeline:
    """Shared state for the staged dataset commands.

    Each stage method computes one step and stashes what later stages need,
    so `audit` can reuse the exact propensity and metric results it would
    have written as artifacts.
    """

    def __init__(self, config):
        self.config = config
        raw, self.target, self.protected = _load_dataset(config)
        self.rows_read = raw.n_rows
        pp = config["preprocess"]
        for col in pp["outlier_columns"]:
            if col in (self.target, self.protected):
                raise ConfigError(
                    f"outlier trimming on {col!r} would drop rows by label"
                )
        self.table, self.scaling = preprocess(
            raw,
            outlier_columns=tuple(pp["outlier_columns"]),
            lo_pct=pp["lo_pct"],
            hi_pct=pp["hi_pct"],
            scale=pp["scale"],
        )
        self.split = split_by_group(self.table, self.protected)
        self.features = [
            n for n in self.table.names if n not in (self.target, self.protected)
        ]
        if not self.features:
            raise ConfigError("no feature columns besides target and protected")
        self.X = self.table.select(self.features)

    def propensity_stage(self):
        cfg = self.config["propensity"]
        seed = self.config["seed"]
        model_seed = int(np.random.SeedSequence((seed, 1)).generate_state(1)[0])
        train_cfg = _train_config(cfg["model"], model_seed, "propensity")
        membership = self.table.column(self.protected)
        model = train_classifier(self.X, membership, train_cfg)
        self.scores = propensity_scores(
            model, self.X, feature_names=self.features, protected_column=self.protected
        )
        self.s0 = self.scores.scores[self.split.g0_indices]
        self.s1 = self.scores.scores[self.split.g1_indices]
        self.delta = delta_threshold(
            self.s0,
            self.s1,
            pct=cfg["percentile"],
            pair_budget=cfg["pair_budget"],
            seed=seed,
        )
        self.candidates = build_candidates(self.s0, self.s1, self.delta)

    def match_stage(self):
        mc = self.config["metric"]
        metric_cfg = MetricConfig(
            learning_rate=mc["learning_rate"],
            max_iterations=mc["max_iterations"],
            epsilon0=mc["epsilon0"],
            psd_projection=mc["psd_projection"],
        )
        self.X0 = self.X[self.split.g0_indices]
        self.X1 = self.X[self.split.g1_indices]
        self.metric_result = learn_metric(self.X0, self.X1, self.candidates, metric_cfg)
        self.pairs = greedy_match(
            self.metric_result.matrix.matrix,
            self.X0,
            self.X1,
            self.candidates,
            order_by=self.config["match"]["order_by"],
            epsilon0=mc["epsilon0"],
        )
        self.pair_rows = pairs_to_table_rows(self.pairs, self.split)

    def rematcher(self):
        """Per-fold greedy rematching against the global caliper and metric."""
        scores_all = np.full(self.table.n_rows, np.nan)
        scores_all[self.split.g0_indices] = self.s0
        scores_all[self.split.g1_indices] = self.s1
        W = self.metric_result.matrix.matrix
        order_by = self.config["match"]["order_by"]
        epsilon0 = self.config["metric"]["epsilon0"]
        empty = np.zeros((0, 2), dtype=int)

        def rematch(test0, test1, fold):
            t0 = np.asarray(test0, dtype=int)
            t1 = np.asarray(test1, dtype=int)
            if t0.size == 0 or t1.size == 0:
                return empty
            try:
                cands = build_candidates(scores_all[t0], scores_all[t1], self.delta)
            except AllUnmatchedError:
                return empty
            pairs = greedy_match(
                W, self.X[t0], self.X[t1], cands, order_by=order_by, epsilon0=epsilon0
            )
            return np.column_stack([t0[pairs.g0_rows], t1[pairs.g1_rows]])

        return rematch


def run_ingest(config, out_dir, digest):
    pipe = _Pipeline(config)
    table = pipe.table
    written = [
        _write_csv(
            out_dir,
            "processed_table.csv",
            "table",
            table.names,
            (list(row) for row in table.values),
        )
    ]
    payload = {
        "source": config["dataset"]["path"],
        "adapter": config["dataset"]["adapter"],
        "rows_read": pipe.rows_read,
        "rows_kept": table.n_rows,
        "schema": table.schema(),
        "levels": {name: list(lv) for name, lv in table.levels.items()},
        "target": pipe.target,
        "protected": pipe.protected,
        "features": pipe.features,
        "scaling": pipe.scaling.to_dict(),
        "group_sizes": {
            "g0": int(pipe.split.g0_indices.size),
            "g1": int(pipe.split.g1_indices.size),
        },
        "g0_code": pipe.split.g0_code,
    }
    written.append(_write_json(out_dir, "ingest", payload, digest))
    return written


def _score_summary(s):
    return {
        "mean": float(np.mean(s)),
        "sd": float(np.std(s, ddof=1)) if s.size > 1 else None,
        "min": float(np.min(s)),
        "max": float(np.max(s)),
    }


def run_propensity(config, out_dir, digest):
    pipe = _Pipeline(config)
    pipe.propensity_stage()
    cands = pipe.candidates
    payload = {
        "delta": pipe.delta,
        "percentile": config["propensity"]["percentile"],
        "pair_budget": config["propensity"]["pair_budget"],
        "clamp_epsilon": CLAMP_EPSILON,
        "n_g0": cands.n_g0,
        "n_g1": cands.n_g1,
        "admissible_pairs": cands.total_pairs(),
        "rows_with_candidates": len(cands.nonempty_rows()),
        "scores_g0": _score_summary(pipe.s0),
        "scores_g1": _score_summary(pipe.s1),
    }
    return [_write_json(out_dir, "propensity", payload, digest)]


def run_match(config, out_dir, digest):
    pipe = _Pipeline(config)
    pipe.propensity_stage()
    pipe.match_stage()
    result, pairs = pipe.metric_result, pipe.pairs
    written = [_write_json(out_dir, "metric", metric_to_json(result), digest)]
    written.append(
        _write_csv(
            out_dir,
            "pairs.csv",
            "pairs",
            ("g0_row", "g1_row", "dissimilarity", "score_distance"),
            zip(
                pipe.pair_rows[:, 0],
                pipe.pair_rows[:, 1],
                pairs.dissimilarities,
                pairs.score_distances,
            ),
        )
    )
    if pairs.n_pairs >= 2:
        balance = balance_report(pipe.table, pipe.split, pairs, pipe.features)
        written.append(
            _write_csv(
                out_dir,
                "balance.csv",
                "balance",
                (
                    "feature",
                    "original_diff",
                    "original_p",
                    "counterpart_diff",
                    "counterpart_p",
                    "original_degenerate",
                    "counterpart_degenerate",
                ),
                (
                    (
                        b.feature,
                        b.original_diff,
                        b.original_p,
                        b.counterpart_diff,
                        b.counterpart_p,
                        b.original_degenerate,
                        b.counterpart_degenerate,
                    )
                    for b in balance
                ),
            )
        )
    c0, c1 = delta_groups(pipe.candidates)
    payload = {
        "n_pairs": pairs.n_pairs,
        "total_dissimilarity": pairs.total_dissimilarity(),
        "delta": pipe.delta,
        "order_by": config["match"]["order_by"],
        "best_iteration": result.best_iteration,
        "iterations_run": len(result.costs) - 1,
        "initial_cost": result.costs[0],
        "best_cost": result.costs[result.best_iteration],
        "delta_group_sizes": {"g0": int(c0.size), "g1": int(c1.size)},
        "matched_g0_fraction": pairs.n_pairs / pipe.candidates.n_g0,
        "balance_written": pairs.n_pairs >= 2,
    }
    written.append(_write_json(out_dir, "match", payload, digest))
    return written


def run_audit(config, out_dir, digest):
    pipe = _Pipeline(config)
    pipe.propensity_stage()
    pipe.match_stage()
    if pipe.target is None:
        raise ConfigError("dataset.target is required for an audit")
    oc = config["outcome"]
    train_cfg = _train_config(oc["model"], 0, "outcome")
    smote = oc["smote"]
    smote_k = smote["k_neighbors"] if smote["enabled"] else None
    positive = oc["positive_class"]
    fc = config["folds"]
    folds = make_folds(
        pipe.table, fc["k"], pipe.split, seed=config["seed"], pairs=pipe.pair_rows
    )
    rematcher = pipe.rematcher() if fc["rematch_per_fold"] else None
    audit = audit_fairness(
        pipe.X,
        pipe.table.column(pipe.target),
        pipe.split,
        pipe.pair_rows,
        folds,
        train_cfg,
        positive_class=None if positive is None else float(positive),
        smote_k=smote_k,
        rematcher=rematcher,
        seed=config["seed"],
    )
    written = [
        _write_csv(
            out_dir,
            "audit_records.csv",
            "audit-records",
            ("fold", "slice", "metric", "class", "value"),
            (
                (r.fold, r.slice_name, r.metric, r.label, r.value)
                for r in audit.records
            ),
        ),
        _write_csv(
            out_dir,
            "audit_summary.csv",
            "audit-summary",
            ("slice", "metric", "class", "mean", "sd", "folds_defined"),
            (
                (s.slice_name, s.metric, s.label, s.mean, s.sd, s.folds_defined)
                for s in audit.summary
            ),
        ),
    ]
    dp_cp = audit.summary_value("counterparts", "dp_gap")
    dp_tot = audit.summary_value("total", "dp_gap")
    payload = {
        "k": fc["k"],
        "rematch_per_fold": fc["rematch_per_fold"],
        "smote": smote["enabled"],
        "positive_class": audit.positive_class,
        "classes": list(audit.classes),
        "n_pairs": int(pipe.pair_rows.shape[0]),
        "pairs_per_fold": list(audit.pairs_per_fold),
        "delta": pipe.delta,
        "counterpart_dp_gap": {"mean": dp_cp.mean, "sd": dp_cp.sd},
        "total_dp_gap": {"mean": dp_tot.mean, "sd": dp_tot.sd},
    }
    written.append(_write_json(out_dir, "audit", payload, digest))
    return written


def run_synth(config, out_dir, digest):
    kwargs = dict(config["synth"])
    kwargs.setdefault("seed", config["seed"])
    try:
        synth_cfg = SynthConfig(**kwargs)
    except TypeError as exc:
        raise ConfigError(f"bad synth config: {exc}") from None
    summary = run_synthetic_experiment(synth_cfg)
    per_repeat = [
        {
            "dp_before": m.dp_before,
            "cdp_before": m.cdp_before,
            "dp_after": m.dp_after,
            "cdp_after": m.cdp_after,
            "cdp_p_before": m.cdp_p_before,
            "cdp_p_after": m.cdp_p_after,
            "iterations": m.iterations,
            "loss": m.loss,
        }
        for m in summary.measures
    ]
    payload = {
        "repeats": synth_cfg.repeats,
        "seed": synth_cfg.seed,
        "threshold": synth_cfg.threshold,
        "mitigated_g0_threshold": synth_cfg.mitigated_g0_threshold,
        "dp_before": {"mean": summary.dp_before[0], "sd": summary.dp_before[1]},
        "cdp_before": {"mean": summary.cdp_before[0], "sd": summary.cdp_before[1]},
        "dp_after": {"mean": summary.dp_after[0], "sd": summary.dp_after[1]},
        "cdp_after": {"mean": summary.cdp_after[0], "sd": summary.cdp_after[1]},
        "per_repeat": per_repeat,
    }
    return [_write_json(out_dir, "synth", payload, digest)]


def run_foldnorm(config, out_dir, digest):
    fn = config["foldnorm"]
    values = fn["delta_nu"]
    if not isinstance(values, (list, tuple)):
        values = [values]
    if not values:
        raise ConfigError("foldnorm.delta_nu must name at least one value")
    entries = []
    for dn in values:
        dist = folded_normal_stats(dn, fn["sigma1"])
        entries.append(
            {
                "delta_nu": dist.delta_nu,
                "mean": dist.mean(),
                "variance": dist.variance(),
                "mean_derivative": dist.mean_derivative(),
            }
        )
    payload = {"sigma1": float(fn["sigma1"]), "entries": entries}
    return [_write_json(out_dir, "foldnorm", payload, digest)]


_RUNNERS = {
    "ingest": run_ingest,
    "propensity": run_propensity,
    "match": run_match,
    "audit": run_audit,
    "synth": run_synth,
    "foldnorm": run_foldnorm,
}


def _build_parser():
    base = argparse.ArgumentParser(add_help=False)
    base.add_argument("--config", help="JSON config file merged over the defaults")
    base.add_argument("--seed", type=int, help="override the config seed")
    base.add_argument("--out", help="output directory for artifacts")
    pipe = argparse.ArgumentParser(add_help=False)
    pipe.add_argument(
        "--percentile", type=float, help="caliper percentile of score distances"
    )
    pipe.add_argument(
        "--psd",
        action=argparse.BooleanOptionalAction,
        default=None,
        help="project the learned metric onto the PSD cone each step",
    )
    parser = argparse.ArgumentParser(
        prog="counterfair",
        description="Counterpart matching and fairness auditing pipeline.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser(
        "ingest", parents=[base], help="load, trim and scale the dataset"
    )
    sub.add_parser(
        "propensity",
        parents=[base, pipe],
        help="fit group-membership scores and the caliper",
    )
    sub.add_parser(
        "match", parents=[base, pipe], help="learn the metric and match counterparts"
    )
    audit = sub.add_parser(
        "audit",
        parents=[base, pipe],
        help="cross-validated fairness audit on counterpart, unmatched and total slices",
    )
    audit.add_argument(
        "--rematch-per-fold",
        action="store_true",
        default=None,
        help="rebuild counterpart pairs inside each test fold",
    )
    sub.add_parser(
        "synth", parents=[base], help="two-group Gaussian simulation of threshold mitigation"
    )
    sub.add_parser(
        "foldnorm",
        parents=[base],
        help="folded-normal moments of an absolute mean-difference estimate",
    )
    return parser


def main(argv=None):
    args = _build_parser().parse_args(argv)
    try:
        config = merged_config(args)
        out_dir = Path(config["out"])
        out_dir.mkdir(parents=True, exist_ok=True)
        digest = config_digest(config)
        written = _RUNNERS[args.command](config, out_dir, digest)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except AllUnmatchedError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4
    except DataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except NumericalError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 5
    for path in written:
        print(path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
