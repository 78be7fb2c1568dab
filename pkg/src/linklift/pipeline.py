"""End-to-end batch pipeline: ingest -> index -> match -> train -> select
-> evaluate, with every stage artifact persisted under the output dir.

Outputs are pure functions of (inputs, config, seeds): no timestamps, no
OS entropy, fixed float formatting. Re-running an identical config
reproduces identical bytes.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

from . import balance, blocking, evaluation, lookalike, matching
from .config import RunConfig
from .errors import ConfigError, DataError
from .records import RecordSet, normalize_records, parse_record_file, write_error_report


@dataclass
class StageError(Exception):
    stage: str
    message: str
    exit_code: int

    def __str__(self):
        return f"stage {self.stage}: {self.message}"


def _stage(name: str, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except StageError:
        raise
    except ConfigError as e:
        raise StageError(name, str(e), 2) from e
    except DataError as e:
        raise StageError(name, str(e), 3) from e
    except Exception as e:
        raise StageError(name, f"{type(e).__name__}: {e}", 4) from e


def _check_paths(cfg: RunConfig) -> None:
    needed = [("reference", cfg.reference), ("inputs", cfg.inputs),
              ("proportions", cfg.proportions)]
    if cfg.truth:
        needed.append(("truth", cfg.truth))
    for name, p in needed:
        if not Path(p).is_file():
            raise DataError(f"{name} file not found: {p}")


def run_pipeline(cfg: RunConfig) -> dict:
    """Execute all stages; returns the run report (also written to disk).

    The resolved config is written first; any later failure leaves no
    partial outputs beyond it and the completed stages' artifacts.
    """
    try:
        cfg.validate()
    except ConfigError as e:
        raise StageError("config", str(e), 2) from e

    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.resolved").write_text("\n".join(cfg.resolved_lines()) + "\n")

    _stage("ingest", _check_paths, cfg)

    report = {}

    # ingest
    def do_ingest():
        reference = parse_record_file(cfg.reference, cfg.mapping)
        inputs = parse_record_file(cfg.inputs, cfg.mapping)
        proportions = balance.read_proportions_csv(cfg.proportions)
        truth = None
        if cfg.truth:
            from .synth import read_truth_csv
            truth = read_truth_csv(cfg.truth)
        if reference.errors:
            write_error_report(reference.errors, out / "reference_errors.csv")
        if inputs.errors:
            write_error_report(inputs.errors, out / "input_errors.csv")
        report["ingest"] = {
            "reference_rows": len(reference) + len(reference.errors),
            "reference_kept": len(reference),
            "reference_errors": len(reference.errors),
            "input_rows": len(inputs) + len(inputs.errors),
            "input_kept": len(inputs),
            "input_errors": len(inputs.errors),
            "feature_columns": len(reference.feature_names),
        }
        return reference, inputs, proportions, truth

    reference, inputs, proportions, truth = _stage("ingest", do_ingest)
    nref = _stage("ingest", normalize_records, reference)
    ninp = _stage("ingest", normalize_records, inputs)

    # index
    def do_index():
        path = out / "blocking_index.sqlite" if cfg.backend == "sqlite" else None
        index = blocking.build_index(nref.records, backend=cfg.backend,
                                     path=path, hot_key_cap=cfg.hot_key_cap)
        report["index"] = {
            "backend": cfg.backend,
            "records": index.stats.record_count,
            "keys": index.stats.key_count,
            "mean_ids_per_key": round(index.stats.mean_ids_per_key, 6),
            "max_ids_per_key": index.stats.max_ids_per_key,
            "hot_keys": index.stats.hot_key_count,
        }
        return index

    index = _stage("index", do_index)

    # match
    def do_match():
        tables = matching.default_tables()
        ref_store = {r.record_id: r for r in nref.records}
        mreport = matching.match_file(index, matching.DEFAULT_PAIR_MODEL,
                                      ninp.records, ref_store, tables,
                                      threshold=cfg.threshold)
        matching.write_match_csv(mreport, out / "match.csv")
        report["match"] = {
            "inputs": mreport.n_inputs,
            "accepted": mreport.n_accepted,
            "rate": mreport.match_rate,
        }
        return mreport

    mreport = _stage("match", do_match)
    matched_ids = sorted({m.matched_id for m in mreport.results if m.accepted})

    # training set
    def do_training():
        ts = lookalike.build_training_set(matched_ids, reference, cfg.training_seed)
        lookalike.write_training_csv(ts, out / "training.csv")
        report["training"] = {
            "positives": int(ts.labels.sum()),
            "negatives": int(len(ts) - ts.labels.sum()),
        }
        return ts

    ts = _stage("training", do_training)

    # train pooled + per-group models
    def do_train():
        models_dir = out / "models"
        models_dir.mkdir(exist_ok=True)
        grid = lookalike.default_lambda_grid(ts, cfg.n_lambdas, cfg.lambda_min_ratio)
        pooled_cv = lookalike.cross_validate(ts, cfg.k, grid, cfg.cv_seed)
        path_models = lookalike.regularization_path(ts, grid)
        pooled = path_models[list(pooled_cv.lambda_grid).index(pooled_cv.lambda_star)]
        lookalike.save_model(pooled, models_dir / "pooled.txt")

        gconfig = balance.GroupCVConfig(
            k=cfg.k, n_lambdas=cfg.n_lambdas, lambda_min_ratio=cfg.lambda_min_ratio,
            seed=cfg.cv_seed, min_positives=cfg.min_group_positives)
        group_set = balance.train_group_models(ts, gconfig)
        models_report = {
            "pooled": {
                "lambda": pooled.lam,
                "nonzero": pooled.nonzero_count,
                "converged": pooled.converged,
                "top_variables": lookalike.selected_variables(pooled)[:10],
            },
            "groups": {},
            "group_errors": group_set.errors,
        }
        for g in sorted(group_set.models):
            gm = group_set.models[g]
            lookalike.save_model(gm.model, models_dir / f"group_{g}.txt")
            models_report["groups"][g] = {
                "lambda": gm.model.lam,
                "nonzero": gm.model.nonzero_count,
                "converged": gm.model.converged,
                "positives": gm.n_positives,
                "negatives": gm.n_negatives,
                "small_sample": gm.small_sample,
            }
        report["models"] = models_report
        return pooled, pooled_cv, group_set

    pooled, pooled_cv, group_set = _stage("train", do_train)

    # select targets
    def do_select():
        matched = set(matched_ids)
        rows = [i for i, r in enumerate(reference.records)
                if r.record_id not in matched]
        population = RecordSet(
            records=[reference.records[i] for i in rows],
            feature_names=reference.feature_names,
            features=reference.features[rows] if reference.features is not None else None,
        )
        targets = balance.proportional_pull(group_set, population,
                                            cfg.n_targets, proportions)
        balance.write_target_csv(targets, out / "targets.csv")
        report["targets"] = {
            "requested": cfg.n_targets,
            "selected": len(targets.entries),
            "quotas": targets.quotas,
            "counts": targets.counts,
            "shortfalls": targets.shortfalls,
            "skipped_unlabeled": targets.skipped_unlabeled,
            "skipped_unmodeled": targets.skipped_unmodeled,
        }
        return population, targets

    population, targets = _stage("select", do_select)

    # evaluate
    def do_evaluate():
        tables = {}
        labels = ts.labels.astype(int).tolist()
        tables["pooled_cv"] = evaluation.decile_table(
            pooled_cv.oos_scores.tolist(), labels, ids=ts.ids)
        for g in sorted(group_set.models):
            gm = group_set.models[g]
            sub_labels = [labels[i] for i in gm.rows_used]
            sub_ids = [ts.ids[i] for i in gm.rows_used]
            if len(sub_labels) >= 10:
                tables[f"group_{g}_cv"] = evaluation.decile_table(
                    gm.cv.oos_scores.tolist(), sub_labels, ids=sub_ids)
        if truth is not None:
            training_ids = set(ts.ids)
            rows = [i for i, r in enumerate(population.records)
                    if r.record_id not in training_ids]
            scores = lookalike.model_scores(pooled, population.features[rows])
            truth_labels = [truth.signup.get(population.records[i].record_id, 0)
                            for i in rows]
            ids = [population.records[i].record_id for i in rows]
            tables["pooled_truth"] = evaluation.decile_table(
                scores.tolist(), truth_labels, ids=ids)
        evaluation.render_decile_report(tables, out / "deciles")
        decile_report = {}
        for name, table in tables.items():
            decile_report[name] = {
                "base_rate": table.base_rate,
                "top_decile_rate": table.rows[0].rate,
                "top_decile_lift": (table.rows[0].rate / table.base_rate
                                    if table.base_rate > 0 else None),
                "rows": [[r.decile, r.count, r.positives, r.rate] for r in table.rows],
            }
        report["deciles"] = decile_report
        return tables

    tables = _stage("evaluate", do_evaluate)

    # report files
    def do_report():
        (out / "report.json").write_text(
            json.dumps(report, indent=2, sort_keys=True) + "\n")
        lines = ["linklift run report", "===================", ""]
        m = report["match"]
        lines.append(f"match: {m['inputs']} inputs, {m['accepted']} accepted, "
                     f"rate {m['rate']:.6f}")
        t = report["training"]
        lines.append(f"training set: {t['positives']} positives, "
                     f"{t['negatives']} negatives")
        pm = report["models"]["pooled"]
        lines.append(f"pooled model: lambda {pm['lambda']:.6g}, "
                     f"{pm['nonzero']} nonzero coefficients")
        for g, gm in sorted(report["models"]["groups"].items()):
            warn = " (small sample)" if gm["small_sample"] else ""
            lines.append(f"  group {g}: lambda {gm['lambda']:.6g}, "
                         f"{gm['nonzero']} nonzero, {gm['positives']} positives{warn}")
        tg = report["targets"]
        lines.append(f"targets: {tg['selected']} of {tg['requested']} requested")
        for g in sorted(tg["quotas"]):
            lines.append(f"  group {g}: quota {tg['quotas'][g]}, "
                         f"selected {tg['counts'].get(g, 0)}")
        for name in sorted(tables):
            lines.append("")
            lines.extend(evaluation.table_chart_lines(tables[name], title=f"deciles: {name}"))
        (out / "report.txt").write_text("\n".join(lines) + "\n")

    _stage("report", do_report)
    index.close()
    return report
