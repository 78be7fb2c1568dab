"""Command-line interface.

Exit codes: 0 success, 2 config error, 3 data error, 4 stage failure.
"""

from __future__ import annotations

import argparse
import csv
import sys
import time
from pathlib import Path

from . import balance, blocking, evaluation, lookalike, matching
from .config import (
    RunConfig,
    load_synth_config,
    parse_flat_file,
    run_config_from_dicts,
)
from .errors import ConfigError, DataError
from .pipeline import StageError, run_pipeline
from .records import normalize_records, parse_record_file, write_error_report, write_record_file

EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_STAGE = 4


def _parse_mapping(pairs) -> dict:
    mapping = {}
    for pair in pairs or []:
        if "=" not in pair:
            raise ConfigError(f"--map expects field=column, got {pair!r}")
        fieldname, col = pair.split("=", 1)
        mapping[fieldname.strip()] = col.strip()
    return mapping


def cmd_ingest(args) -> int:
    rs = parse_record_file(args.infile, _parse_mapping(args.map))
    nrs = normalize_records(rs)
    write_record_file(nrs, args.out)
    if args.errors:
        write_error_report(rs.errors, args.errors)
    print(f"ingested {len(rs)} records ({len(rs.errors)} error rows) -> {args.out}")
    return 0


def cmd_build_index(args) -> int:
    rs = parse_record_file(args.ref)
    nrs = normalize_records(rs)
    index = blocking.build_index(nrs.records, backend="sqlite", path=args.out,
                                 hot_key_cap=args.hot_key_cap)
    s = index.stats
    print(f"indexed {s.record_count} records: {s.key_count} keys, "
          f"mean {s.mean_ids_per_key:.2f} ids/key, max {s.max_ids_per_key}, "
          f"{s.hot_key_count} hot -> {args.out}")
    index.close()
    return 0


def cmd_index_stats(args) -> int:
    index = blocking.load_index(args.index)
    s = index.stats
    print(f"records: {s.record_count}")
    print(f"keys: {s.key_count}")
    print(f"mean ids per key: {s.mean_ids_per_key:.4f}")
    print(f"max ids per key: {s.max_ids_per_key}")
    print(f"hot keys (cap {index.hot_key_cap}): {s.hot_key_count}")
    index.close()
    return 0


def cmd_match(args) -> int:
    ref = normalize_records(parse_record_file(args.ref))
    inputs = normalize_records(parse_record_file(args.infile))
    if args.index:
        index = blocking.load_index(args.index)
    else:
        index = blocking.build_index(ref.records, hot_key_cap=args.hot_key_cap)
    tables = matching.default_tables()
    ref_store = {r.record_id: r for r in ref.records}
    t0 = time.perf_counter()
    report = matching.match_file(index, matching.DEFAULT_PAIR_MODEL,
                                 inputs.records, ref_store, tables,
                                 threshold=args.threshold)
    elapsed = time.perf_counter() - t0
    matching.write_match_csv(report, args.out)
    print(f"matched {report.n_accepted}/{report.n_inputs} "
          f"(rate {report.match_rate:.4f}) in {elapsed:.1f}s -> {args.out}")
    index.close()
    return 0


def cmd_make_training(args) -> int:
    reference = parse_record_file(args.ref)
    mreport = matching.read_match_csv(args.matches)
    matched = sorted({m.matched_id for m in mreport.results if m.accepted})
    ts = lookalike.build_training_set(matched, reference, args.seed)
    lookalike.write_training_csv(ts, args.out)
    print(f"training set: {int(ts.labels.sum())} positives, "
          f"{int(len(ts) - ts.labels.sum())} negatives -> {args.out}")
    return 0


def cmd_train(args) -> int:
    ts = lookalike.read_training_csv(args.training)
    if args.lam is not None:
        model = lookalike.train_l1_logistic(ts, args.lam)
    else:
        grid = lookalike.default_lambda_grid(ts, args.n_lambdas, args.min_ratio)
        cv = lookalike.cross_validate(ts, args.k, grid, args.seed)
        path = lookalike.regularization_path(ts, grid)
        model = path[list(cv.lambda_grid).index(cv.lambda_star)]
        print(f"cv chose lambda {cv.lambda_star:.6g} over {len(grid)} candidates")
    lookalike.save_model(model, args.out)
    flag = "" if model.converged else " (non-converged)"
    print(f"model: {model.nonzero_count} nonzero coefficients{flag} -> {args.out}")
    return 0


def cmd_score(args) -> int:
    model = lookalike.load_model(args.model)
    rows = parse_record_file(args.infile)
    ranked = lookalike.score_population(model, rows)
    with open(args.out, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["rank", "record_id", "score"])
        for rank, (rid, score) in enumerate(ranked, start=1):
            w.writerow([rank, rid, repr(score)])
    print(f"scored {len(ranked)} records -> {args.out}")
    return 0


def cmd_select(args) -> int:
    models_dir = Path(args.models)
    if not models_dir.is_dir():
        raise DataError(f"models directory not found: {models_dir}")
    model_set = balance.GroupModelSet(models={}, errors={})
    for path in sorted(models_dir.glob("group_*.txt")):
        group = path.stem[len("group_"):]
        model = lookalike.load_model(path)
        model_set.models[group] = balance.GroupModel(
            group=group, model=model, cv=None, rows_used=[],
            n_positives=0, n_negatives=0, small_sample=False)
    if not model_set.models:
        raise DataError(f"no group_<label>.txt model files in {models_dir}")
    population = parse_record_file(args.pop)
    proportions = balance.read_proportions_csv(args.proportions)
    targets = balance.proportional_pull(model_set, population, args.n, proportions)
    balance.write_target_csv(targets, args.out)
    short = f", shortfalls {targets.shortfalls}" if targets.shortfalls else ""
    print(f"selected {len(targets.entries)} of {args.n} targets{short} -> {args.out}")
    return 0


def cmd_evaluate(args) -> int:
    rows = evaluation.read_scores_csv(args.scores, args.labels_col,
                                      id_col=args.id_col, score_col=args.score_col,
                                      group_col=args.group_col)
    tables = {}
    ids = [r[0] for r in rows]
    scores = [r[1] for r in rows]
    labels = [r[2] for r in rows]
    tables["all"] = evaluation.decile_table(scores, labels, ids=ids)
    if args.by_group:
        groups = sorted({r[3] for r in rows if r[3]})
        for g in groups:
            sub = [r for r in rows if r[3] == g]
            if len(sub) >= 10:
                tables[g] = evaluation.decile_table(
                    [r[1] for r in sub], [r[2] for r in sub], ids=[r[0] for r in sub])
    written = evaluation.render_decile_report(tables, args.out)
    print(f"wrote {len(written)} decile report files -> {args.out}")
    return 0


def cmd_synth(args) -> int:
    from .synth import generate_scenario, write_truth_csv

    cfg = load_synth_config(args.config)
    reference, inputs, truth = generate_scenario(cfg)
    write_record_file(reference, args.out_ref)
    write_record_file(inputs, args.out_in)
    write_truth_csv(truth, args.out_truth)
    n_signup = sum(truth.signup.values())
    print(f"generated {len(reference)} reference records "
          f"({n_signup} signups), {len(inputs)} inputs "
          f"({len(truth.pairs)} true duplicates)")
    return 0


def cmd_run(args) -> int:
    overrides = {}
    for pair in args.set or []:
        if "=" not in pair:
            raise ConfigError(f"--set expects key=value, got {pair!r}")
        key, value = pair.split("=", 1)
        overrides[key.strip()] = value.strip()
    file_layer = parse_flat_file(args.config) if args.config else {}
    cfg = run_config_from_dicts(file_layer, overrides)
    report = run_pipeline(cfg)
    m = report["match"]
    print(f"pipeline complete: match rate {m['rate']:.4f}, "
          f"{report['targets']['selected']} targets -> {cfg.out_dir}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="linklift",
        description="Record linkage and balanced lookalike targeting.")
    sub = p.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("ingest", help="parse, validate, and normalize a record file")
    sp.add_argument("--in", dest="infile", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--errors", help="write malformed-row report here")
    sp.add_argument("--map", action="append", metavar="FIELD=COLUMN")
    sp.set_defaults(fn=cmd_ingest)

    sp = sub.add_parser("build-index", help="build an on-disk blocking index")
    sp.add_argument("--ref", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--hot-key-cap", type=int, default=1000)
    sp.set_defaults(fn=cmd_build_index)

    sp = sub.add_parser("index-stats", help="print stats for an index file")
    sp.add_argument("index")
    sp.set_defaults(fn=cmd_index_stats)

    sp = sub.add_parser("match", help="match an input file against a reference file")
    sp.add_argument("--ref", required=True)
    sp.add_argument("--in", dest="infile", required=True)
    sp.add_argument("--index", help="reuse an on-disk index")
    sp.add_argument("--out", required=True)
    sp.add_argument("--threshold", type=float, default=0.5)
    sp.add_argument("--hot-key-cap", type=int, default=1000)
    sp.set_defaults(fn=cmd_match)

    sp = sub.add_parser("make-training", help="build the 50/50 training set")
    sp.add_argument("--ref", required=True)
    sp.add_argument("--matches", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--seed", type=int, default=1)
    sp.set_defaults(fn=cmd_make_training)

    sp = sub.add_parser("train", help="train a sparse logistic model (CV by default)")
    sp.add_argument("--training", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--k", type=int, default=4)
    sp.add_argument("--n-lambdas", type=int, default=50)
    sp.add_argument("--min-ratio", type=float, default=1e-4)
    sp.add_argument("--seed", type=int, default=2)
    sp.add_argument("--lambda", dest="lam", type=float,
                    help="skip CV and fit at this penalty")
    sp.set_defaults(fn=cmd_train)

    sp = sub.add_parser("score", help="score records with a saved model")
    sp.add_argument("--model", required=True)
    sp.add_argument("--in", dest="infile", required=True)
    sp.add_argument("--out", required=True)
    sp.set_defaults(fn=cmd_score)

    sp = sub.add_parser("select", help="build a group-proportional target list")
    sp.add_argument("--models", required=True, help="directory of group_<label>.txt")
    sp.add_argument("--pop", required=True)
    sp.add_argument("--proportions", required=True)
    sp.add_argument("--n", type=int, required=True)
    sp.add_argument("--out", required=True)
    sp.set_defaults(fn=cmd_select)

    sp = sub.add_parser("evaluate", help="decile/lift reports from a scores file")
    sp.add_argument("--scores", required=True)
    sp.add_argument("--labels-col", required=True)
    sp.add_argument("--id-col", default="record_id")
    sp.add_argument("--score-col", default="score")
    sp.add_argument("--group-col", default="group")
    sp.add_argument("--by-group", action="store_true")
    sp.add_argument("--out", required=True)
    sp.set_defaults(fn=cmd_evaluate)

    sp = sub.add_parser("synth", help="generate a synthetic scenario")
    sp.add_argument("--config", required=True)
    sp.add_argument("--out-ref", required=True)
    sp.add_argument("--out-in", required=True)
    sp.add_argument("--out-truth", required=True)
    sp.set_defaults(fn=cmd_synth)

    sp = sub.add_parser("run", help="run the full pipeline from a config file")
    sp.add_argument("--config", required=True)
    sp.add_argument("--set", action="append", metavar="KEY=VALUE",
                    help="override a config key")
    sp.set_defaults(fn=cmd_run)

    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except StageError as e:
        print(f"error: {e}", file=sys.stderr)
        return e.exit_code
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as e:
        print(f"data error: {e}", file=sys.stderr)
        return EXIT_DATA
    except Exception as e:  # noqa: BLE001 - CLI boundary
        print(f"failure: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_STAGE


if __name__ == "__main__":
    sys.exit(main())
