"""Command-line driver.

Exit status: 0 on success, 1 when a stage fails (a ``FAILED`` marker is left
in the run directory), 2 for config or input errors.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from importlib import resources
from pathlib import Path

from talentmob import __version__
from talentmob.corpus import CorpusStats, build_panels, filter_eligible, parse_works, read_panels, write_panels
from talentmob.matching.balance import balance_table, write_balance_csv
from talentmob.matching.exact import MOVED, UNMOVED
from talentmob.matching.refine import MatchedSet, exact_stage
from talentmob.mobility import assign_groups, read_labels, read_roster, write_labels
from talentmob.synthgen import SynthConfig, SynthConfigError, simulate

logger = logging.getLogger("talentmob")

OUTCOME_ALIASES = {"pubs": "publications", "publications": "publications",
                   "cites": "citations", "citations": "citations"}
COMPARISON_POOL = {"g1": MOVED, "g2": UNMOVED}


class InputError(Exception):
    pass


def _need_file(path: str | Path | None, what: str) -> Path:
    if path is None:
        raise InputError(f"{what} is required here")
    p = Path(path)
    if not p.is_file():
        raise InputError(f"{what}: no such file {p}")
    return p


def demo_synth_config() -> dict:
    text = resources.files("talentmob").joinpath("data/demo_synth.json").read_text(encoding="utf-8")
    return json.loads(text)


def _synth_config(args) -> SynthConfig:
    if args.demo:
        raw = demo_synth_config()
    elif args.config:
        try:
            raw = json.loads(_need_file(args.config, "--config").read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise InputError(f"--config {args.config} is not valid JSON: {exc}") from None
    else:
        raise InputError("simulate needs --config or --demo")
    if args.seed is not None:
        raw["seed"] = args.seed
    try:
        return SynthConfig.from_dict(raw)
    except TypeError as exc:
        raise InputError(f"bad synth config: {exc}") from None


def cmd_simulate(args) -> int:
    cfg = _synth_config(args)
    paths = simulate(cfg, args.out, format=args.format)
    print(f"wrote {', '.join(str(p) for p in paths.values())}")
    return 0


def cmd_ingest(args) -> int:
    works = [_need_file(w, "--works") for w in args.works]
    roster = read_roster(_need_file(args.roster, "--roster")) if args.roster else {}
    stats = CorpusStats()
    records = []
    for w in works:
        with open(w, "rb") as fh:
            records.extend(parse_works(fh, args.format, stats))
    panels = filter_eligible(build_panels(records, stats), min_pubs=args.min_pubs, roster=roster,
                             corpus_end=args.corpus_end, stats=stats)
    write_panels(panels, args.out)
    print(json.dumps(stats.to_dict(), sort_keys=True))
    return 0


def cmd_groups(args) -> int:
    panels = read_panels(_need_file(args.panels, "--panels"))
    roster = read_roster(_need_file(args.roster, "--roster"))
    labels, audit = assign_groups(panels, roster, args.destination)
    write_labels(labels + audit, args.out)
    print(f"{len(labels)} labels, {len(audit)} audit entries -> {args.out}")
    return 0


def cmd_match(args) -> int:
    from talentmob.pipeline import REFINERS, build_pools

    panels = read_panels(_need_file(args.panels, "--panels"))
    labels = read_labels(_need_file(args.labels, "--labels"))
    outcome = OUTCOME_ALIASES[args.outcome]
    caps = {MOVED: args.cap_moved, UNMOVED: args.cap_unmoved}
    pools = build_pools(panels, labels, caps, args.seed)[args.pool]
    ms = exact_stage(pools, outcome) if args.method == "exact" else REFINERS[args.method](pools, panels, outcome)
    ms.to_jsonl(args.out)
    if args.balance and ms.entries:
        exact = exact_stage(pools, outcome)
        write_balance_csv(args.balance, balance_table(exact, panels), balance_table(ms, panels))
    print(f"{ms.n_pairs} matched treated units -> {args.out}")
    return 0


def cmd_estimate(args) -> int:
    from talentmob.econometrics.did import event_study
    from talentmob.econometrics.panel import build_did_panel
    from talentmob.pipeline import (
        ESTIMATE_COLUMNS, LOGIT_COLUMNS, MARGIN_COLUMNS, RunConfig, _f, _write_csv, did_row,
        logit_rows, logit_tables, read_pools,
    )

    panels = read_panels(_need_file(args.panels, "--panels"))
    outcome = OUTCOME_ALIASES[args.outcome]
    if args.model == "logit":
        labels = read_labels(_need_file(args.labels, "--labels"))
        pools = read_pools(_need_file(args.pools, "--pools"))
        rows, _, _, _ = logit_rows(panels, labels, pools, outcome, args.horizon)
        table, curves = logit_tables(rows, outcome)
        _write_csv(Path(args.out), LOGIT_COLUMNS, table)
        if args.margins:
            _write_csv(Path(args.margins), MARGIN_COLUMNS, curves)
        return 0
    ms = MatchedSet.from_jsonl(_need_file(args.matches, "--matches"))
    ms.outcome_kind = outcome
    cfg = RunConfig(works=[], roster=Path(), se=args.se, corpus_end=args.horizon)
    if args.model == "did":
        _write_csv(Path(args.out), ESTIMATE_COLUMNS, [did_row(ms, panels, cfg, args.comparison)])
        return 0
    dp = build_did_panel(ms, panels, horizon=args.horizon, t_range=cfg.t_range)
    es = event_study(dp.rows, cfg.horizons, args.se, n_pairs=dp.n_pairs)
    _write_csv(Path(args.out), ["T", "beta", "ci_lo", "ci_hi"],
               [[e.horizon, _f(e.beta), _f(e.ci[0]), _f(e.ci[1])] for e in es.effects])
    return 0


def cmd_run(args) -> int:
    from talentmob.pipeline import load_config, run_pipeline

    if args.demo:
        if not args.out:
            raise InputError("run --demo needs --out")
        paths = simulate(SynthConfig.from_dict(demo_synth_config()), Path(args.out) / "data")
        config_path = paths["config"]
    elif args.config:
        config_path = Path(args.config)
    else:
        raise InputError("run needs --config or --demo")
    cfg = load_config(config_path)
    out = Path(args.out) / "run" if args.demo else Path(args.out) if args.out else cfg.output
    if out is None:
        out = config_path.parent / "run"
    run_pipeline(cfg, out)
    timings = json.loads((out / "timings.json").read_text(encoding="utf-8"))
    print(f"run complete -> {out} ({sum(timings.values()):.1f}s)")
    return 0


def cmd_report(args) -> int:
    from talentmob.report import report

    text, missing = report(args.run_dir, args.out)
    print(text, end="")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="talentmob", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("ingest", help="parse works and build eligible author panels")
    s.add_argument("--works", nargs="+", required=True)
    s.add_argument("--format", default="openalex-works", choices=["openalex-works", "flat"])
    s.add_argument("--out", required=True)
    s.add_argument("--min-pubs", type=int, default=10)
    s.add_argument("--roster")
    s.add_argument("--corpus-end", type=int, default=2021)
    s.set_defaults(func=cmd_ingest)

    s = sub.add_parser("groups", help="detect moves and label G_w / G_1 / G_2")
    s.add_argument("--panels", required=True)
    s.add_argument("--roster", required=True)
    s.add_argument("--destination", default="CN")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_groups)

    s = sub.add_parser("match", help="exact step plus one refiner for one pool and outcome")
    s.add_argument("--panels", required=True)
    s.add_argument("--labels", required=True)
    s.add_argument("--method", default="scm", choices=["exact", "scm", "cem", "dom"])
    s.add_argument("--outcome", default="pubs", choices=sorted(OUTCOME_ALIASES))
    s.add_argument("--pool", default=MOVED, choices=[MOVED, UNMOVED])
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--cap-moved", type=int, default=200)
    s.add_argument("--cap-unmoved", type=int, default=300)
    s.add_argument("--balance")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_match)

    s = sub.add_parser("estimate", help="DID, event study or success logit")
    s.add_argument("--model", default="did", choices=["did", "event", "logit"])
    s.add_argument("--comparison", default="g1", choices=sorted(COMPARISON_POOL))
    s.add_argument("--outcome", default="pubs", choices=sorted(OUTCOME_ALIASES))
    s.add_argument("--se", default="clustered", choices=["classical", "robust", "clustered"])
    s.add_argument("--panels", required=True)
    s.add_argument("--matches")
    s.add_argument("--labels")
    s.add_argument("--pools")
    s.add_argument("--margins")
    s.add_argument("--horizon", type=int, default=2021)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_estimate)

    s = sub.add_parser("simulate", help="write a synthetic corpus with planted effects")
    s.add_argument("--config")
    s.add_argument("--demo", action="store_true", help="use the bundled 200-author config")
    s.add_argument("--seed", type=int)
    s.add_argument("--format", default="flat", choices=["flat", "openalex-works"])
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("run", help="full pipeline from a JSON config")
    s.add_argument("--config")
    s.add_argument("--demo", action="store_true", help="simulate the bundled corpus and run on it")
    s.add_argument("--out")
    s.set_defaults(func=cmd_run)

    s = sub.add_parser("report", help="text tables and plot-data from a run directory")
    s.add_argument("--run-dir", required=True)
    s.add_argument("--out")
    s.set_defaults(func=cmd_report)
    return p


def main(argv: list[str] | None = None) -> int:
    from talentmob.pipeline import ConfigError, StageError

    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, InputError, SynthConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except StageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
