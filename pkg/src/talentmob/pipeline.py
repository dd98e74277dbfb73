"""End-to-end run: ingest, groups, match, estimate, with a reproducibility manifest.

Every stage reads and writes files in the run directory, so stages can be
re-run individually. Numeric outputs are written with ``repr`` floats and
sorted rows, making them byte-stable for fixed inputs and seed.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import math
import time
from collections import Counter
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from talentmob import __version__
from talentmob.corpus import CorpusStats, build_panels, filter_eligible, parse_works, read_panels, write_panels
from talentmob.econometrics.did import DegenerateFitError, event_study, twfe_did
from talentmob.econometrics.logit import LogitDesignRow, SeparationError, logit_fit, margins
from talentmob.econometrics.panel import build_did_panel
from talentmob.envmetrics import (
    EmptyWindowError,
    UndefinedRateError,
    environment_delta,
    post_move_total,
    reference_median,
    success_outcome,
    write_deltas,
    write_outcomes,
)
from talentmob.matching.balance import balance_table, write_balance_csv
from talentmob.matching.exact import MOVED, UNMOVED, CandidatePool, Tolerances, exact_match
from talentmob.matching.refine import MatchedEntry, MatchedSet, exact_stage, refine_cem, refine_dom, refine_scm
from talentmob.mobility import MOVER, STAYER, TALENT, assign_groups, read_labels, read_roster, write_labels
from talentmob.tables import stars

logger = logging.getLogger(__name__)

OUTCOMES = ("publications", "citations")
METHODS = ("scm", "cem", "dom")
COMPARISON = {MOVED: "g1", UNMOVED: "g2"}
REFINERS = {"scm": refine_scm, "cem": refine_cem, "dom": refine_dom}
ESTIMATE_COLUMNS = ["model", "comparison", "outcome", "method", "beta", "se", "p", "stars",
                    "n_pairs", "n_obs", "r2", "flags"]
SUBGROUP_COLUMNS = ["dimension", "level"] + ESTIMATE_COLUMNS
TOP_KEYS = {"inputs", "destination_country", "corpus_end", "min_pubs", "caps", "window",
            "match", "estimate", "seed", "output"}


class ConfigError(ValueError):
    """Bad config or missing input; maps to exit status 2."""


class StageError(RuntimeError):
    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"stage {stage!r} failed: {cause}")
        self.stage = stage
        self.cause = cause


@dataclass
class RunConfig:
    works: list[Path]
    roster: Path
    format: str = "flat"
    destination: str = "CN"
    corpus_end: int = 2021
    min_pubs: int = 10
    caps: dict[str, int] = field(default_factory=lambda: {MOVED: 200, UNMOVED: 300})
    pre: tuple[int, int] = (-4, 0)
    post: tuple[int, int] = (1, 9)
    methods: tuple[str, ...] = ("scm",)
    se: str = "clustered"
    seed: int = 0
    output: Path | None = None
    raw: dict = field(default_factory=dict)

    @property
    def t_range(self) -> tuple[int, int]:
        return self.pre[0], self.post[1]

    @property
    def pre_ts(self) -> tuple[int, ...]:
        return tuple(range(self.pre[0], self.pre[1] + 1))

    @property
    def horizons(self) -> tuple[int, ...]:
        return tuple(range(self.post[0], self.post[1] + 1))

    def digest(self) -> str:
        text = json.dumps(self.raw, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode()).hexdigest()


def _pair(value, key) -> tuple[int, int]:
    if not (isinstance(value, (list, tuple)) and len(value) == 2 and all(isinstance(v, int) for v in value)):
        raise ConfigError(f"{key} must be a two-element integer list")
    if value[0] > value[1]:
        raise ConfigError(f"{key} bounds are reversed")
    return int(value[0]), int(value[1])


def parse_config(raw: dict, base: Path, check_inputs: bool = True) -> RunConfig:
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    unknown = set(raw) - TOP_KEYS
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    inputs = raw.get("inputs")
    if not isinstance(inputs, dict):
        raise ConfigError("inputs section is required")
    works = inputs.get("works")
    if isinstance(works, str):
        works = [works]
    if not works or not all(isinstance(w, str) for w in works):
        raise ConfigError("inputs.works must name at least one file")
    if not isinstance(inputs.get("roster"), str):
        raise ConfigError("inputs.roster must name a file")
    works_paths = [(base / w).resolve() for w in works]
    roster = (base / inputs["roster"]).resolve()
    if check_inputs:
        for p in works_paths:
            if not p.is_file():
                raise ConfigError(f"inputs.works: no such file {p}")
        if not roster.is_file():
            raise ConfigError(f"inputs.roster: no such file {roster}")
    fmt = inputs.get("format", "flat")
    if fmt not in ("flat", "openalex-works"):
        raise ConfigError(f"inputs.format must be flat or openalex-works, got {fmt!r}")

    caps = dict(raw.get("caps", {}))
    bad_caps = set(caps) - {MOVED, UNMOVED}
    if bad_caps:
        raise ConfigError(f"unknown caps keys: {sorted(bad_caps)}")
    caps = {MOVED: caps.get(MOVED, 200), UNMOVED: caps.get(UNMOVED, 300)}
    for k, v in caps.items():
        if not isinstance(v, int) or v < 1:
            raise ConfigError(f"caps.{k} must be a positive integer")

    window = raw.get("window", {})
    pre = _pair(window.get("pre", [-4, 0]), "window.pre")
    post = _pair(window.get("post", [1, 9]), "window.post")
    if pre[1] >= post[0]:
        raise ConfigError("window.pre must end before window.post starts")

    methods = raw.get("match", {}).get("method", "scm")
    methods = (methods,) if isinstance(methods, str) else tuple(methods)
    for m in methods:
        if m not in METHODS:
            raise ConfigError(f"match.method {m!r} not one of {METHODS}")
    if not methods:
        raise ConfigError("match.method is empty")

    se = raw.get("estimate", {}).get("se", "clustered")
    if se not in ("classical", "robust", "clustered"):
        raise ConfigError(f"estimate.se {se!r} not one of classical, robust, clustered")
    seed = raw.get("seed")
    if not isinstance(seed, int) or seed < 0:
        raise ConfigError("seed must be a non-negative integer")
    out = raw.get("output")
    return RunConfig(
        works=works_paths,
        roster=roster,
        format=fmt,
        destination=str(raw.get("destination_country", "CN")),
        corpus_end=int(raw.get("corpus_end", 2021)),
        min_pubs=int(raw.get("min_pubs", 10)),
        caps=caps,
        pre=pre,
        post=post,
        methods=methods,
        se=se,
        seed=seed,
        output=(base / out).resolve() if isinstance(out, str) else None,
        raw=raw,
    )


def load_config(path: str | Path, check_inputs: bool = True) -> RunConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from None
    return parse_config(raw, path.parent, check_inputs)


def _f(v) -> str:
    if v is None:
        return ""
    v = float(v)
    return repr(v) if math.isfinite(v) else ""


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


# -- stages ------------------------------------------------------------------

def stage_ingest(cfg: RunConfig, out: Path) -> dict:
    stats = CorpusStats()
    records = []
    for path in cfg.works:
        with open(path, "rb") as fh:
            records.extend(parse_works(fh, cfg.format, stats))
    panels = build_panels(records, stats)
    roster = read_roster(cfg.roster)
    eligible = filter_eligible(panels, min_pubs=cfg.min_pubs, roster=roster,
                               corpus_end=cfg.corpus_end, stats=stats)
    write_panels(eligible, out / "panels.jsonl")
    (out / "corpus_stats.json").write_text(json.dumps(stats.to_dict(), sort_keys=True, indent=1) + "\n")
    return {"records": stats.records_read, "authors_built": stats.authors_built,
            "authors_eligible": stats.authors_eligible}


def stage_groups(cfg: RunConfig, out: Path) -> dict:
    panels = read_panels(out / "panels.jsonl")
    roster = read_roster(cfg.roster)
    labels, audit = assign_groups(panels, roster, cfg.destination)
    write_labels(labels + audit, out / "labels.csv")
    counts = Counter(l.group for l in labels)
    return {"G_w": counts[TALENT], "G_1": counts[MOVER], "G_2": counts[STAYER], "audited": len(audit)}


def build_pools(panels, labels, caps, seed) -> dict[str, list[CandidatePool]]:
    talents = sorted((l for l in labels if l.group == TALENT), key=lambda l: l.author_id)
    movers = {l.author_id: panels[l.author_id] for l in labels if l.group == MOVER}
    mover_y_w = {l.author_id: l.y_w for l in labels if l.group == MOVER}
    stayers = {l.author_id: panels[l.author_id] for l in labels if l.group == STAYER}
    pools = {MOVED: [], UNMOVED: []}
    for t in talents:
        pools[MOVED].append(exact_match(panels[t.author_id], t.y_w, movers, MOVED, mover_y_w,
                                        caps[MOVED], Tolerances(), seed))
        pools[UNMOVED].append(exact_match(panels[t.author_id], t.y_w, stayers, UNMOVED, None,
                                          caps[UNMOVED], Tolerances(), seed))
    return pools


def write_pools(pools: dict[str, list[CandidatePool]], path: Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for kind in (MOVED, UNMOVED):
            for p in pools[kind]:
                fh.write(json.dumps({
                    "treated_id": p.treated_id, "y_w": p.y_w, "pool": p.pool_kind,
                    "contenders": p.contenders, "n_survivors": p.n_survivors,
                    "caps_applied": p.caps_applied, "flags": p.flags,
                }, sort_keys=True) + "\n")


def read_pools(path: Path) -> dict[str, list[CandidatePool]]:
    pools = {MOVED: [], UNMOVED: []}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                d = json.loads(line)
                pools[d["pool"]].append(CandidatePool(d["treated_id"], d["y_w"], d["contenders"], d["pool"],
                                                      d["caps_applied"], d["n_survivors"], d["flags"]))
    return pools


def match_name(method: str, pool_kind: str, outcome: str) -> str:
    return f"{method}_{COMPARISON[pool_kind]}_{outcome}"


def stage_match(cfg: RunConfig, out: Path) -> dict:
    panels = read_panels(out / "panels.jsonl")
    labels = read_labels(out / "labels.csv")
    pools = build_pools(panels, labels, cfg.caps, cfg.seed)
    write_pools(pools, out / "pools.jsonl")
    (out / "matches").mkdir(exist_ok=True)
    (out / "balance").mkdir(exist_ok=True)
    counts = {}
    failures = {}
    for kind in (MOVED, UNMOVED):
        for outcome in OUTCOMES:
            exact = exact_stage(pools[kind], outcome)
            exact.to_jsonl(out / "matches" / f"{match_name('exact', kind, outcome)}.jsonl")
            counts[match_name("exact", kind, outcome)] = exact.n_pairs
            exact_cells = balance_table(exact, panels, ts=cfg.pre_ts) if exact.entries else None
            for method in cfg.methods:
                ms = REFINERS[method](pools[kind], panels, outcome)
                name = match_name(method, kind, outcome)
                ms.to_jsonl(out / "matches" / f"{name}.jsonl")
                counts[name] = ms.n_pairs
                failures[name] = dict(sorted(ms.failures.items()))
                if exact_cells is not None and ms.entries:
                    write_balance_csv(out / "balance" / f"{name}.csv", exact_cells,
                                      balance_table(ms, panels, ts=cfg.pre_ts))
    (out / "match_failures.json").write_text(json.dumps(failures, sort_keys=True, indent=1) + "\n")
    return counts


def _estimate_row(model, comparison, outcome, method, est) -> list:
    return [model, comparison, outcome, method, _f(est.beta1), _f(est.se), _f(est.p), stars(est.p),
            est.n_pairs, est.n_obs, _f(est.r2), ";".join(est.flags)]


def _blank_row(model, comparison, outcome, method, n_pairs, reason) -> list:
    return [model, comparison, outcome, method, "", "", "", "", n_pairs, 0, "", reason]


def did_row(ms: MatchedSet, panels, cfg: RunConfig, comparison: str, model_name="did") -> list:
    method = ms.method
    if not ms.entries:
        return _blank_row(model_name, comparison, ms.outcome_kind, method, 0, "no_pairs")
    dp = build_did_panel(ms, panels, horizon=cfg.corpus_end, t_range=cfg.t_range)
    try:
        est = twfe_did(dp.rows, cfg.se, n_pairs=dp.n_pairs, outcome_kind=ms.outcome_kind,
                       comparison=comparison)
    except DegenerateFitError as exc:
        logger.warning("DID degenerate for %s/%s/%s: %s", method, comparison, ms.outcome_kind, exc)
        return _blank_row(model_name, comparison, ms.outcome_kind, method, dp.n_pairs, "degenerate")
    return _estimate_row(model_name, comparison, ms.outcome_kind, method, est)


def _write_csv(path: Path, header: list[str], rows: list[list]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _subset(ms: MatchedSet, keep) -> MatchedSet:
    return MatchedSet(ms.method, ms.outcome_kind, ms.pool_kind, [e for e in ms.entries if keep(e)])


def logit_rows(panels, labels, pools, metric: str, horizon: int):
    """Talents plus their step-one contenders, one row per (author, move year)."""
    talent_y_w = {l.author_id: l.y_w for l in labels if l.group == TALENT}
    mover_y_w = {l.author_id: l.y_w for l in labels if l.group == MOVER}
    units: dict[tuple[str, int], str] = {(a, y): TALENT for a, y in talent_y_w.items()}
    for kind in (MOVED, UNMOVED):
        for p in pools[kind]:
            for c in p.contenders:
                y_w = mover_y_w[c] if kind == MOVED else p.y_w
                units.setdefault((c, y_w), MOVER if kind == MOVED else STAYER)
    median = reference_median(post_move_total(panels[a], y, metric) for a, y in talent_y_w.items())
    rows, deltas, outcomes = [], [], []
    for (aid, y_w), group in sorted(units.items()):
        key = f"{aid}@{y_w}"
        p = panels[aid]
        outcome = success_outcome(p, y_w, metric, median, horizon)
        outcomes.append((key, outcome))
        try:
            d = environment_delta(p, y_w)
        except (EmptyWindowError, UndefinedRateError) as exc:
            deltas.append((None, key, [f"excluded:{exc}".replace(";", ",")]))
            continue
        deltas.append((d, key, []))
        rows.append(LogitDesignRow(outcome.label, d.d_a, d.d_i, d.d_c, d.d_size,
                                   p.y0, y_w, p.discipline or "", group))
    return rows, deltas, outcomes, median


LOGIT_COLUMNS = ["metric", "term", "beta", "se", "p", "stars", "ci_lo", "ci_hi", "n_obs", "pseudo_r2", "flags"]
MARGIN_COLUMNS = ["metric", "predictor", "value", "probability", "ci_lo", "ci_hi", "extrapolated"]
MARGIN_PREDICTORS = ("d_a", "d_i", "d_c", "d_size")


def _fold_level(rows, var: str, level: str, min_level_rows: int = 2):
    """Relabel ``var == level`` (or every rare level, for ``"other"``) to the modal level."""
    counts = Counter(str(getattr(r, var)) for r in rows)
    best = max(counts.values())
    mode = min(k for k, m in counts.items() if m == best)
    if level == "other":
        targets = {k for k, m in counts.items() if m < min_level_rows}
    else:
        targets = {level}
    return [replace(r, **{var: mode}) if str(getattr(r, var)) in targets else r for r in rows], mode


def fit_with_folding(rows, max_folds: int = 20):
    """Fit the success logit, folding any categorical level that separates the outcome
    into its variable's modal level. Separation on a continuous predictor is final."""
    folds = []
    for _ in range(max_folds + 1):
        try:
            est = logit_fit(rows)
        except SeparationError as exc:
            name = exc.predictor
            if "[" not in name:
                raise
            var, level = name[:-1].split("[", 1)
            rows, mode = _fold_level(rows, var, level)
            folds.append(f"folded:{var}={level}->{mode}")
            continue
        est.flags += folds
        return est
    raise SeparationError("categorical levels", f"still separated after {max_folds} folds")


def logit_tables(rows, metric: str, n_grid: int = 11):
    try:
        est = fit_with_folding(rows)
    except SeparationError as exc:
        return [[metric, "", "", "", "", "", "", "", len(rows), "", f"separation:{exc.predictor}"]], []
    except ValueError as exc:
        reason = str(exc).replace(";", ",")
        return [[metric, "", "", "", "", "", "", "", len(rows), "", f"failed:{reason}"]], []
    table = []
    flags = ";".join(est.flags)
    for name, b, s, p in zip(est.names, est.beta, est.se, est.pvalues):
        table.append([metric, name, _f(b), _f(s), _f(p), stars(float(p)), _f(b - 1.96 * s), _f(b + 1.96 * s),
                      est.n_obs, _f(est.pseudo_r2), flags])
    curves = []
    for pred in MARGIN_PREDICTORS:
        if pred not in est.names:
            continue
        _, lo, hi = est.continuous[pred]
        grid = np.linspace(lo, hi, n_grid) if hi > lo else np.array([lo])
        for m in margins(est, pred, grid):
            curves.append([metric, pred, _f(m.value), _f(m.probability), _f(m.ci_lo), _f(m.ci_hi),
                           int(m.extrapolated)])
    return table, curves


def stage_estimate(cfg: RunConfig, out: Path) -> dict:
    panels = read_panels(out / "panels.jsonl")
    labels = read_labels(out / "labels.csv")
    pools = read_pools(out / "pools.jsonl")
    (out / "event").mkdir(exist_ok=True)
    estimates, subgroups = [], []
    for kind in (MOVED, UNMOVED):
        comparison = COMPARISON[kind]
        for outcome in OUTCOMES:
            for method in cfg.methods:
                name = match_name(method, kind, outcome)
                ms = MatchedSet.from_jsonl(out / "matches" / f"{name}.jsonl")
                ms.method, ms.outcome_kind, ms.pool_kind = method, outcome, kind
                estimates.append(did_row(ms, panels, cfg, comparison))
                event_rows = []
                if ms.entries:
                    dp = build_did_panel(ms, panels, horizon=cfg.corpus_end, t_range=cfg.t_range)
                    try:
                        es = event_study(dp.rows, cfg.horizons, cfg.se, n_pairs=dp.n_pairs)
                        for e in es.effects:
                            lo, hi = e.ci
                            event_rows.append([e.horizon, _f(e.beta), _f(lo), _f(hi)])
                    except DegenerateFitError as exc:
                        logger.warning("event study degenerate for %s: %s", name, exc)
                _write_csv(out / "event" / f"{name}.csv", ["T", "beta", "ci_lo", "ci_hi"], event_rows)
                if method != cfg.methods[0]:
                    continue
                for dim, key in (("discipline", lambda e: panels[e.treated_id].discipline or ""),
                                 ("cohort", lambda e: str(e.y_w))):
                    for level in sorted({key(e) for e in ms.entries}):
                        sub = _subset(ms, lambda e, lv=level, k=key: k(e) == lv)
                        subgroups.append([dim, level] + did_row(sub, panels, cfg, comparison))
    _write_csv(out / "estimates.csv", ESTIMATE_COLUMNS, estimates)
    _write_csv(out / "subgroups.csv", SUBGROUP_COLUMNS, subgroups)

    logit_table, margin_rows = [], []
    for metric in OUTCOMES:
        rows, deltas, outcomes, median = logit_rows(panels, labels, pools, metric, cfg.corpus_end)
        if metric == OUTCOMES[0]:
            write_deltas(deltas, out / "deltas.csv")
        write_outcomes(outcomes, out / f"outcomes_{metric}.csv")
        table, curves = logit_tables(rows, metric)
        logit_table += table
        margin_rows += curves
    _write_csv(out / "logit.csv", LOGIT_COLUMNS, logit_table)
    _write_csv(out / "margins.csv", MARGIN_COLUMNS, margin_rows)
    return {"estimates": len(estimates), "subgroups": len(subgroups), "logit_terms": len(logit_table)}


STAGES = (("ingest", stage_ingest), ("groups", stage_groups), ("match", stage_match),
          ("estimate", stage_estimate))


def run_pipeline(cfg: RunConfig, out: str | Path, stages=None) -> dict:
    """Run the stages in order; on failure leave a ``FAILED`` marker and raise :class:`StageError`."""
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    marker = out / "FAILED"
    if marker.exists():
        marker.unlink()
    manifest = {
        "version": __version__,
        "config_sha256": cfg.digest(),
        "seed": cfg.seed,
        "inputs": {str(p.name): _sha256(p) for p in cfg.works + [cfg.roster]},
        "counts": {},
    }
    timings = {}
    wanted = set(stages) if stages else {name for name, _ in STAGES}
    for name, fn in STAGES:
        if name not in wanted:
            continue
        t0 = time.perf_counter()
        try:
            manifest["counts"][name] = fn(cfg, out)
        except Exception as exc:
            marker.write_text(f"stage: {name}\nerror: {type(exc).__name__}: {exc}\n", encoding="utf-8")
            manifest["failed_stage"] = name
            (out / "manifest.json").write_text(json.dumps(manifest, sort_keys=True, indent=1) + "\n")
            raise StageError(name, exc) from exc
        timings[name] = round(time.perf_counter() - t0, 3)
        logger.info("stage %s done in %.2fs", name, timings[name])
    outputs = sorted(p for p in out.rglob("*.csv"))
    manifest["outputs"] = {str(p.relative_to(out)): _sha256(p) for p in outputs}
    (out / "manifest.json").write_text(json.dumps(manifest, sort_keys=True, indent=1) + "\n")
    # wall-clock times live apart so the manifest itself is reproducible
    (out / "timings.json").write_text(json.dumps(timings, sort_keys=True, indent=1) + "\n")
    return manifest
