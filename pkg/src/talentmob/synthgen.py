"""Synthetic corpora with planted mobility, group structure and treatment effects.

Every main author publishes every active year (at least one paper), so the
planted affiliation runs are visible to move detection. Yearly publication
counts have mean ``level + (year - first_year) // pub_trend_every``; new
citations have mean ``cite_level + cite_trend * (year - first_year)``. With
``noise`` off the means are used as counts, otherwise Poisson draws.
Talents gain ``delta_pub`` papers and a ``exp(delta_cite)`` citation factor
in every year after the move.

Citations are realised through single-author "citing" papers: in year y the
m-th citing paper references one paper of every author still owed more than
m citations that year, so each author receives exactly the planned count.

For a ``feasible_fraction`` of talents, two moved and two unmoved donors are
planted whose pre-move publication series are ``talent +/- e`` (``e`` sums to
zero) with identical citations, making the talent an exact 50/50 convex
combination of each donor pair.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

TALENT, MOVER, STAYER, SHORT = "talent", "mover", "stayer", "short_run"


class SynthConfigError(ValueError):
    pass


@dataclass
class SynthConfig:
    seed: int
    n_talents: int = 30
    n_movers: int = 70
    n_stayers: int = 100
    n_short_run: int = 4
    first_year: int = 2000
    last_year: int = 2020
    disciplines: tuple[str, ...] = ("biology", "chemistry", "physics")
    origins: tuple[str, ...] = ("US", "DE", "GB", "JP")
    destination: str = "CN"
    cohorts: tuple[int, ...] = (2011, 2012, 2013, 2015, 2016)
    noise: bool = True
    pub_level: tuple[int, int] = (2, 7)
    talent_pub_level: tuple[int, int] = (5, 8)
    cite_level: tuple[int, int] = (2, 16)
    talent_cite_level: tuple[int, int] = (10, 20)
    pub_trend_every: int = 5
    cite_trend: float = 1.0
    delta_pub: float = 2.0
    delta_cite: float = 0.3
    feasible_fraction: float = 0.7
    env_effect: float = 4.0
    turnover: tuple[float, float] = (0.2, 1.0)
    topic_shift: tuple[float, float] = (0.0, 0.6)
    drift: float = 0.05
    coauthor_pool: int = 8
    coauthor_cap: int = 9
    topic_pool: int = 4

    def __post_init__(self):
        for k in ("disciplines", "origins", "cohorts", "pub_level", "talent_pub_level",
                  "cite_level", "talent_cite_level", "turnover", "topic_shift"):
            setattr(self, k, tuple(getattr(self, k)))

    @property
    def n_feasible(self) -> int:
        return int(round(self.feasible_fraction * self.n_talents))

    def validate(self) -> None:
        if self.seed is None:
            raise SynthConfigError("seed is mandatory")
        for k in ("n_talents", "n_movers", "n_stayers", "n_short_run"):
            if getattr(self, k) < 0:
                raise SynthConfigError(f"{k} must be non-negative")
        if not 0.0 <= self.feasible_fraction <= 1.0:
            raise SynthConfigError("feasible_fraction must lie in [0, 1]")
        need = 2 * self.n_feasible
        if need > self.n_movers or need > self.n_stayers:
            raise SynthConfigError(
                f"{self.n_feasible} feasible talents need {need} donors per pool; "
                f"have {self.n_movers} movers and {self.n_stayers} stayers"
            )
        if float(self.delta_pub) != int(self.delta_pub):
            raise SynthConfigError("delta_pub must be a whole number of papers")
        if min(self.pub_level + self.talent_pub_level) < 1:
            raise SynthConfigError("publication levels must be at least 1")
        if min(self.cite_level + self.talent_cite_level) < 0 or self.cite_trend < 0:
            raise SynthConfigError("citation rates must be non-negative")
        if self.coauthor_pool < 2 or self.coauthor_cap < 1:
            raise SynthConfigError("coauthor pool needs at least two members")
        bad = [c for c in self.cohorts if c - 5 < self.first_year or c + 1 > self.last_year]
        if bad:
            raise SynthConfigError(f"cohort years {bad} leave no pre/post window")

    @classmethod
    def from_dict(cls, d: dict) -> "SynthConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(d) - known
        if unknown:
            raise SynthConfigError(f"unknown synth config keys: {sorted(unknown)}")
        return cls(**d)


@dataclass
class GroundTruth:
    delta_pub: float
    delta_cite: float
    env_effect: float
    movers: dict[str, dict]
    groups: dict[str, str]
    designated: dict[str, dict[str, list[tuple[str, float]]]]
    latent: dict[str, dict]
    baseline_pubs: dict[str, dict[int, int]]
    logit_signs: dict[str, int] = field(default_factory=dict)

    def to_json(self) -> str:
        d = asdict(self)
        d["baseline_pubs"] = {a: {str(y): n for y, n in s.items()} for a, s in self.baseline_pubs.items()}
        return json.dumps(d, sort_keys=True, indent=1)

    @classmethod
    def from_json(cls, text: str) -> "GroundTruth":
        d = json.loads(text)
        d["baseline_pubs"] = {a: {int(y): n for y, n in s.items()} for a, s in d["baseline_pubs"].items()}
        d["designated"] = {
            t: {k: [tuple(x) for x in v] for k, v in pools.items()} for t, pools in d["designated"].items()
        }
        return cls(**d)


@dataclass
class _Author:
    aid: str
    idx: int
    role: str
    discipline: str
    y0: int
    y_w: int | None
    countries: dict[int, str]
    a: int
    c: int
    u: float = 0.0
    v: float = 0.0
    template: str | None = None
    sign: int = 0
    pubs: dict[int, int] = field(default_factory=dict)
    cites: dict[int, int] = field(default_factory=dict)
    baseline: dict[int, int] = field(default_factory=dict)


class _Generator:
    def __init__(self, cfg: SynthConfig):
        self.cfg = cfg
        self.rng = np.random.default_rng([cfg.seed, 0])
        self.years = range(cfg.first_year, cfg.last_year + 1)

    def author_rng(self, idx: int, stream: int) -> np.random.Generator:
        return np.random.default_rng([self.cfg.seed, stream, idx])

    # -- structure -------------------------------------------------------
    def _career(self, role, y_w=None):
        cfg, rng = self.cfg, self.rng
        if role == SHORT:
            y0 = int(rng.integers(2004, 2012))
            return y0, y0 + 2
        if role == STAYER:
            return int(rng.integers(cfg.first_year, cfg.first_year + 9)), None
        if y_w is None:
            if role == TALENT:
                y_w = int(rng.choice(cfg.cohorts))
            else:
                lo, hi = min(cfg.cohorts) - 1, max(cfg.cohorts) + 1
                y_w = int(rng.integers(lo, hi + 1))
        latest = min(y_w - 5, cfg.first_year + 7)
        y0 = int(rng.integers(cfg.first_year, max(latest, cfg.first_year) + 1))
        return y0, y_w

    def _countries(self, y0, y_w, origin, role):
        cfg = self.cfg
        out = {}
        for y in range(y0, cfg.last_year + 1):
            if role in (TALENT, MOVER, SHORT) and y >= y_w:
                out[y] = cfg.destination
            else:
                out[y] = origin
        return out

    def plan(self) -> list[_Author]:
        cfg, rng = self.cfg, self.rng
        authors: list[_Author] = []

        def add(role, discipline, y0, y_w, origin, a, c, template=None, sign=0):
            idx = len(authors)
            prefix = {TALENT: "T", MOVER: "M", STAYER: "S", SHORT: "R"}[role]
            aid = f"{prefix}{idx:04d}"
            u = float(rng.uniform(*cfg.turnover)) if role in (TALENT, MOVER) else 0.0
            v = float(rng.uniform(*cfg.topic_shift)) if role in (TALENT, MOVER) else 0.0
            authors.append(_Author(aid, idx, role, discipline, y0, y_w,
                                   self._countries(y0, y_w, origin, role), a, c, u, v, template, sign))
            return authors[-1]

        talents = []
        for _ in range(cfg.n_talents):
            disc = str(rng.choice(cfg.disciplines))
            y0, y_w = self._career(TALENT)
            a = int(rng.integers(cfg.talent_pub_level[0], cfg.talent_pub_level[1] + 1))
            c = int(rng.integers(cfg.talent_cite_level[0], cfg.talent_cite_level[1] + 1))
            talents.append(add(TALENT, disc, y0, y_w, str(rng.choice(cfg.origins)), a, c))

        n_moved = n_unmoved = 0
        for t in talents[: cfg.n_feasible]:
            for sign in (1, -1):
                add(MOVER, t.discipline, t.y0, t.y_w, str(rng.choice(cfg.origins)), t.a, t.c, t.aid, sign)
                n_moved += 1
            for sign in (1, -1):
                home = str(rng.choice(cfg.origins + (cfg.destination,)))
                add(STAYER, t.discipline, t.y0, None, home, t.a, t.c, t.aid, sign)
                n_unmoved += 1

        for _ in range(cfg.n_movers - n_moved):
            disc = str(rng.choice(cfg.disciplines))
            y0, y_w = self._career(MOVER)
            a = int(rng.integers(cfg.pub_level[0], cfg.pub_level[1] + 1))
            c = int(rng.integers(cfg.cite_level[0], cfg.cite_level[1] + 1))
            add(MOVER, disc, y0, y_w, str(rng.choice(cfg.origins)), a, c)
        for _ in range(cfg.n_stayers - n_unmoved):
            disc = str(rng.choice(cfg.disciplines))
            y0, _ = self._career(STAYER)
            a = int(rng.integers(cfg.pub_level[0], cfg.pub_level[1] + 1))
            c = int(rng.integers(cfg.cite_level[0], cfg.cite_level[1] + 1))
            add(STAYER, disc, y0, None, str(rng.choice(cfg.origins + (cfg.destination,))), a, c)
        for _ in range(cfg.n_short_run):
            disc = str(rng.choice(cfg.disciplines))
            y0, y_w = self._career(SHORT)
            a = int(rng.integers(cfg.pub_level[0], cfg.pub_level[1] + 1))
            c = int(rng.integers(cfg.cite_level[0], cfg.cite_level[1] + 1))
            add(SHORT, disc, y0, y_w, str(rng.choice(cfg.origins)), a, c)
        return authors

    # -- outcome series --------------------------------------------------
    def _draw(self, rng, mean):
        if self.cfg.noise:
            return int(rng.poisson(max(mean, 0.0)))
        return int(round(mean))

    def series(self, au: _Author) -> None:
        cfg = self.cfg
        rng = self.author_rng(au.idx, 1)
        moved = au.role in (TALENT, MOVER) and au.y_w is not None
        for y in range(au.y0, cfg.last_year + 1):
            base_mean = au.a + (y - cfg.first_year) // cfg.pub_trend_every
            post = moved and y > au.y_w
            mean = base_mean + (cfg.env_effect * (au.u - 0.5) if post else 0.0)
            p = max(1, self._draw(rng, mean))
            au.baseline[y] = p
            if au.role == TALENT and post:
                p += int(cfg.delta_pub)
            au.pubs[y] = p
            c = self._draw(rng, au.c + cfg.cite_trend * (y - cfg.first_year))
            if au.role == TALENT and post:
                c = int(round((1 + c) * math.exp(cfg.delta_cite))) - 1
            au.cites[y] = max(c, 0)

    def copy_pre_window(self, donor: _Author, talent: _Author) -> None:
        """Overwrite the donor's pre-move window with the talent's series +/- e."""
        y_w = talent.y_w
        eligible = [y for y in range(y_w - 4, y_w) if talent.pubs[y] >= 2]
        eligible = eligible[: len(eligible) // 2 * 2]
        e = {y: (1 if k % 2 == 0 else -1) for k, y in enumerate(eligible)}
        for y in range(y_w - 5, y_w + 1):
            donor.pubs[y] = talent.pubs[y] + donor.sign * e.get(y, 0)
            donor.baseline[y] = donor.pubs[y]
            donor.cites[y] = talent.cites[y]


def _institution(country: str, k: int) -> str:
    return f"I-{country}-{k}"


def _papers(gen: _Generator, au: _Author):
    """Yield flat-format work dicts authored by ``au`` and its coauthors."""
    cfg = gen.cfg
    rng = gen.author_rng(au.idx, 2)
    counter = [0]

    def new_coauthor(country):
        counter[0] += 1
        return {"id": f"{au.aid}-c{counter[0]:03d}",
                "inst": _institution(country, int(rng.integers(1, 6))), "n": 0}

    country0 = au.countries[au.y0]
    pool = [new_coauthor(country0) for _ in range(cfg.coauthor_pool)]
    universe = [f"C2-{au.discipline}-{k:02d}" for k in range(40)]
    topics = list(rng.choice(universe, size=cfg.topic_pool, replace=False))
    home = {}
    for y in range(au.y0, cfg.last_year + 1):
        country = au.countries[y]
        if country not in home:
            home[country] = _institution(country, int(rng.integers(1, 6)))
        if au.y_w is not None and y == au.y_w and au.role in (TALENT, MOVER):
            n_new = int(round(au.u * len(pool)))
            replace = rng.choice(len(pool), size=n_new, replace=False)
            for j in sorted(replace):
                pool[j] = new_coauthor(country)
            n_topic = int(round(au.v * len(topics)))
            fresh = [t for t in universe if t not in topics]
            for j, t in zip(range(n_topic), rng.choice(fresh, size=n_topic, replace=False)):
                topics[j] = str(t)
        elif cfg.noise and cfg.drift > 0:
            for j in range(len(pool)):
                if rng.random() < cfg.drift:
                    pool[j] = new_coauthor(country)
        for k in range(au.pubs[y]):
            if cfg.noise:
                team = int(np.clip(2 + rng.poisson(1.5), 2, len(pool) + 1))
            else:
                team = 3
            chosen = sorted(rng.choice(len(pool), size=team - 1, replace=False))
            authors = [{"id": au.aid, "institutions": [{"id": home[country], "country": country}]}]
            for j in chosen:
                co = pool[j]
                ccountry = co["inst"].split("-")[1]
                authors.append({"id": co["id"], "institutions": [{"id": co["inst"], "country": ccountry}]})
                co["n"] += 1
                if co["n"] >= cfg.coauthor_cap:
                    pool[j] = new_coauthor(country)
            paper_topics = [{"id": f"C0-{au.discipline}", "level": 0},
                            {"id": f"C1-{au.discipline}", "level": 1}]
            picks = rng.choice(len(topics), size=min(2, len(topics)), replace=False)
            paper_topics += [{"id": str(topics[j]), "level": 2} for j in sorted(picks)]
            yield {"id": f"W{au.aid}-{y}-{k:02d}", "year": y, "authors": authors,
                   "topics": paper_topics, "references": []}


def _to_openalex(doc: dict) -> dict:
    return {
        "id": f"https://openalex.org/{doc['id']}",
        "publication_year": doc["year"],
        "authorships": [
            {"author": {"id": f"https://openalex.org/{a['id']}"},
             "institutions": [{"id": f"https://openalex.org/{i['id']}", "country_code": i["country"]}
                              for i in a["institutions"]]}
            for a in doc["authors"]
        ],
        "concepts": [{"id": f"https://openalex.org/{t['id']}", "level": t["level"]} for t in doc["topics"]],
        "referenced_works": [f"https://openalex.org/{r}" for r in doc["references"]],
    }


def generate(config: SynthConfig, seed: int | None = None, format: str = "flat"):
    """Build a corpus. Returns ``(works_jsonl, roster_csv, truth)``."""
    if seed is not None:
        config = SynthConfig.from_dict({**asdict(config), "seed": seed})
    config.validate()
    gen = _Generator(config)
    authors = gen.plan()
    by_id = {a.aid: a for a in authors}
    for au in authors:
        gen.series(au)
    for au in authors:
        if au.template is not None:
            gen.copy_pre_window(au, by_id[au.template])

    works: list[dict] = []
    papers_of: dict[str, list[tuple[int, str]]] = {}
    for au in authors:
        for doc in _papers(gen, au):
            works.append(doc)
            papers_of.setdefault(au.aid, []).append((doc["year"], doc["id"]))

    for y in gen.years:
        owed = {a.aid: a.cites.get(y, 0) for a in authors if a.cites.get(y, 0) > 0}
        if not owed:
            continue
        for m in range(max(owed.values())):
            refs = []
            for aid in sorted(owed):
                if owed[aid] > m:
                    avail = [pid for py, pid in papers_of[aid] if py <= y]
                    refs.append(avail[(m * 7 + y) % len(avail)])
            works.append({"id": f"WF-{y}-{m:03d}", "year": y,
                          "authors": [{"id": f"F-{y}-{m:03d}", "institutions": []}],
                          "topics": [], "references": refs})

    conv = _to_openalex if format == "openalex-works" else (lambda d: d)
    works_text = "".join(json.dumps(conv(d), sort_keys=True, separators=(",", ":")) + "\n" for d in works)

    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["author_id", "cohort_year"])
    for au in authors:
        if au.role == TALENT:
            w.writerow([au.aid, au.y_w])

    group_of = {TALENT: "G_w", MOVER: "G_1", STAYER: "G_2"}
    designated: dict[str, dict] = {}
    for au in authors:
        if au.template is not None:
            kind = "moved" if au.role == MOVER else "unmoved"
            designated.setdefault(au.template, {"moved": [], "unmoved": []})[kind].append((au.aid, 0.5))
    truth = GroundTruth(
        delta_pub=float(config.delta_pub),
        delta_cite=float(config.delta_cite),
        env_effect=float(config.env_effect),
        movers={a.aid: {"y_w": a.y_w, "origin": a.countries[a.y0]}
                for a in authors if a.role in (TALENT, MOVER)},
        groups={a.aid: group_of[a.role] for a in authors if a.role in group_of},
        designated=designated,
        latent={a.aid: {"pub_level": a.a, "cite_level": a.c, "turnover": a.u, "topic_shift": a.v,
                        "discipline": a.discipline, "y0": a.y0}
                for a in authors},
        baseline_pubs={a.aid: dict(a.baseline) for a in authors if a.role == TALENT},
        logit_signs={"d_a": 1} if config.env_effect > 0 else {},
    )
    return works_text, buf.getvalue(), truth


DEMO_CONFIG = {"seed": 20240501}


def pipeline_config(seed: int, works: str = "works.jsonl", roster: str = "roster.csv",
                    format: str = "flat", last_year: int = 2020) -> dict:
    return {
        "inputs": {"works": [works], "roster": roster, "format": format},
        "destination_country": "CN",
        "corpus_end": last_year,
        "caps": {"moved": 200, "unmoved": 300},
        "window": {"pre": [-4, 0], "post": [1, 9]},
        "match": {"method": ["scm", "cem", "dom"]},
        "estimate": {"se": "clustered"},
        "seed": seed,
    }


def simulate(config: SynthConfig, out_dir: str | Path, seed: int | None = None,
             format: str = "flat") -> dict[str, Path]:
    """Write works, roster, ground truth and a ready-to-run pipeline config."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    works, roster, truth = generate(config, seed, format)
    used_seed = config.seed if seed is None else seed
    paths = {
        "works": out / "works.jsonl",
        "roster": out / "roster.csv",
        "truth": out / "truth.json",
        "config": out / "config.json",
    }
    paths["works"].write_text(works, encoding="utf-8")
    paths["roster"].write_text(roster, encoding="utf-8")
    paths["truth"].write_text(truth.to_json(), encoding="utf-8")
    cfg = pipeline_config(used_seed, format=format, last_year=config.last_year)
    paths["config"].write_text(json.dumps(cfg, indent=1, sort_keys=True), encoding="utf-8")
    return paths


# -- panel-level simulation --------------------------------------------------

def did_panel(
    n_treated: int = 30,
    n_controls: int = 30,
    effect=2.0,
    sigma: float = 0.0,
    seed: int = 0,
    t_range: tuple[int, int] = (-4, 9),
    weighted: bool = False,
    ar: float = 0.0,
):
    """Balanced long panel ``y = unit + year + effect * Treat * Post + error``.

    ``effect`` is a number or a mapping from post horizon to effect size.
    Unit and year shifts are arbitrary draws; errors are AR(1) within a unit
    with coefficient ``ar`` and innovation sd ``sigma``. With ``weighted``
    the control rows get random analytic weights.
    """
    from talentmob.econometrics.panel import PanelObservation

    rng = np.random.default_rng([seed, 7])
    ts = range(t_range[0], t_range[1] + 1)
    year_fx = {t: float(rng.normal(0, 3)) for t in ts}
    rows = []
    for s in range(n_treated + n_controls):
        treat = int(s < n_treated)
        sid = f"{'t' if treat else 'c'}{s:04d}"
        unit_fx = float(rng.normal(0, 5))
        w = 1.0 if treat or not weighted else float(rng.uniform(0.2, 2.0))
        e = 0.0
        for t in ts:
            e = ar * e + (float(rng.normal(0, sigma)) if sigma > 0 else 0.0)
            d = effect.get(t, 0.0) if isinstance(effect, dict) else effect
            y = unit_fx + year_fx[t] + (d if treat and t >= 1 else 0.0) + e
            rows.append(PanelObservation(sid, t, y, treat, int(t >= 1), w))
    return rows


def did_coverage(n_reps: int = 100, delta: float = 2.0, sigma: float = 1.0, seed: int = 0,
                 se_type: str = "clustered", **panel_kw) -> list[tuple[float, float, float]]:
    """(beta, ci_lo, ci_hi) for replicated noisy panels with planted ``delta``."""
    from talentmob.econometrics.did import twfe_did

    out = []
    for r in range(n_reps):
        est = twfe_did(did_panel(effect=delta, sigma=sigma, seed=seed * 100_003 + r, **panel_kw), se_type)
        out.append((est.beta1, *est.ci))
    return out


# -- validation against ground truth -----------------------------------------

DEFAULT_TOLERANCES = {
    "beta_abs": 1e-6,        # slack on |beta - planted| before SEs are considered
    "beta_se_mult": 3.0,     # plus this many standard errors
    "coverage": (0.90, 0.99),
}


@dataclass
class Criterion:
    name: str
    passed: bool
    observed: float | None
    expected: float | None
    deviation: float | None
    detail: str = ""


@dataclass
class ValidationReport:
    status: str  # "pass", "fail" or "incomplete"
    criteria: list[Criterion]
    missing: list[str]

    @property
    def failed(self) -> list[str]:
        return [c.name for c in self.criteria if not c.passed]

    def text(self) -> str:
        lines = [f"status: {self.status}"]
        for c in self.criteria:
            dev = "" if c.deviation is None else f" deviation={c.deviation:.3g}"
            lines.append(f"{'PASS' if c.passed else 'FAIL'} {c.name}{dev} {c.detail}".rstrip())
        lines += [f"MISSING {m}" for m in self.missing]
        return "\n".join(lines)


def _read_rows(path: Path) -> list[dict]:
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def _num(v: str) -> float | None:
    return float(v) if v not in ("", None) else None


def validate(run_dir: str | Path, truth: GroundTruth, tolerances: dict | None = None) -> ValidationReport:
    """Compare pipeline outputs in ``run_dir`` with the planted ground truth.

    Checks every DID row against the planted effect for its outcome, the mean
    of each event-study profile, the signs recorded in ``truth.logit_signs``
    and, when ``replications.csv`` (beta, ci_lo, ci_hi) is present, the
    coverage rate of the intervals. A DID or event row passes when
    ``|beta - planted| <= beta_abs + beta_se_mult * se``.
    """
    tol = {**DEFAULT_TOLERANCES, **(tolerances or {})}
    run = Path(run_dir)
    planted = {"publications": truth.delta_pub, "citations": truth.delta_cite}
    criteria: list[Criterion] = []
    missing: list[str] = []

    def beta_check(name, beta, se, target):
        if beta is None:
            criteria.append(Criterion(name, False, None, target, None, "no estimate"))
            return
        slack = tol["beta_abs"] + tol["beta_se_mult"] * (se or 0.0)
        dev = abs(beta - target)
        criteria.append(Criterion(name, dev <= slack, beta, target, dev, f"allowed={slack:.3g}"))

    est_path = run / "estimates.csv"
    if est_path.exists():
        for r in _read_rows(est_path):
            if r["model"] != "did" or r["outcome"] not in planted:
                continue
            beta_check(f"did:{r['comparison']}:{r['outcome']}:{r['method']}",
                       _num(r["beta"]), _num(r["se"]), planted[r["outcome"]])
    else:
        missing.append("estimates.csv")

    event_files = sorted((run / "event").glob("*.csv")) if (run / "event").is_dir() else []
    if not event_files:
        missing.append("event/*.csv")
    for f in event_files:
        outcome = next((o for o in planted if f.stem.endswith(o)), None)
        if outcome is None:
            continue
        rows = [r for r in _read_rows(f) if r["beta"]]
        if not rows:
            criteria.append(Criterion(f"event:{f.stem}", False, None, planted[outcome], None, "no horizons"))
            continue
        betas = np.array([float(r["beta"]) for r in rows])
        half = np.array([(float(r["ci_hi"]) - float(r["ci_lo"])) / (2 * 1.96) for r in rows])
        se_mean = float(np.sqrt(np.sum(half ** 2))) / len(rows)
        beta_check(f"event:{f.stem}", float(betas.mean()), se_mean, planted[outcome])

    if truth.logit_signs:
        lp = run / "logit.csv"
        if lp.exists():
            got = {r["term"]: _num(r["beta"]) for r in _read_rows(lp) if r["metric"] == "publications"}
            for term, sign in sorted(truth.logit_signs.items()):
                b = got.get(term)
                ok = b is not None and np.sign(b) == sign
                criteria.append(Criterion(f"logit_sign:{term}", bool(ok), b, float(sign), None))
        else:
            missing.append("logit.csv")

    rep = run / "replications.csv"
    if rep.exists():
        rows = _read_rows(rep)
        target = truth.delta_pub
        hits = sum(float(r["ci_lo"]) <= target <= float(r["ci_hi"]) for r in rows)
        rate = hits / len(rows) if rows else float("nan")
        lo, hi = tol["coverage"]
        criteria.append(Criterion("coverage", bool(rows) and lo <= rate <= hi, rate, 0.95, None,
                                  f"{hits}/{len(rows)}"))

    if missing:
        status = "incomplete"
    elif any(not c.passed for c in criteria):
        status = "fail"
    else:
        status = "pass"
    return ValidationReport(status, criteria, missing)


def write_replications(path: str | Path, reps: list[tuple[float, float, float]]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["beta", "ci_lo", "ci_hi"])
        for b, lo, hi in reps:
            w.writerow([repr(b), repr(lo), repr(hi)])
