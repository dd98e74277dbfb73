"""Text tables and plot-data bundle built from a run directory's CSV artifacts.

Nothing here re-estimates anything: every number printed is read from a CSV
cell and only formatted.
"""

from __future__ import annotations

import csv
import shutil
from pathlib import Path

from talentmob.tables import coef_cell

COMPARISONS = (("g1", "G_w vs. G_1"), ("g2", "G_w vs. G_2"))
OUTCOME_LABELS = (("publications", "Publications"), ("citations", "Citations"))
EFFECT_ROW = "Talent hat×Movement"
LOGIT_TERMS = (
    ("d_a", "Rate of collaborators change (D_A)"),
    ("d_i", "Rate of collaborative institutions change (D_I)"),
    ("d_c", "Rate of research direction change (D_C)"),
    ("d_size", "Team size change (Δ Team Size)"),
)
STAR_NOTE = "*p<0.05, **p<0.01, ***p<0.001"


def _read(path: Path) -> list[dict] | None:
    if not path.is_file():
        return None
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def _num(s: str | None) -> float | None:
    return float(s) if s not in (None, "") else None


def _cell(row: dict | None) -> str:
    if row is None or row.get("beta", "") == "":
        return "n/a"
    beta, se = float(row["beta"]), _num(row["se"])
    if se is None:
        return f"{beta:.4f}"
    stars = row.get("stars", "")
    return f"{beta:.4f}{stars} ({se:.4f})"


def _r2(row: dict | None, key: str = "r2") -> str:
    if row is None or row.get(key, "") == "":
        return "n/a"
    return f"{float(row[key]):.4f}"


def _table(title: str, header: list[str], rows: list[list[str]]) -> str:
    widths = [max(len(str(r[j])) for r in [header] + rows) for j in range(len(header))]
    fmt = "  ".join(f"{{:<{w}}}" for w in widths)
    lines = [title, fmt.format(*header)]
    lines += [fmt.format(*map(str, r)) for r in rows]
    return "\n".join(lines)


def did_table(estimates: list[dict], method: str, title: str) -> str:
    by_key = {(r["comparison"], r["outcome"]): r for r in estimates
              if r["model"] == "did" and r["method"] == method}
    cols = [(c, o) for c, _ in COMPARISONS for o, _ in OUTCOME_LABELS]
    header = ["Scientific performance"] + [f"{cl} {ol}" for _, cl in COMPARISONS for _, ol in OUTCOME_LABELS]
    rows = [
        [EFFECT_ROW] + [_cell(by_key.get(k)) for k in cols],
        ["Individual"] + ["Yes"] * len(cols),
        ["Time"] + ["Yes"] * len(cols),
        ["#Pairs matched"] + [by_key[k]["n_pairs"] if k in by_key else "n/a" for k in cols],
        ["N"] + [by_key[k]["n_obs"] if k in by_key else "n/a" for k in cols],
        ["R²"] + [_r2(by_key.get(k)) for k in cols],
    ]
    return _table(title, header, rows) + "\n" + STAR_NOTE


def logit_table(logit: list[dict]) -> str:
    by = {(r["metric"], r["term"]): r for r in logit}
    header = ["", "Success in Publications", "Success in Citations"]
    rows = []
    for term, label in LOGIT_TERMS:
        rows.append([label] + [_cell(by.get((m, term))) for m, _ in OUTCOME_LABELS])
    for label in ("Career start year (Y_0)", "Year of movement (Y_w)", "Discipline", "Group"):
        rows.append([label, "Yes", "Yes"])
    first = {m: next((r for r in logit if r["metric"] == m), None) for m, _ in OUTCOME_LABELS}
    rows.append(["#Observations"] + [first[m]["n_obs"] if first[m] else "n/a" for m, _ in OUTCOME_LABELS])
    rows.append(["R² (McFadden)"] + [_r2(first[m], "pseudo_r2") for m, _ in OUTCOME_LABELS])
    notes = sorted({f"{m}: {r['flags']}" for m, r in first.items() if r and r["flags"]})
    text = _table("Logistic regression of post-move success", header, rows) + "\n" + STAR_NOTE
    if notes:
        text += "\nflags: " + " | ".join(notes)
    return text


def subgroup_table(subgroups: list[dict], dimension: str) -> str:
    header = ["level", "comparison", "outcome", "coef (SE)", "#Pairs"]
    rows = [[r["level"], r["comparison"], r["outcome"], _cell(r), r["n_pairs"]]
            for r in subgroups if r["dimension"] == dimension]
    return _table(f"Per-{dimension} estimates (separate fits)", header, rows)


def balance_section(path: Path) -> str:
    rows = _read(path) or []
    header = ["year", "exact", "refined"]
    body = []
    for r in rows:
        ex = coef_cell(_num(r["coef_exact"]), _num(r["se_exact"]), None) or "n/a"
        rf = coef_cell(_num(r["coef_refined"]), _num(r["se_refined"]), None) or "n/a"
        body.append([r["year"], ex + r["stars_exact"], rf + r["stars_refined"]])
    return _table(f"Balance {path.stem}", header, body)


def report(run_dir: str | Path, out_dir: str | Path | None = None) -> tuple[str, list[str]]:
    """Summarise a run directory. Returns ``(text, missing_artifacts)``.

    Plot-data CSVs (event-study curves, per-discipline and per-cohort
    coefficients, margins curves) are collected under ``out_dir``
    (default ``<run_dir>/report``).
    """
    run = Path(run_dir)
    out = Path(out_dir) if out_dir else run / "report"
    missing = []
    sections = []

    estimates = _read(run / "estimates.csv")
    if estimates is None:
        missing.append("estimates.csv")
    else:
        methods = list(dict.fromkeys(r["method"] for r in estimates))
        if methods:
            sections.append(did_table(estimates, methods[0], f"DID estimates ({methods[0].upper()} matching)"))
        for m in methods[1:]:
            sections.append(did_table(estimates, m, f"DID estimates ({m.upper()} matching)"))

    logit = _read(run / "logit.csv")
    if logit is None:
        missing.append("logit.csv")
    else:
        sections.append(logit_table(logit))

    subgroups = _read(run / "subgroups.csv")
    if subgroups is None:
        missing.append("subgroups.csv")
    else:
        for dim in ("discipline", "cohort"):
            sections.append(subgroup_table(subgroups, dim))

    balance = sorted((run / "balance").glob("*.csv")) if (run / "balance").is_dir() else []
    if not balance:
        missing.append("balance/")
    sections += [balance_section(p) for p in balance]

    events = sorted((run / "event").glob("*.csv")) if (run / "event").is_dir() else []
    if not events:
        missing.append("event/")
    if not (run / "margins.csv").is_file():
        missing.append("margins.csv")
    if not (run / "manifest.json").is_file():
        missing.append("manifest.json")
    if (run / "FAILED").is_file():
        sections.insert(0, "RUN FAILED\n" + (run / "FAILED").read_text(encoding="utf-8").strip())

    if events or subgroups is not None or (run / "margins.csv").is_file():
        out.mkdir(parents=True, exist_ok=True)
        for p in events:
            shutil.copyfile(p, out / f"event_{p.name}")
        if subgroups is not None:
            for dim in ("discipline", "cohort"):
                rows = [r for r in subgroups if r["dimension"] == dim]
                with open(out / f"subgroups_{dim}.csv", "w", newline="", encoding="utf-8") as fh:
                    if rows:
                        w = csv.DictWriter(fh, fieldnames=list(rows[0]), lineterminator="\n")
                        w.writeheader()
                        w.writerows(rows)
        if (run / "margins.csv").is_file():
            shutil.copyfile(run / "margins.csv", out / "margins.csv")

    if missing:
        sections.append("Missing artifacts: " + ", ".join(missing))
    text = "\n\n".join(sections) + "\n"
    return text, missing
