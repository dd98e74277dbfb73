"""Cross-border move detection and G_w / G_1 / G_2 group assignment."""

from __future__ import annotations

import csv
import logging
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

from talentmob.corpus import AuthorYearPanel

logger = logging.getLogger(__name__)

TALENT, MOVER, STAYER = "G_w", "G_1", "G_2"
GROUPS = (TALENT, MOVER, STAYER)


@dataclass(frozen=True)
class MobilityEvent:
    author_id: str
    y_w: int
    origin_country: str
    destination_country: str = "CN"


@dataclass
class GroupLabel:
    author_id: str
    group: str
    y_w: int | None = None
    origin: str | None = None
    audit_flags: list[str] = field(default_factory=list)


def detect_move(
    panel: AuthorYearPanel,
    destination: str = "CN",
    min_run: int = 3,
    max_gap: int = 1,
) -> MobilityEvent | None:
    """Return the first move to ``destination`` preceded by a foreign run of ``min_run`` years.

    A foreign run is a span of years publishing only under non-destination
    institutions; up to ``max_gap`` consecutive silent years (no paper with a
    known country) may sit inside it or between it and the move year. A year
    mixing destination and foreign affiliations counts as a destination year.
    """
    run_years: list[int] = []
    for y in sorted(panel.country_by_year):
        cs = panel.country_by_year[y]
        if not cs:
            continue
        if destination in cs:
            if (
                run_years
                and y - run_years[-1] - 1 <= max_gap
                and run_years[-1] - run_years[0] + 1 >= min_run
            ):
                tally = Counter(c for ry in run_years for c in panel.country_by_year[ry])
                best = max(tally.values())
                origin = min(c for c, n in tally.items() if n == best)
                return MobilityEvent(panel.author_id, y, origin, destination)
            run_years = []
        else:
            if run_years and y - run_years[-1] - 1 > max_gap:
                run_years = []
            run_years.append(y)
    return None


def is_single_country(panel: AuthorYearPanel) -> bool:
    seen = set()
    for cs in panel.country_by_year.values():
        seen |= cs
    return len(seen) == 1


def assign_groups(
    panels: dict[str, AuthorYearPanel],
    roster: dict[str, int],
    destination: str = "CN",
    min_run: int = 3,
    max_gap: int = 1,
    max_cohort_gap: int = 2,
) -> tuple[list[GroupLabel], list[GroupLabel]]:
    """Label authors as talents, unfunded movers or stayers.

    ``roster`` maps author id to the claimed cohort year. Returns
    ``(labels, audit)``: labels sorted by author id, and audit entries for
    roster members that could not be placed in G_w (group ``"excluded"``).
    """
    labels: list[GroupLabel] = []
    audit: list[GroupLabel] = []
    for aid in sorted(set(roster) - set(panels)):
        audit.append(GroupLabel(aid, "excluded", audit_flags=["roster_missing"]))
        logger.info("roster author %s absent from corpus", aid)

    for aid in sorted(panels):
        p = panels[aid]
        ev = detect_move(p, destination, min_run, max_gap)
        if aid in roster:
            cohort = roster[aid]
            if ev is None:
                audit.append(GroupLabel(aid, "excluded", audit_flags=["roster_not_mover"]))
            elif abs(ev.y_w - cohort) > max_cohort_gap:
                audit.append(
                    GroupLabel(aid, "excluded", ev.y_w, ev.origin_country,
                               [f"cohort_conflict:{cohort}"])
                )
            else:
                flags = [] if ev.y_w == cohort else [f"cohort_claimed:{cohort}"]
                labels.append(GroupLabel(aid, TALENT, ev.y_w, ev.origin_country, flags))
        elif ev is not None:
            labels.append(GroupLabel(aid, MOVER, ev.y_w, ev.origin_country))
        elif is_single_country(p):
            (country,) = set().union(*p.country_by_year.values())
            labels.append(GroupLabel(aid, STAYER, None, country))
    return labels, audit


def read_roster(path: str | Path) -> dict[str, int]:
    roster = {}
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            roster[row["author_id"].strip()] = int(row["cohort_year"])
    return roster


def write_labels(labels: Iterable[GroupLabel], path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["author_id", "group", "y_w", "origin", "audit_flags"])
        for lab in sorted(labels, key=lambda x: x.author_id):
            w.writerow([
                lab.author_id,
                lab.group,
                "" if lab.y_w is None else lab.y_w,
                lab.origin or "",
                ";".join(lab.audit_flags),
            ])


def read_labels(path: str | Path) -> list[GroupLabel]:
    out = []
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            out.append(GroupLabel(
                row["author_id"],
                row["group"],
                int(row["y_w"]) if row["y_w"] else None,
                row["origin"] or None,
                [f for f in row["audit_flags"].split(";") if f],
            ))
    return out
