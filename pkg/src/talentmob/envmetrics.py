"""Environment change around the move year and post-move success labels."""

from __future__ import annotations

import csv
import statistics
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

from talentmob.corpus import AuthorYearPanel


class UndefinedRateError(ValueError):
    """The post-move set is empty, so the change rate has no denominator."""


class EmptyWindowError(ValueError):
    pass


@dataclass
class EnvironmentDelta:
    author_id: str
    d_a: float
    d_i: float
    d_c: float
    d_size: float
    window_pre: tuple[int, int]
    window_post: tuple[int, int]
    flags: list[str] = field(default_factory=list)


@dataclass
class SuccessOutcome:
    author_id: str
    metric: str
    value: int
    median: float
    label: int
    flags: list[str] = field(default_factory=list)


def change_rate(before: Iterable, after: Iterable) -> float:
    """Share of ``after`` that is new relative to ``before``: ``|after - before| / |after|``."""
    before, after = set(before), set(after)
    if not after:
        raise UndefinedRateError("post-move set is empty")
    return len(after - before) / len(after)


def _union(by_year: dict[int, set], years: range) -> set:
    out: set = set()
    for y in years:
        out |= by_year.get(y, set())
    return out


def environment_delta(
    panel: AuthorYearPanel, y_w: int, pre_years: int = 5, post_years: int = 5
) -> EnvironmentDelta:
    """Collaborator, institution, topic and team-size change across the move.

    The pre window is ``[y_w - pre_years, y_w - 1]`` and the post window
    ``[y_w, y_w + post_years - 1]``. Topics are the level >= 2 labels.
    """
    pre = range(y_w - pre_years, y_w)
    post = range(y_w, y_w + post_years)
    sizes_pre = [s for y in pre for s in panel.teamsizes_by_year.get(y, [])]
    sizes_post = [s for y in post for s in panel.teamsizes_by_year.get(y, [])]
    if not sizes_pre:
        raise EmptyWindowError("no papers in pre window")
    if not sizes_post:
        raise EmptyWindowError("no papers in post window")
    try:
        d_a = change_rate(_union(panel.collaborators_by_year, pre),
                          _union(panel.collaborators_by_year, post))
    except UndefinedRateError:
        raise UndefinedRateError("D_A: no post-move collaborators") from None
    try:
        d_i = change_rate(_union(panel.collab_institutions_by_year, pre),
                          _union(panel.collab_institutions_by_year, post))
    except UndefinedRateError:
        raise UndefinedRateError("D_I: no post-move institutions") from None
    try:
        d_c = change_rate(_union(panel.topics_by_year, pre), _union(panel.topics_by_year, post))
    except UndefinedRateError:
        raise UndefinedRateError("D_C: no post-move level>=2 topics") from None
    d_size = sum(sizes_post) / len(sizes_post) - sum(sizes_pre) / len(sizes_pre)
    return EnvironmentDelta(
        panel.author_id, d_a, d_i, d_c, d_size,
        (pre.start, pre.stop - 1), (post.start, post.stop - 1),
    )


def post_move_total(panel: AuthorYearPanel, y_w: int, metric: str, years: int = 5) -> int:
    get = panel.pubs if metric == "publications" else panel.cites
    return sum(get(y) for y in range(y_w + 1, y_w + years + 1))


def reference_median(values: Iterable[float]) -> float:
    """Median of the talent group's post-move totals (midpoint for even counts)."""
    values = list(values)
    if not values:
        raise ValueError("reference median needs at least one value")
    return float(statistics.median(values))


def success_outcome(
    panel: AuthorYearPanel,
    y_w: int,
    metric: str,
    reference_median: float,
    horizon: int | None = None,
    years: int = 5,
) -> SuccessOutcome:
    if metric not in ("publications", "citations"):
        raise ValueError(f"unknown metric {metric!r}")
    value = post_move_total(panel, y_w, metric, years)
    flags = []
    if horizon is not None and y_w + years > horizon:
        flags.append("truncated_window")
    return SuccessOutcome(panel.author_id, metric, value, reference_median,
                          int(value > reference_median), flags)


def write_deltas(rows: Iterable[tuple[EnvironmentDelta | None, str, list[str]]], path) -> None:
    """Rows are ``(delta_or_None, author_key, flags)``; excluded authors keep blank values."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["author_id", "d_a", "d_i", "d_c", "d_size", "flags"])
        for d, key, flags in rows:
            if d is None:
                w.writerow([key, "", "", "", "", ";".join(flags)])
            else:
                w.writerow([key, repr(d.d_a), repr(d.d_i), repr(d.d_c), repr(d.d_size),
                            ";".join(d.flags + flags)])


def write_outcomes(rows: Iterable[tuple[str, SuccessOutcome]], path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["author_id", "metric", "value", "median", "label", "flags"])
        for key, o in rows:
            w.writerow([key, o.metric, o.value, repr(o.median), o.label, ";".join(o.flags)])
