from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import make_panel
from talentmob.mobility import (
    MOVER,
    STAYER,
    TALENT,
    assign_groups,
    detect_move,
    read_labels,
    read_roster,
    write_labels,
)


def countries_panel(aid, by_year):
    return make_panel(aid, {y: 1 for y in by_year}, countries=by_year)


def years(cs, start, end):
    return {y: cs for y in range(start, end + 1)}


def test_five_year_run_then_move():
    p = countries_panel("a", {**years({"US"}, 2005, 2009), **years({"CN"}, 2010, 2014)})
    ev = detect_move(p)
    assert (ev.y_w, ev.origin_country, ev.destination_country) == (2010, "US", "CN")


def test_two_year_run_is_not_a_move():
    p = countries_panel("a", {2008: {"US"}, 2009: {"US"}, 2010: {"CN"}})
    assert detect_move(p) is None


def test_three_year_run_is_enough():
    p = countries_panel("a", {2007: {"US"}, 2008: {"US"}, 2009: {"US"}, 2010: {"CN"}})
    assert detect_move(p).y_w == 2010


def test_destination_only_author():
    p = countries_panel("a", years({"CN"}, 2005, 2012))
    assert detect_move(p) is None


def test_single_silent_year_is_tolerated():
    p = countries_panel("a", {2005: {"US"}, 2007: {"US"}, 2008: {"US"}, 2009: {"CN"}})
    assert detect_move(p).y_w == 2009
    # the silent year may also sit between the run and the move
    p = countries_panel("a", {2005: {"US"}, 2006: {"US"}, 2007: {"US"}, 2009: {"CN"}})
    assert detect_move(p).y_w == 2009


def test_two_silent_years_break_the_run():
    p = countries_panel("a", {2004: {"US"}, 2005: {"US"}, 2008: {"US"}, 2009: {"CN"}})
    assert detect_move(p) is None


def test_mixed_year_counts_as_destination():
    p = countries_panel("a", {**years({"US"}, 2005, 2008), 2009: {"US", "CN"}})
    assert detect_move(p).y_w == 2009
    # ... and ends a run that is too short
    p = countries_panel("a", {2006: {"US"}, 2007: {"US"}, 2008: {"US", "CN"}})
    assert detect_move(p) is None


def test_origin_is_modal_with_lexicographic_tie():
    p = countries_panel("a", {2005: {"US"}, 2006: {"DE"}, 2007: {"US"}, 2008: {"DE"}, 2009: {"CN"}})
    assert detect_move(p).origin_country == "DE"
    p = countries_panel("a", {2005: {"US"}, 2006: {"US"}, 2007: {"DE"}, 2008: {"CN"}})
    assert detect_move(p).origin_country == "US"


def test_earliest_event_is_returned():
    by = {**years({"US"}, 2002, 2004), **years({"CN"}, 2005, 2006), **years({"DE"}, 2007, 2010), 2011: {"CN"}}
    assert detect_move(countries_panel("a", by)).y_w == 2005


def test_destination_is_configurable():
    p = countries_panel("a", {**years({"US"}, 2005, 2008), 2009: {"DE"}})
    assert detect_move(p) is None
    assert detect_move(p, destination="DE").y_w == 2009


@settings(max_examples=200, deadline=None)
@given(
    st.dictionaries(st.integers(2000, 2015), st.sets(st.sampled_from(["US", "DE", "CN"]), min_size=1, max_size=2),
                    min_size=1, max_size=16),
    st.lists(st.sets(st.sampled_from(["US", "DE", "CN", "JP"]), min_size=1, max_size=2), max_size=5),
)
def test_appending_post_move_years_is_harmless(by_year, tail):
    p = countries_panel("a", by_year)
    ev = detect_move(p)
    if ev is None:
        return
    extended = dict(by_year)
    for k, cs in enumerate(tail):
        extended[2016 + k] = cs
    ev2 = detect_move(countries_panel("a", extended))
    assert ev2 == ev


def _world():
    return {
        "talent": countries_panel("talent", {**years({"US"}, 2005, 2011), **years({"CN"}, 2012, 2016)}),
        "mover": countries_panel("mover", {**years({"DE"}, 2008, 2013), **years({"CN"}, 2014, 2018)}),
        "stayer": countries_panel("stayer", years({"US"}, 2005, 2018)),
        "wanderer": countries_panel("wanderer", {**years({"US"}, 2005, 2009), **years({"DE"}, 2010, 2014)}),
        "late": countries_panel("late", {**years({"US"}, 2003, 2009), **years({"CN"}, 2010, 2016)}),
        "nonmover": countries_panel("nonmover", years({"CN"}, 2005, 2015)),
    }


def test_group_assignment_rules():
    roster = {"talent": 2012, "late": 2015, "nonmover": 2012, "ghost": 2013}
    labels, audit = assign_groups(_world(), roster)
    got = {l.author_id: (l.group, l.y_w) for l in labels}
    assert got == {
        "talent": (TALENT, 2012),
        "mover": (MOVER, 2014),
        "stayer": (STAYER, None),
    }
    flags = {a.author_id: a.audit_flags for a in audit}
    assert flags == {
        "ghost": ["roster_missing"],
        "late": ["cohort_conflict:2015"],
        "nonmover": ["roster_not_mover"],
    }


def test_cohort_claim_recorded_when_close():
    labels, _ = assign_groups(_world(), {"talent": 2013})
    (t,) = [l for l in labels if l.group == TALENT]
    assert t.y_w == 2012 and t.audit_flags == ["cohort_claimed:2013"]


def test_groups_are_disjoint():
    labels, _ = assign_groups(_world(), {"talent": 2012})
    ids = [l.author_id for l in labels]
    assert len(ids) == len(set(ids))


def test_label_and_roster_io(tmp_path):
    (tmp_path / "roster.csv").write_text("author_id,cohort_year\ntalent,2012\n")
    roster = read_roster(tmp_path / "roster.csv")
    assert roster == {"talent": 2012}
    labels, audit = assign_groups(_world(), roster)
    write_labels(labels + audit, tmp_path / "labels.csv")
    back = read_labels(tmp_path / "labels.csv")
    assert sorted((l.author_id, l.group, l.y_w, l.origin) for l in back) == sorted(
        (l.author_id, l.group, l.y_w, l.origin) for l in labels + audit)
    header = (tmp_path / "labels.csv").read_text().splitlines()[0]
    assert header == "author_id,group,y_w,origin,audit_flags"
