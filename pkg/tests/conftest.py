import json
from pathlib import Path

import pytest

from talentmob.corpus import AuthorYearPanel
from talentmob.pipeline import load_config, run_pipeline
from talentmob.synthgen import SynthConfig, simulate


def make_panel(author_id, pubs, cites=None, countries=None, discipline="D", **sets):
    """Panel from plain year maps; sets default to empty per publication year."""
    cites = cites or {}
    years = sorted(pubs)
    return AuthorYearPanel(
        author_id=author_id,
        y0=years[0],
        discipline=discipline,
        pubs_by_year=dict(pubs),
        cites_by_year={y: n for y, n in cites.items() if n},
        collaborators_by_year=sets.get("collaborators", {}),
        institutions_by_year=sets.get("institutions", {}),
        collab_institutions_by_year=sets.get("collab_institutions", {}),
        topics_by_year=sets.get("topics", {}),
        teamsizes_by_year=sets.get("teamsizes", {}),
        country_by_year={y: set(c) for y, c in (countries or {}).items()},
    )


def flat_line(pid, year, authors, topics=(), refs=()):
    """``authors`` is a list of (author_id, [(inst_id, country), ...])."""
    return json.dumps({
        "id": pid,
        "year": year,
        "authors": [{"id": a, "institutions": [{"id": i, "country": c} for i, c in insts]}
                    for a, insts in authors],
        "topics": [{"id": t, "level": lvl} for t, lvl in topics],
        "references": list(refs),
    })


@pytest.fixture
def panel_factory():
    return make_panel


@pytest.fixture(scope="session")
def demo_run(tmp_path_factory):
    """The bundled 200-author corpus, simulated and run once per session."""
    root = tmp_path_factory.mktemp("demo")
    from talentmob.cli import demo_synth_config

    paths = simulate(SynthConfig.from_dict(demo_synth_config()), root / "data")
    cfg = load_config(paths["config"])
    manifest = run_pipeline(cfg, root / "run")
    return {"root": root, "paths": paths, "run": root / "run", "manifest": manifest, "config": cfg}
