"""Two-step matching: exact pre-filter, then SCM / CEM / DOM refining."""

from talentmob.matching.cem import CEMSolution, cem_match
from talentmob.matching.dom import DOMSolution, dom_distance, dom_match
from talentmob.matching.exact import CandidatePool, Tolerances, exact_match
from talentmob.matching.refine import MatchedEntry, MatchedSet, refine_cem, refine_dom, refine_scm
from talentmob.matching.scm import SCMWeights, scm_fit

__all__ = [
    "CEMSolution", "cem_match", "DOMSolution", "dom_distance", "dom_match",
    "CandidatePool", "Tolerances", "exact_match", "MatchedEntry", "MatchedSet",
    "refine_cem", "refine_dom", "refine_scm", "SCMWeights", "scm_fit",
]
