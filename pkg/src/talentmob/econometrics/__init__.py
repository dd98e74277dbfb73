from talentmob.econometrics.did import (
    DegenerateFitError,
    DIDEstimate,
    EventStudyEstimate,
    event_study,
    fe_wls,
    twfe_did,
)
from talentmob.econometrics.logit import (
    LogitDesignRow,
    LogitEstimate,
    SeparationError,
    logit_fit,
    margins,
)
from talentmob.econometrics.panel import PanelObservation, build_did_panel

__all__ = [
    "DegenerateFitError", "DIDEstimate", "EventStudyEstimate", "event_study", "fe_wls",
    "twfe_did", "LogitDesignRow", "LogitEstimate", "SeparationError", "logit_fit", "margins",
    "PanelObservation", "build_did_panel",
]
