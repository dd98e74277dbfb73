"""Significance stars and coefficient cell formatting shared by the output tables."""

from __future__ import annotations

import math


def stars(p: float | None) -> str:
    if p is None or not math.isfinite(p):
        return ""
    if p < 0.001:
        return "***"
    if p < 0.01:
        return "**"
    if p < 0.05:
        return "*"
    return ""


def coef_cell(beta: float | None, se: float | None, p: float | None, digits: int = 4) -> str:
    """Format like ``0.9028*** (0.2033)``; blank when the estimate is missing."""
    if beta is None or se is None or not math.isfinite(beta):
        return ""
    return f"{beta:.{digits}f}{stars(p)} ({se:.{digits}f})"
