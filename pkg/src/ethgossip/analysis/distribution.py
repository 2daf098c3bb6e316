"""Empirical pdf/cdf of a degree sample."""

from __future__ import annotations

from typing import Dict, List, Tuple

from ..errors import EstimatorError


def empirical_distribution(degrees) -> Tuple[Dict[float, float], "EmpiricalCdf"]:
    """Normalized histogram and right-continuous step cdf."""
    values = list(degrees)
    if not values:
        raise EstimatorError("empty input")
    n = len(values)
    pdf: Dict[float, float] = {}
    for v in values:
        pdf[v] = pdf.get(v, 0.0) + 1.0 / n
    xs = sorted(pdf)
    cum = 0.0
    steps: List[Tuple[float, float]] = []
    for x in xs:
        cum += pdf[x]
        steps.append((x, cum))
    # Guard against float drift: the cdf must end at exactly 1.
    steps[-1] = (steps[-1][0], 1.0)
    return pdf, EmpiricalCdf(steps)


class EmpiricalCdf:
    def __init__(self, steps: List[Tuple[float, float]]):
        self.steps = steps

    def __call__(self, x: float) -> float:
        out = 0.0
        for v, c in self.steps:
            if v <= x:
                out = c
            else:
                break
        return out

    def fraction_below(self, x: float) -> float:
        """P(value < x): fraction strictly below a threshold."""
        out = 0.0
        for v, c in self.steps:
            if v < x:
                out = c
            else:
                break
        return out
