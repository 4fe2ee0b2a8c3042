"""Inter-rater reliability estimators and dataset summary tables.

Krippendorff's alpha uses the coincidence-matrix formulation with the
ordinal difference metric (rank distances depend on the observed marginal
distribution), tolerating missing cells.  Kendall's W uses mid-ranks with
the tie correction.  Summary tables are computed in exact rational
arithmetic and only converted to floats at the export boundary.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Optional, Sequence

import numpy as np
from scipy.stats import chi2 as _chi2
from scipy.stats import rankdata as _rankdata

from .model import Difficulty, EvaluationDataset, EvaluationRecord

CRITERIA = ("c1", "c2", "c3")
DEFAULT_BOOTSTRAP_RESAMPLES = 1000
DEFAULT_SEED = 20240901
DEFAULT_CONFIDENCE = 0.95


class DegenerateRatingsError(ValueError):
    """The ratings carry no variance usable by the estimator."""


@dataclass(frozen=True)
class RatingsMatrix:
    """Units x raters grid of optional scores; None marks a missing rating."""

    values: tuple[tuple[Optional[int], ...], ...]

    def __post_init__(self):
        rows = tuple(tuple(row) for row in self.values)
        object.__setattr__(self, "values", rows)
        if not rows:
            raise ValueError("ratings matrix has no units")
        widths = {len(row) for row in rows}
        if len(widths) != 1:
            raise ValueError("ragged ratings matrix")
        if self.n_raters < 2:
            raise ValueError("ratings matrix needs at least 2 raters")
        if not self.pairable_units():
            raise ValueError("no unit carries 2 or more ratings")

    @property
    def n_units(self) -> int:
        return len(self.values)

    @property
    def n_raters(self) -> int:
        return len(self.values[0])

    def pairable_units(self) -> list[list[int]]:
        units = []
        for row in self.values:
            present = [v for v in row if v is not None]
            if len(present) >= 2:
                units.append(present)
        return units

    @property
    def complete(self) -> bool:
        return all(all(v is not None for v in row) for row in self.values)


@dataclass(frozen=True)
class AlphaEstimate:
    alpha: float
    ci_low: float
    ci_high: float
    n_units: int
    n_raters: int
    resamples: int


@dataclass(frozen=True)
class WEstimate:
    w: float
    p_value: float
    chi2: float
    n_units: int
    n_raters: int


@dataclass(frozen=True)
class ReliabilityEstimate:
    alpha_hat: float
    ci_low: float
    ci_high: float
    w: float
    p_value: float
    n_units: int
    n_raters: int

    def to_dict(self) -> dict:
        return {
            "alpha_hat": self.alpha_hat,
            "ci_low": self.ci_low,
            "ci_high": self.ci_high,
            "w": self.w,
            "p_value": self.p_value,
            "n_units": self.n_units,
            "n_raters": self.n_raters,
        }


def _unit_category_counts(units: Sequence[Sequence[int]]) -> tuple[np.ndarray, np.ndarray]:
    """Per-unit counts of each category; returns (counts UxC, sorted categories)."""
    categories = np.array(sorted({v for unit in units for v in unit}))
    index = {c: i for i, c in enumerate(categories)}
    counts = np.zeros((len(units), len(categories)))
    for u, unit in enumerate(units):
        for v in unit:
            counts[u, index[v]] += 1
    return counts, categories


def _ordinal_delta_sq(marginals: np.ndarray) -> np.ndarray:
    """delta^2(c,k) = (sum of marginals from c..k - (n_c+n_k)/2)^2."""
    cumulative = np.cumsum(marginals)
    c_idx = np.arange(len(marginals))
    lo = np.minimum.outer(c_idx, c_idx)
    hi = np.maximum.outer(c_idx, c_idx)
    between = cumulative[hi] - cumulative[lo] + marginals[lo]
    pair_half = (marginals[:, None] + marginals[None, :]) / 2.0
    return (between - pair_half) ** 2


def _alpha_from_counts(counts: np.ndarray) -> float:
    m_u = counts.sum(axis=1)
    usable = counts[m_u >= 2]
    m_u = m_u[m_u >= 2]
    if usable.size == 0:
        raise DegenerateRatingsError("no pairable units")
    weights = 1.0 / (m_u - 1.0)
    coincidence = np.einsum("u,uc,uk->ck", weights, usable, usable)
    coincidence -= np.diag((usable * weights[:, None]).sum(axis=0))
    marginals = coincidence.sum(axis=1)
    n = marginals.sum()
    delta_sq = _ordinal_delta_sq(marginals)
    d_observed = float((coincidence * delta_sq).sum())
    d_expected = float((np.outer(marginals, marginals) * delta_sq).sum())
    if d_expected == 0.0:
        return 1.0
    return 1.0 - (n - 1.0) * d_observed / d_expected


def krippendorff_alpha_ordinal(
    matrix: RatingsMatrix,
    *,
    bootstrap_resamples: int = DEFAULT_BOOTSTRAP_RESAMPLES,
    seed: int = DEFAULT_SEED,
    confidence: float = DEFAULT_CONFIDENCE,
) -> AlphaEstimate:
    """Point estimate plus a nonparametric bootstrap CI over units."""
    units = matrix.pairable_units()
    counts, _ = _unit_category_counts(units)
    alpha = _alpha_from_counts(counts)

    if bootstrap_resamples <= 0:
        return AlphaEstimate(alpha, alpha, alpha, matrix.n_units, matrix.n_raters, 0)

    rng = np.random.default_rng(seed)
    n_units = len(units)
    draws = rng.integers(0, n_units, size=(bootstrap_resamples, n_units))
    samples = np.empty(bootstrap_resamples)
    for i, idx in enumerate(draws):
        resampled = counts[idx]
        try:
            samples[i] = _alpha_from_counts(resampled)
        except DegenerateRatingsError:
            samples[i] = 1.0
    tail = (1.0 - confidence) / 2.0
    ci_low, ci_high = np.quantile(samples, [tail, 1.0 - tail])
    return AlphaEstimate(
        alpha=alpha,
        ci_low=float(ci_low),
        ci_high=float(ci_high),
        n_units=matrix.n_units,
        n_raters=matrix.n_raters,
        resamples=bootstrap_resamples,
    )


def kendall_w(matrix: RatingsMatrix) -> WEstimate:
    """Tie-corrected coefficient of concordance with chi-square p-value."""
    if not matrix.complete:
        raise ValueError("Kendall's W needs a complete matrix (no missing ratings)")
    grid = np.array(matrix.values, dtype=float)
    n, m = grid.shape
    if n < 2:
        raise DegenerateRatingsError("W needs at least 2 units to rank")
    ranks = np.column_stack([_rankdata(grid[:, r]) for r in range(m)])
    totals = ranks.sum(axis=1)
    s = float(((totals - totals.mean()) ** 2).sum())
    tie_term = 0.0
    for r in range(m):
        _, tie_counts = np.unique(grid[:, r], return_counts=True)
        tie_term += float((tie_counts**3 - tie_counts).sum())
    denominator = m * m * (n**3 - n) - m * tie_term
    if denominator <= 0:
        raise DegenerateRatingsError("all ratings tied; W undefined")
    w = 12.0 * s / denominator
    chi_sq = m * (n - 1) * w
    p_value = float(_chi2.sf(chi_sq, n - 1))
    return WEstimate(w=w, p_value=p_value, chi2=chi_sq, n_units=n, n_raters=m)


def quartiles(scores: Sequence[int]) -> tuple[float, float, float]:
    """(Q1, median, Q3) with inclusive linear interpolation."""
    if not scores:
        raise ValueError("quartiles of an empty score list")
    q1, q2, q3 = np.percentile(np.asarray(scores, dtype=float), [25, 50, 75])
    return float(q1), float(q2), float(q3)


# --- matrices out of annotated datasets ---


def alpha_matrix(dataset: EvaluationDataset, criterion: str) -> RatingsMatrix:
    """Units x full-rater-pool matrix of one criterion's human scores."""
    if criterion not in CRITERIA:
        raise ValueError(f"unknown criterion {criterion!r}")
    raters = sorted({a.rater_id for r in dataset.records for a in r.annotations})
    if len(raters) < 2:
        raise DegenerateRatingsError("dataset has fewer than 2 raters")
    rows = []
    for record in dataset.records:
        by_rater = {a.rater_id: getattr(a, criterion) for a in record.annotations}
        rows.append(tuple(by_rater.get(rater) for rater in raters))
    return RatingsMatrix(values=tuple(rows))


def w_matrix(dataset: EvaluationDataset, criterion: str, slots: int = 2) -> RatingsMatrix:
    """Complete units x rater-slot matrix: raters collapse into per-unit slots.

    W needs a complete grid while the study rotates raters, so each unit's
    raters are ordered by rater id and fill fixed slots.  Units without
    exactly ``slots`` annotations are dropped.
    """
    if criterion not in CRITERIA:
        raise ValueError(f"unknown criterion {criterion!r}")
    rows = []
    for record in dataset.records:
        annotations = sorted(record.annotations, key=lambda a: a.rater_id)
        if len(annotations) == slots:
            rows.append(tuple(getattr(a, criterion) for a in annotations))
    if not rows:
        raise DegenerateRatingsError(f"no unit carries exactly {slots} annotations")
    return RatingsMatrix(values=tuple(rows))


def irr_per_criterion(
    dataset: EvaluationDataset,
    *,
    bootstrap_resamples: int = DEFAULT_BOOTSTRAP_RESAMPLES,
    seed: int = DEFAULT_SEED,
) -> dict[str, ReliabilityEstimate]:
    """Alpha and W for each criterion over the human annotations."""
    estimates = {}
    for criterion in CRITERIA:
        alpha_est = krippendorff_alpha_ordinal(
            alpha_matrix(dataset, criterion),
            bootstrap_resamples=bootstrap_resamples,
            seed=seed,
        )
        w_est = kendall_w(w_matrix(dataset, criterion))
        estimates[criterion] = ReliabilityEstimate(
            alpha_hat=alpha_est.alpha,
            ci_low=alpha_est.ci_low,
            ci_high=alpha_est.ci_high,
            w=w_est.w,
            p_value=w_est.p_value,
            n_units=alpha_est.n_units,
            n_raters=alpha_est.n_raters,
        )
    return estimates


# --- summary tables ---

FAITHFULNESS_TAGS = ("h_ae", "h_c", "h_log")
ALL_TAGS = ("h_fact", "h_ae", "h_c", "h_log")
SCORES = (1, 2, 3, 4, 5)


def _fraction(num: int, den: int) -> Fraction:
    return Fraction(num, den)


@dataclass(frozen=True)
class CriterionSummary:
    distribution: dict[int, Fraction]
    modes: tuple[int, ...]
    quartiles: tuple[float, float, float]
    g_by_difficulty: dict[str, Optional[Fraction]]


@dataclass(frozen=True)
class GroupSummary:
    """One (model, method) stratum of the evaluation dataset."""

    model: str
    method: str
    n: int
    criteria: dict[str, CriterionSummary]
    hallucination_free: dict[str, Fraction]
    g_r: Fraction
    h6_free: Optional[Fraction]
    g6: Optional[Fraction]
    h_inh_free: Optional[Fraction]
    g_inh: Optional[Fraction]


@dataclass(frozen=True)
class ModelStepSummary:
    model: str
    h1_free: Optional[Fraction]
    h2_free: Optional[Fraction]


@dataclass(frozen=True)
class FigureSeries:
    """Counts and ratios behind the three figure families."""

    faithfulness_by_score: dict[str, dict[int, dict[str, int]]]
    free_by_difficulty: dict[str, dict[str, Fraction]]
    type_count_by_difficulty: dict[str, dict[int, int]]


@dataclass(frozen=True)
class SummaryTables:
    groups: tuple[GroupSummary, ...]
    model_steps: tuple[ModelStepSummary, ...]
    figures: FigureSeries
    n_records: int

    def group(self, model: str, method: str) -> GroupSummary:
        for g in self.groups:
            if g.model == model and g.method == method:
                return g
        raise KeyError(f"no group for model={model!r} method={method!r}")

    def to_dict(self) -> dict:
        def frac(value):
            return None if value is None else float(value)

        return {
            "n_records": self.n_records,
            "groups": [
                {
                    "model": g.model,
                    "method": g.method,
                    "n": g.n,
                    "criteria": {
                        name: {
                            "distribution": {str(s): frac(p) for s, p in c.distribution.items()},
                            "modes": list(c.modes),
                            "quartiles": list(c.quartiles),
                            "g_by_difficulty": {d: frac(v) for d, v in c.g_by_difficulty.items()},
                        }
                        for name, c in g.criteria.items()
                    },
                    "hallucination_free": {t: frac(v) for t, v in g.hallucination_free.items()},
                    "g_r": frac(g.g_r),
                    "h6_free": frac(g.h6_free),
                    "g6": frac(g.g6),
                    "h_inh_free": frac(g.h_inh_free),
                    "g_inh": frac(g.g_inh),
                }
                for g in self.groups
            ],
            "model_steps": [
                {"model": s.model, "h1_free": frac(s.h1_free), "h2_free": frac(s.h2_free)}
                for s in self.model_steps
            ],
            "figures": {
                "faithfulness_by_score": {
                    crit: {str(score): dict(tags) for score, tags in by_score.items()}
                    for crit, by_score in self.figures.faithfulness_by_score.items()
                },
                "free_by_difficulty": {
                    diff: {t: frac(v) for t, v in tags.items()}
                    for diff, tags in self.figures.free_by_difficulty.items()
                },
                "type_count_by_difficulty": {
                    diff: {str(k): v for k, v in hist.items()}
                    for diff, hist in self.figures.type_count_by_difficulty.items()
                },
            },
        }


def _high_quality(record: EvaluationRecord) -> bool:
    return record.c1 > 3 and record.c2 > 3 and record.c3 > 3


def _hallucination_free(record: EvaluationRecord) -> bool:
    return not record.hallucination.any_present()


def _free_ratio(records: list[EvaluationRecord], tag: str) -> Fraction:
    free = sum(1 for r in records if not getattr(r.hallucination, tag))
    return _fraction(free, len(records))


def _step_free_ratio(records: list[EvaluationRecord], attr: str) -> Optional[Fraction]:
    marked = [
        r for r in records
        if r.step_hallucination is not None and getattr(r.step_hallucination, attr) is not None
    ]
    if not marked:
        return None
    free = sum(1 for r in marked if not getattr(r.step_hallucination, attr))
    return _fraction(free, len(marked))


def _step_free_among_high_quality(records: list[EvaluationRecord], attr: str) -> Optional[Fraction]:
    marked = [
        r for r in records
        if _high_quality(r)
        and r.step_hallucination is not None
        and getattr(r.step_hallucination, attr) is not None
    ]
    if not marked:
        return None
    free = sum(1 for r in marked if not getattr(r.step_hallucination, attr))
    return _fraction(free, len(marked))


def _criterion_summary(records: list[EvaluationRecord], criterion: str) -> CriterionSummary:
    scores = [getattr(r, criterion) for r in records]
    n = len(scores)
    distribution = {s: _fraction(scores.count(s), n) for s in SCORES}
    top = max(distribution.values())
    modes = tuple(s for s in SCORES if distribution[s] == top)
    g_by_difficulty: dict[str, Optional[Fraction]] = {}
    for difficulty in Difficulty:
        tier = [r for r in records if r.difficulty is difficulty]
        if tier:
            above = sum(1 for r in tier if getattr(r, criterion) > 3)
            g_by_difficulty[difficulty.value] = _fraction(above, len(tier))
        else:
            g_by_difficulty[difficulty.value] = None
    return CriterionSummary(
        distribution=distribution,
        modes=modes,
        quartiles=quartiles(scores),
        g_by_difficulty=g_by_difficulty,
    )


def summarize_dataset(dataset: EvaluationDataset) -> SummaryTables:
    records = list(dataset.records)
    if not records:
        raise ValueError("cannot summarize an empty dataset")

    groups = []
    keys = sorted({(r.model, r.method.value) for r in records})
    for model, method in keys:
        members = [r for r in records if r.model == model and r.method.value == method]
        n = len(members)
        criteria = {c: _criterion_summary(members, c) for c in CRITERIA}
        hallucination_free = {tag: _free_ratio(members, tag) for tag in ALL_TAGS}
        g_r_count = sum(1 for r in members if _high_quality(r) and _hallucination_free(r))
        groups.append(
            GroupSummary(
                model=model,
                method=method,
                n=n,
                criteria=criteria,
                hallucination_free=hallucination_free,
                g_r=_fraction(g_r_count, n),
                h6_free=_step_free_ratio(members, "h6"),
                g6=_step_free_among_high_quality(members, "h6"),
                h_inh_free=_step_free_ratio(members, "h_inh"),
                g_inh=_step_free_among_high_quality(members, "h_inh"),
            )
        )

    model_steps = []
    for model in sorted({r.model for r in records}):
        members = [r for r in records if r.model == model]
        model_steps.append(
            ModelStepSummary(
                model=model,
                h1_free=_step_free_ratio(members, "h1"),
                h2_free=_step_free_ratio(members, "h2"),
            )
        )

    faithfulness_by_score: dict[str, dict[int, dict[str, int]]] = {}
    for criterion in CRITERIA:
        by_score: dict[int, dict[str, int]] = {}
        for score in SCORES:
            bucket = [r for r in records if getattr(r, criterion) == score]
            by_score[score] = {
                tag: sum(1 for r in bucket if getattr(r.hallucination, tag))
                for tag in FAITHFULNESS_TAGS
            }
        faithfulness_by_score[criterion] = by_score

    free_by_difficulty: dict[str, dict[str, Fraction]] = {}
    type_count_by_difficulty: dict[str, dict[int, int]] = {}
    for difficulty in Difficulty:
        tier = [r for r in records if r.difficulty is difficulty]
        if not tier:
            continue
        free_by_difficulty[difficulty.value] = {
            tag: _free_ratio(tier, tag) for tag in ALL_TAGS
        }
        histogram = {k: 0 for k in range(len(FAITHFULNESS_TAGS) + 1)}
        for r in tier:
            present = sum(1 for tag in FAITHFULNESS_TAGS if getattr(r.hallucination, tag))
            histogram[present] += 1
        type_count_by_difficulty[difficulty.value] = histogram

    return SummaryTables(
        groups=tuple(groups),
        model_steps=tuple(model_steps),
        figures=FigureSeries(
            faithfulness_by_score=faithfulness_by_score,
            free_by_difficulty=free_by_difficulty,
            type_count_by_difficulty=type_count_by_difficulty,
        ),
        n_records=len(records),
    )
