"""Exhaustive check of summary tables against direct enumeration.

A deterministic synthetic dataset (2 models x 3 methods x 25 records, with
the 6/10/9 advanced/medium/basic difficulty split per group) is summarized
by the production code, and every cell is recomputed here by plain counting.
"""

import random
from fractions import Fraction

import pytest

from conftest import dataset_of, make_record
from diagrambench.model import Difficulty, HallucinationTags, Method, StepHallucinationRecord
from diagrambench.stats import quartiles, summarize_dataset
from oracles import quartiles_oracle

MODELS = ("gpt-4.1", "o3")
METHODS = (Method.RST1, Method.RST2, Method.ZERO_SHOT)
TIERS = [Difficulty.ADVANCED] * 6 + [Difficulty.MEDIUM] * 10 + [Difficulty.BASIC] * 9
FAITH_TAGS = ("h_ae", "h_c", "h_log")
ALL_TAGS = ("h_fact", "h_ae", "h_c", "h_log")


def build_dataset():
    rng = random.Random(42)
    records = []
    for model in MODELS:
        for method in METHODS:
            for k, difficulty in enumerate(TIERS):
                diagram_id = f"{model}-{method.value}-{k:02d}"
                tags = HallucinationTags(
                    h_fact=rng.random() < 0.15,
                    h_ae=rng.random() < 0.25,
                    h_c=rng.random() < 0.2,
                    h_log=rng.random() < 0.1,
                )
                if method is Method.ZERO_SHOT:
                    step = StepHallucinationRecord(run_id=diagram_id, h6=rng.random() < 0.2)
                elif rng.random() < 0.8:
                    step = StepHallucinationRecord(
                        run_id=diagram_id,
                        h1=rng.random() < 0.3,
                        h2=rng.random() < 0.2,
                        h6=rng.random() < 0.2,
                        h_inh=rng.random() < 0.25,
                    )
                else:
                    step = None  # step audit skipped for this diagram
                records.append(
                    make_record(
                        diagram_id,
                        c1=rng.randint(1, 5),
                        c2=rng.randint(1, 5),
                        c3=rng.randint(1, 5),
                        difficulty=difficulty,
                        method=method,
                        model=model,
                        hallucination=tags,
                        step=step,
                    )
                )
    return dataset_of(*records)


DATASET = build_dataset()
TABLES = summarize_dataset(DATASET)


def members(model, method):
    return [r for r in DATASET.records if r.model == model and r.method is method]


def high_quality(record):
    return record.c1 > 3 and record.c2 > 3 and record.c3 > 3


class TestShape:
    def test_counts(self):
        assert TABLES.n_records == 150
        assert len(TABLES.groups) == 6
        assert {(g.model, g.method) for g in TABLES.groups} == {
            (model, method.value) for model in MODELS for method in METHODS
        }
        assert all(g.n == 25 for g in TABLES.groups)

    def test_difficulty_split_per_group(self):
        for model in MODELS:
            for method in METHODS:
                tiers = [r.difficulty for r in members(model, method)]
                assert tiers.count(Difficulty.ADVANCED) == 6
                assert tiers.count(Difficulty.MEDIUM) == 10
                assert tiers.count(Difficulty.BASIC) == 9


class TestGroupCells:
    @pytest.mark.parametrize("model", MODELS)
    @pytest.mark.parametrize("method", METHODS)
    def test_distributions_modes_quartiles(self, model, method):
        group = TABLES.group(model, method.value)
        recs = members(model, method)
        for criterion in ("c1", "c2", "c3"):
            scores = [getattr(r, criterion) for r in recs]
            cell = group.criteria[criterion]
            for s in range(1, 6):
                assert cell.distribution[s] == Fraction(scores.count(s), 25)
            assert sum(cell.distribution.values()) == Fraction(1)
            top = max(scores.count(s) for s in range(1, 6))
            assert cell.modes == tuple(
                s for s in range(1, 6) if scores.count(s) == top
            )
            assert cell.quartiles == pytest.approx(quartiles_oracle(scores), abs=1e-12)

    @pytest.mark.parametrize("model", MODELS)
    @pytest.mark.parametrize("method", METHODS)
    def test_g_by_difficulty(self, model, method):
        group = TABLES.group(model, method.value)
        recs = members(model, method)
        for criterion in ("c1", "c2", "c3"):
            for difficulty in Difficulty:
                tier = [r for r in recs if r.difficulty is difficulty]
                expected = Fraction(
                    sum(1 for r in tier if getattr(r, criterion) > 3), len(tier)
                )
                assert group.criteria[criterion].g_by_difficulty[difficulty.value] == expected

    @pytest.mark.parametrize("model", MODELS)
    @pytest.mark.parametrize("method", METHODS)
    def test_hallucination_free_ratios(self, model, method):
        group = TABLES.group(model, method.value)
        recs = members(model, method)
        for tag in ALL_TAGS:
            expected = Fraction(
                sum(1 for r in recs if not getattr(r.hallucination, tag)), 25
            )
            assert group.hallucination_free[tag] == expected

    @pytest.mark.parametrize("model", MODELS)
    @pytest.mark.parametrize("method", METHODS)
    def test_g_r(self, model, method):
        group = TABLES.group(model, method.value)
        recs = members(model, method)
        expected = Fraction(
            sum(1 for r in recs if high_quality(r) and not r.hallucination.any_present()),
            25,
        )
        assert group.g_r == expected

    @pytest.mark.parametrize("model", MODELS)
    @pytest.mark.parametrize("method", METHODS)
    def test_step_ratios(self, model, method):
        group = TABLES.group(model, method.value)
        recs = members(model, method)

        def ratio(attr, only_high_quality=False):
            pool = [
                r for r in recs
                if (not only_high_quality or high_quality(r))
                and r.step_hallucination is not None
                and getattr(r.step_hallucination, attr) is not None
            ]
            if not pool:
                return None
            return Fraction(
                sum(1 for r in pool if not getattr(r.step_hallucination, attr)), len(pool)
            )

        assert group.h6_free == ratio("h6")
        assert group.g6 == ratio("h6", only_high_quality=True)
        assert group.h_inh_free == ratio("h_inh")
        assert group.g_inh == ratio("h_inh", only_high_quality=True)

    def test_zero_shot_has_no_inherited_step_ratio(self):
        for model in MODELS:
            group = TABLES.group(model, Method.ZERO_SHOT.value)
            assert group.h_inh_free is None
            assert group.g_inh is None
            assert group.h6_free is not None


class TestModelSteps:
    @pytest.mark.parametrize("model", MODELS)
    @pytest.mark.parametrize("attr", ["h1", "h2"])
    def test_analysis_step_ratios(self, model, attr):
        summary = next(s for s in TABLES.model_steps if s.model == model)
        pool = [
            r for r in DATASET.records
            if r.model == model
            and r.step_hallucination is not None
            and getattr(r.step_hallucination, attr) is not None
        ]
        expected = Fraction(
            sum(1 for r in pool if not getattr(r.step_hallucination, attr)), len(pool)
        )
        assert getattr(summary, f"{attr}_free") == expected


class TestFigures:
    def test_faithfulness_by_score(self):
        for criterion in ("c1", "c2", "c3"):
            for score in range(1, 6):
                bucket = [r for r in DATASET.records if getattr(r, criterion) == score]
                cell = TABLES.figures.faithfulness_by_score[criterion][score]
                for tag in FAITH_TAGS:
                    assert cell[tag] == sum(
                        1 for r in bucket if getattr(r.hallucination, tag)
                    )

    def test_free_by_difficulty(self):
        for difficulty in Difficulty:
            tier = [r for r in DATASET.records if r.difficulty is difficulty]
            for tag in ALL_TAGS:
                expected = Fraction(
                    sum(1 for r in tier if not getattr(r.hallucination, tag)), len(tier)
                )
                assert TABLES.figures.free_by_difficulty[difficulty.value][tag] == expected

    def test_type_count_by_difficulty(self):
        for difficulty in Difficulty:
            tier = [r for r in DATASET.records if r.difficulty is difficulty]
            hist = TABLES.figures.type_count_by_difficulty[difficulty.value]
            assert sum(hist.values()) == len(tier)
            for count in range(4):
                expected = sum(
                    1 for r in tier
                    if sum(1 for tag in FAITH_TAGS if getattr(r.hallucination, tag)) == count
                )
                assert hist[count] == expected


class TestReportedPrecision:
    def test_ratio_spot_checks_at_two_decimals(self):
        assert round(float(Fraction(5, 6)), 2) == 0.83
        assert round(float(Fraction(24, 25)), 2) == 0.96
        assert round(float(Fraction(9, 10)), 2) == 0.9
        assert round(float(Fraction(8, 9)), 2) == 0.89

    def test_to_dict_is_json_ready(self):
        import json

        payload = TABLES.to_dict()
        text = json.dumps(payload)
        assert '"n_records": 150' in text
        group = payload["groups"][0]
        assert isinstance(group["criteria"]["c1"]["distribution"]["4"], float)
        total = sum(group["criteria"]["c1"]["distribution"].values())
        assert total == pytest.approx(1.0, abs=1e-12)

    def test_published_style_distribution_reproduces_quartiles(self):
        # A 25-diagram score column with shares 0.08/0.04/0.44/0.44 over
        # {2,3,4,5} has quartiles (4, 4, 5) and tied modes {4, 5}.
        scores = [2] * 2 + [3] * 1 + [4] * 11 + [5] * 11
        recs = [
            make_record(f"d{i}", c1=s, c2=s, c3=s)
            for i, s in enumerate(scores)
        ]
        tables = summarize_dataset(dataset_of(*recs))
        cell = tables.group("o3", "rst1").criteria["c1"]
        assert cell.quartiles == (4.0, 4.0, 5.0)
        assert cell.modes == (4, 5)
        assert cell.distribution[4] == Fraction(11, 25)
        assert cell.distribution[2] == Fraction(2, 25)
