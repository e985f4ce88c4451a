"""Pool expansion from foreign survey evidence.

The Monte-Carlo exceedance probability is checked against a quadrature
integral of the two Beta posteriors.
"""

import json

import numpy as np
import pytest
from numpy.testing import assert_allclose
from scipy import integrate, stats

from slatebandit.core import NULL_ACTION_ID, ValidationError
from slatebandit.expansion import (
    VERDICT_ALREADY_PRESENT,
    VERDICT_BELOW_THRESHOLD,
    VERDICT_INSUFFICIENT_TRIALS,
    VERDICT_PROMOTED,
    ExpansionConfig,
    expand,
    prob_better,
    save_report,
)
from slatebandit.mab import ArmStats, ContextBank


def exceedance_oracle(cand_st, ref_st):
    """P(X > Y) for X ~ Beta(s+1, f+1) of cand, Y likewise of ref, by
    quadrature of f_X(x) * F_Y(x)."""
    ca, cb = cand_st[0] + 1.0, cand_st[1] - cand_st[0] + 1.0
    ra, rb = ref_st[0] + 1.0, ref_st[1] - ref_st[0] + 1.0
    val, _ = integrate.quad(
        lambda x: stats.beta.pdf(x, ca, cb) * stats.beta.cdf(x, ra, rb), 0, 1, limit=200
    )
    return val


def arm(successes, trials):
    a = ArmStats()
    a.add(0, float(successes), float(trials))
    return a


class TestProbBetter:
    def test_matches_quadrature_oracle(self):
        cases = [((8, 10), (2, 10)), ((5, 10), (5, 10)), ((1, 20), (10, 20)), ((3, 4), (0, 0))]
        rng = np.random.default_rng(0)
        for cand, ref in cases:
            got = prob_better(arm(*cand), arm(*ref), 400000, rng)
            want = exceedance_oracle(cand, ref)
            assert_allclose(got, want, atol=0.003)

    def test_symmetric_posteriors_split_evenly(self):
        got = prob_better(arm(5, 10), arm(5, 10), 200000, np.random.default_rng(1))
        assert_allclose(got, 0.5, atol=0.005)

    def test_draw_count_validated(self):
        with pytest.raises(ValidationError):
            prob_better(arm(1, 2), arm(1, 2), 0, np.random.default_rng(0))


class TestExpand:
    def bank(self, null_survey=(2, 10)):
        bank = ContextBank(context_id="ctx")
        bank.click_arm("existing").add(0, 3.0, 10.0)
        bank.survey_arm(NULL_ACTION_ID).add(0, float(null_survey[0]), float(null_survey[1]))
        return bank

    def config(self, **kw):
        defaults = dict(min_trials=10.0, false_positive_rate=0.05, mc_draws=100000)
        defaults.update(kw)
        return ExpansionConfig(**defaults)

    def test_credible_winner_is_promoted(self):
        bank = self.bank(null_survey=(2, 10))
        foreign = {"winner": arm(18, 20)}
        report = expand(bank, foreign, self.config(), np.random.default_rng(2))
        assert report.promoted == ["winner"]
        assert report.verdicts[0].verdict == VERDICT_PROMOTED
        # oracle agrees this clears a 0.95 bar
        assert exceedance_oracle((18, 20), (2, 10)) > 0.95

    def test_promotion_copies_survey_stats_and_opens_empty_click_arm(self):
        bank = self.bank()
        foreign = {"winner": arm(18, 20)}
        expand(bank, foreign, self.config(), np.random.default_rng(3))
        assert bank.survey_stats["winner"].successes == 18.0
        assert bank.survey_stats["winner"].trials == 20.0
        assert bank.click_stats["winner"].trials == 0.0
        # the copy is detached from the foreign ledger
        foreign["winner"].add(1, 1.0, 1.0)
        assert bank.survey_stats["winner"].trials == 20.0

    def test_marginal_candidate_stays_out(self):
        bank = self.bank(null_survey=(5, 10))
        foreign = {"meh": arm(6, 10)}
        report = expand(bank, foreign, self.config(), np.random.default_rng(4))
        assert report.promoted == []
        assert report.verdicts[0].verdict == VERDICT_BELOW_THRESHOLD
        assert exceedance_oracle((6, 10), (5, 10)) < 0.95
        assert "meh" not in bank.survey_stats

    def test_thin_evidence_is_not_even_scored(self):
        bank = self.bank()
        report = expand(bank, {"thin": arm(3, 3)}, self.config(min_trials=10), np.random.default_rng(5))
        assert report.verdicts[0].verdict == VERDICT_INSUFFICIENT_TRIALS
        assert report.verdicts[0].prob_better is None

    def test_known_actions_and_the_null_item_are_skipped(self):
        bank = self.bank()
        foreign = {
            "existing": arm(20, 20),
            NULL_ACTION_ID: arm(20, 20),
        }
        report = expand(bank, foreign, self.config(), np.random.default_rng(6))
        assert report.promoted == []
        assert {v.verdict for v in report.verdicts} == {VERDICT_ALREADY_PRESENT}

    def test_candidates_processed_in_sorted_order(self):
        bank = self.bank()
        foreign = {"zeta": arm(2, 3), "alpha": arm(1, 3), "mid": arm(0, 3)}
        report = expand(bank, foreign, self.config(), np.random.default_rng(7))
        assert [v.action_id for v in report.verdicts] == ["alpha", "mid", "zeta"]

    def test_report_is_seed_deterministic(self):
        foreign = {"a": arm(15, 20), "b": arm(12, 20)}
        r1 = expand(self.bank(), dict(foreign), self.config(), np.random.default_rng(8))
        r2 = expand(self.bank(), dict(foreign), self.config(), np.random.default_rng(8))
        assert r1.to_dict() == r2.to_dict()

    def test_missing_null_reference_rejected(self):
        bank = ContextBank(context_id="ctx")
        with pytest.raises(ValidationError):
            expand(bank, {"a": arm(5, 5)}, self.config(), np.random.default_rng(9))

    def test_false_positive_budget_moves_the_bar(self):
        # exceedance sits near 0.80 here: in at 0.25 budget, out at 0.05
        bank_loose = self.bank(null_survey=(4, 10))
        bank_tight = self.bank(null_survey=(4, 10))
        foreign = {"cand": arm(6, 10)}
        p = exceedance_oracle((6, 10), (4, 10))
        assert 0.75 < p < 0.95
        loose = expand(bank_loose, foreign, self.config(false_positive_rate=0.25), np.random.default_rng(10))
        tight = expand(bank_tight, foreign, self.config(false_positive_rate=0.05), np.random.default_rng(10))
        assert loose.promoted == ["cand"]
        assert tight.promoted == []


class TestReportSerialization:
    def test_report_lands_on_disk_as_json(self, tmp_path):
        bank = ContextBank(context_id="ctx")
        bank.survey_arm(NULL_ACTION_ID).add(0, 2.0, 10.0)
        report = expand(
            bank,
            {"winner": arm(18, 20), "thin": arm(1, 2)},
            ExpansionConfig(min_trials=10.0),
            np.random.default_rng(11),
        )
        path = tmp_path / "report.json"
        save_report(report, path)
        loaded = json.loads(path.read_text())
        assert loaded["context_id"] == "ctx"
        assert loaded["promoted"] == ["winner"]
        assert len(loaded["verdicts"]) == 2


class TestConfigValidation:
    def test_bounds(self):
        with pytest.raises(ValidationError):
            ExpansionConfig(min_trials=0.0)
        with pytest.raises(ValidationError):
            ExpansionConfig(false_positive_rate=0.0)
        with pytest.raises(ValidationError):
            ExpansionConfig(false_positive_rate=1.0)
        with pytest.raises(ValidationError):
            ExpansionConfig(mc_draws=0)
