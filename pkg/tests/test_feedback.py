from __future__ import annotations

import pytest

from froav.errors import AuthFailed, InvalidDimension, ScoreOutOfRange, UnknownReport
from froav.feedback import (
    add_reviewer,
    authenticate,
    hash_token,
    list_feedback,
    revoke_reviewer,
    submit_feedback,
)
from test_storage import seed_report


@pytest.fixture
def ctx(store):
    seed_report(store, "r1")
    reviewer, token = add_reviewer(store, "Dana")
    return store, reviewer, token


class TestReviewers:
    def test_token_never_stored_in_plaintext(self, ctx):
        store, reviewer, token = ctx
        payload = store.get("reviewer", reviewer.id)
        assert token not in str(payload)
        assert payload["token_hash"] == hash_token(token)

    def test_authenticate_round_trip(self, ctx):
        store, reviewer, token = ctx
        assert authenticate(store, token).id == reviewer.id

    def test_bad_token_rejected(self, ctx):
        store, _, _ = ctx
        with pytest.raises(AuthFailed):
            authenticate(store, "not-a-token")

    def test_revoked_token_rejected(self, ctx):
        store, reviewer, token = ctx
        revoke_reviewer(store, reviewer.id)
        with pytest.raises(AuthFailed):
            authenticate(store, token)


class TestSubmitFeedback:
    def test_round_trip(self, ctx):
        store, reviewer, token = ctx
        record = submit_feedback(store, token, "r1", "Reliability", 8, "solid numbers")
        live = list_feedback(store, "r1")
        assert [f.id for f in live] == [record.id]
        assert live[0].score == 8
        assert live[0].reviewer_id == reviewer.id

    def test_supersede_archives_old_record(self, ctx):
        store, reviewer, token = ctx
        first = submit_feedback(store, token, "r1", "Reliability", 4)
        second = submit_feedback(store, token, "r1", "Reliability", 9, "changed my mind")
        live = list_feedback(store, "r1")
        assert [f.id for f in live] == [second.id]
        assert live[0].score == 9
        archives = store.query("feedback_archive", filter={"report_id": "r1"})
        assert len(archives) == 1
        assert archives[0]["feedback_id"] == first.id
        assert archives[0]["superseded_by"] == second.id
        # the archived record itself is retained, append-only
        assert store.get("feedback", first.id) is not None

    def test_different_dimensions_coexist(self, ctx):
        store, _, token = ctx
        submit_feedback(store, token, "r1", "Reliability", 5)
        submit_feedback(store, token, "r1", "Relevance", 6)
        assert len(list_feedback(store, "r1")) == 2

    def test_score_bounds(self, ctx):
        store, _, token = ctx
        with pytest.raises(ScoreOutOfRange):
            submit_feedback(store, token, "r1", "Reliability", 0)
        with pytest.raises(ScoreOutOfRange):
            submit_feedback(store, token, "r1", "Reliability", 11)

    def test_non_integer_score(self, ctx):
        store, _, token = ctx
        with pytest.raises(ScoreOutOfRange):
            submit_feedback(store, token, "r1", "Reliability", 7.5)

    def test_unknown_report(self, ctx):
        store, _, token = ctx
        with pytest.raises(UnknownReport):
            submit_feedback(store, token, "ghost", "Reliability", 5)

    def test_invalid_dimension(self, ctx):
        store, _, token = ctx
        with pytest.raises(InvalidDimension):
            submit_feedback(store, token, "r1", "Accuracy", 5)

    def test_bad_token(self, ctx):
        store, _, _ = ctx
        with pytest.raises(AuthFailed):
            submit_feedback(store, "wrong", "r1", "Reliability", 5)


class TestListFeedback:
    def test_fresh_report_empty(self, ctx):
        store, _, _ = ctx
        assert list_feedback(store, "r1") == []

    def test_unknown_report(self, ctx):
        store, _, _ = ctx
        with pytest.raises(UnknownReport):
            list_feedback(store, "ghost")

    def test_two_reviewers_four_dimensions(self, ctx):
        store, _, token_a = ctx
        _, token_b = add_reviewer(store, "Robin")
        for token in (token_a, token_b):
            for dim in ("Reliability", "Completeness", "Understandability", "Relevance"):
                submit_feedback(store, token, "r1", dim, 7)
        assert len(list_feedback(store, "r1")) == 8

    def test_ordered_by_dimension_then_reviewer(self, ctx):
        store, reviewer_a, token_a = ctx
        reviewer_b, token_b = add_reviewer(store, "Robin")
        submit_feedback(store, token_b, "r1", "Relevance", 3)
        submit_feedback(store, token_a, "r1", "Completeness", 4)
        submit_feedback(store, token_a, "r1", "Relevance", 5)
        live = list_feedback(store, "r1")
        keys = [(f.dimension, f.reviewer_id) for f in live]
        assert keys == sorted(keys)

    def test_integrity_after_feedback(self, ctx):
        store, _, token = ctx
        submit_feedback(store, token, "r1", "Understandability", 6)
        assert store.check_integrity() == []
