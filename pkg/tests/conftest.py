"""Shared builders for tests; no fixtures with state."""

from __future__ import annotations

from slatebandit.core import (
    Action,
    Context,
    Feedback,
    LoggedEvent,
    Slate,
    Survey,
    null_item,
)


def make_action(action_id: str, title: str | None = None) -> Action:
    return Action(action_id=action_id, title=title if title is not None else action_id)


def make_slate(action_ids: list[str], scores: list[float] | None = None, with_null: bool = True):
    items = [make_action(a) for a in action_ids]
    if with_null:
        items.append(null_item())
    if scores is None:
        scores = [1.0 - 0.1 * i for i in range(len(items))]
    return Slate(items=items, scores=scores)


def make_event(
    ts: int = 0,
    context_id: str = "ctx",
    action_ids: list[str] = ("a1", "a2"),
    click: int | None = None,
    survey: Survey = Survey.SKIPPED,
    escalation: bool = False,
    propensity: float | None = None,
    with_null: bool = True,
) -> LoggedEvent:
    return LoggedEvent(
        ts=ts,
        context=Context(context_id=context_id),
        slate=make_slate(list(action_ids), with_null=with_null),
        feedback=Feedback(click=click, survey=survey, escalation=escalation),
        propensity=propensity,
        policy_tag="test",
    )
