"""Domain types and the append-only interaction log.

Everything downstream (counter aggregation, reward-model training, off-policy
evaluation) consumes the event records defined here, so the field names in the
serialized form are part of the contract and must not drift.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterator

NULL_ACTION_ID = "__null__"
NULL_ACTION_TITLE = "None of the above"


class ValidationError(ValueError):
    """An event or domain object violates a structural invariant."""


class NoDataError(ValueError):
    """An operation needed at least one observation and found none."""


class Survey(str, Enum):
    YES = "yes"
    NO = "no"
    SKIPPED = "skipped"


class RewardMode(str, Enum):
    SURVEY_ONLY = "survey_only"
    SURVEY_AND_ESCALATION = "survey_and_escalation"


@dataclass(frozen=True)
class Context:
    """Request context: a stable context id plus optional rich signals.

    ``context_id`` is the discrete key the counter banks aggregate on (page,
    topic, entry point). ``features`` carries categorical attributes and
    ``query`` the user's free text, both of which only matter to the neural
    featurizer.
    """

    context_id: str
    features: dict[str, str] = field(default_factory=dict)
    query: str | None = None

    def __post_init__(self) -> None:
        if not self.context_id:
            raise ValidationError("context_id must be non-empty")

    def to_dict(self) -> dict:
        return {"id": self.context_id, "features": dict(self.features), "query": self.query}

    @classmethod
    def from_dict(cls, d: dict) -> "Context":
        return cls(context_id=d["id"], features=dict(d.get("features") or {}), query=d.get("query"))


@dataclass(frozen=True)
class Action:
    """A recommendable item. The null item is the reserved no-op slot."""

    action_id: str
    title: str = ""
    is_null_item: bool = False
    features: dict[str, str] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not self.action_id:
            raise ValidationError("action_id must be non-empty")
        if self.is_null_item and self.action_id != NULL_ACTION_ID:
            raise ValidationError("null item must use the reserved action id")
        if not self.is_null_item and self.action_id == NULL_ACTION_ID:
            raise ValidationError("reserved null id used by a content action")

    def to_dict(self) -> dict:
        return {
            "id": self.action_id,
            "title": self.title,
            "null": self.is_null_item,
            "features": dict(self.features),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Action":
        return cls(
            action_id=d["id"],
            title=d.get("title", ""),
            is_null_item=bool(d.get("null", False)),
            features=dict(d.get("features") or {}),
        )


def null_item() -> Action:
    return Action(action_id=NULL_ACTION_ID, title=NULL_ACTION_TITLE, is_null_item=True)


@dataclass(frozen=True)
class Slate:
    """An ordered list of served actions with their sampled scores.

    Items after the null item are never served, so a well-formed slate either
    ends at the null item or (direct trigger) contains a single content item.
    """

    items: tuple[Action, ...]
    scores: tuple[float, ...]

    def __init__(self, items, scores) -> None:
        object.__setattr__(self, "items", tuple(items))
        object.__setattr__(self, "scores", tuple(float(s) for s in scores))
        self.__post_init__()

    def __post_init__(self) -> None:
        if len(self.items) != len(self.scores):
            raise ValidationError("items and scores must have equal length")
        ids = [a.action_id for a in self.items]
        if len(set(ids)) != len(ids):
            raise ValidationError("slate contains a duplicate action")
        if sum(1 for a in self.items if a.is_null_item) > 1:
            raise ValidationError("slate contains more than one null item")

    def __len__(self) -> int:
        return len(self.items)

    @property
    def null_position(self) -> int | None:
        for i, a in enumerate(self.items):
            if a.is_null_item:
                return i
        return None

    def content_items(self) -> tuple[Action, ...]:
        """Actions served above the null item (all items if no null present)."""
        pos = self.null_position
        return self.items if pos is None else self.items[:pos]

    def to_dict(self) -> dict:
        return {"items": [a.to_dict() for a in self.items], "scores": list(self.scores)}

    @classmethod
    def from_dict(cls, d: dict) -> "Slate":
        return cls(
            items=[Action.from_dict(a) for a in d["items"]],
            scores=d["scores"],
        )


@dataclass(frozen=True)
class Feedback:
    """What the user did with a served slate.

    ``click`` indexes a slot of the served slate (possibly the null slot when
    the user picked "none of the above" and continued in free text); None means
    the session ended with no selection at all.
    """

    click: int | None = None
    survey: Survey = Survey.SKIPPED
    escalation: bool = False

    def __post_init__(self) -> None:
        if self.click is not None and (
            isinstance(self.click, bool) or not isinstance(self.click, int) or self.click < 0
        ):
            raise ValidationError("click must be a non-negative slot index or None")
        if not isinstance(self.survey, Survey):
            raise ValidationError("survey must be a Survey value")


@dataclass(frozen=True)
class RewardSpec:
    """Maps survey/escalation feedback to a scalar training reward.

    escalation_weight must be non-positive: an escalation can only push the
    reward down.
    """

    mode: RewardMode = RewardMode.SURVEY_ONLY
    escalation_weight: float = -1.0

    def __post_init__(self) -> None:
        if self.escalation_weight > 0:
            raise ValidationError("escalation_weight must be <= 0")


def reward_of(feedback: Feedback, spec: RewardSpec) -> float | None:
    """Scalar reward for one event, or None when the event carries no signal.

    Survey yes -> +1, no -> -1, skipped -> no reward. In the escalation-aware
    mode an escalation adds ``escalation_weight`` on top of the survey reward,
    and a skipped survey with an escalation still yields ``escalation_weight``
    alone.
    """
    if feedback.survey is Survey.YES:
        base: float | None = 1.0
    elif feedback.survey is Survey.NO:
        base = -1.0
    else:
        base = None
    if spec.mode is RewardMode.SURVEY_ONLY:
        return base
    extra = spec.escalation_weight if feedback.escalation else 0.0
    if base is None:
        return extra if feedback.escalation else None
    return base + extra


@dataclass(frozen=True)
class LoggedEvent:
    """One served request with its feedback, as written to the log."""

    ts: int
    context: Context
    slate: Slate
    feedback: Feedback
    propensity: float | None = None
    posteriors: dict[str, tuple[float, float]] | None = None
    policy_tag: str = ""

    def __post_init__(self) -> None:
        if isinstance(self.ts, bool) or not isinstance(self.ts, int):
            raise ValidationError("ts must be integer epoch seconds")
        if self.feedback.click is not None and self.feedback.click >= len(self.slate):
            raise ValidationError("click does not index a valid slot of the served slate")
        if self.propensity is not None and not (0.0 < self.propensity <= 1.0):
            raise ValidationError("propensity must lie in (0, 1]")
        if self.posteriors is not None:
            for a in self.slate.items:
                if a.action_id not in self.posteriors:
                    raise ValidationError("posteriors must cover every slate action")

    def clicked_action(self) -> Action | None:
        if self.feedback.click is None:
            return None
        return self.slate.items[self.feedback.click]


def attributed_action(event: LoggedEvent) -> Action | None:
    """The action the event's feedback attaches to.

    The clicked slot when there is a click; for a direct-trigger singleton
    slate (one content item, no null slot) the single item, because there the
    click is implicit and censored. None when nothing was selected.
    """
    clicked = event.clicked_action()
    if clicked is not None:
        return clicked
    if len(event.slate) == 1 and not event.slate.items[0].is_null_item:
        return event.slate.items[0]
    return None


def encode_event(event: LoggedEvent) -> str:
    """One JSON line. Field names are fixed: ts, ctx, slate, click, survey,
    escalation, propensity, posteriors, policy."""
    posteriors = None
    if event.posteriors is not None:
        posteriors = {k: [float(v[0]), float(v[1])] for k, v in sorted(event.posteriors.items())}
    record = {
        "ts": event.ts,
        "ctx": event.context.to_dict(),
        "slate": event.slate.to_dict(),
        "click": event.feedback.click,
        "survey": event.feedback.survey.value,
        "escalation": event.feedback.escalation,
        "propensity": event.propensity,
        "posteriors": posteriors,
        "policy": event.policy_tag,
    }
    return json.dumps(record, sort_keys=True, separators=(",", ":"))


def decode_event(line: str) -> LoggedEvent:
    try:
        record = json.loads(line)
    except json.JSONDecodeError as exc:
        raise ValidationError(f"malformed event line: {exc}") from exc
    try:
        survey = Survey(record["survey"])
    except (KeyError, ValueError) as exc:
        raise ValidationError("survey must be yes/no/skipped") from exc
    posteriors = record.get("posteriors")
    if posteriors is not None:
        posteriors = {k: (float(v[0]), float(v[1])) for k, v in posteriors.items()}
    try:
        return LoggedEvent(
            ts=record["ts"],
            context=Context.from_dict(record["ctx"]),
            slate=Slate.from_dict(record["slate"]),
            feedback=Feedback(
                click=record.get("click"),
                survey=survey,
                escalation=bool(record.get("escalation", False)),
            ),
            propensity=record.get("propensity"),
            posteriors=posteriors,
            policy_tag=record.get("policy", ""),
        )
    except KeyError as exc:
        raise ValidationError(f"event line missing field {exc}") from exc


class EventLog:
    """Append-only JSONL event log.

    Appends flush on every write; replay yields events in append order so a
    reader that consumes the file in one pass sees each event exactly once.
    """

    def __init__(self, path: str | os.PathLike) -> None:
        self.path = os.fspath(path)

    def append(self, event: LoggedEvent) -> None:
        line = encode_event(event)
        with open(self.path, "a", encoding="utf-8") as fh:
            fh.write(line + "\n")
            fh.flush()

    def append_many(self, events: list[LoggedEvent]) -> None:
        with open(self.path, "a", encoding="utf-8") as fh:
            for event in events:
                fh.write(encode_event(event) + "\n")
            fh.flush()

    def replay(self) -> Iterator[LoggedEvent]:
        with open(self.path, "r", encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if line:
                    yield decode_event(line)

    def read_all(self) -> list[LoggedEvent]:
        return list(self.replay())
