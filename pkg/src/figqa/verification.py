"""Cascaded verification filters and the append-only verdict log.

A candidate faces four recorded checks in fixed order: source consistency,
visual dependence (text stage then vision stage, both without the figure),
and vision consistency (three votes with the figure). The first failure
short-circuits the cascade; a candidate is retained iff every recorded
verdict passed. The log keeps exactly one verdict per (candidate, filter)
so crashed runs resume without repeating model calls.
"""

from __future__ import annotations

import json
import logging
import os
import threading
from dataclasses import dataclass, field
from pathlib import Path

from .dataset import VerifiedRecord
from .errors import MalformedResponse
from .gateway import (
    AMBIGUOUS,
    NONE_SIGNAL,
    complete_text,
    complete_vision,
    format_options,
    parse_option_tag,
    render_template,
)
from .generation import QACandidate

logger = logging.getLogger(__name__)

FILTER_SOURCE = "SourceConsistency"
FILTER_VISDEP_TEXT = "VisualDependenceText"
FILTER_VISDEP_VISION = "VisualDependenceVision"
FILTER_VISION = "VisionConsistency"
CASCADE_ORDER = (FILTER_SOURCE, FILTER_VISDEP_TEXT, FILTER_VISDEP_VISION, FILTER_VISION)

TIE = "Tie"
VOTE_COUNT = 3


@dataclass
class FilterVerdict:
    candidate_key: str
    filter: str
    passed: bool
    model_selection: str
    transcript_ref: str
    # Voting fields, populated for VisionConsistency only.
    selections: list[str] | None = None
    majority: str | None = None
    agreeing_run_index: int | None = None
    reasoning: str | None = None

    def to_json_dict(self) -> dict:
        return {
            "candidate_key": self.candidate_key,
            "filter": self.filter,
            "passed": self.passed,
            "model_selection": self.model_selection,
            "transcript_ref": self.transcript_ref,
            "selections": self.selections,
            "majority": self.majority,
            "agreeing_run_index": self.agreeing_run_index,
            "reasoning": self.reasoning,
        }

    @classmethod
    def from_json_dict(cls, data: dict) -> "FilterVerdict":
        return cls(
            candidate_key=data["candidate_key"],
            filter=data["filter"],
            passed=data["passed"],
            model_selection=data["model_selection"],
            transcript_ref=data["transcript_ref"],
            selections=data.get("selections"),
            majority=data.get("majority"),
            agreeing_run_index=data.get("agreeing_run_index"),
            reasoning=data.get("reasoning"),
        )


@dataclass
class VotingRecord:
    selections: list[str]
    majority: str  # letter or Tie
    reasoning: str | None
    agreeing_run_index: int | None


class VerdictLog:
    """File-backed append-only map of (candidate, filter) to verdict."""

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self._entries: dict[tuple[str, str], FilterVerdict] = {}
        self._lock = threading.Lock()
        if self.path.exists():
            self._load()

    def _load(self) -> None:
        with open(self.path, encoding="utf-8") as fh:
            for line_no, line in enumerate(fh, 1):
                line = line.strip()
                if not line:
                    continue
                try:
                    data = json.loads(line)
                except json.JSONDecodeError:
                    # A crash can tear the final line; everything before the
                    # torn tail is intact because appends are fsynced.
                    logger.warning("verdict log %s: skipping torn line %d", self.path, line_no)
                    continue
                verdict = FilterVerdict.from_json_dict(data)
                key = (verdict.candidate_key, verdict.filter)
                if key in self._entries:
                    logger.warning("verdict log %s: duplicate entry %s ignored", self.path, key)
                    continue
                self._entries[key] = verdict

    def has(self, candidate_key: str, filter_name: str) -> bool:
        return (candidate_key, filter_name) in self._entries

    def get(self, candidate_key: str, filter_name: str) -> FilterVerdict | None:
        return self._entries.get((candidate_key, filter_name))

    def append(self, verdict: FilterVerdict) -> None:
        key = (verdict.candidate_key, verdict.filter)
        with self._lock:
            if key in self._entries:
                raise ValueError(f"verdict already recorded for {key}")
            with open(self.path, "a", encoding="utf-8") as fh:
                fh.write(json.dumps(verdict.to_json_dict(), ensure_ascii=False) + "\n")
                fh.flush()
                os.fsync(fh.fileno())
            self._entries[key] = verdict

    def entries(self) -> list[FilterVerdict]:
        return list(self._entries.values())

    def __len__(self) -> int:
        return len(self._entries)


def majority_vote(selections: list[str]) -> str:
    """The letter occurring at least twice among 3 selections, else Tie.

    None-signals (and anything else that is not a single letter) can never
    form a majority; three identical abstentions are still a Tie.
    """
    if len(selections) != VOTE_COUNT:
        raise ValueError(f"expected exactly {VOTE_COUNT} selections, got {len(selections)}")
    for letter in set(selections):
        if len(letter) == 1 and letter.isalpha() and selections.count(letter) >= 2:
            return letter.upper()
    return TIE


def _parse_selection(response: str, option_count: int) -> str:
    """Option parse with the fail-closed coercion: no tag counts as Ambiguous."""
    try:
        return parse_option_tag(response, option_count)
    except MalformedResponse:
        return AMBIGUOUS


def check_source_consistency(
    candidate: QACandidate, context: str, text_endpoint, templates
) -> FilterVerdict:
    """Pass iff the text model uniquely recovers the correct answer from P."""
    prompt = render_template(
        templates["source_check"],
        {
            "context": context,
            "question": candidate.question,
            "options": format_options(candidate.options),
        },
    )
    response, transcript = complete_text(text_endpoint, prompt)
    selection = _parse_selection(response, len(candidate.options))
    return FilterVerdict(
        candidate_key=candidate.key,
        filter=FILTER_SOURCE,
        passed=selection == candidate.correct_letter,
        model_selection=selection,
        transcript_ref=transcript.request_digest,
    )


def _visdep_stage(candidate: QACandidate, endpoint, templates, filter_name: str) -> FilterVerdict:
    """One visual-dependence stage: pass iff the model FAILS to identify A*.

    The prompt carries caption, question, and options but no figure, for the
    text stage and the vision stage alike.
    """
    prompt = render_template(
        templates["visdep_check"],
        {
            "caption": candidate.caption,
            "question": candidate.question,
            "options": format_options(candidate.options),
        },
    )
    if endpoint.role == "vision":
        response, transcript = complete_vision(endpoint, prompt, None)
    else:
        response, transcript = complete_text(endpoint, prompt)
    selection = _parse_selection(response, len(candidate.options))
    return FilterVerdict(
        candidate_key=candidate.key,
        filter=filter_name,
        passed=selection != candidate.correct_letter,
        model_selection=selection,
        transcript_ref=transcript.request_digest,
    )


def check_visual_dependence(
    candidate: QACandidate, text_endpoint, vision_endpoint, templates
) -> list[FilterVerdict]:
    """Both stages of the no-figure check; stage 2 only runs if stage 1 passed."""
    stage1 = _visdep_stage(candidate, text_endpoint, templates, FILTER_VISDEP_TEXT)
    if not stage1.passed:
        return [stage1]
    stage2 = _visdep_stage(candidate, vision_endpoint, templates, FILTER_VISDEP_VISION)
    return [stage1, stage2]


def check_vision_consistency(
    candidate: QACandidate,
    vision_endpoint,
    templates,
    require_unanimous: bool = False,
) -> FilterVerdict:
    """Three independent answer-with-reasoning votes over (F, C, Q, O).

    A transport failure on any vote propagates before anything is recorded,
    so the triple is re-issued atomically on retry. Ambiguous parses are
    recorded as abstentions: they can never agree with a letter majority.
    """
    prompt = render_template(
        templates["vision_answer"],
        {
            "caption": candidate.caption,
            "question": candidate.question,
            "options": format_options(candidate.options),
        },
    )
    responses = []
    digests = []
    for _ in range(VOTE_COUNT):
        response, transcript = complete_vision(
            vision_endpoint, prompt, candidate.figure_image_ref
        )
        responses.append(response)
        digests.append(transcript.request_digest)

    selections = []
    for response in responses:
        selection = _parse_selection(response, len(candidate.options))
        selections.append(NONE_SIGNAL if selection == AMBIGUOUS else selection)

    majority = majority_vote(selections)
    agreeing_run_index = None
    reasoning = None
    if majority != TIE:
        agreeing_run_index = selections.index(majority)
        reasoning = responses[agreeing_run_index]  # verbatim, untrimmed

    passed = majority == candidate.correct_letter
    if require_unanimous and passed:
        passed = selections.count(majority) == VOTE_COUNT
    return FilterVerdict(
        candidate_key=candidate.key,
        filter=FILTER_VISION,
        passed=passed,
        model_selection=majority,
        transcript_ref=digests[0],
        selections=selections,
        majority=majority,
        agreeing_run_index=agreeing_run_index,
        reasoning=reasoning,
    )


def voting_record(verdict: FilterVerdict) -> VotingRecord:
    """The voting view of a VisionConsistency verdict."""
    if verdict.filter != FILTER_VISION or verdict.selections is None:
        raise ValueError("voting_record requires a VisionConsistency verdict")
    return VotingRecord(
        selections=list(verdict.selections),
        majority=verdict.majority or TIE,
        reasoning=verdict.reasoning,
        agreeing_run_index=verdict.agreeing_run_index,
    )


@dataclass
class CascadeOutcome:
    candidate_key: str
    status: str  # "retained" | "rejected"
    rejected_stage: str | None
    verdicts: list[FilterVerdict] = field(default_factory=list)
    record: VerifiedRecord | None = None


def build_verified_record(candidate: QACandidate, vision_verdict: FilterVerdict) -> VerifiedRecord:
    assert vision_verdict.reasoning is not None
    return VerifiedRecord(
        key=candidate.key,
        arxiv_id=candidate.arxiv_id,
        primary_category=candidate.primary_category,
        figure_index=candidate.figure_index,
        figure_image_ref=candidate.figure_image_ref,
        caption=candidate.caption,
        question=candidate.question,
        options=list(candidate.options),
        correct_index=candidate.correct_index,
        reasoning=vision_verdict.reasoning,
        figure_type=None,
        question_type=None,
        provenance={
            "claim_text": candidate.claim_text,
            "context_digest": candidate.context_digest,
            "verdict_keys": [f"{candidate.key}|{stage}" for stage in CASCADE_ORDER],
        },
    )


def run_cascade(
    candidate: QACandidate,
    context: str,
    text_endpoint,
    vision_endpoint,
    templates,
    log: VerdictLog,
    require_unanimous: bool = False,
) -> CascadeOutcome:
    """Apply the filters in order with short-circuit rejection.

    Already-logged verdicts are reused without new model calls, which is
    both the resume path and the no-duplicate-calls guarantee.
    """
    verdicts: list[FilterVerdict] = []

    def recorded(filter_name: str, compute) -> FilterVerdict:
        existing = log.get(candidate.key, filter_name)
        if existing is not None:
            return existing
        verdict = compute()
        log.append(verdict)
        return verdict

    v = recorded(
        FILTER_SOURCE,
        lambda: check_source_consistency(candidate, context, text_endpoint, templates),
    )
    verdicts.append(v)
    if not v.passed:
        return CascadeOutcome(candidate.key, "rejected", FILTER_SOURCE, verdicts)

    v = recorded(
        FILTER_VISDEP_TEXT,
        lambda: _visdep_stage(candidate, text_endpoint, templates, FILTER_VISDEP_TEXT),
    )
    verdicts.append(v)
    if not v.passed:
        return CascadeOutcome(candidate.key, "rejected", FILTER_VISDEP_TEXT, verdicts)

    v = recorded(
        FILTER_VISDEP_VISION,
        lambda: _visdep_stage(candidate, vision_endpoint, templates, FILTER_VISDEP_VISION),
    )
    verdicts.append(v)
    if not v.passed:
        return CascadeOutcome(candidate.key, "rejected", FILTER_VISDEP_VISION, verdicts)

    v = recorded(
        FILTER_VISION,
        lambda: check_vision_consistency(candidate, vision_endpoint, templates, require_unanimous),
    )
    verdicts.append(v)
    if not v.passed:
        return CascadeOutcome(candidate.key, "rejected", FILTER_VISION, verdicts)

    record = build_verified_record(candidate, v)
    return CascadeOutcome(candidate.key, "retained", None, verdicts, record)
