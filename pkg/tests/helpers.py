"""Shared fakes and factories for the unit tests.

StubEndpoint consumes responses strictly in call order, which keeps
single-function tests independent of prompt wording. An item that is an
Exception instance is raised instead of returned; a callable handler takes
priority over the queue.
"""

from __future__ import annotations

from types import SimpleNamespace

from figqa.dataset import VerifiedRecord
from figqa.gateway import ModelTranscript
from figqa.generation import QACandidate


class StubEndpoint:
    def __init__(self, role="text", responses=(), temperature=1.0, handler=None, model_name=None):
        self.config = SimpleNamespace(
            role=role,
            model_name=model_name or f"stub-{role}",
            temperature=temperature,
        )
        self.responses = list(responses)
        self.handler = handler
        self.calls: list[tuple[str, str | None]] = []

    @property
    def role(self) -> str:
        return self.config.role

    def complete(self, prompt: str, image_ref: str | None = None):
        self.calls.append((prompt, image_ref))
        if self.handler is not None:
            result = self.handler(prompt, image_ref)
        elif self.responses:
            result = self.responses.pop(0)
        else:
            raise AssertionError("stub endpoint exhausted")
        if isinstance(result, Exception):
            raise result
        return result, ModelTranscript(
            request_digest=f"stub-{len(self.calls)}",
            raw_response=result,
            latency=0.0,
            attempt_count=1,
        )


def make_candidate(**overrides) -> QACandidate:
    fields = dict(
        key="2000.00001:f0:c0",
        arxiv_id="2000.00001",
        figure_index=0,
        claim_ordinal=0,
        question="What trend does the curve follow?",
        options=["It rises", "It falls", "It is flat", "It oscillates"],
        correct_index=0,
        caption="A curve over time.",
        figure_image_ref="images/x.png",
        primary_category="cs.LG",
        claim_text="The figure shows the curve rises.",
        option_permutation=[0, 1, 2, 3],
        context_digest="d" * 64,
    )
    fields.update(overrides)
    return QACandidate(**fields)


def make_record(**overrides) -> VerifiedRecord:
    fields = dict(
        key="2000.00001:f0:c0",
        arxiv_id="2000.00001",
        primary_category="cs.LG",
        figure_index=0,
        figure_image_ref="images/x.png",
        caption="A curve over time.",
        question="What trend does the curve follow?",
        options=["It rises", "It falls", "It is flat", "It oscillates"],
        correct_index=0,
        reasoning="The curve climbs steadily across the plot.",
        figure_type=None,
        question_type=None,
        provenance={},
    )
    fields.update(overrides)
    return VerifiedRecord(**fields)
