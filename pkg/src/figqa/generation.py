"""Generation stage: atomic claims from figure context, then QA candidates.

Each figure context yields zero or more claims of the form "The figure
shows ..."; each claim yields at most one four-option question. The model
may decline either step, and malformed structure is declined rather than
repaired so no model output is ever silently mutated.
"""

from __future__ import annotations

import hashlib
import random
import re
from dataclasses import dataclass

from .errors import MalformedResponse
from .figure_context import FigureContext
from .gateway import complete_text, format_options, parse_patterns_block, render_template

CLAIM_PREFIX = "the figure shows"
OPTION_COUNT = 4


@dataclass
class AtomicClaim:
    arxiv_id: str
    figure_index: int
    ordinal: int  # line position within the extraction response
    text: str

    @property
    def figure_key(self) -> str:
        return f"{self.arxiv_id}:f{self.figure_index}"

    @property
    def key(self) -> str:
        return f"{self.figure_key}:c{self.ordinal}"


@dataclass
class QACandidate:
    key: str  # equals the source claim's key
    arxiv_id: str
    figure_index: int
    claim_ordinal: int
    question: str
    options: list[str]
    correct_index: int
    caption: str
    figure_image_ref: str
    primary_category: str
    claim_text: str
    option_permutation: list[int]  # position -> source slot (0 is the correct answer)
    context_digest: str

    @property
    def correct_letter(self) -> str:
        return chr(65 + self.correct_index)


@dataclass
class Declined:
    claim_key: str
    reason: str  # "model_declined" | "malformed_qa"
    detail: str = ""


def normalize_ws(text: str) -> str:
    return " ".join(text.split())


def claim_conforms(text: str) -> bool:
    """Prefix check, case-insensitive after whitespace normalization."""
    return normalize_ws(text).lower().startswith(CLAIM_PREFIX)


def derive_rng(seed: int, item_key: str) -> random.Random:
    """Per-item generator derived from the run seed; order-independent."""
    digest = hashlib.sha256(f"{seed}:{item_key}".encode("utf-8")).hexdigest()
    return random.Random(int(digest[:16], 16))


def context_digest(context: str) -> str:
    return hashlib.sha256(context.encode("utf-8")).hexdigest()


def extract_claims(ctx: FigureContext, endpoint, templates) -> list[AtomicClaim]:
    """Render claim_extract, call the text model, keep conforming claims.

    One retry on a structurally malformed response, then the figure simply
    contributes no claims. Ordinals are response line positions, so filtered
    non-conforming lines leave gaps that map back to the raw transcript.
    """
    prompt = render_template(
        templates["claim_extract"], {"context": ctx.context, "label": ctx.label}
    )
    lines: list[str] | None = None
    for attempt in (0, 1):
        response, _ = complete_text(endpoint, prompt)
        try:
            lines = parse_patterns_block(response)
            break
        except MalformedResponse:
            if attempt == 1:
                return []
    if lines is None:
        return []
    return [
        AtomicClaim(
            arxiv_id=ctx.arxiv_id,
            figure_index=ctx.figure_index,
            ordinal=ordinal,
            text=line,
        )
        for ordinal, line in enumerate(lines)
        if claim_conforms(line)
    ]


_QUESTION_RE = re.compile(r"<Question>(.*?)</Question>", re.DOTALL | re.IGNORECASE)
_CORRECT_RE = re.compile(r"<Correct>(.*?)</Correct>", re.DOTALL | re.IGNORECASE)
_DISTRACTOR_RE = re.compile(r"<Distractor>(.*?)</Distractor>", re.DOTALL | re.IGNORECASE)


def parse_qa_response(response: str) -> dict[str, object]:
    """Pull question/correct/distractors out of the XML-shaped response."""
    questions = [m.strip() for m in _QUESTION_RE.findall(response)]
    corrects = [m.strip() for m in _CORRECT_RE.findall(response)]
    distractors = [m.strip() for m in _DISTRACTOR_RE.findall(response)]
    if len(questions) != 1 or len(corrects) != 1 or len(distractors) != 3:
        raise MalformedResponse(
            f"expected 1 question, 1 correct, 3 distractors; "
            f"got {len(questions)}/{len(corrects)}/{len(distractors)}"
        )
    return {"question": questions[0], "correct": corrects[0], "distractors": distractors}


def _is_bare_none(response: str) -> bool:
    return response.strip().rstrip(".").strip().lower() == "none"


def generate_qa(
    claim: AtomicClaim,
    ctx: FigureContext,
    endpoint,
    templates,
    seed: int,
    primary_category: str = "",
) -> QACandidate | Declined:
    """Turn one claim into a four-option candidate, or a typed decline.

    The correct answer's position is drawn from a seeded per-claim generator
    and the permutation is recorded, so runs are reproducible and the answer
    letter carries no signal.
    """
    prompt = render_template(
        templates["qa_generate"],
        {"claim": claim.text, "caption": ctx.caption, "context": ctx.context},
    )
    parsed = None
    for attempt in (0, 1):
        response, _ = complete_text(endpoint, prompt)
        if _is_bare_none(response):
            return Declined(claim.key, "model_declined", "model output None")
        try:
            parsed = parse_qa_response(response)
            break
        except MalformedResponse as exc:
            if attempt == 1:
                return Declined(claim.key, "malformed_qa", str(exc))
    assert parsed is not None

    question = str(parsed["question"])
    correct = str(parsed["correct"])
    distractors = [str(d) for d in parsed["distractors"]]
    slots = [correct] + distractors  # source slot 0 is the correct answer
    if not question or not correct or not ctx.caption:
        return Declined(claim.key, "malformed_qa", "empty question, answer, or caption")
    normalized = [normalize_ws(s) for s in slots]
    if len(set(normalized)) != OPTION_COUNT or "" in normalized:
        return Declined(claim.key, "malformed_qa", "options not pairwise distinct")

    rng = derive_rng(seed, claim.key)
    permutation = list(range(OPTION_COUNT))
    rng.shuffle(permutation)
    options = [slots[s] for s in permutation]
    correct_index = permutation.index(0)

    return QACandidate(
        key=claim.key,
        arxiv_id=claim.arxiv_id,
        figure_index=claim.figure_index,
        claim_ordinal=claim.ordinal,
        question=question,
        options=options,
        correct_index=correct_index,
        caption=ctx.caption,
        figure_image_ref=ctx.figure_image_ref,
        primary_category=primary_category,
        claim_text=claim.text,
        option_permutation=permutation,
        context_digest=context_digest(ctx.context),
    )


def options_block(candidate: QACandidate) -> str:
    return format_options(candidate.options)
