"""Zero-shot multiple-choice evaluation with per-category breakdowns.

Predictions are parsed with the same fail-closed option parser as the
pipeline: an unparseable answer or an abstention counts as incorrect.
Items that still fail transport after bounded retries are reported as
unevaluated and excluded from every total.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from decimal import Decimal, ROUND_HALF_UP

from .dataset import VerifiedRecord
from .errors import EndpointUnavailable, MalformedResponse
from .gateway import complete_vision, format_options, parse_option_tag, render_template

UNLABELED = "unlabeled"


@dataclass
class EvalResult:
    model_name: str
    overall_correct: int
    overall_total: int
    overall_accuracy: float
    by_domain: dict[str, dict] = field(default_factory=dict)
    by_figure_type: dict[str, dict] = field(default_factory=dict)
    by_question_type: dict[str, dict] = field(default_factory=dict)
    per_item: list[dict] = field(default_factory=list)
    unevaluated: int = 0
    unevaluated_keys: list[str] = field(default_factory=list)

    def to_json_dict(self) -> dict:
        return {
            "model_name": self.model_name,
            "overall": {
                "correct": self.overall_correct,
                "total": self.overall_total,
                "accuracy": self.overall_accuracy,
            },
            "by_domain": self.by_domain,
            "by_figure_type": self.by_figure_type,
            "by_question_type": self.by_question_type,
            "per_item": self.per_item,
            "unevaluated": self.unevaluated,
            "unevaluated_keys": self.unevaluated_keys,
        }


def accuracy_pct(correct: int, total: int) -> float:
    """100 x correct / total, half-up at two decimals; 0.0 for empty."""
    if total == 0:
        return 0.0
    value = Decimal(100 * correct) / Decimal(total)
    return float(value.quantize(Decimal("0.01"), rounding=ROUND_HALF_UP))


def _tally(breakdown: dict[str, dict], category: str, is_correct: bool) -> None:
    slot = breakdown.setdefault(category, {"correct": 0, "total": 0, "accuracy": 0.0})
    slot["total"] += 1
    if is_correct:
        slot["correct"] += 1


def evaluate(
    endpoint,
    records: list[VerifiedRecord],
    templates,
    retry_rounds: int = 2,
) -> EvalResult:
    """Ask the configured model every question; aggregate accuracies."""
    if endpoint.config.temperature != 0:
        raise ValueError("evaluation requires a greedy (temperature 0) endpoint")

    predictions: dict[str, str | None] = {}
    pending = list(records)
    for round_no in range(retry_rounds + 1):
        still_failing = []
        for record in pending:
            prompt = render_template(
                templates["eval_zero_shot"],
                {
                    "caption": record.caption,
                    "question": record.question,
                    "options": format_options(record.options),
                },
            )
            try:
                response, _ = complete_vision(endpoint, prompt, record.figure_image_ref)
            except EndpointUnavailable:
                still_failing.append(record)
                continue
            try:
                predictions[record.key] = parse_option_tag(response, len(record.options))
            except MalformedResponse:
                predictions[record.key] = None  # unparseable counts as wrong
        pending = still_failing
        if not pending:
            break

    unevaluated_keys = [r.key for r in pending]
    result = EvalResult(
        model_name=endpoint.config.model_name,
        overall_correct=0,
        overall_total=0,
        overall_accuracy=0.0,
        unevaluated=len(unevaluated_keys),
        unevaluated_keys=unevaluated_keys,
    )

    skipped = set(unevaluated_keys)
    for record in records:
        if record.key in skipped:
            continue
        predicted = predictions[record.key]
        is_correct = predicted == record.correct_letter
        result.overall_total += 1
        if is_correct:
            result.overall_correct += 1
        _tally(result.by_domain, record.primary_category or UNLABELED, is_correct)
        _tally(result.by_figure_type, record.figure_type or UNLABELED, is_correct)
        _tally(result.by_question_type, record.question_type or UNLABELED, is_correct)
        result.per_item.append(
            {"key": record.key, "predicted": predicted, "correct": is_correct}
        )

    result.overall_accuracy = accuracy_pct(result.overall_correct, result.overall_total)
    for breakdown in (result.by_domain, result.by_figure_type, result.by_question_type):
        for slot in breakdown.values():
            slot["accuracy"] = accuracy_pct(slot["correct"], slot["total"])
    return result


def format_report(result: EvalResult) -> str:
    """Category table mirroring the per-category accuracy layout."""
    lines = [
        f"Model: {result.model_name}",
        f"Overall: {result.overall_correct}/{result.overall_total} "
        f"= {result.overall_accuracy:.2f}%",
        f"Unevaluated: {result.unevaluated}",
    ]
    for title, breakdown in (
        ("By domain", result.by_domain),
        ("By figure type", result.by_figure_type),
        ("By question type", result.by_question_type),
    ):
        lines.append("")
        lines.append(title)
        lines.append(f"  {'Category':<20} {'Correct':>8} {'Total':>8} {'Accuracy':>9}")
        for category in sorted(breakdown):
            slot = breakdown[category]
            lines.append(
                f"  {category:<20} {slot['correct']:>8} {slot['total']:>8} "
                f"{slot['accuracy']:>8.2f}%"
            )
    return "\n".join(lines)
