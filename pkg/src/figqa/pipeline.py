"""Resumable batch pipeline: staged files, manifests, and endpoint wiring.

Stage files are the only inter-stage interface. Each stage reads its
predecessor's output, writes line-delimited records plus a manifest, and is
deterministic given identical inputs and seed under mock backends. The
verify stage additionally skips already-verdicted items via the verdict
log, which is what makes crashed runs resumable without duplicate calls.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import random
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from . import dataset as ds
from . import verification as vf
from .errors import (
    ConfigError,
    EndpointUnavailable,
    ImageUnreadable,
    RecursionLimitExceeded,
    SchemaViolation,
    UpstreamInputError,
)
from .eval_harness import evaluate, format_report
from .figure_context import FigureContext, build_figure_contexts
from .gateway import HttpEndpoint, MockBackend, ModelEndpointConfig, load_templates
from .generation import Declined, QACandidate, extract_claims, generate_qa, normalize_ws
from .latex_prep import CleanPaper, RawPaper, clean_paper
from .replay import replay_verdicts

logger = logging.getLogger(__name__)

CRASH_AFTER_ENV = "FIGQA_MOCK_CRASH_AFTER"

STAGE_ORDER = ("prepare", "extract", "generate", "verify", "annotate", "stats")

# Endpoint roles and their built-in defaults (used directly in mock mode;
# merged under the config file's endpoint entries otherwise).
ROLE_DEFAULTS: dict[str, dict] = {
    "text": {"role": "text", "model_name": "mock-text", "temperature": 1.0},
    "vision": {"role": "vision", "model_name": "mock-vision", "temperature": 1.0},
    "annotator_text": {
        "role": "text",
        "model_name": "mock-annotator-text",
        "temperature": 0.0,
    },
    "annotator_vision": {
        "role": "vision",
        "model_name": "mock-annotator-vision",
        "temperature": 0.0,
    },
    "eval": {"role": "vision", "model_name": "mock-eval", "temperature": 0.0},
}


@dataclass
class RunConfig:
    output: str
    corpus: str | None = None
    latex_cache: str | None = None
    prompts: str | None = None
    seed: int = 42
    threshold: float = 0.9
    concurrency: int = 1
    batch_size: int = 1000
    paragraph_separator: str = "\n\n"
    target_size: int | None = None
    require_unanimous_vision: bool = False
    unevaluated_threshold: int = 0
    mock_script: str | None = None
    eval_dataset: str | None = None
    endpoints: dict[str, dict] = field(default_factory=dict)

    def __post_init__(self):
        if not 0 < self.threshold <= 1:
            raise ConfigError(f"threshold must be in (0, 1], got {self.threshold}")
        if self.concurrency < 1:
            raise ConfigError("concurrency must be at least 1")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be at least 1")
        if not isinstance(self.seed, int):
            raise ConfigError("seed must be an integer")

    def config_digest(self) -> str:
        """Hash of behavior-relevant settings (paths excluded on purpose)."""
        payload = {
            "seed": self.seed,
            "threshold": self.threshold,
            "batch_size": self.batch_size,
            "paragraph_separator": self.paragraph_separator,
            "target_size": self.target_size,
            "require_unanimous_vision": self.require_unanimous_vision,
            "endpoints": {
                name: {
                    k: v
                    for k, v in sorted(self._endpoint_dict(name).items())
                    if k != "api_key_env"
                }
                for name in ROLE_DEFAULTS
            },
        }
        return hashlib.sha256(
            json.dumps(payload, sort_keys=True).encode("utf-8")
        ).hexdigest()

    def _endpoint_dict(self, name: str) -> dict:
        merged = dict(ROLE_DEFAULTS[name])
        # Annotator/eval roles inherit the base vision/text endpoint address.
        base_role = merged["role"]
        if not self.mock_script and base_role in self.endpoints:
            inherited = {
                k: v
                for k, v in self.endpoints[base_role].items()
                if k in ("base_url", "api_key_env", "requests_per_minute", "timeout", "max_retries")
            }
            merged.update(inherited)
        merged.update(self.endpoints.get(name, {}))
        merged["role"] = ROLE_DEFAULTS[name]["role"]  # role is fixed per slot
        return merged

    def endpoint_config(self, name: str) -> ModelEndpointConfig:
        if name not in ROLE_DEFAULTS:
            raise ConfigError(f"unknown endpoint role {name!r}")
        return ModelEndpointConfig(**self._endpoint_dict(name))

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        known = {f for f in cls.__dataclass_fields__}  # type: ignore[attr-defined]
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        if "output" not in data:
            raise ConfigError("config must define an output directory")
        try:
            return cls(**data)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    @classmethod
    def from_yaml(cls, path: str | Path) -> "RunConfig":
        try:
            with open(path, encoding="utf-8") as fh:
                data = yaml.safe_load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        except yaml.YAMLError as exc:
            raise ConfigError(f"invalid YAML in {path}: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError(f"config {path} must be a mapping")
        return cls.from_dict(data)


def build_endpoints(cfg: RunConfig) -> dict[str, object]:
    """Instantiate all five endpoint slots, mock or HTTP."""
    if cfg.mock_script:
        crash_after = None
        raw = os.environ.get(CRASH_AFTER_ENV)
        if raw:
            crash_after = int(raw)
        backend = MockBackend.from_file(
            cfg.mock_script,
            ledger_path=Path(cfg.output) / "mock_calls.jsonl",
            crash_after=crash_after,
        )
        return {name: backend.endpoint(cfg.endpoint_config(name)) for name in ROLE_DEFAULTS}
    for required in ("text", "vision"):
        if required not in cfg.endpoints or not cfg.endpoints[required].get("base_url"):
            raise ConfigError(
                f"live runs need an endpoints.{required} entry with a base_url"
            )
    return {name: HttpEndpoint(cfg.endpoint_config(name)) for name in ROLE_DEFAULTS}


# ---------------------------------------------------------------------------
# Corpus input


@dataclass
class CorpusRow:
    arxiv_id: str
    primary_category: str
    figure_index: int
    image: str
    caption: str


def load_corpus(path: str | Path) -> list[CorpusRow]:
    """Read and validate the figure-caption corpus."""
    path = Path(path)
    if not path.is_file():
        raise UpstreamInputError(f"corpus file not found: {path}")
    rows: list[CorpusRow] = []
    seen: set[tuple[str, int]] = set()
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                data = json.loads(line)
            except json.JSONDecodeError as exc:
                raise SchemaViolation(line_no, "<line>", f"invalid JSON: {exc}") from exc
            for name, kind in (
                ("arxiv_id", str),
                ("primary_category", str),
                ("figure_index", int),
                ("image", str),
                ("caption", str),
            ):
                if name not in data:
                    raise SchemaViolation(line_no, name, "missing field")
                if not isinstance(data[name], kind) or (
                    kind is int and isinstance(data[name], bool)
                ):
                    raise SchemaViolation(line_no, name, f"expected {kind.__name__}")
            if not data["arxiv_id"]:
                raise SchemaViolation(line_no, "arxiv_id", "must be non-empty")
            if data["figure_index"] < 0:
                raise SchemaViolation(line_no, "figure_index", "must be non-negative")
            pair = (data["arxiv_id"], data["figure_index"])
            if pair in seen:
                raise SchemaViolation(line_no, "figure_index", f"duplicate figure {pair}")
            seen.add(pair)
            rows.append(
                CorpusRow(
                    arxiv_id=data["arxiv_id"],
                    primary_category=data["primary_category"],
                    figure_index=data["figure_index"],
                    image=data["image"],
                    caption=data["caption"],
                )
            )
    return rows


def _require_file(path: Path, producer: str) -> Path:
    if not path.is_file():
        raise UpstreamInputError(f"missing {path.name}; run the {producer} stage first")
    return path


def _read_jsonl(path: Path) -> list[dict]:
    rows = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                rows.append(json.loads(line))
    return rows


def _write_jsonl(path: Path, rows: list[dict]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for row in rows:
            fh.write(json.dumps(row, ensure_ascii=False) + "\n")


def _write_manifest(path: Path, manifest: dict) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True, ensure_ascii=False)
        fh.write("\n")


def _batches(items: list, size: int) -> list[list]:
    return [items[i : i + size] for i in range(0, len(items), size)]


# ---------------------------------------------------------------------------
# Stages


def stage_prepare(cfg: RunConfig) -> dict:
    """Clean each paper's LaTeX and bind it to its figure-caption rows."""
    if not cfg.corpus or not cfg.latex_cache:
        raise ConfigError("prepare needs corpus and latex_cache paths")
    out_dir = Path(cfg.output)
    out_dir.mkdir(parents=True, exist_ok=True)
    rows = load_corpus(cfg.corpus)
    papers: dict[str, list[CorpusRow]] = {}
    for row in rows:
        papers.setdefault(row.arxiv_id, []).append(row)

    # The paper pool is shuffled once per run seed, then processed in
    # batches; both orders are deterministic for a given seed.
    ids = sorted(papers)
    random.Random(cfg.seed).shuffle(ids)

    cache = Path(cfg.latex_cache)
    prepared_rows: list[dict] = []
    skipped: list[dict] = []
    for batch in _batches(ids, cfg.batch_size):
        for arxiv_id in batch:
            fig_rows = sorted(papers[arxiv_id], key=lambda r: r.figure_index)
            tex_path = cache / f"{arxiv_id}.tex"
            if not tex_path.is_file():
                skipped.append({"arxiv_id": arxiv_id, "reason": "missing_latex_source"})
                continue
            raw = RawPaper(
                arxiv_id=arxiv_id,
                primary_category=fig_rows[0].primary_category,
                latex_source=tex_path.read_text(encoding="utf-8"),
                figure_caption_pairs=[(r.image, r.caption) for r in fig_rows],
            )
            try:
                clean = clean_paper(raw, separator=cfg.paragraph_separator)
            except RecursionLimitExceeded:
                skipped.append({"arxiv_id": arxiv_id, "reason": "macro_recursion_limit"})
                continue
            prepared_rows.append(
                {
                    "arxiv_id": arxiv_id,
                    "primary_category": raw.primary_category,
                    "paragraphs": clean.paragraphs,
                    "figures": [
                        {"figure_index": r.figure_index, "image": r.image, "caption": r.caption}
                        for r in fig_rows
                    ],
                }
            )
    _write_jsonl(out_dir / "papers_clean.jsonl", prepared_rows)
    manifest = {
        "stage": "prepare",
        "papers_in": len(papers),
        "papers_prepared": len(prepared_rows),
        "skipped": skipped,
        "seed": cfg.seed,
        "config_digest": cfg.config_digest(),
    }
    _write_manifest(out_dir / "manifest_prepare.json", manifest)
    return manifest


def stage_extract(cfg: RunConfig) -> dict:
    """Bind figures to environments and collect citing paragraphs."""
    out_dir = Path(cfg.output)
    papers = _read_jsonl(_require_file(out_dir / "papers_clean.jsonl", "prepare"))

    context_rows: list[dict] = []
    discard_rows: list[dict] = []
    discard_counts: dict[str, int] = {}
    figures_in = 0
    for paper in papers:
        sep = cfg.paragraph_separator
        clean = CleanPaper(
            arxiv_id=paper["arxiv_id"],
            body=sep.join(paper["paragraphs"]),
            paragraphs=paper["paragraphs"],
        )
        raw = RawPaper(
            arxiv_id=paper["arxiv_id"],
            primary_category=paper["primary_category"],
            latex_source="",
            figure_caption_pairs=[(f["image"], f["caption"]) for f in paper["figures"]],
        )
        indices = [f["figure_index"] for f in paper["figures"]]
        figures_in += len(indices)
        contexts, discards = build_figure_contexts(
            clean,
            raw,
            threshold=cfg.threshold,
            separator=sep,
            figure_indices=indices,
        )
        if len(contexts) + len(discards) != len(indices):
            raise AssertionError(
                f"conservation violated for {paper['arxiv_id']}: "
                f"{len(contexts)}+{len(discards)} != {len(indices)}"
            )
        for ctx in contexts:
            context_rows.append(
                {
                    "arxiv_id": ctx.arxiv_id,
                    "primary_category": paper["primary_category"],
                    "figure_index": ctx.figure_index,
                    "figure_image_ref": ctx.figure_image_ref,
                    "caption": ctx.caption,
                    "label": ctx.label,
                    "context": ctx.context,
                    "citing_paragraph_count": ctx.citing_paragraph_count,
                    "latex_caption": ctx.latex_caption,
                }
            )
        for figure_index, reason in discards:
            discard_counts[reason.kind.value] = discard_counts.get(reason.kind.value, 0) + 1
            discard_rows.append(
                {
                    "arxiv_id": paper["arxiv_id"],
                    "figure_index": figure_index,
                    "kind": reason.kind.value,
                    "detail": reason.detail,
                }
            )
    _write_jsonl(out_dir / "figure_contexts.jsonl", context_rows)
    _write_jsonl(out_dir / "discards.jsonl", discard_rows)
    manifest = {
        "stage": "extract",
        "papers": len(papers),
        "figures_in": figures_in,
        "contexts": len(context_rows),
        "discards": discard_counts,
        "config_digest": cfg.config_digest(),
    }
    _write_manifest(out_dir / "manifest_extract.json", manifest)
    return manifest


def _context_from_row(row: dict) -> FigureContext:
    return FigureContext(
        arxiv_id=row["arxiv_id"],
        figure_index=row["figure_index"],
        figure_image_ref=row["figure_image_ref"],
        caption=row["caption"],
        label=row["label"],
        context=row["context"],
        citing_paragraph_count=row["citing_paragraph_count"],
        latex_caption=row.get("latex_caption", ""),
    )


def stage_generate(cfg: RunConfig, endpoints: dict | None = None) -> dict:
    """Extract claims per figure, then one QA candidate per claim."""
    out_dir = Path(cfg.output)
    rows = _read_jsonl(_require_file(out_dir / "figure_contexts.jsonl", "extract"))
    endpoints = endpoints or build_endpoints(cfg)
    templates = load_templates(cfg.prompts)
    text_ep = endpoints["text"]

    def process(row: dict):
        ctx = _context_from_row(row)
        claims = extract_claims(ctx, text_ep, templates)
        results = []
        for claim in claims:
            results.append(
                generate_qa(
                    claim,
                    ctx,
                    text_ep,
                    templates,
                    cfg.seed,
                    primary_category=row["primary_category"],
                )
            )
        return claims, results

    if cfg.concurrency > 1:
        with ThreadPoolExecutor(max_workers=cfg.concurrency) as pool:
            outputs = list(pool.map(process, rows))
    else:
        outputs = [process(row) for row in rows]

    claim_rows: list[dict] = []
    candidate_rows: list[dict] = []
    declined_rows: list[dict] = []
    text_seen: dict[tuple[str, str], int] = {}
    for (claims, results) in outputs:
        for claim in claims:
            claim_rows.append(
                {
                    "key": claim.key,
                    "arxiv_id": claim.arxiv_id,
                    "figure_index": claim.figure_index,
                    "ordinal": claim.ordinal,
                    "text": claim.text,
                }
            )
            norm = (claim.arxiv_id, normalize_ws(claim.text).lower())
            text_seen[norm] = text_seen.get(norm, 0) + 1
        for result in results:
            if isinstance(result, Declined):
                declined_rows.append(
                    {"claim_key": result.claim_key, "reason": result.reason, "detail": result.detail}
                )
            else:
                candidate_rows.append(
                    {
                        "key": result.key,
                        "arxiv_id": result.arxiv_id,
                        "figure_index": result.figure_index,
                        "claim_ordinal": result.claim_ordinal,
                        "question": result.question,
                        "options": result.options,
                        "correct_index": result.correct_index,
                        "caption": result.caption,
                        "figure_image_ref": result.figure_image_ref,
                        "primary_category": result.primary_category,
                        "claim_text": result.claim_text,
                        "option_permutation": result.option_permutation,
                        "context_digest": result.context_digest,
                    }
                )
    duplicate_claims = sum(count - 1 for count in text_seen.values() if count > 1)
    _write_jsonl(out_dir / "claims.jsonl", claim_rows)
    _write_jsonl(out_dir / "candidates.jsonl", candidate_rows)
    _write_jsonl(out_dir / "declined.jsonl", declined_rows)
    manifest = {
        "stage": "generate",
        "contexts": len(rows),
        "claims": len(claim_rows),
        "candidates": len(candidate_rows),
        "declined": len(declined_rows),
        "duplicate_claim_texts": duplicate_claims,
        "config_digest": cfg.config_digest(),
    }
    _write_manifest(out_dir / "manifest_generate.json", manifest)
    return manifest


def _candidate_from_row(row: dict) -> QACandidate:
    return QACandidate(
        key=row["key"],
        arxiv_id=row["arxiv_id"],
        figure_index=row["figure_index"],
        claim_ordinal=row["claim_ordinal"],
        question=row["question"],
        options=row["options"],
        correct_index=row["correct_index"],
        caption=row["caption"],
        figure_image_ref=row["figure_image_ref"],
        primary_category=row["primary_category"],
        claim_text=row["claim_text"],
        option_permutation=row["option_permutation"],
        context_digest=row["context_digest"],
    )


def stage_verify(cfg: RunConfig, endpoints: dict | None = None) -> dict:
    """Run the filter cascade over all candidates, resumably."""
    out_dir = Path(cfg.output)
    candidate_rows = _read_jsonl(_require_file(out_dir / "candidates.jsonl", "generate"))
    context_rows = _read_jsonl(_require_file(out_dir / "figure_contexts.jsonl", "extract"))
    contexts = {
        f"{row['arxiv_id']}:f{row['figure_index']}": row["context"] for row in context_rows
    }
    endpoints = endpoints or build_endpoints(cfg)
    templates = load_templates(cfg.prompts)
    log = vf.VerdictLog(out_dir / "verdict_log.jsonl")

    candidates = sorted(
        (_candidate_from_row(row) for row in candidate_rows), key=lambda c: c.key
    )
    for candidate in candidates:
        figure_key = f"{candidate.arxiv_id}:f{candidate.figure_index}"
        if figure_key not in contexts:
            raise UpstreamInputError(
                f"candidate {candidate.key} has no figure context {figure_key}"
            )

    retained: list = []
    rejected_by_stage: dict[str, int] = {}
    discarded: list[dict] = []
    deferred: list = []
    processed = 0

    def run_one(candidate: QACandidate):
        context = contexts[f"{candidate.arxiv_id}:f{candidate.figure_index}"]
        return vf.run_cascade(
            candidate,
            context,
            endpoints["text"],
            endpoints["vision"],
            templates,
            log,
            require_unanimous=cfg.require_unanimous_vision,
        )

    queue = candidates
    for round_no in range(3):  # initial pass + bounded deferral retries
        next_queue = []
        for candidate in queue:
            if cfg.target_size is not None and len(retained) >= cfg.target_size:
                break
            try:
                outcome = run_one(candidate)
            except EndpointUnavailable as exc:
                logger.warning("deferring %s: %s", candidate.key, exc)
                next_queue.append(candidate)
                continue
            except ImageUnreadable as exc:
                discarded.append({"key": candidate.key, "reason": str(exc)})
                processed += 1
                continue
            processed += 1
            if outcome.status == "retained":
                retained.append(outcome.record)
            else:
                rejected_by_stage[outcome.rejected_stage] = (
                    rejected_by_stage.get(outcome.rejected_stage, 0) + 1
                )
        queue = next_queue
        if not queue:
            break

    retained.sort(key=lambda r: r.key)
    ds.write_dataset(retained, out_dir / "retained.jsonl")
    _write_jsonl(out_dir / "verify_discards.jsonl", discarded)
    manifest = {
        "stage": "verify",
        "candidates": len(candidates),
        "processed": processed,
        "retained": len(retained),
        "rejected_by_stage": dict(sorted(rejected_by_stage.items())),
        "discarded": len(discarded),
        "deferred": len(queue),
        "config_digest": cfg.config_digest(),
    }
    _write_manifest(out_dir / "manifest_verify.json", manifest)
    return manifest


def stage_annotate(cfg: RunConfig, endpoints: dict | None = None) -> dict:
    """Add closed-vocabulary figure-type and question-type labels."""
    out_dir = Path(cfg.output)
    records = ds.read_dataset(_require_file(out_dir / "retained.jsonl", "verify"))
    endpoints = endpoints or build_endpoints(cfg)
    templates = load_templates(cfg.prompts)

    deferred = 0
    for record in records:
        try:
            record.figure_type = ds.annotate_taxonomy(
                record, "figure_type", endpoints["annotator_vision"], templates
            )
        except EndpointUnavailable:
            deferred += 1
        try:
            record.question_type = ds.annotate_taxonomy(
                record, "question_type", endpoints["annotator_text"], templates
            )
        except EndpointUnavailable:
            deferred += 1
    ds.write_dataset(records, out_dir / "annotated.jsonl")
    manifest = {
        "stage": "annotate",
        "records": len(records),
        "figure_type_labeled": sum(1 for r in records if r.figure_type is not None),
        "question_type_labeled": sum(1 for r in records if r.question_type is not None),
        "deferred_calls": deferred,
        "config_digest": cfg.config_digest(),
    }
    _write_manifest(out_dir / "manifest_annotate.json", manifest)
    return manifest


def stage_evaluate(cfg: RunConfig, endpoints: dict | None = None) -> dict:
    """Zero-shot evaluation of the configured model over the dataset."""
    out_dir = Path(cfg.output)
    if cfg.eval_dataset:
        dataset_path = Path(cfg.eval_dataset)
        if not dataset_path.is_file():
            raise UpstreamInputError(f"evaluation dataset not found: {dataset_path}")
    else:
        annotated = out_dir / "annotated.jsonl"
        dataset_path = annotated if annotated.is_file() else out_dir / "retained.jsonl"
        _require_file(dataset_path, "verify")
    records = ds.read_dataset(dataset_path)
    endpoints = endpoints or build_endpoints(cfg)
    templates = load_templates(cfg.prompts)
    result = evaluate(endpoints["eval"], records, templates)
    with open(out_dir / "eval_summary.json", "w", encoding="utf-8", newline="\n") as fh:
        json.dump(result.to_json_dict(), fh, indent=2, sort_keys=True, ensure_ascii=False)
        fh.write("\n")
    report = format_report(result)
    (out_dir / "eval_report.txt").write_text(report + "\n", encoding="utf-8")
    return {
        "stage": "evaluate",
        "dataset": str(dataset_path),
        "evaluated": result.overall_total,
        "unevaluated": result.unevaluated,
        "overall_accuracy": result.overall_accuracy,
        "report": report,
    }


def stage_stats(cfg: RunConfig) -> dict:
    """Funnel accounting plus an independent verdict-log replay."""
    out_dir = Path(cfg.output)
    prepare_manifest = json.loads(
        _require_file(out_dir / "manifest_prepare.json", "prepare").read_text(encoding="utf-8")
    )
    claims = len(_read_jsonl(_require_file(out_dir / "claims.jsonl", "generate")))
    candidates = len(_read_jsonl(out_dir / "candidates.jsonl"))
    log_path = _require_file(out_dir / "verdict_log.jsonl", "verify")
    retained_path = _require_file(out_dir / "retained.jsonl", "verify")
    log_rows = _read_jsonl(log_path)
    after_text = sum(
        1
        for row in log_rows
        if row["filter"] == vf.FILTER_VISDEP_VISION and row["passed"]
    )
    retained = len(_read_jsonl(retained_path))

    funnel = None
    table = "funnel unavailable: no claims were extracted"
    if claims > 0:
        stats = ds.compute_funnel(
            papers=prepare_manifest["papers_prepared"],
            claims=claims,
            qa_generated=candidates,
            after_text_filtering=after_text,
            after_vision_filtering=retained,
        )
        funnel = stats.to_json_dict()
        table = stats.format_table()

    report = replay_verdicts(log_path, retained_path)
    extract_manifest_path = out_dir / "manifest_extract.json"
    discards = {}
    if extract_manifest_path.is_file():
        discards = json.loads(extract_manifest_path.read_text(encoding="utf-8")).get(
            "discards", {}
        )
    payload = {
        "funnel": funnel,
        "replay": {"ok": report.ok, "problems": report.problems},
        "extraction_discards": discards,
        "config_digest": cfg.config_digest(),
    }
    with open(out_dir / "stats.json", "w", encoding="utf-8", newline="\n") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True, ensure_ascii=False)
        fh.write("\n")
    return {
        "stage": "stats",
        "funnel": funnel,
        "replay_ok": report.ok,
        "table": table,
        "replay_summary": report.summary(),
    }


STAGE_FUNCTIONS = {
    "prepare": stage_prepare,
    "extract": stage_extract,
    "generate": stage_generate,
    "verify": stage_verify,
    "annotate": stage_annotate,
    "stats": stage_stats,
}


def run_stages(cfg: RunConfig, stages: list[str] | None = None) -> list[dict]:
    """Run the named stages (default: all) in canonical order."""
    selected = list(STAGE_ORDER) if not stages else stages
    unknown = [s for s in selected if s not in STAGE_FUNCTIONS]
    if unknown:
        raise ConfigError(f"unknown stages: {unknown}")
    ordered = [s for s in STAGE_ORDER if s in selected]
    endpoints = None
    manifests = []
    for name in ordered:
        fn = STAGE_FUNCTIONS[name]
        if name in ("generate", "verify", "annotate"):
            if endpoints is None:
                endpoints = build_endpoints(cfg)
            manifests.append(fn(cfg, endpoints))
        else:
            manifests.append(fn(cfg))
    return manifests
