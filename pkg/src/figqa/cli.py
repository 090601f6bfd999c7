"""Command-line interface: one subcommand per pipeline stage.

Exit codes: 0 success, 1 evaluation over the unevaluated threshold,
2 configuration error, 3 upstream-input error, 4 endpoint auth error.
"""

from __future__ import annotations

import functools
import json
import sys

import click

from .errors import AuthError, ConfigError, SchemaViolation, UpstreamInputError
from .pipeline import STAGE_ORDER, RunConfig, run_stages
from . import pipeline

EXIT_EVAL_THRESHOLD = 1
EXIT_CONFIG = 2
EXIT_UPSTREAM = 3
EXIT_AUTH = 4


def _build_config(config_path: str | None, overrides: dict) -> RunConfig:
    data: dict = {}
    if config_path:
        data.update(RunConfig.from_yaml(config_path).__dict__)
    for key, value in overrides.items():
        if value is not None:
            data[key] = value
    if "output" not in data or not data["output"]:
        raise ConfigError("an output directory is required (--output or config file)")
    return RunConfig.from_dict(data)


def _handle_errors(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except ConfigError as exc:
            click.echo(f"config error: {exc}", err=True)
            sys.exit(EXIT_CONFIG)
        except (UpstreamInputError, SchemaViolation) as exc:
            click.echo(f"input error: {exc}", err=True)
            sys.exit(EXIT_UPSTREAM)
        except AuthError as exc:
            click.echo(f"auth error: {exc}", err=True)
            sys.exit(EXIT_AUTH)

    return wrapper


def _common_options(fn):
    options = [
        click.option("--config", "config_path", type=click.Path(), default=None,
                     help="YAML run configuration."),
        click.option("--output", type=click.Path(), default=None,
                     help="Run output directory."),
        click.option("--corpus", type=click.Path(), default=None,
                     help="Figure-caption corpus (JSONL)."),
        click.option("--latex-cache", type=click.Path(), default=None,
                     help="Directory of <arxiv_id>.tex sources."),
        click.option("--prompts", type=click.Path(), default=None,
                     help="Prompt template directory (default: packaged)."),
        click.option("--seed", type=int, default=None, help="Run seed."),
        click.option("--threshold", type=float, default=None,
                     help="Caption match threshold (default 0.9)."),
        click.option("--concurrency", type=int, default=None,
                     help="Worker pool size."),
        click.option("--mock", "mock_script", type=click.Path(), default=None,
                     help="Mock-backend script (JSON digest map)."),
    ]
    for option in reversed(options):
        fn = option(fn)
    return fn


def _config_from_params(config_path, **params) -> RunConfig:
    return _build_config(config_path, params)


@click.group(help="Generate and verify multiple-choice QA about scientific figures.")
def main():
    pass


@main.command(help="Clean LaTeX sources and bind figure-caption rows.")
@_common_options
@_handle_errors
def prepare(config_path, **params):
    manifest = pipeline.stage_prepare(_config_from_params(config_path, **params))
    click.echo(
        f"prepared {manifest['papers_prepared']} of {manifest['papers_in']} papers "
        f"({len(manifest['skipped'])} skipped)"
    )


@main.command(help="Extract figure contexts and typed discards.")
@_common_options
@_handle_errors
def extract(config_path, **params):
    manifest = pipeline.stage_extract(_config_from_params(config_path, **params))
    click.echo(
        f"extracted {manifest['contexts']} contexts from {manifest['figures_in']} figures "
        f"(discards: {json.dumps(manifest['discards'], sort_keys=True)})"
    )


@main.command(help="Extract claims and generate QA candidates.")
@_common_options
@_handle_errors
def generate(config_path, **params):
    manifest = pipeline.stage_generate(_config_from_params(config_path, **params))
    click.echo(
        f"generated {manifest['candidates']} candidates from {manifest['claims']} claims "
        f"({manifest['declined']} declined)"
    )


@main.command(help="Run the verification filter cascade.")
@_common_options
@_handle_errors
def verify(config_path, **params):
    manifest = pipeline.stage_verify(_config_from_params(config_path, **params))
    click.echo(
        f"retained {manifest['retained']} of {manifest['candidates']} candidates "
        f"(rejected: {json.dumps(manifest['rejected_by_stage'], sort_keys=True)})"
    )


@main.command(help="Annotate figure-type and question-type labels.")
@_common_options
@_handle_errors
def annotate(config_path, **params):
    manifest = pipeline.stage_annotate(_config_from_params(config_path, **params))
    click.echo(
        f"annotated {manifest['records']} records "
        f"(figure type {manifest['figure_type_labeled']}, "
        f"question type {manifest['question_type_labeled']})"
    )


@main.command(help="Zero-shot evaluation over a verified dataset.")
@_common_options
@click.option("--dataset", "eval_dataset", type=click.Path(), default=None,
              help="Dataset to evaluate (default: annotated, then retained).")
@click.option("--unevaluated-threshold", type=int, default=None,
              help="Fail when more than this many items stay unevaluated.")
@_handle_errors
def evaluate(config_path, unevaluated_threshold, **params):
    cfg = _config_from_params(config_path, **params)
    if unevaluated_threshold is not None:
        cfg.unevaluated_threshold = unevaluated_threshold
    summary = pipeline.stage_evaluate(cfg)
    click.echo(summary["report"])
    if summary["unevaluated"] > cfg.unevaluated_threshold:
        click.echo(
            f"unevaluated items ({summary['unevaluated']}) exceed threshold "
            f"({cfg.unevaluated_threshold})",
            err=True,
        )
        sys.exit(EXIT_EVAL_THRESHOLD)


@main.command(help="Funnel statistics plus verdict-log replay.")
@_common_options
@_handle_errors
def stats(config_path, **params):
    summary = pipeline.stage_stats(_config_from_params(config_path, **params))
    click.echo(summary["table"])
    click.echo(summary["replay_summary"])
    if not summary["replay_ok"]:
        sys.exit(EXIT_UPSTREAM)


@main.command(name="run", help="Run multiple stages in order (default: all).")
@_common_options
@click.option("--stage", "stages", multiple=True,
              type=click.Choice(STAGE_ORDER), help="Stage to run; repeatable.")
@_handle_errors
def run_command(config_path, stages, **params):
    cfg = _config_from_params(config_path, **params)
    manifests = run_stages(cfg, list(stages) or None)
    for manifest in manifests:
        name = manifest.get("stage", "?")
        if name == "stats":
            click.echo(manifest["table"])
            click.echo(manifest["replay_summary"])
        else:
            click.echo(f"stage {name}: done")


if __name__ == "__main__":
    main()
