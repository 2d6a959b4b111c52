"""Command-line surface for the pipeline.

Configuration layers, lowest precedence first: built-in defaults, then a
JSON config file, then STRINGSMITH_* environment variables, then flags.
Every command writes the resolved config next to its outputs before doing
any work, so a run directory is self-describing.
"""

from __future__ import annotations

import dataclasses
import json
import os
import random
import shlex
from dataclasses import dataclass
from pathlib import Path

import click

from .catalog import (CompositionConfig, full_task_set, read_tasks,
                      write_tasks)
from .client import (ChatClientConfig, EmptyMockClient, HalfCorrectMockClient,
                     HttpChatClient, OracleMockClient)
from .dataset import (DATASET_KINDS, QASample, SplitManifest, build_dataset,
                      post_process, read_jsonl, split, verify_answers,
                      write_jsonl)
from .harness import (SandboxClient, report_from_records, run_eval)
from .samplers import bundled_corpus, load_corpus
from .sft import MixPlan, audit_records, export_sft, mix_corpora, write_sft
from .tokenization import (BUNDLED_TOKENIZERS, char_token_ratio,
                           load_tokenizer)

_ENV_PREFIX = "STRINGSMITH_"


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    out_dir: str = "out"
    corpus_path: str = ""  # empty selects the bundled corpus
    kinds: tuple = DATASET_KINDS
    n_per_template: int = 5
    len_lo: int = 20
    len_hi: int = 60
    split_ratio: float = 0.2
    depth_min: int = 2
    depth_max: int = 4
    target_count: int = 1462
    endpoint: str = ""
    model: str = ""
    auth_env: str = "STRINGSMITH_API_KEY"  # name only; never the secret
    mock: str = ""  # oracle | empty | half, for offline runs
    strategy: str = "raw"
    parallelism: int = 1
    requests_per_minute: int = 60
    max_retries: int = 3
    timeout_s: float = 60.0
    sandbox_cmd: str = ""
    tokenizers: tuple = BUNDLED_TOKENIZERS
    ratio_draws: int = 500


def _coerce(raw: str, default) -> object:
    if isinstance(default, bool):
        return raw.lower() in ("1", "true", "yes", "on")
    if isinstance(default, int):
        return int(raw)
    if isinstance(default, float):
        return float(raw)
    if isinstance(default, tuple):
        return tuple(part.strip() for part in raw.split(",") if part.strip())
    return raw


def resolve_config(config_path, **overrides) -> RunConfig:
    defaults = RunConfig()
    values = dataclasses.asdict(defaults)
    if config_path:
        loaded = json.loads(Path(config_path).read_text("utf-8"))
        unknown = sorted(set(loaded) - set(values))
        if unknown:
            raise click.ClickException(f"unknown config keys: {unknown}")
        values.update(loaded)
    for key in values:
        raw = os.environ.get(_ENV_PREFIX + key.upper())
        if raw is not None:
            values[key] = _coerce(raw, getattr(defaults, key))
    values.update({k: v for k, v in overrides.items() if v is not None})
    for key in ("kinds", "tokenizers"):
        values[key] = tuple(values[key])
    for kind in values["kinds"]:
        if kind not in DATASET_KINDS:
            raise click.ClickException(f"unknown dataset kind {kind!r}")
    return RunConfig(**values)


def _prepare(cfg: RunConfig, command: str) -> Path:
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    snapshot = {"command": command, **dataclasses.asdict(cfg)}
    (out / "config_snapshot.json").write_text(
        json.dumps(snapshot, indent=2, sort_keys=True) + "\n", "utf-8")
    return out


def _write_report(out: Path, name: str, payload: dict) -> None:
    (out / name).write_text(
        json.dumps(payload, indent=2, sort_keys=True) + "\n", "utf-8")


def _corpus(cfg: RunConfig):
    return load_corpus(cfg.corpus_path) if cfg.corpus_path else bundled_corpus()


def _require(path: Path, hint: str) -> Path:
    if not path.exists():
        raise click.ClickException(f"missing prerequisite {path} (run `{hint}` first)")
    return path


def _load_tasks(out: Path):
    tasks_file = out / "tasks.jsonl"
    return read_tasks(tasks_file) if tasks_file.exists() else full_task_set()


def _common(f):
    for option in (
        click.option("--config", "config_path",
                     type=click.Path(exists=True, dir_okay=False), default=None,
                     help="JSON config file (lowest-precedence overrides)."),
        click.option("--out-dir", default=None, help="Run directory."),
        click.option("--seed", type=int, default=None, help="Global seed."),
    ):
        f = option(f)
    return f


@click.group()
def main() -> None:
    """Regenerate, grade, and analyze string-manipulation benchmarks."""


@main.command("gen-tasks")
@_common
@click.option("--depth", nargs=2, type=int, default=None, metavar="LO HI",
              help="Composite depth range (default 2 4).")
@click.option("--target", type=int, default=None,
              help="Number of composite tasks (default 1462).")
def gen_tasks(config_path, out_dir, seed, depth, target) -> None:
    """Generate the atomic + composite task set."""
    overrides = {"out_dir": out_dir, "seed": seed, "target_count": target}
    if depth is not None:
        overrides.update(depth_min=depth[0], depth_max=depth[1])
    cfg = resolve_config(config_path, **overrides)
    out = _prepare(cfg, "gen-tasks")
    comp = CompositionConfig(seed=cfg.seed,
                             depth_range=(cfg.depth_min, cfg.depth_max),
                             target_count=cfg.target_count)
    tasks = full_task_set(comp)
    write_tasks(tasks, out / "tasks.jsonl")
    by_depth: dict[str, int] = {}
    for t in tasks:
        if t.origin == "composite":
            by_depth[str(t.depth)] = by_depth.get(str(t.depth), 0) + 1
    report = {"total": len(tasks),
              "atomic": sum(t.origin == "atomic" for t in tasks),
              "composite": sum(t.origin == "composite" for t in tasks),
              "composite_by_depth": by_depth,
              "by_output_kind": {k: sum(t.output_kind.value == k for t in tasks)
                                 for k in ("str", "int", "bool", "str_list")}}
    _write_report(out, "tasks_report.json", report)
    click.echo(f"wrote {len(tasks)} tasks to {out / 'tasks.jsonl'}")


@main.command()
@_common
@click.option("--kind", "only_kind", type=click.Choice(DATASET_KINDS),
              default=None, help="Build a single dataset kind.")
@click.option("--n-per-template", type=int, default=None)
def build(config_path, out_dir, seed, only_kind, n_per_template) -> None:
    """Build QA datasets with executed ground truth."""
    cfg = resolve_config(config_path, out_dir=out_dir, seed=seed,
                         n_per_template=n_per_template,
                         kinds=(only_kind,) if only_kind else None)
    out = _prepare(cfg, "build")
    _require(out / "tasks.jsonl", "stringsmith gen-tasks")
    tasks = read_tasks(out / "tasks.jsonl")
    corpus = _corpus(cfg)
    for kind in cfg.kinds:
        result = build_dataset(kind, tasks=tasks, corpus=corpus,
                               len_range=(cfg.len_lo, cfg.len_hi),
                               n_per_template=cfg.n_per_template,
                               seed=cfg.seed)
        samples = post_process(result.samples, tasks=tasks)
        mismatches = verify_answers(samples, tasks=tasks)
        if mismatches:
            raise click.ClickException(
                f"{kind}: {mismatches} answers failed re-verification")
        write_jsonl(samples, out / f"dataset_{kind}.jsonl")
        report = result.report.as_dict()
        report["after_post_process"] = len(samples)
        _write_report(out, f"build_report_{kind}.json", report)
        click.echo(f"{kind}: {len(samples)} samples")


@main.command("split")
@_common
@click.option("--ratio", type=float, default=None, help="Test share (default 0.2).")
def split_cmd(config_path, out_dir, seed, ratio) -> None:
    """Split each dataset into train/test with full task coverage in test."""
    cfg = resolve_config(config_path, out_dir=out_dir, seed=seed,
                         split_ratio=ratio)
    out = _prepare(cfg, "split")
    for kind in cfg.kinds:
        source = _require(out / f"dataset_{kind}.jsonl", "stringsmith build")
        samples = read_jsonl(source)
        manifest = split(samples, ratio=cfg.split_ratio, seed=cfg.seed)
        test_ids = set(manifest.test_sample_ids)
        write_jsonl([s for s in samples if s.sample_id in test_ids],
                    out / f"test_{kind}.jsonl")
        write_jsonl([s for s in samples if s.sample_id not in test_ids],
                    out / f"train_{kind}.jsonl")
        _write_report(out, f"split_{kind}.json", manifest.as_dict())
        click.echo(f"{kind}: test {len(test_ids)}, "
                   f"train {len(samples) - len(test_ids)}")


def _make_client(cfg: RunConfig, samples):
    if cfg.mock:
        if cfg.mock == "oracle":
            return OracleMockClient(samples)
        if cfg.mock == "empty":
            return EmptyMockClient()
        if cfg.mock == "half":
            return HalfCorrectMockClient(samples)
        raise click.ClickException(f"unknown mock {cfg.mock!r}")
    if not cfg.endpoint or not cfg.model:
        raise click.ClickException(
            "eval needs --mock, or endpoint and model in the config")
    return HttpChatClient(ChatClientConfig(
        endpoint=cfg.endpoint, model=cfg.model, auth_env=cfg.auth_env,
        max_retries=cfg.max_retries,
        requests_per_minute=cfg.requests_per_minute,
        timeout_s=cfg.timeout_s, temperature=0.0))


@main.command("eval")
@_common
@click.option("--strategy", type=click.Choice(("raw", "cot", "pot")), default=None)
@click.option("--mock", type=click.Choice(("oracle", "empty", "half")), default=None)
@click.option("--parallelism", type=int, default=None)
@click.option("--full", is_flag=True, default=False,
              help="Evaluate whole datasets instead of the test split.")
def eval_cmd(config_path, out_dir, seed, strategy, mock, parallelism, full) -> None:
    """Run a model (or mock) over the benchmark and grade it."""
    cfg = resolve_config(config_path, out_dir=out_dir, seed=seed,
                         strategy=strategy, mock=mock, parallelism=parallelism)
    out = _prepare(cfg, "eval")
    sandbox = None
    if cfg.strategy == "pot":
        if not cfg.sandbox_cmd:
            raise click.ClickException("pot strategy needs sandbox_cmd")
        sandbox = SandboxClient(shlex.split(cfg.sandbox_cmd))
        sandbox.health()
    all_records = []
    model_id = ""
    for kind in cfg.kinds:
        name = f"dataset_{kind}.jsonl" if full else f"test_{kind}.jsonl"
        source = _require(out / name,
                          "stringsmith build" if full else "stringsmith split")
        samples = read_jsonl(source)
        client = _make_client(cfg, samples)
        model_id = client.model_id
        result = run_eval(client, samples, cfg.strategy,
                          parallelism=cfg.parallelism,
                          out_path=out / f"eval_records_{kind}.jsonl",
                          sandbox=sandbox)
        all_records.extend(result.records)
    report = report_from_records(all_records, model_id=model_id,
                                 strategy=cfg.strategy)
    _write_report(out, "eval_report.json", report.as_dict())
    click.echo(report.format_table())


@main.command()
@_common
@click.option("--draws", type=int, default=None,
              help="Strings to sample per population (default 500).")
def analyze(config_path, out_dir, seed, draws) -> None:
    """Character-per-token ratios of each tokenizer over each population."""
    cfg = resolve_config(config_path, out_dir=out_dir, seed=seed,
                         ratio_draws=draws)
    out = _prepare(cfg, "analyze")
    from .dataset import _operand_source
    corpus = _corpus(cfg)
    pulls: dict[str, list[str]] = {}
    for kind in cfg.kinds:
        rng = random.Random(f"{cfg.seed}:{kind}")
        source = _operand_source(kind, corpus, (cfg.len_lo, cfg.len_hi), rng)
        pulls[kind] = [source() for _ in range(cfg.ratio_draws)]
    rows = []
    for name in cfg.tokenizers:
        model = load_tokenizer(name)
        rows.append({"tokenizer": model.name,
                     **{k: round(char_token_ratio(model, pulls[k]), 4)
                        for k in cfg.kinds}})
    _write_report(out, "token_report.json",
                  {"draws": cfg.ratio_draws, "seed": cfg.seed, "rows": rows})
    headers = ["tokenizer", *cfg.kinds]
    widths = [max(len(h), *(len(str(r.get(h, r.get("tokenizer")))) for r in rows))
              for h in headers]
    line = "  ".join(h.ljust(w) for h, w in zip(headers, widths))
    click.echo(line)
    for r in rows:
        cells = [r["tokenizer"].ljust(widths[0])]
        cells += [f"{r[k]:.4f}".rjust(w) for k, w in zip(cfg.kinds, widths[1:])]
        click.echo("  ".join(cells))


@main.command("export-sft")
@_common
@click.option("--aux", "aux_specs", multiple=True, metavar="PATH:WEIGHT",
              help="Auxiliary corpus to mix in (repeatable).")
@click.option("--self-weight", type=float, default=1.0, show_default=True,
              help="Weight of the exported records in the mix.")
def export_sft_cmd(config_path, out_dir, seed, aux_specs, self_weight) -> None:
    """Export the train split as program-style instruction-tuning records."""
    cfg = resolve_config(config_path, out_dir=out_dir, seed=seed)
    out = _prepare(cfg, "export-sft")
    tasks = _load_tasks(out)
    samples: list[QASample] = []
    for kind in cfg.kinds:
        source = _require(out / f"train_{kind}.jsonl", "stringsmith split")
        samples.extend(read_jsonl(source))
    records = export_sft(samples, tasks=tasks)
    failures = audit_records(records)
    if failures:
        raise click.ClickException(f"{failures} records failed the execution audit")
    train_path = out / "sft_train.jsonl"
    write_sft(records, train_path)
    report = {"records": len(records), "audit_failures": failures,
              "per_kind": {k: sum(r.sample_id.startswith(k + ":") for r in records)
                           for k in cfg.kinds}}
    if aux_specs:
        sources = [(str(train_path), self_weight)]
        for spec in aux_specs:
            path, _, weight = spec.rpartition(":")
            if not path:
                raise click.ClickException(f"bad --aux {spec!r}, want PATH:WEIGHT")
            sources.append((path, float(weight)))
        _, mix_report = mix_corpora(MixPlan(sources=tuple(sources), seed=cfg.seed),
                                    out_path=out / "sft_mixed.jsonl")
        report["mix"] = mix_report.as_dict()
    _write_report(out, "sft_report.json", report)
    click.echo(f"exported {len(records)} records"
               + (f", mixed into {out / 'sft_mixed.jsonl'}" if aux_specs else ""))


if __name__ == "__main__":
    main()
