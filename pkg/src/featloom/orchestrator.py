"""The iteration driver: generation, filtering, extraction, composition,
assessment, feedback, and resumable run-state persistence.

One iteration executes, in order: assessment of the current table (skipped on
the very first pass), feedback construction from the best model, direct and
retrieval-guided generation, feature-to-code translation through the filter
chain and execution verification, then operator composition. State commits
happen only at iteration boundaries, so an interrupted run resumes to the
same final state.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .composer import compose_pairs, compute_composite, rank_columns, CompositeSpec
from .config import RunConfig
from .core import (
    Dataset,
    FeatureDescriptor,
    FeatureTable,
    IterationState,
    append_feature_columns,
    load_dataset,
    read_table_csv,
    split_train_validation,
    write_table_csv,
)
from .dsl import GRAMMAR_TEXT, catalog_help, check_function, parse_program
from .errors import ConfigError, DataError, ProviderError
from .evaluator import assess_iteration, deserialize_model
from .extraction import extract_table
from .feedback import build_feedback_prompt
from .filters import run_filter_chain
from .knowledge import (
    HashingEmbedder,
    KnowledgeIndex,
    LocalDirectoryCorpus,
    build_index,
    generate_keywords,
    query_top_chunks,
)
from .llm import (
    HttpChatProvider,
    ReplayProvider,
    generate_features_contextual,
    generate_features_direct,
    translate_to_featurescript,
)
from .prompts import TEMPLATE_VERSION

logger = logging.getLogger(__name__)

STATE_FILE = "state.json"
TABLE_FILE = "table.csv"
MODEL_FILE = "best_model.bin"
INDEX_FILE = "kb_index.bin"

# The general statistical initial feature set: eight time-domain summaries
# plus seven spectral ones per channel.
_TIME_FEATURES = (
    ("mean", "mean({ch})"),
    ("std", "std({ch})"),
    ("max", "max({ch})"),
    ("skewness", "skewness({ch})"),
    ("kurtosis", "kurtosis({ch})"),
    ("q25", "quantile({ch}, 0.25)"),
    ("q50", "quantile({ch}, 0.5)"),
    ("q75", "quantile({ch}, 0.75)"),
)
_SPECTRAL_FEATURES = (
    ("spectral_centroid", "spectral_centroid({ch}, {fs})"),
    ("spectral_spread", "spectral_spread({ch}, {fs})"),
    ("mean_frequency", "mean_frequency({ch}, {fs})"),
    ("peak_frequency", "peak_frequency({ch}, {fs})"),
    ("spectral_q25", "spectral_quantile({ch}, {fs}, 0.25)"),
    ("spectral_q50", "spectral_quantile({ch}, {fs}, 0.5)"),
    ("spectral_q75", "spectral_quantile({ch}, {fs}, 0.75)"),
)


def initial_program_text(dataset: Dataset) -> str:
    """FeatureScript source for the built-in initial statistical feature set."""
    lines = []
    for ch in dataset.channel_schema:
        fs = repr(float(dataset.windows[0].channels[ch].sample_rate))
        for suffix, body in _TIME_FEATURES + _SPECTRAL_FEATURES:
            expr = body.format(ch=ch, fs=fs)
            lines.append(f"fn {ch}_{suffix}({ch}) -> scalar {{ {expr} }}")
    return "\n".join(lines) + "\n"


@dataclass
class RunState:
    """Everything a run persists; state.json plus table.csv reconstruct it."""

    core: IterationState
    split_train: tuple[int, ...]
    split_val: tuple[int, ...]
    label_space: tuple[str, ...]
    keywords: list[str] = field(default_factory=list)
    realizations: dict[str, dict] = field(default_factory=dict)
    programs: dict[str, str] = field(default_factory=dict)
    history: list[dict] = field(default_factory=list)
    verdict_log: list[dict] = field(default_factory=list)
    extraction_log: list[dict] = field(default_factory=list)
    composite_log: list[dict] = field(default_factory=list)
    append_log: list[dict] = field(default_factory=list)
    transcript_log: list[dict] = field(default_factory=list)
    feedback_texts: list[str] = field(default_factory=list)
    transcript_cursor: int = 0
    template_version: str = TEMPLATE_VERSION
    provider_name: str = "replay"
    finished: bool = False

    def to_json_obj(self) -> dict:
        best = None
        if self.core.best_auroc is not None:
            best = {
                "auroc": self.core.best_auroc,
                "names": list(self.core.best_names),
                "report": self.core.best_report,
                "has_model": self.core.best_model_blob is not None,
            }
        return {
            "format": "featloom-state",
            "version": 1,
            "iteration": self.core.iteration,
            "stride": self.core.stride,
            "max_iterations": self.core.max_iterations,
            "seed": self.core.rng_seed,
            "split_train": list(self.split_train),
            "split_val": list(self.split_val),
            "label_space": list(self.label_space),
            "keywords": self.keywords,
            "descriptors": [
                {
                    "name": d.name,
                    "description": d.description,
                    "rationale": d.rationale,
                    "channels": list(d.channels),
                    "source": d.source,
                    "origin_iteration": d.origin_iteration,
                }
                for d in self.core.candidates.values()
            ],
            "realizations": self.realizations,
            "programs": self.programs,
            "best": best,
            "history": self.history,
            "verdict_log": self.verdict_log,
            "extraction_log": self.extraction_log,
            "composite_log": self.composite_log,
            "append_log": self.append_log,
            "transcript_log": self.transcript_log,
            "feedback_texts": self.feedback_texts,
            "transcript_cursor": self.transcript_cursor,
            "template_version": self.template_version,
            "provider_name": self.provider_name,
            "finished": self.finished,
        }


def _state_from_json(obj: dict, table: FeatureTable, blob: bytes | None) -> RunState:
    if obj.get("format") != "featloom-state":
        raise DataError("state.json is not a featloom state file")
    candidates = {}
    for rec in obj["descriptors"]:
        candidates[rec["name"]] = FeatureDescriptor(
            name=rec["name"],
            description=rec["description"],
            rationale=rec["rationale"],
            channels=tuple(rec["channels"]),
            source=rec["source"],
            origin_iteration=rec["origin_iteration"],
        )
    core = IterationState(
        candidates=candidates,
        table=table,
        stride=obj["stride"],
        iteration=obj["iteration"],
        max_iterations=obj["max_iterations"],
        rng_seed=obj["seed"],
    )
    best = obj.get("best")
    if best is not None:
        core.best_auroc = best["auroc"]
        core.best_names = tuple(best["names"])
        core.best_report = best["report"]
        core.best_model_blob = blob
    state = RunState(
        core=core,
        split_train=tuple(obj["split_train"]),
        split_val=tuple(obj["split_val"]),
        label_space=tuple(obj["label_space"]),
        keywords=list(obj["keywords"]),
        realizations=obj["realizations"],
        programs=obj["programs"],
        history=obj["history"],
        verdict_log=obj["verdict_log"],
        extraction_log=obj["extraction_log"],
        composite_log=obj["composite_log"],
        append_log=obj["append_log"],
        transcript_log=obj["transcript_log"],
        feedback_texts=obj["feedback_texts"],
        transcript_cursor=obj["transcript_cursor"],
        template_version=obj["template_version"],
        provider_name=obj["provider_name"],
        finished=obj["finished"],
    )
    return state


def _write_ndjson(path: Path, records) -> None:
    with path.open("w", encoding="utf-8", newline="\n") as fh:
        for rec in records:
            fh.write(json.dumps(rec, sort_keys=True) + "\n")


def commit_state(state: RunState, run_dir: Path, labels) -> None:
    """Persist the whole run state; state.json lands last so a partial write
    never looks committed."""
    run_dir.mkdir(parents=True, exist_ok=True)
    write_table_csv(state.core.table, labels, run_dir / TABLE_FILE)
    if state.core.best_model_blob is not None:
        (run_dir / MODEL_FILE).write_bytes(state.core.best_model_blob)
    _write_ndjson(run_dir / "verdicts.ndjson", state.verdict_log)
    _write_ndjson(run_dir / "extraction.ndjson", state.extraction_log)
    _write_ndjson(run_dir / "composites.ndjson", state.composite_log)
    _write_ndjson(run_dir / "eval_history.ndjson", state.history)
    _write_ndjson(run_dir / "transcript_out.ndjson", state.transcript_log)
    for i, text in enumerate(state.feedback_texts):
        (run_dir / f"feedback_{i}.txt").write_text(text, encoding="utf-8")
    tmp = run_dir / (STATE_FILE + ".tmp")
    tmp.write_text(json.dumps(state.to_json_obj(), sort_keys=True, indent=1), encoding="utf-8")
    tmp.replace(run_dir / STATE_FILE)


def load_state(run_dir: Path) -> RunState:
    state_path = run_dir / STATE_FILE
    if not state_path.exists():
        raise DataError(f"no run state at {state_path}")
    obj = json.loads(state_path.read_text(encoding="utf-8"))
    table, _labels = read_table_csv(run_dir / TABLE_FILE)
    blob = None
    if (run_dir / MODEL_FILE).exists():
        blob = (run_dir / MODEL_FILE).read_bytes()
    return _state_from_json(obj, table, blob)


def make_provider(config: RunConfig):
    if config.provider == "replay":
        return ReplayProvider.from_file(config.replay_file)
    return HttpChatProvider(config.endpoint, config.model, timeout=60.0)


def _resolve_index(config: RunConfig, run_dir: Path, embedder) -> KnowledgeIndex:
    run_index = run_dir / INDEX_FILE
    if run_index.exists():
        return KnowledgeIndex.load(run_index)
    if config.index_path and Path(config.index_path).exists():
        index = KnowledgeIndex.load(config.index_path)
    elif config.corpus_dir:
        index = build_index(
            LocalDirectoryCorpus(config.corpus_dir), embedder, config.chunk_target, config.chunk_overlap
        )
    else:
        index = KnowledgeIndex(embedder.dim, embedder.name, [])
    run_dir.mkdir(parents=True, exist_ok=True)
    index.save(run_index)
    index.write_manifest(run_dir / "index_manifest.ndjson")
    return index


def _collect_audit(state: RunState, provider) -> None:
    audit = getattr(provider, "audit", None)
    if audit:
        state.transcript_log.extend(audit)
        audit.clear()
    transcript = getattr(provider, "transcript", None)
    if transcript is not None:
        state.transcript_cursor = transcript.cursor


def _model_seed(config: RunConfig, iteration: int) -> int:
    return config.seed + iteration


def _assess(state: RunState, config: RunConfig, labels, iteration: int) -> None:
    state.core, report, improved = assess_iteration(
        state.core,
        labels,
        state.split_train,
        state.split_val,
        _model_seed(config, iteration),
        label_space=state.label_space,
        grid=config.target_grid,
    )
    state.history.append(
        {
            "iteration": iteration,
            "assessed": True,
            "auroc": report.auroc,
            "accuracy": report.accuracy,
            "target_count": report.target_count,
            "n_columns": len(state.core.table.column_names),
            "improved": improved,
            "best_auroc": state.core.best_auroc,
        }
    )


def _selected_descriptors(state: RunState):
    return [state.core.candidates[name] for name in state.core.best_names if name in state.core.candidates]


def _register_program_columns(state: RunState, outcome_columns, fn, feature, iteration: int, source: str):
    """Create one descriptor per realized column of a kept function."""
    added = []
    for column in outcome_columns:
        # Vector outputs are named `<fn>[k]`; the index recovers the lane.
        index = None
        if column != fn.name and column.startswith(fn.name + "["):
            index = int(column[len(fn.name) + 1 : -1])
        desc = FeatureDescriptor(
            name=column,
            description=feature.description if feature else "",
            rationale=feature.rationale if feature else "",
            channels=tuple(feature.channels) if feature else (),
            source=source,
            origin_iteration=iteration,
        )
        state.core.candidates[column] = desc
        state.realizations[column] = {"kind": "program", "function": fn.name, "index": index}
        added.append(column)
    return added


def run_iteration(state: RunState, config: RunConfig, dataset: Dataset, provider,
                  index: KnowledgeIndex, embedder) -> list[str]:
    """Execute one generation iteration; returns the names of new columns."""
    i = state.core.iteration
    labels = dataset.labels
    new_columns: list[str] = []

    # 1. Assess the current candidate set, except on the very first pass.
    if state.core.best_auroc is not None or i != 0:
        _assess(state, config, labels, i)
    else:
        state.history.append(
            {"iteration": i, "assessed": False, "n_columns": len(state.core.table.column_names)}
        )

    # 2. Feedback from the best model so far.
    report = None
    if state.core.best_report is not None:
        from .evaluator import EvalReport

        report = EvalReport.from_record(state.core.best_report)
    prompt = build_feedback_prompt(report, state.core.candidates, _selected_descriptors(state))
    state.feedback_texts.append(prompt.text)

    # 3. Multi-source generation.
    m = config.stride
    schema = dataset.channel_schema
    chunks = []
    if len(index):
        query = " ".join(state.keywords) if state.keywords else config.task.description
        chunks = query_top_chunks(query, index, embedder, config.top_chunks)
    direct, d_diags = generate_features_direct(config.task, prompt, m, provider, schema, config.max_tokens)
    contextual, c_diags = generate_features_contextual(
        config.task, chunks, prompt, m, provider, schema, config.max_tokens
    )
    for diag in d_diags + c_diags:
        logger.info("iteration %d generation: %s", i, diag)

    sources = {}
    ordered_features = []
    for feature in direct:
        if feature.name not in sources:
            sources[feature.name] = "direct-llm"
            ordered_features.append(feature)
    for feature in contextual:
        if feature.name not in sources:
            sources[feature.name] = "contextual"
            ordered_features.append(feature)

    # 4. Translate, filter, execute, verify, append.
    if ordered_features:
        schema_desc = ", ".join(
            f"{ch}: {dataset.windows[0].channels[ch].sample_rate:g} Hz" for ch in schema
        )
        program_text, t_diags = translate_to_featurescript(
            ordered_features, schema_desc, GRAMMAR_TEXT, provider, catalog_help(), config.max_tokens
        )
        for diag in t_diags:
            logger.info("iteration %d translation: %s", i, diag)
        admitted, verdicts = run_filter_chain(program_text, schema)
        state.verdict_log.extend({**v.to_record(), "iteration": i} for v in verdicts)
        values, names, ereport = extract_table(admitted, dataset)
        state.extraction_log.extend({**o.to_record(), "iteration": i} for o in ereport.outcomes)
        table, dropped = append_feature_columns(state.core.table, names, values)
        state.append_log.extend({"name": d.name, "reason": d.reason, "iteration": i} for d in dropped)
        appended = set(table.column_names) - set(state.core.table.column_names)
        state.core.table = table
        feature_by_name = {f.name: f for f in ordered_features}
        for outcome in ereport.kept():
            kept_cols = [c for c in outcome.columns if c in appended]
            if not kept_cols:
                continue
            fn = next(f for f in admitted if f.name == outcome.name)
            feature = feature_by_name.get(fn.name)
            source = sources.get(fn.name, "direct-llm")
            state.programs.setdefault(fn.name, _function_source(fn))
            new_columns.extend(
                _register_program_columns(state, kept_cols, fn, feature, i, source)
            )

    # 5. Operator composition over the updated table.
    if len(state.core.table.column_names) >= 2:
        ranking = rank_columns(state.core.table, labels, state.split_train, config.mi_bins)
        result = compose_pairs(state.core.table, ranking, m)
        state.composite_log.extend(
            {**spec.to_record(), "status": "dropped", "reason": reason, "iteration": i}
            for spec, reason in result.dropped
        )
        table, dropped = append_feature_columns(state.core.table, result.names, result.columns)
        state.append_log.extend({"name": d.name, "reason": d.reason, "iteration": i} for d in dropped)
        appended = set(table.column_names) - set(state.core.table.column_names)
        state.core.table = table
        for spec in result.specs:
            if spec.name not in appended:
                continue
            parents = [state.core.candidates.get(spec.left), state.core.candidates.get(spec.right)]
            channels = sorted({c for p in parents if p for c in p.channels})
            state.core.candidates[spec.name] = FeatureDescriptor(
                name=spec.name,
                description=f"{spec.operator} of {spec.left} and {spec.right}",
                rationale="operator composition of high-importance columns",
                channels=tuple(channels),
                source="operator",
                origin_iteration=i,
            )
            state.realizations[spec.name] = {
                "kind": "composite",
                "op": spec.operator,
                "left": spec.left,
                "right": spec.right,
            }
            state.composite_log.append({**spec.to_record(), "status": "kept", "iteration": i})
            new_columns.append(spec.name)

    state.core.iteration = i + 1
    state.core.check_invariants()
    return new_columns


def _function_source(fn) -> str:
    from .dsl import function_to_source

    return function_to_source(fn)


def initialize_state(config: RunConfig, dataset: Dataset, provider, index: KnowledgeIndex) -> RunState:
    split_train, split_val = split_train_validation(dataset, config.validation_fraction, config.seed)
    table = FeatureTable.empty([w.id for w in dataset.windows])
    core = IterationState(
        candidates={},
        table=table,
        stride=config.stride,
        iteration=0,
        max_iterations=config.iterations,
        rng_seed=config.seed,
    )
    state = RunState(
        core=core,
        split_train=split_train,
        split_val=split_val,
        label_space=dataset.label_space,
        provider_name=getattr(provider, "name", "unknown"),
    )

    if len(index):
        keywords, diags = generate_keywords(config.task, provider)
        state.keywords = keywords
        for diag in diags:
            logger.info("keywords: %s", diag)

    text = initial_program_text(dataset)
    admitted, verdicts = run_filter_chain(text, dataset.channel_schema)
    state.verdict_log.extend({**v.to_record(), "iteration": -1} for v in verdicts)
    values, names, ereport = extract_table(admitted, dataset)
    state.extraction_log.extend({**o.to_record(), "iteration": -1} for o in ereport.outcomes)
    table, dropped = append_feature_columns(state.core.table, names, values)
    state.append_log.extend({"name": d.name, "reason": d.reason, "iteration": -1} for d in dropped)
    state.core.table = table
    for outcome in ereport.kept():
        kept_cols = [c for c in outcome.columns if c in table.column_names]
        fn = next(f for f in admitted if f.name == outcome.name)
        state.programs.setdefault(fn.name, _function_source(fn))
        for column in kept_cols:
            chan = fn.params[0]
            state.core.candidates[column] = FeatureDescriptor(
                name=column,
                description=f"initial statistical feature over channel {chan}",
                rationale="general statistical initial feature set",
                channels=(chan,),
                source="initial",
                origin_iteration=0,
            )
            state.realizations[column] = {"kind": "program", "function": fn.name, "index": None}
    state.core.check_invariants()
    return state


def run(config: RunConfig, provider=None) -> RunState:
    """Execute a full (or resumed) run; returns the final state."""
    config.validate()
    run_dir = Path(config.run_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    _setup_run_logging(run_dir)

    if config.dataset is None:
        raise ConfigError("run needs a dataset path")
    dataset = load_dataset(config.dataset)
    provider = provider or make_provider(config)
    embedder = HashingEmbedder(dim=config.embed_dim, seed=0)
    index = _resolve_index(config, run_dir, embedder)
    labels = dataset.labels

    if (run_dir / STATE_FILE).exists():
        state = load_state(run_dir)
        if state.core.rng_seed != config.seed or state.core.stride != config.stride:
            raise ConfigError("existing run state does not match the supplied config (seed/stride)")
        transcript = getattr(provider, "transcript", None)
        if transcript is not None:
            transcript.cursor = state.transcript_cursor
        logger.info("resuming at iteration %d", state.core.iteration)
    else:
        state = initialize_state(config, dataset, provider, index)
        _collect_audit(state, provider)
        commit_state(state, run_dir, labels)

    if state.finished:
        logger.info("run already finished")
        return state

    while state.core.iteration < config.iterations:
        try:
            added = run_iteration(state, config, dataset, provider, index, embedder)
        except ProviderError as exc:
            _collect_audit(state, provider)
            logger.error("iteration %d aborted: %s", state.core.iteration, exc)
            raise
        logger.info("iteration %d added %d column(s)", state.core.iteration - 1, len(added))
        _collect_audit(state, provider)
        commit_state(state, run_dir, labels)

    # Final assessment so the last generation pass is evaluated too.
    _assess(state, config, labels, config.iterations)
    state.finished = True
    _collect_audit(state, provider)
    _write_generated_doc(state, run_dir, config)
    commit_state(state, run_dir, labels)
    return state


def _write_generated_doc(state: RunState, run_dir: Path, config: RunConfig) -> None:
    """Render generated descriptors as a synthetic corpus document.

    Written into the run directory; optionally copied into the corpus
    directory when update_corpus is enabled (off by default so repeated runs
    stay reproducible).
    """
    lines = []
    for desc in state.core.candidates.values():
        if desc.source == "initial":
            continue
        lines.append(f"{desc.name}: {desc.description} Rationale: {desc.rationale}")
    if not lines:
        return
    text = "\n".join(lines) + "\n"
    (run_dir / "kb_generated_features.txt").write_text(text, encoding="utf-8")
    if config.update_corpus and config.corpus_dir:
        target = Path(config.corpus_dir) / f"featloom_generated_{Path(run_dir).name}.txt"
        target.write_text(text, encoding="utf-8")


def _setup_run_logging(run_dir: Path) -> None:
    # Timestamps live only in this log file, never in committed artifacts.
    root = logging.getLogger("featloom")
    path = run_dir / "run.log"
    for handler in root.handlers:
        if getattr(handler, "_featloom_path", None) == str(path):
            return
    handler = logging.FileHandler(path, encoding="utf-8")
    handler.setFormatter(logging.Formatter("%(asctime)s %(name)s %(levelname)s %(message)s"))
    handler._featloom_path = str(path)
    root.addHandler(handler)
    root.setLevel(logging.INFO)


def source_distribution(state: RunState, names=None) -> dict[str, float]:
    """Share of each source among `names` (default: the selected best set)."""
    names = list(names if names is not None else state.core.best_names)
    shares = {source: 0.0 for source in ("initial", "direct-llm", "contextual", "operator")}
    if not names:
        return shares
    for name in names:
        desc = state.core.candidates.get(name)
        if desc is not None:
            shares[desc.source] += 1.0
    return {k: v / len(names) for k, v in shares.items()}


def render_report(run_dir) -> str:
    """Human-readable run summary."""
    run_dir = Path(run_dir)
    state = load_state(run_dir)
    lines = []
    status = "finished" if state.finished else f"partial at iteration {state.core.iteration}"
    lines.append(f"featloom run: {status}")
    lines.append(f"candidates: {len(state.core.candidates)} | table columns: {len(state.core.table.column_names)}")
    if state.core.best_auroc is not None:
        rep = state.core.best_report or {}
        lines.append(
            f"best validation AUROC {state.core.best_auroc:.4f} | accuracy "
            f"{rep.get('accuracy', float('nan')):.4f} | {len(state.core.best_names)} feature(s) selected"
        )
        lines.append("selected features:")
        for name in state.core.best_names:
            desc = state.core.candidates.get(name)
            if desc is None:
                lines.append(f"  - {name}")
            else:
                lines.append(f"  - {name} [{desc.source}] {desc.rationale}")
    else:
        lines.append("no assessment recorded yet")
    lines.append("iteration history:")
    for entry in state.history:
        if entry.get("assessed"):
            lines.append(
                f"  iter {entry['iteration']}: auroc {entry['auroc']:.4f} "
                f"(best {entry['best_auroc']:.4f}, t={entry['target_count']}, "
                f"{entry['n_columns']} cols{', improved' if entry['improved'] else ''})"
            )
        else:
            lines.append(f"  iter {entry['iteration']}: assessment skipped (first pass)")
    stage_counts: dict[str, int] = {}
    passed = 0
    for rec in state.verdict_log:
        if rec["passed"]:
            passed += 1
        else:
            stage_counts[rec["stage"]] = stage_counts.get(rec["stage"], 0) + 1
    lines.append(f"filter verdicts: {passed} passed")
    for stage in ("extraction", "name-parameter", "body-content", "constant-return"):
        lines.append(f"  failed at {stage}: {stage_counts.get(stage, 0)}")
    lines.append("source distribution of selected features:")
    for source, share in source_distribution(state).items():
        lines.append(f"  {source}: {share * 100.0:.1f}%")
    return "\n".join(lines) + "\n"


def _realized_matrix(state: RunState, dataset: Dataset, names):
    """Recompute the named columns on a new dataset via stored realizations."""
    values: dict[str, np.ndarray] = {}

    def materialize(name: str) -> np.ndarray:
        if name in values:
            return values[name]
        real = state.realizations.get(name)
        if real is None:
            raise DataError(f"no stored realization for feature {name!r}")
        if real["kind"] == "program":
            program, diags = parse_program(state.programs[real["function"]])
            if not program.functions:
                raise DataError(f"stored program for {real['function']!r} no longer parses: {diags}")
            fn = program.functions[0]
            problems = check_function(fn, dataset.channel_schema)
            if problems:
                raise DataError(f"stored program for {name!r} fails checks: {problems[0]}")
            matrix, colnames, report = extract_table([fn], dataset)
            if not report.kept():
                raise DataError(
                    f"stored program {fn.name!r} was discarded on this dataset: "
                    f"{report.outcomes[0].reason}"
                )
            for j, colname in enumerate(colnames):
                values[colname] = matrix[:, j]
            if name not in values:
                raise DataError(f"program {fn.name!r} did not produce column {name!r}")
            return values[name]
        spec = CompositeSpec(real["left"], real["right"], real["op"])
        col = compute_composite(spec, materialize(real["left"]), materialize(real["right"]))
        values[name] = col
        return col

    columns = [materialize(name) for name in names]
    matrix = np.column_stack(columns) if columns else np.zeros((len(dataset.windows), 0))
    nonfinite = int(np.count_nonzero(~np.isfinite(matrix)))
    if nonfinite:
        logger.warning("held-out extraction: imputing %d non-finite cell(s) with 0.0", nonfinite)
        matrix = np.where(np.isfinite(matrix), matrix, 0.0)
    return matrix, nonfinite


def evaluate_on_dataset(run_dir, dataset_path) -> dict:
    """Apply the stored best model and feature set to held-out data."""
    from .evaluator import auroc_ovo_macro, confusion_matrix

    run_dir = Path(run_dir)
    state = load_state(run_dir)
    if state.core.best_model_blob is None:
        raise DataError("run has no best model yet")
    payload = deserialize_model(state.core.best_model_blob)
    model = payload["model"]
    selected = payload["selected"]
    label_space = payload["label_space"]

    dataset = load_dataset(dataset_path)
    unknown = set(dataset.label_space) - set(label_space)
    if unknown:
        raise DataError(f"held-out labels {sorted(unknown)} were not in the training label space")
    matrix, imputed = _realized_matrix(state, dataset, selected)
    proba = model.predict_proba(matrix)
    preds = [label_space[int(j)] for j in np.argmax(proba, axis=1)]
    cm = confusion_matrix(dataset.labels, preds, label_space)
    return {
        "auroc": auroc_ovo_macro(proba, dataset.labels, label_space),
        "accuracy": cm.accuracy(),
        "confusion": cm.to_record(),
        "selected": list(selected),
        "imputed_cells": imputed,
        "windows": len(dataset.windows),
    }


def build_and_save_index(config: RunConfig) -> KnowledgeIndex:
    """The `init` command: build the knowledge index and persist it."""
    if not config.corpus_dir:
        raise ConfigError("init needs kb.corpus_dir")
    embedder = HashingEmbedder(dim=config.embed_dim, seed=0)
    index = build_index(
        LocalDirectoryCorpus(config.corpus_dir), embedder, config.chunk_target, config.chunk_overlap
    )
    target = Path(config.index_path) if config.index_path else Path(config.run_dir) / INDEX_FILE
    target.parent.mkdir(parents=True, exist_ok=True)
    index.save(target)
    index.write_manifest(target.with_name("index_manifest.ndjson"))
    logger.info("knowledge index: %d chunk(s) -> %s", len(index), target)
    return index
