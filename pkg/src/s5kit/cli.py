"""Command line interface"""

import argparse
import dataclasses
import functools
import json
import logging
import shlex
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import jinja2
import numpy as np
import yaml

from .agent import agent_correct
from .audio import read_wav, write_wav
from .backends import (
    EnsembleTagger,
    ExternalBackend,
    OracleSeparator,
    OracleTagger,
    Separator,
    Tagger,
    TemplateTagger,
    feature_variant_ensemble,
)
from .dataset import (
    SourceLibrary,
    apply_flags,
    audit_records,
    generate_corpus,
    group_by_class,
    load_reference_stems,
    read_flag_file,
    read_manifests,
    read_records,
    reconcile_audit,
    refine_records,
)
from .exceptions import (
    AudioReadError,
    ConfigError,
    DatasetError,
    EvaluationError,
    S5KitError,
)
from .features import extract_features, save_feature_matrix
from .metrics import SDR_CLAMP_DB, compare_summaries, evaluate_clip, fp_penalized_regressions, per_class_accuracy
from .metrics import summarize
from .models import (
    AgentConfig,
    AudioClip,
    ChromaConfig,
    ChromaNorm,
    ClipOrigin,
    EmptyFallback,
    FeatureConfig,
    MelConfig,
    MixParams,
    MixtureManifest,
    RankBy,
    RolloffConfig,
    StftConfig,
    WavFormat,
    WindowType,
)
from .utils import Configuration, PluggableDecorator, S5JSONEncoder, merge_settings, method_labeler, read_jsonl
from .utils import write_effective_config, write_jsonl

logger = logging.getLogger(__name__)

LOG_FORMAT = "%(asctime)s - %(levelname)s - %(name)s - %(message)s"

cli_command = PluggableDecorator.build_decorator_class(
    set_name_callback=functools.partial(method_labeler, label="_cli_command")
)


class CommandMeta(type):
    """Metaclass to create command classes.

    Injects a default ``cli_name`` class property: the lowercase class
    name, unless the class sets its own.
    """

    def __new__(cls, *args, **kwargs):
        args[2].setdefault("cli_name", args[0].lower())
        cls_inst = super().__new__(cls, *args, **kwargs)
        return cls_inst


class GenericCommand(metaclass=CommandMeta):
    """Class to group and identify all CLI command classes.

    The `docstrings` in child classes are important:
      * Class `docstring` is used as a CLI group description
      * Method decorated with :func:`cli_command` `docstring` is used as action description

    A class whose only action is ``run`` is exposed as a plain command
    (``s5kit features``) instead of a command group.
    """

    def __init__(self):
        self.jinja_env = jinja2.Environment(
            loader=jinja2.PackageLoader("s5kit"),
            trim_blocks=True,
            lstrip_blocks=True,
        )
        self.jinja_env.filters["fmt"] = _fmt

    def _display_data(self, output_format, template, data):
        if output_format == "json":
            output = json.dumps(data, indent=4, sort_keys=True, cls=S5JSONEncoder)
        elif output_format == "text":
            template = self.jinja_env.get_template(template)
            output = template.render(d=data)
        print(output)

    def _settings(self, defaults: Dict[str, Any], kwargs: Dict[str, Any], action: str = None) -> Dict[str, Any]:
        """Defaults < configuration file section < command line flags

        Commands with several actions read the ``{command: {action: ...}}`` sub-section.
        """
        section = Configuration.from_file(kwargs.get("config")).section(self.cli_name)
        name = self.cli_name
        if action is not None:
            section, name = section.get(action) or {}, f"{self.cli_name}.{action}"
            if not isinstance(section, dict):
                raise ConfigError(f"Configuration section '{name}' must be a mapping")
        unknown = sorted(set(section) - set(defaults))
        if unknown:
            raise ConfigError(f"Unknown setting(s) in section '{name}': {', '.join(unknown)}")
        return merge_settings(defaults, section, {k: v for k, v in kwargs.items() if k in defaults})


def _fmt(value, digits: int = 3) -> str:
    if value is None:
        return "-"
    if isinstance(value, float):
        return f"{value:.{digits}f}"
    return str(value)


def _add_feature_arguments(parser: argparse.ArgumentParser):
    group = parser.add_argument_group("feature settings")
    group.add_argument("--channel", type=int, help="Channel to analyse. Default: 0")
    group.add_argument("--fft-size", type=int, help="FFT length. Default: 1024")
    group.add_argument("--window-size", type=int, help="Analysis window length. Default: 1024")
    group.add_argument("--hop-size", type=int, help="Frame advance in samples. Default: 320")
    group.add_argument("--window", choices=[w.value for w in WindowType], help="Window function. Default: hann")
    group.add_argument("--n-mels", type=int, help="Number of mel bands. Default: 64")
    group.add_argument("--fmin", type=float, help="Lowest mel band edge in Hz. Default: 20")
    group.add_argument("--fmax", type=float, help="Highest mel band edge in Hz. Default: Nyquist")
    group.add_argument("--kappa", type=float, help="Roll-off energy fraction. Default: 0.85")
    group.add_argument("--reference-a4", type=float, help="Tuning reference in Hz. Default: 440")
    group.add_argument(
        "--chroma-norm", choices=[n.value for n in ChromaNorm], help="Chroma normalisation. Default: l2_per_frame"
    )


FEATURE_DEFAULTS = {
    "channel": 0,
    "fft_size": 1024,
    "window_size": 1024,
    "hop_size": 320,
    "window": WindowType.HANN.value,
    "n_mels": 64,
    "fmin": 20.0,
    "fmax": None,
    "kappa": 0.85,
    "reference_a4": 440.0,
    "chroma_norm": ChromaNorm.L2_PER_FRAME.value,
}


def feature_config(settings: Dict[str, Any]) -> FeatureConfig:
    """Build a :class:`FeatureConfig` from flat settings"""
    return FeatureConfig(
        stft=StftConfig(settings["fft_size"], settings["window_size"], settings["hop_size"], settings["window"]),
        mel=MelConfig(settings["n_mels"], settings["fmin"], settings["fmax"]),
        rolloff=RolloffConfig(settings["kappa"]),
        chroma=ChromaConfig(reference_a4=settings["reference_a4"], normalization=settings["chroma_norm"]),
        channel=settings["channel"],
    )


class FeaturesCommand(GenericCommand):
    """Extract mel, roll-off and chroma features from WAV files"""

    cli_name = "features"

    @cli_command
    def run(self, parser: argparse.ArgumentParser) -> Callable[..., int]:
        """Extract features"""
        parser.add_argument("inputs", nargs="+", metavar="WAV", help="Input WAV files")
        parser.add_argument("-o", "--out-dir", required=True, help="Directory for the feature files")
        _add_feature_arguments(parser)
        return self._run

    def _run(self, inputs: Sequence[str], out_dir: str, **kwargs) -> int:
        settings = self._settings(FEATURE_DEFAULTS, kwargs)
        cfg = feature_config(settings)
        written, failures = [], []
        for path in inputs:
            try:
                features = extract_features(read_wav(path), cfg)
                name = Path(path).stem
                for kind, matrix in features.items():
                    target = Path(out_dir) / f"{name}.{kind.value}.npz"
                    save_feature_matrix(matrix, target)
                    written.append({"input": path, "kind": kind, "path": target, "frames": matrix.frame_count})
            except S5KitError as exc:
                logger.error("%s", exc)
                failures.append((path, exc))
        write_effective_config(out_dir, "features", settings)
        self._display_data(
            kwargs["format"],
            "features.j2",
            dict(written=written, failures=[{"input": p, "error": str(e)} for p, e in failures]),
        )
        return failures[0][1].exit_code if failures else 0


def read_predictions(path: str) -> Dict[str, List[str]]:
    """Read ``{"clip_id": ..., "labels": [...]}`` records"""
    predictions = {}
    for line_no, record in read_jsonl(path):
        if "clip_id" not in record or not isinstance(record.get("labels"), list):
            raise DatasetError(f"{path}:{line_no}: prediction records need 'clip_id' and a 'labels' list")
        predictions[record["clip_id"]] = record["labels"]
    return predictions


def check_alignment(predicted_ids, manifest_ids):
    """Raise one error listing every clip ID that is only on one side"""
    unknown = sorted(set(predicted_ids) - set(manifest_ids))
    missing = sorted(set(manifest_ids) - set(predicted_ids))
    if unknown or missing:
        problems = []
        if unknown:
            problems.append(f"not in the manifest: {', '.join(unknown)}")
        if missing:
            problems.append(f"without predictions: {', '.join(missing)}")
        raise EvaluationError(f"Clip IDs do not match ({'; '.join(problems)})")


def read_estimated_stems(stems_dir: str, clip_id: str, labels: Sequence[str]) -> Dict[str, AudioClip]:
    """Estimated stems found under ``{stems_dir}/{clip_id}/{label}.wav``"""
    stems = {}
    for label in labels:
        path = Path(stems_dir) / clip_id / f"{label}.wav"
        if path.exists():
            stems[label] = read_wav(path)
    return stems


def evaluation_report(evals, labels_pairs) -> Dict[str, Any]:
    return dict(clips=evals, summary=summarize(evals), per_class=per_class_accuracy(labels_pairs))


class EvaluateCommand(GenericCommand):
    """Score predictions against a mixture manifest"""

    cli_name = "evaluate"

    @cli_command
    def run(self, parser: argparse.ArgumentParser) -> Callable[..., int]:
        """Evaluate predictions"""
        parser.add_argument("-p", "--predictions", required=True, help="Prediction records (.jsonl)")
        parser.add_argument("-m", "--manifest", required=True, help="Mixture manifest (.jsonl)")
        parser.add_argument("--corpus", help="Corpus directory with mixtures and reference stems")
        parser.add_argument("--stems", help="Directory of estimated stems, {clip_id}/{class}.wav")
        parser.add_argument("--channel", type=int, help="Channel used for SDR. Default: 0")
        parser.add_argument("--clamp", type=float, help="SDR clamp in dB. Default: 100")
        parser.add_argument("-o", "--out-dir", help="Write report.jsonl and the effective configuration here")
        return self._run

    def _run(self, predictions: str, manifest: str, corpus=None, stems=None, out_dir=None, **kwargs) -> int:
        settings = self._settings({"channel": 0, "clamp": SDR_CLAMP_DB}, kwargs)
        manifests = read_manifests(manifest)
        predicted = read_predictions(predictions)
        check_alignment(predicted, [m.clip_id for m in manifests])
        separation = corpus is not None and stems is not None
        evals, pairs = [], []
        for item in manifests:
            pred = predicted[item.clip_id]
            pairs.append((pred, item.labels))
            if separation:
                truth_stems = {
                    label: stem for (_, label), stem in load_reference_stems(corpus, [item]).items()
                }
                evals.append(
                    evaluate_clip(
                        item.clip_id,
                        pred,
                        item.labels,
                        truth_stems=truth_stems,
                        est_stems=read_estimated_stems(stems, item.clip_id, pred),
                        mixture=read_wav(Path(corpus) / item.clip_id / "mixture.wav"),
                        channel=settings["channel"],
                        clamp=settings["clamp"],
                    )
                )
            else:
                evals.append(evaluate_clip(item.clip_id, pred, item.labels))
        report = evaluation_report(evals, pairs)
        if out_dir:
            write_report(Path(out_dir) / "report.jsonl", report)
            write_effective_config(
                out_dir, "evaluate", dict(settings, predictions=predictions, manifest=manifest, corpus=corpus)
            )
        self._display_data(kwargs["format"], "evaluate.j2", report)
        return 0


def write_report(path, report: Dict[str, Any]):
    """Per-clip records followed by one summary record"""
    records = [dict(dataclasses.asdict(e), record="clip") for e in report["clips"]]
    records.append(dict(dataclasses.asdict(report["summary"]), record="summary"))
    write_jsonl(path, records)


def _manifest_index(manifests: Optional[Sequence[MixtureManifest]]) -> Dict[str, MixtureManifest]:
    return {m.clip_id: m for m in manifests or ()}


class BackendFactory:
    """Build taggers and separators from command line specs.

    Specs: ``oracle``, ``template:RECORDS``, ``template-ensemble:RECORDS``,
    anything else is the command line of an external backend. In-process
    backends are built once and shared; each call to :meth:`build` starts
    fresh external processes.
    """

    def __init__(self, tag_specs, sep_spec, manifests, corpus, settings, features: FeatureConfig):
        self.tag_specs = list(tag_specs)
        self.sep_spec = sep_spec
        self.manifests = manifests
        self.corpus = corpus
        self.settings = settings
        self.features = features
        self._shared: Dict[str, Any] = {}
        self.started: List[ExternalBackend] = []

    def _need_manifest(self, what):
        if not self.manifests:
            raise ConfigError(f"The oracle {what} needs a mixture manifest")

    def _injected(self) -> Dict[str, Dict[str, float]]:
        score = self.settings.get("inject_fp")
        if score is None:
            return {}
        injected = {}
        for manifest in self.manifests:
            rng = np.random.default_rng([self.settings["seed"], manifest.index])
            absent = [label for label in OracleTagger.vocabulary if label not in manifest.labels]
            injected[manifest.clip_id] = {absent[int(rng.integers(len(absent)))]: float(score)}
        return injected

    def _training(self, records_path: str):
        records = read_records(records_path)
        library = SourceLibrary(records, Path(records_path).parent)
        return [(library(r.id), r.label) for r in records]

    def _shared_backend(self, spec: str, builder):
        if spec not in self._shared:
            self._shared[spec] = builder()
        return self._shared[spec]

    def _external(self, spec: str) -> ExternalBackend:
        backend = ExternalBackend(shlex.split(spec), timeout=self.settings["timeout"])
        backend.start()
        self.started.append(backend)
        return backend

    def tagger(self, spec: str, externals: Dict[str, ExternalBackend]) -> Tagger:
        if spec == "oracle":
            self._need_manifest("tagger")
            return self._shared_backend(
                "tag:oracle",
                lambda: OracleTagger(self.manifests, seed=self.settings["seed"], injected=self._injected()),
            )
        kind, _, path = spec.partition(":")
        if kind == "template" and path:
            return self._shared_backend(spec, lambda: TemplateTagger(self._training(path), self.features))
        if kind == "template-ensemble" and path:
            return self._shared_backend(spec, lambda: feature_variant_ensemble(self._training(path), self.features))
        if spec not in externals:
            externals[spec] = self._external(spec)
        return externals[spec]

    def separator(self, externals: Dict[str, ExternalBackend]) -> Separator:
        if self.sep_spec == "oracle":
            self._need_manifest("separator")
            return self._shared_backend(
                "sep:oracle",
                lambda: OracleSeparator(self.manifests, load_reference_stems(self.corpus, self.manifests)),
            )
        if self.sep_spec not in externals:
            externals[self.sep_spec] = self._external(self.sep_spec)
        return externals[self.sep_spec]

    def build(self) -> Tuple[Tagger, Separator]:
        """One tagger and separator pair; a spec used for both shares one external process"""
        externals: Dict[str, ExternalBackend] = {}
        taggers = [self.tagger(spec, externals) for spec in self.tag_specs]
        if len(taggers) == 1:
            tagger = taggers[0]
        else:
            tagger = EnsembleTagger(taggers, self.settings["weights"])
        return tagger, self.separator(externals)

    def close(self):
        for backend in self.started:
            backend.close()
        self.started = []


AGENT_DEFAULTS = {
    "threshold": 0.5,
    "top_k": 3,
    "rank_by": RankBy.RETAG_SCORE.value,
    "empty_fallback": EmptyFallback.ORIGINAL_TOP1.value,
    "reuse_stems": False,
    "backend_tag": ["oracle"],
    "backend_sep": "oracle",
    "weights": None,
    "jobs": 1,
    "seed": 0,
    "inject_fp": None,
    "timeout": 60.0,
}


def list_corpus(corpus: str) -> List[str]:
    """Clip IDs of the directories holding a ``mixture.wav``"""
    return sorted(p.parent.name for p in Path(corpus).glob("*/mixture.wav"))


class AgentCommand(GenericCommand):
    """Correct predicted labels by separating and re-tagging every candidate"""

    cli_name = "agent"

    @cli_command
    def run(self, parser: argparse.ArgumentParser) -> Callable[..., int]:
        """Run label correction"""
        parser.add_argument("--corpus", required=True, help="Corpus directory, {clip_id}/mixture.wav")
        parser.add_argument("-m", "--manifest", help="Mixture manifest. Default: {corpus}/manifest.jsonl if present")
        parser.add_argument("-o", "--out-dir", required=True, help="Directory for predictions and stems")
        parser.add_argument(
            "--backend-tag",
            action="append",
            metavar="SPEC",
            help="Tagger: oracle, template:RECORDS, template-ensemble:RECORDS or a command line. "
            "Repeat to ensemble. Default: oracle",
        )
        parser.add_argument("--backend-sep", metavar="SPEC", help="Separator: oracle or a command line")
        parser.add_argument("--weights", type=float, nargs="+", help="Ensemble weights, one per --backend-tag")
        parser.add_argument("--threshold", type=float, help="Extra candidate score cutoff. Default: 0.5")
        parser.add_argument("--top-k", type=int, help="Maximum number of labels per clip. Default: 3")
        parser.add_argument("--rank-by", choices=[r.value for r in RankBy], help="Re-ranking score")
        parser.add_argument(
            "--empty-fallback", choices=[f.value for f in EmptyFallback], help="Answer when no label survives"
        )
        parser.add_argument("--reuse-stems", action="store_true", default=None, help="Emit verification stems")
        parser.add_argument("--trace-dir", help="Write per-clip traces to DIR/traces.jsonl")
        parser.add_argument("--jobs", type=int, help="Clips processed in parallel. Default: 1")
        parser.add_argument("--seed", type=int, help="Seed for injected false positives. Default: 0")
        parser.add_argument("--inject-fp", type=float, metavar="SCORE", help="Oracle tagger: add one wrong class")
        parser.add_argument("--timeout", type=float, help="External backend answer timeout in seconds. Default: 60")
        parser.add_argument("--evaluate", action="store_true", help="Compare results before and after correction")
        _add_feature_arguments(parser)
        return self._run

    def _run(self, corpus: str, out_dir: str, manifest=None, trace_dir=None, evaluate=False, **kwargs) -> int:
        settings = self._settings(dict(AGENT_DEFAULTS, **FEATURE_DEFAULTS), kwargs)
        cfg = AgentConfig(
            threshold=settings["threshold"],
            top_k=settings["top_k"],
            rank_by=settings["rank_by"],
            empty_fallback=settings["empty_fallback"],
            reuse_stems=bool(settings["reuse_stems"]),
        )
        if settings["jobs"] < 1:
            raise ConfigError(f"--jobs must be at least 1, got {settings['jobs']}")
        if manifest is None and (Path(corpus) / "manifest.jsonl").exists():
            manifest = str(Path(corpus) / "manifest.jsonl")
        manifests = read_manifests(manifest) if manifest else None
        if evaluate and not manifests:
            raise ConfigError("--evaluate needs a mixture manifest")
        if settings["inject_fp"] is not None and settings["backend_tag"] != ["oracle"]:
            raise ConfigError("--inject-fp only applies to the oracle tagger")
        clip_ids = [m.clip_id for m in manifests] if manifests else list_corpus(corpus)

        factory = BackendFactory(
            settings["backend_tag"], settings["backend_sep"], manifests, corpus, settings, feature_config(settings)
        )
        try:
            results = self._process(clip_ids, corpus, factory, cfg, settings["jobs"])
        finally:
            factory.close()

        traces = [trace for trace in results if not isinstance(trace, dict)]
        failures = [item for item in results if isinstance(item, dict)]
        predictions, trace_records = [], []
        for trace in traces:
            stem_paths = {}
            for label, stem in trace.final_stems.items():
                path = Path(out_dir) / trace.clip_id / f"{label}.wav"
                write_wav(stem, path, WavFormat.FLOAT32)
                stem_paths[label] = str(path)
            predictions.append(
                {
                    "clip_id": trace.clip_id,
                    "labels": trace.final_labels,
                    "original_labels": [label for label, _ in trace.original_scores.top_k(cfg.top_k)],
                }
            )
            trace_records.append(trace.to_record(stem_paths))
        write_jsonl(Path(out_dir) / "predictions.jsonl", predictions)
        if failures:
            write_jsonl(Path(out_dir) / "failures.jsonl", failures)
        if trace_dir:
            write_jsonl(Path(trace_dir) / "traces.jsonl", trace_records)
        write_effective_config(out_dir, "agent", dict(settings, corpus=corpus, manifest=manifest))

        data = dict(
            n_clips=len(clip_ids),
            corrected=len(traces),
            failures=failures,
            removed=sum(len(t.removed) for t in traces),
            fallbacks=sum(t.fallback_used for t in traces),
        )
        if evaluate:
            data.update(self._compare(traces, manifests, corpus, cfg))
        self._display_data(kwargs["format"], "agent.j2", data)
        return max((f["exit_code"] for f in failures), default=0)

    def _process(self, clip_ids: List[str], corpus: str, factory: BackendFactory, cfg: AgentConfig, jobs: int):
        def work(chunk: List[str]):
            tagger, separator = factory.build()
            results = []
            for clip_id in chunk:
                try:
                    mixture = read_wav(Path(corpus) / clip_id / "mixture.wav").with_origin(ClipOrigin(clip_id))
                    results.append(agent_correct(mixture, tagger, separator, cfg))
                except S5KitError as exc:
                    logger.error("Clip %s failed: %s", clip_id, exc)
                    results.append({"clip_id": clip_id, "error": str(exc), "exit_code": exc.exit_code})
            return results

        if jobs == 1:
            return work(clip_ids)
        chunks = [clip_ids[i::jobs] for i in range(jobs)]
        with ThreadPoolExecutor(max_workers=jobs) as executor:
            chunked = list(executor.map(work, chunks))
        by_id = {
            (item.clip_id if not isinstance(item, dict) else item["clip_id"]): item for part in chunked for item in part
        }
        return [by_id[clip_id] for clip_id in clip_ids]

    def _compare(self, traces, manifests, corpus, cfg: AgentConfig) -> Dict[str, Any]:
        index = _manifest_index(manifests)
        try:
            references = load_reference_stems(corpus, [index[t.clip_id] for t in traces])
        except AudioReadError as exc:
            logger.warning("No reference stems (%s); comparing tagging metrics only", exc)
            references = None
        before, after = [], []
        for trace in traces:
            truth = index[trace.clip_id].labels
            original = [label for label, _ in trace.original_scores.top_k(cfg.top_k)]
            if references is None:
                before.append(evaluate_clip(trace.clip_id, original, truth))
                after.append(evaluate_clip(trace.clip_id, trace.final_labels, truth))
                continue
            truth_stems = {label: references[(trace.clip_id, label)] for label in truth}
            mixture = read_wav(Path(corpus) / trace.clip_id / "mixture.wav")
            verified = {v.label: v.stem for v in trace.verifications}
            before.append(evaluate_clip(trace.clip_id, original, truth, truth_stems, verified, mixture))
            final = trace.final_stems
            after.append(evaluate_clip(trace.clip_id, trace.final_labels, truth, truth_stems, final, mixture))
        regressions = fp_penalized_regressions(before, after)
        if regressions:
            logger.warning("FP-penalized accuracy dropped on %d clip(s): %s", len(regressions), ", ".join(regressions))
        summary_before, summary_after = summarize(before), summarize(after)
        return dict(
            before=summary_before,
            after=summary_after,
            delta=compare_summaries(summary_before, summary_after),
            regressions=regressions,
        )


class DatasetCommand(GenericCommand):
    """Audit source pools and synthesise mixtures"""

    cli_name = "dataset"

    @cli_command
    def audit(self, parser: argparse.ArgumentParser) -> Callable[..., int]:
        """Tally the refinement of a source pool per class"""
        parser.add_argument("-r", "--records", required=True, help="Source records (.jsonl)")
        parser.add_argument("--heterogeneous", help="File listing source IDs judged heterogeneous")
        parser.add_argument("--added", help="File listing source IDs added from external collections")
        parser.add_argument("--min-duration", type=float, help="Shortest kept source in seconds. Default: 1.5")
        parser.add_argument("--expected", help="YAML mapping class -> expected final count")
        parser.add_argument("-o", "--out-dir", help="Write audit.jsonl and the effective configuration here")
        return self._audit

    def _audit(self, records: str, heterogeneous=None, added=None, expected=None, out_dir=None, **kwargs) -> int:
        settings = self._settings(AUDIT_DEFAULTS, kwargs, "audit")
        pool = read_records(records)
        pool = apply_flags(
            pool,
            read_flag_file(heterogeneous) if heterogeneous else (),
            read_flag_file(added) if added else (),
        )
        audits = audit_records(pool, settings["min_duration"])
        discrepancies = []
        if expected:
            discrepancies = reconcile_audit(audits, read_expected_counts(expected))
            for item in discrepancies:
                logger.warning(
                    "%s: computed final count %s, expected %s", item["label"], item["computed"], item["expected"]
                )
        if out_dir:
            write_jsonl(Path(out_dir) / "audit.jsonl", audits)
            write_effective_config(out_dir, "dataset audit", dict(settings, records=records))
        totals = {
            name: sum(getattr(a, name) for a in audits)
            for name in ("original", "short_removed", "heterogeneous_removed", "added", "final")
        }
        self._display_data(
            kwargs["format"], "audit.j2", dict(audits=audits, totals=totals, discrepancies=discrepancies)
        )
        return 0

    @cli_command
    def mix(self, parser: argparse.ArgumentParser) -> Callable[..., int]:
        """Synthesise a corpus of mixtures"""
        parser.add_argument("-r", "--records", required=True, help="Source records (.jsonl)")
        parser.add_argument("--noise-records", help="Noise source records (.jsonl). Default: white noise")
        parser.add_argument("-n", "--n-clips", type=int, help="Number of clips. Default: 10")
        parser.add_argument("--seed", type=int, help="Random seed. Default: 0")
        parser.add_argument("--events", type=int, help="Maximum events per clip, 1-3. Default: 3")
        parser.add_argument("--snr-range", type=float, nargs=2, metavar=("LO", "HI"), help="Event SNR range in dB")
        parser.add_argument("--duration", type=float, help="Clip length in seconds. Default: 10")
        parser.add_argument("--sample-rate", type=int, help="Sample rate in Hz. Default: 32000")
        parser.add_argument("--noise-level-db", type=float, help="Noise bed RMS in dBFS. Default: -40")
        parser.add_argument("--refine", action="store_true", default=None, help="Drop short and heterogeneous sources")
        parser.add_argument("--min-duration", type=float, help="Shortest kept source with --refine. Default: 1.5")
        parser.add_argument("--jobs", type=int, help="Clips rendered in parallel. Default: 1")
        parser.add_argument("-o", "--out-dir", required=True, help="Corpus directory")
        return self._mix

    def _mix(self, records: str, out_dir: str, noise_records=None, **kwargs) -> int:
        settings = self._settings(MIX_DEFAULTS, kwargs, "mix")
        params = MixParams(
            duration=settings["duration"],
            sample_rate=settings["sample_rate"],
            max_events=settings["events"],
            snr_range=tuple(settings["snr_range"]),
            noise_level_db=settings["noise_level_db"],
        )
        pool = read_records(records)
        if settings["refine"]:
            pool = refine_records(pool, settings["min_duration"])
        noise_pool = read_records(noise_records, vocabulary=None) if noise_records else []
        resolver = SourceLibrary(pool, Path(records).parent)
        noise_resolver = SourceLibrary(noise_pool, Path(noise_records).parent) if noise_records else None

        def resolve(source_id: str) -> AudioClip:
            if noise_resolver is not None and source_id in noise_resolver.records:
                return noise_resolver(source_id)
            return resolver(source_id)

        manifests = generate_corpus(
            group_by_class(pool),
            settings["n_clips"],
            seed=settings["seed"],
            params=params,
            out_dir=out_dir,
            resolver=resolve,
            noise_pool=noise_pool,
            jobs=settings["jobs"],
        )
        write_effective_config(out_dir, "dataset mix", dict(settings, records=records, noise_records=noise_records))
        counts = {n: sum(len(m.events) == n for m in manifests) for n in (1, 2, 3)}
        self._display_data(
            kwargs["format"], "mix.j2", dict(out_dir=out_dir, n_clips=len(manifests), events_per_clip=counts)
        )
        return 0


AUDIT_DEFAULTS = {"min_duration": 1.5}

MIX_DEFAULTS = {
    "n_clips": 10,
    "seed": 0,
    "events": 3,
    "snr_range": [5.0, 20.0],
    "duration": 10.0,
    "sample_rate": 32000,
    "noise_level_db": -40.0,
    "refine": False,
    "min_duration": 1.5,
    "jobs": 1,
}


def read_expected_counts(path: str) -> Dict[str, int]:
    try:
        with open(path, "r") as file:
            expected = yaml.safe_load(file) or {}
    except (OSError, yaml.YAMLError) as exc:
        raise ConfigError(f"Cannot read expected counts from {path}: {exc}") from None
    if not isinstance(expected, dict):
        raise ConfigError(f"{path} must map class names to counts")
    return {str(k): int(v) for k, v in expected.items()}


def register_command_parsers(cls: type, root_subparser: argparse._SubParsersAction) -> dict:
    """Discover classes implementing command line objects and actions.

    Create a new :mod:`argparse` parser for each discovered CLI object class
    and register it under ``root_subparser``. Classes with several actions
    get a subparser per action; a class whose only action is ``run`` takes
    its arguments directly.

    :param cls: Class that is used to discover all CLI object classes
    :param root_subparser: Base subparser where all command and action parsers will be registered
    :return: A map of callables for each (``object``, ``action``); ``action`` is ``None`` for plain commands
    """
    dispatch_map = {}
    for command_cls in cls.__subclasses__():
        parser_cmd = root_subparser.add_parser(
            command_cls.cli_name, help=command_cls.__doc__, description=command_cls.__doc__
        )
        actions = command_cls._cli_command
        if actions == ["run"]:
            parser_cmd.set_defaults(command=None)
            dispatch_map[(command_cls.cli_name, None)] = command_cls().run(parser_cmd)
            continue
        subparsers_cmd = parser_cmd.add_subparsers(dest="command", required=True)
        for action in actions:
            parser_action = subparsers_cmd.add_parser(action, help=getattr(command_cls, action).__doc__)
            dispatch_map[(command_cls.cli_name, action)] = getattr(command_cls(), action)(parser_action)
    return dispatch_map


def init_parser() -> Tuple[argparse.ArgumentParser, argparse._SubParsersAction]:
    """Create an instance of :class:`argparse.ArgumentParser`

    :return: A tuple of created parser and subparser instances
    """
    parser = argparse.ArgumentParser(
        prog="s5kit",
        description="Audio tagging, separation scoring and label correction toolkit",
    )
    parser.add_argument("--format", choices=["json", "text"], default="text", help="Output format type")
    parser.add_argument("--config", help=f"YAML configuration file. Default: {Configuration.DEFAULT_PATH}")
    parser.add_argument("-v", "--verbose", action="count", default=0, help="More logging, repeat for debug output")
    subparser = parser.add_subparsers(dest="object", required=True)
    return parser, subparser


def build_dispatch_map(parser: argparse._SubParsersAction) -> dict:
    """Create callable dispatch map.

    :param parser: Subparser action of the root parser
    :return: Map of callables for each CLI (``object``, ``action``) pair
    """
    dispatch_map = register_command_parsers(GenericCommand, parser)
    return dispatch_map


def parse_args(parser: argparse.ArgumentParser, argv: Sequence[str] = None) -> argparse.Namespace:
    """Parse command line arguments using provided parser.

    :param parser: Instance of initialised :mod:`argparse`
    :param argv: Arguments, default: ``sys.argv[1:]``
    :return: Namespace generated by :meth:`~argparse.ArgumentParser.parse_args`
    """
    return parser.parse_args(argv)


def dispatch_command(args: argparse.Namespace, dispatch_map: dict) -> int:
    """Given a parsed arguments object and a dispatch map, call
    relevant callable for ``object`` and ``command`` pair.

    Pass on all other available arguments to the callable as keyword
    arguments, but remove ``object``, ``command`` and ``verbose``.

    :param args: Object containing parsed arguments
    :param dispatch_map: Dictionary with callables for (``object``, ``command``) pairs
    :return: Exit code of the command
    """
    key = (args.object, args.command)
    cmd_args = {k: v for k, v in args.__dict__.items() if k not in ["object", "command", "verbose"]}
    return dispatch_map[key](**cmd_args)


def configure_logging(verbosity: int):
    """Log to standard error: warnings by default, ``-v`` info, ``-vv`` debug"""
    level = logging.WARNING if verbosity <= 0 else logging.INFO if verbosity == 1 else logging.DEBUG
    logging.basicConfig(level=level, format=LOG_FORMAT, stream=sys.stderr)


def app(argv: Sequence[str] = None):
    """Main application function.

    Build parser, create command dispatch map and call the command
    specified on the command line. Exit with 0 on success, 2 on usage or
    configuration errors, 3 on data errors and 4 on backend errors.
    """
    parser, subparser = init_parser()
    dispatch_map = build_dispatch_map(subparser)
    args = parse_args(parser, argv)
    configure_logging(args.verbose)

    try:
        code = dispatch_command(args, dispatch_map)
    except S5KitError as exc:
        logger.debug("Command failed", exc_info=True)
        print(f"s5kit: error: {exc}", file=sys.stderr)
        sys.exit(exc.exit_code)

    sys.exit(code or 0)


if __name__ == "__main__":
    app()
