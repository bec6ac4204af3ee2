"""End-to-end orchestration: data selection, rescoring, post-editing,
filtering, LM building, interpolation and evaluation, plus the floor-weight
and data-volume sweep harnesses.

Stages run in a fixed order and disabled stages pass their input through
unchanged. Any stage failure aborts the run, removes partial artifacts and
reports the failing stage. Re-running with identical inputs, configuration
and seed produces byte-identical artifacts; stage wall-clock times are
logged to stderr only, never written into report files.
"""

from __future__ import annotations

import configparser
import functools
import logging
import random
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

from . import adapt, embed, postedit, select
from .corpus import (
    EntitySpan,
    Utterance,
    build_frequency_table,
    load_catalogs,
    load_utterances,
    load_word_vectors,
)
from .errors import ConfigError
from .ngram_lm import (
    InterpolatedModel,
    KatzModel,
    perplexity,
    train_katz,
    tune_interpolation,
    write_arpa,
)
from .util import fmt6, parallel_map

logger = logging.getLogger(__name__)

EDIT_NAMES = ("ne_copy", "ne_resample", "code_mix")
EMBED_METHODS = (embed.AVERAGE, embed.SIF, embed.EXTERNAL)


# --------------------------------------------------------------------------
# configuration
# --------------------------------------------------------------------------

@dataclass
class StageToggles:
    select: bool = False
    rescore: bool = True
    postedit: bool = True
    filter: bool = True


@dataclass
class PipelineConfig:
    # required inputs
    transcribed: str = ""
    translations: str = ""
    tuning: str = ""
    test: str = ""
    out_dir: str = "out"
    # optional inputs
    catalogs: str | None = None
    word_vectors: str | None = None
    selection_pool: str | None = None
    in_embeddings: str | None = None
    pool_embeddings: str | None = None
    source_utterances: str | None = None
    # stage toggles
    stages: StageToggles = field(default_factory=StageToggles)
    # selection
    embedding_method: str = embed.SIF
    sif_a: float = 1e-3
    select_fraction: float = 0.25
    # rescoring
    lm_weight: float = 0.3
    length_normalize: bool = True
    # post-editing
    edits: tuple[str, ...] = EDIT_NAMES
    p_max: float = 0.5
    alpha: float = 1.0
    # filtering
    filter_metric: str = adapt.SLM_SCORE
    keep_fraction: float = 0.75
    # language model
    order: int = 4
    gt_k: int = 5
    floor: float = 0.25
    # run control
    seed: int = 42
    jobs: int = 1

    def validate(self) -> None:
        for name in ("transcribed", "translations", "tuning", "test"):
            path = getattr(self, name)
            if not path:
                raise ConfigError(f"missing required path: {name}")
            if not Path(path).exists():
                raise ConfigError(f"{name} file does not exist: {path}")
        for name in ("catalogs", "word_vectors", "selection_pool",
                     "in_embeddings", "pool_embeddings", "source_utterances"):
            path = getattr(self, name)
            if path and not Path(path).exists():
                raise ConfigError(f"{name} file does not exist: {path}")
        if self.stages.select:
            if self.embedding_method not in EMBED_METHODS:
                raise ConfigError(
                    f"unknown embedding method {self.embedding_method!r}"
                )
            if self.embedding_method == embed.EXTERNAL:
                if not (self.in_embeddings and self.pool_embeddings):
                    raise ConfigError(
                        "external embedding selection needs in_embeddings "
                        "and pool_embeddings"
                    )
            elif not (self.word_vectors and self.selection_pool):
                raise ConfigError(
                    "embedding-based selection needs word_vectors and "
                    "selection_pool"
                )
        if not 0.0 < self.select_fraction <= 1.0:
            raise ConfigError(f"select_fraction out of (0, 1]: {self.select_fraction}")
        if not 0.0 <= self.lm_weight <= 1.0:
            raise ConfigError(f"lm_weight out of [0, 1]: {self.lm_weight}")
        unknown = set(self.edits) - set(EDIT_NAMES)
        if unknown:
            raise ConfigError(f"unknown edits: {sorted(unknown)}")
        if not 0.0 <= self.p_max <= 1.0:
            raise ConfigError(f"p_max out of [0, 1]: {self.p_max}")
        if self.alpha < 0:
            raise ConfigError(f"alpha must be >= 0: {self.alpha}")
        if self.filter_metric not in (adapt.MT_SCORE, adapt.SLM_SCORE):
            raise ConfigError(f"unknown filter metric {self.filter_metric!r}")
        if not 0.0 < self.keep_fraction <= 1.0:
            raise ConfigError(f"keep_fraction out of (0, 1]: {self.keep_fraction}")
        if self.order < 1 or self.gt_k < 1:
            raise ConfigError("order and gt_k must be >= 1")
        if not 0.0 <= self.floor < 1.0:
            raise ConfigError(f"floor out of [0, 1): {self.floor}")
        if self.jobs < 1:
            raise ConfigError(f"jobs must be >= 1: {self.jobs}")


_BOOL = {"true": True, "false": False, "yes": True, "no": False,
         "1": True, "0": False}


def _to_bool(value: str) -> bool:
    try:
        return _BOOL[value.strip().lower()]
    except KeyError:
        raise ConfigError(f"not a boolean: {value!r}") from None


def load_config(path, overrides: dict | None = None) -> PipelineConfig:
    """Build a PipelineConfig from an INI-style file plus explicit overrides.

    Sections: [paths], [stages], [select], [rescore], [postedit], [filter],
    [lm], [run]. Every key can be overridden by the matching CLI flag.
    """
    parser = configparser.ConfigParser()
    if path is not None:
        if not Path(path).exists():
            raise ConfigError(f"config file does not exist: {path}")
        parser.read(path, encoding="utf-8")
    cfg = PipelineConfig()
    path_fields = ("transcribed", "translations", "tuning", "test", "out_dir",
                   "catalogs", "word_vectors", "selection_pool",
                   "in_embeddings", "pool_embeddings", "source_utterances")
    if parser.has_section("paths"):
        for key, value in parser.items("paths"):
            if key not in path_fields:
                raise ConfigError(f"unknown [paths] key: {key}")
            setattr(cfg, key, value)
    if parser.has_section("stages"):
        for key, value in parser.items("stages"):
            if not hasattr(cfg.stages, key):
                raise ConfigError(f"unknown [stages] key: {key}")
            setattr(cfg.stages, key, _to_bool(value))
    section_map = {
        "select": {"method": ("embedding_method", str),
                   "fraction": ("select_fraction", float),
                   "sif_a": ("sif_a", float)},
        "rescore": {"lm_weight": ("lm_weight", float),
                    "length_normalize": ("length_normalize", _to_bool)},
        "postedit": {"edits": ("edits", lambda v: tuple(
                        e.strip() for e in v.split(",") if e.strip())),
                     "p_max": ("p_max", float),
                     "alpha": ("alpha", float)},
        "filter": {"metric": ("filter_metric", str),
                   "keep_fraction": ("keep_fraction", float)},
        "lm": {"order": ("order", int), "k": ("gt_k", int),
               "floor": ("floor", float)},
        "run": {"seed": ("seed", int), "jobs": ("jobs", int)},
    }
    for section, keys in section_map.items():
        if not parser.has_section(section):
            continue
        for key, value in parser.items(section):
            if key not in keys:
                raise ConfigError(f"unknown [{section}] key: {key}")
            attr, conv = keys[key]
            try:
                setattr(cfg, attr, conv(value))
            except ConfigError:
                raise
            except ValueError:
                raise ConfigError(
                    f"bad value for [{section}] {key}: {value!r}"
                ) from None
    for key, value in (overrides or {}).items():
        if value is None:
            continue
        if hasattr(cfg.stages, key):
            setattr(cfg.stages, key, value)
        elif hasattr(cfg, key):
            setattr(cfg, key, value)
        else:
            raise ConfigError(f"unknown config override: {key}")
    return cfg


# --------------------------------------------------------------------------
# run report
# --------------------------------------------------------------------------

_COUNT_KEYS = ("selected", "translations", "rescored", "postedited",
               "retained", "unaligned_entities")
_PPL_KEYS = ("transcribed_tuning", "translated_tuning", "interpolated_tuning",
             "transcribed_test", "translated_test", "interpolated_test")


@dataclass
class RunReport:
    counts: dict[str, int] = field(default_factory=dict)
    perplexities: dict[str, float] = field(default_factory=dict)
    weights: dict[str, float] = field(default_factory=dict)
    floor: float = 0.0
    stage_seconds: dict[str, float] = field(default_factory=dict)

    def to_tsv(self) -> str:
        # timings deliberately excluded: report artifacts must be
        # byte-identical across repeated runs
        lines = ["key\tvalue"]
        for key in _COUNT_KEYS:
            lines.append(f"count.{key}\t{self.counts.get(key, 0)}")
        for role in sorted(self.weights):
            lines.append(f"weight.{role}\t{fmt6(self.weights[role])}")
        lines.append(f"param.floor\t{fmt6(self.floor)}")
        for key in _PPL_KEYS:
            if key in self.perplexities:
                lines.append(f"ppl.{key}\t{fmt6(self.perplexities[key])}")
        return "\n".join(lines) + "\n"


class StageError(Exception):
    """Raised when a pipeline stage fails; carries the stage name."""

    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"stage {stage!r} failed: {cause}")
        self.stage = stage
        self.cause = cause


# --------------------------------------------------------------------------
# pipeline
# --------------------------------------------------------------------------

@dataclass
class PreparedComponents:
    """Everything upstream of interpolation, shared by the sweep harnesses."""

    transcribed: list[Utterance]
    tuning: list[tuple[str, ...]]
    test: list[tuple[str, ...]]
    lm_transcribed: KatzModel
    lm_translated: KatzModel
    report: RunReport


class PipelineRunner:
    def __init__(self, cfg: PipelineConfig):
        cfg.validate()
        self.cfg = cfg
        self.out_dir = Path(cfg.out_dir)
        self.report = RunReport(floor=cfg.floor)
        self._created: list[Path] = []

    # -- artifact bookkeeping ------------------------------------------------

    def _artifact(self, name: str) -> Path:
        self.out_dir.mkdir(parents=True, exist_ok=True)
        path = self.out_dir / name
        self._created.append(path)
        return path

    def _cleanup(self) -> None:
        for path in self._created:
            path.unlink(missing_ok=True)

    def _stage(self, name: str, fn, *args, **kwargs):
        start = time.perf_counter()
        try:
            result = fn(*args, **kwargs)
        except Exception as exc:
            self._cleanup()
            raise StageError(name, exc) from exc
        elapsed = time.perf_counter() - start
        self.report.stage_seconds[name] = elapsed
        logger.info("stage %s finished in %.3fs", name, elapsed)
        return result

    # -- stages ---------------------------------------------------------------

    def _load_inputs(self):
        cfg = self.cfg
        self.transcribed = load_utterances(cfg.transcribed)
        self.tuning = [u.tokens for u in load_utterances(cfg.tuning)]
        self.test = [u.tokens for u in load_utterances(cfg.test)]
        self.nbest = postedit.load_translations(cfg.translations)
        self.report.counts["translations"] = len(self.nbest)
        self.entity_index: dict[str, tuple[EntitySpan, ...]] = {}
        if cfg.source_utterances:
            for utt in load_utterances(cfg.source_utterances):
                self.entity_index[utt.id] = utt.entities
        self.catalogs = load_catalogs(cfg.catalogs) if cfg.catalogs else {}

    def _run_select(self) -> None:
        cfg = self.cfg
        if not cfg.stages.select:
            self.report.counts["selected"] = 0
            return
        if cfg.embedding_method == embed.EXTERNAL:
            in_embs = embed.import_external_embeddings(cfg.in_embeddings)
            pool_embs = embed.import_external_embeddings(cfg.pool_embeddings)
        else:
            table = load_word_vectors(cfg.word_vectors)
            pool = load_utterances(cfg.selection_pool)
            in_sents = [u.tokens for u in self.transcribed]
            pool_sents = [u.tokens for u in pool]
            in_ids = [u.id for u in self.transcribed]
            pool_ids = [u.id for u in pool]
            if cfg.embedding_method == embed.AVERAGE:
                in_embs = [embed.embed_average(s, table, i)
                           for s, i in zip(in_sents, in_ids)]
                pool_embs = [embed.embed_average(s, table, i)
                             for s, i in zip(pool_sents, pool_ids)]
            else:
                # one weighting table and one common direction over both sides
                freq = build_frequency_table(in_sents + pool_sents, cfg.alpha)
                params = embed.SifParams(weight_a=cfg.sif_a)
                all_embs = embed.embed_sif(
                    in_sents + pool_sents, table, freq, params,
                    in_ids + pool_ids,
                )
                in_embs = all_embs[:len(in_sents)]
                pool_embs = all_embs[len(in_sents):]
        centroids = select.compute_centroids(
            [e.vector for e in in_embs], [e.vector for e in pool_embs]
        )
        scores = select.score_embeddings(pool_embs, centroids)
        chosen = select.select_top_fraction(scores, cfg.select_fraction)
        select.write_scores_tsv(scores, self._artifact("selection_scores.tsv"))
        select.write_id_list(chosen, self._artifact("selected_ids.txt"))
        self.report.counts["selected"] = len(chosen)

    def _train_transcribed(self) -> None:
        cfg = self.cfg
        self.lm_transcribed = train_katz(
            [u.tokens for u in self.transcribed], cfg.order, cfg.gt_k
        )
        write_arpa(self.lm_transcribed, self._artifact("transcribed.arpa"))

    def _run_rescore(self) -> None:
        cfg = self.cfg
        self.chosen: list[tuple[str, postedit.TranslationHypothesis]] = []
        if cfg.stages.rescore:
            rc = adapt.RescoreConfig(cfg.lm_weight, cfg.length_normalize)
            scores = {}
            for nb in self.nbest:
                result = adapt.rescore(nb, self.lm_transcribed, rc)
                self.chosen.append((nb.id, result.chosen))
                scores[nb.id] = result.combined_scores[result.chosen_index]
            adapt.write_score_dump(scores, "combined",
                                   self._artifact("rescore_scores.tsv"))
            self.report.counts["rescored"] = len(self.chosen)
        else:
            self.chosen = [(nb.id, nb.hypotheses[0]) for nb in self.nbest]
            self.report.counts["rescored"] = 0

    def _run_postedit(self) -> None:
        cfg = self.cfg
        if not cfg.stages.postedit:
            self.edited = [(uid, list(h.target_tokens), [], 0)
                           for uid, h in self.chosen]
            self.report.counts["postedited"] = 0
            self.report.counts["unaligned_entities"] = 0
            return
        freq = build_frequency_table(
            [u.tokens for u in self.transcribed], cfg.alpha
        )
        source_vocab = set()
        for _, hyp in self.chosen:
            source_vocab.update(hyp.source_tokens)
        relfreq_max = postedit.max_source_relfreq(source_vocab, freq)
        items = [
            (uid, hyp, self.entity_index.get(uid, ()))
            for uid, hyp in self.chosen
        ]
        worker = functools.partial(
            postedit.apply_edits,
            catalogs=self.catalogs,
            freq=freq,
            relfreq_max=relfreq_max,
            p_max=cfg.p_max,
            seed=cfg.seed,
            edits=cfg.edits,
        )
        self.edited = parallel_map(worker, items, cfg.jobs)
        self.report.counts["postedited"] = len(self.edited)
        self.report.counts["unaligned_entities"] = sum(
            unaligned for *_ , unaligned in self.edited
        )

    def _run_filter(self) -> None:
        cfg = self.cfg
        if cfg.stages.filter:
            fc = adapt.FilterConfig(cfg.filter_metric, cfg.keep_fraction,
                                    cfg.length_normalize)
            result = adapt.filter_translations(
                self.chosen, fc,
                self.lm_transcribed if cfg.filter_metric == adapt.SLM_SCORE else None,
            )
            retained = set(result.retained_ids)
            adapt.write_score_dump(result.scores, cfg.filter_metric,
                                   self._artifact("filter_scores.tsv"))
            select.write_id_list(result.retained_ids,
                                 self._artifact("retained_ids.txt"))
        else:
            retained = {uid for uid, *_ in self.edited}
        self.retained = [item for item in self.edited if item[0] in retained]
        self.report.counts["retained"] = len(self.retained)
        records = [
            postedit.edited_record(uid, tokens, spans,
                                   cfg.edits if cfg.stages.postedit else ())
            for uid, tokens, spans, _ in self.retained
        ]
        postedit.write_edited_jsonl(records, self._artifact("edited.jsonl"))

    def _train_translated(self) -> None:
        cfg = self.cfg
        self.lm_translated = train_katz(
            [tokens for _, tokens, _, _ in self.retained], cfg.order, cfg.gt_k
        )
        write_arpa(self.lm_translated, self._artifact("translated.arpa"))

    # -- public entry points ----------------------------------------------------

    def prepare(self) -> PreparedComponents:
        """Run every stage up to (but excluding) interpolation."""
        self._stage("load-inputs", self._load_inputs)
        self._stage("select", self._run_select)
        self._stage("train-transcribed-lm", self._train_transcribed)
        self._stage("rescore", self._run_rescore)
        self._stage("postedit", self._run_postedit)
        self._stage("filter", self._run_filter)
        self._stage("train-translated-lm", self._train_translated)
        return PreparedComponents(
            self.transcribed, self.tuning, self.test,
            self.lm_transcribed, self.lm_translated, self.report,
        )

    def run(self) -> RunReport:
        prep = self.prepare()
        mixture = self._stage(
            "interpolate", tune_interpolation,
            [prep.lm_transcribed, prep.lm_translated],
            prep.tuning, self.cfg.floor,
        )
        self._stage("evaluate", self._evaluate, prep, mixture)
        report_path = self._artifact("report.tsv")
        report_path.write_text(self.report.to_tsv(), encoding="utf-8")
        return self.report

    def _evaluate(self, prep: PreparedComponents, mixture: InterpolatedModel):
        for role, weight in zip(mixture.roles, mixture.weights):
            self.report.weights[role] = weight
        pairs = (
            ("transcribed", prep.lm_transcribed),
            ("translated", prep.lm_translated),
            ("interpolated", mixture),
        )
        for name, model in pairs:
            self.report.perplexities[f"{name}_tuning"] = perplexity(model, prep.tuning)
            self.report.perplexities[f"{name}_test"] = perplexity(model, prep.test)


def run_pipeline(cfg: PipelineConfig) -> RunReport:
    return PipelineRunner(cfg).run()


# --------------------------------------------------------------------------
# sweeps
# --------------------------------------------------------------------------

@dataclass
class FloorRow:
    floor: float
    tuning_ppl: float
    test_ppl: float
    weights: dict[str, float]


def sweep_floor(cfg: PipelineConfig, floors: Sequence[float]) -> list[FloorRow]:
    """Re-tune and re-evaluate the mixture once per floor value.

    Upstream artifacts (both component LMs) are built once and shared.
    """
    for floor in floors:
        if not 0.0 <= floor < 1.0:
            raise ConfigError(f"floor out of [0, 1): {floor}")
    runner = PipelineRunner(cfg)
    prep = runner.prepare()
    rows = []
    for floor in floors:
        mixture = tune_interpolation(
            [prep.lm_transcribed, prep.lm_translated], prep.tuning, floor
        )
        rows.append(FloorRow(
            floor,
            perplexity(mixture, prep.tuning),
            perplexity(mixture, prep.test),
            dict(zip(mixture.roles, mixture.weights)),
        ))
    return rows


def write_floor_table(rows: Sequence[FloorRow], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("floor\ttuning_ppl\ttest_ppl\tw_transcribed\tw_translated\n")
        for row in rows:
            fh.write(
                f"{row.floor:g}\t{fmt6(row.tuning_ppl)}\t{fmt6(row.test_ppl)}"
                f"\t{fmt6(row.weights['transcribed'])}"
                f"\t{fmt6(row.weights['translated'])}\n"
            )


@dataclass
class VolumeRow:
    volume: int
    baseline_ppl: float
    augmented_ppl: float
    ppl_reduction_pct: float


def sweep_volume(cfg: PipelineConfig, volumes: Sequence[int]) -> list[VolumeRow]:
    """Compare baseline and augmented LMs at nested transcribed-data volumes.

    One seeded shuffle of the transcribed corpus, then prefixes, so smaller
    volumes are subsets of larger ones. The translated component is shared
    across volumes; perplexity reduction on the test set stands in for the
    recognition-quality deltas a full speech stack would measure.
    """
    runner = PipelineRunner(cfg)
    prep = runner.prepare()
    for volume in volumes:
        if volume < 1 or volume > len(prep.transcribed):
            raise ConfigError(
                f"volume {volume} outside [1, {len(prep.transcribed)}]"
            )
    shuffled = list(prep.transcribed)
    random.Random(cfg.seed).shuffle(shuffled)
    rows = []
    for volume in volumes:
        subset = [u.tokens for u in shuffled[:volume]]
        baseline = train_katz(subset, cfg.order, cfg.gt_k)
        mixture = tune_interpolation(
            [baseline, prep.lm_translated], prep.tuning, cfg.floor
        )
        baseline_ppl = perplexity(baseline, prep.test)
        augmented_ppl = perplexity(mixture, prep.test)
        rows.append(VolumeRow(
            volume, baseline_ppl, augmented_ppl,
            100.0 * (baseline_ppl - augmented_ppl) / baseline_ppl,
        ))
    return rows


def write_volume_table(rows: Sequence[VolumeRow], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("volume\tbaseline_ppl\taugmented_ppl\tppl_reduction_pct\n")
        for row in rows:
            fh.write(
                f"{row.volume}\t{fmt6(row.baseline_ppl)}"
                f"\t{fmt6(row.augmented_ppl)}\t{fmt6(row.ppl_reduction_pct)}\n"
            )
