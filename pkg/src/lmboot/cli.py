"""Command-line interface.

One subcommand per pipeline stage plus the full runner and the two sweep
harnesses. Reports go to stdout as TSV; progress logs go to stderr.
Exit codes: 0 success, 2 configuration/validation error, 3 data error,
4 internal invariant violation.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import adapt, embed, evalkit, pipeline, postedit, select
from .corpus import (
    build_frequency_table,
    load_catalogs,
    load_utterances,
    load_word_vectors,
)
from .errors import ConfigError, DataError, InvariantError
from .ngram_lm import (
    perplexity,
    read_arpa,
    train_katz,
    tune_interpolation,
    write_arpa,
)
from .util import fmt6

logger = logging.getLogger("lmboot")


def _common_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", default=None, help="INI config file")
    parser.add_argument("--seed", type=int, default=42)
    parser.add_argument("--jobs", type=int, default=1)
    parser.add_argument("--out", default="out", help="artifact directory")


def _pipeline_config(args) -> pipeline.PipelineConfig:
    overrides = {
        "seed": args.seed,
        "jobs": args.jobs,
        "out_dir": args.out,
    }
    for key in ("transcribed", "translations", "tuning", "test", "floor"):
        value = getattr(args, key, None)
        if value is not None:
            overrides[key] = value
    return pipeline.load_config(args.config, overrides)


def _floats(text: str) -> list[float]:
    return [float(v) for v in text.split(",") if v.strip()]


def _ints(text: str) -> list[int]:
    return [int(v) for v in text.split(",") if v.strip()]


def _read_token_lines(path) -> list[list[str]]:
    with open(path, encoding="utf-8") as fh:
        return [line.split() for line in fh if line.strip()]


# --------------------------------------------------------------------------
# subcommands
# --------------------------------------------------------------------------

def _cmd_pipeline(args) -> None:
    report = pipeline.run_pipeline(_pipeline_config(args))
    sys.stdout.write(report.to_tsv())


def _cmd_sweep_floor(args) -> None:
    cfg = _pipeline_config(args)
    rows = pipeline.sweep_floor(cfg, _floats(args.floors))
    out = Path(cfg.out_dir) / "sweep_floor.tsv"
    pipeline.write_floor_table(rows, out)
    sys.stdout.write(out.read_text(encoding="utf-8"))


def _cmd_sweep_volume(args) -> None:
    cfg = _pipeline_config(args)
    rows = pipeline.sweep_volume(cfg, _ints(args.volumes))
    out = Path(cfg.out_dir) / "sweep_volume.tsv"
    pipeline.write_volume_table(rows, out)
    sys.stdout.write(out.read_text(encoding="utf-8"))


def _cmd_train_lm(args) -> None:
    corpus = [u.tokens for u in load_utterances(args.input)]
    model = train_katz(corpus, args.order, args.k)
    write_arpa(model, args.arpa)
    if args.ppl:
        held_out = [u.tokens for u in load_utterances(args.ppl)]
        sys.stdout.write(f"ppl\t{fmt6(perplexity(model, held_out))}\n")


def _cmd_interpolate(args) -> None:
    models = [read_arpa(path) for path in args.arpa]
    tuning = [u.tokens for u in load_utterances(args.tuning)]
    roles = tuple(args.roles.split(",")) if args.roles else None
    mixture = tune_interpolation(models, tuning, args.floor, roles)
    for role, weight in zip(mixture.roles, mixture.weights):
        sys.stdout.write(f"weight.{role}\t{fmt6(weight)}\n")
    sys.stdout.write(f"ppl.tuning\t{fmt6(perplexity(mixture, tuning))}\n")
    if args.eval:
        held_out = [u.tokens for u in load_utterances(args.eval)]
        sys.stdout.write(f"ppl.eval\t{fmt6(perplexity(mixture, held_out))}\n")


def _cmd_embed(args) -> None:
    utterances = load_utterances(args.input)
    table = load_word_vectors(args.vectors)
    sents = [u.tokens for u in utterances]
    ids = [u.id for u in utterances]
    if args.method == embed.AVERAGE:
        embeddings = [embed.embed_average(s, table, i) for s, i in zip(sents, ids)]
    elif args.method == embed.SIF:
        freq_corpus = (
            [u.tokens for u in load_utterances(args.freq_corpus)]
            if args.freq_corpus else sents
        )
        freq = build_frequency_table(freq_corpus, args.alpha)
        params = embed.SifParams(weight_a=args.sif_a)
        embeddings = embed.embed_sif(sents, table, freq, params, ids)
    else:
        raise ConfigError(f"unknown embedding method {args.method!r}")
    embed.write_embeddings(embeddings, args.output)
    logger.info("wrote %d embeddings to %s", len(embeddings), args.output)


def _cmd_select(args) -> None:
    in_embs = embed.import_external_embeddings(args.in_embeddings)
    pool_embs = embed.import_external_embeddings(args.pool_embeddings)
    centroids = select.compute_centroids(
        [e.vector for e in in_embs], [e.vector for e in pool_embs]
    )
    scores = select.score_embeddings(pool_embs, centroids)
    chosen = select.select_top_fraction(scores, args.fraction)
    select.write_id_list(chosen, args.ids)
    if args.scores:
        select.write_scores_tsv(scores, args.scores)
    sys.stdout.write(f"selected\t{len(chosen)}\n")


def _cmd_postedit(args) -> None:
    nbest = postedit.load_translations(args.translations)
    entity_index = {}
    if args.sources:
        entity_index = {u.id: u.entities for u in load_utterances(args.sources)}
    catalogs = load_catalogs(args.catalogs) if args.catalogs else {}
    freq = build_frequency_table(
        [u.tokens for u in load_utterances(args.freq_corpus)], args.alpha
    )
    edits = tuple(e.strip() for e in args.edits.split(",") if e.strip())
    source_vocab = set()
    for nb in nbest:
        source_vocab.update(nb.source_tokens)
    relfreq_max = postedit.max_source_relfreq(source_vocab, freq)
    records = []
    for nb in nbest:
        uid, tokens, spans, _ = postedit.apply_edits(
            (nb.id, nb.hypotheses[0], entity_index.get(nb.id, ())),
            catalogs=catalogs, freq=freq, relfreq_max=relfreq_max,
            p_max=args.p_max, seed=args.seed, edits=edits,
        )
        records.append(postedit.edited_record(uid, tokens, spans, edits))
    postedit.write_edited_jsonl(records, args.output)
    sys.stdout.write(f"edited\t{len(records)}\n")


def _cmd_rescore(args) -> None:
    nbest = postedit.load_translations(args.translations)
    model = read_arpa(args.arpa)
    cfg = adapt.RescoreConfig(args.lm_weight, not args.no_length_normalize)
    scores = {}
    records = []
    for nb in nbest:
        result = adapt.rescore(nb, model, cfg)
        scores[nb.id] = result.combined_scores[result.chosen_index]
        records.append({"id": nb.id, "tokens": list(result.chosen.target_tokens)})
    postedit.write_edited_jsonl(records, args.output)
    if args.scores:
        adapt.write_score_dump(scores, "combined", args.scores)
    sys.stdout.write(f"rescored\t{len(records)}\n")


def _cmd_filter(args) -> None:
    nbest = postedit.load_translations(args.translations)
    cfg = adapt.FilterConfig(args.metric, args.fraction,
                             not args.no_length_normalize)
    model = read_arpa(args.arpa) if args.arpa else None
    items = [(nb.id, nb.hypotheses[0]) for nb in nbest]
    result = adapt.filter_translations(items, cfg, model)
    select.write_id_list(result.retained_ids, args.ids)
    if args.scores:
        adapt.write_score_dump(result.scores, args.metric, args.scores)
    sys.stdout.write(f"retained\t{len(result.retained_ids)}\n")


def _cmd_evaluate(args) -> None:
    if args.metric == "bleu":
        hyps = _read_token_lines(args.hypotheses)
        refs = _read_token_lines(args.references)
        sys.stdout.write(f"bleu\t{evalkit.corpus_bleu(hyps, refs):.2f}\n")
    elif args.metric == "wer":
        hyps = _read_token_lines(args.hypotheses)
        refs = _read_token_lines(args.references)
        if len(hyps) != len(refs):
            raise DataError(
                f"{len(hyps)} hypotheses vs {len(refs)} references"
            )
        errors = 0
        ref_tokens = 0
        for ref, hyp in zip(refs, hyps):
            result = evalkit.wer(ref, hyp)
            errors += result.errors
            ref_tokens += len(ref)
        sys.stdout.write(f"wer\t{fmt6(errors / ref_tokens)}\n")
    else:
        stats = _read_scenario_stats(args.stats)
        report = evalkit.scenario_report(stats)
        sys.stdout.write(report.to_tsv())


def _read_scenario_stats(path) -> list[evalkit.ScenarioStats]:
    rows = []
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().strip().split("\t")
        expected = ["scenario", "baseline_wer", "postedit_wer", "combined_wer",
                    "ne_tokens", "total_tokens"]
        if header[:6] != expected:
            raise DataError(f"{path}: header must start with {expected}")
        for lineno, line in enumerate(fh, start=2):
            if not line.strip():
                continue
            parts = line.rstrip("\n").split("\t")
            if len(parts) < 6:
                raise DataError(f"{path}:{lineno}: expected >= 6 columns")
            rows.append(evalkit.ScenarioStats(
                parts[0], float(parts[1]), float(parts[2]), float(parts[3]),
                int(parts[4]), int(parts[5]),
                parts[6] if len(parts) > 6 else None,
            ))
    return rows


# --------------------------------------------------------------------------
# parser
# --------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lmboot",
        description="Bootstrap n-gram language models from translated text.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("pipeline", help="run every enabled stage end to end")
    _common_flags(p)
    for flag in ("transcribed", "translations", "tuning", "test"):
        p.add_argument(f"--{flag}")
    p.add_argument("--floor", type=float)
    p.set_defaults(func=_cmd_pipeline)

    p = sub.add_parser("sweep-floor", help="re-tune the mixture per floor weight")
    _common_flags(p)
    p.add_argument("--floors", required=True, help="comma-separated floors")
    p.add_argument("--floor", type=float)
    p.set_defaults(func=_cmd_sweep_floor)

    p = sub.add_parser("sweep-volume", help="vary the transcribed data volume")
    _common_flags(p)
    p.add_argument("--volumes", required=True, help="comma-separated sizes")
    p.set_defaults(func=_cmd_sweep_volume)

    p = sub.add_parser("train-lm", help="train a back-off model, write ARPA")
    _common_flags(p)
    p.add_argument("--input", required=True)
    p.add_argument("--order", type=int, default=4)
    p.add_argument("--k", type=int, default=5)
    p.add_argument("--arpa", required=True)
    p.add_argument("--ppl", help="report perplexity on this corpus")
    p.set_defaults(func=_cmd_train_lm)

    p = sub.add_parser("interpolate", help="EM-tune a mixture of ARPA models")
    _common_flags(p)
    p.add_argument("--arpa", action="append", required=True,
                   help="repeat once per component")
    p.add_argument("--roles", help="comma-separated component roles")
    p.add_argument("--tuning", required=True)
    p.add_argument("--floor", type=float, default=0.25)
    p.add_argument("--eval", help="report mixture perplexity on this corpus")
    p.set_defaults(func=_cmd_interpolate)

    p = sub.add_parser("embed", help="write sentence embeddings to file")
    _common_flags(p)
    p.add_argument("--method", default=embed.SIF,
                   choices=[embed.AVERAGE, embed.SIF])
    p.add_argument("--input", required=True)
    p.add_argument("--vectors", required=True)
    p.add_argument("--freq-corpus", dest="freq_corpus")
    p.add_argument("--sif-a", dest="sif_a", type=float, default=1e-3)
    p.add_argument("--alpha", type=float, default=1.0)
    p.add_argument("--output", required=True)
    p.set_defaults(func=_cmd_embed)

    p = sub.add_parser("select", help="rank and select by centroid distance")
    _common_flags(p)
    p.add_argument("--in-embeddings", dest="in_embeddings", required=True)
    p.add_argument("--pool-embeddings", dest="pool_embeddings", required=True)
    p.add_argument("--fraction", type=float, default=0.25)
    p.add_argument("--ids", required=True)
    p.add_argument("--scores")
    p.set_defaults(func=_cmd_select)

    p = sub.add_parser("postedit", help="apply entity and code-mix edits")
    _common_flags(p)
    p.add_argument("--translations", required=True)
    p.add_argument("--sources", help="source utterances with entity spans")
    p.add_argument("--catalogs")
    p.add_argument("--freq-corpus", dest="freq_corpus", required=True)
    p.add_argument("--edits", default=",".join(pipeline.EDIT_NAMES))
    p.add_argument("--p-max", dest="p_max", type=float, default=0.5)
    p.add_argument("--alpha", type=float, default=1.0)
    p.add_argument("--output", required=True)
    p.set_defaults(func=_cmd_postedit)

    p = sub.add_parser("rescore", help="pick hypotheses with an in-domain LM")
    _common_flags(p)
    p.add_argument("--translations", required=True)
    p.add_argument("--arpa", required=True)
    p.add_argument("--lm-weight", dest="lm_weight", type=float, default=0.3)
    p.add_argument("--no-length-normalize", action="store_true")
    p.add_argument("--output", required=True)
    p.add_argument("--scores")
    p.set_defaults(func=_cmd_rescore)

    p = sub.add_parser("filter", help="retain the top fraction by quality")
    _common_flags(p)
    p.add_argument("--translations", required=True)
    p.add_argument("--metric", default=adapt.SLM_SCORE,
                   choices=[adapt.MT_SCORE, adapt.SLM_SCORE])
    p.add_argument("--fraction", type=float, default=0.75)
    p.add_argument("--arpa", help="in-domain LM (required for slm_score)")
    p.add_argument("--no-length-normalize", action="store_true")
    p.add_argument("--ids", required=True)
    p.add_argument("--scores")
    p.set_defaults(func=_cmd_filter)

    p = sub.add_parser("evaluate", help="BLEU, WER, or the scenario report")
    _common_flags(p)
    p.add_argument("--metric", required=True, choices=["bleu", "wer", "report"])
    p.add_argument("--hypotheses")
    p.add_argument("--references")
    p.add_argument("--stats", help="scenario stats TSV (report metric)")
    p.set_defaults(func=_cmd_evaluate)

    return parser


def main(argv=None) -> int:
    logging.basicConfig(
        stream=sys.stderr, level=logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        args = build_parser().parse_args(argv)
        args.func(args)
        return 0
    except pipeline.StageError as exc:
        logger.error("%s", exc)
        return _exit_code(exc.cause)
    except Exception as exc:  # noqa: BLE001 - single translation point
        logger.error("%s", exc)
        return _exit_code(exc)


def _exit_code(exc: Exception) -> int:
    if isinstance(exc, ConfigError):
        return 2
    if isinstance(exc, DataError):
        return 3
    if isinstance(exc, (InvariantError, AssertionError, ArithmeticError)):
        return 4
    if isinstance(exc, ValueError):
        return 2
    if isinstance(exc, OSError):
        return 3
    return 4


if __name__ == "__main__":
    sys.exit(main())
