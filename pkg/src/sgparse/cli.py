"""Command-line surface tying the library together.

Subcommands: synth, align, train, parse, eval, retrieve, trace, gradcheck.
Every flag overrides the matching key of an optional `key = value` config
file passed with --config.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

from .align import AlignMode, SynonymLexicon, align, aligned_subgraph, derive_gold, tokenize
from .corpus import (
    RegionRecord,
    SplitSpec,
    build_instances,
    generate_synthetic,
    graph_to_json,
    load_corpus,
    load_split,
    make_splits,
    read_config,
    save_corpus,
)
from .errors import SgparseError
from .graph import ArcRule, SceneGraph, to_node_centric_lenient
from .model import (
    ModelParams,
    TrainConfig,
    Trainer,
    Vocab,
    grad_check,
    greedy_parse,
    load_checkpoint,
    parse as model_parse,
    save_checkpoint,
)
from .pool import parallel_map
from .retrieval import build_index, evaluate_retrieval, format_results, subgraph_of
from .spice import corpus_f, evaluate_corpus, format_report
from .transition import format_trace, oracle_parse


def _common_flags(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--config", help="flat key = value configuration file")
    sub.add_argument("--corpus", help="line-delimited region corpus")
    sub.add_argument("--lexicon", help="synonym lexicon file")
    sub.add_argument("--checkpoint", help="model checkpoint path")
    sub.add_argument("--arc-rule", choices=["left", "right"], dest="arc_rule")
    sub.add_argument("--align-mode", choices=["full", "all-syn", "no-syn"], dest="align_mode")
    sub.add_argument("--epochs", type=int)
    sub.add_argument("--lr", type=float)
    sub.add_argument("--adam-eps", type=float, dest="adam_eps")
    sub.add_argument("--seed", type=int)


class Settings:
    """CLI flags merged over config-file keys merged over defaults."""

    def __init__(self, args: argparse.Namespace):
        self.args = args
        self.config = read_config(args.config) if getattr(args, "config", None) else {}

    def get(self, key: str, default=None, cast=str):
        flag = getattr(self.args, key, None)
        if flag is not None:
            return flag
        if key in self.config:
            return cast(self.config[key])
        return default

    def require(self, key: str, cast=str):
        value = self.get(key, cast=cast)
        if value is None:
            raise SgparseError(f"missing required setting --{key.replace('_', '-')}")
        return value


def _load_lexicon(settings: Settings) -> SynonymLexicon:
    path = settings.get("lexicon")
    return SynonymLexicon.load(path) if path else SynonymLexicon.empty()


def _arc_rule(settings: Settings) -> ArcRule:
    return ArcRule(settings.get("arc_rule", "left"))


def _align_mode(settings: Settings) -> AlignMode:
    return AlignMode(settings.get("align_mode", "full"))


def _write_text(path: str | None, text: str) -> None:
    if path:
        Path(path).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def cmd_synth(args) -> int:
    settings = Settings(args)
    records = generate_synthetic(args.count, settings.get("seed", 0, int))
    save_corpus(records, args.out)
    print(f"records={len(records)}")
    return 0


def cmd_align(args) -> int:
    settings = Settings(args)
    lexicon = _load_lexicon(settings)
    rule = _arc_rule(settings)
    mode = _align_mode(settings)
    records, skipped = load_corpus(settings.require("corpus"))
    instances, stats = build_instances(records, lexicon, rule, mode)

    lines = []
    by_region = {r.region_id: r for r in records}
    for inst in instances:
        record = by_region[inst.region_id]
        lines.append(json.dumps({
            "image_id": record.image_id,
            "region_id": inst.region_id,
            "n_tokens": len(inst.tokens),
            "arcs": sorted([a.head, a.dep, a.label.value] for a in inst.gold.arcs),
            "reduce": sorted(inst.reduce_set),
        }, sort_keys=True))
    _write_text(args.out, "".join(line + "\n" for line in lines))

    def aligned_pair(record: RegionRecord):
        alignment = align(record.phrase, record.graph, lexicon, mode)
        subgraph = aligned_subgraph(record.graph, alignment, tokenize(record.phrase))
        return subgraph, len(alignment.aligned_nodes)

    pairs = parallel_map(aligned_pair, records)
    candidates = [subgraph for subgraph, _ in pairs]
    oracle_f = corpus_f(candidates, [r.graph for r in records], lexicon)
    total_nodes = sum(len(r.graph.node_refs()) for r in records)
    aligned_nodes = sum(count for _, count in pairs)
    err = sys.stderr
    print(f"records={stats['total']} malformed_skipped={skipped}", file=err)
    print(f"gold_instances={stats['used']} cyclic={stats['cyclic']} "
          f"arc_conflict={stats['arc_conflict']} non_projective={stats['non_projective']}",
          file=err)
    frac = aligned_nodes / total_nodes if total_nodes else 0.0
    print(f"aligned_node_fraction={frac:.4f}", file=err)
    print(f"oracle_corpus_f={oracle_f:.4f}", file=err)
    return 0


def cmd_train(args) -> int:
    settings = Settings(args)
    lexicon = _load_lexicon(settings)
    rule = _arc_rule(settings)
    mode = _align_mode(settings)
    records, _ = load_corpus(settings.require("corpus"))
    eval_records = records
    if args.split_train and args.split_eval:
        spec = SplitSpec(load_split(args.split_train), load_split(args.split_eval))
        records, eval_records = make_splits(records, spec)
    elif args.split_train:
        train_ids = load_split(args.split_train)
        records = [r for r in records if r.image_id in train_ids]
        eval_records = records
    elif args.split_eval:
        eval_ids = load_split(args.split_eval)
        eval_records = [r for r in records if r.image_id in eval_ids]
        records = [r for r in records if r.image_id not in eval_ids]
    instances, stats = build_instances(records, lexicon, rule, mode)
    config = TrainConfig(
        learning_rate=settings.get("lr", 0.001, float),
        adam_epsilon=settings.get("adam_eps", 0.01, float),
        epochs=settings.get("epochs", 4, int),
        rng_seed=settings.get("seed", 0, int),
    )
    vocab = Vocab.from_sentences(inst.tokens for inst in instances)
    params = ModelParams(vocab, rule, seed=config.rng_seed)
    trainer = Trainer(params, config)
    train_items = [(inst.tokens, inst.gold, inst.reduce_set) for inst in instances]
    print(f"instances={stats['used']} skipped_cyclic={stats['cyclic']} "
          f"skipped_arc_conflict={stats['arc_conflict']} "
          f"skipped_non_projective={stats['non_projective']}")

    def parse_phrase(record: RegionRecord) -> SceneGraph:
        tokens = tokenize(record.phrase)
        return to_node_centric_lenient(model_parse(tokens, params), tokens)

    for epoch in range(1, config.epochs + 1):
        mean_loss = trainer.run_epoch(train_items)
        candidates = parallel_map(parse_phrase, eval_records)
        eval_f = corpus_f(candidates, [r.graph for r in eval_records], lexicon)
        print(f"epoch={epoch} mean_loss={mean_loss:.4f} eval_f={eval_f:.4f}")
    save_checkpoint(params, settings.require("checkpoint"), rng_seed=config.rng_seed)
    return 0


def cmd_parse(args) -> int:
    settings = Settings(args)
    params, _ = load_checkpoint(settings.require("checkpoint"))
    source = open(args.input, encoding="utf-8") if args.input else sys.stdin
    try:
        out_lines = []
        for line in source:
            tokens = tokenize(line)
            graph = to_node_centric_lenient(model_parse(tokens, params), tokens)
            out_lines.append(json.dumps(graph_to_json(graph), sort_keys=True))
    finally:
        if args.input:
            source.close()
    _write_text(args.out, "".join(line + "\n" for line in out_lines))
    return 0


def cmd_eval(args) -> int:
    settings = Settings(args)
    params, _ = load_checkpoint(settings.require("checkpoint"))
    lexicon = _load_lexicon(settings)
    records, _ = load_corpus(settings.require("corpus"))

    def parse_record(record: RegionRecord) -> SceneGraph:
        tokens = tokenize(record.phrase)
        return to_node_centric_lenient(model_parse(tokens, params), tokens)

    candidates = parallel_map(parse_record, records)
    report = evaluate_corpus(candidates, [r.graph for r in records], lexicon)
    sys.stdout.write(format_report(report))
    return 0


def cmd_retrieve(args) -> int:
    settings = Settings(args)
    params, _ = load_checkpoint(settings.require("checkpoint"))
    lexicon = _load_lexicon(settings)
    records, _ = load_corpus(settings.require("corpus"))
    by_image: dict[int, list[SceneGraph]] = {}
    for record in records:
        by_image.setdefault(record.image_id, []).append(record.graph)
    index = build_index(sorted(by_image.items()))
    combined = {entry.image_id: entry.graph for entry in index}
    queries = []
    for record in records:
        truth = {record.image_id}
        truth.update(
            image_id for image_id, graph in combined.items()
            if image_id != record.image_id and subgraph_of(record.graph, graph)
        )
        queries.append((record.phrase, truth))

    def parser(text: str) -> SceneGraph:
        tokens = tokenize(text)
        return to_node_centric_lenient(model_parse(tokens, params), tokens)

    result = evaluate_retrieval(queries, parser, index, lexicon)
    _write_text(args.out, format_results(result))
    return 0


def cmd_trace(args) -> int:
    settings = Settings(args)
    sentence = args.sentence
    tokens = tokenize(sentence)
    if args.gold:
        records, _ = load_corpus(args.gold)
        matches = [r for r in records if tokenize(r.phrase) == tokens]
        if not matches:
            raise SgparseError(f"no record in {args.gold} matches the sentence")
        record = matches[0]
        lexicon = _load_lexicon(settings)
        alignment = align(sentence, record.graph, lexicon, _align_mode(settings))
        gold, reduce_set = derive_gold(alignment, record.graph, _arc_rule(settings), len(tokens))
        actions = oracle_parse(len(tokens), gold, reduce_set)
    else:
        params, _ = load_checkpoint(settings.require("checkpoint"))
        _, actions = greedy_parse(tokens, params)
    _write_text(args.out, format_trace(tokens, actions))
    return 0


def cmd_gradcheck(args) -> int:
    settings = Settings(args)
    seed = settings.get("seed", 0, int)
    started = time.perf_counter()
    records = generate_synthetic(args.instances, seed)
    instances, _ = build_instances(records)
    vocab = Vocab.from_sentences(inst.tokens for inst in instances)
    params = ModelParams(vocab, ArcRule.LEFT, emb_dim=12, hidden=8, mlp_hidden=4, seed=seed)
    worst = 0.0
    for inst in instances:
        err = grad_check(params, (inst.tokens, inst.gold, inst.reduce_set), step=args.step)
        worst = max(worst, err)
        print(f"region={inst.region_id} max_rel_err={err:.3e}")
    print(f"worst={worst:.3e} elapsed={time.perf_counter() - started:.1f}s")
    if worst >= 1e-4:
        print("gradient check FAILED", file=sys.stderr)
        return 1
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sgparse", description=__doc__)
    subs = parser.add_subparsers(dest="command", required=True)

    sub = subs.add_parser("synth", help="emit a synthetic corpus")
    _common_flags(sub)
    sub.add_argument("--count", type=int, required=True)
    sub.add_argument("--out", required=True)
    sub.set_defaults(fn=cmd_synth)

    sub = subs.add_parser("align", help="derive gold arcs and alignment statistics")
    _common_flags(sub)
    sub.add_argument("--out", help="gold arcs output file (stdout when omitted)")
    sub.set_defaults(fn=cmd_align)

    sub = subs.add_parser("train", help="train a parser and write a checkpoint")
    _common_flags(sub)
    sub.add_argument("--split-train", dest="split_train",
                     help="file of training image ids, one per line")
    sub.add_argument("--split-eval", dest="split_eval",
                     help="file of evaluation image ids, one per line")
    sub.set_defaults(fn=cmd_train)

    sub = subs.add_parser("parse", help="parse text lines into scene graphs")
    _common_flags(sub)
    sub.add_argument("--input", help="text file, one sentence per line (stdin when omitted)")
    sub.add_argument("--out")
    sub.set_defaults(fn=cmd_parse)

    sub = subs.add_parser("eval", help="score a checkpoint against a corpus")
    _common_flags(sub)
    sub.set_defaults(fn=cmd_eval)

    sub = subs.add_parser("retrieve", help="image retrieval over a region corpus")
    _common_flags(sub)
    sub.add_argument("--out")
    sub.set_defaults(fn=cmd_retrieve)

    sub = subs.add_parser("trace", help="step-by-step action trace for one sentence")
    _common_flags(sub)
    sub.add_argument("--sentence", required=True)
    sub.add_argument("--gold", help="corpus file holding the sentence's gold graph")
    sub.add_argument("--out")
    sub.set_defaults(fn=cmd_trace)

    sub = subs.add_parser("gradcheck", help="verify gradients on a reduced model")
    _common_flags(sub)
    sub.add_argument("--instances", type=int, default=10)
    sub.add_argument("--step", type=float, default=1e-3)
    sub.set_defaults(fn=cmd_gradcheck)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except (SgparseError, OSError, ValueError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
