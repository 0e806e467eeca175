"""Image retrieval by scene-graph similarity.

Each image's region graphs are unioned into one combined graph (instance
multiplicity preserved); a query description is parsed to a graph and images
are ranked by the F score between the query graph and each combined graph.
"""

from __future__ import annotations

import statistics
from dataclasses import dataclass
from typing import Callable, Hashable, Iterable, NamedTuple, Sequence

from .align import SynonymLexicon
from .graph import SceneGraph
from .pool import parallel_map
from .spice import extract_tuples, f_score, match_count


def merge_graphs(graphs: Sequence[SceneGraph]) -> SceneGraph:
    """Union of several graphs with object lists concatenated."""
    objects: list[str] = []
    attributes: list[tuple[int, str]] = []
    relations: list[tuple[int, str, int]] = []
    for g in graphs:
        offset = len(objects)
        objects.extend(g.objects)
        attributes.extend((oi + offset, a) for oi, a in g.attributes)
        relations.extend((si + offset, r, oi + offset) for si, r, oi in g.relations)
    return SceneGraph(objects=tuple(objects), attributes=tuple(attributes), relations=tuple(relations))


@dataclass(frozen=True)
class ImageEntry:
    image_id: Hashable
    graph: SceneGraph


def build_index(images: Iterable[tuple[Hashable, Sequence[SceneGraph]]]) -> list[ImageEntry]:
    return [ImageEntry(image_id, merge_graphs(graphs)) for image_id, graphs in images]


def subgraph_of(query: SceneGraph, container: SceneGraph) -> bool:
    """True iff every query tuple can be one-to-one matched in the container
    (exact labels, no synonyms)."""
    q = extract_tuples(query)
    return match_count(q, extract_tuples(container)).total() == q.total()


def rank_images(
    query_graph: SceneGraph, index: Sequence[ImageEntry], lexicon: SynonymLexicon | None = None
) -> list[Hashable]:
    """Image ids by descending F score; ties break by ascending image id."""
    if not index:
        raise ValueError("cannot rank against an empty index")
    scored = [(f_score(query_graph, entry.graph, lexicon).f, entry.image_id) for entry in index]
    scored.sort(key=lambda pair: (-pair[0], pair[1]))
    return [image_id for _, image_id in scored]


class QueryOutcome(NamedTuple):
    query_id: Hashable
    best_rank: int
    top10: tuple[Hashable, ...]


@dataclass(frozen=True)
class RetrievalResult:
    outcomes: tuple[QueryOutcome, ...]
    recall_at_5: float
    recall_at_10: float
    median_rank: float
    excluded: tuple[Hashable, ...] = ()


def evaluate_retrieval(
    queries: Sequence[tuple[str, set[Hashable]]],
    parser: Callable[[str], SceneGraph],
    index: Sequence[ImageEntry],
    lexicon: SynonymLexicon | None = None,
) -> RetrievalResult:
    """Rank every query; recall@k is the fraction with a ground-truth image in
    the top k, and the median is over each query's best ground-truth rank.

    Queries with an empty ground-truth set are excluded and reported.
    """
    excluded = tuple(qid for qid, (_, truth) in enumerate(queries) if not truth)
    kept = [(qid, text, truth) for qid, (text, truth) in enumerate(queries) if truth]

    def run(item):
        qid, text, truth = item
        ranking = rank_images(parser(text), index, lexicon)
        position = {image_id: i + 1 for i, image_id in enumerate(ranking)}
        best = min(position.get(t, len(ranking) + 1) for t in truth)
        return QueryOutcome(qid, best, tuple(ranking[:10]))

    outcomes = tuple(parallel_map(run, kept))
    n = len(outcomes)
    recall5 = sum(1 for o in outcomes if o.best_rank <= 5) / n if n else 0.0
    recall10 = sum(1 for o in outcomes if o.best_rank <= 10) / n if n else 0.0
    median = float(statistics.median(o.best_rank for o in outcomes)) if n else 0.0
    return RetrievalResult(
        outcomes=outcomes,
        recall_at_5=recall5,
        recall_at_10=recall10,
        median_rank=median,
        excluded=excluded,
    )


def format_results(result: RetrievalResult) -> str:
    """One line per query plus a summary block."""
    lines = [
        f"{o.query_id}\t{o.best_rank}\t{','.join(str(i) for i in o.top10)}"
        for o in result.outcomes
    ]
    lines.append(f"R@5={result.recall_at_5:.4f}")
    lines.append(f"R@10={result.recall_at_10:.4f}")
    lines.append(f"median_rank={result.median_rank:g}")
    lines.append(f"queries={len(result.outcomes)}")
    lines.append(f"excluded={len(result.excluded)}")
    return "\n".join(lines) + "\n"
