"""Graph similarity scoring over semantic tuples with one-to-one matching.

A graph decomposes into object tuples, (object, attribute) tuples and
(subject, relation, object) tuples.  Candidate and reference tuples are
matched within each category by a maximum bipartite matching, so a tuple on
one side can never be credited twice; precision, recall and F follow from
the matched counts.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Sequence

from .align import SynonymLexicon
from .graph import SceneGraph, normalize_label
from .pool import parallel_map


@dataclass(frozen=True)
class TupleBag:
    """Multisets of semantic tuples extracted from one scene graph."""

    objects: tuple[tuple[str], ...] = ()
    attributes: tuple[tuple[str, str], ...] = ()
    relations: tuple[tuple[str, str, str], ...] = ()

    def total(self) -> int:
        return len(self.objects) + len(self.attributes) + len(self.relations)

    def categories(self) -> dict[str, tuple[tuple[str, ...], ...]]:
        return {
            "objects": self.objects,
            "attributes": self.attributes,
            "relations": self.relations,
        }


class CategoryCounts(NamedTuple):
    objects: int
    attributes: int
    relations: int

    def total(self) -> int:
        return self.objects + self.attributes + self.relations


class ScoreTriple(NamedTuple):
    precision: float
    recall: float
    f: float


def extract_tuples(graph: SceneGraph) -> TupleBag:
    """One tuple per object instance, attribute pair and relation triple."""
    objects = tuple((normalize_label(label),) for label in graph.objects)
    attributes = tuple(
        (normalize_label(graph.objects[oi]), normalize_label(attr))
        for oi, attr in graph.attributes
    )
    relations = tuple(
        (
            normalize_label(graph.objects[si]),
            normalize_label(rel),
            normalize_label(graph.objects[oi]),
        )
        for si, rel, oi in graph.relations
    )
    return TupleBag(objects=objects, attributes=attributes, relations=relations)


def _slot_match(a: str, b: str, lexicon: SynonymLexicon) -> bool:
    wa, wb = a.split(), b.split()
    if len(wa) != len(wb):
        return False
    return all(lexicon.matches(x, y) for x, y in zip(wa, wb))


def _compatible(a: tuple[str, ...], b: tuple[str, ...], lexicon: SynonymLexicon) -> bool:
    return len(a) == len(b) and all(_slot_match(x, y, lexicon) for x, y in zip(a, b))


def _max_matching(adjacency: list[list[int]], n_right: int) -> int:
    """Maximum bipartite matching size via augmenting paths (Kuhn)."""
    match_right = [-1] * n_right

    def augment(u: int, seen: list[bool]) -> bool:
        for v in adjacency[u]:
            if seen[v]:
                continue
            seen[v] = True
            if match_right[v] == -1 or augment(match_right[v], seen):
                match_right[v] = u
                return True
        return False

    matched = 0
    for u in range(len(adjacency)):
        if augment(u, [False] * n_right):
            matched += 1
    return matched


def match_count(
    candidate: TupleBag, reference: TupleBag, lexicon: SynonymLexicon | None = None
) -> CategoryCounts:
    """Size of the maximum one-to-one matching per tuple category."""
    lexicon = lexicon or SynonymLexicon.empty()
    counts = {}
    ref_cats = reference.categories()
    for name, cand_tuples in candidate.categories().items():
        ref_tuples = ref_cats[name]
        adjacency = [
            [j for j, r in enumerate(ref_tuples) if _compatible(c, r, lexicon)]
            for c in cand_tuples
        ]
        counts[name] = _max_matching(adjacency, len(ref_tuples))
    return CategoryCounts(**counts)


def f_score(
    candidate: SceneGraph, reference: SceneGraph, lexicon: SynonymLexicon | None = None
) -> ScoreTriple:
    """Precision/recall/F over all matched tuples.

    Two empty graphs score 1.0 by convention; when exactly one side is empty
    the score is 0.0.
    """
    cand = extract_tuples(candidate)
    ref = extract_tuples(reference)
    n_cand, n_ref = cand.total(), ref.total()
    if n_cand == 0 and n_ref == 0:
        return ScoreTriple(1.0, 1.0, 1.0)
    matched = match_count(cand, ref, lexicon).total()
    precision = matched / n_cand if n_cand else 0.0
    recall = matched / n_ref if n_ref else 0.0
    if precision + recall == 0.0:
        return ScoreTriple(precision, recall, 0.0)
    return ScoreTriple(precision, recall, 2.0 * precision * recall / (precision + recall))


def corpus_f(
    candidates: Sequence[SceneGraph],
    references: Sequence[SceneGraph],
    lexicon: SynonymLexicon | None = None,
) -> float:
    """Arithmetic mean of the per-region F scores."""
    if len(candidates) != len(references):
        raise ValueError(f"{len(candidates)} candidates vs {len(references)} references")
    if not candidates:
        return 0.0
    scores = parallel_map(lambda pair: f_score(pair[0], pair[1], lexicon).f,
                          zip(candidates, references))
    return float(sum(scores) / len(scores))


@dataclass(frozen=True)
class CorpusEval:
    """Corpus-level evaluation: mean per-region F plus per-category micro scores."""

    n_regions: int
    mean_f: float
    categories: dict[str, ScoreTriple]


def evaluate_corpus(
    candidates: Sequence[SceneGraph],
    references: Sequence[SceneGraph],
    lexicon: SynonymLexicon | None = None,
) -> CorpusEval:
    if len(candidates) != len(references):
        raise ValueError(f"{len(candidates)} candidates vs {len(references)} references")

    def region(pair):
        cand_graph, ref_graph = pair
        cand, ref = extract_tuples(cand_graph), extract_tuples(ref_graph)
        counts = match_count(cand, ref, lexicon)
        sizes_c = {k: len(v) for k, v in cand.categories().items()}
        sizes_r = {k: len(v) for k, v in ref.categories().items()}
        return counts, sizes_c, sizes_r, f_score(cand_graph, ref_graph, lexicon).f

    rows = parallel_map(region, zip(candidates, references))
    totals = {k: [0, 0, 0] for k in ("objects", "attributes", "relations")}
    fs = []
    for counts, sizes_c, sizes_r, f in rows:
        fs.append(f)
        for k in totals:
            totals[k][0] += getattr(counts, k)
            totals[k][1] += sizes_c[k]
            totals[k][2] += sizes_r[k]

    def micro(matched: int, n_cand: int, n_ref: int) -> ScoreTriple:
        if n_cand == 0 and n_ref == 0:
            return ScoreTriple(1.0, 1.0, 1.0)
        p = matched / n_cand if n_cand else 0.0
        r = matched / n_ref if n_ref else 0.0
        f = 2 * p * r / (p + r) if p + r else 0.0
        return ScoreTriple(p, r, f)

    categories = {k: micro(*totals[k]) for k in totals}
    mean_f = float(sum(fs) / len(fs)) if fs else 0.0
    return CorpusEval(n_regions=len(fs), mean_f=mean_f, categories=categories)


def format_report(result: CorpusEval) -> str:
    """Human-readable table plus key=value lines for scripting."""
    lines = [f"{'category':<12}{'precision':>10}{'recall':>10}{'f-score':>10}"]
    for name, triple in result.categories.items():
        lines.append(
            f"{name:<12}{triple.precision:>10.4f}{triple.recall:>10.4f}{triple.f:>10.4f}"
        )
    lines.append("")
    lines.append(f"regions={result.n_regions}")
    lines.append(f"mean_f={result.mean_f:.4f}")
    for name, triple in result.categories.items():
        lines.append(f"{name}_p={triple.precision:.4f}")
        lines.append(f"{name}_r={triple.recall:.4f}")
        lines.append(f"{name}_f={triple.f:.4f}")
    return "\n".join(lines) + "\n"
