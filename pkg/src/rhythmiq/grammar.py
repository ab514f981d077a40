"""Weighted rhythm grammars: file format, training, and sampling.

A grammar assigns each nonterminal a set of rules, either equal splits into
child nonterminals or leaf emissions (note, rest, continuation).  Weights are
negative log probabilities and every head's rule probabilities sum to one.
"""
from __future__ import annotations

import math
import re
import warnings
from collections import Counter
from dataclasses import dataclass
from fractions import Fraction

from .core import TimeSignature
from .errors import GrammarError, ValidationError
from .trees import (
    CONTINUATION,
    LEAF_LABELS,
    NOTE,
    REST,
    RhythmTree,
    ScoreModel,
    decompose_measure,
)

PROB_TOLERANCE = 1e-9


@dataclass(frozen=True)
class Split:
    """Equal subdivision into child nonterminals (at least two)."""

    children: tuple[str, ...]

    def __post_init__(self):
        if len(self.children) < 2:
            raise ValidationError("a split needs at least 2 children")

    def __str__(self) -> str:
        return "(" + " ".join(self.children) + ")"


@dataclass(frozen=True)
class Leaf:
    label: str

    def __post_init__(self):
        if self.label not in LEAF_LABELS:
            raise ValidationError(f"leaf label must be one of {LEAF_LABELS}")

    def __str__(self) -> str:
        return self.label


@dataclass(frozen=True)
class GrammarRule:
    head: str
    body: Split | Leaf
    weight: float  # negative log probability

    @property
    def probability(self) -> float:
        return math.exp(-self.weight)

    def __str__(self) -> str:
        return f"{self.head} -> {self.body} : {self.probability:.6f}"


class RhythmGrammar:
    """An immutable weighted grammar with per-time-signature start symbols."""

    def __init__(self, starts: dict[TimeSignature, str],
                 rules: list[GrammarRule] | tuple[GrammarRule, ...],
                 max_depth: int = 4):
        if max_depth < 1:
            raise GrammarError(f"max_depth must be >= 1, got {max_depth}")
        if not starts:
            raise GrammarError("grammar needs at least one start symbol")
        self.starts = dict(starts)
        self.rules = tuple(rules)
        self.max_depth = int(max_depth)

        self._by_head: dict[str, list[GrammarRule]] = {}
        for rule in self.rules:
            if rule.head in LEAF_LABELS:
                raise GrammarError(f"{rule.head!r} is a reserved leaf label")
            self._by_head.setdefault(rule.head, []).append(rule)

        for sig, sym in self.starts.items():
            if sym not in self._by_head:
                raise GrammarError(f"start symbol {sym!r} for {sig} has no rules")
        for rule in self.rules:
            if isinstance(rule.body, Split):
                for child in rule.body.children:
                    if child not in self._by_head:
                        raise GrammarError(
                            f"rule {rule.head} references unknown symbol {child!r}"
                        )

        for head, head_rules in self._by_head.items():
            total = sum(r.probability for r in head_rules)
            if abs(total - 1.0) > PROB_TOLERANCE:
                raise GrammarError(
                    f"probabilities for head {head!r} sum to {total!r}, not 1"
                )

        self._min_depth = self._compute_min_depths()
        for head in self._reachable():
            if self._min_depth.get(head, math.inf) > self.max_depth:
                raise GrammarError(
                    f"symbol {head!r} cannot derive a tree within depth {self.max_depth}"
                )

    def _compute_min_depths(self) -> dict[str, float]:
        depths = {h: math.inf for h in self._by_head}
        changed = True
        while changed:
            changed = False
            for rule in self.rules:
                if isinstance(rule.body, Leaf):
                    d = 0.0
                else:
                    d = 1 + max(depths[c] for c in rule.body.children)
                if d < depths[rule.head]:
                    depths[rule.head] = d
                    changed = True
        return depths

    def _reachable(self) -> set[str]:
        seen = set(self.starts.values())
        frontier = list(seen)
        while frontier:
            head = frontier.pop()
            for rule in self._by_head.get(head, ()):
                if isinstance(rule.body, Split):
                    for child in rule.body.children:
                        if child not in seen:
                            seen.add(child)
                            frontier.append(child)
        return seen

    @property
    def nonterminals(self) -> set[str]:
        return set(self._by_head)

    def rules_for(self, head: str) -> list[GrammarRule]:
        return self._by_head.get(head, [])

    def leaf_rule(self, head: str, label: str) -> GrammarRule | None:
        for rule in self._by_head.get(head, ()):
            if isinstance(rule.body, Leaf) and rule.body.label == label:
                return rule
        return None

    def start_for(self, time_signature: TimeSignature) -> str:
        try:
            return self.starts[time_signature]
        except KeyError:
            raise GrammarError(f"grammar has no start symbol for {time_signature}")

    def min_depth(self, head: str) -> int:
        return int(self._min_depth[head])

    def rule_index(self, rule: GrammarRule) -> int:
        return self.rules.index(rule)

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, RhythmGrammar)
            and self.starts == other.starts
            and self.rules == other.rules
            and self.max_depth == other.max_depth
        )


# ---------------------------------------------------------------------------
# text format

_RULE_RE = re.compile(r"^(\w+)\s*->\s*(.+?)\s*:\s*([0-9.eE+-]+)$")
_SPLIT_RE = re.compile(r"^\(\s*(\w+(?:\s+\w+)*)\s*\)$")
_START_RE = re.compile(r"^start\s+(\d+)\s*/\s*(\d+)\s*=\s*(\w+)$")
_MAXDEPTH_RE = re.compile(r"^maxdepth\s*=\s*(\d+)$")


def parse_grammar_file(text: str) -> RhythmGrammar:
    """Parse the grammar text format.

    Lines are ``maxdepth = N``, ``start N/D = SYM``, rule lines
    ``HEAD -> (C1 C2 ... Ck) : prob`` or ``HEAD -> note|rest|continuation :
    prob``, and ``#`` comments.  Probabilities are renormalized per head; a
    deviation beyond 1e-6 draws a warning.
    """
    starts: dict[TimeSignature, str] = {}
    raw_rules: list[tuple[str, Split | Leaf, float]] = []
    max_depth = 4

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        m = _MAXDEPTH_RE.match(line)
        if m:
            max_depth = int(m.group(1))
            continue
        m = _START_RE.match(line)
        if m:
            sig = TimeSignature(int(m.group(1)), int(m.group(2)))
            starts[sig] = m.group(3)
            continue
        m = _RULE_RE.match(line)
        if m:
            head, body_text, prob_text = m.groups()
            try:
                prob = float(prob_text)
            except ValueError:
                raise GrammarError(f"line {lineno}: bad probability {prob_text!r}")
            if prob <= 0:
                raise GrammarError(f"line {lineno}: probability must be > 0")
            split_m = _SPLIT_RE.match(body_text)
            if split_m:
                body: Split | Leaf = Split(tuple(split_m.group(1).split()))
            elif body_text in LEAF_LABELS:
                body = Leaf(body_text)
            else:
                raise GrammarError(f"line {lineno}: bad rule body {body_text!r}")
            raw_rules.append((head, body, prob))
            continue
        raise GrammarError(f"line {lineno}: cannot parse {line!r}")

    if not raw_rules:
        raise GrammarError("grammar file defines no rules")
    if not starts:
        raise GrammarError("grammar file defines no start symbols")

    totals: dict[str, float] = {}
    for head, _, prob in raw_rules:
        totals[head] = totals.get(head, 0.0) + prob
    for head, total in totals.items():
        if abs(total - 1.0) > 1e-6:
            warnings.warn(
                f"probabilities for head {head!r} sum to {total:.6g}; renormalizing",
                stacklevel=2,
            )
    rules = [
        GrammarRule(head, body, -math.log(prob / totals[head]))
        for head, body, prob in raw_rules
    ]
    return RhythmGrammar(starts, rules, max_depth)


def serialize_grammar(grammar: RhythmGrammar) -> str:
    """Render a grammar in the text format with 6-decimal probabilities."""
    lines = [f"maxdepth = {grammar.max_depth}"]
    for sig in sorted(grammar.starts, key=lambda s: (s.numerator, s.denominator)):
        lines.append(f"start {sig} = {grammar.starts[sig]}")
    for rule in grammar.rules:
        lines.append(str(rule))
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# training

def _head_name(width: Fraction, time_signature: TimeSignature) -> str:
    if width == 1:
        return f"M{time_signature.numerator}_{time_signature.denominator}"
    if width.numerator == 1:
        return f"D{width.denominator}"
    return f"D{width.denominator}_{width.numerator}"


def train_grammar(
    corpus: list[ScoreModel],
    smoothing: float = 1.0,
    max_depth: int | None = None,
) -> RhythmGrammar:
    """Estimate a grammar from notated scores.

    Every measure already is a rhythm tree; its nodes are mapped to
    duration-class symbols (measure, beat, half-beat, ...) and each production
    is counted.  Probabilities use add-k smoothing over the observed rule
    inventory of each head: (count + k) / (total + k * |rules of head|).

    Args:
        corpus: scores to count productions from.
        smoothing: the k in add-k smoothing, >= 0.
        max_depth: depth bound of the result; default is the deepest tree seen.
    """
    if smoothing < 0:
        raise ValidationError(f"smoothing must be >= 0, got {smoothing}")
    if not corpus:
        raise ValidationError("cannot train a grammar from an empty corpus")

    counts: dict[str, Counter] = {}
    starts: dict[TimeSignature, str] = {}
    deepest = 1

    def count_node(node: RhythmTree, head: str, width: Fraction,
                   sig: TimeSignature, depth: int):
        nonlocal deepest
        deepest = max(deepest, depth + node.depth())
        bucket = counts.setdefault(head, Counter())
        if node.is_leaf:
            bucket[Leaf(node.label)] += 1
            return
        k = len(node.children)
        child_width = width / k
        child_head = _head_name(child_width, sig)
        bucket[Split((child_head,) * k)] += 1
        for child in node.children:
            count_node(child, child_head, child_width, sig, depth + 1)

    for score in corpus:
        sig = score.time_signature
        start = _head_name(Fraction(1), sig)
        starts[sig] = start
        for tree in score.measures:
            count_node(tree, start, Fraction(1), sig, 0)

    rules = []
    for head in counts:
        bucket = counts[head]
        inventory = len(bucket)
        total = sum(bucket.values())
        for body, count in sorted(
            bucket.items(), key=lambda kv: (isinstance(kv[0], Leaf), str(kv[0]))
        ):
            prob = (count + smoothing) / (total + smoothing * inventory)
            rules.append(GrammarRule(head, body, -math.log(prob)))

    depth_bound = max_depth if max_depth is not None else deepest
    return RhythmGrammar(starts, rules, depth_bound)


# ---------------------------------------------------------------------------
# weight adjustment

def parse_rule_selector(text: str):
    """Compile a selector like ``split=3``, ``head=B,leaf=rest`` to a predicate."""
    clauses = []
    for part in text.split(","):
        key, _, value = part.strip().partition("=")
        if key == "head":
            clauses.append(lambda r, v=value: r.head == v)
        elif key == "split":
            arity = int(value)
            clauses.append(
                lambda r, a=arity: isinstance(r.body, Split) and len(r.body.children) == a
            )
        elif key == "leaf":
            if value not in LEAF_LABELS:
                raise ValidationError(f"unknown leaf label {value!r}")
            clauses.append(
                lambda r, v=value: isinstance(r.body, Leaf) and r.body.label == v
            )
        else:
            raise ValidationError(f"unknown selector clause {part.strip()!r}")
    return lambda rule: all(c(rule) for c in clauses)


def adjust_rule_weight(grammar: RhythmGrammar, selector, factor: float) -> RhythmGrammar:
    """Scale the probability of all rules matched by ``selector`` by ``factor``
    and renormalize each affected head.  Unmatched heads are untouched.
    """
    if factor <= 0:
        raise ValidationError(f"factor must be > 0, got {factor}")
    predicate = parse_rule_selector(selector) if isinstance(selector, str) else selector

    matched_heads = {r.head for r in grammar.rules if predicate(r)}
    if not matched_heads:
        return grammar

    new_probs: dict[int, float] = {}
    for head in matched_heads:
        head_rules = grammar.rules_for(head)
        scaled = [
            r.probability * (factor if predicate(r) else 1.0) for r in head_rules
        ]
        total = sum(scaled)
        for r, p in zip(head_rules, scaled):
            new_probs[grammar.rule_index(r)] = p / total

    rules = [
        GrammarRule(r.head, r.body, -math.log(new_probs[i]))
        if i in new_probs
        else r
        for i, r in enumerate(grammar.rules)
    ]
    return RhythmGrammar(grammar.starts, rules, grammar.max_depth)


# ---------------------------------------------------------------------------
# default grammar and sampling

_DEFAULT_GRAMMAR_TEXT = """\
# Default grammar for common-time monophonic transcription.
#
# Sixteenth and finer symbols emit notes only, so fine rhythms appear as
# dense clusters and silence always aligns with eighth-or-coarser leaves.
# The weights are calibrated against alpha = 8: true structure beats every
# onset-displacing coarser reading, triplets win for exact triplet spacing,
# and a swung pair (no middle onset) cannot be written as a tuplet at all.
maxdepth = 4
start 4/4 = M

M -> (B B B B) : 0.9348
M -> note : 0.0002
M -> rest : 0.035
M -> continuation : 0.03

B -> (E E) : 0.586
B -> (T T T) : 0.08
B -> note : 0.074
B -> rest : 0.13
B -> continuation : 0.13

E -> (S S) : 0.18
E -> note : 0.50
E -> rest : 0.16
E -> continuation : 0.16

S -> (X X) : 0.13
S -> note : 0.87

T -> (G G) : 0.15
T -> note : 0.85

G -> note : 1.0

X -> note : 1.0
"""


def default_grammar() -> RhythmGrammar:
    """The grammar shipped with the package (4/4 only)."""
    return parse_grammar_file(_DEFAULT_GRAMMAR_TEXT)


def sample_tree(grammar: RhythmGrammar, rng, start: str,
                prev_sounding: bool = False) -> RhythmTree:
    """Sample one measure tree; continuations only appear after sound."""

    def pick(head: str, budget: int, sounding: bool) -> tuple[RhythmTree, bool]:
        feasible = []
        for rule in grammar.rules_for(head):
            if isinstance(rule.body, Leaf):
                if rule.body.label == CONTINUATION and not sounding:
                    continue
                feasible.append(rule)
            else:
                need = 1 + max(grammar.min_depth(c) for c in rule.body.children)
                if need <= budget:
                    feasible.append(rule)
        if not feasible:
            raise GrammarError(f"no feasible rule for {head!r} while sampling")
        weights = [r.probability for r in feasible]
        rule = rng.choices(feasible, weights=weights)[0]
        if isinstance(rule.body, Leaf):
            label = rule.body.label
            if label == NOTE:
                return RhythmTree(label=NOTE, pitch=60), True
            if label == REST:
                return RhythmTree(label=REST), False
            return RhythmTree(label=CONTINUATION), sounding
        children = []
        for child_head in rule.body.children:
            child, sounding = pick(child_head, budget - 1, sounding)
            children.append(child)
        return RhythmTree(children=tuple(children)), sounding

    tree, _ = pick(start, grammar.max_depth, prev_sounding)
    return tree


def sample_score(
    grammar: RhythmGrammar,
    n_measures: int,
    rng,
    time_signature: TimeSignature = TimeSignature(4, 4),
    pitch_range: tuple[int, int] = (55, 79),
    tempo: float = 120.0,
) -> ScoreModel:
    """Sample a score and return it in canonical (quantizer-image) form.

    Trees are sampled measure by measure, pitches follow a bounded random
    walk, and the result is re-decomposed canonically so silence occupies the
    coarsest leaves, exactly as the quantizer would notate it.
    """
    start = grammar.start_for(time_signature)
    raw = []
    sounding = False
    for _ in range(n_measures):
        tree = sample_tree(grammar, rng, start, prev_sounding=sounding)
        raw.append(tree)
        labels = tree.leaf_labels()
        sounding = labels[-1] in (NOTE, CONTINUATION)

    # global onset/extent extraction with a pitch random walk
    lo, hi = pitch_range
    pitch = (lo + hi) // 2
    onsets_global: list[tuple[Fraction, int]] = []  # (global position, pitch)
    extents_global: list[Fraction] = []
    for m, tree in enumerate(raw):
        for leaf, left, right in tree.leaves():
            g_left, g_right = m + left, m + right
            if leaf.label == NOTE:
                pitch = min(hi, max(lo, pitch + rng.randint(-4, 4)))
                onsets_global.append((Fraction(g_left), pitch))
                extents_global.append(Fraction(g_right))
            elif leaf.label == CONTINUATION:
                extents_global[-1] = Fraction(g_right)

    measures = []
    for m in range(n_measures):
        onsets = [
            (p - m, pch) for p, pch in onsets_global if m <= p < m + 1
        ]
        extents = [
            e - m
            for (p, _), e in zip(onsets_global, extents_global)
            if m <= p < m + 1
        ]
        carried_pitch = None
        carried_end = Fraction(0)
        for (p, pch), e in zip(onsets_global, extents_global):
            if p < m and e > m:
                carried_pitch, carried_end = pch, e - m
        measures.append(
            decompose_measure(
                onsets, extents, time_signature,
                max_depth=grammar.max_depth,
                carried_pitch=carried_pitch, carried_end=carried_end,
            )
        )
    return ScoreModel(time_signature, measures, tempo_marking=tempo)
