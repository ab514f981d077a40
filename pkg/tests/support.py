"""Shared test helpers: random grammar construction, random measures, and an
exhaustive derivation enumerator used as the optimality oracle.

The enumerator builds every derivation of the grammar explicitly (no
memoized minima), so agreement with the solver's DP is a real check and not
a tautology.  Costs are folded in the same order the solver folds them
(rule weight first, then children left to right) so exact float comparison
is meaningful.
"""
import itertools
import math
import random
from fractions import Fraction

from rhythmiq import (
    GrammarRule,
    Leaf,
    MeasureInput,
    QuantConfig,
    RhythmGrammar,
    Split,
    TimeSignature,
)

SIG44 = TimeSignature(4, 4)
EPS = 1e-9


def random_grammar(rng: random.Random, max_rules: int = 12,
                   max_depth: int = 3) -> RhythmGrammar:
    """A small random grammar over heads A..D.

    Every head keeps at least one leaf rule, so min depths are zero and any
    depth bound is valid.  At most one ternary split per head keeps the
    enumeration oracle's cross products tractable.
    """
    heads = ["A", "B", "C", "D"][: rng.randint(1, 4)]
    per_head: dict[str, list] = {}
    for head in heads:
        labels = ["note", "rest", "continuation"]
        rng.shuffle(labels)
        bodies = [Leaf(labels[0])]
        for label in labels[1:]:
            if rng.random() < 0.35:
                bodies.append(Leaf(label))
        have_ternary = False
        for _ in range(rng.randint(0, 2)):
            arity = rng.choice((2, 2, 3))
            if arity == 3 and have_ternary:
                arity = 2
            have_ternary = have_ternary or arity == 3
            body = Split(tuple(rng.choice(heads) for _ in range(arity)))
            if body not in bodies:
                bodies.append(body)
        per_head[head] = bodies

    # trim extras (never the guaranteed first leaf) down to the rule budget
    total = sum(len(b) for b in per_head.values())
    while total > max_rules:
        head = rng.choice([h for h in heads if len(per_head[h]) > 1])
        per_head[head].pop(rng.randrange(1, len(per_head[head])))
        total -= 1

    rules = []
    for head in heads:
        raw = [rng.uniform(0.2, 1.0) for _ in per_head[head]]
        norm = sum(raw)
        rules += [
            GrammarRule(head, body, -math.log(w / norm))
            for body, w in zip(per_head[head], raw)
        ]
    return RhythmGrammar({SIG44: heads[0]}, rules, rng.randint(1, max_depth))


def random_measure(rng: random.Random) -> MeasureInput:
    """Random monophonic measure content, on-grid half the time."""
    n = rng.randint(0, 5)
    slots = sorted(rng.sample(range(48), n))
    onsets, extents = [], []
    for slot in slots:
        pos = slot / 48
        if rng.random() < 0.5:
            pos = min(0.999, max(0.0, pos + rng.uniform(-0.008, 0.008)))
        onsets.append(pos)
    for i, pos in enumerate(onsets):
        ceiling = onsets[i + 1] if i + 1 < n else 1.0 + rng.uniform(0.0, 0.4)
        ext = pos + rng.uniform(0.02, 0.5)
        extents.append(max(pos + 1e-4, min(ext, ceiling)))
    carried_pitch, carried_end = None, 0.0
    if rng.random() < 0.3:
        carried_pitch = 60
        carried_end = rng.uniform(0.05, 0.9)
    return MeasureInput(
        tuple((pos, 60 + i) for i, pos in enumerate(onsets)),
        tuple(extents),
        carried_pitch,
        carried_end,
    )


def enumerate_min_cost(measure: MeasureInput, grammar: RhythmGrammar,
                       config: QuantConfig | None = None,
                       sig: TimeSignature = SIG44):
    """Minimum derivation cost by complete enumeration, or None if no
    derivation exists.  Legality matches the solver contract: a leaf may
    absorb at most rest_threshold of uncovered tail, note leaves need exactly
    one onset, rests silence, continuations running sound; when no strict
    option exists at a subinterval the leaf coverage rule is relaxed there.
    """
    config = config or QuantConfig()
    alpha, theta = config.alpha, config.rest_threshold

    def sounding_at(left: float) -> float:
        end = measure.carried_end if measure.carried_pitch is not None else 0.0
        for (pos, _), ext in zip(measure.onsets, measure.extents):
            if pos < left - EPS:
                end = ext
        return end

    def derivations(head: str, left: Fraction, right: Fraction,
                    depth: int) -> list[float]:
        lf, rf = float(left), float(right)
        contained = [
            (pos, ext)
            for (pos, _), ext in zip(measure.onsets, measure.extents)
            if lf - EPS <= pos < rf - EPS
        ]
        end = sounding_at(lf)
        width = rf - lf

        def tail(e: float) -> float:
            return (rf - min(max(e, lf), rf)) / width

        def leaf_costs(degraded: bool) -> list[float]:
            out = []
            for rule in grammar.rules_for(head):
                if not isinstance(rule.body, Leaf):
                    continue
                label = rule.body.label
                if label == "note":
                    if len(contained) != 1:
                        continue
                    if not degraded and tail(contained[0][1]) > theta + EPS:
                        continue
                    d = abs(contained[0][0] - lf)
                    out.append(rule.weight + alpha * (0.0 if d < EPS else d))
                elif label == "rest":
                    if contained:
                        continue
                    if not degraded and end > lf + EPS:
                        continue
                    out.append(rule.weight)
                else:
                    if contained or end <= lf + EPS:
                        continue
                    if not degraded and tail(end) > theta + EPS:
                        continue
                    out.append(rule.weight)
            return out

        found = leaf_costs(degraded=False)
        if depth < grammar.max_depth:
            for rule in grammar.rules_for(head):
                if isinstance(rule.body, Leaf):
                    continue
                k = len(rule.body.children)
                w = (right - left) / k
                child_lists = []
                for i, child in enumerate(rule.body.children):
                    sub = derivations(child, left + i * w, left + (i + 1) * w,
                                      depth + 1)
                    if not sub:
                        break
                    child_lists.append(sub)
                if len(child_lists) < k:
                    continue
                for combo in itertools.product(*child_lists):
                    cost = rule.weight
                    for c in combo:
                        cost = cost + c
                    found.append(cost)
        if not found:
            found = leaf_costs(degraded=True)
        return found

    costs = derivations(grammar.start_for(sig), Fraction(0), Fraction(1), 0)
    return min(costs) if costs else None
