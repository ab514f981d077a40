"""Grammar training convergence experiment.

Samples corpora of growing size from the default grammar, retrains a grammar
from each, and tracks a few landmark rule probabilities across repeats.  The
estimates should stabilize as the corpus grows, with spread shrinking roughly
like 1 / sqrt(corpus size).  A second table contrasts smoothing settings on a
single-score corpus, where add-k mass on rarely seen rules matters most.
"""
import argparse
import math
import random

from rhythmiq import Split, default_grammar, sample_score, train_grammar

# trained heads are duration classes: a quarter of a 4/4 bar is D4, an
# eighth D8, a triplet third D12
LANDMARKS = [
    ("D4", ("D8", "D8")),
    ("D4", ("D12", "D12", "D12")),
    ("D8", None),  # the plain-note reading of an eighth slot
]


def trained_prob(grammar, head: str, children) -> float:
    for rule in grammar.rules_for(head):
        if children is None:
            if not isinstance(rule.body, Split) and rule.body.label == "note":
                return rule.probability
        elif isinstance(rule.body, Split) and rule.body.children == children:
            return rule.probability
    return 0.0


def label(head, children):
    if children is None:
        return f"{head} -> note"
    return f"{head} -> ({' '.join(children)})"


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seed", type=int, default=7)
    ap.add_argument("--repeats", type=int, default=20)
    ap.add_argument("--measures", type=int, default=8, help="per score")
    args = ap.parse_args()

    rng = random.Random(args.seed)
    source = default_grammar()

    def corpus(n):
        return [sample_score(source, args.measures, rng) for _ in range(n)]

    print("trained probability vs corpus size (mean +/- std over "
          f"{args.repeats} repeats, smoothing k=1)")
    header = f"{'scores':>6}"
    for head, children in LANDMARKS:
        header += f"  {label(head, children):>24}"
    print(header)
    for n in (1, 2, 4, 8, 16, 32, 64):
        samples = {lm: [] for lm in LANDMARKS}
        for _ in range(args.repeats):
            g = train_grammar(corpus(n), smoothing=1.0)
            for head, children in LANDMARKS:
                samples[(head, children)].append(
                    trained_prob(g, head, children))
        row = f"{n:6d}"
        for lm in LANDMARKS:
            vals = samples[lm]
            mean = sum(vals) / len(vals)
            std = math.sqrt(sum((v - mean) ** 2 for v in vals) / len(vals))
            row += f"  {mean:15.3f} +/- {std:.3f}"
        print(row)

    print("\nsmoothing on a single-score corpus "
          "(same corpus, varying k)")
    one = corpus(1)
    print(f"{'k':>4}  {'rules for D4':>12}  " +
          "  ".join(f"{label(h, c):>24}" for h, c in LANDMARKS))
    for k in (0.0, 0.5, 1.0, 2.0):
        g = train_grammar(one, smoothing=k)
        probs = "  ".join(
            f"{trained_prob(g, h, c):24.3f}" for h, c in LANDMARKS)
        print(f"{k:4.1f}  {len(g.rules_for('D4')):12d}  {probs}")


if __name__ == "__main__":
    main()
