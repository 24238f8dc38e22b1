"""Edit-distance alignment and correct/accuracy rates.

CR = (N - D - S) / N and AR = (N - D - S - I) / N, summed over all lines,
where N counts reference symbols.  Insertions only lower AR.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from typing import Iterable, Sequence


@dataclass(frozen=True)
class EditCounts:
    n: int
    deletions: int = 0
    substitutions: int = 0
    insertions: int = 0

    def __add__(self, other: EditCounts) -> EditCounts:
        return EditCounts(self.n + other.n, self.deletions + other.deletions,
                          self.substitutions + other.substitutions, self.insertions + other.insertions)


def edit_align(ref: Sequence, hyp: Sequence) -> EditCounts:
    """Counts from one minimum-cost alignment.

    Among equal-cost alignments the backtrace prefers a substitution to a
    deletion/insertion pair.
    """
    ref, hyp = list(ref), list(hyp)
    n, m = len(ref), len(hyp)
    d = [[0] * (m + 1) for _ in range(n + 1)]
    for i in range(n + 1):
        d[i][0] = i
    for j in range(m + 1):
        d[0][j] = j
    for i in range(1, n + 1):
        for j in range(1, m + 1):
            d[i][j] = min(d[i - 1][j - 1] + (ref[i - 1] != hyp[j - 1]),
                          d[i - 1][j] + 1, d[i][j - 1] + 1)
    i, j = n, m
    de = se = ie = 0
    while i or j:
        if i and j and d[i][j] == d[i - 1][j - 1] + (ref[i - 1] != hyp[j - 1]):
            se += ref[i - 1] != hyp[j - 1]
            i, j = i - 1, j - 1
        elif i and d[i][j] == d[i - 1][j] + 1:
            de += 1
            i -= 1
        else:
            ie += 1
            j -= 1
    return EditCounts(n, de, se, ie)


def totals(pairs: Iterable[tuple[Sequence, Sequence]]) -> EditCounts:
    acc = EditCounts(0)
    for ref, hyp in pairs:
        acc = acc + edit_align(ref, hyp)
    return acc


def cr_ar(pairs: Iterable[tuple[Sequence, Sequence]]) -> tuple[float, float]:
    t = totals(pairs)
    if t.n == 0:
        raise ValueError("no reference symbols to score")
    cr = (t.n - t.deletions - t.substitutions) / t.n
    ar = (t.n - t.deletions - t.substitutions - t.insertions) / t.n
    return cr, ar


def format_report(pairs: Sequence[tuple[Sequence, Sequence]], config_text: str = "") -> str:
    """Plain-text report: one row of counts per line, then CR/AR in percent."""
    rows = ["# line N De Se Ie"]
    for i, (ref, hyp) in enumerate(pairs):
        c = edit_align(ref, hyp)
        rows.append(f"{i} {c.n} {c.deletions} {c.substitutions} {c.insertions}")
    t = totals(pairs)
    cr, ar = cr_ar(pairs)
    digest = hashlib.sha256(config_text.encode("utf-8")).hexdigest()[:16]
    rows += [f"# config {digest}",
             f"total N={t.n} De={t.deletions} Se={t.substitutions} Ie={t.insertions}",
             f"CR {100 * cr:.2f}", f"AR {100 * ar:.2f}"]
    return "\n".join(rows) + "\n"
