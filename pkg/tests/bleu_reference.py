"""Independent brute-force BLEU-4 used as a test oracle.

Deliberately written in the dumbest possible style, separate from the
package implementation: explicit position loops, no Counter, no shared
helpers. Keep it slow and obvious.
"""

import math


def _ngrams_at(seq, n):
    out = []
    for i in range(len(seq)):
        if i + n <= len(seq):
            out.append(tuple(seq[i:i + n]))
    return out


def _count(grams, gram):
    c = 0
    for g in grams:
        if g == gram:
            c += 1
    return c


def reference_bleu4(candidate, references):
    candidate = list(candidate)
    references = [list(r) for r in references]
    assert candidate and references
    max_order = 4
    if len(candidate) < 4:
        max_order = len(candidate)
    product_log = 0.0
    for n in range(1, max_order + 1):
        cand_grams = _ngrams_at(candidate, n)
        matched = 0
        for gram in set(cand_grams):
            in_candidate = _count(cand_grams, gram)
            best_in_refs = 0
            for ref in references:
                c = _count(_ngrams_at(ref, n), gram)
                if c > best_in_refs:
                    best_in_refs = c
            matched += min(in_candidate, best_in_refs)
        if matched == 0:
            return 0.0
        product_log += math.log(matched / len(cand_grams))
    c_len = len(candidate)
    best_r = None
    for ref in references:
        r_len = len(ref)
        if best_r is None:
            best_r = r_len
        elif abs(r_len - c_len) < abs(best_r - c_len):
            best_r = r_len
        elif abs(r_len - c_len) == abs(best_r - c_len) and r_len < best_r:
            best_r = r_len
    bp = 1.0
    if best_r > c_len:
        bp = math.exp(1.0 - best_r / c_len)
    return bp * math.exp(product_log / max_order)
