"""Independent brute-force reference implementations.

Everything here recounts statistics from raw token lists and never touches
the package's index/scoring/metric code paths, so tests can compare the two
routes. Expected constants frozen in the test suite were computed with
these functions.
"""

from __future__ import annotations

import math
from collections import Counter


def idf_robertson(n_docs: int, df: int) -> float:
    return math.log((n_docs - df + 0.5) / (df + 0.5) + 1.0)


def idf_smooth_log(n_docs: int, df: int) -> float:
    return math.log(n_docs / max(df, 1))


def bm25_score(query_tokens, doc_tokens, all_docs, k=1.4, b=0.6) -> float:
    n = len(all_docs)
    avgdl = sum(len(d) for d in all_docs) / n
    tf = Counter(doc_tokens)
    dl = len(doc_tokens)
    norm = k * (1.0 - b + b * dl / avgdl)
    score = 0.0
    for t in query_tokens:
        if tf[t] == 0:
            continue
        df = sum(1 for d in all_docs if t in d)
        score += idf_robertson(n, df) * (tf[t] * (k + 1.0)) / (tf[t] + norm)
    return score


def ql_score(query_tokens, doc_tokens, all_docs, lam=0.1, smoothing="jelinek-mercer", mu=2000.0) -> float:
    collection = Counter()
    for d in all_docs:
        collection.update(d)
    clen = sum(collection.values())
    floor = 1.0 / max(clen + len(collection), 1)
    tf = Counter(doc_tokens)
    dl = len(doc_tokens)
    logp = 0.0
    for t in query_tokens:
        cf = collection[t]
        if cf == 0 or clen == 0:
            p = floor
        elif smoothing == "jelinek-mercer":
            p_ml = tf[t] / dl if dl else 0.0
            p = (1.0 - lam) * p_ml + lam * (cf / clen)
        else:
            p = (tf[t] + mu * (cf / clen)) / (dl + mu)
        logp += math.log(p)
    return logp


def tfidf_cosine(query_tokens, doc_tokens, all_docs) -> float:
    n = len(all_docs)

    def idf(t):
        return idf_smooth_log(n, sum(1 for d in all_docs if t in d))

    q_tf = Counter(query_tokens)
    d_tf = Counter(doc_tokens)
    dot = 0.0
    q_sq = 0.0
    for t, qtf in q_tf.items():
        w = qtf * idf(t)
        q_sq += w * w
        if d_tf[t]:
            dot += w * (d_tf[t] * idf(t))
    d_sq = 0.0
    for t, dtf in d_tf.items():
        w = dtf * idf(t)
        d_sq += w * w
    if dot == 0.0 or q_sq == 0.0 or d_sq == 0.0:
        return 0.0
    return dot / (math.sqrt(q_sq) * math.sqrt(d_sq))


def rank_pool(score_fn, query_tokens, docs: dict[str, list[str]], pool) -> list[str]:
    """Sort pool doc ids by (-score, doc_id), the package's tie rule."""
    all_docs = list(docs.values())
    scored = [(-score_fn(query_tokens, docs[d], all_docs), d) for d in pool]
    return [d for _, d in sorted(scored)]


def precision_at_k(ranked_docs, grades, k, theta=2) -> float:
    return sum(1 for d in ranked_docs[:k] if grades.get(d, 0) >= theta) / k


def average_precision(ranked_docs, grades, pool, theta=2) -> float:
    total = sum(1 for d in pool if grades.get(d, 0) >= theta)
    if total == 0:
        return 0.0
    hits = 0
    acc = 0.0
    for i, d in enumerate(ranked_docs, start=1):
        if grades.get(d, 0) >= theta:
            hits += 1
            acc += hits / i
    return acc / total


def ndcg_at_k(ranked_docs, grades, pool, k, exponential=True) -> float:
    def gain(g):
        return float(2**g - 1) if exponential else float(g)

    dcg = sum(gain(grades.get(d, 0)) / math.log2(i + 1) for i, d in enumerate(ranked_docs[:k], start=1))
    ideal = sorted((grades.get(d, 0) for d in pool), reverse=True)[:k]
    idcg = sum(gain(g) / math.log2(i + 1) for i, g in enumerate(ideal, start=1))
    return dcg / idcg if idcg > 0 else 0.0


def levenshtein(a: str, b: str) -> int:
    """Full-matrix DP, kept deliberately naive."""
    rows = len(a) + 1
    cols = len(b) + 1
    dist = [[0] * cols for _ in range(rows)]
    for i in range(rows):
        dist[i][0] = i
    for j in range(cols):
        dist[0][j] = j
    for i in range(1, rows):
        for j in range(1, cols):
            cost = 0 if a[i - 1] == b[j - 1] else 1
            dist[i][j] = min(dist[i - 1][j] + 1, dist[i][j - 1] + 1, dist[i - 1][j - 1] + cost)
    return dist[-1][-1]


def eq2_attention(word_span, token_spans, normalized_weights) -> float:
    """Single-occurrence character-alignment of normalized weights onto a word."""
    ws, we = word_span
    total = 0.0
    for (ts, te), w in zip(token_spans, normalized_weights):
        ov = max(0, min(we, te) - max(ws, ts))
        if ov:
            total += ov * w / (te - ts)
    return total / (we - ws)
