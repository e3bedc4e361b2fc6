#!/usr/bin/env python3
"""Reference evaluation of the user-based kNN predictor.

Written straight from the formula, without sharing code with the Rust
implementation. Used to produce the expected values frozen in the tests.

    python3 scripts/cf_oracle.py predict <csv> [k]
    python3 scripts/cf_oracle.py eval <csv> [k]
"""

import csv
import json
import math
import sys
from fractions import Fraction


def load(path):
    ratings = {}
    with open(path, newline="") as f:
        for row in csv.DictReader(f):
            ratings.setdefault(row["member"], {})[row["item"]] = Fraction(row["rating"])
    return ratings


def items_of(ratings):
    return sorted({i for row in ratings.values() for i in row})


def pearson(a, b):
    common = sorted(set(a) & set(b))
    if len(common) < 2:
        return 0.0
    xs = [float(a[i]) for i in common]
    ys = [float(b[i]) for i in common]
    mx = sum(xs) / len(xs)
    my = sum(ys) / len(ys)
    cov = sum((x - mx) * (y - my) for x, y in zip(xs, ys))
    vx = sum((x - mx) ** 2 for x in xs)
    vy = sum((y - my) ** 2 for y in ys)
    if vx == 0 or vy == 0:
        return 0.0
    return cov / math.sqrt(vx * vy)


def mean(row):
    return float(sum(row.values()) / len(row))


def predict(ratings, u, item, k):
    if not ratings.get(u):
        return None
    cands = []
    for v, row in ratings.items():
        if v == u or item not in row:
            continue
        s = pearson(ratings[u], row)
        if s != 0:
            cands.append((-round(s * 1e9), v, s))
    cands.sort()
    hood = cands[:k]
    if not hood:
        return None
    num = sum(s * (float(ratings[v][item]) - mean(ratings[v])) for _, v, s in hood)
    den = sum(abs(s) for _, _, s in hood)
    return mean(ratings[u]) + num / den


def hide(ratings, u, item):
    out = {v: dict(row) for v, row in ratings.items()}
    del out[u][item]
    return out


def recommend(ratings, u, items, k):
    best = None
    for item in items:
        if item in ratings[u]:
            continue
        p = predict(ratings, u, item, k)
        if p is None:
            continue
        if best is None or p < best[0] - 1e-9 or (abs(p - best[0]) <= 1e-9 and item < best[1]):
            best = (p, item)
    return None if best is None else best[1]


def evaluate(ratings, k, order=True):
    items = items_of(ratings)
    errors, total = [], 0
    for u in sorted(ratings):
        for item in sorted(ratings[u]):
            total += 1
            p = predict(hide(ratings, u, item), u, item, k)
            if p is not None:
                errors.append(abs(p - float(ratings[u][item])))
    hits, eligible = 0, 0
    if order:
        for u in sorted(ratings):
            row = ratings[u]
            if len(row) < 2:
                continue
            eligible += 1
            first = min(row, key=lambda i: row[i])
            if recommend(hide(ratings, u, first), u, items, k) == first:
                hits += 1
    return {
        "mae": sum(errors) / len(errors) if errors else None,
        "coverage": len(errors) / total if total else 0.0,
        "precision_at_1": hits / eligible if eligible else None,
    }


def main():
    mode, path = sys.argv[1], sys.argv[2]
    k = int(sys.argv[3]) if len(sys.argv) > 3 else 3
    ratings = load(path)
    if mode == "predict":
        out = {}
        for u in sorted(ratings):
            for item in items_of(ratings):
                if item not in ratings[u]:
                    out[f"{u}/{item}"] = predict(ratings, u, item, k)
        print(json.dumps(out, indent=2))
    else:
        print(json.dumps(evaluate(ratings, k), indent=2))


if __name__ == "__main__":
    main()
