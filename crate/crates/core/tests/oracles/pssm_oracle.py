"""Independent recomputation of the fixture PSSM.

Reads the projected rows from ../fixtures/stack_fixture.txt and the
BLOSUM62 table from ../../data/BLOSUM62, and writes
../fixtures/pssm_expected.txt: one line per column with 20 integer
scores followed by 20 mixed frequencies.

Usage: python3 pssm_oracle.py
"""
import math
import os

import numpy as np

HERE = os.path.dirname(os.path.abspath(__file__))
ORDER = "ARNDCQEGHILKMFPSTWYV"
BETA = 10.0


def load_blosum():
    rows = {}
    header = None
    with open(os.path.join(HERE, "..", "..", "data", "BLOSUM62")) as f:
        for line in f:
            if line.startswith("#") or not line.strip():
                continue
            parts = line.split()
            if header is None:
                header = parts
                continue
            rows[parts[0]] = dict(zip(header, map(int, parts[1:])))
    return np.array([[rows[a][b] for b in ORDER] for a in ORDER], dtype=float)


def implied_background(s):
    """Smallest lambda > 0 at which exp(lambda*S) P = 1 has a positive
    solution summing to 1."""

    def excess(lam):
        p = np.linalg.solve(np.exp(lam * s), np.ones(20))
        return p.sum() - 1.0, p

    lo = 0.01
    while True:
        hi = lo + 0.01
        if excess(lo)[0] * excess(hi)[0] <= 0 and (excess(hi)[1] > 0).all():
            break
        lo = hi
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if excess(lo)[0] * excess(mid)[0] <= 0:
            hi = mid
        else:
            lo = mid
    lam = 0.5 * (lo + hi)
    p = excess(lam)[1]
    return lam, p / p.sum()


def read_rows():
    rows = []
    with open(os.path.join(HERE, "..", "fixtures", "stack_fixture.txt")) as f:
        for line in f:
            if line.startswith("expect "):
                rows.append(line.split()[1])
    return rows


def main():
    s = load_blosum()
    lam, p = implied_background(s)
    q = np.outer(p, p) * np.exp(lam * s)
    rows = read_rows()
    width = len(rows[0])

    weights = np.zeros(len(rows))
    for c in range(width):
        col = [r[c] for r in rows if r[c] in ORDER]
        distinct = len(set(col))
        for i, r in enumerate(rows):
            if r[c] in ORDER:
                weights[i] += 1.0 / (distinct * col.count(r[c]))
    weights /= weights.sum()

    covered = [
        len({r[c] for r in rows if r[c] in ORDER})
        for c in range(width)
        if any(r[c] in ORDER for r in rows[1:])
    ]
    nc = sum(covered) / len(covered) if covered else 1.0
    alpha = nc - 1.0

    out = []
    for c in range(width):
        f = np.zeros(20)
        for i, r in enumerate(rows):
            if r[c] in ORDER:
                f[ORDER.index(r[c])] += weights[i]
        f = f / f.sum() if f.sum() > 0 else p.copy()
        g = np.array([sum(f[j] / p[j] * q[i][j] for j in range(20)) for i in range(20)])
        g /= g.sum()
        mixed = (alpha * f + BETA * g) / (alpha + BETA)
        scores = [int(math.floor(math.log(mixed[i] / p[i]) / lam + 0.5)) for i in range(20)]
        out.append(" ".join(map(str, scores)) + " " + " ".join(f"{x:.12f}" for x in mixed))

    with open(os.path.join(HERE, "..", "fixtures", "pssm_expected.txt"), "w") as f:
        f.write(f"# lambda={lam:.12f} nc={nc:.12f}\n")
        f.write("\n".join(out) + "\n")


if __name__ == "__main__":
    main()
