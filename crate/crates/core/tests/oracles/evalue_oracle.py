"""High-precision e-values over a 5x5x5 grid of (S, m, n).

Writes ../fixtures/evalue_expected.txt with lines `S m n E` where E is
K*m*n*exp(-lambda*S) evaluated at 50 significant digits and printed with
17 significant digits.

Usage: python3 evalue_oracle.py
"""
import os

from mpmath import mp, mpf, exp, nstr

mp.dps = 50
LAMBDA = mpf("0.267")
K = mpf("0.041")
SCORES = [0, 25, 50, 100, 250]
QUERY_LENS = [1, 100, 1000, 10000, 100000]
DB_SIZES = [1000, 10**6, 10**8, 10**10, 10**12]

HERE = os.path.dirname(os.path.abspath(__file__))
with open(os.path.join(HERE, "..", "fixtures", "evalue_expected.txt"), "w") as out:
    out.write("# S m n evalue (lambda=0.267 K=0.041)\n")
    for s in SCORES:
        for m in QUERY_LENS:
            for n in DB_SIZES:
                e = K * m * n * exp(-LAMBDA * s)
                out.write(f"{s} {m} {n} {nstr(e, 17, min_fixed=0, max_fixed=0)}\n")
