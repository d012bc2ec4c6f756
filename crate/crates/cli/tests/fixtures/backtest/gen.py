#!/usr/bin/env python3
"""Regenerates the synthetic two-year backtest fixture (deterministic)."""
import datetime
import math
import random

random.seed(20210405)
J = 12
D0 = datetime.date(2019, 1, 1)
N = 731  # 2019-01-01 .. 2020-12-31

with open("loads.csv", "w") as f, open("covariates.csv", "w") as g:
    f.write("date,interval,load\n")
    g.write("date,temp\n")
    for i in range(N):
        d = D0 + datetime.timedelta(days=i)
        temp = 17 + 11 * math.sin(2 * math.pi * (i - 110) / 365.25) + random.uniform(-4.5, 4.5)
        g.write(f"{d},{temp:.4f}\n")
        weekend = 0.92 if d.weekday() >= 5 else 1.0
        for j in range(1, J + 1):
            daily = 45 * math.sin(2 * math.pi * (j - 0.5) / J) + 10 * math.sin(4 * math.pi * j / J)
            wx = 0.30 * (temp - 17.0) ** 2 * (0.8 + 0.4 * j / J)
            y = weekend * (430 + daily) + wx + random.uniform(-3, 3)
            f.write(f"{d},{j},{y:.5f}\n")

with open("holidays.txt", "w") as h:
    for day in ["2019-01-01", "2019-05-01", "2019-12-25", "2020-01-01", "2020-05-01", "2020-12-25"]:
        h.write(day + "\n")
