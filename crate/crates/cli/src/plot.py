#!/usr/bin/env python3
"""Figures for one evade run. Usage: python3 plot.py [run_dir]"""
import csv
import os
import sys

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

HERE = sys.argv[1] if len(sys.argv) > 1 else os.path.dirname(os.path.abspath(__file__))


def load(name):
    with open(os.path.join(HERE, name), newline="") as f:
        rows = [line for line in f if not line.startswith("#")]
    reader = csv.reader(rows)
    header = [h.split("[")[0] for h in next(reader)]
    cols = {h: [] for h in header}
    for row in reader:
        for h, cell in zip(header, row):
            cols[h].append(cell)
    return cols


def num(cells):
    return [float(c) if c != "" else float("nan") for c in cells]


trace = load("trace.csv")
t = num(trace["t"])

# trajectory of both vehicles, colored by constraint mode
fig, ax = plt.subplots(figsize=(9, 4))
ax.plot(num(trace["x"]), num(trace["y"]), color="0.6", lw=1, label="subject")
for mode, color in (("FCC", "tab:red"), ("RCC", "tab:orange"), ("NONE", "tab:blue")):
    pts = [(x, y) for x, y, m in zip(num(trace["x"]), num(trace["y"]), trace["mode"]) if m == mode]
    if pts:
        ax.scatter(*zip(*pts), s=6, color=color, label=mode)
ax.plot(num(trace["lead_x"]), num(trace["lead_y"]), "ks--", ms=4, lw=1, markevery=10, label="lead")
ax.set_xlabel("x [m]")
ax.set_ylabel("y [m]")
ax.legend()
fig.tight_layout()
fig.savefig(os.path.join(HERE, "trajectory.png"), dpi=150)

# speed and heading
fig, (a1, a2) = plt.subplots(2, 1, sharex=True, figsize=(7, 5))
a1.plot(t, [v * 3.6 for v in num(trace["v_x"])])
a1.set_ylabel("v_x [km/h]")
a2.plot(t, num(trace["psi"]))
a2.set_ylabel("psi [rad]")
a2.set_xlabel("t [s]")
fig.tight_layout()
fig.savefig(os.path.join(HERE, "velocity_heading.png"), dpi=150)

# net yaw moment from torque vectoring
fig, ax = plt.subplots(figsize=(7, 3))
ax.plot(t, num(trace["yaw_moment"]))
ax.set_xlabel("t [s]")
ax.set_ylabel("M_z [N m]")
fig.tight_layout()
fig.savefig(os.path.join(HERE, "yaw_moment.png"), dpi=150)
