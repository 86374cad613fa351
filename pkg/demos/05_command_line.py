"""
======================
The command-line tools
======================

The same pipeline from the shell: synthesize ticks, compute moments,
pool them by risk cells, turn one moment set into a density and run a
transport scenario.  Every command writes CSV files plus a
``<output>.meta.json`` sidecar holding the effective configuration, and
``report`` gathers the sidecars.  Here the commands are driven through
``main`` so the script runs anywhere; from a shell, type
``marketmoments synth ...`` or ``python3 -m marketmoments synth ...``.
"""

# %%
# Work in a scratch directory
# ---------------------------
import csv
import json
import os
import sys
import tempfile

from marketmoments.cli import main

tmp = tempfile.mkdtemp(prefix="marketmoments-demo-")
os.chdir(tmp)
print("working in", tmp)


def sh(line):
    print(f"$ marketmoments {line}", flush=True)
    code = main(line.split())
    sys.stdout.flush()
    print(f"  exit {code}")
    return code


# %%
# Ticks and moments
# -----------------
# Constant volumes keep the volume-weighted variance positive, which the
# density step below needs.
sh("synth --companies 4 --steps 2000 --seed 1 --volume-sigma 0 --risk-orders 2 -o ticks.csv")
sh("moments -i ticks.csv -o moments.csv -N 500 --xi 25 --n-max 3")
with open("moments.csv") as fh:
    rows = list(csv.DictReader(fh))
print(f"  {len(rows)} moment rows, first: {rows[0]}")

# %%
# Risk cells
# ----------
# The aggregate file holds cell and market rows, plus a portfolio-return
# check for every window; a mismatch would exit with code 3.
sh("aggregate -i ticks.csv --risks ticks.risks.csv -o cells.csv -d 0.5 -N 250 --k-x 2 --xi 25 --n-max 2")
with open("cells.csv.meta.json") as fh:
    print("  largest portfolio-return deviation:", json.load(fh)["markowitz_max_deviation"])

# %%
# A density
# ---------
# Two moments give the normal law.  ``--verify-moments`` prints the
# relative error of each recovered moment.
sh("density -i moments.csv --company Q00000 --window 1 --n 2 --verify-moments -o density.csv")

# %%
# Configuration files and a transport run
# ---------------------------------------
# Scenarios are ``key = value`` files.  A time step beyond the stability
# limit is refused with exit code 3 and the largest admissible step.
with open("scenario.ini", "w") as fh:
    fh.write("n_cells = 256\ndt = 0.01\nt_end = 2\nvelocity = 0.1\ncenter = 0.3\nsnapshot_every = 50\n")
sh("media -i scenario.ini -o snapshots.csv")
sh("media -i scenario.ini -o snapshots.csv --dt 0.05")

# %%
# Collected metadata
# ------------------
sh("report -i moments.csv.meta.json density.csv.meta.json -o report.json")
with open("report.json") as fh:
    print("  commands in report:", [d["meta"]["command"] for d in json.load(fh)])
