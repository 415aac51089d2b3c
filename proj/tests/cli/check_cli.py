#!/usr/bin/env python3
"""End-to-end checks of the twsub executable: exit codes, JSON schemas, CSV layout."""

import csv
import io
import json
import pathlib
import random
import subprocess
import sys
import tempfile

import jsonschema
from referencing import Registry, Resource

EXE = sys.argv[1]
ROOT = pathlib.Path(sys.argv[2])
SCHEMAS = ROOT / "docs" / "schemas"

failures = []


def check(ok, what):
    print(("ok   " if ok else "FAIL ") + what)
    if not ok:
        failures.append(what)


def run(*args):
    return subprocess.run([EXE, *args], capture_output=True, text=True, timeout=600)


def load_schema(name):
    return json.loads((SCHEMAS / name).read_text())


bandwidth_schema = load_schema("bandwidth.schema.json")
infer_schema = load_schema("infer.schema.json")
registry = Registry().with_resource("bandwidth.schema.json", Resource.from_contents(bandwidth_schema))


def valid(doc, schema):
    try:
        jsonschema.Draft202012Validator(schema, registry=registry).validate(doc)
        return True
    except jsonschema.ValidationError as e:
        print("     " + e.message)
        return False


def write_panel(path, n, t, seed):
    rng = random.Random(seed)
    a = [rng.gauss(0, 0.3) for _ in range(n)]
    g = [rng.gauss(0, 0.5) for _ in range(t)]
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["unit", "time", "y", "x"])
        for i in range(n):
            for s in range(t):
                x = a[i] + g[s] + rng.gauss(0, 1)
                w.writerow([i, s, f"{1 + x + a[i] * g[s] + rng.gauss(0, 1):.8f}", f"{x:.8f}"])


with tempfile.TemporaryDirectory() as tmp:
    tmp = pathlib.Path(tmp)
    panel = tmp / "panel.csv"
    write_panel(panel, 30, 24, 5)

    cases = [
        ["--statistic", "mean", "--method", "quantile", "--b", "5", "--l", "4"],
        ["--statistic", "mean", "--method", "quantile", "--b", "5", "--l", "4", "--side", "lower"],
        ["--statistic", "mean", "--method", "variance"],
        ["--statistic", "mean", "--method", "variance_bc", "--b", "6", "--l", "6"],
        ["--statistic", "ols", "--intercept", "--method", "quantile", "--b", "6", "--l", "6"],
        ["--statistic", "ols", "--intercept", "--method", "variance"],
        ["--statistic", "ols", "--intercept", "--method", "variance_bc"],
    ]
    for extra in cases:
        r = run("infer", "--panel", str(panel), *extra)
        label = "infer " + " ".join(extra)
        check(r.returncode == 0, label + " exits 0")
        if r.returncode == 0:
            check(valid(json.loads(r.stdout), infer_schema), label + " matches infer schema")

    a = run("infer", "--panel", str(panel), "--b", "5", "--l", "4")
    b = run("infer", "--panel", str(panel), "--b", "5", "--l", "4", "--seed", "20240611")
    check(a.stdout == b.stdout, "omitted --seed equals the documented default")
    c = run("infer", "--panel", str(panel), "--b", "7", "--l", "4", "--seed", "99")
    check(json.loads(c.stdout)["seed"] == 99, "--seed is recorded")

    r = run("bandwidth", "--panel", str(panel))
    check(r.returncode == 0, "bandwidth exits 0")
    if r.returncode == 0:
        check(valid(json.loads(r.stdout), bandwidth_schema), "bandwidth matches schema")

    out = tmp / "out.json"
    r = run("bandwidth", "--panel", str(panel), "--output", str(out))
    check(r.returncode == 0 and r.stdout == "" and out.exists(), "--output writes the file")

    config = tmp / "study.json"
    config.write_text(json.dumps({
        "name": "cli check",
        "cells": [
            {"dgp": "linear_regression", "rho": [0.0, 0.5], "methods": ["quantile"],
             "grid": [{"N": 20, "T": 20, "b": 5, "l": 5}]},
            {"dgp": "projected_mean", "rho": 0.5, "N": 20, "T": 20, "sizes": "data_driven",
             "methods": ["variance", "variance_bc"]},
        ],
    }))
    r = run("simulate", "--config", str(config), "--reps", "20", "--threads", "2")
    check(r.returncode == 0, "simulate exits 0")
    rows = list(csv.reader(io.StringIO(r.stdout)))
    header = ("dgp,rho,N,T,b,l,method,n_reps,n_failed,n_clipped,coverage,mc_std_error,"
              "mean_b,mean_l,wall_time").split(",")
    check(bool(rows) and rows[0] == header, "coverage CSV header")
    check(len(rows) == 5 and all(len(row) == len(header) for row in rows), "coverage CSV has 4 rows of 15 fields")
    body = rows[1:]
    check(all(row[7] == "20" for row in body), "n_reps column honours --reps")
    check(all(row[10] == "" or 0.0 <= float(row[10]) <= 1.0 for row in body), "coverage within [0, 1]")

    again = run("simulate", "--config", str(config), "--reps", "20", "--threads", "1")
    strip = lambda text: [row[:-1] for row in csv.reader(io.StringIO(text))]
    check(strip(r.stdout) == strip(again.stdout), "simulate output independent of thread count")

    r = run("simulate", "--config", str(config), "--reps", "5", "--format", "json")
    check(r.returncode == 0 and len(json.loads(r.stdout)["rows"]) == 4, "simulate --format json")
    r = run("simulate", "--config", str(config), "--reps", "5", "--format", "table")
    check(r.returncode == 0 and r.stdout.splitlines()[0].startswith("dgp"), "simulate --format table")

    # usage errors: exit 1 and name the flag
    r = run("infer", "--panel", str(panel), "--bogus")
    check(r.returncode == 1 and "--bogus" in r.stderr, "unknown flag exits 1 naming it")
    r = run("infer", "--panel", str(panel), "--b", "5")
    check(r.returncode == 1 and "--l" in r.stderr, "--b without --l exits 1")
    r = run("infer", "--panel", str(panel), "--method", "median", "--b", "5", "--l", "4")
    check(r.returncode == 1 and "--method" in r.stderr, "bad --method value exits 1")
    r = run()
    check(r.returncode == 1, "missing subcommand exits 1")

    # data errors: exit 2 with file and line context
    bad = tmp / "bad.csv"
    bad.write_text("unit,time,v\n0,0,1.0\n0,1,abc\n")
    r = run("infer", "--panel", str(bad), "--b", "1", "--l", "1")
    check(r.returncode == 2 and "bad.csv:3" in r.stderr, "unparsable value exits 2 with file:line")
    unbalanced = tmp / "unbalanced.csv"
    unbalanced.write_text("unit,time,v\n0,0,1\n0,1,2\n1,0,3\n")
    r = run("bandwidth", "--panel", str(unbalanced))
    check(r.returncode == 2 and "MissingCell" in r.stderr, "missing cell exits 2")
    r = run("infer", "--panel", str(panel), "--b", "500", "--l", "4")
    check(r.returncode == 2 and "InvalidBlockSize" in r.stderr, "oversized b exits 2")
    broken = tmp / "broken.json"
    broken.write_text("{\"cells\": [")
    r = run("simulate", "--config", str(broken))
    check(r.returncode == 2 and "ParseError" in r.stderr and "line" in r.stderr, "malformed config exits 2")
    config.write_text(json.dumps({"cells": [{"dgp": "garch", "rho": 0, "N": 5, "T": 5, "b": 2, "l": 2,
                                             "methods": ["quantile"]}]}))
    r = run("simulate", "--config", str(config))
    check(r.returncode == 2 and "garch" in r.stderr, "unknown dgp exits 2")

print(f"{len(failures)} failure(s)")
sys.exit(1 if failures else 0)
