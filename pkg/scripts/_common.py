"""Shared driver for the study scripts: run, print the aggregate table, save CSVs."""
import argparse
import os
import time
from pathlib import Path

import pandas as pd

from pseudosel.selection import GammaSpec
from pseudosel.simulation import ScenarioConfig, StudySettings, run_study


def parser(description, reps):
    p = argparse.ArgumentParser(description=description)
    p.add_argument("--reps", type=int, default=reps)
    p.add_argument("--seed", type=int, default=2024)
    p.add_argument("--jobs", type=int, default=os.cpu_count() or 1)
    p.add_argument("--out", type=Path, default=Path("results"))
    return p


def run(name, configs, methods, penalties, args, cs=(1.0, 6.0)):
    settings = StudySettings(methods=tuple(methods), penalties=tuple(penalties),
                             gammas=tuple(GammaSpec(c) for c in cs))
    tables, aggs = [], []
    for cfg in configs:
        t0 = time.perf_counter()
        res = run_study(cfg, settings, jobs=args.jobs)
        print(f"{cfg.scenario} n={cfg.n} p={cfg.p}: {time.perf_counter() - t0:.0f}s")
        tables.append(res.replicates)
        aggs.append(res.aggregate)
    reps, agg = pd.concat(tables, ignore_index=True), pd.concat(aggs, ignore_index=True)
    args.out.mkdir(parents=True, exist_ok=True)
    reps.to_csv(args.out / f"{name}_replicates.csv", index=False)
    agg.to_csv(args.out / f"{name}_aggregate.csv", index=False)
    cols = ["scenario", "n", "p", "penalty", "method", "c", "psr_mean", "fdr_mean", "sse_mean",
            "replicates_ok"]
    with pd.option_context("display.width", 160, "display.max_columns", 20):
        print(agg[cols].to_string(index=False, float_format=lambda v: f"{v:.3f}"))
    return agg


def config(scenario, n, p, args, **kw):
    return ScenarioConfig(scenario, n=n, p=p, replicates=args.reps, seed=args.seed, **kw)
