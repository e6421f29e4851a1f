#!/usr/bin/env python3
"""Generate the desk-d4j mini-corpus and check its designed properties.

Writes data/desk-d4j/{fixtures/*.json, mock-models.json, endpoints.json,
design.json}. The checks recompute, in plain Python, the overlap regions of
the single-model top-ranked sets, the equal-ensemble acc@1 and the 3-model
weight grid, so the frozen values do not depend on the C++ code.
"""

import itertools
import json
import os
import sys

ROOT = os.path.join(os.path.dirname(os.path.abspath(__file__)), "..", "data", "desk-d4j")
MODELS = ["A", "B", "C", "D"]
POOL = 30
PLAN_SEED = 7

PROJECTS = {
    "Lang": ("org.apache.commons.lang3", ["StringUtils", "NumberUtils", "StrBuilder"]),
    "Math": ("org.apache.commons.math3", ["FastMath", "Fraction", "SimplexSolver"]),
    "Chart": ("org.jfree.chart", ["XYPlot", "TimeSeries", "DefaultIntervalCategoryDataset"]),
    "Time": ("org.joda.time", ["Period", "DateTimeZone", "Partial"]),
}

# K knows the faulty method, D answers model-specific decoys, S names the
# shared decoy of the bug, P answers {own decoy, faulty}. D rotates over
# triples of four decoys.
BEHAVIOUR = {
    "Lang-1": {"A": "K", "B": "K", "C": "D", "D": "D"},
    "Lang-2": {"A": "K", "B": "D", "C": "D", "D": "D"},
    "Lang-3": {"A": "D", "B": "K", "C": "K", "D": "K"},
    "Math-1": {"A": "D", "B": "D", "C": "K", "D": "D"},
    "Math-2": {"A": "K", "B": "D", "C": "D", "D": "K"},
    "Math-3": {"A": "K", "B": "S", "C": "S", "D": "D"},
    "Chart-1": {"A": "S", "B": "K", "C": "S", "D": "D"},
    "Chart-2": {"A": "D", "B": "D", "C": "P", "D": "P"},
    "Chart-3": {"A": "D", "B": "D", "C": "K", "D": "K"},
    "Time-1": {"A": "D", "B": "K", "C": "D", "D": "D"},
    "Time-2": {"A": "D", "B": "D", "C": "D", "D": "D"},
    "Time-3": {"A": "K", "B": "K", "C": "K", "D": "K"},
}


def bug_methods(bug):
    project, n = bug.split("-")
    pkg, classes = PROJECTS[project]
    cls = pkg + "." + classes[int(n) - 1]
    sig = lambda stem, arg: f"{cls}#{stem}({arg})"
    # Decoys sort before the faulty method so single-model ties rank a decoy first.
    faulty = sig("validate", "int")
    shared = sig("merge", "Object")
    decoys = {m: [sig(stem, m) for stem in ("apply", "compute", "format", "parse")] for m in MODELS}
    partial = {m: sig("normalize", m) for m in MODELS}
    helpers = [sig("parse", "String"), sig("resolve", "long")]
    return cls, faulty, shared, decoys, partial, helpers


def answer_sets(bug, model):
    _, faulty, shared, decoys, partial, _ = bug_methods(bug)
    kind = BEHAVIOUR[bug][model]
    if kind == "K":
        return [[faulty]]
    if kind == "S":
        return [[shared]]
    if kind == "P":
        return [[partial[model], faulty]]
    d = decoys[model]
    return [[d[i % 4], d[(i + 1) % 4], d[(i + 2) % 4]] for i in range(4)]


def fixture(bug):
    project = bug.split("-")[0]
    cls, faulty, shared, decoys, partial, helpers = bug_methods(bug)
    methods = sorted({faulty, shared, *helpers, *partial.values(), *(m for d in decoys.values() for m in d)})
    short = cls.rsplit(".", 1)[1]
    snippets = {}
    comments = {}
    for m in methods:
        name = m.split("#")[1]
        stem = name.split("(")[0]
        body = "    return delegate." + stem + "(value);" if m != faulty else "    if (value > limit) {\n        return false;\n    }\n    return true;"
        snippets[m] = f"public boolean {name.replace('(', '(final ').replace(')', ' value)')} {{\n{body}\n}}"
        if stem in ("validate", "parse", "merge"):
            comments[m] = f"/** {stem.capitalize()}s the given value for {short}. */"
    return {
        "bug_id": bug,
        "failing_tests": [{
            "name": f"{cls}Test::test{bug.replace('-', '')}",
            "message": "junit.framework.AssertionFailedError: expected:<true> but was:<false>",
            "stack_trace": f"\tat {cls}Test.test{bug.replace('-', '')}({short}Test.java:{40 + len(bug)})",
        }],
        "coverage": {cls: methods, cls + "$Helper": [helpers[0]]},
        "snippets": snippets,
        "comments": comments,
        "ground_truth": [faulty],
    }


def mock_script():
    models = {}
    for model in MODELS:
        bugs = {}
        for bug in BEHAVIOUR:
            cls, faulty, *_ = bug_methods(bug)
            answers = answer_sets(bug, model)
            calls = [{"name": "get_failing_tests_covered_methods_for_class", "arguments": {"class_name": cls}},
                     {"name": "get_code_snippet", "arguments": {"method_name": answers[0][-1]}}]
            if model in ("B", "D"):
                calls.append({"name": "get_comments", "arguments": {"method_name": answers[0][0]}})
            bugs[bug] = {"answers": answers, "tool_calls": calls}
        models["desk-" + model.lower()] = {"default": {"answers": [[]]}, "bugs": bugs}
    return {"format": "cosmos-mock/1", "models": models}


# --- oracles -----------------------------------------------------------------

def score_runs(runs):
    scores = {}
    for s in runs:
        for m in s:
            scores[m] = scores.get(m, 0.0) + 1.0 / len(s)
    return {m: v / len(runs) for m, v in scores.items()}


def top(scores):
    return min(scores.items(), key=lambda kv: (-kv[1], kv[0]))[0] if scores else None


def runs_for(bug, model, indices):
    sets = answer_sets(bug, model)
    return [sets[(PLAN_SEED + i) % len(sets)] for i in indices]


def top_ranked(model, runs=5):
    out = set()
    for bug in BEHAVIOUR:
        faulty = bug_methods(bug)[1]
        if top(score_runs(runs_for(bug, model, range(runs)))) == faulty:
            out.add(bug)
    return out


def overlap_regions(sets):
    names = sorted(sets)
    universe = set().union(*sets.values())
    regions = {}
    for size in range(1, len(names) + 1):
        for combo in itertools.combinations(names, size):
            inside = set(universe)
            for n in names:
                inside = inside & sets[n] if n in combo else inside - sets[n]
            regions["&".join(combo)] = len(inside)
    return regions


def weighted_top(bug, weights, indices):
    per_model = {m: score_runs(runs_for(bug, m, indices)) for m in weights}
    total = sum(weights.values())
    scores = {}
    for m in sorted(weights):
        for meth, v in per_model[m].items():
            scores[meth] = scores.get(meth, 0.0) + weights[m] / total * v
    return top(scores)


def acc1(weights, indices):
    return sum(weighted_top(b, weights, indices) == bug_methods(b)[1] for b in BEHAVIOUR)


def main():
    os.makedirs(os.path.join(ROOT, "fixtures"), exist_ok=True)
    for project in PROJECTS:
        bugs = [fixture(b) for b in BEHAVIOUR if b.startswith(project + "-")]
        doc = {"format": "cosmos-fixture/1", "project": project, "bugs": bugs}
        with open(os.path.join(ROOT, "fixtures", project.lower() + ".json"), "w") as f:
            json.dump(doc, f, indent=2, sort_keys=True)
            f.write("\n")
    with open(os.path.join(ROOT, "mock-models.json"), "w") as f:
        json.dump(mock_script(), f, indent=2, sort_keys=True)
        f.write("\n")
    endpoints = {"endpoints": [{"name": m, "kind": "mock", "script": "mock-models.json",
                                "model_id": "desk-" + m.lower()} for m in MODELS]}
    with open(os.path.join(ROOT, "endpoints.json"), "w") as f:
        json.dump(endpoints, f, indent=2)
        f.write("\n")

    tops = {m: top_ranked(m) for m in MODELS}
    regions = overlap_regions(tops)
    singles = {m: len(tops[m]) for m in MODELS}
    ensemble = acc1({m: 1.0 for m in MODELS}, range(5))
    assert ensemble > max(singles.values()), (ensemble, singles)

    # Equal ensemble over any 5 runs per model: the faulty method scores at
    # least 0.25 wherever a K or two P models back it, decoys at most 0.125.
    worst = min(acc1({m: 1.0 for m in MODELS}, idx) for idx in itertools.combinations(range(9), 5))
    assert worst == ensemble, (worst, ensemble)

    grid = {}
    steps = 20
    for i, j, k in itertools.product(range(steps + 1), repeat=3):
        if i + j + k == 0:
            continue
        w = {"A": i / steps, "B": j / steps, "C": k / steps}
        grid[(i, j, k)] = acc1(w, range(5))
    best = max(grid.values())
    share = sum(v == best for v in grid.values()) / len(grid)

    design = {
        "plan_seed": PLAN_SEED,
        "models": {m: "desk-" + m.lower() for m in MODELS},
        "behaviour": BEHAVIOUR,
        "top_ranked": {m: sorted(tops[m]) for m in MODELS},
        "overlap_regions": regions,
        "single_acc1_r5": singles,
        "equal_ensemble_acc1_r20": ensemble,
        "grid_abc_step_0_05": {"best_acc1": best, "share_of_grid_at_best": round(share, 4),
                                "equal_weights_acc1": acc1({"A": 1, "B": 1, "C": 1}, range(5))},
    }
    with open(os.path.join(ROOT, "design.json"), "w") as f:
        json.dump(design, f, indent=2, sort_keys=True)
        f.write("\n")
    json.dump(design, sys.stdout, indent=2, sort_keys=True)
    print()


if __name__ == "__main__":
    main()
