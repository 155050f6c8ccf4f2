"""Attack x epsilon x transform experiment grids and their CSV reports.

Every random choice inside a run comes from ``derive_seed(master, ...)``
with a path naming the grid cell, so a cell's outputs do not change when
other cells are added or removed.
"""

import csv
import hashlib
import io
import json
import logging
import os
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from . import attacks as atk
from . import classifier as clf
from . import metrics
from . import transforms as tfm
from .config import config_hash
from .data import load_idx_files, synth_shapes
from .rng import derive_seed

__all__ = [
    "ACCURACY_COLUMNS",
    "DESTRUCTION_COLUMNS",
    "SWEEP_COLUMNS",
    "ReportBundle",
    "load_datasets",
    "load_model",
    "evaluation_pool",
    "select_indices",
    "cell_transform_spec",
    "destruction_rows",
    "run_experiment",
    "emit_report",
    "format_number",
    "write_csv",
]

log = logging.getLogger(__name__)

ACCURACY_COLUMNS = ("method", "epsilon", "k", "n", "clean_accuracy", "adv_accuracy")
DESTRUCTION_COLUMNS = ("method", "epsilon", "sweep", "kind", "parameter", "k", "n",
                       "numerator", "denominator", "d", "defined")
SWEEP_COLUMNS = ("parameter", "method", "epsilon", "k", "d", "numerator", "denominator", "defined")


@dataclass
class ReportBundle:
    accuracy_rows: list = field(default_factory=list)
    destruction_rows: list = field(default_factory=list)
    sweep_names: tuple = ()
    provenance: dict = field(default_factory=dict)
    trends: str = ""

    def sweep_rows(self, name):
        return [r for r in self.destruction_rows if r["sweep"] == name]


def load_datasets(cfg):
    ds = cfg.dataset
    if ds.get("source", "synth") == "idx":
        train = load_idx_files(cfg.resolve(ds["train_images"]), cfg.resolve(ds["train_labels"]), "train")
        test = load_idx_files(cfg.resolve(ds["test_images"]), cfg.resolve(ds["test_labels"]), "test")
        return train, test
    seed = ds.get("seed", cfg.seed)
    side = ds.get("side", 28)
    train = synth_shapes(derive_seed(seed, "synth", "train"), ds.get("train_per_class", 500), side, "train")
    test = synth_shapes(derive_seed(seed, "synth", "test"), ds.get("test_per_class", 100), side, "test")
    return train, test


def load_model(cfg, train_set):
    """Checkpoint from the config, or a freshly trained model."""
    if "checkpoint" in cfg.model:
        return clf.load_checkpoint(cfg.resolve(cfg.model["checkpoint"]))
    arch = clf.Architecture(train_set.image_shape, tuple(cfg.model.get("hidden", (256, 128))),
                            cfg.model.get("activation", "relu"))
    tc = cfg.train_config
    params = clf.init_params(tc.seed, arch, train_set.num_classes)
    return clf.train(params, train_set, tc)


def evaluation_pool(cfg, test_set):
    """Fixed subset of the test split shared by every cell (all of it by default)."""
    if cfg.pool_size is None or cfg.pool_size >= len(test_set):
        idx = np.arange(len(test_set))
    else:
        idx = np.sort(metrics.sample_average_case(len(test_set), cfg.pool_size,
                                                  derive_seed(cfg.seed, "pool")))
    return test_set.subset(idx), idx


def _cell_key(cell):
    key = f"{cell.method}/eps={cell.epsilon}"
    if cell.method != "fast":
        key += f"/alpha={cell.alpha}/iters={cell.iterations}"
    return key


def select_indices(cfg, params, pool, adv, cell):
    """Pool positions evaluated for one cell, plus a prefilter summary."""
    seed = derive_seed(cfg.seed, "select", _cell_key(cell))
    if cfg.protocol == "average":
        if cfg.n is None:
            return np.arange(len(pool)), None
        return metrics.sample_average_case(len(pool), min(cfg.n, len(pool)), seed), None
    k_top = cfg.prefilter_k or max(cfg.k)
    n = len(pool) if cfg.n is None else cfg.n
    res = metrics.prefilter(params, pool, adv, n, k_top, seed)
    if res.short:
        log.warning("%s: only %d of %d prefiltered candidates", _cell_key(cell), res.candidates, n)
    return res.indices, {"candidates": res.candidates, "requested": n, "selected": len(res.indices)}


def cell_transform_spec(cfg, cell, sweep, spec):
    """Seed stochastic transforms from the (cell, sweep, parameter) path."""
    if not spec.stochastic:
        return spec
    return spec.with_seed(derive_seed(cfg.seed, "transform", _cell_key(cell), sweep, spec.label()))


def destruction_rows(params, clean, adv, transformed, labels, ks, base):
    """One row per k for a single (cell, transform) evaluation."""
    rows = []
    for k in ks:
        recs = metrics.make_records(metrics.indicators(params, clean, labels, k),
                                    metrics.indicators(params, adv, labels, k),
                                    metrics.indicators(params, transformed, labels, k), k)
        row = dict(base, k=k, n=len(recs))
        try:
            res = metrics.destruction_rate(recs)
            row.update(numerator=res.numerator, denominator=res.denominator, d=res.d, defined=1)
        except metrics.UndefinedDestructionRate:
            den = sum(r.clean_correct * (1 - r.adv_correct) for r in recs)
            row.update(numerator=0, denominator=den, d=None, defined=0)
        except ValueError:
            # no images selected for this cell
            row.update(numerator=0, denominator=0, d=None, defined=0)
        rows.append(row)
    return rows


def run_experiment(cfg, params=None, datasets=None):
    """Run the full grid; ``params``/``datasets`` skip loading when given."""
    train_set, test_set = datasets or load_datasets(cfg)
    if params is None:
        params = load_model(cfg, train_set)
    pool, pool_idx = evaluation_pool(cfg, test_set)
    ks = tuple(k for k in cfg.k if k <= params.num_classes)
    bundle = ReportBundle(sweep_names=tuple(s.name for s in cfg.sweeps))
    prov_cells = {}
    for cell in cfg.attacks:
        key = _cell_key(cell)
        log.info("attack cell %s", key)
        adv = atk.generate(params, pool.images, pool.labels, cell)
        for k in ks:
            bundle.accuracy_rows.append({
                "method": cell.method, "epsilon": cell.epsilon, "k": k, "n": len(pool),
                "clean_accuracy": metrics.accuracy(params, pool, k),
                "adv_accuracy": float(metrics.indicators(params, adv, pool.labels, k).mean()),
            })
        sel, pre = select_indices(cfg, params, pool, adv, cell)
        prov_cells[key] = {"selection_seed": derive_seed(cfg.seed, "select", key),
                           "selected": len(sel)}
        if pre is not None:
            prov_cells[key]["prefilter"] = pre
        clean_sel, adv_sel = pool.images[sel], adv[sel]
        labels_sel, keys = pool.labels[sel], pool_idx[sel]
        for sweep in cfg.sweeps:
            for spec in sweep.specs:
                spec = cell_transform_spec(cfg, cell, sweep.name, spec)
                transformed = tfm.apply_batch(spec, adv_sel, keys) if len(sel) else adv_sel
                base = {"method": cell.method, "epsilon": cell.epsilon, "sweep": sweep.name,
                        "kind": spec.kind, "parameter": spec.label()}
                bundle.destruction_rows.extend(
                    destruction_rows(params, clean_sel, adv_sel, transformed, labels_sel, ks, base))
    bundle.provenance = {
        "version": __version__,
        "config_hash": config_hash(cfg),
        "master_seed": cfg.seed,
        "protocol": cfg.protocol,
        "n": cfg.n,
        "k": list(ks),
        "pool_size": len(pool),
        "model_sha256": hashlib.sha256(clf.dump_checkpoint(params).encode("ascii")).hexdigest(),
        "cells": prov_cells,
    }
    bundle.trends = trends_summary(bundle)
    return bundle


def _mean(values):
    return sum(values) / len(values) if values else None


def trends_summary(bundle):
    """Plain-text digest of qualitative trends, for human review only."""
    lines = ["Qualitative trends (informational, not asserted)", ""]
    acc = bundle.accuracy_rows
    if acc:
        lines.append("Adversarial accuracy by method (k: clean -> adv per epsilon):")
        for method in dict.fromkeys(r["method"] for r in acc):
            for k in sorted({r["k"] for r in acc}):
                rows = [r for r in acc if r["method"] == method and r["k"] == k]
                parts = ", ".join(f"eps={r['epsilon']}: {r['adv_accuracy']:.3f}" for r in rows)
                lines.append(f"  {method} top-{k} (clean {rows[0]['clean_accuracy']:.3f}): {parts}")
        lines.append("")
    rows = [r for r in bundle.destruction_rows if r["defined"]]
    if not rows:
        lines.append("No defined destruction rates.")
        return "\n".join(lines) + "\n"
    ks = sorted({r["k"] for r in rows})
    methods = list(dict.fromkeys(r["method"] for r in rows))
    lines.append("Mean destruction rate per sweep and method:")
    sweep_means = {}
    for name in bundle.sweep_names:
        for k in ks:
            cells = {m: _mean([r["d"] for r in rows if r["sweep"] == name and r["k"] == k
                               and r["method"] == m]) for m in methods}
            parts = ", ".join(f"{m}={v:.3f}" for m, v in cells.items() if v is not None)
            lines.append(f"  {name} top-{k}: {parts}")
            vals = [v for v in cells.values() if v is not None]
            if vals:
                sweep_means.setdefault(name, []).extend(vals)
    lines.append("")
    ranked = sorted(sweep_means, key=lambda s: _mean(sweep_means[s]))
    lines.append("Sweeps from mildest to most destructive: " + ", ".join(ranked))
    by_method = {m: _mean([r["d"] for r in rows if r["method"] == m]) for m in methods}
    robust = min(by_method, key=by_method.get)
    lines.append(f"Most transformation-robust method (lowest mean d): {robust}")
    if len(ks) > 1:
        lo, hi = ks[0], ks[-1]
        pairs = {}
        for r in rows:
            pairs.setdefault((r["method"], r["epsilon"], r["sweep"], r["parameter"]), {})[r["k"]] = r["d"]
        both = [p for p in pairs.values() if lo in p and hi in p]
        higher = sum(p[hi] >= p[lo] for p in both)
        lines.append(f"top-{hi} d >= top-{lo} d in {higher} of {len(both)} paired cells")
    return "\n".join(lines) + "\n"


def format_number(value):
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return str(int(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return "%.6g" % value
    return str(value)


def write_csv(path, columns, rows):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([format_number(row[c]) for c in columns])
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(buf.getvalue())


def emit_report(bundle, out_dir):
    """Write accuracy.csv, destruction.csv, sweep_<name>.csv, provenance.json
    and trends.txt; returns the written paths."""
    os.makedirs(out_dir, exist_ok=True)
    paths = []

    def target(name):
        p = os.path.join(out_dir, name)
        paths.append(p)
        return p

    write_csv(target("accuracy.csv"), ACCURACY_COLUMNS, bundle.accuracy_rows)
    write_csv(target("destruction.csv"), DESTRUCTION_COLUMNS, bundle.destruction_rows)
    for name in bundle.sweep_names:
        rows = sorted(bundle.sweep_rows(name), key=lambda r: (r["method"], r["epsilon"], r["k"]))
        write_csv(target(f"sweep_{name}.csv"), SWEEP_COLUMNS, rows)
    with open(target("provenance.json"), "w", encoding="utf-8") as fh:
        json.dump(bundle.provenance, fh, indent=2, sort_keys=True)
        fh.write("\n")
    with open(target("trends.txt"), "w", encoding="utf-8") as fh:
        fh.write(bundle.trends)
    return paths
