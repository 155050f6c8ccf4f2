"""Generate adversarial images, transform them and measure destruction rates.

    advbench train      --config C --out model.ckpt
    advbench attack     --config C [--model M] --method fast --epsilon 16 --out DIR
    advbench attack     --model M --input DIR --method fast --epsilon 16 --out DIR
    advbench transform  --spec JSON|FILE --input DIR --out DIR [--seed S]
    advbench evaluate   --model M --input DIR [--transformed DIR] --out DIR
    advbench experiment --config C --out DIR [--seed S]

An attack directory holds clean_<i>.p?m and adv_<i>.p?m images plus
manifest.csv with columns filename, clean_filename, source_index, label,
method, epsilon, alpha, iterations.
"""

import argparse
import csv
import json
import logging
import os
import sys

import numpy as np

from . import attacks as atk
from . import classifier as clf
from . import transforms as tfm
from .config import ConfigError, load_config
from .core import NetpbmError, read_image, write_image
from .experiment import (
    ACCURACY_COLUMNS,
    DESTRUCTION_COLUMNS,
    destruction_rows,
    emit_report,
    evaluation_pool,
    load_datasets,
    load_model,
    run_experiment,
    select_indices,
    write_csv,
)

MANIFEST_COLUMNS = ("filename", "clean_filename", "source_index", "label", "method",
                    "epsilon", "alpha", "iterations")


class CliError(Exception):
    pass


def _ext(image):
    return "pgm" if image.shape[-1] == 1 else "ppm"


def _read_manifest(directory):
    path = os.path.join(directory, "manifest.csv")
    if not os.path.exists(path):
        raise CliError(f"manifest not found: {path}")
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def _write_manifest(directory, rows, columns=MANIFEST_COLUMNS):
    with open(os.path.join(directory, "manifest.csv"), "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=columns, lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({c: row.get(c, "") for c in columns})


def _model(args, cfg=None, train_set=None):
    if args.model:
        if not os.path.exists(args.model):
            raise CliError(f"model checkpoint not found: {args.model}")
        return clf.load_checkpoint(args.model)
    if cfg is None:
        raise CliError("--model is required without --config")
    if train_set is None:
        train_set, _ = load_datasets(cfg)
    return load_model(cfg, train_set)


def cmd_train(args):
    cfg = load_config(args.config, args.seed)
    train_set, test_set = load_datasets(cfg)
    params = load_model(cfg, train_set)
    os.makedirs(os.path.dirname(os.path.abspath(args.out)), exist_ok=True)
    clf.save_checkpoint(args.out, params)
    from .metrics import accuracy
    print(f"wrote {args.out} (test top-1 accuracy {accuracy(params, test_set, 1):.4f})")


def _attack_cfg(args):
    return atk.AttackConfig(args.method, args.epsilon, args.alpha, args.iterations)


def cmd_attack(args):
    cell = _attack_cfg(args)
    if args.input:
        params = _model(args)
        rows = _read_manifest(args.input)
        clean = np.stack([read_image(os.path.join(args.input, r.get("clean_filename") or r["filename"]))
                          for r in rows])
        labels = np.array([int(r["label"]) for r in rows])
        source = np.array([int(r["source_index"]) for r in rows])
        adv = atk.generate(params, clean, labels, cell)
    else:
        if not args.config:
            raise CliError("attack needs --config or --input")
        cfg = load_config(args.config, args.seed)
        train_set, test_set = load_datasets(cfg)
        params = _model(args, cfg, train_set)
        pool, pool_idx = evaluation_pool(cfg, test_set)
        adv_all = atk.generate(params, pool.images, pool.labels, cell)
        sel, _ = select_indices(cfg, params, pool, adv_all, cell)
        clean, adv = pool.images[sel], adv_all[sel]
        labels, source = pool.labels[sel], pool_idx[sel]
    os.makedirs(args.out, exist_ok=True)
    out_rows = []
    for c_img, a_img, y, idx in zip(clean, adv, labels, source):
        ext = _ext(c_img)
        clean_name, adv_name = f"clean_{idx:05d}.{ext}", f"adv_{idx:05d}.{ext}"
        write_image(os.path.join(args.out, clean_name), c_img)
        write_image(os.path.join(args.out, adv_name), a_img)
        out_rows.append({"filename": adv_name, "clean_filename": clean_name,
                         "source_index": int(idx), "label": int(y), "method": cell.method,
                         "epsilon": cell.epsilon,
                         "alpha": cell.alpha if cell.method != "fast" else "",
                         "iterations": cell.iterations if cell.method != "fast" else ""})
    _write_manifest(args.out, out_rows)
    print(f"wrote {len(out_rows)} adversarial images to {args.out}")


def _load_spec(text):
    if os.path.exists(text):
        with open(text, encoding="utf-8") as fh:
            text = fh.read()
    try:
        return tfm.TransformSpec.from_dict(json.loads(text))
    except json.JSONDecodeError as exc:
        raise CliError(f"--spec is neither a file nor valid JSON: {exc}") from None


def cmd_transform(args):
    spec = _load_spec(args.spec)
    if args.seed is not None:
        spec = spec.with_seed(args.seed)
    manifest = os.path.join(args.input, "manifest.csv")
    if os.path.exists(manifest):
        rows = _read_manifest(args.input)
        names = [r["filename"] for r in rows]
        keys = [int(r["source_index"]) for r in rows]
    else:
        rows = None
        names = sorted(f for f in os.listdir(args.input) if f.endswith((".pgm", ".ppm")))
        keys = list(range(len(names)))
    if not names:
        raise CliError(f"no images found in {args.input}")
    images = [read_image(os.path.join(args.input, n)) for n in names]
    os.makedirs(args.out, exist_ok=True)
    for name, key, img in zip(names, keys, images):
        out = tfm.apply_batch(spec, img[None], [key])[0]
        write_image(os.path.join(args.out, name), out)
    if rows is not None:
        _write_manifest(args.out, rows)
    with open(os.path.join(args.out, "transform.json"), "w", encoding="utf-8") as fh:
        json.dump({"name": args.name or spec.kind, "spec": spec.to_dict()}, fh, sort_keys=True)
        fh.write("\n")
    print(f"transformed {len(names)} images into {args.out}")


def cmd_evaluate(args):
    params = _model(args)
    rows = _read_manifest(args.input)
    ks = tuple(k for k in args.k if k <= params.num_classes)
    os.makedirs(args.out, exist_ok=True)
    acc_rows, dest_rows = [], []
    cells = {}
    for r in rows:
        cells.setdefault((r["method"], int(r["epsilon"])), []).append(r)
    spec_info = None
    if args.transformed:
        path = os.path.join(args.transformed, "transform.json")
        if not os.path.exists(path):
            raise CliError(f"transform.json not found in {args.transformed}")
        with open(path, encoding="utf-8") as fh:
            spec_info = json.load(fh)
        spec = tfm.TransformSpec.from_dict(spec_info["spec"])
    from .metrics import indicators
    for (method, eps), group in cells.items():
        clean = np.stack([read_image(os.path.join(args.input, r["clean_filename"])) for r in group])
        adv = np.stack([read_image(os.path.join(args.input, r["filename"])) for r in group])
        labels = np.array([int(r["label"]) for r in group])
        for k in ks:
            acc_rows.append({"method": method, "epsilon": eps, "k": k, "n": len(group),
                             "clean_accuracy": float(indicators(params, clean, labels, k).mean()),
                             "adv_accuracy": float(indicators(params, adv, labels, k).mean())})
        if spec_info is not None:
            transformed = np.stack([read_image(os.path.join(args.transformed, r["filename"]))
                                    for r in group])
            base = {"method": method, "epsilon": eps, "sweep": spec_info["name"],
                    "kind": spec.kind, "parameter": spec.label()}
            dest_rows.extend(destruction_rows(params, clean, adv, transformed, labels, ks, base))
    write_csv(os.path.join(args.out, "accuracy.csv"), ACCURACY_COLUMNS, acc_rows)
    write_csv(os.path.join(args.out, "destruction.csv"), DESTRUCTION_COLUMNS, dest_rows)
    print(f"wrote accuracy.csv and destruction.csv to {args.out}")


def cmd_experiment(args):
    cfg = load_config(args.config, args.seed)
    bundle = run_experiment(cfg)
    paths = emit_report(bundle, args.out)
    print(bundle.trends, end="")
    print(f"wrote {len(paths)} files to {args.out}")


def build_parser():
    parser = argparse.ArgumentParser(prog="advbench", description=__doc__.split("\n\n")[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", required=True)

    p = sub.add_parser("train", help="train the reference classifier and save a checkpoint")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True, help="checkpoint path")
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("attack", help="write adversarial netpbm images and a manifest")
    p.add_argument("--config")
    p.add_argument("--model", help="checkpoint; default is the config's model")
    p.add_argument("--input", help="directory with clean images and manifest.csv")
    p.add_argument("--method", choices=atk.METHODS, required=True)
    p.add_argument("--epsilon", type=int, required=True)
    p.add_argument("--alpha", type=int, default=1)
    p.add_argument("--iterations", type=int)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_attack)

    p = sub.add_parser("transform", help="apply a TransformSpec to every image in a directory")
    p.add_argument("--spec", required=True, help="TransformSpec as JSON text or a JSON file")
    p.add_argument("--input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--name", help="sweep label recorded for evaluate")
    p.add_argument("--seed", type=int, help="seed for stochastic transforms")
    p.set_defaults(func=cmd_transform)

    p = sub.add_parser("evaluate", help="accuracy and destruction rate from attack manifests")
    p.add_argument("--model", required=True)
    p.add_argument("--input", required=True, help="attack output directory")
    p.add_argument("--transformed", help="transform output directory")
    p.add_argument("--k", type=int, nargs="+", default=[1, 3])
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("experiment", help="run a full experiment grid from a config file")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, help="override the master seed")
    p.set_defaults(func=cmd_experiment)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except (CliError, ConfigError, NetpbmError, clf.CheckpointError, OSError, ValueError, KeyError) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"advbench {args.command}: error: {msg}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
