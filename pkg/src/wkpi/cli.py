"""Command-line front end for the classification pipeline.

Commands: diagram, image, train-metric, gram, classify, cv, heatmap.
Settings come from a flat ``key = value`` config file (unknown keys are
rejected) with command-line overrides; all outputs are written to a
temporary name and renamed on success, so a failing command never leaves
partial files behind.
"""

from __future__ import annotations

import argparse
import csv
import os
import sys
from dataclasses import fields

import numpy as np

from .crossval import CvConfig, derive_seed, report_summary, report_to_csv
from .graphs import load_tu_dataset
from .images import (
    GridSpec,
    compute_persistence_image,
    images_to_csv,
    read_image_container,
    write_image_container,
)
from .kernel import WkpiParams, gram_matrix
from .persistence import diagram_to_csv
from .pipeline import (
    PipelineConfig,
    classify_diagrams,
    dataset_diagrams,
    diagrams_to_images,
    fit_classifier,
    fit_image_layout,
    run_nested_cv,
)
from .weights import heatmap_to_csv, heatmap_to_pgm, load_weight, sample_heatmap, save_weight

_PIPE_KEYS = {f.name for f in fields(PipelineConfig)}
_EXTRA_KEYS = {
    "dataset_dir",
    "dataset_name",
    "out_dir",
    "weight_file",
    "images_file",
    "test_fraction",
    "cv_outer_folds",
    "cv_inner_folds",
    "cv_repeats",
    "cv_m_grid",
    "cv_sigma_grid",
    "cv_c_grid",
    "cv_stratified",
    "grid_x_min",
    "grid_x_max",
    "grid_y_min",
    "grid_y_max",
}
_ALL_KEYS = _PIPE_KEYS | _EXTRA_KEYS

_BOOL_KEYS = {"use_extended", "drop_essentials", "cv_stratified"}
_INT_KEYS = {
    "y_resolution",
    "mixture_size",
    "max_iterations",
    "seed",
    "threads",
    "cv_outer_folds",
    "cv_inner_folds",
    "cv_repeats",
}
_OPTIONAL_INT_KEYS = {"minibatch_size"}
_FLOAT_KEYS = {
    "ricci_laziness",
    "kernel_sigma",
    "svm_c",
    "svm_tol",
    "cost_tolerance",
    "penalty_constant",
    "ls_initial_step",
    "ls_backtrack",
    "ls_sufficient_decrease",
    "test_fraction",
    "grid_x_min",
    "grid_x_max",
    "grid_y_min",
    "grid_y_max",
}
_OPTIONAL_FLOAT_KEYS = {"tau", "pl_b"}
_LIST_KEYS = {"dimensions", "cv_m_grid", "cv_sigma_grid", "cv_c_grid"}


class CliError(Exception):
    pass


def _parse_bool(raw: str) -> bool:
    low = raw.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise CliError(f"cannot parse boolean value {raw!r}")


def _convert(key: str, raw: str):
    raw = raw.strip()
    if key in _BOOL_KEYS:
        return _parse_bool(raw)
    if key in _INT_KEYS:
        return int(raw)
    if key in _OPTIONAL_INT_KEYS:
        return None if raw.lower() in ("auto", "none", "full") else int(raw)
    if key in _FLOAT_KEYS:
        return float(raw)
    if key in _OPTIONAL_FLOAT_KEYS:
        return None if raw.lower() in ("auto", "none") else float(raw)
    if key in _LIST_KEYS:
        parts = [p for p in raw.replace(",", " ").split() if p]
        if key == "dimensions" or key == "cv_m_grid":
            return tuple(int(p) for p in parts)
        return tuple(float(p) for p in parts)
    return raw


def parse_config_file(path: str) -> dict:
    settings = {}
    with open(path, "r") as fh:
        for lineno, line in enumerate(fh, start=1):
            stripped = line.split("#", 1)[0].strip()
            if not stripped:
                continue
            if "=" not in stripped:
                raise CliError(f"{path}:{lineno}: expected 'key = value'")
            key, raw = stripped.split("=", 1)
            key = key.strip()
            if key not in _ALL_KEYS:
                raise CliError(f"{path}:{lineno}: unknown key {key!r}")
            settings[key] = _convert(key, raw)
    return settings


def _settings_from_args(args) -> dict:
    settings = {}
    if args.config:
        settings.update(parse_config_file(args.config))
    for item in args.set or []:
        if "=" not in item:
            raise CliError(f"--set expects key=value, got {item!r}")
        key, raw = item.split("=", 1)
        key = key.strip()
        if key not in _ALL_KEYS:
            raise CliError(f"unknown key {key!r}")
        settings[key] = _convert(key, raw)
    for key in ("dataset_dir", "dataset_name", "descriptor", "weight_file"):
        val = getattr(args, key, None)
        if val is not None:
            settings[key] = val
    if getattr(args, "dimensions", None) is not None:
        settings["dimensions"] = _convert("dimensions", args.dimensions)
    if getattr(args, "use_extended", None):
        settings["use_extended"] = True
    if args.seed is not None:
        settings["seed"] = args.seed
    if args.threads is not None:
        settings["threads"] = args.threads
    if args.out is not None:
        settings["out_dir"] = args.out
    return settings


def _pipeline_config(settings: dict) -> PipelineConfig:
    kwargs = {k: v for k, v in settings.items() if k in _PIPE_KEYS}
    return PipelineConfig(**kwargs)


def _cv_config(settings: dict) -> CvConfig:
    kwargs = {}
    mapping = {
        "cv_outer_folds": "outer_folds",
        "cv_inner_folds": "inner_folds",
        "cv_repeats": "repeats",
        "cv_m_grid": "m_grid",
        "cv_sigma_grid": "sigma_grid",
        "cv_c_grid": "c_grid",
        "cv_stratified": "stratified",
    }
    for src, dst in mapping.items():
        if src in settings:
            kwargs[dst] = settings[src]
    kwargs["seed"] = settings.get("seed", 0)
    return CvConfig(**kwargs)


def _out_dir(settings: dict) -> str:
    out = settings.get("out_dir", "wkpi-out")
    os.makedirs(out, exist_ok=True)
    return out


def _atomic(path: str, write_fn) -> None:
    tmp = path + ".tmp"
    write_fn(tmp)
    os.replace(tmp, path)


def _load_dataset(settings: dict):
    if "dataset_dir" not in settings or "dataset_name" not in settings:
        raise CliError("dataset_dir and dataset_name must be set")
    return load_tu_dataset(settings["dataset_dir"], settings["dataset_name"])


def cmd_diagram(settings: dict) -> int:
    cfg = _pipeline_config(settings)
    dataset = _load_dataset(settings)
    diagrams = dataset_diagrams(dataset, cfg)
    out = _out_dir(settings)
    index_rows = []
    for i, diagram in enumerate(diagrams):
        fname = f"diagram_{i:05d}.csv"
        _atomic(os.path.join(out, fname), lambda p, d=diagram: diagram_to_csv(d, p))
        index_rows.append((i, int(dataset.labels[i]), fname))

    def write_index(path):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["graph", "label", "file"])
            writer.writerows(index_rows)

    _atomic(os.path.join(out, "diagrams_index.csv"), write_index)
    print(f"wrote {len(diagrams)} diagrams to {out}")
    return 0


def cmd_image(settings: dict) -> int:
    cfg = _pipeline_config(settings)
    dataset = _load_dataset(settings)
    diagrams = dataset_diagrams(dataset, cfg)
    layout = fit_image_layout(diagrams, cfg)
    images = diagrams_to_images(diagrams, layout)
    out = _out_dir(settings)
    _atomic(os.path.join(out, "images.csv"), lambda p: images_to_csv(images, p))
    for dim, grid in layout.grids:
        pi_cfg = dict(layout.pi_configs)[dim]
        per_dim = [
            compute_persistence_image(d.of_dim(dim), grid, pi_cfg) for d in diagrams
        ]
        _atomic(
            os.path.join(out, f"images_dim{dim}.bin"),
            lambda p, imgs=per_dim: write_image_container(imgs, p),
        )
    print(f"wrote {len(images)} images ({sum(g.size for _, g in layout.grids)} pixels) to {out}")
    return 0


def cmd_train_metric(settings: dict) -> int:
    cfg = _pipeline_config(settings)
    dataset = _load_dataset(settings)
    diagrams = dataset_diagrams(dataset, cfg)
    clf, result = fit_classifier(diagrams, dataset.labels, cfg)
    out = _out_dir(settings)
    _atomic(os.path.join(out, "weight.txt"), lambda p: save_weight(clf.params.weight, p))

    def write_trace(path):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["iteration", "objective"])
            for i, v in enumerate(result.trace, start=1):
                writer.writerow([i, repr(float(v))])

    _atomic(os.path.join(out, "cost_trace.csv"), write_trace)
    heat = sample_heatmap(clf.params.weight, clf.layout.grids[0][1])
    _atomic(os.path.join(out, "heatmap.csv"), lambda p: heatmap_to_csv(heat, p))
    _atomic(
        os.path.join(out, "heatmap.pgm"),
        lambda p: heatmap_to_pgm(heat, p, sidecar_path=os.path.join(out, "heatmap.pgm.scale")),
    )
    print(f"final total cost: {result.final_tc!r} (initial {result.initial_tc!r})")
    return 0


def cmd_gram(settings: dict) -> int:
    cfg = _pipeline_config(settings)
    if "weight_file" not in settings:
        raise CliError("gram requires weight_file (run train-metric first)")
    weight = load_weight(settings["weight_file"])
    dataset = _load_dataset(settings)
    diagrams = dataset_diagrams(dataset, cfg)
    layout = fit_image_layout(diagrams, cfg)
    images = diagrams_to_images(diagrams, layout)
    params = WkpiParams(
        kernel_sigma=cfg.kernel_sigma, weight=weight, kernel_variant=cfg.kernel_variant
    )
    gram = gram_matrix(images, params)

    def write_gram(path):
        with open(path, "w") as fh:
            for row in gram:
                fh.write(",".join(repr(float(v)) for v in row))
                fh.write("\n")

    out = _out_dir(settings)
    _atomic(os.path.join(out, "gram.csv"), write_gram)
    print(f"wrote {gram.shape[0]}x{gram.shape[1]} gram matrix to {out}")
    return 0


def cmd_classify(settings: dict) -> int:
    cfg = _pipeline_config(settings)
    dataset = _load_dataset(settings)
    diagrams = dataset_diagrams(dataset, cfg)
    labels = dataset.labels
    frac = settings.get("test_fraction", 0.2)
    if not 0.0 < frac < 1.0:
        raise CliError("test_fraction must lie in (0, 1)")
    rng = np.random.default_rng(derive_seed(cfg.seed, 1001))
    test_mask = np.zeros(len(labels), dtype=bool)
    for cls in np.unique(labels):
        idx = np.flatnonzero(labels == cls)
        rng.shuffle(idx)
        n_test = max(1, int(round(frac * idx.size)))
        test_mask[idx[:n_test]] = True
    train_idx = np.flatnonzero(~test_mask)
    test_idx = np.flatnonzero(test_mask)
    clf, _ = fit_classifier(
        [diagrams[i] for i in train_idx], labels[train_idx], cfg
    )
    pred = classify_diagrams(clf, [diagrams[i] for i in test_idx])
    accuracy = float(np.mean(pred == labels[test_idx]))

    def write_predictions(path):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["graph", "true_label", "predicted_label"])
            for i, p in zip(test_idx, pred):
                writer.writerow([int(i), int(labels[i]), int(p)])

    out = _out_dir(settings)
    _atomic(os.path.join(out, "predictions.csv"), write_predictions)
    print(f"test accuracy: {accuracy!r} on {test_idx.size} held-out graphs")
    return 0


def cmd_cv(settings: dict) -> int:
    cfg = _pipeline_config(settings)
    cv_cfg = _cv_config(settings)
    dataset = _load_dataset(settings)
    diagrams = dataset_diagrams(dataset, cfg)
    report = run_nested_cv(diagrams, dataset.labels, cv_cfg, cfg)
    out = _out_dir(settings)
    _atomic(os.path.join(out, "cv_report.csv"), lambda p: report_to_csv(report, p))
    _atomic(
        os.path.join(out, "cv_summary.txt"),
        lambda p: open(p, "w").write(report_summary(report)),
    )
    print(report_summary(report), end="")
    return 0


def cmd_heatmap(settings: dict) -> int:
    if "weight_file" not in settings:
        raise CliError("heatmap requires weight_file")
    weight = load_weight(settings["weight_file"])
    if "images_file" in settings:
        grid = read_image_container(settings["images_file"])[0].grid
    else:
        try:
            grid = GridSpec(
                x_min=settings["grid_x_min"],
                x_max=settings["grid_x_max"],
                y_min=settings["grid_y_min"],
                y_max=settings["grid_y_max"],
                y_resolution=settings.get("y_resolution", 40),
            )
        except KeyError:
            raise CliError(
                "heatmap needs images_file or explicit grid_x_min/x_max/y_min/y_max"
            ) from None
    heat = sample_heatmap(weight, grid)
    out = _out_dir(settings)
    _atomic(os.path.join(out, "heatmap.csv"), lambda p: heatmap_to_csv(heat, p))
    _atomic(
        os.path.join(out, "heatmap.pgm"),
        lambda p: heatmap_to_pgm(heat, p, sidecar_path=os.path.join(out, "heatmap.pgm.scale")),
    )
    print(f"wrote {heat.shape[1]}x{heat.shape[0]} heatmap to {out}")
    return 0


_COMMANDS = {
    "diagram": cmd_diagram,
    "image": cmd_image,
    "train-metric": cmd_train_metric,
    "gram": cmd_gram,
    "classify": cmd_classify,
    "cv": cmd_cv,
    "heatmap": cmd_heatmap,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="wkpi",
        description="Persistence-diagram summaries of graphs with a learned weighted kernel",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in _COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="flat key = value settings file")
        p.add_argument("--seed", type=int, help="master random seed")
        p.add_argument("--threads", type=int, help="worker cap for per-graph stages")
        p.add_argument("--out", help="output directory")
        p.add_argument("--set", action="append", metavar="KEY=VALUE",
                       help="override any config key (repeatable)")
        p.add_argument("--dataset-dir", dest="dataset_dir")
        p.add_argument("--dataset-name", dest="dataset_name")
        p.add_argument("--descriptor", choices=("degree", "ricci", "jaccard"))
        p.add_argument("--dimensions", help="homology dimensions, e.g. 0,1")
        p.add_argument("--use-extended", dest="use_extended", action="store_true",
                       default=None)
        p.add_argument("--weight-file", dest="weight_file")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        settings = _settings_from_args(args)
        return _COMMANDS[args.command](settings)
    except (CliError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
