"""Experiment grids: config files, per-cell jobs and result tables.

A grid is ``noise_rates x losses x replicates``. Every cell derives its seeds
from the master seed and its coordinates only, so cells can run in any order
on any number of workers. Replicate ``r`` shares its dataset across all
cells, and its noise draw and GA seed across losses at a given noise rate,
which keeps loss comparisons paired.
"""

from __future__ import annotations

import concurrent.futures
import csv
import dataclasses
import json
import os
import tempfile
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from . import data, evaluation
from . import rng as _rng
from .classifier import fit
from .ga import GaConfig, run_nmfs_ga, select_final
from .loss import LossSpec

TASKS = ("synthA", "synthB", "csv")
FAST_PRESET = {"generations": 200, "population_per_niche": 60, "niches": 2}
FAST_MC_SAMPLES = 1_000_000
SYNTH_METRICS = ("pcc_mc", "pcc_closed", "informative_recovered", "n_selected")
CSV_METRICS = ("balanced_accuracy", "sensitivity", "specificity", "auc", "informative_recovered", "n_selected")
GA_KEYS = {f.name for f in dataclasses.fields(GaConfig)} - {"loss", "seed"}
LOSS_KEYS = {f.name for f in dataclasses.fields(LossSpec)}

# Seed-derivation tags.
_DATA, _NOISE, _GA, _MC, _CV = range(1, 6)


class ConfigError(ValueError):
    pass


@dataclass
class CsvSource:
    path: str
    label_column: str
    positive_label: str
    noise_features: int = 300
    standardize: bool = True


@dataclass
class ExperimentConfig:
    task: str
    noise_rates: list = field(default_factory=lambda: [0.05, 0.10, 0.15])
    losses: list = field(default_factory=lambda: [LossSpec("CWD")])
    replicates: int = 10
    n_per_class: int = 100
    seed: int = 0
    output_dir: str = "results"
    mc_samples: int = 10_000_000
    mc_shards: int = 1
    eval_folds: int = 10
    csv: CsvSource | None = None
    ga: dict = field(default_factory=dict)

    @property
    def metrics(self) -> tuple[str, ...]:
        return CSV_METRICS if self.task == "csv" else SYNTH_METRICS

    def ga_config(self, loss: LossSpec, seed: int) -> GaConfig:
        return GaConfig(loss=loss, seed=seed, **self.ga)

    def apply_fast(self) -> None:
        self.ga = {**self.ga, **FAST_PRESET}
        self.mc_samples = FAST_MC_SAMPLES


def _check_keys(doc: dict, allowed, where: str):
    if not isinstance(doc, dict):
        raise ConfigError(f"{where}: expected a mapping")
    unknown = sorted(set(doc) - set(allowed))
    if unknown:
        raise ConfigError(f"{where}: unknown key(s) {', '.join(unknown)}")


def _noise_rate(value):
    if isinstance(value, (int, float)):
        return float(value)
    if isinstance(value, (list, tuple)) and len(value) == 2:
        return (float(value[0]), float(value[1]))
    raise ConfigError(f"noise rate must be a number or a [rho_0_to_1, rho_1_to_0] pair, got {value!r}")


def _loss(value) -> LossSpec:
    if isinstance(value, str):
        value = {"kind": value}
    _check_keys(value, LOSS_KEYS, "losses entry")
    try:
        return LossSpec(**value)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"losses entry {value!r}: {exc}") from None


def parse_config(doc: dict, base_dir=".") -> ExperimentConfig:
    top = {f.name for f in dataclasses.fields(ExperimentConfig)}
    _check_keys(doc, top, "config")
    if doc.get("task") not in TASKS:
        raise ConfigError(f"task must be one of {', '.join(TASKS)}")
    kw = dict(doc)
    if "noise_rates" in kw:
        kw["noise_rates"] = [_noise_rate(v) for v in kw["noise_rates"]]
    if "losses" in kw:
        kw["losses"] = [_loss(v) for v in kw["losses"]]
    if "ga" in kw:
        _check_keys(kw["ga"], GA_KEYS, "ga")
    if kw.get("csv") is not None:
        _check_keys(kw["csv"], {f.name for f in dataclasses.fields(CsvSource)}, "csv")
        try:
            kw["csv"] = CsvSource(**kw["csv"])
        except TypeError as exc:
            raise ConfigError(f"csv: {exc}") from None
        path = Path(kw["csv"].path)
        if not path.is_absolute():
            path = Path(base_dir) / path
        if not path.exists():
            raise ConfigError(f"csv: file {path} does not exist")
        kw["csv"].path = str(path.resolve())
    cfg = ExperimentConfig(**kw)
    if cfg.task == "csv" and cfg.csv is None:
        raise ConfigError("task csv needs a csv section")
    if cfg.replicates < 1:
        raise ConfigError("replicates must be at least 1")
    if not cfg.noise_rates or not cfg.losses:
        raise ConfigError("noise_rates and losses must be non-empty")
    for rate in cfg.noise_rates:
        try:
            _noise_spec(rate, 0)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
    try:
        cfg.ga_config(cfg.losses[0], 0)
        _rng.check_seed(cfg.seed)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"ga: {exc}") from None
    return cfg


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        doc = yaml.safe_load(path.read_text())
    except (OSError, yaml.YAMLError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse_config(doc or {}, base_dir=path.parent)


def _noise_spec(rate, seed) -> data.NoiseSpec:
    if isinstance(rate, tuple):
        return data.NoiseSpec(rate[0], rate[1], seed)
    return data.NoiseSpec.symmetric(rate, seed)


def rate_label(rate) -> str:
    return f"{rate[0]:g}/{rate[1]:g}" if isinstance(rate, (tuple, list)) else f"{rate:g}"


# ---------------------------------------------------------------------------
# Cells
# ---------------------------------------------------------------------------


def _task_spec(task: str, seed: int) -> data.GaussianTaskSpec:
    return data.dataset_a_spec(seed) if task == "synthA" else data.dataset_b_spec(seed)


def build_dataset(cfg: ExperimentConfig, replicate: int):
    """Noise-free dataset of one replicate, and its generative spec if synthetic."""
    seed = _rng.derive_seed(cfg.seed, _DATA, replicate)
    if cfg.task == "csv":
        src = cfg.csv
        ds = data.load_csv(src.path, src.label_column, src.positive_label)
        if src.standardize:
            ds = data.standardize(ds)
        return data.augment_noise_features(ds, src.noise_features, seed), None
    spec = _task_spec(cfg.task, seed)
    return data.generate_synthetic(spec, cfg.n_per_class), spec


def grid_cells(cfg: ExperimentConfig) -> list[dict]:
    """Self-contained job descriptions, one per (noise rate, loss, replicate)."""
    cells = []
    base = dataclasses.asdict(cfg)
    base.pop("losses")
    base.pop("noise_rates")
    for i, rate in enumerate(cfg.noise_rates):
        for j, loss in enumerate(cfg.losses):
            for r in range(cfg.replicates):
                cells.append(
                    {
                        "experiment": base,
                        "noise_rate": list(rate) if isinstance(rate, tuple) else rate,
                        "loss": loss.to_dict(),
                        "replicate": r,
                        "seeds": {
                            "data": _rng.derive_seed(cfg.seed, _DATA, r),
                            "noise": _rng.derive_seed(cfg.seed, _NOISE, r, i),
                            "ga": _rng.derive_seed(cfg.seed, _GA, r, i),
                            "mc": _rng.derive_seed(cfg.seed, _MC, r, i, j),
                            "cv": _rng.derive_seed(cfg.seed, _CV, r),
                        },
                        "name": f"rho{rate_label(rate).replace('/', '-')}_{loss.kind}{j}_r{r}",
                    }
                )
    return cells


def _config_from_echo(echo: dict) -> ExperimentConfig:
    doc = dict(echo)
    if doc.get("csv") is not None:
        doc["csv"] = CsvSource(**doc["csv"])
    return ExperimentConfig(**doc, losses=[], noise_rates=[])


def run_cell(cell: dict) -> dict:
    """Run one grid cell from its description; the result embeds the description."""
    start = time.perf_counter()
    cfg = _config_from_echo(cell["experiment"])
    seeds = cell["seeds"]
    rate = cell["noise_rate"]
    rate = tuple(rate) if isinstance(rate, list) else rate
    loss = LossSpec(**cell["loss"])
    ds, spec = build_dataset(cfg, cell["replicate"])
    noisy = data.inject_label_noise(ds, _noise_spec(rate, seeds["noise"]))
    ga_cfg = cfg.ga_config(loss, seeds["ga"])
    result = run_nmfs_ga(noisy, ga_cfg)
    best = select_final(result)
    if spec is not None:
        cols = np.flatnonzero(best.mask)
        model = fit(noisy.features[:, cols], noisy.noisy_labels, ga_cfg.shrinkage)
        res = evaluation.ExperimentResult(
            best.mask,
            pcc_mc=evaluation.conditional_pcc_mc(model, best.mask, spec, cfg.mc_samples, seeds["mc"], cfg.mc_shards),
            pcc_closed=evaluation.conditional_pcc_closed_form(model, best.mask, spec),
            informative_recovered=evaluation.score_feature_recovery(best.mask, noisy),
        )
    else:
        res = evaluation.cross_validated_report(noisy, best.mask, cfg.eval_folds, seeds["cv"], ga_cfg.shrinkage)
    res.runtime_seconds = time.perf_counter() - start
    res.config_echo = cell
    doc = res.to_dict()
    doc.update(
        status="ok",
        summary=res.scalar_summary(),
        f1=best.f1,
        front=[ind.to_dict() for ind in result.front],
        ga_config=ga_cfg.to_dict(),
    )
    return doc


def _safe_run_cell(cell: dict) -> dict:
    try:
        return run_cell(cell)
    except Exception as exc:  # recorded per cell; the grid continues
        return {"status": "error", "error": f"{type(exc).__name__}: {exc}", "config": cell}


def atomic_write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def cmd_generate(cfg: ExperimentConfig, out_dir=None) -> list[Path]:
    """Write each replicate's noise-free dataset as CSV plus a JSON provenance sidecar."""
    out = Path(out_dir or cfg.output_dir)
    written = []
    for r in range(cfg.replicates):
        ds, spec = build_dataset(cfg, r)
        csv_path = out / f"dataset_r{r}.csv"
        out.mkdir(parents=True, exist_ok=True)
        tmp = csv_path.with_suffix(".csv.tmp")
        data.write_csv(ds, tmp)
        os.replace(tmp, csv_path)
        side = {
            "task": cfg.task,
            "replicate": r,
            "seed": _rng.derive_seed(cfg.seed, _DATA, r),
            "column_permutation": ds.column_ids.tolist(),
            "informative": list(ds.informative) if ds.informative is not None else None,
        }
        if spec is not None:
            side["spec"] = {
                "d_total": spec.d_total,
                "k_informative": spec.k_informative,
                "mean_shift": spec.calibrated_shift.tolist(),
                "covariance": spec.covariance.tolist(),
                "target_bayes_error": spec.target_bayes_error,
                "bayes_error": data.bayes_error(spec),
                "n_per_class": cfg.n_per_class,
            }
        atomic_write(out / f"dataset_r{r}.json", json.dumps(side, indent=2, sort_keys=True))
        written += [csv_path, out / f"dataset_r{r}.json"]
    return written


def cmd_run(cfg: ExperimentConfig, out_dir=None, workers: int = 1) -> int:
    """Run the grid, writing one JSON per cell and ``aggregate.csv``; returns an exit code."""
    out = Path(out_dir or cfg.output_dir)
    cells = grid_cells(cfg)
    if workers > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=workers) as pool:
            docs = list(pool.map(_safe_run_cell, cells))
    else:
        docs = [_safe_run_cell(c) for c in cells]
    for cell, doc in zip(cells, docs):
        atomic_write(out / "cells" / f"{cell['name']}.json", json.dumps(doc, indent=2, sort_keys=True))
    atomic_write(out / "aggregate.csv", aggregate_csv(cfg.metrics, docs))
    return 0 if all(d["status"] == "ok" for d in docs) else 2


def _group(docs):
    """Ordered mapping ``(rate label, loss label) -> list of docs``."""
    groups: dict[tuple[str, str], list] = {}
    for doc in docs:
        cell = doc["config"]
        key = (rate_label(cell["noise_rate"]), loss_label(cell["loss"]))
        groups.setdefault(key, []).append(doc)
    return groups


def loss_label(loss: dict) -> str:
    spec = LossSpec(**loss)
    if spec == LossSpec(spec.kind):
        return spec.kind
    params = ";".join(f"{k}={v:g}" if isinstance(v, float) else f"{k}={v}" for k, v in spec.to_dict().items() if k != "kind")
    return f"{spec.kind}({params})"


def _mean_sd(values):
    v = np.asarray(values, dtype=float)
    if v.size == 0:
        return float("nan"), float("nan")
    return float(v.mean()), float(v.std(ddof=1)) if v.size > 1 else 0.0


def aggregate_csv(metrics, docs) -> str:
    lines = [["noise_rate", "loss", "metric", "mean", "sd", "n", "errors", "values"]]
    for (rate, loss), group in _group(docs).items():
        ok = sorted((d for d in group if d["status"] == "ok"), key=lambda d: d["config"]["replicate"])
        n_err = len(group) - len(ok)
        for metric in metrics:
            values = [d["summary"][metric] for d in ok if metric in d["summary"]]
            mean, sd = _mean_sd(values)
            lines.append([rate, loss, metric, repr(mean), repr(sd), len(values), n_err, " ".join(repr(float(v)) for v in values)])
    out = []
    for row in lines:
        out.append(",".join(str(x) for x in row))
    return "\n".join(out) + "\n"


def load_results(result_dir) -> list[dict]:
    cell_dir = Path(result_dir) / "cells"
    files = sorted(cell_dir.glob("*.json")) if cell_dir.is_dir() else []
    if not files:
        raise FileNotFoundError(f"no result JSON files under {cell_dir}")
    docs = [json.loads(p.read_text()) for p in files]
    def order(doc):
        c = doc["config"]
        e = c["experiment"]
        return (e.get("task", ""), str(c["noise_rate"]), c["name"])
    return sorted(docs, key=order)


def _report_values(group, metric):
    """Per-replicate values; a lone replicate with fold metrics reports its folds."""
    if len(group) == 1:
        folds = (group[0].get("metrics") or {}).get(metric, {}).get("folds")
        if folds:
            return folds
    return [d["summary"][metric] for d in group]


def cmd_report(result_dir, metrics=None) -> tuple[str, str, int]:
    """Tables (rows: noise rates, columns: losses) from cell JSONs alone.

    Cells show mean +- sd over replicates, or over CV folds when a cell has a
    single replicate with fold-level metrics. Returns ``(text, csv,
    exit_code)``; any failed cell renders as ``ERR`` and makes the exit code 2.
    """
    docs = load_results(result_dir)
    task = docs[0]["config"]["experiment"]["task"]
    if metrics is None:
        metrics = ("pcc_mc",) if task != "csv" else ("balanced_accuracy", "sensitivity", "specificity", "auc")
    groups = _group(docs)
    rates = list(dict.fromkeys(k[0] for k in groups))
    losses = list(dict.fromkeys(k[1] for k in groups))
    failed = False
    text_parts = []
    csv_rows = [["metric", "noise_rate", "loss", "mean", "sd", "n", "status"]]
    for metric in metrics:
        table = [[f"{metric} / rho"] + losses]
        for rate in rates:
            row = [rate]
            for loss in losses:
                group = groups.get((rate, loss), [])
                if not group or any(d["status"] != "ok" for d in group):
                    failed = True
                    row.append("ERR")
                    csv_rows.append([metric, rate, loss, "", "", len(group), "ERR"])
                    continue
                values = _report_values(group, metric)
                mean, sd = _mean_sd(values)
                row.append(f"{mean:.3f} ± {sd:.3f}")
                csv_rows.append([metric, rate, loss, repr(mean), repr(sd), len(values), "ok"])
            table.append(row)
        widths = [max(len(r[c]) for r in table) for c in range(len(table[0]))]
        text_parts.append("\n".join("  ".join(cell.ljust(w) for cell, w in zip(r, widths)).rstrip() for r in table))
    csv_text = "\n".join(",".join(str(x) for x in r) for r in csv_rows) + "\n"
    return "\n\n".join(text_parts) + "\n", csv_text, 2 if failed else 0
