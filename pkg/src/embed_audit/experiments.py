"""Seeded experiment suites reproducing the structure of findings F1-F6 and
the defense study as tables.

A suite is a set of per-seed jobs. Each job returns ``{row: metrics}``;
rows are aggregated over seeds by median (with min/max spread). A failing
row records its error and leaves the other rows intact.
"""

import copy
import csv
import io
import json
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from .core.nn import TrainConfig
from .defense import AttackSuite, DistillConfig, _attack_model, evaluate_defense, noisy_self_distill
from .errors import InvalidArgument
from .mia import attack_config, build_attack_features, run_mia, shadow_attack_with_labels, shadow_attack_with_pseudolabels
from .pia import run_pia
from .seeding import derive_seed
from .synthdata import gen_bow_text, gen_property_blobs, gen_purchase_like, split_membership
from .target import train_target

logger = logging.getLogger(__name__)

FINDINGS = ("F1", "F2", "F3", "F4", "F5", "F6", "DEF")

_OVERFIT = {
    "n": 1200,
    "d": 60,
    "classes": 20,
    "flip_prob": 0.3,
    "hidden": [128, 64, 32],
    "epochs": 150,
    "l2_penalty": 0.0,
}
_LOW_OVERFIT = {
    "n": 2000,
    "d": 60,
    "classes": 2,
    "flip_prob": 0.3,
    "hidden": [128, 64, 32],
    "epochs": 10,
    "l2_penalty": 1e-3,
}

DEFAULTS = {
    "F1": {"high_overfit": _OVERFIT, "low_overfit": _LOW_OVERFIT, "attack_epochs": 80},
    "F2": {"target": _OVERFIT, "attack_epochs": 80},
    "F3": {"target": _OVERFIT, "attack_epochs": 80},
    "F4": {"target": _OVERFIT, "attack_epochs": 80},
    "F5": {
        "clusterable": {"n": 3000, "d": 40, "classes": 4, "spread": 1.0, "center_scale": 6.0,
                        "hidden": [128, 64, 32], "epochs": 100},
        "unclusterable": {"n": 3000, "d": 40, "classes": 4, "spread": 1.0, "center_scale": 0.0,
                          "hidden": [128, 64, 32], "epochs": 100},
        "attack_epochs": 80,
    },
    "F6": {
        "n": 4000,
        "d": 32,
        "classes": 4,
        "spread": 1.0,
        "center_scale": 4.0,
        "property_shift": 2.0,
        "orthogonal_correlation": 0.9,
        "hidden": [64, 32, 8],
        "epochs": 100,
        "attack_epochs": 80,
    },
    "DEF": {
        "vocab_size": 50,
        "doc_len": 5,
        "classes": 2,
        "n": 1200,
        "n_aux": 4000,
        "hidden": [64, 64, 32],
        "epochs": 10,
        "docs": 20,
        "sigmas": [0.0, 0.1],
        "distill_epochs": 60,
        "from_depth": 2,
        "mapping_hidden": [256],
        "mapping_epochs": 150,
        "inversion_steps": 3000,
    },
}


def _merge(base, override):
    out = copy.deepcopy(base)
    for key, value in (override or {}).items():
        if key not in out:
            raise InvalidArgument(f"unknown parameter {key!r}", field=key)
        if isinstance(out[key], dict) and isinstance(value, dict):
            out[key] = _merge(out[key], value)
        else:
            out[key] = value
    return out


@dataclass
class ExperimentSpec:
    finding: str
    seeds: list
    params: dict = field(default_factory=dict)
    master_seed: int = 0

    def __post_init__(self):
        if self.finding not in FINDINGS:
            raise InvalidArgument(f"unknown finding {self.finding!r}; expected one of {FINDINGS}", field="finding")
        if not self.seeds:
            raise InvalidArgument("at least one seed is required", field="seeds")
        self.params = _merge(DEFAULTS[self.finding], self.params)

    @classmethod
    def from_master_seed(cls, finding, master_seed, n_seeds=5, params=None):
        seeds = [derive_seed(master_seed, "finding", finding, "run", i) % 2**31 for i in range(n_seeds)]
        return cls(finding, seeds, params or {}, master_seed)

    def to_dict(self):
        return {"finding": self.finding, "seeds": list(self.seeds), "params": self.params, "master_seed": self.master_seed}


# ---------------------------------------------------------------- helpers


def _train_cfg(p, seed):
    return TrainConfig(epochs=p["epochs"], batch_size=32, learning_rate=1e-3, seed=seed,
                       l2_penalty=p.get("l2_penalty", 0.0))


def _purchase_target(p, seed):
    ds = gen_purchase_like(p["n"], p["d"], p["classes"], p["flip_prob"], seed)
    split = split_membership(ds, 0.5, 0.5, seed)
    model, fit = train_target(ds, split, [p["d"], *p["hidden"], p["classes"]], _train_cfg(p, seed))
    return ds, split, model, fit


def _blob_target(p, seed):
    ds = gen_property_blobs(p["n"], p["d"], p["classes"], [], p["spread"], seed, center_scale=p["center_scale"])
    split = split_membership(ds, 0.5, 0.5, seed)
    model, fit = train_target(ds, split, [p["d"], *p["hidden"], p["classes"]], _train_cfg(p, seed))
    return ds, split, model, fit


def _fit_metrics(fit):
    return {"train_acc": fit.train_accuracy, "test_acc": fit.test_accuracy, "overfit_gap": fit.overfit_gap}


def _auc(model, ds, split, setting, acfg, depth=None):
    return run_mia(build_attack_features(model, ds, split, setting, depth), acfg).auc


class _Rows(dict):
    """Collects per-row metrics, turning an exception into a row-local failure."""

    def run(self, row, fn):
        try:
            self[row] = fn()
        except Exception as exc:  # noqa: BLE001 - a failure is recorded, not raised
            logger.warning("row %s failed: %s", row, exc)
            self[row] = {"error": f"{type(exc).__name__}: {exc}"}


# ---------------------------------------------------------------- per-finding jobs


def _job_f1(p, seed):
    rows = _Rows()
    acfg = attack_config(seed, p["attack_epochs"])
    for row in ("low_overfit", "high_overfit"):
        def one(row=row):
            ds, split, model, fit = _purchase_target(p[row], seed)
            return {
                **_fit_metrics(fit),
                "loss_auc": _auc(model, ds, split, "loss", acfg),
                "embedding_auc": _auc(model, ds, split, "embedding", acfg, model.deep_depth),
            }
        rows.run(row, one)
    return rows


def _job_f2(p, seed):
    rows = _Rows()

    def one():
        ds, split, model, fit = _purchase_target(p["target"], seed)
        acfg = attack_config(seed, p["attack_epochs"])
        return {
            **_fit_metrics(fit),
            "loss_auc": _auc(model, ds, split, "loss", acfg),
            "prediction_auc": _auc(model, ds, split, "prediction", acfg),
            "embedding_auc": _auc(model, ds, split, "embedding", acfg, model.deep_depth),
        }

    rows.run("overfit", one)
    return rows


def _job_f3(p, seed):
    rows = _Rows()
    try:
        ds, split, model, fit = _purchase_target(p["target"], seed)
    except Exception as exc:  # noqa: BLE001
        rows["target"] = {"error": f"{type(exc).__name__}: {exc}"}
        return rows
    acfg = attack_config(seed, p["attack_epochs"])
    for depth in range(1, model.depth):
        tag = "shallow" if depth == model.shallow_depth else "deep" if depth == model.deep_depth else "middle"
        rows.run(
            f"depth-{depth}",
            lambda depth=depth, tag=tag: {
                **_fit_metrics(fit),
                "depth": depth,
                "tap": tag,
                "embedding_auc": _auc(model, ds, split, "embedding", acfg, depth),
            },
        )
    rows.run("loss", lambda: {**_fit_metrics(fit), "loss_auc": _auc(model, ds, split, "loss", acfg)})
    return rows


def _job_f4(p, seed):
    rows = _Rows()

    def one():
        ds, split, model, fit = _purchase_target(p["target"], seed)
        acfg = attack_config(seed, p["attack_epochs"])
        return {
            **_fit_metrics(fit),
            "loss_auc": _auc(model, ds, split, "loss", acfg),
            "embedding_auc": _auc(model, ds, split, "embedding", acfg, model.deep_depth),
            "shadow_labels_auc": shadow_attack_with_labels(model, ds, split, model.deep_depth, acfg).auc,
        }

    rows.run("overfit", one)
    return rows


def _job_f5(p, seed):
    rows = _Rows()
    acfg = attack_config(seed, p["attack_epochs"])
    for row in ("clusterable", "unclusterable"):
        def one(row=row):
            cfg = p[row]
            ds, split, model, fit = _blob_target(cfg, seed)
            depth = model.deep_depth
            pseudo = shadow_attack_with_pseudolabels(model, ds, split, depth, cfg["classes"], acfg)
            return {
                **_fit_metrics(fit),
                "loss_auc": _auc(model, ds, split, "loss", acfg),
                "embedding_auc": _auc(model, ds, split, "embedding", acfg, depth),
                "shadow_labels_auc": shadow_attack_with_labels(model, ds, split, depth, acfg).auc,
                "pseudo_labels_auc": pseudo.auc,
                "clustering_quality": pseudo.clustering_quality,
            }
        rows.run(row, one)
    return rows


def _job_f6(p, seed):
    rows = _Rows()
    props = [("orthogonal", p["orthogonal_correlation"]), ("independent", 0.0)]
    try:
        ds = gen_property_blobs(p["n"], p["d"], p["classes"], props, p["spread"], seed,
                                center_scale=p["center_scale"], property_shift=p["property_shift"])
        ds.property_labels["task"] = (ds.labels == 0).astype(np.int64)
        # the attacker's auxiliary rows never touch target training
        split = split_membership(ds, 0.5, 0.5, seed)
        model, fit = train_target(ds, split, [p["d"], *p["hidden"], p["classes"]], _train_cfg(p, seed))
        aux = ds.subset(split.nonmember_indices)
    except Exception as exc:  # noqa: BLE001
        rows["target"] = {"error": f"{type(exc).__name__}: {exc}"}
        return rows
    acfg = attack_config(seed, p["attack_epochs"])
    for prop in ("task", "orthogonal", "independent"):
        for depth in (model.shallow_depth, model.deep_depth):
            tag = "shallow" if depth == model.shallow_depth else "deep"

            def one(prop=prop, depth=depth):
                r = run_pia(model, aux, prop, depth, acfg, fit=fit)
                return {
                    "target_train_acc": fit.train_accuracy,
                    "target_test_acc": fit.test_accuracy,
                    "attack_accuracy": r.attack_accuracy,
                    "attack_train_accuracy": r.attack_train_accuracy,
                }

            rows.run(f"{prop}/{tag}", one)
    return rows


def _job_def(p, seed):
    rows = _Rows()
    try:
        full = gen_bow_text(p["vocab_size"], p["doc_len"], p["n"] + p["n_aux"], p["classes"], seed)
        ds = full.subset(np.arange(p["n"]))
        aux = full.subset(np.arange(p["n"], p["n"] + p["n_aux"]))
        split = split_membership(ds, 0.5, 0.5, seed)
        arch = [p["vocab_size"], *p["hidden"], p["classes"]]
        teacher, fit = train_target(ds, split, arch, _train_cfg(p, seed), embedding_layer=True)
        docs = tuple(int(i) for i in split.member_indices[: p["docs"]])
        suite = AttackSuite(
            ds=ds,
            test_idx=split.nonmember_indices,
            aux=aux,
            docs=docs,
            doc_len=p["doc_len"],
            from_depth=p["from_depth"],
            to_depth=1,
            mapping_hidden=tuple(p["mapping_hidden"]),
            mapping_epochs=p["mapping_epochs"],
            attacks=("setup2", "setup1", "mia-loss"),
            mia_split=split,
            inversion_steps=p["inversion_steps"],
            seed=seed,
        )
        teacher_metrics = _attack_model(teacher, suite)
    except Exception as exc:  # noqa: BLE001
        rows["undefended"] = {"error": f"{type(exc).__name__}: {exc}"}
        return rows
    rows["undefended"] = {"sigma": None, **teacher_metrics}
    for sigma in p["sigmas"]:
        def one(sigma=sigma):
            dcfg = DistillConfig(sigma=sigma, epochs=p["distill_epochs"], seed=seed)
            student, _ = noisy_self_distill(teacher, ds, split, dcfg)
            rep = evaluate_defense(teacher, student, suite, sigma=sigma, teacher_metrics=teacher_metrics)
            return {"sigma": sigma, **rep.student, **{f"delta_{k}": v for k, v in rep.deltas.items()}}
        rows.run(f"sigma={sigma:g}", one)
    return rows


JOBS = {"F1": _job_f1, "F2": _job_f2, "F3": _job_f3, "F4": _job_f4, "F5": _job_f5, "F6": _job_f6, "DEF": _job_def}


def _run_job(args):
    finding, params, seed = args
    return seed, JOBS[finding](params, seed)


# ---------------------------------------------------------------- aggregation and report


@dataclass
class ExperimentReport:
    finding: str
    master_seed: int
    seeds: list
    params: dict
    rows: list
    runs: list
    version: str = __version__

    def row(self, name):
        for r in self.rows:
            if r["row"] == name:
                return r
        raise KeyError(name)

    def median(self, row, metric):
        return self.row(row)["metrics"][metric]["median"]

    def to_dict(self):
        return {
            "finding": self.finding,
            "master_seed": self.master_seed,
            "seeds": self.seeds,
            "params": self.params,
            "rows": self.rows,
            "version": self.version,
        }

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n"

    def runs_jsonl(self):
        return "".join(json.dumps(r, sort_keys=True) + "\n" for r in self.runs)

    def metric_names(self):
        return sorted({m for r in self.rows for m in r["metrics"]})

    def to_markdown(self):
        names = self.metric_names()
        lines = [
            f"# {self.finding} (master seed {self.master_seed}, {len(self.seeds)} seeds, v{self.version})",
            "",
            "Median over seeds; [min, max] below each value.",
            "",
            "| row | " + " | ".join(names) + " | failures |",
            "|---" * (len(names) + 2) + "|",
        ]
        for r in self.rows:
            cells = []
            for m in names:
                cell = r["metrics"].get(m)
                cells.append("" if cell is None else f"{_fmt(cell['median'])} [{_fmt(cell['min'])}, {_fmt(cell['max'])}]")
            lines.append(f"| {r['row']} | " + " | ".join(cells) + f" | {len(r['failures'])} |")
        return "\n".join(lines) + "\n"

    def to_csv(self):
        names = self.metric_names()
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["row", *(f"{m}_{s}" for m in names for s in ("median", "min", "max")), "failures"])
        for r in self.rows:
            out = [r["row"]]
            for m in names:
                cell = r["metrics"].get(m)
                out += ["", "", ""] if cell is None else [repr(cell["median"]), repr(cell["min"]), repr(cell["max"])]
            out.append(len(r["failures"]))
            writer.writerow(out)
        return buf.getvalue()

    @classmethod
    def from_dict(cls, data):
        return cls(
            finding=data["finding"],
            master_seed=data["master_seed"],
            seeds=data["seeds"],
            params=data["params"],
            rows=data["rows"],
            runs=[],
            version=data.get("version", __version__),
        )


def _fmt(v):
    return f"{v:.3f}" if isinstance(v, float) else str(v)


def _aggregate(finding, results):
    """Order-independent reduction of ``{seed: {row: metrics}}`` into table rows."""
    row_names = []
    for seed in sorted(results):
        for name in results[seed]:
            if name not in row_names:
                row_names.append(name)
    rows, runs = [], []
    for name in row_names:
        per_metric, failures = {}, []
        for seed in sorted(results):
            metrics = results[seed].get(name)
            if metrics is None:
                continue
            runs.append({"finding": finding, "row": name, "seed": seed, **metrics})
            if "error" in metrics:
                failures.append({"seed": seed, "error": metrics["error"]})
                continue
            for key, value in metrics.items():
                if isinstance(value, (int, float)) and not isinstance(value, bool) and value is not None:
                    per_metric.setdefault(key, []).append((seed, float(value)))
        summary = {}
        for key, pairs in per_metric.items():
            vals = np.array([v for _, v in pairs])
            summary[key] = {
                "median": float(np.median(vals)),
                "min": float(vals.min()),
                "max": float(vals.max()),
                "seeds": [s for s, _ in pairs],
                "values": [v for _, v in pairs],
            }
        rows.append({"row": name, "metrics": summary, "failures": failures})
    return rows, runs


def max_workers():
    try:
        return max(1, int(os.environ.get("EMBED_AUDIT_THREADS", "1")))
    except ValueError:
        raise InvalidArgument("EMBED_AUDIT_THREADS must be an integer", field="EMBED_AUDIT_THREADS") from None


def run_finding(spec, workers=None):
    """Run every seed of ``spec`` and aggregate the results into a report."""
    workers = max_workers() if workers is None else workers
    jobs = [(spec.finding, spec.params, seed) for seed in spec.seeds]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=min(workers, len(jobs))) as pool:
            results = dict(pool.map(_run_job, jobs))
    else:
        results = dict(map(_run_job, jobs))
    rows, runs = _aggregate(spec.finding, results)
    return ExperimentReport(spec.finding, spec.master_seed, list(spec.seeds), spec.params, rows, runs)
