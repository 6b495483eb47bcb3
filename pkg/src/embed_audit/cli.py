"""Command-line entry point.

Every subcommand reads a JSON config (optional), applies flag overrides,
writes ``effective-config.json`` plus its artifacts under ``--out`` and
exits 0 on success, 1 on a validation error and 2 on a runtime failure.
"""

import argparse
import copy
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .core.nn import TrainConfig
from .defense import AttackSuite, DistillConfig, evaluate_defense, noisy_self_distill
from .errors import InvalidArgument, NumericFailure, ParseError
from .experiments import FINDINGS, ExperimentReport, ExperimentSpec, run_finding
from .inversion import InversionConfig, invert_direct, invert_setup1, invert_setup2, make_problem, mapping_config, run_record, train_mapping
from .mia import SETTINGS, attack_config, build_attack_features, run_mia, shadow_attack_with_labels, shadow_attack_with_pseudolabels
from .pia import run_pia
from .synthdata import gen_bow_text, gen_property_blobs, gen_purchase_like, load_csv, save_csv, split_membership
from .target import load_checkpoint, save_checkpoint, train_target

logger = logging.getLogger("embed_audit")

SUBCOMMANDS = ("gen-data", "train-target", "attack-mia", "attack-pia", "invert", "defend", "run-finding", "report")

_PURCHASE = {"kind": "purchase", "n": 1200, "d": 60, "classes": 20, "flip_prob": 0.3}
_BLOBS = {
    "kind": "blobs", "n": 4000, "d": 32, "classes": 4, "spread": 1.0, "center_scale": 4.0,
    "property_shift": 2.0, "properties": {"orthogonal": 0.9, "independent": 0.0},
}
_BOW = {"kind": "bow", "n": 5200, "vocab_size": 50, "doc_len": 5, "classes": 2, "bias": 1.5}
_TARGET = {
    "hidden": [128, 64, 32], "activation": "tanh", "embedding_layer": False, "epochs": 150,
    "batch_size": 32, "learning_rate": 1e-3, "l2_penalty": 0.0, "checkpoint": None,
}
_SPLIT = {"member_frac": 0.5, "attack_train_frac": 0.5}
_ATTACK = {"setting": "loss", "depth": None, "epochs": 80, "shadow": None, "k": None}


def _data(base, **kw):
    return {**base, "csv": None, **kw}


def _target(**kw):
    return {**_TARGET, **kw}


DEFAULT_CONFIGS = {
    "gen-data": {"data": _data(_PURCHASE)},
    "train-target": {"data": _data(_PURCHASE), "split": _SPLIT, "target": _target()},
    "attack-mia": {"data": _data(_PURCHASE), "split": _SPLIT, "target": _target(), "attack": _ATTACK},
    "attack-pia": {
        "data": _data(_BLOBS),
        "split": _SPLIT,
        "target": _target(hidden=[64, 32, 8], epochs=100),
        "pia": {"property": "orthogonal", "depth": None, "epochs": 80},
    },
    "invert": {
        "data": _data(_BOW),
        "split": _SPLIT,
        "target": _target(hidden=[64, 64, 32], epochs=10, embedding_layer=True),
        "inversion": {
            "setup": "setup2", "temperature": 0.05, "l1_weight": 0.1, "threshold": 0.01,
            "learning_rate": 1e-3, "steps": 3000, "docs": 20, "n_target": 1200,
            "depth": 2, "mapping_hidden": [256], "mapping_epochs": 150,
        },
    },
    "defend": {
        "data": _data(_BOW),
        "split": _SPLIT,
        "target": _target(hidden=[64, 64, 32], epochs=10, embedding_layer=True),
        "defense": {
            "sigma": 0.1, "temperature": 1.0, "epochs": 60, "docs": 20, "n_target": 1200,
            "depth": 2, "mapping_hidden": [256], "mapping_epochs": 150, "inversion_steps": 3000,
            "attacks": ["setup2", "setup1", "mia-loss"],
        },
    },
    "run-finding": {"finding": {"id": "F1", "n_seeds": 5, "threads": None, "params": {}}},
    "report": {"report": {"input": None}},
}


# ---------------------------------------------------------------- config handling


def _check_type(value, default, path):
    if default is None or value is None:
        return
    if isinstance(default, bool):
        ok = isinstance(value, bool)
    elif isinstance(default, int):
        ok = isinstance(value, int) and not isinstance(value, bool)
    elif isinstance(default, float):
        ok = isinstance(value, (int, float)) and not isinstance(value, bool)
    else:
        ok = isinstance(value, type(default))
    if not ok:
        raise InvalidArgument(f"{path}: expected {type(default).__name__}, got {type(value).__name__}", field=path)


def _merge_checked(base, override, path=""):
    """Merge ``override`` into ``base``, rejecting unknown keys and wrong types.

    Free-form dicts (empty defaults, e.g. finding params) accept any keys.
    """
    out = copy.deepcopy(base)
    for key, value in override.items():
        where = f"{path}{key}"
        if key not in out:
            if base or not path:
                raise InvalidArgument(f"unknown config key {where!r}", field=where)
            out[key] = value
            continue
        if isinstance(out[key], dict) and out[key] is not None:
            if not isinstance(value, dict):
                raise InvalidArgument(f"{where}: expected an object", field=where)
            if key == "properties":
                out[key] = dict(value)
            else:
                out[key] = _merge_checked(out[key], value, where + ".")
        else:
            _check_type(value, out[key], where)
            out[key] = value
    return out


def _parse_override(text):
    if "=" not in text:
        raise InvalidArgument(f"override {text!r} must look like key=value", field="set")
    key, raw = text.split("=", 1)
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    node = value
    for part in reversed(key.split(".")):
        node = {part: node}
    return node


def _deep_update(a, b):
    for k, v in b.items():
        if isinstance(v, dict) and isinstance(a.get(k), dict):
            _deep_update(a[k], v)
        else:
            a[k] = v
    return a


def build_config(args):
    """Defaults, then the config file, then flags; validated against the defaults."""
    base = {"seed": 0, **copy.deepcopy(DEFAULT_CONFIGS[args.command])}
    user = {}
    if args.config:
        try:
            user = json.loads(Path(args.config).read_text())
        except FileNotFoundError:
            raise InvalidArgument(f"config file {args.config} not found", field="config") from None
        except json.JSONDecodeError as exc:
            raise InvalidArgument(f"config file is not valid JSON: {exc}", field="config") from None
        if not isinstance(user, dict):
            raise InvalidArgument("config file must hold a JSON object", field="config")
        # an effective-config file names its subcommand
        command = user.pop("command", args.command)
        if command != args.command:
            raise InvalidArgument(f"config was written for {command!r}, not {args.command!r}", field="command")
    flags = {}
    if args.seed is not None:
        flags["seed"] = args.seed
    section = {"attack-mia": "attack", "attack-pia": "pia", "invert": "inversion", "defend": "defense"}.get(args.command)
    for name, value in (("setting", args.setting), ("depth", args.depth), ("sigma", args.sigma), ("setup", args.setup)):
        if value is None:
            continue
        if section is None or name not in base[section]:
            raise InvalidArgument(f"--{name} does not apply to {args.command}", field=name)
        flags.setdefault(section, {})[name] = value
    if args.finding is not None:
        if args.command != "run-finding":
            raise InvalidArgument(f"--finding does not apply to {args.command}", field="finding")
        flags["finding"] = {"id": args.finding}
    if args.input is not None:
        if args.command != "report":
            raise InvalidArgument(f"--input does not apply to {args.command}", field="input")
        flags["report"] = {"input": args.input}
    for text in args.set or ():
        _deep_update(flags, _parse_override(text))
    cfg = _merge_checked(base, user)
    cfg = _merge_checked(cfg, flags)
    _check_type(cfg["seed"], 0, "seed")
    if cfg["seed"] < 0:
        raise InvalidArgument("seed must be >= 0", field="seed")
    return cfg


# ---------------------------------------------------------------- building blocks


def _load_data(dcfg, seed):
    if dcfg.get("csv"):
        path = Path(dcfg["csv"])
        if not path.exists():
            raise InvalidArgument(f"data file {path} not found", field="data.csv")
        return load_csv(path, seed=seed)
    kind = dcfg["kind"]
    if kind == "purchase":
        return gen_purchase_like(dcfg["n"], dcfg["d"], dcfg["classes"], dcfg["flip_prob"], seed)
    if kind == "blobs":
        props = sorted(dcfg["properties"].items())
        return gen_property_blobs(dcfg["n"], dcfg["d"], dcfg["classes"], props, dcfg["spread"], seed,
                                  center_scale=dcfg["center_scale"], property_shift=dcfg["property_shift"])
    if kind == "bow":
        return gen_bow_text(dcfg["vocab_size"], dcfg["doc_len"], dcfg["n"], dcfg["classes"], seed, dcfg["bias"])
    raise InvalidArgument(f"unknown data kind {kind!r}", field="data.kind")


def _check_depth(depth, n_layers, path):
    if depth is None:
        return
    if not isinstance(depth, int) or isinstance(depth, bool) or not 0 <= depth <= n_layers:
        raise InvalidArgument(f"{path} must lie in [0, {n_layers}] for this target, got {depth}", field=path)


def _train_config(t, seed):
    return TrainConfig(epochs=t["epochs"], batch_size=t["batch_size"], learning_rate=t["learning_rate"],
                       seed=seed, l2_penalty=t["l2_penalty"])


def _n_layers(cfg):
    t = cfg["target"]
    if t["checkpoint"]:
        return None
    return len(t["hidden"]) + 1


def _get_target(cfg, ds, split, seed):
    t = cfg["target"]
    if t["checkpoint"]:
        path = Path(t["checkpoint"])
        if not path.exists():
            raise InvalidArgument(f"checkpoint {path} not found", field="target.checkpoint")
        model = load_checkpoint(path)
        if model.layer_sizes[0] != ds.n_features:
            raise InvalidArgument("checkpoint input width does not match the data", field="target.checkpoint")
        return model, None
    sizes = [ds.n_features, *t["hidden"], max(ds.n_classes, int(ds.labels.max()) + 1)]
    return train_target(ds, split, sizes, _train_config(t, seed), t["activation"], t["embedding_layer"])


def _split(cfg, ds, seed):
    s = cfg["split"]
    return split_membership(ds, s["member_frac"], s["attack_train_frac"], seed)


def _write_json(path, obj):
    path.write_text(json.dumps(obj, sort_keys=True, indent=2) + "\n")


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    return obj


# ---------------------------------------------------------------- subcommands


def cmd_gen_data(cfg, out):
    ds = _load_data(cfg["data"], cfg["seed"])
    save_csv(ds, out / "data.csv")
    logger.info("wrote %d rows to %s", len(ds), out / "data.csv")
    return {"rows": len(ds)}


def cmd_train_target(cfg, out):
    seed = cfg["seed"]
    ds = _load_data(cfg["data"], seed)
    split = _split(cfg, ds, seed)
    model, fit = _get_target(cfg, ds, split, seed)
    save_checkpoint(model, out / "target.eatm")
    rec = {"layer_sizes": model.layer_sizes, **(fit.to_dict() if fit else {})}
    _write_json(out / "fit.json", rec)
    return rec


def cmd_attack_mia(cfg, out):
    seed, a = cfg["seed"], cfg["attack"]
    if a["setting"] not in SETTINGS:
        raise InvalidArgument(f"attack.setting must be one of {SETTINGS}", field="setting")
    if a["shadow"] not in (None, "labels", "pseudolabels"):
        raise InvalidArgument("attack.shadow must be null, 'labels' or 'pseudolabels'", field="attack.shadow")
    n_layers = _n_layers(cfg)
    if n_layers is not None:
        _check_depth(a["depth"], n_layers, "depth")
    ds = _load_data(cfg["data"], seed)
    split = _split(cfg, ds, seed)
    model, fit = _get_target(cfg, ds, split, seed)
    _check_depth(a["depth"], model.depth, "depth")
    acfg = attack_config(seed, a["epochs"])
    depth = model.deep_depth if a["depth"] is None else a["depth"]
    if a["shadow"] == "labels":
        result = shadow_attack_with_labels(model, ds, split, depth, acfg)
    elif a["shadow"] == "pseudolabels":
        k = a["k"] or max(ds.n_classes, 2)
        result = shadow_attack_with_pseudolabels(model, ds, split, depth, k, acfg)
    else:
        result = run_mia(build_attack_features(model, ds, split, a["setting"], depth), acfg)
    rec = result.to_record()
    if fit is not None:
        rec.update(target_train_acc=fit.train_accuracy, target_test_acc=fit.test_accuracy, overfit_gap=fit.overfit_gap)
    _write_json(out / "mia.json", rec)
    logger.info("attack AUC %.4f", result.auc)
    return rec


def cmd_attack_pia(cfg, out):
    seed, p = cfg["seed"], cfg["pia"]
    n_layers = _n_layers(cfg)
    if n_layers is not None:
        _check_depth(p["depth"], n_layers, "depth")
    ds = _load_data(cfg["data"], seed)
    if p["property"] not in ds.property_labels:
        raise InvalidArgument(f"data has no property {p['property']!r}", field="pia.property")
    split = _split(cfg, ds, seed)
    model, fit = _get_target(cfg, ds, split, seed)
    _check_depth(p["depth"], model.depth, "depth")
    aux = ds.subset(split.nonmember_indices)
    depths = [model.shallow_depth, model.deep_depth] if p["depth"] is None else [p["depth"]]
    records = []
    for depth in depths:
        r = run_pia(model, aux, p["property"], depth, attack_config(seed, p["epochs"]), fit=fit)
        records.append(r.to_record())
    _write_json(out / "pia.json", records)
    return records


def _bow_parts(cfg, section):
    seed = cfg["seed"]
    full = _load_data(cfg["data"], seed)
    n = cfg[section]["n_target"]
    if not 0 < n < len(full):
        raise InvalidArgument(f"{section}.n_target must lie in (0, {len(full)})", field=f"{section}.n_target")
    ds = full.subset(np.arange(n))
    aux = full.subset(np.arange(n, len(full)))
    split = _split(cfg, ds, seed)
    return ds, aux, split


def cmd_invert(cfg, out):
    seed, inv = cfg["seed"], cfg["inversion"]
    icfg = InversionConfig(
        setup=inv["setup"], temperature=inv["temperature"], l1_weight=inv["l1_weight"],
        threshold=inv["threshold"], learning_rate=inv["learning_rate"], steps=inv["steps"], seed=seed,
    )
    n_layers = _n_layers(cfg)
    if n_layers is not None:
        _check_depth(inv["depth"], n_layers, "depth")
    ds, aux, split = _bow_parts(cfg, "inversion")
    model, _ = _get_target(cfg, ds, split, seed)
    _check_depth(inv["depth"], model.depth, "depth")
    docs = [int(i) for i in split.member_indices[: inv["docs"]]]
    doc_len = cfg["data"].get("doc_len")
    mapping = None
    if icfg.setup != "direct" and inv["depth"] > 1:
        mcfg = mapping_config(seed).replace(epochs=inv["mapping_epochs"])
        mapping = train_mapping(model, aux, inv["depth"], 1, mcfg, hidden=tuple(inv["mapping_hidden"]))
    records = []
    for i in docs:
        x = ds.features[i]
        truth = ds.token_set(i)
        if icfg.setup == "direct":
            x_hat, residual = invert_direct(model, x, inv["depth"], icfg)
            rec = {"setup": "direct", "steps": icfg.steps, "seed": seed, "residual": residual,
                   "max_abs_error": float(np.abs(x_hat - x).max())}
        else:
            prob = make_problem(model, x, mapping=mapping, depth=None if mapping else inv["depth"], doc_len=doc_len)
            fn = invert_setup2 if icfg.setup == "setup2" else invert_setup1
            rec = run_record(fn(prob, icfg), icfg, truth)
        records.append({"doc": i, **rec})
    with open(out / "inversion.jsonl", "w", newline="\n") as fh:
        for rec in records:
            fh.write(json.dumps(_jsonable(rec), sort_keys=True) + "\n")
    summary = {"setup": icfg.setup, "docs": len(records)}
    if icfg.setup != "direct":
        summary["precision"] = float(np.mean([r["precision"] for r in records]))
        summary["recall"] = float(np.mean([r["recall"] for r in records]))
        summary["f1"] = float(np.mean([_f1(r) for r in records]))
    _write_json(out / "inversion.json", summary)
    return summary


def _f1(rec):
    p, r = rec["precision"], rec["recall"]
    return 0.0 if p + r == 0 else 2 * p * r / (p + r)


def cmd_defend(cfg, out):
    seed, d = cfg["seed"], cfg["defense"]
    dcfg = DistillConfig(sigma=d["sigma"], temperature=d["temperature"], epochs=d["epochs"], seed=seed)
    n_layers = _n_layers(cfg)
    if n_layers is not None:
        _check_depth(d["depth"], n_layers, "depth")
    ds, aux, split = _bow_parts(cfg, "defense")
    teacher, _ = _get_target(cfg, ds, split, seed)
    student, fit = noisy_self_distill(teacher, ds, split, dcfg)
    suite = AttackSuite(
        ds=ds, test_idx=split.nonmember_indices, aux=aux,
        docs=tuple(int(i) for i in split.member_indices[: d["docs"]]),
        doc_len=cfg["data"].get("doc_len"), from_depth=d["depth"], to_depth=1,
        mapping_hidden=tuple(d["mapping_hidden"]), mapping_epochs=d["mapping_epochs"],
        attacks=tuple(d["attacks"]), mia_split=split, inversion_steps=d["inversion_steps"], seed=seed,
    )
    report = evaluate_defense(teacher, student, suite, sigma=d["sigma"])
    rec = report.to_record()
    _write_json(out / "defense.json", rec)
    save_checkpoint(student, out / "student.eatm")
    return rec


def _emit_report(report, out):
    (out / "report.json").write_text(report.to_json())
    (out / "report.md").write_text(report.to_markdown())
    (out / "report.csv").write_text(report.to_csv())


def cmd_run_finding(cfg, out):
    f = cfg["finding"]
    if f["id"] not in FINDINGS:
        raise InvalidArgument(f"finding must be one of {FINDINGS}", field="finding")
    if f["n_seeds"] < 1:
        raise InvalidArgument("finding.n_seeds must be >= 1", field="finding.n_seeds")
    spec = ExperimentSpec.from_master_seed(f["id"], cfg["seed"], f["n_seeds"], f["params"])
    report = run_finding(spec, workers=f["threads"])
    _emit_report(report, out)
    (out / "runs.jsonl").write_text(report.runs_jsonl())
    logger.info("finding %s: %d rows", f["id"], len(report.rows))
    return report.to_dict()


def cmd_report(cfg, out):
    src = cfg["report"]["input"]
    if not src:
        raise InvalidArgument("report needs --input pointing at a report.json", field="input")
    path = Path(src)
    if not path.exists():
        raise InvalidArgument(f"report file {path} not found", field="input")
    try:
        report = ExperimentReport.from_dict(json.loads(path.read_text()))
    except (json.JSONDecodeError, KeyError) as exc:
        raise InvalidArgument(f"not a finding report: {exc}", field="input") from None
    _emit_report(report, out)
    return report.to_dict()


COMMANDS = {
    "gen-data": cmd_gen_data,
    "train-target": cmd_train_target,
    "attack-mia": cmd_attack_mia,
    "attack-pia": cmd_attack_pia,
    "invert": cmd_invert,
    "defend": cmd_defend,
    "run-finding": cmd_run_finding,
    "report": cmd_report,
}


# ---------------------------------------------------------------- argument parsing


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(f"{self.format_usage()}{self.prog}: error: {message}")


def make_parser():
    parser = _Parser(prog="embed-audit", description="Privacy audits of neural-network embeddings.")
    sub = parser.add_subparsers(dest="command", metavar="{" + ",".join(SUBCOMMANDS) + "}", parser_class=_Parser)
    sub.required = True
    for name in SUBCOMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="JSON config file")
        p.add_argument("--seed", type=int, help="master seed")
        p.add_argument("--out", default=".", help="output directory")
        p.add_argument("--finding", choices=FINDINGS)
        p.add_argument("--setting")
        p.add_argument("--depth", type=int)
        p.add_argument("--sigma", type=float)
        p.add_argument("--setup")
        p.add_argument("--input", help="report.json to re-render (report only)")
        p.add_argument("--set", action="append", metavar="KEY=VALUE", help="dotted config override, value as JSON")
        p.add_argument("--quiet", action="store_true", help="only log warnings")
    return parser


def main(argv=None):
    parser = make_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(str(exc), file=sys.stderr)
        return 1
    logging.basicConfig(
        level=logging.WARNING if args.quiet else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        cfg = build_config(args)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        _write_json(out / "effective-config.json", {"command": args.command, **cfg})
        COMMANDS[args.command](cfg, out)
    except (InvalidArgument, ParseError) as exc:
        field = getattr(exc, "field", None)
        tag = f" [{field}]" if field else ""
        print(f"embed-audit: invalid argument{tag}: {exc}", file=sys.stderr)
        return 1
    except (NumericFailure, ArithmeticError, RuntimeError, OSError, MemoryError) as exc:
        print(f"embed-audit: runtime failure: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - any other failure is a runtime error
        logger.exception("unexpected failure")
        print(f"embed-audit: runtime failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
