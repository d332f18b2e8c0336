"""Command line interface.

Exit codes: 0 on success, 2 on invalid input (bad flags, unreadable or
inconsistent data, bad configuration), 1 on internal errors.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import asdict, replace
from pathlib import Path

import numpy as np

from .counterfactual import generate_many
from .dataset import build_detection_dataset, load_csv, train_test_split
from .detector import TreeEnsembleModel, evaluate, fit_gbdt, tune
from .effects import EffectResult, feature_effect
from .errors import DataError, SchemaMismatchError
from .generator import MODES, baseline_synthesize, fit_chain
from .importance import ImportanceReport, interaction_importance, permutation_importance, shap_importance
from .report import (AuditConfig, AuditError, dumps, load_report, render_effects, render_force, render_importance,
                     render_waterfall, run_audit, schema_path)
from .report.audit import importance_sample, load_inputs
from .shapley import (BackgroundSet, ConditionalConfig, InteractionMatrix, ShapleyVector, explain_instance,
                      fit_conditional_sampler, tree_shap_batch, tree_shap_interactions_batch)

logger = logging.getLogger("synthaudit")


def _write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _config(args) -> AuditConfig:
    config = AuditConfig.load(args.config)
    return replace(config, seed=args.seed) if args.seed is not None else config


def _detection(args, config: AuditConfig):
    real, synths, _ = load_inputs(args.real, args.synthetic)
    d = build_detection_dataset(real, synths[0], config.seed)
    return real, train_test_split(d, config.test_fraction, config.seed)


def _model(args, d) -> TreeEnsembleModel:
    try:
        model = TreeEnsembleModel.load(args.model)
    except (OSError, json.JSONDecodeError, KeyError) as e:
        raise DataError(f"cannot load model {args.model}: {e}") from e
    if model.fingerprint is not None and model.fingerprint != d.data.fingerprint():
        raise SchemaMismatchError("model was trained on a different schema")
    return model


def cmd_train(args) -> int:
    config = _config(args)
    _, d = _detection(args, config)
    train_config = config.train
    budget = config.tune_budget if args.tune_budget is None else args.tune_budget
    if budget > 0:
        train_config = tune(d, budget, config.seed, folds=config.tune_folds, base=config.train)
    model = fit_gbdt(d, replace(train_config, seed=config.seed))
    out = _out_dir(args)
    model.save(out / "model.json")
    metrics = evaluate(model, d)
    _write(out / "metrics.json", dumps({"seed": config.seed, "config": asdict(train_config), **metrics.to_dict()}))
    print(f"test AUC {metrics.test.auc:.4f}  accuracy {metrics.test.accuracy:.4f}  trees {len(model.trees)}")
    return 0


def cmd_audit(args) -> int:
    report = run_audit(args.real, args.synthetic, _config(args), args.out)
    h = report.headline()
    print(f"test AUC {h['test_auc_mean']:.4f} (sd {h['test_auc_sd']:.4f}) over {len(report.replications)} "
          f"replications; {len(report.findings)} findings; report at {Path(args.out) / 'report.json'}")
    for f in report.findings:
        print(f"  - {f}")
    return 0


def cmd_importance(args) -> int:
    config = _config(args)
    _, d = _detection(args, config)
    model = _model(args, d)
    pfi = permutation_importance(model, d, loss=args.loss or config.pfi_loss,
                                 repeats=args.repeats or config.pfi_repeats, seed=config.seed)
    Xte, _ = d.part("test")
    rows = importance_sample(Xte, config.shapley.importance_rows, config.seed)
    phi, _, _ = tree_shap_batch(model, rows)
    shap = shap_importance(phi, d.data.names)
    inter = interaction_importance(tree_shap_interactions_batch(model, rows)[0], config.shapley.top_k, d.data.names)
    out = _out_dir(args)
    _write(out / "importance.json", dumps({"pfi": pfi.to_dict(), "mean_abs_shap": shap.to_dict(),
                                           "interaction": inter.to_dict()}))
    render_importance(pfi, shap).save(out / "importance.svg")
    render_importance(inter, top_k=config.shapley.top_k).save(out / "interactions.svg")
    for e in pfi.ranked():
        print(f"{e.label:>24s}  PFI {e.mean:+.4f} (sd {e.sd:.4f})  mean|SHAP| {shap.entry(*e.features).mean:.4f}")
    return 0


def cmd_effects(args) -> int:
    config = _config(args)
    ec = config.effects
    if args.resolution is not None:
        ec = replace(ec, resolution=args.resolution)
    _, d = _detection(args, config)
    model = _model(args, d)
    out = _out_dir(args)
    results = []
    for name in (args.feature or ec.features or d.data.names):
        eff = feature_effect(model, d, name, ec.resolution, ec.grid_method, ec.instance_sample, config.seed,
                             ec.delta, ec.plot_curves)
        results.append(eff)
        render_effects(eff).save(out / f"effect_{name}.svg")
        for f in eff.findings():
            print(f)
    _write(out / "effects.json", dumps([e.to_dict() for e in results]))
    return 0


def cmd_shapley(args) -> int:
    config = _config(args)
    sc = config.shapley
    engines = tuple(args.engines.split(",")) if args.engines else sc.engines
    _, d = _detection(args, config)
    model = _model(args, d)
    Xtr, _ = d.part("train")
    background = BackgroundSet.sample(Xtr, sc.background, config.seed)
    sampler = None
    if "conditional_kernel" in engines:
        sampler = fit_conditional_sampler(d.subset("train").data, ConditionalConfig(seed=config.seed))
    out = _out_dir(args)
    results = []
    rows = args.row or list(sc.rows or [])
    if not rows:
        test = np.flatnonzero(d.is_test)
        s = model.predict_proba(d.data.values[test])
        rows = [int(test[np.argmin(s)])]
    for row in rows:
        if not 0 <= row < d.data.n:
            raise DataError(f"row {row} is outside the detection dataset (n={d.data.n})")
        e = explain_instance(model, d.data.values[row], engines, background=background, sampler=sampler,
                             n_coalitions=sc.n_coalitions, n_imputations=sc.n_imputations, seed=config.seed,
                             margin=sc.margin, index=row, schema=d.data.schema)
        results.append(e.to_dict(d.data.schema))
        for scale in sorted({v.scale for v in e.vectors.values()}):
            render_force([e.vectors[k] for k in sorted(e.vectors) if e.vectors[k].scale == scale]).save(
                out / f"force_row{row}_{scale}.svg")
        if e.interactions is not None:
            render_waterfall(e.interactions, sc.waterfall_top_k).save(out / f"waterfall_row{row}.svg")
        print(f"row {row}: score {e.score:.4f}")
        for t in e.tags:
            print(f"  {t.feature} = {t.value}: {t.tag} ({t.engine} {t.attribution:+.4f})")
    _write(out / "shapley.json", dumps(results))
    return 0


def cmd_counterfactual(args) -> int:
    config = _config(args)
    mc = config.counterfactual.mcce
    if args.n_samples is not None:
        mc = replace(mc, n_samples=args.n_samples)
    if args.immutable:
        mc = replace(mc, immutable=tuple(args.immutable))
    mc = replace(mc, seed=config.seed)
    real, d = _detection(args, config)
    model = _model(args, d)
    if args.row:
        rows = np.array(args.row, dtype=np.int64)
    else:
        cand = np.flatnonzero(d.is_test & (d.labels == 0))
        cand = cand[model.predict_proba(d.data.values[cand]) <= 0.5]
        rows = cand[:config.counterfactual.n_instances]
    if np.any((rows < 0) | (rows >= d.data.n)):
        raise DataError("row index outside the detection dataset")
    chain = fit_chain(real, replace(config.counterfactual.chain, seed=config.seed))
    sets = generate_many(model, d.data.values[rows], chain, mc, rows.tolist())
    out = _out_dir(args)
    _write(out / "counterfactuals.json", dumps([s.to_dict() for s in sets]))
    text = "\n\n".join(f"row {s.index} ({s.status})\n{s.table()}" for s in sets)
    _write(out / "counterfactuals.txt", text + "\n")
    print(text)
    return 0


def cmd_synthesize(args) -> int:
    real = load_csv(args.real, provenance="real")
    config = AuditConfig.load(args.config).counterfactual.chain
    seed = args.seed if args.seed is not None else 0
    synth = baseline_synthesize(real, args.mode, args.n, seed, config)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    synth.to_csv(out)
    if args.chain_out:
        fit_chain(real, replace(config, mode=args.mode, seed=seed)).save(args.chain_out)
    print(f"wrote {synth.n} rows to {out}")
    return 0


def cmd_report(args) -> int:
    report = load_report(args.report)
    try:
        import jsonschema
    except ImportError:   # validation is optional at runtime
        jsonschema = None
    if jsonschema is not None:
        try:
            jsonschema.validate(report, json.loads(schema_path().read_text(encoding="utf-8")))
        except jsonschema.ValidationError as e:
            raise DataError(f"report does not match the schema: {e.message}") from e
    out = _out_dir(args)
    imp = {k: ImportanceReport.from_dict(v) for k, v in report["importance"].items()}
    if "pfi" in imp and "mean_abs_shap" in imp:
        render_importance(imp["pfi"], imp["mean_abs_shap"]).save(out / "importance.svg")
    if "interaction" in imp:
        render_importance(imp["interaction"]).save(out / "interactions.svg")
    for e in report["effects"]:
        render_effects(EffectResult.from_dict(e)).save(out / f"effect_{e['feature']}.svg")
    for x in report["explanations"]:
        vecs = [ShapleyVector.from_dict(v) for _, v in sorted(x["vectors"].items())]
        for scale in sorted({v.scale for v in vecs}):
            render_force([v for v in vecs if v.scale == scale]).save(out / f"force_row{x['index']}_{scale}.svg")
        if x["interactions"] is not None:
            render_waterfall(InteractionMatrix.from_dict(x["interactions"])).save(out / f"waterfall_row{x['index']}.svg")
    lines = [f"status: {report['status']}"]
    h = report["headline"]
    if h:
        lines.append(f"test AUC {h['test_auc_mean']:.4f} (sd {h['test_auc_sd']:.4f})")
    lines += [f"- {f}" for f in report["findings"]]
    _write(out / "summary.txt", "\n".join(lines) + "\n")
    print("\n".join(lines))
    return 0


def _common(p: argparse.ArgumentParser, out_default: str) -> None:
    p.add_argument("--seed", type=int, default=None, help="base seed (overrides the config)")
    p.add_argument("--config", default=None, help="audit configuration JSON")
    p.add_argument("--out", default=out_default, help="output path")


def _data_args(p: argparse.ArgumentParser, model: bool = True) -> None:
    p.add_argument("--real", required=True, help="real data CSV")
    p.add_argument("--synthetic", required=True, help="synthetic data CSV")
    if model:
        p.add_argument("--model", required=True, help="detector JSON written by `train`")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="synthaudit", description="Audit synthetic tabular data with an "
                                     "explained real-vs-synthetic detector.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train and evaluate the detector")
    _data_args(p, model=False)
    p.add_argument("--tune-budget", type=int, default=None)
    _common(p, "out")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("audit", help="run the full audit pipeline")
    p.add_argument("real")
    p.add_argument("synthetic", nargs="+")
    _common(p, "audit_out")
    p.set_defaults(func=cmd_audit)

    p = sub.add_parser("importance", help="PFI, mean |SHAP| and interaction importance")
    _data_args(p)
    p.add_argument("--loss", choices=("log_loss", "one_minus_accuracy"), default=None)
    p.add_argument("--repeats", type=int, default=None)
    _common(p, "out")
    p.set_defaults(func=cmd_importance)

    p = sub.add_parser("effects", help="ICE/PDP feature effects")
    _data_args(p)
    p.add_argument("--feature", action="append")
    p.add_argument("--resolution", type=int, default=None)
    _common(p, "out")
    p.set_defaults(func=cmd_effects)

    p = sub.add_parser("shapley", help="instance-level Shapley explanations")
    _data_args(p)
    p.add_argument("--row", type=int, action="append", help="detection-dataset row (repeatable)")
    p.add_argument("--engines", default=None, help="comma-separated engines")
    _common(p, "out")
    p.set_defaults(func=cmd_shapley)

    p = sub.add_parser("counterfactual", help="MCCE counterfactuals for detected-synthetic rows")
    _data_args(p)
    p.add_argument("--row", type=int, action="append")
    p.add_argument("--n-samples", type=int, default=None)
    p.add_argument("--immutable", action="append")
    _common(p, "out")
    p.set_defaults(func=cmd_counterfactual)

    p = sub.add_parser("synthesize", help="baseline synthesizer (writes CSV)")
    p.add_argument("--real", required=True)
    p.add_argument("--mode", choices=MODES, default="cart_chain")
    p.add_argument("-n", type=int, default=None, help="rows to generate (default: as many as real)")
    p.add_argument("--chain-out", default=None, help="also write the fitted chain as JSON")
    _common(p, "synthetic.csv")
    p.set_defaults(func=cmd_synthesize)

    p = sub.add_parser("report", help="validate a report JSON and re-render its figures")
    p.add_argument("report")
    _common(p, "report_out")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)     # exits with 2 on usage errors
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except AuditError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2 if e.is_validation else 1
    except DataError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except Exception as e:  # noqa: BLE001 - reported as an internal error
        logger.debug("internal error", exc_info=True)
        print(f"internal error: {type(e).__name__}: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
