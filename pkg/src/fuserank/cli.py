"""Single entry point: extract-style, synth, train, gradcheck, evaluate, predict.

Config files are key = value text; command-line flags override file values.
Unknown keys fail closed.  Exit codes: 0 success, 1 input error, 2 numerical
failure.  Logs go to stderr, data to files or stdout.
"""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import fields

import numpy as np

from . import data as data_io
from . import synth as synth_mod
from .errors import DataError, NumericalError
from .features import StyleConfig, extract_to_file
from .metrics import evaluate, similarity_report
from .model import GATES, MODALITIES, ModelConfig, predict_scores
from .modelio import load_model, save_model
from .train import GRADCHECK_CFG, grad_check, train

logger = logging.getLogger("fuserank")

# config keys: name -> (parser, help).  Defaults come from ModelConfig itself.
_DEFAULTS = ModelConfig()


def _int(s):
    return int(s)


def _float(s):
    return float(s)


def _int_tuple(s):
    return tuple(int(v) for v in s.split(",") if v.strip() != "")


def _str_tuple(s):
    return tuple(v.strip() for v in s.split(",") if v.strip() != "")


CONFIG_KEYS = {
    "fusion_dim": (_int, "shared fusion dimension d"),
    "embed_dim": (_int, "embedding dimension for categorical vocabularies"),
    "expert_count": (_int, "number of parallel gated experts"),
    "gate": (str, f"modality gate, one of {'/'.join(GATES)}"),
    "cross_layers": (_int, "number of feature-cross layers"),
    "mlp_widths": (_int_tuple, "comma-separated hidden widths of the MLP head"),
    "modalities": (_str_tuple, f"enabled modalities, subset of {','.join(MODALITIES)}"),
    "l2_lambda": (_float, "L2 penalty on embedding tables"),
    "learning_rate": (_float, "Adam learning rate"),
    "epochs": (_int, "training epochs"),
    "batch_size": (_int, "minibatch size"),
    "seed": (_int, "master random seed"),
}


def parse_config_file(path) -> dict:
    """Read key = value lines; '#' starts a comment.  Unknown keys rejected."""
    values = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise DataError(f"{path}:{lineno}: expected key = value")
            key, _, raw = line.partition("=")
            key, raw = key.strip(), raw.strip()
            if key not in CONFIG_KEYS:
                raise DataError(f"{path}:{lineno}: unknown config key {key!r}")
            caster = CONFIG_KEYS[key][0]
            try:
                values[key] = caster(raw)
            except ValueError as exc:
                raise DataError(f"{path}:{lineno}: bad value for {key!r} ({exc})") from exc
    return values


def resolve_config(config_path, args) -> ModelConfig:
    """File values under flag overrides; the result is echoed to the log."""
    values = parse_config_file(config_path) if config_path else {}
    for key in CONFIG_KEYS:
        flag = getattr(args, key, None)
        if flag is not None:
            values[key] = flag
    cfg = ModelConfig(**values)
    for f in fields(cfg):
        logger.info("config: %s = %s", f.name, getattr(cfg, f.name))
    return cfg


def _add_config_flags(parser):
    for key, (caster, help_text) in CONFIG_KEYS.items():
        default = getattr(_DEFAULTS, key)
        if isinstance(default, tuple):
            default = ",".join(str(v) for v in default)
        parser.add_argument(f"--{key.replace('_', '-')}", dest=key, type=caster,
                            default=None, metavar="V",
                            help=f"{help_text} (config key {key}, default {default})")


class _Parser(argparse.ArgumentParser):
    """argparse parser whose usage errors exit with the input-error code 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="fuserank",
                     description="Multi-modal ranking engine: extraction, synthesis, "
                                 "training, and evaluation.")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    parser.add_argument("-q", "--quiet", action="store_true", help="warnings only")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("extract-style", help="style/semantic vectors from feature maps")
    p.add_argument("--maps", required=True, help="feature-map JSON Lines input")
    p.add_argument("--grid", type=int, default=4, help="pooled Gram grid size P (default 4)")
    p.add_argument("--layers", type=_int_tuple, default=(0, 1, 2),
                   help="comma-separated style layer indices (default 0,1,2)")
    p.add_argument("--out", required=True, help="output JSON Lines path")

    p = sub.add_parser("synth", help="generate a planted-preference synthetic dataset")
    p.add_argument("--spec", default=None, help="key = value synth spec file (defaults if omitted)")
    p.add_argument("--out-dir", required=True, help="output dataset directory")
    p.add_argument("--seed", type=int, default=None, help="override the spec seed")

    p = sub.add_parser("train", help="train a model on a dataset directory")
    p.add_argument("--config", default=None, help="key = value model config file")
    p.add_argument("--data", required=True, help="dataset directory")
    p.add_argument("--out", required=True, help="output model path")
    p.add_argument("--before", type=int, default=None, metavar="TS",
                   help="train only on interactions with timestamp < TS")
    _add_config_flags(p)

    p = sub.add_parser("gradcheck", help="verify analytic gradients against finite differences")
    p.add_argument("--config", default=None,
                   help="model config file (small desk-scale default if omitted)")
    _add_config_flags(p)  # includes --seed

    p = sub.add_parser("evaluate", help="score a dataset and write an evaluation report")
    p.add_argument("--model", required=True, help="trained model path")
    p.add_argument("--data", required=True, help="dataset directory")
    p.add_argument("--report", required=True, help="output report JSON path")
    p.add_argument("--since", type=int, default=None, metavar="TS",
                   help="evaluate only interactions with timestamp >= TS")

    p = sub.add_parser("predict", help="score items for one user")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True, help="directory with users.jsonl and items.jsonl")
    p.add_argument("--user", required=True, help="user id")
    p.add_argument("--items", required=True, help="comma-separated item ids")

    p = sub.add_parser("similarity", help="cosine top-k vs random-k tables for item vectors")
    p.add_argument("--data", required=True, help="dataset directory")
    p.add_argument("--modality", default="sty", choices=["tsem", "sem", "sty"])
    p.add_argument("--queries", required=True, help="comma-separated item ids")
    p.add_argument("--k", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--report", required=True, help="output JSON path")
    return parser


def _cmd_extract_style(args) -> int:
    cfg = StyleConfig(style_layers=args.layers, pool_grid=args.grid)
    count = extract_to_file(args.maps, args.out, cfg)
    logger.info("extracted style/semantic vectors for %d items -> %s", count, args.out)
    return 0


def _cmd_synth(args) -> int:
    spec = synth_mod.parse_spec_file(args.spec) if args.spec else synth_mod.SynthSpec()
    if args.seed is not None:
        spec.seed = args.seed
    summary = synth_mod.generate(spec, args.out_dir)
    logger.info("synth: %(n_users)d users, %(n_items)d items, "
                "%(n_interactions)d interactions, positive rate %(positive_rate).4f",
                summary)
    return 0


def _cmd_train(args) -> int:
    cfg = resolve_config(args.config, args)
    dataset = data_io.load_dataset(args.data)
    if args.before is not None:
        kept, _ = data_io.temporal_split(dataset.interactions, args.before)
        if not kept:
            raise DataError(f"no interactions before timestamp {args.before}")
        dataset = data_io.subset(dataset, kept)
        logger.info("temporal filter: %d interactions before %d", len(kept), args.before)
    model, log = train(dataset, cfg)
    save_model(model, args.out)
    logger.info("initial loss %.6f; epoch losses %s; %d parameters -> %s",
                log.initial_loss, ["%.6f" % l for l in log.epoch_losses],
                model.param_count(), args.out)
    return 0


def _cmd_gradcheck(args) -> int:
    seed = args.seed if args.seed is not None else 0
    sized_keys = [k for k in CONFIG_KEYS if k != "seed"]
    if args.config or any(getattr(args, k, None) is not None for k in sized_keys):
        cfg = resolve_config(args.config, args)
    else:
        cfg = GRADCHECK_CFG  # desk-scale default keeps finite differences fast
    report = grad_check(cfg, seed=seed)
    for key in sorted(report["per_group"]):
        logger.debug("gradcheck %-24s max rel err %.3e", key, report["per_group"][key])
    print(f"max relative error {report['max_rel_err']:.6e} "
          f"(worst group {report['worst_group']})")
    if report["max_rel_err"] > 1e-4:
        raise NumericalError(
            f"gradient check failed: {report['max_rel_err']:.3e} > 1e-4 "
            f"in group {report['worst_group']}"
        )
    return 0


def _cmd_evaluate(args) -> int:
    model = load_model(args.model)
    dataset = data_io.load_dataset(args.data)
    if args.since is not None:
        _, kept = data_io.temporal_split(dataset.interactions, args.since)
        if not kept:
            raise DataError(f"no interactions at or after timestamp {args.since}")
        dataset = data_io.subset(dataset, kept)
    report = evaluate(model, dataset)
    with open(args.report, "w", encoding="utf-8") as fh:
        fh.write(report.to_json() + "\n")
    logger.info("evaluate: n=%d auc=%s mean_bce=%.6f -> %s",
                report.n, report.auc, report.mean_bce, args.report)
    return 0


def _cmd_predict(args) -> int:
    import os

    model = load_model(args.model)
    if not os.path.isdir(args.data):
        raise DataError(f"data directory not found: {args.data}")
    users = data_io.load_users(os.path.join(args.data, "users.jsonl"))
    items = data_io.load_items(os.path.join(args.data, "items.jsonl"))
    by_user = {u.user_id: u for u in users}
    by_item = {it.item_id: it for it in items}
    if args.user not in by_user:
        raise DataError(f"unknown user id {args.user!r}")
    wanted = [s.strip() for s in args.items.split(",") if s.strip()]
    if not wanted:
        raise DataError("no item ids given")
    missing = [i for i in wanted if i not in by_item]
    if missing:
        raise DataError(f"unknown item id {missing[0]!r}")
    records = [by_item[i] for i in wanted]
    scores = predict_scores(model, by_user[args.user], records)
    order = np.argsort(-scores, kind="mergesort")
    for i in order:
        print(f"{wanted[i]}\t{scores[i]:.6f}")
    return 0


def _cmd_similarity(args) -> int:
    import json
    import os

    items = data_io.load_items(os.path.join(args.data, "items.jsonl"))
    vectors = {it.item_id: it.modality(args.modality) for it in items
               if it.modality(args.modality) is not None}
    queries = [s.strip() for s in args.queries.split(",") if s.strip()]
    report = similarity_report(vectors, queries, args.k, seed=args.seed)
    with open(args.report, "w", encoding="utf-8") as fh:
        fh.write(json.dumps(report, indent=2, sort_keys=True) + "\n")
    logger.info("similarity: %d queries, k=%d -> %s", len(queries), report["k"], args.report)
    return 0


_COMMANDS = {
    "extract-style": _cmd_extract_style,
    "synth": _cmd_synth,
    "train": _cmd_train,
    "gradcheck": _cmd_gradcheck,
    "evaluate": _cmd_evaluate,
    "predict": _cmd_predict,
    "similarity": _cmd_similarity,
}


def run(argv=None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.DEBUG if args.verbose else (logging.WARNING if args.quiet else logging.INFO)
    logging.basicConfig(stream=sys.stderr, level=level,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return _COMMANDS[args.command](args)
    except FileNotFoundError as exc:
        print(f"fuserank: error: {exc}", file=sys.stderr)
        return 1
    except DataError as exc:
        print(f"fuserank: error: {exc}", file=sys.stderr)
        return 1
    except NumericalError as exc:
        print(f"fuserank: numerical failure: {exc}", file=sys.stderr)
        return 2


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
