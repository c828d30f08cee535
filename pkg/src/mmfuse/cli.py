"""Command-line interface: ``mmfuse <command> [flags]``.

Commands: gen-data, embed, train, eval, gradcheck.  Every command also
accepts ``--config FILE`` with flat ``key = value`` lines (keys are flag
names without the leading dashes, ``-`` or ``_`` both accepted); flags on
the command line win over the file, unknown keys are rejected.

Exit codes: 0 success, 1 runtime failure, 2 usage error.
"""

import argparse
import json
import logging
import os
import sys
import time

import numpy as np

from . import tensor as T
from .embedding import HttpProvider, MockProvider, PromptSpec, TokenCache, embed_many
from .embedding.providers import API_KEY_ENV
from .errors import ConfigurationError, MMFuseError
from .fusion import image_summary
from .gradcheck import gradcheck_report
from .model import ModelConfig, forward, image_features, init_model, load_model, parameters, save_model
from .report import ReportEntry, report
from .rng import Rng
from .synth import (
    SyntheticConfig,
    generate,
    load_images,
    load_manifest,
    load_shot_bank,
    read_embeddings,
    split,
    write_embeddings,
)
from .tasks import TASKS, get_task
from .train import Hyperparams, Subjects, evaluate, train

log = logging.getLogger("mmfuse")

DEFAULTS = {
    "gen-data": {"image_size": 32, "seed": 0, "signal": 0.8, "noise": 0.1},
    "embed": {"provider": "mock", "shots": 5, "llm_model": "gpt-4", "max_in_flight": 4},
    "train": {
        "epochs": 50,
        "lr": 0.03,
        "batch": 16,
        "seed": 0,
        "d_model": 32,
        "heads": 2,
        "pos_mode": "sum",
        "stage3": "pooled",
    },
    "eval": {"split": "test"},
    "gradcheck": {"seed": 0, "coords": 3, "tol": 1e-3},
}
REQUIRED = {
    "gen-data": ("out", "per_class"),
    "embed": ("data",),
    "train": ("data", "task", "out"),
    "eval": ("model", "data", "task"),
    "gradcheck": (),
}


class UsageError(Exception):
    pass


def _add(p, *flags, **kw):
    kw.setdefault("default", None)
    p.add_argument(*flags, **kw)


def build_parser():
    parser = argparse.ArgumentParser(prog="mmfuse", description=__doc__.split("\n")[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate a synthetic dataset")
    _add(p, "--out")
    _add(p, "--per-class", type=int)
    _add(p, "--image-size", type=int)
    _add(p, "--seed", type=int)
    _add(p, "--signal", type=float)
    _add(p, "--noise", type=float)

    p = sub.add_parser("embed", help="embed every subject's non-image record")
    _add(p, "--data")
    _add(p, "--provider", choices=["mock", "http"])
    _add(p, "--shots", type=int, choices=[0, 1, 5])
    _add(p, "--cache", help="token cache file (default DATA/token_cache.tsv)")
    _add(p, "--url")
    _add(p, "--model", help="checkpoint whose image features go into the prompts")
    _add(p, "--llm-model", help="model name sent to the HTTP provider")
    _add(p, "--max-in-flight", type=int)

    p = sub.add_parser("train", help="train a classifier for one task")
    _add(p, "--data")
    _add(p, "--task", choices=sorted(TASKS))
    _add(p, "--epochs", type=int)
    _add(p, "--lr", type=float)
    _add(p, "--batch", type=int)
    _add(p, "--seed", type=int)
    _add(p, "--out")
    _add(p, "--d-model", type=int)
    _add(p, "--heads", type=int)
    _add(p, "--pos-mode", choices=["sum", "concat"])
    _add(p, "--stage3", choices=["pooled", "tokens"])

    p = sub.add_parser("eval", help="evaluate a trained model")
    _add(p, "--model")
    _add(p, "--data")
    _add(p, "--task", choices=sorted(TASKS))
    _add(p, "--json")
    _add(p, "--split", choices=["train", "val", "test", "all"])

    p = sub.add_parser("gradcheck", help="finite-difference check of the full model")
    _add(p, "--seed", type=int)
    _add(p, "--coords", type=int, help="coordinates checked per parameter tensor")
    _add(p, "--tol", type=float)

    for p in sub.choices.values():
        _add(p, "--config", help="key = value file; command-line flags override it")
    return parser


def read_config(path):
    values = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise UsageError(f"{path}:{lineno}: expected 'key = value'")
            key, value = (s.strip() for s in line.split("=", 1))
            values[key.replace("-", "_")] = value
    return values


def _merge_config(parser, args):
    subparser = parser._subparsers._group_actions[0].choices[args.command]
    actions = {a.dest: a for a in subparser._actions if a.dest not in ("help", "config")}
    if args.config:
        try:
            values = read_config(args.config)
        except OSError as exc:
            raise UsageError(f"cannot read config {args.config}: {exc}") from exc
        for key, raw in values.items():
            if key not in actions:
                raise UsageError(f"unknown config key {key!r} for {args.command}")
            action = actions[key]
            try:
                value = action.type(raw) if action.type else raw
            except ValueError as exc:
                raise UsageError(f"config key {key}: {exc}") from exc
            if action.choices is not None and value not in action.choices:
                raise UsageError(f"config key {key}: {value!r} not in {list(action.choices)}")
            if getattr(args, key) is None:
                setattr(args, key, value)
    for key, value in DEFAULTS[args.command].items():
        if getattr(args, key) is None:
            setattr(args, key, value)
    missing = [k for k in REQUIRED[args.command] if getattr(args, k) is None]
    if missing:
        raise UsageError("missing required " + ", ".join("--" + k.replace("_", "-") for k in missing))


# ------------------------------------------------------------------ commands


def cmd_gen_data(args):
    if args.per_class < 1:
        raise UsageError("--per-class must be >= 1")
    if args.image_size < 2:
        raise UsageError("--image-size must be >= 2")
    if not 0.0 <= args.signal <= 1.0:
        raise UsageError("--signal must lie in [0, 1]")
    config = SyntheticConfig(args.per_class, args.image_size, args.seed, args.signal, args.noise)
    entries = generate(config, args.out)
    counts = np.bincount([e.label for e in entries], minlength=4)
    print(f"wrote {len(entries)} subjects to {args.out} (per label NC/EMCI/LMCI/AD: {'/'.join(map(str, counts))})")
    return 0


def _subjects(root, entries, tokens):
    mri, pet = load_images(root, entries)
    return Subjects(
        [e.id for e in entries],
        np.array([e.label for e in entries], dtype=np.int64),
        mri,
        pet,
        np.array([tokens[e.id].values for e in entries], dtype=np.float32),
    )


def _image_summaries(model_path, root, entries):
    params, config = load_model(model_path)
    mri, pet = load_images(root, entries)
    summaries = {}
    for start in range(0, len(entries), 32):
        fused = image_features(mri[start : start + 32], pet[start : start + 32], params, config)
        for e, row in zip(entries[start : start + 32], fused.pooled.data):
            summaries[e.id] = image_summary(row, k=min(8, config.d_model))
    return summaries


def cmd_embed(args):
    if args.provider == "http":
        if not args.url:
            raise UsageError("--provider http requires --url")
        if not os.environ.get(API_KEY_ENV):
            raise UsageError(f"--provider http requires ${API_KEY_ENV}")
    if args.max_in_flight < 1:
        raise UsageError("--max-in-flight must be >= 1")
    entries = load_manifest(args.data)
    bank = load_shot_bank(args.data)
    spec = PromptSpec(shots=args.shots, include_image_summary=args.model is not None)
    if args.model:
        summaries = _image_summaries(args.model, args.data, entries)
    else:
        summaries = {e.id: None for e in entries}
    provider = MockProvider() if args.provider == "mock" else HttpProvider(args.url, model=args.llm_model)
    cache = TokenCache(args.cache or os.path.join(args.data, "token_cache.tsv"))
    tokens, failures = embed_many(
        [(e.record, summaries[e.id]) for e in entries], spec, provider, cache, bank, args.max_in_flight
    )
    print(f"provider calls: {provider.calls}")
    if failures:
        for rid in sorted(failures):
            print(f"failed {rid}: {failures[rid]}", file=sys.stderr)
        print(f"{len(failures)} subjects failed: {', '.join(sorted(failures))}", file=sys.stderr)
        return 1
    meta = {"provider": provider.name, "shots": args.shots, "image_summary": args.model is not None}
    write_embeddings(args.data, tokens, meta)
    print(f"embedded {len(tokens)} subjects ({provider.name}, {args.shots} shot)")
    return 0


def _require_tokens(entries, tokens):
    for e in entries:
        if e.id not in tokens:
            raise MMFuseError(f"no embedding for subject {e.id}; run 'mmfuse embed' first")


def cmd_train(args):
    if args.epochs < 1 or args.lr < 0 or args.batch < 1:
        raise UsageError("need --epochs >= 1, --lr >= 0, --batch >= 1")
    if args.heads < 1 or args.d_model < args.heads:
        raise UsageError("need --heads >= 1 and --d-model >= --heads")
    task = get_task(args.task)
    entries = load_manifest(args.data)
    tokens, meta = read_embeddings(args.data)
    _require_tokens(entries, tokens)
    train_entries, _, _ = split(entries, seed=args.seed)
    data = _subjects(args.data, train_entries, tokens)
    config = ModelConfig(
        num_classes=task.num_classes,
        d_model=args.d_model,
        heads=args.heads,
        image_size=data.mri.shape[-1],
        pos_mode=args.pos_mode,
        stage3_input=args.stage3,
    )
    params = init_model(config, args.seed)
    hyper = Hyperparams(args.epochs, args.lr, args.batch, args.seed)
    train(params, config, data, task, hyper, on_epoch=lambda e: print(f"epoch {e.epoch:3d}  loss {e.loss:.4f}  acc {e.acc:.4f}"))
    run_meta = {"task": task.name, "split_seed": args.seed, "embedding": meta, "hyper": vars(hyper)}
    save_model(params, config, args.out, meta=run_meta)
    print(f"saved {args.out}")
    return 0


def cmd_eval(args):
    task = get_task(args.task)
    params, config, meta = load_model(args.model, with_meta=True)
    if config.num_classes != task.num_classes:
        raise MMFuseError(
            f"model has num_classes={config.num_classes} but task {task.name} needs {task.num_classes}"
        )
    entries = load_manifest(args.data)
    tokens, emb_meta = read_embeddings(args.data)
    _require_tokens(entries, tokens)
    if args.split != "all":
        parts = dict(zip(("train", "val", "test"), split(entries, seed=meta.get("split_seed", 0))))
        entries = parts[args.split]
    metrics = evaluate(params, config, _subjects(args.data, entries, tokens), task)
    entry = ReportEntry(task.name, emb_meta.get("provider", "unknown"), emb_meta.get("shots", -1), metrics)
    text, doc = report([entry])
    print(text)
    if args.json:
        with open(args.json, "w", encoding="utf-8") as fh:
            json.dump(doc, fh, indent=2, sort_keys=True)
            fh.write("\n")
    return 0


def gradcheck_setup(seed):
    """Tiny full model (image 8, d_model 8, 2 heads) with random inputs and labels."""
    config = ModelConfig(num_classes=4, d_model=8, heads=2, image_size=8, mlp_hidden=(16, 8))
    params = init_model(config, seed)
    rng = Rng(seed + 1)
    mri = rng.uniform(0.0, 1.0, size=(2, 1, 8, 8))
    pet = rng.uniform(0.0, 1.0, size=(2, 1, 8, 8))
    tok = rng.uniform(-0.3, 0.3, size=(2, 64))
    labels = [rng.randbelow(4) for _ in range(2)]

    def loss():
        return T.cross_entropy(forward(mri, pet, tok, params, config), labels)

    return loss, parameters(params)


def cmd_gradcheck(args):
    start = time.perf_counter()
    loss, named = gradcheck_setup(args.seed)
    result = gradcheck_report(loss, named, coords_per_param=args.coords, seed=args.seed)
    elapsed = time.perf_counter() - start
    ok = result.max_error < args.tol
    print(f"checked {len(named)} parameter tensors in {elapsed:.1f}s")
    print(f"max relative error {result.max_error:.3e} (worst: {result.worst})")
    print("PASS" if ok else f"FAIL: exceeds tolerance {args.tol:g}")
    return 0 if ok else 1


COMMANDS = {
    "gen-data": cmd_gen_data,
    "embed": cmd_embed,
    "train": cmd_train,
    "eval": cmd_eval,
    "gradcheck": cmd_gradcheck,
}


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse usage errors exit with 2
        return exc.code
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        _merge_config(parser, args)
        return COMMANDS[args.command](args)
    except (UsageError, ConfigurationError) as exc:
        parser.print_usage(sys.stderr)
        print(f"mmfuse: error: {exc}", file=sys.stderr)
        return 2
    except (MMFuseError, OSError) as exc:
        print(f"mmfuse: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
