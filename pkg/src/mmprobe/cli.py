"""Command-line entry point.

Every subcommand resolves its flags (environment variables prefixed PROBE_
supply defaults, explicit flags win), writes a run manifest before any
result file, then emits its reports. Exit codes: 0 success, 1 runtime
failure, 2 usage error.

Predictor specs:
  lexicon:PATH          JSON word->weight map, text-only sigmoid scorer
  patchint:THRESH       image-only dark-patch fraction scorer
  model:PATH            trained late-fusion parameters (see `train`)
  external:CMD          launch CMD and speak the stdio JSON protocol
  fusion:ALPHA:K:A:SPEC alpha-blend of K:A (colon-free arg) and SPEC
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from . import __version__
from .data_model import (
    load_confounders,
    load_dataset,
    save_confounders,
    save_dataset,
)
from .errors import ProbeError
from .harness import (
    CAPTION_MODES,
    DomainSpec,
    caption_effect_experiment,
    config_hash,
    confounder_eval,
    cross_domain_matrix,
    generate_confounder_groups,
    generate_domain,
    modality_report,
    write_json,
    write_text,
)
from .metrics import krippendorff_alpha, load_annotation_matrix, macro_f1
from .predictor import (
    ModelParams,
    TrainConfig,
    classify,
    external_predictor,
    late_fusion_fixed,
    lexicon_predictor,
    patch_intensity_predictor,
    train_late_fusion,
    trained_predictor,
)
from .segmentation import MaskPolicy, as_masked
from .shapley import MCConfig


class CLIUsageError(Exception):
    pass


def _env(key: str) -> str | None:
    return os.environ.get("PROBE_" + key)


def _add(parser, flag: str, *, required: bool = False, default=None, type=None, **kw):
    """add_argument with a PROBE_* environment default (flag wins)."""
    key = flag.lstrip("-").replace("-", "_").upper()
    env = _env(key)
    if env is not None:
        default = type(env) if type is not None else env
        required = False
    parser.add_argument(flag, required=required, default=default, type=type, **kw)


def parse_predictor_spec(spec: str, workers: int = 1, timeout: float = 30.0):
    """Build a predictor from the spec mini-language (see module docstring)."""
    kind, sep, rest = spec.partition(":")
    if not sep or not rest:
        raise CLIUsageError(f"predictor spec must be KIND:ARGS, got {spec!r}")
    if kind == "lexicon":
        with open(rest, "r", encoding="utf-8") as fh:
            lex = json.load(fh)
        if not isinstance(lex, dict):
            raise CLIUsageError(f"lexicon file {rest!r} must hold a JSON object")
        return lexicon_predictor({str(k): float(v) for k, v in lex.items()})
    if kind == "patchint":
        try:
            return patch_intensity_predictor(float(rest))
        except ValueError as exc:
            raise CLIUsageError(f"bad patchint threshold {rest!r}: {exc}") from exc
    if kind == "model":
        return trained_predictor(ModelParams.load(rest))
    if kind == "external":
        return external_predictor(rest, timeout=timeout, pool_size=workers)
    if kind == "fusion":
        alpha_s, _, tail = rest.partition(":")
        k1, s1, r1 = tail.partition(":")
        a1, s2, spec2 = r1.partition(":")
        if not s1 or not s2 or not spec2:
            raise CLIUsageError("fusion spec must be fusion:ALPHA:KIND1:ARG1:SPEC2")
        if k1 not in ("lexicon", "patchint", "model"):
            raise CLIUsageError(
                f"fusion's first component must have a colon-free argument, got kind {k1!r}"
            )
        try:
            alpha = float(alpha_s)
        except ValueError as exc:
            raise CLIUsageError(f"bad fusion alpha {alpha_s!r}") from exc
        first = parse_predictor_spec(f"{k1}:{a1}", workers, timeout)
        second = parse_predictor_spec(spec2, workers, timeout)
        return late_fusion_fixed(alpha, first, second)
    raise CLIUsageError(f"unknown predictor kind {kind!r}")


def _flags_dict(args: argparse.Namespace) -> dict:
    out = {}
    for k, v in sorted(vars(args).items()):
        if k in ("func", "command"):
            continue
        out[k] = str(v) if isinstance(v, Path) else v
    return out


def _write_manifest(out_dir: Path, command: str, args: argparse.Namespace,
                    seeds: list[int], outputs: list[str]) -> str:
    """Write the run manifest (before any result file) and return the config
    hash that result file names embed."""
    flags = _flags_dict(args)
    h = config_hash({"command": command, "flags": flags, "seeds": seeds})
    out_dir.mkdir(parents=True, exist_ok=True)
    write_json(
        out_dir / f"manifest_{h}.json",
        {
            "command": command,
            "flags": flags,
            "seeds": seeds,
            "config_hash": h,
            "tool_version": __version__,
            "outputs": outputs,
        },
    )
    return h


def _precompute_hash(command: str, args: argparse.Namespace, seeds: list[int]) -> str:
    return config_hash({"command": command, "flags": _flags_dict(args), "seeds": seeds})


# --- subcommands -------------------------------------------------------------


def cmd_gen(args) -> int:
    out_path = Path(args.out)
    if args.confounders:
        h = _write_manifest(out_path.parent, "gen", args, [args.seed], [out_path.name])
        groups = generate_confounder_groups(args.confounders, seed=args.seed)
        save_confounders(groups, out_path)
    else:
        if not args.spec:
            raise CLIUsageError("gen needs --spec (or --confounders N)")
        with open(args.spec, "r", encoding="utf-8") as fh:
            spec = DomainSpec.from_dict(json.load(fh))
        h = _write_manifest(out_path.parent, "gen", args, [spec.seed], [out_path.name])
        save_dataset(generate_domain(spec), out_path)
    print(f"wrote {out_path} (manifest {h})")
    return 0


def cmd_shapley(args) -> int:
    out_dir = Path(args.out)
    h = _precompute_hash("shapley", args, [args.seed])
    tag = f"{h}_seed{args.seed}"
    _write_manifest(out_dir, "shapley", args, [args.seed],
                    [f"modality_{tag}.json", "samples/"])
    dataset = load_dataset(args.dataset)
    handle = parse_predictor_spec(args.predictor, args.workers, args.timeout)
    try:
        report = modality_report(
            dataset,
            handle,
            MCConfig(samples=args.samples, seed=args.seed),
            sample_cap=args.cap,
            policy=MaskPolicy(fill=args.policy),
            mode=args.mode,
            out_dir=out_dir,
            workers=args.workers,
            run_tag=tag,
        )
    finally:
        handle.close()
    agg = report.aggregate
    mean = "undefined" if agg.mean_ts_magnitude is None else f"{agg.mean_ts_magnitude:.4f}"
    print(f"mean TS {mean} over {agg.count} samples ({agg.excluded} excluded); "
          f"report {report.report_path}")
    return 0


def _train_config(args) -> TrainConfig:
    return TrainConfig(
        epochs=args.epochs,
        learning_rate=args.learning_rate,
        weight_decay=args.weight_decay,
        batch_size=args.batch_size,
        seed=args.seed,
        hash_dim=args.hash_dim,
    )


def _add_train_flags(p) -> None:
    _add(p, "--epochs", type=int, default=200, help="training epochs")
    _add(p, "--learning-rate", type=float, default=0.1, help="gradient-descent step size")
    _add(p, "--weight-decay", type=float, default=1e-3, help="L2 penalty strength")
    _add(p, "--batch-size", type=int, default=0, help="mini-batch size (0 = full batch)")
    _add(p, "--hash-dim", type=int, default=1024, help="text hashing buckets")


def cmd_matrix(args) -> int:
    out_dir = Path(args.out)
    h = _precompute_hash("matrix", args, [args.seed])
    tag = f"{h}_seed{args.seed}"
    _write_manifest(out_dir, "matrix", args, [args.seed],
                    [f"matrix_{tag}.csv", f"matrix_{tag}.json"])
    datasets = [load_dataset(p) for p in args.datasets.split(",")]
    report = cross_domain_matrix(datasets, _train_config(args),
                                 caption_mode=args.caption_mode, split_seed=args.seed)
    write_text(out_dir / f"matrix_{tag}.csv", report.to_csv_text())
    write_json(out_dir / f"matrix_{tag}.json", report.to_dict())
    print(f"wrote matrix_{tag}.csv in {out_dir}")
    return 0


def cmd_caption_effect(args) -> int:
    out_dir = Path(args.out)
    h = _precompute_hash("caption-effect", args, [args.seed])
    tag = f"{h}_seed{args.seed}"
    outputs = [f"matrix_{mode}_{tag}.csv" for mode in CAPTION_MODES]
    outputs.append(f"caption_effect_{tag}.json")
    _write_manifest(out_dir, "caption-effect", args, [args.seed], outputs)
    datasets = [load_dataset(p) for p in args.datasets.split(",")]
    report = caption_effect_experiment(datasets, _train_config(args), split_seed=args.seed)
    for mode, rep in report.reports.items():
        write_text(out_dir / f"matrix_{mode}_{tag}.csv", rep.to_csv_text())
    write_json(out_dir / f"caption_effect_{tag}.json", report.to_dict())
    print(f"wrote caption_effect_{tag}.json in {out_dir}")
    return 0


def cmd_confounder(args) -> int:
    out_dir = Path(args.out)
    h = _precompute_hash("confounder", args, [args.seed])
    tag = f"{h}_seed{args.seed}"
    _write_manifest(out_dir, "confounder", args, [args.seed], [f"confounder_{tag}.json"])
    groups = load_confounders(args.groups)
    handle = parse_predictor_spec(args.predictor, args.workers, args.timeout)
    try:
        report = confounder_eval(handle, groups)
    finally:
        handle.close()
    write_json(out_dir / f"confounder_{tag}.json", report.to_dict())
    print(f"delta F1 (T vs I) = {report.delta_f1_text_image:.4f}; "
          f"extended = {report.delta_f1_extended:.4f}")
    return 0


def cmd_train(args) -> int:
    out_dir = Path(args.out)
    h = _precompute_hash("train", args, [args.seed])
    tag = f"{h}_seed{args.seed}"
    _write_manifest(out_dir, "train", args, [args.seed], [f"model_{tag}.json"])
    dataset = load_dataset(args.dataset)
    params = train_late_fusion(dataset, _train_config(args))
    model_path = out_dir / f"model_{tag}.json"
    params.save(model_path)
    print(f"wrote {model_path}")
    return 0


def cmd_eval(args) -> int:
    out_dir = Path(args.out)
    h = _precompute_hash("eval", args, [args.seed])
    tag = f"{h}_seed{args.seed}"
    _write_manifest(out_dir, "eval", args, [args.seed], [f"eval_{tag}.json"])
    dataset = load_dataset(args.dataset)
    handle = parse_predictor_spec(args.predictor, args.workers, args.timeout)
    try:
        gold = [m.label for m in dataset]
        pred = [classify(handle, as_masked(m)) for m in dataset]
    finally:
        handle.close()
    outcome = macro_f1(gold, pred)
    payload = {"dataset": dataset.name, **outcome.to_dict()}
    write_json(out_dir / f"eval_{tag}.json", payload)
    print(f"macro F1 {outcome.macro_f1:.4f} on {dataset.name} (n={outcome.n})")
    return 0


def cmd_agreement(args) -> int:
    out_dir = Path(args.out)
    h = _precompute_hash("agreement", args, [])
    _write_manifest(out_dir, "agreement", args, [], [f"agreement_{h}.json"])
    matrix = load_annotation_matrix(args.csv)
    alpha = krippendorff_alpha(matrix)
    write_json(
        out_dir / f"agreement_{h}.json",
        {"alpha": alpha, "n_raters": len(matrix),
         "n_items": max((len(r) for r in matrix), default=0)},
    )
    print(f"alpha {alpha:.4f}")
    return 0


_CHECK_FIXTURES = (
    ("all hands on deck", 4, 4, bytes(range(16))),
    ("[MASK] check line", 3, 2, b"\x00\x80\xff\x10\x20\x30"),
    ("a b c d e", 5, 5, bytes((7 * i) % 256 for i in range(25))),
)


def cmd_bridge_check(args) -> int:
    from .data_model import GrayImage
    from .segmentation import MaskedMeme
    import numpy as np

    if args.out:
        _write_manifest(Path(args.out), "bridge-check", args, [], [])
    handle = external_predictor(args.cmd, timeout=args.timeout)
    try:
        for text, w, hgt, raw in _CHECK_FIXTURES:
            img = GrayImage(np.frombuffer(raw, dtype=np.uint8).reshape(hgt, w))
            score = handle.predict(MaskedMeme(text=text, image=img))
            print(f"ok: {text!r} -> {score}")
    finally:
        handle.close()
    print(f"bridge {handle.name!r} conforms")
    return 0


# --- parser -------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mmprobe",
        description="Modality attribution and evaluation for text+image classifiers.",
        formatter_class=argparse.ArgumentDefaultsHelpFormatter,
        epilog=__doc__.split("Predictor specs:")[1] if __doc__ else None,
    )
    parser.add_argument("--version", action="version", version=f"mmprobe {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p, with_predictor=True):
        _add(p, "--out", required=True, help="output directory")
        _add(p, "--seed", type=int, default=0, help="run seed (embedded in file names)")
        _add(p, "--workers", type=int, default=1, help="max concurrent predictor calls")
        _add(p, "--timeout", type=float, default=30.0, help="external predictor timeout (s)")
        if with_predictor:
            _add(p, "--predictor", required=True, help="predictor spec (see epilog)")

    p = sub.add_parser("gen", help="generate a synthetic dataset or confounder file",
                       formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    _add(p, "--spec", help="DomainSpec JSON file")
    _add(p, "--confounders", type=int, default=0,
         help="generate this many confounder groups instead of a dataset")
    _add(p, "--seed", type=int, default=0, help="seed for --confounders")
    _add(p, "--out", required=True, help="output JSONL path")
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("shapley", help="per-sample attribution and modality report",
                       formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    _add(p, "--dataset", required=True, help="dataset JSONL path")
    _add(p, "--mode", choices=("exact", "mc"), default="mc", help="attribution engine")
    _add(p, "--samples", type=int, default=100, help="Monte Carlo P parameter")
    _add(p, "--policy", choices=("zero", "gray", "mean"), default="gray",
         help="masked-patch fill policy")
    _add(p, "--cap", type=int, default=50, help="max samples attributed (0 = all)")
    add_common(p)
    p.set_defaults(func=cmd_shapley)

    p = sub.add_parser("matrix", help="cross-domain train/test macro-F1 matrix",
                       formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    _add(p, "--datasets", required=True, help="comma-separated dataset JSONL paths")
    _add(p, "--caption-mode", choices=CAPTION_MODES, default="off",
         help="where captions are appended")
    _add_train_flags(p)
    add_common(p, with_predictor=False)
    p.set_defaults(func=cmd_matrix)

    p = sub.add_parser("caption-effect", help="2x2 caption on/off experiment",
                       formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    _add(p, "--datasets", required=True, help="comma-separated dataset JSONL paths")
    _add_train_flags(p)
    add_common(p, with_predictor=False)
    p.set_defaults(func=cmd_caption_effect)

    p = sub.add_parser("confounder", help="confounder sensitivity evaluation",
                       formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    _add(p, "--groups", required=True, help="confounder JSONL path")
    add_common(p)
    p.set_defaults(func=cmd_confounder)

    p = sub.add_parser("train", help="train the late-fusion model",
                       formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    _add(p, "--dataset", required=True, help="training dataset JSONL path")
    _add_train_flags(p)
    add_common(p, with_predictor=False)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="classify a dataset and report metrics",
                       formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    _add(p, "--dataset", required=True, help="dataset JSONL path")
    add_common(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("agreement", help="Krippendorff alpha from an annotation CSV",
                       formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    _add(p, "--csv", required=True, help="raters-as-rows annotation CSV")
    _add(p, "--out", required=True, help="output directory")
    p.set_defaults(func=cmd_agreement)

    p = sub.add_parser("bridge-check", help="protocol conformance check for a bridge",
                       formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    _add(p, "--cmd", required=True, help="bridge launch command")
    _add(p, "--timeout", type=float, default=30.0, help="response timeout (s)")
    _add(p, "--out", help="optional manifest directory")
    p.set_defaults(func=cmd_bridge_check)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except CLIUsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 2
    except ProbeError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
