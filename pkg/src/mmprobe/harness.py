"""Desk-scale experiment protocols over synthetic domains.

Each protocol is deterministic given (datasets, seeds, config): cross-domain
train/test matrices, the 2x2 caption-effect design, confounder sensitivity,
and dataset-level modality reports. The synthetic-domain generator makes
every protocol runnable without external data, with controllable lexicons,
image motifs and caption informativeness.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, replace
from pathlib import Path

import numpy as np

from .data_model import (
    ConfounderGroup,
    GrayImage,
    LabeledDataset,
    Meme,
    augment_with_caption,
    build_confounder_eval_sets,
)
from .errors import EmptyInputError, InvalidSpecError, MissingCaptionsError
from .metrics import EvalOutcome, delta_f1, macro_f1
from .predictor import Predictor, TrainConfig, classify, train_late_fusion, trained_predictor
from .segmentation import DEFAULT_POLICY, MaskPolicy, as_masked, entity_universe
from .shapley import (
    MCConfig,
    ModalityAggregate,
    ShapleyResult,
    aggregate_modality,
    exact_shapley,
    mc_shapley,
    modality_score,
    render_attribution,
)
from .errors import AllZeroAttributionError

CAPTION_MODES = ("off", "train", "test", "both")

_CAPTION_WORDS = {
    "hate": (("dark", "shadowy", "grim", "looming"), ("figure", "silhouette", "shape")),
    "benign": (("bright", "sunny", "calm", "open"), ("field", "sky", "garden", "scene")),
    "noise": (("plain", "simple", "round", "small"), ("box", "circle", "sign", "note")),
}


@dataclass(frozen=True)
class DomainSpec:
    """Parameters of one synthetic domain.

    Hateful samples draw words from the hate lexicon (plus benign filler)
    and the hate image motif; the benign class mirrors that. ``noise_rate``
    flips that fraction of labels. ``caption_style`` is "motif" for
    class-informative captions or "noise" for class-uninformative ones.
    """

    name: str
    hate_lexicon: dict[str, float]
    benign_lexicon: dict[str, float]
    n_samples: int
    noise_rate: float = 0.0
    seed: int = 0
    image_size: int = 12
    hate_intensity: float = 60.0
    benign_intensity: float = 190.0
    intensity_jitter: float = 12.0
    words_per_text: int = 4
    caption_style: str = "motif"

    def __post_init__(self):
        if not self.name:
            raise InvalidSpecError("domain name must be non-empty")
        if not self.hate_lexicon or not self.benign_lexicon:
            raise InvalidSpecError("both lexicons must be non-empty")
        if set(self.hate_lexicon) & set(self.benign_lexicon):
            raise InvalidSpecError("hate and benign lexicons must be disjoint")
        if not 0.0 <= self.noise_rate < 0.5:
            raise InvalidSpecError("noise_rate must lie in [0, 0.5)")
        if self.n_samples < 2:
            raise InvalidSpecError("n_samples must be >= 2")
        if self.image_size < 4:
            raise InvalidSpecError("image_size must be >= 4")
        if self.words_per_text < 1:
            raise InvalidSpecError("words_per_text must be >= 1")
        if self.caption_style not in ("motif", "noise"):
            raise InvalidSpecError("caption_style must be motif or noise")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "DomainSpec":
        try:
            return cls(**d)
        except TypeError as exc:
            raise InvalidSpecError(str(exc)) from exc


def _caption(rng: np.random.Generator, kind: str) -> str:
    adjs, nouns = _CAPTION_WORDS[kind]
    return f"a {rng.choice(adjs)} {rng.choice(nouns)}"


def _motif_image(rng: np.random.Generator, size: int, base: float, jitter: float) -> GrayImage:
    pixels = np.clip(np.rint(base + rng.normal(0.0, jitter, (size, size))), 0, 255)
    return GrayImage(pixels.astype(np.uint8))


def generate_domain(spec: DomainSpec) -> LabeledDataset:
    """Deterministic synthetic dataset for one domain spec."""
    rng = np.random.default_rng(spec.seed)
    hate_words = sorted(spec.hate_lexicon)
    benign_words = sorted(spec.benign_lexicon)
    k = spec.words_per_text
    k_hate = max(1, k // 2)
    samples = []
    for i in range(spec.n_samples):
        label = 1 if i % 2 == 0 else 0
        if label == 1:
            words = list(rng.choice(hate_words, size=k_hate)) + list(
                rng.choice(benign_words, size=k - k_hate)
            )
            rng.shuffle(words)
            base = spec.hate_intensity
            caption_kind = "hate" if spec.caption_style == "motif" else "noise"
        else:
            words = list(rng.choice(benign_words, size=k))
            base = spec.benign_intensity
            caption_kind = "benign" if spec.caption_style == "motif" else "noise"
        samples.append(
            Meme(
                id=f"{spec.name}-{i:04d}",
                text=" ".join(words),
                image=_motif_image(rng, spec.image_size, base, spec.intensity_jitter),
                label=label,
                caption=_caption(rng, caption_kind),
            )
        )
    n_flips = int(round(spec.noise_rate * spec.n_samples))
    if n_flips:
        for idx in rng.choice(spec.n_samples, size=n_flips, replace=False):
            m = samples[idx]
            samples[idx] = replace(m, label=1 - m.label)
    return LabeledDataset(name=spec.name, samples=tuple(samples))


def make_domain_suite(k: int = 2, seed: int = 0, n_samples: int = 200,
                      noise_rate: float = 0.05, caption_style: str = "motif",
                      lexicon_size: int = 8) -> list[DomainSpec]:
    """Specs for k domains with pairwise-disjoint lexicons and alternating
    image-motif polarity (so neither modality transfers across domains)."""
    specs = []
    for d in range(k):
        hate = {f"h{d}w{i}": 2.0 for i in range(lexicon_size)}
        benign = {f"b{d}w{i}": -1.0 for i in range(lexicon_size)}
        dark_hate = d % 2 == 0
        specs.append(
            DomainSpec(
                name=f"domain{d}",
                hate_lexicon=hate,
                benign_lexicon=benign,
                n_samples=n_samples,
                noise_rate=noise_rate,
                seed=seed * 1000 + d,
                hate_intensity=60.0 if dark_hate else 190.0,
                benign_intensity=190.0 if dark_hate else 60.0,
                caption_style=caption_style,
            )
        )
    return specs


def generate_confounder_groups(n_groups: int, seed: int = 0, image_size: int = 12,
                               hate_words: tuple[str, ...] = ("vermin", "plague", "filth"),
                               benign_words: tuple[str, ...] = ("picnic", "garden", "sunny"),
                               figures: tuple[str, ...] = ("ada quorum", "bo riven",
                                                           "cal merid")) -> list[ConfounderGroup]:
    """Synthetic confounder groups: hateful originals (dark figure image),
    benign-text variants over the same image, and same-text variants over a
    swapped bright image. Both confounder roles are re-annotated benign."""
    if n_groups < 1:
        raise InvalidSpecError("n_groups must be >= 1")
    rng = np.random.default_rng(seed)
    groups = []
    for g in range(n_groups):
        figure = figures[g % len(figures)]
        hate_text = f"{rng.choice(hate_words)} {figure} {rng.choice(hate_words)}"
        benign_text = f"{rng.choice(benign_words)} {figure} {rng.choice(benign_words)}"
        dark = _motif_image(rng, image_size, 60.0, 10.0)
        bright = _motif_image(rng, image_size, 190.0, 10.0)
        celebs = tuple(figure.split()[:1])
        original = Meme(
            id=f"g{g:04d}-orig", text=hate_text, image=dark, label=1,
            caption=_caption(rng, "hate"), celebrities=celebs,
        )
        text_conf = Meme(
            id=f"g{g:04d}-text", text=benign_text, image=dark, label=0,
            caption=original.caption, celebrities=celebs,
        )
        image_conf = Meme(
            id=f"g{g:04d}-image", text=hate_text, image=bright, label=0,
            caption=_caption(rng, "benign"), celebrities=celebs,
        )
        groups.append(
            ConfounderGroup(
                group_id=f"g{g:04d}", original=original,
                text_confounder=text_conf, image_confounder=image_conf,
            )
        )
    return groups


# --- splitting --------------------------------------------------------------


def split_dataset(dataset: LabeledDataset, test_fraction: float = 0.2,
                  seed: int = 0) -> tuple[LabeledDataset, LabeledDataset]:
    """Seeded stratified split; sample order within each side follows the
    source dataset. Each class keeps at least one sample per side when it
    has two or more."""
    if not 0.0 < test_fraction < 1.0:
        raise ValueError("test_fraction must lie in (0, 1)")
    rng = np.random.default_rng(seed)
    test_idx: set[int] = set()
    for label in (0, 1):
        idxs = [i for i, m in enumerate(dataset) if m.label == label]
        if not idxs:
            continue
        n_test = int(round(test_fraction * len(idxs)))
        if len(idxs) >= 2:
            n_test = min(max(n_test, 1), len(idxs) - 1)
        perm = rng.permutation(len(idxs))
        test_idx.update(idxs[j] for j in perm[:n_test])
    train = tuple(m for i, m in enumerate(dataset) if i not in test_idx)
    test = tuple(m for i, m in enumerate(dataset) if i in test_idx)
    return (
        LabeledDataset(f"{dataset.name}-train", train),
        LabeledDataset(f"{dataset.name}-test", test),
    )


# --- cross-domain matrix ----------------------------------------------------


@dataclass(frozen=True)
class MatrixReport:
    """K x K grid of outcomes; rows are training sets, columns test sets,
    the diagonal is in-domain."""

    names: tuple[str, ...]
    grid: tuple[tuple[EvalOutcome, ...], ...]
    caption_mode: str
    split_seed: int

    def macro_grid(self) -> list[list[float]]:
        return [[cell.macro_f1 for cell in row] for row in self.grid]

    def diagonal(self) -> list[float]:
        return [self.grid[i][i].macro_f1 for i in range(len(self.names))]

    def off_diagonal(self) -> list[float]:
        return [
            self.grid[i][j].macro_f1
            for i in range(len(self.names))
            for j in range(len(self.names))
            if i != j
        ]

    def to_csv_text(self) -> str:
        lines = ["train\\test," + ",".join(self.names)]
        for name, row in zip(self.names, self.grid):
            lines.append(name + "," + ",".join(repr(cell.macro_f1) for cell in row))
        return "\n".join(lines) + "\n"

    def to_dict(self) -> dict:
        return {
            "names": list(self.names),
            "caption_mode": self.caption_mode,
            "split_seed": self.split_seed,
            "cells": [
                {
                    "train": self.names[i],
                    "test": self.names[j],
                    "in_domain": i == j,
                    **self.grid[i][j].to_dict(),
                }
                for i in range(len(self.names))
                for j in range(len(self.names))
            ],
        }


def _with_captions(samples, separator: str):
    return tuple(augment_with_caption(m, separator) for m in samples)


def cross_domain_matrix(datasets: list[LabeledDataset], cfg: TrainConfig = TrainConfig(),
                        caption_mode: str = "off", split_seed: int = 0,
                        separator: str = " ") -> MatrixReport:
    """Train one late-fusion model per row dataset and fill the full K x K
    macro-F1 grid over the test splits (80/20 seeded stratified)."""
    if caption_mode not in CAPTION_MODES:
        raise ValueError(f"caption_mode must be one of {CAPTION_MODES}")
    if len(datasets) < 2:
        raise InvalidSpecError("need at least two datasets")
    splits = [split_dataset(d, 0.2, split_seed) for d in datasets]
    caption_train = caption_mode in ("train", "both")
    caption_test = caption_mode in ("test", "both")
    grid = []
    for train_ds, _ in splits:
        samples = _with_captions(train_ds, separator) if caption_train else train_ds.samples
        params = train_late_fusion(LabeledDataset(train_ds.name, samples), cfg)
        handle = trained_predictor(params)
        row = []
        for _, test_ds in splits:
            memes = _with_captions(test_ds, separator) if caption_test else test_ds.samples
            gold = [m.label for m in memes]
            pred = [classify(handle, as_masked(m)) for m in memes]
            row.append(macro_f1(gold, pred))
        grid.append(tuple(row))
    return MatrixReport(
        names=tuple(d.name for d in datasets),
        grid=tuple(grid),
        caption_mode=caption_mode,
        split_seed=split_seed,
    )


# --- caption effect ---------------------------------------------------------


@dataclass(frozen=True)
class CaptionEffectReport:
    """The 2x2 design {train with/without captions} x {test with/without},
    stored per caption_mode, with per-cell deltas against the off/off cell."""

    reports: dict[str, MatrixReport]

    @property
    def names(self) -> tuple[str, ...]:
        return self.reports["off"].names

    def delta_vs_baseline(self, mode: str) -> list[list[float]]:
        base = self.reports["off"].macro_grid()
        other = self.reports[mode].macro_grid()
        return [
            [other[i][j] - base[i][j] for j in range(len(base))]
            for i in range(len(base))
        ]

    def to_dict(self) -> dict:
        return {
            "conditions": {mode: rep.to_dict() for mode, rep in self.reports.items()},
            "delta_vs_off": {mode: self.delta_vs_baseline(mode) for mode in CAPTION_MODES},
        }


def caption_effect_experiment(datasets: list[LabeledDataset],
                              cfg: TrainConfig = TrainConfig(), split_seed: int = 0,
                              separator: str = " ") -> CaptionEffectReport:
    """Run the full caption on/off design; the off/off cell shares the code
    path (and hence the exact result) of a plain cross_domain_matrix."""
    for d in datasets:
        for m in d:
            if not m.caption:
                raise MissingCaptionsError(f"sample {m.id!r} in {d.name!r} has no caption")
    reports = {
        mode: cross_domain_matrix(datasets, cfg, mode, split_seed, separator)
        for mode in CAPTION_MODES
    }
    return CaptionEffectReport(reports=reports)


# --- confounder sensitivity -------------------------------------------------


@dataclass(frozen=True)
class ConfounderReport:
    """Outcomes on the four confounder sets plus the two sensitivity gaps."""

    outcomes: dict[str, EvalOutcome]  # keys T, I, T_plus, I_plus
    delta_f1_text_image: float
    delta_f1_extended: float

    def to_dict(self) -> dict:
        return {
            "sets": {k: v.to_dict() for k, v in self.outcomes.items()},
            "delta_f1_T_vs_I": self.delta_f1_text_image,
            "delta_f1_Tplus_vs_Iplus": self.delta_f1_extended,
        }


def confounder_eval(handle: Predictor, groups: list[ConfounderGroup],
                    separator: str = " ") -> ConfounderReport:
    """Classify every meme in T, I and the extended sets; report macro-F1
    per set and the T-vs-I gaps."""
    sets = build_confounder_eval_sets(groups, separator)
    outcomes = {}
    for key, ds in (
        ("T", sets.text_set),
        ("I", sets.image_set),
        ("T_plus", sets.text_set_extended),
        ("I_plus", sets.image_set_extended),
    ):
        gold = [m.label for m in ds]
        pred = [classify(handle, as_masked(m)) for m in ds]
        outcomes[key] = macro_f1(gold, pred)
    return ConfounderReport(
        outcomes=outcomes,
        delta_f1_text_image=delta_f1(outcomes["T"], outcomes["I"]),
        delta_f1_extended=delta_f1(outcomes["T_plus"], outcomes["I_plus"]),
    )


# --- modality report --------------------------------------------------------

EXACT_AUTO_LIMIT = 12


@dataclass(frozen=True)
class ModalityRunReport:
    aggregate: ModalityAggregate
    samples: list[dict]
    report_path: Path | None
    artifact_paths: list[dict]

    def to_dict(self) -> dict:
        return {
            "aggregate": {
                "mean_ts_magnitude": self.aggregate.mean_ts_magnitude,
                "mean_ts_signed": self.aggregate.mean_ts_signed,
                "count": self.aggregate.count,
                "excluded": self.aggregate.excluded,
            },
            "samples": self.samples,
        }


def _sample_record(meme: Meme, result: ShapleyResult) -> dict:
    try:
        score = modality_score(result)
        ts_mag, ts_signed, excluded = score.ts_magnitude, score.ts_signed, False
    except AllZeroAttributionError:
        ts_mag, ts_signed, excluded = None, None, True
    return {
        "id": meme.id,
        "mode": result.mode,
        "P": result.samples,
        "seed": result.seed,
        "phi": [float(v) for v in result.phi],
        "ts_magnitude": ts_mag,
        "ts_signed": ts_signed,
        "baseline": result.baseline,
        "full_value": result.full_value,
        "excluded": excluded,
    }


def modality_report(dataset: LabeledDataset, handle: Predictor, mc: MCConfig,
                    sample_cap: int = 50, policy: MaskPolicy = DEFAULT_POLICY,
                    mode: str = "auto", out_dir=None, workers: int = 1,
                    run_tag: str = "run") -> ModalityRunReport:
    """Attribute up to ``sample_cap`` memes and aggregate their text shares.

    mode "auto" uses the exact engine when the entity count is at most 12
    and Monte Carlo otherwise; "exact"/"mc" force one engine. When out_dir
    is given, writes the JSON report plus per-sample heat maps and token
    CSVs, all named with the run tag.
    """
    if len(dataset) == 0:
        raise EmptyInputError("empty dataset")
    if mode not in ("auto", "exact", "mc"):
        raise ValueError("mode must be auto, exact or mc")
    memes = dataset.samples[:sample_cap] if sample_cap else dataset.samples
    results = []
    records = []
    artifacts = []
    for meme in memes:
        n = entity_universe(meme).total
        use_exact = mode == "exact" or (mode == "auto" and n <= EXACT_AUTO_LIMIT)
        if use_exact:
            result = exact_shapley(handle, meme, policy, workers)
        else:
            result = mc_shapley(handle, meme, mc, policy, workers)
        results.append(result)
        records.append(_sample_record(meme, result))
        if out_dir is not None:
            paths = render_attribution(result, meme, Path(out_dir) / "samples",
                                       stem=f"{meme.id}_{run_tag}")
            artifacts.append({k: str(v) for k, v in paths.items()})
    aggregate = aggregate_modality(results)
    report_path = None
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        report_path = out / f"modality_{run_tag}.json"
    report = ModalityRunReport(
        aggregate=aggregate, samples=records, report_path=report_path,
        artifact_paths=artifacts,
    )
    if report_path is not None:
        write_json(report_path, {"dataset": dataset.name, **report.to_dict()})
    return report


# --- report plumbing --------------------------------------------------------


def config_hash(obj) -> str:
    """Stable 8-hex-digit digest of a JSON-serializable configuration."""
    payload = json.dumps(obj, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()[:8]


def write_json(path, obj) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as fh:
        json.dump(obj, fh, sort_keys=True, indent=2)
        fh.write("\n")


def write_text(path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")
