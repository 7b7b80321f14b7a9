"""Per-entity Shapley attribution and modality contribution scores.

Two estimators over the same coalition game f(masked meme):

* exact: evaluates all 2**n coalitions and accumulates the classical
  weighted marginal contributions; this is the ground-truth engine.
* monte_carlo: for each entity draws 2P+1 coalitions not containing it,
  with sizes cycling 1..n-1, and averages the marginal contributions
  (normalizer gamma = 2P+1).

Coalitions are encoded as bitmask ints: bit t set = entity t unmasked.
"""

from __future__ import annotations

import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import _kernels
from .data_model import Meme
from .errors import (
    AllZeroAttributionError,
    EmptyInputError,
    LengthMismatchError,
    TooManyEntitiesError,
)
from .predictor import Predictor
from .segmentation import (
    DEFAULT_POLICY,
    EntityIndex,
    MaskPolicy,
    entity_universe,
    materialize,
    patch_grid,
    tokenize,
)

MAX_EXACT_ENTITIES = 14


@dataclass(frozen=True)
class MCConfig:
    """Monte Carlo settings; ``samples`` is the P parameter, so each entity
    accumulates 2P+1 marginal contributions."""

    samples: int
    seed: int = 0

    def __post_init__(self):
        if self.samples < 1:
            raise ValueError("samples (P) must be >= 1")

    @property
    def draws(self) -> int:
        return 2 * self.samples + 1


@dataclass
class ShapleyResult:
    """Per-entity attribution plus the audit anchors f(empty) and f(all)."""

    phi: np.ndarray
    entity_index: EntityIndex
    mode: str
    baseline: float
    full_value: float
    samples: int | None = None
    seed: int | None = None

    @property
    def token_phi(self) -> np.ndarray:
        return self.phi[: self.entity_index.num_text]

    @property
    def patch_phi(self) -> np.ndarray:
        return self.phi[self.entity_index.num_text :]


@dataclass(frozen=True)
class ModalityScore:
    """Share of attribution mass per modality.

    ``ts_magnitude`` uses absolute values and always lies in [0, 1] with
    ts_magnitude + is_magnitude == 1; ``ts_signed`` divides raw sums and is
    None when the signed total is zero.
    """

    ts_magnitude: float
    is_magnitude: float
    ts_signed: float | None


@dataclass(frozen=True)
class ModalityAggregate:
    """Dataset-level mean scores; samples with all-zero attribution are
    excluded from the means and counted."""

    mean_ts_magnitude: float | None
    mean_ts_signed: float | None
    count: int
    excluded: int


def shapley_size_weights(n: int) -> np.ndarray:
    """w[k] = k! (n-k-1)! / n! for coalition sizes k = 0..n-1."""
    fact_n = math.factorial(n)
    return np.array(
        [math.factorial(k) * math.factorial(n - k - 1) / fact_n for k in range(n)],
        dtype=np.float64,
    )


def mask_bits(mask_int: int, n: int) -> np.ndarray:
    return np.array([(mask_int >> i) & 1 for i in range(n)], dtype=bool)


class MemeGame:
    """Memoized coalition value function binding (predictor, meme, policy)."""

    def __init__(self, predictor: Predictor, meme: Meme,
                 policy: MaskPolicy = DEFAULT_POLICY, workers: int = 1):
        self.predictor = predictor
        self.meme = meme
        self.policy = policy
        self.workers = max(1, workers)
        self.index = entity_universe(meme)
        self.n = self.index.total
        self._memo: dict[int, float] = {}

    def _compute(self, mask_int: int) -> float:
        masked = materialize(self.meme, mask_bits(mask_int, self.n), self.policy)
        return self.predictor.predict(masked)

    def value(self, mask_int: int) -> float:
        v = self._memo.get(mask_int)
        if v is None:
            v = self._compute(mask_int)
            self._memo[mask_int] = v
        return v

    def evaluate(self, mask_ints) -> None:
        """Fill the memo for the given coalitions, possibly concurrently.

        The result is independent of evaluation order: values land keyed by
        coalition, and all accumulation happens afterwards in fixed order.
        """
        todo = [m for m in dict.fromkeys(mask_ints) if m not in self._memo]
        if self.workers <= 1 or len(todo) <= 1:
            for m in todo:
                self.value(m)
            return
        with ThreadPoolExecutor(max_workers=self.workers) as ex:
            for m, v in zip(todo, ex.map(self._compute, todo)):
                self._memo[m] = v


def exact_shapley_values(value_fn, n: int) -> np.ndarray:
    """Exact attribution of a coalition game given as value_fn(mask_int)."""
    if n > MAX_EXACT_ENTITIES:
        raise TooManyEntitiesError(n, MAX_EXACT_ENTITIES)
    values = np.fromiter((value_fn(m) for m in range(1 << n)), dtype=np.float64, count=1 << n)
    return _kernels.exact_phi_from_table(
        values, n, shapley_size_weights(n), _kernels.popcount_table(n)
    )


def mc_shapley_plan(n: int, cfg: MCConfig) -> list[list[int]]:
    """Draw the full coalition plan up front: for entity t, 2P+1 coalitions
    without t, the i-th of size ((i-1) mod (n-1)) + 1, each sampled
    uniformly without replacement within the draw. Deterministic in the seed."""
    if n < 2:
        raise ValueError("Monte Carlo estimation needs at least 2 entities")
    rng = np.random.default_rng(cfg.seed)
    plan: list[list[int]] = []
    for t in range(n):
        others = [e for e in range(n) if e != t]
        masks = []
        for i in range(cfg.draws):
            k = (i % (n - 1)) + 1
            chosen = rng.choice(n - 1, size=k, replace=False)
            mask = 0
            for j in chosen:
                mask |= 1 << others[j]
            masks.append(mask)
        plan.append(masks)
    return plan


def mc_shapley_values(value_fn, n: int, cfg: MCConfig, prefetch=None) -> np.ndarray:
    """Monte Carlo attribution; phi[t] is the mean of the sampled marginal
    contributions f(S + t) - f(S) over the plan (gamma = 2P+1)."""
    plan = mc_shapley_plan(n, cfg)
    if prefetch is not None:
        needed = []
        for t, masks in enumerate(plan):
            bit = 1 << t
            for m in masks:
                needed.append(m)
                needed.append(m | bit)
        prefetch(needed)
    phi = np.zeros(n, dtype=np.float64)
    for t, masks in enumerate(plan):
        bit = 1 << t
        acc = 0.0
        for m in masks:
            acc += value_fn(m | bit) - value_fn(m)
        phi[t] = acc / cfg.draws
    return phi


def exact_shapley(f: Predictor, meme: Meme, policy: MaskPolicy = DEFAULT_POLICY,
                  workers: int = 1) -> ShapleyResult:
    """Exact per-entity attribution; needs 2**n model calls, guarded at
    n <= 14. Efficiency holds by construction: sum(phi) = f(all) - f(empty)."""
    game = MemeGame(f, meme, policy, workers)
    if game.n > MAX_EXACT_ENTITIES:
        raise TooManyEntitiesError(game.n, MAX_EXACT_ENTITIES)
    game.evaluate(range(1 << game.n))
    values = np.fromiter((game.value(m) for m in range(1 << game.n)),
                         dtype=np.float64, count=1 << game.n)
    phi = _kernels.exact_phi_from_table(
        values, game.n, shapley_size_weights(game.n), _kernels.popcount_table(game.n)
    )
    return ShapleyResult(
        phi=phi,
        entity_index=game.index,
        mode="exact",
        baseline=float(values[0]),
        full_value=float(values[-1]),
    )


def mc_shapley(f: Predictor, meme: Meme, cfg: MCConfig,
               policy: MaskPolicy = DEFAULT_POLICY, workers: int = 1) -> ShapleyResult:
    """Monte Carlo per-entity attribution, deterministic given cfg.seed."""
    game = MemeGame(f, meme, policy, workers)
    phi = mc_shapley_values(game.value, game.n, cfg, prefetch=game.evaluate)
    game.evaluate([0, (1 << game.n) - 1])
    return ShapleyResult(
        phi=phi,
        entity_index=game.index,
        mode="monte_carlo",
        baseline=game.value(0),
        full_value=game.value((1 << game.n) - 1),
        samples=cfg.samples,
        seed=cfg.seed,
    )


def modality_score(result: ShapleyResult) -> ModalityScore:
    """Aggregate a result into text/image contribution shares."""
    total_mag = float(np.abs(result.phi).sum())
    if total_mag == 0.0:
        raise AllZeroAttributionError("all attributions are zero; contribution share undefined")
    ts_mag = float(np.abs(result.token_phi).sum()) / total_mag
    total_signed = float(result.phi.sum())
    ts_signed = float(result.token_phi.sum()) / total_signed if total_signed != 0.0 else None
    return ModalityScore(ts_magnitude=ts_mag, is_magnitude=1.0 - ts_mag, ts_signed=ts_signed)


def aggregate_modality(results: list[ShapleyResult]) -> ModalityAggregate:
    """Arithmetic mean of per-sample ts_magnitude (and ts_signed where
    defined); AllZeroAttribution samples are excluded and counted."""
    if not results:
        raise EmptyInputError("no attribution results to aggregate")
    mags: list[float] = []
    signeds: list[float] = []
    excluded = 0
    for r in results:
        try:
            score = modality_score(r)
        except AllZeroAttributionError:
            excluded += 1
            continue
        mags.append(score.ts_magnitude)
        if score.ts_signed is not None:
            signeds.append(score.ts_signed)
    return ModalityAggregate(
        mean_ts_magnitude=sum(mags) / len(mags) if mags else None,
        mean_ts_signed=sum(signeds) / len(signeds) if signeds else None,
        count=len(mags),
        excluded=excluded,
    )


def _ramp_color(t: float) -> tuple[int, int, int]:
    return int(round(255.0 * (1.0 - t))), int(round(255.0 * t)), 0


def render_attribution(result: ShapleyResult, meme: Meme, out_dir,
                       stem: str | None = None) -> dict[str, Path]:
    """Write a per-patch red->green heat map (P6 PPM) and a token CSV.

    Patch tints normalize phi over the patch entities to [min, max]; a flat
    profile tints everything mid-ramp. The CSV rows are token, phi, rank
    with rank 1 for the highest phi.
    """
    tokens = tokenize(meme.text)
    if result.entity_index.num_text != len(tokens.tokens):
        raise LengthMismatchError("attribution result does not match the meme's entities")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    if stem is None:
        stem = "".join(c if c.isalnum() or c in "-_." else "_" for c in meme.id)

    grid = patch_grid(meme.image, len(tokens.tokens))
    patch_phi = result.patch_phi
    lo, hi = float(patch_phi.min()), float(patch_phi.max())
    rgb = np.zeros((meme.image.height, meme.image.width, 3), dtype=np.uint8)
    for k, (r0, r1, c0, c1) in enumerate(grid.rects()):
        t = 0.5 if hi == lo else (float(patch_phi[k]) - lo) / (hi - lo)
        rgb[r0:r1, c0:c1] = _ramp_color(t)
    heat_path = out_dir / f"{stem}.ppm"
    header = f"P6\n{meme.image.width} {meme.image.height}\n255\n".encode("ascii")
    heat_path.write_bytes(header + rgb.tobytes())

    token_phi = result.token_phi
    order = np.argsort(-token_phi, kind="stable")
    rank = np.empty(len(order), dtype=int)
    rank[order] = np.arange(1, len(order) + 1)
    csv_path = out_dir / f"{stem}_tokens.csv"
    with csv_path.open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["token", "phi", "rank"])
        for i, tok in enumerate(tokens.tokens):
            writer.writerow([tok, repr(float(token_phi[i])), int(rank[i])])
    return {"heatmap": heat_path, "tokens": csv_path}
