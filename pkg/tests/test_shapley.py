import itertools

import numpy as np
import pytest

from mmprobe import (
    MCConfig,
    Meme,
    aggregate_modality,
    entity_universe,
    exact_shapley,
    exact_shapley_values,
    late_fusion_fixed,
    lexicon_predictor,
    mc_shapley,
    mc_shapley_values,
    modality_score,
    patch_intensity_predictor,
    render_attribution,
)
from mmprobe.errors import (
    AllZeroAttributionError,
    EmptyInputError,
    TooManyEntitiesError,
)
from mmprobe.segmentation import EntityIndex
from mmprobe.shapley import ShapleyResult, shapley_size_weights

from conftest import make_meme, random_meme


def permutation_shapley(value_fn, n):
    """Independent oracle: mean marginal contribution over all n! orderings."""
    cache = {}

    def v(mask):
        if mask not in cache:
            cache[mask] = value_fn(mask)
        return cache[mask]

    phi = [0.0] * n
    total = 0
    for perm in itertools.permutations(range(n)):
        mask = 0
        prev = v(0)
        for e in perm:
            mask |= 1 << e
            cur = v(mask)
            phi[e] += cur - prev
            prev = cur
        total += 1
    return np.array([p / total for p in phi])


def weighted_sum_game(weights):
    def value(mask):
        return sum(w for t, w in enumerate(weights) if mask & (1 << t))

    return value


class TestExactEngine:
    def test_additive_game(self):
        phi = exact_shapley_values(weighted_sum_game([1.0, 2.0]), 2)
        assert phi == pytest.approx([1.0, 2.0], abs=1e-12)

    def test_and_game(self):
        def value(mask):
            return 1.0 if mask == 0b11 else 0.0

        assert exact_shapley_values(value, 2) == pytest.approx([0.5, 0.5], abs=1e-12)

    def test_constant_game(self):
        phi = exact_shapley_values(lambda m: 0.7, 5)
        assert (phi == 0.0).all()

    def test_matches_permutation_oracle_on_random_games(self):
        rng = np.random.default_rng(0)
        for n in (2, 3, 4, 5, 6):
            table = rng.normal(size=1 << n)
            value = lambda m: float(table[m])
            got = exact_shapley_values(value, n)
            want = permutation_shapley(value, n)
            assert got == pytest.approx(want, abs=1e-11)

    def test_size_weights_sum_to_one_per_entity(self):
        import math

        for n in range(1, 10):
            w = shapley_size_weights(n)
            total = sum(math.comb(n - 1, k) * w[k] for k in range(n))
            assert total == pytest.approx(1.0, abs=1e-12)

    def test_guard(self):
        with pytest.raises(TooManyEntitiesError):
            exact_shapley_values(lambda m: 0.0, 15)

    def test_guard_on_meme(self):
        meme = make_meme(text="a b c d e f", h=16, w=16)  # 6 + 9 = 15 entities
        with pytest.raises(TooManyEntitiesError):
            exact_shapley(lexicon_predictor({}), meme)


class TestExactOnMemes:
    def test_efficiency_property(self):
        rng = np.random.default_rng(7)
        words = ["love", "goes", "viral", "sun", "rain", "grim", "spark", "dust"]
        for i in range(30):
            meme = random_meme(rng, id=f"m{i}")
            lex = {w: float(rng.normal(scale=2)) for w in rng.choice(words, 3, replace=False)}
            kind = i % 3
            if kind == 0:
                handle = lexicon_predictor(lex)
            elif kind == 1:
                handle = patch_intensity_predictor(float(rng.integers(40, 210)))
            else:
                handle = late_fusion_fixed(float(rng.random()),
                                           lexicon_predictor(lex),
                                           patch_intensity_predictor(120))
            res = exact_shapley(handle, meme)
            assert abs(res.phi.sum() - (res.full_value - res.baseline)) <= 1e-9

    def test_symmetric_tokens_equal_phi(self):
        meme = make_meme(text="love dust love")
        handle = lexicon_predictor({"love": 1.0, "dust": 0.5})
        res = exact_shapley(handle, meme)
        # entities 0 and 2 are the same word; verify interchangeability by brute force
        from mmprobe.shapley import MemeGame

        game = MemeGame(handle, meme)
        for mask in range(1 << game.n):
            b0, b2 = (mask >> 0) & 1, (mask >> 2) & 1
            swapped = mask & ~0b101 | (b2 << 0) | (b0 << 2)
            assert game.value(mask) == pytest.approx(game.value(swapped), abs=1e-15)
        assert abs(res.phi[0] - res.phi[2]) <= 1e-9

    def test_dummy_patches_exactly_zero(self):
        meme = make_meme(text="love goes viral")
        res = exact_shapley(lexicon_predictor({"love": 2.0}), meme)
        idx = entity_universe(meme)
        assert (res.phi[idx.num_text:] == 0.0).all()

    def test_workers_do_not_change_result(self):
        meme = make_meme(text="love goes viral")
        handle = late_fusion_fixed(0.6, lexicon_predictor({"love": 2.0}),
                                   patch_intensity_predictor(150))
        a = exact_shapley(handle, meme, workers=1)
        b = exact_shapley(handle, meme, workers=3)
        assert (a.phi == b.phi).all()

    def test_linearity_of_fixed_fusion(self):
        meme = make_meme(text="love goes viral", value=90)
        text_h = lexicon_predictor({"love": 2.0, "viral": -1.0})
        image_h = patch_intensity_predictor(150)
        phi_t = exact_shapley(text_h, meme).phi
        phi_i = exact_shapley(image_h, meme).phi
        for alpha in (0.1, 0.3, 0.5, 0.7, 0.9):
            fused = late_fusion_fixed(alpha, text_h, image_h)
            phi_f = exact_shapley(fused, meme).phi
            assert phi_f == pytest.approx(alpha * phi_t + (1 - alpha) * phi_i, abs=1e-9)

    def test_ts_strictly_increasing_in_alpha(self):
        meme = make_meme(text="love goes viral", value=90)
        text_h = lexicon_predictor({"love": 2.0, "viral": -1.0})
        image_h = patch_intensity_predictor(150)
        scores = []
        for alpha in (0.1, 0.3, 0.5, 0.7, 0.9):
            fused = late_fusion_fixed(alpha, text_h, image_h)
            scores.append(modality_score(exact_shapley(fused, meme)).ts_magnitude)
        assert all(b > a for a, b in zip(scores, scores[1:]))


class TestMonteCarlo:
    def test_deterministic_given_seed(self):
        meme = make_meme(text="love goes viral")
        handle = lexicon_predictor({"love": 1.0, "viral": 2.0})
        cfg = MCConfig(samples=50, seed=123)
        a = mc_shapley(handle, meme, cfg)
        b = mc_shapley(handle, meme, cfg)
        assert (a.phi == b.phi).all()
        assert a.samples == 50 and a.seed == 123

    def test_different_seeds_differ(self):
        meme = make_meme(text="love goes viral")
        handle = lexicon_predictor({"love": 1.0, "viral": 2.0})
        a = mc_shapley(handle, meme, MCConfig(samples=20, seed=1))
        b = mc_shapley(handle, meme, MCConfig(samples=20, seed=2))
        assert not (a.phi == b.phi).all()

    def test_image_dummy_exact_zero(self):
        meme = make_meme(text="love goes viral")
        res = mc_shapley(lexicon_predictor({"love": 3.0}), meme, MCConfig(samples=30, seed=4))
        idx = entity_universe(meme)
        assert (res.phi[idx.num_text:] == 0.0).all()

    def test_additive_game_estimated_exactly(self):
        # every marginal contribution of an additive game equals the weight,
        # so the estimator is exact at any P
        weights = [0.5, -0.3, 0.8, 0.1, -0.6, 0.2, 0.4, -0.1]
        value = weighted_sum_game(weights)
        phi = mc_shapley_values(value, 8, MCConfig(samples=3, seed=0))
        assert phi == pytest.approx(weights, abs=1e-12)

    def test_error_shrinks_with_more_samples(self):
        import math

        weights = [0.9, -1.3, 0.8, 1.1, -0.6, 0.7, 1.4, -1.1]

        def value(mask):
            s = sum(w for t, w in enumerate(weights) if mask & (1 << t))
            return 1.0 / (1.0 + math.exp(-s))

        exact = exact_shapley_values(value, 8)
        errs = {}
        for p in (10, 500):
            per_seed = []
            for seed in range(5):
                phi = mc_shapley_values(value, 8, MCConfig(samples=p, seed=seed))
                per_seed.append(np.abs(phi - exact).max())
            errs[p] = np.mean(per_seed)
        assert errs[500] < errs[10]

    def test_subset_sizes_cycle(self):
        from mmprobe.shapley import mc_shapley_plan

        plan = mc_shapley_plan(4, MCConfig(samples=4, seed=0))
        for t, masks in enumerate(plan):
            assert len(masks) == 9
            for i, m in enumerate(masks):
                assert not (m >> t) & 1
                assert bin(m).count("1") == (i % 3) + 1


class TestModalityScore:
    def test_arithmetic(self):
        res = ShapleyResult(
            phi=np.array([0.5, 0.33, -0.17, 0.0, 0.0, 0.0]),
            entity_index=EntityIndex(num_text=2, num_patch=4),
            mode="exact", baseline=0.0, full_value=0.66,
        )
        score = modality_score(res)
        assert score.ts_magnitude == pytest.approx(0.83, abs=1e-12)
        assert score.is_magnitude == pytest.approx(0.17, abs=1e-12)
        assert score.ts_magnitude + score.is_magnitude == 1.0

    def test_zero_patches_full_text_share(self):
        res = ShapleyResult(
            phi=np.array([0.4, -0.2, 0.0, 0.0, 0.0, 0.0]),
            entity_index=EntityIndex(num_text=2, num_patch=4),
            mode="exact", baseline=0.0, full_value=0.2,
        )
        assert modality_score(res).ts_magnitude == 1.0

    def test_all_zero_raises(self):
        res = ShapleyResult(
            phi=np.zeros(6), entity_index=EntityIndex(num_text=2, num_patch=4),
            mode="exact", baseline=0.5, full_value=0.5,
        )
        with pytest.raises(AllZeroAttributionError):
            modality_score(res)

    def test_signed_none_when_total_zero(self):
        res = ShapleyResult(
            phi=np.array([0.5, -0.5, 0.0, 0.0, 0.0, 0.0]),
            entity_index=EntityIndex(num_text=2, num_patch=4),
            mode="exact", baseline=0.5, full_value=0.5,
        )
        assert modality_score(res).ts_signed is None


def _result(token_mag, patch_mag):
    return ShapleyResult(
        phi=np.array([token_mag, patch_mag]),
        entity_index=EntityIndex(num_text=1, num_patch=1),
        mode="exact", baseline=0.0, full_value=token_mag + patch_mag,
    )


class TestAggregate:
    def test_mean(self):
        results = [_result(0.8, 0.2), _result(0.9, 0.1)]
        agg = aggregate_modality(results)
        assert agg.mean_ts_magnitude == pytest.approx(0.85)
        assert agg.count == 2 and agg.excluded == 0

    def test_single_sample(self):
        agg = aggregate_modality([_result(0.8, 0.2)])
        assert agg.mean_ts_magnitude == pytest.approx(0.8)

    def test_empty_raises(self):
        with pytest.raises(EmptyInputError):
            aggregate_modality([])

    def test_excluded_counted(self):
        zero = ShapleyResult(phi=np.zeros(2), entity_index=EntityIndex(1, 1),
                             mode="exact", baseline=0.5, full_value=0.5)
        agg = aggregate_modality([_result(0.8, 0.2), zero])
        assert agg.count == 1 and agg.excluded == 1


def read_ppm(path):
    data = path.read_bytes()
    parts = data.split(b"\n", 3)
    assert parts[0] == b"P6"
    w, h = map(int, parts[1].split())
    assert parts[2] == b"255"
    return np.frombuffer(parts[3], dtype=np.uint8).reshape(h, w, 3)


class TestRender:
    def _meme_and_result(self):
        pixels = np.full((9, 9), 200, dtype=np.uint8)
        pixels[0:5, 0:5] = 40  # one dark patch so patch attributions differ
        from mmprobe import GrayImage, Meme

        meme = Meme(id="m1", text="love goes viral", image=GrayImage(pixels), label=1)
        handle = late_fusion_fixed(0.5, lexicon_predictor({"love": 2.0, "viral": -1.0}),
                                   patch_intensity_predictor(150))
        return meme, exact_shapley(handle, meme)

    def test_files_and_rows(self, tmp_path):
        meme, res = self._meme_and_result()
        paths = render_attribution(res, meme, tmp_path)
        rows = paths["tokens"].read_text().strip().splitlines()
        assert rows[0] == "token,phi,rank"
        assert len(rows) == 1 + 3
        img = read_ppm(paths["heatmap"])
        assert img.shape == (9, 9, 3)

    def test_ramp_endpoints(self, tmp_path):
        meme, res = self._meme_and_result()
        paths = render_attribution(res, meme, tmp_path)
        img = read_ppm(paths["heatmap"])
        from mmprobe.segmentation import patch_grid

        grid = patch_grid(meme.image, 3)
        patch_phi = res.patch_phi
        hi, lo = int(np.argmax(patch_phi)), int(np.argmin(patch_phi))
        assert float(patch_phi.max()) > float(patch_phi.min())
        r0, r1, c0, c1 = grid.rects()[hi]
        assert (img[r0:r1, c0:c1] == (0, 255, 0)).all()
        r0, r1, c0, c1 = grid.rects()[lo]
        assert (img[r0:r1, c0:c1] == (255, 0, 0)).all()

    def test_uniform_phi_mid_tint(self, tmp_path):
        meme = make_meme(text="love goes viral")
        res = ShapleyResult(
            phi=np.array([0.1, 0.0, 0.0, 0.2, 0.2, 0.2, 0.2]),
            entity_index=EntityIndex(num_text=3, num_patch=4),
            mode="exact", baseline=0.0, full_value=0.9,
        )
        paths = render_attribution(res, meme, tmp_path)
        img = read_ppm(paths["heatmap"])
        assert (img[..., 0] == 128).all() and (img[..., 1] == 128).all()

    def test_rank_ordering(self, tmp_path):
        meme, res = self._meme_and_result()
        paths = render_attribution(res, meme, tmp_path)
        rows = [r.split(",") for r in paths["tokens"].read_text().strip().splitlines()[1:]]
        by_rank = sorted(rows, key=lambda r: int(r[2]))
        phis = [float(r[1]) for r in by_rank]
        assert phis == sorted(phis, reverse=True)
