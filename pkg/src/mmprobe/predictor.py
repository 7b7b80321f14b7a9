"""Black-box scoring contract plus built-in, trainable and external predictors.

Every predictor maps a (possibly masked) meme to a score in [0, 1]; the
binary decision is score > threshold. Built-ins are pure functions of their
input; the external predictor speaks a newline-delimited JSON protocol to a
child process (see :class:`ExternalPredictor`).
"""

from __future__ import annotations

import base64
import json
import math
import queue
import shlex
import subprocess
import threading
from abc import ABC, abstractmethod
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .data_model import LabeledDataset, Meme
from .errors import (
    BridgeTimeoutError,
    EmptyInputError,
    ExternalPredictorError,
    HandshakeFailedError,
    ImageTooSmallError,
    MalformedResponseError,
    ScoreOutOfRangeError,
    SingleClassDatasetError,
)
from .segmentation import (
    DEFAULT_PLACEHOLDER,
    MaskedMeme,
    as_masked,
    band_edges,
    effective_tokens,
    grid_side,
)

HASH_DIM_DEFAULT = 1024
IMAGE_CELLS_SIDE = 4
IMAGE_CELLS = IMAGE_CELLS_SIDE * IMAGE_CELLS_SIDE
PROTOCOL_VERSION = 1

_hash_memo: dict[str, int] = {}


def sigmoid(x: float) -> float:
    if x >= 0:
        return 1.0 / (1.0 + math.exp(-x))
    z = math.exp(x)
    return z / (1.0 + z)


def hash_bucket(token: str, dim: int) -> int:
    """Bucket of a token under the fixed FNV-1a 64-bit string hash."""
    h = _hash_memo.get(token)
    if h is None:
        h = _kernels.fnv1a64(token.encode("utf-8"))
        _hash_memo[token] = h
    return h % dim


class Predictor(ABC):
    """Scoring contract: ``predict`` returns a score in [0, 1]."""

    threshold: float = 0.5

    @abstractmethod
    def predict(self, masked: MaskedMeme) -> float: ...

    def close(self) -> None:
        pass

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
        return False


def predict(handle: Predictor, masked: MaskedMeme) -> float:
    return handle.predict(masked)


def classify(handle: Predictor, masked: MaskedMeme) -> int:
    """1 iff score strictly exceeds the handle's threshold (ties -> 0)."""
    return 1 if handle.predict(masked) > handle.threshold else 0


# --- built-in toys ---------------------------------------------------------


class LexiconPredictor(Predictor):
    """sigmoid of the summed weights of present, unmasked tokens; the image
    is ignored entirely."""

    def __init__(self, lexicon: dict[str, float], threshold: float = 0.5,
                 placeholder: str = DEFAULT_PLACEHOLDER):
        self.lexicon = dict(lexicon)
        self.threshold = threshold
        self.placeholder = placeholder

    def predict(self, masked: MaskedMeme) -> float:
        total = 0.0
        for tok in effective_tokens(masked.text, self.placeholder):
            if tok is not None:
                total += self.lexicon.get(tok, 0.0)
        return sigmoid(total)


def lexicon_predictor(lexicon: dict[str, float], threshold: float = 0.5,
                      placeholder: str = DEFAULT_PLACEHOLDER) -> LexiconPredictor:
    return LexiconPredictor(lexicon, threshold, placeholder)


class PatchIntensityPredictor(Predictor):
    """Fraction of unmasked patches whose mean intensity is below the dark
    threshold; text is ignored (the token count only fixes the grid).

    A patch is taken as masked when it is uniformly equal to ``fill`` (the
    mask policy's fill value); an image legitimately uniform at the fill
    value is therefore indistinguishable from a fully masked one, and the
    score falls back to the 0.5 baseline when no patch looks unmasked.
    """

    def __init__(self, dark_threshold: float, threshold: float = 0.5,
                 fill: int = 128, placeholder: str = DEFAULT_PLACEHOLDER):
        if not 0 <= dark_threshold <= 255:
            raise ValueError("dark_threshold must lie in [0, 255]")
        self.dark_threshold = float(dark_threshold)
        self.threshold = threshold
        self.fill = fill
        self.placeholder = placeholder

    def predict(self, masked: MaskedMeme) -> float:
        num_tokens = len(effective_tokens(masked.text, self.placeholder))
        side = grid_side(max(num_tokens, 1))
        img = masked.image
        if side > img.height or side > img.width:
            raise ImageTooSmallError(f"grid side {side} exceeds image {img.width}x{img.height}")
        means, mins, maxs = _kernels.patch_stats(
            img.pixels,
            np.asarray(band_edges(img.height, side), dtype=np.int64),
            np.asarray(band_edges(img.width, side), dtype=np.int64),
        )
        unmasked = ~((mins == self.fill) & (maxs == self.fill))
        if not unmasked.any():
            return 0.5
        dark = means[unmasked] < self.dark_threshold
        return float(dark.sum() / unmasked.sum())


def patch_intensity_predictor(dark_threshold: float, threshold: float = 0.5,
                              fill: int = 128) -> PatchIntensityPredictor:
    return PatchIntensityPredictor(dark_threshold, threshold, fill)


class FixedFusionPredictor(Predictor):
    """Affine late fusion: alpha * text score + (1 - alpha) * image score."""

    def __init__(self, alpha: float, text_handle: Predictor, image_handle: Predictor,
                 threshold: float = 0.5):
        if not 0.0 <= alpha <= 1.0:
            raise ValueError("alpha must lie in [0, 1]")
        self.alpha = float(alpha)
        self.text_handle = text_handle
        self.image_handle = image_handle
        self.threshold = threshold

    def predict(self, masked: MaskedMeme) -> float:
        return self.alpha * self.text_handle.predict(masked) + (
            1.0 - self.alpha
        ) * self.image_handle.predict(masked)

    def close(self) -> None:
        self.text_handle.close()
        self.image_handle.close()


def late_fusion_fixed(alpha: float, text_handle: Predictor, image_handle: Predictor,
                      threshold: float = 0.5) -> FixedFusionPredictor:
    return FixedFusionPredictor(alpha, text_handle, image_handle, threshold)


# --- trainable late fusion -------------------------------------------------


def extract_features(masked: MaskedMeme, hash_dim: int = HASH_DIM_DEFAULT,
                     placeholder: str = DEFAULT_PLACEHOLDER) -> np.ndarray:
    """Concatenated feature vector: hashed bag-of-words counts over
    ``hash_dim`` buckets (placeholder slots contribute nothing) followed by
    the 16 mean intensities of a fixed 4x4 super-grid, scaled to [0, 1]."""
    x = np.zeros(hash_dim + IMAGE_CELLS, dtype=np.float64)
    for tok in effective_tokens(masked.text, placeholder):
        if tok is not None:
            x[hash_bucket(tok, hash_dim)] += 1.0
    img = masked.image
    if img.height < IMAGE_CELLS_SIDE or img.width < IMAGE_CELLS_SIDE:
        raise ImageTooSmallError(
            f"image {img.width}x{img.height} too small for the {IMAGE_CELLS_SIDE}x"
            f"{IMAGE_CELLS_SIDE} feature grid"
        )
    means, _, _ = _kernels.patch_stats(
        img.pixels,
        np.asarray(band_edges(img.height, IMAGE_CELLS_SIDE), dtype=np.int64),
        np.asarray(band_edges(img.width, IMAGE_CELLS_SIDE), dtype=np.int64),
    )
    x[hash_dim:] = means / 255.0
    return x


@dataclass(frozen=True)
class TrainConfig:
    """Gradient-descent settings; batch_size 0 means full batch."""

    epochs: int = 200
    learning_rate: float = 0.1
    weight_decay: float = 1e-3
    batch_size: int = 0
    seed: int = 42
    hash_dim: int = HASH_DIM_DEFAULT

    def __post_init__(self):
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be > 0")
        if self.weight_decay < 0:
            raise ValueError("weight_decay must be >= 0")
        if self.hash_dim < 1:
            raise ValueError("hash_dim must be >= 1")


@dataclass
class ModelParams:
    """Late-fusion logistic parameters plus the config that produced them."""

    weights: np.ndarray
    bias: float
    config: TrainConfig

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        if not np.isfinite(self.weights).all() or not math.isfinite(self.bias):
            raise ValueError("model parameters must be finite")

    @property
    def hash_dim(self) -> int:
        return self.config.hash_dim

    def to_dict(self) -> dict:
        return {
            "weights": self.weights.tolist(),
            "bias": self.bias,
            "config": {
                "epochs": self.config.epochs,
                "learning_rate": self.config.learning_rate,
                "weight_decay": self.config.weight_decay,
                "batch_size": self.config.batch_size,
                "seed": self.config.seed,
                "hash_dim": self.config.hash_dim,
            },
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ModelParams":
        return cls(
            weights=np.asarray(d["weights"], dtype=np.float64),
            bias=float(d["bias"]),
            config=TrainConfig(**d["config"]),
        )

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, sort_keys=True)

    @classmethod
    def load(cls, path) -> "ModelParams":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


def features_and_labels(dataset: LabeledDataset | list[Meme], cfg: TrainConfig,
                        placeholder: str = DEFAULT_PLACEHOLDER):
    memes = list(dataset)
    X = np.stack([extract_features(as_masked(m), cfg.hash_dim, placeholder) for m in memes])
    y = np.asarray([m.label for m in memes], dtype=np.float64)
    return X, y


def loss_and_gradient(params: ModelParams, X: np.ndarray, y: np.ndarray,
                      weight_decay: float | None = None):
    """Mean L2-regularized logistic loss and its analytic gradient.

    loss = mean cross-entropy + (weight_decay / 2) * ||w||^2 (bias excluded
    from the penalty). Returns (loss, grad_weights, grad_bias).
    """
    if len(y) == 0:
        raise EmptyInputError("empty batch")
    lam = params.config.weight_decay if weight_decay is None else weight_decay
    z = X @ params.weights + params.bias
    # log(1 + exp(z)) - y*z, computed stably
    ce = np.logaddexp(0.0, z) - y * z
    loss = float(ce.mean() + 0.5 * lam * float(params.weights @ params.weights))
    p = 1.0 / (1.0 + np.exp(-np.clip(z, -500, 500)))
    resid = p - y
    grad_w = X.T @ resid / len(y) + lam * params.weights
    grad_b = float(resid.mean())
    return loss, grad_w, grad_b


def train_late_fusion(train: LabeledDataset, cfg: TrainConfig = TrainConfig(),
                      placeholder: str = DEFAULT_PLACEHOLDER) -> ModelParams:
    """Mini-batch gradient descent from zero initialization; deterministic
    given the config seed (shuffling is seeded, full batch shuffles nothing)."""
    labels = set(train.labels())
    if labels != {0, 1}:
        raise SingleClassDatasetError(f"training set has labels {sorted(labels)}; need both classes")
    X, y = features_and_labels(train, cfg, placeholder)
    m = len(y)
    params = ModelParams(weights=np.zeros(X.shape[1]), bias=0.0, config=cfg)
    rng = np.random.default_rng(cfg.seed)
    full_batch = cfg.batch_size <= 0 or cfg.batch_size >= m
    for _ in range(cfg.epochs):
        if full_batch:
            batches = [np.arange(m)]
        else:
            perm = rng.permutation(m)
            batches = [perm[i : i + cfg.batch_size] for i in range(0, m, cfg.batch_size)]
        for idx in batches:
            _, grad_w, grad_b = loss_and_gradient(params, X[idx], y[idx])
            params.weights = params.weights - cfg.learning_rate * grad_w
            params.bias = params.bias - cfg.learning_rate * grad_b
    return params


class TrainedFusionPredictor(Predictor):
    """Logistic head over the concatenated text+image features."""

    def __init__(self, params: ModelParams, threshold: float = 0.5,
                 placeholder: str = DEFAULT_PLACEHOLDER):
        self.params = params
        self.threshold = threshold
        self.placeholder = placeholder

    def predict(self, masked: MaskedMeme) -> float:
        x = extract_features(masked, self.params.hash_dim, self.placeholder)
        return sigmoid(float(x @ self.params.weights + self.params.bias))


def trained_predictor(params: ModelParams, threshold: float = 0.5) -> TrainedFusionPredictor:
    return TrainedFusionPredictor(params, threshold)


# --- external predictor (wire protocol client) -----------------------------


class _BridgeConnection:
    """One child process speaking newline-delimited JSON over stdio."""

    def __init__(self, argv: list[str], timeout: float):
        self.timeout = timeout
        try:
            self._proc = subprocess.Popen(
                argv,
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                text=True,
                bufsize=1,
            )
        except OSError as exc:
            raise HandshakeFailedError(f"could not launch {argv!r}: {exc}") from exc
        self._lines: queue.Queue = queue.Queue()
        self._reader = threading.Thread(target=self._pump, daemon=True)
        self._reader.start()
        self._lock = threading.Lock()
        self._req_id = 0
        try:
            self._send({"type": "hello", "version": PROTOCOL_VERSION})
            ready = self._read_json()
        except ExternalPredictorError as exc:
            self.close()
            raise HandshakeFailedError(f"no ready message: {exc}") from exc
        if ready.get("type") != "ready" or not isinstance(ready.get("name"), str):
            self.close()
            raise HandshakeFailedError(f"bad ready message: {ready!r}")
        self.name = ready["name"]

    def _pump(self):
        try:
            for line in self._proc.stdout:
                self._lines.put(line)
        finally:
            self._lines.put(None)

    def _send(self, obj: dict) -> None:
        try:
            self._proc.stdin.write(json.dumps(obj) + "\n")
            self._proc.stdin.flush()
        except (BrokenPipeError, ValueError, OSError) as exc:
            raise ExternalPredictorError(f"bridge process closed its input: {exc}") from exc

    def _read_json(self) -> dict:
        try:
            line = self._lines.get(timeout=self.timeout)
        except queue.Empty:
            raise BridgeTimeoutError(f"no response within {self.timeout}s") from None
        if line is None:
            raise ExternalPredictorError("bridge process closed its output")
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise MalformedResponseError(f"invalid JSON from bridge: {line!r}") from exc
        if not isinstance(obj, dict):
            raise MalformedResponseError(f"response is not an object: {obj!r}")
        return obj

    def request(self, masked: MaskedMeme) -> float:
        with self._lock:
            self._req_id += 1
            req_id = self._req_id
            self._send(
                {
                    "type": "predict",
                    "req_id": req_id,
                    "text": masked.text,
                    "width": masked.image.width,
                    "height": masked.image.height,
                    "image_b64": base64.b64encode(masked.image.pixels.tobytes()).decode("ascii"),
                }
            )
            resp = self._read_json()
        if resp.get("type") == "error":
            raise ExternalPredictorError(f"bridge error: {resp.get('message')!r}")
        if resp.get("type") != "score":
            raise MalformedResponseError(f"expected a score message, got {resp!r}")
        if resp.get("req_id") != req_id:
            raise MalformedResponseError(
                f"req_id mismatch: sent {req_id}, got {resp.get('req_id')!r}"
            )
        score = resp.get("score")
        if isinstance(score, bool) or not isinstance(score, (int, float)):
            raise MalformedResponseError(f"score is not a number: {score!r}")
        score = float(score)
        if not 0.0 <= score <= 1.0:
            raise ScoreOutOfRangeError(f"bridge returned score {score} outside [0, 1]")
        return score

    def close(self) -> None:
        if self._proc.poll() is None:
            try:
                self._send({"type": "shutdown"})
                self._proc.stdin.close()
            except ExternalPredictorError:
                pass
            try:
                self._proc.wait(timeout=5)
            except subprocess.TimeoutExpired:
                self._proc.kill()
                self._proc.wait()


class ExternalPredictor(Predictor):
    """Client for a scoring process speaking the stdio wire protocol.

    Requests on one connection are serialized; ``pool_size`` independent
    connections allow concurrent probing (each is its own child process).
    """

    def __init__(self, command: str | list[str], timeout: float = 30.0,
                 pool_size: int = 1, threshold: float = 0.5):
        if pool_size < 1:
            raise ValueError("pool_size must be >= 1")
        self.argv = shlex.split(command) if isinstance(command, str) else list(command)
        self.threshold = threshold
        self._conns = []
        try:
            for _ in range(pool_size):
                self._conns.append(_BridgeConnection(self.argv, timeout))
        except ExternalPredictorError:
            self.close()
            raise
        self.name = self._conns[0].name
        self._free: queue.Queue = queue.Queue()
        for c in self._conns:
            self._free.put(c)

    def predict(self, masked: MaskedMeme) -> float:
        conn = self._free.get()
        try:
            return conn.request(masked)
        finally:
            self._free.put(conn)

    def close(self) -> None:
        for c in self._conns:
            c.close()


def external_predictor(command: str | list[str], timeout: float = 30.0,
                       pool_size: int = 1, threshold: float = 0.5) -> ExternalPredictor:
    return ExternalPredictor(command, timeout, pool_size, threshold)
