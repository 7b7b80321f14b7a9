"""Example scorers, from trivial to a stub for real pretrained models.

A scorer is any callable ``(text, width, height, pixels: bytes) -> float``
returning a value in [0, 1]. The bridge never transforms the score.
"""

from __future__ import annotations

import math
import string

MASK_PLACEHOLDER = "[MASK]"


def _sigmoid(x: float) -> float:
    if x >= 0:
        return 1.0 / (1.0 + math.exp(-x))
    z = math.exp(x)
    return z / (1.0 + z)


def constant_scorer(value: float):
    """Always return ``value`` (deliberately unvalidated, so conformance
    tests can exercise the bridge's out-of-range error path)."""

    def scorer(text, width, height, pixels):
        return value

    return scorer


def keyword_scorer(keywords, hit: float = 0.9, miss: float = 0.1):
    """``hit`` when any keyword occurs as a word of the text, else ``miss``."""
    wanted = {k.lower() for k in keywords}

    def scorer(text, width, height, pixels):
        words = {w.strip(string.punctuation).lower() for w in text.split()}
        return hit if words & wanted else miss

    return scorer


def lexicon_scorer(lexicon: dict[str, float], placeholder: str = MASK_PLACEHOLDER):
    """Sigmoid of the summed weights of present, unmasked tokens.

    Tokens are whitespace-split, lowercased, stripped of surrounding
    punctuation; raw tokens equal to the placeholder contribute nothing.
    """

    def scorer(text, width, height, pixels):
        total = 0.0
        for raw in text.split():
            if raw == placeholder:
                continue
            tok = raw.strip(string.punctuation).lower()
            if tok:
                total += lexicon.get(tok, 0.0)
        return _sigmoid(total)

    return scorer


def pretrained_model_scorer(model_dir: str):
    """Stub showing where a real multimodal model plugs in.

    A concrete implementation would load the model once here, then inside
    the returned callable reshape ``pixels`` (row-major, ``height`` rows of
    ``width`` bytes), run text+image through the model, and return its
    positive-class probability as a float in [0, 1]. Everything else --
    framing, ordering, validation -- is the bridge's job.
    """

    def scorer(text, width, height, pixels):
        rows = [pixels[r * width : (r + 1) * width] for r in range(height)]
        raise NotImplementedError(
            f"load a model from {model_dir!r} and score text={text!r} "
            f"against the {len(rows)}x{width} image"
        )

    return scorer
