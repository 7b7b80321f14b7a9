import numpy as np
import pytest

from mmprobe import GrayImage, Meme

WORDS = ["love", "goes", "viral", "sun", "rain", "grim", "spark", "dust"]


def make_image(h=9, w=9, value=200):
    return GrayImage(np.full((h, w), value, dtype=np.uint8))


def make_meme(text="love goes viral", h=9, w=9, value=200, id="m1", label=1, **kw):
    return Meme(id=id, text=text, image=make_image(h, w, value), label=label, **kw)


def random_meme(rng, max_tokens=4, size=8, id="m"):
    """Meme with 1..max_tokens tokens (entity count stays exact-friendly)."""
    n_tok = int(rng.integers(1, max_tokens + 1))
    words = [WORDS[i] for i in rng.integers(0, len(WORDS), n_tok)]
    pixels = rng.integers(0, 256, (size, size), dtype=np.uint8)
    # keep the mid-gray fill sentinel unambiguous
    pixels[pixels == 128] = 129
    return Meme(id=id, text=" ".join(words), image=GrayImage(pixels), label=1)


@pytest.fixture
def meme():
    return make_meme()
