"""Reference implementation of the attribution engine's bridge protocol."""

__version__ = "0.1.0"

from .bridge import BridgeSession, LengthMismatchError, decode_image, serve
from .scorers import constant_scorer, keyword_scorer, lexicon_scorer, pretrained_model_scorer
