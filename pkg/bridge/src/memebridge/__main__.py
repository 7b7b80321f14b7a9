"""Run a bridge on standard input/output.

Exactly one scorer must be selected:

    python -m memebridge --constant 0.5
    python -m memebridge --keywords words.json     # JSON list of words
    python -m memebridge --lexicon weights.json    # JSON word->weight map
"""

import argparse
import json
import sys

from .bridge import serve
from .scorers import constant_scorer, keyword_scorer, lexicon_scorer


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="memebridge", description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    group = parser.add_mutually_exclusive_group(required=True)
    group.add_argument("--constant", type=float, help="always reply this score")
    group.add_argument("--keywords", help="JSON file with a list of trigger words")
    group.add_argument("--lexicon", help="JSON file with a word->weight map")
    parser.add_argument("--name", default="memebridge", help="name reported at handshake")
    args = parser.parse_args(argv)

    if args.constant is not None:
        scorer = constant_scorer(args.constant)
    elif args.keywords:
        with open(args.keywords, "r", encoding="utf-8") as fh:
            scorer = keyword_scorer(json.load(fh))
    else:
        with open(args.lexicon, "r", encoding="utf-8") as fh:
            scorer = lexicon_scorer({str(k): float(v) for k, v in json.load(fh).items()})
    return serve(scorer, name=args.name)


if __name__ == "__main__":
    sys.exit(main())
