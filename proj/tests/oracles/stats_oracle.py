#!/usr/bin/env python3
"""Independent corpus statistics summation.

Reads a manifest (line-delimited JSON) and recomputes the per-split stats
with plain accumulation plus the Python tokenizer mirror, bypassing the C++
implementation entirely. Prints the same schema as the stats output so
frozen goldens can be compared field by field.

Usage: stats_oracle.py --manifest manifest.jsonl --vocab vocab.json [--out stats.json]
"""

import argparse
import json
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent))
from bpe_mirror import Tokenizer

SPLITS = ["train", "validation", "test"]


def two_decimals(value):
    return f"{value:.2f}"


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--manifest", required=True)
    parser.add_argument("--vocab", required=True)
    parser.add_argument("--out")
    args = parser.parse_args()

    tok = Tokenizer.from_file(args.vocab)

    images = {s: 0 for s in SPLITS}
    patents = {s: set() for s in SPLITS}
    brief_tokens = {s: 0 for s in SPLITS}
    detailed_tokens = {s: 0 for s in SPLITS}

    with open(args.manifest, "r", encoding="utf-8") as handle:
        for line in handle:
            line = line.strip()
            if not line:
                continue
            rec = json.loads(line)
            split = rec["split"]
            images[split] += 1
            patents[split].add(rec["patent_id"])
            brief_tokens[split] += tok.count_tokens(rec["brief"])
            detailed_tokens[split] += tok.count_tokens(rec["detailed"])

    out = {"splits": {}, "total_images": sum(images.values())}
    for split in SPLITS:
        n = images[split]
        p = len(patents[split])
        out["splits"][split] = {
            "images": n,
            "patents": p,
            "avg_brief_tokens": two_decimals(brief_tokens[split] / n) if n else None,
            "avg_detailed_tokens": two_decimals(detailed_tokens[split] / n) if n else None,
            "avg_images_per_patent": two_decimals(n / p) if p else None,
        }

    text = json.dumps(out, indent=2, sort_keys=True) + "\n"
    if args.out:
        with open(args.out, "w", encoding="utf-8") as handle:
            handle.write(text)
    else:
        sys.stdout.write(text)


if __name__ == "__main__":
    main()
