#!/usr/bin/env python3
"""Regenerate data/sample_corpus.jsonl, a synthetic set of structured
abstracts about blockchain applications. Deterministic for a given seed."""

import argparse
import json
import random

THEMES = {
    "supply": "supply chain traceability logistics provenance food product tracking inventory shipment "
              "manufacturer retailer transparency agricultural counterfeit warehouse procurement".split(),
    "health": "healthcare patient medical records hospital clinical privacy consent physician diagnosis "
              "pharmaceutical health insurance treatment electronic data".split(),
    "energy": "energy trading peer electricity grid renewable microgrid prosumer solar market "
              "consumption household battery power tariff".split(),
    "finance": "financial bank payment cryptocurrency bitcoin transaction settlement investment token "
               "market price volatility trading exchange asset".split(),
    "iot": "iot device sensor network security authentication attack edge computing lightweight "
           "vehicle smart home intrusion protocol".split(),
    "contracts": "smart contracts legal law enforcement agreement code execution automation dispute "
                 "clause regulation compliance governance".split(),
    "consensus": "consensus protocol scalability throughput latency proof stake mining node "
                 "performance sharding validation fault tolerance".split(),
    "review": "literature review research paper study analysis framework future direction survey "
              "scholars topic trend field theory".split(),
}

FILLER = "the of and to in a is for that this on with as are by an be we our it can which from these".split()

SECTIONS = ["Purpose", "Design/methodology/approach", "Findings", "Originality/value"]

COLLOCATION_PHRASES = ["distributed ledger technology", "information technology", "supply chain", "smart contracts"]


def plural(word):
    if word.endswith(("s", "x", "ch", "sh")) or "_" in word:
        return word
    if word.endswith("y") and word[-2] not in "aeiou":
        return word[:-1] + "ies"
    return word + "s"


def sentence(rng, weights, length):
    words = []
    themes = list(weights)
    probs = [weights[t] for t in themes]
    for _ in range(length):
        if rng.random() < 0.35:
            words.append(rng.choice(FILLER))
            continue
        theme = rng.choices(themes, probs)[0]
        word = rng.choice(THEMES[theme])
        if rng.random() < 0.15:
            word = plural(word)
        words.append(word)
    if rng.random() < 0.2:
        words.insert(rng.randrange(len(words) + 1), rng.choice(COLLOCATION_PHRASES))
    if rng.random() < 0.5:
        words.insert(rng.randrange(len(words) + 1), "blockchain")
    text = " ".join(words)
    return text[0].upper() + text[1:] + "."


def abstract(rng):
    names = list(THEMES)
    k = rng.choices([1, 2, 3], [0.4, 0.45, 0.15])[0]
    chosen = rng.sample(names, k)
    raw = [rng.gammavariate(1.0, 1.0) for _ in chosen]
    total = sum(raw)
    weights = {t: w / total for t, w in zip(chosen, raw)}
    parts = []
    structured = rng.random() < 0.7
    for section in SECTIONS:
        body = " ".join(sentence(rng, weights, rng.randint(8, 16)) for _ in range(rng.randint(1, 2)))
        parts.append(f"{section}: {body}" if structured else body)
    if not structured:
        parts.insert(0, "Abstract")
    return " ".join(parts), chosen


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--docs", type=int, default=300)
    parser.add_argument("--seed", type=int, default=20240601)
    parser.add_argument("--out", default="data/sample_corpus.jsonl")
    args = parser.parse_args()

    rng = random.Random(args.seed)
    records = []
    for i in range(args.docs):
        text, themes = abstract(rng)
        records.append({"id": f"doc{i:04d}", "text": text,
                        "meta": {"year": str(rng.randint(2016, 2023)), "themes": ",".join(sorted(themes))}})
    # Near-duplicates that differ only in case and spacing.
    for j, source in enumerate(rng.sample(records[: args.docs], 6)):
        text = source["text"].upper() if j % 2 else "  ".join(source["text"].split(" "))
        records.append({"id": f"dup{j:02d}", "text": text, "meta": dict(source["meta"])})
    with open(args.out, "w", encoding="utf-8") as f:
        for r in records:
            f.write(json.dumps(r, sort_keys=True) + "\n")


if __name__ == "__main__":
    main()
