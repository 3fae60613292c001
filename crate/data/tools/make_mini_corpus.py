#!/usr/bin/env python3
"""Regenerates the bundled mini-corpus and its stand-in word-vector files.

The corpus is synthetic: political-style claims built from templates, with
speaker, context and wording correlated with the verdict so that every
analysis perspective has something to learn. The vector files hold
deterministic pseudo-random vectors (seeded by a hash of each word) in the
usual GloVe/word2vec text layout; swap in real pretrained vectors with the
CLI flags for real data.

Usage: python3 data/tools/make_mini_corpus.py [out_dir]
"""

import hashlib
import json
import os
import random
import sys

SEED = 20190513
N_ITEMS = 240

SPEAKERS_TRUE = [
    "Dana Whitfield", "Harold Osei", "Priya Raman", "Lucas Moreno",
    "Grace Liang", "Samuel Becker", "Ines Duarte", "Victor Hale",
]
SPEAKERS_FAKE = [
    "Marcus Lyle", "Brenda Starke", "Chet Rollins", "Wade Pruitt",
    "Tammy Vance", "Rex Holloway", "Doug Mercer", "Lana Croft",
]
CONTEXTS_TRUE = [
    "a press release", "a floor speech", "a committee hearing",
    "a budget report", "a newspaper op-ed",
]
CONTEXTS_FAKE = [
    "a chain email", "a Facebook post", "a viral video",
    "a campaign rally", "a tweet",
]
SUBJECTS = [
    "taxes", "health care", "immigration", "education", "economy",
    "energy", "crime", "elections", "jobs", "environment",
]
TARGETS = [
    "Congress", "the governor", "voters", "the president", "teachers",
    "unions", "small businesses", "veterans",
]

GROUPS = ["seniors", "veterans", "families", "students", "farmers", "workers", "immigrants"]
POLICIES = ["tax plan", "health law", "energy bill", "school reform", "trade deal", "budget"]
NOUNS = ["benefits", "guns", "pensions", "schools", "churches", "hospitals", "farms"]
FAKE_ADJ = ["shocking", "massive", "secret", "outrageous", "disastrous", "corrupt"]
FAKE_NAMES = ["Obama", "Pelosi", "Soros", "Clinton", "Biden"]
TRUE_NAMES = ["Senator Whitfield", "Governor Osei", "Mayor Raman", "Representative Moreno"]

FAKE_TEMPLATES = [
    "{name} secretly sent {adj} payments to {group}!",
    "Shocking: {group} will lose every one of their {noun} under the new {policy}!",
    "{name} wants to ban {noun} for all {group}.",
    "The {policy} is a total hoax invented by {name}!",
    "Millions of illegal voters are receiving free {noun} paid by taxpayers!",
    "Did you know {name} never paid any taxes?",
    "{name} invited Russia to rig the elections!",
    "A {adj} new rule forces {group} to give up their {noun}!",
    "{name} is hiding a {adj} plan to destroy {noun}?",
    "Everyone knows the {policy} will bankrupt {group} overnight!",
]
TRUE_TEMPLATES = [
    "The state unemployment rate fell to {num} percent in {year}.",
    "Spending on {noun} increased by {num} percent since {year}.",
    "According to the budget office, the {policy} reduces the deficit by {num} billion dollars.",
    "{tname} voted for the {policy} in {year}.",
    "The county added {num} thousand jobs over the last year, according to labor data.",
    "Average salaries for {group} in the state rose {num} percent between {year} and 2016.",
    "Crime rates declined for the third consecutive year according to police records.",
    "The {policy} extended coverage to about {num} thousand {group} in {year}.",
    "Federal data show the number of {group} without insurance dropped by {num} percent.",
    "Under the {policy}, the average family pays about {num} hundred dollars less per year.",
]

TRUE_RAW = ["true", "mostly-true", "half-true", "no-flip", "half-flip"]
FAKE_RAW = ["false", "mostly-false", "barely-true", "pants-fire", "full-flop"]

PUNCT = "?!.,;:"

EXTRA_WORDS = [
    "the", "a", "an", "of", "to", "in", "and", "is", "are", "was", "for", "on",
    "that", "with", "by", "as", "at", "from", "says", "said", "new", "state",
    "government", "people", "year", "percent", "money", "plan", "law", "bill",
    "president", "senate", "house", "vote", "voters", "tax", "taxes", "jobs",
    "fake", "true", "false", "news", "report", "claim", "china", "america",
    "obama", "trump", "google", "russia", "invited", "immigrants", "economy",
]


def tokens(text):
    out = []
    for chunk in text.split():
        core = chunk.rstrip(PUNCT)
        if core:
            out.append(core.lower())
        out.extend(chunk[len(core):])
    return out


def pick(rng, aligned, other, p_aligned):
    return rng.choice(aligned if rng.random() < p_aligned else other)


def make_statement(rng, template):
    return template.format(
        name=rng.choice(FAKE_NAMES),
        tname=rng.choice(TRUE_NAMES),
        adj=rng.choice(FAKE_ADJ),
        group=rng.choice(GROUPS),
        noun=rng.choice(NOUNS),
        policy=rng.choice(POLICIES),
        num=rng.choice(["3", "4.5", "7", "12", "18", "25", "40"]),
        year=rng.choice(["2009", "2011", "2013", "2015"]),
    )


def make_items(rng):
    items = []
    for i in range(N_ITEMS):
        fake = i % 2 == 1
        speaker = pick(rng, SPEAKERS_FAKE if fake else SPEAKERS_TRUE,
                       SPEAKERS_TRUE if fake else SPEAKERS_FAKE, 0.8)
        context = pick(rng, CONTEXTS_FAKE if fake else CONTEXTS_TRUE,
                       CONTEXTS_TRUE if fake else CONTEXTS_FAKE, 0.75)
        template = pick(rng, FAKE_TEMPLATES if fake else TRUE_TEMPLATES,
                        TRUE_TEMPLATES if fake else FAKE_TEMPLATES, 0.8)
        item = {"id": f"mc-{i + 1:04d}"}
        if rng.random() > 0.05:
            item["subject"] = rng.choice(SUBJECTS)
        item["context"] = context
        item["speaker"] = speaker
        if rng.random() > 0.15:
            item["targeting"] = rng.choice(TARGETS)
        item["statement"] = make_statement(rng, template)
        item["label"] = rng.choice(FAKE_RAW if fake else TRUE_RAW)
        items.append(item)
    rng.shuffle(items)
    return items


def word_vector(word, dim):
    digest = hashlib.sha256(f"{dim}:{word}".encode()).digest()
    rng = random.Random(int.from_bytes(digest[:8], "little"))
    return [rng.gauss(0.0, 0.4) for _ in range(dim)]


def write_vectors(path, vocab, dim):
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for word in vocab:
            values = " ".join(f"{v:.5f}" for v in word_vector(word, dim))
            f.write(f"{word} {values}\n")


def main():
    out_dir = sys.argv[1] if len(sys.argv) > 1 else os.path.join(os.path.dirname(__file__), "..")
    rng = random.Random(SEED)
    items = make_items(rng)
    with open(os.path.join(out_dir, "mini_corpus.jsonl"), "w", encoding="utf-8", newline="\n") as f:
        for item in items:
            f.write(json.dumps(item, ensure_ascii=False) + "\n")

    vocab = set(EXTRA_WORDS)
    for item in items:
        for field in ("subject", "context", "speaker", "targeting", "statement"):
            if field in item:
                vocab.update(tokens(item[field]))
    vocab = sorted(vocab)
    write_vectors(os.path.join(out_dir, "vectors-50d.txt"), vocab, 50)
    write_vectors(os.path.join(out_dir, "vectors-300d.txt"), vocab, 300)
    print(f"{len(items)} items, {len(vocab)} words")


if __name__ == "__main__":
    main()
