#!/usr/bin/env python3
"""Regenerates data/mini_corpus: 140 general documents and 60 labeled pairs.

The text is synthetic but shaped like news/encyclopedic prose so every
pipeline stage has something to do: a few near-duplicates, non-English
documents, one document past the 4096-word limit, short leads that fail the
length gate, and long supervised documents that trigger succinct truncation.
"""
import json
import random
from pathlib import Path

rng = random.Random(20231006)

SUBJECTS = ["The city council", "A research team", "The regional hospital", "Local farmers",
            "The transport authority", "A group of volunteers", "The university library",
            "Engineers at the plant", "The school board", "Museum curators", "The weather service",
            "Residents of the valley", "The national archive", "A small software company",
            "Fishermen on the coast", "The health ministry", "Teachers in the district"]
VERBS = ["announced", "approved", "reviewed", "completed", "proposed", "delayed", "expanded",
         "published", "tested", "questioned", "funded", "launched", "documented", "rebuilt"]
OBJECTS = ["a new water treatment project", "the annual budget for public parks",
           "a study of river pollution", "plans for a wider bridge", "a program for night buses",
           "the restoration of an old theatre", "a survey of nesting birds",
           "new rules for street parking", "a report on energy prices", "a pilot for solar roofs",
           "the digital catalogue of rare maps", "a vaccination campaign for children",
           "repairs to the northern dam", "a training course for nurses", "an early warning system"]
DETAILS = ["after months of public debate", "despite concerns about the cost",
           "with support from several neighbouring towns", "according to officials familiar with the matter",
           "following a long period of heavy rain", "as part of a five year plan",
           "because demand rose sharply last winter", "while critics asked for more evidence",
           "in response to complaints from residents", "with help from a national grant"]
FOLLOWUPS = ["Officials said the first phase would begin in the spring.",
             "Several residents attended the meeting and asked detailed questions.",
             "The project is expected to employ around forty people.",
             "Critics argued that the timeline was too ambitious.",
             "A final decision is expected before the end of the year.",
             "The budget includes money for maintenance over the next decade.",
             "Independent experts will review the results in an open session.",
             "Similar programs in other regions have produced mixed results.",
             "Volunteers will collect data every week during the summer.",
             "The committee will publish a progress report every quarter."]
FILLER = ["weather", "market", "harbour", "orchard", "festival", "railway", "bakery", "garden",
          "stadium", "clinic", "village", "forest", "tunnel", "library", "factory", "island"]
ADJ = ["quiet", "busy", "historic", "modern", "crowded", "remote", "green", "coastal", "northern"]


def sentence():
    s = f"{rng.choice(SUBJECTS)} {rng.choice(VERBS)} {rng.choice(OBJECTS)}"
    if rng.random() < 0.7:
        s += f" {rng.choice(DETAILS)}"
    return s + "."


def short_sentence():
    return f"{rng.choice(SUBJECTS)} {rng.choice(VERBS)} it."


def descriptive():
    words = [rng.choice(ADJ), rng.choice(FILLER)]
    n = rng.randint(6, 16)
    body = " ".join(rng.choice(FILLER + ADJ + ["and", "near", "with", "the", "of", "a"]) for _ in range(n))
    return f"The {words[0]} {words[1]} {body}."


def document(n_sentences, short_lead=False):
    sents = []
    if short_lead:
        sents += [short_sentence(), short_sentence()]
    while len(sents) < n_sentences:
        r = rng.random()
        sents.append(sentence() if r < 0.5 else rng.choice(FOLLOWUPS) if r < 0.75 else descriptive())
    paras, cur = [], []
    for s in sents:
        cur.append(s)
        if len(cur) >= rng.randint(3, 5):
            paras.append(" ".join(cur))
            cur = []
    if cur:
        paras.append(" ".join(cur))
    return "\n\n".join(paras)


def summary_of(doc):
    sents = [s.strip() + "." for s in doc.replace("\n", " ").split(".") if s.strip()]
    picked = rng.sample(sents, min(3, len(sents)))
    words = " ".join(picked).split()
    # light paraphrase: drop some words, add connective phrasing
    out = [w for i, w in enumerate(words) if i % 4 != 3]
    return "In summary, " + " ".join(out)


general = []
for i in range(131):
    n = rng.randint(6, 40)
    general.append({"id": f"gen-{i:03d}", "source": "General", "text": document(n, short_lead=(i % 9 == 4))})

# near-duplicates: casing and whitespace variants of earlier documents
for k, src in enumerate([3, 17, 42]):
    t = general[src]["text"]
    variant = t.upper() if k == 0 else "  " + t.replace(" ", "   ") if k == 1 else t.replace(".", " .")
    general.append({"id": f"gen-dup-{k}", "source": "General", "text": variant})

# non-English and symbol-heavy documents
general.append({"id": "gen-cjk-0", "source": "General", "text": "東京都は新しい公園の計画を発表しました。" * 12})
general.append({"id": "gen-cjk-1", "source": "General", "text": "Пресс-служба сообщила о новых правилах парковки в центре города. " * 8})
general.append({"id": "gen-sym-0", "source": "General", "text": "#### $$$ @@@ %%% ^^^ &&& *** +++ === ~~~ ||| " * 10})
general.append({"id": "gen-sym-1", "source": "General", "text": "→ ★ ☆ ♦ ♣ ♠ ♥ ✓ ✗ ∑ ∞ ≈ ≠ ≤ ≥ " * 10})

# one document past the truncation limit, and one without an id
long_doc = document(420)
general.append({"id": "gen-long", "source": "General", "text": long_doc})
general.append({"source": "General", "text": document(12)})
assert len(general) == 140

supervised = []
sources = ["CNNDM", "WikiHow", "ArXiv"]
for i in range(60):
    n = rng.randint(10, 45) if i % 3 else rng.randint(25, 60)
    doc = document(n)
    supervised.append({"id": f"sup-{i:03d}", "source": sources[i % 3], "document": doc, "summary": summary_of(doc)})

out = Path(__file__).resolve().parent.parent / "data" / "mini_corpus"
out.mkdir(parents=True, exist_ok=True)
with open(out / "general.jsonl", "w", encoding="utf-8", newline="\n") as f:
    for r in general:
        f.write(json.dumps(r, ensure_ascii=False) + "\n")
with open(out / "supervised.jsonl", "w", encoding="utf-8", newline="\n") as f:
    for r in supervised:
        f.write(json.dumps(r, ensure_ascii=False) + "\n")
print(len(general), len(supervised), "long doc words:", len(long_doc.split()))
