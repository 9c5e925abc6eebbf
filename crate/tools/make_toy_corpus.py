#!/usr/bin/env python3
"""Regenerates crates/core/data/toy.train.txt and toy.valid.txt.

Synthetic sentences with productive morphology, plus a short public-domain
excerpt (opening of Lewis Carroll's "Alice's Adventures in Wonderland",
1865). Output is one pre-tokenized, lower-cased sentence per line.
"""

import pathlib
import random
import re

SEED = 1865
N_TRAIN = 1800
N_VALID = 200

VERBS = """walk talk play jump climb paint cook clean open help watch call visit
plant pull push count fix wash kick lift carry follow answer borrow
gather listen order travel wander whisper mend fold""".split()
NOUNS = """cat dog bird horse garden river window teacher farmer painter
singer baker kitten market forest village bridge basket ladder letter
candle pocket rabbit tower lantern meadow harbor kettle button wagon
sailor hammer blanket pencil orchard""".split()
ADJS = """quick slow quiet loud small tall bright dark warm cold soft kind
bold calm sharp""".split()
NAMES = """anna boris clara david elena felix greta hugo""".split()
PLACES = """market forest village garden river meadow harbor tower""".split()
ADVS = """today yesterday again often never always""".split()
PREFIXES = ["un", "re"]


def third(v):
    if v.endswith(("sh", "ch", "x")) or v == "fix":
        return v + "es"
    if v.endswith("y") and v[-2] not in "aeiou":
        return v[:-1] + "ies"
    return v + "s"


def past(v):
    if v.endswith("e"):
        return v + "d"
    if v.endswith("y") and v[-2] not in "aeiou":
        return v[:-1] + "ied"
    return v + "ed"


def gerund(v):
    if v.endswith("e"):
        return v[:-1] + "ing"
    return v + "ing"


def plural(n):
    if n.endswith(("sh", "ch", "x", "s")):
        return n + "es"
    return n + "s"


def comparative(a):
    return a + "er"


def superlative(a):
    return a + "est"


def adverb(a):
    return a + "ly"


def np(r):
    n = r.choice(NOUNS)
    roll = r.random()
    if roll < 0.3:
        return ["the", r.choice(ADJS), n]
    if roll < 0.5:
        return ["the", plural(n)]
    if roll < 0.6:
        return ["the", superlative(r.choice(ADJS)), n]
    if roll < 0.7:
        return [r.choice(NAMES)]
    return ["the", n]


def sentence(r):
    kind = r.randrange(6)
    v = r.choice(VERBS)
    if kind == 0:
        return np(r) + [past(v)] + np(r) + [r.choice(ADVS)]
    if kind == 1:
        return [r.choice(NAMES), third(v)] + np(r) + ["in", "the", r.choice(PLACES)]
    if kind == 2:
        return np(r) + ["was", gerund(v), adverb(r.choice(ADJS))]
    if kind == 3:
        a = r.choice(ADJS)
        return np(r) + ["is", comparative(a), "than"] + np(r)
    if kind == 4:
        p = r.choice(PREFIXES)
        return [r.choice(NAMES), "will", p + v] + np(r) + ["and", past(r.choice(VERBS)), "it"]
    return ["they", "were", gerund(v), "near", "the", plural(r.choice(NOUNS))]


ALICE = """
Alice was beginning to get very tired of sitting by her sister on the bank,
and of having nothing to do: once or twice she had peeped into the book her
sister was reading, but it had no pictures or conversations in it, "and what
is the use of a book," thought Alice "without pictures or conversations?"
So she was considering in her own mind (as well as she could, for the hot day
made her feel very sleepy and stupid), whether the pleasure of making a
daisy-chain would be worth the trouble of getting up and picking the daisies,
when suddenly a White Rabbit with pink eyes ran close by her.
There was nothing so very remarkable in that; nor did Alice think it so very
much out of the way to hear the Rabbit say to itself, "Oh dear! Oh dear! I
shall be late!" (when she thought it over afterwards, it occurred to her that
she ought to have wondered at this, but at the time it all seemed quite
natural); but when the Rabbit actually took a watch out of its
waistcoat-pocket, and looked at it, and then hurried on, Alice started to her
feet, for it flashed across her mind that she had never before seen a rabbit
with either a waistcoat-pocket, or a watch to take out of it, and burning with
curiosity, she ran across the field after it, and fortunately was just in time
to see it pop down a large rabbit-hole under the hedge.
In another moment down went Alice after it, never once considering how in the
world she was to get out again.
The rabbit-hole went straight on like a tunnel for some way, and then dipped
suddenly down, so suddenly that Alice had not a moment to think about
stopping herself before she found herself falling down a very deep well.
Either the well was very deep, or she fell very slowly, for she had plenty of
time as she went down to look about her and to wonder what was going to
happen next.
First, she tried to look down and make out what she was coming to, but it was
too dark to see anything; then she looked at the sides of the well, and
noticed that they were filled with cupboards and book-shelves; here and there
she saw maps and pictures hung upon pegs.
She took down a jar from one of the shelves as she passed; it was labelled
"ORANGE MARMALADE", but to her great disappointment it was empty: she did not
like to drop the jar for fear of killing somebody underneath, so managed to
put it into one of the cupboards as she fell past it.
"""


def tokenize_excerpt(text):
    text = " ".join(text.split()).lower()
    sentences = re.split(r"(?<=[.!?])\s+", text)
    out = []
    for s in sentences:
        toks = re.findall(r"[a-z]+(?:-[a-z]+)*|[^\sa-z]", s)
        if toks:
            out.append(toks)
    return out


def main():
    r = random.Random(SEED)
    root = pathlib.Path(__file__).resolve().parent.parent / "crates" / "core" / "data"
    train = [sentence(r) for _ in range(N_TRAIN)]
    excerpt = tokenize_excerpt(ALICE)
    # Interleave the excerpt so it is not one contiguous block.
    step = len(train) // (len(excerpt) + 1)
    for i, s in enumerate(excerpt):
        train.insert((i + 1) * step + i, s)
    valid = [sentence(r) for _ in range(N_VALID)]
    (root / "toy.train.txt").write_text("".join(" ".join(s) + "\n" for s in train))
    (root / "toy.valid.txt").write_text("".join(" ".join(s) + "\n" for s in valid))


if __name__ == "__main__":
    main()
