#!/usr/bin/env python3
"""Deterministic synthetic corpus for training and evaluation.

Sentences come from a small templated grammar with strong collocations, so a
masked-LM objective has real structure to learn while the vocabulary stays
small (~250 distinct words). Regenerating with the same arguments reproduces
the committed files byte for byte.
"""

import argparse
import random

DETERMINERS = ["the", "a", "every", "this", "that", "some"]

ADJECTIVES = [
    "red", "blue", "green", "small", "large", "quiet", "busy", "bright",
    "ancient", "modern", "narrow", "wide", "cold", "warm", "dusty", "clean",
]

ANIMALS = [
    "cat", "dog", "fox", "owl", "horse", "rabbit", "sparrow", "badger",
    "otter", "heron",
]

PLACES = [
    "garden", "market", "harbor", "library", "meadow", "village", "kitchen",
    "workshop", "orchard", "station",
]

OBJECTS = [
    "basket", "lantern", "ladder", "letter", "bottle", "wheel", "rope",
    "mirror", "candle", "barrel", "map", "clock",
]

PEOPLE = [
    "baker", "sailor", "teacher", "farmer", "painter", "carpenter",
    "gardener", "miller", "weaver", "clerk",
]

MOTION_VERBS = ["walks", "runs", "wanders", "hurries", "drifts", "climbs"]
ACTION_VERBS = ["carries", "finds", "repairs", "paints", "watches", "borrows", "sells", "hides"]
SPEECH_VERBS = ["says", "whispers", "explains", "repeats"]

ADVERBS = ["slowly", "quickly", "carefully", "quietly", "often", "rarely", "always"]
PREPOSITIONS = ["near", "behind", "beside", "under", "toward", "across"]

TIMES = ["morning", "evening", "afternoon", "night", "winter", "summer", "autumn", "spring"]

WEATHER = ["rain", "wind", "snow", "fog", "sunlight", "frost"]

TEMPLATES = [
    "{det} {adj} {animal} {motion} {prep} {det2} {place} {adv}",
    "{det} {person} {action} {det2} {adj} {object} in {det3} {place}",
    "in {det} {place} {det2} {person} {action} {det3} {object} {adv}",
    "{det} {animal} and {det2} {animal2} {motion} toward {det3} {place}",
    "every {time} {det} {person} {action} {det2} {object} {prep} {det3} {place}",
    "{det} {adj} {person} {speech} that {det2} {animal} {motion} {adv}",
    "{weather} falls over {det} {place} while {det2} {person} {action} {det3} {object}",
    "{det} {person} {speech} that {det2} {adj} {object} is {prep} {det3} {place}",
    "{det} {adj} {animal} {action} {det2} {object} every {time}",
    "when {weather} comes {det} {person} and {det2} {person2} {motion} {prep} {det3} {place}",
]


def sentence(rng: random.Random) -> str:
    template = rng.choice(TEMPLATES)
    return template.format(
        det=rng.choice(DETERMINERS),
        det2=rng.choice(DETERMINERS),
        det3=rng.choice(DETERMINERS),
        adj=rng.choice(ADJECTIVES),
        animal=rng.choice(ANIMALS),
        animal2=rng.choice(ANIMALS),
        place=rng.choice(PLACES),
        object=rng.choice(OBJECTS),
        person=rng.choice(PEOPLE),
        person2=rng.choice(PEOPLE),
        motion=rng.choice(MOTION_VERBS),
        action=rng.choice(ACTION_VERBS),
        speech=rng.choice(SPEECH_VERBS),
        adv=rng.choice(ADVERBS),
        prep=rng.choice(PREPOSITIONS),
        time=rng.choice(TIMES),
        weather=rng.choice(WEATHER),
    )


def line(rng: random.Random) -> str:
    return ". ".join(sentence(rng) for _ in range(rng.randint(1, 2))) + "."


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--lines", type=int, default=2600)
    parser.add_argument("--seed", type=int, default=20240901)
    parser.add_argument("--out", default="data/synthetic_corpus.txt")
    args = parser.parse_args()

    rng = random.Random(args.seed)
    with open(args.out, "w", encoding="ascii") as f:
        for _ in range(args.lines):
            f.write(line(rng) + "\n")


if __name__ == "__main__":
    main()
