#!/usr/bin/env python3
"""Regenerates tests/fixtures/articles.jsonl.

Twenty synthetic news articles. Fact sentences use relation phrases the mock
provider can extract and chain across articles; filler sentences are checked
to contain no relation phrase and no opinion marker so they only add bulk.
"""

import json
import random
import re
from pathlib import Path

HERE = Path(__file__).resolve().parent

RELATIONS = [
    "signed with", "plays for", "played for", "is coached by", "coached", "is based in", "is located in",
    "defeated", "beat", "won", "hosted", "owns", "acquired", "was diagnosed with", "led to", "causes",
    "caused", "treats", "is treated with", "had", "joined", "manages", "sponsors", "partnered with",
    "developed", "approved", "funded", "reduced", "increased", "published", "discovered", "leads",
    "founded", "is part of", "belongs to", "was born in", "moved to", "appointed", "will face", "faced",
    "transferred to", "produces", "manufactures", "contains", "prevents", "targets", "indicates",
    "will persist", "studied", "trains at", "plays home games at", "is headquartered in", "is made by",
    "competes in", "was founded by", "is sponsored by", "recommended", "is caused by", "is linked to",
    "regulates", "inspected", "supplies", "raises the risk of", "is an ingredient in", "scored for",
]
OPINION = [
    "i think", "i believe", "in my opinion", "i feel", "we believe", "should", "must", "best", "worst",
    "terrible", "amazing", "awful", "brilliant", "wonderful", "disappoint", "poorly", "probably",
    "arguably", "seems", "hopefully", "unfortunately", "love", "hate", "deserve", "overrated", "shameful",
    "fantastic", "sadly", "perhaps", "might be", "it is clear that", "surely", "frankly", "beautiful",
    "boring", "ought", "needs to", "too much", "horrible", "incredible", "great",
]


def fold(s):
    return " ".join(re.sub(r"[^a-z0-9]+", " ", s.lower()).split())


def has_relation(s):
    padded = " " + " ".join(s.lower().split()) + " "
    return any(f" {r} " in padded for r in RELATIONS)


def is_opinion(s):
    if s.rstrip()[-1] in "?!":
        return True
    padded = " " + fold(s) + " "
    return any(" " + m in padded for m in OPINION)


# Chains of facts. Each entry is a sentence with exactly one relation phrase.
FACTS = {
    "sports": [
        "Marcus Reed signed with Harbor City FC.",
        "Dana Voss coached Harbor City FC.",
        "Harbor City FC plays home games at Granite Arena.",
        "Granite Arena in Riverton hosted the Coastal Cup final.",
        "The Coastal Cup final is sponsored by Northwind Airlines.",
        "The Harbor City FC defeated Riverton United.",
        "Riverton United trains at Millbrook Stadium.",
        "Millbrook Stadium is located in Port Elias.",
        "Elena Brandt scored for Riverton United.",
        "Riverton United competes in the National Soccer League.",
        "The NSL appointed Tomas Grell.",
        "The National Soccer League appointed Tomas Grell.",
    ],
    "health": [
        "Actor Paul Kessler had elevated ketamine levels.",
        "Elevated ketamine levels in the blood led to respiratory depression.",
        "Respiratory depression is treated with naloxone.",
        "Naloxone is made by Calder Pharma.",
        "Calder Pharma is headquartered in Port Elias.",
        "The FDA inspected Calder Pharma.",
        "The Food and Drug Administration inspected Calder Pharma.",
        "The Food and Drug Administration regulates naloxone.",
        "Nurse Ada Lim joined the FDA.",
        "Nurse Ada Lim recommended naloxone kits.",
        "Naloxone kits prevents overdose deaths.",
    ],
    "tech": [
        "Jonah Pike founded Orbital Labs.",
        "Orbital Labs developed the Kestrel chip.",
        "The Kestrel chip is made by Tessera Foundry.",
        "Tessera Foundry is located in Lakemont.",
        "Lakemont is part of Meridian Province.",
        "Port Elias is part of Meridian Province.",
        "Orbital Labs partnered with Northwind Airlines.",
        "The European Space Agency funded Orbital Labs.",
        "The ESA studied the Kestrel chip.",
        "The European Space Agency studied the Kestrel chip.",
    ],
    "food": [
        "Harbor Foods supplies other countries.",
        "Harbor Foods manufactures Sunny Oat Bars.",
        "Sunny Oat Bars contains palm oil.",
        "Palm oil raises the risk of heart disease.",
        "Heart disease is treated with atorvastatin.",
        "Atorvastatin is made by Calder Pharma.",
        "Northwind Airlines acquired Harbor Foods.",
        "Palm oil from Sumatra is an ingredient in Sunny Oat Bars.",
    ],
}

# Sentences starting with a pronoun; resolution adds words, so the mock
# verifier rejects them.
PRONOUN = [
    "He joined the squad in March.",
    "She recommended nasal sprays for every ward.",
    "It developed a cooling system in two years.",
    "They acquired a rival bakery after a long review.",
]

OPINIONS = [
    "Many supporters think Granite Arena is the best venue in the region.",
    "Frankly, the new schedule seems unfair to smaller clubs.",
    "The ticket policy needs to change before the next season.",
    "Critics argue the rollout was handled poorly.",
    "Hopefully the clinic will expand its hours soon.",
    "The new chip is an amazing piece of engineering.",
    "Local officials should publish the full inspection report.",
    "Sadly, few residents attended the public hearing.",
    "Is this really the right moment for a merger?",
    "The snack aisle offers far too much sugar, say parents.",
]

SUBJECTS = ["The city council", "A regional survey", "The annual audit", "Local reporters", "The transit office",
            "A university panel", "The weather service", "The trade bureau", "Volunteers", "The statistics office",
            "Shop owners", "The port authority", "Commuters", "The planning board", "Researchers at the museum"]
VERBS = ["recorded", "counted", "listed", "tallied", "logged", "noted", "documented", "measured"]
OBJECTS = ["visitors", "bus trips", "rainy days", "new permits", "shipping containers", "school enrollments",
           "library loans", "bicycle rentals", "power outages", "market stalls", "hotel bookings",
           "road repairs", "tree plantings", "museum tickets", "ferry crossings"]
PERIODS = ["in the spring", "during the summer", "over the winter", "in the first quarter", "last autumn",
           "across the holiday weeks", "in the previous month", "over two weekends"]
PLACES = ["near the harbor", "in the old town", "along the river path", "at the northern depot",
          "in the western district", "beside the rail yard", "around the central square"]
WEEKDAYS = ["Monday", "Tuesday", "Wednesday", "Thursday", "Friday"]


def filler(rng):
    kind = rng.randrange(4)
    if kind == 0:
        s = f"{rng.choice(SUBJECTS)} {rng.choice(VERBS)} {rng.randint(12, 9800)} {rng.choice(OBJECTS)} {rng.choice(PERIODS)}."
    elif kind == 1:
        s = (f"According to figures released on {rng.choice(WEEKDAYS)}, {rng.choice(OBJECTS)} "
             f"{rng.choice(PLACES)} rose by {rng.randint(2, 40)} percent.")
    elif kind == 2:
        s = (f"The {rng.choice(['north', 'south', 'east', 'west'])} section {rng.choice(PLACES)} reopened "
             f"on {rng.choice(WEEKDAYS)} after {rng.randint(2, 19)} days of maintenance work.")
    else:
        s = (f"{rng.choice(SUBJECTS)} said {rng.randint(3, 60)} staff members would review "
             f"{rng.choice(OBJECTS)} {rng.choice(PERIODS)}.")
    assert not has_relation(s) and not is_opinion(s), s
    return s


def tokens(text):
    return len(re.findall(r"\w+|[^\w\s]", text))


def main():
    for group in FACTS.values():
        for s in group:
            assert has_relation(s) and not is_opinion(s), s
    for s in OPINIONS:
        assert is_opinion(s), s

    rng = random.Random(20240607)
    topics = list(FACTS)
    records = []
    for i in range(20):
        topic = topics[i % len(topics)]
        facts = FACTS[topic]
        # Each article carries a rotating window of its topic's chain plus one
        # fact borrowed from the next topic, so chains cross articles.
        start = (i // len(topics)) * 3 % len(facts)
        chosen = [facts[(start + j) % len(facts)] for j in range(5)]
        other = FACTS[topics[(i + 1) % len(topics)]]
        chosen.append(other[i % len(other)])
        specials = chosen + [OPINIONS[i % len(OPINIONS)], OPINIONS[(i + 3) % len(OPINIONS)]]
        if i % 3 == 0:
            specials.append(PRONOUN[(i // 3) % len(PRONOUN)])
        body = [filler(rng) for _ in range(6)]
        for s in specials:
            body.insert(rng.randrange(len(body) + 1), s)
        while tokens(" ".join(body)) < 540:
            body.insert(rng.randrange(len(body) + 1), filler(rng))
        paragraphs = [" ".join(body[k:k + 6]) for k in range(0, len(body), 6)]
        records.append({
            "id": f"art-{i:02d}",
            "source": f"fixture-{topic}",
            "published_at": f"2024-0{1 + i % 9}-{10 + i:02d}",
            "domain": topic,
            "text": "\n\n".join(paragraphs),
        })

    with open(HERE / "articles.jsonl", "w") as f:
        for r in records:
            f.write(json.dumps(r, sort_keys=True) + "\n")


if __name__ == "__main__":
    main()
