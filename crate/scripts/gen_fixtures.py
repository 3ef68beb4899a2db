#!/usr/bin/env python3
"""Generate the synthetic annotation corpus used by tests and examples.

The corpus has 1,050 rows annotated by three annotators. 756 rows are
unanimous (367 in favor, 327 against, 62 neutral or unclear); the remaining
294 rows carry at least one disagreeing annotation.
"""
import csv
import random
import sys

FAVOR = [
    "Just got my daughter her second Gardasil dose today, so grateful this vaccine exists",
    "The HPV vaccine prevents cervical cancer and the data keep getting stronger every year",
    "Reminder that HPV vaccination is recommended for boys too, it protects against several cancers",
    "Our clinic is offering free HPV shots this weekend, please bring your kids",
    "Studies from Scotland show near elimination of cervical precancers in vaccinated cohorts",
    "Proud to be vaccinated against HPV, talk to your doctor about the jab",
    "HPV vaccine is one of the safest and most effective tools we have against cancer",
]
AGAINST = [
    "Gardasil ruined my niece's health and nobody wants to talk about the side effects",
    "They push the HPV shot on eleven year olds without telling parents the real risks",
    "I will never let my kids get the HPV vaccine, the trials were rushed and hidden",
    "So many girls reporting fertility problems after the HPV jab, wake up people",
    "The HPV vaccine is a money grab by pharma and the injuries are being covered up",
    "Why are schools pressuring children into Gardasil when the long term safety is unknown",
    "Another story of a healthy teen collapsing after the HPV shot, this has to stop",
]
NEUTRAL = [
    "Does anyone know if insurance covers the HPV vaccine for adults over 26",
    "Reading about the history of HPV vaccine policy in different countries",
    "My doctor mentioned the HPV vaccine at my checkup, still thinking about it",
    "New podcast episode discusses both the benefits and concerns around HPV vaccination",
    "HPV vaccine appointment schedules changed at the county clinic this month",
]
FILLER = [
    "#HPV", "#Gardasil", "#vaccines", "#publichealth", "#parenting", "#health",
    "read the thread below", "link in bio", "source: local news", "thoughts?",
    "sharing for awareness", "more details soon", "posted by a friend",
    "again this week", "from the school newsletter", "via @healthdesk",
]

LABELS = {"F": "in favor", "A": "against", "N": "neutral or unclear"}
SPELLINGS = {
    "F": ["in favor", "In Favor", "in-favor", "IN FAVOR"],
    "A": ["against", "Against", "AGAINST"],
    "N": ["neutral or unclear", "Neutral or Unclear", "neutral-or-unclear"],
}
BANK = {"F": FAVOR, "A": AGAINST, "N": NEUTRAL}


def tweet(rng, stance):
    parts = [rng.choice(BANK[stance])]
    target = rng.randint(150, 280)
    while len(", ".join(parts)) < target:
        parts.append(rng.choice(FILLER + BANK[stance]))
    text = ", ".join(parts)[:280].rstrip(" ,")
    if rng.random() < 0.1:
        text = '"' + text[:200] + '" ' + rng.choice(FILLER)
    return text


def main(out):
    rng = random.Random(20231)
    rows = []
    for stance, n in (("F", 367), ("A", 327), ("N", 62)):
        for _ in range(n):
            anns = [rng.choice(SPELLINGS[stance]) for _ in range(3)]
            rows.append((tweet(rng, stance), anns))
    for _ in range(294):
        majority = rng.choice("FFAAN")
        other = rng.choice([s for s in "FAN" if s != majority])
        anns = [majority, majority, other]
        rng.shuffle(anns)
        rows.append((tweet(rng, majority), [rng.choice(SPELLINGS[a]) for a in anns]))
    rng.shuffle(rows)
    with open(out, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["post_id", "text", "ann1", "ann2", "ann3"])
        for i, (text, anns) in enumerate(rows):
            w.writerow([f"t{i + 1:04d}", text] + anns)


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else "fixtures/annotations.csv")
