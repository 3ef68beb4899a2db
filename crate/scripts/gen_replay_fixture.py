#!/usr/bin/env python3
"""Builds the replay completion fixture and its expected condition table.

Usage:
    stancebench split --corpus fixtures/annotations.csv --seed 7 --out /tmp/split.jsonl
    stancebench gen-prompts --split /tmp/split.jsonl --seed 7 --out /tmp/prompts.jsonl
    python3 scripts/gen_replay_fixture.py /tmp/split.jsonl /tmp/prompts.jsonl fixtures/replay

Writes completions.jsonl, reviews.jsonl (the reviewer decisions for every
completion the extraction rules cannot settle) and expected_table.csv. The
table is computed here, independently of the Rust evaluator.
"""

import json
import random
import sys
from collections import defaultdict
from pathlib import Path

LABELS = ["in favor", "against", "neutral or unclear"]
TARGET = ("stratified", 6, "detailed")
# rows gold, columns predicted, in LABELS order
TARGET_MATRIX = [[183, 0, 1], [0, 161, 2], [4, 7, 20]]

REASONS = [
    "The tweet encourages parents to get their kids the shot.",
    "It repeats claims about side effects.",
    "The author shares a news link without comment.",
    "The tweet talks about cervical cancer prevention.",
    "It questions the safety data.",
    "The post mentions a clinic appointment.",
]


def load(path):
    with open(path) as f:
        return [json.loads(line) for line in f if line.strip()]


def error_rates(template, sampling, shots):
    """Per-gold-class probability of a wrong label."""
    base = 0.06 if template == "detailed" else 0.08
    if sampling == "none":
        base += 0.03
    else:
        base -= min(shots, 12) * 0.002
        base += max(shots - 15, 0) * 0.001
    neutral = 0.45 if sampling != "stratified" else 0.35
    return [base, base, neutral + (0.05 if sampling == "none" else 0.0)]


def clean_text(label, rng):
    style = rng.random()
    if style < 0.55:
        return rng.choice([label, label.title(), label.capitalize()])
    if style < 0.80:
        return f"{label.capitalize()}. {rng.choice(REASONS)}"
    if style < 0.92:
        return f"The stance of this tweet is {label}."
    return f"Stance: {label.title()}"


def restatement(templates):
    text = templates["basic"]
    start = text.index("If there is no indication")
    return text[start : text.index(", please also", start)] + "."


def ill_formatted(intended, rng, templates):
    """Returns (raw_text, expected suggested category, reviewer label)."""
    kind = rng.randrange(7)
    if kind == 0:
        return "", "empty_response", "neutral or unclear"
    if kind == 1:
        return "I'm sorry, but I cannot determine the stance of this tweet.", "apology_or_hallucination", "neutral or unclear"
    if kind == 2:
        other = rng.choice([l for l in LABELS if l != intended])
        return f"Some would read it as {intended}, others as {other}.", "dual_stance", intended
    if kind == 3:
        return "Stance:\nStance:\nStance:\nStance:", "infinite_repetition", intended
    if kind == 4:
        word = {"in favor": "Positive", "against": "Negative", "neutral or unclear": "Mixed, leaning positive"}[intended]
        return f"{word}.", "creating_new_stance", intended
    if kind == 5:
        return restatement(templates), "task_restatement", intended
    return f"Tweet {rng.randrange(2, 31)}", "no_label", intended


def f1_report(pairs):
    f1s, supports = [], []
    for c in LABELS:
        tp = sum(1 for g, p in pairs if g == c and p == c)
        fp = sum(1 for g, p in pairs if g != c and p == c)
        fn = sum(1 for g, p in pairs if g == c and p != c)
        prec = tp / (tp + fp) if tp + fp else 0.0
        rec = tp / (tp + fn) if tp + fn else 0.0
        f1s.append(2 * prec * rec / (prec + rec) if prec + rec else 0.0)
        supports.append(tp + fn)
    n = len(pairs)
    macro = sum(f1s) / 3
    weighted = sum(f * s for f, s in zip(f1s, supports)) / n
    return weighted, macro


def main(split_path, prompts_path, out_dir):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    split = load(split_path)
    header, records = split[0], split[1:]
    gold = {r["post_id"]: r["gold"] for r in records if r["side"] == "test"}
    prompts = load(prompts_path)
    templates = json.loads(Path(prompts_path).with_suffix(".templates.json").read_text())
    rng = random.Random(20240601)

    # fixed confusion assignment for the target cell
    target_pred = {}
    target = sorted(
        (p for p in prompts if (p["sampling"], p["shots"], p["template"]) == TARGET),
        key=lambda p: p["prompt_id"],
    )
    by_gold = defaultdict(list)
    for p in target:
        by_gold[gold[p["test_post_id"]]].append(p["prompt_id"])
    for gi, g in enumerate(LABELS):
        ids = by_gold[g]
        rng.shuffle(ids)
        assert len(ids) == sum(TARGET_MATRIX[gi]), (g, len(ids))
        i = 0
        for pi, count in enumerate(TARGET_MATRIX[gi]):
            for pid in ids[i : i + count]:
                target_pred[pid] = LABELS[pi]
            i += count

    completions, reviews = [], []
    final = defaultdict(list)
    for p in sorted(prompts, key=lambda p: p["prompt_id"]):
        key = (p["sampling"], p["shots"], p["template"])
        g = gold[p["test_post_id"]]
        if p["prompt_id"] in target_pred:
            intended = target_pred[p["prompt_id"]]
        else:
            err = error_rates(p["template"], p["sampling"], p["shots"])[LABELS.index(g)]
            intended = g if rng.random() >= err else rng.choice([l for l in LABELS if l != g])
        if key != TARGET and rng.random() < 0.004:
            raw, category, reviewed = ill_formatted(intended, rng, templates)
            reviews.append({"prompt_id": p["prompt_id"], "label": reviewed, "category": category})
            label = reviewed
        else:
            raw = clean_text(intended, rng)
            label = intended
        completions.append({"prompt_id": p["prompt_id"], "raw_text": raw, "finish_reason": "stop"})
        final[key].append((g, label))

    with open(out / "completions.jsonl", "w") as f:
        for c in completions:
            f.write(json.dumps(c, ensure_ascii=False, separators=(",", ":")) + "\n")
    with open(out / "reviews.jsonl", "w") as f:
        for r in reviews:
            f.write(json.dumps(r, separators=(",", ":")) + "\n")

    section = {"random": 0, "stratified": 1, "none": 2}
    keys = sorted(final, key=lambda k: (section[k[0]], k[1], k[2]))
    lines = [
        "# model: gpt-4-turbo",
        "# counter_kind: approximate(4 chars/token)",
        f"# seed: {header['seed']}",
        "# support_threshold: 100",
        "sampling,shots,template,weighted_f1,macro_f1,support,low_support",
    ]
    for k in keys:
        weighted, macro = f1_report(final[k])
        n = len(final[k])
        lines.append(f"{k[0]},{k[1]},{k[2]},{weighted:.2f},{macro:.2f},{n},{'true' if n < 100 else 'false'}")
    lines.append("# metrics rendered to 2 decimals; precision, recall or F1 with a zero denominator is 0")
    (out / "expected_table.csv").write_text("\n".join(lines) + "\n")
    print(f"{len(completions)} completions, {len(reviews)} review decisions")


if __name__ == "__main__":
    main(*sys.argv[1:4])
