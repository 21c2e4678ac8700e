"""Regenerates ratings.csv and accuracy_scores.jsonl.

ratings.csv rates the stimuli of the bundled pipeline run (config.json,
seed 42, ten inputs, two prompts) by three teachers.

accuracy_scores.jsonl holds 120 scored stimuli: 60 inputs under each of the
traditional and assertion prompts, 31 and 40 of them accurate.
"""
import csv
import json
import random

rng = random.Random(7)

SAMPLED = ["17", "5", "18", "19", "11", "9", "14", "7", "4", "6"]

with open("ratings.csv", "w", newline="") as f:
    w = csv.writer(f, lineterminator="\n")
    w.writerow(["stimulus_id", "teacher_id", "statement", "likert"])
    for input_id in SAMPLED:
        for variant, base in (("traditional", 3), ("assertion", 4)):
            for teacher in ("t01", "t02", "t03"):
                for statement in range(1, 6):
                    likert = min(5, max(1, base + rng.choice((-1, 0, 0, 1))))
                    w.writerow([f"{input_id}:{variant}", teacher, statement, likert])


def stimulus(input_id, variant, accurate):
    s1, s2 = (rng.choice((4.0, 4.5, 5.0)), rng.choice((4.0, 5.0))) if accurate else (rng.choice((2.0, 3.0)), rng.choice((3.0, 4.0)))
    rest = [rng.choice((2.0, 3.0, 4.0, 5.0)) for _ in range(3)]
    acc = 1 if accurate else 0
    return {
        "stimulus_id": f"{input_id}:{variant}",
        "input_id": input_id,
        "prompt_variant": variant,
        "s": [s1, s2] + rest,
        "accuracy": acc,
        "quality": (acc + sum(rest)) / 4,
        "seen": None,
        "complexity": None,
    }


rows = []
for variant, ones in (("traditional", 31), ("assertion", 40)):
    flags = [True] * ones + [False] * (60 - ones)
    rng.shuffle(flags)
    rows += [stimulus(f"s{i:02d}", variant, a) for i, a in enumerate(flags)]

with open("accuracy_scores.jsonl", "w") as f:
    for r in rows:
        f.write(json.dumps(r, separators=(",", ":")) + "\n")
