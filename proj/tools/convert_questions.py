#!/usr/bin/env python3
"""Convert an external question file into streammem questions JSONL.

Input is a JSON array or JSONL of records. Field names are configurable so
one script covers most benchmark layouts:

  convert_questions.py in.json out.jsonl --time-field realtime \
      --options-field options --answer-field answer

Ask times may be seconds or "HH:MM:SS(.fff)" strings. Options may be a list
of strings (lettered A, B, ...), a list of "A. text" strings, or a dict of
letter -> text. The answer may be a letter, a 0-based index or the option
text. Output lines are sorted by asked_at_s and checked for duplicate ids.
"""

import argparse
import json
import re
import string
import sys

LETTERED = re.compile(r"^\s*\(?([A-Z])[.)]\s*(.*)$", re.S)


def parse_time(value):
    if isinstance(value, (int, float)):
        return float(value)
    parts = str(value).strip().split(":")
    seconds = 0.0
    for p in parts:
        seconds = seconds * 60 + float(p)
    return seconds


def parse_options(value):
    if value is None:
        return []
    if isinstance(value, dict):
        return [{"letter": str(k).strip().upper(), "text": str(v)} for k, v in value.items()]
    out = []
    for i, item in enumerate(value):
        m = LETTERED.match(str(item))
        if m:
            out.append({"letter": m.group(1), "text": m.group(2).strip()})
        else:
            out.append({"letter": string.ascii_uppercase[i], "text": str(item)})
    return out


def parse_gold(value, options):
    if isinstance(value, int) and options:
        return options[value]["letter"]
    text = str(value).strip()
    letters = {o["letter"] for o in options}
    m = LETTERED.match(text)
    if m and m.group(1) in letters:
        return m.group(1)
    if text.upper() in letters:
        return text.upper()
    for o in options:
        if o["text"].strip().lower() == text.lower():
            return o["letter"]
    if options:
        raise ValueError(f"answer {value!r} matches no option")
    return text


def read_records(path):
    with open(path, encoding="utf-8") as f:
        text = f.read()
    stripped = text.lstrip()
    if stripped.startswith("["):
        return json.loads(text)
    return [json.loads(line) for line in text.splitlines() if line.strip()]


def convert(records, args):
    out = []
    seen = set()
    for n, r in enumerate(records, 1):
        try:
            qid = str(r.get(args.id_field, f"q{n}")) if args.id_field else f"q{n}"
            if args.id_prefix:
                qid = args.id_prefix + qid
            if qid in seen:
                raise ValueError(f"duplicate id {qid!r}")
            seen.add(qid)
            asked = parse_time(r[args.time_field]) + args.time_offset
            if asked < 0:
                raise ValueError(f"negative ask time {asked}")
            options = parse_options(r.get(args.options_field))
            item = {
                "id": qid,
                "asked_at_s": asked,
                "question": str(r[args.question_field]),
                "options": options,
                "gold": parse_gold(r[args.answer_field], options),
            }
            if args.category_field and r.get(args.category_field) is not None:
                item["category"] = str(r[args.category_field])
            out.append(item)
        except (KeyError, ValueError, IndexError) as e:
            raise SystemExit(f"record {n}: {e}") from None
    out.sort(key=lambda q: q["asked_at_s"])
    return out


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("input")
    p.add_argument("output", help="questions JSONL, '-' for stdout")
    p.add_argument("--id-field", default="id")
    p.add_argument("--id-prefix", default="")
    p.add_argument("--time-field", default="asked_at_s")
    p.add_argument("--time-offset", type=float, default=0.0, help="seconds added to every ask time")
    p.add_argument("--question-field", default="question")
    p.add_argument("--options-field", default="options")
    p.add_argument("--answer-field", default="answer")
    p.add_argument("--category-field", default="category")
    args = p.parse_args(argv)

    items = convert(read_records(args.input), args)
    lines = "".join(json.dumps(q, ensure_ascii=False) + "\n" for q in items)
    if args.output == "-":
        sys.stdout.write(lines)
    else:
        with open(args.output, "w", encoding="utf-8") as f:
            f.write(lines)
    print(f"wrote {len(items)} question(s)", file=sys.stderr)


if __name__ == "__main__":
    main()
