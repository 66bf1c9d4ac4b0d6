#!/usr/bin/env python3
"""Generates the bundled synthetic fixture tables for the end-to-end tests.

Deterministic by seed; rerunning overwrites the same bytes. The shapes mimic
the real dataset tables: businesses with category tags and weekday hours,
users with lifetime averages, reviews with integer star labels.
"""

import json
import random
from pathlib import Path

OUT = Path(__file__).resolve().parent.parent / "crates" / "refsent" / "fixtures"
rng = random.Random(20240811)

WEEKDAYS = ["Monday", "Tuesday", "Wednesday", "Thursday", "Friday", "Saturday", "Sunday"]
CUISINES = ["Italian", "Mexican", "Thai", "Indian", "Greek", "Vietnamese", "Ethiopian",
            "Japanese", "Korean", "French", "Spanish", "Turkish", "American (New)",
            "Seafood", "Vegetarian", "Pizza", "Breakfast & Brunch", "Cafes"]
NAME_A = ["Golden", "Rusty", "Blue", "Copper", "Velvet", "Maple", "Cedar", "Harbor",
          "Juniper", "Ivory", "Crimson", "Silver", "Amber", "Winding", "Lucky"]
NAME_B = ["Fork", "Spoon", "Table", "Kitchen", "Garden", "Lantern", "Oven", "Skillet",
          "Grove", "Anchor", "Bistro", "Tavern", "Pantry", "Hearth", "Orchard"]
STREETS = ["Main Street", "Oak Avenue", "River Road", "Elm Street", "Station Lane",
           "Market Square", "Hill Crest", "Garden Way"]

POSITIVE = [
    "Everything we ordered was cooked with real care and the staff made us feel at home.",
    "The tasting menu was a delight from the first bite to the last, and the service never missed a beat.",
    "Our server recommended the house special and it was easily the best plate I have had this year.",
    "Warm bread, generous portions, and a dessert that we are still talking about a week later.",
    "Fantastic spot for a quiet dinner; the seasonal menu keeps things interesting every visit.",
]
NEUTRAL = [
    "Solid neighborhood option. The food arrived quickly and tasted fine, though nothing stood out.",
    "Decent lunch stop with fair prices. Seating is tight at noon, so plan around the rush.",
    "The menu is broad and the kitchen is consistent, but the room gets loud on weekends.",
    "Reasonable portions and friendly enough service. I would come back if I were nearby.",
    "An average experience overall; some dishes landed and a couple felt uninspired.",
]
NEGATIVE = [
    "We waited nearly an hour past our reservation and the entrees came out lukewarm.",
    "The server forgot two of our dishes and the ones that arrived were badly over-salted.",
    "Sticky tables, a rushed waiter, and a bill that did not match the menu prices.",
    "The kitchen clearly had an off night; undercooked rice and a dry, flavorless roast.",
    "Disappointing from start to finish, and nobody checked on our table even once.",
]
MULTILINE = [
    "First the good news: the patio is lovely.\nNow the bad news: the food took ages.\r\nStill, the cocktails were strong.",
    "Came for the brunch special.\n\nThe pancakes were fluffy and the coffee kept coming.\nWould return with friends.",
]
NON_ENGLISH = [
    "料理はとても美味しく、店員さんも親切でした。また必ず行きたいお店です。雰囲気も最高でした。",
    "Сервис был очень медленным, но еда оказалась вкусной. Атмосфера приятная, вернусь ещё раз.",
]


def half_star(lo=1.0, hi=5.0):
    steps = int((hi - lo) * 2)
    return lo + rng.randint(0, steps) * 0.5


def hours_map(n_days):
    days = sorted(rng.sample(range(7), n_days))
    out = {}
    for d in days:
        open_h = rng.choice([7, 8, 9, 10, 11])
        close_h = rng.choice([14, 15, 17, 21, 22, 23])
        out[WEEKDAYS[d]] = f"{open_h}:{rng.choice([0, 0, 30])}-{close_h}:{rng.choice([0, 0, 30])}"
    return out


def main():
    OUT.mkdir(parents=True, exist_ok=True)

    businesses = []
    for i in range(1, 71):
        bid = f"fb{i:04d}"
        name = f"{rng.choice(NAME_A)} {rng.choice(NAME_B)}"
        cats = ["Restaurants", rng.choice(CUISINES)]
        address = f"{rng.randint(1, 999)} {rng.choice(STREETS)}"
        if i in (64, 65):           # excluded: fast food tag
            cats.append("Fast Food")
        if i in (66, 67):           # excluded: nightlife tag
            cats.append("Nightlife")
        if i == 68:                 # excluded: no fixed address
            address = ""
        if i in (69, 70):           # bar-only venues, not restaurants
            cats = ["Bars", "Nightlife"]
        biz = {
            "business_id": bid,
            "name": name,
            "address": address,
            "stars": half_star(),
            "categories": ", ".join(cats),
        }
        n_days = rng.choice([0, 3, 5, 5, 6, 6, 7, 7])
        if n_days:
            biz["hours"] = hours_map(n_days)
        businesses.append(biz)

    users = []
    for i in range(1, 81):
        users.append({
            "user_id": f"fu{i:04d}",
            "average_stars": round(rng.uniform(1.0, 5.0), 2),
        })

    by_id = {b["business_id"]: b for b in businesses}
    reviews = []
    rid = 0

    def add_review(uid, bid, text=None):
        nonlocal rid
        rid += 1
        b = by_id[bid]
        noise = rng.choice([-2, -1, -1, 0, 0, 0, 0, 1, 1, 2])
        stars = max(1, min(5, round(b["stars"]) + noise))
        if text is None:
            pool = POSITIVE if stars >= 4 else NEUTRAL if stars == 3 else NEGATIVE
            text = rng.choice(pool)
            if rng.random() < 0.15:
                text = text + "\n" + rng.choice(NEUTRAL)
        reviews.append({
            "review_id": f"fr{rid:04d}",
            "user_id": uid,
            "business_id": bid,
            "stars": float(stars),
            "text": text,
        })

    # one review per (user, business) for the first 63 eligible venues
    for i in range(1, 64):
        add_review(f"fu{i:04d}", f"fb{i:04d}")
    # extra reviews reusing users/businesses (uniqueness pressure)
    for i in range(1, 21):
        add_review(f"fu{i:04d}", f"fb{(i % 63) + 1:04d}")
    # reviews pointing at excluded venues
    for i in range(64, 71):
        add_review(f"fu{i + 5:04d}", f"fb{i:04d}")
    # non-English reviews on eligible venues
    for i, text in enumerate(NON_ENGLISH):
        add_review(f"fu{76 + i:04d}", f"fb{40 + i:04d}", text=text)
    # multiline reviews
    for i, text in enumerate(MULTILINE):
        add_review(f"fu{60 + i:04d}", f"fb{50 + i:04d}", text=text)

    with open(OUT / "businesses.jsonl", "w") as f:
        for b in businesses:
            f.write(json.dumps(b, ensure_ascii=False) + "\n")
    with open(OUT / "users.jsonl", "w") as f:
        for u in users:
            f.write(json.dumps(u, ensure_ascii=False) + "\n")
    with open(OUT / "reviews.jsonl", "w") as f:
        for i, r in enumerate(reviews):
            f.write(json.dumps(r, ensure_ascii=False) + "\n")
            if i == 40:  # one deliberately corrupt line, skipped at load
                f.write('{"review_id": "broken", "user_id": \n')

    print(f"wrote {len(businesses)} businesses, {len(users)} users, {len(reviews)} reviews -> {OUT}")


if __name__ == "__main__":
    main()
