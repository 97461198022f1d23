#!/usr/bin/env python3
"""Regenerates the bundled fixture datasets under fixtures/.

The fixtures are small, hand-templated stand-ins for real benchmark files.
They exist so the pipeline can be exercised end to end without downloads.
"""
import json
import os

ROOT = os.path.join(os.path.dirname(os.path.abspath(__file__)), "..", "fixtures")

NAMES = ["Mary", "Craig", "Sandra", "Peter", "Laura", "Kevin", "Alice", "Bruce", "Tina", "Roger"]
NOUNS_SG = ["cat", "dog", "teacher", "doctor", "pilot", "child", "guest", "waiter", "singer", "farmer"]
NOUNS_PL = ["cats", "dogs", "teachers", "doctors", "pilots", "children", "guests", "waiters", "singers", "farmers"]
VERBS_SG = ["sleeps", "barks", "lies", "works", "flies", "cries", "leaves", "waits", "sings", "smiles"]
VERBS_PL = ["sleep", "bark", "lie", "work", "fly", "cry", "leave", "wait", "sing", "smile"]
OBJECTS = ["grocery store", "museum", "library", "hospital", "school", "bakery", "theater", "garden", "castle", "bridge"]
OBJECTS_PL = ["grocery stores", "museums", "libraries", "hospitals", "schools", "bakeries", "theaters", "gardens", "castles", "bridges"]
FEMALE = ["Mary", "Sandra", "Laura", "Alice", "Tina"]
MALE = ["Craig", "Peter", "Kevin", "Bruce", "Roger"]
PARTICIPLES = [("broken", "broke"), ("eaten", "ate"), ("written", "wrote"), ("taken", "took"), ("driven", "drove"),
               ("forgotten", "forgot"), ("chosen", "chose"), ("hidden", "hid"), ("stolen", "stole"), ("shaken", "shook")]
THINGS = ["vase", "cake", "letter", "money", "truck", "answer", "book", "key", "bike", "bottle"]


def suite(uid, term, field, rows):
    out = []
    for i, (good, bad, dep) in enumerate(rows):
        out.append({
            "sentence_good": good,
            "sentence_bad": bad,
            "field": field,
            "linguistics_term": term,
            "UID": uid,
            "simple_LM_method": True,
            "one_prefix_method": False,
            "two_prefix_method": False,
            "lexically_identical": False,
            "pairID": str(i),
            "_deps": dep,
        })
    return out


def pair_suites():
    suites = []
    suites.append(suite("regular_plural_subject_verb_agreement_1", "subject_verb_agreement", "morphology", [
        (f"The {n} {v}.", f"The {n} {vp}.", "det nsubj root punct")
        for n, v, vp in zip(NOUNS_SG, VERBS_SG, VERBS_PL)
    ]))
    suites.append(suite("determiner_noun_agreement_1", "determiner_noun_agreement", "morphology", [
        (f"{NAMES[i]} explored that {OBJECTS[i]}.", f"{NAMES[i]} explored that {OBJECTS_PL[i]}.",
         "nsubj root det " + ("compound " if " " in OBJECTS[i] else "") + "obj punct")
        for i in range(10)
    ]))
    anaphor = []
    for i in range(10):
        name = (FEMALE + MALE)[i]
        good, bad = ("herself", "himself") if name in FEMALE else ("himself", "herself")
        anaphor.append((f"{name} praised {good}.", f"{name} praised {bad}.", "nsubj root obj punct"))
    suites.append(suite("anaphor_gender_agreement", "anaphor_agreement", "morphology", anaphor))
    npi_verbs = ["slept", "barked", "lied", "worked", "flown", "cried", "left", "waited", "sung", "smiled"]
    suites.append(suite("npi_present_1", "npi_licensing", "semantics", [
        (f"No {NOUNS_SG[i]} has ever {npi_verbs[i]}.", f"The {NOUNS_SG[i]} has ever {npi_verbs[i]}.",
         "det nsubj aux advmod root punct")
        for i in range(10)
    ]))
    suites.append(suite("irregular_past_participle_verbs", "irregular_forms", "morphology", [
        (f"The {NOUNS_PL[i]} had {PARTICIPLES[i][0]} the {THINGS[i]}.",
         f"The {NOUNS_PL[i]} had {PARTICIPLES[i][1]} the {THINGS[i]}.",
         "det nsubj aux root det obj punct")
        for i in range(10)
    ]))
    return suites


CONTROL = [
    "The river rises in the northern hills and flows south for about two hundred kilometres",
    "Construction of the cathedral began in the twelfth century and lasted nearly eighty years.",
    "The album was recorded over three weeks in a converted farmhouse.",
    "Early settlers in the valley relied mainly on sheep farming and small orchards.",
    "The species is found in shallow coastal waters throughout the western Pacific.",
    "In 1887 the railway was extended to the port, which greatly increased trade.",
    "Critics praised the novel for its careful structure and restrained prose.",
    "The island has a mild climate with wet winters and dry summers.",
    "He served as mayor for two terms before retiring from public life.",
    "The original manuscript is held in the national library.",
    "Most of the town was rebuilt after a fire destroyed the market square.",
    "The team won its first championship in the following season.",
    "",
    "Several bridges cross the canal near the old customs house.",
    "The film received mixed reviews but performed well at the box office.",
    "The language is spoken by roughly forty thousand people in the region.",
    "A small museum near the harbour displays tools used by local fishermen.",
    "The engine was later replaced with a more efficient diesel design.",
    "Her second book examined the history of trade routes across the desert.",
    "The school was founded by a group of parents in the late nineteenth century.",
    "Heavy rainfall in the spring often floods the lower fields.",
    "The tower was used as a lighthouse until the early twentieth century.",
    "The festival attracts visitors from across the country each summer.",
    "The species feeds mainly on insects and small fruit.",
    "The company moved its headquarters to the capital in 1954.",
    "A new wing was added to the hospital after the war.",
    "The poem was first published in a literary magazine.",
    "Local legend holds that the well never runs dry.",
    "The station closed to passengers in 1962 but freight trains continued to use the line.",
    "The park contains several walking trails and a small lake.",
]


def region_item(item_id, prediction, conds):
    return {
        "item_id": item_id,
        "prediction": prediction,
        "conditions": [
            {"name": name, "grammatical": gram,
             "regions": [{"region_number": k + 1, "content": c} for k, c in enumerate(regs)]}
            for name, gram, regs in conds
        ],
    }


def region_suites():
    attractors = ["near the", "beside the", "behind the", "with the", "next to the"]
    sg = ["key", "author", "painting", "manager", "letter", "box", "lamp", "note", "map", "tool",
          "coach", "chef", "nurse", "sailor", "clerk", "judge", "poet", "tailor", "baker", "guard"]
    pl = ["cabinets", "senators", "windows", "clients", "tables", "doors", "chairs", "desks", "walls", "shelves",
          "players", "cooks", "patients", "ships", "offices", "lawyers", "readers", "shops", "ovens", "gates"]
    preds = ["is", "was", "seems", "looks", "remains"]
    preds_pl = ["are", "were", "seem", "look", "remain"]
    adjs = ["old", "small", "heavy", "bright", "quiet"]
    agreement = []
    for i in range(20):
        att = attractors[i % 5]
        agreement.append(region_item(
            i + 1, "[4;match] < [4;mismatch]",
            [("match", True, ["The", sg[i], f"{att} {pl[i]}", preds[i % 5], f"{adjs[i % 5]}."]),
             ("mismatch", False, ["The", sg[i], f"{att} {pl[i]}", preds_pl[i % 5], f"{adjs[i % 5]}."])]))
    reflexive = []
    for i, name in enumerate(["senator", "actor", "farmer", "pilot", "doctor", "writer"]):
        reflexive.append(region_item(
            i + 1, "[4;match] < [4;mismatch]",
            [("match", True, ["The", name, "who the children met", "hurt himself", "yesterday."]),
             ("mismatch", False, ["The", name, "who the children met", "hurt themselves", "yesterday."])]))
    filler = []
    verbs = ["grabbed", "cooked", "moved", "sold", "painted", "found"]
    objs = ["the food", "the fish", "the sofa", "the car", "the fence", "the keys"]
    for i in range(6):
        filler.append(region_item(
            i + 1, "([3;what_nogap] > [3;that_nogap]) & ([4;what_gap] < [4;that_gap])",
            [("that_nogap", True, ["I know that", f"our uncle {verbs[i]}", objs[i], "in front of the guests."]),
             ("what_nogap", False, ["I know what", f"our uncle {verbs[i]}", objs[i], "in front of the guests."]),
             ("that_gap", False, ["I know that", f"our uncle {verbs[i]}", "", "in front of the guests."]),
             ("what_gap", True, ["I know what", f"our uncle {verbs[i]}", "", "in front of the guests."])]))
    return [
        {"suite": "number_agreement_prep", "phenomenon": "agreement",
         "region_names": ["determiner", "noun", "modifier", "verb", "continuation"], "items": agreement},
        {"suite": "reflexive_number_src", "phenomenon": "reflexive_licensing",
         "region_names": ["determiner", "noun", "relative_clause", "reflexive", "continuation"], "items": reflexive},
        {"suite": "filler_gap_object", "phenomenon": "filler_gap",
         "region_names": ["complementizer", "subject_verb", "object", "continuation"], "items": filler},
    ]


def main():
    pairs_dir = os.path.join(ROOT, "pairs")
    regions_dir = os.path.join(ROOT, "regions")
    os.makedirs(pairs_dir, exist_ok=True)
    os.makedirs(regions_dir, exist_ok=True)
    deps = []
    for s in pair_suites():
        uid = s[0]["UID"]
        with open(os.path.join(pairs_dir, uid + ".jsonl"), "w") as f:
            for rec in s:
                d = rec.pop("_deps")
                deps.append((f"{uid}:{rec['pairID']}:good", d))
                deps.append((f"{uid}:{rec['pairID']}:bad", d))
                f.write(json.dumps(rec) + "\n")
    with open(os.path.join(ROOT, "pairs.deps.tsv"), "w") as f:
        for sid, d in deps:
            f.write(f"{sid}\t{d}\n")
    with open(os.path.join(ROOT, "control.txt"), "w") as f:
        f.write("\n".join(CONTROL) + "\n")
    for s in region_suites():
        with open(os.path.join(regions_dir, s["suite"] + ".json"), "w") as f:
            json.dump(s, f, indent=2)
            f.write("\n")


if __name__ == "__main__":
    main()
