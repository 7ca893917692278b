"""Frozen hand-computed values shared by the unit and acceptance suites."""

# (candidate, gold answers, reward), each worked out by hand from the
# three-branch rule: 2 exact, token F1 on overlap, -1 when disjoint.
REWARD_CASES = [
    ("cuba libre", ["Cuba Libre"], 2.0),
    ("Cuba Libre.", ["cuba libre ."], 2.0),
    ("rum", ["Rum"], 2.0),
    ("cuba", ["cuba libre", "cuba"], 2.0),
    ("x y", ["y x", "x y"], 2.0),
    ("daiquiri", ["cuba libre"], -1.0),
    ("x", ["y"], -1.0),
    ("abc", ["abcd"], -1.0),
    ("", ["x"], -1.0),
    ("mojito", ["cuba libre", "rum"], -1.0),
    ("libre", ["cuba libre"], 2 / 3),
    ("rum and lime", ["lime juice"], 0.4),
    ("a b c d", ["d"], 0.4),
    ("a b", ["c d", "b e f"], 0.4),
    ("the cuba libre", ["cuba libre"], 0.8),
    ("new york city", ["new york"], 0.8),
    ("new york", ["new york city"], 0.8),
    ("st. louis", ["st louis"], 0.8),
    ("the the", ["the"], 2 / 3),
    ("the", ["the the"], 2 / 3),
    ("cuba libre", ["mojito", "cuba"], 2 / 3),
    ("one two three four five", ["five six"], 2 / 7),
    # same bag of tokens in another order is overlap, not an exact match
    ("libre cuba", ["cuba libre"], 1.0),
]

# token_f1(prediction, gold) by hand: overlap, precision, recall, harmonic mean
F1_CASES = [
    (["rum", "and", "lime"], ["lime", "juice"], 0.4),
    (["cuba", "libre"], ["cuba", "libre"], 1.0),
    (["a"], ["b"], 0.0),
    ([], ["a"], 0.0),
    (["a", "a", "b"], ["a", "b", "b"], 2 / 3),
]

# set probability of spans {0, 1} under p = (0.5, 0.3, 0.2), K = 2, summed over
# both draw orders: 0.5*0.3/0.5 + 0.3*0.5/0.7
PAIR_P = (0.5, 0.3, 0.2)
PAIR_SET_PROB = 0.3 + 0.15 / 0.7
