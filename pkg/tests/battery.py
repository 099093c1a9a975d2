"""Shared enumeration fixtures for the small-population test batteries.

Three lists feed the oracle-based identity tests:

``INDEPENDENT_FORCING_BATTERY``
    (y, probs) pairs with sizes 3..10, uniform probability levels 0.2,
    0.5 and 0.8 plus a few non-uniform vectors. The independent-draw and
    forcing designs are well defined on every entry.

``CHAIN_FREE_BATTERY``
    The subset without adjacent cases. Under the forcing design,
    selection indicators two or more steps apart are uncorrelated
    exactly when no case chain links them, so the zero-covariance tests
    run on this subset (and counterexamples elsewhere assert the
    restriction is real).

``SIZE_STABILIZED_BATTERY``
    (y, min_sample_size) pairs with uniform initial probabilities
    m / N. The size-stabilized design is only well defined when every
    case keeps a strictly positive draw probability on every path and
    no path leaves [0, 1]; these entries were found by exhaustive scan
    over rare-case patterns at the same three probability levels, and
    the well-definedness itself is asserted in the tests that use them.
"""


def _y(pattern: str) -> tuple:
    return tuple(int(c) for c in pattern)


def uniform(pattern: str, level: float):
    """(y, probs) with one shared initial probability."""
    y = _y(pattern)
    return y, tuple(level for _ in y)


INDEPENDENT_FORCING_BATTERY = [
    uniform("100", 0.2),
    uniform("100", 0.5),
    uniform("100", 0.8),
    uniform("010", 0.5),
    uniform("101", 0.5),
    uniform("110", 0.5),
    uniform("0000", 0.2),
    uniform("1000", 0.5),
    uniform("0100", 0.8),
    uniform("1001", 0.5),
    uniform("1100", 0.2),
    uniform("10010", 0.5),
    uniform("00100", 0.8),
    uniform("10100", 0.2),
    uniform("01001", 0.4),
    uniform("010010", 0.5),
    uniform("101101", 0.5),
    uniform("0010010", 0.5),
    uniform("1000001", 0.2),
    uniform("00000000", 0.5),
    uniform("10000001", 0.8),
    uniform("010000100", 0.5),
    uniform("1000000001", 0.2),
    (_y("101"), (0.4, 0.7, 0.3)),
    (_y("01001"), (0.25, 0.5, 0.6, 0.35, 0.45)),
    (_y("101101"), (0.3, 0.7, 0.2, 0.9, 0.5, 0.4)),
]

def _has_adjacent_cases(y) -> bool:
    return any(a and b for a, b in zip(y, y[1:]))


CHAIN_FREE_BATTERY = [
    (y, probs) for y, probs in INDEPENDENT_FORCING_BATTERY
    if not _has_adjacent_cases(y)
]

SIZE_STABILIZED_BATTERY = [
    # level 0.2
    (_y("00000"), 1),
    (_y("10000"), 1),
    (_y("11000"), 1),
    (_y("11100"), 1),
    (_y("0000000000"), 2),
    # level 0.5
    (_y("0100"), 2),
    (_y("1100"), 2),
    (_y("1010"), 2),
    (_y("0110"), 2),
    (_y("1110"), 2),
    (_y("1011"), 2),
    (_y("001100"), 3),
    (_y("011100"), 3),
    (_y("001110"), 3),
    (_y("00000000"), 4),
    (_y("00011100"), 4),
    (_y("0000000000"), 5),
    # level 0.8
    (_y("00100"), 4),
    (_y("00010"), 4),
    (_y("01100"), 4),
    (_y("00101"), 4),
    (_y("11100"), 4),
    (_y("00111"), 4),
    (_y("0000000100"), 8),
    (_y("0000011100"), 8),
    (_y("0000001101"), 8),
]
