"""Per-purpose random streams fanned out from one run seed."""

import numpy as np

_LABELS = {"init": 1, "patch": 2, "augment": 3, "synth": 4}


def substream(seed: int, label: str, *extra: int) -> np.random.Generator:
    return np.random.default_rng(_sequence(seed, label, extra))


def substream_seed(seed: int, label: str, *extra: int) -> int:
    return int(_sequence(seed, label, extra).generate_state(1)[0])


def _sequence(seed, label, extra):
    return np.random.SeedSequence([int(seed), _LABELS[label], *(int(e) for e in extra)])
