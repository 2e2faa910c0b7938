"""Multilingual training-set mixing with oversampling.

Each source contributes either a fixed integer number of copies of every
record (``factor``) or is oversampled to a target share of the final mix
(``target_fraction``).  Records are metadata copies — oversampling never
duplicates audio bytes, only manifest rows pointing at the same path.
"""

import math
from dataclasses import dataclass

import numpy as np

from .errors import DataError, UsageError
from .manifest import read_manifest


@dataclass
class MixSource:
    manifest: str
    factor: int = 1
    target_fraction: float = None

    def __post_init__(self):
        if self.target_fraction is not None:
            if not 0.0 < self.target_fraction < 1.0:
                raise UsageError(
                    f"target_fraction must lie in (0, 1), got "
                    f"{self.target_fraction}"
                )
        elif self.factor != int(self.factor) or self.factor < 1:
            raise UsageError(
                f"oversample factor must be a positive integer, got "
                f"{self.factor}"
            )


def build_mixture(sources, shuffle_seed: int, resolve_audio: bool = False):
    """Combine manifests into one shuffled record list.

    Factor-k sources contribute exactly k copies of each record.  The (at
    most one) target-fraction source is replicated the minimal whole number
    of times putting its share at or above the target, then trimmed by
    seeded uniform subsampling to within one record of the exact fraction.

    With ``resolve_audio``, relative audio paths are resolved against each
    source manifest's directory so sources from different directories can
    be combined into one portable output.
    """
    sources = list(sources)
    if not sources:
        raise UsageError("mixture needs at least one source")
    fraction_sources = [s for s in sources if s.target_fraction is not None]
    if len(fraction_sources) > 1:
        raise UsageError("at most one source may use target_fraction")

    loaded = []
    for src in sources:
        records = read_manifest(src.manifest, resolve_audio=resolve_audio)
        if not records:
            raise DataError(f"source manifest {src.manifest} is empty")
        loaded.append((src, records))

    rng = np.random.default_rng(shuffle_seed)
    mixture = []
    others_total = sum(
        len(records) * src.factor
        for src, records in loaded
        if src.target_fraction is None
    )
    for src, records in loaded:
        if src.target_fraction is None:
            mixture.extend(records * src.factor)
        else:
            if others_total == 0:
                raise UsageError(
                    "a target_fraction source needs at least one "
                    "factor source to mix against"
                )
            f = src.target_fraction
            exact = f / (1.0 - f) * others_total
            replicas = math.ceil(exact / len(records))
            pool = records * replicas
            keep = round(exact)
            chosen = sorted(rng.choice(len(pool), size=keep, replace=False))
            mixture.extend(pool[i] for i in chosen)
    order = rng.permutation(len(mixture))
    return [mixture[i] for i in order]
