"""Deterministic splits, padded minibatches, and partition fingerprints."""

from __future__ import annotations

import hashlib
from collections.abc import Callable, Iterator

import numpy as np

from .records import Batch, TimeSeriesRecord

SPLIT_NAMES = ("train", "val", "test")


def _label_fn(stratify_on) -> Callable[[TimeSeriesRecord], object]:
    if callable(stratify_on):
        return stratify_on
    if stratify_on == "sex":
        return lambda r: r.statics.sex
    if stratify_on == "race":
        return lambda r: r.statics.race
    if stratify_on == "died":
        return lambda r: r.death_hour is not None
    raise KeyError(f"stratification label {stratify_on!r} missing")


def _allocate(n: int, ratios: tuple[float, float, float]) -> list[int]:
    # largest-remainder rounding so sizes are exact when ratios divide evenly
    exact = [r * n for r in ratios]
    counts = [int(e) for e in exact]
    short = n - sum(counts)
    order = sorted(range(len(ratios)), key=lambda i: exact[i] - counts[i], reverse=True)
    for i in order[:short]:
        counts[i] += 1
    return counts


def split(
    records: list[TimeSeriesRecord],
    ratios: tuple[float, float, float] = (0.7, 0.15, 0.15),
    seed: int = 0,
    stratify_on=None,
) -> dict[str, list[TimeSeriesRecord]]:
    """Disjoint, exhaustive {train, val, test} partition, deterministic per seed."""
    if len(ratios) != len(SPLIT_NAMES):
        raise ValueError("ratios must have one entry per split")
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise ValueError(f"ratios must sum to 1, got {sum(ratios)}")

    rng = np.random.default_rng([seed, 0x5917])
    if stratify_on is None:
        strata = {None: list(range(len(records)))}
    else:
        fn = _label_fn(stratify_on)
        strata = {}
        for i, rec in enumerate(records):
            strata.setdefault(fn(rec), []).append(i)

    parts: dict[str, list[TimeSeriesRecord]] = {name: [] for name in SPLIT_NAMES}
    for key in sorted(strata, key=repr):
        idx = np.asarray(strata[key])
        rng.shuffle(idx)
        counts = _allocate(len(idx), tuple(ratios))
        start = 0
        for name, cnt in zip(SPLIT_NAMES, counts):
            parts[name].extend(records[j] for j in idx[start : start + cnt])
            start += cnt
    return parts


def partition_hash(parts: dict[str, list[TimeSeriesRecord]]) -> str:
    """Order-insensitive fingerprint of which record landed in which split."""
    pieces = []
    for name in SPLIT_NAMES:
        ids = ",".join(sorted(r.record_id for r in parts.get(name, [])))
        pieces.append(f"{name}:{ids}")
    return hashlib.sha256("|".join(pieces).encode("utf-8")).hexdigest()


def make_batches(
    records: list[TimeSeriesRecord],
    batch_size: int,
    shuffle_seed: int | None = None,
    targets_fn: Callable[[TimeSeriesRecord], np.ndarray | float] | None = None,
    statics_fn: Callable[[TimeSeriesRecord], np.ndarray] | None = None,
) -> Iterator[Batch]:
    """Yield padded batches covering every record exactly once.

    Padding fills x and per-step targets with zeros beyond each record's own
    length; mask/target_mask mark the observed prefixes. Record order is kept
    unless shuffle_seed is given. `statics_fn` attaches a per-record static
    vector block (B, s) for fusion models.
    """
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    order = np.arange(len(records))
    if shuffle_seed is not None:
        np.random.default_rng([shuffle_seed, 0xBA7C4]).shuffle(order)

    for start in range(0, len(records), batch_size):
        chunk = [records[i] for i in order[start : start + batch_size]]
        lengths = np.asarray([r.T for r in chunk], dtype=np.int64)
        t_max = int(lengths.max())
        m = chunk[0].m
        x = np.zeros((len(chunk), m, t_max))
        mask = np.zeros((len(chunk), t_max), dtype=bool)
        for j, rec in enumerate(chunk):
            x[j, :, : rec.T] = rec.x
            mask[j, : rec.T] = True

        target_mask = None
        if targets_fn is None:
            targets = np.zeros(len(chunk))
        else:
            raw = [np.asarray(targets_fn(r), dtype=np.float64) for r in chunk]
            if raw[0].ndim == 0:
                targets = np.asarray([float(t) for t in raw])
            else:
                l_max = max(t.size for t in raw)
                targets = np.zeros((len(chunk), l_max))
                target_mask = np.zeros((len(chunk), l_max), dtype=bool)
                for j, t in enumerate(raw):
                    targets[j, : t.size] = t
                    target_mask[j, : t.size] = True

        statics = None
        if statics_fn is not None:
            statics = np.stack([np.asarray(statics_fn(r), dtype=np.float64)
                                for r in chunk])

        yield Batch(
            x=x,
            mask=mask,
            targets=targets,
            lengths=lengths,
            target_mask=target_mask,
            record_ids=[r.record_id for r in chunk],
            statics=statics,
        )
