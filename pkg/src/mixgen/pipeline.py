"""Batch semantics and the deterministic end-to-end runner.

A batch of B pairs has its first M entries replaced by generated pairs, each
mixing original entry i with original entry i + M. Entries at indices >= M are
never modified, so the sources read at i + M are always the originals.

Determinism contract: every batch gets its own generator seeded from
(global seed, batch index) alone, and shard writes happen in ascending batch
index order. Output bytes therefore do not depend on the worker count.
"""
from __future__ import annotations

import concurrent.futures
import logging
import os
import time
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional, Sequence, Union

import numpy as np

from . import dataio
from .augment import make_pair
from .errors import DatasetTooSmall, MixGenError, MTooLarge
from .types import (
    AbsoluteM,
    AugmentedPair,
    Batch,
    FractionM,
    ImageTextPair,
    MixGenConfig,
    MPolicy,
    validate_config,
)

log = logging.getLogger(__name__)

_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15


@dataclass(frozen=True)
class BatchPlan:
    """Which dataset indices form one batch."""

    batch_index: int
    member_indices: tuple[int, ...]


@dataclass
class RunReport:
    batches_processed: int = 0
    pairs_emitted: int = 0
    pairs_generated_by_mixgen: int = 0
    batches_skipped: int = 0
    failed_records: list[str] = field(default_factory=list)
    wall_time: float = 0.0
    per_stage_timing: dict[str, float] = field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            "batches_processed": self.batches_processed,
            "pairs_emitted": self.pairs_emitted,
            "pairs_generated_by_mixgen": self.pairs_generated_by_mixgen,
            "batches_skipped": self.batches_skipped,
            "failed_records": self.failed_records,
            "wall_time": self.wall_time,
            "per_stage_timing": self.per_stage_timing,
        }


def resolve_m(policy: MPolicy, batch_size: int) -> int:
    """Number of leading entries to replace; always enforces 2M <= B."""
    if isinstance(policy, FractionM):
        m = int(policy.fraction * batch_size)
    elif isinstance(policy, AbsoluteM):
        m = policy.m
    else:
        raise TypeError(f"unknown M policy {policy!r}")
    if 2 * m > batch_size:
        raise MTooLarge(f"M={m} needs 2M <= B but B={batch_size}")
    return m


def derive_stream_seed(global_seed: int, batch_index: int) -> int:
    """Stateless per-batch seed: splitmix64 finalizer of seed XOR index * golden."""
    z = (global_seed ^ ((batch_index * _GOLDEN) & _MASK64)) & _MASK64
    z ^= z >> 30
    z = (z * 0xBF58476D1CE4E5B9) & _MASK64
    z ^= z >> 27
    z = (z * 0x94D049BB133111EB) & _MASK64
    z ^= z >> 31
    return z


def batch_rng(config: MixGenConfig, batch_index: int) -> np.random.Generator:
    return np.random.default_rng(derive_stream_seed(config.seed, batch_index))


def mix_batch(
    batch: Batch, config: MixGenConfig, rng
) -> tuple[Batch, tuple[AugmentedPair, ...]]:
    """Replace the first M pairs with generated ones; also return their provenance."""
    b = batch.size
    m = resolve_m(config.m_policy, b)
    generated = tuple(
        make_pair(batch.pairs[i], batch.pairs[i + m], config, rng) for i in range(m)
    )
    if m == 0:
        return batch, generated
    pairs = tuple(g.pair for g in generated) + batch.pairs[m:]
    return Batch(pairs), generated


def apply_mixgen(batch: Batch, config: MixGenConfig, rng) -> Batch:
    """The batch update rule; entries at indices >= M are returned unchanged."""
    return mix_batch(batch, config, rng)[0]


def plan_batches(
    dataset_size: int, batch_size: int, shuffle_seed: int, drop_last: bool = True
) -> list[BatchPlan]:
    """Seeded permutation of the dataset, chunked into consecutive batches."""
    if batch_size < 1:
        raise ValueError(f"batch size must be >= 1, got {batch_size}")
    if drop_last and dataset_size < batch_size:
        raise DatasetTooSmall(
            f"dataset has {dataset_size} pairs, one batch needs {batch_size}"
        )
    perm = np.random.default_rng(shuffle_seed).permutation(dataset_size)
    plans = []
    for k in range(0, dataset_size - batch_size + 1 if drop_last else dataset_size, batch_size):
        chunk = perm[k : k + batch_size]
        plans.append(BatchPlan(batch_index=len(plans), member_indices=tuple(int(i) for i in chunk)))
    return plans


@dataclass
class _BatchResult:
    plan: BatchPlan
    entries: Optional[list[dataio.ShardEntry]]  # None when the batch was skipped
    failed_records: list[str]
    load_seconds: float
    augment_seconds: float


PreAugmentHook = Callable[[Batch], Batch]


def _process_batch(
    plan: BatchPlan,
    pairs: Sequence[ImageTextPair],
    config: MixGenConfig,
    skip_errors: bool,
    pre_augment: Optional[PreAugmentHook] = None,
) -> _BatchResult:
    t0 = time.perf_counter()
    loaded = []
    for idx in plan.member_indices:
        pair = pairs[idx]
        try:
            loaded.append(dataio.resolve_image(pair, config.target_height, config.target_width))
        except MixGenError as exc:
            if skip_errors:
                log.warning("skipping batch %d: record %s failed: %s", plan.batch_index, pair.id, exc)
                return _BatchResult(plan, None, [pair.id], time.perf_counter() - t0, 0.0)
            raise MixGenError(
                f"batch {plan.batch_index}, record {pair.id}: {exc}"
            ) from exc
    t1 = time.perf_counter()

    batch = Batch(tuple(loaded))
    if pre_augment is not None:
        batch = pre_augment(batch)
    mixed, generated = mix_batch(batch, config, batch_rng(config, plan.batch_index))
    entries: list[dataio.ShardEntry] = list(generated) + list(mixed.pairs[len(generated):])
    t2 = time.perf_counter()
    return _BatchResult(plan, entries, [], t1 - t0, t2 - t1)


def run(
    manifest: Union[str, Path],
    config: MixGenConfig,
    batch_size: int = 512,
    out_dir: Union[str, Path] = "shard",
    workers: Optional[int] = None,
    drop_last: bool = True,
    skip_errors: bool = False,
    pre_augment: Optional[PreAugmentHook] = None,
) -> RunReport:
    """Load, augment, and write every planned batch; returns exact totals.

    Writes are serialized in ascending batch index. Results are byte-identical
    for any ``workers`` value. ``pre_augment`` runs on each loaded batch before
    mixing (no built-in policy ships; the hook must be deterministic and
    thread-compatible to preserve the determinism contract).
    """
    validate_config(config)
    resolve_m(config.m_policy, batch_size)  # surface MTooLarge before any work
    t_start = time.perf_counter()
    records = dataio.parse_manifest(manifest)
    pairs = dataio.expand_pairs(records)
    plans = plan_batches(len(pairs), batch_size, config.seed, drop_last)
    workers = workers or min(8, os.cpu_count() or 1)

    report = RunReport(per_stage_timing={"load": 0.0, "augment": 0.0, "write": 0.0})
    with dataio.ShardWriter(out_dir) as writer:
        def consume(result: _BatchResult) -> None:
            report.per_stage_timing["load"] += result.load_seconds
            report.per_stage_timing["augment"] += result.augment_seconds
            report.failed_records.extend(result.failed_records)
            if result.entries is None:
                report.batches_skipped += 1
                return
            t0 = time.perf_counter()
            n_generated = 0
            for entry in result.entries:
                writer.append(entry)
                if isinstance(entry, AugmentedPair):
                    n_generated += 1
            report.per_stage_timing["write"] += time.perf_counter() - t0
            report.batches_processed += 1
            report.pairs_emitted += len(result.entries)
            report.pairs_generated_by_mixgen += n_generated

        if workers <= 1:
            for plan in plans:
                consume(_process_batch(plan, pairs, config, skip_errors, pre_augment))
        else:
            # Bounded in-flight window; completion is consumed in plan order so
            # memory stays at O(workers) batches and output order is fixed.
            with concurrent.futures.ThreadPoolExecutor(max_workers=workers) as pool:
                window: deque = deque()
                for plan in plans:
                    window.append(pool.submit(_process_batch, plan, pairs, config, skip_errors, pre_augment))
                    if len(window) >= workers + 1:
                        consume(window.popleft().result())
                while window:
                    consume(window.popleft().result())

    report.wall_time = time.perf_counter() - t_start
    return report
