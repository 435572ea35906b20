"""Batch index streams and deterministic seeding.

Every randomized stage derives its stream from (seed, epoch, tag) so
two runs with equal seeds produce bit-identical batches.
"""
from __future__ import annotations

import hashlib
import random

import numpy as np
import torch


def derive_seed(*parts) -> int:
    """Stable 63-bit seed from arbitrary labeled parts."""
    digest = hashlib.blake2b("|".join(map(repr, parts)).encode(), digest_size=8).digest()
    return int.from_bytes(digest, "little") >> 1


def seed_everything(seed: int) -> None:
    random.seed(seed)
    np.random.seed(seed % (2**32))
    torch.manual_seed(seed)


class RepeatedAugSampler:
    """Yields per-batch index lists with each index repeated ``repeats`` times.

    Each occurrence is augmented independently downstream; one epoch
    covers dataset_size / repeats distinct samples. ``repeats=1`` is a
    plain shuffled batch sampler.
    """

    def __init__(self, dataset_size: int, batch_size: int, repeats: int = 1,
                 seed: int = 0, drop_last: bool = True):
        if repeats < 1:
            raise ValueError(f"repeats must be >= 1, got {repeats}")
        if batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {batch_size}")
        self.dataset_size = dataset_size
        self.batch_size = batch_size
        self.repeats = repeats
        self.seed = seed
        self.drop_last = drop_last
        self.epoch = 0
        self.distinct_per_batch = -(-batch_size // repeats)  # ceil

    def set_epoch(self, epoch: int) -> None:
        self.epoch = epoch

    def __len__(self) -> int:
        distinct_total = self.dataset_size // self.repeats
        n, r = divmod(distinct_total, self.distinct_per_batch)
        if r and not self.drop_last:
            n += 1
        return n

    def __iter__(self):
        rng = np.random.default_rng(derive_seed(self.seed, "epoch", self.epoch))
        perm = rng.permutation(self.dataset_size)
        distinct_total = self.dataset_size // self.repeats
        distinct = perm[:distinct_total] if distinct_total else perm
        for start in range(0, len(distinct), self.distinct_per_batch):
            chunk = distinct[start:start + self.distinct_per_batch]
            if len(chunk) < self.distinct_per_batch and self.drop_last:
                return
            batch = np.repeat(chunk, self.repeats)[: self.batch_size]
            yield [int(i) for i in batch]
