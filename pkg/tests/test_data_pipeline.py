"""Dataset ingestion, subsetting, augmentation, mixing, and samplers."""
import numpy as np
import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st
from torchvision import transforms

from kdbench.data import (
    Cifar100Archive,
    ImagesOnly,
    RepeatedAugSampler,
    apply_cutmix,
    apply_mixup,
    build_augmentation,
    build_dataset,
    derive_seed,
    load_indices,
    mix_batch,
    save_indices,
    stratified_indices,
    stratified_subset,
)
from kdbench.errors import DataError, SubsetError
from kdbench.recipes import DatasetRef, SubsetSpec, builtin_recipe
from tests.conftest import TINY_CLASSES, tiny_recipe


def cifar_ref(root) -> DatasetRef:
    return DatasetRef(name="tiny", root=str(root), kind="cifar100",
                      class_count=TINY_CLASSES, resolution=32)


class TestCifarArchive:
    def test_reads_train_and_test(self, cifar_root):
        train = Cifar100Archive(cifar_root, "train")
        test = Cifar100Archive(cifar_root, "test")
        assert len(train) == 8 * TINY_CLASSES
        assert len(test) == 4 * TINY_CLASSES
        img, label = train[0]
        assert img.size == (32, 32)
        assert 0 <= label < TINY_CLASSES
        assert len(train.class_names) == TINY_CLASSES

    def test_missing_file(self, tmp_path):
        with pytest.raises(DataError):
            Cifar100Archive(tmp_path, "train")


class TestStratifiedSubset:
    def test_per_class_counts(self, cifar_root):
        ds = build_dataset(cifar_ref(cifar_root), split="train")
        sub = stratified_subset(ds, SubsetSpec(fraction=0.25, seed=0))
        counts = np.bincount(sub.targets, minlength=TINY_CLASSES)
        assert (counts == 2).all()  # round(0.25 * 8)

    def test_fraction_one_is_identity(self, cifar_root):
        ds = build_dataset(cifar_ref(cifar_root), split="train")
        idx = stratified_indices(ds.targets, SubsetSpec(fraction=1.0))
        assert idx == list(range(len(ds)))

    def test_deterministic_under_seed(self, cifar_root):
        ds = build_dataset(cifar_ref(cifar_root), split="train")
        a = stratified_indices(ds.targets, SubsetSpec(fraction=0.5, seed=11))
        b = stratified_indices(ds.targets, SubsetSpec(fraction=0.5, seed=11))
        c = stratified_indices(ds.targets, SubsetSpec(fraction=0.5, seed=12))
        assert a == b
        assert a != c

    def test_too_small_fraction_names_class(self, cifar_root):
        ds = build_dataset(cifar_ref(cifar_root), split="train")
        with pytest.raises(SubsetError, match="class 0"):
            stratified_indices(ds.targets, SubsetSpec(fraction=0.01))

    def test_proportions_within_one_sample(self):
        targets = [0] * 20 + [1] * 10 + [2] * 7
        idx = stratified_indices(targets, SubsetSpec(fraction=0.3, seed=4))
        counts = np.bincount([targets[i] for i in idx], minlength=3)
        for cls, total in ((0, 20), (1, 10), (2, 7)):
            assert abs(counts[cls] - 0.3 * total) <= 1

    def test_persisted_index_lists(self, cifar_root, tmp_path):
        ds = build_dataset(cifar_ref(cifar_root), split="train")
        idx = stratified_indices(ds.targets, SubsetSpec(fraction=0.5, seed=2))
        path = tmp_path / "indices.txt"
        save_indices(idx, path)
        assert load_indices(path) == idx
        assert path.read_text().count("\n") == len(idx)


class TestAugmentation:
    def test_a2_contains_rand_augment_with_probability(self, folder_root):
        ref = DatasetRef(name="f", root=str(folder_root), kind="folder",
                         class_count=4, resolution=224)
        stack = build_augmentation(builtin_recipe("A2"), train=True, ref=ref).transforms
        kinds = [type(t).__name__ for t in stack]
        assert "RandomResizedCrop" in kinds
        assert "RandomHorizontalFlip" in kinds
        wrapped = [t for t in stack if isinstance(t, transforms.RandomApply)]
        assert len(wrapped) == 1
        assert wrapped[0].p == 0.5
        inner = wrapped[0].transforms[0]
        assert isinstance(inner, transforms.RandAugment)
        assert inner.magnitude == 7
        assert "RandomErasing" not in kinds

    def test_c_contains_auto_augment_no_erasing(self, cifar_root):
        stack = build_augmentation(builtin_recipe("C"), train=True,
                                   ref=cifar_ref(cifar_root)).transforms
        kinds = [type(t).__name__ for t in stack]
        assert "AutoAugment" in kinds
        assert "RandAugment" not in str(kinds)
        assert "RandomErasing" not in kinds

    def test_b_contains_random_erasing(self, folder_root):
        ref = DatasetRef(name="f", root=str(folder_root), kind="folder",
                         class_count=4, resolution=224)
        stack = build_augmentation(builtin_recipe("B"), train=True, ref=ref).transforms
        kinds = [type(t).__name__ for t in stack]
        assert "RandomErasing" in kinds

    def test_eval_list_is_deterministic(self, cifar_root):
        stack = build_augmentation(builtin_recipe("C"), train=False,
                                   ref=cifar_ref(cifar_root)).transforms
        kinds = [type(t).__name__ for t in stack]
        assert kinds == ["Resize", "CenterCrop", "ToTensor", "Normalize"]

    def test_order_crop_flip_augment_normalize_erase(self, folder_root):
        ref = DatasetRef(name="f", root=str(folder_root), kind="folder",
                         class_count=4, resolution=64)
        recipe = tiny_recipe(random_resized_crop=True, rand_augment=(5, 0.7),
                             random_erasing_prob=0.3, student_resolution=64,
                             teacher_resolution=64)
        kinds = [type(t).__name__ for t in
                 build_augmentation(recipe, train=True, ref=ref).transforms]
        assert kinds == ["RandomResizedCrop", "RandomHorizontalFlip", "RandomApply",
                         "ToTensor", "Normalize", "RandomErasing"]


class TestMixing:
    def test_mixup_disabled(self):
        imgs = torch.randn(4, 3, 8, 8)
        mb = apply_mixup(imgs, torch.tensor([0, 1, 2, 3]), 0.0, 4,
                         np.random.default_rng(0))
        assert mb.mix_kind == "none"
        assert mb.lam == 1.0
        assert torch.equal(mb.images, imgs)

    def test_mixup_rows_mix_with_lambda(self):
        rng = np.random.default_rng(3)
        imgs = torch.zeros(6, 3, 4, 4)
        targets = torch.arange(6)
        mb = apply_mixup(imgs, targets, 0.4, 6, rng)
        assert mb.mix_kind == "mixup"
        assert torch.allclose(mb.targets.sum(dim=1), torch.ones(6), atol=1e-6)
        row_max = mb.targets.max(dim=1).values
        assert torch.allclose(row_max.max(), torch.tensor(max(mb.lam, 1 - mb.lam)), atol=1e-6) or \
            torch.allclose(row_max.max(), torch.tensor(1.0), atol=1e-6)

    def test_half_lambda_splits_one_hot(self):
        rows = torch.eye(4)
        imgs = torch.randn(4, 3, 2, 2)
        lam = 0.5
        perm = torch.tensor([1, 0, 3, 2])
        mixed_rows = lam * rows + (1 - lam) * rows[perm]
        assert (mixed_rows[0] == torch.tensor([0.5, 0.5, 0.0, 0.0])).all()

    def test_cutmix_effective_lambda_exact_area(self):
        rng = np.random.default_rng(5)
        imgs = torch.randn(4, 3, 224, 224)
        mb = apply_cutmix(imgs, torch.tensor([0, 1, 2, 3]), 1.0, 4, rng)
        assert mb.mix_kind == "cutmix"
        # recover the pasted area from the target weights
        assert torch.allclose(mb.targets.sum(dim=1), torch.ones(4), atol=1e-6)
        area_ratio = 1.0 - mb.lam
        assert 0.0 <= area_ratio <= 1.0
        n_pixels = area_ratio * 224 * 224
        assert n_pixels == pytest.approx(round(n_pixels), abs=1e-6)

    def test_cutmix_half_region_lambda(self):
        # 112x112 region in 224x224 leaves lam = 0.75
        assert 1 - (112 * 112) / (224 * 224) == 0.75

    def test_mix_batch_exclusive_choice(self):
        recipe = tiny_recipe(mixup_alpha=0.2, cutmix_alpha=1.0)
        rng = np.random.default_rng(0)
        kinds = set()
        imgs = torch.randn(8, 3, 16, 16)
        for _ in range(40):
            mb = mix_batch(imgs, torch.arange(8) % 4, recipe, 4, rng)
            kinds.add(mb.mix_kind)
        assert kinds == {"mixup", "cutmix"}

    @given(st.integers(0, 1000))
    @settings(max_examples=30, deadline=None)
    def test_mixed_rows_always_sum_to_one(self, seed):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(2, 9))
        k = int(rng.integers(2, 7))
        imgs = torch.randn(n, 3, 8, 8)
        targets = torch.as_tensor(rng.integers(0, k, size=n))
        recipe = tiny_recipe(mixup_alpha=0.3, cutmix_alpha=1.0)
        mb = mix_batch(imgs, targets, recipe, k, rng)
        assert torch.allclose(mb.targets.sum(dim=1), torch.ones(n), atol=1e-6)


class TestRepeatedAugSampler:
    def test_plain_shuffle_when_repeats_one(self):
        s = RepeatedAugSampler(64, 16, repeats=1, seed=0)
        batches = list(s)
        assert len(batches) == 4
        flat = [i for b in batches for i in b]
        assert sorted(flat) == list(range(64))

    def test_batch_2048_repeats_3_has_683_distinct(self):
        s = RepeatedAugSampler(2048 * 3, 2048, repeats=3, seed=0)
        batch = next(iter(s))
        assert len(batch) == 2048
        assert len(set(batch)) == 683

    def test_epoch_covers_size_over_repeats(self):
        s = RepeatedAugSampler(300, 30, repeats=3, seed=1)
        distinct = set()
        for batch in s:
            distinct.update(batch)
        assert len(distinct) == 300 // 3

    def test_identical_streams_same_seed_epoch(self):
        a = RepeatedAugSampler(128, 16, repeats=2, seed=5)
        b = RepeatedAugSampler(128, 16, repeats=2, seed=5)
        a.set_epoch(3)
        b.set_epoch(3)
        assert list(a) == list(b)
        b.set_epoch(4)
        assert list(a) != list(b)

    def test_each_index_repeated(self):
        s = RepeatedAugSampler(60, 12, repeats=3, seed=2)
        batch = next(iter(s))
        from collections import Counter

        counts = Counter(batch)
        assert set(counts.values()) == {3}


class TestUnlabeledPool:
    def test_projection_drops_labels(self, pool_root):
        ref = DatasetRef(name="pool", root=str(pool_root), kind="folder",
                         class_count=3, resolution=32)
        recipe = tiny_recipe()
        ds = build_dataset(ref, split="train",
                           transform=build_augmentation(recipe, train=True, ref=ref))
        pool = ImagesOnly(ds)
        item = pool[0]
        assert isinstance(item, torch.Tensor)
        assert item.shape[0] == 3

    def test_empty_pool_raises(self, tmp_path):
        class Empty:
            def __len__(self):
                return 0

        with pytest.raises(DataError):
            ImagesOnly(Empty())


def test_derive_seed_stable_and_distinct():
    assert derive_seed(1, "epoch", 2) == derive_seed(1, "epoch", 2)
    assert derive_seed(1, "epoch", 2) != derive_seed(1, "epoch", 3)
    assert derive_seed(1, "epoch", 2) != derive_seed(2, "epoch", 2)
