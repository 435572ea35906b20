import pytest
import torch

from kdbench.data.synthetic import make_cifar100_archive, make_folder_tree
from kdbench.recipes import DatasetRef, DistillJobSpec, TrainingRecipe

torch.set_num_threads(2)

TINY_CLASSES = 10


@pytest.fixture(scope="session")
def cifar_root(tmp_path_factory):
    root = tmp_path_factory.mktemp("cifar") / "archive"
    make_cifar100_archive(root, per_class_train=8, per_class_test=4,
                          classes=TINY_CLASSES, seed=0)
    return root


@pytest.fixture(scope="session")
def folder_root(tmp_path_factory):
    root = tmp_path_factory.mktemp("folder") / "tree"
    make_folder_tree(root, classes=4, per_class=8, size=48,
                     splits=("train", "val"), seed=0)
    return root


@pytest.fixture(scope="session")
def pool_root(tmp_path_factory):
    root = tmp_path_factory.mktemp("pool") / "tree"
    make_folder_tree(root, classes=3, per_class=8, size=48, splits=(), seed=1)
    return root


def tiny_recipe(**overrides) -> TrainingRecipe:
    base = dict(
        name="tiny", teacher_resolution=32, student_resolution=32, batch_size=16,
        optimizer="sgd", base_lr=0.05, epochs=2, warmup_epochs=1,
        label_loss="ce", weight_decay=5e-4, hflip=True, mixup_alpha=0.1,
    )
    base.update(overrides)
    return TrainingRecipe(**base)


def tiny_job(cifar_root, **overrides) -> DistillJobSpec:
    recipe_overrides = overrides.pop("recipe_overrides", {})
    base = dict(
        teacher="resnet20_cifar",
        student="resnet20_cifar",
        dataset=DatasetRef(name="cifar-tiny", root=str(cifar_root), kind="cifar100",
                           class_count=TINY_CLASSES, resolution=32),
        recipe=tiny_recipe(**recipe_overrides),
        method="kd",
        seed=3,
        name="tiny-job",
    )
    base.update(overrides)
    return DistillJobSpec(**base)


@pytest.fixture()
def job_factory(cifar_root):
    def make(**overrides):
        return tiny_job(cifar_root, **overrides)

    return make
