"""Per-sample augmentation stacks derived from a training recipe.

Training order: random-resized-crop, horizontal flip, rand/auto
augment, tensor + normalize, random erasing. Mixing (mixup/cutmix)
happens later at batch level. Eval is the deterministic resize +
center-crop + normalize pipeline.
"""
from __future__ import annotations

from torchvision import transforms
from torchvision.transforms import InterpolationMode

from ..recipes import DatasetRef, TrainingRecipe
from .datasets import dataset_stats


def build_augmentation(recipe: TrainingRecipe, train: bool, ref: DatasetRef) -> transforms.Compose:
    mean, std = dataset_stats(ref)
    res = recipe.student_resolution
    if not train:
        return transforms.Compose([
            transforms.Resize(res, interpolation=InterpolationMode.BICUBIC),
            transforms.CenterCrop(res),
            transforms.ToTensor(),
            transforms.Normalize(mean, std),
        ])
    stack: list = []
    if recipe.random_resized_crop:
        stack.append(transforms.RandomResizedCrop(res, scale=(0.08, 1.0)))
    else:
        # No random crop in the recipe; still bring images to the target grid.
        stack.append(transforms.Resize(res, interpolation=InterpolationMode.BICUBIC))
        stack.append(transforms.CenterCrop(res))
    if recipe.hflip:
        stack.append(transforms.RandomHorizontalFlip(0.5))
    if recipe.rand_augment is not None:
        magnitude, prob = recipe.rand_augment
        stack.append(transforms.RandomApply(
            [transforms.RandAugment(num_ops=2, magnitude=int(magnitude))], p=prob))
    elif recipe.auto_augment:
        policy = (transforms.AutoAugmentPolicy.CIFAR10 if res <= 64
                  else transforms.AutoAugmentPolicy.IMAGENET)
        stack.append(transforms.AutoAugment(policy))
    stack.append(transforms.ToTensor())
    stack.append(transforms.Normalize(mean, std))
    if recipe.random_erasing_prob > 0:
        stack.append(transforms.RandomErasing(p=recipe.random_erasing_prob))
    return transforms.Compose(stack)
