#!/usr/bin/env python3
"""Train a plain classifier to serve as a frozen CIFAR teacher.

The benchmark jobs expect teacher checkpoints as external inputs; this
helper produces one locally when no pretrained checkpoint is available.
Saves a state dict loadable via the job config's teacher_checkpoint.
"""
import argparse
import time
from pathlib import Path

import torch
import torch.nn.functional as F

from kdbench.data import (RepeatedAugSampler, build_augmentation, build_dataset,
                          derive_seed, seed_everything)
from kdbench.models import build_model
from kdbench.recipes import DatasetRef, builtin_recipe
from kdbench.train import ScheduleState, build_optimizer, evaluate, lr_at


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("arch", help="e.g. resnet56_cifar, resnet32x4_cifar")
    parser.add_argument("--data-root", type=Path, default=Path("data/cifar100"))
    parser.add_argument("--out", type=Path, default=None)
    parser.add_argument("--epochs", type=int, default=240)
    parser.add_argument("--batch-size", type=int, default=64)
    parser.add_argument("--lr", type=float, default=5e-2)
    parser.add_argument("--weight-decay", type=float, default=5e-4)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--device", default=None)
    args = parser.parse_args()

    device = torch.device(args.device or ("cuda" if torch.cuda.is_available() else "cpu"))
    recipe = builtin_recipe("C")
    recipe.name = "teacher"
    recipe.epochs = args.epochs
    recipe.batch_size = args.batch_size
    recipe.base_lr = args.lr
    recipe.weight_decay = args.weight_decay
    recipe.mixup_alpha = 0.0  # plain one-hot training for the teacher
    recipe.auto_augment = False

    ref = DatasetRef(name="cifar100", root=str(args.data_root), kind="cifar100",
                     class_count=100, resolution=32)
    transform = build_augmentation(recipe, train=True, ref=ref)
    dataset = build_dataset(ref, split="train", transform=transform)

    seed_everything(derive_seed(args.seed, "teacher-init"))
    model = build_model(args.arch, ref.class_count).to(device)
    optimizer = build_optimizer([model], recipe)
    sampler = RepeatedAugSampler(len(dataset), recipe.batch_size, seed=args.seed)
    schedule = ScheduleState(total_steps=args.epochs * len(sampler), warmup_steps=0,
                             base_lr=recipe.base_lr)

    step = 0
    start = time.time()
    for epoch in range(args.epochs):
        seed_everything(derive_seed(args.seed, "teacher-epoch", epoch))
        sampler.set_epoch(epoch)
        model.train()
        for indices in sampler:
            images = torch.stack([dataset[i][0] for i in indices]).to(device)
            targets = torch.tensor([dataset[i][1] for i in indices]).to(device)
            lr = lr_at(schedule, step)
            for g in optimizer.param_groups:
                g["lr"] = lr
            optimizer.zero_grad(set_to_none=True)
            loss = F.cross_entropy(model(images), targets)
            loss.backward()
            optimizer.step()
            step += 1
        if (epoch + 1) % 10 == 0 or epoch == args.epochs - 1:
            res = evaluate(model, ref, "test", recipe, device)
            print(f"epoch {epoch + 1}/{args.epochs} top1 {res.top1:.2f} "
                  f"({time.time() - start:.0f}s)")

    out = args.out or Path(f"checkpoints/{args.arch.replace('_cifar', '')}_cifar100.pt")
    out.parent.mkdir(parents=True, exist_ok=True)
    torch.save(model.state_dict(), out)
    print(f"saved teacher to {out}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
