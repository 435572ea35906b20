"""The distillation training loop.

One logical controller: sample a batch, mix it, run the frozen teacher
and the student on the identical images, assemble the method loss,
step the optimizer at the scheduled rate, optionally track an EMA
shadow. Checkpoints capture optimizer, schedule and RNG state so a
resumed run reproduces an uninterrupted one bit for bit (deterministic
mode, in-process loading).
"""
from __future__ import annotations

import dataclasses
import json
import logging
import random
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from ..config_io import job_to_dict
from ..data import (
    ImagesOnly,
    RepeatedAugSampler,
    build_augmentation,
    build_dataset,
    derive_seed,
    mix_batch,
    save_indices,
    seed_everything,
    stratified_indices,
    SubsetView,
)
from ..errors import ConfigError, DataError, NumericError
from ..losses import (
    LossBreakdown,
    bkl_loss,
    cc_loss,
    dist_loss,
    dkd_loss,
    hint_loss,
    kl_soft_loss,
    rkd_loss,
    vanilla_kd_loss,
)
from ..losses.hint import ProjectorSpec, build_projector
from ..losses.logits import _label_loss, dominant_class
from ..models import FeatureTaps, build_model, model_entry
from ..recipes import DistillJobSpec, check_job
from .ema import EmaShadow
from .manifest import MetricsRecord, RunManifest, append_metrics, spec_hash
from .optim import ScheduleState, build_optimizer, lr_at

logger = logging.getLogger(__name__)


@dataclass
class EvalResult:
    top1: float
    top5: float
    loss: float
    samples: int


@dataclass
class TrainResult:
    run_id: str
    run_dir: Path
    manifest: RunManifest
    final: Optional[MetricsRecord]
    step_losses: list[float] = field(default_factory=list)
    student: Optional[nn.Module] = None


def default_device() -> torch.device:
    return torch.device("cuda" if torch.cuda.is_available() else "cpu")


def parameters_fingerprint(model: nn.Module) -> str:
    import hashlib

    h = hashlib.sha256()
    for name, p in sorted(model.state_dict().items()):
        h.update(name.encode())
        h.update(p.detach().cpu().numpy().tobytes())
    return h.hexdigest()


def eval_split_for(ref) -> str:
    if ref.kind == "cifar100":
        return "test"
    root = Path(ref.root)
    for split in ("val", "test"):
        if (root / split).is_dir():
            return split
    raise DataError(f"no val/test split found under {ref.root}")


def _collate(dataset, indices: list[int]):
    items = [dataset[i] for i in indices]
    if isinstance(items[0], (tuple, list)):
        images = torch.stack([it[0] for it in items])
        targets = torch.tensor([it[1] for it in items])
        return images, targets
    return torch.stack(items), None


@torch.no_grad()
def evaluate(model: nn.Module, ref, split: str, recipe, device: torch.device,
             batch_size: int = 128, max_batches: Optional[int] = None) -> EvalResult:
    """Top-1/top-5 accuracy and CE loss under deterministic eval transforms."""
    transform = build_augmentation(recipe, train=False, ref=ref)
    dataset = build_dataset(ref, split=split, transform=transform)
    if len(dataset) == 0:
        raise DataError(f"split {split!r} of {ref.name} is empty")
    model_was_training = model.training
    model.eval()
    correct1 = correct5 = total = 0
    loss_sum = 0.0
    k5 = min(5, ref.class_count)
    order = list(range(len(dataset)))
    for start in range(0, len(order), batch_size):
        if max_batches is not None and start // batch_size >= max_batches:
            break
        images, targets = _collate(dataset, order[start:start + batch_size])
        images, targets = images.to(device), targets.to(device)
        logits = model(images)
        loss_sum += F.cross_entropy(logits, targets, reduction="sum").item()
        topk = logits.topk(k5, dim=1).indices
        correct1 += (topk[:, 0] == targets).sum().item()
        correct5 += (topk == targets.unsqueeze(1)).any(dim=1).sum().item()
        total += targets.numel()
    if model_was_training:
        model.train()
    return EvalResult(
        top1=100.0 * correct1 / total,
        top5=100.0 * correct5 / total,
        loss=loss_sum / total,
        samples=total,
    )


class Trainer:
    """Owns one run directory and drives a single distillation job."""

    def __init__(self, spec: DistillJobSpec, runs_root: str | Path = "runs",
                 device: Optional[torch.device] = None, run_id: Optional[str] = None,
                 allow_random_standin: bool = False, eval_batches: Optional[int] = None,
                 eval_batch_size: int = 128):
        check_job(spec)
        recipe = spec.recipe
        if recipe.teacher_resolution != recipe.student_resolution:
            raise ConfigError(
                "teacher and student resolutions must match: the teacher consumes "
                f"the identical mixed images ({recipe.teacher_resolution} vs "
                f"{recipe.student_resolution})"
            )
        self.spec = spec
        self.device = device or default_device()
        self.run_id = run_id or f"{spec.name or 'job'}-{spec_hash(spec)[:8]}"
        self.run_dir = Path(runs_root) / self.run_id
        self.allow_random_standin = allow_random_standin
        self.eval_batches = eval_batches
        self.eval_batch_size = eval_batch_size
        self.amp_enabled = bool(recipe.amp and self.device.type == "cuda")
        if recipe.amp and not self.amp_enabled:
            logger.info("recipe requests AMP but device is %s; running full precision",
                        self.device.type)

        k = spec.dataset.class_count
        seed_everything(derive_seed(spec.seed, "init"))
        self.student = build_model(spec.student, k, recipe.drop_path_rate,
                                   spec.student_checkpoint).to(self.device)
        self.teacher = build_model(spec.teacher, k, 0.0, spec.teacher_checkpoint,
                                   allow_random_standin=allow_random_standin).to(self.device)
        self.teacher.eval()
        for p in self.teacher.parameters():
            p.requires_grad_(False)

        self.projectors = nn.ModuleList()
        self._tap_pairs: list[tuple[str, str]] = []
        if spec.method in ("hint", "cc", "rkd"):
            self._tap_pairs = [tuple(p) for p in spec.hint_layer_pairs]
            if spec.method == "hint":
                s_entry, t_entry = model_entry(spec.student), model_entry(spec.teacher)
                for s_tap, t_tap in self._tap_pairs:
                    in_ch = s_entry.tap_channels.get(s_tap)
                    out_ch = t_entry.tap_channels.get(t_tap)
                    if in_ch and out_ch:
                        proj = build_projector(ProjectorSpec(in_ch, out_ch))
                    else:
                        proj = nn.Identity()
                    self.projectors.append(proj)
            self.projectors.to(self.device)

        self.optimizer = build_optimizer([self.student, self.projectors], recipe)
        self.ema = EmaShadow(self.student, recipe.ema_decay) if recipe.ema else None
        self.scaler = torch.amp.GradScaler("cuda", enabled=self.amp_enabled)

        transform = build_augmentation(recipe, train=True, ref=spec.dataset)
        dataset = build_dataset(spec.dataset, transform=transform)
        if spec.subset is not None:
            indices = stratified_indices(dataset.targets, spec.subset)
            self.run_dir.mkdir(parents=True, exist_ok=True)
            save_indices(indices, self.run_dir / "subset-indices.txt")
            dataset = SubsetView(dataset, indices)
        self.train_dataset = dataset
        self.sampler = RepeatedAugSampler(
            len(dataset), recipe.batch_size, recipe.repeated_aug_count,
            seed=derive_seed(spec.seed, "sampler"),
        )
        self.steps_per_epoch = len(self.sampler)
        if self.steps_per_epoch == 0 and recipe.epochs > 0:
            raise ConfigError(
                f"dataset of {len(dataset)} samples yields no full batches of "
                f"{recipe.batch_size} (repeats {recipe.repeated_aug_count})"
            )
        self.schedule = ScheduleState(
            total_steps=max(recipe.epochs * self.steps_per_epoch, 1),
            warmup_steps=recipe.warmup_epochs * self.steps_per_epoch,
            base_lr=recipe.base_lr,
        )
        self.global_step = 0
        self.start_epoch = 0
        self.start_step_in_epoch = 0
        self.best_top1 = float("-inf")
        self.step_losses: list[float] = []
        self._epoch_hits = [0, 0, 0]  # top1 hits, top5 hits, samples
        self._best_ckpt: Optional[Path] = None
        self._mix_rng = np.random.default_rng(derive_seed(spec.seed, "mix", 0))
        self._wall_start = time.time()
        self._resumed = False
        self.manifest = RunManifest.create(self.run_id, spec, str(self.device))

    # ---------------------------------------------------------------- losses

    def _method_loss(self, student_logits, teacher_logits, target_rows,
                     feats_s, feats_t, soft_only: bool = False) -> LossBreakdown:
        spec = self.spec
        recipe = spec.recipe
        student_logits = student_logits.float()
        teacher_logits = teacher_logits.float()
        if soft_only:
            return self._soft_only_loss(student_logits, teacher_logits)
        if spec.method == "kd":
            return vanilla_kd_loss(student_logits, teacher_logits, target_rows, spec)
        if spec.method == "dkd":
            hard = _label_loss(recipe.label_loss, student_logits, target_rows,
                               recipe.label_smoothing)
            idx = dominant_class(target_rows, student_logits.shape[1])
            soft_bd = dkd_loss(student_logits, teacher_logits, idx,
                               spec.dkd_alpha, spec.dkd_beta, spec.temperature)
            return LossBreakdown(total=hard + soft_bd.total, hard=hard,
                                 soft=soft_bd.total, components=soft_bd.components)
        if spec.method == "dist":
            return dist_loss(student_logits, teacher_logits, target_rows,
                             spec.dist_beta, spec.dist_gamma, tau=spec.temperature,
                             label_loss=recipe.label_loss,
                             smoothing=recipe.label_smoothing)
        # hint-based methods: label loss plus weighted feature term
        hard = _label_loss(recipe.label_loss, student_logits, target_rows,
                           recipe.label_smoothing)
        soft = self._feature_loss(feats_s, feats_t, student_logits)
        total = hard + spec.hint_weight * soft
        return LossBreakdown(total=total, hard=hard, soft=soft)

    def _feature_loss(self, feats_s, feats_t, ref_tensor) -> torch.Tensor:
        spec = self.spec
        terms = []
        for i, (s_tap, t_tap) in enumerate(self._tap_pairs):
            f_s = feats_s[s_tap].float()
            f_t = feats_t[t_tap].float().detach()
            if spec.method == "hint":
                proj = self.projectors[i] if i < len(self.projectors) else None
                terms.append(hint_loss(f_s, f_t, proj_s=proj, metric="l2"))
            elif spec.method == "cc":
                terms.append(cc_loss(f_s, f_t))
            else:
                terms.append(rkd_loss(f_s, f_t))
        if not terms:
            return ref_tensor.new_zeros(())
        return torch.stack(terms).mean()

    def _soft_only_loss(self, student_logits, teacher_logits) -> LossBreakdown:
        """First-stage objective on unlabeled pools: no hard-label term."""
        spec = self.spec
        if spec.method == "dkd":
            idx = teacher_logits.argmax(dim=1)
            bd = dkd_loss(student_logits, teacher_logits, idx,
                          spec.dkd_alpha, spec.dkd_beta, spec.temperature)
            return bd
        if spec.method == "dist":
            bd = dist_loss(student_logits, teacher_logits, teacher_logits.argmax(dim=1),
                           spec.dist_beta, spec.dist_gamma, tau=spec.temperature,
                           label_loss="none")
            return bd
        if spec.soft_loss == "bkl":
            soft = bkl_loss(student_logits, teacher_logits, spec.temperature)
        else:
            soft = kl_soft_loss(student_logits, teacher_logits, spec.temperature)
        return LossBreakdown(total=soft, hard=soft.new_zeros(()), soft=soft)

    # ----------------------------------------------------------------- steps

    def _forward_pair(self, images):
        with torch.autocast(self.device.type, enabled=self.amp_enabled):
            if self._tap_pairs:
                s_taps = [p[0] for p in self._tap_pairs]
                t_taps = [p[1] for p in self._tap_pairs]
                with FeatureTaps(self.student, s_taps) as ts:
                    student_logits = self.student(images)
                    feats_s = dict(ts.outputs)
                with torch.no_grad(), FeatureTaps(self.teacher, t_taps) as tt:
                    teacher_logits = self.teacher(images)
                    feats_t = dict(tt.outputs)
            else:
                feats_s = feats_t = {}
                student_logits = self.student(images)
                with torch.no_grad():
                    teacher_logits = self.teacher(images)
        return student_logits, teacher_logits, feats_s, feats_t

    def _train_step(self, images, targets, soft_only: bool = False) -> LossBreakdown:
        spec = self.spec
        images = images.to(self.device)
        if targets is not None:
            mixed = mix_batch(images, targets.to(self.device), spec.recipe,
                              spec.dataset.class_count, self._mix_rng)
            images, target_rows = mixed.images, mixed.targets
        else:
            target_rows = None
        student_logits, teacher_logits, feats_s, feats_t = self._forward_pair(images)
        bd = self._method_loss(student_logits, teacher_logits, target_rows,
                               feats_s, feats_t, soft_only=soft_only)
        if not torch.isfinite(bd.total):
            self._dump_diagnostic(bd, images)
            raise NumericError(
                f"non-finite loss at step {self.global_step}; diagnostic written to "
                f"{self.run_dir / 'diagnostic.json'}"
            )
        lr = lr_at(self.schedule, min(self.global_step, self.schedule.total_steps))
        for group in self.optimizer.param_groups:
            group["lr"] = lr
        self.schedule.step = self.global_step
        self.schedule.current_lr = lr
        self.optimizer.zero_grad(set_to_none=True)
        self.scaler.scale(bd.total).backward()
        self.scaler.step(self.optimizer)
        self.scaler.update()
        if self.ema is not None:
            self.ema.update(self.student)
        if target_rows is not None:
            with torch.no_grad():
                labels = dominant_class(target_rows, student_logits.shape[1])
                k5 = min(5, student_logits.shape[1])
                topk = student_logits.float().topk(k5, dim=1).indices
                self._epoch_hits[0] += int((topk[:, 0] == labels).sum())
                self._epoch_hits[1] += int((topk == labels.unsqueeze(1)).any(dim=1).sum())
                self._epoch_hits[2] += labels.numel()
        self.global_step += 1
        self.step_losses.append(float(bd.total.detach()))
        return bd

    def _dump_diagnostic(self, bd: LossBreakdown, images) -> None:
        self.run_dir.mkdir(parents=True, exist_ok=True)
        payload = {
            "step": self.global_step,
            "lr": self.schedule.current_lr,
            "loss_components": {k: float(v) for k, v in
                                [("total", bd.total), ("hard", bd.hard), ("soft", bd.soft)]
                                + list(bd.components.items())},
            "batch_stats": {
                "mean": float(images.mean()),
                "std": float(images.std()),
                "min": float(images.min()),
                "max": float(images.max()),
            },
        }
        (self.run_dir / "diagnostic.json").write_text(json.dumps(payload, indent=2))

    # ------------------------------------------------------------ run control

    def _rng_state(self) -> dict:
        return {
            "torch": torch.get_rng_state(),
            "numpy": np.random.get_state(),
            "python": random.getstate(),
            "mix": self._mix_rng.bit_generator.state,
        }

    def _restore_rng(self, state: dict) -> None:
        torch.set_rng_state(state["torch"])
        np.random.set_state(state["numpy"])
        random.setstate(state["python"])
        self._mix_rng.bit_generator.state = state["mix"]

    def save_checkpoint(self, epoch: int, step_in_epoch: int, tag: Optional[str] = None) -> Path:
        self.run_dir.mkdir(parents=True, exist_ok=True)
        payload = {
            "student": self.student.state_dict(),
            "projectors": self.projectors.state_dict(),
            "optimizer": self.optimizer.state_dict(),
            "schedule": dataclasses.asdict(self.schedule),
            "ema": self.ema.state_dict() if self.ema else None,
            "epoch": epoch,
            "step_in_epoch": step_in_epoch,
            "global_step": self.global_step,
            "best_top1": self.best_top1,
            "rng": self._rng_state(),
            "manifest_hash": spec_hash(self.spec),
            "spec": job_to_dict(self.spec),
            "arch": self.spec.student,
            "class_count": self.spec.dataset.class_count,
        }
        name = tag or f"ckpt-{epoch}"
        path = self.run_dir / name
        torch.save(payload, path)
        return path

    def load_checkpoint(self, path: str | Path) -> None:
        payload = torch.load(path, map_location=self.device, weights_only=False)
        if payload["manifest_hash"] != spec_hash(self.spec):
            logger.warning("checkpoint spec hash differs from current spec")
        self.student.load_state_dict(payload["student"])
        self.projectors.load_state_dict(payload["projectors"])
        self.optimizer.load_state_dict(payload["optimizer"])
        self.schedule = ScheduleState(**payload["schedule"])
        if self.ema and payload["ema"]:
            self.ema.load_state_dict(payload["ema"])
        self.global_step = payload["global_step"]
        self.start_epoch = payload["epoch"]
        self.start_step_in_epoch = payload["step_in_epoch"]
        self.best_top1 = payload["best_top1"]
        self._restore_rng(payload["rng"])
        self._resumed = True

    def _epoch_record(self, epoch: int, split: str, loss_sums, lr) -> MetricsRecord:
        n = max(self._epoch_hits[2], 1)
        return MetricsRecord(
            run_id=self.run_id, epoch=epoch, split=split,
            top1=100.0 * self._epoch_hits[0] / n, top5=100.0 * self._epoch_hits[1] / n,
            loss_total=loss_sums[0] / max(loss_sums[3], 1),
            loss_hard=loss_sums[1] / max(loss_sums[3], 1),
            loss_soft=loss_sums[2] / max(loss_sums[3], 1),
            lr=lr, wall_time_s=time.time() - self._wall_start,
        )

    def _eval_record(self, epoch: int, split: str, res: EvalResult) -> MetricsRecord:
        return MetricsRecord(
            run_id=self.run_id, epoch=epoch, split=split,
            top1=res.top1, top5=res.top5,
            loss_total=res.loss, loss_hard=res.loss, loss_soft=0.0,
            lr=self.schedule.current_lr, wall_time_s=time.time() - self._wall_start,
        )

    def _run_eval(self, epoch: int) -> Optional[MetricsRecord]:
        if self.eval_batches == 0:
            return None
        spec = self.spec
        split = eval_split_for(spec.dataset)
        res = evaluate(self.student, spec.dataset, split, spec.recipe, self.device,
                       batch_size=self.eval_batch_size, max_batches=self.eval_batches)
        record = self._eval_record(epoch, split, res)
        append_metrics(self.run_dir, record)
        return record

    def train(self, max_steps: Optional[int] = None) -> TrainResult:
        spec = self.spec
        recipe = spec.recipe
        self.manifest.write(self.run_dir)
        if recipe.epochs == 0:
            final = self._run_eval(epoch=0)
            return TrainResult(self.run_id, self.run_dir, self.manifest, final,
                               self.step_losses, self.student)

        final_record: Optional[MetricsRecord] = None
        stop = False
        for epoch in range(self.start_epoch, recipe.epochs):
            resuming_here = self._resumed and epoch == self.start_epoch
            if not resuming_here:
                seed_everything(derive_seed(spec.seed, "epoch", epoch))
                self._mix_rng = np.random.default_rng(derive_seed(spec.seed, "mix", epoch))
            self.sampler.set_epoch(epoch)
            skip = self.start_step_in_epoch if resuming_here else 0
            loss_sums = [0.0, 0.0, 0.0, 0]
            self._epoch_hits = [0, 0, 0]
            self.student.train()
            for step_in_epoch, batch_indices in enumerate(self.sampler):
                if step_in_epoch < skip:
                    continue
                images, targets = _collate(self.train_dataset, batch_indices)
                bd = self._train_step(images, targets)
                loss_sums[0] += float(bd.total.detach())
                loss_sums[1] += float(bd.hard.detach())
                loss_sums[2] += float(bd.soft.detach())
                loss_sums[3] += 1
                if max_steps is not None and self.global_step >= max_steps:
                    self.save_checkpoint(epoch, step_in_epoch + 1, tag="ckpt-last")
                    stop = True
                    break
            record = self._epoch_record(epoch, "train", loss_sums, self.schedule.current_lr)
            append_metrics(self.run_dir, record)
            final_record = record
            if stop:
                break
            eval_rec = self._run_eval(epoch)
            epoch_ckpt = self.save_checkpoint(epoch + 1, 0)
            if eval_rec is not None:
                final_record = eval_rec
                if eval_rec.top1 > self.best_top1:
                    self.best_top1 = eval_rec.top1
                    self._best_ckpt = epoch_ckpt
            self._prune_checkpoints(keep={epoch_ckpt, self._best_ckpt})
        return TrainResult(self.run_id, self.run_dir, self.manifest, final_record,
                           self.step_losses, self.student)

    def _prune_checkpoints(self, keep: set) -> None:
        # keep best-by-val-top-1 plus last
        keep = {p for p in keep if p is not None}
        for path in self.run_dir.glob("ckpt-*"):
            if path not in keep and path.name != "ckpt-last":
                path.unlink()

    def train_two_stage(self, max_steps: Optional[int] = None) -> TrainResult:
        spec = self.spec
        stage = spec.unlabeled_stage
        if stage is None:
            raise ConfigError("two-stage training requires unlabeled_stage")
        self.manifest.stages = {
            "stage1_iterations": stage.iterations,
            "stage2_iterations": spec.recipe.epochs * self.steps_per_epoch,
        }
        self.manifest.stages["total_iterations"] = sum(self.manifest.stages.values())
        self.manifest.write(self.run_dir)
        if stage.iterations > 0:
            transform = build_augmentation(spec.recipe, train=True, ref=stage.pool)
            pool = ImagesOnly(build_dataset(stage.pool, transform=transform))
            sampler = RepeatedAugSampler(len(pool), spec.recipe.batch_size, 1,
                                         seed=derive_seed(spec.seed, "pool"))
            if len(sampler) == 0:
                raise DataError("unlabeled pool smaller than one batch")
            stage_schedule = ScheduleState(total_steps=stage.iterations, warmup_steps=0,
                                           base_lr=spec.recipe.base_lr)
            main_schedule = self.schedule
            self.schedule = stage_schedule
            done = 0
            epoch = 0
            loss_sums = [0.0, 0.0, 0.0, 0]
            self.student.train()
            while done < stage.iterations:
                seed_everything(derive_seed(spec.seed, "pool-epoch", epoch))
                self._mix_rng = np.random.default_rng(derive_seed(spec.seed, "pool-mix", epoch))
                sampler.set_epoch(epoch)
                for batch_indices in sampler:
                    images, _ = _collate(pool, batch_indices)
                    bd = self._train_step(images, None, soft_only=True)
                    loss_sums[0] += float(bd.total.detach())
                    loss_sums[2] += float(bd.soft.detach())
                    loss_sums[3] += 1
                    done += 1
                    if done >= stage.iterations:
                        break
                epoch += 1
            record = self._epoch_record(-1, "train-stage1", loss_sums,
                                        self.schedule.current_lr)
            append_metrics(self.run_dir, record)
            self.schedule = main_schedule
            self.global_step = 0
        return self.train(max_steps=max_steps)


def train_distill(spec: DistillJobSpec, runs_root: str | Path = "runs",
                  device: Optional[torch.device] = None,
                  max_steps: Optional[int] = None,
                  resume_from: Optional[str | Path] = None,
                  run_id: Optional[str] = None,
                  allow_random_standin: bool = False,
                  eval_batches: Optional[int] = None,
                  eval_batch_size: int = 128) -> TrainResult:
    """Run one distillation job end to end; returns the manifest and final metrics."""
    trainer = Trainer(spec, runs_root=runs_root, device=device, run_id=run_id,
                      allow_random_standin=allow_random_standin,
                      eval_batches=eval_batches, eval_batch_size=eval_batch_size)
    if resume_from is not None:
        trainer.load_checkpoint(resume_from)
    if spec.unlabeled_stage is not None:
        return trainer.train_two_stage(max_steps=max_steps)
    return trainer.train(max_steps=max_steps)


def two_stage_distill(spec: DistillJobSpec, **kwargs) -> TrainResult:
    """Soft-label-only first stage on the unlabeled pool, then standard training."""
    if spec.unlabeled_stage is None:
        raise ConfigError("two_stage_distill requires spec.unlabeled_stage")
    return train_distill(spec, **kwargs)
