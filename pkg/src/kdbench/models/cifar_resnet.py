"""Three-stage residual networks for 32x32 inputs.

Covers the classic depth family (resnet20/56/110) and the 4x-widened
variants (resnet8x4/resnet32x4) used as small teacher-student pairs.
"""
from __future__ import annotations

import torch
import torch.nn.functional as F
from torch import nn


class BasicBlock(nn.Module):
    expansion = 1

    def __init__(self, in_planes: int, planes: int, stride: int = 1):
        super().__init__()
        self.conv1 = nn.Conv2d(in_planes, planes, 3, stride=stride, padding=1, bias=False)
        self.bn1 = nn.BatchNorm2d(planes)
        self.conv2 = nn.Conv2d(planes, planes, 3, stride=1, padding=1, bias=False)
        self.bn2 = nn.BatchNorm2d(planes)
        self.shortcut = nn.Sequential()
        if stride != 1 or in_planes != planes:
            self.shortcut = nn.Sequential(
                nn.Conv2d(in_planes, planes, 1, stride=stride, bias=False),
                nn.BatchNorm2d(planes),
            )

    def forward(self, x):
        out = F.relu(self.bn1(self.conv1(x)))
        out = self.bn2(self.conv2(out))
        out = out + self.shortcut(x)
        return F.relu(out)


class CifarResNet(nn.Module):
    """Stem conv then three stages; stage widths come from ``widths``."""

    def __init__(self, blocks_per_stage: int, widths: tuple[int, int, int, int],
                 num_classes: int = 100):
        super().__init__()
        w0, w1, w2, w3 = widths
        self.conv1 = nn.Conv2d(3, w0, 3, stride=1, padding=1, bias=False)
        self.bn1 = nn.BatchNorm2d(w0)
        self.stage1 = self._stage(w0, w1, blocks_per_stage, stride=1)
        self.stage2 = self._stage(w1, w2, blocks_per_stage, stride=2)
        self.stage3 = self._stage(w2, w3, blocks_per_stage, stride=2)
        self.avgpool = nn.AdaptiveAvgPool2d(1)
        self.fc = nn.Linear(w3, num_classes)
        self.feature_channels = {"stage1": w1, "stage2": w2, "stage3": w3, "pool": w3}
        for m in self.modules():
            if isinstance(m, nn.Conv2d):
                nn.init.kaiming_normal_(m.weight, mode="fan_out", nonlinearity="relu")
            elif isinstance(m, nn.BatchNorm2d):
                nn.init.ones_(m.weight)
                nn.init.zeros_(m.bias)

    @staticmethod
    def _stage(in_planes: int, planes: int, blocks: int, stride: int) -> nn.Sequential:
        layers = [BasicBlock(in_planes, planes, stride)]
        layers += [BasicBlock(planes, planes) for _ in range(blocks - 1)]
        return nn.Sequential(*layers)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        out = F.relu(self.bn1(self.conv1(x)))
        out = self.stage1(out)
        out = self.stage2(out)
        out = self.stage3(out)
        out = self.avgpool(out).flatten(1)
        return self.fc(out)


_PLAIN = (16, 16, 32, 64)
_WIDE4 = (32, 64, 128, 256)


def resnet20(num_classes: int = 100) -> CifarResNet:
    return CifarResNet(3, _PLAIN, num_classes)


def resnet56(num_classes: int = 100) -> CifarResNet:
    return CifarResNet(9, _PLAIN, num_classes)


def resnet110(num_classes: int = 100) -> CifarResNet:
    return CifarResNet(18, _PLAIN, num_classes)


def resnet8x4(num_classes: int = 100) -> CifarResNet:
    return CifarResNet(1, _WIDE4, num_classes)


def resnet32x4(num_classes: int = 100) -> CifarResNet:
    return CifarResNet(5, _WIDE4, num_classes)
