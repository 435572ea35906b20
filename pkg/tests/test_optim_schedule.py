"""Schedule shape, LAMB behavior, parameter grouping, EMA."""
import pytest
import torch
from torch import nn

from kdbench.errors import ConfigError
from kdbench.recipes import builtin_recipe
from kdbench.train import EmaShadow, Lamb, ScheduleState, build_optimizer, ema_update, lr_at
from kdbench.train.optim import param_groups


class TestSchedule:
    def state(self, total=1000, warmup=100, lr=0.4):
        return ScheduleState(total_steps=total, warmup_steps=warmup, base_lr=lr)

    def test_warmup_endpoint_is_base_lr(self):
        s = self.state()
        assert lr_at(s, 100) == pytest.approx(0.4)

    def test_final_step_is_zero(self):
        s = self.state()
        assert lr_at(s, 1000) == pytest.approx(0.0, abs=1e-12)

    def test_decay_midpoint_is_half(self):
        s = self.state()
        mid = 100 + (1000 - 100) // 2
        assert lr_at(s, mid) == pytest.approx(0.2)

    def test_linear_warmup(self):
        s = self.state()
        assert lr_at(s, 0) == 0.0
        assert lr_at(s, 50) == pytest.approx(0.2)

    def test_no_warmup_starts_at_base(self):
        s = self.state(warmup=0)
        assert lr_at(s, 0) == pytest.approx(0.4)

    def test_monotone_up_then_down(self):
        s = self.state(total=400, warmup=40)
        values = [lr_at(s, t) for t in range(401)]
        for a, b in zip(values[:40], values[1:41]):
            assert b >= a
        for a, b in zip(values[40:-1], values[41:]):
            assert b <= a

    def test_out_of_range_step(self):
        with pytest.raises(ConfigError):
            lr_at(self.state(), 1001)


class TestLamb:
    def test_descends_quadratic(self):
        torch.manual_seed(0)
        w = nn.Parameter(torch.tensor([3.0, -2.0]))
        opt = Lamb([w], lr=0.1)
        for _ in range(200):
            opt.zero_grad()
            loss = (w**2).sum()
            loss.backward()
            opt.step()
        assert float((w.detach() ** 2).sum()) < 1e-3

    def test_trust_ratio_fallback_for_zero_weight(self):
        w = nn.Parameter(torch.zeros(3))
        opt = Lamb([w], lr=0.05)
        opt.zero_grad()
        (w * torch.tensor([1.0, 2.0, 3.0])).sum().backward()
        opt.step()
        assert torch.isfinite(w).all()
        assert float(w.abs().sum()) > 0  # trust ratio 1 applied, not 0/0

    def test_weight_decay_changes_update(self):
        torch.manual_seed(1)
        init = torch.randn(4)
        w1 = nn.Parameter(init.clone())
        w2 = nn.Parameter(init.clone())
        for w, wd in ((w1, 0.0), (w2, 0.5)):
            opt = Lamb([w], lr=0.01, weight_decay=wd)
            for _ in range(3):
                opt.zero_grad()
                (w.sin()).sum().backward()
                opt.step()
        assert not torch.allclose(w1, w2)

    def test_rejects_bad_hparams(self):
        w = nn.Parameter(torch.zeros(1))
        with pytest.raises(ValueError):
            Lamb([w], lr=-1)
        with pytest.raises(ValueError):
            Lamb([w], betas=(1.5, 0.9))


class TestParamGroups:
    def test_norm_and_bias_skip_decay(self):
        model = nn.Sequential(nn.Conv2d(3, 8, 3, bias=True), nn.BatchNorm2d(8),
                              nn.Linear(8, 4))
        groups = param_groups([model], weight_decay=0.1)
        assert groups[0]["weight_decay"] == 0.1
        assert groups[1]["weight_decay"] == 0.0
        decay_shapes = {tuple(p.shape) for p in groups[0]["params"]}
        nodecay_shapes = {tuple(p.shape) for p in groups[1]["params"]}
        assert (8, 3, 3, 3) in decay_shapes
        assert (4, 8) in decay_shapes
        assert all(len(s) == 1 for s in nodecay_shapes)

    def test_builders_match_recipe(self):
        model = nn.Linear(4, 4)
        for name, cls in (("A2", Lamb), ("B", torch.optim.AdamW), ("C", torch.optim.SGD)):
            opt = build_optimizer([model], builtin_recipe(name))
            assert isinstance(opt, cls)

    def test_sgd_momentum(self):
        opt = build_optimizer([nn.Linear(2, 2)], builtin_recipe("C"))
        assert opt.param_groups[0]["momentum"] == 0.9
        assert opt.param_groups[0]["nesterov"] is False


class TestEma:
    def test_decay_zero_copies_params(self):
        shadow = torch.zeros(4)
        params = torch.arange(4.0)
        assert torch.equal(ema_update(shadow, params, 0.0), params)

    def test_single_step_arithmetic(self):
        out = ema_update(torch.zeros(1), torch.ones(1), 0.9)
        assert float(out) == pytest.approx(0.1)

    def test_geometric_convergence(self):
        shadow = torch.zeros(1, dtype=torch.float64)
        for _ in range(300):
            shadow = ema_update(shadow, torch.ones(1, dtype=torch.float64), 0.9)
        assert float(shadow) == pytest.approx(1.0, abs=1e-9)

    def test_invalid_decay(self):
        with pytest.raises(ValueError):
            ema_update(torch.zeros(1), torch.zeros(1), 1.0)

    def test_shadow_tracks_model(self):
        model = nn.Linear(3, 3)
        ema = EmaShadow(model, decay=0.5)
        with torch.no_grad():
            model.weight.add_(1.0)
        ema.update(model)
        ema.update(model)
        clone = nn.Linear(3, 3)
        clone.load_state_dict(model.state_dict())
        ema.copy_to(clone)
        expected = model.weight - 0.25  # 0.5^2 of the unit bump remains
        assert torch.allclose(clone.weight, expected, atol=1e-6)
