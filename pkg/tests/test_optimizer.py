import math

import numpy as np
import pytest

from norakit.encoder import Dims, EncoderParams
from norakit.errors import NonFiniteGradient
from norakit.optimizer import (
    REFERENCE_LRS, OptimConfig, OptimState, adamw_step, assign_param_groups, cosine_lr, current_lrs,
    effective_group,
)

C = {"tag": 3, "time": 7, "scale": 25, "sign": 2}


def scalar_problem(p=1.0):
    return {"p": np.array(p)}, OptimState({"p": np.array(0.0)}, {"p": np.array(0.0)})


def step_scalar(params, grads, state, lr, cfg):
    # assign_param_groups maps unknown names to the backbone
    return adamw_step(params, grads, state, {"backbone": lr}, cfg)


def test_cosine_endpoints():
    assert cosine_lr(0, 100, 1e-3, 1e-7) == 1e-3
    assert cosine_lr(100, 100, 1e-3, 1e-7) == pytest.approx(1e-7, abs=1e-20)
    assert cosine_lr(50, 100, 1e-3, 0.0) == pytest.approx(5e-4, abs=1e-18)


def test_cosine_monotone_non_increasing():
    lrs = [cosine_lr(s, 37, 5e-4, 1e-7) for s in range(38)]
    assert all(a >= b for a, b in zip(lrs, lrs[1:]))


def test_cosine_rejects_bad_step():
    with pytest.raises(ValueError):
        cosine_lr(11, 10, 1e-3, 0.0)
    with pytest.raises(ValueError):
        cosine_lr(0, 0, 1e-3, 0.0)


def test_adamw_worked_example():
    params, state = scalar_problem(1.0)
    step_scalar(params, {"p": np.array(1.0)}, state, 0.1, OptimConfig())
    assert float(params["p"]) == pytest.approx(0.899000, abs=1e-6)
    # by hand: m_hat = v_hat = 1 at t = 1
    assert float(params["p"]) == pytest.approx(1.0 - 0.1 * 1.0 / (1.0 + 1e-8) - 0.1 * 0.01 * 1.0, abs=1e-15)


def test_adamw_zero_grad_no_decay_is_identity():
    params, state = scalar_problem(0.37)
    cfg = OptimConfig(weight_decay=0.0)
    for _ in range(3):
        step_scalar(params, {"p": np.array(0.0)}, state, 0.1, cfg)
    assert float(params["p"]) == 0.37


def test_adamw_zero_grad_is_pure_shrink():
    params, state = scalar_problem(2.0)
    step_scalar(params, {"p": np.array(0.0)}, state, 0.1, OptimConfig(weight_decay=0.5))
    assert float(params["p"]) == pytest.approx(2.0 * (1 - 0.1 * 0.5), abs=1e-15)


def test_adamw_reduces_to_scaled_sgd():
    rng = np.random.default_rng(0)
    cfg = OptimConfig(beta1=0.0, beta2=0.0, eps=1e6, weight_decay=0.01)
    p = rng.normal(size=5)
    params = {"p": p.copy()}
    state = OptimState({"p": np.zeros(5)}, {"p": np.zeros(5)})
    for _ in range(4):
        g = rng.normal(size=5)
        step_scalar(params, {"p": g}, state, 0.5, cfg)
        p = p - 0.5 * g / (np.abs(g) + 1e6) - 0.5 * 0.01 * p
        np.testing.assert_allclose(params["p"], p, rtol=1e-14)
        np.testing.assert_allclose(params["p"] - (p + 0.5 * g / (np.abs(g) + 1e6)),
                                   -0.5 * g / 1e6, atol=1e-11)


def test_adamw_bias_correction_over_steps():
    params, state = scalar_problem(0.0)
    cfg = OptimConfig(weight_decay=0.0)
    grads = [1.0, -2.0, 0.5]
    m = v = 0.0
    p = 0.0
    for t, g in enumerate(grads, 1):
        step_scalar(params, {"p": np.array(g)}, state, 0.01, cfg)
        m = 0.9 * m + 0.1 * g
        v = 0.999 * v + 0.001 * g * g
        p -= 0.01 * (m / (1 - 0.9 ** t)) / (math.sqrt(v / (1 - 0.999 ** t)) + 1e-8)
    assert float(params["p"]) == pytest.approx(p, abs=1e-15)


def test_adamw_non_finite_gradient():
    params, state = scalar_problem()
    with pytest.raises(NonFiniteGradient):
        step_scalar(params, {"p": np.array(np.nan)}, state, 0.1, OptimConfig())


def test_adamw_frozen_tensors_untouched():
    params = {"E": np.ones(3), "W": np.ones(3)}
    state = OptimState.zeros(params)
    adamw_step(params, {"E": np.full(3, np.nan), "W": np.ones(3)}, state, {"backbone": 0.1},
               OptimConfig(), frozen={"E"})
    assert np.all(params["E"] == 1) and np.all(params["W"] < 1)


def test_identical_optimizers_bit_identical():
    rng = np.random.default_rng(1)
    p = EncoderParams({n: rng.normal(size=s) for n, s in Dims(5, 3, 2, C).shapes().items()})
    grads = [EncoderParams({n: rng.normal(size=v.shape) for n, v in p.items()}) for _ in range(3)]
    cfg = OptimConfig()
    a, b = p.copy(), p.copy()
    sa, sb = OptimState.zeros(a), OptimState.zeros(b)
    for s, g in enumerate(grads):
        lrs = current_lrs(cfg, s, 3)
        adamw_step(a, g, sa, lrs, cfg)
        adamw_step(b, g, sb, lrs, cfg)
    assert a.equals(b)
    assert all(np.array_equal(sa.m[n], sb.m[n]) and np.array_equal(sa.v[n], sb.v[n]) for n in sa.m)


def test_param_groups():
    p = EncoderParams.zeros(Dims(5, 3, 2, C))
    groups = assign_param_groups(p)
    assert groups["head_U.tag"] == groups["head_c.tag"] == "tag_head"
    assert groups["head_U.scale"] == "scale_head"
    assert groups["E"] == groups["W"] == groups["b"] == "backbone"
    assert effective_group(groups["gate_w.sign"]) == "backbone"
    assert effective_group(groups["gate_b.tag"]) == "backbone"


def test_reference_learning_rates():
    lrs = OptimConfig().group_lrs()
    assert lrs["tag_head"] == 5e-4
    assert lrs["backbone"] == 1e-5
    assert lrs["scale_head"] == 3e-5 and lrs["sign_head"] == 2e-5 and lrs["time_head"] == 1e-5
    assert lrs["gate"] == lrs["backbone"]
    assert OptimConfig(gate_lr=1e-3).group_lrs()["gate"] == 1e-3
    assert REFERENCE_LRS["backbone"] == 1e-5


def test_config_defaults_and_validation():
    cfg = OptimConfig()
    assert (cfg.weight_decay, cfg.beta1, cfg.beta2, cfg.eps) == (0.01, 0.9, 0.999, 1e-8)
    assert (cfg.epochs, cfg.batch_size, cfg.eta_min) == (30, 64, 1e-7)
    with pytest.raises(ValueError):
        OptimConfig(beta1=1.0)
    with pytest.raises(ValueError):
        OptimConfig(eps=0.0)
    with pytest.raises(ValueError):
        OptimConfig(eta_min=1.0)
