import math

import numpy as np
import pytest

from tripletdiff.diffusion import (ScheduleError, ddim_step, forward_noise, inference_subsequence, make_schedule,
                                   sample)
from tripletdiff.labels import LabelSequence


class Oracle:
    """Returns the clean labels whatever it is shown."""

    def __init__(self, x0):
        self.x0 = np.asarray(x0, dtype=np.float32)
        self.width = self.x0.shape[1]

    def predict(self, x_s, s, features):
        return self.x0


def _binary(rng, shape, p=0.3):
    return LabelSequence((rng.random(shape) < p).astype(np.float32))


@pytest.mark.parametrize("total", [1, 8, 100, 1000])
def test_schedule_monotone(total):
    sch = make_schedule(total)
    assert sch.alpha[0] == 1.0 and len(sch.alpha) == total + 1
    assert np.all(np.diff(sch.alpha) < 0)
    assert sch.alpha[-1] < 0.01
    for s, s_prev in zip(range(total, 0, -1), range(total - 1, -1, -1)):
        assert sch.sigma(s, s_prev) ** 2 <= 1 - sch.alpha[s_prev] + 1e-12


def test_schedule_endpoints():
    sch = make_schedule(1000)
    assert sch.alpha[1] > 0.9999 and sch.alpha[1000] < 1e-6
    with pytest.raises(ScheduleError):
        make_schedule(0)
    with pytest.raises(ScheduleError):
        make_schedule(10, eta=-1)


def test_inference_subsequence():
    assert inference_subsequence(1000, 8) == (1000, 875, 750, 625, 500, 375, 250, 125)
    assert inference_subsequence(1000, 1) == (1000,)
    assert inference_subsequence(5, 5) == (5, 4, 3, 2, 1)
    with pytest.raises(ScheduleError):
        inference_subsequence(10, 11)
    assert make_schedule(1000).with_steps(4).pairs() == [(1000, 750), (750, 500), (500, 250), (250, 0)]


def test_forward_noise_edges(rng):
    sch = make_schedule(1000)
    x0 = _binary(rng, (6, 5))
    eps = rng.standard_normal((6, 5))
    assert np.array_equal(forward_noise(x0, 0, sch, eps).values, x0.normalized().values)
    s = 300
    got = forward_noise(x0, s, sch, np.zeros((6, 5))).values
    assert np.allclose(got, math.sqrt(sch.alpha[s]) * x0.normalized().values, atol=1e-7)
    ones = LabelSequence(np.ones((3, 4)))
    assert np.all(forward_noise(ones, 1000, sch, np.full((3, 4), 10.0)).values == 1.0)
    with pytest.raises(ScheduleError):
        forward_noise(x0, 1001, sch, eps)


def test_forward_noise_statistics():
    sch = make_schedule(1000)
    x0 = LabelSequence(np.full((100, 100), 0.5))  # signed zero
    eps = np.random.default_rng(7).standard_normal((100, 100))
    x = forward_noise(x0, 1000, sch, eps, clip=False).values
    assert abs(x.mean()) < 0.05 and abs(x.var() - 1) < 0.1
    assert np.array_equal(x, forward_noise(x0, 1000, sch, eps, clip=False).values)


def test_ddim_step_to_zero_returns_denoised(rng):
    sch = make_schedule(1000, eta=0.0)
    x = LabelSequence(rng.uniform(-1, 1, (4, 3)), domain="signed")
    d = _binary(rng, (4, 3)).normalized()
    for s in (1, 125, 1000):
        assert np.allclose(ddim_step(x, d, s, 0, sch).values, d.values, atol=1e-6)
    with pytest.raises(ScheduleError):
        ddim_step(x, d, 3, 5, sch)


def test_ddim_eta_zero_ignores_noise(rng):
    sch = make_schedule(1000, eta=0.0)
    x = LabelSequence(rng.uniform(-1, 1, (4, 3)), domain="signed")
    d = _binary(rng, (4, 3)).normalized()
    a = ddim_step(x, d, 500, 250, sch).values
    b = ddim_step(x, d, 500, 250, sch, noise=rng.standard_normal((4, 3))).values
    assert np.array_equal(a, b)


@pytest.mark.parametrize("steps", [1, 2, 4, 8, 16])
def test_manual_trajectory_round_trip(steps, rng):
    # unclipped forward sample stays on the deterministic trajectory of the true clean labels
    sch = make_schedule(1000, eta=0.0).with_steps(steps)
    x0 = _binary(rng, (10, 7)).normalized()
    eps = rng.standard_normal((10, 7))
    s0 = sch.inference_steps[0]
    x = LabelSequence(math.sqrt(sch.alpha[s0]) * x0.values + math.sqrt(1 - sch.alpha[s0]) * eps, domain="signed")
    for s, s_prev in sch.pairs():
        x = ddim_step(x, x0, s, s_prev, sch)
    assert np.max(np.abs(x.values - x0.values)) <= 1e-5


@pytest.mark.parametrize("steps", [1, 2, 4, 8, 16])
def test_oracle_sampling_recovers_ground_truth(steps, rng):
    sch = make_schedule(1000, eta=0.0).with_steps(steps)
    truth = _binary(rng, (25, 9)).values
    out = sample(Oracle(truth), np.zeros((25, 3)), sch, seed=steps)
    assert out.domain == "binary01"
    assert np.max(np.abs(out.values - truth)) <= 1e-5


def test_sampling_deterministic_given_seed(rng):
    sch = make_schedule(1000, eta=1.0)

    class Noisy(Oracle):
        def predict(self, x_s, s, features):
            return np.clip((x_s + 1) / 2, 0, 1)

    m = Noisy(np.zeros((12, 4)))
    a = sample(m, np.zeros((12, 2)), sch, seed=5).values
    b = sample(m, np.zeros((12, 2)), sch, seed=5).values
    c = sample(m, np.zeros((12, 2)), sch, seed=6).values
    assert np.array_equal(a, b) and not np.array_equal(a, c)


def test_label_sequence_domains():
    x = LabelSequence(np.array([[0.0, 1.0, 0.25]]))
    assert x.normalized().values.tolist() == [[-1.0, 1.0, -0.5]]
    assert np.array_equal(x.normalized().unit().values, x.values)
    with pytest.raises(ValueError):
        LabelSequence(np.zeros(3))
    with pytest.raises(ValueError):
        LabelSequence(np.zeros((1, 1)), space="bogus")
