import numpy as np
import pytest

from freqalign import adversarial as adv
from freqalign import autodiff as ad
from freqalign.autodiff import Tensor
from freqalign.errors import ContractError


class StubNet:
    """Returns a fixed probability for every sample; ignores its input."""

    def __init__(self, prob):
        self.prob = prob

    def __call__(self, x):
        return Tensor(np.full((x.shape[0], 1), self.prob))


class IdentityGen:
    def __call__(self, x):
        return x


def test_log_normalize_zero_input_is_all_zeros():
    out = adv.log_normalize(np.zeros((1, 4, 4)))
    assert np.array_equal(out.data, np.zeros((1, 4, 4)))


def test_log_normalize_single_spike_hits_endpoints():
    amp = np.zeros((1, 3, 3))
    amp[0, 1, 2] = 7.0
    out = adv.log_normalize(amp).data
    assert out[0, 1, 2] == 1.0
    out[0, 1, 2] = 0.0
    assert np.array_equal(out, np.zeros((1, 3, 3)))


def test_log_normalize_log_spaced_values():
    # log1p of [0, e-1, e^2-1] is [0, 1, 2]; min-max gives [0, 0.5, 1]
    amp = np.array([0.0, np.e - 1.0, np.e ** 2 - 1.0]).reshape(1, 1, 3)
    out = adv.log_normalize(amp).data.ravel()
    assert out == pytest.approx([0.0, 0.5, 1.0], abs=1e-12)


def test_log_normalize_is_per_sample_for_batches():
    rng = np.random.default_rng(0)
    batch = rng.uniform(0, 5, (3, 1, 4, 4))
    batch[1] *= 100.0
    out = adv.log_normalize(batch).data
    for i in range(3):
        assert out[i].min() == pytest.approx(0.0)
        assert out[i].max() == pytest.approx(1.0)


def test_log_normalize_rejects_negative():
    with pytest.raises(ContractError):
        adv.log_normalize(np.array([[-0.1]]))


def test_denormalize_inverts_log_normalize():
    rng = np.random.default_rng(1)
    amp = rng.uniform(0, 50, (2, 1, 8, 8))
    norm, lo, hi = adv.log_normalize_stats(amp)
    back = adv.denormalize_amplitude(norm.data, lo, hi)
    assert np.max(np.abs(back - amp)) < 1e-9


def test_generator_is_identity_at_init_and_shape_preserving():
    rng = np.random.default_rng(2)
    gen = adv.GeneratorNet(channels=2, rng=rng)
    x = Tensor(rng.uniform(0, 1, (3, 2, 8, 8)))
    out = gen(x)
    assert out.shape == x.shape
    assert np.array_equal(out.data, x.data)   # zero-init residual
    assert np.all(np.isfinite(out.data))


def test_discriminator_outputs_probability_per_sample():
    rng = np.random.default_rng(3)
    disc = adv.DiscriminatorNet(channels=1, rng=rng)
    for size in (8, 16, 20):
        out = disc(Tensor(rng.uniform(0, 1, (4, 1, size, size))))
        assert out.shape == (4, 1)
        assert np.all(out.data > 0) and np.all(out.data < 1)


def test_d_loss_fixed_point_at_one_half():
    d = StubNet(0.5)
    g = IdentityGen()
    a = Tensor(np.zeros((4, 1, 8, 8)))
    d_loss, g_loss = adv.adl_losses(d, g, a, a)
    assert d_loss.item() == pytest.approx(2 * np.log(2), abs=1e-9)
    assert g_loss.item() == pytest.approx(np.log(2), abs=1e-9)


def test_d_loss_near_zero_for_perfect_discriminator():
    # D(A_t)=1-1e-7 on the first (real) call, D(G(A_s))=1e-7 afterwards
    class SplitD:
        def __init__(self):
            self.calls = 0

        def __call__(self, x):
            self.calls += 1
            value = 1.0 - 1e-7 if self.calls == 1 else 1e-7
            return Tensor(np.full((x.shape[0], 1), value))

    a = Tensor(np.zeros((4, 1, 8, 8)))
    d_loss, _ = adv.adl_losses(SplitD(), IdentityGen(), a, a)
    assert abs(d_loss.item()) < 1e-6


def test_losses_finite_even_for_saturated_probabilities():
    for prob in (0.0, 1.0):
        d_loss, g_loss = adv.adl_losses(StubNet(prob), IdentityGen(),
                                        Tensor(np.zeros((2, 1, 8, 8))),
                                        Tensor(np.zeros((2, 1, 8, 8))))
        assert np.isfinite(d_loss.item()) and np.isfinite(g_loss.item())
        assert d_loss.item() >= 0.0


def test_saturating_flag_changes_generator_loss_sign_structure():
    d = StubNet(0.3)
    a = Tensor(np.zeros((2, 1, 8, 8)))
    _, g_ns = adv.adl_losses(d, IdentityGen(), a, a, saturating=False)
    _, g_sat = adv.adl_losses(d, IdentityGen(), a, a, saturating=True)
    assert g_ns.item() == pytest.approx(-np.log(0.3), abs=1e-9)
    assert g_sat.item() == pytest.approx(np.log(0.7), abs=1e-9)


def test_discriminator_confidence_strictly_decreases_d_loss():
    # 1-parameter discriminator: D(x) = sigmoid(theta * mean(x))
    class OneParamD:
        def __init__(self, theta):
            self.theta = Tensor(np.array([[theta]]), requires_grad=True)

        def __call__(self, x):
            pooled = ad.tmean(x, axis=(1, 2, 3)).reshape(-1, 1)
            return ad.sigmoid(ad.matmul(pooled, self.theta))

    a_t = Tensor(np.full((4, 1, 4, 4), 1.0))     # real samples, mean 1
    a_s = Tensor(np.full((4, 1, 4, 4), -1.0))    # fakes, mean -1
    losses = []
    for theta in (0.0, 0.5, 1.0, 2.0):
        d_loss, _ = adv.adl_losses(OneParamD(theta), IdentityGen(), a_s, a_t)
        losses.append(d_loss.item())
    assert all(b < a for a, b in zip(losses, losses[1:]))


def test_adl_step_updates_are_isolated():
    rng = np.random.default_rng(4)
    state = adv.AdlState.create(channels=1, rng=rng, lr=1e-3)
    a_s = adv.log_normalize(adv.toy_amplitudes(rng, 8, 8, 1.0))
    a_t = adv.log_normalize(adv.toy_amplitudes(rng, 8, 8, 10.0))

    def checksum(net):
        return [t.data.copy() for _, t in net.params()]

    g_before = checksum(state.g)
    d_before = checksum(state.d)
    report, generated = adv.adl_step(state, a_s, a_t, update_g=False)
    # frozen generator: d moved, g untouched
    assert all(np.array_equal(a, b) for a, b in zip(g_before, checksum(state.g)))
    assert not all(np.array_equal(a, b) for a, b in zip(d_before, checksum(state.d)))
    assert generated.shape == a_s.shape
    assert 0.0 <= report.d_acc <= 1.0
    assert report.d_loss >= 0.0

    d_mid = checksum(state.d)
    adv.adl_step(state, a_s, a_t, update_g=True)
    assert not all(np.array_equal(a, b) for a, b in zip(g_before, checksum(state.g)))


def test_chance_accuracy_on_identical_distributions():
    rng = np.random.default_rng(5)
    state = adv.AdlState.create(channels=1, rng=rng, lr=1e-4)
    accs = []
    for _ in range(30):
        amp = adv.toy_amplitudes(rng, 16, 8, 1.0)
        a_s = adv.log_normalize(amp)
        a_t = adv.log_normalize(adv.toy_amplitudes(rng, 16, 8, 1.0))
        report, _ = adv.adl_step(state, a_s, a_t, update_g=False)
        accs.append(report.d_acc)
    assert abs(float(np.mean(accs)) - 0.5) < 0.1


def test_toy_run_trace_structure():
    out = adv.toy_alignment_run(seed=0, frozen_steps=10, adversarial_steps=10,
                                batch=4, size=8, eval_every=5, eval_count=8)
    assert [s for s, _ in out["frozen"]] == [5, 10]
    assert [s for s, _ in out["adversarial"]] == [5, 10]
    assert all(0.0 <= a <= 1.0 for _, a in out["frozen"] + out["adversarial"])
