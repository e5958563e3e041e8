"""U-Net topology, forward/backward passes and checkpoints."""

import numpy as np
import pytest

from cervreg import unet
from cervreg.imgcore import ShapeError
from cervreg.train import loss, loss_and_gradient
from cervreg.unet import NetConfig, build, conv3x3, conv3x3_backward, conv_naive, layer_plan

NETS = ["full", "reduced", "filters16"]


def _pair(shape, seed):
    """Smooth moving/fixed pair so the warp gradient is informative."""
    rng = np.random.default_rng(seed)
    ys, xs = np.mgrid[0:shape[0], 0:shape[1]]
    f = 0.5 + 0.3 * np.sin(xs / 2.3 + rng.uniform(0, 6)) * np.cos(ys / 3.1 + rng.uniform(0, 6))
    m = np.roll(f, 1, axis=1) + 0.05 * rng.standard_normal(shape)
    return np.clip(m, 0, 1), np.clip(f, 0, 1)


def _live_net(cfg, seed=0):
    """float64 net whose flow layer is large enough that |u| stays away from
    the bilinear kink at zero displacement."""
    net = build(cfg, seed=seed, dtype=np.float64)
    rng = np.random.default_rng(seed + 100)
    net.params[-2] = rng.normal(0, 0.3, size=net.params[-2].shape)
    net.params[-1] = rng.normal(0, 0.5, size=net.params[-1].shape)
    return net


def _fd_check(net, m, f, n_samples, step, seed, gamma=0.01, floor=1e-6):
    u = net.forward(m, f, cache=True)
    _, g = loss_and_gradient(f, m, u, gamma)
    grads = net.backward(g)
    rng = np.random.default_rng(seed)
    sizes = np.array([p.size for p in net.params])
    picks = rng.choice(sizes.sum(), size=n_samples, replace=False)
    offsets = np.concatenate([[0], np.cumsum(sizes)])
    worst = 0.0
    for flat in picks:
        k = int(np.searchsorted(offsets, flat, side="right") - 1)
        idx = np.unravel_index(int(flat - offsets[k]), net.params[k].shape)
        p = net.params[k]
        orig = p[idx]
        p[idx] = orig + step
        jp = loss(f, m, net.forward(m, f), gamma).J
        p[idx] = orig - step
        jm = loss(f, m, net.forward(m, f), gamma).J
        p[idx] = orig
        num = (jp - jm) / (2 * step)
        ana = grads[k][idx]
        worst = max(worst, abs(num - ana) / max(abs(num), abs(ana), floor))
    return worst


def _param_oracle(enc, dec, in_ch=2):
    """Channel bookkeeping written out by hand: encoder strided convs, then
    decoder convs whose inputs gain upsampled features plus the skip."""
    total, ch = 0, in_ch
    for nf in enc:
        total += 9 * ch * nf + nf
        ch = nf
    skips = list(enc[:-1])[::-1]
    for j, nf in enumerate(dec):
        total += 9 * ch * nf + nf
        ch = nf
        if j < len(skips):
            ch += skips[j] + (in_ch if j == len(skips) - 1 else 0)
    return total + 9 * ch * 2 + 2


class TestTopology:
    def test_single_conv_count(self):
        assert unet.ConvSpec("c", 2, 16, 1, 1).n_params == 304

    @pytest.mark.parametrize("name,expected", [("full", 100530), ("reduced", 45106), ("filters16", 30994)])
    def test_preset_counts(self, name, expected):
        cfg = unet.preset(name)
        net = build(cfg)
        assert unet.param_count(net) == expected
        assert unet.plan_param_count(cfg) == expected
        assert _param_oracle(cfg.enc_filters, cfg.dec_filters) == expected

    def test_counts_near_published_sizes(self):
        n = {k: unet.plan_param_count(unet.preset(k)) for k in NETS}
        for k, ref in [("full", 110e3), ("reduced", 53e3), ("filters16", 33e3)]:
            assert abs(n[k] / ref - 1) <= 0.15
        assert 0.44 <= n["reduced"] / n["full"] <= 0.52
        assert 0.26 <= n["filters16"] / n["full"] <= 0.34

    def test_layer_table(self):
        rows = unet.layer_table(build(unet.preset("full")))
        assert len(rows) == 12
        assert rows[0] == ("enc0", 2, 16, 2, 2, 304)
        assert rows[-1][0] == "flow" and rows[-1][2] == 2
        assert sum(r[-1] for r in rows) == 100530

    def test_unknown_preset(self):
        with pytest.raises(ValueError):
            unet.preset("huge")

    def test_bad_config(self):
        with pytest.raises(ValueError):
            NetConfig((), (8,))
        with pytest.raises(ValueError):
            NetConfig((8, 8), (8,))


class TestForward:
    @pytest.mark.parametrize("name", NETS)
    def test_initial_field_near_identity(self, name):
        m, f = _pair((128, 208), 0)
        u = build(unet.preset(name), seed=3).forward(m, f)
        assert u.shape == (2, 128, 208)
        assert np.max(np.abs(u)) < 0.01

    def test_deterministic(self):
        m, f = _pair((32, 48), 1)
        a = build(unet.preset("reduced"), seed=7)
        b = build(unet.preset("reduced"), seed=7)
        for p, q in zip(a.params, b.params):
            assert np.array_equal(p, q)
        assert np.array_equal(a.forward(m, f), b.forward(m, f))
        assert np.array_equal(a.forward(m, f), a.forward(m, f))

    @pytest.mark.parametrize("name", NETS)
    def test_matches_naive_convolution(self, name):
        m, f = _pair((16, 16), 2)
        net = _live_net(unet.preset(name)).astype(np.float32)
        np.testing.assert_allclose(net.forward(m, f), net.forward(m, f, naive=True), atol=1e-5)

    def test_shape_errors(self):
        net = build(unet.preset("full"))
        with pytest.raises(ShapeError):
            net.forward(np.zeros((16, 16)), np.zeros((16, 32)))
        with pytest.raises(ShapeError):
            net.forward(np.zeros((24, 24)), np.zeros((24, 24)))


class TestConvolution:
    def test_fast_matches_naive(self):
        rng = np.random.default_rng(0)
        x = rng.standard_normal((7, 9, 3))
        w = rng.standard_normal((3, 3, 3, 5))
        b = rng.standard_normal(5)
        np.testing.assert_allclose(conv3x3(x, w, b)[0], conv_naive(x, w, b), atol=1e-12)
        y2, _ = unet.conv3x3_s2(x[:6, :8], w, b)
        np.testing.assert_allclose(y2, conv_naive(x[:6, :8], w, b, 2), atol=1e-12)

    def test_backward_matches_transpose_formula(self):
        rng = np.random.default_rng(1)
        x = rng.standard_normal((6, 8, 3))
        w = rng.standard_normal((3, 3, 3, 4))
        g = rng.standard_normal((6, 8, 4))
        _, p = conv3x3(x, w, np.zeros(4))
        gx, gw, gb = conv3x3_backward(g, p, w, x.shape)
        # input gradient: correlation of g with the flipped, channel-transposed kernel
        wt = w[::-1, ::-1].transpose(0, 1, 3, 2)
        np.testing.assert_allclose(gx, conv_naive(g, wt, np.zeros(3)), atol=1e-6)
        xp = np.pad(x, ((1, 1), (1, 1), (0, 0)))
        for dy in range(3):
            for dx in range(3):
                ref = np.einsum("ijc,ijo->co", xp[dy:dy + 6, dx:dx + 8], g)
                np.testing.assert_allclose(gw[dy, dx], ref, atol=1e-6)
        np.testing.assert_allclose(gb, g.sum(axis=(0, 1)), atol=1e-6)

    def test_strided_backward_matches_naive(self):
        rng = np.random.default_rng(2)
        x = rng.standard_normal((8, 10, 2))
        w = rng.standard_normal((3, 3, 2, 3))
        g = rng.standard_normal((4, 5, 3))
        _, cols = unet.conv3x3_s2(x, w, np.zeros(3))
        fast = unet.conv3x3_s2_backward(g, cols, w, x.shape)
        slow = unet._conv_naive_backward(g, x, w, 2)
        for a, b in zip(fast, slow):
            np.testing.assert_allclose(a, b, atol=1e-12)


class TestBackward:
    def test_zero_upstream_gives_zero_gradients(self):
        net = build(unet.preset("reduced"))
        m, f = _pair((16, 16), 3)
        u = net.forward(m, f, cache=True)
        grads = net.backward(np.zeros_like(u))
        assert len(grads) == len(net.params)
        assert all(not np.any(g) for g in grads)

    def test_requires_tape(self):
        net = build(unet.preset("reduced"))
        with pytest.raises(RuntimeError):
            net.backward(np.zeros((2, 16, 16)))
        m, f = _pair((16, 16), 3)
        net.forward(m, f, cache=True)
        net.backward(np.zeros((2, 16, 16)))
        with pytest.raises(RuntimeError):
            net.backward(np.zeros((2, 16, 16)))

    def test_gradient_shape_error(self):
        net = build(unet.preset("reduced"))
        m, f = _pair((16, 16), 3)
        net.forward(m, f, cache=True)
        with pytest.raises(ShapeError):
            net.backward(np.zeros((2, 16, 8)))

    def test_matches_naive_backward(self):
        net = _live_net(unet.preset("filters16"))
        m, f = _pair((16, 16), 4)
        g = np.random.default_rng(5).standard_normal((2, 16, 16))
        net.forward(m, f, cache=True)
        fast = net.backward(g)
        net.forward(m, f, cache=True, naive=True)
        slow = net.backward(g)
        for a, b in zip(fast, slow):
            np.testing.assert_allclose(a, b, rtol=1e-9, atol=1e-12)

    def test_three_layer_toy_net(self):
        cfg = NetConfig((4,), (4,), "toy")
        assert len(layer_plan(cfg)) == 3
        m, f = _pair((8, 8), 6)
        assert _fd_check(_live_net(cfg), m, f, n_samples=100, step=1e-3, seed=0) < 1e-4

    @pytest.mark.parametrize("name", NETS)
    def test_end_to_end_finite_differences(self, name):
        m, f = _pair((16, 16), 7)
        worst = _fd_check(_live_net(unet.preset(name)), m, f, n_samples=70, step=1e-6, seed=1)
        assert worst < 1e-4


class TestCheckpoint:
    def test_roundtrip(self, tmp_path):
        net = build(unet.preset("filters16"), seed=4)
        unet.save_checkpoint(net, tmp_path / "n.ckpt")
        back = unet.load_checkpoint(tmp_path / "n.ckpt")
        assert back.cfg == net.cfg and back.seed == 4
        for p, q in zip(back.params, net.params):
            assert np.array_equal(p, q)
        m, f = _pair((16, 16), 8)
        assert np.array_equal(back.forward(m, f), net.forward(m, f))

    def test_size(self, tmp_path):
        net = build(unet.preset("reduced"))
        unet.save_checkpoint(net, tmp_path / "n.ckpt")
        data = (tmp_path / "n.ckpt").read_bytes()
        hlen = int.from_bytes(data[len(unet.CHECKPOINT_MAGIC) + 4:len(unet.CHECKPOINT_MAGIC) + 8], "little")
        assert len(data) == len(unet.CHECKPOINT_MAGIC) + 8 + hlen + 4 * 45106

    def test_bad_magic(self, tmp_path):
        (tmp_path / "x.ckpt").write_bytes(b"garbage!" * 4)
        with pytest.raises(ValueError):
            unet.load_checkpoint(tmp_path / "x.ckpt")
