import math
import sys

try:
    import numpy as np
    import pytest

    import nicrb
except ImportError:
    sys.exit(77)  # module not installed; report as skipped


def make_image(seed=0, size=32):
    rng = np.random.default_rng(seed)
    base = rng.uniform(0.2, 0.8, size=(3, size, size))
    return nicrb.Image(base), base


def test_image_roundtrip():
    im, base = make_image()
    assert im.channels == 3 and im.height == 32 and im.width == 32
    np.testing.assert_allclose(im.to_numpy(), base)


def test_metrics():
    a, _ = make_image(1)
    b, _ = make_image(2)
    assert nicrb.psnr(a, a) == 100.0
    assert 0.0 < nicrb.ms_ssim(a, b) < 1.0
    assert nicrb.mse(a, b) > 0
    de = nicrb.ciede2000([50.0, 2.6772, -79.7751], [50.0, 0.0, -82.7485])
    assert abs(de - 2.0425) < 1e-3


def test_codec_attack_cycle():
    ids, corpus = nicrb.synthetic_corpus(4, 32, seed=7)
    assert ids == sorted(ids) and len(corpus) == 4
    model = nicrb.make_codec("factorized-prior", "smoke", 0.01, seed=3)
    initial, final, diverged = nicrb.train_codec(model, corpus, steps=60, seed=5)
    assert not diverged and final < initial
    x = corpus[0]
    recon = nicrb.reconstruct(model, x)
    assert recon.to_numpy().shape == (3, 32, 32)
    assert nicrb.bpp(model, x) >= 0.0
    ex = nicrb.run_attack(model, x, algorithm="ifgsm", epsilon=8 / 255,
                          step_size=2 / 255, iterations=4, seed=11)
    assert ex.final_linf <= 8 / 255 + 1e-12
    adv = nicrb.Image(ex.perturbed)
    delta = nicrb.delta_score(model, x, adv, metric="psnr")
    assert math.isfinite(delta)


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q"]))
