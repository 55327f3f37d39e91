import math

import pytest

import dqps


def test_entropy_and_tagging():
    assert dqps.binary_entropy(0.0) == 0.0
    assert dqps.binary_entropy(0.7) == 1.0
    assert dqps.binary_entropy(0.11) == pytest.approx(0.499915958164528, abs=1e-12)
    mu = 0.1
    assert dqps.r_tag(mu, 2) == pytest.approx(1 - math.exp(-2 * mu) * (1 + 2 * mu), abs=1e-14)
    assert dqps.block_gain(0.001, 9) == pytest.approx(0.007972055930055972, rel=1e-13)


def test_params_and_config():
    p = dqps.SystemParams(mu=0.00722, L=65, channel_loss_db=8, e_mis=0.0203)
    assert p.L == 65
    assert dqps.parse_config(p.to_config()) == p
    with pytest.raises(ValueError):
        dqps.SystemParams(e_mis=1.5)
    with pytest.raises(ValueError):
        dqps.SystemParams(no_such_key=1)
    assert dqps.SystemParams(strict_block_length=True).strict_block_length


def test_operating_point_and_optimum():
    p = dqps.SystemParams(mu=0.00722, L=65, channel_loss_db=8, e_mis=0.0203)
    b = dqps.analyze(p)
    assert 0.85 * 171.272e3 < b.secure_rate < 1.15 * 171.272e3
    best = dqps.optimize(dqps.SystemParams(), 8.0)
    assert best.positive_key
    assert best.breakdown.secure_rate >= dqps.analyze(dqps.SystemParams(channel_loss_db=8)).secure_rate
    assert not dqps.optimize(dqps.SystemParams(), 40.0).positive_key
    bb84 = dqps.optimize(dqps.SystemParams(), 8.0, block_lengths=[2])
    assert bb84.L == 2 and bb84.breakdown.secure_rate < best.breakdown.secure_rate


def test_local_session():
    p = dqps.SystemParams(mu=0.05, L=9, channel_loss_db=3, e_mis=0, dark_rate=0)
    cfg = dqps.SessionConfig(p, n_blocks=20000, seed=3, sample_fraction=1.0)
    r = dqps.run_local(cfg)
    assert r.blocks_sent == 20000
    assert r.sifted_bits_alice == r.sifted_bits_bob > 0
    assert r.sample.z_errors == 0
    assert r == dqps.run_local(cfg)


def test_randomness_checks():
    x = dqps.simulate_interblock(100000, seed=1)
    assert dqps.ks_against_arcsine(x).passed
    assert dqps.autocorrelation(x, 100).passed()
    alt = [float(i % 2) for i in range(2000)]
    assert not dqps.ks_against_arcsine(alt).passed
    assert not dqps.autocorrelation(alt, 20).passed()
    assert sum(dqps.histogram(x, 10)) == 100000
