import numpy as np
import pytest

from nlqc import cds, qcore
from nlqc import gardenhose as gh


def test_and_cds_perfect():
    assert cds.check_cds(cds.and_cds()) == (0.0, 0.0)


@pytest.mark.parametrize("prog", [gh.and_program(), gh.or_program(), gh.universal_program(gh.builtin("EQ"))])
def test_gh_to_cds_perfect(prog):
    assert cds.check_cds(cds.gh_to_cds(prog)) == (0.0, 0.0)


def test_gh_to_cds_rejects_standard_form():
    with pytest.raises(ValueError):
        cds.gh_to_cds(gh.standard_form(gh.and_program()))


def test_broken_cds_has_delta_one():
    # Alice sends the secret in the clear
    f = gh.builtin("AND")
    leaky = cds.CdsProtocol(0, 2, lambda x, s, r: s, lambda y, r: 0, f, "leaky")
    eps, delta = cds.check_cds(leaky)
    assert eps == 0.0 and delta == pytest.approx(1.0)


def test_silent_cds_has_eps():
    f = gh.builtin("AND")
    silent = cds.CdsProtocol(0, 2, lambda x, s, r: 0, lambda y, r: 0, f, "silent")
    eps, delta = cds.check_cds(silent)
    # correctness is worst case over secrets; the tie goes to secret 0
    assert delta == 0.0 and eps == pytest.approx(1.0)


def test_amplification_preserves_perfection():
    amp = cds.amplify_two_bit(cds.and_cds())
    assert amp.secret_alphabet == 4
    assert amp.randomness_bits == 2 * cds.and_cds().randomness_bits
    assert cds.check_cds(amp) == (0.0, 0.0)
    with pytest.raises(ValueError):
        cds.amplify_two_bit(amp)


def test_cds_json_roundtrip():
    p = cds.gh_to_cds(gh.or_program())
    q = cds.CdsProtocol.from_json(p.to_json())
    assert cds.check_cds(q) == (0.0, 0.0)
    assert q.to_json() == p.to_json()


def test_one_time_pad_twirls_to_identity():
    rng = np.random.default_rng(2)
    rho = qcore.random_density(2, rng)
    assert np.allclose(cds.one_time_pad_average(rho), np.eye(2) / 2)


@pytest.fixture(scope="module")
def lifted_and():
    return cds.cds_to_cdqs(cds.amplify_two_bit(cds.and_cds()))


def test_cdqs_lift_perfect(lifted_and):
    eps, delta = cds.check_cdqs(lifted_and)
    assert eps <= 1e-8 and delta <= 1e-8


def test_cdqs_referee_marginal(lifted_and):
    rng = np.random.default_rng(5)
    rho = qcore.random_density(2, rng)
    f = lifted_and.f
    for x, y in f.inputs():
        if f(x, y) == 0:
            marg = cds.referee_secret_marginal(lifted_and, x, y, rho)
            assert np.max(np.abs(marg - np.eye(2) / 2)) <= 1e-8


def test_cdqs_lift_needs_two_bit_secret():
    with pytest.raises(ValueError):
        cds.cds_to_cdqs(cds.and_cds())


def test_roundtrip(lifted_and):
    fr = cds.cdqs_to_frouting(lifted_and)
    assert max(cds.routing_residuals(fr, lifted_and.f).values()) <= 1e-8
    back = cds.frouting_to_cdqs(fr, lifted_and.f)
    eps, delta = cds.check_cdqs(back)
    assert eps <= 1e-8 and delta <= 1e-8


def test_frouting_to_cdqs_from_garden_hose():
    for name in ("AND", "OR", "EQ"):
        f = gh.builtin(name)
        c = cds.frouting_to_cdqs(gh.garden_hose_routing(f), f)
        eps, delta = cds.check_cdqs(c)
        assert eps <= 1e-8 and delta <= 1e-8
