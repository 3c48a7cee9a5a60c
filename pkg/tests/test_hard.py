import json
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from qsum.hard import (
    HardFamily,
    RegimeError,
    choose_hard_params,
    condition_I_check,
    export_family,
    lower_bound_value,
    rho,
)
from qsum.mean import mean_algorithm
from qsum.sequences import SequenceInstance, lp_norm, mean


def test_rho_examples():
    assert rho(4, 1, 2) == pytest.approx(2 + math.sqrt(3))
    assert rho(4, 0, 4) == 1.0
    with pytest.raises(ValueError):
        rho(4, 2, 2)
    with pytest.raises(ValueError):
        rho(4, 1, 5)


@given(st.integers(1, 200), st.data())
def test_rho_symmetric(L, data):
    a = data.draw(st.integers(0, L))
    b = data.draw(st.integers(0, L).filter(lambda v: v != a))
    assert rho(L, a, b) == rho(L, b, a)


def test_choose_hard_params_examples():
    assert choose_hard_params(8, 64) == (2, 3)
    assert 8 <= math.sqrt(2 * 64 / 2)
    with pytest.raises(RegimeError, match="sqrt\\(12\\)"):
        choose_hard_params(20, 64)
    with pytest.raises(RegimeError, match="c0\\*sqrt\\(N\\)"):
        choose_hard_params(7, 64)


def test_accepted_params_satisfy_checks():
    for N in (16, 64, 256, 1024, 4096):
        for c0 in (0.5, 1.0, 2.0):
            for n in range(math.ceil(c0 * math.sqrt(N)), int(c0 / math.sqrt(12) * N) + 1):
                try:
                    ell, ell_p = choose_hard_params(n, N, c0)
                except RegimeError:
                    continue
                assert ell_p == ell + 1 and ell + 1 <= N / 2
                assert n <= c0 * math.sqrt(ell * N / 2) * (1 + 1e-12)
                assert HardFamily(N, 1.0, ell, n, c0).d11_holds()


def test_d11_chain_example():
    fam = HardFamily.for_budget(8, 64, 1.0)
    chain = fam.d11_chain()
    assert chain[:2] == (8.0, 8.0)
    assert chain[2] == pytest.approx(math.sqrt(2 * 62))
    assert chain[3] == pytest.approx(rho(64, 2, 3))
    assert fam.d11_holds()


def test_membership_and_gap():
    rng = np.random.default_rng(0)
    for p in (1.0, 1.3, 2.0):
        fam = HardFamily(64, p, 2)
        for _ in range(20):
            small = fam.make(fam.random_u(2, rng))
            big = fam.make(fam.random_u(3, rng))
            assert lp_norm(big, p) == pytest.approx(1.0, abs=1e-12)
            assert lp_norm(small, p) == pytest.approx((2 / 3) ** (1 / p), abs=1e-12)
            assert mean(big) - mean(small) == pytest.approx(fam.gap, abs=1e-12)


def test_psi_disjoint_and_sum():
    fam = HardFamily(16, 1.0, 2)
    psis = np.array([fam.psi(j).values for j in range(16)])
    assert np.count_nonzero(psis, axis=0).max() == 1
    u = np.zeros(16, dtype=int)
    u[[1, 4, 9]] = 1
    assert np.array_equal(fam.make(u).values, u @ psis)


def test_make_f_u_labels_and_validation():
    fam = HardFamily(8, 1.0, 2)
    assert np.all(fam.make(np.zeros(8)).values == 0)
    assert fam.make(np.zeros(8)).label == "hard-w0-outside"
    assert fam.make([1, 1, 0, 0, 0, 0, 0, 0]).label == "hard-w2"
    with pytest.raises(ValueError):
        fam.make([2, 0, 0, 0, 0, 0, 0, 0])
    with pytest.raises(ValueError):
        fam.make([1, 0])


def test_sample_alternates_weights():
    fam = HardFamily(32, 1.0, 3)
    weights = [int(np.count_nonzero(g.values)) for g in fam.sample(6, seed=1)]
    assert weights == [3, 4, 3, 4, 3, 4]


def test_lower_bound_examples():
    assert lower_bound_value(8, 64, 1.0) == pytest.approx(1 / 6)
    for n in (40, 64):
        ell, _ = choose_hard_params(n, 1024)
        assert lower_bound_value(n, 1024, 1.0) == pytest.approx(0.5 / (ell + 1))
    ratio = lower_bound_value(200, 4096, 1.0) / lower_bound_value(400, 4096, 1.0)
    assert 3.5 <= ratio <= 4.5


def test_condition_I_positive_exhaustive():
    fam = HardFamily(12, 1.0, 2)
    res = condition_I_check(fam.make, 12)
    assert res.ok and res.pairs_checked == 2**12
    assert res.coordinate == {t: t for t in range(12)}


def test_condition_I_positive_sampled():
    fam = HardFamily(64, 1.0, 2)
    res = condition_I_check(fam.make, 64, sample_size=500)
    assert res and res.pairs_checked == 500


def test_condition_I_negative_control():
    fam = HardFamily(10, 1.0, 2)

    def corrupted(u):
        values = fam.make(u).values.copy()
        values[0] = fam.spike_height * u[0] * u[1]
        return SequenceInstance(values)

    res = condition_I_check(corrupted, 10)
    assert not res.ok
    t, a, b = res.witness
    assert a[res.coordinate[t]] == b[res.coordinate[t]]
    assert corrupted(a).values[t] != corrupted(b).values[t]


def test_condition_I_catches_late_violation():
    # flips from the probe points cannot see this dependence; the full check must
    def builder(u):
        values = np.array(u, dtype=float)
        if u.sum() == 5 and u[0] == 1 and u[7] == 0:
            values[3] += 1.0
        return SequenceInstance(values)

    assert not condition_I_check(builder, 8).ok


def test_export_family(tmp_path):
    fam = HardFamily.for_budget(8, 64, 1.0)
    path = export_family(fam, tmp_path / "fam", count=4, seed=3)
    manifest = json.loads(path.read_text())
    assert manifest["ell"] == 2 and manifest["N"] == 64 and manifest["seed"] == 3
    assert [e["weight"] for e in manifest["instances"]] == [2, 3, 2, 3]
    loaded = SequenceInstance.load(tmp_path / "fam" / manifest["instances"][1]["file"])
    assert np.array_equal(loaded.values, fam.sample(4, seed=3)[1].values)
    export_family(fam, tmp_path / "bin", count=2, fmt="bin")
    assert (tmp_path / "bin" / "instance_000.bin").exists()
    with pytest.raises(ValueError):
        export_family(fam, tmp_path / "x", fmt="csv")


def test_mean_algorithm_on_family_diagnostic():
    # the hard family forces error at least half the gap on some member
    fam = HardFamily.for_budget(8, 64, 1.0)
    assert 8 <= fam.d11_chain()[3]
    worst = max(mean_algorithm(g, 8, 1.0, mode="exact").error(mean(g)) for g in fam.sample(6))
    assert worst >= lower_bound_value(8, 64, 1.0)
