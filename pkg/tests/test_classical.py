import math

import numpy as np
import pytest

from solitonq.classical import (Field2, FitError, PropagationError, StepPlan, default_dt,
                                fit_soliton_width, propagate, radiation_fraction, read_snapshot,
                                soliton_period, soliton_width_for_power, vector_soliton,
                                with_boost, write_profile_csv, write_snapshot)
from solitonq.model import SolitonParams


def run(params, W=1.0, M=512, periods=1.0, dt=None, halfwidth=30.0):
    f = vector_soliton(params, W, M=M, halfwidth=halfwidth)
    T = periods * soliton_period(W, params.b)
    dt = dt or default_dt(f, params, W)
    steps = math.ceil(T / dt)
    return f, propagate(f, params, StepPlan(T / steps, steps))


def test_grid_must_be_power_of_two():
    with pytest.raises(ValueError):
        Field2(np.zeros(100), np.zeros(100), 10.0)


@pytest.mark.parametrize("B", [1.0, 2 / 3, 0.0])
def test_soliton_is_stationary(B):
    p = SolitonParams(B=B)
    f0, f1 = run(p)
    ref = vector_soliton(p, 1.0, M=512, halfwidth=30.0, t=f1.t)
    assert np.max(np.abs(f1.u - ref.u)) < 1e-4
    assert f1.power() == pytest.approx(f0.power(), rel=1e-10)


def test_strang_second_order():
    p = SolitonParams()
    errs = []
    for dt in (0.02, 0.01):
        _, f1 = run(p, M=128, dt=dt, halfwidth=20.0)
        ref = vector_soliton(p, 1.0, M=128, halfwidth=20.0, t=f1.t)
        errs.append(np.max(np.abs(f1.u - ref.u)))
    assert errs[0] / errs[1] == pytest.approx(4.0, rel=0.1)


def test_stability_bound():
    p = SolitonParams()
    f = vector_soliton(p, 1.0, M=512, halfwidth=30.0)
    with pytest.raises(ValueError):
        propagate(f, p, StepPlan(1.0, 1))


def test_blowup_detected():
    p = SolitonParams()
    f = vector_soliton(p, 1.0, M=256, halfwidth=25.0)
    bad = Field2(f.u * np.nan, f.v, f.halfwidth)
    with pytest.raises(PropagationError):
        propagate(bad, p, StepPlan(1e-3, 5))


def test_momentum_conserved_for_boosted_soliton():
    p = SolitonParams()
    f = with_boost(vector_soliton(p, 1.0, M=512, halfwidth=30.0), 0.5)
    g = propagate(f, p, StepPlan(4e-3, 250))
    assert g.momentum() == pytest.approx(f.momentum(), rel=1e-9)
    assert f.momentum() == pytest.approx(0.5 * f.power(), rel=1e-6)


def test_power_width_relation():
    p = SolitonParams(n=2, m=2)
    W = soliton_width_for_power(p, p.N)
    assert W == pytest.approx(abs(2 * p.b / (p.N * p.c)))
    f = vector_soliton(p, W, M=1024, halfwidth=20.0)
    assert f.power() == pytest.approx(p.N, rel=1e-8)
    assert fit_soliton_width(f) == pytest.approx(W, rel=1e-6)


def test_fit_rejects_two_peaks():
    p = SolitonParams()
    a = vector_soliton(p, 1.0, M=512, halfwidth=30.0, z0=-8)
    b = vector_soliton(p, 1.0, M=512, halfwidth=30.0, z0=8)
    with pytest.raises(FitError):
        fit_soliton_width(Field2(a.u + b.u, a.v + b.v, 30.0))


def test_radiation_fraction_of_clean_soliton():
    f = vector_soliton(SolitonParams(), 1.0, M=512, halfwidth=30.0)
    assert radiation_fraction(f, 1.0) < 1e-7


def test_snapshot_roundtrip(tmp_path):
    f = with_boost(vector_soliton(SolitonParams(), 1.0, M=64, halfwidth=10.0, t=0.3), 0.2)
    write_snapshot(tmp_path / "f.bin", f)
    raw = (tmp_path / "f.bin").read_bytes()
    assert len(raw) == 8 + 8 + 8 + 2 * 64 * 16
    g = read_snapshot(tmp_path / "f.bin")
    assert np.array_equal(g.u, f.u) and np.array_equal(g.v, f.v) and g.t == 0.3
    write_profile_csv(tmp_path / "p.csv", f)
    assert (tmp_path / "p.csv").read_text().splitlines()[0] == "z,intensity_u,intensity_v"
