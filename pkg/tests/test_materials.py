import numpy as np
import pytest

from elacu.errors import ConfigError
from elacu.materials import (
    apply_model,
    lame_parameters,
    material_set,
    nonlinearity_coeffs,
    physical_materials,
    validate_option1_constraints,
)


def test_set1_snapshot():
    p = material_set(1, option=2)
    assert p.elastic["t"].lam == 12.3041
    assert p.elastic["t"].mu == 6.4070
    assert p.elastic["t"].zeta == 6.0
    assert p.elastic["e"].lam == 2.87
    assert p.acoustic["f"].c == 1.0
    assert p.acoustic["f"].b == 1.0
    assert p.acoustic["f"].k1 == 0.1
    assert p.acoustic["f"].k2 == 0.0
    assert p.acoustic["t"].c == 2.0
    assert p.acoustic["t"].b == 0.5
    assert p.acoustic["t"].k1 == 1.0 / 16.0
    assert p.amplitudes == {"f": (3.3571, 1.0), "t": (2.8571, 4.0)}
    assert (p.acoustic["f"].rho, p.acoustic["t"].rho, p.elastic["e"].rho) == (
        0.51, 1.6018, 1.0,
    )


def test_set2_snapshot():
    p = material_set(2, option=1)
    assert (p.elastic["e"].lam, p.elastic["e"].mu, p.elastic["e"].zeta,
            p.elastic["e"].rho) == (10.0, 6.0, 4.0, 6.0)
    assert p.acoustic["f"].c == pytest.approx(np.sqrt(2.0))
    assert p.acoustic["t"].b == 5.5
    assert p.acoustic["t"].k2 == 1.0
    assert p.acoustic["f"].k2 == 0.25
    assert p.amplitudes == {"f": (-4.75, 2.0), "t": (-0.25, 1.0)}


def test_unknown_set_rejected():
    with pytest.raises(ConfigError):
        material_set(3)


def test_option1_constraints():
    r_e, r_t = validate_option1_constraints(material_set(1))
    assert r_e < 1e-12      # 2.87 - 3.38 = -0.51 exactly
    assert 0 < r_t < 5e-4   # table rounded to 4 digits
    r_e2, r_t2 = validate_option1_constraints(material_set(2))
    assert r_e2 < 1e-12
    assert r_t2 < 1e-12


def test_physical_values():
    p = physical_materials()
    assert p.acoustic["f"].c == 1500.0
    assert p.acoustic["f"].rho == 998.23
    assert p.acoustic["t"].b == 6.4117e-4
    assert p.ba == {"f": 5.0, "t": 7.44}
    lam, mu = lame_parameters(5e7, 0.49)
    assert mu == pytest.approx(5e7 / (2 * 1.49))
    assert p.elastic["e"].lam == pytest.approx(lam)
    assert p.elastic["e"].mu == pytest.approx(mu)


def test_nonlinearity_coeffs():
    assert nonlinearity_coeffs("linear", 123.0) == (0.0, 0.0)
    k1, k2 = nonlinearity_coeffs("westervelt", 1500.0, 5.0)
    assert k1 == pytest.approx(7.0 / (2 * 1500**2))
    assert k2 == 0.0
    k1, k2 = nonlinearity_coeffs("kuznetsov", 1500.0, 5.0)
    assert k1 == pytest.approx(5.0 / (2 * 1500**2))
    assert k2 == 1.0


def test_westervelt_kuznetsov_identity():
    # same k1 iff B/A is shifted by 2 in the Kuznetsov formula
    for c, ba in ((1500.0, 5.0), (1540.0, 7.44), (2.0, 1.3)):
        kw, _ = nonlinearity_coeffs("westervelt", c, ba)
        kk, _ = nonlinearity_coeffs("kuznetsov", c, ba + 2.0)
        assert kw == pytest.approx(kk, rel=1e-15)


def test_named_model_needs_ba():
    with pytest.raises(ConfigError):
        nonlinearity_coeffs("westervelt", 1500.0, None)


def test_apply_model_linear_zeroes_out():
    p = apply_model(material_set(1), "linear")
    assert all(m.k1 == 0.0 and m.k2 == 0.0 for m in p.acoustic.values())


def test_positivity_invariants():
    for params in (material_set(1), material_set(2), physical_materials()):
        for m in params.acoustic.values():
            assert m.rho > 0 and m.c > 0 and m.b > 0
        for m in params.elastic.values():
            assert m.rho > 0 and m.mu > 0 and m.lam + 2 * m.mu / 3 > 0


def test_config_override_wins_over_named_set():
    from elacu.driver import resolve_materials
    from elacu.io_formats import RunConfig

    cfg = RunConfig(material_set=1, material_override={"f": {"b": 2.5}, "e": {"zeta": 9.0}})
    params = resolve_materials(cfg)
    assert params.acoustic["f"].b == 2.5
    assert params.elastic["e"].zeta == 9.0
    # untouched fields keep their table values
    assert params.acoustic["f"].c == 1.0
    assert params.acoustic["t"].b == 0.5
