"""Piecewise-constant material parameter sets and nonlinearity coefficients.

Two synthetic parameter sets drive the analytic convergence studies; the
physical set (water / generic soft tissue / silicone rubber) drives the
application demo.  The tissue block carries both an elastic and an acoustic
parameter family; which one is active depends on the tissue model option.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

from .errors import ConfigError

TISSUE_ELASTIC = 1   # tissue modeled as an elastic medium
TISSUE_ACOUSTIC = 2  # tissue modeled as an acoustic medium


@dataclass(frozen=True)
class ElasticMaterial:
    rho: float   # mass density (kg/m^3)
    lam: float   # first Lame parameter (N/m^2)
    mu: float    # shear modulus (N/m^2)
    zeta: float  # damping rate (1/s)

    def __post_init__(self):
        if self.rho <= 0 or self.mu <= 0:
            raise ConfigError("elastic material needs rho > 0 and mu > 0")
        if self.lam + 2.0 * self.mu / 3.0 <= 0:
            raise ConfigError("elastic material needs lam + 2*mu/3 > 0")


@dataclass(frozen=True)
class AcousticMaterial:
    rho: float  # mass density (kg/m^3)
    c: float    # speed of sound (m/s)
    b: float    # sound diffusivity (m^2/s)
    k1: float   # quadratic nonlinearity coefficient (s^2/m^2)
    k2: float   # gradient nonlinearity coefficient (dimensionless)

    def __post_init__(self):
        if self.rho <= 0 or self.c <= 0 or self.b <= 0:
            raise ConfigError("acoustic material needs rho, c, b > 0")


@dataclass(frozen=True)
class MaterialParams:
    """Per-block material families plus tabulated temporal amplitudes.

    ``amplitudes`` holds the (E, D) pairs of the synthetic tables for the
    acoustic blocks; it is empty for the physical set.
    """

    elastic: dict[str, ElasticMaterial]
    acoustic: dict[str, AcousticMaterial]
    amplitudes: dict[str, tuple[float, float]] = field(default_factory=dict)
    ba: dict[str, float] = field(default_factory=dict)  # B/A where known


_SET1 = dict(
    rho_t=1.6018, rho_f=0.51, rho_e=1.0,
    lam_t=12.3041, mu_t=6.4070, zeta_t=6.0,
    lam_e=2.87, mu_e=1.69, zeta_e=3.0,
    c_t=2.0, c_f=1.0,
    b_t=0.5, b_f=1.0,
    k1_t=1.0 / 16.0, k1_f=1.0 / 10.0,
    k2_t=0.0, k2_f=0.0,
    E_t=2.8571, D_t=4.0, E_f=3.3571, D_f=1.0,
)

_SET2 = dict(
    rho_t=2.0, rho_f=2.0, rho_e=6.0,
    lam_t=6.0, mu_t=4.0, zeta_t=2.0,
    lam_e=10.0, mu_e=6.0, zeta_e=4.0,
    c_t=1.0, c_f=2.0 ** 0.5,
    b_t=5.5, b_f=1.0,
    k1_t=0.25, k1_f=1.0 / 20.0,
    k2_t=1.0, k2_f=0.25,
    E_t=-0.25, D_t=1.0, E_f=-4.75, D_f=2.0,
)


def material_set(set_id: int, option: int = TISSUE_ACOUSTIC) -> MaterialParams:
    """Synthetic parameter set 1 or 2, exactly as tabulated.

    The tissue block gets both its elastic and acoustic family; ``option``
    is recorded by callers to pick the active one.
    """
    if set_id == 1:
        t = _SET1
    elif set_id == 2:
        t = _SET2
    else:
        raise ConfigError(f"unknown synthetic material set {set_id!r}")
    if option not in (TISSUE_ELASTIC, TISSUE_ACOUSTIC):
        raise ConfigError(f"tissue option must be 1 or 2, got {option!r}")
    elastic = {
        "e": ElasticMaterial(rho=t["rho_e"], lam=t["lam_e"], mu=t["mu_e"], zeta=t["zeta_e"]),
        "t": ElasticMaterial(rho=t["rho_t"], lam=t["lam_t"], mu=t["mu_t"], zeta=t["zeta_t"]),
    }
    acoustic = {
        "f": AcousticMaterial(rho=t["rho_f"], c=t["c_f"], b=t["b_f"], k1=t["k1_f"], k2=t["k2_f"]),
        "t": AcousticMaterial(rho=t["rho_t"], c=t["c_t"], b=t["b_t"], k1=t["k1_t"], k2=t["k2_t"]),
    }
    amplitudes = {"f": (t["E_f"], t["D_f"]), "t": (t["E_t"], t["D_t"])}
    return MaterialParams(elastic=elastic, acoustic=acoustic, amplitudes=amplitudes)


def lame_parameters(young: float, poisson: float) -> tuple[float, float]:
    """Convert (E, nu) to the Lame pair (lambda, mu)."""
    lam = young * poisson / ((1.0 + poisson) * (1.0 - 2.0 * poisson))
    mu = young / (2.0 * (1.0 + poisson))
    return lam, mu


def physical_materials(zeta_e: float = 0.0, zeta_t: float = 0.0) -> MaterialParams:
    """Water conductor, soft-tissue target, silicone-rubber excitator.

    Nonlinearity coefficients are left at zero; pick a model with
    :func:`nonlinearity_coeffs` (B/A values are stored per block).
    Damping rates default to zero and may be supplied from configuration.
    """
    lam_sil, mu_sil = lame_parameters(5e7, 0.49)
    lam_tis, mu_tis = lame_parameters(1e9, 0.375)
    # b = 0 is not admissible (strong damping is structural); the water
    # table value 6e-9 is effectively inviscid but positive.
    elastic = {
        "e": ElasticMaterial(rho=1100.0, lam=lam_sil, mu=mu_sil, zeta=zeta_e),
        "t": ElasticMaterial(rho=1000.0, lam=lam_tis, mu=mu_tis, zeta=zeta_t),
    }
    acoustic = {
        "f": AcousticMaterial(rho=998.23, c=1500.0, b=6e-9, k1=0.0, k2=0.0),
        "t": AcousticMaterial(rho=1000.0, c=1540.0, b=6.4117e-4, k1=0.0, k2=0.0),
    }
    return MaterialParams(
        elastic=elastic, acoustic=acoustic, ba={"f": 5.0, "t": 7.44}
    )


def nonlinearity_coeffs(model: str, c: float, ba: float | None = None) -> tuple[float, float]:
    """(k1, k2) for a named acoustic model at speed ``c`` and ratio B/A."""
    if c <= 0:
        raise ConfigError("speed of sound must be positive")
    if model == "linear":
        return 0.0, 0.0
    if ba is None:
        raise ConfigError(f"model {model!r} needs the B/A ratio")
    if model == "westervelt":
        return (2.0 + ba) / (2.0 * c * c), 0.0
    if model == "kuznetsov":
        return ba / (2.0 * c * c), 1.0
    raise ConfigError(f"unknown acoustic model {model!r}")


def apply_model(params: MaterialParams, model: str) -> MaterialParams:
    """Replace every acoustic block's (k1, k2) per a named model."""
    acoustic = {}
    for tag, mat in params.acoustic.items():
        k1, k2 = nonlinearity_coeffs(model, mat.c, params.ba.get(tag))
        acoustic[tag] = replace(mat, k1=k1, k2=k2)
    return replace(params, acoustic=acoustic)


def validate_option1_constraints(params: MaterialParams) -> tuple[float, float]:
    """Residuals of the elastic-tissue compatibility conditions.

    Returns ``(|lam_e - 2 mu_e + rho_f|, |lam_t - 2 mu_t + rho_f|)``; both
    must vanish (up to table rounding) for the elastic-tissue analytic
    solution to exist.
    """
    rho_f = params.acoustic["f"].rho
    e = params.elastic["e"]
    t = params.elastic["t"]
    return (
        abs(e.lam - 2.0 * e.mu + rho_f),
        abs(t.lam - 2.0 * t.mu + rho_f),
    )
