"""Closed-form solutions and forcing terms for the stacked-cubes test case.

The displacement field uses the separable shape

    S_u(x,y,z) = (sin x cos y sin z, cos x sin y sin z, cos x cos y cos z)

and the velocity potential the shape S_psi(x,y,z) = cos x cos y sin z, both
scaled by harmonic amplitudes a(t) = E sin t + D cos t.  S_psi vanishes on
the x,y = +-pi/2 mantle and on the z = k*pi planes, which makes the fields
compatible with the interface placement of the three-cubes geometry once
the amplitude pairs satisfy the coupling constraints solved here.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DegenerateParametersError
from .materials import MaterialParams, TISSUE_ACOUSTIC, TISSUE_ELASTIC


def psi_shape(pts: np.ndarray) -> np.ndarray:
    x, y, z = pts[:, 0], pts[:, 1], pts[:, 2]
    return np.cos(x) * np.cos(y) * np.sin(z)


def psi_shape_grad(pts: np.ndarray) -> np.ndarray:
    x, y, z = pts[:, 0], pts[:, 1], pts[:, 2]
    return np.column_stack(
        [
            -np.sin(x) * np.cos(y) * np.sin(z),
            -np.cos(x) * np.sin(y) * np.sin(z),
            np.cos(x) * np.cos(y) * np.cos(z),
        ]
    )


def u_shape(pts: np.ndarray) -> np.ndarray:
    x, y, z = pts[:, 0], pts[:, 1], pts[:, 2]
    return np.column_stack(
        [
            np.sin(x) * np.cos(y) * np.sin(z),
            np.cos(x) * np.sin(y) * np.sin(z),
            np.cos(x) * np.cos(y) * np.cos(z),
        ]
    )


@dataclass(frozen=True)
class AmplitudePair:
    """Coefficients of a(t) = E sin t + D cos t."""

    E: float
    D: float

    def value(self, t: float) -> float:
        return self.E * np.sin(t) + self.D * np.cos(t)

    def deriv(self, t: float) -> float:
        return self.E * np.cos(t) - self.D * np.sin(t)


@dataclass(frozen=True)
class Amplitudes:
    elastic: AmplitudePair                   # shared by all elastic blocks
    acoustic: dict[str, AmplitudePair]       # per acoustic block tag


def _elastic_pair(ac: AmplitudePair, bf: float, cf: float) -> AmplitudePair:
    """Elastic pair forced by the fluid-side pair at a coupling interface."""
    r = bf / (cf * cf)
    return AmplitudePair(E=-ac.D - ac.E * r, D=ac.E - ac.D * r)


def amplitude_solver(option: int, params: MaterialParams) -> Amplitudes:
    """Amplitude pairs satisfying every interface compatibility condition.

    For an acoustic tissue the two acoustic pairs come from the closed-form
    solution of the transmission conditions; for an elastic tissue the
    single acoustic pair is read from the tabulated values.  The elastic
    pair is always derived from the fluid-side pair.
    """
    f = params.acoustic["f"]
    if option == TISSUE_ACOUSTIC:
        t = params.acoustic["t"]
        cf2, ct2 = f.c * f.c, t.c * t.c
        den = cf2 * t.b - ct2 * f.b
        if abs(den) < 1e-14 * max(1.0, cf2 * t.b, ct2 * f.b):
            raise DegenerateParametersError(
                "transmission amplitudes are singular: c_f^2 b_t == c_t^2 b_f"
            )
        d_t, d_f = ct2, cf2
        e_t = (cf2 * cf2 * ct2 - cf2 * ct2 * ct2 + f.b * f.b * ct2 - f.b * t.b * ct2) / den
        e_f = e_t - t.b + f.b
        acoustic = {"f": AmplitudePair(e_f, d_f), "t": AmplitudePair(e_t, d_t)}
    elif option == TISSUE_ELASTIC:
        if "f" not in params.amplitudes:
            raise ConfigError("elastic-tissue runs need tabulated acoustic amplitudes")
        e_f, d_f = params.amplitudes["f"]
        acoustic = {"f": AmplitudePair(e_f, d_f)}
    else:
        raise ConfigError(f"tissue option must be 1 or 2, got {option!r}")
    elastic = _elastic_pair(acoustic["f"], f.b, f.c)
    return Amplitudes(elastic=elastic, acoustic=acoustic)


@dataclass(frozen=True)
class ManufacturedCase:
    """Everything needed to evaluate the exact solution and its forcing."""

    option: int
    params: MaterialParams
    amplitudes: Amplitudes

    @property
    def elastic_tags(self) -> tuple[str, ...]:
        return ("e", "t") if self.option == TISSUE_ELASTIC else ("e",)

    @property
    def acoustic_tags(self) -> tuple[str, ...]:
        return ("f", "t") if self.option == TISSUE_ACOUSTIC else ("f",)

    # -- exact fields ---------------------------------------------------

    def u(self, pts, t, tag="e"):
        return u_shape(pts) * self.amplitudes.elastic.value(t)

    def udot(self, pts, t, tag="e"):
        return u_shape(pts) * self.amplitudes.elastic.deriv(t)

    def uddot(self, pts, t, tag="e"):
        return -u_shape(pts) * self.amplitudes.elastic.value(t)

    def psi(self, pts, t, tag):
        return psi_shape(pts) * self.amplitudes.acoustic[tag].value(t)

    def psidot(self, pts, t, tag):
        return psi_shape(pts) * self.amplitudes.acoustic[tag].deriv(t)

    def psiddot(self, pts, t, tag):
        return -psi_shape(pts) * self.amplitudes.acoustic[tag].value(t)

    def grad_psi(self, pts, t, tag):
        return psi_shape_grad(pts) * self.amplitudes.acoustic[tag].value(t)

    def grad_psidot(self, pts, t, tag):
        return psi_shape_grad(pts) * self.amplitudes.acoustic[tag].deriv(t)


def make_case(option: int, params: MaterialParams) -> ManufacturedCase:
    return ManufacturedCase(option=option, params=params,
                            amplitudes=amplitude_solver(option, params))


def forcing_elastic(case: ManufacturedCase, pts, t: float, tag: str) -> np.ndarray:
    """Body force making the displacement field an exact solution.

    Componentwise: [2 rho zeta a' + rho (zeta^2 - 1) a] S_u
                 + a * diag(lam + 4 mu, lam + 4 mu, 2 mu - lam) S_u.
    """
    if tag not in case.elastic_tags:
        raise ConfigError(f"block {tag!r} is not elastic under option {case.option}")
    m = case.params.elastic[tag]
    amp = case.amplitudes.elastic
    a, adot = amp.value(t), amp.deriv(t)
    s = u_shape(pts)
    scal = 2.0 * m.rho * m.zeta * adot + m.rho * (m.zeta * m.zeta - 1.0) * a
    dvec = np.array([m.lam + 4.0 * m.mu, m.lam + 4.0 * m.mu, 2.0 * m.mu - m.lam])
    return scal * s + a * (s * dvec[None, :])


def forcing_acoustic(case: ManufacturedCase, pts, t: float, tag: str) -> np.ndarray:
    """Source making the velocity potential an exact solution.

    (1/c^2) { [(3c^2 - 1) a + 3 b a'] S_psi
              + 2 [k1 S_psi^2 - k2 |grad S_psi|^2] a a' }.
    """
    if tag not in case.acoustic_tags:
        raise ConfigError(f"block {tag!r} is not acoustic under option {case.option}")
    m = case.params.acoustic[tag]
    amp = case.amplitudes.acoustic[tag]
    a, adot = amp.value(t), amp.deriv(t)
    s = psi_shape(pts)
    g2 = np.sum(psi_shape_grad(pts) ** 2, axis=1)
    c2 = m.c * m.c
    lin = ((3.0 * c2 - 1.0) * a + 3.0 * m.b * adot) * s
    nl = 2.0 * (m.k1 * s * s - m.k2 * g2) * a * adot
    return (lin + nl) / c2
