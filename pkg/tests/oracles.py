"""Arbitrary-precision strong-form residual oracles shared by the tests.

A float64 difference quotient at step 1e-4 carries a cancellation floor of
|f| * eps / h^2 ~ 4e-8, far above the 1e-10 residual target, so these
helpers evaluate the closed-form fields in mpmath (30 digits) and use
fourth-order central stencils whose truncation ~ h^4 |f^(6)| / 90 ~ 1e-17
is negligible.
"""
import mpmath as mp
import numpy as np

mp.mp.dps = 30
STEP = mp.mpf("1e-4")


def mp_amplitude(pair):
    e, d = mp.mpf(pair.E), mp.mpf(pair.D)
    return (lambda t: e * mp.sin(t) + d * mp.cos(t),
            lambda t: e * mp.cos(t) - d * mp.sin(t))


def mp_psi_shape(x, y, z):
    return mp.cos(x) * mp.cos(y) * mp.sin(z)


def mp_u_shape(x, y, z):
    return (
        mp.sin(x) * mp.cos(y) * mp.sin(z),
        mp.cos(x) * mp.sin(y) * mp.sin(z),
        mp.cos(x) * mp.cos(y) * mp.cos(z),
    )


def d1(fun, pt, axis, h=STEP):
    def at(s):
        q = list(pt)
        q[axis] = s
        return fun(*q)

    x = pt[axis]
    return (-at(x + 2 * h) + 8 * at(x + h) - 8 * at(x - h) + at(x - 2 * h)) / (12 * h)


def d2(fun, pt, axis, h=STEP):
    def at(s):
        q = list(pt)
        q[axis] = s
        return fun(*q)

    x = pt[axis]
    return (
        -at(x + 2 * h) + 16 * at(x + h) - 30 * at(x)
        + 16 * at(x - h) - at(x - 2 * h)
    ) / (12 * h * h)


def laplacian(fun, pt):
    return sum(d2(fun, pt, ax) for ax in range(3))


def sample_points(rng, tag, n):
    """(n, 4) random (x, y, z, t) samples inside one block."""
    pi = np.pi
    zlo, zhi = {"e": (0, pi), "f": (pi, 2 * pi), "t": (2 * pi, 3 * pi)}[tag]
    return np.column_stack([
        rng.uniform(-pi / 2, pi / 2, n),
        rng.uniform(-pi / 2, pi / 2, n),
        rng.uniform(zlo, zhi, n),
        rng.uniform(0.0, 2 * pi, n),
    ])


def acoustic_residual(case, tag, samples):
    """Worst |strong-form residual| of the acoustic field over the samples."""
    m = case.params.acoustic[tag]
    c2 = mp.mpf(m.c) ** 2
    b = mp.mpf(m.b)
    k1, k2 = mp.mpf(m.k1), mp.mpf(m.k2)
    a_fun, ad_fun = mp_amplitude(case.amplitudes.acoustic[tag])
    worst = mp.mpf(0)
    for x, y, z, t in samples:
        a, adot = a_fun(mp.mpf(t)), ad_fun(mp.mpf(t))
        pt = (mp.mpf(x), mp.mpf(y), mp.mpf(z))
        s = mp_psi_shape(*pt)
        lap_s = laplacian(mp_psi_shape, pt)
        g2 = sum(d1(mp_psi_shape, pt, ax) ** 2 for ax in range(3))
        psi_dd = -s * a
        nonlin = (2 / c2) * (k1 * (s * adot) * psi_dd + k2 * g2 * a * adot)
        forcing = ((3 * c2 - 1) * a + 3 * b * adot) * s / c2 \
            + (2 / c2) * (k1 * s * s - k2 * g2) * a * adot
        res = psi_dd / c2 - lap_s * a - (b / c2) * lap_s * adot - nonlin - forcing
        worst = max(worst, abs(res))
    return float(worst)


def elastic_residual(case, tag, samples):
    """Worst |strong-form residual| of the elastic field over the samples."""
    from elacu.manufactured import forcing_elastic

    m = case.params.elastic[tag]
    rho, zeta = mp.mpf(m.rho), mp.mpf(m.zeta)
    lam, mu = mp.mpf(m.lam), mp.mpf(m.mu)
    a_fun, ad_fun = mp_amplitude(case.amplitudes.elastic)
    comps = [lambda x, y, z, i=i: mp_u_shape(x, y, z)[i] for i in range(3)]

    def div_shape(x, y, z):
        return sum(d1(comps[j], (x, y, z), j) for j in range(3))

    worst = mp.mpf(0)
    for x, y, z, t in samples:
        a, adot = a_fun(mp.mpf(t)), ad_fun(mp.mpf(t))
        pt = (mp.mpf(x), mp.mpf(y), mp.mpf(z))
        s_vec = mp_u_shape(*pt)
        f_mod = forcing_elastic(case, np.array([[x, y, z]]), t, tag)[0]
        for i in range(3):
            lap_ui = laplacian(comps[i], pt) * a
            didiv = d1(div_shape, pt, i) * a
            div_sigma_i = (lam + mu) * didiv + mu * lap_ui
            res = (
                rho * (-s_vec[i] * a)
                + 2 * rho * zeta * s_vec[i] * adot
                + rho * zeta**2 * s_vec[i] * a
                - div_sigma_i
                - mp.mpf(float(f_mod[i]))
            )
            worst = max(worst, abs(res))
    return float(worst)
