"""Second-order closed forms for a field mode coupled to a thermal discrete bath.

Every quantity here is a sum over bath modes of

    g_j^2 * (sin(D_j t) / D_j)^2,     D_j = (W_j - w) / 2,

multiplied by occupation factors. With ``x = D t`` the kernel is
``t^2 sinc(x)^2``; the resonant limit D -> 0 is evaluated by series.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Literal

import numpy as np

from .dynamics import DiscreteBath
from .errors import ValidityError
from .fock import (
    Coherent,
    EvenCat,
    FieldStateSpec,
    Fock,
    KetVector,
    annihilation_matrix,
    FockSpace,
    thermal_occupation,
)

SERIES_CUTOFF = 1e-4
MEAN_A_ZERO_TOL = 1e-12

ReservoirForm = Literal["derived", "literature"]


@dataclass(frozen=True)
class FieldMoments:
    mean_n0: float
    mean_a0: complex = 0.0

    def __post_init__(self):
        if self.mean_n0 < 0:
            raise ValueError("mean_n0 must be non-negative")
        if abs(self.mean_a0) ** 2 > self.mean_n0 * (1 + 1e-12) + 1e-15:
            raise ValueError("|<a>|^2 cannot exceed <a^dag a>")

    @classmethod
    def from_spec(cls, spec: FieldStateSpec) -> "FieldMoments":
        """Untruncated moments of an ideal field state."""
        if isinstance(spec, Fock):
            return cls(float(spec.n), 0.0)
        if isinstance(spec, Coherent):
            return cls(abs(spec.alpha) ** 2, complex(spec.alpha))
        if isinstance(spec, EvenCat):
            n = abs(spec.alpha) ** 2
            return cls(n * math.tanh(n), 0.0)
        raise TypeError(f"unknown field state spec {spec!r}")

    @classmethod
    def from_ket(cls, ket: KetVector) -> "FieldMoments":
        """Moments measured on a (possibly truncated) single-mode ket."""
        psi = ket.amplitudes
        a = annihilation_matrix(FockSpace(psi.size))
        n = float(np.sum(np.arange(psi.size) * np.abs(psi) ** 2))
        mean_a = complex(np.vdot(psi, a @ psi))
        if abs(mean_a) < MEAN_A_ZERO_TOL:
            mean_a = 0.0
        return cls(n, mean_a)


@dataclass
class BornSeries:
    times: np.ndarray
    e1_order0: float
    e1_order1: np.ndarray
    e1_order2: np.ndarray
    delta1_order2: np.ndarray
    delta2_order2: np.ndarray


def detuning(Omega, omega):
    return (np.asarray(Omega) - omega) / 2.0


def sinc_window(D, t) -> np.ndarray:
    """(sin(D t) / D)^2, broadcasting D against t."""
    D = np.asarray(D, dtype=float)
    t = np.asarray(t, dtype=float)
    x = D * t
    small = np.abs(x) < SERIES_CUTOFF
    x_safe = np.where(small, 1.0, x)
    sinc = np.where(small, 1.0 - x * x / 6.0 + x**4 / 120.0, np.sin(x_safe) / x_safe)
    return (t * sinc) ** 2


def _kernel(t, omega: float, bath: DiscreteBath) -> np.ndarray:
    """Array of shape t.shape + (N,) holding g_j^2 (sin(D_j t)/D_j)^2."""
    t = np.asarray(t, dtype=float)[..., None]
    D = detuning(bath.omegas, omega)
    return bath.gammas**2 * sinc_window(D, t)


def _occupations(beta: float, bath: DiscreteBath) -> np.ndarray:
    return np.array([thermal_occupation(beta, m.omega) for m in bath.modes], dtype=float)


def _half_tanh(beta: float, bath: DiscreteBath) -> np.ndarray:
    if math.isinf(beta):
        return np.ones(len(bath.modes))
    return np.tanh(beta * bath.omegas / 2.0)


def energy_order1(t, omega: float, bath: DiscreteBath, beta: float):
    """First-order energy change; identically zero for a thermal bath (<b_j> = 0)."""
    return np.zeros_like(np.asarray(t, dtype=float))


def energy_order2(t, omega: float, bath: DiscreteBath, beta: float, moments: FieldMoments):
    nbar = _occupations(beta, bath)
    return omega * _kernel(t, omega, bath) @ (nbar - moments.mean_n0)


def field_purity_deficit_order2(t, omega: float, bath: DiscreteBath, beta: float, moments: FieldMoments):
    """Second-order linear entropy of the field, for states with <a> = 0."""
    if abs(moments.mean_a0) > MEAN_A_ZERO_TOL:
        raise ValidityError("field purity closed form only holds for <a> = 0 (Fock, even cat)")
    nbar = _occupations(beta, bath)
    N = moments.mean_n0
    return 2.0 * _kernel(t, omega, bath) @ (nbar * (N + 1.0) + (nbar + 1.0) * N)


def reservoir_factor(half_tanh, mean_n0: float, mean_a_sq: float, form: ReservoirForm = "derived"):
    """Occupation factor of the reservoir purity loss, per unit g^2 (sin(Dt)/D)^2.

    ``half_tanh`` is tanh(beta W / 2) = 1 / (2 nbar + 1).

    ``derived``: 2N + (2N+1)(tanh - 1) - 2|<a>|^2 tanh, the second-order
    expansion of the reservoir purity ratio for a thermal bath.
    ``literature``: 4(2N+1)(tanh - 1) + 2N - |<a>|^2 tanh, the commonly
    quoted form; it agrees with ``derived`` only at T = 0 with <a> = 0.
    """
    th = np.asarray(half_tanh, dtype=float)
    N = mean_n0
    if form == "derived":
        return 2.0 * N + (2.0 * N + 1.0) * (th - 1.0) - 2.0 * mean_a_sq * th
    if form == "literature":
        return 4.0 * (2.0 * N + 1.0) * (th - 1.0) + 2.0 * N - mean_a_sq * th
    raise ValueError(f"unknown reservoir form {form!r}")


def reservoir_coefficients(beta: float, bath: DiscreteBath, moments: FieldMoments, form: ReservoirForm = "derived"):
    return reservoir_factor(_half_tanh(beta, bath), moments.mean_n0, abs(moments.mean_a0) ** 2, form)


def reservoir_purity_deficit_order2(
    t, omega: float, bath: DiscreteBath, beta: float, moments: FieldMoments, form: ReservoirForm = "derived"
):
    """Second-order 1 - Tr rho2(t)^2 / Tr rho2(0)^2 (signed; may be negative)."""
    return _kernel(t, omega, bath) @ reservoir_coefficients(beta, bath, moments, form)


def born_series(times, omega: float, bath: DiscreteBath, beta: float, moments: FieldMoments,
                reservoir_form: ReservoirForm = "derived") -> BornSeries:
    times = np.asarray(times, dtype=float)
    if abs(moments.mean_a0) > MEAN_A_ZERO_TOL:
        delta1 = np.full(times.shape, np.nan)
    else:
        delta1 = field_purity_deficit_order2(times, omega, bath, beta, moments)
    return BornSeries(
        times=times,
        e1_order0=omega * moments.mean_n0,
        e1_order1=energy_order1(times, omega, bath, beta),
        e1_order2=energy_order2(times, omega, bath, beta, moments),
        delta1_order2=delta1,
        delta2_order2=reservoir_purity_deficit_order2(times, omega, bath, beta, moments, reservoir_form),
    )
