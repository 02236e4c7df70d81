"""Continuum-limit timescales for a mode coupled to a spectral bath.

A bath is described by a mode density g(W) and a coupling g(W) -> gamma(W).
Golden-rule sums over modes become integrals of g * F against the window
(sin(D t) / D)^2 with D = (W - w) / 2. The primary convention replaces that
window by a box of half-width 1/(2t) in D on which (sin(Dt)/D)^2 ~ t^2,
which gives the rate

    1/tau_F = t * integral_{-1/(2t)}^{1/(2t)} dD g(w + D) F(w + D)

and its t -> infinity limit g(w) F(w). Integrating the full window instead
gives 2*pi times more for a flat density; that rate is reported alongside
as a diagnostic.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Literal, Optional, Union

import numpy as np
from scipy import integrate

from .born import FieldMoments, ReservoirForm, reservoir_factor
from .dynamics import BathMode, DiscreteBath
from .errors import DegenerateModel, InfiniteTimescale, NoCrossing, QuadratureError, ValidityError
from .fock import thermal_occupation

QUAD_EPSREL = 1e-8
DEFAULT_MARGIN = 100.0
HIGH_T_BETA_OMEGA = 0.1
IDENTITY_RTOL = 1e-10


# -- spectral models ------------------------------------------------------------


@dataclass(frozen=True)
class Flat:
    """Constant density g0 on [band[0], band[1]], constant coupling gamma0."""

    g0: float
    gamma0: float
    band: tuple[float, float]

    def g(self, W):
        W = np.asarray(W, dtype=float)
        lo, hi = self.band
        return np.where((W >= lo) & (W <= hi), self.g0, 0.0)

    def gamma(self, W):
        return np.full(np.shape(W), float(self.gamma0))

    @property
    def breakpoints(self) -> tuple[float, ...]:
        return tuple(self.band)

    @property
    def support(self) -> tuple[float, float]:
        return tuple(self.band)

    def rescaled(self, unit: float) -> "Flat":
        return Flat(self.g0 * unit, self.gamma0 / unit, (self.band[0] / unit, self.band[1] / unit))


@dataclass(frozen=True)
class Ohmic:
    """g(W) = scale * W * exp(-W / cutoff) for W > 0."""

    scale: float
    cutoff: float
    gamma0: float

    def g(self, W):
        W = np.asarray(W, dtype=float)
        Wp = np.maximum(W, 0.0)
        return np.where(W > 0, self.scale * Wp * np.exp(-Wp / self.cutoff), 0.0)

    def gamma(self, W):
        return np.full(np.shape(W), float(self.gamma0))

    @property
    def breakpoints(self) -> tuple[float, ...]:
        return (0.0,)

    @property
    def support(self) -> tuple[float, float]:
        return (0.0, 80.0 * self.cutoff)

    def rescaled(self, unit: float) -> "Ohmic":
        # g has units 1/frequency, so scale (= g / W) carries 1/frequency^2
        return Ohmic(self.scale * unit**2, self.cutoff / unit, self.gamma0 / unit)


@dataclass(frozen=True)
class Lorentzian:
    """Lorentzian density of full width ``width`` with g(center) = peak."""

    center: float
    width: float
    peak: float
    gamma0: float

    def g(self, W):
        W = np.asarray(W, dtype=float)
        hw2 = (0.5 * self.width) ** 2
        return np.where(W > 0, self.peak * hw2 / ((W - self.center) ** 2 + hw2), 0.0)

    def gamma(self, W):
        return np.full(np.shape(W), float(self.gamma0))

    @property
    def breakpoints(self) -> tuple[float, ...]:
        return (0.0, self.center)

    @property
    def support(self) -> tuple[float, float]:
        return (0.0, self.center + 1e4 * self.width)

    def rescaled(self, unit: float) -> "Lorentzian":
        return Lorentzian(self.center / unit, self.width / unit, self.peak * unit, self.gamma0 / unit)


SpectralModel = Union[Flat, Ohmic, Lorentzian]
Kernel = Callable[[np.ndarray], np.ndarray]


def coupling_rate(model: SpectralModel, W) -> np.ndarray:
    """g(W) * gamma(W)^2, the golden-rule rate density."""
    return model.g(W) * model.gamma(W) ** 2


def flat_from_rate(rate: float, omega: float, halfwidth: Optional[float] = None) -> Flat:
    """Flat model centred on omega with g0 * gamma0^2 = rate (g0 = 1/omega)."""
    halfwidth = 0.5 * omega if halfwidth is None else halfwidth
    g0 = 1.0 / omega
    return Flat(g0, math.sqrt(rate / g0), (omega - halfwidth, omega + halfwidth))


def discretize(model: SpectralModel, n_modes: int, band: Optional[tuple[float, float]] = None,
               dim: int = 2) -> DiscreteBath:
    """Midpoint sampling with gamma_j^2 = gamma(W_j)^2 g(W_j) dW."""
    lo, hi = band or model.support
    dW = (hi - lo) / n_modes
    W = lo + dW * (np.arange(n_modes) + 0.5)
    gam = np.sqrt(coupling_rate(model, W) * dW)
    return DiscreteBath(tuple(BathMode(float(w), float(g), dim) for w, g in zip(W, gam)))


# -- windowed integrals -------------------------------------------------------------


def _quad(f, a, b, points):
    pts = sorted(p for p in set(points) if a < p < b)
    with warnings.catch_warnings():
        warnings.simplefilter("error", integrate.IntegrationWarning)
        try:
            val, _ = integrate.quad(f, a, b, epsabs=0.0, epsrel=QUAD_EPSREL, limit=500, points=pts or None)
        except integrate.IntegrationWarning as exc:
            raise QuadratureError(str(exc)) from exc
    return val


def _gamma_sq(model):
    return lambda W: model.gamma(W) ** 2


def window_rate(t: float, omega: float, model: SpectralModel, kernel: Optional[Kernel] = None) -> float:
    """t * integral over |D| <= 1/(2t) of g(w + D) F(w + D); F defaults to gamma^2."""
    if not t > 0:
        raise ValueError("window_rate needs t > 0")
    F = kernel or _gamma_sq(model)
    h = 0.5 / t

    def integrand(D):
        W = omega + D
        return float(model.g(W) * F(np.asarray(W)))

    pts = [p - omega for p in model.breakpoints]
    return t * _quad(integrand, -h, h, pts)


def window_integral(t: float, omega: float, model: SpectralModel, kernel: Optional[Kernel] = None,
                    nodes_per_period: int = 16) -> float:
    """integral_0^inf dW g(W) F(W) (sin(D t)/D)^2 over the model support.

    Gauss-Legendre on sub-intervals of one period 2*pi/t of the window,
    aligned on the resonance and the model breakpoints.
    """
    F = kernel or _gamma_sq(model)
    lo, hi = model.support
    period = 2.0 * math.pi / t
    edges = {lo, hi}
    edges.update(p for p in model.breakpoints if lo < p < hi)
    k_lo = math.floor((lo - omega) / period)
    k_hi = math.ceil((hi - omega) / period)
    if k_hi - k_lo > 2_000_000:
        raise QuadratureError("window integral needs too many periods; reduce t or the support")
    grid = omega + period * np.arange(k_lo, k_hi + 1)
    edges.update(grid[(grid > lo) & (grid < hi)])
    edges = np.array(sorted(edges))
    x, w = np.polynomial.legendre.leggauss(nodes_per_period)
    a, b = edges[:-1, None], edges[1:, None]
    W = 0.5 * (b - a) * x + 0.5 * (b + a)
    D = 0.5 * (W - omega)
    xt = D * t
    safe = np.where(np.abs(xt) < 1e-8, 1.0, xt)
    window = t**2 * np.where(np.abs(xt) < 1e-8, 1.0, (np.sin(safe) / safe) ** 2)
    vals = model.g(W) * F(W) * window
    return float(np.sum(0.5 * (b - a) * (vals @ w[:, None])))


# -- timescales ------------------------------------------------------------------------


def _rate_at(omega: float, model: SpectralModel) -> float:
    r = float(coupling_rate(model, omega))
    if not r > 0 or not math.isfinite(r):
        raise DegenerateModel(f"g(w) gamma(w)^2 = {r} at w = {omega}")
    return r


def tau_dissipation(omega: float, model: SpectralModel, t: Optional[float] = None) -> float:
    if t is None:
        return 1.0 / _rate_at(omega, model)
    rate = window_rate(t, omega, model)
    if not rate > 0:
        raise DegenerateModel("window contains no spectral weight")
    return 1.0 / rate


def tau_thermal(omega: float, beta: float, model: SpectralModel, moments: FieldMoments,
                t: Optional[float] = None) -> float:
    """Thermal timescale; +inf at T = 0 (no thermal effects)."""
    if not moments.mean_n0 > 0:
        raise ValidityError("thermal timescale is defined relative to <a^dag a>_0 > 0")
    if math.isinf(beta):
        return math.inf
    if t is None:
        rate = thermal_occupation(beta, omega) * _rate_at(omega, model)
    else:
        def F(W):
            W = np.asarray(W, dtype=float)
            return model.gamma(W) ** 2 / np.expm1(beta * np.maximum(W, 1e-300))

        rate = window_rate(t, omega, model, F)
        if not rate > 0:
            raise DegenerateModel("window contains no spectral weight")
    return moments.mean_n0 / rate


def decoherence_factor(nbar: float, mean_n0: float) -> float:
    """nbar (N + 1) + (nbar + 1) N."""
    return nbar * (mean_n0 + 1.0) + (nbar + 1.0) * mean_n0


def tau_decoherence(omega: float, beta: float, model: SpectralModel, moments: FieldMoments) -> float:
    nbar = thermal_occupation(beta, omega)
    braces = decoherence_factor(nbar, moments.mean_n0)
    rate = 2.0 * _rate_at(omega, model) * braces
    if rate == 0.0:
        raise InfiniteTimescale("no excitations in field or bath: purity never decays")
    return 1.0 / rate


def reservoir_rate_factor(nbar: float, moments: FieldMoments, form: ReservoirForm = "literature") -> float:
    """|reservoir purity factor| at the field frequency, per unit g(w) gamma(w)^2."""
    return abs(float(reservoir_factor(1.0 / (2.0 * nbar + 1.0), moments.mean_n0, abs(moments.mean_a0) ** 2, form)))


def tau_reservoir_decoherence(omega: float, beta: float, model: SpectralModel, moments: FieldMoments,
                              form: ReservoirForm = "literature") -> float:
    """Reservoir coherence-change timescale (absolute value of the signed rate)."""
    nbar = thermal_occupation(beta, omega)
    rate = _rate_at(omega, model) * reservoir_rate_factor(nbar, moments, form)
    if rate == 0.0:
        raise InfiniteTimescale("reservoir purity is stationary at second order")
    return 1.0 / rate


def _tau_or_inf(fn, *args, **kwargs) -> float:
    try:
        return fn(*args, **kwargs)
    except InfiniteTimescale:
        return math.inf


# -- ratios and verdicts ----------------------------------------------------------------


def _quotient(a: float, b: float) -> float:
    if math.isinf(a) and math.isinf(b):
        return math.nan
    if b == 0.0:
        return math.inf
    return a / b


def _rel_gap(x: float, y: float) -> float:
    if math.isinf(x) or math.isinf(y):
        return 0.0 if x == y else math.inf
    if math.isnan(x) or math.isnan(y):
        return 0.0 if (math.isnan(x) and math.isnan(y)) else math.inf
    scale = max(abs(x), abs(y))
    return 0.0 if scale == 0 else abs(x - y) / scale


@dataclass
class RatioReport:
    quotients: dict[str, float]
    closed_forms: dict[str, float]
    max_rel_gap: float


def ratio_closed_forms(nbar: float, mean_n0: float) -> dict[str, float]:
    """Timescale ratios written directly in terms of nbar(w) and <a^dag a>_0."""
    braces = decoherence_factor(nbar, mean_n0)
    return {
        "th/dis": math.inf if nbar == 0 else mean_n0 / nbar,
        "dis/dec": 2.0 * braces,
        "th/dec": math.inf if nbar == 0 else 2.0 * mean_n0 / nbar * braces,
        "dis/dec@T0": 2.0 * mean_n0,
    }


def ratio_report(omega: float, beta: float, model: SpectralModel, moments: FieldMoments) -> RatioReport:
    """Timescale ratios from independently computed taus and from closed forms."""
    tau_dis = tau_dissipation(omega, model)
    tau_th = tau_thermal(omega, beta, model, moments)
    tau_dec = tau_decoherence(omega, beta, model, moments)
    tau_dec0 = tau_decoherence(omega, math.inf, model, moments)
    quotients = {
        "th/dis": _quotient(tau_th, tau_dis),
        "dis/dec": _quotient(tau_dis, tau_dec),
        "th/dec": _quotient(tau_th, tau_dec),
        "dis/dec@T0": _quotient(tau_dis, tau_dec0),
    }
    closed = ratio_closed_forms(thermal_occupation(beta, omega), moments.mean_n0)
    gap = max(_rel_gap(quotients[k], closed[k]) for k in quotients)
    if gap > IDENTITY_RTOL:
        raise ArithmeticError(f"timescale ratio identities disagree (relative gap {gap:.3e})")
    return RatioReport(quotients, closed, gap)


@dataclass(frozen=True)
class Separability:
    passed: bool
    tau: float
    margin: float
    period: float
    inverse_omega: float

    @property
    def ratio_period(self) -> float:
        return self.tau / self.period

    @property
    def ratio_inverse_omega(self) -> float:
        return self.tau / self.inverse_omega


def separability_check(tau_res_dec: float, omega: float, margin: float = DEFAULT_MARGIN) -> Separability:
    """PASS iff tau > margin * 2 pi / omega (the free-evolution period)."""
    if margin < 1:
        raise ValueError("margin must be >= 1")
    period = 2.0 * math.pi / omega
    return Separability(bool(tau_res_dec > margin * period), tau_res_dec, margin, period, 1.0 / omega)


@dataclass(frozen=True)
class ZeroTCondition:
    passed: bool
    ratio: float
    margin: float


def zero_T_condition(omega: float, model: SpectralModel, moments: FieldMoments,
                     margin: float = DEFAULT_MARGIN) -> ZeroTCondition:
    """r = g(w) gamma(w)^2 (2N - |<a>|^2) / w, PASS iff r < 1/margin."""
    r = float(coupling_rate(model, omega)) * (2.0 * moments.mean_n0 - abs(moments.mean_a0) ** 2) / omega
    return ZeroTCondition(bool(r < 1.0 / margin), r, margin)


# -- cutoff temperature --------------------------------------------------------------------


@dataclass(frozen=True)
class Crossing:
    beta: float
    # True when the condition holds just below this beta (hotter side)
    passes_above_T: bool


@dataclass
class CutoffResult:
    beta_star: float
    crossings: list[Crossing]
    zero_T_passes: bool
    margin: float
    form: str

    @property
    def temperature_star(self) -> float:
        """k_B T* in the frequency units of omega."""
        return 1.0 / self.beta_star


def _reservoir_poles(omega: float, moments: FieldMoments, form: ReservoirForm) -> list[float]:
    """Inverse temperatures where the reservoir rate factor vanishes (tau -> inf)."""
    # the factor is (c0 + c1 nbar) / (2 nbar + 1); locate its zero in nbar
    N, a2 = moments.mean_n0, abs(moments.mean_a0) ** 2
    if form == "literature":
        c0, c1 = 2.0 * N - a2, 4.0 * N - 8.0 * (2.0 * N + 1.0)
    else:
        c0, c1 = 2.0 * N - 2.0 * a2, -2.0
    if c1 == 0.0:
        return []
    nbar_star = -c0 / c1
    if not nbar_star > 0:
        return []
    return [math.log1p(1.0 / nbar_star) / omega]


def cutoff_temperature(
    omega: float,
    model: SpectralModel,
    moments: FieldMoments,
    margin: float = DEFAULT_MARGIN,
    form: ReservoirForm = "literature",
    points_per_decade: int = 100,
    rtol: float = 1e-6,
) -> CutoffResult:
    """Inverse temperatures where tau_2dec(beta) crosses margin * 2 pi / omega.

    Scans beta on a log grid over [1e-6, 1e6] / omega (plus the poles of
    tau_2dec, where the reservoir rate vanishes), then bisects every sign
    change in log beta to ``rtol``. Raises NoCrossing with the uniform
    verdict when nothing changes sign.
    """
    threshold = margin * 2.0 * math.pi / omega

    def f(beta):
        return _tau_or_inf(tau_reservoir_decoherence, omega, beta, model, moments, form) - threshold

    n = int(round(12 * points_per_decade)) + 1
    betas = set(np.geomspace(1e-6 / omega, 1e6 / omega, n))
    betas.update(b for b in _reservoir_poles(omega, moments, form) if 1e-6 / omega < b < 1e6 / omega)
    betas = np.array(sorted(betas))
    vals = np.array([f(b) for b in betas])
    passing = vals > 0
    zero_T_passes = f(math.inf) > 0

    crossings = []
    for i in np.nonzero(passing[:-1] != passing[1:])[0]:
        lo, hi = math.log(betas[i]), math.log(betas[i + 1])
        p_lo = passing[i]
        while hi - lo > rtol:
            mid = 0.5 * (lo + hi)
            if (f(math.exp(mid)) > 0) == p_lo:
                lo = mid
            else:
                hi = mid
        crossings.append(Crossing(math.exp(0.5 * (lo + hi)), bool(p_lo)))
    if not crossings:
        raise NoCrossing(bool(passing[0]))
    return CutoffResult(crossings[0].beta, crossings, bool(zero_T_passes), margin, form)


# -- full report ------------------------------------------------------------------------


def regime(beta: float, omega: float) -> str:
    if math.isinf(beta):
        return "T=0"
    return "high-T" if beta * omega < HIGH_T_BETA_OMEGA else "finite-T"


@dataclass
class TimescaleReport:
    omega: float
    beta: float
    nbar: float
    tau_dis: float
    tau_th: float
    tau_dec: float
    tau_res_dec: float
    tau_res_dec_derived: float
    ratios: dict[str, float]
    closed_forms: dict[str, float]
    identity_gap: float
    separability: Separability
    zero_T: ZeroTCondition
    regime: str
    diagnostics: dict[str, float] = field(default_factory=dict)


def timescale_report(omega: float, beta: float, model: SpectralModel, moments: FieldMoments,
                     margin: float = DEFAULT_MARGIN, t_window: Optional[float] = None) -> TimescaleReport:
    """Markovian timescales, their ratios, and the separability verdicts."""
    tau_dis = tau_dissipation(omega, model)
    tau_th = _tau_or_inf(tau_thermal, omega, beta, model, moments) if moments.mean_n0 > 0 else math.inf
    tau_dec = _tau_or_inf(tau_decoherence, omega, beta, model, moments)
    tau_res = _tau_or_inf(tau_reservoir_decoherence, omega, beta, model, moments, "literature")
    tau_res_d = _tau_or_inf(tau_reservoir_decoherence, omega, beta, model, moments, "derived")
    ratios = {
        "th/dis": _quotient(tau_th, tau_dis),
        "dis/dec": _quotient(tau_dis, tau_dec),
        "th/dec": _quotient(tau_th, tau_dec),
    }
    nbar = thermal_occupation(beta, omega)
    closed = ratio_closed_forms(nbar, moments.mean_n0)
    gap = max(_rel_gap(ratios[k], closed[k]) for k in ratios) if moments.mean_n0 > 0 else 0.0
    rate = float(coupling_rate(model, omega))
    diagnostics = {
        "dis_rate_window": rate,
        "dis_rate_sinc": 2.0 * math.pi * rate,
    }
    if t_window is not None:
        diagnostics["dis_rate_window_t"] = window_rate(t_window, omega, model)
        diagnostics["dis_rate_sinc_t"] = window_integral(t_window, omega, model) / t_window
    return TimescaleReport(
        omega=omega,
        beta=beta,
        nbar=nbar,
        tau_dis=tau_dis,
        tau_th=tau_th,
        tau_dec=tau_dec,
        tau_res_dec=tau_res,
        tau_res_dec_derived=tau_res_d,
        ratios=ratios,
        closed_forms={k: closed[k] for k in ratios},
        identity_gap=gap,
        separability=separability_check(tau_res, omega, margin),
        zero_T=zero_T_condition(omega, model, moments, margin),
        regime=regime(beta, omega),
        diagnostics=diagnostics,
    )


def continuum_energy_order2(t: float, omega: float, model: SpectralModel, beta: float, moments: FieldMoments,
                            convention: Literal["sinc", "window"] = "sinc") -> float:
    """Second-order energy change of the field for a continuum bath.

    ``sinc`` integrates the full (sin(Dt)/D)^2 window; ``window`` uses the
    box approximation t * (1/tau_th-like rate - N * 1/tau_dis-like rate).
    """
    def F(W):
        W = np.asarray(W, dtype=float)
        nb = 0.0 if math.isinf(beta) else 1.0 / np.expm1(beta * np.maximum(W, 1e-300))
        return model.gamma(W) ** 2 * (nb - moments.mean_n0)

    if convention == "sinc":
        return omega * window_integral(t, omega, model, F)
    # window_rate needs a non-negative kernel, so split the hot and cold parts
    hot = 0.0
    if not math.isinf(beta):
        hot = window_rate(t, omega, model, lambda W: model.gamma(W) ** 2 / np.expm1(beta * np.maximum(W, 1e-300)))
    cold = window_rate(t, omega, model)
    return omega * t * (hot - moments.mean_n0 * cold)
