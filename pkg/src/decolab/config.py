"""Scenario files: INI-style ``key = value`` text with sections.

Example::

    [scenario]
    name = cat-t0
    units = dimensionless        ; or SI (frequencies in rad/s, times in s)
    omega = 1.0                  ; or frequency = <omega / 2pi>

    [field]
    state = even_cat             ; fock | coherent | even_cat | moments
    alpha = 1.0
    dim = 8

    [bath]                       ; discrete bath ...
    omegas = 0.9, 1.0, 1.15
    gammas = 0.01, 0.008, 0.006
    dims = 4, 4, 4

    [spectrum]                   ; ... or a continuum model, never both
    model = flat                 ; flat | ohmic | lorentzian

    [temperature]                ; exactly one of zero / beta / n_bar_at_omega / kelvin
    zero = true

All internal work is done in units where the field frequency is 1.
"""

from __future__ import annotations

import configparser
import hashlib
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Optional, Sequence, Union

from scipy import constants

from .born import FieldMoments
from .dynamics import DiscreteBath, EvolutionConfig
from .errors import ConfigError
from .fock import Coherent, EvenCat, FieldStateSpec, Fock
from .spectral import Flat, Lorentzian, Ohmic, SpectralModel, flat_from_rate

BUNDLED = ("paris", "rabi", "cat-t0", "cat-thermal", "continuum-flat")

ALLOWED = {
    "scenario": {"name", "units", "omega", "frequency"},
    "field": {"state", "n", "alpha", "dim", "mean_n0", "mean_a0"},
    "bath": {"omegas", "gammas", "dims"},
    "spectrum": {"model", "g0", "gamma0", "band", "rate", "tau_dis", "halfwidth",
                 "scale", "cutoff", "center", "width", "peak"},
    "temperature": {"zero", "beta", "n_bar_at_omega", "kelvin"},
    "evolution": {"t_max", "n_samples", "method", "tolerance", "weight_cutoff"},
    "convergence": {"gamma_grid"},
    "report": {"margin", "t_window"},
}


@dataclass
class ScenarioConfig:
    name: str
    units: str
    omega: float
    field: Optional[FieldStateSpec]
    moments: FieldMoments
    field_dim: Optional[int]
    bath: Optional[DiscreteBath]
    spectrum: Optional[SpectralModel]
    beta: float
    evolution: Optional[EvolutionConfig]
    weight_cutoff: float = 1e-9
    gamma_grid: tuple[float, ...] = (1e-3, 1.778279410038923e-3, 3.1622776601683795e-3, 5.623413251903491e-3, 1e-2)
    margin: float = 100.0
    t_window: Optional[float] = None
    digest: str = ""
    source: dict = field(default_factory=dict, repr=False)

    # -- dimensionless views (field frequency = 1) --------------------------------

    @property
    def beta_omega(self) -> float:
        return self.beta * self.omega

    def dimless_bath(self) -> Optional[DiscreteBath]:
        if self.bath is None:
            return None
        w = self.omega
        return DiscreteBath.from_arrays(self.bath.omegas / w, self.bath.gammas / w, self.bath.dims)

    def dimless_spectrum(self) -> Optional[SpectralModel]:
        return None if self.spectrum is None else self.spectrum.rescaled(self.omega)

    def dimless_evolution(self) -> Optional[EvolutionConfig]:
        ev = self.evolution
        if ev is None:
            return None
        return EvolutionConfig(ev.t_max * self.omega, ev.n_samples, ev.method, ev.tolerance)


def _floats(text: str, what: str) -> list[float]:
    try:
        return [float(x) for x in text.replace(";", ",").split(",") if x.strip()]
    except ValueError as exc:
        raise ConfigError(f"{what}: expected a comma-separated list of numbers, got {text!r}") from exc


def _float(sec, key, what=None) -> float:
    try:
        return float(sec[key])
    except KeyError as exc:
        raise ConfigError(f"missing [{sec.name}] {key}") from exc
    except ValueError as exc:
        raise ConfigError(f"[{sec.name}] {key}: not a number: {sec[key]!r}") from exc


def _complex(text: str, what: str) -> complex:
    try:
        return complex(text.replace(" ", ""))
    except ValueError as exc:
        raise ConfigError(f"{what}: not a complex number: {text!r}") from exc


def _bool(text: str) -> bool:
    return text.strip().lower() in ("1", "true", "yes", "on")


def resolve_path(path_or_name: Union[str, Path]) -> tuple[str, str]:
    """Return (text, label) for a config path or a bundled scenario name."""
    p = Path(path_or_name)
    if p.is_file():
        return p.read_text(encoding="utf-8"), str(p)
    name = str(path_or_name)
    if name in BUNDLED:
        return resources.files("decolab.scenarios").joinpath(f"{name}.ini").read_text(encoding="utf-8"), name
    raise ConfigError(f"no such config file or bundled scenario: {path_or_name}")


def apply_overrides(parser: configparser.ConfigParser, overrides: Sequence[str]) -> None:
    """Apply ``section.key=value`` edits; an empty value removes the key."""
    for item in overrides or ():
        key, sep, value = item.partition("=")
        section, dot, option = key.strip().partition(".")
        if not sep or not dot or not option:
            raise ConfigError(f"override must look like section.key=value, got {item!r}")
        if not value.strip():
            if parser.has_section(section):
                parser.remove_option(section, option)
            continue
        if not parser.has_section(section):
            parser.add_section(section)
        parser.set(section, option, value.strip())


def canonical_text(parser: configparser.ConfigParser) -> str:
    lines = []
    for section in sorted(parser.sections()):
        lines.append(f"[{section}]")
        for key in sorted(parser[section]):
            lines.append(f"{key} = {parser[section][key].strip()}")
    return "\n".join(lines) + "\n"


def load(path_or_name: Union[str, Path], overrides: Sequence[str] = ()) -> ScenarioConfig:
    text, label = resolve_path(path_or_name)
    return parse(text, overrides, label)


def parse(text: str, overrides: Sequence[str] = (), label: str = "<string>") -> ScenarioConfig:
    parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"), interpolation=None)
    try:
        parser.read_string(text, source=label)
    except configparser.Error as exc:
        raise ConfigError(f"{label}: {exc}") from exc
    apply_overrides(parser, overrides)
    for section in parser.sections():
        if section not in ALLOWED:
            raise ConfigError(f"unknown section [{section}]")
        unknown = set(parser[section]) - ALLOWED[section]
        if unknown:
            raise ConfigError(f"unknown keys in [{section}]: {', '.join(sorted(unknown))}")
    for required in ("scenario", "field", "temperature"):
        if not parser.has_section(required):
            raise ConfigError(f"missing section [{required}]")

    sc = parser["scenario"]
    units = sc.get("units", "dimensionless").strip().lower()
    if units not in ("dimensionless", "si"):
        raise ConfigError(f"units must be dimensionless or SI, got {units!r}")
    if ("omega" in sc) == ("frequency" in sc):
        raise ConfigError("give exactly one of [scenario] omega / frequency")
    omega = _float(sc, "omega") if "omega" in sc else 2.0 * math.pi * _float(sc, "frequency")
    if not omega > 0:
        raise ConfigError("field frequency must be positive")

    field_spec, moments, field_dim = _parse_field(parser["field"])

    has_bath, has_spec = parser.has_section("bath"), parser.has_section("spectrum")
    if has_bath == has_spec:
        raise ConfigError("give exactly one of [bath] (discrete) or [spectrum] (continuum)")
    bath = _parse_bath(parser["bath"]) if has_bath else None
    spectrum = _parse_spectrum(parser["spectrum"], omega) if has_spec else None

    beta = _parse_temperature(parser["temperature"], omega, units)

    evolution = None
    weight_cutoff = 1e-9
    if parser.has_section("evolution"):
        ev = parser["evolution"]
        try:
            evolution = EvolutionConfig(
                t_max=_float(ev, "t_max"),
                n_samples=int(ev.get("n_samples", "101")),
                method=ev.get("method", "auto").strip(),
                tolerance=float(ev.get("tolerance", "1e-10")),
            )
            weight_cutoff = float(ev.get("weight_cutoff", "1e-9"))
        except ValueError as exc:
            raise ConfigError(f"[evolution]: {exc}") from exc

    cfg = ScenarioConfig(
        name=sc.get("name", Path(label).stem).strip(),
        units="SI" if units == "si" else "dimensionless",
        omega=omega,
        field=field_spec,
        moments=moments,
        field_dim=field_dim,
        bath=bath,
        spectrum=spectrum,
        beta=beta,
        evolution=evolution,
        weight_cutoff=weight_cutoff,
        source={s: dict(parser[s]) for s in parser.sections()},
    )
    if parser.has_section("convergence") and "gamma_grid" in parser["convergence"]:
        cfg.gamma_grid = tuple(_floats(parser["convergence"]["gamma_grid"], "gamma_grid"))
    if parser.has_section("report"):
        rep = parser["report"]
        if "margin" in rep:
            cfg.margin = _float(rep, "margin")
        if "t_window" in rep:
            cfg.t_window = _float(rep, "t_window")
    cfg.digest = hashlib.sha256(canonical_text(parser).encode()).hexdigest()
    return cfg


def _parse_field(sec) -> tuple[Optional[FieldStateSpec], FieldMoments, Optional[int]]:
    state = sec.get("state", "").strip().lower()
    dim = int(sec["dim"]) if "dim" in sec else None
    try:
        if state == "fock":
            spec = Fock(int(sec.get("n", "0")))
        elif state == "coherent":
            spec = Coherent(_complex(sec["alpha"], "alpha"))
        elif state in ("even_cat", "even-cat", "cat"):
            spec = EvenCat(_complex(sec["alpha"], "alpha"))
        elif state == "moments":
            moments = FieldMoments(_float(sec, "mean_n0"), _complex(sec.get("mean_a0", "0"), "mean_a0"))
            return None, moments, dim
        else:
            raise ConfigError(f"[field] state must be fock, coherent, even_cat or moments, got {state!r}")
    except KeyError as exc:
        raise ConfigError(f"[field] missing {exc.args[0]}") from exc
    except ValueError as exc:
        raise ConfigError(f"[field]: {exc}") from exc
    return spec, FieldMoments.from_spec(spec), dim


def _parse_bath(sec) -> DiscreteBath:
    omegas = _floats(sec.get("omegas", ""), "omegas")
    gammas = _floats(sec.get("gammas", ""), "gammas")
    dims = [int(d) for d in _floats(sec.get("dims", ""), "dims")]
    if len(dims) == 1 and len(omegas) > 1:
        dims = dims * len(omegas)
    if not omegas or not len(omegas) == len(gammas) == len(dims):
        raise ConfigError("[bath] omegas, gammas and dims must be non-empty lists of equal length")
    try:
        return DiscreteBath.from_arrays(omegas, gammas, dims)
    except ValueError as exc:
        raise ConfigError(f"[bath]: {exc}") from exc


def _parse_spectrum(sec, omega: float) -> SpectralModel:
    model = sec.get("model", "").strip().lower()
    try:
        if model == "flat":
            halfwidth = float(sec["halfwidth"]) if "halfwidth" in sec else None
            if "tau_dis" in sec:
                return flat_from_rate(1.0 / _float(sec, "tau_dis"), omega, halfwidth)
            if "rate" in sec:
                return flat_from_rate(_float(sec, "rate"), omega, halfwidth)
            band = _floats(sec["band"], "band")
            if len(band) != 2 or not band[0] < band[1]:
                raise ConfigError("[spectrum] band must be 'lo, hi' with lo < hi")
            return Flat(_float(sec, "g0"), _float(sec, "gamma0"), (band[0], band[1]))
        if model == "ohmic":
            return Ohmic(_float(sec, "scale"), _float(sec, "cutoff"), _float(sec, "gamma0"))
        if model == "lorentzian":
            return Lorentzian(_float(sec, "center"), _float(sec, "width"), _float(sec, "peak"), _float(sec, "gamma0"))
    except KeyError as exc:
        raise ConfigError(f"[spectrum] missing {exc.args[0]}") from exc
    raise ConfigError(f"[spectrum] model must be flat, ohmic or lorentzian, got {model!r}")


def _parse_temperature(sec, omega: float, units: str) -> float:
    given = [k for k in ("zero", "beta", "n_bar_at_omega", "kelvin") if k in sec]
    if given == ["zero"] and _bool(sec["zero"]):
        return math.inf
    given = [k for k in given if k != "zero" or _bool(sec["zero"])]
    if len(given) != 1:
        raise ConfigError("[temperature] needs exactly one of zero / beta / n_bar_at_omega / kelvin")
    key = given[0]
    value = _float(sec, key)
    if key == "beta":
        beta = value
    elif key == "n_bar_at_omega":
        if value < 0:
            raise ConfigError("n_bar_at_omega must be non-negative")
        beta = math.inf if value == 0 else math.log1p(1.0 / value) / omega
    else:
        if units != "si":
            raise ConfigError("kelvin temperatures need units = SI")
        beta = math.inf if value == 0 else constants.hbar / (constants.k * value)
    if not beta > 0:
        raise ConfigError("inverse temperature must be positive")
    return beta
