"""Reference values, dimensionless groups and the heat-generation source."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import erf, erfinv

from .kernels import erf_source


class DomainError(ValueError):
    """Parameter outside its admissible range."""


@dataclass(frozen=True)
class ReferenceValues:
    """Dimensional material and source reference values.

    The three scale fields default to ``None``, meaning the standard
    runaway-scenario choices tied to the pack length ``L``:
    ``U_pc = k_p / L``, ``Q_pw = 1e-5 T_max k_p / L`` and
    ``Pi_burn = T_max k_p / (L ell)``.
    """

    rho_c: float = 2500.0
    rho_p: float = 1500.0
    C_c: float = 900.0
    C_p: float = 1500.0
    k_c: float = 3.0
    k_p: float = 3.0
    T_ref: float = 0.0
    T_a: float = 0.0
    T_b: float = 0.0
    T_s1: float = 120.0
    T_s2: float = 120.0
    T_inf: float = 293.0  # stored only; the scenarios never read it
    eps_s1: float = 0.0005
    eps_s2: float = 0.0005
    Pi_burn_hat: float | None = None
    Pi_base_ratio: float = 0.01
    U_pc_hat: float | None = None
    Q_pw_hat: float | None = None

    def validate(self):
        for name in ("rho_c", "rho_p", "C_c", "C_p", "k_c", "k_p", "T_s1", "T_s2"):
            if not getattr(self, name) > 0:
                raise DomainError(f"{name} must be positive")
        for name in ("eps_s1", "eps_s2"):
            v = getattr(self, name)
            if not 0.0 < v < 1.0:
                raise DomainError(f"{name}={v} outside (0, 1)")
        return self


@dataclass(frozen=True)
class SourceParams:
    A1: float
    B1: float
    A2: float
    B2: float
    C1: float
    C2: float
    T_max_hat: float
    T_Max_hat: float
    Pi_base: float


def pi_coefficients(ref: ReferenceValues) -> SourceParams:
    """Error-function coefficients of the dimensionless source."""
    for name in ("eps_s1", "eps_s2"):
        v = getattr(ref, name)
        if not 0.0 < v < 1.0:
            raise DomainError(f"{name}={v} outside (0, 1)")
    ref.validate()
    C1 = float(erfinv(2.0 * ref.eps_s1 - 1.0))
    C2 = float(erfinv(2.0 * ref.eps_s2 - 1.0))
    T_Max = ref.T_ref + ref.T_a + ref.T_s1 + ref.T_b + ref.T_s2
    T_max = T_Max - ref.T_ref
    return SourceParams(
        A1=-2.0 * C1 * T_max / ref.T_s1,
        B1=2.0 * C1 * ref.T_a / ref.T_s1 + C1,
        A2=-2.0 * C2 * T_max / ref.T_s2,
        B2=2.0 * C2 * T_max / ref.T_s2 - C2,
        C1=C1,
        C2=C2,
        T_max_hat=T_max,
        T_Max_hat=T_Max,
        Pi_base=ref.Pi_base_ratio,
    )


@dataclass(frozen=True)
class ScenarioConfig:
    """Runaway scenario.

    ``x_R = None`` gives a homogeneous pack (``R = R_0`` everywhere);
    ``x_burn = None`` means no burning region.  ``q_pw`` is the uniform
    dimensionless pipe flux.
    """

    x_burn: float | None = 0.2125
    x_R: float | None = -0.3125
    gamma: float = 180.0
    alpha1: float = 0.01
    q_pw: float = 1.0
    R_ratio: float = 10.0
    tanh_steepness: float = 100.0

    def validate(self, layout=None):
        if not self.gamma > 0:
            raise DomainError("gamma must be positive")
        if layout is not None:
            x0, x1, _, _ = layout.bounds
            for name in ("x_burn", "x_R"):
                v = getattr(self, name)
                if v is not None and not x0 <= v <= x1:
                    raise DomainError(f"{name}={v} outside the pack [{x0}, {x1}]")
        return self


@dataclass(frozen=True)
class DimGroups:
    Bi_p: float
    Bi_c: float
    Q: float
    varrho: float
    varsigma: float
    R0: float
    R_high: float
    R_low: float
    x_R: float | None
    tanh_steepness: float = 100.0
    k_p: float = 1.0
    k_c: float = 1.0

    def R(self, x):
        """Heat-generation number at x-coordinates ``x``."""
        x = np.asarray(x, float)
        if self.x_R is None:
            return np.full_like(x, self.R_low)
        hi, lo = self.R_high, self.R_low
        return 0.5 * (hi + lo) - 0.5 * (hi - lo) * np.tanh(self.tanh_steepness * (x - self.x_R))

    def as_dict(self):
        return {
            "Bi_p": self.Bi_p,
            "Bi_c": self.Bi_c,
            "Q": self.Q,
            "varrho": self.varrho,
            "varsigma": self.varsigma,
            "R0": self.R0,
            "R_high": self.R_high,
            "R_low": self.R_low,
            "x_R": self.x_R,
            "k_p": self.k_p,
            "k_c": self.k_c,
        }


def dimensionless_groups(ref: ReferenceValues, layout, scenario: ScenarioConfig) -> DimGroups:
    ref.validate()
    L = layout.L_hat
    ell = layout.geom.ell
    sp = pi_coefficients(ref)
    T_max = sp.T_max_hat
    if not (L > 0 and ell > 0 and T_max > 0):
        raise DomainError("zero length or temperature scale")
    U = ref.U_pc_hat if ref.U_pc_hat is not None else ref.k_p / L
    Qh = ref.Q_pw_hat if ref.Q_pw_hat is not None else 1e-5 * T_max * ref.k_p / L
    Pi0 = ref.Pi_burn_hat if ref.Pi_burn_hat is not None else T_max * ref.k_p / (L * ell)
    Bi_p = U * L / ref.k_p
    varsigma = ref.k_c / ref.k_p
    R0 = Pi0 * L * L / (T_max * ref.k_p)
    return DimGroups(
        Bi_p=Bi_p,
        Bi_c=Bi_p / varsigma,
        Q=Qh * L / (T_max * ref.k_p),
        varrho=ref.rho_p * ref.C_p / (ref.rho_c * ref.C_c),
        varsigma=varsigma,
        R0=R0,
        R_high=scenario.R_ratio * R0,
        R_low=R0,
        x_R=scenario.x_R,
        tanh_steepness=scenario.tanh_steepness,
    )


def pi_nb(T, params: SourceParams, base=None):
    base = params.Pi_base if base is None else base
    T = np.asarray(T, float)
    return (
        base
        + 0.5 * (erf(params.A1 * T + params.B1) + 1.0) * (1.0 - base)
        - 0.5 * (erf(params.A2 * T + params.B2) + 1.0)
    )


def pi_fb(T, params: SourceParams):
    T = np.asarray(T, float)
    return 1.0 - 0.5 * (erf(params.A2 * T + params.B2) + 1.0)


def pi_source(T_c, x, variant: str, params: SourceParams, scenario: ScenarioConfig):
    """Fine-scale source value.  ``x`` holds x-coordinates or ``(n, 2)`` points."""
    xv = np.asarray(x, float)
    if xv.ndim == 2 and xv.shape[1] == 2:
        xv = xv[..., 0]
    if variant == "NB":
        return pi_nb(T_c, params)
    if variant == "FB":
        return pi_fb(T_c, params)
    if variant != "full":
        raise ValueError(f"unknown source variant {variant!r}")
    if scenario.x_burn is None:
        return pi_nb(T_c, params)
    return np.where(xv <= scenario.x_burn, pi_fb(T_c, params), pi_nb(T_c, params))


def fine_source_function(params: SourceParams, scenario: ScenarioConfig, x, frozen: float | None = None):
    """Closure ``f(T) -> (Pi, dPi/dT)`` for sample points with x-coordinates ``x``.

    The burning branch applies for ``x <= x_burn`` (sharp switch).
    ``frozen`` replaces the source by a constant.
    """
    x = np.asarray(x, float)
    if frozen is not None:
        c = float(frozen)

        def f_const(T):
            return np.full_like(T, c), np.zeros_like(T)

        return f_const
    burned = np.zeros(len(x), bool) if scenario.x_burn is None else (x <= scenario.x_burn)
    burned = burned.astype(np.uint8)
    base = np.full(len(x), params.Pi_base)

    def f(T):
        return erf_source(T, params.A1, params.B1, params.A2, params.B2, base, burned)

    return f


def burn_weight(x, scenario: ScenarioConfig):
    """Sigmoid weight of the burning branch on the upscaled side."""
    x = np.asarray(x, float)
    if scenario.x_burn is None:
        return np.zeros_like(x)
    z = np.clip(scenario.gamma * (x - scenario.x_burn), -700.0, 700.0)
    return 1.0 / (1.0 + np.exp(z))


def homogenized_pi(T_c_avg, x, phi_c: float, params: SourceParams, scenario: ScenarioConfig):
    """Upscaled source: sigmoid blend of the two branches at ``<T_c>/phi_c``."""
    T = np.asarray(T_c_avg, float) / phi_c
    w = burn_weight(np.asarray(x, float), scenario)
    return w * pi_fb(T, params) + (1.0 - w) * pi_nb(T, params)


def homogenized_source_function(params, scenario, x, phi_c: float, frozen: float | None = None):
    """Closure ``f(<T_c>) -> (Pi_bar, dPi_bar/d<T_c>)`` at sample x-coordinates."""
    x = np.asarray(x, float)
    if frozen is not None:
        c = float(frozen)

        def f_const(T):
            return np.full_like(T, c), np.zeros_like(T)

        return f_const
    w = burn_weight(x, scenario)
    n = len(x)
    base = np.full(n, params.Pi_base)
    ones = np.ones(n, np.uint8)
    zeros = np.zeros(n, np.uint8)

    def f(Tc):
        T = Tc / phi_c
        fb, dfb = erf_source(T, params.A1, params.B1, params.A2, params.B2, base, ones)
        nb, dnb = erf_source(T, params.A1, params.B1, params.A2, params.B2, base, zeros)
        return w * fb + (1 - w) * nb, (w * dfb + (1 - w) * dnb) / phi_c

    return f


def R_transition_root(groups: DimGroups, alpha1: float) -> float | None:
    """x where ``R/R_low - 1`` equals ``alpha1`` on the tanh profile (analytic)."""
    if groups.x_R is None:
        return None
    r = groups.R_high / groups.R_low
    # R/R_low - 1 = (r - 1)/2 * (1 - tanh(s (x - x_R)))
    t = 1.0 - 2.0 * alpha1 / (r - 1.0)
    return groups.x_R + math.atanh(t) / groups.tanh_steepness
