"""Experiment description and statistical CSI.

Holds every deterministic system parameter (array sizes, user counts,
geometry, powers, fading/circuit constants), samples random user drops,
and derives the per-drop statistical CSI (large-scale gains and steering
vectors) that the closed forms, the Monte Carlo chain, and the optimizer
all consume.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, asdict

import numpy as np


class ScenarioError(ValueError):
    """Invalid scenario parameters."""


def path_loss(d, kappa, C0, d0=1.0):
    """Distance-dependent large-scale gain C0 * (d / d0) ** (-kappa), linear."""
    d = np.asarray(d, dtype=float)
    if np.any(d <= 0) or d0 <= 0:
        raise ScenarioError("path_loss requires strictly positive distances")
    out = C0 * (d / d0) ** (-kappa)
    return out if out.ndim else float(out)


def ula_response(azimuth, elevation, count):
    """Uniform linear array response, half-wavelength spacing, unit-modulus entries."""
    q = np.arange(count)
    return np.exp(1j * np.pi * q * np.sin(elevation) * np.cos(azimuth))


def uspa_response(azimuth, elevation, count):
    """Uniform squared planar array response of side sqrt(count).

    Entry (qx, qy) carries phase pi*(qx*sin(el)*cos(az) + qy*sin(el)*sin(az));
    the grid is flattened row-major. `count` must be a perfect square.
    """
    side = math.isqrt(count)
    if side * side != count:
        raise ScenarioError(f"USPA size {count} is not a perfect square")
    qx, qy = np.meshgrid(np.arange(side), np.arange(side), indexing="ij")
    phase = np.pi * (qx * np.sin(elevation) * np.cos(azimuth)
                     + qy * np.sin(elevation) * np.sin(azimuth))
    return np.exp(1j * phase).reshape(-1)


def _direction_angles(src, dst):
    """(azimuth, elevation) of the direction src -> dst.

    Elevation is the polar angle from the +z axis, so purely horizontal
    links have elevation pi/2.
    """
    d = np.asarray(dst, dtype=float) - np.asarray(src, dtype=float)
    r = np.linalg.norm(d)
    if r == 0:
        raise ScenarioError("coincident nodes have no direction")
    azimuth = math.atan2(d[1], d[0])
    elevation = math.acos(d[2] / r)
    return azimuth, elevation


@dataclass
class EhModel:
    """Sigmoidal RF-to-DC conversion circuit."""
    a: float = 2400.0    # steepness (1/W)
    b: float = 0.003     # turn-on threshold (W)
    phi: float = 0.02    # maximum DC output (W)

    def __post_init__(self):
        if self.a <= 0 or self.b <= 0 or self.phi <= 0:
            raise ScenarioError("EH circuit constants must be positive")

    @property
    def lambda_const(self) -> float:
        """Zero-input correction constant, in (0, 1)."""
        return 1.0 / (1.0 + math.exp(self.a * self.b))


@dataclass
class Scenario:
    M: int = 64                  # BS antennas
    N: int = 36                  # RIS elements (perfect square)
    K_I: int = 5                 # information users
    K_E: int = 10                # energy users
    d_BR: float = 10.0           # BS-RIS distance (m)
    r_E: float = 5.0             # EU charging-zone radius (m)
    r_I: float = 10.0            # IU cluster radius (m)
    iu_center: tuple = (50.0, 0.0, 0.0)
    tau_c: int = 196             # coherence interval (symbols)
    prf_I: int = 0               # pilot reuse factor among IUs
    prf_E: int = 0               # pilot reuse factor among EUs
    p: float = 10 ** (25 / 10) / 1000        # pilot power (W), 25 dBm
    p_bs: float = 10.0           # BS power budget (W), 40 dBm
    sigma2: float = 10 ** (-94 / 10) / 1000  # noise power (W), -94 dBm
    delta: float = 10 ** 0.3     # Ricean factor (linear), 3 dB
    C0: float = 1e-3             # reference path loss (linear), -30 dB
    d0: float = 1.0              # reference distance (m)
    kappa_BR: float = 2.2        # BS-RIS path-loss exponent
    kappa_BI: float = 3.5        # BS-IU path-loss exponent
    kappa_RE: float = 2.8        # RIS-EU path-loss exponent
    eh: EhModel = field(default_factory=EhModel)
    qos: object = None           # per-IU SINR targets (linear); None = derive from EPA
    seed: int = 0

    def __post_init__(self):
        if isinstance(self.eh, dict):
            self.eh = EhModel(**self.eh)
        self.iu_center = tuple(float(v) for v in self.iu_center)
        side = math.isqrt(self.N)
        if side * side != self.N:
            raise ScenarioError(f"N={self.N} must be a perfect square")
        if self.M < 1 or self.K_I < 1 or self.K_E < 1:
            raise ScenarioError("M, K_I, K_E must all be >= 1")
        if not (0 <= self.prf_I <= self.K_I - 1):
            raise ScenarioError(f"prf_I={self.prf_I} outside [0, K_I-1]")
        if not (0 <= self.prf_E <= self.K_E - 1):
            raise ScenarioError(f"prf_E={self.prf_E} outside [0, K_E-1]")
        if self.tau < 1 or self.tau >= self.tau_c:
            raise ScenarioError(f"pilot length tau={self.tau} outside [1, tau_c)")
        if self.M <= self.tau_KI + 1:
            raise ScenarioError(f"M={self.M} must exceed tau_KI+1={self.tau_KI + 1}")
        for name in ("d_BR", "r_E", "r_I", "p", "p_bs", "sigma2", "C0", "d0"):
            if getattr(self, name) <= 0:
                raise ScenarioError(f"{name} must be positive")
        if self.delta < 0:
            raise ScenarioError("delta must be non-negative")

    @property
    def tau_KI(self) -> int:
        return self.K_I - self.prf_I

    @property
    def tau_KE(self) -> int:
        return self.K_E - self.prf_E

    @property
    def tau(self) -> int:
        return self.tau_KI + self.tau_KE

    @property
    def rho_budget(self) -> float:
        """Noise-normalized BS power budget."""
        return self.p_bs / self.sigma2

    def bs_position(self):
        return np.zeros(3)

    def ris_position(self):
        return np.array([0.0, self.d_BR, 0.0])

    def to_dict(self) -> dict:
        d = asdict(self)
        d["iu_center"] = list(self.iu_center)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "Scenario":
        return cls(**d)


@dataclass
class StatCsi:
    """Per-drop statistical CSI.

    `lam` is the per-EU cascaded NLoS gain beta_RE * beta_BR / (delta + 1);
    steering vectors carry unit-modulus entries so their squared norms equal
    their lengths exactly.
    """
    beta_BI: np.ndarray   # (K_I,) BS-IU gains
    beta_RE: np.ndarray   # (K_E,) RIS-EU gains
    beta_BR: float        # BS-RIS gain
    lam: np.ndarray       # (K_E,) cascaded NLoS gains
    a_M: np.ndarray       # (M,) BS departure steering vector toward the RIS
    a_N: np.ndarray       # (N,) RIS arrival steering vector from the BS
    f_bar: np.ndarray     # (N, K_E) RIS departure steering vectors, one column per EU
    eu_pos: np.ndarray = None   # (K_E, 3), kept for diagnostics
    iu_pos: np.ndarray = None   # (K_I, 3)

    @property
    def M(self) -> int:
        return self.a_M.shape[0]

    @property
    def N(self) -> int:
        return self.a_N.shape[0]

    @property
    def K_I(self) -> int:
        return self.beta_BI.shape[0]

    @property
    def K_E(self) -> int:
        return self.beta_RE.shape[0]


def sample_drop(s: Scenario, rng=None) -> StatCsi:
    """Draw one random user placement and derive its statistical CSI.

    EU positions are uniform over the semicircular charging zone of radius
    r_E centered at the RIS on the BS side; IU positions are uniform over
    the disc of radius r_I around iu_center. All nodes sit at z = 0.
    """
    if rng is None:
        rng = np.random.default_rng(s.seed)
    bs = s.bs_position()
    ris = s.ris_position()

    # uniform over the half-disc facing the BS (y <= d_BR half-plane)
    r = s.r_E * np.sqrt(rng.uniform(size=s.K_E))
    psi = rng.uniform(np.pi, 2 * np.pi, size=s.K_E)
    eu_pos = ris[None, :] + np.stack(
        [r * np.cos(psi), r * np.sin(psi), np.zeros(s.K_E)], axis=1)

    r = s.r_I * np.sqrt(rng.uniform(size=s.K_I))
    psi = rng.uniform(0, 2 * np.pi, size=s.K_I)
    iu_pos = np.asarray(s.iu_center)[None, :] + np.stack(
        [r * np.cos(psi), r * np.sin(psi), np.zeros(s.K_I)], axis=1)

    d_bi = np.linalg.norm(iu_pos - bs[None, :], axis=1)
    d_re = np.linalg.norm(eu_pos - ris[None, :], axis=1)
    beta_BI = path_loss(d_bi, s.kappa_BI, s.C0, s.d0)
    beta_RE = path_loss(d_re, s.kappa_RE, s.C0, s.d0)
    beta_BR = path_loss(s.d_BR, s.kappa_BR, s.C0, s.d0)
    lam = beta_RE * beta_BR / (s.delta + 1.0)

    a_M = ula_response(*_direction_angles(bs, ris), s.M)
    a_N = uspa_response(*_direction_angles(ris, bs), s.N)
    f_bar = np.stack(
        [uspa_response(*_direction_angles(ris, eu_pos[l]), s.N) for l in range(s.K_E)],
        axis=1)

    return StatCsi(beta_BI=np.atleast_1d(beta_BI), beta_RE=np.atleast_1d(beta_RE),
                   beta_BR=float(beta_BR), lam=np.atleast_1d(lam),
                   a_M=a_M, a_N=a_N, f_bar=f_bar, eu_pos=eu_pos, iu_pos=iu_pos)


def scenario_from_json(path) -> tuple:
    """Load (Scenario, experiment dict) from a JSON document.

    The file carries the scenario fields under "scenario" and an optional
    "experiment" block (sweep variable/values, drops, trials, mode, output).
    A flat file with scenario fields at the top level is also accepted.
    """
    with open(path) as fh:
        doc = json.load(fh)
    if "scenario" in doc:
        scn = Scenario.from_dict(doc["scenario"])
        exp = doc.get("experiment", {})
    else:
        scn = Scenario.from_dict(doc)
        exp = {}
    return scn, exp
