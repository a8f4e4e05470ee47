"""Pilot assignment, pilot-phase simulation and MMSE channel estimation.

Pilots are mutually orthogonal with squared norm tau_p, so they are
represented purely by their index: all pilot inner products reduce to the
indicator 1{t_i == t_k}. The pilot-phase observation kept per (AP, pilot)
is the projection of the received pilot matrix onto the normalized pilot.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channel import ChannelStatistics
from .errors import ConfigurationError

VALID_BUDGET_MODES = ("ignore", "rescale", "error")


@dataclass(frozen=True)
class PilotAssignment:
    tau_p: int                    # number of orthogonal pilots
    t: np.ndarray                 # (K,) pilot index per user, in {0..tau_p-1}

    def __post_init__(self):
        if self.tau_p < 1:
            raise ConfigurationError("tau_p must be >= 1")
        t = np.asarray(self.t, dtype=int)
        if t.ndim != 1 or np.any(t < 0) or np.any(t >= self.tau_p):
            raise ConfigurationError("pilot indices must lie in {0..tau_p-1}")
        object.__setattr__(self, "t", t)

    @property
    def num_users(self) -> int:
        return self.t.shape[0]

    def copilot_set(self, k: int) -> np.ndarray:
        """Users sharing user k's pilot, including k itself."""
        return np.flatnonzero(self.t == self.t[k])

    def users_on_pilot(self, pilot: int) -> np.ndarray:
        return np.flatnonzero(self.t == pilot)


@dataclass(frozen=True)
class PowerConfig:
    pilot_power: float = 0.2      # p^p, W per user
    data_power: float = 0.1       # rho, W per AP-user link
    ap_power_budget: float | None = None   # P_max per AP; None = unlimited
    power_budget_mode: str = "ignore"      # ignore | rescale | error

    def __post_init__(self):
        if self.pilot_power < 0 or self.data_power < 0:
            raise ConfigurationError("powers must be >= 0")
        if self.ap_power_budget is not None and self.ap_power_budget < 0:
            raise ConfigurationError("ap_power_budget must be >= 0")
        if self.power_budget_mode not in VALID_BUDGET_MODES:
            raise ConfigurationError(
                f"power_budget_mode must be one of {VALID_BUDGET_MODES}")


def assign_pilots(num_users: int, tau_p: int, rng: np.random.Generator) -> PilotAssignment:
    """Each user independently picks a uniform random pilot (collisions allowed)."""
    if tau_p < 1:
        raise ConfigurationError("tau_p must be >= 1")
    return PilotAssignment(tau_p=tau_p, t=rng.integers(0, tau_p, size=num_users))


def psi_matrix(m: int, pilot: int, stats: ChannelStatistics,
               assignment: PilotAssignment, powers: PowerConfig) -> np.ndarray:
    """Correlation matrix of the projected pilot observation at AP m.

    Psi = sum over users on the pilot of tau_p * p^p * R[m, i] + sigma^2 I;
    positive definite whenever sigma^2 > 0.
    """
    n = stats.num_antennas
    psi = stats.noise_power * np.eye(n, dtype=complex)
    for i in assignment.users_on_pilot(pilot):
        psi = psi + assignment.tau_p * powers.pilot_power * stats.R[m, i]
    return psi


def psi_stack(stats: ChannelStatistics, assignment: PilotAssignment,
              powers: PowerConfig) -> np.ndarray:
    """(tau_p, M, N, N) stack of Psi matrices for all pilots and APs."""
    n = stats.num_antennas
    out = np.broadcast_to(stats.noise_power * np.eye(n, dtype=complex),
                          (assignment.tau_p, stats.num_aps, n, n)).copy()
    for pilot in range(assignment.tau_p):
        users = assignment.users_on_pilot(pilot)
        if users.size:
            out[pilot] += (assignment.tau_p * powers.pilot_power
                           * stats.R[:, users].sum(axis=1))
    return out


def simulate_pilot_phase(realization: np.ndarray, assignment: PilotAssignment,
                         powers: PowerConfig, noise_power: float,
                         rng: np.random.Generator) -> np.ndarray:
    """Projected pilot observations y_check[pilot, m] for one channel realization.

    Pilot orthogonality makes the projection exact, so the tau_p-column pilot
    matrix never needs to be materialized:
    y_check[t, m] = sum over users i on pilot t of sqrt(p^p tau_p) H[m, i] + CN(0, sigma^2 I).

    realization: (M, K, N); returns (tau_p, M, N).
    """
    m, _, n = realization.shape
    amp = np.sqrt(powers.pilot_power * assignment.tau_p)
    noise = (rng.standard_normal((assignment.tau_p, m, n))
             + 1j * rng.standard_normal((assignment.tau_p, m, n)))
    y = np.sqrt(noise_power / 2.0) * noise
    for pilot in range(assignment.tau_p):
        users = assignment.users_on_pilot(pilot)
        if users.size:
            y[pilot] += amp * realization[:, users].sum(axis=1)
    return y


def mmse_estimate(y_check: np.ndarray, m: int, k: int, stats: ChannelStatistics,
                  assignment: PilotAssignment, powers: PowerConfig) -> np.ndarray:
    """MMSE estimate of H[m, k] from the projected observation on user k's pilot.

    H_hat = sqrt(p^p tau_p) R[m, k] Psi^-1 y_check[t_k, m].
    """
    psi = psi_matrix(m, assignment.t[k], stats, assignment, powers)
    coef = np.sqrt(powers.pilot_power * assignment.tau_p) * stats.R[m, k]
    return coef @ np.linalg.solve(psi, y_check[assignment.t[k], m])


def estimate_covariance(m: int, k: int, stats: ChannelStatistics,
                        assignment: PilotAssignment, powers: PowerConfig) -> np.ndarray:
    """Covariance of the MMSE estimate: p^p tau_p R Psi^-1 R."""
    psi = psi_matrix(m, assignment.t[k], stats, assignment, powers)
    r = stats.R[m, k]
    return powers.pilot_power * assignment.tau_p * (r @ np.linalg.solve(psi, r))


def error_covariance(m: int, k: int, stats: ChannelStatistics,
                     assignment: PilotAssignment, powers: PowerConfig) -> np.ndarray:
    """Covariance of the estimation error: R - p^p tau_p R Psi^-1 R."""
    return stats.R[m, k] - estimate_covariance(m, k, stats, assignment, powers)
