"""Closed-form spectral efficiency for mixed coherent/non-coherent downlink.

Each coherent group c serving user k gets an SINR of the hardening-bound
form

    gamma_k^c = D_k^c / (E_k + F_k - sum_{b<=c} D_k^b + sigma^2),

where D is the coherent desired-signal power of a group, E the total
average received power from every serving link, and F the coherent
(pilot-contaminated) cross power from co-pilot users. Groups are decoded
successively, so the partial D sum runs over the groups already decoded.

The Monte Carlo oracle estimates the same expectations by sampling
channels, pilot observations, MMSE estimates and precoders, and is the
independent check of the closed form.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .channel import ChannelStatistics, correlation_sqrt, sample_channel
from .clustering import ServingStructure
from .errors import ConfigurationError, DegenerateLinkError, NumericalError
from .pilots import PilotAssignment, PowerConfig, psi_stack

SIC_ORDERS = ("desired_desc", "cpu_index")


@dataclass(frozen=True)
class FrameConfig:
    tau_c: int = 200    # coherence block length, samples
    tau_p: int = 10     # pilot symbols per block

    def __post_init__(self):
        if not 1 <= self.tau_p < self.tau_c:
            raise ConfigurationError("frame requires 1 <= tau_p < tau_c")

    @property
    def prelog(self) -> float:
        return (self.tau_c - self.tau_p) / self.tau_c


@dataclass(frozen=True)
class SETerms:
    """Closed-form SINR building blocks, with groups already in SIC order.

    D[k] is an array over user k's groups; group_cpus[k] records which CPU
    each (reordered) group belongs to.
    """
    D: tuple[np.ndarray, ...]          # per-user desired powers, SIC order
    E: np.ndarray                      # (K,) total average power
    F: np.ndarray                      # (K,) coherent co-pilot power
    group_cpus: tuple[tuple[int, ...], ...]
    group_order: tuple[tuple[int, ...], ...]  # SIC permutation of serving.groups[k]


@dataclass(frozen=True)
class RateResult:
    sinr: tuple[np.ndarray, ...]       # per-user per-group, linear, SIC order
    group_rate: tuple[np.ndarray, ...]  # bits/s/Hz
    user_rate: np.ndarray              # (K,)
    sum_rate: float
    prelog: float


def mr_precoder(h_hat: np.ndarray, rho: float, est_trace: float) -> np.ndarray:
    """Maximum-ratio precoder W = sqrt(rho) H_hat / sqrt(E{||H_hat||^2})."""
    if rho == 0.0:
        return np.zeros_like(h_hat)
    if est_trace <= 0.0:
        raise DegenerateLinkError("zero estimated-channel power on an active link")
    return np.sqrt(rho / est_trace) * h_hat


def effective_data_powers(serving: ServingStructure, powers: PowerConfig) -> np.ndarray:
    """(M, K) per-link data powers; zero on non-serving links.

    Per-AP budget handling: "ignore" uses the nominal power as-is, "rescale"
    shrinks all of an overloaded AP's links uniformly, "error" raises.
    """
    num_aps = serving.num_aps
    rho = np.zeros((num_aps, len(serving.clusters)))
    for k, cluster in enumerate(serving.clusters):
        rho[list(cluster), k] = powers.data_power
    if powers.ap_power_budget is None or powers.power_budget_mode == "ignore":
        return rho
    totals = rho.sum(axis=1)
    over = totals > powers.ap_power_budget
    if not np.any(over):
        return rho
    if powers.power_budget_mode == "error":
        raise ConfigurationError(
            f"AP power budget exceeded at APs {np.flatnonzero(over).tolist()}")
    rho[over] *= (powers.ap_power_budget / totals[over])[:, None]
    return rho


def _link_traces(serving: ServingStructure, stats: ChannelStatistics,
                 assignment: PilotAssignment, powers: PowerConfig):
    """Per-link quantities shared by D, E and F.

    Returns (psi_inv, tr_gii, est_trace) where tr_gii[m, i] =
    tr(R[m,i] Psi[m,t_i]^-1 R[m,i]) and est_trace = p^p tau_p tr_gii is
    E{||H_hat||^2}. Only entries for serving links are guaranteed nonzero.
    """
    psis = psi_stack(stats, assignment, powers)
    psi_inv = np.linalg.inv(psis)  # (tau_p, M, N, N); PD since sigma^2 > 0
    # tr(R Psi^-1 R) for every (m, i) with Psi at user i's own pilot.
    psi_inv_own = psi_inv[assignment.t]              # (K, M, N, N)
    tr_gii = np.einsum("mkab,kmbc,mkca->mk", stats.R, psi_inv_own, stats.R,
                       optimize=True).real
    est_trace = powers.pilot_power * assignment.tau_p * tr_gii
    return psi_inv, tr_gii, est_trace


def compute_terms(serving: ServingStructure, stats: ChannelStatistics,
                  assignment: PilotAssignment, powers: PowerConfig,
                  sic_order: str = "desired_desc") -> SETerms:
    """Evaluate D_k^c, E_k and F_k for every user and coherent group.

    The inner matrix G_{i,k} = R[m,i] Psi[m,t]^-1 R[m,k] is evaluated per AP
    m inside each AP sum; in its diagonal use G_{i,i} the Psi belongs to user
    i's pilot (it stems from the MR normalization E{||H_hat_{m,i}||^2}).
    """
    if sic_order not in SIC_ORDERS:
        raise ConfigurationError(f"sic_order must be one of {SIC_ORDERS}")
    K = len(serving.clusters)
    tau_p, pp = assignment.tau_p, powers.pilot_power
    rho = effective_data_powers(serving, powers)
    psi_inv, tr_gii, _ = _link_traces(serving, stats, assignment, powers)

    for i in range(K):
        for m in serving.clusters[i]:
            if rho[m, i] > 0.0 and tr_gii[m, i] <= 0.0:
                raise DegenerateLinkError(
                    f"serving link (AP {m}, user {i}) has zero estimate power")

    E = np.zeros(K)
    F = np.zeros(K)
    D_raw: list[list[float]] = [[] for _ in range(K)]
    for k in range(K):
        psi_inv_k = psi_inv[assignment.t[k]]     # (M, N, N), user k's pilot
        copilots = set(assignment.copilot_set(k).tolist())
        for i in range(K):
            # tr(G_{i,k}) per AP, with Psi at user k's pilot (complex in general).
            contaminates = i in copilots
            if contaminates:
                tr_gik = np.einsum("mab,mbc,mca->m", stats.R[:, i], psi_inv_k,
                                   stats.R[:, k], optimize=True)
            # tr(R[m,k] G_{i,i}) per AP for the average-power term.
            tr_rk_gii = np.einsum("mab,mbc,mcd,mda->m", stats.R[:, k],
                                  stats.R[:, i], psi_inv[assignment.t[i]],
                                  stats.R[:, i], optimize=True).real
            for _, aps in serving.groups[i]:
                idx = list(aps)
                active = rho[idx, i] > 0.0
                E[k] += np.sum(rho[idx, i] * tr_rk_gii[idx] / np.where(
                    active, tr_gii[idx, i], 1.0) * active)
                if contaminates:
                    amp = np.sum(np.sqrt(rho[idx, i] * pp * tau_p)
                                 * tr_gik[idx] / np.sqrt(np.where(
                                     active, tr_gii[idx, i], 1.0)) * active)
                    F[k] += abs(amp) ** 2
        for _, aps in serving.groups[k]:
            idx = list(aps)
            tr_gkk = np.einsum("mab,mbc,mca->m", stats.R[idx, k], psi_inv_k[idx],
                               stats.R[idx, k], optimize=True).real
            D_raw[k].append(float(np.sum(
                np.sqrt(rho[idx, k] * pp * tau_p * np.clip(tr_gkk, 0.0, None))) ** 2))

    D: list[np.ndarray] = []
    group_cpus: list[tuple[int, ...]] = []
    group_order: list[tuple[int, ...]] = []
    for k in range(K):
        d = np.asarray(D_raw[k])
        cpus = np.asarray([cpu for cpu, _ in serving.groups[k]])
        if sic_order == "desired_desc":
            order = np.lexsort((np.arange(d.size), -d))
        else:
            order = np.argsort(cpus, kind="stable")
        D.append(d[order])
        group_cpus.append(tuple(int(c) for c in cpus[order]))
        group_order.append(tuple(int(b) for b in order))
    return SETerms(D=tuple(D), E=E, F=F, group_cpus=tuple(group_cpus),
                   group_order=tuple(group_order))


def sinr_mixed(terms: SETerms, k: int, c: int, noise_power: float) -> float:
    """SINR of user k's c-th decoded group (c is 1-based in SIC order)."""
    d = terms.D[k]
    if not 1 <= c <= d.size:
        raise ConfigurationError(f"group index {c} out of range for user {k}")
    denom = terms.E[k] + terms.F[k] - np.sum(d[:c]) + noise_power
    if denom <= 0.0:
        raise NumericalError(
            f"non-positive SINR denominator for user {k}, group {c}")
    return float(d[c - 1] / denom)


def user_rates(terms: SETerms, serving: ServingStructure, frame: FrameConfig,
               noise_power: float) -> RateResult:
    """Per-group and per-user spectral efficiencies with the pilot prelog."""
    sinrs = []
    rates = []
    for k in range(len(serving.clusters)):
        g = np.array([sinr_mixed(terms, k, c + 1, noise_power)
                      for c in range(terms.D[k].size)])
        sinrs.append(g)
        rates.append(frame.prelog * np.log2(1.0 + g))
    user_rate = np.array([r.sum() for r in rates])
    return RateResult(
        sinr=tuple(sinrs),
        group_rate=tuple(rates),
        user_rate=user_rate,
        sum_rate=float(user_rate.sum()),
        prelog=frame.prelog,
    )


@dataclass(frozen=True)
class OracleResult:
    """Sample-mean estimates of the closed-form terms with standard errors.

    Group order matches the SETerms produced by compute_terms for the same
    inputs (the SIC order is taken from `terms` passed to mc_oracle).
    """
    D: tuple[np.ndarray, ...]
    D_se: tuple[np.ndarray, ...]
    E: np.ndarray
    E_se: np.ndarray
    F: np.ndarray
    F_se: np.ndarray
    sinr: tuple[np.ndarray, ...]
    sinr_se: tuple[np.ndarray, ...]
    num_samples: int


def mc_oracle(serving: ServingStructure, stats: ChannelStatistics,
              assignment: PilotAssignment, powers: PowerConfig,
              frame: FrameConfig, num_samples: int, rng: np.random.Generator,
              terms: SETerms | None = None,
              batch_size: int = 20000) -> OracleResult:
    """Estimate the SINR expectations by direct simulation.

    For every sample: draw channels, simulate the pilot phase with noise,
    form MMSE estimates and MR precoders, then accumulate the received
    amplitude a_{i,k}^b = sum_{m in A_i^b} H[m,k]^H W[m,i] of every group b
    of every user i at every user k. The estimators are

        D_k^c = |mean a_{k,k}^c|^2            (coherent desired power),
        F_k   = sum over co-pilot (i, b) of |mean a_{i,k}^b|^2,
        E_k   = sum over all (i, b) of mean |a_{i,k}^b|^2  -  F_k,

    with |mean|^2 debiased by the variance of the mean. SINRs are assembled
    exactly as the SIC chain structures them, using the group order of
    `terms` (computed internally when not supplied).
    """
    if num_samples < 1:
        raise ConfigurationError("num_samples must be >= 1")
    if terms is None:
        terms = compute_terms(serving, stats, assignment, powers)
    K = len(serving.clusters)
    tau_p = assignment.tau_p
    rho = effective_data_powers(serving, powers)
    psis = psi_stack(stats, assignment, powers)
    _, tr_gii, est_trace = _link_traces(serving, stats, assignment, powers)
    del tr_gii
    sqrt_R = correlation_sqrt(stats.R)
    # Estimation coefficient sqrt(p^p tau_p) R[m,k] Psi[m,t_k]^-1 per link.
    est_coef = np.sqrt(powers.pilot_power * tau_p) * np.einsum(
        "mkab,kmbc->mkac", stats.R,
        np.linalg.inv(psis)[assignment.t], optimize=True)

    # Flatten (i, b) group pairs once; groups follow serving.groups order.
    flat_groups = [(i, b, list(aps))
                   for i in range(K)
                   for b, (_, aps) in enumerate(serving.groups[i])]
    G = len(flat_groups)
    copilot_mask = np.zeros((G, K), dtype=bool)   # does group g contaminate user k
    for g, (i, _, _) in enumerate(flat_groups):
        copilot_mask[g] = assignment.t == assignment.t[i]

    # Precoder scale per link: sqrt(rho / E{||H_hat||^2}), zero when inactive.
    w_scale = np.zeros_like(rho)
    active = rho > 0.0
    if np.any(active & (est_trace <= 0.0)):
        raise DegenerateLinkError("zero estimate power on an active link")
    w_scale[active] = np.sqrt(rho[active] / est_trace[active])

    # Streaming moments of a (complex) and |a|^2 per (group, observing user).
    sum_a = np.zeros((G, K), dtype=complex)
    sum_a2 = np.zeros((G, K))          # sum of |a|^2
    sum_re2 = np.zeros((G, K))         # for the variance of Re/Im of a
    sum_im2 = np.zeros((G, K))
    sum_p2 = np.zeros((G, K))          # sum of |a|^4

    done = 0
    noise = stats.noise_power
    while done < num_samples:
        b = min(batch_size, num_samples - done)
        H = sample_channel(stats, rng, num_samples=b, sqrt_R=sqrt_R)  # (b,M,K,N)
        # Projected pilot observations per (pilot, AP): coherent co-pilot sum + noise.
        y = (rng.standard_normal((b, tau_p, stats.num_aps, stats.num_antennas))
             + 1j * rng.standard_normal((b, tau_p, stats.num_aps,
                                         stats.num_antennas)))
        y *= np.sqrt(noise / 2.0)
        amp = np.sqrt(powers.pilot_power * tau_p)
        for pilot in range(tau_p):
            users = assignment.users_on_pilot(pilot)
            if users.size:
                y[:, pilot] += amp * H[:, :, users].sum(axis=2)
        # MMSE estimates and precoders for all links (inactive ones scale to 0).
        y_own = y[:, assignment.t]                      # (b, K, M, N)
        h_hat = np.einsum("mkac,skmc->smka", est_coef, y_own, optimize=True)
        W = w_scale[None, :, :, None] * h_hat           # (b, M, K, N)

        inner = np.einsum("smka,smia->smki", np.conj(H), W, optimize=True)
        for g, (i, _, aps) in enumerate(flat_groups):
            # Index the source user first: two advanced indices in one take
            # would shuffle the sample axis to the front.
            a = inner[..., i][:, aps, :].sum(axis=1)    # (b, K)
            sum_a[g] += a.sum(axis=0)
            p = np.abs(a) ** 2
            sum_a2[g] += p.sum(axis=0)
            sum_re2[g] += (a.real ** 2).sum(axis=0)
            sum_im2[g] += (a.imag ** 2).sum(axis=0)
            sum_p2[g] += (p ** 2).sum(axis=0)
        done += b

    S = float(num_samples)
    mean_a = sum_a / S
    var_re = np.maximum(sum_re2 / S - mean_a.real ** 2, 0.0)
    var_im = np.maximum(sum_im2 / S - mean_a.imag ** 2, 0.0)
    var_mean = (var_re + var_im) / S
    mean_p = sum_a2 / S
    var_p = np.maximum(sum_p2 / S - mean_p ** 2, 0.0)

    coh = np.abs(mean_a) ** 2 - var_mean       # debiased |E{a}|^2
    coh = np.maximum(coh, 0.0)
    coh_se = 2.0 * np.abs(mean_a) * np.sqrt(var_mean) + var_mean

    total = mean_p.sum(axis=0)                         # (K,)
    total_se2 = (var_p / S).sum(axis=0)
    F_hat = np.where(copilot_mask, coh, 0.0).sum(axis=0)
    F_se = np.sqrt(np.where(copilot_mask, coh_se ** 2, 0.0).sum(axis=0))
    E_hat = total - F_hat
    E_se = np.sqrt(total_se2 + F_se ** 2)

    # Per-user desired groups, mapped into the SIC order recorded in `terms`.
    D_hat: list[np.ndarray] = []
    D_se: list[np.ndarray] = []
    sinr: list[np.ndarray] = []
    sinr_se: list[np.ndarray] = []
    group_pos = {(i, b): g for g, (i, b, _) in enumerate(flat_groups)}
    for k in range(K):
        order = terms.group_order[k]
        if len(order) != len(serving.groups[k]):
            raise NumericalError("group count mismatch between terms and serving")
        d = np.array([coh[group_pos[(k, b)], k] for b in order])
        d_se = np.array([coh_se[group_pos[(k, b)], k] for b in order])
        D_hat.append(d)
        D_se.append(d_se)
        g = np.empty(d.size)
        g_se = np.empty(d.size)
        for c in range(d.size):
            denom = total[k] - np.sum(d[: c + 1]) + noise
            g[c] = d[c] / denom
            rel = np.sqrt((d_se[c] / max(d[c], np.finfo(float).tiny)) ** 2
                          + (total_se2[k] + np.sum(d_se[: c + 1] ** 2))
                          / denom ** 2)
            g_se[c] = abs(g[c]) * rel
        sinr.append(g)
        sinr_se.append(g_se)

    return OracleResult(
        D=tuple(D_hat), D_se=tuple(D_se), E=E_hat, E_se=E_se,
        F=F_hat, F_se=F_se, sinr=tuple(sinr), sinr_se=tuple(sinr_se),
        num_samples=num_samples,
    )
