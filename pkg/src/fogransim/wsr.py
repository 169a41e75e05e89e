"""Centralized weighted sum-rate beamforming under per-AP power and
fronthaul constraints (the cloud reference scheme).

The solver is a block-coordinate weighted-MMSE method:

  (i)   MMSE receive scalars u_k from the current beamformers,
  (ii)  MSE weights omega_k = alpha_k / MSE_k,
  (iii) transmit update minimizing the weighted quadratic surrogate subject
        to per-AP power, with per-AP Lagrange multipliers found by bisection
        on the water-level of the corresponding Schur complement,
  (iv)  per-AP fronthaul constraints handled by dual ascent: multipliers
        lambda_r >= 0 are subtracted from the weights of the users an AP
        currently serves and updated by projected subgradient on the
        capacity violation.

Any user may be served by any AP, so the beamformers live in the stacked
C^M space and the per-AP constraints couple across antenna blocks; the
multipliers are refined in Gauss-Seidel sweeps until feasible.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .channel import ChannelMatrix, NoisyChannelMatrix
from .topology import NetworkTopology

_LN2 = math.log(2.0)


@dataclass(frozen=True)
class SolverParams:
    """Knobs for the weighted sum-rate solver and the pre-scheduler.

    ``tau`` is the smoothing constant of the group-sparsity reweighting used
    by the pre-scheduler; the remaining sparsity knobs are ignored by the
    plain solver.
    """

    max_iterations: int = 200
    tolerance: float = 1e-5  # relative objective change
    tau: float = 1e-8
    dual_step: float = 0.1  # fronthaul dual ascent step, per relative violation
    max_dual_updates: int = 50
    dual_inner_iterations: int = 25  # WMMSE iteration cap after the first dual pass
    max_power_sweeps: int = 8
    bisection_iters: int = 40
    epsilon_active_scale: float = 1e-6  # serving threshold: scale * P_r / K
    service_floor: float = 1e-4  # drop users below this fraction of the best rate
    sparsity_passes: int = 10
    sparsity_weight: float = 0.05
    sparsity_growth: float = 2.0
    concentration_threshold: float = 0.95
    presched_inner_iterations: int = 40


@dataclass(frozen=True)
class BeamformingSolution:
    """Per-(AP, user) beamforming blocks stacked over AP antennas.

    ``matrix`` is (M, K); rows ``ap_offsets[r]:ap_offsets[r+1]`` of column k
    hold w_rk, and a column is the concatenated beamformer w_k.
    """

    matrix: np.ndarray
    ap_offsets: np.ndarray

    @property
    def num_aps(self) -> int:
        return len(self.ap_offsets) - 1

    @property
    def num_users(self) -> int:
        return self.matrix.shape[1]

    def ap_slice(self, r: int) -> slice:
        return slice(int(self.ap_offsets[r]), int(self.ap_offsets[r + 1]))

    def block(self, r: int, k: int) -> np.ndarray:
        return self.matrix[self.ap_slice(r), k]

    def stacked(self, k: int) -> np.ndarray:
        return self.matrix[:, k]

    def block_powers(self) -> np.ndarray:
        """||w_rk||^2 for every (AP, user) pair, shape (R, K)."""
        return _block_powers(self.matrix, self.ap_offsets)

    def per_ap_power(self) -> np.ndarray:
        return self.block_powers().sum(axis=1)


@dataclass(frozen=True)
class RateVector:
    rates: np.ndarray  # bits/second per user
    sinrs: np.ndarray  # dimensionless per user


@dataclass
class SolverReport:
    """Iteration diagnostics.  ``objective_traces`` holds one array of
    objective values (bits/s) per fronthaul dual pass; the trace is
    non-decreasing within each pass."""

    objective_traces: list[np.ndarray] = field(default_factory=list)
    iterations: int = 0
    converged: bool = False
    power_active: np.ndarray | None = None
    fronthaul_active: np.ndarray | None = None

    @property
    def objective_trace(self) -> np.ndarray:
        """Trace of the final dual pass (the production inner loop)."""
        if not self.objective_traces:
            return np.empty(0)
        return self.objective_traces[-1]

    @property
    def final_objective(self) -> float:
        trace = self.objective_trace
        return float(trace[-1]) if len(trace) else 0.0

    def trace_to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["dual_pass", "iteration", "objective_bps"])
            for p, seg in enumerate(self.objective_traces):
                for i, value in enumerate(seg):
                    writer.writerow([p, i, repr(float(value))])


def _block_powers(matrix: np.ndarray, offsets) -> np.ndarray:
    offsets = np.asarray(offsets, dtype=int)
    return np.add.reduceat(np.abs(matrix) ** 2, offsets[:-1], axis=0)


def _expand_rows(per_ap: np.ndarray, offsets) -> np.ndarray:
    """Repeat per-AP values along the stacked antenna axis."""
    counts = np.diff(np.asarray(offsets, dtype=int))
    return np.repeat(per_ap, counts, axis=0)


def _link_stats(H: np.ndarray, W: np.ndarray, noise: float):
    """Signal and interference-plus-noise powers per user, cancellation-free."""
    G = H.conj().T @ W  # G[k, j] = h_k^H w_j
    power = np.abs(G) ** 2
    sig = np.diagonal(power).copy()
    np.fill_diagonal(power, 0.0)
    inplus = power.sum(axis=1) + noise
    return np.diagonal(G).copy(), sig, inplus


def _all_sinrs(H: np.ndarray, W: np.ndarray, noise: float) -> np.ndarray:
    _, sig, inplus = _link_stats(H, W, noise)
    return sig / inplus


def compute_sinr(channel, solution: BeamformingSolution, k: int) -> float:
    """SINR of user k: |h_k^H w_k|^2 over other-user interference plus noise.

    Accepts a true or a noisy channel; uses its stacked matrix as-is.
    """
    if channel.matrix.shape != solution.matrix.shape:
        raise ValueError("channel and solution shapes do not match")
    noise = channel.noise_psd * channel.bandwidth
    return float(_all_sinrs(channel.matrix, solution.matrix, noise)[k])


def _rates_from_sinrs(sinrs: np.ndarray, bandwidth: float) -> np.ndarray:
    return bandwidth * np.log2(1.0 + sinrs)


def _objective(H, W, weights, noise, bandwidth) -> float:
    sinrs = _all_sinrs(H, W, noise)
    return float(bandwidth / _LN2 * np.sum(weights * np.log1p(sinrs)))


def _surrogate(H, W, u, omega, noise) -> float:
    """Weighted sum of per-user MSEs at fixed receive scalars and weights."""
    G = H.conj().T @ W
    diag = np.diagonal(G)
    total_rx = np.sum(np.abs(G) ** 2, axis=1) + noise
    err = np.abs(u) ** 2 * total_rx - 2.0 * np.real(np.conj(u) * diag) + 1.0
    return float(np.sum(omega * err))


def _matched_init(H: np.ndarray, offsets, powers: np.ndarray) -> np.ndarray:
    """Matched single-user beamformers with an equal per-AP power split."""
    num_users = H.shape[1]
    norms = np.sqrt(_block_powers(H, offsets))  # (R, K)
    share = np.sqrt(powers / num_users)[:, None]
    scale = np.divide(share, norms, out=np.zeros_like(norms), where=norms > 0)
    return H * _expand_rows(scale, offsets)


def _solve_beams(F_H, rhs, mu, offsets, penalties) -> np.ndarray:
    """Minimize ||F^H w_k - beta_k e_k||^2 + sum_r load_rk ||w_rk||^2 per user.

    Solved in least-squares form (the factor F^H is stacked with the square
    roots of the diagonal loads) so the accuracy depends on cond(F), not
    cond(F F^H); when a block is unregularized, lstsq's minimum-norm answer
    is precisely the lowest-power minimizer.
    """
    num_users, total = F_H.shape
    if penalties is None:
        loads = _expand_rows(mu, offsets)  # (M,)
        Z = np.vstack([F_H, np.diag(np.sqrt(loads)).astype(complex)])
        return np.linalg.lstsq(Z, rhs, rcond=None)[0]
    loads_all = _expand_rows(mu[:, None] + penalties, offsets)  # (M, K)
    if np.all(loads_all > 0.0):
        # Full-rank stacks: one batched QR instead of K separate solves.
        stacked = np.broadcast_to(F_H, (num_users, num_users, total)).copy()
        diags = np.zeros((num_users, total, total), dtype=complex)
        idx = np.arange(total)
        diags[:, idx, idx] = np.sqrt(loads_all.T)
        Z = np.concatenate([stacked, diags], axis=1)
        q, r = np.linalg.qr(Z)
        try:
            W = np.linalg.solve(r, np.swapaxes(q.conj(), 1, 2) @ rhs.T[:, :, None])
        except np.linalg.LinAlgError:
            W = None
        if W is not None and np.all(np.isfinite(W)):
            return W[:, :, 0].T
    W = np.empty((total, num_users), dtype=complex)
    for k in range(num_users):
        Zk = np.vstack([F_H, np.diag(np.sqrt(loads_all[:, k])).astype(complex)])
        W[:, k] = np.linalg.lstsq(Zk, rhs[:, k], rcond=None)[0]
    return W


def _find_level(eval_power, p_max, lo, f_lo, hi, f_hi, iters):
    """Smallest multiplier with AP power <= p_max on a decreasing curve.

    ``eval_power(x) -> (p_r, state)``; (lo, f_lo) is infeasible (f_lo >
    p_max) and (hi, f_hi) feasible.  Bracketed Illinois iteration on
    1/sqrt(p), which is close to linear in the multiplier; returns the
    feasible-side endpoint and its state, so the accepted beams are exactly
    the ones whose power was measured.  Acceptance windows sit above the
    least-squares noise floor of the power curve.
    """
    state_hi = None
    g_lo = 1.0 / math.sqrt(f_lo) - 1.0 / math.sqrt(p_max)  # < 0
    g_hi = 1.0 / math.sqrt(f_hi) - 1.0 / math.sqrt(p_max)  # >= 0
    side = 0
    for _ in range(iters):
        if f_hi >= p_max * (1.0 - 1e-8) or hi - lo <= 1e-10 * max(hi, 1e-30):
            break
        if g_hi == g_lo:
            x = 0.5 * (lo + hi)
        else:
            x = hi - g_hi * (hi - lo) / (g_hi - g_lo)
            if not (lo < x < hi):
                x = 0.5 * (lo + hi)
        f_x, state_x = eval_power(x)
        g_x = 1.0 / math.sqrt(f_x) - 1.0 / math.sqrt(p_max)
        if f_x > p_max:
            lo, g_lo = x, g_x
            if side == -1:
                g_hi *= 0.5
            side = -1
        else:
            hi, f_hi, g_hi, state_hi = x, f_x, g_x, state_x
            if side == 1:
                g_lo *= 0.5
            side = 1
    if state_hi is None:
        _, state_hi = eval_power(hi)
    return hi, state_hi


def _transmit_update(F_H, beta, powers, offsets, mu0, penalties, params):
    """Constrained transmit update: per-AP multipliers by bisection on the
    water-level, refined in Gauss-Seidel sweeps until jointly feasible with
    complementary slackness."""
    num_users, total = F_H.shape
    num_aps = len(powers)
    rhs = np.vstack([np.diag(beta).astype(complex), np.zeros((total, num_users), dtype=complex)])

    def solve(mu_vec):
        W = _solve_beams(F_H, rhs, mu_vec, offsets, penalties)
        return W, _block_powers(W, offsets).sum(axis=1)

    mu = np.asarray(mu0, dtype=float).copy()
    W, per_ap = solve(mu)
    for _sweep in range(params.max_power_sweeps):
        dirty = False
        for r in range(num_aps):
            over = per_ap[r] > powers[r] * (1.0 + 1e-9)
            slack = mu[r] > 0.0 and per_ap[r] < powers[r] * (1.0 - 1e-4)
            if not (over or slack):
                continue
            dirty = True

            def eval_power(x, _r=r):
                trial = mu.copy()
                trial[_r] = x
                W_x, p_x = solve(trial)
                return p_x[_r], (W_x, p_x)

            if over:
                # Current multiplier is on the infeasible side; expand up.
                lo, f_lo = mu[r], per_ap[r]
                hi = max(2.0 * mu[r], 1.0)
                f_hi, state = eval_power(hi)
                for _ in range(300):
                    if f_hi <= powers[r] or not np.isfinite(hi):
                        break
                    lo, f_lo = hi, f_hi
                    hi *= 4.0
                    f_hi, state = eval_power(hi)
                W, per_ap = state
            else:
                # Feasible but over-regularized; walk down toward zero.
                hi, f_hi = mu[r], per_ap[r]
                lo, f_lo = 0.0, None
                x = mu[r]
                for _ in range(300):
                    x *= 0.25
                    if x <= 1e-14 * mu[r]:
                        x = 0.0
                    f_x, state = eval_power(x)
                    if f_x > powers[r]:
                        lo, f_lo = x, f_x
                        break
                    hi, f_hi = x, f_x
                    W, per_ap = state
                    if x == 0.0:
                        break
                if f_lo is None:
                    mu[r] = hi
                    continue
            level, (W, per_ap) = _find_level(
                eval_power, powers[r], lo, f_lo, hi, f_hi, iters=params.bisection_iters
            )
            mu[r] = level
        if not dirty:
            break
    # Safety clamp: the returned point must honor every per-AP budget.
    over = per_ap > powers * (1.0 + 1e-10)
    if np.any(over):
        factors = np.ones(num_aps)
        factors[over] = np.sqrt(powers[over] * (1.0 - 1e-12) / per_ap[over])
        W = W * _expand_rows(factors, offsets)[:, None]
    return W, mu


def _wmmse_inner(
    H, weights, powers, offsets, noise, bandwidth, params, W0, penalties=None, max_iter=None
):
    """One weighted-MMSE loop at fixed effective weights and penalties.

    Returns (W, trace, converged).  The trace holds the loop's monotone
    objective in bits/s per iteration: the weighted sum-rate, minus the
    smoothed group-sparsity penalty when one is active.
    """
    W = W0.copy()
    trace: list[float] = []
    prev = None
    converged = False
    mu = np.zeros(len(powers))
    limit = max_iter if max_iter is not None else params.max_iterations

    def penalty_term(Wx):
        if penalties is None:
            return 0.0
        return float(np.sum(penalties * _block_powers(Wx, offsets)))

    for _it in range(limit):
        diag, sig, inplus = _link_stats(H, W, noise)
        sinr = sig / inplus
        total_rx = sig + inplus
        mse = inplus / total_rx  # = 1/(1 + sinr), no cancellation
        obj = float(bandwidth / _LN2 * (np.sum(weights * np.log1p(sinr)) - penalty_term(W)))
        trace.append(obj)
        if prev is not None and abs(obj - prev) <= params.tolerance * max(abs(prev), 1e-30):
            converged = True
            break
        prev = obj
        u = diag / total_rx
        omega = np.where(weights > 0.0, weights / mse, 0.0)
        coeff = omega * np.abs(u) ** 2
        if coeff.max() <= 0.0:
            W = np.zeros_like(W)
            continue
        # Factor of the quadratic surrogate: A = F F^H with F = H sqrt(c).
        F_H = H.conj().T * np.sqrt(coeff)[:, None]
        phase = np.where(np.abs(u) > 0.0, u / np.where(np.abs(u) > 0.0, np.abs(u), 1.0), 0.0)
        beta = np.sqrt(omega) * phase
        W_new, mu = _transmit_update(F_H, beta, powers, offsets, mu, penalties, params)
        # Block-coordinate descent safeguard: keep the update only if it does
        # not increase the (penalized) weighted-MSE surrogate at the current
        # (u, omega); with the receiver and weight updates exact, the traced
        # objective is then non-decreasing regardless of multiplier
        # inexactness.
        s_new = _surrogate(H, W_new, u, omega, noise) + penalty_term(W_new)
        s_old = _surrogate(H, W, u, omega, noise) + penalty_term(W)
        if s_new > s_old * (1.0 + 1e-12):
            continue
        W = W_new
    else:
        trace.append(
            float(
                bandwidth
                / _LN2
                * (np.sum(weights * np.log1p(_all_sinrs(H, W, noise))) - penalty_term(W))
            )
        )
    return W, np.asarray(trace), converged


def _select_support(W, rates, offsets, capacities, share: float = 0.05) -> np.ndarray:
    """Choose which (AP, user) pairs stay active, (R, K) boolean.

    A user keeps the AP blocks carrying at least ``share`` of its transmit
    power (its dominant servers).  While an AP's members' summed rates
    exceed its fronthaul capacity, it sheds the member leaning on it least
    (smallest power share), provided the user keeps another serving AP; an
    AP never sheds its last member this way (rate trimming handles those).
    """
    block_powers = _block_powers(W, offsets)
    totals = block_powers.sum(axis=0)
    shares = np.divide(
        block_powers, totals[None, :], out=np.zeros_like(block_powers), where=totals > 0
    )
    support = shares >= share
    for _ in range(support.size):
        loads = support.astype(float) @ rates
        ratios = np.divide(loads, capacities)
        worst = int(np.argmax(ratios))
        if ratios[worst] <= 1.0:
            break
        members = np.flatnonzero(support[worst])
        droppable = [k for k in members if support[:, k].sum() > 1]
        if not droppable:
            break
        weakest = min(droppable, key=lambda k: (shares[worst, k], k))
        support[worst, weakest] = False
    return support


def _support_penalties(support: np.ndarray, powers: np.ndarray) -> np.ndarray:
    """Fixed quadratic loads that pin blocks outside the support to zero."""
    blocked = 1e9 / np.maximum(powers, 1e-30)
    return np.where(support, 0.0, blocked[:, None])


def _clamp_inactive(W, offsets, eps_active) -> np.ndarray:
    """Zero out beam dust below the serving threshold so served sets,
    fronthaul accounting and block-sparsity checks are consistent."""
    powers = _block_powers(W, offsets)
    mask = _expand_rows(powers <= eps_active[:, None], offsets)
    out = W.copy()
    out[mask] = 0.0
    return out


def _loads(H, W, offsets, noise, bandwidth, eps_active):
    sinrs = _all_sinrs(H, W, noise)
    rates = _rates_from_sinrs(sinrs, bandwidth)
    served = _block_powers(W, offsets) > eps_active[:, None]
    return rates, served, served.astype(float) @ rates


def _enforce_fronthaul(H, W, offsets, capacities, noise, bandwidth, eps_active):
    """Deterministic finisher: scale down the served blocks of the worst
    over-capacity AP (bisection on the scale) until every fronthaul sum-rate
    fits.  Used only when dual ascent exhausts its budget while infeasible;
    terminates because silencing an AP always fits."""
    W = W.copy()
    num_aps = len(capacities)
    for outer in range(60 + num_aps + 5):
        rates, served, loads = _loads(H, W, offsets, noise, bandwidth, eps_active)
        ratios = loads / capacities
        worst = int(np.argmax(ratios))
        if ratios[worst] <= 1.0 + 1e-8:
            return W
        sl = slice(int(offsets[worst]), int(offsets[worst + 1]))
        users = served[worst]
        if outer >= 60 or not users.any():
            W[sl, :] = 0.0
            continue
        target = capacities[worst] * (1.0 - 1e-9)
        base = W[sl][:, users].copy()
        t_lo, t_hi = 0.0, 1.0
        for _ in range(60):
            mid = 0.5 * (t_lo + t_hi)
            W[np.ix_(range(sl.start, sl.stop), np.flatnonzero(users))] = base * mid
            trial = _clamp_inactive(W, offsets, eps_active)
            _, _, trial_loads = _loads(H, trial, offsets, noise, bandwidth, eps_active)
            if trial_loads[worst] <= target:
                t_lo = mid
            else:
                t_hi = mid
        W[np.ix_(range(sl.start, sl.stop), np.flatnonzero(users))] = base * t_lo
        W = _clamp_inactive(W, offsets, eps_active)
    return W


def solve_wsr(
    noisy_channel: NoisyChannelMatrix,
    topology: NetworkTopology,
    params: SolverParams | None = None,
) -> tuple[BeamformingSolution, RateVector, SolverReport]:
    """Maximize the weighted sum-rate over all beamformers on imperfect CSI.

    The solver sees only the noisy channel (global but imperfect CSI).  The
    returned solution satisfies every per-AP power budget and, via dual
    ascent plus a deterministic finisher, every per-AP fronthaul sum-rate
    constraint evaluated on the set of users the AP actually serves.
    Returned rates are bandwidth * log2(1 + SINR) on the noisy channel.
    """
    params = params or SolverParams()
    H = np.asarray(noisy_channel.matrix)
    offsets = np.asarray(noisy_channel.ap_offsets, dtype=int)
    if not np.array_equal(offsets, topology.antenna_offsets()):
        raise ValueError("channel antenna layout does not match topology")
    powers = topology.ap_powers()
    capacities = topology.fronthaul_capacities()
    if np.any(capacities <= 0.0):
        raise ValueError("fronthaul capacities must be positive")
    bandwidth = noisy_channel.bandwidth
    noise = noisy_channel.noise_psd * bandwidth
    alpha = topology.user_weights()
    num_users = H.shape[1]
    num_aps = len(powers)
    eps_active = params.epsilon_active_scale * powers / num_users

    report = SolverReport(
        power_active=np.zeros(num_aps, dtype=bool),
        fronthaul_active=np.zeros(num_aps, dtype=bool),
    )
    if alpha.sum() <= 0.0:
        solution = BeamformingSolution(np.zeros_like(H), offsets)
        zeros = np.zeros(num_users)
        report.converged = True
        return solution, RateVector(zeros.copy(), zeros.copy()), report

    # Normalizing the weights makes the iterates exactly covariant under a
    # common positive rescaling of all alpha_k.
    alpha_scale = alpha.mean()
    alpha_hat = alpha / alpha_scale

    # Stage 1: unconstrained-fronthaul WMMSE from the matched-filter start.
    W_init = _matched_init(H, offsets, powers)
    W, trace, inner_converged = _wmmse_inner(
        H, alpha_hat, powers, offsets, noise, bandwidth, params, W_init
    )
    report.objective_traces.append(trace * alpha_scale)
    report.iterations += len(trace)
    rates, _served, loads = _loads(H, W, offsets, noise, bandwidth, eps_active)
    feasible = bool(np.all(loads <= capacities * (1.0 + 1e-3)))

    if not feasible:
        # Stage 2: pick an explicit serving support.  Every user keeps the
        # AP blocks holding a meaningful share of its transmit power; APs
        # over their fronthaul cap then shed the members that lean on them
        # least, as long as the user keeps another serving AP.  This keeps
        # each fronthaul carrying only users the AP meaningfully serves.
        support = _select_support(W, rates.copy(), offsets, capacities)
        blocked = _support_penalties(support, powers)

        # Stage 3: WMMSE restricted to the support, then weight-only dual
        # ascent on the fixed serving sets for APs whose member rates still
        # exceed the cap.
        lam = np.zeros(num_aps)
        W = W * _expand_rows(support.astype(float), offsets)
        best_violation = math.inf
        stalled_passes = 0
        for dual_pass in range(params.max_dual_updates + 1):
            effective = np.maximum(alpha_hat - support.T.astype(float) @ lam, 0.0)
            # A zeroed beamformer is an absorbing state of the MMSE
            # recursion; re-seed users whose weight came back positive.
            dead = (np.abs(W).sum(axis=0) == 0.0) & (effective > 0.0) & support.any(axis=0)
            if dead.any():
                W = W.copy()
                W[:, dead] = (W_init * _expand_rows(support.astype(float), offsets))[:, dead]
            W, trace, inner_converged = _wmmse_inner(
                H,
                effective,
                powers,
                offsets,
                noise,
                bandwidth,
                params,
                W,
                penalties=blocked,
                max_iter=None if dual_pass == 0 else params.dual_inner_iterations,
            )
            report.objective_traces.append(trace * alpha_scale)
            report.iterations += len(trace)
            rates, _served, loads = _loads(H, W, offsets, noise, bandwidth, eps_active)
            alive = rates.sum() > 0.0
            if np.all(loads <= capacities * (1.0 + 1e-3)) and (alive or dual_pass >= 3):
                feasible = True
                break
            if dual_pass == params.max_dual_updates:
                break
            # Stall detection: once the worst relative violation stops
            # improving, further subgradient passes only oscillate; hand
            # the remaining sliver to the finisher.
            violation = float(np.max(loads / capacities)) if alive else math.inf
            if violation < best_violation * (1.0 - 1e-3):
                best_violation = violation
                stalled_passes = 0
            else:
                stalled_passes += 1
                if stalled_passes >= 4 and dual_pass >= 6:
                    break
            step = params.dual_step / math.sqrt(1.0 + dual_pass)
            lam = np.maximum(0.0, lam + step * np.clip(loads / capacities - 1.0, -1.0, 1.0))

    W = _clamp_inactive(W, offsets, eps_active)
    # Scheduling hygiene: a user left with a negligible rate relative to the
    # best served user is not meaningfully scheduled; release its beams
    # (which can only relax the power budgets) and re-check the fronthaul,
    # since the freed interference raises the remaining rates.
    for _ in range(3):
        floor_rates = _rates_from_sinrs(_all_sinrs(H, W, noise), bandwidth)
        dust = (floor_rates > 0.0) & (floor_rates < params.service_floor * floor_rates.max())
        if not dust.any():
            break
        W = W.copy()
        W[:, dust] = 0.0
    _, _, loads = _loads(H, W, offsets, noise, bandwidth, eps_active)
    if np.any(loads > capacities * (1.0 + 1e-9)):
        W = _enforce_fronthaul(H, W, offsets, capacities, noise, bandwidth, eps_active)
        if np.any(loads > capacities * (1.0 + 1e-3)):
            feasible = False

    # Final per-AP power safety clamp (bisection already lands feasible-side).
    per_ap = _block_powers(W, offsets).sum(axis=1)
    over = per_ap > powers * (1.0 + 1e-10)
    if np.any(over):
        factors = np.ones(num_aps)
        factors[over] = np.sqrt(powers[over] * (1.0 - 1e-12) / per_ap[over])
        W = W * _expand_rows(factors, offsets)[:, None]

    sinrs = _all_sinrs(H, W, noise)
    rates = _rates_from_sinrs(sinrs, bandwidth)
    block_powers = _block_powers(W, offsets)
    per_ap = block_powers.sum(axis=1)
    served = block_powers > eps_active[:, None]
    loads = served.astype(float) @ rates

    report.converged = bool(inner_converged and feasible)
    report.power_active = per_ap >= powers * (1.0 - 1e-6)
    report.fronthaul_active = loads >= capacities * (1.0 - 1e-6)
    return BeamformingSolution(W, offsets), RateVector(rates, sinrs), report


def evaluate_true_rates(true_channel: ChannelMatrix, solution: BeamformingSolution) -> RateVector:
    """Rates a solution actually realizes on the true channels.

    The solution was designed on imperfect CSI; this recomputes SINR and
    rate with the true h_k and the full cross-AP interference sum.  No
    fronthaul capping is applied here (see :mod:`fogransim.metrics`).
    """
    if true_channel.matrix.shape != solution.matrix.shape:
        raise ValueError("channel and solution shapes do not match")
    noise = true_channel.noise_psd * true_channel.bandwidth
    sinrs = _all_sinrs(true_channel.matrix, solution.matrix, noise)
    return RateVector(_rates_from_sinrs(sinrs, true_channel.bandwidth), sinrs)
