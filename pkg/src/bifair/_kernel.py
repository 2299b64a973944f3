"""Compiled simulation loop.

State lives in flat arrays. Arm statistics are kept twice: in global arm
order (UCB1 and MF scan all arms in that order) and in "position" order,
where group ``g`` owns the contiguous slice ``gptr[g]:gptr[g+1]`` listed in
``garms``. Optimistic group estimates are cached per group and invalidated
only when that group is pulled, since nothing else changes its region.
"""

import math

import numba
import numpy as np

from .confreg import fill_region, inverse_cdf, merit_policy, optimize_box
from .policies import ucb_argmax

BF_UCB = 0
UCB1 = 1
MF_UCB = 2
GEF_UCB = 3

BERNOULLI = 0
UNIFORM_BAND = 1


@numba.njit(cache=True)
def _refresh(g, gptr, counts_p, sums_p, gcounts, delta, dlo, dhi, kind, a, b, p, grid, sweeps, tol,
             lo, hi, cache_valid, cache_val, cache_mu):
    if cache_valid[g]:
        return
    s = gptr[g]
    e = gptr[g + 1]
    k = e - s
    fill_region(counts_p[s:e], sums_p[s:e], gcounts[g], delta, dlo, dhi, lo[:k], hi[:k])
    cache_val[g] = optimize_box(lo[:k], hi[:k], kind, a, b, p, grid, sweeps, tol, True, cache_mu[s:e])
    cache_valid[g] = True


@numba.njit(cache=True)
def simulate(algo, t_start, n_steps, t_init,
             means, reward_kind, halfwidth,
             garms, gptr, owner, pos_of,
             beta_num, beta_den,
             kind, a, b, p, dlo, dhi, delta, grid, sweeps, tol,
             counts_g, sums_g, counts_p, sums_p, gcounts,
             cache_valid, cache_val, cache_mu,
             r_star, pi_star,
             acc, fr, min_slack,
             ur, up,
             cps, cp_pos, snap_acc, snap_fr, snap_slack, snap_g, snap_n,
             trace):
    n = means.shape[0]
    m = gcounts.shape[0]
    lo = np.empty(n)
    hi = np.empty(n)
    mu = np.empty(n)
    pi = np.empty(n)
    pi_all = np.empty(n)
    t = t_start
    for step in range(n_steps):
        u = up[step]
        g = -1
        local = -1
        stochastic = False
        if t < t_init:
            g = t % m
            s = gptr[g]
            e = gptr[g + 1]
            for j in range(e - s):
                if counts_p[s + j] == 0:
                    local = j
                    break
            if local < 0:
                if algo == BF_UCB or algo == MF_UCB:
                    stochastic = True
                else:
                    local = ucb_argmax(counts_p[s:e], sums_p[s:e], math.log(t))
        elif algo == UCB1:
            arm = ucb_argmax(counts_g, sums_g, math.log(t))
            g = owner[arm]
            local = pos_of[arm] - gptr[g]
        elif algo == MF_UCB:
            fill_region(counts_g, sums_g, t, delta, dlo, dhi, lo, hi)
            optimize_box(lo, hi, kind, a, b, p, grid, sweeps, tol, True, mu)
            merit_policy(mu, kind, a, b, p, pi_all)
            arm = inverse_cdf(pi_all, u)
            g = owner[arm]
            local = pos_of[arm] - gptr[g]
            s = gptr[g]
            e = gptr[g + 1]
            tot = 0.0
            for j in range(e - s):
                pi[j] = pi_all[garms[s + j]]
                tot += pi[j]
            for j in range(e - s):
                pi[j] = pi[j] / tot
        else:
            # group stage shared by BF-UCB and GEF: exposure floor first, then optimism
            best_slack = 0
            for h in range(m):
                sl = beta_num[h] * t - beta_den * gcounts[h]
                if sl > best_slack:
                    best_slack = sl
                    g = h
            if g < 0:
                best = -np.inf
                for h in range(m):
                    _refresh(h, gptr, counts_p, sums_p, gcounts, delta, dlo, dhi, kind, a, b, p, grid, sweeps,
                             tol, lo, hi, cache_valid, cache_val, cache_mu)
                    if cache_val[h] > best:
                        best = cache_val[h]
                        g = h
            if algo == BF_UCB:
                stochastic = True
            else:
                s = gptr[g]
                e = gptr[g + 1]
                local = ucb_argmax(counts_p[s:e], sums_p[s:e], math.log(t))

        s = gptr[g]
        e = gptr[g + 1]
        k = e - s
        if stochastic:
            _refresh(g, gptr, counts_p, sums_p, gcounts, delta, dlo, dhi, kind, a, b, p, grid, sweeps, tol,
                     lo, hi, cache_valid, cache_val, cache_mu)
            merit_policy(cache_mu[s:e], kind, a, b, p, pi[:k])
            local = inverse_cdf(pi[:k], u)
        elif algo != MF_UCB or t < t_init:
            for j in range(k):
                pi[j] = 0.0
            pi[local] = 1.0

        arm = garms[s + local]
        # policy-expected reward, gap to the group optimum, policy distance
        rt = 0.0
        dist = 0.0
        for j in range(k):
            rt += pi[j] * means[garms[s + j]]
            dist += abs(pi[j] - pi_star[s + j])
        acc[1] += rt
        acc[2] += r_star[g] - rt
        fr[g] += dist

        mu_a = means[arm]
        if reward_kind == BERNOULLI:
            reward = 1.0 if ur[step] < mu_a else 0.0
        else:
            reward = mu_a - halfwidth + 2.0 * halfwidth * ur[step]
        acc[0] += reward

        counts_g[arm] += 1
        sums_g[arm] += reward
        counts_p[s + local] += 1
        sums_p[s + local] += reward
        gcounts[g] += 1
        cache_valid[g] = False
        trace[step] = arm
        t += 1

        for h in range(m):
            sl = gcounts[h] - (beta_num[h] * t) // beta_den
            if sl < min_slack[h]:
                min_slack[h] = sl

        while cp_pos[0] < cps.shape[0] and cps[cp_pos[0]] == t:
            c = cp_pos[0]
            snap_acc[c, 0] = acc[0]
            snap_acc[c, 1] = acc[1]
            snap_acc[c, 2] = acc[2]
            for h in range(m):
                snap_fr[c, h] = fr[h]
                snap_slack[c, h] = min_slack[h]
                snap_g[c, h] = gcounts[h]
            for i in range(n):
                snap_n[c, i] = counts_g[i]
            cp_pos[0] += 1
    return t
