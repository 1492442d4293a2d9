"""Compiled inner loops for the sample-based solvers and N-player simulation.

Kernels draw from a small xoroshiro128+ generator whose state is seeded
from an integer taken from the caller's numpy Generator, so every result
is reproducible given that Generator. numba's built-in np.random costs
about 20 ns per draw on the target machine, several times the rest of a
Q-learning update, hence the local generator.

Outcome tables follow ``envs.base.Outcomes``: ``nxt``/``rew``/``cum`` of
shape (S, A, K). Tables are read with flat indices; row slices allocate
a view per call, which dominates the cost of a draw.
"""
import numpy as np
from numba import njit, uint64

POLY, CONST = 0, 1

_M1 = 0xBF58476D1CE4E5B9
_M2 = 0x94D049BB133111EB
_GOLD = 0x9E3779B97F4A7C15


@njit(cache=True)
def _splitmix(x):
    x = (x + uint64(_GOLD))
    z = x
    z = (z ^ (z >> uint64(30))) * uint64(_M1)
    z = (z ^ (z >> uint64(27))) * uint64(_M2)
    return x, z ^ (z >> uint64(31))


@njit(cache=True)
def make_state(seed):
    st = np.empty(2, dtype=np.uint64)
    x = uint64(seed)
    x, st[0] = _splitmix(x)
    x, st[1] = _splitmix(x)
    return st


@njit(cache=True)
def _rotl(x, k):
    return (x << uint64(k)) | (x >> uint64(64 - k))


@njit(cache=True)
def uniform(st):
    """xoroshiro128+ step mapped to [0, 1)."""
    s0 = st[0]
    s1 = st[1]
    out = s0 + s1
    s1 ^= s0
    st[0] = _rotl(s0, 24) ^ s1 ^ (s1 << uint64(16))
    st[1] = _rotl(s1, 37)
    return (out >> uint64(11)) * (1.0 / 9007199254740992.0)


@njit(cache=True)
def randint(st, n):
    i = int(uniform(st) * n)
    return i if i < n else n - 1


@njit(cache=True)
def _rate(kind, l, h, eta):
    if kind == POLY:
        return (l + 1.0) ** (-h)
    return eta


@njit(cache=True)
def _bsearch(u, flat, base, K):
    lo, hi = 0, K - 1
    while lo < hi:
        mid = (lo + hi) // 2
        if u < flat[base + mid]:
            hi = mid
        else:
            lo = mid + 1
    return lo


@njit(cache=True)
def _draw3(st, cum, s, a):
    K = cum.shape[2]
    if K == 1:
        return 0
    return _bsearch(uniform(st), cum.reshape(-1), (s * cum.shape[1] + a) * K, K)


@njit(cache=True)
def _draw2(st, cum, s):
    K = cum.shape[1]
    if K == 1:
        return 0
    return _bsearch(uniform(st), cum.reshape(-1), s * K, K)


@njit(cache=True)
def _draw1(st, cum):
    K = cum.shape[0]
    if K == 1:
        return 0
    return _bsearch(uniform(st), cum, 0, K)


@njit(cache=True)
def alias_tables(p):
    """Walker alias tables for each row of a (n, m) probability array."""
    n, m = p.shape
    prob = np.ones((n, m))
    alias = np.zeros((n, m), dtype=np.int64)
    small = np.empty(m, dtype=np.int64)
    large = np.empty(m, dtype=np.int64)
    for r in range(n):
        q = p[r] * m
        ns = 0
        nl = 0
        for j in range(m):
            if q[j] < 1.0:
                small[ns] = j
                ns += 1
            else:
                large[nl] = j
                nl += 1
        while ns > 0 and nl > 0:
            ns -= 1
            sm = small[ns]
            lg = large[nl - 1]
            prob[r, sm] = q[sm]
            alias[r, sm] = lg
            q[lg] = q[lg] + q[sm] - 1.0
            if q[lg] < 1.0:
                nl -= 1
                small[ns] = lg
                ns += 1
        for j in range(ns):
            prob[r, small[j]] = 1.0
            alias[r, small[j]] = small[j]
        for j in range(nl):
            prob[r, large[j]] = 1.0
            alias[r, large[j]] = large[j]
    return prob, alias


@njit(cache=True)
def _draw_alias(st, prob, alias, s):
    m = prob.shape[1]
    u = uniform(st) * m
    i = int(u)
    if i >= m:
        i = m - 1
    if u - i < prob[s, i]:
        return i
    return alias[s, i]


@njit(cache=True)
def _greedy(st, flat, base, A):
    """argmax of flat[base:base+A] with uniform random tie-breaking."""
    best = flat[base]
    n = 1
    idx = 0
    for j in range(1, A):
        v = flat[base + j]
        if v > best:
            best = v
            n = 1
            idx = j
        elif v == best:
            n += 1
            if uniform(st) * n < 1.0:
                idx = j
    return idx


@njit(cache=True)
def _rowmax(flat, base, A):
    m = flat[base]
    for j in range(1, A):
        if flat[base + j] > m:
            m = flat[base + j]
    return m


# single-agent solvers ---------------------------------------------------

@njit(cache=True)
def sync_q(nxt, rew, cum, gamma, T, kind, h, eta, C, seed):
    st = make_state(seed)
    S, A, _ = nxt.shape
    Q = np.full((S, A), C)
    Qf = Q.reshape(-1)
    V = np.empty(S)
    for l in range(T):
        for s in range(S):
            V[s] = _rowmax(Qf, s * A, A)
        beta = _rate(kind, l, h, eta)
        for s in range(S):
            for a in range(A):
                k = _draw3(st, cum, s, a)
                target = rew[s, a, k] + gamma * V[nxt[s, a, k]]
                Q[s, a] = (1.0 - beta) * Q[s, a] + beta * target
    return Q


@njit(cache=True)
def sync_td(nxt, rew, cum, pi, gamma, T, kind, h, eta, C, seed):
    st = make_state(seed)
    pi_prob, pi_alias = alias_tables(pi)
    S, A, _ = nxt.shape
    Q = np.full((S, A), C)
    Q_old = np.empty((S, A))
    for l in range(T):
        Q_old[:, :] = Q
        beta = _rate(kind, l, h, eta)
        for s in range(S):
            for a in range(A):
                k = _draw3(st, cum, s, a)
                s2 = nxt[s, a, k]
                a2 = _draw_alias(st, pi_prob, pi_alias, s2)
                target = rew[s, a, k] + gamma * Q_old[s2, a2]
                Q[s, a] = (1.0 - beta) * Q[s, a] + beta * target
    return Q


@njit(cache=True)
def async_q(nxt, rew, cum, gamma, T, kind, h, eta, C, eps0, eps1, s0, seed):
    st = make_state(seed)
    S, A, _ = nxt.shape
    Q = np.full((S, A), C)
    Qf = Q.reshape(-1)
    counts = np.zeros((S, A), dtype=np.int64)
    s = s0
    for t in range(T):
        eps = eps0 + (eps1 - eps0) * t / max(T - 1, 1)
        if uniform(st) < eps:
            a = randint(st, A)
        else:
            a = _greedy(st, Qf, s * A, A)
        k = _draw3(st, cum, s, a)
        s2 = nxt[s, a, k]
        m = _rowmax(Qf, s2 * A, A)
        beta = _rate(kind, counts[s, a], h, eta)
        Q[s, a] = (1.0 - beta) * Q[s, a] + beta * (rew[s, a, k] + gamma * m)
        counts[s, a] += 1
        s = s2
    return Q, counts


@njit(cache=True)
def occupancy(nxt, cum, pi_cum, nu_cum, gamma, n, seed):
    st = make_state(seed)
    out = np.empty(n, dtype=np.int64)
    for i in range(n):
        s = _draw1(st, nu_cum)
        while uniform(st) < gamma:
            a = _draw2(st, pi_cum, s)
            s = nxt[s, a, _draw3(st, cum, s, a)]
        out[i] = s
    return out


@njit(cache=True)
def trpo_batch(nxt, rew, cum, pi_cum, nu_cum, gamma, m0, horizon, seed):
    """Occupancy states, uniform actions and truncated rollout Q estimates."""
    st = make_state(seed)
    S, A, _ = nxt.shape
    states = np.empty(m0, dtype=np.int64)
    actions = np.empty(m0, dtype=np.int64)
    qhat = np.empty(m0)
    for m in range(m0):
        s = _draw1(st, nu_cum)
        while uniform(st) < gamma:
            a = _draw2(st, pi_cum, s)
            s = nxt[s, a, _draw3(st, cum, s, a)]
        a = randint(st, A)
        states[m] = s
        actions[m] = a
        total = 0.0
        disc = 1.0
        for t in range(horizon):
            k = _draw3(st, cum, s, a)
            total += disc * rew[s, a, k]
            disc *= gamma
            s = nxt[s, a, k]
            a = _draw2(st, pi_cum, s)
        qhat[m] = total
    return states, actions, qhat


# N-player pricing -------------------------------------------------------
# Player policies/tables are indexed by (player, own state, bin of the
# others' mean production at the previous step, action). One bin gives the
# independent-learner setting.

@njit(cache=True)
def _price(total_q, N, d, sigma, q_floor):
    return (d / max(total_q / N, q_floor)) ** (1.0 / sigma)


@njit(cache=True)
def _bin(total_q, own_q, N, lo, hi, n_bins):
    if n_bins == 1 or N == 1:
        return 0
    mean = (total_q - own_q) / (N - 1)
    b = int((mean - lo) / (hi - lo) * n_bins)
    return min(max(b, 0), n_bins - 1)


@njit(cache=True)
def _act(st, pol_cum, i, s, b):
    S, B, A = pol_cum.shape[1], pol_cum.shape[2], pol_cum.shape[3]
    return _bsearch(uniform(st), pol_cum.reshape(-1), ((i * S + s) * B + b) * A, A)


@njit(cache=True)
def nplayer_train(next_tab, base_tab, action_q, d, sigma, q_floor, shift, gamma,
                  Q, counts, states, bins, t0, t1, T, kind, h, eta, eps0, eps1,
                  lo, hi, seed):
    """Simultaneous async Q-learners on the shared-price game, steps t0..t1-1 of T.

    ``Q`` (N, S, B, A), ``counts``, ``states`` and ``bins`` are updated in
    place so training can be resumed between checkpoints.
    """
    st = make_state(seed)
    N = states.shape[0]
    S, A = next_tab.shape
    n_bins = Q.shape[2]
    Qf = Q.reshape(-1)
    actions = np.empty(N, dtype=np.int64)
    for t in range(t0, t1):
        eps = eps0 + (eps1 - eps0) * t / max(T - 1, 1)
        total_q = 0.0
        for i in range(N):
            if uniform(st) < eps:
                actions[i] = randint(st, A)
            else:
                actions[i] = _greedy(st, Qf, ((i * S + states[i]) * n_bins + bins[i]) * A, A)
            total_q += action_q[actions[i]]
        p = _price(total_q, N, d, sigma, q_floor)
        for i in range(N):
            s, a, b = states[i], actions[i], bins[i]
            r = base_tab[s, a] + p * action_q[a] + shift
            s2 = next_tab[s, a]
            b2 = _bin(total_q, action_q[a], N, lo, hi, n_bins)
            m = _rowmax(Qf, ((i * S + s2) * n_bins + b2) * A, A)
            beta = _rate(kind, counts[i, s, b, a], h, eta)
            Q[i, s, b, a] = (1.0 - beta) * Q[i, s, b, a] + beta * (r + gamma * m)
            counts[i, s, b, a] += 1
            states[i] = s2
            bins[i] = b2


@njit(cache=True)
def nplayer_value(next_tab, base_tab, action_q, d, sigma, q_floor, shift, gamma,
                  pol_cum, states0, player, horizon, n_roll, n_bins, lo, hi, bin0, seed):
    """Monte Carlo discounted return of ``player``: (mean, variance)."""
    st = make_state(seed)
    N = states0.shape[0]
    states = np.empty(N, dtype=np.int64)
    bins = np.empty(N, dtype=np.int64)
    actions = np.empty(N, dtype=np.int64)
    acc = 0.0
    acc2 = 0.0
    for _ in range(n_roll):
        states[:] = states0
        bins[:] = bin0
        total = 0.0
        disc = 1.0
        for t in range(horizon):
            total_q = 0.0
            for i in range(N):
                actions[i] = _act(st, pol_cum, i, states[i], bins[i])
                total_q += action_q[actions[i]]
            p = _price(total_q, N, d, sigma, q_floor)
            s, a = states[player], actions[player]
            total += disc * (base_tab[s, a] + p * action_q[a] + shift)
            disc *= gamma
            for i in range(N):
                bins[i] = _bin(total_q, action_q[actions[i]], N, lo, hi, n_bins)
                states[i] = next_tab[states[i], actions[i]]
        acc += total
        acc2 += total * total
    mean = acc / n_roll
    return mean, max(acc2 / n_roll - mean * mean, 0.0)


@njit(cache=True)
def nplayer_best_response(next_tab, base_tab, action_q, d, sigma, q_floor, shift, gamma,
                          pol_cum, states0, player, T, kind, h, eta, C, eps0, eps1,
                          n_bins, lo, hi, bin0, seed):
    """Async Q-learning for one player against frozen opponents.

    The learner sees its own state and the bin of the others' mean
    production. Play restarts from ``states0`` with probability 1 - gamma
    per step so visits concentrate where that profile's value is decided.
    """
    st = make_state(seed)
    N = states0.shape[0]
    S, A = next_tab.shape
    Q = np.full((S, n_bins, A), C)
    Qf = Q.reshape(-1)
    counts = np.zeros((S, n_bins, A), dtype=np.int64)
    states = states0.copy()
    bins = np.full(N, bin0, dtype=np.int64)
    actions = np.empty(N, dtype=np.int64)
    for t in range(T):
        eps = eps0 + (eps1 - eps0) * t / max(T - 1, 1)
        total_q = 0.0
        for i in range(N):
            if i == player:
                if uniform(st) < eps:
                    actions[i] = randint(st, A)
                else:
                    actions[i] = _greedy(st, Qf, (states[i] * n_bins + bins[i]) * A, A)
            else:
                actions[i] = _act(st, pol_cum, i, states[i], bins[i])
            total_q += action_q[actions[i]]
        p = _price(total_q, N, d, sigma, q_floor)
        s, a, b = states[player], actions[player], bins[player]
        r = base_tab[s, a] + p * action_q[a] + shift
        for i in range(N):
            bins[i] = _bin(total_q, action_q[actions[i]], N, lo, hi, n_bins)
            states[i] = next_tab[states[i], actions[i]]
        m = _rowmax(Qf, (states[player] * n_bins + bins[player]) * A, A)
        beta = _rate(kind, counts[s, b, a], h, eta)
        Q[s, b, a] = (1.0 - beta) * Q[s, b, a] + beta * (r + gamma * m)
        counts[s, b, a] += 1
        if uniform(st) >= gamma:
            states[:] = states0
            bins[:] = bin0
    return Q
