"""Compiled direct-method event loop.

The rate at buffer cell ``i`` is ``table[code(i)]`` where ``code`` packs the
occupancies of cells ``i - I .. i + I`` in base ``cap + 1``.  Rates are kept
in a Fenwick tree over the whole buffer for O(log n) site selection.

The loop consumes pre-drawn uniforms two at a time (waiting time, site) and
returns a status telling the caller what it needs before resuming.
"""
import numpy as np
from numba import njit

DONE = 0
NEED_UNIFORMS = 1
NEED_GROW = 2
NEED_EVENT_SPACE = 3
FROZEN = 4

# fstate slots
T, INT_F, INT_G, F_NOW, G_NOW = range(5)
# istate slots
TIP, LEFT, MASS, EVENTS, QV, U_POS, CK_POS, EV_POS = range(8)

REBUILD_EVERY = 4096


@njit(cache=True, nogil=True)
def tree_build(rates, tree):
    n = rates.shape[0]
    tree[0] = 0.0
    for k in range(1, n + 1):
        tree[k] = rates[k - 1]
    for k in range(1, n + 1):
        parent = k + (k & -k)
        if parent <= n:
            tree[parent] += tree[k]


@njit(cache=True, nogil=True)
def tree_add(tree, i, delta):
    n = tree.shape[0] - 1
    k = i + 1
    while k <= n:
        tree[k] += delta
        k += k & -k


@njit(cache=True, nogil=True)
def tree_total(tree):
    n = tree.shape[0] - 1
    s = 0.0
    k = n
    while k > 0:
        s += tree[k]
        k -= k & -k
    return s


@njit(cache=True, nogil=True)
def tree_search(tree, rates, target):
    """Smallest index whose inclusive prefix sum exceeds ``target``."""
    n = tree.shape[0] - 1
    pos = 0
    step = 1
    while step * 2 <= n:
        step *= 2
    rem = target
    while step > 0:
        nxt = pos + step
        if nxt <= n and tree[nxt] <= rem:
            pos = nxt
            rem -= tree[nxt]
        step //= 2
    # rounding can leave us on a zero-rate cell; fall back to the nearest
    # positive cell below, then above
    if pos >= n:
        pos = n - 1
    if rates[pos] > 0.0:
        return pos
    j = pos
    while j >= 0 and rates[j] <= 0.0:
        j -= 1
    if j >= 0:
        return j
    j = pos
    while j < n and rates[j] <= 0.0:
        j += 1
    return j


@njit(cache=True, nogil=True)
def cell_rate(eta, i, table, radix, I):
    code = 0
    for j in range(i + I, i - I - 1, -1):
        code = code * radix + eta[j]
    return table[code]


@njit(cache=True, nogil=True)
def refresh_all(eta, rates, tree, table, radix, I, lo, hi):
    """Recompute rates on cells ``lo..hi`` from scratch and rebuild the tree."""
    rates[:] = 0.0
    for i in range(lo, hi + 1):
        rates[i] = cell_rate(eta, i, table, radix, I)
    tree_build(rates, tree)


@njit(cache=True, nogil=True)
def drift(rates, tip, R):
    f = 0.0
    g = 0.0
    for k in range(1, R + 1):
        r = rates[tip + k]
        f += k * r
        g += k * k * r
    return f, g


@njit(cache=True, nogil=True)
def advance(eta, rates, tree, table, cap, I, R, margin, origin, t_end,
            uniforms, ck_times, ck_out, ev_times, ev_sites, fstate, istate):
    """Run events until ``t_end`` or until the caller must intervene.

    Cell ``i`` of the buffer is lattice site ``origin + i``.  ``ck_out[k]``
    receives ``(t, X, Y, mass, int_f, int_g, qv)`` for checkpoint ``k``.
    """
    radix = cap + 1
    n = eta.shape[0]
    n_ck = ck_times.shape[0]
    record = ev_times.shape[0] > 0
    while True:
        if istate[U_POS] + 2 > uniforms.shape[0]:
            return NEED_UNIFORMS
        if record and istate[EV_POS] >= ev_times.shape[0]:
            return NEED_EVENT_SPACE
        total = tree_total(tree)
        time = fstate[T]
        u1 = uniforms[istate[U_POS]]
        u2 = uniforms[istate[U_POS] + 1]
        if total > 0.0:
            t_next = time - np.log1p(-u1) / total
        else:
            t_next = np.inf
        # checkpoints strictly before the next event see the current state
        while istate[CK_POS] < n_ck and ck_times[istate[CK_POS]] < t_next \
                and ck_times[istate[CK_POS]] <= t_end:
            k = istate[CK_POS]
            tc = ck_times[k]
            ck_out[k, 0] = tc
            ck_out[k, 1] = istate[TIP] + origin
            ck_out[k, 2] = istate[LEFT] + origin
            ck_out[k, 3] = istate[MASS]
            ck_out[k, 4] = fstate[INT_F] + fstate[F_NOW] * (tc - time)
            ck_out[k, 5] = fstate[INT_G] + fstate[G_NOW] * (tc - time)
            ck_out[k, 6] = istate[QV]
            istate[CK_POS] += 1
        if t_next > t_end:
            if total <= 0.0 and t_end == np.inf:
                return FROZEN
            istate[U_POS] += 2
            fstate[INT_F] += fstate[F_NOW] * (t_end - time)
            fstate[INT_G] += fstate[G_NOW] * (t_end - time)
            fstate[T] = t_end
            return DONE

        i = tree_search(tree, rates, u2 * total)
        istate[U_POS] += 2
        fstate[INT_F] += fstate[F_NOW] * (t_next - time)
        fstate[INT_G] += fstate[G_NOW] * (t_next - time)
        fstate[T] = t_next

        eta[i] += 1
        istate[MASS] += 1
        if i > istate[TIP]:
            jump = i - istate[TIP]
            istate[QV] += jump * jump
            istate[TIP] = i
        if i < istate[LEFT]:
            istate[LEFT] = i
        istate[EVENTS] += 1
        if record:
            ev_times[istate[EV_POS]] = t_next
            ev_sites[istate[EV_POS]] = i + origin
            istate[EV_POS] += 1

        if istate[EVENTS] % REBUILD_EVERY == 0:
            refresh_all(eta, rates, tree, table, radix, I,
                        istate[LEFT] - I, istate[TIP] + I)
        else:
            for j in range(i - I, i + I + 1):
                r = cell_rate(eta, j, table, radix, I)
                d = r - rates[j]
                if d != 0.0:
                    rates[j] = r
                    tree_add(tree, j, d)
        f, g = drift(rates, istate[TIP], R)
        fstate[F_NOW] = f
        fstate[G_NOW] = g

        if istate[TIP] + margin >= n or istate[LEFT] - margin < 0:
            return NEED_GROW
