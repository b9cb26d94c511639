"""Pure-Python discrete-event kernel for pipeline schedules.

Mirrors ``_schedule.pyx`` operation for operation so both backends give
bit-identical times.
"""

import heapq

ONE_F_ONE_B = 0
GPIPE = 1

FWD = 0
BWD = 1


def op_at(kind, pp, m, k, i):
    """(micro-batch, phase) of the i-th op executed by stage k."""
    if kind == GPIPE:
        return (i, FWD) if i < m else (i - m, BWD)
    w = min(pp - k - 1, m)
    if i < w:
        return i, FWD
    j = i - w
    steady = 2 * (m - w)
    if j < steady:
        return (w + j // 2, FWD) if j % 2 == 0 else (j // 2, BWD)
    return m - w + (j - steady), BWD


def run_schedule(pp, m, fwd, bwd, p2p, kind, start, end):
    """Simulate one step; fill ``start``/``end`` (shape (pp, m, 2)) and return the makespan.

    ``end`` must be pre-filled with -1.0. Completion events are processed in
    (time, stage, micro-batch, phase) order.
    """
    nops = 2 * m
    nxt = [0] * pp
    running = [False] * pp
    free = [0.0] * pp
    heap = []
    dur = (fwd, bwd)

    def try_start(k):
        if running[k] or nxt[k] >= nops:
            return
        j, ph = op_at(kind, pp, m, k, nxt[k])
        ready = free[k]
        if ph == FWD:
            if k > 0:
                dep = end[k - 1, j, FWD]
                if dep < 0.0:
                    return
                ready = max(ready, dep + p2p)
        else:
            if k < pp - 1:
                dep = end[k + 1, j, BWD]
                if dep < 0.0:
                    return
                ready = max(ready, dep + p2p)
            own = end[k, j, FWD]
            if own < 0.0:
                return
            ready = max(ready, own)
        start[k, j, ph] = ready
        heapq.heappush(heap, (ready + dur[ph], k, j, ph))
        running[k] = True

    for k in range(pp):
        try_start(k)
    makespan = 0.0
    done = 0
    while heap:
        t, k, j, ph = heapq.heappop(heap)
        end[k, j, ph] = t
        running[k] = False
        free[k] = t
        nxt[k] += 1
        done += 1
        if t > makespan:
            makespan = t
        try_start(k)
        if ph == FWD and k + 1 < pp:
            try_start(k + 1)
        elif ph == BWD and k > 0:
            try_start(k - 1)
    if done != pp * nops:
        raise RuntimeError(f"schedule deadlocked after {done} of {pp * nops} ops")
    return makespan
