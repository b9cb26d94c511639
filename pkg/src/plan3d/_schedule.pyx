# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled discrete-event kernel; same algorithm as ``_schedule_py``."""

from libc.stdlib cimport free, malloc

DEF FWD = 0
DEF BWD = 1
DEF GPIPE = 1


cdef struct Event:
    double time
    int stage
    int mb
    int phase


cdef inline bint _less(Event* a, Event* b) noexcept nogil:
    if a.time != b.time:
        return a.time < b.time
    if a.stage != b.stage:
        return a.stage < b.stage
    if a.mb != b.mb:
        return a.mb < b.mb
    return a.phase < b.phase


cdef inline void _push(Event* heap, int* size, Event ev) noexcept nogil:
    cdef int i = size[0]
    cdef int parent
    size[0] += 1
    heap[i] = ev
    while i > 0:
        parent = (i - 1) >> 1
        if _less(&heap[i], &heap[parent]):
            heap[i], heap[parent] = heap[parent], heap[i]
            i = parent
        else:
            break


cdef inline Event _pop(Event* heap, int* size) noexcept nogil:
    cdef Event top = heap[0]
    cdef int n, i, l, r, best
    size[0] -= 1
    n = size[0]
    if n > 0:
        heap[0] = heap[n]
        i = 0
        while True:
            l = 2 * i + 1
            r = l + 1
            best = i
            if l < n and _less(&heap[l], &heap[best]):
                best = l
            if r < n and _less(&heap[r], &heap[best]):
                best = r
            if best == i:
                break
            heap[i], heap[best] = heap[best], heap[i]
            i = best
    return top


cdef inline void _op_at(int kind, int pp, int m, int k, int i, int* mb, int* ph) noexcept nogil:
    cdef int w, j, steady
    if kind == GPIPE:
        if i < m:
            mb[0] = i
            ph[0] = FWD
        else:
            mb[0] = i - m
            ph[0] = BWD
        return
    w = pp - k - 1
    if m < w:
        w = m
    if i < w:
        mb[0] = i
        ph[0] = FWD
        return
    j = i - w
    steady = 2 * (m - w)
    if j < steady:
        if j % 2 == 0:
            mb[0] = w + j // 2
            ph[0] = FWD
        else:
            mb[0] = j // 2
            ph[0] = BWD
        return
    mb[0] = m - w + (j - steady)
    ph[0] = BWD


cdef inline void _try_start(int k, int kind, int pp, int m, double fwd, double bwd, double p2p,
                            int* nxt, char* running, double* free_at,
                            double[:, :, ::1] start, double[:, :, ::1] end,
                            Event* heap, int* size) noexcept nogil:
    cdef int j, ph
    cdef double ready, dep, own
    cdef Event ev
    if running[k] or nxt[k] >= 2 * m:
        return
    _op_at(kind, pp, m, k, nxt[k], &j, &ph)
    ready = free_at[k]
    if ph == FWD:
        if k > 0:
            dep = end[k - 1, j, FWD]
            if dep < 0.0:
                return
            if dep + p2p > ready:
                ready = dep + p2p
    else:
        if k < pp - 1:
            dep = end[k + 1, j, BWD]
            if dep < 0.0:
                return
            if dep + p2p > ready:
                ready = dep + p2p
        own = end[k, j, FWD]
        if own < 0.0:
            return
        if own > ready:
            ready = own
    start[k, j, ph] = ready
    ev.time = ready + (fwd if ph == FWD else bwd)
    ev.stage = k
    ev.mb = j
    ev.phase = ph
    _push(heap, size, ev)
    running[k] = 1


def run_schedule(int pp, int m, double fwd, double bwd, double p2p, int kind,
                 double[:, :, ::1] start, double[:, :, ::1] end):
    """Simulate one step; fill ``start``/``end`` (shape (pp, m, 2)) and return the makespan.

    ``end`` must be pre-filled with -1.0.
    """
    cdef int* nxt = <int*> malloc(pp * sizeof(int))
    cdef char* running = <char*> malloc(pp * sizeof(char))
    cdef double* free_at = <double*> malloc(pp * sizeof(double))
    cdef Event* heap = <Event*> malloc((pp + 1) * sizeof(Event))
    cdef int size = 0
    cdef int k
    cdef long done = 0
    cdef double makespan = 0.0
    cdef Event ev
    if not nxt or not running or not free_at or not heap:
        free(nxt); free(running); free(free_at); free(heap)
        raise MemoryError()
    try:
        with nogil:
            for k in range(pp):
                nxt[k] = 0
                running[k] = 0
                free_at[k] = 0.0
            for k in range(pp):
                _try_start(k, kind, pp, m, fwd, bwd, p2p, nxt, running, free_at, start, end, heap, &size)
            while size > 0:
                ev = _pop(heap, &size)
                k = ev.stage
                end[k, ev.mb, ev.phase] = ev.time
                running[k] = 0
                free_at[k] = ev.time
                nxt[k] += 1
                done += 1
                if ev.time > makespan:
                    makespan = ev.time
                _try_start(k, kind, pp, m, fwd, bwd, p2p, nxt, running, free_at, start, end, heap, &size)
                if ev.phase == FWD and k + 1 < pp:
                    _try_start(k + 1, kind, pp, m, fwd, bwd, p2p, nxt, running, free_at, start, end, heap, &size)
                elif ev.phase == BWD and k > 0:
                    _try_start(k - 1, kind, pp, m, fwd, bwd, p2p, nxt, running, free_at, start, end, heap, &size)
    finally:
        free(nxt); free(running); free(free_at); free(heap)
    if done != <long> pp * 2 * m:
        raise RuntimeError(f"schedule deadlocked after {done} of {pp * 2 * m} ops")
    return makespan
