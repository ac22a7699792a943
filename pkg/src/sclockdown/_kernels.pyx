# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled per-day hot kernels; see ``_kernels_py`` for the reference semantics."""

import numpy as np
cimport numpy as cnp
from libc.math cimport INFINITY
from libc.stdlib cimport malloc, free, qsort

cnp.import_array()


cdef struct Claim:
    double rho
    double base
    Py_ssize_t slot


cdef int _cmp_claim(const void* a, const void* b) noexcept nogil:
    cdef double x = (<Claim*>a).rho
    cdef double y = (<Claim*>b).rho
    if x < y:
        return -1
    if x > y:
        return 1
    # stable tie-break on position
    if (<Claim*>a).slot < (<Claim*>b).slot:
        return -1
    if (<Claim*>a).slot > (<Claim*>b).slot:
        return 1
    return 0


def place_orders(const double[::1] flow, const double[::1] inventory, const cnp.int64_t[::1] customer,
                 const double[::1] demand_ratio, const cnp.int64_t[::1] target_days,
                 double inv_tau, bint floor_zero):
    cdef Py_ssize_t m = flow.shape[0], l
    cdef cnp.int64_t c
    out_arr = np.empty(m, dtype=np.float64)
    cdef double[::1] out = out_arr
    cdef double o
    with nogil:
        for l in range(m):
            c = customer[l]
            o = flow[l] * demand_ratio[c] + inv_tau * (target_days[c] * flow[l] - inventory[l])
            if floor_zero and o < 0.0:
                o = 0.0
            out[l] = o
    return out_arr


def input_ratio_min(const double[::1] inventory, const cnp.int64_t[::1] link_group,
                    const double[::1] group_a_tot, const cnp.int64_t[::1] group_ptr):
    cdef Py_ssize_t n = group_ptr.shape[0] - 1
    cdef Py_ssize_t g_n = group_a_tot.shape[0], l, g, i
    s_arr = np.zeros(g_n, dtype=np.float64)
    out_arr = np.empty(n, dtype=np.float64)
    cdef double[::1] s_tot = s_arr
    cdef double[::1] out = out_arr
    cdef double best, r
    with nogil:
        for l in range(inventory.shape[0]):
            s_tot[link_group[l]] += inventory[l]
        for i in range(n):
            best = INFINITY
            for g in range(group_ptr[i], group_ptr[i + 1]):
                r = s_tot[g] / group_a_tot[g]
                if r < best:
                    best = r
            out[i] = best
    return out_arr


def ration(const cnp.int64_t[::1] sup_ptr, const double[::1] orders, const double[::1] baseline,
           const double[::1] supply, const double[::1] demand,
           const double[::1] c_request, const double[::1] c_baseline):
    cdef Py_ssize_t n = sup_ptr.shape[0] - 1
    accepted_arr = np.array(orders, dtype=np.float64, copy=True)
    c_acc_arr = np.array(c_request, dtype=np.float64, copy=True)
    cdef double[::1] accepted = accepted_arr
    cdef double[::1] c_acc = c_acc_arr
    cdef Py_ssize_t max_deg = 0, i, j, k, m, start, deg
    for i in range(n):
        if sup_ptr[i + 1] - sup_ptr[i] > max_deg:
            max_deg = sup_ptr[i + 1] - sup_ptr[i]
    cdef Claim* claims = <Claim*>malloc((max_deg + 1) * sizeof(Claim))
    cdef double* sfx = <double*>malloc((max_deg + 2) * sizeof(double))
    if claims == NULL or sfx == NULL:
        free(claims)
        free(sfx)
        raise MemoryError()
    cdef double r, prefix, level, fill, a
    try:
        with nogil:
            for i in range(n):
                r = supply[i]
                if r >= demand[i]:
                    continue
                start = sup_ptr[i]
                deg = sup_ptr[i + 1] - start
                for j in range(deg):
                    claims[j].base = baseline[start + j]
                    claims[j].rho = orders[start + j] / baseline[start + j]
                    claims[j].slot = j
                claims[deg].base = c_baseline[i]
                claims[deg].rho = c_request[i] / c_baseline[i] if c_baseline[i] > 0 else 0.0
                claims[deg].slot = deg
                m = deg + 1
                qsort(claims, m, sizeof(Claim), _cmp_claim)

                sfx[m] = 0.0
                for j in range(m - 1, -1, -1):
                    sfx[j] = sfx[j + 1] + claims[j].base
                prefix = 0.0
                fill = 0.0
                for k in range(m):
                    level = prefix + claims[k].rho * sfx[k]
                    if level >= r:
                        fill = (r - prefix) / sfx[k]
                        break
                    prefix += claims[k].rho * claims[k].base
                for j in range(m):
                    a = claims[j].rho if claims[j].rho < fill else fill
                    a = a * claims[j].base
                    if claims[j].slot == deg:
                        c_acc[i] = a
                    else:
                        accepted[start + claims[j].slot] = a
    finally:
        free(claims)
        free(sfx)
    return accepted_arr, c_acc_arr


def update_inventory(const double[::1] inventory, const double[::1] accepted,
                     const double[::1] flow, const cnp.int64_t[::1] customer,
                     const double[::1] used_ratio):
    cdef Py_ssize_t m = inventory.shape[0], l
    out_arr = np.empty(m, dtype=np.float64)
    cdef double[::1] out = out_arr
    cdef double s
    with nogil:
        for l in range(m):
            s = inventory[l] + (accepted[l] - flow[l] * used_ratio[customer[l]])
            out[l] = s if s > 0.0 else 0.0
    return out_arr
