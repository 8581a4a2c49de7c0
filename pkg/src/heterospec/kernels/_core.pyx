# cython: boundscheck=False, wraparound=False, initializedcheck=False
"""Compiled matching kernels.  Semantics are defined by kernels/_reference.py;
the two backends must agree bit for bit."""

import numpy as np

backend = "compiled"

COUNT_CAP = 1 << 61

cdef long long COUNT_CAP_C = (<long long>1) << 61


cdef class Matcher:
    cdef object _children_arr
    cdef object _accept_arr
    cdef object _bytemap_arr
    cdef int[:, ::1] _children
    cdef int[::1] _accept
    cdef int[::1] _bytemap
    cdef int _max_len

    def __init__(self, texts):
        texts = [bytes(t) for t in texts]
        if len(set(texts)) != len(texts):
            raise ValueError("duplicate token texts")
        alphabet = sorted({b for t in texts for b in t})
        bytemap = np.full(256, -1, dtype=np.int32)
        for sym, b in enumerate(alphabet):
            bytemap[b] = sym
        n_sym = max(len(alphabet), 1)
        cap_nodes = 1 + sum(len(t) for t in texts)
        children = np.full((cap_nodes, n_sym), -1, dtype=np.int32)
        accept = np.full(cap_nodes, -1, dtype=np.int32)
        next_node = 1
        for tid, text in enumerate(texts):
            node = 0
            for b in text:
                sym = bytemap[b]
                child = children[node, sym]
                if child < 0:
                    child = next_node
                    children[node, sym] = child
                    next_node += 1
                node = child
            accept[node] = tid
        self._children_arr = children[:next_node].copy()
        self._accept_arr = accept[:next_node].copy()
        self._bytemap_arr = bytemap
        self._children = self._children_arr
        self._accept = self._accept_arr
        self._bytemap = self._bytemap_arr
        self._max_len = max((len(t) for t in texts), default=0)

    cpdef tuple longest_match(self, bytes data, Py_ssize_t pos):
        cdef const unsigned char* buf = data
        cdef Py_ssize_t n = len(data)
        cdef Py_ssize_t i = pos
        cdef Py_ssize_t best_end = pos
        cdef int node = 0
        cdef int best_id = -1
        cdef int sym
        while i < n:
            sym = self._bytemap[buf[i]]
            if sym < 0:
                break
            node = self._children[node, sym]
            if node < 0:
                break
            i += 1
            if self._accept[node] >= 0:
                best_id = self._accept[node]
                best_end = i
        return best_id, best_end

    cpdef list matches_at(self, bytes data, Py_ssize_t pos):
        cdef const unsigned char* buf = data
        cdef Py_ssize_t n = len(data)
        cdef Py_ssize_t i = pos
        cdef int node = 0
        cdef int sym
        out = []
        while i < n:
            sym = self._bytemap[buf[i]]
            if sym < 0:
                break
            node = self._children[node, sym]
            if node < 0:
                break
            i += 1
            if self._accept[node] >= 0:
                out.append((self._accept[node], i))
        return out

    cpdef tuple tokenize_ids(self, bytes data):
        cdef const unsigned char* buf = data
        cdef Py_ssize_t n = len(data)
        cdef Py_ssize_t pos = 0
        cdef Py_ssize_t i, best_end
        cdef int node, sym, best_id
        ids = []
        while pos < n:
            node = 0
            best_id = -1
            best_end = pos
            i = pos
            while i < n:
                sym = self._bytemap[buf[i]]
                if sym < 0:
                    break
                node = self._children[node, sym]
                if node < 0:
                    break
                i += 1
                if self._accept[node] >= 0:
                    best_id = self._accept[node]
                    best_end = i
            if best_id < 0:
                return ids, pos
            ids.append(best_id)
            pos = best_end
        return ids, -1

    cpdef bint has_token_with_prefix(self, bytes data, Py_ssize_t pos):
        cdef const unsigned char* buf = data
        cdef Py_ssize_t n = len(data)
        cdef Py_ssize_t i = pos
        cdef int node = 0
        cdef int sym
        while i < n:
            sym = self._bytemap[buf[i]]
            if sym < 0:
                return False
            node = self._children[node, sym]
            if node < 0:
                return False
            i += 1
        return True

    cpdef tuple count_compositions(self, bytes data, Py_ssize_t max_parts, long long op_budget):
        cdef Py_ssize_t n = len(data)
        if max_parts > n:
            max_parts = n
        if n == 0 or max_parts <= 0:
            return 0, 0, False
        ways_arr = np.zeros((n + 1, max_parts + 1), dtype=np.int64)
        cdef long long[:, ::1] ways = ways_arr
        ways[n, 0] = 1
        cdef long long ops = 0
        cdef long long w, count
        cdef bint saturated = False
        cdef const unsigned char* buf = data
        cdef Py_ssize_t pos, i, k
        cdef int node, sym
        for pos in range(n - 1, -1, -1):
            ops += 1
            if ops > op_budget:
                return 0, int(ops), True
            node = 0
            i = pos
            while i < n:
                sym = self._bytemap[buf[i]]
                if sym < 0:
                    break
                node = self._children[node, sym]
                if node < 0:
                    break
                i += 1
                if self._accept[node] >= 0:
                    ops += 1
                    if ops > op_budget:
                        return 0, int(ops), True
                    for k in range(1, max_parts + 1):
                        w = ways[i, k - 1]
                        if w != 0:
                            ways[pos, k] += w
                            if ways[pos, k] > COUNT_CAP_C:
                                ways[pos, k] = COUNT_CAP_C
                                saturated = True
        count = 0
        for k in range(1, max_parts + 1):
            count += ways[0, k]
            if count > COUNT_CAP_C:
                count = COUNT_CAP_C
                saturated = True
        return int(count), int(ops), bool(saturated)
