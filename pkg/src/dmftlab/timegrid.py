"""Uniform time grid, causal two-time storage and the R_A / C_A triangular solve."""
import struct

import numpy as np

MAGIC = b"DMFT"
FORMAT_VERSION = 1


class TimeGrid:
    def __init__(self, eta, horizon=0):
        if not eta > 0:
            raise ValueError("eta must be > 0")
        self.eta = float(eta)
        self.horizon = int(horizon)

    def t(self, j):
        # index based so that t_j = j*eta exactly, no accumulated sums
        return np.asarray(j) * self.eta

    def times(self, n=None):
        n = self.horizon + 1 if n is None else n
        return np.arange(n) * self.eta


class CausalField:
    """Two-time field F(i, j) on the grid, stored in a dense square buffer.

    Non-symmetric fields keep zeros above the diagonal, so F(i, j) = 0 for
    j > i. Symmetric fields mirror every appended row into the column.
    """

    def __init__(self, symmetric=False, capacity=16, dtype=float):
        self.symmetric = bool(symmetric)
        self.buf = np.zeros((capacity, capacity), dtype=dtype)
        self.n = 0

    @property
    def horizon(self):
        return self.n - 1

    def _grow(self, need):
        cap = self.buf.shape[0]
        if need <= cap:
            return
        new = max(need, 2 * cap)
        b = np.zeros((new, new), dtype=self.buf.dtype)
        b[:self.n, :self.n] = self.buf[:self.n, :self.n]
        self.buf = b

    def extend(self, row):
        row = np.asarray(row)
        if row.shape != (self.n + 1,):
            raise ValueError("new row must have length %d, got %s" % (self.n + 1, row.shape))
        self._grow(self.n + 1)
        i = self.n
        self.buf[i, :i + 1] = row
        if self.symmetric:
            self.buf[:i, i] = row[:i]
        self.n += 1

    def __getitem__(self, ij):
        i, j = ij
        if i >= self.n or j >= self.n or i < 0 or j < 0:
            raise IndexError("index (%d, %d) outside horizon %d" % (i, j, self.horizon))
        return self.buf[i, j]

    def row(self, i):
        return self.buf[i, :i + 1]

    def array(self):
        """Dense n x n view (upper part zero for causal fields)."""
        return self.buf[:self.n, :self.n]

    def lower_entries(self):
        idx = np.tril_indices(self.n)
        return self.buf[:self.n, :self.n][idx]

    @classmethod
    def from_array(cls, a, symmetric=False):
        a = np.asarray(a)
        f = cls(symmetric=symmetric, capacity=max(len(a), 1), dtype=a.dtype)
        for i in range(len(a)):
            f.extend(a[i, :i + 1])
        return f

    def dump(self, path, eta):
        if self.n == 0:
            raise ValueError("cannot dump an empty field")
        with open(path, "wb") as fh:
            fh.write(MAGIC)
            fh.write(struct.pack("<IId", FORMAT_VERSION, self.horizon, float(eta)))
            fh.write(np.ascontiguousarray(self.lower_entries().real, dtype="<f8").tobytes())

    @classmethod
    def load(cls, path, symmetric=False):
        with open(path, "rb") as fh:
            raw = fh.read()
        if raw[:4] != MAGIC:
            raise ValueError("bad magic")
        version, horizon, eta = struct.unpack("<IId", raw[4:20])
        if version != FORMAT_VERSION:
            raise ValueError("unsupported dump version %d" % version)
        n = horizon + 1
        vals = np.frombuffer(raw[20:], dtype="<f8")
        if len(vals) != n * (n + 1) // 2:
            raise ValueError("truncated dump")
        a = np.zeros((n, n))
        a[np.tril_indices(n)] = vals
        return cls.from_array(a, symmetric=symmetric), eta


def causal_sum(F, G, t, tp, eta, lo=0, hi=None):
    """eta * sum_{s=lo..hi} F(t,s) G(s,t'), both endpoints included (default hi = t)."""
    hi = t if hi is None else hi
    n = min(F.n, G.n)
    if t >= F.n or tp >= G.n or hi >= n:
        raise IndexError("index beyond horizon")
    if hi < lo:
        return 0.0
    s = np.arange(lo, hi + 1)
    fa = F.array()[t, s]
    ga = G.array()[s, tp]
    return eta * float(np.dot(fa, ga))


class ResponseSolver:
    """Row-by-row computation of R_A = (1/eta)(I + eta S_R)^-1 and
    C_A = -eta^2 R_A S_C R_A^T.

    Row T needs S_R and S_C up to row T only; earlier rows are never touched.
    """

    def __init__(self, capacity, eta, dtype=float):
        self.eta = eta
        self.RA = np.zeros((capacity, capacity), dtype=dtype)
        self.CA = np.zeros((capacity, capacity), dtype=dtype)
        self.n = 0

    def add_row(self, sigR_row, SC):
        """sigR_row: S_R(T, 0..T). SC: square buffer holding S_C up to T (symmetric)."""
        T = self.n
        eta = self.eta
        RA, CA = self.RA, self.CA
        d = 1.0 + eta * sigR_row[T]
        if T > 0:
            RA[T, :T] = -(eta / d) * (sigR_row[:T] @ RA[:T, :T])
        RA[T, T] = 1.0 / (eta * d)
        x = RA[T, :T + 1] @ SC[:T + 1, :T + 1]
        row = -eta * eta * (RA[:T + 1, :T + 1] @ x)
        CA[T, :T + 1] = row
        CA[:T, T] = row[:T]
        self.n = T + 1
        return RA[T, :T + 1], row


def solve_response_correlation(sigma_R, sigma_C, eta):
    """Full solve for given CausalFields. Returns (R_A, C_A) CausalFields."""
    n = sigma_R.n
    if sigma_C.n != n:
        raise ValueError("sigma_R and sigma_C horizons differ")
    SR = sigma_R.array()
    SC = sigma_C.array()
    if not sigma_C.symmetric:
        SC = np.tril(SC) + np.tril(SC, -1).T
    rs = ResponseSolver(n, eta, dtype=np.result_type(SR, SC))
    for T in range(n):
        rs.add_row(SR[T, :T + 1], SC)
    return (CausalField.from_array(rs.RA, symmetric=False),
            CausalField.from_array(rs.CA, symmetric=True))
