"""Euler engine for causal two-time systems with one or two field species.

Species 0 is the "diagonal" pair (C_d, R_d) carrying the unit response jump,
species 1 (if present) the "off-diagonal" pair (C_o, R_o). A plugin supplies
the self-energies, memory kernels and scalar updates; the engine owns the
storage, the R_A / C_A solve and the field updates

  D_x(T,tb) = -nu C_x(T,tb) + src_x(tb)
              - eta sum_y sum_s KC[x,y](s) C_y(tb,s)
              - eta sum_y sum_s KCR[x,y](s) R_y(tb,s)
  C_x(T+1,tb) = C_x(T,tb) + eta D_x(T,tb),   C_x(T+1,T+1) = C_x(T,T) + 2 eta D_x(T,T)
  R_x(T+1,tb) = (1 - eta nu) R_x(T,tb) + [x=0][tb=T]
                - eta^2 sum_y sum_s KR[x,y](s) R_y(s,tb)

with nu(T) fixed by the spherical constraint: nu = D_0(T,T) + nu C_0(T,T).
"""
import numpy as np

from .timegrid import ResponseSolver


class SolverAbort(RuntimeError):
    def __init__(self, step, msg="non-finite values"):
        super().__init__("%s at step %d" % (msg, step))
        self.step = step


class Engine:
    def __init__(self, plugin, n_steps, eta, nspecies, dtype=float, c_init=None):
        N = n_steps + 1
        self.N = N
        self.eta = eta
        self.ns = nspecies
        self.dtype = dtype
        self.C = [np.zeros((N, N), dtype=dtype) for _ in range(nspecies)]
        self.R = [np.zeros((N, N), dtype=dtype) for _ in range(nspecies)]
        self.SC = np.zeros((N, N), dtype=dtype)
        self.SR = np.zeros((N, N), dtype=dtype)
        self.resp = ResponseSolver(N, eta, dtype=dtype)
        self.nu = np.zeros(N, dtype=dtype)
        c_init = [1.0, 0.0][:nspecies] if c_init is None else c_init
        for x in range(nspecies):
            self.C[x][0, 0] = c_init[x]
        self.T = 0  # rows 0..T of C, R filled
        self.plugin = plugin
        plugin.attach(self)

    @property
    def RA(self):
        return self.resp.RA

    @property
    def CA(self):
        return self.resp.CA

    def _response_row(self, T):
        srow, crow = self.plugin.sigma(T)
        self.SR[T, :T + 1] = srow
        self.SC[T, :T + 1] = crow
        self.SC[:T, T] = crow[:T]
        self.resp.add_row(self.SR[T, :T + 1], self.SC)

    def _rest(self, T):
        eta = self.eta
        ns = self.ns
        n = T + 1
        KC, KCR, KR, src = self.plugin.kernels(T)
        # D without the -nu C term; one gemm per species and kernel family
        rest = np.zeros((ns, n), dtype=self.dtype) if src is None else np.array(src, dtype=self.dtype)
        mem_R = np.zeros((ns, n), dtype=self.dtype)
        for y in range(ns):
            Cy = self.C[y][:n, :n]
            Ry = self.R[y][:n, :n]
            rest -= eta * (Cy @ KC[:, y, :].T).T
            rest -= eta * (Ry @ KCR[:, y, :].T).T
            mem_R += KR[:, y, :] @ Ry
        nu = rest[0, T]
        self.nu[T] = nu
        return rest, mem_R, nu

    def step(self):
        T = self.T
        eta = self.eta
        n = T + 1
        self._response_row(T)
        rest, mem_R, nu = self._rest(T)
        self.plugin.scalars(T, nu)
        for x in range(self.ns):
            Cx = self.C[x]
            D = rest[x] - nu * Cx[T, :n]
            new = Cx[T, :n] + eta * D
            Cx[n, :n] = new
            Cx[:n, n] = new
            Cx[n, n] = Cx[T, T] + 2 * eta * D[T]
            Rx = self.R[x]
            rn = (1 - eta * nu) * Rx[T, :n] - eta * eta * mem_R[x]
            if x == 0:
                rn[T] += 1.0
            Rx[n, :n] = rn
        self.T = n
        if not np.isfinite(nu) or not np.all(np.isfinite(self.C[0][n, :n + 1])):
            raise SolverAbort(n)

    def run(self, progress=None):
        while self.T < self.N - 1:
            self.step()
            if progress is not None:
                progress(self.T)
        # close the last row so that R_A, C_A and observables exist at the horizon
        self._response_row(self.T)
        self._rest(self.T)
        self.plugin.finalize(self.T)
        return self
