"""Backward-Euler Newton stepping shared by the fine and upscaled solvers.

Both solvers reduce to the semi-discrete form

    M dT/dt + A T = S(T) - b

where ``S(T) = G^T (c * f(G T))`` is a pointwise nonlinear source sampled
at quadrature points (``G`` interpolates unknowns to the points) and ``b``
collects boundary loads.  One step solves

    (M + dt A) T - dt S(T) = M T_old - dt b

by Newton's method.  The linear part is factorized once per ``dt`` and
used to precondition GMRES on the full Jacobian.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .fem import Factorized, SolverError

NEWTON_STEP_TOL = 1e-10
NEWTON_RES_RTOL = 1e-13  # relative to the largest term of the step equation
NEWTON_STALL_RTOL = 1e-9  # accepted once the update is negligible
NEWTON_MAX_ITER = 30


@dataclass
class StepInfo:
    newton_iters: int = 0
    residuals: list = field(default_factory=list)
    linear_iters: int = 0


class PointSource:
    """Pointwise source ``S(T) = G^T (c * f(G T))``.

    ``func(values) -> (f, df)`` is evaluated at the sample points.
    """

    def __init__(self, G, coeff, func):
        self.G = sp.csr_matrix(G)
        self.Gt = self.G.T.tocsr()
        self.coeff = np.asarray(coeff, float)
        self.func = func
        self._df = None

    def __call__(self, T):
        f, df = self.func(self.G @ T)
        self._df = self.coeff * df
        return self.Gt @ (self.coeff * f)

    def jvp(self, v):
        """Jacobian-vector product at the last evaluation point."""
        return self.Gt @ (self._df * (self.G @ v))

    def jacobian(self):
        return self.Gt @ sp.diags(self._df) @ self.G


class BackwardEuler:
    """Newton solver for one implicit step of the semi-discrete system."""

    def __init__(self, M, A, source: PointSource | None):
        self.M = sp.csr_matrix(M)
        self.A = sp.csr_matrix(A)
        self.source = source
        self._dt = None
        self._lhs = None
        self._lu = None

    def _prepare(self, dt):
        if self._dt != dt:
            self._lhs = (self.M + dt * self.A).tocsr()
            self._lu = Factorized(self._lhs)
            self._dt = dt

    def step(self, T_old, dt, b, guess=None, info: StepInfo | None = None):
        if not dt > 0:
            raise ValueError(f"dt must be positive, got {dt}")
        self._prepare(dt)
        info = info if info is not None else StepInfo()
        rhs = self.M @ T_old - dt * b
        T = np.array(T_old if guess is None else guess, dtype=float)
        lhs, lu = self._lhs, self._lu
        n = len(T)

        if self.source is None:
            T = lu.solve(rhs)
            info.newton_iters = 1
            info.residuals.append(float(np.abs(lhs @ T - rhs).max(initial=0.0)))
            return T, info

        rhs_scale = float(np.abs(rhs).max(initial=0.0))
        small_step = False
        for it in range(1, NEWTON_MAX_ITER + 1):
            LT, S = lhs @ T, dt * self.source(T)
            F = LT - S - rhs
            rnorm = float(np.abs(F).max(initial=0.0))
            scale = max(rhs_scale, float(np.abs(LT).max(initial=0.0)), float(np.abs(S).max(initial=0.0)), 1e-300)
            info.residuals.append(rnorm)
            if rnorm <= NEWTON_RES_RTOL * scale or (small_step and rnorm <= NEWTON_STALL_RTOL * scale):
                info.newton_iters = it - 1
                return T, info
            src = self.source

            def matvec(v, src=src):
                return lhs @ v - dt * src.jvp(v)

            J = spla.LinearOperator((n, n), matvec=matvec)
            P = spla.LinearOperator((n, n), matvec=lu.solve)
            counter = [0]

            def cb(_, counter=counter):
                counter[0] += 1

            delta, code = spla.gmres(
                J, -F, M=P, rtol=1e-12, atol=1e-300, restart=20, maxiter=5,
                callback=cb, callback_type="pr_norm",
            )
            info.linear_iters += counter[0]
            if code < 0 or not np.all(np.isfinite(delta)):
                raise SolverError("GMRES breakdown in Newton step", residual=rnorm, history=info.residuals)
            T = T + delta
            small_step = float(np.abs(delta).max(initial=0.0)) <= NEWTON_STEP_TOL * max(1.0, float(np.abs(T).max()))
        raise SolverError(
            f"Newton did not converge in {NEWTON_MAX_ITER} iterations", residual=info.residuals[-1],
            history=info.residuals,
        )
