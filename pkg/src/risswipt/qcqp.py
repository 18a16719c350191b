"""Dense log-barrier interior-point solver for concave QCQPs.

Canonical form (real variables)::

    maximize    x' A0 x + 2 b0' x + c0           (A0 negative semidefinite)
    subject to  x' Ai x + 2 bi' x + ci <= 0      (Ai positive semidefinite)

Complex problems are mapped onto this form by stacking ``[Re z; Im z]``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.optimize

PSD_TOL = 1e-9


# --------------------------------------------------------------------------- complex <-> real


def complex_stack(z) -> np.ndarray:
    z = np.asarray(z, dtype=complex).ravel()
    return np.concatenate([z.real, z.imag])


def complex_unstack(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    n = x.size // 2
    return x[:n] + 1j * x[n:]


def hermitian_to_real(Q) -> np.ndarray:
    """Symmetric ``R`` with ``stack(z)' R stack(z) == z^H Q z`` for Hermitian ``Q``."""
    Q = np.asarray(Q, dtype=complex)
    Q = 0.5 * (Q + Q.conj().T)
    return np.block([[Q.real, -Q.imag], [Q.imag, Q.real]])


@dataclass
class ComplexQuadratic:
    """``z^H Q z + 2 Re(c^H z) + d`` over a complex vector."""

    Q: np.ndarray
    c: np.ndarray
    d: float = 0.0

    @classmethod
    def zeros(cls, n: int) -> "ComplexQuadratic":
        return cls(np.zeros((n, n), complex), np.zeros(n, complex), 0.0)

    def __call__(self, z) -> float:
        z = np.asarray(z, dtype=complex)
        return float(np.real(z.conj() @ self.Q @ z) + 2.0 * np.real(self.c.conj() @ z) + self.d)

    def scaled(self, s: float) -> "ComplexQuadratic":
        return ComplexQuadratic(self.Q * s, self.c * s, self.d * s)

    def to_real(self):
        return hermitian_to_real(self.Q), complex_stack(self.c), float(self.d)


# --------------------------------------------------------------------------- problem / result


@dataclass
class ConvexQuadraticProgram:
    A0: np.ndarray
    b0: np.ndarray
    c0: float
    constraints: list = field(default_factory=list)  # (Ai, bi, ci) triples
    x0: np.ndarray | None = None

    @property
    def dim(self) -> int:
        return self.b0.size

    @classmethod
    def from_complex(cls, objective: ComplexQuadratic, constraints, z0=None) -> "ConvexQuadraticProgram":
        A0, b0, c0 = objective.to_real()
        cons = [q.to_real() for q in constraints]
        return cls(A0, b0, c0, cons, None if z0 is None else complex_stack(z0))

    def objective(self, x) -> float:
        x = np.asarray(x, dtype=float)
        return float(x @ self.A0 @ x + 2.0 * self.b0 @ x + self.c0)

    def constraint_values(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return np.array([x @ A @ x + 2.0 * b @ x + c for A, b, c in self.constraints])

    def check_convexity(self, tol: float = PSD_TOL) -> None:
        mats = [("objective", -self.A0)] + [(f"constraint {i}", A) for i, (A, _, _) in enumerate(self.constraints)]
        for name, A in mats:
            if not A.any():
                continue
            lam = np.linalg.eigvalsh(0.5 * (A + A.T))
            if lam[0] < -tol * max(1.0, abs(lam[-1])):
                raise ValueError(f"{name} is not convex (smallest eigenvalue {lam[0]:.3e})")


@dataclass
class QcqpSolution:
    x: np.ndarray
    objective_value: float
    kkt_residual: float
    iterations: int
    status: str  # "converged" | "max_iter" | "infeasible_start"
    multipliers: np.ndarray | None = None
    stage_values: list = field(default_factory=list)


# --------------------------------------------------------------------------- solver


def kkt_residual(prob: ConvexQuadraticProgram, x, lam) -> float:
    """``max(||grad f - sum lam_i grad g_i||, max |lam_i g_i|)``; also infinite if ``lam`` has a negative entry."""
    if np.any(lam < 0):
        return np.inf
    grad = 2.0 * prob.A0 @ x + 2.0 * prob.b0
    g = prob.constraint_values(x)
    for (A, b, _), l in zip(prob.constraints, lam):
        grad = grad - l * (2.0 * A @ x + 2.0 * b)
    comp = float(np.max(np.abs(lam * g))) if lam.size else 0.0
    return max(float(np.linalg.norm(grad)), comp)


def _polish_multipliers(prob, x, lam_barrier, g_scaled):
    """Re-fit multipliers of the near-active constraints by NNLS on the stationarity equation.

    At large ``t`` the barrier estimate ``1 / (t |g|)`` inherits the relative
    rounding error of ``g``, which is what limits the stationarity residual.
    """
    best = (kkt_residual(prob, x, lam_barrier), lam_barrier)
    active = np.flatnonzero(np.abs(g_scaled) <= 1e-6)
    if active.size == 0:
        return best
    grad_f = 2.0 * prob.A0 @ x + 2.0 * prob.b0
    J = np.array([2.0 * prob.constraints[i][0] @ x + 2.0 * prob.constraints[i][1] for i in active])
    lam_act, _ = scipy.optimize.nnls(J.T, grad_f)
    lam = np.zeros_like(lam_barrier)
    lam[active] = lam_act
    cand = (kkt_residual(prob, x, lam), lam)
    return min(best, cand, key=lambda r: r[0])


def _unconstrained(prob: ConvexQuadraticProgram, tol: float) -> QcqpSolution:
    # maximize x'A0x + 2b0'x  ->  -A0 x = b0
    x, *_ = np.linalg.lstsq(-prob.A0, prob.b0, rcond=None)
    res = float(np.linalg.norm(2.0 * prob.A0 @ x + 2.0 * prob.b0))
    status = "converged" if res <= tol else "max_iter"
    return QcqpSolution(x, prob.objective(x), res, 1, status, np.zeros(0), [prob.objective(x)])


def solve(prob: ConvexQuadraticProgram, tol: float = 1e-9, max_newton: int = 200,
          mu: float = 10.0, t0: float | None = None) -> QcqpSolution:
    """Barrier method: centering by damped Newton, ``t <- mu t`` until ``m / t <= tol``."""
    m = len(prob.constraints)
    if m == 0:
        return _unconstrained(prob, tol)
    x = np.array(prob.x0 if prob.x0 is not None else np.zeros(prob.dim), dtype=float)

    n = x.size
    As = np.array([A for A, _, _ in prob.constraints])
    bs = np.array([b for _, b, _ in prob.constraints])
    cs = np.array([c for _, _, c in prob.constraints])
    # per-constraint normalization; the barrier path is unchanged, only conditioning improves
    Ax = (As.reshape(m * n, n) @ x).reshape(m, n)
    scale = np.abs(Ax @ x) + np.abs(2.0 * bs @ x) + np.abs(cs)
    scale = np.where(scale > 0, scale, 1.0)
    As, bs, cs = As / scale[:, None, None], bs / scale[:, None], cs / scale
    As_flat = As.reshape(m * n, n)

    def gvals(y, with_jac=False):
        Ay = (As_flat @ y).reshape(m, n)
        val = Ay @ y + 2.0 * bs @ y + cs
        if with_jac:
            return val, 2.0 * (Ay + bs)
        return val

    g = gvals(x)
    if np.any(g >= 0):
        return QcqpSolution(x, prob.objective(x), np.inf, 0, "infeasible_start")

    A0, b0 = prob.A0, prob.b0

    def f(y):
        return y @ A0 @ y + 2.0 * b0 @ y

    if t0 is None:
        # t minimizing the Newton decrement of the centering condition at x0, measured with the
        # barrier Hessian; near an active constraint this ignores the large normal barrier pull
        g0, J0 = gvals(x, with_jac=True)
        inv0 = 1.0 / (-g0)
        grad_f = 2.0 * A0 @ x + 2.0 * b0
        grad_b = J0.T @ inv0
        Hb = 2.0 * (inv0 @ As_flat.reshape(m, n * n)).reshape(n, n) + (J0.T * inv0**2) @ J0
        Hb += (1e-12 * np.trace(Hb) / n + 1e-300) * np.eye(n)
        try:
            u = scipy.linalg.cho_solve(scipy.linalg.cho_factor(Hb, check_finite=False), grad_f,
                                       check_finite=False)
            nf = float(grad_f @ u)
            t0 = float(grad_b @ u) / nf if nf > 0 else 1.0
        except np.linalg.LinAlgError:
            t0 = 1.0
        t0 = min(max(t0, 1.0), m / tol * 1e-3)
    t = t0
    newton = 0
    stage_values = []
    status = "max_iter"
    extra = 0
    while True:
        # centering
        prev_dec2 = np.inf
        while newton < max_newton:
            g, Jg = gvals(x, with_jac=True)
            inv = 1.0 / (-g)
            grad = -t * (2.0 * A0 @ x + 2.0 * b0) + Jg.T @ inv
            H = -2.0 * t * A0 + 2.0 * (inv @ As_flat.reshape(m, n * n)).reshape(n, n) + (Jg.T * inv**2) @ Jg
            try:
                step = -scipy.linalg.cho_solve(scipy.linalg.cho_factor(H, check_finite=False), grad,
                                               check_finite=False)
            except np.linalg.LinAlgError:
                H = H + (1e-12 * np.trace(H) / H.shape[0] + 1e-300) * np.eye(H.shape[0])
                step, *_ = np.linalg.lstsq(H, -grad, rcond=None)
            dec2 = float(-grad @ step)
            newton += 1
            # centering error costs about dec2 / (2 t) in objective, so a rough center suffices;
            # the final certificate comes from the KKT check below
            if dec2 / 2.0 <= (1e-8 if m / t <= tol else 1e-5):
                break
            if dec2 < 1e-4 and dec2 > 0.25 * prev_dec2:
                # decrement stalled at rounding level
                break
            prev_dec2 = dec2
            # phi(x + s d) - phi(x) in closed form: no cancellation between large t f terms
            grad_f = 2.0 * A0 @ x + 2.0 * b0
            lin_f, quad_f = float(grad_f @ step), float(step @ A0 @ step)
            lin_g = Jg @ step
            quad_g = (As_flat @ step).reshape(m, n) @ step
            s = 1.0
            while s >= 1e-14:
                rel = (s * lin_g + s * s * quad_g) / (-g)
                if np.all(rel < 1.0):
                    dphi = -t * (s * lin_f + s * s * quad_f) - np.sum(np.log1p(-rel))
                    if dphi <= -0.25 * s * dec2:
                        break
                s *= 0.5
            if s < 1e-14:
                break
            y = x + s * step
            if np.any(gvals(y) >= 0):
                break
            x = y
        stage_values.append(prob.objective(x))
        if newton >= max_newton:
            break
        if m / t <= tol:
            g = gvals(x)
            kkt, lam = _polish_multipliers(prob, x, 1.0 / (t * (-g)) / scale, g)
            if kkt <= tol:
                status = "converged"
                break
            extra += 1
            if extra > 2:
                break
        t *= mu

    if status != "converged":
        g = gvals(x)
        kkt, lam = _polish_multipliers(prob, x, 1.0 / (t * (-g)) / scale, g)
    return QcqpSolution(x, prob.objective(x), kkt, newton, status, lam, stage_values)
