"""Block-diagonal estimator gain synthesis and Schur-stability verification.

The closed-loop error matrix is Ahat = W(x)A - K * D_C * (W(x)A) with K
block-diagonal (one n-by-n block per sensor). The primary synthesis route is
the iterative cone-complementarity LMI; a spectral-descent fallback covers
instances where the LMI path stalls or is too large. Either way, any
returned gain is certified by an independent eigensolve.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.linalg

from .observability import SensorSuite

PD_TOL = 1e-9


class GainSynthesisError(RuntimeError):
    pass


@dataclass
class BlockDiagGain:
    """Per-sensor n-by-n gain blocks K_i."""

    blocks: list[np.ndarray]

    def __post_init__(self):
        self.blocks = [np.asarray(b, dtype=float) for b in self.blocks]
        n = self.blocks[0].shape[0]
        for b in self.blocks:
            if b.shape != (n, n):
                raise ValueError("all gain blocks must be n-by-n")

    @property
    def m(self) -> int:
        return len(self.blocks)

    @property
    def n(self) -> int:
        return self.blocks[0].shape[0]

    @staticmethod
    def zero(m: int, n: int) -> "BlockDiagGain":
        return BlockDiagGain([np.zeros((n, n)) for _ in range(m)])

    def assemble(self) -> np.ndarray:
        return scipy.linalg.block_diag(*self.blocks)

    def to_json_obj(self) -> dict:
        return {"m": self.m, "n": self.n,
                "blocks": [[float(f"{x:.17g}") for x in b.ravel()]
                           for b in self.blocks]}

    def save(self, path) -> None:
        with open(path, "w") as f:
            json.dump(self.to_json_obj(), f)
            f.write("\n")

    @staticmethod
    def from_json_obj(obj: dict) -> "BlockDiagGain":
        n = int(obj["n"])
        return BlockDiagGain([np.array(b, dtype=float).reshape(n, n)
                              for b in obj["blocks"]])

    @staticmethod
    def load(path) -> "BlockDiagGain":
        with open(path) as f:
            return BlockDiagGain.from_json_obj(json.load(f))


@dataclass
class ClosedLoop:
    A_hat: np.ndarray
    spectral_radius: float
    W: np.ndarray
    A: np.ndarray
    D_C: np.ndarray
    K: BlockDiagGain


@dataclass
class LmiIterate:
    iteration: int
    trace_value: float
    rho: float
    min_eig_stability_block: float
    min_eig_coupling_block: float


@dataclass
class SynthesisReport:
    history: list[LmiIterate]
    termination: str  # "schur" | "trace" | "max_iter" | "stable_plant" | "fallback"
    rho: float
    method: str  # "lmi" | "fallback" | "zero"

    def to_json_obj(self) -> dict:
        return {"termination": self.termination,
                "method": self.method,
                "rho": float(f"{self.rho:.17g}"),
                "history": [{"t": it.iteration,
                             "trace_value": float(f"{it.trace_value:.17g}"),
                             "rho": float(f"{it.rho:.17g}")}
                            for it in self.history]}


def spectral_radius(M: np.ndarray) -> float:
    return float(max(abs(np.linalg.eigvals(M)))) if M.size else 0.0


def spectral_radius_sparse(matvec, dim: int, k: int = 6, tol: float = 1e-6,
                           seed: int = 0) -> float:
    """Spectral-radius estimate of a large operator via Arnoldi iteration."""
    from scipy.sparse.linalg import LinearOperator, eigs
    op = LinearOperator((dim, dim), matvec=matvec)
    rng = np.random.default_rng(seed)
    v0 = rng.standard_normal(dim)
    vals = eigs(op, k=k, which="LM", return_eigenvectors=False, tol=tol, v0=v0)
    return float(max(abs(vals)))


def assemble_closed_loop(W: np.ndarray, A: np.ndarray, s: SensorSuite,
                         K: BlockDiagGain) -> ClosedLoop:
    W = np.asarray(W, dtype=float)
    A = np.asarray(A, dtype=float)
    m, n = W.shape[0], A.shape[0]
    if s.m != m or s.n != n or K.m != m or K.n != n:
        raise ValueError("dimension mismatch between W, A, suite, and gain")
    M = np.kron(W, A)
    DC = s.measurement_operator()
    Kbig = K.assemble()
    A_hat = M - Kbig @ DC @ M
    return ClosedLoop(A_hat, spectral_radius(A_hat), W, A, DC, K)


def verify_schur(cl: ClosedLoop, margin: float = 0.0) -> bool:
    return cl.spectral_radius < 1.0 - margin


def _min_eig(M: np.ndarray) -> float:
    return float(np.linalg.eigvalsh(0.5 * (M + M.T)).min())


def is_positive_definite(M: np.ndarray) -> bool:
    vals = np.linalg.eigvalsh(0.5 * (M + M.T))
    return vals.min() > PD_TOL * (1.0 + abs(vals.max()))


def sdp_feasibility_step(M: np.ndarray, s: SensorSuite, Qt: np.ndarray,
                         Rt: np.ndarray, delta: float = 1e-3,
                         solver: Optional[str] = None):
    """One cone-complementarity subproblem: minimize trace(Qt R + Rt Q)
    subject to the stability and coupling block LMIs with block-diagonal K.

    Returns (Q, R, gain, objective_value).
    """
    import cvxpy as cp

    m, n = s.m, s.n
    mn = m * n
    Q = cp.Variable((mn, mn), symmetric=True)
    R = cp.Variable((mn, mn), symmetric=True)
    Ks = [cp.Variable((n, n)) for _ in range(m)]

    # Ahat rows for sensor block i: M_i - K_i * (S_i M_i)
    rows = []
    for i in range(m):
        Mi = M[i * n:(i + 1) * n, :]
        SMi = s.selector_block(i) @ Mi
        rows.append(Mi - Ks[i] @ SMi)
    A_hat = cp.vstack(rows)

    I = np.eye(mn)
    constraints = [
        cp.bmat([[Q, A_hat.T], [A_hat, R]]) >> delta * np.eye(2 * mn),
        cp.bmat([[Q, I], [I, R]]) >> 0,
        Q >> delta * I,
        R >> delta * I,
    ]
    objective = cp.Minimize(cp.trace(Qt @ R) + cp.trace(Rt @ Q))
    prob = cp.Problem(objective, constraints)
    solvers = [solver] if solver else ["CVXOPT", "SCS"]
    opts = {"CVXOPT": {"abstol": 1e-8, "reltol": 1e-8, "feastol": 1e-8},
            "SCS": {"eps": 1e-8, "max_iters": 50000}}
    err = None
    for sv in solvers:
        try:
            prob.solve(solver=sv, **opts.get(sv, {}))
        except Exception as e:  # solver missing or numerical failure
            err = e
            continue
        if prob.status in ("optimal", "optimal_inaccurate"):
            gain = BlockDiagGain([Ki.value for Ki in Ks])
            # ridge polish: the delta interior margin leaves room to absorb
            # solver-level constraint violations in the returned iterate
            ridge = 1e-5 * np.eye(mn)
            return Q.value + ridge, R.value + ridge, gain, float(prob.value)
        err = RuntimeError(f"solver status {prob.status}")
    raise GainSynthesisError(f"SDP subproblem infeasible or failed: {err}")


def design_gain_lmi(W: np.ndarray, A: np.ndarray, s: SensorSuite,
                    eps: Optional[float] = None, max_iter: int = 200,
                    solver: Optional[str] = None,
                    ) -> tuple[BlockDiagGain, SynthesisReport]:
    """Iterative cone-complementarity synthesis of a block-diagonal gain.

    Stops at the first satisfied criterion: rho(Ahat) < 1 (checked every
    iteration), trace objective within 2mn + eps, or max_iter (failure).
    """
    W = np.asarray(W, dtype=float)
    A = np.asarray(A, dtype=float)
    m, n = W.shape[0], A.shape[0]
    mn = m * n
    if eps is None:
        eps = 1e-3 * mn
    M = np.kron(W, A)

    zero = BlockDiagGain.zero(m, n)
    rho0 = spectral_radius(M)
    if rho0 < 1.0:
        # stable plant propagation: no gain needed
        rep = SynthesisReport([], "stable_plant", rho0, "zero")
        return zero, rep

    Qt = np.eye(mn)
    Rt = np.eye(mn)
    history: list[LmiIterate] = []
    best: Optional[tuple[float, BlockDiagGain]] = None
    for t in range(max_iter):
        try:
            Qv, Rv, gain, obj = sdp_feasibility_step(M, s, Qt, Rt, solver=solver)
        except GainSynthesisError:
            if t == 0:
                # retry with rescaled starting point
                done = False
                for c in (1e-2, 1e-1, 1e1, 1e2):
                    try:
                        Qv, Rv, gain, obj = sdp_feasibility_step(
                            M, s, c * Qt, c * Rt, solver=solver)
                        done = True
                        break
                    except GainSynthesisError:
                        continue
                if not done:
                    raise GainSynthesisError("infeasible initialization")
            else:
                break
        cl = assemble_closed_loop(W, A, s, gain)
        stab = np.block([[Qv, cl.A_hat.T], [cl.A_hat, Rv]])
        coup = np.block([[Qv, np.eye(mn)], [np.eye(mn), Rv]])
        history.append(LmiIterate(t, obj, cl.spectral_radius,
                                  _min_eig(stab), _min_eig(coup)))
        if best is None or cl.spectral_radius < best[0]:
            best = (cl.spectral_radius, gain)
        if cl.spectral_radius < 1.0:
            return gain, SynthesisReport(history, "schur", cl.spectral_radius, "lmi")
        if obj <= 2 * mn + eps:
            rep = SynthesisReport(history, "trace", cl.spectral_radius, "lmi")
            if cl.spectral_radius < 1.0:
                return gain, rep
            raise GainSynthesisError(
                f"trace converged but rho = {cl.spectral_radius:.6f} >= 1")
        Qt, Rt = Qv, Rv
    rho_best = best[0] if best else float("inf")
    raise GainSynthesisError(
        f"not converged after {len(history)} iterations (best rho {rho_best:.6f})")


# ---------------------------------------------------------------------------
# Fallback synthesizer: descent on the dominant eigenvalue moduli.
# ---------------------------------------------------------------------------

def _effective_params(s: SensorSuite) -> list[list[int]]:
    """Measured-state columns of each K_i that actually enter Ahat."""
    return [sorted(set(states)) for states in s.measured_states]


def _gain_from_params(P: list[np.ndarray], cols: list[list[int]],
                      m: int, n: int) -> BlockDiagGain:
    blocks = []
    for i in range(m):
        B = np.zeros((n, n))
        for c, col in enumerate(cols[i]):
            B[:, col] = P[i][:, c]
        blocks.append(B)
    return BlockDiagGain(blocks)


class _ClosedLoopOperator:
    """Matrix-free Ahat = (I - G) (W kron A) using the block structure."""

    def __init__(self, W, A, cols, P):
        self.W = W
        self.A = A
        self.cols = cols
        self.P = P
        self.m = W.shape[0]
        self.n = A.shape[0]
        self.dim = self.m * self.n

    def _consensus(self, V):
        # blocks of (W kron A) v: A @ sum_j W_ij v_j
        return (self.W @ V) @ self.A.T

    def matvec(self, v):
        v = np.asarray(v)
        if v.dtype.kind not in "fc":
            v = v.astype(float)
        V = v.reshape(self.m, self.n)
        Wv = self._consensus(V)
        out = Wv.copy()
        for i in range(self.m):
            out[i] -= self.P[i] @ Wv[i, self.cols[i]]
        return out.ravel()

    def rmatvec(self, x):
        # Ahat^T x = M^T (I - G)^T x
        x = np.asarray(x)
        if x.dtype.kind not in "fc":
            x = x.astype(float)
        X = x.reshape(self.m, self.n)
        Y = X.copy()
        for i in range(self.m):
            Y[i, self.cols[i]] -= self.P[i].T @ X[i]
        return ((self.W.T @ Y) @ self.A).ravel()


def _top_eigs(op: _ClosedLoopOperator, k: int, dense_guard: int, seed: int = 0):
    """Top-|lambda| eigentriples (lambda, right v, left u with Ahat^T u = lam u)."""
    dim = op.dim
    if dim <= dense_guard:
        A_hat = np.column_stack([op.matvec(e) for e in np.eye(dim)])
        vals, vl, vr = scipy.linalg.eig(A_hat, left=True, right=True)
        order = np.argsort(-np.abs(vals))[:k]
        return [(vals[i], vr[:, i], np.conj(vl[:, i])) for i in order]
    from scipy.sparse.linalg import LinearOperator, eigs
    rng = np.random.default_rng(seed)
    v0 = rng.standard_normal(dim)
    right_op = LinearOperator((dim, dim), matvec=op.matvec)
    left_op = LinearOperator((dim, dim), matvec=op.rmatvec)
    vals_r, vecs_r = eigs(right_op, k=k, which="LM", v0=v0, tol=1e-8)
    vals_l, vecs_l = eigs(left_op, k=k, which="LM", v0=v0, tol=1e-8)
    triples = []
    used = set()
    for idx in np.argsort(-np.abs(vals_r)):
        lam = vals_r[idx]
        # match left eigenvector by eigenvalue proximity
        cand = [j for j in range(len(vals_l)) if j not in used]
        j = min(cand, key=lambda j: abs(vals_l[j] - lam))
        used.add(j)
        triples.append((lam, vecs_r[:, idx], vecs_l[:, j]))
    return triples


def _eigen_jacobian_row(lam, v, u, op: _ClosedLoopOperator) -> np.ndarray:
    """d lambda / d(vec of all P_i), complex row.

    With Ahat = (I - G) M and w = M v, d lambda / d P_i[r,c]
    = -u_i[r] * w_i[col_c] / (u^T v).
    """
    m, n = op.m, op.n
    V = v.reshape(m, n)
    Wv = (op.W @ V) @ op.A.T
    U = u.reshape(m, n)
    uv = np.sum(u * v)  # u^T v
    pieces = []
    for i in range(m):
        pieces.append((-np.outer(U[i], Wv[i, op.cols[i]]) / uv).ravel())
    return np.concatenate(pieces)


def design_gain_spectral(W: np.ndarray, A: np.ndarray, s: SensorSuite,
                         max_iter: int = 60, target: float = 0.95,
                         dense_guard: int = 400, seed: int = 0,
                         shrink: float = 0.96,
                         ) -> tuple[BlockDiagGain, SynthesisReport]:
    """Fallback synthesizer: least-norm partial eigenvalue assignment.

    Each iteration linearizes the dominant eigenvalues of Ahat in the
    effective gain columns and solves the least-norm update that radially
    shrinks every eigenvalue above the target modulus, with backtracking on
    the spectral radius. Any returned gain must still pass an independent
    verify_schur eigensolve; this routine never certifies stability itself.
    """
    W = np.asarray(W, dtype=float)
    A = np.asarray(A, dtype=float)
    m, n = W.shape[0], A.shape[0]
    cols = _effective_params(s)
    sizes = [n * len(c) for c in cols]
    offsets = np.concatenate([[0], np.cumsum(sizes)])

    def unpack(x):
        return [x[offsets[i]:offsets[i + 1]].reshape(n, len(cols[i]))
                for i in range(m)]

    def spectrum(x, k):
        op = _ClosedLoopOperator(W, A, cols, unpack(x))
        k = min(k, op.dim - 2)
        triples = _top_eigs(op, k, dense_guard, seed)
        rho = max(abs(lam) for lam, _, _ in triples)
        return rho, op, triples

    x = np.zeros(offsets[-1])
    k = 12
    rho, op, triples = spectrum(x, k)
    history: list[LmiIterate] = [LmiIterate(0, 0.0, rho, 0.0, 0.0)]
    for t in range(1, max_iter + 1):
        if rho < target:
            break
        # track every mode above the target, growing k if needed
        while (min(abs(lam) for lam, _, _ in triples) > target
               and k < op.dim - 2):
            k = min(2 * k, op.dim - 2)
            rho, op, triples = spectrum(x, k)
        active = [(lam, v, u) for lam, v, u in triples if abs(lam) > target]
        if not active:
            break
        # dedupe conjugate pairs; real solutions cover both
        seen: list[complex] = []
        rows, targets = [], []
        for lam, v, u in active:
            if any(abs(np.conj(lam) - s_) < 1e-10 and abs(lam.imag) > 1e-12
                   for s_ in seen):
                continue
            seen.append(lam)
            rows.append(_eigen_jacobian_row(lam, v, u, op))
            want = max(abs(lam) * shrink, target * 0.999)
            targets.append(lam * (want / abs(lam) - 1.0))
        J = np.array(rows)
        b = np.array(targets)
        Jr = np.vstack([J.real, J.imag])
        br = np.concatenate([b.real, b.imag])
        # truncated least-norm step; near-degenerate modes make J rank
        # deficient, so small singular values must be cut, not inverted
        dx, *_ = np.linalg.lstsq(Jr, br, rcond=1e-6)
        cap = 1.0 + np.linalg.norm(x)
        if np.linalg.norm(dx) > cap:
            dx *= cap / np.linalg.norm(dx)
        # steepest-descent direction on sum of squared moduli excesses,
        # used when the assignment step makes no progress
        gdir = np.zeros_like(x)
        for row, lam in zip(rows, seen):
            excess = abs(lam) - target
            gdir -= np.real(2.0 * excess * (np.conj(lam) / abs(lam)) * row)
        gn = np.linalg.norm(gdir)
        if gn > 0:
            gdir /= gn
        improved = False
        for cand in (dx, gdir):
            alpha = 1.0
            while alpha > 1e-6:
                rho_new, op_new, triples_new = spectrum(x + alpha * cand, k)
                if rho_new < rho - 1e-12:
                    x = x + alpha * cand
                    rho, op, triples = rho_new, op_new, triples_new
                    improved = True
                    break
                alpha *= 0.5
            if improved:
                break
        history.append(LmiIterate(t, 0.0, rho, 0.0, 0.0))
        if not improved:
            break

    gain = _gain_from_params(unpack(x), cols, m, n)
    rep = SynthesisReport(history, "fallback", rho, "fallback")
    return gain, rep


def design_gain(W: np.ndarray, A: np.ndarray, s: SensorSuite,
                eps: Optional[float] = None, max_iter: int = 200,
                lmi_guard: int = 100, seed: int = 0,
                ) -> tuple[BlockDiagGain, SynthesisReport]:
    """LMI synthesis with spectral-descent fallback.

    Instances with mn above lmi_guard skip the LMI path entirely.
    """
    mn = W.shape[0] * A.shape[0]
    if mn <= lmi_guard:
        try:
            return design_gain_lmi(W, A, s, eps=eps, max_iter=max_iter)
        except GainSynthesisError:
            pass
    gain, rep = design_gain_spectral(W, A, s, seed=seed)
    if rep.rho >= 1.0:
        raise GainSynthesisError(
            f"fallback synthesizer failed: rho = {rep.rho:.6f} >= 1")
    return gain, rep
