"""Coefficient matrix fields A(x), their inverses, columns and row vectors.

Only a fixed set of built-in field kinds is provided; each acceptance probe
needs a field with known behaviour, so arbitrary user matrices are out of
scope.  Declared bound constants are audited empirically, never inferred.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field

import numpy as np

from .errors import BoundViolationError, DomainError, SingularFieldError

_FD_STEP = 1e-6


@dataclass(frozen=True)
class CoefficientField:
    """One coefficient matrix field with its declared bound constants."""

    kind: str
    d: int
    eta1: float
    eta2: float
    eta3: float
    params: dict = dc_field(default_factory=dict)

    def __post_init__(self):
        if self.d < 1:
            raise DomainError("field dimension must be >= 1")

    # ---------------------------------------------------------------- kinds
    @property
    def is_constant(self) -> bool:
        return self.kind in ("identity", "constant")

    def spec(self) -> dict:
        out = {"kind": self.kind, "d": self.d}
        out.update({k: (v.tolist() if isinstance(v, np.ndarray) else v)
                    for k, v in self.params.items()})
        return out

    # ----------------------------------------------------------- evaluation
    def matrices(self, x) -> np.ndarray:
        """A(x) for an array of points with shape (..., d)."""
        x = np.asarray(x, dtype=float)
        base = x.shape[:-1]
        n = int(np.prod(base)) if base else 1
        pts = x.reshape(n, self.d)
        if self.kind == "identity":
            out = np.broadcast_to(np.eye(self.d), (n, self.d, self.d)).copy()
        elif self.kind == "constant":
            out = np.broadcast_to(self.params["matrix"], (n, self.d, self.d)).copy()
        elif self.kind == "diagonal":
            amp, freq = self.params["amp"], self.params["freq"]
            diag = 1.0 + amp * np.cos(freq * pts)
            out = np.zeros((n, self.d, self.d))
            ii = np.arange(self.d)
            out[:, ii, ii] = diag
        elif self.kind == "blend":
            s, mat, radius = self.params["s"], self.params["matrix"], self.params["radius"]
            rho = _bump(pts, radius)
            out = np.eye(self.d) + s * rho[:, None, None] * mat[None, :, :]
        elif self.kind == "rotation_counterexample":
            th = rotation_angle(pts)
            c, sn = np.cos(th), np.sin(th)
            out = np.empty((n, 2, 2))
            out[:, 0, 0] = c
            out[:, 0, 1] = -sn
            out[:, 1, 0] = sn
            out[:, 1, 1] = c
        else:
            raise DomainError(f"unknown field kind {self.kind!r}")
        return out.reshape(base + (self.d, self.d))

    def columns(self, x) -> np.ndarray:
        """Matrix columns a_i(x); result[..., :, i] is the i-th column."""
        return self.matrices(x)

    def inverses(self, x):
        """Inverse matrices and their determinants at each point."""
        a = self.matrices(x)
        det = np.linalg.det(a)
        if np.any(np.abs(det) < 1e-14):
            raise SingularFieldError("coefficient matrix numerically singular")
        return np.linalg.inv(a), det

    def column_jacobians(self, x) -> np.ndarray:
        """d a_i / d x as result[..., k, l, i] = d(a_i)_k / d x_l.

        Analytic for smooth kinds; central differences for the rotation field,
        whose angle is Lipschitz but only piecewise smooth.
        """
        x = np.asarray(x, dtype=float)
        base = x.shape[:-1]
        n = int(np.prod(base)) if base else 1
        pts = x.reshape(n, self.d)
        out = np.zeros((n, self.d, self.d, self.d))
        if self.kind in ("identity", "constant"):
            pass
        elif self.kind == "diagonal":
            amp, freq = self.params["amp"], self.params["freq"]
            dd = -amp * freq * np.sin(freq * pts)
            ii = np.arange(self.d)
            out[:, ii, ii, ii] = dd
        elif self.kind == "blend":
            s, mat, radius = self.params["s"], self.params["matrix"], self.params["radius"]
            grad = _bump_grad(pts, radius)
            out = s * np.einsum("ki,nl->nkli", mat, grad)
        else:
            for l in range(self.d):
                dx = np.zeros(self.d)
                dx[l] = _FD_STEP
                ap = self.matrices(pts + dx)
                am = self.matrices(pts - dx)
                out[:, :, l, :] = (ap - am) / (2.0 * _FD_STEP)
        return out.reshape(base + (self.d, self.d, self.d))


def _bump(pts, radius):
    r = np.linalg.norm(pts, axis=-1)
    inside = r < radius
    rho = np.zeros_like(r)
    rho[inside] = np.cos(0.5 * np.pi * r[inside] / radius) ** 2
    return rho


def _bump_grad(pts, radius):
    r = np.linalg.norm(pts, axis=-1)
    out = np.zeros_like(pts)
    inside = (r < radius) & (r > 0)
    ri = r[inside]
    drho = -(0.5 * np.pi / radius) * np.sin(np.pi * ri / radius)
    out[inside] = (drho / ri)[:, None] * pts[inside]
    return out


def rotation_angle(x) -> np.ndarray:
    """Rotation angle of the 2-d counterexample field, zero at the origin."""
    x = np.asarray(x, dtype=float)
    x1, x2 = x[..., 0], x[..., 1]
    r = np.hypot(x1, x2)
    kappa = np.clip(r - 1.0, 0.0, 0.25 * np.pi)
    phi = np.clip(np.arctan2(x2, x1), 0.0, 0.5 * np.pi)
    theta = np.maximum(kappa - np.abs(phi - kappa), 0.0)
    return np.where(r > 0, theta, 0.0)


# ------------------------------------------------------------------ builders

def identity_field(d: int = 2) -> CoefficientField:
    return CoefficientField(kind="identity", d=d, eta1=1.0, eta2=1.0, eta3=0.0)


def constant_field(matrix) -> CoefficientField:
    m = np.asarray(matrix, dtype=float)
    det = float(np.linalg.det(m))
    if det <= 0:
        raise DomainError("constant field must have positive determinant")
    return CoefficientField(
        kind="constant", d=m.shape[0],
        eta1=float(np.max(np.abs(m))), eta2=det, eta3=0.0,
        params={"matrix": m},
    )


def diagonal_field(d: int = 2, amp: float = 0.25, freq: float = 1.0) -> CoefficientField:
    if not (0 <= amp < 1):
        raise DomainError("diagonal amplitude must lie in [0,1)")
    return CoefficientField(
        kind="diagonal", d=d,
        eta1=1.0 + amp, eta2=(1.0 - amp) ** d, eta3=amp * freq,
        params={"amp": amp, "freq": freq},
    )


_BLEND_MATRIX = np.array([[0.6, 0.8], [-0.5, 0.4]])


def blend_field(s: float = 0.1, d: int = 2, radius: float = 0.5, matrix=None) -> CoefficientField:
    """Identity plus a compactly supported smooth perturbation of strength s."""
    m = _BLEND_MATRIX if matrix is None else np.asarray(matrix, dtype=float)
    if m.shape != (d, d):
        raise DomainError("blend matrix shape must match d")
    if s < 0 or s > 0.25:
        raise DomainError("blend strength limited to [0, 0.25] to keep det bounded below")
    eta1 = 1.0 + s * float(np.max(np.abs(m)))
    eta3 = s * float(np.max(np.abs(m))) * (0.5 * np.pi / radius) * 1.01
    # determinant lower bound audited rather than derived sharply
    eta2 = 1.0 - s * (abs(m[0, 0] + m[1, 1]) if d == 2 else d) - (s**2) * 1.0
    return CoefficientField(
        kind="blend", d=d, eta1=eta1, eta2=max(eta2 * 0.9, 0.1), eta3=eta3,
        params={"s": s, "matrix": m, "radius": radius},
    )


def counterexample_field() -> CoefficientField:
    """Rotation field whose transition density blows up near the origin."""
    return CoefficientField(
        kind="rotation_counterexample", d=2, eta1=1.0, eta2=1.0, eta3=3.0,
    )


_BUILDERS = {
    "identity": lambda spec: identity_field(int(spec.get("d", 2))),
    "constant": lambda spec: constant_field(spec["matrix"]),
    "diagonal": lambda spec: diagonal_field(
        int(spec.get("d", 2)), float(spec.get("amp", 0.25)), float(spec.get("freq", 1.0))
    ),
    "blend": lambda spec: blend_field(
        float(spec.get("s", 0.1)), int(spec.get("d", 2)),
        float(spec.get("radius", 0.5)),
        spec.get("matrix"),
    ),
    "rotation_counterexample": lambda spec: counterexample_field(),
}


def build_field(spec: dict) -> CoefficientField:
    kind = spec.get("kind")
    if kind not in _BUILDERS:
        raise DomainError(f"unknown field kind {kind!r}")
    return _BUILDERS[kind](spec)


# ----------------------------------------------------------------- contracts

@dataclass(frozen=True)
class InverseEval:
    """Inverse matrix at one point with its determinant and row vectors."""

    B: np.ndarray
    detB: float

    @property
    def rows(self) -> np.ndarray:
        return self.B

    def row(self, i: int) -> np.ndarray:
        return self.B[i]


def eval_matrix(field: CoefficientField, x) -> np.ndarray:
    return field.matrices(np.asarray(x, dtype=float))


def eval_inverse(field: CoefficientField, x) -> InverseEval:
    a = eval_matrix(field, x)
    det = float(np.linalg.det(a))
    if abs(det) < 1e-14:
        raise SingularFieldError(f"det A(x) = {det} at x = {x}")
    return InverseEval(B=np.linalg.inv(a), detB=1.0 / det)


def verify_bounds(field: CoefficientField, sample_count: int, box: float, seed: int):
    """Empirical (eta1, eta2, eta3) over random samples; loud on violations."""
    if sample_count < 1:
        raise DomainError("sample_count must be >= 1")
    rng = np.random.default_rng(seed)
    pts = rng.uniform(-box, box, size=(sample_count, field.d))
    mats = field.matrices(pts)
    eta1_hat = float(np.max(np.abs(mats)))
    dets = np.linalg.det(mats)
    eta2_hat = float(np.min(dets))
    pts2 = rng.uniform(-box, box, size=(sample_count, field.d))
    mats2 = field.matrices(pts2)
    dist = np.linalg.norm(pts - pts2, axis=-1)
    ok = dist > 1e-12
    quot = np.max(np.abs(mats - mats2).reshape(len(pts), -1), axis=-1)[ok] / dist[ok]
    eta3_hat = float(np.max(quot)) if np.any(ok) else 0.0

    tol = 1e-9
    witnesses = []
    if eta1_hat > field.eta1 + tol:
        witnesses.append(("eta1", pts[int(np.argmax(np.max(np.abs(mats).reshape(len(pts), -1), axis=1)))]))
    if eta2_hat < field.eta2 - tol:
        witnesses.append(("eta2", pts[int(np.argmin(dets))]))
    if eta3_hat > field.eta3 + tol:
        bad = int(np.argmax(np.where(ok, np.abs(mats - mats2).reshape(len(pts), -1).max(axis=1) / np.where(ok, dist, 1.0), 0.0)))
        witnesses.append(("eta3", pts[bad]))
    if witnesses:
        raise BoundViolationError(
            f"declared bounds violated: {[w[0] for w in witnesses]}", witnesses=witnesses
        )
    return eta1_hat, eta2_hat, eta3_hat
