"""Exterior transmission cell problems and polarization tensors by a
single-layer boundary element method.

The cell function phi_p is represented as S[psi_p] with the 2D kernel
-(1/2pi) ln|x-y|; constant densities on flat panels are integrated
exactly (the log antiderivative in panel coordinates), midpoint
collocation assembles the adjoint Neumann-Poincare operator K*, and the
flux-jump contract

    d phi_p / d nu |_+  -  k d phi_p / d nu |_-  =  nu_p   on dB

fixes the second-kind equation ((k+1)/(2(k-1)) I + K*) psi = -nu_p/(k-1).
A rank-one row keeps the total charge at zero, pinning the logarithmic
far field.  Both tensor sign conventions are exposed; see
polarization_tensor.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .geometry import InclusionShape, _polygon_area

_MIN_PANELS = 32
CONVENTIONS = ("paper", "literature")


@dataclass(frozen=True)
class Panels:
    vertices: np.ndarray    # (n, 2) closed loop, counterclockwise
    midpoints: np.ndarray   # (n, 2)
    normals: np.ndarray     # (n, 2) outward unit
    lengths: np.ndarray     # (n,)

    @property
    def n(self) -> int:
        return len(self.lengths)

    @property
    def perimeter(self) -> float:
        return float(np.sum(self.lengths))

    @property
    def area(self) -> float:
        return _polygon_area(self.vertices)


def panelize(shape: InclusionShape, n: int) -> Panels:
    if n < _MIN_PANELS:
        raise ValidationError(f"need at least {_MIN_PANELS} panels, got {n}")
    verts = shape.boundary_points(n)
    nxt = np.roll(verts, -1, axis=0)
    tang = nxt - verts
    lengths = np.hypot(tang[:, 0], tang[:, 1])
    if np.any(lengths <= 0):
        raise ValidationError("degenerate panelization")
    tang = tang / lengths[:, None]
    normals = np.column_stack([tang[:, 1], -tang[:, 0]])  # outward for ccw loops
    midpoints = 0.5 * (verts + nxt)
    return Panels(vertices=verts, midpoints=midpoints, normals=normals, lengths=lengths)


@dataclass
class BoundaryDensity:
    """Single-layer densities psi_p (p = 0, 1) and interior flux traces."""

    panels: Panels
    values: np.ndarray          # (n, 2)
    interior_trace: np.ndarray  # (n, 2): d phi_p / d nu |_- at midpoints
    k: float
    shape: InclusionShape

    def charge(self, p: int) -> float:
        return float(self.panels.lengths @ self.values[:, p])


@dataclass(frozen=True)
class PolarizationTensor:
    entries: np.ndarray  # (2, 2) symmetric
    shape: InclusionShape
    k: float
    convention: str


# ---------------------------------------------------------------------------
# exact panel integrals of the log kernel
# ---------------------------------------------------------------------------
def _panel_frames(panels: Panels):
    a = panels.vertices
    b = np.roll(panels.vertices, -1, axis=0)
    tang = (b - a) / panels.lengths[:, None]
    perp = np.column_stack([tang[:, 1], -tang[:, 0]])
    return a, tang, perp


def _log_antiderivative(w: np.ndarray, p: np.ndarray) -> np.ndarray:
    """F(w) with F' = (1/2) ln(w^2 + p^2); the w log w -> 0 limit is exact.

    Plain atan(w/p), not arctan2: the antiderivative must be odd in w and
    even in p so the potential stays continuous on both sides of a panel.
    """
    r2 = w * w + p * p
    with np.errstate(divide="ignore", invalid="ignore"):
        term = 0.5 * w * np.log(r2)
        term = np.where(r2 > 0.0, term, 0.0)
        at = np.where(p != 0.0, p * np.arctan(np.where(p != 0.0, w / p, 0.0)), 0.0)
    return term - w + at


def single_layer_matrix(panels: Panels, targets: np.ndarray) -> np.ndarray:
    """S[e_j](targets): exact integral of -(1/2pi) ln r over each panel."""
    a, tang, perp = _panel_frames(panels)
    d = targets[:, None, :] - a[None, :, :]           # (t, n, 2)
    s = np.einsum("tnd,nd->tn", d, tang)
    p = np.einsum("tnd,nd->tn", d, perp)
    upper = _log_antiderivative(panels.lengths[None, :] - s, p)
    lower = _log_antiderivative(-s, p)
    return -(upper - lower) / (2.0 * np.pi)


def single_layer_gradient(panels: Panels, targets: np.ndarray) -> np.ndarray:
    """Gradient of the exact panel potentials; shape (t, n, 2).

    Not defined on the curve itself (the normal part jumps); targets on a
    panel are nudged to its exterior side by a tiny offset.
    """
    a, tang, perp = _panel_frames(panels)
    d = targets[:, None, :] - a[None, :, :]
    s = np.einsum("tnd,nd->tn", d, tang)
    p = np.einsum("tnd,nd->tn", d, perp)
    on_panel = (np.abs(p) < 1e-12) & (s > -1e-12) & (s < panels.lengths[None, :] + 1e-12)
    p = np.where(on_panel, 1e-12, p)  # nearest-side regularization
    w1 = panels.lengths[None, :] - s
    w0 = -s
    r2_1 = w1 * w1 + p * p
    r2_0 = w0 * w0 + p * p
    with np.errstate(divide="ignore", invalid="ignore"):
        dlds = 0.5 * (np.log(r2_0) - np.log(r2_1))
        # plain atan keeps the branch consistent on both sides of the panel;
        # collinear targets beyond the panel ends cancel to zero correctly
        dldp = np.arctan(w1 / p) - np.arctan(w0 / p)
        dldp = np.where(np.isfinite(dldp), dldp, 0.0)
    grad = dlds[..., None] * tang[None] + dldp[..., None] * perp[None]
    return -grad / (2.0 * np.pi)


def adjoint_np_matrix(panels: Panels) -> np.ndarray:
    """K* with kernel nu(x) . grad_x of -(1/2pi) ln|x-y|, exact per panel.

    The diagonal comes from the Gauss flux identity: integrating the
    kernel over x gives -1/2 for any y on a closed curve, so each
    length-weighted column must sum to -len_j/2.  This absorbs the
    near-field curvature error of flat panels; the naive principal-value
    diagonal (zero on a flat panel) converges only at first order in the
    panel count, the identity-based one at second.
    """
    grad = single_layer_gradient(panels, panels.midpoints)
    kstar = np.einsum("tnd,td->tn", grad, panels.normals)
    np.fill_diagonal(kstar, 0.0)
    w = panels.lengths
    col = (w[:, None] * kstar).sum(axis=0)
    np.fill_diagonal(kstar, (-0.5 * w - col) / w)
    return kstar


# ---------------------------------------------------------------------------
# cell problem and tensor
# ---------------------------------------------------------------------------
def solve_cell_problem(shape: InclusionShape, k: float, panels: int = 256) -> BoundaryDensity:
    """Densities psi_p realizing the flux jump nu_p across the unit-scale
    inclusion boundary, with zero total charge."""
    if k <= 0.0:
        raise ValidationError("conductivity must be positive")
    if k == 1.0:
        raise ValidationError("no contrast: k = 1 admits no cell problem")
    pan = panelize(shape, panels)
    lam_np = (k + 1.0) / (2.0 * (k - 1.0))
    kstar = adjoint_np_matrix(pan)
    a = lam_np * np.eye(pan.n) + kstar
    # rank-one charge pin; the true solution is charge-free, so this is
    # consistent and removes the logarithmic far-field mode
    a = a + np.outer(np.ones(pan.n), pan.lengths) / pan.perimeter
    rhs = -pan.normals / (k - 1.0)
    psi = np.linalg.solve(a, rhs)
    trace = kstar @ psi + 0.5 * psi  # d/dnu|_- = (+1/2 I + K*) psi
    return BoundaryDensity(panels=pan, values=psi, interior_trace=trace, k=k, shape=shape)


def polarization_tensor(
    shape: InclusionShape, k: float, convention: str = "paper", panels: int = 256
) -> PolarizationTensor:
    """2x2 polarization tensor of the inclusion shape and contrast.

    paper convention:       (1-k)|B| I + (1-k)^2 * integral
    literature convention:  (k-1)|B| I + (k-1)^2 * integral
    where integral_pq = \\int_dB y_p d phi_q/d nu|_- dsigma. The two differ
    by the sign of the linear term only; the calibrate workflow decides
    which one reproduces measured eigenvalue shifts.
    """
    if convention not in CONVENTIONS:
        raise ValidationError(f"convention must be one of {CONVENTIONS}")
    if k == 1.0:
        return PolarizationTensor(entries=np.zeros((2, 2)), shape=shape, k=k,
                                  convention=convention)
    density = solve_cell_problem(shape, k, panels)
    pan = density.panels
    moment = np.einsum(
        "j,jp,jq->pq", pan.lengths, pan.midpoints, density.interior_trace
    )
    linear = (1.0 - k) if convention == "paper" else (k - 1.0)
    entries = linear * shape.area * np.eye(2) + (1.0 - k) ** 2 * moment
    entries = 0.5 * (entries + entries.T)
    return PolarizationTensor(entries=entries, shape=shape, k=k, convention=convention)


# ---------------------------------------------------------------------------
# corrector field
# ---------------------------------------------------------------------------
@dataclass
class Corrector:
    """Evaluator of v(xi) = (c_k/lambda) sum_p du/dx_p(z) phi_p(xi).

    The transmission analysis of the difference field gives c_k = k - 1
    for cell functions with unit-normal flux jump; both signs circulate,
    so the opposite one stays available for comparison experiments.
    """

    density: BoundaryDensity
    grad_u: np.ndarray
    lam: float
    sign: str = "derived"  # 'derived' -> (k-1), 'flipped' -> (1-k)

    def __post_init__(self):
        if self.sign not in ("derived", "flipped"):
            raise ValidationError("sign must be 'derived' or 'flipped'")
        c = (self.density.k - 1.0) if self.sign == "derived" else (1.0 - self.density.k)
        self._coef = c / self.lam * np.asarray(self.grad_u, dtype=float)

    def evaluate(self, xi: np.ndarray) -> np.ndarray:
        xi = np.atleast_2d(xi)
        vals = single_layer_matrix(self.density.panels, xi) @ self.density.values
        return vals @ self._coef  # (t,)

    def gradient(self, xi: np.ndarray) -> np.ndarray:
        xi = np.atleast_2d(xi)
        g = single_layer_gradient(self.density.panels, xi)
        grads = np.einsum("tnd,np->tpd", g, self.density.values)
        return np.einsum("tpd,p->td", grads, self._coef)

    def scaled_physical(self, x: np.ndarray, z, eps: float) -> np.ndarray:
        """The physical-space inner correction eps * v((x - z) / eps)."""
        x = np.atleast_2d(x)
        xi = (x - np.asarray(z, dtype=float)) / eps
        return eps * self.evaluate(xi)


def corrector_field(
    density: BoundaryDensity, grad_u_at_z, lam: float, sign: str = "derived"
) -> Corrector:
    """Corrector for one inclusion from its cell densities and the
    background gradient at the inclusion center."""
    grad = np.asarray(grad_u_at_z, dtype=float)
    if grad.shape != (2,):
        raise ValidationError("grad_u_at_z must be a 2-vector")
    return Corrector(density=density, grad_u=grad, lam=lam, sign=sign)
