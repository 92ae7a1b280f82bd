"""P1 finite elements on scene meshes.

Assembles the conductivity-weighted stiffness form for
a(x) = 1 + sum_l (k_l - 1) chi(D_l) and the consistent mass form, provides
zero-mean Neumann source solves (the compact solution operators for the
perturbed and unperturbed problems), a generalized symmetric eigensolver,
and overlap-based matching of perturbed eigenvalues to unperturbed groups.

The pure-Neumann kernel (constants) is handled by grounding one node in
the source solve - the reduced matrix is symmetric positive definite and
the grounded solution satisfies the full singular system exactly because
the projected right-hand side is range-compatible - followed by a
mass-mean shift.  Perturbed and unperturbed systems share one
inclusion-conforming mesh so eigenvalue differences cancel the leading
discretization error.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import MatchingError, SolverError, ValidationError
from .geometry import InclusionSpec, Mesh

_DENSE_EIGEN_LIMIT = 900
_DENSE_FALLBACK_LIMIT = 3000


@dataclass
class AssembledSystem:
    stiffness: sp.csr_matrix
    mass: sp.csr_matrix
    mesh: Mesh
    inclusions: tuple
    _lu: Optional[object] = field(default=None, repr=False)

    @property
    def n(self) -> int:
        return self.stiffness.shape[0]

    @property
    def domain_measure(self) -> float:
        return float(self.mass.sum())

    def mean(self, values: np.ndarray) -> float:
        return float(self.mass.dot(values).sum() / self.domain_measure)

    def inner(self, u: np.ndarray, v: np.ndarray) -> float:
        """L^2 (mass) inner product of nodal fields."""
        return float(u @ self.mass.dot(v))

    def h1_norm(self, u: np.ndarray, stiffness: Optional[sp.csr_matrix] = None) -> float:
        """Full H^1 norm; pass an a=1 stiffness to measure perturbed fields."""
        k = self.stiffness if stiffness is None else stiffness
        return float(np.sqrt(max(u @ k.dot(u), 0.0) + max(u @ self.mass.dot(u), 0.0)))

    def _source_lu(self):
        if self._lu is None:
            reduced = self.stiffness[1:, 1:].tocsc()
            self._lu = spla.splu(reduced)
        return self._lu


@dataclass
class DiscreteField:
    values: np.ndarray
    mesh: Mesh
    projected: bool = False  # input mean was projected away in solve_source
    mean: float = 0.0        # cached mass-weighted mean of `values`

    def __post_init__(self):
        if not np.all(np.isfinite(self.values)):
            raise SolverError("non-finite nodal values")

    def evaluate(self, points: np.ndarray) -> np.ndarray:
        """Linear interpolation at interior points."""
        points = np.atleast_2d(points)
        tri_idx, bary = _locate(self.mesh, points)
        return np.einsum("pi,pi->p", self.values[self.mesh.triangles[tri_idx]], bary)


@dataclass
class DiscreteGroup:
    """A cluster of discrete eigenpairs treated as one (near-)degenerate group."""

    lambdas: np.ndarray       # (m,) ascending
    vectors: np.ndarray       # (n, m) mass-orthonormal
    rank: int                 # 1-based group rank in the spectrum

    @property
    def multiplicity(self) -> int:
        return len(self.lambdas)

    @property
    def lam(self) -> float:
        """Harmonic-mean representative; cancels the discrete splitting
        exactly in the Osborn identity because the modes are normalized."""
        return harmonic_average(self.lambdas)


@dataclass
class PerturbedGroup:
    lambdas: np.ndarray
    vectors: np.ndarray
    matched_group: DiscreteGroup
    overlap: float

    def __post_init__(self):
        self.lambdas = np.sort(np.asarray(self.lambdas, dtype=float))

    @property
    def multiplicity(self) -> int:
        return len(self.lambdas)

    @property
    def harmonic_average(self) -> float:
        return harmonic_average(self.lambdas)


def harmonic_average(lams: np.ndarray) -> float:
    """m / sum(1/lambda); falls back to the arithmetic mean at lambda = 0."""
    lams = np.asarray(lams, dtype=float)
    if np.any(np.abs(lams) < 1e-300):
        return float(np.mean(lams))
    return float(len(lams) / np.sum(1.0 / lams))


# ---------------------------------------------------------------------------
# assembly
# ---------------------------------------------------------------------------
def assemble(mesh: Mesh, inclusions: Sequence[InclusionSpec]) -> AssembledSystem:
    """Stiffness with per-region conductivity and consistent P1 mass.

    Pass an empty inclusion list for the unperturbed operator (a = 1)
    regardless of the mesh's tags.
    """
    inclusions = tuple(inclusions)
    if inclusions and len(inclusions) != mesh.n_inclusions:
        raise SolverError(
            f"assembly mismatch: mesh has {mesh.n_inclusions} tagged inclusions, "
            f"got {len(inclusions)} specs"
        )
    coeff = np.ones(len(mesh.triangles))
    if inclusions:
        for l, inc in enumerate(inclusions):
            coeff[mesh.region == l] = inc.k

    p = mesh.nodes[mesh.triangles]
    e = np.stack(
        [p[:, 2] - p[:, 1], p[:, 0] - p[:, 2], p[:, 1] - p[:, 0]], axis=1
    )  # edge opposite each vertex; K and M below are orientation-free
    area = np.abs(0.5 * (e[:, 0, 0] * e[:, 1, 1] - e[:, 0, 1] * e[:, 1, 0]))
    if np.any(area <= 0):
        raise SolverError("degenerate triangle in assembly")

    n = len(mesh.nodes)
    rows, cols, k_data, m_data = [], [], [], []
    for i in range(3):
        for j in range(3):
            rows.append(mesh.triangles[:, i])
            cols.append(mesh.triangles[:, j])
            k_data.append(coeff * np.einsum("td,td->t", e[:, i], e[:, j]) / (4.0 * area))
            m_data.append(area / (6.0 if i == j else 12.0))
    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    stiffness = sp.csr_matrix((np.concatenate(k_data), (rows, cols)), shape=(n, n))
    mass = sp.csr_matrix((np.concatenate(m_data), (rows, cols)), shape=(n, n))
    stiffness = 0.5 * (stiffness + stiffness.T)
    mass = 0.5 * (mass + mass.T)
    return AssembledSystem(stiffness=stiffness.tocsr(), mass=mass.tocsr(), mesh=mesh,
                           inclusions=inclusions)


# ---------------------------------------------------------------------------
# source solve (the compact operator T / T_eps)
# ---------------------------------------------------------------------------
def solve_source(system: AssembledSystem, g) -> DiscreteField:
    """Solve -div(a grad u) = g with zero Neumann data and mean(u) = 0.

    The right-hand side is projected onto zero mass-mean first; a result
    flag records whether a non-negligible projection happened.
    """
    values = g.values if isinstance(g, DiscreteField) else np.asarray(g, dtype=float)
    if values.shape != (system.n,):
        raise ValidationError("source field does not match the system size")
    mean_g = system.mean(values)
    scale = float(np.max(np.abs(values))) or 1.0
    projected = abs(mean_g) > 1e-10 * scale
    g_tilde = values - mean_g
    b = system.mass.dot(g_tilde)

    u = np.zeros(system.n)
    u[1:] = system._source_lu().solve(b[1:])
    residual = np.linalg.norm(system.stiffness.dot(u) - b)
    b_norm = np.linalg.norm(b) or 1.0
    if not np.isfinite(residual) or residual > 1e-8 * b_norm:
        raise SolverError(f"source solve residual {residual:.2e} too large")
    u -= system.mean(u)
    return DiscreteField(values=u, mesh=system.mesh, projected=projected,
                         mean=system.mean(u))


# ---------------------------------------------------------------------------
# eigensolver
# ---------------------------------------------------------------------------
def solve_eigen(system: AssembledSystem, count: int, seed: int = 0) -> list:
    """Smallest `count` eigenpairs of K u = lambda M u, mass-orthonormal.

    Returns a list of (lambda, DiscreteField), lambda ascending,
    lambda_1 ~= 0 with the constant eigenvector.
    """
    if not 1 <= count <= 300:
        raise ValidationError("count must be in [1, 300]")
    if count >= system.n - 1:
        raise ValidationError("count too large for this mesh")
    lams, vecs = _eigen_arrays(system, count, seed)
    fields = [DiscreteField(values=vecs[:, j], mesh=system.mesh) for j in range(count)]
    return [(float(lams[j]), fields[j]) for j in range(count)]


def _eigen_arrays(system: AssembledSystem, count: int, seed: int = 0):
    n = system.n
    if n <= _DENSE_EIGEN_LIMIT:
        lams, vecs = _eigen_dense(system, count)
    else:
        sigma = -0.5 * (4.0 * np.pi / system.domain_measure)
        rng = np.random.default_rng(seed)
        v0 = rng.standard_normal(n)
        try:
            lams, vecs = spla.eigsh(
                system.stiffness,
                k=count,
                M=system.mass,
                sigma=sigma,
                which="LM",
                v0=v0,
                ncv=min(n - 1, max(2 * count + 20, 40)),
            )
        except (spla.ArpackError, RuntimeError) as exc:
            if n <= _DENSE_FALLBACK_LIMIT:
                lams, vecs = _eigen_dense(system, count)
            else:
                raise SolverError(f"eigensolver failed: {exc}") from exc
    order = np.argsort(lams)
    lams, vecs = lams[order], vecs[:, order]
    vecs = _mass_orthonormalize(system, vecs)
    gram = vecs.T @ system.mass.dot(vecs)
    if np.max(np.abs(gram - np.eye(count))) > 1e-8:
        raise SolverError("eigenvectors failed mass-orthonormality")
    return lams, vecs


def _eigen_dense(system: AssembledSystem, count: int):
    k = system.stiffness.toarray()
    m = system.mass.toarray()
    lams, vecs = scipy.linalg.eigh(k, m, subset_by_index=[0, count - 1])
    return lams, vecs


def _mass_orthonormalize(system: AssembledSystem, vecs: np.ndarray) -> np.ndarray:
    gram = vecs.T @ system.mass.dot(vecs)
    chol = np.linalg.cholesky(gram)
    return vecs @ np.linalg.inv(chol).T


# ---------------------------------------------------------------------------
# clustering and matching
# ---------------------------------------------------------------------------
def cluster_spectrum(
    eigenpairs: list,
    multiplicities: Optional[Sequence[int]] = None,
    rel_gap: float = 1e-5,
) -> list:
    """Group (lambda, DiscreteField) pairs into DiscreteGroups.

    With `multiplicities` (e.g. from the analytic disk spectrum) the
    pairs are chunked by rank; otherwise consecutive relative gaps below
    `rel_gap` merge.
    """
    lams = np.array([p[0] for p in eigenpairs])
    vecs = np.column_stack([p[1].values for p in eigenpairs])
    groups = []
    if multiplicities is not None:
        pos = 0
        for rank, m in enumerate(multiplicities, start=1):
            if pos + m > len(lams):
                break
            groups.append(
                DiscreteGroup(lambdas=lams[pos : pos + m], vectors=vecs[:, pos : pos + m],
                              rank=rank)
            )
            pos += m
        return groups
    start = 0
    rank = 1
    for j in range(1, len(lams) + 1):
        end_of_cluster = j == len(lams) or (
            lams[j] - lams[j - 1] > rel_gap * max(abs(lams[j]), 1e-30)
        )
        if end_of_cluster:
            groups.append(DiscreteGroup(lambdas=lams[start:j], vectors=vecs[:, start:j], rank=rank))
            start = j
            rank += 1
    return groups


def match_groups(
    unperturbed: Sequence[DiscreteGroup],
    perturbed_spectrum: list,
    system: AssembledSystem,
    min_overlap: float = 0.5,
) -> list:
    """Match each unperturbed group to the perturbed eigenpairs with the
    largest projection energy onto the group's span."""
    lams = np.array([p[0] for p in perturbed_spectrum])
    vecs = np.column_stack([p[1].values for p in perturbed_spectrum])
    proj = system.mass.dot(vecs)
    used = np.zeros(len(lams), dtype=bool)
    out = []
    for group in unperturbed:
        m = group.multiplicity
        energy = np.sum((group.vectors.T @ proj) ** 2, axis=0)  # (n_pert,)
        energy = np.where(used, -np.inf, energy)
        pick = np.argsort(energy)[::-1][:m]
        overlap = float(np.mean(energy[pick]))
        if len(pick) < m or overlap < min_overlap:
            raise MatchingError(
                f"group rank {group.rank}: overlap {overlap:.3f} < {min_overlap} "
                "(perturbation too large or mesh too coarse)"
            )
        used[pick] = True
        order = np.sort(pick)
        out.append(
            PerturbedGroup(
                lambdas=lams[order],
                vectors=vecs[:, order],
                matched_group=group,
                overlap=overlap,
            )
        )
    return out


@dataclass
class SceneOperators:
    """Perturbed and unperturbed systems sharing one inclusion-conforming
    mesh, so eigenvalue differences are same-mesh differences."""

    config: object
    mesh: Mesh
    unperturbed: AssembledSystem
    perturbed: AssembledSystem


def build_operators(config) -> SceneOperators:
    from .geometry import build_mesh

    mesh = build_mesh(config)
    active = tuple(inc for inc in config.inclusions if inc.epsilon > 0.0)
    return SceneOperators(
        config=config,
        mesh=mesh,
        unperturbed=assemble(mesh, ()),
        perturbed=assemble(mesh, active),
    )


# ---------------------------------------------------------------------------
# point location for DiscreteField.evaluate
# ---------------------------------------------------------------------------
_LOCATE_CACHE: dict = {}


def _locate(mesh: Mesh, points: np.ndarray):
    from scipy.spatial import cKDTree

    key = id(mesh)
    if key not in _LOCATE_CACHE:
        _LOCATE_CACHE[key] = cKDTree(mesh.centroids)
    tree = _LOCATE_CACHE[key]
    tri_idx = np.empty(len(points), dtype=np.int64)
    bary = np.empty((len(points), 3))
    p = mesh.nodes[mesh.triangles]
    for k_guess in (12, 48):
        _, cand = tree.query(points, k=k_guess)
        found = np.zeros(len(points), dtype=bool)
        for c in range(cand.shape[1]):
            t = cand[:, c]
            b = _barycentric(p[t], points)
            ok = (~found) & np.all(b >= -1e-9, axis=1)
            tri_idx[ok] = t[ok]
            bary[ok] = b[ok]
            found |= ok
        if np.all(found):
            return tri_idx, bary
    raise SolverError("point location failed; points outside the mesh?")


def _barycentric(tri_pts: np.ndarray, points: np.ndarray) -> np.ndarray:
    a, b, c = tri_pts[:, 0], tri_pts[:, 1], tri_pts[:, 2]
    v0 = b - a
    v1 = c - a
    v2 = points - a
    den = v0[:, 0] * v1[:, 1] - v1[:, 0] * v0[:, 1]
    w1 = (v2[:, 0] * v1[:, 1] - v1[:, 0] * v2[:, 1]) / den
    w2 = (v0[:, 0] * v2[:, 1] - v2[:, 0] * v0[:, 1]) / den
    return np.column_stack([1.0 - w1 - w2, w1, w2])
