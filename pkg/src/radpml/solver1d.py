"""Finite-element time-domain solvers for one-dimensional PML model problems.

Two geometries share one assembler:

* ``radial``: the angularly symmetric, isotropic (``A = a I``) reduction of the
  frequency-shifted first-order PML system, posed on ``r > 0`` with the
  measure ``r dr``;
* ``halfline``: ``u_tt = u_xx`` on ``x > 0`` with Dirichlet data ``u(t, 0) = g(t)``.

Radial unknowns and equations (``sigma`` is the damping, ``sigma_t`` its
radial average, ``gamma`` the frequency shift)::

    u_t       = -(sigma + sigma_t) u + (gamma (sigma + sigma_t) - sigma sigma_t) v
                + gamma sigma sigma_t w + r^{-1} (r p)_r + f
    v_t       = u - gamma v
    w_t       = v - gamma w
    p_t / a   = -(sigma - sigma_t) (p - q) / a + u_r
    q_t       = (sigma_t + gamma) (p - q)

Eliminating ``v, w, q`` at Laplace frequency ``s`` gives back
``s d dt u = div p`` and ``p = a (dt / d) u_r / s``. The half-line system is
the same with ``sigma_t`` dropped::

    u_t = -sigma u + sigma gamma v + p_x,   v_t = u - gamma v,
    p_t = -sigma p + sigma gamma q + u_x,   q_t = p - gamma q.

``u`` is continuous Lagrange of degree ``k`` on Gauss-Lobatto nodes, ``p``
discontinuous of degree ``k - 1``. The auxiliary fields ``v, w`` (continuous)
and ``q`` (discontinuous) live only where the damping is active. Three
exterior treatments are available: a layer of width ``L`` closed by a
Dirichlet wall, the same layer with its coordinate mapped onto ``[R, inf)``,
and Hardy-space infinite elements attached at ``R``.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from numpy.polynomial import legendre

from .anisotropy import Anisotropy
from .hardy import RadialBasisSpec, hardy_matrices
from .scaling import ShiftedScaling

logger = logging.getLogger(__name__)

__all__ = [
    "FIELDS",
    "Geometry",
    "Region",
    "Mesh1D",
    "TruncatedPML",
    "MappedPML",
    "InfiniteElement",
    "ExteriorTreatment",
    "TimeGrid",
    "Solver1DState",
    "FirstOrderSystem",
    "RadialSource",
    "RunResult",
    "MeshTreatmentMismatch",
    "SingularSteppingMatrixError",
    "DefectivePencilWarning",
    "shifted_coefficients",
    "assemble_radial_system",
    "assemble_halfline_system",
    "step_crank_nicolson",
    "simulate",
    "energy",
    "discrete_spectrum",
    "evaluation_matrix",
    "interior_quadrature",
    "interpolate_initial",
]

FIELDS = ("u", "v", "w", "p", "q")


class MeshTreatmentMismatch(ValueError):
    """The mesh does not fit the requested exterior treatment."""


class SingularSteppingMatrixError(ArithmeticError):
    """``M - dt/2 K`` could not be factorized."""


class DefectivePencilWarning(RuntimeWarning):
    """Eigenpairs of ``s M x = K x`` with large residuals."""


class Geometry(str, Enum):
    RADIAL = "radial"
    HALFLINE = "halfline"


class Region(str, Enum):
    INTERIOR = "interior"
    LAYER = "layer"


# ---------------------------------------------------------------------------
# Mesh and exterior treatments
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class Mesh1D:
    """Element partition of an interval with interior/layer tags.

    Attributes
    ----------
    nodes : ndarray
        Strictly ascending element endpoints.
    order : int
        Polynomial degree ``k`` of the continuous field.
    tags : tuple of Region
        One tag per element.
    """

    nodes: np.ndarray
    order: int
    tags: Tuple[Region, ...]

    def __post_init__(self):
        nodes = np.asarray(self.nodes, dtype=float)
        if nodes.ndim != 1 or nodes.size < 2:
            raise ValueError("need at least one element")
        if not np.all(np.diff(nodes) > 0):
            raise ValueError("mesh nodes must be strictly ascending")
        if int(self.order) < 1:
            raise ValueError("order must be at least 1")
        tags = tuple(Region(t) for t in self.tags)
        if len(tags) != nodes.size - 1:
            raise ValueError("one tag per element is required")
        nodes.setflags(write=False)
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "order", int(self.order))
        object.__setattr__(self, "tags", tags)

    @property
    def n_elements(self) -> int:
        return self.nodes.size - 1

    def elements(self, region: Optional[Region] = None) -> List[int]:
        if region is None:
            return list(range(self.n_elements))
        return [e for e, t in enumerate(self.tags) if t is region]

    @classmethod
    def layered(cls, radius_pml: float, width: float, h: float, order: int,
                start: float = 0.0, layer_h: Optional[float] = None) -> "Mesh1D":
        """Uniform elements on ``[start, R]`` and, if ``width > 0``, on ``[R, R + width]``.

        Element counts are rounded so that ``R`` is always a node.
        """
        if not radius_pml > start:
            raise ValueError("need radius_pml > start")
        n_in = max(int(round((radius_pml - start) / h)), 1)
        parts = [np.linspace(start, radius_pml, n_in + 1)]
        tags = [Region.INTERIOR] * n_in
        if width > 0:
            n_out = max(int(round(width / (layer_h or h))), 1)
            parts.append(np.linspace(radius_pml, radius_pml + width, n_out + 1)[1:])
            tags += [Region.LAYER] * n_out
        return cls(np.concatenate(parts), order, tuple(tags))


@dataclass(frozen=True)
class TruncatedPML:
    """Layer ``(R, R + width)`` closed by a homogeneous Dirichlet wall."""

    width: float

    def __post_init__(self):
        if not self.width > 0:
            raise ValueError("layer width must be positive")


@dataclass(frozen=True)
class MappedPML:
    """Layer ``[R, R + width)`` whose coordinate is mapped onto ``[R, inf)``.

    Test functions are multiplied by ``((R + width - rho) / width)^power``,
    which keeps every integrand bounded and leaves the outer end free.
    """

    width: float
    test_weight_power: int = 3

    def __post_init__(self):
        if not self.width > 0:
            raise ValueError("layer width must be positive")
        if int(self.test_weight_power) != self.test_weight_power:
            raise ValueError("test weight power must be an integer")


@dataclass(frozen=True)
class InfiniteElement:
    """Hardy-space radial basis on ``r >= R`` in the variable ``r - R``."""

    spec: RadialBasisSpec


ExteriorTreatment = Union[TruncatedPML, MappedPML, InfiniteElement]


@dataclass(frozen=True)
class TimeGrid:
    dt: float
    n_steps: int

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.n_steps < 0:
            raise ValueError("n_steps must be nonnegative")

    @property
    def times(self) -> np.ndarray:
        return self.dt * np.arange(self.n_steps + 1)


# ---------------------------------------------------------------------------
# Coefficients of the first-order system
# ---------------------------------------------------------------------------
def shifted_coefficients(geometry: Geometry, sig, sigt, gamma: float, a: float = 1.0) -> Dict[Tuple[str, str], object]:
    """Reaction coefficients ``c[(row, col)]`` of ``M X_t = K X``.

    Mass coefficients are stored under ``(f, f)`` keys of the separate
    dictionary returned by :func:`_mass_coefficients`.
    """
    geometry = Geometry(geometry)
    if geometry is Geometry.RADIAL:
        return {
            ("u", "u"): -(sig + sigt),
            ("u", "v"): gamma * (sig + sigt) - sig * sigt,
            ("u", "w"): gamma * sig * sigt,
            ("v", "u"): 1.0 + 0.0 * sig,
            ("v", "v"): -gamma + 0.0 * sig,
            ("w", "v"): 1.0 + 0.0 * sig,
            ("w", "w"): -gamma + 0.0 * sig,
            ("p", "p"): -(sig - sigt) / a,
            ("p", "q"): (sig - sigt) / a,
            ("q", "p"): sigt + gamma,
            ("q", "q"): -(sigt + gamma),
        }
    return {
        ("u", "u"): -sig + 0.0 * sigt,
        ("u", "v"): sig * gamma + 0.0 * sigt,
        ("v", "u"): 1.0 + 0.0 * sig,
        ("v", "v"): -gamma + 0.0 * sig,
        ("p", "p"): -sig + 0.0 * sigt,
        ("p", "q"): sig * gamma + 0.0 * sigt,
        ("q", "p"): 1.0 + 0.0 * sig,
        ("q", "q"): -gamma + 0.0 * sig,
    }


def _mass_coefficients(geometry: Geometry, a: float) -> Dict[str, float]:
    inv_a = 1.0 / a if geometry is Geometry.RADIAL else 1.0
    return {"u": 1.0, "v": 1.0, "w": 1.0, "p": inv_a, "q": 1.0}


# ---------------------------------------------------------------------------
# Reference element
# ---------------------------------------------------------------------------
def _gauss_lobatto(k: int) -> np.ndarray:
    if k == 1:
        return np.array([-1.0, 1.0])
    inner = legendre.Legendre.basis(k).deriv().roots()
    return np.concatenate([[-1.0], np.sort(inner.real), [1.0]])


def _lagrange_tables(nodes: np.ndarray, x: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Values and derivatives of the Lagrange basis on ``nodes`` at ``x``."""
    n = nodes.size
    coef = np.linalg.inv(legendre.legvander(nodes, n - 1))
    val = legendre.legvander(x, n - 1) @ coef
    der = np.zeros_like(val)
    for j in range(n):
        der[:, j] = legendre.legval(x, legendre.legder(coef[:, j]))
    return val, der


@dataclass(frozen=True)
class _Reference:
    order: int
    cg_nodes: np.ndarray
    dg_nodes: np.ndarray
    xq: np.ndarray
    wq: np.ndarray
    tables: Dict[str, Tuple[np.ndarray, np.ndarray]]

    @classmethod
    def build(cls, order: int, extra: int = 4) -> "_Reference":
        cg = _gauss_lobatto(order)
        dg = legendre.leggauss(order)[0]
        xq, wq = legendre.leggauss(order + extra)
        return cls(order, cg, dg, xq, wq, {"cg": _lagrange_tables(cg, xq), "dg": _lagrange_tables(dg, xq)})


@dataclass(frozen=True)
class _Space:
    """Finite element space of one field on a subset of elements."""

    kind: str  # "cg" or "dg"
    size: int
    dofs: Dict[int, np.ndarray]


def _cg_space(order: int, elements: Sequence[int]) -> _Space:
    if not elements:
        return _Space("cg", 0, {})
    raw = {e: order * e + np.arange(order + 1) for e in elements}
    used = np.unique(np.concatenate(list(raw.values())))
    return _Space("cg", int(used.size), {e: np.searchsorted(used, g) for e, g in raw.items()})


def _dg_space(order: int, elements: Sequence[int]) -> _Space:
    n_loc = order
    return _Space("dg", n_loc * len(elements), {e: n_loc * i + np.arange(n_loc) for i, e in enumerate(elements)})


# ---------------------------------------------------------------------------
# Per-element geometry weights
# ---------------------------------------------------------------------------
@dataclass
class _ElementData:
    """Quadrature data of one element.

    ``mass`` multiplies value-value products, ``div_d`` and ``div_v`` the
    derivative and the value of the test function in the divergence
    coupling, and ``grad`` the test value in the gradient coupling.
    """

    x: np.ndarray
    jac: float
    wq: np.ndarray
    mass: np.ndarray
    div_d: np.ndarray
    div_v: np.ndarray
    grad: np.ndarray
    sig: np.ndarray
    sigt: np.ndarray


def _element_data(geometry: Geometry, mesh: Mesh1D, ref: _Reference, e: int, scaling: ShiftedScaling,
                  treatment: Optional[ExteriorTreatment]) -> _ElementData:
    a, b = mesh.nodes[e], mesh.nodes[e + 1]
    jac = 0.5 * (b - a)
    x = a + (ref.xq + 1.0) * jac
    wq = ref.wq * jac
    R = scaling.profile.radius_pml
    sc = scaling.profile.sigma_c
    layer = mesh.tags[e] is Region.LAYER
    zero = np.zeros_like(x)
    if layer and isinstance(treatment, MappedPML):
        L = treatment.width
        P = treatment.test_weight_power
        delta = R + L - x
        if geometry is Geometry.RADIAL:
            mass = R * R * L ** (2 - P) * delta ** (P - 3)
            div_d = R * L ** (1 - P) * delta ** (P - 1)
            div_v = -P * R * L ** (1 - P) * delta ** (P - 2)
            sigt = sc * (x - R) / L
        else:
            mass = R * L ** (1 - P) * delta ** (P - 2)
            div_d = (delta / L) ** P
            div_v = -P * delta ** (P - 1) / L ** P
            sigt = zero
        return _ElementData(x, jac, wq, mass, div_d, div_v, div_d.copy(), sc + zero, sigt)
    measure = x if geometry is Geometry.RADIAL else np.ones_like(x)
    if layer:
        sig = sc + zero
        sigt = sc * (x - R) / x if geometry is Geometry.RADIAL else zero
    else:
        sig = sigt = zero
    return _ElementData(x, jac, wq, measure, measure, zero, measure, sig, sigt)


# ---------------------------------------------------------------------------
# Assembled system
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class FirstOrderSystem:
    """Semi-discrete system ``M X_t = K X + F(t)`` with optional Dirichlet rows.

    Attributes
    ----------
    mass, stiffness : sparse matrix
        ``M`` (symmetric positive definite) and ``K``.
    slices : dict
        Position of each field of ``FIELDS`` in ``X``; absent fields are empty.
    fixed : ndarray of int
        Rows/columns held at prescribed values.
    fixed_values : callable or None
        ``t -> values`` for the ``fixed`` entries; zero when ``None``.
    load : callable or None
        ``t -> F(t)``.
    energy_mass : dict
        ``"interior"`` and ``"all"`` quadratic forms for :func:`energy`.
    """

    geometry: Geometry
    mesh: Mesh1D
    treatment: Optional[ExteriorTreatment]
    scaling: ShiftedScaling
    mass: sp.csr_matrix
    stiffness: sp.csr_matrix
    slices: Dict[str, slice]
    fixed: np.ndarray
    fixed_values: Optional[Callable] = None
    load: Optional[Callable] = None
    energy_mass: Dict[str, sp.csr_matrix] = field(default_factory=dict, repr=False)
    node_coords: np.ndarray = field(default=None, repr=False)
    a: float = 1.0
    _factor_cache: Dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def size(self) -> int:
        return self.mass.shape[0]

    @property
    def free(self) -> np.ndarray:
        mask = np.ones(self.size, dtype=bool)
        mask[self.fixed] = False
        return np.flatnonzero(mask)

    def with_load(self, load: Optional[Callable]) -> "FirstOrderSystem":
        return replace(self, load=load, _factor_cache={})


@dataclass
class Solver1DState:
    """Coefficient arrays of all fields at time ``t``."""

    u: np.ndarray
    v: np.ndarray
    w: np.ndarray
    p: np.ndarray
    q: np.ndarray
    t: float = 0.0

    @classmethod
    def zeros(cls, system: FirstOrderSystem) -> "Solver1DState":
        return cls.from_vector(system, np.zeros(system.size), 0.0)

    @classmethod
    def from_vector(cls, system: FirstOrderSystem, x: np.ndarray, t: float) -> "Solver1DState":
        parts = {f: np.array(x[system.slices[f]]) for f in FIELDS}
        return cls(t=float(t), **parts)

    def vector(self) -> np.ndarray:
        return np.concatenate([self.u, self.v, self.w, self.p, self.q])


class _Builder:
    """Collects COO triplets per field pair."""

    def __init__(self, sizes: Dict[str, int]):
        self.sizes = sizes
        self.offsets = {}
        off = 0
        for f in FIELDS:
            self.offsets[f] = off
            off += sizes[f]
        self.n = off
        self.rows: List[np.ndarray] = []
        self.cols: List[np.ndarray] = []
        self.vals: List[np.ndarray] = []

    def add(self, rf: str, cf: str, rdofs, cdofs, block):
        r = self.offsets[rf] + np.asarray(rdofs)
        c = self.offsets[cf] + np.asarray(cdofs)
        rr, cc = np.meshgrid(r, c, indexing="ij")
        self.rows.append(rr.ravel())
        self.cols.append(cc.ravel())
        self.vals.append(np.asarray(block, dtype=float).ravel())

    def matrix(self) -> sp.csr_matrix:
        if not self.rows:
            return sp.csr_matrix((self.n, self.n))
        return sp.coo_matrix((np.concatenate(self.vals), (np.concatenate(self.rows), np.concatenate(self.cols))),
                             shape=(self.n, self.n)).tocsr()

    @property
    def slices(self) -> Dict[str, slice]:
        return {f: slice(self.offsets[f], self.offsets[f] + self.sizes[f]) for f in FIELDS}


def _check_mesh(mesh: Mesh1D, scaling: ShiftedScaling, treatment: Optional[ExteriorTreatment], start: float) -> None:
    R = scaling.profile.radius_pml
    tol = 1e-12 * max(1.0, R)
    if abs(mesh.nodes[0] - start) > tol:
        raise MeshTreatmentMismatch(f"mesh must start at {start}")
    interior = mesh.elements(Region.INTERIOR)
    layer = mesh.elements(Region.LAYER)
    if not interior:
        raise MeshTreatmentMismatch("mesh has no interior elements")
    if abs(mesh.nodes[interior[-1] + 1] - R) > tol or (layer and layer[0] != interior[-1] + 1):
        raise MeshTreatmentMismatch("interior elements must end exactly at R, followed by the layer")
    if isinstance(treatment, InfiniteElement) or treatment is None:
        if layer:
            raise MeshTreatmentMismatch("this treatment expects a mesh without layer elements")
        return
    if not layer:
        raise MeshTreatmentMismatch("layer treatment needs layer elements")
    if abs(mesh.nodes[-1] - (R + treatment.width)) > tol:
        raise MeshTreatmentMismatch("layer elements must end exactly at R + L")


def _assemble(geometry: Geometry, scaling: ShiftedScaling, mesh: Mesh1D, treatment: Optional[ExteriorTreatment],
              a: float = 1.0) -> Tuple[_Builder, _Builder, Dict[str, _Builder], Dict[str, _Space], Dict[str, np.ndarray], np.ndarray]:
    k = mesh.order
    ref = _Reference.build(k)
    gamma = scaling.gamma
    sc = scaling.profile.sigma_c
    R = scaling.profile.radius_pml
    damped = sc > 0
    layer = mesh.elements(Region.LAYER)
    allel = mesh.elements()
    spaces = {
        "u": _cg_space(k, allel),
        "p": _dg_space(k, allel),
        "v": _cg_space(k, layer if damped else []),
        "w": _cg_space(k, layer if damped and geometry is Geometry.RADIAL else []),
        "q": _dg_space(k, layer if damped else []),
    }
    ie = treatment if isinstance(treatment, InfiniteElement) else None
    hm = hardy_matrices(ie.spec) if ie else None
    n_ext = hm.size if hm is not None else 0
    sizes = {f: spaces[f].size for f in FIELDS}
    # exterior coefficient offsets inside each field; u_ext[0] is the interface node
    ext_start = {}
    if ie:
        ext_start["u"] = sizes["u"]
        sizes["u"] += n_ext - 1
        for f in ("p", "v", "q") + (("w",) if geometry is Geometry.RADIAL else ()):
            if f in ("v", "w", "q") and not damped:
                continue
            ext_start[f] = sizes[f]
            sizes[f] += n_ext
    Mb, Kb = _Builder(sizes), _Builder(sizes)
    Eb = {"interior": _Builder(sizes), "all": _Builder(sizes)}
    mcoef = _mass_coefficients(geometry, a)

    node_coords = np.zeros(spaces["u"].size)
    for e in allel:
        node_coords[spaces["u"].dofs[e]] = mesh.nodes[e] + (ref.cg_nodes + 1.0) * 0.5 * (mesh.nodes[e + 1] - mesh.nodes[e])

    for e in allel:
        d = _element_data(geometry, mesh, ref, e, scaling, treatment)
        tab = {"cg": ref.tables["cg"], "dg": ref.tables["dg"]}
        in_layer = mesh.tags[e] is Region.LAYER

        def vals(f):
            return tab[spaces[f].kind][0]

        def ders(f):
            return tab[spaces[f].kind][1] / d.jac

        present = [f for f in FIELDS if e in spaces[f].dofs]
        for f in present:
            W = d.wq * d.mass * mcoef[f]
            blk = (vals(f) * W[:, None]).T @ vals(f)
            Mb.add(f, f, spaces[f].dofs[e], spaces[f].dofs[e], blk)
            if f in ("u", "p"):
                Eb["all"].add(f, f, spaces[f].dofs[e], spaces[f].dofs[e], blk)
                if not in_layer:
                    Eb["interior"].add(f, f, spaces[f].dofs[e], spaces[f].dofs[e], blk)
        # u-row divergence and p-row gradient couplings
        du, vu, vp = ders("u"), vals("u"), vals("p")
        div = -((du * (d.wq * d.div_d)[:, None] + vu * (d.wq * d.div_v)[:, None]).T @ vp)
        grad = (vp * (d.wq * d.grad)[:, None]).T @ du
        scale_p = 1.0
        Kb.add("u", "p", spaces["u"].dofs[e], spaces["p"].dofs[e], div)
        Kb.add("p", "u", spaces["p"].dofs[e], spaces["u"].dofs[e], scale_p * grad)
        if in_layer and damped:
            coef = shifted_coefficients(geometry, d.sig, d.sigt, gamma, a)
            for (rf, cf), c in coef.items():
                if e not in spaces[rf].dofs or e not in spaces[cf].dofs:
                    continue
                W = d.wq * d.mass * np.asarray(c, dtype=float)
                if not np.any(W):
                    continue
                blk = (vals(rf) * W[:, None]).T @ vals(cf)
                Kb.add(rf, cf, spaces[rf].dofs[e], spaces[cf].dofs[e], blk)

    if ie:
        _add_infinite_elements(geometry, hm, scaling, a, spaces, ext_start, Mb, Kb, Eb, damped)
    return Mb, Kb, Eb, spaces, ext_start, node_coords


def _ext_dofs(field_name: str, spaces: Dict[str, _Space], ext_start: Dict[str, int], n_ext: int) -> np.ndarray:
    if field_name == "u":
        return np.concatenate([[spaces["u"].size - 1], ext_start["u"] + np.arange(n_ext - 1)])
    return ext_start[field_name] + np.arange(n_ext)


def _add_infinite_elements(geometry, hm, scaling, a, spaces, ext_start, Mb, Kb, Eb, damped):
    """Exterior blocks on ``r >= R`` with basis functions of ``xi = r - R``.

    With ``rho = 1 + xi`` the weight ``r = rho + R - 1`` and
    ``r sigma_t = sigma_c (rho - 1)``, so every radial integral is a
    combination of the unweighted and ``rho``-weighted Hardy matrices.
    """
    R = scaling.profile.radius_pml
    sc = scaling.profile.sigma_c
    gamma = scaling.gamma
    n = hm.size
    radial = geometry is Geometry.RADIAL
    if radial:
        plain = hm.r_mass + (R - 1.0) * hm.mass
        aver = sc * (hm.r_mass - hm.mass)  # int r sigma_t phi phi / (sigma_t-coefficient)
        coup = hm.r_coupling + (R - 1.0) * hm.coupling
    else:
        plain = hm.mass
        aver = np.zeros_like(hm.mass)
        coup = hm.coupling
    mcoef = _mass_coefficients(geometry, a)
    dofs = {f: _ext_dofs(f, spaces, ext_start, n) for f in ext_start}
    for f in dofs:
        blk = mcoef[f] * plain
        Mb.add(f, f, dofs[f], dofs[f], blk)
        if f in ("u", "p"):
            Eb["all"].add(f, f, dofs[f], dofs[f], blk)
    Kb.add("u", "p", dofs["u"], dofs["p"], -coup)
    Kb.add("p", "u", dofs["p"], dofs["u"], coup.T)
    if not damped:
        return
    c0 = shifted_coefficients(geometry, sc, 0.0, gamma, a)
    c1 = shifted_coefficients(geometry, sc, 1.0, gamma, a)
    for key, A in c0.items():
        rf, cf = key
        if rf not in dofs or cf not in dofs:
            continue
        B = float(c1[key]) - float(A)
        blk = float(A) * plain + B * aver
        if np.any(blk):
            Kb.add(rf, cf, dofs[rf], dofs[cf], blk)


def _finish(geometry, scaling, mesh, treatment, a, parts, fixed, fixed_values, load) -> FirstOrderSystem:
    Mb, Kb, Eb, spaces, ext_start, node_coords = parts
    return FirstOrderSystem(
        geometry=geometry,
        mesh=mesh,
        treatment=treatment,
        scaling=scaling,
        mass=Mb.matrix(),
        stiffness=Kb.matrix(),
        slices=Mb.slices,
        fixed=np.asarray(fixed, dtype=int),
        fixed_values=fixed_values,
        load=load,
        energy_mass={k: b.matrix() for k, b in Eb.items()},
        node_coords=node_coords,
        a=a,
    )


@dataclass(frozen=True)
class RadialSource:
    """Separable source ``f(t, r) = time(t) * space(r)``, integrated over the interior."""

    time: Callable
    space: Callable

    @classmethod
    def ring_pulse(cls, amplitude: float = 2400.0, omega: float = 10.0, center: float = 0.7,
                   sharpness: float = 160.0) -> "RadialSource":
        """``amplitude sin(omega t) exp(-sharpness (r - center)^2)``."""
        return cls(lambda t: amplitude * math.sin(omega * t),
                   lambda r: np.exp(-sharpness * (np.asarray(r) - center) ** 2))


def _load_vector(geometry: Geometry, mesh: Mesh1D, size: int, u_off: int, u_space: _Space, space_fn: Callable,
                 extra: int = 8) -> np.ndarray:
    ref = _Reference.build(mesh.order, extra=extra)
    val = ref.tables["cg"][0]
    out = np.zeros(size)
    for e in mesh.elements(Region.INTERIOR):
        a, b = mesh.nodes[e], mesh.nodes[e + 1]
        jac = 0.5 * (b - a)
        x = a + (ref.xq + 1.0) * jac
        w = ref.wq * jac * (x if geometry is Geometry.RADIAL else 1.0) * np.asarray(space_fn(x), dtype=float)
        np.add.at(out, u_off + u_space.dofs[e], val.T @ w)
    return out


def assemble_radial_system(aniso: Anisotropy, scaling: ShiftedScaling, mesh: Mesh1D,
                           treatment: Optional[ExteriorTreatment], source: Optional[RadialSource] = None) -> FirstOrderSystem:
    """Radially symmetric shifted PML system on the measure ``r dr``.

    Parameters
    ----------
    aniso : Anisotropy
        Must be isotropic, ``A = a I``.
    scaling : ShiftedScaling
        Interface radius, damping and shift.
    mesh : Mesh1D
        Starts at ``r = 0``; interior elements end at ``R``. Layer elements
        (truncated or mapped treatments) cover ``[R, R + L]``, in the mapped
        case in the compressed coordinate.
    treatment : TruncatedPML, MappedPML, InfiniteElement or None
        ``None`` gives a bare interior with a natural condition at ``R``.
    source : RadialSource, optional

    Returns
    -------
    FirstOrderSystem
    """
    if not aniso.is_isotropic:
        raise ValueError("the radial reduction needs an isotropic material")
    a = float(aniso.a[0, 0])
    _check_mesh(mesh, scaling, treatment, 0.0)
    parts = _assemble(Geometry.RADIAL, scaling, mesh, treatment, a)
    Mb = parts[0]
    fixed = [Mb.offsets["u"] + parts[3]["u"].size - 1] if isinstance(treatment, TruncatedPML) else []
    load = None
    if source is not None:
        vec = _load_vector(Geometry.RADIAL, mesh, Mb.n, Mb.offsets["u"], parts[3]["u"], source.space)
        tfun = source.time
        load = lambda t, vec=vec, tfun=tfun: tfun(t) * vec
    return _finish(Geometry.RADIAL, scaling, mesh, treatment, a, parts, fixed, None, load)


def assemble_halfline_system(scaling: ShiftedScaling, mesh: Mesh1D, treatment: Optional[ExteriorTreatment],
                             g: Callable) -> FirstOrderSystem:
    """Half-line wave problem with boundary data ``u(t, 0) = g(t)``.

    The boundary value is imposed by replacing the first row of the stepping
    matrix (strong Dirichlet condition).
    """
    if g is None or not callable(g):
        raise ValueError("boundary signal g must be a callable of time")
    g0 = np.asarray(g(np.array([0.0, -1.0])), dtype=float)
    if np.any(g0 != 0.0):
        raise ValueError("boundary signal must be causal: g(t) = 0 for t <= 0")
    _check_mesh(mesh, scaling, treatment, 0.0)
    parts = _assemble(Geometry.HALFLINE, scaling, mesh, treatment)
    Mb = parts[0]
    u0 = Mb.offsets["u"]
    fixed = [u0]
    if isinstance(treatment, TruncatedPML):
        fixed.append(u0 + parts[3]["u"].size - 1)
    n_fixed = len(fixed)

    def values(t, g=g, n_fixed=n_fixed):
        out = np.zeros(n_fixed)
        out[0] = float(g(t))
        return out

    return _finish(Geometry.HALFLINE, scaling, mesh, treatment, 1.0, parts, fixed, values, None)


# ---------------------------------------------------------------------------
# Time stepping
# ---------------------------------------------------------------------------
def _stepper(system: FirstOrderSystem, dt: float):
    key = float(dt)
    hit = system._factor_cache.get(key)
    if hit is not None:
        return hit
    M, K = system.mass, system.stiffness
    A = (M - 0.5 * dt * K).tolil()
    B = (M + 0.5 * dt * K).tolil()
    for i in system.fixed:
        A.rows[i] = [int(i)]
        A.data[i] = [1.0]
        B.rows[i] = []
        B.data[i] = []
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("error", spla.MatrixRankWarning)
            lu = spla.splu(A.tocsc())
    except (RuntimeError, spla.MatrixRankWarning) as exc:
        raise SingularSteppingMatrixError(f"stepping matrix is singular for dt={dt}: {exc}") from exc
    entry = (lu, B.tocsr())
    system._factor_cache[key] = entry
    return entry


def _step_vector(system: FirstOrderSystem, x: np.ndarray, t: float, dt: float) -> np.ndarray:
    lu, B = _stepper(system, dt)
    rhs = B @ x
    if system.load is not None:
        rhs = rhs + dt * system.load(t + 0.5 * dt)
    if system.fixed.size:
        rhs[system.fixed] = system.fixed_values(t + dt) if system.fixed_values is not None else 0.0
    out = lu.solve(rhs)
    if not np.all(np.isfinite(out)):
        raise FloatingPointError("non-finite values after a Crank-Nicolson step")
    return out


def step_crank_nicolson(system: FirstOrderSystem, state: Solver1DState, dt: float) -> Solver1DState:
    """One step of ``(M - dt/2 K) X+ = (M + dt/2 K) X + dt F(t + dt/2)``.

    The LU factorization is cached on ``system`` per step size.
    """
    x = _step_vector(system, state.vector(), state.t, dt)
    return Solver1DState.from_vector(system, x, state.t + dt)


@dataclass
class RunResult:
    """Traces recorded by :func:`simulate` at ``t_0, ..., t_n``."""

    t: np.ndarray
    interior_energy: np.ndarray
    energy: np.ndarray
    probes: Optional[np.ndarray]
    final: Solver1DState


def simulate(system: FirstOrderSystem, grid: TimeGrid, state: Optional[Solver1DState] = None,
             probe_matrix: Optional[sp.spmatrix] = None) -> RunResult:
    """March ``grid.n_steps`` Crank-Nicolson steps from ``state`` (zero by default).

    ``probe_matrix`` (rows applied to ``X``) is recorded at every step, e.g.
    from :func:`evaluation_matrix`.
    """
    st = state or Solver1DState.zeros(system)
    x = st.vector()
    if system.fixed.size and system.fixed_values is not None:
        x[system.fixed] = system.fixed_values(st.t)
    n = grid.n_steps
    times = st.t + grid.dt * np.arange(n + 1)
    e_int = np.empty(n + 1)
    e_all = np.empty(n + 1)
    probes = None if probe_matrix is None else np.empty((n + 1, probe_matrix.shape[0]))
    Ei, Ea = system.energy_mass["interior"], system.energy_mass["all"]
    for i in range(n + 1):
        if i:
            x = _step_vector(system, x, times[i - 1], grid.dt)
        e_int[i] = 0.5 * float(x @ (Ei @ x))
        e_all[i] = 0.5 * float(x @ (Ea @ x))
        if probes is not None:
            probes[i] = probe_matrix @ x
    return RunResult(times, e_int, e_all, probes, Solver1DState.from_vector(system, x, times[-1]))


def energy(system: FirstOrderSystem, state: Solver1DState, region: str = "interior") -> float:
    """Discrete energy ``(|u|^2 + |p|^2 / a) / 2`` over ``region``.

    ``region`` is ``"interior"`` (``r < R``) or ``"all"`` (every element
    and exterior coefficient, with the weights of the assembled mass).
    """
    if region not in system.energy_mass:
        raise ValueError(f"unknown region {region!r}")
    x = state.vector()
    return max(0.5 * float(x @ (system.energy_mass[region] @ x)), 0.0)


# ---------------------------------------------------------------------------
# Spectrum
# ---------------------------------------------------------------------------
def discrete_spectrum(system: FirstOrderSystem, max_dim: int = 4000, residual_tol: float = 1e-8,
                      return_residual: bool = False):
    """Eigenvalues ``s`` of ``s M x = K x`` on the free unknowns, sorted by real part.

    Residuals ``|(s M - K) x|`` are recomputed for unit-norm eigenvectors;
    a :class:`DefectivePencilWarning` is issued when any exceeds
    ``residual_tol`` times ``max(1, |s|)``.
    """
    free = system.free
    if free.size > max_dim:
        raise ValueError(f"system dimension {free.size} exceeds max_dim={max_dim}")
    M = system.mass[free][:, free].toarray()
    K = system.stiffness[free][:, free].toarray()
    vals, vecs = sla.eig(K, M)
    order = np.lexsort((vals.imag, vals.real))
    vals, vecs = vals[order], vecs[:, order]
    vecs = vecs / np.linalg.norm(vecs, axis=0)
    res = np.linalg.norm(M @ vecs * vals[None, :] - K @ vecs, axis=0) / np.maximum(1.0, np.abs(vals))
    worst = float(res.max()) if res.size else 0.0
    if worst > residual_tol:
        warnings.warn(f"eigen-residual {worst:.2e} exceeds {residual_tol:.0e}", DefectivePencilWarning, stacklevel=2)
    if return_residual:
        return vals, worst
    return vals


# ---------------------------------------------------------------------------
# Evaluation helpers
# ---------------------------------------------------------------------------
def evaluation_matrix(system: FirstOrderSystem, points, field_name: str = "u") -> sp.csr_matrix:
    """Sparse rows ``P`` with ``P @ X`` = field values at mesh-coordinate ``points``."""
    pts = np.atleast_1d(np.asarray(points, dtype=float))
    mesh = system.mesh
    if np.any(pts < mesh.nodes[0] - 1e-14) or np.any(pts > mesh.nodes[-1] + 1e-14):
        raise ValueError("evaluation points must lie on the mesh")
    ref = _Reference.build(mesh.order)
    nodes = ref.cg_nodes if field_name in ("u", "v", "w") else ref.dg_nodes
    e_idx = np.clip(np.searchsorted(mesh.nodes, pts, side="right") - 1, 0, mesh.n_elements - 1)
    k = mesh.order
    sl = system.slices[field_name]
    rows, cols, vals = [], [], []
    kind = "cg" if field_name in ("u", "v", "w") else "dg"
    # rebuild the dof map of this field
    if field_name == "u" or field_name == "p":
        elems = mesh.elements()
    else:
        elems = mesh.elements(Region.LAYER)
    space = _cg_space(k, elems) if kind == "cg" else _dg_space(k, elems)
    for i, (x, e) in enumerate(zip(pts, e_idx)):
        if e not in space.dofs:
            raise ValueError(f"field {field_name} has no support at {x}")
        a, b = mesh.nodes[e], mesh.nodes[e + 1]
        xi = 2.0 * (x - a) / (b - a) - 1.0
        v, _ = _lagrange_tables(nodes, np.array([xi]))
        rows.append(np.full(nodes.size, i))
        cols.append(sl.start + space.dofs[e])
        vals.append(v[0])
    return sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                         shape=(pts.size, system.size)).tocsr()


def interior_quadrature(system: FirstOrderSystem, extra: int = 2) -> Tuple[np.ndarray, np.ndarray]:
    """Points and weights of a Gauss rule on the interior elements.

    Weights include the radial measure ``r`` for radial systems.
    """
    mesh = system.mesh
    xq, wq = legendre.leggauss(mesh.order + extra)
    pts, wts = [], []
    for e in mesh.elements(Region.INTERIOR):
        a, b = mesh.nodes[e], mesh.nodes[e + 1]
        jac = 0.5 * (b - a)
        x = a + (xq + 1.0) * jac
        pts.append(x)
        wts.append(wq * jac * (x if system.geometry is Geometry.RADIAL else 1.0))
    return np.concatenate(pts), np.concatenate(wts)


def interpolate_initial(system: FirstOrderSystem, u0: Callable) -> Solver1DState:
    """State with ``u`` interpolated from ``u0`` at the continuous nodes, other fields zero.

    In a mapped layer a node at ``rho`` carries ``u0(R L / (R + L - rho))``;
    the node at ``R + L`` represents infinity and is set to zero. Exterior
    infinite-element coefficients start at zero apart from the interface node.
    """
    st = Solver1DState.zeros(system)
    coords = np.array(system.node_coords, dtype=float)
    vals = np.zeros_like(coords)
    finite = np.ones(coords.size, dtype=bool)
    if isinstance(system.treatment, MappedPML):
        R, L = system.scaling.profile.radius_pml, system.treatment.width
        inside = coords > R
        finite = ~inside | (coords < R + L - 1e-12 * L)
        m = inside & finite
        coords[m] = R * L / (R + L - coords[m])
    vals[finite] = np.asarray(u0(coords[finite]), dtype=float)
    st.u[: coords.size] = vals
    return st
