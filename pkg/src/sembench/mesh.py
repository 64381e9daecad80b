"""Tensor-product hexahedral box meshes and per-element geometric factors.

The element count is E = 2^k, split across the three directions so that no
direction has more than twice the elements of another.  Node coordinates come
from per-direction global 1D lattices, so adjacent elements share face
coordinates bitwise.  A smooth sine displacement (amplitude 0.05 by default)
makes every element genuinely curvilinear while keeping the Jacobian positive.

Geometric factors are stored per element, per quadrature point: the six
distinct entries of the symmetric metric tensor G, the diagonal mass weight
rho_i rho_j rho_k J, and the Jacobian determinant J.  That is 8 q^3 reals per
element; the global tensor-product layout of the element array is never
exploited downstream.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .basis import Basis1D
from .quadrature import gauss_lobatto_legendre
from .tensors import contract_dir

MAX_K = 21
MAX_P = 15

# G entry order: (11, 12, 13, 22, 23, 33).
G_INDEX = {(0, 0): 0, (0, 1): 1, (0, 2): 2, (1, 1): 3, (1, 2): 4, (2, 2): 5}


class MeshError(ValueError):
    pass


def _deform_none(x, y, z, amplitude, extents):
    return np.zeros_like(x)


def _deform_sine(x, y, z, amplitude, extents):
    (x0, y0, z0), (x1, y1, z1) = extents
    sx = np.sin(np.pi * (x - x0) / (x1 - x0))
    sy = np.sin(np.pi * (y - y0) / (y1 - y0))
    sz = np.sin(np.pi * (z - z0) / (z1 - z0))
    return amplitude * sx * sy * sz


DEFORMATIONS = {"none": _deform_none, "sine": _deform_sine}


def box_dims(k: int) -> tuple:
    """Split E = 2^k into (Ex, Ey, Ez), each a power of two, ratio <= 2."""
    m, r = divmod(k, 3)
    if r == 0:
        exps = (m, m, m)
    elif r == 1:
        exps = (m + 1, m, m)
    else:
        exps = (m + 1, m, m + 1)
    return tuple(2 ** e for e in exps)


@dataclass(frozen=True)
class BoxMesh:
    """A deformed tensor-product hex mesh on an axis-aligned box.

    elem_coords has shape (E, 3, p1, p1, p1): component c of the coordinate
    of node (iz, iy, ix) of element e is elem_coords[e, c, iz, iy, ix].
    Elements are ordered x-fastest: e = ex + Ex*(ey + Ey*ez).
    """

    k: int
    p: int
    dims: tuple
    extents: tuple
    deformation: str
    amplitude: float
    nodes_1d: np.ndarray
    elem_coords: np.ndarray

    def __post_init__(self):
        self.nodes_1d.flags.writeable = False
        self.elem_coords.flags.writeable = False

    @property
    def E(self) -> int:
        return 2 ** self.k

    @property
    def p1(self) -> int:
        return self.p + 1

    @property
    def n_points(self) -> int:
        """Reported problem size n = p^3 E (the rate-metric convention)."""
        return self.p ** 3 * self.E

    @property
    def n_true(self) -> int:
        """Unique global lattice nodes of the non-periodic box."""
        ex, ey, ez = self.dims
        return (self.p * ex + 1) * (self.p * ey + 1) * (self.p * ez + 1)

    @property
    def element_widths(self) -> tuple:
        (x0, y0, z0), (x1, y1, z1) = self.extents
        ex, ey, ez = self.dims
        return ((x1 - x0) / ex, (y1 - y0) / ey, (z1 - z0) / ez)


def build_box_mesh(k: int, p: int, extents=((0.0, 0.0, 0.0), (1.0, 1.0, 1.0)),
                   deformation: str = "sine", amplitude: float = 0.05) -> BoxMesh:
    """Build the E = 2^k box mesh of geometry order p.

    Args:
        k: log2 of the element count, 0 <= k <= 21.
        p: geometry (and field) order, 1 <= p <= 15.
        extents: ((x0,y0,z0), (x1,y1,z1)) corners of the box.
        deformation: "none" or "sine"; the sine displacement vanishes on
            the boundary, so the domain stays the box.
        amplitude: deformation amplitude.

    Returns:
        BoxMesh with bitwise-shared face node coordinates.
    """
    if not 0 <= k <= MAX_K:
        raise MeshError(f"element exponent k={k} outside supported range 0..{MAX_K}")
    if not 1 <= p <= MAX_P:
        raise MeshError(f"order p={p} outside supported range 1..{MAX_P}")
    if deformation not in DEFORMATIONS:
        raise MeshError(f"unknown deformation {deformation!r}")
    dims = box_dims(k)
    p1 = p + 1
    nodes = gauss_lobatto_legendre(p1).points

    # One global coordinate lattice per direction; element nodes index
    # into it, so shared faces reference identical floats by construction.
    lattices = []
    for d in range(3):
        lo, hi = extents[0][d], extents[1][d]
        ed = dims[d]
        h = (hi - lo) / ed
        lat = np.empty(ed * p + 1)
        for e in range(ed):
            lat[e * p:(e + 1) * p] = lo + h * (e + 0.5 * (nodes[:p] + 1.0))
        lat[-1] = hi
        lattices.append(lat)

    ex, ey, ez = dims
    e_idx = np.arange(2 ** k)
    exs = e_idx % ex
    eys = (e_idx // ex) % ey
    ezs = e_idx // (ex * ey)
    node_i = np.arange(p1)

    # Gather per-element coordinates from the lattices.
    gx = exs[:, None] * p + node_i[None, :]          # (E, p1)
    gy = eys[:, None] * p + node_i[None, :]
    gz = ezs[:, None] * p + node_i[None, :]
    x = lattices[0][gx][:, None, None, :] * np.ones((1, p1, p1, 1))
    y = lattices[1][gy][:, None, :, None] * np.ones((1, p1, 1, p1))
    z = lattices[2][gz][:, :, None, None] * np.ones((1, 1, p1, p1))

    delta = DEFORMATIONS[deformation](x, y, z, amplitude, extents)
    widths = np.array([extents[1][d] - extents[0][d] for d in range(3)])
    coords = np.stack([x + widths[0] * delta,
                       y + widths[1] * delta,
                       z + widths[2] * delta], axis=1)
    return BoxMesh(k, p, dims, extents, deformation, amplitude, nodes, coords)


@dataclass(frozen=True)
class GeomFactors:
    """Quadrature-point geometry: G tensor, mass diagonal, Jacobian det.

    G has shape (E, 6, q, q, q) in the order (G11, G12, G13, G22, G23, G33);
    mass_diag and jac_det have shape (E, q, q, q).  Exactly 8 q^3 stored
    reals per element.
    """

    q: int
    G: np.ndarray
    mass_diag: np.ndarray
    jac_det: np.ndarray

    def __post_init__(self):
        for a in (self.G, self.mass_diag, self.jac_det):
            a.flags.writeable = False

    @property
    def E(self) -> int:
        return self.G.shape[0]

    @property
    def words_per_element(self) -> int:
        return 8 * self.q ** 3


def compute_geometric_factors(mesh: BoxMesh, basis: Basis1D) -> GeomFactors:
    """Evaluate metric terms of the isoparametric mapping at quadrature points.

    The Jacobian dx/dr is built from J_hat/D_hat contractions of the element
    coordinates, inverted in closed form (3x3 adjugate), and combined with
    the determinant and quadrature weights into
    G_mm' = sum_l (dr_m/dx_l)(dr_m'/dx_l) * J * rho_i rho_j rho_k.

    Raises:
        MeshError: if any quadrature point has a non-positive or nearly
            singular Jacobian determinant (inverted element).
    """
    if basis.p != mesh.p:
        raise MeshError("basis order must match mesh geometry order")
    q = basis.q
    w = basis.quad.weights
    w3 = w[:, None, None] * w[None, :, None] * w[None, None, :]

    # dxdr[l][m] = d x_l / d r_m at every quadrature point, shape (E,q,q,q).
    dxdr = [[None] * 3 for _ in range(3)]
    for m in range(3):
        ops = [basis.J_hat] * 3
        ops[m] = basis.D_hat
        for l in range(3):
            t = contract_dir(ops[0], mesh.elem_coords[:, l], 0)
            t = contract_dir(ops[1], t, 1)
            t = contract_dir(ops[2], t, 2)
            dxdr[l][m] = t

    (xr, xs, xt), (yr, ys, yt), (zr, zs, zt) = dxdr
    det = (xr * (ys * zt - yt * zs)
           - xs * (yr * zt - yt * zr)
           + xt * (yr * zs - ys * zr))

    hx, hy, hz = mesh.element_widths
    scale3 = abs(hx * hy * hz)
    bad = det <= 1e-14 * scale3
    if np.any(bad):
        e, iz, iy, ix = (int(i[0]) for i in np.nonzero(bad))
        raise MeshError(
            f"inverted element {e} at quadrature point ({iz},{iy},{ix}): "
            f"jacobian determinant {det[bad][0]:.3e}")

    # Closed-form adjugate rows: drdx[m][l] = d r_m / d x_l.
    inv_det = 1.0 / det
    drdx = [
        [(ys * zt - yt * zs) * inv_det, (xt * zs - xs * zt) * inv_det,
         (xs * yt - xt * ys) * inv_det],
        [(yt * zr - yr * zt) * inv_det, (xr * zt - xt * zr) * inv_det,
         (xt * yr - xr * yt) * inv_det],
        [(yr * zs - ys * zr) * inv_det, (xs * zr - xr * zs) * inv_det,
         (xr * ys - xs * yr) * inv_det],
    ]

    wj = w3[None, :, :, :] * det
    E = mesh.E
    G = np.empty((E, 6, q, q, q))
    for (m, mp), slot in G_INDEX.items():
        acc = drdx[m][0] * drdx[mp][0]
        acc += drdx[m][1] * drdx[mp][1]
        acc += drdx[m][2] * drdx[mp][2]
        G[:, slot] = acc * wj
    return GeomFactors(q, G, wj.copy(), det)
