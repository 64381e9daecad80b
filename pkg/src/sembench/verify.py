"""Self-contained correctness suites run by the `verify` subcommand.

Each suite builds its own small meshes and compares the fast paths against
independent references: explicit sparse matrices for the assembled operator
and the gather-scatter, analytic monomial integrals for quadrature, dense
reconstruction for the even-odd factors.  The explicit Q matrix lives here,
in the oracle, on purpose; the production code never forms it.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import sparse

from .assembly import build_gather_scatter, build_numbering
from .basis import even_odd_apply, even_odd_split, make_basis
from .mesh import GeomFactors, build_box_mesh, compute_geometric_factors
from .operators import (STRATEGY_RTOL, MassOperator, StiffnessOperator,
                        assemble_reference_csr)
from .quadrature import MAX_POINTS, gauss_legendre, gauss_lobatto_legendre

CHECKS = ("csr-equivalence", "strategy-equivalence", "quadrature-exactness",
          "even-odd", "qtq-multiplicity")


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str


def build_q_matrix(numbering) -> sparse.csr_matrix:
    """Explicit Boolean scatter Q (n_local x n_global): u_L = Q u."""
    l2g = numbering.local_to_global
    n_local = l2g.size
    return sparse.csr_matrix(
        (np.ones(n_local), (np.arange(n_local), l2g)),
        shape=(n_local, numbering.n_global))


def inject_geom_fault(geom: GeomFactors, element: int, slot: int,
                      point: tuple, scale: float) -> GeomFactors:
    """Copy of geom with one G entry scaled (a fault the oracles must catch)."""
    g = geom.G.copy()
    iz, iy, ix = point
    g[element, slot, iz, iy, ix] *= scale
    return GeomFactors(geom.q, g, geom.mass_diag.copy(), geom.jac_det.copy())


def _rel_err(got: np.ndarray, ref: np.ndarray) -> float:
    denom = np.linalg.norm(ref)
    return float(np.linalg.norm(got - ref) / (denom if denom else 1.0))


def check_csr_equivalence(pairs=((2, 3), (2, 4), (3, 4), (3, 5), (4, 5),
                                 (4, 6)),
                          ks=(3,), rtol: float = 1e-12,
                          geom_override=None) -> CheckResult:
    """Matrix-free mask.QQ^T.A_L against the assembled, masked CSR matrix.

    For every (p, q) pair the quadrature family follows the bake-off
    convention: q = p + 1 is collocated GLL, q = p + 2 is GL.  Both the
    stiffness (Dirichlet) and mass (Neumann) operators are compared.
    """
    worst = 0.0
    worst_case = ""
    rng = np.random.default_rng(1234)
    for (p, q) in pairs:
        kind = "GLL" if q == p + 1 else "GL"
        basis = make_basis(p, kind, q=q)
        for k in ks:
            mesh = build_box_mesh(k, p)
            geom = compute_geometric_factors(mesh, basis)
            # The override perturbs only the matrix-free side; the CSR
            # reference keeps the clean geometry, so a fault must surface.
            geom_mf = geom if geom_override is None else geom_override(geom)
            for system, bc in (("stiffness", "dirichlet"),
                               ("mass", "neumann")):
                gs = build_gather_scatter(mesh, bc=bc)
                if system == "stiffness":
                    op = StiffnessOperator(basis, geom_mf)
                    op_ref = StiffnessOperator(basis, geom)
                else:
                    op = MassOperator(basis, geom_mf)
                    op_ref = MassOperator(basis, geom)
                a_ref = assemble_reference_csr(op_ref, gs, mask=True)
                u_g = rng.standard_normal(gs.numbering.n_global)
                u_l = u_g[gs.numbering.local_to_global]
                w_mf = gs.apply_mask(gs.gather_scatter(
                    op.apply_local(gs.apply_mask(u_l)), count=False))
                w_ref = (a_ref @ u_g)[gs.numbering.local_to_global]
                err = _rel_err(w_mf, w_ref)
                if err > worst:
                    worst, worst_case = err, f"{system} p={p} q={q} k={k}"
    passed = worst <= rtol
    return CheckResult("csr-equivalence", passed,
                       f"max rel err {worst:.3e} ({worst_case}), tol {rtol:g}")


def check_strategy_equivalence(p_list=range(1, 11), kinds=("GL", "GLL"),
                               k: int = 3, n_inputs: int = 20,
                               rtol: float = STRATEGY_RTOL) -> CheckResult:
    """All evaluation strategies agree on random inputs.

    The sum-factorized kernel is the reference; interp-first, even-odd, and
    both blocked batch sizes must match it to rtol on every input.
    """
    worst = 0.0
    worst_case = ""
    rng = np.random.default_rng(42)
    for p in p_list:
        for kind in kinds:
            basis = make_basis(p, kind)
            mesh = build_box_mesh(k, p)
            geom = compute_geometric_factors(mesh, basis)
            ref_op = StiffnessOperator(basis, geom, strategy="sumfact")
            others = [StiffnessOperator(basis, geom, strategy="interpfirst"),
                      StiffnessOperator(basis, geom, strategy="evenodd"),
                      StiffnessOperator(basis, geom, strategy="blocked",
                                        block=4),
                      StiffnessOperator(basis, geom, strategy="blocked",
                                        block=8)]
            n = ref_op.n_local
            inputs = rng.standard_normal((n_inputs, n))
            refs = [ref_op.apply_local(u) for u in inputs]
            for op in others:
                for u, ref in zip(inputs, refs):
                    err = _rel_err(op.apply_local(u), ref)
                    if err > worst:
                        worst = err
                        worst_case = f"{op.strategy} p={p} {kind}"
    passed = worst <= rtol
    return CheckResult("strategy-equivalence", passed,
                       f"max rel err {worst:.3e} ({worst_case}), tol {rtol:g}")


def check_quadrature_exactness(tol: float = 1e-12) -> CheckResult:
    """GL integrates monomials through degree 2q-1 and GLL through 2q-3.

    Reference values are the analytic integrals of x^d over [-1, 1].
    Also pins the q=3 GLL weights {1/3, 4/3, 1/3} to 1e-14.
    """
    worst = 0.0
    worst_case = ""
    for q in range(1, MAX_POINTS + 1):
        for rule, max_deg in ((gauss_legendre(q), 2 * q - 1),
                              (gauss_lobatto_legendre(q) if q >= 2 else None,
                               2 * q - 3)):
            if rule is None:
                continue
            for d in range(max_deg + 1):
                exact = 2.0 / (d + 1) if d % 2 == 0 else 0.0
                got = rule.integrate(rule.points ** d)
                err = abs(got - exact)
                if err > worst:
                    worst, worst_case = err, f"{rule.kind} q={q} deg={d}"
    gll3 = gauss_lobatto_legendre(3)
    w_err = float(np.max(np.abs(gll3.weights
                                - np.array([1.0, 4.0, 1.0]) / 3.0)))
    passed = worst <= tol and w_err <= 1e-14
    return CheckResult(
        "quadrature-exactness", passed,
        f"max abs err {worst:.3e} ({worst_case}), tol {tol:g}; "
        f"GLL q=3 weight err {w_err:.3e}, tol 1e-14")


def check_even_odd(p_list=range(1, 11), kinds=("GL", "GLL"),
                   tol: float = 1e-12) -> CheckResult:
    """Even-odd factors reconstruct their matrices and reproduce matvecs."""
    worst = 0.0
    worst_case = ""
    rng = np.random.default_rng(7)
    for p in p_list:
        for kind in kinds:
            basis = make_basis(p, kind)
            for name, m, sign in (("J", basis.J_hat, +1),
                                  ("D", basis.D_hat, -1)):
                factor = even_odd_split(m, sign)
                err = float(np.max(np.abs(factor.to_dense() - m)))
                if err > worst:
                    worst, worst_case = err, f"{name} dense p={p} {kind}"
                for _ in range(3):
                    u = rng.standard_normal(m.shape[1])
                    err = _rel_err(even_odd_apply(factor, u), m @ u)
                    if err > worst:
                        worst, worst_case = err, f"{name} apply p={p} {kind}"
    passed = worst <= tol
    return CheckResult("even-odd", passed,
                       f"max err {worst:.3e} ({worst_case}), tol {tol:g}")


def check_qtq_multiplicity(cases=((0, 1), (1, 2), (3, 3), (6, 3)),
                           tol: float = 1e-13) -> CheckResult:
    """Q^T Q = diag(multiplicity), gather_scatter = QQ^T, weighted dots.

    The explicit sparse Q built here is the oracle; E up to 64, p up to 3.
    """
    worst = 0.0
    worst_case = ""
    rng = np.random.default_rng(99)
    for (k, p) in cases:
        mesh = build_box_mesh(k, p)
        numbering = build_numbering(mesh)
        q_mat = build_q_matrix(numbering)
        qtq = (q_mat.T @ q_mat).toarray()
        mult_err = float(np.max(np.abs(qtq - np.diag(numbering.multiplicity))))
        if mult_err > worst:
            worst, worst_case = mult_err, f"QtQ k={k} p={p}"
        gs = build_gather_scatter(mesh, numbering)
        for ranks in (1, min(4, mesh.E)):
            gsr = (gs if ranks == 1 else
                   build_gather_scatter(mesh, numbering, ranks=ranks))
            u = rng.standard_normal(numbering.n_local)
            got = gsr.gather_scatter(u, count=False)
            ref = q_mat @ (q_mat.T @ u)
            err = _rel_err(got, ref)
            if err > worst:
                worst, worst_case = err, f"QQt k={k} p={p} ranks={ranks}"
            ug = rng.standard_normal(numbering.n_global)
            vg = rng.standard_normal(numbering.n_global)
            got = gsr.local_dot(q_mat @ ug, q_mat @ vg, count=False)
            ref = float(ug @ vg)
            err = abs(got - ref) / max(abs(ref), 1.0)
            if err > worst:
                worst, worst_case = err, f"dot k={k} p={p} ranks={ranks}"
    passed = worst <= tol
    return CheckResult("qtq-multiplicity", passed,
                       f"max err {worst:.3e} ({worst_case}), tol {tol:g}")


_LIGHT_ARGS = {
    # verify defaults keep each suite under a few seconds
    "csr-equivalence": dict(pairs=((2, 3), (2, 4), (3, 4), (3, 5)), ks=(3,)),
    "strategy-equivalence": dict(p_list=range(1, 8), n_inputs=5),
    "quadrature-exactness": {},
    "even-odd": {},
    "qtq-multiplicity": {},
}

_SUITES = {
    "csr-equivalence": check_csr_equivalence,
    "strategy-equivalence": check_strategy_equivalence,
    "quadrature-exactness": check_quadrature_exactness,
    "even-odd": check_even_odd,
    "qtq-multiplicity": check_qtq_multiplicity,
}


def run_suites(names=None, overrides=None) -> list:
    """Run the named suites (all by default) with light default arguments."""
    if names is None:
        names = CHECKS
    results = []
    for name in names:
        if name not in _SUITES:
            raise ValueError(
                f"unknown check {name!r}; choose from {', '.join(CHECKS)}")
        kwargs = dict(_LIGHT_ARGS[name])
        if overrides:
            kwargs.update(overrides.get(name, {}))
        results.append(_SUITES[name](**kwargs))
    return results
