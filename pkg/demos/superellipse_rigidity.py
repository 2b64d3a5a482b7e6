"""The superellipse x^4 + y^4 < 1 is not an ellipse, so phi peaks strictly on the boundary.

Solves at three resolutions and reports the boundary-maximum margin, the
third-derivative rigidity residual and the corollary curvature bounds.
"""
from malab import curvature, geometry, verify
from malab.field import make_grid
from malab.solver import solve_dirichlet

dom = geometry.superellipse(4.0, 1.0)
print(f"{'nodes':>6} {'iters':>5} {'min u':>10} {'phi margin':>11} {'R':>8} {'class':>10} {'corollary':>9}")
for nodes in (33, 65, 129):
    res = solve_dirichlet(dom, make_grid(dom, nodes))
    phi = verify.check_max_on_boundary(curvature.pfunction_field(res, "phi"))
    rig = verify.check_rigidity(res, dom)
    cor = verify.check_corollary_bounds(res, dom)
    print(f"{nodes:6d} {res.newton_iterations:5d} {res.min_value:10.6f} {phi.margin:11.4f} "
          f"{rig.details['R']:8.4f} {rig.details['classification']:>10} {cor.status:>9}")
