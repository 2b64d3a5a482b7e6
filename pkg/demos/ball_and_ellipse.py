"""P-functions on domains with closed-form solutions.

On a ball or an ellipse the solution is quadratic, the Shortley-Weller
scheme reproduces it to rounding, and both P-functions are constant.
"""
import numpy as np

from malab import curvature, geometry, verify
from malab.field import make_grid
from malab.solver import analytic_for_domain, max_error, solve_dirichlet

for dom in (geometry.ball([0.0, 0.0], 1.0), geometry.ellipsoid([0.0, 0.0], [2**-0.5, 2**0.5])):
    res = solve_dirichlet(dom, make_grid(dom, 65))
    err = max_error(res, analytic_for_domain(dom))
    phi = curvature.pfunction_field(res, "phi").values
    print(f"{dom.kind:9s} min u = {res.min_value:+.6f}  max error = {err:.1e}")
    print(f"          phi in [{phi.min():.10f}, {phi.max():.10f}]")
    rep = verify.check_rigidity(res, dom)
    print(f"          rigidity: {rep.details['classification']} ({rep.status})")

# On the disk K = 1/rho and |Du| = rho, so K |Du|^3 = rho^2 varies while
# K |Du|^3 - 2u = rho^2 - (rho^2 - 1) = 1 stays constant.
disk = geometry.ball([0.0, 0.0], 1.0)
res = solve_dirichlet(disk, make_grid(disk, 33))
K = curvature.pfunction_field(res, "K_weighted", gradient_floor=1e-3)
u = res.field.values[K.defined]
kw = K.values[K.defined]
print(f"K|Du|^3 in [{kw.min():.4f}, {kw.max():.4f}];  K|Du|^3 - 2u in "
      f"[{np.min(kw - 2 * u):.10f}, {np.max(kw - 2 * u):.10f}]")
