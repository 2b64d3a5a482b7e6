"""Checks of the maximum principles, curvature bounds and rigidity on a solve.

Each check returns a ``VerificationReport`` whose ``margin`` is a signed
distance to violation (positive is safe).  A check passes when
``margin >= -slack_used``.  The slack follows the grid:

    value comparisons         10 h^2 * scale
    third-difference checks   10 h   * scale

where ``scale`` is the largest magnitude of the field being compared.  When
the solve wraps a closed-form solution (exact jets) the slack is ``1e-10``.

"Boundary" values are read on the band of inside nodes within ``2h`` of the
boundary; "interior" values on the grid's interior core (full ``5^n``
stencil, at a fixed distance from the boundary).
"""
import hashlib
import json
from dataclasses import dataclass, field as dc_field

import numpy as np

from . import curvature as cv
from . import geometry
from .errors import (
    ConvexityLossError,
    DimensionError,
    EmptyBandError,
    GridTooCoarseError,
    MalabError,
    RegionError,
    UnboundedRadiusError,
)
from .field import BOUNDARY_ADJACENT, make_grid
from .solver import exact_result, solution_jets, solve_dirichlet
from .symfunc import is_positive_definite, newton_margin

VALUE_SLACK = 10.0
THIRD_SLACK = 10.0
EXACT_SLACK = 1e-10
RIGID_FACTOR = 5.0
MIN_REGION_NODES = 4
STATUSES = ("pass", "fail", "inconclusive")


@dataclass
class VerificationReport:
    check_name: str
    status: str
    margin: float
    witness: np.ndarray
    slack_used: float
    grid_h: float
    notes: str = ""
    details: dict = dc_field(default_factory=dict)

    @property
    def failed(self):
        return self.status == "fail"

    def to_dict(self):
        return {
            "check_name": self.check_name,
            "status": self.status,
            "margin": _num(self.margin),
            "slack_used": _num(self.slack_used),
            "witness": [_num(v) for v in np.atleast_1d(self.witness)],
            "notes": self.notes,
            "grid_h": _num(self.grid_h),
            "details": {k: _jsonable(v) for k, v in self.details.items()},
        }


def _num(v):
    v = float(v)
    return v if np.isfinite(v) else None


def _jsonable(v):
    if isinstance(v, (str, bool)) or v is None:
        return v
    if isinstance(v, (int, np.integer)):
        return int(v)
    if np.ndim(v):
        return [_jsonable(x) for x in np.asarray(v).tolist()]
    return _num(v)


def _report(name, margin, slack, witness, h, notes="", status=None, **details):
    if status is None:
        status = "pass" if margin >= -slack else "fail"
    return VerificationReport(name, status, float(margin), np.asarray(witness, dtype=float),
                              float(slack), float(h), notes, details)


def value_slack(result, scale):
    """``10 h^2 * scale``, or the exact-jet slack."""
    if result.exact is not None:
        return EXACT_SLACK
    return VALUE_SLACK * result.h**2 * max(float(scale), np.finfo(float).tiny)


def third_slack(result, scale):
    """``10 h * scale``, or the exact-jet slack."""
    if result.exact is not None:
        return EXACT_SLACK
    return THIRD_SLACK * result.h * max(float(scale), np.finfo(float).tiny)


def _scale(values):
    v = np.abs(np.asarray(values, dtype=float))
    v = v[np.isfinite(v)]
    return float(v.max()) if v.size else 0.0


def _is_quadratic_kind(domain):
    return getattr(domain, "kind", None) in ("ball", "ellipsoid")


def certify_convexity(result):
    """Refuse fields whose discrete Hessians are not all positive definite."""
    H = solution_jets(result).hessian
    ok = is_positive_definite(H)
    if not np.all(ok):
        bad = int(np.count_nonzero(~ok))
        raise ConvexityLossError(
            f"convexity certificate failed at {bad} of {len(ok)} nodes; verification refused"
        )


# -- maximum principles ------------------------------------------------------


def check_max_on_boundary(p, which=None):
    """Band maximum of a P-function (or weighted curvature) against its interior-core maximum."""
    which = which or p.which
    if which != p.which:
        raise ValueError(f"field holds {p.which!r}, not {which!r}")
    result, grid = p.result, p.grid
    band = grid.band & p.defined
    core = grid.interior_core & p.defined
    if not band.any():
        raise EmptyBandError("no boundary-band nodes resolved")
    if not core.any():
        raise EmptyBandError("interior core is empty")
    vals = p.values
    b = np.nonzero(band)[0][np.argmax(vals[band])]
    c = np.nonzero(core)[0][np.argmax(vals[core])]
    margin = vals[b] - vals[c]
    slack = value_slack(result, _scale(vals))
    spread = float(np.nanmax(vals) - np.nanmin(vals))
    name = f"max_on_boundary_{which}"
    extra = dict(band_max=vals[b], core_max=vals[c], spread=spread, interior_witness=grid.points[c])
    if _is_quadratic_kind(result.domain) and spread < slack:
        return _report(name, margin, slack, grid.points[b], grid.h,
                       "inconclusive-constant: field is constant, maximum attained everywhere",
                       status="inconclusive", **extra)
    return _report(name, margin, slack, grid.points[b], grid.h, **extra)


def check_elliptic_inequality(u, p):
    """Minimum over the interior core of ``sum u^ij p_ij``."""
    grid = u.grid
    core = grid.interior_core
    if not core.any():
        raise EmptyBandError("interior core is empty")
    rows = np.nonzero(core)[0]
    Hp = p.hessians_on_core(core)
    res = cv.elliptic_residual(solution_jets(u, rows), Hp)
    k = int(np.argmin(res))
    slack = third_slack(u, _scale(p.values))
    return _report(f"elliptic_inequality_{p.which}", res[k], slack, grid.points[rows[k]], grid.h,
                   residual_max=float(res.max()))


def check_minimum_principle_2d(u, p):
    """Interior-core minimum of phi against the band minimum and phi at the critical point."""
    grid = u.grid
    if grid.dimension != 2:
        raise DimensionError("the minimum principle is checked in two dimensions only")
    jets = solution_jets(u)
    floor = cv.default_gradient_floor(u)
    away = np.linalg.norm(jets.gradient, axis=-1) >= floor
    core = grid.interior_core & away
    band = grid.band
    if not band.any():
        raise EmptyBandError("no boundary-band nodes resolved")
    vals = p.values
    c = np.nonzero(core)[0][np.argmin(vals[core])]
    b = np.nonzero(band)[0][np.argmin(vals[band])]
    phi_x0 = -2.0 * u.min_value
    reference = min(vals[b], phi_x0)
    margin = vals[c] - reference
    slack = value_slack(u, _scale(vals))
    spread = float(np.nanmax(vals) - np.nanmin(vals))
    extra = dict(core_min=vals[c], band_min=vals[b], phi_x0=phi_x0, spread=spread)
    if _is_quadratic_kind(u.domain) and spread < slack:
        return _report("minimum_principle_2d", margin, slack, grid.points[c], grid.h,
                       "inconclusive-constant: phi is constant", status="inconclusive", **extra)
    return _report("minimum_principle_2d", margin, slack, grid.points[c], grid.h, **extra)


# -- gradient and curvature bounds ----------------------------------------------


def boundary_gradient_norms(u, domain):
    """``|Du|`` carried from the boundary-adjacent nodes to their closest boundary points."""
    grid = u.grid
    rows = np.nonzero(grid.node_class() == BOUNDARY_ADJACENT)[0]
    jets = solution_jets(u, rows)
    q, _ = geometry.closest_boundary_points(domain, jets.position)
    if u.exact is not None:
        g = u.exact.gradient(q)
    else:
        g = jets.gradient + np.einsum("...ij,...j->...i", jets.hessian, q - jets.position)
    return q, np.linalg.norm(g, axis=-1)


def check_gradient_bounds(u, domain):
    """``1 / max kappa_M <= |Du| <= 1 / min kappa_m`` on the boundary."""
    grid = u.grid
    q, norms = boundary_gradient_norms(u, domain)
    lo, hi = int(np.argmin(norms)), int(np.argmax(norms))
    extra = dict(du_min=norms[lo], du_max=norms[hi])
    slack = value_slack(u, norms[hi])
    try:
        r, R = geometry.comparison_radii(domain)
    except UnboundedRadiusError as exc:
        return _report("gradient_bounds", np.inf, slack, q[hi], grid.h,
                       f"inconclusive: {exc}", status="inconclusive", **extra)
    lower, upper = norms[lo] - r, R - norms[hi]
    witness = q[lo] if lower <= upper else q[hi]
    return _report("gradient_bounds", min(lower, upper), slack, witness, grid.h,
                   r=r, R=R, lower_margin=lower, upper_margin=upper, **extra)


def _level_crossings(u, c):
    """Points of ``{u = c}`` on grid edges with the interpolated gradient and Hessian."""
    grid = u.grid
    jets = solution_jets(u)
    vals = jets.value
    eye = np.eye(grid.dimension, dtype=int)
    pos, grad, hess = [], [], []
    for e in eye:
        nbr = grid.nodes + e
        ok = np.all(nbr < np.array(grid.shape), axis=1)
        j = np.full(grid.size, -1)
        j[ok] = grid.index[tuple(nbr[ok].T)]
        a = np.nonzero(j >= 0)[0]
        b = j[a]
        sa, sb = vals[a] - c, vals[b] - c
        hit = (sa < 0) != (sb < 0)
        a, b, sa, sb = a[hit], b[hit], sa[hit], sb[hit]
        t = sa / (sa - sb)
        if u.exact is not None:
            # refine on the closed form
            lo, hi = np.zeros_like(t), np.ones_like(t)
            pa, pb = grid.points[a], grid.points[b]
            neg_at_a = sa < 0
            for _ in range(60):
                t = 0.5 * (lo + hi)
                below = u.exact.value(pa + t[:, None] * (pb - pa)) - c < 0
                move_lo = below == neg_at_a
                lo = np.where(move_lo, t, lo)
                hi = np.where(move_lo, hi, t)
            x = pa + t[:, None] * (pb - pa)
            pos.append(x)
            grad.append(u.exact.gradient(x))
            hess.append(u.exact.hessian(x))
            continue
        w = t[:, None]
        pos.append(grid.points[a] + w * (grid.points[b] - grid.points[a]))
        grad.append((1 - w) * jets.gradient[a] + w * jets.gradient[b])
        hess.append((1 - w[..., None]) * jets.hessian[a] + w[..., None] * jets.hessian[b])
    return np.concatenate(pos), np.concatenate(grad), np.concatenate(hess)


def _check_threshold(u, c):
    geometry.SublevelRegion(u.domain, float(c), float(u.min_value))
    grid = u.grid
    below = np.zeros(grid.shape, dtype=bool)
    below[grid.inside] = solution_jets(u).value < c
    for axis in range(grid.dimension):
        if below.sum(axis=axis).max(initial=0) < MIN_REGION_NODES:
            raise RegionError(
                f"the region {{u < {c:g}}} spans fewer than {MIN_REGION_NODES} nodes along axis {axis}"
            )


def _outer_shell(u, c):
    """Rows of nodes in ``{u >= c}`` with ``|Du|`` above the gradient floor, and their jets."""
    jets = solution_jets(u)
    floor = cv.default_gradient_floor(u)
    keep = (jets.value >= c) & (np.linalg.norm(jets.gradient, axis=-1) >= floor)
    rows = np.nonzero(keep)[0]
    return rows, jets[rows]


def check_corollary_bounds(u, domain, c=None):
    """Strict boundary maxima of ``K |Du|^(n+1)``, ``H |Du|^3`` and the curvature bounds outside ``{u < c}``.

    Strictness is encoded in the margin: sub-check (a) contributes
    ``(band max - core max) - 2 slack``, so it passes only when the gap
    exceeds the slack.
    """
    grid = u.grid
    n = grid.dimension
    if c is None:
        c = 0.5 * u.min_value
    _check_threshold(u, c)

    jets_all = solution_jets(u)
    floor = cv.default_gradient_floor(u)
    strict = []
    for which in ("K_weighted", "H_weighted"):
        p = cv.pfunction_field(u, which, floor, jets=jets_all)
        rep = check_max_on_boundary(p)
        strict.append((rep.margin - 2.0 * rep.slack_used, rep))
    margin_a = min(m for m, _ in strict)
    slack_a = max(r.slack_used for _, r in strict)

    summary = geometry.boundary_curvature_summary(domain)
    _, grad, hess = _level_crossings(u, c)
    k_level = geometry.level_set_curvatures(grad, hess, atol=0.0)
    kM_level = float(k_level[:, -1].max())
    ratio = kM_level ** (n + 1) / summary["kappa_m_min"] ** (n + 1)
    bound_K = summary["gauss_max"] * ratio
    bound_H = summary["mean_max"] * ratio

    rows, jets = _outer_shell(u, c)
    K = cv.gauss_curvature(jets, floor)
    H = cv.mean_curvature(jets, floor)
    kK, kH = int(np.argmax(K)), int(np.argmax(H))
    rel_K = (bound_K - K[kK]) / max(bound_K, 1.0)
    rel_H = (bound_H - H[kH]) / max(bound_H, 1.0)
    margin_b = min(rel_K, rel_H)
    slack_b = value_slack(u, 1.0)

    # combined: both parts measured against the larger slack
    slack = max(slack_a, slack_b)
    margin = min(margin_a, margin_b)
    witness = grid.points[rows[kK if rel_K <= rel_H else kH]]
    if margin_a < margin_b:
        witness = strict[0][1].witness if strict[0][0] <= strict[1][0] else strict[1][1].witness
    notes = "" if np.isfinite(ratio) else "boundary curvature vanishes; displayed bounds are infinite"
    return _report(
        "corollary_bounds", margin, slack, witness, grid.h, notes,
        c=c, strict_margin_K=strict[0][1].margin, strict_margin_H=strict[1][1].margin,
        bound_K=bound_K, bound_H=bound_H, K_max=K[kK], H_max=H[kH],
        level_kappa_M_max=kM_level, bound_relative_margin=margin_b,
    )


def remark2_bound(domain, c, u_min):
    """Right side of the level-curve curvature lower bound (two dimensions)."""
    s = geometry.boundary_curvature_summary(domain)
    kmin, kmax = s["kappa_m_min"], s["kappa_M_max"]
    return kmin**3 * min(kmin / kmax**3 + 2.0 * c, 2.0 * c - 2.0 * u_min)


def check_remark2_lower_bound(u, domain, c=None):
    """Lower bound for the level-curve curvature on ``{u >= c}`` (n = 2)."""
    grid = u.grid
    if grid.dimension != 2:
        raise DimensionError("the level-curve lower bound is two-dimensional")
    if c is None:
        c = 0.5 * u.min_value
    _check_threshold(u, c)
    bound = remark2_bound(domain, c, u.min_value)
    rows, jets = _outer_shell(u, c)
    kappa = cv.gauss_curvature(jets, cv.default_gradient_floor(u))
    k = int(np.argmin(kappa))
    margin = kappa[k] - bound
    slack = value_slack(u, _scale(kappa))
    notes = "" if bound > 0 else "bound is nonpositive; holds vacuously"
    return _report("remark2_lower_bound", margin, slack, grid.points[rows[k]], grid.h, notes,
                   c=c, bound=bound, kappa_min=kappa[k])


# -- rigidity and Newton's inequality ------------------------------------------


def nodes_per_axis(grid):
    extent = grid.domain.upper - grid.domain.lower
    return int(round(float(extent.max()) / grid.h)) + 1


def coarser_result(u, domain):
    """The same problem on the grid with half the resolution."""
    grid = make_grid(domain, (nodes_per_axis(u.grid) - 1) // 2 + 1, snap_fraction=u.grid.snap_fraction)
    if u.exact is not None:
        return exact_result(u.exact, grid)
    return solve_dirichlet(domain, grid)


def rigidity_measures(u):
    """``(R, S, slack_R, slack_S, witness)`` on the interior core."""
    grid = u.grid
    rows = np.nonzero(grid.interior_core)[0]
    if not rows.size:
        raise EmptyBandError("interior core is empty")
    order = 3 if grid.dimension == 2 else 2
    jets = solution_jets(u, rows, order)
    res = np.atleast_1d(cv.rigidity_residual(jets))
    ps = cv.psi(jets)
    k = int(np.argmax(res))
    if grid.dimension == 2:
        slack_R = third_slack(u, _scale(solution_jets(u).value))
    else:
        # eigenvalue deviation is a Hessian-level quantity
        slack_R = value_slack(u, 1.0)
    slack_S = value_slack(u, _scale(ps))
    return float(res[k]), float(ps.max() - ps.min()), slack_R, slack_S, grid.points[rows[k]]


def classify(R, S, slack_R, slack_S):
    if R <= slack_R and S <= slack_S:
        return "rigid"
    if R > RIGID_FACTOR * slack_R and S > RIGID_FACTOR * slack_S:
        return "non-rigid"
    return "inconclusive"


def expected_rigidity(domain):
    """Rigid exactly for ellipses (n = 2) and balls (n >= 3); None when the kind is not declared."""
    kind = getattr(domain, "kind", None)
    if kind == "generic" or kind is None:
        return None
    if kind == "ball" or (kind == "ellipsoid" and domain.dimension == 2):
        return "rigid"
    return "non-rigid"


def check_rigidity(u, domain, coarse=None):
    """Rigid / non-rigid classification agreed on two successive grids.

    The margin is dimensionless: ``1 - max(R / slack_R, S / slack_S)`` for a
    rigid expectation and ``min(R / slack_R, S / slack_S) / 5 - 1`` for a
    non-rigid one, so it is nonnegative exactly when the classification holds.
    """
    grid = u.grid
    levels = {"fine": rigidity_measures(u)}
    note = ""
    if coarse is None:
        try:
            coarse = coarser_result(u, domain)
        except (GridTooCoarseError, MalabError) as exc:
            note = f"coarse level unavailable ({exc}); "
    if coarse is not None:
        levels["coarse"] = rigidity_measures(coarse)
    classes = {k: classify(*v[:4]) for k, v in levels.items()}
    agreed = classes["fine"] if len(set(classes.values())) == 1 and len(classes) == 2 else "inconclusive"

    def rigid_margin(v):
        return 1.0 - max(v[0] / v[2], v[1] / v[3])

    def loose_margin(v):
        return min(v[0] / v[2], v[1] / v[3]) / RIGID_FACTOR - 1.0

    expected = expected_rigidity(domain)
    target = expected or (agreed if agreed != "inconclusive" else "rigid")
    fn = rigid_margin if target == "rigid" else loose_margin
    margin = min(fn(v) for v in levels.values())
    if agreed == "inconclusive":
        status = "inconclusive"
    elif expected is None or agreed == expected:
        status = "pass"
    else:
        status = "fail"
    R, S, slack_R, slack_S, witness = levels["fine"]
    notes = note + f"classification {agreed}"
    if expected is not None:
        notes += f"; declared kind {domain.kind} expects {expected}"
    details = dict(classification=agreed, R=R, S=S, slack_R=slack_R, slack_S=slack_S,
                   level_classes=",".join(f"{k}:{v}" for k, v in classes.items()))
    if "coarse" in levels:
        details.update(R_coarse=levels["coarse"][0], S_coarse=levels["coarse"][1])
    return _report("rigidity", margin, 0.0, witness, grid.h, notes, status=status, **details)


def check_newton_inequality(u):
    """Minimum over inside nodes of ``sigma_2 - C(n,2) sigma_n^(2/n)`` for the discrete Hessian."""
    grid = u.grid
    m = np.atleast_1d(newton_margin(solution_jets(u).hessian))
    k = int(np.argmin(m))
    slack = value_slack(u, 1.0)
    notes = ""
    if grid.dimension == 2:
        notes = "degenerate in two dimensions: sigma_2 equals the determinant"
    return _report("newton_inequality", m[k], slack, grid.points[k], grid.h, notes,
                   max_abs_margin=float(np.max(np.abs(m))))


# -- suites and reports -------------------------------------------------------

CHECK_NAMES = (
    "max_on_boundary",
    "elliptic_inequality",
    "gradient_bounds",
    "corollary_bounds",
    "remark2_lower_bound",
    "minimum_principle_2d",
    "rigidity",
    "newton_inequality",
)
TWO_D_ONLY = {"remark2_lower_bound", "minimum_principle_2d"}


def default_checks(dimension):
    out = [
        {"name": "max_on_boundary", "which": "phi"},
        {"name": "max_on_boundary", "which": "psi"},
        {"name": "elliptic_inequality", "which": "phi"},
        {"name": "elliptic_inequality", "which": "psi"},
        {"name": "gradient_bounds"},
        {"name": "corollary_bounds"},
        {"name": "remark2_lower_bound"},
        {"name": "minimum_principle_2d"},
        {"name": "rigidity"},
        {"name": "newton_inequality"},
    ]
    return [c for c in out if dimension == 2 or c["name"] not in TWO_D_ONLY]


def run_checks(u, domain, checks=None):
    """Run a list of checks (dicts with ``name`` and parameters) after the convexity certificate."""
    certify_convexity(u)
    checks = default_checks(u.grid.dimension) if checks is None else checks
    jets = solution_jets(u)
    fields = {}

    def pfield(which):
        if which not in fields:
            fields[which] = cv.pfunction_field(u, which, jets=jets)
        return fields[which]

    reports = []
    for entry in checks:
        entry = {"name": entry} if isinstance(entry, str) else dict(entry)
        name = entry.pop("name")
        if name == "max_on_boundary":
            reports.append(check_max_on_boundary(pfield(entry.get("which", "phi"))))
        elif name == "elliptic_inequality":
            reports.append(check_elliptic_inequality(u, pfield(entry.get("which", "phi"))))
        elif name == "gradient_bounds":
            reports.append(check_gradient_bounds(u, domain))
        elif name == "corollary_bounds":
            reports.append(check_corollary_bounds(u, domain, entry.get("c")))
        elif name == "remark2_lower_bound":
            reports.append(check_remark2_lower_bound(u, domain, entry.get("c")))
        elif name == "minimum_principle_2d":
            reports.append(check_minimum_principle_2d(u, pfield("phi")))
        elif name == "rigidity":
            reports.append(check_rigidity(u, domain))
        elif name == "newton_inequality":
            reports.append(check_newton_inequality(u))
        else:
            raise ValueError(f"unknown check {name!r}; expected one of {CHECK_NAMES}")
    return reports


def run_id(config):
    """Deterministic identifier of a configuration."""
    blob = json.dumps(config, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def report_document(config, domain, u, reports):
    return {
        "run_id": run_id(config),
        "domain": domain.describe(),
        "grid": {"h": _num(u.h), "nodes": int(u.grid.size), "shape": list(u.grid.shape)},
        "solver": {k: _jsonable(v) for k, v in u.summary().items()},
        "checks": [r.to_dict() for r in reports],
    }


def dumps_report(document):
    return json.dumps(document, indent=2) + "\n"
