"""
Convergence drivers, error functionals, rates and table emission.

Errors against the singular L-shape field are integrated with a composite
rule that subdivides triangles touching the corner geometrically toward it,
so the integrable ``r**(2 lam - 2)`` blow-up is resolved layer by layer.
"""
import csv
import functools
import io
import json
import logging
import math
from dataclasses import dataclass, field
from importlib import resources

import numpy as np

from .analytic import CoefficientField, CurlBubble, SingularPotential
from .assembly import PenaltyParams, assemble_system, discrete_norm, tangential_data
from .fem import DiscreteField, build_system
from .geometry import make_mesh, read_mesh
from .quadrature import triangle_rule
from .solvers import backward_error, factorize, solve_eigs

log = logging.getLogger(__name__)

SINGULAR_LEVELS = 40
SINGULAR_DEGREE = 12
POLLUTION_BAND = 0.02

DOMAINS = {
    "lshape": "lshape_three_subdomains",
    "checkerboard": "square_checkerboard",
    "square": "unit_square_single",
}

_REF_VERTS = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])


# ---------------------------------------------------------------------------
# error functionals


@functools.lru_cache(maxsize=None)
def graded_rule(vertex, levels, degree):
    """Reference-triangle rule refined geometrically toward local ``vertex``.

    Each level halves the triangle toward the vertex and integrates the
    remaining trapezoid (two triangles) with ``triangle_rule(degree)``; the
    last corner triangle keeps the plain rule.
    """
    pts, wts = triangle_rule(degree)
    p0 = _REF_VERTS[vertex]
    p1, p2 = _REF_VERTS[(vertex + 1) % 3], _REF_VERTS[(vertex + 2) % 3]
    out_p, out_w = [], []

    def push(a, b, c):
        jac = np.column_stack([b - a, c - a])
        out_p.append(a + pts @ jac.T)
        out_w.append(wts * abs(np.linalg.det(jac)))

    for _ in range(levels):
        m1, m2 = 0.5 * (p0 + p1), 0.5 * (p0 + p2)
        push(m1, p1, p2)
        push(m1, p2, m2)
        p1, p2 = m1, m2
    push(p0, p1, p2)
    P, W = np.vstack(out_p), np.concatenate(out_w)
    P.setflags(write=False)
    W.setflags(write=False)
    return P, W


def _error_points(fe, singular_point, levels, degree):
    """Quadrature points (tris, ref, xy, weights) covering every triangle."""
    mesh = fe.mesh
    tris, ref, xy, w = fe.cell_points(triangle_rule(degree))
    if singular_point is None:
        return tris, ref, xy, w
    d = np.linalg.norm(mesh.vertices - np.asarray(singular_point), axis=1)
    at_corner = d[mesh.triangles] < 1e-12 * max(mesh.h, 1.0)
    special = np.flatnonzero(at_corner.any(axis=1))
    if special.size == 0:
        return tris, ref, xy, w
    keep = ~np.isin(tris, special)
    parts = [(tris[keep], ref[keep], w[keep])]
    for t in special:
        vertex = int(np.argmax(at_corner[t]))
        P, W = graded_rule(vertex, levels, degree)
        parts.append((np.full(len(W), t), P, W * fe.det[t]))
    tris = np.concatenate([p[0] for p in parts])
    ref = np.vstack([p[1] for p in parts])
    w = np.concatenate([p[2] for p in parts])
    return tris, ref, fe.map_points(tris, ref), w


def l2_error(fe, field, exact, singular_point=(0.0, 0.0), levels=SINGULAR_LEVELS, degree=SINGULAR_DEGREE):
    """Absolute and relative L2 error of ``field.E`` against ``exact(xy, sub)``.

    Triangles with a vertex at ``singular_point`` use :func:`graded_rule`
    (pass ``None`` to disable). The exact field is evaluated one-sidedly
    with the subdomain id of the triangle. Raises ``ZeroDivisionError`` when
    the exact field has zero norm.
    """
    tris, ref, xy, w = _error_points(fe, singular_point, levels, degree)
    ex = np.asarray(exact(xy, fe.mesh.subdomains[tris]), dtype=float)
    eh = fe.evaluate(field, tris, ref)["E"]
    num = float(w @ np.sum((eh - ex) ** 2, axis=1))
    den = float(w @ np.sum(ex**2, axis=1))
    if not den > 0:
        raise ZeroDivisionError("exact field has zero L2 norm; relative error undefined")
    return math.sqrt(num), math.sqrt(num / den)


def exact_l2_norm(fe, exact, singular_point=(0.0, 0.0), levels=SINGULAR_LEVELS, degree=SINGULAR_DEGREE):
    tris, _, xy, w = _error_points(fe, singular_point, levels, degree)
    ex = np.asarray(exact(xy, fe.mesh.subdomains[tris]), dtype=float)
    return math.sqrt(float(w @ np.sum(ex**2, axis=1)))


# ---------------------------------------------------------------------------
# rates


@dataclass(frozen=True)
class ConvergenceRow:
    h: float
    rel_err: float
    coc: float = None


def coc(hs, errors):
    """Computed orders ``ln(e_prev/e_cur) / ln(h_prev/h_cur)`` as rows.

    The first row has ``coc=None``.
    """
    hs = np.asarray(hs, dtype=float)
    errors = np.asarray(errors, dtype=float)
    if hs.shape != errors.shape or hs.size < 2:
        raise ValueError("need at least two (h, error) pairs")
    if np.any(np.diff(hs) >= 0):
        raise ValueError("h must be strictly decreasing")
    if np.any(errors <= 0) or np.any(hs <= 0):
        raise ValueError("errors and mesh sizes must be positive")
    rows = [ConvergenceRow(float(hs[0]), float(errors[0]))]
    for i in range(1, hs.size):
        rate = math.log(errors[i - 1] / errors[i]) / math.log(hs[i - 1] / hs[i])
        rows.append(ConvergenceRow(float(hs[i]), float(errors[i]), rate))
    return rows


@dataclass(frozen=True)
class TheoryRates:
    """Predicted rates for regularity ``tau``, degree ``ell - 1`` and exponent ``alpha``.

    ``r2`` is the energy-norm rate for divergence-free data, ``r1`` the
    general one; ``r`` picks between them. ``alpha_opt`` maximises the L2
    rate ``l2_rate_opt``.
    """

    tau: float
    ell: int
    alpha: float
    divergence_free_rhs: bool
    r: float
    r1: float
    r2: float
    alpha_min: float
    alpha_opt: float
    l2_rate_opt: float


def predicted_rates(tau, ell, alpha, divfree=True):
    if not 0.0 < tau < 1.0:
        raise ValueError(f"tau must lie in (0, 1), got {tau}")
    if ell < 1:
        raise ValueError(f"ell must be positive, got {ell}")
    alpha_min = ell * (1.0 - tau) / (ell - tau)
    if not alpha_min < alpha <= 1.0:
        raise ValueError(f"alpha must lie in ({alpha_min:.6g}, 1], got {alpha}")
    r2 = alpha - 1.0 + tau * (1.0 - alpha / ell)
    r1 = min(1.0 - alpha, r2)
    return TheoryRates(
        tau=tau,
        ell=ell,
        alpha=alpha,
        divergence_free_rhs=divfree,
        r=r2 if divfree else r1,
        r1=r1,
        r2=r2,
        alpha_min=alpha_min,
        alpha_opt=ell * (2.0 - tau) / (2.0 * ell - tau),
        l2_rate_opt=tau * (ell - 1.0) / (ell - 0.5 * tau),
    )


# ---------------------------------------------------------------------------
# eigenvalue references and pollution


@dataclass(frozen=True)
class EigenBenchmark:
    eps_r: float
    references: tuple
    source: str = ""

    def __post_init__(self):
        refs = tuple(float(v) for v in self.references)
        if not refs or refs[0] <= 0 or any(b <= a for a, b in zip(refs, refs[1:])):
            raise ValueError("reference eigenvalues must be positive and strictly ascending")
        object.__setattr__(self, "references", refs)


@functools.lru_cache(maxsize=None)
def load_benchmarks():
    """Registry of checkerboard reference eigenvalues keyed by ``eps_r``."""
    text = resources.files("ipmaxwell").joinpath("data/benchmarks.json").read_text()
    out = {}
    for item in json.loads(text)["checkerboard"]:
        bench = EigenBenchmark(item["eps_r"], item["references"], item.get("source", ""))
        out[bench.eps_r] = bench
    return out


def benchmark(eps_r):
    table = load_benchmarks()
    for key, bench in table.items():
        if math.isclose(key, eps_r, rel_tol=1e-12):
            return bench
    raise KeyError(f"no reference eigenvalues for eps_r={eps_r}; known: {sorted(table)}")


def classify_pollution(values, references, band=POLLUTION_BAND):
    """True for each value that is not within ``band`` (relative) of any reference."""
    refs = np.asarray(references, dtype=float)
    vals = np.atleast_1d(np.asarray(values, dtype=float))
    rel = np.abs(vals[:, None] - refs[None, :]) / refs[None, :]
    return ~np.any(rel <= band, axis=1)


# ---------------------------------------------------------------------------
# sweeps


class SweepError(RuntimeError):
    pass


@dataclass
class BvpConfig:
    """Boundary value sweep.

    ``domain`` is ``lshape`` (singular benchmark, needs ``lam`` or ``eps_r``)
    or ``square`` (smooth manufactured field with unit coefficients).
    ``degree`` is the polynomial degree of the fields (1 or 2).
    """

    domain: str = "lshape"
    lam: float = None
    eps_r: float = None
    degree: int = 1
    alphas: tuple = (0.9,)
    hs: tuple = (0.2, 0.1, 0.05, 0.025, 0.0125)
    style: str = "structured"
    gamma: float = 10.0
    c_alpha: float = 1.0
    theta: int = 1
    mesh_files: tuple = None

    def validate(self):
        if self.domain not in ("lshape", "square"):
            raise ValueError(f"boundary value sweeps support lshape or square, got {self.domain!r}")
        if self.domain == "lshape" and (self.lam is None) == (self.eps_r is None):
            raise ValueError("give exactly one of lam and eps_r for the L-shape benchmark")
        if self.degree not in (1, 2):
            raise ValueError(f"degree must be 1 or 2, got {self.degree}")
        if self.style not in ("structured", "powell-sabin", "hct", "file"):
            raise ValueError(f"unknown mesh style {self.style!r}")
        if self.style == "file" and not self.mesh_files:
            raise ValueError("style 'file' needs mesh_files")
        hs = list(self.mesh_files or self.hs)
        if not hs:
            raise ValueError("empty h list")
        if self.style != "file" and any(b >= a for a, b in zip(self.hs, self.hs[1:])):
            raise ValueError("h list must be strictly decreasing")
        for a in self.alphas:
            PenaltyParams(alpha=a, gamma=self.gamma, c_alpha=self.c_alpha, theta=self.theta)
        return self

    def problem(self):
        """(coefficients, exact field, source, singular point)."""
        if self.domain == "square":
            bubble = CurlBubble()
            return CoefficientField.uniform(1), bubble, bubble.source, None
        pot = SingularPotential(self.lam) if self.lam is not None else SingularPotential.from_eps(self.eps_r)
        return pot.coefficients(), pot.gradient, None, (0.0, 0.0)


@dataclass
class BvpRun:
    h: float
    mesh_h: float
    n_dofs: int
    abs_err: float
    rel_err: float
    residual: float
    energy_err: float = None


@dataclass
class ConvergenceReport:
    config: BvpConfig
    runs: dict = field(default_factory=dict)

    def rows(self, alpha):
        runs = self.runs[alpha]
        if len(runs) < 2:
            return [ConvergenceRow(r.h, r.rel_err) for r in runs]
        return coc([r.h for r in runs], [r.rel_err for r in runs])

    def energy_rows(self, alpha):
        runs = self.runs[alpha]
        return coc([r.h for r in runs], [r.energy_err for r in runs])


def _meshes(domain, hs, style, mesh_files):
    if style == "file":
        for path in mesh_files:
            mesh = read_mesh(path)
            yield mesh.h, mesh
    else:
        for h in hs:
            yield h, make_mesh(DOMAINS[domain], h, style)


def solve_bvp_level(fe, coeffs, params, exact, source, singular_point, energy=False):
    """One solve plus its error measures."""
    system = assemble_system(fe, coeffs, params, g=source, g_t=tangential_data(exact))
    x = factorize(system.matrix).solve(system.rhs)
    field = DiscreteField.from_vector(fe, x)
    field.residual = backward_error(system.matrix, x, system.rhs)
    abs_err, rel_err = l2_error(fe, field, exact, singular_point=singular_point)
    run = BvpRun(0.0, fe.mesh.h, fe.n_dofs, abs_err, rel_err, field.residual)
    if energy and hasattr(exact, "curl"):
        run.energy_err = discrete_norm(fe, coeffs, params, field, exact=exact)
    return run, field


def run_bvp_sweep(config, energy=False):
    """Solve every (alpha, h) pair; rows are ordered by decreasing h."""
    config.validate()
    coeffs, exact, source, singular_point = config.problem()
    ell = config.degree + 1
    report = ConvergenceReport(config)
    for alpha in config.alphas:
        params = PenaltyParams(alpha=alpha, gamma=config.gamma, c_alpha=config.c_alpha, theta=config.theta)
        runs = []
        for h, mesh in _meshes(config.domain, config.hs, config.style, config.mesh_files):
            try:
                fe = build_system(mesh, ell)
                run, _ = solve_bvp_level(fe, coeffs, params, exact, source, singular_point, energy)
            except Exception as exc:
                raise SweepError(f"solve failed at h={h}, alpha={alpha}: {exc}") from exc
            run.h = h
            log.info("alpha=%g h=%g dofs=%d rel_err=%.4e", alpha, h, run.n_dofs, run.rel_err)
            runs.append(run)
        report.runs[alpha] = runs
    return report


@dataclass
class EigConfig:
    eps_r: float = 0.5
    alpha: float = 0.7
    degree: int = 1
    hs: tuple = (0.025,)
    k: int = 10
    tol: float = 1e-8
    style: str = "structured"
    gamma: float = 10.0
    c_alpha: float = 1.0
    allow_alpha_one: bool = False
    backend: str = "lanczos"
    mesh_files: tuple = None

    def params(self):
        return PenaltyParams(
            alpha=self.alpha, gamma=self.gamma, c_alpha=self.c_alpha, theta=1,
            allow_alpha_one=self.allow_alpha_one,
        )

    def validate(self):
        self.params().check_eigen()
        if self.k < 1:
            raise ValueError("need at least one eigenvalue")
        if self.degree not in (1, 2):
            raise ValueError(f"degree must be 1 or 2, got {self.degree}")
        return self


@dataclass
class EigenTable:
    """Computed eigenvalues on one mesh, with references and pollution flags."""

    h: float
    mesh_h: float
    n_dofs: int
    eigenvalues: np.ndarray
    references: np.ndarray
    rel_err: np.ndarray
    spurious: np.ndarray
    residual_norms: np.ndarray


def run_eig_sweep(config):
    """Eigenvalues of the checkerboard problem on each mesh of the sweep.

    ``references[i]`` pairs computed value ``i`` with reference ``i`` (NaN
    past the end of the registry); ``spurious`` applies the 2% band against
    the whole reference list.
    """
    config.validate()
    bench = benchmark(config.eps_r)
    refs_all = np.asarray(bench.references)
    coeffs = CoefficientField.checkerboard(config.eps_r)
    params = config.params()
    tables = []
    for h, mesh in _meshes("checkerboard", config.hs, config.style, config.mesh_files):
        try:
            fe = build_system(mesh, config.degree + 1)
            res = solve_eigs(fe, coeffs, params, k=config.k, tol=config.tol, backend=config.backend)
        except Exception as exc:
            raise SweepError(f"eigen solve failed at h={h}, alpha={config.alpha}: {exc}") from exc
        lam = res.eigenvalues
        refs = np.full(len(lam), np.nan)
        n = min(len(lam), len(refs_all))
        refs[:n] = refs_all[:n]
        tables.append(
            EigenTable(h, mesh.h, fe.n_dofs, lam, refs, np.abs(lam - refs) / refs,
                       classify_pollution(lam, refs_all), res.residual_norms)
        )
        log.info("h=%g dofs=%d eigenvalues=%s", h, fe.n_dofs, np.array2string(lam, precision=5))
    return tables


# ---------------------------------------------------------------------------
# table emission


def _num(x, fmt="{:.6e}"):
    if x is None or (isinstance(x, float) and math.isnan(x)):
        return ""
    return fmt.format(x)


def _rate(x):
    return "" if x is None else f"{x:.4f}"


def _csv(header, rows):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buf.getvalue()


def _markdown(header, rows):
    lines = ["| " + " | ".join(header) + " |", "|" + "---|" * len(header)]
    lines += ["| " + " | ".join(r) + " |" for r in rows]
    return "\n".join(lines) + "\n"


def _emit(header, rows, fmt):
    if fmt == "csv":
        return _csv(header, rows)
    if fmt == "md":
        return _markdown(header, rows)
    raise ValueError(f"unknown format {fmt!r}")


def convergence_table(rows, fmt="csv"):
    """``h,rel_err,coc`` table for a single sequence of rows."""
    body = [[_num(r.h, "{:g}"), _num(r.rel_err), _rate(r.coc)] for r in rows]
    return _emit(["h", "rel_err", "coc"], body, fmt)


def bvp_report_table(report, fmt="csv"):
    """One table for the whole sweep; a single alpha gives the plain ``h,rel_err,coc`` layout."""
    alphas = list(report.runs)
    if len(alphas) == 1:
        return convergence_table(report.rows(alphas[0]), fmt)
    if fmt == "csv":
        body = [[_num(a, "{:g}"), _num(r.h, "{:g}"), _num(r.rel_err), _rate(r.coc)]
                for a in alphas for r in report.rows(a)]
        return _csv(["alpha", "h", "rel_err", "coc"], body)
    # markdown mirrors the usual layout: one column pair per alpha
    header = ["h"]
    for a in alphas:
        header += [f"rel. err. (alpha={a:g})", "coc"]
    per_alpha = [report.rows(a) for a in alphas]
    body = []
    for i in range(len(per_alpha[0])):
        line = [_num(per_alpha[0][i].h, "{:g}")]
        for rows in per_alpha:
            line += [_num(rows[i].rel_err, "{:.3e}"), _rate(rows[i].coc)]
        body.append(line)
    return _markdown(header, body)


def eigen_table(table, fmt="csv"):
    """``index,lambda,ref,rel_err,flag`` table for one mesh."""
    body = []
    for i, (lam, ref, err, bad) in enumerate(zip(table.eigenvalues, table.references, table.rel_err, table.spurious)):
        body.append([str(i + 1), _num(lam, "{:.8g}"), _num(ref, "{:g}"), _num(err), "spurious" if bad else ""])
    return _emit(["index", "lambda", "ref", "rel_err", "flag"], body, fmt)


def eigen_sweep_table(tables, fmt="csv"):
    """Per-eigenvalue convergence over the sweep: ``h,index,lambda,ref,rel_err,coc``."""
    if len(tables) == 1:
        return eigen_table(tables[0], fmt)
    body = []
    k = min(len(t.eigenvalues) for t in tables)
    for i in range(k):
        errs = [t.rel_err[i] for t in tables]
        rates = [None] * len(tables)
        if all(np.isfinite(errs)) and all(e > 0 for e in errs):
            rates = [r.coc for r in coc([t.h for t in tables], errs)]
        for t, rate in zip(tables, rates):
            body.append([_num(t.h, "{:g}"), str(i + 1), _num(t.eigenvalues[i], "{:.8g}"),
                         _num(t.references[i], "{:g}"), _num(t.rel_err[i]), _rate(rate)])
    return _emit(["h", "index", "lambda", "ref", "rel_err", "coc"], body, fmt)
