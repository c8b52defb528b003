"""End-to-end orchestration: config to certificates, records and reports.

Stages run in a fixed order and abort with SolveStageError carrying the
stage name and a diagnostic payload.  All randomness flows from the
single seeded generator (numpy PCG64 via default_rng), so a fixed seed
reproduces reports bit-for-bit.
"""

from __future__ import annotations

import csv
import io
import os
from dataclasses import dataclass

import numpy as np

from .config import ProblemConfig
from .energy import EnergyContext, phi
from .errors import (CertificateError, HypothesisViolation, SolveStageError,
                     SpectralStructureError)
from .fem import (CoefficientField, Mesh, SymmetricForm, assemble_boundary,
                  assemble_mass, assemble_potential, assemble_stiffness,
                  build_interval_mesh, build_rectangle_mesh, compose_gamma,
                  compose_h1)
from .reactions import (LinearReaction, ModelReaction, Reaction, SpectralRefs,
                        SquareReaction, audit_hypotheses)
from .reduction import certify_reduction, coercivity_probe, tau
from .solver import (SearchPlan, SolutionRecord, default_d_min,
                     detect_flat_w_ball, linking_sign_check, make_record,
                     minimize_reduced, second_critical_point, verify_solution,
                     _w_ball_record)
from .spectrum import (EigenDecomposition, coercivity_shift, first_eigen_report,
                       lemma_gap_constant, solve_pencil)
from .subspaces import split


@dataclass
class BuiltProblem:
    mesh: Mesh
    xi: CoefficientField
    beta: CoefficientField
    M: SymmetricForm
    K: SymmetricForm
    Xi: SymmetricForm
    B: SymmetricForm
    G: SymmetricForm
    A: SymmetricForm


def _load_nodal_csv(path: str, n: int) -> np.ndarray:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or [c.strip() for c in rows[0]] != ["index", "value"]:
        raise ValueError(f"nodal CSV {path} must have header 'index,value'")
    vals = np.full(n, np.nan)
    for r in rows[1:]:
        vals[int(r[0])] = float(r[1])
    if np.any(np.isnan(vals)):
        raise ValueError(f"nodal CSV {path} does not cover all {n} nodes")
    return vals


def _field_from_spec(spec: dict, mesh: Mesh, base_dir: str,
                     boundary: bool) -> CoefficientField:
    kind = spec["kind"]
    if kind == "constant":
        return CoefficientField.constant(spec["value"])
    if kind == "nodal_csv":
        path = os.path.join(base_dir, spec["path"])
        return CoefficientField.from_nodal(_load_nodal_csv(path, mesh.n_nodes))
    if kind == "per_side":
        if mesh.dim == 1:
            a = mesh.domain["a"]
            b = mesh.domain["b"]
            left, right = spec["left"], spec["right"]

            def fn(x):
                return np.where(np.abs(x - a) <= np.abs(x - b), left, right)
        else:
            lx, ly = mesh.domain["lx"], mesh.domain["ly"]
            vals = {k: spec[k] for k in ("left", "right", "bottom", "top")}

            def fn(x, y):
                d = np.stack([x, lx - x, y, ly - y])
                side = np.argmin(d, axis=0)
                table = np.array([vals["left"], vals["right"],
                                  vals["bottom"], vals["top"]])
                return table[side]
        return CoefficientField.from_callable(fn)
    # builtin interior potentials
    name = spec["name"]
    if name == "cosine":
        amp, freq, off = spec["amp"], spec["freq"], spec["offset"]
        if mesh.dim == 1:
            fn = lambda x: amp * np.cos(freq * x) + off
        else:
            fn = lambda x, y: amp * np.cos(freq * x) * np.cos(freq * y) + off
    elif name == "inv_dist":
        amp, power = spec["amp"], spec["power"]
        x0, y0 = spec["x0"], spec["y0"]
        if mesh.dim == 1:
            fn = lambda x: amp * np.abs(x - x0) ** (-power)
        else:
            fn = lambda x, y: amp * ((x - x0) ** 2 + (y - y0) ** 2) ** (-power / 2.0)
    else:  # pragma: no cover - schema rejects other names
        raise ValueError(f"unknown builtin field {name!r}")
    return CoefficientField.from_callable(fn)


def build_problem(cfg: ProblemConfig) -> BuiltProblem:
    dom = cfg.domain
    if dom["kind"] == "interval":
        mesh = build_interval_mesh(dom["a"], dom["b"], dom["n"])
    else:
        mesh = build_rectangle_mesh(dom["lx"], dom["ly"], dom["nx"], dom["ny"])
    xi = _field_from_spec(cfg.potential, mesh, cfg.base_dir, boundary=False)
    beta = _field_from_spec(cfg.boundary, mesh, cfg.base_dir, boundary=True)
    M = assemble_mass(mesh)
    K = assemble_stiffness(mesh)
    Xi = assemble_potential(mesh, xi)
    B = assemble_boundary(mesh, beta)
    G = compose_gamma(K, Xi, B)
    A = compose_h1(M, K)
    return BuiltProblem(mesh, xi, beta, M, K, Xi, B, G, A)


def make_reaction(cfg: ProblemConfig, decomp: EigenDecomposition) -> Reaction:
    spec = cfg.reaction
    refs = SpectralRefs.from_decomposition(decomp, spec["m"], spec["l"])
    if spec["kind"] == "model":
        a_s = spec["a_s_fraction"] * (refs.lam_m1 - refs.lam_m)
        return ModelReaction(refs.lam_m, refs.lam_m1, refs.lam_lm1, refs.lam_l,
                             a_s=a_s, delta=spec["delta"], refs=refs)
    if spec["kind"] == "linear":
        r = LinearReaction(spec["slope"])
    else:
        r = SquareReaction()
    r.spectral_refs = refs
    return r


def make_plan(cfg: ProblemConfig, mesh: Mesh) -> SearchPlan:
    s = cfg.solver
    d_min = default_d_min(mesh) if s["d_min"] == "auto" else float(s["d_min"])
    return SearchPlan(
        rho=s["rho"], linking_samples=s["linking_samples"],
        w_starts=s["w_starts"], e_starts=s["e_starts"], v_starts=s["v_starts"],
        zero_starts=s["zero_starts"], descent_max_iter=s["descent_max_iter"],
        grad_tol=s["grad_tol"], tol_res=s["tol_res"], tol_sign=s["tol_sign"],
        d_min=d_min, path_points=s["path_points"], mp_max_iter=s["mp_max_iter"],
        deflation_shift=s["deflation_shift"])


def spectrum_csv(decomp: EigenDecomposition, G: SymmetricForm, M: SymmetricForm,
                 n_report: int) -> str:
    from .spectrum import residual_norms
    res = residual_norms(G, M, decomp.eigenvalues, decomp.vectors)
    lines = ["k,lambda,multiplicity,residual"]
    for c in range(min(n_report, decomp.n_clusters)):
        s, e = decomp.clusters[c]
        lines.append(f"{c + 1},{decomp.cluster_values[c]:.17g},"
                     f"{e - s},{res[s:e].max():.17g}")
    return "\n".join(lines) + "\n"


def solution_csv(mesh: Mesh, u: np.ndarray) -> str:
    buf = io.StringIO()
    if mesh.dim == 1:
        buf.write("index,x,u\n")
        for i in range(mesh.n_nodes):
            buf.write(f"{i},{mesh.nodes[i, 0]:.17g},{u[i]:.17g}\n")
    else:
        buf.write("index,x,y,u\n")
        for i in range(mesh.n_nodes):
            buf.write(f"{i},{mesh.nodes[i, 0]:.17g},{mesh.nodes[i, 1]:.17g},"
                      f"{u[i]:.17g}\n")
    return buf.getvalue()


def read_solution_csv(text: str) -> np.ndarray:
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or rows[0][0] != "index" or rows[0][-1] != "u":
        raise ValueError("solution CSV must carry a header ending in 'u'")
    pairs = [(int(r[0]), float(r[-1])) for r in rows[1:] if r]
    n = max(i for i, _ in pairs) + 1
    u = np.zeros(n)
    for i, v in pairs:
        u[i] = v
    return u


def _stage(name: str):
    """Decorator-free helper: wrap known failures into stage errors."""
    class _Ctx:
        def __enter__(self):
            return self

        def __exit__(self, exc_type, exc, tb):
            if exc is None or isinstance(exc, SolveStageError):
                return False
            if isinstance(exc, (HypothesisViolation, CertificateError,
                                SpectralStructureError, ValueError,
                                RuntimeError)):
                raise SolveStageError(name, str(exc)) from exc
            return False
    return _Ctx()


def run_spectrum(cfg: ProblemConfig) -> dict:
    """Eigenvalue table plus the coercivity and structure certificates."""
    prob = build_problem(cfg)
    decomp = solve_pencil(prob.G, prob.M, k=prob.mesh.n_nodes,
                          cluster_tol=cfg.solver["cluster_tol"])
    ok = True
    structure = None
    try:
        structure = first_eigen_report(
            decomp, max_clusters=min(decomp.n_clusters,
                                     cfg.solver["n_report"])).as_dict()
    except SpectralStructureError as exc:
        ok = False
        structure = {"failed_property": exc.prop, "message": str(exc)}
    cert = coercivity_shift(prob.G, prob.M, prob.A)
    return {
        "ok": ok,
        "config": cfg.as_dict(),
        "table_csv": spectrum_csv(decomp, prob.G, prob.M, cfg.solver["n_report"]),
        "distinct_eigenvalues": [float(v) for v in
                                 decomp.cluster_values[:cfg.solver["n_report"]]],
        "multiplicities": [int(m) for m in
                           decomp.multiplicities()[:cfg.solver["n_report"]]],
        "certificates": {"coercivity": cert.as_dict(), "structure": structure},
    }


def run_audit(cfg: ProblemConfig) -> dict:
    """Hypothesis audit of the configured reaction against the spectrum."""
    prob = build_problem(cfg)
    decomp = solve_pencil(prob.G, prob.M, k=prob.mesh.n_nodes,
                          cluster_tol=cfg.solver["cluster_tol"])
    reaction = make_reaction(cfg, decomp)
    report = audit_hypotheses(reaction)
    return {
        "ok": report.passed,
        "config": cfg.as_dict(),
        "reaction": reaction.describe(),
        "audit": report.as_dict(),
        "table": report.table(),
    }


def run_verify(cfg: ProblemConfig, u: np.ndarray) -> dict:
    """Verify a supplied coefficient vector as a weak solution."""
    prob = build_problem(cfg)
    if u.shape[0] != prob.mesh.n_nodes:
        raise ValueError(f"solution vector has {u.shape[0]} entries, mesh has "
                         f"{prob.mesh.n_nodes} nodes")
    decomp = solve_pencil(prob.G, prob.M, k=prob.mesh.n_nodes,
                          cluster_tol=cfg.solver["cluster_tol"])
    reaction = make_reaction(cfg, decomp)
    ectx = EnergyContext(prob.G, prob.M, prob.A, prob.mesh, reaction)
    plan = make_plan(cfg, prob.mesh)
    report = verify_solution(ectx, u, plan.tol_res, plan.d_min, beta=prob.beta)
    return {"ok": report.passed, "config": cfg.as_dict(),
            "verification": report.as_dict()}


@dataclass
class SolveResult:
    ok: bool
    report: dict
    records: list            # [SolutionRecord, SolutionRecord]
    mesh: Mesh


def solve_problem(cfg: ProblemConfig) -> SolveResult:
    """Full pipeline; aborts with SolveStageError naming the failing stage."""
    rng = np.random.default_rng(cfg.solver["seed"])
    report = {"ok": False, "config": cfg.as_dict(), "stages": []}

    def done(stage):
        report["stages"].append(stage)

    with _stage("assemble"):
        prob = build_problem(cfg)
    done("assemble")

    with _stage("spectrum"):
        decomp = solve_pencil(prob.G, prob.M, k=prob.mesh.n_nodes,
                              cluster_tol=cfg.solver["cluster_tol"])
        structure = first_eigen_report(
            decomp, max_clusters=min(decomp.n_clusters, cfg.reaction["l"] + 2))
        coercivity = coercivity_shift(prob.G, prob.M, prob.A)
    report["spectrum"] = {
        "distinct_eigenvalues": [float(v) for v in decomp.cluster_values[:12]],
        "multiplicities": [int(m) for m in decomp.multiplicities()[:12]],
        "structure": structure.as_dict(),
    }
    done("spectrum")

    with _stage("reaction"):
        reaction = make_reaction(cfg, decomp)
    report["reaction"] = reaction.describe()
    done("reaction")

    audit = audit_hypotheses(reaction)
    report["audit"] = audit.as_dict()
    if not audit.passed:
        raise SolveStageError(
            "hypothesis-audit",
            "the reaction fails its growth hypotheses; see the audit payload",
            {"audit": audit.as_dict(), "table": audit.table(),
             "partial_report": report})
    done("hypothesis-audit")

    with _stage("split"):
        spl = split(decomp, prob.M, cfg.reaction["m"], cfg.reaction["l"])
    report["split"] = spl.summary()
    done("split")

    with _stage("certificates"):
        ectx = EnergyContext(prob.G, prob.M, prob.A, prob.mesh, reaction)
        rctx = certify_reduction(ectx, spl, decomp,
                                 grad_tol=cfg.solver["tau_grad_tol"],
                                 max_iter=cfg.solver["tau_max_iter"])
        theta = CoefficientField.constant(reaction.theta_bound)
        gap_b = lemma_gap_constant("b", decomp, cfg.reaction["l"], theta,
                                   prob.mesh, prob.G, prob.A)
    report["certificates"] = {
        "coercivity": coercivity.as_dict(),
        "gap_a": rctx.certificate.as_dict(),
        "gap_b": gap_b.as_dict(),
    }
    done("certificates")

    plan = make_plan(cfg, prob.mesh)
    report["plan"] = {"rho": plan.rho, "d_min": plan.d_min,
                      "grad_tol": plan.grad_tol, "tol_res": plan.tol_res,
                      "tol_sign": plan.tol_sign, "seed": cfg.solver["seed"]}

    with _stage("linking"):
        linking = linking_sign_check(rctx, plan.rho, plan.linking_samples, rng,
                                     tol_sign=plan.tol_sign)
    report["linking"] = linking.as_dict()
    done("linking")

    with _stage("minimize"):
        first = minimize_reduced(rctx, plan, rng)
    report["minimize"] = {"energy": first.energy,
                          "reduced_grad_norm": first.reduced_grad_norm,
                          "l2_norm": first.m_norm}
    done("minimize")

    if first.energy < -plan.tol_sign:
        report["branch"] = "minimizer"
        with _stage("second-critical-point"):
            second = second_critical_point(rctx, plan, first, rng)
        records = [first, second]
        done("second-critical-point")
    else:
        report["branch"] = "flat-w-ball"
        with _stage("degenerate-branch"):
            flat_rho = min(plan.rho, linking.rho_final)
            if not detect_flat_w_ball(rctx, plan, flat_rho, rng):
                raise SolveStageError(
                    "degenerate-branch",
                    "reduced infimum is zero but the W ball is not flat; "
                    "search exhausted", {"linking": linking.as_dict()})
            rec_plus = _w_ball_record(rctx, plan, direction=+1.0)
            rec_minus = (None if rec_plus is None else
                         _w_ball_record(rctx, plan, direction=-1.0,
                                        first=rec_plus))
            if rec_plus is None or rec_minus is None:
                raise SolveStageError(
                    "degenerate-branch",
                    "failed to place two distinct solutions on the flat W ball",
                    {"linking": linking.as_dict()})
            records = [rec_plus, rec_minus]
        done("degenerate-branch")

    with _stage("verify"):
        verifications = [verify_solution(ectx, r.u, plan.tol_res, plan.d_min,
                                         beta=prob.beta) for r in records]
        for i, v in enumerate(verifications):
            if not v.passed:
                raise SolveStageError(
                    "verify", f"solution {i} failed verification",
                    {"verification": v.as_dict()})
        dist = float(np.sqrt(max(prob.M.quad(records[0].u - records[1].u), 0.0)))
        if dist < plan.d_min:
            raise SolveStageError(
                "verify", f"solutions are not distinct: L2 distance {dist:.3e} "
                f"below d_min {plan.d_min:.3e}", {})
    report["verification"] = [v.as_dict() for v in verifications]
    report["distance_l2"] = dist
    done("verify")

    with _stage("roundtrip"):
        roundtrip = []
        for r in records:
            v_back = spl.project("V", r.u)
            res = tau(rctx, v_back)
            u_re = spl.lift("V", v_back) + spl.lift("H_minus", res.y)
            err = ectx.a_norm(u_re - r.u)
            roundtrip.append({"reconstruction_error_a": err,
                              "ok": bool(err <= 1e-6)})
        if not all(x["ok"] for x in roundtrip):
            raise SolveStageError("roundtrip",
                                  "critical point does not reproduce through "
                                  "the reduction map", {"roundtrip": roundtrip})
    report["roundtrip"] = roundtrip
    if report["branch"] == "minimizer":
        report["energy_ordering_ok"] = bool(
            records[0].energy <= records[1].energy + 1e-10)
    done("roundtrip")

    with _stage("probe"):
        probe = coercivity_probe(rctx, cfg.solver["probe_directions"],
                                 cfg.probe_radii(), rng)
    report["probe"] = probe.as_dict()
    done("probe")

    report["records"] = [r.as_dict() for r in records]
    report["ok"] = True
    return SolveResult(ok=True, report=report, records=records, mesh=prob.mesh)
