"""Command-line front end.

Exit codes are a stable contract: 0 success, 1 numerical failure (a check
failed or a solver did not converge), 2 usage or configuration error.
"""

from __future__ import annotations

import json
import logging
import os
import sys
import warnings
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import click
import numpy as np

from . import __version__, flow
from .config import RunConfig, load_config, manifest
from .errors import ConfigError, DegbillError, DegenerateChainWarning

log = logging.getLogger("degbill")

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class NumericalFailure(Exception):
    """Raised inside commands to request exit code 1 after output was written."""


# ----------------------------------------------------------------------
# helpers
# ----------------------------------------------------------------------

def _setup_logging() -> None:
    level = os.environ.get("DEGBILL_LOG", "WARNING").upper()
    if level.isdigit():
        lvl = int(level)
    else:
        lvl = getattr(logging, level, None)
        if not isinstance(lvl, int):
            lvl = logging.WARNING
    logging.basicConfig(level=lvl, format="%(levelname)s %(name)s: %(message)s",
                        stream=sys.stderr)


def _parse_overrides(items) -> dict:
    out = {}
    for item in items:
        key, sep, val = item.partition("=")
        if not sep or not key:
            raise click.BadParameter(f"expected KEY=VAL, got {item!r}",
                                     param_hint="--tol-override")
        try:
            out[key.strip()] = json.loads(val)
        except json.JSONDecodeError:
            raise click.BadParameter(f"value of {key!r} is not a number: {val!r}",
                                     param_hint="--tol-override") from None
    return out


def _parse_mu_range(text: str) -> list[float]:
    parts = [p.strip() for p in text.split(",")]
    if len(parts) != 3:
        raise click.BadParameter("expected 'sign,kmin,kmax'", param_hint="--mu-range")
    try:
        sign, kmin, kmax = (int(p) for p in parts)
    except ValueError:
        raise click.BadParameter("sign, kmin and kmax must be integers",
                                 param_hint="--mu-range") from None
    if sign not in (-1, 1) or kmin > kmax:
        raise click.BadParameter("sign must be -1 or 1 and kmin <= kmax",
                                 param_hint="--mu-range")
    return [sign * 10.0 ** (-k) for k in range(kmin, kmax + 1)]


def _check_mu(cfg: RunConfig, mus) -> None:
    lo, hi = cfg.problem.mu_range
    for mu in mus:
        if mu == 0.0:
            raise click.BadParameter("mu = 0 is excluded", param_hint="--mu")
        if not lo <= mu <= hi:
            raise click.BadParameter(f"mu = {mu:g} outside the configured range [{lo:g}, {hi:g}]",
                                     param_hint="--mu")


def _apply_runtime(cfg: RunConfig) -> None:
    flow.EVENT_TOL = cfg.tolerances.event


def _out_dir(cfg: RunConfig, out: str | None) -> Path:
    d = Path(out or cfg.output)
    d.mkdir(parents=True, exist_ok=True)
    return d


def _write_json(path: Path, data) -> None:
    path.write_text(json.dumps(data, indent=2, default=_jsonable) + "\n")


def _jsonable(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer, np.bool_)):
        return o.item()
    if isinstance(o, Path):
        return str(o)
    raise TypeError(f"not serializable: {type(o).__name__}")


def _write_manifest(out: Path, cfg: RunConfig, command: str, files: list) -> None:
    _write_json(out / "manifest.json", manifest(cfg, command, {"outputs": [str(f) for f in files]}))


class _Ctx:
    def __init__(self, config, out, overrides, workers):
        cfg = load_config(config)
        if overrides:
            cfg = cfg.with_overrides(overrides)
        self.cfg = cfg
        self.out = out
        self.workers = workers
        _apply_runtime(cfg)


def _common(f):
    f = click.option("--workers", type=click.IntRange(min=1), default=1, show_default=True,
                     help="Worker processes for independent solves.")(f)
    f = click.option("--tol-override", "overrides", multiple=True, metavar="KEY=VAL",
                     help="Override a tolerance (integration, newton, event) or "
                          "tube.*/regularization.* entry.")(f)
    f = click.option("--out", type=click.Path(file_okay=False), default=None,
                     help="Output directory (default: config 'output').")(f)
    f = click.option("--config", "config", required=True,
                     type=click.Path(dir_okay=False),
                     help="JSON run configuration.")(f)
    return f


def _ctx(config, out, overrides, workers) -> _Ctx:
    return _Ctx(config, out, _parse_overrides(overrides), workers)


# ----------------------------------------------------------------------
# chain construction (module level so worker processes can import it)
# ----------------------------------------------------------------------

def build_chain(problem, cc):
    from .dls import Chain
    pts = cc.points
    if pts is None:
        pts = [np.zeros(problem.components[c].intrinsic_dim) for c in cc.components]
    for c in cc.components:
        if not 0 <= c < len(problem.components):
            raise ConfigError(f"chain {cc.name!r}: component {c} does not exist")
    return Chain(cc.kind, cc.components, pts, cc.tags, cc.a, cc.b, name=cc.name)


def solve_chain(cfg: RunConfig, problem, cc):
    """Critical chain for a configured chain (warnings for degenerate ones suppressed)."""
    from .dls import GeneratingFamily, newton_finite, newton_periodic
    fam = GeneratingFamily(problem, cfg.energy, 0.0, tol=cfg.tolerances.integration)
    guess = build_chain(problem, cc)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", DegenerateChainWarning)
        if cc.kind == "periodic":
            ch = newton_periodic(fam, guess, tol=cfg.tolerances.newton)
        else:
            ch = newton_finite(fam, guess, tol=cfg.tolerances.newton)
    return fam, ch


def shadow_problem(cfg: RunConfig, problem, cc):
    from .shadow import build_sections
    fam, ch = solve_chain(cfg, problem, cc)
    rho = problem.rho
    return build_sections(problem, ch, rho, cfg.tube.eps_factor * rho, E=cfg.energy,
                          C=cfg.tube.C, delta=cfg.tube.delta, family=fam,
                          tol=cfg.tolerances.integration, order=cfg.regularization.order)


def _solve_one(sp, mu, q_init=None, max_iter=20):
    from .shadow import GRAD_TOL, shadow_finite, shadow_periodic
    if sp.periodic:
        return shadow_periodic(sp, mu, q_init, max_iter=max_iter, tol=GRAD_TOL)
    return shadow_finite(sp, mu=mu, q_init=q_init, max_iter=max_iter, tol=GRAD_TOL)


def _mu_tag(mu: float) -> str:
    return f"{mu:+.3e}".replace("+", "p").replace("-", "m").replace(".", "_")


def run_scan_job(cfg_json: str, chain_name: str, mus: list, out: str) -> dict:
    """One chain's continuation scan; writes scan CSV and orbit CSVs."""
    from .shadow import export_orbit_csv, mu_scan, write_scan_csv
    cfg = RunConfig.model_validate_json(cfg_json)
    _apply_runtime(cfg)
    problem = cfg.build_problem()
    out = Path(out)
    cc = cfg.chain(chain_name)
    files = []
    try:
        sp = shadow_problem(cfg, problem, cc)
        rows = mu_scan(sp, mus, warm_start=cfg.scan.warm_start, max_iter=cfg.scan.max_iter)
    except DegbillError as exc:
        rows = [{"mu": float(mus[0]), "status": f"failed: {exc}"}]
    for r in rows:
        res = r.pop("result", None)
        if res is not None:
            f = out / f"orbit_{chain_name}_{_mu_tag(r['mu'])}.csv"
            export_orbit_csv(res, f)
            files.append(str(f))
    csv_path = out / f"scan_{chain_name}.csv"
    write_scan_csv(rows, csv_path)
    files.append(str(csv_path))
    ok = len(rows) == len(mus) and all(r["status"] == "ok" for r in rows)
    return {"chain": chain_name, "rows": rows, "files": files, "ok": ok}


# ----------------------------------------------------------------------
# commands
# ----------------------------------------------------------------------

@click.group(context_settings={"help_option_names": ["-h", "--help"]})
@click.version_option(__version__, prog_name="degbill")
def cli():
    """Collision chains of degenerate billiards and their shadowing orbits."""


@cli.group()
def problem():
    """Problem definitions."""


@problem.command("validate")
@_common
def problem_validate(config, out, overrides, workers):
    """Run the geometry invariant suite on the configured problem."""
    from .checks import geometry_checks
    c = _ctx(config, out, overrides, workers)
    prob = c.cfg.build_problem()
    results = geometry_checks(prob, seed=c.cfg.seed)
    return _report(c, "problem validate", results, "validate.json")


def _report(c: _Ctx, command: str, results, fname: str) -> int:
    for r in results:
        click.echo(r.line())
    ok = all(r.passed for r in results)
    click.echo(f"{sum(r.passed for r in results)}/{len(results)} checks passed")
    if c.out is not None:
        d = _out_dir(c.cfg, c.out)
        _write_json(d / fname, [r.__dict__ for r in results])
        _write_manifest(d, c.cfg, command, [d / fname])
    return EXIT_OK if ok else EXIT_FAIL


@cli.group()
def chain():
    """Critical collision chains."""


def _chain_report(problem, ch) -> dict:
    from .dls import admissibility
    H = ch.hessian
    ev = np.linalg.eigvalsh(H.matrix) if H.matrix.size else np.zeros(0)
    rep = {"chain": ch.to_dict(), "name": ch.name,
           "gradient_norm": float(ch.residuals[-1]) if ch.residuals else 0.0,
           "newton_iterations": max(len(ch.residuals) - 1, 0),
           "hessian_eigenvalues": ev,
           "nondegenerate": bool(H.nondegenerate()),
           "kernel": ch.kernel if ch.kernel is not None else None,
           "admissibility": [{"index": r.index, "component": r.component, "jump": r.jump,
                              "jump_ok": r.jump_ok, "straight_reflection": r.straight_reflection,
                              "tangency": r.tangency, "u_in": r.u_in, "u_out": r.u_out}
                             for r in admissibility(ch, problem)]}
    return rep


@chain.command("find")
@_common
@click.option("--chain", "chain_name", required=True, help="Configured chain name.")
def chain_find(config, out, overrides, workers, chain_name):
    """Solve for the critical chain and write its JSON report."""
    c = _ctx(config, out, overrides, workers)
    cc = c.cfg.chain(chain_name)
    prob = c.cfg.build_problem()
    _, ch = solve_chain(c.cfg, prob, cc)
    rep = _chain_report(prob, ch)
    click.echo(f"chain {chain_name}: gradient {rep['gradient_norm']:.3e} after "
               f"{rep['newton_iterations']} Newton iterations")
    click.echo("Hessian eigenvalues: " + " ".join(f"{e:.6g}" for e in rep["hessian_eigenvalues"]))
    if not rep["nondegenerate"]:
        click.echo("degenerate critical chain; kernel basis (columns):")
        click.echo(np.array2string(np.asarray(ch.kernel), precision=6))
    for a in rep["admissibility"]:
        flags = [k for k in ("straight_reflection", "tangency") if a[k]]
        click.echo(f"collision {a['index']} on component {a['component']}: jump {a['jump']:.4g}"
                   + (f" [{', '.join(flags)}]" if flags else ""))
    d = _out_dir(c.cfg, c.out)
    f = d / f"chain_{chain_name}.json"
    _write_json(f, rep)
    _write_manifest(d, c.cfg, "chain find", [f])
    return EXIT_OK


@chain.command("certify")
@_common
@click.option("--chain", "chain_name", required=True, help="Configured chain name.")
@click.option("--windows", default="8,16,32,64", show_default=True,
              help="Comma-separated window lengths.")
def chain_certify(config, out, overrides, workers, chain_name, windows):
    """Window hyperbolicity certificate and transfer matrices of a periodic chain."""
    from .dls import hyperbolicity_certificate, poincare_maps
    from .errors import TwistConditionError
    try:
        wins = tuple(int(w) for w in windows.split(","))
    except ValueError:
        raise click.BadParameter("window lengths must be integers", param_hint="--windows") \
            from None
    c = _ctx(config, out, overrides, workers)
    cc = c.cfg.chain(chain_name)
    if cc.kind != "periodic":
        raise click.BadParameter("certificates need a periodic chain", param_hint="--chain")
    prob = c.cfg.build_problem()
    fam, ch = solve_chain(c.cfg, prob, cc)
    cert = hyperbolicity_certificate(fam, ch, wins)
    rep = {"chain": chain_name, "windows": cert.windows, "inverse_norms": cert.inverse_norms,
           "spread": cert.spread, "growth_exponent": cert.growth_exponent,
           "passed": cert.passed, "vacuous": cert.vacuous, "reason": cert.reason}
    try:
        pm = poincare_maps(ch)
        rep["monodromy_eigenvalues"] = [[z.real, z.imag] for z in pm.eigenvalues]
        rep["det_monodromy_minus_identity"] = pm.det_P_minus_I
    except TwistConditionError as exc:
        rep["monodromy"] = f"unavailable: {exc}"
    for L, nrm in zip(cert.windows, cert.inverse_norms):
        click.echo(f"window {L:4d}: |H^-1|_inf = {nrm:.6g}")
    click.echo(f"spread {cert.spread:.3g}, growth exponent {cert.growth_exponent:.3g}: "
               + ("PASS" if cert.passed else f"FAIL ({cert.reason})"))
    d = _out_dir(c.cfg, c.out)
    f = d / f"certificate_{chain_name}.json"
    _write_json(f, rep)
    _write_manifest(d, c.cfg, "chain certify", [f])
    return EXIT_OK if cert.passed else EXIT_FAIL


@cli.group()
def shadow():
    """Shadowing orbits of collision chains."""


@shadow.command("run")
@_common
@click.option("--chain", "chain_name", required=True, help="Configured chain name.")
@click.option("--mu", type=float, required=True, help="Singular coupling (nonzero).")
def shadow_run(config, out, overrides, workers, chain_name, mu):
    """Shadowing orbit at a single mu: summary JSON and orbit CSV."""
    from .shadow import export_orbit_csv
    c = _ctx(config, out, overrides, workers)
    _check_mu(c.cfg, [mu])
    cc = c.cfg.chain(chain_name)
    prob = c.cfg.build_problem()
    sp = shadow_problem(c.cfg, prob, cc)
    res = _solve_one(sp, mu, max_iter=c.cfg.scan.max_iter)
    d = _out_dir(c.cfg, c.out)
    orbit = d / f"orbit_{chain_name}_{_mu_tag(mu)}.csv"
    export_orbit_csv(res, orbit)
    summ = res.summary()
    summ["qs"] = res.qs
    summ["closest_approach"] = res.closest_approach
    summ["collision_errors"] = res.collision_errors
    f = d / f"shadow_{chain_name}_{_mu_tag(mu)}.json"
    _write_json(f, summ)
    _write_manifest(d, c.cfg, "shadow run", [orbit, f])
    click.echo(f"mu {mu:g}: shadow error {res.shadow_error:.4e} "
               f"(scaled {res.scaled_error:.4g}), {res.iterations} Newton iterations, "
               f"collision-free {res.collision_free}")
    return EXIT_OK


@cli.group()
def scan():
    """Parameter scans."""


@scan.command("mu")
@_common
@click.option("--chain", "chain_names", required=True,
              help="Configured chain name (comma-separated for several).")
@click.option("--mu-range", "mu_range", default=None, metavar="SIGN,KMIN,KMAX",
              help="Log grid sign*10^-k, k = kmin..kmax (default: config scan).")
def scan_mu(config, out, overrides, workers, chain_names, mu_range):
    """Warm-started continuation in mu; one CSV per chain."""
    c = _ctx(config, out, overrides, workers)
    mus = _parse_mu_range(mu_range) if mu_range else c.cfg.scan.values()
    if not mus:
        raise click.UsageError("no mu values: give --mu-range or configure scan")
    _check_mu(c.cfg, mus)
    names = [n.strip() for n in chain_names.split(",") if n.strip()]
    for n in names:
        c.cfg.chain(n)
    d = _out_dir(c.cfg, c.out)
    cfg_json = c.cfg.model_dump_json()
    if c.workers > 1 and len(names) > 1:
        with ProcessPoolExecutor(max_workers=min(c.workers, len(names))) as ex:
            jobs = [ex.submit(run_scan_job, cfg_json, n, mus, str(d)) for n in names]
            results = [j.result() for j in jobs]
    else:
        results = [run_scan_job(cfg_json, n, mus, str(d)) for n in names]
    files = []
    for r in results:
        files += r["files"]
        for row in r["rows"]:
            if row["status"] == "ok":
                click.echo(f"{r['chain']} mu {row['mu']:+.1e}: scaled error "
                           f"{row['scaled_error']:.4g}, d/mu {row['min_distance_over_mu']:.4g}"
                           f"..{row['max_distance_over_mu']:.4g}, {row['iterations']} iterations")
            else:
                click.echo(f"{r['chain']} mu {row['mu']:+.1e}: {row['status']}")
    _write_manifest(d, c.cfg, "scan mu", files)
    return EXIT_OK if all(r["ok"] for r in results) else EXIT_FAIL


@cli.group()
def reg():
    """Regularization oracles."""


@reg.command("test")
@_common
@click.option("--mu", type=float, default=-1e-4, show_default=True,
              help="Coupling used by the flow oracle.")
def reg_test(config, out, overrides, workers, mu):
    """Hurwitz identities, dual-path Hamiltonian, flow oracle and eigenvalues."""
    from .checks import regularization_checks
    c = _ctx(config, out, overrides, workers)
    if mu == 0.0:
        raise click.BadParameter("mu = 0 is excluded", param_hint="--mu")
    prob = c.cfg.build_problem()
    return _report(c, "reg test", regularization_checks(prob, c.cfg.energy, mu), "reg.json")


# ----------------------------------------------------------------------
# entry point
# ----------------------------------------------------------------------

def main(argv=None) -> int:
    """Console entry point returning the process exit code."""
    _setup_logging()
    try:
        rv = cli.main(args=argv, prog_name="degbill", standalone_mode=False)
    except click.exceptions.Exit as exc:
        return exc.exit_code
    except click.ClickException as exc:
        exc.show()
        return EXIT_USAGE if isinstance(exc, click.UsageError) else EXIT_FAIL
    except click.Abort:
        click.echo("aborted", err=True)
        return EXIT_FAIL
    except ConfigError as exc:
        click.echo(f"configuration error: {exc}", err=True)
        return EXIT_USAGE
    except DegbillError as exc:
        click.echo(f"numerical failure ({type(exc).__name__}): {exc}", err=True)
        return EXIT_FAIL
    return rv if isinstance(rv, int) else EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
