"""Command-line front end: ``semithermo bowen|verify|render|staircase|survey``.

Exit codes: 0 success, 1 configuration error, 2 certification failure,
3 numeric failure, 4 theorem-consistency violation.
"""

from __future__ import annotations

import argparse
import datetime as dt
import logging
import math
import os
import sys
import warnings
from pathlib import Path

import numpy as np

from . import __version__
from .config import ConfigError, RunConfig, load_config
from .maps import RootFindingError
from .measures import BernoulliWeights, escape_fractions
from .output import (
    RunManifest,
    hit_counts,
    log_scale,
    pixel_centers,
    quantity,
    to_bytes,
    write_csv,
    write_pgm,
    write_png,
)
from .semigroup import MultiMap, SeedingError, certify_expanding, check_osc, detect_power_form, julia_backward_cloud
from .streams import set_workers
from .thermo import (
    BowenEstimate,
    CriticalBranchError,
    InvalidBasePoint,
    NoSignChange,
    TreeError,
    bowen_parameter,
    build_preimage_tree,
    depth_for,
    equality_verdict,
    log_partition_sum,
    poincare_exponent,
    select_base_point,
    verify_inequality,
)

log = logging.getLogger("semithermo")

EXIT_OK, EXIT_CONFIG, EXIT_CERT, EXIT_NUMERIC, EXIT_CONSISTENCY = 0, 1, 2, 3, 4
NUMERIC_ERRORS = (NoSignChange, TreeError, RootFindingError, SeedingError, InvalidBasePoint, FloatingPointError)


class CommandFailed(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


def _now() -> str:
    return dt.datetime.now(dt.timezone.utc).isoformat(timespec="seconds")


def _pair(z: complex | None):
    return None if z is None else [float(z.real), float(z.imag)]


def _certificate_block(cert) -> dict:
    return {
        "verdict": cert.verdict,
        "estimator": "chordal gap between postcritical set and backward-orbit Julia cloud",
        "distance": cert.distance,
        "witness": _pair(cert.witness),
        "postcritically_bounded": cert.postcritically_bounded,
        "attracting_cycles": [list(c.word) for c in cert.cycles],
        "message": cert.message,
    }


def _build_tree(F: MultiMap, cfg: RunConfig, depth: int):
    """Preimage tree at the configured or automatic base point; auto points are re-drawn on critical hits."""
    if cfg.base_point is not None:
        try:
            return build_preimage_tree(F, cfg.base_point, depth, keep_points=False)
        except CriticalBranchError as exc:
            raise CommandFailed(EXIT_CONFIG, f"base_point: {exc}") from exc
        except InvalidBasePoint as exc:
            raise CommandFailed(EXIT_CONFIG, f"base_point: {exc}") from exc
    tried: list[complex] = []
    while True:
        z = select_base_point(F, exclude=tried)
        try:
            return build_preimage_tree(F, z, depth, keep_points=False)
        except CriticalBranchError as exc:
            log.warning("re-drawing base point: %s", exc)
            tried.append(z)


def _estimate(F: MultiMap, cfg: RunConfig, cert) -> tuple[BowenEstimate, float, object]:
    depth = cfg.depth or depth_for(F, cfg.max_leaves)
    tree = _build_tree(F, cfg, depth)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        est = bowen_parameter(F, tree=tree, tol=cfg.tolerance, certificate=cert)
    t0 = poincare_exponent(F, tree=tree)
    return est, t0, tree


def _bowen_results(F: MultiMap, est: BowenEstimate, t0: float) -> dict:
    depth = est.depths[-1]
    leaves = F.d ** depth
    return {
        "delta_hat": quantity(est.delta_hat, "zero of log Z_n - log Z_(n-1)", est.error, "cauchy_gap+root_tol",
                              depth=depth, leaves=leaves),
        "bracket": list(est.bracket),
        "secant_roots": {str(n): r for n, r in zip(est.depths, est.secant_roots)},
        "pressure_roots": {str(n): r for n, r in zip(est.depths, est.roots)},
        "pressure_root": quantity(est.roots[-1], "zero of P_n = log Z_n / n", est.plain_gap, "cauchy_gap",
                                  depth=depth, leaves=leaves),
        "poincare_exponent": quantity(t0, "fitted growth of truncated Poincare series", abs(t0 - est.delta_hat),
                                      "difference_to_delta_hat", depth=depth, leaves=leaves),
        "base_point": _pair(est.base),
        "delta_above_2": bool(est.delta_hat > 2 + est.error),
    }


def _pressure_table(out: Path, tree, est: BowenEstimate) -> Path:
    n = est.depths[-1]
    top = max(2.0, math.ceil(est.delta_hat + 1))
    ts = np.round(np.arange(0.0, top + 1e-9, 0.05), 10)
    rows = []
    for t in ts:
        a = log_partition_sum(tree.level(n), t)
        b = log_partition_sum(tree.level(n - 1), t)
        rows.append([float(t), a / n, b / (n - 1), a - b])
    cols = ["t", f"P_{n}", f"P_{n - 1}", f"logZ_{n}-logZ_{n - 1}"]
    return write_csv(out / "pressure.csv", cols, rows, "pressure")


def _certify(F: MultiMap, cfg: RunConfig, manifest: RunManifest):
    cert = certify_expanding(F, seed=cfg.seed)
    manifest.results["certificate"] = _certificate_block(cert)
    if cert.verdict == "failed":
        raise CommandFailed(EXIT_CERT, f"expansion certification failed: {cert.message}")
    if cert.verdict != "certified-heuristic":
        log.warning("expansion not certified (%s); continuing", cert.verdict)
    return cert


def cmd_bowen(cfg: RunConfig, out: Path, manifest: RunManifest) -> int:
    F = cfg.semigroup()
    cert = _certify(F, cfg, manifest)
    est, t0, tree = _estimate(F, cfg, cert)
    manifest.results.update(_bowen_results(F, est, t0))
    manifest.files.append(_pressure_table(out, tree, est).name)
    print(f"delta_hat = {est.delta_hat:.9f} +- {est.error:.2e} (depth {est.depths[-1]}), poincare = {t0:.9f}")
    return EXIT_OK


def _pcb_class(F: MultiMap, cert) -> bool:
    return F.is_polynomial and cert.certified and bool(cert.postcritically_bounded)


def cmd_verify(cfg: RunConfig, out: Path, manifest: RunManifest) -> int:
    F = cfg.semigroup()
    cert = _certify(F, cfg, manifest)
    est, t0, _ = _estimate(F, cfg, cert)
    manifest.results.update(_bowen_results(F, est, t0))
    rep = verify_inequality(F, n_samples=cfg.samples, n_words=cfg.words, seed=cfg.seed, estimate=est)
    eps = rep.epsilon
    manifest.results["lyapunov_mc"] = quantity(rep.lyapunov_mc[0], "mean log||f'|| over max-entropy samples",
                                               rep.lyapunov_mc[1], "stderr", samples=rep.samples)
    if rep.lyapunov_green is not None:
        manifest.results["lyapunov_green"] = quantity(rep.lyapunov_green[0], "sum p_j log d_j + mean Omega",
                                                      rep.lyapunov_green[1], "stderr", words=cfg.words)
    manifest.results["lower_bound"] = quantity(rep.bound, f"log d / lyapunov_{rep.lyapunov_used}", eps, "epsilon")
    inconsistent = []
    inequality_block = {
        "inequality": rep.inequality,
        "equality": rep.equality,
        "power_form": rep.power_form,
        "consistent": rep.consistent,
        "notes": rep.notes,
    }
    if not rep.consistent:
        inconsistent.append("main inequality/equality")
    theorems = {"inequality": inequality_block}

    pcb = _pcb_class(F, cert)
    ratio = math.log(F.d) / math.fsum(dj / F.d * math.log(dj) for dj in F.degrees) if F.d > 1 else math.nan
    pf = detect_power_form(F)
    if pcb and F.s > 1:
        hyp = ratio >= 2 - 1e-12 and est.delta_hat <= 2 + eps
        concl = (pf is not None and all(dj == F.s for dj in F.degrees)
                 and equality_verdict(est.delta_hat, 2.0, eps) != "no" and abs(ratio - 2) <= 1e-12)
        theorems["degree_ratio"] = {"ratio": ratio, "hypothesis": bool(hyp), "conclusion": bool(concl),
                             "consistent": bool(not hyp or concl)}
        if hyp and not concl:
            inconsistent.append("degree-ratio statement")
    if pcb and F.s == 2 and F.degrees == (2, 2):
        # three-valued items: None when delta_hat sits in the undetermined band
        item1 = True if est.delta_hat <= 2 + eps else (False if est.delta_hat > 2 + 3 * eps else None)
        item2 = {"yes": True, "no": False, "boundary": None}[equality_verdict(est.delta_hat, 2.0, eps)]
        item3 = pf is not None and pf.d0 == 2 and all(sg == 1 for sg in pf.signs)
        item4b = item3 and abs(abs(pf.coefficients[1] / pf.coefficients[0]) - 1) < 1e-7
        osc = None
        if cfg.osc_region is not None:
            osc = check_osc(F, cfg.osc_region).verdict
        item4 = True if item4b else (None if osc in (None, "inconclusive") else osc in ("osc", "separating-osc"))
        known = {v for v in (item1, item2, item3, item4) if v is not None}
        ok = len(known) <= 1
        theorems["two_quadratics"] = {"item1": item1, "item2": item2, "item3": bool(item3), "item4": item4,
                                      "item4b": bool(item4b), "osc": osc, "consistent": ok}
        if not ok:
            inconsistent.append("two-quadratic equivalence")
    manifest.results["theorems"] = theorems
    print(f"delta_hat = {est.delta_hat:.9f}, bound = {rep.bound:.9f}, eps = {eps:.2e}: "
          f"inequality {rep.inequality}, equality {rep.equality}, power form {rep.power_form}")
    if inconsistent:
        raise CommandFailed(EXIT_CONSISTENCY, "theorem-consistency violation: " + ", ".join(inconsistent))
    return EXIT_OK


def cmd_render(cfg: RunConfig, out: Path, manifest: RunManifest) -> int:
    F = cfg.semigroup()
    cloud = julia_backward_cloud(F, cfg.points, burn_in=cfg.burn_in, seed=cfg.seed)
    counts = hit_counts(cloud, cfg.width, cfg.height, cfg.viewport)
    img = log_scale(counts)
    manifest.files.append(write_pgm(out / "julia.pgm", img).name)
    png = write_png(out / "julia.png", img)
    if png is not None:
        manifest.files.append(png.name)
    lit = float(np.count_nonzero(counts)) / counts.size
    manifest.results["render"] = {
        "points": int(cloud.size),
        "in_viewport": int(counts.sum()),
        "lit_fraction": quantity(lit, "fraction of pixels hit by the backward-orbit cloud", None, None,
                                 points=int(cloud.size)),
    }
    print(f"rendered {cloud.size} points, {100 * lit:.2f}% of pixels lit")
    return EXIT_OK


def cmd_staircase(cfg: RunConfig, out: Path, manifest: RunManifest) -> int:
    F = cfg.semigroup()
    if not F.is_polynomial:
        raise CommandFailed(EXIT_CONFIG, "staircase: generators must be polynomials")
    p = BernoulliWeights(cfg.weights) if cfg.weights else BernoulliWeights.uniform(F.s)
    centres = pixel_centers(cfg.width, cfg.height, cfg.viewport)
    vals = escape_fractions(F, p, centres, cfg.steps, cfg.trials, seed=cfg.seed)
    img = to_bytes(vals)
    manifest.files.append(write_pgm(out / "staircase.pgm", img).name)
    png = write_png(out / "staircase.png", img)
    if png is not None:
        manifest.files.append(png.name)
    n = vals.size
    manifest.results["staircase"] = {
        "weights": list(p.p),
        "escape_radius": F.escape_radius(),
        "white_fraction": float(np.count_nonzero(vals == 1.0)) / n,
        "black_fraction": float(np.count_nonzero(vals == 0.0)) / n,
        "mean_escape": quantity(float(vals.mean()), "mean per-pixel escape fraction", float(np.sqrt(0.25 / cfg.trials)),
                                "max_binomial_stderr_per_pixel", trials=cfg.trials, steps=cfg.steps),
    }
    print(f"staircase {cfg.width}x{cfg.height}: mean escape {vals.mean():.4f}")
    return EXIT_OK


SURVEY_COLUMNS = ["i_re", "i_im", "re", "im", "certificate", "distance", "delta_hat", "delta_error",
                  "poincare", "power_form", "message"]


def survey_rows(cfg: RunConfig) -> list[list]:
    re0, re1, im0, im1 = cfg.survey_grid
    nre, nim = cfg.survey_shape
    rows = []
    for b, im in enumerate(np.linspace(im0, im1, nim)):
        for a, re in enumerate(np.linspace(re0, re1, nre)):
            c = complex(float(re), float(im))
            params = dict(cfg.params)
            params[cfg.survey_param] = c
            F = cfg.semigroup(params)
            cert = certify_expanding(F, seed=cfg.seed)
            row = [a, b, c.real, c.imag, cert.verdict, cert.distance, None, None, None, None, ""]
            if cert.verdict == "failed":
                row[-1] = "not certified"
                rows.append(row)
                continue
            try:
                sub = RunConfig(**{**cfg.__dict__, "params": params})
                est, t0, _ = _estimate(F, sub, cert)
                pf = detect_power_form(F)
                row[6:10] = [est.delta_hat, est.error, t0, pf is not None and pf.equal_degrees]
            except (CommandFailed, *NUMERIC_ERRORS) as exc:
                row[-1] = f"{type(exc).__name__}: {exc}"
            rows.append(row)
    return rows


def cmd_survey(cfg: RunConfig, out: Path, manifest: RunManifest) -> int:
    rows = survey_rows(cfg)
    manifest.files.append(write_csv(out / "survey.csv", SURVEY_COLUMNS, rows, "survey").name)
    nre, nim = cfg.survey_shape
    delta = np.full((nim, nre), np.nan)
    for r in rows:
        if r[6] is not None:
            delta[r[1], r[0]] = r[6]
    good = np.isfinite(delta)
    heat = np.zeros_like(delta)
    if good.any():
        lo, hi = delta[good].min(), delta[good].max()
        heat[good] = (delta[good] - lo) / (hi - lo) if hi > lo else 0.5
    img = to_bytes(heat[::-1])  # top row is the largest imaginary part
    manifest.files.append(write_pgm(out / "survey.pgm", img).name)
    manifest.results["survey"] = {
        "points": len(rows),
        "estimated": int(good.sum()),
        "delta_range": [float(delta[good].min()), float(delta[good].max())] if good.any() else None,
        "estimator": "zero of log Z_n - log Z_(n-1); error = cauchy gap + root tolerance",
    }
    print(f"survey: {int(good.sum())}/{len(rows)} grid points estimated")
    return EXIT_OK


COMMANDS = {
    "bowen": cmd_bowen,
    "verify": cmd_verify,
    "render": cmd_render,
    "staircase": cmd_staircase,
    "survey": cmd_survey,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="semithermo", description="Pressure, Bowen parameter and Julia-set "
                                     "tools for finitely generated rational semigroups.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, help="INI-style run configuration")
    common.add_argument("--seed", type=int, help="override the configured seed")
    common.add_argument("--workers", type=int, default=os.cpu_count() or 1, help="worker threads (default: cores)")
    common.add_argument("--out", help="output directory (default from config, else ./out)")
    common.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn in COMMANDS.items():
        sub.add_parser(name, parents=[common], help=fn.__doc__ or name)
    return parser


def run(command: str, cfg: RunConfig, out: Path, workers: int = 1) -> tuple[int, RunManifest]:
    """Execute one subcommand and write its manifest; returns (exit code, manifest)."""
    set_workers(workers)
    out.mkdir(parents=True, exist_ok=True)
    manifest = RunManifest(command, __version__, cfg.echo())
    manifest.timestamps["started"] = _now()
    try:
        code = COMMANDS[command](cfg, out, manifest)
        manifest.status = {"exit_code": code, "message": "ok"}
    except CommandFailed as exc:
        code = exc.code
        manifest.status = {"exit_code": code, "message": str(exc)}
    except NUMERIC_ERRORS as exc:
        code = EXIT_NUMERIC
        manifest.status = {"exit_code": code, "message": f"{type(exc).__name__}: {exc}"}
    except ConfigError as exc:
        code = EXIT_CONFIG
        manifest.status = {"exit_code": code, "message": str(exc)}
    manifest.timestamps["finished"] = _now()
    manifest.files.append("manifest.json")
    manifest.write(out)
    if code:
        print(f"semithermo {command}: {manifest.status['message']}", file=sys.stderr)
    return code, manifest


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = load_config(args.config, args.command)
    except ConfigError as exc:
        print(f"semithermo {args.command}: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if args.seed is not None:
        cfg.seed = args.seed
    out = Path(args.out or cfg.out)
    code, _ = run(args.command, cfg, out, args.workers)
    return code


if __name__ == "__main__":
    sys.exit(main())
