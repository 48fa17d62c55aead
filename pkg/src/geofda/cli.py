"""Command-line front end.

Commands: ``simulate``, ``smooth``, ``variogram``, ``krige``, ``surface``,
``far`` and ``forecast``. Configuration is a JSON document checked against
the schemas below before any computation; unknown keys are rejected.

Exit codes: 0 success, 2 invalid input or configuration, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import jsonschema
import numpy as np

from . import io
from .basis import BasisSystem, gcv_select, smooth_coefficients
from .dataset import SpatialFunctionalDataset
from .errors import NumericalError, ValidationError
from .far import SurfaceTimeSeries, estimate_psi
from .kriging import OrdinaryKriging
from .moments import DriftSpec, iterative_gls_drift
from .sim import FARSpec, SFDSpec, make_rng, sample_curves, simulate_far1, simulate_sfd
from .spatial import LocationSet, bin_pairs
from .surface import Surface, basis_from_descriptor, gcv_surface, raster, smooth_coefficients as smooth_surface_coefficients
from .tracevar import FAMILIES, WEIGHTINGS, VariogramModel, empirical_trace_variogram, fit_all

log = logging.getLogger("geofda")

DEFAULT_LAMBDA_GRID = [10.0**e for e in range(-8, 1)]
DEFAULT_SURFACE_BASIS = {"kind": "tensor_spline", "K1": 8, "K2": 8}

_num = {"type": "number"}
_pos = {"type": "number", "exclusiveMinimum": 0}
_posint = {"type": "integer", "minimum": 1}
_lambda_grid = {"type": "array", "items": {"type": "number", "minimum": 0}, "minItems": 1}
_bounds = {"type": "array", "items": _num, "minItems": 4, "maxItems": 4}


def _obj(props: dict, required=()) -> dict:
    return {"type": "object", "properties": props, "required": list(required), "additionalProperties": False}


CURVE_BASIS = _obj(
    {"kind": {"enum": ["bspline", "fourier"]}, "K": _posint, "order": {"type": "integer", "minimum": 2}},
    ["kind", "K"],
)
SURFACE_BASIS = {
    "oneOf": [
        _obj(
            {"kind": {"const": "fem_p1"}, "nx": {"type": "integer", "minimum": 2},
             "ny": {"type": "integer", "minimum": 2}, "bounds": _bounds},
            ["kind", "nx", "ny"],
        ),
        _obj(
            {"kind": {"const": "tensor_spline"}, "K1": {"type": "integer", "minimum": 4},
             "K2": {"type": "integer", "minimum": 4}, "bounds": _bounds,
             "weights": {"type": "array", "items": _pos, "minItems": 2, "maxItems": 2}},
            ["kind", "K1", "K2"],
        ),
    ]
}
MODEL = _obj(
    {"family": {"enum": list(FAMILIES)}, "nugget": {"type": "number", "minimum": 0},
     "partial_sill": {"type": "number", "minimum": 0}, "range": _pos, "smoothness": _pos},
    ["family", "nugget", "partial_sill", "range"],
)
DRIFT_TERMS = {"type": "array", "items": {"enum": ["1", "s1", "s2", "s1*s2", "s1^2", "s2^2"]}, "minItems": 1}

SCHEMAS = {
    "simulate": {
        "oneOf": [
            _obj(
                {
                    "kind": {"const": "curves"},
                    "seed": {"type": "integer", "minimum": 0},
                    "grid": _obj(
                        {"nx": _posint, "ny": _posint, "spacing": _pos,
                         "origin": {"type": "array", "items": _num, "minItems": 2, "maxItems": 2}},
                        ["nx", "ny", "spacing"],
                    ),
                    "basis": CURVE_BASIS,
                    "model": MODEL,
                    "drift": _obj(
                        {"terms": DRIFT_TERMS,
                         "B0": {"type": "array", "items": {"type": "array", "items": _num}}},
                        ["terms", "B0"],
                    ),
                    "samples": _obj(
                        {"n": {"type": "integer", "minimum": 2}, "noise_sd": {"type": "number", "minimum": 0},
                         "v_range": {"type": "array", "items": _num, "minItems": 2, "maxItems": 2}},
                        ["n"],
                    ),
                },
                ["kind", "seed", "grid", "basis", "model", "samples"],
            ),
            _obj(
                {
                    "kind": {"const": "surfaces"},
                    "seed": {"type": "integer", "minimum": 0},
                    "T": _posint,
                    "basis": SURFACE_BASIS,
                    "psi": {"oneOf": [_num, {"type": "array", "items": _num, "minItems": 1}]},
                    "burn_in": {"type": "integer", "minimum": 0},
                    "points": _obj(
                        {"nx": {"type": "integer", "minimum": 2}, "ny": {"type": "integer", "minimum": 2},
                         "noise_sd": {"type": "number", "minimum": 0}},
                        ["nx", "ny"],
                    ),
                },
                ["kind", "seed", "T", "basis", "points"],
            ),
        ]
    },
    "smooth": _obj(
        {"basis": CURVE_BASIS, "lambda_grid": _lambda_grid,
         "v_range": {"type": "array", "items": _num, "minItems": 2, "maxItems": 2}},
        ["basis"],
    ),
    "variogram": _obj(
        {"bins": _posint, "max_fraction": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
         "families": {"type": "array", "items": {"enum": list(FAMILIES)}, "minItems": 1, "uniqueItems": True},
         "weighting": {"enum": list(WEIGHTINGS)}, "smoothness": _pos,
         "seed": {"type": "integer", "minimum": 0}},
    ),
    "krige": _obj(
        {
            "drift": _obj(
                {"terms": DRIFT_TERMS, "family": {"enum": list(FAMILIES)}, "max_iter": _posint, "tol": _pos,
                 "bins": _posint, "max_fraction": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
                 "weighting": {"enum": list(WEIGHTINGS)}},
                ["terms"],
            ),
            "curve_points": {"type": "integer", "minimum": 2},
        },
    ),
    "surface": _obj(
        {"basis": SURFACE_BASIS, "lambda_grid": _lambda_grid,
         "raster": _obj({"nx": {"type": "integer", "minimum": 2}, "ny": {"type": "integer", "minimum": 2}}, ["nx", "ny"])},
    ),
    "far": _obj(
        {"mode": {"enum": ["truncation", "ridge"]}, "k": _posint, "alpha": _pos,
         "lag0": {"enum": ["matched", "full"]}},
    ),
}


def load_config(path, command: str) -> dict:
    """Read and validate a JSON config; ``None`` gives an empty config."""
    cfg = {} if path is None else io.read_json(path)
    try:
        jsonschema.validate(cfg, SCHEMAS[command])
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ValidationError(f"{path}: invalid {command} config at {where}: {exc.message}") from None
    return cfg


# --- simulate ----------------------------------------------------------------


def cmd_simulate(args) -> None:
    spec = load_config(args.spec, "simulate")
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if spec["kind"] == "curves":
        _simulate_curves(spec, out)
    else:
        _simulate_surfaces(spec, out)


def _simulate_curves(spec: dict, out: Path) -> None:
    g = spec["grid"]
    locs = LocationSet.grid(g["nx"], g["ny"], g["spacing"], tuple(g.get("origin", (0.0, 0.0))))
    basis = BasisSystem.from_descriptor(spec["basis"])
    model = VariogramModel.from_dict(spec["model"])
    drift = DriftSpec()
    B0 = None
    if "drift" in spec:
        drift = DriftSpec(tuple(spec["drift"]["terms"]))
        B0 = np.asarray(spec["drift"]["B0"], dtype=float)
    sfd = SFDSpec(spec["seed"], locs, basis, (model,), drift, B0)
    ds, truth = simulate_sfd(sfd)
    smp = spec["samples"]
    a, b = smp.get("v_range", (0.0, 1.0))
    if not b > a:
        raise ValidationError("samples.v_range must be increasing")
    u = np.linspace(0.0, 1.0, smp["n"])
    Y = sample_curves(ds, u, smp.get("noise_sd", 0.0), spec["seed"] + 1)
    v = a + (b - a) * u
    ids = [f"S{i + 1:04d}" for i in range(ds.n)]
    rows = ((ids[i], *ds.locs.points[i], v[j], Y[i, j]) for i in range(ds.n) for j in range(v.size))
    io.write_csv(out / "samples.csv", ["site_id", "s1", "s2", "v", "value"], rows)
    io.write_dataset(out / "dataset.csv", ds, ids, (a, b))
    truth["v_range"] = [float(a), float(b)]
    io.write_json(out / "truth.json", truth)
    log.info("simulated %d sites x %d samples", ds.n, v.size)


def _simulate_surfaces(spec: dict, out: Path) -> None:
    basis = basis_from_descriptor(spec["basis"])
    far_spec = FARSpec(spec["seed"], basis, spec["T"], spec.get("psi", 0.5), burn_in=spec.get("burn_in", 200))
    sts, truth = simulate_far1(far_spec)
    p = spec["points"]
    x0, x1, y0, y1 = basis.bounds
    X, Y = np.meshgrid(np.linspace(x0, x1, p["nx"]), np.linspace(y0, y1, p["ny"]), indexing="xy")
    pts = np.column_stack([X.ravel(), Y.ravel()])
    vals = sts.coeffs @ basis.design(pts).T
    sd = p.get("noise_sd", 0.0)
    if sd > 0:
        vals = vals + sd * make_rng(spec["seed"] + 1).standard_normal(vals.shape)
    times = np.arange(sts.T, dtype=float)
    rows = ((times[t], *pts[i], vals[t, i]) for t in range(sts.T) for i in range(pts.shape[0]))
    io.write_csv(out / "points.csv", ["t", "s1", "s2", "value"], rows)
    io.write_surfaces(out / "truth_surfaces.csv", sts, times)
    io.write_json(out / "truth.json", truth)
    log.info("simulated %d surfaces observed at %d points", sts.T, pts.shape[0])


# --- smooth ------------------------------------------------------------------


def cmd_smooth(args) -> None:
    cfg = load_config(args.config, "smooth")
    basis = BasisSystem.from_descriptor(cfg["basis"])
    grid = cfg.get("lambda_grid", DEFAULT_LAMBDA_GRID)
    _, rows = io.read_csv(args.input, ["site_id", "s1", "s2", "v", "value"], text=["site_id"])
    if not rows:
        raise ValidationError(f"{args.input}: no data rows")
    sites: dict[str, dict] = {}
    for line, r in rows:
        site = sites.setdefault(r["site_id"], {"loc": (r["s1"], r["s2"]), "line": line, "v": [], "y": []})
        if site["loc"] != (r["s1"], r["s2"]):
            raise ValidationError(
                f"{args.input}:{line}: site {r['site_id']!r} changes location (first seen on line {site['line']})"
            )
        site["v"].append(r["v"])
        site["y"].append(r["value"])
    all_v = np.array([r["v"] for _, r in rows])
    a, b = cfg.get("v_range", (float(all_v.min()), float(all_v.max())))
    if not b > a:
        raise ValidationError("v_range must be increasing (need at least two distinct v values)")
    groups = []
    for sid, site in sites.items():
        v = (np.array(site["v"]) - a) / (b - a)
        if np.unique(v).size < 2:
            raise ValidationError(f"site {sid!r} has fewer than 2 distinct samples")
        if 0.0 in grid and np.unique(v).size < basis.K:
            raise ValidationError(f"site {sid!r}: lambda=0 needs at least K={basis.K} distinct samples")
        groups.append(np.column_stack([v, site["y"]]))
    lam, scores = gcv_select(groups, basis, grid)
    Z = np.empty((len(groups), basis.K))
    sse = np.empty(len(groups))
    for i, g in enumerate(groups):
        Z[i] = smooth_coefficients(g[:, 0], g[:, 1], basis, lam)
        sse[i] = float(np.sum((basis.evaluate(g[:, 0]) @ Z[i] - g[:, 1]) ** 2))
    ids = list(sites)
    locs = LocationSet(np.array([sites[s]["loc"] for s in ids]))
    ds = SpatialFunctionalDataset(locs, basis, Z)
    io.write_dataset(args.output, ds, ids, (a, b))
    if args.report:
        io.write_csv(args.report, ["site_id", "lambda", "sse"], ((s, lam, e) for s, e in zip(ids, sse)))
    print(f"lambda={lam!r} sites={len(ids)} total_sse={float(sse.sum())!r}")


# --- variogram ---------------------------------------------------------------


def cmd_variogram(args) -> None:
    cfg = load_config(args.config, "variogram")
    ds, _, _ = io.read_dataset(args.dataset)
    bins = bin_pairs(ds.distances, cfg.get("bins", 15), cfg.get("max_fraction", 0.5))
    emp = empirical_trace_variogram(ds, bins)
    if len(emp) < 4:
        raise ValidationError(f"only {len(emp)} nonempty distance bins; fitting needs at least 4")
    weighting = cfg.get("weighting", "counts")
    fits = fit_all(
        emp,
        tuple(cfg.get("families", FAMILIES)),
        weighting,
        cfg.get("smoothness", 1.5),
        cfg.get("seed", 0),
    )
    io.write_csv(args.empirical, ["h", "gamma", "count"], zip(emp.centers, emp.values, emp.counts))
    io.write_json(
        args.models,
        {
            "weighting": weighting,
            "models": [{"rank": r + 1, "sse": sse, "model": m.as_dict()} for r, (m, sse) in enumerate(fits)],
        },
    )
    best, sse = fits[0]
    print(f"best={best.family} sse={sse!r}")


# --- krige -------------------------------------------------------------------


def _load_model(path) -> VariogramModel:
    d = io.read_json(path)
    if "models" in d:
        if not d["models"]:
            raise ValidationError(f"{path}: no models listed")
        d = min(d["models"], key=lambda e: e["rank"])["model"]
    try:
        return VariogramModel.from_dict(d)
    except (KeyError, TypeError) as exc:
        raise ValidationError(f"{path}: invalid variogram model") from exc


def cmd_krige(args) -> None:
    cfg = load_config(args.config, "krige")
    ds, ids, (a, b) = io.read_dataset(args.dataset)
    _, trows = io.read_csv(args.targets, ["s1", "s2"])
    if not trows:
        raise ValidationError(f"{args.targets}: no targets")
    targets = np.array([[r["s1"], r["s2"]] for _, r in trows])
    trend = np.zeros((targets.shape[0], ds.basis.K))
    if "drift" in cfg:
        dcfg = cfg["drift"]
        result = iterative_gls_drift(
            ds,
            DriftSpec(tuple(dcfg["terms"])),
            dcfg.get("family", "exponential"),
            max_iter=dcfg.get("max_iter", 10),
            tol=dcfg.get("tol", 1e-4),
            n_bins=dcfg.get("bins", 15),
            max_fraction=dcfg.get("max_fraction", 0.5),
            weighting=dcfg.get("weighting", "counts"),
        )
        model = result.model
        trend = result.drift.evaluate(targets)
        work = ds.with_coefficients(ds.Z - result.drift.evaluate(ds.locs.points))
        log.info("drift fitted in %d iterations (%s)", result.iterations, result.status)
    else:
        if args.model is None:
            raise ValidationError("ordinary kriging needs --model")
        model = _load_model(args.model)
        work = ds
    sols = OrdinaryKriging(work, model).solve(targets)
    K = ds.basis.K
    coeffs = [trend[t] + s.prediction.coeffs for t, s in enumerate(sols)]
    io.write_csv(
        args.output,
        ["s1", "s2"] + [f"z{k}" for k in range(1, K + 1)] + ["trace_variance", "weight_sum"],
        ([*s.target, *c, s.trace_variance, float(np.sum(s.weights))] for s, c in zip(sols, coeffs)),
    )
    if args.weights:
        io.write_csv(
            args.weights,
            ["target", "site_id", "weight"],
            ((t + 1, sid, w) for t, s in enumerate(sols) for sid, w in zip(ids, s.weights)),
        )
    if args.curves:
        u = np.linspace(0.0, 1.0, cfg.get("curve_points", 101))
        E = ds.basis.evaluate(u)
        v = a + (b - a) * u
        io.write_csv(
            args.curves,
            ["target", "v", "value"],
            ((t + 1, v[j], val) for t, c in enumerate(coeffs) for j, val in enumerate(E @ c)),
        )
    print(f"targets={len(sols)} model={model.family}")


# --- surfaces ----------------------------------------------------------------


def cmd_surface(args) -> None:
    cfg = load_config(args.config, "surface")
    _, rows = io.read_csv(args.input, ["t", "s1", "s2", "value"])
    if not rows:
        raise ValidationError(f"{args.input}: no data rows")
    slices: dict[float, dict] = {}
    for line, r in rows:
        key = (r["s1"], r["s2"])
        sl = slices.setdefault(r["t"], {})
        if key in sl:
            raise ValidationError(f"{args.input}:{line}: duplicate point {key} at t={r['t']!r}")
        sl[key] = r["value"]
    times = sorted(slices)
    support = sorted(slices[times[0]])
    for t in times[1:]:
        if sorted(slices[t]) != support:
            raise ValidationError(f"inconsistent spatial support: slice t={t!r} differs from t={times[0]!r}")
    S = np.array(support)
    Y = np.array([[slices[t][p] for t in times] for p in support])
    desc = dict(cfg.get("basis", DEFAULT_SURFACE_BASIS))
    if "bounds" not in desc:
        desc["bounds"] = [float(S[:, 0].min()), float(S[:, 0].max()), float(S[:, 1].min()), float(S[:, 1].max())]
    basis = basis_from_descriptor(desc)
    lam, _ = gcv_surface(S, basis, cfg.get("lambda_grid", DEFAULT_LAMBDA_GRID), y=Y)
    B = smooth_surface_coefficients(S, Y, basis, lam).T
    sts = SurfaceTimeSeries(basis, B)
    io.write_surfaces(args.output, sts, times)
    if args.raster:
        r = cfg.get("raster", {"nx": 25, "ny": 25})
        out = (
            (t, *row)
            for t, beta in zip(times, B)
            for row in raster(Surface(basis, beta), r["nx"], r["ny"])
        )
        io.write_csv(args.raster, ["t", "s1", "s2", "value"], out)
    print(f"lambda={lam!r} T={len(times)} M={basis.M}")


def cmd_far(args) -> None:
    cfg = load_config(args.config, "far")
    sts, _ = io.read_surfaces(args.surfaces)
    mode = cfg.get("mode", "truncation")
    if mode == "ridge" and "alpha" not in cfg:
        raise ValidationError("ridge mode needs 'alpha'")
    if mode == "truncation" and "alpha" in cfg:
        raise ValidationError("'alpha' only applies to ridge mode")
    param = cfg.get("alpha") if mode == "ridge" else cfg.get("k")
    far = estimate_psi(sts, mode, param, cfg.get("lag0", "matched"))
    record = {
        "basis": sts.basis.descriptor(),
        "mode": mode,
        "lag0": cfg.get("lag0", "matched"),
        "eigenvalues": far.eigenvalues.tolist(),
        "mean": far.mean.tolist(),
        "M": int(far.Psi.shape[0]),
        "Psi": far.Psi.ravel().tolist(),
    }
    record["k" if mode == "truncation" else "alpha"] = far.k if mode == "truncation" else far.param
    io.write_json(args.output, record)
    print(f"mode={mode} param={far.param!r} T={sts.T}")


def cmd_forecast(args) -> None:
    sts, times = io.read_surfaces(args.surfaces)
    op = io.read_json(args.operator)
    try:
        basis = basis_from_descriptor(op["basis"])
        M = int(op["M"])
        Psi = np.asarray(op["Psi"], dtype=float).reshape(M, M)
    except (KeyError, TypeError, ValueError) as exc:
        raise ValidationError(f"{args.operator}: invalid operator file") from exc
    if basis != sts.basis:
        raise ValidationError("operator and surfaces use different bases")
    mean = sts.coeffs.mean(axis=0)
    beta = mean + Psi @ (sts.coeffs[-1] - mean)
    step = times[-1] - times[-2] if len(times) > 1 else 1.0
    t_next = times[-1] + step
    io.write_surfaces(args.output, SurfaceTimeSeries(basis, beta[None, :]), [t_next])
    if args.raster:
        grid = raster(Surface(basis, beta), args.nx, args.ny)
        io.write_csv(args.raster, ["t", "s1", "s2", "value"], ((t_next, *row) for row in grid))
    print(f"forecast t={t_next!r}")


# --- entry point ---------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="geofda", description=__doc__.split("\n")[0])
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="simulate curves on a grid or an FAR(1) surface series")
    s.add_argument("--spec", required=True, help="JSON simulation spec")
    s.add_argument("--out-dir", required=True, help="directory for samples/points, dataset and truth files")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("smooth", help="smooth site curves (site_id,s1,s2,v,value) into a dataset")
    s.add_argument("--input", required=True)
    s.add_argument("--config", required=True, help="JSON with basis, optional lambda_grid and v_range")
    s.add_argument("--output", required=True, help="dataset CSV (a .json sidecar is written next to it)")
    s.add_argument("--report", help="optional CSV of per-site lambda and SSE")
    s.set_defaults(func=cmd_smooth)

    s = sub.add_parser("variogram", help="empirical trace-variogram and ranked model fits")
    s.add_argument("--dataset", required=True)
    s.add_argument("--config", help="JSON with bins, max_fraction, families, weighting, smoothness, seed")
    s.add_argument("--empirical", required=True, help="output CSV h,gamma,count")
    s.add_argument("--models", required=True, help="output JSON of models ranked by SSE")
    s.set_defaults(func=cmd_variogram)

    s = sub.add_parser("krige", help="ordinary or universal kriging at target locations")
    s.add_argument("--dataset", required=True)
    s.add_argument("--model", help="variogram JSON (a ranked model file or a single model)")
    s.add_argument("--targets", required=True, help="CSV with columns s1,s2")
    s.add_argument("--config", help="JSON with optional drift block (universal kriging) and curve_points")
    s.add_argument("--output", required=True)
    s.add_argument("--weights", help="optional CSV of kriging weights")
    s.add_argument("--curves", help="optional CSV of predicted curves on a dense grid")
    s.set_defaults(func=cmd_krige)

    s = sub.add_parser("surface", help="smooth time slices (t,s1,s2,value) into surfaces")
    s.add_argument("--input", required=True)
    s.add_argument("--config", help="JSON with optional basis (default 8x8 tensor spline), lambda_grid and raster")
    s.add_argument("--output", required=True, help="surface CSV t,b1..bM (.json sidecar holds the basis)")
    s.add_argument("--raster", help="optional CSV t,s1,s2,value on the raster grid")
    s.set_defaults(func=cmd_surface)

    s = sub.add_parser("far", help="estimate the FAR(1) operator of a surface series")
    s.add_argument("--surfaces", required=True)
    s.add_argument("--config", help="JSON with mode, k or alpha, lag0")
    s.add_argument("--output", required=True, help="operator JSON")
    s.set_defaults(func=cmd_far)

    s = sub.add_parser("forecast", help="one-step-ahead surface forecast")
    s.add_argument("--surfaces", required=True)
    s.add_argument("--operator", required=True)
    s.add_argument("--output", required=True, help="forecast surface CSV")
    s.add_argument("--raster", help="optional raster CSV of the forecast")
    s.add_argument("--nx", type=int, default=25)
    s.add_argument("--ny", type=int, default=25)
    s.set_defaults(func=cmd_forecast)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s: %(message)s")
    try:
        args.func(args)
    except (ValidationError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (NumericalError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
