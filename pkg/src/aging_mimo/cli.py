"""Command-line front end: scenario parsing, experiment runs, CSV and manifest output.

Scenario files are YAML documents validated against the bundled
``scenario.schema.json``. Physical units are converted once here:
``gain_db`` becomes the amplitude ``10 ** (gain_db / 20)``, Doppler in Hz
becomes cycles per slot through ``symbol_period_s``, and ray velocities
become wavelengths per slot through ``carrier_hz``.

Randomness
----------
Every experiment draws from one master seed. Monte-Carlo trials are cut
into fixed-size chunks whose generators come from
``numpy.random.SeedSequence(seed).spawn``; an ``n_rx`` sweep point ``i``
uses ``SeedSequence([seed, i])``. The worker count never changes which
numbers a trial sees, so outputs are byte-identical across ``--threads``.

Exit status: 0 success, 2 scenario or argument error, 3 numerical
failure, 4 I/O failure. On failure a JSON error record is printed to
stderr and, when possible, written to ``<out>/error.json``.
"""

from __future__ import annotations

import argparse
import copy
import csv
import hashlib
import io
import json
import logging
import math
import os
import sys
from dataclasses import dataclass
from datetime import datetime, timezone
from importlib import resources
from pathlib import Path
from typing import Callable

import jsonschema
import numpy as np
import yaml

from . import __version__, selftest
from .bounds import all_bounds, mc_expected_se
from .channel import (AngularSpectrum, ArrayGeometry, KroneckerStats, MobilityModel, RayStats,
                      uniform_correlation)
from .detequiv import DetEquivConfig, assign_beamformers, slot_se
from .errors import AgingMimoError, NumericalError, ScenarioError
from .estimation import estimator_matrices, estimate_covariance, simulate_estimates
from .frame import PowerBudget, UserConfig, pilot_matrices, split_powers
from .optimizer import OptimizerConfig, opt_resource
from .scenario import Scenario

log = logging.getLogger("aging_mimo")

SPEED_OF_LIGHT = 299_792_458.0
EXIT_OK, EXIT_PARSE, EXIT_NUMERICAL, EXIT_IO = 0, 2, 3, 4
SUBCOMMANDS = ("correlate", "estimate", "se-det", "se-mc", "bounds", "optimize", "selftest")


# ---------------------------------------------------------------------------
# Scenario files
# ---------------------------------------------------------------------------

def load_schema() -> dict:
    text = resources.files("aging_mimo").joinpath("scenario.schema.json").read_text("utf-8")
    return json.loads(text)


def _resolve(schema: dict, root: dict) -> dict:
    while "$ref" in schema:
        node = root
        for part in schema["$ref"].lstrip("#/").split("/"):
            node = node[part]
        schema = node
    return schema


def _apply_defaults(instance, schema: dict, root: dict):
    """Fill in ``default`` values of the schema, recursing into present members."""
    schema = _resolve(schema, root)
    if "if" in schema and isinstance(instance, dict):
        try:
            jsonschema.validate(instance, {**_resolve(schema["if"], root), "$defs": root["$defs"]})
            branch = schema.get("then")
        except jsonschema.ValidationError:
            branch = schema.get("else")
        if branch is not None:
            _apply_defaults(instance, branch, root)
    if isinstance(instance, dict):
        for key, sub in schema.get("properties", {}).items():
            sub_r = _resolve(sub, root)
            default = sub.get("default", sub_r.get("default"))
            if key not in instance and default is not None:
                instance[key] = copy.deepcopy(default)
            if key in instance:
                _apply_defaults(instance[key], sub, root)
    elif isinstance(instance, list) and "items" in schema:
        for item in instance:
            _apply_defaults(item, schema["items"], root)
    return instance


def _node_line(node, path) -> int | None:
    """1-based line of the YAML node addressed by a JSON path."""
    for key in path:
        if isinstance(node, yaml.MappingNode):
            nxt = None
            for k, v in node.value:
                if k.value == key:
                    nxt = v
                    break
            if nxt is None:
                break
            node = nxt
        elif isinstance(node, yaml.SequenceNode) and isinstance(key, int) and key < len(node.value):
            node = node.value[key]
        else:
            break
    return None if node is None else node.start_mark.line + 1


def _describe(err: jsonschema.ValidationError) -> str:
    if err.validator == "additionalProperties":
        extra = sorted(set(err.instance) - set(err.schema.get("properties", {})))
        return f"unknown key(s): {', '.join(map(repr, extra))}"
    return err.message


def load_document(path: str | os.PathLike) -> dict:
    """Read, validate and default-fill a scenario document."""
    path = Path(path)
    text = path.read_text("utf-8")
    try:
        tree = yaml.compose(text)
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ScenarioError(f"{path}: invalid YAML: {exc}") from exc
    if not isinstance(doc, dict):
        raise ScenarioError(f"{path}: a scenario must be a mapping")
    schema = load_schema()
    validator = jsonschema.Draft202012Validator(schema)
    errors = sorted(validator.iter_errors(doc), key=lambda e: list(e.absolute_path))
    if errors:
        lines = []
        for e in errors:
            where = "/".join(str(p) for p in e.absolute_path) or "<root>"
            line = _node_line(tree, list(e.absolute_path))
            lines.append(f"{path}:{line}: at '{where}': {_describe(e)}")
        raise ScenarioError("\n".join(lines))
    return _apply_defaults(doc, schema, schema)


def _profile(value, scale: float):
    """Constant or per-slot profile scaled into slot units."""
    if isinstance(value, list):
        vals = [float(v) * scale for v in value]

        def at(t, vals=vals):
            i = min(max(int(math.floor(t)) - 1, 0), len(vals) - 1)
            return vals[i]
        return at
    return float(value) * scale


def _spectrum(spec: dict) -> AngularSpectrum:
    if spec["kind"] == "uniform":
        return AngularSpectrum.uniform()
    return AngularSpectrum.von_mises(spec["center_rad"], spec["concentration"])


def _user_stats(doc: dict, user: dict, n_rx: int):
    ch = user["channel"]
    ts = doc["symbol_period_s"]
    n_tx = user["n_tx"]
    if ch["model"] == "kronecker":
        return KroneckerStats(uniform_correlation(n_tx, ch["tx_correlation"]),
                              uniform_correlation(n_rx, ch["rx_correlation"]),
                              _profile(ch["doppler_hz"], ts), ch["variance"])
    arr = doc["array"]
    geometry = ArrayGeometry(n_tx, n_rx, user["d_tx_wavelengths"], arr["d_rx_wavelengths"],
                             arr["orientation_rad"])
    wavelength = SPEED_OF_LIGHT / ch["carrier_hz"]
    mobility = MobilityModel(velocity=_profile(ch["velocity_mps"], ts), heading=ch["heading_rad"],
                             scatterers=ch["scatterers"], aoa_spectrum=_spectrum(ch["aoa"]),
                             aod_spectrum=_spectrum(ch["aod"]), carrier_wavelength=wavelength)
    return RayStats(geometry, mobility, ch["mode"], ch["method"])


def build_scenario(doc: dict, n_rx: int | None = None) -> Scenario:
    """Scenario object from a validated document, optionally with another ``n_rx``."""
    n_rx = doc["array"]["n_rx"] if n_rx is None else int(n_rx)
    users = []
    try:
        for u in doc["users"]:
            gain = 10 ** (u["gain_db"] / 20) if "gain_db" in u else u["gain_linear"]
            budget = PowerBudget(u["pilot_max"], u["data_max"], u.get("total_power"))
            users.append(UserConfig(gain, budget, _user_stats(doc, u, n_rx), u["pilot_noise_var"],
                                    u["data_noise_var"], u["beamformer"]))
        return Scenario(tuple(users), doc["pilot_length"], DetEquivConfig(**doc["detequiv"]),
                        doc["name"])
    except ValueError as exc:
        if isinstance(exc, AgingMimoError):
            raise
        raise ScenarioError(str(exc)) from exc


def parse_scenario(path: str | os.PathLike) -> Scenario:
    """Validated :class:`Scenario` from a YAML file."""
    return build_scenario(load_document(path))


def optimizer_config(doc: dict, threads: int = 1) -> OptimizerConfig:
    return OptimizerConfig(q_max=doc["frame"]["q_max"], m_max=doc["frame"]["m_max"],
                           threads=threads, **doc["optimizer"])


# ---------------------------------------------------------------------------
# Output
# ---------------------------------------------------------------------------

def fmt(value) -> str:
    """Locale-independent text with 17 significant digits for floats."""
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return format(float(value), ".17g")
    return str(value)


def csv_bytes(header, rows) -> bytes:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([fmt(v) for v in r])
    return buf.getvalue().encode("utf-8")


@dataclass
class RunContext:
    doc: dict
    scenario: Scenario
    seed: int
    trials: int
    threads: int
    out: Path

    def plan(self):
        return self.scenario.plan(self.doc["analysis"]["plan"])

    def slots(self, plan):
        chosen = self.doc["analysis"].get("slots")
        if chosen is None:
            return plan.data_slots
        bad = [t for t in chosen if t not in plan.data_slots]
        if bad:
            raise ScenarioError(f"analysis.slots {bad} are not data slots of plan {list(plan.sizes)}")
        return list(chosen)

    def sweep(self):
        grid = self.doc["analysis"].get("n_rx_sweep") or [self.doc["array"]["n_rx"]]
        for i, n_rx in enumerate(grid):
            yield i, n_rx, build_scenario(self.doc, n_rx)

    def sweep_seed(self, i: int) -> int:
        return int(np.random.SeedSequence([self.seed, i]).generate_state(1, np.uint64)[0])


def _slot_with_beamformers(scenario: Scenario, plan, t):
    return assign_beamformers(scenario.slot(plan, t), scenario.detequiv)


def run_correlate(ctx: RunContext):
    c = ctx.doc["analysis"]["correlate"]
    k = c["user"]
    if k >= len(ctx.scenario.users):
        raise ScenarioError(f"analysis.correlate.user {k} does not exist")
    stats = ctx.scenario.users[k].stats
    t1 = c["t1_slots"]
    rows = []
    for lag in c["lags_slots"]:
        t2 = t1 + lag
        p = stats.corr(t1, t2)
        for (i, j), v in np.ndenumerate(p):
            rows.append((float(t1), float(t2), i, j, v.real, v.imag))
    return {"correlate.csv": csv_bytes(("t1", "t2", "row", "col", "re", "im"), rows)}


def run_estimate(ctx: RunContext):
    sc = ctx.scenario
    plan = ctx.plan()
    u = sc.tagged
    p_p, _ = split_powers(u.budget, plan)
    pilot = pilot_matrices(len(sc.users), max(v.n_tx for v in sc.users), sc.pilot_len)[0][:, :u.n_tx]
    rows = []
    for i, t in enumerate(ctx.slots(plan)):
        mats = estimator_matrices(u.stats, plan, t, u.gain, p_p, u.pilot_noise_var)
        est = estimate_covariance(mats)
        seed = np.random.SeedSequence([ctx.seed, i])
        h, h_hat = simulate_estimates(u.stats, plan, t, u.gain, p_p, u.pilot_noise_var, pilot,
                                      ctx.trials, np.random.default_rng(seed))
        err = np.sum(np.abs(h - h_hat) ** 2, axis=1)
        rows.append((t, plan.frame_of(t), np.trace(est.cov_est).real, np.trace(est.cov_err).real,
                     float(np.mean(err)), float(np.std(err, ddof=1) / math.sqrt(err.size))))
    header = ("slot", "frame", "trace_cov_est", "mse_theory", "mse_mc", "stderr")
    return {"estimate.csv": csv_bytes(header, rows)}


def _se_rows(ctx: RunContext, with_mc: bool):
    rows = []
    for i, n_rx, sc in ctx.sweep():
        plan = sc.plan(ctx.doc["analysis"]["plan"])
        for j, t in enumerate(ctx.slots(plan)):
            slot = _slot_with_beamformers(sc, plan, t)
            det, _ = slot_se(slot, sc.detequiv, [x.beamformer for x in slot.users])
            if with_mc:
                seed = int(np.random.SeedSequence([ctx.seed, i, j]).generate_state(1, np.uint64)[0])
                mc = mc_expected_se(slot, ctx.trials, seed, ctx.threads)
                rows.append((n_rx, t, det.se, mc.value, mc.stderr))
            else:
                rows.append((n_rx, t, det.se, math.nan, math.nan))
    return rows


def run_se_det(ctx: RunContext):
    header = ("n_rx", "slot", "se_det", "se_mc", "stderr")
    return {"se_det.csv": csv_bytes(header, _se_rows(ctx, False))}


def run_se_mc(ctx: RunContext):
    header = ("n_rx", "slot", "se_det", "se_mc", "stderr")
    return {"se_mc.csv": csv_bytes(header, _se_rows(ctx, True))}


BOUND_ORDER = ("mc", "utf", "ngo", "jensen", "hoydis", "se_det")


def run_bounds(ctx: RunContext):
    rows = []
    for i, n_rx, sc in ctx.sweep():
        plan = sc.plan(ctx.doc["analysis"]["plan"])
        t = ctx.slots(plan)[0]
        slot = _slot_with_beamformers(sc, plan, t)
        res = all_bounds(slot, ctx.trials, ctx.sweep_seed(i), ctx.threads, sc.detequiv)
        for name in BOUND_ORDER:
            v = res[name]
            if isinstance(v, float):
                rows.append((n_rx, name, v, 0.0))
            else:
                rows.append((n_rx, name, v.value, v.stderr))
    return {"bounds.csv": csv_bytes(("n_rx", "method", "value", "stderr"), rows)}


def run_optimize(ctx: RunContext):
    sol = opt_resource(ctx.scenario, optimizer_config(ctx.doc, ctx.threads))
    rows = [(i, len(p.sizes), " ".join(map(str, p.sizes)), p.dase, p.pilot_max, p.data_max,
             i == sol.best_index) for i, p in enumerate(sol.plans)]
    header = ("plan_id", "M", "q_list", "dase", "pilot_max", "data_max", "is_best")
    bfs = {str(t): [[fmt(x.real), fmt(x.imag)] for x in w]
           for t, w in enumerate(sol.beamformers, start=1) if w is not None}
    record = {"sizes": list(sol.sizes), "frames": sol.frames, "dase": fmt(sol.dase),
              "pilot_max": fmt(sol.pilot_max), "data_max": fmt(sol.data_max),
              "tagged_beamformers": bfs}
    return {"optimize.csv": csv_bytes(header, rows),
            "solution.json": (json.dumps(record, indent=2, sort_keys=True) + "\n").encode()}


def run_selftest(ctx: RunContext | None, seed: int = 0):
    results = selftest.run(seed)
    data = csv_bytes(("check", "passed", "detail"), results)
    return {"selftest.csv": data}, all(ok for _, ok, _ in results)


RUNNERS: dict[str, Callable[[RunContext], dict]] = {
    "correlate": run_correlate, "estimate": run_estimate, "se-det": run_se_det,
    "se-mc": run_se_mc, "bounds": run_bounds, "optimize": run_optimize,
}


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------

def _setup_logging():
    level = os.environ.get("AGING_MIMO_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="aging-mimo", description=__doc__.split("\n\n")[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    for name in SUBCOMMANDS:
        s = sub.add_parser(name)
        s.add_argument("--scenario", required=name != "selftest", help="scenario YAML file")
        s.add_argument("--seed", type=int, help="master seed (overrides analysis.seed)")
        s.add_argument("--out", default=".", help="output directory")
        s.add_argument("--trials", type=int, help="Monte-Carlo trials (overrides analysis.trials)")
        s.add_argument("--threads", type=int, default=1, help="worker threads")
    return p


def _write_outputs(out: Path, files: dict[str, bytes]) -> dict:
    out.mkdir(parents=True, exist_ok=True)
    listing = {}
    for name, data in files.items():
        (out / name).write_bytes(data)
        listing[name] = {"path": name, "sha256": hashlib.sha256(data).hexdigest()}
    return listing


def _error_record(kind: str, code: int, exc: BaseException, out: Path | None):
    record = {"status": "error", "kind": kind, "exit_code": code,
              "error": type(exc).__name__, "message": str(exc)}
    text = json.dumps(record, sort_keys=True)
    print(text, file=sys.stderr)
    if out is not None:
        try:
            out.mkdir(parents=True, exist_ok=True)
            (out / "error.json").write_text(text + "\n", "utf-8")
        except OSError:
            pass
    return code


def main(argv=None) -> int:
    _setup_logging()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_PARSE if exc.code else EXIT_OK
    out = Path(args.out)
    started = datetime.now(timezone.utc).isoformat()
    try:
        if args.threads < 1:
            raise ScenarioError("--threads must be positive")
        if args.seed is not None and not 0 <= args.seed < 2**64:
            raise ScenarioError("--seed must be an unsigned 64-bit integer")
        if args.command == "selftest":
            files, ok = run_selftest(None, args.seed or 0)
            scenario_hash, seed, trials = None, args.seed or 0, None
        else:
            raw = Path(args.scenario).read_bytes()
            scenario_hash = hashlib.sha256(raw).hexdigest()
            doc = load_document(args.scenario)
            seed = doc["analysis"]["seed"] if args.seed is None else args.seed
            trials = doc["analysis"]["trials"] if args.trials is None else args.trials
            if trials < 100:
                raise ScenarioError("--trials must be at least 100")
            ctx = RunContext(doc, build_scenario(doc), seed, trials, args.threads, out)
            files, ok = RUNNERS[args.command](ctx), True
        listing = _write_outputs(out, files)
        manifest = {"artifact_version": __version__, "subcommand": args.command,
                    "scenario_sha256": scenario_hash, "seed": seed, "trials": trials,
                    "threads": args.threads, "outputs": listing,
                    "started_utc": started, "finished_utc": datetime.now(timezone.utc).isoformat()}
        (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", "utf-8")
    except (ScenarioError, jsonschema.SchemaError) as exc:
        return _error_record("parse", EXIT_PARSE, exc, out)
    except (NumericalError, np.linalg.LinAlgError, FloatingPointError) as exc:
        return _error_record("numerical", EXIT_NUMERICAL, exc, out)
    except OSError as exc:
        return _error_record("io", EXIT_IO, exc, None)
    if not ok:
        return _error_record("numerical", EXIT_NUMERICAL, RuntimeError("selftest failed"), out)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
