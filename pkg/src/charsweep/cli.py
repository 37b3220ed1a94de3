"""Scenario-file front end.

A scenario is a flat ``key = value`` file (TOML syntax) such as::

    name = "example1"
    flux = "burgers"
    profile = \"\"\"
    x < 0: x + 1.5;
    x >= 0: x^2 - 2*x
    \"\"\"
    domain = [-3.0, 2.5]
    T = 10.0
    dt = 0.01
    dX = 0.001
    reference_m = 4000

Optional keys: ``coeffs`` (for ``flux = "poly"``), ``reference_m``,
``phased_step``, ``emit_multivalue`` and ``out``.
"""
from __future__ import annotations

import argparse
import datetime as _dt
import io
import sys
import time
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Optional, Sequence

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

import numpy as np

from .classify import ClassifyError, CriticalPoint
from .expr import ExprSyntaxError
from .flux import FluxError, FluxModel, flux_from_spec
from .profile import PiecewiseProfile, ProfileError, check_jumps, parse_profile
from .shockdyn import ShockError, curves_csv, evolve, events_csv
from .sweep import SweepError, multivalue_surface, sweep_solution
from .validate import ValidationError, compare, reference_solve

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_ABORT = 3

_KEYS = {
    "name", "flux", "coeffs", "profile", "domain", "T", "dt", "dX",
    "reference_m", "phased_step", "emit_multivalue", "out",
}


class ScenarioError(ValueError):
    """The scenario file cannot be read or has invalid fields."""


@dataclass
class Scenario:
    name: str
    flux: str
    profile_text: str
    domain: tuple[float, float]
    T: float
    dt: float
    dX: float
    coeffs: Optional[tuple[float, ...]] = None
    reference_m: Optional[int] = None
    phased_step: bool = False
    emit_multivalue: bool = False
    out: Optional[str] = None
    model: FluxModel = field(init=False, repr=False)
    profile: PiecewiseProfile = field(init=False, repr=False)

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        for key in ("T", "dt", "dX"):
            v = getattr(self, key)
            if not (isinstance(v, (int, float)) and v > 0.0 and np.isfinite(v)):
                raise ScenarioError(f"{key} must be a positive number, got {v!r}")
        a, b = self.domain
        if not (np.isfinite(a) and np.isfinite(b) and a < b):
            raise ScenarioError(f"domain must be [a, b] with a < b, got {list(self.domain)}")
        if self.reference_m is not None and (int(self.reference_m) != self.reference_m or self.reference_m < 100):
            raise ScenarioError(f"reference_m must be an integer >= 100, got {self.reference_m!r}")
        self.model = flux_from_spec(self.flux, self.coeffs)
        self.profile = parse_profile(self.profile_text, self.domain)
        check_jumps(self.profile, self.model)


def _float(d: dict, key: str, default=None) -> Optional[float]:
    v = d.get(key, default)
    if v is None:
        return None
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ScenarioError(f"{key} must be a number, got {v!r}")
    return float(v)


def parse_scenario(text: str, name: str = "scenario") -> Scenario:
    """Scenario from the text of a scenario file."""
    try:
        d = tomllib.loads(text)
    except tomllib.TOMLDecodeError as e:
        raise ScenarioError(f"{name}: {e}") from None
    unknown = sorted(set(d) - _KEYS)
    if unknown:
        raise ScenarioError(f"{name}: unknown keys {', '.join(unknown)}")
    for key in ("profile", "domain", "T"):
        if key not in d:
            raise ScenarioError(f"{name}: missing required key {key!r}")
    dom = d["domain"]
    if not (isinstance(dom, list) and len(dom) == 2 and all(isinstance(v, (int, float)) for v in dom)):
        raise ScenarioError(f"{name}: domain must be a list of two numbers")
    coeffs = d.get("coeffs")
    if coeffs is not None:
        if not isinstance(coeffs, list) or not all(isinstance(v, (int, float)) for v in coeffs):
            raise ScenarioError(f"{name}: coeffs must be a list of numbers")
        coeffs = tuple(float(v) for v in coeffs)
    ref = d.get("reference_m")
    if ref is not None and (isinstance(ref, bool) or not isinstance(ref, int)):
        raise ScenarioError(f"{name}: reference_m must be an integer")
    for key in ("phased_step", "emit_multivalue"):
        if not isinstance(d.get(key, False), bool):
            raise ScenarioError(f"{name}: {key} must be true or false")
    return Scenario(
        name=str(d.get("name", name)),
        flux=str(d.get("flux", "burgers")),
        profile_text=str(d["profile"]),
        domain=(float(dom[0]), float(dom[1])),
        T=_float(d, "T"),
        dt=_float(d, "dt", 0.01),
        dX=_float(d, "dX", 0.001),
        coeffs=coeffs,
        reference_m=ref,
        phased_step=d.get("phased_step", False),
        emit_multivalue=d.get("emit_multivalue", False),
        out=d.get("out"),
    )


def _bundled() -> dict[str, Path]:
    root = resources.files("charsweep") / "scenarios"
    return {Path(p.name).stem: Path(str(p)) for p in root.iterdir() if p.name.endswith(".scn")}


def list_scenarios() -> list[str]:
    """Names of the bundled scenarios: the numbered examples first, then the rest alphabetically."""
    names = _bundled()
    return sorted(names, key=lambda n: (not n.startswith("example"), n))


def load_scenario(ref: str) -> Scenario:
    """Scenario from a file path or the name of a bundled scenario."""
    path = Path(ref)
    if not path.is_file():
        bundled = _bundled()
        if ref not in bundled:
            raise ScenarioError(f"no scenario file or bundled scenario named {ref!r}")
        path = bundled[ref]
    try:
        text = path.read_text()
    except OSError as e:
        raise ScenarioError(f"{path}: {e.strerror}") from None
    return parse_scenario(text, path.stem)


# ------------------------------------------------------------------ outputs

def _side_cols(sd) -> list[str]:
    if sd is None:
        return ["", ""]
    return [repr(sd.f), repr(sd.h[1])]


def points_csv(points: Sequence[CriticalPoint]) -> str:
    out = io.StringIO()
    out.write("id,x,kind,f_left,h1_left,f_right,h1_right,k_l,k_r,break_times,crossing_sides,singular,fan\n")
    for p in points:
        row = [str(p.id), repr(p.x), p.kind.value]
        row += _side_cols(p.left) + _side_cols(p.right)
        row += ["" if p.k_l is None else str(p.k_l), "" if p.k_r is None else str(p.k_r)]
        row.append(";".join(repr(t) for t in p.break_times))
        row.append(";".join(p.crossing_sides))
        row += [str(int(p.singular)), str(int(p.fan))]
        out.write(",".join(row) + "\n")
    return out.getvalue()


def multivalue_csv(profile: PiecewiseProfile, model: FluxModel, T: float, window: tuple[float, float], dX: float) -> str:
    feet = np.arange(window[0], window[1] + 0.5 * dX, dX)
    out = io.StringIO()
    out.write("x0,X,u\n")
    for x0, (X, u) in zip(feet.tolist(), multivalue_surface(profile, model, T, feet.tolist())):
        out.write(f"{x0!r},{X!r},{u!r}\n")
    return out.getvalue()


@dataclass
class RunResult:
    status: int
    out_dir: Optional[Path]
    message: str = ""
    report: list[str] = field(default_factory=list)


def run_scenario(sc: Scenario, out_dir: str | Path | None = None) -> RunResult:
    """Classify, evolve, sweep and optionally validate; write the outputs to ``out_dir``."""
    out = Path(out_dir or sc.out or Path("out") / sc.name)
    out.mkdir(parents=True, exist_ok=True)
    graph = None
    try:
        t0 = time.perf_counter()
        graph = evolve(sc.profile, sc.model, sc.T, sc.dt, phased_step=sc.phased_step)
        t_track = time.perf_counter() - t0
        t0 = time.perf_counter()
        sl = sweep_solution(sc.profile, sc.model, graph, sc.T, sc.dX, window=sc.domain)
        t_sweep = time.perf_counter() - t0
        (out / "points.csv").write_text(points_csv(graph.points))
        (out / "curves.csv").write_text(curves_csv(graph))
        (out / "events.csv").write_text(events_csv(graph))
        (out / "slice_T.csv").write_text(sl.to_csv())
        (out / "discontinuities.csv").write_text(sl.discontinuities_csv())
        if sc.emit_multivalue:
            (out / "multivalue.csv").write_text(multivalue_csv(sc.profile, sc.model, sc.T, sc.domain, sc.dX))
        report = [
            f"scenario = {sc.name}",
            f"flux = {sc.model.kind.value} {list(sc.model.coeffs)}",
            f"T = {sc.T!r}",
            f"dt = {sc.dt!r}",
            f"dX = {sc.dX!r}",
            f"critical_points = {len(graph.points)}",
            f"curves = {len(graph.curves)}",
            f"events = {len(graph.events)}",
            f"discontinuities_at_T = {len(sl.discontinuities)}",
            f"tracking_seconds = {t_track:.6f}",
            f"sweep_seconds = {t_sweep:.6f}",
        ]
        if sc.reference_m:
            grid = reference_solve(sc.profile, sc.model, sc.T, int(sc.reference_m), domain=sc.domain)
            rep = compare(sl, grid, tracking_seconds=t_track)
            report += [
                f"reference_m = {grid.m}",
                f"reference_backend = {grid.backend}",
                f"reference_seconds = {grid.seconds:.6f}",
                f"reference_steps = {grid.steps}",
                f"speedup = {grid.seconds / max(t_track, 1e-12):.2f}",
            ]
            report += rep.lines()
        (out / "report.txt").write_text("\n".join(report) + "\n")
    except (ShockError, SweepError, ClassifyError, ValidationError, FluxError, ArithmeticError, ValueError) as e:
        stamp = _dt.datetime.now().isoformat(timespec="seconds")
        t_sim = getattr(e, "t", None)
        if t_sim is None and graph is not None:
            t_sim = graph.t
        where = f" at t = {t_sim!r}" if t_sim is not None else ""
        msg = f"[{stamp}] {sc.name}: aborted{where}: {type(e).__name__}: {e}"
        (out / "report.txt").write_text(msg + "\n")
        return RunResult(EXIT_ABORT, out, msg)
    return RunResult(EXIT_OK, out, "", report)


# ------------------------------------------------------------------ main

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="charsweep", description="Shock tracking and characteristic sweeping for scalar conservation laws.")
    p.add_argument("--scenario", help="scenario file, or the name of a bundled scenario")
    p.add_argument("--out", help="output directory (default: out/<name>)")
    p.add_argument("--with-reference", type=int, metavar="M", help="also run the reference solver on M cells and compare")
    p.add_argument("--phased-step", action="store_true", help="cut steps so pending shock activations fall on step boundaries")
    p.add_argument("--emit-multivalue", action="store_true", help="also write the unsorted characteristic surface")
    p.add_argument("--dt", type=float, help="override the tracking time step")
    p.add_argument("--dx", type=float, help="override the output spacing dX")
    p.add_argument("--T", type=float, help="override the final time")
    p.add_argument("--list", action="store_true", help="list bundled scenarios and exit")
    return p


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if args.list:
        print("\n".join(list_scenarios()))
        return EXIT_OK
    if not args.scenario:
        print("charsweep: --scenario is required (or use --list)", file=sys.stderr)
        return EXIT_INVALID
    try:
        sc = load_scenario(args.scenario)
        changes = {}
        if args.dt is not None:
            changes["dt"] = args.dt
        if args.dx is not None:
            changes["dX"] = args.dx
        if args.T is not None:
            changes["T"] = args.T
        if args.with_reference is not None:
            changes["reference_m"] = args.with_reference
        if args.phased_step:
            changes["phased_step"] = True
        if args.emit_multivalue:
            changes["emit_multivalue"] = True
        if changes:
            sc = replace(sc, **changes)
    except (ScenarioError, ProfileError, ExprSyntaxError, FluxError) as e:
        print(f"charsweep: invalid scenario: {e}", file=sys.stderr)
        return EXIT_INVALID
    res = run_scenario(sc, args.out)
    if res.status != EXIT_OK:
        print(res.message, file=sys.stderr)
    else:
        print("\n".join(res.report))
        print(f"outputs written to {res.out_dir}")
    return res.status


if __name__ == "__main__":
    sys.exit(main())
