"""Command-line front-end: load system files, run certification, synthesis,
simulation and diagnostics, write CSV and plot scripts.

System file format (UTF-8 text, '#' starts a comment line)::

    dim = 3
    f = ["x2*(1+x3)", "-x1", "0"]
    g = ["0", "0", "1"]
    V = "0.5*(x1^2+x2^2+x3^2)"

Any other ``name = value`` line defines a named parameter that is
substituted textually (wrapped in parentheses) into the f/g/V strings
before parsing.

Exit codes: 0 on success, 2 when certification is inconclusive or
synthesis fails, 1 on any error.
"""

from __future__ import annotations

import argparse
import json
import re
import sys as _sys
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .certify import (
    Case, Certificate, DEFAULT_N_MAX, DEFAULT_TAU_ZERO, SystemDef,
    certify_grid, certify_point,
)
from .lie import ScalarField, VectorField
from .simloop import (
    IntegrationError, LoopReport, Partition, Trajectory, run_closed_loop,
    verify_facts,
)
from .symcalc import ExprError
from .synth import (
    CertificateInconclusive, SynthesisFailed, cbh_residual,
    m_derivative_estimates, synthesize_step,
)

__all__ = ["SystemFile", "RunConfig", "load_system", "run", "main",
           "write_trajectory_csv", "read_trajectory_csv", "write_certificate_csv"]


class CliError(Exception):
    pass


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


# --- system files ----------------------------------------------------------------

_KEY_RE = re.compile(r"^\s*([A-Za-z_][A-Za-z_0-9]*)\s*=\s*(.+?)\s*$")
_RESERVED = {"sin", "cos", "exp", "ln"}


@dataclass(frozen=True)
class SystemFile:
    """Parsed contents of a system definition file."""

    dim: int
    f_strings: tuple[str, ...]
    g_strings: tuple[str, ...]
    v_string: str
    params: dict[str, str]

    def build(self) -> SystemDef:
        f_texts = [self._substitute(s) for s in self.f_strings]
        g_texts = [self._substitute(s) for s in self.g_strings]
        v_text = self._substitute(self.v_string)
        if len(f_texts) != self.dim or len(g_texts) != self.dim:
            raise CliError(
                f"dimension mismatch: dim = {self.dim} but f has {len(f_texts)} "
                f"and g has {len(g_texts)} components")
        f = VectorField.from_strings(f_texts, self.dim)
        g = VectorField.from_strings(g_texts, self.dim)
        v = ScalarField.from_string(v_text, self.dim)
        return SystemDef(f, g, v)

    def _substitute(self, text: str) -> str:
        for name in sorted(self.params, key=len, reverse=True):
            text = re.sub(rf"\b{re.escape(name)}\b", f"({self.params[name]})", text)
        return text


def _parse_value(raw: str, path: str, lineno: int):
    raw = raw.strip()
    if raw.startswith("["):
        if not raw.endswith("]"):
            raise CliError(f"{path}:{lineno}: unterminated list")
        items = re.findall(r'"([^"]*)"', raw)
        leftover = re.sub(r'"[^"]*"', "", raw[1:-1]).replace(",", "").strip()
        if not items or leftover:
            raise CliError(
                f"{path}:{lineno}: list entries must be double-quoted strings")
        return tuple(items)
    if raw.startswith('"'):
        if not raw.endswith('"') or len(raw) < 2:
            raise CliError(f"{path}:{lineno}: unterminated string")
        return raw[1:-1]
    try:
        float(raw)
    except ValueError:
        raise CliError(f"{path}:{lineno}: cannot parse value {raw!r}") from None
    return raw


def parse_system_file(text: str, path: str = "<string>") -> SystemFile:
    entries = {}
    params = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        m = _KEY_RE.match(line)
        if m is None:
            raise CliError(f"{path}:{lineno}: expected 'name = value'")
        key, raw = m.group(1), m.group(2)
        value = _parse_value(raw, path, lineno)
        if key in ("dim", "f", "g", "V"):
            entries[key] = (value, lineno)
        else:
            if key in _RESERVED or re.fullmatch(r"x\d+", key):
                raise CliError(f"{path}:{lineno}: parameter name {key!r} is reserved")
            if not isinstance(value, str):
                raise CliError(f"{path}:{lineno}: parameter {key!r} must be scalar")
            params[key] = value
    for required in ("dim", "f", "g", "V"):
        if required not in entries:
            raise CliError(f"{path}: missing required key {required!r}")
    dim_raw = entries["dim"][0]
    try:
        dim = int(dim_raw)
    except (TypeError, ValueError):
        raise CliError(f"{path}: dim must be an integer, got {dim_raw!r}") from None
    f_val = entries["f"][0]
    g_val = entries["g"][0]
    v_val = entries["V"][0]
    if not isinstance(f_val, tuple) or not isinstance(g_val, tuple):
        raise CliError(f"{path}: f and g must be bracketed lists of strings")
    if not isinstance(v_val, str):
        raise CliError(f"{path}: V must be a quoted string")
    return SystemFile(dim, f_val, g_val, v_val, params)


def load_system(path: str | Path) -> SystemDef:
    """Load and build a SystemDef from a system file."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise CliError(f"cannot read {path}: {exc}") from exc
    try:
        return parse_system_file(text, str(path)).build()
    except (ExprError, ValueError) as exc:
        raise CliError(f"{path}: {exc}") from exc


# --- CSV and plot output ------------------------------------------------------------

def write_trajectory_csv(path: Path, traj: Trajectory, dim: int) -> None:
    cp_times = {t for t, _, _ in traj.checkpoints}
    events = sorted(traj.events)
    lines = ["t," + ",".join(f"x{i}" for i in range(1, dim + 1))
             + ",V,segment_index,is_checkpoint"]
    seg = 0
    for t, state, v in zip(traj.times, traj.states, traj.v_values):
        while seg < len(events) and t > events[seg]:
            seg += 1
        cols = [_fmt(t)] + [_fmt(c) for c in state] + [
            _fmt(v), str(seg), "1" if t in cp_times else "0"]
        lines.append(",".join(cols))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_trajectory_csv(path: Path) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Read back (times, states, V) from a trajectory CSV."""
    rows = path.read_text(encoding="utf-8").strip().splitlines()
    header = rows[0].split(",")
    dim = sum(1 for h in header if re.fullmatch(r"x\d+", h))
    times, states, vs = [], [], []
    for row in rows[1:]:
        cols = row.split(",")
        times.append(float(cols[0]))
        states.append([float(c) for c in cols[1:1 + dim]])
        vs.append(float(cols[1 + dim]))
    return np.array(times), np.array(states), np.array(vs)


def write_certificate_csv(path: Path, entries: Sequence[tuple[Sequence[float], Certificate | None, bool]],
                          dim: int) -> None:
    """Long format: one row per witness, point and case columns repeated."""
    lines = [",".join(f"x{i}" for i in range(1, dim + 1))
             + ",case,N,gV,fV,witness_name,witness_value"]
    for point, cert, skipped in entries:
        coords = [_fmt(c) for c in point]
        if skipped or cert is None:
            lines.append(",".join(coords + ["skipped", "0", "", "", "", ""]))
            continue
        gv = cert.witnesses.get("gV")
        fv = cert.witnesses.get("fV")
        base = coords + [cert.case.value, str(cert.N),
                         "" if gv is None else _fmt(gv),
                         "" if fv is None else _fmt(fv)]
        for name, value in cert.witnesses.items():
            lines.append(",".join(base + [name, _fmt(value)]))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def write_plot_script(path: Path, csv_name: str, dim: int) -> None:
    cols = "".join(f"     '' using 1:{i + 1} with lines title 'x{i}', \\\n"
                   for i in range(1, dim + 1))
    script = (
        "# gnuplot script: state components and V along the trajectory\n"
        "set datafile separator ','\n"
        "set key outside\n"
        "set xlabel 't'\n"
        f"plot '{csv_name}' using 1:{dim + 2} with lines title 'V', \\\n"
        f"{cols}"
        f"     '{csv_name}' using (column(1)):($0 >= 0 && column({dim + 4}) > 0 "
        f"? column({dim + 2}) : 1/0) with points pt 7 title 'checkpoints'\n"
    )
    path.write_text(script, encoding="utf-8")


def _report_to_json(report: LoopReport) -> dict:
    return {
        "final_state": [float(v) for v in report.final_state],
        "final_norm": report.final_norm,
        "checkpoint_vs": [[t, v] for t, v in report.checkpoint_vs],
        "overshoot_ratio": report.overshoot_ratio,
        "threshold_times": {_fmt(mu): t for mu, t in report.threshold_times.items()},
        "stopped_early": report.stopped_early,
        "stop_time": report.stop_time,
        "failure": report.failure,
        "intervals": [
            {
                "t_start": rec.t_start,
                "t_end": rec.t_end,
                "measured_state": list(rec.measured_state),
                "clamped": rec.clamped,
                "steps": [
                    {
                        "case": s.case, "N": s.N, "rho": s.rho, "u1": s.u1,
                        "drop": s.predicted_drop, "sup_ratio": s.predicted_ratio,
                        "segments": [[v, d] for v, d in s.program.segments],
                    }
                    for s in rec.steps
                ],
            }
            for rec in report.intervals
        ],
    }


# --- argument handling ----------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise CliError(message)


def _parse_point(text: str) -> np.ndarray:
    try:
        return np.array([float(v) for v in text.split(",")])
    except ValueError:
        raise CliError(f"cannot parse point {text!r}") from None


def _parse_box(text: str) -> list[tuple[float, float]]:
    out = []
    for axis in text.split(","):
        lo, _, hi = axis.partition(":")
        try:
            out.append((float(lo), float(hi)))
        except ValueError:
            raise CliError(f"cannot parse box axis {axis!r}") from None
    return out


def _parse_resolution(text: str) -> list[int]:
    try:
        return [int(v) for v in text.split(",")]
    except ValueError:
        raise CliError(f"cannot parse resolution {text!r}") from None


def _parse_partition(text: str) -> Partition:
    kind, _, rest = text.partition(":")
    if kind == "uniform":
        try:
            return Partition.uniform(float(rest))
        except ValueError as exc:
            raise CliError(f"bad uniform partition {text!r}: {exc}") from None
    if kind == "explicit":
        body, _, tail = rest.partition("+")
        try:
            times = [float(v) for v in body.split(",")]
            tail_step = float(tail) if tail else None
            return Partition.explicit(times, tail_step)
        except ValueError as exc:
            raise CliError(f"bad explicit partition {text!r}: {exc}") from None
    raise CliError(f"unknown partition kind {kind!r} (use uniform:STEP or "
                   "explicit:t1,t2,...[+STEP])")


@dataclass(frozen=True)
class RunConfig:
    """Validated options of a single invocation."""

    command: str
    system_path: str
    at: np.ndarray | None = None
    x0: np.ndarray | None = None
    box: list | None = None
    resolution: list | None = None
    partition: Partition | None = None
    horizon: float = 50.0
    n_max: int = DEFAULT_N_MAX
    xi: float | None = None
    tol: float = 1e-10
    tau_zero: float = DEFAULT_TAU_ZERO
    rho: float = 1.0
    u1: float = 1.0
    order: int = 2
    k: int = 2
    t_values: tuple[float, ...] = ()
    out_dir: Path = Path(".")


def _build_config(args) -> RunConfig:
    kwargs = {
        "command": args.command,
        "system_path": args.system,
        "n_max": args.nmax,
        "tol": args.tol,
        "out_dir": Path(args.out),
    }
    if getattr(args, "at", None) is not None:
        kwargs["at"] = _parse_point(args.at)
    if getattr(args, "x0", None) is not None:
        kwargs["x0"] = _parse_point(args.x0)
    if getattr(args, "box", None) is not None:
        kwargs["box"] = _parse_box(args.box)
    if getattr(args, "res", None) is not None:
        kwargs["resolution"] = _parse_resolution(args.res)
    if getattr(args, "partition", None) is not None:
        kwargs["partition"] = _parse_partition(args.partition)
    if getattr(args, "horizon", None) is not None:
        kwargs["horizon"] = args.horizon
    if getattr(args, "xi", None) is not None:
        kwargs["xi"] = args.xi
    if getattr(args, "rho", None) is not None:
        kwargs["rho"] = args.rho
    if getattr(args, "u1", None) is not None:
        kwargs["u1"] = args.u1
    if getattr(args, "order", None) is not None:
        kwargs["order"] = args.order
    if getattr(args, "k", None) is not None:
        kwargs["k"] = args.k
    if getattr(args, "t", None) is not None:
        kwargs["t_values"] = tuple(float(v) for v in args.t.split(","))
    return RunConfig(**kwargs)


def run(config: RunConfig) -> int:
    """Dispatch one validated invocation; returns the process exit code."""
    sys_def = load_system(config.system_path)
    out = config.out_dir
    out.mkdir(parents=True, exist_ok=True)

    if config.command == "certify":
        if config.at is None:
            raise CliError("certify requires --at")
        cert = certify_point(sys_def, config.at, n_max=config.n_max,
                             tau_zero=config.tau_zero)
        print(cert.summary())
        for name, value in cert.witnesses.items():
            print(f"  {name} = {_fmt(value)}")
        if cert.detail:
            print(f"  {cert.detail}")
        write_certificate_csv(
            out / "certificates.csv",
            [(tuple(config.at), cert, False)], sys_def.dim)
        return 2 if cert.case is Case.INCONCLUSIVE else 0

    if config.command == "certify-grid":
        if config.box is None or config.resolution is None:
            raise CliError("certify-grid requires --box and --res")
        entries = certify_grid(sys_def, config.box, config.resolution,
                               n_max=config.n_max, tau_zero=config.tau_zero)
        rows = [(e.point, e.certificate, e.skipped) for e in entries]
        write_certificate_csv(out / "certificates.csv", rows, sys_def.dim)
        counts: dict[str, int] = {}
        for e in entries:
            key = "skipped" if e.skipped else e.certificate.case.value
            counts[key] = counts.get(key, 0) + 1
        print(" ".join(f"{k}={v}" for k, v in sorted(counts.items())))
        any_inconclusive = any(
            not e.skipped and e.certificate.case is Case.INCONCLUSIVE for e in entries)
        return 2 if any_inconclusive else 0

    if config.command == "step":
        if config.at is None:
            raise CliError("step requires --at")
        xi = config.xi if config.xi is not None else 0.5
        result = synthesize_step(sys_def, config.at, xi, n_max=config.n_max,
                                 tol=config.tol, tau_zero=config.tau_zero)
        print(f"{result.certificate.summary()} rho={_fmt(result.rho)} "
              f"u1={_fmt(result.u1)} drop={_fmt(result.v_drop)} "
              f"sup_ratio={_fmt(result.sup_v_ratio)}")
        lines = ["segment,value,duration"]
        for i, (v, d) in enumerate(result.program.segments):
            lines.append(f"{i},{_fmt(v)},{_fmt(d)}")
        (out / "step_program.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")
        return 0

    if config.command == "simulate":
        if config.x0 is None or config.partition is None:
            raise CliError("simulate requires --x0 and --partition")
        traj, report = run_closed_loop(
            sys_def, config.x0, config.partition, config.horizon,
            xi_cap=config.xi, tol=config.tol, n_max=config.n_max,
            tau_zero=config.tau_zero)
        write_trajectory_csv(out / "trajectory.csv", traj, sys_def.dim)
        (out / "report.json").write_text(
            json.dumps(_report_to_json(report), indent=2) + "\n", encoding="utf-8")
        write_plot_script(out / "plot_trajectory.gp", "trajectory.csv", sys_def.dim)
        checks = verify_facts(traj, report)
        print(f"final |x| = {_fmt(report.final_norm)} at t = {_fmt(traj.times[-1])}; "
              f"overshoot ratio = {_fmt(report.overshoot_ratio)}")
        for check in checks:
            print(f"  {check.name}: {'pass' if check.passed else 'FAIL'} ({check.detail})")
        if report.failure:
            print(f"  synthesis failure: {report.failure}")
            return 2
        return 0

    if config.command == "diagnose-m":
        if config.at is None:
            raise CliError("diagnose-m requires --at")
        md = m_derivative_estimates(sys_def, config.at, config.rho, config.u1,
                                    config.order)
        lines = ["order,estimate,noise_bound,ill_conditioned"]
        for n, (v, noise, ill) in enumerate(
                zip(md.values, md.noise, md.ill_conditioned), start=1):
            print(f"m^({n})(0) = {_fmt(v)} +- {_fmt(noise)}"
                  + (" [ill-conditioned]" if ill else ""))
            lines.append(f"{n},{_fmt(v)},{_fmt(noise)},{int(ill)}")
        (out / "m_derivatives.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")
        return 0

    if config.command == "cbh-check":
        if config.at is None:
            raise CliError("cbh-check requires --at")
        ts = config.t_values or (1e-2,)
        lines = ["t,k,residual"]
        residuals = []
        for t in ts:
            r = cbh_residual(sys_def, config.at, config.rho, config.u1, config.k, t)
            residuals.append(r)
            print(f"t = {_fmt(t)}: residual = {_fmt(r)}")
            lines.append(f"{_fmt(t)},{config.k},{_fmt(r)}")
        if len(ts) >= 2:
            slope = np.polyfit(np.log(ts), np.log(residuals), 1)[0]
            print(f"log-log slope = {_fmt(slope)}")
        (out / "cbh_residuals.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")
        return 0

    raise CliError(f"unknown command {config.command!r}")


def _make_parser() -> _Parser:
    parser = _Parser(prog="sdstab", description=__doc__,
                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--system", required=True, help="system definition file")
        p.add_argument("--nmax", type=int, default=DEFAULT_N_MAX)
        p.add_argument("--tol", type=float, default=1e-10)
        p.add_argument("--out", default=".", help="output directory")

    p = sub.add_parser("certify", help="classify a single state")
    common(p)
    p.add_argument("--at", required=True, help="state as comma-separated floats")

    p = sub.add_parser("certify-grid", help="classify every point of a grid")
    common(p)
    p.add_argument("--box", required=True, help="lo1:hi1,lo2:hi2,...")
    p.add_argument("--res", required=True, help="points per axis, k1,k2,...")

    p = sub.add_parser("step", help="synthesize one verified program")
    common(p)
    p.add_argument("--at", required=True)
    p.add_argument("--xi", type=float, default=None, help="max step duration")

    p = sub.add_parser("simulate", help="run the sampled-data closed loop")
    common(p)
    p.add_argument("--x0", required=True)
    p.add_argument("--partition", required=True,
                   help="uniform:STEP or explicit:t1,t2,...[+STEP]")
    p.add_argument("--horizon", type=float, default=50.0)
    p.add_argument("--xi", type=float, default=None)

    p = sub.add_parser("diagnose-m", help="derivative estimates of m at 0")
    common(p)
    p.add_argument("--at", required=True)
    p.add_argument("--rho", type=float, default=1.0)
    p.add_argument("--u1", type=float, default=1.0)
    p.add_argument("--order", type=int, default=2)

    p = sub.add_parser("cbh-check", help="truncated bracket-series residual")
    common(p)
    p.add_argument("--at", required=True)
    p.add_argument("--rho", type=float, default=1.0)
    p.add_argument("--u1", type=float, default=1.0)
    p.add_argument("--k", type=int, default=2)
    p.add_argument("--t", default=None, help="comma-separated times")

    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = _make_parser()
    try:
        args = parser.parse_args(argv)
        config = _build_config(args)
        return run(config)
    except CliError as exc:
        print(f"error: {exc}", file=_sys.stderr)
        return 1
    except (CertificateInconclusive, SynthesisFailed) as exc:
        print(f"not achieved: {exc}", file=_sys.stderr)
        return 2
    except (ExprError, IntegrationError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=_sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
