"""Command-line front end.

Subcommands: ``estimate`` (derivative tracking), ``optimize`` (time-varying
Newton flow with ideal/estimated/no correction), ``sweep`` (error-versus-gain
power laws), ``verify`` (the full check battery). Runs write CSV trajectories
and small self-contained SVG plots into the output directory.

Flags override keys from an optional ``key = value`` config file; every key
mirrors a flag name. Exit codes: 0 success, 1 runtime or check failure,
2 invalid run specification.
"""

from __future__ import annotations

import argparse
import re
import sys
from pathlib import Path

import numpy as np

from . import checks as checks_mod
from . import estimator as est_mod
from . import flows as flows_mod
from . import signals as sig_mod
from . import sim as sim_mod
from . import svg as svg_mod


class SpecError(Exception):
    """Invalid run specification; names the offending field."""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


class SignalParseError(SpecError):
    def __init__(self, token: str, message: str):
        super().__init__("signal", f"bad token {token!r}: {message}")


_SINUSOID_RE = re.compile(r"^(?P<amp>[^*()]+\*)?(?P<kind>sin|cos2|cos)\((?P<arg>[^()]*)\)$")


def _parse_number(token: str, what: str) -> float:
    try:
        return float(token)
    except ValueError:
        raise SignalParseError(token, f"expected a number for {what}") from None


def _parse_sinusoid(token: str) -> sig_mod.Sinusoid:
    m = _SINUSOID_RE.match(token)
    if not m:
        raise SignalParseError(token, "expected A*sin(w*t+p), A*cos(w*t+p), "
                                      "A*cos2(w*t+p) or poly:c0,c1,...")
    amp = 1.0
    if m.group("amp"):
        amp = _parse_number(m.group("amp")[:-1], "amplitude")
    arg = m.group("arg")
    if "t" not in arg:
        raise SignalParseError(token, "argument must contain t")
    left, _, right = arg.partition("t")
    left = left.rstrip("*")
    if left in ("", "+"):
        omega = 1.0
    elif left == "-":
        omega = -1.0
    else:
        omega = _parse_number(left, "angular frequency")
    phase = 0.0
    if right:
        if right[0] not in "+-":
            raise SignalParseError(token, "phase must follow t with + or -")
        phase = _parse_number(right, "phase")
    return sig_mod.Sinusoid(amp, omega, phase, m.group("kind"))


def _is_number(token: str) -> bool:
    try:
        float(token)
        return True
    except ValueError:
        return False


def parse_signal(text: str) -> sig_mod.AnalyticSignal:
    """Parse the component grammar: comma-separated A*sin(w*t+p),
    A*cos(w*t+p), A*cos2(w*t+p) and poly:c0,c1,... terms (whitespace
    insensitive; polynomial coefficients may continue across commas)."""
    compact = "".join(text.split())
    if not compact:
        raise SpecError("signal", "empty signal description")
    segments = compact.split(",")
    components = []
    i = 0
    while i < len(segments):
        seg = segments[i]
        if not seg:
            raise SignalParseError(seg, "empty component")
        if seg.startswith("poly:"):
            coeffs = [_parse_number(seg[5:], "polynomial coefficient")]
            i += 1
            while i < len(segments) and _is_number(segments[i]):
                coeffs.append(float(segments[i]))
                i += 1
            components.append(sig_mod.Polynomial(tuple(coeffs)))
        else:
            components.append(_parse_sinusoid(seg))
            i += 1
    return sig_mod.AnalyticSignal(tuple(components))


def load_config(path: str) -> dict:
    """Flat ``key = value`` file; '#' starts a comment; keys mirror flags."""
    values = {}
    text = Path(path).read_text()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise SpecError("config", f"line {lineno}: expected key = value, got {raw!r}")
        key, _, value = line.partition("=")
        values[key.strip().replace("-", "_")] = value.strip()
    return values


_FLAG_DEFAULTS = {
    "estimate": dict(signal="sin(5*t-2)", cost="quadratic-tracking", k="1", sigma="5",
                     mode="estimated", noise_var="0", seed="0", t0="0", tf="10",
                     h="1e-3", out="out"),
    "optimize": dict(signal="cos(5*t-2),sin(5*t-2),cos2(5*t-2)", cost="quadratic-tracking",
                     k="1", sigma="5,20", mode="ideal,estimated", noise_var="0", seed="0",
                     t0="0", tf="10", h="1e-3", out="out"),
    "sweep": dict(signal="sin(5*t-2)", cost="quadratic-tracking", k="1",
                  sigma="40,80,160,320", mode="estimated", noise_var="0", seed="0",
                  t0="0", tf="30", h="1e-3", out="out"),
    "verify": dict(),
}


def _resolve(ns: argparse.Namespace, command: str) -> dict:
    merged = dict(_FLAG_DEFAULTS[command])
    if getattr(ns, "config", None):
        for key, value in load_config(ns.config).items():
            if key not in merged:
                raise SpecError("config", f"unknown key {key!r}")
            merged[key] = value
    for key in merged:
        cli_value = getattr(ns, key, None)
        if cli_value is not None:
            merged[key] = cli_value
    return merged


def _positive_float(spec: dict, key: str) -> float:
    try:
        value = float(spec[key])
    except ValueError:
        raise SpecError(key, f"not a number: {spec[key]!r}") from None
    if not value > 0.0:
        raise SpecError(key, f"must be > 0, got {value}")
    return value


def _parse_run_spec(spec: dict):
    """Validate the merged flag/config values into typed run parameters."""
    signal = parse_signal(spec["signal"])
    try:
        k = int(spec["k"])
    except ValueError:
        raise SpecError("k", f"not an integer: {spec['k']!r}") from None
    if k < 1:
        raise SpecError("k", f"must be >= 1, got {k}")
    sigmas = []
    for token in str(spec["sigma"]).split(","):
        try:
            value = float(token)
        except ValueError:
            raise SpecError("sigma", f"not a number: {token!r}") from None
        if not value > 0.0:
            raise SpecError("sigma", f"must be > 0, got {value}")
        sigmas.append(value)
    try:
        noise_var = float(spec["noise_var"])
    except ValueError:
        raise SpecError("noise-var", f"not a number: {spec['noise_var']!r}") from None
    if noise_var < 0.0:
        raise SpecError("noise-var", f"must be >= 0, got {noise_var}")
    try:
        seed = int(spec["seed"])
    except ValueError:
        raise SpecError("seed", f"not an integer: {spec['seed']!r}") from None
    if seed < 0:
        raise SpecError("seed", f"must be >= 0, got {seed}")
    try:
        t0 = float(spec["t0"])
    except ValueError:
        raise SpecError("t0", f"not a number: {spec['t0']!r}") from None
    tf = _positive_float(spec, "tf")
    h = _positive_float(spec, "h")
    try:
        cfg = sim_mod.SimConfig(t0=t0, tf=tf, h=h, seed=seed)
    except ValueError as exc:
        raise SpecError("tf/h", str(exc)) from None
    modes = []
    for token in str(spec["mode"]).split(","):
        try:
            modes.append(flows_mod.CorrectionMode.from_string(token))
        except ValueError as exc:
            raise SpecError("mode", str(exc)) from None
    try:
        cost = flows_mod.cost_by_name(spec["cost"], signal.dim)
    except ValueError as exc:
        raise SpecError("cost", str(exc)) from None
    noise = sig_mod.NoiseSpec(noise_var, seed)
    return signal, cost, k, sigmas, modes, noise, cfg, Path(spec["out"])


def _oracle_parameters(signal: sig_mod.AnalyticSignal):
    """(amplitude, omega) of the equivalent pure sinusoid, when the signal is
    a single sinusoid component; None otherwise."""
    if signal.dim != 1 or not isinstance(signal.components[0], sig_mod.Sinusoid):
        return None
    comp = signal.components[0]
    if comp.kind == "cos2":
        return abs(comp.amplitude) / 2.0, 2.0 * abs(comp.omega)
    return abs(comp.amplitude), abs(comp.omega)


def cmd_estimate(spec: dict) -> int:
    signal, _, k, sigmas, _, noise, cfg, out = _parse_run_spec(spec)
    sigma = sigmas[0]
    est_cfg = est_mod.DirtyDerivativeConfig(k, sigma, signal.dim)
    traj = sim_mod.run_derivative_experiment(signal, noise, est_cfg, cfg)
    out.mkdir(parents=True, exist_ok=True)
    traj.to_csv(out / "trajectory.csv")

    series = []
    for order in range(1, k + 1):
        suffix = "" if order == 1 else str(order)
        series.append((f"d{order} true", traj.t, traj.column(f"thetadot{suffix}_0")))
        series.append((f"d{order} estimate", traj.t, traj.column(f"thetahat{suffix}_0")))
    svg_mod.line_plot(out / "estimate.svg", series,
                      title=f"derivative estimates, sigma={sigma:g}, k={k}",
                      ylabel="derivative")

    oracle_params = _oracle_parameters(signal)
    for order in range(1, k + 1):
        suffix = "" if order == 1 else str(order)
        sup = sim_mod.steady_state_metric(traj, f"est_error{suffix}").steady_state_sup
        line = f"order {order}: steady-state sup error {sup:.6g}"
        if oracle_params is not None:
            amp, omega = oracle_params
            oracle = est_mod.steady_state_sinusoid_error(est_cfg, order, amp, omega)
            line += f" (analytic oracle {oracle:.6g})"
        print(line)
    print(f"wrote {out / 'trajectory.csv'} and {out / 'estimate.svg'}")
    return 0


def cmd_optimize(spec: dict) -> int:
    signal, cost, k, sigmas, modes, noise, cfg, out = _parse_run_spec(spec)
    out.mkdir(parents=True, exist_ok=True)
    runs = []
    for mode in modes:
        if mode is flows_mod.CorrectionMode.ESTIMATED:
            for sigma in sigmas:
                est_cfg = est_mod.DirtyDerivativeConfig(k, sigma, signal.dim)
                label = f"estimated-s{sigma:g}"
                traj = sim_mod.run_interconnection(cost, signal, mode, cfg,
                                                   est_cfg=est_cfg, noise=noise)
                runs.append((label, traj))
        else:
            traj = sim_mod.run_interconnection(cost, signal, mode, cfg, noise=noise)
            runs.append((mode.value, traj))
    series = []
    for label, traj in runs:
        traj.to_csv(out / f"trajectory_{label}.csv")
        series.append((label, traj.t, traj.column("loss")))
        mask = traj.window_mask()
        mean_loss = float(np.mean(traj.column("loss")[mask]))
        print(f"{label}: final-window mean loss {mean_loss:.6g}, "
              f"tracking error sup {float(np.max(traj.column('tracking_error')[mask])):.6g}")
    svg_mod.line_plot(out / "loss.svg", series, title="loss over time", ylabel="loss")
    print(f"wrote {len(runs)} trajectory CSVs and {out / 'loss.svg'}")
    return 0


def cmd_sweep(spec: dict) -> int:
    signal, _, k, sigmas, _, noise, cfg, out = _parse_run_spec(spec)
    if len(sigmas) < 3:
        raise SpecError("sigma", f"sweep needs at least 3 values, got {len(sigmas)}")
    out.mkdir(parents=True, exist_ok=True)
    sups = np.empty((len(sigmas), k))
    for row, sigma in enumerate(sigmas):
        est_cfg = est_mod.DirtyDerivativeConfig(k, sigma, signal.dim)
        traj = sim_mod.run_derivative_experiment(signal, noise, est_cfg, cfg)
        for order in range(1, k + 1):
            suffix = "" if order == 1 else str(order)
            sups[row, order - 1] = sim_mod.steady_state_metric(
                traj, f"est_error{suffix}").steady_state_sup
    with open(out / "sweep.csv", "w", newline="\n") as fh:
        fh.write("sigma," + ",".join(f"est_error_sup_{i}" for i in range(1, k + 1)) + "\n")
        for row, sigma in enumerate(sigmas):
            fh.write(f"{sigma:.17g}," + ",".join(f"{v:.17g}" for v in sups[row]) + "\n")
    for order in range(1, k + 1):
        slope = sim_mod.slope_fit(list(zip(sigmas, sups[:, order - 1])))
        print(f"order {order}: fitted log-log slope {slope:.4f} "
              f"(power law exponent -(k+1-i) = {-(k + 1 - order)})")
    print(f"wrote {out / 'sweep.csv'}")
    return 0


def cmd_verify(ns: argparse.Namespace) -> int:
    names = set(ns.only.split(",")) if ns.only else None
    try:
        results = checks_mod.run_checks(names, transfer_perturbation=ns.perturb_transfer)
    except ValueError as exc:
        raise SpecError("only", str(exc)) from None
    width = max(len(r.name) for r in results)
    all_passed = True
    for r in results:
        status = "PASS" if r.passed else "FAIL"
        all_passed = all_passed and r.passed
        print(f"{status}  {r.name:<{width}}  measured: {r.measured}  expected: {r.expected}")
        if not r.passed:
            for line in r.details:
                if line.startswith("FAIL"):
                    print(f"      {line}")
    print("verification " + ("PASSED" if all_passed else "FAILED"))
    return 0 if all_passed else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ddopt",
                                     description="dirty-derivative estimation and "
                                                 "time-varying optimization experiments")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_run_flags(p):
        p.add_argument("--signal", help="signal components, e.g. 'sin(5*t-2)' or "
                                        "'cos(5*t-2),poly:0,1'")
        p.add_argument("--cost", help="cost model: quadratic-tracking or logcosh")
        p.add_argument("--k", help="estimator order (>= 1)")
        p.add_argument("--sigma", help="estimator gain, comma list for sweeps/optimize")
        p.add_argument("--mode", help="correction modes: none, ideal, estimated (comma list)")
        p.add_argument("--noise-var", dest="noise_var", help="measurement noise variance")
        p.add_argument("--seed", help="seed for the noise stream")
        p.add_argument("--t0", help="start time")
        p.add_argument("--tf", help="end time")
        p.add_argument("--h", help="integration step")
        p.add_argument("--out", help="output directory")
        p.add_argument("--config", help="flat key = value config file (flags override)")

    for name, help_text in (("estimate", "run the derivative-tracking experiment"),
                            ("optimize", "run the moving-minimizer Newton flow"),
                            ("sweep", "sweep sigma and fit error power laws")):
        add_run_flags(sub.add_parser(name, help=help_text))
    verify = sub.add_parser("verify", help="run the verification battery")
    verify.add_argument("--only", help="comma list of check names to run")
    verify.add_argument("--perturb-transfer", dest="perturb_transfer", type=float,
                        default=0.0, help=argparse.SUPPRESS)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        ns = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code else 0
    try:
        if ns.command == "verify":
            return cmd_verify(ns)
        spec = _resolve(ns, ns.command)
        return {"estimate": cmd_estimate, "optimize": cmd_optimize,
                "sweep": cmd_sweep}[ns.command](spec)
    except SpecError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (sim_mod.NonFiniteStateError, sim_mod.InsufficientDataError) as exc:
        print(f"run failed: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
