"""Command-line front end.

Subcommands: simulate, correlate, fit-comb, fit-rate, estimate, pipeline,
figures.  Every diagnostic goes to stderr; results go to files or stdout.
Exit codes: 0 success, 1 validation/usage error, 2 numerical failure.
"""

import argparse
import json
import sys

from . import figures, pipeline, tagio
from .correlate import correlate as correlate_streams
from .correlate import normalize
from .errors import NumericalError, SqzError, StageFailure, ValidationError
from .estimate import (
    EstimationConfig,
    UncertainInputs,
    estimate_squeezing,
    propagate_uncertainty,
)
from .fits import fit_comb, fit_rate_linear
from .opo import derive_cavity_rates
from .simulate import simulate


class _Parser(argparse.ArgumentParser):
    # usage problems are validation errors: exit 1, not argparse's default 2
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


def _build_parser() -> _Parser:
    p = _Parser(prog="sqzstat", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="generate a two-channel tag file")
    s.add_argument("--config", required=True, help="JSON simulation config")
    s.add_argument("--out", required=True, help="output SQZT tag file")
    s.add_argument("--seed", type=int, default=None, help="override the config seed")

    c = sub.add_parser("correlate", help="histogram delays between two channels")
    c.add_argument("--in", dest="infile", required=True, help="SQZT or CSV tag file")
    c.add_argument("--a", type=int, default=0, help="channel for the start tags")
    c.add_argument("--b", type=int, default=1, help="channel for the stop tags")
    c.add_argument("--bin-ps", type=float, default=35.0)
    c.add_argument("--bins", type=int, default=4000)
    c.add_argument("--center-ps", type=float, default=0.0)
    c.add_argument("--out", required=True, help="output histogram CSV")

    f = sub.add_parser("fit-comb", help="fit the comb model to a histogram CSV")
    f.add_argument("--hist", required=True)
    f.add_argument("--out", required=True, help="output fit JSON")

    r = sub.add_parser("fit-rate", help="linear rate calibration from a rate CSV")
    r.add_argument("--data", required=True, help="CSV with header P_mW,R_meas,sigma")
    r.add_argument("--eta", type=float, required=True, help="counting-path efficiency")
    r.add_argument("--offset", action="store_true", help="fit R = kP + b instead of R = kP")
    r.add_argument("--out", required=True, help="output fit JSON")

    e = sub.add_parser("estimate", help="squeezing estimate from a measured g2(0)")
    e.add_argument("--g2zero", type=float, required=True)
    e.add_argument("--sigma-g2", type=float, default=0.0)
    e.add_argument("--params", required=True, help="fit JSON from fit-comb (omega_c, tau_f)")
    e.add_argument("--k", type=float, required=True, help="rate calibration, 1/(W s)")
    e.add_argument("--freq-hz", type=float, default=800e3)
    e.add_argument("--eta-esc", default="gammas", help="'gammas' or an explicit value")
    e.add_argument("--pth", default="losses", help="'losses' or an explicit value in watts")
    e.add_argument("--mode", choices=("chain", "eq5"), default="chain")
    e.add_argument("--t-out", type=float, default=0.11, help="output-coupler transmission")
    e.add_argument("--e-nl", type=float, default=0.02, help="single-pass conversion, 1/W")
    e.add_argument("--mc-samples", type=int, default=10_000)
    e.add_argument("--seed", type=int, default=0)
    e.add_argument("--out", required=True, help="output report JSON")

    pl = sub.add_parser("pipeline", help="full analysis from a JSON config")
    pl.add_argument("--config", required=True)
    pl.add_argument("--out", required=True, help="output report JSON")

    g = sub.add_parser("figures", help="emit model-curve CSVs (fig2..fig7)")
    g.add_argument("--out-dir", required=True)

    return p


def _load_json(path) -> dict:
    try:
        return tagio.read_json(path)
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: invalid JSON: {exc}") from exc


def _parse_source(value: str, name: str, keyword: str):
    if value == keyword:
        return value
    try:
        return float(value)
    except ValueError:
        raise ValidationError(f"--{name} must be '{keyword}' or a number, got {value!r}")


def _cmd_simulate(args) -> int:
    cfg = _load_json(args.config)
    sim_block = cfg.get("sim", cfg)
    if args.seed is not None:
        sim_block = dict(sim_block, seed=args.seed)
    sim_cfg = pipeline._sim_from_config(sim_block)
    a, b, truth = simulate(sim_cfg)
    tagio.write_tags([a, b], args.out, truth)
    print(f"wrote {args.out}: {len(a)} + {len(b)} tags over {a.duration} s", file=sys.stderr)
    return 0


def _cmd_correlate(args) -> int:
    streams = tagio.read_tags(args.infile)
    try:
        a = next(s for s in streams if s.channel_id == args.a)
        b = next(s for s in streams if s.channel_id == args.b)
    except StopIteration:
        raise ValidationError(f"channels {args.a}/{args.b} not present in {args.infile}")
    hist = correlate_streams(
        a, b, bin_width=args.bin_ps * 1e-12, num_bins=args.bins,
        tau_center=args.center_ps * 1e-12,
    )
    hist = normalize(hist)
    tagio.write_histogram_csv(hist, args.out)
    print(f"wrote {args.out}: {hist.num_bins} bins, {int(hist.counts.sum())} coincidences",
          file=sys.stderr)
    return 0


def _cmd_fit_comb(args) -> int:
    hist = tagio.read_histogram_csv(args.hist)
    params, fit = fit_comb(hist)
    out = tagio.fit_to_dict(fit, extras={
        "model": "comb",
        "omega_c": params.omega_c,
        "tau_f": params.tau_f,
        "tau0": params.tau0,
        "tau_r": params.tau_r,
        "g2_peak": params.n1 * (params.n2 + 1.0),
    })
    tagio.write_json(out, args.out)
    units = {"n1": "-", "n2": "-", "omega_c": "1/s", "tau0": "s", "tau_r": "s", "tau_f": "s"}
    sys.stdout.write(tagio.fit_report_text(fit, units))
    return 0


def _cmd_fit_rate(args) -> int:
    points = tagio.read_rate_csv(args.data)
    model = "with_offset" if args.offset else "through_origin"
    k, sigma_k, fit = fit_rate_linear(points, args.eta, model=model)
    out = tagio.fit_to_dict(fit, extras={"model": "rate_linear", "k": k, "sigma_k": sigma_k})
    tagio.write_json(out, args.out)
    sys.stdout.write(tagio.fit_report_text(fit, {"k": "1/(W s)", "offset": "1/s"}))
    return 0


def _cmd_estimate(args) -> int:
    params = _load_json(args.params)
    try:
        omega_c = float(params["omega_c"])
        tau_f = float(params["tau_f"])
    except KeyError as exc:
        raise ValidationError(f"{args.params}: missing field {exc}")
    cavity = derive_cavity_rates(omega_c, tau_f, args.t_out, args.e_nl)
    cfg = EstimationConfig(
        formula_mode=args.mode,
        eta_esc_source=_parse_source(args.eta_esc, "eta-esc", "gammas"),
        p_th_source=_parse_source(args.pth, "pth", "losses"),
        f=args.freq_hz,
    )
    est = estimate_squeezing(args.g2zero, cavity, args.k, cfg)
    if args.sigma_g2 > 0:
        inputs = UncertainInputs(
            g2_zero=args.g2zero, gamma1=cavity.gamma1, gamma2=cavity.gamma2,
            length=cavity.length, e_nl=args.e_nl, k=args.k, f=args.freq_hz,
            sigma_g2_zero=args.sigma_g2,
        )
        sigma_r, sigma_db = propagate_uncertainty(
            inputs, cfg, n_samples=args.mc_samples, seed=args.seed
        )
        est = est.with_uncertainty(sigma_r, sigma_db)
    report = {
        "r": est.r,
        "sigma_r": est.sigma_r,
        "squeezing_db": est.squeezing_db,
        "sigma_db": est.sigma_db,
        "v_minus": est.v_minus,
        "v_plus": est.v_plus,
        **est.inputs_echo,
    }
    tagio.write_json(report, args.out)
    sys.stdout.write(
        f"r {est.r:.6g} +/- {est.sigma_r:.2g}\n"
        f"squeezing {est.squeezing_db:.4f} +/- {est.sigma_db:.2g} dB\n"
    )
    return 0


def _cmd_pipeline(args) -> int:
    cfg = _load_json(args.config)
    report = pipeline.run_pipeline(cfg)
    tagio.write_json(report.to_dict(), args.out)
    sys.stdout.write(report.to_text())
    return 0


def _cmd_figures(args) -> int:
    written = figures.emit_all(args.out_dir)
    for path in written:
        print(f"wrote {path}", file=sys.stderr)
    return 0


_COMMANDS = {
    "simulate": _cmd_simulate,
    "correlate": _cmd_correlate,
    "fit-comb": _cmd_fit_comb,
    "fit-rate": _cmd_fit_rate,
    "estimate": _cmd_estimate,
    "pipeline": _cmd_pipeline,
    "figures": _cmd_figures,
}


def cli_main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return _COMMANDS[args.command](args)
    except StageFailure as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1 if isinstance(exc.cause, ValidationError) else 2
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except NumericalError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except SqzError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    raise SystemExit(cli_main())


if __name__ == "__main__":
    main()
