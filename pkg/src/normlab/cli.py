"""Command-line front end: ``normlab <experiment> [--config F] [--out DIR] [--seed N] [--plot]``.

Config files hold flat ``key = value`` lines; ``#`` starts a comment.  Value
types follow each experiment's defaults.  Reals also accept ``pi``
multiples such as ``pi/3`` or ``0.5*pi``.

Exit codes: 0 success, 2 config error, 3 input-data error, 4 numeric failure.
"""
from __future__ import annotations

import argparse
import math
import re
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from ._backend import BACKEND
from .attention_snr import SNR_CSV_HEADER, snr_compare
from .decay import (
    TRACE_CSV_HEADER,
    analytic_decay_trace,
    asymmetry_decay_scan,
    lag_angle_trace,
    matched_balanced_trace,
    monte_carlo_decay,
)
from .errors import ConfigError, InputDataError, NormLabError, NumericError
from .fusion_train import (
    CHECKPOINT_CSV_HEADER,
    TRAIN_CSV_HEADER,
    FusionTaskConfig,
    train_run,
)
from .kinematics import (
    ModalityPair,
    UpdateGeometry,
    apply_polar_update,
    effective_rotation_tangent,
    measured_rotation,
    velocity_asymmetry,
)
from .norm_align import (
    AlignLayer,
    align_backward,
    align_forward,
    compensation_factor,
    embedding_norm_stats,
    init_align_layer,
    target_norm,
)
from .numerics import RNG_ALGORITHM, RngState, central_difference_gradient, read_matf32
from .prenorm_stack import DYNAMICS_CSV_HEADER, StackConfig, run_stack
from .reporting import emit_svg_lineplot, emit_svg_panels, write_csv

EXIT_OK, EXIT_CONFIG, EXIT_INPUT, EXIT_NUMERIC = 0, 2, 3, 4
U64_MAX = 2**64 - 1

_PI_RE = re.compile(r"^\s*(?:([-+]?[0-9.]+(?:[eE][-+]?\d+)?)\s*\*\s*)?pi\s*(?:/\s*([0-9.]+(?:[eE][-+]?\d+)?))?\s*$")


# --- config ---------------------------------------------------------------


def parse_real(text: str) -> float:
    m = _PI_RE.match(text)
    if m:
        num = float(m.group(1)) if m.group(1) else 1.0
        den = float(m.group(2)) if m.group(2) else 1.0
        if den == 0.0:
            raise ValueError("division by zero")
        return num * math.pi / den
    v = float(text)
    if not math.isfinite(v):
        raise ValueError("non-finite")
    return v


def parse_int(text: str) -> int:
    try:
        return int(text.replace("_", ""))
    except ValueError:
        v = float(text)
        if not v.is_integer():
            raise
        return int(v)


def parse_bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def coerce(key: str, text: str, default):
    try:
        if isinstance(default, bool):
            return parse_bool(text)
        if isinstance(default, int):
            return parse_int(text)
        if isinstance(default, float):
            return parse_real(text)
        return text
    except ValueError as exc:
        raise ConfigError(f"bad value for {key!r}: {text!r} ({exc})") from None


def read_config_text(text: str) -> dict[str, str]:
    out: dict[str, str] = {}
    for n, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {n}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        if not key:
            raise ConfigError(f"line {n}: empty key")
        if key in out:
            raise ConfigError(f"line {n}: duplicate key {key!r}")
        out[key] = value
    return out


@dataclass
class ExperimentConfig:
    experiment: str
    params: dict
    seed: int = 0
    out_dir: Path = Path("out")
    plot: bool = False

    def resolved_text(self) -> str:
        lines = [f"experiment = {self.experiment}", f"seed = {self.seed}"]
        lines += [f"{k} = {_fmt_param(v)}" for k, v in sorted(self.params.items())]
        return "\n".join(lines) + "\n"


def _fmt_param(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(float(v))
    return str(v)


def resolve_config(experiment: str, raw: dict[str, str], seed=None, out_dir=None, plot=False):
    if experiment not in EXPERIMENTS:
        raise ConfigError(f"unknown experiment {experiment!r}")
    defaults = EXPERIMENTS[experiment].defaults
    raw = dict(raw)
    cfg_seed = raw.pop("seed", None)
    unknown = sorted(set(raw) - set(defaults))
    if unknown:
        raise ConfigError(f"unknown key(s) for {experiment}: {', '.join(unknown)}")
    params = {k: coerce(k, raw[k], v) if k in raw else v for k, v in defaults.items()}
    if seed is None:
        seed = coerce("seed", cfg_seed, 0) if cfg_seed is not None else 0
    if not 0 <= seed <= U64_MAX:
        raise ConfigError(f"seed must be an unsigned 64-bit integer, got {seed}")
    return ExperimentConfig(experiment, params, int(seed), Path(out_dir or "out"), plot)


# --- experiments ----------------------------------------------------------


def _geometry(p):
    return ModalityPair(p["k"], p["base_norm"]), UpdateGeometry(p["c"], p["phi"])


def run_kinematics(cfg: ExperimentConfig) -> None:
    p = cfg.params
    pair, geom = _geometry(p)
    tv, tt = velocity_asymmetry(pair, geom)
    write_csv(
        cfg.out_dir / "velocity.csv",
        ("modality", "norm", "theta", "tan_theta"),
        [("visual", pair.vis_norm, tv, math.tan(tv)), ("text", pair.txt_norm, tt, math.tan(tt))],
    )
    rng = RngState(cfg.seed)
    rows = []
    for i in range(p["n_cases"]):
        u = rng.uniform(3)
        h_norm = 10.0 ** (-1.0 + 3.0 * float(u[0]))
        g = UpdateGeometry(10.0 * float(u[1]), math.pi * float(u[2]))
        den = h_norm + g.c * math.cos(g.phi)
        if den <= 1e-3 * h_norm:
            continue  # too close to the pole for a meaningful tangent
        h = h_norm * _unit(rng.normal(p["d"]))
        tan_f = effective_rotation_tangent(h_norm, g)
        tan_m = math.tan(measured_rotation(h, apply_polar_update(h, g, rng)))
        rows.append((i, h_norm, g.c, g.phi, tan_f, tan_m, abs(tan_f - tan_m)))
    write_csv(
        cfg.out_dir / "cases.csv",
        ("case", "h_norm", "c", "phi", "tan_formula", "tan_measured", "abs_err"),
        rows,
    )
    if cfg.plot:
        emit_svg_lineplot(
            {"formula vs measured": [(r[4], r[5]) for r in rows if r[4] < 50]},
            cfg.out_dir / "kinematics.svg", "tan(theta)", "formula", "measured",
        )


def _unit(v):
    return v / np.linalg.norm(v)


def run_decay(cfg: ExperimentConfig) -> None:
    p = cfg.params
    pair, geom = _geometry(p)
    trace = monte_carlo_decay(
        pair, geom, p["layers"], p["initial_angle"], p["d"], p["n_samples"], RngState(cfg.seed)
    )
    balanced = matched_balanced_trace(trace)
    trace.attach_lag(lag_angle_trace(trace, balanced))
    write_csv(cfg.out_dir / "decay.csv", TRACE_CSV_HEADER, trace.rows())
    if cfg.plot:
        layers = [r.layer for r in trace.records]
        emit_svg_lineplot(
            {
                "expected": list(zip(layers, trace.expected_cos)),
                "empirical": list(zip(layers, trace.column("empirical_cos"))),
                "balanced": list(zip(layers, balanced.expected_cos)),
            },
            cfg.out_dir / "decay.svg", "cross-modal cosine", "layer", "E cos",
        )


def run_lemma(cfg: ExperimentConfig) -> None:
    p = cfg.params
    try:
        products = [parse_real(s) for s in p["tan_products"].split(",")]
    except ValueError as exc:
        raise ConfigError(f"bad tan_products: {exc}") from None
    rows = []
    for tp in products:
        rows += [(tp, t1, t2, g) for t1, t2, g in asymmetry_decay_scan(tp, p["n_grid"], p["span"])]
    write_csv(cfg.out_dir / "lemma.csv", ("tan_product", "theta1", "theta2", "gamma"), rows)
    if cfg.plot:
        series = {
            f"P={tp:g}": [(math.log10(math.tan(r[1])), r[3]) for r in rows if r[0] == tp]
            for tp in products
        }
        emit_svg_lineplot(series, cfg.out_dir / "lemma.svg", "retention", "log10 tan(theta1)", "gamma")


def run_snr(cfg: ExperimentConfig) -> None:
    p = cfg.params
    pair, geom = _geometry(p)
    imb = analytic_decay_trace(pair, geom, p["layers"], p["initial_angle"])
    bal = matched_balanced_trace(imb)
    imb.attach_lag(lag_angle_trace(imb, bal))
    bal.attach_lag(np.zeros(len(bal)))
    dphi = p["delta_phi"] if p["delta_phi"] >= 0.0 else None
    r_imb, r_bal = snr_compare(
        imb, bal, p["d"], p["n_pairs"], p["r"], RngState(cfg.seed), p["n_keys"], dphi
    )
    write_csv(cfg.out_dir / "snr.csv", SNR_CSV_HEADER, [r_imb.row("imbalanced"), r_bal.row("balanced")])
    write_csv(cfg.out_dir / "decay_imbalanced.csv", TRACE_CSV_HEADER, imb.rows())
    write_csv(cfg.out_dir / "decay_balanced.csv", TRACE_CSV_HEADER, bal.rows())
    if cfg.plot:
        layers = [r.layer for r in imb.records]
        emit_svg_lineplot(
            {"lag angle": list(zip(layers, imb.column("lag_angle")))},
            cfg.out_dir / "lag.svg", "lag angle", "layer", "radians",
        )


def _stack_config(p, seed, k=None) -> StackConfig:
    return StackConfig(
        depth=p["depth"], d=p["d"], n_vis=p["n_vis"], n_txt=p["n_txt"],
        k=p["k"] if k is None else k, base_norm=p["base_norm"], initial_angle=p["initial_angle"],
        norm_kind=p["norm_kind"], arch=p["arch"], sublayer_mode=p["sublayer_mode"],
        c=p["c"], phi=p["phi"], seed=seed,
    )


def run_stack_experiment(cfg: ExperimentConfig) -> None:
    p = cfg.params
    sc = _stack_config(p, cfg.seed)
    align = None
    if p["align"]:
        t = p["align_target"] if p["align_target"] > 0 else sc.base_norm
        align = init_align_layer(t, sc.d)
    trace = run_stack(sc, align)
    write_csv(cfg.out_dir / "dynamics.csv", DYNAMICS_CSV_HEADER, trace.csv_rows())
    if cfg.plot:
        control = run_stack(_stack_config(p, cfg.seed, k=1.0), align)
        panels = []
        for name, label in (("mean_norm", "L2 norm"), ("mean_interlayer_cos", "inter-layer cosine")):
            start = 0 if name == "mean_norm" else 1
            series = {}
            for tag, tr in ((f"k={sc.k:g}", trace), ("k=1", control)):
                for mod in ("visual", "text"):
                    ys = tr.series(mod, name, start)
                    series[f"{mod} {tag}"] = list(zip(range(start, start + len(ys)), ys))
            panels.append((label, series, "layer", label))
        emit_svg_panels(panels, cfg.out_dir / "stack.svg")


def run_align_check(cfg: ExperimentConfig) -> None:
    p = cfg.params
    d = p["d"]
    t = p["t"]
    if p["embedding"]:
        t = target_norm(read_matf32(p["embedding"]), p["threshold"])
    base = init_align_layer(t, d, p["eps"], p["delta"], compensation=False)
    rng = RngState(cfg.seed)
    rows = []
    for i in range(p["n_checks"]):
        g = base.g * (1.0 + 0.1 * rng.normal(d))
        layer = AlignLayer(g, 0.1 * rng.normal(d), base.eps, base.delta, compensation=False)
        x = rng.normal(d) * (1.0 + 4.0 * float(rng.uniform(1)[0]))
        w = rng.normal(d)
        y, cache = align_forward(layer, x)
        grad_off, _, _ = align_backward(layer, cache, w)
        fd = central_difference_gradient(lambda z: float(w @ align_forward(layer, z)[0]), x)
        rel = float(np.max(np.abs(grad_off - fd)) / max(np.max(np.abs(fd)), 1e-300))
        on = AlignLayer(layer.g, layer.beta, layer.eps, layer.delta, compensation=True)
        grad_on, _, _ = align_backward(on, cache, w)
        factor = compensation_factor(layer.g, layer.delta)
        comp_err = float(np.max(np.abs(grad_on - grad_off * factor)))
        rows.append((i, float(np.mean(np.abs(layer.g))), factor, float(np.linalg.norm(y)), rel, comp_err))
    write_csv(
        cfg.out_dir / "align_check.csv",
        ("check", "mu_g", "factor", "output_norm", "fd_rel_err", "compensation_abs_err"),
        rows,
    )
    write_csv(
        cfg.out_dir / "align_init.csv", ("target_norm", "d", "gain"), [(t, d, float(base.g[0]))]
    )


def run_train(cfg: ExperimentConfig) -> int:
    p = cfg.params
    mode = p["align"]
    d = p["d"]
    if mode == "none":
        align = None
    elif mode in ("gwc", "plain", "unit"):
        g0 = 1.0 if mode == "unit" else p["g_init"]
        align = AlignLayer(np.full(d, g0), np.zeros(d), delta=p["delta"], compensation=mode == "gwc")
    else:
        raise ConfigError(f"align must be none, gwc, plain or unit; got {mode!r}")
    tc = FusionTaskConfig(
        d=d, n_keys=p["n_keys"], n_examples=p["n_examples"], vis_scale=p["vis_scale"],
        epochs=p["epochs"], learning_rate=p["learning_rate"], batch_size=p["batch_size"],
        eval_every=p["eval_every"], eval_examples=p["eval_examples"], key_angle=p["key_angle"],
        align=align, seed=cfg.seed,
    )
    report = train_run(tc)
    write_csv(cfg.out_dir / "train.csv", TRAIN_CSV_HEADER, report.rows())
    write_csv(cfg.out_dir / "accuracy.csv", ("step", "accuracy"), zip(report.eval_steps, report.accuracies))
    write_csv(cfg.out_dir / "checkpoints.csv", CHECKPOINT_CSV_HEADER, report.checkpoint_rows())
    write_csv(
        cfg.out_dir / "summary.csv",
        ("final_accuracy", "steps_to_90", "grad_norm_variance", "failed"),
        [(report.final_accuracy, report.steps_to_accuracy(0.9), report.grad_norm_variance(), report.failed)],
    )
    if cfg.plot and report.losses:
        emit_svg_panels(
            [
                ("loss", {"loss": list(enumerate(report.losses))}, "step", "loss"),
                ("encoder gradient", {"|grad E|": list(enumerate(report.encoder_grad_norms))}, "step", "norm"),
            ],
            cfg.out_dir / "train.svg",
        )
    if report.failed:
        print(f"normlab: training failed: {report.failure}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


def run_embed_stats(cfg: ExperimentConfig) -> None:
    p = cfg.params
    if not p["input"]:
        raise ConfigError("embed-stats needs 'input = <path to MATF32 file>'")
    emb = read_matf32(p["input"])
    stats = embedding_norm_stats(emb, p["top_k"])
    try:
        t = target_norm(emb, p["threshold"])
    except NumericError:
        t = math.nan
    write_csv(cfg.out_dir / "topk.csv", ("row", "norm"), stats.top_k)
    write_csv(
        cfg.out_dir / "summary.csv",
        ("n_rows", "mean_norm", "std_norm", "target_norm"),
        [(stats.n_rows, stats.mean_norm, stats.std_norm, t)],
    )


@dataclass(frozen=True)
class Experiment:
    run: object
    defaults: dict


_GEOM = {"k": 30.0, "base_norm": 1.0, "c": 1.0, "phi": math.pi / 2}

EXPERIMENTS = {
    "kinematics": Experiment(run_kinematics, {**_GEOM, "n_cases": 1000, "d": 64}),
    "decay": Experiment(
        run_decay,
        {**_GEOM, "layers": 1, "initial_angle": math.pi / 3, "d": 64, "n_samples": 100000},
    ),
    "lemma": Experiment(run_lemma, {"tan_products": "0.25,1,4", "n_grid": 41, "span": 30.0}),
    "snr": Experiment(
        run_snr,
        {
            **_GEOM, "c": 0.3, "layers": 24, "initial_angle": math.acos(0.9), "d": 64,
            "n_pairs": 1000, "r": 32.0, "n_keys": 64, "delta_phi": -1.0,
        },
    ),
    "stack": Experiment(
        run_stack_experiment,
        {
            "depth": 24, "d": 64, "n_vis": 32, "n_txt": 32, "k": 30.0, "base_norm": 1.0,
            "initial_angle": math.pi / 3, "norm_kind": "layer", "arch": "pre",
            "sublayer_mode": "stylized", "c": 1.0, "phi": math.pi / 2, "align": False,
            "align_target": 0.0,
        },
    ),
    "align-check": Experiment(
        run_align_check,
        {
            "d": 64, "n_checks": 100, "t": 1.0, "eps": 1e-6, "delta": 1e-3, "embedding": "",
            "threshold": 1e-6,
        },
    ),
    "train": Experiment(
        run_train,
        {
            "d": 64, "n_keys": 8, "n_examples": 2048, "vis_scale": 30.0, "epochs": 10,
            "learning_rate": 0.05, "batch_size": 8, "eval_every": 16, "eval_examples": 512,
            "key_angle": math.pi / 4, "align": "gwc", "g_init": 0.01, "delta": 1e-3,
        },
    ),
    "embed-stats": Experiment(run_embed_stats, {"input": "", "top_k": 10, "threshold": 1e-6}),
}


# --- entry point ----------------------------------------------------------


def write_meta(cfg: ExperimentConfig) -> None:
    (cfg.out_dir / "config.resolved").write_text(cfg.resolved_text())
    meta = [
        f"experiment = {cfg.experiment}",
        f"seed = {cfg.seed}",
        f"rng_algorithm = {RNG_ALGORITHM}",
        f"version = {__version__}",
        f"backend = {BACKEND}",
    ]
    (cfg.out_dir / "meta.txt").write_text("\n".join(meta) + "\n")


def run_experiment(cfg: ExperimentConfig) -> int:
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    write_meta(cfg)
    status = EXPERIMENTS[cfg.experiment].run(cfg)
    return EXIT_OK if status is None else status


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="normlab", description="Norm-disparity numerical laboratory.")
    ap.add_argument("--version", action="version", version=f"normlab {__version__}")
    sub = ap.add_subparsers(dest="experiment", required=True, metavar="experiment")
    for name in EXPERIMENTS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", type=Path, help="key = value file")
        sp.add_argument("--out", type=Path, default=Path("out") / name, help="output directory")
        sp.add_argument("--seed", type=parse_int, help="unsigned 64-bit seed")
        sp.add_argument("--plot", action="store_true", help="also write SVG plots")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        raw = {}
        if args.config is not None:
            try:
                raw = read_config_text(args.config.read_text())
            except OSError as exc:
                raise ConfigError(f"cannot read config: {exc}") from None
        cfg = resolve_config(args.experiment, raw, args.seed, args.out, args.plot)
        return run_experiment(cfg)
    except NormLabError as exc:
        if isinstance(exc, ConfigError):
            code = EXIT_CONFIG
        elif isinstance(exc, InputDataError):
            code = EXIT_INPUT
        else:
            code = EXIT_NUMERIC
        print(f"normlab {args.experiment}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return code


if __name__ == "__main__":
    sys.exit(main())
