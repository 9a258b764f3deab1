"""Command-line interface: single runs, noise-level sweeps, synthetic data,
oracle self-checks, and coefficient dumps.

All commands read one YAML config file (nested sections for input, noise,
representation, optimizer, separation, sweep) so that a sweep is just a
config diff away from a single run. Every random quantity derives from the
single config seed; re-running a command with the same config reproduces
all numeric artifacts byte for byte.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import math
import os
import sys
import numpy as np
import yaml

from . import metrics, noise as noise_mod, oracles, synthdata, wph
from .analytic import pointwise_sqrt_threshold
from .fields import Field2D, read_field, read_png, write_field, write_png
from .representations import PowerSpectrumRepresentation, WphRepresentation
from .separation import LbfgsOptions, SeparationConfig, delouis_separate, diffusive_separate, vanilla_separate
from .wavelets import build_bank
from .wph import ClassMask

EXIT_CONFIG = 2
EXIT_NUMERIC = 3

ALGORITHMS = ("vanilla", "diffusive", "perturbative", "delouis", "analytic-oracle")


class ConfigError(Exception):
    pass


def derived_seed(*parts):
    return int(np.random.SeedSequence([int(p) for p in parts]).generate_state(1)[0])


# ---------------------------------------------------------------------------
# Configuration


def load_config(path):
    if not os.path.exists(path):
        raise ConfigError(f"config file not found: {path}")
    with open(path) as fh:
        data = yaml.safe_load(fh) or {}
    if not isinstance(data, dict):
        raise ConfigError("config root must be a mapping")
    return data


def _section(cfg, name):
    value = cfg.get(name, {}) or {}
    if not isinstance(value, dict):
        raise ConfigError(f"section {name!r} must be a mapping")
    return value


def resolve_input(cfg):
    """Clean signal from the config: a synthetic texture or a file on disk."""
    section = _section(cfg, "input")
    if "path" in section:
        path = section["path"]
        if not os.path.exists(path):
            raise ConfigError(f"input path does not exist: {path}")
        field = read_field(path) if path.endswith(".ssf") else read_png(path)
        arr = field.values.real
        std = arr.std()
        if std == 0:
            raise ConfigError("input image is constant")
        return Field2D((arr - arr.mean()) / std)
    tex = section.get("texture", {"kind": "lognormal_field", "shape": [64, 64]})
    try:
        spec = synthdata.TextureSpec(
            kind=tex.get("kind", "lognormal_field"),
            shape=tuple(tex.get("shape", (64, 64))),
            spectral_slope=float(tex.get("spectral_slope", -1.5)),
            seed=int(tex.get("seed", 1)),
        )
    except (ValueError, TypeError, IndexError) as exc:
        raise ConfigError(f"bad texture spec: {exc}") from None
    return synthdata.generate(spec)


def build_noise(cfg, shape, reference_std, sigma=None):
    section = _section(cfg, "noise")
    try:
        return noise_mod.NoiseModel(
            kind=section.get("kind", "white"),
            sigma=float(sigma if sigma is not None else section.get("sigma", 1.0)),
            shape=shape,
            reference_std=reference_std,
        )
    except ValueError as exc:
        raise ConfigError(f"bad noise section: {exc}") from None


def default_scales(shape):
    return max(1, min(7, int(math.floor(math.log2(min(shape)))) - 1))


def _class_mask(section, algorithm):
    classes = section.get("classes")
    if classes is None:
        classes = ("s11", "s01") if algorithm == "perturbative" else wph.CLASS_NAMES
    try:
        return ClassMask.from_names(classes)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def build_bank_from_config(cfg, shape):
    section = _section(cfg, "representation")
    J = section.get("scales") or default_scales(shape)
    L = section.get("orientations", 4)
    try:
        return build_bank(shape[0], shape[1], int(J), int(L))
    except ValueError as exc:
        raise ConfigError(f"bad filter bank geometry: {exc}") from None


def build_representation(cfg, y, bank, algorithm):
    section = _section(cfg, "representation")
    name = section.get("name", "wph")
    if name == "power_spectrum":
        return PowerSpectrumRepresentation(bank)
    if name != "wph":
        raise ConfigError(f"unknown representation {name!r}")
    mask = _class_mask(section, algorithm)
    if section.get("normalize", True):
        return WphRepresentation.for_observation(y, bank, mask)
    return WphRepresentation(bank, mask)


def build_separation_config(cfg, algorithm, sigma, seed):
    section = _section(cfg, "separation")
    opt = _section(cfg, "optimizer")
    options = LbfgsOptions(
        history=int(opt.get("history", 10)),
        max_line_evals=int(opt.get("max_line_evals", 25)),
        max_step=opt.get("max_step"),
    )
    default_T = 10 if algorithm == "perturbative" else 30
    T = int(section.get("T") or default_T)
    Q = int(section.get("Q") or 100)
    if algorithm in ("diffusive", "perturbative", "delouis"):
        P = int(section.get("P") or max(1, math.floor(10.0 * sigma)))
    else:
        P = 1
    loss_kind = "perturbative" if algorithm == "perturbative" else "monte_carlo"
    try:
        return SeparationConfig(Q=Q, T=T, P=P, optimizer=options, loss_kind=loss_kind, seed=seed)
    except ValueError as exc:
        raise ConfigError(f"bad separation section: {exc}") from None


# ---------------------------------------------------------------------------
# One (sigma, realization) cell: corrupt, separate, evaluate


def run_cell(cfg, x0, sigma, sigma_index, realization):
    algorithm = cfg.get("algorithm", "vanilla")
    if algorithm not in ALGORITHMS:
        raise ConfigError(f"unknown algorithm {algorithm!r}; choose from {ALGORITHMS}")
    seed = int(cfg.get("seed", 0))
    arr0 = x0.values
    model = build_noise(cfg, arr0.shape, float(arr0.std()), sigma=sigma)
    y = Field2D(arr0 + noise_mod.sample(model, derived_seed(seed, 101, sigma_index, realization)).values)

    sep_seed = derived_seed(seed, 202, sigma_index, realization)
    sep_cfg = build_separation_config(cfg, algorithm, model.sigma, sep_seed)

    if algorithm == "analytic-oracle":
        xhat = Field2D(pointwise_sqrt_threshold(y, model.amplitude))
        trace = None
        rep = None
    else:
        rep = build_representation(cfg, y, build_bank_from_config(cfg, arr0.shape), algorithm)
        if algorithm == "vanilla":
            xhat, trace = vanilla_separate(y, model, rep, sep_cfg)
        elif algorithm in ("diffusive", "perturbative"):
            xhat, trace = diffusive_separate(y, model, rep, sep_cfg)
        else:
            xhat, trace = delouis_separate(y, model, rep, sep_cfg)

    eval_bank = rep.bank if isinstance(rep, WphRepresentation) else build_bank_from_config(cfg, arr0.shape)
    eval_mask = rep.mask if isinstance(rep, WphRepresentation) else ClassMask()
    ref = wph.normalization_from(y.values, eval_bank)
    coeffs = {
        label: wph.normalize(wph.wph_compute(f, eval_bank, eval_mask), ref, eval_bank)
        for label, f in (("clean", arr0), ("noisy", y.values), ("denoised", xhat.values))
    }

    def report_for(label, candidate_field):
        rel = {}
        for name in eval_mask:
            try:
                rel[name] = metrics.class_relative_error(coeffs[label], coeffs["clean"], name)
            except ZeroDivisionError:
                rel[name] = math.nan
        rmse = metrics.representation_rmse(coeffs[label].vector(), coeffs["clean"].vector())
        return metrics.EvalReport(
            algorithm="noisy" if label == "noisy" else algorithm,
            noise_kind=model.kind,
            sigma=model.sigma,
            seed=seed,
            realization=realization,
            psnr_db=metrics.psnr(candidate_field, x0),
            rmse_repr=rmse,
            rel_err_by_class=rel,
        )

    reports = [report_for("noisy", y), report_for("denoised", xhat)]
    return xhat, y, trace, reports


# ---------------------------------------------------------------------------
# Commands


def _outdir(cfg, args):
    out = args.out or cfg.get("output_dir", "statsep-out")
    os.makedirs(out, exist_ok=True)
    return out


def cmd_synth(cfg, args):
    out = _outdir(cfg, args)
    x0 = resolve_input(cfg)
    write_field(x0, os.path.join(out, "texture.ssf"))
    write_png(x0, os.path.join(out, "texture.png"))
    print(f"wrote {out}/texture.ssf and texture.png ({x0.height}x{x0.width})")
    return 0


def cmd_denoise(cfg, args):
    out = _outdir(cfg, args)
    x0 = resolve_input(cfg)
    xhat, y, trace, reports = run_cell(cfg, x0, None, 0, int(cfg.get("realization", 0)))
    if trace is not None and trace.aborted:
        print(f"numerical abort: {trace.abort_reason}", file=sys.stderr)
        trace.to_csv(os.path.join(out, "trace.csv"))
        return EXIT_NUMERIC
    write_field(x0, os.path.join(out, "clean.ssf"))
    write_field(y, os.path.join(out, "noisy.ssf"))
    write_png(y, os.path.join(out, "noisy.png"))
    write_field(xhat, os.path.join(out, "denoised.ssf"))
    write_png(xhat, os.path.join(out, "denoised.png"))
    if trace is not None:
        trace.to_csv(os.path.join(out, "trace.csv"))
    for report in reports:
        metrics.append_report(report, os.path.join(out, "eval.csv"))
    noisy_db, denoised_db = reports[0].psnr_db, reports[1].psnr_db
    print(f"PSNR: noisy {noisy_db:.2f} dB -> denoised {denoised_db:.2f} dB")
    return 0


def _sweep_cell_worker(payload):
    cfg, sigma, sigma_index, realization = payload
    x0 = resolve_input(cfg)
    _, _, trace, reports = run_cell(cfg, x0, sigma, sigma_index, realization)
    if trace is not None and trace.aborted:
        raise RuntimeError(trace.abort_reason)
    return [r for r in reports]


def _nan_reports(cfg, sigma, realization):
    base = dict(
        noise_kind=_section(cfg, "noise").get("kind", "white"),
        sigma=sigma,
        seed=int(cfg.get("seed", 0)),
        realization=realization,
    )
    return [
        metrics.EvalReport(algorithm="noisy", **base),
        metrics.EvalReport(algorithm=cfg.get("algorithm", "vanilla"), **base),
    ]


def cmd_sweep(cfg, args):
    out = _outdir(cfg, args)
    section = _section(cfg, "sweep")
    start = float(section.get("sigma_start", 0.1))
    stop = float(section.get("sigma_stop", 2.14))
    count = int(section.get("sigma_count", 10))
    realizations = int(section.get("realizations", 5))
    sigmas = np.geomspace(start, stop, count)
    resolve_input(cfg)  # validate the input once up front

    cells = [
        (dict(cfg), float(sigmas[i]), i, r) for i in range(count) for r in range(realizations)
    ]
    jobs = int(os.environ.get("STATSEP_THREADS", args.jobs or 1))
    rows = []
    if jobs <= 1:
        results = []
        for payload in cells:
            try:
                results.append(_sweep_cell_worker(payload))
            except Exception as exc:  # failed cells become NaN rows
                print(f"cell sigma={payload[1]:.3g} r={payload[3]} failed: {exc}", file=sys.stderr)
                results.append(_nan_reports(cfg, payload[1], payload[3]))
    else:
        results = [None] * len(cells)
        with concurrent.futures.ProcessPoolExecutor(max_workers=jobs) as pool:
            futures = {pool.submit(_sweep_cell_worker, payload): k for k, payload in enumerate(cells)}
            for fut in concurrent.futures.as_completed(futures):
                k = futures[fut]
                try:
                    results[k] = fut.result()
                except Exception as exc:
                    payload = cells[k]
                    print(f"cell sigma={payload[1]:.3g} r={payload[3]} failed: {exc}", file=sys.stderr)
                    results[k] = _nan_reports(cfg, payload[1], payload[3])
    csv_path = os.path.join(out, "sweep.csv")
    if os.path.exists(csv_path):
        os.remove(csv_path)
    for reports in results:
        for report in reports:
            metrics.append_report(report, csv_path)
            rows.append(report)
    _write_sweep_plots(rows, out)
    print(f"wrote {csv_path} and plots ({len(rows)} rows)")
    return 0


def _write_sweep_plots(rows, out):
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    algorithms = sorted({r.algorithm for r in rows})

    def series(algorithm, getter):
        by_sigma = {}
        for r in rows:
            if r.algorithm == algorithm:
                by_sigma.setdefault(r.sigma, []).append(getter(r))
        sig = sorted(by_sigma)
        vals = [np.nanmean(by_sigma[s]) for s in sig]
        return np.array(sig), np.array(vals)

    fig, ax = plt.subplots(figsize=(5, 3.6))
    for algorithm in algorithms:
        sig, vals = series(algorithm, lambda r: r.psnr_db)
        ax.plot(sig, vals, marker="o", label=algorithm)
    ax.set_xscale("log")
    ax.set_xlabel(r"noise level $\sigma$")
    ax.set_ylabel("PSNR [dB]")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(os.path.join(out, "psnr_vs_sigma.png"), dpi=150)
    plt.close(fig)

    classes = [name for name in wph.CLASS_NAMES if any(name in r.rel_err_by_class for r in rows)]
    if classes:
        fig, axes = plt.subplots(1, len(classes), figsize=(3.2 * len(classes), 3.2), squeeze=False)
        for ax, name in zip(axes[0], classes):
            for algorithm in algorithms:
                sig, vals = series(algorithm, lambda r: r.rel_err_by_class.get(name, math.nan))
                ax.plot(sig, vals, marker="o", label=algorithm)
            ax.set_xscale("log")
            ax.set_yscale("log")
            ax.set_xlabel(r"$\sigma$")
            ax.set_title(name)
        axes[0][0].set_ylabel("relative error")
        axes[0][-1].legend(fontsize=8)
        fig.tight_layout()
        fig.savefig(os.path.join(out, "rel_err_vs_sigma.png"), dpi=150)
        plt.close(fig)


def cmd_oracle_check(cfg, args):
    threshold = 2.0 if args.threshold_bug else 3.0
    results = oracles.run_all(q_scale=args.q_scale, threshold_constant=threshold)
    width = max(len(r.name) for r in results)
    failures = 0
    for r in results:
        status = "PASS" if r.passed else "FAIL"
        print(f"[{status}] {r.name:<{width}}  {r.runtime_s:6.1f}s  {r.detail}")
        failures += not r.passed
    return 1 if failures else 0


def cmd_wph_dump(cfg, args):
    out = _outdir(cfg, args)
    x0 = resolve_input(cfg)
    bank = build_bank_from_config(cfg, x0.shape)
    mask = _class_mask(_section(cfg, "representation"), cfg.get("algorithm", "vanilla"))
    coeffs = wph.wph_compute(x0, bank, mask)
    if args.normalized:
        coeffs = wph.normalize(coeffs, wph.normalization_from(x0.values, bank), bank)
    path = os.path.join(out, "wph_coefficients.csv")
    wph.export_csv(coeffs, bank, path)
    print(f"wrote {path} ({coeffs.size} coefficients)")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(prog="statsep", description=__doc__)
    parser.add_argument("--config", default=None, help="YAML config file")
    parser.add_argument("--seed", type=int, default=None, help="override the config seed")
    parser.add_argument("--jobs", type=int, default=None, help="parallel sweep cells (env STATSEP_THREADS overrides)")
    parser.add_argument("--out", default=None, help="output directory (overrides config output_dir)")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("synth", help="generate the configured synthetic texture")
    sub.add_parser("denoise", help="run the configured separation once")
    sub.add_parser("sweep", help="sweep noise levels x realizations; emit CSV and plots")
    oc = sub.add_parser("oracle-check", help="run the analytic-vs-numerical self checks")
    oc.add_argument(
        "--q-scale",
        type=float,
        default=1.0,
        help="scale Monte Carlo sizes; tolerances assume 1.0, so reduced runs may fail",
    )
    oc.add_argument("--threshold-bug", action="store_true", help=argparse.SUPPRESS)  # negative-control hook
    wd = sub.add_parser("wph-dump", help="write the statistics of the configured input as CSV")
    wd.add_argument("--normalized", action="store_true", help="apply the self-normalization before dumping")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config) if args.config else {}
        if args.seed is not None:
            cfg["seed"] = args.seed
        handler = {
            "synth": cmd_synth,
            "denoise": cmd_denoise,
            "sweep": cmd_sweep,
            "oracle-check": cmd_oracle_check,
            "wph-dump": cmd_wph_dump,
        }[args.command]
        return handler(cfg, args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except wph.NearZeroModulusError as exc:
        print(f"numerical abort: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
