"""Command-line pipeline: ingest, fit, predict, evaluate, synth."""
from __future__ import annotations

import argparse
import csv
import hashlib
import math
import os
import sys
from pathlib import Path

import numpy as np
from scipy import stats as scipy_stats

from . import cohort, corpus, creativity, evaluate, forecast, synth
from .config import RunConfig, parse_config
from .errors import ConfigError, PubforgeError

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_IO = 2


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def _write_manifest(out_dir: Path, command: str, inputs, outputs) -> None:
    """Record content hashes of every input and output of a command.

    Paths are stored by basename so reruns into different directories
    produce identical manifests.
    """
    lines = []
    for p in inputs:
        lines.append(f"input\t{_sha256(p)}\t{Path(p).name}")
    for p in outputs:
        lines.append(f"output\t{_sha256(p)}\t{Path(p).name}")
    with open(out_dir / f"{command}.manifest", "w", encoding="utf-8", newline="\n") as fh:
        for line in sorted(lines):
            fh.write(line + "\n")


def _load_corpus(cfg: RunConfig):
    if not cfg.corpus:
        raise ConfigError("no corpus paths configured (key: corpus)")
    stats = corpus.IngestStats()
    records = []
    entities = corpus.load_entity_table(cfg.entity_table) if cfg.entity_table else None
    for path in cfg.corpus:
        with open(path, "rb") as fh:
            if cfg.format == "xml":
                records.extend(corpus.parse_dblp_xml(
                    fh, entities=entities, year_min=cfg.year_min,
                    year_max=cfg.year_max, stats=stats,
                ))
            elif cfg.format == "tabular":
                records.extend(corpus.parse_tabular(
                    fh, delimiter=cfg.delimiter, year_min=cfg.year_min,
                    year_max=cfg.year_max, stats=stats,
                ))
            else:
                raise ConfigError(f"unknown corpus format {cfg.format!r}")
    return records, stats


def _histories_path(cfg: RunConfig, out_dir: Path) -> str:
    return cfg.histories or str(out_dir / "histories.csv")


def cmd_ingest(cfg: RunConfig, out_dir: Path) -> int:
    records, stats = _load_corpus(cfg)
    histories = corpus.build_histories(records)
    out_path = out_dir / "histories.csv"
    corpus.write_histories(histories, out_path)
    _write_manifest(out_dir, "ingest", cfg.corpus, [out_path])
    print(f"ingest: {stats.emitted} authorship records, "
          f"{stats.skipped} skipped, {len(histories)} authors")
    return EXIT_OK


def _training_split(cfg: RunConfig, histories):
    return corpus.make_split(
        histories, "training",
        history_window=(cfg.T0, cfg.T1),
        response_window=(cfg.T1, cfg.t_L),
    )


def _test_split(cfg: RunConfig, histories):
    membership = None
    if cfg.test_membership == "window":
        membership = (cfg.t_X, cfg.t_Y)
    elif cfg.test_membership != "year":
        raise ConfigError(f"unknown test_membership {cfg.test_membership!r}")
    return corpus.make_split(
        histories, "test",
        history_window=(cfg.T0, cfg.T1),
        response_window=(cfg.t_X, cfg.t_Y),
        membership_years=membership,
    )


def cmd_fit(cfg: RunConfig, out_dir: Path) -> int:
    cfg.validate_windows()
    histories = corpus.read_histories(_histories_path(cfg, out_dir))
    split = _training_split(cfg, histories)
    matrix = cohort.productivity_matrix(split, histories, cfg.I)
    model = creativity.build_model(
        matrix, J=cfg.horizon,
        significance_level=cfg.significance_level,
        mode=cfg.fit_mode, min_cells=cfg.min_cells, i1_cap=cfg.I1_cap,
    )
    matrix_path = out_dir / "matrix.csv"
    model_path = out_dir / "model.csv"
    cohort.write_matrix(matrix, matrix_path)
    creativity.write_model(model, model_path)
    _write_manifest(out_dir, "fit", [_histories_path(cfg, out_dir)],
                    [matrix_path, model_path])
    print(f"fit: {len(split.authors)} training researchers, I_1={model.I_1}, "
          f"mode={cfg.fit_mode}")
    return EXIT_OK


def cmd_predict(cfg: RunConfig, out_dir: Path) -> int:
    cfg.validate_windows(need_test=True)
    histories = corpus.read_histories(_histories_path(cfg, out_dir))
    model_path = cfg.model or str(out_dir / "model.csv")
    model = creativity.read_model(model_path)
    split = _test_split(cfg, histories)
    ensemble = forecast.simulate_group(
        model, split, histories, R=cfg.replicates, seed=cfg.seed,
    )
    ens_path = out_dir / "ensemble.csv"
    forecast.write_ensemble(ensemble, ens_path)
    outputs = [ens_path]
    if cfg.dump_replicates:
        rep_path = out_dir / "replicates.csv"
        forecast.write_replicates(ensemble, rep_path)
        outputs.append(rep_path)
    _write_manifest(out_dir, "predict",
                    [_histories_path(cfg, out_dir), model_path], outputs)
    total = len(ensemble.trajectories) + len(ensemble.excluded)
    coverage = len(ensemble.trajectories) / total if total else 0.0
    print(f"predict: {len(ensemble.trajectories)}/{total} researchers "
          f"({coverage:.2%} coverage), {len(ensemble.excluded)} excluded, "
          f"clamp tally {ensemble.clamp_tally}")
    return EXIT_OK


def _read_ensemble_files(cfg: RunConfig, out_dir: Path, histories, split, model):
    """Rebuild a ForecastEnsemble from predict's outputs. Uses the full
    replicate dump when present, otherwise the per-year means."""
    rep_path = Path(cfg.replicates_file or out_dir / "replicates.csv")
    ens_path = Path(cfg.ensemble or out_dir / "ensemble.csv")
    t0_hist = split.history_window[0]
    trajectories: dict[str, np.ndarray] = {}
    years: tuple[int, ...] = ()
    if rep_path.exists():
        data: dict[str, dict[int, dict[int, int]]] = {}
        with open(rep_path, encoding="utf-8") as fh:
            reader = csv.reader(fh)
            next(reader)
            for aid, rep, year, h in reader:
                data.setdefault(aid, {}).setdefault(int(rep), {})[int(year)] = int(h)
        for aid, reps in data.items():
            years = tuple(sorted(reps[0]))
            trajectories[aid] = np.array(
                [[reps[r][y] for y in years] for r in sorted(reps)]
            )
    else:
        data_m: dict[str, dict[int, float]] = {}
        with open(ens_path, encoding="utf-8") as fh:
            reader = csv.reader(fh)
            next(reader)
            for aid, year, mean, _q05, _q95 in reader:
                data_m.setdefault(aid, {})[int(year)] = float(mean)
        for aid, by_year in data_m.items():
            years = tuple(sorted(by_year))
            trajectories[aid] = np.array([[by_year[y] for y in years]])
    start_counts = {}
    excluded = {}
    for aid in split.authors:
        h0 = cohort.cumulative_count(histories[aid], cfg.t_X, t0_hist)
        if aid in trajectories:
            start_counts[aid] = h0
        else:
            excluded[aid] = h0
    return forecast.ForecastEnsemble(
        years=years, start_counts=start_counts, trajectories=trajectories,
        seed=cfg.seed, replicates=next(iter(trajectories.values())).shape[0]
        if trajectories else 0, excluded=excluded,
    )


def _ks_report(cfg: RunConfig, histories, train_split, model):
    """KS Poisson tests on the training researchers' next-year counts,
    grouped per the configured replication rule."""
    t0_hist = cfg.T0
    rows = []
    rng = forecast.derive_rng(cfg.seed, "ks_report")
    total_by_year = {}
    for y in range(cfg.T1, cfg.t_L):
        active = [a for a in train_split.authors
                  if histories[a].counts_by_year.get(y, 0) > 0]
        total_by_year[y] = len(active)
        if cfg.ks_grouping == "pooled_le10":
            groups = {"le10": [
                a for a in active
                if 1 <= cohort.cumulative_count(histories[a], y, t0_hist) <= cfg.ks_max_history
            ]}
        elif cfg.ks_grouping == "per_cohort":
            groups = {}
            for a in active:
                i = cohort.cumulative_count(histories[a], y, t0_hist)
                if 1 <= i <= model.I_1:
                    groups.setdefault(str(i), []).append(a)
        else:
            raise ConfigError(f"unknown ks_grouping {cfg.ks_grouping!r}")
        for label, members in sorted(groups.items()):
            if len(members) < 5:
                continue
            counts = [histories[a].counts_by_year.get(y + 1, 0) for a in members]
            d, p = evaluate.ks_poisson_test(counts, n_boot=cfg.n_boot, rng=rng)
            q = len(members) / total_by_year[y] if total_by_year[y] else 0.0
            rows.append((label, y, len(members), q, d, p))
    return rows


def cmd_evaluate(cfg: RunConfig, out_dir: Path, plots: bool = False) -> int:
    cfg.validate_windows(need_test=True)
    histories = corpus.read_histories(_histories_path(cfg, out_dir))
    model_path = cfg.model or str(out_dir / "model.csv")
    model = creativity.read_model(model_path)
    train_split = _training_split(cfg, histories)
    test_split = _test_split(cfg, histories)
    ensemble = _read_ensemble_files(cfg, out_dir, histories, test_split, model)
    rng = forecast.derive_rng(cfg.seed, "evaluate")
    report = evaluate.EvaluationReport()
    t0_hist = cfg.T0
    outputs = []

    # KS Poisson tests on training data (distributional premise check)
    ks_rows = _ks_report(cfg, histories, train_split, model)
    path = out_dir / "fig1_ks.csv"
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("grouping,y,n,q,D,p\n")
        for label, y, n, q, d, p in ks_rows:
            fh.write(f"{label},{y},{n},{q!r},{d!r},{p!r}\n")
            report.ks_results.append(evaluate.KsResult(
                grouping=f"{label}@{y}", statistic=d, p_value=p,
                method="parametric_bootstrap", n=n,
            ))
    outputs.append(path)

    # per-cohort trend fits with Wald confidence bands
    z = float(scipy_stats.norm.ppf(0.5 + cfg.ci_level / 2))
    path = out_dir / "fig4_trend.csv"
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("i,alpha,beta,alpha_se,beta_se,beta_ci_lo,beta_ci_hi,p_value,mode,ci_level\n")
        for i in sorted(model.fits):
            f = model.fits[i]
            lo = f.beta - z * f.beta_se if math.isfinite(f.beta_se) else float("nan")
            hi = f.beta + z * f.beta_se if math.isfinite(f.beta_se) else float("nan")
            fh.write(f"{i},{f.alpha!r},{f.beta!r},{f.alpha_se!r},{f.beta_se!r},"
                     f"{lo!r},{hi!r},{f.p_value!r},{f.mode},{cfg.ci_level!r}\n")
    outputs.append(path)

    # trend-fit correlations per year and cohort-level trend tables
    path_s = out_dir / "fig5_trend_fit.csv"
    included = sorted(ensemble.start_counts)
    with open(path_s, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("y,s1,s2,n\n")
        for k, y in enumerate(ensemble.years):
            actual = [cohort.cumulative_count(histories[a], y, t0_hist)
                      for a in included]
            predicted = [float(ensemble.mean_trajectory(a)[k]) for a in included]
            s1, s2 = evaluate.trend_correlations(predicted, actual)
            report.s_by_year.append((y, s1, s2))
            fh.write(f"{y},{s1!r},{s2!r},{len(included)}\n")
    outputs.append(path_s)
    report.trend_rows = evaluate.trend_tables(ensemble, histories, t0_hist)
    path = out_dir / "fig5_tables.csv"
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("i,y,n_iy,m_iy,size\n")
        for i, y, n_iy, m_iy, size in report.trend_rows:
            fh.write(f"{i},{y},{n_iy!r},{m_iy!r},{size}\n")
    outputs.append(path)

    # predicted vs ground-truth count distributions
    path = out_dir / "fig6_dist.csv"
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("y,n,D,p,source\n")
        for k, y in enumerate(ensemble.years):
            actual = [cohort.cumulative_count(histories[a], y, t0_hist)
                      for a in included]
            if cfg.dist_source == "replicate0":
                predicted = [int(ensemble.trajectories[a][0, k]) for a in included]
            elif cfg.dist_source == "mean":
                predicted = [int(round(float(ensemble.mean_trajectory(a)[k])))
                             for a in included]
            else:
                raise ConfigError(f"unknown dist_source {cfg.dist_source!r}")
            d, p = evaluate.ks_two_sample(actual, predicted, n_boot=cfg.n_boot, rng=rng)
            report.ks_results.append(evaluate.KsResult(
                grouping=f"dist@{y}", statistic=d, p_value=p,
                method="permutation", n=len(actual),
            ))
            fh.write(f"{y},{len(actual)},{d!r},{p!r},{cfg.dist_source}\n")
    outputs.append(path)

    # autocorrelation profiles of cumulative series
    cohort_of = dict(ensemble.start_counts)
    acf_grid = tuple(range(model.t_grid[0], cfg.t_Y + 1))
    acf_rows, q_stats, skipped = evaluate.acf_profile(
        histories, cohort_of, acf_grid, t0_hist, cfg.acf_max_lag,
    )
    report.acf_profiles = acf_rows
    report.q_stats = q_stats
    path = out_dir / "fig9_acf.csv"
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("i,q,lag,mean_r\n")
        for i, q, lag, r in acf_rows:
            fh.write(f"{i},{q!r},{lag},{r!r}\n")
    outputs.append(path)

    # career-curve baseline on mean annual output per cohort
    path_series = out_dir / "fig8_series.csv"
    path_fit = out_dir / "fig8_simonton.csv"
    cohorts: dict[int, list[str]] = {}
    for aid, h0 in ensemble.start_counts.items():
        cohorts.setdefault(h0, []).append(aid)
    with open(path_series, "w", encoding="utf-8", newline="\n") as fh_s, \
            open(path_fit, "w", encoding="utf-8", newline="\n") as fh_f:
        fh_s.write("i,year,mean_annual\n")
        fh_f.write("i,a,b,c,m,residual,n_points\n")
        for i in sorted(cohorts):
            members = cohorts[i]
            series = []
            for y in ensemble.years:
                mean_annual = float(np.mean([
                    histories[a].counts_by_year.get(y, 0) for a in members
                ]))
                series.append(mean_annual)
                fh_s.write(f"{i},{y},{mean_annual!r}\n")
            if len(series) >= 4 and any(v > 0 for v in series):
                a, b, c, rss = evaluate.fit_simonton(series)
                m = evaluate.simonton_max_output(a, b, c) if c > 0 else float("nan")
                report.simonton_fits.append((i, a, b, c, m, rss))
                fh_f.write(f"{i},{a!r},{b!r},{c!r},{m!r},{rss!r},{len(series)}\n")
    outputs.extend([path_series, path_fit])

    if plots:
        outputs.extend(_write_plots(out_dir, report, ensemble))

    inputs = [_histories_path(cfg, out_dir), model_path]
    ens_used = Path(cfg.replicates_file or out_dir / "replicates.csv")
    if not ens_used.exists():
        ens_used = Path(cfg.ensemble or out_dir / "ensemble.csv")
    inputs.append(str(ens_used))
    _write_manifest(out_dir, "evaluate", inputs, outputs)
    print(f"evaluate: {len(report.ks_results)} KS tests, "
          f"{len(report.s_by_year)} trend years, "
          f"{len(report.simonton_fits)} career-curve fits")
    return EXIT_OK


def _write_plots(out_dir: Path, report, ensemble):
    import matplotlib
    matplotlib.use("svg")
    import matplotlib.pyplot as plt

    written = []
    if report.s_by_year:
        fig, ax = plt.subplots(figsize=(5, 3))
        years = [row[0] for row in report.s_by_year]
        ax.plot(years, [row[1] for row in report.s_by_year], "o-", label="s1")
        ax.plot(years, [row[2] for row in report.s_by_year], "s-", label="s2")
        ax.set_xlabel("year")
        ax.set_ylabel("correlation")
        ax.legend()
        fig.tight_layout()
        path = out_dir / "fig5_trend_fit.svg"
        fig.savefig(path, metadata={"Date": None})
        plt.close(fig)
        written.append(path)
    if report.acf_profiles:
        fig, ax = plt.subplots(figsize=(5, 3))
        by_cohort: dict[int, list] = {}
        for i, _q, lag, r in report.acf_profiles:
            by_cohort.setdefault(i, []).append((lag, r))
        for i, pts in sorted(by_cohort.items()):
            pts.sort()
            ax.plot([p[0] for p in pts], [p[1] for p in pts], "o-", label=f"i={i}")
        ax.set_xlabel("lag")
        ax.set_ylabel("mean autocorrelation")
        ax.legend(fontsize=6)
        fig.tight_layout()
        path = out_dir / "fig9_acf.svg"
        fig.savefig(path, metadata={"Date": None})
        plt.close(fig)
        written.append(path)
    return written


def cmd_synth(spec_path, out_dir: Path, seed: int | None = None) -> int:
    spec = synth.read_generator_spec(spec_path)
    if seed is not None:
        spec = synth.GeneratorSpec(
            true_alpha=spec.true_alpha, true_beta=spec.true_beta,
            t_grid=spec.t_grid, n_authors=spec.n_authors,
            entry_year_weights=spec.entry_year_weights, seed=seed,
        )
    path = out_dir / "corpus.csv"
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(corpus.TABULAR_COLUMNS) + "\n")
        count = 0
        for rec in synth.generate_corpus(spec):
            fh.write(f"{rec.author_id},{rec.year},{rec.venue_id},{rec.pub_key}\n")
            count += 1
    _write_manifest(out_dir, "synth", [spec_path], [path])
    print(f"synth: {count} records for {spec.n_authors} authors")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pubforge",
        description="Piecewise-Poisson modelling of researcher publication output",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("ingest", "fit", "predict", "evaluate", "synth"):
        p = sub.add_parser(name)
        p.add_argument("--config", required=True,
                       help="run config (synth: generator spec file)")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--out", default=None, help="output directory")
        p.add_argument("--threads", type=int, default=None,
                       help="worker cap (processing is currently sequential)")
        if name == "evaluate":
            p.add_argument("--plots", action="store_true",
                           help="also emit SVG plots (needs matplotlib)")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "synth":
            out_dir = Path(args.out or "out")
            out_dir.mkdir(parents=True, exist_ok=True)
            return cmd_synth(args.config, out_dir, seed=args.seed)
        cfg = parse_config(args.config)
        if args.seed is not None:
            cfg.seed = args.seed
        if args.out is not None:
            cfg.out_dir = args.out
        if args.threads is not None:
            if args.threads < 1:
                raise ConfigError("--threads must be >= 1")
            cfg.threads = args.threads
        out_dir = Path(cfg.out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        if args.command == "ingest":
            return cmd_ingest(cfg, out_dir)
        if args.command == "fit":
            return cmd_fit(cfg, out_dir)
        if args.command == "predict":
            return cmd_predict(cfg, out_dir)
        if args.command == "evaluate":
            return cmd_evaluate(cfg, out_dir, plots=args.plots)
        raise ConfigError(f"unknown command {args.command!r}")
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except PubforgeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
