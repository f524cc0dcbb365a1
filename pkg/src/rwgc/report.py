"""Suite runner: per-task artifacts, cross-task tables and a hashed manifest."""
from __future__ import annotations

import hashlib
import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from . import oracle
from .config import ExperimentConfig, TaskEntry
from .metrics import MetricReport, PicConfig, metric_report, pic, score_scatter
from .rwg import aggregate, distribution_artifacts, evaluate
from .stats import BootstrapResult, bootstrap_metric, compare_tasks, t_sf_two_sided, welch_test, \
    write_pairwise_csv, write_pairwise_json

METRIC_TABLE_HEADER = "task,pic,pic_std,pic_ci_low,pic_ci_high,poic,poic_std,poic_ci_low,poic_ci_high"
SVG_MAX_POINTS = 4000


def _clean(obj):
    """JSON-safe copy: non-finite floats become null, arrays become lists."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, np.integer):
        return int(obj)
    return obj


def write_json(path, obj) -> None:
    with open(path, "w", newline="\n") as fh:
        json.dump(_clean(obj), fh, indent=2, sort_keys=True, allow_nan=False)
        fh.write("\n")


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


# ------------------------------------------------------------------ svg


def _svg(width: int, height: int, body: list[str], title: str) -> str:
    return "\n".join([
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<text x="{width / 2:.1f}" y="16" font-size="12" text-anchor="middle">{title}</text>',
        *body,
        "</svg>",
    ]) + "\n"


class _Frame:
    """Maps data coordinates into a plot box with a fixed margin."""

    def __init__(self, xr, yr, width=480, height=320, margin=36):
        self.x0, self.x1 = xr
        self.y0, self.y1 = yr
        if self.x1 == self.x0:
            self.x1 = self.x0 + 1.0
        if self.y1 == self.y0:
            self.y1 = self.y0 + 1.0
        self.w, self.h, self.m = width, height, margin

    def x(self, v):
        return self.m + (v - self.x0) / (self.x1 - self.x0) * (self.w - 2 * self.m)

    def y(self, v):
        return self.h - self.m - (v - self.y0) / (self.y1 - self.y0) * (self.h - 2 * self.m)

    def axes(self, xlabel: str, ylabel: str) -> list[str]:
        m, w, h = self.m, self.w, self.h
        return [
            f'<line x1="{m}" y1="{h - m}" x2="{w - m}" y2="{h - m}" stroke="black"/>',
            f'<line x1="{m}" y1="{m}" x2="{m}" y2="{h - m}" stroke="black"/>',
            f'<text x="{w / 2:.1f}" y="{h - 8}" font-size="11" text-anchor="middle">{xlabel}</text>',
            f'<text x="12" y="{h / 2:.1f}" font-size="11" text-anchor="middle" '
            f'transform="rotate(-90 12 {h / 2:.1f})">{ylabel}</text>',
        ]


def _stride(n: int) -> int:
    return max(1, -(-n // SVG_MAX_POINTS))


def histogram_svg(hist: np.ndarray, title: str) -> str:
    f = _Frame((0.0, 1.0), (0.0, float(hist[:, 2].max()) or 1.0))
    body = f.axes("normalized mean return", "policies")
    for lo, hi, c in hist:
        if c > 0:
            body.append(f'<rect x="{f.x(lo):.2f}" y="{f.y(c):.2f}" width="{f.x(hi) - f.x(lo):.2f}" '
                        f'height="{f.y(0) - f.y(c):.2f}" fill="steelblue"/>')
    return _svg(f.w, f.h, body, title)


def performance_svg(curve: np.ndarray, scatter: np.ndarray, title: str) -> str:
    f = _Frame((1.0, float(curve[-1, 0])), (float(scatter[:, 1].min()), float(scatter[:, 1].max())))
    body = f.axes("policy rank", "return")
    for r, v, _ in scatter[::_stride(scatter.shape[0])]:
        body.append(f'<circle cx="{f.x(r):.2f}" cy="{f.y(v):.2f}" r="1" fill="red" fill-opacity="0.3"/>')
    pts = " ".join(f"{f.x(r):.2f},{f.y(v):.2f}" for r, v, _ in curve[::_stride(curve.shape[0])])
    body.append(f'<polyline points="{pts}" fill="none" stroke="black" stroke-width="1.5"/>')
    return _svg(f.w, f.h, body, title)


def variance_svg(cloud: np.ndarray, title: str) -> str:
    top = float(cloud[:, 3].max()) or 1.0
    f = _Frame((0.0, 1.0), (0.0, top))
    body = f.axes("normalized mean", "normalized std")
    for _, _, x, y in cloud[::_stride(cloud.shape[0])]:
        body.append(f'<circle cx="{f.x(x):.2f}" cy="{f.y(y):.2f}" r="1.5" fill="steelblue"/>')
    return _svg(f.w, f.h, body, title)


# ------------------------------------------------------------------ tasks


@dataclass
class TaskOutcome:
    name: str
    status: str = "ok"
    error: Optional[str] = None
    report: Optional[MetricReport] = None
    bootstrap: dict = field(default_factory=dict)  # metric -> BootstrapResult
    S: Optional[np.ndarray] = None
    files: list = field(default_factory=list)


def run_task(cfg: ExperimentConfig, entry: TaskEntry, task_dir: Path, threads: int = 1,
             progress: Optional[Callable[[str], None]] = None) -> TaskOutcome:
    """All per-task artifacts. Any failure is caught and recorded."""
    out = TaskOutcome(entry.name)
    try:
        task_dir.mkdir(parents=True, exist_ok=True)
        rcfg = cfg.rwg_config(entry)
        if progress:
            progress(f"{entry.name}: RWG {rcfg.n_policies} x {rcfg.n_episodes}")
        rm = evaluate(rcfg, threads=threads)
        S = rm.S

        def emit(name: str) -> Path:
            p = task_dir / name
            out.files.append(p)
            return p

        rm.to_csv(emit("returns.csv"))
        rm.write_sidecar(emit("returns.json"))
        stats = aggregate(S)
        stats.to_csv(emit("aggregate.csv"))
        art = distribution_artifacts(stats, S, bins=cfg.histogram_bins)
        for path in art.write_csvs(str(task_dir) + os.sep):
            out.files.append(Path(path))
        emit("histogram.svg").write_text(histogram_svg(art.histogram, f"{entry.name}: mean return histogram"))
        emit("performance_curve.svg").write_text(
            performance_svg(art.performance_curve, art.scatter, f"{entry.name}: performance curve"))
        emit("variance_cloud.svg").write_text(variance_svg(art.variance_cloud, f"{entry.name}: variance cloud"))

        pic_cfg, poic_cfg = cfg.pic_config(), cfg.poic_config(entry)
        report = metric_report(S, pic_cfg, poic_cfg, provenance={"task": entry.name, **rm.meta})
        report.to_json(emit("metrics.json"))
        if progress:
            progress(f"{entry.name}: bootstrap k={cfg.bootstrap_k}")
        for metric, mcfg in (("pic", pic_cfg), ("poic", poic_cfg)):
            br = bootstrap_metric(S, metric, mcfg, k=cfg.bootstrap_k, seed=cfg.bootstrap_seed)
            write_json(emit(f"bootstrap_{metric}.json"), br.to_dict())
            out.bootstrap[metric] = br
        out.report, out.S = report, S
    except Exception as exc:  # recorded per task; other tasks keep going
        out.status = "error"
        out.error = f"{type(exc).__name__}: {exc}"
    return out


def _metric_table(outcomes: list[TaskOutcome]) -> list[dict]:
    rows = []
    for o in outcomes:
        row = {"task": o.name}
        for m in ("pic", "poic"):
            br: BootstrapResult = o.bootstrap[m]
            row.update({m: br.point, f"{m}_std": br.std, f"{m}_ci_low": br.ci_low, f"{m}_ci_high": br.ci_high})
        rows.append(row)
    return rows


def _orderings(rows: list[dict]) -> dict:
    """Tasks sorted by point estimate (highest first), with CIs."""
    out = {}
    for m in ("pic", "poic"):
        ranked = sorted(rows, key=lambda r: (-r[m], r["task"]))
        out[m] = [{"task": r["task"], "point": r[m], "ci_low": r[f"{m}_ci_low"],
                   "ci_high": r[f"{m}_ci_high"]} for r in ranked]
    return out


def run_suite(cfg: ExperimentConfig, out_dir, threads: int = 1, parallel_tasks: bool = False,
              progress: Optional[Callable[[str], None]] = None) -> dict:
    """Run every task of ``cfg`` and write all artifacts below ``out_dir``.

    Returns the manifest, which is also written to ``manifest.json``. Task
    failures are recorded there rather than raised.
    """
    root = Path(out_dir)
    root.mkdir(parents=True, exist_ok=True)
    files: list[Path] = []

    cfg_path = root / "config.json"
    cfg_path.write_text(cfg.to_json())
    files.append(cfg_path)

    def one(entry: TaskEntry) -> TaskOutcome:
        return run_task(cfg, entry, root / "tasks" / entry.name, threads, progress)

    if parallel_tasks and len(cfg.tasks) > 1:
        with ThreadPoolExecutor(max_workers=len(cfg.tasks)) as pool:
            outcomes = list(pool.map(one, cfg.tasks))

    else:
        outcomes = [one(e) for e in cfg.tasks]
    for o in outcomes:
        files.extend(o.files)
        if progress and o.status != "ok":
            progress(f"{o.name}: {o.error}")

    ok = [o for o in outcomes if o.status == "ok"]
    rows = _metric_table(ok)
    lines = [METRIC_TABLE_HEADER]
    for r in rows:
        lines.append(",".join([r["task"]] + [repr(float(r[c])) for c in METRIC_TABLE_HEADER.split(",")[1:]]))
    table_csv = root / "metric_table.csv"
    table_csv.write_text("\n".join(lines) + "\n")
    table_json = root / "metric_table.json"
    write_json(table_json, {"rows": rows, "orderings": _orderings(rows)})
    files += [table_csv, table_json]

    welch_csv, welch_json = root / "welch.csv", root / "welch.json"
    tables = []
    if len(ok) >= 2:
        tables = [compare_tasks([(o.name, o.bootstrap[m]) for o in ok], m) for m in ("pic", "poic")]
    write_pairwise_csv(tables, welch_csv)
    write_pairwise_json(tables, welch_json)
    files += [welch_csv, welch_json]

    scatter_json = root / "score_scatter.json"
    scatter_csv = root / "score_scatter.csv"
    if ok:
        sc = score_scatter([(o.name, o.S, o.report) for o in ok])
        write_json(scatter_json, sc.to_dict())
        cols = list(sc.rows[0])
        body = [",".join(cols)] + [",".join(r["task"] if c == "task" else repr(float(r[c])) for c in cols)
                                   for r in sc.rows]
        scatter_csv.write_text("\n".join(body) + "\n")
    else:
        write_json(scatter_json, {"rows": [], "correlations": {}})
        scatter_csv.write_text("task\n")
    files += [scatter_csv, scatter_json]

    manifest = {
        "name": cfg.name,
        "profile": cfg.profile,
        "master_seed": int(cfg.master_seed),
        "tasks": [{"name": o.name, "status": o.status, "error": o.error} for o in outcomes],
        "files": [{"path": p.relative_to(root).as_posix(), "sha256": sha256_file(p)}
                  for p in sorted(set(files), key=lambda p: p.relative_to(root).as_posix())],
    }
    write_json(root / "manifest.json", manifest)
    return manifest


# ------------------------------------------------------------------ oracle checks


@dataclass(frozen=True)
class OracleCheck:
    name: str
    passed: bool
    detail: str


def _rel_err(a: float, b: float) -> float:
    return abs(a - b) / abs(b) if b != 0 else abs(a)


def oracle_checks(seed: int = 0) -> list[OracleCheck]:
    """Estimators against brute-force references."""
    checks = []
    # independent joint: PIC must vanish
    ind = oracle.independent_joint([0.3, 0.7], [0.2, 0.5, 0.3])
    S = oracle.sample_matrix(ind, 200, 1000, seed)
    v = pic(S, PicConfig(bins=3)).pic
    checks.append(OracleCheck("pic_independent", abs(v) < 0.01, f"pic={v:.6f} exact=0"))
    # deterministic 2x2: ln 2
    det = oracle.DiscreteJoint(np.array([[0.5, 0.0], [0.0, 0.5]]))
    S = oracle.sample_matrix(det, 2000, 100, seed)
    v, ref = pic(S, PicConfig(bins=2)).pic, oracle.exact_mi(det)
    checks.append(OracleCheck("pic_correlated_2x2", _rel_err(v, ref) < 0.02, f"pic={v:.6f} exact={ref:.6f}"))
    # noisy 3x4 joint
    p = np.array([[0.20, 0.05, 0.03, 0.02], [0.02, 0.15, 0.10, 0.03], [0.05, 0.05, 0.05, 0.25]])
    joint = oracle.DiscreteJoint(p / p.sum())
    S = oracle.sample_matrix(joint, 2000, 500, seed)
    v, ref = pic(S, PicConfig(bins=4)).pic, oracle.exact_mi(joint)
    checks.append(OracleCheck("pic_noisy_3x4", _rel_err(v, ref) < 0.02, f"pic={v:.6f} exact={ref:.6f}"))
    # Welch p-values against quadrature
    worst = 0.0
    for df in (1.0, 2.5, 5.0, 10.0, 30.0, 100.0, 1000.0):
        for t in (0.0, 0.1, 0.5, 1.0, 2.0, 3.5, 6.0):
            worst = max(worst, abs(t_sf_two_sided(t, df) - oracle.t_two_sided_p_numeric(t, df)))
    checks.append(OracleCheck("t_two_sided_p", worst < 1e-8, f"max |dp|={worst:.3e}"))
    a = oracle.synthesize_sample(50, 1.0, 0.5)
    r = welch_test(a, a)
    checks.append(OracleCheck("welch_identical", r.t == 0.0 and r.p == 1.0, f"t={r.t} p={r.p}"))
    b = oracle.synthesize_sample(40, 1.3, 0.9)
    t_ref, df_ref = oracle.naive_welch(a, b)
    r = welch_test(a, b)
    ok = _rel_err(r.t, t_ref) < 1e-12 and _rel_err(r.df, df_ref) < 1e-12
    checks.append(OracleCheck("welch_statistic", ok, f"t={r.t:.12g} ref={t_ref:.12g} df={r.df:.12g}"))
    return checks
