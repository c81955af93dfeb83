"""Experiment harness: data ingestion, synthetic oracles, experiments, reports.

Every experiment is a pure function of its config. Trials are keyed by seed
and may run in worker processes; results are sorted by seed before any
reduction so the output bytes never depend on scheduling.
"""

from __future__ import annotations

import csv
import io
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields
from typing import Dict, List, Optional
from xml.sax.saxutils import escape

import numpy as np
import yaml

from .auditors import (
    BaselineAuditor,
    LinearAnchorAuditor,
    LinearCounterfactualAuditor,
    ThresholdAnchorAuditor,
    ThresholdCounterfactualAuditor,
    required_pairs,
)
from .errors import AuditError, ConfigurationError, DomainError, ParseError
from .hypotheses import ExtendedThreshold, LinearClassifier, PairSampler
from .protocol import AuditConfig, DataScientist, Query, run_session
from .verification import (
    DEFAULT_POST_FLAG_POLICY,
    DishonestDataScientist,
    PostFlagPolicy,
    verify_anchor_precision,
    verify_counterfactual,
)


# -- data ---------------------------------------------------------------------


@dataclass
class DataMatrix:
    values: np.ndarray
    names: List[str]

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 2 or self.values.shape[1] != len(self.names):
            raise ParseError("matrix shape does not match the column names")
        if not np.all(np.isfinite(self.values)):
            raise ParseError("matrix has non-finite cells")

    @property
    def shape(self):
        return self.values.shape

    @property
    def constant_columns(self) -> List[str]:
        if len(self.values) == 0:
            return []
        flat = np.all(self.values == self.values[0], axis=0)
        return [n for n, c in zip(self.names, flat) if c]

    def rescaled(self, s: Optional[int] = None) -> "DataMatrix":
        """Scale rows so the non-interest part has norm at most one.

        One global factor is used so the geometry is preserved.
        """
        X = self.values.copy()
        rest = X if s is None else np.delete(X, s, axis=1)
        r = float(np.max(np.linalg.norm(rest, axis=1))) if len(X) else 0.0
        if r > 1.0:
            if s is None:
                X /= r
            else:
                keep = np.arange(X.shape[1]) != s
                X[:, keep] /= r
        return DataMatrix(X, list(self.names))


def _is_number(cell):
    try:
        float(cell)
    except ValueError:
        return False
    return True


def load_matrix_csv(path) -> DataMatrix:
    """Read a numeric CSV with a header row.

    Raises :class:`ParseError` naming the row (1-based, header is row 1) and
    column of the first bad cell.
    """
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    rows = [r for r in rows if r]
    if not rows:
        raise ParseError(f"{path}: empty file")
    header = [c.strip() for c in rows[0]]
    if all(_is_number(c) for c in header):
        raise ParseError(f"{path}: missing header row")
    if len(set(header)) != len(header) or any(not c for c in header):
        raise ParseError(f"{path}: header names must be unique and non-empty")
    data = np.empty((len(rows) - 1, len(header)))
    for i, row in enumerate(rows[1:], start=2):
        if len(row) != len(header):
            raise ParseError(f"{path}: row {i} has {len(row)} cells, expected {len(header)}")
        for j, cell in enumerate(row):
            try:
                v = float(cell)
            except ValueError:
                raise ParseError(f"{path}: non-numeric cell {cell!r} at row {i}, column {header[j]!r}") from None
            if not math.isfinite(v):
                raise ParseError(f"{path}: non-finite cell {cell!r} at row {i}, column {header[j]!r}")
            data[i - 2, j] = v
    return DataMatrix(data, header)


# -- synthetic oracles --------------------------------------------------------


def parse_synthetic_spec(spec: str) -> Dict[str, str]:
    """``"lc d=20 ws=0"`` -> ``{"kind": "lc", "d": "20", "ws": "0"}``."""
    parts = spec.split()
    if not parts or parts[0] not in ("lc", "et"):
        raise ParseError(f"synthetic spec must start with 'lc' or 'et': {spec!r}")
    out = {"kind": parts[0]}
    for tok in parts[1:]:
        key, sep, val = tok.partition("=")
        if not sep or not key or not val:
            raise ParseError(f"bad token {tok!r} in synthetic spec {spec!r}")
        out[key] = val
    allowed = {"lc": {"kind", "d", "ws", "s"}, "et": {"kind", "gap", "lo", "hi"}}[parts[0]]
    extra = set(out) - allowed
    if extra:
        raise ParseError(f"unknown keys {sorted(extra)} in synthetic spec {spec!r}")
    return out


def synthesize_hypothesis(spec: str, seed=0):
    """Random hypothesis from a spec string.

    ``lc d=<d> [ws=0] [s=<index>]``: homogeneous classifier with ``w``
    uniform on the unit sphere; ``ws=0`` zeroes the feature of interest
    (default the last coordinate) and renormalizes.

    ``et [gap=<g>] [lo=<l>] [hi=<u>]``: thresholds in ``[l, u]`` (default
    ``[0, 1]``). With a gap the lower threshold is uniform on ``[l, u - g]``
    and the order of the two is a fair coin; without one both are uniform.
    """
    p = parse_synthetic_spec(spec)
    rng = np.random.default_rng([11, int(seed)])
    try:
        if p["kind"] == "lc":
            d = int(p.get("d", 2))
            if d < 2:
                raise DomainError("lc spec needs d >= 2")
            s = int(p.get("s", d - 1))
            if not 0 <= s < d:
                raise DomainError(f"feature index {s} out of range for d={d}")
            w = rng.standard_normal(d)
            if "ws" in p:
                if float(p["ws"]) != 0.0:
                    raise DomainError("only ws=0 is supported")
                w[s] = 0.0
            w /= np.linalg.norm(w)
            return LinearClassifier(w, homogeneous=True)
        lo, hi = float(p.get("lo", 0.0)), float(p.get("hi", 1.0))
        if not lo < hi:
            raise DomainError(f"empty range [{lo}, {hi}]")
        if "gap" in p:
            gap = float(p["gap"])
            if not 0.0 <= gap <= hi - lo:
                raise DomainError(f"gap {gap} does not fit in [{lo}, {hi}]")
            a = rng.uniform(lo, hi - gap)
            t1, t2 = (a, a + gap) if rng.uniform() < 0.5 else (a + gap, a)
            # keep the requested gap exact at the upper end
            if gap == hi - lo:
                t1, t2 = (lo, hi) if t1 < t2 else (hi, lo)
        else:
            t1, t2 = rng.uniform(lo, hi, size=2)
        return ExtendedThreshold(t1, t2, lo, hi)
    except ValueError as exc:
        if isinstance(exc, AuditError):
            raise
        raise ParseError(f"invalid synthetic spec {spec!r}: {exc}") from exc


def synthesize_ds(spec: str, seed=0, method: str = "none", **options) -> DataScientist:
    """Truthful DS over :func:`synthesize_hypothesis`; ``options`` go to the DS."""
    return DataScientist(synthesize_hypothesis(spec, seed), method, seed=int(seed), **options)


# -- configuration ------------------------------------------------------------


EXPERIMENTS = ("anchor-aug", "aqc", "audit", "verify")
AUDITORS = ("baseline", "lc-counterfactual", "lc-anchor", "et-counterfactual", "et-anchor")


@dataclass
class ExperimentConfig:
    """All knobs of one experiment; config files use the same key names."""

    experiment: str = "audit"
    hypothesis: str = "lc d=2"
    method: str = "counterfactual"
    auditor: str = "lc-counterfactual"
    epsilon: float = 0.05
    delta: float = 0.05
    seeds: int = 1
    base_seed: int = 0
    dataset: Optional[str] = None
    feature: Optional[int] = None
    budget: Optional[int] = None
    # anchor augmentation
    dimension: int = 20
    aug_size: int = 30
    anchor_side: float = 0.2
    anchor_volume: Optional[float] = None
    max_queries: int = 120
    warmup_size: int = 2
    target_error: float = 0.1
    cut_order: str = "insertion"
    # aqc
    gaps: List[float] = field(default_factory=lambda: [0.05, 0.1, 0.2, 0.4, 0.8])
    placements: int = 500
    aqc_epsilon: float = 2.0 ** -10
    # verify
    verify_samples: int = 2000
    delta_gap: float = 0.05
    tau_inflation: float = 0.0
    counterfactual_far: float = 1.0
    cf_iterations: int = 10
    cf_samples: int = 200
    post_flag: PostFlagPolicy = DEFAULT_POST_FLAG_POLICY
    # output
    out_dir: str = "."
    log_x: bool = False
    workers: int = 1

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ConfigurationError(f"unknown experiment {self.experiment!r}")
        if self.auditor not in AUDITORS:
            raise ConfigurationError(f"unknown auditor {self.auditor!r}")
        if self.seeds < 1:
            raise ConfigurationError("seeds must be at least 1")
        if self.cut_order not in ("insertion", "deepest"):
            raise ConfigurationError(f"unknown cut_order {self.cut_order!r}")
        if self.workers < 1:
            raise ConfigurationError("workers must be at least 1")
        if self.dataset is not None and not os.path.isfile(self.dataset):
            raise ConfigurationError(f"dataset file {self.dataset!r} does not exist")
        try:
            self.post_flag = PostFlagPolicy(self.post_flag)
        except ValueError:
            raise ConfigurationError(f"unknown post_flag policy {self.post_flag!r}") from None
        self.gaps = [float(g) for g in self.gaps]

    @property
    def seed_list(self) -> List[int]:
        return list(range(self.base_seed, self.base_seed + self.seeds))

    def side(self) -> float:
        if self.anchor_volume is not None:
            return self.anchor_volume ** (1.0 / self.dimension)
        return self.anchor_side


def load_config(path, **overrides) -> ExperimentConfig:
    """Read a YAML mapping of :class:`ExperimentConfig` keys.

    Relative dataset paths are resolved against the config file's directory.
    ``overrides`` with value ``None`` are ignored.
    """
    try:
        with open(path) as fh:
            raw = yaml.safe_load(fh)
    except OSError as exc:
        raise ConfigurationError(f"cannot read config {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigurationError(f"config {path} is not valid YAML: {exc}") from exc
    raw = raw or {}
    if not isinstance(raw, dict):
        raise ConfigurationError(f"config {path} must be a mapping")
    raw.update({k: v for k, v in overrides.items() if v is not None})
    known = {f.name for f in fields(ExperimentConfig)}
    unknown = sorted(set(raw) - known)
    if unknown:
        raise ConfigurationError(f"unknown config keys: {unknown}")
    ds_path = raw.get("dataset")
    if ds_path and not os.path.isabs(ds_path):
        raw["dataset"] = os.path.join(os.path.dirname(os.path.abspath(path)), ds_path)
    try:
        return ExperimentConfig(**raw)
    except TypeError as exc:
        raise ConfigurationError(str(exc)) from exc


# -- tables and reports -------------------------------------------------------


@dataclass
class Table:
    columns: List[str]
    rows: List[list] = field(default_factory=list)

    def column(self, name) -> list:
        i = self.columns.index(name)
        return [r[i] for r in self.rows]

    def where(self, **eq) -> "Table":
        idx = {k: self.columns.index(k) for k in eq}
        return Table(self.columns, [r for r in self.rows if all(r[i] == eq[k] for k, i in idx.items())])

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.columns)
        for r in self.rows:
            w.writerow([_cell(v) for v in r])
        return buf.getvalue()


def _cell(v):
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        # shortest form that round-trips
        return repr(float(v))
    return str(v)


def _nice_ticks(lo, hi, n=5):
    if hi <= lo:
        return [lo]
    raw = (hi - lo) / n
    mag = 10.0 ** math.floor(math.log10(raw))
    step = next(m * mag for m in (1, 2, 5, 10) if m * mag >= raw)
    start = math.ceil(lo / step - 1e-9) * step
    ticks = []
    t = start
    while t <= hi + 1e-9 * step:
        ticks.append(round(t, 12))
        t += step
    return ticks


PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")


def svg_line_chart(table: Table, x: str, y: str, series: Optional[str] = None, log_x=False, title="") -> str:
    """Static SVG 1.1 polyline chart, one line per value of ``series``."""
    W, H, L, R, T, B = 640, 400, 70, 150, 40, 50
    groups: Dict[str, list] = {}
    for row in table.rows:
        rec = dict(zip(table.columns, row))
        key = str(rec[series]) if series else y
        groups.setdefault(key, []).append((float(rec[x]), float(rec[y])))
    xs = [p[0] for g in groups.values() for p in g]
    ys = [p[1] for g in groups.values() for p in g]
    if log_x:
        if min(xs) <= 0:
            raise DomainError("log x axis needs positive x values")
        tx = math.log10
    else:
        tx = float
    x0, x1 = tx(min(xs)), tx(max(xs))
    y0, y1 = min(0.0, min(ys)), max(ys)
    if x1 == x0:
        x0, x1 = x0 - 1, x1 + 1
    if y1 == y0:
        y1 = y0 + 1
    pw, ph = W - L - R, H - T - B

    def px(v):
        return L + (tx(v) - x0) / (x1 - x0) * pw

    def py(v):
        return T + ph - (v - y0) / (y1 - y0) * ph

    out = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{W}" height="{H}" viewBox="0 0 {W} {H}">',
        f'<rect x="0" y="0" width="{W}" height="{H}" fill="white"/>',
        f'<text x="{W / 2:.2f}" y="20" text-anchor="middle" font-family="sans-serif" font-size="14">{escape(title)}</text>',
        f'<line x1="{L}" y1="{T + ph}" x2="{L + pw}" y2="{T + ph}" stroke="black"/>',
        f'<line x1="{L}" y1="{T}" x2="{L}" y2="{T + ph}" stroke="black"/>',
    ]
    if log_x:
        xt = [10.0 ** k for k in range(math.floor(x0), math.ceil(x1) + 1) if x0 - 1e-9 <= k <= x1 + 1e-9]
        xt = xt or [min(xs), max(xs)]
    else:
        xt = _nice_ticks(x0, x1)
    for t in xt:
        X = px(t)
        out.append(f'<line x1="{X:.2f}" y1="{T + ph}" x2="{X:.2f}" y2="{T + ph + 5}" stroke="black"/>')
        out.append(f'<text x="{X:.2f}" y="{T + ph + 18}" text-anchor="middle" font-family="sans-serif" font-size="11">{t:g}</text>')
    for t in _nice_ticks(y0, y1):
        Y = py(t)
        out.append(f'<line x1="{L - 5}" y1="{Y:.2f}" x2="{L}" y2="{Y:.2f}" stroke="black"/>')
        out.append(f'<text x="{L - 8}" y="{Y + 4:.2f}" text-anchor="end" font-family="sans-serif" font-size="11">{t:g}</text>')
    out.append(f'<text x="{L + pw / 2:.2f}" y="{H - 10}" text-anchor="middle" font-family="sans-serif" font-size="12">{escape(x)}</text>')
    out.append(
        f'<text x="15" y="{T + ph / 2:.2f}" text-anchor="middle" font-family="sans-serif" font-size="12" '
        f'transform="rotate(-90 15 {T + ph / 2:.2f})">{escape(y)}</text>'
    )
    for i, (name, pts) in enumerate(sorted(groups.items())):
        color = PALETTE[i % len(PALETTE)]
        pts = sorted(pts)
        coords = " ".join(f"{px(a):.2f},{py(b):.2f}" for a, b in pts)
        out.append(f'<polyline fill="none" stroke="{color}" stroke-width="2" points="{coords}"/>')
        ly = T + 10 + 20 * i
        out.append(f'<line x1="{W - R + 10}" y1="{ly}" x2="{W - R + 30}" y2="{ly}" stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{W - R + 35}" y="{ly + 4}" font-family="sans-serif" font-size="11">{escape(name)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


# x, y and series columns of the charts for each table schema
CHARTS = {
    ("query_count", "mode", "mean_error", "std_error"): ("query_count", "mean_error", "mode"),
    ("gap", "method", "mean_query_count"): ("gap", "mean_query_count", "method"),
}


def emit_report(table: Table, format: str, path, log_x=False, title="") -> str:
    """Write ``table`` as CSV or as an SVG chart; returns the path."""
    if not table.rows:
        raise DomainError("cannot report an empty table")
    if format == "csv":
        text = table.to_csv()
    elif format == "svg":
        key = tuple(table.columns)
        if key in CHARTS:
            x, y, series = CHARTS[key]
        else:
            x, y, series = table.columns[0], table.columns[-1], None
        text = svg_line_chart(table, x, y, series, log_x=log_x, title=title)
    else:
        raise ConfigurationError(f"unknown report format {format!r}")
    try:
        with open(path, "w", newline="") as fh:
            fh.write(text)
    except OSError as exc:
        raise ConfigurationError(f"cannot write report {path}: {exc}") from exc
    return str(path)


def _map(fn, items, workers):
    if workers > 1 and len(items) > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            return list(ex.map(fn, items))
    return [fn(i) for i in items]


# -- anchor augmentation ------------------------------------------------------


ANCHOR_MODES = ("worst_case", "typical")


def estimation_error(mu, w) -> float:
    """``min(||w - m||, ||w + m||)`` with ``m = mu / ||mu||`` and unit ``w``."""
    n = np.linalg.norm(mu)
    if n == 0:
        return float(np.linalg.norm(w))
    m = mu / n
    return float(min(np.linalg.norm(w - m), np.linalg.norm(w + m)))


def anchor_aug_trial(args):
    """Error after each query of one seeded learning run.

    ``args = (mode, seed, d, aug_size, side, max_queries, warmup_size, epsilon, order)``.
    """
    mode, seed, d, aug_size, side, max_queries, warmup, eps, order = args
    ds = synthesize_ds(f"lc d={d}", seed, "anchor", anchor_mode=mode, anchor_side=side)
    w = ds.hypothesis.w
    strat = LinearAnchorAuditor(eps, aug_size=aug_size, warmup_size=warmup, rounds=max_queries - warmup, seed=seed, order=order)
    run_session(strat, ds, AuditConfig(epsilon=eps, seed=seed))
    return seed, [estimation_error(mu, w) for mu in strat.history]


def anchor_aug_curves(cfg: ExperimentConfig) -> Dict[str, np.ndarray]:
    """Per-mode ``seeds x max_queries`` error matrices."""
    if cfg.max_queries <= cfg.warmup_size:
        raise ConfigurationError("max_queries must exceed warmup_size")
    out = {}
    for mode in ANCHOR_MODES:
        jobs = [
            (mode, s, cfg.dimension, cfg.aug_size, cfg.side(), cfg.max_queries, cfg.warmup_size, cfg.epsilon, cfg.cut_order)
            for s in cfg.seed_list
        ]
        res = sorted(_map(anchor_aug_trial, jobs, cfg.workers))
        out[mode] = np.array([r[1] for r in res])
    return out


def curves_table(curves: Dict[str, np.ndarray]) -> Table:
    t = Table(["query_count", "mode", "mean_error", "std_error"])
    for mode in ANCHOR_MODES:
        E = curves[mode]
        for k in range(E.shape[1]):
            t.rows.append([k + 1, mode, float(E[:, k].mean()), float(E[:, k].std())])
    return t


def run_anchor_aug_experiment(cfg: ExperimentConfig) -> Table:
    return curves_table(anchor_aug_curves(cfg))


def queries_to_reach(mean_curve, target: float) -> Optional[int]:
    """First query count whose mean error is at most ``target``."""
    idx = np.flatnonzero(np.asarray(mean_curve) <= target)
    return int(idx[0]) + 1 if idx.size else None


def compare_ray_augmentation(d=20, seed=0, rounds=40, aug_size=30, epsilon=0.05):
    """Run worst-case anchors with and without augmentation.

    Returns ``(same_transcript, max_center_diff, max_shape_diff)`` over all
    ellipsoids of the two runs.
    """
    runs = []
    for aug in (aug_size, 0):
        ds = synthesize_ds(f"lc d={d}", seed, "anchor", anchor_mode="worst_case")
        strat = LinearAnchorAuditor(epsilon, aug_size=aug, rounds=rounds, seed=seed)
        shapes = []
        orig = strat.observe

        def observe(q, r, strat=strat, orig=orig, shapes=shapes):
            orig(q, r)
            shapes.append(strat.ellipsoid.sigma.copy())

        strat.observe = observe
        rep = run_session(strat, ds, AuditConfig(epsilon=epsilon, seed=seed))
        runs.append((rep, np.array(strat.history), np.array(shapes), strat.augmented))
    (ra, ha, sa, na), (rb, hb, sb, _) = runs
    same = ra.transcript.dumps() == rb.transcript.dumps()
    if ha.shape != hb.shape:
        return False, math.inf, math.inf
    return same, float(np.max(np.abs(ha - hb))), float(np.max(np.abs(sa - sb)))


# -- AQC of extended thresholds -----------------------------------------------


def aqc_trial(args):
    gap, seed, eps = args
    h = synthesize_hypothesis(f"et gap={gap!r}", seed)
    cfg = AuditConfig(epsilon=eps, seed=seed)
    c = run_session(ThresholdCounterfactualAuditor(), DataScientist(h, "counterfactual"), cfg)
    a = run_session(ThresholdAnchorAuditor(eps), DataScientist(h, "anchor"), cfg)
    return seed, c.queries_used, a.queries_used


def run_aqc_experiment(cfg: ExperimentConfig) -> Table:
    """Mean query counts of the two threshold auditors per gap."""
    t = Table(["gap", "method", "mean_query_count"])
    seeds = range(cfg.base_seed, cfg.base_seed + cfg.placements)
    for gap in cfg.gaps:
        res = sorted(_map(aqc_trial, [(gap, s, cfg.aqc_epsilon) for s in seeds], cfg.workers))
        t.rows.append([gap, "counterfactual", float(np.mean([r[1] for r in res]))])
        t.rows.append([gap, "anchor", float(np.mean([r[2] for r in res]))])
    return t


def fit_line(x, y):
    """Least-squares ``y = a x + b``; returns ``(a, b, r2)``."""
    x, y = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
    if x.size < 2:
        raise DomainError("need at least two points to fit a line")
    a, b = np.polyfit(x, y, 1)
    ss_res = float(np.sum((y - (a * x + b)) ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return float(a), float(b), r2


# -- audits -------------------------------------------------------------------


def _dataset_rows(cfg: ExperimentConfig, d: int) -> Optional[np.ndarray]:
    if cfg.dataset is None:
        return None
    m = load_matrix_csv(cfg.dataset)
    if m.shape[1] != d:
        raise ConfigurationError(f"dataset has {m.shape[1]} columns, hypothesis has d={d}")
    s = d - 1 if cfg.feature is None else cfg.feature
    return m.rescaled(s).values


def build_auditor(cfg: ExperimentConfig, ds: DataScientist, seed: int):
    d = ds.d
    s = AuditConfig(feature=cfg.feature).feature_index(d)
    if cfg.auditor == "baseline":
        rows = _dataset_rows(cfg, d)
        if rows is not None:
            sampler = PairSampler(d, s, kind="rows", rows=rows, seed=seed)
        elif isinstance(ds.hypothesis, ExtendedThreshold):
            sampler = PairSampler(d, s, lo=ds.hypothesis.lo, hi=ds.hypothesis.hi, seed=seed)
        else:
            sampler = PairSampler(d, s, kind="ball", seed=seed)
        return BaselineAuditor(sampler, required_pairs(cfg.epsilon, cfg.delta), seed=seed)
    if cfg.auditor == "lc-counterfactual":
        return LinearCounterfactualAuditor(s, seed=seed)
    if cfg.auditor == "lc-anchor":
        return LinearAnchorAuditor(cfg.epsilon, s, aug_size=cfg.aug_size, warmup_size=cfg.warmup_size, seed=seed)
    if cfg.auditor == "et-counterfactual":
        return ThresholdCounterfactualAuditor()
    return ThresholdAnchorAuditor(cfg.epsilon)


def audit_ds(cfg: ExperimentConfig, seed: int) -> DataScientist:
    method = "none" if cfg.auditor == "baseline" else cfg.auditor.split("-", 1)[1]
    opts = {}
    if method == "anchor" and cfg.auditor == "lc-anchor":
        opts = {"anchor_mode": "typical", "anchor_side": cfg.anchor_side}
    return synthesize_ds(cfg.hypothesis, seed, method, **opts)


def run_audit(cfg: ExperimentConfig) -> Table:
    """Audit one synthetic oracle per seed; protocol errors propagate."""
    t = Table(["seed", "auditor", "decision", "queries_used", "exhausted"])
    for seed in cfg.seed_list:
        ds = audit_ds(cfg, seed)
        strat = build_auditor(cfg, ds, seed)
        ac = AuditConfig(cfg.epsilon, cfg.delta, cfg.feature, cfg.budget, seed)
        rep = run_session(strat, ds, ac)
        t.rows.append([seed, rep.auditor, str(rep.decision), rep.queries_used, rep.exhausted])
    return t


def run_verify(cfg: ExperimentConfig) -> Table:
    """Check one explanation per seed and apply the post-flag policy.

    Linear classifiers get a typical (box) anchor whose precision is checked
    with ``verify_samples`` labels, then a counterfactual checked by ball
    sampling. A flagged check triggers ``post_flag``: ``stop`` records no
    decision, ``baseline`` runs the explanation-free baseline auditor and
    ``estimate`` keeps auditing with the explanations as given.
    """
    t = Table(["seed", "check", "status", "estimate", "claimed", "bound", "policy", "decision"])
    for seed in cfg.seed_list:
        h = synthesize_hypothesis(cfg.hypothesis, seed)
        if not isinstance(h, LinearClassifier):
            raise ConfigurationError("verify runs on linear-classifier specs")
        d = h.d
        rng = np.random.default_rng([13, seed])
        x = rng.uniform(-0.5, 0.5, size=d)
        ds = DishonestDataScientist(
            h, "anchor", anchor_mode="typical", anchor_side=cfg.anchor_side, seed=seed, tau_inflation=cfg.tau_inflation
        )
        r = ds.respond(Query(x))
        a = r.explanation

        def box(k, g, a=a):
            return g.uniform(a.lower, a.upper, size=(k, d))

        v = verify_anchor_precision(a, a.tau, h.predict, box, cfg.verify_samples, cfg.delta_gap, r.label, seed=seed)
        flagged = v.flagged
        t.rows.append([seed, "anchor_precision", str(v.status), v.estimate, v.claimed, v.bound])
        cds = DishonestDataScientist(h, "counterfactual", seed=seed, far=cfg.counterfactual_far)
        rc = cds.respond(Query(x))
        chk = verify_counterfactual(x, rc.explanation.x_prime, h.predict, cfg.cf_iterations, cfg.cf_samples, seed=seed, label_x=rc.label)
        cf_flag = (not chk.label_ok) or chk.improved is not None
        claimed = float(np.linalg.norm(rc.explanation.x_prime - x))
        t.rows.append([seed, "counterfactual", "Flagged" if cf_flag else "Consistent", chk.final_radius, claimed, float("nan")])
        flagged = flagged or cf_flag
        decision = _after_check(cfg, h, seed, flagged)
        for row in t.rows[-2:]:
            row.extend([cfg.post_flag.value if flagged else "none", decision])
    return t


def _after_check(cfg, h, seed, flagged):
    ac = AuditConfig(cfg.epsilon, cfg.delta, cfg.feature, cfg.budget, seed)
    s = ac.feature_index(h.d)
    if not flagged or cfg.post_flag is PostFlagPolicy.ESTIMATE:
        ds = DataScientist(h, "counterfactual", seed=seed)
        return str(run_session(LinearCounterfactualAuditor(s, seed=seed), ds, ac).decision)
    if cfg.post_flag is PostFlagPolicy.STOP:
        return "none"
    sampler = PairSampler(h.d, s, kind="ball", seed=seed)
    strat = BaselineAuditor(sampler, required_pairs(cfg.epsilon, cfg.delta), seed=seed)
    return str(run_session(strat, DataScientist(h, "none", seed=seed), ac).decision)


__all__ = [
    "ANCHOR_MODES",
    "AUDITORS",
    "DataMatrix",
    "EXPERIMENTS",
    "ExperimentConfig",
    "Table",
    "anchor_aug_curves",
    "compare_ray_augmentation",
    "curves_table",
    "emit_report",
    "estimation_error",
    "fit_line",
    "load_config",
    "load_matrix_csv",
    "parse_synthetic_spec",
    "queries_to_reach",
    "run_anchor_aug_experiment",
    "run_aqc_experiment",
    "run_audit",
    "run_verify",
    "svg_line_chart",
    "synthesize_ds",
    "synthesize_hypothesis",
]
