"""Experiment configs, report writing and report comparison."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from . import certify, ghost_pipeline as gp
from .coarse_space import BoxSpace, geometry_profile, make_box_space
from .generators import generate_sequence
from .bandop import laplacian
from .certify import unique_balls
from .spectral import lambda_min_compressed

PIPELINES = ("gap", "blocks", "certify-only")
DECAY_COLUMNS = ["block", "size", "S_n", "gap", "g_n", "e_n", "top_eig", "bound_2eps", "applicable"]


class ConfigError(ValueError):
    pass


def clean(value: Any) -> Any:
    """JSON-safe copy with floats rounded to 12 significant digits."""
    if isinstance(value, dict):
        return {str(k): clean(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [clean(v) for v in value]
    if isinstance(value, np.ndarray):
        return clean(value.tolist())
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        v = float(value)
        if not math.isfinite(v):
            return str(v)
        return float(f"{v:.12g}")
    return value


def dumps(payload: Any) -> str:
    return json.dumps(clean(payload), sort_keys=True, indent=2) + "\n"


def csv_text(rows: Sequence[dict], columns: Sequence[str] | None = None) -> str:
    columns = list(columns or (rows[0].keys() if rows else []))
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=columns, lineterminator="\n", extrasaction="ignore")
    w.writeheader()
    for r in rows:
        w.writerow(clean({c: r.get(c) for c in columns}))
    return buf.getvalue()


def read_csv(path: str | Path) -> tuple[list[str], list[dict]]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        return list(reader.fieldnames or []), list(reader)


@dataclass
class ExperimentConfig:
    generators: list[dict]
    pipeline: str = "certify-only"
    R: float = 1.0
    kappa: float | str = "auto"
    eps: float = 0.01
    S: list[float] = field(default_factory=lambda: [1.0, 2.0])
    N: int = 4
    c: float | None = None
    seed: int = 0
    out_dir: str = "report"
    plots: bool = False

    @classmethod
    def from_dict(cls, payload: dict) -> ExperimentConfig:
        known = set(cls.__dataclass_fields__)
        unknown = set(payload) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        cfg = cls(**payload)
        cfg.validate()
        return cfg

    def validate(self) -> None:
        if not self.generators:
            raise ConfigError("config needs at least one generator")
        for g in self.generators:
            if "family" not in g or "sizes" not in g or not g["sizes"]:
                raise ConfigError(f"generator entry needs 'family' and nonempty 'sizes': {g}")
        if self.pipeline not in PIPELINES:
            raise ConfigError(f"pipeline must be one of {PIPELINES}")
        if not self.R > 0:
            raise ConfigError("R must be positive")
        if not 0 < self.eps < 1:
            raise ConfigError("eps must lie in (0, 1)")
        if not (self.kappa == "auto" or (isinstance(self.kappa, (int, float)) and self.kappa > 0)):
            raise ConfigError("kappa must be positive or 'auto'")
        if not self.S or any(s <= 0 for s in self.S):
            raise ConfigError("S grid must be nonempty and positive")

    def to_dict(self) -> dict:
        return asdict(self)


def build_box(generators: Sequence[dict], seed: int = 0) -> BoxSpace:
    """One box from the concatenated blocks of every generator entry."""
    blocks = []
    for g in generators:
        box = generate_sequence(g["family"], [int(s) for s in g["sizes"]], int(g.get("seed", seed)),
                                d=g.get("d"), m=g.get("m"))
        blocks += box.blocks
    return make_box_space(blocks)


def ball_gap(box: BoxSpace, R: float, S: float) -> float:
    """Smallest ``lambda_min`` of the compressed Laplacian over radius-``S`` balls."""
    lap = laplacian(box, R)
    gaps = []
    for k, block in enumerate(box.blocks):
        for _, b in unique_balls(block, S):
            gaps.append(lambda_min_compressed(lap, b + box.starts[k]))
    return min(gaps)


def _write(out: Path, name: str, text: str, bundle: dict) -> None:
    path = out / name
    path.write_text(text)
    bundle[name] = str(path)


def run(config: ExperimentConfig | dict) -> dict:
    """Execute a config; returns ``{file name: path}`` plus a ``summary`` dict."""
    cfg = config if isinstance(config, ExperimentConfig) else ExperimentConfig.from_dict(config)
    cfg.validate()
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    box = build_box(cfg.generators, cfg.seed)
    bundle: dict = {}
    # out_dir is left out so reruns elsewhere stay byte-identical
    params = {k: v for k, v in cfg.to_dict().items() if k != "out_dir"}
    summary: dict = {"config": params, "blocks": [b.n for b in box.blocks]}
    radii = sorted({cfg.R, *cfg.S})
    summary["geometry_profile"] = geometry_profile(box.realized, radii).as_rows()

    if cfg.pipeline == "certify-only":
        rep = certify.weak_expander_constants(box, cfg.R, cfg.S)
        _write(out, "weak_expander.csv", csv_text(rep.rows()), bundle)
        summary["conventions"] = certify.CONVENTIONS
        kappa_rows = []
        for S in cfg.S:
            if rep.all_exact(S):
                led = certify.verify_kappa_bound(box, cfg.R, S, rep)
                kappa_rows += [{**r, "S": S} for r in led.rows]
                summary.setdefault("kappa_bound", []).append(
                    {"S": S, "c": led.c, "M": led.M, "threshold": led.threshold, "violations": len(led.violations)})
        if kappa_rows:
            _write(out, "kappa_ledger.csv", csv_text(kappa_rows), bundle)
        if cfg.plots:
            _plot_constants(out / "constants.svg", rep)
            bundle["constants.svg"] = str(out / "constants.svg")

    elif cfg.pipeline == "gap":
        kappa = ball_gap(box, cfg.R, max(cfg.S)) if cfg.kappa == "auto" else float(cfg.kappa)
        res = gp.build_gap_ghost(box, cfg.R, kappa, cfg.eps)
        kern = gp.kernel_fixed_vectors(res.operator, box, cfg.R, cfg.eps)
        _write(out, "decay.csv", csv_text(res.ledger, DECAY_COLUMNS), bundle)
        summary.update(
            kappa=kappa,
            laplacian_norm=res.laplacian_norm,
            filter=gp.filter_log(res.filter, res.approx),
            fixed_vectors=kern["count"],
            violations=len(res.violations),
            applicable_blocks=sum(r["applicable"] for r in res.ledger),
        )
        if cfg.plots:
            _plot_decay(out / "decay.svg", res.ledger, 2 * cfg.eps)
            bundle["decay.svg"] = str(out / "decay.svg")

    else:
        provider = lambda S: gp.localized_witness_provider(box, cfg.R, S)  # noqa: E731
        c = cfg.c
        if c is None:
            c = provider(1.0).c
        summary["c"] = c
        try:
            co = gp.onl_block_construction(provider, box, cfg.N, c, cfg.R)
            summary["status"] = "complete"
        except gp.ProviderExhausted as exc:
            co = exc.partial
            summary["status"] = f"exhausted: {exc}"
        summary["construction"] = {
            "S": co.S, "selected_groups": co.selected, "kappa": co.kappa, "part": co.part,
            "group_sizes": [int(g.size) for g in co.groups], "steps": co.steps,
        }
        if len(co):
            checks = gp.check_construction(co)
            summary["checks"] = {k: checks[k] for k in "abcde"}
            ghost = gp.build_block_ghost(co, cfg.eps)
            _write(out, "decay.csv", csv_text(ghost.ledger, DECAY_COLUMNS), bundle)
            summary["filter"] = gp.filter_log(ghost.filter, ghost.approx)
            summary["noncompact_blocks"] = ghost.noncompact_count
            summary["violations"] = len(ghost.violations)
            if cfg.plots:
                _plot_decay(out / "decay.svg", ghost.ledger, 2 * cfg.eps)
                bundle["decay.svg"] = str(out / "decay.svg")
    _write(out, "summary.json", dumps(summary), bundle)
    bundle["summary"] = summary
    return bundle


# -- comparison -----------------------------------------------------------------


def _numeric(values: list[str]) -> list[float] | None:
    try:
        return [float(v) for v in values]
    except (TypeError, ValueError):
        return None


def compare(path_a: str | Path, path_b: str | Path) -> dict:
    """Per-column deltas between two CSV reports with the same columns."""
    cols_a, rows_a = read_csv(path_a)
    cols_b, rows_b = read_csv(path_b)
    if cols_a != cols_b:
        raise ConfigError(f"column mismatch: {cols_a} vs {cols_b}")
    n = min(len(rows_a), len(rows_b))
    columns = {}
    for col in cols_a:
        a = _numeric([r[col] for r in rows_a])
        b = _numeric([r[col] for r in rows_b])
        if a is None or b is None:
            same = [r[col] for r in rows_a[:n]] == [r[col] for r in rows_b[:n]]
            columns[col] = {"numeric": False, "identical": same}
            continue
        delta = [y - x for x, y in zip(a[:n], b[:n])]
        columns[col] = {
            "numeric": True,
            "max_abs_delta": max((abs(d) for d in delta), default=0.0),
            "trend_a": _trend(a),
            "trend_b": _trend(b),
        }
    return {"rows": [len(rows_a), len(rows_b)], "columns": columns,
            "identical": all(not c["numeric"] and c["identical"] or c.get("max_abs_delta") == 0
                             for c in columns.values()) and len(rows_a) == len(rows_b)}


def _trend(values: list[float]) -> float:
    """last/first ratio (nan when the first value is 0)."""
    if not values or values[0] == 0:
        return float("nan")
    return values[-1] / values[0]


# -- plots ------------------------------------------------------------------------


def _svg_figure():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    plt.rcParams["svg.hashsalt"] = "ghostbench"
    return plt


def _save(plt, fig, path: Path) -> None:
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def _plot_decay(path: Path, ledger: list[dict], bound: float) -> None:
    plt = _svg_figure()
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.semilogy([r["block"] for r in ledger], [r["g_n"] for r in ledger], "o-", label="max column norm")
    ax.semilogy([r["block"] for r in ledger], [r["e_n"] for r in ledger], "s--", label="max entry")
    ax.axhline(bound, color="grey", lw=0.8, label="2 eps")
    ax.set_xlabel("block")
    ax.legend()
    _save(plt, fig, path)


def _plot_constants(path: Path, rep: certify.WeakExpanderReport) -> None:
    plt = _svg_figure()
    fig, ax = plt.subplots(figsize=(5, 3.5))
    for block in sorted({e["block"] for e in rep.entries}):
        es = [e for e in rep.entries if e["block"] == block]
        ax.plot([e["S"] for e in es], [float(e["c"]) for e in es], "o-", label=f"block {block}")
    ax.set_xlabel("S")
    ax.set_ylabel("c_n(R, S)")
    ax.legend(fontsize="small")
    _save(plt, fig, path)


def plot_localization(path: Path, prof: certify.LocalizationProfile) -> None:
    plt = _svg_figure()
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.plot(prof.S, prof.loc, "o-")
    ax.axhline(prof.norm, color="grey", lw=0.8)
    ax.set_xlabel("S")
    ax.set_ylabel("loc_S")
    _save(plt, fig, path)
