"""Scenario loading and the end-to-end battle and figure runs."""

from __future__ import annotations

import configparser
import csv
import math
import os
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Optional

import numpy as np

from ..analytic import ArrivalSpec, QueueDistribution, stationary_distribution, transient_distribution
from ..dist import Deterministic, ExpSojourn, FracPowerLaw, geometric_pmf
from ..errors import UsageError
from ..series import DEFAULT_ORDER
from ..sim import SimConfig, empirical_distribution, run, write_csv
from ..stability import Verdict, classify
from . import svg

OUTPUT_KINDS = ("verdict", "stationary", "transient", "sim")
DIST_FIELDS = ("n", "prob", "se", "source", "time")
VERDICT_FIELDS = ("criterion", "bound_value", "growth_rate", "verdict")
PLOT_N = 50

EXIT_OK, EXIT_IO, EXIT_CONTRADICTION, EXIT_NUMERICAL, EXIT_USAGE = 0, 1, 2, 3, 4


@dataclass(frozen=True)
class BattleScenario:
    name: str
    spec: ArrivalSpec
    expected_verdict: Verdict
    outputs: tuple = OUTPUT_KINDS
    times: tuple = (50.0,)
    replications: int = 20000
    title: str = ""


def parse_sojourn(text: str):
    """``exp:MU``, ``pl:Q`` or ``det:D``."""
    kind, sep, value = text.strip().partition(":")
    if not sep:
        raise UsageError(f"sojourn must look like exp:MU, pl:Q or det:D, got {text!r}")
    try:
        v = float(value)
    except ValueError:
        raise UsageError(f"bad sojourn parameter {value!r}") from None
    kind = kind.lower()
    if kind == "exp":
        return ExpSojourn(v)
    if kind == "pl":
        return FracPowerLaw(v)
    if kind == "det":
        return Deterministic(v)
    raise UsageError(f"unknown sojourn kind {kind!r}")


def _floats(text: str):
    return tuple(float(t) for t in text.replace(",", " ").split())


def _scenario(name: str, sec) -> BattleScenario:
    try:
        outputs = tuple(o.strip() for o in sec.get("outputs", ",".join(OUTPUT_KINDS)).split(",") if o.strip())
        bad = [o for o in outputs if o not in OUTPUT_KINDS]
        if bad:
            raise UsageError(f"[{name}] unknown outputs {bad}")
        spec = ArrivalSpec(float(sec["lambda"]), FracPowerLaw(float(sec["batch_p"])), parse_sojourn(sec["sojourn"]))
        return BattleScenario(
            name=name,
            spec=spec,
            expected_verdict=Verdict(sec.get("expected", "Stable").strip()),
            outputs=outputs,
            times=_floats(sec.get("times", "50")),
            replications=int(sec.get("replications", "20000")),
            title=sec.get("title", name),
        )
    except KeyError as exc:
        raise UsageError(f"[{name}] missing key {exc}") from None
    except ValueError as exc:
        raise UsageError(f"[{name}] {exc}") from None


def load_scenarios(path: Optional[os.PathLike] = None) -> dict:
    """Built-in scenarios, overlaid with those in ``path`` if given."""
    cp = configparser.ConfigParser()
    cp.read_string(resources.files(__package__).joinpath("scenarios.ini").read_text())
    if path is not None:
        with open(path) as fh:
            cp.read_file(fh)
    return {name: _scenario(name, cp[name]) for name in cp.sections()}


# ----------------------------------------------------------------------------
# CSV helpers; floats go out as repr so they read back exactly
# ----------------------------------------------------------------------------
def _num(v) -> str:
    if v is None or (isinstance(v, float) and math.isnan(v)):
        return ""
    return repr(float(v))


def _write_rows(path: Path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _dist_rows(dist: QueueDistribution, source: str):
    se = dist.se if dist.se is not None else [None] * dist.probs.size
    t = "" if dist.time is None else _num(dist.time)
    return [(n, _num(p), _num(s), source, t) for n, (p, s) in enumerate(zip(dist.probs, se))]


def read_distributions(path) -> dict:
    """{(source, time or None): (n array, prob array)} from a distribution CSV."""
    groups: dict = {}
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            key = (row["source"], float(row["time"]) if row["time"] else None)
            groups.setdefault(key, ([], []))
            groups[key][0].append(int(row["n"]))
            groups[key][1].append(float(row["prob"]))
    return {k: (np.array(v[0]), np.array(v[1])) for k, v in groups.items()}


def plot_distributions(csv_path, svg_path, title: str) -> None:
    """P(L = n) for n <= 50 from a distribution CSV; analytic as lines, sim as markers."""
    groups = read_distributions(csv_path)
    plot = svg.Plot(title=title, xlabel="n", ylabel="P(L = n)")
    colors = iter(svg.PALETTE)
    palette = {}
    for (source, t) in sorted(groups, key=lambda k: (k[1] is None, k[1] or 0.0, k[0])):
        n, p = groups[(source, t)]
        keep = n <= PLOT_N
        label_t = "stationary" if t is None else f"t = {t:g}"
        if label_t not in palette:
            palette[label_t] = next(colors)
        kind = "line" if source == "analytic" else "markers"
        plot.add(svg.Series(f"{source} {label_t}", n[keep], p[keep], kind=kind, color=palette[label_t]))
    svg.write(plot, svg_path)


# ----------------------------------------------------------------------------
# battles
# ----------------------------------------------------------------------------
@dataclass
class BattleResult:
    status: int
    verdict: object
    files: list = field(default_factory=list)
    message: str = ""


def run_battle(scenario: BattleScenario, out_dir, *, seed: int = 0, replications: Optional[int] = None,
               order: int = DEFAULT_ORDER) -> BattleResult:
    """Verdict, analytic and simulated distributions, and plots for one scenario."""
    out = Path(out_dir) / scenario.name
    out.mkdir(parents=True, exist_ok=True)
    spec = scenario.spec
    files = []

    verdict = classify(spec)
    vpath = out / "verdict.csv"
    _write_rows(vpath, VERDICT_FIELDS,
                [(verdict.criterion, _num(verdict.bound_value), _num(verdict.growth_rate), verdict.verdict.value)])
    files.append(vpath)
    rpath = out / "verdict.txt"
    with open(rpath, "w") as fh:
        fh.write(f"scenario: {scenario.name}\n{scenario.title}\n")
        fh.write(f"verdict: {verdict.verdict.value} (expected {scenario.expected_verdict.value})\n")
        fh.write(f"criterion: {verdict.criterion}\n")
        if verdict.note:
            fh.write(f"note: {verdict.note}\n")
        for k in sorted(verdict.evidence):
            v = verdict.evidence[k]
            if isinstance(v, (float, int, np.floating)):
                fh.write(f"{k}: {float(v)!r}\n")
    files.append(rpath)

    rows = []
    stable = verdict.verdict is Verdict.STABLE
    if "stationary" in scenario.outputs and stable:
        rows += _dist_rows(stationary_distribution(spec, order), "analytic")
    if "transient" in scenario.outputs:
        for t in scenario.times:
            if t > 0:
                rows += _dist_rows(transient_distribution(spec, t, order), "analytic")
    if "sim" in scenario.outputs:
        reps = replications or scenario.replications
        cfg = SimConfig(spec, horizon=max(scenario.times), replications=reps, seed=seed,
                        sample_times=scenario.times)
        sim_out = run(cfg)
        spath = out / "simulation.csv"
        write_csv(sim_out, spath)
        files.append(spath)
        for t in scenario.times:
            rows += _dist_rows(empirical_distribution(sim_out, t, order), "sim")
    if rows:
        dpath = out / "distribution.csv"
        _write_rows(dpath, DIST_FIELDS, rows)
        files.append(dpath)
        ppath = out / "distribution.svg"
        plot_distributions(dpath, ppath, scenario.title or scenario.name)
        files.append(ppath)

    agree = verdict.verdict is scenario.expected_verdict
    msg = f"{scenario.name}: {verdict.verdict.value} via {verdict.criterion}"
    if not agree:
        msg += f" (expected {scenario.expected_verdict.value})"
    return BattleResult(EXIT_OK if agree else EXIT_CONTRADICTION, verdict, files, msg)


def replot(out_dir) -> list:
    """Regenerate every distribution SVG under ``out_dir`` from its CSV."""
    done = []
    for csv_path in sorted(Path(out_dir).glob("*/distribution.csv")):
        name = csv_path.parent.name
        svg_path = csv_path.with_suffix(".svg")
        title = name
        report = csv_path.parent / "verdict.txt"
        if report.exists():
            lines = report.read_text().splitlines()
            if len(lines) > 1:
                title = lines[1]
        plot_distributions(csv_path, svg_path, title)
        done.append(svg_path)
    fig = Path(out_dir) / "figure1.csv"
    if fig.exists():
        plot_figure1(fig, Path(out_dir) / "figure1.svg")
        done.append(Path(out_dir) / "figure1.svg")
    return done


# ----------------------------------------------------------------------------
# Figure 1
# ----------------------------------------------------------------------------
FIG1_K = np.unique(np.round(np.logspace(0, 4, 81)).astype(np.int64))
GEOMETRIC_PARAM = 0.1


def _slope(k, y, lo=1e2, hi=1e4):
    sel = (k >= lo) & (k <= hi) & (y > 0)
    return float(np.polyfit(np.log(k[sel]), np.log(y[sel]), 1)[0])


def run_figure1(p_values, out_dir) -> list:
    """Log-log pmf curves for each order plus the geometric(1/10) reference."""
    p_values = [float(p) for p in p_values]
    if not p_values:
        raise UsageError("need at least one order p")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    k = FIG1_K.astype(float)
    kk = np.arange(100, 10001, dtype=float)
    rows, slope_rows = [], []
    for p in p_values:
        d = FracPowerLaw(p)
        label = f"p={p:g}"
        rows += [(label, int(ki), _num(v)) for ki, v in zip(k, d.pmf(k))]
        slope_rows.append((label, _num(_slope(kk, d.pmf(kk))), _num(_slope(kk, d.survival(kk)))))
    g = geometric_pmf(k, GEOMETRIC_PARAM)
    rows += [("geometric", int(ki), _num(v)) for ki, v in zip(k, g)]
    slope_rows.append(("geometric", "", ""))
    cpath, spath = out / "figure1.csv", out / "figure1_slopes.csv"
    _write_rows(cpath, ("curve", "k", "pmf"), rows)
    _write_rows(spath, ("curve", "pmf_slope", "survival_slope"), slope_rows)
    ppath = out / "figure1.svg"
    plot_figure1(cpath, ppath)
    return [cpath, spath, ppath]


def plot_figure1(csv_path, svg_path) -> None:
    curves: dict = {}
    with open(csv_path, newline="") as fh:
        for row in csv.DictReader(fh):
            curves.setdefault(row["curve"], ([], []))
            curves[row["curve"]][0].append(int(row["k"]))
            curves[row["curve"]][1].append(float(row["pmf"]))
    plot = svg.Plot("Fractional power laws against a geometric law", "k", "P(X = k)", logx=True, logy=True)
    for name, (x, y) in curves.items():
        y = np.array(y)
        # the geometric tail underflows; drop what is below plotting range
        keep = y > 1e-30
        plot.add(svg.Series(name, np.array(x)[keep], y[keep], dashed=(name == "geometric")))
    svg.write(plot, svg_path)
