"""Acceptance criteria, one test per criterion.

Each test prints a single ``PASS``/``FAIL`` line; the lines are also gathered
into the pytest terminal summary. Run standalone with
``python3 tests/test_acceptance.py`` for just the ten lines.
"""

import math
import random
import time
import xml.etree.ElementTree as ET
from pathlib import Path

import numpy as np

from cfgenergy.config import parse_config
from cfgenergy.diffusion import build_noise_schedule, make_timestep_grid
from cfgenergy.energy import EnergyControl, clip_energy, energy
from cfgenergy.guidance import GuidanceSchedule, combine_cfg, evaluate_schedule
from cfgenergy.metrics import aggregate_report, energy_metrics
from cfgenergy.oracle import make_conditional_pair, standard_normal_scenario, two_mode_scenario
from cfgenergy.plotting import emit_plots
from cfgenergy.report import summary_table
from cfgenergy.runio import list_run_dirs, read_runs
from cfgenergy.samplers import ddim_step, dpmpp_2m_step, half_log_snr, predict_x0, sample_batch
from cfgenergy.sweep import run_sweep

CONFIGS = Path(__file__).resolve().parent.parent / "configs"
SVG_NS = "{http://www.w3.org/2000/svg}"

RESULTS: list[str] = []


def verdict(n: int, ok: bool, detail: str) -> None:
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {n:2d}: {detail}"
    RESULTS.append(line)
    print(line)
    assert ok, line


def _noise():
    return build_noise_schedule("linear", 1000, 1e-4, 0.02)


def test_criterion_01_schedule_formulas():
    t0 = time.perf_counter()
    lin = GuidanceSchedule("linear_decreasing", 3, 10)
    cos = GuidanceSchedule("cosine_ramp", 3, 10)
    step = GuidanceSchedule("step", 3, 10)
    exp1 = GuidanceSchedule("exponential", 0, 1, alpha=1.0)
    exp3 = GuidanceSchedule("exponential", 3, 10, alpha=3.0)
    sig = GuidanceSchedule("sigmoid", 3, 10, beta_steep=10.0)
    # (schedule, t, hand-derived value); constants frozen from 30-digit arithmetic
    cases = [
        (lin, 0, 10.0), (lin, 25, 6.5), (lin, 50, 3.0),
        (cos, 0, 3.0), (cos, 25, 6.5), (cos, 50, 10.0),
        (step, 0, 3.0), (step, 24, 3.0), (step, 25, 10.0), (step, 50, 10.0),
        (exp1, 0, 0.0), (exp1, 25, 0.3934693402873666), (exp1, 50, 0.6321205588285577),
        (exp3, 25, 8.438088878960992), (exp3, 50, 9.651490521424952),
        (sig, 0, 3.046849956469994), (sig, 25, 6.5), (sig, 50, 9.953150043530005),
        (GuidanceSchedule.fixed(7), 13, 7.0),
    ]
    worst = max(abs(evaluate_schedule(s, t, 50) - v) for s, t, v in cases)
    dt = time.perf_counter() - t0
    verdict(1, worst <= 1e-12 and dt < 1.0,
            f"{len(cases)} schedule values, max abs err {worst:.1e} (tol 1e-12), {dt * 1e3:.1f} ms")


def test_criterion_02_cfg_identities():
    t0 = time.perf_counter()
    rng = np.random.default_rng(2)
    bad = 0
    for _ in range(1000):
        n = int(rng.integers(1, 65))
        ec, eu = rng.standard_normal(n) * 10, rng.standard_normal(n) * 10
        s = float(rng.uniform(0, 30))
        bad += not np.array_equal(combine_cfg(ec, eu, 0.0), ec)
        bad += not np.array_equal(combine_cfg(ec, ec.copy(), s), ec)
    dt = time.perf_counter() - t0
    verdict(2, bad == 0 and dt < 1.0, f"1000 vectors, {bad} inexact identities, {dt * 1e3:.1f} ms")


def test_criterion_03_energy_and_clipping():
    rng = np.random.default_rng(3)
    worst_rel, over, not_idem = 0.0, 0, 0
    for _ in range(10_000):
        n = int(rng.integers(1, 65))
        x = rng.standard_normal(n) * rng.uniform(0.01, 20)
        a = float(rng.uniform(-10, 10))
        e = energy(x)
        worst_rel = max(worst_rel, abs(energy(a * x) - a * a * e) / (a * a * e))
        E_max = float(rng.uniform(0.05, 3.0))
        y, _ = clip_energy(x, E_max)
        over += energy(y) > E_max
        z, flag = clip_energy(y, E_max)
        not_idem += flag or not np.array_equal(z, y)
    verdict(3, worst_rel < 1e-12 and over == 0 and not_idem == 0,
            f"homogeneity rel err {worst_rel:.1e}, {over} post-clip overshoots, "
            f"{not_idem} non-idempotent clips over 1e4 inputs")


def _bruteforce(traj):
    n = len(traj)
    m = sum(traj) / n
    var = sum((e - m) ** 2 for e in traj) / n
    stab = 1 / (1 + var)
    return (stab, 1 / (1 + math.sqrt(var)), stab / (1 + abs(traj[-1] - 1)), 1 / (1 + max(traj) - min(traj)))


def test_criterion_04_metric_formulas():
    rng = random.Random(4)
    worst = 0.0
    for _ in range(10_000):
        traj = [rng.uniform(0, 6) for _ in range(rng.randint(1, 51))]
        got = energy_metrics(np.array(traj))
        worst = max(worst, max(abs(a - b) for a, b in zip(got, _bruteforce(traj))))
    unit = tuple(energy_metrics(np.ones(51)))
    verdict(4, worst <= 1e-12 and unit == (1.0, 1.0, 1.0, 1.0),
            f"1e4 trajectories, max abs diff {worst:.1e} (tol 1e-12), constant-1 -> {unit}")


_GAUSS_CACHE = {}


def _gauss_batch():
    if "batch" not in _GAUSS_CACHE:
        noise = _noise()
        t0 = time.perf_counter()
        res = sample_batch(
            make_conditional_pair(standard_normal_scenario(8)), noise, make_timestep_grid(noise, 50),
            GuidanceSchedule.fixed(0.0), "ddim", EnergyControl(), range(10_000),
        )
        _GAUSS_CACHE["batch"] = (res, time.perf_counter() - t0)
    return _GAUSS_CACHE["batch"]


def test_criterion_05_distribution_recovery():
    res, dt = _gauss_batch()
    mean = res.final.mean(axis=0)
    var = res.final.var(axis=0)
    mean_err = float(np.max(np.abs(mean)))
    var_err = float(np.max(np.abs(var - 1.0)))
    verdict(5, mean_err <= 0.05 and var_err <= 0.10 and dt < 60,
            f"1e4 DDIM runs d=8: max |mean| {mean_err:.4f} (tol 0.05), "
            f"max |var-1| {var_err:.4f} (tol 0.10), {dt:.2f} s")


def test_criterion_06_flat_energy_law():
    res, _ = _gauss_batch()
    E = res.energies
    mean = E.mean(axis=0)
    se = E.std(axis=0, ddof=1) / math.sqrt(E.shape[0])
    z = np.abs(mean - 1.0) / se
    failing = np.flatnonzero(z > 3.0)
    detail = f"{len(failing)} of {E.shape[1]} steps outside 3 SE of 1"
    if len(failing):
        detail += (f" (first at step {failing[0]}, terminal mean energy {mean[-1]:.4f}, "
                   f"max |mean-1| {np.max(np.abs(mean - 1)):.4f})")
    verdict(6, len(failing) == 0, detail)


def test_criterion_07_dpmpp_ddim_consistency():
    noise = _noise()
    rng = np.random.default_rng(7)
    worst_first, worst_exact = 0.0, 0.0
    for _ in range(1000):
        n = int(rng.integers(1, 33))
        tp, tc = sorted(rng.choice(1000, size=2, replace=False))[::-1]
        ap, ac = noise.alpha_bar_at(tp), noise.alpha_bar_at(tc)
        lp, lc = half_log_snr(ap), half_log_snr(ac)
        sp, sc = math.sqrt(1 - ap), math.sqrt(1 - ac)
        x, eps = rng.standard_normal(n), rng.standard_normal(n)
        d = dpmpp_2m_step(x, predict_x0(x, eps, ap), None, (None, lp, lc), math.sqrt(ac), sp, sc)
        worst_first = max(worst_first, float(np.max(np.abs(d - ddim_step(x, eps, ap, ac)))))

        x0, noise_vec = rng.standard_normal(n), rng.standard_normal(n)
        x_prev = math.sqrt(ap) * x0 + sp * noise_vec
        lp2 = lp - float(rng.uniform(0.05, 1.0))
        out = dpmpp_2m_step(x_prev, x0, x0, (lp2, lp, lc), math.sqrt(ac), sp, sc)
        worst_exact = max(worst_exact, float(np.max(np.abs(out - (math.sqrt(ac) * x0 + sc * noise_vec)))))
    verdict(7, worst_first <= 1e-10 and worst_exact <= 1e-10,
            f"1000 inputs: first-step vs DDIM max diff {worst_first:.1e}, "
            f"exact-x0 transport max diff {worst_exact:.1e} (tol 1e-10)")


def test_criterion_08_directional_claims():
    t0 = time.perf_counter()
    noise = _noise()
    grid = make_timestep_grid(noise, 50)
    pair = make_conditional_pair(two_mode_scenario(8))
    seeds = range(200)
    off = EnergyControl()
    clip = EnergyControl(clipping_enabled=True, E_base=2.0)
    parts, ok = [], True
    for sampler in ("ddim", "euler_ancestral", "dpmpp_2m"):
        def run(g, ctrl=off):
            return sample_batch(pair, noise, grid, g, sampler, ctrl, seeds).energies

        maxes = [float(run(GuidanceSchedule.fixed(s)).max(axis=1).mean()) for s in (3, 7, 12, 18)]
        a = all(lo < hi for lo, hi in zip(maxes, maxes[1:]))
        E18 = run(GuidanceSchedule.fixed(18))
        stab18 = float(np.mean([energy_metrics(e).stab for e in E18]))
        lin = run(GuidanceSchedule("linear_decreasing", 3, 18))
        stab_lin = float(np.mean([energy_metrics(e).stab for e in lin]))
        b = stab_lin >= stab18
        clipped_max = float(run(GuidanceSchedule.fixed(18), clip).max(axis=1).mean())
        c = clipped_max < maxes[-1]
        ok &= a and b and c
        parts.append(
            f"{sampler}: (a) {'<'.join(f'{m:.3f}' for m in maxes)} {'ok' if a else 'NO'}, "
            f"(b) {stab_lin:.3f}>={stab18:.3f} {'ok' if b else 'NO'}, "
            f"(c) {clipped_max:.3f}<{maxes[-1]:.3f} {'ok' if c else 'NO'}"
        )
    dt = time.perf_counter() - t0
    verdict(8, ok and dt < 600, f"two_mode d=8, 200 seeds, {dt:.1f} s; " + "; ".join(parts))


def test_criterion_09_determinism_and_persistence(tmp_path):
    cfg = parse_config(CONFIGS / "paper_grid.toml")
    import dataclasses

    cfg = dataclasses.replace(cfg, scenarios=cfg.scenarios[:1], seeds=(0, 1))
    first = run_sweep(cfg, tmp_path / "a")
    run_sweep(cfg, tmp_path / "b")
    csv_a = {d.name: (d / "trajectory.csv").read_bytes() for d in list_run_dirs(tmp_path / "a")}
    csv_b = {d.name: (d / "trajectory.csv").read_bytes() for d in list_run_dirs(tmp_path / "b")}
    identical = csv_a == csv_b and len(csv_a) == 42

    back = {a.path.name: a for a in read_runs(tmp_path / "a")}
    lossless = all(
        np.array_equal(back[a.path.name].record.energies, a.record.energies)
        and np.array_equal(back[a.path.name].record.final, a.record.final)
        and back[a.path.name].scores == a.scores
        and back[a.path.name].config == a.config
        for a in first.artifacts
    )

    table = summary_table(aggregate_report((a.key, a.scores) for a in back.values()))
    shape = (len(table.rows), len(table.columns))
    body = [line.split(",")[1:] for line in table.csv.splitlines()[1:]]
    four_dp = all(len(c.split(".")[1]) == 4 for row in body for c in row)
    verdict(9, identical and lossless and shape == (3, 7) and four_dp,
            f"{len(csv_a)} CSVs byte-identical: {identical}; round-trip lossless: {lossless}; "
            f"table {shape[0]}x{shape[1]} with 4-decimal cells: {four_dp}")


def test_criterion_10_sweep_integrity(tmp_path):
    cfg = parse_config(CONFIGS / "paper_grid.toml")
    t0 = time.perf_counter()
    res = run_sweep(cfg, tmp_path / "runs")
    dt = time.perf_counter() - t0
    expected = len(cfg.scenarios) * 3 * 7 * len(cfg.seeds)
    n_dirs = len(list_run_dirs(tmp_path / "runs"))
    runs = read_runs(tmp_path / "runs")
    legends = {}
    for group_by, want in (("scale", 7), ("sampler", 3)):
        for p in emit_plots(runs, group_by, tmp_path / "plots"):
            root = ET.parse(p).getroot()
            entries = [g for g in root.iter(f"{SVG_NS}g") if g.get("class") == "legend-entry"]
            lines = [e for e in root.iter(f"{SVG_NS}polyline") if e.get("class") == "series"]
            legends[p.name] = (len(entries), len(lines), want)
    svg_ok = len(legends) == 3 + 7 and all(e == l == w for e, l, w in legends.values())
    verdict(10, res.ok and n_dirs == expected and svg_ok,
            f"{n_dirs} run dirs (expected {expected}) in {dt:.1f} s, "
            f"{len(legends)} SVGs with correct legend cardinality: {svg_ok}")


if __name__ == "__main__":
    import sys
    import tempfile

    failed = 0
    for name, fn in sorted(globals().items()):
        if not name.startswith("test_criterion_"):
            continue
        try:
            if "tmp_path" in fn.__code__.co_varnames[: fn.__code__.co_argcount]:
                with tempfile.TemporaryDirectory() as d:
                    fn(Path(d))
            else:
                fn()
        except AssertionError:
            failed += 1
    sys.exit(1 if failed else 0)
