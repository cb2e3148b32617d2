"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run on its own with ``pytest tests/test_acceptance.py -v``. The paired
rendered-frames check dominates the runtime (about 9 minutes on one core).
"""
import math
import time

import numpy as np
import pytest
from scipy import signal

from tactile_esc.bench import (AXES, TRACE_COLUMNS, CampaignReport, TrialSpec,
                               run_random_campaign, run_trial, sample_random_offsets)
from tactile_esc.esc import (EscConfig, ExtremumSeekingController, FirstOrderFilter,
                             analog_magnitude)
from tactile_esc.lock_sim import ARCHETYPES, preset
from tactile_esc.objective import ObjectiveConfig, total_loss
from tactile_esc.texture import procedural_texture, render_homography, render_reference
from tactile_esc.tracker import (apply_deadband, corner_strain, homography_from_corners,
                                 init_tracker)

DT = 1 / 13
CAMPAIGN_SEED = 0
PAIR_SEED = 606


@pytest.fixture
def verdict(capsys):
    def emit(number: int, title: str, ok: bool, detail: str):
        with capsys.disabled():
            print(f"\n[criterion {number}] {'PASS' if ok else 'FAIL'}  {title}: {detail}")
        assert ok, detail
    return emit


def _random_campaign():
    campaign = CampaignReport("random")
    for lock in ARCHETYPES:
        run_random_campaign(lock, 30, seed=CAMPAIGN_SEED, report=campaign)
    return campaign


@pytest.fixture(scope="module")
def campaign():
    t0 = time.perf_counter()
    result = _random_campaign()
    return result, time.perf_counter() - t0


# -- 1: gradient fidelity on a linear loss ---------------------------------------

def _drift(cfg, g, settle=20.0, window=100.0):
    esc = ExtremumSeekingController(cfg)
    esc.reset(np.zeros(6))
    theta = esc.modulate()
    for _ in range(int(settle / DT)):
        theta = esc.step(float(g @ theta), DT)
    start = esc.theta_hat_.copy()
    for _ in range(int(window / DT)):
        theta = esc.step(float(g @ theta), DT)
    return (esc.theta_hat_ - start) / window


def _averaged_drift(cfg, g):
    # first-harmonic average: -k g (b/2) Re H_hp(e^{jw dt})
    b0, b1, p = FirstOrderFilter("high", cfg.hpf_cutoff).coefficients(DT)
    out = np.empty(6)
    for i in range(6):
        _, h = signal.freqz([b0, b1], [1.0, -p], worN=[cfg.w[i] * DT])
        out[i] = -cfg.k[i] * g[i] * 0.5 * cfg.b[i] * h[0].real
    return out


def test_criterion_1_gradient_fidelity(verdict):
    cfg = EscConfig.default()
    rng = np.random.default_rng(2024)
    t0 = time.perf_counter()
    sign_ok, ratio_err, theory_err = 0, 0.0, 0.0
    for _ in range(20):
        # loop gain k*g kept well under the dither frequencies
        g = rng.choice([-1.0, 1.0], 6) * rng.uniform(0.2, 1.0, 6) * 0.05 / cfg.k
        rate = _drift(cfg, g)
        doubled = _drift(cfg.replace(b=2 * cfg.b), g)
        sign_ok += bool(np.all(np.sign(rate) == -np.sign(g * cfg.k)))
        ratio_err = max(ratio_err, float(np.max(np.abs(doubled / rate / 2 - 1))))
        theory_err = max(theory_err, float(np.max(np.abs(rate / _averaged_drift(cfg, g) - 1))))
    elapsed = time.perf_counter() - t0
    ok = sign_ok == 20 and ratio_err <= 0.2 and theory_err <= 0.2 and elapsed < 10
    verdict(1, "ESC gradient fidelity", ok,
            f"signs 6/6 in {sign_ok}/20, b-scaling err {ratio_err:.2e}, "
            f"vs averaged theory {theory_err:.2e}, {elapsed:.1f} s")


# -- 2: convergence on a 6-D quadratic --------------------------------------------

def _quadratic_run(seed: int):
    rng = np.random.default_rng(seed)
    # curvature per m^2 on translations and per rad^2 on rotations
    q = np.array([200.0] * 3 + [1.0] * 3) * rng.uniform(0.7, 1.3, 6)
    a = np.eye(6) + 0.1 * rng.standard_normal((6, 6))
    Q = np.sqrt(q)[:, None] * (0.5 * (a + a.T)) * np.sqrt(q)[None, :]
    assert np.all(np.linalg.eigvalsh(Q) > 0)
    star = np.concatenate([rng.uniform(-5e-3, 5e-3, 3), np.radians(rng.uniform(-5, 5, 3))])
    offset = rng.choice([-1.0, 1.0], 6) * np.array([1.9e-3] * 3 + [math.radians(5.0)] * 3)
    traj = ExtremumSeekingController().run(lambda th: float((th - star) @ Q @ (th - star)),
                                           star + offset, 300.0, DT)
    err = traj - star
    trans_mm = 1e3 * np.linalg.norm(err[:, :3], axis=1)
    rot_deg = np.degrees(np.linalg.norm(err[:, 3:], axis=1))
    return bool(np.any((trans_mm < 0.5) & (rot_deg < 1.0)))


def test_criterion_2_quadratic_convergence(verdict):
    hits = sum(_quadratic_run(seed) for seed in range(40))
    verdict(2, "ESC convergence", hits >= 38, f"{hits}/40 runs within 0.5 mm / 1 deg by 300 s")


# -- 3: filters ------------------------------------------------------------------

def test_criterion_3_filters(verdict):
    cfg = EscConfig.default()
    probes = np.array([0.2, 0.7, 0.9, 1.59, 3.0])
    worst = 0.0
    for kind, cutoff in (("high", cfg.hpf_cutoff), ("low", cfg.lpf_cutoff)):
        f = FirstOrderFilter(kind, cutoff)
        rel = f.magnitude(probes, DT) / analog_magnitude(kind, cutoff, probes) - 1
        worst = max(worst, float(np.max(np.abs(rel))))
    hp, lp = FirstOrderFilter("high", cfg.hpf_cutoff), FirstOrderFilter("low", cfg.lpf_cutoff)
    for _ in range(2000):
        h, l = hp.step(1.0, DT), lp.step(1.0, DT)
    ok = worst <= 0.05 and abs(h) <= 1e-6 and abs(l - 1) <= 1e-6
    verdict(3, "filter correctness", ok,
            f"max magnitude error {worst:.2%}, HPF DC {abs(h):.1e}, LPF DC err {abs(l - 1):.1e}")


# -- 4: tracker ------------------------------------------------------------------

def test_criterion_4_tracker(verdict):
    texture = procedural_texture(0)
    reference = render_reference(texture)
    tracker = init_tracker(reference)
    corners = tracker.reference_corners_.copy()
    rng = np.random.default_rng(404)
    errors = []
    for _ in range(200):
        d = rng.uniform(-5, 5, (4, 2))
        tracker.fit(reference)
        tracker.track(render_homography(texture, homography_from_corners(corners, corners + d)))
        errors.append(np.max(np.linalg.norm(tracker.corners_ - corners - d, axis=1)))
    within = float(np.mean(np.array(errors) < 0.5))
    tracker.fit(reference)
    tracker.track(reference)
    identity = tracker.strain()
    root8 = apply_deadband(corner_strain(np.ones((4, 2))))
    three = apply_deadband(corner_strain([[3.0, 0.0], [0, 0], [0, 0], [0, 0]]))
    ok = within >= 0.95 and identity == 0.0 and root8 == 0.0 and three == 3.0
    verdict(4, "tracker accuracy", ok,
            f"{within:.1%} of 200 warps within 0.5 px (max {max(errors):.3f}), identity "
            f"{identity}, sqrt(8) -> {root8}, 3.0 -> {three}")


# -- 5: closed-loop campaign -----------------------------------------------------

def test_criterion_5_closed_loop(verdict, campaign):
    result, elapsed = campaign
    rates = {lock: result.success_rate(lock) for lock in ARCHETYPES}
    aligned = {lock: run_trial(TrialSpec(preset(lock))).success for lock in ARCHETYPES}
    ordered = (rates["DiscDetainer"] >= rates["PinTumbler"] > rates["Dimpled"]
               > rates["Tubular"])
    ok = rates["DiscDetainer"] >= 95 and ordered and all(aligned.values()) and elapsed < 300
    shown = ", ".join(f"{k} {v:.0f}%" for k, v in rates.items())
    verdict(5, "closed-loop desk experiment", ok,
            f"{shown}; aligned {sum(aligned.values())}/4; campaign {elapsed:.0f} s")


# -- 6: rendered frames vs direct strain -----------------------------------------

def test_criterion_6_tracker_in_loop(verdict):
    agree = total = 0
    for lock in ARCHETYPES:
        for i, offset in enumerate(sample_random_offsets(10, PAIR_SEED)):
            direct = run_trial(TrialSpec(preset(lock), offset, rng_seed=i))
            rendered = run_trial(TrialSpec(preset(lock), offset, rng_seed=i,
                                           strain_source="rendered-frames"))
            agree += direct.success == rendered.success
            total += 1
    verdict(6, "tracker-in-the-loop equivalence", agree >= 0.9 * total,
            f"{agree}/{total} pairs agree on success")


# -- 7: determinism and accounting -----------------------------------------------

def test_criterion_7_determinism_accounting(verdict, campaign):
    result, _ = campaign
    again = _random_campaign()
    identical = again.rows() == result.rows() and all(
        a.same_as(b) for a, b in zip(again.trials, result.trials))

    partition = True
    for lock in ARCHETYPES:
        lock_trials = [r for r in result.trials if r.spec.lock.archetype == lock]
        for axis in AXES:
            cells = [c for c in result.cells if c.lock == lock and c.axis == axis]
            partition &= sum(c.n for c in cells) == len(lock_trials)
            partition &= sum(c.successes for c in cells) == sum(r.success for r in lock_trials)
    partition &= sum(result.failure_counts().values()) == len(result.trials)

    consistent = True
    idx = {c: TRACE_COLUMNS.index(c) for c in ("L_insertion", "L_strain", "L")}
    for rec in result.trials:
        objective = rec.spec.objective or ObjectiveConfig(depth_d=rec.spec.lock.depth_d)
        for row in rec.trace:
            consistent &= row[idx["L"]] == total_loss(row[idx["L_insertion"]],
                                                       row[idx["L_strain"]], objective)
        if rec.success:
            consistent &= rec.trace[-1, idx["L_insertion"]] < 0.0005
    ok = identical and partition and consistent
    verdict(7, "determinism and accounting", ok,
            f"bit-identical rerun {identical}, partition {partition}, "
            f"trace recomputation {consistent}")


# -- 8: loss trend of a logged successful trial -----------------------------------

def window_means(values: np.ndarray, samples: int) -> np.ndarray:
    m = len(values) // samples
    return values[: m * samples].reshape(m, samples).mean(axis=1)


def test_criterion_8_loss_trend(verdict, campaign):
    result, _ = campaign
    # the first successful trial of the campaign, fixed before looking at its trace
    rec = next(r for r in result.trials if r.success)
    means = window_means(rec.column("L"), int(round(10 * rec.spec.feedback_rate)))
    frac = float(np.mean(np.diff(means) <= 0))
    ins = rec.column("L_insertion")
    verdict(8, "loss trend", frac >= 0.9 and ins[-1] < ins[0],
            f"{rec.spec.lock.archetype} trial, {frac:.1%} of {len(means) - 1} window pairs "
            f"non-increasing")
