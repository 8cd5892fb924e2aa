"""Acceptance criteria, each at its stated tolerance.

Every test prints one ``PASS``/``FAIL`` line, which is also repeated in the
terminal summary. Run ``pytest tests/test_acceptance.py -v`` (add ``-s`` to
see the lines inline).
"""

import math
import time

import numpy as np
import pytest
from conftest import ACCEPTANCE_LINES, boundary_window, line_scene, scenario_dict

from chirploc import io
from chirploc.channel import ChannelConfig
from chirploc.cli import main
from chirploc.locator import Gateway, PipelineOptions, Scene, apply_clock_error, run_pipeline, tdoa_objective
from chirploc.baselines import tdoa_difference, tdoa_timestamp
from chirploc.phase import AmbiguityError, analytic_dps, dps
from chirploc.receiver import ReceiverConfig, receive_analytic
from chirploc.signal import ChirpConfig, chirp_duration, phase_integral, spectrogram

V = 299_792_458.0


def report(n, ok, detail):
    line = f"{'PASS' if ok else 'FAIL'} criterion {n:>2}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert ok, line


def sweep_errors(values, f_s, span, max_lag=None):
    errs = []
    for dd in values:
        scene = line_scene(float(dd), f_s=f_s)
        res = run_pipeline(scene, options=boundary_window(scene, span, max_lag=max_lag))
        errs.append(res.pairwise[("A", "B")].d_hat - dd)
    return np.abs(errs)


def test_c01_resolution_20msps():
    values = np.arange(-3000.0, 3000.0 + 1e-9, 7.0)
    t = time.perf_counter()
    err = sweep_errors(values, 20e6, 100e-6)
    elapsed = time.perf_counter() - t
    coarse = np.mean(err > 5.0)
    ok = err.max() <= 15.0 and coarse >= 0.30 and elapsed < 60
    report(1, ok, f"{values.size} points, max |error| {err.max():.3f} m (<= 15), "
                  f"{coarse:.0%} above 5 m (>= 30%), {elapsed:.1f} s (< 60)")


def test_c02_resolution_1gsps():
    values = np.arange(-30.0, 30.0 + 1e-9, 0.07)
    t = time.perf_counter()
    err = sweep_errors(values, 1e9, 2e-6, max_lag=200)
    elapsed = time.perf_counter() - t
    ok = err.max() <= 0.3 and elapsed < 300
    report(2, ok, f"{values.size} points, max |error| {err.max():.4f} m (<= 0.3), {elapsed:.1f} s (< 300)")


def random_clean_cases(count, seed=2024):
    g = np.random.default_rng(seed)
    for _ in range(count):
        bw = float(g.choice([125e3, 250e3, 500e3]))
        cfg = ChirpConfig(
            sf=int(g.integers(7, 13)),
            bw=bw,
            theta_tx=float(g.uniform(0, 2 * np.pi)),
            direction=str(g.choice(["up", "down"])),
            n_chirps=int(g.integers(1, 4)),
        )
        f_s = float(bw * np.exp(g.uniform(np.log(1.01), np.log(400.0))))
        rx = ReceiverConfig(f_s=f_s, theta_rx=float(g.uniform(-np.pi, np.pi)), lpf_cutoff=bw)
        d = float(g.uniform(1.0, 20000.0))
        n = int(g.integers(64, 512))
        t0 = float(g.uniform(-0.1, 1.0) * cfg.train_duration)
        yield cfg, rx, d, n, t0


@pytest.fixture(scope="module")
def clean_cases():
    chan = ChannelConfig()
    out = []
    for cfg, rx, d, n, t0 in random_clean_cases(1000):
        tr = receive_analytic(cfg, chan, rx, d, n / rx.f_s, t0=t0)
        got = dps(tr, cfg.bw)
        ref = analytic_dps(cfg, d, chan.v, rx.f_s, t0, n - 1)
        out.append((cfg, rx.f_s, got, ref))
    return out


def test_c03_dps_equals_closed_form(clean_cases):
    t = time.perf_counter()
    worst, flag_mismatch, compared = 0.0, 0, 0
    for cfg, f_s, got, ref in clean_cases:
        flag_mismatch += int(np.any(got.flags != ref.flags))
        both = got.valid & ref.valid
        if both.any():
            worst = max(worst, float(np.max(np.abs(got.values[both] - ref.values[both]))))
            compared += int(both.sum())
    scene = line_scene(100.0, f_s=62.5e3)
    try:
        run_pipeline(scene)
        refused = False
    except AmbiguityError:
        refused = True
    elapsed = time.perf_counter() - t
    ok = worst <= 1e-6 and flag_mismatch == 0 and refused and elapsed < 60
    report(3, ok, f"1000 scenes, {compared} elements, max |dps - analytic| {worst:.2e} rad (<= 1e-6), "
                  f"flag mismatches {flag_mismatch}, f_s = BW/2 refused: {refused}")


def test_c04_dps_bound(clean_cases):
    worst = -np.inf
    for cfg, f_s, got, ref in clean_cases:
        bound = np.pi * cfg.bw / f_s + 1e-9
        for s in (got, ref):
            if s.valid.any():
                worst = max(worst, float(np.max(np.abs(s.values[s.valid]) - bound)))
    report(4, worst <= 0.0, f"max(|delta| - (pi*BW/f_s + 1e-9)) = {worst:.3e} (<= 0)")


def clock_shift(f_s, dt, dd=157.0):
    span = 4000 / f_s + 2 * abs(dt)
    lag = int(math.ceil((abs(dd) / V + abs(dt)) * f_s)) + 40
    base = line_scene(dd, f_s=f_s)
    shifted = line_scene(dd, f_s=f_s, a_clock_offset=dt)
    opts0 = boundary_window(base, span, max_lag=lag)
    opts1 = PipelineOptions(capture_start=opts0.capture_start + dt / 2, capture_span=span, max_lag=lag)
    e0 = run_pipeline(base, options=opts1).pairwise[("A", "B")]
    e1 = run_pipeline(shifted, options=opts1).pairwise[("A", "B")]
    return e0, e1


@pytest.mark.parametrize("f_s", [20e6, 1e9])
def test_c05_clock_error(f_s):
    cell = V / f_s
    lines, ok = [], True
    for dt in (1e-9, 10e-9, 1e-6):
        e0, e1 = clock_shift(f_s, dt)
        shift = e1.d_hat - e0.d_hat
        predicted = apply_clock_error(e0, dt, f_s, V)
        good = abs(shift - dt * V) <= cell and abs(e1.d_hat - predicted) <= cell
        if dt == 1e-6 and f_s == 20e6:
            good = good and abs(shift - 300.0) <= 15.0
        ok &= good
        lines.append(f"dt={dt:g}s shift {shift:.3f} m vs {dt * V:.3f}")
    report(5, ok, f"f_s={f_s:g}: " + "; ".join(lines) + f" (+/- {cell:.3f} m)")


def test_c06_tdoa_bound():
    g = np.random.default_rng(6)
    arrivals = g.uniform(0.0, 1.0, 10_000)
    err = (arrivals - tdoa_timestamp(arrivals, 1e-6)) * V
    pair = np.abs(tdoa_difference(arrivals[::2], arrivals[1::2], 1e-6, V) - (arrivals[::2] - arrivals[1::2]) * V)
    ok = err.max() <= 300.0 and err.max() > 270.0 and pair.max() <= 300.0
    report(6, ok, f"10^4 arrivals, max ranging error {err.max():.2f} m (<= 300, > 270), "
                  f"max pair error {pair.max():.2f} m")


def test_c07_chirp_timing():
    cfg = ChirpConfig(sf=7, bw=125e3, fc=200e3, n_chirps=1)
    exact = chirp_duration(cfg) == 1024e-6
    devs = []
    for rate in (500e3, 1e6):
        n = int(round(cfg.duration * rate))
        hop = n // 20
        x = np.cos(2 * np.pi * phase_integral(cfg, np.arange(n) / rate))
        sg = spectrogram(x, rate, window_len=hop, hop=hop)
        assert len(sg.times) == 20
        devs.append(abs(sg.time_resolution - 50e-6) / 50e-6)
    ok = exact and max(devs) <= 0.02 + 1e-12
    report(7, ok, f"T(SF7,125k) == 1024 us: {exact}; 20-hop bin width deviation "
                  f"{devs[0]:.1%} at 500 kS/s, {devs[1]:.1%} at 1 MS/s (<= 2%)")


def test_c08_theta_sensitivity(write_scenario, tmp_path):
    doc = scenario_dict(f_s_hz=1e6, matched_filter={"grid_points": 16})
    doc["chirp"]["sf"] = 10
    assert main(["baseline", str(write_scenario(doc)), "--which", "matched_filter", "--out", str(tmp_path)]) == 0
    rows = io.read_rows(tmp_path / "baseline_matched_filter.csv")
    dev = max(abs(abs(r["peak"]) - abs(math.cos(r["sweep_value"]))) for r in rows)

    ks = set()
    for k in range(16):
        theta = 2 * np.pi * k / 16
        scene = line_scene(157.0)
        scene = Scene(device_pos=scene.device_pos, gateways=scene.gateways,
                      chirp=ChirpConfig(sf=7, n_chirps=3, theta_tx=theta), receiver=scene.receiver)
        est = run_pipeline(scene, options=boundary_window(scene, 100e-6)).pairwise[("A", "B")]
        ks.add((est.k, est.d_hat))
    ok = len(rows) == 16 and dev <= 0.05 and len(ks) == 1
    report(8, ok, f"SF10 matched filter max ||peak| - |cos|| = {dev:.4f} (<= 0.05); "
                  f"DPS K over 16 theta values: {sorted(k for k, _ in ks)}")


SQUARE = np.array([[0, 0, 0], [2000, 0, 0], [2000, 2000, 0], [0, 2000, 0]], float)


def square_scene(pos):
    gws = [Gateway(f"g{i}", tuple(p)) for i, p in enumerate(SQUARE)]
    return Scene(device_pos=tuple(pos), gateways=gws, chirp=ChirpConfig(n_chirps=2),
                 receiver=ReceiverConfig(f_s=1e9))


def grid_oracle(estimates):
    """Brute-force minimizer: 10 m grid over the square, then a 0.1 m grid around the best cell."""
    xs = np.arange(0.0, 2000.0 + 1e-9, 10.0)
    X, Y = np.meshgrid(xs, xs, indexing="ij")

    def cost(X, Y):
        P = np.stack([X, Y, np.zeros_like(X)], axis=-1)
        d = np.linalg.norm(P[..., None, :] - SQUARE, axis=-1)
        return sum((d[..., i] - d[..., j] - dij) ** 2 for (i, j), dij in estimates.items())

    c = cost(X, Y)
    i, j = np.unravel_index(np.argmin(c), c.shape)
    fine = np.arange(-15.0, 15.0 + 1e-9, 0.1)
    FX, FY = np.meshgrid(xs[i] + fine, xs[j] + fine, indexing="ij")
    c = cost(FX, FY)
    i, j = np.unravel_index(np.argmin(c), c.shape)
    return np.array([FX[i, j], FY[i, j], 0.0])


def test_c09_multilateration():
    g = np.random.default_rng(9)
    positions = g.uniform(50.0, 1950.0, size=(200, 2))
    opts = PipelineOptions(capture_start=ChirpConfig().duration - 12e-6, capture_span=34e-6)
    errs, checks = [], []
    t = time.perf_counter()
    for n, (x, y) in enumerate(positions):
        scene = square_scene((x, y, 0.0))
        res = run_pipeline(scene, options=opts)
        errs.append(float(np.linalg.norm(res.position - np.array(scene.device_pos))))
        if n < 10:
            ids = [gw.id for gw in scene.gateways]
            est = {(ids.index(a), ids.index(b)): e.d_hat for (a, b), e in res.pairwise.items()}
            oracle = grid_oracle(est)
            gap = np.abs(oracle - res.position)[:2]
            # the grid minimizer can never beat the continuous one
            assert tdoa_objective(res.position, SQUARE, est) <= tdoa_objective(oracle, SQUARE, est) + 1e-9
            checks.append(float(gap.max()))
    errs = np.array(errs)
    frac = np.mean(errs <= 2.0)
    ok = frac >= 0.95 and max(checks) <= 0.1 + 1e-9
    report(9, ok, f"{frac:.1%} of 200 positions within 2 m (>= 95%), median {np.median(errs):.3f} m, "
                  f"grid-oracle gap {max(checks):.3f} m (<= 0.1), {time.perf_counter() - t:.1f} s")


def test_c10_noise_study(write_scenario, tmp_path):
    cell = V / 20e6
    err = []
    for seed in range(100):
        scene = line_scene(157.0, n_chirps=3, channel=ChannelConfig(snr_db=20.0, rng_seed=seed))
        est = run_pipeline(scene, options=PipelineOptions(smoothing_window=31)).pairwise[("A", "B")]
        err.append(abs(est.d_hat - 157.0))
    frac = np.mean(np.array(err) <= 2 * cell)

    # error-vs-SNR curve through the CLI harness
    doc = scenario_dict(smoothing_window=31, seeds=list(range(10)))
    doc["chirp"]["n_chirps"] = 3
    doc["channel"] = {"snr_db": 20.0}
    out = tmp_path / "curve"
    assert main(["sweep", str(write_scenario(doc)), "--var", "snr", "--values", "0,5,10,15,20,30",
                 "--plot", "--out", str(out)]) == 0
    rows = io.read_rows(out / "sweep.csv")
    curve = {}
    for r in rows:
        curve.setdefault(r["sweep_value"], []).append(abs(r["error_m"]) <= 2 * cell)
    assert (out / "sweep.svg").exists()
    text = ", ".join(f"{snr:g} dB: {np.mean(v):.0%}" for snr, v in sorted(curve.items()))
    report(10, frac >= 0.90, f"{frac:.0%} of 100 runs at 20 dB within 2 cells (>= 90%); curve {text}")


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-v", "-s"]))
