import json

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from chirploc.channel import ChannelConfig
from chirploc.locator import Gateway, PipelineOptions, Scene
from chirploc.receiver import ReceiverConfig
from chirploc.signal import ChirpConfig

settings.register_profile(
    "chirploc", deadline=None, max_examples=40, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("chirploc")

# gateways sit about 5 km either side of the device on the x axis
BASE_DISTANCE = 5000.0


def line_scene(dd, f_s=20e6, sf=7, n_chirps=3, channel=None, lpf_cutoff=125e3, **gw_kw):
    """Two gateways on a line with d_A - d_B = dd."""
    cfg = ChirpConfig(sf=sf, n_chirps=n_chirps)
    d_a = BASE_DISTANCE + dd / 2
    d_b = BASE_DISTANCE - dd / 2
    a_kw = {k[2:]: v for k, v in gw_kw.items() if k.startswith("a_")}
    b_kw = {k[2:]: v for k, v in gw_kw.items() if k.startswith("b_")}
    return Scene(
        device_pos=(0.0, 0.0, 0.0),
        gateways=[Gateway("A", (d_a, 0.0, 0.0), **a_kw), Gateway("B", (-d_b, 0.0, 0.0), **b_kw)],
        chirp=cfg,
        channel=channel or ChannelConfig(),
        receiver=ReceiverConfig(f_s=f_s, lpf_cutoff=lpf_cutoff),
    )


def boundary_window(scene, span, max_lag=None, **kw):
    """Capture window centred on the first chirp boundary as seen at the gateways."""
    start = scene.chirp.duration + BASE_DISTANCE / scene.v - span / 2
    return PipelineOptions(capture_start=start, capture_span=span, max_lag=max_lag, **kw)


def scenario_dict(f_s_hz=20e6, **experiment):
    doc = {
        "chirp": {"sf": 7, "bw_hz": 125000.0, "n_chirps": 2},
        "receiver": {"f_s_hz": f_s_hz},
        "scene": {
            "device_pos_m": [0.0, 0.0, 0.0],
            "gateways": [
                {"id": "A", "pos_m": [5050.0, 0.0, 0.0]},
                {"id": "B", "pos_m": [-4950.0, 0.0, 0.0]},
            ],
        },
        "experiment": {"capture_start_s": 0.00099, "capture_span_s": 0.0001},
    }
    doc["experiment"].update(experiment)
    return doc


@pytest.fixture
def write_scenario(tmp_path):
    def _write(doc, name="scenario.json"):
        path = tmp_path / name
        path.write_text(json.dumps(doc))
        return path

    return _write


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
