"""Bit-equality of the compiled kernels and their pure-Python originals.

The kernels draw nothing but Generator.random() uniforms and use math.*
scalars, so the numba dispatcher and the plain function must produce the
same output stream for the same generator state.  That contract is what
lets NFADSIM_DISABLE_NUMBA=1 switch backends without changing results.
"""

import json
import os
import subprocess
import sys

import numpy as np
import pytest

from nfadsim import _kernels
from nfadsim._backend import USE_NUMBA, backend_name
from nfadsim.calibration import make_detector
from nfadsim.detector import _kernel_args, simulate
from nfadsim.engine import RandomStream, seconds_to_ps, timeline_to_ps, pulsed_laser

needs_numba = pytest.mark.skipif(
    not USE_NUMBA, reason="numba backend disabled; nothing to compare")


def _gens(seed, names):
    stream = RandomStream(seed)
    return [stream.generator(n) for n in names]


def _free_run_args(det, timeline, duration, seed):
    args = _kernel_args(det)
    pulse_ps, pulse_p = timeline_to_ps(timeline, det.efficiency)
    fixed = (seconds_to_ps(duration), args["deadtime_ps"], args["dark_rate"],
             timeline.background_rate * det.efficiency, pulse_ps, pulse_p,
             args["trap_lambda"], args["trap_cum_weights"],
             args["trap_tau_ps"], args["sigma_ps"], args["tail_fraction"],
             args["tail_scale"], args["latency_ps"])
    names = ("darks", "photons", "traps", "jitter", "background")
    return fixed, names


@needs_numba
def test_free_run_matches_py_func():
    det = make_detector(-90.0, 0.25, 3e-6)
    tl = pulsed_laser(period=1e-6, mean_photon_number=0.3, count=10_000)
    fixed, names = _free_run_args(det, tl, 0.011, 0)

    t_jit, o_jit = _kernels.free_run(*fixed, *_gens(12, names))
    t_py, o_py = _kernels.free_run.py_func(*fixed, *_gens(12, names))
    assert len(t_jit) > 100
    assert np.array_equal(np.asarray(t_jit), np.asarray(t_py))
    assert np.array_equal(np.asarray(o_jit), np.asarray(o_py))


@needs_numba
def test_characterize_matches_py_func():
    det = make_detector(-70.0, 0.2, 10e-6)
    args = _kernel_args(det)
    p_click = 1.0 - np.exp(-0.91 * det.efficiency)
    fixed = (3000, seconds_to_ps(100e-6), seconds_to_ps(20e-9),
             seconds_to_ps(150e-6), args["deadtime_ps"], p_click,
             args["dark_rate"], args["trap_lambda"],
             args["trap_cum_weights"], args["trap_tau_ps"], args["sigma_ps"],
             args["tail_fraction"], args["tail_scale"], args["latency_ps"],
             seconds_to_ps(0.05))
    names = ("darks", "photons", "traps", "jitter")

    out_jit = _kernels.characterize(*fixed, *_gens(5, names))
    out_py = _kernels.characterize.py_func(*fixed, *_gens(5, names))
    assert out_jit[0] == out_py[0] and out_jit[1] == out_py[1]
    assert np.array_equal(np.asarray(out_jit[2]), np.asarray(out_py[2]))
    assert out_jit[3] == out_py[3] and out_jit[4] == out_py[4]
    assert out_jit[0] > 100  # enough detections for this to be a real run


@needs_numba
def test_qkd_kernels_match_py_func():
    det = make_detector(-90.0, 0.115, 10e-6)
    args = _kernel_args(det)
    frame_ps = seconds_to_ps(2.0 / 625e6)
    common = (200_000, frame_ps, frame_ps // 2, args["deadtime_ps"])
    tail = (args["dark_rate"], args["trap_lambda"], args["trap_cum_weights"],
            args["trap_tau_ps"], args["sigma_ps"], args["tail_fraction"],
            args["tail_scale"], args["latency_ps"])

    data_names = ("darks", "photons", "traps", "jitter", "bits")
    res_jit = _kernels.qkd_data(*common, 2e-3, 0.005, *tail,
                                *_gens(31, data_names))
    res_py = _kernels.qkd_data.py_func(*common, 2e-3, 0.005, *tail,
                                       *_gens(31, data_names))
    assert res_jit == res_py
    assert res_jit[0] > 50

    mon_names = ("darks", "photons", "traps", "jitter")
    n_jit = _kernels.qkd_monitor(*common, 1e-3, *tail, *_gens(32, mon_names))
    n_py = _kernels.qkd_monitor.py_func(*common, 1e-3, *tail,
                                        *_gens(32, mon_names))
    assert n_jit == n_py
    # 640 us of frames with a 10 us hold-off caps the count near 48.
    assert n_jit > 30


_CHILD_SCRIPT = """
import json, sys
import numpy as np
from nfadsim._backend import backend_name
from nfadsim.calibration import make_detector
from nfadsim.detector import simulate
from nfadsim.engine import pulsed_laser

det = make_detector(-90.0, 0.25, 3e-6)
tl = pulsed_laser(period=1e-6, mean_photon_number=0.3, count=10_000)
s = simulate(det, tl, 0.011, 4242)
json.dump({"backend": backend_name(),
           "times": [repr(t) for t in s.times],
           "origins": [int(o) for o in s.origins]}, sys.stdout)
"""


def test_env_flag_selects_python_backend_with_identical_output():
    env = dict(os.environ, NFADSIM_DISABLE_NUMBA="1")
    proc = subprocess.run([sys.executable, "-c", _CHILD_SCRIPT],
                          capture_output=True, text=True, env=env,
                          timeout=300)
    assert proc.returncode == 0, proc.stderr
    payload = json.loads(proc.stdout)
    assert payload["backend"] == "python"

    det = make_detector(-90.0, 0.25, 3e-6)
    tl = pulsed_laser(period=1e-6, mean_photon_number=0.3, count=10_000)
    here = simulate(det, tl, 0.011, 4242)
    assert [repr(t) for t in here.times] == payload["times"]
    assert [int(o) for o in here.origins] == payload["origins"]
    # The local interpreter keeps whatever backend it started with.
    assert backend_name() in ("numba", "python")
